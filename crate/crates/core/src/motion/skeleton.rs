//! Kinematic trees for the supported joint layouts.

use serde::{Deserialize, Serialize};

/// Parent table plus the metadata the metrics and augmentations need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub parents: Vec<Option<usize>>,
    pub lr_pairs: Vec<(usize, usize)>,
    /// Bones scored by PCP, as (parent, child).
    pub limbs: Vec<(usize, usize)>,
    pub mid_hip: usize,
}

/// Public alias used by the metric functions.
pub type SkeletonSpec = Skeleton;

const H36M_PARENTS: [i32; 17] = [-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15];

const SMPL_PARENTS: [i32; 22] = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19,
];

impl Skeleton {
    /// 17-joint layout: 0 pelvis, 1-3 right leg, 4-6 left leg, 7 spine,
    /// 8 thorax, 9 neck, 10 head, 11-13 left arm, 14-16 right arm.
    pub fn h36m17() -> Self {
        let parents = from_table(&H36M_PARENTS);
        let lr_pairs = vec![(1, 4), (2, 5), (3, 6), (11, 14), (12, 15), (13, 16)];
        Self::assemble(parents, lr_pairs)
    }

    /// 22-joint SMPL body layout.
    pub fn smpl22() -> Self {
        let parents = from_table(&SMPL_PARENTS);
        let lr_pairs = vec![
            (1, 2),
            (4, 5),
            (7, 8),
            (10, 11),
            (13, 14),
            (16, 17),
            (18, 19),
            (20, 21),
        ];
        Self::assemble(parents, lr_pairs)
    }

    /// A binary tree rooted at joint 0, for joint counts without a named layout.
    pub fn generic(joints: usize) -> Self {
        let parents = (0..joints)
            .map(|j| if j == 0 { None } else { Some((j - 1) / 2) })
            .collect();
        Self::assemble(parents, Vec::new())
    }

    pub fn for_joints(joints: usize) -> Self {
        match joints {
            17 => Self::h36m17(),
            22 => Self::smpl22(),
            n => Self::generic(n),
        }
    }

    fn assemble(parents: Vec<Option<usize>>, lr_pairs: Vec<(usize, usize)>) -> Self {
        let limbs = parents
            .iter()
            .enumerate()
            .filter_map(|(j, p)| p.map(|p| (p, j)))
            .collect();
        Self {
            parents,
            lr_pairs,
            limbs,
            mid_hip: 0,
        }
    }

    pub fn joints(&self) -> usize {
        self.parents.len()
    }

    /// Depth of each joint in the tree (root = 0).
    pub fn depths(&self) -> Vec<usize> {
        let mut d = vec![0; self.joints()];
        for j in 0..self.joints() {
            if let Some(p) = self.parents[j] {
                d[j] = d[p] + 1;
            }
        }
        d
    }
}

fn from_table(t: &[i32]) -> Vec<Option<usize>> {
    t.iter()
        .map(|&p| if p < 0 { None } else { Some(p as usize) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parents_precede_children() {
        for s in [Skeleton::h36m17(), Skeleton::smpl22(), Skeleton::generic(9)] {
            for (j, p) in s.parents.iter().enumerate() {
                if let Some(p) = p {
                    assert!(*p < j);
                }
            }
            assert_eq!(s.limbs.len(), s.joints() - 1);
        }
    }

    #[test]
    fn pairs_are_disjoint() {
        for s in [Skeleton::h36m17(), Skeleton::smpl22()] {
            let mut seen = vec![false; s.joints()];
            for &(a, b) in &s.lr_pairs {
                assert!(!seen[a] && !seen[b]);
                seen[a] = true;
                seen[b] = true;
                assert_eq!(s.depths()[a], s.depths()[b]);
            }
        }
    }
}
