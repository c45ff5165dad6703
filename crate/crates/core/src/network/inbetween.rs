use mmdm_tensor::{Tensor, Var};

use super::config::NetworkConfig;
use super::kaa::{init_round, kaa_round, LatentState};
use super::layers::{linear, norm};
use super::model::{frame_grid, pos_grid, step_vec};
use super::params::{Init, ParamStore, Session};
use super::{NetworkError, Result};
use crate::motion::SegmentSplit;
use crate::rng;

/// Fixed Gaussian vectors keyed by action label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditionEmbedding {
    pub seed: u64,
    pub dim: usize,
}

impl ConditionEmbedding {
    pub fn vector(&self, label: usize) -> Vec<f64> {
        let mut r = rng::seeded(rng::derive_seed(self.seed, label as u64));
        rng::normal_vec(&mut r, self.dim)
    }
}

/// Encoder-only transition generator over `T x 22 x 12` joint-level motion.
#[derive(Debug, Clone, PartialEq)]
pub struct InbetweenModel {
    pub cfg: NetworkConfig,
    pub params: ParamStore,
    pub labels: ConditionEmbedding,
}

impl InbetweenModel {
    pub fn new(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init = Init::new(cfg.init_seed);
        let mut p = ParamStore::new();
        init.linear(&mut p, "ib.in", cfg.in_dim, cfg.dim);
        p.insert("ib.star", init.normal(&[cfg.dim], 0.02));
        p.insert("ib.segment", init.normal(&[2, cfg.dim], 0.02));
        init.linear(&mut p, "ib.cond", cfg.dim, cfg.dim);
        for i in 0..cfg.depth {
            init_round(&mut init, &mut p, &format!("ib.r{i}"), &cfg);
        }
        init.norm(&mut p, "ib.ln", cfg.dim);
        init.linear(&mut p, "ib.head", cfg.dim, cfg.out_dim);
        let labels = ConditionEmbedding {
            seed: rng::derive_seed(cfg.init_seed, 0x1abe1),
            dim: cfg.dim,
        };
        Ok(Self { cfg, params: p, labels })
    }

    pub fn from_params(cfg: NetworkConfig, params: ParamStore) -> Result<Self> {
        let fresh = Self::new(cfg)?;
        for (name, t) in fresh.params.iter() {
            if params.get(name)?.shape() != t.shape() {
                return Err(NetworkError::Checkpoint(format!("parameter `{name}` has the wrong shape")));
            }
        }
        if params.len() != fresh.params.len() {
            return Err(NetworkError::Checkpoint("unexpected extra parameters".into()));
        }
        Ok(Self { params, ..fresh })
    }

    /// Signal estimate for `x [T, J, in]` holding clean boundary frames and
    /// the noised transition. With `label = None` the condition token is left
    /// out entirely.
    pub fn forward(
        &self,
        s: &mut Session,
        x: Var,
        split: &SegmentSplit,
        label: Option<usize>,
        k: usize,
    ) -> Result<Var> {
        let sh = s.g.shape(x).to_vec();
        if sh.len() != 3 || sh[2] != self.cfg.in_dim {
            return Err(NetworkError::ShapeMismatch {
                expected: vec![split.total(), 22, self.cfg.in_dim],
                got: sh,
            });
        }
        let (t, j, d) = (sh[0], sh[1], self.cfg.dim);
        if split.total() != t {
            return Err(NetworkError::Split(format!(
                "split covers {} frames, input has {t}",
                split.total()
            )));
        }
        let pos = s.g.input(pos_grid(t, j, d)?);
        let step = s.g.input(step_vec(k, d)?);
        let frames = s.g.input(frame_grid(t, d)?);
        let seg_rows: Vec<usize> = (0..t).map(|f| usize::from(!split.is_boundary(f))).collect();
        let seg_table = s.p("ib.segment")?;
        let seg = s.g.index_select(seg_table, &seg_rows)?;
        let seg3 = s.g.reshape(seg, &[t, 1, d])?;
        let h = linear(s, "ib.in", x)?;
        let h = s.g.add(h, pos)?;
        let h = s.g.add(h, step)?;
        let h = s.g.add(h, seg3)?;
        let star = s.p("ib.star")?;
        let star = s.g.add(frames, star)?;
        let star = s.g.add(star, step)?;
        let star = s.g.add(star, seg)?;
        let prefix = match label {
            Some(l) => {
                let v = s.g.input(Tensor::new(vec![1, 1, d], self.labels.vector(l))?);
                let v = linear(s, "ib.cond", v)?;
                let zeros = s.g.input(Tensor::zeros(&[t, 1, d]));
                Some(s.g.add(zeros, v)?)
            }
            None => None,
        };
        let mut state = LatentState { h, star, prefix };
        for i in 0..self.cfg.depth {
            if self.cfg.pos_every_block && i > 0 {
                state.h = s.g.add(state.h, pos)?;
            }
            state = kaa_round(s, &format!("ib.r{i}"), state, self.cfg.order, None, self.cfg.heads)?;
        }
        let y = norm(s, "ib.ln", state.h)?;
        linear(s, "ib.head", y)
    }

    pub fn predict(&self, x: &Tensor, split: &SegmentSplit, label: Option<usize>, k: usize) -> Result<Vec<f64>> {
        let mut s = Session::frozen(&self.params);
        let xv = s.g.input(x.clone());
        let y = self.forward(&mut s, xv, split, label, k)?;
        Ok(s.g.value(y).data().to_vec())
    }

    /// The transition frames of a full `T x J x d` output.
    pub fn transition(values: &[f64], split: &SegmentSplit, frame_len: usize) -> Vec<f64> {
        let r = split.transition_range();
        values[r.start * frame_len..r.end * frame_len].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(split: &SegmentSplit, seed: u64) -> Tensor {
        let mut r = rng::seeded(seed);
        Tensor::from_fn(&[split.total(), 22, 12], |_| rng::normal(&mut r))
    }

    #[test]
    fn shape_and_transition_length() {
        let cfg = NetworkConfig::tiny(16, 1, 12);
        let m = InbetweenModel::new(cfg).unwrap();
        let split = SegmentSplit::new(2, 30, 2, 34).unwrap();
        let y = m.predict(&input(&split, 1), &split, Some(3), 10).unwrap();
        assert_eq!(y.len(), 34 * 22 * 12);
        assert_eq!(InbetweenModel::transition(&y, &split, 22 * 12).len(), 30 * 22 * 12);
    }

    #[test]
    fn label_token_is_live() {
        let m = InbetweenModel::new(NetworkConfig::tiny(16, 1, 12)).unwrap();
        let split = SegmentSplit::new(2, 3, 2, 7).unwrap();
        let x = input(&split, 2);
        let a = m.predict(&x, &split, Some(0), 5).unwrap();
        let b = m.predict(&x, &split, None, 5).unwrap();
        let diff = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff > 0.0);
        assert_eq!(m.labels.vector(4), m.labels.vector(4));
    }

    #[test]
    fn split_mismatch() {
        let m = InbetweenModel::new(NetworkConfig::tiny(16, 1, 12)).unwrap();
        let split = SegmentSplit::new(2, 3, 2, 7).unwrap();
        let x = Tensor::zeros(&[8, 22, 12]);
        assert!(matches!(m.predict(&x, &split, None, 1), Err(NetworkError::Split(_))));
    }
}
