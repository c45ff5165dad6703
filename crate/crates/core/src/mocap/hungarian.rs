use super::{MocapError, Result};

/// Minimum-cost assignment of `min(n, m)` pairs `(row, col)`, sorted by row.
/// Entries may be `+inf`; an optimum that needs one is `InfeasibleAll`.
pub fn hungarian_match(cost: &[Vec<f64>]) -> Result<Vec<(usize, usize)>> {
    let n = cost.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = cost[0].len();
    if cost.iter().any(|r| r.len() != m) {
        return Err(MocapError::Shape("ragged cost matrix".into()));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    if cost.iter().flatten().any(|c| c.is_nan() || *c == f64::NEG_INFINITY) {
        return Err(MocapError::Shape("cost entries must be finite or +inf".into()));
    }
    let transposed = n > m;
    let (rows, cols) = if transposed { (m, n) } else { (n, m) };
    let at = |i: usize, j: usize| if transposed { cost[j][i] } else { cost[i][j] };
    let finite_max = cost
        .iter()
        .flatten()
        .filter(|c| c.is_finite())
        .fold(0.0f64, |a, c| a.max(c.abs()));
    let big = (finite_max + 1.0) * (rows as f64 + 1.0) * 4.0;
    let a = |i: usize, j: usize| {
        let c = at(i, j);
        if c.is_finite() {
            c
        } else {
            big
        }
    };
    let pairs = solve(rows, cols, a);
    let mut out: Vec<(usize, usize)> = pairs
        .into_iter()
        .map(|(i, j)| if transposed { (j, i) } else { (i, j) })
        .collect();
    if out.iter().any(|&(i, j)| !cost[i][j].is_finite()) {
        return Err(MocapError::InfeasibleAll);
    }
    out.sort_unstable();
    Ok(out)
}

/// Potentials-based O(n^2 m) solver for `n <= m`.
fn solve(n: usize, m: usize, a: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m).filter(|&j| p[j] != 0).map(|j| (p[j] - 1, j - 1)).collect()
}

pub fn assignment_cost(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| cost[i][j]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one() {
        assert_eq!(hungarian_match(&[vec![3.0]]).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn diagonal_dominant() {
        let c: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 0.1 } else { 10.0 }).collect())
            .collect();
        assert_eq!(hungarian_match(&c).unwrap(), vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn infinite_entries() {
        let inf = f64::INFINITY;
        let c = vec![vec![inf, 1.0], vec![2.0, inf]];
        assert_eq!(hungarian_match(&c).unwrap(), vec![(0, 1), (1, 0)]);
        let c = vec![vec![inf, inf], vec![2.0, 1.0]];
        assert_eq!(hungarian_match(&c), Err(MocapError::InfeasibleAll));
    }

    #[test]
    fn rectangular() {
        let c = vec![vec![5.0, 1.0, 9.0]];
        assert_eq!(hungarian_match(&c).unwrap(), vec![(0, 1)]);
        let c = vec![vec![5.0], vec![1.0], vec![9.0]];
        assert_eq!(hungarian_match(&c).unwrap(), vec![(1, 0)]);
    }
}
