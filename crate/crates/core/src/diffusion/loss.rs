use mmdm_tensor::{Graph, Tensor, Var};

use super::{DiffusionError, Result};

fn check(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(DiffusionError::ShapeMismatch(pred.len(), target.len()));
    }
    Ok(())
}

/// Mean squared error over the entries of masked cells.
pub fn loss_masked(pred: &[f64], target: &[f64], mask: &[bool], dim: usize) -> Result<f64> {
    check(pred, target)?;
    if mask.len() * dim != pred.len() {
        return Err(DiffusionError::ShapeMismatch(mask.len() * dim, pred.len()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (c, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        for i in c * dim..(c + 1) * dim {
            sum += (pred[i] - target[i]).powi(2);
        }
        n += dim;
    }
    if n == 0 {
        return Err(DiffusionError::EmptyMask);
    }
    Ok(sum / n as f64)
}

/// Mean squared error over all entries.
pub fn loss_full(pred: &[f64], target: &[f64]) -> Result<f64> {
    check(pred, target)?;
    if pred.is_empty() {
        return Err(DiffusionError::EmptyMask);
    }
    Ok(pred.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pred.len() as f64)
}

/// Graph form of [`loss_masked`] for a prediction of shape `[.., d]`.
pub fn loss_masked_var(g: &mut Graph, pred: Var, target: &Tensor, mask: &[bool]) -> Result<Var> {
    let n = g.value(pred).numel();
    check(g.value(pred).data(), target.data())?;
    let dim = n / mask.len().max(1);
    if mask.len() * dim != n {
        return Err(DiffusionError::ShapeMismatch(mask.len() * dim, n));
    }
    let count = mask.iter().filter(|m| **m).count() * dim;
    if count == 0 {
        return Err(DiffusionError::EmptyMask);
    }
    let w = 1.0 / count as f64;
    let weights = Tensor::from_fn(g.shape(pred), |i| if mask[i / dim] { w } else { 0.0 });
    weighted_sq(g, pred, target, weights)
}

pub fn loss_full_var(g: &mut Graph, pred: Var, target: &Tensor) -> Result<Var> {
    check(g.value(pred).data(), target.data())?;
    let t = g.input(target.clone());
    let d = g.sub(pred, t)?;
    let sq = g.square(d)?;
    Ok(g.mean(sq)?)
}

fn weighted_sq(g: &mut Graph, pred: Var, target: &Tensor, weights: Tensor) -> Result<Var> {
    let t = g.input(target.clone());
    let d = g.sub(pred, t)?;
    let sq = g.square(d)?;
    let w = g.input(weights);
    let m = g.mul(sq, w)?;
    Ok(g.sum(m)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell() {
        let l = loss_masked(&[0.5, 9.0], &[0.0, 1.0], &[true, false], 1).unwrap();
        assert_eq!(l, 0.25);
    }

    #[test]
    fn unmasked_errors_ignored() {
        assert_eq!(loss_masked(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 0.0, 0.0], &[true, false], 2).unwrap(), 0.0);
        assert!(matches!(loss_masked(&[1.0], &[0.0], &[false], 1), Err(DiffusionError::EmptyMask)));
    }

    #[test]
    fn graph_matches_plain() {
        let p = Tensor::new(vec![2, 2], vec![0.1, 0.4, -0.3, 2.0]).unwrap();
        let t = Tensor::new(vec![2, 2], vec![0.0, 0.5, 0.2, 1.0]).unwrap();
        let mask = [false, true];
        let mut g = Graph::new();
        let v = g.param(p.clone());
        let l = loss_masked_var(&mut g, v, &t, &mask).unwrap();
        let plain = loss_masked(p.data(), t.data(), &mask, 2).unwrap();
        assert!((g.value(l).item() - plain).abs() < 1e-15);
        let l2 = loss_full_var(&mut g, v, &t).unwrap();
        assert!((g.value(l2).item() - loss_full(p.data(), t.data()).unwrap()).abs() < 1e-15);
    }
}
