use std::f64::consts::PI;

use super::{NetworkError, Result};

fn check(dim: usize, multiple: usize) -> Result<()> {
    if dim == 0 || dim % multiple != 0 {
        return Err(NetworkError::OddDim { dim, multiple });
    }
    Ok(())
}

/// Writes `[sin(w_i x) .., cos(w_i x) ..]` for `w_i = pi 2^(i - n)`,
/// `i = 0..n`, into `out` (length `2n`).
fn fourier_axis(x: f64, out: &mut [f64]) {
    let n = out.len() / 2;
    for i in 0..n {
        let w = PI * 2f64.powi(i as i32 - n as i32);
        let (s, c) = (w * x).sin_cos();
        out[i] = s;
        out[n + i] = c;
    }
}

/// Fourier features of `(t, j)`: the frame index fills the first half of the
/// vector and the joint index the second.
pub fn fourier_pos_embed(t: usize, j: usize, dim: usize) -> Result<Vec<f64>> {
    check(dim, 4)?;
    let mut v = vec![0.0; dim];
    let (a, b) = v.split_at_mut(dim / 2);
    fourier_axis(t as f64, a);
    fourier_axis(j as f64, b);
    Ok(v)
}

/// Frame half of [`fourier_pos_embed`], with the joint half left zero.
pub fn frame_embed(t: usize, dim: usize) -> Result<Vec<f64>> {
    check(dim, 4)?;
    let mut v = vec![0.0; dim];
    fourier_axis(t as f64, &mut v[..dim / 2]);
    Ok(v)
}

/// Transformer timestep embedding: `sin(k f_i)` then `cos(k f_i)` with
/// `f_i = 10000^(-i / (D/2))`.
pub fn sinusoidal_step_embed(k: usize, dim: usize) -> Result<Vec<f64>> {
    check(dim, 2)?;
    let half = dim / 2;
    let mut v = vec![0.0; dim];
    for i in 0..half {
        let f = 10000f64.powf(-(i as f64) / half as f64);
        let (s, c) = (k as f64 * f).sin_cos();
        v[i] = s;
        v[half + i] = c;
    }
    Ok(v)
}
