use mmdm_tensor::{Tensor, Var};

use super::config::{DecoderMode, NetworkConfig};
use super::encoding::{fourier_pos_embed, frame_embed, sinusoidal_step_embed};
use super::kaa::{init_round, kaa_round, LatentState};
use super::layers::{attention, ffn, init_attention, init_ffn, key_bias, linear, norm};
use super::params::{Init, ParamStore, Session};
use super::{NetworkError, Result};

pub(crate) fn pos_grid(frames: usize, joints: usize, dim: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(frames * joints * dim);
    for t in 0..frames {
        for j in 0..joints {
            data.extend(fourier_pos_embed(t, j, dim)?);
        }
    }
    Ok(Tensor::new(vec![frames, joints, dim], data)?)
}

pub(crate) fn frame_grid(frames: usize, dim: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(frames * dim);
    for t in 0..frames {
        data.extend(frame_embed(t, dim)?);
    }
    Ok(Tensor::new(vec![frames, dim], data)?)
}

pub(crate) fn step_vec(k: usize, dim: usize) -> Result<Tensor> {
    Ok(Tensor::new(vec![dim], sinusoidal_step_embed(k, dim)?)?)
}

/// Token order seen by the decoder: unmasked cells in encoder order, then
/// masked cells, both ascending in `(t, j)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderLayout {
    /// Cell index of each decoder token.
    pub order: Vec<usize>,
    /// Decoder position of each cell.
    pub position: Vec<usize>,
    pub unmasked: usize,
}

impl DecoderLayout {
    pub fn new(mask: &[bool]) -> Self {
        let mut order: Vec<usize> = (0..mask.len()).filter(|&c| !mask[c]).collect();
        let unmasked = order.len();
        order.extend((0..mask.len()).filter(|&c| mask[c]));
        let mut position = vec![0; mask.len()];
        for (p, &c) in order.iter().enumerate() {
            position[c] = p;
        }
        Self {
            order,
            position,
            unmasked,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.order.len();
        let mut seen = vec![false; n];
        for &c in &self.order {
            if c >= n || seen[c] {
                return Err(NetworkError::Layout(format!("cell {c} repeated or out of range")));
            }
            seen[c] = true;
        }
        if self.position.len() != n || self.order.iter().enumerate().any(|(p, &c)| self.position[c] != p) {
            return Err(NetworkError::Layout("position table is not the inverse of the order".into()));
        }
        Ok(())
    }
}

/// Kinematic encoder plus cross-attention decoder predicting the clean signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Mmdm {
    pub cfg: NetworkConfig,
    pub params: ParamStore,
}

impl Mmdm {
    pub fn new(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init = Init::new(cfg.init_seed);
        let mut p = ParamStore::new();
        init.linear(&mut p, "enc.in", cfg.in_dim, cfg.dim);
        p.insert("enc.star", init.normal(&[cfg.dim], 0.02));
        for i in 0..cfg.depth {
            init_round(&mut init, &mut p, &format!("enc.r{i}"), &cfg);
        }
        init.linear(&mut p, "dec.in", cfg.in_dim, cfg.dim);
        p.insert("dec.mask", init.normal(&[cfg.dim], 0.02));
        for i in 0..cfg.dec_depth {
            let b = format!("dec.b{i}");
            init.norm(&mut p, &format!("{b}.ln1"), cfg.dim);
            init.norm(&mut p, &format!("{b}.lnc"), cfg.dim);
            init_attention(&mut init, &mut p, &format!("{b}.xattn"), &cfg);
            init.norm(&mut p, &format!("{b}.ln2"), cfg.dim);
            init_ffn(&mut init, &mut p, &format!("{b}.ffn"), &cfg);
        }
        init.norm(&mut p, "dec.ln", cfg.dim);
        init.linear(&mut p, "dec.head", cfg.dim, cfg.out_dim);
        Ok(Self { cfg, params: p })
    }

    pub fn from_params(cfg: NetworkConfig, params: ParamStore) -> Result<Self> {
        let fresh = Self::new(cfg.clone())?;
        for (name, t) in fresh.params.iter() {
            let got = params.get(name)?;
            if got.shape() != t.shape() {
                return Err(NetworkError::ShapeMismatch {
                    expected: t.shape().to_vec(),
                    got: got.shape().to_vec(),
                });
            }
        }
        if params.len() != fresh.params.len() {
            return Err(NetworkError::Checkpoint("unexpected extra parameters".into()));
        }
        Ok(Self { cfg, params })
    }

    fn check_input(&self, x: &[usize], mask: &[bool]) -> Result<(usize, usize)> {
        if x.len() != 3 || x[2] != self.cfg.in_dim || x[0] * x[1] != mask.len() {
            return Err(NetworkError::ShapeMismatch {
                expected: vec![mask.len(), 1, self.cfg.in_dim],
                got: x.to_vec(),
            });
        }
        Ok((x[0], x[1]))
    }

    /// Encodes the unmasked cells of `x [T, J, in]`. Masked cells are zeroed
    /// and excluded as attention keys. Returns joint latents `[T, J, D]` and
    /// the condition `c [T, D]`.
    pub fn encode(&self, s: &mut Session, x: &Tensor, mask: &[bool], k: usize) -> Result<(Var, Var)> {
        let (t, j) = self.check_input(x.shape(), mask)?;
        let d = self.cfg.dim;
        let inn = self.cfg.in_dim;
        let visible = Tensor::from_fn(x.shape(), |i| if mask[i / inn] { 0.0 } else { x.data()[i] });
        let xv = s.g.input(visible);
        let pos = s.g.input(pos_grid(t, j, d)?);
        let step = s.g.input(step_vec(k, d)?);
        let frames = s.g.input(frame_grid(t, d)?);
        let h = linear(s, "enc.in", xv)?;
        let h = s.g.add(h, pos)?;
        let h = s.g.add(h, step)?;
        let star = s.p("enc.star")?;
        let star = s.g.add(frames, star)?;
        let star = s.g.add(star, step)?;
        let mut hidden = Vec::with_capacity(t * (1 + j));
        for f in 0..t {
            hidden.push(false);
            hidden.extend_from_slice(&mask[f * j..(f + 1) * j]);
        }
        let bias = key_bias(&hidden, t, 1 + j);
        let mut state = LatentState { h, star, prefix: None };
        for i in 0..self.cfg.depth {
            if self.cfg.pos_every_block && i > 0 {
                state.h = s.g.add(state.h, pos)?;
                state.star = s.g.add(state.star, frames)?;
            }
            state = kaa_round(s, &format!("enc.r{i}"), state, self.cfg.order, Some(&bias), self.cfg.heads)?;
        }
        Ok((state.h, state.star))
    }

    /// Decodes the full sequence from latents `h`, condition `c` and the
    /// noised values `x_k [T, J, in]` of masked cells.
    pub fn decode(
        &self,
        s: &mut Session,
        h: Var,
        c: Var,
        x_k: Var,
        layout: &DecoderLayout,
        mask: &[bool],
        k: usize,
    ) -> Result<Var> {
        layout.validate()?;
        let hs = s.g.shape(h).to_vec();
        let (t, j, d) = (hs[0], hs[1], hs[2]);
        let n = t * j;
        if layout.order.len() != n || mask.len() != n {
            return Err(NetworkError::Layout(format!(
                "layout covers {} cells, sequence has {n}",
                layout.order.len()
            )));
        }
        if layout.order[..layout.unmasked].iter().any(|&c| mask[c])
            || layout.order[layout.unmasked..].iter().any(|&c| !mask[c])
        {
            return Err(NetworkError::Layout("layout disagrees with the mask".into()));
        }
        let h_flat = s.g.reshape(h, &[n, d])?;
        let mask_tok = s.p("dec.mask")?;
        let z = match self.cfg.decoder_mode {
            DecoderMode::Diffusion => {
                let z = linear(s, "dec.in", x_k)?;
                let z = s.g.reshape(z, &[n, d])?;
                s.g.add(z, mask_tok)?
            }
            DecoderMode::Mae => {
                let zeros = s.g.input(Tensor::zeros(&[n, d]));
                s.g.add(zeros, mask_tok)?
            }
        };
        let both = s.g.concat(&[h_flat, z], 0)?;
        let rows: Vec<usize> = layout
            .order
            .iter()
            .map(|&cell| if mask[cell] { n + cell } else { cell })
            .collect();
        let tokens = s.g.index_select(both, &rows)?;
        let pos = pos_grid(t, j, d)?;
        let pos_seq = Tensor::from_fn(&[n, d], |i| pos.data()[layout.order[i / d] * d + i % d]);
        let pos_v = s.g.input(pos_seq);
        let step = s.g.input(step_vec(k, d)?);
        let x = s.g.add(tokens, pos_v)?;
        let x = s.g.add(x, step)?;
        let mut x = s.g.reshape(x, &[1, n, d])?;
        let cc = s.g.reshape(c, &[1, t, d])?;
        for i in 0..self.cfg.dec_depth {
            let b = format!("dec.b{i}");
            if self.cfg.pos_every_block && i > 0 {
                let p = s.g.reshape(pos_v, &[1, n, d])?;
                x = s.g.add(x, p)?;
            }
            let q = norm(s, &format!("{b}.ln1"), x)?;
            let kv = norm(s, &format!("{b}.lnc"), cc)?;
            let a = attention(s, &format!("{b}.xattn"), "cross", q, kv, None, self.cfg.heads)?;
            x = s.g.add(x, a)?;
            let f = norm(s, &format!("{b}.ln2"), x)?;
            let f = ffn(s, &format!("{b}.ffn"), f)?;
            x = s.g.add(x, f)?;
        }
        let x = norm(s, "dec.ln", x)?;
        let y = linear(s, "dec.head", x)?;
        let y = s.g.reshape(y, &[n, self.cfg.out_dim])?;
        let y = s.g.index_select(y, &layout.position)?;
        Ok(s.g.reshape(y, &[t, j, self.cfg.out_dim])?)
    }

    /// Signal estimate from the condition `cond` (read at unmasked cells)
    /// and the noised state `x_k` (read at masked cells).
    pub fn forward(&self, s: &mut Session, cond: &Tensor, x_k: Var, mask: &[bool], k: usize) -> Result<Var> {
        let (h, c) = self.encode(s, cond, mask, k)?;
        let layout = DecoderLayout::new(mask);
        self.decode(s, h, c, x_k, &layout, mask, k)
    }

    /// Inference-only [`Mmdm::forward`].
    pub fn predict(&self, cond: &Tensor, x_k: &Tensor, mask: &[bool], k: usize) -> Result<Vec<f64>> {
        let mut s = Session::frozen(&self.params);
        let xv = s.g.input(x_k.clone());
        let y = self.forward(&mut s, cond, xv, mask, k)?;
        Ok(s.g.value(y).data().to_vec())
    }
}
