use mmdm_tensor::{Tensor, Var};

use super::config::NetworkConfig;
use super::params::{Init, ParamStore, Session};
use super::{NetworkError, Result};

/// Additive bias that removes a key from the softmax.
pub const KEY_MASK_BIAS: f64 = -1e9;

/// One attention call as seen by the score matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionCall {
    pub label: &'static str,
    /// Independent sequences in the call.
    pub batch: usize,
    pub queries: usize,
    pub keys: usize,
    pub heads: usize,
}

impl AttentionCall {
    /// Score-matrix entries for one head.
    pub fn entries_per_head(&self) -> usize {
        self.batch * self.queries * self.keys
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttentionStats {
    pub calls: Vec<AttentionCall>,
}

impl AttentionStats {
    pub fn entries_per_head(&self) -> usize {
        self.calls.iter().map(AttentionCall::entries_per_head).sum()
    }

    pub fn entries_for(&self, label: &str) -> usize {
        self.calls
            .iter()
            .filter(|c| c.label == label)
            .map(AttentionCall::entries_per_head)
            .sum()
    }

    pub fn max_tokens(&self, label: &str) -> usize {
        self.calls
            .iter()
            .filter(|c| c.label == label)
            .map(|c| c.keys.max(c.queries))
            .max()
            .unwrap_or(0)
    }
}

pub(crate) fn init_attention(init: &mut Init, store: &mut ParamStore, name: &str, cfg: &NetworkConfig) {
    let a = cfg.attn_dim();
    for p in ["q", "k", "v"] {
        init.linear(store, &format!("{name}.{p}"), cfg.dim, a);
    }
    init.linear(store, &format!("{name}.o"), a, cfg.dim);
}

pub(crate) fn init_ffn(init: &mut Init, store: &mut ParamStore, name: &str, cfg: &NetworkConfig) {
    init.linear(store, &format!("{name}.fc1"), cfg.dim, cfg.ffn_dim);
    init.linear(store, &format!("{name}.fc2"), cfg.ffn_dim, cfg.dim);
}

/// Pre-norm self-attention plus FFN block.
pub(crate) fn init_block(init: &mut Init, store: &mut ParamStore, name: &str, cfg: &NetworkConfig) {
    init.norm(store, &format!("{name}.ln1"), cfg.dim);
    init_attention(init, store, &format!("{name}.attn"), cfg);
    init.norm(store, &format!("{name}.ln2"), cfg.dim);
    init_ffn(init, store, &format!("{name}.ffn"), cfg);
}

/// `x W + b` over the last axis.
pub fn linear(s: &mut Session, name: &str, x: Var) -> Result<Var> {
    let w = s.p(&format!("{name}.w"))?;
    let b = s.p(&format!("{name}.b"))?;
    let shape = s.g.shape(x).to_vec();
    let fan_in = *shape.last().expect("rank >= 1");
    let rows = shape.iter().product::<usize>() / fan_in.max(1);
    let flat = s.g.reshape(x, &[rows, fan_in])?;
    let y = s.g.matmul(flat, w)?;
    let y = s.g.add(y, b)?;
    let mut out = shape;
    *out.last_mut().expect("rank >= 1") = s.g.shape(w)[1];
    Ok(s.g.reshape(y, &out)?)
}

pub fn norm(s: &mut Session, name: &str, x: Var) -> Result<Var> {
    let g = s.p(&format!("{name}.g"))?;
    let b = s.p(&format!("{name}.b"))?;
    Ok(s.g.layer_norm(x, g, b)?)
}

fn split_heads(s: &mut Session, x: Var, heads: usize) -> Result<Var> {
    let sh = s.g.shape(x).to_vec();
    let (b, n, a) = (sh[0], sh[1], sh[2]);
    let r = s.g.reshape(x, &[b, n, heads, a / heads])?;
    Ok(s.g.permute(r, &[0, 2, 1, 3])?)
}

/// Multi-head attention of `q_in [B, Nq, D]` over `kv_in [B, Nk, D]`.
/// `key_bias`, when given, is `[B, Nk]` and added to every score row.
pub fn attention(
    s: &mut Session,
    name: &str,
    label: &'static str,
    q_in: Var,
    kv_in: Var,
    key_bias: Option<&Tensor>,
    heads: usize,
) -> Result<Var> {
    let qs = s.g.shape(q_in).to_vec();
    let ks = s.g.shape(kv_in).to_vec();
    if qs.len() != 3 || ks.len() != 3 || qs[0] != ks[0] || qs[2] != ks[2] {
        return Err(NetworkError::ShapeMismatch {
            expected: qs,
            got: ks,
        });
    }
    let (b, nq, nk) = (qs[0], qs[1], ks[1]);
    s.stats.calls.push(AttentionCall {
        label,
        batch: b,
        queries: nq,
        keys: nk,
        heads,
    });
    let q = linear(s, &format!("{name}.q"), q_in)?;
    let k = linear(s, &format!("{name}.k"), kv_in)?;
    let v = linear(s, &format!("{name}.v"), kv_in)?;
    let a = s.g.shape(q)[2];
    let q = split_heads(s, q, heads)?;
    let k = split_heads(s, k, heads)?;
    let v = split_heads(s, v, heads)?;
    let kt = s.g.transpose(k)?;
    let scores = s.g.matmul(q, kt)?;
    let mut scores = s.g.scale(scores, 1.0 / ((a / heads) as f64).sqrt())?;
    if let Some(bias) = key_bias {
        if bias.shape() != [b, nk] {
            return Err(NetworkError::ShapeMismatch {
                expected: vec![b, nk],
                got: bias.shape().to_vec(),
            });
        }
        let bv = s.g.input(bias.clone().reshape(&[b, 1, 1, nk])?);
        scores = s.g.add(scores, bv)?;
    }
    let w = s.g.softmax(scores, 3)?;
    let ctx = s.g.matmul(w, v)?;
    let ctx = s.g.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = s.g.reshape(ctx, &[b, nq, a])?;
    linear(s, &format!("{name}.o"), ctx)
}

pub fn ffn(s: &mut Session, name: &str, x: Var) -> Result<Var> {
    let h = linear(s, &format!("{name}.fc1"), x)?;
    let h = s.g.gelu(h)?;
    linear(s, &format!("{name}.fc2"), h)
}

/// `x + MSA(LN(x))`, then `x + FFN(LN(x))`, over `[B, N, D]`.
pub fn self_block(
    s: &mut Session,
    name: &str,
    label: &'static str,
    x: Var,
    key_bias: Option<&Tensor>,
    heads: usize,
) -> Result<Var> {
    let h = norm(s, &format!("{name}.ln1"), x)?;
    let a = attention(s, &format!("{name}.attn"), label, h, h, key_bias, heads)?;
    let x = s.g.add(x, a)?;
    let h = norm(s, &format!("{name}.ln2"), x)?;
    let f = ffn(s, &format!("{name}.ffn"), h)?;
    Ok(s.g.add(x, f)?)
}

/// Key bias `[B, N]` that hides `hidden[b][n] == true` keys.
pub fn key_bias(hidden: &[bool], batch: usize, keys: usize) -> Tensor {
    Tensor::new(
        vec![batch, keys],
        hidden.iter().map(|&h| if h { KEY_MASK_BIAS } else { 0.0 }).collect(),
    )
    .expect("bias matches its shape")
}
