use mmdm_tensor::{Tensor, Var};

use super::config::{AggregationOrder, NetworkConfig};
use super::layers::{init_block, self_block};
use super::params::{Init, ParamStore, Session};
use super::{NetworkError, Result};

/// Joint tokens `h [T, J, D]`, one star token per frame `star [T, D]` and
/// optional per-frame extra tokens `prefix [T, P, D]` that sit between the
/// star and the joints during structural attention.
#[derive(Debug, Clone, Copy)]
pub struct LatentState {
    pub h: Var,
    pub star: Var,
    pub prefix: Option<Var>,
}

pub(crate) fn init_round(init: &mut Init, store: &mut ParamStore, name: &str, cfg: &NetworkConfig) {
    init_block(init, store, &format!("{name}.sa"), cfg);
    init_block(init, store, &format!("{name}.ta"), cfg);
}

/// Self-attention over the tokens of each frame independently:
/// `[T, 1 + J, D] -> [T, 1 + J, D]`.
pub fn structural_attention(
    s: &mut Session,
    name: &str,
    tokens: Var,
    key_bias: Option<&Tensor>,
    heads: usize,
) -> Result<Var> {
    if s.g.shape(tokens).len() != 3 {
        return Err(NetworkError::ShapeMismatch {
            expected: vec![0, 0, 0],
            got: s.g.shape(tokens).to_vec(),
        });
    }
    self_block(s, name, "structural", tokens, key_bias, heads)
}

/// Self-attention over the `T` star tokens: `[T, D] -> [T, D]`.
pub fn temporal_attention(s: &mut Session, name: &str, stars: Var, heads: usize) -> Result<Var> {
    let sh = s.g.shape(stars).to_vec();
    if sh.len() != 2 {
        return Err(NetworkError::ShapeMismatch {
            expected: vec![0, 0],
            got: sh,
        });
    }
    let x = s.g.reshape(stars, &[1, sh[0], sh[1]])?;
    let y = self_block(s, name, "temporal", x, None, heads)?;
    Ok(s.g.reshape(y, &sh)?)
}

fn structural_stage(
    s: &mut Session,
    name: &str,
    state: LatentState,
    key_bias: Option<&Tensor>,
    heads: usize,
) -> Result<LatentState> {
    let hs = s.g.shape(state.h).to_vec();
    let (t, j, d) = (hs[0], hs[1], hs[2]);
    let star = s.g.reshape(state.star, &[t, 1, d])?;
    let mut parts = vec![star];
    let p = match state.prefix {
        Some(v) => {
            parts.push(v);
            s.g.shape(v)[1]
        }
        None => 0,
    };
    parts.push(state.h);
    let x = s.g.concat(&parts, 1)?;
    let x = structural_attention(s, &format!("{name}.sa"), x, key_bias, heads)?;
    let star = s.g.slice(x, 1, 0, 1)?;
    let star = s.g.reshape(star, &[t, d])?;
    let prefix = if p > 0 { Some(s.g.slice(x, 1, 1, p)?) } else { None };
    let h = s.g.slice(x, 1, 1 + p, j)?;
    Ok(LatentState { h, star, prefix })
}

fn broadcast_star(s: &mut Session, h: Var, star: Var) -> Result<Var> {
    let sh = s.g.shape(star).to_vec();
    let st = s.g.reshape(star, &[sh[0], 1, sh[1]])?;
    Ok(s.g.add(h, st)?)
}

/// One aggregation round. `key_bias` is `[T, 1 + P + J]`.
pub fn kaa_round(
    s: &mut Session,
    name: &str,
    state: LatentState,
    order: AggregationOrder,
    key_bias: Option<&Tensor>,
    heads: usize,
) -> Result<LatentState> {
    match order {
        AggregationOrder::StructureFirst => {
            let st = structural_stage(s, name, state, key_bias, heads)?;
            let star = temporal_attention(s, &format!("{name}.ta"), st.star, heads)?;
            let h = broadcast_star(s, st.h, star)?;
            Ok(LatentState {
                h,
                star,
                prefix: st.prefix,
            })
        }
        AggregationOrder::TrajectoryFirst => {
            let star = temporal_attention(s, &format!("{name}.ta"), state.star, heads)?;
            let st = structural_stage(s, name, LatentState { star, ..state }, key_bias, heads)?;
            let h = broadcast_star(s, st.h, st.star)?;
            Ok(LatentState { h, ..st })
        }
    }
}
