use mmdm_tensor::{Tensor, Var};

use super::config::NetworkConfig;
use super::layers::{init_block, linear, self_block, AttentionStats};
use super::params::{Init, ParamStore, Session};
use super::Result;

/// Joint-level baseline that runs spatial attention over the joints of each
/// frame and then temporal attention over the frames of each joint.
#[derive(Debug, Clone)]
pub struct CascadedEncoder {
    pub cfg: NetworkConfig,
    pub params: ParamStore,
}

impl CascadedEncoder {
    pub fn new(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init = Init::new(cfg.init_seed);
        let mut p = ParamStore::new();
        init.linear(&mut p, "cas.in", cfg.in_dim, cfg.dim);
        for i in 0..cfg.depth {
            init_block(&mut init, &mut p, &format!("cas.r{i}.spatial"), &cfg);
            init_block(&mut init, &mut p, &format!("cas.r{i}.temporal"), &cfg);
        }
        Ok(Self { cfg, params: p })
    }

    pub fn encode(&self, s: &mut Session, x: &Tensor) -> Result<Var> {
        let sh = x.shape().to_vec();
        let (t, j, d) = (sh[0], sh[1], self.cfg.dim);
        let xv = s.g.input(x.clone());
        let mut h = linear(s, "cas.in", xv)?;
        for i in 0..self.cfg.depth {
            h = self_block(s, &format!("cas.r{i}.spatial"), "spatial", h, None, self.cfg.heads)?;
            let ht = s.g.permute(h, &[1, 0, 2])?;
            let ht = self_block(s, &format!("cas.r{i}.temporal"), "joint-temporal", ht, None, self.cfg.heads)?;
            h = s.g.permute(ht, &[1, 0, 2])?;
        }
        debug_assert_eq!(s.g.shape(h), &[t, j, d]);
        Ok(h)
    }

    /// Score entries per head for one forward pass over `x`.
    pub fn attention_stats(&self, x: &Tensor) -> Result<AttentionStats> {
        let mut s = Session::frozen(&self.params);
        self.encode(&mut s, x)?;
        Ok(s.stats)
    }
}
