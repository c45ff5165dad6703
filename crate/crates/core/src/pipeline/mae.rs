use mmdm_tensor::Tensor;

use super::{PipelineError, Result};
use crate::diffusion::loss_masked;
use crate::network::{DecoderMode, Mmdm};

/// One-pass masked-autoencoder reconstruction: the encoder reads the
/// unmasked cells and the decoder fills masked cells from the learned
/// placeholder. Returns the reconstruction and the loss over masked cells.
pub fn mae_reconstruct(net: &Mmdm, d: &Tensor, mask: &[bool]) -> Result<(Vec<f64>, f64)> {
    if net.cfg.decoder_mode != DecoderMode::Mae {
        return Err(PipelineError::Config("network is not in MAE decoder mode".into()));
    }
    let zeros = Tensor::zeros(d.shape());
    let y = net.predict(d, &zeros, mask, 0)?;
    let dim = d.shape().last().copied().unwrap_or(1);
    let loss = loss_masked(&y, d.data(), mask, dim)?;
    Ok((y, loss))
}
