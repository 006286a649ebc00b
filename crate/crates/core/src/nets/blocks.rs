//! Graph builders for the network blocks: per-lead encoder, shared decoder,
//! gating MLP, and the fine-tune classifier head.

use crate::diff::{GraphBuilder, NodeId, Real};

use super::NetsError;

/// Encoder output variance is clamped to this range so it stays strictly
/// positive for any finite input.
pub const VAR_MIN: f64 = 1e-6;
pub const VAR_MAX: f64 = 1e6;

#[derive(Clone, Debug)]
pub struct EncoderConfig {
    pub input_length: usize,
    pub latent_dim: usize,
    /// Channel depths of the three stride-2 convolution stages.
    pub channels: [usize; 3],
}

impl EncoderConfig {
    pub fn new(input_length: usize, latent_dim: usize) -> Self {
        EncoderConfig {
            input_length,
            latent_dim,
            channels: [16, 32, 64],
        }
    }

    pub fn validate(&self) -> Result<(), NetsError> {
        if self.input_length < 8 || self.input_length % 8 != 0 {
            return Err(NetsError::Config(format!(
                "input length {} must be a positive multiple of 8",
                self.input_length
            )));
        }
        if self.latent_dim == 0 {
            return Err(NetsError::Config("latent dim must be >= 1".into()));
        }
        if self.channels.iter().any(|&c| c == 0) {
            return Err(NetsError::Config("channel depths must be positive".into()));
        }
        Ok(())
    }

    /// Flattened feature size after the three halvings: last_channels * L/8.
    pub fn feature_len(&self) -> usize {
        self.channels[2] * (self.input_length / 8)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ClassifierConfig {
    pub fc_size: usize,
    pub dropout: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            fc_size: 128,
            dropout: 0.5,
        }
    }
}

pub const GATE_HIDDEN: usize = 64;

/// Mean/variance nodes of one lead's latent expert.
#[derive(Clone, Copy, Debug)]
pub struct ExpertNodes {
    pub mu: NodeId,
    pub var: NodeId,
}

/// Three conv+ReLU stages halving the length (L -> L/8 at 64 channels),
/// flattened into two parallel affine heads; variance is exp(logvar)
/// clamped to [VAR_MIN, VAR_MAX].
pub fn build_encoder<T: Real>(
    gb: &mut GraphBuilder<T>,
    lead: &str,
    cfg: &EncoderConfig,
) -> Result<(NodeId, ExpertNodes), NetsError> {
    cfg.validate()?;
    let l = cfg.input_length;
    let x = gb.input(&format!("x.{lead}"), &[l])?;
    let mut cur = gb.reshape(x, &[1, l])?;
    let mut in_ch = 1usize;
    for (stage, &out_ch) in cfg.channels.iter().enumerate() {
        let w = gb.param(&format!("enc.{lead}.conv{stage}.w"), &[out_ch, in_ch, 3])?;
        let b = gb.param(&format!("enc.{lead}.conv{stage}.b"), &[out_ch])?;
        let conv = gb.conv1d(cur, w, b, 2, 1)?;
        cur = gb.relu(conv);
        in_ch = out_ch;
    }
    let flat_len = cfg.feature_len();
    let flat = gb.reshape(cur, &[flat_len])?;
    let d = cfg.latent_dim;
    let mu_w = gb.param(&format!("enc.{lead}.mu.w"), &[d, flat_len])?;
    let mu_b = gb.param(&format!("enc.{lead}.mu.b"), &[d])?;
    let mu = gb.affine(flat, mu_w, mu_b)?;
    let lv_w = gb.param(&format!("enc.{lead}.logvar.w"), &[d, flat_len])?;
    let lv_b = gb.param(&format!("enc.{lead}.logvar.b"), &[d])?;
    let logvar = gb.affine(flat, lv_w, lv_b)?;
    let var_raw = gb.exp(logvar);
    let var = gb.clamp(var_raw, VAR_MIN, VAR_MAX);
    Ok((x, ExpertNodes { mu, var }))
}

/// Affine from the latent to 64 x L/8, then three transposed-conv stages
/// doubling the length; ReLU between stages, identity after the last. One
/// parameter set reconstructs every lead.
pub fn build_decoder<T: Real>(
    gb: &mut GraphBuilder<T>,
    z: NodeId,
    cfg: &EncoderConfig,
) -> Result<NodeId, NetsError> {
    cfg.validate()?;
    let l8 = cfg.input_length / 8;
    let chans = cfg.channels; // unwound in reverse
    let flat_len = chans[2] * l8;
    let fc_w = gb.param("dec.fc.w", &[flat_len, cfg.latent_dim])?;
    let fc_b = gb.param("dec.fc.b", &[flat_len])?;
    let fc = gb.affine(z, fc_w, fc_b)?;
    let mut cur = gb.reshape(fc, &[chans[2], l8])?;
    let stages = [(chans[2], chans[1]), (chans[1], chans[0]), (chans[0], 1)];
    for (stage, (in_ch, out_ch)) in stages.into_iter().enumerate() {
        let w = gb.param(&format!("dec.tconv{stage}.w"), &[in_ch, out_ch, 4])?;
        let b = gb.param(&format!("dec.tconv{stage}.b"), &[out_ch])?;
        let t = gb.tconv1d(cur, w, b, 2, 1)?;
        // Identity activation on the final stage keeps amplitudes unbounded.
        cur = if stage < 2 { gb.relu(t) } else { t };
    }
    Ok(gb.reshape(cur, &[cfg.input_length])?)
}

/// Shared two-layer gating MLP applied to each expert mean independently;
/// returns the concatenated logits [K].
pub fn build_gating<T: Real>(
    gb: &mut GraphBuilder<T>,
    expert_mus: &[NodeId],
    latent_dim: usize,
) -> Result<NodeId, NetsError> {
    if expert_mus.is_empty() {
        return Err(NetsError::Config("gating needs at least one expert".into()));
    }
    let w0 = gb.param("gate.fc0.w", &[GATE_HIDDEN, latent_dim])?;
    let b0 = gb.param("gate.fc0.b", &[GATE_HIDDEN])?;
    let w1 = gb.param("gate.fc1.w", &[1, GATE_HIDDEN])?;
    let b1 = gb.param("gate.fc1.b", &[1])?;
    let mut logits = Vec::with_capacity(expert_mus.len());
    for &mu in expert_mus {
        let h = gb.affine(mu, w0, b0)?;
        let h = gb.relu(h);
        logits.push(gb.affine(h, w1, b1)?);
    }
    Ok(gb.concat(&logits)?)
}

/// affine(d -> fc) + ReLU + dropout + affine(fc -> 2).
pub fn build_classifier<T: Real>(
    gb: &mut GraphBuilder<T>,
    x: NodeId,
    latent_dim: usize,
    cfg: &ClassifierConfig,
) -> Result<NodeId, NetsError> {
    let w0 = gb.param("clf.fc0.w", &[cfg.fc_size, latent_dim])?;
    let b0 = gb.param("clf.fc0.b", &[cfg.fc_size])?;
    let h = gb.affine(x, w0, b0)?;
    let h = gb.relu(h);
    let h = gb.dropout(h, cfg.dropout)?;
    let w1 = gb.param("clf.fc1.w", &[2, cfg.fc_size])?;
    let b1 = gb.param("clf.fc1.b", &[2])?;
    Ok(gb.affine(h, w1, b1)?)
}
