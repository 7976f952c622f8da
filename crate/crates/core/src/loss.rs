//! Objectives over mean embeddings: squared-Frobenius matching, cosine
//! distance, their weighted mixture, and the prompt-norm penalty.
//!
//! `total_loss` is where the privacy boundary is re-checked: the target
//! must be the noised release (or an explicitly clean one when the
//! caller has opted out of privacy), and the other side must be
//! synthetic. The penalty weight `alpha` multiplies the raw squared
//! prompt norms here, not inside `prompt_penalty`, so ablations over
//! `alpha` are pure reweightings.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingKind, MeanEmbedding};
use crate::error::{Error, Result};
use crate::prompt::PromptBank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    Mmd,
    Cosine,
    Mixed,
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossMode::Mmd => "mmd",
            LossMode::Cosine => "cosine",
            LossMode::Mixed => "mixed",
        })
    }
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mmd" => Ok(LossMode::Mmd),
            "cosine" => Ok(LossMode::Cosine),
            "mixed" => Ok(LossMode::Mixed),
            other => Err(Error::invalid_argument(format!(
                "unknown loss mode {other:?} (expected mmd, cosine, or mixed)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub mode: LossMode,
    /// Penalty weight alpha.
    pub alpha: f64,
    /// `(w_mmd, w_cos)`, used in mixed mode.
    pub mix_weights: (f64, f64),
    /// Permit a clean (never-noised) target. Only the explicit
    /// non-private pipeline sets this.
    pub allow_clean_target: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            mode: LossMode::Mixed,
            alpha: 0.05,
            mix_weights: (1.0, 1.0),
            allow_clean_target: false,
        }
    }
}

impl LossConfig {
    /// Effective `(w_mmd, w_cos)` for the chosen mode.
    fn term_weights(&self) -> (f64, f64) {
        match self.mode {
            LossMode::Mmd => (1.0, 0.0),
            LossMode::Cosine => (0.0, 1.0),
            LossMode::Mixed => self.mix_weights,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::invalid_argument(format!(
                "alpha must be finite and nonnegative, got {}",
                self.alpha
            )));
        }
        let (wm, wc) = self.mix_weights;
        if !(wm.is_finite() && wc.is_finite()) || wm < 0.0 || wc < 0.0 {
            return Err(Error::invalid_argument(format!(
                "mix weights must be finite and nonnegative, got ({wm}, {wc})"
            )));
        }
        Ok(())
    }
}

fn check_shapes(a: &MeanEmbedding, b: &MeanEmbedding) -> Result<()> {
    if a.matrix.dim() != b.matrix.dim() {
        return Err(Error::invalid_argument(format!(
            "embedding shapes differ: {:?} vs {:?}",
            a.matrix.dim(),
            b.matrix.dim()
        )));
    }
    Ok(())
}

/// Squared Frobenius distance between the two embedding matrices.
pub fn mmd_loss(mu_p: &MeanEmbedding, mu_q: &MeanEmbedding) -> Result<f64> {
    check_shapes(mu_p, mu_q)?;
    Ok(mu_p
        .matrix
        .iter()
        .zip(mu_q.matrix.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// `1 - cos` angle between the flattened matrices; in `[0, 2]`.
pub fn cosine_loss(mu_p: &MeanEmbedding, mu_q: &MeanEmbedding) -> Result<f64> {
    check_shapes(mu_p, mu_q)?;
    let np = mu_p.frobenius_norm();
    let nq = mu_q.frobenius_norm();
    if np == 0.0 || nq == 0.0 {
        return Err(Error::DegenerateInput(
            "cosine loss undefined for a zero-norm embedding".into(),
        ));
    }
    let dot: f64 = mu_p
        .matrix
        .iter()
        .zip(mu_q.matrix.iter())
        .map(|(a, b)| a * b)
        .sum();
    Ok(1.0 - dot / (np * nq))
}

/// Sum of squared row norms of the prompt bank (alpha NOT applied).
pub fn prompt_penalty(bank: &PromptBank) -> f64 {
    bank.prompts.iter().map(|v| v * v).sum()
}

fn check_target_kind(cfg: &LossConfig, target: &MeanEmbedding) -> Result<()> {
    match target.kind {
        EmbeddingKind::TrueNoisy => Ok(()),
        EmbeddingKind::TrueClean if cfg.allow_clean_target => Ok(()),
        EmbeddingKind::TrueClean => Err(Error::PrivacyViolation(
            "objective received a clean private embedding outside non-private mode".into(),
        )),
        EmbeddingKind::Synthetic => Err(Error::invalid_argument(
            "matching target must be a true embedding, got a synthetic one",
        )),
    }
}

fn check_synth_kind(synth: &MeanEmbedding) -> Result<()> {
    if synth.kind != EmbeddingKind::Synthetic {
        return Err(Error::PrivacyViolation(format!(
            "synthetic side of the objective has kind {:?}",
            synth.kind
        )));
    }
    Ok(())
}

/// Matching terms plus `alpha * prompt_penalty`.
pub fn total_loss(
    cfg: &LossConfig,
    target: &MeanEmbedding,
    synth: &MeanEmbedding,
    bank: &PromptBank,
) -> Result<f64> {
    cfg.validate()?;
    check_target_kind(cfg, target)?;
    check_synth_kind(synth)?;
    let (wm, wc) = cfg.term_weights();
    let mut total = cfg.alpha * prompt_penalty(bank);
    if wm != 0.0 {
        total += wm * mmd_loss(target, synth)?;
    }
    if wc != 0.0 {
        total += wc * cosine_loss(target, synth)?;
    }
    Ok(total)
}

/// Matching terms only, plus their gradient with respect to the
/// synthetic matrix. The penalty is excluded: its gradient acts on the
/// prompts directly, not through the embedding.
pub fn loss_grad_wrt_synth(
    cfg: &LossConfig,
    target: &MeanEmbedding,
    synth: &MeanEmbedding,
) -> Result<(f64, Array2<f64>)> {
    cfg.validate()?;
    check_target_kind(cfg, target)?;
    check_synth_kind(synth)?;
    check_shapes(target, synth)?;
    let (wm, wc) = cfg.term_weights();
    let p = &target.matrix;
    let q = &synth.matrix;
    let mut value = 0.0;
    let mut grad = Array2::zeros(q.dim());
    if wm != 0.0 {
        value += wm * mmd_loss(target, synth)?;
        // d/dQ ||Q - P||^2 = 2 (Q - P)
        grad.scaled_add(2.0 * wm, &(q - p));
    }
    if wc != 0.0 {
        let np = target.frobenius_norm();
        let nq = synth.frobenius_norm();
        if np == 0.0 || nq == 0.0 {
            return Err(Error::DegenerateInput(
                "cosine loss undefined for a zero-norm embedding".into(),
            ));
        }
        let dot: f64 = p.iter().zip(q.iter()).map(|(a, b)| a * b).sum();
        let cos = dot / (np * nq);
        value += wc * (1.0 - cos);
        // d/dQ (1 - cos) = -(P / (|P||Q|) - cos * Q / |Q|^2)
        grad.scaled_add(-wc / (np * nq), p);
        grad.scaled_add(wc * cos / (nq * nq), q);
    }
    Ok((value, grad))
}

// ---------------------------------------------------------------------------
