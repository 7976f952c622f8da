//! Trainable per-class prompts and the private-to-source label mapping.
//!
//! A prompt is one trainable vector per private class, applied as an
//! additive offset scaled by `kappa` either to extracted features
//! (default) or to flattened pixels. The label mapping assigns each
//! private class a source class of the frozen generator; it is sampled
//! from a seed alone, before any private data is touched, so it cannot
//! leak anything.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Standard deviation of prompt initialization draws.
pub const INIT_STD: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptSpace {
    /// Prompt added to extracted features (default).
    Feature,
    /// Prompt added to flattened pixels.
    Pixel,
}

impl std::fmt::Display for PromptSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PromptSpace::Feature => "feature",
            PromptSpace::Pixel => "pixel",
        })
    }
}

impl std::str::FromStr for PromptSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature" => Ok(PromptSpace::Feature),
            "pixel" => Ok(PromptSpace::Pixel),
            other => Err(Error::invalid_argument(format!(
                "unknown prompt space {other:?} (expected feature or pixel)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBank {
    /// `(num_private_classes, prompt_dim)`.
    pub prompts: Array2<f64>,
    pub kappa: f64,
    pub space: PromptSpace,
}

impl PromptBank {
    /// Rows drawn i.i.d. N(0, 1e-4); deterministic under the seed.
    pub fn init(
        num_classes: usize,
        prompt_dim: usize,
        space: PromptSpace,
        kappa: f64,
        seed: u64,
    ) -> Result<Self> {
        if num_classes == 0 || prompt_dim == 0 {
            return Err(Error::invalid_argument(
                "prompt bank needs positive class count and dimension",
            ));
        }
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(Error::invalid_argument(format!(
                "kappa must be finite and nonnegative, got {kappa}"
            )));
        }
        let mut rng = seeds::stream(seed);
        let prompts = Array2::from_shape_simple_fn((num_classes, prompt_dim), || {
            let v: f64 = rng.sample(StandardNormal);
            v * INIT_STD
        });
        Ok(PromptBank {
            prompts,
            kappa,
            space,
        })
    }

    /// All-zero prompts (the no-prompt control is `kappa = 0`, but a zero
    /// bank is handy for the baseline path).
    pub fn zeros(num_classes: usize, prompt_dim: usize, space: PromptSpace, kappa: f64) -> Result<Self> {
        if num_classes == 0 || prompt_dim == 0 {
            return Err(Error::invalid_argument(
                "prompt bank needs positive class count and dimension",
            ));
        }
        Ok(PromptBank {
            prompts: Array2::zeros((num_classes, prompt_dim)),
            kappa,
            space,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.prompts.dim().0
    }

    pub fn prompt_dim(&self) -> usize {
        self.prompts.dim().1
    }

    /// `raw + kappa * prompts[class]`. Identity when `kappa == 0`.
    pub fn apply(&self, raw: &Array1<f64>, class: usize) -> Result<Array1<f64>> {
        if class >= self.num_classes() {
            return Err(Error::invalid_argument(format!(
                "prompt class {class} out of range ({} classes)",
                self.num_classes()
            )));
        }
        if raw.len() != self.prompt_dim() {
            return Err(Error::invalid_argument(format!(
                "raw feature length {} does not match prompt_dim {}",
                raw.len(),
                self.prompt_dim()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(
                "raw feature contains non-finite entries".into(),
            ));
        }
        Ok(raw + &(&self.prompts.row(class) * self.kappa))
    }
}

/// Injective (when possible) map from private classes to source classes,
/// sampled from the seed alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMapping {
    table: Vec<usize>,
    pub seed: u64,
}

/// Sample a label mapping without replacement when the source label space
/// is large enough; with replacement otherwise.
pub fn random_label_mapping(
    num_private: usize,
    num_source: usize,
    seed: u64,
) -> Result<LabelMapping> {
    if num_private == 0 || num_source == 0 {
        return Err(Error::invalid_argument(
            "label mapping needs positive class counts",
        ));
    }
    let mut rng = seeds::stream(seed);
    let table = if num_private <= num_source {
        // Partial Fisher-Yates: first `num_private` entries of a seeded
        // shuffle of the source classes.
        let mut pool: Vec<usize> = (0..num_source).collect();
        for i in 0..num_private {
            let j = rng.random_range(i..num_source);
            pool.swap(i, j);
        }
        pool.truncate(num_private);
        pool
    } else {
        (0..num_private)
            .map(|_| rng.random_range(0..num_source))
            .collect()
    };
    Ok(LabelMapping { table, seed })
}

impl LabelMapping {
    /// Identity mapping (used by the baseline, which has no frozen
    /// source label space).
    pub fn identity(num_classes: usize) -> Self {
        LabelMapping {
            table: (0..num_classes).collect(),
            seed: 0,
        }
    }

    pub fn num_private(&self) -> usize {
        self.table.len()
    }

    pub fn map(&self, private_class: usize) -> Result<usize> {
        self.table.get(private_class).copied().ok_or_else(|| {
            Error::invalid_argument(format!(
                "private class {private_class} out of range ({} classes)",
                self.table.len()
            ))
        })
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }
}

// ---------------------------------------------------------------------------
