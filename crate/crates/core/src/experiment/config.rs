//! Experiment configuration: defaults, validation, and the flat
//! key-value overlay used by config files and CLI flags.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::DownstreamKind;
use crate::loss::{LossConfig, LossMode};
use crate::ntk::Activation;
use crate::prompt::PromptSpace;
use crate::train::Optimizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Frozen backbones, trainable per-class prompts.
    VpNtk,
    /// Trainable small generator, no prompts.
    DpNtkBaseline,
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunMode::VpNtk => "vp_ntk",
            RunMode::DpNtkBaseline => "dp_ntk_baseline",
        })
    }
}

impl std::str::FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vp_ntk" => Ok(RunMode::VpNtk),
            "dp_ntk_baseline" => Ok(RunMode::DpNtkBaseline),
            other => Err(Error::invalid_argument(format!(
                "unknown mode {other:?} (expected vp_ntk or dp_ntk_baseline)"
            ))),
        }
    }
}

/// Every stream of randomness in a run, by name. Nothing draws entropy
/// outside these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    /// Backbone, feature-map, and prompt initialization.
    pub init: u64,
    /// Release noise.
    pub noise: u64,
    /// Latent draws during training and synthesis.
    pub latents: u64,
    /// Label mapping construction.
    pub mapping: u64,
    /// Downstream classifier initialization.
    pub downstream: u64,
    /// Builtin dataset generation and manifest splitting.
    pub data: u64,
}

impl Default for SeedSet {
    fn default() -> Self {
        SeedSet {
            init: 17,
            noise: 23,
            latents: 29,
            mapping: 31,
            downstream: 37,
            data: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Builtin name ("toy3") or a dataset directory.
    pub dataset: String,
    /// Frozen generator checkpoint; builtin toy generator when absent.
    pub generator_ckpt: Option<PathBuf>,
    /// Frozen extractor checkpoint; builtin toy extractor when absent.
    pub extractor_ckpt: Option<PathBuf>,
    /// Privacy budget; both present = private run, both absent = the
    /// explicit non-private mode.
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub mode: RunMode,
    pub prompt_space: PromptSpace,
    pub kappa: f64,
    pub eta: f64,
    pub alpha: f64,
    pub loss_mode: LossMode,
    pub mix_mmd: f64,
    pub mix_cos: f64,
    pub max_steps: usize,
    /// Synthetic samples per class per optimization step.
    pub train_per_class: usize,
    /// Synthetic samples per class in the released dataset.
    pub synth_per_class: usize,
    pub ntk_hidden: Vec<usize>,
    pub activation: Activation,
    /// Extractor output width (feature-space runs).
    pub feat_dim: usize,
    pub latent_dim: usize,
    /// Condition classes of the builtin frozen generator.
    pub gen_source_classes: usize,
    pub use_adam: bool,
    pub fixed_latent_pool: bool,
    pub downstream: DownstreamKind,
    pub seeds: SeedSet,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: "toy3".into(),
            generator_ckpt: None,
            extractor_ckpt: None,
            epsilon: None,
            delta: None,
            mode: RunMode::VpNtk,
            prompt_space: PromptSpace::Feature,
            kappa: 16.0,
            eta: 1e-2,
            alpha: 0.05,
            loss_mode: LossMode::Mixed,
            mix_mmd: 1.0,
            mix_cos: 1.0,
            max_steps: 200,
            train_per_class: 64,
            synth_per_class: 200,
            ntk_hidden: vec![512],
            activation: Activation::Tanh,
            feat_dim: 64,
            latent_dim: 16,
            gen_source_classes: 10,
            use_adam: false,
            fixed_latent_pool: false,
            downstream: DownstreamKind::Logistic,
            seeds: SeedSet::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn privacy_enabled(&self) -> bool {
        self.epsilon.is_some() && self.delta.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_empty() {
            return Err(Error::invalid_argument("dataset spec is empty"));
        }
        match (self.epsilon, self.delta) {
            (Some(e), Some(d)) => {
                if !(e.is_finite() && e > 0.0) {
                    return Err(Error::invalid_argument(format!(
                        "epsilon must be finite and positive, got {e}"
                    )));
                }
                if !(d.is_finite() && d > 0.0 && d < 1.0) {
                    return Err(Error::invalid_argument(format!(
                        "delta must lie in (0, 1), got {d}"
                    )));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::invalid_argument(
                    "epsilon and delta must be given together (or neither, for a \
                     non-private run)",
                ));
            }
        }
        if !self.kappa.is_finite() || self.kappa < 0.0 {
            return Err(Error::invalid_argument(format!(
                "kappa must be finite and nonnegative, got {}",
                self.kappa
            )));
        }
        if !self.eta.is_finite() || self.eta <= 0.0 {
            return Err(Error::invalid_argument(format!(
                "eta must be finite and positive, got {}",
                self.eta
            )));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::invalid_argument(format!(
                "alpha must be finite and nonnegative, got {}",
                self.alpha
            )));
        }
        if self.mix_mmd < 0.0 || self.mix_cos < 0.0 {
            return Err(Error::invalid_argument("mix weights must be nonnegative"));
        }
        if self.train_per_class == 0 || self.synth_per_class == 0 {
            return Err(Error::invalid_argument(
                "per-class sample counts must be at least 1",
            ));
        }
        if self.ntk_hidden.iter().any(|&w| w == 0) {
            return Err(Error::invalid_argument("hidden widths must be positive"));
        }
        if self.feat_dim == 0 || self.latent_dim == 0 || self.gen_source_classes == 0 {
            return Err(Error::invalid_argument(
                "feat_dim, latent_dim, and gen_source_classes must be positive",
            ));
        }
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            mode: self.loss_mode,
            alpha: self.alpha,
            mix_weights: (self.mix_mmd, self.mix_cos),
            allow_clean_target: false,
        }
    }

    pub fn optimizer(&self) -> Optimizer {
        if self.use_adam {
            Optimizer::adam_default()
        } else {
            Optimizer::GradientDescent
        }
    }
}

/// Optional view of every config field, for file and flag overlays.
/// Unknown keys are rejected so typos fail loudly.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub dataset: Option<String>,
    pub generator_ckpt: Option<PathBuf>,
    pub extractor_ckpt: Option<PathBuf>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    /// Clears any epsilon/delta picked up earlier in the overlay chain.
    pub no_privacy: Option<bool>,
    pub mode: Option<RunMode>,
    pub prompt_space: Option<PromptSpace>,
    pub kappa: Option<f64>,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub loss_mode: Option<LossMode>,
    pub mix_mmd: Option<f64>,
    pub mix_cos: Option<f64>,
    pub max_steps: Option<usize>,
    pub train_per_class: Option<usize>,
    pub synth_per_class: Option<usize>,
    pub ntk_hidden: Option<Vec<usize>>,
    pub activation: Option<Activation>,
    pub feat_dim: Option<usize>,
    pub latent_dim: Option<usize>,
    pub gen_source_classes: Option<usize>,
    pub use_adam: Option<bool>,
    pub fixed_latent_pool: Option<bool>,
    pub downstream: Option<DownstreamKind>,
    pub seed_init: Option<u64>,
    pub seed_noise: Option<u64>,
    pub seed_latents: Option<u64>,
    pub seed_mapping: Option<u64>,
    pub seed_downstream: Option<u64>,
    pub seed_data: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl PartialConfig {
    /// Parse the flat key-value config file format.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text)
            .map_err(|e| Error::invalid_argument(format!("bad config file: {e}")))
    }

    pub fn apply_to(&self, cfg: &mut ExperimentConfig) {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            };
        }
        set!(dataset);
        if self.generator_ckpt.is_some() {
            cfg.generator_ckpt = self.generator_ckpt.clone();
        }
        if self.extractor_ckpt.is_some() {
            cfg.extractor_ckpt = self.extractor_ckpt.clone();
        }
        if self.epsilon.is_some() {
            cfg.epsilon = self.epsilon;
        }
        if self.delta.is_some() {
            cfg.delta = self.delta;
        }
        if self.no_privacy == Some(true) {
            cfg.epsilon = None;
            cfg.delta = None;
        }
        set!(mode);
        set!(prompt_space);
        set!(kappa);
        set!(eta);
        set!(alpha);
        set!(loss_mode);
        set!(mix_mmd);
        set!(mix_cos);
        set!(max_steps);
        set!(train_per_class);
        set!(synth_per_class);
        set!(ntk_hidden);
        set!(activation);
        set!(feat_dim);
        set!(latent_dim);
        set!(gen_source_classes);
        set!(use_adam);
        set!(fixed_latent_pool);
        set!(downstream);
        if let Some(v) = self.seed_init {
            cfg.seeds.init = v;
        }
        if let Some(v) = self.seed_noise {
            cfg.seeds.noise = v;
        }
        if let Some(v) = self.seed_latents {
            cfg.seeds.latents = v;
        }
        if let Some(v) = self.seed_mapping {
            cfg.seeds.mapping = v;
        }
        if let Some(v) = self.seed_downstream {
            cfg.seeds.downstream = v;
        }
        if let Some(v) = self.seed_data {
            cfg.seeds.data = v;
        }
        if self.output_dir.is_some() {
            cfg.output_dir = self.output_dir.clone();
        }
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_are_non_private() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert!(!cfg.privacy_enabled());
        assert_eq!(cfg.kappa, 16.0);
        assert_eq!(cfg.eta, 1e-2);
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.loss_mode, LossMode::Mixed);
        assert_eq!((cfg.mix_mmd, cfg.mix_cos), (1.0, 1.0));
    }

    #[test]
    fn partial_budget_is_rejected() {
        let cfg = ExperimentConfig {
            epsilon: Some(1.0),
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            epsilon: Some(1.0),
            delta: Some(1e-5),
            ..ExperimentConfig::default()
        };
        cfg.validate().unwrap();
        assert!(cfg.privacy_enabled());
    }

    #[test]
    fn toml_overlay_overrides_selected_fields() {
        let text = r#"
            kappa = 4.0
            loss_mode = "cosine"
            epsilon = 1.0
            delta = 1e-5
            seed_latents = 99
            ntk_hidden = [64, 32]
        "#;
        let partial = PartialConfig::from_toml_str(text).unwrap();
        let mut cfg = ExperimentConfig::default();
        partial.apply_to(&mut cfg);
        assert_eq!(cfg.kappa, 4.0);
        assert_eq!(cfg.loss_mode, LossMode::Cosine);
        assert_eq!(cfg.epsilon, Some(1.0));
        assert_eq!(cfg.seeds.latents, 99);
        assert_eq!(cfg.ntk_hidden, vec![64, 32]);
        // Untouched fields keep their defaults.
        assert_eq!(cfg.eta, 1e-2);
    }

    #[test]
    fn no_privacy_flag_clears_budget() {
        let mut cfg = ExperimentConfig {
            epsilon: Some(10.0),
            delta: Some(1e-5),
            ..ExperimentConfig::default()
        };
        let partial = PartialConfig {
            no_privacy: Some(true),
            ..PartialConfig::default()
        };
        partial.apply_to(&mut cfg);
        assert!(!cfg.privacy_enabled());
    }

    #[test]
    fn unknown_config_keys_fail() {
        assert!(PartialConfig::from_toml_str("kapa = 2.0").is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig {
            epsilon: Some(0.1),
            delta: Some(1e-6),
            ntk_hidden: vec![128],
            ..ExperimentConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
