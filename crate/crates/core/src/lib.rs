//! Differentially private data synthesis by matching noisy mean
//! embeddings of neural tangent features.
//!
//! A sensitive dataset is summarized once as a label-conditioned mean
//! of unit-norm NTK features, released under the Gaussian mechanism,
//! and never touched again. Synthetic data is then produced by a frozen
//! generator whose outputs are steered toward the released summary,
//! either by training lightweight per-class prompts (added to features
//! or pixels) or by fitting a small generator directly. Everything
//! downstream of the single noisy release is post-processing.
//!
//! Layout:
//! - [`privacy`]: Gaussian-mechanism calibration and budget accounting.
//! - [`ntk`]: finite-width NTK feature maps with exact input adjoints.
//! - [`backbones`]: frozen generator / feature-extractor implementations
//!   and their checkpoint format.
//! - [`prompt`]: per-class prompt banks and the private-to-source label
//!   mapping.
//! - [`embedding`]: mean embeddings, their noisy release, and synthetic
//!   batch construction with prompt gradients.
//! - [`loss`]: matching losses between released and synthetic summaries.
//! - [`train`]: the single-release access guard and the two training
//!   loops (prompts, baseline generator).
//! - [`eval`]: synthetic dataset materialization and downstream
//!   classifiers.
//! - [`experiment`]: configuration, ingestion, the staged runner,
//!   sweeps, and result files.
//!
//! All randomness flows through [`seeds`]; there is no ambient RNG.

pub mod backbones;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod loss;
pub mod ntk;
pub mod privacy;
pub mod prompt;
pub mod seeds;
pub mod train;

pub use error::{Error, Result};
