//! One-parameter ablation sweeps: rerun the pipeline over a value grid
//! with per-repeat derived seeds and aggregate accuracies per cell.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::config::{ExperimentConfig, SeedSet};
use crate::experiment::runner::run_experiment;
use crate::loss::LossMode;
use crate::seeds;

pub const MIN_REPEATS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Kappa,
    Eta,
    Alpha,
    LossMode,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SweepParameter::Kappa => "kappa",
            SweepParameter::Eta => "eta",
            SweepParameter::Alpha => "alpha",
            SweepParameter::LossMode => "loss_mode",
        };
        f.write_str(name)
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kappa" => Ok(SweepParameter::Kappa),
            "eta" => Ok(SweepParameter::Eta),
            "alpha" => Ok(SweepParameter::Alpha),
            "loss_mode" | "loss" => Ok(SweepParameter::LossMode),
            other => Err(Error::invalid_argument(format!(
                "unknown sweep parameter '{other}' (expected kappa, eta, alpha, or loss_mode)"
            ))),
        }
    }
}

/// A grid point. Untagged so numbers stay numbers in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Mode(LossMode),
    Real(f64),
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Real(v) => write!(f, "{v}"),
            SweepValue::Mode(m) => write!(f, "{m}"),
        }
    }
}

/// The grids used throughout the experiments.
pub fn default_grid(parameter: SweepParameter) -> Vec<SweepValue> {
    match parameter {
        SweepParameter::Kappa => [2.0, 4.0, 8.0, 16.0, 32.0]
            .into_iter()
            .map(SweepValue::Real)
            .collect(),
        SweepParameter::Eta => [1e-5, 1e-4, 1e-3, 1e-2, 0.1, 1.0]
            .into_iter()
            .map(SweepValue::Real)
            .collect(),
        SweepParameter::Alpha => [0.01, 0.05, 0.1, 1.0]
            .into_iter()
            .map(SweepValue::Real)
            .collect(),
        SweepParameter::LossMode => vec![
            SweepValue::Mode(LossMode::Mmd),
            SweepValue::Mode(LossMode::Mixed),
            SweepValue::Mode(LossMode::Cosine),
        ],
    }
}

fn apply_value(
    cfg: &mut ExperimentConfig,
    parameter: SweepParameter,
    value: SweepValue,
) -> Result<()> {
    match (parameter, value) {
        (SweepParameter::Kappa, SweepValue::Real(v)) => cfg.kappa = v,
        (SweepParameter::Eta, SweepValue::Real(v)) => cfg.eta = v,
        (SweepParameter::Alpha, SweepValue::Real(v)) => cfg.alpha = v,
        (SweepParameter::LossMode, SweepValue::Mode(m)) => cfg.loss_mode = m,
        (p, v) => {
            return Err(Error::invalid_argument(format!(
                "value {v} has the wrong type for sweep parameter {p}"
            )))
        }
    }
    Ok(())
}

/// Seeds for repeat `r`: every named stream, derived independently.
pub fn repeat_seeds(base: &SeedSet, repeat: u64) -> SeedSet {
    let shift = |seed: u64| seeds::derive_indexed(seed, "repeat", repeat);
    SeedSet {
        init: shift(base.init),
        noise: shift(base.noise),
        latents: shift(base.latents),
        mapping: shift(base.mapping),
        downstream: shift(base.downstream),
        data: shift(base.data),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: SweepValue,
    /// Seed sets actually used, one per attempted repeat.
    pub seeds: Vec<SeedSet>,
    /// Downstream accuracies of the repeats that completed.
    pub accuracies: Vec<f64>,
    /// Messages from repeats that failed; the sweep continues past them.
    pub failures: Vec<String>,
    pub mean: Option<f64>,
    /// Sample standard deviation; 0 when only one repeat completed.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub parameter: SweepParameter,
    pub repeats: usize,
    pub cells: Vec<SweepCell>,
}

fn summarize(accuracies: &[f64]) -> (Option<f64>, Option<f64>) {
    match accuracies.len() {
        0 => (None, None),
        1 => (Some(accuracies[0]), Some(0.0)),
        n => {
            let mean = accuracies.iter().sum::<f64>() / n as f64;
            let var = accuracies
                .iter()
                .map(|a| (a - mean) * (a - mean))
                .sum::<f64>()
                / (n - 1) as f64;
            (Some(mean), Some(var.sqrt()))
        }
    }
}

/// Run `repeats` pipelines per grid value, varying only the swept
/// parameter and the derived seeds. Failed repeats are recorded in the
/// cell, not propagated.
pub fn ablation_sweep(
    base: &ExperimentConfig,
    parameter: SweepParameter,
    grid: &[SweepValue],
    repeats: usize,
) -> Result<AblationResult> {
    if repeats < MIN_REPEATS {
        return Err(Error::invalid_argument(format!(
            "at least {MIN_REPEATS} repeats per cell are required, got {repeats}"
        )));
    }
    if grid.is_empty() {
        return Err(Error::invalid_argument("sweep grid is empty"));
    }
    let mut cells = Vec::with_capacity(grid.len());
    for &value in grid {
        let mut cell = SweepCell {
            value,
            seeds: Vec::with_capacity(repeats),
            accuracies: Vec::new(),
            failures: Vec::new(),
            mean: None,
            std: None,
        };
        for repeat in 0..repeats {
            let mut cfg = base.clone();
            cfg.output_dir = None;
            apply_value(&mut cfg, parameter, value)?;
            cfg.seeds = repeat_seeds(&base.seeds, repeat as u64);
            cell.seeds.push(cfg.seeds.clone());
            match run_experiment(&cfg) {
                Ok(record) => {
                    let accuracy = record.accuracy.ok_or_else(|| {
                        Error::InvalidState("completed run has no accuracy".into())
                    })?;
                    cell.accuracies.push(accuracy);
                }
                Err(e) => cell.failures.push(format!("repeat {repeat}: {e}")),
            }
        }
        let (mean, std) = summarize(&cell.accuracies);
        cell.mean = mean;
        cell.std = std;
        cells.push(cell);
    }
    Ok(AblationResult {
        parameter,
        repeats,
        cells,
    })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn light() -> ExperimentConfig {
        ExperimentConfig {
            max_steps: 5,
            train_per_class: 4,
            synth_per_class: 10,
            ntk_hidden: vec![16],
            feat_dim: 8,
            latent_dim: 4,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_cell_sweep_matches_standalone_runs() {
        let base = light();
        let grid = [SweepValue::Real(base.kappa)];
        let result = ablation_sweep(&base, SweepParameter::Kappa, &grid, 3).unwrap();
        assert_eq!(result.cells.len(), 1);
        let cell = &result.cells[0];
        assert!(cell.failures.is_empty());
        assert_eq!(cell.accuracies.len(), 3);
        for (repeat, &acc) in cell.accuracies.iter().enumerate() {
            let mut cfg = base.clone();
            cfg.seeds = repeat_seeds(&base.seeds, repeat as u64);
            let record = run_experiment(&cfg).unwrap();
            assert_eq!(record.accuracy.unwrap(), acc);
        }
        let mean = cell.accuracies.iter().sum::<f64>() / 3.0;
        assert!((cell.mean.unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn cells_echo_grid_values_in_order() {
        let grid = default_grid(SweepParameter::LossMode);
        assert_eq!(grid.len(), 3);
        assert_eq!(default_grid(SweepParameter::Kappa).len(), 5);
        assert_eq!(default_grid(SweepParameter::Eta).len(), 6);
        assert_eq!(default_grid(SweepParameter::Alpha).len(), 4);
    }

    #[test]
    fn wrong_value_type_is_rejected() {
        let base = light();
        let grid = [SweepValue::Mode(LossMode::Mmd)];
        let err = ablation_sweep(&base, SweepParameter::Kappa, &grid, 3).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn too_few_repeats_rejected() {
        let base = light();
        let grid = [SweepValue::Real(8.0)];
        assert!(ablation_sweep(&base, SweepParameter::Kappa, &grid, 2).is_err());
    }

    #[test]
    fn failed_cells_are_recorded_and_sweep_continues() {
        let base = light();
        // The first value diverges almost immediately; the second is fine.
        let grid = [SweepValue::Real(1e200), SweepValue::Real(1e-2)];
        let result = ablation_sweep(&base, SweepParameter::Eta, &grid, 3).unwrap();
        assert_eq!(result.cells.len(), 2);
        assert_eq!(result.cells[0].accuracies.len(), 0);
        assert_eq!(result.cells[0].failures.len(), 3);
        assert!(result.cells[0].mean.is_none());
        assert_eq!(result.cells[1].accuracies.len(), 3);
        assert!(result.cells[1].failures.is_empty());
    }

    #[test]
    fn sweep_is_deterministic() {
        let base = light();
        let grid = [SweepValue::Real(4.0)];
        let a = ablation_sweep(&base, SweepParameter::Kappa, &grid, 3).unwrap();
        let b = ablation_sweep(&base, SweepParameter::Kappa, &grid, 3).unwrap();
        assert_eq!(a, b);
    }
}
