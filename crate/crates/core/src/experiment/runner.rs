//! One experiment, end to end: ingest, backbones, label mapping,
//! calibration, the single private release, training, synthesis,
//! downstream evaluation, persistence.
//!
//! The stage order is load-bearing: the label mapping is built before
//! the private release (it must not depend on private data), and the
//! release happens exactly once behind the access guard. Stage marks
//! record the order so tests can assert it from the written record.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backbones::{
    load_extractor, load_generator, save_linear_generator, save_prompts, FeatureExtract,
    FeaturePath, Generator, LinearGenerator, ToyExtractor, ToyGenerator,
};
use crate::error::{Error, Result, Stage};
use crate::eval::{
    evaluate_accuracy, synthesize_dataset, train_downstream, DownstreamOptions,
};
use crate::experiment::config::{ExperimentConfig, RunMode};
use crate::experiment::dataset::ingest_dataset;
use crate::ntk::{build_feature_map, NtkConfig};
use crate::privacy::PrivacyParams;
use crate::prompt::{random_label_mapping, LabelMapping, PromptBank, PromptSpace};
use crate::seeds;
use crate::train::{
    release_private_embedding, train_generator_dpntk, train_prompts, AccessGuard,
    PrivateSet, TrainOptions,
};

pub const RECORD_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub private: bool,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub sigma: f64,
    pub sensitivity: f64,
    pub m: usize,
    pub private_read_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMark {
    pub stage: String,
    pub seq: usize,
    pub millis: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed { stage: String, message: String },
}

/// Frozen-backbone digests taken before and after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ChecksumReport {
    pub generator_before: Option<String>,
    pub generator_after: Option<String>,
    pub extractor_before: Option<String>,
    pub extractor_after: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: u32,
    pub status: RunStatus,
    pub config: ExperimentConfig,
    pub privacy: Option<PrivacyReport>,
    pub loss_trace: Vec<f64>,
    pub accuracy: Option<f64>,
    pub stage_marks: Vec<StageMark>,
    pub checksums: ChecksumReport,
    pub wall_clock_ms: u64,
    pub artifacts: Vec<String>,
}

impl RunRecord {
    fn skeleton(config: &ExperimentConfig) -> Self {
        RunRecord {
            schema: RECORD_SCHEMA,
            status: RunStatus::Ok,
            config: config.clone(),
            privacy: None,
            loss_trace: Vec::new(),
            accuracy: None,
            stage_marks: Vec::new(),
            checksums: ChecksumReport::default(),
            wall_clock_ms: 0,
            artifacts: Vec::new(),
        }
    }

    /// Position of a stage in the recorded order, if it was reached.
    pub fn stage_seq(&self, stage: &str) -> Option<usize> {
        self.stage_marks
            .iter()
            .find(|m| m.stage == stage)
            .map(|m| m.seq)
    }
}

/// Fields a replay must reproduce: everything numeric that is not a
/// timing. Loss traces compare entrywise within `tol`.
pub fn records_numerically_equal(a: &RunRecord, b: &RunRecord, tol: f64) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= tol;
    if a.loss_trace.len() != b.loss_trace.len() {
        return false;
    }
    if !a
        .loss_trace
        .iter()
        .zip(&b.loss_trace)
        .all(|(&x, &y)| close(x, y))
    {
        return false;
    }
    match (a.accuracy, b.accuracy) {
        (Some(x), Some(y)) if close(x, y) => {}
        (None, None) => {}
        _ => return false,
    }
    match (&a.privacy, &b.privacy) {
        (Some(x), Some(y)) => {
            x.private == y.private
                && x.sigma == y.sigma
                && x.m == y.m
                && x.private_read_count == y.private_read_count
        }
        (None, None) => true,
        _ => false,
    }
}

struct Marker {
    t0: Instant,
    marks: Vec<StageMark>,
}

impl Marker {
    fn new() -> Self {
        Marker {
            t0: Instant::now(),
            marks: Vec::new(),
        }
    }

    /// Record a stage as completed, in execution order.
    fn done(&mut self, stage: Stage) {
        self.marks.push(StageMark {
            stage: stage.to_string(),
            seq: self.marks.len(),
            millis: self.t0.elapsed().as_millis() as u64,
        });
    }
}

enum FrozenGen {
    Toy(ToyGenerator),
    Loaded(Box<dyn Generator>),
}

impl FrozenGen {
    fn as_dyn(&self) -> &dyn Generator {
        match self {
            FrozenGen::Toy(g) => g,
            FrozenGen::Loaded(g) => g.as_ref(),
        }
    }
}

/// Run one configured experiment. On success the record is persisted to
/// `output_dir` (when set) as `run.json` plus trained checkpoints; on
/// failure a partial record lands there as `run.failed.json` and the
/// error propagates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let mut record = RunRecord::skeleton(cfg);
    let mut marker = Marker::new();
    let outcome = run_stages(cfg, &mut record, &mut marker).and_then(|trained| {
        persist_checkpoints(cfg, &mut record, &trained).map_err(|e| e.at_stage(Stage::Persist))?;
        marker.done(Stage::Persist);
        Ok(())
    });
    // The record is finalized before it is written, so the disk copy and
    // the returned copy agree byte for byte.
    record.stage_marks = marker.marks;
    record.wall_clock_ms = marker.t0.elapsed().as_millis() as u64;
    let outcome = outcome.and_then(|()| {
        record.status = RunStatus::Ok;
        if let Some(dir) = &cfg.output_dir {
            persist_record(dir, &mut record, false).map_err(|e| e.at_stage(Stage::Persist))?;
        }
        Ok(())
    });
    match outcome {
        Ok(()) => Ok(record),
        Err(err) => {
            let stage = err
                .stage()
                .map(|s| s.to_string())
                .unwrap_or_else(|| "config".into());
            record.status = RunStatus::Failed {
                stage,
                message: err.to_string(),
            };
            if let Some(dir) = &cfg.output_dir {
                // Best effort: the original error stays primary.
                if let Err(flush_err) = persist_record(dir, &mut record, true) {
                    eprintln!("could not flush failed run record: {flush_err}");
                }
            }
            Err(err)
        }
    }
}

/// Rerun a record's configuration without persisting anything.
pub fn replay(record: &RunRecord) -> Result<RunRecord> {
    let mut cfg = record.config.clone();
    cfg.output_dir = None;
    run_experiment(&cfg)
}

fn run_stages(
    cfg: &ExperimentConfig,
    record: &mut RunRecord,
    marker: &mut Marker,
) -> Result<Trained> {
    cfg.validate()?;

    // -- ingest -------------------------------------------------------------
    let (train_set, test_set, _report) = ingest_dataset(&cfg.dataset, cfg.seeds.data)
        .map_err(|e| e.at_stage(Stage::Ingest))?;
    let shape = train_set.shape;
    let num_classes = train_set.num_classes;
    marker.done(Stage::Ingest);

    // -- backbones ----------------------------------------------------------
    let stage = Stage::Backbones;
    let vp_mode = cfg.mode == RunMode::VpNtk;
    let generator: Option<FrozenGen> = if vp_mode {
        Some(match &cfg.generator_ckpt {
            Some(path) => FrozenGen::Loaded(load_generator(path).map_err(|e| e.at_stage(stage))?),
            None => FrozenGen::Toy(
                ToyGenerator::new(
                    cfg.latent_dim,
                    cfg.gen_source_classes,
                    shape,
                    seeds::derive(cfg.seeds.init, "generator"),
                )
                .map_err(|e| e.at_stage(stage))?,
            ),
        })
    } else {
        None
    };
    let needs_extractor = vp_mode && cfg.prompt_space == PromptSpace::Feature;
    let extractor: Option<ToyExtractor> = if needs_extractor {
        Some(match &cfg.extractor_ckpt {
            Some(path) => load_extractor(path).map_err(|e| e.at_stage(stage))?,
            None => ToyExtractor::new(shape, cfg.feat_dim, seeds::derive(cfg.seeds.init, "extractor"))
                .map_err(|e| e.at_stage(stage))?,
        })
    } else {
        None
    };
    if let Some(g) = &generator {
        if g.as_dyn().image_shape() != shape {
            return Err(Error::invalid_argument(format!(
                "generator emits {} images but the dataset is {shape}",
                g.as_dyn().image_shape()
            ))
            .at_stage(stage));
        }
    }
    if let Some(fe) = &extractor {
        if fe.image_shape() != shape {
            return Err(Error::invalid_argument(format!(
                "extractor expects {} images but the dataset is {shape}",
                fe.image_shape()
            ))
            .at_stage(stage));
        }
    }
    let raw_dim = match (&extractor, cfg.prompt_space) {
        (Some(fe), PromptSpace::Feature) => fe.feat_dim(),
        _ => shape.pixel_count(),
    };
    let featmap = build_feature_map(&NtkConfig {
        input_dim: raw_dim,
        hidden_widths: cfg.ntk_hidden.clone(),
        output_dim: 1,
        init_seed: seeds::derive(cfg.seeds.init, "ntk"),
        activation: cfg.activation,
    })
    .map_err(|e| e.at_stage(stage))?;
    let feature_path = match &extractor {
        Some(fe) => FeaturePath::Extracted(fe),
        None => FeaturePath::Flattened(shape),
    };
    record.checksums.generator_before = generator.as_ref().map(|g| g.as_dyn().params_checksum());
    record.checksums.extractor_before = extractor.as_ref().map(|fe| fe.params_checksum());
    marker.done(Stage::Backbones);

    // -- label mapping (fixed before any private access) --------------------
    let mapping = if vp_mode {
        let sources = generator
            .as_ref()
            .map(|g| g.as_dyn().num_source_classes())
            .unwrap_or(num_classes);
        random_label_mapping(num_classes, sources, cfg.seeds.mapping)
            .map_err(|e| e.at_stage(Stage::Mapping))?
    } else {
        LabelMapping::identity(num_classes)
    };
    marker.done(Stage::Mapping);

    // -- calibrate ----------------------------------------------------------
    let privacy = if cfg.privacy_enabled() {
        PrivacyParams::calibrated(cfg.epsilon.unwrap(), cfg.delta.unwrap(), train_set.len())
    } else {
        PrivacyParams::disabled(train_set.len())
    }
    .map_err(|e| e.at_stage(Stage::Calibrate))?;
    marker.done(Stage::Calibrate);

    // -- release ------------------------------------------------------------
    let mut guard = AccessGuard::new();
    let released = release_private_embedding(
        &PrivateSet {
            images: &train_set.images,
            labels: &train_set.labels,
            num_classes,
        },
        &feature_path,
        &featmap,
        &privacy,
        cfg.seeds.noise,
        &mut guard,
    )
    .map_err(|e| e.at_stage(Stage::Release))?;
    record.privacy = Some(PrivacyReport {
        private: privacy.is_private(),
        epsilon: cfg.epsilon,
        delta: cfg.delta,
        sigma: privacy.sigma,
        sensitivity: privacy.sensitivity,
        m: privacy.m,
        private_read_count: guard.private_read_count(),
    });
    marker.done(Stage::Release);

    // -- train --------------------------------------------------------------
    let opts = TrainOptions {
        eta: cfg.eta,
        max_steps: cfg.max_steps,
        per_class: cfg.train_per_class,
        loss: cfg.loss_config(),
        latents_seed: cfg.seeds.latents,
        fixed_latent_pool: cfg.fixed_latent_pool,
        optimizer: cfg.optimizer(),
    };
    let mut trained_bank: Option<PromptBank> = None;
    let mut trained_gen: Option<LinearGenerator> = None;
    match cfg.mode {
        RunMode::VpNtk => {
            let gen = generator.as_ref().expect("vp_ntk builds a generator");
            let bank = PromptBank::init(
                num_classes,
                raw_dim,
                cfg.prompt_space,
                cfg.kappa,
                seeds::derive(cfg.seeds.init, "prompts"),
            )
            .map_err(|e| e.at_stage(Stage::Train))?;
            let (bank, state) = train_prompts(
                &opts,
                &released,
                gen.as_dyn(),
                &feature_path,
                &mapping,
                &featmap,
                bank,
            )
            .map_err(|e| e.at_stage(Stage::Train))?;
            record.loss_trace = state.loss_trace;
            trained_bank = Some(bank);
        }
        RunMode::DpNtkBaseline => {
            let student = LinearGenerator::new(
                cfg.latent_dim,
                num_classes,
                shape,
                seeds::derive(cfg.seeds.init, "baseline_generator"),
            )
            .map_err(|e| e.at_stage(Stage::Train))?;
            let (student, state) = train_generator_dpntk(&opts, &released, student, &featmap)
                .map_err(|e| e.at_stage(Stage::Train))?;
            record.loss_trace = state.loss_trace;
            trained_gen = Some(student);
        }
    }
    record.checksums.generator_after = generator.as_ref().map(|g| g.as_dyn().params_checksum());
    record.checksums.extractor_after = extractor.as_ref().map(|fe| fe.params_checksum());
    if record.checksums.generator_before != record.checksums.generator_after
        || record.checksums.extractor_before != record.checksums.extractor_after
    {
        return Err(Error::InvalidState(
            "frozen backbone parameters changed during training".into(),
        )
        .at_stage(Stage::Train));
    }
    marker.done(Stage::Train);

    // -- synthesize ---------------------------------------------------------
    let synth_seed = seeds::derive(cfg.seeds.latents, "synthesize");
    let flat_path = FeaturePath::Flattened(shape);
    let synthetic = match cfg.mode {
        RunMode::VpNtk => synthesize_dataset(
            generator.as_ref().unwrap().as_dyn(),
            trained_bank.as_ref().unwrap(),
            &mapping,
            &feature_path,
            cfg.synth_per_class,
            synth_seed,
        ),
        RunMode::DpNtkBaseline => {
            PromptBank::zeros(num_classes, shape.pixel_count(), PromptSpace::Pixel, 0.0).and_then(
                |zero_bank| {
                    synthesize_dataset(
                        trained_gen.as_ref().unwrap(),
                        &zero_bank,
                        &mapping,
                        &flat_path,
                        cfg.synth_per_class,
                        synth_seed,
                    )
                },
            )
        }
    }
    .map_err(|e| e.at_stage(Stage::Synthesize))?;
    marker.done(Stage::Synthesize);

    // -- downstream ---------------------------------------------------------
    let eval_path = match cfg.mode {
        RunMode::VpNtk => &feature_path,
        RunMode::DpNtkBaseline => &flat_path,
    };
    let downstream_opts = DownstreamOptions {
        kind: cfg.downstream,
        ..DownstreamOptions::default()
    };
    let model = train_downstream(&synthetic, cfg.seeds.downstream, &downstream_opts)
        .map_err(|e| e.at_stage(Stage::Downstream))?;
    let mut test_payloads = Vec::with_capacity(test_set.len());
    for image in &test_set.images {
        test_payloads.push(
            eval_path
                .compute(image)
                .map_err(|e| e.at_stage(Stage::Downstream))?,
        );
    }
    let accuracy = evaluate_accuracy(&model, &test_payloads, &test_set.labels)
        .map_err(|e| e.at_stage(Stage::Downstream))?;
    record.accuracy = Some(accuracy);
    marker.done(Stage::Downstream);

    Ok(Trained {
        bank: trained_bank,
        generator: trained_gen,
    })
}

/// What training produced; persisted as checkpoints when requested.
struct Trained {
    bank: Option<PromptBank>,
    generator: Option<LinearGenerator>,
}

fn persist_checkpoints(
    cfg: &ExperimentConfig,
    record: &mut RunRecord,
    trained: &Trained,
) -> Result<()> {
    let Some(dir) = &cfg.output_dir else {
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    if let Some(bank) = &trained.bank {
        let path = dir.join("prompts.ckpt");
        save_prompts(&path, bank)?;
        record.artifacts.push(path.display().to_string());
    }
    if let Some(gen) = &trained.generator {
        let path = dir.join("generator.ckpt");
        save_linear_generator(&path, gen)?;
        record.artifacts.push(path.display().to_string());
    }
    Ok(())
}

/// Write the record itself; the file name is the failure marker.
fn persist_record(dir: &Path, record: &mut RunRecord, failed: bool) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let name = if failed { "run.failed.json" } else { "run.json" };
    let path = dir.join(name);
    record.artifacts.push(path.display().to_string());
    let mut text = serde_json::to_string_pretty(record)
        .map_err(|e| Error::InvalidState(format!("could not serialize run record: {e}")))?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Parse a previously persisted record.
pub fn read_record(path: &Path) -> Result<RunRecord> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidState(format!("bad run record {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
