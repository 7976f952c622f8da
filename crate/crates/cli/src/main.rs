//! `vpntk`: run, sweep, calibrate, and inspect experiments from the
//! command line. Flags mirror the config field names; a flat key=value
//! config file may supply any subset, with flags taking precedence.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use vpntk_core::eval::DownstreamKind;
use vpntk_core::experiment::{
    ablation_sweep, default_grid, results, run_experiment, ExperimentConfig, PartialConfig,
    RunMode, RunStatus, SweepParameter, SweepValue,
};
use vpntk_core::loss::LossMode;
use vpntk_core::ntk::Activation;
use vpntk_core::privacy::{
    calibrate_noise_multiplier, classical_noise_multiplier, embedding_sensitivity, PrivacyParams,
};
use vpntk_core::prompt::PromptSpace;

#[derive(Parser)]
#[command(name = "vpntk", version, about = "Private data synthesis via noisy NTK embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment end to end.
    Run(RunArgs),
    /// Sweep one hyperparameter over a grid with repeated seeds.
    Sweep(SweepArgs),
    /// Print the calibrated noise multiplier for a privacy budget.
    Calibrate(CalibrateArgs),
    /// Summarize a stored run record.
    Inspect(InspectArgs),
}

// ---------------------------------------------------------------------------
// Shared config flags

#[derive(Args, Default)]
struct ConfigFlags {
    /// Flat key=value config file; individual flags override its entries.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, value_name = "FILE")]
    generator_ckpt: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    extractor_ckpt: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Disable the privacy mechanism (overrides epsilon/delta from the file).
    #[arg(long)]
    no_privacy: bool,
    /// vp_ntk or dp_ntk_baseline.
    #[arg(long)]
    mode: Option<String>,
    /// feature or pixel.
    #[arg(long)]
    prompt_space: Option<String>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// mmd, cosine, or mixed.
    #[arg(long)]
    loss_mode: Option<String>,
    #[arg(long)]
    mix_mmd: Option<f64>,
    #[arg(long)]
    mix_cos: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long)]
    synth_per_class: Option<usize>,
    /// Comma-separated hidden widths, e.g. 512 or 256,128.
    #[arg(long, value_delimiter = ',')]
    ntk_hidden: Option<Vec<usize>>,
    /// relu or tanh.
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    feat_dim: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    gen_source_classes: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    use_adam: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    fixed_latent_pool: Option<bool>,
    /// logistic or mlp.
    #[arg(long)]
    downstream: Option<String>,
    #[arg(long)]
    seed_init: Option<u64>,
    #[arg(long)]
    seed_noise: Option<u64>,
    #[arg(long)]
    seed_latents: Option<u64>,
    #[arg(long)]
    seed_mapping: Option<u64>,
    #[arg(long)]
    seed_downstream: Option<u64>,
    #[arg(long)]
    seed_data: Option<u64>,
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
}

fn parse_opt<T: FromStr>(value: &Option<String>, what: &str) -> anyhow::Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match value {
        None => Ok(None),
        Some(s) => match s.parse() {
            Ok(v) => Ok(Some(v)),
            Err(e) => bail!("bad {what} '{s}': {e}"),
        },
    }
}

impl ConfigFlags {
    fn overlay(&self) -> anyhow::Result<PartialConfig> {
        Ok(PartialConfig {
            dataset: self.dataset.clone(),
            generator_ckpt: self.generator_ckpt.clone(),
            extractor_ckpt: self.extractor_ckpt.clone(),
            epsilon: self.epsilon,
            delta: self.delta,
            no_privacy: self.no_privacy.then_some(true),
            mode: parse_opt::<RunMode>(&self.mode, "mode")?,
            prompt_space: parse_opt::<PromptSpace>(&self.prompt_space, "prompt space")?,
            kappa: self.kappa,
            eta: self.eta,
            alpha: self.alpha,
            loss_mode: parse_opt::<LossMode>(&self.loss_mode, "loss mode")?,
            mix_mmd: self.mix_mmd,
            mix_cos: self.mix_cos,
            max_steps: self.max_steps,
            train_per_class: self.train_per_class,
            synth_per_class: self.synth_per_class,
            ntk_hidden: self.ntk_hidden.clone(),
            activation: parse_opt::<Activation>(&self.activation, "activation")?,
            feat_dim: self.feat_dim,
            latent_dim: self.latent_dim,
            gen_source_classes: self.gen_source_classes,
            use_adam: self.use_adam,
            fixed_latent_pool: self.fixed_latent_pool,
            downstream: parse_opt::<DownstreamKind>(&self.downstream, "downstream kind")?,
            seed_init: self.seed_init,
            seed_noise: self.seed_noise,
            seed_latents: self.seed_latents,
            seed_mapping: self.seed_mapping,
            seed_downstream: self.seed_downstream,
            seed_data: self.seed_data,
            output_dir: self.output_dir.clone(),
        })
    }

    fn build(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("could not read config file {}", path.display()))?;
            PartialConfig::from_toml_str(&text)?.apply_to(&mut cfg);
        }
        self.overlay()?.apply_to(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

// ---------------------------------------------------------------------------
// Verbs

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    flags: ConfigFlags,
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let cfg = args.flags.build()?;
    let record = run_experiment(&cfg)?;
    match &record.privacy {
        Some(p) if p.private => println!(
            "privacy: epsilon={} delta={} sigma={:.12}",
            p.epsilon.unwrap_or(f64::NAN),
            p.delta.unwrap_or(f64::NAN),
            p.sigma
        ),
        _ => println!("privacy: disabled"),
    }
    if let Some(last) = record.loss_trace.last() {
        println!("steps: {}  final loss: {last:.6e}", record.loss_trace.len());
    }
    if let Some(acc) = record.accuracy {
        println!("accuracy: {acc:.4}");
    }
    for artifact in &record.artifacts {
        println!("wrote: {artifact}");
    }
    Ok(())
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    /// kappa, eta, alpha, or loss_mode.
    #[arg(long)]
    parameter: String,
    /// Comma-separated grid values; defaults to the standard grid.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<String>>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

fn parse_grid(parameter: SweepParameter, raw: &[String]) -> anyhow::Result<Vec<SweepValue>> {
    raw.iter()
        .map(|s| match parameter {
            SweepParameter::LossMode => Ok(SweepValue::Mode(s.parse::<LossMode>()?)),
            _ => s
                .parse::<f64>()
                .map(SweepValue::Real)
                .with_context(|| format!("bad grid value '{s}'")),
        })
        .collect()
}

fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let cfg = args.flags.build()?;
    let parameter: SweepParameter = args.parameter.parse()?;
    let grid = match &args.values {
        Some(raw) => parse_grid(parameter, raw)?,
        None => default_grid(parameter),
    };
    let result = ablation_sweep(&cfg, parameter, &grid, args.repeats)?;
    print!("{}", results::ablation_table_text(&result));
    if let Some(dir) = &args.flags.output_dir {
        std::fs::create_dir_all(dir)?;
        let jsonl = dir.join("ablation.jsonl");
        let table = dir.join("ablation.txt");
        results::write_ablation_jsonl(&result, &jsonl)?;
        results::write_ablation_table(&result, &table)?;
        println!("wrote: {}", jsonl.display());
        println!("wrote: {}", table.display());
    }
    Ok(())
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    delta: f64,
    /// Dataset size; adds sensitivity and per-entry noise std to the output.
    #[arg(long)]
    m: Option<usize>,
}

fn cmd_calibrate(args: &CalibrateArgs) -> anyhow::Result<()> {
    let sigma = calibrate_noise_multiplier(args.epsilon, args.delta)?;
    println!("sigma: {sigma:.12}");
    if args.epsilon <= 1.0 {
        println!(
            "classical bound: {:.12}",
            classical_noise_multiplier(args.epsilon, args.delta)?
        );
    }
    if let Some(m) = args.m {
        let params = PrivacyParams::calibrated(args.epsilon, args.delta, m)?;
        println!("sensitivity: {:.12}  (m = {m})", embedding_sensitivity(m)?);
        println!("noise std: {:.12}", params.noise_std());
    }
    Ok(())
}

#[derive(Args)]
struct InspectArgs {
    /// Path to a stored run record (run.json or run.failed.json).
    record: PathBuf,
}

fn cmd_inspect(args: &InspectArgs) -> anyhow::Result<()> {
    let record = vpntk_core::experiment::read_record(&args.record)?;
    println!("schema: {}", record.schema);
    match &record.status {
        RunStatus::Ok => println!("status: ok"),
        RunStatus::Failed { stage, message } => println!("status: failed at {stage}: {message}"),
    }
    let cfg = &record.config;
    println!(
        "config: mode={} dataset={} space={} kappa={} eta={} alpha={} loss={} steps={}",
        cfg.mode, cfg.dataset, cfg.prompt_space, cfg.kappa, cfg.eta, cfg.alpha, cfg.loss_mode,
        cfg.max_steps
    );
    match &record.privacy {
        Some(p) if p.private => println!(
            "privacy: epsilon={} delta={} sigma={:.6} reads={}",
            p.epsilon.unwrap_or(f64::NAN),
            p.delta.unwrap_or(f64::NAN),
            p.sigma,
            p.private_read_count
        ),
        Some(p) => println!("privacy: disabled reads={}", p.private_read_count),
        None => println!("privacy: not reached"),
    }
    if let Some(last) = record.loss_trace.last() {
        println!(
            "loss: first={:.6e} last={:.6e} over {} steps",
            record.loss_trace[0],
            last,
            record.loss_trace.len()
        );
    }
    match record.accuracy {
        Some(acc) => println!("accuracy: {acc:.4}"),
        None => println!("accuracy: none"),
    }
    let stages: Vec<&str> = record.stage_marks.iter().map(|m| m.stage.as_str()).collect();
    println!("stages: {}", stages.join(" -> "));
    println!("wall clock: {} ms", record.wall_clock_ms);
    for artifact in &record.artifacts {
        println!("artifact: {artifact}");
    }
    Ok(())
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Inspect(args) => cmd_inspect(args),
    };
    match outcome {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
