//! Optimization against the released embedding, and the release itself.
//!
//! The privacy structure lives here. `release_private_embedding` makes
//! exactly one pass over the private records, perturbs the result, and
//! seals the guard; everything after that point is post-processing of
//! the released matrix. The guard is the runtime witness: any attempt
//! at a second pass errors out, and every end-to-end run asserts
//! `private_read_count == 1` at the end.
//!
//! `train_prompts` updates only the prompt rows (backbones stay
//! frozen); `train_generator_dpntk` is the no-prompt baseline that
//! fits a small trainable generator to the released embedding by
//! squared-Frobenius matching alone.

use ndarray::Array3;

use crate::backbones::{FeaturePath, Generator, LinearGenGrads, LinearGenerator};
use crate::embedding::{
    synthetic_batch, LabelPlan, MeanEmbedding, SynthesisPipeline,
};
use crate::error::{Error, Result};
use crate::loss::{loss_grad_wrt_synth, prompt_penalty, LossConfig, LossMode};
use crate::ntk::NtkFeatureMap;
use crate::privacy::PrivacyParams;
use crate::prompt::{LabelMapping, PromptBank};
use crate::seeds;

// ---------------------------------------------------------------------------
// access guard

/// Runtime witness of the single-release structure.
#[derive(Debug, Default)]
pub struct AccessGuard {
    private_read_count: usize,
    sealed: bool,
}

impl AccessGuard {
    pub fn new() -> Self {
        AccessGuard::default()
    }

    pub fn private_read_count(&self) -> usize {
        self.private_read_count
    }

    pub fn sealed(&self) -> bool {
        self.sealed
    }

    /// Start the one permitted pass. Fails forever after sealing.
    fn begin_read(&mut self) -> Result<()> {
        if self.sealed {
            return Err(Error::PrivacyViolation(format!(
                "private data read attempted after the release was sealed \
                 (read count {})",
                self.private_read_count
            )));
        }
        self.private_read_count += 1;
        self.sealed = true;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// release

/// Private records as raw images plus class labels.
pub struct PrivateSet<'a> {
    pub images: &'a [Array3<f64>],
    pub labels: &'a [usize],
    pub num_classes: usize,
}

/// The one private touch: extract features, average into the mean
/// embedding, perturb, seal. The clean embedding is moved into the
/// perturbation and not retained.
pub fn release_private_embedding(
    data: &PrivateSet<'_>,
    feature_path: &FeaturePath<'_>,
    featmap: &NtkFeatureMap,
    privacy: &PrivacyParams,
    noise_seed: u64,
    guard: &mut AccessGuard,
) -> Result<MeanEmbedding> {
    guard.begin_read()?;
    if data.images.is_empty() {
        return Err(Error::invalid_argument("private dataset is empty"));
    }
    if data.images.len() != data.labels.len() {
        return Err(Error::invalid_argument(format!(
            "{} images but {} labels",
            data.images.len(),
            data.labels.len()
        )));
    }
    if privacy.m != data.images.len() {
        return Err(Error::invalid_argument(format!(
            "privacy parameters calibrated for m = {} but dataset has {} records",
            privacy.m,
            data.images.len()
        )));
    }
    let mut features = Vec::with_capacity(data.images.len());
    for image in data.images {
        let raw = feature_path.compute(image)?;
        features.push(featmap.feature(&raw)?);
    }
    let clean = crate::embedding::true_mean_embedding(&features, data.labels, data.num_classes)?;
    crate::embedding::perturb_embedding(clean, privacy.sigma, privacy.m, noise_seed)
}

// ---------------------------------------------------------------------------
// optimization

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Plain gradient descent with step size eta.
    GradientDescent,
    /// Adaptive moments, for larger runs.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam_default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub eta: f64,
    pub max_steps: usize,
    /// Synthetic samples per class per step.
    pub per_class: usize,
    pub loss: LossConfig,
    pub latents_seed: u64,
    /// Reuse one latent pool every step instead of resampling.
    pub fixed_latent_pool: bool,
    pub optimizer: Optimizer,
}

impl TrainOptions {
    fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta <= 0.0 {
            return Err(Error::invalid_argument(format!(
                "eta must be finite and positive, got {}",
                self.eta
            )));
        }
        if self.per_class == 0 {
            return Err(Error::invalid_argument(
                "need at least one synthetic sample per class",
            ));
        }
        Ok(())
    }

    fn step_seed(&self, step: usize) -> u64 {
        if self.fixed_latent_pool {
            self.latents_seed
        } else {
            seeds::derive_indexed(self.latents_seed, "step", step as u64)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Steps executed; equals `loss_trace.len()`.
    pub step: usize,
    /// Loss at the parameters the step started from.
    pub loss_trace: Vec<f64>,
    pub eta: f64,
    pub max_steps: usize,
    pub rng_seed: u64,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One update over a flat view of parameters and gradients.
    fn apply<'a>(
        &mut self,
        params: impl Iterator<Item = &'a mut f64>,
        grads: impl Iterator<Item = &'a f64>,
        eta: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) {
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, (p, &g)) in params.zip(grads).enumerate() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            *p -= eta * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Guard against runaway optimization: the loss at the start of every
/// step must be finite.
fn check_finite(loss: f64, step: usize, eta: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            step,
            eta,
            detail: format!("loss became {loss}"),
        })
    }
}

/// Gradient descent on the prompt rows against the released embedding.
/// Backbones, feature map, and label mapping are read-only throughout.
pub fn train_prompts(
    opts: &TrainOptions,
    target: &MeanEmbedding,
    generator: &dyn Generator,
    feature_path: &FeaturePath<'_>,
    mapping: &LabelMapping,
    featmap: &NtkFeatureMap,
    bank: PromptBank,
) -> Result<(PromptBank, TrainState)> {
    opts.validate()?;
    let num_classes = target.num_classes();
    let plan = LabelPlan::balanced(opts.per_class, num_classes);
    let mut bank = bank;
    let mut trace = Vec::with_capacity(opts.max_steps);
    let mut adam = AdamState::new(bank.prompts.len());
    for step in 0..opts.max_steps {
        let batch = {
            let pipeline = SynthesisPipeline {
                generator,
                feature_path,
                bank: &bank,
                mapping,
                featmap,
            };
            synthetic_batch(&pipeline, &plan, opts.step_seed(step))?
        };
        let (matching, grad_q) = loss_grad_wrt_synth(&opts.loss, target, &batch.embedding)?;
        let loss = matching + opts.loss.alpha * prompt_penalty(&bank);
        check_finite(loss, step, opts.eta)?;
        trace.push(loss);

        let mut grad = batch.prompt_gradient(featmap, bank.kappa, &grad_q, bank.num_classes())?;
        grad.scaled_add(2.0 * opts.loss.alpha, &bank.prompts);
        match opts.optimizer {
            Optimizer::GradientDescent => bank.prompts.scaled_add(-opts.eta, &grad),
            Optimizer::Adam { beta1, beta2, eps } => adam.apply(
                bank.prompts.iter_mut(),
                grad.iter(),
                opts.eta,
                beta1,
                beta2,
                eps,
            ),
        }
    }
    let state = TrainState {
        step: trace.len(),
        loss_trace: trace,
        eta: opts.eta,
        max_steps: opts.max_steps,
        rng_seed: opts.latents_seed,
    };
    Ok((bank, state))
}

/// No-prompt baseline: fit the small trainable generator so that the
/// embedding of its raw pixel output matches the release. Always pure
/// squared-Frobenius matching, no penalty.
pub fn train_generator_dpntk(
    opts: &TrainOptions,
    target: &MeanEmbedding,
    generator: LinearGenerator,
    featmap: &NtkFeatureMap,
) -> Result<(LinearGenerator, TrainState)> {
    opts.validate()?;
    let num_classes = target.num_classes();
    if num_classes > generator.num_source_classes() {
        return Err(Error::invalid_argument(format!(
            "baseline generator has {} classes but target needs {num_classes}",
            generator.num_source_classes()
        )));
    }
    let shape = generator.image_shape();
    let plan = LabelPlan::balanced(opts.per_class, num_classes);
    let mapping = LabelMapping::identity(num_classes);
    let bank = PromptBank::zeros(
        num_classes,
        shape.pixel_count(),
        crate::prompt::PromptSpace::Pixel,
        0.0,
    )?;
    let loss_cfg = LossConfig {
        mode: LossMode::Mmd,
        alpha: 0.0,
        mix_weights: (1.0, 0.0),
        allow_clean_target: opts.loss.allow_clean_target,
    };
    let mut generator = generator;
    let mut trace = Vec::with_capacity(opts.max_steps);
    let param_len = generator.params_flat().len();
    let mut adam = AdamState::new(param_len);
    for step in 0..opts.max_steps {
        let batch = {
            let pipeline = SynthesisPipeline {
                generator: &generator,
                feature_path: &FeaturePath::Flattened(shape),
                bank: &bank,
                mapping: &mapping,
                featmap,
            };
            synthetic_batch(&pipeline, &plan, opts.step_seed(step))?
        };
        let (loss, grad_q) = loss_grad_wrt_synth(&loss_cfg, target, &batch.embedding)?;
        check_finite(loss, step, opts.eta)?;
        trace.push(loss);

        // Chain: dL/d(pixels) per sample, then into generator parameters.
        let pixel_grads = batch.input_gradients(featmap, &grad_q)?;
        let mut grads = LinearGenGrads::zeros(&generator);
        for (sample, pg) in batch.samples.iter().zip(&pixel_grads) {
            let source = mapping.map(sample.class)?;
            generator.backward(&sample.z, source, pg, &mut grads)?;
        }
        match opts.optimizer {
            Optimizer::GradientDescent => generator.apply_step(&grads, opts.eta),
            Optimizer::Adam { beta1, beta2, eps } => adam.apply(
                generator.params_iter_mut(),
                grads.weight.iter().chain(grads.bias.iter()),
                opts.eta,
                beta1,
                beta2,
                eps,
            ),
        }
    }
    let state = TrainState {
        step: trace.len(),
        loss_trace: trace,
        eta: opts.eta,
        max_steps: opts.max_steps,
        rng_seed: opts.latents_seed,
    };
    Ok((generator, state))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::{ImageShape, ToyExtractor, ToyGenerator};
    use crate::embedding::EmbeddingKind;
    use crate::ntk::{build_feature_map, Activation, NtkConfig};
    use crate::prompt::{random_label_mapping, PromptSpace};
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::StandardNormal;

    struct Micro {
        gen: ToyGenerator,
        fe: ToyExtractor,
        featmap: NtkFeatureMap,
        mapping: LabelMapping,
        target: MeanEmbedding,
    }

    /// Tiny everything: 8x8 single-channel images, 6-dim features,
    /// 2 private classes.
    fn micro() -> Micro {
        let shape = ImageShape::new(1, 8, 8);
        let gen = ToyGenerator::new(4, 6, shape, 101).unwrap();
        let fe = ToyExtractor::new(shape, 6, 102).unwrap();
        let featmap = build_feature_map(&NtkConfig {
            input_dim: 6,
            hidden_widths: vec![5],
            output_dim: 1,
            init_seed: 103,
            activation: Activation::Tanh,
        })
        .unwrap();
        let mapping = random_label_mapping(2, 6, 104).unwrap();
        // Target from random unit features; kind true_noisy via a
        // zero-noise perturbation.
        let mut rng = seeds::stream(105);
        let feats: Vec<ndarray::Array1<f64>> = (0..6)
            .map(|_| {
                let v = ndarray::Array1::from_shape_simple_fn(featmap.feature_dim(), || {
                    rng.sample::<f64, _>(StandardNormal)
                });
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v / n
            })
            .collect();
        let labels: Vec<usize> = (0..6).map(|i| i % 2).collect();
        let clean = crate::embedding::true_mean_embedding(&feats, &labels, 2).unwrap();
        let target = crate::embedding::perturb_embedding(clean, 0.0, 6, 106).unwrap();
        Micro {
            gen,
            fe,
            featmap,
            mapping,
            target,
        }
    }

    fn micro_opts() -> TrainOptions {
        TrainOptions {
            eta: 1e-2,
            max_steps: 1,
            per_class: 2,
            loss: LossConfig::default(),
            latents_seed: 107,
            fixed_latent_pool: true,
            optimizer: Optimizer::GradientDescent,
        }
    }

    #[test]
    fn guard_allows_exactly_one_release() {
        let shape = ImageShape::new(1, 8, 8);
        let fe = ToyExtractor::new(shape, 6, 1).unwrap();
        let featmap = build_feature_map(&NtkConfig {
            input_dim: 6,
            hidden_widths: vec![4],
            output_dim: 1,
            init_seed: 2,
            activation: Activation::Tanh,
        })
        .unwrap();
        let images: Vec<Array3<f64>> = (0..4)
            .map(|i| Array3::from_elem((1, 8, 8), 0.1 * (i + 1) as f64))
            .collect();
        let labels = vec![0, 1, 0, 1];
        let data = PrivateSet {
            images: &images,
            labels: &labels,
            num_classes: 2,
        };
        let privacy = PrivacyParams::disabled(4).unwrap();
        let mut guard = AccessGuard::new();
        let path = FeaturePath::Extracted(&fe);
        let first =
            release_private_embedding(&data, &path, &featmap, &privacy, 3, &mut guard);
        assert!(first.is_ok());
        assert_eq!(guard.private_read_count(), 1);
        assert!(guard.sealed());
        let second =
            release_private_embedding(&data, &path, &featmap, &privacy, 3, &mut guard);
        assert!(matches!(second, Err(Error::PrivacyViolation(_))));
        // The count does not grow on the refused attempt.
        assert_eq!(guard.private_read_count(), 1);
    }

    #[test]
    fn zero_sigma_release_equals_clean_embedding() {
        let shape = ImageShape::new(1, 8, 8);
        let fe = ToyExtractor::new(shape, 6, 4).unwrap();
        let featmap = build_feature_map(&NtkConfig {
            input_dim: 6,
            hidden_widths: vec![4],
            output_dim: 1,
            init_seed: 5,
            activation: Activation::Tanh,
        })
        .unwrap();
        let mut rng = seeds::stream(6);
        let images: Vec<Array3<f64>> = (0..5)
            .map(|_| {
                Array3::from_shape_simple_fn((1, 8, 8), || rng.random_range(0.0..1.0))
            })
            .collect();
        let labels = vec![0, 1, 2, 0, 1];
        let data = PrivateSet {
            images: &images,
            labels: &labels,
            num_classes: 3,
        };
        let mut guard = AccessGuard::new();
        let path = FeaturePath::Extracted(&fe);
        let released = release_private_embedding(
            &data,
            &path,
            &featmap,
            &PrivacyParams::disabled(5).unwrap(),
            7,
            &mut guard,
        )
        .unwrap();
        assert_eq!(released.kind, EmbeddingKind::TrueNoisy);

        // Independent recomputation of the clean embedding.
        let feats: Vec<ndarray::Array1<f64>> = images
            .iter()
            .map(|img| {
                let raw = crate::backbones::FeatureExtract::extract(&fe, img).unwrap();
                featmap.feature(&raw).unwrap()
            })
            .collect();
        let clean = crate::embedding::true_mean_embedding(&feats, &labels, 3).unwrap();
        for (a, b) in released.matrix.iter().zip(clean.matrix.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn release_rejects_mismatched_record_count() {
        let shape = ImageShape::new(1, 8, 8);
        let fe = ToyExtractor::new(shape, 6, 8).unwrap();
        let featmap = build_feature_map(&NtkConfig {
            input_dim: 6,
            hidden_widths: vec![4],
            output_dim: 1,
            init_seed: 9,
            activation: Activation::Tanh,
        })
        .unwrap();
        let images = vec![Array3::from_elem((1, 8, 8), 0.5); 3];
        let labels = vec![0, 1, 0];
        let data = PrivateSet {
            images: &images,
            labels: &labels,
            num_classes: 2,
        };
        let mut guard = AccessGuard::new();
        let path = FeaturePath::Extracted(&fe);
        // Calibrated for 10 records, given 3.
        let privacy = PrivacyParams::disabled(10).unwrap();
        assert!(release_private_embedding(&data, &path, &featmap, &privacy, 1, &mut guard)
            .is_err());
    }

    #[test]
    fn zero_steps_leaves_bank_unchanged() {
        let m = micro();
        let bank = PromptBank::init(2, 6, PromptSpace::Feature, 3.0, 108).unwrap();
        let reference = bank.prompts.clone();
        let opts = TrainOptions {
            max_steps: 0,
            ..micro_opts()
        };
        let path = FeaturePath::Extracted(&m.fe);
        let (bank, state) = train_prompts(
            &opts, &m.target, &m.gen, &path, &m.mapping, &m.featmap, bank,
        )
        .unwrap();
        assert_eq!(bank.prompts, reference);
        assert_eq!(state.step, 0);
        assert!(state.loss_trace.is_empty());
    }

    #[test]
    fn single_step_matches_finite_difference_gradient() {
        let m = micro();
        let bank = PromptBank::init(2, 6, PromptSpace::Feature, 3.0, 109).unwrap();
        let opts = micro_opts();
        let path = FeaturePath::Extracted(&m.fe);

        // Objective as a pure function of the prompt matrix, at the
        // fixed latent pool the single step will use.
        let objective = |prompts: &Array2<f64>| -> f64 {
            let mut b = bank.clone();
            b.prompts = prompts.clone();
            let pipeline = SynthesisPipeline {
                generator: &m.gen,
                feature_path: &path,
                bank: &b,
                mapping: &m.mapping,
                featmap: &m.featmap,
            };
            let batch =
                synthetic_batch(&pipeline, &LabelPlan::balanced(2, 2), opts.latents_seed)
                    .unwrap();
            crate::loss::total_loss(&opts.loss, &m.target, &batch.embedding, &b).unwrap()
        };

        let h = 1e-5;
        let mut fd = Array2::zeros(bank.prompts.dim());
        for r in 0..2 {
            for c in 0..6 {
                let mut plus = bank.prompts.clone();
                plus[(r, c)] += h;
                let mut minus = bank.prompts.clone();
                minus[(r, c)] -= h;
                fd[(r, c)] = (objective(&plus) - objective(&minus)) / (2.0 * h);
            }
        }

        let before = bank.prompts.clone();
        let (trained, state) = train_prompts(
            &opts, &m.target, &m.gen, &path, &m.mapping, &m.featmap, bank,
        )
        .unwrap();
        assert_eq!(state.step, 1);
        for r in 0..2 {
            for c in 0..6 {
                let expected = before[(r, c)] - opts.eta * fd[(r, c)];
                let got = trained.prompts[(r, c)];
                let denom = expected.abs().max(got.abs()).max(1e-8);
                assert!(
                    ((got - expected) / denom).abs() <= 1e-3,
                    "({r},{c}): {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn loss_decreases_over_two_hundred_steps() {
        let m = micro();
        let bank = PromptBank::init(2, 6, PromptSpace::Feature, 16.0, 110).unwrap();
        let opts = TrainOptions {
            eta: 1e-2,
            max_steps: 200,
            per_class: 4,
            loss: LossConfig::default(),
            latents_seed: 111,
            fixed_latent_pool: false,
            optimizer: Optimizer::GradientDescent,
        };
        let path = FeaturePath::Extracted(&m.fe);
        let (_, state) = train_prompts(
            &opts, &m.target, &m.gen, &path, &m.mapping, &m.featmap, bank,
        )
        .unwrap();
        assert_eq!(state.loss_trace.len(), 200);
        let first = state.loss_trace[0];
        let last = *state.loss_trace.last().unwrap();
        assert!(
            last < first,
            "no descent: first {first}, last {last}"
        );
    }

    #[test]
    fn runaway_step_size_reports_divergence() {
        let m = micro();
        let bank = PromptBank::init(2, 6, PromptSpace::Feature, 16.0, 112).unwrap();
        let opts = TrainOptions {
            eta: 1e200,
            max_steps: 5,
            per_class: 2,
            loss: LossConfig {
                alpha: 1.0,
                ..LossConfig::default()
            },
            latents_seed: 113,
            fixed_latent_pool: true,
            optimizer: Optimizer::GradientDescent,
        };
        let path = FeaturePath::Extracted(&m.fe);
        let err = train_prompts(
            &opts, &m.target, &m.gen, &path, &m.mapping, &m.featmap, bank,
        )
        .unwrap_err();
        match err {
            Error::Divergence { step, eta, .. } => {
                assert!(step >= 1, "diverged at step {step}");
                assert_eq!(eta, 1e200);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn training_is_deterministic() {
        let m = micro();
        let run = || {
            let bank = PromptBank::init(2, 6, PromptSpace::Feature, 8.0, 114).unwrap();
            let opts = TrainOptions {
                max_steps: 20,
                fixed_latent_pool: false,
                ..micro_opts()
            };
            let path = FeaturePath::Extracted(&m.fe);
            train_prompts(
                &opts, &m.target, &m.gen, &path, &m.mapping, &m.featmap, bank,
            )
            .unwrap()
        };
        let (bank_a, state_a) = run();
        let (bank_b, state_b) = run();
        assert_eq!(bank_a.prompts, bank_b.prompts);
        assert_eq!(state_a.loss_trace, state_b.loss_trace);
    }

    #[test]
    fn adam_also_descends() {
        let m = micro();
        let bank = PromptBank::init(2, 6, PromptSpace::Feature, 8.0, 115).unwrap();
        let opts = TrainOptions {
            eta: 5e-3,
            max_steps: 60,
            per_class: 4,
            loss: LossConfig::default(),
            latents_seed: 116,
            fixed_latent_pool: false,
            optimizer: Optimizer::adam_default(),
        };
        let path = FeaturePath::Extracted(&m.fe);
        let (_, state) = train_prompts(
            &opts, &m.target, &m.gen, &path, &m.mapping, &m.featmap, bank,
        )
        .unwrap();
        assert!(*state.loss_trace.last().unwrap() < state.loss_trace[0]);
    }

    // --- baseline generator ------------------------------------------------

    #[test]
    fn baseline_generator_halves_mmd() {
        let shape = ImageShape::new(1, 4, 4);
        let featmap = build_feature_map(&NtkConfig {
            input_dim: 16,
            hidden_widths: vec![8],
            output_dim: 1,
            init_seed: 120,
            activation: Activation::Tanh,
        })
        .unwrap();
        // Target: embedding of a different generator's output.
        let teacher = LinearGenerator::new(3, 2, shape, 121).unwrap();
        let mut rng = seeds::stream(122);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            for _ in 0..16 {
                let z = ndarray::Array1::from_shape_simple_fn(3, || {
                    rng.sample::<f64, _>(StandardNormal)
                });
                let img = teacher.generate(&z, c).unwrap();
                let flat = ndarray::Array1::from_iter(img.iter().copied());
                feats.push(featmap.feature(&flat).unwrap());
                labels.push(c);
            }
        }
        let clean = crate::embedding::true_mean_embedding(&feats, &labels, 2).unwrap();
        let target = crate::embedding::perturb_embedding(clean, 0.0, 32, 123).unwrap();

        let student = LinearGenerator::new(3, 2, shape, 124).unwrap();
        let opts = TrainOptions {
            eta: 2.0,
            max_steps: 500,
            per_class: 8,
            loss: LossConfig::default(),
            latents_seed: 125,
            fixed_latent_pool: false,
            optimizer: Optimizer::GradientDescent,
        };
        let (_, state) = train_generator_dpntk(&opts, &target, student, &featmap).unwrap();
        assert_eq!(state.loss_trace.len(), 500);
        let first = state.loss_trace[0];
        let last = *state.loss_trace.last().unwrap();
        assert!(
            last < 0.5 * first,
            "wanted < half of {first}, got {last}"
        );
    }

    #[test]
    fn baseline_zero_steps_keeps_parameters() {
        let shape = ImageShape::new(1, 4, 4);
        let featmap = build_feature_map(&NtkConfig {
            input_dim: 16,
            hidden_widths: vec![8],
            output_dim: 1,
            init_seed: 130,
            activation: Activation::Tanh,
        })
        .unwrap();
        let gen = LinearGenerator::new(3, 2, shape, 131).unwrap();
        let before = gen.params_flat();
        let mut rng = seeds::stream(132);
        let feats: Vec<ndarray::Array1<f64>> = (0..4)
            .map(|_| {
                let v = ndarray::Array1::from_shape_simple_fn(featmap.feature_dim(), || {
                    rng.sample::<f64, _>(StandardNormal)
                });
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v / n
            })
            .collect();
        let labels = vec![0, 1, 0, 1];
        let clean = crate::embedding::true_mean_embedding(&feats, &labels, 2).unwrap();
        let target = crate::embedding::perturb_embedding(clean, 0.0, 4, 133).unwrap();
        let opts = TrainOptions {
            max_steps: 0,
            ..micro_opts()
        };
        let (gen, state) = train_generator_dpntk(&opts, &target, gen, &featmap).unwrap();
        assert_eq!(gen.params_flat(), before);
        assert!(state.loss_trace.is_empty());
    }
}
