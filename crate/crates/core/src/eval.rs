//! Downstream utility probe: synthesize a labeled dataset from the
//! trained pipeline, fit a small classifier on it, and measure accuracy
//! on real held-out data.
//!
//! In feature-prompt mode the classifier lives in extractor-feature
//! space: synthetic payloads are prompted extractor outputs and real
//! test images are passed through the same frozen extractor. In pixel
//! mode payloads are clipped prompted images and real images are
//! flattened as-is.

use ndarray::{Array1, Array2};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::backbones::{FeaturePath, Generator};
use crate::error::{Error, Result};
use crate::prompt::{LabelMapping, PromptBank, PromptSpace};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Feature,
    Image,
}

/// Released synthetic data: payload vectors with private-class labels,
/// balanced and in class-major order.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub payloads: Vec<Array1<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub payload_kind: PayloadKind,
}

/// Generate `n_per_class` samples for every private class. Feature
/// prompts are added to extractor outputs; pixel prompts are added to
/// the flattened image and the result is clipped back into `[0, 1]`.
pub fn synthesize_dataset(
    generator: &dyn Generator,
    bank: &PromptBank,
    mapping: &LabelMapping,
    feature_path: &FeaturePath<'_>,
    n_per_class: usize,
    rng_seed: u64,
) -> Result<SyntheticDataset> {
    if n_per_class == 0 {
        return Err(Error::invalid_argument("n_per_class must be at least 1"));
    }
    let num_classes = mapping.num_private();
    if bank.num_classes() < num_classes {
        return Err(Error::invalid_argument(format!(
            "prompt bank covers {} classes but mapping has {num_classes}",
            bank.num_classes()
        )));
    }
    match (bank.space, feature_path) {
        (PromptSpace::Feature, FeaturePath::Extracted(_)) => {}
        (PromptSpace::Pixel, FeaturePath::Flattened(_)) => {}
        (space, _) => {
            return Err(Error::invalid_argument(format!(
                "{space:?}-space prompts do not match the given feature path"
            )));
        }
    }
    if bank.prompt_dim() != feature_path.dim() {
        return Err(Error::invalid_argument(format!(
            "prompt_dim {} does not match payload dim {}",
            bank.prompt_dim(),
            feature_path.dim()
        )));
    }
    if feature_path.image_shape() != generator.image_shape() {
        return Err(Error::invalid_argument(format!(
            "feature path expects {} images but generator emits {}",
            feature_path.image_shape(),
            generator.image_shape()
        )));
    }
    let mut rng = seeds::stream(rng_seed);
    let latent_dim = generator.latent_dim();
    let mut payloads = Vec::with_capacity(num_classes * n_per_class);
    let mut labels = Vec::with_capacity(num_classes * n_per_class);
    let payload_kind = match bank.space {
        PromptSpace::Feature => PayloadKind::Feature,
        PromptSpace::Pixel => PayloadKind::Image,
    };
    for class in 0..num_classes {
        let source = mapping.map(class)?;
        for _ in 0..n_per_class {
            let z =
                Array1::from_shape_simple_fn(latent_dim, || rng.sample::<f64, _>(StandardNormal));
            let image = generator.generate(&z, source)?;
            let raw = feature_path.compute(&image)?;
            let mut payload = bank.apply(&raw, class)?;
            if payload_kind == PayloadKind::Image {
                payload.mapv_inplace(|v| v.clamp(0.0, 1.0));
            }
            payloads.push(payload);
            labels.push(class);
        }
    }
    Ok(SyntheticDataset {
        payloads,
        labels,
        num_classes,
        payload_kind,
    })
}

// ---------------------------------------------------------------------------
// classifiers

pub trait Classifier {
    fn num_classes(&self) -> usize;
    /// Unnormalized per-class scores for one payload.
    fn scores(&self, payload: &Array1<f64>) -> Result<Array1<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownstreamKind {
    Logistic,
    /// One-hidden-layer alternative for nonlinear probes.
    Mlp,
}

impl std::fmt::Display for DownstreamKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DownstreamKind::Logistic => "logistic",
            DownstreamKind::Mlp => "mlp",
        })
    }
}

impl std::str::FromStr for DownstreamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(DownstreamKind::Logistic),
            "mlp" => Ok(DownstreamKind::Mlp),
            other => Err(Error::invalid_argument(format!(
                "unknown downstream classifier {other:?} (expected logistic or mlp)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DownstreamOptions {
    pub kind: DownstreamKind,
    pub mlp_hidden: usize,
    pub max_epochs: usize,
    /// Stop once the gradient infinity-norm falls below this.
    pub grad_tol: f64,
    pub learning_rate: f64,
}

impl Default for DownstreamOptions {
    fn default() -> Self {
        DownstreamOptions {
            kind: DownstreamKind::Logistic,
            mlp_hidden: 32,
            max_epochs: 2000,
            grad_tol: 1e-5,
            learning_rate: 0.05,
        }
    }
}

/// Multinomial logistic regression, or the MLP variant.
#[derive(Debug, Clone)]
pub enum DownstreamModel {
    Logistic {
        /// `(num_classes, dim)`.
        weight: Array2<f64>,
        bias: Array1<f64>,
    },
    Mlp {
        w1: Array2<f64>,
        b1: Array1<f64>,
        w2: Array2<f64>,
        b2: Array1<f64>,
    },
}

impl Classifier for DownstreamModel {
    fn num_classes(&self) -> usize {
        match self {
            DownstreamModel::Logistic { weight, .. } => weight.dim().0,
            DownstreamModel::Mlp { w2, .. } => w2.dim().0,
        }
    }

    fn scores(&self, payload: &Array1<f64>) -> Result<Array1<f64>> {
        match self {
            DownstreamModel::Logistic { weight, bias } => {
                if payload.len() != weight.dim().1 {
                    return Err(Error::invalid_argument(format!(
                        "payload dim {} but classifier expects {}",
                        payload.len(),
                        weight.dim().1
                    )));
                }
                Ok(weight.dot(payload) + bias)
            }
            DownstreamModel::Mlp { w1, b1, w2, b2 } => {
                if payload.len() != w1.dim().1 {
                    return Err(Error::invalid_argument(format!(
                        "payload dim {} but classifier expects {}",
                        payload.len(),
                        w1.dim().1
                    )));
                }
                let hidden = (w1.dot(payload) + b1).mapv(f64::tanh);
                Ok(w2.dot(&hidden) + b2)
            }
        }
    }
}

fn softmax_in_place(logits: &mut Array1<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
}

impl Adam {
    fn new(len: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * g;
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * g * g;
            params[i] -= self.lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + EPS);
        }
    }
}

/// Full-batch cross-entropy training, deterministic under `seed`.
pub fn train_downstream(
    data: &SyntheticDataset,
    seed: u64,
    opts: &DownstreamOptions,
) -> Result<DownstreamModel> {
    if data.payloads.is_empty() {
        return Err(Error::invalid_argument("empty training set"));
    }
    if data.payloads.len() != data.labels.len() {
        return Err(Error::invalid_argument("payload/label count mismatch"));
    }
    let mut present = vec![false; data.num_classes];
    for &y in &data.labels {
        if y >= data.num_classes {
            return Err(Error::invalid_argument(format!(
                "label {y} out of range ({} classes)",
                data.num_classes
            )));
        }
        present[y] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::invalid_argument(
            "downstream training needs at least two classes present",
        ));
    }
    let dim = data.payloads[0].len();
    if data.payloads.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid_argument("ragged payload dimensions"));
    }
    let n = data.payloads.len();
    let c = data.num_classes;
    let mut rng = seeds::stream(seed);

    match opts.kind {
        DownstreamKind::Logistic => {
            let mut weight = Array2::from_shape_simple_fn((c, dim), || {
                0.01 * rng.sample::<f64, _>(StandardNormal)
            });
            let mut bias = Array1::zeros(c);
            let mut adam = Adam::new(c * dim + c, opts.learning_rate);
            let mut gw = Array2::zeros((c, dim));
            let mut gb = Array1::zeros(c);
            for _ in 0..opts.max_epochs {
                gw.fill(0.0);
                gb.fill(0.0);
                for (x, &y) in data.payloads.iter().zip(&data.labels) {
                    let mut p = weight.dot(x) + &bias;
                    softmax_in_place(&mut p);
                    p[y] -= 1.0;
                    for k in 0..c {
                        let d = p[k] / n as f64;
                        gb[k] += d;
                        for (wkj, xj) in gw.row_mut(k).iter_mut().zip(x.iter()) {
                            *wkj += d * xj;
                        }
                    }
                }
                let gmax = gw
                    .iter()
                    .chain(gb.iter())
                    .fold(0.0f64, |acc, g: &f64| acc.max(g.abs()));
                if gmax < opts.grad_tol {
                    break;
                }
                let mut params: Vec<f64> =
                    weight.iter().chain(bias.iter()).copied().collect();
                let grads: Vec<f64> = gw.iter().chain(gb.iter()).copied().collect();
                adam.step(&mut params, &grads);
                for (dst, src) in weight.iter_mut().chain(bias.iter_mut()).zip(&params) {
                    *dst = *src;
                }
            }
            Ok(DownstreamModel::Logistic { weight, bias })
        }
        DownstreamKind::Mlp => {
            let h = opts.mlp_hidden.max(1);
            let s1 = (1.0 / dim as f64).sqrt();
            let s2 = (1.0 / h as f64).sqrt();
            let mut w1 = Array2::from_shape_simple_fn((h, dim), || {
                s1 * rng.sample::<f64, _>(StandardNormal)
            });
            let mut b1 = Array1::zeros(h);
            let mut w2 = Array2::from_shape_simple_fn((c, h), || {
                s2 * rng.sample::<f64, _>(StandardNormal)
            });
            let mut b2 = Array1::zeros(c);
            let plen = h * dim + h + c * h + c;
            let mut adam = Adam::new(plen, opts.learning_rate);
            for _ in 0..opts.max_epochs {
                let mut gw1 = Array2::zeros((h, dim));
                let mut gb1 = Array1::zeros(h);
                let mut gw2 = Array2::zeros((c, h));
                let mut gb2 = Array1::zeros(c);
                for (x, &y) in data.payloads.iter().zip(&data.labels) {
                    let hid = (w1.dot(x) + &b1).mapv(f64::tanh);
                    let mut p = w2.dot(&hid) + &b2;
                    softmax_in_place(&mut p);
                    p[y] -= 1.0;
                    let scale = 1.0 / n as f64;
                    for k in 0..c {
                        let d = p[k] * scale;
                        gb2[k] += d;
                        for (g, hj) in gw2.row_mut(k).iter_mut().zip(hid.iter()) {
                            *g += d * hj;
                        }
                    }
                    // d hidden = W2^T (p - onehot), gated by tanh'.
                    for j in 0..h {
                        let mut dh = 0.0;
                        for k in 0..c {
                            dh += w2[(k, j)] * p[k];
                        }
                        dh *= (1.0 - hid[j] * hid[j]) * scale;
                        gb1[j] += dh;
                        for (g, xj) in gw1.row_mut(j).iter_mut().zip(x.iter()) {
                            *g += dh * xj;
                        }
                    }
                }
                let gmax = gw1
                    .iter()
                    .chain(gb1.iter())
                    .chain(gw2.iter())
                    .chain(gb2.iter())
                    .fold(0.0f64, |acc, g: &f64| acc.max(g.abs()));
                if gmax < opts.grad_tol {
                    break;
                }
                let mut params: Vec<f64> = w1
                    .iter()
                    .chain(b1.iter())
                    .chain(w2.iter())
                    .chain(b2.iter())
                    .copied()
                    .collect();
                let grads: Vec<f64> = gw1
                    .iter()
                    .chain(gb1.iter())
                    .chain(gw2.iter())
                    .chain(gb2.iter())
                    .copied()
                    .collect();
                adam.step(&mut params, &grads);
                for (dst, src) in w1
                    .iter_mut()
                    .chain(b1.iter_mut())
                    .chain(w2.iter_mut())
                    .chain(b2.iter_mut())
                    .zip(&params)
                {
                    *dst = *src;
                }
            }
            Ok(DownstreamModel::Mlp { w1, b1, w2, b2 })
        }
    }
}

/// Fraction of argmax-correct predictions; score ties resolve to the
/// lowest class index.
pub fn evaluate_accuracy(
    classifier: &dyn Classifier,
    payloads: &[Array1<f64>],
    labels: &[usize],
) -> Result<f64> {
    if payloads.is_empty() {
        return Err(Error::invalid_argument("empty evaluation set"));
    }
    if payloads.len() != labels.len() {
        return Err(Error::invalid_argument("payload/label count mismatch"));
    }
    let mut correct = 0usize;
    for (x, &y) in payloads.iter().zip(labels) {
        let scores = classifier.scores(x)?;
        let mut best = 0usize;
        for k in 1..scores.len() {
            if scores[k] > scores[best] {
                best = k;
            }
        }
        if best == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / payloads.len() as f64)
}

// ---------------------------------------------------------------------------
