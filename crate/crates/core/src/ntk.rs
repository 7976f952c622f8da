//! Empirical NTK feature map.
//!
//! The feature of an input `x` is the normalized parameter gradient of a
//! small scalar-output MLP `f(x; theta)` at a frozen random
//! initialization:
//!
//! ```text
//! phi(x) = grad_theta f(x; theta) / || grad_theta f(x; theta) ||_2
//! ```
//!
//! The feature dimension equals the total parameter count of `f`. For
//! `output_dim > 1` the scalar is the sum of the outputs, which keeps the
//! gradient a single vector of that length.
//!
//! Besides the feature itself, the map exposes vector-Jacobian products
//! of `phi` with respect to the *input*. That quantity is the mixed
//! second derivative d^2 f / (d theta, d x) contracted with an upstream
//! vector; it is what lets prompt gradients flow through the feature map
//! during synthesis training. It is computed exactly by running reverse
//! mode over the combined primal-and-tangent forward pass (the tangent
//! being the directional derivative of `f` in parameter space along the
//! upstream vector), not by finite differences.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Gradient norms below this threshold cannot be normalized into a
/// feature and are reported as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::invalid_argument(format!(
                "unknown activation {other:?} (expected relu or tanh)"
            ))),
        }
    }
}

impl Activation {
    fn value(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    fn first(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    fn second(self, x: f64) -> f64 {
        match self {
            Activation::Relu => 0.0,
            Activation::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtkConfig {
    pub input_dim: usize,
    /// Hidden layer widths; may be empty for a purely linear map.
    pub hidden_widths: Vec<usize>,
    /// Output width of the network; the feature uses the sum of outputs.
    pub output_dim: usize,
    pub init_seed: u64,
    pub activation: Activation,
}

impl NtkConfig {
    /// Default probe network: one hidden layer of width 512 with tanh and
    /// a scalar output.
    pub fn with_default_net(input_dim: usize, init_seed: u64) -> Self {
        NtkConfig {
            input_dim,
            hidden_widths: vec![512],
            output_dim: 1,
            init_seed,
            activation: Activation::Tanh,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid_argument("ntk input_dim must be positive"));
        }
        if self.output_dim == 0 {
            return Err(Error::invalid_argument("ntk output_dim must be positive"));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid_argument(
                "ntk hidden widths must all be positive",
            ));
        }
        Ok(())
    }

    /// Layer dimensions including input and output.
    fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(self.output_dim);
        dims
    }

    /// Total parameter count: sum over layers of out*(in+1).
    pub fn param_count(&self) -> usize {
        let dims = self.layer_dims();
        dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }
}

/// Frozen random MLP whose parameter gradient is the feature map.
#[derive(Debug, Clone)]
pub struct NtkFeatureMap {
    config: NtkConfig,
    weights: Vec<Array2<f64>>, // (out, in) per layer
    biases: Vec<Array1<f64>>,
    param_count: usize,
}

/// Build the map at a seeded random initialization. Deterministic:
/// identical configs produce identical parameters.
pub fn build_feature_map(config: &NtkConfig) -> Result<NtkFeatureMap> {
    config.validate()?;
    let dims = config.layer_dims();
    let mut rng = seeds::stream(config.init_seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let scale = (1.0 / fan_in as f64).sqrt();
        // Draws are rounded through f32 so checkpointed parameters
        // round-trip bit-exactly.
        let mut wt = Array2::zeros((fan_out, fan_in));
        for v in wt.iter_mut() {
            let draw: f64 = rng.sample(StandardNormal);
            *v = (draw * scale) as f32 as f64;
        }
        let mut b = Array1::zeros(fan_out);
        for v in b.iter_mut() {
            let draw: f64 = rng.sample(StandardNormal);
            *v = (draw * 0.1) as f32 as f64;
        }
        weights.push(wt);
        biases.push(b);
    }
    let param_count = config.param_count();
    Ok(NtkFeatureMap {
        config: config.clone(),
        weights,
        biases,
        param_count,
    })
}

/// Forward caches for one input.
struct Forward {
    /// Pre-activations per layer.
    pre: Vec<Array1<f64>>,
    /// Post-activations per hidden layer (final layer is linear).
    post: Vec<Array1<f64>>,
}

impl NtkFeatureMap {
    pub fn config(&self) -> &NtkConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    /// Feature dimension (= total parameter count of the probe network).
    pub fn feature_dim(&self) -> usize {
        self.param_count
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Flattened parameters, layer by layer: weights row-major, then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    /// Rebuild a map from flattened parameters (inverse of `params_flat`).
    pub fn from_params(config: &NtkConfig, params: &[f64]) -> Result<Self> {
        config.validate()?;
        if params.len() != config.param_count() {
            return Err(Error::invalid_argument(format!(
                "expected {} parameters, got {}",
                config.param_count(),
                params.len()
            )));
        }
        let dims = config.layer_dims();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut off = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let wt = Array2::from_shape_vec(
                (fan_out, fan_in),
                params[off..off + fan_out * fan_in].to_vec(),
            )
            .expect("shape checked above");
            off += fan_out * fan_in;
            let b = Array1::from_vec(params[off..off + fan_out].to_vec());
            off += fan_out;
            weights.push(wt);
            biases.push(b);
        }
        Ok(NtkFeatureMap {
            config: config.clone(),
            weights,
            biases,
            param_count: config.param_count(),
        })
    }

    fn check_input(&self, x: &Array1<f64>) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(Error::invalid_argument(format!(
                "input length {} does not match ntk input_dim {}",
                x.len(),
                self.config.input_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(
                "ntk input contains non-finite entries".into(),
            ));
        }
        Ok(())
    }

    fn forward(&self, x: &Array1<f64>) -> Forward {
        let layers = self.weights.len();
        let act = self.config.activation;
        let mut pre = Vec::with_capacity(layers);
        let mut post = Vec::with_capacity(layers.saturating_sub(1));
        let mut cur = x.clone();
        for l in 0..layers {
            let s = self.weights[l].dot(&cur) + &self.biases[l];
            if l + 1 < layers {
                let v = s.mapv(|e| act.value(e));
                post.push(v.clone());
                cur = v;
            }
            pre.push(s);
        }
        Forward { pre, post }
    }

    /// Network output reduced to a scalar (sum over output units).
    pub fn scalar_output(&self, x: &Array1<f64>) -> Result<f64> {
        self.check_input(x)?;
        let fwd = self.forward(x);
        Ok(fwd.pre.last().expect("at least one layer").sum())
    }

    /// Unnormalized parameter gradient of the scalar output, flattened in
    /// `params_flat` order.
    pub fn raw_gradient(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_input(x)?;
        let fwd = self.forward(x);
        Ok(self.raw_gradient_from(x, &fwd))
    }

    fn raw_gradient_from(&self, x: &Array1<f64>, fwd: &Forward) -> Array1<f64> {
        let layers = self.weights.len();
        let act = self.config.activation;
        // Backprop the output adjoint down to every layer.
        let mut deltas = vec![Array1::zeros(0); layers];
        deltas[layers - 1] = Array1::ones(self.config.output_dim);
        for l in (0..layers - 1).rev() {
            let upstream = self.weights[l + 1].t().dot(&deltas[l + 1]);
            deltas[l] = &upstream * &fwd.pre[l].mapv(|e| act.first(e));
        }
        let mut g = Array1::zeros(self.param_count);
        let mut off = 0;
        for l in 0..layers {
            let prev: &Array1<f64> = if l == 0 { x } else { &fwd.post[l - 1] };
            let (rows, cols) = (deltas[l].len(), prev.len());
            for r in 0..rows {
                let d = deltas[l][r];
                for c in 0..cols {
                    g[off + r * cols + c] = d * prev[c];
                }
            }
            off += rows * cols;
            for r in 0..rows {
                g[off + r] = deltas[l][r];
            }
            off += rows;
        }
        g
    }

    /// Normalized feature `phi(x)`; unit L2 norm by construction.
    pub fn feature(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        let g = self.raw_gradient(x)?;
        normalize_gradient(g, x)
    }

    /// VJP of the *unnormalized* gradient map: given `w` of length
    /// `param_count`, returns `grad_x (w . grad_theta f(x))`.
    ///
    /// Implementation: the contraction `w . grad_theta f` equals the
    /// forward-mode tangent of `f` along the parameter direction `w`, so
    /// we run that tangent pass and then reverse over the combined
    /// primal/tangent computation with respect to `x`.
    pub fn raw_input_vjp(&self, x: &Array1<f64>, w: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_input(x)?;
        if w.len() != self.param_count {
            return Err(Error::invalid_argument(format!(
                "upstream length {} does not match parameter count {}",
                w.len(),
                self.param_count
            )));
        }
        let fwd = self.forward(x);
        Ok(self.raw_input_vjp_from(x, w, &fwd))
    }

    fn raw_input_vjp_from(&self, x: &Array1<f64>, w: &Array1<f64>, fwd: &Forward) -> Array1<f64> {
        let layers = self.weights.len();
        let act = self.config.activation;
        let dims = self.config.layer_dims();

        // Slice w into per-layer tangent blocks (Wdot, bdot).
        let mut wdot: Vec<Array2<f64>> = Vec::with_capacity(layers);
        let mut bdot: Vec<Array1<f64>> = Vec::with_capacity(layers);
        let mut off = 0;
        for d in dims.windows(2) {
            let (fan_in, fan_out) = (d[0], d[1]);
            let block = Array2::from_shape_vec(
                (fan_out, fan_in),
                w.as_slice().expect("contiguous")[off..off + fan_out * fan_in].to_vec(),
            )
            .expect("shape checked");
            off += fan_out * fan_in;
            let bias =
                Array1::from_vec(w.as_slice().expect("contiguous")[off..off + fan_out].to_vec());
            off += fan_out;
            wdot.push(block);
            bdot.push(bias);
        }

        // Tangent forward: sdot_l = Wdot_l v_{l-1} + W_l vdot_{l-1} + bdot_l.
        let mut sdot: Vec<Array1<f64>> = Vec::with_capacity(layers);
        let mut vdot_prev: Array1<f64> = Array1::zeros(self.config.input_dim);
        for l in 0..layers {
            let prev: &Array1<f64> = if l == 0 { x } else { &fwd.post[l - 1] };
            let sd = wdot[l].dot(prev) + self.weights[l].dot(&vdot_prev) + &bdot[l];
            if l + 1 < layers {
                vdot_prev = &fwd.pre[l].mapv(|e| act.first(e)) * &sd;
            }
            sdot.push(sd);
        }

        // Reverse over the combined graph; the output is sum(sdot_last).
        let mut r_s: Array1<f64> = Array1::zeros(self.config.output_dim);
        let mut r_sdot: Array1<f64> = Array1::ones(self.config.output_dim);
        for l in (0..layers).rev() {
            let r_vprev = wdot[l].t().dot(&r_sdot) + self.weights[l].t().dot(&r_s);
            let r_vdot_prev = self.weights[l].t().dot(&r_sdot);
            if l == 0 {
                // vdot_{-1} is identically zero, its adjoint is dropped.
                return r_vprev;
            }
            let ad = fwd.pre[l - 1].mapv(|e| act.first(e));
            let add = fwd.pre[l - 1].mapv(|e| act.second(e));
            r_sdot = &ad * &r_vdot_prev;
            r_s = &ad * &r_vprev + &(&add * &sdot[l - 1]) * &r_vdot_prev;
        }
        unreachable!("loop returns at l == 0");
    }

    /// VJP of the *normalized* feature map: `(d phi / d x)^T u`.
    pub fn feature_input_vjp(&self, x: &Array1<f64>, u: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_input(x)?;
        if u.len() != self.param_count {
            return Err(Error::invalid_argument(format!(
                "upstream length {} does not match feature dim {}",
                u.len(),
                self.param_count
            )));
        }
        let fwd = self.forward(x);
        let g = self.raw_gradient_from(x, &fwd);
        let norm = l2(&g);
        if norm < DEGENERATE_NORM {
            return Err(degenerate_error(x, norm));
        }
        // d(g/|g|)^T u = J^T [ u/|g| - g (g.u)/|g|^3 ] with J = dg/dx.
        let gu = g.dot(u);
        let w = u / norm - &g * (gu / (norm * norm * norm));
        Ok(self.raw_input_vjp_from(x, &w, &fwd))
    }
}

fn l2(v: &Array1<f64>) -> f64 {
    v.iter().map(|e| e * e).sum::<f64>().sqrt()
}

fn degenerate_error(x: &Array1<f64>, norm: f64) -> Error {
    let head: Vec<String> = x.iter().take(4).map(|v| format!("{v:.3e}")).collect();
    Error::DegenerateFeature(format!(
        "gradient norm {norm:.3e} below {DEGENERATE_NORM:.0e} for input of dim {} starting [{}{}]",
        x.len(),
        head.join(", "),
        if x.len() > 4 { ", .." } else { "" },
    ))
}

/// Normalize a raw gradient into a feature, rejecting degenerate inputs.
pub fn normalize_gradient(g: Array1<f64>, x: &Array1<f64>) -> Result<Array1<f64>> {
    let norm = l2(&g);
    if norm < DEGENERATE_NORM {
        return Err(degenerate_error(x, norm));
    }
    Ok(g / norm)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(seed: u64) -> NtkConfig {
        NtkConfig {
            input_dim: 4,
            hidden_widths: vec![3],
            output_dim: 1,
            init_seed: seed,
            activation: Activation::Tanh,
        }
    }

    fn random_input(rng: &mut impl Rng, dim: usize) -> Array1<f64> {
        Array1::from_iter((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
    }

    #[test]
    fn param_count_matches_architecture() {
        // 4 -> 3 -> 1 with biases: 4*3 + 3 + 3*1 + 1 = 19.
        let cfg = small_config(0);
        assert_eq!(cfg.param_count(), 19);
        let map = build_feature_map(&cfg).unwrap();
        assert_eq!(map.feature_dim(), 19);
        assert_eq!(map.params_flat().len(), 19);
    }

    #[test]
    fn build_is_deterministic_and_seed_sensitive() {
        let a = build_feature_map(&small_config(11)).unwrap();
        let b = build_feature_map(&small_config(11)).unwrap();
        let c = build_feature_map(&small_config(12)).unwrap();
        assert_eq!(a.params_flat(), b.params_flat());
        assert_ne!(a.params_flat(), c.params_flat());

        let mut rng = seeds::stream(5);
        let x = random_input(&mut rng, 4);
        let fa = a.feature(&x).unwrap();
        let fb = b.feature(&x).unwrap();
        let fc = c.feature(&x).unwrap();
        assert_eq!(fa, fb);
        assert_ne!(fa, fc);
    }

    #[test]
    fn features_are_unit_norm() {
        let map = build_feature_map(&small_config(3)).unwrap();
        let mut rng = seeds::stream(17);
        for _ in 0..1000 {
            let x = random_input(&mut rng, 4);
            let f = map.feature(&x).unwrap();
            let n = l2(&f);
            assert!((n - 1.0).abs() <= 1e-6, "norm {n} off unit");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let map = build_feature_map(&small_config(3)).unwrap();
        assert!(map.feature(&Array1::zeros(5)).is_err());
        let mut x = Array1::zeros(4);
        x[0] = f64::NAN;
        assert!(map.feature(&x).is_err());
    }

    #[test]
    fn degenerate_gradient_is_reported() {
        let x = Array1::from_vec(vec![0.0, 0.0]);
        let g = Array1::from_vec(vec![1e-15, -1e-15, 0.0]);
        let err = normalize_gradient(g, &x).unwrap_err();
        match err {
            Error::DegenerateFeature(msg) => assert!(msg.contains("dim 2")),
            other => panic!("expected degenerate feature error, got {other:?}"),
        }
    }

    #[test]
    fn zero_input_tanh_matches_brute_force() {
        // Antisymmetric-looking case; checked against finite differences,
        // not asserted to vanish.
        let map = build_feature_map(&small_config(21)).unwrap();
        let x = Array1::zeros(4);
        check_gradient_fd(&map, &x);
    }

    /// Central-difference oracle for the parameter gradient.
    fn check_gradient_fd(map: &NtkFeatureMap, x: &Array1<f64>) {
        let g = map.raw_gradient(x).unwrap();
        let params = map.params_flat();
        let cfg = map.config().clone();
        for j in 0..params.len() {
            let h = 1e-5 * params[j].abs().max(1.0);
            let mut plus = params.clone();
            plus[j] += h;
            let mut minus = params.clone();
            minus[j] -= h;
            let fp = NtkFeatureMap::from_params(&cfg, &plus)
                .unwrap()
                .scalar_output(x)
                .unwrap();
            let fm = NtkFeatureMap::from_params(&cfg, &minus)
                .unwrap()
                .scalar_output(x)
                .unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let diff = (fd - g[j]).abs();
            if g[j].abs() > 1e-6 {
                assert!(
                    diff / g[j].abs() <= 1e-4,
                    "param {j}: fd {fd} vs analytic {} (rel {})",
                    g[j],
                    diff / g[j].abs()
                );
            } else {
                assert!(diff <= 1e-7, "param {j}: fd {fd} vs analytic {}", g[j]);
            }
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let map = build_feature_map(&small_config(31)).unwrap();
        let mut rng = seeds::stream(99);
        for _ in 0..20 {
            let x = random_input(&mut rng, 4);
            check_gradient_fd(&map, &x);
        }
    }

    #[test]
    fn parameter_gradient_matches_fd_on_deeper_net() {
        let cfg = NtkConfig {
            input_dim: 5,
            hidden_widths: vec![4, 3],
            output_dim: 2,
            init_seed: 7,
            activation: Activation::Tanh,
        };
        let map = build_feature_map(&cfg).unwrap();
        let mut rng = seeds::stream(100);
        for _ in 0..5 {
            let x = random_input(&mut rng, 5);
            check_gradient_fd(&map, &x);
        }
    }

    #[test]
    fn parameter_gradient_matches_fd_with_relu() {
        let cfg = NtkConfig {
            input_dim: 4,
            hidden_widths: vec![6],
            output_dim: 1,
            init_seed: 13,
            activation: Activation::Relu,
        };
        let map = build_feature_map(&cfg).unwrap();
        let mut rng = seeds::stream(101);
        let mut checked = 0;
        while checked < 10 {
            let x = random_input(&mut rng, 4);
            // Skip probes near a kink where finite differences are invalid.
            let fwd = map.forward(&x);
            if fwd.pre[0].iter().any(|s| s.abs() < 1e-3) {
                continue;
            }
            check_gradient_fd(&map, &x);
            checked += 1;
        }
    }

    #[test]
    fn raw_input_vjp_matches_finite_differences() {
        let cfg = NtkConfig {
            input_dim: 5,
            hidden_widths: vec![4, 3],
            output_dim: 1,
            init_seed: 41,
            activation: Activation::Tanh,
        };
        let map = build_feature_map(&cfg).unwrap();
        let mut rng = seeds::stream(55);
        for _ in 0..10 {
            let x = random_input(&mut rng, 5);
            let w = random_input(&mut rng, map.param_count());
            let vjp = map.raw_input_vjp(&x, &w).unwrap();
            for j in 0..x.len() {
                let h = 1e-5;
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                let cp = map.raw_gradient(&xp).unwrap().dot(&w);
                let cm = map.raw_gradient(&xm).unwrap().dot(&w);
                let fd = (cp - cm) / (2.0 * h);
                let diff = (fd - vjp[j]).abs();
                let denom = vjp[j].abs().max(1e-6);
                assert!(
                    diff / denom <= 1e-4,
                    "coord {j}: fd {fd} vs analytic {} (rel {})",
                    vjp[j],
                    diff / denom
                );
            }
        }
    }

    #[test]
    fn feature_input_vjp_matches_finite_differences() {
        let cfg = NtkConfig {
            input_dim: 6,
            hidden_widths: vec![5],
            output_dim: 1,
            init_seed: 43,
            activation: Activation::Tanh,
        };
        let map = build_feature_map(&cfg).unwrap();
        let mut rng = seeds::stream(56);
        for _ in 0..10 {
            let x = random_input(&mut rng, 6);
            let u = random_input(&mut rng, map.param_count());
            let vjp = map.feature_input_vjp(&x, &u).unwrap();
            for j in 0..x.len() {
                let h = 1e-5;
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                let cp = map.feature(&xp).unwrap().dot(&u);
                let cm = map.feature(&xm).unwrap().dot(&u);
                let fd = (cp - cm) / (2.0 * h);
                let diff = (fd - vjp[j]).abs();
                let denom = vjp[j].abs().max(1e-6);
                assert!(
                    diff / denom <= 1e-4,
                    "coord {j}: fd {fd} vs analytic {} (rel {})",
                    vjp[j],
                    diff / denom
                );
            }
        }
    }

    #[test]
    fn linear_map_with_no_hidden_layers_works() {
        let cfg = NtkConfig {
            input_dim: 3,
            hidden_widths: vec![],
            output_dim: 2,
            init_seed: 9,
            activation: Activation::Tanh,
        };
        assert_eq!(cfg.param_count(), 8);
        let map = build_feature_map(&cfg).unwrap();
        let mut rng = seeds::stream(77);
        let x = random_input(&mut rng, 3);
        let f = map.feature(&x).unwrap();
        assert!((l2(&f) - 1.0).abs() < 1e-12);
        check_gradient_fd(&map, &x);
    }
}
