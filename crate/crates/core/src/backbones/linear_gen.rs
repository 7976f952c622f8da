//! Small trainable conditional generator for the embedding-matching
//! baseline: one affine map per class followed by a sigmoid. Unlike the
//! frozen backbones it exposes its parameters and an input-side backward
//! pass so gradient descent on the matching objective can update it.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_distr::StandardNormal;

use super::nn::sigmoid;
use super::{check_class, check_latent, checksum_tensors, Generator, ImageShape};
use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone)]
pub struct LinearGenerator {
    latent_dim: usize,
    num_classes: usize,
    shape: ImageShape,
    /// Per-class weight matrices, `(classes, pixels, latent)`.
    weight: Array3<f64>,
    /// Per-class biases, `(classes, pixels)`.
    bias: Array2<f64>,
}

/// Parameter gradients accumulated over a batch.
pub struct LinearGenGrads {
    pub weight: Array3<f64>,
    pub bias: Array2<f64>,
}

impl LinearGenGrads {
    pub fn zeros(gen: &LinearGenerator) -> Self {
        LinearGenGrads {
            weight: Array3::zeros(gen.weight.dim()),
            bias: Array2::zeros(gen.bias.dim()),
        }
    }
}

impl LinearGenerator {
    pub fn new(
        latent_dim: usize,
        num_classes: usize,
        shape: ImageShape,
        seed: u64,
    ) -> Result<Self> {
        if latent_dim == 0 || num_classes == 0 {
            return Err(Error::invalid_argument(
                "linear generator needs positive latent_dim and class count",
            ));
        }
        let pixels = shape.pixel_count();
        let mut rng = seeds::stream(seed);
        let scale = (1.0 / latent_dim as f64).sqrt();
        let weight = Array3::from_shape_simple_fn((num_classes, pixels, latent_dim), || {
            let v: f64 = rng.sample(StandardNormal);
            (v * scale) as f32 as f64
        });
        let bias = Array2::zeros((num_classes, pixels));
        Ok(LinearGenerator {
            latent_dim,
            num_classes,
            shape,
            weight,
            bias,
        })
    }

    /// Pre-activation for one class: `W_c z + b_c`.
    fn pre_activation(&self, z: &Array1<f64>, class: usize) -> Array1<f64> {
        let w = self.weight.index_axis(ndarray::Axis(0), class);
        let mut out = self.bias.row(class).to_owned();
        for (p, v) in out.iter_mut().enumerate() {
            for l in 0..self.latent_dim {
                *v += w[(p, l)] * z[l];
            }
        }
        out
    }

    /// Accumulate parameter gradients given the adjoint of the flattened
    /// output image.
    pub fn backward(
        &self,
        z: &Array1<f64>,
        class: usize,
        out_grad: &Array1<f64>,
        grads: &mut LinearGenGrads,
    ) -> Result<()> {
        check_latent(z, self.latent_dim)?;
        check_class(class, self.num_classes, "baseline")?;
        let pixels = self.shape.pixel_count();
        if out_grad.len() != pixels {
            return Err(Error::invalid_argument(format!(
                "output adjoint length {} does not match pixel count {pixels}",
                out_grad.len()
            )));
        }
        let pre = self.pre_activation(z, class);
        for p in 0..pixels {
            let x = sigmoid(pre[p]);
            let d = out_grad[p] * x * (1.0 - x);
            grads.bias[(class, p)] += d;
            for l in 0..self.latent_dim {
                grads.weight[(class, p, l)] += d * z[l];
            }
        }
        Ok(())
    }

    /// Plain gradient-descent update.
    pub fn apply_step(&mut self, grads: &LinearGenGrads, eta: f64) {
        self.weight.scaled_add(-eta, &grads.weight);
        self.bias.scaled_add(-eta, &grads.bias);
    }

    /// Mutable flat view over all parameters (weights then biases), in
    /// the same order `LinearGenGrads` iterates.
    pub fn params_iter_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.weight.iter().chain(self.bias.iter()).copied().collect()
    }

    pub(crate) fn tensors(&self) -> Vec<(Vec<usize>, Vec<f64>)> {
        let (c, p, l) = self.weight.dim();
        vec![
            (vec![c, p, l], self.weight.iter().copied().collect()),
            (vec![c, p], self.bias.iter().copied().collect()),
        ]
    }

    pub(crate) fn from_tensors(
        latent_dim: usize,
        num_classes: usize,
        shape: ImageShape,
        tensors: Vec<(Vec<usize>, Vec<f64>)>,
    ) -> Result<Self> {
        let pixels = shape.pixel_count();
        let expected = [
            vec![num_classes, pixels, latent_dim],
            vec![num_classes, pixels],
        ];
        if tensors.len() != 2 {
            return Err(crate::error::CheckpointError::Shape(format!(
                "expected 2 tensors, found {}",
                tensors.len()
            ))
            .into());
        }
        for (i, ((fs, _), es)) in tensors.iter().zip(&expected).enumerate() {
            if fs != es {
                return Err(crate::error::CheckpointError::Shape(format!(
                    "tensor {i}: expected shape {es:?}, found {fs:?}"
                ))
                .into());
            }
        }
        let mut it = tensors.into_iter().map(|(_, d)| d);
        let weight =
            Array3::from_shape_vec((num_classes, pixels, latent_dim), it.next().expect("2 tensors"))
                .expect("verified");
        let bias = Array2::from_shape_vec((num_classes, pixels), it.next().expect("2 tensors"))
            .expect("verified");
        Ok(LinearGenerator {
            latent_dim,
            num_classes,
            shape,
            weight,
            bias,
        })
    }
}

impl Generator for LinearGenerator {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn num_source_classes(&self) -> usize {
        self.num_classes
    }

    fn image_shape(&self) -> ImageShape {
        self.shape
    }

    fn generate(&self, z: &Array1<f64>, source_class: usize) -> Result<Array3<f64>> {
        check_latent(z, self.latent_dim)?;
        check_class(source_class, self.num_classes, "baseline")?;
        let pre = self.pre_activation(z, source_class);
        let out = pre.mapv(sigmoid);
        Ok(
            Array3::from_shape_vec((self.shape.channels, self.shape.height, self.shape.width), out.to_vec())
                .expect("pixel count matches shape"),
        )
    }

    fn params_checksum(&self) -> String {
        checksum_tensors(&self.tensors())
    }
}

// ---------------------------------------------------------------------------
