//! Toy frozen conditional generator: a seeded upsampling conv net with a
//! deterministic per-class template bias, standing in for a pretrained
//! class-conditional backbone. The template keeps source classes visually
//! distinct; the latent drives within-class variation.

use ndarray::{Array1, Array2, Array3, Array4};
use rand::Rng;
use rand_distr::StandardNormal;

use super::nn::{conv2d, sigmoid, upsample2x};
use super::{check_class, check_latent, checksum_tensors, Generator, ImageShape};
use crate::error::{Error, Result};
use crate::seeds;

const BASE_CHANNELS: usize = 8;
const MID_CHANNELS: usize = 4;
const TEMPLATE_STRENGTH: f64 = 2.5;

#[derive(Debug, Clone)]
pub struct ToyGenerator {
    latent_dim: usize,
    num_source_classes: usize,
    shape: ImageShape,
    class_embed: Array2<f64>, // (classes, latent)
    w0: Array2<f64>,          // (base_ch * h/4 * w/4, latent)
    b0: Array1<f64>,
    k1: Array4<f64>, // (mid, base, 3, 3)
    b1: Array1<f64>,
    k2: Array4<f64>, // (channels, mid, 3, 3)
    b2: Array1<f64>,
    templates: Array3<f64>, // (classes, h, w), derived from class index
}

impl ToyGenerator {
    /// Seeded random parameters (rounded through f32 so checkpoints
    /// round-trip exactly). `shape` height and width must be multiples
    /// of 4.
    pub fn new(latent_dim: usize, num_source_classes: usize, shape: ImageShape, seed: u64) -> Result<Self> {
        if latent_dim == 0 || num_source_classes == 0 {
            return Err(Error::invalid_argument(
                "toy generator needs positive latent_dim and class count",
            ));
        }
        if shape.height % 4 != 0 || shape.width % 4 != 0 || shape.height < 4 || shape.width < 4 {
            return Err(Error::invalid_argument(format!(
                "toy generator image sides must be multiples of 4, got {shape}"
            )));
        }
        let mut rng = seeds::stream(seed);
        let mut draw = |scale: f64| -> f64 {
            let v: f64 = rng.sample(StandardNormal);
            (v * scale) as f32 as f64
        };
        let base = (shape.height / 4) * (shape.width / 4) * BASE_CHANNELS;
        let class_embed =
            Array2::from_shape_simple_fn((num_source_classes, latent_dim), || draw(1.0));
        let w0 = Array2::from_shape_simple_fn((base, latent_dim), || {
            draw((1.0 / latent_dim as f64).sqrt())
        });
        let b0 = Array1::from_shape_simple_fn(base, || draw(0.1));
        let k1 = Array4::from_shape_simple_fn((MID_CHANNELS, BASE_CHANNELS, 3, 3), || {
            draw((1.0 / (9.0 * BASE_CHANNELS as f64)).sqrt())
        });
        let b1 = Array1::from_shape_simple_fn(MID_CHANNELS, || draw(0.1));
        let k2 = Array4::from_shape_simple_fn((shape.channels, MID_CHANNELS, 3, 3), || {
            draw((1.0 / (9.0 * MID_CHANNELS as f64)).sqrt())
        });
        let b2 = Array1::from_shape_simple_fn(shape.channels, || draw(0.1));
        let templates = class_templates(num_source_classes, shape.height, shape.width);
        Ok(ToyGenerator {
            latent_dim,
            num_source_classes,
            shape,
            class_embed,
            w0,
            b0,
            k1,
            b1,
            k2,
            b2,
            templates,
        })
    }

    pub(crate) fn tensors(&self) -> Vec<(Vec<usize>, Vec<f64>)> {
        vec![
            (
                vec![self.num_source_classes, self.latent_dim],
                self.class_embed.iter().copied().collect(),
            ),
            (
                vec![self.w0.dim().0, self.w0.dim().1],
                self.w0.iter().copied().collect(),
            ),
            (vec![self.b0.len()], self.b0.to_vec()),
            (
                vec![MID_CHANNELS, BASE_CHANNELS, 3, 3],
                self.k1.iter().copied().collect(),
            ),
            (vec![self.b1.len()], self.b1.to_vec()),
            (
                vec![self.shape.channels, MID_CHANNELS, 3, 3],
                self.k2.iter().copied().collect(),
            ),
            (vec![self.b2.len()], self.b2.to_vec()),
        ]
    }

    /// Rebuild from checkpointed tensors; shapes must match the
    /// architecture implied by the header fields.
    pub(crate) fn from_tensors(
        latent_dim: usize,
        num_source_classes: usize,
        shape: ImageShape,
        tensors: Vec<(Vec<usize>, Vec<f64>)>,
    ) -> Result<Self> {
        let mut fresh = ToyGenerator::new(latent_dim, num_source_classes, shape, 0)?;
        let expected = fresh.tensors();
        if tensors.len() != expected.len() {
            return Err(crate::error::CheckpointError::Shape(format!(
                "expected {} tensors, found {}",
                expected.len(),
                tensors.len()
            ))
            .into());
        }
        for (i, ((es, _), (fs, _))) in expected.iter().zip(&tensors).enumerate() {
            if es != fs {
                return Err(crate::error::CheckpointError::Shape(format!(
                    "tensor {i}: expected shape {es:?}, found {fs:?}"
                ))
                .into());
            }
        }
        let mut it = tensors.into_iter().map(|(_, d)| d);
        let mut next = |len: usize| -> Vec<f64> {
            let d = it.next().expect("counted above");
            debug_assert_eq!(d.len(), len);
            d
        };
        fresh.class_embed = Array2::from_shape_vec(
            (num_source_classes, latent_dim),
            next(num_source_classes * latent_dim),
        )
        .expect("shape verified");
        let w0_dim = fresh.w0.dim();
        fresh.w0 =
            Array2::from_shape_vec(w0_dim, next(w0_dim.0 * w0_dim.1)).expect("shape verified");
        fresh.b0 = Array1::from_vec(next(fresh.b0.len()));
        fresh.k1 = Array4::from_shape_vec(
            (MID_CHANNELS, BASE_CHANNELS, 3, 3),
            next(MID_CHANNELS * BASE_CHANNELS * 9),
        )
        .expect("shape verified");
        fresh.b1 = Array1::from_vec(next(MID_CHANNELS));
        fresh.k2 = Array4::from_shape_vec(
            (shape.channels, MID_CHANNELS, 3, 3),
            next(shape.channels * MID_CHANNELS * 9),
        )
        .expect("shape verified");
        fresh.b2 = Array1::from_vec(next(shape.channels));
        Ok(fresh)
    }
}

/// Deterministic class templates: oriented cosine gratings with
/// class-dependent frequency and phase. Distinct for class indices below
/// 16; beyond that patterns repeat with shifted phase.
fn class_templates(num_classes: usize, h: usize, w: usize) -> Array3<f64> {
    let mut t = Array3::zeros((num_classes, h, w));
    for c in 0..num_classes {
        let fy = 1.0 + (c % 4) as f64;
        let fx = 1.0 + ((c / 4) % 4) as f64;
        let phase = 0.9 * c as f64;
        for y in 0..h {
            for x in 0..w {
                let arg = 2.0 * std::f64::consts::PI * (fy * y as f64 / h as f64 + fx * x as f64 / w as f64)
                    + phase;
                t[(c, y, x)] = arg.cos();
            }
        }
    }
    t
}

impl Generator for ToyGenerator {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn num_source_classes(&self) -> usize {
        self.num_source_classes
    }

    fn image_shape(&self) -> ImageShape {
        self.shape
    }

    fn generate(&self, z: &Array1<f64>, source_class: usize) -> Result<Array3<f64>> {
        check_latent(z, self.latent_dim)?;
        check_class(source_class, self.num_source_classes, "source")?;
        let zc = z + &self.class_embed.row(source_class);
        let h0 = (self.w0.dot(&zc) + &self.b0).mapv(f64::tanh);
        let base = h0
            .into_shape_with_order((BASE_CHANNELS, self.shape.height / 4, self.shape.width / 4))
            .expect("dense layer sized for the base grid");
        let up1 = upsample2x(&base);
        let mid = conv2d(&up1, &self.k1, &self.b1, 1, 1).mapv(f64::tanh);
        let up2 = upsample2x(&mid);
        let mut raw = conv2d(&up2, &self.k2, &self.b2, 1, 1);
        for ch in 0..self.shape.channels {
            for y in 0..self.shape.height {
                for x in 0..self.shape.width {
                    raw[(ch, y, x)] = sigmoid(
                        raw[(ch, y, x)] + TEMPLATE_STRENGTH * self.templates[(source_class, y, x)],
                    );
                }
            }
        }
        Ok(raw)
    }

    fn params_checksum(&self) -> String {
        checksum_tensors(&self.tensors())
    }
}

// ---------------------------------------------------------------------------
