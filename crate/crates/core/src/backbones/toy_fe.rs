//! Toy frozen feature extractor: two strided conv layers and a linear
//! head. Penultimate-style representation of fixed width, differentiable
//! with respect to the input image.

use ndarray::{Array1, Array2, Array3, Array4};
use rand::Rng;
use rand_distr::StandardNormal;

use super::nn::{conv2d, conv2d_input_vjp};
use super::{check_image, checksum_tensors, FeatureExtract, ImageShape};
use crate::error::{Error, Result};
use crate::seeds;

const C1: usize = 8;
const C2: usize = 16;

#[derive(Debug, Clone)]
pub struct ToyExtractor {
    shape: ImageShape,
    feat_dim: usize,
    k1: Array4<f64>, // (C1, channels, 3, 3), stride 2
    b1: Array1<f64>,
    k2: Array4<f64>, // (C2, C1, 3, 3), stride 2
    b2: Array1<f64>,
    head: Array2<f64>, // (feat_dim, flattened)
    head_b: Array1<f64>,
}

fn strided_out(side: usize) -> usize {
    // kernel 3, stride 2, pad 1
    (side + 2 - 3) / 2 + 1
}

impl ToyExtractor {
    pub fn new(shape: ImageShape, feat_dim: usize, seed: u64) -> Result<Self> {
        if feat_dim == 0 {
            return Err(Error::invalid_argument("extractor feat_dim must be positive"));
        }
        if shape.height < 4 || shape.width < 4 {
            return Err(Error::invalid_argument(format!(
                "extractor needs images at least 4x4, got {shape}"
            )));
        }
        let h2 = strided_out(strided_out(shape.height));
        let w2 = strided_out(strided_out(shape.width));
        let flat = C2 * h2 * w2;
        let mut rng = seeds::stream(seed);
        let mut draw = |scale: f64| -> f64 {
            let v: f64 = rng.sample(StandardNormal);
            (v * scale) as f32 as f64
        };
        let k1 = Array4::from_shape_simple_fn((C1, shape.channels, 3, 3), || {
            draw((2.0 / (9.0 * shape.channels as f64)).sqrt())
        });
        let b1 = Array1::from_shape_simple_fn(C1, || draw(0.1));
        let k2 = Array4::from_shape_simple_fn((C2, C1, 3, 3), || {
            draw((2.0 / (9.0 * C1 as f64)).sqrt())
        });
        let b2 = Array1::from_shape_simple_fn(C2, || draw(0.1));
        // Head scaled so features come out with roughly unit spread.
        let head = Array2::from_shape_simple_fn((feat_dim, flat), || {
            draw((4.0 / flat as f64).sqrt())
        });
        let head_b = Array1::from_shape_simple_fn(feat_dim, || draw(0.1));
        Ok(ToyExtractor {
            shape,
            feat_dim,
            k1,
            b1,
            k2,
            b2,
            head,
            head_b,
        })
    }

    pub(crate) fn tensors(&self) -> Vec<(Vec<usize>, Vec<f64>)> {
        vec![
            (
                vec![C1, self.shape.channels, 3, 3],
                self.k1.iter().copied().collect(),
            ),
            (vec![C1], self.b1.to_vec()),
            (vec![C2, C1, 3, 3], self.k2.iter().copied().collect()),
            (vec![C2], self.b2.to_vec()),
            (
                vec![self.head.dim().0, self.head.dim().1],
                self.head.iter().copied().collect(),
            ),
            (vec![self.feat_dim], self.head_b.to_vec()),
        ]
    }

    pub(crate) fn from_tensors(
        shape: ImageShape,
        feat_dim: usize,
        tensors: Vec<(Vec<usize>, Vec<f64>)>,
    ) -> Result<Self> {
        let mut fresh = ToyExtractor::new(shape, feat_dim, 0)?;
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
        let mut next = || it.next().expect("counted above");
        fresh.k1 = Array4::from_shape_vec((C1, shape.channels, 3, 3), next()).expect("verified");
        fresh.b1 = Array1::from_vec(next());
        fresh.k2 = Array4::from_shape_vec((C2, C1, 3, 3), next()).expect("verified");
        fresh.b2 = Array1::from_vec(next());
        let head_dim = fresh.head.dim();
        fresh.head = Array2::from_shape_vec(head_dim, next()).expect("verified");
        fresh.head_b = Array1::from_vec(next());
        Ok(fresh)
    }

    /// Forward pass keeping pre-activation caches for the VJP.
    fn forward(&self, image: &Array3<f64>) -> (Array3<f64>, Array3<f64>, Array1<f64>) {
        let s1 = conv2d(image, &self.k1, &self.b1, 2, 1);
        let a1 = s1.mapv(f64::tanh);
        let s2 = conv2d(&a1, &self.k2, &self.b2, 2, 1);
        let a2 = s2.mapv(f64::tanh);
        let flat = Array1::from_iter(a2.iter().copied());
        let feat = self.head.dot(&flat) + &self.head_b;
        (s1, s2, feat)
    }
}

impl FeatureExtract for ToyExtractor {
    fn image_shape(&self) -> ImageShape {
        self.shape
    }

    fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    fn extract(&self, image: &Array3<f64>) -> Result<Array1<f64>> {
        check_image(image, self.shape, "extract")?;
        let (_, _, feat) = self.forward(image);
        Ok(feat)
    }

    fn extract_input_vjp(
        &self,
        image: &Array3<f64>,
        upstream: &Array1<f64>,
    ) -> Result<Array3<f64>> {
        check_image(image, self.shape, "extract vjp")?;
        if upstream.len() != self.feat_dim {
            return Err(Error::invalid_argument(format!(
                "upstream length {} does not match feat_dim {}",
                upstream.len(),
                self.feat_dim
            )));
        }
        let (s1, s2, _) = self.forward(image);
        let r_flat = self.head.t().dot(upstream);
        let mut r_s2 = Array3::from_shape_vec(s2.dim(), r_flat.to_vec()).expect("same size");
        // Through tanh at layer 2.
        for (r, s) in r_s2.iter_mut().zip(s2.iter()) {
            let t = s.tanh();
            *r *= 1.0 - t * t;
        }
        let r_a1 = conv2d_input_vjp(s1.dim(), &self.k2, 2, 1, &r_s2);
        let mut r_s1 = r_a1;
        for (r, s) in r_s1.iter_mut().zip(s1.iter()) {
            let t = s.tanh();
            *r *= 1.0 - t * t;
        }
        Ok(conv2d_input_vjp(
            (self.shape.channels, self.shape.height, self.shape.width),
            &self.k1,
            2,
            1,
            &r_s1,
        ))
    }

    fn params_checksum(&self) -> String {
        checksum_tensors(&self.tensors())
    }
}

// ---------------------------------------------------------------------------
