//! Frozen source models: a class-conditional generator and a feature
//! extractor, both tiny seeded networks standing in for full-scale
//! pretrained backbones, plus a small trainable generator used by the
//! embedding-matching baseline.
//!
//! Frozen-ness is structural: the toy models expose no mutation API, and
//! the pipeline records parameter checksums before and after training so
//! any drift fails the suite. Checkpoint files use a single binary format
//! shared by generators, extractors and prompt banks.

mod checkpoint;
mod linear_gen;
mod nn;
mod toy_fe;
mod toy_gen;

pub use checkpoint::{
    load_extractor, load_generator, load_prompts, save_extractor, save_linear_generator,
    save_prompts, save_toy_generator, CHECKPOINT_VERSION,
};
pub use linear_gen::{LinearGenGrads, LinearGenerator};
pub use toy_fe::ToyExtractor;
pub use toy_gen::ToyGenerator;

use ndarray::{Array1, Array3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        ImageShape {
            channels,
            height,
            width,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.channels * self.height * self.width
    }
}

impl std::fmt::Display for ImageShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Class-conditional image generator. Outputs live in `[0, 1]`.
pub trait Generator: std::fmt::Debug {
    fn latent_dim(&self) -> usize;
    fn num_source_classes(&self) -> usize;
    fn image_shape(&self) -> ImageShape;
    /// Deterministic in `(z, source_class)`.
    fn generate(&self, z: &Array1<f64>, source_class: usize) -> Result<Array3<f64>>;
    /// Checksum over all parameters; used to police frozen-ness.
    fn params_checksum(&self) -> String;
}

/// Feature extractor over images, differentiable with respect to the
/// image via `extract_input_vjp`.
pub trait FeatureExtract: std::fmt::Debug {
    fn image_shape(&self) -> ImageShape;
    fn feat_dim(&self) -> usize;
    fn extract(&self, image: &Array3<f64>) -> Result<Array1<f64>>;
    /// `(d extract / d image)^T upstream`.
    fn extract_input_vjp(&self, image: &Array3<f64>, upstream: &Array1<f64>)
        -> Result<Array3<f64>>;
    fn params_checksum(&self) -> String;
}

/// How raw features are read off a generated or real image: through the
/// frozen extractor, or as flattened pixels (used by the pixel prompt
/// space and by the baseline).
pub enum FeaturePath<'a> {
    Extracted(&'a dyn FeatureExtract),
    Flattened(ImageShape),
}

impl FeaturePath<'_> {
    pub fn dim(&self) -> usize {
        match self {
            FeaturePath::Extracted(fe) => fe.feat_dim(),
            FeaturePath::Flattened(shape) => shape.pixel_count(),
        }
    }

    pub fn image_shape(&self) -> ImageShape {
        match self {
            FeaturePath::Extracted(fe) => fe.image_shape(),
            FeaturePath::Flattened(shape) => *shape,
        }
    }

    pub fn compute(&self, image: &Array3<f64>) -> Result<Array1<f64>> {
        match self {
            FeaturePath::Extracted(fe) => fe.extract(image),
            FeaturePath::Flattened(shape) => {
                let got = ImageShape::new(image.dim().0, image.dim().1, image.dim().2);
                if got != *shape {
                    return Err(Error::invalid_argument(format!(
                        "image shape {got} does not match expected {shape}"
                    )));
                }
                Ok(Array1::from_iter(image.iter().copied()))
            }
        }
    }

    /// Extractor checksum, if an extractor is in the path.
    pub fn checksum(&self) -> Option<String> {
        match self {
            FeaturePath::Extracted(fe) => Some(fe.params_checksum()),
            FeaturePath::Flattened(_) => None,
        }
    }
}

/// Checksum over parameter tensors: SHA-256 of each shape followed by the
/// tensor data as little-endian f32 (the checkpoint storage type, so the
/// checksum survives a save/load round trip).
pub(crate) fn checksum_tensors(tensors: &[(Vec<usize>, Vec<f64>)]) -> String {
    let mut h = Sha256::new();
    for (shape, data) in tensors {
        h.update((shape.len() as u32).to_le_bytes());
        for &d in shape {
            h.update((d as u32).to_le_bytes());
        }
        for &v in data {
            h.update((v as f32).to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub(crate) fn check_latent(z: &Array1<f64>, latent_dim: usize) -> Result<()> {
    if z.len() != latent_dim {
        return Err(Error::invalid_argument(format!(
            "latent length {} does not match latent_dim {latent_dim}",
            z.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid_argument(
            "latent vector contains non-finite entries",
        ));
    }
    Ok(())
}

pub(crate) fn check_class(class: usize, num_classes: usize, what: &str) -> Result<()> {
    if class >= num_classes {
        return Err(Error::invalid_argument(format!(
            "{what} class {class} out of range (num classes {num_classes})"
        )));
    }
    Ok(())
}

pub(crate) fn check_image(image: &Array3<f64>, shape: ImageShape, what: &str) -> Result<()> {
    let got = ImageShape::new(image.dim().0, image.dim().1, image.dim().2);
    if got != shape {
        return Err(Error::invalid_argument(format!(
            "{what}: image shape {got} does not match expected {shape}"
        )));
    }
    if image.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput(format!(
            "{what}: image contains non-finite entries"
        )));
    }
    Ok(())
}
