//! Single-file binary checkpoint format shared by generators, extractors
//! and prompt banks.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "VPNTKCKP"
//! version u32      currently 1
//! kind    u8       1 generator, 2 extractor, 3 prompts
//! header  kind-specific fixed fields (see below)
//! table   u32 tensor count, then per tensor: u32 ndim, ndim * u32 dims
//! data    tensors in table order, row-major f32
//! ```
//!
//! Generator header: arch u8 (1 toy conv, 2 per-class linear), latent_dim
//! u32, num_source_classes u32, then channels/height/width u32 each.
//! Extractor header: channels/height/width u32, feat_dim u32.
//! Prompts header: num_classes u32, prompt_dim u32, space u8 (1 feature,
//! 2 pixel), kappa f64.
//!
//! Model parameters are kept as exact f32 values in memory, so a save and
//! load round trip reproduces outputs bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FeatureExtract, Generator, ImageShape, LinearGenerator, ToyExtractor, ToyGenerator};
use crate::error::{CheckpointError, Result};
use crate::prompt::{PromptBank, PromptSpace};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"VPNTKCKP";

const KIND_GENERATOR: u8 = 1;
const KIND_EXTRACTOR: u8 = 2;
const KIND_PROMPTS: u8 = 3;

const ARCH_TOY: u8 = 1;
const ARCH_LINEAR: u8 = 2;

fn kind_name(kind: u8) -> String {
    match kind {
        KIND_GENERATOR => "generator".into(),
        KIND_EXTRACTOR => "extractor".into(),
        KIND_PROMPTS => "prompts".into(),
        other => format!("unknown({other})"),
    }
}

// --- writing ---------------------------------------------------------------

struct CkptWriter {
    w: BufWriter<File>,
}

impl CkptWriter {
    fn create(path: &Path, kind: u8) -> Result<Self> {
        let file = File::create(path)?;
        let mut w = CkptWriter {
            w: BufWriter::new(file),
        };
        w.bytes(MAGIC)?;
        w.u32(CHECKPOINT_VERSION)?;
        w.u8(kind)?;
        Ok(w)
    }

    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.w.write_all(b)?;
        Ok(())
    }

    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }

    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn tensors(&mut self, tensors: &[(Vec<usize>, Vec<f64>)]) -> Result<()> {
        self.u32(tensors.len() as u32)?;
        for (shape, _) in tensors {
            self.u32(shape.len() as u32)?;
            for &d in shape {
                self.u32(d as u32)?;
            }
        }
        for (_, data) in tensors {
            for &v in data {
                self.bytes(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

// --- reading ---------------------------------------------------------------

struct CkptReader {
    r: BufReader<File>,
}

impl CkptReader {
    fn open(path: &Path, expected_kind: u8) -> Result<(Self, u8)> {
        if !path.exists() {
            return Err(CheckpointError::Missing(path.to_path_buf()).into());
        }
        let file = File::open(path)?;
        let mut r = CkptReader {
            r: BufReader::new(file),
        };
        let mut magic = [0u8; 8];
        r.fill(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic(path.to_path_buf()).into());
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            }
            .into());
        }
        let kind = r.u8()?;
        if kind != expected_kind {
            return Err(CheckpointError::KindMismatch {
                expected: kind_name(expected_kind),
                found: kind_name(kind),
            }
            .into());
        }
        Ok((r, kind))
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.r
            .read_exact(buf)
            .map_err(|_| CheckpointError::Corrupt("unexpected end of file".into()))?;
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.fill(&mut b)?;
        Ok(b[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn tensors(&mut self) -> Result<Vec<(Vec<usize>, Vec<f64>)>> {
        let count = self.u32()? as usize;
        if count > 1024 {
            return Err(CheckpointError::Corrupt(format!("implausible tensor count {count}")).into());
        }
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let ndim = self.u32()? as usize;
            if ndim > 8 {
                return Err(CheckpointError::Corrupt(format!("implausible rank {ndim}")).into());
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(self.u32()? as usize);
            }
            let elems: usize = shape.iter().product();
            if elems > 100_000_000 {
                return Err(
                    CheckpointError::Corrupt(format!("implausible tensor size {elems}")).into(),
                );
            }
            shapes.push(shape);
        }
        let mut out = Vec::with_capacity(count);
        for shape in shapes {
            let elems: usize = shape.iter().product();
            let mut data = Vec::with_capacity(elems);
            let mut b = [0u8; 4];
            for _ in 0..elems {
                self.fill(&mut b)?;
                data.push(f32::from_le_bytes(b) as f64);
            }
            out.push((shape, data));
        }
        Ok(out)
    }

    /// Reject trailing garbage so truncation and concatenation both fail.
    fn expect_eof(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.r.read(&mut b) {
            Ok(0) => Ok(()),
            Ok(_) => Err(CheckpointError::Corrupt("trailing bytes after payload".into()).into()),
            Err(e) => Err(e.into()),
        }
    }
}

// --- public API ------------------------------------------------------------

/// Save the toy conv generator.
pub fn save_toy_generator(path: &Path, gen: &ToyGenerator) -> Result<()> {
    let mut w = CkptWriter::create(path, KIND_GENERATOR)?;
    w.u8(ARCH_TOY)?;
    w.u32(gen.latent_dim() as u32)?;
    w.u32(gen.num_source_classes() as u32)?;
    let s = gen.image_shape();
    w.u32(s.channels as u32)?;
    w.u32(s.height as u32)?;
    w.u32(s.width as u32)?;
    w.tensors(&gen.tensors())?;
    w.finish()
}

/// Save the trainable per-class linear generator.
pub fn save_linear_generator(path: &Path, gen: &LinearGenerator) -> Result<()> {
    let mut w = CkptWriter::create(path, KIND_GENERATOR)?;
    w.u8(ARCH_LINEAR)?;
    w.u32(gen.latent_dim() as u32)?;
    w.u32(gen.num_source_classes() as u32)?;
    let s = gen.image_shape();
    w.u32(s.channels as u32)?;
    w.u32(s.height as u32)?;
    w.u32(s.width as u32)?;
    w.tensors(&gen.tensors())?;
    w.finish()
}

/// Load a generator of either architecture.
pub fn load_generator(path: &Path) -> Result<Box<dyn Generator>> {
    let (mut r, _) = CkptReader::open(path, KIND_GENERATOR)?;
    let arch = r.u8()?;
    let latent_dim = r.u32()? as usize;
    let num_classes = r.u32()? as usize;
    let shape = ImageShape::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let tensors = r.tensors()?;
    r.expect_eof()?;
    match arch {
        ARCH_TOY => Ok(Box::new(ToyGenerator::from_tensors(
            latent_dim,
            num_classes,
            shape,
            tensors,
        )?)),
        ARCH_LINEAR => Ok(Box::new(LinearGenerator::from_tensors(
            latent_dim,
            num_classes,
            shape,
            tensors,
        )?)),
        other => Err(CheckpointError::Corrupt(format!("unknown generator arch {other}")).into()),
    }
}

pub fn save_extractor(path: &Path, fe: &ToyExtractor) -> Result<()> {
    let mut w = CkptWriter::create(path, KIND_EXTRACTOR)?;
    let s = fe.image_shape();
    w.u32(s.channels as u32)?;
    w.u32(s.height as u32)?;
    w.u32(s.width as u32)?;
    w.u32(fe.feat_dim() as u32)?;
    w.tensors(&fe.tensors())?;
    w.finish()
}

pub fn load_extractor(path: &Path) -> Result<ToyExtractor> {
    let (mut r, _) = CkptReader::open(path, KIND_EXTRACTOR)?;
    let shape = ImageShape::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let feat_dim = r.u32()? as usize;
    let tensors = r.tensors()?;
    r.expect_eof()?;
    ToyExtractor::from_tensors(shape, feat_dim, tensors)
}

pub fn save_prompts(path: &Path, bank: &PromptBank) -> Result<()> {
    let mut w = CkptWriter::create(path, KIND_PROMPTS)?;
    w.u32(bank.num_classes() as u32)?;
    w.u32(bank.prompt_dim() as u32)?;
    w.u8(match bank.space {
        PromptSpace::Feature => 1,
        PromptSpace::Pixel => 2,
    })?;
    w.f64(bank.kappa)?;
    let tensors = vec![(
        vec![bank.num_classes(), bank.prompt_dim()],
        bank.prompts.iter().copied().collect::<Vec<f64>>(),
    )];
    w.tensors(&tensors)?;
    w.finish()
}

pub fn load_prompts(path: &Path) -> Result<PromptBank> {
    let (mut r, _) = CkptReader::open(path, KIND_PROMPTS)?;
    let num_classes = r.u32()? as usize;
    let prompt_dim = r.u32()? as usize;
    let space = match r.u8()? {
        1 => PromptSpace::Feature,
        2 => PromptSpace::Pixel,
        other => {
            return Err(CheckpointError::Corrupt(format!("unknown prompt space {other}")).into())
        }
    };
    let kappa = r.f64()?;
    let mut tensors = r.tensors()?;
    r.expect_eof()?;
    if tensors.len() != 1 {
        return Err(
            CheckpointError::Shape(format!("expected 1 tensor, found {}", tensors.len())).into(),
        );
    }
    let (shape, data) = tensors.remove(0);
    if shape != vec![num_classes, prompt_dim] {
        return Err(CheckpointError::Shape(format!(
            "prompt tensor shape {shape:?} does not match header ({num_classes}, {prompt_dim})"
        ))
        .into());
    }
    let prompts = ndarray::Array2::from_shape_vec((num_classes, prompt_dim), data)
        .expect("shape validated above");
    Ok(PromptBank {
        prompts,
        kappa,
        space,
    })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use ndarray::Array1;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn toy_generator_round_trips_bitwise() {
        let dir = tmp();
        let path = dir.path().join("gen.ckpt");
        let gen = ToyGenerator::new(16, 10, ImageShape::new(1, 16, 16), 3).unwrap();
        save_toy_generator(&path, &gen).unwrap();
        let loaded = load_generator(&path).unwrap();
        let mut rng = seeds::stream(4);
        let z = Array1::from_shape_simple_fn(16, || rng.sample::<f64, _>(StandardNormal));
        let a = gen.generate(&z, 7).unwrap();
        let b = loaded.generate(&z, 7).unwrap();
        assert_eq!(a, b, "round-tripped generator must reproduce images exactly");
        assert_eq!(gen.params_checksum(), loaded.params_checksum());
    }

    #[test]
    fn linear_generator_round_trips() {
        let dir = tmp();
        let path = dir.path().join("lin.ckpt");
        let gen = LinearGenerator::new(8, 3, ImageShape::new(1, 16, 16), 5).unwrap();
        save_linear_generator(&path, &gen).unwrap();
        let loaded = load_generator(&path).unwrap();
        let mut rng = seeds::stream(6);
        let z = Array1::from_shape_simple_fn(8, || rng.sample::<f64, _>(StandardNormal));
        assert_eq!(
            gen.generate(&z, 1).unwrap(),
            loaded.generate(&z, 1).unwrap()
        );
    }

    #[test]
    fn extractor_round_trips() {
        let dir = tmp();
        let path = dir.path().join("fe.ckpt");
        let fe = ToyExtractor::new(ImageShape::new(1, 16, 16), 64, 9).unwrap();
        save_extractor(&path, &fe).unwrap();
        let loaded = load_extractor(&path).unwrap();
        let mut rng = seeds::stream(10);
        let img = ndarray::Array3::from_shape_simple_fn((1, 16, 16), || rng.random::<f64>());
        assert_eq!(fe.extract(&img).unwrap(), loaded.extract(&img).unwrap());
        assert_eq!(fe.params_checksum(), loaded.params_checksum());
    }

    #[test]
    fn prompts_round_trip_within_f32() {
        use crate::prompt::PromptBank;
        let dir = tmp();
        let path = dir.path().join("p.ckpt");
        let bank = PromptBank::init(3, 64, PromptSpace::Feature, 16.0, 11).unwrap();
        save_prompts(&path, &bank).unwrap();
        let loaded = load_prompts(&path).unwrap();
        assert_eq!(loaded.kappa, 16.0);
        assert_eq!(loaded.space, PromptSpace::Feature);
        for (a, b) in bank.prompts.iter().zip(loaded.prompts.iter()) {
            assert!((a - b).abs() <= 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn missing_file_is_distinct() {
        let dir = tmp();
        let err = load_generator(&dir.path().join("nope.ckpt")).unwrap_err();
        assert!(matches!(
            err,
            crate::error::Error::Checkpoint(CheckpointError::Missing(_))
        ));
    }

    #[test]
    fn kind_mismatch_is_distinct() {
        let dir = tmp();
        let path = dir.path().join("fe.ckpt");
        let fe = ToyExtractor::new(ImageShape::new(1, 16, 16), 64, 9).unwrap();
        save_extractor(&path, &fe).unwrap();
        let err = load_generator(&path).unwrap_err();
        match err {
            crate::error::Error::Checkpoint(CheckpointError::KindMismatch { expected, found }) => {
                assert_eq!(expected, "generator");
                assert_eq!(found, "extractor");
            }
            other => panic!("expected kind mismatch, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tmp();
        let path = dir.path().join("gen.ckpt");
        let gen = ToyGenerator::new(16, 10, ImageShape::new(1, 16, 16), 3).unwrap();
        save_toy_generator(&path, &gen).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        let err = load_generator(&path).unwrap_err();
        assert!(matches!(
            err,
            crate::error::Error::Checkpoint(CheckpointError::Corrupt(_))
        ));
    }

    #[test]
    fn bad_magic_and_version_are_distinct() {
        let dir = tmp();
        let path = dir.path().join("gen.ckpt");
        let gen = ToyGenerator::new(16, 10, ImageShape::new(1, 16, 16), 3).unwrap();
        save_toy_generator(&path, &gen).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();

        let mut garbled = bytes.clone();
        garbled[0] = b'X';
        std::fs::write(&path, &garbled).unwrap();
        assert!(matches!(
            load_generator(&path).unwrap_err(),
            crate::error::Error::Checkpoint(CheckpointError::BadMagic(_))
        ));

        // Bump the version field (bytes 8..12).
        bytes[8] = 99;
        std::fs::write(&path, &bytes).unwrap();
        match load_generator(&path).unwrap_err() {
            crate::error::Error::Checkpoint(CheckpointError::Version { found, expected }) => {
                assert_eq!(found, 99);
                assert_eq!(expected, CHECKPOINT_VERSION);
            }
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn shape_inconsistency_is_distinct() {
        let dir = tmp();
        let a = dir.path().join("a.ckpt");
        // Header says latent 16 but tensors are for latent 8.
        let gen8 = LinearGenerator::new(8, 3, ImageShape::new(1, 16, 16), 5).unwrap();
        save_linear_generator(&a, &gen8).unwrap();
        let mut bytes = std::fs::read(&a).unwrap();
        // latent_dim field sits right after magic(8) + version(4) + kind(1) + arch(1).
        bytes[14..18].copy_from_slice(&16u32.to_le_bytes());
        std::fs::write(&a, &bytes).unwrap();
        let err = load_generator(&a).unwrap_err();
        assert!(matches!(
            err,
            crate::error::Error::Checkpoint(CheckpointError::Shape(_))
        ));
    }
}
