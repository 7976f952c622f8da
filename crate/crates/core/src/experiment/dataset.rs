//! Dataset ingestion: the builtin striped 3-class set and the
//! manifest-driven image directory format.
//!
//! Directory layout: a `labels` file with one `relative_path<TAB>class`
//! line per record, next to the image files themselves. The train/test
//! split is a seeded hash of the relative path, so it is reproducible
//! without a stored split and stable under manifest reordering.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array3;
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::backbones::ImageShape;
use crate::error::{Error, Result};
use crate::seeds;

/// Largest class index the manifest format accepts.
const MAX_CLASSES: usize = 1024;
/// Abort ingestion when more than this fraction of rows fail.
const FAILURE_BUDGET: f64 = 0.01;

pub const TOY3_TRAIN: usize = 2000;
pub const TOY3_TEST: usize = 1000;
pub const TOY3_SIDE: usize = 16;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<Array3<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub shape: ImageShape,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

/// Per-file diagnostics and split bookkeeping from one ingestion.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub rows: usize,
    pub train_len: usize,
    pub test_len: usize,
    pub num_classes: usize,
    pub failures: Vec<String>,
}

/// Load a dataset spec: the builtin name `toy3`, or a directory with a
/// `labels` manifest.
pub fn ingest_dataset(spec: &str, data_seed: u64) -> Result<(Dataset, Dataset, IngestReport)> {
    if spec == "toy3" {
        return Ok(toy3(data_seed));
    }
    ingest_directory(Path::new(spec), data_seed)
}

// ---------------------------------------------------------------------------
// builtin toy3

/// Three 16x16 stripe classes: horizontal, vertical, diagonal. Each
/// sample jitters frequency, amplitude, and (slightly) phase, then adds
/// pixel noise; class means stay well separated.
fn toy3(data_seed: u64) -> (Dataset, Dataset, IngestReport) {
    let shape = ImageShape::new(1, TOY3_SIDE, TOY3_SIDE);
    let mut rng = seeds::stream(seeds::derive(data_seed, "toy3"));
    let mut make_split = |n: usize| {
        let mut images = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 3;
            let freq = 2.0 + rng.random_range(-0.2..0.2);
            let amp = rng.random_range(0.32..0.42);
            let phase = 0.9 * class as f64 + rng.random_range(-0.25..0.25);
            let mut img = Array3::zeros((1, TOY3_SIDE, TOY3_SIDE));
            for y in 0..TOY3_SIDE {
                for x in 0..TOY3_SIDE {
                    let t = match class {
                        0 => y as f64 + 0.5,
                        1 => x as f64 + 0.5,
                        _ => (x as f64 + y as f64 + 1.0) / 2.0,
                    };
                    let wave =
                        (2.0 * std::f64::consts::PI * freq * t / TOY3_SIDE as f64 + phase).sin();
                    let noise: f64 = rng.sample(StandardNormal);
                    img[(0, y, x)] = (0.5 + amp * wave + 0.08 * noise).clamp(0.0, 1.0);
                }
            }
            images.push(img);
            labels.push(class);
        }
        Dataset {
            images,
            labels,
            num_classes: 3,
            shape,
        }
    };
    let train = make_split(TOY3_TRAIN);
    let test = make_split(TOY3_TEST);
    let report = IngestReport {
        rows: TOY3_TRAIN + TOY3_TEST,
        train_len: train.len(),
        test_len: test.len(),
        num_classes: 3,
        failures: Vec::new(),
    };
    (train, test, report)
}

// ---------------------------------------------------------------------------
// manifest directory

/// Seeded 90/10 split: hash of (seed, relative path), one decile to test.
fn goes_to_test(data_seed: u64, relative: &str) -> bool {
    let mut hasher = Sha256::new();
    hasher.update(data_seed.to_le_bytes());
    hasher.update(b"split");
    hasher.update(relative.as_bytes());
    let digest = hasher.finalize();
    let mut eight = [0u8; 8];
    eight.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(eight) % 10 == 0
}

fn load_image(path: &Path, want_channels: Option<usize>) -> std::result::Result<Array3<f64>, String> {
    let decoded = image::open(path).map_err(|e| format!("unreadable image: {e}"))?;
    let channels = match want_channels {
        Some(c) => c,
        // First file decides between grayscale and RGB for the run.
        None => match decoded.color().channel_count() {
            1 | 2 => 1,
            _ => 3,
        },
    };
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let mut img = Array3::zeros((channels, h, w));
    if channels == 1 {
        let gray = decoded.to_luma8();
        for y in 0..h {
            for x in 0..w {
                img[(0, y, x)] = gray.get_pixel(x as u32, y as u32).0[0] as f64 / 255.0;
            }
        }
    } else {
        let rgb = decoded.to_rgb8();
        for y in 0..h {
            for x in 0..w {
                let px = rgb.get_pixel(x as u32, y as u32).0;
                for c in 0..3 {
                    img[(c, y, x)] = px[c] as f64 / 255.0;
                }
            }
        }
    }
    Ok(img)
}

fn ingest_directory(dir: &Path, data_seed: u64) -> Result<(Dataset, Dataset, IngestReport)> {
    let manifest_path = dir.join("labels");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
        Error::Dataset(format!(
            "missing manifest {}: {e}",
            manifest_path.display()
        ))
    })?;
    let mut report = IngestReport::default();
    let mut loaded: Vec<(String, Array3<f64>, usize)> = Vec::new();
    let mut channels: Option<usize> = None;
    let mut shape: Option<ImageShape> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        report.rows += 1;
        let fail = |msg: String, report: &mut IngestReport| {
            report.failures.push(format!("line {}: {msg}", lineno + 1));
        };
        let Some((rel, label_text)) = line.split_once('\t') else {
            fail(format!("expected `path<TAB>class`, got {line:?}"), &mut report);
            continue;
        };
        let label: usize = match label_text.trim().parse() {
            Ok(v) => v,
            Err(_) => {
                fail(format!("bad class index {label_text:?}"), &mut report);
                continue;
            }
        };
        if label >= MAX_CLASSES {
            fail(format!("class index {label} out of range"), &mut report);
            continue;
        }
        let image = match load_image(&dir.join(rel), channels) {
            Ok(img) => img,
            Err(msg) => {
                fail(format!("{rel}: {msg}"), &mut report);
                continue;
            }
        };
        let (c, h, w) = image.dim();
        let this_shape = ImageShape::new(c, h, w);
        match shape {
            None => {
                shape = Some(this_shape);
                channels = Some(c);
            }
            Some(expected) if expected != this_shape => {
                fail(
                    format!("{rel}: image is {this_shape}, expected {expected}"),
                    &mut report,
                );
                continue;
            }
            Some(_) => {}
        }
        loaded.push((rel.to_string(), image, label));
    }
    if report.rows == 0 {
        return Err(Error::Dataset(format!(
            "manifest {} has no data rows",
            manifest_path.display()
        )));
    }
    let failure_rate = report.failures.len() as f64 / report.rows as f64;
    if failure_rate > FAILURE_BUDGET {
        return Err(Error::Dataset(format!(
            "{} of {} manifest rows failed (tolerated fraction {FAILURE_BUDGET}); first: {}",
            report.failures.len(),
            report.rows,
            report.failures.first().cloned().unwrap_or_default()
        )));
    }

    // Compact class indices are required: every class up to the max
    // must actually occur.
    let mut class_seen: HashMap<usize, usize> = HashMap::new();
    for (_, _, label) in &loaded {
        *class_seen.entry(*label).or_insert(0) += 1;
    }
    let num_classes = class_seen.keys().max().map_or(0, |m| m + 1);
    for c in 0..num_classes {
        if !class_seen.contains_key(&c) {
            return Err(Error::Dataset(format!(
                "class {c} has no records but class {} exists",
                num_classes - 1
            )));
        }
    }

    let shape = shape.expect("at least one image loaded");
    let mut train = Dataset {
        images: Vec::new(),
        labels: Vec::new(),
        num_classes,
        shape,
    };
    let mut test = Dataset {
        images: Vec::new(),
        labels: Vec::new(),
        num_classes,
        shape,
    };
    for (rel, image, label) in loaded {
        let side = if goes_to_test(data_seed, &rel) {
            &mut test
        } else {
            &mut train
        };
        side.images.push(image);
        side.labels.push(label);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Dataset(format!(
            "split produced {} train / {} test records; need both nonempty",
            train.len(),
            test.len()
        )));
    }
    report.train_len = train.len();
    report.test_len = test.len();
    report.num_classes = num_classes;
    Ok((train, test, report))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy3_sizes_and_balance() {
        let (train, test, report) = ingest_dataset("toy3", 7).unwrap();
        assert_eq!(train.len(), 2000);
        assert_eq!(test.len(), 1000);
        assert_eq!(report.num_classes, 3);
        let tc = train.class_counts();
        assert_eq!(tc.iter().sum::<usize>(), 2000);
        assert!(tc.iter().all(|&c| (666..=667).contains(&c)), "{tc:?}");
        let sc = test.class_counts();
        assert!(sc.iter().all(|&c| (333..=334).contains(&c)), "{sc:?}");
        assert_eq!(train.shape, ImageShape::new(1, 16, 16));
    }

    #[test]
    fn toy3_is_deterministic_and_bounded() {
        let (a, _, _) = ingest_dataset("toy3", 7).unwrap();
        let (b, _, _) = ingest_dataset("toy3", 7).unwrap();
        let (c, _, _) = ingest_dataset("toy3", 8).unwrap();
        assert_eq!(a.images[0], b.images[0]);
        assert_eq!(a.images[1999], b.images[1999]);
        assert_ne!(a.images[0], c.images[0]);
        for img in a.images.iter().take(50) {
            assert!(img.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn toy3_class_means_are_separated() {
        let (train, _, _) = ingest_dataset("toy3", 7).unwrap();
        let mut means = vec![Array3::<f64>::zeros((1, 16, 16)); 3];
        let counts = train.class_counts();
        for (img, &y) in train.images.iter().zip(&train.labels) {
            means[y] += img;
        }
        for (mean, &count) in means.iter_mut().zip(&counts) {
            *mean /= count as f64;
        }
        for a in 0..3 {
            for b in (a + 1)..3 {
                let dist: f64 = means[a]
                    .iter()
                    .zip(means[b].iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                assert!(dist > 1.0, "classes {a}/{b} too close: {dist}");
            }
        }
    }

    fn write_png(path: &Path, side: u32, value: u8) {
        let img = image::GrayImage::from_pixel(side, side, image::Luma([value]));
        img.save(path).unwrap();
    }

    #[test]
    fn manifest_ingestion_small_valid_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = String::new();
        for i in 0..40 {
            let name = format!("img{i}.png");
            write_png(&dir.path().join(&name), 4, (i * 6) as u8);
            manifest.push_str(&format!("{name}\t{}\n", i % 2));
        }
        std::fs::write(dir.path().join("labels"), manifest).unwrap();
        let (train, test, report) =
            ingest_dataset(dir.path().to_str().unwrap(), 3).unwrap();
        assert_eq!(report.num_classes, 2);
        assert_eq!(train.len() + test.len(), 40);
        assert!(report.failures.is_empty());
        assert_eq!(train.shape, ImageShape::new(1, 4, 4));
        // Split is pure in (seed, path): re-ingesting reproduces it.
        let (train2, _, _) = ingest_dataset(dir.path().to_str().unwrap(), 3).unwrap();
        assert_eq!(train.labels, train2.labels);
    }

    #[test]
    fn one_bad_row_in_two_hundred_is_tolerated_and_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = String::new();
        for i in 0..199 {
            let name = format!("img{i}.png");
            write_png(&dir.path().join(&name), 4, 128);
            manifest.push_str(&format!("{name}\t{}\n", i % 2));
        }
        manifest.push_str("missing.png\t0\n");
        std::fs::write(dir.path().join("labels"), manifest).unwrap();
        let (train, test, report) =
            ingest_dataset(dir.path().to_str().unwrap(), 3).unwrap();
        assert_eq!(train.len() + test.len(), 199);
        assert_eq!(report.failures.len(), 1);
        assert!(report.failures[0].contains("missing.png"));
    }

    #[test]
    fn excess_failures_abort() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("ok.png"), 4, 10);
        write_png(&dir.path().join("ok2.png"), 4, 10);
        let manifest = "ok.png\t0\nok2.png\t1\ngone1.png\t0\ngone2.png\t1\n";
        std::fs::write(dir.path().join("labels"), manifest).unwrap();
        let err = ingest_dataset(dir.path().to_str().unwrap(), 3).unwrap_err();
        assert!(matches!(err, Error::Dataset(_)), "{err:?}");
    }

    #[test]
    fn missing_manifest_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ingest_dataset(dir.path().to_str().unwrap(), 3).is_err());
    }

    #[test]
    fn malformed_rows_are_diagnosed_per_line() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..200 {
            write_png(&dir.path().join(format!("img{i}.png")), 4, 0);
        }
        let mut manifest = String::new();
        for i in 0..199 {
            manifest.push_str(&format!("img{i}.png\t{}\n", i % 2));
        }
        manifest.push_str("img199.png notab\n");
        std::fs::write(dir.path().join("labels"), manifest).unwrap();
        let (_, _, report) = ingest_dataset(dir.path().to_str().unwrap(), 3).unwrap();
        assert_eq!(report.failures.len(), 1);
        assert!(report.failures[0].contains("line 200"));
    }

    #[test]
    fn gap_in_class_indices_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = String::new();
        for i in 0..20 {
            let name = format!("img{i}.png");
            write_png(&dir.path().join(&name), 4, 50);
            // Classes 0 and 2 only; class 1 never occurs.
            manifest.push_str(&format!("{name}\t{}\n", (i % 2) * 2));
        }
        std::fs::write(dir.path().join("labels"), manifest).unwrap();
        assert!(ingest_dataset(dir.path().to_str().unwrap(), 3).is_err());
    }
}
