//! IDX reader for the MNIST files, raw or gzip-compressed.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seeding;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

/// One split of the dataset: `len` images of 784 bytes plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS]
    }

    /// Indices of every sample with label `class`, in file order.
    pub fn indices_of(&self, class: usize) -> Vec<u32> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l as usize == class)
            .map(|(i, _)| i as u32)
            .collect()
    }

    pub fn label_histogram(&self, classes: usize) -> Vec<usize> {
        let mut h = vec![0; classes];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnistData {
    pub train: Split,
    pub test: Split,
}

impl MnistData {
    pub fn num_classes(&self) -> usize {
        10
    }

    /// Small learnable stand-in with the same geometry: each class is a
    /// fixed random stroke pattern with per-sample stroke intensity noise and
    /// a one-pixel jitter.
    /// Used by tests that must not depend on the real files.
    pub fn synthetic(train_per_class: usize, test_per_class: usize, seed: u64) -> Self {
        let mut proto_rng = seeding::rng(seed, &[seeding::tag("synthetic-prototypes")]);
        let prototypes: Vec<Vec<u8>> = (0..10)
            .map(|_| {
                let mut img = vec![0u8; IMAGE_PIXELS];
                // a few thick random strokes
                for _ in 0..4 {
                    let (mut r, mut c) = (proto_rng.random_range(6..22), proto_rng.random_range(6..22));
                    let (dr, dc): (i32, i32) = (proto_rng.random_range(-1..=1), proto_rng.random_range(-1..=1));
                    for _ in 0..10 {
                        for (rr, cc) in [(r, c), (r + 1, c), (r, c + 1)] {
                            if rr < IMAGE_SIDE && cc < IMAGE_SIDE {
                                img[rr * IMAGE_SIDE + cc] = 255;
                            }
                        }
                        r = (r as i32 + dr).clamp(2, 25) as usize;
                        c = (c as i32 + dc).clamp(2, 25) as usize;
                    }
                }
                img
            })
            .collect();
        let make = |per_class: usize, tag: &str| {
            let mut rng = seeding::rng(seed, &[seeding::tag(tag)]);
            let mut images = Vec::with_capacity(per_class * 10 * IMAGE_PIXELS);
            let mut labels = Vec::with_capacity(per_class * 10);
            for i in 0..per_class * 10 {
                let class = i % 10;
                let shift: i32 = rng.random_range(-1..=1);
                for p in 0..IMAGE_PIXELS {
                    let src = p as i32 + shift;
                    let base = if (0..IMAGE_PIXELS as i32).contains(&src) {
                        prototypes[class][src as usize]
                    } else {
                        0
                    };
                    // dark background, noisy strokes
                    let px = if base == 0 {
                        0
                    } else {
                        (base as i32 - rng.random_range(0..=120)).max(0)
                    };
                    images.push(px as u8);
                }
                labels.push(class as u8);
            }
            Split { images, labels }
        };
        Self {
            train: make(train_per_class, "synthetic-train"),
            test: make(test_per_class, "synthetic-test"),
        }
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Data {
                path: path.to_path_buf(),
                reason: format!("gzip: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Parses an IDX3 image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bad = |reason: String| Error::Data {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 16 {
        return Err(bad("truncated header".into()));
    }
    let magic = be_u32(bytes, 0);
    if magic != IMAGE_MAGIC {
        return Err(bad(format!("bad image magic {magic:#010x}")));
    }
    let (n, rows, cols) = (
        be_u32(bytes, 4) as usize,
        be_u32(bytes, 8) as usize,
        be_u32(bytes, 12) as usize,
    );
    let want = n * rows * cols;
    if bytes.len() - 16 < want {
        return Err(bad(format!("truncated: {} of {want} pixel bytes", bytes.len() - 16)));
    }
    Ok((n, rows, cols, bytes[16..16 + want].to_vec()))
}

/// Parses an IDX1 label file.
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let bad = |reason: String| Error::Data {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 8 {
        return Err(bad("truncated header".into()));
    }
    let magic = be_u32(bytes, 0);
    if magic != LABEL_MAGIC {
        return Err(bad(format!("bad label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4) as usize;
    if bytes.len() - 8 < n {
        return Err(bad(format!("truncated: {} of {n} labels", bytes.len() - 8)));
    }
    let labels = bytes[8..8 + n].to_vec();
    if let Some(l) = labels.iter().find(|&&l| l > 9) {
        return Err(bad(format!("label {l} out of range")));
    }
    Ok(labels)
}

fn locate(dir: &Path, stem: &str) -> Result<PathBuf> {
    let alternatives = [
        stem.to_string(),
        format!("{stem}.gz"),
        stem.replacen("-idx", ".idx", 1),
        format!("{}.gz", stem.replacen("-idx", ".idx", 1)),
    ];
    alternatives
        .iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::MissingData(format!("{stem}[.gz] not found in {}", dir.display())))
}

fn load_split(dir: &Path, images: &str, labels: &str) -> Result<Split> {
    let img_path = locate(dir, images)?;
    let lbl_path = locate(dir, labels)?;
    let (n, rows, cols, pixels) = parse_idx_images(&read_maybe_gz(&img_path)?, &img_path)?;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(Error::Data {
            path: img_path,
            reason: format!("expected 28x28 images, found {rows}x{cols}"),
        });
    }
    let labels = parse_idx_labels(&read_maybe_gz(&lbl_path)?, &lbl_path)?;
    if labels.len() != n {
        return Err(Error::Data {
            path: lbl_path,
            reason: format!("{} labels for {n} images", labels.len()),
        });
    }
    Ok(Split {
        images: pixels,
        labels,
    })
}

/// Loads the four standard MNIST files from `dir`.
pub fn load_mnist(dir: impl AsRef<Path>) -> Result<MnistData> {
    let dir = dir.as_ref();
    Ok(MnistData {
        train: load_split(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte")?,
        test: load_split(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?,
    })
}

/// Data directory from `CLSER_DATA_DIR`, falling back to `data/mnist`
/// under the workspace root.
pub fn default_data_dir() -> PathBuf {
    if let Ok(dir) = std::env::var("CLSER_DATA_DIR") {
        return PathBuf::from(dir);
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}
