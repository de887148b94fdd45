//! Dataset loaders (IDX for MNIST-style images, whitespace text for UCI HAR)
//! and synthetic generators.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::encoding::normalize_l2;
use crate::error::{Error, Result};
use crate::hdc::{Label, LabeledSet};

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;
pub const HAR_FEATURES: usize = 561;
pub const HAR_CLASSES: usize = 6;

/// Images from an IDX file, scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Vec<f64>>,
}

impl IdxImages {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }
}

fn truncated(path: &Path, what: &str) -> impl Fn(io::Error) -> Error {
    let msg = format!("{}: {what}", path.display());
    move |e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::Truncated(msg.clone())
        } else {
            Error::Io(e)
        }
    }
}

fn read_header<R: Read>(r: &mut R, path: &Path, magic: u32, ndims: usize) -> Result<Vec<usize>> {
    let found = r.read_u32::<BigEndian>().map_err(truncated(path, "header"))?;
    if found != magic {
        return Err(Error::BadMagic { expected: magic, found });
    }
    (0..ndims)
        .map(|_| {
            r.read_u32::<BigEndian>()
                .map(|v| v as usize)
                .map_err(truncated(path, "header"))
        })
        .collect()
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let dims = read_header(&mut r, path, IDX_IMAGES_MAGIC, 3)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let d = rows * cols;
    let mut buf = vec![0u8; d];
    let mut pixels = Vec::with_capacity(n);
    for i in 0..n {
        r.read_exact(&mut buf)
            .map_err(truncated(path, &format!("image {i} of {n}")))?;
        pixels.push(buf.iter().map(|&p| p as f64 / 255.0).collect());
    }
    Ok(IdxImages { rows, cols, pixels })
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let n = read_header(&mut r, path, IDX_LABELS_MAGIC, 1)?[0];
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)
        .map_err(truncated(path, &format!("{n} labels")))?;
    Ok(buf.into_iter().map(usize::from).collect())
}

/// Writes images back in IDX form. Pixels are mapped to bytes by
/// `round(255 p)`, which inverts the loader exactly.
pub fn write_idx_images<W: Write>(out: &mut W, images: &IdxImages) -> Result<()> {
    out.write_u32::<BigEndian>(IDX_IMAGES_MAGIC)?;
    for v in [images.len(), images.rows, images.cols] {
        out.write_u32::<BigEndian>(v as u32)?;
    }
    for img in &images.pixels {
        let bytes: Vec<u8> = img
            .iter()
            .map(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        out.write_all(&bytes)?;
    }
    Ok(())
}

pub fn write_idx_labels<W: Write>(out: &mut W, labels: &[usize]) -> Result<()> {
    out.write_u32::<BigEndian>(IDX_LABELS_MAGIC)?;
    out.write_u32::<BigEndian>(labels.len() as u32)?;
    let bytes: Vec<u8> = labels.iter().map(|&l| l as u8).collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// A dataset with its standard train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub name: String,
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<usize>,
    pub test_x: Vec<Vec<f64>>,
    pub test_y: Vec<usize>,
    pub d: usize,
    pub k: usize,
}

impl RawDataset {
    /// Checks lengths, widths and label ranges.
    pub fn validate(&self) -> Result<()> {
        for (x, y) in [(&self.train_x, &self.train_y), (&self.test_x, &self.test_y)] {
            if x.len() != y.len() {
                return Err(Error::CountMismatch {
                    images: x.len(),
                    labels: y.len(),
                });
            }
            for (row, p) in x.iter().enumerate() {
                if p.len() != self.d {
                    return Err(Error::RaggedRow {
                        row,
                        expected: self.d,
                        actual: p.len(),
                    });
                }
            }
            if let Some(&l) = y.iter().find(|&&l| l >= self.k) {
                return Err(Error::InvalidParameter(format!("label {l} outside 0..{}", self.k)));
            }
        }
        Ok(())
    }

    /// Keeps the first `train` training and `test` test samples.
    pub fn truncate(&mut self, train: Option<usize>, test: Option<usize>) {
        if let Some(n) = train {
            self.train_x.truncate(n);
            self.train_y.truncate(n);
        }
        if let Some(n) = test {
            self.test_x.truncate(n);
            self.test_y.truncate(n);
        }
    }
}

/// Loads an MNIST-layout directory (also used by Fashion-MNIST). Files must
/// be uncompressed.
pub fn load_mnist_dir(dir: impl AsRef<Path>, name: &str) -> Result<RawDataset> {
    let dir = dir.as_ref();
    let split = |images: &str, labels: &str| -> Result<(IdxImages, Vec<usize>)> {
        let x = load_idx_images(dir.join(images))?;
        let y = load_idx_labels(dir.join(labels))?;
        if x.len() != y.len() {
            return Err(Error::CountMismatch {
                images: x.len(),
                labels: y.len(),
            });
        }
        Ok((x, y))
    };
    let (train, train_y) = split("train-images-idx3-ubyte", "train-labels-idx1-ubyte")?;
    let (test, test_y) = split("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?;
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            actual: test.dim(),
        });
    }
    let k = train_y.iter().chain(&test_y).max().map_or(0, |&m| m + 1);
    let ds = RawDataset {
        name: name.to_string(),
        d: train.dim(),
        train_x: train.pixels,
        train_y,
        test_x: test.pixels,
        test_y,
        k,
    };
    ds.validate()?;
    Ok(ds)
}

fn parse_matrix<R: BufRead>(input: R, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    token: t.to_string(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != width {
            return Err(Error::RaggedRow {
                row: rows.len(),
                expected: width,
                actual: row.len(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

fn parse_har_labels<R: BufRead>(input: R) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: i64 = t.parse().map_err(|_| Error::Parse {
            line: i + 1,
            token: t.to_string(),
        })?;
        if !(1..=HAR_CLASSES as i64).contains(&v) {
            return Err(Error::LabelOutOfRange { line: i + 1, label: v });
        }
        labels.push(v as usize - 1);
    }
    Ok(labels)
}

fn har_file(dir: &Path, split: &str, stem: &str) -> PathBuf {
    let flat = dir.join(format!("{stem}_{split}.txt"));
    if flat.exists() {
        flat
    } else {
        dir.join(split).join(format!("{stem}_{split}.txt"))
    }
}

/// Loads UCI HAR from `dir`, either flat or in the distribution's
/// `train/` and `test/` sub-directories.
pub fn load_har(dir: impl AsRef<Path>) -> Result<RawDataset> {
    let dir = dir.as_ref();
    let open = |p: PathBuf| File::open(p).map(BufReader::new);
    let mut splits = Vec::new();
    for split in ["train", "test"] {
        let x = parse_matrix(open(har_file(dir, split, "X"))?, HAR_FEATURES)?;
        let y = parse_har_labels(open(har_file(dir, split, "y"))?)?;
        if x.len() != y.len() {
            return Err(Error::CountMismatch {
                images: x.len(),
                labels: y.len(),
            });
        }
        splits.push((x, y));
    }
    let (test_x, test_y) = splits.pop().unwrap();
    let (train_x, train_y) = splits.pop().unwrap();
    Ok(RawDataset {
        name: "har".into(),
        train_x,
        train_y,
        test_x,
        test_y,
        d: HAR_FEATURES,
        k: HAR_CLASSES,
    })
}

/// Scales every point to unit norm; zero points stay zero.
pub fn preprocess(mut raw: RawDataset) -> RawDataset {
    for x in raw.train_x.iter_mut().chain(raw.test_x.iter_mut()) {
        *x = normalize_l2(x);
    }
    raw
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Two unit-variance Gaussian clouds at `±(margin/2) u` for a random unit
/// direction `u`. Points with `y <x, u> < margin/4` are redrawn, so the set
/// is separable by `u` with functional margin at least `margin/4`.
/// Points alternate `+1, -1`.
pub fn make_separable(n_per_class: usize, d: usize, margin: f64, seed: u64) -> Result<LabeledSet> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "margin must be positive, got {margin}"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidDimension("d must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = normalize_l2(&gaussian_vec(&mut rng, d));
    let mut points = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for _ in 0..n_per_class {
        for y in [Label::Pos, Label::Neg] {
            let x = loop {
                let mut x = gaussian_vec(&mut rng, d);
                crate::linalg::axpy(y.sign() * margin / 2.0, &u, &mut x);
                if y.sign() * crate::linalg::dot(&x, &u) >= margin / 4.0 {
                    break x;
                }
            };
            points.push(x);
            labels.push(y);
        }
    }
    LabeledSet::new(points, labels)
}

/// Direction used by [`make_separable`] for the same seed and `d`.
pub fn separable_direction(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    normalize_l2(&gaussian_vec(&mut rng, d))
}

/// K Gaussian blobs with centres drawn from `N(0, spread^2 I)` and unit
/// noise, split into train and test. Used as an offline stand-in dataset.
pub fn make_blobs(k: usize, n_train: usize, n_test: usize, d: usize, spread: f64, seed: u64) -> Result<RawDataset> {
    if k < 2 || d == 0 {
        return Err(Error::InvalidParameter(format!(
            "need k >= 2 and d >= 1, got k={k}, d={d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..k)
        .map(|_| gaussian_vec(&mut rng, d).into_iter().map(|v| v * spread).collect())
        .collect();
    let mut draw = |n: usize| {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % k;
            let mut x = gaussian_vec(&mut rng, d);
            crate::linalg::axpy(1.0, &centres[c], &mut x);
            xs.push(x);
            ys.push(c);
        }
        (xs, ys)
    };
    let (train_x, train_y) = draw(n_train);
    let (test_x, test_y) = draw(n_test);
    Ok(RawDataset {
        name: "blobs".into(),
        train_x,
        train_y,
        test_x,
        test_y,
        d,
        k,
    })
}
