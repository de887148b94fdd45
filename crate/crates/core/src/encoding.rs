//! Seeded random feature maps from the input space into hyperdimensional space.
//!
//! Two maps are provided:
//!
//! * `OnlineHd`: `h_k = cos(<x, W[:,k]> + phi_k) * sin(<x, W[:,k]>)` with a
//!   standard normal `W` (d x D) and phases uniform on `[0, 2pi)`.
//! * `Rff`: random Fourier features for the RBF kernel of width `sigma`.
//!   `W` is d x D/2 with entries `N(0, 1/sigma^2)`; the output is
//!   `sqrt(2/D) * [cos(xW), sin(xW)]`, so that `<h(x), h(y)>` is an unbiased
//!   estimate of `exp(-|x - y|^2 / (2 sigma^2))`.
//!
//! Parameters are drawn from a ChaCha8 stream seeded with `seed`: all of `W`
//! in row-major order first, then `phi`. Equal `(kind, d, D, sigma, seed)`
//! therefore reproduce identical parameters.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::ops::Deref;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg;

/// Norms at or below this are treated as zero.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    OnlineHd,
    Rff,
}

impl EncoderKind {
    fn tag(self) -> u64 {
        match self {
            EncoderKind::OnlineHd => 0,
            EncoderKind::Rff => 1,
        }
    }

    fn from_tag(tag: u64) -> Option<Self> {
        match tag {
            0 => Some(EncoderKind::OnlineHd),
            1 => Some(EncoderKind::Rff),
            _ => None,
        }
    }
}

/// An encoded data point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HyperVector(Vec<f64>);

impl HyperVector {
    pub fn new(values: Vec<f64>) -> Self {
        HyperVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        HyperVector(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for HyperVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for HyperVector {
    fn from(v: Vec<f64>) -> Self {
        HyperVector(v)
    }
}

/// Anything that maps raw inputs to hypervectors.
pub trait FeatureMap: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn encode(&self, x: &[f64]) -> Result<HyperVector>;

    fn encode_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<HyperVector>> {
        xs.par_iter().map(|x| self.encode(x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    kind: EncoderKind,
    input_dim: usize,
    output_dim: usize,
    sigma: f64,
    seed: u64,
    /// Row-major, `input_dim x projection_width()`.
    weights: Vec<f64>,
    /// Phase shifts; empty for `Rff`.
    phases: Vec<f64>,
}

impl Encoder {
    /// Samples a new encoder. `sigma` is only used by `Rff`.
    pub fn new(kind: EncoderKind, input_dim: usize, output_dim: usize, sigma: f64, seed: u64) -> Result<Self> {
        validate_shape(kind, input_dim, output_dim, sigma)?;
        let width = projection_width(kind, output_dim);
        let scale = match kind {
            EncoderKind::OnlineHd => 1.0,
            EncoderKind::Rff => 1.0 / sigma,
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<f64> = (0..input_dim * width)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let phases: Vec<f64> = match kind {
            EncoderKind::OnlineHd => (0..output_dim).map(|_| TAU * rng.random::<f64>()).collect(),
            EncoderKind::Rff => Vec::new(),
        };

        Ok(Encoder {
            kind,
            input_dim,
            output_dim,
            sigma,
            seed,
            weights,
            phases,
        })
    }

    /// Builds an encoder from explicit parameters (used by loaders and tests).
    pub fn from_parts(
        kind: EncoderKind,
        input_dim: usize,
        output_dim: usize,
        sigma: f64,
        seed: u64,
        weights: Vec<f64>,
        phases: Vec<f64>,
    ) -> Result<Self> {
        validate_shape(kind, input_dim, output_dim, sigma)?;
        check_len(input_dim * projection_width(kind, output_dim), weights.len())?;
        let expected_phases = match kind {
            EncoderKind::OnlineHd => output_dim,
            EncoderKind::Rff => 0,
        };
        check_len(expected_phases, phases.len())?;
        Ok(Encoder {
            kind,
            input_dim,
            output_dim,
            sigma,
            seed,
            weights,
            phases,
        })
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Number of columns of the projection matrix.
    pub fn projection_width(&self) -> usize {
        projection_width(self.kind, self.output_dim)
    }

    /// `x W`, accumulated row by row.
    fn project(&self, x: &[f64]) -> Vec<f64> {
        let width = self.projection_width();
        let mut z = vec![0.0; width];
        for (xi, row) in x.iter().zip(self.weights.chunks_exact(width)) {
            // zero inputs contribute nothing; MNIST is mostly zeros
            if *xi != 0.0 {
                linalg::axpy(*xi, row, &mut z);
            }
        }
        z
    }

    /// Writes the little-endian binary form: kind tag, d, D, sigma, seed,
    /// then `W` and `phi` as 64-bit floats.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_u64::<LittleEndian>(self.kind.tag())?;
        out.write_u64::<LittleEndian>(self.input_dim as u64)?;
        out.write_u64::<LittleEndian>(self.output_dim as u64)?;
        out.write_f64::<LittleEndian>(self.sigma)?;
        out.write_u64::<LittleEndian>(self.seed)?;
        for v in self.weights.iter().chain(&self.phases) {
            out.write_f64::<LittleEndian>(*v)?;
        }
        Ok(())
    }

    /// Reads the stored matrices back; nothing is re-sampled.
    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let tag = read_u64(input)?;
        let kind =
            EncoderKind::from_tag(tag).ok_or_else(|| Error::CorruptModel(format!("unknown encoder tag {tag}")))?;
        let input_dim = read_u64(input)? as usize;
        let output_dim = read_u64(input)? as usize;
        let sigma = input
            .read_f64::<LittleEndian>()
            .map_err(|_| Error::CorruptModel("truncated encoder header".into()))?;
        let seed = read_u64(input)?;
        validate_shape(kind, input_dim, output_dim, sigma).map_err(|e| Error::CorruptModel(e.to_string()))?;
        let n_weights = input_dim
            .checked_mul(projection_width(kind, output_dim))
            .ok_or_else(|| Error::CorruptModel("encoder shape overflow".into()))?;
        let weights = read_f64s(input, n_weights)?;
        let phases = match kind {
            EncoderKind::OnlineHd => read_f64s(input, output_dim)?,
            EncoderKind::Rff => Vec::new(),
        };
        Encoder::from_parts(kind, input_dim, output_dim, sigma, seed, weights, phases)
    }
}

impl FeatureMap for Encoder {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn encode(&self, x: &[f64]) -> Result<HyperVector> {
        check_len(self.input_dim, x.len())?;
        let z = self.project(x);
        let values = match self.kind {
            EncoderKind::OnlineHd => z
                .iter()
                .zip(&self.phases)
                .map(|(zk, phi)| (zk + phi).cos() * zk.sin())
                .collect(),
            EncoderKind::Rff => {
                let scale = (2.0 / self.output_dim as f64).sqrt();
                let mut v = Vec::with_capacity(self.output_dim);
                v.extend(z.iter().map(|zk| scale * zk.cos()));
                v.extend(z.iter().map(|zk| scale * zk.sin()));
                v
            }
        };
        Ok(HyperVector(values))
    }
}

fn projection_width(kind: EncoderKind, output_dim: usize) -> usize {
    match kind {
        EncoderKind::OnlineHd => output_dim,
        EncoderKind::Rff => output_dim / 2,
    }
}

fn validate_shape(kind: EncoderKind, input_dim: usize, output_dim: usize, sigma: f64) -> Result<()> {
    if input_dim == 0 {
        return Err(Error::InvalidDimension("input dimension must be positive".into()));
    }
    if output_dim == 0 {
        return Err(Error::InvalidDimension("output dimension must be positive".into()));
    }
    if kind == EncoderKind::Rff {
        if !output_dim.is_multiple_of(2) {
            return Err(Error::InvalidDimension(format!(
                "rff output dimension must be even, got {output_dim}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rff sigma must be positive, got {sigma}"
            )));
        }
    }
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    input
        .read_u64::<LittleEndian>()
        .map_err(|_| Error::CorruptModel("truncated encoder header".into()))
}

pub(crate) fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![
        0u8;
        n.checked_mul(8)
            .ok_or_else(|| Error::CorruptModel("length overflow".into()))?
    ];
    input
        .read_exact(&mut buf)
        .map_err(|_| Error::CorruptModel(format!("expected {n} floats, file ended early")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Scales `x` to unit Euclidean norm; vectors with norm `<= 1e-12` are
/// returned unchanged.
pub fn normalize_l2(x: &[f64]) -> Vec<f64> {
    let n = linalg::norm(x);
    if n > NORM_EPS {
        x.iter().map(|v| v / n).collect()
    } else {
        x.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn normalize_examples() {
        let v = normalize_l2(&[3.0, 4.0]);
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert_eq!(normalize_l2(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(normalize_l2(&[5.0]), vec![1.0]);
    }

    #[test]
    fn onlinehd_shape_matches_table_defaults() {
        let enc = Encoder::new(EncoderKind::OnlineHd, 784, 5000, 1.0, 42).unwrap();
        assert_eq!(enc.weights().len(), 784 * 5000);
        assert_eq!(enc.phases().len(), 5000);
        assert!(enc.phases().iter().all(|p| (0.0..TAU).contains(p)));
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Encoder::new(EncoderKind::OnlineHd, 7, 33, 1.0, 9).unwrap();
        let b = Encoder::new(EncoderKind::OnlineHd, 7, 33, 1.0, 9).unwrap();
        assert_eq!(a, b);
        let c = Encoder::new(EncoderKind::OnlineHd, 7, 33, 1.0, 10).unwrap();
        assert_ne!(a.weights(), c.weights());
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(matches!(
            Encoder::new(EncoderKind::OnlineHd, 0, 10, 1.0, 1),
            Err(Error::InvalidDimension(_))
        ));
        assert!(Encoder::new(EncoderKind::OnlineHd, 3, 0, 1.0, 1).is_err());
        assert!(Encoder::new(EncoderKind::Rff, 3, 5, 1.0, 1).is_err());
        assert!(Encoder::new(EncoderKind::Rff, 3, 6, 0.0, 1).is_err());
    }

    #[test]
    fn zero_input_encodes_to_zero() {
        let enc = Encoder::new(EncoderKind::OnlineHd, 5, 64, 1.0, 3).unwrap();
        let h = enc.encode(&[0.0; 5]).unwrap();
        assert!(h.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hand_computed_single_component() {
        let enc = Encoder::from_parts(EncoderKind::OnlineHd, 1, 1, 1.0, 0, vec![1.0], vec![0.0]).unwrap();
        let h = enc.encode(&[PI / 4.0]).unwrap();
        // cos(pi/4) sin(pi/4) = 1/2
        assert!((h[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn encode_rejects_wrong_length() {
        let enc = Encoder::new(EncoderKind::OnlineHd, 4, 8, 1.0, 3).unwrap();
        assert!(matches!(
            enc.encode(&[1.0; 3]),
            Err(Error::DimensionMismatch { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn binary_round_trip() {
        for kind in [EncoderKind::OnlineHd, EncoderKind::Rff] {
            let enc = Encoder::new(kind, 3, 10, 0.7, 5).unwrap();
            let mut bytes = Vec::new();
            enc.write_to(&mut bytes).unwrap();
            let back = Encoder::read_from(&mut bytes.as_slice()).unwrap();
            assert_eq!(enc, back);
        }
    }

    #[test]
    fn truncated_encoder_is_corrupt() {
        let enc = Encoder::new(EncoderKind::OnlineHd, 3, 10, 1.0, 5).unwrap();
        let mut bytes = Vec::new();
        enc.write_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            Encoder::read_from(&mut bytes.as_slice()),
            Err(Error::CorruptModel(_))
        ));
    }
}
