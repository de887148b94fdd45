//! Binary model files: encoder plus classifier, little-endian throughout.
//!
//! Layout: magic `MMHD`, format version, classifier tag, K, similarity tag,
//! the encoder block, then the classifier block. An OvO classifier stores the
//! pair count followed by `(a, b, model tag, D, vectors...)` per pair; a
//! native classifier stores D followed by K prototypes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::encoding::{read_f64s, Encoder, FeatureMap};
use crate::error::{Error, Result};
use crate::hdc::{ClassPrototypes, PrototypePair, SimilarityKind};
use crate::multiclass::{class_pairs, BinaryModel, OvOEnsemble};
use crate::svm::LinearModel;

const MAGIC: [u8; 4] = *b"MMHD";
const VERSION: u32 = 1;
// rejects absurd sizes in a damaged header before allocating
const MAX_DIM: usize = 1 << 28;

/// Any classifier the harness can persist.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    OvO(OvOEnsemble),
    Native {
        prototypes: ClassPrototypes,
        similarity: SimilarityKind,
    },
}

impl Classifier {
    pub fn num_classes(&self) -> usize {
        match self {
            Classifier::OvO(e) => e.num_classes(),
            Classifier::Native { prototypes, .. } => prototypes.num_classes(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Classifier::OvO(e) => e.dim(),
            Classifier::Native { prototypes, .. } => prototypes.dim(),
        }
    }

    fn similarity(&self) -> SimilarityKind {
        match self {
            Classifier::OvO(e) => e.similarity(),
            Classifier::Native { similarity, .. } => *similarity,
        }
    }

    pub fn predict_encoded(&self, h: &[f64]) -> Result<usize> {
        match self {
            Classifier::OvO(e) => e.predict_encoded(h),
            Classifier::Native { prototypes, similarity } => prototypes.predict(h, *similarity),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub encoder: Encoder,
    pub classifier: Classifier,
}

impl SavedModel {
    pub fn new(encoder: Encoder, classifier: Classifier) -> Result<Self> {
        if encoder.output_dim() != classifier.dim() {
            return Err(Error::DimensionMismatch {
                expected: encoder.output_dim(),
                actual: classifier.dim(),
            });
        }
        Ok(SavedModel { encoder, classifier })
    }

    /// Encodes a raw input and classifies it.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let h = self.encoder.encode(x)?;
        self.classifier.predict_encoded(&h)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(&MAGIC)?;
        out.write_u32::<LittleEndian>(VERSION)?;
        let tag = match self.classifier {
            Classifier::OvO(_) => 0,
            Classifier::Native { .. } => 1,
        };
        out.write_u64::<LittleEndian>(tag)?;
        out.write_u64::<LittleEndian>(self.classifier.num_classes() as u64)?;
        out.write_u64::<LittleEndian>(similarity_tag(self.classifier.similarity()))?;
        self.encoder.write_to(out)?;
        match &self.classifier {
            Classifier::OvO(e) => {
                out.write_u64::<LittleEndian>(e.pairs().len() as u64)?;
                for (&(a, b), model) in e.pairs().iter().zip(e.models()) {
                    out.write_u64::<LittleEndian>(a as u64)?;
                    out.write_u64::<LittleEndian>(b as u64)?;
                    write_binary(out, model)?;
                }
            }
            Classifier::Native { prototypes, .. } => {
                out.write_u64::<LittleEndian>(prototypes.dim() as u64)?;
                for p in prototypes.prototypes() {
                    write_f64s(out, p)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input
            .read_exact(&mut magic)
            .map_err(|_| corrupt("file too short for header"))?;
        if magic != MAGIC {
            return Err(corrupt("not a model file"));
        }
        let version = input
            .read_u32::<LittleEndian>()
            .map_err(|_| corrupt("truncated header"))?;
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let tag = read_u64(input)?;
        let k = read_size(input, "class count")?;
        let similarity = match read_u64(input)? {
            0 => SimilarityKind::Dot,
            1 => SimilarityKind::Cosine,
            t => return Err(corrupt(&format!("unknown similarity tag {t}"))),
        };
        let encoder = Encoder::read_from(input)?;
        let classifier = match tag {
            0 => {
                let n = read_size(input, "pair count")?;
                let expected = class_pairs(k);
                if n != expected.len() {
                    return Err(corrupt(&format!("{n} pair models for {k} classes")));
                }
                let mut models = Vec::with_capacity(n);
                for &(ea, eb) in &expected {
                    let a = read_size(input, "pair id")?;
                    let b = read_size(input, "pair id")?;
                    if (a, b) != (ea, eb) {
                        return Err(corrupt(&format!("pair table out of order at ({a}, {b})")));
                    }
                    models.push(read_binary(input)?);
                }
                Classifier::OvO(OvOEnsemble::new(k, similarity, models).map_err(|e| corrupt(&e.to_string()))?)
            }
            1 => {
                let d = read_size(input, "dimension")?;
                let protos = (0..k).map(|_| read_f64s(input, d)).collect::<Result<Vec<_>>>()?;
                Classifier::Native {
                    prototypes: ClassPrototypes::new(protos).map_err(|e| corrupt(&e.to_string()))?,
                    similarity,
                }
            }
            t => return Err(corrupt(&format!("unknown classifier tag {t}"))),
        };
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(corrupt("trailing bytes after classifier"));
        }
        SavedModel::new(encoder, classifier).map_err(|e| corrupt(&e.to_string()))
    }
}

fn corrupt(msg: &str) -> Error {
    Error::CorruptModel(msg.to_string())
}

fn similarity_tag(kind: SimilarityKind) -> u64 {
    match kind {
        SimilarityKind::Dot => 0,
        SimilarityKind::Cosine => 1,
    }
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    input
        .read_u64::<LittleEndian>()
        .map_err(|_| corrupt("file ended inside a header field"))
}

fn read_size<R: Read>(input: &mut R, what: &str) -> Result<usize> {
    let v = read_u64(input)? as usize;
    if v > MAX_DIM {
        return Err(corrupt(&format!("implausible {what} {v}")));
    }
    Ok(v)
}

fn write_f64s<W: Write>(out: &mut W, v: &[f64]) -> Result<()> {
    for x in v {
        out.write_f64::<LittleEndian>(*x)?;
    }
    Ok(())
}

fn write_binary<W: Write>(out: &mut W, model: &BinaryModel) -> Result<()> {
    match model {
        BinaryModel::Prototypes(p) => {
            out.write_u64::<LittleEndian>(0)?;
            out.write_u64::<LittleEndian>(p.dim() as u64)?;
            write_f64s(out, p.plus())?;
            write_f64s(out, p.minus())?;
        }
        BinaryModel::Linear(m) => {
            out.write_u64::<LittleEndian>(1)?;
            out.write_u64::<LittleEndian>(m.w.len() as u64)?;
            write_f64s(out, &m.w)?;
            out.write_f64::<LittleEndian>(m.bias)?;
        }
    }
    Ok(())
}

fn read_binary<R: Read>(input: &mut R) -> Result<BinaryModel> {
    let tag = read_u64(input)?;
    let d = read_size(input, "dimension")?;
    match tag {
        0 => {
            let plus = read_f64s(input, d)?;
            let minus = read_f64s(input, d)?;
            Ok(BinaryModel::Prototypes(
                PrototypePair::new(plus, minus).map_err(|e| corrupt(&e.to_string()))?,
            ))
        }
        1 => {
            let w = read_f64s(input, d)?;
            let bias = read_f64s(input, 1)?[0];
            Ok(BinaryModel::Linear(LinearModel { w, bias }))
        }
        t => Err(corrupt(&format!("unknown pair model tag {t}"))),
    }
}
