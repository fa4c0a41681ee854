//! `TSIG` signature files and `TIDX` index files.
//!
//! A signature file is `"TSIG"`, version u16, encoder code u8, label table
//! (u32 count, then u16-prefixed UTF-8 names), signature dimension u32,
//! count u32, then per signature: item id u64, label u32, values f64.
//! An index file is `"TIDX"`, version u16, the encoder model as a u64-length
//! prefixed blob, then a complete signature file as a second blob.

use std::path::Path;

use super::codec::{Reader, Writer};
use super::model::EncoderModel;
use crate::error::{Error, Result};
use crate::retrieval::{EncodedIndex, EncoderTag, Signature};

const SIG_MAGIC: &[u8; 4] = b"TSIG";
const IDX_MAGIC: &[u8; 4] = b"TIDX";
const VERSION: u16 = 1;

/// Encoded images with the label names their label ids refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct SignatureFile {
    pub encoder: EncoderTag,
    pub label_names: Vec<String>,
    pub signatures: Vec<Signature>,
}

impl SignatureFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let dim = self.signatures.first().map_or(0, |s| s.values.len());
        let mut out = Writer::new();
        out.bytes(SIG_MAGIC);
        out.u16(VERSION);
        out.u8(self.encoder.code());
        out.usize(self.label_names.len())?;
        for name in &self.label_names {
            out.str(name)?;
        }
        out.usize(dim)?;
        out.usize(self.signatures.len())?;
        for s in &self.signatures {
            if s.values.len() != dim {
                return Err(Error::shape(format!(
                    "signature {} has dimension {}, expected {dim}",
                    s.item_id,
                    s.values.len()
                )));
            }
            out.u64(s.item_id);
            out.u32(s.label);
            out.f64s(&s.values);
        }
        Ok(out.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "signature file");
        r.magic(SIG_MAGIC)?;
        r.version(VERSION)?;
        let at = r.offset();
        let code = r.u8("encoder code")?;
        let encoder = EncoderTag::from_code(code).ok_or_else(|| r.error_at(at, format!("unknown encoder code {code}")))?;
        let nl = r.usize("label count")?;
        let mut label_names = Vec::with_capacity(nl.min(1 << 16));
        for _ in 0..nl {
            label_names.push(r.str("label name")?);
        }
        let dim = r.usize("dimension")?;
        let n = r.usize("signature count")?;
        let mut signatures = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let item_id = r.u64("item id")?;
            let label = r.u32("label")?;
            let values = r.f64s(dim, "signature values")?;
            signatures.push(Signature { values, item_id, label });
        }
        r.finish()?;
        Ok(Self { encoder, label_names, signatures })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// A searchable index bundled with the model that encodes its queries.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexFile {
    pub model: EncoderModel,
    pub signatures: SignatureFile,
}

impl IndexFile {
    pub fn new(model: EncoderModel, signatures: SignatureFile) -> Result<Self> {
        if model.tag() != signatures.encoder {
            return Err(Error::invalid(format!(
                "{} model paired with {} signatures",
                model.tag(),
                signatures.encoder
            )));
        }
        if let Some(s) = signatures.signatures.first() {
            if s.values.len() != model.signature_dim() {
                return Err(Error::shape(format!(
                    "signatures of dimension {} for a model producing {}",
                    s.values.len(),
                    model.signature_dim()
                )));
            }
        }
        Ok(Self { model, signatures })
    }

    pub fn build_index(&self) -> Result<EncodedIndex> {
        EncodedIndex::build(self.signatures.signatures.clone(), self.signatures.encoder)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Writer::new();
        out.bytes(IDX_MAGIC);
        out.u16(VERSION);
        out.blob(&self.model.to_bytes()?);
        out.blob(&self.signatures.to_bytes()?);
        Ok(out.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "index file");
        r.magic(IDX_MAGIC)?;
        r.version(VERSION)?;
        let model = EncoderModel::from_bytes(r.blob("model")?)?;
        let signatures = SignatureFile::from_bytes(r.blob("signatures")?)?;
        r.finish()?;
        Self::new(model, signatures)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
