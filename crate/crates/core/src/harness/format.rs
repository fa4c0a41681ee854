//! `TENC` feature files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! offset  field
//! 0       magic "TENC"
//! 4       version u16 (= 1)
//! 6       H u32, W u32, D u32, M u32
//! 22      label count L u32
//! 26      L labels, each u16 byte length + UTF-8 bytes
//! ..      M label indices u32, each < L
//! ..      payload: M images of H*W*D f64, image after image
//! ```
//!
//! Inside an image the value at `(h, w, d)` sits at `h + H*(w + W*d)`,
//! so each channel is a contiguous H x W column-major plane.

use std::path::Path;

use super::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::feature::FeatureTensor;

const MAGIC: &[u8; 4] = b"TENC";
const VERSION: u16 = 1;

/// A labelled set of same-shaped feature tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFile {
    shape: (usize, usize, usize),
    label_names: Vec<String>,
    images: Vec<FeatureTensor>,
    labels: Vec<u32>,
}

impl FeatureFile {
    pub fn new(
        shape: (usize, usize, usize),
        label_names: Vec<String>,
        images: Vec<FeatureTensor>,
        labels: Vec<u32>,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if shape.0 == 0 || shape.1 == 0 || shape.2 == 0 {
            return Err(Error::shape(format!("empty image shape {shape:?}")));
        }
        if let Some((i, img)) = images.iter().enumerate().find(|(_, t)| t.shape() != shape) {
            return Err(Error::shape(format!(
                "image {i} has shape {:?}, file shape is {shape:?}",
                img.shape()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= label_names.len()) {
            return Err(Error::invalid(format!(
                "label index {l} outside a table of {}",
                label_names.len()
            )));
        }
        Ok(Self {
            shape,
            label_names,
            images,
            labels,
        })
    }

    /// `(H, W, D)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn images(&self) -> &[FeatureTensor] {
        &self.images
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn label_name(&self, i: usize) -> &str {
        &self.label_names[self.labels[i] as usize]
    }

    /// Keeps the listed images (in the given order) and the full label table.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut images = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("image {i} out of {}", self.len())));
            }
            images.push(self.images[i].clone());
            labels.push(self.labels[i]);
        }
        Self::new(self.shape, self.label_names.clone(), images, labels)
    }

    /// Moves the first `per_category` images of every label into a query set;
    /// returns `(database, queries)`.
    pub fn split_queries(&self, per_category: usize) -> Result<(Self, Self)> {
        let mut seen = vec![0usize; self.label_names.len()];
        let (mut db, mut q) = (Vec::new(), Vec::new());
        for (i, &l) in self.labels.iter().enumerate() {
            let c = &mut seen[l as usize];
            if *c < per_category {
                q.push(i);
            } else {
                db.push(i);
            }
            *c += 1;
        }
        Ok((self.subset(&db)?, self.subset(&q)?))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (h, w, d) = self.shape;
        let mut out = Writer::new();
        out.bytes(MAGIC);
        out.u16(VERSION);
        for v in [h, w, d, self.images.len(), self.label_names.len()] {
            out.usize(v)?;
        }
        for name in &self.label_names {
            out.str(name)?;
        }
        for &l in &self.labels {
            out.u32(l);
        }
        for img in &self.images {
            out.f64s(img.as_tensor().data());
        }
        Ok(out.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "feature file");
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let h = r.usize("height")?;
        let w = r.usize("width")?;
        let d = r.usize("depth")?;
        let m = r.usize("image count")?;
        let nl = r.usize("label count")?;
        if h == 0 || w == 0 || d == 0 {
            return Err(r.error_at(6, format!("empty image shape {h}x{w}x{d}")));
        }
        let mut label_names = Vec::with_capacity(nl.min(1 << 16));
        for _ in 0..nl {
            label_names.push(r.str("label name")?);
        }
        let mut labels = Vec::with_capacity(m.min(1 << 20));
        for _ in 0..m {
            let at = r.offset();
            let l = r.u32("label index")?;
            if l as usize >= nl {
                return Err(r.error_at(at, format!("label index {l} outside a table of {nl}")));
            }
            labels.push(l);
        }
        let per = h * w * d;
        let payload_at = r.offset();
        let expected = (m as u64) * (per as u64) * 8;
        let have = (bytes.len() - payload_at) as u64;
        if have != expected {
            let (offset, what) = if have < expected {
                (bytes.len() as u64, "truncated payload")
            } else {
                (payload_at as u64 + expected, "trailing bytes after payload")
            };
            return Err(Error::Format {
                kind: "feature file",
                offset,
                message: format!(
                    "{what}: {m} images of {h}x{w}x{d} need {expected} bytes from offset {payload_at}, found {have}"
                ),
            });
        }
        let mut images = Vec::with_capacity(m);
        for i in 0..m {
            let at = r.offset();
            let data = r.f64s(per, "image payload")?;
            let img = FeatureTensor::from_data(h, w, d, data)
                .map_err(|e| r.error_at(at, format!("image {i}: {e}")))?;
            images.push(img);
        }
        r.finish()?;
        Self::new((h, w, d), label_names, images, labels)
    }

    pub fn export(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }
}

/// Reads a `TENC` file.
pub fn ingest(path: impl AsRef<Path>) -> Result<FeatureFile> {
    FeatureFile::from_bytes(&std::fs::read(path)?)
}
