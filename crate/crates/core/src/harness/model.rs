//! Trainable encoders behind one interface, and their `TMDL` persistence.
//!
//! A model file is `"TMDL"`, version u16, encoder code u8, image shape
//! `H W D` (u32 each), then an encoder-specific body of u32 sizes and
//! little-endian f64 arrays. Floats are stored bit-exact.

use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::codec::{Reader, Writer};
use super::format::FeatureFile;
use crate::error::{Error, Result};
use crate::feature::{DescriptorSet, FeatureTensor};
use crate::fisher::{fisher_encode, train_gmm, EmConfig, FisherConfig, GmmModel};
use crate::multilinear::{
    low_rank_split, mpca_project, mpca_train, tsvd_project, tsvd_train, MpcaConfig, MpcaModel,
    SubspaceDims, TsvdBasis,
};
use crate::retrieval::{l2_normalize, EncoderTag};
use crate::sparse::{encode_image_sparse, ksvd_train, KsvdConfig, SparseDictionary};
use crate::tensor::{DenseTensor, Matrix};

const MAGIC: &[u8; 4] = b"TMDL";
const VERSION: u16 = 1;

/// Encoder hyperparameters; each encoder reads only its own fields.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub seed: u64,
    /// GMM components `K`.
    pub components: usize,
    pub weighted_posterior: bool,
    pub em_max_iter: usize,
    pub em_tol: f64,
    /// Dictionary size `K_a`; `None` means twice the descriptor dimension.
    pub atoms: Option<usize>,
    /// OMP sparsity `s`.
    pub sparsity: usize,
    pub ksvd_iters: usize,
    pub omp_tol: f64,
    /// Descriptors sampled from the training images for GMM and k-SVD.
    pub train_descriptors: usize,
    /// Leading t-SVD projection rows kept; `None` keeps all.
    pub truncation: Option<usize>,
    pub mpca_dims: SubspaceDims,
    pub mpca_sweeps: usize,
    pub mpca_tol: f64,
    /// Low-rank truncation index `r`, capped at `min(H, D)`. The split is
    /// taken on the image permuted to `H x D x W`.
    pub rank: usize,
}

impl Default for EncoderParams {
    fn default() -> Self {
        Self {
            seed: 0,
            components: 16,
            weighted_posterior: false,
            em_max_iter: 100,
            em_tol: 1e-5,
            atoms: None,
            sparsity: 5,
            ksvd_iters: 10,
            omp_tol: 1e-6,
            train_descriptors: 20_000,
            truncation: None,
            mpca_dims: SubspaceDims::VarianceRatio(0.97),
            mpca_sweeps: 10,
            mpca_tol: 1e-6,
            rank: 1,
        }
    }
}

impl EncoderParams {
    /// Range checks that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("components", self.components),
            ("sparsity", self.sparsity),
            ("train-descriptors", self.train_descriptors),
            ("rank", self.rank),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if self.atoms == Some(0) || self.truncation == Some(0) {
            return Err(Error::invalid("atoms and truncation must be at least 1"));
        }
        for (name, v) in [("em-tol", self.em_tol), ("omp-tol", self.omp_tol), ("mpca-tol", self.mpca_tol)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        match &self.mpca_dims {
            SubspaceDims::VarianceRatio(q) if !(*q > 0.0 && *q <= 1.0) => {
                Err(Error::invalid(format!("variance ratio {q} outside (0, 1]")))
            }
            SubspaceDims::Explicit(p) if p.len() != 3 || p.contains(&0) => {
                Err(Error::invalid(format!("mPCA dims {p:?} must be three positive extents")))
            }
            _ => Ok(()),
        }
    }
}

/// A trained encoder for `H x W x D` feature tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderModel {
    shape: (usize, usize, usize),
    kind: ModelKind,
}

#[derive(Clone, Debug, PartialEq)]
enum ModelKind {
    Fisher { gmm: GmmModel, config: FisherConfig },
    Sparse { dictionary: SparseDictionary, sparsity: usize, res_tol: f64 },
    Tsvd { basis: TsvdBasis, truncation: Option<usize> },
    Mpca { model: MpcaModel },
    LowRank { rank: usize },
    Raw,
}

impl EncoderModel {
    pub fn tag(&self) -> EncoderTag {
        match self.kind {
            ModelKind::Fisher { .. } => EncoderTag::Fisher,
            ModelKind::Sparse { .. } => EncoderTag::Sparse,
            ModelKind::Tsvd { .. } => EncoderTag::Tsvd,
            ModelKind::Mpca { .. } => EncoderTag::Mpca,
            ModelKind::LowRank { .. } => EncoderTag::LowRank,
            ModelKind::Raw => EncoderTag::Raw,
        }
    }

    /// `(H, W, D)` of the images this model accepts.
    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    /// Flattened, l2-normalized encoding. An all-zero encoding stays zero.
    pub fn encode(&self, image: &FeatureTensor) -> Result<Vec<f64>> {
        if image.shape() != self.shape {
            return Err(Error::shape(format!(
                "image {:?} given to a model for {:?}",
                image.shape(),
                self.shape
            )));
        }
        let mut v = match &self.kind {
            ModelKind::Fisher { gmm, config } => fisher_encode(gmm, &image.descriptors(), *config)?.values,
            ModelKind::Sparse { dictionary, sparsity, res_tol } => {
                encode_image_sparse(dictionary, &image.descriptors(), *sparsity, *res_tol)?.values
            }
            ModelKind::Tsvd { basis, truncation } => tsvd_project(basis, image, *truncation)?.into_data(),
            ModelKind::Mpca { model } => mpca_project(model, image.as_tensor())?.into_data(),
            ModelKind::LowRank { rank } => low_rank_split(&width_tubes(image), *rank)?.low_rank.into_data(),
            ModelKind::Raw => image.as_tensor().data().to_vec(),
        };
        l2_normalize(&mut v);
        Ok(v)
    }

    /// Length of [`encode`](Self::encode)'s output.
    pub fn signature_dim(&self) -> usize {
        let (h, w, d) = self.shape;
        match &self.kind {
            ModelKind::Fisher { gmm, .. } => 2 * gmm.num_components() * d,
            ModelKind::Sparse { dictionary, .. } => dictionary.num_atoms(),
            ModelKind::Tsvd { truncation, .. } => truncation.unwrap_or(h * w) * d,
            ModelKind::Mpca { model } => model.subspace_dims().iter().product(),
            ModelKind::LowRank { .. } | ModelKind::Raw => h * w * d,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (h, w, d) = self.shape;
        let mut out = Writer::new();
        out.bytes(MAGIC);
        out.u16(VERSION);
        out.u8(self.tag().code());
        for v in [h, w, d] {
            out.usize(v)?;
        }
        match &self.kind {
            ModelKind::Fisher { gmm, config } => {
                out.u8(config.weighted_posterior as u8);
                out.usize(gmm.num_components())?;
                out.f64s(gmm.weights());
                out.f64s(gmm.means());
                out.f64s(gmm.variances());
            }
            ModelKind::Sparse { dictionary, sparsity, res_tol } => {
                out.usize(*sparsity)?;
                out.f64(*res_tol);
                out.usize(dictionary.num_atoms())?;
                out.f64s(dictionary.atoms().as_slice());
            }
            ModelKind::Tsvd { basis, truncation } => {
                out.usize(truncation.unwrap_or(0))?;
                out.usize(basis.eigen_tuples().dims()[0])?;
                out.f64s(basis.u().data());
                out.f64s(basis.eigen_tuples().data());
                out.f64s(basis.mean().data());
            }
            ModelKind::Mpca { model } => {
                for f in model.factors() {
                    out.usize(f.cols())?;
                    out.f64s(f.as_slice());
                }
                out.f64s(model.mean().data());
            }
            ModelKind::LowRank { rank } => out.usize(*rank)?,
            ModelKind::Raw => {}
        }
        Ok(out.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "model file");
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let at = r.offset();
        let code = r.u8("encoder code")?;
        let tag = EncoderTag::from_code(code).ok_or_else(|| r.error_at(at, format!("unknown encoder code {code}")))?;
        let h = r.usize("height")?;
        let w = r.usize("width")?;
        let d = r.usize("depth")?;
        let body = r.offset();
        let wrap = |e: Error, r: &Reader| match e {
            e @ Error::Format { .. } => e,
            other => r.error_at(body, other.to_string()),
        };
        let kind = Self::read_body(&mut r, tag, (h, w, d)).map_err(|e| wrap(e, &r))?;
        r.finish()?;
        Ok(Self { shape: (h, w, d), kind })
    }

    fn read_body(r: &mut Reader, tag: EncoderTag, (h, w, d): (usize, usize, usize)) -> Result<ModelKind> {
        Ok(match tag {
            EncoderTag::Fisher => {
                let weighted_posterior = r.u8("posterior flag")? != 0;
                let k = r.usize("component count")?;
                let weights = r.f64s(k, "weights")?;
                let means = r.f64s(k * d, "means")?;
                let variances = r.f64s(k * d, "variances")?;
                ModelKind::Fisher {
                    gmm: GmmModel::new(weights, means, variances, d)?,
                    config: FisherConfig { weighted_posterior },
                }
            }
            EncoderTag::Sparse => {
                let sparsity = r.usize("sparsity")?;
                let res_tol = r.f64("residual tolerance")?;
                let ka = r.usize("atom count")?;
                let atoms = r.f64s(ka * d, "atoms")?;
                ModelKind::Sparse {
                    dictionary: SparseDictionary::new(Matrix::new(d, ka, atoms)?)?,
                    sparsity,
                    res_tol,
                }
            }
            EncoderTag::Tsvd => {
                let n1 = h * w;
                let truncation = match r.usize("truncation")? {
                    0 => None,
                    t => Some(t),
                };
                let tuples = r.usize("eigen-tuple count")?;
                let u = DenseTensor::new(vec![n1, n1, d], r.f64s(n1 * n1 * d, "basis")?)?;
                let s = DenseTensor::new(vec![tuples, 1, d], r.f64s(tuples * d, "eigen-tuples")?)?;
                let mean = DenseTensor::new(vec![n1, 1, d], r.f64s(n1 * d, "mean")?)?;
                ModelKind::Tsvd { basis: TsvdBasis::new(u, s, mean)?, truncation }
            }
            EncoderTag::Mpca => {
                let mut factors = Vec::with_capacity(3);
                for extent in [h, w, d] {
                    let cols = r.usize("factor width")?;
                    factors.push(Matrix::new(extent, cols, r.f64s(extent * cols, "factor")?)?);
                }
                let mean = DenseTensor::new(vec![h, w, d], r.f64s(h * w * d, "mean")?)?;
                ModelKind::Mpca { model: MpcaModel::new(factors, mean)? }
            }
            EncoderTag::LowRank => ModelKind::LowRank { rank: r.usize("rank")? },
            EncoderTag::Raw => ModelKind::Raw,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Trains the chosen encoder on every image of `corpus`.
pub fn train_encoder(tag: EncoderTag, params: &EncoderParams, corpus: &FeatureFile) -> Result<EncoderModel> {
    params.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    let shape = corpus.shape();
    let (h, w, d) = shape;
    let kind = match tag {
        EncoderTag::Fisher => {
            let sample = sample_descriptors(corpus, params.train_descriptors, params.seed)?;
            let em = EmConfig {
                max_iter: params.em_max_iter,
                tol: params.em_tol,
                seed: params.seed,
                ..EmConfig::default()
            };
            let fit = train_gmm(&sample, params.components, &em)?;
            for warning in &fit.warnings {
                log::warn!("{warning}");
            }
            ModelKind::Fisher {
                gmm: fit.model,
                config: FisherConfig { weighted_posterior: params.weighted_posterior },
            }
        }
        EncoderTag::Sparse => {
            let sample = sample_descriptors(corpus, params.train_descriptors, params.seed)?;
            let config = KsvdConfig {
                atoms: params.atoms.unwrap_or(2 * d),
                sparsity: params.sparsity,
                iters: params.ksvd_iters,
                seed: params.seed,
                res_tol: params.omp_tol,
            };
            let fit = ksvd_train(&sample, &config)?;
            ModelKind::Sparse {
                dictionary: fit.dictionary,
                sparsity: params.sparsity,
                res_tol: params.omp_tol,
            }
        }
        EncoderTag::Tsvd => {
            if let Some(t) = params.truncation {
                if t > h * w {
                    return Err(Error::invalid(format!("truncation {t} exceeds {} descriptors per image", h * w)));
                }
            }
            ModelKind::Tsvd {
                basis: tsvd_train(corpus.images())?,
                truncation: params.truncation,
            }
        }
        EncoderTag::Mpca => {
            let config = MpcaConfig {
                dims: params.mpca_dims.clone(),
                max_sweeps: params.mpca_sweeps,
                tol: params.mpca_tol,
            };
            ModelKind::Mpca { model: mpca_train(corpus.images(), &config)?.model }
        }
        EncoderTag::LowRank => {
            let cap = h.min(d);
            if params.rank > cap {
                log::warn!("low-rank truncation {} capped at min(H, D) = {cap}", params.rank);
            }
            ModelKind::LowRank { rank: params.rank.min(cap) }
        }
        EncoderTag::Raw => ModelKind::Raw,
    };
    Ok(EncoderModel { shape, kind })
}

/// The image as `H x D x W`: frontal slice `w` holds column `w`'s
/// descriptors, and tubes run along the image width.
fn width_tubes(image: &FeatureTensor) -> DenseTensor {
    let (h, w, d) = image.shape();
    let src = image.as_tensor().data();
    let mut out = vec![0.0; h * w * d];
    for wi in 0..w {
        for j in 0..d {
            let from = h * (wi + w * j);
            let to = h * (j + d * wi);
            out[to..to + h].copy_from_slice(&src[from..from + h]);
        }
    }
    DenseTensor::new(vec![h, d, w], out).expect("permuted extents match")
}

/// Uniform sample without replacement of the corpus's pooled descriptors,
/// in corpus order.
fn sample_descriptors(corpus: &FeatureFile, n: usize, seed: u64) -> Result<DescriptorSet> {
    let (h, w, d) = corpus.shape();
    let per = h * w;
    let total = per * corpus.len();
    let mut picks: Vec<usize> = if n >= total {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        index::sample(&mut rng, total, n).into_vec()
    };
    picks.sort_unstable();
    let mut rows = Vec::with_capacity(picks.len() * d);
    for p in picks.iter() {
        let data = corpus.images()[p / per].as_tensor().data();
        let pixel = p % per;
        rows.extend((0..d).map(|j| data[pixel + per * j]));
    }
    DescriptorSet::from_rows(picks.len(), d, rows)
}
