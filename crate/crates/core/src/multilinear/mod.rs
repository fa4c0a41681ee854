//! Orthogonal multilinear encodings: t-SVD dictionaries, per-image
//! low-rank splits, and multilinear PCA.

mod lowrank;
mod mpca;
mod tsvd;

pub use lowrank::{low_rank_split, LowRankSplit};
pub use mpca::{mpca_project, mpca_train, tucker_reconstruct, MpcaConfig, MpcaFit, MpcaModel, SubspaceDims};
pub use tsvd::{tsvd, tsvd_project, tsvd_train, TsvdBasis, TsvdFactors};
