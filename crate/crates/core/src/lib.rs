//! Local deep-feature encoders for image retrieval: Fisher vectors, sparse
//! coding, t-SVD projection, multilinear PCA and low-rank tensor splits,
//! with a brute-force retrieval engine and an evaluation harness.

pub mod error;
pub mod feature;
pub mod fisher;
pub mod harness;
mod linalg;
pub mod multilinear;
pub mod retrieval;
pub mod sparse;
pub mod tensor;

pub use error::{Error, Result};
pub use feature::{DescriptorSet, FeatureTensor};
pub use tensor::{DenseTensor, Matrix, TubeSpectrum};
