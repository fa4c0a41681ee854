//! Fisher-vector encoding over a diagonal-covariance Gaussian mixture.

mod encode;
mod gmm;

pub use crate::feature::DescriptorSet;
pub use encode::{fisher_encode, fisher_encode_unnormalized, soft_assign, FisherConfig, FisherVector};
pub use gmm::{train_gmm, EmConfig, GmmFit, GmmModel};
