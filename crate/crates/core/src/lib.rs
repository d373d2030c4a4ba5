//! Unsupervised domain adaptation with two parallel classifiers.
//!
//! An adversarial branch (extractor, classifier, domain discriminator) and a
//! clustering branch (extractor, head, k-means) are trained together. Their
//! scale-free centroid-centroid and centroid-sample distance matrices are
//! pulled towards each other, and target pseudo-labels are admitted only
//! when both branches agree and the sample ranks close to its class
//! centroid in both feature spaces.
//!
//! Everything runs on a small reverse-mode autodiff engine over dense `f64`
//! matrices; see [`tensor::Graph`].

pub mod adversarial;
pub mod alignment;
pub mod datasets;
pub mod error;
pub mod networks;
pub mod pseudo_label;
pub mod tensor;
pub mod trainer;
pub mod verification;

pub use error::{DcpError, Result};
pub use tensor::{Graph, Tensor, Var};
