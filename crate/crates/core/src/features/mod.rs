//! Target compression and the affine transforms shared by the learners.

mod pca;
mod scaler;

pub use pca::{components_for_variance, pca_fit, pca_inverse, pca_transform, PcaBasis};
pub use scaler::AffineScaler;
