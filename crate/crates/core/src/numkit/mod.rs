//! Small dense numerics: symmetric eigendecomposition, PSD square roots,
//! the regularized incomplete beta function and one-way ANOVA.

mod anova;
mod eig;
mod matrix;
mod special;

pub use anova::{one_way_anova, AnovaResult};
pub use eig::{psd_sqrt, sym_eig, trace_sqrt_product, SymEig, NEG_EIG_TOL};
pub use matrix::DenseMatrix;
pub use special::{f_distribution_sf, ln_gamma, reg_incomplete_beta};
