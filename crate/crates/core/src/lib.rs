//! Numerical toolkit for the blow-up analysis of surfaces with large
//! constant mean curvature in a Riemannian 3-manifold.
//!
//! Sign convention: `Δ` is the analyst's Laplacian `∂xx + ∂yy` throughout.
//! The flat H-system reads `Δu = 2 u_x × u_y`, solved by the inverse
//! stereographic projection [`bubble::omega`].

pub mod balancing;
pub mod bubble;
pub mod corrected;
pub mod curvature;
pub mod decompose;
pub mod error;
pub mod estimates;
pub mod linearized;
pub mod field;
pub mod quad;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
pub use field::{Field2D, Norms, ResidualReport, V3};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
