//! Complex Monge-Ampère and Green's function laboratory on flat Kähler tori.
//!
//! Fields live on a periodic lattice over `C^n / (Z + iZ)^n` with `n ∈ {1, 2}`.
//! The crate provides the discrete geometry ([`geometry`]), a damped Newton
//! Monge-Ampère solver ([`ma`]), divergence-form Green's functions
//! ([`green`]), the integral functionals and class predicates
//! ([`functionals`]), measured bound checks ([`verify`]) and the radial
//! sharpness profiles ([`sharpness`]).

pub mod cache;
pub mod error;
pub mod family;
pub mod fft;
pub mod functionals;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod herm;
pub mod green;
pub mod linalg;
pub mod ma;
pub mod quadrature;
pub mod sharpness;
pub mod verify;

pub use error::{KglError, Result};
pub use field::{MetricField, ScalarField};
pub use geometry::BackgroundGeometry;
pub use grid::GridSpec;
pub use herm::Herm;
