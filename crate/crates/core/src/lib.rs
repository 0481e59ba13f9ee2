//! Clifford-algebra toolkit for singular integral operators on voxel grids.
//!
//! The crate builds up, layer by layer:
//!
//! * [`clifford`]: dense multivectors over `Cl_{0,n}(C)` for `n <= 8`, with the
//!   geometric product, involutions, and the real scalar product.
//! * [`special`]: modified Bessel functions `K_p` and the gamma function.
//! * [`kernels`]: the Cauchy kernel, the Yukawa kernel, and the fundamental
//!   solution of the disturbed Dirac operator `D + i a`.
//! * [`grid`]: voxel domains, multivector-valued fields, CSV and VTK export.
//! * [`operators`]: finite-difference Dirac, Teodorescu transform, the
//!   singular operator `B = D P T`, spectral diagnostics.
//! * [`nemyckii`]: pointwise (superposition) operators with randomized
//!   property checks: monotonicity, coercivity, Lipschitz bounds.
//! * [`solver`]: damped fixed-point iteration for `F(u) + B u = g` with a
//!   certified contraction factor.
//! * [`magneto`]: the magnetostatic application: demagnetizing field,
//!   M-H material laws, energy inequalities.
//!
//! Everything numeric is generic over a [`Scalar`] type; `f64` is the
//! workhorse, `f32` compiles and is exercised in smoke tests.

pub mod clifford;
pub mod config;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod magneto;
pub mod nemyckii;
pub mod operators;
pub mod solver;
pub mod special;
pub mod verify;

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar usable throughout the crate.
///
/// Blanket-implemented for anything float-like; in practice `f32` and `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Shorthand for lossy conversion from `f64` constants.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must convert into Scalar")
    }

    /// Shorthand for lossy conversion from `usize`.
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize must convert into Scalar")
    }
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + NumAssign
        + Debug
        + Display
        + LowerExp
        + Send
        + Sync
        + 'static
{
}

/// Multivector over `Cl_{0,n}(C)` with `f64` coefficients.
pub type Multivector64 = clifford::Multivector<f64>;
/// Multivector over `Cl_{0,n}(C)` with `f32` coefficients.
pub type Multivector32 = clifford::Multivector<f32>;
/// Paravector (real scalar plus real vector part) with `f64` entries.
pub type Paravector64 = clifford::Paravector<f64>;
/// Voxel field with `f64` coefficients.
pub type Field64 = grid::Field<f64>;
/// Grid domain with `f64` geometry.
pub type GridDomain64 = grid::GridDomain<f64>;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unsupported dimension {got}: expected {expected}")]
    UnsupportedDimension { got: usize, expected: &'static str },
    #[error("value is not a paravector: {0}")]
    NotParavector(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular point: kernel evaluated within {0} of the origin")]
    SingularPoint(f64),
    #[error("numeric overflow in {0}")]
    Overflow(&'static str),
    #[error("no valid finite-difference stencil at voxel {0:?}")]
    NoStencil(Vec<usize>),
    #[error("empty voxel mask")]
    EmptyMask,
    #[error("mask size {got} does not match grid ({expected} voxels)")]
    MaskSize { got: usize, expected: usize },
    #[error("pointwise law failed at x = {at:?}: {reason}")]
    LawEvaluation { at: Vec<f64>, reason: String },
    #[error("iteration diverged after {iterations} steps (residual {residual})")]
    Diverged { iterations: usize, residual: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;
