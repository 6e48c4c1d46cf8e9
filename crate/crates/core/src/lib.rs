//! Numerical laboratory for principal eigenvalue problems of strongly anisotropic
//! elliptic operators
//!
//! ```text
//! eps^2 d_y(A(y) d_y phi) + eps d_y(B(y) phi) + d_z(a(z) d_z phi) + d_z(b(z) phi) + c(y, z) phi = k phi
//! ```
//!
//! on `Y x Z` (each a unit torus or unit interval with co-normal Neumann conditions),
//! together with the frozen-`y` local problems, the closed-form `eps -> 0` limits of
//! the principal eigenvalue, the explicit periodic Hamilton-Jacobi solutions behind
//! them, and a Monte Carlo estimate of the quasi-stationary law of the associated
//! killed diffusion.
//!
//! The grid, operator, eigensolver and quadrature layers are generic over
//! [`scalar::Real`]; the aliases below fix them to `f64`, which is what the rest of
//! the pipeline uses.

pub mod eig;
pub mod expr;
pub mod grid;
pub mod hj;
pub mod operator;
pub mod qsd;
pub mod quad;
pub mod scalar;
pub mod scenario;
pub mod spectrum;

pub use expr::Expr;
pub use grid::{Domain1D, DomainKind};
pub use operator::CoefficientSet;
pub use scalar::Real;

pub type Grid1D = grid::Grid1D<f64>;
pub type Grid2D = grid::Grid2D<f64>;
pub type SparseOperator = operator::SparseOperator<f64>;
pub type EigenPair = eig::EigenPair<f64>;
pub type CubicSpline = quad::CubicSpline<f64>;
