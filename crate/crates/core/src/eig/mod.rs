//! Principal (Perron) eigenpair of an assembled operator.
//!
//! The off-diagonal part of a flux-form operator is entrywise nonnegative, so
//! `M = L + sigma I` is a nonnegative irreducible matrix once `sigma` clears the
//! Gershgorin discs. Plain power iteration on `M` is interleaved with shift-invert
//! steps whose shift is the Collatz-Wielandt upper bound `max_i (L phi)_i / phi_i`.
//! That shift never falls below the Perron root, so `mu I - L` stays a nonsingular
//! M-matrix: its inverse is positive and it factors stably without pivoting.

mod band;
mod dense;

use thiserror::Error;

use crate::operator::SparseOperator;
use crate::scalar::Real;

use band::{BandLu, BandOrdering};
pub use dense::{dense_oracle, DENSE_ORACLE_LIMIT};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigError {
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("iterate lost positivity at index {index} (value {value:e})")]
    NonPositiveIterate { index: usize, value: f64 },
    #[error("negative off-diagonal entry {value:e} at ({row}, {col}): the discretization is not Perron (cell Peclet number too large?)")]
    PerronStructure { row: usize, col: usize, value: f64 },
    #[error("dense oracle limited to dimension {limit}, got {dimension}")]
    DimensionTooLarge { dimension: usize, limit: usize },
    #[error("principal eigenvalue {re} + {im}i is not real")]
    ComplexPrincipal { re: f64, im: f64 },
    #[error("principal eigenvector has entries of both signs (min {min:e}, max {max:e})")]
    OracleNotPositive { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair<T> {
    pub k: T,
    /// Strictly positive, normalized to `sum_i w_i phi_i = 1`.
    pub phi: Vec<T>,
    /// `||L phi - k phi||_inf / ||phi||_inf`.
    pub residual: T,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Power steps between two shift-invert steps.
    pub accel_every: usize,
    /// Largest dimension for which shift-invert steps (direct solves) are used.
    pub direct_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
            accel_every: 50,
            direct_limit: 20_000,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            ..Self::default()
        }
    }
}

fn normalize<T: Real>(v: &mut [T], w: &[T]) {
    let mass: T = v.iter().zip(w).map(|(&a, &b)| a * b).sum();
    for x in v.iter_mut() {
        *x /= mass;
    }
}

fn first_nonpositive<T: Real>(v: &[T]) -> Option<(usize, T)> {
    v.iter().copied().enumerate().find(|&(_, x)| !(x > T::zero()))
}

/// Rayleigh quotient and relative residual of `phi`.
pub(crate) fn rayleigh_residual<T: Real>(op: &SparseOperator<T>, phi: &[T], lphi: &mut [T]) -> (T, T) {
    op.apply_into(phi, lphi);
    let num: T = phi.iter().zip(lphi.iter()).map(|(&a, &b)| a * b).sum();
    let den: T = phi.iter().map(|&a| a * a).sum();
    let k = num / den;
    let mut r = T::zero();
    let mut scale = T::zero();
    for (&p, &lp) in phi.iter().zip(lphi.iter()) {
        r = r.max((lp - k * p).abs());
        scale = scale.max(p.abs());
    }
    (k, r / scale)
}

/// Checks the Perron sign structure and returns the Gershgorin shift
/// `max_i (R_i - L_ii) + 1` and the scale `max_i (|L_ii| + R_i)`.
fn gershgorin<T: Real>(op: &SparseOperator<T>) -> Result<(T, T), EigError> {
    let mut shift = T::neg_infinity();
    let mut scale = T::zero();
    for r in 0..op.dimension {
        let mut diag = T::zero();
        let mut radius = T::zero();
        for (c, v) in op.row(r) {
            if c == r {
                diag = v;
            } else if v < T::zero() {
                return Err(EigError::PerronStructure {
                    row: r,
                    col: c,
                    value: v.as_f64(),
                });
            } else {
                radius += v;
            }
        }
        shift = shift.max(radius - diag);
        scale = scale.max(diag.abs() + radius);
    }
    Ok((shift + T::one(), scale))
}

/// Principal eigenpair with default options apart from `tol` and `max_iter`.
pub fn principal_eigenpair<T: Real>(
    op: &SparseOperator<T>,
    tol: f64,
    max_iter: usize,
) -> Result<EigenPair<T>, EigError> {
    principal_eigenpair_with(op, &SolverOptions::with_tol(tol, max_iter))
}

pub fn principal_eigenpair_with<T: Real>(
    op: &SparseOperator<T>,
    opts: &SolverOptions,
) -> Result<EigenPair<T>, EigError> {
    let n = op.dimension;
    let w = &op.weights;
    let tol = T::of(opts.tol);
    let (sigma, scale) = gershgorin(op)?;
    // keeps mu I - L safely nonsingular once phi is exact
    let guard = T::of(64.0) * T::epsilon() * scale.max(T::one());
    let direct = n <= opts.direct_limit;
    let ordering = direct.then(|| BandOrdering::new(op));

    let mut phi = vec![T::one(); n];
    normalize(&mut phi, w);
    let mut lphi = vec![T::zero(); n];
    let mut iterations = 0usize;
    let mut residual;

    loop {
        for _ in 0..opts.accel_every.max(1) {
            op.apply_into(&phi, &mut lphi);
            for (p, &lp) in phi.iter_mut().zip(lphi.iter()) {
                *p = lp + sigma * *p;
            }
            normalize(&mut phi, w);
            iterations += 1;
        }
        if let Some((index, value)) = first_nonpositive(&phi) {
            return Err(EigError::NonPositiveIterate {
                index,
                value: value.as_f64(),
            });
        }
        let (k, r) = rayleigh_residual(op, &phi, &mut lphi);
        residual = r;
        if r <= tol {
            return Ok(EigenPair {
                k,
                phi,
                residual: r,
                iterations,
            });
        }
        if iterations >= opts.max_iter {
            break;
        }
        if let Some(ord) = &ordering {
            // lphi holds L phi from the residual evaluation
            let mu = phi
                .iter()
                .zip(lphi.iter())
                .map(|(&p, &lp)| lp / p)
                .fold(T::neg_infinity(), T::max);
            let mut offset = guard;
            let lu = loop {
                match BandLu::factor(op, ord, mu + offset) {
                    Ok(lu) => break Some(lu),
                    Err(_) if offset < scale => offset = offset * T::of(16.0),
                    Err(_) => break None,
                }
            };
            if let Some(lu) = lu {
                let mut next = lu.solve(ord, &phi);
                normalize(&mut next, w);
                if let Some((index, value)) = first_nonpositive(&next) {
                    return Err(EigError::NonPositiveIterate {
                        index,
                        value: value.as_f64(),
                    });
                }
                phi = next;
                iterations += 1;
                let (k, r) = rayleigh_residual(op, &phi, &mut lphi);
                residual = r;
                if r <= tol {
                    return Ok(EigenPair {
                        k,
                        phi,
                        residual: r,
                        iterations,
                    });
                }
            }
        }
        if iterations >= opts.max_iter {
            break;
        }
    }
    Err(EigError::NonConvergence {
        iterations,
        residual: residual.as_f64(),
    })
}
