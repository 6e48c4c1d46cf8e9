//! Dense reference eigensolver (real Schur form via Hessenberg QR) used as a test oracle.

use nalgebra::DMatrix;

use super::{rayleigh_residual, EigError, EigenPair};
use crate::operator::SparseOperator;
use crate::scalar::Real;

pub const DENSE_ORACLE_LIMIT: usize = 2500;

/// Full spectrum of the densified matrix; returns the eigenvalue of maximal real part
/// with its eigenvector, which must be of one sign.
pub fn dense_oracle<T: Real>(op: &SparseOperator<T>) -> Result<EigenPair<T>, EigError> {
    let n = op.dimension;
    if n > DENSE_ORACLE_LIMIT {
        return Err(EigError::DimensionTooLarge {
            dimension: n,
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        for (c, v) in op.row(r) {
            m[(r, c)] = v.as_f64();
        }
    }
    let scale = m.amax().max(1.0);
    let spectrum = m.complex_eigenvalues();
    let top = spectrum
        .iter()
        .copied()
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .expect("non-empty spectrum");
    if top.im.abs() > 1e-9 * scale {
        return Err(EigError::ComplexPrincipal { re: top.re, im: top.im });
    }
    let k = top.re;

    // null vector of L - kI: right singular vector of the smallest singular value
    let mut shifted = m.clone();
    for i in 0..n {
        shifted[(i, i)] -= k;
    }
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let mut v: Vec<f64> = v_t.row(imin).iter().copied().collect();
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= -1e-10 * max.abs() {
        return Err(EigError::OracleNotPositive { min, max });
    }
    let mass: f64 = v.iter().zip(&op.weights).map(|(x, w)| x * w.as_f64()).sum();
    let phi: Vec<T> = v.iter().map(|x| T::of(x.max(0.0) / mass)).collect();
    let mut lphi = vec![T::zero(); n];
    let (_, residual) = rayleigh_residual(op, &phi, &mut lphi);
    Ok(EigenPair {
        k: T::of(k),
        phi,
        residual,
        iterations: 0,
    })
}
