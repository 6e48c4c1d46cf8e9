//! Banded LU without pivoting, for nonsingular M-matrices `mu I - L`.

use crate::operator::{Layout, SparseOperator};
use crate::scalar::Real;

/// Symmetric reordering of the unknowns chosen to keep the band narrow.
#[derive(Debug, Clone)]
pub(crate) struct BandOrdering {
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// `inv[old] = new`.
    inv: Vec<usize>,
    pub lower: usize,
    pub upper: usize,
}

/// `0, n-1, 1, n-2, ..`: consecutive ring neighbours end up at most two slots apart.
fn ring_order(n: usize, periodic: bool) -> Vec<usize> {
    if !periodic {
        return (0..n).collect();
    }
    let mut out = Vec::with_capacity(n);
    let (mut lo, mut hi) = (0usize, n - 1);
    while lo <= hi {
        out.push(lo);
        if hi != lo {
            out.push(hi);
        }
        lo += 1;
        if hi == 0 {
            break;
        }
        hi -= 1;
    }
    out
}

fn tensor_order(outer: usize, outer_periodic: bool, inner: usize, transpose: bool) -> Vec<usize> {
    // transpose: iterate over the inner axis first, outer axis inside each block
    if !transpose {
        ring_order(outer, outer_periodic)
            .into_iter()
            .flat_map(|i| (0..inner).map(move |j| i * inner + j))
            .collect()
    } else {
        (0..inner)
            .flat_map(|j| (0..outer).map(move |i| i * inner + j))
            .collect()
    }
}

impl BandOrdering {
    pub fn new<T: Real>(op: &SparseOperator<T>) -> Self {
        let n = op.dimension;
        let candidates: Vec<Vec<usize>> = match op.layout {
            Some(Layout {
                outer,
                outer_periodic,
                inner,
                inner_periodic,
            }) => {
                let mut c = vec![tensor_order(outer, outer_periodic, inner, false)];
                if outer > 1 {
                    // same trick with the roles of the axes swapped
                    let ring = ring_order(inner, inner_periodic);
                    c.push(
                        ring.into_iter()
                            .flat_map(|j| (0..outer).map(move |i| i * inner + j))
                            .collect(),
                    );
                    c.push(tensor_order(outer, outer_periodic, inner, true));
                }
                c
            }
            None => vec![(0..n).collect()],
        };
        candidates
            .into_iter()
            .map(|perm| Self::with_perm(op, perm))
            .min_by_key(|o| o.lower + o.upper)
            .expect("at least one candidate ordering")
    }

    fn with_perm<T: Real>(op: &SparseOperator<T>, perm: Vec<usize>) -> Self {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut lower, mut upper) = (0, 0);
        for r in 0..op.dimension {
            for (c, _) in op.row(r) {
                let (i, j) = (inv[r], inv[c]);
                if i > j {
                    lower = lower.max(i - j);
                } else {
                    upper = upper.max(j - i);
                }
            }
        }
        Self {
            perm,
            inv,
            lower,
            upper,
        }
    }
}

/// LU factors of `P (mu I - L) P^T` stored in band form.
pub(crate) struct BandLu<T> {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> BandLu<T> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.lower - i)
    }

    /// Factors `mu I - L`. Returns the first non-positive pivot index on failure.
    pub fn factor(op: &SparseOperator<T>, ord: &BandOrdering, mu: T) -> Result<Self, usize> {
        let n = op.dimension;
        let width = ord.lower + ord.upper + 1;
        let mut lu = Self {
            n,
            lower: ord.lower,
            upper: ord.upper,
            width,
            data: vec![T::zero(); n * width],
        };
        for r in 0..n {
            let i = ord.inv[r];
            for (c, v) in op.row(r) {
                let j = ord.inv[c];
                let k = lu.at(i, j);
                lu.data[k] = lu.data[k] - v;
            }
            let k = lu.at(i, i);
            lu.data[k] += mu;
        }
        for k in 0..n {
            let pivot = lu.data[lu.at(k, k)];
            if !(pivot > T::zero()) {
                return Err(k);
            }
            let row_end = (k + lu.upper).min(n - 1);
            for i in (k + 1)..=(k + lu.lower).min(n - 1) {
                let ik = lu.at(i, k);
                if lu.data[ik] == T::zero() {
                    continue;
                }
                let l = lu.data[ik] / pivot;
                lu.data[ik] = l;
                let (base_i, base_k) = (lu.at(i, k + 1), lu.at(k, k + 1));
                for off in 0..(row_end - k) {
                    let u = lu.data[base_k + off];
                    lu.data[base_i + off] -= l * u;
                }
            }
        }
        Ok(lu)
    }

    /// Solves `(mu I - L) x = b` in the original ordering.
    pub fn solve(&self, ord: &BandOrdering, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = ord.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let start = i.saturating_sub(self.lower);
            let mut acc = x[i];
            for (j, xj) in x.iter().enumerate().take(i).skip(start) {
                acc -= self.data[self.at(i, j)] * *xj;
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let end = (i + self.upper).min(n - 1);
            let mut acc = x[i];
            for (j, xj) in x.iter().enumerate().take(end + 1).skip(i + 1) {
                acc -= self.data[self.at(i, j)] * *xj;
            }
            x[i] = acc / self.data[self.at(i, i)];
        }
        let mut out = vec![T::zero(); n];
        for (new, &old) in ord.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Domain1D, Grid2D};
    use crate::operator::{assemble_global, CoefficientSet};

    #[test]
    fn ring_order_keeps_neighbours_close() {
        for n in 4..20 {
            let order = ring_order(n, true);
            let mut pos = vec![0; n];
            for (p, &i) in order.iter().enumerate() {
                pos[i] = p;
            }
            for i in 0..n {
                let j = (i + 1) % n;
                assert!(pos[i].abs_diff(pos[j]) <= 2, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn band_solve_matches_dense_residual() {
        let cs = CoefficientSet::parse(
            "1 + 0.5*cos(2*pi*y)",
            "0.3*sin(2*pi*y)",
            "1",
            "0.2",
            "cos(2*pi*y)*cos(2*pi*z)",
        )
        .unwrap();
        let g = Grid2D::<f64>::build(Domain1D::TORUS, 12, Domain1D::TORUS, 7).unwrap();
        let op = assemble_global(&g, &cs, 0.3).unwrap();
        let ord = BandOrdering::new(&op);
        assert!(ord.lower <= 2 * 7 && ord.upper <= 2 * 7, "{} {}", ord.lower, ord.upper);
        let mu = 50.0;
        let lu = BandLu::factor(&op, &ord, mu).unwrap();
        let b: Vec<f64> = (0..g.len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let x = lu.solve(&ord, &b);
        let lx = op.apply(&x).unwrap();
        for k in 0..g.len() {
            assert!((mu * x[k] - lx[k] - b[k]).abs() < 1e-10);
        }
    }
}
