//! Conservative finite-difference assembly of
//! `eps^2 d_y(A d_y .) + eps d_y(B .) + d_z(a d_z .) + d_z(b .) + c`
//! and of the frozen-`y` operator `d_z(a d_z .) + d_z(b .) + c(y0, .)`.
//!
//! Fluxes live on cell interfaces: the diffusive flux uses the coefficient sampled at
//! the interface midpoint and the transport flux is the centred average of `B phi`.
//! Interval ends carry zero flux (co-normal Neumann plus `B . nu = 0`), so for every
//! column the weighted sum of `L - diag(c)` vanishes.

use std::io::{self, Write};

use thiserror::Error;

use crate::expr::{EvalError, Expr, ParseError, Var};
use crate::grid::{DomainKind, Grid1D, Grid2D};
use crate::scalar::Real;

/// Tolerance on `|B|` (resp. `|b|`) at interval endpoints.
pub const BOUNDARY_FLUX_TOL: f64 = 1e-12;
const PERIODICITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("coefficient `{name}`: {source}")]
    Parse {
        name: &'static str,
        #[source]
        source: ParseError,
    },
    #[error("coefficient `{name}`: {source}")]
    Eval {
        name: &'static str,
        #[source]
        source: EvalError,
    },
    #[error("coefficient `{name}` must not depend on `{var}`")]
    WrongVariable { name: &'static str, var: char },
    #[error("coefficient `{name}` is not uniformly elliptic: value {value} at {at}")]
    Ellipticity { name: &'static str, value: f64, at: f64 },
    #[error("coefficient `{name}` = {value} at the interval endpoint {at}: the transport term must be parallel to the boundary")]
    BoundaryFlux { name: &'static str, value: f64, at: f64 },
    #[error("coefficient `{name}` is not 1-periodic in `{var}` ({left} at 0 vs {right} at 1)")]
    NotPeriodic {
        name: &'static str,
        var: char,
        left: f64,
        right: f64,
    },
    #[error("frozen slow coordinate {0} lies outside the closed interval [0, 1]")]
    SliceOutOfDomain(f64),
    #[error("vector of length {got} applied to an operator of dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Coefficients `A(y)`, `B(y)`, `a(z)`, `b(z)`, `c(y, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    /// `A(y)`: slow diffusion.
    pub slow_diffusion: Expr,
    /// `B(y)`: slow transport.
    pub slow_transport: Expr,
    /// `a(z)`: fast diffusion.
    pub fast_diffusion: Expr,
    /// `b(z)`: fast transport.
    pub fast_transport: Expr,
    /// `c(y, z)`: zeroth-order growth term.
    pub reaction: Expr,
}

impl CoefficientSet {
    pub fn new(
        slow_diffusion: Expr,
        slow_transport: Expr,
        fast_diffusion: Expr,
        fast_transport: Expr,
        reaction: Expr,
    ) -> Result<Self, OperatorError> {
        let set = Self {
            slow_diffusion,
            slow_transport,
            fast_diffusion,
            fast_transport,
            reaction,
        };
        for (name, e, var, ch) in [
            ("A", &set.slow_diffusion, Var::Z, 'z'),
            ("B", &set.slow_transport, Var::Z, 'z'),
            ("a", &set.fast_diffusion, Var::Y, 'y'),
            ("b", &set.fast_transport, Var::Y, 'y'),
        ] {
            if e.depends_on(var) {
                return Err(OperatorError::WrongVariable { name, var: ch });
            }
        }
        Ok(set)
    }

    /// Parses the five coefficient strings in the order `A, B, a, b, c`.
    pub fn parse(a_big: &str, b_big: &str, a: &str, b: &str, c: &str) -> Result<Self, OperatorError> {
        let p = |name: &'static str, s: &str| Expr::parse(s).map_err(|source| OperatorError::Parse { name, source });
        Self::new(p("A", a_big)?, p("B", b_big)?, p("a", a)?, p("b", b)?, p("c", c)?)
    }

    pub fn slow_diffusion_at(&self, y: f64) -> Result<f64, OperatorError> {
        eval("A", &self.slow_diffusion, y, 0.0)
    }

    pub fn slow_transport_at(&self, y: f64) -> Result<f64, OperatorError> {
        eval("B", &self.slow_transport, y, 0.0)
    }

    pub fn fast_diffusion_at(&self, z: f64) -> Result<f64, OperatorError> {
        eval("a", &self.fast_diffusion, 0.0, z)
    }

    pub fn fast_transport_at(&self, z: f64) -> Result<f64, OperatorError> {
        eval("b", &self.fast_transport, 0.0, z)
    }

    pub fn reaction_at(&self, y: f64, z: f64) -> Result<f64, OperatorError> {
        eval("c", &self.reaction, y, z)
    }

    /// `max |c|` over the grid nodes.
    pub fn reaction_sup<T: Real>(&self, grid: &Grid2D<T>) -> Result<f64, OperatorError> {
        let mut sup = 0.0f64;
        for &y in &grid.gy.nodes {
            for &z in &grid.gz.nodes {
                sup = sup.max(self.reaction_at(y.as_f64(), z.as_f64())?.abs());
            }
        }
        Ok(sup)
    }

    /// Checks ellipticity, endpoint no-flux and torus periodicity on `grid`.
    pub fn validate<T: Real>(&self, grid: &Grid2D<T>) -> Result<(), OperatorError> {
        self.validate_slow(&grid.gy)?;
        self.validate_fast(&grid.gz)?;
        if grid.gy.is_torus() {
            for &z in &grid.gz.nodes {
                let z = z.as_f64();
                periodic("c", 'y', self.reaction_at(0.0, z)?, self.reaction_at(1.0, z)?)?;
            }
        }
        if grid.gz.is_torus() {
            for &y in &grid.gy.nodes {
                let y = y.as_f64();
                periodic("c", 'z', self.reaction_at(y, 0.0)?, self.reaction_at(y, 1.0)?)?;
            }
        }
        Ok(())
    }

    pub(crate) fn validate_slow<T: Real>(&self, gy: &Grid1D<T>) -> Result<(), OperatorError> {
        validate_axis(
            gy,
            ("A", &|y| self.slow_diffusion_at(y)),
            ("B", &|y| self.slow_transport_at(y)),
            'y',
        )
    }

    pub(crate) fn validate_fast<T: Real>(&self, gz: &Grid1D<T>) -> Result<(), OperatorError> {
        validate_axis(
            gz,
            ("a", &|z| self.fast_diffusion_at(z)),
            ("b", &|z| self.fast_transport_at(z)),
            'z',
        )
    }
}

fn eval(name: &'static str, e: &Expr, y: f64, z: f64) -> Result<f64, OperatorError> {
    e.eval(y, z).map_err(|source| OperatorError::Eval { name, source })
}

fn periodic(name: &'static str, var: char, left: f64, right: f64) -> Result<(), OperatorError> {
    if (left - right).abs() > PERIODICITY_TOL * (1.0 + left.abs().max(right.abs())) {
        return Err(OperatorError::NotPeriodic { name, var, left, right });
    }
    Ok(())
}

type Sampler<'a> = (&'static str, &'a dyn Fn(f64) -> Result<f64, OperatorError>);

fn validate_axis<T: Real>(
    g: &Grid1D<T>,
    (dname, diffusion): Sampler<'_>,
    (tname, transport): Sampler<'_>,
    var: char,
) -> Result<(), OperatorError> {
    let mut points: Vec<f64> = g.nodes.iter().map(|x| x.as_f64()).collect();
    let interfaces = if g.is_torus() { g.n } else { g.n - 1 };
    points.extend((0..interfaces).map(|i| g.midpoint_after(i).as_f64()));
    for &x in &points {
        let d = diffusion(x)?;
        if d <= 0.0 {
            return Err(OperatorError::Ellipticity {
                name: dname,
                value: d,
                at: x,
            });
        }
        transport(x)?;
    }
    match g.domain.kind {
        DomainKind::Interval => {
            for at in [0.0, 1.0] {
                let value = transport(at)?;
                if value.abs() > BOUNDARY_FLUX_TOL {
                    return Err(OperatorError::BoundaryFlux { name: tname, value, at });
                }
            }
        }
        DomainKind::Torus => {
            periodic(dname, var, diffusion(0.0)?, diffusion(1.0)?)?;
            periodic(tname, var, transport(0.0)?, transport(1.0)?)?;
        }
    }
    Ok(())
}

/// What an assembled operator discretizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorKind {
    Global { eps: f64 },
    Local { y0: f64 },
    Custom,
}

/// Row-major tensor layout of the unknowns: `outer` blocks of `inner` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub outer: usize,
    pub outer_periodic: bool,
    pub inner: usize,
    pub inner_periodic: bool,
}

/// Square real matrix in compressed-row form, columns sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator<T> {
    pub dimension: usize,
    pub row_offsets: Vec<usize>,
    pub columns: Vec<usize>,
    pub values: Vec<T>,
    pub kind: OperatorKind,
    pub layout: Option<Layout>,
    /// Quadrature weight of each unknown (uniform `1/n` unless assembled on a grid).
    pub weights: Vec<T>,
}

impl<T: Real> SparseOperator<T> {
    /// Builds from unsorted `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dimension: usize, mut triplets: Vec<(usize, usize, T)>, kind: OperatorKind) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_offsets = vec![0usize; dimension + 1];
        let mut columns = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < dimension && c < dimension, "triplet ({r}, {c}) out of range");
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            row_offsets[r + 1] += 1;
            columns.push(c);
            values.push(v);
        }
        for r in 0..dimension {
            row_offsets[r + 1] += row_offsets[r];
        }
        Self {
            dimension,
            row_offsets,
            columns,
            values,
            kind,
            layout: None,
            weights: vec![T::one() / T::of(dimension as f64); dimension],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        self.columns[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.row(r)
            .find(|&(col, _)| col == c)
            .map(|(_, v)| v)
            .unwrap_or_else(T::zero)
    }

    pub fn apply(&self, v: &[T]) -> Result<Vec<T>, OperatorError> {
        if v.len() != self.dimension {
            return Err(OperatorError::DimensionMismatch {
                expected: self.dimension,
                got: v.len(),
            });
        }
        let mut out = vec![T::zero(); self.dimension];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    /// `out = L v` without allocation; lengths must match.
    pub fn apply_into(&self, v: &[T], out: &mut [T]) {
        debug_assert_eq!(v.len(), self.dimension);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                acc += self.values[k] * v[self.columns[k]];
            }
            *o = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dimension).map(|r| self.get(r, r)).collect()
    }

    /// Returns `L + shift I`.
    pub fn shifted(&self, shift: T) -> Self {
        let mut out = self.clone();
        for r in 0..self.dimension {
            for k in out.row_offsets[r]..out.row_offsets[r + 1] {
                if out.columns[k] == r {
                    out.values[k] += shift;
                }
            }
        }
        out
    }

    /// `L*_{pq} = w_q L_{qp} / w_p`, the adjoint in the weighted inner product.
    pub fn weighted_adjoint(&self) -> Self {
        let weights = &self.weights;
        let mut triplets = Vec::with_capacity(self.nnz());
        for q in 0..self.dimension {
            for (p, v) in self.row(q) {
                triplets.push((p, q, weights[q] * v / weights[p]));
            }
        }
        let mut out = Self::from_triplets(self.dimension, triplets, self.kind);
        out.layout = self.layout;
        out.weights = self.weights.clone();
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut m = vec![vec![T::zero(); self.dimension]; self.dimension];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        m
    }

    /// One line per nonzero, `row col value`, 17 significant digits, row-major.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in 0..self.dimension {
            for (c, v) in self.row(r) {
                writeln!(w, "{r} {c} {:.16e}", v.as_f64())?;
            }
        }
        Ok(())
    }
}

struct Stencil1D<T> {
    /// Per node: (neighbour index, coefficient), diagonal included.
    rows: Vec<Vec<(usize, T)>>,
}

/// Flux-form 1-D stencil of `s_d (D u')' + s_t (V u)'`.
fn stencil_1d<T: Real>(
    g: &Grid1D<T>,
    diffusion: &dyn Fn(f64) -> Result<f64, OperatorError>,
    transport: &dyn Fn(f64) -> Result<f64, OperatorError>,
    s_d: T,
    s_t: T,
) -> Result<Stencil1D<T>, OperatorError> {
    let n = g.n;
    let h = g.h;
    let two = T::of(2.0);
    let h2 = h * h;
    let interfaces = if g.is_torus() { n } else { n - 1 };
    let d_mid: Vec<T> = (0..interfaces)
        .map(|i| diffusion(g.midpoint_after(i).as_f64()).map(T::of))
        .collect::<Result<_, _>>()?;
    let v_node: Vec<T> = g
        .nodes
        .iter()
        .map(|x| transport(x.as_f64()).map(T::of))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(3);
        match (g.domain.kind, i) {
            (DomainKind::Interval, 0) => {
                let d = d_mid[0];
                row.push((0, -two * s_d * d / h2 + s_t * v_node[0] / h));
                row.push((1, two * s_d * d / h2 + s_t * v_node[1] / h));
            }
            (DomainKind::Interval, i) if i == n - 1 => {
                let d = d_mid[n - 2];
                row.push((n - 2, two * s_d * d / h2 - s_t * v_node[n - 2] / h));
                row.push((n - 1, -two * s_d * d / h2 - s_t * v_node[n - 1] / h));
            }
            _ => {
                let fwd = g.neighbor(i, true).expect("interior or torus");
                let back = g.neighbor(i, false).expect("interior or torus");
                let d_fwd = d_mid[i];
                let d_back = d_mid[back];
                row.push((back, s_d * d_back / h2 - s_t * v_node[back] / (two * h)));
                row.push((i, -s_d * (d_fwd + d_back) / h2));
                row.push((fwd, s_d * d_fwd / h2 + s_t * v_node[fwd] / (two * h)));
            }
        }
        rows.push(row);
    }
    Ok(Stencil1D { rows })
}

fn slow_stencil<T: Real>(gy: &Grid1D<T>, coeffs: &CoefficientSet, eps: T) -> Result<Stencil1D<T>, OperatorError> {
    stencil_1d(
        gy,
        &|y| coeffs.slow_diffusion_at(y),
        &|y| coeffs.slow_transport_at(y),
        eps * eps,
        eps,
    )
}

fn fast_stencil<T: Real>(gz: &Grid1D<T>, coeffs: &CoefficientSet) -> Result<Stencil1D<T>, OperatorError> {
    stencil_1d(
        gz,
        &|z| coeffs.fast_diffusion_at(z),
        &|z| coeffs.fast_transport_at(z),
        T::one(),
        T::one(),
    )
}

/// Discretizes the global operator at `eps > 0`.
pub fn assemble_global<T: Real>(
    grid: &Grid2D<T>,
    coeffs: &CoefficientSet,
    eps: T,
) -> Result<SparseOperator<T>, OperatorError> {
    assert!(eps > T::zero(), "eps must be positive");
    coeffs.validate(grid)?;
    let sy = slow_stencil(&grid.gy, coeffs, eps)?;
    let sz = fast_stencil(&grid.gz, coeffs)?;
    let (ny, nz) = (grid.gy.n, grid.gz.n);
    let mut triplets = Vec::with_capacity(5 * grid.len());
    for i in 0..ny {
        let y = grid.gy.nodes[i].as_f64();
        for j in 0..nz {
            let row = grid.idx(i, j);
            let z = grid.gz.nodes[j].as_f64();
            triplets.push((row, row, T::of(coeffs.reaction_at(y, z)?)));
            for &(k, v) in &sy.rows[i] {
                triplets.push((row, grid.idx(k, j), v));
            }
            for &(k, v) in &sz.rows[j] {
                triplets.push((row, grid.idx(i, k), v));
            }
        }
    }
    let mut op = SparseOperator::from_triplets(grid.len(), triplets, OperatorKind::Global { eps: eps.as_f64() });
    op.layout = Some(Layout {
        outer: ny,
        outer_periodic: grid.gy.is_torus(),
        inner: nz,
        inner_periodic: grid.gz.is_torus(),
    });
    op.weights = grid.weights();
    Ok(op)
}

/// Discretizes `L_z + c(y0, .)` on `gz` with the same scheme as [`assemble_global`].
pub fn assemble_local<T: Real>(
    gz: &Grid1D<T>,
    y_domain: DomainKind,
    coeffs: &CoefficientSet,
    y0: f64,
) -> Result<SparseOperator<T>, OperatorError> {
    if y_domain == DomainKind::Interval && !(0.0..=1.0).contains(&y0) {
        return Err(OperatorError::SliceOutOfDomain(y0));
    }
    coeffs.validate_fast(gz)?;
    let sz = fast_stencil(gz, coeffs)?;
    let mut triplets = Vec::with_capacity(3 * gz.n);
    for j in 0..gz.n {
        let z = gz.nodes[j].as_f64();
        triplets.push((j, j, T::of(coeffs.reaction_at(y0, z)?)));
        for &(k, v) in &sz.rows[j] {
            triplets.push((j, k, v));
        }
    }
    let mut op = SparseOperator::from_triplets(gz.n, triplets, OperatorKind::Local { y0 });
    op.layout = Some(Layout {
        outer: 1,
        outer_periodic: false,
        inner: gz.n,
        inner_periodic: gz.is_torus(),
    });
    op.weights = gz.weights();
    Ok(op)
}
