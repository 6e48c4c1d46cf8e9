//! Local spectrum `y -> k^y`, the `eps -> 0` limit predictors and the slice diagnostics.
//!
//! With `g(y) = k^y - B^2/(4A)`, `M = max g`, `gamma = int B/(2A)` and
//! `j(k) = int sqrt((k - g)/A)`, the limit of the global eigenvalue is `M` when
//! `|gamma| <= j(M)` and `j^{-1}(|gamma|)` otherwise; with `B = 0` it is `max k^y`.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::eig::{principal_eigenpair_with, EigError, SolverOptions};
use crate::grid::DomainKind;
use crate::operator::{assemble_local, CoefficientSet, OperatorError};
use crate::quad::{bisect, parabolic_peak, trapezoid};
use crate::{CubicSpline, EigenPair, Grid1D, Grid2D};

/// `B` counts as identically zero when its grid sup is at most this.
pub const B_ZERO_TOL: f64 = 1e-14;
/// Subcells per cell next to the argmax of `g` in the quadrature of `j`.
const PEAK_REFINEMENT: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("local problem at y = {y}: {source}")]
    Local {
        y: f64,
        #[source]
        source: EigError,
    },
    #[error("B is not identically zero and the slow domain is an interval: no limit formula applies")]
    NotTorus,
    #[error("quadrature of {0} produced a non-finite value")]
    Quadrature(&'static str),
    #[error("could not bracket j^-1({0})")]
    Bracket(f64),
    #[error("slice at y-node {0} has no mass")]
    ZeroSliceMass(usize),
    #[error("eigenvector of length {got} does not match a grid of {expected} nodes")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Principal eigenpairs of the frozen-`y` problems at every slow node.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSpectrum {
    pub y_nodes: Vec<f64>,
    pub y_domain: DomainKind,
    pub k: Vec<f64>,
    /// `psi[i]` is the normalized positive `psi^{y_i}` over the fast nodes.
    pub psi: Vec<Vec<f64>>,
    pub gz: Grid1D,
    pub options: SolverOptions,
}

impl LocalSpectrum {
    /// Solves the local problem at an arbitrary `y` with the same fast grid and options.
    pub fn solve_at(&self, coeffs: &CoefficientSet, y: f64) -> Result<EigenPair, SpectrumError> {
        solve_local(&self.gz, self.y_domain, coeffs, y, &self.options)
    }

    /// Largest sampled `k^y`.
    pub fn k_max(&self) -> f64 {
        self.k.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_torus(&self) -> bool {
        self.y_domain == DomainKind::Torus
    }

    /// Spacing of the slow nodes.
    pub fn h(&self) -> f64 {
        match self.y_domain {
            DomainKind::Torus => 1.0 / self.y_nodes.len() as f64,
            DomainKind::Interval => 1.0 / (self.y_nodes.len() - 1) as f64,
        }
    }
}

fn solve_local(
    gz: &Grid1D,
    y_domain: DomainKind,
    coeffs: &CoefficientSet,
    y: f64,
    options: &SolverOptions,
) -> Result<EigenPair, SpectrumError> {
    let op = assemble_local(gz, y_domain, coeffs, y)?;
    principal_eigenpair_with(&op, options).map_err(|source| SpectrumError::Local { y, source })
}

pub fn local_spectrum(grid: &Grid2D, coeffs: &CoefficientSet, tol: f64) -> Result<LocalSpectrum, SpectrumError> {
    local_spectrum_with(
        grid,
        coeffs,
        &SolverOptions::with_tol(tol, SolverOptions::default().max_iter),
    )
}

pub fn local_spectrum_with(
    grid: &Grid2D,
    coeffs: &CoefficientSet,
    options: &SolverOptions,
) -> Result<LocalSpectrum, SpectrumError> {
    coeffs.validate(grid)?;
    let y_domain = grid.gy.domain.kind;
    let pairs = grid
        .gy
        .nodes
        .par_iter()
        .map(|&y| solve_local(&grid.gz, y_domain, coeffs, y, options))
        .collect::<Result<Vec<_>, _>>()?;
    let (k, psi) = pairs.into_iter().map(|p| (p.k, p.phi)).unzip();
    Ok(LocalSpectrum {
        y_nodes: grid.gy.nodes.clone(),
        y_domain,
        k,
        psi,
        gz: grid.gz.clone(),
        options: *options,
    })
}

/// Which limit formula applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Bzero,
    TransportSubcritical,
    TransportSupercritical,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Bzero => "bzero",
            Regime::TransportSubcritical => "transport-subcritical",
            Regime::TransportSupercritical => "transport-supercritical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitPrediction {
    pub m: f64,
    pub gamma: f64,
    pub j_m: f64,
    pub k0: f64,
    pub regime: Regime,
    /// Refined location of the maximum of `g`.
    pub y_star: f64,
}

/// The slow profile `g = k^y - B^2/(4A)` with everything needed to evaluate `gamma`,
/// `j` and `j^{-1}`.
#[derive(Debug, Clone)]
pub struct SlowProfile {
    pub y_nodes: Vec<f64>,
    pub periodic: bool,
    pub h: f64,
    pub g: Vec<f64>,
    pub slow_diffusion: Vec<f64>,
    pub slow_transport: Vec<f64>,
    pub spline: CubicSpline,
    pub argmax: usize,
    pub y_star: f64,
    pub m: f64,
    /// `(weight, g, A)` triples of the quadrature used for `j`.
    quadrature: Vec<(f64, f64, f64)>,
}

impl SlowProfile {
    pub fn new(spec: &LocalSpectrum, coeffs: &CoefficientSet) -> Result<Self, SpectrumError> {
        let n = spec.y_nodes.len();
        let periodic = spec.is_torus();
        let h = spec.h();
        let mut g = Vec::with_capacity(n);
        let mut a_big = Vec::with_capacity(n);
        let mut b_big = Vec::with_capacity(n);
        for (&y, &k) in spec.y_nodes.iter().zip(&spec.k) {
            let a = coeffs.slow_diffusion_at(y)?;
            let b = coeffs.slow_transport_at(y)?;
            g.push(k - b * b / (4.0 * a));
            a_big.push(a);
            b_big.push(b);
        }
        let spline = if periodic {
            CubicSpline::periodic(g.clone())
        } else {
            CubicSpline::natural(g.clone())
        };
        let argmax = (0..n).fold(0, |best, i| if g[i] > g[best] { i } else { best });
        let neighbours = if periodic {
            Some(((argmax + n - 1) % n, (argmax + 1) % n))
        } else if argmax > 0 && argmax + 1 < n {
            Some((argmax - 1, argmax + 1))
        } else {
            None
        };
        let (offset, m) = match neighbours {
            Some((l, r)) => parabolic_peak(g[l], g[argmax], g[r], h),
            None => (0.0, g[argmax]),
        };
        let mut y_star = spec.y_nodes[argmax] + offset;
        if periodic {
            y_star = y_star.rem_euclid(1.0);
        }

        let quadrature = j_quadrature(&spline, coeffs, periodic, n, y_star)?;

        Ok(Self {
            y_nodes: spec.y_nodes.clone(),
            periodic,
            h,
            g,
            slow_diffusion: a_big,
            slow_transport: b_big,
            spline,
            argmax,
            y_star,
            m,
            quadrature,
        })
    }

    pub fn transport_sup(&self) -> f64 {
        self.slow_transport.iter().fold(0.0, |s, b| s.max(b.abs()))
    }

    /// `gamma = int_0^1 B/(2A)`.
    pub fn gamma(&self) -> f64 {
        let f: Vec<f64> = self
            .slow_transport
            .iter()
            .zip(&self.slow_diffusion)
            .map(|(b, a)| b / (2.0 * a))
            .collect();
        trapezoid(&f, self.h, self.periodic)
    }

    /// `j(k) = int_0^1 sqrt((k - g)/A)`, negative radicands clamped to zero.
    pub fn j(&self, k: f64) -> f64 {
        self.quadrature
            .iter()
            .map(|&(w, g, a)| w * ((k - g).max(0.0) / a).sqrt())
            .sum()
    }

    /// Solves `j(k) = t` for `k >= M`; returns `M` when `t <= j(M)`.
    pub fn j_inverse(&self, t: f64) -> Result<f64, SpectrumError> {
        if t <= self.j(self.m) {
            return Ok(self.m);
        }
        let a_max = self.slow_diffusion.iter().fold(0.0f64, |s, &a| s.max(a));
        let mut width = (t * t * a_max).max(1.0);
        for _ in 0..200 {
            if self.j(self.m + width) >= t {
                let xtol = 1e-15 * (self.m.abs() + width).max(1.0);
                return Ok(bisect(|k| self.j(k) - t, self.m, self.m + width, xtol));
            }
            width *= 2.0;
        }
        Err(SpectrumError::Bracket(t))
    }
}

const GAUSS_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_8,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_8,
];

/// Composite 4-point Gauss rule for integrands in `g` (spline) and `A` over the slow
/// domain. The integrand of `j(M)` has a kink at `y_star`, so the cells are anchored
/// there and the two cells touching it are split [`PEAK_REFINEMENT`] times.
fn j_quadrature(
    spline: &CubicSpline,
    coeffs: &CoefficientSet,
    periodic: bool,
    n: usize,
    y_star: f64,
) -> Result<Vec<(f64, f64, f64)>, SpectrumError> {
    let mut breaks: Vec<f64> = if periodic {
        (0..=n).map(|i| y_star + i as f64 / n as f64).collect()
    } else {
        let mut b: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        if y_star > 0.0 && y_star < 1.0 && b.iter().all(|&x| x != y_star) {
            b.push(y_star);
            b.sort_by(f64::total_cmp);
        }
        b
    };
    breaks.dedup();
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let touches = lo == y_star || hi == y_star || (periodic && hi == breaks[breaks.len() - 1]);
        let pieces = if touches { PEAK_REFINEMENT } else { 1 };
        let step = (hi - lo) / pieces as f64;
        for p in 0..pieces {
            let centre = lo + (p as f64 + 0.5) * step;
            for (x, wt) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
                let y = centre + 0.5 * step * x;
                let y = if periodic { y.rem_euclid(1.0) } else { y };
                out.push((0.5 * step * wt, spline.eval(y), coeffs.slow_diffusion_at(y)?));
            }
        }
    }
    Ok(out)
}

pub fn predict_limit(spec: &LocalSpectrum, coeffs: &CoefficientSet) -> Result<LimitPrediction, SpectrumError> {
    let profile = SlowProfile::new(spec, coeffs)?;
    let finite = |x: f64, what| {
        if x.is_finite() {
            Ok(x)
        } else {
            Err(SpectrumError::Quadrature(what))
        }
    };
    let m = finite(profile.m, "M")?;
    let j_m = finite(profile.j(m), "j(M)")?;
    let base = LimitPrediction {
        m,
        gamma: 0.0,
        j_m,
        k0: m,
        regime: Regime::Bzero,
        y_star: profile.y_star,
    };
    if profile.transport_sup() <= B_ZERO_TOL {
        return Ok(base);
    }
    if !profile.periodic {
        return Err(SpectrumError::NotTorus);
    }
    let gamma = finite(profile.gamma(), "gamma")?;
    if gamma.abs() <= j_m {
        Ok(LimitPrediction {
            gamma,
            regime: Regime::TransportSubcritical,
            ..base
        })
    } else {
        Ok(LimitPrediction {
            gamma,
            k0: finite(profile.j_inverse(gamma.abs())?, "j^-1(|gamma|)")?,
            regime: Regime::TransportSupercritical,
            ..base
        })
    }
}

/// Total variation between normalized slices of the global eigenvector and `psi^y`.
#[derive(Debug, Clone, PartialEq)]
pub struct TvDiagnostic {
    pub per_y: Vec<f64>,
    pub sup: f64,
}

/// `(1/2) sum_j w_j |p_j - q_j|` for densities `p`, `q` with respect to weights `w`.
pub fn total_variation(p: &[f64], q: &[f64], w: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).zip(w).map(|((a, b), w)| w * (a - b).abs()).sum::<f64>()
}

pub fn slice_tv_diagnostic(
    global: &EigenPair,
    spec: &LocalSpectrum,
    grid: &Grid2D,
) -> Result<TvDiagnostic, SpectrumError> {
    if global.phi.len() != grid.len() || spec.psi.len() != grid.gy.n {
        return Err(SpectrumError::DimensionMismatch {
            expected: grid.len(),
            got: global.phi.len(),
        });
    }
    let wz = grid.gz.weights();
    let nz = grid.gz.n;
    let mut per_y = Vec::with_capacity(grid.gy.n);
    for (i, psi) in spec.psi.iter().enumerate() {
        let slice = &global.phi[i * nz..(i + 1) * nz];
        let mass: f64 = slice.iter().zip(&wz).map(|(p, w)| p * w).sum();
        if !(mass > 0.0) {
            return Err(SpectrumError::ZeroSliceMass(i));
        }
        let normalized: Vec<f64> = slice.iter().map(|p| p / mass).collect();
        per_y.push(total_variation(&normalized, psi, &wz));
    }
    let sup = per_y.iter().copied().fold(0.0, f64::max);
    Ok(TvDiagnostic { per_y, sup })
}

/// Sup norms of `B'` and `b'` (central differences on the grid) and
/// `c_m = ||c|| + ||B'|| + ||b'|| + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceBounds {
    pub slow: f64,
    pub fast: f64,
    pub c_m: f64,
}

fn derivative_sup(g: &Grid1D, f: impl Fn(f64) -> Result<f64, OperatorError>) -> Result<f64, OperatorError> {
    let values = g.nodes.iter().map(|&x| f(x)).collect::<Result<Vec<_>, _>>()?;
    let mut sup = 0.0f64;
    for i in 0..g.n {
        let d = match (g.neighbor(i, false), g.neighbor(i, true)) {
            (Some(l), Some(r)) => (values[r] - values[l]) / (2.0 * g.h),
            (None, Some(r)) => (values[r] - values[i]) / g.h,
            (Some(l), None) => (values[i] - values[l]) / g.h,
            (None, None) => 0.0,
        };
        sup = sup.max(d.abs());
    }
    Ok(sup)
}

pub fn divergence_sup(coeffs: &CoefficientSet, grid: &Grid2D) -> Result<DivergenceBounds, SpectrumError> {
    let slow = derivative_sup(&grid.gy, |y| coeffs.slow_transport_at(y))?;
    let fast = derivative_sup(&grid.gz, |z| coeffs.fast_transport_at(z))?;
    let c_m = coeffs.reaction_sup(grid)? + slow + fast + 1.0;
    Ok(DivergenceBounds { slow, fast, c_m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eig::dense_oracle;
    use crate::grid::Domain1D;
    use crate::operator::assemble_global;
    use std::f64::consts::PI;

    fn coeffs(a_big: &str, b_big: &str, a: &str, b: &str, c: &str) -> CoefficientSet {
        CoefficientSet::parse(a_big, b_big, a, b, c).unwrap()
    }

    fn torus(ny: usize, nz: usize) -> Grid2D {
        Grid2D::build(Domain1D::TORUS, ny, Domain1D::TORUS, nz).unwrap()
    }

    #[test]
    fn y_only_reaction_gives_uniform_psi() {
        let grid = torus(16, 8);
        let cs = coeffs("1", "0", "1 + 0.3*cos(2*pi*z)", "0", "sin(2*pi*y)");
        let spec = local_spectrum(&grid, &cs, 1e-10).unwrap();
        for (i, &y) in spec.y_nodes.iter().enumerate() {
            assert!((spec.k[i] - (2.0 * PI * y).sin()).abs() < 1e-10);
            assert!(spec.psi[i].iter().all(|p| (p - 1.0).abs() < 1e-10));
        }
    }

    #[test]
    fn additive_reaction_separates() {
        let grid = torus(16, 16);
        let cs = coeffs("1", "0", "1", "0", "cos(2*pi*y) + 0.7*cos(2*pi*z)^2");
        let spec = local_spectrum(&grid, &cs, 1e-10).unwrap();
        let shifted: Vec<f64> = spec
            .y_nodes
            .iter()
            .zip(&spec.k)
            .map(|(y, k)| k - (2.0 * PI * y).cos())
            .collect();
        let mean = shifted.iter().sum::<f64>() / shifted.len() as f64;
        let var = shifted.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / shifted.len() as f64;
        assert!(var <= 1e-10, "{var}");
        assert!(mean > 0.0 && mean < 0.7);
    }

    #[test]
    fn local_eigenvalues_match_dense_oracle() {
        let grid = torus(8, 64);
        let cs = coeffs("1", "0", "1", "0", "cos(2*pi*y)*cos(2*pi*z)");
        let spec = local_spectrum(&grid, &cs, 1e-10).unwrap();
        for (i, &y) in spec.y_nodes.iter().enumerate() {
            let op = assemble_local(&grid.gz, DomainKind::Torus, &cs, y).unwrap();
            let dense = dense_oracle(&op).unwrap();
            assert!((dense.k - spec.k[i]).abs() < 1e-9, "y={y}");
        }
    }

    #[test]
    fn bzero_prediction_is_max_of_local_spectrum() {
        let grid = torus(32, 16);
        let cs = coeffs("1", "0", "1", "0", "cos(2*pi*y)*(1 + 0.5*cos(2*pi*z))");
        let spec = local_spectrum(&grid, &cs, 1e-10).unwrap();
        let pred = predict_limit(&spec, &cs).unwrap();
        assert_eq!(pred.regime, Regime::Bzero);
        assert_eq!(pred.gamma, 0.0);
        assert!(pred.j_m >= 0.0);
        assert!(pred.m >= spec.k_max() && pred.m - spec.k_max() < 1e-3);
        assert_eq!(pred.k0, pred.m);
    }

    #[test]
    fn constant_transport_shifts_the_maximum() {
        let beta = 0.3;
        let grid = torus(64, 8);
        let cs = coeffs("1", &format!("{}", 2.0 * beta), "1", "0", "cos(2*pi*y)");
        let spec = local_spectrum(&grid, &cs, 1e-10).unwrap();
        let pred = predict_limit(&spec, &cs).unwrap();
        assert!((pred.m - (1.0 - beta * beta)).abs() < 1e-12);
        assert!((pred.gamma - beta).abs() < 1e-14);
        // independent quadrature of j(M) = int sqrt(1 - cos(2 pi y)) at 10x resolution
        let fine = 640;
        let oracle: f64 = (0..fine)
            .map(|i| (1.0 - (2.0 * PI * (i as f64 + 0.5) / fine as f64).cos()).sqrt())
            .sum::<f64>()
            / fine as f64;
        assert!((oracle - 2f64.sqrt() * 2.0 / PI).abs() < 1e-5);
        assert!((pred.j_m - oracle).abs() < 1e-6, "{} vs {oracle}", pred.j_m);
        assert_eq!(pred.regime, Regime::TransportSubcritical);
    }

    #[test]
    fn j_is_increasing_and_invertible() {
        let grid = torus(32, 16);
        let cs = coeffs(
            "1 + 0.2*sin(2*pi*y)",
            "0.5",
            "1",
            "0",
            "cos(2*pi*y)*(1 + 0.5*cos(2*pi*z))",
        );
        let spec = local_spectrum(&grid, &cs, 1e-10).unwrap();
        let profile = SlowProfile::new(&spec, &cs).unwrap();
        let mut last = f64::NEG_INFINITY;
        for s in 0..=100 {
            let j = profile.j(profile.m + 0.1 * s as f64);
            assert!(j > last);
            last = j;
        }
        let jm = profile.j(profile.m);
        for s in 0..=20 {
            let t = jm + 0.25 * s as f64;
            let k = profile.j_inverse(t).unwrap();
            assert!((profile.j(k) - t).abs() <= 1e-8);
        }
        assert!((profile.j_inverse(jm).unwrap() - profile.m).abs() <= 1e-8);
    }

    #[test]
    fn large_transport_is_supercritical() {
        let grid = torus(32, 16);
        let cs = coeffs("1", "6", "1", "0", "cos(2*pi*y)*(1 + 0.5*cos(2*pi*z))");
        let spec = local_spectrum(&grid, &cs, 1e-10).unwrap();
        let pred = predict_limit(&spec, &cs).unwrap();
        assert_eq!(pred.regime, Regime::TransportSupercritical);
        assert!((pred.gamma - 3.0).abs() < 1e-13);
        assert!(pred.k0 > pred.m);
    }

    #[test]
    fn interval_requires_zero_transport() {
        let grid = Grid2D::build(Domain1D::INTERVAL, 17, Domain1D::TORUS, 8).unwrap();
        let cs = coeffs("1", "y*(1-y)", "1", "0", "cos(pi*y)");
        let spec = local_spectrum(&grid, &cs, 1e-10).unwrap();
        assert_eq!(predict_limit(&spec, &cs), Err(SpectrumError::NotTorus));
        let cs = coeffs("1", "0", "1", "0", "cos(pi*y)");
        let spec = local_spectrum(&grid, &cs, 1e-10).unwrap();
        let pred = predict_limit(&spec, &cs).unwrap();
        assert_eq!(pred.regime, Regime::Bzero);
        assert!((pred.k0 - 1.0).abs() < 1e-10);
        assert!(pred.y_star.abs() < 1e-12);
    }

    #[test]
    fn tv_vanishes_for_y_independent_coefficients() {
        let grid = torus(8, 16);
        let cs = coeffs("1", "0.3", "1 + 0.5*sin(2*pi*z)", "0.2", "cos(2*pi*z)");
        let spec = local_spectrum(&grid, &cs, 1e-10).unwrap();
        for eps in [0.4, 0.1] {
            let op = assemble_global(&grid, &cs, eps).unwrap();
            let pair = crate::eig::principal_eigenpair(&op, 1e-12, 200_000).unwrap();
            let tv = slice_tv_diagnostic(&pair, &spec, &grid).unwrap();
            assert!(tv.sup <= 1e-10, "{}", tv.sup);
        }
        let w = [0.25; 4];
        let p = [1.0, 2.0, 0.5, 0.5];
        assert_eq!(total_variation(&p, &p, &w), 0.0);
        assert!((total_variation(&p, &[1.0; 4], &w) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn tv_rejects_mismatched_vector() {
        let grid = torus(4, 4);
        let cs = coeffs("1", "0", "1", "0", "0");
        let spec = local_spectrum(&grid, &cs, 1e-10).unwrap();
        let pair = EigenPair {
            k: 0.0,
            phi: vec![1.0; 8],
            residual: 0.0,
            iterations: 0,
        };
        assert!(matches!(
            slice_tv_diagnostic(&pair, &spec, &grid),
            Err(SpectrumError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn divergence_bounds() {
        let grid = torus(64, 8);
        let d = divergence_sup(&coeffs("1", "0.7", "1", "0", "0"), &grid).unwrap();
        assert!(d.slow <= 1e-10 && d.fast <= 1e-10);
        assert_eq!(d.c_m, 1.0);
        let d = divergence_sup(&coeffs("1", "sin(2*pi*y)", "1", "0", "2*cos(2*pi*z)"), &grid).unwrap();
        assert!((d.slow - 2.0 * PI).abs() < 2e-2);
        assert!((d.c_m - (2.0 + d.slow + 1.0)).abs() < 1e-12);
    }
}
