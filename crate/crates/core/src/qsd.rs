//! Monte Carlo for the killed diffusion whose conditioned law converges to the
//! principal eigenfunction.
//!
//! Each particle follows the Euler-Maruyama scheme
//!
//! ```text
//! dY = (eps^2 A'(Y) - eps B(Y)) dt + eps sqrt(2 A(Y)) dW
//! dZ = (a'(Z) - b(Z)) dt + sqrt(2 a(Z)) dW'
//! ```
//!
//! with folding at interval ends, and dies once its integrated hazard
//! `int d(Y, Z) dt`, `d = c_m - c`, exceeds an independent `Exp(1)` threshold.
//! Optionally, dead particles are moved onto a uniformly chosen survivor
//! (Fleming-Viot), which keeps the ensemble size constant over long horizons.

use rand::{Rng, SeedableRng};
use rand_distr::{Exp1, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use thiserror::Error;

use crate::grid::DomainKind;
use crate::operator::{CoefficientSet, OperatorError};
use crate::spectrum::{divergence_sup, total_variation, SpectrumError};
use crate::Grid2D;

pub const MIN_PARTICLES: usize = 100;
/// Sample points per unit length of the coefficient tables.
const TABLE_RESOLUTION: usize = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QsdError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error("dt = {dt} violates the stability guard dt <= {guard}")]
    InvalidDt { dt: f64, guard: f64 },
    #[error("at least {MIN_PARTICLES} particles are required, got {0}")]
    TooFewParticles(usize),
    #[error("all particles died by t = {t} (survival scale exp(-c_m t) = {expected:e})")]
    AllDead { t: f64, expected: f64 },
    #[error("checkpoints must be finite, nonnegative and nondecreasing")]
    Checkpoints,
    #[error("initial cell ({0}, {1}) lies outside the grid")]
    InitialCell(usize, usize),
    #[error("initial density must have one nonnegative entry per node and positive mass")]
    InitialDensity,
    #[error("reference density has length {got}, the grid has {expected} nodes")]
    ReferenceLength { expected: usize, got: usize },
}

/// Initial law of the particles.
#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Uniform,
    /// Uniform on the cell of node `(i, j)`.
    Cell(usize, usize),
    /// Node values of a density with respect to the grid weights; particles are
    /// placed uniformly within the cell of a node drawn with probability `w_p f_p`.
    Density(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QsdParams {
    pub eps: f64,
    pub n_particles: usize,
    pub dt: f64,
    pub seed: u64,
    pub fleming_viot: bool,
    pub initial: Initial,
}

/// Conditioned law of the survivors on the grid cells at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct QsdEstimate {
    pub t: f64,
    pub survivors: usize,
    /// Survivor fraction per cell in flat grid order; sums to one when `survivors > 0`.
    pub histogram: Vec<f64>,
    pub tv_vs_phi: Option<f64>,
    /// Fleming-Viot relocations so far.
    pub resampled: u64,
}

impl QsdEstimate {
    /// `3 sqrt(#cells / survivors)`.
    pub fn noise_floor(&self) -> f64 {
        3.0 * (self.histogram.len() as f64 / self.survivors.max(1) as f64).sqrt()
    }
}

/// Largest step allowed by `dt <= h_min^2 / (2 max(eps^2 A, a))`.
pub fn dt_guard(coeffs: &CoefficientSet, grid: &Grid2D, eps: f64) -> Result<f64, QsdError> {
    let h = grid.gy.h.min(grid.gz.h);
    let mut rate = 0.0f64;
    for &y in &grid.gy.nodes {
        rate = rate.max(eps * eps * coeffs.slow_diffusion_at(y)?);
    }
    for &z in &grid.gz.nodes {
        rate = rate.max(coeffs.fast_diffusion_at(z)?);
    }
    Ok(h * h / (2.0 * rate))
}

/// Death clock by exponential thresholding: fires once the trapezoid
/// integral of the rate reaches an `Exp(1)` threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clock {
    pub threshold: f64,
    pub hazard: f64,
}

impl Clock {
    pub fn new<R: Rng>(rng: &mut R) -> Self {
        Self {
            threshold: rng.sample(Exp1),
            hazard: 0.0,
        }
    }

    /// Adds `(d_prev + d_next) dt / 2`; when the threshold is crossed, returns the
    /// fraction of the step at which the linearly interpolated hazard reached it.
    pub fn advance(&mut self, d_prev: f64, d_next: f64, dt: f64) -> Option<f64> {
        let before = self.hazard;
        self.hazard += 0.5 * (d_prev + d_next) * dt;
        (self.hazard >= self.threshold).then(|| {
            let step = self.hazard - before;
            if step > 0.0 {
                (self.threshold - before) / step
            } else {
                0.0
            }
        })
    }
}

/// Piecewise-linear table of a function on `[0, 1]`.
#[derive(Debug, Clone)]
struct Table {
    periodic: bool,
    scale: f64,
    values: Vec<f64>,
}

impl Table {
    fn new(periodic: bool, f: impl Fn(f64) -> Result<f64, OperatorError>) -> Result<Self, OperatorError> {
        let n = TABLE_RESOLUTION;
        let values = (0..=n).map(|i| f(i as f64 / n as f64)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            periodic,
            scale: n as f64,
            values,
        })
    }

    /// Central differences of `f` on the table nodes (one-sided at interval ends).
    fn derivative(&self) -> Self {
        let n = self.values.len() - 1;
        let v = &self.values;
        let values = (0..=n)
            .map(|i| {
                let (l, r, span) = if i > 0 && i < n {
                    (v[i - 1], v[i + 1], 2.0)
                } else if self.periodic {
                    (v[n - 1], v[1], 2.0)
                } else if i == 0 {
                    (v[0], v[1], 1.0)
                } else {
                    (v[n - 1], v[n], 1.0)
                };
                (r - l) * self.scale / span
            })
            .collect();
        Self {
            periodic: self.periodic,
            scale: self.scale,
            values,
        }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let s = x * self.scale;
        let i = (s as usize).min(self.values.len() - 2);
        let t = s - i as f64;
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }
}

/// Bilinear table of the death rate on `[0, 1]^2`.
#[derive(Debug, Clone)]
struct Table2D {
    n: usize,
    values: Vec<f64>,
}

impl Table2D {
    fn new(n: usize, f: impl Fn(f64, f64) -> Result<f64, OperatorError>) -> Result<Self, OperatorError> {
        let mut values = Vec::with_capacity((n + 1) * (n + 1));
        for i in 0..=n {
            for j in 0..=n {
                values.push(f(i as f64 / n as f64, j as f64 / n as f64)?);
            }
        }
        Ok(Self { n, values })
    }

    #[inline]
    fn eval(&self, y: f64, z: f64) -> f64 {
        let (sy, sz) = (y * self.n as f64, z * self.n as f64);
        let i = (sy as usize).min(self.n - 1);
        let j = (sz as usize).min(self.n - 1);
        let (ty, tz) = (sy - i as f64, sz - j as f64);
        let row = self.n + 1;
        let v00 = self.values[i * row + j];
        let v01 = self.values[i * row + j + 1];
        let v10 = self.values[(i + 1) * row + j];
        let v11 = self.values[(i + 1) * row + j + 1];
        let v0 = v00 + tz * (v01 - v00);
        let v1 = v10 + tz * (v11 - v10);
        v0 + ty * (v1 - v0)
    }
}

/// Drift and noise amplitude of one coordinate.
#[derive(Debug, Clone)]
enum Motion {
    Constant { drift: f64, sigma: f64 },
    Tabulated { drift: Table, sigma: Table },
}

#[derive(Debug, Clone)]
struct Axis {
    periodic: bool,
    motion: Motion,
}

impl Axis {
    fn new(periodic: bool, drift: Table, sigma: Table) -> Self {
        let constant = |t: &Table| t.values.iter().all(|&v| v == t.values[0]);
        let motion = if constant(&drift) && constant(&sigma) {
            Motion::Constant {
                drift: drift.values[0],
                sigma: sigma.values[0],
            }
        } else {
            Motion::Tabulated { drift, sigma }
        };
        Self { periodic, motion }
    }

    #[inline]
    fn step(&self, x: f64, dt: f64, sqrt_dt: f64, noise: f64) -> f64 {
        let x = match &self.motion {
            Motion::Constant { drift, sigma } => x + drift * dt + sigma * sqrt_dt * noise,
            Motion::Tabulated { drift, sigma } => x + drift.eval(x) * dt + sigma.eval(x) * sqrt_dt * noise,
        };
        if self.periodic {
            x - x.floor()
        } else if x < 0.0 {
            (-x).min(1.0)
        } else if x > 1.0 {
            (2.0 - x).max(0.0)
        } else {
            x
        }
    }
}

/// Particles with positions, clocks and per-particle random streams.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub clocks: Vec<Clock>,
    pub alive: Vec<bool>,
    pub t: f64,
    pub dt: f64,
    pub seed: u64,
    /// Death rate at the current position.
    rate: Vec<f64>,
    rngs: Vec<Xoshiro256PlusPlus>,
    slow: Axis,
    fast: Axis,
    death: Table2D,
    c_m: f64,
    fleming_viot: bool,
    resampled: u64,
}

impl ParticleEnsemble {
    pub fn new(coeffs: &CoefficientSet, grid: &Grid2D, params: &QsdParams) -> Result<Self, QsdError> {
        coeffs.validate(grid)?;
        if params.n_particles < MIN_PARTICLES {
            return Err(QsdError::TooFewParticles(params.n_particles));
        }
        let guard = dt_guard(coeffs, grid, params.eps)?;
        if !(params.dt > 0.0 && params.dt <= guard * (1.0 + 1e-12)) {
            return Err(QsdError::InvalidDt { dt: params.dt, guard });
        }
        let eps = params.eps;
        let slow_periodic = grid.gy.is_torus();
        let fast_periodic = grid.gz.is_torus();
        let a_big = Table::new(slow_periodic, |y| coeffs.slow_diffusion_at(y))?;
        let a_big_prime = a_big.derivative();
        let b_big = Table::new(slow_periodic, |y| coeffs.slow_transport_at(y))?;
        let slow = Axis::new(
            slow_periodic,
            combine(&a_big_prime, &b_big, |da, b| eps * eps * da - eps * b),
            map(&a_big, |a| eps * (2.0 * a).sqrt()),
        );
        let a = Table::new(fast_periodic, |z| coeffs.fast_diffusion_at(z))?;
        let a_prime = a.derivative();
        let b = Table::new(fast_periodic, |z| coeffs.fast_transport_at(z))?;
        let fast = Axis::new(
            fast_periodic,
            combine(&a_prime, &b, |da, b| da - b),
            map(&a, |a| (2.0 * a).sqrt()),
        );
        let c_m = divergence_sup(coeffs, grid)?.c_m;
        let resolution = (4 * grid.gy.n.max(grid.gz.n)).max(256);
        let death = Table2D::new(resolution, |y, z| Ok(c_m - coeffs.reaction_at(y, z)?))?;

        let n = params.n_particles;
        let mut base = Xoshiro256PlusPlus::seed_from_u64(params.seed);
        let mut rngs = Vec::with_capacity(n);
        for _ in 0..n {
            rngs.push(base.clone());
            base.jump();
        }
        let sampler = InitialSampler::new(grid, &params.initial)?;
        let mut y = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        let mut clocks = Vec::with_capacity(n);
        let mut rate = Vec::with_capacity(n);
        for rng in rngs.iter_mut() {
            let (py, pz) = sampler.draw(rng);
            y.push(py);
            z.push(pz);
            clocks.push(Clock::new(rng));
            rate.push(death.eval(py, pz));
        }
        Ok(Self {
            y,
            z,
            clocks,
            alive: vec![true; n],
            t: 0.0,
            dt: params.dt,
            seed: params.seed,
            rate,
            rngs,
            slow,
            fast,
            death,
            c_m,
            fleming_viot: params.fleming_viot,
            resampled: 0,
        })
    }

    pub fn survivors(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn c_m(&self) -> f64 {
        self.c_m
    }

    /// Advances every living particle by `steps` time steps.
    pub fn run(&mut self, steps: usize) -> Result<(), QsdError> {
        let dt = self.dt;
        let sqrt_dt = dt.sqrt();
        let mut dead = Vec::new();
        for _ in 0..steps {
            dead.clear();
            let particles = self
                .y
                .iter_mut()
                .zip(self.z.iter_mut())
                .zip(self.rate.iter_mut())
                .zip(self.clocks.iter_mut())
                .zip(self.alive.iter_mut())
                .zip(self.rngs.iter_mut());
            for (p, (((((y, z), rate), clock), alive), rng)) in particles.enumerate() {
                if !*alive {
                    continue;
                }
                let ny: f64 = rng.sample(StandardNormal);
                let nz: f64 = rng.sample(StandardNormal);
                *y = self.slow.step(*y, dt, sqrt_dt, ny);
                *z = self.fast.step(*z, dt, sqrt_dt, nz);
                let d = self.death.eval(*y, *z);
                if clock.advance(*rate, d, dt).is_some() {
                    *alive = false;
                    dead.push(p);
                }
                *rate = d;
            }
            self.t += dt;
            if self.fleming_viot && !dead.is_empty() {
                self.relocate(&dead)?;
            }
        }
        if self.survivors() == 0 {
            return Err(QsdError::AllDead {
                t: self.t,
                expected: (-self.c_m * self.t).exp(),
            });
        }
        Ok(())
    }

    /// Moves each particle in `dead` onto a survivor of the current step, drawn
    /// uniformly (by rejection) with the dead particle's own stream.
    fn relocate(&mut self, dead: &[usize]) -> Result<(), QsdError> {
        let n = self.y.len();
        if dead.len() == n {
            return Err(QsdError::AllDead {
                t: self.t,
                expected: (-self.c_m * self.t).exp(),
            });
        }
        for &p in dead {
            let rng = &mut self.rngs[p];
            let host = loop {
                let q = rng.random_range(0..n);
                if self.alive[q] {
                    break q;
                }
            };
            self.clocks[p] = Clock::new(rng);
            self.y[p] = self.y[host];
            self.z[p] = self.z[host];
            self.rate[p] = self.rate[host];
        }
        for &p in dead {
            self.alive[p] = true;
        }
        self.resampled += dead.len() as u64;
        Ok(())
    }

    /// Survivor histogram on the grid cells.
    pub fn estimate(&self, grid: &Grid2D, reference: Option<&[f64]>) -> Result<QsdEstimate, QsdError> {
        let mut counts = vec![0u64; grid.len()];
        let mut survivors = 0usize;
        for p in 0..self.y.len() {
            if self.alive[p] {
                counts[grid.idx(grid.gy.cell_of(self.y[p]), grid.gz.cell_of(self.z[p]))] += 1;
                survivors += 1;
            }
        }
        let histogram: Vec<f64> = counts
            .iter()
            .map(|&c| {
                if survivors > 0 {
                    c as f64 / survivors as f64
                } else {
                    0.0
                }
            })
            .collect();
        let tv_vs_phi = match reference {
            Some(phi) => Some(tv_against_density(&histogram, phi, grid)?),
            None => None,
        };
        Ok(QsdEstimate {
            t: self.t,
            survivors,
            histogram,
            tv_vs_phi,
            resampled: self.resampled,
        })
    }
}

fn map(t: &Table, f: impl Fn(f64) -> f64) -> Table {
    Table {
        periodic: t.periodic,
        scale: t.scale,
        values: t.values.iter().map(|&v| f(v)).collect(),
    }
}

fn combine(s: &Table, t: &Table, f: impl Fn(f64, f64) -> f64) -> Table {
    Table {
        periodic: s.periodic,
        scale: s.scale,
        values: s.values.iter().zip(&t.values).map(|(&a, &b)| f(a, b)).collect(),
    }
}

/// Total variation between a cell histogram and the probability vector `w_p phi_p`.
pub fn tv_against_density(histogram: &[f64], phi: &[f64], grid: &Grid2D) -> Result<f64, QsdError> {
    if phi.len() != grid.len() || histogram.len() != grid.len() {
        return Err(QsdError::ReferenceLength {
            expected: grid.len(),
            got: phi.len(),
        });
    }
    let w = grid.weights();
    let mass: f64 = phi.iter().zip(&w).map(|(p, w)| p * w).sum();
    let reference: Vec<f64> = phi.iter().zip(&w).map(|(p, w)| p * w / mass).collect();
    Ok(total_variation(histogram, &reference, &vec![1.0; grid.len()]))
}

struct InitialSampler {
    /// Cumulative cell probabilities (flat grid order); `None` for the uniform law.
    cumulative: Option<Vec<f64>>,
    gy: (DomainKind, f64, Vec<f64>),
    gz: (DomainKind, f64, Vec<f64>),
    nz: usize,
}

impl InitialSampler {
    fn new(grid: &Grid2D, initial: &Initial) -> Result<Self, QsdError> {
        let cumulative = match initial {
            Initial::Uniform => None,
            Initial::Cell(i, j) => {
                if *i >= grid.gy.n || *j >= grid.gz.n {
                    return Err(QsdError::InitialCell(*i, *j));
                }
                let mut c = vec![0.0; grid.len()];
                for v in c.iter_mut().skip(grid.idx(*i, *j)) {
                    *v = 1.0;
                }
                Some(c)
            }
            Initial::Density(f) => {
                if f.len() != grid.len() || f.iter().any(|&v| !(v >= 0.0)) {
                    return Err(QsdError::InitialDensity);
                }
                let w = grid.weights();
                let mut acc = 0.0;
                let mut c: Vec<f64> = f
                    .iter()
                    .zip(&w)
                    .map(|(f, w)| {
                        acc += f * w;
                        acc
                    })
                    .collect();
                if !(acc > 0.0) {
                    return Err(QsdError::InitialDensity);
                }
                for v in c.iter_mut() {
                    *v /= acc;
                }
                Some(c)
            }
        };
        Ok(Self {
            cumulative,
            gy: (grid.gy.domain.kind, grid.gy.h, grid.gy.nodes.clone()),
            gz: (grid.gz.domain.kind, grid.gz.h, grid.gz.nodes.clone()),
            nz: grid.gz.n,
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        match &self.cumulative {
            None => (rng.random::<f64>(), rng.random::<f64>()),
            Some(c) => {
                let u: f64 = rng.random();
                let k = c.partition_point(|&v| v <= u).min(c.len() - 1);
                let (i, j) = (k / self.nz, k % self.nz);
                (within_cell(&self.gy, i, rng), within_cell(&self.gz, j, rng))
            }
        }
    }
}

/// Uniform point of the cell `[x_i - h/2, x_i + h/2]`, wrapped or cut at the ends.
fn within_cell<R: Rng>((kind, h, nodes): &(DomainKind, f64, Vec<f64>), i: usize, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    match kind {
        DomainKind::Torus => (nodes[i] + (u - 0.5) * h).rem_euclid(1.0),
        DomainKind::Interval => {
            let lo = (nodes[i] - 0.5 * h).max(0.0);
            let hi = (nodes[i] + 0.5 * h).min(1.0);
            lo + u * (hi - lo)
        }
    }
}

/// Runs a single ensemble to `t_final` and returns the survivor histogram.
pub fn simulate(
    coeffs: &CoefficientSet,
    grid: &Grid2D,
    params: &QsdParams,
    t_final: f64,
    reference: Option<&[f64]>,
) -> Result<QsdEstimate, QsdError> {
    let mut out = qsd_sweep(coeffs, grid, params, &[t_final], reference)?;
    Ok(out.remove(0))
}

/// Histograms at each checkpoint of one trajectory ensemble.
pub fn qsd_sweep(
    coeffs: &CoefficientSet,
    grid: &Grid2D,
    params: &QsdParams,
    checkpoints: &[f64],
    reference: Option<&[f64]>,
) -> Result<Vec<QsdEstimate>, QsdError> {
    if checkpoints.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || checkpoints.windows(2).any(|w| w[1] < w[0]) {
        return Err(QsdError::Checkpoints);
    }
    let mut ens = ParticleEnsemble::new(coeffs, grid, params)?;
    let mut done = 0usize;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        let target = (t / params.dt).round() as usize;
        ens.run(target - done)?;
        done = target;
        let mut est = ens.estimate(grid, reference)?;
        est.t = t;
        out.push(est);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain1D;

    fn params(eps: f64, n: usize, dt: f64, initial: Initial) -> QsdParams {
        QsdParams {
            eps,
            n_particles: n,
            dt,
            seed: 7,
            fleming_viot: false,
            initial,
        }
    }

    fn coeffs(a_big: &str, b_big: &str, a: &str, b: &str, c: &str) -> CoefficientSet {
        CoefficientSet::parse(a_big, b_big, a, b, c).unwrap()
    }

    #[test]
    fn constant_rate_survival() {
        let grid = Grid2D::build(Domain1D::TORUS, 8, Domain1D::TORUS, 8).unwrap();
        let cs = coeffs("1", "0", "1", "0", "0.5");
        // c_m = 1.5, d = 1
        let n = 20_000;
        let dt = dt_guard(&cs, &grid, 0.3).unwrap();
        let est = simulate(&cs, &grid, &params(0.3, n, dt, Initial::Uniform), 1.0, None).unwrap();
        let p = (-1.0f64).exp();
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        let frac = est.survivors as f64 / n as f64;
        assert!((frac - p).abs() <= 3.0 * sd, "{frac} vs {p}");
    }

    #[test]
    fn uniform_qsd_for_constant_coefficients() {
        let grid = Grid2D::build(Domain1D::TORUS, 8, Domain1D::TORUS, 8).unwrap();
        let cs = coeffs("1", "0", "1", "0", "0");
        let n = 20_000;
        let dt = dt_guard(&cs, &grid, 0.5).unwrap();
        let est = simulate(
            &cs,
            &grid,
            &params(0.5, n, dt, Initial::Cell(2, 3)),
            1.0,
            Some(&vec![1.0; 64]),
        )
        .unwrap();
        let tv = est.tv_vs_phi.unwrap();
        assert!(tv <= est.noise_floor(), "{tv}");
        assert!((est.histogram.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_zero_is_the_initial_law() {
        let grid = Grid2D::build(Domain1D::INTERVAL, 5, Domain1D::TORUS, 4).unwrap();
        let cs = coeffs("1", "0", "1", "0", "y");
        let dt = dt_guard(&cs, &grid, 0.5).unwrap();
        let out = qsd_sweep(&cs, &grid, &params(0.5, 40_000, dt, Initial::Uniform), &[0.0], None).unwrap();
        let w = grid.weights();
        let tv: f64 = 0.5 * out[0].histogram.iter().zip(&w).map(|(h, w)| (h - w).abs()).sum::<f64>();
        assert!(tv <= out[0].noise_floor() / 3.0, "{tv}");
        let cell = qsd_sweep(&cs, &grid, &params(0.5, 1000, dt, Initial::Cell(4, 1)), &[0.0], None).unwrap();
        assert_eq!(cell[0].histogram[grid.idx(4, 1)], 1.0);
    }

    #[test]
    fn positions_stay_in_the_domain_and_survivors_shrink() {
        let grid = Grid2D::build(Domain1D::INTERVAL, 9, Domain1D::TORUS, 9).unwrap();
        let cs = coeffs("1 + 0.5*y", "y*(1-y)", "1", "0.3", "cos(pi*y)*cos(2*pi*z)");
        let dt = dt_guard(&cs, &grid, 0.8).unwrap();
        let mut ens = ParticleEnsemble::new(&cs, &grid, &params(0.8, 2000, dt, Initial::Uniform)).unwrap();
        let mut last = ens.survivors();
        for _ in 0..20 {
            ens.run(10).unwrap();
            assert!(ens.y.iter().all(|y| (0.0..=1.0).contains(y)));
            assert!(ens.z.iter().all(|z| (0.0..1.0).contains(z)));
            let s = ens.survivors();
            assert!(s <= last);
            last = s;
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let grid = Grid2D::build(Domain1D::TORUS, 8, Domain1D::TORUS, 8).unwrap();
        let cs = coeffs("1", "0.2", "1", "0", "cos(2*pi*y)*cos(2*pi*z)");
        let dt = dt_guard(&cs, &grid, 0.2).unwrap();
        let mut p = params(0.2, 500, dt, Initial::Uniform);
        p.fleming_viot = true;
        let a = qsd_sweep(&cs, &grid, &p, &[0.5, 1.0], None).unwrap();
        let b = qsd_sweep(&cs, &grid, &p, &[0.5, 1.0], None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1].survivors, 500);
        assert!(a[1].resampled > 0);
        p.seed = 8;
        assert_ne!(qsd_sweep(&cs, &grid, &p, &[0.5, 1.0], None).unwrap(), a);
    }

    #[test]
    fn rejects_bad_inputs() {
        let grid = Grid2D::build(Domain1D::TORUS, 8, Domain1D::TORUS, 8).unwrap();
        let cs = coeffs("1", "0", "1", "0", "0");
        let guard = dt_guard(&cs, &grid, 0.2).unwrap();
        assert!((guard - 1.0 / 128.0).abs() < 1e-15);
        assert!(matches!(
            simulate(&cs, &grid, &params(0.2, 500, 2.0 * guard, Initial::Uniform), 1.0, None),
            Err(QsdError::InvalidDt { .. })
        ));
        assert_eq!(
            simulate(&cs, &grid, &params(0.2, 50, guard, Initial::Uniform), 1.0, None),
            Err(QsdError::TooFewParticles(50))
        );
        assert_eq!(
            qsd_sweep(
                &cs,
                &grid,
                &params(0.2, 500, guard, Initial::Uniform),
                &[1.0, 0.5],
                None
            ),
            Err(QsdError::Checkpoints)
        );
        let heavy = coeffs("1", "0", "1", "0", "-30");
        assert!(matches!(
            simulate(&heavy, &grid, &params(0.2, 100, guard, Initial::Uniform), 2.0, None),
            Err(QsdError::AllDead { .. })
        ));
    }

    #[test]
    fn clock_interpolates_the_crossing() {
        let mut c = Clock {
            threshold: 1.0,
            hazard: 0.75,
        };
        assert_eq!(c.advance(1.0, 1.0, 0.125), None);
        let f = c.advance(2.0, 2.0, 0.25).unwrap();
        assert!((f - 0.25).abs() < 1e-15);
    }

    #[test]
    fn tables_interpolate() {
        let t = Table::new(true, |x| Ok((2.0 * std::f64::consts::PI * x).sin())).unwrap();
        let d = t.derivative();
        for x in [0.0, 0.1, 0.5, 0.93] {
            assert!((t.eval(x) - (2.0 * std::f64::consts::PI * x).sin()).abs() < 1e-4);
            assert!((d.eval(x) - 2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * x).cos()).abs() < 1e-3);
        }
        let q = Table2D::new(16, |y, z| Ok(y + 2.0 * z)).unwrap();
        assert!((q.eval(0.33, 0.71) - 1.75).abs() < 1e-14);
    }
}
