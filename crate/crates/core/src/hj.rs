//! Explicit periodic solutions of the cell Hamilton-Jacobi equation
//! `-A u'^2 - B u' - k^y + k = 0` on the slow torus.
//!
//! With `g = k^y - B^2/(4A)`:
//! - `ubar(y) = -int_0^y B/(2A) +- int_0^y sqrt((k - g)/A)` for `k >= M`, periodic
//!   exactly when `k = j^{-1}(|gamma|)`;
//! - `v(y) = -int_0^y B/(2A) + int_0^y S sqrt((M - g)/A)` over two periods, with
//!   `S = +1` on `[0, 1)` and `-1` on `[1, 2)` in coordinates where the maximum of
//!   `g` sits at the origin, so that `v(y) + gamma y` is 2-periodic.
//!
//! Both are sampled on a torus grid four times finer than the local spectrum, with
//! `k^y` interpolated by a periodic cubic spline.

use thiserror::Error;

use crate::operator::{CoefficientSet, OperatorError};
use crate::spectrum::{LocalSpectrum, SlowProfile, SpectrumError};

/// Fine-grid refinement relative to the local-spectrum nodes.
pub const REFINEMENT: usize = 4;
/// Residual samples closer than this many fine steps to a kink are skipped.
pub const KINK_EXCLUSION: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HjError {
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error("k = {k} lies below M = {m}: the square root has a negative argument")]
    BelowMinimum { k: f64, m: f64 },
    #[error("the explicit solutions live on a torus slow domain")]
    NotTorus,
}

impl From<OperatorError> for HjError {
    fn from(e: OperatorError) -> Self {
        HjError::Spectrum(e.into())
    }
}

/// Branch of the square root: `Plus` for `gamma >= 0`, `Minus` for `gamma < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn of(gamma: f64) -> Self {
        if gamma < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HjKind {
    Ubar,
    V,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HjSolution {
    pub kind: HjKind,
    pub sign: Sign,
    /// Sample points in user coordinates, `shift + l h`; not reduced modulo 1.
    pub y_nodes: Vec<f64>,
    pub u: Vec<f64>,
    pub uprime: Vec<f64>,
    /// Points where the derivative formula switches branch.
    pub kink_set: Vec<f64>,
    pub k_used: f64,
    pub gamma: f64,
    /// Translation moving the maximum of `g` to the origin (zero for `ubar`).
    pub shift: f64,
    /// Fine spacing.
    pub h: f64,
    /// Fine nodes per period.
    pub period_nodes: usize,
}

impl HjSolution {
    /// `|u(1) - u(0)|` for `ubar`, `|v(2) + 2 gamma - v(0)|` for `v`.
    pub fn periodicity_defect(&self) -> f64 {
        let last = self.u[self.u.len() - 1];
        match self.kind {
            HjKind::Ubar => (last - self.u[0]).abs(),
            HjKind::V => (last + 2.0 * self.gamma - self.u[0]).abs(),
        }
    }

    /// Value at the sample nearest to `shift + s`.
    pub fn at_offset(&self, s: f64) -> f64 {
        let l = (s / self.h).round().clamp(0.0, (self.u.len() - 1) as f64) as usize;
        self.u[l]
    }
}

struct Samples {
    drift: Vec<f64>,
    root: Vec<f64>,
}

fn sample(profile: &SlowProfile, coeffs: &CoefficientSet, ys: &[f64], k: f64) -> Result<Samples, HjError> {
    let mut drift = Vec::with_capacity(ys.len());
    let mut root = Vec::with_capacity(ys.len());
    for &y in ys {
        let yr = y.rem_euclid(1.0);
        let a = coeffs.slow_diffusion_at(yr)?;
        let b = coeffs.slow_transport_at(yr)?;
        drift.push(-b / (2.0 * a));
        root.push(((k - profile.spline.eval(yr)).max(0.0) / a).sqrt());
    }
    Ok(Samples { drift, root })
}

fn torus_profile(spec: &LocalSpectrum, coeffs: &CoefficientSet) -> Result<SlowProfile, HjError> {
    if !spec.is_torus() {
        return Err(HjError::NotTorus);
    }
    Ok(SlowProfile::new(spec, coeffs)?)
}

/// Running trapezoid integral of `f_l` where cell `l -> l+1` uses `cell(l)` as the
/// branch of the root on both of its ends.
fn integrate(s: &Samples, h: f64, cell: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut u = Vec::with_capacity(s.root.len());
    let mut acc = 0.0;
    u.push(acc);
    for l in 0..s.root.len() - 1 {
        let sg = cell(l);
        let left = s.drift[l] + sg * s.root[l];
        let right = s.drift[l + 1] + sg * s.root[l + 1];
        acc += 0.5 * h * (left + right);
        u.push(acc);
    }
    u
}

pub fn build_ubar(spec: &LocalSpectrum, coeffs: &CoefficientSet, k: f64, sign: Sign) -> Result<HjSolution, HjError> {
    let profile = torus_profile(spec, coeffs)?;
    if k < profile.m - 1e-12 * (1.0 + profile.m.abs()) {
        return Err(HjError::BelowMinimum { k, m: profile.m });
    }
    let nf = REFINEMENT * spec.y_nodes.len();
    let h = 1.0 / nf as f64;
    let ys: Vec<f64> = (0..=nf).map(|l| l as f64 * h).collect();
    let s = sample(&profile, coeffs, &ys, k)?;
    let sg = sign.value();
    let u = integrate(&s, h, |_| sg);
    let uprime = s.drift.iter().zip(&s.root).map(|(d, r)| d + sg * r).collect();
    let kink_set = if k <= profile.m {
        vec![profile.y_star, profile.y_star + 1.0]
    } else {
        Vec::new()
    };
    Ok(HjSolution {
        kind: HjKind::Ubar,
        sign,
        y_nodes: ys,
        u,
        uprime,
        kink_set,
        k_used: k,
        gamma: profile.gamma(),
        shift: 0.0,
        h,
        period_nodes: nf,
    })
}

pub fn build_v(spec: &LocalSpectrum, coeffs: &CoefficientSet, sign: Sign) -> Result<HjSolution, HjError> {
    let profile = torus_profile(spec, coeffs)?;
    let nf = REFINEMENT * spec.y_nodes.len();
    let h = 1.0 / nf as f64;
    let shift = profile.y_star;
    let ys: Vec<f64> = (0..=2 * nf).map(|l| shift + l as f64 * h).collect();
    let s = sample(&profile, coeffs, &ys, profile.m)?;
    let sg = sign.value();
    let branch = |l: usize| if l < nf { sg } else { -sg };
    let u = integrate(&s, h, branch);
    let uprime = (0..ys.len())
        .map(|l| s.drift[l] + branch(l.min(2 * nf - 1)) * s.root[l])
        .collect();
    Ok(HjSolution {
        kind: HjKind::V,
        sign,
        y_nodes: ys,
        u,
        uprime,
        kink_set: vec![shift, shift + 1.0, shift + 2.0],
        k_used: profile.m,
        gamma: profile.gamma(),
        shift,
        h,
        period_nodes: nf,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HjResidual {
    /// `-A u'^2 - B u' - k^y + k` at every sample, `k^y` from a direct local solve.
    pub per_point: Vec<f64>,
    /// Samples within [`KINK_EXCLUSION`] fine steps of a kink.
    pub excluded: Vec<bool>,
    /// Sup over the samples that are not excluded.
    pub sup: f64,
}

pub fn hj_residual(
    sol: &HjSolution,
    spec: &LocalSpectrum,
    coeffs: &CoefficientSet,
    k: f64,
) -> Result<HjResidual, HjError> {
    let mut local: Vec<Option<f64>> = vec![None; sol.period_nodes];
    let radius = KINK_EXCLUSION * sol.h * (1.0 + 1e-9);
    let mut per_point = Vec::with_capacity(sol.y_nodes.len());
    let mut excluded = Vec::with_capacity(sol.y_nodes.len());
    let mut sup = 0.0f64;
    for (l, (&y, &du)) in sol.y_nodes.iter().zip(&sol.uprime).enumerate() {
        let yr = y.rem_euclid(1.0);
        let slot = &mut local[l % sol.period_nodes];
        let ky = match slot {
            Some(v) => *v,
            None => *slot.insert(spec.solve_at(coeffs, yr)?.k),
        };
        let a = coeffs.slow_diffusion_at(yr)?;
        let b = coeffs.slow_transport_at(yr)?;
        let r = -a * du * du - b * du - ky + k;
        let skip = sol.kink_set.iter().any(|&kink| (y - kink).abs() <= radius);
        if !skip {
            sup = sup.max(r.abs());
        }
        per_point.push(r);
        excluded.push(skip);
    }
    Ok(HjResidual {
        per_point,
        excluded,
        sup,
    })
}
