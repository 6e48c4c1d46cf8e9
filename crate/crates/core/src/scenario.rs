//! Scenario files, experiment drivers and report emission.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! [domain]
//! y = "torus"            # or "interval"
//! z = "torus"
//! ny = 64
//! nz = 64
//!
//! [coefficients]
//! A = "1"
//! B = "0"
//! a = "1"
//! b = "0"
//! c = "cos(2*pi*y)*(1 + 0.5*cos(2*pi*z))"
//!
//! [sweep]                # optional
//! eps_list = [0.4, 0.2, 0.1, 0.05]
//! tol = 1e-10
//! max_iter = 200000
//! limit_tol = 2e-2
//!
//! [qsd]                  # optional, needed by the Monte Carlo driver
//! eps = 0.2
//! n_particles = 200000
//! t_checkpoints = [2.0, 4.0, 8.0]
//! seed = 1
//! fleming_viot = true
//! initial = "uniform"    # "phi" or "cell:I,J"
//!
//! [output]               # optional
//! dir = "out"
//! ```
//!
//! All floats written to CSV files and reports carry 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use crate::eig::{principal_eigenpair_with, EigError, SolverOptions};
use crate::grid::{Domain1D, DomainKind, GridError};
use crate::hj::{build_ubar, build_v, hj_residual, HjError, HjKind, HjResidual, HjSolution, Sign};
use crate::operator::{assemble_global, CoefficientSet, OperatorError};
use crate::qsd::{dt_guard, qsd_sweep, Initial, QsdError, QsdEstimate, QsdParams, MIN_PARTICLES};
use crate::quad::{richardson, Extrapolation};
use crate::spectrum::{
    local_spectrum_with, predict_limit, slice_tv_diagnostic, LimitPrediction, LocalSpectrum, Regime, SpectrumError,
};
use crate::{EigenPair, Grid2D};

pub const SWEEP_HEADER: &str = "eps,k_eps,sup_tv,iters,residual";
pub const QSD_HEADER: &str = "t,survivors,tv_vs_phi";
pub const EIG_HEADER: &str = "eps,k_eps,iters,residual";
pub const LOCAL_HEADER: &str = "y,k_y";
pub const HJ_HEADER: &str = "y,u,residual";
pub const HISTOGRAM_HEADER: &str = "cell,mass";

pub const DEFAULT_EPS_LIST: [f64; 4] = [0.4, 0.2, 0.1, 0.05];
/// Tolerance on `|k_extrap - k0|` when the scenario does not set one.
pub const LIMIT_TOL_SLOW: f64 = 2e-2;
pub const LIMIT_TOL_SUPERCRITICAL: f64 = 5e-2;
pub const BOUND_SLACK: f64 = 1e-9;
pub const HJ_TOL: f64 = 1e-6;
/// Values below this count as exact zeros in the monotonicity gates.
pub const MONOTONE_FLOOR: f64 = 1e-9;
pub const TV_FLOOR: f64 = 1e-10;

/// Float formatting used in every output file.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{}{key}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        line: Option<usize>,
        key: String,
        message: String,
    },
    #[error("the scenario has no [{0}] section")]
    MissingSection(&'static str),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("eps = {eps}: {source}")]
    Eig {
        eps: f64,
        #[source]
        source: EigError,
    },
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Hj(#[from] HjError),
    #[error(transparent)]
    Qsd(#[from] QsdError),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl ScenarioError {
    /// 2 for configuration and output problems, 3 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            ScenarioError::Config(_) | ScenarioError::Io { .. } => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    domain: Option<RawDomain>,
    coefficients: Option<RawCoefficients>,
    sweep: Option<RawSweep>,
    qsd: Option<RawQsd>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    y: DomainKind,
    z: DomainKind,
    ny: Spanned<usize>,
    nz: Spanned<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficients {
    #[serde(rename = "A")]
    slow_diffusion: Spanned<String>,
    #[serde(rename = "B")]
    slow_transport: Spanned<String>,
    a: Spanned<String>,
    b: Spanned<String>,
    c: Spanned<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum EpsList {
    List(Vec<f64>),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    eps_list: Option<Spanned<EpsList>>,
    tol: Option<Spanned<f64>>,
    max_iter: Option<Spanned<usize>>,
    limit_tol: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQsd {
    eps: Spanned<f64>,
    n_particles: Spanned<usize>,
    dt: Option<Spanned<f64>>,
    t_checkpoints: Spanned<Vec<f64>>,
    seed: Option<u64>,
    fleming_viot: Option<bool>,
    initial: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
}

/// The five coefficient strings as written in the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSources {
    pub slow_diffusion: String,
    pub slow_transport: String,
    pub fast_diffusion: String,
    pub fast_transport: String,
    pub reaction: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Uniform,
    /// Sample from the principal eigenvector at the Monte Carlo `eps`.
    Phi,
    Cell(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QsdConfig {
    pub eps: f64,
    pub n_particles: usize,
    /// Given step, or the stability guard when the scenario leaves it out.
    pub dt: f64,
    pub t_checkpoints: Vec<f64>,
    pub seed: u64,
    pub fleming_viot: bool,
    pub initial: InitialSpec,
}

/// A fully validated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub grid: Grid2D,
    pub sources: CoefficientSources,
    pub coeffs: CoefficientSet,
    pub eps_list: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub limit_tol: Option<f64>,
    pub qsd: Option<QsdConfig>,
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions::with_tol(self.tol, self.max_iter)
    }

    pub fn y_domain(&self) -> DomainKind {
        self.grid.gy.domain.kind
    }
}

fn line_of(text: &str, span: Range<usize>) -> usize {
    text[..span.start.min(text.len())].matches('\n').count() + 1
}

struct Locator<'a>(&'a str);

impl Locator<'_> {
    fn invalid<T>(&self, span: Option<Range<usize>>, key: &str, message: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError::Invalid {
            line: span.map(|s| line_of(self.0, s)),
            key: key.to_string(),
            message: message.into(),
        })
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.span().map(|s| line_of(text, s)).unwrap_or(1),
        message: e.message().to_string(),
    })?;
    let at = Locator(text);
    let domain = raw.domain.ok_or(ConfigError::MissingSection("domain"))?;
    let cs = raw.coefficients.ok_or(ConfigError::MissingSection("coefficients"))?;

    let axis = |kind: DomainKind, n: &Spanned<usize>, key: &str| {
        crate::Grid1D::new(Domain1D { kind }, *n.get_ref())
            .or_else(|e: GridError| at.invalid(Some(n.span()), key, e.to_string()))
    };
    let gy = axis(domain.y, &domain.ny, "domain.ny")?;
    let gz = axis(domain.z, &domain.nz, "domain.nz")?;
    let grid = Grid2D::new(gy, gz).or_else(|e| at.invalid(None, "domain", e.to_string()))?;

    let fields = [
        ("A", &cs.slow_diffusion),
        ("B", &cs.slow_transport),
        ("a", &cs.a),
        ("b", &cs.b),
        ("c", &cs.c),
    ];
    let span_of = |name: &str| fields.iter().find(|(n, _)| *n == name).map(|(_, s)| s.span());
    let coeff_error = |e: OperatorError| -> ConfigError {
        let name = match &e {
            OperatorError::Parse { name, .. }
            | OperatorError::Eval { name, .. }
            | OperatorError::WrongVariable { name, .. }
            | OperatorError::Ellipticity { name, .. }
            | OperatorError::BoundaryFlux { name, .. }
            | OperatorError::NotPeriodic { name, .. } => Some(*name),
            _ => None,
        };
        ConfigError::Invalid {
            line: name.and_then(span_of).map(|s| line_of(text, s)),
            key: format!("coefficients.{}", name.unwrap_or("?")),
            message: e.to_string(),
        }
    };
    let coeffs = CoefficientSet::parse(
        cs.slow_diffusion.get_ref(),
        cs.slow_transport.get_ref(),
        cs.a.get_ref(),
        cs.b.get_ref(),
        cs.c.get_ref(),
    )
    .map_err(coeff_error)?;
    coeffs.validate(&grid).map_err(coeff_error)?;
    let sources = CoefficientSources {
        slow_diffusion: cs.slow_diffusion.into_inner(),
        slow_transport: cs.slow_transport.into_inner(),
        fast_diffusion: cs.a.into_inner(),
        fast_transport: cs.b.into_inner(),
        reaction: cs.c.into_inner(),
    };

    let defaults = SolverOptions::default();
    let (mut eps_list, mut tol, mut max_iter, mut limit_tol) =
        (DEFAULT_EPS_LIST.to_vec(), defaults.tol, defaults.max_iter, None);
    if let Some(sweep) = raw.sweep {
        if let Some(list) = sweep.eps_list {
            let span = list.span();
            eps_list = match list.into_inner() {
                EpsList::List(v) => v,
                EpsList::Text(s) => s
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .or_else(|e| at.invalid(Some(span.clone()), "sweep.eps_list", e.to_string()))?,
            };
            if eps_list.is_empty() {
                return at.invalid(Some(span), "sweep.eps_list", "must not be empty");
            }
            if eps_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                return at.invalid(Some(span), "sweep.eps_list", "all values must be positive");
            }
            if eps_list.windows(2).any(|w| w[1] >= w[0]) {
                return at.invalid(Some(span), "sweep.eps_list", "must be strictly decreasing");
            }
        }
        if let Some(t) = sweep.tol {
            if !(*t.get_ref() > 0.0) {
                return at.invalid(Some(t.span()), "sweep.tol", "must be positive");
            }
            tol = *t.get_ref();
        }
        if let Some(m) = sweep.max_iter {
            if *m.get_ref() == 0 {
                return at.invalid(Some(m.span()), "sweep.max_iter", "must be positive");
            }
            max_iter = *m.get_ref();
        }
        if let Some(t) = sweep.limit_tol {
            if !(*t.get_ref() > 0.0) {
                return at.invalid(Some(t.span()), "sweep.limit_tol", "must be positive");
            }
            limit_tol = Some(*t.get_ref());
        }
    }

    let qsd = match raw.qsd {
        None => None,
        Some(q) => {
            let eps = *q.eps.get_ref();
            if !(eps.is_finite() && eps > 0.0) {
                return at.invalid(Some(q.eps.span()), "qsd.eps", "must be positive");
            }
            if *q.n_particles.get_ref() < MIN_PARTICLES {
                return at.invalid(
                    Some(q.n_particles.span()),
                    "qsd.n_particles",
                    format!("at least {MIN_PARTICLES} particles are required"),
                );
            }
            let guard = dt_guard(&coeffs, &grid, eps).map_err(|e| ConfigError::Invalid {
                line: None,
                key: "qsd".into(),
                message: e.to_string(),
            })?;
            let dt = match q.dt {
                None => guard,
                Some(dt) => {
                    let v = *dt.get_ref();
                    if !(v > 0.0 && v <= guard) {
                        return at.invalid(
                            Some(dt.span()),
                            "qsd.dt",
                            format!("must lie in (0, {}] (stability guard)", fmt17(guard)),
                        );
                    }
                    v
                }
            };
            let checkpoints = q.t_checkpoints.get_ref();
            if checkpoints.is_empty()
                || checkpoints.iter().any(|t| !(t.is_finite() && *t >= 0.0))
                || checkpoints.windows(2).any(|w| w[1] < w[0])
            {
                return at.invalid(
                    Some(q.t_checkpoints.span()),
                    "qsd.t_checkpoints",
                    "must be a nonempty nondecreasing list of nonnegative times",
                );
            }
            let initial = match q.initial {
                None => InitialSpec::Uniform,
                Some(s) => {
                    parse_initial(s.get_ref(), &grid).or_else(|m| at.invalid(Some(s.span()), "qsd.initial", m))?
                }
            };
            Some(QsdConfig {
                eps,
                n_particles: *q.n_particles.get_ref(),
                dt,
                t_checkpoints: q.t_checkpoints.into_inner(),
                seed: q.seed.unwrap_or(0),
                fleming_viot: q.fleming_viot.unwrap_or(false),
                initial,
            })
        }
    };

    Ok(ScenarioConfig {
        grid,
        sources,
        coeffs,
        eps_list,
        tol,
        max_iter,
        limit_tol,
        qsd,
        output_dir: raw.output.and_then(|o| o.dir).map(PathBuf::from),
    })
}

fn parse_initial(s: &str, grid: &Grid2D) -> Result<InitialSpec, String> {
    match s.trim() {
        "uniform" => Ok(InitialSpec::Uniform),
        "phi" => Ok(InitialSpec::Phi),
        other => {
            let cell = other
                .strip_prefix("cell:")
                .ok_or_else(|| format!("expected \"uniform\", \"phi\" or \"cell:I,J\", got {other:?}"))?;
            let parts: Vec<&str> = cell.split(',').map(str::trim).collect();
            let parsed: Result<Vec<usize>, _> = parts.iter().map(|p| p.parse::<usize>()).collect();
            match parsed.as_deref() {
                Ok([i, j]) if *i < grid.gy.n && *j < grid.gz.n => Ok(InitialSpec::Cell(*i, *j)),
                Ok([_, _]) => Err(format!("cell {cell} lies outside the grid")),
                _ => Err(format!("cannot read cell indices from {cell:?}")),
            }
        }
    }
}

/// Pass/fail outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Gate {
    fn new(name: &'static str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name,
            pass,
            detail: detail.into(),
        }
    }
}

pub fn all_pass(gates: &[Gate]) -> bool {
    gates.iter().all(|g| g.pass)
}

/// Summary body followed by one line per gate and the overall verdict.
pub fn render_report(body: &str, gates: &[Gate]) -> String {
    let mut out = String::from(body);
    out.push_str("[gates]\n");
    for g in gates {
        let _ = writeln!(
            out,
            "gate {} = {} ({})",
            g.name,
            if g.pass { "pass" } else { "fail" },
            g.detail
        );
    }
    let _ = writeln!(out, "result = {}", if all_pass(gates) { "pass" } else { "fail" });
    out
}

pub fn solve_global(cfg: &ScenarioConfig, eps: f64) -> Result<EigenPair, ScenarioError> {
    let op = assemble_global(&cfg.grid, &cfg.coeffs, eps)?;
    principal_eigenpair_with(&op, &cfg.solver_options()).map_err(|source| ScenarioError::Eig { eps, source })
}

pub fn run_local_spectrum(cfg: &ScenarioConfig) -> Result<LocalSpectrum, ScenarioError> {
    Ok(local_spectrum_with(&cfg.grid, &cfg.coeffs, &cfg.solver_options())?)
}

/// Global eigenpairs along the `eps` list.
#[derive(Debug, Clone)]
pub struct EigReport {
    pub rows: Vec<(f64, EigenPair)>,
    pub reaction_sup: f64,
    pub gates: Vec<Gate>,
}

impl EigReport {
    pub fn csv(&self) -> String {
        let mut s = format!("{EIG_HEADER}\n");
        for (eps, p) in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                fmt17(*eps),
                fmt17(p.k),
                p.iterations,
                fmt17(p.residual)
            );
        }
        s
    }
}

pub fn run_eig(cfg: &ScenarioConfig) -> Result<EigReport, ScenarioError> {
    let rows = cfg
        .eps_list
        .par_iter()
        .map(|&eps| solve_global(cfg, eps).map(|p| (eps, p)))
        .collect::<Result<Vec<_>, _>>()?;
    let reaction_sup = cfg.coeffs.reaction_sup(&cfg.grid)?;
    let ks: Vec<f64> = rows.iter().map(|(_, p)| p.k).collect();
    let gates = vec![bound_gate(&ks, reaction_sup)];
    Ok(EigReport {
        rows,
        reaction_sup,
        gates,
    })
}

fn bound_gate(ks: &[f64], reaction_sup: f64) -> Gate {
    let worst = ks.iter().fold(0.0f64, |m, k| m.max(k.abs()));
    Gate::new(
        "eigenvalue_bound",
        worst <= reaction_sup + BOUND_SLACK,
        format!("max |k_eps| = {} vs max |c| = {}", fmt17(worst), fmt17(reaction_sup)),
    )
}

pub fn local_spectrum_csv(spec: &LocalSpectrum) -> String {
    let mut s = format!("{LOCAL_HEADER}\n");
    for (y, k) in spec.y_nodes.iter().zip(&spec.k) {
        let _ = writeln!(s, "{},{}", fmt17(*y), fmt17(*k));
    }
    s
}

/// Local spectrum and, when a formula applies, the predicted limit.
#[derive(Debug, Clone)]
pub struct LimitReport {
    pub local: LocalSpectrum,
    /// `None` when the slow domain is an interval and `B` does not vanish.
    pub prediction: Option<LimitPrediction>,
}

impl LimitReport {
    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "k_max_local = {}", fmt17(self.local.k_max()));
        match &self.prediction {
            Some(p) => {
                let _ = writeln!(s, "regime = {}", p.regime);
                let _ = writeln!(s, "M = {}", fmt17(p.m));
                let _ = writeln!(s, "y_star = {}", fmt17(p.y_star));
                let _ = writeln!(s, "gamma = {}", fmt17(p.gamma));
                let _ = writeln!(s, "j_M = {}", fmt17(p.j_m));
                let _ = writeln!(s, "k0 = {}", fmt17(p.k0));
            }
            None => {
                let _ = writeln!(s, "regime = none ({})", SpectrumError::NotTorus);
            }
        }
        s
    }
}

pub fn run_limit(cfg: &ScenarioConfig) -> Result<LimitReport, ScenarioError> {
    let local = run_local_spectrum(cfg)?;
    let prediction = match predict_limit(&local, &cfg.coeffs) {
        Ok(p) => Some(p),
        Err(SpectrumError::NotTorus) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(LimitReport { local, prediction })
}

/// Explicit Hamilton-Jacobi solution checked against the predicted limit.
#[derive(Debug, Clone)]
pub struct HjReport {
    pub solution: HjSolution,
    pub residual: HjResidual,
    pub gates: Vec<Gate>,
}

impl HjReport {
    pub fn csv(&self) -> String {
        let mut s = format!("{HJ_HEADER}\n");
        for ((y, u), r) in self
            .solution
            .y_nodes
            .iter()
            .zip(&self.solution.u)
            .zip(&self.residual.per_point)
        {
            let _ = writeln!(s, "{},{},{}", fmt17(*y), fmt17(*u), fmt17(*r));
        }
        s
    }

    pub fn file_name(&self) -> &'static str {
        match self.solution.kind {
            HjKind::Ubar => "hj_ubar.csv",
            HjKind::V => "hj_v.csv",
        }
    }
}

/// `ubar` at `k0` in the supercritical regime, `v` otherwise.
pub fn hj_for(
    local: &LocalSpectrum,
    coeffs: &CoefficientSet,
    prediction: &LimitPrediction,
) -> Result<HjReport, ScenarioError> {
    let sign = Sign::of(prediction.gamma);
    let solution = match prediction.regime {
        Regime::TransportSupercritical => build_ubar(local, coeffs, prediction.k0, sign)?,
        _ => build_v(local, coeffs, sign)?,
    };
    let residual = hj_residual(&solution, local, coeffs, solution.k_used)?;
    let defect = solution.periodicity_defect();
    let gates = vec![
        Gate::new(
            "hj_periodicity",
            defect <= HJ_TOL,
            format!("defect = {}", fmt17(defect)),
        ),
        Gate::new(
            "hj_residual",
            residual.sup <= HJ_TOL,
            format!("max residual away from kinks = {}", fmt17(residual.sup)),
        ),
    ];
    Ok(HjReport {
        solution,
        residual,
        gates,
    })
}

pub fn run_hj(cfg: &ScenarioConfig) -> Result<(LimitReport, HjReport), ScenarioError> {
    if cfg.y_domain() != DomainKind::Torus {
        return Err(HjError::NotTorus.into());
    }
    let limit = run_limit(cfg)?;
    let prediction = limit.prediction.expect("a torus slow domain always has a prediction");
    let hj = hj_for(&limit.local, &cfg.coeffs, &prediction)?;
    Ok((limit, hj))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub k_eps: f64,
    pub sup_tv: f64,
    pub iters: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub limit: LimitReport,
    /// From the last three rows, when there are at least three.
    pub extrapolation: Option<Extrapolation>,
    pub hj: Option<HjReport>,
    pub reaction_sup: f64,
    pub gates: Vec<Gate>,
}

impl SweepReport {
    pub fn csv(&self) -> String {
        let mut s = format!("{SWEEP_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                fmt17(r.eps),
                fmt17(r.k_eps),
                fmt17(r.sup_tv),
                r.iters,
                fmt17(r.residual)
            );
        }
        s
    }

    pub fn passed(&self) -> bool {
        all_pass(&self.gates)
    }

    /// Summary without the gate block.
    pub fn summary(&self) -> String {
        let mut s = String::from("[sweep]\n");
        let _ = writeln!(s, "max_abs_c = {}", fmt17(self.reaction_sup));
        s.push_str(&self.limit.text());
        if let Some(ex) = &self.extrapolation {
            let _ = writeln!(s, "k_extrap = {}", fmt17(ex.limit));
            let _ = writeln!(s, "extrap_order = {}", fmt17(ex.order));
        }
        if let Some(hj) = &self.hj {
            let kind = match hj.solution.kind {
                HjKind::Ubar => "ubar",
                HjKind::V => "v",
            };
            let _ = writeln!(s, "hj_solution = {kind}");
            let _ = writeln!(s, "hj_k = {}", fmt17(hj.solution.k_used));
            let _ = writeln!(s, "hj_shift = {}", fmt17(hj.solution.shift));
        }
        s
    }
}

fn decreasing(values: &[f64], floor: f64) -> bool {
    values.windows(2).all(|w| w[1] < w[0] || w[1] <= floor)
}

pub fn run_sweep(cfg: &ScenarioConfig) -> Result<SweepReport, ScenarioError> {
    let limit = run_limit(cfg)?;
    let rows = cfg
        .eps_list
        .par_iter()
        .map(|&eps| {
            let pair = solve_global(cfg, eps)?;
            let tv = slice_tv_diagnostic(&pair, &limit.local, &cfg.grid)?;
            Ok(SweepRow {
                eps,
                k_eps: pair.k,
                sup_tv: tv.sup,
                iters: pair.iterations,
                residual: pair.residual,
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    let n = rows.len();
    let extrapolation = (n >= 3).then(|| {
        richardson(
            [rows[n - 3].eps, rows[n - 2].eps, rows[n - 1].eps],
            [rows[n - 3].k_eps, rows[n - 2].k_eps, rows[n - 1].k_eps],
        )
    });
    let reaction_sup = cfg.coeffs.reaction_sup(&cfg.grid)?;
    let ks: Vec<f64> = rows.iter().map(|r| r.k_eps).collect();
    let tvs: Vec<f64> = rows.iter().map(|r| r.sup_tv).collect();
    let worst_residual = rows.iter().fold(0.0f64, |m, r| m.max(r.residual));

    let mut gates = vec![
        bound_gate(&ks, reaction_sup),
        Gate::new(
            "solver_residual",
            worst_residual <= cfg.tol,
            format!("max residual = {}", fmt17(worst_residual)),
        ),
        Gate::new(
            "tv_decreasing",
            decreasing(&tvs, TV_FLOOR),
            format!("sup TV along eps = [{}]", join(&tvs)),
        ),
    ];
    let mut hj = None;
    if let Some(p) = &limit.prediction {
        let errors: Vec<f64> = ks.iter().map(|k| (k - p.k0).abs()).collect();
        gates.push(Gate::new(
            "limit_error_decreasing",
            decreasing(&errors, MONOTONE_FLOOR),
            format!("|k_eps - k0| = [{}]", join(&errors)),
        ));
        if let Some(ex) = &extrapolation {
            let tol = cfg.limit_tol.unwrap_or(match p.regime {
                Regime::TransportSupercritical => LIMIT_TOL_SUPERCRITICAL,
                _ => LIMIT_TOL_SLOW,
            });
            let err = (ex.limit - p.k0).abs();
            gates.push(Gate::new(
                "limit_match",
                err <= tol,
                format!(
                    "|k_extrap - k0| = {} (k_extrap = {}, k0 = {}, tol = {})",
                    fmt17(err),
                    fmt17(ex.limit),
                    fmt17(p.k0),
                    fmt17(tol)
                ),
            ));
        }
        if cfg.y_domain() == DomainKind::Torus {
            let report = hj_for(&limit.local, &cfg.coeffs, p)?;
            gates.extend(report.gates.iter().cloned());
            hj = Some(report);
        }
    }
    Ok(SweepReport {
        rows,
        limit,
        extrapolation,
        hj,
        reaction_sup,
        gates,
    })
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| fmt17(*v)).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone)]
pub struct QsdReport {
    pub eps: f64,
    pub reference: EigenPair,
    pub estimates: Vec<QsdEstimate>,
    pub gates: Vec<Gate>,
}

impl QsdReport {
    pub fn csv(&self) -> String {
        let mut s = format!("{QSD_HEADER}\n");
        for e in &self.estimates {
            let tv = e.tv_vs_phi.map(fmt17).unwrap_or_default();
            let _ = writeln!(s, "{},{},{}", fmt17(e.t), e.survivors, tv);
        }
        s
    }

    /// Final histogram, one line per cell in flat grid order.
    pub fn histogram_csv(&self) -> String {
        let mut s = format!("{HISTOGRAM_HEADER}\n");
        if let Some(last) = self.estimates.last() {
            for (i, m) in last.histogram.iter().enumerate() {
                let _ = writeln!(s, "{i},{}", fmt17(*m));
            }
        }
        s
    }

    /// Summary without the gate block.
    pub fn summary(&self) -> String {
        let mut s = String::from("[qsd]\n");
        let _ = writeln!(s, "eps = {}", fmt17(self.eps));
        let _ = writeln!(s, "k_eps = {}", fmt17(self.reference.k));
        for e in &self.estimates {
            let _ = writeln!(
                s,
                "t = {}: survivors = {}, resampled = {}, noise_floor = {}",
                fmt17(e.t),
                e.survivors,
                e.resampled,
                fmt17(e.noise_floor())
            );
        }
        s
    }
}

pub fn run_qsd(cfg: &ScenarioConfig) -> Result<QsdReport, ScenarioError> {
    let q = cfg.qsd.as_ref().ok_or(ConfigError::MissingSection("qsd"))?;
    let reference = solve_global(cfg, q.eps)?;
    let initial = match q.initial {
        InitialSpec::Uniform => Initial::Uniform,
        InitialSpec::Phi => Initial::Density(reference.phi.clone()),
        InitialSpec::Cell(i, j) => Initial::Cell(i, j),
    };
    let params = QsdParams {
        eps: q.eps,
        n_particles: q.n_particles,
        dt: q.dt,
        seed: q.seed,
        fleming_viot: q.fleming_viot,
        initial,
    };
    let estimates = qsd_sweep(&cfg.coeffs, &cfg.grid, &params, &q.t_checkpoints, Some(&reference.phi))?;
    let tv: Vec<f64> = estimates.iter().map(|e| e.tv_vs_phi.unwrap_or(f64::NAN)).collect();
    let monotone = estimates
        .windows(2)
        .zip(tv.windows(2))
        .all(|(e, t)| t[1] <= t[0] + e[1].noise_floor());
    let last = estimates.last().expect("at least one checkpoint");
    let gates = vec![
        Gate::new(
            "qsd_tv_nonincreasing",
            monotone,
            format!("tv_vs_phi = [{}] (up to 3 sqrt(cells/survivors))", join(&tv)),
        ),
        Gate::new(
            "qsd_final_within_noise",
            tv[tv.len() - 1] <= last.noise_floor(),
            format!(
                "tv_vs_phi = {} vs noise floor {}",
                fmt17(tv[tv.len() - 1]),
                fmt17(last.noise_floor())
            ),
        ),
    ];
    Ok(QsdReport {
        eps: q.eps,
        reference,
        estimates,
        gates,
    })
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, ScenarioError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ScenarioError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))?;
    Ok(path)
}
