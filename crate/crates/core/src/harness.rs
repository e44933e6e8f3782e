//! Convergence studies: tolerance and grid sweeps, pseudo references,
//! log–log rate fits, CSV and SVG output.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{self, BaselineError};
use crate::catalog::{self, CatalogEntry, CatalogError, CatalogOptions, Reference};
use crate::integrate::{solve_1d, solve_log_nd, solve_nd, SolveError, SolverConfig};
use crate::problem::{Problem, RunResult};
use crate::stepping::StepLaw;

/// A solver choice, independent of the problem's dimensionality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// The problem's own adaptive law.
    Adaptive,
    Taylor2,
    /// Plain uniform steps; on `rd` this is the reconstructed capped law.
    Uniform,
    LogUniform,
    AdaptiveNd,
    AltNd,
    LogNd,
    ArcLength {
        rk_tol: f64,
    },
    Rescaling {
        threshold: f64,
    },
}

pub const DEFAULT_RK_TOL: f64 = 1e-10;
pub const DEFAULT_RESCALING_THRESHOLD: f64 = 4.0;

impl Method {
    pub fn id(&self) -> &'static str {
        match self {
            Method::Adaptive => "adaptive",
            Method::Taylor2 => "taylor2",
            Method::Uniform => "uniform",
            Method::LogUniform => "log-uniform",
            Method::AdaptiveNd => "adaptive-nd",
            Method::AltNd => "alt-nd",
            Method::LogNd => "log-nd",
            Method::ArcLength { .. } => "arclength",
            Method::Rescaling { .. } => "rescaling",
        }
    }

    pub const ALL_IDS: [&'static str; 9] = [
        "adaptive",
        "taylor2",
        "uniform",
        "log-uniform",
        "adaptive-nd",
        "alt-nd",
        "log-nd",
        "arclength",
        "rescaling",
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "adaptive" => Method::Adaptive,
            "taylor2" => Method::Taylor2,
            "uniform" => Method::Uniform,
            "log-uniform" => Method::LogUniform,
            "adaptive-nd" => Method::AdaptiveNd,
            "alt-nd" => Method::AltNd,
            "log-nd" => Method::LogNd,
            "arclength" => Method::ArcLength {
                rk_tol: DEFAULT_RK_TOL,
            },
            "rescaling" => Method::Rescaling {
                threshold: DEFAULT_RESCALING_THRESHOLD,
            },
            other => return Err(HarnessError::UnknownMethod(other.to_string())),
        })
    }
}

/// Failure of a single solve.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("method {method} does not apply to problem {problem}")]
    Unsupported {
        method: &'static str,
        problem: String,
    },
}

impl RunError {
    pub fn variant(&self) -> &'static str {
        match self {
            RunError::Solve(e) => e.variant(),
            RunError::Baseline(e) => e.variant(),
            RunError::Unsupported { .. } => "Unsupported",
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("tolerance grid must be strictly decreasing and positive")]
    GridNotDecreasing,
    #[error("reference run failed: {0}")]
    Reference(RunError),
    #[error("cannot plot an empty table")]
    EmptyTable,
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed CSV field {field}: {value:?}")]
    Parse { field: &'static str, value: String },
}

/// Runs one method on a catalog entry at tolerance `eps`.
pub fn run_method(
    entry: &CatalogEntry,
    method: Method,
    eps: f64,
    seed: u64,
) -> Result<RunResult, RunError> {
    run_method_traced(entry, method, eps, seed, false)
}

/// As [`run_method`]; Euler methods also record `(t, |x̄|)` when `trace` is set.
pub fn run_method_traced(
    entry: &CatalogEntry,
    method: Method,
    eps: f64,
    seed: u64,
    trace: bool,
) -> Result<RunResult, RunError> {
    let unsupported = || RunError::Unsupported {
        method: method.id(),
        problem: entry.id.clone(),
    };
    let cfg = |law| {
        let c = SolverConfig::new(law).with_seed(seed);
        if trace {
            c.with_trace()
        } else {
            c
        }
    };
    match (&entry.problem, method) {
        (Problem::Scalar(p), Method::Adaptive) => Ok(solve_1d(p, eps, &cfg(StepLaw::Adaptive1D))?),
        (Problem::Scalar(p), Method::Taylor2) => {
            Ok(solve_1d(p, eps, &cfg(StepLaw::Taylor1D { m_bar: 2 }))?)
        }
        (Problem::Scalar(p), Method::Uniform) => Ok(solve_1d(p, eps, &cfg(StepLaw::Uniform1D))?),
        (Problem::Vector(p), Method::Adaptive) => match entry.default_laws.first() {
            Some(StepLaw::LogNdImplicitN { .. }) => {
                Ok(solve_log_nd(p, eps, &cfg(StepLaw::AdaptiveND))?)
            }
            Some(&law) => Ok(solve_nd(p, eps, &cfg(law))?),
            None => Err(unsupported()),
        },
        (Problem::Vector(p), Method::Uniform) => {
            let law = if p.uniform_exponent.is_some() {
                StepLaw::UniformND
            } else {
                StepLaw::LogUniformND
            };
            Ok(solve_nd(p, eps, &cfg(law))?)
        }
        (Problem::Vector(p), Method::LogUniform) => {
            Ok(solve_nd(p, eps, &cfg(StepLaw::LogUniformND))?)
        }
        (Problem::Vector(p), Method::AdaptiveNd) => {
            Ok(solve_nd(p, eps, &cfg(StepLaw::AdaptiveND))?)
        }
        (Problem::Vector(p), Method::AltNd) => Ok(solve_nd(p, eps, &cfg(StepLaw::AltND))?),
        (Problem::Vector(p), Method::LogNd) => Ok(solve_log_nd(p, eps, &cfg(StepLaw::AdaptiveND))?),
        (problem, Method::ArcLength { rk_tol }) => {
            Ok(baselines::solve_arclength(problem, eps, rk_tol)?)
        }
        (Problem::Scalar(p), Method::Rescaling { threshold }) => match entry.power_law {
            Some(exponent) => {
                Ok(baselines::solve_rescaling_1d(exponent, p.x0, threshold, eps)?.run)
            }
            None => Err(unsupported()),
        },
        _ => Err(unsupported()),
    }
}

/// Reference blow-up time: the exact value, or the adaptive method's run at
/// the pseudo-reference tolerance (`eps_override` replaces the stored one).
pub fn reference_value(
    entry: &CatalogEntry,
    eps_override: Option<f64>,
    seed: u64,
) -> Result<Option<(Reference, f64)>, RunError> {
    match entry.reference {
        Reference::Unknown => Ok(None),
        Reference::Exact(t) => Ok(Some((entry.reference, t))),
        Reference::Pseudo { eps, published_eps } => {
            let eps = eps_override.unwrap_or(eps);
            let run = run_method(entry, Method::Adaptive, eps, seed)?;
            Ok(Some((
                Reference::Pseudo { eps, published_eps },
                run.tau_hat,
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("rate fit needs at least 3 points, got {0}")]
    InsufficientPoints(usize),
    #[error("rate fit needs positive values, got ({0}, {1})")]
    NonPositive(f64, f64),
}

/// Least squares line through `(log₂ ε, log₂ y)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit, FitError> {
    if points.len() < 3 {
        return Err(FitError::InsufficientPoints(points.len()));
    }
    if let Some(&(e, y)) = points.iter().find(|(e, y)| !(*e > 0.0 && *y > 0.0)) {
        return Err(FitError::NonPositive(e, y));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
    })
}

/// One `(problem, method, ε)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub problem: String,
    pub method: String,
    pub epsilon: f64,
    pub tau_hat: Option<f64>,
    pub steps: Option<u64>,
    pub error: Option<f64>,
    pub reference_kind: String,
    pub reference_value: Option<f64>,
    pub wall_ns: u64,
    /// Grid size for reaction–diffusion studies.
    pub m: Option<usize>,
    /// `log₂|τ̄ − τ̄_prev|` against the previous cell of the same method.
    pub succ_diff_log2: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MethodFit {
    pub error: Option<RateFit>,
    pub cost: Option<RateFit>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    pub fits: BTreeMap<String, MethodFit>,
    pub notes: Vec<String>,
}

impl StudyTable {
    pub fn rows_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a StudyRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    fn refit(&mut self) {
        let mut methods: Vec<String> = self.rows.iter().map(|r| r.method.clone()).collect();
        methods.dedup();
        self.fits.clear();
        for m in methods {
            let errors: Vec<(f64, f64)> = self
                .rows_for(&m)
                .filter_map(|r| {
                    r.error
                        .filter(|e| *e > 0.0 && e.is_finite())
                        .map(|e| (r.epsilon, e))
                })
                .collect();
            let costs: Vec<(f64, f64)> = self
                .rows_for(&m)
                .filter_map(|r| r.steps.filter(|n| *n > 0).map(|n| (r.epsilon, n as f64)))
                .collect();
            self.fits.insert(
                m,
                MethodFit {
                    error: fit_rate(&errors).ok(),
                    cost: fit_rate(&costs).ok(),
                },
            );
        }
    }
}

/// Inputs of [`run_study`].
#[derive(Debug, Clone)]
pub struct StudySpec {
    pub problem_id: String,
    pub options: CatalogOptions,
    pub methods: Vec<Method>,
    pub eps_grid: Vec<f64>,
    pub seed: u64,
    /// Worker threads; `0` means available parallelism.
    pub jobs: usize,
    /// Replaces the catalog's pseudo-reference tolerance.
    pub reference_eps: Option<f64>,
}

impl StudySpec {
    pub fn new(problem_id: &str, methods: Vec<Method>, eps_grid: Vec<f64>) -> Self {
        Self {
            problem_id: problem_id.to_string(),
            options: CatalogOptions::default(),
            methods,
            eps_grid,
            seed: 1,
            jobs: 0,
            reference_eps: None,
        }
    }
}

/// Halving grid `2^-start, …, 2^-stop`.
pub fn dyadic_grid(start: i32, stop: i32) -> Vec<f64> {
    (start..=stop).map(|k| 2f64.powi(-k)).collect()
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))
}

fn is_strictly_decreasing(grid: &[f64]) -> bool {
    grid.iter().all(|e| *e > 0.0 && e.is_finite()) && grid.windows(2).all(|w| w[1] < w[0])
}

fn cell_row(
    problem: &str,
    method: Method,
    eps: f64,
    outcome: Result<RunResult, RunError>,
    reference: Option<(Reference, f64)>,
) -> StudyRow {
    let (kind, value) = match reference {
        Some((r, v)) => (r.kind().to_string(), Some(v)),
        None => ("none".to_string(), None),
    };
    match outcome {
        Ok(run) => StudyRow {
            problem: problem.to_string(),
            method: method.id().to_string(),
            epsilon: eps,
            tau_hat: Some(run.tau_hat),
            steps: Some(run.steps),
            error: value.map(|v| (run.tau_hat - v).abs()),
            reference_kind: kind,
            reference_value: value,
            wall_ns: run.wall_time.as_nanos() as u64,
            m: None,
            succ_diff_log2: None,
            failure: None,
        },
        Err(e) => StudyRow {
            problem: problem.to_string(),
            method: method.id().to_string(),
            epsilon: eps,
            tau_hat: None,
            steps: None,
            error: None,
            reference_kind: kind,
            reference_value: value,
            wall_ns: 0,
            m: None,
            succ_diff_log2: None,
            failure: Some(format!("{}: {e}", e.variant())),
        },
    }
}

/// Runs every `(method, ε)` cell, concurrently, and fits rates per method.
/// Rows come back in `(method, ε)` order regardless of completion order.
pub fn run_study(spec: &StudySpec) -> Result<StudyTable, HarnessError> {
    if !is_strictly_decreasing(&spec.eps_grid) {
        return Err(HarnessError::GridNotDecreasing);
    }
    let entry = catalog::get(&spec.problem_id, spec.options)?;
    let mut table = StudyTable::default();
    if spec.methods.is_empty() {
        return Ok(table);
    }
    let reference =
        reference_value(&entry, spec.reference_eps, spec.seed).map_err(HarnessError::Reference)?;
    if let Some((Reference::Pseudo { eps, published_eps }, _)) = reference {
        if eps != published_eps {
            table.notes.push(format!(
                "pseudo reference at eps = 2^{} substitutes the published 2^{}",
                eps.log2(),
                published_eps.log2()
            ));
        }
    }
    let cells: Vec<(Method, f64)> = spec
        .methods
        .iter()
        .flat_map(|&m| spec.eps_grid.iter().map(move |&e| (m, e)))
        .collect();
    let jobs = if spec.jobs == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        spec.jobs
    };
    let rows: Vec<StudyRow> = pool(jobs)?.install(|| {
        cells
            .par_iter()
            .map(|&(method, eps)| {
                let outcome = run_method(&entry, method, eps, spec.seed);
                cell_row(&entry.id, method, eps, outcome, reference)
            })
            .collect()
    });
    table.rows = rows;
    fill_successive_differences(&mut table.rows);
    table.refit();
    Ok(table)
}

fn fill_successive_differences(rows: &mut [StudyRow]) {
    for i in 1..rows.len() {
        if rows[i].method != rows[i - 1].method {
            continue;
        }
        if let (Some(a), Some(b)) = (rows[i].tau_hat, rows[i - 1].tau_hat) {
            let d = (a - b).abs();
            rows[i].succ_diff_log2 = (d > 0.0).then(|| d.log2());
        }
    }
}

/// Reaction–diffusion sweeps: tolerance at fixed grid, or grid at fixed
/// tolerance.
#[derive(Debug, Clone, PartialEq)]
pub enum RdMode {
    VaryEps { m: usize, eps_grid: Vec<f64> },
    VaryM { eps: f64, ms: Vec<usize> },
}

impl RdMode {
    /// `m = 32`, `ε = 2⁻¹⁸ … 2⁻²⁵`.
    pub fn vary_eps_default() -> Self {
        RdMode::VaryEps {
            m: 32,
            eps_grid: dyadic_grid(18, 25),
        }
    }

    /// `ε = 2⁻²³`, `m = 4 … 512`.
    pub fn vary_m_default() -> Self {
        RdMode::VaryM {
            eps: 2f64.powi(-23),
            ms: (2..=9).map(|k| 1usize << k).collect(),
        }
    }
}

/// Reaction–diffusion study with the adaptive capped law and the
/// reconstructed uniform law. Errors are against the finest cell of the same
/// method; `succ_diff_log2` compares consecutive cells.
pub fn run_rd_study(mode: &RdMode, jobs: usize) -> Result<StudyTable, HarnessError> {
    let cells: Vec<(Method, f64, usize)> = match mode {
        RdMode::VaryEps { m, eps_grid } => {
            if !is_strictly_decreasing(eps_grid) {
                return Err(HarnessError::GridNotDecreasing);
            }
            [Method::Adaptive, Method::Uniform]
                .iter()
                .flat_map(|&meth| eps_grid.iter().map(move |&e| (meth, e, *m)))
                .collect()
        }
        RdMode::VaryM { eps, ms } => [Method::Adaptive, Method::Uniform]
            .iter()
            .flat_map(|&meth| ms.iter().map(move |&m| (meth, *eps, m)))
            .collect(),
    };
    for &(_, _, m) in &cells {
        if m < 2 {
            return Err(CatalogError::InvalidParameter {
                name: "m",
                value: m as f64,
                reason: "needs at least 2 cells",
            }
            .into());
        }
    }
    let jobs = if jobs == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        jobs
    };
    let mut rows: Vec<StudyRow> = pool(jobs)?.install(|| {
        cells
            .par_iter()
            .map(|&(method, eps, m)| {
                let entry =
                    catalog::get("rd", CatalogOptions { c: 0.5, m }).expect("m checked above");
                let outcome = run_method(&entry, method, eps, 1);
                let mut row = cell_row("rd", method, eps, outcome, None);
                row.m = Some(m);
                row
            })
            .collect()
    });
    for method in ["adaptive", "uniform"] {
        let finest = rows
            .iter()
            .rev()
            .find(|r| r.method == method)
            .and_then(|r| r.tau_hat);
        for r in rows.iter_mut().filter(|r| r.method == method) {
            r.reference_kind = "pseudo".into();
            r.reference_value = finest;
            r.error = match (r.tau_hat, finest) {
                (Some(t), Some(f)) => Some((t - f).abs()),
                _ => None,
            };
        }
    }
    fill_successive_differences(&mut rows);
    let mut table = StudyTable {
        rows,
        ..Default::default()
    };
    table.notes.push(
        "threshold rule for this problem is a working reconstruction (C = 1, alpha = 1); \
         the uniform column uses min(eps/log r, 1/(2m^2)) (reconstructed)"
            .into(),
    );
    if matches!(mode, RdMode::VaryEps { .. }) {
        table.refit();
    }
    Ok(table)
}

const CSV_HEADER: [&str; 9] = [
    "problem",
    "method",
    "epsilon",
    "tau_hat",
    "steps",
    "error",
    "reference_kind",
    "reference_value",
    "wall_ns",
];

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt_float(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// Writes the table; reaction–diffusion tables gain `m,succ_diff_log2`.
/// Floats carry 17 significant digits.
pub fn emit_csv(table: &StudyTable, path: &Path) -> Result<(), HarnessError> {
    let bytes = csv_bytes(table)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn csv_bytes(table: &StudyTable) -> Result<Vec<u8>, HarnessError> {
    let rd = table.rows.iter().any(|r| r.m.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    if rd {
        header.extend(["m", "succ_diff_log2"]);
    }
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec = vec![
            r.problem.clone(),
            r.method.clone(),
            fmt_float(r.epsilon),
            fmt_opt_float(r.tau_hat),
            r.steps.map(|n| n.to_string()).unwrap_or_default(),
            fmt_opt_float(r.error),
            r.reference_kind.clone(),
            fmt_opt_float(r.reference_value),
            r.wall_ns.to_string(),
        ];
        if rd {
            rec.push(r.m.map(|m| m.to_string()).unwrap_or_default());
            rec.push(fmt_opt_float(r.succ_diff_log2));
        }
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
}

fn parse_field<T: FromStr>(field: &'static str, value: &str) -> Result<Option<T>, HarnessError> {
    if value.is_empty() {
        return Ok(None);
    }
    value.parse().map(Some).map_err(|_| HarnessError::Parse {
        field,
        value: value.to_string(),
    })
}

fn required<T>(field: &'static str, v: Option<T>) -> Result<T, HarnessError> {
    v.ok_or(HarnessError::Parse {
        field,
        value: String::new(),
    })
}

/// Reads rows written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<StudyRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        rows.push(StudyRow {
            problem: get(0).to_string(),
            method: get(1).to_string(),
            epsilon: required("epsilon", parse_field("epsilon", get(2))?)?,
            tau_hat: parse_field("tau_hat", get(3))?,
            steps: parse_field("steps", get(4))?,
            error: parse_field("error", get(5))?,
            reference_kind: get(6).to_string(),
            reference_value: parse_field("reference_value", get(7))?,
            wall_ns: parse_field("wall_ns", get(8))?.unwrap_or(0),
            m: parse_field("m", get(9))?,
            succ_diff_log2: parse_field("succ_diff_log2", get(10))?,
            failure: None,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    ErrorVsEps,
    CostVsEps,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 200.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Self-contained log₂–log₂ chart, one series per method, with fitted slopes
/// in the legend. Fails without writing when there is nothing to plot.
pub fn emit_svg(table: &StudyTable, path: &Path, axis: Axis) -> Result<(), HarnessError> {
    let svg = render_svg(table, axis)?;
    fs::write(path, svg)?;
    Ok(())
}

pub fn render_svg(table: &StudyTable, axis: Axis) -> Result<String, HarnessError> {
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in &table.rows {
        let y = match axis {
            Axis::ErrorVsEps => r.error,
            Axis::CostVsEps => r.steps.map(|n| n as f64),
        };
        let Some(y) = y.filter(|y| *y > 0.0 && y.is_finite()) else {
            continue;
        };
        let point = (r.epsilon.log2(), y.log2());
        match series.iter_mut().find(|(m, _)| *m == r.method) {
            Some((_, pts)) => pts.push(point),
            None => series.push((r.method.clone(), vec![point])),
        }
    }
    if series.is_empty() {
        return Err(HarnessError::EmptyTable);
    }
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (x0, x1) = (x0.floor() - 0.5, x1.ceil() + 0.5);
    let (y0, y1) = (y0.floor() - 0.5, y1.ceil() + 0.5);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let tick_step = |span: f64| ((span / 10.0).ceil()).max(1.0);
    let xs = tick_step(x1 - x0);
    let mut t = (x0 / xs).ceil() * xs;
    while t <= x1 {
        let px = sx(t);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#ddd"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">2^{t}</text>"##,
            MARGIN_TOP,
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 18.0
        );
        t += xs;
    }
    let ys = tick_step(y1 - y0);
    let mut t = (y0 / ys).ceil() * ys;
    while t <= y1 {
        let py = sy(t);
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">2^{t}</text>"##,
            MARGIN_LEFT + plot_w,
            MARGIN_LEFT - 6.0,
            py + 4.0
        );
        t += ys;
    }
    let y_label = match axis {
        Axis::ErrorVsEps => "error",
        Axis::CostVsEps => "cost",
    };
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">tolerance eps</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{y_label}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );
    for (i, (method, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let fit = table.fits.get(method).and_then(|f| match axis {
            Axis::ErrorVsEps => f.error,
            Axis::CostVsEps => f.cost,
        });
        let label = match fit {
            Some(f) => format!("{method} (slope {:.2})", f.slope),
            None => method.clone(),
        };
        let ly = MARGIN_TOP + 20.0 * (i as f64 + 1.0);
        let lx = MARGIN_LEFT + plot_w + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            escape(&label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_examples() {
        let f = fit_rate(&[(1.0, 1.0), (0.5, 2.0), (0.25, 4.0)]).unwrap();
        assert_eq!(f.slope, -1.0);
        assert_eq!(f.r_squared, 1.0);
        let f = fit_rate(&[(1.0, 1.0), (0.5, 0.5), (0.25, 0.25)]).unwrap();
        assert_eq!(f.slope, 1.0);
        let f = fit_rate(&[(1.0, 1.0), (0.5, 0.5f64.sqrt()), (0.25, 0.5)]).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-15);
        assert_eq!(
            fit_rate(&[(1.0, 1.0), (0.5, 2.0)]),
            Err(FitError::InsufficientPoints(2))
        );
        assert!(matches!(
            fit_rate(&[(1.0, 1.0), (0.5, 0.0), (0.25, 4.0)]),
            Err(FitError::NonPositive(..))
        ));
    }

    #[test]
    fn method_ids_round_trip() {
        for id in Method::ALL_IDS {
            assert_eq!(id.parse::<Method>().unwrap().id(), id);
        }
        assert!("bogus".parse::<Method>().is_err());
    }

    #[test]
    fn empty_method_list_gives_empty_table() {
        let t = run_study(&StudySpec::new("sq", vec![], dyadic_grid(6, 8))).unwrap();
        assert!(t.rows.is_empty());
    }

    #[test]
    fn grid_must_decrease() {
        let spec = StudySpec::new("sq", vec![Method::Adaptive], vec![0.1, 0.2, 0.05]);
        assert!(matches!(
            run_study(&spec),
            Err(HarnessError::GridNotDecreasing)
        ));
    }

    #[test]
    fn unsupported_cells_are_recorded() {
        let t = run_study(&StudySpec::new(
            "uncoupled",
            vec![Method::Taylor2],
            dyadic_grid(4, 6),
        ))
        .unwrap();
        assert_eq!(t.rows.len(), 3);
        assert!(t
            .rows
            .iter()
            .all(|r| r.failure.as_deref().unwrap().starts_with("Unsupported")));
    }

    #[test]
    fn empty_svg_is_an_error() {
        assert!(matches!(
            render_svg(&StudyTable::default(), Axis::ErrorVsEps),
            Err(HarnessError::EmptyTable)
        ));
    }
}
