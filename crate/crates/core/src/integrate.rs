//! Forward Euler solver loops for scalar and vector problems, the Taylor
//! variant, the implicit step-count iteration and the separable wrapper.

use std::time::Instant;

use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::problem::{
    log_norm_from_ln_abs, validate, FinalState, GrowthKind, LogScaleField, RunResult,
    ScalarLogScale, ScalarProblem, VectorProblem,
};
use crate::stepping::{self, StepError, StepLaw};
use crate::thresholds::{self, Radius, ThresholdError};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub law: StepLaw,
    pub max_steps: u64,
    pub record_trace: bool,
    /// Abort once `|x̄|` exceeds this before the radius is reached.
    pub overflow_guard: f64,
    /// Seed for the power-iteration start vector.
    pub seed: u64,
}

impl SolverConfig {
    pub const DEFAULT_MAX_STEPS: u64 = 1 << 30;
    pub const DEFAULT_OVERFLOW_GUARD: f64 = 1e300;

    pub fn new(law: StepLaw) -> Self {
        Self {
            law,
            max_steps: Self::DEFAULT_MAX_STEPS,
            record_trace: false,
            overflow_guard: Self::DEFAULT_OVERFLOW_GUARD,
            seed: 1,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn with_max_steps(mut self, n: u64) -> Self {
        self.max_steps = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepBudgetExceeded { max_steps: u64, t: f64 },
    #[error(
        "state norm {norm} exceeded the overflow guard at t = {t} before reaching r = {radius}"
    )]
    Overflow { t: f64, norm: f64, radius: f64 },
    #[error("implicit step count did not settle after {iterations} outer iterations")]
    FixedPointDivergence { iterations: u32 },
    #[error("step law {law} does not apply to {what}")]
    LawMismatch { law: String, what: &'static str },
    #[error("solve_log_nd needs logarithmic growth")]
    NotLogarithmic,
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl SolveError {
    /// Variant name, for messages that must identify the failure kind.
    pub fn variant(&self) -> &'static str {
        match self {
            SolveError::InvalidTolerance(_) => "InvalidTolerance",
            SolveError::StepBudgetExceeded { .. } => "StepBudgetExceeded",
            SolveError::Overflow { .. } => "Overflow",
            SolveError::FixedPointDivergence { .. } => "FixedPointDivergence",
            SolveError::LawMismatch { .. } => "LawMismatch",
            SolveError::NotLogarithmic => "NotLogarithmic",
            SolveError::Threshold(ThresholdError::BracketFailure { .. }) => "BracketFailure",
            SolveError::Threshold(ThresholdError::NonMonotone { .. }) => "NonMonotone",
            SolveError::Threshold(_) => "Threshold",
            SolveError::Step(StepError::NonpositiveDerivative { .. }) => "NonpositiveDerivative",
            SolveError::Step(StepError::DegenerateJvp) => "DegenerateJVP",
            SolveError::Step(_) => "Step",
            SolveError::Linalg(LinalgError::TransposeUnavailable) => "TransposeUnavailable",
            SolveError::Linalg(_) => "Linalg",
        }
    }
}

fn check_eps(eps: f64) -> Result<(), SolveError> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(SolveError::InvalidTolerance(eps))
    }
}

fn validation_warnings<'a>(problem: impl Into<crate::problem::ProblemRef<'a>>) -> Vec<String> {
    validate(problem)
        .into_iter()
        .map(|v| format!("assumption check: {v}"))
        .collect()
}

fn degenerate_warning(norm0: f64, radius: Radius) -> String {
    format!("radius {radius} does not exceed |x0| = {norm0}; no steps taken")
}

enum ScalarStep {
    Adaptive,
    Taylor2,
    Uniform(f64),
}

/// Algorithm 1: `while x̄ < r: x̄ ← x̄ + b(x̄)h, t ← t + h`. Problems with a
/// log-scale field are integrated in the coordinate `ln x`.
pub fn solve_1d(
    problem: &ScalarProblem,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<RunResult, SolveError> {
    check_eps(eps)?;
    let start = Instant::now();
    let radius = thresholds::scalar_radius(problem, eps)?;
    let warnings = validation_warnings(problem);
    let mut result = match &problem.log_scale {
        Some(field) => euler_scalar_log(problem, field.as_ref(), eps, cfg, radius, warnings)?,
        None => euler_scalar(problem, eps, cfg, radius, warnings)?,
    };
    result.wall_time = start.elapsed();
    Ok(result)
}

fn scalar_law_mismatch(law: StepLaw, what: &'static str) -> SolveError {
    SolveError::LawMismatch {
        law: law.id(),
        what,
    }
}

fn euler_scalar(
    p: &ScalarProblem,
    eps: f64,
    cfg: &SolverConfig,
    radius: Radius,
    mut warnings: Vec<String>,
) -> Result<RunResult, SolveError> {
    let r = radius.value;
    let law = match cfg.law {
        StepLaw::Adaptive1D => ScalarStep::Adaptive,
        StepLaw::Taylor1D { m_bar: 2 } => ScalarStep::Taylor2,
        StepLaw::Taylor1D { m_bar } => return Err(StepError::UnsupportedOrder(m_bar).into()),
        StepLaw::Uniform1D if p.x0 < r => ScalarStep::Uniform(stepping::h_uniform_1d(
            eps,
            p.x0,
            r,
            &*p.rhs,
            &*p.rhs_deriv,
        )?),
        StepLaw::Uniform1D => ScalarStep::Uniform(0.0),
        other => return Err(scalar_law_mismatch(other, "a scalar problem")),
    };

    let mut x = p.x0;
    let mut t = 0.0;
    let mut n: u64 = 0;
    let mut trace = cfg.record_trace.then(|| vec![(0.0, x.abs())]);
    if !(x < r) {
        warnings.push(degenerate_warning(x, radius));
    }
    while x < r {
        if n >= cfg.max_steps {
            return Err(SolveError::StepBudgetExceeded {
                max_steps: cfg.max_steps,
                t,
            });
        }
        let b = (p.rhs)(x);
        let h = match law {
            ScalarStep::Adaptive => stepping::h_adaptive_1d(eps, x, p.k, r, &*p.rhs_deriv)?,
            ScalarStep::Taylor2 => stepping::h_taylor_1d(eps, x, p.k, r, &*p.rhs_deriv, 2)?,
            ScalarStep::Uniform(h) => h,
        };
        x = match law {
            // x″ = b′(x)b(x)
            ScalarStep::Taylor2 => x + b * h + 0.5 * (p.rhs_deriv)(x) * b * h * h,
            _ => x + b * h,
        };
        t += h;
        n += 1;
        if !(x.abs() <= cfg.overflow_guard) {
            return Err(SolveError::Overflow {
                t,
                norm: x.abs(),
                radius: r,
            });
        }
        if let Some(tr) = trace.as_mut() {
            tr.push((t, x.abs()));
        }
    }
    Ok(RunResult {
        tau_hat: t,
        steps: n,
        final_state: FinalState::Scalar(x),
        radius_used: radius,
        epsilon: eps,
        wall_time: Default::default(),
        trace,
        warnings,
    })
}

fn euler_scalar_log(
    p: &ScalarProblem,
    field: &dyn ScalarLogScale,
    eps: f64,
    cfg: &SolverConfig,
    radius: Radius,
    mut warnings: Vec<String>,
) -> Result<RunResult, SolveError> {
    let ln_r = radius.ln;
    let ln_k = p.k.ln();
    let mut u = p.x0.ln();
    let uniform = match cfg.law {
        StepLaw::Adaptive1D => None,
        StepLaw::Uniform1D if u < ln_r => {
            // log(b(r)/b(x₀)) with b = x·g
            let ln_ratio = (ln_r + field.growth_rate(ln_r).ln()) - (u + field.growth_rate(u).ln());
            let d = field.deriv(ln_r);
            if !(ln_ratio > 0.0) {
                return Err(StepError::FlatRange {
                    b_x0: (p.rhs)(p.x0),
                    b_r: f64::INFINITY,
                }
                .into());
            }
            Some((eps / ln_ratio).min(0.5 / d))
        }
        StepLaw::Uniform1D => Some(0.0),
        other => return Err(scalar_law_mismatch(other, "a log-scaled scalar problem")),
    };
    let mut t = 0.0;
    let mut n: u64 = 0;
    let mut trace = cfg.record_trace.then(|| vec![(0.0, p.x0)]);
    if !(u < ln_r) {
        warnings.push(degenerate_warning(p.x0, radius));
    }
    while u < ln_r {
        if n >= cfg.max_steps {
            return Err(SolveError::StepBudgetExceeded {
                max_steps: cfg.max_steps,
                t,
            });
        }
        let h = match uniform {
            Some(h) => h,
            None => {
                let at = (ln_k + u).min(ln_r);
                let d = field.deriv(at);
                if !(d > 0.0) {
                    return Err(StepError::NonpositiveDerivative {
                        at: at.exp(),
                        value: d,
                    }
                    .into());
                }
                eps / d.sqrt()
            }
        };
        u += (field.growth_rate(u) * h).ln_1p();
        t += h;
        n += 1;
        if !u.is_finite() {
            return Err(SolveError::Overflow {
                t,
                norm: f64::INFINITY,
                radius: radius.value,
            });
        }
        if let Some(tr) = trace.as_mut() {
            tr.push((t, u.exp()));
        }
    }
    Ok(RunResult {
        tau_hat: t,
        steps: n,
        final_state: FinalState::LogScaled {
            signs: vec![1.0],
            ln_abs: vec![u],
        },
        radius_used: radius,
        epsilon: eps,
        wall_time: Default::default(),
        trace,
        warnings,
    })
}

/// Step rule resolved once per vector solve.
enum VectorStep {
    Adaptive,
    Alt,
    LogImplicit(u64),
    Fixed(f64),
}

fn resolve_vector_law(
    p: &VectorProblem,
    eps: f64,
    law: StepLaw,
    radius: Radius,
) -> Result<VectorStep, SolveError> {
    Ok(match law {
        StepLaw::AdaptiveND => VectorStep::Adaptive,
        StepLaw::AltND | StepLaw::RDCapped => VectorStep::Alt,
        StepLaw::LogNdImplicitN { n_guess } => VectorStep::LogImplicit(n_guess),
        StepLaw::UniformND => {
            let exponent = p
                .uniform_exponent
                .ok_or_else(|| StepError::MissingExponent(law.id()))?;
            VectorStep::Fixed(stepping::h_power_uniform(eps, exponent))
        }
        StepLaw::LogUniformND => VectorStep::Fixed(stepping::h_uniform_nd_ln(eps, radius.ln)?),
        other => {
            return Err(SolveError::LawMismatch {
                law: other.id(),
                what: "a vector problem",
            })
        }
    })
}

fn cap(h: f64, p: &VectorProblem) -> f64 {
    match p.step_cap {
        Some(c) => h.min(c),
        None => h,
    }
}

/// Algorithm 2: `while |x̄| ≤ r: x̄ ← x̄ + b(x̄)h, t ← t + h`. Problems with a
/// log-scale field are integrated in the coordinates `ln|xᵢ|`.
pub fn solve_nd(
    problem: &VectorProblem,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<RunResult, SolveError> {
    check_eps(eps)?;
    let start = Instant::now();
    let radius = thresholds::vector_radius(problem, eps)?;
    let law = resolve_vector_law(problem, eps, cfg.law, radius)?;
    let warnings = validation_warnings(problem);
    let mut result = match &problem.log_scale {
        Some(field) => euler_log_scaled(problem, field.as_ref(), eps, cfg, law, radius, warnings)?,
        None => euler_cartesian(problem, eps, cfg, law, radius, warnings)?,
    };
    result.wall_time = start.elapsed();
    Ok(result)
}

fn euler_cartesian(
    p: &VectorProblem,
    eps: f64,
    cfg: &SolverConfig,
    law: VectorStep,
    radius: Radius,
    mut warnings: Vec<String>,
) -> Result<RunResult, SolveError> {
    let r = radius.value;
    let mut x = p.x0.clone();
    let mut bx = vec![0.0; p.dim];
    let mut jb = vec![0.0; p.dim];
    let mut norm = linalg::l2(&x);
    let mut t = 0.0;
    let mut n: u64 = 0;
    let mut trace = cfg.record_trace.then(|| vec![(0.0, norm)]);
    if norm > r {
        warnings.push(degenerate_warning(norm, radius));
    }
    while norm <= r {
        if n >= cfg.max_steps {
            return Err(SolveError::StepBudgetExceeded {
                max_steps: cfg.max_steps,
                t,
            });
        }
        (p.rhs)(&x, &mut bx);
        let h = match law {
            VectorStep::Adaptive => stepping::h_adaptive_nd(
                eps,
                linalg::spectral_norm(&p.jacobian, &x, p.dim, cfg.seed)?,
            ),
            VectorStep::LogImplicit(n_guess) => stepping::h_log_nd(
                eps,
                n_guess,
                linalg::spectral_norm(&p.jacobian, &x, p.dim, cfg.seed)?,
            ),
            VectorStep::Alt => {
                linalg::apply_jvp(&p.jacobian, &x, &bx, &mut jb);
                match stepping::h_alt_nd(eps, linalg::l2(&bx), linalg::l2(&jb)) {
                    Ok(h) => h,
                    Err(StepError::DegenerateJvp) => stepping::h_adaptive_nd(
                        eps,
                        linalg::spectral_norm(&p.jacobian, &x, p.dim, cfg.seed)?,
                    ),
                    Err(e) => return Err(e.into()),
                }
            }
            VectorStep::Fixed(h) => h,
        };
        let h = cap(h, p);
        for (xi, bi) in x.iter_mut().zip(&bx) {
            *xi += bi * h;
        }
        t += h;
        n += 1;
        norm = linalg::l2(&x);
        if !(norm <= cfg.overflow_guard) {
            return Err(SolveError::Overflow { t, norm, radius: r });
        }
        if let Some(tr) = trace.as_mut() {
            tr.push((t, norm));
        }
    }
    Ok(RunResult {
        tau_hat: t,
        steps: n,
        final_state: FinalState::Vector(x),
        radius_used: radius,
        epsilon: eps,
        wall_time: Default::default(),
        trace,
        warnings,
    })
}

fn euler_log_scaled(
    p: &VectorProblem,
    field: &dyn LogScaleField,
    eps: f64,
    cfg: &SolverConfig,
    law: VectorStep,
    radius: Radius,
    mut warnings: Vec<String>,
) -> Result<RunResult, SolveError> {
    if matches!(law, VectorStep::Alt) {
        return Err(SolveError::LawMismatch {
            law: "alt-nd".into(),
            what: "a log-scaled problem",
        });
    }
    let signs: Vec<f64> = p.x0.iter().map(|x| x.signum()).collect();
    let mut u: Vec<f64> = p.x0.iter().map(|x| x.abs().ln()).collect();
    let mut g = vec![0.0; p.dim];
    let mut ln_norm = log_norm_from_ln_abs(&u);
    let ln_guard = cfg.overflow_guard.ln();
    let mut t = 0.0;
    let mut n: u64 = 0;
    let mut trace = cfg.record_trace.then(|| vec![(0.0, ln_norm.exp())]);
    if ln_norm > radius.ln {
        warnings.push(degenerate_warning(ln_norm.exp(), radius));
    }
    // ln|x̄| ≤ ln r is the same guard as |x̄| ≤ r
    while ln_norm <= radius.ln {
        if n >= cfg.max_steps {
            return Err(SolveError::StepBudgetExceeded {
                max_steps: cfg.max_steps,
                t,
            });
        }
        let h = match law {
            VectorStep::Adaptive => stepping::h_adaptive_nd(eps, field.jacobian_norm(&u)),
            VectorStep::LogImplicit(n_guess) => {
                stepping::h_log_nd(eps, n_guess, field.jacobian_norm(&u))
            }
            VectorStep::Fixed(h) => h,
            VectorStep::Alt => unreachable!(),
        };
        let h = cap(h, p);
        field.growth_rates(&u, &mut g);
        for (ui, gi) in u.iter_mut().zip(&g) {
            *ui += (gi * h).ln_1p();
        }
        t += h;
        n += 1;
        ln_norm = log_norm_from_ln_abs(&u);
        if !ln_norm.is_finite() || (radius.ln < ln_guard && ln_norm > ln_guard) {
            return Err(SolveError::Overflow {
                t,
                norm: ln_norm.exp(),
                radius: radius.value,
            });
        }
        if let Some(tr) = trace.as_mut() {
            tr.push((t, ln_norm.exp()));
        }
    }
    Ok(RunResult {
        tau_hat: t,
        steps: n,
        final_state: FinalState::LogScaled { signs, ln_abs: u },
        radius_used: radius,
        epsilon: eps,
        wall_time: Default::default(),
        trace,
        warnings,
    })
}

const MAX_OUTER_ITERATIONS: u32 = 40;

/// Slow-growth variant: the step law needs the final step count `N`, found
/// by rerunning until the guess lies in `[N*, 4N*]`.
pub fn solve_log_nd(
    problem: &VectorProblem,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<RunResult, SolveError> {
    check_eps(eps)?;
    if problem.growth.kind != GrowthKind::Logarithmic {
        return Err(SolveError::NotLogarithmic);
    }
    let start = Instant::now();
    let mut n_guess = (1.0 / eps).ceil().max(1.0) as u64;
    for _ in 0..MAX_OUTER_ITERATIONS {
        let inner = SolverConfig {
            law: StepLaw::LogNdImplicitN { n_guess },
            ..cfg.clone()
        };
        let mut run = solve_nd(problem, eps, &inner)?;
        let n_star = run.steps;
        if n_star > n_guess {
            n_guess = n_guess.saturating_mul(2);
        } else if n_guess > n_star.saturating_mul(4) && n_star > 0 {
            // the accepted band spans a factor 16 in the guess, so halving
            // cannot step over it
            n_guess /= 2;
        } else {
            run.wall_time = start.elapsed();
            return Ok(run);
        }
    }
    Err(SolveError::FixedPointDivergence {
        iterations: MAX_OUTER_ITERATIONS,
    })
}

/// `x′ = g(t)b(x)`: solves the autonomous problem for `∫ 1/b` and maps it
/// back through `τ = G⁻¹(∫ 1/b + G(0))`.
pub fn solve_separable(
    inner: &ScalarProblem,
    g_antideriv: impl Fn(f64) -> f64,
    g_antideriv_inv: impl Fn(f64) -> f64,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<f64, SolveError> {
    let run = solve_1d(inner, eps, cfg)?;
    Ok(g_antideriv_inv(run.tau_hat + g_antideriv(0.0)))
}
