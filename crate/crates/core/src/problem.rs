//! Problem definitions for scalar and vector blow-up problems, run results,
//! and a numeric sanity layer that tries to falsify the growth assumptions.

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, JacobianAccess};
use crate::thresholds::{Radius, ThresholdRule};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// `(x, out)` with `out = b(x)`.
pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Autonomous scalar ODE `x′ = b(x)` started at `x0 > 0`.
#[derive(Clone)]
pub struct ScalarProblem {
    pub rhs: ScalarFn,
    pub rhs_deriv: ScalarFn,
    pub rhs_second: Option<ScalarFn>,
    pub x0: f64,
    /// Look-ahead factor `k > 1` in the adaptive step law.
    pub k: f64,
    pub threshold: ThresholdRule,
    pub exact_tau: Option<f64>,
    /// Constant `C` with `x ≤ b′(x)^C`, used by the `b′`-log tail bound.
    pub log_constant: f64,
    pub log_scale: Option<Arc<dyn ScalarLogScale>>,
}

/// Scalar fields `b(x) = x·g(x)` with `g` and `b′` computable from `ln x`,
/// so the state can be carried as `ln x` past the range of `f64`.
pub trait ScalarLogScale: Send + Sync {
    /// `g` at `x = e^{ln_x}`.
    fn growth_rate(&self, ln_x: f64) -> f64;
    /// `b′` at `x = e^{ln_x}`.
    fn deriv(&self, ln_x: f64) -> f64;
}

impl ScalarProblem {
    pub fn new(
        rhs: ScalarFn,
        rhs_deriv: ScalarFn,
        x0: f64,
        k: f64,
        threshold: ThresholdRule,
    ) -> Self {
        Self {
            rhs,
            rhs_deriv,
            rhs_second: None,
            x0,
            k,
            threshold,
            exact_tau: None,
            log_constant: 1.0,
            log_scale: None,
        }
    }

    pub fn with_second(mut self, f: ScalarFn) -> Self {
        self.rhs_second = Some(f);
        self
    }

    pub fn with_exact_tau(mut self, tau: f64) -> Self {
        self.exact_tau = Some(tau);
        self
    }

    pub fn with_log_constant(mut self, c: f64) -> Self {
        self.log_constant = c;
        self
    }

    pub fn with_log_scale(mut self, field: Arc<dyn ScalarLogScale>) -> Self {
        self.log_scale = Some(field);
        self
    }
}

impl fmt::Debug for ScalarProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarProblem")
            .field("x0", &self.x0)
            .field("k", &self.k)
            .field("threshold", &self.threshold)
            .field("exact_tau", &self.exact_tau)
            .field("log_scale", &self.log_scale.is_some())
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthKind {
    /// `Č|x|^{2+α} ≤ b(x)·x`
    Polynomial,
    /// `Č|x|² log(|x|)^{1+α} ≤ b(x)·x`, needs `δ > 1`
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthSpec {
    pub kind: GrowthKind,
    pub c_check: f64,
    pub alpha: f64,
    /// The inequality is a working assumption rather than a verified bound;
    /// the sampler reports it as skipped.
    pub reconstructed: bool,
}

impl GrowthSpec {
    pub fn polynomial(c_check: f64, alpha: f64) -> Self {
        Self {
            kind: GrowthKind::Polynomial,
            c_check,
            alpha,
            reconstructed: false,
        }
    }

    pub fn logarithmic(c_check: f64, alpha: f64) -> Self {
        Self {
            kind: GrowthKind::Logarithmic,
            c_check,
            alpha,
            reconstructed: false,
        }
    }

    /// Lower bound on `b(x)·x` at `|x| = norm`.
    pub fn lower_bound(&self, norm: f64) -> f64 {
        match self.kind {
            GrowthKind::Polynomial => self.c_check * norm.powf(2.0 + self.alpha),
            GrowthKind::Logarithmic => {
                self.c_check * norm * norm * norm.ln().powf(1.0 + self.alpha)
            }
        }
    }
}

/// Vector fields of the form `bᵢ(x) = xᵢ·gᵢ(x)` whose rates `gᵢ` can be
/// evaluated from `ln|xᵢ|` alone. Forward Euler then reads
/// `ln|xᵢ| ← ln|xᵢ| + ln(1 + gᵢ h)`, which reaches radii far beyond the
/// range of `f64`.
pub trait LogScaleField: Send + Sync {
    /// Growth rates `gᵢ` at the state with `ln|xᵢ| = ln_abs[i]`.
    fn growth_rates(&self, ln_abs: &[f64], out: &mut [f64]);
    /// `‖b′(x)‖₂` at the same state.
    fn jacobian_norm(&self, ln_abs: &[f64]) -> f64;
}

/// Autonomous system `x′ = b(x)` on `D = {|x| > δ}`.
#[derive(Clone)]
pub struct VectorProblem {
    pub dim: usize,
    pub rhs: VectorFn,
    pub jacobian: JacobianAccess,
    pub growth: GrowthSpec,
    pub delta: f64,
    pub x0: Vec<f64>,
    pub exact_tau: Option<f64>,
    /// Exponent `p` of the plain uniform step `h = εᵖ`.
    pub uniform_exponent: Option<f64>,
    /// Stability cap on every step (semi-discretized PDEs).
    pub step_cap: Option<f64>,
    pub log_scale: Option<Arc<dyn LogScaleField>>,
}

impl VectorProblem {
    pub fn new(
        rhs: VectorFn,
        jacobian: JacobianAccess,
        growth: GrowthSpec,
        delta: f64,
        x0: Vec<f64>,
    ) -> Self {
        Self {
            dim: x0.len(),
            rhs,
            jacobian,
            growth,
            delta,
            x0,
            exact_tau: None,
            uniform_exponent: None,
            step_cap: None,
            log_scale: None,
        }
    }

    pub fn with_exact_tau(mut self, tau: f64) -> Self {
        self.exact_tau = Some(tau);
        self
    }

    pub fn with_uniform_exponent(mut self, p: f64) -> Self {
        self.uniform_exponent = Some(p);
        self
    }

    pub fn with_step_cap(mut self, cap: f64) -> Self {
        self.step_cap = Some(cap);
        self
    }

    pub fn with_log_scale(mut self, field: Arc<dyn LogScaleField>) -> Self {
        self.log_scale = Some(field);
        self
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.rhs)(x, &mut out);
        out
    }
}

impl fmt::Debug for VectorProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorProblem")
            .field("dim", &self.dim)
            .field("jacobian", &self.jacobian)
            .field("growth", &self.growth)
            .field("delta", &self.delta)
            .field("x0", &self.x0)
            .field("exact_tau", &self.exact_tau)
            .field("step_cap", &self.step_cap)
            .field("log_scale", &self.log_scale.is_some())
            .finish_non_exhaustive()
    }
}

/// Owned problem of either dimensionality.
#[derive(Debug, Clone)]
pub enum Problem {
    Scalar(ScalarProblem),
    Vector(VectorProblem),
}

impl Problem {
    pub fn as_ref(&self) -> ProblemRef<'_> {
        match self {
            Problem::Scalar(p) => ProblemRef::Scalar(p),
            Problem::Vector(p) => ProblemRef::Vector(p),
        }
    }

    pub fn exact_tau(&self) -> Option<f64> {
        match self {
            Problem::Scalar(p) => p.exact_tau,
            Problem::Vector(p) => p.exact_tau,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ProblemRef<'a> {
    Scalar(&'a ScalarProblem),
    Vector(&'a VectorProblem),
}

impl<'a> From<&'a ScalarProblem> for ProblemRef<'a> {
    fn from(p: &'a ScalarProblem) -> Self {
        ProblemRef::Scalar(p)
    }
}

impl<'a> From<&'a VectorProblem> for ProblemRef<'a> {
    fn from(p: &'a VectorProblem) -> Self {
        ProblemRef::Vector(p)
    }
}

impl<'a> From<&'a Problem> for ProblemRef<'a> {
    fn from(p: &'a Problem) -> Self {
        p.as_ref()
    }
}

/// State at termination.
#[derive(Debug, Clone, PartialEq)]
pub enum FinalState {
    Scalar(f64),
    Vector(Vec<f64>),
    /// Signs and `ln|xᵢ|` of a state integrated in log coordinates.
    LogScaled {
        signs: Vec<f64>,
        ln_abs: Vec<f64>,
    },
}

impl FinalState {
    pub fn norm(&self) -> f64 {
        match self {
            FinalState::Scalar(x) => x.abs(),
            FinalState::Vector(v) => linalg::l2(v),
            FinalState::LogScaled { .. } => self.ln_norm().exp(),
        }
    }

    pub fn ln_norm(&self) -> f64 {
        match self {
            FinalState::LogScaled { ln_abs, .. } => log_norm_from_ln_abs(ln_abs),
            other => other.norm().ln(),
        }
    }
}

/// `ln|x|` from the componentwise `ln|xᵢ|`, without leaving log space.
pub fn log_norm_from_ln_abs(ln_abs: &[f64]) -> f64 {
    let m = ln_abs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = ln_abs.iter().map(|u| (2.0 * (u - m)).exp()).sum();
    m + 0.5 * s.ln()
}

/// Outcome of a single solve.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub tau_hat: f64,
    pub steps: u64,
    pub final_state: FinalState,
    pub radius_used: Radius,
    pub epsilon: f64,
    pub wall_time: Duration,
    /// `(tₙ, |x̄ₙ|)` pairs when tracing was requested.
    pub trace: Option<Vec<(f64, f64)>>,
    pub warnings: Vec<String>,
}

/// A failed structural invariant or sampled assumption.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckOutcome {
    Pass {
        samples: usize,
    },
    Fail {
        at: Vec<f64>,
        detail: String,
    },
    /// Sampling overflowed before finding a counterexample.
    Untestable {
        at: Vec<f64>,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub outcome: CheckOutcome,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks
            .iter()
            .filter(|c| matches!(c.outcome, CheckOutcome::Fail { .. }))
    }

    pub fn all_hold(&self) -> bool {
        self.failures().next().is_none()
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            match &c.outcome {
                CheckOutcome::Pass { samples } => {
                    writeln!(f, "{}: pass ({samples} samples)", c.name)?
                }
                CheckOutcome::Fail { at, detail } => {
                    writeln!(f, "{}: FAIL at x={at:?}: {detail}", c.name)?
                }
                CheckOutcome::Untestable { at } => {
                    writeln!(f, "{}: untestable at x={at:?} (overflow)", c.name)?
                }
                CheckOutcome::Skipped { reason } => writeln!(f, "{}: skipped ({reason})", c.name)?,
            }
        }
        Ok(())
    }
}

/// Upper end of the sampled range, relative to the starting radius.
const SAMPLE_SPAN: f64 = 1e6;
/// Relative slack for inequalities that hold with equality.
const ROUNDING_SLACK: f64 = 1e-12;

/// Tries to falsify the growth assumptions on sample points between `|x0|`
/// and `10⁶·|x0|`. Log-spaced in 1D, radially log-spaced with random
/// directions in ℝⁿ.
pub fn check_assumptions<'a>(
    problem: impl Into<ProblemRef<'a>>,
    samples: usize,
    seed: u64,
) -> AssumptionReport {
    let samples = samples.max(1);
    match problem.into() {
        ProblemRef::Scalar(p) => check_scalar(p, samples),
        ProblemRef::Vector(p) => check_vector(p, samples, seed),
    }
}

fn log_spaced(start: f64, samples: usize) -> impl Iterator<Item = f64> {
    (0..samples).map(move |i| {
        if samples == 1 {
            start
        } else {
            start * SAMPLE_SPAN.powf(i as f64 / (samples - 1) as f64)
        }
    })
}

fn check_scalar(p: &ScalarProblem, samples: usize) -> AssumptionReport {
    let mut positive = SampleCheck::new("b > 0");
    let mut deriv_positive = SampleCheck::new("b' > 0");
    let mut deriv_increasing = SampleCheck::new("b' increasing");
    let mut prev: Option<(f64, f64)> = None;
    for x in log_spaced(p.x0, samples) {
        let b = (p.rhs)(x);
        let d = (p.rhs_deriv)(x);
        positive.record(&[x], b, b > 0.0, || format!("b = {b}"));
        deriv_positive.record(&[x], d, d > 0.0, || format!("b' = {d}"));
        if let Some((px, pd)) = prev {
            if pd.is_finite() {
                deriv_increasing.record(&[x], d, d >= pd * (1.0 - ROUNDING_SLACK), || {
                    format!("b'({x}) = {d} < b'({px}) = {pd}")
                });
            }
        }
        prev = Some((x, d));
    }
    AssumptionReport {
        checks: vec![
            positive.finish(),
            deriv_positive.finish(),
            deriv_increasing.finish(),
        ],
    }
}

fn check_vector(p: &VectorProblem, samples: usize, seed: u64) -> AssumptionReport {
    if p.growth.reconstructed {
        let skipped = |name| AssumptionCheck {
            name,
            outcome: CheckOutcome::Skipped {
                reason: "growth constants are a working reconstruction".into(),
            },
        };
        return AssumptionReport {
            checks: vec![skipped("growth lower bound"), skipped("b(x)·x > 0")],
        };
    }
    let mut growth = SampleCheck::new("growth lower bound");
    let mut outward = SampleCheck::new("b(x)·x > 0");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r0 = linalg::l2(&p.x0).max(p.delta);
    let mut x = vec![0.0; p.dim];
    let mut bx = vec![0.0; p.dim];
    for _ in 0..samples {
        let radius = r0 * SAMPLE_SPAN.powf(rng.random::<f64>());
        loop {
            for c in x.iter_mut() {
                *c = rng.sample(StandardNormal);
            }
            if linalg::l2(&x) > 0.0 {
                break;
            }
        }
        let n = linalg::l2(&x);
        x.iter_mut().for_each(|c| *c *= radius / n);
        (p.rhs)(&x, &mut bx);
        let dot: f64 = x.iter().zip(&bx).map(|(a, b)| a * b).sum();
        outward.record(&x, dot, dot > 0.0, || format!("b(x)·x = {dot}"));
        let bound = p.growth.lower_bound(radius);
        let ok = dot >= bound * (1.0 - ROUNDING_SLACK);
        growth.record(&x, dot.min(bound), ok, || {
            format!("b(x)·x = {dot} < {bound}")
        });
    }
    AssumptionReport {
        checks: vec![growth.finish(), outward.finish()],
    }
}

struct SampleCheck {
    name: &'static str,
    count: usize,
    fail: Option<(Vec<f64>, String)>,
    overflow: Option<Vec<f64>>,
}

impl SampleCheck {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            count: 0,
            fail: None,
            overflow: None,
        }
    }

    fn record(&mut self, x: &[f64], value: f64, ok: bool, detail: impl FnOnce() -> String) {
        if self.fail.is_some() {
            return;
        }
        if !value.is_finite() {
            self.overflow.get_or_insert_with(|| x.to_vec());
            return;
        }
        self.count += 1;
        if !ok {
            self.fail = Some((x.to_vec(), detail()));
        }
    }

    fn finish(self) -> AssumptionCheck {
        let outcome = match (self.fail, self.overflow) {
            (Some((at, detail)), _) => CheckOutcome::Fail { at, detail },
            (None, Some(at)) => CheckOutcome::Untestable { at },
            (None, None) => CheckOutcome::Pass {
                samples: self.count,
            },
        };
        AssumptionCheck {
            name: self.name,
            outcome,
        }
    }
}

/// Samples used by [`validate`]'s coarse assumption sweep.
const VALIDATE_SAMPLES: usize = 64;

/// Structural invariants plus a coarse assumption sweep. Empty means nothing
/// was falsified; it never proves the assumptions.
pub fn validate<'a>(problem: impl Into<ProblemRef<'a>>) -> Vec<Violation> {
    let problem = problem.into();
    let mut out = Vec::new();
    match problem {
        ProblemRef::Scalar(p) => {
            if !(p.x0 > 0.0 && p.x0.is_finite()) {
                out.push(Violation(format!("x0 = {} must be positive", p.x0)));
            }
            if !(p.k > 1.0) {
                out.push(Violation(format!("k = {} must exceed 1", p.k)));
            }
            if let Some(t) = p.exact_tau {
                if !(t > 0.0) {
                    out.push(Violation(format!("exact tau = {t} must be positive")));
                }
            }
        }
        ProblemRef::Vector(p) => {
            if p.dim == 0 {
                out.push(Violation("dimension must be positive".into()));
            }
            if p.x0.len() != p.dim {
                out.push(Violation(format!(
                    "x0 has length {} but dim = {}",
                    p.x0.len(),
                    p.dim
                )));
            }
            if !(p.delta > 0.0) {
                out.push(Violation(format!("delta = {} must be positive", p.delta)));
            }
            // within rounding of the boundary counts as on it
            let norm = linalg::l2(&p.x0);
            if norm <= p.delta * (1.0 + ROUNDING_SLACK) {
                out.push(Violation(format!(
                    "|x0| = {norm} must exceed delta = {}",
                    p.delta
                )));
            }
            if !(p.growth.alpha > 0.0) {
                out.push(Violation(format!(
                    "alpha = {} must be positive",
                    p.growth.alpha
                )));
            }
            if !(p.growth.c_check > 0.0) {
                out.push(Violation(format!(
                    "C = {} must be positive",
                    p.growth.c_check
                )));
            }
            if p.growth.kind == GrowthKind::Logarithmic && !(p.delta > 1.0) {
                out.push(Violation(format!(
                    "logarithmic growth needs delta > 1, got {}",
                    p.delta
                )));
            }
        }
    }
    let structural_ok = out.is_empty();
    if structural_ok {
        let report = check_assumptions(problem, VALIDATE_SAMPLES, 1);
        for c in report.failures() {
            if let CheckOutcome::Fail { at, detail } = &c.outcome {
                out.push(Violation(format!("{} fails at x={at:?}: {detail}", c.name)));
            }
        }
    }
    out
}
