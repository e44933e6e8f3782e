//! Truncation radius `r(ε)` for each threshold rule, and the matching bound
//! on the tail `|τ − τ_{r(ε)}|`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::problem::{GrowthKind, ProblemRef, ScalarFn, ScalarProblem, VectorProblem};

/// How the truncation radius is chosen.
#[derive(Clone)]
pub enum ThresholdRule {
    /// Scalar: `r` solves `b(r) = F⁻¹(ε)`.
    FInverse(ScalarFn),
    /// Scalar: `r` solves `b′(r) = ε⁻¹ log(ε⁻¹)`.
    BPrimeLog,
    /// Closed-form `r(ε)`.
    ExplicitRadius(ScalarFn),
    /// Closed-form `log r(ε)`, for radii beyond the `f64` range.
    ExplicitLogRadius(ScalarFn),
    /// ℝⁿ, polynomial growth: `r = (1/(Čαε))^{1/α}`.
    PolyNd,
    /// ℝⁿ, logarithmic growth: `r = exp((1/(Čαε))^{1/α})`.
    LogNd,
}

impl ThresholdRule {
    pub fn f_inverse(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ThresholdRule::FInverse(Arc::new(f))
    }

    pub fn explicit_radius(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ThresholdRule::ExplicitRadius(Arc::new(f))
    }

    pub fn explicit_log_radius(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ThresholdRule::ExplicitLogRadius(Arc::new(f))
    }

    /// The rule implied by a vector problem's growth class.
    pub fn for_growth(kind: GrowthKind) -> Self {
        match kind {
            GrowthKind::Polynomial => ThresholdRule::PolyNd,
            GrowthKind::Logarithmic => ThresholdRule::LogNd,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ThresholdRule::FInverse(_) => "finverse",
            ThresholdRule::BPrimeLog => "bprimelog",
            ThresholdRule::ExplicitRadius(_) => "radius",
            ThresholdRule::ExplicitLogRadius(_) => "log-radius",
            ThresholdRule::PolyNd => "poly-nd",
            ThresholdRule::LogNd => "log-nd",
        }
    }
}

impl fmt::Debug for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A radius kept together with its logarithm. `value` may be `+∞` when the
/// radius exceeds the `f64` range; `ln` is always finite for valid inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radius {
    pub value: f64,
    pub ln: f64,
}

impl Radius {
    pub fn new(value: f64) -> Self {
        Self {
            value,
            ln: value.ln(),
        }
    }

    pub fn from_ln(ln: f64) -> Self {
        Self {
            value: ln.exp(),
            ln,
        }
    }

    pub fn is_representable(&self) -> bool {
        self.value.is_finite()
    }
}

impl fmt::Display for Radius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.value.is_finite() {
            write!(f, "{}", self.value)
        } else {
            write!(f, "exp({})", self.ln)
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThresholdError {
    #[error("no bracket for the radius within {doublings} doublings from {start}")]
    BracketFailure { start: f64, doublings: usize },
    #[error("target function decreases between {lo} and {hi}")]
    NonMonotone { lo: f64, hi: f64 },
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error("rule {rule} does not apply to a {dim} problem")]
    RuleMismatch {
        rule: &'static str,
        dim: &'static str,
    },
    #[error("radius rule returned a non-finite or non-positive value {0}")]
    InvalidRadius(f64),
    #[error("growth constants must be positive (C = {c_check}, alpha = {alpha})")]
    InvalidGrowth { c_check: f64, alpha: f64 },
}

const MAX_DOUBLINGS: usize = 200;
const BISECTION_REL_WIDTH: f64 = 1e-12;
const NEWTON_POLISH_STEPS: usize = 3;

/// Smallest `x ≥ start` with `g(x) = 0` for increasing `g`: geometric
/// bracket expansion, bisection, then Newton polish when `dg` is known.
/// Returns `start` when `g(start) ≥ 0`.
pub fn solve_increasing(
    g: impl Fn(f64) -> f64,
    dg: Option<&dyn Fn(f64) -> f64>,
    start: f64,
) -> Result<f64, ThresholdError> {
    let g_start = g(start);
    if g_start >= 0.0 {
        return Ok(start);
    }
    let mut lo = start;
    let mut g_lo = g_start;
    let mut hi = if start > 0.0 { 2.0 * start } else { 1.0 };
    let mut found = false;
    for _ in 0..MAX_DOUBLINGS {
        let g_hi = g(hi);
        if g_hi.is_nan() {
            return Err(ThresholdError::NonMonotone { lo, hi });
        }
        if g_hi < g_lo {
            return Err(ThresholdError::NonMonotone { lo, hi });
        }
        if g_hi >= 0.0 {
            found = true;
            break;
        }
        lo = hi;
        g_lo = g_hi;
        hi *= 2.0;
    }
    if !found {
        return Err(ThresholdError::BracketFailure {
            start,
            doublings: MAX_DOUBLINGS,
        });
    }

    while hi - lo > BISECTION_REL_WIDTH * hi {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let g_hi = g(hi);
    let (mut x, mut gx) = if g_hi.is_finite() && g_hi.abs() <= g(lo).abs() {
        (hi, g_hi)
    } else {
        (lo, g(lo))
    };
    if let Some(dg) = dg {
        for _ in 0..NEWTON_POLISH_STEPS {
            if gx == 0.0 {
                break;
            }
            let slope = dg(x);
            if !(slope > 0.0 && slope.is_finite()) {
                break;
            }
            let next = x - gx / slope;
            if !(next >= lo && next <= hi) {
                break;
            }
            let g_next = g(next);
            if !(g_next.abs() < gx.abs()) {
                break;
            }
            x = next;
            gx = g_next;
        }
    }
    Ok(x)
}

/// `r(ε)` for a problem under the given rule.
pub fn radius<'a>(
    rule: &ThresholdRule,
    problem: impl Into<ProblemRef<'a>>,
    eps: f64,
) -> Result<Radius, ThresholdError> {
    if !(eps > 0.0) {
        return Err(ThresholdError::NonPositiveTolerance(eps));
    }
    match (rule, problem.into()) {
        (ThresholdRule::FInverse(f_inv), ProblemRef::Scalar(p)) => {
            let target = f_inv(eps);
            let rhs = &p.rhs;
            let deriv = &p.rhs_deriv;
            let dg = |x: f64| deriv(x);
            solve_increasing(|x| rhs(x) - target, Some(&dg), p.x0).map(Radius::new)
        }
        (ThresholdRule::BPrimeLog, ProblemRef::Scalar(p)) => {
            let target = eps.recip() * eps.recip().ln();
            let deriv = &p.rhs_deriv;
            match &p.rhs_second {
                Some(second) => {
                    let dg = |x: f64| second(x);
                    solve_increasing(|x| deriv(x) - target, Some(&dg), p.x0)
                }
                None => solve_increasing(|x| deriv(x) - target, None, p.x0),
            }
            .map(Radius::new)
        }
        (ThresholdRule::ExplicitRadius(r), _) => {
            let v = r(eps);
            if !(v > 0.0) || v.is_nan() {
                return Err(ThresholdError::InvalidRadius(v));
            }
            Ok(Radius::new(v))
        }
        (ThresholdRule::ExplicitLogRadius(ln_r), _) => {
            let v = ln_r(eps);
            if v.is_nan() || v == f64::INFINITY {
                return Err(ThresholdError::InvalidRadius(v));
            }
            Ok(Radius::from_ln(v))
        }
        (ThresholdRule::PolyNd, ProblemRef::Vector(p)) => {
            let (c, a) = growth_constants(p)?;
            let base = 1.0 / (c * a * eps);
            let value = base.powf(1.0 / a);
            Ok(Radius {
                value,
                ln: base.ln() / a,
            })
        }
        (ThresholdRule::LogNd, ProblemRef::Vector(p)) => {
            let (c, a) = growth_constants(p)?;
            Ok(Radius::from_ln((1.0 / (c * a * eps)).powf(1.0 / a)))
        }
        (rule, ProblemRef::Scalar(_)) => Err(ThresholdError::RuleMismatch {
            rule: rule.name(),
            dim: "scalar",
        }),
        (rule, ProblemRef::Vector(_)) => Err(ThresholdError::RuleMismatch {
            rule: rule.name(),
            dim: "vector",
        }),
    }
}

fn growth_constants(p: &VectorProblem) -> Result<(f64, f64), ThresholdError> {
    let (c, a) = (p.growth.c_check, p.growth.alpha);
    if c > 0.0 && a > 0.0 {
        Ok((c, a))
    } else {
        Err(ThresholdError::InvalidGrowth {
            c_check: c,
            alpha: a,
        })
    }
}

/// `r(ε)` for a scalar problem under its own rule.
pub fn scalar_radius(p: &ScalarProblem, eps: f64) -> Result<Radius, ThresholdError> {
    radius(&p.threshold, p, eps)
}

/// `r(ε)` for a vector problem under the rule its growth class implies.
pub fn vector_radius(p: &VectorProblem, eps: f64) -> Result<Radius, ThresholdError> {
    radius(&ThresholdRule::for_growth(p.growth.kind), p, eps)
}

/// Analytic bound on `|τ − τ_{r(ε)}|` implied by the rule.
pub fn tau_tail_bound<'a>(
    rule: &ThresholdRule,
    problem: impl Into<ProblemRef<'a>>,
    eps: f64,
) -> Result<f64, ThresholdError> {
    let problem = problem.into();
    match (rule, problem) {
        (ThresholdRule::BPrimeLog, ProblemRef::Scalar(p)) => {
            let r = radius(rule, problem, eps)?;
            let d = (p.rhs_deriv)(r.value);
            Ok((p.log_constant + 1.0) * d.ln() / d)
        }
        _ => {
            radius(rule, problem, eps)?;
            Ok(eps)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{JacobianAccess, Matrix};
    use crate::problem::GrowthSpec;

    fn square() -> ScalarProblem {
        ScalarProblem::new(
            Arc::new(|x| x * x),
            Arc::new(|x| 2.0 * x),
            0.5,
            1.1,
            ThresholdRule::f_inverse(|e: f64| e.powi(-2)),
        )
    }

    fn exp_square() -> ScalarProblem {
        ScalarProblem::new(
            Arc::new(|x: f64| (x * x).exp()),
            Arc::new(|x: f64| 2.0 * x * (x * x).exp()),
            1.0,
            1.1,
            ThresholdRule::BPrimeLog,
        )
        .with_second(Arc::new(|x: f64| (2.0 + 4.0 * x * x) * (x * x).exp()))
    }

    fn vector(growth: GrowthSpec) -> VectorProblem {
        VectorProblem::new(
            Arc::new(|x: &[f64], out: &mut [f64]| out.copy_from_slice(x)),
            JacobianAccess::Dense(Arc::new(|_x: &[f64], m: &mut Matrix| {
                *m = Matrix::diag(&[1.0, 1.0])
            })),
            growth,
            2.0,
            vec![3.0, 4.0],
        )
    }

    #[test]
    fn square_radius_is_inverse_tolerance() {
        let p = square();
        let r = scalar_radius(&p, 2f64.powi(-10)).unwrap();
        assert_eq!(r.value, 1024.0);
        for k in 1..=30 {
            let eps = 2f64.powi(-k);
            let r = scalar_radius(&p, eps).unwrap();
            assert!((r.value * eps - 1.0).abs() <= 1e-12);
        }
        for eps in [0.3, 1e-3, 7.7e-5] {
            let r = scalar_radius(&p, eps).unwrap();
            assert!((r.value * eps - 1.0).abs() <= 1e-12, "{eps}");
            assert!(((r.value * r.value) - eps.powi(-2)).abs() <= 1e-10 * eps.powi(-2));
        }
    }

    #[test]
    fn poly_and_log_closed_forms() {
        let r = vector_radius(&vector(GrowthSpec::polynomial(1.0, 2.0)), 0.005).unwrap();
        assert!((r.value - 10.0).abs() < 1e-12);
        let r = vector_radius(&vector(GrowthSpec::logarithmic(1.0, 1.0)), 0.25).unwrap();
        assert!((r.value - 4f64.exp()).abs() < 1e-10);
        assert!((r.value - 54.59815).abs() < 1e-5);
        assert_eq!(r.ln, 4.0);
    }

    #[test]
    fn log_radius_beyond_f64_keeps_its_logarithm() {
        let r = vector_radius(&vector(GrowthSpec::logarithmic(1.0, 0.5)), 2f64.powi(-8)).unwrap();
        assert!(!r.is_representable());
        assert!((r.ln - (512f64).powi(2)).abs() < 1e-6);
    }

    #[test]
    fn bprime_log_root_substitutes_back() {
        let p = exp_square();
        let eps = 1e-4;
        let r = scalar_radius(&p, eps).unwrap().value;
        let target = 1e4 * 1e4f64.ln();
        assert!((target - 92103.4).abs() < 0.1);
        let back = 2.0 * r * (r * r).exp();
        assert!(
            (back - target).abs() <= 1e-10 * target,
            "{back} vs {target}"
        );
    }

    #[test]
    fn bprime_log_without_second_derivative_still_converges() {
        let mut p = exp_square();
        p.rhs_second = None;
        let eps = 1e-6;
        let r = scalar_radius(&p, eps).unwrap().value;
        let target = 1e6 * 1e6f64.ln();
        let back = 2.0 * r * (r * r).exp();
        assert!((back - target).abs() <= 1e-10 * target);
    }

    #[test]
    fn radii_grow_as_tolerance_shrinks() {
        let xlog = ScalarProblem::new(
            Arc::new(|x: f64| x * x.ln().powf(1.5)),
            Arc::new(|x: f64| x.ln().powf(1.5) + 1.5 * x.ln().sqrt()),
            2.0,
            1.1,
            ThresholdRule::explicit_log_radius(|e: f64| (0.5 * e).powf(-2.0)),
        );
        let scalars = [square(), exp_square(), xlog];
        let vectors = [
            vector(GrowthSpec::polynomial(1.0, 2.0)),
            vector(GrowthSpec::logarithmic(2.8, 0.5)),
        ];
        let grid: Vec<f64> = (0..=10).map(|k| 0.1 * 2f64.powi(-k)).collect();
        for p in &scalars {
            let rs: Vec<f64> = grid
                .iter()
                .map(|&e| scalar_radius(p, e).unwrap().ln)
                .collect();
            assert!(
                rs.windows(2).all(|w| w[1] >= w[0]),
                "{:?}: {rs:?}",
                p.threshold
            );
        }
        for p in &vectors {
            let rs: Vec<f64> = grid
                .iter()
                .map(|&e| vector_radius(p, e).unwrap().ln)
                .collect();
            assert!(rs.windows(2).all(|w| w[1] >= w[0]), "{rs:?}");
        }
    }

    #[test]
    fn tail_bounds() {
        let p = square();
        let eps = 2f64.powi(-10);
        assert_eq!(tau_tail_bound(&p.threshold, &p, eps).unwrap(), eps);
        // closed-form tail ∫_r^∞ x⁻² dx = 1/r
        let r = scalar_radius(&p, eps).unwrap().value;
        assert_eq!(1.0 / r, eps);

        let v = vector(GrowthSpec::polynomial(1.0, 2.0));
        assert_eq!(
            tau_tail_bound(&ThresholdRule::PolyNd, &v, 0.37).unwrap(),
            0.37
        );

        // ∫_r^∞ dx/(x log(x)^{1+c}) = 1/(c log(r)^c) with r = e^{(cε)^{-1/c}}
        let c = 0.5;
        let rule = ThresholdRule::explicit_log_radius(move |e: f64| (c * e).powf(-1.0 / c));
        let eps = 0.01;
        let r = radius(&rule, &p, eps).unwrap();
        let tail = 1.0 / (c * r.ln.powf(c));
        assert!((tail - eps).abs() < 1e-15);
        assert_eq!(tau_tail_bound(&rule, &p, eps).unwrap(), eps);

        let e = exp_square();
        let eps = 1e-4;
        let r = scalar_radius(&e, eps).unwrap().value;
        let d = 2.0 * r * (r * r).exp();
        let bound = tau_tail_bound(&e.threshold, &e, eps).unwrap();
        assert!((bound - 2.0 * d.ln() / d).abs() < 1e-15);
    }

    #[test]
    fn degenerate_radius_clamps_to_start() {
        let p = square();
        // r = 1/ε = 0.25 lies below x0
        assert_eq!(scalar_radius(&p, 4.0).unwrap().value, 0.5);
    }

    #[test]
    fn errors() {
        let p = square();
        assert!(matches!(
            scalar_radius(&p, 0.0),
            Err(ThresholdError::NonPositiveTolerance(_))
        ));
        assert!(matches!(
            radius(&ThresholdRule::PolyNd, &p, 0.1),
            Err(ThresholdError::RuleMismatch { .. })
        ));
        let bounded = ScalarProblem::new(
            Arc::new(|x: f64| x.atan()),
            Arc::new(|x: f64| 1.0 / (1.0 + x * x)),
            1.0,
            1.1,
            ThresholdRule::f_inverse(|e: f64| 1.0 / e),
        );
        assert!(matches!(
            scalar_radius(&bounded, 0.1),
            Err(ThresholdError::BracketFailure { .. })
        ));
        let decreasing = ScalarProblem::new(
            Arc::new(|x: f64| 1.0 / x),
            Arc::new(|x: f64| -1.0 / (x * x)),
            1.0,
            1.1,
            ThresholdRule::f_inverse(|e: f64| 1.0 / e),
        );
        assert!(matches!(
            scalar_radius(&decreasing, 0.1),
            Err(ThresholdError::NonMonotone { .. })
        ));
    }
}
