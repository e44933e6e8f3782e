//! Comparison methods: arc-length integration with an embedded
//! Dormand–Prince 5(4) pair, and a rescaling method for power laws.

use std::time::Instant;

use thiserror::Error;

use crate::linalg;
use crate::problem::{FinalState, ProblemRef, RunResult};
use crate::thresholds::{self, Radius, ThresholdError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("step budget of {max_steps} exhausted")]
    StepBudgetExceeded { max_steps: u64 },
    #[error("arc-length step {step} fell below 1e-300")]
    MinStepUnderflow { step: f64 },
    #[error("state norm {norm} exceeded the overflow guard before reaching r = {radius}")]
    Overflow { norm: f64, radius: f64 },
    #[error("rescaling needs b(x) = x^p with p > 1, got p = {0}")]
    InvalidExponent(f64),
    #[error("rescaling threshold M = {m} must exceed 1 and x0 = {x0}")]
    InvalidThreshold { m: f64, x0: f64 },
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
}

impl BaselineError {
    pub fn variant(&self) -> &'static str {
        match self {
            BaselineError::InvalidTolerance(_) => "InvalidTolerance",
            BaselineError::StepBudgetExceeded { .. } => "StepBudgetExceeded",
            BaselineError::MinStepUnderflow { .. } => "MinStepUnderflow",
            BaselineError::Overflow { .. } => "Overflow",
            BaselineError::InvalidExponent(_) => "InvalidExponent",
            BaselineError::InvalidThreshold { .. } => "InvalidThreshold",
            BaselineError::Threshold(_) => "Threshold",
        }
    }
}

// Dormand–Prince 5(4) tableau. The nodes cᵢ are unused: the augmented
// system is autonomous.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// 5th-order weights equal row 7; E = b5 − b4 gives the embedded error.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FACTOR_MIN: f64 = 0.2;
const FACTOR_MAX: f64 = 5.0;
const MIN_STEP: f64 = 1e-300;
const OVERFLOW_GUARD: f64 = 1e300;
pub const DEFAULT_MAX_ATTEMPTS: u64 = 1 << 26;

/// `d(x, t)/ds = (b(x), 1)/√(1 + |b(x)|²)`; the last slot is `t`.
fn arclength_rhs(problem: ProblemRef<'_>, y: &[f64], out: &mut [f64]) {
    let n = y.len() - 1;
    match problem {
        ProblemRef::Scalar(p) => out[0] = (p.rhs)(y[0]),
        ProblemRef::Vector(p) => (p.rhs)(&y[..n], &mut out[..n]),
    }
    out[n] = 1.0;
    let norm = linalg::l2(out);
    out.iter_mut().for_each(|c| *c /= norm);
    debug_assert!(
        (linalg::l2(out) - 1.0).abs() <= 1e-12,
        "arc-length field must have unit norm"
    );
}

/// Arc-length integration until the first accepted step with `|x| ≥ r(ε)`.
/// `steps` counts every right-hand-side evaluation, accepted or rejected.
pub fn solve_arclength<'a>(
    problem: impl Into<ProblemRef<'a>>,
    eps: f64,
    rk_tol: f64,
) -> Result<RunResult, BaselineError> {
    solve_arclength_with_budget(problem, eps, rk_tol, DEFAULT_MAX_ATTEMPTS)
}

pub fn solve_arclength_with_budget<'a>(
    problem: impl Into<ProblemRef<'a>>,
    eps: f64,
    rk_tol: f64,
    max_attempts: u64,
) -> Result<RunResult, BaselineError> {
    let problem = problem.into();
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(BaselineError::InvalidTolerance(eps));
    }
    if !(rk_tol > 0.0 && rk_tol.is_finite()) {
        return Err(BaselineError::InvalidTolerance(rk_tol));
    }
    let start = Instant::now();
    let radius = match problem {
        ProblemRef::Scalar(p) => thresholds::scalar_radius(p, eps)?,
        ProblemRef::Vector(p) => thresholds::vector_radius(p, eps)?,
    };
    let r = radius.value;
    let mut y: Vec<f64> = match problem {
        ProblemRef::Scalar(p) => vec![p.x0, 0.0],
        ProblemRef::Vector(p) => p.x0.iter().copied().chain([0.0]).collect(),
    };
    let n = y.len() - 1;
    let dim = y.len();
    let state_norm = |y: &[f64]| linalg::l2(&y[..n]);

    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; dim]);
    let mut tmp = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut evals: u64 = 0;

    arclength_rhs(problem, &y, &mut k[0]);
    evals += 1;

    let mut warnings = Vec::new();
    if state_norm(&y) >= r {
        warnings.push(format!(
            "radius {radius} does not exceed |x0|; no steps taken"
        ));
    }
    // unit-speed field: an O(|y0|) first step in s is safe to try
    let mut h = 0.01 * linalg::l2(&y).max(1e-2);
    let mut attempts: u64 = 0;
    while state_norm(&y) < r {
        if attempts >= max_attempts {
            return Err(BaselineError::StepBudgetExceeded {
                max_steps: max_attempts,
            });
        }
        attempts += 1;
        if h < MIN_STEP {
            return Err(BaselineError::MinStepUnderflow { step: h });
        }
        let stage = |tmp: &mut [f64], k: &[Vec<f64>; 7], coeffs: &[(usize, f64)]| {
            for i in 0..dim {
                let mut acc = 0.0;
                for &(j, a) in coeffs {
                    acc += a * k[j][i];
                }
                tmp[i] = y[i] + h * acc;
            }
        };
        stage(&mut tmp, &k, &[(0, A21)]);
        arclength_rhs(problem, &tmp, &mut k[1]);
        stage(&mut tmp, &k, &[(0, A31), (1, A32)]);
        arclength_rhs(problem, &tmp, &mut k[2]);
        stage(&mut tmp, &k, &[(0, A41), (1, A42), (2, A43)]);
        arclength_rhs(problem, &tmp, &mut k[3]);
        stage(&mut tmp, &k, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        arclength_rhs(problem, &tmp, &mut k[4]);
        stage(
            &mut tmp,
            &k,
            &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)],
        );
        arclength_rhs(problem, &tmp, &mut k[5]);
        stage(
            &mut y_new,
            &k,
            &[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)],
        );
        arclength_rhs(problem, &y_new, &mut k[6]);
        evals += 6;

        let mut sum = 0.0;
        for i in 0..dim {
            let e = h
                * (E1 * k[0][i]
                    + E3 * k[2][i]
                    + E4 * k[3][i]
                    + E5 * k[4][i]
                    + E6 * k[5][i]
                    + E7 * k[6][i]);
            let scale = rk_tol + rk_tol * y[i].abs().max(y_new[i].abs());
            sum += (e / scale).powi(2);
        }
        let err = (sum / dim as f64).sqrt();
        let factor = if err == 0.0 {
            FACTOR_MAX
        } else {
            (SAFETY * err.powf(-0.2)).clamp(FACTOR_MIN, FACTOR_MAX)
        };
        if err <= 1.0 {
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            let norm = state_norm(&y);
            if !(norm <= OVERFLOW_GUARD) {
                return Err(BaselineError::Overflow { norm, radius: r });
            }
            h *= factor;
        } else {
            h *= factor.min(1.0);
        }
    }
    let final_state = match problem {
        ProblemRef::Scalar(_) => FinalState::Scalar(y[0]),
        ProblemRef::Vector(_) => FinalState::Vector(y[..n].to_vec()),
    };
    Ok(RunResult {
        tau_hat: y[n],
        steps: evals,
        final_state,
        radius_used: radius,
        epsilon: eps,
        wall_time: start.elapsed(),
        trace: None,
        warnings,
    })
}

/// Rescaling run with per-cycle internal times.
#[derive(Debug, Clone)]
pub struct RescalingOutcome {
    pub run: RunResult,
    /// Number of completed cycles `J + 1`.
    pub cycles: usize,
    /// Internal time `T_j` of each cycle, before the `M^{(1−p)j}` scaling.
    pub cycle_times: Vec<f64>,
}

const MAX_RESCALING_STEPS: u64 = 1 << 34;

/// Rescaling for `x′ = xᵖ`: uniform Euler on `y′ = yᵖ` until `y ≥ M`, then
/// restart from `y = 1` with time scaled by `M^{1−p}`, until the remaining
/// tail `M^{(1−p)(j+1)}/(p−1)` drops below `ε/2`. The uncomputed cycles are
/// summed as a geometric series of the last cycle's internal time.
pub fn solve_rescaling_1d(
    p: f64,
    x0: f64,
    m: f64,
    eps: f64,
) -> Result<RescalingOutcome, BaselineError> {
    if !(p > 1.0) {
        return Err(BaselineError::InvalidExponent(p));
    }
    if !(m > 1.0 && x0 > 0.0 && x0 < m) {
        return Err(BaselineError::InvalidThreshold { m, x0 });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(BaselineError::InvalidTolerance(eps));
    }
    let start = Instant::now();
    let ln_m = m.ln();
    let j_est = ((2.0 / ((p - 1.0) * eps)).ln() / ((p - 1.0) * ln_m))
        .ceil()
        .max(1.0);
    let h = eps / (2.0 * j_est * ln_m);
    let shrink = m.powf(1.0 - p);

    let mut tau = 0.0;
    let mut scale = 1.0;
    let mut steps: u64 = 0;
    let mut cycle_times = Vec::new();
    let mut y_end;
    loop {
        let mut y = if cycle_times.is_empty() { x0 } else { 1.0 };
        let mut t = 0.0;
        while y < m {
            if steps >= MAX_RESCALING_STEPS {
                return Err(BaselineError::StepBudgetExceeded {
                    max_steps: MAX_RESCALING_STEPS,
                });
            }
            y += y.powf(p) * h;
            t += h;
            steps += 1;
        }
        y_end = y;
        tau += scale * t;
        cycle_times.push(t);
        scale *= shrink;
        if cycle_times.len() >= 2 && scale / (p - 1.0) < 0.5 * eps {
            break;
        }
    }
    // cycles past the last one solve the same rescaled problem, so their
    // durations form a geometric series in the last internal time
    let t_last = cycle_times[cycle_times.len() - 1];
    tau += t_last * scale / (1.0 - shrink);
    let cycles = cycle_times.len();
    let ln_radius = cycles as f64 * ln_m;
    let run = RunResult {
        tau_hat: tau,
        steps,
        final_state: FinalState::LogScaled {
            signs: vec![1.0],
            ln_abs: vec![y_end.ln() + (cycles - 1) as f64 * ln_m],
        },
        radius_used: Radius::from_ln(ln_radius),
        epsilon: eps,
        wall_time: start.elapsed(),
        trace: None,
        warnings: Vec::new(),
    };
    Ok(RescalingOutcome {
        run,
        cycles,
        cycle_times,
    })
}
