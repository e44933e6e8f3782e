//! Built-in experiment problems and the reaction–diffusion builder.

use std::f64::consts::PI;
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::{self, JacobianAccess, Matrix};
use crate::problem::{
    GrowthSpec, LogScaleField, Problem, ScalarLogScale, ScalarProblem, VectorProblem,
};
use crate::stepping::StepLaw;
use crate::thresholds::ThresholdRule;

/// Where a problem's reference blow-up time comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Exact(f64),
    /// Finest run of the problem's adaptive method. `published_eps` is the
    /// published protocol; `eps` is the desk-scale substitute used by default.
    Pseudo {
        eps: f64,
        published_eps: f64,
    },
    /// User-defined problems with no known blow-up time.
    Unknown,
}

impl Reference {
    pub fn kind(&self) -> &'static str {
        match self {
            Reference::Exact(_) => "exact",
            Reference::Pseudo { .. } => "pseudo",
            Reference::Unknown => "none",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub id: String,
    pub problem: Problem,
    /// The first law is the problem's adaptive method.
    pub default_laws: Vec<StepLaw>,
    pub reference: Reference,
    pub notes: String,
    /// Exponent `p` when `b(x) = xᵖ`, enabling the rescaling baseline.
    pub power_law: Option<f64>,
}

/// Parameters of the parameterised entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogOptions {
    /// Exponent offset `c` of `xlog_c` and `slowlog_c`.
    pub c: f64,
    /// Grid size `m` of `rd`.
    pub m: usize,
}

impl Default for CatalogOptions {
    fn default() -> Self {
        Self { c: 0.5, m: 32 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("unknown problem id {0:?}; known ids: {ids}", ids = list().join(", "))]
    UnknownId(String),
    #[error("parameter {name} = {value} is out of range: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

const IDS: [&str; 7] = [
    "sq",
    "expsq",
    "xlog_c",
    "uncoupled",
    "coupled",
    "slowlog_c",
    "rd",
];

pub fn list() -> Vec<&'static str> {
    IDS.to_vec()
}

pub fn get(id: &str, opts: CatalogOptions) -> Result<CatalogEntry, CatalogError> {
    let needs_c = matches!(id, "xlog_c" | "slowlog_c");
    if needs_c && !(opts.c > 0.0) {
        return Err(CatalogError::InvalidParameter {
            name: "c",
            value: opts.c,
            reason: "must be positive",
        });
    }
    match id {
        "sq" => Ok(square()),
        "expsq" => Ok(exp_square()),
        "xlog_c" => Ok(x_log(opts.c)),
        "uncoupled" => Ok(uncoupled()),
        "coupled" => Ok(coupled()),
        "slowlog_c" => Ok(slow_log(opts.c)),
        "rd" => {
            if opts.m < 2 {
                return Err(CatalogError::InvalidParameter {
                    name: "m",
                    value: opts.m as f64,
                    reason: "needs at least 2 cells",
                });
            }
            Ok(reaction_diffusion_entry(opts.m))
        }
        other => Err(CatalogError::UnknownId(other.to_string())),
    }
}

fn square() -> CatalogEntry {
    let problem = ScalarProblem::new(
        Arc::new(|x| x * x),
        Arc::new(|x| 2.0 * x),
        0.5,
        1.1,
        ThresholdRule::f_inverse(|e: f64| e.powi(-2)),
    )
    .with_second(Arc::new(|_| 2.0))
    .with_exact_tau(2.0);
    CatalogEntry {
        id: "sq".into(),
        problem: Problem::Scalar(problem),
        default_laws: vec![
            StepLaw::Adaptive1D,
            StepLaw::Taylor1D { m_bar: 2 },
            StepLaw::Uniform1D,
        ],
        reference: Reference::Exact(2.0),
        notes: "b = x^2 from x0 = 0.5; F^-1(eps) = eps^-2 so r = 1/eps".into(),
        power_law: Some(2.0),
    }
}

fn exp_square() -> CatalogEntry {
    let problem = ScalarProblem::new(
        Arc::new(|x: f64| (x * x).exp()),
        Arc::new(|x: f64| 2.0 * x * (x * x).exp()),
        1.0,
        1.1,
        ThresholdRule::BPrimeLog,
    )
    .with_second(Arc::new(|x: f64| (2.0 + 4.0 * x * x) * (x * x).exp()))
    // x ≤ 2x·e^{x²} = b′(x) on [1, ∞)
    .with_log_constant(1.0);
    CatalogEntry {
        id: "expsq".into(),
        problem: Problem::Scalar(problem),
        default_laws: vec![StepLaw::Adaptive1D, StepLaw::Taylor1D { m_bar: 2 }, StepLaw::Uniform1D],
        reference: Reference::Pseudo {
            eps: 2f64.powi(-24),
            published_eps: 2f64.powi(-33),
        },
        notes: "b = exp(x^2) from x0 = 1; radius from b'(r) = log(1/eps)/eps; reference at 2^-24 (published: 2^-33)".into(),
        power_law: None,
    }
}

/// `b(x) = x·log(x)^{1+c}` carried as `u = log x`.
struct XLogField {
    c: f64,
}

impl ScalarLogScale for XLogField {
    fn growth_rate(&self, ln_x: f64) -> f64 {
        ln_x.powf(1.0 + self.c)
    }

    fn deriv(&self, ln_x: f64) -> f64 {
        ln_x.powf(1.0 + self.c) + (1.0 + self.c) * ln_x.powf(self.c)
    }
}

fn x_log(c: f64) -> CatalogEntry {
    let p = 1.0 + c;
    let tau = 1.0 / (c * 2f64.ln().powf(c));
    let problem = ScalarProblem::new(
        Arc::new(move |x: f64| x * x.ln().powf(p)),
        Arc::new(move |x: f64| x.ln().powf(p) + p * x.ln().powf(c)),
        2.0,
        1.1,
        ThresholdRule::explicit_log_radius(move |e: f64| (c * e).powf(-1.0 / c)),
    )
    .with_second(Arc::new(move |x: f64| {
        (p * x.ln().powf(c) + p * c * x.ln().powf(c - 1.0)) / x
    }))
    .with_exact_tau(tau)
    .with_log_scale(Arc::new(XLogField { c }));
    CatalogEntry {
        id: "xlog_c".into(),
        problem: Problem::Scalar(problem),
        default_laws: vec![StepLaw::Adaptive1D, StepLaw::Uniform1D],
        reference: Reference::Exact(tau),
        notes: format!(
            "b = x log(x)^(1+c) with c = {c}; r = exp((c eps)^(-1/c)), integrated in log x"
        ),
        power_law: None,
    }
}

fn uncoupled() -> CatalogEntry {
    let problem = VectorProblem::new(
        Arc::new(|x: &[f64], out: &mut [f64]| {
            out[0] = x[0].powi(3);
            out[1] = x[1].powi(5);
        }),
        JacobianAccess::Dense(Arc::new(|x: &[f64], m: &mut Matrix| {
            m.fill(0.0);
            m[(0, 0)] = 3.0 * x[0] * x[0];
            m[(1, 1)] = 5.0 * x[1].powi(4);
        })),
        // min of (x₁⁴ + x₂⁶)/|x|⁴ over |x| ≥ √3 is about 0.548
        GrowthSpec::polynomial(0.5, 2.0),
        3f64.sqrt() * (1.0 - 1e-9),
        vec![2f64.sqrt(), 1.0],
    )
    .with_exact_tau(0.25)
    .with_uniform_exponent(2.0);
    CatalogEntry {
        id: "uncoupled".into(),
        problem: Problem::Vector(problem),
        default_laws: vec![
            StepLaw::AdaptiveND,
            StepLaw::UniformND,
            StepLaw::LogUniformND,
        ],
        reference: Reference::Exact(0.25),
        notes:
            "b = (x1^3, x2^5) from (sqrt 2, 1); both components blow up at 1/4; C = 0.5, alpha = 2"
                .into(),
        power_law: None,
    }
}

fn coupled() -> CatalogEntry {
    let problem = VectorProblem::new(
        Arc::new(|x: &[f64], out: &mut [f64]| {
            let s = x[0] * x[0] + x[1] * x[1];
            out[0] = x[0] * s;
            out[1] = x[1] * s;
        }),
        JacobianAccess::Dense(Arc::new(|x: &[f64], m: &mut Matrix| {
            let (a, b) = (x[0], x[1]);
            m[(0, 0)] = 3.0 * a * a + b * b;
            m[(0, 1)] = 2.0 * a * b;
            m[(1, 0)] = 2.0 * a * b;
            m[(1, 1)] = a * a + 3.0 * b * b;
        })),
        GrowthSpec::polynomial(1.0, 2.0),
        5f64.sqrt() * (1.0 - 1e-9),
        vec![1.0, 2.0],
    )
    .with_uniform_exponent(2.0);
    CatalogEntry {
        id: "coupled".into(),
        problem: Problem::Vector(problem),
        default_laws: vec![StepLaw::AdaptiveND, StepLaw::UniformND, StepLaw::LogUniformND],
        reference: Reference::Pseudo {
            eps: 2f64.powi(-20),
            published_eps: 2f64.powi(-27),
        },
        notes: "b = (x1^3 + x1 x2^2, x2^3 + x1^2 x2) from (1, 2); reference at 2^-20 (published: 2^-27)".into(),
        power_law: None,
    }
}

/// `bᵢ = xᵢ·Lᵢ^{1+c}` with `L₁ = log(x₁² + 2x₂²)`, `L₂ = log(2x₁² + x₂²)`.
struct SlowLogField {
    c: f64,
}

/// `log(e^a + e^b)`
fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl SlowLogField {
    /// `(L₁, L₂)` from `uᵢ = log|xᵢ|`.
    fn logs(u: &[f64]) -> (f64, f64) {
        let ln2 = 2f64.ln();
        (
            log_add_exp(2.0 * u[0], ln2 + 2.0 * u[1]),
            log_add_exp(ln2 + 2.0 * u[0], 2.0 * u[1]),
        )
    }

    /// Jacobian entries with `xᵢxⱼ/Sₖ = ±exp(uᵢ + uⱼ − Lₖ)`; `sign` is the
    /// sign of `x₁x₂`.
    fn jacobian(&self, u: &[f64], sign: f64) -> [f64; 4] {
        let p = 1.0 + self.c;
        let (l1, l2) = Self::logs(u);
        let cross = u[0] + u[1];
        [
            l1.powf(p) + 2.0 * p * l1.powf(self.c) * (2.0 * u[0] - l1).exp(),
            4.0 * p * l1.powf(self.c) * sign * (cross - l1).exp(),
            4.0 * p * l2.powf(self.c) * sign * (cross - l2).exp(),
            l2.powf(p) + 2.0 * p * l2.powf(self.c) * (2.0 * u[1] - l2).exp(),
        ]
    }
}

impl LogScaleField for SlowLogField {
    fn growth_rates(&self, ln_abs: &[f64], out: &mut [f64]) {
        let (l1, l2) = Self::logs(ln_abs);
        out[0] = l1.powf(1.0 + self.c);
        out[1] = l2.powf(1.0 + self.c);
    }

    fn jacobian_norm(&self, ln_abs: &[f64]) -> f64 {
        // the catalog start lies in the positive quadrant, which the flow keeps
        let [a, b, c, d] = self.jacobian(ln_abs, 1.0);
        linalg::singular_max_2x2(a, b, c, d)
    }
}

/// Conservative `Č` for the slow-growth field: minimum of
/// `b(x)·x/(|x|² log|x|^{1+α})` on a radial grid, rounded down to one decimal.
pub fn slow_log_c_check(c: f64) -> f64 {
    let field = SlowLogField { c };
    let p = 1.0 + c;
    let mut min = f64::INFINITY;
    let mut g = [0.0; 2];
    for i in 0..=200 {
        // radii from 5 to 10¹⁰⁰, log-spaced in log r
        let ln_r = 5f64.ln() * (100.0 * 10f64.ln() / 5f64.ln()).powf(i as f64 / 200.0);
        for j in 0..=360 {
            let theta = 0.5 * PI * j as f64 / 360.0;
            let (s, co) = theta.sin_cos();
            let u = [ln_r + co.max(1e-300).ln(), ln_r + s.max(1e-300).ln()];
            field.growth_rates(&u, &mut g);
            // b(x)·x/|x|² = cos²θ·g₁ + sin²θ·g₂
            let ratio = (co * co * g[0] + s * s * g[1]) / ln_r.powf(p);
            min = min.min(ratio);
        }
    }
    (min * 10.0).floor() / 10.0
}

fn slow_log(c: f64) -> CatalogEntry {
    let p = 1.0 + c;
    let c_check = slow_log_c_check(c);
    let rhs = Arc::new(move |x: &[f64], out: &mut [f64]| {
        let (a, b) = (x[0] * x[0], x[1] * x[1]);
        out[0] = x[0] * (a + 2.0 * b).ln().powf(p);
        out[1] = x[1] * (2.0 * a + b).ln().powf(p);
    });
    let jac = JacobianAccess::Dense(Arc::new(move |x: &[f64], m: &mut Matrix| {
        let (a, b) = (x[0] * x[0], x[1] * x[1]);
        let (s1, s2) = (a + 2.0 * b, 2.0 * a + b);
        let (l1, l2) = (s1.ln(), s2.ln());
        m[(0, 0)] = l1.powf(p) + 2.0 * p * l1.powf(c) * a / s1;
        m[(0, 1)] = 4.0 * p * l1.powf(c) * x[0] * x[1] / s1;
        m[(1, 0)] = 4.0 * p * l2.powf(c) * x[0] * x[1] / s2;
        m[(1, 1)] = l2.powf(p) + 2.0 * p * l2.powf(c) * b / s2;
    }));
    let problem = VectorProblem::new(
        rhs,
        jac,
        GrowthSpec::logarithmic(c_check, c),
        5.0 * (1.0 - 1e-9),
        vec![4.0, 3.0],
    )
    .with_log_scale(Arc::new(SlowLogField { c }));
    CatalogEntry {
        id: "slowlog_c".into(),
        problem: Problem::Vector(problem),
        default_laws: vec![
            StepLaw::LogNdImplicitN { n_guess: 1 },
            StepLaw::AdaptiveND,
            StepLaw::LogUniformND,
        ],
        reference: Reference::Pseudo {
            eps: 2f64.powi(-10),
            published_eps: 2f64.powi(-17),
        },
        notes: format!(
            "b_i = x_i log(...)^(1+c) with c = {c} from (4, 3); C = {c_check} from a radial grid; \
             integrated in log|x_i|; reference at 2^-10 (published: 2^-17)"
        ),
        power_law: None,
    }
}

/// Method-of-lines semi-discretisation of `u_t = u_xx + u²` on `(0, 1)` with
/// zero boundary values and `u(0, x) = 100 sin(πx)`: `m − 1` interior nodes.
pub fn build_reaction_diffusion(m: usize) -> VectorProblem {
    assert!(m >= 2, "reaction-diffusion grid needs m >= 2");
    let dim = m - 1;
    let m2 = (m * m) as f64;
    let rhs = Arc::new(move |x: &[f64], out: &mut [f64]| {
        for i in 0..dim {
            let left = if i > 0 { x[i - 1] } else { 0.0 };
            let right = if i + 1 < dim { x[i + 1] } else { 0.0 };
            out[i] = m2 * (left - 2.0 * x[i] + right) + x[i] * x[i];
        }
    });
    let jvp = Arc::new(move |x: &[f64], v: &[f64], out: &mut [f64]| {
        for i in 0..dim {
            let left = if i > 0 { v[i - 1] } else { 0.0 };
            let right = if i + 1 < dim { v[i + 1] } else { 0.0 };
            out[i] = m2 * (left - 2.0 * v[i] + right) + 2.0 * x[i] * v[i];
        }
    });
    let x0 = (1..m)
        .map(|k| 100.0 * (PI * k as f64 / m as f64).sin())
        .collect();
    let mut growth = GrowthSpec::polynomial(1.0, 1.0);
    growth.reconstructed = true;
    VectorProblem::new(
        rhs,
        JacobianAccess::MatrixFree {
            jvp,
            norm_hint: None,
            symmetric: true,
        },
        growth,
        1.0,
        x0,
    )
    .with_step_cap(1.0 / (2.0 * m2))
}

/// Dense tridiagonal Jacobian of [`build_reaction_diffusion`], for checks.
pub fn reaction_diffusion_dense_jacobian(m: usize, x: &[f64]) -> Matrix {
    let dim = m - 1;
    let m2 = (m * m) as f64;
    let mut j = Matrix::zeros(dim);
    for i in 0..dim {
        j[(i, i)] = -2.0 * m2 + 2.0 * x[i];
        if i > 0 {
            j[(i, i - 1)] = m2;
        }
        if i + 1 < dim {
            j[(i, i + 1)] = m2;
        }
    }
    j
}

fn reaction_diffusion_entry(m: usize) -> CatalogEntry {
    CatalogEntry {
        id: "rd".into(),
        problem: Problem::Vector(build_reaction_diffusion(m)),
        default_laws: vec![StepLaw::RDCapped, StepLaw::LogUniformND],
        reference: Reference::Pseudo {
            eps: 2f64.powi(-25),
            published_eps: 2f64.powi(-25),
        },
        notes: format!(
            "u_t = u_xx + u^2 on {m} cells; growth C = 1, alpha = 1 is a working reconstruction \
             (threshold rule not stated for this problem); step cap 1/(2 m^2)"
        ),
        power_law: None,
    }
}
