//! Step-size laws as pure functions of tolerance, state quantities and
//! problem metadata.

use std::fmt;

use thiserror::Error;

/// A named rule mapping `(ε, state, metadata)` to a step `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepLaw {
    /// `h = ε/√b′(min{kx̄, r})`
    Adaptive1D,
    /// `h = ε^{1/m̄}/b′(min{kx̄, r})^{m̄/(m̄+1)}` with a Taylor update of order `m̄`.
    Taylor1D { m_bar: u32 },
    /// `h = min{ε/log(b(r)/b(x₀)), 1/(2b′(r))}`
    Uniform1D,
    /// `h = ε/√max{‖b′(x̄)‖, 1}`
    AdaptiveND,
    /// `h = ε√|b(x̄)|/√|b′(x̄)b(x̄)|`
    AltND,
    /// `h = √(ε/(N·max{1, ‖b′(x̄)‖}))` for a guessed step count `N`.
    LogNdImplicitN { n_guess: u64 },
    /// `h = εᵖ` with the exponent stored on the problem.
    UniformND,
    /// `h = ε/log r(ε)`
    LogUniformND,
    /// `AltND` capped by the problem's stability limit.
    RDCapped,
}

impl StepLaw {
    pub fn is_scalar(&self) -> bool {
        matches!(
            self,
            StepLaw::Adaptive1D | StepLaw::Taylor1D { .. } | StepLaw::Uniform1D
        )
    }

    pub fn id(&self) -> String {
        match self {
            StepLaw::Adaptive1D => "adaptive".into(),
            StepLaw::Taylor1D { m_bar } => format!("taylor{m_bar}"),
            StepLaw::Uniform1D => "uniform".into(),
            StepLaw::AdaptiveND => "adaptive-nd".into(),
            StepLaw::AltND => "alt-nd".into(),
            StepLaw::LogNdImplicitN { .. } => "log-nd".into(),
            StepLaw::UniformND => "uniform-nd".into(),
            StepLaw::LogUniformND => "log-uniform-nd".into(),
            StepLaw::RDCapped => "rd-capped".into(),
        }
    }
}

impl fmt::Display for StepLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("b'({at}) = {value} is not positive")]
    NonpositiveDerivative { at: f64, value: f64 },
    #[error("|b'(x)b(x)| vanishes; fall back to the Jacobian-norm step")]
    DegenerateJvp,
    #[error("b(r) = {b_r} does not exceed b(x0) = {b_x0}")]
    FlatRange { b_x0: f64, b_r: f64 },
    #[error("log-uniform step needs r > e, got log r = {ln_r}")]
    RadiusTooSmall { ln_r: f64 },
    #[error("Taylor order {0} is unsupported; only 2 is implemented")]
    UnsupportedOrder(u32),
    #[error("step law {0} needs a uniform exponent on the problem")]
    MissingExponent(String),
}

fn probe_derivative(
    xbar: f64,
    k: f64,
    r: f64,
    b_deriv: impl Fn(f64) -> f64,
) -> Result<f64, StepError> {
    let at = (k * xbar).min(r);
    let value = b_deriv(at);
    if value > 0.0 {
        Ok(value)
    } else {
        Err(StepError::NonpositiveDerivative { at, value })
    }
}

pub fn h_adaptive_1d(
    eps: f64,
    xbar: f64,
    k: f64,
    r: f64,
    b_deriv: impl Fn(f64) -> f64,
) -> Result<f64, StepError> {
    Ok(eps / probe_derivative(xbar, k, r, b_deriv)?.sqrt())
}

pub fn h_taylor_1d(
    eps: f64,
    xbar: f64,
    k: f64,
    r: f64,
    b_deriv: impl Fn(f64) -> f64,
    m_bar: u32,
) -> Result<f64, StepError> {
    let d = probe_derivative(xbar, k, r, b_deriv)?;
    let m = f64::from(m_bar);
    Ok(eps.powf(1.0 / m) / d.powf(m / (m + 1.0)))
}

pub fn h_uniform_1d(
    eps: f64,
    x0: f64,
    r: f64,
    b: impl Fn(f64) -> f64,
    b_deriv: impl Fn(f64) -> f64,
) -> Result<f64, StepError> {
    let (b_x0, b_r) = (b(x0), b(r));
    if !(b_r > b_x0) {
        return Err(StepError::FlatRange { b_x0, b_r });
    }
    let d = b_deriv(r);
    if !(d > 0.0) {
        return Err(StepError::NonpositiveDerivative { at: r, value: d });
    }
    Ok((eps / (b_r / b_x0).ln()).min(0.5 / d))
}

pub fn h_adaptive_nd(eps: f64, jac_norm: f64) -> f64 {
    eps / jac_norm.max(1.0).sqrt()
}

pub fn h_alt_nd(eps: f64, b_norm: f64, jvp_norm: f64) -> Result<f64, StepError> {
    if !(jvp_norm > 0.0) {
        return Err(StepError::DegenerateJvp);
    }
    Ok(eps * b_norm.sqrt() / jvp_norm.sqrt())
}

pub fn h_log_nd(eps: f64, n_guess: u64, jac_norm: f64) -> f64 {
    (eps / (n_guess.max(1) as f64 * jac_norm.max(1.0))).sqrt()
}

/// `ε/log r`; see [`h_uniform_nd_ln`] for radii beyond `f64`.
pub fn h_uniform_nd(eps: f64, r: f64) -> Result<f64, StepError> {
    h_uniform_nd_ln(eps, r.ln())
}

pub fn h_uniform_nd_ln(eps: f64, ln_r: f64) -> Result<f64, StepError> {
    if !(ln_r > 1.0) {
        return Err(StepError::RadiusTooSmall { ln_r });
    }
    Ok(eps / ln_r)
}

/// `εᵖ`
pub fn h_power_uniform(eps: f64, exponent: f64) -> f64 {
    eps.powf(exponent)
}
