//! Upper and lower envelopes for heat kernels, the chaining lower bound,
//! empirical Fefferman–Phong and Moser ratios, and constant fitting.
//!
//! Every envelope is evaluated in log-space.

mod chain;
mod fit;
mod inequalities;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::explicit::check_time;
use crate::kernel::KernelValue;
use crate::potentials::{cube_average, m_beta, Cube, Potential};

pub use chain::{chain_plan, chain_steps, chained_lower_bound, default_sigma, ChainPlan};
pub use fit::{fit_constants, linspace, FitReport, SampleGrid, SlackPoint, GAUSSIAN_EXCESS_TOL};
pub use inequalities::{
    fefferman_phong_family, fefferman_phong_ratio, moser_ratio, Cylinder, TestFunction,
};

/// Envelope families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeFamily {
    /// `(4πt)^{−n/2} e^{−|x−y|²/4t}`.
    GaussianUpper,
    /// `c₀t^{−n/2} e^{−c₂|x−y|²/t} exp{−c₁ m_β(t av_{Z_√t(x)} V)^{1/2}}`.
    AverageUpper,
    /// The same with decay terms at both `x` and `y`; Gaussian coefficient
    /// `c₁`, decay coefficient `c₂`.
    SymmetrizedUpper,
    /// Two-regime envelope for quadratic potentials on the line.
    QuadraticSharp,
    /// Two-branch lower envelope; fitting uses the near branch only.
    LowerNear,
    /// Two-branch lower envelope; fitting sets the far-branch constants.
    LowerFar,
    /// Dirichlet heat kernel of a ball, `n ≥ 2`.
    BallLower,
    /// Dirichlet heat kernel of an interval.
    IntervalLower,
}

impl EnvelopeFamily {
    pub const ALL: [EnvelopeFamily; 8] = [
        EnvelopeFamily::GaussianUpper,
        EnvelopeFamily::AverageUpper,
        EnvelopeFamily::SymmetrizedUpper,
        EnvelopeFamily::QuadraticSharp,
        EnvelopeFamily::LowerNear,
        EnvelopeFamily::LowerFar,
        EnvelopeFamily::BallLower,
        EnvelopeFamily::IntervalLower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvelopeFamily::GaussianUpper => "gaussian_upper",
            EnvelopeFamily::AverageUpper => "average_upper",
            EnvelopeFamily::SymmetrizedUpper => "symmetrized_upper",
            EnvelopeFamily::QuadraticSharp => "quadratic_sharp",
            EnvelopeFamily::LowerNear => "lower_near",
            EnvelopeFamily::LowerFar => "lower_far",
            EnvelopeFamily::BallLower => "ball_lower",
            EnvelopeFamily::IntervalLower => "interval_lower",
        }
    }

    pub fn is_upper(self) -> bool {
        matches!(
            self,
            EnvelopeFamily::GaussianUpper
                | EnvelopeFamily::AverageUpper
                | EnvelopeFamily::SymmetrizedUpper
                | EnvelopeFamily::QuadraticSharp
        )
    }
}

/// Envelope constants. Unused fields are ignored by a family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub beta: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub n: usize,
}

impl Default for EnvelopeConstants {
    fn default() -> Self {
        EnvelopeConstants {
            c0: 1.0,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            beta: 1.0,
            kappa: 0.125,
            epsilon: 1.0,
            n: 1,
        }
    }
}

/// A family together with its constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundEnvelope {
    pub family: EnvelopeFamily,
    pub constants: EnvelopeConstants,
}

impl BoundEnvelope {
    pub fn new(family: EnvelopeFamily, constants: EnvelopeConstants) -> Result<Self> {
        let c = &constants;
        for (name, v) in [("c0", c.c0), ("c1", c.c1), ("c2", c.c2), ("c3", c.c3), ("epsilon", c.epsilon)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(param(format!("{name} must be finite and positive, got {v}")));
            }
        }
        if !(c.beta > 0.0 && c.beta <= 1.0) {
            return Err(param(format!("beta must lie in (0, 1], got {}", c.beta)));
        }
        if !(c.kappa > 0.0 && c.kappa < 1.0) {
            return Err(param(format!("kappa must lie in (0, 1), got {}", c.kappa)));
        }
        if c.n == 0 {
            return Err(param("dimension must be positive"));
        }
        Ok(BoundEnvelope { family, constants })
    }

    /// Evaluates a family that depends on `V` and two points. The Dirichlet
    /// families need extra data and have their own functions.
    pub fn eval(&self, v: &Potential, x: &[f64], y: &[f64], t: f64) -> Result<KernelValue> {
        match self.family {
            EnvelopeFamily::GaussianUpper => {
                crate::explicit::gaussian_kernel(self.constants.n, x, y, t)
            }
            EnvelopeFamily::AverageUpper => average_upper(v, self, x, y, t),
            EnvelopeFamily::SymmetrizedUpper => symmetrized_upper(v, self, x, y, t),
            EnvelopeFamily::QuadraticSharp => {
                one_dim(x, y)?;
                Ok(quadratic_sharp_envelope(self, x[0], y[0], t)?.value)
            }
            EnvelopeFamily::LowerNear | EnvelopeFamily::LowerFar => two_branch_lower(v, self, x, y, t),
            EnvelopeFamily::BallLower | EnvelopeFamily::IntervalLower => Err(param(format!(
                "{} needs domain data; use its dedicated function",
                self.family.name()
            ))),
        }
    }
}

fn one_dim(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != 1 || y.len() != 1 {
        return Err(param("this envelope is one-dimensional"));
    }
    Ok(())
}

fn check_points(e: &BoundEnvelope, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != e.constants.n || y.len() != e.constants.n {
        return Err(param(format!(
            "points must have dimension {}, got {} and {}",
            e.constants.n,
            x.len(),
            y.len()
        )));
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `m_β(t · av_{Z_√t(x)} V)^{1/2}`.
pub fn decay_argument(v: &Potential, beta: f64, x: &[f64], t: f64) -> Result<f64> {
    let cube = Cube::new(x.to_vec(), t.sqrt())?;
    let avg = cube_average(v, &cube)?;
    Ok(m_beta(t * avg, beta)?.sqrt())
}

/// Upper envelope with a decay term at `x`.
pub fn average_upper(v: &Potential, e: &BoundEnvelope, x: &[f64], y: &[f64], t: f64) -> Result<KernelValue> {
    check_time(t)?;
    let d2 = check_points(e, x, y)?;
    let c = &e.constants;
    let decay = decay_argument(v, c.beta, x, t)?;
    Ok(KernelValue::from_log(
        c.c0.ln() - 0.5 * c.n as f64 * t.ln() - c.c2 * d2 / t - c.c1 * decay,
    ))
}

/// Upper envelope with decay terms at `x` and `y`; symmetric in `(x, y)`.
pub fn symmetrized_upper(v: &Potential, e: &BoundEnvelope, x: &[f64], y: &[f64], t: f64) -> Result<KernelValue> {
    check_time(t)?;
    let d2 = check_points(e, x, y)?;
    let c = &e.constants;
    let decay = decay_argument(v, c.beta, x, t)? + decay_argument(v, c.beta, y, t)?;
    Ok(KernelValue::from_log(
        c.c0.ln() - 0.5 * c.n as f64 * t.ln() - c.c1 * d2 / t - c.c2 * decay,
    ))
}

/// Both regimes of the quadratic envelope at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharpValue {
    /// The regime that applies at `t` (`t ≤ 1` short, `t > 1` long).
    pub value: KernelValue,
    pub short_time: KernelValue,
    pub long_time: KernelValue,
}

/// `t ≤ 1`: `t^{−1/2} e^{−c₀|x−y|²/t} e^{−c₁t(x²+y²)}`;
/// `t > 1`: `e^{−c₂t} e^{−c₃(x²+y²)}`.
pub fn quadratic_sharp_envelope(e: &BoundEnvelope, x: f64, y: f64, t: f64) -> Result<SharpValue> {
    check_time(t)?;
    let c = &e.constants;
    let r2 = x * x + y * y;
    let short = KernelValue::from_log(-0.5 * t.ln() - c.c0 * (x - y) * (x - y) / t - c.c1 * t * r2);
    let long = KernelValue::from_log(-c.c2 * t - c.c3 * r2);
    Ok(SharpValue {
        value: if t <= 1.0 { short } else { long },
        short_time: short,
        long_time: long,
    })
}

/// Two-branch lower envelope: near (`|x−y| < κ√t`)
/// `c₀t^{−n/2} exp{−c₁t av_{Z_√t(x)} V}`; far
/// `c₀t^{−n/2} e^{−c₃|x−y|²/t} exp{−c₁t c₂^{|x−y|²/t} av_{Z_{t/|x−y|}(x)} V}`.
pub fn two_branch_lower(v: &Potential, e: &BoundEnvelope, x: &[f64], y: &[f64], t: f64) -> Result<KernelValue> {
    check_time(t)?;
    let d2 = check_points(e, x, y)?;
    let c = &e.constants;
    let d = d2.sqrt();
    let base = c.c0.ln() - 0.5 * c.n as f64 * t.ln();
    if is_near(d, t, c.kappa) {
        let avg = cube_average(v, &Cube::new(x.to_vec(), t.sqrt())?)?;
        Ok(KernelValue::from_log(base - c.c1 * t * avg))
    } else {
        let avg = cube_average(v, &Cube::new(x.to_vec(), t / d)?)?;
        let growth = (d2 / t * c.c2.ln()).exp();
        Ok(KernelValue::from_log(base - c.c3 * d2 / t - c.c1 * t * growth * avg))
    }
}

pub(crate) fn is_near(d: f64, t: f64, kappa: f64) -> bool {
    d < kappa * t.sqrt()
}

/// Interval lower envelope value and whether the factor was clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalLower {
    pub value: KernelValue,
    /// `1 − 2e^{−ε²/t}`.
    pub factor: f64,
    pub clamped: bool,
}

/// `(C/t^{1/2}) e^{−|x−y|²/4t} (1 − 2e^{−ε²/t})`, clamped at 0.
pub fn interval_lower(epsilon: f64, x: f64, y: f64, t: f64, c: f64) -> Result<IntervalLower> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(param(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(c > 0.0) {
        return Err(param(format!("C must be positive, got {c}")));
    }
    check_time(t)?;
    // 1 − 2e^{−a} = −expm1(ln 2 − a); values within rounding of the root
    // t = ε²/ln 2 count as zero.
    let factor = -(std::f64::consts::LN_2 - epsilon * epsilon / t).exp_m1();
    if factor <= 4.0 * f64::EPSILON {
        return Ok(IntervalLower {
            value: KernelValue::zero(),
            factor,
            clamped: true,
        });
    }
    let log = c.ln() - 0.5 * t.ln() - (x - y) * (x - y) / (4.0 * t) + factor.ln();
    Ok(IntervalLower {
        value: KernelValue::from_log(log),
        factor,
        clamped: false,
    })
}

/// A Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// `(C/t^{n/2}) e^{−π²n²t/4ε²} e^{−|x−y|²/4t}` for `x, y` whose segment
/// stays at distance more than `ε` from the boundary of `ball`.
pub fn ball_lower(
    ball: &Ball,
    epsilon: f64,
    delta: f64,
    x: &[f64],
    y: &[f64],
    t: f64,
    c: f64,
) -> Result<KernelValue> {
    let n = ball.center.len();
    if n < 2 {
        return Err(param("the ball envelope needs n ≥ 2"));
    }
    if !(epsilon > 0.0) || !(delta > 0.0 && delta <= epsilon) {
        return Err(param("need ε > 0 and 0 < δ ≤ ε"));
    }
    if !(c > 0.0) {
        return Err(param("C must be positive"));
    }
    if x.len() != n || y.len() != n {
        return Err(param("points must match the ball's dimension"));
    }
    check_time(t)?;
    let inner = ball.radius - epsilon;
    // The inner region is convex, so the segment stays inside iff both ends do.
    for p in [x, y] {
        let r: f64 = p.iter().zip(&ball.center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if !(r < inner) {
            return Err(Error::Geometry(format!(
                "point {p:?} is not inside the ball of radius {inner} around {:?}",
                ball.center
            )));
        }
    }
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let nf = n as f64;
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    Ok(KernelValue::from_log(
        c.ln() - 0.5 * nf * t.ln() - pi2 * nf * nf * t / (4.0 * epsilon * epsilon) - d2 / (4.0 * t),
    ))
}

/// Envelope description as read from a config file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EnvelopeSpec {
    pub family: EnvelopeFamily,
    #[serde(flatten)]
    pub constants: EnvelopeConstants,
}

impl EnvelopeSpec {
    pub fn build(&self) -> Result<BoundEnvelope> {
        BoundEnvelope::new(self.family, self.constants)
    }
}
