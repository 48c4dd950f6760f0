//! The Gaussian ansatz `p = φ exp{−½(αx² + γy² + 2βxy) − μx − νy}` and the
//! six ODEs its coefficients satisfy for `V = a₂x² + a₁x`.

use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::explicit::QuadraticCoeffs;
use crate::hyperbolic::{coth, coth_minus_csch, ln_csch};
use crate::kernel::KernelValue;

/// Relative local error tolerance of the integrator.
pub const ODE_REL_TOL: f64 = 1e-10;
const ODE_ABS_TOL: f64 = 1e-12;
const MAX_STEPS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnsatzState {
    pub t: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub nu: f64,
    pub log_phi: f64,
}

impl AnsatzState {
    fn to_array(self) -> [f64; 6] {
        [self.alpha, self.beta, self.gamma, self.mu, self.nu, self.log_phi]
    }

    fn from_array(t: f64, y: [f64; 6]) -> Self {
        AnsatzState {
            t,
            alpha: y[0],
            beta: y[1],
            gamma: y[2],
            mu: y[3],
            nu: y[4],
            log_phi: y[5],
        }
    }

    /// Largest absolute component difference (time excluded).
    pub fn max_abs_diff(&self, other: &AnsatzState) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `αγ − β²`.
    pub fn determinant(&self) -> f64 {
        self.alpha * self.gamma - self.beta * self.beta
    }
}

fn require_no_a0(c: &QuadraticCoeffs) -> Result<()> {
    if c.a0 != 0.0 {
        return Err(param(
            "the ansatz system takes a0 = 0; apply the a0 shift to the kernel instead",
        ));
    }
    Ok(())
}

/// Exact coefficients at time `t`.
pub fn closed_form_state(c: &QuadraticCoeffs, t: f64) -> Result<AnsatzState> {
    require_no_a0(c)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(param(format!("t must be positive, got {t}")));
    }
    let w = c.omega();
    let u = 2.0 * w * t;
    let ln_s = ln_csch(u);
    let cms = coth_minus_csch(u);
    let alpha = w * coth(u);
    let mu = c.a1 / (2.0 * w) * cms;
    let log_phi = 0.5 * (w.ln() + ln_s - (2.0 * std::f64::consts::PI).ln())
        + c.a1 * c.a1 / (4.0 * c.a2) * t
        - c.a1 * c.a1 / (4.0 * w * w * w) * cms;
    Ok(AnsatzState {
        t,
        alpha,
        beta: -w * ln_s.exp(),
        gamma: alpha,
        mu,
        nu: mu,
        log_phi,
    })
}

fn rhs(c: &QuadraticCoeffs, y: &[f64; 6]) -> [f64; 6] {
    let [alpha, beta, _gamma, mu, _nu, _] = *y;
    [
        -2.0 * alpha * alpha + 2.0 * c.a2,
        -2.0 * alpha * beta,
        -2.0 * beta * beta,
        c.a1 - 2.0 * mu * alpha,
        -2.0 * mu * beta,
        -alpha + mu * mu,
    ]
}

/// Centered-difference residuals of the closed form in the six equations,
/// in the order α, β, γ, μ, ν, log φ.
pub fn closed_form_residuals(c: &QuadraticCoeffs, t: f64, h: f64) -> Result<[f64; 6]> {
    if !(h > 0.0 && h < t) {
        return Err(param("step must satisfy 0 < h < t"));
    }
    let plus = closed_form_state(c, t + h)?.to_array();
    let minus = closed_form_state(c, t - h)?.to_array();
    let f = rhs(c, &closed_form_state(c, t)?.to_array());
    let mut out = [0.0; 6];
    for i in 0..6 {
        out[i] = ((plus[i] - minus[i]) / (2.0 * h) - f[i]).abs();
    }
    Ok(out)
}

/// `log p = log φ − ½(αx² + γy² + 2βxy) − μx − νy`.
pub fn assemble_kernel(s: &AnsatzState, x: f64, y: f64) -> KernelValue {
    KernelValue::from_log(
        s.log_phi
            - 0.5 * (s.alpha * x * x + s.gamma * y * y + 2.0 * s.beta * x * y)
            - s.mu * x
            - s.nu * y,
    )
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Step {
    y: [f64; 6],
    err: f64,
}

fn dp_step(c: &QuadraticCoeffs, y: &[f64; 6], h: f64) -> Step {
    let mut k = [[0.0; 6]; 7];
    k[0] = rhs(c, y);
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            for i in 0..6 {
                ys[i] += h * A[s][j] * kj[i];
            }
        }
        k[s] = rhs(c, &ys);
    }
    let mut y_new = *y;
    for i in 0..6 {
        for s in 0..6 {
            y_new[i] += h * A[6][s] * k[s][i];
        }
    }
    let mut err: f64 = 0.0;
    for i in 0..6 {
        let e: f64 = (0..7).map(|s| E[s] * k[s][i]).sum::<f64>() * h;
        let scale = ODE_ABS_TOL + ODE_REL_TOL * y[i].abs().max(y_new[i].abs());
        err = err.max((e / scale).abs());
    }
    Step { y: y_new, err }
}

/// Integrates from `init` (at `init.t`) through every time in `times`
/// (ascending, all > `init.t`), landing exactly on each requested time.
pub fn integrate_odes_at(
    c: &QuadraticCoeffs,
    init: AnsatzState,
    times: &[f64],
) -> Result<Vec<AnsatzState>> {
    require_no_a0(c)?;
    if !(init.t > 0.0) {
        return Err(param("integration must start at t0 > 0"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.first().is_some_and(|&t| !(t > init.t)) {
        return Err(param("sample times must be strictly increasing and after t0"));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut t = init.t;
    let mut y = init.to_array();
    let mut h = 1e-3 * init.t;
    let mut steps = 0usize;
    for &target in times {
        while t < target {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::Integration {
                    last_t: t,
                    message: "step budget exhausted".into(),
                });
            }
            let last = h >= target - t;
            let h_try = if last { target - t } else { h };
            let step = dp_step(c, &y, h_try);
            if !step.err.is_finite() || step.y.iter().any(|v| !v.is_finite()) {
                h = 0.25 * h_try;
            } else if step.err <= 1.0 {
                t = if last { target } else { t + h_try };
                y = step.y;
                let grow = if step.err == 0.0 { 5.0 } else { (0.9 * step.err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = h_try * grow;
                }
            } else {
                h = h_try * (0.9 * step.err.powf(-0.2)).clamp(0.2, 1.0);
            }
            if h < 1e-14 * t.max(1.0) {
                return Err(Error::Integration {
                    last_t: t,
                    message: "step size underflow".into(),
                });
            }
        }
        out.push(AnsatzState::from_array(target, y));
    }
    Ok(out)
}

/// Integrates from `t0` to `t1`, sampling `samples` equally spaced times in
/// `(t0, t1]`.
pub fn integrate_odes(
    c: &QuadraticCoeffs,
    t0: f64,
    t1: f64,
    init: AnsatzState,
    samples: usize,
) -> Result<Vec<AnsatzState>> {
    if !(t1 > t0) || samples == 0 {
        return Err(param("need t1 > t0 and at least one sample"));
    }
    if (init.t - t0).abs() > 1e-15 * t0.abs().max(1.0) {
        return Err(param("initial state time must equal t0"));
    }
    let times: Vec<f64> = (1..=samples)
        .map(|k| if k == samples { t1 } else { t0 + (t1 - t0) * k as f64 / samples as f64 })
        .collect();
    let mut traj = vec![init];
    traj.extend(integrate_odes_at(c, init, &times)?);
    Ok(traj)
}
