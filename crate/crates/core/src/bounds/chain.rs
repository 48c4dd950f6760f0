//! Chaining lower bound: split the segment from `x` to `y` into `M` steps,
//! apply the on-diagonal lower bound at each step and multiply.

use serde::Serialize;

use crate::error::{param, Result};
use crate::explicit::check_time;
use crate::kernel::KernelValue;
use crate::potentials::{cube_average, Cube, Potential};

const MAX_STEPS: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainPlan {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: f64,
    /// Smallest integer with `256|y−x|²/t < M`.
    pub m: u64,
    pub sigma: f64,
    /// `x₀ = x, …, x_M = y`, equally spaced.
    pub waypoints: Vec<Vec<f64>>,
    /// `|y − x|/M`.
    pub spacing: f64,
    /// `σ√(t/M)`.
    pub cube_side: f64,
}

/// Largest `σ` for which points of adjacent cubes are always closer than
/// `(1/8)√(t/M)`: the step is below `(1/16)√(t/M)` and two half-diagonals
/// add `σ√n·√(t/M)`.
pub fn default_sigma(n: usize) -> f64 {
    1.0 / (16.0 * (n as f64).sqrt())
}

/// Smallest `M` with `256|y−x|²/t < M`, at distance `d = |y − x|`.
/// The formula itself does not need the far regime.
pub fn chain_steps(d: f64, t: f64) -> Result<u64> {
    check_time(t)?;
    if !(d >= 0.0) || !d.is_finite() {
        return Err(param(format!("distance must be finite and nonnegative, got {d}")));
    }
    let ratio = 256.0 * d * d / t;
    if !(ratio < MAX_STEPS as f64) {
        return Err(param(format!("chain would need more than {MAX_STEPS} steps")));
    }
    let mut m = ratio.floor() as u64 + 1;
    // Guard against rounding in d²/t: the spacing condition is what matters.
    while !(d / m as f64 * 16.0 < (t / m as f64).sqrt()) {
        m += 1;
    }
    Ok(m)
}

/// Builds the plan for `|x − y| ≥ √t/8`. `sigma = None` uses
/// [`default_sigma`]; an explicit `σ` must satisfy the adjacent-cube
/// condition.
pub fn chain_plan(x: &[f64], y: &[f64], t: f64, sigma: Option<f64>) -> Result<ChainPlan> {
    check_time(t)?;
    let n = x.len();
    if n == 0 || y.len() != n {
        return Err(param("chain endpoints must be points of the same dimension"));
    }
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let d = d2.sqrt();
    if d < t.sqrt() / 8.0 {
        return Err(param(format!(
            "|x − y| = {d} < √t/8: near regime, use the near branch of the lower envelope"
        )));
    }
    let m = chain_steps(d, t)?;
    let sigma = sigma.unwrap_or_else(|| default_sigma(n));
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(param(format!("σ must lie in (0, 1), got {sigma}")));
    }
    let scale = (t / m as f64).sqrt();
    let spacing = d / m as f64;
    if !(spacing < scale * (0.125 - sigma * (n as f64).sqrt())) {
        return Err(param(format!(
            "σ = {sigma} lets points of adjacent cubes be {} apart, not below √(t/M)/8 = {}",
            spacing + sigma * (n as f64).sqrt() * scale,
            scale / 8.0
        )));
    }
    let waypoints = (0..=m)
        .map(|i| {
            let s = i as f64 / m as f64;
            x.iter().zip(y).map(|(a, b)| a + s * (b - a)).collect()
        })
        .collect();
    Ok(ChainPlan {
        x: x.to_vec(),
        y: y.to_vec(),
        t,
        m,
        sigma,
        waypoints,
        spacing,
        cube_side: sigma * scale,
    })
}

/// `log p ≥ M log c₀ + n(M−1) log σ + (n/2)(log M − log t)
///          − c₁ t C^M av_{Z_{σ√(t/M)}(x)} V`.
///
/// `c₀, c₁` are on-diagonal lower-bound constants and `doubling` the
/// doubling constant of `V` (clamped to at least 1). The result is
/// typically astronomically small.
pub fn chained_lower_bound(
    v: &Potential,
    plan: &ChainPlan,
    c0: f64,
    c1: f64,
    doubling: f64,
) -> Result<KernelValue> {
    if !(c0 > 0.0 && c1 > 0.0) {
        return Err(param("on-diagonal constants must be positive"));
    }
    if !doubling.is_finite() {
        return Err(param("doubling constant must be finite"));
    }
    let n = plan.x.len() as f64;
    let m = plan.m as f64;
    let avg = cube_average(v, &Cube::new(plan.x.clone(), plan.cube_side)?)?;
    let c = doubling.max(1.0);
    let penalty = if avg == 0.0 {
        0.0
    } else {
        c1 * plan.t * avg * (m * c.ln()).exp()
    };
    let log = m * c0.ln() + n * (m - 1.0) * plan.sigma.ln() + 0.5 * n * (m.ln() - plan.t.ln()) - penalty;
    Ok(KernelValue::from_log(log))
}
