//! Reverse Hölder, Muckenhoupt and doubling diagnostics over dyadic cube families.

use rayon::prelude::*;
use serde::Serialize;

use super::{abs_power_integral, Cube, Potential};
use crate::error::{domain, param, Result};

/// Per-cube ratios above this mark a report divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;

/// Number of sample points per cube for the `q = ∞` essential supremum.
pub const SUP_REFINEMENT: usize = 1 << 10;

/// Hard cap on the number of cubes in one family.
const MAX_FAMILY: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhExponent {
    Finite(f64),
    Infinity,
}

impl RhExponent {
    pub fn value(self) -> f64 {
        match self {
            RhExponent::Finite(q) => q,
            RhExponent::Infinity => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleRatio {
    pub depth: u32,
    pub side: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub depth: u32,
    pub side: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightClassReport {
    /// `q` for reverse Hölder reports, `p` for Muckenhoupt reports.
    pub exponent: f64,
    /// Largest ratio over the family (`+∞` when some cube diverges).
    pub constant: f64,
    pub window: Cube,
    pub depth: u32,
    /// Largest ratio at each dyadic level.
    pub trace: Vec<ScaleRatio>,
    pub divergence: Option<Divergence>,
    /// For divergent power potentials: the `q`-th power of the window ratio
    /// with the singular neighbourhood `|x| < side·2^{−d−1}` removed, for each
    /// depth `d`. It stays finite and exhibits the rate at which `V^q` fails
    /// to be integrable.
    pub truncated_trace: Vec<ScaleRatio>,
    /// `2/(2 + n(p − 1))` for Muckenhoupt reports.
    pub beta: Option<f64>,
}

impl WeightClassReport {
    pub fn is_divergent(&self) -> bool {
        self.divergence.is_some()
    }
}

fn check_family(v: &Potential, window: &Cube, depth: u32) -> Result<()> {
    if window.dimension() != v.dimension() {
        return Err(param("window and potential dimensions differ"));
    }
    let n = window.dimension() as u32;
    let count = 1u128.checked_shl(n * depth).unwrap_or(u128::MAX);
    if count > MAX_FAMILY as u128 {
        return Err(param(format!(
            "dyadic family of depth {depth} in dimension {n} has more than {MAX_FAMILY} cubes"
        )));
    }
    Ok(())
}

fn nan_as_inf(x: f64) -> f64 {
    if x.is_nan() {
        f64::INFINITY
    } else {
        x
    }
}

fn family_report<F>(
    v: &Potential,
    window: &Cube,
    depth: u32,
    exponent: f64,
    ratio: F,
) -> Result<WeightClassReport>
where
    F: Fn(&Cube) -> Result<f64> + Sync,
{
    check_family(v, window, depth)?;
    let mut trace = Vec::with_capacity(depth as usize + 1);
    let mut divergence = None;
    for d in 0..=depth {
        let cubes = window.dyadic_children(d);
        let ratios: Vec<f64> = cubes.par_iter().map(&ratio).collect::<Result<_>>()?;
        let level = ratios.into_iter().map(nan_as_inf).fold(0.0, f64::max);
        let side = window.side / (1u64 << d) as f64;
        if divergence.is_none() && level > DIVERGENCE_THRESHOLD {
            divergence = Some(Divergence {
                depth: d,
                side,
                ratio: level,
            });
        }
        trace.push(ScaleRatio {
            depth: d,
            side,
            ratio: level,
        });
    }
    let constant = trace.iter().map(|s| s.ratio).fold(0.0, f64::max);
    Ok(WeightClassReport {
        exponent,
        constant,
        window: window.clone(),
        depth,
        trace,
        divergence,
        truncated_trace: Vec::new(),
        beta: None,
    })
}

/// Reverse Hölder ratio `(av_Q V^q)^{1/q} / av_Q V` maximised over each
/// dyadic level of `window` down to `depth`.
pub fn rh_constant(
    v: &Potential,
    q: RhExponent,
    window: &Cube,
    depth: u32,
) -> Result<WeightClassReport> {
    if let RhExponent::Finite(q) = q {
        if !(q > 1.0) || !q.is_finite() {
            return Err(param(format!("reverse Hölder exponent must exceed 1, got {q}")));
        }
    }
    let mut report = family_report(v, window, depth, q.value(), |cube| {
        let avg = v.integral(cube)? / cube.volume();
        let lhs = match q {
            RhExponent::Finite(q) => (v.power_integral(q, cube)? / cube.volume()).powf(1.0 / q),
            RhExponent::Infinity => v.ess_sup(cube)?,
        };
        Ok(if avg > 0.0 {
            lhs / avg
        } else if lhs > 0.0 {
            f64::INFINITY
        } else {
            1.0
        })
    })?;
    if let (true, Potential::Power { exponent }, RhExponent::Finite(q)) =
        (report.is_divergent(), v, q)
    {
        report.truncated_trace = truncated_power_trace(*exponent, q, window, depth);
    }
    Ok(report)
}

fn truncated_power_trace(alpha: f64, q: f64, window: &Cube, depth: u32) -> Vec<ScaleRatio> {
    let (a, b) = window.interval(0);
    let avg = abs_power_integral(alpha, a, b) / window.side;
    (0..=depth)
        .map(|d| {
            let delta = window.side / (1u64 << (d + 1)) as f64;
            let mass = excised_power_integral(alpha * q, a, b, delta);
            ScaleRatio {
                depth: d,
                side: delta,
                ratio: mass / window.side / avg.powf(q),
            }
        })
        .collect()
}

/// `∫_{[a,b] ∖ (−δ, δ)} |x|^γ`.
fn excised_power_integral(gamma: f64, a: f64, b: f64, delta: f64) -> f64 {
    let left = if a < -delta {
        abs_power_integral(gamma, a, -delta)
    } else {
        0.0
    };
    let right = if b > delta {
        abs_power_integral(gamma, delta, b)
    } else {
        0.0
    };
    left + right
}

/// Muckenhoupt quantity `av_Q V · (av_Q V^{−1/(p−1)})^{p−1}` over the family.
pub fn ap_constant(v: &Potential, p: f64, window: &Cube, depth: u32) -> Result<WeightClassReport> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(param(format!("Muckenhoupt exponent must exceed 1, got {p}")));
    }
    let dual = -1.0 / (p - 1.0);
    let mut report = family_report(v, window, depth, p, |cube| {
        let avg = v.integral(cube)? / cube.volume();
        let avg_dual = v.power_integral(dual, cube)? / cube.volume();
        Ok(avg * avg_dual.powf(p - 1.0))
    })?;
    let n = v.dimension() as f64;
    report.beta = Some(2.0 / (2.0 + n * (p - 1.0)));
    Ok(report)
}

/// Result of fitting `∫_{Z'}V / ∫_Z V ≈ C (|Z'|/|Z|)^ε` over nested cubes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoublingFit {
    pub constant: f64,
    pub exponent: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
    pub pairs: usize,
}

/// Fits the doubling constants on the cubes concentric with `window`, of
/// sides `window.side·2^{−k}` for `k = 0..=depth`, using every nested pair.
pub fn doubling_fit(v: &Potential, window: &Cube, depth: u32) -> Result<DoublingFit> {
    if window.dimension() != v.dimension() {
        return Err(param("window and potential dimensions differ"));
    }
    let n = window.dimension() as f64;
    let masses: Vec<f64> = (0..=depth)
        .map(|k| {
            let cube = Cube::new(window.center.clone(), window.side / (1u64 << k) as f64)?;
            v.integral(&cube)
        })
        .collect::<Result<_>>()?;
    if let Some(k) = masses.iter().position(|m| !(*m > 0.0)) {
        return Err(domain(format!("V has zero mass on the nested cube at depth {k}")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in 0..masses.len() {
        for k in j + 1..masses.len() {
            xs.push(-n * (k - j) as f64 * std::f64::consts::LN_2);
            ys.push((masses[k] / masses[j]).ln());
        }
    }
    if xs.len() < 3 {
        return Err(param(format!(
            "doubling fit needs at least 3 nested pairs, depth {depth} gives {}",
            xs.len()
        )));
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(DoublingFit {
        constant: intercept.exp(),
        exponent: slope,
        residual,
        pairs: xs.len(),
    })
}

/// `m_β(x) = x` for `x ≤ 1`, `x^β` for `x ≥ 1`.
pub fn m_beta(x: f64, beta: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(param(format!("m_beta needs x ≥ 0, got {x}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(param(format!("m_beta needs 0 < β ≤ 1, got {beta}")));
    }
    Ok(if x <= 1.0 { x } else { x.powf(beta) })
}
