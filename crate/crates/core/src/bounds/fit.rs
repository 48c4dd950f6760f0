//! Fitting envelope constants against a computed kernel on a sample grid.

use rayon::prelude::*;
use serde::Serialize;

use super::{decay_argument, interval_lower, is_near, BoundEnvelope, EnvelopeConstants, EnvelopeFamily};
use crate::error::{param, Result};
use crate::kernel::KernelEvaluator;
use crate::potentials::{cube_average, Cube, Potential};

/// Allowed slack shortfall, relative to `max(1, |log p|)`.
const SLACK_TOL: f64 = 1e-9;
/// Allowed `max(p/G − 1)` for the Gaussian upper bound.
pub const GAUSSIAN_EXCESS_TOL: f64 = 1e-10;

/// Cartesian sample set `xs × ys × ts`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub ts: Vec<f64>,
}

impl SampleGrid {
    /// `nx` equally spaced points on `[lo, hi]` for both `x` and `y`.
    pub fn square(lo: f64, hi: f64, nx: usize, ts: Vec<f64>) -> Self {
        let xs = linspace(lo, hi, nx);
        SampleGrid { ys: xs.clone(), xs, ts }
    }

    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.xs.len() * self.ys.len() * self.ts.len());
        for &x in &self.xs {
            for &y in &self.ys {
                for &t in &self.ts {
                    out.push((x, y, t));
                }
            }
        }
        out
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Per-point comparison. `slack` is positive when the bound holds:
/// `log env − log p` for upper families, `log p − log env` for lower ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlackPoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub log_p: f64,
    pub log_envelope: f64,
    pub slack: f64,
}

impl SlackPoint {
    fn violated(&self) -> bool {
        !(self.slack >= -SLACK_TOL * self.log_p.abs().max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub family: EnvelopeFamily,
    pub constants: EnvelopeConstants,
    pub feasible: bool,
    /// Why the fit failed, when it did.
    pub reason: Option<String>,
    /// The sample that fixed an infeasible constant, or the worst violation.
    pub witness: Option<SlackPoint>,
    pub points: Vec<SlackPoint>,
    pub min_slack: f64,
    /// `max(p/G − 1)`, for the Gaussian family only.
    pub gaussian_excess: Option<f64>,
}

impl FitReport {
    pub fn envelope(&self) -> Result<BoundEnvelope> {
        BoundEnvelope::new(self.family, self.constants)
    }
}

#[derive(Clone, Copy)]
struct Sample {
    x: f64,
    y: f64,
    t: f64,
    log_p: f64,
}

impl Sample {
    fn d2(&self) -> f64 {
        (self.x - self.y) * (self.x - self.y)
    }
}

/// Index and value of the smallest (`min = true`) or largest finite-or-infinite entry.
fn extremum(items: impl Iterator<Item = (usize, f64)>, min: bool) -> Option<(usize, f64)> {
    items.fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
        Some((_, b)) if (min && !(v < b)) || (!min && !(v > b)) => best,
        _ => Some((i, v)),
    })
}

fn par_map<T: Send>(samples: &[Sample], f: impl Fn(&Sample) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    samples.par_iter().map(f).collect()
}

/// Fits the constants of `template.family` so that the envelope bounds `k`
/// on `grid`. Fixed parameters (`β`, `κ`, `ε`) come from `template`.
///
/// * `average_upper`: `c₀ = 2(4π)^{−1/2}`, `c₂ = 1/8`,
///   `c₁ = inf (log env|_{c₁=0} − log p)/decay` over samples with nonzero decay.
/// * `symmetrized_upper`: the same with `c₁ = 1/8` fixed and `c₂` fitted.
/// * `quadratic_sharp`: `c₀ = 1/8`; `c₁` from `t ≤ 1`, `c₂ = ½ inf_{t>1} (−log p)/t`,
///   then `c₃` from `t > 1`.
/// * `lower_near`: `c₀ = ½(4π)^{−1/2}`, `c₁` the smallest admissible value over
///   near samples.
/// * `lower_far`: near `c₁`, `c₂ = 1`, `c₃` the smallest admissible value over
///   far samples.
/// * `interval_lower`: `C` (stored in `c₀`) the largest admissible value;
///   feasible iff `0 < C < 1`. `k` should be the Dirichlet kernel of an
///   interval and `V` is unused.
/// * `gaussian_upper`: nothing to fit; feasible iff `p ≤ G(1 + 1e−10)`.
///
/// A fit is feasible iff every fitted constant is finite and positive and no
/// sample violates the bound beyond rounding.
pub fn fit_constants<K: KernelEvaluator + ?Sized>(
    v: &Potential,
    k: &K,
    template: &BoundEnvelope,
    grid: &SampleGrid,
) -> Result<FitReport> {
    if template.constants.n != 1 {
        return Err(param("fitting works with one-dimensional kernels (n = 1)"));
    }
    let family = template.family;
    if family == EnvelopeFamily::BallLower {
        return Err(param("ball_lower needs an n ≥ 2 Dirichlet kernel; it cannot be fitted here"));
    }
    let pts = grid.points();
    if pts.is_empty() {
        return Err(param("empty sample grid"));
    }
    let samples: Vec<Sample> = pts
        .par_iter()
        .map(|&(x, y, t)| Ok(Sample { x, y, t, log_p: k.eval(x, y, t)?.log_value }))
        .collect::<Result<_>>()?;

    let tmpl = template.constants;
    let mut c = tmpl;
    let log_sqrt_4pi = 0.5 * (4.0 * std::f64::consts::PI).ln();
    // Constant fitted by an extremum, with the sample that fixed it.
    let mut fitted: Vec<(&'static str, f64, Option<usize>)> = Vec::new();
    // Samples the fit is judged on.
    let mut used: Vec<usize> = (0..samples.len()).collect();

    match family {
        EnvelopeFamily::GaussianUpper | EnvelopeFamily::BallLower => {}
        EnvelopeFamily::AverageUpper => {
            c.c0 = 2.0 * (-log_sqrt_4pi).exp();
            c.c2 = 0.125;
            let decay = par_map(&samples, |s| decay_argument(v, tmpl.beta, &[s.x], s.t))?;
            let ratios = samples.iter().zip(&decay).enumerate().filter(|(_, (_, d))| **d > 0.0).map(|(i, (s, d))| {
                let base = c.c0.ln() - 0.5 * s.t.ln() - c.c2 * s.d2() / s.t;
                (i, (base - s.log_p) / d)
            });
            let (c1, at) = pick(extremum(ratios, true));
            c.c1 = c1;
            fitted.push(("c1", c1, at));
        }
        EnvelopeFamily::SymmetrizedUpper => {
            c.c0 = 2.0 * (-log_sqrt_4pi).exp();
            c.c1 = 0.125;
            let decay = par_map(&samples, |s| {
                Ok(decay_argument(v, tmpl.beta, &[s.x], s.t)? + decay_argument(v, tmpl.beta, &[s.y], s.t)?)
            })?;
            let ratios = samples.iter().zip(&decay).enumerate().filter(|(_, (_, d))| **d > 0.0).map(|(i, (s, d))| {
                let base = c.c0.ln() - 0.5 * s.t.ln() - c.c1 * s.d2() / s.t;
                (i, (base - s.log_p) / d)
            });
            let (c2, at) = pick(extremum(ratios, true));
            c.c2 = c2;
            fitted.push(("c2", c2, at));
        }
        EnvelopeFamily::QuadraticSharp => {
            c.c0 = 0.125;
            let r2 = |s: &Sample| s.x * s.x + s.y * s.y;
            let short = samples.iter().enumerate().filter(|(_, s)| s.t <= 1.0 && r2(s) > 0.0).map(|(i, s)| {
                (i, (-0.5 * s.t.ln() - c.c0 * s.d2() / s.t - s.log_p) / (s.t * r2(s)))
            });
            let (c1, at1) = pick(extremum(short, true));
            let long = samples.iter().enumerate().filter(|(_, s)| s.t > 1.0).map(|(i, s)| (i, -s.log_p / s.t));
            let (half_c2, at2) = pick(extremum(long, true));
            let c2 = 0.5 * half_c2;
            let long_r = samples
                .iter()
                .enumerate()
                .filter(|(_, s)| s.t > 1.0 && r2(s) > 0.0)
                .map(|(i, s)| (i, (-c2 * s.t - s.log_p) / r2(s)));
            let (c3, at3) = pick(extremum(long_r, true));
            c.c1 = c1;
            c.c2 = c2;
            c.c3 = c3;
            fitted.extend([("c1", c1, at1), ("c2", c2, at2), ("c3", c3, at3)]);
        }
        EnvelopeFamily::LowerNear | EnvelopeFamily::LowerFar => {
            c.c0 = 0.5 * (-log_sqrt_4pi).exp();
            let near: Vec<usize> =
                (0..samples.len()).filter(|&i| is_near(samples[i].d2().sqrt(), samples[i].t, tmpl.kappa)).collect();
            let near_avg = par_map(&samples, |s| cube_average(v, &Cube::new(vec![s.x], s.t.sqrt())?))?;
            let needs = near.iter().filter(|&&i| near_avg[i] > 0.0).map(|&i| {
                let s = &samples[i];
                (i, (c.c0.ln() - 0.5 * s.t.ln() - s.log_p) / (s.t * near_avg[i]))
            });
            let (sup, at) = pick(extremum(needs, false));
            c.c1 = if sup > 0.0 { sup } else { 1.0 };
            fitted.push(("c1", c.c1, at));
            if family == EnvelopeFamily::LowerNear {
                if near.is_empty() {
                    return Err(param("no near-regime samples (|x − y| < κ√t) in the grid"));
                }
                used = near;
            } else {
                c.c2 = 1.0;
                let far: Vec<usize> = (0..samples.len()).filter(|i| !near.contains(i)).collect();
                if far.is_empty() {
                    return Err(param("no far-regime samples (|x − y| ≥ κ√t) in the grid"));
                }
                let far_avg: Vec<f64> = far
                    .par_iter()
                    .map(|&i| {
                        let s = &samples[i];
                        cube_average(v, &Cube::new(vec![s.x], s.t / s.d2().sqrt())?)
                    })
                    .collect::<Result<_>>()?;
                let needs = far.iter().zip(&far_avg).map(|(&i, avg)| {
                    let s = &samples[i];
                    let base = c.c0.ln() - 0.5 * s.t.ln() - c.c1 * s.t * avg;
                    (i, (base - s.log_p) / (s.d2() / s.t))
                });
                let (sup, at) = pick(extremum(needs, false));
                c.c3 = if sup > 0.0 { sup } else { 0.25 };
                fitted.push(("c3", c.c3, at));
            }
        }
        EnvelopeFamily::IntervalLower => {
            let unit: Vec<(f64, bool)> = samples
                .iter()
                .map(|s| {
                    let e = interval_lower(tmpl.epsilon, s.x, s.y, s.t, 1.0)?;
                    Ok((e.value.log_value, e.clamped))
                })
                .collect::<Result<_>>()?;
            let gaps = unit.iter().enumerate().filter(|(_, u)| !u.1).map(|(i, u)| (i, samples[i].log_p - u.0));
            let (log_c, at) = pick(extremum(gaps, true));
            c.c0 = log_c.exp();
            fitted.push(("C", c.c0, at));
        }
    }

    let mut reason = None;
    let mut witness_idx = None;
    for &(name, value, at) in &fitted {
        if !(value > 0.0) || !value.is_finite() {
            reason = Some(format!("{name} = {value} is not finite and positive"));
            witness_idx = at;
            break;
        }
    }
    if reason.is_none() && family == EnvelopeFamily::IntervalLower && !(c.c0 < 1.0) {
        reason = Some(format!("C = {} is not below 1", c.c0));
        witness_idx = fitted[0].2;
    }

    let points: Vec<SlackPoint> = if fitted.iter().all(|f| f.1.is_finite()) {
        let env = BoundEnvelope { family, constants: c };
        used.par_iter()
            .map(|&i| {
                let s = &samples[i];
                let log_env = if family == EnvelopeFamily::IntervalLower {
                    interval_lower(c.epsilon, s.x, s.y, s.t, c.c0)?.value.log_value
                } else {
                    env.eval(v, &[s.x], &[s.y], s.t)?.log_value
                };
                let slack = if family.is_upper() { log_env - s.log_p } else { s.log_p - log_env };
                Ok(SlackPoint { x: s.x, y: s.y, t: s.t, log_p: s.log_p, log_envelope: log_env, slack })
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let min_slack = points.iter().map(|p| p.slack).fold(f64::INFINITY, f64::min);

    let mut gaussian_excess = None;
    if family == EnvelopeFamily::GaussianUpper {
        let excess = extremum(points.iter().enumerate().map(|(i, p)| (i, (-p.slack).exp_m1())), false);
        if let Some((i, e)) = excess {
            gaussian_excess = Some(e);
            if !(e <= GAUSSIAN_EXCESS_TOL) {
                reason = Some(format!("p exceeds the Gaussian by a factor 1 + {e:e}"));
                return Ok(report(family, c, reason, Some(points[i]), points, min_slack, gaussian_excess));
            }
        }
    } else if reason.is_none() {
        if let Some(p) = points.iter().filter(|p| p.violated()).min_by(|a, b| a.slack.total_cmp(&b.slack)) {
            reason = Some(format!("bound violated by {:e} in log at ({}, {}, {})", -p.slack, p.x, p.y, p.t));
            let p = *p;
            return Ok(report(family, c, reason, Some(p), points, min_slack, gaussian_excess));
        }
    }
    let witness = witness_idx.map(|i| {
        let s = &samples[i];
        points.iter().find(|p| p.x == s.x && p.y == s.y && p.t == s.t).copied().unwrap_or(SlackPoint {
            x: s.x,
            y: s.y,
            t: s.t,
            log_p: s.log_p,
            log_envelope: f64::NAN,
            slack: f64::NAN,
        })
    });
    Ok(report(family, c, reason, witness, points, min_slack, gaussian_excess))
}

/// An empty constraint set leaves the constant unconstrained; 1 is used.
fn pick(best: Option<(usize, f64)>) -> (f64, Option<usize>) {
    match best {
        Some((i, v)) => (v, Some(i)),
        None => (1.0, None),
    }
}

fn report(
    family: EnvelopeFamily,
    constants: EnvelopeConstants,
    reason: Option<String>,
    witness: Option<SlackPoint>,
    points: Vec<SlackPoint>,
    min_slack: f64,
    gaussian_excess: Option<f64>,
) -> FitReport {
    FitReport { family, constants, feasible: reason.is_none(), reason, witness, points, min_slack, gaussian_excess }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explicit::{GaussianKernel, QuadraticCoeffs, QuadraticKernel};
    use crate::spectral::DirichletInterval;

    fn template(family: EnvelopeFamily, beta: f64) -> BoundEnvelope {
        let c = EnvelopeConstants { beta, ..Default::default() };
        BoundEnvelope::new(family, c).unwrap()
    }

    fn grid() -> SampleGrid {
        SampleGrid::square(-3.0, 3.0, 7, vec![0.05, 0.3, 1.0, 3.0])
    }

    #[test]
    fn free_average_upper_is_unconstrained() {
        let zero = Potential::constant(0.0);
        let r = fit_constants(&zero, &GaussianKernel, &template(EnvelopeFamily::AverageUpper, 1.0), &grid()).unwrap();
        assert!(r.feasible, "{:?}", r.reason);
        assert_eq!(r.constants.c1, 1.0);
        assert!(r.min_slack >= 0.0);
    }

    #[test]
    fn harmonic_fits() {
        let v = Potential::quadratic(0.0, 0.0, 1.0);
        let k = QuadraticKernel(QuadraticCoeffs::new(0.0, 0.0, 1.0).unwrap());
        for family in [
            EnvelopeFamily::AverageUpper,
            EnvelopeFamily::SymmetrizedUpper,
            EnvelopeFamily::QuadraticSharp,
            EnvelopeFamily::LowerNear,
            EnvelopeFamily::LowerFar,
            EnvelopeFamily::GaussianUpper,
        ] {
            let r = fit_constants(&v, &k, &template(family, 0.99), &grid()).unwrap();
            assert!(r.feasible, "{family:?}: {:?}", r.reason);
            assert!(r.envelope().is_ok());
        }
    }

    #[test]
    fn gaussian_family_flags_excess() {
        let v = Potential::constant(0.0);
        let k = crate::kernel::FnKernel::new("big", |x, y, t| {
            let g = crate::explicit::gaussian_kernel(1, &[x], &[y], t)?;
            Ok(crate::kernel::KernelValue::from_log(g.log_value + 1e-6))
        });
        let r = fit_constants(&v, &k, &template(EnvelopeFamily::GaussianUpper, 1.0), &grid()).unwrap();
        assert!(!r.feasible);
        assert!(r.witness.is_some());
    }

    #[test]
    fn interval_constant() {
        let pi = std::f64::consts::PI;
        let c = EnvelopeConstants { epsilon: pi / 4.0, ..Default::default() };
        let tmpl = BoundEnvelope::new(EnvelopeFamily::IntervalLower, c).unwrap();
        let g = SampleGrid {
            xs: linspace(pi / 4.0 + 0.05, 3.0 * pi / 4.0 - 0.05, 5),
            ys: linspace(pi / 4.0 + 0.05, 3.0 * pi / 4.0 - 0.05, 5),
            ts: vec![0.01, 0.1, 0.5],
        };
        let k = DirichletInterval { a: 0.0, b: pi };
        let r = fit_constants(&Potential::constant(0.0), &k, &tmpl, &g).unwrap();
        assert!(r.feasible, "{:?}", r.reason);
        assert!(r.constants.c0 > 0.0 && r.constants.c0 < 1.0);
    }

    #[test]
    fn ball_is_rejected() {
        let v = Potential::constant(0.0);
        assert!(fit_constants(&v, &GaussianKernel, &template(EnvelopeFamily::BallLower, 1.0), &grid()).is_err());
    }
}
