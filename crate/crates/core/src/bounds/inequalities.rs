//! Empirical checks of the Fefferman–Phong and Moser inequalities.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::kernel::KernelEvaluator;
use crate::potentials::{cube_average, m_beta, Cube, Potential};
use crate::quadrature::{integrate_2d, integrate_with_breaks, QuadOptions};

/// One-dimensional test functions for the Fefferman–Phong ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant,
    /// `max(0, 1 − |z − c|/w)`.
    Hat { center: f64, half_width: f64 },
    /// `max(0, 1 − ((z − c)/w)²)`.
    Bump { center: f64, half_width: f64 },
    /// `e^{−(z−c)²/2w²} − e^{−9/2}` on `|z − c| < 3w`, zero outside.
    Gaussian { center: f64, width: f64 },
}

const GAUSS_CUT: f64 = 3.0;

impl TestFunction {
    pub fn value(&self, z: f64) -> f64 {
        match *self {
            TestFunction::Constant => 1.0,
            TestFunction::Hat { center, half_width } => (1.0 - (z - center).abs() / half_width).max(0.0),
            TestFunction::Bump { center, half_width } => {
                let s = (z - center) / half_width;
                (1.0 - s * s).max(0.0)
            }
            TestFunction::Gaussian { center, width } => {
                let s = (z - center) / width;
                if s.abs() < GAUSS_CUT {
                    (-0.5 * s * s).exp() - (-0.5 * GAUSS_CUT * GAUSS_CUT).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative away from the kinks.
    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            TestFunction::Constant => 0.0,
            TestFunction::Hat { center, half_width } => {
                let s = z - center;
                if s.abs() >= half_width {
                    0.0
                } else {
                    -s.signum() / half_width
                }
            }
            TestFunction::Bump { center, half_width } => {
                let s = (z - center) / half_width;
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    -2.0 * s / half_width
                }
            }
            TestFunction::Gaussian { center, width } => {
                let s = (z - center) / width;
                if s.abs() >= GAUSS_CUT {
                    0.0
                } else {
                    -s / width * (-0.5 * s * s).exp()
                }
            }
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match *self {
            TestFunction::Constant => vec![],
            TestFunction::Hat { center, half_width } => vec![center - half_width, center, center + half_width],
            TestFunction::Bump { center, half_width } => vec![center - half_width, center + half_width],
            TestFunction::Gaussian { center, width } => {
                vec![center - GAUSS_CUT * width, center, center + GAUSS_CUT * width]
            }
        }
    }
}

fn one_dim_cube(cube: &Cube) -> Result<(f64, f64)> {
    if cube.dimension() != 1 {
        return Err(param("the Fefferman–Phong check is one-dimensional"));
    }
    Ok(cube.interval(0))
}

/// The fixed 50-function family on `cube` (side `r`): 20 hats, 15 quadratic
/// bumps and 15 truncated Gaussians centred at 0.1, 0.3, 0.5, 0.7, 0.9 of the
/// way across, each centre jittered by at most `0.05r`.
pub fn fefferman_phong_family(cube: &Cube, seed: u64) -> Result<Vec<TestFunction>> {
    let (lo, hi) = one_dim_cube(cube)?;
    let r = hi - lo;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = || -> Vec<f64> {
        [0.1, 0.3, 0.5, 0.7, 0.9]
            .iter()
            .map(|f| lo + f * r + rng.random_range(-0.05..=0.05) * r)
            .collect()
    };
    let mut out = Vec::with_capacity(50);
    for c in centers() {
        for w in [0.1, 0.25, 0.5, 1.0] {
            out.push(TestFunction::Hat { center: c, half_width: w * r });
        }
    }
    for c in centers() {
        for w in [0.2, 0.5, 1.0] {
            out.push(TestFunction::Bump { center: c, half_width: w * r });
        }
    }
    for c in centers() {
        for w in [0.1, 0.3, 1.0] {
            out.push(TestFunction::Gaussian { center: c, width: w * r });
        }
    }
    Ok(out)
}

/// `∫_Z(u'² + Vu²) / ((m_β(r² av_Z V)/r²) ∫_Z u²)` with `r` the side of `Z`.
pub fn fefferman_phong_ratio(v: &Potential, u: &TestFunction, cube: &Cube, beta: f64) -> Result<f64> {
    let (lo, hi) = one_dim_cube(cube)?;
    let r = hi - lo;
    let mut breaks = vec![lo, hi];
    breaks.extend(u.kinks().into_iter().filter(|&z| z > lo && z < hi));
    if 0.0 > lo && 0.0 < hi {
        breaks.push(0.0);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let opts = QuadOptions::with_rel_tol(1e-10);
    let mass = integrate_with_breaks(|z| u.value(z).powi(2), &breaks, opts)?.value;
    if !(mass > 0.0) {
        return Err(param("test function vanishes on the cube"));
    }
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let energy = integrate_with_breaks(
        |z| {
            let vz = v.eval1(z).unwrap_or_else(|e| {
                failure.borrow_mut().get_or_insert(e);
                0.0
            });
            u.derivative(z).powi(2) + vz * u.value(z).powi(2)
        },
        &breaks,
        opts,
    )?
    .value;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let weight = m_beta(r * r * cube_average(v, cube)?, beta)? / (r * r);
    if !(weight > 0.0) {
        return Err(param("V has zero average on the cube; the ratio is undefined"));
    }
    Ok(energy / (weight * mass))
}

/// Parabolic cylinder `Q_ρ = [x₀ − ρ, x₀ + ρ] × [t₀ − ρ², t₀]` at scale `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cylinder {
    pub x0: f64,
    pub t0: f64,
    pub r: f64,
}

impl Cylinder {
    fn check(&self) -> Result<()> {
        if !(self.r > 0.0) || !self.x0.is_finite() || !(self.t0 - 4.0 * self.r * self.r > 0.0) {
            return Err(param(format!("invalid cylinder {self:?}: need r > 0 and t₀ > 4r²")));
        }
        Ok(())
    }

    /// Cylinders with `x₀ ∈ [−1, 1]`, `r ∈ [0.1, 0.5]`, `t₀ ∈ [4r² + 0.05, 4r² + 1]`.
    pub fn random_family(seed: u64, count: usize) -> Vec<Cylinder> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let x0 = rng.random_range(-1.0..=1.0);
                let r: f64 = rng.random_range(0.1..=0.5);
                let t0 = 4.0 * r * r + rng.random_range(0.05..=1.0);
                Cylinder { x0, t0, r }
            })
            .collect()
    }
}

const MOSER_GRID: usize = 41;

/// `sup_{Q_{r/2}} u / (r^{−3} ∬_{Q_{2r/3}} u²)^{1/2}` for `u(x, t) = p(x, pole, t)`.
/// The supremum is taken on a 41 × 41 grid.
pub fn moser_ratio<K: KernelEvaluator + ?Sized>(k: &K, pole: f64, cyl: &Cylinder) -> Result<f64> {
    cyl.check()?;
    let Cylinder { x0, t0, r } = *cyl;
    let half = 0.5 * r;
    let mut sup: f64 = 0.0;
    for i in 0..MOSER_GRID {
        let x = x0 - half + 2.0 * half * i as f64 / (MOSER_GRID - 1) as f64;
        for j in 0..MOSER_GRID {
            let t = t0 - half * half + half * half * j as f64 / (MOSER_GRID - 1) as f64;
            sup = sup.max(k.eval(x, pole, t)?.value);
        }
    }
    let rho = 2.0 * r / 3.0;
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let energy = integrate_2d(
        |x, t| match k.eval(x, pole, t) {
            Ok(p) => p.value * p.value,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        (x0 - rho, x0 + rho),
        (t0 - rho * rho, t0),
        QuadOptions::with_rel_tol(1e-8),
    )?
    .value;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let denom = (energy / (r * r * r)).sqrt();
    if !(denom > 0.0) {
        return Err(param("u vanishes on the cylinder"));
    }
    Ok(sup / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explicit::GaussianKernel;
    use crate::kernel::{FnKernel, KernelValue};

    #[test]
    fn constant_function_examples() {
        let cube = Cube::interval_at(0.0, 0.5).unwrap();
        let v = Potential::constant(2.0);
        let ratio = fefferman_phong_ratio(&v, &TestFunction::Constant, &cube, 0.5).unwrap();
        assert!((ratio - 1.0).abs() < 1e-12);

        let big = Cube::interval_at(0.0, 2.0).unwrap();
        let v = Potential::constant(3.0);
        let ratio = fefferman_phong_ratio(&v, &TestFunction::Constant, &big, 0.5).unwrap();
        assert!((ratio - 12f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn hat_ratio_matches_hand_computation() {
        // Hat of half-width 1/2 centred in Z = [−1/2, 1/2], V = 1: energy
        // ∫u'² = 4, ∫u² = 1/3, so ratio = (4 + 1/3)/(1/3).
        let cube = Cube::interval_at(0.0, 1.0).unwrap();
        let u = TestFunction::Hat { center: 0.0, half_width: 0.5 };
        let ratio = fefferman_phong_ratio(&Potential::constant(1.0), &u, &cube, 1.0).unwrap();
        assert!((ratio - 13.0).abs() < 1e-9);
    }

    #[test]
    fn family_shape() {
        let cube = Cube::interval_at(0.0, 1.0).unwrap();
        let fam = fefferman_phong_family(&cube, 7).unwrap();
        assert_eq!(fam.len(), 50);
        assert_eq!(fam, fefferman_phong_family(&cube, 7).unwrap());
        let v = Potential::quadratic(0.0, 0.0, 1.0);
        let min = fam
            .iter()
            .map(|u| fefferman_phong_ratio(&v, u, &cube, 1.0).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(min >= 0.01);
    }

    #[test]
    fn vanishing_test_function_rejected() {
        let cube = Cube::interval_at(0.0, 1.0).unwrap();
        let u = TestFunction::Hat { center: 5.0, half_width: 0.1 };
        assert!(fefferman_phong_ratio(&Potential::constant(1.0), &u, &cube, 1.0).is_err());
    }

    #[test]
    fn moser_constant_solution() {
        let k = FnKernel::new("one", |_, _, _| Ok(KernelValue::from_value(2.5)));
        let cyl = Cylinder { x0: 0.3, t0: 1.0, r: 0.4 };
        let ratio = moser_ratio(&k, 0.0, &cyl).unwrap();
        assert!((ratio - (27.0f64 / 16.0).sqrt()).abs() < 1e-9);
        assert!(moser_ratio(&k, 0.0, &Cylinder { x0: 0.0, t0: 0.5, r: 0.4 }).is_err());
    }

    #[test]
    fn moser_gaussian_is_finite() {
        for cyl in Cylinder::random_family(3, 4) {
            let ratio = moser_ratio(&GaussianKernel, 0.0, &cyl).unwrap();
            assert!(ratio.is_finite() && ratio > 0.0);
        }
    }
}
