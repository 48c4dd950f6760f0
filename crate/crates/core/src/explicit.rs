//! Closed-form kernels: the free Gaussian kernel on ℝⁿ and the exact kernel
//! of `−d²/dx² + a₂x² + a₁x + a₀` on the line.

use serde::Serialize;

use crate::error::{param, Result};
use crate::hyperbolic::{coth_minus_csch, ln_csch};
use crate::kernel::{KernelEvaluator, KernelValue};
use crate::potentials::Potential;

/// Smallest time at which kernels are evaluated pointwise.
pub const T_FLOOR: f64 = 1e-12;

pub(crate) fn check_time(t: f64) -> Result<()> {
    if !(t >= T_FLOOR) || !t.is_finite() {
        return Err(param(format!("time must be finite and at least {T_FLOOR}, got {t}")));
    }
    Ok(())
}

/// Coefficients of `V(x) = a₂x² + a₁x + a₀` with `a₂ > 0`. `V` may be signed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticCoeffs {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl QuadraticCoeffs {
    pub fn new(a0: f64, a1: f64, a2: f64) -> Result<Self> {
        if !(a2 > 0.0) || !a2.is_finite() || !a1.is_finite() || !a0.is_finite() {
            return Err(param(format!(
                "quadratic coefficients need finite values and a2 > 0, got ({a0}, {a1}, {a2})"
            )));
        }
        Ok(QuadraticCoeffs { a0, a1, a2 })
    }

    /// Same potential without the constant term.
    pub fn without_a0(self) -> Self {
        QuadraticCoeffs { a0: 0.0, ..self }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.a1 * self.a1 <= 4.0 * self.a0 * self.a2
    }

    pub fn omega(&self) -> f64 {
        self.a2.sqrt()
    }

    pub fn to_potential(&self) -> Potential {
        Potential::quadratic(self.a0, self.a1, self.a2)
    }
}

/// `(4πt)^{−n/2} exp(−|x−y|²/4t)`.
pub fn gaussian_kernel(n: usize, x: &[f64], y: &[f64], t: f64) -> Result<KernelValue> {
    check_time(t)?;
    if n == 0 || x.len() != n || y.len() != n {
        return Err(param(format!(
            "gaussian kernel in dimension {n} got points of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let log = -0.5 * n as f64 * (4.0 * std::f64::consts::PI * t).ln() - d2 / (4.0 * t);
    Ok(KernelValue::from_log(log))
}

/// Exact heat kernel for a quadratic potential, assembled in log-space.
pub fn quadratic_kernel(c: &QuadraticCoeffs, x: f64, y: f64, t: f64) -> Result<KernelValue> {
    check_time(t)?;
    if !(c.a2 > 0.0) {
        return Err(param("a2 must be positive"));
    }
    let w = c.omega();
    let u = 2.0 * w * t;
    let s_log = ln_csch(u);
    let s = s_log.exp();
    let cms = coth_minus_csch(u);
    let a1 = c.a1;
    let log = 0.5 * (w.ln() + s_log - (2.0 * std::f64::consts::PI).ln())
        + (a1 * a1 / (4.0 * c.a2) - c.a0) * t
        - a1 * a1 / (4.0 * w * w * w) * cms
        - 0.5 * w * ((x - y) * (x - y) * s + (x * x + y * y) * cms)
        - a1 / (2.0 * w) * (x + y) * cms;
    Ok(KernelValue::from_log(log))
}

/// `|log p_{a₀} − (log p₀ − a₀t)|`, where `p₀` drops the constant term.
pub fn a0_shift_check(c: &QuadraticCoeffs, x: f64, y: f64, t: f64) -> Result<f64> {
    let full = quadratic_kernel(c, x, y, t)?;
    let base = quadratic_kernel(&c.without_a0(), x, y, t)?;
    Ok((full.log_value - (base.log_value - c.a0 * t)).abs())
}

/// Free heat kernel on the line as an evaluator.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianKernel;

impl KernelEvaluator for GaussianKernel {
    fn eval(&self, x: f64, y: f64, t: f64) -> Result<KernelValue> {
        gaussian_kernel(1, &[x], &[y], t)
    }
    fn label(&self) -> String {
        "gaussian".into()
    }
}

/// Closed-form quadratic-potential kernel as an evaluator.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticKernel(pub QuadraticCoeffs);

impl KernelEvaluator for QuadraticKernel {
    fn eval(&self, x: f64, y: f64, t: f64) -> Result<KernelValue> {
        quadratic_kernel(&self.0, x, y, t)
    }
    fn label(&self) -> String {
        let c = self.0;
        format!("exact(a0={},a1={},a2={})", c.a0, c.a1, c.a2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_normalization_point() {
        let v = gaussian_kernel(1, &[0.3], &[0.3], 1.0 / (4.0 * PI)).unwrap();
        assert!((v.value - 1.0).abs() < 1e-15);
        assert!(gaussian_kernel(1, &[0.0], &[0.0], 0.0).is_err());
        assert!(gaussian_kernel(1, &[0.0], &[0.0], 1e-13).is_err());
        assert!(gaussian_kernel(2, &[0.0], &[0.0], 1.0).is_err());
    }

    #[test]
    fn harmonic_oscillator_origin() {
        let c = QuadraticCoeffs::new(0.0, 0.0, 1.0).unwrap();
        for t in [0.01, 0.5, 3.0] {
            let v = quadratic_kernel(&c, 0.0, 0.0, t).unwrap();
            let expected = (1.0 / (2.0 * t).sinh() / (2.0 * PI)).sqrt();
            assert!((v.value / expected - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn quadratic_is_symmetric() {
        let c = QuadraticCoeffs::new(0.4, -1.1, 2.0).unwrap();
        for &(x, y, t) in &[(0.3, -1.2, 0.1), (2.0, 5.0, 3.0), (-7.0, 1.0, 40.0)] {
            let a = quadratic_kernel(&c, x, y, t).unwrap();
            let b = quadratic_kernel(&c, y, x, t).unwrap();
            assert_eq!(a.log_value, b.log_value);
        }
    }

    #[test]
    fn a0_shift_identity() {
        let c = QuadraticCoeffs::new(5.0, 0.0, 1.0).unwrap();
        assert!(a0_shift_check(&c, 0.0, 0.0, 0.5).unwrap() <= 1e-12);
        let c = QuadraticCoeffs::new(0.0, 0.7, 1.3).unwrap();
        assert_eq!(a0_shift_check(&c, 0.2, -0.4, 0.9).unwrap(), 0.0);
        let c = QuadraticCoeffs::new(-3.0, 0.7, 1.3).unwrap();
        assert!(a0_shift_check(&c, 0.2, -0.4, 0.9).unwrap() <= 1e-12);
    }

    #[test]
    fn rejects_nonpositive_a2() {
        assert!(QuadraticCoeffs::new(0.0, 0.0, 0.0).is_err());
        assert!(QuadraticCoeffs::new(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn extreme_arguments_are_finite() {
        let c = QuadraticCoeffs::new(1.0, 0.5, 1.0).unwrap();
        for &(x, y, t) in &[(1e3, -1e3, 1e4), (1e3, 1e3, 1e-3), (0.0, 0.0, 1e4), (-1e3, 1e3, 1e-12)] {
            let v = quadratic_kernel(&c, x, y, t).unwrap();
            assert!(v.log_value.is_finite(), "({x}, {y}, {t})");
        }
    }
}
