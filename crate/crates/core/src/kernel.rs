//! Log-space kernel values and the evaluator abstraction shared by the
//! closed-form, ODE and spectral kernels.

use serde::Serialize;

use crate::error::Result;

/// A heat-kernel value carried in log-space.
///
/// `value` is `exp(log_value)`; it underflows to zero for very negative logs,
/// which is why every comparison in this crate goes through `log_value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelValue {
    pub log_value: f64,
    pub value: f64,
}

impl KernelValue {
    pub fn from_log(log_value: f64) -> Self {
        KernelValue {
            log_value,
            value: log_value.exp(),
        }
    }

    /// Builds a value from a linear-scale number. Negative inputs (truncation
    /// noise of eigensums) are clamped to zero, i.e. `log_value = -inf`.
    pub fn from_value(value: f64) -> Self {
        if value > 0.0 {
            KernelValue {
                log_value: value.ln(),
                value,
            }
        } else {
            KernelValue::zero()
        }
    }

    pub fn zero() -> Self {
        KernelValue {
            log_value: f64::NEG_INFINITY,
            value: 0.0,
        }
    }

    /// Product of two kernel values (sum of logs).
    pub fn mul(self, other: KernelValue) -> Self {
        KernelValue::from_log(self.log_value + other.log_value)
    }
}

/// A one-dimensional heat kernel `p(x, y, t)`.
pub trait KernelEvaluator: Sync {
    fn eval(&self, x: f64, y: f64, t: f64) -> Result<KernelValue>;

    /// Short label used in reports and CSV provenance lines.
    fn label(&self) -> String {
        "kernel".to_string()
    }

    /// Quadrature nodes and weights under which the kernel's semigroup
    /// identity holds exactly (grid-based kernels). `None` means the kernel
    /// is a function on the line and should be integrated adaptively.
    fn node_rule(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

impl<K: KernelEvaluator + ?Sized> KernelEvaluator for &K {
    fn eval(&self, x: f64, y: f64, t: f64) -> Result<KernelValue> {
        (**self).eval(x, y, t)
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn node_rule(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        (**self).node_rule()
    }
}

impl<K: KernelEvaluator + ?Sized> KernelEvaluator for Box<K> {
    fn eval(&self, x: f64, y: f64, t: f64) -> Result<KernelValue> {
        (**self).eval(x, y, t)
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn node_rule(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        (**self).node_rule()
    }
}

/// Adapts a closure into a [`KernelEvaluator`].
pub struct FnKernel<F> {
    name: String,
    f: F,
}

impl<F> FnKernel<F>
where
    F: Fn(f64, f64, f64) -> Result<KernelValue> + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnKernel {
            name: name.into(),
            f,
        }
    }
}

impl<F> KernelEvaluator for FnKernel<F>
where
    F: Fn(f64, f64, f64) -> Result<KernelValue> + Sync,
{
    fn eval(&self, x: f64, y: f64, t: f64) -> Result<KernelValue> {
        (self.f)(x, y, t)
    }
    fn label(&self) -> String {
        self.name.clone()
    }
}

/// Tensor product of two one-dimensional kernels, the only two-dimensional
/// kernels supported (free kernel and separable quadratic potentials).
pub struct ProductKernel2<A, B> {
    pub first: A,
    pub second: B,
}

impl<A: KernelEvaluator, B: KernelEvaluator> ProductKernel2<A, B> {
    pub fn eval(&self, x: [f64; 2], y: [f64; 2], t: f64) -> Result<KernelValue> {
        let a = self.first.eval(x[0], y[0], t)?;
        let b = self.second.eval(x[1], y[1], t)?;
        Ok(a.mul(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_noise_clamps_to_zero() {
        let v = KernelValue::from_value(-1e-14);
        assert_eq!(v.value, 0.0);
        assert_eq!(v.log_value, f64::NEG_INFINITY);
    }

    #[test]
    fn log_and_value_agree() {
        let v = KernelValue::from_log(-3.0);
        assert!((v.value - (-3.0f64).exp()).abs() < 1e-16);
        let deep = KernelValue::from_log(-1.0e4);
        assert_eq!(deep.value, 0.0);
        assert!(deep.log_value.is_finite());
    }
}
