//! Kernel engines selected by `[engine]`.

use heatkernel::explicit::{gaussian_kernel, QuadraticCoeffs, QuadraticKernel};
use heatkernel::ode::{assemble_kernel, closed_form_state, integrate_odes_at, AnsatzState};
use heatkernel::spectral::{build_spectral_with, SpectralKernel, SpectralOptions};
use heatkernel::{Error, KernelEvaluator, KernelValue, Result};

use crate::config::{EngineKind, LoadedConfig};
use crate::CliError;

/// `V ≡ c`: the free kernel times `e^{−ct}`.
pub struct ConstantKernel(pub f64);

impl KernelEvaluator for ConstantKernel {
    fn eval(&self, x: f64, y: f64, t: f64) -> Result<KernelValue> {
        let g = gaussian_kernel(1, &[x], &[y], t)?;
        Ok(KernelValue::from_log(g.log_value - self.0 * t))
    }
    fn label(&self) -> String {
        format!("explicit(V={})", self.0)
    }
}

/// Ansatz ODE trajectory sampled at fixed times; evaluation is only defined
/// at those times.
pub struct OdeKernel {
    a0: f64,
    states: Vec<AnsatzState>,
}

impl OdeKernel {
    pub fn new(c: &QuadraticCoeffs, t0: f64, times: &[f64]) -> Result<Self> {
        let shifted = c.without_a0();
        let mut sorted: Vec<f64> = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.first().is_some_and(|&t| !(t > t0)) {
            return Err(Error::Parameter(format!("ode engine needs every time above t0 = {t0}")));
        }
        let states = integrate_odes_at(&shifted, closed_form_state(&shifted, t0)?, &sorted)?;
        Ok(OdeKernel { a0: c.a0, states })
    }
}

impl KernelEvaluator for OdeKernel {
    fn eval(&self, x: f64, y: f64, t: f64) -> Result<KernelValue> {
        let s = self
            .states
            .iter()
            .find(|s| s.t == t)
            .ok_or_else(|| Error::Parameter(format!("ode engine has no state at t = {t}")))?;
        let k = assemble_kernel(s, x, y);
        Ok(KernelValue::from_log(k.log_value - self.a0 * t))
    }
    fn label(&self) -> String {
        "ode".to_string()
    }
}

/// A built engine plus a line of metadata for CSV provenance.
pub struct Engine {
    pub kernel: Box<dyn KernelEvaluator + Send>,
    pub meta: String,
    pub spectral: Option<SpectralKernel>,
}

pub fn build_engine(cfg: &LoadedConfig) -> std::result::Result<Engine, CliError> {
    let e = &cfg.config.engine;
    let quadratic = || {
        cfg.quadratic()
            .ok_or_else(|| CliError::Config(format!("the {} engine needs a quadratic potential", e.kind.name())))
    };
    match e.kind {
        EngineKind::Explicit => {
            let (a0, a1, a2) = quadratic()?;
            let kernel: Box<dyn KernelEvaluator + Send> = if a2 > 0.0 {
                Box::new(QuadraticKernel(QuadraticCoeffs::new(a0, a1, a2)?))
            } else {
                Box::new(ConstantKernel(a0))
            };
            Ok(Engine {
                kernel,
                meta: "engine=explicit".into(),
                spectral: None,
            })
        }
        EngineKind::Ode => {
            let (a0, a1, a2) = quadratic()?;
            let c = QuadraticCoeffs::new(a0, a1, a2)?;
            let kernel = OdeKernel::new(&c, e.t0, &cfg.config.grid.t)?;
            Ok(Engine {
                kernel: Box::new(kernel),
                meta: format!("engine=ode t0={}", e.t0),
                spectral: None,
            })
        }
        EngineKind::Spectral => {
            let k = build_spectral_with(
                &cfg.potential,
                e.half_width,
                e.nodes,
                SpectralOptions { t_min: Some(e.t_min) },
            )?;
            let m = k.meta();
            let meta = format!(
                "engine=spectral L={} m={} h={} modes={} t_min={}",
                m.half_width, m.grid_points, m.spacing, m.modes, e.t_min
            );
            Ok(Engine {
                kernel: Box::new(k.clone()),
                meta,
                spectral: Some(k),
            })
        }
    }
}
