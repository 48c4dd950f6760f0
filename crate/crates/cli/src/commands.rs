//! The `kernel`, `bounds`, `weights`, `ode` and `chain` subcommands.

use std::path::{Path, PathBuf};

use heatkernel::bounds::{chain_plan, chained_lower_bound, fit_constants, FitReport};
use heatkernel::explicit::{quadratic_kernel, QuadraticCoeffs};
use heatkernel::ode::{closed_form_state, integrate_odes, assemble_kernel};
use heatkernel::potentials::{ap_constant, cube_average, doubling_fit, rh_constant, Cube, RhExponent};
use heatkernel::KernelEvaluator;
use rayon::prelude::*;

use crate::config::{EngineKind, LoadedConfig};
use crate::engine::build_engine;
use crate::output::{format_float, Cell, CsvTable};
use crate::CliError;

/// What a subcommand printed and whether its checks passed.
#[derive(Debug, Default)]
pub struct Report {
    pub lines: Vec<String>,
    pub artifacts: Vec<PathBuf>,
    pub ok: bool,
}

impl Report {
    fn new() -> Self {
        Report {
            ok: true,
            ..Report::default()
        }
    }

    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    fn write(&mut self, table: &CsvTable, path: PathBuf) -> Result<(), CliError> {
        table.write(&path)?;
        self.artifacts.push(path);
        Ok(())
    }
}

fn provenance(cfg: &LoadedConfig, engine: &str) -> String {
    let g = &cfg.config.grid;
    format!(
        "config={} {engine} grid={}x{}x{}",
        cfg.hash,
        g.nx,
        g.ny,
        g.t.len()
    )
}

/// Per time slice, `max |a − b| / max |b|`; the largest over all slices.
pub fn slice_disagreement(points: &[(f64, f64, f64)], a: &[f64], b: &[f64]) -> f64 {
    let mut times: Vec<f64> = points.iter().map(|p| p.2).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .iter()
        .map(|&t| {
            let (mut diff, mut peak) = (0.0f64, 0.0f64);
            for (i, p) in points.iter().enumerate() {
                if p.2 == t {
                    diff = diff.max((a[i] - b[i]).abs());
                    peak = peak.max(b[i].abs());
                }
            }
            if peak > 0.0 {
                diff / peak
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

pub fn kernel(cfg: &LoadedConfig, out: &Path, tol: f64) -> Result<Report, CliError> {
    let engine = build_engine(cfg)?;
    let points = cfg.config.grid.sample_grid().points();
    let values: Vec<(f64, f64)> = points
        .par_iter()
        .map(|&(x, y, t)| engine.kernel.eval(x, y, t).map(|v| (v.log_value, v.value)))
        .collect::<heatkernel::Result<_>>()?;
    let mut table = CsvTable::new(&["x", "y", "t", "log_p", "p"], provenance(cfg, &engine.meta));
    for (&(x, y, t), &(log_p, p)) in points.iter().zip(&values) {
        table.push(vec![x.into(), y.into(), t.into(), log_p.into(), p.into()]);
    }
    let mut report = Report::new();
    report.write(&table, out.join("kernel.csv"))?;
    report.line(format!("kernel: {} points, {}", points.len(), engine.meta));
    if cfg.config.engine.kind != EngineKind::Explicit {
        if let Some((a0, a1, a2)) = cfg.quadratic().filter(|q| q.2 > 0.0) {
            let c = QuadraticCoeffs::new(a0, a1, a2)?;
            let exact: Vec<f64> = points
                .par_iter()
                .map(|&(x, y, t)| quadratic_kernel(&c, x, y, t).map(|v| v.value))
                .collect::<heatkernel::Result<_>>()?;
            let computed: Vec<f64> = values.iter().map(|v| v.1).collect();
            let err = slice_disagreement(&points, &computed, &exact);
            let pass = err <= tol;
            report.ok &= pass;
            report.line(format!(
                "closed-form cross-check: max slice-relative disagreement {} (tol {}) {}",
                format_float(err),
                tol,
                if pass { "PASS" } else { "FAIL" }
            ));
        }
    }
    Ok(report)
}

fn fit_row(r: &FitReport) -> Vec<Cell> {
    let c = &r.constants;
    vec![
        r.family.name().into(),
        r.feasible.into(),
        c.c0.into(),
        c.c1.into(),
        c.c2.into(),
        c.c3.into(),
        c.beta.into(),
        c.kappa.into(),
        c.epsilon.into(),
        r.min_slack.into(),
        r.gaussian_excess.unwrap_or(f64::NAN).into(),
        r.reason.clone().unwrap_or_default().into(),
    ]
}

pub const FIT_HEADER: [&str; 12] = [
    "family",
    "feasible",
    "c0",
    "c1",
    "c2",
    "c3",
    "beta",
    "kappa",
    "epsilon",
    "min_slack",
    "gaussian_excess",
    "reason",
];

pub fn fit_table(reports: &[FitReport], provenance: String) -> CsvTable {
    let mut t = CsvTable::new(&FIT_HEADER, provenance);
    for r in reports {
        t.push(fit_row(r));
    }
    t
}

pub fn bounds(cfg: &LoadedConfig, out: &Path) -> Result<Report, CliError> {
    if cfg.config.envelopes.is_empty() {
        return Err(CliError::Config("bounds needs at least one [[envelope]] table".into()));
    }
    let engine = build_engine(cfg)?;
    let grid = cfg.config.grid.sample_grid();
    let prov = provenance(cfg, &engine.meta);
    let mut report = Report::new();
    let mut fits = Vec::new();
    for spec in &cfg.config.envelopes {
        let template = spec.build()?;
        let fit = fit_constants(&cfg.potential, &*engine.kernel, &template, &grid)?;
        let mut slack = CsvTable::new(&["x", "y", "t", "log_p", "log_envelope", "slack"], prov.clone());
        for p in &fit.points {
            slack.push(vec![
                p.x.into(),
                p.y.into(),
                p.t.into(),
                p.log_p.into(),
                p.log_envelope.into(),
                p.slack.into(),
            ]);
        }
        report.write(&slack, out.join(format!("slack_{}.csv", fit.family.name())))?;
        let c = &fit.constants;
        report.line(format!(
            "{}: {} c0={} c1={} c2={} c3={} min_slack={}{}",
            fit.family.name(),
            if fit.feasible { "FEASIBLE" } else { "INFEASIBLE" },
            format_float(c.c0),
            format_float(c.c1),
            format_float(c.c2),
            format_float(c.c3),
            format_float(fit.min_slack),
            fit.reason.as_deref().map(|r| format!(" ({r})")).unwrap_or_default()
        ));
        report.ok &= fit.feasible;
        fits.push(fit);
    }
    report.write(&fit_table(&fits, prov), out.join("fits.csv"))?;
    let has_upper = fits.iter().any(|f| f.family.is_upper());
    let has_lower = fits.iter().any(|f| !f.family.is_upper());
    if has_upper && has_lower {
        report.line(format!(
            "sandwich: {}",
            if report.ok { "HOLDS on the whole grid" } else { "FAILS" }
        ));
    }
    Ok(report)
}

fn window(lo: f64, hi: f64) -> Result<Cube, CliError> {
    Ok(Cube::from_bounds(lo, hi)?)
}

pub fn weights(cfg: &LoadedConfig, out: &Path) -> Result<Report, CliError> {
    let w = &cfg.config.weights;
    let v = &cfg.potential;
    let win = window(w.window_min, w.window_max)?;
    let prov = format!("config={} window=[{}, {}] depth={}", cfg.hash, w.window_min, w.window_max, w.depth);
    let mut summary = CsvTable::new(&["class", "exponent", "constant", "divergent", "beta"], prov.clone());
    let mut trace = CsvTable::new(&["class", "exponent", "depth", "side", "ratio", "truncated"], prov.clone());
    let mut report = Report::new();
    let mut reports = Vec::new();
    for &q in &w.rh_q {
        let exp = if q.is_infinite() { RhExponent::Infinity } else { RhExponent::Finite(q) };
        reports.push(("rh", rh_constant(v, exp, &win, w.depth)?));
    }
    for &p in &w.ap_p {
        reports.push(("ap", ap_constant(v, p, &win, w.depth)?));
    }
    for (class, r) in &reports {
        summary.push(vec![
            (*class).into(),
            r.exponent.into(),
            r.constant.into(),
            r.is_divergent().into(),
            r.beta.unwrap_or(f64::NAN).into(),
        ]);
        for (rows, truncated) in [(&r.trace, false), (&r.truncated_trace, true)] {
            for s in rows {
                trace.push(vec![
                    (*class).into(),
                    r.exponent.into(),
                    (s.depth as i64).into(),
                    s.side.into(),
                    s.ratio.into(),
                    truncated.into(),
                ]);
            }
        }
        report.line(format!(
            "{class}(exponent {}): constant {}{}",
            r.exponent,
            format_float(r.constant),
            if r.is_divergent() { " DIVERGENT" } else { "" }
        ));
    }
    match doubling_fit(v, &win, w.depth) {
        Ok(d) => {
            summary.push(vec![
                "doubling".into(),
                d.exponent.into(),
                d.constant.into(),
                false.into(),
                f64::NAN.into(),
            ]);
            report.line(format!(
                "doubling: exponent {} constant {} residual {}",
                format_float(d.exponent),
                format_float(d.constant),
                format_float(d.residual)
            ));
        }
        Err(e) => report.line(format!("doubling: not available ({e})")),
    }
    report.write(&summary, out.join("weights.csv"))?;
    report.write(&trace, out.join("weights_trace.csv"))?;
    Ok(report)
}

pub fn ode(cfg: &LoadedConfig, out: &Path) -> Result<Report, CliError> {
    let (a0, a1, a2) = cfg
        .quadratic()
        .filter(|q| q.2 > 0.0)
        .ok_or_else(|| CliError::Config("ode needs a quadratic potential with a2 > 0".into()))?;
    let c = QuadraticCoeffs::new(a0, a1, a2)?;
    let shifted = c.without_a0();
    let o = &cfg.config.ode;
    let traj = integrate_odes(&shifted, o.t0, o.t1, closed_form_state(&shifted, o.t0)?, o.samples)?;
    let xs = cfg.config.grid.xs();
    let ys = cfg.config.grid.ys();
    let rows: Vec<(f64, f64)> = traj
        .par_iter()
        .map(|s| -> heatkernel::Result<(f64, f64)> {
            let state_err = s.max_abs_diff(&closed_form_state(&shifted, s.t)?);
            let mut log_err = 0.0f64;
            for &x in &xs {
                for &y in &ys {
                    let a = assemble_kernel(s, x, y).log_value - a0 * s.t;
                    let b = quadratic_kernel(&c, x, y, s.t)?.log_value;
                    log_err = log_err.max((a - b).abs());
                }
            }
            Ok((state_err, log_err))
        })
        .collect::<heatkernel::Result<_>>()?;
    let mut table = CsvTable::new(
        &["t", "alpha", "beta", "gamma", "mu", "nu", "log_phi", "state_error", "kernel_log_error"],
        format!("config={} engine=ode t0={} t1={} samples={}", cfg.hash, o.t0, o.t1, o.samples),
    );
    for (s, &(se, le)) in traj.iter().zip(&rows) {
        table.push(vec![
            s.t.into(),
            s.alpha.into(),
            s.beta.into(),
            s.gamma.into(),
            s.mu.into(),
            s.nu.into(),
            s.log_phi.into(),
            se.into(),
            le.into(),
        ]);
    }
    let mut report = Report::new();
    report.write(&table, out.join("ode.csv"))?;
    let state = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let log = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let tol = &cfg.config.tolerances;
    let pass = state <= tol.ode_state && log <= tol.ode_log;
    report.ok = pass;
    report.line(format!(
        "ode: max state error {} (tol {}), max kernel log error {} (tol {}) {}",
        format_float(state),
        tol.ode_state,
        format_float(log),
        tol.ode_log,
        if pass { "PASS" } else { "FAIL" }
    ));
    Ok(report)
}

pub fn chain(cfg: &LoadedConfig, out: &Path) -> Result<Report, CliError> {
    let ch = &cfg.config.chain;
    let v = &cfg.potential;
    if v.dimension() != 1 {
        return Err(CliError::Config("chain is one-dimensional".into()));
    }
    let plan = chain_plan(&[ch.x], &[ch.y], ch.t, ch.sigma)?;
    let win = window(ch.window_min, ch.window_max)?;
    let d = doubling_fit(v, &win, ch.depth)?;
    let doubling = 2f64.powf(d.exponent) / d.constant;
    let bound = chained_lower_bound(v, &plan, ch.c0, ch.c1, doubling)?;
    let averages: Vec<f64> = plan
        .waypoints
        .par_iter()
        .map(|w| cube_average(v, &Cube::new(w.clone(), plan.cube_side)?))
        .collect::<heatkernel::Result<_>>()?;
    let mut table = CsvTable::new(
        &["i", "x_i", "cube_average"],
        format!(
            "config={} M={} sigma={} spacing={} cube_side={}",
            cfg.hash,
            plan.m,
            format_float(plan.sigma),
            format_float(plan.spacing),
            format_float(plan.cube_side)
        ),
    );
    for (i, (w, a)) in plan.waypoints.iter().zip(&averages).enumerate() {
        table.push(vec![i.into(), w[0].into(), (*a).into()]);
    }
    let mut report = Report::new();
    report.write(&table, out.join("chain.csv"))?;
    report.line(format!(
        "plan: M={} sigma={} spacing={} cube_side={}",
        plan.m,
        format_float(plan.sigma),
        format_float(plan.spacing),
        format_float(plan.cube_side)
    ));
    report.line(format!(
        "chained lower bound: log p >= {} (doubling constant {})",
        format_float(bound.log_value),
        format_float(doubling)
    ));
    Ok(report)
}
