//! Reference kernels for general potentials: eigendecomposition of the
//! finite-difference Dirichlet Hamiltonian on `[−L, L]`, the sine-series
//! Dirichlet kernel of an interval, domain-doubling convergence, and the
//! semigroup / PDE-residual / mass diagnostics shared by every kernel.
//!
//! Mode count: resolving `p_B(·,·,t)` needs the modes with
//! `λ ≲ λ₀ + 40/t`, about `(2L/π)·√(40/t)` of them for a flat potential.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::explicit::check_time;
use crate::kernel::{KernelEvaluator, KernelValue};
use crate::potentials::Potential;
use crate::quadrature::{integrate_with_breaks, QuadOptions};
use crate::tridiag::{kth_eigenvalue, sym_tridiag_eigen};

/// Truncation threshold of eigensums relative to the accumulated value.
const SUM_TOL: f64 = 1e-16;

/// `−d²/dx² + V` by central differences on the interior nodes of `[−L, L]`.
#[derive(Debug, Clone)]
pub struct DiscreteHamiltonian {
    pub half_width: f64,
    pub spacing: f64,
    pub nodes: Vec<f64>,
    pub diagonal: Vec<f64>,
    pub off_diagonal: f64,
}

impl DiscreteHamiltonian {
    /// `m` interior nodes, spacing `h = 2L/(m + 1)`.
    pub fn new(v: &Potential, half_width: f64, m: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(param(format!("half-width must be positive, got {half_width}")));
        }
        if m < 3 {
            return Err(param(format!("need at least 3 grid points, got {m}")));
        }
        if v.dimension() != 1 {
            return Err(param("spectral kernels are one-dimensional"));
        }
        if !v.is_bounded_on(-half_width, half_width) {
            return Err(Error::Domain(format!(
                "potential is unbounded on [-{half_width}, {half_width}]"
            )));
        }
        let h = 2.0 * half_width / (m + 1) as f64;
        let nodes: Vec<f64> = (1..=m).map(|i| -half_width + h * i as f64).collect();
        let diagonal = nodes
            .iter()
            .map(|&x| Ok(v.eval1(x)? + 2.0 / (h * h)))
            .collect::<Result<Vec<_>>>()?;
        Ok(DiscreteHamiltonian {
            half_width,
            spacing: h,
            nodes,
            diagonal,
            off_diagonal: -1.0 / (h * h),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpectralOptions {
    /// Keep only the modes needed for `t ≥ t_min` (λ ≤ λ₀ + 40/t_min);
    /// evaluation below `t_min` is then rejected.
    pub t_min: Option<f64>,
}

/// Eigendecomposition of a [`DiscreteHamiltonian`].
#[derive(Debug, Clone)]
pub struct SpectralKernel {
    pub half_width: f64,
    pub spacing: f64,
    pub nodes: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors orthonormal in the `h`-weighted inner product.
    pub modes: Vec<Vec<f64>>,
    pub t_min: Option<f64>,
    max_sq: f64,
    diagonal: Vec<f64>,
    coupling: f64,
    columns: ColumnCache,
}

type Columns = HashMap<(usize, u64), Arc<Vec<f64>>>;

/// Columns of `e^{−tH}` computed by uniformization, keyed by node and time.
#[derive(Default)]
struct ColumnCache(Mutex<Columns>);

const COLUMN_CACHE_LIMIT: usize = 256;

impl Clone for ColumnCache {
    fn clone(&self) -> Self {
        ColumnCache::default()
    }
}

impl std::fmt::Debug for ColumnCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ColumnCache")
    }
}

/// An eigensum is trusted when its value is at least this fraction of the
/// sum of absolute terms plus the truncation tail.
const TRUST_RATIO: f64 = 1e-7;
/// Relative size of the neglected Poisson tail in uniformization.
const POISSON_TOL: f64 = 1e-16;

/// `e^{−tH} e_j` for `H = diag(d) − w(shift + shift^T)` with `w > 0`, by
/// uniformization: `e^{−tH} = Σ_k e^{−ct}(ct)^k/k! (I − H/c)^k` with
/// `c = max d`. Every term is nonnegative, so small entries keep full
/// relative accuracy where an eigensum cancels.
fn uniformized_column(diag: &[f64], w: f64, j: usize, t: f64) -> Vec<f64> {
    let m = diag.len();
    let c = diag.iter().fold(0.0f64, |a, &d| a.max(d));
    let a_diag: Vec<f64> = diag.iter().map(|d| (c - d) / c).collect();
    let a_off = w / c;
    let lam = c * t;
    let log_lam = lam.ln();
    let mut v = vec![0.0; m];
    let mut next = vec![0.0; m];
    let mut out = vec![0.0; m];
    v[j] = 1.0;
    let (mut lo, mut hi) = (j, j);
    let mut log_w = -lam;
    let mut k = 0usize;
    loop {
        let weight = log_w.exp();
        for i in lo..=hi {
            out[i] += weight * v[i];
        }
        let log_next = log_w + log_lam - ((k + 1) as f64).ln();
        if (k + 2) as f64 > lam {
            // Σ_{i>k} w_i ≤ w_{k+1}/(1 − λ/(k+2)), and every entry of the
            // iterates is at most 1.
            let tail = log_next - (1.0 - lam / (k + 2) as f64).ln();
            let floor = out[lo..=hi]
                .iter()
                .filter(|&&x| x > 1e-280)
                .fold(f64::INFINITY, |a, &x| a.min(x));
            if tail < -740.0 || (floor.is_finite() && tail < floor.ln() + POISSON_TOL.ln()) {
                break;
            }
        }
        let (nlo, nhi) = (lo.saturating_sub(1), (hi + 1).min(m - 1));
        for i in nlo..=nhi {
            let mut s = a_diag[i] * v[i];
            if i > 0 {
                s += a_off * v[i - 1];
            }
            if i + 1 < m {
                s += a_off * v[i + 1];
            }
            next[i] = s;
        }
        std::mem::swap(&mut v, &mut next);
        lo = nlo;
        hi = nhi;
        log_w = log_next;
        k += 1;
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralMeta {
    pub half_width: f64,
    pub grid_points: usize,
    pub spacing: f64,
    pub modes: usize,
}

/// Full eigendecomposition on `[−L, L]` with `m` interior nodes.
pub fn build_spectral(v: &Potential, half_width: f64, m: usize) -> Result<SpectralKernel> {
    build_spectral_with(v, half_width, m, SpectralOptions::default())
}

pub fn build_spectral_with(
    v: &Potential,
    half_width: f64,
    m: usize,
    opts: SpectralOptions,
) -> Result<SpectralKernel> {
    let ham = DiscreteHamiltonian::new(v, half_width, m)?;
    let off = vec![ham.off_diagonal; m - 1];
    let upper = match opts.t_min {
        Some(t) => {
            check_time(t)?;
            Some(kth_eigenvalue(&ham.diagonal, &off, 0)? + 40.0 / t)
        }
        None => None,
    };
    let eig = sym_tridiag_eigen(&ham.diagonal, &off, upper)?;
    let scale = 1.0 / ham.spacing.sqrt();
    let modes: Vec<Vec<f64>> = eig
        .vectors
        .into_iter()
        .map(|v| v.into_iter().map(|x| x * scale).collect())
        .collect();
    let max_sq = modes
        .iter()
        .flat_map(|m| m.iter())
        .fold(0.0f64, |a, x| a.max(x * x));
    Ok(SpectralKernel {
        half_width,
        spacing: ham.spacing,
        nodes: ham.nodes,
        eigenvalues: eig.values,
        modes,
        t_min: opts.t_min,
        max_sq,
        coupling: -ham.off_diagonal,
        diagonal: ham.diagonal,
        columns: ColumnCache::default(),
    })
}

impl SpectralKernel {
    pub fn meta(&self) -> SpectralMeta {
        SpectralMeta {
            half_width: self.half_width,
            grid_points: self.nodes.len(),
            spacing: self.spacing,
            modes: self.eigenvalues.len(),
        }
    }

    /// Interpolation stencil: up to two (node index, weight) pairs. Boundary
    /// nodes carry the Dirichlet value 0 and are omitted.
    fn stencil(&self, x: f64) -> Result<[(usize, f64); 2]> {
        let l = self.half_width;
        if !(x >= -l && x <= l) {
            return Err(param(format!("point {x} lies outside [-{l}, {l}]")));
        }
        let m = self.nodes.len();
        let s = ((x + l) / self.spacing).clamp(0.0, (m + 1) as f64);
        let j = (s.floor() as usize).min(m);
        let w = s - j as f64;
        // grid index j ↔ node j − 1; j = 0 and j = m + 1 are boundary points
        let left = if j >= 1 { (j - 1, 1.0 - w) } else { (0, 0.0) };
        let right = if j < m { (j, w) } else { (0, 0.0) };
        Ok([left, right])
    }

    fn mode_at(&self, k: usize, st: &[(usize, f64); 2]) -> f64 {
        st[0].1 * self.modes[k][st[0].0] + st[1].1 * self.modes[k][st[1].0]
    }

    fn check_t(&self, t: f64) -> Result<()> {
        check_time(t)?;
        if let Some(t_min) = self.t_min {
            if t < t_min * (1.0 - 1e-12) {
                return Err(param(format!(
                    "kernel was built for t ≥ {t_min}; got t = {t}"
                )));
            }
        }
        Ok(())
    }

    /// Orthonormality defect `max |⟨φ_k, φ_l⟩_h − δ_kl|` over the first
    /// `count` modes.
    pub fn orthonormality_defect(&self, count: usize) -> f64 {
        let count = count.min(self.modes.len());
        (0..count)
            .into_par_iter()
            .map(|k| {
                (0..=k)
                    .map(|l| {
                        let dot: f64 = self.modes[k]
                            .iter()
                            .zip(&self.modes[l])
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                            * self.spacing;
                        (dot - if k == l { 1.0 } else { 0.0 }).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Truncated eigensum `Σ e^{−λ_k t} φ_k(x) φ_k(y)`, scaled by `e^{λ₀t}`
/// internally so large `t` never underflows. Where the sum cancels (small
/// `t`, distant points) the value is recomputed by uniformization, which
/// is exact for the same discrete operator.
pub fn eval_spectral(k: &SpectralKernel, x: f64, y: f64, t: f64) -> Result<KernelValue> {
    k.check_t(t)?;
    let sx = k.stencil(x)?;
    let sy = k.stencil(y)?;
    let lam0 = k.eigenvalues[0];
    let mut acc = 0.0;
    let mut abs = 0.0;
    let mut stopped = false;
    for i in 0..k.eigenvalues.len() {
        let decay = (-(k.eigenvalues[i] - lam0) * t).exp();
        if i > 0 && acc > 0.0 && decay * k.max_sq < SUM_TOL * acc {
            stopped = true;
            break;
        }
        let term = decay * (k.mode_at(i, &sx) * k.mode_at(i, &sy));
        acc += term;
        abs += term.abs();
    }
    if !stopped && k.eigenvalues.len() < k.nodes.len() {
        let last = *k.eigenvalues.last().expect("at least one mode");
        abs += k.max_sq * (-(last - lam0) * t).exp();
    }
    if acc > 0.0 && acc >= TRUST_RATIO * abs {
        return Ok(KernelValue::from_log(acc.ln() - lam0 * t));
    }
    // The column side depends only on the two stencils so the result stays
    // exactly symmetric.
    let key = |s: &[(usize, f64); 2]| (s[0].0, s[1].0, s[0].1.to_bits(), s[1].1.to_bits());
    let (sa, sb) = if key(&sx) > key(&sy) { (&sy, &sx) } else { (&sx, &sy) };
    let mut value = 0.0;
    for &(j, wb) in sb {
        if wb == 0.0 {
            continue;
        }
        let col = k.column(j, t);
        for &(i, wa) in sa {
            value += wa * wb * col[i];
        }
    }
    Ok(KernelValue::from_value(value / k.spacing))
}

impl SpectralKernel {
    fn column(&self, j: usize, t: f64) -> Arc<Vec<f64>> {
        let key = (j, t.to_bits());
        if let Some(c) = self.columns.0.lock().expect("column cache").get(&key) {
            return c.clone();
        }
        let col = Arc::new(uniformized_column(&self.diagonal, self.coupling, j, t));
        let mut cache = self.columns.0.lock().expect("column cache");
        if cache.len() >= COLUMN_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, col.clone());
        col
    }
}

impl KernelEvaluator for SpectralKernel {
    fn eval(&self, x: f64, y: f64, t: f64) -> Result<KernelValue> {
        eval_spectral(self, x, y, t)
    }
    fn label(&self) -> String {
        format!(
            "spectral(L={},m={},modes={})",
            self.half_width,
            self.nodes.len(),
            self.eigenvalues.len()
        )
    }
    fn node_rule(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((self.nodes.clone(), vec![self.spacing; self.nodes.len()]))
    }
}

/// Dirichlet heat kernel of `(a, b)`,
/// `(2/ℓ) Σ sin(kπ(x−a)/ℓ) sin(kπ(y−a)/ℓ) e^{−(kπ/ℓ)²t}` with `ℓ = b − a`.
///
/// With `terms = None` the series runs until the next term is below `1e−16`
/// of the partial sum; for `t < ℓ²` the equivalent image sum (Poisson
/// summation of the same series) is used instead, which keeps full relative
/// accuracy where the sine series cancels. An explicit `terms` always sums
/// exactly that many sine terms.
pub fn dirichlet_interval_kernel(
    a: f64,
    b: f64,
    x: f64,
    y: f64,
    t: f64,
    terms: Option<usize>,
) -> Result<KernelValue> {
    if !(b > a) || !a.is_finite() || !b.is_finite() {
        return Err(param(format!("need a < b, got ({a}, {b})")));
    }
    check_time(t)?;
    for p in [x, y] {
        if !(p >= a && p <= b) {
            return Err(param(format!("point {p} lies outside [{a}, {b}]")));
        }
    }
    if x == a || x == b || y == a || y == b {
        return Ok(KernelValue::zero());
    }
    let len = b - a;
    if terms.is_none() && t < len * len {
        return Ok(dirichlet_images(len, x - a, y - a, t));
    }
    let base = std::f64::consts::PI / len;
    let lam1 = base * base;
    let (fx, fy) = ((x - a) * base, (y - a) * base);
    let limit = terms.unwrap_or(usize::MAX);
    let mut acc = 0.0;
    let mut k = 1usize;
    while k <= limit {
        let kf = k as f64;
        let decay = (-(kf * kf - 1.0) * lam1 * t).exp();
        if terms.is_none() && k > 1 && acc > 0.0 && decay < SUM_TOL * acc {
            break;
        }
        if terms.is_none() && decay == 0.0 {
            break;
        }
        acc += decay * (kf * fx).sin() * (kf * fy).sin();
        k += 1;
    }
    let scaled = 2.0 / len * acc;
    if scaled > 0.0 {
        Ok(KernelValue::from_log(scaled.ln() - lam1 * t))
    } else {
        Ok(KernelValue::zero())
    }
}

/// `Σ_n G(x−y+2nℓ) − G(x+y+2nℓ)` for `x, y ∈ (0, ℓ)`, relative to the
/// direct term `G(x−y)`.
fn dirichlet_images(len: f64, x: f64, y: f64, t: f64) -> KernelValue {
    let d0 = (x - y) * (x - y);
    let rel = |d: f64| (-(d * d - d0) / (4.0 * t)).exp();
    let mut sum = 0.0;
    let mut n: i64 = 0;
    loop {
        let shifts: &[f64] = if n == 0 { &[0.0] } else { &[1.0, -1.0] };
        let mut largest = 0.0f64;
        for &sgn in shifts {
            let off = sgn * 2.0 * n as f64 * len;
            let direct = if n == 0 { 0.0 } else { rel(x - y + off) };
            let image = rel(x + y + off);
            largest = largest.max(direct).max(image);
            sum += direct - image;
        }
        // the n = 0 reflection x + y and its partner x + y − 2ℓ are both
        // leading-order; keep going at least through |n| = 1
        if n >= 1 && largest < 1e-18 {
            break;
        }
        n += 1;
    }
    let ratio = 1.0 + sum;
    if ratio > 0.0 {
        let log_g = -0.5 * (4.0 * std::f64::consts::PI * t).ln() - d0 / (4.0 * t);
        KernelValue::from_log(log_g + sum.ln_1p())
    } else {
        KernelValue::zero()
    }
}

/// Dirichlet Laplacian kernel of `(a, b)` as an evaluator.
#[derive(Debug, Clone, Copy)]
pub struct DirichletInterval {
    pub a: f64,
    pub b: f64,
}

impl KernelEvaluator for DirichletInterval {
    fn eval(&self, x: f64, y: f64, t: f64) -> Result<KernelValue> {
        dirichlet_interval_kernel(self.a, self.b, x, y, t, None)
    }
    fn label(&self) -> String {
        format!("dirichlet({}, {})", self.a, self.b)
    }
}

/// Grid spacing of the domain-doubling ladder.
pub const LADDER_SPACING: f64 = 0.01;
/// Smallest half-width on the ladder; others are `LADDER_BASE · 2^j`.
pub const LADDER_BASE: f64 = 4.0;
const MAX_DOUBLINGS: usize = 4;

/// Spectral kernels on `[−L, L]` for `L = 4·2^j`, built lazily at a common
/// spacing (so the grids nest) and reused across evaluations.
pub struct ConvergedKernel {
    potential: Potential,
    rel_tol: f64,
    spacing: f64,
    t_min: f64,
    cache: Mutex<HashMap<u32, Arc<SpectralKernel>>>,
}

/// One domain-doubling evaluation with its convergence history.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergedValue {
    pub value: KernelValue,
    /// `(L, value)` for each domain visited.
    pub trace: Vec<(f64, f64)>,
}

impl ConvergedKernel {
    /// Kernels valid for `t ≥ t_min` at spacing [`LADDER_SPACING`].
    pub fn new(potential: Potential, rel_tol: f64, t_min: f64) -> Result<Self> {
        Self::with_spacing(potential, rel_tol, t_min, LADDER_SPACING)
    }

    pub fn with_spacing(potential: Potential, rel_tol: f64, t_min: f64, spacing: f64) -> Result<Self> {
        if !(rel_tol > 0.0) {
            return Err(param("rel_tol must be positive"));
        }
        check_time(t_min)?;
        let nodes = LADDER_BASE / spacing;
        if !(spacing > 0.0) || (nodes - nodes.round()).abs() > 1e-9 {
            return Err(param("spacing must divide the base half-width"));
        }
        if potential.dimension() != 1 {
            return Err(param("converged kernels are one-dimensional"));
        }
        Ok(ConvergedKernel {
            potential,
            rel_tol,
            spacing,
            t_min,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// The spectral kernel on `[−4·2^j, 4·2^j]`.
    pub fn level(&self, j: u32) -> Result<Arc<SpectralKernel>> {
        if let Some(k) = self.cache.lock().expect("cache lock").get(&j) {
            return Ok(k.clone());
        }
        let l = LADDER_BASE * (1u64 << j) as f64;
        let m = (2.0 * l / self.spacing).round() as usize - 1;
        let built = Arc::new(build_spectral_with(
            &self.potential,
            l,
            m,
            SpectralOptions {
                t_min: Some(self.t_min),
            },
        )?);
        let mut cache = self.cache.lock().expect("cache lock");
        Ok(cache.entry(j).or_insert(built).clone())
    }

    /// Ladder index of the first domain `≥ max(4√t, 2|x|, 2|y|, 4)`.
    pub fn start_level(x: f64, y: f64, t: f64) -> u32 {
        let l0 = (4.0 * t.sqrt()).max(2.0 * x.abs()).max(2.0 * y.abs()).max(LADDER_BASE);
        let mut j = 0;
        while LADDER_BASE * ((1u64 << j) as f64) < l0 * (1.0 - 1e-12) {
            j += 1;
        }
        j
    }

    pub fn eval_traced(&self, x: f64, y: f64, t: f64) -> Result<ConvergedValue> {
        check_time(t)?;
        let j0 = Self::start_level(x, y, t);
        let mut trace = Vec::new();
        let mut prev: Option<KernelValue> = None;
        for j in j0..=j0 + MAX_DOUBLINGS as u32 {
            let k = self.level(j)?;
            let v = eval_spectral(&k, x, y, t)?;
            trace.push((k.half_width, v.value));
            if let Some(p) = prev {
                let diff = if v.value > 0.0 {
                    (v.value - p.value).abs() / v.value
                } else if p.value == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                if diff < self.rel_tol {
                    return Ok(ConvergedValue { value: v, trace });
                }
            }
            prev = Some(v);
        }
        Err(Error::Convergence {
            message: format!(
                "kernel at ({x}, {y}, {t}) did not settle to {} within {MAX_DOUBLINGS} doublings",
                self.rel_tol
            ),
            trace: trace.iter().map(|p| p.1).collect(),
        })
    }
}

impl KernelEvaluator for ConvergedKernel {
    fn eval(&self, x: f64, y: f64, t: f64) -> Result<KernelValue> {
        Ok(self.eval_traced(x, y, t)?.value)
    }
    fn label(&self) -> String {
        format!("converged(h={},rel_tol={})", self.spacing, self.rel_tol)
    }
}

/// One-shot domain-doubling evaluation.
pub fn converged_kernel(v: &Potential, x: f64, y: f64, t: f64, rel_tol: f64) -> Result<KernelValue> {
    ConvergedKernel::new(v.clone(), rel_tol, t)?.eval(x, y, t)
}

/// Half-width beyond which the Gaussian bound on `p(x,z,t)p(z,y,s)`
/// leaves a relative tail far below `1e−12`.
pub fn gaussian_tail_window(x: f64, y: f64, t: f64, s: f64) -> f64 {
    x.abs().max(y.abs()) + 12.0 * (t + s).sqrt()
}

/// `|∫ p(x,z,t)p(z,y,s)dz − p(x,y,t+s)| / p(x,y,t+s)` over `[−L, L]`. Grid
/// kernels use their exact node rule; others adaptive quadrature. The
/// integrand is scaled by `p(x,y,t+s)` in log-space so nothing underflows.
pub fn semigroup_defect<K: KernelEvaluator + ?Sized>(
    k: &K,
    x: f64,
    y: f64,
    t: f64,
    s: f64,
    half_width: f64,
) -> Result<f64> {
    check_time(t)?;
    check_time(s)?;
    let target = k.eval(x, y, t + s)?.log_value;
    if !target.is_finite() {
        return Err(param("p(x, y, t + s) vanishes; relative defect undefined"));
    }
    let scaled = |z: f64| -> Result<f64> {
        let a = k.eval(x, z, t)?.log_value;
        let b = k.eval(z, y, s)?.log_value;
        Ok((a + b - target).exp())
    };
    let total = if let Some((nodes, weights)) = k.node_rule() {
        nodes
            .iter()
            .zip(&weights)
            .filter(|(z, _)| z.abs() <= half_width)
            .map(|(&z, &w)| Ok(w * scaled(z)?))
            .sum::<Result<f64>>()?
    } else {
        let failure = std::cell::RefCell::new(None);
        let peak = (s * x + t * y) / (t + s);
        let mut pts = vec![-half_width, half_width];
        for p in [x, y, peak] {
            if p.abs() < half_width {
                pts.push(p);
            }
        }
        pts.sort_by(f64::total_cmp);
        let est = integrate_with_breaks(
            |z| match scaled(z) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            &pts,
            QuadOptions::with_rel_tol(1e-10),
        )?;
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        est.value
    };
    Ok((total - 1.0).abs())
}

/// `∫_{−L}^{L} p(x,y,t) dy`; node rule for grid kernels.
pub fn mass<K: KernelEvaluator + ?Sized>(k: &K, x: f64, t: f64, half_width: f64) -> Result<f64> {
    if let Some((nodes, weights)) = k.node_rule() {
        return nodes
            .iter()
            .zip(&weights)
            .filter(|(z, _)| z.abs() <= half_width)
            .map(|(&z, &w)| Ok(w * k.eval(x, z, t)?.value))
            .sum();
    }
    let failure = std::cell::RefCell::new(None);
    let mut pts = vec![-half_width, half_width];
    if x.abs() < half_width {
        pts.insert(1, x);
    }
    let est = integrate_with_breaks(
        |z| match k.eval(x, z, t) {
            Ok(v) => v.value,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        &pts,
        QuadOptions::with_rel_tol(1e-10),
    )?;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(est.value),
    }
}

/// Probe grid for [`pde_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeGrid {
    pub x_range: (f64, f64),
    pub t_range: (f64, f64),
    pub nx: usize,
    pub nt: usize,
    /// Spatial difference step.
    pub h: f64,
    /// Temporal difference step.
    pub tau: f64,
}

impl ProbeGrid {
    pub fn with_steps(self, h: f64, tau: f64) -> Self {
        ProbeGrid { h, tau, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdeResidual {
    pub max_residual: f64,
    pub at: (f64, f64),
    /// Largest `|V p|` on the probe grid, the scale for negative controls.
    pub max_vp: f64,
}

fn linspace(range: (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![range.0];
    }
    (0..n)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
        .collect()
}

/// `max |D_τ p − D_h² p + V p|` over the probe grid for `p(·, y, ·)`.
pub fn pde_residual<K: KernelEvaluator + ?Sized>(
    v: &Potential,
    k: &K,
    y: f64,
    grid: &ProbeGrid,
) -> Result<PdeResidual> {
    if !(grid.h > 0.0 && grid.tau > 0.0) || grid.nx == 0 || grid.nt == 0 {
        return Err(param("probe grid needs positive steps and points"));
    }
    if !(grid.t_range.0 - grid.tau > 0.0) {
        return Err(param("probe grid touches t ≤ 0"));
    }
    let xs = linspace(grid.x_range, grid.nx);
    let ts = linspace(grid.t_range, grid.nt);
    let points: Vec<(f64, f64)> = ts
        .iter()
        .flat_map(|&t| xs.iter().map(move |&x| (x, t)))
        .collect();
    let results: Vec<(f64, (f64, f64), f64)> = points
        .par_iter()
        .map(|&(x, t)| {
            let p = |x: f64, t: f64| k.eval(x, y, t).map(|v| v.value);
            let centre = p(x, t)?;
            let dt = (p(x, t + grid.tau)? - p(x, t - grid.tau)?) / (2.0 * grid.tau);
            let dxx = (p(x + grid.h, t)? - 2.0 * centre + p(x - grid.h, t)?) / (grid.h * grid.h);
            let vp = v.eval1(x)? * centre;
            Ok(((dt - dxx + vp).abs(), (x, t), vp.abs()))
        })
        .collect::<Result<_>>()?;
    let mut out = PdeResidual {
        max_residual: 0.0,
        at: points[0],
        max_vp: 0.0,
    };
    for (r, at, vp) in results {
        if r > out.max_residual {
            out.max_residual = r;
            out.at = at;
        }
        out.max_vp = out.max_vp.max(vp);
    }
    Ok(out)
}
