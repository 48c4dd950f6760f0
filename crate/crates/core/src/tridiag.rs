//! Symmetric tridiagonal eigensolver: Sturm-sequence bisection for the
//! eigenvalues, inverse iteration for the eigenvectors.

use rayon::prelude::*;

use crate::error::{param, Result};

/// Eigenpairs in ascending order; vectors are Euclidean-orthonormal.
#[derive(Debug, Clone)]
pub struct TridiagEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Number of eigenvalues strictly below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64, pivmin: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q.abs() < pivmin {
        q = -pivmin;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        q = diag[i] - x - off[i - 1] * off[i - 1] / q;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn gershgorin(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    (lo, hi)
}

/// k-th smallest eigenvalue (0-based) by bisection.
fn bisect(diag: &[f64], off: &[f64], k: usize, lo: f64, hi: f64, pivmin: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b || b - a <= 2.0 * f64::EPSILON * a.abs().max(b.abs()) {
            break;
        }
        if sturm_count(diag, off, mid, pivmin) > k {
            b = mid;
        } else {
            a = mid;
        }
    }
    0.5 * (a + b)
}

/// LU factorisation of `T − λI` with partial pivoting (two superdiagonals).
struct TridiagLu {
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    dl: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn new(diag: &[f64], off: &[f64], lambda: f64, tiny: f64) -> Self {
        let n = diag.len();
        let mut d: Vec<f64> = diag.iter().map(|v| v - lambda).collect();
        let mut du = off.to_vec();
        let mut dl = off.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        for v in d.iter_mut() {
            if v.abs() < tiny {
                *v = tiny.copysign(*v);
            }
        }
        TridiagLu {
            d,
            du,
            du2,
            dl,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.dl[i] * b[i];
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

fn normalize(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale > 0.0 {
        v.iter_mut().for_each(|x| *x /= scale);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

fn start_vector(n: usize, k: usize) -> Vec<f64> {
    // Deterministic, not aligned with any structured eigenvector.
    (0..n)
        .map(|i| 1.0 + 0.5 * (((i * 7919 + k * 104_729 + 13) % 1009) as f64 / 1009.0))
        .collect()
}

fn inverse_iteration(
    diag: &[f64],
    off: &[f64],
    lambda: f64,
    k: usize,
    tiny: f64,
    against: &[Vec<f64>],
) -> Vec<f64> {
    let lu = TridiagLu::new(diag, off, lambda, tiny);
    let mut v = start_vector(diag.len(), k);
    normalize(&mut v);
    for _ in 0..4 {
        lu.solve(&mut v);
        for u in against {
            let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(x, ui)| *x -= dot * ui);
        }
        normalize(&mut v);
    }
    // Fix the sign so results are reproducible.
    let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// The k-th smallest eigenvalue (0-based).
pub fn kth_eigenvalue(diag: &[f64], off: &[f64], k: usize) -> Result<f64> {
    let n = diag.len();
    if k >= n || off.len() + 1 != n {
        return Err(param("eigenvalue index out of range or malformed matrix"));
    }
    if n == 1 {
        return Ok(diag[0]);
    }
    let (lo, hi) = gershgorin(diag, off);
    let norm = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let pivmin = f64::MIN_POSITIVE.max(f64::EPSILON * f64::EPSILON * norm);
    Ok(bisect(diag, off, k, lo - 1e-12 * norm, hi + 1e-12 * norm, pivmin))
}

/// Full (or partial, when `upper` is given) eigendecomposition of the
/// symmetric tridiagonal matrix with diagonal `diag` and off-diagonal `off`.
/// With `upper = Some(u)` only eigenvalues `≤ u` are computed.
pub fn sym_tridiag_eigen(diag: &[f64], off: &[f64], upper: Option<f64>) -> Result<TridiagEigen> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(param("tridiagonal matrix needs n diagonal and n−1 off-diagonal entries"));
    }
    if diag.iter().chain(off).any(|v| !v.is_finite()) {
        return Err(param("tridiagonal matrix has non-finite entries"));
    }
    if n == 1 {
        return Ok(TridiagEigen {
            values: vec![diag[0]],
            vectors: vec![vec![1.0]],
        });
    }
    let (lo, hi) = gershgorin(diag, off);
    let norm = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let pivmin = f64::MIN_POSITIVE.max(f64::EPSILON * f64::EPSILON * norm);
    let count = match upper {
        Some(u) if u < hi => sturm_count(diag, off, u, pivmin).min(n),
        _ => n,
    };
    let values: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|k| bisect(diag, off, k, lo - 1e-12 * norm, hi + 1e-12 * norm, pivmin))
        .collect();

    // Clusters of close eigenvalues are reorthogonalised within the cluster.
    let gap = 1e-5 * norm;
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for k in 1..=count {
        if k == count || values[k] - values[k - 1] > gap {
            clusters.push((start, k));
            start = k;
        }
    }
    let tiny = f64::EPSILON * norm;
    let vectors: Vec<Vec<f64>> = clusters
        .par_iter()
        .flat_map_iter(|&(a, b)| {
            let mut done: Vec<Vec<f64>> = Vec::with_capacity(b - a);
            for k in a..b {
                // Separate exactly coincident eigenvalues slightly.
                let shift = (k - a) as f64 * 10.0 * tiny;
                let v = inverse_iteration(diag, off, values[k] + shift, k, tiny, &done);
                done.push(v);
            }
            done
        })
        .collect();
    Ok(TridiagEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> (Vec<f64>, Vec<f64>) {
        (vec![2.0; n], vec![-1.0; n - 1])
    }

    #[test]
    fn discrete_laplacian_spectrum() {
        let n = 50;
        let (d, e) = laplacian(n);
        let eig = sym_tridiag_eigen(&d, &e, None).unwrap();
        for (k, &lam) in eig.values.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((lam - exact).abs() < 1e-13, "k = {k}");
        }
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = eig.vectors[i].iter().zip(&eig.vectors[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn partial_spectrum() {
        let (d, e) = laplacian(40);
        let full = sym_tridiag_eigen(&d, &e, None).unwrap();
        let part = sym_tridiag_eigen(&d, &e, Some(1.0)).unwrap();
        assert!(part.values.len() < 40 && !part.values.is_empty());
        assert!(part.values.iter().all(|&v| v <= 1.0));
        assert_eq!(part.values[..], full.values[..part.values.len()]);
    }

    #[test]
    fn degenerate_blocks() {
        // Two decoupled identical blocks: every eigenvalue is double.
        let mut d = vec![2.0; 10];
        d.extend(vec![2.0; 10]);
        let mut e = vec![-1.0; 9];
        e.push(0.0);
        e.extend(vec![-1.0; 9]);
        let eig = sym_tridiag_eigen(&d, &e, None).unwrap();
        for i in 0..20 {
            for j in 0..i {
                let dot: f64 = eig.vectors[i].iter().zip(&eig.vectors[j]).map(|(a, b)| a * b).sum();
                assert!(dot.abs() < 1e-10, "({i}, {j}) dot = {dot}");
            }
        }
    }
}
