//! Discretised Dirichlet kernels, the tridiagonal eigensolver and the
//! converged reference kernel.

use heatkernel::explicit::{gaussian_kernel, quadratic_kernel, GaussianKernel, QuadraticCoeffs, QuadraticKernel};
use heatkernel::potentials::Potential;
use heatkernel::spectral::{
    build_spectral, build_spectral_with, dirichlet_interval_kernel, eval_spectral, mass, pde_residual,
    semigroup_defect, ConvergedKernel, DiscreteHamiltonian, ProbeGrid, SpectralOptions,
};
use heatkernel::tridiag::{kth_eigenvalue, sym_tridiag_eigen};
use heatkernel::KernelEvaluator;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn dense(diag: &[f64], off: &[f64]) -> DMatrix<f64> {
    let n = diag.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else if i + 1 == j {
            off[i]
        } else if j + 1 == i {
            off[j]
        } else {
            0.0
        }
    })
}

#[test]
fn hamiltonian_eigenpairs_match_dense_solver() {
    let v = Potential::quadratic(1.0, 0.5, 1.0);
    let h = DiscreteHamiltonian::new(&v, 5.0, 300).unwrap();
    let off = vec![h.off_diagonal; h.diagonal.len() - 1];
    let ours = sym_tridiag_eigen(&h.diagonal, &off, None).unwrap();
    let reference = dense(&h.diagonal, &off).symmetric_eigen();
    let mut values: Vec<(f64, usize)> = reference.eigenvalues.iter().copied().zip(0..).collect();
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let scale = values.last().unwrap().0.abs();
    for (k, &(lam, col)) in values.iter().enumerate() {
        assert!((ours.values[k] - lam).abs() <= 1e-11 * scale, "k = {k}");
        if k < 60 {
            let dot: f64 = ours.vectors[k].iter().zip(reference.eigenvectors.column(col).iter()).map(|(a, b)| a * b).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-9, "k = {k}: {dot}");
        }
    }
    let third = kth_eigenvalue(&h.diagonal, &off, 2).unwrap();
    assert!((third - values[2].0).abs() <= 1e-11 * scale);
}

#[test]
fn free_eigenvalues_converge_at_second_order() {
    let l = 2.0;
    let err = |m: usize| {
        let k = build_spectral(&Potential::constant(0.0), l, m).unwrap();
        let exact = (std::f64::consts::PI / (2.0 * l)).powi(2);
        (k.eigenvalues[0] - exact).abs()
    };
    let ratio = err(99) / err(199);
    assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
}

#[test]
fn harmonic_ground_energy() {
    let k = build_spectral_with(&Potential::quadratic(0.0, 0.0, 1.0), 8.0, 2001, SpectralOptions { t_min: Some(0.05) })
        .unwrap();
    assert!((k.eigenvalues[0] - 1.0).abs() < 1e-3);
    assert!((k.eigenvalues[1] - 3.0).abs() < 1e-2);
    // Rayleigh quotient of the discrete ground state.
    let h = DiscreteHamiltonian::new(&Potential::quadratic(0.0, 0.0, 1.0), 8.0, 2001).unwrap();
    let u = &k.modes[0];
    let n = u.len();
    let mut num = 0.0;
    for i in 0..n {
        let mut hu = h.diagonal[i] * u[i];
        if i > 0 {
            hu += h.off_diagonal * u[i - 1];
        }
        if i + 1 < n {
            hu += h.off_diagonal * u[i + 1];
        }
        num += u[i] * hu;
    }
    let den: f64 = u.iter().map(|x| x * x).sum();
    assert!((num / den - k.eigenvalues[0]).abs() < 1e-10);
}

#[test]
fn shifted_quadratic_matches_closed_form() {
    // Discrete dispersion grows like |x − y|⁴h²/t³, so far from the diagonal
    // only the error relative to the slice maximum is small.
    let v = Potential::quadratic(1.0, 1.0, 1.0);
    let k = build_spectral_with(&v, 8.0, 1599, SpectralOptions { t_min: Some(0.05) }).unwrap();
    let c = QuadraticCoeffs::new(1.0, 1.0, 1.0).unwrap();
    for &t in &[0.05, 0.2, 0.5, 1.0] {
        let (mut worst, mut peak, mut near) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..17 {
            for j in 0..17 {
                let x = -2.0 + 0.25 * i as f64;
                let y = -2.0 + 0.25 * j as f64;
                let a = eval_spectral(&k, x, y, t).unwrap().value;
                let b = quadratic_kernel(&c, x, y, t).unwrap().value;
                worst = worst.max((a - b).abs());
                peak = peak.max(b);
                if (x - y).abs() <= 0.5 {
                    near = near.max((a / b - 1.0).abs());
                }
            }
        }
        assert!(worst / peak < 1e-3, "t = {t}: {}", worst / peak);
        assert!(near < 1e-3, "t = {t}: {near}");
    }
}

#[test]
fn sine_series_is_the_free_limit() {
    let err = |m: usize| {
        let k = build_spectral(&Potential::constant(0.0), 2.0, m).unwrap();
        [(0.0, 0.0, 0.1), (0.5, -0.5, 0.3), (1.2, 1.0, 1.0)]
            .iter()
            .map(|&(x, y, t)| {
                let a = eval_spectral(&k, x, y, t).unwrap().value;
                let b = dirichlet_interval_kernel(-2.0, 2.0, x, y, t, None).unwrap().value;
                (a / b - 1.0).abs()
            })
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (err(199), err(399));
    assert!(fine < 1e-4);
    assert!(coarse / fine > 3.0 && coarse / fine < 5.0, "{coarse} / {fine}");
}

#[test]
fn series_and_images_agree() {
    let pi = std::f64::consts::PI;
    for &(x, y, t) in &[(0.5, 1.0, 0.2), (1.5, 1.5, 1.0), (2.9, 0.3, 3.0)] {
        let images = dirichlet_interval_kernel(0.0, pi, x, y, t, None).unwrap().value;
        let series = dirichlet_interval_kernel(0.0, pi, x, y, t, Some(400)).unwrap().value;
        assert!((images / series - 1.0).abs() < 1e-12, "({x}, {y}, {t})");
    }
}

#[test]
fn spectral_kernel_properties() {
    let v = Potential::polynomial(vec![0.5, 0.0, 0.3, 0.0, 0.1]);
    let k = build_spectral(&v, 3.0, 299).unwrap();
    for &t in &[0.05, 0.3, 2.0] {
        for &x in &[-2.5, -0.7, 0.0, 1.3] {
            let m = mass(&k, x, t, 3.0).unwrap();
            assert!(m <= 1.0 + 1e-8, "x = {x}, t = {t}: {m}");
            for &y in &[-1.9, 0.4, 2.8] {
                let a = k.eval(x, y, t).unwrap();
                assert_eq!(a, k.eval(y, x, t).unwrap());
                assert!(a.value >= 0.0);
            }
        }
    }
    assert!(semigroup_defect(&k, 0.4, -0.9, 0.15, 0.35, 3.0).unwrap() <= 1e-6);
}

#[test]
fn domain_monotonicity_on_nested_grids() {
    let v = Potential::quadratic(0.1, 0.3, 1.0);
    let small = build_spectral(&v, 2.0, 399).unwrap();
    let large = build_spectral(&v, 4.0, 799).unwrap();
    for &t in &[0.05, 0.5, 2.0] {
        for i in 0..=20 {
            for j in 0..=20 {
                let x = -2.0 + 0.2 * i as f64;
                let y = -2.0 + 0.2 * j as f64;
                let a = small.eval(x, y, t).unwrap().value;
                let b = large.eval(x, y, t).unwrap().value;
                assert!(a <= b + 1e-8, "({x}, {y}, {t}): {a} > {b}");
            }
        }
    }
}

#[test]
fn feynman_kac_lower_comparison() {
    // 0 ≤ x² ≤ 4 on (−2, 2), so e^{−4t}Γ_D ≤ p_B.
    let k = build_spectral(&Potential::quadratic(0.0, 0.0, 1.0), 2.0, 799).unwrap();
    let free = build_spectral(&Potential::constant(0.0), 2.0, 799).unwrap();
    for &t in &[0.05, 0.2, 1.0, 3.0] {
        for i in 1..18 {
            for j in 1..18 {
                let x = -1.8 + 0.2 * i as f64;
                let y = -1.8 + 0.2 * j as f64;
                let p = k.eval(x, y, t).unwrap().value;
                let discrete = free.eval(x, y, t).unwrap().value;
                let exact = dirichlet_interval_kernel(-2.0, 2.0, x, y, t, None).unwrap().value;
                assert!((-4.0 * t).exp() * discrete <= p * (1.0 + 1e-6), "discrete ({x}, {y}, {t}): {discrete} {p}");
                assert!((-4.0 * t).exp() * exact <= p * (1.0 + 1e-6), "exact ({x}, {y}, {t}): {exact} {p}");
            }
        }
    }
}

#[test]
fn converged_kernel_examples() {
    let free = ConvergedKernel::new(Potential::constant(0.0), 1e-6, 0.1).unwrap();
    for &(x, y, t) in &[(0.0, 0.0, 0.1), (0.5, -0.5, 1.0), (1.0, 2.0, 3.0)] {
        let a = free.eval_traced(x, y, t).unwrap();
        let g = gaussian_kernel(1, &[x], &[y], t).unwrap().value;
        // The discretisation error at h = 0.01 is the limiting term.
        assert!((a.value.value / g - 1.0).abs() < 1e-4, "({x}, {y}, {t})");
        for w in a.trace.windows(2) {
            assert!(w[0].1 <= w[1].1 * (1.0 + 1e-6));
        }
    }
    let v = Potential::quadratic(0.0, 0.0, 1.0);
    let ck = ConvergedKernel::new(v, 1e-4, 0.05).unwrap();
    let exact = quadratic_kernel(&QuadraticCoeffs::new(0.0, 0.0, 1.0).unwrap(), 0.0, 0.0, 0.5).unwrap().value;
    assert!((ck.eval(0.0, 0.0, 0.5).unwrap().value / exact - 1.0).abs() < 1e-3);
}

#[test]
fn pde_residual_converges_at_second_order() {
    let grid = ProbeGrid { x_range: (-1.0, 1.0), t_range: (0.2, 1.0), nx: 9, nt: 5, h: 0.04, tau: 0.02 };
    let harmonic = Potential::quadratic(0.0, 0.0, 1.0);
    let k = QuadraticKernel(QuadraticCoeffs::new(0.0, 0.0, 1.0).unwrap());
    let zero = Potential::constant(0.0);
    for (v, kernel) in [(&harmonic, &k as &dyn KernelEvaluator), (&zero, &GaussianKernel)] {
        let coarse = pde_residual(v, kernel, 0.3, &grid).unwrap().max_residual;
        let fine = pde_residual(v, kernel, 0.3, &grid.with_steps(0.02, 0.01)).unwrap().max_residual;
        let ratio = coarse / fine;
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }
    // Negative control: the free kernel does not solve the harmonic equation.
    for steps in [(0.04, 0.02), (0.02, 0.01), (0.01, 0.005)] {
        let r = pde_residual(&harmonic, &GaussianKernel, 0.3, &grid.with_steps(steps.0, steps.1)).unwrap();
        assert!(r.max_residual > 0.1 * r.max_vp);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_tridiagonal_spectra(
        diag in prop::collection::vec(-5.0f64..5.0, 2..40),
        seed in prop::collection::vec(-2.0f64..2.0, 40),
    ) {
        let off: Vec<f64> = seed[..diag.len() - 1].to_vec();
        let ours = sym_tridiag_eigen(&diag, &off, None).unwrap();
        let mut reference: Vec<f64> = dense(&diag, &off).symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        for (a, b) in ours.values.iter().zip(&reference) {
            prop_assert!((a - b).abs() <= 1e-11 * 10.0);
        }
        for (i, u) in ours.vectors.iter().enumerate() {
            let norm: f64 = u.iter().map(|x| x * x).sum();
            prop_assert!((norm - 1.0).abs() < 1e-10, "vector {}", i);
        }
    }
}
