//! Envelopes, chaining, inequality checks and constant fitting.

use heatkernel::bounds::{
    average_upper, ball_lower, chain_plan, chain_steps, chained_lower_bound, default_sigma, fefferman_phong_family,
    fefferman_phong_ratio, fit_constants, interval_lower, linspace, moser_ratio, quadratic_sharp_envelope,
    symmetrized_upper, two_branch_lower, Ball, BoundEnvelope, Cylinder, EnvelopeConstants, EnvelopeFamily,
    SampleGrid,
};
use heatkernel::explicit::{gaussian_kernel, quadratic_kernel, GaussianKernel, QuadraticCoeffs, QuadraticKernel};
use heatkernel::potentials::{doubling_fit, Cube, Potential};
use heatkernel::spectral::{ConvergedKernel, DirichletInterval};
use heatkernel::KernelEvaluator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{LN_2, PI};

fn envelope(family: EnvelopeFamily, c0: f64, c1: f64, c2: f64, c3: f64, beta: f64) -> BoundEnvelope {
    BoundEnvelope::new(
        family,
        EnvelopeConstants {
            c0,
            c1,
            c2,
            c3,
            beta,
            ..EnvelopeConstants::default()
        },
    )
    .unwrap()
}

fn harmonic() -> Potential {
    Potential::quadratic(0.0, 0.0, 1.0)
}

#[test]
fn average_upper_examples() {
    let e = envelope(EnvelopeFamily::AverageUpper, 0.7, 2.0, 0.3, 1.0, 0.8);
    let zero = Potential::constant(0.0);
    let (x, y, t) = (0.4, -0.5, 0.6);
    let got = average_upper(&zero, &e, &[x], &[y], t).unwrap().log_value;
    let shape = 0.7f64.ln() - 0.5 * t.ln() - 0.3 * (x - y) * (x - y) / t;
    assert!((got - shape).abs() < 1e-14);

    // At x = 0 the cube average of z² over Z_√t is t/12.
    for &t in &[0.5, 3.0, 10.0] {
        let got = average_upper(&harmonic(), &e, &[0.0], &[0.0], t).unwrap().log_value;
        let arg: f64 = t * t / 12.0;
        let m = if arg <= 1.0 { arg } else { arg.powf(0.8) };
        let expected = 0.7f64.ln() - 0.5 * t.ln() - 2.0 * m.sqrt();
        assert!((got - expected).abs() < 1e-13, "t = {t}");
    }

    let weaker = envelope(EnvelopeFamily::AverageUpper, 0.7, 1.0, 0.3, 1.0, 0.8);
    let a = average_upper(&harmonic(), &weaker, &[1.0], &[0.0], 0.5).unwrap();
    let b = average_upper(&harmonic(), &e, &[1.0], &[0.0], 0.5).unwrap();
    assert!(b.log_value < a.log_value);
}

#[test]
fn smaller_beta_weakens_the_bound() {
    let v = Potential::polynomial(vec![1.0, 0.0, 2.0, 0.0, 0.5]);
    for &beta in &[0.3, 0.6, 0.9] {
        let strong = envelope(EnvelopeFamily::AverageUpper, 1.0, 1.0, 0.25, 1.0, beta + 0.1);
        let weak = envelope(EnvelopeFamily::AverageUpper, 1.0, 1.0, 0.25, 1.0, beta);
        for &(x, t) in &[(0.0, 2.0), (1.5, 0.8), (-2.0, 1.0), (3.0, 0.5)] {
            let a = average_upper(&v, &weak, &[x], &[0.2], t).unwrap().log_value;
            let b = average_upper(&v, &strong, &[x], &[0.2], t).unwrap().log_value;
            assert!(a >= b, "β = {beta}, x = {x}, t = {t}");
        }
    }
}

#[test]
fn symmetrized_examples() {
    let v = Potential::quadratic(0.3, -0.4, 1.2);
    let sym = envelope(EnvelopeFamily::SymmetrizedUpper, 0.9, 0.2, 0.7, 1.0, 0.6);
    for &(x, y, t) in &[(0.1, 1.3, 0.4), (-2.0, 0.5, 2.0), (0.0, 0.0, 1.0)] {
        let a = symmetrized_upper(&v, &sym, &[x], &[y], t).unwrap();
        let b = symmetrized_upper(&v, &sym, &[y], &[x], t).unwrap();
        assert_eq!(a, b);
    }
    // On the diagonal the two decay terms coincide.
    let single = envelope(EnvelopeFamily::AverageUpper, 0.9, 1.4, 0.2, 1.0, 0.6);
    for &(x, t) in &[(0.7, 0.3), (-1.1, 2.5)] {
        let a = symmetrized_upper(&v, &sym, &[x], &[x], t).unwrap().log_value;
        let b = average_upper(&v, &single, &[x], &[x], t).unwrap().log_value;
        assert!((a - b).abs() < 1e-13);
    }
    let zero = Potential::constant(0.0);
    let a = symmetrized_upper(&zero, &sym, &[0.5], &[-0.5], 0.5).unwrap().log_value;
    assert!((a - (0.9f64.ln() - 0.5 * 0.5f64.ln() - 0.2 * 2.0)).abs() < 1e-14);
}

#[test]
fn quadratic_sharp_regimes() {
    let e = envelope(EnvelopeFamily::QuadraticSharp, 0.25, 0.5, 1.0, 0.3, 1.0);
    let at_one = quadratic_sharp_envelope(&e, 0.5, -0.2, 1.0).unwrap();
    assert_eq!(at_one.value, at_one.short_time);
    assert!((at_one.long_time.log_value - (-1.0 - 0.3 * 0.29)).abs() < 1e-14);
    let origin = quadratic_sharp_envelope(&e, 0.0, 0.0, 0.25).unwrap();
    assert!((origin.value.value - 2.0).abs() < 1e-14);
    let late = quadratic_sharp_envelope(&e, 0.0, 0.0, 1.5).unwrap();
    assert_eq!(late.value, late.long_time);
}

#[test]
fn two_branch_lower_examples() {
    let e = envelope(EnvelopeFamily::LowerNear, 0.2, 0.9, 1.5, 0.6, 1.0);
    let t: f64 = 0.64;
    let base = 0.2f64.ln() - 0.5 * t.ln();
    // |x − y| = κ√t exactly belongs to the far branch.
    let d = 0.125 * t.sqrt();
    let zero = Potential::constant(0.0);
    let far = two_branch_lower(&zero, &e, &[0.0], &[d], t).unwrap().log_value;
    assert!((far - (base - 0.6 * d * d / t)).abs() < 1e-14);
    let near = two_branch_lower(&zero, &e, &[0.0], &[0.99 * d], t).unwrap().log_value;
    assert!((near - base).abs() < 1e-14);

    let near = two_branch_lower(&harmonic(), &e, &[0.0], &[0.0], t).unwrap().log_value;
    assert!((near - (base - 0.9 * t * t / 12.0)).abs() < 1e-14);

    // Far branch: the inner cube has side t/|x−y|.
    let (x, y) = (0.3, 1.3);
    let far = two_branch_lower(&harmonic(), &e, &[x], &[y], t).unwrap().log_value;
    let side = t / (y - x);
    let avg = x * x + side * side / 12.0;
    let d2 = (y - x) * (y - x);
    let expected = base - 0.6 * d2 / t - 0.9 * t * 1.5f64.powf(d2 / t) * avg;
    assert!((far - expected).abs() < 1e-13);
}

#[test]
fn interval_lower_examples() {
    let eps = 0.5;
    let root = eps * eps / LN_2;
    let r = interval_lower(eps, 0.3, 0.3, root, 0.4).unwrap();
    assert!(r.clamped && r.value.value == 0.0);
    let r = interval_lower(eps, 0.3, 0.3, 2.0 * root, 0.4).unwrap();
    assert!(r.clamped);
    let r = interval_lower(eps, 0.3, 0.4, 1e-3, 0.4).unwrap();
    assert!(!r.clamped && (r.factor - 1.0).abs() < 1e-100);
    assert!(interval_lower(0.0, 0.3, 0.4, 0.1, 0.4).is_err());
}

#[test]
fn interval_constant_fits_below_one() {
    let eps = PI / 4.0;
    let grid = SampleGrid {
        xs: linspace(eps + 0.01, PI - eps - 0.01, 9),
        ys: linspace(eps + 0.01, PI - eps - 0.01, 9),
        ts: linspace(0.01, 1.0, 6),
    };
    let template = BoundEnvelope::new(
        EnvelopeFamily::IntervalLower,
        EnvelopeConstants {
            epsilon: eps,
            ..EnvelopeConstants::default()
        },
    )
    .unwrap();
    let k = DirichletInterval { a: 0.0, b: PI };
    let fit = fit_constants(&Potential::constant(0.0), &k, &template, &grid).unwrap();
    assert!(fit.feasible, "{:?}", fit.reason);
    assert!(fit.constants.c0 > 0.0 && fit.constants.c0 < 1.0);
    for p in &fit.points {
        let env = interval_lower(eps, p.x, p.y, p.t, fit.constants.c0).unwrap().value.value;
        let g = k.eval(p.x, p.y, p.t).unwrap().value;
        assert!(env <= g * (1.0 + 1e-12));
    }
}

#[test]
fn ball_lower_examples() {
    let ball = Ball {
        center: vec![0.0, 0.0],
        radius: 2.0,
    };
    let t = LN_2 / (PI * PI);
    let at_center = ball_lower(&ball, 1.0, 0.5, &[0.1, 0.0], &[0.1, 0.0], t, 0.3).unwrap().log_value;
    let expected = 0.3f64.ln() - t.ln() - LN_2;
    assert!((at_center - expected).abs() < 1e-14);
    for &t in &[0.01, 0.3, 2.0] {
        let (x, y) = ([0.2, -0.3], [-0.4, 0.5]);
        let b = ball_lower(&ball, 1.0, 1.0, &x, &y, t, 0.3).unwrap().log_value;
        let g = gaussian_kernel(2, &x, &y, t).unwrap().log_value;
        assert!(b <= g + (0.3 * 4.0 * PI).ln() + 1e-14);
    }
    assert!(ball_lower(&ball, 1.0, 0.5, &[1.5, 0.0], &[0.0, 0.0], 0.1, 0.3).is_err());
}

#[test]
fn chain_examples() {
    assert_eq!(chain_plan(&[0.0], &[1.0], 1.0, None).unwrap().m, 257);
    assert_eq!(chain_plan(&[1.0], &[1.5], 0.5, None).unwrap().m, 129);
    assert_eq!(chain_steps(0.1, 1.0).unwrap(), 3);
}

#[test]
fn chain_spacing_invariant_on_random_far_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let t: f64 = rng.random_range(0.01..4.0);
        let ratio: f64 = rng.random_range(1.0 / 64.0..4.0);
        let x: f64 = rng.random_range(-3.0..3.0);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let y = x + sign * (ratio * t).sqrt();
        let plan = chain_plan(&[x], &[y], t, None).unwrap();
        let m = plan.m as f64;
        let d = (y - x).abs();
        assert!(256.0 * d * d / t < m);
        assert!(m == 1.0 || 256.0 * d * d / t >= m - 1.0 - 1e-9);
        assert!(d / m < (t / m).sqrt() / 16.0);
        assert_eq!(plan.waypoints.len() as u64, plan.m + 1);
        for w in plan.waypoints.windows(2) {
            assert!(((w[1][0] - w[0][0]).abs() - plan.spacing).abs() < 1e-12);
        }
        assert_eq!(plan.sigma, default_sigma(1));
    }
}

#[test]
fn chained_bound_sits_below_the_kernel() {
    let v = harmonic();
    let fit = fit_constants(
        &v,
        &QuadraticKernel(QuadraticCoeffs::new(0.0, 0.0, 1.0).unwrap()),
        &envelope(EnvelopeFamily::LowerNear, 1.0, 1.0, 1.0, 1.0, 1.0),
        &SampleGrid::square(-3.0, 3.0, 13, linspace(0.05, 3.0, 8)),
    )
    .unwrap();
    assert!(fit.feasible);
    let d = doubling_fit(&v, &Cube::from_bounds(-4.0, 4.0).unwrap(), 6).unwrap();
    let doubling = 2f64.powf(d.exponent) / d.constant;
    let k = ConvergedKernel::new(v.clone(), 1e-6, 0.1).unwrap();
    for &(x, y, t) in &[(0.0, 0.5, 1.0), (-1.0, 0.2, 0.5), (1.5, 0.5, 2.0), (0.3, -0.4, 0.1)] {
        let plan = chain_plan(&[x], &[y], t, None).unwrap();
        let bound = chained_lower_bound(&v, &plan, fit.constants.c0, fit.constants.c1, doubling).unwrap();
        let p = k.eval(x, y, t).unwrap();
        assert!(bound.log_value <= p.log_value, "({x}, {y}, {t})");
    }
}

#[test]
fn fefferman_phong_floor() {
    let potentials = [Potential::constant(1.0), harmonic(), Potential::power(1.0).unwrap()];
    let mut floor = f64::INFINITY;
    for v in &potentials {
        for &side in &[0.5, 2.0, 8.0] {
            let cube = Cube::interval_at(0.3, side).unwrap();
            for u in fefferman_phong_family(&cube, 5).unwrap() {
                floor = floor.min(fefferman_phong_ratio(v, &u, &cube, 2.0 / 3.0).unwrap());
            }
        }
    }
    assert!(floor > 0.01, "{floor}");
}

#[test]
fn moser_ratios_stay_bounded() {
    let cylinders = Cylinder::random_family(3, 10);
    let quad = QuadraticKernel(QuadraticCoeffs::new(0.0, 0.0, 1.0).unwrap());
    let kernels: [&dyn KernelEvaluator; 2] = [&GaussianKernel, &quad];
    for k in kernels {
        let worst = cylinders
            .iter()
            .map(|c| moser_ratio(k, 0.0, c).unwrap())
            .fold(0.0f64, f64::max);
        assert!(worst.is_finite() && worst < 100.0, "{}: {worst}", k.label());
    }
}

#[test]
fn harmonic_sandwich() {
    let v = harmonic();
    let k = QuadraticKernel(QuadraticCoeffs::new(0.0, 0.0, 1.0).unwrap());
    let grid = SampleGrid::square(-3.0, 3.0, 13, linspace(0.05, 3.0, 8));
    let upper = fit_constants(&v, &k, &envelope(EnvelopeFamily::SymmetrizedUpper, 1.0, 1.0, 1.0, 1.0, 0.99), &grid)
        .unwrap();
    let near = fit_constants(&v, &k, &envelope(EnvelopeFamily::LowerNear, 1.0, 1.0, 1.0, 1.0, 1.0), &grid).unwrap();
    let far = fit_constants(&v, &k, &envelope(EnvelopeFamily::LowerFar, 1.0, 1.0, 1.0, 1.0, 1.0), &grid).unwrap();
    assert!(upper.feasible && near.feasible && far.feasible);
    let hi = upper.envelope().unwrap();
    let lo = far.envelope().unwrap();
    let (mut near_seen, mut far_seen) = (false, false);
    for (x, y, t) in grid.points() {
        let p = quadratic_kernel(&QuadraticCoeffs::new(0.0, 0.0, 1.0).unwrap(), x, y, t).unwrap().log_value;
        let a = lo.eval(&v, &[x], &[y], t).unwrap().log_value;
        let b = hi.eval(&v, &[x], &[y], t).unwrap().log_value;
        let tol = 1e-9 * p.abs().max(1.0);
        assert!(a <= p + tol && p <= b + tol, "({x}, {y}, {t})");
        if (x - y).abs() < 0.125 * t.sqrt() {
            near_seen = true;
        } else {
            far_seen = true;
        }
    }
    assert!(near_seen && far_seen);
}

#[test]
fn harmonic_fits_are_feasible() {
    let v = harmonic();
    let k = QuadraticKernel(QuadraticCoeffs::new(0.0, 0.0, 1.0).unwrap());
    let grid = SampleGrid::square(-3.0, 3.0, 13, linspace(0.05, 3.0, 8));
    let fit = fit_constants(&v, &k, &envelope(EnvelopeFamily::AverageUpper, 1.0, 1.0, 1.0, 1.0, 0.99), &grid).unwrap();
    assert!(fit.feasible && fit.constants.c1 > 0.0);
    let fit = fit_constants(&v, &k, &envelope(EnvelopeFamily::LowerNear, 1.0, 1.0, 1.0, 1.0, 1.0), &grid).unwrap();
    assert!(fit.feasible && fit.constants.c0 > 0.0 && fit.constants.c1 > 0.0);
    assert_eq!(fit.constants.kappa, 0.125);
}
