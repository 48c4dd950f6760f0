//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use std::cell::RefCell;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_intervals: 4000,
        }
    }
}

impl QuadOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadOptions {
            rel_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs_value: f64,
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut gauss = fc * WG[3];
    let mut kronrod = fc * WGK[7];
    let mut abs_sum = kronrod.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let hl = half.abs();
    let resabs = abs_sum * hl;
    let resasc = asc * hl;
    let mut err = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: err,
        abs_value: resabs,
    }
}

/// Integrates `f` over `[a, b]` to `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Estimate> {
    integrate_with_breaks(f, &[a, b], opts)
}

/// Integrates over consecutive segments given by `points` (sorted), which
/// lets callers place kinks and peaks on segment boundaries.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    opts: QuadOptions,
) -> Result<Estimate> {
    if points.len() < 2 {
        return Err(Error::Parameter("quadrature needs at least two points".into()));
    }
    let mut segs: Vec<Segment> = points
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| kronrod15(&f, w[0], w[1]))
        .collect();
    if segs.is_empty() {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    loop {
        let value: f64 = segs.iter().map(|s| s.value).sum();
        let error: f64 = segs.iter().map(|s| s.error).sum();
        let abs_total: f64 = segs.iter().map(|s| s.abs_value).sum();
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= target || error <= 100.0 * f64::EPSILON * abs_total {
            return Ok(Estimate { value, error });
        }
        if segs.len() >= opts.max_intervals {
            return Err(Error::Quadrature {
                a: points[0],
                b: points[points.len() - 1],
                error,
            });
        }
        let (idx, worst) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, s)| (i, *s))
            .expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            return Ok(Estimate { value, error });
        }
        segs[idx] = kronrod15(&f, worst.a, mid);
        segs.push(kronrod15(&f, mid, worst.b));
    }
}

/// Iterated integral over the rectangle `[a, b] × [c, d]`, inner variable second.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    (a, b): (f64, f64),
    (c, d): (f64, f64),
    opts: QuadOptions,
) -> Result<Estimate> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let outer = integrate(
        |u| match integrate(|v| f(u, v), c, d, opts) {
            Ok(est) => est.value,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        a,
        b,
        opts,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => outer,
    }
}
