//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

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
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        err: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrate `f` over the finite interval `[a, b]`.
///
/// Returns the estimate and its error bound. Fails with a numeric error when
/// the tolerance cannot be met within the interval budget or the integrand
/// produces non-finite values.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut segs = vec![gk15(&f, a, b)];
    loop {
        let total: f64 = segs.iter().map(|s| s.value).sum();
        let err: f64 = segs.iter().map(|s| s.err).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Numeric("quadrature integrand is not finite".into()));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok((total, err));
        }
        if segs.len() >= MAX_INTERVALS {
            return Err(Error::Numeric(format!(
                "quadrature did not reach tolerance (estimate {total}, error {err})"
            )));
        }
        let (worst, _) = segs
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, s)| if s.err > acc.1 { (i, s.err) } else { acc });
        let s = segs.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            return Err(Error::Numeric("quadrature interval underflow".into()));
        }
        segs.push(gk15(&f, s.a, mid));
        segs.push(gk15(&f, mid, s.b));
    }
}

/// Integrate `f` over `[a, ∞)` through x = a + scale · t / (1 - t).
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    scale: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let one_m = 1.0 - t;
        let x = a + scale * t / one_m;
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            v * scale / (one_m * one_m)
        }
    };
    integrate(g, 0.0, 1.0, abs_tol, rel_tol)
}
