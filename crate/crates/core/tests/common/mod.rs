//! Reference implementations used only by the tests. They share no code with
//! the library so that agreement is evidence of correctness.

#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use num::{BigInt, BigRational, FromPrimitive, One, Signed, ToPrimitive, Zero};

const MAX_LEVEL: usize = 12;

/// Double-exponential quadrature over t ∈ [−t_max, t_max] for a change of
/// variables t ↦ (x, dx/dt), halving the step until two levels agree.
fn de_quadrature<M, F>(map: M, f: F, t_max: f64, rel_tol: f64) -> f64
where
    M: Fn(f64) -> Option<(f64, f64)>,
    F: Fn(f64) -> f64,
{
    let term = |t: f64| -> f64 {
        match map(t) {
            Some((x, w)) if w > 0.0 && w.is_finite() => {
                let fx = f(x);
                if fx == 0.0 {
                    0.0
                } else {
                    fx * w
                }
            }
            _ => 0.0,
        }
    };
    let mut h = 0.5;
    let mut sum = term(0.0);
    let mut k = 1;
    while k as f64 * h <= t_max {
        sum += term(k as f64 * h) + term(-(k as f64) * h);
        k += 1;
    }
    let mut estimate = sum * h;
    for _ in 0..MAX_LEVEL {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= t_max {
            sum += term(k as f64 * h) + term(-(k as f64) * h);
            k += 2;
        }
        let next = sum * h;
        if (next - estimate).abs() <= rel_tol * next.abs() {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// ∫_a^b f by tanh-sinh.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let r = 0.5 * (b - a);
    let map = |t: f64| {
        let u = FRAC_PI_2 * t.sinh();
        let x = if u < 0.0 { a + 2.0 * r / (1.0 + (-2.0 * u).exp()) } else { b - 2.0 * r / (1.0 + (2.0 * u).exp()) };
        if x <= a || x >= b {
            return None;
        }
        let ch = u.cosh();
        Some((x, r * FRAC_PI_2 * t.cosh() / (ch * ch)))
    };
    de_quadrature(map, f, 4.5, rel_tol)
}

/// ∫_a^∞ f by exp-sinh.
pub fn exp_sinh<F: Fn(f64) -> f64>(f: F, a: f64, rel_tol: f64) -> f64 {
    let map = |t: f64| {
        let e = (FRAC_PI_2 * t.sinh()).exp();
        let x = a + e;
        if x <= a || !x.is_finite() {
            return None;
        }
        Some((x, FRAC_PI_2 * t.cosh() * e))
    };
    de_quadrature(map, f, 4.5, rel_tol)
}

/// ∫_{−∞}^∞ f by sinh-sinh.
pub fn sinh_sinh<F: Fn(f64) -> f64>(f: F, rel_tol: f64) -> f64 {
    let map = |t: f64| {
        let u = FRAC_PI_2 * t.sinh();
        let x = u.sinh();
        if !x.is_finite() {
            return None;
        }
        Some((x, FRAC_PI_2 * t.cosh() * u.cosh()))
    };
    de_quadrature(map, f, 4.0, rel_tol)
}

/// ∫_{−∞}^b f.
pub fn lower_tail<F: Fn(f64) -> f64>(f: F, b: f64, rel_tol: f64) -> f64 {
    exp_sinh(|x| f(2.0 * b - x), b, rel_tol)
}

const GL5_NODES: [f64; 5] = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
const GL5_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

fn segment<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    if b - a < 0.25 {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        r * GL5_NODES.iter().zip(GL5_WEIGHTS).map(|(x, w)| w * f(c + r * x)).sum::<f64>()
    } else {
        tanh_sinh(f, a, b, 1e-12)
    }
}

/// Kolmogorov–Smirnov distance between `samples` and the distribution with
/// density `pdf`. `mass_below_min` is the probability below the smallest
/// sample; the CDF is accumulated from there between consecutive order
/// statistics.
pub fn ks_distance_from_pdf<F: Fn(f64) -> f64>(samples: &[f64], pdf: F, mass_below: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut cdf = mass_below(xs[0]);
    let mut d: f64 = 0.0;
    for i in 0..xs.len() {
        if i > 0 {
            cdf += segment(&pdf, xs[i - 1], xs[i]);
        }
        d = d.max((cdf - i as f64 / n).abs()).max((cdf - (i + 1) as f64 / n).abs());
    }
    d
}

/// KS distance against an explicit CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Σ_k (a)_k z^k / ((g)_k k!) in exact rational arithmetic on the binary
/// values of the inputs, stopped once a term is below 1e-30 of the sum past
/// the peak of the terms.
pub fn kummer_exact(a: f64, g: f64, z: f64) -> f64 {
    let a = BigRational::from_float(a).unwrap();
    let g = BigRational::from_float(g).unwrap();
    let z = BigRational::from_float(z).unwrap();
    let tiny = BigRational::new(BigInt::one(), BigInt::from(10).pow(30));
    let mut term = BigRational::one();
    let mut sum = BigRational::one();
    let mut k = 0u32;
    loop {
        let kk = BigRational::from_u32(k).unwrap();
        if (&a + &kk).is_zero() {
            break;
        }
        term = term * (&a + &kk) * &z / ((&g + &kk) * (&kk + BigRational::one()));
        sum += &term;
        k += 1;
        let past_peak = BigRational::from_u32(k).unwrap() > z.abs() + a.abs();
        if past_peak && !sum.is_zero() && (&term / &sum).abs() < tiny {
            break;
        }
        // Keep the rationals from growing without bound.
        if k % 16 == 0 {
            term = round_rational(&term);
            sum = round_rational(&sum);
        }
    }
    sum.to_f64().unwrap()
}

fn round_rational(x: &BigRational) -> BigRational {
    let scale = BigInt::from(2).pow(400);
    let scaled = (x * BigRational::from_integer(scale.clone())).round();
    BigRational::new(scaled.to_integer(), scale)
}

/// Determinant by Laplace expansion along the first row.
pub fn det_cofactor(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    match n {
        0 => 1.0,
        1 => m[0][0],
        _ => (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][j] * det_cofactor(&minor(m, 0, j))
            })
            .sum(),
    }
}

fn minor(m: &[Vec<f64>], row: usize, col: usize) -> Vec<Vec<f64>> {
    m.iter()
        .enumerate()
        .filter(|(i, _)| *i != row)
        .map(|(_, r)| r.iter().enumerate().filter(|(j, _)| *j != col).map(|(_, v)| *v).collect())
        .collect()
}

/// Inverse through the adjugate.
pub fn inverse_cofactor(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let det = det_cofactor(m);
    if n == 1 {
        return vec![vec![1.0 / det]];
    }
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    sign * det_cofactor(&minor(m, j, i)) / det
                })
                .collect()
        })
        .collect()
}

pub fn quad_form(inv: &[Vec<f64>], x: &[f64]) -> f64 {
    let n = x.len();
    (0..n).map(|i| (0..n).map(|j| x[i] * inv[i][j] * x[j]).sum::<f64>()).sum()
}

pub fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// ln Γ by the Stirling series after shifting the argument above 15.
pub fn ln_gamma_ref(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 15.0 {
        shift -= x.ln();
        x += 1.0;
    }
    let x2 = x * x;
    let series = 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2) + 1.0 / (1260.0 * x2 * x2 * x) - 1.0 / (1680.0 * x2 * x2 * x2 * x);
    shift + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
}

/// Standard normal CDF by quadrature of the density.
pub fn normal_cdf_ref(x: f64) -> f64 {
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if x <= 0.0 {
        lower_tail(pdf, x, 1e-14)
    } else {
        1.0 - lower_tail(pdf, -x, 1e-14)
    }
}

/// Skew-t density at p = 1, assembled from the t density and a quadrature
/// t CDF.
pub fn st_pdf_1d(y: f64, xi: f64, sigma2: f64, alpha: f64, nu: f64) -> f64 {
    let s = sigma2.sqrt();
    let r = (y - xi) / s;
    let q = r * r;
    let t_pdf = |x: f64, d: f64| {
        (ln_gamma_ref(0.5 * (d + 1.0)) - ln_gamma_ref(0.5 * d) - 0.5 * (std::f64::consts::PI * d).ln()
            - 0.5 * (d + 1.0) * (1.0 + x * x / d).ln())
        .exp()
    };
    let dens = t_pdf(r, nu) / s;
    let arg = alpha * r * ((nu + 1.0) / (q + nu)).sqrt();
    let d1 = nu + 1.0;
    let cdf = if arg <= 0.0 {
        lower_tail(|x| t_pdf(x, d1), arg, 1e-13)
    } else {
        1.0 - lower_tail(|x| t_pdf(x, d1), -arg, 1e-13)
    };
    2.0 * dens * cdf
}

/// ψ(x) by recurrence to x ≥ 10 and the asymptotic series.
pub fn digamma_ref(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + x.ln() - 0.5 / x - x2 * (1.0 / 12.0 - x2 * (1.0 / 120.0 - x2 * (1.0 / 252.0 - x2 / 240.0)))
}

/// Root in ν of n[ln(ν/2) − ψ(ν/2)] = Σ(v_i − ln v_i − 1), by bisection.
pub fn nu_root_ref(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let rhs: f64 = v.iter().map(|x| x - x.ln() - 1.0).sum();
    let f = |nu: f64| n * ((0.5 * nu).ln() - digamma_ref(0.5 * nu)) - rhs;
    let (mut lo, mut hi) = (1e-3, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// ln Γ_p(a).
fn ln_mvgamma_ref(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    0.25 * pf * (pf - 1.0) * std::f64::consts::PI.ln() + (0..p).map(|j| ln_gamma_ref(a - 0.5 * j as f64)).sum::<f64>()
}

/// Normal model under the flat × |G|^{-(p+1)/2} prior: ln p(y), the
/// posterior mean ȳ of ξ and its posterior covariance S/(n(n−p−2)).
pub fn normal_conjugate(data: &skewfit::Dataset) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let (n, p) = (data.n(), data.p());
    let nf = n as f64;
    let pf = p as f64;
    let mean: Vec<f64> = (0..p).map(|j| data.rows().map(|y| y[j]).sum::<f64>() / nf).collect();
    let mut s = vec![vec![0.0; p]; p];
    for y in data.rows() {
        for r in 0..p {
            for c in 0..p {
                s[r][c] += (y[r] - mean[r]) * (y[c] - mean[c]);
            }
        }
    }
    let m = nf - 1.0;
    let log_ml = -0.5 * m * pf * (2.0 * std::f64::consts::PI).ln() - 0.5 * pf * nf.ln() + 0.5 * m * pf * 2f64.ln()
        + ln_mvgamma_ref(p, 0.5 * m)
        - 0.5 * m * det_cofactor(&s).ln();
    let cov = s.iter().map(|r| r.iter().map(|v| v / (nf * (nf - pf - 2.0))).collect()).collect();
    (log_ml, mean, cov)
}
