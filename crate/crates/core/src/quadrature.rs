//! One-dimensional quadrature rules, in `f64`.
//!
//! * Gauss–Legendre with nodes computed by Newton iteration on the
//!   three-term recurrence.
//! * Adaptive Gauss–Kronrod (7/15) for smooth integrands with sharp features.
//! * Double-exponential rules (tanh-sinh on finite intervals, exp-sinh on
//!   half-lines) for integrable endpoint singularities.

use std::f64::consts::FRAC_PI_2;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(mid + half * x)).sum::<f64>() * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn kronrod15(a: f64, b: f64, f: &mut impl FnMut(f64) -> f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(mid - dx) + f(mid + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * half, (k - g).abs() * half)
}

/// Adaptive Gauss–Kronrod integration to `max(abs_tol, rel_tol·|I|)`.
pub fn adaptive(a: f64, b: f64, abs_tol: f64, rel_tol: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let (whole, err) = kronrod15(a, b, &mut f);
    // Interval bisection driven by a worst-first work list.
    let mut parts = vec![(a, b, whole, err)];
    let mut total = whole;
    let mut total_err = err;
    for _ in 0..5000 {
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let (idx, _) = parts.iter().enumerate().max_by(|x, y| x.1 .3.total_cmp(&y.1 .3)).expect("non-empty");
        let (lo, hi, val, e) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = kronrod15(lo, mid, &mut f);
        let (v2, e2) = kronrod15(mid, hi, &mut f);
        total += v1 + v2 - val;
        total_err += e1 + e2 - e;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
    // Re-sum to shed accumulated update rounding.
    let mut vals: Vec<(f64, f64)> = parts.iter().map(|p| (p.0, p.2)).collect();
    vals.sort_by(|x, y| x.0.total_cmp(&y.0));
    vals.iter().map(|v| v.1).sum()
}

/// Tanh-sinh rule on `[a, b]`. The integrand receives `(x, distance to the
/// nearest endpoint)` so callers can evaluate singular factors without
/// cancellation.
pub fn tanh_sinh(a: f64, b: f64, rel_tol: f64, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
    let width = b - a;
    if width == 0.0 {
        return 0.0;
    }
    let t_max = 3.2;
    let mut h = 0.5;
    let eval = |t: f64, f: &mut dyn FnMut(f64, f64) -> f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let c = u.cosh();
        let w = FRAC_PI_2 * t.cosh() / (c * c) * 0.5 * width;
        if t < 0.0 {
            let off = width / (1.0 + (-2.0 * u).exp());
            if off <= 0.0 {
                return 0.0;
            }
            w * f(a + off, off)
        } else {
            let off = width / (1.0 + (2.0 * u).exp());
            if off <= 0.0 {
                return 0.0;
            }
            w * f(b - off, off)
        }
    };
    let n0 = (t_max / h) as i64;
    let mut sum: f64 = (-n0..=n0).map(|k| eval(k as f64 * h, &mut f)).sum();
    let mut est = sum * h;
    for _ in 0..9 {
        h *= 0.5;
        let n = (t_max / h) as i64;
        let odd: f64 = (-n..=n).filter(|k| k % 2 != 0).map(|k| eval(k as f64 * h, &mut f)).sum();
        sum += odd;
        let next = sum * h;
        if (next - est).abs() <= rel_tol * next.abs() {
            return next;
        }
        est = next;
    }
    est
}

/// Exp-sinh rule on `[a, ∞)` for integrands decaying at infinity and possibly
/// singular at `a`. The integrand receives the offset `x − a`.
pub fn exp_sinh(rel_tol: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let t_lo = -4.5;
    let t_hi = 4.5;
    let mut h = 0.25;
    let term = |t: f64, f: &mut dyn FnMut(f64) -> f64| -> f64 {
        let x = (FRAC_PI_2 * t.sinh()).exp();
        if x == 0.0 || !x.is_finite() {
            return 0.0;
        }
        let v = f(x);
        if v == 0.0 {
            return 0.0;
        }
        v * FRAC_PI_2 * t.cosh() * x
    };
    let range = |h: f64| ((t_lo / h).ceil() as i64, (t_hi / h).floor() as i64);
    let (lo, hi) = range(h);
    let mut sum: f64 = (lo..=hi).map(|k| term(k as f64 * h, &mut f)).sum();
    let mut est = sum * h;
    for _ in 0..8 {
        h *= 0.5;
        let (lo, hi) = range(h);
        let odd: f64 = (lo..=hi).filter(|k| k % 2 != 0).map(|k| term(k as f64 * h, &mut f)).sum();
        sum += odd;
        let next = sum * h;
        if (next - est).abs() <= rel_tol * next.abs() {
            return next;
        }
        est = next;
    }
    est
}

/// Nodes and weights of the exp-sinh rule on `[0, ∞)` at a fixed step, for
/// tensor-product use.
pub fn exp_sinh_rule(h: f64, t_lo: f64, t_hi: f64) -> (Vec<f64>, Vec<f64>) {
    let lo = (t_lo / h).ceil() as i64;
    let hi = (t_hi / h).floor() as i64;
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for k in lo..=hi {
        let t = k as f64 * h;
        let x = (FRAC_PI_2 * t.sinh()).exp();
        if x > 0.0 && x.is_finite() {
            xs.push(x);
            ws.push(h * FRAC_PI_2 * t.cosh() * x);
        }
    }
    (xs, ws)
}
