//! Summary statistics used by the Monte Carlo estimators (all in `f64`).

use statrs::function::erf::erfc;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    /// `|mean − target| ≤ k · se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }

    /// Number of standard errors between `mean` and `target`.
    pub fn z(&self, target: f64) -> f64 {
        if self.se == 0.0 {
            if self.mean == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - target) / self.se
        }
    }
}

/// Mean and standard error, summed in index order.
pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    assert!(n >= 2, "need at least two samples");
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    MeanSe { mean, se: (var / n as f64).sqrt(), n }
}

/// Self-normalized importance-sampling mean `Σ wᵢxᵢ / Σ wᵢ` with the
/// delta-method standard error.
pub fn weighted_mean_se(xs: &[f64], ws: &[f64]) -> MeanSe {
    assert_eq!(xs.len(), ws.len());
    let n = xs.len();
    let wsum: f64 = ws.iter().sum();
    let mean = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / wsum;
    let var = xs
        .iter()
        .zip(ws)
        .map(|(x, w)| {
            let r = w / wsum * (x - mean);
            r * r
        })
        .sum::<f64>();
    MeanSe { mean, se: var.sqrt(), n }
}

/// Kish effective sample size `(Σw)² / Σw²`.
pub fn effective_sample_size(ws: &[f64]) -> f64 {
    let s: f64 = ws.iter().sum();
    let s2: f64 = ws.iter().map(|w| w * w).sum();
    s * s / s2
}

/// Mean of an autocorrelated trace with a batch-means standard error.
pub fn batch_means(xs: &[f64], batches: usize) -> MeanSe {
    let n = xs.len();
    let batches = batches.clamp(2, n / 2);
    let size = n / batches;
    let used = size * batches;
    let means: Vec<f64> = xs[..used].chunks(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let m = mean_se(&means);
    MeanSe { mean: xs.iter().sum::<f64>() / n as f64, se: m.se, n }
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Asymptotic Kolmogorov tail `P(K > λ)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov–Smirnov test against a continuous distribution function.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    let p = kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d);
    KsResult { statistic: d, p_value: p, n: xs.len() }
}

/// Weighted least-squares line `y = a + b x` with known per-point variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
}

impl LineFit {
    /// Two-sided normal confidence interval for the slope.
    pub fn slope_interval(&self, z: f64) -> (f64, f64) {
        (self.slope - z * self.slope_se, self.slope + z * self.slope_se)
    }
}

pub fn weighted_line_fit(x: &[f64], y: &[f64], var: &[f64]) -> LineFit {
    assert!(x.len() == y.len() && y.len() == var.len() && x.len() >= 2);
    let w: Vec<f64> = var.iter().map(|v| if *v > 0.0 { 1.0 / v } else { 1e300 }).collect();
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(a, b)| b * (a - xm) * (a - xm)).sum();
    let sxy: f64 = x.iter().zip(y).zip(&w).map(|((a, c), b)| b * (a - xm) * (c - ym)).sum();
    let slope = sxy / sxx;
    LineFit { intercept: ym - slope * xm, slope, slope_se: (1.0 / sxx).sqrt() }
}

/// Linear-interpolated empirical quantile.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] * (1.0 - frac) + v[hi] * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_se_of_known_sample() {
        let m = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ess_bounds() {
        assert_eq!(effective_sample_size(&[2.0; 10]), 10.0);
        let e = effective_sample_size(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(e, 1.0);
    }

    #[test]
    fn kolmogorov_tail_known_values() {
        // P(K > 1.36) ≈ 0.049, P(K > 1.63) ≈ 0.0098
        assert!((kolmogorov_tail(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_tail(1.628) - 0.01).abs() < 5e-4);
    }

    #[test]
    fn exact_line_recovered() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v).collect();
        let f = weighted_line_fit(&x, &y, &[1.0; 4]);
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0, 4.0, 5.0], 0.5), 3.0);
        assert_eq!(quantile(&[0.0, 10.0], 0.95), 9.5);
    }
}
