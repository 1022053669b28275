//! Davies–Harte sampling of fractional Gaussian noise.
//!
//! The `m` increments `B_{t_{i+1}} − B_{t_i}` form a stationary sequence with
//! autocovariance `γ(k) = ½Δ^{2H}(|k+1|^{2H} − 2|k|^{2H} + |k−1|^{2H})`. It is
//! embedded in a circulant of order `2m`, whose eigenvalues come from one
//! FFT; a path is the cumulative sum of the noise.

use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

pub struct CirculantPlan<T> {
    increments: usize,
    /// `sqrt(λ_k / 2m)`.
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    _marker: std::marker::PhantomData<T>,
}

impl<T> std::fmt::Debug for CirculantPlan<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantPlan").field("increments", &self.increments).finish()
    }
}

pub(crate) fn fgn_autocov(hurst: f64, spacing: f64, k: usize) -> f64 {
    let two_h = 2.0 * hurst;
    let k = k as f64;
    0.5 * spacing.powf(two_h) * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

impl<T: Real> CirculantPlan<T> {
    pub fn new(hurst: T, spacing: T, increments: usize) -> Result<Self> {
        let m = increments;
        if m == 0 {
            return Err(Error::InvalidParameter { name: "N", reason: "need at least one increment".into() });
        }
        let (h, dt) = (hurst.to_f64_lossy(), spacing.to_f64_lossy());
        let size = 2 * m;
        let mut row: Vec<Complex<f64>> = (0..size)
            .map(|j| {
                let lag = if j <= m { j } else { size - j };
                Complex::new(fgn_autocov(h, dt, lag), 0.0)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(size);
        fft.process(&mut row);
        let floor = -1e-10 * row[0].re.abs().max(1e-300);
        let mut scale = Vec::with_capacity(size);
        for (k, ev) in row.iter().enumerate() {
            if ev.re < floor {
                return Err(Error::Domain(format!("circulant embedding has negative eigenvalue {} at {k}", ev.re)));
            }
            scale.push((ev.re.max(0.0) / size as f64).sqrt());
        }
        Ok(Self { increments: m, scale, fft, _marker: std::marker::PhantomData })
    }

    /// fBm values at `t_1 .. t_m` for one component.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let mut buf: Vec<Complex<f64>> = self
            .scale
            .iter()
            .map(|&s| {
                let re: f64 = rng::standard_normal(rng);
                let im: f64 = rng::standard_normal(rng);
                Complex::new(s * re, s * im)
            })
            .collect();
        self.fft.process(&mut buf);
        let mut acc = 0.0;
        buf[..self.increments]
            .iter()
            .map(|z| {
                acc += z.re;
                T::lit(acc)
            })
            .collect()
    }
}
