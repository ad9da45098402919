//! Numerical microlocal analysis: locate local wavefront directions by
//! Fourier-filtering the impedance quantity sampled on a circle.
//!
//! The probe samples U(theta) = (1 + c(r0)/(i w) d_r) u on a circle of
//! radius rho around r0, takes Fourier coefficients, divides mode l by
//! i^l (J_l(w0) - i J'_l(w0)) with w0 = w rho / c(r0), and reads ray
//! directions off the peaks of the filtered signal. Peak angles come out
//! with O(w^{-1/2}) accuracy; the refinement stage in [`crate::raytune`]
//! improves on them.

use crate::field::Wavefield;
use crate::specfun::bessel_j_pairs;
use crate::{dir, i_pow, wrap_angle, Error, Point, Result, C64};
use rustfft::FftPlanner;
use std::f64::consts::TAU;

/// Default relative peak threshold.
pub const DEFAULT_REL_THRESHOLD: f64 = 0.4;

/// Absolute floor below which a filtered signal counts as empty.
pub const NOISE_FLOOR: f64 = 1e-10;

/// Impedance samples on a circle.
#[derive(Debug, Clone)]
pub struct CircleSamples {
    pub center: Point,
    pub radius: f64,
    pub values: Vec<C64>,
}

impl CircleSamples {
    pub fn count(&self) -> usize {
        self.values.len()
    }
}

/// Truncation order of the impedance filter:
/// M = max(1, floor(w0), floor(w0 + w0^{1/3} - 2.5)).
pub fn filter_order(omega0: f64) -> usize {
    let a = omega0.floor();
    let b = (omega0 + omega0.cbrt() - 2.5).floor();
    a.max(b).max(1.0) as usize
}

/// Sample count: next power of two >= 8 (M + 2).
pub fn sample_count(m: usize) -> usize {
    let mut s = 1;
    while s < 8 * (m + 2) {
        s *= 2;
    }
    s
}

/// Sample the impedance quantity (1 + c0/(i w) d_r) u on the circle of
/// radius `rho` about `r0` with `s` uniform samples.
pub fn sample_impedance(
    field: &dyn Wavefield,
    r0: Point,
    rho: f64,
    c0: f64,
    s: usize,
) -> Result<CircleSamples> {
    if !s.is_power_of_two() {
        return Err(Error::Sampling(format!("sample count {s} is not a power of two")));
    }
    let omega = field.omega();
    let imp = C64::new(0.0, -c0 / omega); // c0 / (i w)
    let values = (0..s)
        .map(|k| {
            let theta = TAU * k as f64 / s as f64;
            let d = dir(theta);
            let p = [r0[0] + rho * d[0], r0[1] + rho * d[1]];
            field.value(p) + imp * field.radial_derivative(r0, rho, theta)
        })
        .collect();
    Ok(CircleSamples { center: r0, radius: rho, values })
}

/// Fourier coefficients (F U)_l = (1/(2 pi)) int U(theta) e^{-i l theta}
/// for |l| <= l_max, by the exact DFT quadrature of the uniform samples.
///
/// Returns coefficients indexed l = -l_max ..= l_max.
pub fn fourier_coeffs(samples: &CircleSamples, l_max: usize) -> Result<Vec<C64>> {
    let s = samples.count();
    if l_max > s / 2 - 1 {
        return Err(Error::Sampling(format!(
            "mode range {l_max} too large for {s} samples"
        )));
    }
    let mut buf = samples.values.clone();
    FftPlanner::new().plan_fft_forward(s).process(&mut buf);
    // forward FFT computes sum_k v_k e^{-2 pi i l k / S}; quadrature weight 1/S
    let scale = 1.0 / s as f64;
    let coeff = |l: i64| -> C64 {
        let idx = l.rem_euclid(s as i64) as usize;
        buf[idx] * scale
    };
    Ok((-(l_max as i64)..=l_max as i64).map(coeff).collect())
}

/// The filtered signal B U with its mode weights retained so the signal can
/// be evaluated at arbitrary angles (needed for sub-grid peak refinement).
#[derive(Debug, Clone)]
pub struct FilteredSignal {
    /// Truncation order M.
    pub m: usize,
    /// Weighted modes w_l = (F U)_l / (i^l (J_l - i J'_l)), l = -M ..= M.
    pub weights: Vec<C64>,
    /// Signal values on the sample grid.
    pub grid: Vec<C64>,
}

impl FilteredSignal {
    /// Evaluate B U(theta) from the stored modes.
    pub fn eval(&self, theta: f64) -> C64 {
        let m = self.m as i64;
        let mut acc = C64::new(0.0, 0.0);
        for (i, l) in (-m..=m).enumerate() {
            acc += self.weights[i] * C64::new(0.0, l as f64 * theta).exp();
        }
        acc / (2.0 * self.m as f64 + 1.0)
    }
}

/// Apply the impedance filter to Fourier coefficients covering |l| <= M:
/// B U(theta) = 1/(2M+1) sum_l (F U)_l e^{i l theta} / (i^l (J_l(w0) - i J'_l(w0))).
pub fn filter_b(coeffs: &[C64], omega0: f64, grid_len: usize) -> Result<FilteredSignal> {
    let m = filter_order(omega0);
    if coeffs.len() < 2 * m + 1 {
        return Err(Error::Sampling(format!(
            "need coefficients for |l| <= {m}, got {}",
            coeffs.len()
        )));
    }
    let off = (coeffs.len() - (2 * m + 1)) / 2;
    let (j, dj) = bessel_j_pairs(m + 1, omega0)?;
    let mut weights = Vec::with_capacity(2 * m + 1);
    for (i, l) in (-(m as i64)..=m as i64).enumerate() {
        let la = l.unsigned_abs() as usize;
        let sign = if l < 0 && l % 2 != 0 { -1.0 } else { 1.0 };
        let den = i_pow(l) * C64::new(sign * j[la], -sign * dj[la]);
        if den.norm() < 1e-13 {
            return Err(Error::Sampling(format!(
                "ill-conditioned filter: |J_{l} - i J'_{l}|({omega0}) below 1e-13"
            )));
        }
        weights.push(coeffs[off + i] / den);
    }
    let signal = FilteredSignal { m, weights, grid: Vec::new() };
    let grid = (0..grid_len)
        .map(|k| signal.eval(TAU * k as f64 / grid_len as f64))
        .collect();
    Ok(FilteredSignal { grid, ..signal })
}

/// A per-element ray estimate: angles in [0, 2pi) with complex amplitudes.
#[derive(Debug, Clone, Default)]
pub struct RayEstimate {
    pub angles: Vec<f64>,
    pub amplitudes: Vec<C64>,
}

impl RayEstimate {
    pub fn ray_count(&self) -> usize {
        self.angles.len()
    }
}

/// Detect rays as local maxima of |B U| above `rel_threshold` times the
/// global maximum, separated pairwise by at least `min_sep`, each refined
/// by three-point parabolic interpolation.
pub fn detect_peaks(signal: &FilteredSignal, rel_threshold: f64, min_sep: f64) -> Result<RayEstimate> {
    if !(0.0 < rel_threshold && rel_threshold < 1.0) {
        return Err(Error::Sampling(format!("peak threshold {rel_threshold} outside (0,1)")));
    }
    let s = signal.grid.len();
    let mag: Vec<f64> = signal.grid.iter().map(|v| v.norm()).collect();
    let gmax = mag.iter().cloned().fold(0.0, f64::max);
    if gmax < NOISE_FLOOR {
        return Ok(RayEstimate::default());
    }
    let mut cand: Vec<usize> = (0..s)
        .filter(|&k| {
            let prev = mag[(k + s - 1) % s];
            let next = mag[(k + 1) % s];
            mag[k] >= prev && mag[k] >= next && mag[k] > rel_threshold * gmax
        })
        .collect();
    cand.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]));

    let h = TAU / s as f64;
    let mut picked: Vec<f64> = Vec::new();
    for k in cand {
        let theta = k as f64 * h;
        if picked.iter().all(|&t| crate::angle_dist(theta, t) >= min_sep) {
            picked.push(theta);
        }
    }
    picked.sort_by(f64::total_cmp);

    let mut angles = Vec::with_capacity(picked.len());
    let mut amplitudes = Vec::with_capacity(picked.len());
    for theta in picked {
        let k = ((theta / h).round() as usize) % s;
        let ym = mag[(k + s - 1) % s];
        let y0 = mag[k];
        let yp = mag[(k + 1) % s];
        let den = ym - 2.0 * y0 + yp;
        let delta = if den.abs() < 1e-300 { 0.0 } else { (0.5 * (ym - yp) / den).clamp(-0.5, 0.5) };
        let refined = wrap_angle((k as f64 + delta) * h);
        angles.push(refined);
        amplitudes.push(signal.eval(refined));
    }
    Ok(RayEstimate { angles, amplitudes })
}

/// Full first-stage probe at r0: sampling radius rho = w^{-1/2}
/// (so w rho^2 = 1), then sample, transform, filter and detect.
pub fn nmla_probe(
    field: &dyn Wavefield,
    r0: Point,
    c0: f64,
    rel_threshold: f64,
) -> Result<RayEstimate> {
    let omega = field.omega();
    if !(omega > 0.0) {
        return Err(Error::Sampling("probe frequency must be positive".into()));
    }
    let rho = omega.powf(-0.5);
    let omega0 = omega * rho / c0;
    let m = filter_order(omega0);
    let s = sample_count(m);
    let samples = sample_impedance(field, r0, rho, c0, s)?;
    let coeffs = fourier_coeffs(&samples, m)?;
    let signal = filter_b(&coeffs, omega0, s)?;
    let min_sep = TAU / (2.0 * m as f64 + 1.0);
    detect_peaks(&signal, rel_threshold, min_sep)
}
