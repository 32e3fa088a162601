//! Spectral calculus for smooth 2π-periodic functions sampled on a uniform
//! grid θ_j = 2πj/n.
//!
//! Every operator here is diagonal in Fourier space. Derivatives multiply by
//! (ik)^order; odd-order derivatives zero the Nyquist mode, even-order ones
//! keep it as a cosine so that diffusion still damps it.

use std::cell::RefCell;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::FieldError;

/// Smallest grid the calculus accepts.
pub const MIN_SAMPLES: usize = 8;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Unnormalized DFT: `F_k = Σ_j f_j e^{-ikθ_j}`.
fn dft(samples: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    forward_plan(samples.len()).process(&mut buf);
    buf
}

/// Inverse of [`dft`], returning the real part divided by n.
fn idft_real(mut coeffs: Vec<Complex64>) -> Vec<f64> {
    let n = coeffs.len();
    inverse_plan(n).process(&mut coeffs);
    let scale = 1.0 / n as f64;
    coeffs.iter().map(|c| c.re * scale).collect()
}

/// Signed wavenumber of DFT bin `j` on an n-point grid.
fn wavenumber(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// A real 2π-periodic function sampled at θ_j = 2πj/n.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleField {
    samples: Vec<f64>,
}

impl CircleField {
    pub fn new(samples: Vec<f64>) -> Result<Self, FieldError> {
        let n = samples.len();
        if n < MIN_SAMPLES {
            return Err(FieldError::TooFewSamples(n));
        }
        if !n.is_multiple_of(2) {
            return Err(FieldError::OddSampleCount(n));
        }
        if let Some(index) = samples.iter().position(|x| !x.is_finite()) {
            return Err(FieldError::NonFinite { index });
        }
        Ok(Self { samples })
    }

    /// Samples `f` on the n-point grid.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self, FieldError> {
        Self::new((0..n).map(|j| f(grid_point(j, n))).collect())
    }

    pub fn constant(n: usize, value: f64) -> Result<Self, FieldError> {
        Self::new(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn theta(&self, j: usize) -> f64 {
        grid_point(j, self.len())
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.theta(j)).collect()
    }

    /// Pointwise map. Callers keep the result finite; this is checked in
    /// debug builds only since it sits on the time-stepping hot path.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let samples: Vec<f64> = self.samples.iter().map(|&x| f(x)).collect();
        debug_assert!(samples.iter().all(|x| x.is_finite()));
        Self { samples }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.len(), other.len(), "grid mismatch");
        let samples: Vec<f64> = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(&a, &b)| f(a, b))
            .collect();
        debug_assert!(samples.iter().all(|x| x.is_finite()));
        Self { samples }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Max-norm distance to another field on the same grid.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.len(), other.len(), "grid mismatch");
        self.samples
            .iter()
            .zip(&other.samples)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Spectral derivative of the given order.
    pub fn derivative(&self, order: u32) -> Result<Self, FieldError> {
        if order == 0 {
            return Err(FieldError::ZeroOrder);
        }
        Ok(self.derivative_unchecked(order))
    }

    pub(crate) fn derivative_unchecked(&self, order: u32) -> Self {
        let n = self.len();
        let mut coeffs = dft(&self.samples);
        for (j, c) in coeffs.iter_mut().enumerate() {
            let k = wavenumber(j, n);
            if j == n / 2 && order % 2 == 1 {
                *c = Complex64::new(0.0, 0.0);
                continue;
            }
            *c *= Complex64::new(0.0, k as f64).powu(order);
        }
        Self {
            samples: idft_real(coeffs),
        }
    }

    pub(crate) fn second_derivative(&self) -> Self {
        self.derivative_unchecked(2)
    }

    /// Uniform rectangle rule, `(2π/n) Σ f_j`.
    pub fn integrate(&self) -> f64 {
        TAU / self.len() as f64 * self.samples.iter().sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.len() as f64
    }

    /// `∫₀^{2π} f·g dθ` for two fields on the same grid.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.len(), other.len(), "grid mismatch");
        TAU / self.len() as f64
            * self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// `∫₀^{2π} f(θ) cos(kθ) dθ` and the matching sine integral.
    pub fn mode_integrals(&self, k: usize) -> (f64, f64) {
        let n = self.len();
        let (mut c, mut s) = (0.0, 0.0);
        for (j, &f) in self.samples.iter().enumerate() {
            let arg = (k * j % n) as f64 * TAU / n as f64;
            c += f * arg.cos();
            s += f * arg.sin();
        }
        let h = TAU / n as f64;
        (c * h, s * h)
    }

    /// Values of `∫₀^{θ_j} f dθ` at the grid points.
    ///
    /// The mean contributes a linear ramp; the mean-free part is integrated
    /// spectrally and anchored at zero.
    pub fn cumulative_integral(&self) -> Vec<f64> {
        let n = self.len();
        let mean = self.mean();
        let periodic = self.periodic_antiderivative();
        let p0 = periodic.samples[0];
        (0..n)
            .map(|j| mean * grid_point(j, n) + periodic.samples[j] - p0)
            .collect()
    }

    /// `∫₀^{x} f dθ` at arbitrary points, through the trigonometric
    /// interpolant.
    pub fn cumulative_integral_at(&self, points: &[f64]) -> Vec<f64> {
        let mean = self.mean();
        let periodic = self.periodic_antiderivative();
        let p0 = periodic.samples[0];
        let values = periodic.evaluate_at(points);
        points
            .iter()
            .zip(values)
            .map(|(&x, p)| mean * x + p - p0)
            .collect()
    }

    /// A periodic antiderivative of the mean-free part of `f`.
    pub(crate) fn periodic_antiderivative(&self) -> Self {
        let n = self.len();
        let mut coeffs = dft(&self.samples);
        for (j, c) in coeffs.iter_mut().enumerate() {
            let k = wavenumber(j, n);
            if j == 0 || j == n / 2 {
                *c = Complex64::new(0.0, 0.0);
            } else {
                *c /= Complex64::new(0.0, k as f64);
            }
        }
        Self {
            samples: idft_real(coeffs),
        }
    }

    /// Trigonometric interpolation at arbitrary points (reduced mod 2π).
    ///
    /// A point that equals a grid node θ_j exactly returns `samples[j]`.
    pub fn evaluate_at(&self, points: &[f64]) -> Vec<f64> {
        let spectrum = self.analyze();
        let n = self.len();
        points
            .iter()
            .map(|&x| {
                let reduced = x.rem_euclid(TAU);
                let j = (reduced * n as f64 / TAU).round() as usize % n;
                if grid_point(j, n) == reduced || grid_point(j, n) == x {
                    self.samples[j]
                } else {
                    spectrum.eval(reduced)
                }
            })
            .collect()
    }

    pub fn analyze(&self) -> FourierSpectrum {
        let n = self.len();
        let coeffs = dft(&self.samples);
        let half = n / 2;
        let scale = 2.0 / n as f64;
        let mut a = Vec::with_capacity(half + 1);
        let mut b = Vec::with_capacity(half.saturating_sub(1));
        a.push(coeffs[0].re / n as f64);
        for c in coeffs.iter().take(half).skip(1) {
            a.push(c.re * scale);
            b.push(-c.im * scale);
        }
        a.push(coeffs[half].re / n as f64);
        FourierSpectrum { a, b }
    }

    /// Zero-pads or truncates the trigonometric interpolant onto an m-point
    /// grid.
    pub fn resample(&self, m: usize) -> Result<Self, FieldError> {
        let spectrum = self.analyze();
        let keep = if m >= self.len() { spectrum.a.len() - 1 } else { m / 2 - 1 };
        spectrum.truncated(keep).synthesize(m)
    }

    /// CSV with header `theta,value`, one row per grid point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,value\n");
        for (j, v) in self.samples.iter().enumerate() {
            let _ = writeln!(out, "{},{}", fmt_f64(self.theta(j)), fmt_f64(*v));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, FieldError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| FieldError::Parse(e.to_string()))?
            .clone();
        if headers.len() != 2 || &headers[0] != "theta" || &headers[1] != "value" {
            return Err(FieldError::Parse("expected header `theta,value`".into()));
        }
        let mut samples = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| FieldError::Parse(e.to_string()))?;
            let value: f64 = record[1]
                .parse()
                .map_err(|e: std::num::ParseFloatError| FieldError::Parse(e.to_string()))?;
            samples.push(value);
        }
        Self::new(samples)
    }

    pub fn to_snapshot(&self) -> FieldSnapshot {
        FieldSnapshot {
            n: self.len(),
            samples: self.samples.clone(),
        }
    }

    pub fn from_snapshot(snapshot: FieldSnapshot) -> Result<Self, FieldError> {
        if snapshot.n != snapshot.samples.len() {
            return Err(FieldError::LengthMismatch {
                declared: snapshot.n,
                actual: snapshot.samples.len(),
            });
        }
        Self::new(snapshot.samples)
    }
}

/// JSON form `{ "n": ..., "samples": [...] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSnapshot {
    pub n: usize,
    pub samples: Vec<f64>,
}

/// θ_j = 2πj/n.
pub fn grid_point(j: usize, n: usize) -> f64 {
    TAU * j as f64 / n as f64
}

/// 17 significant digits, enough for a bit-exact round trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Real Fourier coefficients: `f = a₀ + Σ_{k≥1} (a_k cos kθ + b_k sin kθ)`.
///
/// `a` holds a₀..a_{n/2}, `b` holds b₁..b_{n/2−1}. The Nyquist cosine
/// a_{n/2} uses the `(1/n) Σ f_j (−1)^j` convention so that synthesis on
/// the source grid is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSpectrum {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl FourierSpectrum {
    /// Cosine coefficient of mode k (0 past the stored range).
    pub fn cos_coeff(&self, k: usize) -> f64 {
        self.a.get(k).copied().unwrap_or(0.0)
    }

    /// Sine coefficient of mode k (0 for k = 0 or past the stored range).
    pub fn sin_coeff(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.b.get(k - 1).copied().unwrap_or(0.0)
        }
    }

    /// `√(a_k² + b_k²)`.
    pub fn amplitude(&self, k: usize) -> f64 {
        self.cos_coeff(k).hypot(self.sin_coeff(k))
    }

    /// Highest mode whose coefficient rises above round-off, taken as
    /// `1e-12` of the largest coefficient.
    pub fn highest_mode(&self) -> usize {
        let peak = self.a.iter().chain(&self.b).fold(0.0f64, |m, x| m.max(x.abs()));
        let floor = 1e-12 * peak;
        let top_a = self.a.iter().rposition(|x| x.abs() > floor).unwrap_or(0);
        let top_b = self.b.iter().rposition(|x| x.abs() > floor).map_or(0, |i| i + 1);
        top_a.max(top_b)
    }

    /// Keeps modes 0..=k_max and drops the rest.
    pub fn truncated(&self, k_max: usize) -> Self {
        let a = self.a.iter().take(k_max + 1).copied().collect();
        let b = self.b.iter().take(k_max).copied().collect();
        Self { a, b }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut sum = self.cos_coeff(0);
        let top = self.a.len().max(self.b.len() + 1);
        for k in 1..top {
            let (s, c) = (k as f64 * x).sin_cos();
            sum += self.cos_coeff(k) * c + self.sin_coeff(k) * s;
        }
        sum
    }

    /// Samples the series on an n-point grid.
    pub fn synthesize(&self, n: usize) -> Result<CircleField, FieldError> {
        if n < MIN_SAMPLES || !n.is_multiple_of(2) {
            return Err(if !n.is_multiple_of(2) {
                FieldError::OddSampleCount(n)
            } else {
                FieldError::TooFewSamples(n)
            });
        }
        let top = self.highest_mode();
        let half = n / 2;
        if top > half || (top == half && self.sin_coeff(half).abs() > 0.0) {
            return Err(FieldError::Nyquist { mode: top, n });
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
        coeffs[0] = Complex64::new(self.cos_coeff(0) * n as f64, 0.0);
        for k in 1..half {
            let c = Complex64::new(self.cos_coeff(k), -self.sin_coeff(k)) * (n as f64 / 2.0);
            coeffs[k] = c;
            coeffs[n - k] = c.conj();
        }
        coeffs[half] = Complex64::new(self.cos_coeff(half) * n as f64, 0.0);
        CircleField::new(idft_real(coeffs))
    }
}

/// Builds `Σ (a_k cos kθ + b_k sin kθ)` directly on a grid. `a[0]` is the
/// constant term, `b[k-1]` multiplies `sin kθ`.
pub fn trig_polynomial(n: usize, a: &[f64], b: &[f64]) -> Result<CircleField, FieldError> {
    let top = a.len().saturating_sub(1).max(b.len());
    if 2 * top >= n {
        return Err(FieldError::Nyquist { mode: top, n });
    }
    CircleField::from_fn(n, |x| {
        let mut v = a.first().copied().unwrap_or(0.0);
        for (k, &ak) in a.iter().enumerate().skip(1) {
            v += ak * (k as f64 * x).cos();
        }
        for (i, &bk) in b.iter().enumerate() {
            v += bk * ((i + 1) as f64 * x).sin();
        }
        v
    })
}
