//! Conformal metrics `g = u⁻⁴ g_s` on the circle.
//!
//! All σ-integrals are pulled back to θ with the weight `dσ = u⁻² dθ`, so no
//! quantity here ever needs a σ-uniform grid.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::circle_field::{CircleField, FourierSpectrum};
use crate::error::{FieldError, MetricError};

/// Ratio below which `min u / max u` counts as degenerate.
pub const POSITIVITY_FLOOR: f64 = 1e-8;

/// A flow exponent α together with a positive conformal factor u.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalMetric {
    alpha: f64,
    u: CircleField,
}

impl ConformalMetric {
    pub fn new(alpha: f64, u: CircleField) -> Result<Self, MetricError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(MetricError::NonPositiveAlpha(alpha));
        }
        check_positive(&u)?;
        Ok(Self { alpha, u })
    }

    /// The round metric `u ≡ 1`.
    pub fn round(alpha: f64, n: usize) -> Result<Self, MetricError> {
        Self::new(alpha, CircleField::constant(n, 1.0)?)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn u(&self) -> &CircleField {
        &self.u
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    /// Same exponent, new conformal factor.
    pub fn with_u(&self, u: CircleField) -> Result<Self, MetricError> {
        Self::new(self.alpha, u)
    }

    /// `u⁻²`, the density of dσ against dθ.
    pub fn sigma_density(&self) -> CircleField {
        self.u.map(|x| 1.0 / (x * x))
    }

    /// `u⁻³`, the radius of curvature of the associated curve when α = 1.
    pub fn inverse_cube(&self) -> CircleField {
        self.u.map(|x| 1.0 / (x * x * x))
    }

    /// `R^α = u³(α u_θθ + u)`.
    pub fn alpha_curvature(&self) -> CircleField {
        let u_tt = self.u.second_derivative();
        let alpha = self.alpha;
        self.u.zip_map(&u_tt, |u, d2| u * u * u * (alpha * d2 + u))
    }

    /// `L = ∫u⁻² dθ`.
    pub fn arc_length(&self) -> f64 {
        self.sigma_density().integrate()
    }

    /// `R̄ = ∫R u⁻² dθ / ∫u⁻² dθ`.
    pub fn mean_curvature(&self) -> f64 {
        mean_against_sigma(&self.alpha_curvature(), &self.u)
    }

    /// `L^α_g ψ = α u²(u² ψ_θ)_θ + R ψ`.
    pub fn conformal_laplacian_apply(&self, psi: &CircleField) -> Result<CircleField, MetricError> {
        if psi.len() != self.n() {
            return Err(MetricError::GridMismatch(self.n(), psi.len()));
        }
        let psi_t = psi.derivative_unchecked(1);
        let flux = self.u.zip_map(&psi_t, |u, d| u * u * d);
        let flux_t = flux.derivative_unchecked(1);
        let r = self.alpha_curvature();
        let alpha = self.alpha;
        let lap = self.u.zip_map(&flux_t, |u, d| alpha * u * u * d);
        Ok(lap.zip_map(&r.zip_map(psi, |r, p| r * p), |a, b| a + b))
    }

    /// The cumulative σ-chart `σ(θ) = ∫₀^θ u⁻² dθ'`.
    pub fn sigma_chart(&self) -> SigmaChart {
        SigmaChart::new(self.sigma_density())
    }

    pub fn to_snapshot(&self) -> MetricSnapshot {
        MetricSnapshot {
            alpha: self.alpha,
            n: self.n(),
            u: self.u.samples().to_vec(),
        }
    }

    pub fn from_snapshot(snapshot: MetricSnapshot) -> Result<Self, MetricError> {
        if snapshot.n != snapshot.u.len() {
            return Err(FieldError::LengthMismatch {
                declared: snapshot.n,
                actual: snapshot.u.len(),
            }
            .into());
        }
        Self::new(snapshot.alpha, CircleField::new(snapshot.u)?)
    }

    pub fn require_alpha(&self, expected: f64) -> Result<(), MetricError> {
        if self.alpha == expected {
            Ok(())
        } else {
            Err(MetricError::WrongAlpha {
                expected,
                actual: self.alpha,
            })
        }
    }
}

pub(crate) fn check_positive(u: &CircleField) -> Result<(), MetricError> {
    let (min, max) = (u.min(), u.max());
    if min <= 0.0 || min <= POSITIVITY_FLOOR * max {
        return Err(MetricError::NotPositive { min, max });
    }
    Ok(())
}

/// `∫f u⁻² dθ / ∫u⁻² dθ`.
pub(crate) fn mean_against_sigma(f: &CircleField, u: &CircleField) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (&fv, &uv) in f.samples().iter().zip(u.samples()) {
        let w = 1.0 / (uv * uv);
        num += fv * w;
        den += w;
    }
    num / den
}

/// Max-norm of `L^α_{g₂}ψ − φ³ L^α_{g₁}(ψφ)` with `u₂ = u₁ φ`.
pub fn covariance_residual(
    m1: &ConformalMetric,
    phi: &CircleField,
    psi: &CircleField,
) -> Result<f64, MetricError> {
    if phi.len() != m1.n() || psi.len() != m1.n() {
        return Err(MetricError::GridMismatch(m1.n(), phi.len().max(psi.len())));
    }
    check_positive(phi)?;
    let m2 = m1.with_u(m1.u().zip_map(phi, |a, b| a * b))?;
    let lhs = m2.conformal_laplacian_apply(psi)?;
    let inner = m1.conformal_laplacian_apply(&psi.zip_map(phi, |a, b| a * b))?;
    let rhs = inner.zip_map(phi, |l, p| p * p * p * l);
    Ok(lhs.sup_distance(&rhs))
}

/// JSON form `{ "alpha": ..., "n": ..., "u": [...] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSnapshot {
    pub alpha: f64,
    pub n: usize,
    pub u: Vec<f64>,
}

/// The arclength chart σ(θ), monotone from 0 to L on [0, 2π].
#[derive(Debug, Clone)]
pub struct SigmaChart {
    density: FourierSpectrum,
    periodic: FourierSpectrum,
    anchor: f64,
    mean: f64,
    sigma_of_theta: Vec<f64>,
    total_length: f64,
}

impl SigmaChart {
    fn new(density: CircleField) -> Self {
        let sigma_of_theta = density.cumulative_integral();
        let total_length = density.integrate();
        let periodic = density.periodic_antiderivative();
        Self {
            anchor: periodic.samples()[0],
            periodic: periodic.analyze(),
            mean: density.mean(),
            density: density.analyze(),
            sigma_of_theta,
            total_length,
        }
    }

    /// σ at the grid points; σ(θ₀) = 0.
    pub fn sigma_of_theta(&self) -> &[f64] {
        &self.sigma_of_theta
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    /// σ(θ) at arbitrary θ ∈ [0, 2π].
    pub fn sigma_at(&self, thetas: &[f64]) -> Vec<f64> {
        thetas.iter().map(|&x| self.sigma_one(x)).collect()
    }

    fn sigma_one(&self, x: f64) -> f64 {
        self.mean * x + self.periodic.eval(x) - self.anchor
    }

    /// Inverts the chart: θ(σ) for σ ∈ [0, L], by safeguarded Newton
    /// iteration bracketed on the sampled chart.
    pub fn theta_at(&self, sigmas: &[f64]) -> Vec<f64> {
        let n = self.sigma_of_theta.len();
        let h = TAU / n as f64;
        let mut knots = self.sigma_of_theta.clone();
        knots.push(self.total_length);
        sigmas
            .iter()
            .map(|&s| {
                let s = s.clamp(0.0, self.total_length);
                let j = match knots.partition_point(|&k| k <= s) {
                    0 => 0,
                    i => (i - 1).min(n - 1),
                };
                let (mut lo, mut hi) = (j as f64 * h, (j + 1) as f64 * h);
                let (k0, k1) = (knots[j], knots[j + 1]);
                let mut x = lo + (s - k0) / (k1 - k0).max(f64::MIN_POSITIVE) * h;
                for _ in 0..60 {
                    let f = self.sigma_one(x) - s;
                    if f.abs() < 1e-15 * self.total_length.max(1.0) {
                        break;
                    }
                    if f > 0.0 {
                        hi = x;
                    } else {
                        lo = x;
                    }
                    let newton = x - f / self.density.eval(x);
                    x = if newton > lo && newton < hi {
                        newton
                    } else {
                        0.5 * (lo + hi)
                    };
                    if hi - lo < 1e-15 {
                        break;
                    }
                }
                x
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn psi(lambda: f64, angle: f64) -> impl Fn(f64) -> f64 {
        move |x: f64| {
            let (s, c) = (x - angle).sin_cos();
            (lambda * c * c + s * s / lambda).sqrt()
        }
    }

    /// Second derivative by a sixth-order centered difference on a dense
    /// mesh of the closed-form function, independent of the FFT path.
    fn fd_second(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-3;
        let c = [-1.0 / 560.0, 8.0 / 315.0, -1.0 / 5.0, 8.0 / 5.0];
        let mut acc = -205.0 / 72.0 * f(x);
        for (i, ci) in c.iter().enumerate() {
            let k = (4 - i) as f64;
            acc += ci * (f(x + k * h) + f(x - k * h));
        }
        acc / (h * h)
    }

    #[test]
    fn round_metric_has_unit_curvature() {
        for alpha in [1.0, 4.0, 2.5] {
            let m = ConformalMetric::round(alpha, 16).unwrap();
            assert!(m.alpha_curvature().sup_distance(&CircleField::constant(16, 1.0).unwrap()) < 1e-14);
            assert!((m.mean_curvature() - 1.0).abs() < 1e-14);
            assert!((m.arc_length() - TAU).abs() < 1e-14);
        }
    }

    #[test]
    fn ellipse_family_has_constant_affine_curvature() {
        let f = psi(2.0, 0.0);
        let m = ConformalMetric::new(1.0, CircleField::from_fn(256, &f).unwrap()).unwrap();
        let r = m.alpha_curvature();
        assert!(r.max() - 1.0 < 1e-9 && 1.0 - r.min() < 1e-9);
        assert!((m.mean_curvature() - 1.0).abs() < 1e-9);
        // finite-difference oracle at a few points
        for &x in &[0.0, 0.7, 2.0, 4.4] {
            let fd = f(x).powi(3) * (fd_second(&f, x) + f(x));
            assert!((fd - 1.0).abs() < 1e-7, "fd oracle {fd}");
        }
    }

    #[test]
    fn yamabe_extremal_has_constant_curvature() {
        let lambda: f64 = 1.5;
        let m = ConformalMetric::new(
            4.0,
            CircleField::from_fn(256, |x| {
                let (s, c) = (x / 2.0).sin_cos();
                (lambda * lambda * c * c + s * s / (lambda * lambda)).sqrt()
            })
            .unwrap(),
        )
        .unwrap();
        let r = m.alpha_curvature();
        assert!(r.max() - r.min() < 1e-9);
    }

    #[test]
    fn arc_length_scaling_and_quadrature_oracle() {
        let m = ConformalMetric::new(1.0, CircleField::constant(32, 2.0).unwrap()).unwrap();
        assert!((m.arc_length() - TAU / 4.0).abs() < 1e-14);

        // Simpson on a dense mesh against the spectral rule.
        let f = psi(1.5, 0.7);
        let m = ConformalMetric::new(1.0, CircleField::from_fn(128, &f).unwrap()).unwrap();
        let k = 20_000;
        let h = TAU / k as f64;
        let mut simpson = 0.0;
        for i in 0..=k {
            let w = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            simpson += w * f(i as f64 * h).powi(-2);
        }
        simpson *= h / 3.0;
        assert!((m.arc_length() - simpson).abs() < 1e-10);
    }

    #[test]
    fn laplacian_on_round_metric() {
        let m = ConformalMetric::round(3.0, 32).unwrap();
        let c = CircleField::from_fn(32, f64::cos).unwrap();
        let out = m.conformal_laplacian_apply(&c).unwrap();
        assert!(out.sup_distance(&c.scale(1.0 - 3.0)) < 1e-13);

        let m = ConformalMetric::new(
            4.0,
            CircleField::from_fn(64, |x| 1.0 + 0.2 * x.sin()).unwrap(),
        )
        .unwrap();
        let one = CircleField::constant(64, 1.0).unwrap();
        let out = m.conformal_laplacian_apply(&one).unwrap();
        assert!(out.sup_distance(&m.alpha_curvature()) < 1e-12);
    }

    /// Sixth-order centered first derivative.
    fn fd_first(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        let c = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
        let mut acc = 0.0;
        for (i, ci) in c.iter().enumerate() {
            let k = (i + 1) as f64;
            acc += ci * (f(x + k * h) - f(x - k * h));
        }
        acc / h
    }

    #[test]
    fn laplacian_matches_finite_differences() {
        let alpha = 4.0;
        let u = |x: f64| 1.0 + 0.2 * x.cos() - 0.1 * (2.0 * x).sin();
        let p = |x: f64| (3.0 * x).sin() + 0.5 * x.cos();
        let m = ConformalMetric::new(alpha, CircleField::from_fn(128, u).unwrap()).unwrap();
        let out = m
            .conformal_laplacian_apply(&CircleField::from_fn(128, p).unwrap())
            .unwrap();
        let h = 1e-2;
        for j in (0..128).step_by(7) {
            let x = TAU * j as f64 / 128.0;
            let flux = |y: f64| u(y).powi(2) * fd_first(&p, y, h);
            let flux_t = fd_first(&flux, x, h);
            let r = u(x).powi(3) * (alpha * fd_second(&u, x) + u(x));
            let fd = alpha * u(x).powi(2) * flux_t + r * p(x);
            assert!((out.samples()[j] - fd).abs() < 1e-7, "j={j}: {}", out.samples()[j] - fd);
        }
    }

    #[test]
    fn covariance_with_identity_factor() {
        let m = ConformalMetric::new(1.0, CircleField::from_fn(64, |x| 1.0 + 0.1 * x.sin()).unwrap()).unwrap();
        let one = CircleField::constant(64, 1.0).unwrap();
        let psi = CircleField::from_fn(64, |x| (2.0 * x).cos()).unwrap();
        assert!(covariance_residual(&m, &one, &psi).unwrap() < 1e-12);
    }

    #[test]
    fn covariance_on_round_metric() {
        for alpha in [1.0, 4.0] {
            let m = ConformalMetric::round(alpha, 256).unwrap();
            let phi = CircleField::from_fn(256, |x| 1.0 + 0.3 * x.cos()).unwrap();
            let psi = CircleField::from_fn(256, |x| (2.0 * x).sin()).unwrap();
            assert!(covariance_residual(&m, &phi, &psi).unwrap() < 1e-8);
            // ψ ≡ 1: curvature transforms as R₂ = φ³ L₁ φ.
            let m2 = m.with_u(phi.clone()).unwrap();
            let rhs = m
                .conformal_laplacian_apply(&phi)
                .unwrap()
                .zip_map(&phi, |l, p| p * p * p * l);
            assert!(m2.alpha_curvature().sup_distance(&rhs) < 1e-8);
        }
    }

    #[test]
    fn covariance_rejects_non_positive_factor() {
        let m = ConformalMetric::round(1.0, 16).unwrap();
        let phi = CircleField::from_fn(16, f64::cos).unwrap();
        assert!(matches!(
            covariance_residual(&m, &phi, &phi),
            Err(MetricError::NotPositive { .. })
        ));
    }

    #[test]
    fn curvature_is_homogeneous_of_degree_four() {
        let u = CircleField::from_fn(64, |x| 1.0 + 0.3 * (2.0 * x).cos()).unwrap();
        let m = ConformalMetric::new(4.0, u.clone()).unwrap();
        let m2 = ConformalMetric::new(4.0, u.scale(1.7)).unwrap();
        let scaled = m.alpha_curvature().scale(1.7f64.powi(4));
        assert!(m2.alpha_curvature().sup_distance(&scaled) < 1e-12 * scaled.max_abs());
    }

    #[test]
    fn rotation_leaves_mean_curvature_unchanged() {
        let u = CircleField::from_fn(64, |x| 1.0 + 0.2 * x.cos() + 0.1 * (3.0 * x).sin()).unwrap();
        let mut rotated = u.samples().to_vec();
        rotated.rotate_left(11);
        let a = ConformalMetric::new(4.0, u).unwrap().mean_curvature();
        let b = ConformalMetric::new(4.0, CircleField::new(rotated).unwrap())
            .unwrap()
            .mean_curvature();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_factors() {
        let u = CircleField::from_fn(16, |x| 1.0 + x.cos()).unwrap();
        assert!(matches!(
            ConformalMetric::new(1.0, u),
            Err(MetricError::NotPositive { .. })
        ));
        assert!(matches!(
            ConformalMetric::round(0.0, 16),
            Err(MetricError::NonPositiveAlpha(_))
        ));
    }

    #[test]
    fn sigma_chart_closed_forms() {
        let m = ConformalMetric::round(1.0, 32).unwrap();
        let chart = m.sigma_chart();
        for (j, s) in chart.sigma_of_theta().iter().enumerate() {
            assert!((s - TAU * j as f64 / 32.0).abs() < 1e-13);
        }
        assert!((chart.total_length() - TAU).abs() < 1e-13);

        let m = ConformalMetric::new(1.0, CircleField::constant(32, 2.0).unwrap()).unwrap();
        for (j, s) in m.sigma_chart().sigma_of_theta().iter().enumerate() {
            assert!((s - TAU * j as f64 / 32.0 / 4.0).abs() < 1e-13);
        }
    }

    #[test]
    fn sigma_chart_of_ellipse_metric_matches_arctan() {
        let lambda = 2.0;
        let m = ConformalMetric::new(1.0, CircleField::from_fn(256, psi(lambda, 0.0)).unwrap()).unwrap();
        let chart = m.sigma_chart();
        for (j, s) in chart.sigma_of_theta().iter().enumerate() {
            let x = TAU * j as f64 / 256.0;
            let mut exact = (x.tan() / lambda).atan();
            if x > PI / 2.0 && x <= 1.5 * PI {
                exact += PI;
            } else if x > 1.5 * PI {
                exact += TAU;
            }
            if (x - PI / 2.0).abs() < 1e-12 {
                exact = PI / 2.0;
            }
            assert!((s - exact).abs() < 1e-9, "theta={x} sigma={s} exact={exact}");
        }
    }

    #[test]
    fn sigma_chart_inverse() {
        let m = ConformalMetric::new(
            1.0,
            CircleField::from_fn(64, |x| 1.0 + 0.3 * x.cos() + 0.1 * (2.0 * x).sin()).unwrap(),
        )
        .unwrap();
        let chart = m.sigma_chart();
        let targets: Vec<f64> = (0..10).map(|k| chart.total_length() * k as f64 / 10.0).collect();
        let thetas = chart.theta_at(&targets);
        let back = chart.sigma_at(&thetas);
        for (t, b) in targets.iter().zip(back) {
            assert!((t - b).abs() < 1e-12);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let m = ConformalMetric::new(4.0, CircleField::from_fn(8, |x| 1.0 + 0.1 * x.cos()).unwrap()).unwrap();
        let json = serde_json::to_string(&m.to_snapshot()).unwrap();
        assert!(json.starts_with("{\"alpha\":4.0,\"n\":8,\"u\":["));
        let back = ConformalMetric::from_snapshot(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
