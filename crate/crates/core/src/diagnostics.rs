//! Measurable versions of the analytic functionals that govern the flows:
//! the `F_p` Lyapunov quantities and their rate identity, the Kazdan–Warner
//! residual, the sharp-inequality deficits, Fourier mode tracking, decay-rate
//! fits and the Harnack ratio.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::affine_bridge;
use crate::circle_field::CircleField;
use crate::conformal_metric::{check_positive, mean_against_sigma, ConformalMetric};
use crate::error::DiagnosticsError;

/// Orthogonality tolerance for Theorem-A admissibility, relative to ∫u⁻³.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// `F_p = ∫|R − R̄|^p dσ`.
pub fn f_p(m: &ConformalMetric, p: f64) -> Result<f64, DiagnosticsError> {
    if p < 2.0 {
        return Err(DiagnosticsError::ExponentTooSmall(p));
    }
    let r = m.alpha_curvature();
    let rbar = mean_against_sigma(&r, m.u());
    Ok(weighted_power(&r, m.u(), rbar, p))
}

fn weighted_power(r: &CircleField, u: &CircleField, rbar: f64, p: f64) -> f64 {
    let h = TAU / r.len() as f64;
    r.samples()
        .iter()
        .zip(u.samples())
        .map(|(&rv, &uv)| (rv - rbar).abs().powf(p) / (uv * uv))
        .sum::<f64>()
        * h
}

/// The four terms of the `∂_t F_p` identity along the normalized flow.
///
/// With `w = R − R̄` and `L = ∫dσ`:
///
/// ```text
/// ∂_t F_p = −(α/4)(4(p−1)/p) ∫|∂_σ |w|^{p/2}|² dσ
///           + (p − ½) ∫|w|^p w dσ
///           + p R̄ F_p
///           − (p / 2L) ∫|w|^{p−2} w dσ · F₂
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpRateTerms {
    pub gradient: f64,
    pub cubic: f64,
    pub mean: f64,
    pub coupling: f64,
}

impl FpRateTerms {
    pub fn total(&self) -> f64 {
        self.gradient + self.cubic + self.mean + self.coupling
    }
}

pub fn fp_rate_terms(m: &ConformalMetric, p: f64) -> Result<FpRateTerms, DiagnosticsError> {
    if p < 2.0 {
        return Err(DiagnosticsError::ExponentTooSmall(p));
    }
    let u = m.u();
    let r = m.alpha_curvature();
    let rbar = mean_against_sigma(&r, u);
    let r_t = r.derivative_unchecked(1);
    let h = TAU / u.len() as f64;
    let (mut grad, mut cubic, mut fp, mut odd, mut f2, mut length) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for j in 0..u.len() {
        let uv = u.samples()[j];
        let ds = h / (uv * uv);
        let w = r.samples()[j] - rbar;
        let aw = w.abs();
        // ∂_σ w = u² ∂_θ w; |∂_σ|w|^{p/2}|² = (p²/4)|w|^{p−2} (∂_σ w)².
        let w_sigma = uv * uv * r_t.samples()[j];
        grad += 0.25 * p * p * aw.powf(p - 2.0) * w_sigma * w_sigma * ds;
        cubic += aw.powf(p) * w * ds;
        fp += aw.powf(p) * ds;
        odd += aw.powf(p - 2.0) * w * ds;
        f2 += w * w * ds;
        length += ds;
    }
    Ok(FpRateTerms {
        gradient: -(m.alpha() / 4.0) * (4.0 * (p - 1.0) / p) * grad,
        cubic: (p - 0.5) * cubic,
        mean: p * rbar * fp,
        coupling: -(p / (2.0 * length)) * odd * f2,
    })
}

/// Max-norm of `(u²)_θθθ + (u²)_θ − ½ R_θ u⁻²` for an α = 4 metric.
pub fn kazdan_warner_residual(m: &ConformalMetric) -> Result<f64, DiagnosticsError> {
    m.require_alpha(4.0)?;
    let u = m.u();
    let u2 = u.map(|x| x * x);
    let u2_t = u2.derivative_unchecked(1);
    let u2_ttt = u2.derivative_unchecked(3);
    let r_t = m.alpha_curvature().derivative_unchecked(1);
    let mut worst: f64 = 0.0;
    for j in 0..u.len() {
        let uv = u.samples()[j];
        let lhs = u2_ttt.samples()[j] + u2_t.samples()[j];
        let rhs = 0.5 * r_t.samples()[j] / (uv * uv);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// A sharp inequality evaluated on one field. `deficit` is the slack, which
/// is non-negative whenever the inequality holds; `equality_gap` is the
/// slack relative to `|sharp_bound|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    #[serde(rename = "value")]
    pub functional_value: f64,
    #[serde(rename = "bound")]
    pub sharp_bound: f64,
    pub deficit: f64,
    pub equality_gap: f64,
}

impl InequalityReport {
    /// For `value ≥ bound`.
    pub fn lower(value: f64, bound: f64) -> Self {
        Self::with_deficit(value, bound, value - bound)
    }

    /// For `value ≤ bound`.
    pub fn upper(value: f64, bound: f64) -> Self {
        Self::with_deficit(value, bound, bound - value)
    }

    fn with_deficit(value: f64, bound: f64, deficit: f64) -> Self {
        let scale = bound.abs().max(f64::MIN_POSITIVE);
        Self {
            functional_value: value,
            sharp_bound: bound,
            deficit,
            equality_gap: deficit / scale,
        }
    }
}

/// Mode-1 coefficients `(a₁, b₁)` of u⁻³ and the mean of u⁻³.
pub fn orthogonality_coefficients(u: &CircleField) -> (f64, f64, f64) {
    let w = u.map(|x| 1.0 / (x * x * x));
    let (c, s) = w.mode_integrals(1);
    (c / PI, s / PI, w.mean())
}

/// `∫(u_θ² − u²)dθ · ∫u⁻²dθ ≥ −4π²` for u with vanishing mode-1 of u⁻³.
pub fn theorem_a_report(u: &CircleField) -> Result<InequalityReport, DiagnosticsError> {
    check_positive(u)?;
    let (a1, b1, mean) = orthogonality_coefficients(u);
    if a1.abs() > ORTHOGONALITY_TOL * mean || b1.abs() > ORTHOGONALITY_TOL * mean {
        return Err(DiagnosticsError::NotOrthogonal { a1, b1 });
    }
    Ok(InequalityReport::lower(
        dirichlet_product(u, 1.0),
        -4.0 * PI * PI,
    ))
}

/// `∫(u_θ² − ¼u²)dθ · ∫u⁻²dθ ≥ −π²`.
pub fn theorem_b_report(u: &CircleField) -> Result<InequalityReport, DiagnosticsError> {
    check_positive(u)?;
    Ok(InequalityReport::lower(dirichlet_product(u, 0.25), -PI * PI))
}

fn dirichlet_product(u: &CircleField, mass: f64) -> f64 {
    let u_t = u.derivative_unchecked(1);
    let energy = u_t.inner(&u_t) - mass * u.inner(u);
    energy * u.map(|x| 1.0 / (x * x)).integrate()
}

/// Fourier amplitudes `(a_k, b_k)`, k = 1..=n_max, of R − R̄ in θ and in
/// uniform σ.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeAmplitudes {
    pub theta: Vec<[f64; 2]>,
    pub sigma: Vec<[f64; 2]>,
}

pub fn mode_amplitudes(m: &ConformalMetric, n_max: usize) -> Result<ModeAmplitudes, DiagnosticsError> {
    let n = m.n();
    if n_max == 0 || n_max >= n / 2 {
        return Err(DiagnosticsError::ModeBeyondNyquist { n_max, n });
    }
    let r = m.alpha_curvature();
    let rbar = mean_against_sigma(&r, m.u());
    let w = r.map(|x| x - rbar);
    let theta = take_modes(&w, n_max);

    let chart = m.sigma_chart();
    let length = chart.total_length();
    let targets: Vec<f64> = (0..n).map(|k| length * k as f64 / n as f64).collect();
    let thetas = chart.theta_at(&targets);
    let resampled = CircleField::new(w.evaluate_at(&thetas))
        .map_err(|e| DiagnosticsError::Metric(e.into()))?;
    // σ runs over [0, L]; rescale to a 2π period so mode k means k
    // oscillations per circuit.
    let sigma = take_modes(&resampled, n_max);
    Ok(ModeAmplitudes { theta, sigma })
}

/// Amplitudes of κ − κ̄ in the γ variable, i.e. on the uniform grid of the
/// perimeter-minimizing representative `v = T_{λ,α} u`.
pub fn gamma_mode_amplitudes(m: &ConformalMetric, n_max: usize) -> Result<Vec<[f64; 2]>, DiagnosticsError> {
    let n = m.n();
    if n_max == 0 || n_max >= n / 2 {
        return Err(DiagnosticsError::ModeBeyondNyquist { n_max, n });
    }
    let (v, _) = affine_bridge::sl2_normalize(m)?;
    let kappa = v.alpha_curvature();
    let kbar = mean_against_sigma(&kappa, v.u());
    Ok(take_modes(&kappa.map(|x| x - kbar), n_max))
}

fn take_modes(f: &CircleField, n_max: usize) -> Vec<[f64; 2]> {
    let s = f.analyze();
    (1..=n_max).map(|k| [s.cos_coeff(k), s.sin_coeff(k)]).collect()
}

/// `∫|∂_θ(R − R̄)|² dθ`, the flat gradient energy.
pub fn flat_gradient_energy(m: &ConformalMetric) -> f64 {
    let r_t = m.alpha_curvature().derivative_unchecked(1);
    r_t.inner(&r_t)
}

/// Least-squares fit of `log F(t) ≈ log C − a t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub prefactor: f64,
    pub window: (f64, f64),
    #[serde(rename = "r2")]
    pub r_squared: f64,
}

pub fn fit_decay(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit, DiagnosticsError> {
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(DiagnosticsError::BadWindow(t0, t1));
    }
    let points: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| t >= t0 && t <= t1)
        .collect();
    if points.len() < 10 {
        return Err(DiagnosticsError::TooFewSamples(points.len()));
    }
    if let Some(&(t, _)) = points.iter().find(|&&(_, v)| !(v > 0.0)) {
        return Err(DiagnosticsError::NonPositive(t));
    }
    let k = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_y = points.iter().map(|p| p.1.ln()).sum::<f64>() / k;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, v) in &points {
        let (dt, dy) = (t - mean_t, v.ln() - mean_y);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let slope = sty / stt;
    let intercept = mean_y - slope * mean_t;
    let ss_res: f64 = points
        .iter()
        .map(|&(t, v)| (v.ln() - intercept - slope * t).powi(2))
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(DecayFit {
        rate: -slope,
        prefactor: intercept.exp(),
        window,
        r_squared,
    })
}

/// Picks the tail of a decaying series for [`fit_decay`]: from the first
/// sample below `start_fraction · max` to the last sample above `floor`.
pub fn tail_window(series: &[(f64, f64)], start_fraction: f64, floor: f64) -> Option<(f64, f64)> {
    let peak = series.iter().map(|p| p.1).fold(0.0, f64::max);
    let start = series.iter().find(|p| p.1 < start_fraction * peak)?.0;
    let end = series.iter().rev().find(|p| p.1 > floor && p.0 > start)?.0;
    (end > start).then_some((start, end))
}

/// `max_θ |u_θ| / u`, located on the grid and then refined on the
/// trigonometric interpolant.
pub fn harnack_ratio(m: &ConformalMetric) -> f64 {
    let u = m.u();
    let u_t = u.derivative_unchecked(1);
    let ratio = u_t.zip_map(u, |d, v| d.abs() / v);
    let (j, best) = ratio
        .samples()
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    if best == 0.0 {
        return 0.0;
    }
    let h = TAU / u.len() as f64;
    let f = |x: f64| {
        let d = u_t.evaluate_at(&[x])[0];
        let v = u.evaluate_at(&[x])[0];
        d.abs() / v
    };
    // golden-section search on the bracketing cells
    let (mut a, mut b) = (u.theta(j) - h, u.theta(j) + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    best.max(fc).max(fd)
}

/// `∫κ_σ² dσ = ∫ u² κ_θ² dθ` for an α = 1 metric.
pub fn kappa_sigma_energy(m: &ConformalMetric) -> Result<f64, DiagnosticsError> {
    m.require_alpha(1.0)?;
    let k_t = m.alpha_curvature().derivative_unchecked(1);
    let h = TAU / m.n() as f64;
    Ok(k_t
        .samples()
        .iter()
        .zip(m.u().samples())
        .map(|(d, u)| u * u * d * d)
        .sum::<f64>()
        * h)
}

/// `(‖κ − κ̄‖_∞, √(2π ∫κ_σ² dσ))`: the sup deviation and its energy bound.
pub fn sup_bound_chain(m: &ConformalMetric) -> Result<(f64, f64), DiagnosticsError> {
    let energy = kappa_sigma_energy(m)?;
    let kappa = m.alpha_curvature();
    let kbar = mean_against_sigma(&kappa, m.u());
    let sup = kappa.samples().iter().fold(0.0f64, |acc, k| acc.max((k - kbar).abs()));
    Ok((sup, (TAU * energy).sqrt()))
}

/// `‖R − R̄‖_∞`.
pub fn curvature_oscillation(m: &ConformalMetric) -> f64 {
    let r = m.alpha_curvature();
    let rbar = mean_against_sigma(&r, m.u());
    r.samples().iter().fold(0.0, |acc, x| acc.max((x - rbar).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_engine::project_length;

    fn metric(alpha: f64, n: usize, f: impl Fn(f64) -> f64) -> ConformalMetric {
        ConformalMetric::new(alpha, CircleField::from_fn(n, f).unwrap()).unwrap()
    }

    #[test]
    fn f_p_vanishes_on_steady_states_and_rejects_small_p() {
        let m = ConformalMetric::round(4.0, 32).unwrap();
        assert!(f_p(&m, 2.0).unwrap() < 1e-12);
        assert!(matches!(f_p(&m, 1.5), Err(DiagnosticsError::ExponentTooSmall(_))));
    }

    #[test]
    fn f2_matches_dense_quadrature_oracle() {
        let eps = 1e-3;
        let m = project_length(&metric(4.0, 128, |x| 1.0 + eps * (2.0 * x).cos()));
        let c = m.u().samples()[0] / (1.0 + eps);
        // Independent route: closed-form u, curvature by hand, Simpson rule.
        let u = |x: f64| c * (1.0 + eps * (2.0 * x).cos());
        let u2 = |x: f64| -4.0 * c * eps * (2.0 * x).cos();
        let r = |x: f64| u(x).powi(3) * (4.0 * u2(x) + u(x));
        let k = 40_000;
        let h = TAU / k as f64;
        let simpson = |g: &dyn Fn(f64) -> f64| {
            (0..=k)
                .map(|i| {
                    let w = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    w * g(i as f64 * h)
                })
                .sum::<f64>()
                * h
                / 3.0
        };
        let length = simpson(&|x| u(x).powi(-2));
        let rbar = simpson(&|x| r(x) * u(x).powi(-2)) / length;
        let oracle = simpson(&|x| (r(x) - rbar).powi(2) * u(x).powi(-2));
        let got = f_p(&m, 2.0).unwrap();
        assert!((got - oracle).abs() < 1e-9 * oracle, "{got} vs {oracle}");
        // and the linearization 2π·(12ε)²/2 to leading order
        let lin = TAU * (12.0 * eps).powi(2) / 2.0;
        assert!((got / lin - 1.0).abs() < 1e-2);
    }

    #[test]
    fn kazdan_warner_identity() {
        let m = ConformalMetric::round(4.0, 16).unwrap();
        assert_eq!(kazdan_warner_residual(&m).unwrap(), 0.0);
        let m = metric(4.0, 256, |x| 1.0 + 0.2 * x.sin() + 0.1 * (3.0 * x).cos());
        assert!(kazdan_warner_residual(&m).unwrap() < 1e-8);
        let m = ConformalMetric::round(1.0, 16).unwrap();
        assert!(kazdan_warner_residual(&m).is_err());
    }

    #[test]
    fn kazdan_warner_residual_converges_spectrally() {
        let u = |x: f64| (0.4 * x.sin() + 0.2 * (2.0 * x).cos()).exp();
        let coarse = kazdan_warner_residual(&metric(4.0, 32, u)).unwrap();
        let fine = kazdan_warner_residual(&metric(4.0, 64, u)).unwrap();
        assert!(coarse / fine >= 100.0, "{coarse:e} / {fine:e}");
    }

    #[test]
    fn theorem_a_on_constants_and_ellipses() {
        let c = CircleField::constant(64, 0.8).unwrap();
        let r = theorem_a_report(&c).unwrap();
        assert!(r.deficit.abs() < 1e-12);
        let (lambda, angle, scale) = (1.5f64, 0.4f64, 0.8);
        let u = CircleField::from_fn(256, |x| {
            let (s, co) = (x - angle).sin_cos();
            scale * (lambda * lambda * co * co + s * s / (lambda * lambda)).sqrt()
        })
        .unwrap();
        let r = theorem_a_report(&u).unwrap();
        assert!(r.deficit.abs() <= 1e-8 * 4.0 * PI * PI, "{}", r.deficit);
    }

    #[test]
    fn theorem_a_rejects_non_orthogonal_input() {
        let u = CircleField::from_fn(64, |x| 1.0 + 0.2 * x.cos()).unwrap();
        assert!(matches!(
            theorem_a_report(&u),
            Err(DiagnosticsError::NotOrthogonal { .. })
        ));
    }

    #[test]
    fn theorem_b_on_constants_and_extremals() {
        let r = theorem_b_report(&CircleField::constant(32, 1.3).unwrap()).unwrap();
        assert!(r.deficit.abs() < 1e-12);
        let (lambda, angle) = (2.0f64, 1.1f64);
        let u = CircleField::from_fn(256, |x| {
            let (s, c) = ((x - angle) / 2.0).sin_cos();
            (lambda * lambda * c * c + s * s / (lambda * lambda)).sqrt()
        })
        .unwrap();
        let r = theorem_b_report(&u).unwrap();
        assert!(r.deficit.abs() <= 1e-8 * PI * PI, "{}", r.deficit);
    }

    #[test]
    fn mode_amplitudes_vanish_on_steady_states() {
        let m = ConformalMetric::round(4.0, 32).unwrap();
        let a = mode_amplitudes(&m, 3).unwrap();
        assert!(a.theta.iter().chain(&a.sigma).flatten().all(|x| x.abs() < 1e-12));
        assert!(mode_amplitudes(&m, 16).is_err());
    }

    #[test]
    fn sigma_amplitudes_equal_theta_amplitudes_for_constant_factor() {
        let m = metric(4.0, 64, |x| 1.0 + 0.01 * (2.0 * x).cos());
        let a = mode_amplitudes(&m, 4).unwrap();
        // R − R̄ is dominated by mode 2 in both charts.
        assert!(a.theta[1][0].abs() > 0.1);
        assert!((a.theta[1][0] - a.sigma[1][0]).abs() < 0.05 * a.theta[1][0].abs());
    }

    #[test]
    fn exact_exponential_fit() {
        let series: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.1;
                (t, 3.0 * (-2.0 * t).exp())
            })
            .collect();
        let fit = fit_decay(&series, (0.0, 5.0)).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-10);
        assert!((fit.prefactor - 3.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(matches!(fit_decay(&series[..5], (0.0, 5.0)), Err(DiagnosticsError::TooFewSamples(5))));
        let mut bad = series.clone();
        bad[3].1 = 0.0;
        assert!(matches!(fit_decay(&bad, (0.0, 5.0)), Err(DiagnosticsError::NonPositive(_))));
    }

    #[test]
    fn harnack_ratio_oracle() {
        assert_eq!(harnack_ratio(&metric(4.0, 32, |_| 2.0)), 0.0);
        let m = metric(4.0, 64, |x| 1.0 + 0.1 * x.cos());
        // dense 1-D search on the closed form
        let oracle = (0..200_000)
            .map(|i| {
                let x = TAU * i as f64 / 200_000.0;
                (0.1 * x.sin()).abs() / (1.0 + 0.1 * x.cos())
            })
            .fold(0.0, f64::max);
        assert!((harnack_ratio(&m) - oracle).abs() < 1e-9);
        assert!((oracle - 0.1005).abs() < 1e-4);
    }

    #[test]
    fn sup_bound_chain_holds() {
        let m = ConformalMetric::round(1.0, 32).unwrap();
        assert!(kappa_sigma_energy(&m).unwrap() < 1e-20);
        let m = metric(1.0, 128, |x| 1.0 + 0.1 * (3.0 * x).cos() + 0.05 * (4.0 * x).sin());
        let (sup, bound) = sup_bound_chain(&m).unwrap();
        assert!(sup <= bound + 1e-9);
    }

    #[test]
    fn fp_rate_terms_vanish_on_round_metric() {
        let m = ConformalMetric::round(4.0, 32).unwrap();
        let t = fp_rate_terms(&m, 3.0).unwrap();
        assert!(t.total().abs() < 1e-12);
    }

    #[test]
    fn inequality_report_json_keys() {
        let r = InequalityReport::lower(1.0, -1.0);
        let json = serde_json::to_value(r).unwrap();
        assert_eq!(json["value"], 1.0);
        assert_eq!(json["bound"], -1.0);
        assert_eq!(json["deficit"], 2.0);
    }
}
