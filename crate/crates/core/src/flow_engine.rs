//! Time integration of the normalized flow `∂_t g = (R̄ − R) g` and the
//! un-normalized flow `∂_t g = −R g` for `g = u⁻⁴ g_s`.
//!
//! In terms of the conformal factor the two flows read
//!
//! ```text
//! normalized:     u_t = ¼ (R − R̄) u
//! un-normalized:  u_t = ¼ R u
//! ```
//!
//! Both are advanced with the classical four-stage Runge–Kutta scheme. The
//! stiff part is `(α/4) u⁴ ∂_θθ` acting on the top mode n/2, which gives the
//! step restriction `dt ≤ cfl · 8 / (α (max u)⁴ n²)`.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use crate::affine_bridge;
use crate::circle_field::{fmt_f64, CircleField};
use crate::conformal_metric::ConformalMetric;
use crate::diagnostics;
use crate::error::{FlowError, MetricError};

/// ‖R − R̄‖_∞ below which a run counts as converged.
pub const STEADY_STATE_TOL: f64 = 1e-11;

/// Relative tolerance on the mode-1 integrals of u⁻³ for α = 1 initial data.
pub const INITIAL_ORTHOGONALITY_TOL: f64 = 1e-10;

/// Fraction of the blow-up proxy `1 / max R(0)` an un-normalized run may
/// reach unless the cap is overridden.
pub const BLOWUP_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub cfl: f64,
    pub project_length: bool,
    pub project_orthogonality: bool,
    pub max_dt: f64,
    /// Lets un-normalized runs go past the blow-up cap.
    pub uncapped: bool,
}

impl Default for StepperConfig {
    /// Verification settings: projections off.
    fn default() -> Self {
        Self {
            cfl: 0.25,
            project_length: false,
            project_orthogonality: false,
            max_dt: 1e-2,
            uncapped: false,
        }
    }
}

impl StepperConfig {
    /// Long-horizon settings: both projections on.
    pub fn long_horizon() -> Self {
        Self {
            project_length: true,
            project_orthogonality: true,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), FlowError> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(FlowError::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.max_dt > 0.0) {
            return Err(FlowError::Config(format!("max_dt must be positive, got {}", self.max_dt)));
        }
        Ok(())
    }

    /// `min(max_dt, cfl · 8 / (α (max u)⁴ n²))`.
    pub fn stable_dt(&self, m: &ConformalMetric) -> f64 {
        let n = m.n() as f64;
        let umax = m.u().max();
        let limit = self.cfl * 8.0 / (m.alpha() * umax.powi(4) * n * n);
        limit.min(self.max_dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    Normalized,
    Unnormalized,
}

/// A metric along a flow, with its curvature cached.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    metric: ConformalMetric,
    time: f64,
    curvature: CircleField,
    step_count: u64,
    rbar_integral: f64,
    scale_integral: f64,
}

impl FlowState {
    pub fn new(metric: ConformalMetric) -> Self {
        Self::at_time(metric, 0.0)
    }

    pub fn at_time(metric: ConformalMetric, time: f64) -> Self {
        let curvature = metric.alpha_curvature();
        Self {
            metric,
            time,
            curvature,
            step_count: 0,
            rbar_integral: 0.0,
            scale_integral: 0.0,
        }
    }

    pub fn metric(&self) -> &ConformalMetric {
        &self.metric
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn curvature(&self) -> &CircleField {
        &self.curvature
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// `∫₀^t R̄ dτ`, integrated alongside u with the same stages.
    pub fn rbar_integral(&self) -> f64 {
        self.rbar_integral
    }

    /// `∫₀^t exp(∫₀^δ R̄ dτ) dδ`, the rescaled time up to its constant prefactor.
    pub fn scale_integral(&self) -> f64 {
        self.scale_integral
    }

    pub fn mean_curvature(&self) -> f64 {
        crate::conformal_metric::mean_against_sigma(&self.curvature, self.metric.u())
    }

    /// ‖R − R̄‖_∞ from the cached curvature.
    pub fn oscillation(&self) -> f64 {
        let rbar = self.mean_curvature();
        self.curvature
            .samples()
            .iter()
            .fold(0.0, |m, r| m.max((r - rbar).abs()))
    }
}

/// `u_t` and R̄ for the current u.
fn velocity(u: &[f64], alpha: f64, kind: FlowKind) -> Result<(Vec<f64>, f64), String> {
    let field = CircleField::new(u.to_vec()).map_err(|e| e.to_string())?;
    let u_tt = field.second_derivative();
    let mut r = Vec::with_capacity(u.len());
    let (mut num, mut den) = (0.0, 0.0);
    for (&uv, &d2) in u.iter().zip(u_tt.samples()) {
        let rv = uv * uv * uv * (alpha * d2 + uv);
        let w = 1.0 / (uv * uv);
        num += rv * w;
        den += w;
        r.push(rv);
    }
    let rbar = num / den;
    let shift = match kind {
        FlowKind::Normalized => rbar,
        FlowKind::Unnormalized => 0.0,
    };
    let du = r
        .iter()
        .zip(u)
        .map(|(rv, uv)| 0.25 * (rv - shift) * uv)
        .collect();
    Ok((du, rbar))
}

fn axpy(u: &[f64], k: &[f64], h: f64) -> Vec<f64> {
    u.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

/// One RK4 step of size dt without projections.
fn rk4_step(s: &FlowState, dt: f64, kind: FlowKind) -> Result<FlowState, FlowError> {
    let alpha = s.metric.alpha();
    let u0 = s.metric.u().samples();
    let fail = |reason: String| FlowError::Integration {
        time: s.time,
        reason,
        snapshot: u0.to_vec(),
    };
    let (k1, r1) = velocity(u0, alpha, kind).map_err(fail)?;
    let (k2, r2) = velocity(&axpy(u0, &k1, 0.5 * dt), alpha, kind).map_err(fail)?;
    let (k3, r3) = velocity(&axpy(u0, &k2, 0.5 * dt), alpha, kind).map_err(fail)?;
    let (k4, r4) = velocity(&axpy(u0, &k3, dt), alpha, kind).map_err(fail)?;
    let u1: Vec<f64> = (0..u0.len())
        .map(|j| u0[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
        .collect();
    let time = s.time + dt;
    let failure = |reason: String, snapshot: Vec<f64>| FlowError::Integration {
        time,
        reason,
        snapshot,
    };
    if u1.iter().any(|x| !x.is_finite()) {
        return Err(failure("non-finite value in u".into(), u1));
    }
    let field = CircleField::new(u1.clone()).map_err(|e| failure(e.to_string(), u1.clone()))?;
    let metric = match s.metric.with_u(field) {
        Ok(m) => m,
        Err(MetricError::NotPositive { min, .. }) => {
            return Err(failure(format!("u fell below the positivity floor (min u = {min:e})"), u1))
        }
        Err(e) => return Err(failure(e.to_string(), u1)),
    };
    let curvature = metric.alpha_curvature();
    let i0 = s.rbar_integral;
    let stage_scale = [i0, i0 + 0.5 * dt * r1, i0 + 0.5 * dt * r2, i0 + dt * r3].map(f64::exp);
    Ok(FlowState {
        metric,
        time,
        curvature,
        step_count: s.step_count + 1,
        rbar_integral: i0 + dt / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4),
        scale_integral: s.scale_integral
            + dt / 6.0 * (stage_scale[0] + 2.0 * stage_scale[1] + 2.0 * stage_scale[2] + stage_scale[3]),
    })
}

fn apply_projections(s: FlowState, cfg: &StepperConfig) -> Result<FlowState, FlowError> {
    if !cfg.project_length && !(cfg.project_orthogonality && s.metric.alpha() == 1.0) {
        return Ok(s);
    }
    let mut metric = s.metric.clone();
    if cfg.project_orthogonality && metric.alpha() == 1.0 {
        metric = project_orthogonality(&metric)?;
    }
    if cfg.project_length {
        metric = project_length(&metric);
    }
    let curvature = metric.alpha_curvature();
    Ok(FlowState {
        metric,
        curvature,
        ..s
    })
}

fn step_with(s: &FlowState, cfg: &StepperConfig, dt: f64, kind: FlowKind) -> Result<FlowState, FlowError> {
    let next = rk4_step(s, dt, kind)?;
    match kind {
        FlowKind::Normalized => apply_projections(next, cfg),
        FlowKind::Unnormalized => Ok(next),
    }
}

/// One step of the normalized flow at the stable step size, followed by the
/// enabled projections.
pub fn step_normalized(s: &FlowState, cfg: &StepperConfig) -> Result<FlowState, FlowError> {
    cfg.validate()?;
    step_with(s, cfg, cfg.stable_dt(&s.metric), FlowKind::Normalized)
}

/// One step of `u_t = ¼ R u`. Projections never apply.
pub fn step_unnormalized(s: &FlowState, cfg: &StepperConfig) -> Result<FlowState, FlowError> {
    cfg.validate()?;
    step_with(s, cfg, cfg.stable_dt(&s.metric), FlowKind::Unnormalized)
}

/// Steps until `t_target`, shortening the last step to land on it exactly.
pub fn advance_to(
    s: &FlowState,
    cfg: &StepperConfig,
    t_target: f64,
    kind: FlowKind,
) -> Result<FlowState, FlowError> {
    cfg.validate()?;
    let mut state = s.clone();
    while state.time < t_target {
        let dt = cfg.stable_dt(&state.metric);
        let remaining = t_target - state.time;
        let dt = if remaining <= dt * (1.0 + 1e-9) { remaining } else { dt };
        state = step_with(&state, cfg, dt, kind)?;
        if remaining <= dt {
            state.time = t_target;
        }
    }
    Ok(state)
}

/// Rescales u so that `∫u⁻² dθ = 2π`.
pub fn project_length(m: &ConformalMetric) -> ConformalMetric {
    let c = (m.arc_length() / TAU).sqrt();
    m.with_u(m.u().scale(c))
        .expect("scaling a positive factor keeps it positive")
}

/// Removes the mode-1 part of `w = u⁻³` and returns `w̃^{−1/3}`.
pub fn project_orthogonality(m: &ConformalMetric) -> Result<ConformalMetric, FlowError> {
    m.require_alpha(1.0)?;
    let w = m.inverse_cube();
    let (c, s) = w.mode_integrals(1);
    let (a1, b1) = (c / PI, s / PI);
    let projected: Vec<f64> = w
        .samples()
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let (sn, cs) = w.theta(j).sin_cos();
            x - a1 * cs - b1 * sn
        })
        .collect();
    let min_weight = projected.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_weight > 0.0) {
        return Err(FlowError::OrthogonalityLost { min_weight });
    }
    let u = CircleField::new(projected.iter().map(|x| x.powf(-1.0 / 3.0)).collect())
        .map_err(MetricError::from)?;
    Ok(m.with_u(u)?)
}

/// The mode-1 integrals `(∫u⁻³cos θ dθ, ∫u⁻³sin θ dθ)`.
pub fn orthogonality_integrals(m: &ConformalMetric) -> (f64, f64) {
    m.inverse_cube().mode_integrals(1)
}

/// One recorded sample of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub rbar: f64,
    pub length: f64,
    pub f2: f64,
    pub f4: f64,
    pub umin: f64,
    pub umax: f64,
    /// Euclidean area of the associated curve (α = 1 only).
    pub area: Option<f64>,
    /// Kazdan–Warner residual (α = 4 only).
    pub kw_residual: Option<f64>,
    pub harnack: f64,
    /// `[a1, b1, a2, b2, a3, b3]` of R − R̄ in θ.
    pub modes: [f64; 6],
    pub rmin: f64,
    pub oscillation: f64,
    pub rbar_integral: f64,
    pub scale_integral: f64,
    /// Mode-1 integrals of u⁻³ (α = 1 only).
    pub orthogonality: Option<(f64, f64)>,
}

impl TrajectoryRow {
    pub fn from_state(s: &FlowState) -> Self {
        let m = &s.metric;
        let r = &s.curvature;
        let rbar = s.mean_curvature();
        let (mut f2, mut f4, mut length) = (0.0, 0.0, 0.0);
        let h = TAU / m.n() as f64;
        for (&rv, &uv) in r.samples().iter().zip(m.u().samples()) {
            let ds = h / (uv * uv);
            let d2 = (rv - rbar) * (rv - rbar);
            f2 += d2 * ds;
            f4 += d2 * d2 * ds;
            length += ds;
        }
        let spectrum = r.map(|x| x - rbar).analyze();
        let mut modes = [0.0; 6];
        for k in 1..=3 {
            modes[2 * (k - 1)] = spectrum.cos_coeff(k);
            modes[2 * (k - 1) + 1] = spectrum.sin_coeff(k);
        }
        let is_affine = m.alpha() == 1.0;
        Self {
            t: s.time,
            rbar,
            length,
            f2,
            f4,
            umin: m.u().min(),
            umax: m.u().max(),
            area: if is_affine {
                affine_bridge::euclidean_area(m).ok()
            } else {
                None
            },
            kw_residual: diagnostics::kazdan_warner_residual(m).ok(),
            harnack: diagnostics::harnack_ratio(m),
            modes,
            rmin: r.min(),
            oscillation: s.oscillation(),
            rbar_integral: s.rbar_integral,
            scale_integral: s.scale_integral,
            orthogonality: is_affine.then(|| orthogonality_integrals(m)),
        }
    }
}

/// Time series of diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
}

pub const TRAJECTORY_HEADER: &str = "t,Rbar,L,F2,F4,umin,umax,area,kw_residual,harnack,a1,b1,a2,b2,a3,b3";

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// `(t, F₂)` pairs, ready for [`diagnostics::fit_decay`].
    pub fn f2_series(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.t, r.f2)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAJECTORY_HEADER);
        out.push('\n');
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        for r in &self.rows {
            let mut fields = vec![
                fmt_f64(r.t),
                fmt_f64(r.rbar),
                fmt_f64(r.length),
                fmt_f64(r.f2),
                fmt_f64(r.f4),
                fmt_f64(r.umin),
                fmt_f64(r.umax),
                opt(r.area),
                opt(r.kw_residual),
                fmt_f64(r.harnack),
            ];
            fields.extend(r.modes.iter().map(|&x| fmt_f64(x)));
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    /// ‖R − R̄‖_∞ fell below [`STEADY_STATE_TOL`].
    Steady,
    /// Reached the requested (or capped) end time.
    Horizon,
}

/// A run: recorded diagnostics plus one metric snapshot per row.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub kind: FlowKind,
    pub record: TrajectoryRecord,
    pub snapshots: Vec<ConformalMetric>,
    pub outcome: RunOutcome,
}

impl Trajectory {
    pub fn final_metric(&self) -> &ConformalMetric {
        self.snapshots.last().expect("a trajectory holds its initial state")
    }
}

fn check_cadence(t_end: f64, cadence: f64) -> Result<(), FlowError> {
    if !(cadence > 0.0) || !(t_end >= 0.0) {
        return Err(FlowError::Config(format!(
            "need cadence > 0 and t_end >= 0, got cadence {cadence}, t_end {t_end}"
        )));
    }
    Ok(())
}

fn integrate(
    initial: FlowState,
    cfg: &StepperConfig,
    t_end: f64,
    cadence: f64,
    kind: FlowKind,
    stop_when_steady: bool,
) -> Result<Trajectory, FlowError> {
    let mut state = initial;
    let mut record = TrajectoryRecord::default();
    let mut snapshots = Vec::new();
    let push = |s: &FlowState, record: &mut TrajectoryRecord, snapshots: &mut Vec<ConformalMetric>| {
        record.rows.push(TrajectoryRow::from_state(s));
        snapshots.push(s.metric.clone());
    };
    push(&state, &mut record, &mut snapshots);
    let mut outcome = RunOutcome::Horizon;
    if stop_when_steady && state.oscillation() < STEADY_STATE_TOL {
        return Ok(Trajectory {
            kind,
            record,
            snapshots,
            outcome: RunOutcome::Steady,
        });
    }
    let mut k = 1u64;
    while state.time < t_end {
        let target = (k as f64 * cadence).min(t_end);
        state = advance_to(&state, cfg, target, kind)?;
        push(&state, &mut record, &mut snapshots);
        k += 1;
        if stop_when_steady && state.oscillation() < STEADY_STATE_TOL {
            outcome = RunOutcome::Steady;
            break;
        }
    }
    Ok(Trajectory {
        kind,
        record,
        snapshots,
        outcome,
    })
}

/// Integrates the normalized flow to `t_end`, recording every `cadence`.
///
/// For α = 1 the initial data must satisfy the orthogonality condition; it
/// is projected onto it when `cfg.project_orthogonality` is set and rejected
/// otherwise.
pub fn run(
    initial: &ConformalMetric,
    cfg: &StepperConfig,
    t_end: f64,
    cadence: f64,
) -> Result<Trajectory, FlowError> {
    cfg.validate()?;
    check_cadence(t_end, cadence)?;
    let mut metric = initial.clone();
    if metric.alpha() == 1.0 {
        let (c, s) = orthogonality_integrals(&metric);
        let scale = metric.inverse_cube().integrate();
        if c.abs().max(s.abs()) > INITIAL_ORTHOGONALITY_TOL * scale {
            if cfg.project_orthogonality {
                metric = project_orthogonality(&metric)?;
            } else {
                return Err(FlowError::NotOrthogonal { cos: c, sin: s });
            }
        }
    }
    if cfg.project_length {
        metric = project_length(&metric);
    }
    integrate(FlowState::new(metric), cfg, t_end, cadence, FlowKind::Normalized, true)
}

/// Integrates `∂_t g = −R g`. `t_end` is capped at 0.9 / max R(0) unless
/// `cfg.uncapped` is set.
pub fn run_unnormalized(
    initial: &ConformalMetric,
    cfg: &StepperConfig,
    t_end: f64,
    cadence: f64,
) -> Result<Trajectory, FlowError> {
    cfg.validate()?;
    check_cadence(t_end, cadence)?;
    let t_end = if cfg.uncapped {
        t_end
    } else {
        let rmax = initial.alpha_curvature().max();
        if rmax > 0.0 {
            t_end.min(BLOWUP_FRACTION / rmax)
        } else {
            t_end
        }
    };
    integrate(
        FlowState::new(initial.clone()),
        cfg,
        t_end,
        cadence,
        FlowKind::Unnormalized,
        false,
    )
}

/// A snapshot of the normalized image with its rescaled time.
#[derive(Debug, Clone)]
pub struct NormalizedImage {
    pub times: Vec<f64>,
    pub trajectory: Trajectory,
}

/// Maps an un-normalized run onto the normalized flow:
///
/// ```text
/// ĝ = (4π²/L(0)²) exp(∫₀^t R̄ dτ) g,     t̂ = (4π²/L(0)²) ∫₀^t exp(∫₀^δ R̄ dτ) dδ
/// ```
///
/// so `û = scale^{−1/4} u`. Both integrals are carried through the
/// Runge–Kutta stages of the raw run.
pub fn normalize_trajectory(raw: &Trajectory) -> Result<Trajectory, FlowError> {
    if raw.kind != FlowKind::Unnormalized {
        return Err(FlowError::Config("normalize_trajectory expects an un-normalized run".into()));
    }
    let first = raw
        .record
        .rows
        .first()
        .ok_or_else(|| FlowError::Config("empty trajectory".into()))?;
    let prefactor = 4.0 * PI * PI / (first.length * first.length);
    let mut rows = Vec::with_capacity(raw.snapshots.len());
    let mut snapshots = Vec::with_capacity(raw.snapshots.len());
    let mut last = f64::NEG_INFINITY;
    for (row, m) in raw.record.rows.iter().zip(&raw.snapshots) {
        let t_hat = prefactor * row.scale_integral;
        if !(t_hat > last) {
            return Err(FlowError::NonMonotoneTime(row.t));
        }
        last = t_hat;
        let scale = prefactor * row.rbar_integral.exp();
        let metric = m.with_u(m.u().scale(scale.powf(-0.25)))?;
        let mut state = FlowState::at_time(metric, t_hat);
        state.rbar_integral = row.rbar_integral;
        state.scale_integral = row.scale_integral;
        rows.push(TrajectoryRow::from_state(&state));
        snapshots.push(state.metric);
    }
    Ok(Trajectory {
        kind: FlowKind::Normalized,
        record: TrajectoryRecord { rows },
        snapshots,
        outcome: raw.outcome,
    })
}
