//! Conformal factors with α = 1 as convex plane curves.
//!
//! A positive u on S¹ describes the curve whose tangent turns through angle θ
//! with radius of curvature u⁻³:
//!
//! ```text
//! C_u(θ) = ∫₀^θ u⁻³(φ) (cos φ, sin φ) dφ
//! ```
//!
//! The curve closes exactly when u⁻³ has no mode-1 content. The affine
//! curvature of C_u is `κ = u³(u_θθ + u)` and its affine arc length is
//! `∫u⁻² dθ`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::circle_field::{fmt_f64, CircleField};
use crate::conformal_metric::ConformalMetric;
use crate::diagnostics::InequalityReport;
use crate::error::{BridgeError, MetricError};
use crate::flow_engine::FlowState;

/// Gap above which a curve counts as open, relative to its perimeter.
pub const CLOSURE_TOL: f64 = 1e-4;

/// Bounds on the elongation explored by [`sl2_normalize`].
pub const LAMBDA_RANGE: (f64, f64) = (1e-4, 1e4);

pub const MAX_NEWTON_ITERATIONS: usize = 100;

/// Polygons need at least this many vertices to be ingested.
pub const MIN_POLYGON_VERTICES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct CurveEmbedding {
    /// `C_u(θ_j)` on the grid.
    pub points: Vec<[f64; 2]>,
    /// Support function gauged to `h(0) = h_θ(0) = 0`.
    pub support: CircleField,
    pub area: f64,
    pub perimeter: f64,
    /// `|C_u(2π) − C_u(0)|`.
    pub closure_defect: f64,
    curvature: CircleField,
}

impl CurveEmbedding {
    /// Euclidean curvature `k = u³` at the grid points.
    pub fn curvature(&self) -> &CircleField {
        &self.curvature
    }

    /// CSV with header `theta,x,y,h,k`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,x,y,h,k\n");
        for (j, p) in self.points.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_f64(self.support.theta(j)),
                fmt_f64(p[0]),
                fmt_f64(p[1]),
                fmt_f64(self.support.samples()[j]),
                fmt_f64(self.curvature.samples()[j])
            );
        }
        out
    }
}

struct Tracing {
    x: Vec<f64>,
    y: Vec<f64>,
    support: CircleField,
    perimeter: f64,
    defect: f64,
}

fn trace(m: &ConformalMetric) -> Result<Tracing, BridgeError> {
    m.require_alpha(1.0)?;
    let w = m.inverse_cube();
    let wc = CircleField::from_fn(w.len(), |t| t.cos())
        .map_err(MetricError::from)?
        .zip_map(&w, |c, r| c * r);
    let ws = CircleField::from_fn(w.len(), |t| t.sin())
        .map_err(MetricError::from)?
        .zip_map(&w, |s, r| s * r);
    let x = wc.cumulative_integral();
    let y = ws.cumulative_integral();
    let h: Vec<f64> = (0..w.len())
        .map(|j| {
            let (s, c) = w.theta(j).sin_cos();
            s * x[j] - c * y[j]
        })
        .collect();
    let support = CircleField::new(h).map_err(MetricError::from)?;
    Ok(Tracing {
        x,
        y,
        support,
        perimeter: w.integrate(),
        defect: wc.integrate().hypot(ws.integrate()),
    })
}

fn closed(t: &Tracing) -> Result<(), BridgeError> {
    if t.defect > CLOSURE_TOL * t.perimeter {
        return Err(BridgeError::NotClosed {
            defect: t.defect,
            perimeter: t.perimeter,
        });
    }
    Ok(())
}

fn half_pairing(h: &CircleField, w: &CircleField) -> f64 {
    0.5 * h.inner(w)
}

/// Traces `C_u` by spectral cumulative integration.
pub fn reconstruct_curve(m: &ConformalMetric) -> Result<CurveEmbedding, BridgeError> {
    let t = trace(m)?;
    closed(&t)?;
    let area = half_pairing(&t.support, &m.inverse_cube());
    Ok(CurveEmbedding {
        points: t.x.iter().zip(&t.y).map(|(&x, &y)| [x, y]).collect(),
        area,
        perimeter: t.perimeter,
        closure_defect: t.defect,
        support: t.support,
        curvature: m.u().map(|u| u * u * u),
    })
}

/// `h(θ) = sin θ X(θ) − cos θ Y(θ)`, the support function of `C_u` about
/// its starting point. Solves `h_θθ + h = u⁻³` with `h(0) = h_θ(0) = 0`.
pub fn support_function(m: &ConformalMetric) -> Result<CircleField, BridgeError> {
    Ok(trace(m)?.support)
}

/// `A = ½∫h u⁻³ dθ`. Rejects open curves.
pub fn euclidean_area(m: &ConformalMetric) -> Result<f64, BridgeError> {
    let t = trace(m)?;
    closed(&t)?;
    Ok(half_pairing(&t.support, &m.inverse_cube()))
}

/// `∫u⁻³ dθ`.
pub fn perimeter(m: &ConformalMetric) -> f64 {
    m.inverse_cube().integrate()
}

/// Centered-difference `dA/dt − (3/2)(κ̄A − L/2)` at each interior snapshot.
/// With `L = 2π` the right side is `(3/2)(κ̄A − π)`.
pub fn area_ode_residual(snapshots: &[ConformalMetric], times: &[f64]) -> Result<Vec<f64>, BridgeError> {
    if snapshots.len() < 3 {
        return Err(BridgeError::TooFewSnapshots {
            needed: 3,
            got: snapshots.len(),
        });
    }
    if times.len() != snapshots.len() {
        return Err(BridgeError::Input(format!(
            "{} snapshots but {} times",
            snapshots.len(),
            times.len()
        )));
    }
    let areas = snapshots.iter().map(euclidean_area).collect::<Result<Vec<_>, _>>()?;
    Ok((1..snapshots.len() - 1)
        .map(|i| {
            let da = (areas[i + 1] - areas[i - 1]) / (times[i + 1] - times[i - 1]);
            let m = &snapshots[i];
            da - area_rate(m.mean_curvature(), areas[i], m.arc_length())
        })
        .collect())
}

/// `(3/2)κ̄A − ¾L`.
pub fn area_rate(kbar: f64, area: f64, length: f64) -> f64 {
    1.5 * kbar * area - 0.75 * length
}

fn support_rhs(m: &ConformalMetric) -> Result<CircleField, BridgeError> {
    let h = support_function(m)?;
    let kbar = m.mean_curvature();
    let u = m.u();
    let u_t = u.derivative_unchecked(1);
    let (u0, du0) = (u.samples()[0], u_t.samples()[0]);
    Ok(CircleField::from_fn(u.len(), |t| u0 * t.cos() + du0 * t.sin())
        .map_err(MetricError::from)?
        .zip_map(u, |k, uv| k - uv)
        .zip_map(&h, |r, hv| 0.75 * (kbar * hv + r)))
}

/// Max-norm of `(h₁ − h₀)/dt` minus the mean of
/// `¾(κ̄h − u + u(0)cos θ + u_θ(0)sin θ)` over the two states.
pub fn support_evolution_residual(s: &FlowState, ds: &FlowState) -> Result<f64, BridgeError> {
    let dt = ds.time() - s.time();
    if !(dt > 0.0) {
        return Err(BridgeError::Input(format!("snapshots must advance in time, dt = {dt}")));
    }
    let (h0, h1) = (support_function(s.metric())?, support_function(ds.metric())?);
    let (r0, r1) = (support_rhs(s.metric())?, support_rhs(ds.metric())?);
    Ok((0..h0.len())
        .map(|j| {
            let dh = (h1.samples()[j] - h0.samples()[j]) / dt;
            (dh - 0.5 * (r0.samples()[j] + r1.samples()[j])).abs()
        })
        .fold(0.0, f64::max))
}

/// Parameters of the unimodular stretch `T_{λ,α}`: factor √λ across the
/// direction α and 1/√λ along it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sl2Params {
    pub lambda: f64,
    pub alpha_angle: f64,
}

impl Sl2Params {
    pub const IDENTITY: Self = Self {
        lambda: 1.0,
        alpha_angle: 0.0,
    };

    pub fn new(lambda: f64, alpha_angle: f64) -> Result<Self, BridgeError> {
        if !(lambda > 0.0 && lambda.is_finite()) || !alpha_angle.is_finite() {
            return Err(BridgeError::Input(format!(
                "need lambda > 0 and a finite angle, got ({lambda}, {alpha_angle})"
            )));
        }
        Ok(Self {
            lambda,
            alpha_angle: alpha_angle.rem_euclid(TAU),
        })
    }

    pub fn inverse(&self) -> Self {
        Self {
            lambda: 1.0 / self.lambda,
            alpha_angle: self.alpha_angle,
        }
    }

    /// `ψ_{λ,α}(θ) = √(λcos²(θ−α) + λ⁻¹sin²(θ−α))`.
    pub fn multiplier(&self, theta: f64) -> f64 {
        let (s, c) = (theta - self.alpha_angle).sin_cos();
        (self.lambda * c * c + s * s / self.lambda).sqrt()
    }

    /// `σ(θ) = α + arctan(λ⁻¹ tan(θ − α))` on the branch with σ(α) = α.
    pub fn reparametrize(&self, theta: f64) -> f64 {
        let y = (theta - self.alpha_angle + PI).rem_euclid(TAU) - PI;
        let (s, c) = y.sin_cos();
        theta + ((s / self.lambda).atan2(c) - y)
    }
}

/// `(T_{λ,α}u)(θ) = u(σ(θ)) ψ(θ)`, with u interpolated trigonometrically.
pub fn sl2_transform(m: &ConformalMetric, p: Sl2Params) -> Result<ConformalMetric, BridgeError> {
    if p.lambda == 1.0 {
        return Ok(m.clone());
    }
    let grid = m.u().grid();
    let sigma: Vec<f64> = grid.iter().map(|&t| p.reparametrize(t)).collect();
    let values = m.u().evaluate_at(&sigma);
    let v: Vec<f64> = values
        .iter()
        .zip(&grid)
        .map(|(uv, &t)| uv * p.multiplier(t))
        .collect();
    let field = CircleField::new(v).map_err(MetricError::from)?;
    Ok(m.with_u(field)?)
}

/// Power series for `sinh s / s` and its radial derivatives
/// `G = S'(s)/s` and `H = G'(s)/s`. All terms are positive.
fn stretch_series(s: f64) -> (f64, f64, f64) {
    let s2 = s * s;
    let (mut sv, mut gv, mut hv) = (1.0, 0.0, 0.0);
    // c = 1/(2k+1)!, powers[i] = s^{2(k-i)}
    let mut c = 1.0;
    let mut powers = [1.0, 0.0, 0.0];
    for k in 1..200 {
        let kf = k as f64;
        c /= (2.0 * kf) * (2.0 * kf + 1.0);
        powers = [powers[0] * s2, powers[0], powers[1]];
        let term = c * powers[0];
        sv += term;
        gv += 2.0 * kf * c * powers[1];
        hv += 2.0 * kf * (2.0 * kf - 2.0) * c * powers[2];
        if k > 3 && c * powers[2] <= 1e-18 * hv {
            break;
        }
    }
    (sv, gv, hv)
}

/// Perimeter of `T u` in the stretch coordinates `z = s(cos 2α, sin 2α)`,
/// `s = log λ`, with gradient and Hessian.
///
/// With `q = cosh s − (sinh s/s)(z₁cos 2φ + z₂sin 2φ)` the objective is
/// `ℓ(z) = ∫u⁻³(φ) √q dφ`. The coordinates are regular at the identity,
/// where α is undefined.
struct Objective {
    weights: Vec<f64>,
    cos2: Vec<f64>,
    sin2: Vec<f64>,
    h: f64,
}

impl Objective {
    fn new(m: &ConformalMetric) -> Self {
        let w = m.inverse_cube();
        let grid = w.grid();
        Self {
            h: TAU / w.len() as f64,
            cos2: grid.iter().map(|t| (2.0 * t).cos()).collect(),
            sin2: grid.iter().map(|t| (2.0 * t).sin()).collect(),
            weights: w.into_samples(),
        }
    }

    fn value(&self, z: [f64; 2]) -> f64 {
        let s = z[0].hypot(z[1]);
        let (sv, _, _) = stretch_series(s);
        let ch = s.cosh();
        self.h
            * self
                .weights
                .iter()
                .zip(self.cos2.iter().zip(&self.sin2))
                .map(|(w, (c, d))| w * (ch - sv * (z[0] * c + z[1] * d)).sqrt())
                .sum::<f64>()
    }

    fn derivatives(&self, z: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let [x, y] = z;
        let s = x.hypot(y);
        let (sv, gv, hv) = stretch_series(s);
        let ch = s.cosh();
        let (mut f, mut g, mut hess) = (0.0, [0.0; 2], [[0.0; 2]; 2]);
        for (w, (c, d)) in self.weights.iter().zip(self.cos2.iter().zip(&self.sin2)) {
            let p = x * c + y * d;
            let q = ch - sv * p;
            let qx = sv * x - gv * x * p - sv * c;
            let qy = sv * y - gv * y * p - sv * d;
            let qxx = sv + gv * x * x - hv * x * x * p - gv * p - 2.0 * gv * x * c;
            let qyy = sv + gv * y * y - hv * y * y * p - gv * p - 2.0 * gv * y * d;
            let qxy = gv * x * y - hv * x * y * p - gv * x * d - gv * y * c;
            let r = q.sqrt();
            let r3 = 4.0 * r * r * r;
            f += w * r;
            g[0] += w * qx / (2.0 * r);
            g[1] += w * qy / (2.0 * r);
            hess[0][0] += w * (qxx / (2.0 * r) - qx * qx / r3);
            hess[1][1] += w * (qyy / (2.0 * r) - qy * qy / r3);
            hess[0][1] += w * (qxy / (2.0 * r) - qx * qy / r3);
        }
        hess[1][0] = hess[0][1];
        let h = self.h;
        (
            h * f,
            [h * g[0], h * g[1]],
            [[h * hess[0][0], h * hess[0][1]], [h * hess[1][0], h * hess[1][1]]],
        )
    }
}

fn params_from(z: [f64; 2]) -> Sl2Params {
    let s = z[0].hypot(z[1]);
    if s == 0.0 {
        return Sl2Params::IDENTITY;
    }
    Sl2Params {
        lambda: s.exp(),
        alpha_angle: (0.5 * z[1].atan2(z[0])).rem_euclid(PI),
    }
}

/// Starting point from the mode-2 part of u⁻³ (exact to first order for
/// small stretches).
fn initial_guess(m: &ConformalMetric) -> [f64; 2] {
    let w = m.inverse_cube();
    let (c, s) = w.mode_integrals(2);
    let (a2, b2) = (c / PI, s / PI);
    let scale = 2.0 / (3.0 * w.mean());
    [scale * a2, scale * b2]
}

/// Minimizes the perimeter `∫(T_{λ,α}u)⁻³ dθ` over the stretch family by
/// damped Newton and returns the minimizer `v = T_{λ,α}u`.
///
/// The returned parameters have λ ≥ 1 and α in [0, π); `(λ, α)` and
/// `(1/λ, α + π/2)` describe the same map.
pub fn sl2_normalize(m: &ConformalMetric) -> Result<(ConformalMetric, Sl2Params), BridgeError> {
    m.require_alpha(1.0)?;
    let objective = Objective::new(m);
    let s_max = LAMBDA_RANGE.1.ln();
    let mut z = initial_guess(m);
    if z[0].hypot(z[1]) > 0.5 * s_max || objective.value(z) > objective.value([0.0, 0.0]) {
        z = [0.0, 0.0];
    }
    let (mut f, mut g, mut hess) = objective.derivatives(z);
    let tol = 1e-14 * f;
    let mut iterations = 0;
    while g[0].hypot(g[1]) > tol {
        if iterations == MAX_NEWTON_ITERATIONS {
            let p = params_from(z);
            return Err(BridgeError::NoConvergence {
                iterations,
                lambda: p.lambda,
                angle: p.alpha_angle,
            });
        }
        iterations += 1;
        let mut mu = 0.0;
        let accepted = loop {
            let (a, b, d) = (hess[0][0] + mu, hess[0][1], hess[1][1] + mu);
            let det = a * d - b * b;
            if a > 0.0 && det > 0.0 {
                let step = [-(d * g[0] - b * g[1]) / det, -(a * g[1] - b * g[0]) / det];
                let mut t = 1.0;
                let mut found = None;
                for _ in 0..40 {
                    let trial = [z[0] + t * step[0], z[1] + t * step[1]];
                    let ft = objective.value(trial);
                    if ft <= f + 1e-4 * t * (g[0] * step[0] + g[1] * step[1]) || (ft - f).abs() <= 1e-15 * f {
                        found = Some(trial);
                        break;
                    }
                    t *= 0.5;
                }
                if let Some(trial) = found {
                    break Some(trial);
                }
            }
            mu = if mu == 0.0 { 1e-6 * (hess[0][0].abs() + hess[1][1].abs() + f) } else { 10.0 * mu };
            if mu > 1e12 * f {
                break None;
            }
        };
        let Some(next) = accepted else {
            break;
        };
        z = next;
        let s = z[0].hypot(z[1]);
        if s > s_max {
            return Err(BridgeError::Degenerate(s.exp()));
        }
        (f, g, hess) = objective.derivatives(z);
    }
    let p = params_from(z);
    let v = sl2_transform(m, p)?;
    Ok((v, p))
}

/// `(∫cos 2θ v⁻³ dθ, ∫sin 2θ v⁻³ dθ)`, which vanish at the perimeter
/// minimizer.
pub fn critical_integrals(v: &ConformalMetric) -> (f64, f64) {
    v.inverse_cube().mode_integrals(2)
}

/// `∫v⁻³ dθ ≤ 2√(6πA(v))` for a perimeter-minimizing v.
pub fn perimeter_bound_report(v: &ConformalMetric) -> Result<InequalityReport, BridgeError> {
    let area = euclidean_area(v)?;
    Ok(InequalityReport::upper(perimeter(v), 2.0 * (6.0 * PI * area).sqrt()))
}

/// Result of [`ingest_polygon`].
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedCurve {
    pub metric: ConformalMetric,
    /// Linear factor applied to the polygon to reach affine length 2π.
    pub scale: f64,
}

/// Smooth convex curve fitted to a closed polygon, returned as the factor u
/// on an n-point grid with `∫u⁻² dθ = 2π`.
///
/// Each edge contributes its length at its tangent angle to the radius of
/// curvature measure. Its low Fourier modes are filtered smoothly and
/// synthesized as u⁻³; mode 1 is set to zero so the curve closes.
pub fn ingest_polygon(points: &[[f64; 2]], n: usize) -> Result<IngestedCurve, BridgeError> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    let k = pts.len();
    if k < MIN_POLYGON_VERTICES {
        return Err(BridgeError::TooFewVertices {
            needed: MIN_POLYGON_VERTICES,
            got: k,
        });
    }
    if pts.iter().flatten().any(|x| !x.is_finite()) {
        return Err(BridgeError::Input("non-finite coordinate".into()));
    }
    let signed_area: f64 = (0..k)
        .map(|i| {
            let (p, q) = (pts[i], pts[(i + 1) % k]);
            p[0] * q[1] - p[1] * q[0]
        })
        .sum();
    if signed_area < 0.0 {
        pts.reverse();
    }
    let edges: Vec<[f64; 2]> = (0..k)
        .map(|i| {
            let (p, q) = (pts[i], pts[(i + 1) % k]);
            [q[0] - p[0], q[1] - p[1]]
        })
        .collect();
    let mut turning = 0.0;
    for i in 0..k {
        let (e0, e1) = (edges[(i + k - 1) % k], edges[i]);
        let cross = e0[0] * e1[1] - e0[1] * e1[0];
        let dot = e0[0] * e1[0] + e0[1] * e1[1];
        let scale = e0[0].hypot(e0[1]) * e1[0].hypot(e1[1]);
        if !(cross > 1e-12 * scale) {
            return Err(BridgeError::NotConvex(i));
        }
        turning += cross.atan2(dot);
    }
    if (turning - TAU).abs() > 1e-6 {
        return Err(BridgeError::SelfIntersecting { turning });
    }

    let cutoff = (n / 2 - 1).min(k / 8).max(1);
    let coeffs: Vec<(f64, f64)> = (0..=cutoff)
        .map(|mode| {
            let filter = (-36.0 * (mode as f64 / cutoff as f64).powi(8)).exp();
            let (mut c, mut s) = (0.0, 0.0);
            for e in &edges {
                let len = e[0].hypot(e[1]);
                let nu = e[1].atan2(e[0]);
                let (sn, cs) = (mode as f64 * nu).sin_cos();
                c += len * cs;
                s += len * sn;
            }
            let norm = if mode == 0 { TAU } else { PI };
            (filter * c / norm, filter * s / norm)
        })
        .collect();
    let a: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .map(|(mode, c)| if mode == 1 { 0.0 } else { c.0 })
        .collect();
    let b: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(mode, c)| if mode == 1 { 0.0 } else { c.1 })
        .collect();
    let rho = crate::circle_field::trig_polynomial(n, &a, &b).map_err(MetricError::from)?;
    if rho.min() <= 0.0 {
        return Err(BridgeError::Input(format!(
            "smoothed radius of curvature is not positive (min {:e})",
            rho.min()
        )));
    }
    let u = rho.map(|r| r.powf(-1.0 / 3.0));
    let length = u.map(|x| 1.0 / (x * x)).integrate();
    let u = u.scale((length / TAU).sqrt());
    Ok(IngestedCurve {
        metric: ConformalMetric::new(1.0, u)?,
        scale: (TAU / length).powf(1.5),
    })
}

/// Reads `x,y` rows; a non-numeric first row is taken as a header.
pub fn polygon_from_csv(text: &str) -> Result<Vec<[f64; 2]>, BridgeError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| BridgeError::Input(e.to_string()))?;
        if record.len() != 2 {
            return Err(BridgeError::Input(format!("row {}: expected 2 fields, got {}", i + 1, record.len())));
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => points.push([v[0], v[1]]),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(BridgeError::Input(format!("row {}: {e}", i + 1))),
        }
    }
    Ok(points)
}

pub fn polygon_to_csv(points: &[[f64; 2]]) -> String {
    let mut out = String::from("x,y\n");
    for p in points {
        let _ = writeln!(out, "{},{}", fmt_f64(p[0]), fmt_f64(p[1]));
    }
    out
}

/// Rotation of the stretch direction that swaps λ and 1/λ.
pub const ORBIT_SHIFT: f64 = FRAC_PI_2;
