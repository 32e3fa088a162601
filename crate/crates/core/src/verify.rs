//! Seeded property suites behind `conformal-flow verify`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::affine_bridge::{self, Sl2Params};
use crate::circle_field::CircleField;
use crate::cli::presets;
use crate::conformal_metric::{covariance_residual, ConformalMetric};
use crate::diagnostics;
use crate::flow_engine::{self, FlowState, StepperConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Covariance,
    Conservation,
    Monotonicity,
    KazdanWarner,
    Inequalities,
    Sl2,
    AreaOde,
    Decay,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Covariance,
        Suite::Conservation,
        Suite::Monotonicity,
        Suite::KazdanWarner,
        Suite::Inequalities,
        Suite::Sl2,
        Suite::AreaOde,
        Suite::Decay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Covariance => "covariance",
            Suite::Conservation => "conservation",
            Suite::Monotonicity => "monotonicity",
            Suite::KazdanWarner => "kazdan_warner",
            Suite::Inequalities => "inequalities",
            Suite::Sl2 => "sl2",
            Suite::AreaOde => "area_ode",
            Suite::Decay => "decay",
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
                format!("suite: unknown suite {s:?}, expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// Pass when `measured ≤ threshold`.
    AtMost,
    /// Pass when `measured ≥ threshold`.
    AtLeast,
}

/// One measured property.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub property: String,
    pub measured: f64,
    pub threshold: f64,
    pub bound: Bound,
}

impl Check {
    pub fn at_most(property: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self {
            property: property.into(),
            measured,
            threshold,
            bound: Bound::AtMost,
        }
    }

    pub fn at_least(property: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self {
            property: property.into(),
            measured,
            threshold,
            bound: Bound::AtLeast,
        }
    }

    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::AtMost => self.measured <= self.threshold,
            Bound::AtLeast => self.measured >= self.threshold,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.bound {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
        };
        write!(
            f,
            "{} {}: {:.6e} {op} {:.6e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.property,
            self.measured,
            self.threshold
        )
    }
}

const TRIALS: usize = 100;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn metric(alpha: f64, u: CircleField) -> ConformalMetric {
    ConformalMetric::new(alpha, u).expect("presets produce positive fields")
}

/// A non-passing check for a step that errored.
fn failed(property: &str, err: impl fmt::Display) -> Check {
    Check {
        property: format!("{property} ({err})"),
        measured: f64::NAN,
        threshold: 0.0,
        bound: Bound::AtMost,
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Vec<Check> {
    let mut r = rng(seed);
    match suite {
        Suite::Covariance => covariance(&mut r),
        Suite::Conservation => conservation(&mut r),
        Suite::Monotonicity => monotonicity(&mut r),
        Suite::KazdanWarner => kazdan_warner(&mut r),
        Suite::Inequalities => inequalities(&mut r),
        Suite::Sl2 => sl2(&mut r),
        Suite::AreaOde => area_ode(&mut r),
        Suite::Decay => decay(),
    }
}

fn covariance(r: &mut ChaCha8Rng) -> Vec<Check> {
    [1.0, 4.0]
        .into_iter()
        .map(|alpha| {
            let mut worst: f64 = 0.0;
            for _ in 0..TRIALS {
                let m = metric(alpha, presets::random_bandlimited(128, 4, 0.3, r).unwrap());
                let phi = presets::random_bandlimited(128, 4, 0.3, r).unwrap();
                let psi = presets::random_signed(128, 4, r).unwrap();
                match covariance_residual(&m, &phi, &psi) {
                    Ok(res) => worst = worst.max(res),
                    Err(e) => return failed("covariance", e),
                }
            }
            Check::at_most(format!("alpha={alpha} covariance residual, {TRIALS} pairs"), worst, 1e-8)
        })
        .collect()
}

fn conservation(r: &mut ChaCha8Rng) -> Vec<Check> {
    let cfg = StepperConfig::default();
    let mut out = Vec::new();
    for alpha in [1.0, 4.0] {
        let u = if alpha == 1.0 {
            presets::random_orthogonal(64, 4, 0.3, r).unwrap()
        } else {
            presets::random_bandlimited(64, 4, 0.2, r).unwrap()
        };
        let m = flow_engine::project_length(&metric(alpha, u));
        match flow_engine::run(&m, &cfg, 1.0, 0.1) {
            Ok(traj) => {
                let drift = traj
                    .record
                    .rows
                    .iter()
                    .map(|row| (row.length - TAU).abs() / TAU)
                    .fold(0.0, f64::max);
                out.push(Check::at_most(format!("alpha={alpha} relative length drift to t=1"), drift, 1e-6));
                if alpha == 1.0 {
                    let orth = traj
                        .record
                        .rows
                        .iter()
                        .filter_map(|row| row.orthogonality)
                        .map(|(c, s)| c.abs().max(s.abs()))
                        .fold(0.0, f64::max);
                    out.push(Check::at_most("alpha=1 mode-1 integrals of u^-3 to t=1", orth, 1e-8));
                }
            }
            Err(e) => out.push(failed("conservation run", e)),
        }
    }
    out
}

fn monotonicity(r: &mut ChaCha8Rng) -> Vec<Check> {
    let cfg = StepperConfig::default();
    let mut out = Vec::new();
    for alpha in [1.0, 4.0] {
        let u = if alpha == 1.0 {
            presets::random_orthogonal(64, 4, 0.3, r).unwrap()
        } else {
            presets::random_bandlimited(64, 4, 0.2, r).unwrap()
        };
        let mut s = FlowState::new(flow_engine::project_length(&metric(alpha, u)));
        let (mut drop, mut above, mut rate_err): (f64, f64, f64) = (0.0, f64::NEG_INFINITY, 0.0);
        let mut prev = (s.time(), s.mean_curvature(), diagnostics::f_p(s.metric(), 2.0).unwrap_or(f64::NAN));
        while s.time() < 0.5 {
            s = match flow_engine::step_normalized(&s, &cfg) {
                Ok(next) => next,
                Err(e) => {
                    out.push(failed("monotonicity step", e));
                    return out;
                }
            };
            let rbar = s.mean_curvature();
            let f2 = diagnostics::f_p(s.metric(), 2.0).unwrap_or(f64::NAN);
            let length = s.metric().arc_length();
            drop = drop.max(prev.1 - rbar);
            above = above.max(rbar - 4.0 * PI * PI / (length * length));
            // trapezoid average of F₂/(2L) over the step
            if prev.2.min(f2) > 1e-8 {
                let expected = 0.5 * (prev.2 + f2) / (2.0 * length);
                let measured = (rbar - prev.1) / (s.time() - prev.0);
                rate_err = rate_err.max((measured - expected).abs() / expected);
            }
            prev = (s.time(), rbar, f2);
        }
        out.push(Check::at_most(format!("alpha={alpha} largest per-step drop of Rbar"), drop, 1e-10));
        out.push(Check::at_most(format!("alpha={alpha} Rbar - 4pi^2/L^2"), above, 1e-9));
        out.push(Check::at_most(format!("alpha={alpha} relative error of dRbar/dt vs F2/(2L)"), rate_err, 1e-2));
    }
    out
}

fn kazdan_warner(r: &mut ChaCha8Rng) -> Vec<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..TRIALS {
        let m = metric(4.0, presets::random_bandlimited(256, 8, 0.3, r).unwrap());
        match diagnostics::kazdan_warner_residual(&m) {
            Ok(res) => worst = worst.max(res),
            Err(e) => return vec![failed("kazdan_warner", e)],
        }
    }
    vec![Check::at_most(format!("Kazdan-Warner residual at n=256, {TRIALS} metrics"), worst, 1e-8)]
}

fn inequalities(r: &mut ChaCha8Rng) -> Vec<Check> {
    let mut gap_a: f64 = 0.0;
    let mut gap_b: f64 = 0.0;
    for lambda in [1.0, 1.5, 2.0] {
        for angle in [0.0, 0.4, 1.1] {
            let a = presets::theorem_a_extremal(256, lambda, angle, 1.0).unwrap();
            let b = presets::theorem_b_extremal(256, lambda, angle, 1.0).unwrap();
            match (diagnostics::theorem_a_report(&a), diagnostics::theorem_b_report(&b)) {
                (Ok(ra), Ok(rb)) => {
                    gap_a = gap_a.max(ra.equality_gap.abs());
                    gap_b = gap_b.max(rb.equality_gap.abs());
                }
                (Err(e), _) | (_, Err(e)) => return vec![failed("equality family", e)],
            }
        }
    }
    let (mut min_a, mut min_b) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..TRIALS {
        let a = presets::random_orthogonal(128, 6, 0.5, r).unwrap();
        let b = presets::random_bandlimited(128, 6, 0.4, r).unwrap();
        match (diagnostics::theorem_a_report(&a), diagnostics::theorem_b_report(&b)) {
            (Ok(ra), Ok(rb)) => {
                min_a = min_a.min(ra.deficit);
                min_b = min_b.min(rb.deficit);
            }
            (Err(e), _) | (_, Err(e)) => return vec![failed("random fields", e)],
        }
    }
    vec![
        Check::at_most("Theorem A equality family, relative gap to -4pi^2", gap_a, 1e-8),
        Check::at_most("Theorem B equality family, relative gap to -pi^2", gap_b, 1e-8),
        Check::at_least(format!("Theorem A min deficit over {TRIALS} orthogonal fields"), min_a, -1e-9),
        Check::at_least(format!("Theorem B min deficit over {TRIALS} positive fields"), min_b, -1e-9),
    ]
}

fn sl2(r: &mut ChaCha8Rng) -> Vec<Check> {
    let mut out = Vec::new();
    let p = Sl2Params::new(2.0, 0.3).expect("valid parameters");
    let m = metric(1.0, CircleField::from_fn(128, |t| p.multiplier(t)).unwrap());
    match affine_bridge::sl2_normalize(&m) {
        Ok((v, _)) => {
            let (c, s) = affine_bridge::critical_integrals(&v);
            out.push(Check::at_most("psi_{2,0.3}: max|v - 1|", v.u().map(|x| (x - 1.0).abs()).max(), 1e-6));
            out.push(Check::at_most(
                "psi_{2,0.3}: |perimeter - 2pi|",
                (affine_bridge::perimeter(&v) - TAU).abs(),
                1e-6,
            ));
            out.push(Check::at_most("psi_{2,0.3}: critical integrals", c.abs().max(s.abs()), 1e-8));
        }
        Err(e) => out.push(failed("sl2_normalize", e)),
    }
    let (mut inv, mut action, mut crit, mut lbdd) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..20 {
        let m = metric(1.0, presets::random_orthogonal(128, 5, 0.4, r).unwrap());
        let p = Sl2Params::new((rand::Rng::gen_range(r, -0.7..0.7f64)).exp(), rand::Rng::gen_range(r, 0.0..PI))
            .expect("valid parameters");
        let result = affine_bridge::sl2_transform(&m, p).and_then(|v| {
            let back = affine_bridge::sl2_transform(&v, p.inverse())?;
            let da = (affine_bridge::euclidean_area(&v)? - affine_bridge::euclidean_area(&m)?).abs();
            let dl = (v.arc_length() - m.arc_length()).abs();
            let (n, _) = affine_bridge::sl2_normalize(&m)?;
            let (c, s) = affine_bridge::critical_integrals(&n);
            let report = affine_bridge::perimeter_bound_report(&n)?;
            Ok((da.max(dl), back.u().sup_distance(m.u()), c.abs().max(s.abs()), report.deficit))
        });
        match result {
            Ok((d, a, c, l)) => {
                inv = inv.max(d);
                action = action.max(a);
                crit = crit.max(c);
                lbdd = lbdd.min(l);
            }
            Err(e) => {
                out.push(failed("sl2 random", e));
                return out;
            }
        }
    }
    out.push(Check::at_most("transform changes area and length by", inv, 1e-9));
    out.push(Check::at_most("T_{1/lambda} T_lambda u - u", action, 1e-8));
    out.push(Check::at_most("critical integrals after normalization", crit, 1e-8));
    out.push(Check::at_least("perimeter bound deficit after normalization", lbdd, -1e-8));
    out
}

fn area_ode(r: &mut ChaCha8Rng) -> Vec<Check> {
    let m = flow_engine::project_length(&metric(1.0, presets::random_orthogonal(64, 4, 0.3, r).unwrap()));
    let traj = match flow_engine::run(&m, &StepperConfig::default(), 2.0, 0.01) {
        Ok(t) => t,
        Err(e) => return vec![failed("area_ode run", e)],
    };
    let times = traj.record.times();
    let residual = match affine_bridge::area_ode_residual(&traj.snapshots, &times) {
        Ok(r) => r,
        Err(e) => return vec![failed("area_ode residual", e)],
    };
    let areas: Vec<f64> = traj.record.rows.iter().filter_map(|row| row.area).collect();
    let rates: Vec<f64> = (1..areas.len() - 1)
        .map(|i| (areas[i + 1] - areas[i - 1]) / (times[i + 1] - times[i - 1]))
        .collect();
    let scale = rates.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let rel = residual.iter().fold(0.0f64, |m, x| m.max(x.abs())) / scale;
    let rise = areas.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    vec![
        Check::at_most("area ODE residual relative to max |dA/dt|, cadence 0.01", rel, 1e-2),
        Check::at_most("largest area increase between samples", rise, 0.0),
    ]
}

fn decay() -> Vec<Check> {
    let mut out = Vec::new();
    let cases = [
        (4.0, 2, 8.0, StepperConfig::default(), (4.8, 7.2)),
        (1.0, 3, 12.0, StepperConfig::long_horizon(), (2.0, 3.0)),
    ];
    for (alpha, mode, t_end, cfg, (lo, hi)) in cases {
        let mut m = metric(alpha, presets::perturbed_round(64, 0.2, mode).unwrap());
        if alpha == 1.0 {
            m = flow_engine::project_orthogonality(&m).expect("small perturbation stays convex");
        }
        let m = flow_engine::project_length(&m);
        match flow_engine::run(&m, &cfg, t_end, 0.05) {
            Ok(traj) => match crate::cli::fit_f2_decay(&traj) {
                Some(fit) => {
                    out.push(Check::at_least(format!("alpha={alpha} mode-{mode} F2 decay rate"), fit.rate, lo));
                    out.push(Check::at_most(format!("alpha={alpha} mode-{mode} F2 decay rate"), fit.rate, hi));
                }
                None => out.push(failed("decay fit", "window too short")),
            },
            Err(e) => out.push(failed("decay run", e)),
        }
    }
    out
}

/// `verify <suite> [--seed N]`: prints one line per check; exit 0 iff all
/// pass, 1 for an unknown suite or any failure.
pub fn cmd_verify(suite: &str, seed: u64) -> i32 {
    let suite = match suite.parse::<Suite>() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return crate::cli::EXIT_INPUT;
        }
    };
    let checks = run_suite(suite, seed);
    for c in &checks {
        println!("{c}");
    }
    if checks.iter().all(Check::passed) {
        crate::cli::EXIT_OK
    } else {
        crate::cli::EXIT_INPUT
    }
}
