//! Batch driver behind the `conformal-flow` binary: experiment configs, run
//! output, and the file-level commands.
//!
//! Every command returns a process exit code: 0 on success, 1 for bad input
//! or configuration, 2 when the numerics fail.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::affine_bridge::{self, Sl2Params};
use crate::circle_field::{CircleField, FieldSnapshot};
use crate::conformal_metric::{ConformalMetric, MetricSnapshot};
use crate::diagnostics::{self, DecayFit, InequalityReport};
use crate::error::{BridgeError, FlowError};
use crate::flow_engine::{self, RunOutcome, StepperConfig, Trajectory};

/// Overrides the directory that relative output paths resolve against.
pub const OUTPUT_ROOT_ENV: &str = "CONFLOW_OUTPUT_ROOT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NUMERICS: i32 = 2;

/// `$CONFLOW_OUTPUT_ROOT` if set, else the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub initial: InitialCondition,
    pub n_samples: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_max_dt")]
    pub max_dt: f64,
    pub t_end: f64,
    pub cadence: f64,
    #[serde(default)]
    pub projections: Projections,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
}

fn default_cfl() -> f64 {
    StepperConfig::default().cfl
}

fn default_max_dt() -> f64 {
    StepperConfig::default().max_dt
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Projections {
    #[serde(default)]
    pub length: bool,
    #[serde(default)]
    pub orthogonality: bool,
}

fn one() -> f64 {
    1.0
}

/// Where the initial factor comes from. Tagged by `"kind"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Round,
    PerturbedRound {
        amplitude: f64,
        mode: usize,
    },
    TheoremAExtremal {
        lambda: f64,
        angle: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    TheoremBExtremal {
        lambda: f64,
        angle: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    RandomBandlimited {
        modes: usize,
        amplitude: f64,
    },
    /// `u = a₀ + Σ a_k cos kθ + b_k sin kθ`.
    FourierU {
        a: Vec<f64>,
        #[serde(default)]
        b: Vec<f64>,
    },
    /// Same layout, for u⁻³.
    FourierInverseCube {
        a: Vec<f64>,
        #[serde(default)]
        b: Vec<f64>,
    },
    /// `x,y` CSV, resolved against the config file's directory.
    Polygon {
        path: PathBuf,
    },
}

/// Initial data families.
pub mod presets {
    use rand::Rng;

    use super::*;

    /// `1 + ε cos(kθ)`.
    pub fn perturbed_round(n: usize, amplitude: f64, mode: usize) -> Result<CircleField, String> {
        if 2 * mode >= n {
            return Err(format!(
                "initial.mode: mode {mode} does not fit below the Nyquist limit of n_samples = {n}"
            ));
        }
        CircleField::from_fn(n, |t| 1.0 + amplitude * (mode as f64 * t).cos()).map_err(|e| e.to_string())
    }

    /// `c √(λ²cos²(θ−α) + λ⁻²sin²(θ−α))`, the equality family of the
    /// mode-1-constrained inequality.
    pub fn theorem_a_extremal(n: usize, lambda: f64, angle: f64, scale: f64) -> Result<CircleField, String> {
        CircleField::from_fn(n, |t| {
            let (s, c) = (t - angle).sin_cos();
            scale * (lambda * lambda * c * c + s * s / (lambda * lambda)).sqrt()
        })
        .map_err(|e| e.to_string())
    }

    /// `c √(λ²cos²((θ−α)/2) + λ⁻²sin²((θ−α)/2))`.
    pub fn theorem_b_extremal(n: usize, lambda: f64, angle: f64, scale: f64) -> Result<CircleField, String> {
        CircleField::from_fn(n, |t| {
            let (s, c) = (0.5 * (t - angle)).sin_cos();
            scale * (lambda * lambda * c * c + s * s / (lambda * lambda)).sqrt()
        })
        .map_err(|e| e.to_string())
    }

    fn random_modes<R: Rng>(rng: &mut R, first: usize, modes: usize, amplitude: f64) -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![1.0];
        let mut b = Vec::new();
        for k in 1..=modes {
            let (ck, sk) = if k < first {
                (0.0, 0.0)
            } else {
                (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            };
            a.push(amplitude * ck / k as f64);
            b.push(amplitude * sk / k as f64);
        }
        (a, b)
    }

    /// `1 + ε Σ_{k≤K} (c_k cos kθ + s_k sin kθ)/k` with c, s uniform on
    /// [−1, 1].
    pub fn random_bandlimited<R: Rng>(n: usize, modes: usize, amplitude: f64, rng: &mut R) -> Result<CircleField, String> {
        let (a, b) = random_modes(rng, 1, modes, amplitude);
        let u = crate::circle_field::trig_polynomial(n, &a, &b).map_err(|e| e.to_string())?;
        positive(u, "random_bandlimited")
    }

    /// `Σ_{k≤K} (c_k cos kθ + s_k sin kθ)/k` without the constant term and
    /// without a sign constraint.
    pub fn random_signed<R: Rng>(n: usize, modes: usize, rng: &mut R) -> Result<CircleField, String> {
        let (mut a, b) = random_modes(rng, 1, modes, 1.0);
        a[0] = 0.0;
        crate::circle_field::trig_polynomial(n, &a, &b).map_err(|e| e.to_string())
    }

    /// A factor whose u⁻³ is a random band-limited field without mode 1,
    /// so the associated curve closes.
    pub fn random_orthogonal<R: Rng>(n: usize, modes: usize, amplitude: f64, rng: &mut R) -> Result<CircleField, String> {
        let (a, b) = random_modes(rng, 2, modes, amplitude);
        let w = crate::circle_field::trig_polynomial(n, &a, &b).map_err(|e| e.to_string())?;
        let w = positive(w, "random_orthogonal")?;
        Ok(w.map(|x| x.powf(-1.0 / 3.0)))
    }

    fn positive(u: CircleField, what: &str) -> Result<CircleField, String> {
        if u.min() <= 0.0 {
            return Err(format!("{what}: amplitude too large, field reaches {:e}", u.min()));
        }
        Ok(u)
    }
}

/// Bad configuration; the message names the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| config_err(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.alpha != 1.0 && self.alpha != 4.0 {
            return Err(config_err(format!("alpha: must be 1 or 4, got {}", self.alpha)));
        }
        if !self.n_samples.is_multiple_of(2) {
            return Err(config_err(format!("n_samples: must be even, got {}", self.n_samples)));
        }
        if self.n_samples < 8 {
            return Err(config_err(format!("n_samples: need at least 8, got {}", self.n_samples)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(config_err(format!("cfl: must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.max_dt > 0.0) {
            return Err(config_err(format!("max_dt: must be positive, got {}", self.max_dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(config_err(format!("t_end: must be finite and non-negative, got {}", self.t_end)));
        }
        if !(self.cadence > 0.0) {
            return Err(config_err(format!("cadence: must be positive, got {}", self.cadence)));
        }
        if matches!(self.initial, InitialCondition::RandomBandlimited { .. }) && self.seed.is_none() {
            return Err(config_err("seed: required by initial.kind = random_bandlimited"));
        }
        Ok(())
    }

    pub fn stepper(&self) -> StepperConfig {
        StepperConfig {
            cfl: self.cfl,
            project_length: self.projections.length,
            project_orthogonality: self.projections.orthogonality,
            max_dt: self.max_dt,
            uncapped: false,
        }
    }

    /// Builds the initial metric. `base` resolves relative polygon paths.
    pub fn initial_metric(&self, base: &Path) -> Result<ConformalMetric, ConfigError> {
        self.validate()?;
        let n = self.n_samples;
        let fourier = |a: &[f64], b: &[f64]| {
            crate::circle_field::trig_polynomial(n, a, b).map_err(|e| format!("initial: {e}"))
        };
        let u = match &self.initial {
            InitialCondition::Round => CircleField::constant(n, 1.0).map_err(|e| e.to_string()),
            InitialCondition::PerturbedRound { amplitude, mode } => presets::perturbed_round(n, *amplitude, *mode),
            InitialCondition::TheoremAExtremal { lambda, angle, scale } => {
                presets::theorem_a_extremal(n, *lambda, *angle, *scale)
            }
            InitialCondition::TheoremBExtremal { lambda, angle, scale } => {
                presets::theorem_b_extremal(n, *lambda, *angle, *scale)
            }
            InitialCondition::RandomBandlimited { modes, amplitude } => {
                if 2 * modes >= n {
                    return Err(config_err(format!(
                        "initial.modes: mode {modes} does not fit below the Nyquist limit of n_samples = {n}"
                    )));
                }
                let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(self.seed.unwrap_or(0));
                presets::random_bandlimited(n, *modes, *amplitude, &mut rng)
            }
            InitialCondition::FourierU { a, b } => fourier(a, b),
            InitialCondition::FourierInverseCube { a, b } => fourier(a, b).and_then(|w| {
                if w.min() <= 0.0 {
                    Err(format!("initial.a: u^-3 is not positive (min {:e})", w.min()))
                } else {
                    Ok(w.map(|x| x.powf(-1.0 / 3.0)))
                }
            }),
            InitialCondition::Polygon { path } => {
                if self.alpha != 1.0 {
                    return Err(config_err("initial.path: polygons describe alpha = 1 metrics"));
                }
                let full = base.join(path);
                let text = fs::read_to_string(&full)
                    .map_err(|e| config_err(format!("initial.path: cannot read {}: {e}", full.display())))?;
                let points = affine_bridge::polygon_from_csv(&text).map_err(|e| config_err(format!("initial.path: {e}")))?;
                return affine_bridge::ingest_polygon(&points, n)
                    .map(|c| c.metric)
                    .map_err(|e| config_err(format!("initial.path: {e}")));
            }
        }
        .map_err(config_err)?;
        let m = ConformalMetric::new(self.alpha, u).map_err(|e| config_err(format!("initial: {e}")))?;
        if self.alpha == 1.0 {
            if matches!(self.initial, InitialCondition::PerturbedRound { .. }) {
                let m = flow_engine::project_orthogonality(&m).map_err(|e| config_err(format!("initial: {e}")))?;
                return Ok(flow_engine::project_length(&m));
            }
            let (c, s) = flow_engine::orthogonality_integrals(&m);
            let tol = flow_engine::INITIAL_ORTHOGONALITY_TOL * m.inverse_cube().integrate();
            if c.abs().max(s.abs()) > tol && !self.projections.orthogonality {
                return Err(config_err(format!(
                    "initial: alpha = 1 data violates orthogonality (mode-1 integrals {c:e}, {s:e}); \
                     enable projections.orthogonality"
                )));
            }
        }
        if matches!(self.initial, InitialCondition::PerturbedRound { .. }) {
            return Ok(flow_engine::project_length(&m));
        }
        Ok(m)
    }
}

/// Invariant-violation counters accumulated over the recorded rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violations {
    /// R̄ fell by more than 1e-10 between rows.
    pub rbar_decrease: u64,
    /// R̄ exceeded `4π²/L²` by more than 1e-9.
    pub rbar_above_bound: u64,
    /// `|L − L(0)| > 1e-6 L(0)`.
    pub length_drift: u64,
    /// Mode-1 integrals of u⁻³ above 1e-8 (α = 1).
    pub orthogonality: u64,
    /// Area grew between rows (α = 1).
    pub area_increase: u64,
    /// Area outside `[π(max κ)^{−3/2}, π(min κ)^{−3/2}]` (α = 1).
    pub area_sandwich: u64,
    /// `‖κ − κ̄‖_∞ > √(2π∫κ_σ²dσ) + 1e-9` (α = 1).
    pub sup_bound: u64,
    /// Kazdan–Warner residual above 1e-8 (α = 4).
    pub kazdan_warner: u64,
}

impl Violations {
    pub fn total(&self) -> u64 {
        self.rbar_decrease
            + self.rbar_above_bound
            + self.length_drift
            + self.orthogonality
            + self.area_increase
            + self.area_sandwich
            + self.sup_bound
            + self.kazdan_warner
    }

    pub fn tally(traj: &Trajectory) -> Self {
        let mut v = Self::default();
        let rows = &traj.record.rows;
        let Some(first) = rows.first() else {
            return v;
        };
        for (i, row) in rows.iter().enumerate() {
            let m = &traj.snapshots[i];
            if i > 0 {
                let prev = &rows[i - 1];
                if row.rbar < prev.rbar - 1e-10 {
                    v.rbar_decrease += 1;
                }
                if let (Some(a0), Some(a1)) = (prev.area, row.area) {
                    if a1 > a0 + 1e-12 * a0 {
                        v.area_increase += 1;
                    }
                }
            }
            if row.rbar > 4.0 * PI * PI / (row.length * row.length) + 1e-9 {
                v.rbar_above_bound += 1;
            }
            if (row.length - first.length).abs() > 1e-6 * first.length {
                v.length_drift += 1;
            }
            if let Some((c, s)) = row.orthogonality {
                if c.abs().max(s.abs()) > 1e-8 {
                    v.orthogonality += 1;
                }
            }
            if let Some(area) = row.area {
                let kappa = m.alpha_curvature();
                let (lo, hi) = (PI * kappa.max().powf(-1.5), PI * kappa.min().powf(-1.5));
                if area < lo * (1.0 - 1e-9) || (kappa.min() > 0.0 && area > hi * (1.0 + 1e-9)) {
                    v.area_sandwich += 1;
                }
            }
            if m.alpha() == 1.0 {
                if let Ok((sup, bound)) = diagnostics::sup_bound_chain(m) {
                    if sup > bound + 1e-9 {
                        v.sup_bound += 1;
                    }
                }
            }
            if let Some(kw) = row.kw_residual {
                if kw > 1e-8 {
                    v.kazdan_warner += 1;
                }
            }
        }
        v
    }
}

/// Smallest F₂ used when fitting the decay rate.
pub const DECAY_FLOOR: f64 = 1e-18;

/// The fit starts once F₂ has dropped below this fraction of its peak.
pub const DECAY_START_FRACTION: f64 = 1e-2;

/// Exponential fit of the F₂ tail, if the run decayed far enough.
pub fn fit_f2_decay(traj: &Trajectory) -> Option<DecayFit> {
    let series = traj.record.f2_series();
    let window = diagnostics::tail_window(&series, DECAY_START_FRACTION, DECAY_FLOOR)?;
    diagnostics::fit_decay(&series, window).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Steady,
    Horizon,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub alpha: f64,
    pub n_samples: usize,
    pub rows: usize,
    pub t_final: f64,
    pub final_rbar: Option<f64>,
    pub final_f2: Option<f64>,
    pub decay: Option<DecayFit>,
    pub violations: Violations,
    pub total_violations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Deletes the lock file when the run ends.
struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> io::Result<Self> {
        let path = dir.join(".lock");
        fs::OpenOptions::new().write(true).create_new(true).open(&path)?;
        Ok(Self(path))
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn write(path: &Path, contents: &str) -> io::Result<()> {
    fs::write(path, contents)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

/// Outcome of [`run_experiment`]; `Err` only for configuration and I/O.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Io(PathBuf, io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl std::error::Error for RunError {}

/// Runs a config and writes its outputs into `out_dir`:
///
/// - `trajectory.csv`
/// - `snapshots/metric_NNNNN.json`, one per recorded row
/// - `curves/curve_NNNNN.csv` for α = 1
/// - `summary.json`
///
/// Integration failures are reported in the summary with status `failed`
/// and the offending field in `failure_snapshot.json`.
pub fn run_experiment(config: &ExperimentConfig, base: &Path, out_dir: &Path) -> Result<RunSummary, RunError> {
    let initial = config.initial_metric(base).map_err(RunError::Config)?;
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |e| RunError::Io(p, e)
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let _lock = DirLock::acquire(out_dir).map_err(|e| {
        if e.kind() == io::ErrorKind::AlreadyExists {
            RunError::Config(config_err(format!(
                "output_dir: {} is locked by another run (remove .lock if stale)",
                out_dir.display()
            )))
        } else {
            RunError::Io(out_dir.join(".lock"), e)
        }
    })?;

    let result = flow_engine::run(&initial, &config.stepper(), config.t_end, config.cadence);
    let traj = match result {
        Ok(t) => t,
        Err(FlowError::NotOrthogonal { cos, sin }) => {
            return Err(RunError::Config(config_err(format!(
                "initial: orthogonality violated (mode-1 integrals {cos:e}, {sin:e})"
            ))))
        }
        Err(FlowError::Config(msg)) => return Err(RunError::Config(config_err(msg))),
        Err(e) => {
            let (time, snapshot) = match &e {
                FlowError::Integration { time, snapshot, .. } => (*time, Some(snapshot.clone())),
                _ => (f64::NAN, None),
            };
            if let Some(samples) = snapshot {
                let path = out_dir.join("failure_snapshot.json");
                let snap = FieldSnapshot {
                    n: samples.len(),
                    samples,
                };
                write(&path, &to_json(&snap)).map_err(io_err(&path))?;
            }
            let summary = RunSummary {
                status: RunStatus::Failed,
                alpha: config.alpha,
                n_samples: config.n_samples,
                rows: 0,
                t_final: time,
                final_rbar: None,
                final_f2: None,
                decay: None,
                violations: Violations::default(),
                total_violations: 0,
                message: Some(e.to_string()),
            };
            let path = out_dir.join("summary.json");
            write(&path, &to_json(&summary)).map_err(io_err(&path))?;
            return Ok(summary);
        }
    };

    let path = out_dir.join("trajectory.csv");
    write(&path, &traj.record.to_csv()).map_err(io_err(&path))?;
    let snap_dir = out_dir.join("snapshots");
    fs::create_dir_all(&snap_dir).map_err(io_err(&snap_dir))?;
    for (i, m) in traj.snapshots.iter().enumerate() {
        let path = snap_dir.join(format!("metric_{i:05}.json"));
        write(&path, &to_json(&m.to_snapshot())).map_err(io_err(&path))?;
    }
    if config.alpha == 1.0 {
        let curve_dir = out_dir.join("curves");
        fs::create_dir_all(&curve_dir).map_err(io_err(&curve_dir))?;
        for (i, m) in traj.snapshots.iter().enumerate() {
            if let Ok(curve) = affine_bridge::reconstruct_curve(m) {
                let path = curve_dir.join(format!("curve_{i:05}.csv"));
                write(&path, &curve.to_csv()).map_err(io_err(&path))?;
            }
        }
    }
    let violations = Violations::tally(&traj);
    let last = traj.record.rows.last().expect("a run records its initial state");
    let summary = RunSummary {
        status: match traj.outcome {
            RunOutcome::Steady => RunStatus::Steady,
            RunOutcome::Horizon => RunStatus::Horizon,
        },
        alpha: config.alpha,
        n_samples: config.n_samples,
        rows: traj.record.rows.len(),
        t_final: last.t,
        final_rbar: Some(last.rbar),
        final_f2: Some(last.f2),
        decay: fit_f2_decay(&traj),
        violations,
        total_violations: violations.total(),
        message: None,
    };
    let path = out_dir.join("summary.json");
    write(&path, &to_json(&summary)).map_err(io_err(&path))?;
    Ok(summary)
}

/// `run <config.json>`.
pub fn cmd_run(config_path: &Path) -> i32 {
    let text = match fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("config: cannot read {}: {e}", config_path.display());
            return EXIT_INPUT;
        }
    };
    let config = match ExperimentConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_INPUT;
        }
    };
    let base = config_path.parent().unwrap_or(Path::new("."));
    let out_dir = output_root().join(&config.output_dir);
    match run_experiment(&config, base, &out_dir) {
        Ok(summary) => {
            println!("{}", to_json(&summary).trim_end());
            match summary.status {
                RunStatus::Failed => EXIT_NUMERICS,
                _ => EXIT_OK,
            }
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_INPUT
        }
    }
}

fn read_metric(path: &Path) -> Result<ConformalMetric, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let snap: MetricSnapshot = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    ConformalMetric::from_snapshot(snap).map_err(|e| format!("{}: {e}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into())
}

fn write_or_report(path: &Path, contents: &str) -> bool {
    match fs::create_dir_all(path.parent().unwrap_or(Path::new("."))).and_then(|_| fs::write(path, contents)) {
        Ok(()) => true,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            false
        }
    }
}

/// Files written by [`cmd_normalize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizeReport {
    pub params: Sl2Params,
    pub perimeter: f64,
    pub critical: [f64; 2],
    pub perimeter_bound: InequalityReport,
}

/// `normalize <metric.json>`: writes `<stem>.normalized.json` (metric),
/// `<stem>.sl2.json` (parameters and checks) into `out_dir`.
pub fn cmd_normalize(metric_path: &Path, out_dir: &Path) -> i32 {
    let m = match read_metric(metric_path) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_INPUT;
        }
    };
    if m.alpha() != 1.0 {
        eprintln!("alpha: normalize needs an alpha = 1 metric, got {}", m.alpha());
        return EXIT_INPUT;
    }
    let (a1, b1, mean) = diagnostics::orthogonality_coefficients(m.u());
    if a1.abs().max(b1.abs()) > diagnostics::ORTHOGONALITY_TOL * mean {
        eprintln!("u: orthogonality violated, mode-1 amplitudes of u^-3 are a1 = {a1:e}, b1 = {b1:e}");
        return EXIT_INPUT;
    }
    let (v, params) = match affine_bridge::sl2_normalize(&m) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_NUMERICS;
        }
    };
    let bound = match affine_bridge::perimeter_bound_report(&v) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_NUMERICS;
        }
    };
    let (c, s) = affine_bridge::critical_integrals(&v);
    let report = NormalizeReport {
        params,
        perimeter: affine_bridge::perimeter(&v),
        critical: [c, s],
        perimeter_bound: bound,
    };
    let name = stem(metric_path);
    let ok = write_or_report(&out_dir.join(format!("{name}.normalized.json")), &to_json(&v.to_snapshot()))
        && write_or_report(&out_dir.join(format!("{name}.sl2.json")), &to_json(&report));
    if !ok {
        return EXIT_INPUT;
    }
    println!("{}", to_json(&report).trim_end());
    EXIT_OK
}

/// `reconstruct <metric.json>`: writes `<stem>.curve.csv`.
pub fn cmd_reconstruct(metric_path: &Path, out_dir: &Path) -> i32 {
    let m = match read_metric(metric_path) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_INPUT;
        }
    };
    match affine_bridge::reconstruct_curve(&m) {
        Ok(curve) => {
            let path = out_dir.join(format!("{}.curve.csv", stem(metric_path)));
            if !write_or_report(&path, &curve.to_csv()) {
                return EXIT_INPUT;
            }
            println!(
                "area {} perimeter {} closure_defect {:e}",
                curve.area, curve.perimeter, curve.closure_defect
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_INPUT
        }
    }
}

/// `ingest <polygon.csv> [--resample N]`: writes `<stem>.metric.json`.
///
/// Accepts either plain `x,y` rows or a curve export with header
/// `theta,x,y,h,k`, from which the `x,y` columns are taken.
pub fn cmd_ingest(polygon_path: &Path, n: usize, out_dir: &Path) -> i32 {
    let text = match fs::read_to_string(polygon_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", polygon_path.display());
            return EXIT_INPUT;
        }
    };
    let points = if text.starts_with("theta,x,y") {
        curve_points(&text)
    } else {
        affine_bridge::polygon_from_csv(&text)
    };
    let points = match points {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_INPUT;
        }
    };
    if n < 8 || !n.is_multiple_of(2) {
        eprintln!("resample: need an even sample count of at least 8, got {n}");
        return EXIT_INPUT;
    }
    match affine_bridge::ingest_polygon(&points, n) {
        Ok(c) => {
            let path = out_dir.join(format!("{}.metric.json", stem(polygon_path)));
            if !write_or_report(&path, &to_json(&c.metric.to_snapshot())) {
                return EXIT_INPUT;
            }
            println!("scale {}", c.scale);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_INPUT
        }
    }
}

fn curve_points(text: &str) -> Result<Vec<[f64; 2]>, BridgeError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| BridgeError::Input(e.to_string()))?;
        let get = |i: usize| -> Result<f64, BridgeError> {
            record
                .get(i)
                .ok_or_else(|| BridgeError::Input("short row".into()))?
                .trim()
                .parse()
                .map_err(|e| BridgeError::Input(format!("{e}")))
        };
        points.push([get(1)?, get(2)?]);
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    A,
    B,
}

/// `inequality <A|B> <field.json>`: prints the report as JSON. Exit 1 when
/// the field is inadmissible (non-positive, or not orthogonal for A).
pub fn cmd_inequality(which: Theorem, field_path: &Path) -> i32 {
    let field = fs::read_to_string(field_path)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str::<FieldSnapshot>(&t).map_err(|e| e.to_string()))
        .and_then(|s| CircleField::from_snapshot(s).map_err(|e| e.to_string()));
    let field = match field {
        Ok(f) => f,
        Err(e) => {
            eprintln!("{}: {e}", field_path.display());
            return EXIT_INPUT;
        }
    };
    let report = match which {
        Theorem::A => diagnostics::theorem_a_report(&field),
        Theorem::B => diagnostics::theorem_b_report(&field),
    };
    match report {
        Ok(r) => {
            println!("{}", to_json(&r).trim_end());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_INPUT
        }
    }
}
