//! Normalized α = 4 flow from a mode-2 perturbation of the round circle,
//! with the exponential decay rate of F₂ fitted on the tail.

use conformal_flow::cli::{fit_f2_decay, presets};
use conformal_flow::conformal_metric::ConformalMetric;
use conformal_flow::flow_engine::{self, StepperConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let u = presets::perturbed_round(64, 0.2, 2)?;
    let m = flow_engine::project_length(&ConformalMetric::new(4.0, u)?);
    let traj = flow_engine::run(&m, &StepperConfig::default(), 8.0, 0.05)?;

    println!("{:>6} {:>14} {:>12}", "t", "Rbar", "F2");
    for row in traj.record.rows.iter().step_by(20) {
        println!("{:>6.2} {:>14.10} {:>12.4e}", row.t, row.rbar, row.f2);
    }
    if let Some(fit) = fit_f2_decay(&traj) {
        println!("F2 decay rate {:.4} on [{:.2}, {:.2}], r^2 = {:.6}", fit.rate, fit.window.0, fit.window.1, fit.r_squared);
    }
    let u = traj.final_metric().u();
    println!("outcome {:?}, final spread of u {:.2e}", traj.outcome, u.max() - u.min());
    Ok(())
}
