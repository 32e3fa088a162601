//! The un-normalized flow blows up in finite time; rescaling space and time
//! maps it onto the normalized flow. Compares the two directly.

use conformal_flow::cli::presets;
use conformal_flow::conformal_metric::ConformalMetric;
use conformal_flow::flow_engine::{self, FlowKind, FlowState, StepperConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m0 = ConformalMetric::new(4.0, presets::random_bandlimited(64, 4, 0.1, &mut rng)?)?;
    let cfg = StepperConfig::default();

    let raw = flow_engine::run_unnormalized(&m0, &cfg, 0.6, 0.05)?;
    let image = flow_engine::normalize_trajectory(&raw)?;
    let mut direct = FlowState::new(flow_engine::project_length(&m0));

    println!("{:>5} {:>8} {:>10} {:>12}", "t", "t_hat", "max u", "sup diff");
    for ((raw_row, row), u_hat) in raw.record.rows.iter().zip(&image.record.rows).zip(&image.snapshots) {
        direct = flow_engine::advance_to(&direct, &cfg, row.t, FlowKind::Normalized)?;
        println!(
            "{:>5.2} {:>8.4} {:>10.4} {:>12.3e}",
            raw_row.t,
            row.t,
            raw_row.umax,
            u_hat.u().sup_distance(direct.metric().u())
        );
    }
    println!("raw run stopped at t = {:.3}, short of blow-up", raw.record.rows.last().map_or(0.0, |r| r.t));
    Ok(())
}
