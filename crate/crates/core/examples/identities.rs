//! Pointwise identities: conformal covariance of the curvature operator and
//! the Kazdan–Warner obstruction, with their spectral convergence.

use conformal_flow::circle_field::CircleField;
use conformal_flow::cli::presets;
use conformal_flow::conformal_metric::{covariance_residual, ConformalMetric};
use conformal_flow::diagnostics;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for alpha in [1.0, 4.0] {
        let m = ConformalMetric::new(alpha, presets::random_bandlimited(128, 4, 0.3, &mut rng)?)?;
        let phi = presets::random_bandlimited(128, 4, 0.3, &mut rng)?;
        let psi = presets::random_signed(128, 4, &mut rng)?;
        println!("alpha = {alpha}: covariance residual {:.2e}", covariance_residual(&m, &phi, &psi)?);
    }

    println!("Kazdan-Warner residual for u = exp(0.3 cos t + 0.1 sin 2t):");
    for n in [8, 16, 32, 64, 128] {
        let u = CircleField::from_fn(n, |t| (0.3 * t.cos() + 0.1 * (2.0 * t).sin()).exp())?;
        println!("  n = {n:>3}: {:.2e}", diagnostics::kazdan_warner_residual(&ConformalMetric::new(4.0, u)?)?);
    }
    Ok(())
}
