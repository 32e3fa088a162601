//! Evaluates the two sharp Sobolev-type inequalities on their equality
//! families and on random fields.

use conformal_flow::cli::presets;
use conformal_flow::diagnostics;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>6} {:>6} {:>18} {:>18}", "lambda", "angle", "A value", "B value");
    for lambda in [1.0, 1.5, 2.0] {
        for angle in [0.0, 0.4] {
            let a = diagnostics::theorem_a_report(&presets::theorem_a_extremal(256, lambda, angle, 1.0)?)?;
            let b = diagnostics::theorem_b_report(&presets::theorem_b_extremal(256, lambda, angle, 1.0)?)?;
            println!("{lambda:>6} {angle:>6} {:>18.12} {:>18.12}", a.functional_value, b.functional_value);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut min_a, mut min_b) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..200 {
        min_a = min_a.min(diagnostics::theorem_a_report(&presets::random_orthogonal(128, 6, 0.5, &mut rng)?)?.deficit);
        min_b = min_b.min(diagnostics::theorem_b_report(&presets::random_bandlimited(128, 6, 0.4, &mut rng)?)?.deficit);
    }
    println!("smallest deficits over 200 random fields: A {min_a:.4}, B {min_b:.4}");
    Ok(())
}
