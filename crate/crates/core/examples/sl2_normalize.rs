//! Stretching a circle by an area-preserving linear map changes u by a
//! multiplier ψ. Normalization finds the stretch that minimizes perimeter
//! and undoes it.

use std::f64::consts::TAU;

use conformal_flow::affine_bridge::{self, Sl2Params};
use conformal_flow::circle_field::CircleField;
use conformal_flow::conformal_metric::ConformalMetric;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stretch = Sl2Params::new(2.0, 0.3)?;
    let m = ConformalMetric::new(1.0, CircleField::from_fn(128, |t| stretch.multiplier(t))?)?;
    println!("stretched perimeter {:.10} (round: {:.10})", affine_bridge::perimeter(&m), TAU);

    let (v, found) = affine_bridge::sl2_normalize(&m)?;
    let (c, s) = affine_bridge::critical_integrals(&v);
    println!("recovered lambda {:.10}, angle {:.10}", found.lambda, found.alpha_angle);
    println!("normalized perimeter {:.12}, max|v - 1| {:.2e}", affine_bridge::perimeter(&v), v.u().map(|x| (x - 1.0).abs()).max());
    println!("critical integrals ({c:.2e}, {s:.2e})");
    let bound = affine_bridge::perimeter_bound_report(&v)?;
    println!("perimeter {:.10} <= {:.10}", bound.functional_value, bound.sharp_bound);
    Ok(())
}
