//! Fits an α = 1 metric to a sampled convex curve, reconstructs the curve
//! back from the metric, and reports how close the two are.

use std::f64::consts::TAU;

use conformal_flow::affine_bridge;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (a, b) = (1.6, 0.9);
    let points: Vec<[f64; 2]> = (0..1024)
        .map(|j| {
            let t = TAU * j as f64 / 1024.0;
            [a * t.cos(), b * t.sin()]
        })
        .collect();
    let ingested = affine_bridge::ingest_polygon(&points, 128)?;
    let m = &ingested.metric;
    println!("length {:.12}, scale {:.8}", m.arc_length(), ingested.scale);

    // ingestion scales the curve by `scale`; the ellipse curvature at normal
    // (sin θ, −cos θ) is h³/(ab)² with h² = a²sin²θ + b²cos²θ
    let s = ingested.scale;
    let kappa = affine_bridge::reconstruct_curve(m)?.curvature().clone();
    let worst = (0..m.n())
        .map(|j| {
            let th = kappa.theta(j);
            let q = (a * th.sin()).powi(2) + (b * th.cos()).powi(2);
            let exact = q.powf(1.5) / (a * b).powi(2) / s;
            (kappa.samples()[j] - exact).abs() / exact
        })
        .fold(0.0f64, f64::max);
    println!("max relative curvature error {worst:.2e}");

    let curve = affine_bridge::reconstruct_curve(m)?;
    println!("area {:.10} (ellipse, rescaled: {:.10})", curve.area, std::f64::consts::PI * a * b * s * s);
    Ok(())
}
