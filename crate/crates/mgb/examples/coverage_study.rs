//! Prints a leave-one-out vs pixel-wise coverage table over a few seeds.
//!
//! Usage: `cargo run --release -p mgb --example coverage_study -- [seeds] [dim]`

use mgb::cohort::{generate_cohort, CohortConfig};
use mgb::evaluation::{loo_coverage, pixelwise_coverage};
use mgb::rng::derive_stream;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).map_or(10, |s| s.parse().expect("seed count"));
    let dim: usize = args.get(2).map_or(32, |s| s.parse().expect("dim"));

    let base = CohortConfig { dims: [dim, dim, dim], ..CohortConfig::default() };
    let alpha = 0.1;
    let metrics = mgb::cohort::default_metric_specs();

    let mut loo_totals = vec![0.0; metrics.len()];
    let mut pw_totals = vec![0.0; metrics.len()];
    for s in 0..seeds {
        let cfg = CohortConfig { seed: derive_stream(0xC0FFEE, s), ..base.clone() };
        let cohort = generate_cohort(&cfg).expect("generate");
        for (k, metric) in metrics.iter().enumerate() {
            let loo = loo_coverage(&cohort, metric, alpha).expect("loo");
            let pw = pixelwise_coverage(&cohort, metric, alpha).expect("pixelwise");
            loo_totals[k] += loo.report.coverage_pct;
            pw_totals[k] += pw.coverage_pct;
        }
        eprint!(".");
    }
    eprintln!();

    println!("{:<24} {:>12} {:>12}", "metric", "loo_avg_pct", "pixel_avg_pct");
    for (k, metric) in metrics.iter().enumerate() {
        println!(
            "{:<24} {:>12.2} {:>12.2}",
            metric.to_string(),
            loo_totals[k] / seeds as f64,
            pw_totals[k] / seeds as f64
        );
    }
}
