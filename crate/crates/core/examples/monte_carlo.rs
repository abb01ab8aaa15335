// A small Monte Carlo study comparing the cross-fitted estimator with the
// marginalized Cox model. `cargo run --release --example monte_carlo -- [reps]`

use cfsurv::simulation::{run_study, write_summary_csv, McSummary, StudyConfig, StudyEstimator, PARAMETERS};

fn run(reps: usize, ns: Vec<usize>, out: Option<&std::path::Path>) -> cfsurv::Result<McSummary> {
    let cfg = StudyConfig { ns: ns.clone(), reps, num_boot: 50, num_paths: 1000, truth_mc: 200_000, ..StudyConfig::default() };
    let summary = run_study(&cfg)?;
    println!("{:<13} {:<11} {:>5} {:>9} {:>9} {:>9}", "estimator", "parameter", "n", "bias", "mc se", "coverage");
    for est in [StudyEstimator::Cfsurv, StudyEstimator::MarginalCox] {
        for p in PARAMETERS {
            for &n in &ns {
                let bias = summary.get(est, p, n, "bias").expect("bias row");
                let cov = summary.get(est, p, n, "coverage").map_or(f64::NAN, |r| r.value);
                println!("{:<13} {p:<11} {n:>5} {:>9.4} {:>9.4} {cov:>9.3}", est.as_str(), bias.value, bias.mc_se);
            }
        }
    }
    if let Some(path) = out {
        write_summary_csv(path, &summary.rows)?;
    }
    Ok(summary)
}

#[allow(dead_code)]
fn main() -> cfsurv::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    run(reps, vec![500], None).map(|_| ())
}
