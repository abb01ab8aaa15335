// Fixed-width and variable-width simultaneous bands for one arm, with the
// simulated critical values.

use cfsurv::estimator::{estimate_curve, CurveEstimate, NuisanceBundle};
use cfsurv::inference::{default_band_interval, uniform_band, BandOptions, BandStyle, UniformBand};
use cfsurv::simulation::{simulate_dataset, DgpConfig};
use cfsurv::survdata::{event_grid, make_folds, Dataset};
use cfsurv::{estimator, simulation};

fn fit(data: &Dataset) -> cfsurv::Result<(NuisanceBundle, [CurveEstimate; 2])> {
    let augmented = simulation::augment_features(data)?;
    let folds = make_folds(augmented.len(), 5, 3)?;
    let bundle = estimator::fit_nuisances(&augmented, &folds, &simulation::cf_library())?;
    let grid = event_grid(&augmented);
    let est = [estimate_curve(&augmented, &bundle, &grid, 0)?, estimate_curve(&augmented, &bundle, &grid, 1)?];
    Ok((bundle, est))
}

fn run(n: usize, paths: usize) -> cfsurv::Result<(UniformBand, UniformBand)> {
    let data = simulate_dataset(&DgpConfig { n, seed: 11, ..DgpConfig::default() })?;
    let (_, est) = fit(&data)?;
    let fixed = uniform_band(
        &est[0],
        &BandOptions { num_paths: paths, ..BandOptions::default() },
    )?;
    let variable = uniform_band(
        &est[0],
        &BandOptions {
            style: BandStyle::VariableWidth,
            interval: Some(default_band_interval(&data)?),
            num_paths: paths,
            ..BandOptions::default()
        },
    )?;
    for b in [&fixed, &variable] {
        let widest = b.lower.iter().zip(&b.upper).map(|(l, u)| u - l).fold(0.0, f64::max);
        println!(
            "{:>8} band on [{:.2}, {:.2}]: c = {:.3}, {} points, widest {:.3}",
            b.style.to_string(),
            b.t0,
            b.t1,
            b.critical_value,
            b.times.len(),
            widest
        );
    }
    Ok((fixed, variable))
}

#[allow(dead_code)]
fn main() -> cfsurv::Result<()> {
    run(600, 10_000).map(|_| ())
}
