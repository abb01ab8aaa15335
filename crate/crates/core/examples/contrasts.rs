// Treatment contrasts: survival difference, survival and risk ratios,
// restricted mean survival time and its difference.

use cfsurv::estimator::{estimate_curve, fit_nuisances};
use cfsurv::inference::{contrast, contrast_band, rmst, BandStyle, ContrastEstimate, ContrastKind};
use cfsurv::simulation::{augment_features, cf_library, simulate_dataset, DgpConfig};
use cfsurv::survdata::{event_grid, make_folds};

fn run(n: usize) -> cfsurv::Result<Vec<ContrastEstimate>> {
    let data = augment_features(&simulate_dataset(&DgpConfig { n, seed: 5, ..DgpConfig::default() })?)?;
    let bundle = fit_nuisances(&data, &make_folds(n, 5, 5)?, &cf_library())?;
    let grid = event_grid(&data);
    let est0 = estimate_curve(&data, &bundle, &grid, 0)?;
    let est1 = estimate_curve(&data, &bundle, &grid, 1)?;
    let j = grid.len() - 1;

    let mut out = Vec::new();
    for kind in [ContrastKind::Difference, ContrastKind::SurvivalRatio, ContrastKind::RiskRatio] {
        let mut c = contrast(&est0, &est1, kind, 0.05)?;
        contrast_band(&mut c, BandStyle::FixedWidth, 5000, 9)?;
        let band = c.band.as_ref().expect("band was just attached");
        println!(
            "{:>16} at t = {:.2}: {:.3} (CI {:.3} to {:.3}, band {:.3} to {:.3})",
            kind.as_str(),
            grid.last(),
            c.estimate[j],
            c.lower[j],
            c.upper[j],
            band.lower[j],
            band.upper[j]
        );
        out.push(c);
    }
    for c in [rmst(&est0, 0.05)?, rmst(&est1, 0.05)?, contrast(&est0, &est1, ContrastKind::RmstDifference, 0.05)?] {
        let label = match c.arm {
            Some(a) => format!("rmst (a = {a})"),
            None => c.kind.as_str().to_string(),
        };
        println!("{label:>16}: {:.3} (CI {:.3} to {:.3})", c.estimate[0], c.lower[0], c.upper[0]);
        out.push(c);
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> cfsurv::Result<()> {
    run(800).map(|_| ())
}
