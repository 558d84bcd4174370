//! Minkowski formulas on caps and perturbed caps, swept over resolutions.

use std::f64::consts::PI;

use capillary::ambient::{Model, SpaceForm};
use capillary::identities::{run, sweep};
use capillary::immersion::{cap_family, discretize, perturbed_cap};

fn main() -> capillary::Result<()> {
    let res = [16, 32, 64];
    for model in [Model::Euclidean, Model::Hyperbolic] {
        let sp = SpaceForm::new(model, 2)?;
        let name = if model == Model::Euclidean { "minkowski_euclidean" } else { "minkowski_horoball" };
        let cap = cap_family(&sp, 2, 1.5, PI / 3.0)?;
        for (label, patch) in [("cap", cap.clone()), ("perturbed", perturbed_cap(&cap, 0.05, 2)?)] {
            let levels: Vec<_> = res.iter().map(|&k| discretize(&patch, &sp, k)).collect::<Result<_, _>>()?;
            for r in 0..2 {
                let rep = sweep(levels.iter(), |m| run(name, m, r))?;
                println!(
                    "{name} {label} r={r}: residuals {:?} order {:?} saturated {} -> {:?}",
                    rep.residuals.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>(),
                    rep.order,
                    rep.saturated,
                    rep.verdict
                );
            }
        }
    }
    Ok(())
}
