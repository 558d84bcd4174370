//! Pointwise Jacobi identities for the support functions and the Robin
//! boundary relations, with the measured roundoff floor.

use std::f64::consts::PI;

use capillary::ambient::SpaceForm;
use capillary::identities::sweep;
use capillary::immersion::{cap_family, discretize, perturbed_cap};
use capillary::operators::{jacobi_identity_residuals, robin_residuals};

fn main() -> capillary::Result<()> {
    for sp in [SpaceForm::euclidean(2), SpaceForm::hyperbolic(2)] {
        let cap = perturbed_cap(&cap_family(&sp, 2, 1.5, 2.0 * PI / 3.0)?, 0.05, 2)?;
        let levels: Vec<_> = [16, 32, 64].iter().map(|&k| discretize(&cap, &sp, k)).collect::<Result<_, _>>()?;
        for r in 0..2 {
            let j = sweep(levels.iter(), |m| jacobi_identity_residuals(m, r))?;
            let b = sweep(levels.iter(), |m| robin_residuals(m, r))?;
            println!("{} r={r}", sp.model.tag());
            println!("  jacobi residuals {} roundoff {} order {:?}", sci(&j.residuals), sci(&j.roundoff), j.order);
            for (k, v) in &j.components {
                println!("    {k:<14} {:.1e}", v.last().unwrap());
            }
            println!("  robin  residuals {} -> {:?}", sci(&b.residuals), b.verdict);
        }
    }
    Ok(())
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>().join(" ")
}
