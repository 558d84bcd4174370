//! Killing and conformal defects of the canonical ambient fields, and the
//! Hessian identity of the hyperbolic potential, at seeded random points.

use capillary::ambient::{FieldTag, SpaceForm};
use capillary::driver::ambient_report;

fn main() -> capillary::Result<()> {
    for sp in [SpaceForm::euclidean(2), SpaceForm::hyperbolic(2), SpaceForm::hyperbolic(3)] {
        let rep = ambient_report(&sp, 100, 7)?;
        println!("{} n={}: worst defect {:.2e} ({:?})", sp.model.tag(), sp.n, rep.finest(), rep.verdict);
        for (k, v) in &rep.components {
            println!("  {k:<20} {:.2e}", v[0]);
        }
    }

    // The factors themselves at one point of the upper half-space.
    let sp = SpaceForm::hyperbolic(2);
    let p = [0.3, -0.4, 0.8];
    for tag in [FieldTag::Position, FieldTag::Top, FieldTag::Shifted] {
        println!("rho({tag:?}) at {p:?} = {:.4}", sp.conformal_rate(tag, &p));
    }
    Ok(())
}
