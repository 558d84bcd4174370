//! Boundary flux identities and the constant-curvature boundary identity on
//! horoball caps.

use std::f64::consts::PI;

use capillary::ambient::SpaceForm;
use capillary::identities::{run, sweep, verifiers_for};
use capillary::immersion::{cap_family, discretize};

fn main() -> capillary::Result<()> {
    let sp = SpaceForm::hyperbolic(3);
    for theta in [PI / 3.0, 2.0 * PI / 3.0] {
        let cap = cap_family(&sp, 3, 1.5, theta)?;
        let levels: Vec<_> = [16, 32].iter().map(|&k| discretize(&cap, &sp, k)).collect::<Result<_, _>>()?;
        println!("theta = {theta:.4}");
        for name in verifiers_for(&sp).iter().filter(|n| !n.starts_with("minkowski")) {
            for r in 0..3 {
                let rep = sweep(levels.iter(), |m| run(name, m, r))?;
                println!("  {name:<22} r={r}  finest {:.2e}  {:?}", rep.finest(), rep.verdict);
            }
        }
    }
    Ok(())
}
