//! Flows of capillary caps: the first variation of E_{r+1}, the wetting
//! rates, and closure of the evolved and recomputed geometry.

use std::f64::consts::PI;

use capillary::ambient::SpaceForm;
use capillary::immersion::{cap_family, discretize};
use capillary::variation::{evolve, functional_ledger, ledger_closure, scenario_field, FlowScenario, VariationSweep};

fn main() -> capillary::Result<()> {
    // Scaling the unit hemisphere: dE_2/dt = 2 pi.
    let sp = SpaceForm::euclidean(2);
    let hemi = discretize(&cap_family(&sp, 2, 1.0, PI / 2.0)?, &sp, 24)?;
    let sweep = VariationSweep::new(&hemi, &scenario_field(&hemi, FlowScenario::Scale)?)?;
    let fv = sweep.first_variation(1)?;
    println!("hemisphere dE_2/dt: richardson {:?} rhs {:?} residual {:.1e}", fv.values["richardson"], fv.values["rhs"], fv.finest());

    let unit = scenario_field(&hemi, FlowScenario::NormalUnit)?;
    let flow = evolve(&hemi, &unit, 0.01, 3)?;
    for s in functional_ledger(&flow, PI / 2.0)?.samples {
        println!("  t={:.2} A_0={:.8} W_1={:.8} V={:.8}", s.t, s.area[0], s.wetting[1], s.volume);
    }

    for sp in [SpaceForm::euclidean(2), SpaceForm::hyperbolic(2)] {
        let m = discretize(&cap_family(&sp, 2, 1.5, PI / 3.0)?, &sp, 32)?;
        for scenario in FlowScenario::ALL {
            let field = scenario_field(&m, scenario)?;
            match VariationSweep::new(&m, &field) {
                Ok(sw) => {
                    for r in 0..2 {
                        let a = sw.first_variation(r)?;
                        let b = sw.wetting_rate(r)?;
                        println!(
                            "{} {} r={r}: first variation {:.1e} (order {:.2?}), wetting {:.1e}",
                            sp.model.tag(),
                            scenario.tag(),
                            a.finest(),
                            a.order,
                            b.finest()
                        );
                    }
                }
                Err(e) => println!("{} {}: {e}", sp.model.tag(), scenario.tag()),
            }
        }
        let field = scenario_field(&m, FlowScenario::FromPhi)?;
        let closure = ledger_closure(&m, &field, 0.01, 10)?;
        println!("  ledger closure {}, C = {}", sci(&closure.residuals), sci(&closure.values["C"]));
    }
    Ok(())
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>().join(" ")
}
