//! Second variation on caps: lowest Galerkin eigenvalue, the vanishing test
//! functions, the reduction of Q_r to Q_0 and the rigidity gaps.

use std::f64::consts::PI;

use capillary::ambient::SpaceForm;
use capillary::immersion::{cap_family, discretize, perturbed_cap};
use capillary::stability::{
    cap_reduction_defect, random_admissible_fields, rigidity_gap_report, stability_report, test_function_euclidean,
    test_function_horoball, u_integral,
};

fn main() -> capillary::Result<()> {
    for sp in [SpaceForm::euclidean(2), SpaceForm::hyperbolic(2)] {
        let cap = cap_family(&sp, 2, 1.5, PI / 3.0)?;
        let m = discretize(&cap, &sp, 32)?;
        println!("{} cap, area {:.6}", sp.model.tag(), m.area());
        for r in 0..2 {
            let st = stability_report(&m, r, 4)?;
            println!("  r={r}: lambda_min {:?}", st.values.get("lambda_min"));
            let phi = match sp.n {
                _ if sp.model == capillary::Model::Euclidean => test_function_euclidean(&m, r)?,
                _ => test_function_horoball(&m, r)?,
            };
            println!("    sup|test function| / scale = {:.1e}", phi.phi.sup() / phi.scale);
            let fields = random_admissible_fields(&m, 4, 20, 11)?;
            println!("    max |Q_r - c Q_0| / |Q_0| = {:.1e}", cap_reduction_defect(&m, r, &fields)?);
        }
        if sp.model == capillary::Model::Hyperbolic {
            println!("  int u dA = {:.6}", u_integral(&m)?);
        }
        let bumped = discretize(&perturbed_cap(&cap, 0.05, 2)?, &sp, 32)?;
        for (label, surf) in [("cap", &m), ("perturbed", &bumped)] {
            let gaps = rigidity_gap_report(surf, 0)?;
            println!("  gaps on {label}: {:?}", gaps.values);
        }
    }
    Ok(())
}
