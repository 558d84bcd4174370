//! Spherical caps meeting the support at a prescribed angle, their
//! perturbations, and the discrete geometry on the spectral grid.

use std::f64::consts::PI;

use capillary::ambient::SpaceForm;
use capillary::immersion::{cap_family, discretize, parse_scenario, perturbed_cap};

fn main() -> capillary::Result<()> {
    let sp = SpaceForm::euclidean(2);
    let hemi = discretize(&cap_family(&sp, 2, 1.0, PI / 2.0)?, &sp, 24)?;
    println!("unit hemisphere: {} nodes, area {:.12} (2 pi = {:.12})", hemi.len(), hemi.area(), 2.0 * PI);
    println!("  boundary length {:.12}, contact angle {:?}", hemi.boundary_length(), hemi.contact_angle());

    for sp in [SpaceForm::euclidean(3), SpaceForm::hyperbolic(3)] {
        let cap = cap_family(&sp, 3, 1.5, PI / 3.0)?;
        for res in [16, 32] {
            let m = discretize(&cap, &sp, res)?;
            let h: Vec<f64> = m.nodes.iter().map(|nd| nd.mean_curvature(1)).collect();
            let (lo, hi) = h.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
            println!("{} cap res {res}: area {:.10}, H_1 in [{lo:.12}, {hi:.12}]", sp.model.tag(), m.area());
        }
        let bumped = discretize(&perturbed_cap(&cap, 0.05, 2)?, &sp, 32)?;
        println!("  perturbed: area {:.10}, contact angle spread {:.2e}", bumped.area(), bumped.contact_angle_spread());
    }

    let (sp, patch) = parse_scenario("horoball-cap:n=2,lambda=0.8,theta=2.0")?;
    let m = discretize(&patch, &sp, 32)?;
    println!("scenario string -> {} nodes, theta {:?}", m.len(), m.contact_angle());
    Ok(())
}
