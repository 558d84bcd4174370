//! Elementary symmetric functions of a principal-curvature spectrum, the
//! Newton tensors of a shape operator and the Newton–MacLaurin gaps.

use capillary::symfun::{
    garding_cone_contains, mean_curvature, newton_maclaurin_gap, newton_traces, sigma_all, CurvatureSpectrum, ShapeOperator,
};
use nalgebra::DMatrix;

fn main() -> capillary::Result<()> {
    let kappa = vec![1.5, 0.7, 0.2];
    let sig = sigma_all(&kappa);
    println!("kappa = {kappa:?}");
    for (r, s) in sig.iter().enumerate() {
        println!("  sigma_{r} = {s:.6}   H_{r} = {:.6}", mean_curvature(&kappa, r));
    }

    // A shape operator in a non-orthonormal frame: S = g^{-1} h.
    let g = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5]);
    let h = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 0.8, -0.1, 0.0, -0.1, 0.4]);
    let shape = ShapeOperator::from_forms(&h, &g)?;
    let spec = shape.spectrum();
    println!("principal curvatures of (h, g): {:?}", spec.values());
    for r in 0..3 {
        let (t0, t1, t2) = newton_traces(&shape, r)?;
        println!("  P_{r}: tr = {t0:.6}, tr(P h) = {t1:.6}, tr(P h^2) = {t2:.6}");
    }

    let spec = CurvatureSpectrum::new(kappa)?;
    if garding_cone_contains(&spec, 3)? {
        for (k, l) in [(1, 2), (1, 3), (2, 3)] {
            println!("  H_{k} H_{} - H_{} H_{l} = {:.3e}", l - 1, k - 1, newton_maclaurin_gap(&spec, k, l)?);
        }
    }
    Ok(())
}
