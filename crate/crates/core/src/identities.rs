//! Integral identities: the Minkowski formulas in both models and the
//! boundary flux identities of horosphere-supported caps.

use crate::ambient::{Model, SpaceForm};
use crate::immersion::{DiscreteImmersion, Family};
use crate::operators::{nominal_theta, support_functions};
use crate::report::{Criterion, VerificationReport};
use crate::{Error, Result};

pub const INTEGRAL_TOLERANCE: f64 = 1e-6;

/// Constant-`σ` gate: relative spread, with an absolute roundoff guard so
/// identically vanishing `σ` counts as constant.
pub const CMC_SPREAD: f64 = 1e-8;

fn criterion() -> Criterion {
    Criterion::new(INTEGRAL_TOLERANCE, Some(2.0))
}

fn require_model(m: &DiscreteImmersion, model: Model, what: &str) -> Result<()> {
    if m.space.model != model {
        return Err(Error::Argument(format!("{what} requires the {} model", model.tag())));
    }
    if !m.has_boundary() {
        return Err(Error::Argument(format!("{what} needs a surface with boundary")));
    }
    Ok(())
}

fn check_r(m: &DiscreteImmersion, r: usize) -> Result<()> {
    if r >= m.n() {
        return Err(Error::Argument(format!("r = {r} must satisfy 0 <= r <= n-1 = {}", m.n() - 1)));
    }
    Ok(())
}

fn theta_of(m: &DiscreteImmersion) -> Result<f64> {
    nominal_theta(m).ok_or_else(|| Error::Precondition("no contact angle".into()))
}

fn report(identity: &str, m: &DiscreteImmersion, r: usize, theta: f64, residual: f64) -> VerificationReport {
    VerificationReport::single(identity, &m.space, Some(r), Some(theta), m.resolution, residual, criterion())
}

fn is_totally_geodesic(m: &DiscreteImmersion) -> bool {
    matches!(m.family, Family::Cap { lambda, .. } if lambda == 0.0)
}

/// `∫[(1 − cosθ⟨E,ν⟩)H_r − ⟨x,ν⟩H_{r+1}] dA`, relative to `∫(1 − cosθ⟨E,ν⟩)H_r`.
pub fn minkowski_euclidean(m: &DiscreteImmersion, r: usize) -> Result<VerificationReport> {
    require_model(m, Model::Euclidean, "minkowski_euclidean")?;
    check_r(m, r)?;
    let theta = theta_of(m)?;
    let c = theta.cos();
    let s = support_functions(m);
    let weighted: Vec<f64> = m.nodes.iter().zip(&s.top.interior).map(|(nd, e)| (1.0 - c * e) * nd.mean_curvature(r)).collect();
    let support: Vec<f64> = m.nodes.iter().zip(&s.position.interior).map(|(nd, x)| x * nd.mean_curvature(r + 1)).collect();
    let (a, b) = (m.integrate(&weighted), m.integrate(&support));
    let (residual, normalizer) = if a.abs() > 1e-14 * m.area() {
        ((a - b).abs() / a.abs(), "|int (1-cos(theta)<E,nu>)H_r|")
    } else {
        ((a - b).abs() / a.abs().max(b.abs()).max(1.0), "max(|lhs|,|rhs|,1)")
    };
    Ok(report("minkowski_euclidean", m, r, theta, residual)
        .value("int_omega_H_r", a)
        .value("int_support_H_r+1", b)
        .normalized_by(normalizer))
}

/// `∫[(V − cosθ ḡ(x,ν))H_r − ḡ(X,ν)H_{r+1}] dA`, relative to `∫u H_r`.
pub fn minkowski_horoball(m: &DiscreteImmersion, r: usize) -> Result<VerificationReport> {
    require_model(m, Model::Hyperbolic, "minkowski_horoball")?;
    check_r(m, r)?;
    let theta = theta_of(m)?;
    let c = theta.cos();
    let s = support_functions(m);
    let weighted: Vec<f64> = (0..m.len())
        .map(|k| (s.potential.interior[k] - c * s.position.interior[k]) * m.nodes[k].mean_curvature(r))
        .collect();
    let shifted: Vec<f64> = (0..m.len()).map(|k| s.shifted.interior[k] * m.nodes[k].mean_curvature(r + 1)).collect();
    let (a, b) = (m.integrate(&weighted), m.integrate(&shifted));
    let degenerate = is_totally_geodesic(m) || a.abs() <= 1e-10 * m.area();
    let (residual, normalizer) = if degenerate {
        ((a - b).abs() / a.abs().max(b.abs()).max(1.0), "max(|lhs|,|rhs|,1)")
    } else {
        ((a - b).abs() / a.abs(), "|int u H_r|")
    };
    let mut rep = report("minkowski_horoball", m, r, theta, residual)
        .value("int_u_H_r", a)
        .value("int_shifted_H_r+1", b)
        .normalized_by(normalizer);
    if degenerate {
        rep = rep.note("degenerate: totally geodesic cap, excluded from the rigidity statements");
    }
    Ok(rep)
}

fn flux_residual(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0)
}

/// `−(r+1)∫ḡ(x,ν)σ_{r+1} dA = ∫_{∂M} P_r^{μμ}(cosθ ḡ(x,ν̄) − sinθ) ds`.
pub fn boundary_flux_1(m: &DiscreteImmersion, r: usize) -> Result<VerificationReport> {
    require_model(m, Model::Hyperbolic, "boundary_flux_1")?;
    check_r(m, r)?;
    let theta = theta_of(m)?;
    let sp = m.space;
    let s = support_functions(m);
    let inner: Vec<f64> = m.nodes.iter().zip(&s.position.interior).map(|(nd, x)| x * nd.sigma(r + 1)).collect();
    let lhs = -((r + 1) as f64) * m.integrate(&inner);
    let edge: Vec<f64> = m
        .boundary
        .iter()
        .map(|b| {
            let p = &b.node.point;
            b.newton_mu[r] * (theta.cos() * sp.inner(p, p, &b.support_tangent_normal) - theta.sin())
        })
        .collect();
    let rhs = m.integrate_boundary(&edge);
    Ok(report("boundary_flux_1", m, r, theta, flux_residual(lhs, rhs))
        .value("lhs", lhs)
        .value("rhs", rhs)
        .normalized_by("max(|lhs|,|rhs|,1)"))
}

/// `(n−r)∫σ_r ḡ(x,ν) dA = ∫_{∂M} P_r^{μμ} ḡ(x,ν̄) ds`; at `r = 0` the
/// `P_0 = I` form `n∫ḡ(x,ν) = ∫ḡ(x,ν̄)` is evaluated separately.
pub fn boundary_flux_2(m: &DiscreteImmersion, r: usize) -> Result<VerificationReport> {
    require_model(m, Model::Hyperbolic, "boundary_flux_2")?;
    if r >= m.n() {
        return Err(Error::Argument(format!(
            "boundary_flux_2 needs P_r with r <= n-1 = {}, got r = {r}",
            m.n() - 1
        )));
    }
    let theta = theta_of(m)?;
    let sp = m.space;
    let n = m.n();
    let s = support_functions(m);
    let inner: Vec<f64> = m.nodes.iter().zip(&s.position.interior).map(|(nd, x)| x * nd.sigma(r)).collect();
    let lhs = (n - r) as f64 * m.integrate(&inner);
    let xnb: Vec<f64> = m
        .boundary
        .iter()
        .map(|b| {
            let p = &b.node.point;
            sp.inner(p, p, &b.support_tangent_normal)
        })
        .collect();
    let edge: Vec<f64> = m.boundary.iter().zip(&xnb).map(|(b, v)| b.newton_mu[r] * v).collect();
    let rhs = m.integrate_boundary(&edge);
    let residual = flux_residual(lhs, rhs);
    let cross = (r == 0).then(|| {
        let plain_lhs = n as f64 * m.integrate(&s.position.interior);
        flux_residual(plain_lhs, m.integrate_boundary(&xnb))
    });
    let worst = cross.map_or(residual, |c| c.max(residual));
    let mut rep = report("boundary_flux_2", m, r, theta, worst).value("lhs", lhs).value("rhs", rhs);
    if let Some(c) = cross {
        rep = rep.component("P_r form", residual).component("n int g(x,nu) = int g(x,nu_bar)", c);
    }
    Ok(rep.normalized_by("max(|lhs|,|rhs|,1)"))
}

/// Largest deviation of `σ_k` from constancy over all nodes, relative to
/// its size (absolute when `σ_k` is at roundoff).
pub fn sigma_constancy(m: &DiscreteImmersion, k: usize) -> f64 {
    let vals: Vec<f64> = m.nodes.iter().chain(m.boundary.iter().map(|b| &b.node)).map(|nd| nd.sigma(k)).collect();
    let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
    let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
    let spread = hi - lo;
    if spread <= 1e-12 {
        return spread;
    }
    spread / hi.abs().max(lo.abs())
}

/// `∫_{∂M} P_r^{μμ}(−sinθ + cosθ ḡ(x,ν̄) + ḡ(x,ν̄)h(μ,μ)) ds = 0` for
/// constant `σ_{r+1}`.
pub fn cmc_boundary_identity(m: &DiscreteImmersion, r: usize) -> Result<VerificationReport> {
    require_model(m, Model::Hyperbolic, "cmc_boundary_identity")?;
    check_r(m, r)?;
    let spread = sigma_constancy(m, r + 1);
    if spread > CMC_SPREAD {
        return Err(Error::Precondition(format!(
            "sigma_{} is not constant: relative spread {spread:e} exceeds {CMC_SPREAD:e}",
            r + 1
        )));
    }
    let theta = theta_of(m)?;
    let sp = m.space;
    let terms: Vec<f64> = m
        .boundary
        .iter()
        .map(|b| {
            let p = &b.node.point;
            let xnb = sp.inner(p, p, &b.support_tangent_normal);
            b.newton_mu[r] * (-theta.sin() + theta.cos() * xnb + xnb * b.h_mu_mu)
        })
        .collect();
    let scale: Vec<f64> = m.boundary.iter().map(|b| b.newton_mu[r].abs() * theta.sin()).collect();
    let total = m.integrate_boundary(&terms);
    let norm = m.integrate_boundary(&scale).max(1.0);
    Ok(report("cmc_boundary_identity", m, r, theta, total.abs() / norm)
        .value("boundary_integral", total)
        .value("sigma_spread", spread)
        .normalized_by("max(int |P_r^{mu mu}| sin(theta) ds, 1)"))
}

/// A verifier applied level by level and merged into one sweep.
pub fn sweep<'a>(
    levels: impl IntoIterator<Item = &'a DiscreteImmersion>,
    verifier: impl Fn(&DiscreteImmersion) -> Result<VerificationReport>,
) -> Result<VerificationReport> {
    let reports: Vec<VerificationReport> = levels.into_iter().map(verifier).collect::<Result<_>>()?;
    VerificationReport::sweep(reports).ok_or_else(|| Error::Argument("empty resolution sweep".into()))
}

/// Names of the integral verifiers applicable to a model.
pub fn verifiers_for(space: &SpaceForm) -> &'static [&'static str] {
    match space.model {
        Model::Euclidean => &["minkowski_euclidean"],
        Model::Hyperbolic => &["minkowski_horoball", "boundary_flux_1", "boundary_flux_2", "cmc_boundary_identity"],
    }
}

/// Runs an integral verifier by name.
pub fn run(name: &str, m: &DiscreteImmersion, r: usize) -> Result<VerificationReport> {
    match name {
        "minkowski_euclidean" => minkowski_euclidean(m, r),
        "minkowski_horoball" => minkowski_horoball(m, r),
        "boundary_flux_1" => boundary_flux_1(m, r),
        "boundary_flux_2" => boundary_flux_2(m, r),
        "cmc_boundary_identity" => cmc_boundary_identity(m, r),
        _ => Err(Error::Argument(format!("unknown identity {name}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::immersion::{cap_family, discretize, perturbed_cap};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    #[test]
    fn hemisphere_closed_form() {
        let sp = SpaceForm::euclidean(2);
        let m = discretize(&cap_family(&sp, 2, 1.0, FRAC_PI_2).unwrap(), &sp, 16).unwrap();
        let rep = minkowski_euclidean(&m, 0).unwrap();
        // ω = 1 and ⟨x,ν⟩ = 1 on the unit hemisphere centred at the origin.
        assert!((rep.values["int_omega_H_r"][0] - 2.0 * PI).abs() < 1e-12);
        assert!((rep.values["int_support_H_r+1"][0] - 2.0 * PI).abs() < 1e-12);
        assert!(rep.passed());
    }

    #[test]
    fn euclidean_caps_and_perturbations() {
        let sp = SpaceForm::euclidean(3);
        let cap = cap_family(&sp, 3, 1.0, FRAC_PI_3).unwrap();
        let levels: Vec<_> = [16, 32].iter().map(|&k| discretize(&cap, &sp, k).unwrap()).collect();
        let rep = sweep(&levels, |m| minkowski_euclidean(m, 1)).unwrap();
        assert!(rep.passed(), "{rep:?}");
        let sp = SpaceForm::euclidean(2);
        let p = perturbed_cap(&cap_family(&sp, 2, 1.0, FRAC_PI_3).unwrap(), 0.05, 2).unwrap();
        let levels: Vec<_> = [16, 32, 64].iter().map(|&k| discretize(&p, &sp, k).unwrap()).collect();
        let rep = sweep(&levels, |m| minkowski_euclidean(m, 0)).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn horoball_identities_on_caps() {
        for n in [2, 3] {
            let sp = SpaceForm::hyperbolic(n);
            let cap = cap_family(&sp, n, 1.5, FRAC_PI_3).unwrap();
            let levels: Vec<_> = [16, 24].iter().map(|&k| discretize(&cap, &sp, k).unwrap()).collect();
            for r in 0..n {
                for name in verifiers_for(&sp) {
                    let rep = sweep(&levels, |m| run(name, m, r)).unwrap();
                    assert!(rep.passed(), "{name} n={n} r={r}: {:?}", rep.residuals);
                }
            }
        }
    }

    #[test]
    fn free_boundary_flux_reduces() {
        // θ = π/2: the flux-1 boundary term is −∫P_r^{μμ} ds.
        let sp = SpaceForm::hyperbolic(2);
        let m = discretize(&cap_family(&sp, 2, 2.0, FRAC_PI_2).unwrap(), &sp, 24).unwrap();
        for r in 0..2 {
            let rep = boundary_flux_1(&m, r).unwrap();
            let direct: Vec<f64> = m.boundary.iter().map(|b| -b.newton_mu[r]).collect();
            assert!((rep.values["rhs"][0] - m.integrate_boundary(&direct)).abs() < 1e-12);
            assert!(rep.passed());
        }
    }

    #[test]
    fn totally_geodesic_is_flagged() {
        let sp = SpaceForm::hyperbolic(2);
        let m = discretize(&cap_family(&sp, 2, 0.0, FRAC_PI_3).unwrap(), &sp, 24).unwrap();
        let rep = minkowski_horoball(&m, 0).unwrap();
        assert!(rep.notes.iter().any(|n| n.starts_with("degenerate")));
        assert!(rep.passed(), "{:?}", rep.residuals);
        // Both sides vanish: ∫u = 0 and H_1 = 0.
        assert!(rep.values["int_u_H_r"][0].abs() < 1e-10);
    }

    #[test]
    fn range_and_hypothesis_gates() {
        let sp = SpaceForm::hyperbolic(2);
        let cap = cap_family(&sp, 2, 1.5, FRAC_PI_3).unwrap();
        let m = discretize(&cap, &sp, 16).unwrap();
        assert!(matches!(boundary_flux_2(&m, 2), Err(Error::Argument(_))));
        let p = perturbed_cap(&cap, 0.03, 2).unwrap();
        let pm = discretize(&p, &sp, 16).unwrap();
        assert!(matches!(cmc_boundary_identity(&pm, 0), Err(Error::Precondition(_))));
        let e = SpaceForm::euclidean(2);
        let em = discretize(&cap_family(&e, 2, 1.0, FRAC_PI_3).unwrap(), &e, 16).unwrap();
        assert!(matches!(boundary_flux_1(&em, 0), Err(Error::Argument(_))));
    }
}
