//! Scalar fields on a discretized surface, the operators `L_r` and `J_r`,
//! the Robin coefficient `q`, and pointwise residuals of the Jacobi and
//! Robin identities.
//!
//! Parameter derivatives come from spectral collocation on the immersion's
//! grid. Boundary derivatives are obtained by interpolating radial
//! derivatives to the boundary face and differentiating boundary samples
//! along the face.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ambient::Model;
use crate::immersion::{DiscreteImmersion, NodeGeometry};
use crate::report::{Criterion, VerificationReport};
use crate::{binomial, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Evaluated from a closed-form expression at every node.
    Analytic,
    /// Produced by a discrete operator.
    Sampled,
}

/// Scalar field on the interior and boundary nodes of an immersion.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceField {
    pub interior: Vec<f64>,
    pub boundary: Vec<f64>,
    pub provenance: Provenance,
}

impl SurfaceField {
    /// Evaluates `f` at every interior and boundary node.
    pub fn sample(m: &DiscreteImmersion, f: impl Fn(&NodeGeometry) -> f64 + Sync) -> Self {
        let interior = m.nodes.par_iter().map(&f).collect();
        let boundary = m.boundary.par_iter().map(|b| f(&b.node)).collect();
        Self { interior, boundary, provenance: Provenance::Analytic }
    }

    pub fn from_values(m: &DiscreteImmersion, interior: Vec<f64>, boundary: Vec<f64>) -> Result<Self> {
        let f = Self { interior, boundary, provenance: Provenance::Sampled };
        f.check(m)?;
        Ok(f)
    }

    pub fn constant(m: &DiscreteImmersion, c: f64) -> Self {
        Self { interior: vec![c; m.len()], boundary: vec![c; m.boundary.len()], provenance: Provenance::Analytic }
    }

    pub fn check(&self, m: &DiscreteImmersion) -> Result<()> {
        if self.interior.len() != m.len() || self.boundary.len() != m.boundary.len() {
            return Err(Error::Argument(format!(
                "field has {}+{} values but the immersion has {}+{} nodes",
                self.interior.len(),
                self.boundary.len(),
                m.len(),
                m.boundary.len()
            )));
        }
        Ok(())
    }

    /// `max |f|` over all nodes.
    pub fn sup(&self) -> f64 {
        self.interior.iter().chain(&self.boundary).fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &SurfaceField, b: f64) -> SurfaceField {
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
        SurfaceField {
            interior: mix(&self.interior, &other.interior),
            boundary: mix(&self.boundary, &other.boundary),
            provenance: if self.provenance == other.provenance { self.provenance } else { Provenance::Sampled },
        }
    }

    pub fn scaled(&self, a: f64) -> SurfaceField {
        SurfaceField {
            interior: self.interior.iter().map(|v| a * v).collect(),
            boundary: self.boundary.iter().map(|v| a * v).collect(),
            provenance: self.provenance,
        }
    }

    /// Pointwise product.
    pub fn times(&self, other: &SurfaceField) -> SurfaceField {
        SurfaceField {
            interior: self.interior.iter().zip(&other.interior).map(|(p, q)| p * q).collect(),
            boundary: self.boundary.iter().zip(&other.boundary).map(|(p, q)| p * q).collect(),
            provenance: Provenance::Sampled,
        }
    }
}

/// First and second parameter derivatives at interior and boundary nodes.
#[derive(Debug, Clone)]
pub struct FieldDerivatives {
    /// `d1[node][i] = ∂_i f`.
    pub d1: Vec<Vec<f64>>,
    pub d2: Vec<DMatrix<f64>>,
    pub boundary_d1: Vec<Vec<f64>>,
    pub boundary_d2: Vec<DMatrix<f64>>,
}

fn transpose_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let len = rows.first().map(|r| r.len()).unwrap_or(0);
    (0..len).map(|k| rows.iter().map(|r| r[k]).collect()).collect()
}

pub fn parameter_derivatives(m: &DiscreteImmersion, f: &SurfaceField) -> Result<FieldDerivatives> {
    f.check(m)?;
    let n = m.n();
    let grid = &m.grid;
    let first: Vec<Vec<f64>> = (0..n).map(|i| grid.derivative(&f.interior, i)).collect();
    let mut second = vec![vec![Vec::new(); n]; n];
    for i in 0..n {
        for j in i..n {
            let v = grid.second_derivative(&f.interior, i, j);
            second[j][i] = v.clone();
            second[i][j] = v;
        }
    }
    let d1 = transpose_rows(&first);
    let d2 = (0..m.len()).map(|k| DMatrix::from_fn(n, n, |i, j| second[i][j][k])).collect();
    let (boundary_d1, boundary_d2) = match &m.face {
        None => (Vec::new(), Vec::new()),
        Some(face) => {
            let radial = grid.restrict_upper(&f.interior, 2)?;
            let mut bfirst = vec![radial[1].clone()];
            let mut bsecond = vec![vec![Vec::new(); n]; n];
            bsecond[0][0] = radial[2].clone();
            for a in 1..n {
                bfirst.push(face.derivative(&f.boundary, a - 1));
                let mixed = face.derivative(&radial[1], a - 1);
                bsecond[0][a] = mixed.clone();
                bsecond[a][0] = mixed;
                for b in a..n {
                    let v = face.second_derivative(&f.boundary, a - 1, b - 1);
                    bsecond[b][a] = v.clone();
                    bsecond[a][b] = v;
                }
            }
            let bd1 = transpose_rows(&bfirst);
            let bd2 = (0..m.boundary.len()).map(|k| DMatrix::from_fn(n, n, |i, j| bsecond[i][j][k])).collect();
            (bd1, bd2)
        }
    };
    Ok(FieldDerivatives { d1, d2, boundary_d1, boundary_d2 })
}

fn covariant_hessian(node: &NodeGeometry, d1: &[f64], d2: &DMatrix<f64>) -> DMatrix<f64> {
    let n = node.n();
    DMatrix::from_fn(n, n, |i, j| d2[(i, j)] - (0..n).map(|k| node.christoffel[k][(i, j)] * d1[k]).sum::<f64>())
}

/// `∇²_ij f = ∂_ij f − Γ^k_ij ∂_k f` at interior nodes.
pub fn hessian_surface(m: &DiscreteImmersion, f: &SurfaceField) -> Result<Vec<DMatrix<f64>>> {
    let d = parameter_derivatives(m, f)?;
    Ok(m.nodes.iter().zip(d.d1.iter().zip(&d.d2)).map(|(nd, (a, b))| covariant_hessian(nd, a, b)).collect())
}

/// Tangent-coordinate gradient `∇^i f = g^{ij} ∂_j f` at interior nodes.
pub fn gradient(m: &DiscreteImmersion, f: &SurfaceField) -> Result<Vec<Vec<f64>>> {
    f.check(m)?;
    let n = m.n();
    let parts: Vec<Vec<f64>> = (0..n).map(|i| m.grid.derivative(&f.interior, i)).collect();
    Ok(m.nodes
        .iter()
        .enumerate()
        .map(|(k, nd)| (0..n).map(|i| (0..n).map(|j| nd.metric_inv[(i, j)] * parts[j][k]).sum()).collect())
        .collect())
}

/// `ḡ(Z, ∇f)` at interior nodes for an ambient field `Z` given per node.
pub fn directional(m: &DiscreteImmersion, f: &SurfaceField, z: impl Fn(&NodeGeometry) -> Vec<f64> + Sync) -> Result<Vec<f64>> {
    let grad = gradient(m, f)?;
    Ok(m.nodes
        .par_iter()
        .zip(grad.par_iter())
        .map(|(nd, gr)| m.space.inner(&nd.point, &z(nd), &nd.push_forward(gr)))
        .collect())
}

fn check_order(n: usize, r: usize) -> Result<()> {
    if r >= n {
        return Err(Error::Argument(format!("operator order r = {r} must satisfy 0 <= r <= n-1 = {}", n - 1)));
    }
    Ok(())
}

fn contract(node: &NodeGeometry, pr: &DMatrix<f64>, hess: &DMatrix<f64>) -> f64 {
    // P_r^{ij} = (P_r)^i_k g^{kj}
    let upper = pr * &node.metric_inv;
    upper.component_mul(hess).sum()
}

/// `L_r f = P_r^{ij} ∇²_ij f`.
pub fn l_r(m: &DiscreteImmersion, f: &SurfaceField, r: usize) -> Result<SurfaceField> {
    check_order(m.n(), r)?;
    let d = parameter_derivatives(m, f)?;
    let eval = |nd: &NodeGeometry, a: &[f64], b: &DMatrix<f64>| -> f64 {
        let pr = &nd.newton_tensors()[r];
        contract(nd, pr, &covariant_hessian(nd, a, b))
    };
    let interior = m.nodes.par_iter().zip(d.d1.par_iter().zip(d.d2.par_iter())).map(|(nd, (a, b))| eval(nd, a, b)).collect();
    let boundary = m
        .boundary
        .par_iter()
        .zip(d.boundary_d1.par_iter().zip(d.boundary_d2.par_iter()))
        .map(|(b, (x, y))| eval(&b.node, x, y))
        .collect();
    Ok(SurfaceField { interior, boundary, provenance: Provenance::Sampled })
}

/// Zeroth-order coefficient `tr(P_r h²) + K tr(P_r)` of `J_r`.
pub fn jacobi_potential(node: &NodeGeometry, r: usize, curvature: f64) -> f64 {
    let pr = &node.newton_tensors()[r];
    (pr * &node.shape * &node.shape).trace() + curvature * pr.trace()
}

/// `J_r f = L_r f + tr(P_r h²) f + K tr(P_r) f`.
pub fn jacobi_j_r(m: &DiscreteImmersion, f: &SurfaceField, r: usize) -> Result<SurfaceField> {
    let lf = l_r(m, f, r)?;
    let k = m.space.curvature();
    let interior = m.nodes.iter().zip(&lf.interior).zip(&f.interior).map(|((nd, l), v)| l + jacobi_potential(nd, r, k) * v).collect();
    let boundary = m
        .boundary
        .iter()
        .zip(&lf.boundary)
        .zip(&f.boundary)
        .map(|((b, l), v)| l + jacobi_potential(&b.node, r, k) * v)
        .collect();
    Ok(SurfaceField { interior, boundary, provenance: Provenance::Sampled })
}

/// Robin coefficient per boundary node.
#[derive(Debug, Clone, PartialEq)]
pub struct RobinData {
    pub q: Vec<f64>,
}

/// `q = κ cscθ + cotθ h(μ,μ)` from the measured contact angle.
pub fn robin_q(m: &DiscreteImmersion) -> Result<RobinData> {
    if m.boundary.is_empty() {
        return Err(Error::Precondition("surface has no boundary traces".into()));
    }
    let kappa = m.space.support_curvature();
    let q = m
        .boundary
        .iter()
        .map(|b| {
            let s = b.theta.sin();
            if s.abs() < 1e-12 {
                return Err(Error::DegenerateAngle(format!("contact angle {} at boundary node {:?}", b.theta, b.node.param)));
            }
            Ok(kappa / s + b.theta.cos() / s * b.h_mu_mu)
        })
        .collect::<Result<_>>()?;
    Ok(RobinData { q })
}

/// `∇_μ f` at boundary nodes.
pub fn normal_derivative(m: &DiscreteImmersion, f: &SurfaceField) -> Result<Vec<f64>> {
    let d = parameter_derivatives(m, f)?;
    Ok(m.boundary
        .iter()
        .zip(&d.boundary_d1)
        .map(|(b, g)| b.conormal_coords.iter().zip(g).map(|(c, v)| c * v).sum())
        .collect())
}

/// `|a − b| / (1 + max(|a|, |b|))`.
pub fn normalized_residual(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// Supremum of pointwise normalized residuals.
pub fn sup_residual(lhs: &[f64], rhs: &[f64]) -> f64 {
    lhs.iter().zip(rhs).map(|(a, b)| normalized_residual(*a, *b)).fold(0.0, f64::max)
}

/// Positive-definiteness of `P_0..P_r` and positivity of `H_1..H_{r+1}` at
/// every node.
pub fn ellipticity_gate(m: &DiscreteImmersion, r: usize) -> Result<()> {
    check_order(m.n(), r)?;
    for nd in m.nodes.iter().chain(m.boundary.iter().map(|b| &b.node)) {
        for (j, pj) in nd.newton_tensors().iter().enumerate().take(r + 1) {
            // P_j is g-self-adjoint; its spectrum is that of g P_j.
            let sym = &nd.metric * pj;
            let sym = (&sym + sym.transpose()) * 0.5;
            let (ev, _) = crate::symfun::g_symmetric_eigen(&nd.metric, &sym);
            if ev[0] <= 0.0 {
                return Err(Error::Precondition(format!("P_{j} is not positive definite at parameter point {:?}", nd.param)));
            }
        }
        for j in 1..=(r + 1).min(nd.n()) {
            if nd.mean_curvature(j) <= 0.0 {
                return Err(Error::Precondition(format!("H_{j} <= 0 at parameter point {:?}", nd.param)));
            }
        }
    }
    Ok(())
}

/// `∫ g L_r f dA + ∫ P_r(∇f, ∇g) dA`, which vanishes when `f` or `g` is
/// supported away from the boundary.
pub fn divergence_form_defect(m: &DiscreteImmersion, f: &SurfaceField, g: &SurfaceField, r: usize) -> Result<f64> {
    let lf = l_r(m, f, r)?;
    let df: Vec<Vec<f64>> = (0..m.n()).map(|i| m.grid.derivative(&f.interior, i)).collect();
    let dg: Vec<Vec<f64>> = (0..m.n()).map(|i| m.grid.derivative(&g.interior, i)).collect();
    let n = m.n();
    let values: Vec<f64> = m
        .nodes
        .iter()
        .enumerate()
        .map(|(k, nd)| {
            let upper = &nd.newton_tensors()[r] * &nd.metric_inv;
            let mut p = 0.0;
            for i in 0..n {
                for j in 0..n {
                    p += upper[(i, j)] * df[i][k] * dg[j][k];
                }
            }
            g.interior[k] * lf.interior[k] + p
        })
        .collect();
    Ok(m.integrate(&values))
}

/// Canonical support functions of a surface.
pub struct SupportFunctions {
    /// `ḡ(x, ν)`.
    pub position: SurfaceField,
    /// `ḡ(E_{n+1}, ν)`.
    pub top: SurfaceField,
    /// `ḡ(X_{n+1}, ν)`.
    pub shifted: SurfaceField,
    /// `V_{n+1}` (identically 1 in the Euclidean model).
    pub potential: SurfaceField,
}

pub fn support_functions(m: &DiscreteImmersion) -> SupportFunctions {
    let sp = m.space;
    let top = |p: &[f64]| {
        let mut e = vec![0.0; p.len()];
        e[p.len() - 1] = 1.0;
        e
    };
    let shifted = |p: &[f64]| {
        let mut e = p.to_vec();
        e[p.len() - 1] -= 1.0;
        e
    };
    SupportFunctions {
        position: SurfaceField::sample(m, |nd| sp.inner(&nd.point, &nd.point, &nd.normal)),
        top: SurfaceField::sample(m, |nd| sp.inner(&nd.point, &top(&nd.point), &nd.normal)),
        shifted: SurfaceField::sample(m, |nd| sp.inner(&nd.point, &shifted(&nd.point), &nd.normal)),
        potential: SurfaceField::sample(m, |nd| match sp.model {
            Model::Euclidean => 1.0,
            Model::Hyperbolic => 1.0 / nd.point[sp.n],
        }),
    }
}

/// Field `σ_k` sampled from node curvatures.
pub fn sigma_field(m: &DiscreteImmersion, k: usize) -> SurfaceField {
    SurfaceField::sample(m, |nd| nd.sigma(k))
}

pub fn nominal_theta(m: &DiscreteImmersion) -> Option<f64> {
    m.family.theta().or_else(|| m.contact_angle())
}

/// Sup-norm change of `op(f)` when every sample of `f` is perturbed by a
/// few ulps: the level below which a residual of `op` carries no
/// truncation information on this grid.
pub fn roundoff_level(f: &SurfaceField, op: impl Fn(&SurfaceField) -> Result<SurfaceField>) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut jitter = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x * (1.0 + 4.0 * f64::EPSILON * rng.gen_range(-1.0..1.0))).collect() };
    let g = SurfaceField { interior: jitter(&f.interior), boundary: jitter(&f.boundary), provenance: f.provenance };
    let (a, b) = (op(f)?, op(&g)?);
    Ok(sup_residual(&a.interior, &b.interior))
}

pub const JACOBI_TOLERANCE: f64 = 1e-5;
pub const ROBIN_TOLERANCE: f64 = 1e-5;

/// Sup-norm residuals of the Jacobi identities, with `∇σ_{r+1}` terms so
/// that they apply to non-constant `σ_{r+1}` as well. The reported
/// residual is the largest component.
pub fn jacobi_identity_residuals(m: &DiscreteImmersion, r: usize) -> Result<VerificationReport> {
    check_order(m.n(), r)?;
    let sp = m.space;
    let n = m.n();
    let s = support_functions(m);
    let sig_r1 = sigma_field(m, r + 1);
    let sig = |nd: &NodeGeometry, k: usize| nd.sigma(k);
    let grad_along = |z: &(dyn Fn(&[f64]) -> Vec<f64> + Sync)| directional(m, &sig_r1, |nd| z(&nd.point));
    let x_grad = grad_along(&|p| p.to_vec())?;
    let e_grad = grad_along(&|p| {
        let mut e = vec![0.0; p.len()];
        e[p.len() - 1] = 1.0;
        e
    })?;
    let mut components: Vec<(&str, f64)> = Vec::new();
    let mut noise: f64 = 0.0;
    let mut note_noise = |f: &SurfaceField| -> Result<()> {
        noise = noise.max(roundoff_level(f, |g| jacobi_j_r(m, g, r))?);
        Ok(())
    };
    match sp.model {
        Model::Euclidean => {
            note_noise(&s.top)?;
            note_noise(&s.position)?;
            let je = jacobi_j_r(m, &s.top, r)?;
            components.push(("J_r<E,nu>", sup_residual(&je.interior, &e_grad)));
            let jx = jacobi_j_r(m, &s.position, r)?;
            let rhs: Vec<f64> = m.nodes.iter().zip(&x_grad).map(|(nd, g)| g + (r + 1) as f64 * sig(nd, r + 1)).collect();
            components.push(("J_r<x,nu>", sup_residual(&jx.interior, &rhs)));
        }
        Model::Hyperbolic => {
            for f in [&s.position, &s.top, &s.shifted, &s.potential] {
                note_noise(f)?;
            }
            let rf = (r + 1) as f64;
            let nr = (n - r) as f64;
            let jx = jacobi_j_r(m, &s.position, r)?;
            components.push(("J_r g(x,nu)", sup_residual(&jx.interior, &x_grad)));
            let je = jacobi_j_r(m, &s.top, r)?;
            let rhs_e: Vec<f64> = (0..m.len())
                .map(|k| {
                    let nd = &m.nodes[k];
                    -rf * sig(nd, r + 1) * s.potential.interior[k] - nr * sig(nd, r) * s.top.interior[k] + e_grad[k]
                })
                .collect();
            components.push(("J_r g(E,nu)", sup_residual(&je.interior, &rhs_e)));
            let jxs = jacobi_j_r(m, &s.shifted, r)?;
            let rhs_xs: Vec<f64> = (0..m.len())
                .map(|k| {
                    let nd = &m.nodes[k];
                    rf * sig(nd, r + 1) * s.potential.interior[k] + nr * sig(nd, r) * s.top.interior[k] + x_grad[k] - e_grad[k]
                })
                .collect();
            components.push(("J_r g(X,nu)", sup_residual(&jxs.interior, &rhs_xs)));
            let jv = jacobi_j_r(m, &s.potential, r)?;
            let rhs_v: Vec<f64> = (0..m.len())
                .map(|k| {
                    let nd = &m.nodes[k];
                    let t2 = sig(nd, 1) * sig(nd, r + 1) - (r + 2) as f64 * sig(nd, r + 2);
                    rf * sig(nd, r + 1) * s.top.interior[k] + t2 * s.potential.interior[k]
                })
                .collect();
            components.push(("J_r V", sup_residual(&jv.interior, &rhs_v)));
            if let Some(theta) = nominal_theta(m) {
                let c = theta.cos();
                let u = s.potential.combine(1.0, &s.position, -c);
                let ju = jacobi_j_r(m, &u, r)?;
                let rhs_u: Vec<f64> = (0..m.len()).map(|k| rhs_v[k] - c * x_grad[k]).collect();
                components.push(("J_r u", sup_residual(&ju.interior, &rhs_u)));
            }
        }
    }
    let worst = components.iter().map(|c| c.1).fold(0.0, f64::max);
    let mut rep = VerificationReport::single(
        "jacobi",
        &sp,
        Some(r),
        nominal_theta(m),
        m.resolution,
        worst,
        Criterion::new(JACOBI_TOLERANCE, Some(2.0)),
    )
    .with_roundoff(noise)
    .normalized_by("|lhs-rhs|/(1+max(|lhs|,|rhs|)), sup over interior nodes");
    for (name, v) in components {
        rep = rep.component(name, v);
    }
    Ok(rep)
}

/// Sup-norm residuals of the Robin boundary identities.
pub fn robin_residuals(m: &DiscreteImmersion, r: usize) -> Result<VerificationReport> {
    let sp = m.space;
    let q = robin_q(m)?.q;
    let s = support_functions(m);
    let theta = nominal_theta(m).ok_or_else(|| Error::Precondition("no contact angle".into()))?;
    let c = theta.cos();
    let robin = |f: &SurfaceField| -> Result<f64> {
        let dn = normal_derivative(m, f)?;
        let rhs: Vec<f64> = q.iter().zip(&f.boundary).map(|(q, v)| q * v).collect();
        Ok(sup_residual(&dn, &rhs))
    };
    let mut components: Vec<(&str, f64)> = Vec::new();
    match sp.model {
        Model::Euclidean => {
            components.push(("<x,nu>", robin(&s.position)?));
            components.push(("1-cos(theta)<E,nu>", robin(&s.potential.combine(1.0, &s.top, -c))?));
        }
        Model::Hyperbolic => {
            components.push(("V-cos(theta)g(E,nu)", robin(&s.potential.combine(1.0, &s.top, -c))?));
            components.push(("g(X,nu)", robin(&s.shifted)?));
            components.push(("u", robin(&s.potential.combine(1.0, &s.position, -c))?));
            let dn = normal_derivative(m, &s.position)?;
            let rhs: Vec<f64> = m
                .boundary
                .iter()
                .map(|b| {
                    let p = &b.node.point;
                    sp.inner(p, p, &b.support_tangent_normal) + b.h_mu_mu * sp.inner(p, p, &b.conormal)
                })
                .collect();
            components.push(("d_mu g(x,nu)", sup_residual(&dn, &rhs)));
        }
    }
    let worst = components.iter().map(|c| c.1).fold(0.0, f64::max);
    let mut rep = VerificationReport::single(
        "robin",
        &sp,
        Some(r),
        Some(theta),
        m.resolution,
        worst,
        Criterion::new(ROBIN_TOLERANCE, Some(2.0)),
    )
    .normalized_by("|lhs-rhs|/(1+max(|lhs|,|rhs|)), sup over boundary nodes");
    for (name, v) in components {
        rep = rep.component(name, v);
    }
    Ok(rep)
}

/// `C(n−1, r) Λ^r`, the factor relating `L_r` to `Δ` on an umbilical
/// surface with curvature `Λ`.
pub fn umbilical_lr_factor(n: usize, r: usize, lambda: f64) -> f64 {
    binomial(n as i64 - 1, r as i64) * lambda.powi(r as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::immersion::{cap_family, discretize, perturbed_cap};
    use crate::ambient::SpaceForm;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    fn cap(sp: &SpaceForm, lambda: f64, theta: f64, res: usize) -> DiscreteImmersion {
        discretize(&cap_family(sp, sp.n, lambda, theta).unwrap(), sp, res).unwrap()
    }

    #[test]
    fn constant_field_has_zero_hessian_and_lr() {
        let sp = SpaceForm::euclidean(2);
        let m = cap(&sp, 1.0, FRAC_PI_3, 16);
        let f = SurfaceField::constant(&m, 3.0);
        for h in hessian_surface(&m, &f).unwrap() {
            assert!(h.norm() < 1e-10);
        }
        assert!(l_r(&m, &f, 1).unwrap().sup() < 1e-10);
    }

    #[test]
    fn coordinate_functions_are_eigenfunctions() {
        let sp = SpaceForm::euclidean(2);
        let m = cap(&sp, 1.0, FRAC_PI_2, 24);
        let f = SurfaceField::sample(&m, |nd| nd.point[0]);
        let lap = l_r(&m, &f, 0).unwrap();
        let rhs: Vec<f64> = f.interior.iter().map(|v| -2.0 * v).collect();
        assert!(sup_residual(&lap.interior, &rhs) < 1e-9);
        let z = SurfaceField::sample(&m, |nd| nd.point[2]);
        let lap = l_r(&m, &z, 0).unwrap();
        let rhs: Vec<f64> = z.interior.iter().map(|v| -2.0 * v).collect();
        assert!(sup_residual(&lap.interior, &rhs) < 1e-9);
        let rhs: Vec<f64> = z.boundary.iter().map(|v| -2.0 * v).collect();
        assert!(sup_residual(&lap.boundary, &rhs) < 1e-8);
    }

    #[test]
    fn umbilical_lr_is_scaled_laplacian() {
        let sp = SpaceForm::euclidean(3);
        let m = cap(&sp, 2.0, FRAC_PI_3, 16);
        let f = SurfaceField::sample(&m, |nd| nd.point[0] * nd.point[1] + nd.point[2].powi(2));
        let lap = l_r(&m, &f, 0).unwrap();
        for r in 1..3 {
            let lr = l_r(&m, &f, r).unwrap();
            let k = umbilical_lr_factor(3, r, 2.0);
            let rhs: Vec<f64> = lap.interior.iter().map(|v| k * v).collect();
            assert!(sup_residual(&lr.interior, &rhs) < 1e-8);
        }
    }

    #[test]
    fn robin_q_examples() {
        let sp = SpaceForm::euclidean(2);
        let m = cap(&sp, 1.0, FRAC_PI_2, 16);
        assert!(robin_q(&m).unwrap().q.iter().all(|q| q.abs() < 1e-12));
        let m = cap(&sp, 1.0, FRAC_PI_3, 16);
        assert!(robin_q(&m).unwrap().q.iter().all(|q| (q - 1.0 / 3f64.sqrt()).abs() < 1e-10));
        let sp = SpaceForm::hyperbolic(2);
        let m = cap(&sp, 2.0, 1.2, 16);
        for (q, b) in robin_q(&m).unwrap().q.iter().zip(&m.boundary) {
            assert!((q - (1.0 / 1.2f64.sin() + 1.2f64.cos() / 1.2f64.sin() * b.h_mu_mu)).abs() < 1e-10);
        }
    }

    #[test]
    fn jacobi_identities_on_caps() {
        for sp in [SpaceForm::euclidean(2), SpaceForm::hyperbolic(2)] {
            let lam = if sp.model == Model::Euclidean { 1.0 } else { 2.0 };
            let m = cap(&sp, lam, 2.0, 24);
            for r in 0..2 {
                let rep = jacobi_identity_residuals(&m, r).unwrap();
                assert!(rep.finest() < 1e-8, "{}: {:?}", rep.label(), rep.components);
            }
        }
    }

    #[test]
    fn jacobi_identities_on_perturbed_caps() {
        for sp in [SpaceForm::euclidean(2), SpaceForm::hyperbolic(2)] {
            let lam = if sp.model == Model::Euclidean { 1.0 } else { 2.0 };
            let c = cap_family(&sp, 2, lam, FRAC_PI_3).unwrap();
            let m = discretize(&perturbed_cap(&c, 0.04 / lam, 2).unwrap(), &sp, 40).unwrap();
            for r in 0..2 {
                let rep = jacobi_identity_residuals(&m, r).unwrap();
                assert!(rep.finest() < 1e-6, "{}: {:?}", rep.label(), rep.components);
            }
        }
    }

    #[test]
    fn robin_identities_on_caps() {
        for sp in [SpaceForm::euclidean(2), SpaceForm::hyperbolic(2)] {
            let lam = if sp.model == Model::Euclidean { 1.0 } else { 1.5 };
            for theta in [FRAC_PI_3, FRAC_PI_2, 2.0 * FRAC_PI_3] {
                let m = cap(&sp, lam, theta, 24);
                let rep = robin_residuals(&m, 0).unwrap();
                assert!(rep.finest() < 1e-9, "{}: {:?}", rep.label(), rep.components);
            }
        }
    }

    #[test]
    fn ellipticity_gate_on_caps() {
        let sp = SpaceForm::euclidean(3);
        let m = cap(&sp, 1.0, FRAC_PI_2, 16);
        assert!(ellipticity_gate(&m, 2).is_ok());
        assert!(matches!(l_r(&m, &SurfaceField::constant(&m, 1.0), 3), Err(Error::Argument(_))));
    }

    #[test]
    fn divergence_form_for_compact_support() {
        let sp = SpaceForm::euclidean(2);
        let m = cap(&sp, 1.0, FRAC_PI_2, 32);
        let bump = |nd: &NodeGeometry| {
            let s = nd.param[0] / FRAC_PI_2;
            (1.0 - s * s).powi(4)
        };
        let f = SurfaceField::sample(&m, |nd| bump(nd) * (1.0 + nd.point[0]));
        let g = SurfaceField::sample(&m, |nd| nd.point[1] + nd.point[2].powi(2));
        for r in 0..2 {
            assert!(divergence_form_defect(&m, &f, &g, r).unwrap().abs() < 1e-9);
        }
    }
}
