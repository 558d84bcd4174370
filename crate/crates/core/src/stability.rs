//! Second variation on the admissible space, test functions, the
//! lowest-eigenvalue estimate and the rigidity-chain gaps.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ambient::Model;
use crate::identities::{sigma_constancy, CMC_SPREAD};
use crate::immersion::{sphere_direction, DiscreteImmersion, Family};
use crate::operators::{
    ellipticity_gate, jacobi_j_r, l_r, nominal_theta, normal_derivative, robin_q, sup_residual, support_functions,
    SurfaceField, JACOBI_TOLERANCE,
};
use crate::report::{Criterion, VerificationReport};
use crate::{binomial, Error, Result};

/// Admissibility tolerance relative to the field's scale.
pub const ADMISSIBILITY: f64 = 1e-8;
pub const GAP_TOLERANCE: f64 = 1e-8;

/// A field in the discrete admissible space, with its measured defects.
#[derive(Debug, Clone)]
pub struct AdmissibleField {
    pub phi: SurfaceField,
    /// `|∫φ dA| / area`.
    pub mean_residual: f64,
    /// `sup |∇_μφ − qφ|` over boundary nodes.
    pub robin_residual: f64,
    pub scale: f64,
}

impl AdmissibleField {
    /// Measures both admissibility defects of `phi`.
    pub fn measure(m: &DiscreteImmersion, phi: SurfaceField, scale: f64) -> Result<Self> {
        phi.check(m)?;
        let q = robin_q(m)?.q;
        let dn = normal_derivative(m, &phi)?;
        let robin_residual = dn.iter().zip(&q).zip(&phi.boundary).map(|((d, q), v)| (d - q * v).abs()).fold(0.0, f64::max);
        let mean_residual = m.integrate(&phi.interior).abs() / m.area();
        Ok(Self { phi, mean_residual, robin_residual, scale })
    }

    /// As [`AdmissibleField::measure`], failing when a defect exceeds the
    /// tolerance.
    pub fn certify(m: &DiscreteImmersion, phi: SurfaceField, scale: f64) -> Result<Self> {
        let f = Self::measure(m, phi, scale)?;
        f.require()?;
        Ok(f)
    }

    pub fn tolerance(&self) -> f64 {
        ADMISSIBILITY * self.scale.max(f64::MIN_POSITIVE)
    }

    pub fn is_admissible(&self) -> bool {
        self.mean_residual <= self.tolerance() && self.robin_residual <= self.tolerance()
    }

    pub fn require(&self) -> Result<()> {
        if !self.is_admissible() {
            return Err(Error::Precondition(format!(
                "field is not admissible: mean residual {:e}, Robin residual {:e}, tolerance {:e}",
                self.mean_residual,
                self.robin_residual,
                self.tolerance()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadraticFormReport {
    pub r: usize,
    /// `−∫φ J_rφ dA`.
    pub raw: f64,
    /// `(n−r) C(n,r+1)^{-1}` times `raw`, the second variation of `E_{r+1}`.
    pub value: f64,
    /// Integrand samples `−φ J_rφ` at interior nodes.
    pub bulk: Vec<f64>,
    pub mean_residual: f64,
    pub robin_residual: f64,
}

/// `(n−r) / C(n, r+1)`.
pub fn second_variation_normalizer(n: usize, r: usize) -> f64 {
    (n - r) as f64 / binomial(n as i64, r as i64 + 1)
}

/// Second variation of `E_{r+1}` along an admissible field.
pub fn quadratic_form(m: &DiscreteImmersion, phi: &AdmissibleField, r: usize) -> Result<QuadraticFormReport> {
    phi.require()?;
    let j = jacobi_j_r(m, &phi.phi, r)?;
    let bulk: Vec<f64> = phi.phi.interior.iter().zip(&j.interior).map(|(a, b)| -a * b).collect();
    let raw = m.integrate(&bulk);
    Ok(QuadraticFormReport {
        r,
        raw,
        value: second_variation_normalizer(m.n(), r) * raw,
        bulk,
        mean_residual: phi.mean_residual,
        robin_residual: phi.robin_residual,
    })
}

fn theta_of(m: &DiscreteImmersion) -> Result<f64> {
    nominal_theta(m).ok_or_else(|| Error::Precondition("no contact angle".into()))
}

fn require_cmc(m: &DiscreteImmersion, k: usize) -> Result<()> {
    let spread = sigma_constancy(m, k);
    if spread > CMC_SPREAD {
        return Err(Error::Precondition(format!("H_{k} is not constant: relative spread {spread:e}")));
    }
    Ok(())
}

fn mean_of(m: &DiscreteImmersion, k: usize) -> f64 {
    let v: Vec<f64> = m.nodes.iter().map(|nd| nd.mean_curvature(k)).collect();
    m.integrate(&v) / m.area()
}

/// Euclidean diameter proxy: largest distance of a node from the first
/// boundary node.
fn diameter(m: &DiscreteImmersion) -> f64 {
    let pts: Vec<&Vec<f64>> = m.nodes.iter().map(|n| &n.point).chain(m.boundary.iter().map(|b| &b.node.point)).collect();
    let mut d: f64 = 0.0;
    for p in &pts {
        for q in pts.iter().step_by((pts.len() / 64).max(1)) {
            d = d.max(p.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        }
    }
    d
}

/// `α ω − H_{r+1}⟨x,ν⟩` with `α = ∫ωH_r / ∫ω`, `ω = 1 − cosθ⟨E,ν⟩`.
pub fn test_function_euclidean(m: &DiscreteImmersion, r: usize) -> Result<AdmissibleField> {
    if m.space.model != Model::Euclidean {
        return Err(Error::Argument("test_function_euclidean requires the Euclidean model".into()));
    }
    if r >= m.n() {
        return Err(Error::Argument(format!("r = {r} must be at most n-1")));
    }
    require_cmc(m, r + 1)?;
    let c = theta_of(m)?.cos();
    let s = support_functions(m);
    let omega = SurfaceField::constant(m, 1.0).combine(1.0, &s.top, -c);
    let hr = SurfaceField::sample(m, |nd| nd.mean_curvature(r));
    let alpha = m.integrate(&omega.times(&hr).interior) / m.integrate(&omega.interior);
    let h = mean_of(m, r + 1);
    let phi = omega.combine(alpha, &s.position, -h);
    let scale = alpha.abs() + h.abs() * diameter(m);
    AdmissibleField::measure(m, phi, scale)
}

/// `∫u dA` with `u = V − cosθ ḡ(x,ν)`.
pub fn u_integral(m: &DiscreteImmersion) -> Result<f64> {
    let c = theta_of(m)?.cos();
    let s = support_functions(m);
    Ok(m.integrate(&s.potential.combine(1.0, &s.position, -c).interior))
}

fn horoball_lambda(m: &DiscreteImmersion, r: usize) -> Result<(f64, SurfaceField)> {
    let c = theta_of(m)?.cos();
    let s = support_functions(m);
    let u = s.potential.combine(1.0, &s.position, -c);
    let total = m.integrate(&u.interior);
    if total.abs() < 1e-6 * m.area() {
        return Err(Error::DegenerateNormalizer(format!("|int u dA| = {:e} is below 1e-6 * area", total.abs())));
    }
    let hr = SurfaceField::sample(m, |nd| nd.mean_curvature(r));
    Ok((m.integrate(&u.times(&hr).interior) / total, u))
}

/// `λu − ḡ(X,ν)H_{r+1}` with `λ = ∫uH_r / ∫u`.
pub fn test_function_horoball(m: &DiscreteImmersion, r: usize) -> Result<AdmissibleField> {
    if m.space.model != Model::Hyperbolic {
        return Err(Error::Argument("test_function_horoball requires the hyperbolic model".into()));
    }
    if r >= m.n() {
        return Err(Error::Argument(format!("r = {r} must be at most n-1")));
    }
    require_cmc(m, r + 1)?;
    let (lambda, u) = horoball_lambda(m, r)?;
    let s = support_functions(m);
    let h = mean_of(m, r + 1);
    let phi = u.combine(lambda, &s.shifted, -h);
    let scale = lambda.abs() * u.sup() + h.abs() * s.shifted.sup();
    AdmissibleField::measure(m, phi, scale)
}

/// Chebyshev products `T_a(y_1)⋯T_c(y_n)` in `y = (ψ/Ψ) ω`, ordered by
/// total degree so that bases of increasing degree are nested.
fn multi_indices(n: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for total in 0..=degree {
        let mut cur = vec![0; n];
        fn rec(k: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if k + 1 == cur.len() {
                cur[k] = left;
                out.push(cur.clone());
                return;
            }
            for a in (0..=left).rev() {
                cur[k] = a;
                rec(k + 1, left - a, cur, out);
            }
        }
        rec(0, total, &mut cur, &mut out);
    }
    out
}

fn chebyshev(k: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if k == 0 {
        return a;
    }
    for _ in 1..k {
        let c = 2.0 * x * b - a;
        a = b;
        b = c;
    }
    b
}

/// Power of `s` in the Robin correction profile `(Ψ/2)(s² − 1)s^M`.
const CORRECTION_POWER: i32 = 12;

/// Galerkin basis of the discrete admissible space: smooth polynomials of
/// total degree ≤ `degree`, each corrected additively near the boundary to
/// satisfy `∇_μφ = qφ`, then restricted to the mean-zero subspace.
#[derive(Debug, Clone)]
pub struct AdmissibleBasis {
    pub degree: usize,
    pub fields: Vec<SurfaceField>,
}

impl AdmissibleBasis {
    pub fn new(m: &DiscreteImmersion, degree: usize) -> Result<Self> {
        if !m.has_boundary() {
            return Err(Error::Argument("admissible basis needs a surface with boundary".into()));
        }
        let n = m.n();
        let psi_max = m.radial_max;
        let q = robin_q(m)?.q;
        let face_len = m.boundary.len();
        let raw: Vec<SurfaceField> = multi_indices(n, degree)
            .into_iter()
            .map(|idx| {
                SurfaceField::sample(m, |nd| {
                    let s = nd.param[0] / psi_max;
                    let w = sphere_direction(&nd.param[1..]);
                    idx.iter().enumerate().map(|(k, &a)| chebyshev(a, s * w[k])).product()
                })
            })
            .collect();
        let mut corrected = Vec::with_capacity(raw.len());
        for b in raw {
            let dn = normal_derivative(m, &b)?;
            // ∇_μ of a(ω)·(Ψ/2)(s²−1)s^M on the boundary is μ^ψ a(ω).
            let a: Vec<f64> = (0..face_len)
                .map(|j| (q[j] * b.boundary[j] - dn[j]) / m.boundary[j].conormal_coords[0])
                .collect();
            // Split a into parts even and odd under the antipodal map so each
            // carries a radial power of matching parity and stays smooth at
            // the pole.
            let anti: Vec<usize> = (0..face_len).map(|j| m.grid.partner(j, 0)).collect();
            let interior = b
                .interior
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let s = m.nodes[k].param[0] / psi_max;
                    let j = k % face_len;
                    let even = 0.5 * (a[j] + a[anti[j]]);
                    let odd = 0.5 * (a[j] - a[anti[j]]);
                    let bump = 0.5 * psi_max * (s * s - 1.0) * s.powi(CORRECTION_POWER);
                    v + bump * (even + odd * s)
                })
                .collect();
            corrected.push(SurfaceField::from_values(m, interior, b.boundary)?);
        }
        // Mean-zero subspace: eliminate the coefficient with the largest mean.
        let means: Vec<f64> = corrected.iter().map(|f| m.integrate(&f.interior)).collect();
        let pivot = (0..means.len()).max_by(|&i, &j| means[i].abs().total_cmp(&means[j].abs())).unwrap_or(0);
        let fields = (0..corrected.len())
            .filter(|&j| j != pivot)
            .map(|j| corrected[j].combine(1.0, &corrected[pivot], -means[j] / means[pivot]))
            .collect();
        Ok(Self { degree, fields })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// `Σ c_k b_k`.
    pub fn combination(&self, coeffs: &[f64]) -> SurfaceField {
        let mut out = self.fields[0].scaled(coeffs[0]);
        for (f, c) in self.fields.iter().zip(coeffs).skip(1) {
            out = out.combine(1.0, f, *c);
        }
        out
    }

    /// Stiffness `(n−r)C(n,r+1)^{-1}·(−∫b_i J_r b_j)` (symmetrized) and mass
    /// `∫b_i b_j`.
    pub fn matrices(&self, m: &DiscreteImmersion, r: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let k = self.len();
        let applied: Vec<SurfaceField> = self.fields.iter().map(|f| jacobi_j_r(m, f, r)).collect::<Result<_>>()?;
        let norm = second_variation_normalizer(m.n(), r);
        let dot = |a: &[f64], b: &[f64]| -> f64 {
            let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
            m.integrate(&v)
        };
        let mut stiff = DMatrix::zeros(k, k);
        let mut mass = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                stiff[(i, j)] = -norm * dot(&self.fields[i].interior, &applied[j].interior);
                mass[(i, j)] = dot(&self.fields[i].interior, &self.fields[j].interior);
            }
        }
        let stiff = (&stiff + stiff.transpose()) * 0.5;
        let mass = (&mass + mass.transpose()) * 0.5;
        Ok((stiff, mass))
    }
}

/// Lowest eigenvalue of the normalized second variation over the
/// admissible Galerkin space of total degree `basis_size`.
pub fn lowest_eigenvalue(m: &DiscreteImmersion, r: usize, basis_size: usize) -> Result<f64> {
    ellipticity_gate(m, r)?;
    let basis = AdmissibleBasis::new(m, basis_size)?;
    if basis.is_empty() {
        return Err(Error::Basis("basis of degree 0 has no mean-zero elements".into()));
    }
    let (stiff, mass) = basis.matrices(m, r)?;
    generalized_min(&stiff, &mass)
}

fn generalized_min(stiff: &DMatrix<f64>, mass: &DMatrix<f64>) -> Result<f64> {
    let me = mass.clone().symmetric_eigen();
    let top = me.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let low = me.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if low <= 1e-13 * top {
        return Err(Error::Basis(format!("mass matrix is not positive definite (eigenvalues in [{low:e}, {top:e}])")));
    }
    let chol = mass.clone().cholesky().ok_or_else(|| Error::Basis("mass matrix Cholesky failed".into()))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::Basis("singular Cholesky factor".into()))?;
    let c = &linv * stiff * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    Ok(c.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Curvature scale for eigenvalue thresholds: `max(Λ, |K|^{1/2})^{r+2}·area`.
pub fn eigenvalue_scale(m: &DiscreteImmersion, r: usize) -> f64 {
    let lambda = m.family.lambda().unwrap_or_else(|| mean_of(m, 1));
    let k = m.space.curvature().abs().sqrt();
    lambda.abs().max(k).powi(r as i32 + 2) * m.area()
}

/// Random admissible fields: seeded combinations of the Galerkin basis.
pub fn random_admissible_fields(m: &DiscreteImmersion, degree: usize, count: usize, seed: u64) -> Result<Vec<AdmissibleField>> {
    let basis = AdmissibleBasis::new(m, degree)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let coeffs: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let phi = basis.combination(&coeffs);
            let scale = phi.sup();
            AdmissibleField::certify(m, phi, scale)
        })
        .collect()
}

/// `((r+1)(n−r)/n) Λ^r`.
pub fn cap_reduction_factor(n: usize, r: usize, lambda: f64) -> f64 {
    ((r + 1) * (n - r)) as f64 / n as f64 * lambda.powi(r as i32)
}

/// Largest `|Q_r − f Q_0| / |Q_0|` over the given fields on a cap.
pub fn cap_reduction_defect(m: &DiscreteImmersion, r: usize, fields: &[AdmissibleField]) -> Result<f64> {
    let Family::Cap { lambda, .. } = m.family else {
        return Err(Error::Precondition("cap reduction applies to round caps".into()));
    };
    let factor = cap_reduction_factor(m.n(), r, lambda);
    let mut worst: f64 = 0.0;
    for f in fields {
        let q0 = quadratic_form(m, f, 0)?.value;
        let qr = quadratic_form(m, f, r)?.value;
        worst = worst.max((qr - factor * q0).abs() / q0.abs());
    }
    Ok(worst)
}

/// Rigidity-chain gaps: (a) `min (H_1H_{r+1} − H_{r+2})`, (b) the Hölder gap
/// (Euclidean), (c) `min (ψλ − φH_{r+1})` (hyperbolic). On non-CMC input
/// only (a) is evaluated.
pub fn rigidity_gap_report(m: &DiscreteImmersion, r: usize) -> Result<VerificationReport> {
    let n = m.n();
    if r >= n {
        return Err(Error::Argument(format!("r = {r} must be at most n-1")));
    }
    ellipticity_gate(m, r)?;
    let theta = theta_of(m)?;
    let cmc = sigma_constancy(m, r + 1) <= CMC_SPREAD;
    let umbilical = m.family.is_umbilical();
    let mut values: Vec<(&str, f64)> = Vec::new();
    let mut notes = Vec::new();
    let all_nodes = || m.nodes.iter().chain(m.boundary.iter().map(|b| &b.node));
    if r + 2 <= n {
        let a = all_nodes()
            .map(|nd| nd.mean_curvature(1) * nd.mean_curvature(r + 1) - nd.mean_curvature(r + 2))
            .fold(f64::INFINITY, f64::min);
        let a_max = all_nodes()
            .map(|nd| nd.mean_curvature(1) * nd.mean_curvature(r + 1) - nd.mean_curvature(r + 2))
            .fold(f64::NEG_INFINITY, f64::max);
        values.push(("gap_a_min", a));
        values.push(("gap_a_max", a_max));
    } else {
        notes.push("gap (a) needs H_{r+2}; not defined for r = n-1".to_string());
    }
    if cmc {
        match m.space.model {
            Model::Euclidean => {
                let c = theta.cos();
                let s = support_functions(m);
                let omega = SurfaceField::constant(m, 1.0).combine(1.0, &s.top, -c);
                let ratio = SurfaceField::sample(m, |nd| nd.mean_curvature(r) / nd.mean_curvature(r + 1));
                let h1 = SurfaceField::sample(m, |nd| nd.mean_curvature(1));
                let b = m.integrate(&ratio.times(&omega).interior) * m.integrate(&omega.times(&h1).interior)
                    - m.integrate(&omega.interior).powi(2);
                values.push(("gap_b", b / m.integrate(&omega.interior).powi(2)));
            }
            Model::Hyperbolic => {
                let (lambda, _) = horoball_lambda(m, r)?;
                let h = mean_of(m, r + 1);
                let rf = (r + 1) as f64;
                let gap = |nd: &crate::immersion::NodeGeometry| {
                    let phi = lambda * rf * nd.sigma(r + 1) - (n - r) as f64 * nd.sigma(r) * h;
                    let psi = lambda * (nd.sigma(1) * nd.sigma(r + 1) - (r + 2) as f64 * nd.sigma(r + 2)) - rf * nd.sigma(r + 1) * h;
                    psi * lambda - phi * h
                };
                values.push(("gap_c_min", all_nodes().map(gap).fold(f64::INFINITY, f64::min)));
                values.push(("gap_c_max", all_nodes().map(gap).fold(f64::NEG_INFINITY, f64::max)));
                values.push(("lambda", lambda));
            }
        }
    } else {
        notes.push("H_{r+1} not constant: only gap (a) evaluated".to_string());
    }
    // Residual: violation of nonnegativity, and on umbilical caps the
    // distance from equality.
    let mut residual: f64 = 0.0;
    for (name, v) in &values {
        if name.starts_with("gap") {
            residual = residual.max(-v);
            if umbilical {
                residual = residual.max(v.abs());
            }
        }
    }
    let mut rep = VerificationReport::single(
        "rigidity_gaps",
        &m.space,
        Some(r),
        Some(theta),
        m.resolution,
        residual.max(0.0),
        Criterion::new(GAP_TOLERANCE, None),
    )
    .normalized_by(if umbilical { "max(-gap, |gap|) (equality case)" } else { "max(-gap, 0)" });
    for (name, v) in values {
        rep = rep.value(name, v);
    }
    for note in notes {
        rep = rep.note(&note);
    }
    Ok(rep)
}

/// Residuals of the auxiliary functions `Φ = −ḡ(E,ν)` and
/// `Ψ = −H_{r+1}V − λḡ(E,ν)` on a hyperbolic CMC surface.
pub fn auxiliary_identity_residuals(m: &DiscreteImmersion, r: usize) -> Result<VerificationReport> {
    if m.space.model != Model::Hyperbolic {
        return Err(Error::Argument("auxiliary identities require the hyperbolic model".into()));
    }
    let n = m.n();
    if r >= n {
        return Err(Error::Argument(format!("r = {r} must be at most n-1")));
    }
    require_cmc(m, r + 1)?;
    let theta = theta_of(m)?;
    let (lambda, _) = horoball_lambda(m, r)?;
    let h = mean_of(m, r + 1);
    let s = support_functions(m);
    let big_phi = s.top.scaled(-1.0);
    let big_psi = s.potential.combine(-h, &s.top, -lambda);
    let trace = |nd: &crate::immersion::NodeGeometry, power: i32| {
        let pr = &nd.newton_tensors()[r];
        let mut p = pr.clone();
        for _ in 0..power {
            p = &p * &nd.shape;
        }
        p.trace()
    };
    let lphi = l_r(m, &big_phi, r)?;
    let rhs_phi: Vec<f64> = (0..m.len())
        .map(|k| {
            let nd = &m.nodes[k];
            s.potential.interior[k] * trace(nd, 1) + s.top.interior[k] * trace(nd, 2)
        })
        .collect();
    let lpsi = l_r(m, &big_psi, r)?;
    let rf = (r + 1) as f64;
    let rhs_psi: Vec<f64> = (0..m.len())
        .map(|k| {
            let nd = &m.nodes[k];
            let phi = lambda * rf * nd.sigma(r + 1) - (n - r) as f64 * nd.sigma(r) * h;
            let psi = lambda * (nd.sigma(1) * nd.sigma(r + 1) - (r + 2) as f64 * nd.sigma(r + 2)) - rf * nd.sigma(r + 1) * h;
            phi * s.potential.interior[k] + psi * s.top.interior[k]
        })
        .collect();
    let c = theta.cos();
    let phi_edge = sup_residual(&big_phi.boundary, &vec![-c; m.boundary.len()]);
    let dphi = normal_derivative(m, &big_phi)?;
    let dphi_rhs: Vec<f64> = m.boundary.iter().map(|b| theta.sin() * b.h_mu_mu).collect();
    let psi_edge = sup_residual(&big_psi.boundary, &vec![-h - lambda * c; m.boundary.len()]);
    let components = [
        ("L_r Phi", sup_residual(&lphi.interior, &rhs_phi)),
        ("L_r Psi", sup_residual(&lpsi.interior, &rhs_psi)),
        ("Phi on boundary", phi_edge),
        ("d_mu Phi", sup_residual(&dphi, &dphi_rhs)),
        ("Psi on boundary", psi_edge),
    ];
    let worst = components.iter().map(|c| c.1).fold(0.0, f64::max);
    let spread = {
        let hi = big_psi.interior.iter().cloned().fold(f64::MIN, f64::max);
        let lo = big_psi.interior.iter().cloned().fold(f64::MAX, f64::min);
        hi - lo
    };
    let mut rep = VerificationReport::single(
        "auxiliary",
        &m.space,
        Some(r),
        Some(theta),
        m.resolution,
        worst,
        Criterion::new(JACOBI_TOLERANCE, Some(2.0)),
    )
    .value("Psi_spread", spread)
    .value("lambda", lambda)
    .normalized_by("|lhs-rhs|/(1+max(|lhs|,|rhs|)), sup over nodes");
    for (name, v) in components {
        rep = rep.component(name, v);
    }
    Ok(rep)
}

/// Smallest `λ_min` and a nonnegativity verdict as a report record.
pub fn stability_report(m: &DiscreteImmersion, r: usize, basis_size: usize) -> Result<VerificationReport> {
    let lam = lowest_eigenvalue(m, r, basis_size)?;
    let scale = eigenvalue_scale(m, r);
    let theta = theta_of(m)?;
    Ok(VerificationReport::single(
        "stability",
        &m.space,
        Some(r),
        Some(theta),
        m.resolution,
        (-lam / scale).max(0.0),
        Criterion::new(1e-5, None),
    )
    .value("lambda_min", lam)
    .value("scale", scale)
    .normalized_by("max(-lambda_min, 0) / (max(Lambda, sqrt|K|)^(r+2) area)"))
}

/// Convergence self-check between basis degrees `D` and `2D`: within 5% of
/// the finer value, or within `1e-6·scale` when that value is near zero.
pub fn eigenvalue_self_check(single: f64, doubled: f64, scale: f64) -> bool {
    (single - doubled).abs() <= (0.05 * doubled.abs()).max(1e-6 * scale)
}

/// Coefficient vector helper for callers building their own fields.
pub fn coefficients(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::SpaceForm;
    use crate::immersion::{cap_family, discretize, perturbed_cap};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    fn cap(sp: &SpaceForm, lambda: f64, theta: f64, res: usize) -> DiscreteImmersion {
        discretize(&cap_family(sp, sp.n, lambda, theta).unwrap(), sp, res).unwrap()
    }

    #[test]
    fn zero_field_has_zero_form() {
        let sp = SpaceForm::euclidean(2);
        let m = cap(&sp, 1.0, FRAC_PI_3, 16);
        let f = AdmissibleField::certify(&m, SurfaceField::constant(&m, 0.0), 1.0).unwrap();
        assert_eq!(quadratic_form(&m, &f, 0).unwrap().value, 0.0);
    }

    #[test]
    fn hemisphere_translation_mode() {
        // x_1 restricted to the unit hemisphere: Neumann, mean zero, and
        // −∫φ(Δφ + 2φ) = 0 since Δx_1 = −2x_1.
        let sp = SpaceForm::euclidean(2);
        let m = cap(&sp, 1.0, FRAC_PI_2, 24);
        let phi = SurfaceField::sample(&m, |nd| nd.point[0]);
        let f = AdmissibleField::certify(&m, phi, 1.0).unwrap();
        assert!(quadratic_form(&m, &f, 0).unwrap().value.abs() < 1e-10);
        // A degree-2 harmonic even in z is strictly positive: x_1 x_2 has
        // −∫φ(Δφ + 2φ) = 4∫φ².
        let phi = SurfaceField::sample(&m, |nd| nd.point[0] * nd.point[1]);
        let mass = m.integrate(&phi.times(&phi).interior);
        let f = AdmissibleField::certify(&m, phi, 1.0).unwrap();
        assert!((quadratic_form(&m, &f, 0).unwrap().value - 4.0 * mass).abs() < 1e-10);
    }

    #[test]
    fn test_functions_vanish_on_caps() {
        for theta in [FRAC_PI_3, FRAC_PI_2, 2.0 * FRAC_PI_3] {
            for n in [2, 3] {
                let sp = SpaceForm::euclidean(n);
                let m = cap(&sp, 1.3, theta, 16);
                for r in 0..n {
                    let f = test_function_euclidean(&m, r).unwrap();
                    let scale = 1.3f64.powi(r as i32) + 1.3f64.powi(r as i32 + 1) * diameter(&m);
                    assert!(f.phi.sup() <= 1e-8 * scale, "sup {}", f.phi.sup());
                    assert!(f.is_admissible());
                }
                let sp = SpaceForm::hyperbolic(n);
                let m = cap(&sp, 1.5, theta, 16);
                assert!(u_integral(&m).unwrap() >= 1e-3 * m.area());
                for r in 0..n {
                    let f = test_function_horoball(&m, r).unwrap();
                    let scale = 1.5f64.powi(r as i32) + 1.5f64.powi(r as i32 + 1) * diameter(&m);
                    assert!(f.phi.sup() <= 1e-8 * scale, "sup {}", f.phi.sup());
                }
            }
        }
    }

    #[test]
    fn non_cmc_and_degenerate_inputs() {
        let sp = SpaceForm::euclidean(2);
        let c = cap_family(&sp, 2, 1.0, FRAC_PI_3).unwrap();
        let p = discretize(&perturbed_cap(&c, 0.05, 2).unwrap(), &sp, 16).unwrap();
        assert!(matches!(test_function_euclidean(&p, 0), Err(Error::Precondition(_))));
        let sp = SpaceForm::hyperbolic(2);
        let flat = cap(&sp, 0.0, FRAC_PI_3, 16);
        assert!(matches!(test_function_horoball(&flat, 0), Err(Error::DegenerateNormalizer(_))));
    }

    #[test]
    fn basis_is_admissible_and_reduction_holds() {
        for sp in [SpaceForm::euclidean(2), SpaceForm::hyperbolic(2), SpaceForm::euclidean(3)] {
            let m = cap(&sp, 1.5, FRAC_PI_3, 16);
            let fields = random_admissible_fields(&m, 4, 5, 11).unwrap();
            for r in 0..sp.n {
                assert!(cap_reduction_defect(&m, r, &fields).unwrap() < 1e-4);
            }
        }
    }

    #[test]
    fn eigenvalues_are_monotone_and_nonnegative() {
        let sp = SpaceForm::euclidean(2);
        let m = cap(&sp, 1.0, FRAC_PI_2, 24);
        let l: Vec<f64> = [3, 5, 8].iter().map(|&d| lowest_eigenvalue(&m, 0, d).unwrap()).collect();
        assert!(l[1] <= l[0] + 1e-10 && l[2] <= l[1] + 1e-10, "{l:?}");
        assert!(l[2] >= -1e-5 * eigenvalue_scale(&m, 0));
        // The translation x_1 is admissible with Q = 0, so λ_min → 0.
        let (single, doubled) = (lowest_eigenvalue(&m, 0, 5).unwrap(), lowest_eigenvalue(&m, 0, 10).unwrap());
        assert!(doubled.abs() < 1e-10);
        assert!(eigenvalue_self_check(single, doubled, eigenvalue_scale(&m, 0)));
        let sp = SpaceForm::hyperbolic(2);
        let m = cap(&sp, 1.5, FRAC_PI_3, 24);
        for r in 0..2 {
            assert!(lowest_eigenvalue(&m, r, 5).unwrap() >= -1e-5 * eigenvalue_scale(&m, r));
        }
    }

    #[test]
    fn gaps_on_caps_and_perturbations() {
        for sp in [SpaceForm::euclidean(2), SpaceForm::hyperbolic(2), SpaceForm::hyperbolic(3)] {
            let c = cap_family(&sp, sp.n, 1.5, FRAC_PI_3).unwrap();
            let m = discretize(&c, &sp, 16).unwrap();
            for r in 0..sp.n {
                let rep = rigidity_gap_report(&m, r).unwrap();
                assert!(rep.passed(), "{:?}", rep.values);
            }
            let p = discretize(&perturbed_cap(&c, 0.05, 2).unwrap(), &sp, 16).unwrap();
            let rep = rigidity_gap_report(&p, 0).unwrap();
            assert!(rep.passed());
            assert!(rep.values["gap_a_max"][0] > 1e-4);
        }
    }

    #[test]
    fn auxiliary_functions_on_horoball_caps() {
        for n in [2, 3] {
            let sp = SpaceForm::hyperbolic(n);
            let m = cap(&sp, 1.5, 2.0 * PI / 3.0, 24);
            for r in 0..n {
                let rep = auxiliary_identity_residuals(&m, r).unwrap();
                assert!(rep.passed(), "{:?}", rep.components);
                assert!(rep.values["Psi_spread"][0] < 1e-8);
            }
        }
        let sp = SpaceForm::hyperbolic(2);
        let m = cap(&sp, 1.5, FRAC_PI_2, 16);
        let rep = auxiliary_identity_residuals(&m, 0).unwrap();
        assert!(rep.components["Phi on boundary"][0] < 1e-14);
    }
}
