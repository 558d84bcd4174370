//! Parametric hypersurfaces with boundary on the support, their
//! discretization into quadrature nodes with full curvature data, and the
//! built-in cap families.
//!
//! Sign conventions: `h_ij = −ḡ(∇̄_{e_i} e_j, ν)` and `∇̄_{e_i} ν = h_ik e_k`.
//! The normal of every built-in surface is the outward one, so round caps
//! have positive principal curvatures.
//!
//! Every built-in surface uses a polar chart `(ψ, ω)` with `ψ` the polar
//! angle measured from the top of a round sphere and `ω ∈ S^{n−1}`. For the
//! caps the boundary sits at `ψ = θ` in both models: with sphere centre at
//! height `c` and radius `ρ`, the cut height `c + ρ cos ψ` equals the support
//! height exactly when `cos ψ = cos θ`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;

use crate::ambient::{dot, Model, SpaceForm};
use crate::grid::{Axis, TensorGrid};
use crate::jet::Jet;
use crate::symfun::{g_symmetric_eigen, newton_sequence, sigma_all};
use crate::{sum, Error, Result};

type JetMap = Arc<dyn Fn(&[Jet]) -> Vec<Jet> + Send + Sync>;
type PointMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// How an embedding supplies parameter derivatives.
#[derive(Clone)]
pub enum Embedding {
    /// Exact derivatives through second-order jets.
    Analytic(JetMap),
    /// Plain map differentiated by 4th-order central differences.
    Numeric { map: PointMap, step: f64 },
}

impl std::fmt::Debug for Embedding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Embedding::Analytic(_) => write!(f, "Analytic"),
            Embedding::Numeric { step, .. } => write!(f, "Numeric {{ step: {step} }}"),
        }
    }
}

/// Point, tangent vectors `∂_i x` (columns) and `∂_i ∂_j x`.
#[derive(Debug, Clone)]
pub struct PointJet {
    pub x: Vec<f64>,
    pub dx: DMatrix<f64>,
    pub ddx: Vec<Vec<Vec<f64>>>,
}

impl Embedding {
    pub fn evaluate(&self, u: &[f64], ambient: usize) -> PointJet {
        let n = u.len();
        match self {
            Embedding::Analytic(f) => {
                let out = f(&Jet::variables(u));
                let x = out.iter().map(|j| j.v).collect();
                let dx = DMatrix::from_fn(ambient, n, |a, i| out[a].d[i]);
                let ddx = (0..n)
                    .map(|i| (0..n).map(|j| out.iter().map(|c| c.dd[i][j]).collect()).collect())
                    .collect();
                PointJet { x, dx, ddx }
            }
            Embedding::Numeric { map, step } => {
                let h = *step;
                let at = |shift: &[(usize, f64)]| {
                    let mut v = u.to_vec();
                    for &(i, s) in shift {
                        v[i] += s * h;
                    }
                    map(&v)
                };
                let x = map(u);
                let first = |i: usize| -> Vec<f64> {
                    let (p2, p1, m1, m2) = (at(&[(i, 2.0)]), at(&[(i, 1.0)]), at(&[(i, -1.0)]), at(&[(i, -2.0)]));
                    (0..ambient).map(|a| (-p2[a] + 8.0 * p1[a] - 8.0 * m1[a] + m2[a]) / (12.0 * h)).collect()
                };
                let cols: Vec<Vec<f64>> = (0..n).map(first).collect();
                let dx = DMatrix::from_fn(ambient, n, |a, i| cols[i][a]);
                let c = [1.0, -8.0, 8.0, -1.0];
                let s = [-2.0, -1.0, 1.0, 2.0];
                let mut ddx = vec![vec![vec![0.0; ambient]; n]; n];
                for i in 0..n {
                    for j in 0..n {
                        let v: Vec<f64> = if i == j {
                            let (p2, p1, m1, m2) = (at(&[(i, 2.0)]), at(&[(i, 1.0)]), at(&[(i, -1.0)]), at(&[(i, -2.0)]));
                            (0..ambient)
                                .map(|a| (-p2[a] + 16.0 * p1[a] - 30.0 * x[a] + 16.0 * m1[a] - m2[a]) / (12.0 * h * h))
                                .collect()
                        } else {
                            let mut acc = vec![0.0; ambient];
                            for (ca, sa) in c.iter().zip(&s) {
                                for (cb, sb) in c.iter().zip(&s) {
                                    let p = at(&[(i, *sa), (j, *sb)]);
                                    for a in 0..ambient {
                                        acc[a] += ca * cb * p[a];
                                    }
                                }
                            }
                            acc.iter().map(|v| v / (144.0 * h * h)).collect()
                        };
                        ddx[i][j] = v;
                    }
                }
                PointJet { x, dx, ddx }
            }
        }
    }
}

/// Metadata identifying a surface family.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Family {
    /// Round cap: sphere of Euclidean radius `radius` centred at height
    /// `center_height` in the model chart, cut at the support.
    Cap { model: Model, lambda: f64, theta: f64, center_height: f64, radius: f64 },
    Perturbed { model: Model, lambda: f64, theta: f64, center_height: f64, radius: f64, amplitude: f64, mode: u32 },
    /// Closed round sphere (no boundary).
    Sphere { model: Model, center_height: f64, radius: f64 },
    Custom,
}

impl Family {
    pub fn lambda(&self) -> Option<f64> {
        match self {
            Family::Cap { lambda, .. } | Family::Perturbed { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match self {
            Family::Cap { theta, .. } | Family::Perturbed { theta, .. } => Some(*theta),
            _ => None,
        }
    }

    pub fn is_umbilical(&self) -> bool {
        matches!(self, Family::Cap { .. } | Family::Sphere { .. })
            || matches!(self, Family::Perturbed { amplitude, .. } if *amplitude == 0.0)
    }
}

/// Parametric hypersurface in a polar chart `(ψ, ω)` with `ψ ∈ (0, Ψ)`.
#[derive(Clone)]
pub struct ParametricPatch {
    pub n: usize,
    pub model: Model,
    /// Upper end `Ψ` of the polar axis.
    pub radial_max: f64,
    /// Whether `ψ = Ψ` is a boundary edge on the support.
    pub has_boundary: bool,
    pub embedding: Embedding,
    /// Any vector on the positive side of the surface, as a function of
    /// the parameter point; fixes the orientation of `ν`.
    pub orientation: PointMap,
    pub family: Family,
}

impl std::fmt::Debug for ParametricPatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParametricPatch")
            .field("n", &self.n)
            .field("model", &self.model)
            .field("radial_max", &self.radial_max)
            .field("has_boundary", &self.has_boundary)
            .field("embedding", &self.embedding)
            .field("family", &self.family)
            .finish()
    }
}

fn sphere_direction_jets(angles: &[Jet]) -> Vec<Jet> {
    match angles.len() {
        1 => vec![angles[0].cos(), angles[0].sin()],
        2 => {
            let (a, b) = (angles[0], angles[1]);
            vec![a.sin() * b.cos(), a.sin() * b.sin(), a.cos()]
        }
        _ => unreachable!("polar charts are implemented for n = 2, 3"),
    }
}

/// `ω(u_1, …)` for the angular parameters of a polar chart.
pub fn sphere_direction(angles: &[f64]) -> Vec<f64> {
    match angles.len() {
        1 => vec![angles[0].cos(), angles[0].sin()],
        2 => vec![angles[0].sin() * angles[1].cos(), angles[0].sin() * angles[1].sin(), angles[0].cos()],
        _ => unreachable!("polar charts are implemented for n = 2, 3"),
    }
}

fn round_sphere_jets(u: &[Jet], center_height: f64, radius: f64) -> (Vec<Jet>, Vec<Jet>) {
    let psi = u[0];
    let omega = sphere_direction_jets(&u[1..]);
    let (s, c) = (psi.sin(), psi.cos());
    let mut normal: Vec<Jet> = omega.iter().map(|w| s * *w).collect();
    normal.push(c);
    let mut x: Vec<Jet> = normal.iter().map(|v| *v * radius).collect();
    let last = x.len() - 1;
    x[last] = x[last] + center_height;
    (x, normal)
}

fn outward_hint(u: &[f64]) -> Vec<f64> {
    let omega = sphere_direction(&u[1..]);
    let mut v: Vec<f64> = omega.iter().map(|w| u[0].sin() * w).collect();
    v.push(u[0].cos());
    v
}

fn check_dim(n: usize) -> Result<()> {
    if !(2..=3).contains(&n) {
        return Err(Error::Argument(format!("built-in families support n = 2 or 3, got {n}")));
    }
    Ok(())
}

/// Centre height and Euclidean radius of the round cap with curvature `Λ`
/// and contact angle `θ` in the model chart.
pub fn cap_dictionary(space: &SpaceForm, lambda: f64, theta: f64) -> Result<(f64, f64)> {
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(Error::Construction(format!("contact angle must lie in (0, π), got {theta}")));
    }
    match space.model {
        Model::Euclidean => {
            if !(lambda > 0.0) {
                return Err(Error::Construction(format!("Euclidean caps need Λ > 0, got {lambda}")));
            }
            Ok((-theta.cos() / lambda, 1.0 / lambda))
        }
        Model::Hyperbolic => {
            // A Euclidean sphere with centre height c and radius ρ has
            // constant hyperbolic principal curvature c/ρ for the outward
            // normal and meets {x_{n+1} = 1} at angle θ with
            // cos θ = (1 − c)/ρ. Solving: ρ = 1/(Λ + cos θ), c = Λρ.
            let denom = lambda + theta.cos();
            if !(denom > 1e-12) {
                return Err(Error::Construction(format!(
                    "no horoball cap with Λ = {lambda} and θ = {theta}: needs Λ + cos θ > 0"
                )));
            }
            let radius = 1.0 / denom;
            let c = lambda * radius;
            if c + radius <= 1.0 {
                return Err(Error::Construction("cap does not reach above the horosphere".into()));
            }
            Ok((c, radius))
        }
    }
}

/// Round cap with curvature `Λ` meeting the support at angle `θ`.
pub fn cap_family(space: &SpaceForm, n: usize, lambda: f64, theta: f64) -> Result<ParametricPatch> {
    check_dim(n)?;
    let (c, rho) = cap_dictionary(space, lambda, theta)?;
    let embedding = Embedding::Analytic(Arc::new(move |u: &[Jet]| round_sphere_jets(u, c, rho).0));
    let patch = ParametricPatch {
        n,
        model: space.model,
        radial_max: theta,
        has_boundary: true,
        embedding,
        orientation: Arc::new(outward_hint),
        family: Family::Cap { model: space.model, lambda, theta, center_height: c, radius: rho },
    };
    if space.model == Model::Hyperbolic {
        let m = discretize(&patch, &SpaceForm::new(space.model, n)?, 12)?;
        let spread = m.umbilicity_spread();
        if spread > 1e-8 * (1.0 + lambda.abs()) {
            return Err(Error::Construction(format!("constructed cap is not umbilical (spread {spread:e})")));
        }
    }
    Ok(patch)
}

/// Closed round sphere (no boundary), used for flow checks.
pub fn round_sphere(space: &SpaceForm, n: usize, center_height: f64, radius: f64) -> Result<ParametricPatch> {
    check_dim(n)?;
    if space.model == Model::Hyperbolic && center_height - radius <= 0.0 {
        return Err(Error::Construction("sphere leaves the upper half-space".into()));
    }
    let embedding = Embedding::Analytic(Arc::new(move |u: &[Jet]| round_sphere_jets(u, center_height, radius).0));
    Ok(ParametricPatch {
        n,
        model: space.model,
        radial_max: std::f64::consts::PI,
        has_boundary: false,
        embedding,
        orientation: Arc::new(outward_hint),
        family: Family::Sphere { model: space.model, center_height, radius },
    })
}

/// Normal-graph perturbation `x + a χ Y_m ν` of a round cap. The cutoff
/// `χ = (1 − s²)²`, `s = ψ/θ`, vanishes to second order on the boundary and
/// `Y_m = Re((s ω_1 + i s ω_2)^m)` is smooth through the pole.
pub fn perturbed_cap(cap: &ParametricPatch, amplitude: f64, mode: u32) -> Result<ParametricPatch> {
    let Family::Cap { model, lambda, theta, center_height, radius } = cap.family.clone() else {
        return Err(Error::Construction("perturbed_cap needs a round cap".into()));
    };
    let bound = 0.1 / lambda.abs().max(1e-12);
    if amplitude.abs() > bound {
        return Err(Error::Construction(format!("|amplitude| must be <= 0.1/Λ = {bound}")));
    }
    let n = cap.n;
    let embedding = Embedding::Analytic(Arc::new(move |u: &[Jet]| {
        let (x, normal_e) = round_sphere_jets(u, center_height, radius);
        let s = u[0] / theta;
        let omega = sphere_direction_jets(&u[1..]);
        let (a, b) = (s * omega[0], s * omega[1]);
        let (mut re, mut im) = (Jet::constant(1.0), Jet::constant(0.0));
        for _ in 0..mode {
            let nre = re * a - im * b;
            im = re * b + im * a;
            re = nre;
        }
        let one_minus = 1.0 - s * s;
        let bump = one_minus * one_minus * re * amplitude;
        let scale = match model {
            Model::Euclidean => Jet::constant(1.0),
            Model::Hyperbolic => x[x.len() - 1],
        };
        x.iter().zip(&normal_e).map(|(xi, ni)| *xi + bump * scale * *ni).collect()
    }));
    let patch = ParametricPatch {
        n,
        model,
        radial_max: theta,
        has_boundary: true,
        embedding,
        orientation: Arc::new(outward_hint),
        family: Family::Perturbed { model, lambda, theta, center_height, radius, amplitude, mode },
    };
    discretize(&patch, &SpaceForm::new(model, n)?, 10)
        .map_err(|e| Error::Construction(format!("perturbation breaks the immersion: {e}")))?;
    Ok(patch)
}

/// Scenario strings: `euclid-cap:n=2,lambda=1,theta=1.0472`,
/// `horoball-cap:n=2,lambda=2,theta=1.5708`,
/// `perturbed:model=euclid,n=2,lambda=1,theta=1.5708,amp=0.05,mode=2`,
/// `sphere:model=euclid,n=2,radius=1,center=0`.
pub fn parse_scenario(s: &str) -> Result<(SpaceForm, ParametricPatch)> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let mut kv = std::collections::BTreeMap::new();
    for part in rest.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("scenario entry '{part}' is not key=value")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let num = |k: &str, default: Option<f64>| -> Result<f64> {
        match kv.get(k) {
            Some(v) => v.parse::<f64>().map_err(|_| Error::Usage(format!("scenario key {k}: bad number '{v}'"))),
            None => default.ok_or_else(|| Error::Usage(format!("scenario '{s}' needs key {k}"))),
        }
    };
    let n = num("n", Some(2.0))? as usize;
    match kind {
        "euclid-cap" | "horoball-cap" => {
            let model = if kind == "euclid-cap" { Model::Euclidean } else { Model::Hyperbolic };
            let space = SpaceForm::new(model, n)?;
            let patch = cap_family(&space, n, num("lambda", Some(1.0))?, num("theta", Some(std::f64::consts::FRAC_PI_2))?)?;
            Ok((space, patch))
        }
        "perturbed" => {
            let model = Model::parse(kv.get("model").map(String::as_str).unwrap_or("euclid"))?;
            let space = SpaceForm::new(model, n)?;
            let cap = cap_family(&space, n, num("lambda", Some(1.0))?, num("theta", Some(std::f64::consts::FRAC_PI_2))?)?;
            let patch = perturbed_cap(&cap, num("amp", Some(0.05))?, num("mode", Some(2.0))? as u32)?;
            Ok((space, patch))
        }
        "sphere" => {
            let model = Model::parse(kv.get("model").map(String::as_str).unwrap_or("euclid"))?;
            let space = SpaceForm::new(model, n)?;
            let default_c = if model == Model::Hyperbolic { 3.0 } else { 0.0 };
            let patch = round_sphere(&space, n, num("center", Some(default_c))?, num("radius", Some(1.0))?)?;
            Ok((space, patch))
        }
        other => Err(Error::Usage(format!("unknown scenario kind '{other}'"))),
    }
}

/// Geometry at one sample point.
#[derive(Debug, Clone)]
pub struct NodeGeometry {
    pub param: Vec<f64>,
    pub point: Vec<f64>,
    /// Columns `e_i = ∂_i x`.
    pub tangents: DMatrix<f64>,
    pub metric: DMatrix<f64>,
    pub metric_inv: DMatrix<f64>,
    /// `ḡ`-unit normal.
    pub normal: Vec<f64>,
    pub second_form: DMatrix<f64>,
    /// Mixed tensor `S^i_j = g^{ik} h_kj`.
    pub shape: DMatrix<f64>,
    pub curvatures: Vec<f64>,
    /// `σ_0..σ_n`.
    pub sigmas: Vec<f64>,
    /// `christoffel[k][(i, j)] = Γ^k_ij` of the induced metric.
    pub christoffel: Vec<DMatrix<f64>>,
    /// Quadrature weight times `sqrt(det g)`.
    pub weight: f64,
}

impl NodeGeometry {
    pub fn n(&self) -> usize {
        self.metric.nrows()
    }

    /// `σ_r` with the zero convention above `n`.
    pub fn sigma(&self, r: usize) -> f64 {
        self.sigmas.get(r).copied().unwrap_or(0.0)
    }

    pub fn mean_curvature(&self, r: usize) -> f64 {
        let n = self.n();
        if r > n {
            return 0.0;
        }
        self.sigma(r) / crate::binomial(n as i64, r as i64)
    }

    /// `P_0..P_{n-1}` as mixed tensors.
    pub fn newton_tensors(&self) -> Vec<DMatrix<f64>> {
        newton_sequence(&self.shape, &self.sigmas, self.n())
    }

    /// Ambient vector `Σ_i c^i e_i`.
    pub fn push_forward(&self, coords: &[f64]) -> Vec<f64> {
        let d = self.point.len();
        (0..d).map(|a| (0..coords.len()).map(|i| self.tangents[(a, i)] * coords[i]).sum()).collect()
    }
}

/// Contact data at one boundary node.
#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    pub node: NodeGeometry,
    /// Outward conormal `μ` as an ambient vector and in tangent coordinates.
    pub conormal: Vec<f64>,
    pub conormal_coords: Vec<f64>,
    pub support_tangent_normal: Vec<f64>,
    pub support_normal: Vec<f64>,
    pub theta: f64,
    /// Face quadrature weight times the boundary length density.
    pub line_weight: f64,
    pub h_mu_mu: f64,
    /// `max_α |h(ê_α, μ)|` over unit boundary tangents.
    pub h_tangent_mu: f64,
    /// Second fundamental form of `∂M` in `∂B` with respect to `ν̄`.
    pub boundary_form: DMatrix<f64>,
    pub boundary_metric: DMatrix<f64>,
    /// `σ_0..σ_{n−1}` of `∂M ⊂ ∂B`.
    pub boundary_sigmas: Vec<f64>,
    /// `P_r^{μμ}` for `r = 0..n−1`.
    pub newton_mu: Vec<f64>,
    /// Deviation of the contact frame from orthonormality.
    pub frame_residual: f64,
}

/// Sampled hypersurface with interior nodes on a tensor grid and boundary
/// nodes on its upper radial face.
#[derive(Debug, Clone)]
pub struct DiscreteImmersion {
    pub space: SpaceForm,
    pub grid: TensorGrid,
    pub nodes: Vec<NodeGeometry>,
    pub face: Option<TensorGrid>,
    pub boundary: Vec<BoundaryTrace>,
    pub resolution: usize,
    pub family: Family,
    pub radial_max: f64,
}

/// Nodes per axis for a resolution level. Caps use a radial axis ending
/// on the boundary; closed spheres a polar axis in `ψ ∈ (0, π)`.
pub fn grid_for(n: usize, radial_max: f64, has_boundary: bool, resolution: usize) -> TensorGrid {
    let two_pi = 2.0 * std::f64::consts::PI;
    let even = resolution + resolution % 2;
    // For n = 3 the two polar-type axes use half the nodes.
    let polar = if n == 3 { (resolution / 2).max(4) } else { resolution };
    let mut axes = vec![if has_boundary { Axis::radial(radial_max, polar, n) } else { Axis::polar(polar, (n - 1) as u32) }];
    if n == 3 {
        axes.push(Axis::polar(polar, 1));
    }
    axes.push(Axis::periodic(0.0, two_pi, even));
    TensorGrid::new(axes)
}

fn normal_direction(tangents: &DMatrix<f64>) -> Vec<f64> {
    // Generalized cross product via cofactors of the (n+1)×n frame.
    let d = tangents.nrows();
    let n = tangents.ncols();
    (0..d)
        .map(|a| {
            let rows: Vec<usize> = (0..d).filter(|&b| b != a).collect();
            let minor = DMatrix::from_fn(n, n, |i, j| tangents[(rows[i], j)]);
            let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
            sign * minor.determinant()
        })
        .collect()
}

/// Geometry from a point jet; also returns `∇̄_{e_i} e_j`.
pub fn node_geometry(
    space: &SpaceForm,
    param: &[f64],
    jet: &PointJet,
    hint: &[f64],
    quad_weight: f64,
) -> Result<(NodeGeometry, Vec<Vec<Vec<f64>>>)> {
    let n = jet.dx.ncols();
    let d = n + 1;
    space.validate_point(&jet.x).map_err(|e| Error::Discretization(format!("node {param:?}: {e}")))?;
    let p = &jet.x;
    let cf = space.conformal_factor(p);
    let metric = DMatrix::from_fn(n, n, |i, j| cf * jet.dx.column(i).dot(&jet.dx.column(j)));
    let det = metric.determinant();
    if !(det > 1e-12 * cf.powi(n as i32)) || !det.is_finite() {
        return Err(Error::Discretization(format!("degenerate metric (det {det:e}) at parameter point {param:?}")));
    }
    let metric_inv = Cholesky::new(metric.clone())
        .ok_or_else(|| Error::Discretization(format!("metric not SPD at parameter point {param:?}")))?
        .inverse();
    let mut ne = normal_direction(&jet.dx);
    let len = dot(&ne, &ne).sqrt();
    if dot(&ne, hint) < 0.0 {
        ne.iter_mut().for_each(|v| *v = -*v);
    }
    let normal: Vec<f64> = ne.iter().map(|v| v / (len * cf.sqrt())).collect();
    let tangent = |i: usize| -> Vec<f64> { jet.dx.column(i).iter().copied().collect() };
    let mut conn = vec![vec![vec![0.0; d]; n]; n];
    for i in 0..n {
        for j in 0..n {
            let g = space.christoffel(p, &tangent(i), &tangent(j));
            conn[i][j] = (0..d).map(|a| jet.ddx[i][j][a] + g[a]).collect();
        }
    }
    let second_form = DMatrix::from_fn(n, n, |i, j| {
        let v = 0.5 * (space.inner(p, &conn[i][j], &normal) + space.inner(p, &conn[j][i], &normal));
        -v
    });
    let lower: Vec<DMatrix<f64>> = (0..n)
        .map(|l| DMatrix::from_fn(n, n, |i, j| space.inner(p, &conn[i][j], &tangent(l))))
        .collect();
    let christoffel: Vec<DMatrix<f64>> = (0..n)
        .map(|k| DMatrix::from_fn(n, n, |i, j| (0..n).map(|l| metric_inv[(k, l)] * lower[l][(i, j)]).sum()))
        .collect();
    let shape = &metric_inv * &second_form;
    let (curvatures, _) = g_symmetric_eigen(&metric, &second_form);
    let sigmas = sigma_all(&curvatures);
    Ok((
        NodeGeometry {
            param: param.to_vec(),
            point: p.clone(),
            tangents: jet.dx.clone(),
            metric,
            metric_inv,
            normal,
            second_form,
            shape,
            curvatures,
            sigmas,
            christoffel,
            weight: quad_weight * det.sqrt(),
        },
        conn,
    ))
}

/// Contact frame and boundary curvature data at a boundary node.
pub fn boundary_trace(
    space: &SpaceForm,
    node: NodeGeometry,
    conn: &[Vec<Vec<f64>>],
    face_weight: f64,
) -> Result<BoundaryTrace> {
    let n = node.n();
    let p = node.point.clone();
    let gi = &node.metric_inv;
    let norm = gi[(0, 0)].sqrt();
    let conormal_coords: Vec<f64> = (0..n).map(|i| gi[(0, i)] / norm).collect();
    let conormal = node.push_forward(&conormal_coords);
    let support_normal = space.support_normal(&p);
    let cos_t = -space.inner(&p, &node.normal, &support_normal);
    let sin_t = space.inner(&p, &conormal, &support_normal);
    let theta = sin_t.atan2(cos_t);
    let nu_bar: Vec<f64> = conormal.iter().zip(&node.normal).map(|(m, v)| cos_t * m + sin_t * v).collect();
    let mut frame_residual = (cos_t * cos_t + sin_t * sin_t - 1.0).abs();
    frame_residual = frame_residual.max(space.inner(&p, &nu_bar, &support_normal).abs());
    frame_residual = frame_residual.max((space.inner(&p, &nu_bar, &nu_bar) - 1.0).abs());
    for a in 0..p.len() {
        let mu_rebuilt = sin_t * support_normal[a] + cos_t * nu_bar[a];
        let nu_rebuilt = -cos_t * support_normal[a] + sin_t * nu_bar[a];
        let scale = space.conformal_factor(&p).sqrt();
        frame_residual = frame_residual.max(scale * (mu_rebuilt - conormal[a]).abs());
        frame_residual = frame_residual.max(scale * (nu_rebuilt - node.normal[a]).abs());
    }
    let h = &node.second_form;
    let h_mu: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[(i, j)] * conormal_coords[j]).sum()).collect();
    let h_mu_mu: f64 = (0..n).map(|i| h_mu[i] * conormal_coords[i]).sum();
    let h_tangent_mu = (1..n).map(|a| (h_mu[a] / node.metric[(a, a)].sqrt()).abs()).fold(0.0, f64::max);
    let m = n - 1;
    let boundary_metric = DMatrix::from_fn(m, m, |a, b| node.metric[(a + 1, b + 1)]);
    let boundary_form = DMatrix::from_fn(m, m, |a, b| {
        let v = 0.5 * (space.inner(&p, &conn[a + 1][b + 1], &nu_bar) + space.inner(&p, &conn[b + 1][a + 1], &nu_bar));
        -v
    });
    let (bk, _) = g_symmetric_eigen(&boundary_metric, &boundary_form);
    let boundary_sigmas = sigma_all(&bk);
    let mu_lower: Vec<f64> = (0..n).map(|i| (0..n).map(|j| node.metric[(i, j)] * conormal_coords[j]).sum()).collect();
    let newton_mu = node
        .newton_tensors()
        .iter()
        .map(|pr| {
            (0..n)
                .map(|i| mu_lower[i] * (0..n).map(|j| pr[(i, j)] * conormal_coords[j]).sum::<f64>())
                .sum()
        })
        .collect();
    let line_weight = face_weight * boundary_metric.determinant().sqrt();
    Ok(BoundaryTrace {
        node,
        conormal,
        conormal_coords,
        support_tangent_normal: nu_bar,
        support_normal,
        theta,
        line_weight,
        h_mu_mu,
        h_tangent_mu,
        boundary_form,
        boundary_metric,
        boundary_sigmas,
        newton_mu,
        frame_residual,
    })
}

fn validate(space: &SpaceForm, nodes: &[NodeGeometry], boundary: &[BoundaryTrace]) -> Result<()> {
    for node in nodes.iter().chain(boundary.iter().map(|b| &b.node)) {
        let p = &node.point;
        let nn = space.inner(p, &node.normal, &node.normal);
        let mut worst = (nn - 1.0).abs();
        for i in 0..node.n() {
            let e: Vec<f64> = node.tangents.column(i).iter().copied().collect();
            let ee = space.inner(p, &e, &e).sqrt();
            worst = worst.max((space.inner(p, &node.normal, &e) / ee).abs());
        }
        if worst > 1e-10 {
            return Err(Error::Discretization(format!(
                "normal frame defect {worst:e} at parameter point {:?}",
                node.param
            )));
        }
    }
    for b in boundary {
        let height = b.node.point[space.n] - space.support_height();
        if height.abs() > 1e-10 {
            return Err(Error::Discretization(format!(
                "boundary node {:?} is off the support by {height:e}",
                b.node.param
            )));
        }
        if b.frame_residual > 1e-10 {
            return Err(Error::Discretization(format!(
                "contact frame defect {:e} at boundary node {:?}",
                b.frame_residual, b.node.param
            )));
        }
    }
    Ok(())
}

/// Samples the patch on a tensor grid at the given resolution.
pub fn discretize(patch: &ParametricPatch, space: &SpaceForm, resolution: usize) -> Result<DiscreteImmersion> {
    if resolution < 8 {
        return Err(Error::Argument(format!("resolution must be >= 8, got {resolution}")));
    }
    if space.model != patch.model || space.n != patch.n {
        return Err(Error::Argument("patch and space form disagree on model or dimension".into()));
    }
    let grid = grid_for(patch.n, patch.radial_max, patch.has_boundary, resolution);
    let d = patch.n + 1;
    let nodes: Vec<NodeGeometry> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let u = grid.point(i);
            let jet = patch.embedding.evaluate(&u, d);
            node_geometry(space, &u, &jet, &(patch.orientation)(&u), grid.weight(i)).map(|r| r.0)
        })
        .collect::<Result<_>>()?;
    let (face, boundary) = if patch.has_boundary {
        let face = grid.face();
        let boundary: Vec<BoundaryTrace> = (0..face.len())
            .into_par_iter()
            .map(|j| {
                let mut u = vec![patch.radial_max];
                u.extend(face.point(j));
                let jet = patch.embedding.evaluate(&u, d);
                let (node, conn) = node_geometry(space, &u, &jet, &(patch.orientation)(&u), 0.0)?;
                boundary_trace(space, node, &conn, face.weight(j))
            })
            .collect::<Result<_>>()?;
        (Some(face), boundary)
    } else {
        (None, Vec::new())
    };
    validate(space, &nodes, &boundary)?;
    Ok(DiscreteImmersion {
        space: *space,
        grid,
        nodes,
        face,
        boundary,
        resolution,
        family: patch.family.clone(),
        radial_max: patch.radial_max,
    })
}

impl DiscreteImmersion {
    pub fn n(&self) -> usize {
        self.space.n
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn has_boundary(&self) -> bool {
        self.face.is_some()
    }

    /// `Σ w_i f_i` over interior nodes.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let t: Vec<f64> = self.nodes.iter().zip(values).map(|(n, v)| n.weight * v).collect();
        sum::pairwise(&t)
    }

    /// `Σ w_j f_j` over boundary nodes.
    pub fn integrate_boundary(&self, values: &[f64]) -> f64 {
        let t: Vec<f64> = self.boundary.iter().zip(values).map(|(b, v)| b.line_weight * v).collect();
        sum::pairwise(&t)
    }

    pub fn area(&self) -> f64 {
        self.integrate(&vec![1.0; self.len()])
    }

    pub fn boundary_length(&self) -> f64 {
        self.integrate_boundary(&vec![1.0; self.boundary.len()])
    }

    /// `max_i κ_i − min_i κ_i` over all nodes.
    pub fn umbilicity_spread(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.curvatures[n.curvatures.len() - 1] - n.curvatures[0])
            .fold(0.0, f64::max)
    }

    /// Relative spread `(max − min)/max|·|` of `σ_r` over interior nodes.
    pub fn sigma_spread(&self, r: usize) -> f64 {
        let vals: Vec<f64> = self.nodes.iter().map(|n| n.sigma(r)).collect();
        let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
        let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
        let scale = hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE);
        (hi - lo) / scale
    }

    /// Largest boundary deviation of the measured contact angle from its mean.
    pub fn contact_angle_spread(&self) -> f64 {
        if self.boundary.is_empty() {
            return 0.0;
        }
        let mean = self.boundary.iter().map(|b| b.theta).sum::<f64>() / self.boundary.len() as f64;
        self.boundary.iter().map(|b| (b.theta - mean).abs()).fold(0.0, f64::max)
    }

    /// Mean contact angle over boundary nodes.
    pub fn contact_angle(&self) -> Option<f64> {
        if self.boundary.is_empty() {
            return None;
        }
        Some(self.boundary.iter().map(|b| b.theta).sum::<f64>() / self.boundary.len() as f64)
    }

    pub fn max_principal_direction_defect(&self) -> f64 {
        self.boundary.iter().map(|b| b.h_tangent_mu).fold(0.0, f64::max)
    }

    /// Sectional curvature of the `(e_0, e_1)` plane intrinsically (from
    /// differentiated Christoffel symbols) versus the Gauss equation; the
    /// maximum absolute difference over nodes with `ψ` in the middle half of
    /// its range.
    pub fn gauss_equation_defect(&self) -> f64 {
        let n = self.n();
        let gam = |l: usize, i: usize, j: usize| -> Vec<f64> { self.nodes.iter().map(|nd| nd.christoffel[l][(i, j)]).collect() };
        let mut worst: f64 = 0.0;
        // R(∂_0, ∂_1)∂_1 = Σ_l R^l e_l with
        // R^l = ∂_0 Γ^l_11 − ∂_1 Γ^l_01 + Γ^l_0m Γ^m_11 − Γ^l_1m Γ^m_01.
        let mut comps = Vec::new();
        for l in 0..n {
            let g = &self.grid;
            let d0 = g.derivative_with_parity(&gam(l, 1, 1), 0, g.component_parity(0, &[l, 1, 1]));
            let d1 = g.derivative_with_parity(&gam(l, 0, 1), 1, g.component_parity(1, &[l, 0, 1]));
            comps.push((d0, d1));
        }
        for (idx, nd) in self.nodes.iter().enumerate() {
            let s = nd.param[0] / self.radial_max;
            if !(0.25..=0.75).contains(&s) {
                continue;
            }
            let mut rl = vec![0.0; n];
            for l in 0..n {
                let mut v = comps[l].0[idx] - comps[l].1[idx];
                for m in 0..n {
                    v += nd.christoffel[l][(0, m)] * nd.christoffel[m][(1, 1)] - nd.christoffel[l][(1, m)] * nd.christoffel[m][(0, 1)];
                }
                rl[l] = v;
            }
            let g = &nd.metric;
            let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(0, 1)];
            let r0101: f64 = (0..n).map(|l| g[(0, l)] * rl[l]).sum();
            let intrinsic = r0101 / det;
            let h = &nd.second_form;
            let gauss = self.space.curvature() + (h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(0, 1)]) / det;
            worst = worst.max((intrinsic - gauss).abs());
        }
        worst
    }

    /// Builds a surface from sampled positions on an existing grid layout,
    /// with derivatives by collocation. `reference` supplies the node
    /// layout and the orientation of the normal.
    pub fn from_positions(reference: &DiscreteImmersion, positions: &[Vec<f64>]) -> Result<DiscreteImmersion> {
        let space = reference.space;
        let grid = &reference.grid;
        let n = space.n;
        let d = n + 1;
        if positions.len() != grid.len() {
            return Err(Error::Argument("position count does not match the grid".into()));
        }
        let coord = |a: usize| -> Vec<f64> { positions.iter().map(|p| p[a]).collect() };
        let coords: Vec<Vec<f64>> = (0..d).map(coord).collect();
        let first: Vec<Vec<Vec<f64>>> = (0..n).map(|i| coords.iter().map(|c| grid.derivative(c, i)).collect()).collect();
        let second: Vec<Vec<Vec<Vec<f64>>>> = (0..n)
            .map(|i| (0..n).map(|j| coords.iter().map(|c| grid.second_derivative(c, i, j)).collect()).collect())
            .collect();
        let nodes: Vec<NodeGeometry> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let jet = PointJet {
                    x: positions[k].clone(),
                    dx: DMatrix::from_fn(d, n, |a, i| first[i][a][k]),
                    ddx: (0..n).map(|i| (0..n).map(|j| (0..d).map(|a| second[i][j][a][k]).collect()).collect()).collect(),
                };
                let r = &reference.nodes[k];
                let hint: Vec<f64> = r.normal.clone();
                node_geometry(&space, &r.param, &jet, &hint, grid.weight(k)).map(|x| x.0)
            })
            .collect::<Result<_>>()?;
        let boundary = match &reference.face {
            None => Vec::new(),
            Some(face) => {
                // Radial jets at the boundary face, then face derivatives.
                let mut radial = Vec::new();
                for c in &coords {
                    radial.push(grid.restrict_upper(c, 2)?);
                }
                let value = |a: usize| radial[a][0].clone();
                let d0 = |a: usize| radial[a][1].clone();
                let d00 = |a: usize| radial[a][2].clone();
                let mut face_first: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
                let mut face_second: Vec<Vec<Vec<Vec<f64>>>> = vec![vec![Vec::new(); n]; n];
                face_first[0] = (0..d).map(d0).collect();
                face_second[0][0] = (0..d).map(d00).collect();
                for i in 1..n {
                    face_first[i] = (0..d).map(|a| face.derivative(&value(a), i - 1)).collect();
                    let mixed: Vec<Vec<f64>> = (0..d).map(|a| face.derivative(&d0(a), i - 1)).collect();
                    face_second[0][i] = mixed.clone();
                    face_second[i][0] = mixed;
                    for j in 1..n {
                        face_second[i][j] = (0..d).map(|a| face.second_derivative(&value(a), i - 1, j - 1)).collect();
                    }
                }
                (0..face.len())
                    .into_par_iter()
                    .map(|k| {
                        let jet = PointJet {
                            x: (0..d).map(|a| radial[a][0][k]).collect(),
                            dx: DMatrix::from_fn(d, n, |a, i| face_first[i][a][k]),
                            ddx: (0..n)
                                .map(|i| (0..n).map(|j| (0..d).map(|a| face_second[i][j][a][k]).collect()).collect())
                                .collect(),
                        };
                        let r = &reference.boundary[k].node;
                        let (node, conn) = node_geometry(&space, &r.param, &jet, &r.normal, 0.0)?;
                        boundary_trace(&space, node, &conn, face.weight(k))
                    })
                    .collect::<Result<_>>()?
            }
        };
        Ok(DiscreteImmersion {
            space,
            grid: grid.clone(),
            nodes,
            face: reference.face.clone(),
            boundary,
            resolution: reference.resolution,
            family: Family::Custom,
            radial_max: reference.radial_max,
        })
    }

    pub fn positions(&self) -> Vec<Vec<f64>> {
        self.nodes.iter().map(|n| n.point.clone()).collect()
    }
}

/// `∫_M f dA` for a field on the same node set.
pub fn integrate_m(m: &DiscreteImmersion, f: &crate::operators::SurfaceField) -> Result<f64> {
    if f.interior.len() != m.len() {
        return Err(Error::Argument("field node set does not match the immersion".into()));
    }
    Ok(m.integrate(&f.interior))
}

/// `∫_{∂M} f ds` for a field on the same node set.
pub fn integrate_boundary(m: &DiscreteImmersion, f: &crate::operators::SurfaceField) -> Result<f64> {
    if f.boundary.len() != m.boundary.len() {
        return Err(Error::Argument("field boundary node set does not match the immersion".into()));
    }
    Ok(m.integrate_boundary(&f.boundary))
}

/// `|S^{n−1}|`.
pub fn sphere_measure(dim_sphere: usize) -> f64 {
    match dim_sphere {
        1 => 2.0 * std::f64::consts::PI,
        2 => 4.0 * std::f64::consts::PI,
        _ => unimplemented!("only S^1 and S^2 are needed"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    #[test]
    fn hemisphere_examples() {
        let sp = SpaceForm::euclidean(2);
        let cap = cap_family(&sp, 2, 1.0, FRAC_PI_2).unwrap();
        let Family::Cap { center_height, .. } = cap.family else { unreachable!() };
        assert!(center_height.abs() < 1e-15);
        let m = discretize(&cap, &sp, 32).unwrap();
        assert!((m.area() - 2.0 * PI).abs() < 1e-8);
        assert!((m.boundary_length() - 2.0 * PI).abs() < 1e-8);
        for nd in &m.nodes {
            assert!((nd.curvatures[0] - 1.0).abs() < 1e-8 && (nd.curvatures[1] - 1.0).abs() < 1e-8);
        }
        for b in &m.boundary {
            assert!((b.theta - FRAC_PI_2).abs() < 1e-12);
            for a in 0..3 {
                assert!((b.conormal[a] - b.support_normal[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn third_angle_cap_geometry() {
        let sp = SpaceForm::euclidean(2);
        let cap = cap_family(&sp, 2, 1.0, FRAC_PI_3).unwrap();
        let Family::Cap { center_height, .. } = cap.family else { unreachable!() };
        assert!((center_height + 0.5).abs() < 1e-15);
        let m = discretize(&cap, &sp, 16).unwrap();
        for b in &m.boundary {
            let r = (b.node.point[0].powi(2) + b.node.point[1].powi(2)).sqrt();
            assert!((r - 3f64.sqrt() / 2.0).abs() < 1e-14);
            assert!((b.theta - FRAC_PI_3).abs() < 1e-12);
        }
    }

    #[test]
    fn horoball_cap_is_umbilical() {
        let sp = SpaceForm::hyperbolic(2);
        for (lambda, theta) in [(2.0, FRAC_PI_3), (1.5, FRAC_PI_2), (0.7, 2.0 * FRAC_PI_3), (1.0, 1.0)] {
            let cap = cap_family(&sp, 2, lambda, theta).unwrap();
            let m = discretize(&cap, &sp, 24).unwrap();
            assert!(m.umbilicity_spread() <= 1e-8);
            for nd in &m.nodes {
                assert!((nd.curvatures[0] - lambda).abs() < 1e-9);
            }
            assert!(m.contact_angle_spread() < 1e-10);
            assert!((m.contact_angle().unwrap() - theta).abs() < 1e-10);
        }
    }

    #[test]
    fn incompatible_horoball_cap_rejected() {
        let sp = SpaceForm::hyperbolic(2);
        assert!(matches!(cap_family(&sp, 2, 0.0, 2.0), Err(Error::Construction(_))));
        assert!(matches!(cap_family(&SpaceForm::euclidean(2), 2, -1.0, 1.0), Err(Error::Construction(_))));
    }

    #[test]
    fn perturbation_examples() {
        let sp = SpaceForm::euclidean(2);
        let cap = cap_family(&sp, 2, 1.0, FRAC_PI_2).unwrap();
        let flat = discretize(&perturbed_cap(&cap, 0.0, 2).unwrap(), &sp, 16).unwrap();
        let base = discretize(&cap, &sp, 16).unwrap();
        for (a, b) in flat.nodes.iter().zip(&base.nodes) {
            assert_eq!(a.point, b.point);
        }
        let bumped = discretize(&perturbed_cap(&cap, 0.05, 2).unwrap(), &sp, 24).unwrap();
        assert!(bumped.umbilicity_spread() > 1e-3);
        for b in &bumped.boundary {
            assert!((b.theta - FRAC_PI_2).abs() < 1e-10);
        }
        assert!(perturbed_cap(&cap, 0.2, 2).is_err());
    }

    #[test]
    fn numeric_embedding_matches_analytic() {
        let sp = SpaceForm::euclidean(2);
        let cap = cap_family(&sp, 2, 1.0, FRAC_PI_3).unwrap();
        let map: PointMap = Arc::new(|u: &[f64]| {
            let w = sphere_direction(&u[1..]);
            vec![u[0].sin() * w[0], u[0].sin() * w[1], u[0].cos() - 0.5]
        });
        let numeric = ParametricPatch { embedding: Embedding::Numeric { map, step: 1e-3 }, family: Family::Custom, ..cap.clone() };
        let a = discretize(&cap, &sp, 12).unwrap();
        let b = discretize(&numeric, &sp, 12).unwrap();
        for (x, y) in a.nodes.iter().zip(&b.nodes) {
            assert!((&x.second_form - &y.second_form).norm() < 1e-8);
        }
    }

    #[test]
    fn odd_mode_integrates_to_zero() {
        let sp = SpaceForm::euclidean(2);
        let m = discretize(&cap_family(&sp, 2, 1.0, FRAC_PI_3).unwrap(), &sp, 16).unwrap();
        let f: Vec<f64> = m.nodes.iter().map(|nd| nd.param[1].cos()).collect();
        assert!(m.integrate(&f).abs() < 1e-10);
    }

    #[test]
    fn gauss_equation_spot_check() {
        for sp in [SpaceForm::euclidean(2), SpaceForm::hyperbolic(2)] {
            let lam = if sp.model == Model::Euclidean { 1.0 } else { 2.0 };
            let cap = cap_family(&sp, 2, lam, 2.0).unwrap();
            let m = discretize(&perturbed_cap(&cap, 0.03, 2).unwrap(), &sp, 32).unwrap();
            assert!(m.gauss_equation_defect() < 1e-7, "{}", m.gauss_equation_defect());
        }
    }

    #[test]
    fn from_positions_reproduces_geometry() {
        let sp = SpaceForm::hyperbolic(2);
        let m = discretize(&cap_family(&sp, 2, 1.5, 1.2).unwrap(), &sp, 24).unwrap();
        let r = DiscreteImmersion::from_positions(&m, &m.positions()).unwrap();
        for (a, b) in m.nodes.iter().zip(&r.nodes) {
            assert!((a.curvatures[0] - b.curvatures[0]).abs() < 1e-7);
        }
        for (a, b) in m.boundary.iter().zip(&r.boundary) {
            assert!((a.theta - b.theta).abs() < 1e-9);
            assert!((a.line_weight - b.line_weight).abs() < 1e-10);
        }
    }
}
