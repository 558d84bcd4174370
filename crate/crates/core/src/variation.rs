//! Variations of capillary hypersurfaces: geodesic flows with an
//! independent ledger of the evolution equations, the energy functionals
//! `A_r, W_l, Q_{r+1}, E_{r+1}, V`, and finite-difference checks of their
//! first variations.
//!
//! Every node moves along the ambient geodesic with its initial velocity
//! `Y = fν + T`, so the velocity at later times is the geodesic tangent.

use nalgebra::DMatrix;
use serde::Serialize;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ambient::{Model, SpaceForm};
use crate::immersion::DiscreteImmersion;
use crate::operators::{hessian_surface, l_r, nominal_theta, normal_derivative, robin_q, SurfaceField};
use crate::report::{Criterion, VerificationReport};
use crate::stability::{random_admissible_fields, AdmissibleField};
use crate::{binomial, Error, Result};

pub const FIRST_VARIATION_TOLERANCE: f64 = 1e-6;
pub const VOLUME_RATE_TOLERANCE: f64 = 1e-8;
/// Bound on `dt · max|f| · max|κ|`.
/// Relative size below which successive central differences are noise.
const INCREMENT_FLOOR: f64 = 1e-10;
pub const CFL_BOUND: f64 = 0.1;
/// Power of `s = ψ/Ψ` in the interior extension of the tangential part.
const EXTENSION_POWER: i32 = 13;

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Velocity `fν + T` with its normal speed and tangential part.
#[derive(Debug, Clone)]
pub struct VariationField {
    pub f: SurfaceField,
    /// Tangential part as ambient vectors at interior nodes.
    pub tangential: Vec<Vec<f64>>,
    pub tangential_boundary: Vec<Vec<f64>>,
    /// `sup |ḡ(T,μ) − cotθ f|` over boundary nodes.
    pub compatibility_residual: f64,
    /// `sup |sinθ(−∇_μ f + q f)|`, the first-order change of the angle.
    pub angle_residual: f64,
    /// `∫ f dA`.
    pub volume_rate: f64,
}

impl VariationField {
    pub fn new(
        m: &DiscreteImmersion,
        f: SurfaceField,
        tangential: Vec<Vec<f64>>,
        tangential_boundary: Vec<Vec<f64>>,
    ) -> Result<Self> {
        f.check(m)?;
        if tangential.len() != m.len() || tangential_boundary.len() != m.boundary.len() {
            return Err(Error::Argument("tangential part does not match the node set".into()));
        }
        let sp = m.space;
        let (mut compatibility_residual, mut angle_residual) = (0.0f64, 0.0f64);
        if m.has_boundary() {
            let theta = nominal_theta(m).ok_or_else(|| Error::Precondition("no contact angle".into()))?;
            let cot = theta.cos() / theta.sin();
            for ((b, t), fv) in m.boundary.iter().zip(&tangential_boundary).zip(&f.boundary) {
                compatibility_residual = compatibility_residual.max((sp.inner(&b.node.point, t, &b.conormal) - cot * fv).abs());
            }
            let q = robin_q(m)?.q;
            let dn = normal_derivative(m, &f)?;
            for ((d, q), v) in dn.iter().zip(&q).zip(&f.boundary) {
                angle_residual = angle_residual.max((theta.sin() * (q * v - d)).abs());
            }
        }
        let volume_rate = m.integrate(&f.interior);
        Ok(Self { f, tangential, tangential_boundary, compatibility_residual, angle_residual, volume_rate })
    }

    /// Splits an ambient velocity into normal speed and tangential part.
    pub fn from_velocity(m: &DiscreteImmersion, interior: &[Vec<f64>], boundary: &[Vec<f64>]) -> Result<Self> {
        let sp = m.space;
        let split = |nd: &crate::immersion::NodeGeometry, y: &[f64]| {
            let f = sp.inner(&nd.point, y, &nd.normal);
            let t: Vec<f64> = y.iter().zip(&nd.normal).map(|(a, b)| a - f * b).collect();
            (f, t)
        };
        let (fi, ti): (Vec<f64>, Vec<Vec<f64>>) = m.nodes.iter().zip(interior).map(|(nd, y)| split(nd, y)).unzip();
        let (fb, tb): (Vec<f64>, Vec<Vec<f64>>) = m.boundary.iter().zip(boundary).map(|(b, y)| split(&b.node, y)).unzip();
        Self::new(m, SurfaceField::from_values(m, fi, fb)?, ti, tb)
    }

    pub fn zero(m: &DiscreteImmersion) -> Result<Self> {
        let d = m.space.ambient_dim();
        Self::new(m, SurfaceField::constant(m, 0.0), vec![vec![0.0; d]; m.len()], vec![vec![0.0; d]; m.boundary.len()])
    }

    /// `fν + T` at interior and boundary nodes.
    pub fn velocity(&self, m: &DiscreteImmersion) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let comb = |nu: &[f64], f: f64, t: &[f64]| -> Vec<f64> { nu.iter().zip(t).map(|(a, b)| f * a + b).collect() };
        let interior = m.nodes.iter().zip(&self.f.interior).zip(&self.tangential).map(|((nd, f), t)| comb(&nd.normal, *f, t)).collect();
        let boundary = m
            .boundary
            .iter()
            .zip(&self.f.boundary)
            .zip(&self.tangential_boundary)
            .map(|((b, f), t)| comb(&b.node.normal, *f, t))
            .collect();
        (interior, boundary)
    }

    pub fn scale(&self) -> f64 {
        self.f.sup().max(f64::MIN_POSITIVE)
    }
}

/// Tangential part `cotθ f s^M sqrt(g^{00}) ∂_ψ`, whose conormal component on
/// the boundary is `cotθ f`.
pub fn compatible_tangent(m: &DiscreteImmersion, f: &SurfaceField, theta: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let cot = theta.cos() / theta.sin();
    let d = m.space.ambient_dim();
    let along = |nd: &crate::immersion::NodeGeometry, c: f64| -> Vec<f64> {
        let w = c * nd.metric_inv[(0, 0)].sqrt();
        (0..d).map(|a| w * nd.tangents[(a, 0)]).collect()
    };
    if !m.has_boundary() {
        return (vec![vec![0.0; d]; m.len()], Vec::new());
    }
    let interior = m
        .nodes
        .iter()
        .zip(&f.interior)
        .map(|(nd, v)| along(nd, cot * v * (nd.param[0] / m.radial_max).powi(EXTENSION_POWER)))
        .collect();
    let boundary = m.boundary.iter().zip(&f.boundary).map(|(b, v)| along(&b.node, cot * v)).collect();
    (interior, boundary)
}

/// Variation with normal part `φν` for an admissible `φ`.
pub fn admissible_variation_from(phi: &AdmissibleField, m: &DiscreteImmersion) -> Result<VariationField> {
    phi.require()?;
    let theta = nominal_theta(m).ok_or_else(|| Error::Precondition("no contact angle".into()))?;
    let (t, tb) = compatible_tangent(m, &phi.phi, theta);
    VariationField::new(m, phi.phi.clone(), t, tb)
}

/// Built-in flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowScenario {
    /// Homothety about a point of the support: `Y = x` (Euclidean) or the
    /// conformal field `Y = x − E_{n+1}` (hyperbolic).
    Scale,
    /// `f = 1` with the compatible tangential part.
    NormalUnit,
    /// A seeded admissible field.
    FromPhi,
}

impl FlowScenario {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "flow:scale" => Ok(Self::Scale),
            "flow:normal-unit" => Ok(Self::NormalUnit),
            "flow:from-phi" => Ok(Self::FromPhi),
            other => Err(Error::Usage(format!("unknown flow scenario '{other}'"))),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Self::Scale => "flow:scale",
            Self::NormalUnit => "flow:normal-unit",
            Self::FromPhi => "flow:from-phi",
        }
    }

    pub const ALL: [FlowScenario; 3] = [Self::Scale, Self::NormalUnit, Self::FromPhi];
}

pub fn scenario_field(m: &DiscreteImmersion, scenario: FlowScenario) -> Result<VariationField> {
    let n = m.n();
    match scenario {
        FlowScenario::Scale => {
            let y = |p: &[f64]| -> Vec<f64> {
                let mut v = p.to_vec();
                if m.space.model == Model::Hyperbolic {
                    v[n] -= 1.0;
                }
                v
            };
            let interior: Vec<Vec<f64>> = m.nodes.iter().map(|nd| y(&nd.point)).collect();
            let boundary: Vec<Vec<f64>> = m.boundary.iter().map(|b| y(&b.node.point)).collect();
            VariationField::from_velocity(m, &interior, &boundary)
        }
        FlowScenario::NormalUnit => {
            let f = SurfaceField::constant(m, 1.0);
            let theta = if m.has_boundary() { nominal_theta(m).unwrap_or(std::f64::consts::FRAC_PI_2) } else { std::f64::consts::FRAC_PI_2 };
            let (t, tb) = compatible_tangent(m, &f, theta);
            VariationField::new(m, f, t, tb)
        }
        FlowScenario::FromPhi => {
            let fields = random_admissible_fields(m, 4, 1, 0xf10)?;
            let phi = &fields[0];
            let scale = c2_size(m, &phi.phi)?;
            let unit = AdmissibleField::measure(m, phi.phi.scaled(1.0 / scale), 1.0)?;
            admissible_variation_from(&unit, m)
        }
    }
}

/// `max(sup|f|, sup|∇f|/κ, sup|∇²f|/κ²)` with `κ` the largest principal
/// curvature, floored at 1. Normalizing by it keeps `-∇²f` from driving
/// curvature faster than `f h²` does.
pub fn c2_size(m: &DiscreteImmersion, f: &SurfaceField) -> Result<f64> {
    let k = max_curvature(m).max(1.0);
    let n = m.n();
    let hess = hessian_surface(m, f)?;
    let d: Vec<Vec<f64>> = (0..n).map(|a| m.grid.derivative(&f.interior, a)).collect();
    let mut out = f.sup();
    for (i, nd) in m.nodes.iter().enumerate() {
        let grad: Vec<f64> = (0..n).map(|a| d[a][i]).collect();
        let g2: f64 = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| nd.metric_inv[(a, b)] * grad[a] * grad[b]).sum();
        let mixed = &nd.metric_inv * &hess[i];
        let h2 = (&mixed * &mixed).trace().max(0.0).sqrt();
        out = out.max(g2.max(0.0).sqrt() / k).max(h2 / (k * k));
    }
    Ok(out.max(f64::MIN_POSITIVE))
}

/// Per-node quantities integrated from the evolution equations.
#[derive(Debug, Clone)]
pub struct PdeLedger {
    pub metric: Vec<DMatrix<f64>>,
    pub normal: Vec<Vec<f64>>,
    /// Only integrated when the tangential part vanishes.
    pub second_form: Option<Vec<DMatrix<f64>>>,
    /// `σ_0..σ_n` per node.
    pub sigmas: Vec<Vec<f64>>,
}

impl PdeLedger {
    fn empty() -> Self {
        Self { metric: Vec::new(), normal: Vec::new(), second_form: None, sigmas: Vec::new() }
    }

    fn from_geometry(m: &DiscreteImmersion, with_h: bool) -> Self {
        Self {
            metric: m.nodes.iter().map(|nd| nd.metric.clone()).collect(),
            normal: m.nodes.iter().map(|nd| nd.normal.clone()).collect(),
            second_form: with_h.then(|| m.nodes.iter().map(|nd| nd.second_form.clone()).collect()),
            sigmas: m.nodes.iter().map(|nd| nd.sigmas.clone()).collect(),
        }
    }

    /// `self + Σ c_k rate_k`.
    fn advance(&self, rates: &[(&PdeLedger, f64)]) -> Self {
        let mut out = self.clone();
        for (rate, c) in rates {
            for (a, b) in out.metric.iter_mut().zip(&rate.metric) {
                *a += b * *c;
            }
            for (a, b) in out.normal.iter_mut().zip(&rate.normal) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
            }
            if let (Some(h), Some(rh)) = (out.second_form.as_mut(), rate.second_form.as_ref()) {
                for (a, b) in h.iter_mut().zip(rh) {
                    *a += b * *c;
                }
            }
            for (a, b) in out.sigmas.iter_mut().zip(&rate.sigmas) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
            }
        }
        out
    }
}

/// Largest ledger-versus-recomputed differences.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct LedgerDeviation {
    pub metric: f64,
    pub normal: f64,
    pub second_form: f64,
    pub sigma: f64,
}

impl LedgerDeviation {
    pub fn max(&self) -> f64 {
        self.metric.max(self.normal).max(self.second_form).max(self.sigma)
    }
}

fn deviation(m: &DiscreteImmersion, ledger: &PdeLedger) -> LedgerDeviation {
    let mut d = LedgerDeviation::default();
    for (k, nd) in m.nodes.iter().enumerate() {
        d.metric = d.metric.max((&nd.metric - &ledger.metric[k]).amax());
        let scale = m.space.conformal_factor(&nd.point).sqrt();
        d.normal = d.normal.max(scale * sub(&nd.normal, &ledger.normal[k]).iter().fold(0.0f64, |a, v| a.max(v.abs())));
        if let Some(h) = &ledger.second_form {
            d.second_form = d.second_form.max((&nd.second_form - &h[k]).amax());
        }
        for (a, b) in nd.sigmas.iter().zip(&ledger.sigmas[k]) {
            d.sigma = d.sigma.max((a - b).abs());
        }
    }
    d
}

/// Time derivatives of `g`, `ν`, `h` and `σ_r` along nodes moving with
/// velocity `Y`, from the evolution equations.
pub fn evolution_rates(m: &DiscreteImmersion, velocity: &[Vec<f64>], boundary_velocity: &[Vec<f64>], with_h: bool) -> Result<PdeLedger> {
    let sp = m.space;
    let n = m.n();
    let k_curv = sp.curvature();
    let grid = &m.grid;
    let field = VariationField::from_velocity(m, velocity, boundary_velocity)?;
    let f = &field.f;
    let hess = hessian_surface(m, f)?;
    let df: Vec<Vec<f64>> = (0..n).map(|i| grid.derivative(&f.interior, i)).collect();
    let t_lower: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            m.nodes
                .iter()
                .zip(velocity)
                .map(|(nd, y)| {
                    let e: Vec<f64> = nd.tangents.column(j).iter().copied().collect();
                    sp.inner(&nd.point, y, &e)
                })
                .collect()
        })
        .collect();
    // dt_lower[i][j] = ∂_i T_j
    let dt_lower: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| (0..n).map(|j| grid.derivative_with_parity(&t_lower[j], i, grid.component_parity(i, &[j]))).collect())
        .collect();
    let sigma_d: Vec<Vec<Vec<f64>>> = (0..=n)
        .map(|r| {
            let s: Vec<f64> = m.nodes.iter().map(|nd| nd.sigma(r)).collect();
            (0..n).map(|i| grid.derivative(&s, i)).collect()
        })
        .collect();
    let l_prev: Vec<SurfaceField> = (0..n).map(|r| l_r(m, f, r)).collect::<Result<_>>()?;
    let mut out = PdeLedger { metric: Vec::new(), normal: Vec::new(), second_form: with_h.then(Vec::new), sigmas: Vec::new() };
    for (k, nd) in m.nodes.iter().enumerate() {
        let fk = f.interior[k];
        let tl: Vec<f64> = (0..n).map(|j| t_lower[j][k]).collect();
        let tu: Vec<f64> = (0..n).map(|i| (0..n).map(|j| nd.metric_inv[(i, j)] * tl[j]).sum()).collect();
        let cov = DMatrix::from_fn(n, n, |i, j| dt_lower[i][j][k] - (0..n).map(|l| nd.christoffel[l][(i, j)] * tl[l]).sum::<f64>());
        out.metric.push(&nd.second_form * (2.0 * fk) + &cov + cov.transpose());
        // ∂_t ν = −∇f + h(e_i, T) e_i, minus Γ̄(Y, ν) for coordinate components.
        let st = &nd.shape * nalgebra::DVector::from_column_slice(&tu);
        let coords: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| nd.metric_inv[(i, j)] * df[j][k]).sum::<f64>() + st[i]).collect();
        let gamma = sp.christoffel(&nd.point, &velocity[k], &nd.normal);
        out.normal.push(sub(&nd.push_forward(&coords), &gamma));
        if let Some(h) = out.second_form.as_mut() {
            let hh = &nd.second_form * &nd.metric_inv * &nd.second_form;
            h.push(-&hess[k] + (hh - &nd.metric * k_curv) * fk);
        }
        let mut ds = vec![0.0; n + 1];
        for r in 1..=n {
            let transport: f64 = (0..n).map(|i| tu[i] * sigma_d[r][i][k]).sum();
            ds[r] = -l_prev[r - 1].interior[k] - (nd.sigma(1) * nd.sigma(r) - (r + 1) as f64 * nd.sigma(r + 1)) * fk
                - k_curv * (n - r + 1) as f64 * nd.sigma(r - 1) * fk
                + transport;
        }
        out.sigmas.push(ds);
    }
    Ok(out)
}

/// Rates feeding the time-integrated functionals.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Rates {
    /// `(1/sinθ) ∫_{∂M} f ds`.
    pub sweep: f64,
    /// `∫_M f dA`.
    pub volume: f64,
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub m: DiscreteImmersion,
    pub velocity: Vec<Vec<f64>>,
    pub boundary_velocity: Vec<Vec<f64>>,
    pub rates: Rates,
    /// Rates at the midpoint of the step that ended here.
    pub mid_rates: Option<Rates>,
    pub ledger: PdeLedger,
    pub deviation: LedgerDeviation,
}

#[derive(Debug, Clone)]
pub struct Flow {
    pub theta: Option<f64>,
    pub dt: f64,
    pub states: Vec<FlowState>,
}

impl Flow {
    pub fn max_deviation(&self) -> LedgerDeviation {
        let mut d = LedgerDeviation::default();
        for s in &self.states {
            d.metric = d.metric.max(s.deviation.metric);
            d.normal = d.normal.max(s.deviation.normal);
            d.second_form = d.second_form.max(s.deviation.second_form);
            d.sigma = d.sigma.max(s.deviation.sigma);
        }
        d
    }

    pub fn last(&self) -> &FlowState {
        self.states.last().expect("flow has an initial state")
    }
}

fn boundary_velocity(m: &DiscreteImmersion, velocity: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if !m.has_boundary() {
        return Ok(Vec::new());
    }
    let d = m.space.ambient_dim();
    let comps: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            let c: Vec<f64> = velocity.iter().map(|v| v[a]).collect();
            m.grid.restrict_upper(&c, 0).map(|mut rows| rows.swap_remove(0))
        })
        .collect::<Result<_>>()?;
    Ok((0..m.boundary.len()).map(|j| (0..d).map(|a| comps[a][j]).collect()).collect())
}

fn rates_of(m: &DiscreteImmersion, velocity: &[Vec<f64>], bvel: &[Vec<f64>], theta: Option<f64>) -> Rates {
    let sp = m.space;
    let fi: Vec<f64> = m.nodes.iter().zip(velocity).map(|(nd, y)| sp.inner(&nd.point, y, &nd.normal)).collect();
    let sweep = match theta {
        Some(th) => {
            let fb: Vec<f64> = m.boundary.iter().zip(bvel).map(|(b, y)| sp.inner(&b.node.point, y, &b.node.normal)).collect();
            m.integrate_boundary(&fb) / th.sin()
        }
        None => 0.0,
    };
    Rates { sweep, volume: m.integrate(&fi) }
}

fn max_curvature(m: &DiscreteImmersion) -> f64 {
    m.nodes.iter().flat_map(|nd| nd.curvatures.iter()).fold(0.0, |a, k| a.max(k.abs()))
}

/// Geodesic flow of the nodes with initial velocity `fν + T`. Geometry is
/// recomputed from positions at every step (the initial state included),
/// and the evolution equations are integrated alongside with the
/// classical four-stage scheme.
pub fn evolve(m: &DiscreteImmersion, field: &VariationField, dt: f64, steps: usize) -> Result<Flow> {
    evolve_with(m, field, dt, steps, true)
}

/// As [`evolve`]; without the PDE ledger when `ledger` is false.
pub fn evolve_with(m: &DiscreteImmersion, field: &VariationField, dt: f64, steps: usize, ledger: bool) -> Result<Flow> {
    let sp: SpaceForm = m.space;
    let bound = dt.abs() * field.f.sup() * max_curvature(m);
    if bound > CFL_BOUND {
        return Err(Error::Precondition(format!("dt·max|f|·max|κ| = {bound:.3e} exceeds {CFL_BOUND}")));
    }
    let theta = if m.has_boundary() { nominal_theta(m) } else { None };
    let with_h = field.tangential.iter().chain(&field.tangential_boundary).all(|t| t.iter().all(|c| *c == 0.0));
    let (y0, _) = field.velocity(m);
    let m0 = DiscreteImmersion::from_positions(m, &m.positions()).map_err(|e| Error::FlowBreakdown { step: 0, reason: e.to_string() })?;
    let b0 = boundary_velocity(&m0, &y0)?;
    let first = FlowState {
        t: 0.0,
        rates: rates_of(&m0, &y0, &b0, theta),
        mid_rates: None,
        ledger: if ledger { PdeLedger::from_geometry(&m0, with_h) } else { PdeLedger::empty() },
        deviation: LedgerDeviation::default(),
        velocity: y0,
        boundary_velocity: b0,
        m: m0,
    };
    let mut states = vec![first];
    let mut rate_start: Option<PdeLedger> = None;
    for step in 1..=steps {
        let prev = states.last().expect("initial state");
        let breakdown = |e: Error| Error::FlowBreakdown { step, reason: e.to_string() };
        let advance = |s: f64| -> Result<(DiscreteImmersion, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
            let (pos, vel): (Vec<Vec<f64>>, Vec<Vec<f64>>) =
                prev.m.nodes.iter().zip(&prev.velocity).map(|(nd, y)| sp.geodesic(&nd.point, y, s)).unzip();
            let next = DiscreteImmersion::from_positions(&prev.m, &pos).map_err(breakdown)?;
            let bv = boundary_velocity(&next, &vel)?;
            Ok((next, vel, bv))
        };
        let (mm, vm, bm) = advance(0.5 * dt)?;
        let (me, ve, be) = advance(dt)?;
        let (next_ledger, dev) = if ledger {
            let k1 = match rate_start.take() {
                Some(r) => r,
                None => evolution_rates(&prev.m, &prev.velocity, &prev.boundary_velocity, with_h).map_err(breakdown)?,
            };
            let k2 = evolution_rates(&mm, &vm, &bm, with_h).map_err(breakdown)?;
            let k4 = evolution_rates(&me, &ve, &be, with_h).map_err(breakdown)?;
            // The right-hand sides depend on time only, so the stages k2, k3
            // coincide.
            let l = prev.ledger.advance(&[(&k1, dt / 6.0), (&k2, 4.0 * dt / 6.0), (&k4, dt / 6.0)]);
            let d = deviation(&me, &l);
            rate_start = Some(k4);
            (l, d)
        } else {
            (PdeLedger::empty(), LedgerDeviation::default())
        };
        let state = FlowState {
            t: prev.t + dt,
            rates: rates_of(&me, &ve, &be, theta),
            mid_rates: Some(rates_of(&mm, &vm, &bm, theta)),
            deviation: dev,
            ledger: next_ledger,
            velocity: ve,
            boundary_velocity: be,
            m: me,
        };
        states.push(state);
    }
    Ok(Flow { theta, dt, states })
}

/// Functionals at one time sample.
#[derive(Debug, Clone, Serialize)]
pub struct FunctionalSample {
    pub t: f64,
    /// `A_r = ∫σ_r dA`, `r = 0..n`.
    pub area: Vec<f64>,
    /// `W_l`, `l = 0..n−1`.
    pub wetting: Vec<f64>,
    /// `Q_{r+1}`, `r = 0..n−1` (`Q_1 = E_1`).
    pub q: Vec<f64>,
    /// `E_k`, `k = 0..n`.
    pub energy: Vec<f64>,
    /// Enclosed volume change from `t = 0`, from the divergence theorem.
    pub volume: f64,
    /// `∫_0^t ∫ f dA dt`.
    pub volume_flux: f64,
    /// Area of the wetted region in the support.
    pub wetted_area: f64,
    /// Difference between the two assemblies of `Q_{r+1}`.
    pub assembly_defect: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FunctionalLedger {
    pub theta: f64,
    pub samples: Vec<FunctionalSample>,
}

/// `(1/(n+1)) x` (Euclidean) or `−(x_{n+1}/n) E_{n+1}` (hyperbolic): a field
/// of unit divergence.
fn unit_divergence_field(sp: &SpaceForm, p: &[f64]) -> Vec<f64> {
    let n = sp.n;
    match sp.model {
        Model::Euclidean => p.iter().map(|c| c / (n + 1) as f64).collect(),
        Model::Hyperbolic => {
            let mut v = vec![0.0; n + 1];
            v[n] = -p[n] / n as f64;
            v
        }
    }
}

fn enclosed_volume(m: &DiscreteImmersion) -> (f64, f64) {
    let sp = m.space;
    let n = sp.n;
    let bulk: Vec<f64> = m.nodes.iter().map(|nd| sp.inner(&nd.point, &unit_divergence_field(&sp, &nd.point), &nd.normal)).collect();
    // Wetted region D in the (flat) support: |D| = (1/n)∫⟨y, ν̄⟩ ds, and
    // ḡ(Y, N̄) is constant on D.
    let disk: Vec<f64> = m.boundary.iter().map(|b| (0..n).map(|i| b.node.point[i] * b.support_tangent_normal[i]).sum::<f64>() / n as f64).collect();
    let cap: Vec<f64> = m
        .boundary
        .iter()
        .zip(&disk)
        .map(|(b, d)| {
            let p = &b.node.point;
            d * sp.inner(p, &unit_divergence_field(&sp, p), &b.support_normal)
        })
        .collect();
    (m.integrate(&bulk) + m.integrate_boundary(&cap), m.integrate_boundary(&disk))
}

/// `Σ_l c_l W_l` terms of `Q_{r+1}` in the two equivalent forms.
fn q_assemblies(n: usize, r: usize, theta: f64, kappa: f64, area_r: f64, w: &[f64]) -> (f64, f64) {
    let (c, s) = (theta.cos(), theta.sin());
    let nr = binomial(n as i64, r as i64);
    let head = area_r / nr - c * s.powi(r as i32) * w[r];
    let mut first = head;
    let mut second = area_r - nr * c * s.powi(r as i32) * w[r];
    for l in 0..r {
        let sign = if (r + l) % 2 == 0 { 1.0 } else { -1.0 };
        // cos^{r−1}θ tan^lθ written without the tangent.
        let trig = c.powi((r - 1 - l) as i32) * s.powi(l as i32);
        let kap = kappa.powi((r - l) as i32);
        first -= trig * sign / (n - l) as f64 * kap * binomial(r as i64, l as i64) * ((n - r) as f64 * c * c + (r - l) as f64) * w[l];
        let bracket = c * c * binomial((n - l - 1) as i64, (n - r - 1) as i64) + binomial((n - l - 1) as i64, (n - r) as i64);
        second -= trig * sign * kap * binomial(n as i64, l as i64) * bracket * w[l];
    }
    (first, second / nr)
}

/// Functionals along a flow; `W_0` and the volume flux are integrated in
/// time with Simpson's rule on each step.
pub fn functional_ledger(flow: &Flow, theta: f64) -> Result<FunctionalLedger> {
    let first = flow.states.first().ok_or_else(|| Error::Argument("empty flow".into()))?;
    if !first.m.has_boundary() {
        return Err(Error::Argument("functional ledger needs boundary traces".into()));
    }
    let sp = first.m.space;
    let n = sp.n;
    let (k_curv, kappa, tau) = (sp.curvature(), sp.support_curvature(), sp.tau());
    let (v0, _) = enclosed_volume(&first.m);
    let mut w0 = 0.0;
    let mut flux = 0.0;
    let mut samples = Vec::new();
    for (i, st) in flow.states.iter().enumerate() {
        if i > 0 {
            let prev = &flow.states[i - 1];
            let mid = st.mid_rates.ok_or_else(|| Error::Argument("flow state lacks midpoint rates".into()))?;
            let h = st.t - prev.t;
            w0 += h / 6.0 * (prev.rates.sweep + 4.0 * mid.sweep + st.rates.sweep);
            flux += h / 6.0 * (prev.rates.volume + 4.0 * mid.volume + st.rates.volume);
        }
        let m = &st.m;
        let area: Vec<f64> = (0..=n).map(|r| m.integrate(&m.nodes.iter().map(|nd| nd.sigma(r)).collect::<Vec<_>>())).collect();
        let mut wetting = vec![w0];
        for r in 1..n {
            let hb: Vec<f64> = m
                .boundary
                .iter()
                .map(|b| b.boundary_sigmas.get(r - 1).copied().unwrap_or(0.0) / binomial((n - 1) as i64, (r - 1) as i64))
                .collect();
            let mut w = m.integrate_boundary(&hb) / n as f64;
            if r >= 2 {
                w += (r - 1) as f64 / (n - r + 2) as f64 * tau * wetting[r - 2];
            }
            wetting.push(w);
        }
        let mut q = Vec::new();
        let mut assembly_defect: f64 = 0.0;
        for r in 0..n {
            let (a, b) = q_assemblies(n, r, theta, kappa, area[r], &wetting);
            assembly_defect = assembly_defect.max((a - b).abs());
            q.push(a);
        }
        let (vg, wetted) = enclosed_volume(m);
        let volume = vg - v0;
        let mut energy = vec![(n + 1) as f64 * volume, q[0]];
        for r in 1..n {
            let e = q[r] + r as f64 * k_curv / (n + 2 - r) as f64 * energy[r - 1];
            energy.push(e);
        }
        samples.push(FunctionalSample { t: st.t, area, wetting, q, energy, volume, volume_flux: flux, wetted_area: wetted, assembly_defect });
    }
    Ok(FunctionalLedger { theta, samples })
}

/// Richardson tableau diagonal for step ratios of 2 and even error powers.
pub fn richardson(values: &[f64]) -> Vec<f64> {
    let mut table: Vec<Vec<f64>> = vec![values.to_vec()];
    for j in 1..values.len() {
        let prev = &table[j - 1];
        let w = 4f64.powi(j as i32);
        let row: Vec<f64> = (1..prev.len()).map(|k| (w * prev[k] - prev[k - 1]) / (w - 1.0)).collect();
        table.push(row);
    }
    // Diagonal entry j uses levels 0..=j.
    (0..values.len()).map(|j| table[j][0]).collect()
}

const SWEEP_LEVELS: usize = 4;

fn step_levels(steps: &[f64]) -> Vec<usize> {
    steps.iter().map(|h| (1.0 / h).round() as usize).collect()
}

/// Report over a step sweep: residuals are the Richardson diagonal; the raw
/// central differences are kept as a component and must converge at
/// order 2 on their own.
#[allow(clippy::too_many_arguments)]
fn sweep_report(
    identity: &str,
    m: &DiscreteImmersion,
    r: usize,
    theta: f64,
    sweep_steps: &[f64],
    raw: &[f64],
    rhs: f64,
    normalizer: f64,
    noise: f64,
    tolerance: f64,
) -> VerificationReport {
    let extrapolated = richardson(raw);
    let levels = step_levels(sweep_steps);
    // The residual against the integral settles at the spatial error; the
    // step order is read off successive central-difference increments.
    let crit = Criterion::new(tolerance, None);
    let mut reps: Vec<VerificationReport> = extrapolated
        .iter()
        .zip(&levels)
        .map(|(v, &lvl)| VerificationReport::single(identity, &m.space, Some(r), Some(theta), lvl, (v - rhs).abs() / normalizer, crit))
        .collect();
    for (rep, d) in reps.iter_mut().zip(raw) {
        rep.components.insert("central_difference".into(), vec![(d - rhs).abs() / normalizer]);
        rep.values.insert("lhs".into(), vec![*d]);
    }
    let mut rep = VerificationReport::sweep(reps).expect("sweep has levels");
    let increments: Vec<f64> = raw.windows(2).map(|w| (w[1] - w[0]).abs() / normalizer).collect();
    // A central difference at step h carries about noise/h.
    let floor: Vec<f64> = sweep_steps.windows(2).map(|w| noise * (1.0 / w[0].abs() + 1.0 / w[1].abs()) / normalizer).collect();
    // Pairs whose increments are within 10x of the noise are not used.
    let margin: Vec<f64> = floor.iter().map(|x| 10.0 * x).collect();
    let (order, saturated) = crate::report::estimate_order(&levels[1..], &increments, &margin, INCREMENT_FLOOR);
    rep.values.insert("increment_noise".into(), floor);
    rep.order = order;
    rep.saturated = saturated;
    rep.values.insert("dt_increment".into(), increments);
    rep.values.insert("rhs".into(), vec![rhs]);
    rep.values.insert("richardson".into(), vec![*extrapolated.last().unwrap_or(&f64::NAN)]);
    // Observed orders carry roundoff amplified by 1/dt; judged to one decimal.
    if !saturated && order.map(|o| o < 1.95).unwrap_or(true) {
        rep = rep.gate(false, &format!("central differences converge at order {order:?} < 2"));
    }
    rep.normalized_by("|lhs - rhs| / max(|rhs|, integral of |integrand|); levels are 1/dt")
}

fn theta_for(m: &DiscreteImmersion, field: &VariationField) -> Result<f64> {
    if !m.has_boundary() {
        return Err(Error::Argument("first-variation checks need a surface with boundary".into()));
    }
    let theta = nominal_theta(m).ok_or_else(|| Error::Precondition("no contact angle".into()))?;
    let tol = FIRST_VARIATION_TOLERANCE * field.scale() * max_curvature(m).max(1.0);
    if field.angle_residual > tol {
        return Err(Error::Precondition(format!(
            "variation is not angle-preserving at first order: sup|sin(theta)(-d_mu f + q f)| = {:e} > {tol:e}",
            field.angle_residual
        )));
    }
    Ok(theta)
}

fn abs_all(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.abs()).collect()
}

/// Forward and backward one-step flows over a halving step sweep, shared by
/// every first-variation and wetting-rate check of one field.
pub struct VariationSweep {
    pub theta: f64,
    pub steps: Vec<f64>,
    /// `(forward, backward)` functionals at `±h` per level.
    pub samples: Vec<(FunctionalSample, FunctionalSample)>,
    /// `dθ/dt` from the measured contact angles at the finest level.
    pub angle_rate: f64,
    /// Functionals at `t = 0` on the surface and on a copy whose positions
    /// are perturbed by a few ulps; their gap is the evaluation noise.
    pub noise_pair: (FunctionalSample, FunctionalSample),
    /// Recomputed initial surface and the normal speed on it.
    pub base: DiscreteImmersion,
    pub f: SurfaceField,
}

fn t0_functionals(m: &DiscreteImmersion, theta: f64) -> Result<FunctionalSample> {
    let flow = evolve_with(m, &VariationField::zero(m)?, 0.0, 0, false)?;
    Ok(functional_ledger(&flow, theta)?.samples.remove(0))
}

fn jittered(m: &DiscreteImmersion) -> Result<DiscreteImmersion> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let pos: Vec<Vec<f64>> =
        m.positions().iter().map(|p| p.iter().map(|x| x * (1.0 + 4.0 * f64::EPSILON * rng.gen_range(-1.0..1.0))).collect()).collect();
    DiscreteImmersion::from_positions(m, &pos)
}

impl VariationSweep {
    pub fn new(m: &DiscreteImmersion, field: &VariationField) -> Result<Self> {
        let theta = theta_for(m, field)?;
        let kmax = max_curvature(m).max(f64::MIN_POSITIVE);
        let h0 = (0.2 * CFL_BOUND / (field.scale() * kmax)).min(0.05);
        let steps: Vec<f64> = (0..SWEEP_LEVELS).map(|k| h0 / 2f64.powi(k as i32)).collect();
        let mut samples = Vec::new();
        let mut angle_rate = 0.0;
        let mut base = None;
        for &h in &steps {
            let fwd = evolve_with(m, field, h, 1, false)?;
            let bwd = evolve_with(m, field, -h, 1, false)?;
            let lf = functional_ledger(&fwd, theta)?;
            let lb = functional_ledger(&bwd, theta)?;
            let tf = fwd.last().m.contact_angle().unwrap_or(theta);
            let tb = bwd.last().m.contact_angle().unwrap_or(theta);
            angle_rate = (tf - tb) / (2.0 * h);
            samples.push((lf.samples[1].clone(), lb.samples[1].clone()));
            if base.is_none() {
                base = Some(fwd.states.into_iter().next().expect("initial state").m);
            }
        }
        let base = base.expect("at least one level");
        let y0 = field.velocity(m).0;
        let f = VariationField::from_velocity(&base, &y0, &boundary_velocity(&base, &y0)?)?.f;
        let noise_pair = (t0_functionals(&base, theta)?, t0_functionals(&jittered(&base)?, theta)?);
        Ok(Self { theta, steps, samples, angle_rate, noise_pair, base, f })
    }

    /// Noise of `pick` at `t = 0`.
    fn noise(&self, pick: impl Fn(&FunctionalSample) -> f64) -> f64 {
        (pick(&self.noise_pair.0) - pick(&self.noise_pair.1)).abs()
    }

    fn central(&self, pick: impl Fn(&FunctionalSample) -> f64) -> Vec<f64> {
        self.samples.iter().zip(&self.steps).map(|((a, b), h)| (pick(a) - pick(b)) / (2.0 * h)).collect()
    }

    /// `dE_{r+1}/dt` against `(n−r)∫H_{r+1} f dA`, with `dV/dt` against
    /// `∫ f dA` as a gated component.
    pub fn first_variation(&self, r: usize) -> Result<VerificationReport> {
        let m0 = &self.base;
        let n = m0.n();
        if r >= n {
            return Err(Error::Argument(format!("r = {r} must be at most n-1")));
        }
        let hf: Vec<f64> = m0.nodes.iter().zip(&self.f.interior).map(|(nd, v)| nd.mean_curvature(r + 1) * v).collect();
        let rhs = (n - r) as f64 * m0.integrate(&hf);
        let scale = (n - r) as f64 * m0.integrate(&abs_all(&hf));
        let normalizer = rhs.abs().max(scale).max(f64::MIN_POSITIVE);
        let raw = self.central(|s| s.energy[r + 1]);
        let mut rep = sweep_report("first_variation", m0, r, self.theta, &self.steps, &raw, rhs, normalizer, self.noise(|s| s.energy[r + 1]), FIRST_VARIATION_TOLERANCE);
        let vol_rhs = m0.integrate(&self.f.interior);
        let vol_scale = m0.integrate(&abs_all(&self.f.interior)).max(f64::MIN_POSITIVE);
        let vol = richardson(&self.central(|s| s.volume));
        let vol_res = (vol.last().copied().unwrap_or(f64::NAN) - vol_rhs).abs() / vol_rhs.abs().max(vol_scale);
        let defect = self.samples.iter().map(|(a, b)| a.assembly_defect.max(b.assembly_defect)).fold(0.0, f64::max);
        rep.components.insert("volume_rate".into(), vec![vol_res]);
        rep.values.insert("volume_rate_rhs".into(), vec![vol_rhs]);
        rep.values.insert("angle_rate".into(), vec![self.angle_rate]);
        rep.values.insert("assembly_defect".into(), vec![defect]);
        if !(vol_res <= VOLUME_RATE_TOLERANCE) {
            rep = rep.gate(false, &format!("volume rate residual {vol_res:e} exceeds {VOLUME_RATE_TOLERANCE:e}"));
        }
        if !(defect <= 1e-12 * (1.0 + rhs.abs())) {
            rep = rep.gate(false, &format!("the two assemblies of Q disagree by {defect:e}"));
        }
        if self.angle_rate.abs() > FIRST_VARIATION_TOLERANCE {
            rep = rep.note(&format!("warning: contact angle drifts at first order, dtheta/dt = {:e}", self.angle_rate));
        }
        Ok(rep)
    }

    /// `dW_r/dt` against `(1/sinθ) C(n,r)^{-1} ∫ σ_r^{∂M} f ds`; for `r = 0`
    /// the rate of the wetted area is compared too.
    pub fn wetting_rate(&self, r: usize) -> Result<VerificationReport> {
        let m0 = &self.base;
        let n = m0.n();
        if r >= n {
            return Err(Error::Argument(format!("r = {r} must be at most n-1")));
        }
        let c = 1.0 / (self.theta.sin() * binomial(n as i64, r as i64));
        let integrand: Vec<f64> = m0.boundary.iter().zip(&self.f.boundary).map(|(b, v)| b.boundary_sigmas[r] * v).collect();
        let rhs = c * m0.integrate_boundary(&integrand);
        let scale = c * m0.integrate_boundary(&abs_all(&integrand));
        let normalizer = rhs.abs().max(scale).max(f64::MIN_POSITIVE);
        let raw = self.central(|s| s.wetting[r]);
        let mut rep = sweep_report("wetting_rate", m0, r, self.theta, &self.steps, &raw, rhs, normalizer, self.noise(|s| s.wetting[r]), FIRST_VARIATION_TOLERANCE);
        if r == 0 {
            let da = richardson(&self.central(|s| s.wetted_area));
            let res = (da.last().copied().unwrap_or(f64::NAN) - rhs).abs() / normalizer;
            rep.components.insert("wetted_area_rate".into(), vec![res]);
            if !(res <= FIRST_VARIATION_TOLERANCE) {
                rep = rep.gate(false, &format!("wetted area rate residual {res:e}"));
            }
        }
        Ok(rep)
    }
}

/// `dE_{r+1}/dt` at `t = 0` against `(n−r)∫H_{r+1} f dA`, and `dV/dt`
/// against `∫ f dA`.
pub fn first_variation_check(m: &DiscreteImmersion, field: &VariationField, r: usize) -> Result<VerificationReport> {
    if r >= m.n() {
        return Err(Error::Argument(format!("r = {r} must be at most n-1")));
    }
    VariationSweep::new(m, field)?.first_variation(r)
}

/// `dW_r/dt` at `t = 0` against `(1/sinθ) C(n,r)^{-1} ∫ σ_r^{∂M} f ds`.
pub fn wetting_rate_check(m: &DiscreteImmersion, field: &VariationField, r: usize) -> Result<VerificationReport> {
    if r >= m.n() {
        return Err(Error::Argument(format!("r = {r} must be at most n-1")));
    }
    VariationSweep::new(m, field)?.wetting_rate(r)
}

/// Ledger closure: maximal ledger deviation after `steps` steps at `dt` and
/// at `dt/2`, with `C = deviation / dt²` reported.
pub fn ledger_closure(m: &DiscreteImmersion, field: &VariationField, dt: f64, steps: usize) -> Result<VerificationReport> {
    let a = evolve(m, field, dt, steps)?.max_deviation();
    let b = evolve(m, field, 0.5 * dt, steps)?.max_deviation();
    let crit = Criterion::new(dt * dt, Some(2.0)).with_floor(1e-3 * dt * dt);
    let levels = step_levels(&[dt, 0.5 * dt]);
    let theta = if m.has_boundary() { nominal_theta(m) } else { None };
    let mk = |lvl: usize, d: &LedgerDeviation| {
        VerificationReport::single("ledger_closure", &m.space, None, theta, lvl, d.max(), crit)
            .component("metric", d.metric)
            .component("normal", d.normal)
            .component("second_form", d.second_form)
            .component("sigma", d.sigma)
    };
    let mut rep = VerificationReport::sweep(vec![mk(levels[0], &a), mk(levels[1], &b)]).expect("two levels");
    rep.values.insert("C".into(), vec![a.max() / (dt * dt), b.max() / (0.25 * dt * dt)]);
    rep.values.insert("steps".into(), vec![steps as f64]);
    Ok(rep.normalized_by("max |ledger - recomputed| over nodes; tolerance dt^2; levels are 1/dt"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::immersion::{cap_family, discretize, perturbed_cap, round_sphere};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    fn cap(sp: &SpaceForm, lambda: f64, theta: f64, res: usize) -> DiscreteImmersion {
        discretize(&cap_family(sp, sp.n, lambda, theta).unwrap(), sp, res).unwrap()
    }

    #[test]
    fn richardson_removes_even_powers() {
        let f = |h: f64| 1.0 + 0.3 * h * h - 0.7 * h.powi(4) + 0.1 * h.powi(6);
        let v: Vec<f64> = (0..4).map(|k| f(0.1 / 2f64.powi(k))).collect();
        let d = richardson(&v);
        assert!((d[3] - 1.0).abs() < 1e-15);
        assert!((d[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn sphere_step_matches_concentric_sphere() {
        let sp = SpaceForm::euclidean(2);
        let m = discretize(&round_sphere(&sp, 2, 0.0, 1.0).unwrap(), &sp, 16).unwrap();
        let field = scenario_field(&m, FlowScenario::NormalUnit).unwrap();
        let flow = evolve(&m, &field, 0.01, 1).unwrap();
        let end = flow.last();
        for (nd, l) in end.m.nodes.iter().zip(&end.ledger.sigmas) {
            assert!((nd.sigma(1) - 2.0 / 1.01).abs() < 1e-9);
            assert!((l[1] - nd.sigma(1)).abs() < 1e-4);
        }
        assert!(flow.max_deviation().max() < 1e-4);
    }

    #[test]
    fn zero_field_leaves_geometry_unchanged() {
        let sp = SpaceForm::hyperbolic(2);
        let m = cap(&sp, 1.5, FRAC_PI_3, 16);
        let flow = evolve(&m, &VariationField::zero(&m).unwrap(), 0.01, 2).unwrap();
        let (a, b) = (&flow.states[0].m, &flow.states[2].m);
        for (x, y) in a.nodes.iter().zip(&b.nodes) {
            assert_eq!(x.point, y.point);
            assert_eq!(x.sigmas, y.sigmas);
        }
    }

    #[test]
    fn cfl_gate() {
        let sp = SpaceForm::euclidean(2);
        let m = cap(&sp, 1.0, FRAC_PI_2, 16);
        let field = scenario_field(&m, FlowScenario::NormalUnit).unwrap();
        assert!(matches!(evolve(&m, &field, 0.5, 1), Err(Error::Precondition(_))));
    }

    #[test]
    fn hemisphere_functionals() {
        let sp = SpaceForm::euclidean(2);
        let m = cap(&sp, 1.0, FRAC_PI_2, 16);
        let field = scenario_field(&m, FlowScenario::Scale).unwrap();
        let flow = evolve(&m, &field, 0.01, 1).unwrap();
        let l = functional_ledger(&flow, FRAC_PI_2).unwrap();
        let s = &l.samples[0];
        assert!((s.area[0] - 2.0 * PI).abs() < 1e-12);
        assert!((s.wetting[1] - PI).abs() < 1e-12);
        assert!((s.wetting[0]).abs() == 0.0);
        // K = 0 and κ = 0: E_{r+1} = Q_{r+1} = A_r/C(n,r) − cosθ sin^rθ W_r.
        assert_eq!(s.energy[2], s.q[1]);
        assert!((s.q[1] - s.area[1] / 2.0).abs() < 1e-15);
        assert!(s.assembly_defect < 1e-12);
    }

    #[test]
    fn hemisphere_scaling_first_variation() {
        let sp = SpaceForm::euclidean(2);
        let m = cap(&sp, 1.0, FRAC_PI_2, 16);
        let field = scenario_field(&m, FlowScenario::Scale).unwrap();
        let rep = first_variation_check(&m, &field, 1).unwrap();
        assert!((rep.values["rhs"][0] - 2.0 * PI).abs() < 1e-9);
        assert!((rep.values["richardson"][0] - 2.0 * PI).abs() < 2e-6 * PI);
        assert!(rep.passed(), "{rep:?}");
        let rep = wetting_rate_check(&m, &scenario_field(&m, FlowScenario::NormalUnit).unwrap(), 1).unwrap();
        assert!((rep.values["rhs"][0] - PI).abs() < 1e-9);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn first_variation_on_caps_and_perturbations() {
        for sp in [SpaceForm::euclidean(2), SpaceForm::hyperbolic(2)] {
            let c = cap_family(&sp, 2, 1.5, FRAC_PI_3).unwrap();
            let p = discretize(&perturbed_cap(&c, 0.04, 2).unwrap(), &sp, 24).unwrap();
            let unit = scenario_field(&p, FlowScenario::NormalUnit).unwrap();
            assert!(matches!(first_variation_check(&p, &unit, 1), Err(Error::Precondition(_))));
            assert!(matches!(wetting_rate_check(&p, &unit, 0), Err(Error::Precondition(_))));
            for scenario in [FlowScenario::Scale, FlowScenario::FromPhi] {
                let field = scenario_field(&p, scenario).unwrap();
                let sweep = VariationSweep::new(&p, &field).unwrap();
                for r in 0..2 {
                    let rep = sweep.first_variation(r).unwrap();
                    assert!(rep.passed(), "{:?} {scenario:?} r={r}: {:?} {:?} {:?}", sp.model, rep.residuals, rep.components, rep.notes);
                    let rep = sweep.wetting_rate(r).unwrap();
                    assert!(rep.passed(), "{:?} {scenario:?} r={r}: {:?} {:?} {:?}", sp.model, rep.residuals, rep.components, rep.notes);
                }
            }
        }
    }

    #[test]
    fn admissible_fields_give_compatible_variations() {
        let sp = SpaceForm::euclidean(2);
        let m = cap(&sp, 1.0, FRAC_PI_2, 24);
        // Mean-zero azimuthal mode, Neumann on the hemisphere.
        let phi = SurfaceField::sample(&m, |nd| nd.point[0]);
        let phi = AdmissibleField::certify(&m, phi, 1.0).unwrap();
        let v = admissible_variation_from(&phi, &m).unwrap();
        assert!(v.volume_rate.abs() < 1e-8 && v.angle_residual < 1e-8);
        let m = cap(&sp, 1.3, FRAC_PI_3, 16);
        let phi = crate::stability::test_function_euclidean(&m, 1).unwrap();
        let v = admissible_variation_from(&phi, &m).unwrap();
        assert!(v.f.sup() < 1e-8);
        for field in random_admissible_fields(&m, 3, 3, 5).unwrap() {
            let v = admissible_variation_from(&field, &m).unwrap();
            assert!(v.compatibility_residual < 1e-10);
        }
    }

    #[test]
    fn ledger_closes_at_second_order() {
        for sp in [SpaceForm::euclidean(2), SpaceForm::hyperbolic(2)] {
            let m = cap(&sp, 1.5, FRAC_PI_3, 24);
            let field = scenario_field(&m, FlowScenario::FromPhi).unwrap();
            let rep = ledger_closure(&m, &field, 0.01, 10).unwrap();
            assert!(rep.passed(), "{:?} {:?}", rep.residuals, rep.components);
        }
    }
}
