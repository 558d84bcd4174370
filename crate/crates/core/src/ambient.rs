//! Ambient space forms in the half-space chart.
//!
//! Both scenarios use coordinates `x = (x_1, …, x_{n+1})`. The Euclidean
//! half-space is supported on `{x_{n+1} = 0}`; the hyperbolic model carries
//! `ḡ = δ / x_{n+1}²` and is supported on the horosphere `{x_{n+1} = 1}`.
//! In both cases the support normal is `N̄ = −Ē_{n+1}`, pointing out of the
//! fluid region `{x_{n+1} > support height}`.
//!
//! The Levi-Civita connection of the hyperbolic metric is evaluated from
//! its closed form, never by differencing.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const MIN_HEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    #[serde(rename = "euclid")]
    Euclidean,
    #[serde(rename = "horoball")]
    Hyperbolic,
}

impl Model {
    pub fn tag(self) -> &'static str {
        match self {
            Model::Euclidean => "euclid",
            Model::Hyperbolic => "horoball",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "euclid" | "euclidean" => Ok(Model::Euclidean),
            "horoball" | "hyperbolic" => Ok(Model::Hyperbolic),
            other => Err(Error::Usage(format!("unknown model '{other}' (expected euclid or horoball)"))),
        }
    }
}

/// Ambient model of dimension `n + 1` with its support hypersurface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceForm {
    pub model: Model,
    pub n: usize,
}

/// Canonical fields at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalFields {
    pub position: Vec<f64>,
    pub e_top: Vec<f64>,
    pub x_shift: Vec<f64>,
    pub potential: f64,
    /// Columns `Ē_A = x_{n+1} E_A` (hyperbolic) or `E_A` (Euclidean).
    pub frame: DMatrix<f64>,
}

/// Vector field value with its flat Jacobian `∂Z^A/∂x^B` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldJet {
    pub value: Vec<f64>,
    pub jacobian: DMatrix<f64>,
}

impl FieldJet {
    pub fn constant(value: Vec<f64>) -> Self {
        let d = value.len();
        Self { value, jacobian: DMatrix::zeros(d, d) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldTag {
    Position,
    /// Horizontal coordinate field `E_i`, `0 <= i < n`.
    Horizontal(usize),
    Top,
    Shifted,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SpaceForm {
    pub fn new(model: Model, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("hypersurface dimension must be >= 1".into()));
        }
        Ok(Self { model, n })
    }

    pub fn euclidean(n: usize) -> Self {
        Self { model: Model::Euclidean, n }
    }

    pub fn hyperbolic(n: usize) -> Self {
        Self { model: Model::Hyperbolic, n }
    }

    pub fn ambient_dim(&self) -> usize {
        self.n + 1
    }

    /// Sectional curvature `K`.
    pub fn curvature(&self) -> f64 {
        match self.model {
            Model::Euclidean => 0.0,
            Model::Hyperbolic => -1.0,
        }
    }

    /// Principal curvature `κ` of the support with respect to `N̄`.
    pub fn support_curvature(&self) -> f64 {
        match self.model {
            Model::Euclidean => 0.0,
            Model::Hyperbolic => 1.0,
        }
    }

    /// `τ = K + κ²`, zero in both implemented scenarios.
    pub fn tau(&self) -> f64 {
        self.curvature() + self.support_curvature().powi(2)
    }

    /// Height of the support hypersurface.
    pub fn support_height(&self) -> f64 {
        match self.model {
            Model::Euclidean => 0.0,
            Model::Hyperbolic => 1.0,
        }
    }

    fn top(&self, p: &[f64]) -> f64 {
        p[self.n]
    }

    pub fn validate_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.n + 1 {
            return Err(Error::Argument(format!("point has {} coordinates, expected {}", p.len(), self.n + 1)));
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("non-finite coordinate".into()));
        }
        if self.model == Model::Hyperbolic && self.top(p) <= MIN_HEIGHT {
            return Err(Error::Domain(format!("hyperbolic point needs x_(n+1) > 0, got {:e}", self.top(p))));
        }
        Ok(())
    }

    /// Conformal factor `c` with `ḡ = c δ`.
    pub fn conformal_factor(&self, p: &[f64]) -> f64 {
        match self.model {
            Model::Euclidean => 1.0,
            Model::Hyperbolic => 1.0 / (self.top(p) * self.top(p)),
        }
    }

    pub fn metric_at(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        self.validate_point(p)?;
        let d = self.n + 1;
        Ok(DMatrix::identity(d, d) * self.conformal_factor(p))
    }

    pub fn inner(&self, p: &[f64], a: &[f64], b: &[f64]) -> f64 {
        self.conformal_factor(p) * dot(a, b)
    }

    /// `Γ̄(Y, Z)`, so that `∇̄_Y Z = D_Y Z + Γ̄(Y, Z)`.
    pub fn christoffel(&self, p: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        let d = self.n + 1;
        match self.model {
            Model::Euclidean => vec![0.0; d],
            Model::Hyperbolic => {
                let h = self.top(p);
                let (yt, zt) = (y[self.n] / h, z[self.n] / h);
                let yz = dot(y, z) / h;
                let mut out: Vec<f64> = (0..d).map(|a| -yt * z[a] - zt * y[a]).collect();
                out[self.n] += yz;
                out
            }
        }
    }

    /// `∇̄_Y Z` from the value of `Y` and the jet of `Z`.
    pub fn covariant_derivative(&self, p: &[f64], y: &[f64], z: &FieldJet) -> Result<Vec<f64>> {
        self.validate_point(p)?;
        let d = self.n + 1;
        if y.len() != d || z.value.len() != d || z.jacobian.nrows() != d || z.jacobian.ncols() != d {
            return Err(Error::Argument("field jet dimensions do not match the ambient space".into()));
        }
        let gamma = self.christoffel(p, y, &z.value);
        Ok((0..d).map(|a| (0..d).map(|b| z.jacobian[(a, b)] * y[b]).sum::<f64>() + gamma[a]).collect())
    }

    pub fn canonical_fields(&self, p: &[f64]) -> Result<CanonicalFields> {
        self.validate_point(p)?;
        let d = self.n + 1;
        let mut e_top = vec![0.0; d];
        e_top[self.n] = 1.0;
        let x_shift: Vec<f64> = p.iter().zip(&e_top).map(|(a, b)| a - b).collect();
        let (potential, scale) = match self.model {
            Model::Euclidean => (1.0, 1.0),
            Model::Hyperbolic => (1.0 / self.top(p), self.top(p)),
        };
        Ok(CanonicalFields {
            position: p.to_vec(),
            e_top,
            x_shift,
            potential,
            frame: DMatrix::identity(d, d) * scale,
        })
    }

    pub fn field_jet(&self, tag: FieldTag, p: &[f64]) -> Result<FieldJet> {
        let d = self.n + 1;
        let mut v = vec![0.0; d];
        match tag {
            FieldTag::Position => Ok(FieldJet { value: p.to_vec(), jacobian: DMatrix::identity(d, d) }),
            FieldTag::Horizontal(i) => {
                if i >= self.n {
                    return Err(Error::Argument(format!("horizontal field index {i} out of range")));
                }
                v[i] = 1.0;
                Ok(FieldJet::constant(v))
            }
            FieldTag::Top => {
                v[self.n] = 1.0;
                Ok(FieldJet::constant(v))
            }
            FieldTag::Shifted => {
                let mut value = p.to_vec();
                value[self.n] -= 1.0;
                Ok(FieldJet { value, jacobian: DMatrix::identity(d, d) })
            }
        }
    }

    /// Expected conformal factor `ρ` in `½ L_X ḡ = ρ ḡ`.
    pub fn conformal_rate(&self, tag: FieldTag, p: &[f64]) -> f64 {
        match (self.model, tag) {
            (Model::Hyperbolic, FieldTag::Position | FieldTag::Horizontal(_)) => 0.0,
            (Model::Hyperbolic, FieldTag::Top) => -1.0 / self.top(p),
            (Model::Hyperbolic, FieldTag::Shifted) => 1.0 / self.top(p),
            (Model::Euclidean, FieldTag::Position | FieldTag::Shifted) => 1.0,
            (Model::Euclidean, _) => 0.0,
        }
    }

    /// `½[ḡ(∇̄_A X, B) + ḡ(∇̄_B X, A)] − ρ ḡ(A, B)`.
    pub fn killing_defect(&self, tag: FieldTag, p: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
        let jet = self.field_jet(tag, p)?;
        let da = self.covariant_derivative(p, a, &jet)?;
        let db = self.covariant_derivative(p, b, &jet)?;
        let sym = 0.5 * (self.inner(p, &da, b) + self.inner(p, &db, a));
        Ok(sym - self.conformal_rate(tag, p) * self.inner(p, a, b))
    }

    /// `∇̄²V(A, B) − V ḡ(A, B)` for the potential `V = 1/x_{n+1}`.
    pub fn hessian_v_residual(&self, p: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
        if self.model != Model::Hyperbolic {
            return Err(Error::Precondition("the potential Hessian identity is hyperbolic".into()));
        }
        self.validate_point(p)?;
        let h = self.top(p);
        let k = self.n;
        // For constant coordinate fields: ∇̄²V(A,B) = D²V(A,B) − dV(Γ̄(A,B)).
        let flat = 2.0 * a[k] * b[k] / h.powi(3);
        let gamma = self.christoffel(p, a, b);
        let dv = -gamma[k] / (h * h);
        Ok(flat - dv - (1.0 / h) * self.inner(p, a, b))
    }

    /// Support normal `N̄` at a point of the support.
    pub fn support_normal(&self, p: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.n + 1];
        v[self.n] = match self.model {
            Model::Euclidean => -1.0,
            Model::Hyperbolic => -self.top(p),
        };
        v
    }

    /// Geodesic `γ` with `γ(0) = p`, `γ'(0) = v`, evaluated at `t`; returns
    /// `(γ(t), γ'(t))`. Hyperbolic geodesics are computed in closed form on
    /// the hyperboloid.
    pub fn geodesic(&self, p: &[f64], v: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
        if v.iter().all(|c| *c == 0.0) {
            return (p.to_vec(), v.to_vec());
        }
        match self.model {
            Model::Euclidean => (p.iter().zip(v).map(|(a, b)| a + t * b).collect(), v.to_vec()),
            Model::Hyperbolic => {
                let n = self.n;
                let z = p[n];
                let yy: f64 = p[..n].iter().map(|c| c * c).sum();
                let yw: f64 = p[..n].iter().zip(&v[..n]).map(|(a, b)| a * b).sum();
                let vz = v[n];
                // Hyperboloid coordinates (X_0, X_1..X_n, X_{n+1}).
                let mut x = vec![(1.0 + yy + z * z) / (2.0 * z)];
                x.extend(p[..n].iter().map(|c| c / z));
                x.push((1.0 - yy - z * z) / (2.0 * z));
                let mut dx = vec![(yw + z * vz) / z - (1.0 + yy + z * z) * vz / (2.0 * z * z)];
                dx.extend((0..n).map(|i| v[i] / z - p[i] * vz / (z * z)));
                dx.push(-(yw + z * vz) / z - (1.0 - yy - z * z) * vz / (2.0 * z * z));
                let speed = dot(v, v).sqrt() / z;
                let st = speed * t;
                let (c, s) = (st.cosh(), st.sinh());
                let x1: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| c * a + s / speed * b).collect();
                let dx1: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| speed * s * a + c * b).collect();
                let w = x1[0] + x1[n + 1];
                let dw = dx1[0] + dx1[n + 1];
                let z1 = 1.0 / w;
                let dz1 = -dw * z1 * z1;
                let mut q: Vec<f64> = (1..=n).map(|i| x1[i] * z1).collect();
                q.push(z1);
                let mut dq: Vec<f64> = (1..=n).map(|i| dx1[i] * z1 + x1[i] * dz1).collect();
                dq.push(dz1);
                (q, dq)
            }
        }
    }

    /// Directional derivative of `V` along `N̄`.
    pub fn normal_derivative_v(&self, p: &[f64]) -> f64 {
        let h = self.top(p);
        let nb = self.support_normal(p);
        -nb[self.n] / (h * h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn metric_examples() {
        let e = SpaceForm::euclidean(2);
        assert_eq!(e.metric_at(&[0.3, 1.0, 5.0]).unwrap(), DMatrix::identity(3, 3));
        let h = SpaceForm::hyperbolic(2);
        assert_eq!(h.metric_at(&[0.0, 0.0, 2.0]).unwrap(), DMatrix::identity(3, 3) * 0.25);
        assert_eq!(h.metric_at(&[1.0, 2.0, 1.0]).unwrap(), DMatrix::identity(3, 3));
        assert!(matches!(h.metric_at(&[0.0, 0.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn connection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let e = SpaceForm::euclidean(2);
        let c = FieldJet::constant(vec![0.2, -1.0, 0.5]);
        assert_eq!(e.covariant_derivative(&[0.1, 0.2, 0.3], &[1.0, 2.0, 3.0], &c).unwrap(), vec![0.0; 3]);
        let h = SpaceForm::hyperbolic(2);
        for _ in 0..20 {
            let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.2..3.0)];
            let y = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let z = p[2];
            let dtop = h.covariant_derivative(&p, &y, &h.field_jet(FieldTag::Top, &p).unwrap()).unwrap();
            for a in 0..3 {
                assert!((dtop[a] + y[a] / z).abs() < 1e-13);
            }
            // ∇̄_Y x = −ḡ(Y, Ē_top) x + ḡ(Y, x) Ē_top
            let dx = h.covariant_derivative(&p, &y, &h.field_jet(FieldTag::Position, &p).unwrap()).unwrap();
            let ebar_top = [0.0, 0.0, z];
            let gy = h.inner(&p, &y, &ebar_top);
            let gyx = h.inner(&p, &y, &p);
            for a in 0..3 {
                assert!((dx[a] - (-gy * p[a] + gyx * ebar_top[a])).abs() < 1e-12);
            }
            // ∇̄_Y E_i = −ḡ(Y, Ē_top) E_i + ḡ(Y, Ē_i) E_top
            let de = h.covariant_derivative(&p, &y, &h.field_jet(FieldTag::Horizontal(0), &p).unwrap()).unwrap();
            let ebar_1 = [z, 0.0, 0.0];
            let want = [-gy, 0.0, h.inner(&p, &y, &ebar_1)];
            for a in 0..3 {
                assert!((de[a] - want[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn canonical_field_examples() {
        let h = SpaceForm::hyperbolic(3);
        let f = h.canonical_fields(&[0.0, 0.0, 0.0, 2.0]).unwrap();
        assert_eq!(f.potential, 0.5);
        let f = h.canonical_fields(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(f.x_shift, vec![0.0; 4]);
        let p = [0.3, -0.4, 1.1, 0.7];
        let f = h.canonical_fields(&p).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let ga = f.frame.column(a).iter().copied().collect::<Vec<_>>();
                let gb = f.frame.column(b).iter().copied().collect::<Vec<_>>();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((h.inner(&p, &ga, &gb) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn killing_examples() {
        let h = SpaceForm::hyperbolic(2);
        let p = [0.4, -0.3, 1.7];
        let e1 = [p[2], 0.0, 0.0];
        for tag in [FieldTag::Position, FieldTag::Horizontal(0), FieldTag::Top, FieldTag::Shifted] {
            assert!(h.killing_defect(tag, &p, &e1, &e1).unwrap().abs() < 1e-13);
        }
        assert!(h.killing_defect(FieldTag::Horizontal(5), &p, &e1, &e1).is_err());
    }

    #[test]
    fn hessian_examples() {
        let h = SpaceForm::hyperbolic(2);
        let p = [0.0, 0.0, 1.0];
        assert!(h.hessian_v_residual(&p, &[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0]).unwrap().abs() < 1e-14);
        let p = [0.0, 0.0, 3.0];
        let e1 = [3.0, 0.0, 0.0];
        let e2 = [0.0, 3.0, 0.0];
        assert!(h.hessian_v_residual(&p, &e1, &e1).unwrap().abs() < 1e-14);
        assert!(h.hessian_v_residual(&p, &e1, &e2).unwrap().abs() < 1e-14);
    }

    #[test]
    fn horosphere_facts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = SpaceForm::hyperbolic(3);
        for _ in 0..100 {
            let p = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), 1.0];
            let f = h.canonical_fields(&p).unwrap();
            let nb = h.support_normal(&p);
            assert!(h.inner(&p, &f.x_shift, &nb).abs() < 1e-12);
            assert!((h.normal_derivative_v(&p) - f.potential).abs() < 1e-12);
        }
    }

    #[test]
    fn tau_vanishes() {
        assert_eq!(SpaceForm::euclidean(2).tau(), 0.0);
        assert_eq!(SpaceForm::hyperbolic(2).tau(), 0.0);
    }

    #[test]
    fn hyperbolic_geodesics() {
        let sp = SpaceForm::hyperbolic(2);
        // Vertical geodesic: z(t) = z0 e^{t |v|/z0}.
        let (q, dq) = sp.geodesic(&[0.3, -0.2, 2.0], &[0.0, 0.0, 1.0], 0.7);
        assert!((q[2] - 2.0 * (0.35f64).exp()).abs() < 1e-13);
        assert!((q[0] - 0.3).abs() < 1e-14 && (q[1] + 0.2).abs() < 1e-14);
        assert!((dq[2] - q[2] / 2.0).abs() < 1e-13);
        // Unit semicircle through (0, 0, 1) with horizontal velocity.
        let (q, _dq) = sp.geodesic(&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], 0.9);
        assert!((q[0] - (0.9f64).tanh()).abs() < 1e-13);
        assert!((q[2] - 1.0 / (0.9f64).cosh()).abs() < 1e-13);
        // Constant hyperbolic speed.
        let p = [0.4, 0.1, 1.3];
        let v = [0.2, -0.5, 0.3];
        let (q, dq) = sp.geodesic(&p, &v, 1.7);
        assert!((sp.inner(&q, &dq, &dq) - sp.inner(&p, &v, &v)).abs() < 1e-12);
        // Short steps agree with the geodesic equation to second order.
        let h = 1e-4;
        let (q, _) = sp.geodesic(&p, &v, h);
        let g = sp.christoffel(&p, &v, &v);
        for a in 0..3 {
            let taylor = p[a] + h * v[a] - 0.5 * h * h * g[a];
            assert!((q[a] - taylor).abs() < 1e-11);
        }
        assert_eq!(sp.geodesic(&p, &[0.0; 3], 1.0).0, p.to_vec());
    }
}
