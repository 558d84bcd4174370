//! Elementary symmetric functions of principal curvatures, normalized mean
//! curvatures and Newton tensors.
//!
//! `σ_r` is evaluated by expanding `∏ (1 + κ_i t)` one factor at a time,
//! which costs `O(n·r)` and never forms power sums, so mixed-sign spectra
//! keep full relative accuracy.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::{binomial, Error, Result};

const ALGEBRA_TOL: f64 = 1e-11;
const FD_TOL: f64 = 1e-6;

/// Principal curvatures `κ_1..κ_n` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureSpectrum {
    values: Vec<f64>,
}

impl CurvatureSpectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("spectrum must be nonempty".into()));
        }
        if values.iter().any(|k| !k.is_finite()) {
            return Err(Error::Validation("spectrum entries must be finite".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// All of `σ_0..σ_n` for the given curvatures.
pub fn sigma_all(kappa: &[f64]) -> Vec<f64> {
    let n = kappa.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (j, &k) in kappa.iter().enumerate() {
        for r in (1..=j + 1).rev() {
            e[r] += k * e[r - 1];
        }
    }
    e
}

/// `σ_r(κ)` with `σ_0 = 1` and `σ_r = 0` for `r > n`.
pub fn sigma(kappa: &[f64], r: usize) -> f64 {
    let n = kappa.len();
    if r > n {
        return 0.0;
    }
    let mut e = vec![0.0; r + 1];
    e[0] = 1.0;
    for (j, &k) in kappa.iter().enumerate() {
        for s in (1..=(j + 1).min(r)).rev() {
            e[s] += k * e[s - 1];
        }
    }
    e[r]
}

/// `σ_r` of the spectrum; zero above the dimension.
pub fn elementary_symmetric(spectrum: &CurvatureSpectrum, r: usize) -> f64 {
    sigma(&spectrum.values, r)
}

/// `H_r = σ_r / C(n, r)`.
pub fn normalized_mean_curvature(spectrum: &CurvatureSpectrum, r: usize) -> Result<f64> {
    let n = spectrum.dim();
    if r > n {
        return Err(Error::Argument(format!("H_r needs r <= n, got r={r}, n={n}")));
    }
    Ok(sigma(&spectrum.values, r) / binomial(n as i64, r as i64))
}

/// `H_r` from plain curvatures, zero for `r > n`.
pub fn mean_curvature(kappa: &[f64], r: usize) -> f64 {
    let n = kappa.len();
    if r > n {
        return 0.0;
    }
    sigma(kappa, r) / binomial(n as i64, r as i64)
}

/// Shape operator `S = g^{-1} h` stored as a mixed tensor together with `g`.
#[derive(Debug, Clone)]
pub struct ShapeOperator {
    matrix: DMatrix<f64>,
    metric: DMatrix<f64>,
}

impl ShapeOperator {
    /// Validates that `g` is SPD and `g·S` is symmetric.
    pub fn new(matrix: DMatrix<f64>, metric: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n || metric.nrows() != n || metric.ncols() != n || n == 0 {
            return Err(Error::Validation("shape operator and metric must be square of equal size".into()));
        }
        let asym = (&metric - metric.transpose()).norm();
        if asym > 1e-12 * metric.norm() {
            return Err(Error::Validation("metric is not symmetric".into()));
        }
        let min_eig = SymmetricEigen::new(metric.clone()).eigenvalues.min();
        if !(min_eig > 0.0) {
            return Err(Error::Validation(format!("metric not positive definite (min eigenvalue {min_eig:e})")));
        }
        let gs = &metric * &matrix;
        let defect = (&gs - gs.transpose()).norm();
        if defect > 1e-12 * gs.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::Validation(format!("shape operator is not self-adjoint (defect {defect:e})")));
        }
        Ok(Self { matrix, metric })
    }

    /// Builds `S` from the second fundamental form `h_ij` and metric `g_ij`.
    pub fn from_forms(h: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(g.clone())
            .ok_or_else(|| Error::Validation("metric not positive definite".into()))?;
        Self::new(chol.solve(h), g.clone())
    }

    /// Euclidean-metric convenience.
    pub fn from_symmetric(h: DMatrix<f64>) -> Result<Self> {
        let n = h.nrows();
        Self::new(h, DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    /// Principal curvatures in ascending order (g-symmetric eigenproblem).
    pub fn spectrum(&self) -> CurvatureSpectrum {
        let (vals, _) = g_symmetric_eigen(&self.metric, &(&self.metric * &self.matrix));
        CurvatureSpectrum { values: vals }
    }
}

/// Solves `h v = κ g v` for SPD `g`; ascending eigenvalues and the
/// eigenvectors as columns in original coordinates (g-orthonormal).
pub fn g_symmetric_eigen(g: &DMatrix<f64>, h: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let l = Cholesky::new(g.clone()).expect("metric must be SPD").l();
    let linv = l.clone().try_inverse().expect("Cholesky factor invertible");
    let mut m = &linv * h * linv.transpose();
    m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let q = DMatrix::from_fn(g.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, linv.transpose() * q)
}

/// Newton tensor `P_r` as a mixed tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonTensor {
    pub order: usize,
    pub matrix: DMatrix<f64>,
}

/// `P_0..P_{count-1}` by `P_r = σ_r I − P_{r−1} S`, without validation.
pub fn newton_sequence(s: &DMatrix<f64>, sigmas: &[f64], count: usize) -> Vec<DMatrix<f64>> {
    let n = s.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(count);
    for r in 0..count {
        if r == 0 {
            out.push(id.clone());
        } else {
            let prev = &out[r - 1];
            let sr = sigmas.get(r).copied().unwrap_or(0.0);
            out.push(&id * sr - prev * s);
        }
    }
    out
}

pub fn newton_tensor(shape: &ShapeOperator, r: usize) -> Result<NewtonTensor> {
    let n = shape.dim();
    if r >= n {
        return Err(Error::Argument(format!("Newton tensor order must be <= n-1, got r={r}, n={n}")));
    }
    let sig = sigma_all(shape.spectrum().values());
    let seq = newton_sequence(&shape.matrix, &sig, r + 1);
    Ok(NewtonTensor { order: r, matrix: seq[r].clone() })
}

fn abs_sigma(kappa: &[f64], r: usize) -> f64 {
    let a: Vec<f64> = kappa.iter().map(|k| k.abs()).collect();
    sigma(&a, r)
}

/// Magnitude of the alternating sum `Σ_j (−1)^j σ_{r−j} tr(S^{j+shift})`
/// behind `tr(P_r S^shift)`, taken term by term on `|κ|`.
fn trace_scale(kappa: &[f64], r: usize, shift: usize) -> f64 {
    let a: Vec<f64> = kappa.iter().map(|k| k.abs()).collect();
    (0..=r).map(|j| sigma(&a, r - j) * a.iter().map(|x| x.powi((j + shift) as i32)).sum::<f64>()).sum()
}

fn check(name: &str, got: f64, want: f64, scale: f64, tol: f64) -> Result<()> {
    let denom = scale.max(got.abs()).max(want.abs()).max(f64::MIN_POSITIVE);
    let rel = (got - want).abs() / denom;
    if rel > tol {
        return Err(Error::NumericalConsistency(format!(
            "{name}: got {got:e}, expected {want:e} (relative {rel:e})"
        )));
    }
    Ok(())
}

/// `(tr P_r, tr(P_r h), tr(P_r h²))` with the three closed forms checked.
pub fn newton_traces(shape: &ShapeOperator, r: usize) -> Result<(f64, f64, f64)> {
    let n = shape.dim();
    let p = newton_tensor(shape, r)?.matrix;
    let s = &shape.matrix;
    let t0 = p.trace();
    let t1 = (&p * s).trace();
    let t2 = (&p * s * s).trace();
    let kappa = shape.spectrum().values;
    let sg = |k| sigma(&kappa, k);
    let scale = |shift| trace_scale(&kappa, r, shift);
    check("tr P_r", t0, (n - r) as f64 * sg(r), scale(0), ALGEBRA_TOL)?;
    check("tr(P_r h)", t1, (r + 1) as f64 * sg(r + 1), scale(1), ALGEBRA_TOL)?;
    check("tr(P_r h^2)", t2, sg(1) * sg(r + 1) - (r + 2) as f64 * sg(r + 2), scale(2), ALGEBRA_TOL)?;
    Ok((t0, t1, t2))
}

/// `∂σ_r/∂h = P_{r−1}`, cross-checked against one-sided differences on the
/// spectrum in the principal frame.
pub fn sigma_gradient(shape: &ShapeOperator, r: usize) -> Result<DMatrix<f64>> {
    let n = shape.dim();
    if r == 0 || r > n {
        return Err(Error::Argument(format!("sigma_gradient needs 1 <= r <= n, got r={r}, n={n}")));
    }
    let kappa = shape.spectrum().values;
    let sig = sigma_all(&kappa);
    let p = newton_sequence(&shape.matrix, &sig, r).pop().expect("r >= 1");
    let (_, vecs) = g_symmetric_eigen(&shape.metric, &(&shape.metric * &shape.matrix));
    // Principal-frame components of P_{r-1}: V^{-1} P V with g-orthonormal V.
    let vinv = vecs.transpose() * &shape.metric;
    let diag = &vinv * &p * &vecs;
    let kmax = kappa.iter().fold(1.0_f64, |m, k| m.max(k.abs()));
    let eps = 1e-7 * kmax;
    let base = sigma(&kappa, r);
    let scale = abs_sigma(&kappa, r - 1).max(f64::MIN_POSITIVE);
    for i in 0..n {
        let mut bumped = kappa.clone();
        bumped[i] += eps;
        let fd = (sigma(&bumped, r) - base) / eps;
        let want = diag[(i, i)];
        let rel = (fd - want).abs() / scale.max(want.abs());
        if rel > FD_TOL {
            return Err(Error::NumericalConsistency(format!(
                "sigma_gradient: finite difference {fd:e} vs P_(r-1) entry {want:e} (relative {rel:e})"
            )));
        }
    }
    Ok(p)
}

/// Membership in `Γ_l⁺ = {σ_1, …, σ_l > 0}`.
pub fn garding_cone_contains(spectrum: &CurvatureSpectrum, l: usize) -> Result<bool> {
    let n = spectrum.dim();
    if l == 0 || l > n {
        return Err(Error::Argument(format!("cone index must satisfy 1 <= l <= n, got l={l}, n={n}")));
    }
    let sig = sigma_all(&spectrum.values);
    Ok((1..=l).all(|i| sig[i] > 0.0))
}

/// `H_k H_{l−1} − H_{k−1} H_l`, nonnegative on `Γ_l⁺`.
pub fn newton_maclaurin_gap(spectrum: &CurvatureSpectrum, k: usize, l: usize) -> Result<f64> {
    let n = spectrum.dim();
    if !(1 <= k && k < l && l <= n) {
        return Err(Error::Argument(format!("need 1 <= k < l <= n, got k={k}, l={l}, n={n}")));
    }
    if !garding_cone_contains(spectrum, l)? {
        return Err(Error::Precondition(format!("spectrum outside the Garding cone of order {l}")));
    }
    let h = |r| mean_curvature(&spectrum.values, r);
    Ok(h(k) * h(l - 1) - h(k - 1) * h(l))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(v: &[f64]) -> CurvatureSpectrum {
        CurvatureSpectrum::new(v.to_vec()).unwrap()
    }

    fn diag(v: &[f64]) -> ShapeOperator {
        ShapeOperator::from_symmetric(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(v))).unwrap()
    }

    #[test]
    fn traces_with_cancelling_top_sigma() {
        // σ_5 ≈ −1.3e-3 while the terms of tr(P_4 S) reach 1e3.
        let g = DMatrix::from_row_slice(5, 5, &[
            1.6475452923960963, -0.3808128367121059, 0.5125373288134352, -0.4272900753395662, -0.06508210792691933,
            -0.3808128367121059, 1.7225835941919245, 0.881430486220584, 0.24116135544675482, 0.12712180357688577,
            0.5125373288134352, 0.881430486220584, 1.9582738048991613, 0.0, 0.0,
            -0.4272900753395662, 0.24116135544675482, 0.0, 0.7705944858044225, 0.041215231866917015,
            -0.06508210792691933, 0.12712180357688577, 0.0, 0.041215231866917015, 0.6553176204116636,
        ]);
        let h = DMatrix::from_row_slice(5, 5, &[
            -1.290493831866689, -1.1897141314786799, 0.9767989013666867, -0.8451467274453682, -0.4607428747645249,
            -1.1897141314786799, -0.12645865117049665, -1.0908667375762309, -0.4239829607715199, 0.8672485543362594,
            0.9767989013666867, -1.0908667375762309, -0.9914153411277866, -0.26112436495040103, -0.6391574188209137,
            -0.8451467274453682, -0.4239829607715199, -0.26112436495040103, -0.6481575947011042, 0.2858381920679086,
            -0.4607428747645249, 0.8672485543362594, -0.6391574188209137, 0.2858381920679086, 0.9084999319342044,
        ]);
        let shape = ShapeOperator::from_forms(&h, &g).unwrap();
        for r in 0..5 {
            newton_traces(&shape, r).unwrap();
        }
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(elementary_symmetric(&spec(&[1.0, 1.0, 1.0, 1.0]), 2), 6.0);
        assert_eq!(elementary_symmetric(&spec(&[1.0, 2.0, 3.0]), 2), 11.0);
        assert_eq!(elementary_symmetric(&spec(&[1.0, 2.0, 3.0]), 4), 0.0);
        assert_eq!(elementary_symmetric(&spec(&[0.3, -2.0]), 0), 1.0);
    }

    #[test]
    fn normalized_examples() {
        let k = spec(&[1.0, 2.0, 3.0]);
        assert!((normalized_mean_curvature(&k, 2).unwrap() - 11.0 / 3.0).abs() < 1e-15);
        assert_eq!(normalized_mean_curvature(&k, 0).unwrap(), 1.0);
        assert!(normalized_mean_curvature(&k, 4).is_err());
        for r in 0..=5 {
            assert!((normalized_mean_curvature(&spec(&[1.0; 5]), r).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn newton_tensor_examples() {
        let s = diag(&[1.0, 2.0, 3.0]);
        assert_eq!(newton_tensor(&s, 0).unwrap().matrix, DMatrix::identity(3, 3));
        let p1 = newton_tensor(&s, 1).unwrap().matrix;
        let p2 = newton_tensor(&s, 2).unwrap().matrix;
        for (i, (a, b)) in [(5.0, 6.0), (4.0, 3.0), (3.0, 2.0)].iter().enumerate() {
            assert!((p1[(i, i)] - a).abs() < 1e-13);
            assert!((p2[(i, i)] - b).abs() < 1e-13);
        }
        assert!(newton_tensor(&s, 3).is_err());
    }

    #[test]
    fn newton_trace_examples() {
        let t = newton_traces(&diag(&[1.0, 2.0, 3.0]), 1).unwrap();
        assert!((t.0 - 12.0).abs() < 1e-12 && (t.1 - 22.0).abs() < 1e-12 && (t.2 - 48.0).abs() < 1e-12);
        let t = newton_traces(&diag(&[1.0, 1.0]), 0).unwrap();
        assert!((t.0 - 2.0).abs() < 1e-14 && (t.1 - 2.0).abs() < 1e-14 && (t.2 - 2.0).abs() < 1e-14);
        let t = newton_traces(&diag(&[2.0, 2.0, 2.0]), 1).unwrap();
        assert!((t.0 - 12.0).abs() < 1e-12 && (t.1 - 24.0).abs() < 1e-12 && (t.2 - 48.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_gradient_examples() {
        let g = sigma_gradient(&diag(&[1.0, 2.0, 3.0]), 2).unwrap();
        assert!((g[(0, 0)] - 5.0).abs() < 1e-13 && (g[(1, 1)] - 4.0).abs() < 1e-13 && (g[(2, 2)] - 3.0).abs() < 1e-13);
        let g = sigma_gradient(&diag(&[0.7, -1.2]), 1).unwrap();
        assert_eq!(g, DMatrix::identity(2, 2));
        let g = sigma_gradient(&diag(&[1.0, 1.0, 1.0]), 3).unwrap();
        assert!((g - DMatrix::identity(3, 3)).norm() < 1e-13);
    }

    #[test]
    fn cone_and_gap_examples() {
        assert!(garding_cone_contains(&spec(&[1.0, 2.0, 3.0]), 3).unwrap());
        assert!(!garding_cone_contains(&spec(&[2.0, 2.0, -1.0]), 2).unwrap());
        assert!(garding_cone_contains(&spec(&[1.0; 4]), 4).unwrap());
        assert!(newton_maclaurin_gap(&spec(&[1.0, 1.0, 1.0]), 1, 2).unwrap().abs() < 1e-15);
        let g = newton_maclaurin_gap(&spec(&[1.0, 2.0, 3.0]), 1, 2).unwrap();
        assert!((g - 1.0 / 3.0).abs() < 1e-14);
        assert!(newton_maclaurin_gap(&spec(&[2.5; 3]), 2, 3).unwrap().abs() < 1e-12);
        assert!(matches!(newton_maclaurin_gap(&spec(&[2.0, 2.0, -1.0]), 1, 2), Err(Error::Precondition(_))));
    }

    #[test]
    fn non_self_adjoint_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(ShapeOperator::from_symmetric(m), Err(Error::Validation(_))));
    }

    #[test]
    fn nondiagonal_metric_spectrum() {
        // h = g·diag-like: S similar to diag(1,3) under a skewed metric.
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 1.0]);
        let s_sym = DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.7, 3.0]);
        let h = a.transpose() * &s_sym * &a;
        let gg = a.transpose() * &g * &a;
        let shape = ShapeOperator::from_forms(&h, &gg).unwrap();
        let direct = g_symmetric_eigen(&gg, &h).0;
        let via = shape.spectrum();
        for (x, y) in direct.iter().zip(via.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
