//! Tensor-product collocation grids on polar charts.
//!
//! Axis kinds:
//!
//! * `Radial`: polar distance `ψ ∈ (0, Ψ)` from a pole at `ψ = 0` with the
//!   boundary face at `ψ = Ψ`. Nodes are `ψ_k = sqrt(t_k)` for Gauss nodes
//!   `t_k` on `(0, Ψ²)`, so the innermost ring sits at `O(Ψ/N)` instead of
//!   `O(Ψ/N²)`. Lines are continued through the pole onto the antipodal
//!   line and differentiated on the doubled node set `±ψ_k`.
//! * `Polar`: an angle `α ∈ (0, π)` with poles at both ends. Midpoint
//!   nodes; lines continue across both poles onto a circle of `2N`
//!   equispaced points (double Fourier sphere). Quadrature is Fejér's first
//!   rule in `cos α`, which expects the integrand to carry `sin α`.
//! * `Periodic`: equispaced nodes, Fourier differentiation.
//! * `Legendre`: plain Gauss-Legendre axis on an interval.
//!
//! Continuing a line along axis `k` through a pole reflects every later
//! `Polar` axis (`α → π − α`) and shifts every later `Periodic` axis by half
//! a period. Scalar fields are even under that map; tensor components pick
//! up a sign per index along the doubled axis or a reflected axis.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisKind {
    Legendre,
    Periodic,
    Radial,
    Polar,
}

#[derive(Debug, Clone)]
pub struct Axis {
    pub kind: AxisKind,
    pub lower: f64,
    pub upper: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Rows for the axis nodes; `N × N`, or `N × 2N` on doubled lines.
    d1: DMatrix<f64>,
    d2: DMatrix<f64>,
    /// Nodes and barycentric weights of the (possibly doubled) line.
    line_nodes: Vec<f64>,
    bary: Vec<f64>,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss-Jacobi nodes and weights for `(1 + x)^β` on `[-1, 1]`
/// (Golub-Welsch), ascending.
pub fn gauss_jacobi_right(n: usize, beta: f64) -> (Vec<f64>, Vec<f64>) {
    if beta == 0.0 {
        return gauss_legendre(n);
    }
    let (a, b) = (0.0, beta);
    let mut t = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        t[(k, k)] = if k == 0 { (b - a) / (a + b + 2.0) } else { (b * b - a * a) / (s * (s + 2.0)) };
        if k + 1 < n {
            let j = kf + 1.0;
            let s = 2.0 * j + a + b;
            let off = (4.0 * j * (j + a) * (j + b) * (j + a + b) / (s * s * (s + 1.0) * (s - 1.0))).sqrt();
            t[(k, k + 1)] = off;
            t[(k + 1, k)] = off;
        }
    }
    let eig = t.symmetric_eigen();
    let mu0 = 2f64.powf(b + 1.0) / (b + 1.0);
    let mut pairs: Vec<(f64, f64)> =
        (0..n).map(|k| (eig.eigenvalues[k], mu0 * eig.eigenvectors[(0, k)].powi(2))).collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    pairs.into_iter().unzip()
}

/// Barycentric weights for arbitrary distinct nodes, scaled against
/// overflow by the capacity of the interval.
fn barycentric_weights(x: &[f64]) -> Vec<f64> {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let c = 4.0 / (hi - lo);
    (0..x.len())
        .map(|j| {
            let p: f64 = (0..x.len()).filter(|&k| k != j).map(|k| c * (x[j] - x[k])).product();
            1.0 / p
        })
        .collect()
}

fn barycentric_d1(x: &[f64], b: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = (b[j] / b[i]) / (x[i] - x[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    d
}

/// Fourier differentiation matrices on `count` equispaced points of a
/// circle of the given period.
fn fourier_matrices(period: f64, count: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let scale = 2.0 * std::f64::consts::PI / period;
    let ht = 2.0 * std::f64::consts::PI / count as f64;
    let mut d1 = DMatrix::zeros(count, count);
    let mut d2 = DMatrix::zeros(count, count);
    for i in 0..count {
        for j in 0..count {
            let k = i as i64 - j as i64;
            let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            if k == 0 {
                d2[(i, j)] = (-std::f64::consts::PI * std::f64::consts::PI / (3.0 * ht * ht) - 1.0 / 6.0) * scale * scale;
            } else {
                let arg = k as f64 * ht / 2.0;
                d1[(i, j)] = 0.5 * sign / arg.tan() * scale;
                d2[(i, j)] = -0.5 * sign / (arg.sin() * arg.sin()) * scale * scale;
            }
        }
    }
    (d1, d2)
}

impl Axis {
    /// Gauss-Legendre axis on `[lower, upper]`.
    pub fn legendre(lower: f64, upper: f64, count: usize) -> Self {
        let (x, w) = gauss_legendre(count);
        let half = 0.5 * (upper - lower);
        let nodes: Vec<f64> = x.iter().map(|&t| lower + half * (t + 1.0)).collect();
        let weights: Vec<f64> = w.iter().map(|&t| t * half).collect();
        // Closed form for Gauss nodes: (−1)^j sqrt((1 − x_j²) w_j).
        let bary: Vec<f64> = (0..count)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                s * ((1.0 - x[j] * x[j]) * w[j]).sqrt()
            })
            .collect();
        let d1 = barycentric_d1(&nodes, &bary);
        let d2 = &d1 * &d1;
        Self { kind: AxisKind::Legendre, lower, upper, line_nodes: nodes.clone(), nodes, weights, d1, d2, bary }
    }

    /// Radial axis on `(0, upper)` with a pole at 0, for integrands
    /// `ψ^{dim−1} A(ψ²)` (polar coordinates on a `dim`-ball, averaged over
    /// directions).
    pub fn radial(upper: f64, count: usize, dim: usize) -> Self {
        let beta = 0.5 * (dim as f64 - 2.0);
        let (x, w) = gauss_jacobi_right(count, beta);
        let t_half = 0.5 * upper * upper;
        let nodes: Vec<f64> = x.iter().map(|&s| (t_half * (s + 1.0)).sqrt()).collect();
        // ∫_0^Ψ ψ^{d−1}A dψ = ½∫_0^{Ψ²} t^β A dt.
        let weights: Vec<f64> = w
            .iter()
            .zip(&nodes)
            .map(|(wi, p)| 0.5 * wi * t_half.powf(beta + 1.0) / p.powi(dim as i32 - 1))
            .collect();
        let mut line_nodes: Vec<f64> = nodes.iter().rev().map(|p| -p).collect();
        line_nodes.extend(&nodes);
        let bary = barycentric_weights(&line_nodes);
        let full = barycentric_d1(&line_nodes, &bary);
        let full2 = &full * &full;
        let rows = |m: &DMatrix<f64>| m.rows(count, count).into_owned();
        Self { kind: AxisKind::Radial, lower: 0.0, upper, nodes, weights, d1: rows(&full), d2: rows(&full2), line_nodes, bary }
    }

    /// Midpoint axis on `(0, π)` with poles at both ends, for integrands
    /// `sin^e α · F` with `F` smooth on the sphere (`e` = 1 or 2).
    pub fn polar(count: usize, sin_power: u32) -> Self {
        let pi = std::f64::consts::PI;
        let nodes: Vec<f64> = (0..count).map(|a| (a as f64 + 0.5) * pi / count as f64).collect();
        // Moments ∫_0^π sin^e α cos(jα) dα.
        let moment = |j: usize| -> f64 {
            match (sin_power, j) {
                (1, 1) => 0.0,
                (1, _) => (1.0 + if j % 2 == 0 { 1.0 } else { -1.0 }) / (1.0 - (j * j) as f64),
                (2, 0) => pi / 2.0,
                (2, 2) => -pi / 4.0,
                (2, _) => 0.0,
                _ => panic!("polar axes support sin^1 and sin^2 densities"),
            }
        };
        // Interpolate in Chebyshev polynomials of cos α through the nodes.
        let weights: Vec<f64> = nodes
            .iter()
            .map(|&th| {
                let s: f64 = (0..count).map(|j| (if j == 0 { 0.5 } else { 1.0 }) * moment(j) * (j as f64 * th).cos()).sum();
                (2.0 / count as f64) * s / th.sin().powi(sin_power as i32)
            })
            .collect();
        let (full, full2) = fourier_matrices(2.0 * pi, 2 * count);
        let rows = |m: &DMatrix<f64>| m.rows(0, count).into_owned();
        Self {
            kind: AxisKind::Polar,
            lower: 0.0,
            upper: pi,
            nodes,
            weights,
            d1: rows(&full),
            d2: rows(&full2),
            line_nodes: Vec::new(),
            bary: Vec::new(),
        }
    }

    /// Equispaced periodic axis starting at `lower` with the given period.
    pub fn periodic(lower: f64, period: f64, count: usize) -> Self {
        assert!(count % 2 == 0, "periodic axes need an even node count");
        let h = period / count as f64;
        let nodes: Vec<f64> = (0..count).map(|j| lower + j as f64 * h).collect();
        let weights = vec![h; count];
        let (d1, d2) = fourier_matrices(period, count);
        Self {
            kind: AxisKind::Periodic,
            lower,
            upper: lower + period,
            nodes,
            weights,
            d1,
            d2,
            line_nodes: Vec::new(),
            bary: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn doubled(&self) -> bool {
        matches!(self.kind, AxisKind::Radial | AxisKind::Polar)
    }

    /// Rows `(ℓ_j(x), ℓ_j'(x), ℓ_j''(x))` of the interpolant at `x` over this
    /// axis's line nodes (the doubled line for a radial axis).
    pub fn interpolation_rows(&self, x: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        assert!(matches!(self.kind, AxisKind::Legendre | AxisKind::Radial));
        let m = self.line_nodes.len();
        let terms: Vec<f64> = (0..m).map(|j| self.bary[j] / (x - self.line_nodes[j])).collect();
        let total: f64 = terms.iter().sum();
        let row: Vec<f64> = terms.iter().map(|t| t / total).collect();
        let full = barycentric_d1(&self.line_nodes, &self.bary);
        let full2 = &full * &full;
        let mut r1 = vec![0.0; m];
        let mut r2 = vec![0.0; m];
        for j in 0..m {
            for k in 0..m {
                r1[j] += row[k] * full[(k, j)];
                r2[j] += row[k] * full2[(k, j)];
            }
        }
        (row, r1, r2)
    }
}

/// Tensor grid with axis 0 slowest.
#[derive(Debug, Clone)]
pub struct TensorGrid {
    pub axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
}

impl TensorGrid {
    pub fn new(axes: Vec<Axis>) -> Self {
        let mut strides = vec![1; axes.len()];
        for k in (0..axes.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].len();
        }
        let len = axes.iter().map(Axis::len).product();
        Self { axes, strides, len }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for k in 0..self.dim() {
            out[k] = idx / self.strides[k];
            idx %= self.strides[k];
        }
        out
    }

    fn flat(&self, mi: &[usize]) -> usize {
        mi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).iter().enumerate().map(|(k, &i)| self.axes[k].nodes[i]).collect()
    }

    pub fn weight(&self, idx: usize) -> f64 {
        self.multi_index(idx).iter().enumerate().map(|(k, &i)| self.axes[k].weights[i]).product()
    }

    /// Node reached by continuing a line along `axis` through a pole.
    pub fn partner(&self, idx: usize, axis: usize) -> usize {
        let mut mi = self.multi_index(idx);
        for k in axis + 1..self.dim() {
            let n = self.axes[k].len();
            match self.axes[k].kind {
                AxisKind::Polar => mi[k] = n - 1 - mi[k],
                AxisKind::Periodic => mi[k] = (mi[k] + n / 2) % n,
                _ => {}
            }
        }
        self.flat(&mi)
    }

    /// Sign of a tensor component with the given coordinate indices under
    /// the continuation through the pole of `axis`.
    pub fn component_parity(&self, axis: usize, indices: &[usize]) -> f64 {
        let flips = indices
            .iter()
            .filter(|&&i| i == axis || (i > axis && self.axes[i].kind == AxisKind::Polar))
            .count();
        if flips % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Start indices of every line along `axis`.
    fn line_starts(&self, axis: usize) -> Vec<usize> {
        (0..self.len).filter(|&i| (i / self.strides[axis]) % self.axes[axis].len() == 0).collect()
    }

    /// Values along the (possibly doubled) line through `start`.
    fn line(&self, values: &[f64], start: usize, axis: usize, parity: f64) -> Vec<f64> {
        let ax = &self.axes[axis];
        let n = ax.len();
        let stride = self.strides[axis];
        let own = (0..n).map(|k| values[start + k * stride]);
        if !ax.doubled() {
            return own.collect();
        }
        let p = self.partner(start, axis);
        let other: Vec<f64> = (0..n).map(|k| parity * values[p + k * stride]).collect();
        match ax.kind {
            AxisKind::Radial => other.into_iter().rev().chain(own).collect(),
            AxisKind::Polar => own.chain(other.into_iter().rev()).collect(),
            _ => unreachable!(),
        }
    }

    fn apply(&self, values: &[f64], axis: usize, m: &DMatrix<f64>, parity: f64) -> Vec<f64> {
        let n = self.axes[axis].len();
        let stride = self.strides[axis];
        let starts = self.line_starts(axis);
        let lines: Vec<(usize, Vec<f64>)> = starts
            .par_iter()
            .map(|&s| {
                let line = self.line(values, s, axis, parity);
                // The operator annihilates constants; removing the line mean
                // keeps roundoff relative to the line's variation.
                let mean = line.iter().sum::<f64>() / line.len() as f64;
                let centred: Vec<f64> = line.iter().map(|v| v - mean).collect();
                let out = (0..n).map(|i| (0..line.len()).map(|j| m[(i, j)] * centred[j]).sum::<f64>()).collect();
                (s, out)
            })
            .collect();
        let mut result = vec![0.0; self.len];
        for (s, out) in lines {
            for (k, v) in out.into_iter().enumerate() {
                result[s + k * stride] = v;
            }
        }
        result
    }

    /// `∂_axis` of a scalar field.
    pub fn derivative(&self, values: &[f64], axis: usize) -> Vec<f64> {
        self.apply(values, axis, &self.axes[axis].d1, 1.0)
    }

    /// `∂_axis` of a quantity with the given parity under the continuation
    /// through the pole of `axis` (see [`TensorGrid::component_parity`]).
    pub fn derivative_with_parity(&self, values: &[f64], axis: usize, parity: f64) -> Vec<f64> {
        self.apply(values, axis, &self.axes[axis].d1, parity)
    }

    /// `∂_a ∂_b` of a scalar field.
    pub fn second_derivative(&self, values: &[f64], a: usize, b: usize) -> Vec<f64> {
        if a == b {
            self.apply(values, a, &self.axes[a].d2, 1.0)
        } else {
            // Lower axis first: its derivative stays even under the
            // continuation of the higher axis.
            let (lo, hi) = (a.min(b), a.max(b));
            self.derivative(&self.derivative(values, lo), hi)
        }
    }

    /// Boundary face grid (axes 1..).
    pub fn face(&self) -> TensorGrid {
        TensorGrid::new(self.axes[1..].to_vec())
    }

    /// Interpolates a scalar field and its derivatives along axis 0 to the
    /// upper end of axis 0; one entry per face node per requested order.
    pub fn restrict_upper(&self, values: &[f64], order: usize) -> Result<Vec<Vec<f64>>> {
        let ax = &self.axes[0];
        if !matches!(ax.kind, AxisKind::Legendre | AxisKind::Radial) {
            return Err(Error::Discretization("boundary face needs a Legendre or radial axis 0".into()));
        }
        let (r0, r1, r2) = ax.interpolation_rows(ax.upper);
        let rows = [r0, r1, r2];
        let face_len = self.strides[0];
        let lines: Vec<Vec<f64>> = (0..face_len).map(|f| self.line(values, f, 0, 1.0)).collect();
        let mut out = Vec::new();
        for (deriv, row) in rows.iter().enumerate().take(order + 1) {
            let v: Vec<f64> = lines
                .iter()
                .map(|line| {
                    let mean = line.iter().sum::<f64>() / line.len() as f64;
                    let shift = if deriv == 0 { mean } else { 0.0 };
                    shift + row.iter().zip(line).map(|(r, x)| r * (x - mean)).sum::<f64>()
                })
                .collect();
            out.push(v);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gauss_nodes_integrate_polynomials() {
        for n in [1, 2, 5, 16, 64] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let want = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
                assert!((got - want).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn legendre_differentiation_is_spectral() {
        let ax = Axis::legendre(0.0, 2.0, 24);
        let grid = TensorGrid::new(vec![ax.clone()]);
        let f: Vec<f64> = ax.nodes.iter().map(|x| (1.3 * x).sin()).collect();
        let d = grid.derivative(&f, 0);
        let dd = grid.second_derivative(&f, 0, 0);
        for (k, x) in ax.nodes.iter().enumerate() {
            assert!((d[k] - 1.3 * (1.3 * x).cos()).abs() < 1e-11);
            assert!((dd[k] + 1.69 * (1.3 * x).sin()).abs() < 1e-9);
        }
        let (r0, r1, r2) = ax.interpolation_rows(2.0);
        let v: f64 = r0.iter().zip(&f).map(|(a, b)| a * b).sum();
        let v1: f64 = r1.iter().zip(&f).map(|(a, b)| a * b).sum();
        let v2: f64 = r2.iter().zip(&f).map(|(a, b)| a * b).sum();
        assert!((v - 2.6f64.sin()).abs() < 1e-12);
        assert!((v1 - 1.3 * 2.6f64.cos()).abs() < 1e-10);
        assert!((v2 + 1.69 * 2.6f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn periodic_differentiation_is_exact_on_trig() {
        let ax = Axis::periodic(0.0, 2.0 * PI, 16);
        let grid = TensorGrid::new(vec![ax.clone()]);
        let f: Vec<f64> = ax.nodes.iter().map(|x| (3.0 * x).cos() + 0.5 * x.sin()).collect();
        let d = grid.derivative(&f, 0);
        let dd = grid.second_derivative(&f, 0, 0);
        for (k, x) in ax.nodes.iter().enumerate() {
            assert!((d[k] - (-3.0 * (3.0 * x).sin() + 0.5 * x.cos())).abs() < 1e-12);
            assert!((dd[k] - (-9.0 * (3.0 * x).cos() - 0.5 * x.sin())).abs() < 1e-11);
        }
    }

    fn disk(count: usize) -> TensorGrid {
        TensorGrid::new(vec![Axis::radial(1.2, count, 2), Axis::periodic(0.0, 2.0 * PI, 2 * count)])
    }

    // Smooth function on the plane in polar coordinates.
    fn planar(p: &[f64]) -> f64 {
        let (x, y) = (p[0] * p[1].cos(), p[0] * p[1].sin());
        (0.7 * x).sin() * (1.0 + y * y) + x * y
    }

    #[test]
    fn radial_quadrature_on_disk() {
        let g = disk(16);
        let area: f64 = (0..g.len()).map(|i| g.weight(i) * g.point(i)[0]).sum();
        assert!((area - PI * 1.44).abs() < 1e-13);
        // ∫ r² dA = π R⁴ / 2
        let m2: f64 = (0..g.len()).map(|i| g.weight(i) * g.point(i)[0].powi(3)).sum();
        assert!((m2 - PI * 1.2f64.powi(4) / 2.0).abs() < 1e-13);
        assert!(g.axes[0].nodes[0] > 0.02);
    }

    #[test]
    fn radial_derivatives_through_the_pole() {
        let g = disk(20);
        let f: Vec<f64> = (0..g.len()).map(|i| planar(&g.point(i))).collect();
        let h = 1e-5;
        let dr = g.derivative(&f, 0);
        let drr = g.second_derivative(&f, 0, 0);
        let drp = g.second_derivative(&f, 1, 0);
        for i in 0..g.len() {
            let p = g.point(i);
            let at = |dr: f64, dp: f64| planar(&[p[0] + dr, p[1] + dp]);
            let fd_r = (at(h, 0.0) - at(-h, 0.0)) / (2.0 * h);
            let fd_rr = (at(h, 0.0) - 2.0 * at(0.0, 0.0) + at(-h, 0.0)) / (h * h);
            let fd_rp = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
            assert!((dr[i] - fd_r).abs() < 1e-8);
            assert!((drr[i] - fd_rr).abs() < 1e-4);
            assert!((drp[i] - fd_rp).abs() < 1e-4);
        }
        let r = g.restrict_upper(&f, 2).unwrap();
        let face = g.face();
        for j in 0..face.len() {
            let phi = face.point(j)[0];
            assert!((r[0][j] - planar(&[1.2, phi])).abs() < 1e-12);
            let fd = (planar(&[1.2 + h, phi]) - planar(&[1.2 - h, phi])) / (2.0 * h);
            assert!((r[1][j] - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn polar_axis_on_the_sphere() {
        let g = TensorGrid::new(vec![Axis::polar(16, 1), Axis::periodic(0.0, 2.0 * PI, 16)]);
        // ∫_{S²} z² = 4π/3 with the sin α density supplied by the integrand.
        let z2: f64 = (0..g.len())
            .map(|i| {
                let p = g.point(i);
                g.weight(i) * p[0].sin() * p[0].cos().powi(2)
            })
            .sum();
        assert!((z2 - 4.0 * PI / 3.0).abs() < 1e-13);
        // Restriction of x·y + z to the sphere; derivatives in α.
        let f = |p: &[f64]| p[0].sin().powi(2) * p[1].cos() * p[1].sin() + p[0].cos();
        let vals: Vec<f64> = (0..g.len()).map(|i| f(&g.point(i))).collect();
        let da = g.derivative(&vals, 0);
        let dab = g.second_derivative(&vals, 0, 1);
        for i in 0..g.len() {
            let p = g.point(i);
            let want = 2.0 * p[0].sin() * p[0].cos() * p[1].cos() * p[1].sin() - p[0].sin();
            assert!((da[i] - want).abs() < 1e-12);
            let want = 2.0 * p[0].sin() * p[0].cos() * (2.0 * p[1]).cos();
            assert!((dab[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn three_dimensional_densities() {
        // Ball of radius 1.1 in polar coordinates: ∫ (1 + |x|² + x_1 x_3) dV.
        let g = TensorGrid::new(vec![Axis::radial(1.1, 10, 3), Axis::polar(8, 1), Axis::periodic(0.0, 2.0 * PI, 8)]);
        let got: f64 = (0..g.len())
            .map(|i| {
                let p = g.point(i);
                let x1 = p[0] * p[1].sin() * p[2].cos();
                let x3 = p[0] * p[1].cos();
                g.weight(i) * p[0] * p[0] * p[1].sin() * (1.0 + p[0] * p[0] + x1 * x3)
            })
            .sum();
        let want = 4.0 * PI * (1.1f64.powi(3) / 3.0 + 1.1f64.powi(5) / 5.0);
        assert!((got - want).abs() < 1e-13, "{got} {want}");
        // |S³| = 2π², with the sin²ψ density on a polar ψ axis.
        let s3 = Axis::polar(12, 2);
        let total: f64 = s3.nodes.iter().zip(&s3.weights).map(|(t, w)| w * t.sin().powi(2)).sum();
        assert!((total * 4.0 * PI - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn odd_components_use_parity() {
        // ∂_r of the odd quantity ∂_r f, versus ∂_rr f.
        let g = disk(16);
        let f: Vec<f64> = (0..g.len()).map(|i| planar(&g.point(i))).collect();
        let dr = g.derivative(&f, 0);
        let sign = g.component_parity(0, &[0]);
        assert_eq!(sign, -1.0);
        let again = g.derivative_with_parity(&dr, 0, sign);
        let direct = g.second_derivative(&f, 0, 0);
        for i in 0..g.len() {
            assert!((again[i] - direct[i]).abs() < 1e-8);
        }
    }
}
