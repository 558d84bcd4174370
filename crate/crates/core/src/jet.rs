//! Second-order forward-mode jets in up to three variables.
//!
//! Built-in embeddings are written once over [`Jet`] and yield exact first
//! and second parameter derivatives at any point.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub const MAX_VARS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: [f64; MAX_VARS],
    pub dd: [[f64; MAX_VARS]; MAX_VARS],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; MAX_VARS], dd: [[0.0; MAX_VARS]; MAX_VARS] }
    }

    /// The coordinate `u_i` evaluated at `value`.
    pub fn variable(value: f64, i: usize) -> Self {
        let mut j = Self::constant(value);
        j.d[i] = 1.0;
        j
    }

    /// Coordinates `u_0..u_{m-1}` at the point `u`.
    pub fn variables(u: &[f64]) -> Vec<Jet> {
        u.iter().enumerate().map(|(i, &x)| Jet::variable(x, i)).collect()
    }

    fn chain(self, g: f64, g1: f64, g2: f64) -> Self {
        let mut out = Self::constant(g);
        for i in 0..MAX_VARS {
            out.d[i] = g1 * self.d[i];
            for j in 0..MAX_VARS {
                out.dd[i][j] = g2 * self.d[i] * self.d[j] + g1 * self.dd[i][j];
            }
        }
        out
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.v))
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn powi(self, k: i32) -> Self {
        match k {
            0 => Self::constant(1.0),
            1 => self,
            _ => {
                let kf = k as f64;
                self.chain(self.v.powi(k), kf * self.v.powi(k - 1), kf * (kf - 1.0) * self.v.powi(k - 2))
            }
        }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        self.v += o.v;
        for i in 0..MAX_VARS {
            self.d[i] += o.d[i];
            for j in 0..MAX_VARS {
                self.dd[i][j] += o.dd[i][j];
            }
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut out = Jet::constant(self.v * o.v);
        for i in 0..MAX_VARS {
            out.d[i] = self.d[i] * o.v + self.v * o.d[i];
            for j in 0..MAX_VARS {
                out.dd[i][j] = self.dd[i][j] * o.v
                    + self.v * o.dd[i][j]
                    + self.d[i] * o.d[j]
                    + self.d[j] * o.d[i];
            }
        }
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, o: f64) -> Jet {
        self.v += o;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, o: f64) -> Jet {
        self.v -= o;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, o: f64) -> Jet {
        self.v *= o;
        for i in 0..MAX_VARS {
            self.d[i] *= o;
            for j in 0..MAX_VARS {
                self.dd[i][j] *= o;
            }
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, o: f64) -> Jet {
        self * (1.0 / o)
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        o * self
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        o + self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        (-o) + self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd2(f: impl Fn(f64, f64) -> f64, x: f64, y: f64) -> (f64, f64, f64, f64, f64) {
        let h = 1e-4;
        let fx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
        let fy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
        let fxx = (f(x + h, y) - 2.0 * f(x, y) + f(x - h, y)) / (h * h);
        let fyy = (f(x, y + h) - 2.0 * f(x, y) + f(x, y - h)) / (h * h);
        let fxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h);
        (fx, fy, fxx, fyy, fxy)
    }

    #[test]
    fn composite_matches_differences() {
        let f = |x: f64, y: f64| (x.sin() * y.cos() + 2.0).sqrt() / (1.0 + x * x * y).powi(2) + (0.3 * y).exp();
        let (x0, y0) = (0.7, -0.4);
        let u = Jet::variables(&[x0, y0]);
        let j = (u[0].sin() * u[1].cos() + 2.0).sqrt() / (1.0 + u[0] * u[0] * u[1]).powi(2) + (0.3 * u[1]).exp();
        let (fx, fy, fxx, fyy, fxy) = fd2(f, x0, y0);
        assert!((j.v - f(x0, y0)).abs() < 1e-15);
        assert!((j.d[0] - fx).abs() < 1e-7 && (j.d[1] - fy).abs() < 1e-7);
        assert!((j.dd[0][0] - fxx).abs() < 1e-5 && (j.dd[1][1] - fyy).abs() < 1e-5);
        assert!((j.dd[0][1] - fxy).abs() < 1e-5 && (j.dd[1][0] - fxy).abs() < 1e-5);
    }
}
