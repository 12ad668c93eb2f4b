//! Log-barrier Newton method for problems whose objective and
//! constraints are quadratic (at most bilinear) in the variables.

use nalgebra::{DMatrix, DVector};

/// `constant + sum a_i z_i + sum b_ij z_i z_j`.
#[derive(Debug, Clone, Default)]
pub struct Quadratic {
    pub constant: f64,
    pub linear: Vec<(usize, f64)>,
    pub bilinear: Vec<(usize, usize, f64)>,
}

/// A variable or a fixed value, used to assemble expressions.
#[derive(Debug, Clone, Default)]
pub struct Affine {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl Affine {
    pub fn var(i: usize) -> Self {
        Affine { constant: 0.0, terms: vec![(i, 1.0)] }
    }

    pub fn fixed(v: f64) -> Self {
        Affine { constant: v, terms: Vec::new() }
    }

    pub fn scale(&self, s: f64) -> Self {
        Affine {
            constant: self.constant * s,
            terms: self.terms.iter().map(|&(i, a)| (i, a * s)).collect(),
        }
    }

    pub fn plus(&self, other: &Affine) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Affine { constant: self.constant + other.constant, terms }
    }

    pub fn minus(&self, other: &Affine) -> Self {
        self.plus(&other.scale(-1.0))
    }

    pub fn add_constant(&self, c: f64) -> Self {
        Affine { constant: self.constant + c, terms: self.terms.clone() }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, a)| a * z[i]).sum::<f64>()
    }

    pub fn to_quadratic(&self) -> Quadratic {
        Quadratic {
            constant: self.constant,
            linear: self.terms.clone(),
            bilinear: Vec::new(),
        }
    }

    pub fn times(&self, other: &Affine) -> Quadratic {
        let mut q = Quadratic {
            constant: self.constant * other.constant,
            linear: Vec::new(),
            bilinear: Vec::new(),
        };
        for &(i, a) in &self.terms {
            q.linear.push((i, a * other.constant));
            for &(j, b) in &other.terms {
                q.bilinear.push((i, j, a * b));
            }
        }
        for &(j, b) in &other.terms {
            q.linear.push((j, b * self.constant));
        }
        q
    }
}

impl Quadratic {
    pub fn plus(mut self, other: &Quadratic) -> Self {
        self.constant += other.constant;
        self.linear.extend_from_slice(&other.linear);
        self.bilinear.extend_from_slice(&other.bilinear);
        self
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.constant *= s;
        self.linear.iter_mut().for_each(|t| t.1 *= s);
        self.bilinear.iter_mut().for_each(|t| t.2 *= s);
        self
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.constant
            + self.linear.iter().map(|&(i, a)| a * z[i]).sum::<f64>()
            + self.bilinear.iter().map(|&(i, j, b)| b * z[i] * z[j]).sum::<f64>()
    }

    fn add_gradient(&self, z: &[f64], scale: f64, g: &mut DVector<f64>) {
        for &(i, a) in &self.linear {
            g[i] += scale * a;
        }
        for &(i, j, b) in &self.bilinear {
            g[i] += scale * b * z[j];
            g[j] += scale * b * z[i];
        }
    }

    fn gradient(&self, z: &[f64], n: usize) -> DVector<f64> {
        let mut g = DVector::zeros(n);
        self.add_gradient(z, 1.0, &mut g);
        g
    }

    fn add_hessian(&self, scale: f64, h: &mut DMatrix<f64>) {
        for &(i, j, b) in &self.bilinear {
            h[(i, j)] += scale * b;
            h[(j, i)] += scale * b;
        }
    }
}

/// Maximize `objective` subject to `constraints[c] > 0`.
#[derive(Debug, Clone)]
pub struct BarrierProblem {
    pub n: usize,
    pub objective: Quadratic,
    pub constraints: Vec<Quadratic>,
}

#[derive(Debug, Clone)]
pub struct Centring {
    pub z: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl BarrierProblem {
    pub fn strictly_feasible(&self, z: &[f64]) -> bool {
        self.constraints.iter().all(|c| c.value(z) > 0.0)
    }

    fn merit(&self, z: &[f64], t: f64) -> f64 {
        let mut v = -self.objective.value(z);
        for c in &self.constraints {
            let g = c.value(z);
            if g <= 0.0 {
                return f64::INFINITY;
            }
            v -= t * g.ln();
        }
        v
    }

    /// Minimizes `-objective - t * sum ln(constraint)` from a strictly
    /// feasible `z0` by damped, convexified Newton steps.
    pub fn centre(&self, z0: &[f64], t: f64, max_iter: usize) -> Centring {
        let n = self.n;
        let mut z = z0.to_vec();
        let mut phi = self.merit(&z, t);
        for it in 0..max_iter {
            let mut grad = DVector::zeros(n);
            self.objective.add_gradient(&z, -1.0, &mut grad);
            let mut hess = DMatrix::zeros(n, n);
            self.objective.add_hessian(-1.0, &mut hess);
            for c in &self.constraints {
                let g = c.value(&z);
                let dg = c.gradient(&z, n);
                grad.axpy(-t / g, &dg, 1.0);
                c.add_hessian(-t / g, &mut hess);
                hess.ger(t / (g * g), &dg, &dg, 1.0);
            }
            let Some(dir) = newton_direction(&hess, &grad) else {
                return Centring { z, iterations: it, converged: false };
            };
            let slope = grad.dot(&dir);
            if -slope <= 1e-12 * (1.0 + phi.abs()) {
                return Centring { z, iterations: it, converged: true };
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let trial: Vec<f64> = z.iter().zip(dir.iter()).map(|(a, d)| a + alpha * d).collect();
                let v = self.merit(&trial, t);
                if v.is_finite() && v <= phi + 1e-4 * alpha * slope {
                    z = trial;
                    phi = v;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Centring { z, iterations: it, converged: true };
            }
        }
        Centring { z, iterations: max_iter, converged: false }
    }
}

/// Solves `(H + delta I) d = -g`, raising `delta` until `H + delta I` is
/// positive definite.
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let mut delta = 0.0;
    for _ in 0..60 {
        let mut h = hess.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += delta;
        }
        if let Some(ch) = h.cholesky() {
            let d = ch.solve(&(-grad));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        delta = if delta == 0.0 { 1e-10 * scale } else { delta * 10.0 };
    }
    None
}
