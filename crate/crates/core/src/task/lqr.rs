//! Continuous-time LQR for the upright equilibrium.
//!
//! The Riccati equation is solved with the matrix-sign-function iteration on
//! the Hamiltonian, then polished with Kleinman-Newton steps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{PlantParams, TaskState};
use crate::error::{Error, Result};

const CARE_TOL: f64 = 1e-10;
const SIGN_MAX_ITER: usize = 100;
const NEWTON_MAX_ITER: usize = 50;

/// State-feedback gains; the LQR control is `u = -K s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains(pub [f64; 4]);

impl Gains {
    pub fn control(&self, s: &TaskState) -> f64 {
        -self.0.iter().zip(s.as_array()).map(|(k, v)| k * v).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|k| k * k).sum::<f64>().sqrt()
    }
}

/// Linearization `(A, B)` of the cart-pole about upright at rest.
pub fn linearize(p: &PlantParams) -> (DMatrix<f64>, DVector<f64>) {
    let total = p.cart_mass + p.pole_mass;
    let ml = p.pole_mass * p.pole_half_length;
    let eff = p.pole_half_length * (4.0 / 3.0 - p.pole_mass / total);
    let b = p.cart_damping;
    let g = p.gravity;
    let coupling = 1.0 + ml / (total * eff);
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        0.0, 1.0, 0.0, 0.0,
        0.0, -b * coupling / total, -ml * g / (total * eff), 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, b / (total * eff), g / eff, 0.0,
    ]);
    let bv = DVector::from_vec(vec![0.0, coupling / total, 0.0, -1.0 / (total * eff)]);
    (a, bv)
}

fn care_residual(a: &DMatrix<f64>, g: &DMatrix<f64>, q: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * x + x * a - x * g * x + q
}

fn matrix_sign(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = h.nrows() as f64;
    let mut z = h.clone();
    for _ in 0..SIGN_MAX_ITER {
        let det = z.determinant().abs();
        let c = if det.is_finite() && det > 0.0 { det.powf(-1.0 / n) } else { 1.0 };
        let zi = (&z * c)
            .try_inverse()
            .ok_or_else(|| Error::Config("Hamiltonian has eigenvalues on the imaginary axis".into()))?;
        let next = (&z * c + zi) * 0.5;
        let diff = (&next - &z).norm();
        z = next;
        if diff <= 1e-13 * z.norm() {
            return Ok(z);
        }
    }
    Err(Error::Config("matrix sign iteration did not converge".into()))
}

// Solves A' X + X A + Q = 0 via the Kronecker form.
fn lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let big = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let sol = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Config("singular Lyapunov system".into()))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// Stabilizing solution of `A' X + X A - X B R^-1 B' X + Q = 0`.
pub fn solve_care(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let r_inv = r.clone().try_inverse().ok_or_else(|| Error::Config("R is singular".into()))?;
    let g = b * &r_inv * b.transpose();

    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let w = matrix_sign(&h)?;
    let eye = DMatrix::<f64>::identity(n, n);
    // (W + I) [I; X] = 0
    let mut lhs = DMatrix::<f64>::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w.view((n, n), (n, n)) + &eye));
    let mut rhs = DMatrix::<f64>::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w.view((0, 0), (n, n)) + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));
    let mut x = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Config(format!("Riccati subspace solve failed: {e}")))?;
    x = (&x + x.transpose()) * 0.5;

    let scale = 1.0 + x.norm();
    for _ in 0..NEWTON_MAX_ITER {
        let k = &r_inv * b.transpose() * &x;
        let ac = a - b * &k;
        let qc = q + k.transpose() * r * &k;
        let next = lyapunov(&ac, &qc)?;
        let diff = (&next - &x).norm();
        x = next;
        if diff <= CARE_TOL * scale {
            break;
        }
    }
    let res = care_residual(a, &g, q, &x).norm();
    if !res.is_finite() || res > 1e-8 * scale {
        return Err(Error::Config(format!("Riccati solve did not converge (residual {res:e})")));
    }
    Ok(x)
}

/// `A - B K` for the linearized plant.
pub fn closed_loop_matrix(p: &PlantParams, gains: &Gains) -> DMatrix<f64> {
    let (a, b) = linearize(p);
    let k = DMatrix::from_row_slice(1, 4, &gains.0);
    a - b * k
}

pub fn lqr_gains(p: &PlantParams) -> Result<Gains> {
    p.validate()?;
    let (a, b) = linearize(p);
    let b = DMatrix::from_column_slice(4, 1, b.as_slice());
    let q = DMatrix::from_diagonal(&DVector::from_row_slice(&p.q_diag));
    let r = DMatrix::from_element(1, 1, p.r);
    let x = solve_care(&a, &b, &q, &r)?;
    let k = (b.transpose() * x) / p.r;
    let gains = Gains([k[(0, 0)], k[(0, 1)], k[(0, 2)], k[(0, 3)]]);
    let eig = closed_loop_matrix(p, &gains).complex_eigenvalues();
    if eig.iter().any(|l| !(l.re < 0.0)) {
        return Err(Error::Config("LQR gains do not stabilize the linearized plant".into()));
    }
    Ok(gains)
}
