//! Independent reference implementations used by the oracle and acceptance tests.
#![allow(dead_code)]

use num_complex::Complex64;
use paretohil_core::gp::{LikelihoodParams, OrdinalLabel, Preference};
use paretohil_core::task::PlantParams;

/// Gaussian elimination with partial pivoting; `a` is row-major `n x n`.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

pub fn rbf(a: f64, b: f64, theta: f64) -> f64 {
    (-theta * (a - b) * (a - b)).exp()
}

/// Posterior mean and variance from first principles.
pub fn gp_oracle(x: &[f64], y: &[f64], x_star: f64, sigma_w2: f64, theta: f64) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 1.0);
    }
    let n = x.len();
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| rbf(x[i], x[j], theta) + if i == j { sigma_w2 } else { 0.0 }).collect())
        .collect();
    let ks: Vec<f64> = x.iter().map(|&xi| rbf(xi, x_star, theta)).collect();
    let alpha = dense_solve(k.clone(), y.to_vec());
    let v = dense_solve(k, ks.clone());
    let mean = ks.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let var = 1.0 - ks.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
    (mean, var)
}

pub fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(1e-12, 1.0 - 1e-12)
}

/// Log posterior of latent values at `inputs` (up to a constant), written out directly.
pub fn log_posterior_oracle(
    f: &[f64],
    inputs: &[f64],
    ordinal: &[(usize, OrdinalLabel)],
    pairwise: &[(usize, usize, Preference)],
    theta: f64,
    lp: &LikelihoodParams,
) -> f64 {
    let (t1, t2) = lp.thresholds;
    let mut ll = 0.0;
    for &(i, label) in ordinal {
        let (lo, hi) = match label {
            OrdinalLabel::Easy => (f64::NEG_INFINITY, t1),
            OrdinalLabel::Moderate => (t1, t2),
            OrdinalLabel::Hard => (t2, f64::INFINITY),
        };
        let up = if hi.is_infinite() { 1.0 } else { phi((hi - f[i]) / lp.c_o) };
        let dn = if lo.is_infinite() { 0.0 } else { phi((lo - f[i]) / lp.c_o) };
        ll += clamp_p(up - dn).ln();
    }
    for &(prev, curr, pref) in pairwise {
        let z = (f[curr] - f[prev]) / lp.c_p;
        let p = match pref {
            Preference::CurrentHarder => phi(z),
            Preference::PreviousHarder => phi(-z),
        };
        ll += clamp_p(p).ln();
    }
    let n = inputs.len();
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| rbf(inputs[i], inputs[j], theta) + if i == j { 1e-8 } else { 0.0 }).collect())
        .collect();
    let alpha = dense_solve(k, f.to_vec());
    ll - 0.5 * f.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>()
}

/// Grid-search maximizer at step 0.01 over `[-3, 3]^n`. The objective is
/// concave, so a 0.1 pass followed by a 0.01 pass around its winner visits the
/// same maximizer as the full fine grid.
pub fn grid_map(n: usize, objective: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    fn search(n: usize, lo: &[f64], hi: &[f64], step: f64, obj: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
        let counts: Vec<usize> = (0..n).map(|d| ((hi[d] - lo[d]) / step).round() as usize + 1).collect();
        let total: usize = counts.iter().product();
        let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
        let mut p = vec![0.0; n];
        for mut idx in 0..total {
            for d in 0..n {
                p[d] = (lo[d] + (idx % counts[d]) as f64 * step).clamp(-3.0, 3.0);
                idx /= counts[d];
            }
            let v = obj(&p);
            if v > best.0 {
                best = (v, p.clone());
            }
        }
        best.1
    }
    let coarse = search(n, &vec![-3.0; n], &vec![3.0; n], 0.1, &objective);
    let lo: Vec<f64> = coarse.iter().map(|c| (c - 0.2).max(-3.0)).collect();
    let hi: Vec<f64> = coarse.iter().map(|c| (c + 0.2).min(3.0)).collect();
    search(n, &lo, &hi, 0.01, &objective)
}

pub fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let (mut c, mut d) = (0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let s = (a[i] - a[j]) * (b[i] - b[j]);
            if s > 0.0 {
                c += 1.0;
            } else if s < 0.0 {
                d += 1.0;
            }
        }
    }
    (c - d) / (n * (n - 1) / 2) as f64
}

/// Non-dominated indices by the quadratic definition, keeping the first of duplicates.
pub fn brute_non_dominated(pts: &[(f64, f64)]) -> Vec<usize> {
    (0..pts.len())
        .filter(|&i| {
            let p = pts[i];
            !pts.iter().enumerate().any(|(j, q)| {
                let dominates = q.0 >= p.0 && q.1 >= p.1 && (q.0 > p.0 || q.1 > p.1);
                let earlier_twin = j < i && q.0 == p.0 && q.1 == p.1;
                dominates || earlier_twin
            })
        })
        .collect()
}

pub fn brute_hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let d = |p: &(f64, f64), q: &(f64, f64)| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();
    let mut h: f64 = 0.0;
    for p in a {
        h = h.max(b.iter().map(|q| d(p, q)).fold(f64::INFINITY, f64::min));
    }
    for q in b {
        h = h.max(a.iter().map(|p| d(p, q)).fold(f64::INFINITY, f64::min));
    }
    h
}

/// Cart-pole accelerations from the Lagrangian of a cart and a uniform rod
/// hinged at its end, solved as a 2x2 linear system.
pub fn lagrangian_derivative(s: [f64; 4], force: f64, p: &PlantParams) -> [f64; 4] {
    let [_, xd, th, thd] = s;
    let (m_c, m, l) = (p.cart_mass, p.pole_mass, p.pole_half_length);
    let inertia = m * l * l / 3.0;
    let a11 = m_c + m;
    let a12 = m * l * th.cos();
    let a22 = m * l * l + inertia;
    let b1 = force - p.cart_damping * xd + m * l * th.sin() * thd * thd;
    let b2 = m * p.gravity * l * th.sin();
    let det = a11 * a22 - a12 * a12;
    let xdd = (b1 * a22 - a12 * b2) / det;
    let thdd = (a11 * b2 - a12 * b1) / det;
    [xd, xdd, thd, thdd]
}

/// Explicit midpoint integration at `dt / substeps`.
pub fn reference_step(s: [f64; 4], force: f64, p: &PlantParams, dt: f64, substeps: usize) -> [f64; 4] {
    let h = dt / substeps as f64;
    let mut y = s;
    for _ in 0..substeps {
        let k1 = lagrangian_derivative(y, force, p);
        let mid = [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1], y[2] + 0.5 * h * k1[2], y[3] + 0.5 * h * k1[3]];
        let k2 = lagrangian_derivative(mid, force, p);
        for i in 0..4 {
            y[i] += h * k2[i];
        }
    }
    y
}

fn complex_solve(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Vec<Complex64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                let t = a[col][k];
                a[row][k] -= f * t;
            }
            let t = b[col];
            b[row] -= f * t;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[i][k] * x[k];
        }
        x[i] = s / a[i][i];
    }
    x
}

/// Stabilizing Riccati solution from the stable eigenvectors of the
/// Hamiltonian, each refined by complex inverse iteration.
pub fn care_eigen_oracle(a: &[[f64; 4]; 4], b: &[f64; 4], q: &[f64; 4], r: f64) -> [[f64; 4]; 4] {
    let n = 4;
    let mut h = nalgebra::DMatrix::<f64>::zeros(8, 8);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = a[i][j];
            h[(i, j + n)] = -b[i] * b[j] / r;
            h[(i + n, j + n)] = -a[j][i];
        }
        h[(i + n, i)] = -q[i];
    }
    let eig = h.complex_eigenvalues();
    let stable: Vec<Complex64> = eig.iter().filter(|l| l.re < 0.0).map(|l| Complex64::new(l.re, l.im)).collect();
    assert_eq!(stable.len(), n, "Hamiltonian must split evenly");
    let mut vecs = Vec::new();
    for (k, lam) in stable.iter().enumerate() {
        let shift = lam + Complex64::new(1e-10, 1e-10);
        let m: Vec<Vec<Complex64>> = (0..8)
            .map(|i| (0..8).map(|j| Complex64::new(h[(i, j)], 0.0) - if i == j { shift } else { Complex64::new(0.0, 0.0) }).collect())
            .collect();
        let mut v: Vec<Complex64> = (0..8).map(|i| Complex64::new(1.0 + (i * 7 + k) as f64 * 0.01, 0.1 * i as f64)).collect();
        for _ in 0..6 {
            v = complex_solve(m.clone(), v);
            let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            v.iter_mut().for_each(|c| *c /= norm);
        }
        vecs.push(v);
    }
    // X = V2 V1^-1, solved column by column on the transposed system X V1 = V2.
    let v1t: Vec<Vec<Complex64>> = (0..n).map(|k| (0..n).map(|i| vecs[k][i]).collect()).collect();
    let mut x = [[0.0; 4]; 4];
    for row in 0..n {
        let rhs: Vec<Complex64> = (0..n).map(|k| vecs[k][row + n]).collect();
        let sol = complex_solve(v1t.clone(), rhs);
        for col in 0..n {
            x[row][col] = sol[col].re;
        }
    }
    x
}

/// Two-up-one-down reference written as an explicit automaton over integer tenths.
pub fn staircase_reference(outcomes: &[bool]) -> Vec<f64> {
    let mut tenths: i32 = 5;
    let mut streak = 0;
    let mut out = vec![0.5];
    for &ok in outcomes {
        if ok {
            streak += 1;
            if streak == 2 {
                tenths = if tenths == 0 { 0 } else { tenths - 1 };
                streak = 0;
            }
        } else {
            tenths = if tenths == 10 { 10 } else { tenths + 1 };
            streak = 0;
        }
        out.push(tenths as f64 / 10.0);
    }
    out
}
