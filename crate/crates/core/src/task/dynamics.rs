use std::f64::consts::PI;

use super::{Gains, PlantParams, TaskState};
use crate::error::{Error, Result};

/// Time derivative of `(x, x_dot, theta, theta_dot)` under horizontal cart force `force`.
pub fn derivative(s: [f64; 4], force: f64, p: &PlantParams) -> [f64; 4] {
    let [_, x_dot, theta, theta_dot] = s;
    let total = p.cart_mass + p.pole_mass;
    let ml = p.pole_mass * p.pole_half_length;
    let (sin, cos) = theta.sin_cos();
    let tmp = (force - p.cart_damping * x_dot + ml * theta_dot * theta_dot * sin) / total;
    let theta_acc = (p.gravity * sin - cos * tmp)
        / (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total));
    let x_acc = tmp - ml * theta_acc * cos / total;
    [x_dot, x_acc, theta_dot, theta_acc]
}

fn rk4(s: [f64; 4], force: f64, h: f64, p: &PlantParams) -> [f64; 4] {
    let add = |a: [f64; 4], k: [f64; 4], c: f64| [a[0] + c * k[0], a[1] + c * k[1], a[2] + c * k[2], a[3] + c * k[3]];
    let k1 = derivative(s, force, p);
    let k2 = derivative(add(s, k1, h / 2.0), force, p);
    let k3 = derivative(add(s, k2, h / 2.0), force, p);
    let k4 = derivative(add(s, k3, h), force, p);
    let mut out = s;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn wrap_angle(a: f64) -> f64 {
    if (-PI..=PI).contains(&a) {
        a
    } else {
        (a + PI).rem_euclid(2.0 * PI) - PI
    }
}

/// Virtual spring pulling the cart toward the position the LQR law would
/// command, i.e. `x_ideal = x + u_lqr / k_max`.
pub fn assistance_force(assist: f64, state: &TaskState, gains: &Gains, p: &PlantParams) -> f64 {
    let u = gains.control(state);
    let x_ideal = state.x + u / p.k_max;
    (p.k_max * assist * (x_ideal - state.x)).clamp(-p.max_force, p.max_force)
}

/// One fixed-step RK4 step with the total cart force held constant.
pub fn step_with_force(state: &TaskState, force: f64, p: &PlantParams) -> Result<TaskState> {
    let next = rk4(state.as_array(), force, p.dt, p);
    let out = TaskState {
        x: next[0],
        x_dot: next[1],
        theta: wrap_angle(next[2]),
        theta_dot: next[3],
        t: state.t + p.dt,
    };
    if !out.is_finite() {
        return Err(Error::SimulationFault { time: state.t, reason: "non-finite state".into() });
    }
    Ok(out)
}

/// Advances the game by `dt`: user force (clamped) + spring assistance + disturbance.
pub fn step(
    state: &TaskState,
    user_force: f64,
    assist: f64,
    disturbance: f64,
    gains: &Gains,
    p: &PlantParams,
) -> Result<TaskState> {
    if !user_force.is_finite() || !disturbance.is_finite() {
        return Err(Error::SimulationFault { time: state.t, reason: "non-finite input force".into() });
    }
    let user = user_force.clamp(-p.max_force, p.max_force);
    let total = user + assistance_force(assist, state, gains, p) + disturbance;
    step_with_force(state, total, p)
}

/// Kinetic plus potential energy of the cart and rod.
pub fn mechanical_energy(s: &TaskState, p: &PlantParams) -> f64 {
    let m = p.pole_mass;
    let l = p.pole_half_length;
    let total = p.cart_mass + m;
    0.5 * total * s.x_dot * s.x_dot
        + m * l * s.x_dot * s.theta_dot * s.theta.cos()
        + (2.0 / 3.0) * m * l * l * s.theta_dot * s.theta_dot
        + m * p.gravity * l * s.theta.cos()
}
