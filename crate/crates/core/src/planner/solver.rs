//! Single-shooting solve of the planner problem.
//!
//! Decision variables are the `n_c` controls; the last one is held to the end
//! of the `n_p`-step horizon. Obstacle and road inequalities enter as
//! quadratic penalties with a growing weight. Each inner iteration takes a
//! damped Gauss-Newton step built from forward sensitivities of the rollout,
//! then maps the result back onto the box and rate bounds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Obstacle, PlannerProblem, PlannerSolution};
use crate::sim::{normalize_angle, step_bicycle, ControlInput, VehiclePose};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStart {
    Warm,
    Reference,
    Zero,
}

struct Rollout {
    /// `n_p + 1` poses starting with the initial one.
    poses: Vec<VehiclePose>,
    /// Row-major 3×nz sensitivity of each pose to the decision vector.
    sens: Vec<Vec<f64>>,
}

fn control_at(z: &[f64], k: usize, n_c: usize) -> (usize, ControlInput) {
    let i = k.min(n_c - 1);
    (i, ControlInput::new(z[2 * i], z[2 * i + 1]))
}

fn rollout(p: &PlannerProblem, z: &[f64], with_sens: bool) -> Rollout {
    let (n_p, n_c) = (p.config.n_p, p.config.n_c);
    let nz = 2 * n_c;
    let (dt, l) = (p.dt, p.geometry.wheelbase);
    let mut poses = Vec::with_capacity(n_p + 1);
    let mut sens = Vec::with_capacity(if with_sens { n_p + 1 } else { 0 });
    poses.push(p.pose);
    if with_sens {
        sens.push(vec![0.0; 3 * nz]);
    }
    for k in 0..n_p {
        let (i, u) = control_at(z, k, n_c);
        let cur = poses[k];
        if with_sens {
            let s = &sens[k];
            let (sp, cp) = cur.phi.sin_cos();
            let v = u.v_cmd;
            let mut next = s.clone();
            for j in 0..nz {
                let sphi = s[2 * nz + j];
                next[j] += -v * sp * dt * sphi;
                next[nz + j] += v * cp * dt * sphi;
            }
            let (tan, cos) = (u.delta_f.tan(), u.delta_f.cos());
            next[2 * i] += cp * dt;
            next[nz + 2 * i] += sp * dt;
            next[2 * nz + 2 * i] += tan / l * dt;
            next[2 * nz + 2 * i + 1] += v / (l * cos * cos) * dt;
            sens.push(next);
        }
        poses.push(step_bicycle(&cur, &u, dt, l));
    }
    Rollout { poses, sens }
}

/// Map `z` onto the box and, in order, onto the rate bounds.
fn project(p: &PlannerProblem, z: &mut [f64]) {
    let (dv, dd) = p.config.rates.per_step(p.dt);
    let mut prev = p.prev_control;
    for i in 0..p.config.n_c {
        let u = ControlInput::new(
            z[2 * i].clamp(prev.v_cmd - dv, prev.v_cmd + dv),
            z[2 * i + 1].clamp(prev.delta_f - dd, prev.delta_f + dd),
        )
        .clamped(&p.limits);
        z[2 * i] = u.v_cmd;
        z[2 * i + 1] = u.delta_f;
        prev = u;
    }
}

/// Value and gradient w.r.t. (x_k, y_k, φ_k, x_{k−1}).
type Grad = [f64; 4];

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn pick_min(a: (f64, Grad), b: (f64, Grad)) -> (f64, Grad) {
    if a.0 <= b.0 {
        a
    } else {
        b
    }
}

fn add(a: Grad, b: Grad, sb: f64) -> Grad {
    [a[0] + sb * b[0], a[1] + sb * b[1], a[2] + sb * b[2], a[3] + sb * b[3]]
}

/// Lateral extent of the ego at step k, widened by the small-angle lookahead
/// `Δx·φ`: (lower, upper) with gradients.
fn ego_lateral(pose: &VehiclePose, x_prev: f64, hl: f64, hw: f64) -> ((f64, Grad), (f64, Grad)) {
    let (s, c) = pose.phi.sin_cos();
    let eh = hw * c.abs() + hl * s.abs();
    let deh = hw * (-s * sgn(c)) + hl * (c * sgn(s));
    let dx = pose.x - x_prev;
    let cl = pose.y + dx * pose.phi;
    let dcl: Grad = [pose.phi, 1.0, dx, -pose.phi];
    let dy: Grad = [0.0, 1.0, 0.0, 0.0];
    let dphi: Grad = [0.0, 0.0, 1.0, 0.0];
    let upper = if cl > pose.y {
        (cl + eh, add(dcl, dphi, deh))
    } else {
        (pose.y + eh, add(dy, dphi, deh))
    };
    let lower = if cl < pose.y {
        (cl - eh, add(dcl, dphi, -deh))
    } else {
        (pose.y - eh, add(dy, dphi, -deh))
    };
    (lower, upper)
}

struct Margins {
    lateral: f64,
    long: f64,
    road: f64,
}

fn obstacle_violation(
    p: &PlannerProblem,
    pose: &VehiclePose,
    x_prev: f64,
    o: &Obstacle,
    k: usize,
    m: &Margins,
) -> (f64, Grad) {
    let (hl, hw) = (p.geometry.length / 2.0, p.geometry.width / 2.0);
    let (xo, yl, yr) = o.at(k, p.dt);
    let (s, c) = pose.phi.sin_cos();
    let ex = hl * c.abs() + hw * s.abs();
    let dex = hl * (-s * sgn(c)) + hw * (c * sgn(s));
    let a1 = (pose.x + ex - (xo - m.long), [1.0, 0.0, dex, 0.0]);
    let a2 = (xo + o.l_obs + m.long - (pose.x - ex), [-1.0, 0.0, dex, 0.0]);
    let a = pick_min(a1, a2);
    let (lower, upper) = ego_lateral(pose, x_prev, hl, hw);
    let lat = o.w_obs / 2.0 + m.lateral;
    let b1 = (upper.0 - (yr - lat), upper.1);
    let b2 = ((yl + lat) - lower.0, lower.1.map(|g| -g));
    let v = pick_min(a, pick_min(b1, b2));
    if v.0 > 0.0 {
        v
    } else {
        (0.0, [0.0; 4])
    }
}

fn road_violations(p: &PlannerProblem, pose: &VehiclePose, x_prev: f64, m: &Margins) -> [(f64, Grad); 2] {
    let (hl, hw) = (p.geometry.length / 2.0, p.geometry.width / 2.0);
    let (lower, upper) = ego_lateral(pose, x_prev, hl, hw);
    let (lo, hi) = (p.road.0 + m.road, p.road.1 - m.road);
    let up = if upper.0 > hi { (upper.0 - hi, upper.1) } else { (0.0, [0.0; 4]) };
    let dn = if lower.0 < lo {
        (lo - lower.0, lower.1.map(|g| -g))
    } else {
        (0.0, [0.0; 4])
    };
    [up, dn]
}

fn margins(p: &PlannerProblem, tightened: bool) -> Margins {
    let extra = if tightened { p.config.tighten } else { 0.0 };
    Margins {
        lateral: extra,
        long: p.config.long_buffer + extra,
        road: p.config.road_margin + extra,
    }
}

/// Largest constraint violation of a rollout.
fn max_violation(p: &PlannerProblem, r: &Rollout, m: &Margins) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 1..r.poses.len() {
        let (pose, x_prev) = (&r.poses[k], r.poses[k - 1].x);
        for o in &p.obstacles {
            worst = worst.max(obstacle_violation(p, pose, x_prev, o, k, m).0);
        }
        for (v, _) in road_violations(p, pose, x_prev, m) {
            worst = worst.max(v);
        }
    }
    worst
}

/// Residual vector (and Jacobian) whose squared norm is the penalized cost.
/// The first `n_obj` residuals make up the unpenalized objective.
struct Residuals {
    r: Vec<f64>,
    jac: Vec<Vec<f64>>,
    n_obj: usize,
}

impl Residuals {
    fn objective(&self) -> f64 {
        self.r[..self.n_obj].iter().map(|v| v * v).sum()
    }

    fn total(&self) -> f64 {
        self.r.iter().map(|v| v * v).sum()
    }
}

fn residuals(p: &PlannerProblem, z: &[f64], mu: f64, with_jac: bool) -> Residuals {
    let cfg = &p.config;
    let (n_p, n_c) = (cfg.n_p, cfg.n_c);
    let nz = 2 * n_c;
    let ro = rollout(p, z, with_jac);
    let mut r = Vec::new();
    let mut jac = Vec::new();
    let mut push = |val: f64, row: Option<Vec<f64>>| {
        r.push(val);
        if let Some(row) = row {
            jac.push(row);
        }
    };
    let unit = |j: usize, w: f64| {
        with_jac.then(|| {
            let mut row = vec![0.0; nz];
            row[j] = w;
            row
        })
    };

    let end = ro.poses[n_p];
    let target = p.reference.terminal();
    let err = [end.x - target.x, end.y - target.y, normalize_angle(end.phi - target.phi)];
    for (i, e) in err.iter().enumerate() {
        let w = cfg.q[i].sqrt();
        let row = with_jac.then(|| ro.sens[n_p][i * nz..(i + 1) * nz].iter().map(|s| w * s).collect());
        push(w * e, row);
    }
    for i in 0..n_c {
        let uref = p.reference.controls[i];
        let refs = [uref.v_cmd, uref.delta_f];
        for j in 0..2 {
            let w = cfg.r_u[j].sqrt();
            push(w * (z[2 * i + j] - refs[j]), unit(2 * i + j, w));
        }
    }
    for i in 0..n_c {
        let prev = if i == 0 {
            [p.prev_control.v_cmd, p.prev_control.delta_f]
        } else {
            [z[2 * i - 2], z[2 * i - 1]]
        };
        for j in 0..2 {
            let w = cfg.r_du[j].sqrt();
            let row = with_jac.then(|| {
                let mut row = vec![0.0; nz];
                row[2 * i + j] = w;
                if i > 0 {
                    row[2 * i - 2 + j] = -w;
                }
                row
            });
            push(w * (z[2 * i + j] - prev[j]), row);
        }
    }
    let n_obj = 3 + 4 * n_c;

    let m = margins(p, true);
    let w = mu.sqrt();
    let chain = |k: usize, g: &Grad| -> Vec<f64> {
        (0..nz)
            .map(|j| {
                w * (g[0] * ro.sens[k][j]
                    + g[1] * ro.sens[k][nz + j]
                    + g[2] * ro.sens[k][2 * nz + j]
                    + g[3] * ro.sens[k - 1][j])
            })
            .collect()
    };
    for k in 1..=n_p {
        let (pose, x_prev) = (&ro.poses[k], ro.poses[k - 1].x);
        for o in &p.obstacles {
            let (v, g) = obstacle_violation(p, pose, x_prev, o, k, &m);
            if v > 0.0 {
                push(w * v, with_jac.then(|| chain(k, &g)));
            }
        }
        for (v, g) in road_violations(p, pose, x_prev, &m) {
            if v > 0.0 {
                push(w * v, with_jac.then(|| chain(k, &g)));
            }
        }
    }
    Residuals { r, jac, n_obj }
}

fn penalized_cost(p: &PlannerProblem, z: &[f64], mu: f64) -> f64 {
    residuals(p, z, mu, false).total()
}

struct Outcome {
    z: Vec<f64>,
    iterations: usize,
}

fn optimize(p: &PlannerProblem, mut z: Vec<f64>) -> Result<Outcome> {
    let cfg = &p.config;
    let nz = z.len();
    project(p, &mut z);
    let mut iterations = 0;
    for round in 0..cfg.rounds {
        let mu = cfg.mu0 * cfg.mu_growth.powi(round as i32);
        let mut damping = 1e-3;
        for _ in 0..cfg.max_iters {
            iterations += 1;
            let res = residuals(p, &z, mu, true);
            let cost = res.total();
            if !cost.is_finite() {
                return Err(non_finite(p));
            }
            let mut h = DMatrix::<f64>::zeros(nz, nz);
            let mut g = DVector::<f64>::zeros(nz);
            for (row, &ri) in res.jac.iter().zip(&res.r) {
                for a in 0..nz {
                    if row[a] == 0.0 {
                        continue;
                    }
                    g[a] += row[a] * ri;
                    for b in a..nz {
                        h[(a, b)] += row[a] * row[b];
                    }
                }
            }
            for a in 0..nz {
                for b in 0..a {
                    h[(a, b)] = h[(b, a)];
                }
            }
            if g.amax() < 1e-10 {
                break;
            }
            let mut improved = false;
            while damping < 1e8 {
                let mut lhs = h.clone();
                for a in 0..nz {
                    lhs[(a, a)] += damping * (h[(a, a)] + 1e-6);
                }
                let Some(chol) = lhs.cholesky() else {
                    damping *= 10.0;
                    continue;
                };
                let step = chol.solve(&(-&g));
                let mut cand: Vec<f64> = z.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                project(p, &mut cand);
                let c = penalized_cost(p, &cand, mu);
                if c < cost {
                    let gain = cost - c;
                    z = cand;
                    damping = (damping / 3.0).max(1e-9);
                    improved = gain > 1e-10 * (1.0 + cost);
                    break;
                }
                damping *= 10.0;
            }
            if !improved {
                break;
            }
        }
    }
    Ok(Outcome { z, iterations })
}

fn non_finite(p: &PlannerProblem) -> Error {
    Error::PlannerNonFinite(serde_json::to_string(p).unwrap_or_else(|e| format!("<unserializable: {e}>")))
}

fn controls_to_z(controls: &[ControlInput], n_c: usize) -> Vec<f64> {
    (0..n_c)
        .flat_map(|i| {
            let u = controls[i.min(controls.len() - 1)];
            [u.v_cmd, u.delta_f]
        })
        .collect()
}

fn finish(p: &PlannerProblem, z: &[f64], start: SolveStart, iterations: usize) -> Result<PlannerSolution> {
    let n_c = p.config.n_c;
    let controls: Vec<ControlInput> = (0..n_c).map(|i| ControlInput::new(z[2 * i], z[2 * i + 1])).collect();
    let ro = rollout(p, z, false);
    let max_violation = max_violation(p, &ro, &margins(p, false));
    let cost = residuals(p, z, 0.0, false).objective();
    if !cost.is_finite() || !max_violation.is_finite() {
        return Err(non_finite(p));
    }
    Ok(PlannerSolution {
        controls,
        predicted: ro.poses[1..].to_vec(),
        cost,
        feasible: max_violation <= p.config.eps_con,
        max_violation,
        iterations,
        start,
    })
}

/// Solve from up to three starts (the previous solution shifted by one step,
/// the reference feedforward, and all-zero controls) and return the best:
/// feasible before infeasible, then lowest cost, then lowest violation.
pub fn solve_rho(p: &PlannerProblem, warm: Option<&PlannerSolution>) -> Result<PlannerSolution> {
    let n_c = p.config.n_c;
    assert!(n_c >= 1 && n_c <= p.config.n_p, "need 1 ≤ n_c ≤ n_p");
    assert_eq!(p.reference.poses.len(), p.config.n_p, "reference length must equal n_p");
    let mut starts = Vec::with_capacity(3);
    if let Some(w) = warm.filter(|w| !w.controls.is_empty()) {
        let shifted: Vec<ControlInput> = w.controls.iter().skip(1).copied().chain([*w.controls.last().unwrap()]).collect();
        starts.push((SolveStart::Warm, controls_to_z(&shifted, n_c)));
    }
    starts.push((SolveStart::Reference, controls_to_z(&p.reference.controls, n_c)));
    starts.push((SolveStart::Zero, vec![0.0; 2 * n_c]));

    let mut best: Option<PlannerSolution> = None;
    for (start, z0) in starts {
        let out = optimize(p, z0)?;
        let sol = finish(p, &out.z, start, out.iterations)?;
        let better = match &best {
            None => true,
            Some(b) => match (sol.feasible, b.feasible) {
                (true, false) => true,
                (false, true) => false,
                (true, true) => sol.cost < b.cost,
                (false, false) => sol.max_violation < b.max_violation,
            },
        };
        if better {
            best = Some(sol);
        }
    }
    Ok(best.expect("at least one start"))
}
