use serde::{Deserialize, Serialize};

use super::quintic::{fit_quintic, QuinticProfile};
use super::MixedAction;
use crate::sim::{ControlInput, VehicleLimits, VehiclePose};

/// Spans shorter than this are treated as standing still.
const MIN_SPAN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefPose {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

/// `poses[k]` is the target `k + 1` steps ahead; `controls[k]` is the
/// feedforward control that moves the ego from pose `k` to pose `k + 1`
/// (pose 0 being the start).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub poses: Vec<RefPose>,
    pub speeds: Vec<f64>,
    pub controls: Vec<ControlInput>,
    pub lateral: Option<QuinticProfile>,
    /// Centerline of the lateral frame.
    pub frame_y: f64,
}

impl ReferenceTrajectory {
    pub fn terminal(&self) -> RefPose {
        *self.poses.last().expect("non-empty reference")
    }
}

/// Reference to the terminal target `a` over `n_p` steps of `dt`.
///
/// The speed ramps linearly from the current speed to `a.v_f`; distance
/// along the road is the right Riemann sum of the ramp. The lateral offset
/// from `frame_y` follows a quintic in that distance, so a stationary ramp
/// keeps the start pose.
pub fn build_reference(
    pose: &VehiclePose,
    a: &MixedAction,
    frame_y: f64,
    n_p: usize,
    dt: f64,
    wheelbase: f64,
    limits: &VehicleLimits,
) -> ReferenceTrajectory {
    assert!(n_p >= 1 && dt > 0.0);
    let v0 = pose.v;
    let speeds: Vec<f64> = (1..=n_p)
        .map(|j| v0 + (a.v_f - v0) * j as f64 / n_p as f64)
        .collect();
    let mut s = Vec::with_capacity(n_p + 1);
    s.push(0.0);
    for v in &speeds {
        s.push(s.last().unwrap() + dt * v);
    }
    let span = s[n_p];
    let d0 = pose.y - frame_y;
    let lateral = (span > MIN_SPAN).then(|| fit_quintic(d0, pose.phi.tan(), 0.0, a.d_f, span));

    let geo = |sk: f64| -> (f64, f64, f64) {
        match &lateral {
            Some(q) => (q.eval(sk), q.d1(sk).atan(), q.d2(sk) / (1.0 + q.d1(sk).powi(2)).powf(1.5)),
            None => (d0, pose.phi, 0.0),
        }
    };
    let poses = s[1..]
        .iter()
        .map(|&sk| {
            let (d, phi, _) = geo(sk);
            RefPose {
                x: pose.x + sk,
                y: frame_y + d,
                phi,
            }
        })
        .collect();
    let controls = (0..n_p)
        .map(|k| {
            let kappa = 0.5 * (geo(s[k]).2 + geo(s[k + 1]).2);
            let delta = (wheelbase * kappa).atan();
            ControlInput::new(speeds[k], delta).clamped(limits)
        })
        .collect();
    ReferenceTrajectory {
        poses,
        speeds,
        controls,
        lateral,
        frame_y,
    }
}
