use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Planar pose plus current speed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehiclePose {
    pub x: f64,
    pub y: f64,
    /// Heading in (−π, π].
    pub phi: f64,
    pub v: f64,
}

impl VehiclePose {
    pub fn new(x: f64, y: f64, phi: f64, v: f64) -> Self {
        Self {
            x,
            y,
            phi: normalize_angle(phi),
            v: v.max(0.0),
        }
    }
}

/// Commanded speed and front-wheel angle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub v_cmd: f64,
    pub delta_f: f64,
}

impl ControlInput {
    pub fn new(v_cmd: f64, delta_f: f64) -> Self {
        Self { v_cmd, delta_f }
    }

    pub fn clamped(self, limits: &VehicleLimits) -> Self {
        Self {
            v_cmd: self.v_cmd.clamp(0.0, limits.v_max),
            delta_f: self.delta_f.clamp(-limits.delta_max, limits.delta_max),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleLimits {
    pub v_max: f64,
    pub delta_max: f64,
}

impl Default for VehicleLimits {
    fn default() -> Self {
        Self {
            v_max: 15.0,
            delta_max: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleGeometry {
    pub wheelbase: f64,
    pub width: f64,
    pub length: f64,
}

impl VehicleGeometry {
    pub fn new(wheelbase: f64, width: f64, length: f64) -> Self {
        assert!(
            wheelbase > 0.0 && width > 0.0 && length > 0.0 && wheelbase < length,
            "invalid geometry: L={wheelbase} w={width} l={length}"
        );
        Self {
            wheelbase,
            width,
            length,
        }
    }

    pub fn car() -> Self {
        Self::new(2.7, 1.8, 4.5)
    }
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self::car()
    }
}

/// Wrap to (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// One forward-Euler step of the kinematic bicycle model with `v = v_cmd`.
pub fn step_bicycle(pose: &VehiclePose, u: &ControlInput, dt: f64, wheelbase: f64) -> VehiclePose {
    let v = u.v_cmd;
    VehiclePose {
        x: pose.x + v * pose.phi.cos() * dt,
        y: pose.y + v * pose.phi.sin() * dt,
        phi: normalize_angle(pose.phi + v * u.delta_f.tan() / wheelbase * dt),
        v,
    }
}
