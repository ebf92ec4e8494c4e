use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

/// `d(s) = Σ cᵢ sⁱ` on `s ∈ [0, span]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuinticProfile {
    pub coeffs: [f64; 6],
    pub span: f64,
}

impl QuinticProfile {
    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    pub fn d1(&self, s: f64) -> f64 {
        let c = &self.coeffs;
        c[1] + s * (2.0 * c[2] + s * (3.0 * c[3] + s * (4.0 * c[4] + s * 5.0 * c[5])))
    }

    pub fn d2(&self, s: f64) -> f64 {
        let c = &self.coeffs;
        2.0 * c[2] + s * (6.0 * c[3] + s * (12.0 * c[4] + s * 20.0 * c[5]))
    }
}

fn boundary_system(span: f64) -> Matrix6<f64> {
    let t = span;
    let (t2, t3, t4, t5) = (t * t, t * t * t, t.powi(4), t.powi(5));
    Matrix6::from_row_slice(&[
        1.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 2.0, 0.0, 0.0, 0.0, //
        1.0, t, t2, t3, t4, t5, //
        0.0, 1.0, 2.0 * t, 3.0 * t2, 4.0 * t3, 5.0 * t4, //
        0.0, 0.0, 2.0, 6.0 * t, 12.0 * t2, 20.0 * t3,
    ])
}

/// Quintic through `(d0, d0', d0'')` at 0 and `(d_f, 0, 0)` at `span`.
pub fn fit_quintic(d0: f64, d0_1: f64, d0_2: f64, d_f: f64, span: f64) -> QuinticProfile {
    assert!(span > 0.0, "quintic span must be positive, got {span}");
    // Solve on the unit interval for conditioning, then rescale.
    let a = boundary_system(1.0);
    let b = Vector6::new(d0, d0_1 * span, d0_2 * span * span, d_f, 0.0, 0.0);
    let x = a.lu().solve(&b).expect("quintic boundary system is nonsingular");
    let mut coeffs = [0.0; 6];
    for (i, c) in coeffs.iter_mut().enumerate() {
        *c = x[i] / span.powi(i as i32);
    }
    QuinticProfile { coeffs, span }
}

/// Largest residual of the boundary system for `q` against the given
/// conditions.
pub fn quintic_residual(q: &QuinticProfile, d0: f64, d0_1: f64, d0_2: f64, d_f: f64) -> f64 {
    let a = boundary_system(q.span);
    let c = Vector6::from_row_slice(&q.coeffs);
    let b = Vector6::new(d0, d0_1, d0_2, d_f, 0.0, 0.0);
    (a * c - b).amax()
}
