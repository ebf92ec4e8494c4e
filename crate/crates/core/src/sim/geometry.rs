//! Oriented rectangles, discs and ray casts in the world plane.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedRect {
    pub cx: f64,
    pub cy: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn new(cx: f64, cy: f64, heading: f64, length: f64, width: f64) -> Self {
        Self {
            cx,
            cy,
            heading,
            length,
            width,
        }
    }

    /// Unit vectors along the long and short axes.
    pub fn axes(&self) -> [(f64, f64); 2] {
        let (s, c) = self.heading.sin_cos();
        [(c, s), (-s, c)]
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let [(ax, ay), (bx, by)] = self.axes();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [
            (self.cx + ax * hl + bx * hw, self.cy + ay * hl + by * hw),
            (self.cx + ax * hl - bx * hw, self.cy + ay * hl - by * hw),
            (self.cx - ax * hl - bx * hw, self.cy - ay * hl - by * hw),
            (self.cx - ax * hl + bx * hw, self.cy - ay * hl + by * hw),
        ]
    }

    /// Radius of the circumscribed circle.
    pub fn bounding_radius(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }

    fn project(&self, axis: (f64, f64)) -> (f64, f64) {
        let c = self.cx * axis.0 + self.cy * axis.1;
        let [(ax, ay), (bx, by)] = self.axes();
        let r = self.length / 2.0 * (ax * axis.0 + ay * axis.1).abs()
            + self.width / 2.0 * (bx * axis.0 + by * axis.1).abs();
        (c - r, c + r)
    }

    /// Point in rectangle-local coordinates.
    fn to_local(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        let (dx, dy) = (px - self.cx, py - self.cy);
        (c * dx + s * dy, -s * dx + c * dy)
    }
}

/// Separating-axis test. Touching boundaries count as overlap.
pub fn rects_overlap(a: &OrientedRect, b: &OrientedRect) -> bool {
    let (dx, dy) = (a.cx - b.cx, a.cy - b.cy);
    let reach = a.bounding_radius() + b.bounding_radius();
    if dx * dx + dy * dy > reach * reach {
        return false;
    }
    for axis in a.axes().into_iter().chain(b.axes()) {
        let (a0, a1) = a.project(axis);
        let (b0, b1) = b.project(axis);
        if a1 < b0 || b1 < a0 {
            return false;
        }
    }
    true
}

/// Touching counts as overlap.
pub fn rect_disc_overlap(r: &OrientedRect, cx: f64, cy: f64, radius: f64) -> bool {
    let (lx, ly) = r.to_local(cx, cy);
    let qx = lx.clamp(-r.length / 2.0, r.length / 2.0);
    let qy = ly.clamp(-r.width / 2.0, r.width / 2.0);
    (lx - qx).powi(2) + (ly - qy).powi(2) <= radius * radius
}

/// Distance along the unit ray `(ox, oy) + t·(dx, dy)` to the first hit with
/// `t ≥ 0`; `None` when the ray misses. A ray starting inside hits at 0.
pub fn ray_rect(ox: f64, oy: f64, dx: f64, dy: f64, r: &OrientedRect) -> Option<f64> {
    let (lox, loy) = r.to_local(ox, oy);
    let (s, c) = r.heading.sin_cos();
    let (ldx, ldy) = (c * dx + s * dy, -s * dx + c * dy);
    let mut t0 = 0.0_f64;
    let mut t1 = f64::INFINITY;
    for (o, d, h) in [(lox, ldx, r.length / 2.0), (loy, ldy, r.width / 2.0)] {
        if d.abs() < 1e-15 {
            if o < -h || o > h {
                return None;
            }
            continue;
        }
        let (mut ta, mut tb) = ((-h - o) / d, (h - o) / d);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

pub fn ray_disc(ox: f64, oy: f64, dx: f64, dy: f64, cx: f64, cy: f64, radius: f64) -> Option<f64> {
    let (fx, fy) = (ox - cx, oy - cy);
    let b = fx * dx + fy * dy;
    let c = fx * fx + fy * fy - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

/// Hit distance against the horizontal line `y = line_y`.
pub fn ray_hline(oy: f64, dy: f64, line_y: f64) -> Option<f64> {
    if dy.abs() < 1e-15 {
        return None;
    }
    let t = (line_y - oy) / dy;
    (t >= 0.0).then_some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn corner_touching_rects_collide() {
        // unit squares whose corners meet at (0.5, 0.5)
        let a = OrientedRect::new(0.0, 0.0, 0.0, 1.0, 1.0);
        let b = OrientedRect::new(1.0, 1.0, 0.0, 1.0, 1.0);
        assert!(rects_overlap(&a, &b));
        let c = OrientedRect::new(1.0 + 1e-9, 1.0, 0.0, 1.0, 1.0);
        assert!(!rects_overlap(&a, &c));
    }

    #[test]
    fn rotated_diamond_gap() {
        // a square rotated 45° reaches √2/2 along x
        let a = OrientedRect::new(0.0, 0.0, std::f64::consts::FRAC_PI_4, 1.0, 1.0);
        let reach = 0.5_f64.sqrt();
        let b = OrientedRect::new(reach + 0.5 + 1e-6, 0.0, 0.0, 1.0, 1.0);
        assert!(!rects_overlap(&a, &b));
        let b = OrientedRect::new(reach + 0.5 - 1e-6, 0.0, 0.0, 1.0, 1.0);
        assert!(rects_overlap(&a, &b));
    }

    #[test]
    fn ray_hits_box_front_face() {
        let r = OrientedRect::new(10.0, 0.0, 0.0, 4.0, 2.0);
        let t = ray_rect(0.0, 0.0, 1.0, 0.0, &r).unwrap();
        assert!((t - 8.0).abs() < 1e-12);
        assert!(ray_rect(0.0, 0.0, -1.0, 0.0, &r).is_none());
        assert!(ray_rect(0.0, 0.0, 0.0, 1.0, &r).is_none());
        // rotated by 90°: the short side now faces the ray
        let r = OrientedRect::new(10.0, 0.0, FRAC_PI_2, 4.0, 2.0);
        assert!((ray_rect(0.0, 0.0, 1.0, 0.0, &r).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn ray_disc_and_line() {
        assert!((ray_disc(0.0, 0.0, 1.0, 0.0, 5.0, 0.0, 0.3).unwrap() - 4.7).abs() < 1e-12);
        assert!(ray_disc(0.0, 0.0, 1.0, 0.0, 5.0, 1.0, 0.3).is_none());
        assert!(ray_disc(0.0, 0.0, -1.0, 0.0, 5.0, 0.0, 0.3).is_none());
        let (s, c) = (0.5_f64).sin_cos();
        assert!((ray_hline(0.0, s, 2.0).unwrap() * s - 2.0).abs() < 1e-12);
        assert!(ray_hline(0.0, c * 0.0, 2.0).is_none());
        assert!(ray_hline(0.0, -s, 2.0).is_none());
    }

    #[test]
    fn disc_touching_rect_edge() {
        let r = OrientedRect::new(0.0, 0.0, 0.0, 4.0, 2.0);
        assert!(rect_disc_overlap(&r, 0.0, 1.5, 0.5));
        assert!(!rect_disc_overlap(&r, 0.0, 1.5 + 1e-9, 0.5));
        assert!(rect_disc_overlap(&r, 0.0, 0.0, 0.3));
    }

    fn sample_in_rect(r: &OrientedRect, u: f64, v: f64) -> (f64, f64) {
        let [(ax, ay), (bx, by)] = r.axes();
        let (a, b) = ((u - 0.5) * r.length, (v - 0.5) * r.width);
        (r.cx + ax * a + bx * b, r.cy + ay * a + by * b)
    }

    fn contains(r: &OrientedRect, p: (f64, f64)) -> bool {
        let (lx, ly) = r.to_local(p.0, p.1);
        lx.abs() <= r.length / 2.0 + 1e-9 && ly.abs() <= r.width / 2.0 + 1e-9
    }

    proptest! {
        #[test]
        fn overlap_is_symmetric(
            ax in -5.0..5.0f64, ay in -5.0..5.0f64, ah in -3.1..3.1f64,
            bx in -5.0..5.0f64, by in -5.0..5.0f64, bh in -3.1..3.1f64,
            al in 0.5..5.0f64, aw in 0.5..3.0f64, bl in 0.5..5.0f64, bw in 0.5..3.0f64,
        ) {
            let a = OrientedRect::new(ax, ay, ah, al, aw);
            let b = OrientedRect::new(bx, by, bh, bl, bw);
            prop_assert_eq!(rects_overlap(&a, &b), rects_overlap(&b, &a));
        }

        /// A shared interior point implies overlap; SAT must agree with a
        /// dense point-sampling oracle whenever the oracle finds one.
        #[test]
        fn sat_agrees_with_sampling(
            bx in -4.0..4.0f64, by in -3.0..3.0f64, bh in -3.1..3.1f64, ah in -3.1..3.1f64,
        ) {
            let a = OrientedRect::new(0.0, 0.0, ah, 4.0, 2.0);
            let b = OrientedRect::new(bx, by, bh, 3.0, 1.5);
            let n = 24;
            let mut shared = false;
            'outer: for i in 0..=n {
                for j in 0..=n {
                    let p = sample_in_rect(&b, i as f64 / n as f64, j as f64 / n as f64);
                    if contains(&a, p) {
                        shared = true;
                        break 'outer;
                    }
                }
            }
            if shared {
                prop_assert!(rects_overlap(&a, &b));
            }
            // separated along one of a's axes by more than the sampling gap ⇒ no overlap
            let sep_x = bx.abs() - 2.0 - b.bounding_radius();
            if ah == 0.0 && sep_x > 0.0 {
                prop_assert!(!rects_overlap(&a, &b));
            }
        }

        #[test]
        fn ray_hit_point_lies_on_boundary(
            cx in 3.0..20.0f64, cy in -4.0..4.0f64, h in -3.1..3.1f64, ang in -3.1..3.1f64,
        ) {
            let r = OrientedRect::new(cx, cy, h, 4.0, 2.0);
            let (dy, dx) = ang.sin_cos();
            if let Some(t) = ray_rect(0.0, 0.0, dx, dy, &r) {
                let (lx, ly) = r.to_local(t * dx, t * dy);
                let on_x = (lx.abs() - 2.0).abs() < 1e-9 && ly.abs() <= 1.0 + 1e-9;
                let on_y = (ly.abs() - 1.0).abs() < 1e-9 && lx.abs() <= 2.0 + 1e-9;
                prop_assert!(on_x || on_y, "hit at local ({lx}, {ly})");
            }
        }
    }
}
