use crate::planner::MixedAction;
use crate::sim::RoadMap;

/// Scale and offset of the discretization factor; `n ∈ {1, …, 10}`.
pub const KAPPA: f64 = 9.0;
pub const SIGMA: f64 = 1.0;

/// Lateral clearance kept beyond the ego half-width when bounding targets.
pub const TARGET_EDGE_MARGIN: f64 = 0.3;

/// Element-wise `ã·(1 − λ) + a·λ`.
pub fn mix_policy(a_tilde: &MixedAction, a: &MixedAction, lambda: f64) -> MixedAction {
    let mix = |b: f64, r: f64| b * (1.0 - lambda) + r * lambda;
    MixedAction {
        v_f: mix(a_tilde.v_f, a.v_f),
        d_f: mix(a_tilde.d_f, a.d_f),
    }
}

/// `n = ⌊κ·η + σ⌋`, never below one.
pub fn discretize_levels(eta: f64, kappa: f64, sigma: f64) -> usize {
    let n = (kappa * eta + sigma).floor();
    if n.is_finite() && n >= 1.0 {
        n as usize
    } else {
        1
    }
}

/// Discrete lateral target nearest `d_f`. One level means staying on the
/// reference path (offset 0); otherwise candidates split `[l_min, l_max]`
/// into `n` equal steps and the lowest index wins ties.
pub fn snap_lateral(d_f: f64, l_min: f64, l_max: f64, n: usize) -> f64 {
    assert!(l_min < l_max, "snap_lateral needs l_min < l_max, got [{l_min}, {l_max}]");
    if n <= 1 {
        return 0.0;
    }
    let dx = (l_max - l_min) / n as f64;
    let mut best = (f64::INFINITY, l_min);
    for i in 0..=n {
        let p = if i == n { l_max } else { l_min + i as f64 * dx };
        let dist = (p - d_f).abs();
        if dist < best.0 {
            best = (dist, p);
        }
    }
    best.1
}

/// Admissible lateral targets relative to `frame_y`: the road edges pulled in
/// by the ego half-width plus [`TARGET_EDGE_MARGIN`].
pub fn lateral_bounds(road: &RoadMap, frame_y: f64, ego_width: f64) -> (f64, f64) {
    let inset = ego_width / 2.0 + TARGET_EDGE_MARGIN;
    (road.right_boundary() + inset - frame_y, road.left_boundary() - inset - frame_y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mixing_limits_and_midpoint() {
        let bt = MixedAction { v_f: 4.0, d_f: 0.0 };
        let a = MixedAction { v_f: 8.0, d_f: 2.0 };
        assert_eq!(mix_policy(&bt, &a, 0.0), bt);
        assert_eq!(mix_policy(&bt, &a, 1.0), a);
        assert_eq!(mix_policy(&bt, &a, 0.5), MixedAction { v_f: 6.0, d_f: 1.0 });
    }

    #[test]
    fn level_count_examples() {
        assert_eq!(discretize_levels(0.0, KAPPA, SIGMA), 1);
        assert_eq!(discretize_levels(1.0, KAPPA, SIGMA), 10);
        assert_eq!(discretize_levels(0.5, KAPPA, SIGMA), 5);
    }

    #[test]
    fn snap_examples() {
        assert_eq!(snap_lateral(0.3, -2.0, 2.0, 4), 0.0);
        assert_eq!(snap_lateral(-1.0, -2.0, 2.0, 4), -1.0);
        // halfway between −1 and 0: lower index
        assert_eq!(snap_lateral(-0.5, -2.0, 2.0, 4), -1.0);
        assert_eq!(snap_lateral(1.7, -2.0, 2.0, 1), 0.0);
        assert_eq!(snap_lateral(9.0, -2.0, 2.0, 4), 2.0);
    }

    #[test]
    fn bounds_of_middle_lane_are_symmetric() {
        let road = RoadMap::default();
        let (lo, hi) = lateral_bounds(&road, 0.0, 1.8);
        assert!((lo + 4.05).abs() < 1e-12 && (hi - 4.05).abs() < 1e-12);
        let (lo, hi) = lateral_bounds(&road, road.lane_center(0), 1.8);
        assert!((lo + 0.55).abs() < 1e-12 && (hi - 7.55).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn mix_stays_in_hull(
            v1 in 0.0..15.0f64, d1 in -8.0..8.0f64, v2 in 0.0..15.0f64, d2 in -8.0..8.0f64,
            lambda in 0.0..=1.0f64,
        ) {
            let m = mix_policy(&MixedAction { v_f: v1, d_f: d1 }, &MixedAction { v_f: v2, d_f: d2 }, lambda);
            prop_assert!(m.v_f >= v1.min(v2) - 1e-12 && m.v_f <= v1.max(v2) + 1e-12);
            prop_assert!(m.d_f >= d1.min(d2) - 1e-12 && m.d_f <= d1.max(d2) + 1e-12);
        }

        #[test]
        fn levels_monotone(e1 in 0.0..=1.0f64, e2 in 0.0..=1.0f64) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let (n_lo, n_hi) = (discretize_levels(lo, KAPPA, SIGMA), discretize_levels(hi, KAPPA, SIGMA));
            prop_assert!(n_lo <= n_hi);
            prop_assert!((1..=10).contains(&n_lo) && (1..=10).contains(&n_hi));
        }

        #[test]
        fn snap_error_within_half_step(
            d in -10.0..10.0f64, lo in -8.0..0.0f64, width in 0.5..16.0f64, n in 2usize..12,
        ) {
            let hi = lo + width;
            let p = snap_lateral(d, lo, hi, n);
            prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
            if d >= lo && d <= hi {
                prop_assert!((p - d).abs() <= width / n as f64 / 2.0 + 1e-12);
            }
            // brute-force nearest candidate
            let best = (0..=n).map(|i| lo + i as f64 * width / n as f64)
                .map(|c| (c - d).abs()).fold(f64::INFINITY, f64::min);
            prop_assert!(((p - d).abs() - best).abs() <= 1e-9);
        }
    }
}
