//! Car-following and lane-change rules for traffic vehicles.

use serde::{Deserialize, Serialize};

/// Gaps below this are treated as this.
pub const MIN_GAP: f64 = 0.1;
/// Hard braking floor applied to every IDM output.
pub const MAX_DECEL: f64 = 12.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmParams {
    pub v0: f64,
    pub t_headway: f64,
    pub a_max: f64,
    pub b_comf: f64,
    pub s0: f64,
    pub delta: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            v0: 11.0,
            t_headway: 1.5,
            a_max: 1.5,
            b_comf: 2.0,
            s0: 2.0,
            delta: 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MobilParams {
    pub politeness: f64,
    pub threshold: f64,
    pub b_safe: f64,
}

impl Default for MobilParams {
    fn default() -> Self {
        Self {
            politeness: 0.3,
            threshold: 0.2,
            b_safe: 3.0,
        }
    }
}

/// IDM desired gap `s*`; the dynamic term is floored at zero so a faster
/// leader never inflates the gap below `s0`.
pub fn idm_desired_gap(v: f64, v_lead: f64, p: &IdmParams) -> f64 {
    let dv = v - v_lead;
    p.s0 + (v * p.t_headway + v * dv / (2.0 * (p.a_max * p.b_comf).sqrt())).max(0.0)
}

/// IDM acceleration. `lead = None` means free road.
pub fn idm_accel(v: f64, lead: Option<(f64, f64)>, p: &IdmParams) -> f64 {
    let free = 1.0 - (v / p.v0).powf(p.delta);
    let interaction = match lead {
        Some((v_lead, gap)) => (idm_desired_gap(v, v_lead, p) / gap.max(MIN_GAP)).powi(2),
        None => 0.0,
    };
    (p.a_max * (free - interaction)).clamp(-MAX_DECEL, p.a_max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneDecision {
    Keep,
    ChangeLeft,
    ChangeRight,
}

/// Accelerations in one candidate lane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaneCandidate {
    /// Own acceleration behind the new leader.
    pub own: f64,
    /// New follower before and after the change (0 when there is none).
    pub follower_before: f64,
    pub follower_after: f64,
}

/// Accelerations around the deciding vehicle, evaluated on a frozen snapshot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MobilNeighbors {
    pub own_current: f64,
    /// Old follower before and after the change (0 when there is none).
    pub old_follower_before: f64,
    pub old_follower_after: f64,
    pub left: Option<LaneCandidate>,
    pub right: Option<LaneCandidate>,
}

/// Incentive of a change, or `None` when the safety criterion rejects it.
pub fn mobil_incentive(p: &MobilParams, n: &MobilNeighbors, c: &LaneCandidate) -> Option<f64> {
    if c.follower_after < -p.b_safe {
        return None;
    }
    let own_gain = c.own - n.own_current;
    let others = (c.follower_after - c.follower_before)
        + (n.old_follower_after - n.old_follower_before);
    Some(own_gain + p.politeness * others)
}

pub fn mobil_decide(p: &MobilParams, n: &MobilNeighbors) -> LaneDecision {
    let score = |c: &Option<LaneCandidate>| {
        c.as_ref()
            .and_then(|c| mobil_incentive(p, n, c))
            .filter(|&g| g > p.threshold)
    };
    match (score(&n.left), score(&n.right)) {
        (Some(l), Some(r)) if r > l => LaneDecision::ChangeRight,
        (Some(_), _) => LaneDecision::ChangeLeft,
        (None, Some(_)) => LaneDecision::ChangeRight,
        (None, None) => LaneDecision::Keep,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn free_flow_equilibrium() {
        let p = IdmParams::default();
        assert!(idm_accel(p.v0, None, &p).abs() < 1e-12);
        assert!(idm_accel(p.v0, Some((p.v0, 1e9)), &p).abs() < 1e-9);
    }

    #[test]
    fn standstill_on_free_road() {
        let p = IdmParams::default();
        let gap = 1e6;
        let expected = p.a_max * (1.0 - (p.s0 / gap).powi(2));
        assert!((idm_accel(0.0, Some((0.0, gap)), &p) - expected).abs() < 1e-12);
        assert_eq!(idm_accel(0.0, None, &p), p.a_max);
    }

    #[test]
    fn following_at_equal_speed_matches_scalar_formula() {
        let p = IdmParams::default();
        let gap = p.s0 + 10.0 * p.t_headway;
        // s* = s0 + v·T (Δv = 0) equals the gap, so a = a_max·(−(v/v0)^δ)
        let expected = 1.5 * (1.0 - (10.0_f64 / 11.0).powi(4) - 1.0);
        assert!((idm_accel(10.0, Some((10.0, gap)), &p) - expected).abs() < 1e-12);
    }

    #[test]
    fn closing_fast_brakes_hard_but_bounded() {
        let p = IdmParams::default();
        let a = idm_accel(15.0, Some((0.0, 0.5)), &p);
        assert_eq!(a, -MAX_DECEL);
    }

    fn neighbors(own_current: f64, left: Option<LaneCandidate>) -> MobilNeighbors {
        MobilNeighbors {
            own_current,
            old_follower_before: 0.0,
            old_follower_after: 0.0,
            left,
            right: None,
        }
    }

    #[test]
    fn slow_leader_with_empty_left_lane_changes() {
        let idm = IdmParams::default();
        let p = MobilParams::default();
        let v = 10.0;
        let own_current = idm_accel(v, Some((3.0, 15.0)), &idm);
        let own_left = idm_accel(v, None, &idm);
        let n = neighbors(
            own_current,
            Some(LaneCandidate {
                own: own_left,
                follower_before: 0.0,
                follower_after: 0.0,
            }),
        );
        let gain = own_left - own_current;
        assert!(gain > p.threshold);
        assert_eq!(mobil_incentive(&p, &n, &n.left.unwrap()), Some(gain));
        assert_eq!(mobil_decide(&p, &n), LaneDecision::ChangeLeft);
    }

    #[test]
    fn unsafe_follower_blocks_change() {
        let p = MobilParams::default();
        let n = neighbors(
            -2.0,
            Some(LaneCandidate {
                own: 1.5,
                follower_before: 0.5,
                follower_after: -p.b_safe - 0.01,
            }),
        );
        assert_eq!(mobil_decide(&p, &n), LaneDecision::Keep);
    }

    #[test]
    fn no_leader_anywhere_keeps_lane() {
        let idm = IdmParams::default();
        let a = idm_accel(8.0, None, &idm);
        let c = LaneCandidate {
            own: a,
            follower_before: 0.0,
            follower_after: 0.0,
        };
        let n = MobilNeighbors {
            right: Some(c),
            ..neighbors(a, Some(c))
        };
        assert_eq!(mobil_decide(&MobilParams::default(), &n), LaneDecision::Keep);
    }

    proptest! {
        #[test]
        fn accel_within_bounds(v in 0.0..20.0f64, vl in 0.0..20.0f64, gap in 0.0..200.0f64) {
            let p = IdmParams::default();
            let a = idm_accel(v, Some((vl, gap)), &p);
            prop_assert!(a.is_finite());
            prop_assert!((-MAX_DECEL..=p.a_max).contains(&a));
        }

        #[test]
        fn closer_leader_never_accelerates_more(v in 0.0..15.0f64, vl in 0.0..15.0f64, g in 0.5..100.0f64) {
            let p = IdmParams::default();
            prop_assert!(idm_accel(v, Some((vl, g)), &p) <= idm_accel(v, Some((vl, g + 1.0)), &p));
        }
    }
}
