use serde::{Deserialize, Serialize};

use super::demo::{DemoSession, DemonstrationRecord};
use crate::planner::MixedAction;
use crate::policy::lateral_bounds;
use crate::sim::RoadMap;

/// One supervised pair: observation at slice start and the terminal target
/// reached `T_c` later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BcSample {
    pub observation: Vec<f64>,
    pub label: MixedAction,
}

/// Index of the record nearest `t`, if within `tol`.
fn nearest(records: &[DemonstrationRecord], t: f64, tol: f64) -> Option<usize> {
    let i = records.partition_point(|r| r.t < t);
    [i.checked_sub(1), (i < records.len()).then_some(i)]
        .into_iter()
        .flatten()
        .map(|j| (j, (records[j].t - t).abs()))
        .filter(|&(_, d)| d <= tol)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(j, _)| j)
}

/// Label each record with the speed and lateral offset found `t_c` later.
///
/// The partner is the record nearest `t + t_c` within half a sampling
/// interval. Offsets are measured from the center of the lane nearest the
/// record's own position and clamped to that frame's admissible bounds.
pub fn slice_records(
    records: &[DemonstrationRecord],
    road: &RoadMap,
    ego_width: f64,
    v_max: f64,
    dt: f64,
    t_c: f64,
) -> Vec<BcSample> {
    let tol = dt / 2.0 + 1e-9;
    records
        .iter()
        .filter_map(|r| {
            let j = nearest(records, r.t + t_c, tol)?;
            let end = records[j].pose;
            let frame = road.lane_center(road.lane_index(r.pose.y));
            let (lo, hi) = lateral_bounds(road, frame, ego_width);
            Some(BcSample {
                observation: r.observation.clone(),
                label: MixedAction {
                    v_f: end.v.clamp(0.0, v_max),
                    d_f: (end.y - frame).clamp(lo, hi),
                },
            })
        })
        .collect()
}

pub fn slice_demonstrations(session: &DemoSession, t_c: f64) -> Vec<BcSample> {
    let h = &session.header;
    slice_records(&session.records, &h.road, h.geometry.width, h.limits.v_max, h.dt, t_c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obs::OBS_DIM;
    use crate::planner::fit_quintic;
    use crate::sim::{step_bicycle, ControlInput, VehiclePose};

    fn rec(t: f64, pose: VehiclePose) -> DemonstrationRecord {
        DemonstrationRecord {
            t,
            observation: vec![0.0; OBS_DIM],
            pose,
        }
    }

    fn slice(rs: &[DemonstrationRecord], dt: f64) -> Vec<BcSample> {
        slice_records(rs, &RoadMap::default(), 1.8, 15.0, dt, 2.0)
    }

    #[test]
    fn stationary_session_labels_current_offset() {
        let rs: Vec<_> = (0..40).map(|k| rec(k as f64 * 0.1, VehiclePose::new(30.0, 0.4, 0.0, 0.0))).collect();
        let s = slice(&rs, 0.1);
        assert_eq!(s.len(), 40 - 20);
        assert!(s.iter().all(|b| b.label == MixedAction { v_f: 0.0, d_f: 0.4 }));
    }

    #[test]
    fn constant_speed_lane_center_drive() {
        // kinematic rollout oracle
        let mut pose = VehiclePose::new(20.0, 3.5, 0.0, 5.0);
        let mut rs = Vec::new();
        for k in 0..50 {
            rs.push(rec(k as f64 * 0.1, pose));
            pose = step_bicycle(&pose, &ControlInput::new(5.0, 0.0), 0.1, 2.7);
        }
        for b in slice(&rs, 0.1) {
            assert!((b.label.v_f - 5.0).abs() < 1e-12 && b.label.d_f.abs() < 1e-12);
        }
    }

    #[test]
    fn completed_lane_change_labels_full_offset() {
        // replay a 3.5 m lane change finished within one slice
        let mut rs = Vec::new();
        let q = fit_quintic(0.0, 0.0, 0.0, 3.5, 15.0);
        for k in 0..60 {
            let x = k as f64 * 1.0;
            let y = if x < 15.0 { q.eval(x) } else { 3.5 };
            rs.push(rec(k as f64 * 0.1, VehiclePose::new(20.0 + x, y, 0.0, 10.0)));
        }
        let s = slice(&rs, 0.1);
        // slices starting before the maneuver (t = 0) end after it (t = 2 s)
        assert!((s[0].label.d_f - 3.5).abs() < 1e-12);
    }

    #[test]
    fn labels_survive_finer_resampling() {
        let coarse: Vec<_> = (0..40)
            .map(|k| rec(k as f64 * 0.1, VehiclePose::new(k as f64, 0.05 * k as f64, 0.0, k as f64 * 0.2)))
            .collect();
        let mut fine = Vec::new();
        for (k, r) in coarse.iter().enumerate() {
            fine.push(r.clone());
            if k + 1 < coarse.len() {
                let mut mid = r.clone();
                mid.t += 0.05;
                mid.pose.v = -1.0;
                fine.push(mid);
            }
        }
        let a = slice(&coarse, 0.1);
        let b = slice(&fine, 0.05);
        // every coarse slice reappears at the matching fine record
        for s in &a {
            assert!(b.contains(s));
        }
    }

    #[test]
    fn count_equals_records_with_partner() {
        for n in [0usize, 5, 20, 21, 33] {
            let rs: Vec<_> = (0..n).map(|k| rec(k as f64 * 0.1, VehiclePose::new(0.0, 0.0, 0.0, 1.0))).collect();
            let expected = rs.iter().filter(|r| rs.iter().any(|p| (p.t - r.t - 2.0).abs() <= 0.05 + 1e-9)).count();
            assert_eq!(slice(&rs, 0.1).len(), expected);
        }
    }
}
