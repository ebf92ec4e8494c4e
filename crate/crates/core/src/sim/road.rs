use serde::{Deserialize, Serialize};

/// Straight road along +x. Lane 0 is the rightmost lane; +y points left and
/// the road is centered on `y = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadMap {
    pub lane_count: usize,
    pub lane_width: f64,
    pub length: f64,
    /// Destination on the road centerline.
    pub destination_x: f64,
}

impl Default for RoadMap {
    fn default() -> Self {
        Self {
            lane_count: 3,
            lane_width: 3.5,
            length: 430.0,
            destination_x: 420.0,
        }
    }
}

impl RoadMap {
    pub fn half_width(&self) -> f64 {
        self.lane_count as f64 * self.lane_width / 2.0
    }

    pub fn left_boundary(&self) -> f64 {
        self.half_width()
    }

    pub fn right_boundary(&self) -> f64 {
        -self.half_width()
    }

    pub fn lane_center(&self, lane: usize) -> f64 {
        assert!(lane < self.lane_count, "lane {lane} out of range");
        -self.half_width() + (lane as f64 + 0.5) * self.lane_width
    }

    /// Nearest lane index, clamped onto the road.
    pub fn lane_index(&self, y: f64) -> usize {
        let raw = ((y + self.half_width()) / self.lane_width).floor();
        raw.clamp(0.0, (self.lane_count - 1) as f64) as usize
    }

    /// Lateral interval `[lo, hi]` covered by a lane.
    pub fn lane_span(&self, lane: usize) -> (f64, f64) {
        let c = self.lane_center(lane);
        (c - self.lane_width / 2.0, c + self.lane_width / 2.0)
    }

    /// Signed offsets `(l_min, l_max)` of the right and left boundaries in the
    /// frame of `lane`'s centerline. The road is straight, so these do not
    /// depend on x.
    pub fn boundary_offsets(&self, lane: usize) -> (f64, f64) {
        let c = self.lane_center(lane);
        (self.right_boundary() - c, self.left_boundary() - c)
    }

    pub fn contains_y(&self, y: f64) -> bool {
        y > self.right_boundary() && y < self.left_boundary()
    }
}
