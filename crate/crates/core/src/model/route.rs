use super::Point;

/// Round-trip path over an ordered list of waypoints.
///
/// Positions are addressed by an offset along the unfolded trip: `[0, L]` walks the
/// waypoints forward, `(L, 2L)` walks them back.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    waypoints: Vec<Point>,
    /// `cumulative[i]` is the path length from the first waypoint to waypoint `i`.
    cumulative: Vec<f64>,
}

impl Route {
    /// Panics if `waypoints` is empty.
    pub fn new(waypoints: Vec<Point>) -> Self {
        assert!(!waypoints.is_empty(), "route needs at least one waypoint");
        let mut cumulative = Vec::with_capacity(waypoints.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in waypoints.windows(2) {
            acc += w[0].distance(&w[1]);
            cumulative.push(acc);
        }
        Route {
            waypoints,
            cumulative,
        }
    }

    pub fn waypoints(&self) -> &[Point] {
        &self.waypoints
    }

    /// One-way path length.
    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Length of one full round trip.
    pub fn period(&self) -> f64 {
        2.0 * self.length()
    }

    /// New offset after travelling `distance` meters from `offset`.
    pub fn advance(&self, offset: f64, distance: f64) -> f64 {
        let period = self.period();
        if period <= 0.0 {
            return 0.0;
        }
        (offset + distance).rem_euclid(period)
    }

    /// True while the offset lies on the outbound leg.
    pub fn is_outbound(&self, offset: f64) -> bool {
        offset < self.length()
    }

    pub fn position_at(&self, offset: f64) -> Point {
        let len = self.length();
        if len <= 0.0 {
            return self.waypoints[0];
        }
        let o = offset.rem_euclid(self.period());
        let along = if o <= len { o } else { self.period() - o };
        // first segment whose end lies at or beyond `along`
        let idx = self
            .cumulative
            .partition_point(|&c| c < along)
            .clamp(1, self.waypoints.len() - 1);
        let (a, b) = (self.waypoints[idx - 1], self.waypoints[idx]);
        let seg = self.cumulative[idx] - self.cumulative[idx - 1];
        if seg <= 0.0 {
            return b;
        }
        let f = (along - self.cumulative[idx - 1]) / seg;
        Point::new(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> Route {
        Route::new(vec![Point::new(0.0, 0.0), Point::new(120.0, 0.0)])
    }

    #[test]
    fn reflects_at_the_end_waypoint() {
        let r = corridor();
        assert_eq!(r.position_at(120.0), Point::new(120.0, 0.0));
        assert_eq!(r.position_at(130.0), Point::new(110.0, 0.0));
        assert!(r.is_outbound(119.0));
        assert!(!r.is_outbound(121.0));
    }

    #[test]
    fn multi_segment_interpolation() {
        let r = Route::new(vec![
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(10.0, 10.0),
        ]);
        assert_eq!(r.length(), 20.0);
        assert_eq!(r.position_at(15.0), Point::new(10.0, 5.0));
        assert_eq!(r.position_at(35.0), Point::new(5.0, 0.0));
    }

    #[test]
    fn single_waypoint_is_stationary() {
        let r = Route::new(vec![Point::new(3.0, 4.0)]);
        assert_eq!(r.advance(0.0, 100.0), 0.0);
        assert_eq!(r.position_at(50.0), Point::new(3.0, 4.0));
    }
}
