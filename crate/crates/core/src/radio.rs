//! RSSI generation and prediction, RSSI-to-rate mapping, and handover-time prediction.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{BaseStation, BsId, MobileUser, Point};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// One bracket of the RSSI to PHY-rate table; applies from `rssi_dbm` (inclusive) upward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateStep {
    pub rssi_dbm: f64,
    pub rate_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub pathloss_exponent: f64,
    pub ref_distance_m: f64,
    pub pathloss_at_d0_db: f64,
    pub shadowing_sigma_db: f64,
    pub rssi_min_dbm: f64,
    pub hysteresis_margin_db: f64,
    pub rate_table: Vec<RateStep>,
}

impl Default for RadioConfig {
    fn default() -> Self {
        // single-stream 20 MHz MCS0..MCS7 rates
        let steps = [
            (-82.0, 6.5e6),
            (-78.0, 13.0e6),
            (-74.0, 19.5e6),
            (-70.0, 26.0e6),
            (-66.0, 39.0e6),
            (-62.0, 52.0e6),
            (-57.0, 58.5e6),
            (-52.0, 65.0e6),
        ];
        RadioConfig {
            pathloss_exponent: 3.0,
            ref_distance_m: 1.0,
            pathloss_at_d0_db: 40.0,
            shadowing_sigma_db: 2.0,
            rssi_min_dbm: -85.0,
            hysteresis_margin_db: 5.0,
            rate_table: steps
                .iter()
                .map(|&(rssi_dbm, rate_bps)| RateStep { rssi_dbm, rate_bps })
                .collect(),
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::Invariant {
            entity: "radio".into(),
            reason: reason.into(),
        };
        if !(self.ref_distance_m > 0.0) || !(self.pathloss_exponent > 0.0) {
            return Err(bad("ref_distance_m and pathloss_exponent must be > 0"));
        }
        if !(self.shadowing_sigma_db >= 0.0) || !(self.hysteresis_margin_db >= 0.0) {
            return Err(bad("shadowing sigma and hysteresis margin must be >= 0"));
        }
        if self.rate_table.is_empty() {
            return Err(bad("rate_table must not be empty"));
        }
        for w in self.rate_table.windows(2) {
            if !(w[1].rssi_dbm > w[0].rssi_dbm) || w[1].rate_bps < w[0].rate_bps {
                return Err(bad(
                    "rate_table thresholds must increase strictly with nondecreasing rates",
                ));
            }
        }
        if !(self.rssi_min_dbm < self.rate_table[0].rssi_dbm) {
            return Err(bad("rssi_min must lie below the lowest rate threshold"));
        }
        Ok(())
    }
}

/// Log-distance path loss: `tx - PL(d0) - 10 n log10(d / d0)`, with `d` clamped to `d0`.
pub fn log_distance_rssi<S: Scalar>(
    tx_power_dbm: S,
    pathloss_at_d0_db: S,
    exponent: S,
    ref_distance: S,
    distance: S,
) -> S {
    let d = distance.max(ref_distance);
    tx_power_dbm - pathloss_at_d0_db - S::lit(10.0) * exponent * (d / ref_distance).log10()
}

/// Step lookup into `(threshold, rate)` brackets sorted by threshold. Thresholds are
/// inclusive lower bounds; below the first threshold the rate is zero.
pub fn rate_for_rssi<S: Scalar>(table: &[(S, S)], rssi: S) -> S {
    let idx = table.partition_point(|&(threshold, _)| threshold <= rssi);
    if idx == 0 {
        S::zero()
    } else {
        table[idx - 1].1
    }
}

/// Noiseless RSSI at `pos` from `bs`.
pub fn mean_rssi(pos: &Point, bs: &BaseStation, cfg: &RadioConfig) -> f64 {
    log_distance_rssi(
        bs.tx_power_dbm,
        cfg.pathloss_at_d0_db,
        cfg.pathloss_exponent,
        cfg.ref_distance_m,
        pos.distance(&bs.position),
    )
}

/// Measured RSSI: the mean model plus log-normal shadowing drawn from `rng`.
pub fn rssi_at<R: Rng + ?Sized>(
    user_pos: &Point,
    bs: &BaseStation,
    cfg: &RadioConfig,
    rng: &mut R,
) -> f64 {
    let mean = mean_rssi(user_pos, bs, cfg);
    if cfg.shadowing_sigma_db > 0.0 {
        let n = Normal::new(0.0, cfg.shadowing_sigma_db).expect("validated sigma");
        mean + n.sample(rng)
    } else {
        mean
    }
}

/// Mean-model RSSI at the position the user will occupy at `t_prime`.
pub fn predict_rssi(
    user: &MobileUser,
    bs: &BaseStation,
    now: f64,
    t_prime: f64,
    cfg: &RadioConfig,
) -> Result<f64> {
    if t_prime < now {
        return Err(Error::PastPrediction {
            requested: t_prime,
            now,
        });
    }
    Ok(mean_rssi(&user.position_after(t_prime - now), bs, cfg))
}

pub fn bandwidth_from_rssi(rssi: f64, cfg: &RadioConfig) -> f64 {
    let table: Vec<(f64, f64)> = cfg
        .rate_table
        .iter()
        .map(|s| (s.rssi_dbm, s.rate_bps))
        .collect();
    rate_for_rssi(&table, rssi)
}

/// Predicted handover: the instant and the base station to hand over to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandoverPrediction {
    pub t_ho: f64,
    pub target: BsId,
}

const SCAN_STEP_S: f64 = 0.1;
const BISECT_ITERS: usize = 64;

/// Earliest time within `[now, now + horizon]` at which some candidate's predicted RSSI
/// exceeds the current base station's by the hysteresis margin while staying above
/// `rssi_min`.
pub fn predict_handover_time(
    user: &MobileUser,
    current_bs: &BaseStation,
    candidates: &[&BaseStation],
    now: f64,
    horizon: f64,
    cfg: &RadioConfig,
) -> Option<HandoverPrediction> {
    let at = |dt: f64| user.position_after(dt);
    // >= 0 once `c` qualifies as a handover target
    let slack = |c: &BaseStation, pos: &Point| -> f64 {
        let rc = mean_rssi(pos, c, cfg);
        let cur = mean_rssi(pos, current_bs, cfg);
        (rc - cur - cfg.hysteresis_margin_db).min(rc - cfg.rssi_min_dbm)
    };
    let others: Vec<&BaseStation> = candidates
        .iter()
        .copied()
        .filter(|c| c.id != current_bs.id)
        .collect();
    if others.is_empty() || horizon < 0.0 {
        return None;
    }

    let p0 = at(0.0);
    if let Some(best) = others
        .iter()
        .filter(|c| slack(c, &p0) >= 0.0)
        .max_by(|a, b| {
            mean_rssi(&p0, a, cfg)
                .total_cmp(&mean_rssi(&p0, b, cfg))
                .then(b.id.cmp(&a.id))
        })
    {
        return Some(HandoverPrediction {
            t_ho: now,
            target: best.id,
        });
    }

    let steps = (horizon / SCAN_STEP_S).ceil() as usize;
    let mut prev = 0.0;
    for k in 1..=steps {
        let dt = (k as f64 * SCAN_STEP_S).min(horizon);
        let pos = at(dt);
        let crossing = others
            .iter()
            .filter(|c| slack(c, &pos) >= 0.0)
            .map(|c| {
                let (mut lo, mut hi) = (prev, dt);
                for _ in 0..BISECT_ITERS {
                    let mid = 0.5 * (lo + hi);
                    if slack(c, &at(mid)) >= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                (hi, c.id)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((dt_ho, target)) = crossing {
            return Some(HandoverPrediction {
                t_ho: now + dt_ho,
                target,
            });
        }
        prev = dt;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContainerId, Route, ServerId, UserId};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bs(id: usize, x: f64) -> BaseStation {
        BaseStation {
            id: BsId(id),
            name: format!("bs{}", id + 1),
            position: Point::new(x, 0.0),
            tx_power_dbm: 20.0,
            max_users: 4,
            collocated_server: None,
        }
    }

    fn walker(waypoints: Vec<Point>, speed: f64) -> MobileUser {
        let route = Route::new(waypoints);
        MobileUser {
            id: UserId(0),
            name: "mu".into(),
            position: route.position_at(0.0),
            speed,
            route,
            route_offset: 0.0,
            task_size_bits: 8e5,
            task_rate: 1.0,
            container: ContainerId(0),
            assignment: (BsId(0), ServerId(0)),
            sla_max_delay_ms: 100.0,
            monitor: Default::default(),
        }
    }

    fn quiet() -> RadioConfig {
        RadioConfig {
            shadowing_sigma_db: 0.0,
            ..RadioConfig::default()
        }
    }

    #[test]
    fn reference_distance_identity() {
        let b = bs(0, 0.0);
        let cfg = quiet();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = rssi_at(&Point::new(1.0, 0.0), &b, &cfg, &mut rng);
        assert_eq!(r, 20.0 - 40.0);
        // closer than d0 clamps
        assert_eq!(mean_rssi(&Point::new(0.2, 0.0), &b, &cfg), -20.0);
    }

    #[test]
    fn hundred_meters_hand_evaluation() {
        let r = log_distance_rssi(20.0_f64, 40.0, 3.0, 1.0, 100.0);
        assert_relative_eq!(r, -80.0, epsilon = 1e-12);
        let r32 = log_distance_rssi(20.0_f32, 40.0, 3.0, 1.0, 100.0);
        assert_relative_eq!(r32, -80.0, epsilon = 1e-4);
    }

    #[test]
    fn equal_seeds_give_identical_samples() {
        let b = bs(0, 0.0);
        let cfg = RadioConfig::default();
        let p = Point::new(25.0, 3.0);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| rssi_at(&p, &b, &cfg, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn rate_table_edges() {
        let cfg = RadioConfig::default();
        assert_eq!(bandwidth_from_rssi(-30.0, &cfg), 65.0e6);
        assert_eq!(bandwidth_from_rssi(cfg.rssi_min_dbm - 1.0, &cfg), 0.0);
        assert_eq!(bandwidth_from_rssi(-83.0, &cfg), 0.0);
        // thresholds are inclusive lower bounds
        assert_eq!(bandwidth_from_rssi(-70.0, &cfg), 26.0e6);
        assert_eq!(bandwidth_from_rssi(-70.0001, &cfg), 19.5e6);
    }

    #[test]
    fn stationary_prediction_equals_mean() {
        let u = walker(vec![Point::new(17.0, 2.0)], 1.0);
        let b = bs(0, 0.0);
        let cfg = quiet();
        let now = mean_rssi(&u.position, &b, &cfg);
        for t in [0.0, 1.0, 33.0, 1e4] {
            assert_eq!(predict_rssi(&u, &b, 0.0, t, &cfg).unwrap(), now);
        }
    }

    #[test]
    fn approaching_user_sees_increasing_prediction() {
        let u = walker(vec![Point::new(0.0, 0.0), Point::new(60.0, 0.0)], 1.0);
        let b = bs(0, 60.0);
        let cfg = quiet();
        let mut last = f64::NEG_INFINITY;
        for t in 0..59 {
            let r = predict_rssi(&u, &b, 0.0, t as f64, &cfg).unwrap();
            assert!(r > last);
            last = r;
        }
        assert!(matches!(
            predict_rssi(&u, &b, 5.0, 4.0, &cfg),
            Err(Error::PastPrediction { .. })
        ));
    }

    #[test]
    fn prediction_follows_reflected_path() {
        // walk 0 -> 10 and back; at t = 14 s the user is at x = 6 on the way back
        let u = walker(vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)], 1.0);
        let b = bs(0, 0.0);
        let cfg = quiet();
        let expected = 20.0 - 40.0 - 30.0 * 6.0_f64.log10();
        assert_relative_eq!(
            predict_rssi(&u, &b, 0.0, 14.0, &cfg).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    /// Position where a user on the segment between two base stations `l` meters apart
    /// sees the far one `margin` dB stronger: `d1 / d2 = 10^(margin / (10 n))`.
    fn analytic_crossing(l: f64, margin: f64, n: f64) -> f64 {
        let r = 10f64.powf(margin / (10.0 * n));
        l * r / (1.0 + r)
    }

    #[test]
    fn symmetric_crossing_with_margin() {
        let u = walker(vec![Point::new(10.0, 0.0), Point::new(120.0, 0.0)], 1.0);
        let (b1, b2) = (bs(0, 0.0), bs(1, 60.0));
        let cfg = quiet();
        let p = predict_handover_time(&u, &b1, &[&b1, &b2], 0.0, 60.0, &cfg).unwrap();
        assert_eq!(p.target, BsId(1));
        let x = analytic_crossing(60.0, 5.0, 3.0);
        assert_relative_eq!(p.t_ho, x - 10.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_margin_crosses_at_midpoint() {
        let u = walker(vec![Point::new(10.0, 0.0), Point::new(120.0, 0.0)], 2.0);
        let (b1, b2) = (bs(0, 0.0), bs(1, 60.0));
        let cfg = RadioConfig {
            hysteresis_margin_db: 0.0,
            ..quiet()
        };
        let p = predict_handover_time(&u, &b1, &[&b2], 5.0, 60.0, &cfg).unwrap();
        assert_relative_eq!(p.t_ho, 5.0 + 10.0, epsilon = 1e-6);
    }

    #[test]
    fn stationary_user_never_hands_over() {
        let u = walker(vec![Point::new(2.0, 0.0)], 1.0);
        let (b1, b2) = (bs(0, 0.0), bs(1, 60.0));
        assert!(predict_handover_time(&u, &b1, &[&b1, &b2], 0.0, 300.0, &quiet()).is_none());
    }

    #[test]
    fn target_below_floor_is_never_returned() {
        // far candidate stays below rssi_min for the whole horizon
        let u = walker(vec![Point::new(0.0, 0.0), Point::new(400.0, 0.0)], 1.0);
        let (b1, b2) = (bs(0, 0.0), bs(1, 1000.0));
        let cfg = quiet();
        if let Some(p) = predict_handover_time(&u, &b1, &[&b2], 0.0, 400.0, &cfg) {
            let r = predict_rssi(&u, &b2, 0.0, p.t_ho, &cfg).unwrap();
            assert!(r >= cfg.rssi_min_dbm);
        }
    }

    proptest! {
        #[test]
        fn bandwidth_is_monotone(a in -120.0f64..0.0, b in -120.0f64..0.0) {
            let cfg = RadioConfig::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(bandwidth_from_rssi(lo, &cfg) <= bandwidth_from_rssi(hi, &cfg));
        }

        #[test]
        fn mean_rssi_nonincreasing_in_distance(d1 in 0.0f64..500.0, d2 in 0.0f64..500.0) {
            let b = bs(0, 0.0);
            let cfg = quiet();
            let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(
                mean_rssi(&Point::new(near, 0.0), &b, &cfg) >= mean_rssi(&Point::new(far, 0.0), &b, &cfg)
            );
        }
    }
}
