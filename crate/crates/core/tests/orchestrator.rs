use mecmig::model::{Route, UserId, WorldState};
use mecmig::orchestrator::{monitor_tick, PlanningTrigger};
use mecmig::scenarios;

fn world() -> WorldState {
    scenarios::load("openface").unwrap()
}

/// Where the mean RSSI of the next cell first exceeds the current one by `margin` dB,
/// for a user on the line through two stations `spacing` apart.
fn crossing(spacing: f64, margin: f64, exponent: f64) -> f64 {
    let r = 10f64.powf(margin / (10.0 * exponent));
    spacing * r / (1.0 + r)
}

#[test]
fn stationary_user_under_sla_stays_quiet() {
    let mut w = world();
    let u = &mut w.users[0];
    u.route = Route::new(vec![u.position]);
    u.monitor.total_ewma_ms = Some(100.0);
    assert_eq!(monitor_tick(&w, UserId(0)), None);
}

#[test]
fn approaching_user_requests_a_plan_at_the_crossing() {
    let mut w = world();
    // walk on the axis of the stations so the one-dimensional oracle applies
    let u = &mut w.users[0];
    u.route = Route::new(vec![
        mecmig::model::Point::new(0.0, 0.0),
        mecmig::model::Point::new(120.0, 0.0),
    ]);
    u.route_offset = 25.0;
    u.position = u.route.position_at(25.0);
    let x = crossing(
        60.0,
        w.radio.hysteresis_margin_db,
        w.radio.pathloss_exponent,
    );
    assert!((x - 35.687).abs() < 1e-3);
    match monitor_tick(&w, UserId(0)) {
        Some(PlanningTrigger::Handover { t_ho_need, target }) => {
            let expected = (x - 25.0) / w.users[0].speed;
            assert!(
                (t_ho_need - expected).abs() < 1e-6,
                "{t_ho_need} vs {expected}"
            );
            assert_eq!(target, w.bs_by_name("bs2").unwrap());
        }
        other => panic!("expected a handover trigger, got {other:?}"),
    }
}

#[test]
fn sla_breach_without_handover_replans_placement() {
    let mut w = world();
    let u = &mut w.users[0];
    u.route = Route::new(vec![u.position]);
    u.monitor.total_ewma_ms = Some(u.sla_max_delay_ms + 1.0);
    w.now = 12.0;
    assert_eq!(
        monitor_tick(&w, UserId(0)),
        Some(PlanningTrigger::Sla {
            t_prime: 12.0 + w.orchestrator.horizon_dt_s
        })
    );
}
