use mecmig::latency::{e2e_delta, estimate_e2e, estimate_e2e_delta, DelayBreakdown};
use mecmig::model::{BsId, NodeId, ServerId, UserId, WorldState};
use mecmig::{scenarios, Error};
use proptest::prelude::*;

fn linked_pairs(w: &WorldState) -> Vec<(BsId, ServerId)> {
    let mut out = Vec::new();
    for b in &w.base_stations {
        for s in &w.servers {
            if w.links.contains(NodeId::Bs(b.id), NodeId::Server(s.id)) {
                out.push((b.id, s.id));
            }
        }
    }
    out
}

fn placed(app: &str, user: usize, offset: f64, ewma: Option<f64>) -> WorldState {
    let mut w = scenarios::load(app).unwrap();
    let u = &mut w.users[user];
    u.route_offset = u.route.advance(0.0, offset);
    u.position = u.route.position_at(u.route_offset);
    u.monitor.proc_ewma_ms = ewma;
    w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn delta_identity_and_antisymmetry(
        app in prop::sample::select(vec!["simple", "openface", "yolo"]),
        user in 0usize..2,
        offset in 0.0f64..240.0,
        ewma in prop::option::of(1.0f64..400.0),
        t_prime in 0.0f64..60.0,
        i in 0usize..12,
        j in 0usize..12,
    ) {
        let w = placed(app, user, offset, ewma);
        let pairs = linked_pairs(&w);
        let (p, q) = (pairs[i % pairs.len()], pairs[j % pairs.len()]);
        let u = UserId(user);
        let pq = estimate_e2e_delta(&w, u, p, q, t_prime);
        let qp = estimate_e2e_delta(&w, u, q, p, t_prime);
        match (pq, qp) {
            (Ok(pq), Ok(qp)) => {
                prop_assert_eq!(pq, -qp);
                prop_assert_eq!(estimate_e2e_delta(&w, u, p, p, t_prime).unwrap(), 0.0);
            }
            (Err(Error::Unreachable(_)), Err(Error::Unreachable(_))) => {}
            (a, b) => prop_assert!(false, "{:?} / {:?}", a, b),
        }
    }
}

#[test]
fn breakdown_components_on_the_bundled_corridor() {
    let w = placed("openface", 0, 0.0, None);
    let u = UserId(0);
    let bs1 = w.bs_by_name("bs1").unwrap();
    let edge1 = w.server_by_name("edge1").unwrap();
    let cloud = w.cloud().unwrap();
    let near = estimate_e2e(&w, u, bs1, edge1, 0.0).unwrap();
    assert_eq!(near.processing, 150.0);
    assert_eq!(near.propagation, 1.0);
    let far = estimate_e2e(&w, u, bs1, cloud, 0.0).unwrap();
    assert_eq!(far.processing, 100.0);
    assert_eq!(far.propagation, 150.0);
    // mu1 is 2 m from bs1: strongest bracket, 65 Mbps
    assert!((near.transmission - 800e3 / 65e6 * 1000.0).abs() < 1e-12);
    assert_eq!(e2e_delta(&near, &far), -99.0);
}

#[test]
fn predicting_into_the_past_is_rejected() {
    let mut w = placed("simple", 0, 0.0, None);
    w.now = 10.0;
    let p = w.users[0].assignment;
    assert!(matches!(
        estimate_e2e(&w, UserId(0), p.0, p.1, 5.0),
        Err(Error::PastPrediction { .. })
    ));
}

#[test]
fn f32_breakdowns() {
    let a = DelayBreakdown::<f32>::new(10.0, 2.0, 1.0, 0.0);
    let b = DelayBreakdown::<f32>::new(5.0, 2.0, 50.0, 0.0);
    assert_eq!(e2e_delta(&a, &b), -44.0f32);
    assert_eq!(e2e_delta(&a, &b), -e2e_delta(&b, &a));
}
