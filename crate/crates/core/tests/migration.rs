use mecmig::migration::{
    complete_migration, complete_pre_migration, estimate_times, execute_migration,
    execute_pre_migration, planner_estimate, probe_delta_sizes,
};
use mecmig::model::{ContainerId, ContainerStatus, Resources, WorldState};
use mecmig::{scenarios, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn world(app: &str) -> WorldState {
    let mut w = scenarios::load(app).unwrap();
    w.migration.noise_sigma = 0.0;
    w
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(1)
}

#[test]
fn probe_reports_table_sizes_and_leaves_the_container_running() {
    for (app, ckpt, delta, ratio) in [
        ("simple", 11.29e6, 47.7e3, 0.996),
        ("openface", 196.8e6, 7.94e6, 0.960),
        ("yolo", 584.8e6, 5.60e6, 0.991),
    ] {
        let mut w = world(app);
        let c = ContainerId(0);
        assert_eq!(probe_delta_sizes(&mut w, c).unwrap(), (ckpt, delta));
        assert_eq!(w.container(c).status, ContainerStatus::Running);
        assert_eq!(w.container(c).probed_sizes, Some((ckpt, delta)));
        let r = w.apps[w.container(c).app].reduction_ratio();
        assert!((r - ratio).abs() < 0.001, "{app}: {r}");
    }
}

#[test]
fn zero_churn_probe() {
    let mut w = world("simple");
    w.apps.iter_mut().for_each(|a| a.delta_size_bytes = 0.0);
    let (ckpt, delta) = probe_delta_sizes(&mut w, ContainerId(0)).unwrap();
    assert_eq!((ckpt, delta), (11.29e6, 0.0));
}

#[test]
fn probe_requires_a_running_container() {
    let mut w = world("simple");
    w.containers[0].status = ContainerStatus::Frozen;
    assert!(matches!(
        probe_delta_sizes(&mut w, ContainerId(0)),
        Err(Error::NotRunning(_))
    ));
}

#[test]
fn two_phase_migration_preserves_state() {
    let mut w = world("openface");
    let c = ContainerId(0);
    let dst = w.server_by_name("edge2").unwrap();
    let src = w.container(c).host;
    w.containers[0].state_counter = 4217;

    let pre = execute_pre_migration(&mut w, c, dst, &mut rng()).unwrap();
    assert_eq!(w.container(c).status, ContainerStatus::PreMigrating);
    assert!(w.container(c).is_serving());
    assert!(w.server(dst).reserved.contains(&c));
    assert_eq!(pre.bytes, 196.8e6);

    // freezing before the full copy arrived breaks the protocol
    assert!(matches!(
        execute_migration(&mut w, c, dst, &mut rng()),
        Err(Error::ProtocolOrder { .. })
    ));

    complete_pre_migration(&mut w, &pre);
    let mig = execute_migration(&mut w, c, dst, &mut rng()).unwrap();
    assert_eq!(w.container(c).status, ContainerStatus::Frozen);
    assert!(!w.container(c).is_serving());

    let est = estimate_times(
        &w.apps[w.container(c).app],
        w.server(src),
        w.server(dst),
        &w.links,
    )
    .unwrap();
    assert_eq!(mig.duration(), est.t_mig);
    assert_eq!(pre.duration(), est.t_pre_mig);

    complete_migration(&mut w, &mig).unwrap();
    let after = w.container(c);
    assert_eq!(after.state_counter, 4217);
    assert_eq!(after.host, dst);
    assert_eq!(after.status, ContainerStatus::Running);
    assert!(w.server(dst).hosted.contains(&c));
    assert!(!w.server(src).hosted.contains(&c));
    assert!(w.server(dst).reserved.is_empty());
    assert_eq!(w.user(after.user).server(), dst);
}

#[test]
fn self_pre_migration_is_immediate() {
    let mut w = world("openface");
    let c = ContainerId(0);
    let host = w.container(c).host;
    let pre = execute_pre_migration(&mut w, c, host, &mut rng()).unwrap();
    assert_eq!(pre.duration(), 0.0);
    assert_eq!(pre.bytes, 0.0);
}

#[test]
fn full_destination_aborts_without_status_change() {
    let mut w = world("openface");
    let c = ContainerId(0);
    let dst = w.server_by_name("edge2").unwrap();
    w.servers[dst.0].capacity = Resources::default();
    assert!(matches!(
        execute_pre_migration(&mut w, c, dst, &mut rng()),
        Err(Error::Capacity { .. })
    ));
    assert_eq!(w.container(c).status, ContainerStatus::Running);
    assert!(w.server(dst).reserved.is_empty());
}

#[test]
fn calibrated_estimates_track_executed_migrations() {
    let mut w = world("yolo");
    let c = ContainerId(0);
    let dst = w.server_by_name("edge2").unwrap();
    let before = planner_estimate(&w, c, dst).unwrap();
    let pre = execute_pre_migration(&mut w, c, dst, &mut rng()).unwrap();
    complete_pre_migration(&mut w, &pre);
    let mig = execute_migration(&mut w, c, dst, &mut rng()).unwrap();
    complete_migration(&mut w, &mig).unwrap();
    assert!(!w.history[pre.src.0].checkpoints.is_empty());
    assert!(!w.history[dst.0].restores.is_empty());
    // noiseless history reproduces the configured coefficients
    let back = w.server_by_name("edge1").unwrap();
    let after = planner_estimate(&w, c, back).unwrap();
    assert!((after.t_mig - before.t_mig).abs() < 1e-12);
}
