//! Discrete-event engine: mobility, request generation, handovers, migrations and
//! downtime accounting under one of the four planners.

mod downtime;
mod events;
mod output;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::latency::{self, RequestRecord, RequestStatus};
use crate::migration::{self, Migration, MigrationEstimate, PreMigration};
use crate::model::{BsId, ContainerId, MobileUser, Point, ServerId, UserId, WorldState};
use crate::orchestrator::{self, MigrationPlan, PlanningTrigger, Supervision};
use crate::planner::{self, PlanRequest, PlannerKind};
use crate::radio;
use crate::{Error, Result};

pub use downtime::{
    account_downtime, merge_intervals, DowntimeCause, DowntimeInterval, DowntimeTotals, RawInterval,
};
pub use events::{Event, EventQueue};
pub use output::{EventRecord, PlanTimes, RunSummary, UserSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub duration_s: f64,
    pub seed: u64,
    /// Mobility tick, ms.
    pub tick_ms: f64,
    pub radio_period_s: f64,
    pub handover_duration_s: f64,
    /// Log-normal sigma of the measured processing delay.
    pub proc_jitter_sigma: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration_s: 1600.0,
            seed: 0,
            tick_ms: 100.0,
            radio_period_s: 1.0,
            handover_duration_s: 0.5,
            proc_jitter_sigma: 0.05,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.duration_s >= 0.0
            && self.tick_ms > 0.0
            && self.radio_period_s > 0.0
            && self.handover_duration_s >= 0.0
            && self.proc_jitter_sigma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invariant {
                entity: "sim".into(),
                reason: "need duration_s >= 0, tick_ms > 0, radio_period_s > 0, \
                         handover_duration_s >= 0, proc_jitter_sigma >= 0"
                    .into(),
            })
        }
    }
}

/// Advances `user` by `dt` seconds along its round trip and returns the new position.
pub fn move_user(user: &mut MobileUser, dt: f64) -> Point {
    user.route_offset = user.route.advance(user.route_offset, user.speed * dt);
    user.position = user.route.position_at(user.route_offset);
    user.position
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub planner: PlannerKind,
    pub seed: u64,
    pub duration_s: f64,
    pub requests: Vec<RequestRecord>,
    pub downtime: Vec<DowntimeInterval>,
    pub events: Vec<EventRecord>,
    /// State at the end of the run.
    pub world: WorldState,
}

/// Independent random streams so that, e.g., planner draws never shift shadowing samples.
struct Streams {
    shadowing: ChaCha8Rng,
    durations: ChaCha8Rng,
    planner: ChaCha8Rng,
    jitter: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Streams {
            shadowing: stream(1),
            durations: stream(2),
            planner: stream(3),
            jitter: stream(4),
        }
    }
}

/// A coordinated handover and/or migration of one user.
#[derive(Debug, Clone)]
struct Episode {
    id: u64,
    dst: (BsId, ServerId),
    plan: Option<MigrationPlan>,
    late: bool,
    migrate: bool,
    handover: bool,
    started: bool,
    pre: Option<PreMigration>,
    mig: Option<Migration>,
    pre_done: bool,
    ho_done: bool,
    mig_started: bool,
    mig_done: bool,
    /// Handover postponed until the migration starts.
    ho_deferred: bool,
}

impl Episode {
    fn finished(&self) -> bool {
        (!self.handover || self.ho_done) && (!self.migrate || self.mig_done)
    }
}

#[derive(Debug, Clone, Copy)]
struct OpenHandover {
    episode: u64,
    target: BsId,
    start: f64,
    late: bool,
}

struct Engine {
    world: WorldState,
    kind: PlannerKind,
    queue: EventQueue,
    rng: Streams,
    duration: f64,
    start_offsets: Vec<f64>,
    episodes: Vec<Option<Episode>>,
    handovers: Vec<Option<OpenHandover>>,
    next_episode: u64,
    raw: Vec<RawInterval>,
    requests: Vec<RequestRecord>,
    events: Vec<EventRecord>,
}

/// Runs `world` for `duration_s` simulated seconds under `planner`.
///
/// Identical inputs give identical outputs.
pub fn run(
    world: WorldState,
    planner: PlannerKind,
    seed: u64,
    duration_s: f64,
) -> Result<RunOutput> {
    if !(duration_s >= 0.0) {
        return Err(Error::Invariant {
            entity: "sim".into(),
            reason: format!("duration must be >= 0, got {duration_s}"),
        });
    }
    let n = world.users.len();
    let mut engine = Engine {
        start_offsets: world.users.iter().map(|u| u.route_offset).collect(),
        world,
        kind: planner,
        queue: EventQueue::default(),
        rng: Streams::new(seed),
        duration: duration_s,
        episodes: vec![None; n],
        handovers: vec![None; n],
        next_episode: 1,
        raw: Vec::new(),
        requests: Vec::new(),
        events: Vec::new(),
    };
    engine.world.now = 0.0;
    if duration_s > 0.0 {
        engine.initial_placement()?;
        engine.seed_events();
        engine.event_loop()?;
        engine.close_open_intervals();
    }
    engine.check_state_consistency()?;
    Ok(RunOutput {
        planner,
        seed,
        duration_s,
        requests: engine.requests,
        downtime: merge_intervals(&engine.raw),
        events: engine.events,
        world: engine.world,
    })
}

impl Engine {
    fn log(&mut self, user: Option<UserId>, episode: u64, kind: &'static str) -> &mut EventRecord {
        self.events.push(EventRecord {
            time_s: self.world.now,
            user,
            episode,
            kind,
            src: String::new(),
            dst: String::new(),
            bytes: 0.0,
            plan: None,
            detail: String::new(),
        });
        self.events.last_mut().expect("just pushed")
    }

    fn orchestrated(&self) -> bool {
        self.kind == PlannerKind::Orchestrated
    }

    fn relocate(&mut self, user: UserId, dst: (BsId, ServerId)) {
        let cid = self.world.user(user).container;
        let src = self.world.container(cid).host;
        self.world.servers[src.0].hosted.remove(&cid);
        self.world.servers[dst.1 .0].hosted.insert(cid);
        self.world.containers[cid.0].host = dst.1;
        self.world.users[user.0].assignment = dst;
    }

    fn initial_placement(&mut self) -> Result<()> {
        let users: Vec<UserId> = self.world.users.iter().map(|u| u.id).collect();
        let choices: Vec<(UserId, (BsId, ServerId))> = match self.kind {
            PlannerKind::Orchestrated => {
                let requests: Vec<PlanRequest> = users
                    .iter()
                    .map(|&user| PlanRequest {
                        user,
                        t_prime: 0.0,
                        avoid_bs: None,
                    })
                    .collect();
                planner::plan_orchestrated(&self.world, &requests, true)?
            }
            _ => {
                let mut out = Vec::with_capacity(users.len());
                for &user in &users {
                    let dst = match self.kind {
                        PlannerKind::Cloud => planner::plan_cloud(&self.world, user)?,
                        PlannerKind::Random => {
                            planner::plan_random(&self.world, user, &mut self.rng.planner)?
                        }
                        _ => planner::plan_nearest(&self.world, user)?,
                    };
                    // placed one at a time so later users see earlier placements
                    self.relocate(user, dst);
                    out.push((user, dst));
                }
                out
            }
        };
        for (user, dst) in choices {
            self.relocate(user, dst);
            let (b, s) = (
                self.world.bs(dst.0).name.clone(),
                self.world.server(dst.1).name.clone(),
            );
            let e = self.log(Some(user), 0, "placement");
            e.dst = format!("{b}/{s}");
        }
        self.world.check_capacity()
    }

    fn seed_events(&mut self) {
        self.queue.push(0.0, Event::MoveTick);
        self.queue.push(0.0, Event::RadioSample);
        if self.orchestrated() {
            self.queue.push(0.0, Event::MonitorTick);
        }
        for c in &self.world.containers {
            self.queue.push(
                self.world.migration.probe_warmup_s,
                Event::Probe { container: c.id },
            );
        }
        for u in &self.world.users {
            self.queue.push(0.0, Event::Request { user: u.id });
        }
    }

    fn sync_positions(&mut self) {
        let now = self.world.now;
        for (u, &start) in self.world.users.iter_mut().zip(&self.start_offsets) {
            u.route_offset = u.route.advance(start, u.speed * now);
            u.position = u.route.position_at(u.route_offset);
        }
    }

    fn event_loop(&mut self) -> Result<()> {
        while let Some(t) = self.queue.peek_time() {
            if t >= self.duration {
                break;
            }
            let (t, event) = self.queue.pop().expect("peeked");
            self.world.now = t;
            self.sync_positions();
            self.handle(event)?;
        }
        self.world.now = self.duration;
        self.sync_positions();
        Ok(())
    }

    fn handle(&mut self, event: Event) -> Result<()> {
        let now = self.world.now;
        match event {
            Event::Request { user } => self.on_request(user)?,
            Event::MoveTick => {
                self.queue
                    .push(now + self.world.sim.tick_ms / 1000.0, Event::MoveTick);
            }
            Event::RadioSample => {
                self.on_radio_sample()?;
                self.queue
                    .push(now + self.world.sim.radio_period_s, Event::RadioSample);
            }
            Event::MonitorTick => {
                self.on_monitor_tick()?;
                self.queue.push(
                    now + self.world.orchestrator.sla_check_period_s,
                    Event::MonitorTick,
                );
            }
            Event::Probe { container } => self.on_probe(container)?,
            Event::PreMigStart { user, episode } => {
                if self.active(user, episode) {
                    self.start_pre_migration(user)?;
                }
            }
            Event::PreMigDone { user, episode } => self.on_pre_mig_done(user, episode)?,
            Event::MigStart { user, episode } => {
                if self.active(user, episode) {
                    self.start_migration(user)?;
                }
            }
            Event::RestoreStart { user, episode } => {
                if let Some(mig) = self.episode(user, episode).and_then(|e| e.mig.clone()) {
                    migration::begin_restore(&mut self.world, &mig);
                }
            }
            Event::MigDone { user, episode } => self.on_mig_done(user, episode)?,
            Event::HoStart { user, episode } => {
                if let Some(ep) = self.episode(user, episode) {
                    let (target, late) = (ep.dst.0, ep.late);
                    // pre-migration overran its margin: keep the two gaps aligned
                    let defer = !late && ep.migrate && !ep.mig_started;
                    let ep = self.episodes[user.0].as_mut().expect("active");
                    ep.started = true;
                    if defer {
                        ep.ho_deferred = true;
                        self.log(Some(user), episode, "ho_deferred");
                    } else if !self.start_handover(user, target, episode, late) {
                        self.handover_finished(user, episode)?;
                    }
                }
            }
            Event::HoDone { user, episode } => self.on_ho_done(user, episode)?,
        }
        Ok(())
    }

    fn episode(&self, user: UserId, id: u64) -> Option<&Episode> {
        self.episodes[user.0].as_ref().filter(|e| e.id == id)
    }

    fn active(&self, user: UserId, id: u64) -> bool {
        self.episode(user, id).is_some()
    }

    fn new_episode_id(&mut self) -> u64 {
        let id = self.next_episode;
        self.next_episode += 1;
        id
    }

    fn on_request(&mut self, user: UserId) -> Result<()> {
        let record = latency::measure_request(&mut self.world, user, &mut self.rng.jitter)?;
        if record.status == RequestStatus::Completed {
            let alpha = self.world.orchestrator.ewma_alpha;
            let m = &mut self.world.users[user.0].monitor;
            m.proc_ewma_ms = Some(latency::ewma(
                m.proc_ewma_ms,
                record.breakdown.processing,
                alpha,
            ));
            m.total_ewma_ms = Some(latency::ewma(
                m.total_ewma_ms,
                record.breakdown.total,
                alpha,
            ));
        }
        self.requests.push(record);
        let period = 1.0 / self.world.user(user).task_rate;
        self.queue
            .push(self.world.now + period, Event::Request { user });
        Ok(())
    }

    fn on_probe(&mut self, container: ContainerId) -> Result<()> {
        let user = self.world.container(container).user;
        match migration::probe_delta_sizes(&mut self.world, container) {
            Ok((ckpt, delta)) => {
                let e = self.log(Some(user), 0, "probe");
                e.bytes = ckpt;
                e.detail = format!("delta_bytes={delta:.0}");
            }
            Err(Error::NotRunning(_)) => {
                self.queue
                    .push(self.world.now + 1.0, Event::Probe { container });
            }
            Err(e) => return Err(e),
        }
        Ok(())
    }

    fn on_radio_sample(&mut self) -> Result<()> {
        for ui in 0..self.world.users.len() {
            let pos = self.world.users[ui].position;
            let samples: Vec<f64> = self
                .world
                .base_stations
                .iter()
                .map(|b| radio::rssi_at(&pos, b, &self.world.radio, &mut self.rng.shadowing))
                .collect();
            self.world.users[ui].monitor.measured_rssi = samples;
        }
        for ui in 0..self.world.users.len() {
            let user = UserId(ui);
            if self.world.user(user).monitor.detached {
                continue;
            }
            let u = self.world.user(user);
            let rssi = &u.monitor.measured_rssi;
            let current = rssi[u.bs().0];
            let cfg = &self.world.radio;
            let hysteresis = self.world.base_stations.iter().any(|b| {
                b.id != u.bs()
                    && rssi[b.id.0] >= cfg.rssi_min_dbm
                    && rssi[b.id.0] >= current + cfg.hysteresis_margin_db
            });
            let lost = current < cfg.rssi_min_dbm;
            if self.orchestrated() {
                if lost && self.episodes[ui].is_none() {
                    self.emergency_handover(user)?;
                }
            } else if hysteresis || lost {
                self.trigger_baseline(user)?;
            }
        }
        Ok(())
    }

    /// Handover to the strongest base station with no server change.
    fn emergency_handover(&mut self, user: UserId) -> Result<()> {
        let Ok(target) = planner::strongest_bs(&self.world, user) else {
            return Ok(());
        };
        if target == self.world.user(user).bs() {
            return Ok(());
        }
        let id = self.new_episode_id();
        self.start_handover(user, target, id, false);
        Ok(())
    }

    fn trigger_baseline(&mut self, user: UserId) -> Result<()> {
        if self.episodes[user.0].is_some() {
            // previous episode still migrating: radio handover only, placement later
            return self.emergency_handover(user);
        }
        let decision = match self.kind {
            PlannerKind::Cloud => planner::plan_cloud(&self.world, user),
            PlannerKind::Random => planner::plan_random(&self.world, user, &mut self.rng.planner),
            _ => planner::plan_nearest(&self.world, user),
        };
        let dst = match decision {
            Ok(d) => d,
            Err(Error::Unreachable(_) | Error::NoCandidate(_)) => return Ok(()),
            Err(e) => return Err(e),
        };
        let src = self.world.user(user).assignment;
        if dst.0 == src.0 {
            return Ok(());
        }
        let id = self.new_episode_id();
        self.episodes[user.0] = Some(Episode {
            id,
            dst,
            plan: None,
            late: false,
            migrate: dst.1 != src.1,
            handover: true,
            started: true,
            pre: None,
            mig: None,
            pre_done: false,
            ho_done: false,
            mig_started: false,
            mig_done: false,
            ho_deferred: false,
        });
        let (s, d) = (self.pair_name(src), self.pair_name(dst));
        let e = self.log(Some(user), id, "plan");
        e.src = s;
        e.dst = d;
        if !self.start_handover(user, dst.0, id, false) {
            self.handover_finished(user, id)?;
        }
        if self.episode(user, id).is_some_and(|e| e.migrate) {
            self.start_pre_migration(user)?;
        }
        Ok(())
    }

    fn pair_name(&self, (b, s): (BsId, ServerId)) -> String {
        format!("{}/{}", self.world.bs(b).name, self.world.server(s).name)
    }

    /// Detaches the user for the handover duration. Returns false when rejected.
    fn start_handover(&mut self, user: UserId, target: BsId, episode: u64, late: bool) -> bool {
        let u = self.world.user(user);
        if u.monitor.detached || self.handovers[user.0].is_some() {
            return false;
        }
        let (src, dst) = (
            self.world.bs(u.bs()).name.clone(),
            self.world.bs(target).name.clone(),
        );
        let full = target != u.bs()
            && self.world.attached_users(target) >= self.world.bs(target).max_users;
        if full {
            let e = self.log(Some(user), episode, "ho_rejected");
            e.src = src;
            e.dst = dst;
            return false;
        }
        self.world.users[user.0].monitor.detached = true;
        self.handovers[user.0] = Some(OpenHandover {
            episode,
            target,
            start: self.world.now,
            late,
        });
        let done = self.world.now + self.world.sim.handover_duration_s;
        self.queue.push(done, Event::HoDone { user, episode });
        let e = self.log(Some(user), episode, "ho_start");
        e.src = src;
        e.dst = dst;
        true
    }

    fn on_ho_done(&mut self, user: UserId, episode: u64) -> Result<()> {
        let Some(h) = self.handovers[user.0].filter(|h| h.episode == episode) else {
            return Ok(());
        };
        self.handovers[user.0] = None;
        let src = self.world.bs(self.world.user(user).bs()).name.clone();
        self.world.users[user.0].assignment.0 = h.target;
        self.world.users[user.0].monitor.detached = false;
        self.push_raw(user, episode, h.start, DowntimeCause::Handover, h.late);
        let dst = self.world.bs(h.target).name.clone();
        let e = self.log(Some(user), episode, "ho_done");
        e.src = src;
        e.dst = dst;
        self.handover_finished(user, episode)
    }

    fn handover_finished(&mut self, user: UserId, episode: u64) -> Result<()> {
        let Some(ep) = self.episodes[user.0].as_mut().filter(|e| e.id == episode) else {
            return Ok(());
        };
        ep.ho_done = true;
        let ready = ep.plan.is_none() && ep.migrate && ep.pre_done && !ep.mig_started;
        if ready {
            self.queue
                .push(self.world.now, Event::MigStart { user, episode });
        }
        self.finish_if_done(user);
        Ok(())
    }

    fn push_raw(
        &mut self,
        user: UserId,
        episode: u64,
        start: f64,
        kind: DowntimeCause,
        late: bool,
    ) {
        if self.world.now > start {
            self.raw.push(RawInterval {
                user,
                episode,
                start,
                end: self.world.now,
                kind,
                late,
            });
        }
    }

    fn start_pre_migration(&mut self, user: UserId) -> Result<()> {
        let ep = self.episodes[user.0].as_ref().expect("active episode");
        let (id, dst) = (ep.id, ep.dst.1);
        let cid = self.world.user(user).container;
        match migration::execute_pre_migration(&mut self.world, cid, dst, &mut self.rng.durations) {
            Ok(pre) => {
                let (src_name, dst_name) = (
                    self.world.server(pre.src).name.clone(),
                    self.world.server(pre.dst).name.clone(),
                );
                let done = pre.completes_at();
                let bytes = pre.bytes;
                let ep = self.episodes[user.0].as_mut().expect("active episode");
                ep.started = true;
                ep.pre = Some(pre);
                self.queue
                    .push(done, Event::PreMigDone { user, episode: id });
                let e = self.log(Some(user), id, "pre_mig_start");
                e.src = src_name;
                e.dst = dst_name;
                e.bytes = bytes;
            }
            Err(err @ (Error::Capacity { .. } | Error::NotRunning(_))) => {
                let e = self.log(Some(user), id, "mig_infeasible");
                e.detail = err.to_string();
                let ep = self.episodes[user.0].as_mut().expect("active episode");
                ep.migrate = false;
                self.finish_if_done(user);
            }
            Err(e) => return Err(e),
        }
        Ok(())
    }

    fn on_pre_mig_done(&mut self, user: UserId, episode: u64) -> Result<()> {
        let Some(ep) = self.episode(user, episode) else {
            return Ok(());
        };
        let pre = ep.pre.clone().expect("pre-migration running");
        migration::complete_pre_migration(&mut self.world, &pre);
        let ep = self.episodes[user.0].as_mut().expect("active");
        ep.pre_done = true;
        let at = match &ep.plan {
            Some(plan) => Some(plan.t_trig_mig.max(self.world.now)),
            None if ep.ho_done || !ep.handover => Some(self.world.now),
            None => None,
        };
        if let Some(at) = at {
            self.queue.push(at, Event::MigStart { user, episode });
        }
        let (s, d) = (
            self.world.server(pre.src).name.clone(),
            self.world.server(pre.dst).name.clone(),
        );
        let e = self.log(Some(user), episode, "pre_mig_done");
        e.src = s;
        e.dst = d;
        e.bytes = pre.bytes;
        Ok(())
    }

    fn start_migration(&mut self, user: UserId) -> Result<()> {
        let ep = self.episodes[user.0].as_ref().expect("active episode");
        if ep.mig_started || !ep.pre_done {
            return Ok(());
        }
        let (id, dst) = (ep.id, ep.dst.1);
        let cid = self.world.user(user).container;
        let mig = migration::execute_migration(&mut self.world, cid, dst, &mut self.rng.durations)?;
        self.queue.push(
            mig.restore_starts_at(),
            Event::RestoreStart { user, episode: id },
        );
        self.queue
            .push(mig.completes_at(), Event::MigDone { user, episode: id });
        let (s, d) = (
            self.world.server(mig.src).name.clone(),
            self.world.server(mig.dst).name.clone(),
        );
        let (bytes, counter) = (mig.bytes, mig.counter_at_freeze);
        let ep = self.episodes[user.0].as_mut().expect("active episode");
        ep.mig_started = true;
        if ep.ho_deferred {
            ep.ho_deferred = false;
            let t_mig = ep.plan.map_or(0.0, |p| p.est.t_mig);
            let at = self.world.now + (t_mig - self.world.sim.handover_duration_s).max(0.0);
            self.queue.push(at, Event::HoStart { user, episode: id });
        }
        ep.mig = Some(mig);
        let e = self.log(Some(user), id, "mig_start");
        e.src = s;
        e.dst = d;
        e.bytes = bytes;
        e.detail = format!("counter={counter}");
        Ok(())
    }

    fn on_mig_done(&mut self, user: UserId, episode: u64) -> Result<()> {
        let Some(ep) = self.episode(user, episode) else {
            return Ok(());
        };
        let mig = ep.mig.clone().expect("migration running");
        let late = ep.late;
        migration::complete_migration(&mut self.world, &mig)?;
        self.push_raw(
            user,
            episode,
            mig.started_at,
            DowntimeCause::Migration,
            late,
        );
        let counter = self.world.container(mig.container).state_counter;
        let (s, d) = (
            self.world.server(mig.src).name.clone(),
            self.world.server(mig.dst).name.clone(),
        );
        let e = self.log(Some(user), episode, "mig_done");
        e.src = s;
        e.dst = d;
        e.bytes = mig.bytes;
        e.detail = format!("counter={counter}");
        self.episodes[user.0].as_mut().expect("active").mig_done = true;
        self.finish_if_done(user);
        Ok(())
    }

    fn finish_if_done(&mut self, user: UserId) {
        if self.episodes[user.0].as_ref().is_some_and(|e| e.finished()) {
            self.episodes[user.0] = None;
        }
    }

    fn on_monitor_tick(&mut self) -> Result<()> {
        let margin = self.world.orchestrator.margin;
        let mut triggers: Vec<(UserId, PlanningTrigger)> = Vec::new();
        for ui in 0..self.world.users.len() {
            let user = UserId(ui);
            if let Some(ep) = &self.episodes[ui] {
                let Some(plan) = ep.plan else { continue };
                if ep.started {
                    continue;
                }
                let fresh = orchestrator::predict_user_handover(&self.world, user).map(|p| p.t_ho);
                if orchestrator::supervise(&plan, fresh, self.world.now, margin)
                    == Supervision::Keep
                {
                    continue;
                }
                let id = ep.id;
                let e = self.log(Some(user), id, "plan_cancel");
                e.detail = match fresh {
                    Some(t) => format!("t_ho_need moved to {t:.6}"),
                    None => "handover no longer predicted".into(),
                };
                self.episodes[ui] = None;
            }
            if self.world.user(user).monitor.detached || self.handovers[ui].is_some() {
                continue;
            }
            if let Some(t) = orchestrator::monitor_tick(&self.world, user) {
                triggers.push((user, t));
            }
        }
        if triggers.is_empty() {
            return Ok(());
        }
        let requests: Vec<PlanRequest> = triggers
            .iter()
            .map(|&(user, t)| PlanRequest {
                user,
                t_prime: t.t_prime(),
                avoid_bs: match t {
                    PlanningTrigger::Handover { .. } => Some(self.world.user(user).bs()),
                    PlanningTrigger::Sla { .. } => None,
                },
            })
            .collect();
        let decisions = match planner::plan_orchestrated(&self.world, &requests, false) {
            Ok(d) => d,
            Err(err) => {
                log::warn!("planning failed at t={:.3}: {err}", self.world.now);
                let e = self.log(None, 0, "plan_failed");
                e.detail = err.to_string();
                return Ok(());
            }
        };
        for ((user, dst), (_, trigger)) in decisions.into_iter().zip(triggers) {
            self.adopt_plan(user, dst, trigger)?;
        }
        Ok(())
    }

    fn adopt_plan(
        &mut self,
        user: UserId,
        dst: (BsId, ServerId),
        trigger: PlanningTrigger,
    ) -> Result<()> {
        let u = self.world.user(user);
        let src = u.assignment;
        if dst == src {
            return Ok(());
        }
        let est = if dst.1 != src.1 {
            migration::planner_estimate(&self.world, u.container, dst.1)?
        } else {
            MigrationEstimate::none()
        };
        let plan = orchestrator::build_plan(
            user,
            src,
            dst,
            est,
            trigger.t_prime(),
            self.world.sim.handover_duration_s,
            self.world.orchestrator.margin,
            self.world.now,
        );
        let id = self.new_episode_id();
        self.episodes[user.0] = Some(Episode {
            id,
            dst,
            plan: Some(plan),
            late: plan.late,
            migrate: plan.migrates(),
            handover: plan.hands_over(),
            started: false,
            pre: None,
            mig: None,
            pre_done: false,
            ho_done: false,
            mig_started: false,
            mig_done: false,
            ho_deferred: false,
        });
        if plan.migrates() {
            self.queue.push(
                plan.t_trig_pre_mig,
                Event::PreMigStart { user, episode: id },
            );
        }
        if plan.hands_over() {
            self.queue
                .push(plan.t_trig_ho, Event::HoStart { user, episode: id });
        }
        let (s, d) = (self.pair_name(src), self.pair_name(dst));
        let e = self.log(Some(user), id, "plan");
        e.src = s;
        e.dst = d;
        e.plan = Some(PlanTimes {
            t_trig_pre_mig: plan.t_trig_pre_mig,
            t_trig_mig: plan.t_trig_mig,
            t_trig_ho: plan.t_trig_ho,
            est_downtime: plan.est_downtime,
        });
        e.detail = match trigger {
            PlanningTrigger::Handover { t_ho_need, .. } => {
                format!(
                    "handover t_ho_need={t_ho_need:.6} t_mig={:.6}{}",
                    plan.est.t_mig,
                    if plan.late { " late" } else { "" }
                )
            }
            PlanningTrigger::Sla { .. } => "sla".into(),
        };
        Ok(())
    }

    /// Closes outages still open when the run ends.
    fn close_open_intervals(&mut self) {
        for ui in 0..self.world.users.len() {
            let user = UserId(ui);
            if let Some(h) = self.handovers[ui] {
                self.push_raw(user, h.episode, h.start, DowntimeCause::Handover, h.late);
            }
            let frozen = self.episodes[ui]
                .as_ref()
                .and_then(|e| e.mig.as_ref().map(|m| (e.id, m.started_at, e.late)));
            if let Some((id, start, late)) = frozen {
                self.push_raw(user, id, start, DowntimeCause::Migration, late);
            }
        }
    }

    fn check_state_consistency(&self) -> Result<()> {
        let mut completed = vec![0u64; self.world.users.len()];
        for r in &self.requests {
            if r.status == RequestStatus::Completed {
                completed[r.user.0] += 1;
            }
        }
        for u in &self.world.users {
            let counter = self.world.container(u.container).state_counter;
            if counter != completed[u.id.0] {
                return Err(Error::Invariant {
                    entity: u.name.clone(),
                    reason: format!(
                        "state counter {counter} differs from {} completed requests",
                        completed[u.id.0]
                    ),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Route;

    #[test]
    fn kinematics_and_reflection() {
        let route = Route::new(vec![Point::new(0.0, 0.0), Point::new(120.0, 0.0)]);
        let mut u = MobileUser {
            id: UserId(0),
            name: "u".into(),
            position: Point::default(),
            speed: 1.0,
            route,
            route_offset: 0.0,
            task_size_bits: 1.0,
            task_rate: 1.0,
            container: ContainerId(0),
            assignment: (BsId(0), ServerId(0)),
            sla_max_delay_ms: 1.0,
            monitor: Default::default(),
        };
        assert_eq!(move_user(&mut u, 10.0), Point::new(10.0, 0.0));
        assert_eq!(move_user(&mut u, 115.0), Point::new(115.0, 0.0));
        assert_eq!(move_user(&mut u, 95.0), Point::new(20.0, 0.0));
        assert_eq!(move_user(&mut u, 20.0), Point::new(0.0, 0.0));
        assert_eq!(move_user(&mut u, 240.0), Point::new(0.0, 0.0));
    }
}
