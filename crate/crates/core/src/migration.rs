//! Delta-checkpoint migration: time estimators, size probe, coefficient calibration,
//! and the simulated execution of the two phases.
//!
//! Pre-migration checkpoints the running container and ships the full memory state
//! while the service keeps answering. Migration freezes it, checkpoints again, ships
//! only the delta and restores at the destination.

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::model::{
    ContainerId, ContainerProfile, ContainerStatus, LinkMatrix, NodeId, Server, ServerId,
    WorldState,
};
use crate::scalar::Scalar;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MigrationConfig {
    /// Log-normal sigma applied to every actual checkpoint/transfer/restore duration.
    pub noise_sigma: f64,
    /// Service age at which the size probe fires, s.
    pub probe_warmup_s: f64,
}

impl Default for MigrationConfig {
    fn default() -> Self {
        MigrationConfig {
            noise_sigma: 0.05,
            probe_warmup_s: 10.0,
        }
    }
}

impl MigrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) || !(self.probe_warmup_s >= 0.0) {
            return Err(Error::Invariant {
                entity: "migration".into(),
                reason: "noise_sigma and probe_warmup_s must be >= 0".into(),
            });
        }
        Ok(())
    }
}

/// Estimated phase durations, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MigrationEstimate<S = f64> {
    pub t_chkpt: S,
    pub t_pre_trans: S,
    pub t_trans: S,
    pub t_restore: S,
    /// `t_chkpt + t_pre_trans`
    pub t_pre_mig: S,
    /// `t_chkpt + t_trans + t_restore`
    pub t_mig: S,
    /// `t_pre_mig + t_mig`
    pub t_total: S,
}

impl<S: Scalar> MigrationEstimate<S> {
    pub fn from_parts(t_chkpt: S, t_pre_trans: S, t_trans: S, t_restore: S) -> Self {
        let t_pre_mig = t_chkpt + t_pre_trans;
        let t_mig = t_chkpt + t_trans + t_restore;
        MigrationEstimate {
            t_chkpt,
            t_pre_trans,
            t_trans,
            t_restore,
            t_pre_mig,
            t_mig,
            t_total: t_pre_mig + t_mig,
        }
    }

    /// Estimate of a plan that moves nothing.
    pub fn none() -> Self {
        Self::from_parts(S::zero(), S::zero(), S::zero(), S::zero())
    }
}

/// Everything the phase-time formulas consume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MigrationInputs<S = f64> {
    pub image_bytes: S,
    pub checkpoint_bytes: S,
    pub delta_bytes: S,
    pub src_power: S,
    pub dst_power: S,
    pub psi_src: S,
    pub rho_dst: S,
    /// Server-to-server bandwidth in bits/s; `None` when source and destination coincide.
    pub bw_bps: Option<S>,
}

/// `psi * image / power`
pub fn checkpoint_time<S: Scalar>(psi: S, image_bytes: S, power: S) -> S {
    psi * image_bytes / power
}

/// `rho * (image + checkpoint + delta) / power`
pub fn restore_time<S: Scalar>(rho: S, restored_bytes: S, power: S) -> S {
    rho * restored_bytes / power
}

/// Seconds to push `bytes` over `bw_bps`.
pub fn transfer_time<S: Scalar>(bytes: S, bw_bps: S) -> S {
    bytes * S::lit(8.0) / bw_bps
}

impl<S: Scalar> MigrationInputs<S> {
    pub fn estimate(&self) -> MigrationEstimate<S> {
        let t_chkpt = checkpoint_time(self.psi_src, self.image_bytes, self.src_power);
        let (t_pre_trans, t_trans) = match self.bw_bps {
            Some(bw) => (
                transfer_time(self.checkpoint_bytes, bw),
                transfer_time(self.delta_bytes, bw),
            ),
            None => (S::zero(), S::zero()),
        };
        let t_restore = restore_time(
            self.rho_dst,
            self.image_bytes + self.checkpoint_bytes + self.delta_bytes,
            self.dst_power,
        );
        MigrationEstimate::from_parts(t_chkpt, t_pre_trans, t_trans, t_restore)
    }
}

/// Checkpoint time of `profile`'s image on `server` using its configured coefficient.
pub fn estimate_checkpoint_time(profile: &ContainerProfile, server: &Server) -> f64 {
    if server.psi == 0.0 {
        warn!(
            "server {} has psi = 0; checkpoint time estimates collapse to zero",
            server.name
        );
    }
    checkpoint_time(server.psi, profile.image_size_bytes, server.compute_power)
}

fn server_link(link: &LinkMatrix, src: &Server, dst: &Server) -> Result<Option<f64>> {
    if src.id == dst.id {
        return Ok(None);
    }
    link.get(NodeId::Server(src.id), NodeId::Server(dst.id))
        .map(|l| Some(l.bw_bps))
        .ok_or_else(|| Error::UndeclaredLink(src.name.clone(), dst.name.clone()))
}

/// Phase-time estimate from `profile`'s sizes and the servers' configured coefficients.
pub fn estimate_times(
    profile: &ContainerProfile,
    src: &Server,
    dst: &Server,
    link: &LinkMatrix,
) -> Result<MigrationEstimate> {
    Ok(MigrationInputs {
        image_bytes: profile.image_size_bytes,
        checkpoint_bytes: profile.checkpoint_size_bytes,
        delta_bytes: profile.delta_size_bytes,
        src_power: src.compute_power,
        dst_power: dst.compute_power,
        psi_src: src.psi,
        rho_dst: dst.rho,
        bw_bps: server_link(link, src, dst)?,
    }
    .estimate())
}

/// What the planner believes: probed sizes when available, coefficients fitted from
/// history when available, configured values otherwise.
pub fn planner_estimate(
    world: &WorldState,
    container: ContainerId,
    dst: ServerId,
) -> Result<MigrationEstimate> {
    let c = world.container(container);
    let profile = &world.apps[c.app];
    let (src, dst) = (world.server(c.host), world.server(dst));
    let (checkpoint_bytes, delta_bytes) = c
        .probed_sizes
        .unwrap_or((profile.checkpoint_size_bytes, profile.delta_size_bytes));
    let (psi_src, _) = world.history[src.id.0].fit_or(src.psi, src.rho);
    let (_, rho_dst) = world.history[dst.id.0].fit_or(dst.psi, dst.rho);
    Ok(MigrationInputs {
        image_bytes: profile.image_size_bytes,
        checkpoint_bytes,
        delta_bytes,
        src_power: src.compute_power,
        dst_power: dst.compute_power,
        psi_src,
        rho_dst,
        bw_bps: server_link(&world.links, src, dst)?,
    }
    .estimate())
}

/// Takes two consecutive checkpoints of a running container and records the size of the
/// first and of their difference. The service keeps running.
pub fn probe_delta_sizes(world: &mut WorldState, container: ContainerId) -> Result<(f64, f64)> {
    let c = world.container(container);
    if c.status != ContainerStatus::Running {
        return Err(Error::NotRunning(world.user(c.user).name.clone()));
    }
    let profile = &world.apps[c.app];
    let sizes = (profile.checkpoint_size_bytes, profile.delta_size_bytes);
    world.containers[container.0].probed_sizes = Some(sizes);
    Ok(sizes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub bytes: f64,
    pub compute_power: f64,
    pub wall_s: f64,
}

/// Observed checkpoint and restore durations on one server.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationHistory {
    pub checkpoints: Vec<CalibrationSample>,
    pub restores: Vec<CalibrationSample>,
}

/// Least-squares slope through the origin of `y` against `x`.
pub fn fit_slope<S: Scalar>(points: &[(S, S)]) -> Option<S> {
    let (sxy, sxx) = points
        .iter()
        .fold((S::zero(), S::zero()), |(sxy, sxx), &(x, y)| {
            (sxy + x * y, sxx + x * x)
        });
    (sxx > S::zero()).then(|| sxy / sxx)
}

fn slope_of(samples: &[CalibrationSample]) -> Option<f64> {
    let points: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| (s.bytes / s.compute_power, s.wall_s))
        .collect();
    fit_slope(&points)
}

impl CalibrationHistory {
    /// Fitted `(psi, rho)`, each falling back to its prior when there is no data.
    pub fn fit_or(&self, psi_prior: f64, rho_prior: f64) -> (f64, f64) {
        (
            slope_of(&self.checkpoints).unwrap_or(psi_prior),
            slope_of(&self.restores).unwrap_or(rho_prior),
        )
    }
}

/// Fits `(psi, rho)` from history, with unit priors when a list is empty.
pub fn calibrate(history: &CalibrationHistory) -> (f64, f64) {
    history.fit_or(1.0, 1.0)
}

/// Multiplicative noise source for actual durations.
fn noisy<R: Rng + ?Sized>(value: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma > 0.0 && value > 0.0 {
        value
            * LogNormal::new(0.0, sigma)
                .expect("validated sigma")
                .sample(rng)
    } else {
        value
    }
}

/// An in-flight pre-migration.
#[derive(Debug, Clone, PartialEq)]
pub struct PreMigration {
    pub container: ContainerId,
    pub src: ServerId,
    pub dst: ServerId,
    pub started_at: f64,
    pub t_chkpt: f64,
    pub t_pre_trans: f64,
    pub bytes: f64,
}

impl PreMigration {
    pub fn duration(&self) -> f64 {
        self.t_chkpt + self.t_pre_trans
    }

    pub fn completes_at(&self) -> f64 {
        self.started_at + self.duration()
    }
}

/// An in-flight migration (the frozen phase).
#[derive(Debug, Clone, PartialEq)]
pub struct Migration {
    pub container: ContainerId,
    pub src: ServerId,
    pub dst: ServerId,
    pub started_at: f64,
    pub t_chkpt: f64,
    pub t_trans: f64,
    pub t_restore: f64,
    pub bytes: f64,
    pub counter_at_freeze: u64,
}

impl Migration {
    pub fn duration(&self) -> f64 {
        self.t_chkpt + self.t_trans + self.t_restore
    }

    /// When the delta has arrived and restore begins.
    pub fn restore_starts_at(&self) -> f64 {
        self.started_at + self.t_chkpt + self.t_trans
    }

    pub fn completes_at(&self) -> f64 {
        self.started_at + self.duration()
    }
}

fn actual_inputs(
    world: &WorldState,
    container: ContainerId,
    dst: ServerId,
) -> Result<MigrationInputs> {
    let c = world.container(container);
    let profile = &world.apps[c.app];
    let (src, dst) = (world.server(c.host), world.server(dst));
    Ok(MigrationInputs {
        image_bytes: profile.image_size_bytes,
        checkpoint_bytes: profile.checkpoint_size_bytes,
        delta_bytes: profile.delta_size_bytes,
        src_power: src.compute_power,
        dst_power: dst.compute_power,
        psi_src: src.psi,
        rho_dst: dst.rho,
        bw_bps: server_link(&world.links, src, dst)?,
    })
}

/// Starts the pre-migration phase: the container keeps serving while its full state is
/// checkpointed and shipped. Capacity at `dst` is reserved up front.
pub fn execute_pre_migration<R: Rng + ?Sized>(
    world: &mut WorldState,
    container: ContainerId,
    dst: ServerId,
    rng: &mut R,
) -> Result<PreMigration> {
    let c = world.container(container);
    let user = world.user(c.user).name.clone();
    if !c.is_serving() {
        return Err(Error::NotRunning(user));
    }
    let src = c.host;
    if dst != src && !world.has_room_for(dst, container) {
        return Err(Error::Capacity {
            server: world.server(dst).name.clone(),
            user,
        });
    }
    let inputs = actual_inputs(world, container, dst)?;
    let sigma = world.migration.noise_sigma;
    let (t_chkpt, t_pre_trans, bytes) = if dst == src {
        (0.0, 0.0, 0.0)
    } else {
        let est = inputs.estimate();
        (
            noisy(est.t_chkpt, sigma, rng),
            noisy(est.t_pre_trans, sigma, rng),
            inputs.checkpoint_bytes,
        )
    };
    if dst != src {
        world.servers[dst.0].reserved.insert(container);
        world.history[src.0].checkpoints.push(CalibrationSample {
            bytes: inputs.image_bytes,
            compute_power: inputs.src_power,
            wall_s: t_chkpt,
        });
    }
    let c = &mut world.containers[container.0];
    c.status = ContainerStatus::PreMigrating;
    c.staged_at = None;
    Ok(PreMigration {
        container,
        src,
        dst,
        started_at: world.now,
        t_chkpt,
        t_pre_trans,
        bytes,
    })
}

/// Marks the full-state copy as present at the destination.
pub fn complete_pre_migration(world: &mut WorldState, pre: &PreMigration) {
    let c = &mut world.containers[pre.container.0];
    c.staged_at = Some(pre.dst);
    if c.status == ContainerStatus::PreMigrating {
        c.status = ContainerStatus::Running;
    }
}

/// Abandons a pre-migration, releasing the reservation.
pub fn abort_pre_migration(world: &mut WorldState, container: ContainerId, dst: ServerId) {
    world.servers[dst.0].reserved.remove(&container);
    let c = &mut world.containers[container.0];
    c.staged_at = None;
    if c.status == ContainerStatus::PreMigrating {
        c.status = ContainerStatus::Running;
    }
}

/// Freezes the container, ships the delta and restores it at `dst`.
pub fn execute_migration<R: Rng + ?Sized>(
    world: &mut WorldState,
    container: ContainerId,
    dst: ServerId,
    rng: &mut R,
) -> Result<Migration> {
    let c = world.container(container);
    if c.staged_at != Some(dst) {
        return Err(Error::ProtocolOrder {
            user: world.user(c.user).name.clone(),
            reason: format!(
                "migration to {} without a completed pre-migration",
                world.server(dst).name
            ),
        });
    }
    let src = c.host;
    let counter_at_freeze = c.state_counter;
    let inputs = actual_inputs(world, container, dst)?;
    let est = inputs.estimate();
    let sigma = world.migration.noise_sigma;
    let t_chkpt = noisy(est.t_chkpt, sigma, rng);
    let t_trans = noisy(est.t_trans, sigma, rng);
    let t_restore = noisy(est.t_restore, sigma, rng);
    world.history[src.0].checkpoints.push(CalibrationSample {
        bytes: inputs.image_bytes,
        compute_power: inputs.src_power,
        wall_s: t_chkpt,
    });
    world.containers[container.0].status = ContainerStatus::Frozen;
    Ok(Migration {
        container,
        src,
        dst,
        started_at: world.now,
        t_chkpt,
        t_trans,
        t_restore,
        bytes: if dst == src { 0.0 } else { inputs.delta_bytes },
        counter_at_freeze,
    })
}

/// Delta arrived; the destination starts restoring.
pub fn begin_restore(world: &mut WorldState, mig: &Migration) {
    world.containers[mig.container.0].status = ContainerStatus::Restoring;
}

/// Finishes a migration: the container runs at `dst` with its state intact.
pub fn complete_migration(world: &mut WorldState, mig: &Migration) -> Result<()> {
    let c = world.container(mig.container);
    let profile = &world.apps[c.app];
    if c.state_counter != mig.counter_at_freeze {
        return Err(Error::ProtocolOrder {
            user: world.user(c.user).name.clone(),
            reason: "state changed while frozen".into(),
        });
    }
    let restored =
        profile.image_size_bytes + profile.checkpoint_size_bytes + profile.delta_size_bytes;
    let dst_power = world.server(mig.dst).compute_power;
    world.history[mig.dst.0].restores.push(CalibrationSample {
        bytes: restored,
        compute_power: dst_power,
        wall_s: mig.t_restore,
    });
    world.servers[mig.src.0].hosted.remove(&mig.container);
    world.servers[mig.dst.0].reserved.remove(&mig.container);
    world.servers[mig.dst.0].hosted.insert(mig.container);
    let user = world.container(mig.container).user;
    let c = &mut world.containers[mig.container.0];
    c.host = mig.dst;
    c.status = ContainerStatus::Running;
    c.staged_at = None;
    world.users[user.0].assignment.1 = mig.dst;
    Ok(())
}
