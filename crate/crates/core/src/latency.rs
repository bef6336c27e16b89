//! End-to-end delay estimation and measurement.
//!
//! An estimate has four parts: processing, transmission (task upload over the bottleneck
//! of the access and backhaul links), propagation (wired round trip between base station
//! and server) and queuing (a per-server constant). The change of delay caused by moving
//! a user from one (base station, server) pair to another compares the first three.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::model::{BsId, NodeId, ServerId, UserId, WorldState};
use crate::radio;
use crate::scalar::Scalar;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DelayBreakdown<S = f64> {
    pub processing: S,
    pub transmission: S,
    pub propagation: S,
    pub queuing: S,
    pub total: S,
}

impl<S: Scalar> DelayBreakdown<S> {
    pub fn new(processing: S, transmission: S, propagation: S, queuing: S) -> Self {
        DelayBreakdown {
            processing,
            transmission,
            propagation,
            queuing,
            total: processing + transmission + propagation + queuing,
        }
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero(), S::zero(), S::zero())
    }
}

/// Processing delay on a server of power `c_s_prime`, given `d_proc_now` measured on `c_s`.
pub fn estimate_processing<S: Scalar>(d_proc_now: S, c_s: S, c_s_prime: S) -> Result<S> {
    if !(c_s > S::zero()) {
        return Err(Error::NonPositiveCompute(c_s.to_f64_lossy()));
    }
    if !(c_s_prime > S::zero()) {
        return Err(Error::NonPositiveCompute(c_s_prime.to_f64_lossy()));
    }
    Ok(d_proc_now * c_s / c_s_prime)
}

/// Upload time in ms of `task_bits` over `min(bw_access, bw_backhaul)`.
pub fn estimate_transmission<S: Scalar>(task_bits: S, bw_access: S, bw_backhaul: S) -> Result<S> {
    let bw = bw_access.min(bw_backhaul);
    if !(bw > S::zero()) {
        return Err(Error::ZeroBandwidth);
    }
    Ok(task_bits / bw * S::thousand())
}

/// Estimated change of delay when moving from the `from` path to the `to` path.
///
/// Queuing is assumed unchanged by the move and does not contribute. Positive values
/// mean the move helps.
pub fn e2e_delta<S: Scalar>(from: &DelayBreakdown<S>, to: &DelayBreakdown<S>) -> S {
    (from.processing - to.processing)
        + (from.transmission - to.transmission)
        + (from.propagation - to.propagation)
}

/// Exponentially weighted moving average step.
pub fn ewma(prev: Option<f64>, sample: f64, alpha: f64) -> f64 {
    match prev {
        Some(p) => alpha * sample + (1.0 - alpha) * p,
        None => sample,
    }
}

/// Monitored processing delay of `user` on its current host, ms.
pub fn current_processing(world: &WorldState, user: UserId) -> f64 {
    let u = world.user(user);
    u.monitor.proc_ewma_ms.unwrap_or_else(|| {
        let profile = world.profile_of(user);
        let host = world.server(world.container_of(user).host);
        profile.base_proc_delay_ms * profile.reference_compute_power / host.compute_power
    })
}

/// Estimated delay breakdown of `user` served through `(bs, server)` at `t_prime`.
pub fn estimate_e2e(
    world: &WorldState,
    user: UserId,
    bs: BsId,
    server: ServerId,
    t_prime: f64,
) -> Result<DelayBreakdown> {
    let u = world.user(user);
    let host = world.server(world.container_of(user).host);
    let target = world.server(server);
    let processing = estimate_processing(
        current_processing(world, user),
        host.compute_power,
        target.compute_power,
    )?;
    let rssi = radio::predict_rssi(u, world.bs(bs), world.now, t_prime, &world.radio)?;
    let access = radio::bandwidth_from_rssi(rssi, &world.radio);
    let link = world
        .links
        .get(NodeId::Bs(bs), NodeId::Server(server))
        .ok_or_else(|| Error::UndeclaredLink(world.bs(bs).name.clone(), target.name.clone()))?;
    let transmission = estimate_transmission(u.task_size_bits, access, link.bw_bps)
        .map_err(|_| Error::Unreachable(u.name.clone()))?;
    Ok(DelayBreakdown::new(
        processing,
        transmission,
        link.rtt_ms,
        target.queue_ms,
    ))
}

/// Estimated change of delay (ms) when `user` moves from `current` to `candidate` at `t_prime`.
pub fn estimate_e2e_delta(
    world: &WorldState,
    user: UserId,
    current: (BsId, ServerId),
    candidate: (BsId, ServerId),
    t_prime: f64,
) -> Result<f64> {
    let from = estimate_e2e(world, user, current.0, current.1, t_prime)?;
    let to = estimate_e2e(world, user, candidate.0, candidate.1, t_prime)?;
    Ok(e2e_delta(&from, &to))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestStatus {
    Completed,
    LostDowntime,
    Unreachable,
}

impl RequestStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RequestStatus::Completed => "completed",
            RequestStatus::LostDowntime => "lost_downtime",
            RequestStatus::Unreachable => "unreachable",
        }
    }
}

/// Ground-truth outcome of one offloaded task.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord {
    pub time_s: f64,
    pub user: UserId,
    pub bs: BsId,
    pub server: ServerId,
    pub breakdown: DelayBreakdown,
    pub status: RequestStatus,
    /// State counter returned by the service; zero when the request was lost.
    pub counter: u64,
}

/// Sends one task from `user` at the current world time and measures what it experiences.
///
/// Completed requests increment the container's state counter.
pub fn measure_request<R: Rng + ?Sized>(
    world: &mut WorldState,
    user: UserId,
    rng: &mut R,
) -> Result<RequestRecord> {
    let now = world.now;
    let (bs, server) = {
        let u = world.user(user);
        (u.bs(), world.container_of(user).host)
    };
    let mut record = RequestRecord {
        time_s: now,
        user,
        bs,
        server,
        breakdown: DelayBreakdown::zero(),
        status: RequestStatus::LostDowntime,
        counter: 0,
    };
    if world.user(user).monitor.detached || !world.container_of(user).is_serving() {
        return Ok(record);
    }

    let u = world.user(user);
    let profile = world.profile_of(user);
    let host = world.server(server);
    let rssi = u.monitor.measured_rssi[bs.0];
    let access = radio::bandwidth_from_rssi(rssi, &world.radio);
    let link = world
        .links
        .get(NodeId::Bs(bs), NodeId::Server(server))
        .ok_or_else(|| Error::UndeclaredLink(world.bs(bs).name.clone(), host.name.clone()))?;
    let transmission = match estimate_transmission(u.task_size_bits, access, link.bw_bps) {
        Ok(t) => t,
        Err(_) => {
            record.status = RequestStatus::Unreachable;
            return Ok(record);
        }
    };
    let sigma = world.sim.proc_jitter_sigma;
    let jitter = if sigma > 0.0 {
        LogNormal::new(0.0, sigma)
            .expect("validated sigma")
            .sample(rng)
    } else {
        1.0
    };
    let processing = estimate_processing(
        profile.base_proc_delay_ms,
        profile.reference_compute_power,
        host.compute_power,
    )? * jitter;
    record.breakdown = DelayBreakdown::new(processing, transmission, link.rtt_ms, host.queue_ms);
    record.status = RequestStatus::Completed;

    let cid = world.user(user).container;
    let c = &mut world.containers[cid.0];
    c.state_counter += 1;
    record.counter = c.state_counter;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn processing_scaling() {
        assert_eq!(estimate_processing(100.0, 1500.0, 1500.0).unwrap(), 100.0);
        assert_eq!(estimate_processing(100.0, 1000.0, 2000.0).unwrap(), 50.0);
        assert_eq!(estimate_processing(0.0, 1000.0, 7000.0).unwrap(), 0.0);
        assert_eq!(estimate_processing(100.0f32, 1000.0, 2000.0).unwrap(), 50.0);
        assert!(matches!(
            estimate_processing(100.0, 0.0, 2000.0),
            Err(Error::NonPositiveCompute(_))
        ));
    }

    #[test]
    fn transmission_uses_the_bottleneck() {
        assert_relative_eq!(estimate_transmission(8e5, 100e6, 100e6).unwrap(), 8.0);
        assert_relative_eq!(
            estimate_transmission(8e5, 6.5e6, 100e6).unwrap(),
            123.076_923,
            epsilon = 1e-5
        );
        assert!(matches!(
            estimate_transmission(8e5, 0.0, 100e6),
            Err(Error::ZeroBandwidth)
        ));
    }

    #[test]
    fn breakdown_total_is_the_sum() {
        let b = DelayBreakdown::new(1.5, 2.0, 3.25, 0.25);
        assert_eq!(b.total, 7.0);
    }

    #[test]
    fn rtt_only_move_gains_the_rtt_difference() {
        let cloud = DelayBreakdown::new(10.0, 8.0, 300.0, 0.0);
        let edge = DelayBreakdown::new(10.0, 8.0, 100.0, 0.0);
        assert_eq!(e2e_delta(&cloud, &edge), 200.0);
        assert_eq!(e2e_delta(&cloud, &cloud), 0.0);
    }

    #[test]
    fn slower_server_loses_processing_time() {
        let d_now = 100.0;
        let (c_s, c_s2) = (2000.0, 1000.0);
        let from =
            DelayBreakdown::new(estimate_processing(d_now, c_s, c_s).unwrap(), 8.0, 5.0, 0.0);
        let to = DelayBreakdown::new(
            estimate_processing(d_now, c_s, c_s2).unwrap(),
            8.0,
            5.0,
            0.0,
        );
        assert_relative_eq!(e2e_delta(&from, &to), d_now * (1.0 - c_s / c_s2));
        assert!(e2e_delta(&from, &to) < 0.0);
    }

    #[test]
    fn ewma_smoothing() {
        assert_eq!(ewma(None, 10.0, 0.3), 10.0);
        assert_relative_eq!(ewma(Some(10.0), 20.0, 0.3), 13.0);
    }
}
