//! Placement: gain and cost of moving a user to a new (base station, server) pair, the
//! exact solver, and the cloud/random/nearest baselines.

mod solver;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::latency::{self, e2e_delta};
use crate::migration;
use crate::model::{BsId, ContainerId, NodeId, Resources, ServerId, UserId, WorldState};
use crate::radio;
use crate::{Error, Result};

pub use solver::{
    brute_force, solve, verify, Candidate, PlacementProblem, PlacementSolution, BRUTE_FORCE_LIMIT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Cloud,
    Random,
    Nearest,
    Orchestrated,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 4] = [
        PlannerKind::Cloud,
        PlannerKind::Random,
        PlannerKind::Nearest,
        PlannerKind::Orchestrated,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlannerKind::Cloud => "cloud",
            PlannerKind::Random => "random",
            PlannerKind::Nearest => "nearest",
            PlannerKind::Orchestrated => "orchestrated",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for PlannerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                format!("unknown planner `{s}` (expected cloud, random, nearest or orchestrated)")
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Gain units (ms·tasks) per second of downtime.
    pub cost_weight: f64,
    /// Branch-and-bound node limit.
    pub node_budget: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            cost_weight: 1000.0,
            node_budget: 1_000_000,
        }
    }
}

/// Estimated delay gain (ms·tasks) of serving `user` through `candidate` from `t_prime`
/// on, over one planning horizon.
pub fn compute_gain(
    world: &WorldState,
    user: UserId,
    candidate: (BsId, ServerId),
    t_prime: f64,
) -> Result<f64> {
    let u = world.user(user);
    let current = u.assignment;
    if candidate == current {
        return Ok(0.0);
    }
    // fall back to today's path when the current link is gone by t_prime
    let from = latency::estimate_e2e(world, user, current.0, current.1, t_prime)
        .or_else(|_| latency::estimate_e2e(world, user, current.0, current.1, world.now))?;
    let to = latency::estimate_e2e(world, user, candidate.0, candidate.1, t_prime)?;
    Ok(e2e_delta(&from, &to) * u.task_rate * world.orchestrator.horizon_dt_s)
}

/// Estimated downtime (s) of moving `user` to `candidate`: the larger of the migration
/// and the handover, each zero when not needed.
pub fn compute_cost(world: &WorldState, user: UserId, candidate: (BsId, ServerId)) -> Result<f64> {
    let u = world.user(user);
    let t_mig = if candidate.1 == u.server() {
        0.0
    } else {
        migration::planner_estimate(world, u.container, candidate.1)?.t_mig
    };
    let t_ho = if candidate.0 == u.bs() {
        0.0
    } else {
        world.sim.handover_duration_s
    };
    Ok(t_mig.max(t_ho))
}

/// A user asking to be (re)placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanRequest {
    pub user: UserId,
    pub t_prime: f64,
    /// Base station to leave when alternatives exist (a handover is due).
    pub avoid_bs: Option<BsId>,
}

fn demand(world: &WorldState, c: ContainerId) -> Resources {
    world.apps[world.container(c).app].demand
}

/// Builds the placement instance for `requests`. With `initial`, every move is free.
pub fn build_problem(
    world: &WorldState,
    requests: &[PlanRequest],
    initial: bool,
) -> Result<PlacementProblem> {
    let replanned: BTreeSet<ContainerId> = requests
        .iter()
        .map(|r| world.user(r.user).container)
        .collect();
    let server_capacity = world
        .servers
        .iter()
        .map(|s| {
            let held = s
                .hosted
                .union(&s.reserved)
                .filter(|c| !replanned.contains(c))
                .fold(Resources::zero(), |acc, c| acc + demand(world, *c));
            s.capacity - held
        })
        .collect();
    let bs_capacity = world
        .base_stations
        .iter()
        .map(|b| {
            let others = world
                .users
                .iter()
                .filter(|u| u.bs() == b.id && !replanned.contains(&u.container))
                .count();
            b.max_users.saturating_sub(others)
        })
        .collect();

    let mut candidates = Vec::with_capacity(requests.len());
    for r in requests {
        candidates.push(user_candidates(world, r, initial)?);
    }
    Ok(PlacementProblem {
        users: requests.iter().map(|r| r.user).collect(),
        candidates,
        demands: requests
            .iter()
            .map(|r| demand(world, world.user(r.user).container))
            .collect(),
        server_capacity,
        bs_capacity,
        cost_weight: world.planner.cost_weight,
        t_prime: requests.iter().map(|r| r.t_prime).collect(),
    })
}

fn user_candidates(world: &WorldState, r: &PlanRequest, initial: bool) -> Result<Vec<Candidate>> {
    let u = world.user(r.user);
    let reachable: Vec<BsId> = world
        .base_stations
        .iter()
        .filter(|b| {
            radio::predict_rssi(u, b, world.now, r.t_prime, &world.radio)
                .is_ok_and(|rssi| rssi >= world.radio.rssi_min_dbm)
        })
        .map(|b| b.id)
        .collect();
    let bss: Vec<BsId> = match r.avoid_bs {
        Some(avoid) if reachable.iter().any(|b| *b != avoid) => {
            reachable.into_iter().filter(|b| *b != avoid).collect()
        }
        _ => reachable,
    };

    let mut pairs: Vec<(BsId, ServerId)> = bss
        .iter()
        .flat_map(|&b| {
            world
                .servers
                .iter()
                .filter(move |s| world.links.contains(NodeId::Bs(b), NodeId::Server(s.id)))
                .map(move |s| (b, s.id))
        })
        .collect();
    let current = u.assignment;
    pairs.sort_by_key(|&(b, s)| ((b, s) != current, world.server(s).tier, b, s));

    let mut out = Vec::with_capacity(pairs.len());
    for (b, s) in pairs {
        let gain = match compute_gain(world, r.user, (b, s), r.t_prime) {
            Ok(g) => g,
            Err(Error::Unreachable(_) | Error::ZeroBandwidth) => continue,
            Err(e) => return Err(e),
        };
        let cost = if initial {
            0.0
        } else {
            compute_cost(world, r.user, (b, s))?
        };
        out.push(Candidate {
            bs: b,
            server: s,
            gain,
            cost,
        });
    }
    Ok(out)
}

/// Solves a placement for `requests` and returns the chosen pair per request.
pub fn plan_orchestrated(
    world: &WorldState,
    requests: &[PlanRequest],
    initial: bool,
) -> Result<Vec<(UserId, (BsId, ServerId))>> {
    let problem = build_problem(world, requests, initial)?;
    let solution = solve(&problem, world.planner.node_budget)?;
    if !solution.optimal {
        log::warn!("placement search hit the node budget; using best assignment found");
    }
    Ok(problem
        .users
        .iter()
        .copied()
        .zip(solution.assignment)
        .collect())
}

/// Strongest measured base station that passes the RSSI floor and has a free slot.
pub fn strongest_bs(world: &WorldState, user: UserId) -> Result<BsId> {
    let u = world.user(user);
    world
        .base_stations
        .iter()
        .filter(|b| u.monitor.measured_rssi[b.id.0] >= world.radio.rssi_min_dbm)
        .filter(|b| b.id == u.bs() || world.attached_users(b.id) < b.max_users)
        .max_by(|a, b| {
            u.monitor.measured_rssi[a.id.0]
                .total_cmp(&u.monitor.measured_rssi[b.id.0])
                .then(b.id.cmp(&a.id))
        })
        .map(|b| b.id)
        .ok_or_else(|| Error::Unreachable(u.name.clone()))
}

fn hostable(world: &WorldState, user: UserId, s: ServerId) -> bool {
    let c = world.container_of(user);
    c.host == s || world.has_room_for(s, c.id)
}

/// Always the cloud.
pub fn plan_cloud(world: &WorldState, user: UserId) -> Result<(BsId, ServerId)> {
    let b = strongest_bs(world, user)?;
    let cloud = world
        .cloud()
        .filter(|&s| hostable(world, user, s))
        .ok_or_else(|| Error::NoCandidate(world.user(user).name.clone()))?;
    Ok((b, cloud))
}

/// A server drawn uniformly among those with room (the current host included).
pub fn plan_random<R: Rng + ?Sized>(
    world: &WorldState,
    user: UserId,
    rng: &mut R,
) -> Result<(BsId, ServerId)> {
    let b = strongest_bs(world, user)?;
    let options: Vec<ServerId> = world
        .servers
        .iter()
        .map(|s| s.id)
        .filter(|&s| hostable(world, user, s))
        .collect();
    if options.is_empty() {
        return Err(Error::NoCandidate(world.user(user).name.clone()));
    }
    Ok((b, options[rng.random_range(0..options.len())]))
}

/// The target base station's collocated server, else the server closest to the user.
pub fn plan_nearest(world: &WorldState, user: UserId) -> Result<(BsId, ServerId)> {
    let b = strongest_bs(world, user)?;
    if let Some(s) = world
        .bs(b)
        .collocated_server
        .filter(|&s| hostable(world, user, s))
    {
        return Ok((b, s));
    }
    let pos = world.user(user).position;
    world
        .servers
        .iter()
        .filter(|s| hostable(world, user, s.id))
        .min_by(|a, b| {
            a.position
                .distance(&pos)
                .total_cmp(&b.position.distance(&pos))
                .then(a.id.cmp(&b.id))
        })
        .map(|s| (b, s.id))
        .ok_or_else(|| Error::NoCandidate(world.user(user).name.clone()))
}
