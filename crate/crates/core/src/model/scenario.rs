//! Scenario documents (TOML) and their resolution into a [`WorldState`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::Deserialize;

use super::{
    BaseStation, BsId, ContainerId, ContainerInstance, ContainerProfile, ContainerStatus,
    LinkMatrix, LinkSpec, MobileUser, NodeId, Point, Resources, Route, Server, ServerId, Tier,
    UserId, UserMonitor, WorldState,
};
use crate::migration::{CalibrationHistory, MigrationConfig};
use crate::orchestrator::OrchestratorConfig;
use crate::planner::PlannerConfig;
use crate::radio::{self, RadioConfig};
use crate::sim::SimConfig;
use crate::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub topology: TopologyDoc,
    #[serde(default)]
    pub links: Vec<LinkDoc>,
    #[serde(default)]
    pub users: Vec<UserDoc>,
    #[serde(default)]
    pub apps: BTreeMap<String, AppDoc>,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub orchestrator: OrchestratorConfig,
    #[serde(default)]
    pub migration: MigrationConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    #[serde(default = "default_local_bw")]
    pub local_bw_bps: f64,
    #[serde(default)]
    pub base_stations: Vec<BaseStationDoc>,
    #[serde(default)]
    pub servers: Vec<ServerDoc>,
}

fn default_local_bw() -> f64 {
    10e9
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseStationDoc {
    pub id: String,
    pub position: [f64; 2],
    #[serde(default = "default_tx_power")]
    pub tx_power_dbm: f64,
    #[serde(default = "default_max_users")]
    pub max_users: usize,
    pub collocated_server: Option<String>,
}

fn default_tx_power() -> f64 {
    20.0
}

fn default_max_users() -> usize {
    16
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerDoc {
    pub id: String,
    pub tier: Tier,
    pub position: [f64; 2],
    pub compute_power: f64,
    pub capacity: Resources,
    #[serde(default = "one")]
    pub psi: f64,
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default)]
    pub queue_ms: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub a: String,
    pub b: String,
    pub bw_bps: f64,
    pub rtt_ms: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppDoc {
    pub image_size_bytes: f64,
    pub demand: Resources,
    pub base_proc_delay_ms: f64,
    #[serde(default = "default_reference_power")]
    pub reference_compute_power: f64,
    pub checkpoint_size_bytes: f64,
    pub delta_size_bytes: f64,
}

fn default_reference_power() -> f64 {
    8000.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserDoc {
    pub id: String,
    pub app: String,
    pub speed: f64,
    pub waypoints: Vec<[f64; 2]>,
    pub task_size_bits: f64,
    pub task_rate: f64,
    pub sla_max_delay_ms: f64,
    pub initial_bs: Option<String>,
    pub initial_server: Option<String>,
}

fn invariant(entity: &str, reason: impl Into<String>) -> Error {
    Error::Invariant {
        entity: entity.to_string(),
        reason: reason.into(),
    }
}

fn dangling(entity: &str, reference: &str) -> Error {
    Error::DanglingReference {
        entity: entity.to_string(),
        reference: reference.to_string(),
    }
}

fn point(p: [f64; 2]) -> Point {
    Point::new(p[0], p[1])
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<WorldState> {
    let doc: ScenarioDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    resolve(doc)
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<WorldState> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_scenario(&text)
}

fn resolve(doc: ScenarioDoc) -> Result<WorldState> {
    doc.radio.validate()?;
    doc.orchestrator.validate()?;
    doc.sim.validate()?;
    doc.migration.validate()?;

    let mut names = BTreeSet::new();
    let mut servers = Vec::with_capacity(doc.topology.servers.len());
    let mut server_ids = HashMap::new();
    for (i, s) in doc.topology.servers.iter().enumerate() {
        if !names.insert(s.id.clone()) {
            return Err(invariant(&s.id, "duplicate node id"));
        }
        if !(s.compute_power > 0.0) {
            return Err(invariant(&s.id, "compute_power must be > 0"));
        }
        if !(s.psi > 0.0) || !(s.rho > 0.0) {
            return Err(invariant(&s.id, "psi and rho must be > 0"));
        }
        if !s.capacity.is_nonnegative() || s.queue_ms < 0.0 {
            return Err(invariant(
                &s.id,
                "capacity and queue delay must be nonnegative",
            ));
        }
        server_ids.insert(s.id.clone(), ServerId(i));
        servers.push(Server {
            id: ServerId(i),
            name: s.id.clone(),
            tier: s.tier,
            position: point(s.position),
            compute_power: s.compute_power,
            capacity: s.capacity,
            psi: s.psi,
            rho: s.rho,
            queue_ms: s.queue_ms,
            hosted: BTreeSet::new(),
            reserved: BTreeSet::new(),
        });
    }

    let mut base_stations = Vec::with_capacity(doc.topology.base_stations.len());
    let mut bs_ids = HashMap::new();
    for (i, b) in doc.topology.base_stations.iter().enumerate() {
        if !names.insert(b.id.clone()) {
            return Err(invariant(&b.id, "duplicate node id"));
        }
        if b.max_users < 1 {
            return Err(invariant(&b.id, "max_users must be >= 1"));
        }
        let collocated_server = match &b.collocated_server {
            Some(name) => Some(*server_ids.get(name).ok_or_else(|| dangling(&b.id, name))?),
            None => None,
        };
        bs_ids.insert(b.id.clone(), BsId(i));
        base_stations.push(BaseStation {
            id: BsId(i),
            name: b.id.clone(),
            position: point(b.position),
            tx_power_dbm: b.tx_power_dbm,
            max_users: b.max_users,
            collocated_server,
        });
    }

    let node = |owner: &str, name: &str| -> Result<NodeId> {
        if let Some(s) = server_ids.get(name) {
            Ok(NodeId::Server(*s))
        } else if let Some(b) = bs_ids.get(name) {
            Ok(NodeId::Bs(*b))
        } else {
            Err(dangling(owner, name))
        }
    };

    if !(doc.topology.local_bw_bps > 0.0) {
        return Err(invariant("topology", "local_bw_bps must be > 0"));
    }
    let mut links = LinkMatrix::new(doc.topology.local_bw_bps);
    for l in &doc.links {
        let owner = format!("link {}-{}", l.a, l.b);
        let a = node(&owner, &l.a)?;
        let b = node(&owner, &l.b)?;
        if !(l.bw_bps > 0.0) || !(l.rtt_ms >= 0.0) {
            return Err(invariant(&owner, "bw must be > 0 and rtt >= 0"));
        }
        links.insert(
            a,
            b,
            LinkSpec {
                bw_bps: l.bw_bps,
                rtt_ms: l.rtt_ms,
            },
        );
    }

    let mut apps = Vec::with_capacity(doc.apps.len());
    let mut app_ids = HashMap::new();
    for (name, a) in &doc.apps {
        if !(a.image_size_bytes > 0.0) || !(a.checkpoint_size_bytes > 0.0) {
            return Err(invariant(name, "image and checkpoint sizes must be > 0"));
        }
        if !(a.delta_size_bytes >= 0.0) || a.delta_size_bytes > a.checkpoint_size_bytes {
            return Err(invariant(
                name,
                "delta size must lie in [0, checkpoint size]",
            ));
        }
        if !(a.base_proc_delay_ms >= 0.0) || !(a.reference_compute_power > 0.0) {
            return Err(invariant(
                name,
                "processing delay >= 0 and reference power > 0 required",
            ));
        }
        if !a.demand.is_nonnegative() {
            return Err(invariant(name, "resource demand must be nonnegative"));
        }
        app_ids.insert(name.clone(), apps.len());
        apps.push(ContainerProfile {
            app_name: name.clone(),
            image_size_bytes: a.image_size_bytes,
            demand: a.demand,
            base_proc_delay_ms: a.base_proc_delay_ms,
            reference_compute_power: a.reference_compute_power,
            checkpoint_size_bytes: a.checkpoint_size_bytes,
            delta_size_bytes: a.delta_size_bytes,
        });
    }

    let mut users = Vec::with_capacity(doc.users.len());
    let mut containers = Vec::with_capacity(doc.users.len());
    let mut user_names = BTreeSet::new();
    for (i, u) in doc.users.iter().enumerate() {
        if !user_names.insert(u.id.clone()) {
            return Err(invariant(&u.id, "duplicate user id"));
        }
        let app = *app_ids.get(&u.app).ok_or_else(|| dangling(&u.id, &u.app))?;
        if !(u.speed > 0.0) {
            return Err(invariant(&u.id, "speed must be > 0"));
        }
        if !(u.task_size_bits > 0.0) || !(u.task_rate > 0.0) {
            return Err(invariant(&u.id, "task size and rate must be > 0"));
        }
        if u.waypoints.is_empty() {
            return Err(invariant(&u.id, "at least one waypoint required"));
        }
        if !(u.sla_max_delay_ms > 0.0) {
            return Err(invariant(&u.id, "sla_max_delay_ms must be > 0"));
        }
        let route = Route::new(u.waypoints.iter().copied().map(point).collect());
        let position = route.position_at(0.0);

        let bs = match &u.initial_bs {
            Some(name) => *bs_ids.get(name).ok_or_else(|| dangling(&u.id, name))?,
            None => base_stations
                .iter()
                .map(|b| (b.id, radio::mean_rssi(&position, b, &doc.radio)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(id, _)| id)
                .ok_or_else(|| invariant(&u.id, "no base station to attach to"))?,
        };
        let server = match &u.initial_server {
            Some(name) => *server_ids.get(name).ok_or_else(|| dangling(&u.id, name))?,
            None => base_stations[bs.0]
                .collocated_server
                .or_else(|| {
                    servers
                        .iter()
                        .min_by(|a, b| {
                            a.position
                                .distance(&position)
                                .total_cmp(&b.position.distance(&position))
                        })
                        .map(|s| s.id)
                })
                .ok_or_else(|| invariant(&u.id, "no server to host the container"))?,
        };

        let cid = ContainerId(i);
        servers[server.0].hosted.insert(cid);
        containers.push(ContainerInstance {
            id: cid,
            user: UserId(i),
            app,
            host: server,
            state_counter: 0,
            status: ContainerStatus::Running,
            probed_sizes: None,
            staged_at: None,
        });
        users.push(MobileUser {
            id: UserId(i),
            name: u.id.clone(),
            position,
            speed: u.speed,
            route,
            route_offset: 0.0,
            task_size_bits: u.task_size_bits,
            task_rate: u.task_rate,
            container: cid,
            assignment: (bs, server),
            sla_max_delay_ms: u.sla_max_delay_ms,
            monitor: UserMonitor {
                measured_rssi: base_stations
                    .iter()
                    .map(|b| radio::mean_rssi(&position, b, &doc.radio))
                    .collect(),
                ..UserMonitor::default()
            },
        });
    }

    let n_servers = servers.len();
    let world = WorldState {
        now: 0.0,
        base_stations,
        servers,
        users,
        containers,
        apps,
        links,
        history: vec![CalibrationHistory::default(); n_servers],
        radio: doc.radio,
        planner: doc.planner,
        orchestrator: doc.orchestrator,
        migration: doc.migration,
        sim: doc.sim,
    };
    world.check_capacity()?;
    Ok(world)
}
