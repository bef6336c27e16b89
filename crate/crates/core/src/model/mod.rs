//! Static domain entities and the dynamic world state shared by every other module.

mod links;
mod route;
pub mod scenario;

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::migration::{CalibrationHistory, MigrationConfig};
use crate::orchestrator::OrchestratorConfig;
use crate::planner::PlannerConfig;
use crate::radio::RadioConfig;
use crate::scalar::Scalar;
use crate::sim::SimConfig;

pub use links::{path_delay, LinkMatrix, LinkSpec};
pub use route::Route;
pub use scenario::{load_scenario, load_scenario_file};

macro_rules! index_id {
    ($name:ident, $prefix:literal) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        pub struct $name(pub usize);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "#{}"), self.0)
            }
        }
    };
}

index_id!(BsId, "bs");
index_id!(ServerId, "server");
index_id!(UserId, "user");
index_id!(ContainerId, "container");

/// Either end of a wired link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Bs(BsId),
    Server(ServerId),
}

impl From<BsId> for NodeId {
    fn from(id: BsId) -> Self {
        NodeId::Bs(id)
    }
}

impl From<ServerId> for NodeId {
    fn from(id: ServerId) -> Self {
        NodeId::Server(id)
    }
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Resource vector: cpu (millicores), memory (bytes), storage (bytes), network I/O (bits/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Resources<S = f64> {
    pub cpu: S,
    pub memory: S,
    pub storage: S,
    pub net_io: S,
}

impl<S: Scalar> Resources<S> {
    pub fn zero() -> Self {
        Resources {
            cpu: S::zero(),
            memory: S::zero(),
            storage: S::zero(),
            net_io: S::zero(),
        }
    }

    /// Componentwise `self <= other`.
    pub fn fits_within(&self, other: &Self) -> bool {
        self.cpu <= other.cpu
            && self.memory <= other.memory
            && self.storage <= other.storage
            && self.net_io <= other.net_io
    }

    pub fn is_nonnegative(&self) -> bool {
        Self::zero().fits_within(self)
    }

    pub fn cast<T: Scalar>(&self) -> Resources<T> {
        let c = |v: S| T::lit(v.to_f64_lossy());
        Resources {
            cpu: c(self.cpu),
            memory: c(self.memory),
            storage: c(self.storage),
            net_io: c(self.net_io),
        }
    }
}

impl<S: Scalar> Add for Resources<S> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Resources {
            cpu: self.cpu + rhs.cpu,
            memory: self.memory + rhs.memory,
            storage: self.storage + rhs.storage,
            net_io: self.net_io + rhs.net_io,
        }
    }
}

impl<S: Scalar> Sub for Resources<S> {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        Resources {
            cpu: self.cpu - rhs.cpu,
            memory: self.memory - rhs.memory,
            storage: self.storage - rhs.storage,
            net_io: self.net_io - rhs.net_io,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MobileUser {
    pub id: UserId,
    pub name: String,
    pub position: Point,
    /// m/s
    pub speed: f64,
    pub route: Route,
    /// Distance travelled along the unfolded round trip, in `[0, 2 * route.length())`.
    pub route_offset: f64,
    /// Bits per offloaded task.
    pub task_size_bits: f64,
    /// Tasks per second.
    pub task_rate: f64,
    pub container: ContainerId,
    /// The single (base station, server) pair the user is bound to.
    pub assignment: (BsId, ServerId),
    pub sla_max_delay_ms: f64,
    /// Values the monitor keeps about this user.
    pub monitor: UserMonitor,
}

/// Monitored per-user state: latest shadowed RSSI per base station, and smoothed delays.
#[derive(Debug, Clone, Default)]
pub struct UserMonitor {
    /// Indexed by `BsId`.
    pub measured_rssi: Vec<f64>,
    pub proc_ewma_ms: Option<f64>,
    pub total_ewma_ms: Option<f64>,
    /// True while the radio link is down for a handover.
    pub detached: bool,
}

impl MobileUser {
    /// Position after travelling for `dt` more seconds from the current state.
    pub fn position_after(&self, dt: f64) -> Point {
        self.route
            .position_at(self.route.advance(self.route_offset, self.speed * dt))
    }

    pub fn bs(&self) -> BsId {
        self.assignment.0
    }

    pub fn server(&self) -> ServerId {
        self.assignment.1
    }
}

#[derive(Debug, Clone)]
pub struct BaseStation {
    pub id: BsId,
    pub name: String,
    pub position: Point,
    /// dBm
    pub tx_power_dbm: f64,
    pub max_users: usize,
    pub collocated_server: Option<ServerId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    #[serde(rename = "edge-l1")]
    EdgeL1,
    #[serde(rename = "edge-l2")]
    EdgeL2,
    #[serde(rename = "cloud")]
    Cloud,
}

#[derive(Debug, Clone)]
pub struct Server {
    pub id: ServerId,
    pub name: String,
    pub tier: Tier,
    pub position: Point,
    /// Benchmark events per second.
    pub compute_power: f64,
    pub capacity: Resources,
    /// Checkpoint coefficient.
    pub psi: f64,
    /// Restore coefficient.
    pub rho: f64,
    /// Constant queuing delay charged to every request, ms.
    pub queue_ms: f64,
    pub hosted: BTreeSet<ContainerId>,
    /// Containers whose migration towards this server is in flight.
    pub reserved: BTreeSet<ContainerId>,
}

/// Static description of an offloaded application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerProfile {
    pub app_name: String,
    /// Base image size, bytes.
    pub image_size_bytes: f64,
    pub demand: Resources,
    /// Processing delay at `reference_compute_power`, ms.
    pub base_proc_delay_ms: f64,
    pub reference_compute_power: f64,
    /// Size of the full pre-migration checkpoint, bytes.
    pub checkpoint_size_bytes: f64,
    /// Size of the delta checkpoint taken at migration, bytes.
    pub delta_size_bytes: f64,
}

impl ContainerProfile {
    /// `1 - delta / checkpoint`.
    pub fn reduction_ratio(&self) -> f64 {
        1.0 - self.delta_size_bytes / self.checkpoint_size_bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContainerStatus {
    Running,
    PreMigrating,
    Frozen,
    Restoring,
}

#[derive(Debug, Clone)]
pub struct ContainerInstance {
    pub id: ContainerId,
    pub user: UserId,
    /// Index into `WorldState::apps`.
    pub app: usize,
    pub host: ServerId,
    pub state_counter: u64,
    pub status: ContainerStatus,
    /// `(checkpoint bytes, delta bytes)` measured by the size probe.
    pub probed_sizes: Option<(f64, f64)>,
    /// Server holding a completed pre-migration copy of this container.
    pub staged_at: Option<ServerId>,
}

impl ContainerInstance {
    pub fn is_serving(&self) -> bool {
        matches!(
            self.status,
            ContainerStatus::Running | ContainerStatus::PreMigrating
        )
    }
}

/// Everything a run needs: topology, users, profiles, links and tunables.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub now: f64,
    pub base_stations: Vec<BaseStation>,
    pub servers: Vec<Server>,
    pub users: Vec<MobileUser>,
    pub containers: Vec<ContainerInstance>,
    pub apps: Vec<ContainerProfile>,
    pub links: LinkMatrix,
    /// Checkpoint/restore history, indexed by `ServerId`.
    pub history: Vec<CalibrationHistory>,
    pub radio: RadioConfig,
    pub planner: PlannerConfig,
    pub orchestrator: OrchestratorConfig,
    pub migration: MigrationConfig,
    pub sim: SimConfig,
}

impl WorldState {
    pub fn bs(&self, id: BsId) -> &BaseStation {
        &self.base_stations[id.0]
    }

    pub fn server(&self, id: ServerId) -> &Server {
        &self.servers[id.0]
    }

    pub fn user(&self, id: UserId) -> &MobileUser {
        &self.users[id.0]
    }

    pub fn container(&self, id: ContainerId) -> &ContainerInstance {
        &self.containers[id.0]
    }

    pub fn container_of(&self, user: UserId) -> &ContainerInstance {
        self.container(self.user(user).container)
    }

    pub fn profile_of(&self, user: UserId) -> &ContainerProfile {
        &self.apps[self.container_of(user).app]
    }

    pub fn node_name(&self, node: NodeId) -> &str {
        match node {
            NodeId::Bs(b) => &self.bs(b).name,
            NodeId::Server(s) => &self.server(s).name,
        }
    }

    pub fn server_by_name(&self, name: &str) -> Option<ServerId> {
        self.servers.iter().find(|s| s.name == name).map(|s| s.id)
    }

    pub fn bs_by_name(&self, name: &str) -> Option<BsId> {
        self.base_stations
            .iter()
            .find(|b| b.name == name)
            .map(|b| b.id)
    }

    pub fn cloud(&self) -> Option<ServerId> {
        self.servers
            .iter()
            .find(|s| s.tier == Tier::Cloud)
            .map(|s| s.id)
    }

    /// Sum of demands of containers hosted on `server`.
    pub fn used_resources(&self, server: ServerId) -> Resources {
        self.server(server)
            .hosted
            .iter()
            .map(|c| self.apps[self.container(*c).app].demand)
            .fold(Resources::zero(), |acc, d| acc + d)
    }

    /// Demands hosted on or reserved at `server`, leaving out `except`.
    pub fn committed_resources(&self, server: ServerId, except: Option<ContainerId>) -> Resources {
        let s = self.server(server);
        s.hosted
            .iter()
            .chain(s.reserved.iter().filter(|c| !s.hosted.contains(c)))
            .filter(|c| Some(**c) != except)
            .map(|c| self.apps[self.container(*c).app].demand)
            .fold(Resources::zero(), |acc, d| acc + d)
    }

    /// Whether `server` can take `container` on top of what it already committed.
    pub fn has_room_for(&self, server: ServerId, container: ContainerId) -> bool {
        let demand = self.apps[self.container(container).app].demand;
        (self.committed_resources(server, Some(container)) + demand)
            .fits_within(&self.server(server).capacity)
    }

    /// Number of users currently attached to `bs`.
    pub fn attached_users(&self, bs: BsId) -> usize {
        self.users.iter().filter(|u| u.bs() == bs).count()
    }

    /// Checks the capacity constraint on every server.
    pub fn check_capacity(&self) -> crate::Result<()> {
        for s in &self.servers {
            if !self.used_resources(s.id).fits_within(&s.capacity) {
                return Err(crate::Error::Invariant {
                    entity: s.name.clone(),
                    reason: "hosted containers exceed server capacity".into(),
                });
            }
        }
        Ok(())
    }
}
