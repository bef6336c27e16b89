use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{account_downtime, DowntimeCause, RunOutput};
use crate::latency::RequestStatus;
use crate::model::UserId;
use crate::report::{csv_writer, mean_std};
use crate::{Error, Result};

/// Trigger times attached to a logged plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanTimes {
    pub t_trig_pre_mig: f64,
    pub t_trig_mig: f64,
    pub t_trig_ho: f64,
    pub est_downtime: f64,
}

/// One row of the event log.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time_s: f64,
    pub user: Option<UserId>,
    /// Zero for actions outside any episode.
    pub episode: u64,
    pub kind: &'static str,
    pub src: String,
    pub dst: String,
    pub bytes: f64,
    pub plan: Option<PlanTimes>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserSummary {
    pub name: String,
    pub app: String,
    pub completed: u64,
    pub state_counter: u64,
    pub downtime_s: f64,
    pub mean_total_ms: Option<f64>,
}

/// Totals and delay statistics of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub planner: String,
    pub seed: u64,
    pub duration_s: f64,
    pub requests: usize,
    pub completed: usize,
    pub lost_downtime: usize,
    pub unreachable: usize,
    pub mean_proc_ms: Option<f64>,
    pub std_proc_ms: Option<f64>,
    pub mean_trans_ms: Option<f64>,
    pub std_trans_ms: Option<f64>,
    pub mean_total_ms: Option<f64>,
    pub std_total_ms: Option<f64>,
    pub total_downtime_s: f64,
    pub downtime_by_cause: BTreeMap<&'static str, f64>,
    pub downtime_intervals: usize,
    pub handovers: usize,
    pub migrations: usize,
    pub users: Vec<UserSummary>,
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn opt6(x: Option<f64>) -> String {
    x.map(f6).unwrap_or_default()
}

impl RunOutput {
    pub fn summary(&self) -> RunSummary {
        let done: Vec<_> = self
            .requests
            .iter()
            .filter(|r| r.status == RequestStatus::Completed)
            .collect();
        let stat = |f: &dyn Fn(&crate::latency::RequestRecord) -> f64| {
            let xs: Vec<f64> = done.iter().map(|r| f(r)).collect();
            mean_std(&xs)
        };
        let proc = stat(&|r| r.breakdown.processing);
        let trans = stat(&|r| r.breakdown.transmission);
        let total = stat(&|r| r.breakdown.total);
        let count = |s: RequestStatus| self.requests.iter().filter(|r| r.status == s).count();
        let totals = account_downtime(&self.downtime);
        let users = self
            .world
            .users
            .iter()
            .map(|u| {
                let mine: Vec<f64> = done
                    .iter()
                    .filter(|r| r.user == u.id)
                    .map(|r| r.breakdown.total)
                    .collect();
                UserSummary {
                    name: u.name.clone(),
                    app: self.world.profile_of(u.id).app_name.clone(),
                    completed: mine.len() as u64,
                    state_counter: self.world.container(u.container).state_counter,
                    downtime_s: totals.per_user.get(&u.id).copied().unwrap_or(0.0),
                    mean_total_ms: mean_std(&mine).map(|m| m.0),
                }
            })
            .collect();
        RunSummary {
            planner: self.planner.to_string(),
            seed: self.seed,
            duration_s: self.duration_s,
            requests: self.requests.len(),
            completed: done.len(),
            lost_downtime: count(RequestStatus::LostDowntime),
            unreachable: count(RequestStatus::Unreachable),
            mean_proc_ms: proc.map(|m| m.0),
            std_proc_ms: proc.map(|m| m.1),
            mean_trans_ms: trans.map(|m| m.0),
            std_trans_ms: trans.map(|m| m.1),
            mean_total_ms: total.map(|m| m.0),
            std_total_ms: total.map(|m| m.1),
            total_downtime_s: totals.total,
            downtime_by_cause: DowntimeCause::ALL
                .iter()
                .map(|c| (c.as_str(), totals.per_cause.get(c).copied().unwrap_or(0.0)))
                .collect(),
            downtime_intervals: self.downtime.len(),
            handovers: self.events.iter().filter(|e| e.kind == "ho_done").count(),
            migrations: self.events.iter().filter(|e| e.kind == "mig_done").count(),
            users,
        }
    }

    fn user_name(&self, u: Option<UserId>) -> &str {
        u.map(|u| self.world.user(u).name.as_str()).unwrap_or("")
    }

    fn write_requests(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record([
            "time_s", "user", "bs", "server", "proc_ms", "trans_ms", "prop_ms", "queue_ms",
            "total_ms", "status", "counter",
        ])?;
        for r in &self.requests {
            let b = &r.breakdown;
            w.write_record([
                f6(r.time_s),
                self.world.user(r.user).name.clone(),
                self.world.bs(r.bs).name.clone(),
                self.world.server(r.server).name.clone(),
                f6(b.processing),
                f6(b.transmission),
                f6(b.propagation),
                f6(b.queuing),
                f6(b.total),
                r.status.as_str().to_string(),
                r.counter.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn write_downtime(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["user", "episode", "start_s", "end_s", "duration_s", "cause"])?;
        for d in &self.downtime {
            w.write_record([
                self.world.user(d.user).name.clone(),
                d.episode.to_string(),
                f6(d.start),
                f6(d.end),
                f6(d.duration()),
                d.cause.as_str().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn write_events(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record([
            "time_s",
            "user",
            "episode",
            "kind",
            "src",
            "dst",
            "bytes",
            "t_trig_pre_mig",
            "t_trig_mig",
            "t_trig_ho",
            "est_downtime_s",
            "detail",
        ])?;
        for e in &self.events {
            let p = e.plan;
            w.write_record([
                f6(e.time_s),
                self.user_name(e.user).to_string(),
                e.episode.to_string(),
                e.kind.to_string(),
                e.src.clone(),
                e.dst.clone(),
                format!("{:.0}", e.bytes),
                opt6(p.map(|p| p.t_trig_pre_mig)),
                opt6(p.map(|p| p.t_trig_mig)),
                opt6(p.map(|p| p.t_trig_ho)),
                opt6(p.map(|p| p.est_downtime)),
                e.detail.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes `requests.csv`, `downtime.csv`, `events.csv` and `summary.json` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.write_requests(&dir.join("requests.csv"))?;
        self.write_downtime(&dir.join("downtime.csv"))?;
        self.write_events(&dir.join("events.csv"))?;
        let path = dir.join("summary.json");
        let json = serde_json::to_string_pretty(&self.summary()).expect("summary serializes");
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }
}
