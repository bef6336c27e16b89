//! Aggregation of run outputs into delay-breakdown statistics, CDF data and downtime
//! comparisons across planners.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::latency::RequestStatus;
use crate::planner::PlannerKind;
use crate::sim::{DowntimeCause, RunOutput};
use crate::{Error, Result};

/// Mean and sample standard deviation; `None` for an empty slice.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

/// `1 - a / b`: how much lower `a` is than `b`, as a fraction.
pub fn reduction(a: f64, b: f64) -> f64 {
    1.0 - a / b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

/// Figures for one (app, planner) pair across all runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub app: String,
    pub planner: PlannerKind,
    pub runs: usize,
    pub requests: usize,
    pub completed: usize,
    pub lost_downtime: usize,
    pub unreachable: usize,
    pub proc_ms: Stat,
    pub trans_ms: Stat,
    pub total_ms: Stat,
    /// Total downtime of this app's users, one value per run.
    pub downtime_per_run_s: Vec<f64>,
    pub downtime_s: Stat,
    /// Mean per run, by cause.
    pub downtime_by_cause_s: BTreeMap<&'static str, f64>,
    /// Sorted total delays of completed requests.
    #[serde(skip)]
    pub cdf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reduction {
    pub app: String,
    pub baseline: PlannerKind,
    /// `1 - orchestrated / baseline` of the mean total delay.
    pub e2e: f64,
    /// `1 - orchestrated / baseline` of the mean per-run downtime; `None` when the
    /// baseline had no downtime.
    pub downtime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub groups: Vec<GroupSummary>,
    pub reductions: Vec<Reduction>,
}

impl Summary {
    pub fn group(&self, app: &str, planner: PlannerKind) -> Option<&GroupSummary> {
        self.groups
            .iter()
            .find(|g| g.app == app && g.planner == planner)
    }
}

#[derive(Default)]
struct Acc {
    runs: usize,
    requests: usize,
    lost: usize,
    unreachable: usize,
    proc: Vec<f64>,
    trans: Vec<f64>,
    total: Vec<f64>,
    downtime: Vec<f64>,
    causes: BTreeMap<DowntimeCause, f64>,
}

fn stat(xs: &[f64]) -> Result<Stat> {
    mean_std(xs)
        .map(|(mean, std)| Stat { mean, std })
        .ok_or(Error::EmptyMetrics)
}

/// Aggregates runs per (app, planner). Order of `outputs` does not matter.
pub fn summarize(outputs: &[RunOutput]) -> Result<Summary> {
    if outputs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut runs: Vec<&RunOutput> = outputs.iter().collect();
    runs.sort_by_key(|r| (r.planner, r.seed));

    let mut acc: BTreeMap<(String, PlannerKind), Acc> = BTreeMap::new();
    for run in runs {
        let w = &run.world;
        let app_of = |u: crate::model::UserId| w.profile_of(u).app_name.clone();
        let mut apps: Vec<String> = w.users.iter().map(|u| app_of(u.id)).collect();
        apps.sort();
        apps.dedup();
        for app in &apps {
            let a = acc.entry((app.clone(), run.planner)).or_default();
            a.runs += 1;
            a.downtime.push(0.0);
        }
        for r in &run.requests {
            let a = acc
                .get_mut(&(app_of(r.user), run.planner))
                .expect("app seen");
            a.requests += 1;
            match r.status {
                RequestStatus::Completed => {
                    a.proc.push(r.breakdown.processing);
                    a.trans.push(r.breakdown.transmission);
                    a.total.push(r.breakdown.total);
                }
                RequestStatus::LostDowntime => a.lost += 1,
                RequestStatus::Unreachable => a.unreachable += 1,
            }
        }
        for d in &run.downtime {
            let a = acc
                .get_mut(&(app_of(d.user), run.planner))
                .expect("app seen");
            *a.downtime.last_mut().expect("run slot") += d.duration();
            *a.causes.entry(d.cause).or_default() += d.duration();
        }
    }

    let mut groups = Vec::with_capacity(acc.len());
    for ((app, planner), a) in acc {
        let mut cdf = a.total.clone();
        cdf.sort_by(f64::total_cmp);
        groups.push(GroupSummary {
            proc_ms: stat(&a.proc)?,
            trans_ms: stat(&a.trans)?,
            total_ms: stat(&a.total)?,
            downtime_s: stat(&a.downtime)?,
            downtime_by_cause_s: DowntimeCause::ALL
                .iter()
                .map(|c| {
                    let v = a.causes.get(c).copied().unwrap_or(0.0);
                    (c.as_str(), v / a.runs as f64)
                })
                .collect(),
            downtime_per_run_s: a.downtime,
            app,
            planner,
            runs: a.runs,
            requests: a.requests,
            completed: a.total.len(),
            lost_downtime: a.lost,
            unreachable: a.unreachable,
            cdf,
        });
    }

    let mut reductions = Vec::new();
    for g in groups
        .iter()
        .filter(|g| g.planner == PlannerKind::Orchestrated)
    {
        for b in groups
            .iter()
            .filter(|b| b.app == g.app && b.planner != PlannerKind::Orchestrated)
        {
            reductions.push(Reduction {
                app: g.app.clone(),
                baseline: b.planner,
                e2e: reduction(g.total_ms.mean, b.total_ms.mean),
                downtime: (b.downtime_s.mean > 0.0)
                    .then(|| reduction(g.downtime_s.mean, b.downtime_s.mean)),
            });
        }
    }
    Ok(Summary { groups, reductions })
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `cdf_<app>_<planner>.csv`, `breakdown.csv`, `downtime.csv`, `reductions.csv`
/// and `summary.json` into `out_dir`. Returns the written paths.
pub fn emit(summary: &Summary, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    for g in &summary.groups {
        let path = dir.join(format!("cdf_{}_{}.csv", g.app, g.planner));
        let n = g.cdf.len() as f64;
        let rows = g
            .cdf
            .iter()
            .enumerate()
            .map(|(i, x)| vec![f6(*x), f6((i + 1) as f64 / n)])
            .collect();
        write_csv(&path, &["total_ms", "cdf"], rows)?;
        written.push(path);
    }

    let path = dir.join("breakdown.csv");
    let rows = summary
        .groups
        .iter()
        .map(|g| {
            vec![
                g.app.clone(),
                g.planner.to_string(),
                g.runs.to_string(),
                g.requests.to_string(),
                g.completed.to_string(),
                g.lost_downtime.to_string(),
                f6(g.proc_ms.mean),
                f6(g.proc_ms.std),
                f6(g.trans_ms.mean),
                f6(g.trans_ms.std),
                f6(g.total_ms.mean),
                f6(g.total_ms.std),
            ]
        })
        .collect();
    write_csv(
        &path,
        &[
            "app",
            "planner",
            "runs",
            "requests",
            "completed",
            "lost_downtime",
            "mean_proc_ms",
            "std_proc_ms",
            "mean_trans_ms",
            "std_trans_ms",
            "mean_total_ms",
            "std_total_ms",
        ],
        rows,
    )?;
    written.push(path);

    let path = dir.join("downtime.csv");
    let rows = summary
        .groups
        .iter()
        .map(|g| {
            let mut row = vec![
                g.app.clone(),
                g.planner.to_string(),
                g.runs.to_string(),
                f6(g.downtime_s.mean),
                f6(g.downtime_s.std),
            ];
            row.extend(g.downtime_by_cause_s.values().map(|v| f6(*v)));
            row
        })
        .collect();
    let mut header = vec![
        "app",
        "planner",
        "runs",
        "mean_downtime_s",
        "std_downtime_s",
    ];
    let cause_cols: Vec<String> = summary
        .groups
        .first()
        .map(|g| {
            g.downtime_by_cause_s
                .keys()
                .map(|k| format!("{k}_s"))
                .collect()
        })
        .unwrap_or_default();
    header.extend(cause_cols.iter().map(String::as_str));
    write_csv(&path, &header, rows)?;
    written.push(path);

    let path = dir.join("reductions.csv");
    let rows = summary
        .reductions
        .iter()
        .map(|r| {
            vec![
                r.app.clone(),
                r.baseline.to_string(),
                f6(100.0 * r.e2e),
                r.downtime.map(|d| f6(100.0 * d)).unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        &path,
        &[
            "app",
            "baseline",
            "e2e_reduction_pct",
            "downtime_reduction_pct",
        ],
        rows,
    )?;
    written.push(path);

    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(m, 20.0);
        assert_eq!(s, 10.0);
        assert_eq!(mean_std(&[4.0]), Some((4.0, 0.0)));
        assert_eq!(mean_std(&[]), None);
    }

    #[test]
    fn reduction_formula() {
        assert!((reduction(77.8, 100.0) - 0.222).abs() < 1e-12);
        assert_eq!(reduction(1.0, 1.0), 0.0);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(summarize(&[]), Err(Error::EmptyInput)));
    }
}
