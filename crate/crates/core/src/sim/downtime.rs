use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::UserId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DowntimeCause {
    Handover,
    Migration,
    Overlap,
    LatePlan,
}

impl DowntimeCause {
    pub const ALL: [DowntimeCause; 4] = [
        DowntimeCause::Handover,
        DowntimeCause::Migration,
        DowntimeCause::Overlap,
        DowntimeCause::LatePlan,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DowntimeCause::Handover => "handover",
            DowntimeCause::Migration => "migration",
            DowntimeCause::Overlap => "overlap",
            DowntimeCause::LatePlan => "late_plan",
        }
    }
}

/// One unmerged outage: a handover gap or a migration freeze.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawInterval {
    pub user: UserId,
    pub episode: u64,
    pub start: f64,
    pub end: f64,
    /// `Handover` or `Migration`.
    pub kind: DowntimeCause,
    pub late: bool,
}

/// A merged outage as seen by the user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DowntimeInterval {
    pub user: UserId,
    /// Episode of the earliest raw interval in the merge.
    pub episode: u64,
    pub start: f64,
    pub end: f64,
    pub cause: DowntimeCause,
}

impl DowntimeInterval {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Merges strictly overlapping raw intervals per user. Intervals that only touch stay
/// separate. The merged cause is `late_plan` if any part came from a late plan, else
/// `overlap` when both kinds contributed, else the single kind.
pub fn merge_intervals(raw: &[RawInterval]) -> Vec<DowntimeInterval> {
    let mut by_user: BTreeMap<UserId, Vec<RawInterval>> = BTreeMap::new();
    for r in raw {
        by_user.entry(r.user).or_default().push(*r);
    }
    let mut out = Vec::new();
    for (user, mut list) in by_user {
        list.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
        let mut iter = list.into_iter();
        let Some(first) = iter.next() else { continue };
        let mut cur = (
            first.episode,
            first.start,
            first.end,
            first.kind,
            first.late,
            false,
        );
        let close = |c: (u64, f64, f64, DowntimeCause, bool, bool)| DowntimeInterval {
            user,
            episode: c.0,
            start: c.1,
            end: c.2,
            cause: if c.4 {
                DowntimeCause::LatePlan
            } else if c.5 {
                DowntimeCause::Overlap
            } else {
                c.3
            },
        };
        for r in iter {
            if r.start < cur.2 {
                cur.2 = cur.2.max(r.end);
                cur.4 |= r.late;
                cur.5 |= r.kind != cur.3;
            } else {
                out.push(close(cur));
                cur = (r.episode, r.start, r.end, r.kind, r.late, false);
            }
        }
        out.push(close(cur));
    }
    out.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.user.cmp(&b.user)));
    out
}

/// Total downtime per user and per cause.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DowntimeTotals {
    pub per_user: BTreeMap<UserId, f64>,
    pub per_cause: BTreeMap<DowntimeCause, f64>,
    pub total: f64,
}

pub fn account_downtime(intervals: &[DowntimeInterval]) -> DowntimeTotals {
    let mut t = DowntimeTotals::default();
    for i in intervals {
        *t.per_user.entry(i.user).or_default() += i.duration();
        *t.per_cause.entry(i.cause).or_default() += i.duration();
        t.total += i.duration();
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(start: f64, end: f64, kind: DowntimeCause) -> RawInterval {
        RawInterval {
            user: UserId(0),
            episode: 1,
            start,
            end,
            kind,
            late: false,
        }
    }

    #[test]
    fn disjoint_gaps_add_up() {
        let merged = merge_intervals(&[
            raw(10.0, 10.5, DowntimeCause::Handover),
            raw(20.0, 21.2, DowntimeCause::Migration),
        ]);
        assert_eq!(merged.len(), 2);
        let t = account_downtime(&merged);
        assert!((t.total - 1.7).abs() < 1e-12);
        assert_eq!(t.per_cause[&DowntimeCause::Handover], 0.5);
    }

    #[test]
    fn nested_gaps_merge_to_the_longer() {
        let merged = merge_intervals(&[
            raw(10.0, 11.2, DowntimeCause::Migration),
            raw(10.7, 11.2, DowntimeCause::Handover),
        ]);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].cause, DowntimeCause::Overlap);
        assert!((merged[0].duration() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn touching_gaps_stay_apart() {
        let merged = merge_intervals(&[
            raw(0.0, 0.5, DowntimeCause::Handover),
            raw(0.5, 1.0, DowntimeCause::Migration),
        ]);
        assert_eq!(merged.len(), 2);
    }

    #[test]
    fn no_gaps() {
        assert!(merge_intervals(&[]).is_empty());
        assert_eq!(account_downtime(&[]).total, 0.0);
    }
}
