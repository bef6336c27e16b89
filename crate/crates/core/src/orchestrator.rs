//! Turns a placement decision and its time estimates into trigger times for
//! pre-migration, migration and handover, and watches users for reasons to replan.

use serde::{Deserialize, Serialize};

use crate::migration::MigrationEstimate;
use crate::model::{BsId, ServerId, UserId, WorldState};
use crate::radio;
use crate::scalar::Scalar;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrchestratorConfig {
    /// Safety margin applied to estimated phase durations.
    pub margin: f64,
    /// Planning horizon, s.
    pub horizon_dt_s: f64,
    /// Monitor period, s.
    pub sla_check_period_s: f64,
    /// Smoothing factor of the monitored delays.
    pub ewma_alpha: f64,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            margin: 0.10,
            horizon_dt_s: 30.0,
            sla_check_period_s: 1.0,
            ewma_alpha: 0.3,
        }
    }
}

impl OrchestratorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.margin >= 0.0
            && self.horizon_dt_s > 0.0
            && self.sla_check_period_s > 0.0
            && self.ewma_alpha > 0.0
            && self.ewma_alpha <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invariant {
                entity: "orchestrator".into(),
                reason: "need margin >= 0, horizon_dt_s > 0, sla_check_period_s > 0, \
                         ewma_alpha in (0, 1]"
                    .into(),
            })
        }
    }
}

/// Coordinated schedule for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MigrationPlan<S = f64> {
    pub user: UserId,
    pub src: (BsId, ServerId),
    pub dst: (BsId, ServerId),
    /// Instant by which the user must be on the new base station.
    pub t_ho_need: S,
    pub est: MigrationEstimate<S>,
    pub t_ho_duration: S,
    pub t_trig_pre_mig: S,
    pub t_trig_mig: S,
    pub t_trig_ho: S,
    pub est_downtime: S,
    /// The ideal pre-migration start had already passed when the plan was built.
    pub late: bool,
}

impl<S: Scalar> MigrationPlan<S> {
    pub fn migrates(&self) -> bool {
        self.src.1 != self.dst.1
    }

    pub fn hands_over(&self) -> bool {
        self.src.0 != self.dst.0
    }

    /// Earliest scheduled action.
    pub fn first_trigger(&self) -> S {
        if self.migrates() {
            self.t_trig_pre_mig
        } else {
            self.t_trig_ho
        }
    }
}

/// Schedules pre-migration, migration and handover so the migration ends, with margin,
/// by `t_ho_need` and the handover gap ends together with the migration gap.
///
/// When the ideal pre-migration start lies before `now`, pre-migration starts now, the
/// migration follows as soon as it can and the handover keeps its deadline; the plan is
/// flagged late.
#[allow(clippy::too_many_arguments)]
pub fn build_plan<S: Scalar>(
    user: UserId,
    src: (BsId, ServerId),
    dst: (BsId, ServerId),
    est: MigrationEstimate<S>,
    t_ho_need: S,
    t_ho_duration: S,
    margin: S,
    now: S,
) -> MigrationPlan<S> {
    let migrates = src.1 != dst.1;
    let hands_over = src.0 != dst.0;
    let est = if migrates {
        est
    } else {
        MigrationEstimate::none()
    };
    let t_ho = if hands_over { t_ho_duration } else { S::zero() };
    let k = S::one() + margin;
    let align_ho = |t_trig_mig: S| {
        if est.t_mig >= t_ho {
            t_trig_mig + est.t_mig - t_ho
        } else {
            t_trig_mig
        }
    };

    let mut plan = MigrationPlan {
        user,
        src,
        dst,
        t_ho_need,
        est,
        t_ho_duration: t_ho,
        t_trig_pre_mig: t_ho_need,
        t_trig_mig: t_ho_need,
        t_trig_ho: t_ho_need - t_ho,
        est_downtime: est.t_mig.max(t_ho),
        late: false,
    };
    if !migrates {
        if plan.t_trig_ho < now {
            plan.t_trig_ho = now;
            plan.late = true;
        }
        plan.t_trig_pre_mig = plan.t_trig_ho;
        plan.t_trig_mig = plan.t_trig_ho;
        return plan;
    }

    plan.t_trig_mig = t_ho_need - k * est.t_mig;
    plan.t_trig_pre_mig = plan.t_trig_mig - k * est.t_pre_mig;
    plan.t_trig_ho = align_ho(plan.t_trig_mig);
    if plan.t_trig_pre_mig < now {
        plan.late = true;
        plan.t_trig_pre_mig = now;
        plan.t_trig_mig = plan.t_trig_mig.max(now + est.t_pre_mig);
        plan.t_trig_ho = plan.t_trig_ho.max(now);
        let mig_end = plan.t_trig_mig + est.t_mig;
        let ho_end = plan.t_trig_ho + t_ho;
        let overlap = plan.t_trig_ho < mig_end && plan.t_trig_mig < ho_end;
        plan.est_downtime = if overlap || !hands_over {
            mig_end.max(ho_end) - plan.t_trig_mig.min(plan.t_trig_ho)
        } else {
            est.t_mig + t_ho
        };
    }
    plan
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Supervision {
    Keep,
    Cancel,
}

/// Decides whether a plan that has not started yet still matches the latest handover
/// prediction. Drift beyond `margin` times the planned downtime cancels it.
pub fn supervise<S: Scalar>(
    plan: &MigrationPlan<S>,
    new_t_ho: Option<S>,
    now: S,
    margin: S,
) -> Supervision {
    if now >= plan.first_trigger() || !plan.hands_over() {
        return Supervision::Keep;
    }
    match new_t_ho {
        Some(t)
            if (t - plan.t_ho_need).abs() <= margin * plan.est.t_mig.max(plan.t_ho_duration) =>
        {
            Supervision::Keep
        }
        _ => Supervision::Cancel,
    }
}

/// Why the monitor asks for a new placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanningTrigger {
    /// A handover to `target` is predicted at `t_ho_need`.
    Handover { t_ho_need: f64, target: BsId },
    /// The smoothed delay exceeds the SLA; placement-only replan at `now + horizon`.
    Sla { t_prime: f64 },
}

impl PlanningTrigger {
    pub fn t_prime(&self) -> f64 {
        match *self {
            PlanningTrigger::Handover { t_ho_need, .. } => t_ho_need,
            PlanningTrigger::Sla { t_prime } => t_prime,
        }
    }
}

/// Predicted handover of `user` within the planning horizon, if any.
pub fn predict_user_handover(
    world: &WorldState,
    user: UserId,
) -> Option<radio::HandoverPrediction> {
    let u = world.user(user);
    let candidates: Vec<_> = world.base_stations.iter().collect();
    radio::predict_handover_time(
        u,
        world.bs(u.bs()),
        &candidates,
        world.now,
        world.orchestrator.horizon_dt_s,
        &world.radio,
    )
}

/// One monitor check for `user`.
pub fn monitor_tick(world: &WorldState, user: UserId) -> Option<PlanningTrigger> {
    if let Some(p) = predict_user_handover(world, user) {
        return Some(PlanningTrigger::Handover {
            t_ho_need: p.t_ho,
            target: p.target,
        });
    }
    let u = world.user(user);
    match u.monitor.total_ewma_ms {
        Some(d) if d > u.sla_max_delay_ms => Some(PlanningTrigger::Sla {
            t_prime: world.now + world.orchestrator.horizon_dt_s,
        }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn est(t_mig: f64, t_pre_mig: f64) -> MigrationEstimate {
        MigrationEstimate {
            t_pre_mig,
            t_mig,
            t_total: t_mig + t_pre_mig,
            ..MigrationEstimate::default()
        }
    }

    const SRC: (BsId, ServerId) = (BsId(0), ServerId(0));
    const DST: (BsId, ServerId) = (BsId(1), ServerId(1));

    #[test]
    fn long_migration_ends_with_the_handover() {
        let p = build_plan(UserId(0), SRC, DST, est(1.2, 10.0), 100.0, 0.5, 0.1, 0.0);
        assert_relative_eq!(p.t_trig_mig, 100.0 - 1.32);
        assert_relative_eq!(p.t_trig_pre_mig, p.t_trig_mig - 11.0);
        assert_relative_eq!(p.t_trig_ho - p.t_trig_mig, 0.7, epsilon = 1e-12);
        assert_eq!(p.est_downtime, 1.2);
        assert!(!p.late);
    }

    #[test]
    fn short_migration_starts_with_the_handover() {
        let p = build_plan(UserId(0), SRC, DST, est(0.3, 1.0), 50.0, 0.5, 0.1, 0.0);
        assert_eq!(p.t_trig_ho, p.t_trig_mig);
        assert_eq!(p.est_downtime, 0.5);
    }

    #[test]
    fn handover_only_plan() {
        let dst = (BsId(1), ServerId(0));
        let p = build_plan(UserId(0), SRC, dst, est(1.2, 10.0), 50.0, 0.5, 0.1, 0.0);
        assert!(!p.migrates());
        assert_eq!(p.est_downtime, 0.5);
        assert_eq!(p.t_trig_ho, 49.5);
        assert_eq!(p.est.t_mig, 0.0);
    }

    #[test]
    fn late_plan_starts_now() {
        let p = build_plan(UserId(0), SRC, DST, est(1.0, 40.0), 20.0, 0.5, 0.1, 5.0);
        assert!(p.late);
        assert_eq!(p.t_trig_pre_mig, 5.0);
        assert_eq!(p.t_trig_mig, 45.0);
        assert!(p.est_downtime > 1.0);
    }

    #[test]
    fn supervision_cancels_on_drift_or_vanishing_prediction() {
        let p = build_plan(UserId(0), SRC, DST, est(1.0, 10.0), 100.0, 0.5, 0.1, 0.0);
        assert_eq!(supervise(&p, Some(100.05), 10.0, 0.1), Supervision::Keep);
        assert_eq!(supervise(&p, Some(100.2), 10.0, 0.1), Supervision::Cancel);
        assert_eq!(supervise(&p, None, 10.0, 0.1), Supervision::Cancel);
        // already started: never cancelled
        assert_eq!(supervise(&p, None, 95.0, 0.1), Supervision::Keep);
    }

    #[test]
    fn f32_plans() {
        let e = MigrationEstimate::<f32>::from_parts(0.1, 1.0, 0.5, 0.6);
        let p = build_plan(UserId(0), SRC, DST, e, 20.0f32, 0.5, 0.1, 0.0);
        assert_eq!(p.est_downtime, 1.2f32);
    }
}
