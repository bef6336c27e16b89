//! Exact search over per-user candidate lists under capacity constraints.

use crate::model::{BsId, Resources, ServerId, UserId};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// One feasible `(base station, server)` pair for a user, with its gain and cost terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<S = f64> {
    pub bs: BsId,
    pub server: ServerId,
    /// Estimated delay gain, ms·tasks.
    pub gain: S,
    /// Estimated downtime, s.
    pub cost: S,
}

/// Placement instance. Candidate lists are already filtered by the RSSI floor and are
/// given in preference order; capacities are what remains after users not being placed.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementProblem<S = f64> {
    pub users: Vec<UserId>,
    pub candidates: Vec<Vec<Candidate<S>>>,
    /// Container demand per user.
    pub demands: Vec<Resources<S>>,
    /// Residual capacity, indexed by `ServerId`.
    pub server_capacity: Vec<Resources<S>>,
    /// Residual user slots, indexed by `BsId`.
    pub bs_capacity: Vec<usize>,
    /// Converts seconds of downtime into the gain unit.
    pub cost_weight: S,
    /// Planning instant per user.
    pub t_prime: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementSolution<S = f64> {
    /// Chosen `(bs, server)` per user, in problem order.
    pub assignment: Vec<(BsId, ServerId)>,
    /// Index into each user's candidate list.
    pub choice: Vec<usize>,
    pub objective: S,
    /// False when the node budget ran out before the search completed.
    pub optimal: bool,
}

impl<S: Scalar> PlacementProblem<S> {
    pub fn profit(&self, user: usize, candidate: usize) -> S {
        let c = &self.candidates[user][candidate];
        c.gain - self.cost_weight * c.cost
    }

    /// Objective of a choice vector, summed in user order.
    pub fn objective(&self, choice: &[usize]) -> S {
        choice
            .iter()
            .enumerate()
            .fold(S::zero(), |acc, (u, &c)| acc + self.profit(u, c))
    }

    fn solution(&self, choice: Vec<usize>, optimal: bool) -> PlacementSolution<S> {
        PlacementSolution {
            assignment: choice
                .iter()
                .enumerate()
                .map(|(u, &c)| {
                    let cand = &self.candidates[u][c];
                    (cand.bs, cand.server)
                })
                .collect(),
            objective: self.objective(&choice),
            choice,
            optimal,
        }
    }

    fn check_nonempty(&self) -> Result<()> {
        match self.candidates.iter().position(|c| c.is_empty()) {
            Some(u) => Err(Error::NoCandidate(self.users[u].to_string())),
            None => Ok(()),
        }
    }
}

/// Running resource usage while assigning users in order.
struct Usage<S> {
    servers: Vec<Resources<S>>,
    bs: Vec<usize>,
}

impl<S: Scalar> Usage<S> {
    fn new(p: &PlacementProblem<S>) -> Self {
        Usage {
            servers: vec![Resources::zero(); p.server_capacity.len()],
            bs: vec![0; p.bs_capacity.len()],
        }
    }

    fn admits(&self, p: &PlacementProblem<S>, user: usize, c: &Candidate<S>) -> bool {
        let (s, b) = (c.server.0, c.bs.0);
        self.bs[b] < p.bs_capacity[b]
            && (self.servers[s] + p.demands[user]).fits_within(&p.server_capacity[s])
    }

    fn push(&mut self, p: &PlacementProblem<S>, user: usize, c: &Candidate<S>) -> Resources<S> {
        let prev = self.servers[c.server.0];
        self.servers[c.server.0] = prev + p.demands[user];
        self.bs[c.bs.0] += 1;
        prev
    }

    fn pop(&mut self, c: &Candidate<S>, prev: Resources<S>) {
        self.servers[c.server.0] = prev;
        self.bs[c.bs.0] -= 1;
    }
}

struct Search<'a, S> {
    p: &'a PlacementProblem<S>,
    order: Vec<Vec<usize>>,
    /// `bound[u]` = sum of best profits of users `u..`.
    bound: Vec<S>,
    slack: S,
    usage: Usage<S>,
    current: Vec<usize>,
    best: Option<(S, Vec<usize>)>,
    nodes: u64,
    budget: u64,
    exhausted: bool,
}

impl<S: Scalar> Search<'_, S> {
    fn descend(&mut self, u: usize, partial: S) {
        if u == self.p.users.len() {
            if self.best.as_ref().is_none_or(|(b, _)| partial > *b) {
                self.best = Some((partial, self.current.clone()));
            }
            return;
        }
        if let Some((best, _)) = &self.best {
            if partial + self.bound[u] + self.slack < *best {
                return;
            }
        }
        for k in 0..self.order[u].len() {
            if self.nodes >= self.budget {
                self.exhausted = true;
                return;
            }
            self.nodes += 1;
            let ci = self.order[u][k];
            let c = self.p.candidates[u][ci];
            if !self.usage.admits(self.p, u, &c) {
                continue;
            }
            let prev = self.usage.push(self.p, u, &c);
            self.current.push(ci);
            self.descend(u + 1, partial + self.p.profit(u, ci));
            self.current.pop();
            self.usage.pop(&c, prev);
        }
    }
}

/// Profit-maximal assignment by depth-first branch and bound.
///
/// Candidates are explored best-profit first, ties in list order, so among equally good
/// assignments the earliest-listed pairs win. When `node_budget` runs out the best
/// assignment found so far is returned with `optimal = false`.
pub fn solve<S: Scalar>(
    problem: &PlacementProblem<S>,
    node_budget: u64,
) -> Result<PlacementSolution<S>> {
    problem.check_nonempty()?;
    let n = problem.users.len();
    let order: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            let mut idx: Vec<usize> = (0..problem.candidates[u].len()).collect();
            idx.sort_by(|&a, &b| {
                problem
                    .profit(u, b)
                    .partial_cmp(&problem.profit(u, a))
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            idx
        })
        .collect();
    let mut bound = vec![S::zero(); n + 1];
    let mut scale = S::one();
    for u in (0..n).rev() {
        bound[u] = bound[u + 1] + problem.profit(u, order[u][0]);
        for c in 0..problem.candidates[u].len() {
            scale += problem.profit(u, c).abs();
        }
    }
    // absorbs rounding differences between the bound and true partial sums
    let slack = S::epsilon() * S::lit(16.0 * (n as f64 + 1.0)) * scale;
    let mut search = Search {
        p: problem,
        order,
        bound,
        slack,
        usage: Usage::new(problem),
        current: Vec::with_capacity(n),
        best: None,
        nodes: 0,
        budget: node_budget,
        exhausted: false,
    };
    search.descend(0, S::zero());
    let optimal = !search.exhausted;
    match search.best {
        Some((_, choice)) => Ok(problem.solution(choice, optimal)),
        None if n == 0 => Ok(problem.solution(Vec::new(), true)),
        None => Err(Error::NoCandidate(if optimal {
            "no assignment satisfies the capacity constraints".to_string()
        } else {
            "search budget exhausted before a feasible assignment was found".to_string()
        })),
    }
}

/// Largest instance [`brute_force`] accepts, in candidate combinations.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Exhaustive enumeration; the reference answer for [`solve`].
pub fn brute_force<S: Scalar>(problem: &PlacementProblem<S>) -> Result<PlacementSolution<S>> {
    problem.check_nonempty()?;
    let combos = problem
        .candidates
        .iter()
        .fold(1u128, |acc, c| acc.saturating_mul(c.len() as u128));
    if combos > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge(combos));
    }
    let n = problem.users.len();
    let mut choice = vec![0usize; n];
    let mut best: Option<(S, Vec<usize>)> = None;
    loop {
        if feasible_choice(problem, &choice) {
            let value = problem.objective(&choice);
            if best.as_ref().is_none_or(|(b, _)| value > *b) {
                best = Some((value, choice.clone()));
            }
        }
        // odometer increment
        let mut u = n;
        loop {
            if u == 0 {
                return match best {
                    Some((_, c)) => Ok(problem.solution(c, true)),
                    None => Err(Error::NoCandidate(
                        "no assignment satisfies the capacity constraints".to_string(),
                    )),
                };
            }
            u -= 1;
            choice[u] += 1;
            if choice[u] < problem.candidates[u].len() {
                break;
            }
            choice[u] = 0;
        }
    }
}

fn feasible_choice<S: Scalar>(p: &PlacementProblem<S>, choice: &[usize]) -> bool {
    let mut usage = Usage::new(p);
    choice.iter().enumerate().all(|(u, &ci)| {
        let c = p.candidates[u][ci];
        let ok = usage.admits(p, u, &c);
        usage.push(p, u, &c);
        ok
    })
}

/// Independent check of one-pair-per-user, server capacity, RSSI-floor membership and
/// base-station caps, plus the reported objective.
pub fn verify<S: Scalar>(
    problem: &PlacementProblem<S>,
    solution: &PlacementSolution<S>,
) -> std::result::Result<(), String> {
    let n = problem.users.len();
    if solution.assignment.len() != n || solution.choice.len() != n {
        return Err(format!(
            "expected one pair per user ({n}), got {}",
            solution.assignment.len()
        ));
    }
    let mut load = vec![Resources::<S>::zero(); problem.server_capacity.len()];
    let mut attached = vec![0usize; problem.bs_capacity.len()];
    for (u, (&(bs, server), &ci)) in solution.assignment.iter().zip(&solution.choice).enumerate() {
        let Some(c) = problem.candidates[u].get(ci) else {
            return Err(format!("user {u}: choice {ci} out of range"));
        };
        if (c.bs, c.server) != (bs, server) {
            return Err(format!(
                "user {u}: assignment does not match candidate {ci}"
            ));
        }
        load[server.0] = load[server.0] + problem.demands[u];
        attached[bs.0] += 1;
    }
    for (s, (l, cap)) in load.iter().zip(&problem.server_capacity).enumerate() {
        if !l.fits_within(cap) {
            return Err(format!("server {s} over capacity"));
        }
    }
    for (b, (n, cap)) in attached.iter().zip(&problem.bs_capacity).enumerate() {
        if n > cap {
            return Err(format!("base station {b} serves {n} users, cap {cap}"));
        }
    }
    if problem.objective(&solution.choice) != solution.objective {
        return Err("reported objective differs from recomputed profit".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(cpu: f64) -> Resources {
        Resources {
            cpu,
            memory: 0.0,
            storage: 0.0,
            net_io: 0.0,
        }
    }

    fn cand(server: usize, gain: f64) -> Candidate {
        Candidate {
            bs: BsId(0),
            server: ServerId(server),
            gain,
            cost: 0.0,
        }
    }

    fn problem(candidates: Vec<Vec<Candidate>>, caps: Vec<f64>) -> PlacementProblem {
        let n = candidates.len();
        PlacementProblem {
            users: (0..n).map(UserId).collect(),
            candidates,
            demands: vec![res(1.0); n],
            server_capacity: caps.into_iter().map(res).collect(),
            bs_capacity: vec![16],
            cost_weight: 1000.0,
            t_prime: vec![0.0; n],
        }
    }

    #[test]
    fn single_user_takes_the_argmax() {
        let p = problem(vec![vec![cand(0, 3.0), cand(1, 5.0)]], vec![1.0, 1.0]);
        let s = solve(&p, 1_000).unwrap();
        assert_eq!(s.assignment, vec![(BsId(0), ServerId(1))]);
        assert_eq!(s.objective, 5.0);
        assert!(s.optimal);
    }

    #[test]
    fn contention_goes_to_the_higher_profit_user() {
        // enumerated by hand: (0,0) infeasible, (0,1)=10+1, (1,0)=2+8, (1,1) infeasible
        let p = problem(
            vec![
                vec![cand(0, 10.0), cand(1, 2.0)],
                vec![cand(0, 8.0), cand(1, 1.0)],
            ],
            vec![1.0, 1.0],
        );
        let s = solve(&p, 1_000).unwrap();
        assert_eq!(s.objective, 11.0);
        assert_eq!(s.assignment[0].1, ServerId(0));
        assert_eq!(brute_force(&p).unwrap().objective, 11.0);
        verify(&p, &s).unwrap();
    }

    #[test]
    fn cost_is_weighted() {
        let mut p = problem(vec![vec![cand(0, 0.0), cand(1, 2000.0)]], vec![1.0, 1.0]);
        p.candidates[0][1].cost = 1.2;
        let s = solve(&p, 1_000).unwrap();
        assert_eq!(s.choice, vec![1]);
        assert_eq!(s.objective, 2000.0 - 1200.0);
    }

    #[test]
    fn empty_instances() {
        let p = problem(vec![], vec![1.0]);
        let s = brute_force(&p).unwrap();
        assert!(s.assignment.is_empty());
        assert_eq!(s.objective, 0.0);
        assert_eq!(solve(&p, 10).unwrap().objective, 0.0);

        let p = problem(vec![vec![]], vec![1.0]);
        assert!(matches!(solve(&p, 10), Err(Error::NoCandidate(_))));
    }

    #[test]
    fn ties_keep_list_order() {
        let p = problem(vec![vec![cand(2, 1.0), cand(0, 1.0)]], vec![1.0; 3]);
        assert_eq!(solve(&p, 100).unwrap().choice, vec![0]);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let p = problem(vec![vec![cand(0, 1.0), cand(1, 2.0)]; 4], vec![4.0, 4.0]);
        let s = solve(&p, 5).unwrap();
        assert!(!s.optimal);
        assert_eq!(s.objective, 8.0);
        assert!(solve(&p, 1_000).unwrap().optimal);
    }

    #[test]
    fn too_large_for_brute_force() {
        let p = problem(vec![vec![cand(0, 1.0); 10]; 7], vec![100.0]);
        assert!(matches!(
            brute_force(&p),
            Err(Error::InstanceTooLarge(10_000_000))
        ));
    }

    #[test]
    fn f32_instances_solve() {
        let p = PlacementProblem::<f32> {
            users: vec![UserId(0)],
            candidates: vec![vec![
                Candidate {
                    bs: BsId(0),
                    server: ServerId(0),
                    gain: 1.5,
                    cost: 0.0,
                },
                Candidate {
                    bs: BsId(0),
                    server: ServerId(1),
                    gain: 2.5,
                    cost: 0.0,
                },
            ]],
            demands: vec![Resources::zero()],
            server_capacity: vec![Resources::zero(); 2],
            bs_capacity: vec![1],
            cost_weight: 1.0,
            t_prime: vec![0.0],
        };
        assert_eq!(solve(&p, 100).unwrap().objective, 2.5f32);
    }
}
