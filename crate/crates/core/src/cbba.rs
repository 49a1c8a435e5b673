//! Consensus-Based Bundle Algorithm adapted to resource selection.
//!
//! Every capacity is represented by one resource agent. For a single
//! application, agents repeatedly
//!
//! 1. extend their bundle greedily with the microservices they can still
//!    host and outbid the current winner on, and
//! 2. exchange their winning-bid vectors `y` (bid values), `z` (winners) and
//!    `s` (per-task logical timestamps) with every other agent.
//!
//! On receipt, an entry is adopted if it is newer, or equally new and
//! better. "Better" is a higher bid, then a higher winner discount, then a
//! lower winner id. Losing a task releases it and every task appended to
//! the bundle after it.
//!
//! Bid values are `1 - cost` for the (microservice, capacity) pair and do not
//! depend on bundle contents, so marginal gains never increase as a bundle
//! grows.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    validate_allocation, Allocation, AllocationFailure, Application, Capacity, CapacityId,
    Location, Resources,
};
use crate::scoring::{self, NormBounds, Weights};

/// Agents are identified by the capacity they represent. Lower ids win ties.
pub type AgentId = CapacityId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CbbaError {
    #[error("message from agent {sender} has vectors of length {found}, expected {expected}")]
    LengthMismatch { sender: AgentId, expected: usize, found: usize },
    #[error("agent {agent}: invariant violated: {detail}")]
    Invariant { agent: AgentId, detail: String },
    #[error("writing trace: {0}")]
    Trace(String),
}

/// Winning-bid vectors broadcast by one agent after its bidding phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusMessage {
    pub sender_id: AgentId,
    pub y: Vec<f64>,
    pub z: Vec<Option<AgentId>>,
    pub s: Vec<u64>,
    pub sender_discount: f64,
}

/// One resource agent's local view for the application being allocated.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub agent_id: AgentId,
    pub capacity: Capacity,
    /// Tasks this agent believes it is winning, in the order they were added.
    pub bundle: Vec<usize>,
    /// Winning bid value per microservice, 0 when unassigned.
    pub y: Vec<f64>,
    /// Winning agent per microservice.
    pub z: Vec<Option<AgentId>>,
    /// Round in which each entry last changed.
    pub s: Vec<u64>,
    pub tentative_remaining: Resources,
    /// Set by the scheduler when the last round modified this state.
    pub changed: bool,
    /// `None` where location or edge exclusivity rule the task out.
    bids: Vec<Option<f64>>,
    demands: Vec<Resources>,
    constrained: Vec<bool>,
    known_discounts: BTreeMap<AgentId, f64>,
}

impl AgentState {
    pub fn new(capacity: &Capacity, app: &Application, w: &Weights, nb: &NormBounds) -> Self {
        let n = app.microservices.len();
        let bids = app
            .microservices
            .iter()
            .map(|ms| scoring::placeable(ms, capacity, app.id).then(|| scoring::utility(ms, capacity, w, nb)))
            .collect();
        Self {
            agent_id: capacity.id,
            capacity: capacity.clone(),
            bundle: Vec::new(),
            y: vec![0.0; n],
            z: vec![None; n],
            s: vec![0; n],
            tentative_remaining: capacity.remaining,
            changed: false,
            bids,
            demands: app.microservices.iter().map(|ms| ms.demand()).collect(),
            constrained: app.microservices.iter().map(|ms| ms.location != Location::Worldwide).collect(),
            known_discounts: BTreeMap::from([(capacity.id, capacity.discount)]),
        }
    }

    pub fn task_count(&self) -> usize {
        self.y.len()
    }

    /// Snapshot of the winning-bid vectors for broadcast.
    pub fn message(&self) -> ConsensusMessage {
        ConsensusMessage {
            sender_id: self.agent_id,
            y: self.y.clone(),
            z: self.z.clone(),
            s: self.s.clone(),
            sender_discount: self.capacity.discount,
        }
    }

    /// True when `(y, z, s, bundle)` differ from `other`'s.
    pub fn differs_from(&self, other: &AgentState) -> bool {
        self.bundle != other.bundle || self.z != other.z || self.s != other.s || self.y != other.y
    }

    fn discount_of(&self, agent: Option<AgentId>) -> f64 {
        agent
            .and_then(|a| self.known_discounts.get(&a).copied())
            .unwrap_or(f64::NEG_INFINITY)
    }

    /// Orders two equally recent bids on one task: higher value, then higher
    /// winner discount, then lower winner id. An unassigned entry loses to
    /// any bid.
    fn compare_bids(&self, a: (f64, Option<AgentId>), b: (f64, Option<AgentId>)) -> Ordering {
        a.0.total_cmp(&b.0)
            .then_with(|| self.discount_of(a.1).total_cmp(&self.discount_of(b.1)))
            .then_with(|| match (a.1, b.1) {
                (Some(x), Some(y)) => y.cmp(&x),
                (Some(_), None) => Ordering::Greater,
                (None, Some(_)) => Ordering::Less,
                (None, None) => Ordering::Equal,
            })
    }

    /// Would this agent's bid `value` on `task` beat the entry it currently holds?
    fn outbids(&self, task: usize, value: f64) -> bool {
        self.compare_bids((value, Some(self.agent_id)), (self.y[task], self.z[task])) == Ordering::Greater
    }

    /// Task order within a bundle: higher bid first; on equal bids prefer
    /// location-constrained tasks, then larger demands, then lower ids.
    fn task_rank(&self, task: usize, value: f64) -> (f64, bool, u64, std::cmp::Reverse<usize>) {
        let d = self.demands[task];
        (value, self.constrained[task], d.cpu + d.ram + d.storage, std::cmp::Reverse(task))
    }

    /// Bidding phase: appends tasks in decreasing bid order while they fit
    /// and outbid the current winner. New entries are stamped `round`.
    pub fn build_bundle(&mut self, round: u64) {
        loop {
            let mut best: Option<(usize, f64)> = None;
            for task in 0..self.task_count() {
                let Some(value) = self.bids[task] else { continue };
                if self.z[task] == Some(self.agent_id)
                    || !self.tentative_remaining.covers(&self.demands[task])
                    || !self.outbids(task, value)
                {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((b, bv)) => {
                        let (r1, r2) = (self.task_rank(task, value), self.task_rank(b, bv));
                        r1.0.total_cmp(&r2.0).then((r1.1, r1.2, r1.3).cmp(&(r2.1, r2.2, r2.3))) == Ordering::Greater
                    }
                };
                if better {
                    best = Some((task, value));
                }
            }
            let Some((task, value)) = best else { break };
            self.bundle.push(task);
            self.y[task] = value;
            self.z[task] = Some(self.agent_id);
            self.s[task] = round;
            self.tentative_remaining = self
                .tentative_remaining
                .checked_sub(&self.demands[task])
                .expect("checked by covers");
        }
    }

    /// Consensus phase for one incoming message.
    ///
    /// Entries naming this agent as winner are ignored: an agent is the
    /// authority on its own bids.
    pub fn resolve(&mut self, msg: &ConsensusMessage, round: u64) -> Result<(), CbbaError> {
        let n = self.task_count();
        for len in [msg.y.len(), msg.z.len(), msg.s.len()] {
            if len != n {
                return Err(CbbaError::LengthMismatch { sender: msg.sender_id, expected: n, found: len });
            }
        }
        self.known_discounts.insert(msg.sender_id, msg.sender_discount);

        for task in 0..n {
            if msg.z[task] == Some(self.agent_id) {
                continue;
            }
            let adopt = match msg.s[task].cmp(&self.s[task]) {
                Ordering::Greater => true,
                Ordering::Equal => {
                    self.compare_bids((msg.y[task], msg.z[task]), (self.y[task], self.z[task])) == Ordering::Greater
                }
                Ordering::Less => false,
            };
            if !adopt {
                continue;
            }
            if self.z[task] == Some(self.agent_id) {
                self.release_from(task, round);
            }
            self.y[task] = msg.y[task];
            self.z[task] = msg.z[task];
            self.s[task] = msg.s[task];
        }
        Ok(())
    }

    /// Drops `task` and every task added after it from the bundle. The
    /// later tasks are reset to unassigned, stamped `round`.
    fn release_from(&mut self, task: usize, round: u64) {
        let Some(pos) = self.bundle.iter().position(|&t| t == task) else {
            return;
        };
        for (i, released) in self.bundle.split_off(pos).into_iter().enumerate() {
            self.tentative_remaining = self.tentative_remaining.saturating_add(&self.demands[released]);
            if i > 0 {
                self.y[released] = 0.0;
                self.z[released] = None;
                self.s[released] = round;
            }
        }
    }

    /// Checks the bundle / vector / reservation invariants.
    pub fn check_invariants(&self) -> Result<(), CbbaError> {
        let fail = |detail: String| Err(CbbaError::Invariant { agent: self.agent_id, detail });
        let mut seen = vec![false; self.task_count()];
        let mut reserved = Resources::ZERO;
        for &t in &self.bundle {
            if std::mem::replace(&mut seen[t], true) {
                return fail(format!("task {t} appears twice in bundle"));
            }
            if self.z[t] != Some(self.agent_id) {
                return fail(format!("bundled task {t} has winner {:?}", self.z[t]));
            }
            reserved = reserved.saturating_add(&self.demands[t]);
        }
        for (t, &bundled) in seen.iter().enumerate() {
            if self.z[t] == Some(self.agent_id) && !bundled {
                return fail(format!("task {t} names this agent but is not bundled"));
            }
            if self.z[t].is_none() && self.y[t] != 0.0 {
                return fail(format!("unassigned task {t} carries bid {}", self.y[t]));
            }
            if self.z[t].is_some() && self.y[t] < 0.0 {
                return fail(format!("task {t} carries negative bid"));
            }
        }
        if self.capacity.remaining.checked_sub(&reserved) != Some(self.tentative_remaining) {
            return fail(format!(
                "tentative_remaining {:?} != remaining {:?} - reserved {:?}",
                self.tentative_remaining, self.capacity.remaining, reserved
            ));
        }
        Ok(())
    }
}

/// Convenience wrapper over [`AgentState::build_bundle`].
pub fn build_bundle(mut state: AgentState, round: u64) -> AgentState {
    state.build_bundle(round);
    state
}

/// Convenience wrapper over [`AgentState::resolve`].
pub fn resolve(mut state: AgentState, msg: &ConsensusMessage, round: u64) -> Result<AgentState, CbbaError> {
    state.resolve(msg, round)?;
    Ok(state)
}

/// All winners lists agree and no agent changed during the last round.
pub fn converged(states: &[AgentState]) -> bool {
    match states.split_first() {
        None => true,
        Some((first, rest)) => !states.iter().any(|s| s.changed) && rest.iter().all(|s| s.z == first.z),
    }
}

/// Turns converged agent states into an allocation.
///
/// The outer error signals a protocol bug (the agreed assignment is not a
/// valid allocation); the inner one is an ordinary allocation failure.
pub fn extract_allocation(
    states: &[AgentState],
    app: &Application,
    w: &Weights,
    nb: &NormBounds,
) -> Result<Result<Allocation, AllocationFailure>, CbbaError> {
    let Some(first) = states.first() else {
        let unplaced: Vec<usize> = app.microservices.iter().map(|ms| ms.id).collect();
        if unplaced.is_empty() {
            return Ok(Ok(crate::baselines::build_allocation(app, &[], &[], w, nb)));
        }
        return Ok(Err(AllocationFailure::NoValidAllocation { unplaced }));
    };
    let unplaced: Vec<usize> = (0..first.task_count()).filter(|&t| first.z[t].is_none()).collect();
    if !unplaced.is_empty() {
        return Ok(Err(AllocationFailure::NoValidAllocation { unplaced }));
    }
    let assignment: Vec<CapacityId> = first.z.iter().map(|z| z.expect("checked above")).collect();
    let caps: Vec<Capacity> = states.iter().map(|s| s.capacity.clone()).collect();
    let alloc = crate::baselines::build_allocation(app, &assignment, &caps, w, nb);
    match validate_allocation(&alloc, app, &caps) {
        Ok(true) => Ok(Ok(alloc)),
        Ok(false) => Err(CbbaError::Invariant {
            agent: first.agent_id,
            detail: format!("agreed assignment {assignment:?} is not a valid allocation"),
        }),
        Err(e) => Err(CbbaError::Invariant { agent: first.agent_id, detail: e.to_string() }),
    }
}

/// Total utility of an allocation: the number of placed microservices minus
/// its (discounted) cost.
pub fn allocation_utility(alloc: &Allocation) -> f64 {
    alloc.assignments.len() as f64 - alloc.total_cost
}
