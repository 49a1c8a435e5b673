//! Centralised allocators: exhaustive enumeration of offers (optimal) and
//! the first-fit heuristic.

use std::collections::BTreeMap;

use crate::domain::{AllocationFailure, Allocation, Application, Capacity, CapacityId, QosVector, Resources};
use crate::scoring::{self, NormBounds, Weights};

/// Default ceiling on the number of candidate allocations (the size of the
/// Cartesian product of per-microservice offers).
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 100_000_000;

/// A resource agent's statement that it can host one microservice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Offer {
    pub capacity_id: CapacityId,
    pub microservice_id: usize,
}

/// One offer per feasible (microservice, capacity) pair, ordered by capacity
/// then microservice.
pub fn collect_offers(app: &Application, caps: &[Capacity]) -> Vec<Offer> {
    caps.iter()
        .flat_map(|cap| {
            app.microservices
                .iter()
                .filter(move |ms| scoring::feasible(ms, cap, app.id))
                .map(move |ms| Offer { capacity_id: cap.id, microservice_id: ms.id })
        })
        .collect()
}

/// Counters from one exhaustive run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnumerationStats {
    /// Size of the Cartesian product of per-microservice offer sets.
    pub product: u128,
    /// Complete, jointly feasible assignments that were scored.
    pub candidates: u64,
}

pub fn centralised_exhaustive(
    app: &Application,
    caps: &[Capacity],
    w: &Weights,
    nb: &NormBounds,
) -> Result<Allocation, AllocationFailure> {
    centralised_exhaustive_with_budget(app, caps, w, nb, DEFAULT_ENUMERATION_BUDGET).0
}

struct Choice {
    cap: usize,
    terms: QosVector,
}

struct Search<'a> {
    app: &'a Application,
    caps: &'a [Capacity],
    w: &'a Weights,
    options: Vec<Vec<Choice>>,
    load: Vec<Resources>,
    hosted: Vec<u32>,
    current: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
    candidates: u64,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize) {
        if depth == self.options.len() {
            self.score_leaf();
            return;
        }
        let demand = self.app.microservices[depth].demand();
        for k in 0..self.options[depth].len() {
            let cap = self.options[depth][k].cap;
            let load = self.load[cap].saturating_add(&demand);
            if !self.caps[cap].remaining.covers(&load) {
                continue;
            }
            let saved = std::mem::replace(&mut self.load[cap], load);
            self.hosted[cap] += 1;
            self.current.push(k);
            self.descend(depth + 1);
            self.current.pop();
            self.hosted[cap] -= 1;
            self.load[cap] = saved;
        }
    }

    fn score_leaf(&mut self) {
        self.candidates += 1;
        let mut cost = 0.0;
        for (depth, &k) in self.current.iter().enumerate() {
            let opt = &self.options[depth][k];
            let factor = scoring::discount_factor(&self.caps[opt.cap], self.hosted[opt.cap] >= 2);
            cost += scoring::weighted_cost(&opt.terms, factor, self.w);
        }
        // strict improvement keeps the lexicographically smallest assignment among ties
        if self.best.as_ref().is_none_or(|(b, _)| cost < *b) {
            self.best = Some((cost, self.current.clone()));
        }
    }
}

/// Exhaustive search with an explicit candidate budget.
///
/// Enumerates per-microservice feasible capacities depth first in capacity
/// order, pruning any branch that overcommits a capacity, and returns the
/// minimum-cost allocation. Ties go to the lexicographically smallest
/// assignment vector. If the Cartesian product of offers exceeds `budget`
/// the search is not started.
pub fn centralised_exhaustive_with_budget(
    app: &Application,
    caps: &[Capacity],
    w: &Weights,
    nb: &NormBounds,
    budget: u64,
) -> (Result<Allocation, AllocationFailure>, EnumerationStats) {
    let options: Vec<Vec<Choice>> = app
        .microservices
        .iter()
        .map(|ms| {
            caps.iter()
                .enumerate()
                .filter(|(_, cap)| scoring::feasible(ms, cap, app.id))
                .map(|(cap, c)| Choice { cap, terms: scoring::qos_terms(ms, c, nb) })
                .collect()
        })
        .collect();

    let product = options.iter().fold(1u128, |acc, o| acc.saturating_mul(o.len() as u128));
    let mut stats = EnumerationStats { product, candidates: 0 };
    let unplaced: Vec<usize> =
        options.iter().enumerate().filter(|(_, o)| o.is_empty()).map(|(i, _)| i).collect();
    if !unplaced.is_empty() {
        return (Err(AllocationFailure::NoValidAllocation { unplaced }), stats);
    }
    if product > budget as u128 {
        return (Err(AllocationFailure::EnumerationBudgetExceeded { candidates: product, budget }), stats);
    }

    let mut search = Search {
        app,
        caps,
        w,
        load: vec![Resources::ZERO; caps.len()],
        hosted: vec![0; caps.len()],
        current: Vec::with_capacity(options.len()),
        options,
        best: None,
        candidates: 0,
    };
    search.descend(0);
    stats.candidates = search.candidates;

    let result = match search.best {
        Some((_, picks)) => {
            let assignment: Vec<CapacityId> = picks
                .iter()
                .enumerate()
                .map(|(depth, &k)| caps[search.options[depth][k].cap].id)
                .collect();
            Ok(build_allocation(app, &assignment, caps, w, nb))
        }
        None => Err(AllocationFailure::NoValidAllocation { unplaced: Vec::new() }),
    };
    (result, stats)
}

/// First-fit: each microservice in id order takes the first capacity (in
/// offer order) that still fits after the reservations made for earlier
/// microservices of the same application. No backtracking.
pub fn first_fit(
    app: &Application,
    caps: &[Capacity],
    w: &Weights,
    nb: &NormBounds,
) -> Result<Allocation, AllocationFailure> {
    let mut reserved = vec![Resources::ZERO; caps.len()];
    let mut assignment = Vec::with_capacity(app.microservices.len());
    for ms in &app.microservices {
        let slot = caps.iter().enumerate().find(|(i, cap)| {
            cap.remaining
                .checked_sub(&reserved[*i])
                .is_some_and(|left| scoring::feasible_with(ms, cap, app.id, &left))
        });
        let Some((i, cap)) = slot else {
            return Err(AllocationFailure::NoValidAllocation { unplaced: vec![ms.id] });
        };
        reserved[i] = reserved[i].saturating_add(&ms.demand());
        assignment.push(cap.id);
    }
    Ok(build_allocation(app, &assignment, caps, w, nb))
}

/// Wraps a complete assignment vector into a scored [`Allocation`].
pub(crate) fn build_allocation(
    app: &Application,
    assignment: &[CapacityId],
    caps: &[Capacity],
    w: &Weights,
    nb: &NormBounds,
) -> Allocation {
    let cost = scoring::assignment_cost(app, assignment, caps, w, nb)
        .expect("assignment covers the application and references known capacities");
    Allocation {
        application_id: app.id,
        assignments: assignment.iter().copied().enumerate().collect::<BTreeMap<_, _>>(),
        total_cost: cost.total,
        qos_breakdown: cost.qos,
    }
}
