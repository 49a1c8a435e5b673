//! Feasibility, QoS normalisation, the allocation cost (minimised by the
//! centralised allocators) and the bidding utility (maximised by CBBA).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Allocation, AppId, Application, Capacity, CapacityId, CapacityKind, Location, Microservice, QosVector,
    Resources,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("weights must be non-negative and sum to 1 (sum = {0})")]
    InvalidWeights(f64),
    #[error("normalisation bounds for {0} must satisfy min < max")]
    InvalidBounds(&'static str),
    #[error("microservice {0} is not assigned")]
    IncompleteAllocation(usize),
    #[error("unknown capacity id {0}")]
    UnknownCapacity(CapacityId),
}

/// Relative importance of each QoS attribute in the cost function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub w_price: f64,
    pub w_energy: f64,
    pub w_bandwidth: f64,
    pub w_latency: f64,
}

impl Default for Weights {
    /// Balanced configuration.
    fn default() -> Self {
        Self { w_price: 0.25, w_energy: 0.25, w_bandwidth: 0.25, w_latency: 0.25 }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<(), ScoringError> {
        let all = [self.w_price, self.w_energy, self.w_bandwidth, self.w_latency];
        let sum: f64 = all.iter().sum();
        if all.iter().any(|w| w.is_nan() || *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(ScoringError::InvalidWeights(sum));
        }
        Ok(())
    }
}

/// Inclusive (min, max) range of one attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub min: f64,
    pub max: f64,
}

impl Bound {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn scale(&self, value: f64) -> f64 {
        ((value - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }
}

/// Min-max normalisation ranges. The defaults are the generator's ranges, so
/// every agent normalises against the same static bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormBounds {
    /// Unit price range, over all regions.
    pub price: Bound,
    /// Unit energy range.
    pub energy: Bound,
    pub bandwidth: Bound,
    pub latency: Bound,
}

impl Default for NormBounds {
    fn default() -> Self {
        Self {
            price: Bound::new(0.05, 1.0),
            energy: Bound::new(1.0, 10.0),
            bandwidth: Bound::new(100.0, 1000.0),
            latency: Bound::new(50.0, 200.0),
        }
    }
}

impl NormBounds {
    pub fn validate(&self) -> Result<(), ScoringError> {
        for (name, b) in [
            ("price", self.price),
            ("energy", self.energy),
            ("bandwidth", self.bandwidth),
            ("latency", self.latency),
        ] {
            if b.min.partial_cmp(&b.max) != Some(std::cmp::Ordering::Less) {
                return Err(ScoringError::InvalidBounds(name));
            }
        }
        Ok(())
    }
}

/// Weights and bounds bundled together, as read from a `--config` file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub weights: Weights,
    pub bounds: NormBounds,
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), ScoringError> {
        self.weights.validate()?;
        self.bounds.validate()
    }
}

/// Location, exclusivity and quota check of one microservice against a capacity.
pub fn feasible(ms: &Microservice, cap: &Capacity, app_id: AppId) -> bool {
    feasible_with(ms, cap, app_id, &cap.remaining)
}

/// As [`feasible`], but against an explicit remaining-resource view (used by
/// allocators that hold tentative reservations).
pub fn feasible_with(ms: &Microservice, cap: &Capacity, app_id: AppId, remaining: &Resources) -> bool {
    placeable(ms, cap, app_id) && remaining.covers(&ms.demand())
}

/// The quota-independent part of feasibility: location and edge exclusivity.
pub fn placeable(ms: &Microservice, cap: &Capacity, app_id: AppId) -> bool {
    let location_ok = ms.location == Location::Worldwide || ms.location == cap.location;
    let exclusive_ok = match cap.kind {
        CapacityKind::Cloud => true,
        CapacityKind::Edge => cap.occupied_by.is_none_or(|owner| owner == app_id),
    };
    location_ok && exclusive_ok
}

/// Price of running `ms` on `cap`: unit price × (cpu + ram) × running time.
pub fn raw_price(ms: &Microservice, cap: &Capacity) -> f64 {
    cap.qos.price * demand_time(ms)
}

/// Energy of running `ms` on `cap`, same shape as [`raw_price`].
pub fn raw_energy(ms: &Microservice, cap: &Capacity) -> f64 {
    cap.qos.energy * demand_time(ms)
}

fn demand_time(ms: &Microservice) -> f64 {
    (ms.cpu + ms.ram) as f64 * ms.running_time as f64
}

/// Normalised QoS terms for placing `ms` on `cap`, each in `[0, 1]`, lower is better.
///
/// Price and energy are normalised against the task-specific range
/// `[unit_min × demand × time, unit_max × demand × time]`. The demand-time
/// factor cancels, so the result equals the min-max scaled unit value; that
/// form is used directly so zero-duration tasks stay well defined.
/// Bandwidth is inverted because more bandwidth is better.
pub fn qos_terms(_ms: &Microservice, cap: &Capacity, nb: &NormBounds) -> QosVector {
    QosVector {
        price: nb.price.scale(cap.qos.price),
        energy: nb.energy.scale(cap.qos.energy),
        bandwidth: 1.0 - nb.bandwidth.scale(cap.qos.bandwidth),
        latency: nb.latency.scale(cap.qos.latency),
    }
}

/// Weighted sum of normalised terms with the price term scaled by `price_factor`.
///
/// Every cost in the crate goes through this function so that the enumerator
/// and [`allocation_cost`] agree bit for bit.
#[inline]
pub fn weighted_cost(terms: &QosVector, price_factor: f64, w: &Weights) -> f64 {
    w.w_price * terms.price * price_factor
        + w.w_energy * terms.energy
        + w.w_bandwidth * terms.bandwidth
        + w.w_latency * terms.latency
}

/// Cost in `[0, 1]` of placing a single microservice, without any discount.
pub fn ms_cost(ms: &Microservice, cap: &Capacity, w: &Weights, nb: &NormBounds) -> f64 {
    weighted_cost(&qos_terms(ms, cap, nb), 1.0, w)
}

/// Total cost and per-attribute sums of an application's allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub total: f64,
    pub qos: QosVector,
}

/// Sum of per-microservice costs. Where a capacity hosts two or more of the
/// application's microservices, each of their normalised price terms is
/// multiplied by `1 - discount`.
pub fn allocation_cost(
    alloc: &Allocation,
    app: &Application,
    caps: &[Capacity],
    w: &Weights,
    nb: &NormBounds,
) -> Result<CostBreakdown, ScoringError> {
    let assignment = app
        .microservices
        .iter()
        .map(|ms| alloc.assignments.get(&ms.id).copied().ok_or(ScoringError::IncompleteAllocation(ms.id)))
        .collect::<Result<Vec<_>, _>>()?;
    assignment_cost(app, &assignment, caps, w, nb)
}

/// [`allocation_cost`] for an assignment vector in microservice order.
pub fn assignment_cost(
    app: &Application,
    assignment: &[CapacityId],
    caps: &[Capacity],
    w: &Weights,
    nb: &NormBounds,
) -> Result<CostBreakdown, ScoringError> {
    if let Some(ms) = app.microservices.get(assignment.len()) {
        return Err(ScoringError::IncompleteAllocation(ms.id));
    }
    let index = crate::domain::capacity_index(caps);
    let placed = assignment
        .iter()
        .map(|id| index.get(id).copied().ok_or(ScoringError::UnknownCapacity(*id)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut total = 0.0;
    let mut qos = QosVector::default();
    for (ms, &pos) in app.microservices.iter().zip(&placed) {
        let shared = placed.iter().filter(|&&p| p == pos).count() >= 2;
        let factor = discount_factor(&caps[pos], shared);
        let terms = qos_terms(ms, &caps[pos], nb);
        total += weighted_cost(&terms, factor, w);
        qos += QosVector { price: terms.price * factor, ..terms };
    }
    Ok(CostBreakdown { total, qos })
}

/// Multiplier on the price term: `1 - discount` when consolidated, else 1.
#[inline]
pub fn discount_factor(cap: &Capacity, consolidated: bool) -> f64 {
    if consolidated {
        1.0 - cap.discount
    } else {
        1.0
    }
}

/// Bidding utility of a feasible placement: `1 - ms_cost`.
///
/// The consolidation discount is not part of the bid, so the value depends
/// only on the (microservice, capacity) pair.
pub fn utility(ms: &Microservice, cap: &Capacity, w: &Weights, nb: &NormBounds) -> f64 {
    1.0 - ms_cost(ms, cap, w, nb)
}

/// Utility if `ms` is feasible on `cap` for `app_id`, else the no-bid value 0.
pub fn bid_utility(ms: &Microservice, cap: &Capacity, app_id: AppId, w: &Weights, nb: &NormBounds) -> f64 {
    if feasible(ms, cap, app_id) {
        utility(ms, cap, w, nb)
    } else {
        0.0
    }
}

/// Gain from appending `ms` to an agent's `bundle`. Bundle contents do not
/// affect the value.
pub fn marginal_utility(
    ms: &Microservice,
    _bundle: &[&Microservice],
    cap: &Capacity,
    w: &Weights,
    nb: &NormBounds,
) -> f64 {
    utility(ms, cap, w, nb)
}
