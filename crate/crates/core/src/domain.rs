//! Core data types shared by the allocators, the scenario generator and the
//! experiment harness.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring;

/// Version tag written into every scenario file.
pub const SPEC_VERSION: u32 = 1;

/// Globally unique application identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AppId(pub u64);

/// Globally unique capacity identifier. Resource agents are keyed by the
/// capacity they represent, so this also serves as the agent id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CapacityId(pub u64);

impl fmt::Display for AppId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for CapacityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Geographic region. `Worldwide` only appears as a microservice requirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Location {
    EU,
    US,
    Asia,
    Worldwide,
}

impl Location {
    /// Regions a capacity may be located in.
    pub const REGIONS: [Location; 3] = [Location::EU, Location::US, Location::Asia];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CapacityKind {
    Cloud,
    Edge,
}

/// A (cpu, ram, storage) triple. Used both for demands and for quotas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resources {
    pub cpu: u64,
    pub ram: u64,
    pub storage: u64,
}

impl Resources {
    pub const ZERO: Resources = Resources { cpu: 0, ram: 0, storage: 0 };

    pub fn new(cpu: u64, ram: u64, storage: u64) -> Self {
        Self { cpu, ram, storage }
    }

    /// True when every dimension of `demand` fits inside `self`.
    pub fn covers(&self, demand: &Resources) -> bool {
        self.cpu >= demand.cpu && self.ram >= demand.ram && self.storage >= demand.storage
    }

    pub fn checked_sub(&self, other: &Resources) -> Option<Resources> {
        Some(Resources {
            cpu: self.cpu.checked_sub(other.cpu)?,
            ram: self.ram.checked_sub(other.ram)?,
            storage: self.storage.checked_sub(other.storage)?,
        })
    }

    pub fn saturating_add(&self, other: &Resources) -> Resources {
        Resources {
            cpu: self.cpu.saturating_add(other.cpu),
            ram: self.ram.saturating_add(other.ram),
            storage: self.storage.saturating_add(other.storage),
        }
    }
}

/// One component of an application.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Microservice {
    pub id: usize,
    pub cpu: u64,
    pub ram: u64,
    pub storage: u64,
    pub location: Location,
    pub running_time: u64,
}

impl Microservice {
    pub fn demand(&self) -> Resources {
        Resources::new(self.cpu, self.ram, self.storage)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Application {
    pub id: AppId,
    pub microservices: Vec<Microservice>,
}

/// Per-unit QoS attributes of a capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosProfile {
    /// Currency per resource unit per time unit.
    pub price: f64,
    /// Watts per resource unit per time unit.
    pub energy: f64,
    /// Mbps.
    pub bandwidth: f64,
    /// Milliseconds.
    pub latency: f64,
}

/// A provider's resource pool, represented in the network by one resource agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capacity {
    pub id: CapacityId,
    pub kind: CapacityKind,
    pub cpu_quota: u64,
    pub ram_quota: u64,
    pub storage_quota: u64,
    pub location: Location,
    pub qos: QosProfile,
    /// Fraction of the price waived when several microservices of one
    /// application land on this capacity.
    pub discount: f64,
    pub remaining: Resources,
    /// Edge capacities host at most one application at a time.
    pub occupied_by: Option<AppId>,
}

impl Capacity {
    pub fn quota(&self) -> Resources {
        Resources::new(self.cpu_quota, self.ram_quota, self.storage_quota)
    }

    /// Restores full quotas and clears edge occupancy.
    pub fn reset(&mut self) {
        self.remaining = self.quota();
        self.occupied_by = None;
    }
}

/// Per-attribute normalised QoS values. Used both for a single placement and
/// for the sum over an application's placements.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QosVector {
    pub price: f64,
    pub energy: f64,
    pub bandwidth: f64,
    pub latency: f64,
}

impl std::ops::AddAssign for QosVector {
    fn add_assign(&mut self, rhs: Self) {
        self.price += rhs.price;
        self.energy += rhs.energy;
        self.bandwidth += rhs.bandwidth;
        self.latency += rhs.latency;
    }
}

/// A complete, conflict-free mapping of an application's microservices to capacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub application_id: AppId,
    pub assignments: BTreeMap<usize, CapacityId>,
    pub total_cost: f64,
    pub qos_breakdown: QosVector,
}

impl Allocation {
    /// Assignment vector indexed by microservice id.
    pub fn assignment_vector(&self) -> Vec<CapacityId> {
        self.assignments.values().copied().collect()
    }
}

/// Why an allocator produced no allocation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AllocationFailure {
    #[error("no valid allocation (unplaced microservices: {unplaced:?})")]
    NoValidAllocation { unplaced: Vec<usize> },
    #[error("enumeration budget exceeded ({candidates} candidates > {budget})")]
    EnumerationBudgetExceeded { candidates: u128, budget: u64 },
    #[error("consensus did not converge within {max_rounds} rounds")]
    ConvergenceTimeout { max_rounds: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("unknown capacity id {0}")]
    UnknownCapacity(CapacityId),
    #[error("allocation is for application {found}, expected {expected}")]
    ApplicationMismatch { expected: AppId, found: AppId },
}

/// Lookup from capacity id to position in a capacity slice.
pub fn capacity_index(capacities: &[Capacity]) -> HashMap<CapacityId, usize> {
    capacities.iter().enumerate().map(|(i, c)| (c.id, i)).collect()
}

/// Checks that `alloc` assigns every microservice of `app`, that each
/// placement is individually feasible and that the summed demands on each
/// capacity fit its remaining quota.
///
/// Referencing a capacity that is not in `capacities` is an error rather than
/// a `false` verdict.
pub fn validate_allocation(
    alloc: &Allocation,
    app: &Application,
    capacities: &[Capacity],
) -> Result<bool, DomainError> {
    if alloc.application_id != app.id {
        return Err(DomainError::ApplicationMismatch { expected: app.id, found: alloc.application_id });
    }
    let index = capacity_index(capacities);
    for cap_id in alloc.assignments.values() {
        if !index.contains_key(cap_id) {
            return Err(DomainError::UnknownCapacity(*cap_id));
        }
    }

    if alloc.assignments.len() != app.microservices.len() {
        return Ok(false);
    }
    let mut load: HashMap<usize, Resources> = HashMap::new();
    for ms in &app.microservices {
        let Some(cap_id) = alloc.assignments.get(&ms.id) else {
            return Ok(false);
        };
        let pos = index[cap_id];
        if !scoring::feasible(ms, &capacities[pos], app.id) {
            return Ok(false);
        }
        let entry = load.entry(pos).or_default();
        *entry = entry.saturating_add(&ms.demand());
    }
    Ok(load.iter().all(|(&pos, demand)| capacities[pos].remaining.covers(demand)))
}

/// A complete experiment input: applications, capacities and the seed they
/// were generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub applications: Vec<Application>,
    pub capacities: Vec<Capacity>,
    pub seed: u64,
    pub spec_version: u32,
}
