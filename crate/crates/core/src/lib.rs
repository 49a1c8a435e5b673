//! Resource selection for microservice applications over a mixed pool of
//! cloud and edge capacities.
//!
//! Three allocators share one cost model ([`scoring`]):
//!
//! * [`baselines::centralised_exhaustive`] enumerates every feasible
//!   assignment and returns the cheapest;
//! * [`baselines::first_fit`] places microservices greedily;
//! * [`simnet::allocate_cbba`] runs a consensus-based bundle auction where
//!   every capacity is an agent.
//!
//! [`harness`] replays scenarios through the allocators and [`stats`] turns
//! the resulting records into comparison tables.

pub mod baselines;
pub mod cbba;
pub mod domain;
pub mod harness;
pub mod scenario;
pub mod scoring;
pub mod simnet;
pub mod stats;

pub use domain::{
    Allocation, AllocationFailure, AppId, Application, Capacity, CapacityId, CapacityKind, Location,
    Microservice, QosProfile, QosVector, Resources, Scenario,
};
pub use harness::{ExperimentConfig, Method, Outcome, RunRecord};
pub use scoring::{NormBounds, Weights};
