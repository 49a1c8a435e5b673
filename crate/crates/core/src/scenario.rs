//! Seeded random generation of applications and capacities, and scenario
//! file I/O.
//!
//! Generators use ChaCha8 seeded from a `u64`. Applications and capacities
//! are drawn from separate ChaCha streams of the same seed, so a scenario's
//! application set can be regenerated without touching its capacities.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    AppId, Application, Capacity, CapacityId, CapacityKind, Location, Microservice, QosProfile,
    Resources, Scenario, SPEC_VERSION,
};

const APP_STREAM: u64 = 0;
const CAP_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario spec: {0}")]
    InvalidSpec(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unsupported spec_version {0} (expected {SPEC_VERSION})")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Shape of a generated scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_applications: usize,
    pub n_capacities: usize,
    pub seed: u64,
    pub cloud_fraction: f64,
    pub repetitions: usize,
}

impl ScenarioSpec {
    pub fn new(n_applications: usize, n_capacities: usize, seed: u64) -> Self {
        Self { n_applications, n_capacities, seed, cloud_fraction: 0.5, repetitions: 5 }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_applications < 1 || self.n_capacities < 1 {
            return Err(ScenarioError::InvalidSpec("need at least one application and one capacity".into()));
        }
        if !(0.0..=1.0).contains(&self.cloud_fraction) {
            return Err(ScenarioError::InvalidSpec(format!("cloud_fraction {} outside [0, 1]", self.cloud_fraction)));
        }
        if self.repetitions < 1 {
            return Err(ScenarioError::InvalidSpec("repetitions must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of cloud capacities, rounding half up.
    pub fn n_cloud(&self) -> usize {
        (self.cloud_fraction * self.n_capacities as f64).round() as usize
    }
}

/// Generator RNG for `seed` on the given stream.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_ms_location<R: Rng + ?Sized>(rng: &mut R) -> Location {
    // EU 0.2, US 0.2, Asia 0.2, Worldwide 0.4
    match rng.gen_range(0..5u32) {
        0 => Location::EU,
        1 => Location::US,
        2 => Location::Asia,
        _ => Location::Worldwide,
    }
}

/// Draws one application with 1-5 microservices.
pub fn generate_application<R: Rng + ?Sized>(rng: &mut R, id: AppId) -> Application {
    let count = rng.gen_range(1..=5usize);
    let microservices = (0..count)
        .map(|i| Microservice {
            id: i,
            cpu: rng.gen_range(1..=6),
            ram: rng.gen_range(1..=6),
            storage: rng.gen_range(1..=10),
            location: sample_ms_location(rng),
            running_time: rng.gen_range(1..=30),
        })
        .collect();
    Application { id, microservices }
}

fn pow2<R: Rng + ?Sized>(rng: &mut R, lo: u32, hi: u32) -> u64 {
    1u64 << rng.gen_range(lo..=hi)
}

/// Unit price range of a region.
pub fn price_range(location: Location) -> (f64, f64) {
    match location {
        Location::US => (0.15, 1.0),
        Location::EU => (0.1, 0.8),
        Location::Asia => (0.05, 0.7),
        Location::Worldwide => (0.05, 1.0),
    }
}

/// Draws one capacity of the given kind with full remaining quotas.
pub fn generate_capacity<R: Rng + ?Sized>(rng: &mut R, kind: CapacityKind, id: CapacityId) -> Capacity {
    let (cpu_ram_exp, storage_exp) = match kind {
        CapacityKind::Cloud => ((4, 10), (2, 13)),
        CapacityKind::Edge => ((1, 5), (2, 10)),
    };
    let cpu_quota = pow2(rng, cpu_ram_exp.0, cpu_ram_exp.1);
    let ram_quota = pow2(rng, cpu_ram_exp.0, cpu_ram_exp.1);
    let storage_quota = pow2(rng, storage_exp.0, storage_exp.1);
    let location = *Location::REGIONS.choose(rng).expect("non-empty");
    let (p_lo, p_hi) = price_range(location);
    let qos = QosProfile {
        price: rng.gen_range(p_lo..p_hi),
        energy: rng.gen_range(1.0..10.0),
        bandwidth: rng.gen_range(100.0..1000.0),
        latency: rng.gen_range(50.0..200.0),
    };
    let discount = rng.gen_range(0.0..1.0);
    Capacity {
        id,
        kind,
        cpu_quota,
        ram_quota,
        storage_quota,
        location,
        qos,
        discount,
        remaining: Resources::new(cpu_quota, ram_quota, storage_quota),
        occupied_by: None,
    }
}

/// `n` applications with ids `0..n` drawn from `seed`'s application stream.
pub fn generate_applications(n: usize, seed: u64) -> Vec<Application> {
    let mut rng = rng_for(seed, APP_STREAM);
    (0..n).map(|i| generate_application(&mut rng, AppId(i as u64))).collect()
}

/// `n` capacities with ids `0..n`, `n_cloud` of them cloud, in shuffled
/// kind order, drawn from `seed`'s capacity stream.
pub fn generate_capacities(n: usize, n_cloud: usize, seed: u64) -> Vec<Capacity> {
    let mut rng = rng_for(seed, CAP_STREAM);
    let mut kinds: Vec<CapacityKind> = (0..n)
        .map(|i| if i < n_cloud { CapacityKind::Cloud } else { CapacityKind::Edge })
        .collect();
    kinds.shuffle(&mut rng);
    kinds
        .into_iter()
        .enumerate()
        .map(|(i, kind)| generate_capacity(&mut rng, kind, CapacityId(i as u64)))
        .collect()
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario, ScenarioError> {
    spec.validate()?;
    Ok(Scenario {
        applications: generate_applications(spec.n_applications, spec.seed),
        capacities: generate_capacities(spec.n_capacities, spec.n_cloud(), spec.seed),
        seed: spec.seed,
        spec_version: SPEC_VERSION,
    })
}

/// Structural checks on a loaded or hand-built scenario.
pub fn validate_scenario(scenario: &Scenario) -> Result<(), ScenarioError> {
    if scenario.spec_version != SPEC_VERSION {
        return Err(ScenarioError::Version(scenario.spec_version));
    }
    let mut app_ids = HashSet::new();
    for app in &scenario.applications {
        if !app_ids.insert(app.id) {
            return Err(ScenarioError::Invalid(format!("duplicate application id {}", app.id)));
        }
        if app.microservices.is_empty() {
            return Err(ScenarioError::Invalid(format!("application {} has no microservices", app.id)));
        }
        for (i, ms) in app.microservices.iter().enumerate() {
            if ms.id != i {
                return Err(ScenarioError::Invalid(format!("application {}: microservice ids must be 0..m-1", app.id)));
            }
            if ms.cpu == 0 || ms.ram == 0 || ms.storage == 0 || ms.running_time == 0 {
                return Err(ScenarioError::Invalid(format!("application {}: microservice {} has a zero demand", app.id, ms.id)));
            }
        }
    }
    let mut cap_ids = HashSet::new();
    for cap in &scenario.capacities {
        let bad = |what: &str| ScenarioError::Invalid(format!("capacity {}: {what}", cap.id));
        if !cap_ids.insert(cap.id) {
            return Err(bad("duplicate id"));
        }
        if cap.location == Location::Worldwide {
            return Err(bad("capacities cannot be located Worldwide"));
        }
        if !cap.quota().covers(&cap.remaining) {
            return Err(bad("remaining exceeds quota"));
        }
        if cap.kind == CapacityKind::Cloud && cap.occupied_by.is_some() {
            return Err(bad("cloud capacities cannot be occupied"));
        }
        if !(0.0..=1.0).contains(&cap.discount) {
            return Err(bad("discount outside [0, 1]"));
        }
        let q = cap.qos;
        if !(q.price > 0.0 && q.energy > 0.0 && q.bandwidth > 0.0 && q.latency > 0.0) {
            return Err(bad("QoS values must be positive"));
        }
    }
    Ok(())
}

pub fn to_json(scenario: &Scenario) -> Result<String, ScenarioError> {
    Ok(serde_json::to_string_pretty(scenario)?)
}

pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text)?;
    validate_scenario(&scenario)?;
    Ok(scenario)
}

pub fn save(scenario: &Scenario, path: &Path) -> Result<(), ScenarioError> {
    let mut text = to_json(scenario)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
    from_json(&std::fs::read_to_string(path)?)
}
