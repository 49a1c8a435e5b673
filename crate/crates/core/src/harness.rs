//! Sequential experiment execution: applications arrive one after the other,
//! each method evolves its own copy of the capacity state, and capacities
//! are reset between repetitions.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{self, DEFAULT_ENUMERATION_BUDGET};
use crate::cbba::CbbaError;
use crate::domain::{
    capacity_index, Allocation, AllocationFailure, AppId, Application, Capacity, CapacityKind,
    QosVector, Scenario,
};
use crate::scenario::{self, ScenarioSpec};
use crate::scoring::{NormBounds, Weights};
use crate::simnet::{self, CbbaConfig, NetworkStats};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown method {0:?} (expected centralised, first-fit or cbba)")]
    UnknownMethod(String),
    #[error("unknown outcome {0:?}")]
    UnknownOutcome(String),
    #[error("allocation references unknown capacity")]
    UnknownCapacity,
    #[error(transparent)]
    Protocol(#[from] CbbaError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Centralised,
    FirstFit,
    Cbba,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Centralised, Method::FirstFit, Method::Cbba];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Centralised => "centralised",
            Method::FirstFit => "first-fit",
            Method::Cbba => "cbba",
        }
    }

    /// Parses a comma-separated list such as `centralised,cbba`.
    pub fn parse_list(list: &str) -> Result<Vec<Method>, HarnessError> {
        list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "centralised" | "centralized" | "exhaustive" => Ok(Method::Centralised),
            "first-fit" | "firstfit" | "first_fit" => Ok(Method::FirstFit),
            "cbba" => Ok(Method::Cbba),
            _ => Err(HarnessError::UnknownMethod(s.to_string())),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    NoValidAllocation,
    EnumerationBudgetExceeded,
    ConvergenceTimeout,
    /// The method exceeded the per-application time budget of a scale run
    /// (or was skipped after doing so).
    TimeBudgetExceeded,
}

impl Outcome {
    pub fn is_failure(&self) -> bool {
        *self != Outcome::Success
    }
}

impl From<&AllocationFailure> for Outcome {
    fn from(f: &AllocationFailure) -> Self {
        match f {
            AllocationFailure::NoValidAllocation { .. } => Outcome::NoValidAllocation,
            AllocationFailure::EnumerationBudgetExceeded { .. } => Outcome::EnumerationBudgetExceeded,
            AllocationFailure::ConvergenceTimeout { .. } => Outcome::ConvergenceTimeout,
        }
    }
}

/// Outcome of one method on one application in one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub repetition: usize,
    pub application_id: AppId,
    pub method: Method,
    /// Wall-clock time of the allocator call. Absent when a centralised
    /// method fails at offer pre-selection, or when timing is disabled.
    pub elapsed_seconds: Option<f64>,
    pub outcome: Outcome,
    pub cost: Option<f64>,
    pub qos_breakdown: Option<QosVector>,
    pub rounds: Option<u64>,
    pub messages: Option<u64>,
}

impl RunRecord {
    /// Same record with the timing column cleared, for comparisons.
    pub fn without_timing(&self) -> RunRecord {
        RunRecord { elapsed_seconds: None, ..self.clone() }
    }
}

/// How the inputs of repetition `r > 0` are derived from the base scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RepetitionMode {
    /// Every repetition replays the same applications on reset capacities.
    Fixed,
    /// Repetition `r` draws a fresh application set from seed `seed + r`
    /// against the same capacities.
    #[default]
    FreshApplications,
    /// As `FreshApplications`, and capacities are redrawn from `seed + r` too.
    FreshAll,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub weights: Weights,
    pub bounds: NormBounds,
    pub repetitions: usize,
    pub mode: RepetitionMode,
    pub enumeration_budget: u64,
    pub cbba: CbbaConfig,
    /// Record wall-clock times. When off, `elapsed_seconds` is left empty so
    /// record files are byte-reproducible.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            weights: Weights::default(),
            bounds: NormBounds::default(),
            repetitions: 5,
            mode: RepetitionMode::default(),
            enumeration_budget: DEFAULT_ENUMERATION_BUDGET,
            cbba: CbbaConfig::default(),
            timing: true,
        }
    }
}

/// Result of a single allocator call, before it becomes a [`RunRecord`].
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub result: Result<Allocation, AllocationFailure>,
    pub elapsed: Duration,
    pub network: Option<NetworkStats>,
}

/// Runs one method on one application against `caps` without mutating them.
pub fn allocate(method: Method, app: &Application, caps: &[Capacity], cfg: &ExperimentConfig) -> Result<MethodResult, HarnessError> {
    let (w, nb) = (&cfg.weights, &cfg.bounds);
    let start = Instant::now();
    let (result, network) = match method {
        Method::Centralised => {
            (baselines::centralised_exhaustive_with_budget(app, caps, w, nb, cfg.enumeration_budget).0, None)
        }
        Method::FirstFit => (baselines::first_fit(app, caps, w, nb), None),
        Method::Cbba => {
            let run = simnet::allocate_cbba(app, caps, w, nb, &cfg.cbba)?;
            (run.result, Some(run.stats))
        }
    };
    Ok(MethodResult { result, elapsed: start.elapsed(), network })
}

fn to_record(repetition: usize, app: &Application, method: Method, r: &MethodResult, timing: bool) -> RunRecord {
    let outcome = match &r.result {
        Ok(_) => Outcome::Success,
        Err(f) => f.into(),
    };
    // centralised methods stop at pre-selection when no allocation exists
    let pre_selection_failure = method != Method::Cbba && outcome == Outcome::NoValidAllocation;
    let alloc = r.result.as_ref().ok();
    RunRecord {
        repetition,
        application_id: app.id,
        method,
        elapsed_seconds: (timing && !pre_selection_failure).then_some(r.elapsed.as_secs_f64()),
        outcome,
        cost: alloc.map(|a| a.total_cost),
        qos_breakdown: alloc.map(|a| a.qos_breakdown),
        rounds: r.network.map(|n| n.rounds),
        messages: r.network.map(|n| n.messages_sent),
    }
}

/// Applies a successful allocation to `caps`: remaining quotas shrink by
/// each microservice's demand and edge capacities become occupied.
pub fn commit(caps: &mut [Capacity], app: &Application, alloc: &Allocation) -> Result<(), HarnessError> {
    let index = capacity_index(caps);
    for ms in &app.microservices {
        let cap_id = alloc.assignments.get(&ms.id).ok_or(HarnessError::UnknownCapacity)?;
        let cap = &mut caps[*index.get(cap_id).ok_or(HarnessError::UnknownCapacity)?];
        cap.remaining = cap
            .remaining
            .checked_sub(&ms.demand())
            .expect("committed allocations are jointly feasible");
        if cap.kind == CapacityKind::Edge {
            cap.occupied_by = Some(app.id);
        }
    }
    Ok(())
}

/// Inputs of repetition `r` under `mode`.
pub fn repetition_inputs(base: &Scenario, r: usize, mode: RepetitionMode) -> Scenario {
    if r == 0 || mode == RepetitionMode::Fixed {
        return base.clone();
    }
    let seed = base.seed.wrapping_add(r as u64);
    let applications = scenario::generate_applications(base.applications.len(), seed);
    let capacities = match mode {
        RepetitionMode::FreshAll => {
            let n_cloud = base.capacities.iter().filter(|c| c.kind == CapacityKind::Cloud).count();
            scenario::generate_capacities(base.capacities.len(), n_cloud, seed)
        }
        _ => base.capacities.clone(),
    };
    Scenario { applications, capacities, seed, spec_version: base.spec_version }
}

/// Runs every method over every application of every repetition.
///
/// Records are ordered by repetition, then application, then method in the
/// order given.
pub fn run_experiment(scenario: &Scenario, methods: &[Method], cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, HarnessError> {
    let mut records = Vec::new();
    for r in 0..cfg.repetitions {
        let inputs = repetition_inputs(scenario, r, cfg.mode);
        let mut states: Vec<Vec<Capacity>> = methods
            .iter()
            .map(|_| {
                let mut caps = inputs.capacities.clone();
                caps.iter_mut().for_each(Capacity::reset);
                caps
            })
            .collect();
        for app in &inputs.applications {
            for (method, caps) in methods.iter().zip(states.iter_mut()) {
                let res = allocate(*method, app, caps, cfg)?;
                if let Ok(alloc) = &res.result {
                    commit(caps, app, alloc)?;
                }
                records.push(to_record(r, app, *method, &res, cfg.timing));
            }
        }
    }
    Ok(records)
}

/// The five large-scale shapes (applications, capacities).
pub const SCALE_SHAPES: [(usize, usize); 5] = [(10, 50), (50, 250), (100, 500), (500, 1000), (1000, 3000)];

/// Scale-suite specs with every count multiplied by `factor` (rounded,
/// at least 1).
pub fn scale_specs(factor: f64, seed: u64, repetitions: usize) -> Vec<ScenarioSpec> {
    let scale = |n: usize| ((n as f64 * factor).round() as usize).max(1);
    SCALE_SHAPES
        .iter()
        .enumerate()
        .map(|(i, &(a, c))| ScenarioSpec {
            repetitions,
            ..ScenarioSpec::new(scale(a), scale(c), seed.wrapping_add(1000 * i as u64))
        })
        .collect()
}

/// A [`RunRecord`] tagged with the scale scenario it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRecord {
    pub scenario: usize,
    pub n_applications: usize,
    pub n_capacities: usize,
    pub record: RunRecord,
}

/// Runs each spec with the given methods. A method whose allocator call
/// takes longer than `time_budget` on an application is recorded as
/// [`Outcome::TimeBudgetExceeded`] for that application and for every later
/// application of the same scenario, without being run again.
pub fn run_scale_suite(
    specs: &[ScenarioSpec],
    methods: &[Method],
    time_budget: Duration,
    cfg: &ExperimentConfig,
) -> Result<Vec<ScaleRecord>, HarnessError> {
    let mut out = Vec::new();
    for (index, spec) in specs.iter().enumerate() {
        let base = scenario::generate_scenario(spec)?;
        let mut timed_out = vec![false; methods.len()];
        for r in 0..spec.repetitions {
            let inputs = repetition_inputs(&base, r, cfg.mode);
            let mut states: Vec<Vec<Capacity>> = methods.iter().map(|_| inputs.capacities.clone()).collect();
            for app in &inputs.applications {
                for (k, method) in methods.iter().enumerate() {
                    let record = if timed_out[k] {
                        RunRecord {
                            repetition: r,
                            application_id: app.id,
                            method: *method,
                            elapsed_seconds: None,
                            outcome: Outcome::TimeBudgetExceeded,
                            cost: None,
                            qos_breakdown: None,
                            rounds: None,
                            messages: None,
                        }
                    } else {
                        let res = allocate(*method, app, &states[k], cfg)?;
                        if res.elapsed > time_budget {
                            timed_out[k] = true;
                            RunRecord {
                                elapsed_seconds: cfg.timing.then_some(res.elapsed.as_secs_f64()),
                                outcome: Outcome::TimeBudgetExceeded,
                                cost: None,
                                qos_breakdown: None,
                                ..to_record(r, app, *method, &res, cfg.timing)
                            }
                        } else {
                            if let Ok(alloc) = &res.result {
                                commit(&mut states[k], app, alloc)?;
                            }
                            to_record(r, app, *method, &res, cfg.timing)
                        }
                    };
                    out.push(ScaleRecord {
                        scenario: index,
                        n_applications: spec.n_applications,
                        n_capacities: spec.n_capacities,
                        record,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// One CSV row. Column order is part of the file format.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    repetition: usize,
    application_id: u64,
    method: Method,
    elapsed_seconds: Option<f64>,
    outcome: Outcome,
    cost: Option<f64>,
    price: Option<f64>,
    energy: Option<f64>,
    bandwidth: Option<f64>,
    latency: Option<f64>,
    rounds: Option<u64>,
    messages: Option<u64>,
}

impl From<&RunRecord> for CsvRow {
    fn from(r: &RunRecord) -> Self {
        let q = r.qos_breakdown;
        CsvRow {
            repetition: r.repetition,
            application_id: r.application_id.0,
            method: r.method,
            elapsed_seconds: r.elapsed_seconds,
            outcome: r.outcome,
            cost: r.cost,
            price: q.map(|q| q.price),
            energy: q.map(|q| q.energy),
            bandwidth: q.map(|q| q.bandwidth),
            latency: q.map(|q| q.latency),
            rounds: r.rounds,
            messages: r.messages,
        }
    }
}

impl From<CsvRow> for RunRecord {
    fn from(r: CsvRow) -> Self {
        let qos_breakdown = match (r.price, r.energy, r.bandwidth, r.latency) {
            (Some(price), Some(energy), Some(bandwidth), Some(latency)) => {
                Some(QosVector { price, energy, bandwidth, latency })
            }
            _ => None,
        };
        RunRecord {
            repetition: r.repetition,
            application_id: AppId(r.application_id),
            method: r.method,
            elapsed_seconds: r.elapsed_seconds,
            outcome: r.outcome,
            cost: r.cost,
            qos_breakdown,
            rounds: r.rounds,
            messages: r.messages,
        }
    }
}

/// Writes records with the header
/// `repetition,application_id,method,elapsed_seconds,outcome,cost,price,energy,bandwidth,latency,rounds,messages`.
pub fn write_records<W: Write>(out: W, records: &[RunRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow::from(r))?;
    }
    if records.is_empty() {
        w.write_record([
            "repetition", "application_id", "method", "elapsed_seconds", "outcome", "cost", "price",
            "energy", "bandwidth", "latency", "rounds", "messages",
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<RunRecord>, HarnessError> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize::<CsvRow>().map(|row| Ok(row?.into())).collect()
}

/// Scale records with leading `scenario,n_applications,n_capacities` columns.
pub fn write_scale_records<W: Write>(out: W, records: &[ScaleRecord]) -> Result<(), HarnessError> {
    #[derive(Serialize)]
    struct Row {
        scenario: usize,
        n_applications: usize,
        n_capacities: usize,
        repetition: usize,
        application_id: u64,
        method: Method,
        elapsed_seconds: Option<f64>,
        outcome: Outcome,
        cost: Option<f64>,
        price: Option<f64>,
        energy: Option<f64>,
        bandwidth: Option<f64>,
        latency: Option<f64>,
        rounds: Option<u64>,
        messages: Option<u64>,
    }
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        let c = CsvRow::from(&r.record);
        w.serialize(Row {
            scenario: r.scenario,
            n_applications: r.n_applications,
            n_capacities: r.n_capacities,
            repetition: c.repetition,
            application_id: c.application_id,
            method: c.method,
            elapsed_seconds: c.elapsed_seconds,
            outcome: c.outcome,
            cost: c.cost,
            price: c.price,
            energy: c.energy,
            bandwidth: c.bandwidth,
            latency: c.latency,
            rounds: c.rounds,
            messages: c.messages,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CapacityId, Location, Microservice, QosProfile, Resources, SPEC_VERSION};

    fn app(id: u64, cpu: u64) -> Application {
        Application {
            id: AppId(id),
            microservices: vec![Microservice { id: 0, cpu, ram: 1, storage: 1, location: Location::Worldwide, running_time: 2 }],
        }
    }

    fn cap(id: u64, kind: CapacityKind, cpu: u64) -> Capacity {
        Capacity {
            id: CapacityId(id),
            kind,
            cpu_quota: cpu,
            ram_quota: 16,
            storage_quota: 16,
            location: Location::US,
            qos: QosProfile { price: 0.5, energy: 3.0, bandwidth: 700.0, latency: 80.0 },
            discount: 0.4,
            remaining: Resources::new(cpu, 16, 16),
            occupied_by: None,
        }
    }

    fn scenario(apps: Vec<Application>, caps: Vec<Capacity>) -> Scenario {
        Scenario { applications: apps, capacities: caps, seed: 1, spec_version: SPEC_VERSION }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!(Method::parse_list("centralised, first-fit,cbba").unwrap(), Method::ALL.to_vec());
        assert!(Method::parse_list("greedy").is_err());
    }

    #[test]
    fn one_record_per_repetition() {
        let s = scenario(vec![app(0, 1)], vec![cap(0, CapacityKind::Cloud, 8)]);
        let cfg = ExperimentConfig { repetitions: 3, mode: RepetitionMode::Fixed, ..Default::default() };
        let recs = run_experiment(&s, &[Method::Centralised], &cfg).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs.iter().all(|r| r.outcome == Outcome::Success && r.cost.is_some()));
    }

    #[test]
    fn commits_exhaust_quota_for_duplicates() {
        let s = scenario(vec![app(0, 4), app(1, 4)], vec![cap(0, CapacityKind::Cloud, 4)]);
        let cfg = ExperimentConfig { repetitions: 2, mode: RepetitionMode::Fixed, ..Default::default() };
        let recs = run_experiment(&s, &Method::ALL, &cfg).unwrap();
        for rep in 0..2 {
            for r in recs.iter().filter(|r| r.repetition == rep) {
                let expected = if r.application_id == AppId(0) { Outcome::Success } else { Outcome::NoValidAllocation };
                assert_eq!(r.outcome, expected, "{r:?}");
                assert_eq!(r.cost.is_some(), r.outcome == Outcome::Success);
                // only CBBA reports a time on failure
                if r.outcome == Outcome::NoValidAllocation {
                    assert_eq!(r.elapsed_seconds.is_some(), r.method == Method::Cbba);
                }
            }
        }
    }

    #[test]
    fn edge_commit_sets_occupancy() {
        let a = app(7, 1);
        let mut caps = vec![cap(0, CapacityKind::Edge, 8)];
        let alloc = baselines::first_fit(&a, &caps, &Weights::default(), &NormBounds::default()).unwrap();
        commit(&mut caps, &a, &alloc).unwrap();
        assert_eq!(caps[0].occupied_by, Some(AppId(7)));
        assert_eq!(caps[0].remaining, Resources::new(7, 15, 15));
        caps[0].reset();
        assert_eq!(caps[0].remaining, caps[0].quota());
        assert_eq!(caps[0].occupied_by, None);
    }

    #[test]
    fn fresh_application_mode_changes_apps_not_capacities() {
        let base = scenario::generate_scenario(&ScenarioSpec::new(4, 6, 10)).unwrap();
        let r1 = repetition_inputs(&base, 1, RepetitionMode::FreshApplications);
        assert_eq!(r1.capacities, base.capacities);
        assert_ne!(r1.applications, base.applications);
        assert_eq!(repetition_inputs(&base, 1, RepetitionMode::Fixed), base);
        let all = repetition_inputs(&base, 1, RepetitionMode::FreshAll);
        assert_ne!(all.capacities, base.capacities);
    }

    #[test]
    fn csv_round_trip_keeps_records() {
        let base = scenario::generate_scenario(&ScenarioSpec::new(3, 5, 2)).unwrap();
        let cfg = ExperimentConfig { repetitions: 2, ..Default::default() };
        let recs = run_experiment(&base, &Method::ALL, &cfg).unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "repetition,application_id,method,elapsed_seconds,outcome,cost,price,energy,bandwidth,latency,rounds,messages\n"
        ));
        assert_eq!(read_records(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn scale_factor_rounds_shapes() {
        let specs = scale_specs(0.1, 0, 1);
        assert_eq!((specs[0].n_applications, specs[0].n_capacities), (1, 5));
        assert_eq!((specs[4].n_applications, specs[4].n_capacities), (100, 300));
    }

    #[test]
    fn tiny_time_budget_times_everything_out() {
        let specs = vec![ScenarioSpec { repetitions: 1, ..ScenarioSpec::new(4, 6, 3) }];
        let cfg = ExperimentConfig::default();
        let recs = run_scale_suite(&specs, &Method::ALL, Duration::from_nanos(1), &cfg).unwrap();
        assert_eq!(recs.len(), 12);
        assert!(recs.iter().all(|r| r.record.outcome == Outcome::TimeBudgetExceeded));
        // only the first application was actually run
        for r in &recs {
            assert_eq!(r.record.elapsed_seconds.is_some(), r.record.application_id == AppId(0), "{r:?}");
        }
    }
}
