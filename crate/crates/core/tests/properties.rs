mod common;

use proptest::prelude::*;

use swarm_alloc::baselines::{centralised_exhaustive, first_fit};
use swarm_alloc::cbba::{allocation_utility, AgentState};
use swarm_alloc::domain::{Allocation, Capacity, Microservice, QosProfile};
use swarm_alloc::scenario::{self, generate_scenario, ScenarioSpec};
use swarm_alloc::scoring::{allocation_cost, marginal_utility, ms_cost};
use swarm_alloc::simnet::{allocate_cbba, run_round, CbbaConfig};
use swarm_alloc::stats::ks_two_sample;
use swarm_alloc::{NormBounds, Scenario, Weights};

fn small_scenario() -> impl Strategy<Value = Scenario> {
    (any::<u64>(), 1usize..4, 2usize..9)
        .prop_map(|(seed, apps, caps)| generate_scenario(&ScenarioSpec::new(apps, caps, seed)).unwrap())
}

fn defaults() -> (Weights, NormBounds) {
    (Weights::default(), NormBounds::default())
}

fn same_allocation(a: &Allocation, b: &Allocation) -> bool {
    a.assignments == b.assignments && (a.total_cost - b.total_cost).abs() < 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenario_json_round_trips(s in small_scenario()) {
        let text = scenario::to_json(&s).unwrap();
        prop_assert_eq!(scenario::from_json(&text).unwrap(), s);
    }

    #[test]
    fn ms_cost_stays_in_unit_interval(
        price in 0.0f64..2.0, energy in 0.0f64..20.0, bandwidth in 0.0f64..2000.0, latency in 0.0f64..400.0,
        seed in any::<u64>(),
    ) {
        let s = generate_scenario(&ScenarioSpec::new(1, 1, seed)).unwrap();
        let mut cap = s.capacities[0].clone();
        cap.qos = QosProfile { price, energy, bandwidth, latency };
        let (w, nb) = defaults();
        let c = ms_cost(&s.applications[0].microservices[0], &cap, &w, &nb);
        prop_assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn cost_is_monotone_in_each_attribute(seed in any::<u64>(), bump in 0.0f64..0.5) {
        let s = generate_scenario(&ScenarioSpec::new(1, 1, seed)).unwrap();
        let ms = &s.applications[0].microservices[0];
        let cap = &s.capacities[0];
        let (w, nb) = defaults();
        let base = ms_cost(ms, cap, &w, &nb);
        let worse: [fn(&mut QosProfile, f64); 4] = [
            |q, b| q.price += b,
            |q, b| q.energy += 10.0 * b,
            |q, b| q.bandwidth -= 1000.0 * b,
            |q, b| q.latency += 100.0 * b,
        ];
        for f in worse {
            let mut c = cap.clone();
            f(&mut c.qos, bump);
            prop_assert!(ms_cost(ms, &c, &w, &nb) >= base);
        }
    }

    #[test]
    fn zero_discount_cost_is_plain_sum(s in small_scenario()) {
        let (w, nb) = defaults();
        let caps: Vec<Capacity> = s.capacities.iter().cloned().map(|mut c| { c.discount = 0.0; c }).collect();
        for app in &s.applications {
            if let Ok(alloc) = centralised_exhaustive(app, &caps, &w, &nb) {
                let plain: f64 = app
                    .microservices
                    .iter()
                    .map(|m| {
                        let cap = caps.iter().find(|c| c.id == alloc.assignments[&m.id]).unwrap();
                        ms_cost(m, cap, &w, &nb)
                    })
                    .sum();
                prop_assert!((alloc.total_cost - plain).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn marginal_utility_ignores_bundle(s in small_scenario(), picks in proptest::collection::vec(any::<prop::sample::Index>(), 0..5)) {
        let (w, nb) = defaults();
        let app = &s.applications[0];
        let bundle: Vec<&Microservice> = picks.iter().map(|i| i.get(&app.microservices)).collect();
        for cap in &s.capacities {
            for m in &app.microservices {
                prop_assert_eq!(marginal_utility(m, &bundle, cap, &w, &nb), marginal_utility(m, &[], cap, &w, &nb));
            }
        }
    }

    #[test]
    fn cost_does_not_depend_on_capacity_order(s in small_scenario(), rot in 0usize..8) {
        let (w, nb) = defaults();
        let app = &s.applications[0];
        if let Ok(alloc) = centralised_exhaustive(app, &s.capacities, &w, &nb) {
            let mut caps = s.capacities.clone();
            let k = rot % caps.len();
            caps.rotate_left(k);
            let again = allocation_cost(&alloc, app, &caps, &w, &nb).unwrap();
            prop_assert_eq!(again.total, alloc.total_cost);
        }
    }

    #[test]
    fn exhaustive_is_never_beaten(s in small_scenario()) {
        let (w, nb) = defaults();
        let app = &s.applications[0];
        let exact = centralised_exhaustive(app, &s.capacities, &w, &nb);
        let brute = common::brute_force(app, &s.capacities);
        prop_assert_eq!(exact.is_ok(), brute.is_some());
        if let (Ok(a), Some((best, _))) = (&exact, brute) {
            prop_assert!((a.total_cost - best).abs() < 1e-9);
        }
        if let (Ok(a), Ok(ff)) = (&exact, first_fit(app, &s.capacities, &w, &nb)) {
            prop_assert!(ff.total_cost >= a.total_cost - 1e-12);
        }
    }

    #[test]
    fn cbba_keeps_half_of_optimal_utility(s in small_scenario()) {
        let (w, nb) = defaults();
        let app = &s.applications[0];
        let run = allocate_cbba(app, &s.capacities, &w, &nb, &CbbaConfig::default()).unwrap();
        prop_assert!(run.stats.converged);
        if let (Ok(opt), Ok(got)) = (centralised_exhaustive(app, &s.capacities, &w, &nb), &run.result) {
            prop_assert!(allocation_utility(got) >= 0.5 * allocation_utility(&opt));
            prop_assert!(got.total_cost >= opt.total_cost - 1e-12);
        }
    }

    #[test]
    fn cbba_ignores_agent_storage_order(s in small_scenario(), rot in 0usize..8) {
        let (w, nb) = defaults();
        let app = &s.applications[0];
        let mut caps = s.capacities.clone();
        let k = rot % caps.len();
        caps.rotate_left(k);
        let a = allocate_cbba(app, &s.capacities, &w, &nb, &CbbaConfig::default()).unwrap();
        let b = allocate_cbba(app, &caps, &w, &nb, &CbbaConfig::default()).unwrap();
        prop_assert_eq!(a.stats, b.stats);
        match (&a.result, &b.result) {
            (Ok(x), Ok(y)) => prop_assert!(same_allocation(x, y)),
            (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
        }
    }

    #[test]
    fn parallel_rounds_match_sequential(s in small_scenario()) {
        let (w, nb) = defaults();
        let app = &s.applications[0];
        let seq = allocate_cbba(app, &s.capacities, &w, &nb, &CbbaConfig::default()).unwrap();
        let par = allocate_cbba(app, &s.capacities, &w, &nb, &CbbaConfig { parallel: true, ..Default::default() }).unwrap();
        prop_assert_eq!(seq.stats, par.stats);
        prop_assert_eq!(seq.agents, par.agents);
    }

    #[test]
    fn agent_invariants_hold_every_round(s in small_scenario()) {
        let (w, nb) = defaults();
        let app = &s.applications[0];
        let mut agents: Vec<AgentState> = s.capacities.iter().map(|c| AgentState::new(c, app, &w, &nb)).collect();
        for round in 1..=(app.microservices.len() * agents.len() + 1) as u64 {
            let changed = run_round(&mut agents, round, false).unwrap();
            for a in &agents {
                prop_assert!(a.check_invariants().is_ok(), "{:?}", a.check_invariants());
                prop_assert!(a.tentative_remaining.cpu <= a.capacity.remaining.cpu);
            }
            if !changed {
                break;
            }
        }
    }

    #[test]
    fn ks_is_symmetric(a in proptest::collection::vec(-5.0f64..5.0, 1..60), b in proptest::collection::vec(-5.0f64..5.0, 1..60)) {
        let ab = ks_two_sample(&a, &b).unwrap();
        let ba = ks_two_sample(&b, &a).unwrap();
        prop_assert_eq!(ab.statistic, ba.statistic);
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert!((0.0..=1.0).contains(&ab.statistic) && (0.0..=1.0).contains(&ab.p_value));
    }

    #[test]
    fn ks_statistic_survives_monotone_transform(a in proptest::collection::vec(-5.0f64..5.0, 1..60), b in proptest::collection::vec(-5.0f64..5.0, 1..60)) {
        let f = |x: &f64| x.exp() * 3.0 + 1.0;
        let plain = ks_two_sample(&a, &b).unwrap();
        let mapped = ks_two_sample(&a.iter().map(f).collect::<Vec<_>>(), &b.iter().map(f).collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(plain.statistic, mapped.statistic);
    }

    #[test]
    fn ks_matches_brute_force_ecdf(a in proptest::collection::vec(0u8..20, 1..50), b in proptest::collection::vec(0u8..20, 1..50)) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let got = ks_two_sample(&a, &b).unwrap();
        let (d, p) = common::ks_oracle(&a, &b);
        prop_assert!((got.statistic - d).abs() <= 1e-9);
        prop_assert!((got.p_value - p).abs() <= 1e-6);
    }
}
