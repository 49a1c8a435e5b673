//! Reference implementations used as test oracles. They deliberately avoid
//! the crate's scoring and search code.

#![allow(dead_code)]

use swarm_alloc::domain::{Application, Capacity, CapacityKind, Location};

pub const PRICE: (f64, f64) = (0.05, 1.0);
pub const ENERGY: (f64, f64) = (1.0, 10.0);
pub const BANDWIDTH: (f64, f64) = (100.0, 1000.0);
pub const LATENCY: (f64, f64) = (50.0, 200.0);

fn unit(x: f64, (lo, hi): (f64, f64)) -> f64 {
    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Cost of an assignment (capacity positions in microservice order) with
/// balanced weights, scaling price and energy against the task's own
/// demand-time range.
pub fn oracle_cost(app: &Application, assignment: &[usize], caps: &[Capacity]) -> f64 {
    let mut total = 0.0;
    for (ms, &c) in app.microservices.iter().zip(assignment) {
        let cap = &caps[c];
        let dt = ((ms.cpu + ms.ram) * ms.running_time) as f64;
        let price = unit(cap.qos.price * dt, (PRICE.0 * dt, PRICE.1 * dt));
        let energy = unit(cap.qos.energy * dt, (ENERGY.0 * dt, ENERGY.1 * dt));
        let bandwidth = 1.0 - unit(cap.qos.bandwidth, BANDWIDTH);
        let latency = unit(cap.qos.latency, LATENCY);
        let co_located = assignment.iter().filter(|&&x| x == c).count() > 1;
        let price = if co_located { price * (1.0 - cap.discount) } else { price };
        total += 0.25 * (price + energy + bandwidth + latency);
    }
    total
}

pub fn oracle_feasible(app: &Application, assignment: &[usize], caps: &[Capacity]) -> bool {
    let mut load = vec![(0u64, 0u64, 0u64); caps.len()];
    for (ms, &c) in app.microservices.iter().zip(assignment) {
        let cap = &caps[c];
        if ms.location != Location::Worldwide && ms.location != cap.location {
            return false;
        }
        if cap.kind == CapacityKind::Edge && cap.occupied_by.is_some_and(|o| o != app.id) {
            return false;
        }
        load[c].0 += ms.cpu;
        load[c].1 += ms.ram;
        load[c].2 += ms.storage;
    }
    load.iter().zip(caps).all(|(l, cap)| {
        l.0 <= cap.remaining.cpu && l.1 <= cap.remaining.ram && l.2 <= cap.remaining.storage
    })
}

/// Cheapest feasible assignment found by visiting every one of the
/// `|caps|^|ms|` vectors.
pub fn brute_force(app: &Application, caps: &[Capacity]) -> Option<(f64, Vec<usize>)> {
    let m = app.microservices.len();
    let n = caps.len();
    if n == 0 {
        return None;
    }
    let mut a = vec![0usize; m];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        if oracle_feasible(app, &a, caps) {
            let c = oracle_cost(app, &a, caps);
            if best.as_ref().is_none_or(|(b, _)| c < *b) {
                best = Some((c, a.clone()));
            }
        }
        let mut i = m;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            a[i] += 1;
            if a[i] < n {
                break;
            }
            a[i] = 0;
        }
    }
}

/// `sup |F_a - F_b|` evaluated at every sample point.
pub fn ecdf_distance(a: &[f64], b: &[f64]) -> f64 {
    let f = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    a.iter().chain(b).map(|&x| (f(a, x) - f(b, x)).abs()).fold(0.0, f64::max)
}

/// Kolmogorov survival function from the theta-function series only.
pub fn kolmogorov_theta(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let pi = std::f64::consts::PI;
    let s: f64 = (1..=400)
        .map(|k| {
            let m = (2 * k - 1) as f64;
            (-m * m * pi * pi / (8.0 * lambda * lambda)).exp()
        })
        .sum();
    (1.0 - (2.0 * pi).sqrt() / lambda * s).clamp(0.0, 1.0)
}

pub fn ks_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d = ecdf_distance(a, b);
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    (d, if d == 0.0 { 1.0 } else { kolmogorov_theta(ne.sqrt() * d) })
}
