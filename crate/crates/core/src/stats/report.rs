//! Report tables derived from run records.
//!
//! Every record contributes exactly one row to `time_by_app.csv`; successful
//! records contribute one row each to `cost_dist.csv` and `qos_dist.csv`;
//! failures are counted in `failures.csv`. Record sets are labelled (usually
//! by the file they came from) so runs at several capacity levels can be
//! reported side by side.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::ks::{ks_two_sample, KsResult};
use crate::domain::AppId;
use crate::harness::{Method, Outcome, RunRecord};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no records to report")]
    Empty,
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Pairs compared by the KS table.
pub const KS_PAIRS: [(Method, Method); 2] = [(Method::Centralised, Method::Cbba), (Method::Centralised, Method::FirstFit)];

pub const ATTRIBUTES: [&str; 5] = ["cost", "price", "energy", "bandwidth", "latency"];

const FAILURE_OUTCOMES: [Outcome; 4] = [
    Outcome::NoValidAllocation,
    Outcome::EnumerationBudgetExceeded,
    Outcome::ConvergenceTimeout,
    Outcome::TimeBudgetExceeded,
];

#[derive(Debug, Clone, PartialEq)]
pub struct KsRow {
    pub label: String,
    pub method_a: Method,
    pub method_b: Method,
    pub attribute: &'static str,
    pub result: KsResult,
}

/// Rendered report: file name to contents, plus the KS rows for callers
/// that want them without reparsing.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub files: BTreeMap<&'static str, String>,
    pub ks: Vec<KsRow>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn attribute(r: &RunRecord, name: &str) -> Option<f64> {
    let q = r.qos_breakdown;
    match name {
        "cost" => r.cost,
        "price" => q.map(|q| q.price),
        "energy" => q.map(|q| q.energy),
        "bandwidth" => q.map(|q| q.bandwidth),
        "latency" => q.map(|q| q.latency),
        _ => None,
    }
}

fn methods_in(records: &[RunRecord]) -> Vec<Method> {
    let mut ms: Vec<Method> = records.iter().map(|r| r.method).collect();
    ms.sort();
    ms.dedup();
    ms
}

fn csv_line(out: &mut String, fields: &[String]) {
    out.push_str(&fields.join(","));
    out.push('\n');
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { (xs[n / 2 - 1] + xs[n / 2]) / 2.0 })
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

/// Builds every report table from labelled record sets.
pub fn build_report(sets: &[(String, Vec<RunRecord>)]) -> Result<Report, ReportError> {
    if sets.iter().all(|(_, r)| r.is_empty()) {
        return Err(ReportError::Empty);
    }
    let mut time = String::from("label,repetition,application_id,method,outcome,elapsed_seconds\n");
    let mut failures = String::from(
        "label,method,runs,NoValidAllocation,EnumerationBudgetExceeded,ConvergenceTimeout,TimeBudgetExceeded,total_failures\n",
    );
    let mut cost_dist = String::from("label,method,repetition,application_id,cost\n");
    let mut cost_delta = String::from("label,repetition,application_id,method,reference_cost,cost,delta,failed\n");
    let mut qos = String::from("label,method,repetition,application_id,price,energy,bandwidth,latency\n");
    let mut ks_csv = String::from("label,method_a,method_b,attribute,n1,n2,statistic,p_value,significant_at_0_05\n");
    let mut summary = String::new();
    let mut ks = Vec::new();

    for (label, records) in sets {
        let methods = methods_in(records);
        for r in records {
            csv_line(&mut time, &[
                label.clone(),
                r.repetition.to_string(),
                r.application_id.to_string(),
                r.method.to_string(),
                format!("{:?}", r.outcome),
                opt(r.elapsed_seconds),
            ]);
            if r.outcome == Outcome::Success {
                csv_line(&mut cost_dist, &[
                    label.clone(),
                    r.method.to_string(),
                    r.repetition.to_string(),
                    r.application_id.to_string(),
                    opt(r.cost),
                ]);
                let q = r.qos_breakdown;
                csv_line(&mut qos, &[
                    label.clone(),
                    r.method.to_string(),
                    r.repetition.to_string(),
                    r.application_id.to_string(),
                    opt(q.map(|q| q.price)),
                    opt(q.map(|q| q.energy)),
                    opt(q.map(|q| q.bandwidth)),
                    opt(q.map(|q| q.latency)),
                ]);
            }
        }

        for m in &methods {
            let mine: Vec<&RunRecord> = records.iter().filter(|r| r.method == *m).collect();
            let mut row = vec![label.clone(), m.to_string(), mine.len().to_string()];
            for o in FAILURE_OUTCOMES {
                row.push(mine.iter().filter(|r| r.outcome == o).count().to_string());
            }
            row.push(mine.iter().filter(|r| r.outcome.is_failure()).count().to_string());
            csv_line(&mut failures, &row);
        }

        let reference: BTreeMap<(usize, AppId), &RunRecord> = records
            .iter()
            .filter(|r| r.method == Method::Centralised)
            .map(|r| ((r.repetition, r.application_id), r))
            .collect();
        if !reference.is_empty() {
            for r in records.iter().filter(|r| r.method != Method::Centralised) {
                let Some(base) = reference.get(&(r.repetition, r.application_id)) else { continue };
                let delta = match (base.cost, r.cost) {
                    (Some(b), Some(c)) => Some(c - b),
                    _ => None,
                };
                csv_line(&mut cost_delta, &[
                    label.clone(),
                    r.repetition.to_string(),
                    r.application_id.to_string(),
                    r.method.to_string(),
                    opt(base.cost),
                    opt(r.cost),
                    opt(delta),
                    delta.is_none().to_string(),
                ]);
            }
        }

        for (a, b) in KS_PAIRS {
            if !methods.contains(&a) || !methods.contains(&b) {
                continue;
            }
            for attr in ATTRIBUTES {
                let sample = |m: Method| -> Vec<f64> {
                    records.iter().filter(|r| r.method == m).filter_map(|r| attribute(r, attr)).collect()
                };
                let Ok(result) = ks_two_sample(&sample(a), &sample(b)) else { continue };
                csv_line(&mut ks_csv, &[
                    label.clone(),
                    a.to_string(),
                    b.to_string(),
                    attr.to_string(),
                    result.n1.to_string(),
                    result.n2.to_string(),
                    result.statistic.to_string(),
                    result.p_value.to_string(),
                    result.significant_at_0_05.to_string(),
                ]);
                ks.push(KsRow { label: label.clone(), method_a: a, method_b: b, attribute: attr, result });
            }
        }

        let _ = writeln!(summary, "== {label} ==");
        let _ = writeln!(
            summary,
            "{:<12} {:>6} {:>8} {:>8} {:>14} {:>14} {:>10}",
            "method", "runs", "success", "failed", "median_time_s", "mean_time_s", "mean_cost"
        );
        for m in &methods {
            let mine: Vec<&RunRecord> = records.iter().filter(|r| r.method == *m).collect();
            let times: Vec<f64> = mine.iter().filter_map(|r| r.elapsed_seconds).collect();
            let costs: Vec<f64> = mine.iter().filter_map(|r| r.cost).collect();
            let ok = mine.iter().filter(|r| r.outcome == Outcome::Success).count();
            let _ = writeln!(
                summary,
                "{:<12} {:>6} {:>8} {:>8} {:>14} {:>14} {:>10}",
                m.as_str(),
                mine.len(),
                ok,
                mine.len() - ok,
                fmt_opt(median(times.clone())),
                fmt_opt(mean(&times)),
                fmt_opt(mean(&costs)),
            );
        }
        summary.push('\n');
    }

    summary.push_str("Kolmogorov-Smirnov two-sample tests (alpha = 0.05)\n");
    if ks.is_empty() {
        summary.push_str(
            "no comparisons: each pair needs successful records from both centralised and the other method\n",
        );
    } else {
        for row in &ks {
            let _ = writeln!(
                summary,
                "{} {} vs {} {:<9} D={:.4} p={:.4} {}",
                row.label,
                row.method_a,
                row.method_b,
                row.attribute,
                row.result.statistic,
                row.result.p_value,
                if row.result.significant_at_0_05 { "significant" } else { "not significant" },
            );
        }
    }

    let files = BTreeMap::from([
        ("time_by_app.csv", time),
        ("failures.csv", failures),
        ("cost_dist.csv", cost_dist),
        ("cost_delta.csv", cost_delta),
        ("qos_dist.csv", qos),
        ("ks_tests.csv", ks_csv),
        ("summary.txt", summary),
    ]);
    Ok(Report { files, ks })
}

/// Builds the report and writes its files into `out_dir` (created if needed).
pub fn write_report(sets: &[(String, Vec<RunRecord>)], out_dir: &Path) -> Result<Report, ReportError> {
    let report = build_report(sets)?;
    let io = |path: &Path, source| ReportError::Io { path: path.display().to_string(), source };
    std::fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
    for (name, contents) in &report.files {
        let path = out_dir.join(name);
        std::fs::write(&path, contents).map_err(|e| io(&path, e))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::QosVector;

    fn rec(app: u64, method: Method, cost: Option<f64>) -> RunRecord {
        RunRecord {
            repetition: 0,
            application_id: AppId(app),
            method,
            elapsed_seconds: Some(0.001 * app as f64),
            outcome: if cost.is_some() { Outcome::Success } else { Outcome::NoValidAllocation },
            cost,
            qos_breakdown: cost.map(|c| QosVector { price: c / 4.0, energy: c / 4.0, bandwidth: c / 4.0, latency: c / 4.0 }),
            rounds: None,
            messages: None,
        }
    }

    fn rows(s: &str) -> usize {
        s.lines().count() - 1
    }

    #[test]
    fn single_method_has_empty_ks_table() {
        let recs: Vec<_> = (0..5).map(|i| rec(i, Method::Cbba, Some(1.0 + i as f64))).collect();
        let r = build_report(&[("x".into(), recs)]).unwrap();
        assert!(r.ks.is_empty());
        assert_eq!(rows(&r.files["ks_tests.csv"]), 0);
        assert!(r.files["summary.txt"].contains("no comparisons"));
    }

    #[test]
    fn identical_methods_are_not_significant() {
        let mut recs = Vec::new();
        for i in 0..10 {
            for m in Method::ALL {
                recs.push(rec(i, m, Some(0.5 + i as f64)));
            }
        }
        let r = build_report(&[("x".into(), recs)]).unwrap();
        assert_eq!(r.ks.len(), 10);
        for row in &r.ks {
            assert_eq!(row.result.statistic, 0.0);
            assert_eq!(row.result.p_value, 1.0);
            assert!(!row.result.significant_at_0_05);
        }
    }

    #[test]
    fn tables_reconcile_with_records() {
        let mut recs = Vec::new();
        for i in 0..6 {
            recs.push(rec(i, Method::Centralised, (i % 3 != 0).then_some(1.0)));
            recs.push(rec(i, Method::FirstFit, (i % 2 == 0).then_some(2.0)));
        }
        let r = build_report(&[("a".into(), recs.clone())]).unwrap();
        assert_eq!(rows(&r.files["time_by_app.csv"]), recs.len());
        let ok = recs.iter().filter(|r| r.outcome == Outcome::Success).count();
        assert_eq!(rows(&r.files["cost_dist.csv"]), ok);
        assert_eq!(rows(&r.files["qos_dist.csv"]), ok);
        assert_eq!(rows(&r.files["cost_delta.csv"]), 6);
        let failed_total: usize = r.files["failures.csv"]
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(failed_total, recs.len() - ok);
        let flagged = r.files["cost_delta.csv"].lines().filter(|l| l.ends_with(",true")).count();
        // first-fit fails on odd ids, centralised on multiples of 3
        assert_eq!(flagged, (0..6).filter(|i| i % 2 == 1 || i % 3 == 0).count());
    }

    #[test]
    fn output_is_deterministic() {
        let recs: Vec<_> = (0..4).flat_map(|i| [rec(i, Method::Centralised, Some(1.0)), rec(i, Method::Cbba, Some(1.5))]).collect();
        let sets = [("a".to_string(), recs)];
        assert_eq!(build_report(&sets).unwrap(), build_report(&sets).unwrap());
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(build_report(&[("a".into(), vec![])]), Err(ReportError::Empty)));
    }
}
