//! Seeded multi-trial experiments: per-stage telemetry with oracle policy
//! values, per-stage aggregates and CSV/SVG artifacts.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_traits::ToPrimitive;
use rayon::prelude::*;
use reachrl_core::exact::{optimal_exact, policy_value_exact};
use reachrl_core::learner::{Learner, LearnerConfig, LearnerError, StageReport, Termination};
use reachrl_core::{Mdp, Rational};
use thiserror::Error;

use crate::svg;

/// Header of `reachrl learn` output.
pub const LEARN_HEADER: [&str; 12] = [
    "k", "delta_k", "eps_k", "p_k", "N_k", "cum_samples", "L_s0", "U_s0", "error", "policy_value",
    "is_optimal", "wall_ms",
];

/// Header of `stages.csv`; wall-clock time is left out so reruns are
/// byte-identical.
pub const STAGES_HEADER: [&str; 13] = [
    "trial", "seed", "k", "delta_k", "eps_k", "p_k", "N_k", "cum_samples", "L_s0", "U_s0", "error",
    "policy_value", "is_optimal",
];

pub const AGGREGATE_HEADER: [&str; 11] = [
    "k", "trials", "padded", "L_median", "L_std", "U_median", "U_std", "error_median", "error_std",
    "value_median", "value_std",
];

/// Oracle-side facts about the true model.
#[derive(Clone, Debug)]
pub struct Oracle {
    pub optimal: Rational,
}

impl Oracle {
    pub fn new(m: &Mdp) -> Self {
        Oracle { optimal: optimal_exact(m).at_initial(m).clone() }
    }
}

/// One stage as reported to users.
#[derive(Clone, Debug, PartialEq)]
pub struct StageRow {
    pub report: StageReport,
    pub policy_value: Rational,
    pub is_optimal: bool,
}

impl StageRow {
    pub fn new(m: &Mdp, oracle: &Oracle, mut report: StageReport) -> Self {
        let v = policy_value_exact(m, &report.policy).expect("learned policies are valid")
            [m.initial().0]
            .clone();
        let as_f64 = v.to_f64().unwrap_or(f64::NAN);
        report.exact_policy_value = Some(as_f64);
        let gap = (&oracle.optimal - &v).to_f64().unwrap_or(f64::INFINITY);
        StageRow { report, is_optimal: gap.abs() <= 1e-9, policy_value: v }
    }

    pub fn value(&self) -> f64 {
        self.report.exact_policy_value.unwrap_or(f64::NAN)
    }

    /// Fields in [`LEARN_HEADER`] order.
    pub fn learn_record(&self) -> Vec<String> {
        let mut rec = self.common_fields();
        rec.push(format!("{:.3}", self.report.wall_ms.unwrap_or(0.0)));
        rec
    }

    fn common_fields(&self) -> Vec<String> {
        let r = &self.report;
        vec![
            r.k.to_string(),
            num(r.params.delta_k),
            num(r.params.eps_k),
            num(r.params.p_k),
            r.n_k.to_string(),
            r.cumulative_samples.to_string(),
            num(r.l_s0),
            num(r.u_s0),
            num(r.error()),
            num(self.value()),
            self.is_optimal.to_string(),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub seed: u64,
    pub rows: Vec<StageRow>,
    pub termination: Option<Termination>,
    pub error: Option<LearnerError>,
}

impl TrialResult {
    /// Stage at and after which every reported policy is optimal.
    pub fn stabilization_stage(&self) -> Option<u32> {
        let last_bad = self.rows.iter().rposition(|r| !r.is_optimal);
        match last_bad {
            None => self.rows.first().map(|r| r.report.k),
            Some(i) => self.rows.get(i + 1).map(|r| r.report.k),
        }
    }
}

/// Runs one learner to completion, streaming each stage to `on_stage`.
pub fn run_trial(
    m: &Mdp,
    oracle: &Oracle,
    config: LearnerConfig,
    mut on_stage: impl FnMut(&StageRow),
) -> TrialResult {
    let mut rows = Vec::new();
    let mut learner = match Learner::new(m, config) {
        Ok(l) => l,
        Err(e) => return TrialResult { seed: config.seed, rows, termination: None, error: Some(e) },
    };
    while learner.should_continue() {
        let start = Instant::now();
        match learner.run_stage() {
            Ok(mut report) => {
                report.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
                let row = StageRow::new(m, oracle, report);
                on_stage(&row);
                rows.push(row);
            }
            Err(e) => return TrialResult { seed: config.seed, rows, termination: None, error: Some(e) },
        }
    }
    TrialResult { seed: config.seed, rows, termination: Some(learner.termination()), error: None }
}

/// `S, S+1, …, S+T−1`.
pub fn seed_list(start: u64, trials: usize) -> Vec<u64> {
    (0..trials as u64).map(|i| start.wrapping_add(i)).collect()
}

/// Runs one trial per seed on up to `jobs` threads; results keep seed order.
pub fn run_bench(m: &Mdp, config: LearnerConfig, seeds: &[u64], jobs: usize) -> Vec<TrialResult> {
    let oracle = Oracle::new(m);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| run_trial(m, &oracle, LearnerConfig { seed, ..config }, |_| {}))
            .collect()
    })
}

/// Shortest round-trip form; exponent notation for very small or large values.
fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Median and population standard deviation.
pub fn median_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    (median, var.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub k: u32,
    pub trials: usize,
    /// Trials that had already stopped and contribute their final stage.
    pub padded: usize,
    pub lower: (f64, f64),
    pub upper: (f64, f64),
    pub error: (f64, f64),
    pub value: (f64, f64),
}

/// Per-stage statistics over all trials that produced at least one stage.
/// Shorter trials carry their last stage forward.
pub fn aggregate(results: &[TrialResult]) -> Vec<AggregateRow> {
    let trials: Vec<&TrialResult> = results.iter().filter(|t| !t.rows.is_empty()).collect();
    let stages = trials.iter().map(|t| t.rows.len()).max().unwrap_or(0);
    (0..stages)
        .map(|i| {
            let rows: Vec<&StageRow> = trials.iter().map(|t| &t.rows[i.min(t.rows.len() - 1)]).collect();
            let padded = trials.iter().filter(|t| t.rows.len() <= i).count();
            let col = |f: &dyn Fn(&StageRow) -> f64| median_std(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            AggregateRow {
                k: i as u32 + 1,
                trials: rows.len(),
                padded,
                lower: col(&|r| r.report.l_s0),
                upper: col(&|r| r.report.u_s0),
                error: col(&|r| r.report.error()),
                value: col(&|r| r.value()),
            }
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io { path: path.to_path_buf(), source }
}

pub fn write_stages_csv<W: Write>(out: W, results: &[TrialResult]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STAGES_HEADER)?;
    for (i, t) in results.iter().enumerate() {
        for row in &t.rows {
            let mut rec = vec![i.to_string(), t.seed.to_string()];
            rec.extend(row.common_fields());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(out: W, rows: &[AggregateRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        let mut rec = vec![r.k.to_string(), r.trials.to_string(), r.padded.to_string()];
        for (m, s) in [r.lower, r.upper, r.error, r.value] {
            rec.push(num(m));
            rec.push(num(s));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// File names written by [`write_bench_artifacts`].
pub const BENCH_FILES: [&str; 5] = ["stages.csv", "aggregate.csv", "bounds.svg", "error.svg", "accuracy.svg"];

/// Writes `stages.csv`, `aggregate.csv` and the three plots into `dir`.
pub fn write_bench_artifacts(dir: &Path, results: &[TrialResult]) -> Result<Vec<AggregateRow>, ArtifactError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let agg = aggregate(results);
    let csv_file = |name: &str| {
        let path = dir.join(name);
        fs::File::create(&path).map(io::BufWriter::new).map_err(|source| ArtifactError::Io { path, source })
    };
    let csv_err = |name: &str| {
        let path = dir.join(name);
        move |source| ArtifactError::Csv { path, source }
    };
    write_stages_csv(csv_file("stages.csv")?, results).map_err(csv_err("stages.csv"))?;
    write_aggregate_csv(csv_file("aggregate.csv")?, &agg).map_err(csv_err("aggregate.csv"))?;

    let ks: Vec<f64> = agg.iter().map(|r| f64::from(r.k)).collect();
    let series = |f: fn(&AggregateRow) -> (f64, f64)| -> Vec<(f64, f64)> {
        ks.iter().zip(&agg).map(|(&k, r)| (k, f(r).0)).collect()
    };
    let bounds = svg::Chart {
        title: "Value bounds vs. stage k",
        y_label: "median value at s0",
        y_range: (0.0, 1.0),
        series: vec![("L", series(|r| r.lower)), ("U", series(|r| r.upper))],
        band: None,
    };
    let band: Vec<(f64, f64, f64)> =
        ks.iter().zip(&agg).map(|(&k, r)| (k, r.error.0 - r.error.1, r.error.0 + r.error.1)).collect();
    let error = svg::Chart {
        title: "Error vs. stage k",
        y_label: "median U - L (band: one stddev)",
        y_range: (0.0, 1.0),
        series: vec![("U - L", series(|r| r.error))],
        band: Some(band),
    };
    let accuracy = svg::Chart {
        title: "Policy accuracy vs. stage k",
        y_label: "median exact policy value",
        y_range: (0.0, 1.0),
        series: vec![("value", series(|r| r.value))],
        band: None,
    };
    for (name, chart) in [("bounds.svg", bounds), ("error.svg", error), ("accuracy.svg", accuracy)] {
        let path = dir.join(name);
        fs::write(&path, chart.render()).map_err(io_err(&path))?;
    }
    Ok(agg)
}
