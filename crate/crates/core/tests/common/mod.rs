#![allow(dead_code)]

use std::path::{Path, PathBuf};

use slowdrift::harness::config::RunConfig;
use slowdrift::harness::io::RunRecord;
use slowdrift::harness::replay::write_task_csv;
use slowdrift::harness::run::{run_in_memory, SeedOutcome};
use slowdrift::synth::make_regression;

pub fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn regression_config() -> RunConfig {
    RunConfig::load(&configs().join("regression.toml")).unwrap()
}

pub fn records(outcomes: &[SeedOutcome]) -> Vec<RunRecord> {
    for o in outcomes {
        if let Some(e) = &o.error {
            panic!("seed {} failed: {e}", o.seed);
        }
    }
    outcomes.iter().flat_map(|o| o.records.clone()).collect()
}

/// Replay config mirroring `regression.toml` with the analytic constants fixed.
pub fn replay_config(csv: &Path, seed: u64, rows_lambda: (usize, f64), p: slowdrift::gap_bounds::FunctionParams) -> RunConfig {
    let (d, lambda) = rows_lambda;
    let features: Vec<String> = (1..=d).map(|j| format!("\"w{j}\"")).collect();
    let text = format!(
        r#"
epsilon = 0.1
seeds = [{seed}]

[task]
kind = "csv"
path = "{path}"
period_column = "period"
feature_columns = [{features}]
target_column = "y"
loss = "quadratic"
lambda = {lambda}

[set]
kind = "ball"
radius = 12.0

[bound]
kind = "last_iterate"

[drift]
method = "direct"
mode = {{ kind = "constant" }}
tn = {{ c = 1.0, eta = 0.375 }}

[psi]
source = "fixed"
m = {m}
big_m = {big_m}
a = {a}
b = {b}

[policy]
kind = "no_update"
"#,
        path = csv.display(),
        features = features.join(", "),
        m = p.m,
        big_m = p.big_m,
        a = p.a,
        b = p.b,
    );
    RunConfig::from_toml(&text).unwrap()
}

/// Exports each seed's regression sequence to CSV and replays it with that
/// seed, so train/test noise is independent across seeds.
pub fn round_trip(seeds: &[u64], rows_per_period: u64, dir: &Path) -> (Vec<RunRecord>, Vec<RunRecord>) {
    let mut cfg = regression_config();
    cfg.seeds = seeds.to_vec();
    let direct = records(&run_in_memory(&cfg, 0).unwrap());
    let mut replayed = Vec::new();
    for &s in seeds {
        let seq = make_regression(5, 0.9, 0.1, 1.0, 20, s).unwrap();
        let csv = dir.join(format!("export_{s}.csv"));
        write_task_csv(&seq, rows_per_period, s, &csv).unwrap();
        let rcfg = replay_config(&csv, s, (5, 0.1), seq.analytic_params(0.0));
        replayed.extend(records(&run_in_memory(&rcfg, 1).unwrap()));
    }
    (direct, replayed)
}

pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-task mean and SE of one column over seeds.
pub fn column(records: &[RunRecord], n: usize, f: impl Fn(&RunRecord) -> Option<f64>) -> (f64, f64) {
    let v: Vec<f64> = records.iter().filter(|r| r.n == n).filter_map(&f).collect();
    mean_se(&v)
}
