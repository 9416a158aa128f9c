//! CSV formats. Floats use Rust's shortest round-trip formatting, missing
//! values are empty fields, line endings are LF.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::{Error, Result};

/// One row per `(seed, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub n: usize,
    pub k: u64,
    pub rho_hat: Option<f64>,
    pub rho_certified: Option<f64>,
    pub eps_hat: f64,
    pub gap: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_loss_upfront: Option<f64>,
    /// Kept out of the main CSV so reruns are byte-identical.
    pub wall_seconds: f64,
}

pub const RECORD_COLUMNS: [&str; 9] =
    ["seed", "n", "k", "rho_hat", "rho_certified", "eps_hat", "gap", "test_loss", "test_loss_upfront"];

/// Numeric columns averaged in the aggregate file.
pub const METRICS: [&str; 7] = ["k", "rho_hat", "rho_certified", "eps_hat", "gap", "test_loss", "test_loss_upfront"];

impl RunRecord {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "k" => Some(self.k as f64),
            "rho_hat" => self.rho_hat,
            "rho_certified" => self.rho_certified,
            "eps_hat" => Some(self.eps_hat),
            "gap" => self.gap,
            "test_loss" => self.test_loss,
            "test_loss_upfront" => self.test_loss_upfront,
            _ => None,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(f)))
}

fn finish(mut w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.flush()?;
    w.into_inner().map_err(|e| Error::Io(e.to_string()))?.flush()?;
    Ok(())
}

pub fn write_records(path: &Path, rows: &[RunRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(RECORD_COLUMNS).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.n.to_string(),
            r.k.to_string(),
            opt(r.rho_hat),
            opt(r.rho_certified),
            format!("{}", r.eps_hat),
            opt(r.gap),
            opt(r.test_loss),
            opt(r.test_loss_upfront),
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    finish(w)
}

pub fn write_timing(path: &Path, rows: &[RunRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["seed", "n", "wall_seconds"]).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record([r.seed.to_string(), r.n.to_string(), format!("{}", r.wall_seconds)])
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    finish(w)
}

fn parse_opt(s: &str, col: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| Error::Data(format!("column {col}: bad number {s:?}")))
}

fn parse_req<T: std::str::FromStr>(s: &str, col: &str) -> Result<T> {
    s.parse::<T>().map_err(|_| Error::Data(format!("column {col}: bad value {s:?}")))
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != RECORD_COLUMNS {
        return Err(Error::Data(format!("{}: unexpected header", path.display())));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let r = rec?;
        out.push(RunRecord {
            seed: parse_req(&r[0], "seed")?,
            n: parse_req(&r[1], "n")?,
            k: parse_req(&r[2], "k")?,
            rho_hat: parse_opt(&r[3], "rho_hat")?,
            rho_certified: parse_opt(&r[4], "rho_certified")?,
            eps_hat: parse_req(&r[5], "eps_hat")?,
            gap: parse_opt(&r[6], "gap")?,
            test_loss: parse_opt(&r[7], "test_loss")?,
            test_loss_upfront: parse_opt(&r[8], "test_loss_upfront")?,
            wall_seconds: 0.0,
        });
    }
    Ok(out)
}

/// Labelled classifier scores on a task's test split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub seed: u64,
    pub n: usize,
    pub label: f64,
    pub score: f64,
}

pub fn write_scores(path: &Path, rows: &[Score]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["seed", "n", "label", "score"]).map_err(|e| Error::Io(e.to_string()))?;
    for s in rows {
        w.write_record([s.seed.to_string(), s.n.to_string(), format!("{}", s.label), format!("{}", s.score)])
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    finish(w)
}

pub fn read_scores(path: &Path) -> Result<Vec<Score>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let r = rec?;
        if r.len() != 4 {
            return Err(Error::Data(format!("{}: expected 4 columns", path.display())));
        }
        out.push(Score {
            seed: parse_req(&r[0], "seed")?,
            n: parse_req(&r[1], "n")?,
            label: parse_req(&r[2], "label")?,
            score: parse_req(&r[3], "score")?,
        });
    }
    Ok(out)
}

/// Mean and standard error of one metric at one `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moment {
    pub count: usize,
    pub mean: f64,
    pub se: f64,
}

pub fn moment(values: &[f64]) -> Option<Moment> {
    if values.is_empty() {
        return None;
    }
    let c = values.len() as f64;
    let mean = values.iter().sum::<f64>() / c;
    let se = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (c - 1.0);
        (var / c).sqrt()
    } else {
        0.0
    };
    Some(Moment { count: values.len(), mean, se })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub n: usize,
    pub seeds: usize,
    /// In [`METRICS`] order.
    pub metrics: Vec<Option<Moment>>,
}

impl AggregateRow {
    pub fn get(&self, name: &str) -> Option<Moment> {
        METRICS.iter().position(|m| *m == name).and_then(|i| self.metrics[i])
    }
}

/// Per-`n` means over seeds; seeds are visited in ascending order so the
/// result is reproducible from the per-seed files.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut rows: Vec<&RunRecord> = records.iter().collect();
    rows.sort_by_key(|r| (r.n, r.seed));
    let max_n = rows.iter().map(|r| r.n).max().unwrap_or(0);
    (1..=max_n)
        .filter_map(|n| {
            let at: Vec<&&RunRecord> = rows.iter().filter(|r| r.n == n).collect();
            if at.is_empty() {
                return None;
            }
            let metrics = METRICS
                .iter()
                .map(|m| moment(&at.iter().filter_map(|r| r.metric(m)).collect::<Vec<_>>()))
                .collect();
            Some(AggregateRow { n, seeds: at.len(), metrics })
        })
        .collect()
}

pub fn aggregate_header() -> Vec<String> {
    let mut h = vec!["n".to_string(), "seeds".to_string()];
    for m in METRICS {
        h.push(format!("{m}_mean"));
        h.push(format!("{m}_se"));
    }
    h
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(aggregate_header()).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        let mut rec = vec![r.n.to_string(), r.seeds.to_string()];
        for m in &r.metrics {
            rec.push(opt(m.map(|m| m.mean)));
            rec.push(opt(m.map(|m| m.se)));
        }
        w.write_record(rec).map_err(|e| Error::Io(e.to_string()))?;
    }
    finish(w)
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if headers != aggregate_header() {
        return Err(Error::Data(format!("{}: unexpected aggregate header", path.display())));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let r = rec?;
        let seeds: usize = parse_req(&r[1], "seeds")?;
        let mut metrics = Vec::new();
        for (i, m) in METRICS.iter().enumerate() {
            let mean = parse_opt(&r[2 + 2 * i], m)?;
            let se = parse_opt(&r[3 + 2 * i], m)?;
            metrics.push(mean.map(|mean| Moment { count: seeds, mean, se: se.unwrap_or(0.0) }));
        }
        out.push(AggregateRow { n: parse_req(&r[0], "n")?, seeds, metrics });
    }
    Ok(out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
