//! Replay of an external CSV as a task sequence: one task per period,
//! seeded train/test split inside each period.

use std::path::Path;

use rand::seq::SliceRandom;

use crate::objective::{LossModel, PenalizedQuadratic, Sample, SmoothedHinge, TaskSequence};
use crate::rng::{rng_for, Stream};
use crate::{Error, Result};

use super::config::LossKind;

/// Rows grouped by period, in period order.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodData {
    pub labels: Vec<String>,
    pub rows: Vec<Vec<Sample>>,
}

/// Numeric order when every label parses as a number, else lexicographic.
fn order_labels(labels: &mut [String]) {
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.trim().parse::<f64>().ok()).collect();
    match numeric {
        Some(_) => labels.sort_by(|a, b| {
            let (x, y) = (a.trim().parse::<f64>().unwrap(), b.trim().parse::<f64>().unwrap());
            x.total_cmp(&y)
        }),
        None => labels.sort(),
    }
}

pub fn load_csv(
    path: &Path,
    period_column: &str,
    feature_columns: &[String],
    target_column: &str,
    loss: LossKind,
) -> Result<PeriodData> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column {name:?}")))
    };
    let pcol = col(period_column)?;
    let fcols: Vec<usize> = feature_columns.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let tcol = col(target_column)?;

    let mut labels: Vec<String> = Vec::new();
    let mut raw: Vec<(String, Sample)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize, name: &str| -> Result<f64> {
            let s = rec.get(i).unwrap_or("").trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data(format!("row {}: column {name:?} is not a number: {s:?}", line + 2)))
        };
        let mut z = Vec::with_capacity(fcols.len() + 1);
        for (i, name) in fcols.iter().zip(feature_columns) {
            z.push(num(*i, name)?);
        }
        let mut y = num(tcol, target_column)?;
        if loss == LossKind::Hinge {
            y = match y {
                1.0 => 1.0,
                -1.0 | 0.0 => -1.0,
                v => return Err(Error::Data(format!("row {}: class label must be 0/1 or -1/+1, got {v}", line + 2))),
            };
        }
        z.push(y);
        let p = rec.get(pcol).unwrap_or("").trim().to_string();
        if !labels.contains(&p) {
            labels.push(p.clone());
        }
        raw.push((p, z));
    }
    if labels.is_empty() {
        return Err(Error::Data(format!("{} has no rows", path.display())));
    }
    order_labels(&mut labels);
    let mut rows = vec![Vec::new(); labels.len()];
    for (p, z) in raw {
        let i = labels.iter().position(|l| *l == p).expect("collected above");
        rows[i].push(z);
    }
    Ok(PeriodData { labels, rows })
}

/// Writes `rows_per_period` draws from every task of `task` as a replay CSV
/// with columns `period, w1..wd, y`.
pub fn write_task_csv(task: &dyn TaskSequence, rows_per_period: u64, seed: u64, path: &Path) -> Result<()> {
    let d = task.model().dim();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["period".to_string()];
    header.extend((1..=d).map(|j| format!("w{j}")));
    header.push("y".into());
    w.write_record(&header)?;
    for n in 1..=task.horizon() {
        for k in 0..rows_per_period {
            let z = task.sample(Stream::Aux(0), n, k, seed);
            let mut rec = vec![n.to_string()];
            rec.extend(z.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Train and test split of every period plus per-seed sampling orders.
pub struct ReplaySequence {
    model: Box<dyn LossModel>,
    pub train: Vec<Vec<Sample>>,
    pub test: Vec<Vec<Sample>>,
    train_order: Vec<Vec<usize>>,
    upfront_order: Vec<usize>,
}

impl ReplaySequence {
    pub fn new(data: &PeriodData, loss: LossKind, lambda: f64, test_fraction: f64, seed: u64) -> Result<Self> {
        let d = data.rows.iter().flatten().next().map(|z| z.len() - 1).ok_or(Error::EmptyBatch)?;
        let model: Box<dyn LossModel> = match loss {
            LossKind::Quadratic => Box::new(PenalizedQuadratic { d, lambda }),
            LossKind::Hinge => Box::new(SmoothedHinge { d, lambda }),
        };
        let mut train = Vec::new();
        let mut test = Vec::new();
        let mut train_order = Vec::new();
        for (i, rows) in data.rows.iter().enumerate() {
            let mut idx: Vec<usize> = (0..rows.len()).collect();
            idx.shuffle(&mut rng_for(seed, Stream::Setup, 1000 + i as u64, 0));
            let n_test = (test_fraction * rows.len() as f64).round() as usize;
            if n_test == 0 || n_test >= rows.len() {
                return Err(Error::Data(format!(
                    "period {:?} has {} rows, too few for a train/test split",
                    data.labels[i],
                    rows.len()
                )));
            }
            test.push(idx[..n_test].iter().map(|&j| rows[j].clone()).collect::<Vec<_>>());
            let tr: Vec<Sample> = idx[n_test..].iter().map(|&j| rows[j].clone()).collect();
            let mut order: Vec<usize> = (0..tr.len()).collect();
            order.shuffle(&mut rng_for(seed, Stream::Train, i as u64, 0));
            train_order.push(order);
            train.push(tr);
        }
        let mut upfront_order: Vec<usize> = (0..train[0].len()).collect();
        upfront_order.shuffle(&mut rng_for(seed, Stream::Upfront, 0, 0));
        Ok(Self { model, train, test, train_order, upfront_order })
    }
}

impl TaskSequence for ReplaySequence {
    fn model(&self) -> &dyn LossModel {
        self.model.as_ref()
    }

    fn horizon(&self) -> usize {
        self.train.len()
    }

    /// Training draws cycle through a fixed permutation of the period's
    /// training rows; the upfront arm cycles through period 1.
    fn sample(&self, stream: Stream, n: usize, k: u64, _seed: u64) -> Sample {
        match stream {
            Stream::Upfront => {
                let o = &self.upfront_order;
                self.train[0][o[(k % o.len() as u64) as usize]].clone()
            }
            Stream::Test => {
                let t = &self.test[n - 1];
                t[(k % t.len() as u64) as usize].clone()
            }
            _ => {
                let o = &self.train_order[n - 1];
                self.train[n - 1][o[(k % o.len() as u64) as usize]].clone()
            }
        }
    }

    fn holdout(&self, n: usize) -> Option<&[Sample]> {
        Some(&self.test[n - 1])
    }
}
