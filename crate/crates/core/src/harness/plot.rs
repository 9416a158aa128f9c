//! Plot tables derived from a run directory, plus ROC utilities.

use std::path::Path;

use crate::{Error, Result};

use super::config::RunConfig;
use super::io::{read_aggregate, read_scores, write_text, AggregateRow, Score};

/// `(threshold, fpr, tpr)` points, starting at `(inf, 0, 0)`. Labels are `+-1`;
/// a sample is predicted positive when its score is `>= threshold`.
pub fn roc_curve(scores: &[(f64, f64)]) -> Result<Vec<(f64, f64, f64)>> {
    let pos = scores.iter().filter(|(l, _)| *l > 0.0).count() as f64;
    let neg = scores.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::Data("ROC needs both classes".into()));
    }
    let mut s: Vec<(f64, f64)> = scores.to_vec();
    s.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut out = vec![(f64::INFINITY, 0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < s.len() {
        let thr = s[i].1;
        while i < s.len() && s[i].1 == thr {
            if s[i].0 > 0.0 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        out.push((thr, fp / neg, tp / pos));
    }
    Ok(out)
}

/// Trapezoid area under an ROC curve.
pub fn auc(curve: &[(f64, f64, f64)]) -> f64 {
    curve.windows(2).map(|w| (w[1].1 - w[0].1) * (w[1].2 + w[0].2) / 2.0).sum()
}

fn col(rows: &[AggregateRow], name: &str) -> Result<Vec<(usize, f64, f64)>> {
    let v: Vec<(usize, f64, f64)> =
        rows.iter().filter_map(|r| r.get(name).map(|m| (r.n, m.mean, m.se))).collect();
    if v.is_empty() {
        return Err(Error::Data(format!("aggregate has no values for {name}")));
    }
    Ok(v)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Writes `plot_rho.csv`, `plot_k.csv`, `plot_gap.csv`, `plot_test_loss.csv`
/// and, when score files exist, `roc_n{n}.csv` for each requested `n`
/// (default: first and last task). Returns the files written.
pub fn emit_plotdata(dir: &Path, roc_ns: Option<&[usize]>) -> Result<Vec<String>> {
    let cfg = RunConfig::load(&dir.join("config.toml"))?;
    let rows = read_aggregate(&dir.join("aggregate.csv"))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        write_text(&dir.join(name), &text)?;
        written.push(name.to_string());
        Ok(())
    };

    let rho_true = cfg.policy.rho.or(cfg.task.declared_rho());
    let mut t = String::from("n,rho_hat,rho_certified,rho\n");
    let cert = col(&rows, "rho_certified")?;
    for (n, mean, _) in col(&rows, "rho_hat")? {
        let c = cert.iter().find(|c| c.0 == n).map(|c| fmt(c.1)).unwrap_or_default();
        t.push_str(&format!("{n},{},{c},{}\n", fmt(mean), rho_true.map(fmt).unwrap_or_default()));
    }
    emit("plot_rho.csv", t)?;

    let mut t = String::from("n,k_mean,k_se\n");
    for (n, m, se) in col(&rows, "k")? {
        t.push_str(&format!("{n},{},{}\n", fmt(m), fmt(se)));
    }
    emit("plot_k.csv", t)?;

    let eps = col(&rows, "eps_hat")?;
    if let Ok(gap) = col(&rows, "gap") {
        let mut t = String::from("n,gap_mean,gap_se,eps_hat,eps\n");
        for (n, m, se) in gap {
            let e = eps.iter().find(|e| e.0 == n).map(|e| fmt(e.1)).unwrap_or_default();
            t.push_str(&format!("{n},{},{},{e},{}\n", fmt(m), fmt(se), fmt(cfg.epsilon)));
        }
        emit("plot_gap.csv", t)?;
    }

    if let Ok(tl) = col(&rows, "test_loss") {
        let up = col(&rows, "test_loss_upfront").unwrap_or_default();
        let mut t = String::from("n,sequential_mean,sequential_se,upfront_mean,upfront_se\n");
        for (n, m, se) in tl {
            let (um, us) = up
                .iter()
                .find(|u| u.0 == n)
                .map(|u| (fmt(u.1), fmt(u.2)))
                .unwrap_or_default();
            t.push_str(&format!("{n},{},{},{um},{us}\n", fmt(m), fmt(se)));
        }
        emit("plot_test_loss.csv", t)?;
    }

    let mut scores: Vec<Score> = Vec::new();
    for s in &cfg.seeds {
        let p = dir.join(format!("scores_seed{s}.csv"));
        if p.exists() {
            scores.extend(read_scores(&p)?);
        }
    }
    if !scores.is_empty() {
        let last = scores.iter().map(|s| s.n).max().unwrap_or(1);
        let default = [1, last];
        let ns = roc_ns.unwrap_or(&default);
        let mut seen = Vec::new();
        let mut areas = String::from("n,auc\n");
        for &n in ns {
            if seen.contains(&n) {
                continue;
            }
            seen.push(n);
            let pts: Vec<(f64, f64)> = scores.iter().filter(|s| s.n == n).map(|s| (s.label, s.score)).collect();
            if pts.is_empty() {
                return Err(Error::Data(format!("no scores for n = {n}")));
            }
            let curve = roc_curve(&pts)?;
            areas.push_str(&format!("{n},{}\n", fmt(auc(&curve))));
            let mut t = String::from("threshold,fpr,tpr\n");
            for (thr, fpr, tpr) in curve {
                t.push_str(&format!("{},{},{}\n", fmt(thr), fmt(fpr), fmt(tpr)));
            }
            emit(&format!("roc_n{n}.csv"), t)?;
        }
        emit("roc_auc.csv", areas)?;
    }
    Ok(written)
}
