//! AUC, log loss and multi-seed aggregation.

use std::fmt::Write as _;

use crate::{Error, Result};

/// Area under the ROC curve via average ranks (Mann-Whitney U). Tied scores
/// across classes count one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            op: "auc",
            left: (scores.len(), 1),
            right: (labels.len(), 1),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric(format!("score {i} is NaN")));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes ({positives} positives, {negatives} negatives)"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let rank = (i + 1 + j) as f64 / 2.0;
        let tied_positives = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        positive_rank_sum += rank * tied_positives as f64;
        i = j;
    }
    let p = positives as f64;
    Ok((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

/// Mean binary cross-entropy of probabilities against labels.
pub fn mean_logloss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    crate::train::bce_loss(probs, labels)
}

/// Mean and population standard deviation.
pub fn aggregate_runs(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::UndefinedMetric("no runs to aggregate".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedMetrics {
    pub seed: u64,
    pub best_epoch: usize,
    pub auc: f64,
    pub logloss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub method: String,
    pub split: String,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub logloss_mean: f64,
    pub logloss_std: f64,
    pub runs: Vec<SeedMetrics>,
    pub fingerprint: String,
}

impl MetricsReport {
    pub fn new(method: &str, split: &str, runs: Vec<SeedMetrics>, fingerprint: &str) -> Result<Self> {
        let aucs: Vec<f64> = runs.iter().map(|r| r.auc).collect();
        let losses: Vec<f64> = runs.iter().map(|r| r.logloss).collect();
        let (auc_mean, auc_std) = aggregate_runs(&aucs)?;
        let (logloss_mean, logloss_std) = aggregate_runs(&losses)?;
        Ok(Self {
            method: method.to_string(),
            split: split.to_string(),
            auc_mean,
            auc_std,
            logloss_mean,
            logloss_std,
            runs,
            fingerprint: fingerprint.to_string(),
        })
    }

    pub const CSV_HEADER: &'static str =
        "method,split,auc_mean,auc_std,logloss_mean,logloss_std,seeds,std_divisor,config_fingerprint";

    /// One CSV row matching `CSV_HEADER`. Seeds are `;`-separated.
    pub fn csv_row(&self) -> String {
        let seeds: Vec<String> = self.runs.iter().map(|r| r.seed.to_string()).collect();
        format!(
            "{},{},{},{},{},{},{},n,{}",
            self.method,
            self.split,
            self.auc_mean,
            self.auc_std,
            self.logloss_mean,
            self.logloss_std,
            seeds.join(";"),
            self.fingerprint
        )
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} on {} ({} seeds)", self.method, self.split, self.runs.len());
        let _ = writeln!(s, "{:>6} {:>6} {:>12} {:>12}", "seed", "epoch", "auc", "logloss");
        for r in &self.runs {
            let _ = writeln!(s, "{:>6} {:>6} {:>12.6} {:>12.6}", r.seed, r.best_epoch, r.auc, r.logloss);
        }
        let _ = writeln!(
            s,
            "AUC {:.6} ± {:.6}   Logloss {:.6} ± {:.6}",
            self.auc_mean, self.auc_std, self.logloss_mean, self.logloss_std
        );
        s
    }
}
