use std::fmt::Write as _;
use std::path::Path;

use super::TrainError;

/// Accuracy summary in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub top1: f64,
    pub topk: f64,
    pub macro_recall: f64,
}

/// Scores `logits` (`rows × classes`, row-major) against `labels`.
///
/// A sample counts as a top-k hit when fewer than `k` classes outrank its label;
/// ties go to the lower class index. Macro recall averages over classes present in `labels`.
pub fn evaluate(logits: &[f64], classes: usize, labels: &[usize], k: usize) -> Result<Evaluation, TrainError> {
    if labels.is_empty() {
        return Err(TrainError::Contract("cannot evaluate an empty dataset".into()));
    }
    if k == 0 || k > classes {
        return Err(TrainError::Config(format!("top-{k} requested with {classes} classes")));
    }
    if logits.len() != labels.len() * classes {
        return Err(TrainError::Contract(format!(
            "{} logits for {} samples of {classes} classes",
            logits.len(),
            labels.len()
        )));
    }
    let mut hits1 = 0usize;
    let mut hitsk = 0usize;
    let mut per_class = vec![(0usize, 0usize); classes];
    for (row, &y) in logits.chunks(classes).zip(labels) {
        if y >= classes {
            return Err(TrainError::Contract(format!("label {y} out of range for {classes} classes")));
        }
        let rank = (0..classes)
            .filter(|&j| row[j] > row[y] || (row[j] == row[y] && j < y))
            .count();
        per_class[y].1 += 1;
        if rank == 0 {
            hits1 += 1;
            per_class[y].0 += 1;
        }
        if rank < k {
            hitsk += 1;
        }
    }
    let n = labels.len() as f64;
    let recalls: Vec<f64> = per_class
        .iter()
        .filter(|(_, total)| *total > 0)
        .map(|&(hit, total)| hit as f64 / total as f64)
        .collect();
    Ok(Evaluation {
        top1: 100.0 * hits1 as f64 / n,
        topk: 100.0 * hitsk as f64 / n,
        macro_recall: 100.0 * recalls.iter().sum::<f64>() / recalls.len() as f64,
    })
}

/// One epoch of a distillation run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub l_feat: f64,
    pub l_logit: f64,
    pub l_crd: f64,
    pub l_all: f64,
    pub train_top1: f64,
    pub test_top1: f64,
    pub test_top5: f64,
    pub macro_recall: f64,
    pub w_rgb: f64,
    pub w_edge: f64,
    pub w_hf: f64,
}

pub const METRICS_HEADER: &str =
    "epoch,l_feat,l_logit,l_crd,l_all,train_top1,test_top1,test_top5,macro_recall,w_rgb,w_edge,w_hf";
pub const WEIGHTS_HEADER: &str = "epoch,w_rgb,w_edge,w_hf";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn metrics_csv(&self) -> String {
        let mut out = format!("{METRICS_HEADER}\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.9},{:.9},{:.9}",
                r.epoch,
                r.l_feat,
                r.l_logit,
                r.l_crd,
                r.l_all,
                r.train_top1,
                r.test_top1,
                r.test_top5,
                r.macro_recall,
                r.w_rgb,
                r.w_edge,
                r.w_hf
            )
            .unwrap();
        }
        out
    }

    pub fn weights_csv(&self) -> String {
        let mut out = format!("{WEIGHTS_HEADER}\n");
        for r in &self.rows {
            writeln!(out, "{},{:.9},{:.9},{:.9}", r.epoch, r.w_rgb, r.w_edge, r.w_hf).unwrap();
        }
        out
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), TrainError> {
        let dir = dir.as_ref();
        std::fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        std::fs::write(dir.join("weights.csv"), self.weights_csv())?;
        Ok(())
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

/// `class,<name_0>,...` rows of per-class mean logits.
pub fn class_logits_csv(classes: &[String], means: &[Vec<f64>]) -> String {
    let mut out = String::from("class");
    for c in classes {
        write!(out, ",{c}").unwrap();
    }
    out.push('\n');
    for (name, row) in classes.iter().zip(means) {
        out.push_str(name);
        for v in row {
            write!(out, ",{v:.6}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Mean logit vector of the samples of each class. Classes without samples get zeros.
pub fn class_mean_logits(logits: &[f64], classes: usize, labels: &[usize]) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; classes]; classes];
    let mut counts = vec![0usize; classes];
    for (row, &y) in logits.chunks(classes).zip(labels) {
        counts[y] += 1;
        for (s, v) in sums[y].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    sums
}
