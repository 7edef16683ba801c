//! Per-frame localization scores, aggregated by task label.
//!
//! Each frame from the target's first detection onwards contributes its IoU
//! and center distance to the category of its ground-truth label. A frame
//! without a prediction scores IoU 0, is left out of the distance mean and
//! is counted as missing.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, l2_center, BoundingBox, FrameIndex};
use crate::simulator::TaskLabel;

/// Streaming mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStat {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStat {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStat) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then_some(self.mean)
    }

    /// Sample standard deviation over `sqrt(n)`; zero for a single sample.
    pub fn sem(&self) -> Option<f64> {
        match self.n {
            0 => None,
            1 => Some(0.0),
            n => Some((self.m2.max(0.0) / (n - 1) as f64).sqrt() / (n as f64).sqrt()),
        }
    }
}

impl FromIterator<f64> for RunningStat {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStat::default();
        for x in iter {
            s.push(x);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub frames: u64,
    pub missing: u64,
    pub iou: RunningStat,
    pub l2: RunningStat,
}

impl CategoryStats {
    pub fn merge(&mut self, other: &CategoryStats) {
        self.frames += other.frames;
        self.missing += other.missing;
        self.iou.merge(&other.iou);
        self.l2.merge(&other.l2);
    }

    fn record(&mut self, pred: Option<&BoundingBox>, truth: &BoundingBox) -> Result<()> {
        self.frames += 1;
        match pred {
            Some(p) if !p.is_absent() => {
                self.iou.push(iou(p, truth));
                self.l2.push(l2_center(p, truth)?);
            }
            _ => {
                self.missing += 1;
                self.iou.push(0.0);
            }
        }
        Ok(())
    }
}

/// Scores for one model over one or more scenarios.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub noise: String,
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub seed: u64,
    pub scenarios: u64,
    pub categories: BTreeMap<TaskLabel, CategoryStats>,
    pub overall: CategoryStats,
}

impl EvalReport {
    pub fn new(model: impl Into<String>, noise: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            noise: noise.into(),
            ..Self::default()
        }
    }

    pub fn category(&self, label: TaskLabel) -> Option<&CategoryStats> {
        self.categories.get(&label).filter(|c| c.frames > 0)
    }

    pub fn iou_mean(&self, label: TaskLabel) -> Option<f64> {
        self.category(label).and_then(|c| c.iou.mean())
    }

    pub fn l2_mean(&self, label: TaskLabel) -> Option<f64> {
        self.category(label).and_then(|c| c.l2.mean())
    }

    /// Adds the scores of `other`, which must describe the same model and
    /// noise profile.
    pub fn merge(&mut self, other: &EvalReport) -> Result<()> {
        if self.model != other.model || self.noise != other.noise || self.tau != other.tau {
            return Err(Error::Invalid(format!(
                "cannot merge {}/{} into {}/{}",
                other.model, other.noise, self.model, self.noise
            )));
        }
        self.scenarios += other.scenarios;
        for (label, stats) in &other.categories {
            self.categories.entry(*label).or_default().merge(stats);
        }
        self.overall.merge(&other.overall);
        Ok(())
    }
}

/// Scores one scenario. `predictions`, `truth` and `labels` are indexed by
/// frame; frames before `start` are ignored.
pub fn evaluate(
    model: &str,
    noise: &str,
    predictions: &[Option<BoundingBox>],
    truth: &[BoundingBox],
    labels: &[TaskLabel],
    start: FrameIndex,
) -> Result<EvalReport> {
    if predictions.len() != truth.len() || labels.len() != truth.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions, {} truth boxes, {} labels",
            predictions.len(),
            truth.len(),
            labels.len()
        )));
    }
    let mut report = EvalReport::new(model, noise);
    report.scenarios = 1;
    for t in start..truth.len() {
        let pred = predictions[t].as_ref();
        report
            .categories
            .entry(labels[t])
            .or_default()
            .record(pred, &truth[t])
            .map_err(|e| e.at_frame(t))?;
        report.overall.record(pred, &truth[t]).map_err(|e| e.at_frame(t))?;
    }
    Ok(report)
}

fn cell(stat: &RunningStat) -> String {
    match (stat.mean(), stat.sem()) {
        (Some(m), Some(s)) => format!("{m:.3}±{s:.3}"),
        _ => "-".into(),
    }
}

/// Side-by-side text table, one row per report.
pub fn compare(reports: &[EvalReport]) -> String {
    let mut header = vec!["model".to_string(), "noise".to_string()];
    for label in TaskLabel::ALL {
        header.push(format!("{label} IoU"));
        header.push(format!("{label} L2"));
    }
    header.push("overall IoU".into());
    header.push("overall L2".into());
    header.push("missing".into());

    let mut rows = vec![header];
    for r in reports {
        let mut row = vec![r.model.clone(), r.noise.clone()];
        for label in TaskLabel::ALL {
            let c = r.categories.get(&label).copied().unwrap_or_default();
            row.push(cell(&c.iou));
            row.push(cell(&c.l2));
        }
        row.push(cell(&r.overall.iou));
        row.push(cell(&r.overall.l2));
        row.push(format!("{}/{}", r.overall.missing, r.overall.frames));
        rows.push(row);
    }

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}
