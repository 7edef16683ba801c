//! Attention-guidance artifacts for a downstream video model.
//!
//! The tracking vector names, per frame, the object a model should look at
//! to find the target: the target itself while it is visible, otherwise the
//! root of its attachment chain. The weight matrix puts `w` on that
//! object's column and 1 everywhere else.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attachment::AttachmentHierarchy;
use crate::error::{Error, Result};
use crate::simulator::{FrameAnnotation, ObjectId, TaskLabel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackingVector {
    pub entries: Vec<ObjectId>,
}

impl TrackingVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One id per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{e}");
        }
        out
    }
}

/// Object id to matrix column, in order of first appearance in the
/// annotations (ids sorted within a frame).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    columns: BTreeMap<ObjectId, usize>,
    order: Vec<ObjectId>,
}

impl ColumnMap {
    pub fn from_annotations(frames: &[FrameAnnotation]) -> Self {
        let mut map = ColumnMap::default();
        for f in frames {
            for id in f.boxes.keys() {
                map.insert(id);
            }
        }
        map
    }

    pub fn insert(&mut self, id: &str) -> usize {
        if let Some(&c) = self.columns.get(id) {
            return c;
        }
        let c = self.order.len();
        self.columns.insert(id.to_string(), c);
        self.order.push(id.to_string());
        c
    }

    pub fn column(&self, id: &str) -> Result<usize> {
        self.columns.get(id).copied().ok_or_else(|| Error::NoColumn(id.to_string()))
    }

    pub fn ids(&self) -> &[ObjectId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceMatrix {
    pub values: Vec<Vec<f64>>,
    pub normalized: bool,
}

impl GuidanceMatrix {
    pub fn rows(&self) -> usize {
        self.values.len()
    }

    pub fn cols(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Column of the largest entry in row `t` (first on ties).
    pub fn row_argmax(&self, t: usize) -> Option<usize> {
        let row = self.values.get(t)?;
        let mut best = None::<(usize, f64)>;
        for (i, &v) in row.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Dense rows, space separated, full round-trip precision.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in &self.values {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
        out
    }
}

pub fn build_tracking_vector(
    annotations: &[FrameAnnotation],
    timeline: &[AttachmentHierarchy<ObjectId>],
    target: &str,
) -> Result<TrackingVector> {
    if annotations.len() != timeline.len() {
        return Err(Error::LengthMismatch(format!(
            "{} annotated frames, {} hierarchy frames",
            annotations.len(),
            timeline.len()
        )));
    }
    let target = target.to_string();
    let entries = annotations
        .iter()
        .zip(timeline)
        .map(|(a, h)| match a.label {
            TaskLabel::Visible => target.clone(),
            _ => h.root(&target).clone(),
        })
        .collect();
    Ok(TrackingVector { entries })
}

pub fn build_weight_matrix(
    v: &TrackingVector,
    columns: &ColumnMap,
    k: usize,
    w: f64,
    normalize: bool,
) -> Result<GuidanceMatrix> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::Invalid(format!("guidance weight must be positive, got {w}")));
    }
    let mut values = Vec::with_capacity(v.len());
    for id in &v.entries {
        let col = columns.column(id)?;
        if col >= k {
            return Err(Error::Invalid(format!("column {col} of `{id}` exceeds K = {k}")));
        }
        let mut row = vec![1.0; k];
        row[col] = w;
        if normalize {
            softmax(&mut row);
        }
        values.push(row);
    }
    Ok(GuidanceMatrix {
        values,
        normalized: normalize,
    })
}

fn softmax(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}
