//! Per-frame association of maintained anchors with new detections.
//!
//! Dissimilarities at or above the cap `tau` are forbidden. Among the
//! remaining entries the solver first maximizes the number of matched pairs
//! and then minimizes their total cost (Hungarian method with dual
//! potentials on a padded square matrix). Equal-cost optima are broken
//! towards the lexicographically smallest `(anchor, detection)` sequence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Detection, ObjectClass};

/// Default cost cap, the middle of the 3000 / 6500 / 10000 sweep.
pub const DEFAULT_TAU: f64 = 6500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub tau: f64,
    pub position_weight: f64,
    pub size_weight: f64,
    pub class_mismatch_penalty: f64,
}

impl AlignmentConfig {
    /// Unit weights with a class-mismatch penalty equal to `tau`, so pairs of
    /// different classes can never match.
    pub fn with_tau(tau: f64) -> Self {
        Self {
            tau,
            position_weight: 1.0,
            size_weight: 1.0,
            class_mismatch_penalty: tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Invalid(format!("tau must be positive, got {}", self.tau)));
        }
        for (name, w) in [
            ("position weight", self.position_weight),
            ("size weight", self.size_weight),
            ("class mismatch penalty", self.class_mismatch_penalty),
        ] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Invalid(format!("{name} must be >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self::with_tau(DEFAULT_TAU)
    }
}

/// Anything the aligner can compare against a detection.
pub trait Alignable {
    fn last_box(&self) -> BoundingBox;
    fn class(&self) -> &ObjectClass;
}

impl Alignable for (BoundingBox, ObjectClass) {
    fn last_box(&self) -> BoundingBox {
        self.0
    }

    fn class(&self) -> &ObjectClass {
        &self.1
    }
}

impl Alignable for Detection {
    fn last_box(&self) -> BoundingBox {
        self.bbox
    }

    fn class(&self) -> &ObjectClass {
        &self.class
    }
}

/// Squared center distance plus squared size change plus class penalty.
pub fn pairwise_cost(
    anchor_box: &BoundingBox,
    anchor_class: &ObjectClass,
    det: &Detection,
    cfg: &AlignmentConfig,
) -> f64 {
    let dx = (anchor_box.x + anchor_box.w / 2.0) - (det.bbox.x + det.bbox.w / 2.0);
    let dy = (anchor_box.y + anchor_box.h / 2.0) - (det.bbox.y + det.bbox.h / 2.0);
    let dw = anchor_box.w - det.bbox.w;
    let dh = anchor_box.h - det.bbox.h;
    let mismatch = if *anchor_class == det.class {
        0.0
    } else {
        cfg.class_mismatch_penalty
    };
    cfg.position_weight * (dx * dx + dy * dy) + cfg.size_weight * (dw * dw + dh * dh) + mismatch
}

/// Rectangular cost matrix; `None` marks a forbidden entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Option<f64>>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![None; rows * cols],
        }
    }

    /// Builds from dense rows; `None` entries are forbidden.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Invalid("ragged cost matrix".into()));
        }
        if rows.iter().flatten().flatten().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::Invalid("costs must be finite and non-negative".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, cost: Option<f64>) {
        self.data[r * self.cols + c] = cost;
    }
}

/// Anchor x detection costs, with entries `>= tau` forbidden.
pub fn build_cost_matrix<A: Alignable>(
    anchors: &[A],
    detections: &[Detection],
    cfg: &AlignmentConfig,
) -> CostMatrix {
    let mut m = CostMatrix::new(anchors.len(), detections.len());
    for (r, a) in anchors.iter().enumerate() {
        let bbox = a.last_box();
        if bbox.is_absent() {
            continue;
        }
        for (c, d) in detections.iter().enumerate() {
            let cost = pairwise_cost(&bbox, a.class(), d, cfg);
            if cost < cfg.tau {
                m.set(r, c, Some(cost));
            }
        }
    }
    m
}

/// Optimal matching: `(row, col)` pairs sorted by row.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

struct Solved {
    row_to_col: Vec<Option<usize>>,
    count: usize,
    cost: f64,
}

struct Duals {
    row: Vec<f64>,
    col: Vec<f64>,
    big: f64,
}

fn total_of(m: &CostMatrix, row_to_col: &[Option<usize>]) -> (usize, f64) {
    let mut count = 0;
    let mut cost = 0.0;
    for (r, c) in row_to_col.iter().enumerate() {
        if let Some(c) = *c {
            count += 1;
            cost += m.get(r, c).expect("only allowed entries are kept");
        }
    }
    (count, cost)
}

/// Hungarian method on the square padding of `rows x cols` restricted to the
/// given row/column subsets. Forbidden and padding cells cost `big`, which
/// exceeds any sum of allowed costs, so the optimum maximizes the number of
/// allowed pairs first.
fn hungarian(m: &CostMatrix, rows: &[usize], cols: &[usize]) -> (Vec<Option<usize>>, Duals) {
    let n = rows.len().max(cols.len());
    let allowed_sum: f64 = rows
        .iter()
        .flat_map(|&r| cols.iter().filter_map(move |&c| m.get(r, c)))
        .sum();
    let big = allowed_sum + 1.0;
    let cell = |i: usize, j: usize| -> f64 {
        match (rows.get(i), cols.get(j)) {
            (Some(&r), Some(&c)) => m.get(r, c).unwrap_or(big),
            _ => big,
        }
    };

    // 1-based potentials; p[j] is the row matched to column j, 0 = free.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cell(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![None; m.rows()];
    for j in 1..=n {
        let i = p[j];
        if i == 0 {
            continue;
        }
        if let (Some(&r), Some(&c)) = (rows.get(i - 1), cols.get(j - 1)) {
            if m.get(r, c).is_some() {
                row_to_col[r] = Some(c);
            }
        }
    }
    let mut row = vec![0.0; m.rows()];
    let mut col = vec![0.0; m.cols()];
    for (i, &r) in rows.iter().enumerate() {
        row[r] = u[i + 1];
    }
    for (j, &c) in cols.iter().enumerate() {
        col[c] = v[j + 1];
    }
    (row_to_col, Duals { row, col, big })
}

/// Optimum with some rows pinned to a column (or to "unmatched").
fn solve_pinned(m: &CostMatrix, pinned: &[(usize, Option<usize>)]) -> Solved {
    let mut free_rows = vec![true; m.rows()];
    let mut free_cols = vec![true; m.cols()];
    for &(r, c) in pinned {
        free_rows[r] = false;
        if let Some(c) = c {
            free_cols[c] = false;
        }
    }
    let rows: Vec<usize> = (0..m.rows()).filter(|&r| free_rows[r]).collect();
    let cols: Vec<usize> = (0..m.cols()).filter(|&c| free_cols[c]).collect();
    let (mut row_to_col, _) = hungarian(m, &rows, &cols);
    for &(r, c) in pinned {
        row_to_col[r] = c;
    }
    let (count, cost) = total_of(m, &row_to_col);
    Solved {
        row_to_col,
        count,
        cost,
    }
}

/// Minimum-cost matching among allowed entries of maximum cardinality.
pub fn solve_assignment(m: &CostMatrix) -> Assignment {
    if m.rows() == 0 || m.cols() == 0 {
        return Assignment {
            pairs: Vec::new(),
            total_cost: 0.0,
        };
    }
    let all_rows: Vec<usize> = (0..m.rows()).collect();
    let all_cols: Vec<usize> = (0..m.cols()).collect();
    let (row_to_col, duals) = hungarian(m, &all_rows, &all_cols);
    let (best_count, best_cost) = total_of(m, &row_to_col);

    // Every optimal matching uses only edges that are tight under an optimal
    // dual, so only those are worth re-solving for when breaking ties.
    let slack_tol = 1e-9 * (1.0 + duals.big);
    let cost_tol = 1e-10 * (1.0 + best_cost.abs());
    let tight = |r: usize, c: usize| -> bool {
        m.get(r, c)
            .is_some_and(|cost| cost - duals.row[r] - duals.col[c] <= slack_tol)
    };

    let mut current = row_to_col;
    let mut pinned: Vec<(usize, Option<usize>)> = Vec::with_capacity(m.rows());
    let mut taken = vec![false; m.cols()];
    for r in 0..m.rows() {
        let limit = current[r].unwrap_or(m.cols());
        for c in (0..limit).filter(|&c| !taken[c] && tight(r, c)) {
            let mut trial_pins = pinned.clone();
            trial_pins.push((r, Some(c)));
            let trial = solve_pinned(m, &trial_pins);
            if trial.count == best_count && (trial.cost - best_cost).abs() <= cost_tol {
                current = trial.row_to_col;
                break;
            }
        }
        if let Some(c) = current[r] {
            taken[c] = true;
        }
        pinned.push((r, current[r]));
    }

    let pairs: Vec<(usize, usize)> = current
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| (r, c)))
        .collect();
    let (_, total_cost) = total_of(m, &current);
    Assignment { pairs, total_cost }
}

/// Partition of anchors and detections after one alignment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignmentResult {
    /// `(anchor index, detection index)`, sorted by anchor.
    pub matched: Vec<(usize, usize)>,
    pub lost: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

pub fn align<A: Alignable>(
    anchors: &[A],
    detections: &[Detection],
    cfg: &AlignmentConfig,
) -> AlignmentResult {
    let m = build_cost_matrix(anchors, detections, cfg);
    let assignment = solve_assignment(&m);
    let mut anchor_used = vec![false; anchors.len()];
    let mut det_used = vec![false; detections.len()];
    for &(a, d) in &assignment.pairs {
        anchor_used[a] = true;
        det_used[d] = true;
    }
    AlignmentResult {
        matched: assignment.pairs,
        lost: (0..anchors.len()).filter(|&a| !anchor_used[a]).collect(),
        unmatched_detections: (0..detections.len()).filter(|&d| !det_used[d]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Shape;

    fn det(x: f64, y: f64, w: f64, h: f64) -> Detection {
        Detection::new(0, ObjectClass::snitch(), BoundingBox::new(x, y, w, h)).unwrap()
    }

    fn m(rows: &[&[Option<f64>]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn cost_examples() {
        let cfg = AlignmentConfig::default();
        let a = BoundingBox::new(10.0, 10.0, 20.0, 20.0);
        let snitch = ObjectClass::snitch();
        assert_eq!(pairwise_cost(&a, &snitch, &det(10.0, 10.0, 20.0, 20.0), &cfg), 0.0);
        assert_eq!(pairwise_cost(&a, &snitch, &det(60.0, 10.0, 20.0, 20.0), &cfg), 2500.0);
        // pure size change
        assert_eq!(pairwise_cost(&a, &snitch, &det(9.0, 9.0, 22.0, 22.0), &cfg), 8.0);
        let cone = ObjectClass::new(Shape::Cone, crate::geometry::SizeClass::Large, "rubber", "green");
        assert_eq!(pairwise_cost(&a, &cone, &det(10.0, 10.0, 20.0, 20.0), &cfg), cfg.tau);
        for tau in [3000.0, 6500.0, 10000.0] {
            let cfg = AlignmentConfig::with_tau(tau);
            assert!(pairwise_cost(&a, &snitch, &det(10.0, 10.0, 20.0, 20.0), &cfg) < cfg.tau);
        }
    }

    #[test]
    fn config_validation() {
        assert!(AlignmentConfig::with_tau(0.0).validate().is_err());
        assert!(AlignmentConfig::with_tau(f64::NAN).validate().is_err());
        let mut cfg = AlignmentConfig::default();
        cfg.size_weight = -1.0;
        assert!(cfg.validate().is_err());
        assert!(AlignmentConfig::default().validate().is_ok());
    }

    #[test]
    fn cost_matrix_cap() {
        let cfg = AlignmentConfig::with_tau(100.0);
        let anchors = vec![(BoundingBox::new(0.0, 0.0, 10.0, 10.0), ObjectClass::snitch())];
        // exactly tau away: 10 px horizontal -> 100
        let at_tau = vec![det(10.0, 0.0, 10.0, 10.0)];
        let mm = build_cost_matrix(&anchors, &at_tau, &cfg);
        assert_eq!(mm.get(0, 0), None);
        let r = align(&anchors, &at_tau, &cfg);
        assert!(r.matched.is_empty());
        assert_eq!(r.lost, vec![0]);
        assert_eq!(r.unmatched_detections, vec![0]);

        let same = vec![det(0.0, 0.0, 10.0, 10.0)];
        assert_eq!(build_cost_matrix(&anchors, &same, &cfg).get(0, 0), Some(0.0));
    }

    #[test]
    fn empty_inputs() {
        let cfg = AlignmentConfig::default();
        let none: Vec<(BoundingBox, ObjectClass)> = Vec::new();
        let dets = vec![det(0.0, 0.0, 5.0, 5.0), det(50.0, 0.0, 5.0, 5.0)];
        let mm = build_cost_matrix(&none, &dets, &cfg);
        assert_eq!((mm.rows(), mm.cols()), (0, 2));
        let r = align(&none, &dets, &cfg);
        assert_eq!(r.unmatched_detections, vec![0, 1]);

        let anchors = vec![(BoundingBox::new(0.0, 0.0, 5.0, 5.0), ObjectClass::snitch())];
        let r = align(&anchors, &[], &cfg);
        assert_eq!(r.lost, vec![0]);
    }

    #[test]
    fn solver_examples() {
        let diag = m(&[
            &[Some(0.0), Some(1000.0), Some(1000.0)],
            &[Some(1000.0), Some(0.0), Some(1000.0)],
            &[Some(1000.0), Some(1000.0), Some(0.0)],
        ]);
        assert_eq!(solve_assignment(&diag).pairs, vec![(0, 0), (1, 1), (2, 2)]);

        let a = solve_assignment(&m(&[&[Some(1.0), Some(10.0)], &[Some(10.0), Some(1.0)]]));
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 2.0);
    }

    #[test]
    fn global_not_greedy() {
        // A: d1 100, d2 200; B: d2 150 only
        let a = solve_assignment(&m(&[&[Some(100.0), Some(200.0)], &[None, Some(150.0)]]));
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        // greedy on the cheapest entry would strand B
        let b = solve_assignment(&m(&[&[Some(1.0), Some(2.0)], &[Some(3.0), None]]));
        assert_eq!(b.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn cardinality_beats_cost() {
        let a = solve_assignment(&m(&[&[Some(0.0), Some(50.0)], &[Some(1.0), None]]));
        assert_eq!(a.pairs.len(), 2);
    }

    #[test]
    fn rectangular_and_forbidden() {
        let a = solve_assignment(&m(&[&[Some(5.0), Some(1.0), Some(7.0)]]));
        assert_eq!(a.pairs, vec![(0, 1)]);
        let b = solve_assignment(&m(&[&[None], &[Some(3.0)], &[Some(2.0)]]));
        assert_eq!(b.pairs, vec![(2, 0)]);
        let c = solve_assignment(&m(&[&[None, None], &[None, None]]));
        assert!(c.pairs.is_empty());
        assert_eq!(c.total_cost, 0.0);
    }

    #[test]
    fn ties_break_lexicographically() {
        let all_equal = m(&[
            &[Some(1.0), Some(1.0), Some(1.0)],
            &[Some(1.0), Some(1.0), Some(1.0)],
            &[Some(1.0), Some(1.0), Some(1.0)],
        ]);
        assert_eq!(solve_assignment(&all_equal).pairs, vec![(0, 0), (1, 1), (2, 2)]);

        // one anchor, two equally good detections -> the first one
        let a = solve_assignment(&m(&[&[Some(4.0), Some(4.0)]]));
        assert_eq!(a.pairs, vec![(0, 0)]);
        // two anchors competing for one detection -> the first anchor
        let b = solve_assignment(&m(&[&[Some(4.0)], &[Some(4.0)]]));
        assert_eq!(b.pairs, vec![(0, 0)]);
        // matching row 0 beats leaving it out at equal cost
        let c = solve_assignment(&m(&[&[Some(2.0), None], &[Some(2.0), Some(2.0)]]));
        assert_eq!(c.pairs, vec![(0, 0), (1, 1)]);
    }
}
