#![allow(dead_code)]

use permanence::alignment::CostMatrix;
use permanence::anchoring::{run_stream, AnchoringConfig, RunOutput, Tracker};
use permanence::attachment::AttachDetachRegistry;
use permanence::geometry::Detection;
use permanence::simulator::{degrade, render_ground_truth, GroundTruth, NoiseProfile, ScenarioScript};
use rand::Rng;

/// Exhaustive search over partial injective row->column maps. Returns
/// (matched count, total cost) of the best map: most pairs first, then
/// least cost.
pub fn brute_force(m: &CostMatrix) -> (usize, f64) {
    fn go(m: &CostMatrix, r: usize, used: &mut Vec<bool>, count: usize, cost: f64, best: &mut (usize, f64)) {
        if r == m.rows() {
            if count > best.0 || (count == best.0 && cost < best.1) {
                *best = (count, cost);
            }
            return;
        }
        go(m, r + 1, used, count, cost, best);
        for c in 0..m.cols() {
            if let (false, Some(x)) = (used[c], m.get(r, c)) {
                used[c] = true;
                go(m, r + 1, used, count + 1, cost + x, best);
                used[c] = false;
            }
        }
    }
    let mut best = (0, 0.0);
    go(m, 0, &mut vec![false; m.cols()], 0, 0.0, &mut best);
    best
}

/// Up to 6x6 with integer costs in 0..=50 and roughly a quarter forbidden.
pub fn random_matrix(rng: &mut impl Rng) -> CostMatrix {
    let rows = rng.random_range(0..=6);
    let cols = rng.random_range(0..=6);
    let mut m = CostMatrix::new(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            if !rng.random_bool(0.25) {
                m.set(r, c, Some(rng.random_range(0..=50) as f64));
            }
        }
    }
    m
}

pub fn pp_stream(script: &ScenarioScript) -> (GroundTruth, Vec<Detection>) {
    let truth = render_ground_truth(script).unwrap();
    let stream = degrade(&truth, &NoiseProfile::perfect()).unwrap();
    (truth, stream)
}

pub fn track(script: &ScenarioScript, stream: &[Detection], cfg: AnchoringConfig) -> RunOutput {
    let mut tracker = Tracker::new(cfg, AttachDetachRegistry::containment())
        .unwrap()
        .with_catalog(script.catalog());
    let target = script.target_class().unwrap().clone();
    run_stream(&mut tracker, script.n_frames, stream, &script.actions, &target).unwrap()
}
