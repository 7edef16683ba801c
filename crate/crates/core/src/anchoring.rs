//! Action-aware perceptual anchoring.
//!
//! Each cycle aligns the new detections with the maintained anchors, then
//! reasons about the anchors that were not aligned ("lost"):
//!
//! 1. attachment-follow: an anchored ancestor in the attachment hierarchy
//!    carries the anchor along at its recorded center offset;
//! 2. occlusion: a lost anchor sufficiently covered by a visible one stays
//!    where it was last seen;
//! 3. otherwise it is missing, and dropped after enough consecutive misses.
//!
//! Unmatched detections become candidates that turn into anchors once they
//! have been seen for enough consecutive frames. With `action_aware` off the
//! engine ignores actions entirely, which gives the plain anchoring baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::alignment::{align, Alignable, AlignmentConfig};
use crate::attachment::{
    highest_anchored_ancestor, ActionEvent, AttachDetachRegistry, AttachmentHierarchy, Effect,
};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Detection, FrameIndex, ObjectClass};

/// Tracker-assigned symbol. Never reused within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AnchorId(pub u32);

impl fmt::Display for AnchorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl std::str::FromStr for AnchorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.strip_prefix('p')
            .and_then(|n| n.parse().ok())
            .map(AnchorId)
            .ok_or_else(|| Error::Parse(format!("bad anchor id `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorStatus {
    Visible,
    Occluded,
    AttachedFollow,
    Missing,
}

impl AnchorStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnchorStatus::Visible => "visible",
            AnchorStatus::Occluded => "occluded",
            AnchorStatus::AttachedFollow => "attached-follow",
            AnchorStatus::Missing => "missing",
        }
    }
}

impl fmt::Display for AnchorStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for AnchorStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visible" => Ok(AnchorStatus::Visible),
            "occluded" => Ok(AnchorStatus::Occluded),
            "attached-follow" => Ok(AnchorStatus::AttachedFollow),
            "missing" => Ok(AnchorStatus::Missing),
            other => Err(Error::Parse(format!("unknown anchor status `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: AnchorId,
    pub class: ObjectClass,
    /// Last detected box, or the followed box while attached.
    pub bbox: BoundingBox,
    pub status: AnchorStatus,
    pub missing_count: u32,
    pub seen_count: u32,
}

impl Alignable for Anchor {
    fn last_box(&self) -> BoundingBox {
        self.bbox
    }

    fn class(&self) -> &ObjectClass {
        &self.class
    }
}

/// Unconfirmed object: seen, but not yet for `appear_threshold` frames in a
/// row. Its id is reserved at creation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: AnchorId,
    pub class: ObjectClass,
    pub bbox: BoundingBox,
    pub hits: u32,
    pub misses: u32,
}

impl Alignable for Candidate {
    fn last_box(&self) -> BoundingBox {
        self.bbox
    }

    fn class(&self) -> &ObjectClass {
        &self.class
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchoringConfig {
    pub alignment: AlignmentConfig,
    pub appear_threshold: u32,
    pub disappear_threshold: u32,
    pub occlusion_overlap: f64,
    pub action_aware: bool,
}

impl Default for AnchoringConfig {
    fn default() -> Self {
        Self {
            alignment: AlignmentConfig::default(),
            appear_threshold: 3,
            disappear_threshold: 5,
            occlusion_overlap: 0.4,
            action_aware: true,
        }
    }
}

impl AnchoringConfig {
    /// Baseline that never looks at attachments.
    pub fn baseline(mut self) -> Self {
        self.action_aware = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.alignment.validate()?;
        if self.appear_threshold < 1 || self.disappear_threshold < 1 {
            return Err(Error::Invalid("appear/disappear thresholds must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.occlusion_overlap) {
            return Err(Error::Invalid(format!(
                "occlusion overlap must be in [0, 1], got {}",
                self.occlusion_overlap
            )));
        }
        Ok(())
    }
}

/// Center offset of a child from its parent, in pixels.
pub type Offset = (f64, f64);

/// Belief state after a cycle.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldState {
    /// Last processed frame; `None` before the first cycle.
    pub frame: Option<FrameIndex>,
    pub anchors: BTreeMap<AnchorId, Anchor>,
    pub candidates: BTreeMap<AnchorId, Candidate>,
    pub hierarchy: AttachmentHierarchy<AnchorId>,
    pub offsets: BTreeMap<AnchorId, Offset>,
    pub next_id: u32,
    /// Anchor-detection pairs matched by this cycle's alignment.
    pub matched_pairs: usize,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    fn symbol_box(&self, id: AnchorId) -> Option<BoundingBox> {
        self.anchors
            .get(&id)
            .map(|a| a.bbox)
            .or_else(|| self.candidates.get(&id).map(|c| c.bbox))
    }

    fn forget(&mut self, id: AnchorId) {
        let orphans: Vec<AnchorId> = self.hierarchy.children(&id).copied().collect();
        for child in orphans {
            self.offsets.remove(&child);
        }
        self.hierarchy.remove_node(&id);
        self.offsets.remove(&id);
    }

    /// Checks the structural invariants. Intended for tests.
    pub fn check_invariants(&self) -> Result<()> {
        if !self.hierarchy.is_forest() {
            return Err(Error::Invalid("hierarchy is not a forest".into()));
        }
        for (c, p) in self.hierarchy.edges() {
            for s in [c, p] {
                if self.symbol_box(*s).is_none() {
                    return Err(Error::Invalid(format!("hierarchy references unknown {s}")));
                }
            }
        }
        let children: BTreeSet<AnchorId> = self.hierarchy.edges().map(|(c, _)| *c).collect();
        let offset_keys: BTreeSet<AnchorId> = self.offsets.keys().copied().collect();
        if children != offset_keys {
            return Err(Error::Invalid("offsets out of sync with hierarchy".into()));
        }
        if self.anchors.keys().any(|id| self.candidates.contains_key(id)) {
            return Err(Error::Invalid("symbol is both anchor and candidate".into()));
        }
        Ok(())
    }

    /// Maintained anchor for an object class; prefers anchors that are not
    /// missing, then the oldest.
    pub fn anchor_of_class(&self, class: &ObjectClass) -> Option<&Anchor> {
        self.anchors
            .values()
            .filter(|a| a.class == *class)
            .min_by_key(|a| (a.status == AnchorStatus::Missing, a.id))
    }
}

/// Outcome of hypothesis reasoning for one lost anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Disposition {
    Follow { ancestor: AnchorId, bbox: BoundingBox },
    Occluded,
    Missing,
}

/// Moves `child` rigidly with `parent`: same size, center at parent center
/// plus `offset`.
pub fn follow_parent(child: &Anchor, parent: &Anchor, offset: Offset) -> Result<BoundingBox> {
    follow_box(&child.bbox, &parent.bbox, offset)
}

fn follow_box(child: &BoundingBox, parent: &BoundingBox, offset: Offset) -> Result<BoundingBox> {
    let (px, py) = parent.center().ok_or(Error::ParentNotLocalizable)?;
    Ok(child.recentered(px + offset.0, py + offset.1))
}

fn center_offset(child: &BoundingBox, parent: &BoundingBox) -> Option<Offset> {
    let (cx, cy) = child.center()?;
    let (px, py) = parent.center()?;
    Some((cx - px, cy - py))
}

/// Decides what happens to each lost anchor. `state` must already hold the
/// refreshed boxes and `Visible` status of this frame's matched anchors.
///
/// Anchors are visited shallowest first so that a parent that was itself
/// kept (followed or occluded) can carry its children in the same cycle.
pub fn hypothesis_reason(
    lost: &BTreeSet<AnchorId>,
    state: &WorldState,
    cfg: &AnchoringConfig,
) -> Result<BTreeMap<AnchorId, Disposition>> {
    let visible: Vec<&Anchor> = state
        .anchors
        .values()
        .filter(|a| !lost.contains(&a.id) && a.status == AnchorStatus::Visible)
        .collect();
    let mut anchored: BTreeSet<AnchorId> = visible.iter().map(|a| a.id).collect();
    let mut moved: BTreeMap<AnchorId, BoundingBox> = BTreeMap::new();
    let mut out = BTreeMap::new();

    let mut order: Vec<AnchorId> = lost.iter().copied().collect();
    order.sort_by_key(|id| (state.hierarchy.depth(id), *id));

    for id in order {
        let anchor = state
            .anchors
            .get(&id)
            .ok_or_else(|| Error::Invalid(format!("lost symbol {id} is not an anchor")))?;

        if cfg.action_aware {
            if let Some(ancestor) = highest_anchored_ancestor(&state.hierarchy, &id, &anchored) {
                let mut offset = (0.0, 0.0);
                for node in std::iter::once(&id).chain(state.hierarchy.ancestors(&id)) {
                    if *node == ancestor {
                        break;
                    }
                    let (dx, dy) = state.offsets.get(node).copied().unwrap_or_default();
                    offset.0 += dx;
                    offset.1 += dy;
                }
                let parent_box = moved
                    .get(&ancestor)
                    .copied()
                    .or_else(|| state.anchors.get(&ancestor).map(|a| a.bbox))
                    .ok_or(Error::ParentNotLocalizable)?;
                let bbox = follow_box(&anchor.bbox, &parent_box, offset)?;
                moved.insert(id, bbox);
                anchored.insert(id);
                out.insert(id, Disposition::Follow { ancestor, bbox });
                continue;
            }
        }

        let occluded = visible
            .iter()
            .any(|v| anchor.bbox.coverage_by(&v.bbox) >= cfg.occlusion_overlap);
        if occluded {
            anchored.insert(id);
            out.insert(id, Disposition::Occluded);
        } else {
            out.insert(id, Disposition::Missing);
        }
    }
    Ok(out)
}

/// One anchoring cycle.
///
/// `actions` are the agent actions of the previous cycle, already expressed
/// over this state's symbols. Detections must all belong to `frame`, and
/// frames must strictly increase across cycles.
pub fn step(
    prev: &WorldState,
    frame: FrameIndex,
    detections: &[Detection],
    actions: &[ActionEvent<AnchorId>],
    registry: &AttachDetachRegistry,
    cfg: &AnchoringConfig,
) -> Result<WorldState> {
    if prev.frame.is_some_and(|f| frame <= f) {
        return Err(Error::Invalid(format!(
            "frame {frame} does not follow frame {}",
            prev.frame.unwrap_or_default()
        ))
        .at_frame(frame));
    }
    if let Some(d) = detections.iter().find(|d| d.frame != frame) {
        return Err(Error::Invalid(format!("detection stamped with frame {}", d.frame)).at_frame(frame));
    }
    if let Some(d) = detections.iter().find(|d| d.bbox.is_absent()) {
        return Err(Error::Invalid(format!("absent box for {}", d.class)).at_frame(frame));
    }

    let mut state = prev.clone();
    state.frame = Some(frame);

    // (1) attachment hierarchy from the previous cycle's actions
    if cfg.action_aware {
        for action in actions {
            let effect = state
                .hierarchy
                .apply(action, registry)
                .map_err(|e| e.at_frame(frame))?;
            match effect {
                Effect::Attached => {
                    let offset = match (state.symbol_box(action.child), state.symbol_box(action.parent)) {
                        (Some(c), Some(p)) => center_offset(&c, &p),
                        _ => None,
                    };
                    let Some(offset) = offset else {
                        state.hierarchy.detach(&action.child, &action.parent);
                        debug!("frame {frame}: dropping {} on unknown symbols", action.verb);
                        continue;
                    };
                    state.offsets.insert(action.child, offset);
                }
                Effect::Detached => {
                    state.offsets.remove(&action.child);
                }
                Effect::Unchanged => {}
            }
        }
    }

    // (2) alignment against maintained anchors
    let ids: Vec<AnchorId> = state.anchors.keys().copied().collect();
    let anchors: Vec<Anchor> = state.anchors.values().cloned().collect();
    let result = align(&anchors, detections, &cfg.alignment);
    state.matched_pairs = result.matched.len();
    for &(a, d) in &result.matched {
        let anchor = state.anchors.get_mut(&ids[a]).expect("aligned anchor exists");
        anchor.bbox = detections[d].bbox;
        anchor.class = detections[d].class.clone();
        anchor.status = AnchorStatus::Visible;
        anchor.missing_count = 0;
        anchor.seen_count += 1;
    }

    // (3) hypothesis reasoning over lost anchors
    let lost: BTreeSet<AnchorId> = result.lost.iter().map(|&a| ids[a]).collect();
    let dispositions = hypothesis_reason(&lost, &state, cfg).map_err(|e| e.at_frame(frame))?;
    for (id, disposition) in dispositions {
        let anchor = state.anchors.get_mut(&id).expect("lost anchor exists");
        match disposition {
            Disposition::Follow { bbox, .. } => {
                anchor.bbox = bbox;
                anchor.status = AnchorStatus::AttachedFollow;
                anchor.missing_count = 0;
            }
            Disposition::Occluded => {
                anchor.status = AnchorStatus::Occluded;
                anchor.missing_count = 0;
            }
            Disposition::Missing => {
                anchor.status = AnchorStatus::Missing;
                anchor.missing_count += 1;
            }
        }
    }

    // re-detected children refresh their offset to the (localized) parent
    let refresh: Vec<(AnchorId, AnchorId)> = state
        .hierarchy
        .edges()
        .map(|(c, p)| (*c, *p))
        .filter(|(c, p)| {
            let child_visible = state
                .anchors
                .get(c)
                .is_some_and(|a| a.status == AnchorStatus::Visible);
            let parent_localized = state
                .anchors
                .get(p)
                .is_some_and(|a| a.status != AnchorStatus::Missing);
            child_visible && parent_localized
        })
        .collect();
    for (c, p) in refresh {
        if let Some(offset) = center_offset(&state.anchors[&c].bbox, &state.anchors[&p].bbox) {
            state.offsets.insert(c, offset);
        }
    }

    // (4) candidates: align leftovers, promote or expire
    let leftovers: Vec<Detection> = result
        .unmatched_detections
        .iter()
        .map(|&d| detections[d].clone())
        .collect();
    let cand_ids: Vec<AnchorId> = state.candidates.keys().copied().collect();
    let cands: Vec<Candidate> = state.candidates.values().cloned().collect();
    let cand_result = align(&cands, &leftovers, &cfg.alignment);
    for &(c, d) in &cand_result.matched {
        let cand = state.candidates.get_mut(&cand_ids[c]).expect("candidate exists");
        cand.bbox = leftovers[d].bbox;
        cand.class = leftovers[d].class.clone();
        cand.hits += 1;
        cand.misses = 0;
    }
    for &c in &cand_result.lost {
        let id = cand_ids[c];
        let cand = state.candidates.get_mut(&id).expect("candidate exists");
        cand.hits = 0;
        cand.misses += 1;
        if cand.misses >= cfg.disappear_threshold {
            state.candidates.remove(&id);
            state.forget(id);
        }
    }
    for &d in &cand_result.unmatched_detections {
        let id = AnchorId(state.next_id);
        state.next_id += 1;
        state.candidates.insert(
            id,
            Candidate {
                id,
                class: leftovers[d].class.clone(),
                bbox: leftovers[d].bbox,
                hits: 1,
                misses: 0,
            },
        );
    }
    let ready: Vec<AnchorId> = state
        .candidates
        .values()
        .filter(|c| c.hits >= cfg.appear_threshold)
        .map(|c| c.id)
        .collect();
    for id in ready {
        let cand = state.candidates.remove(&id).expect("ready candidate exists");
        state.anchors.insert(
            id,
            Anchor {
                id,
                class: cand.class,
                bbox: cand.bbox,
                status: AnchorStatus::Visible,
                missing_count: 0,
                seen_count: cand.hits,
            },
        );
    }

    // (5) unexplained anchors expire
    let expired: Vec<AnchorId> = state
        .anchors
        .values()
        .filter(|a| a.missing_count >= cfg.disappear_threshold)
        .map(|a| a.id)
        .collect();
    for id in expired {
        state.anchors.remove(&id);
        state.forget(id);
    }

    Ok(state)
}

/// Stateful driver that owns the configuration and resolves action
/// arguments (object names) to anchors.
///
/// Names are resolved through a catalog of `name -> class`; a name missing
/// from the catalog is parsed as a class token. The anchor (or candidate)
/// of that class with the smallest id is used.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: AnchoringConfig,
    registry: AttachDetachRegistry,
    catalog: BTreeMap<String, ObjectClass>,
    state: WorldState,
}

impl Tracker {
    pub fn new(cfg: AnchoringConfig, registry: AttachDetachRegistry) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            registry,
            catalog: BTreeMap::new(),
            state: WorldState::new(),
        })
    }

    pub fn with_catalog(mut self, catalog: BTreeMap<String, ObjectClass>) -> Self {
        self.catalog = catalog;
        self
    }

    pub fn config(&self) -> &AnchoringConfig {
        &self.cfg
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    fn resolve(&self, name: &str) -> Option<AnchorId> {
        let class = match self.catalog.get(name) {
            Some(c) => c.clone(),
            None => name.parse::<ObjectClass>().ok()?,
        };
        let anchor = self
            .state
            .anchors
            .values()
            .filter(|a| a.class == class)
            .map(|a| a.id)
            .min();
        anchor.or_else(|| {
            self.state
                .candidates
                .values()
                .filter(|c| c.class == class)
                .map(|c| c.id)
                .min()
        })
    }

    /// Runs one cycle for `frame`. `actions` are the previous frame's.
    pub fn step(
        &mut self,
        frame: FrameIndex,
        detections: &[Detection],
        actions: &[ActionEvent<String>],
    ) -> Result<&WorldState> {
        let bound: Vec<ActionEvent<AnchorId>> = if self.cfg.action_aware {
            actions
                .iter()
                .filter_map(|a| {
                    let child = self.resolve(&a.child);
                    let parent = self.resolve(&a.parent);
                    match (child, parent) {
                        (Some(c), Some(p)) if c != p => Some(a.map(|s| if *s == a.child { c } else { p })),
                        _ => {
                            debug!("frame {frame}: unresolved action {} {} {}", a.verb, a.child, a.parent);
                            None
                        }
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        self.state = step(&self.state, frame, detections, &bound, &self.registry, &self.cfg)?;
        Ok(&self.state)
    }
}

/// One emitted belief: `frame symbol class x y w h status`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub frame: FrameIndex,
    pub symbol: AnchorId,
    pub class: ObjectClass,
    pub bbox: BoundingBox,
    pub status: AnchorStatus,
}

impl PredictionRecord {
    pub fn from_state(state: &WorldState) -> Vec<PredictionRecord> {
        let frame = state.frame.unwrap_or_default();
        state
            .anchors
            .values()
            .map(|a| PredictionRecord {
                frame,
                symbol: a.id,
                class: a.class.clone(),
                bbox: a.bbox,
                status: a.status,
            })
            .collect()
    }
}

/// Output of running a tracker over a whole stream.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub records: Vec<PredictionRecord>,
    /// Per frame, the box believed for the target class (if any).
    pub target_boxes: Vec<Option<BoundingBox>>,
    /// Per frame, the target anchor's symbol (if any).
    pub target_symbols: Vec<Option<AnchorId>>,
    /// Matched anchor count per frame.
    pub matched_per_frame: Vec<usize>,
    pub final_state: WorldState,
}

/// Feeds `n_frames` frames through `tracker`; the actions stamped `t - 1`
/// are delivered with frame `t`.
pub fn run_stream(
    tracker: &mut Tracker,
    n_frames: usize,
    detections: &[Detection],
    actions: &[ActionEvent<String>],
    target: &ObjectClass,
) -> Result<RunOutput> {
    let mut per_frame: Vec<Vec<Detection>> = vec![Vec::new(); n_frames];
    for d in detections {
        per_frame
            .get_mut(d.frame)
            .ok_or_else(|| Error::Invalid(format!("detection at frame {} beyond stream end", d.frame)))?
            .push(d.clone());
    }
    let mut actions_by_frame: BTreeMap<FrameIndex, Vec<ActionEvent<String>>> = BTreeMap::new();
    for a in actions {
        actions_by_frame.entry(a.frame).or_default().push(a.clone());
    }

    let mut out = RunOutput::default();
    for (t, dets) in per_frame.iter().enumerate() {
        let prev_actions = t
            .checked_sub(1)
            .and_then(|p| actions_by_frame.get(&p))
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let state = tracker.step(t, dets, prev_actions)?;
        out.matched_per_frame.push(state.matched_pairs);
        out.records.extend(PredictionRecord::from_state(state));
        let target_anchor = state.anchor_of_class(target);
        out.target_boxes.push(target_anchor.map(|a| a.bbox));
        out.target_symbols.push(target_anchor.map(|a| a.id));
    }
    out.final_state = tracker.state().clone();
    Ok(out)
}
