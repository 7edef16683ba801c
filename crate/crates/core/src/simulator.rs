//! Synthetic snitch-localization scenarios.
//!
//! A [`ScenarioScript`] lists objects with keyframed center trajectories
//! (linear interpolation, held before the first and after the last
//! keyframe), a constant depth used for 2D occlusion, and the
//! containment actions that form the attachment hierarchy. Rendering
//! produces per-frame ground truth and a task label for the target;
//! [`degrade`] turns ground truth into a detection stream.
//!
//! Label rules, per frame, for the target:
//! * `contained` - it has a parent in the hierarchy and the parent's center
//!   did not move since the previous frame;
//! * `carried` - it has a parent and the parent moved;
//! * `occluded` - not contained, and some uncontained object in front of it
//!   covers at least [`OCCLUSION_LABEL_COVERAGE`] of its box;
//! * `visible` - otherwise.
//!
//! A detector never sees an object that is contained, or whose box is fully
//! covered by an uncontained object in front of it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::attachment::{hierarchy_timeline, ActionEvent, AttachDetachRegistry, AttachmentHierarchy};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Detection, FrameIndex, ObjectClass, Shape, SizeClass};

pub type ObjectId = String;

pub const FRAME_WIDTH: f64 = 320.0;
pub const FRAME_HEIGHT: f64 = 240.0;
pub const DEFAULT_FRAMES: usize = 300;
pub const MIN_OBJECTS: usize = 5;
pub const MAX_OBJECTS: usize = 15;
/// Minimum covered fraction of the target box for the `occluded` label.
pub const OCCLUSION_LABEL_COVERAGE: f64 = 0.7;
const FULL_COVERAGE: f64 = 1.0 - 1e-9;

pub const SNITCH_SIZE: f64 = 16.0;
const CONE_SIZE: f64 = 40.0;
const MARGIN: f64 = 4.0;

pub const COLORS: [&str; 8] = ["gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow"];
const MATERIALS: [&str; 2] = ["metal", "rubber"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: FrameIndex,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptObject {
    pub id: ObjectId,
    pub class: ObjectClass,
    pub w: f64,
    pub h: f64,
    /// Larger is closer to the camera.
    pub depth: f64,
    pub keyframes: Vec<Keyframe>,
}

impl ScriptObject {
    pub fn center_at(&self, t: FrameIndex) -> (f64, f64) {
        let kf = &self.keyframes;
        let first = kf.first().expect("object has keyframes");
        if t <= first.frame {
            return (first.cx, first.cy);
        }
        for pair in kf.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if t <= b.frame {
                if b.frame == a.frame {
                    return (b.cx, b.cy);
                }
                let s = (t - a.frame) as f64 / (b.frame - a.frame) as f64;
                return (a.cx + s * (b.cx - a.cx), a.cy + s * (b.cy - a.cy));
            }
        }
        let last = kf.last().expect("object has keyframes");
        (last.cx, last.cy)
    }

    pub fn box_at(&self, t: FrameIndex) -> BoundingBox {
        let (cx, cy) = self.center_at(t);
        BoundingBox::from_center(cx, cy, self.w, self.h)
    }

    fn last_keyframe(&self) -> Keyframe {
        *self.keyframes.last().expect("object has keyframes")
    }
}

/// Informational log of a scripted motion (`slide`, `rotate`, `contain`,
/// `pick&place`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub verb: String,
    pub object: ObjectId,
    pub start: FrameIndex,
    pub end: FrameIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Template {
    /// No motion at all.
    Static,
    Visible,
    Occluded,
    Contained,
    Carried,
}

impl Template {
    pub const MIXED: [Template; 4] = [
        Template::Visible,
        Template::Occluded,
        Template::Contained,
        Template::Carried,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Template::Static => "static",
            Template::Visible => "visible",
            Template::Occluded => "occluded",
            Template::Contained => "contained",
            Template::Carried => "carried",
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Template::Static),
            "visible" => Ok(Template::Visible),
            "occluded" => Ok(Template::Occluded),
            "contained" => Ok(Template::Contained),
            "carried" => Ok(Template::Carried),
            other => Err(Error::Parse(format!("unknown template `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub n_frames: usize,
    pub frame_width: f64,
    pub frame_height: f64,
    pub template: Template,
    pub target: ObjectId,
    pub objects: Vec<ScriptObject>,
    /// Attachment-relevant actions, sorted by frame.
    pub actions: Vec<ActionEvent<ObjectId>>,
    pub motions: Vec<Motion>,
    #[serde(default)]
    pub registry: AttachDetachRegistry,
}

impl ScenarioScript {
    pub fn object(&self, id: &str) -> Option<&ScriptObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn catalog(&self) -> BTreeMap<ObjectId, ObjectClass> {
        self.objects.iter().map(|o| (o.id.clone(), o.class.clone())).collect()
    }

    pub fn target_class(&self) -> Result<&ObjectClass> {
        self.object(&self.target)
            .map(|o| &o.class)
            .ok_or_else(|| Error::Invalid(format!("target `{}` is not an object", self.target)))
    }

    pub fn timeline(&self) -> Result<Vec<AttachmentHierarchy<ObjectId>>> {
        hierarchy_timeline(&self.actions, &self.registry, self.n_frames)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::Invalid("scenario has no frames".into()));
        }
        let n = self.objects.len();
        if !(MIN_OBJECTS..=MAX_OBJECTS).contains(&n) {
            return Err(Error::Invalid(format!(
                "scenario has {n} objects, expected {MIN_OBJECTS}..={MAX_OBJECTS}"
            )));
        }
        let ids: BTreeSet<&str> = self.objects.iter().map(|o| o.id.as_str()).collect();
        if ids.len() != n {
            return Err(Error::Invalid("duplicate object ids".into()));
        }
        let classes: BTreeSet<&ObjectClass> = self.objects.iter().map(|o| &o.class).collect();
        if classes.len() != n {
            return Err(Error::Invalid("object classes are not unique".into()));
        }
        let snitches: Vec<&ScriptObject> = self.objects.iter().filter(|o| o.class.is_snitch()).collect();
        if snitches.len() != 1 || snitches[0].id != self.target {
            return Err(Error::Invalid("expected exactly one snitch, and it must be the target".into()));
        }
        for o in &self.objects {
            if o.keyframes.is_empty() || o.w <= 0.0 || o.h <= 0.0 {
                return Err(Error::Invalid(format!("object `{}` has no extent or keyframes", o.id)));
            }
            if o.keyframes.windows(2).any(|w| w[1].frame < w[0].frame) {
                return Err(Error::Invalid(format!("keyframes of `{}` are not sorted", o.id)));
            }
            // linear interpolation stays inside the hull of the keyframes
            for k in &o.keyframes {
                let b = BoundingBox::from_center(k.cx, k.cy, o.w, o.h);
                if b.x < -1e-9
                    || b.y < -1e-9
                    || b.right() > self.frame_width + 1e-9
                    || b.bottom() > self.frame_height + 1e-9
                {
                    return Err(Error::Invalid(format!(
                        "object `{}` leaves the frame at keyframe {}",
                        o.id, k.frame
                    )));
                }
            }
        }
        for a in &self.actions {
            for s in [&a.child, &a.parent] {
                if !ids.contains(s.as_str()) {
                    return Err(Error::Invalid(format!("action refers to unknown object `{s}`")));
                }
            }
        }
        self.timeline()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskLabel {
    Visible,
    Occluded,
    Contained,
    Carried,
}

impl TaskLabel {
    pub const ALL: [TaskLabel; 4] = [
        TaskLabel::Visible,
        TaskLabel::Occluded,
        TaskLabel::Contained,
        TaskLabel::Carried,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskLabel::Visible => "visible",
            TaskLabel::Occluded => "occluded",
            TaskLabel::Contained => "contained",
            TaskLabel::Carried => "carried",
        }
    }
}

impl fmt::Display for TaskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for TaskLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visible" => Ok(TaskLabel::Visible),
            "occluded" => Ok(TaskLabel::Occluded),
            "contained" => Ok(TaskLabel::Contained),
            "carried" => Ok(TaskLabel::Carried),
            other => Err(Error::Parse(format!("unknown task label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub frame: FrameIndex,
    pub boxes: BTreeMap<ObjectId, BoundingBox>,
    pub label: TaskLabel,
    /// Objects no detector can see this frame. Derived when rendering a
    /// script; not part of the annotation file.
    #[serde(default)]
    pub hidden: BTreeSet<ObjectId>,
}

/// Ground truth for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub target: ObjectId,
    pub classes: BTreeMap<ObjectId, ObjectClass>,
    pub frames: Vec<FrameAnnotation>,
}

impl GroundTruth {
    pub fn labels(&self) -> Vec<TaskLabel> {
        self.frames.iter().map(|f| f.label).collect()
    }

    pub fn target_class(&self) -> Result<&ObjectClass> {
        self.classes
            .get(&self.target)
            .ok_or_else(|| Error::Invalid(format!("target `{}` has no class", self.target)))
    }

    pub fn target_boxes(&self) -> Result<Vec<BoundingBox>> {
        self.frames
            .iter()
            .map(|f| {
                f.boxes.get(&self.target).copied().ok_or_else(|| {
                    Error::Invalid(format!("frame {} has no box for the target", f.frame))
                })
            })
            .collect()
    }
}

struct FrameFacts {
    label: TaskLabel,
    hidden: BTreeSet<ObjectId>,
}

fn frame_facts(
    script: &ScenarioScript,
    t: FrameIndex,
    hierarchy: &AttachmentHierarchy<ObjectId>,
) -> FrameFacts {
    let boxes: Vec<BoundingBox> = script.objects.iter().map(|o| o.box_at(t)).collect();
    let contained: Vec<bool> = script
        .objects
        .iter()
        .map(|o| hierarchy.parent(&o.id).is_some())
        .collect();
    let max_cover_from_front = |i: usize| -> f64 {
        script
            .objects
            .iter()
            .enumerate()
            .filter(|&(j, o)| j != i && !contained[j] && o.depth > script.objects[i].depth)
            .map(|(j, _)| boxes[i].coverage_by(&boxes[j]))
            .fold(0.0, f64::max)
    };

    let hidden = script
        .objects
        .iter()
        .enumerate()
        .filter(|&(i, _)| contained[i] || max_cover_from_front(i) >= FULL_COVERAGE)
        .map(|(_, o)| o.id.clone())
        .collect();

    let label = match script.objects.iter().position(|o| o.id == script.target) {
        None => TaskLabel::Visible,
        Some(ti) => match hierarchy.parent(&script.target).and_then(|p| script.object(p)) {
            Some(container) => {
                let moved = t > 0 && container.center_at(t) != container.center_at(t - 1);
                if moved {
                    TaskLabel::Carried
                } else {
                    TaskLabel::Contained
                }
            }
            None if max_cover_from_front(ti) >= OCCLUSION_LABEL_COVERAGE => TaskLabel::Occluded,
            None => TaskLabel::Visible,
        },
    };
    FrameFacts { label, hidden }
}

/// Task label of the target at every frame.
pub fn label_frames(script: &ScenarioScript) -> Result<Vec<TaskLabel>> {
    let timeline = script.timeline()?;
    Ok((0..script.n_frames)
        .map(|t| frame_facts(script, t, &timeline[t]).label)
        .collect())
}

/// Interpolated boxes, labels and detector visibility for every frame.
pub fn render_ground_truth(script: &ScenarioScript) -> Result<GroundTruth> {
    let timeline = script.timeline()?;
    let frames = (0..script.n_frames)
        .map(|t| {
            let facts = frame_facts(script, t, &timeline[t]);
            FrameAnnotation {
                frame: t,
                boxes: script.objects.iter().map(|o| (o.id.clone(), o.box_at(t))).collect(),
                label: facts.label,
                hidden: facts.hidden,
            }
        })
        .collect();
    Ok(GroundTruth {
        target: script.target.clone(),
        classes: script.catalog(),
        frames,
    })
}

/// Detector degradation model. A zero profile reproduces ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub name: String,
    /// Chance, per object and frame, that a dropout burst starts.
    pub flicker_probability: f64,
    /// Burst lengths are uniform in `burst_min..=burst_max` frames.
    pub burst_min: usize,
    pub burst_max: usize,
    /// Standard deviation, in pixels, added to each box coordinate.
    pub jitter: f64,
    pub misclassification_probability: f64,
    pub seed: u64,
}

impl NoiseProfile {
    /// Ground truth as the detection stream.
    pub fn perfect() -> Self {
        Self {
            name: "pp".into(),
            flicker_probability: 0.0,
            burst_min: 1,
            burst_max: 1,
            jitter: 0.0,
            misclassification_probability: 0.0,
            seed: 0,
        }
    }

    /// A mildly unreliable detector: rare dropouts, small jitter, rare
    /// label flips.
    pub fn detector() -> Self {
        Self {
            name: "od".into(),
            flicker_probability: 0.01,
            burst_min: 1,
            burst_max: 3,
            jitter: 0.75,
            misclassification_probability: 0.002,
            seed: 0,
        }
    }

    /// Dropout bursts only, each shorter than the default disappear
    /// threshold.
    pub fn flicker() -> Self {
        Self {
            name: "flicker".into(),
            flicker_probability: 0.02,
            burst_min: 1,
            burst_max: 4,
            jitter: 0.0,
            misclassification_probability: 0.0,
            seed: 0,
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "pp" | "none" => Ok(Self::perfect()),
            "od" => Ok(Self::detector()),
            "flicker" => Ok(Self::flicker()),
            other => Err(Error::Invalid(format!("unknown noise profile `{other}`"))),
        }
    }

    pub fn builtin() -> Vec<Self> {
        vec![Self::perfect(), Self::detector(), Self::flicker()]
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.flicker_probability == 0.0 && self.jitter == 0.0 && self.misclassification_probability == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("flicker probability", self.flicker_probability),
            ("misclassification probability", self.misclassification_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Invalid(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.burst_min < 1 || self.burst_max < self.burst_min {
            return Err(Error::Invalid("burst lengths must satisfy 1 <= min <= max".into()));
        }
        if !(self.jitter >= 0.0) || !self.jitter.is_finite() {
            return Err(Error::Invalid("jitter must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Burst {
    Idle,
    Dropping(usize),
    Ended,
}

/// Detection stream seen through `profile`. Hidden objects are never
/// emitted; everything else is subject to dropout bursts, coordinate jitter
/// and label flips. Deterministic given the profile's seed.
pub fn degrade(truth: &GroundTruth, profile: &NoiseProfile) -> Result<Vec<Detection>> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let jitter = Normal::new(0.0, profile.jitter.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let mut burst_left: BTreeMap<&str, Burst> = BTreeMap::new();
    let mut out = Vec::new();

    for fa in &truth.frames {
        for (id, bbox) in &fa.boxes {
            let class = truth
                .classes
                .get(id)
                .ok_or_else(|| Error::Invalid(format!("object `{id}` has no class")))?;
            if profile.is_zero() {
                if !fa.hidden.contains(id) {
                    out.push(Detection::new(fa.frame, class.clone(), *bbox)?);
                }
                continue;
            }

            // below certainty, a burst never starts on the frame right after
            // another one, so every run of dropped frames is a single burst
            let burst = burst_left.entry(id.as_str()).or_insert(Burst::Idle);
            let dropped = match *burst {
                Burst::Dropping(left) => {
                    *burst = if left > 1 { Burst::Dropping(left - 1) } else { Burst::Ended };
                    true
                }
                Burst::Ended if profile.flicker_probability < 1.0 => {
                    *burst = Burst::Idle;
                    false
                }
                Burst::Idle | Burst::Ended if rng.random_bool(profile.flicker_probability) => {
                    let len = rng.random_range(profile.burst_min..=profile.burst_max);
                    *burst = if len > 1 { Burst::Dropping(len - 1) } else { Burst::Ended };
                    true
                }
                Burst::Idle | Burst::Ended => false,
            };
            if dropped || fa.hidden.contains(id) {
                continue;
            }

            let mut b = *bbox;
            if profile.jitter > 0.0 {
                b.x += jitter.sample(&mut rng);
                b.y += jitter.sample(&mut rng);
                b.w = (b.w + jitter.sample(&mut rng)).max(1.0);
                b.h = (b.h + jitter.sample(&mut rng)).max(1.0);
            }
            let mut class = class.clone();
            if profile.misclassification_probability > 0.0
                && rng.random_bool(profile.misclassification_probability)
            {
                let others: Vec<&&str> = COLORS.iter().filter(|c| **c != class.color).collect();
                class.color = others.choose(&mut rng).expect("palette has colors").to_string();
            }
            out.push(Detection::new(fa.frame, class, b)?);
        }
    }
    Ok(out)
}

/// First frame at which a detection of class `target` appears.
pub fn first_detection_frame(stream: &[Detection], target: &ObjectClass) -> Option<FrameIndex> {
    stream.iter().filter(|d| d.class == *target).map(|d| d.frame).min()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub n_frames: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub template: Template,
    /// Extra slides of uninvolved objects.
    pub distractor_motions: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n_frames: DEFAULT_FRAMES,
            min_objects: MIN_OBJECTS,
            max_objects: MAX_OBJECTS,
            template: Template::Carried,
            distractor_motions: 4,
        }
    }
}

impl ScenarioParams {
    pub fn with_template(template: Template) -> Self {
        Self {
            template,
            ..Self::default()
        }
    }

    /// Nothing moves and nothing is contained.
    pub fn without_actions() -> Self {
        Self {
            template: Template::Static,
            distractor_motions: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_objects < MIN_OBJECTS || self.max_objects > MAX_OBJECTS || self.min_objects > self.max_objects {
            return Err(Error::Invalid(format!(
                "object count range must lie within {MIN_OBJECTS}..={MAX_OBJECTS}"
            )));
        }
        if self.n_frames < 120 && !matches!(self.template, Template::Static) {
            return Err(Error::Invalid("scripted templates need at least 120 frames".into()));
        }
        Ok(())
    }
}

struct Builder {
    rng: ChaCha8Rng,
    n_frames: usize,
    objects: Vec<ScriptObject>,
    actions: Vec<ActionEvent<ObjectId>>,
    motions: Vec<Motion>,
    used_classes: BTreeSet<ObjectClass>,
}

/// Raised inside the builder when a random draw does not fit; the caller
/// retries with the next draw.
struct Retry;

impl Builder {
    fn new(seed: u64, n_frames: usize) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            n_frames,
            objects: Vec::new(),
            actions: Vec::new(),
            motions: Vec::new(),
            used_classes: BTreeSet::new(),
        }
    }

    fn fits(&self, cx: f64, cy: f64, w: f64, h: f64) -> bool {
        cx - w / 2.0 >= MARGIN
            && cy - h / 2.0 >= MARGIN
            && cx + w / 2.0 <= FRAME_WIDTH - MARGIN
            && cy + h / 2.0 <= FRAME_HEIGHT - MARGIN
    }

    fn random_point(&mut self, w: f64, h: f64) -> (f64, f64) {
        let cx = self.rng.random_range(w / 2.0 + MARGIN..=FRAME_WIDTH - w / 2.0 - MARGIN);
        let cy = self.rng.random_range(h / 2.0 + MARGIN..=FRAME_HEIGHT - h / 2.0 - MARGIN);
        (cx.round(), cy.round())
    }

    /// A point `dist` away from `from` in a random direction, inside the frame.
    fn point_near(&mut self, from: (f64, f64), dist: (f64, f64), w: f64, h: f64) -> Result<(f64, f64), Retry> {
        for _ in 0..64 {
            let d = self.rng.random_range(dist.0..=dist.1);
            let a = self.rng.random_range(0.0..std::f64::consts::TAU);
            let p = ((from.0 + d * a.cos()).round(), (from.1 + d * a.sin()).round());
            if self.fits(p.0, p.1, w, h) {
                return Ok(p);
            }
        }
        Err(Retry)
    }

    fn fresh_class(&mut self, shape: Shape, size: SizeClass) -> Result<ObjectClass, Retry> {
        for _ in 0..64 {
            let material = *MATERIALS.choose(&mut self.rng).expect("non-empty");
            let color = *COLORS.choose(&mut self.rng).expect("non-empty");
            let class = ObjectClass::new(shape.clone(), size, material, color);
            if self.used_classes.insert(class.clone()) {
                return Ok(class);
            }
        }
        Err(Retry)
    }

    fn add(&mut self, id: &str, class: ObjectClass, w: f64, h: f64, depth: f64, at: (f64, f64)) -> usize {
        self.used_classes.insert(class.clone());
        self.objects.push(ScriptObject {
            id: id.to_string(),
            class,
            w,
            h,
            depth,
            keyframes: vec![Keyframe {
                frame: 0,
                cx: at.0,
                cy: at.1,
            }],
        });
        self.objects.len() - 1
    }

    fn pos(&self, i: usize) -> (f64, f64) {
        let k = self.objects[i].last_keyframe();
        (k.cx, k.cy)
    }

    fn free_at(&self, i: usize) -> FrameIndex {
        self.objects[i].last_keyframe().frame
    }

    /// Moves object `i` (and `riders`, rigidly) to `to` starting at `start`.
    /// Returns the arrival frame.
    fn slide(&mut self, i: usize, riders: &[usize], start: FrameIndex, to: (f64, f64), speed: f64, verb: &str) -> Result<FrameIndex, Retry> {
        let from = self.pos(i);
        let dist = (to.0 - from.0).hypot(to.1 - from.1);
        let end = start + ((dist / speed).ceil() as usize).max(1);
        if end + 8 >= self.n_frames || start < self.free_at(i) {
            return Err(Retry);
        }
        let (dx, dy) = (to.0 - from.0, to.1 - from.1);
        for &k in std::iter::once(&i).chain(riders) {
            let (cx, cy) = self.pos(k);
            let o = &mut self.objects[k];
            if o.last_keyframe().frame < start {
                o.keyframes.push(Keyframe { frame: start, cx, cy });
            }
            o.keyframes.push(Keyframe {
                frame: end,
                cx: cx + dx,
                cy: cy + dy,
            });
        }
        self.motions.push(Motion {
            verb: verb.to_string(),
            object: self.objects[i].id.clone(),
            start,
            end,
        });
        Ok(end)
    }

    fn speed(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..=hi)
    }

    fn pause(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.random_range(lo..=hi)
    }

    fn contain(&mut self, cone: usize, target: usize, arrive: FrameIndex) -> Result<FrameIndex, Retry> {
        // container sits still on the target for one frame before the
        // containment takes effect
        let frame = arrive + 1;
        if frame + 8 >= self.n_frames {
            return Err(Retry);
        }
        let (cx, cy) = self.pos(cone);
        self.objects[cone].keyframes.push(Keyframe { frame, cx, cy });
        let action = ActionEvent::new(
            frame,
            "contain",
            self.objects[target].id.clone(),
            self.objects[cone].id.clone(),
        )
        .map_err(|_| Retry)?;
        self.actions.push(action);
        self.motions.push(Motion {
            verb: "contain".into(),
            object: self.objects[cone].id.clone(),
            start: frame,
            end: frame,
        });
        Ok(frame)
    }

    fn release(&mut self, cone: usize, target: usize, start: FrameIndex) -> Result<FrameIndex, Retry> {
        let from = self.pos(cone);
        let to = self.point_near(from, (60.0, 110.0), CONE_SIZE, CONE_SIZE)?;
        let speed = self.speed(2.0, 3.5);
        let end = self.slide(cone, &[], start, to, speed, "pick&place")?;
        let action = ActionEvent::new(
            start,
            "pick&place",
            self.objects[target].id.clone(),
            self.objects[cone].id.clone(),
        )
        .map_err(|_| Retry)?;
        self.actions.push(action);
        Ok(end)
    }

    fn trajectory_bounds(&self, i: usize) -> BoundingBox {
        let o = &self.objects[i];
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for k in &o.keyframes {
            x0 = x0.min(k.cx - o.w / 2.0);
            y0 = y0.min(k.cy - o.h / 2.0);
            x1 = x1.max(k.cx + o.w / 2.0);
            y1 = y1.max(k.cy + o.h / 2.0);
        }
        BoundingBox::new(x0 - MARGIN, y0 - MARGIN, x1 - x0 + 2.0 * MARGIN, y1 - y0 + 2.0 * MARGIN)
    }

    fn clear_of_others(&self, i: usize) -> bool {
        let mine = self.trajectory_bounds(i);
        (0..self.objects.len())
            .filter(|&j| j != i)
            .all(|j| mine.intersection_area(&self.trajectory_bounds(j)) == 0.0)
    }

    /// Places an uninvolved object whose whole trajectory stays clear of
    /// everything already scripted.
    fn add_distractor(&mut self, index: usize) -> Result<(), Retry> {
        let shape = [Shape::Cube, Shape::Cylinder, Shape::Sphere, Shape::Cone]
            .choose(&mut self.rng)
            .expect("non-empty")
            .clone();
        let size = *SizeClass::ALL.choose(&mut self.rng).expect("non-empty");
        let side = match size {
            SizeClass::Small => 18.0,
            SizeClass::Medium => 26.0,
            SizeClass::Large => 34.0,
        };
        let class = self.fresh_class(shape, size)?;
        let depth = self.rng.random_range(1.0..4.0_f64).round();
        for _ in 0..200 {
            let at = self.random_point(side, side);
            let i = self.add(&format!("obj{index}"), class.clone(), side, side, depth, at);
            if self.clear_of_others(i) {
                return Ok(());
            }
            self.objects.pop();
        }
        self.used_classes.remove(&class);
        Err(Retry)
    }

    fn move_distractor(&mut self, i: usize) {
        let (w, h) = (self.objects[i].w, self.objects[i].h);
        for _ in 0..20 {
            let start = self.rng.random_range(5..self.n_frames / 2);
            let from = self.pos(i);
            let Ok(to) = self.point_near(from, (15.0, 60.0), w, h) else {
                continue;
            };
            let speed = self.speed(1.0, 2.5);
            let backup = (self.objects[i].keyframes.clone(), self.motions.len());
            if self.slide(i, &[], start.max(self.free_at(i) + 1), to, speed, "slide").is_ok() && self.clear_of_others(i) {
                return;
            }
            self.objects[i].keyframes = backup.0;
            self.motions.truncate(backup.1);
        }
    }
}

fn snitch_and_cone(b: &mut Builder) -> Result<(usize, usize), Retry> {
    // the cone will sit on the snitch, so keep room for it
    let snitch_at = b.random_point(CONE_SIZE, CONE_SIZE);
    let snitch = b.add("snitch", ObjectClass::snitch(), SNITCH_SIZE, SNITCH_SIZE, 0.0, snitch_at);
    let cone_class = b.fresh_class(Shape::Cone, SizeClass::Large)?;
    let cone_at = b.point_near(snitch_at, (70.0, 120.0), CONE_SIZE, CONE_SIZE)?;
    let cone = b.add("cone", cone_class, CONE_SIZE, CONE_SIZE, 10.0, cone_at);
    Ok((snitch, cone))
}

/// Snitch slides, the cone comes over and contains it. Returns the
/// containment frame.
fn approach_and_contain(b: &mut Builder, snitch: usize, cone: usize) -> Result<FrameIndex, Retry> {
    let start = b.pause(5, 20);
    let to = b.point_near(b.pos(snitch), (20.0, 60.0), CONE_SIZE, CONE_SIZE)?;
    let speed = b.speed(1.0, 2.5);
    let stop = b.slide(snitch, &[], start, to, speed, "slide")?;
    let start = stop + b.pause(5, 15);
    let speed = b.speed(1.5, 3.0);
    let arrive = b.slide(cone, &[], start, b.pos(snitch), speed, "pick&place")?;
    b.contain(cone, snitch, arrive)
}

fn script_template(b: &mut Builder, template: Template) -> Result<(), Retry> {
    match template {
        Template::Static => {
            let at = b.random_point(SNITCH_SIZE, SNITCH_SIZE);
            b.add("snitch", ObjectClass::snitch(), SNITCH_SIZE, SNITCH_SIZE, 0.0, at);
        }
        Template::Visible => {
            let at = b.random_point(SNITCH_SIZE, SNITCH_SIZE);
            let snitch = b.add("snitch", ObjectClass::snitch(), SNITCH_SIZE, SNITCH_SIZE, 0.0, at);
            let mut t = b.pause(5, 20);
            for _ in 0..b.pause(2, 4) {
                let to = b.point_near(b.pos(snitch), (20.0, 70.0), SNITCH_SIZE, SNITCH_SIZE)?;
                let speed = b.speed(1.0, 2.5);
                match b.slide(snitch, &[], t, to, speed, "slide") {
                    Ok(end) => t = end + b.pause(5, 25),
                    Err(_) => break,
                }
            }
        }
        Template::Occluded => {
            let (ow, oh) = (44.0, 56.0);
            let class = b.fresh_class(Shape::Cylinder, SizeClass::Large)?;
            let occ_at = b.random_point(ow + 80.0, oh);
            let occluder = b.add("occluder", class, ow, oh, 5.0, occ_at);
            let dir = if b.rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let side = (ow + SNITCH_SIZE) / 2.0 + b.rng.random_range(6.0..20.0_f64).round();
            let dy = b.rng.random_range(-8.0..=8.0_f64).round();
            let (ox, oy) = b.pos(occluder);
            let snitch_at = (ox - dir * side, oy + dy);
            let snitch = b.add("snitch", ObjectClass::snitch(), SNITCH_SIZE, SNITCH_SIZE, 0.0, snitch_at);
            let start = b.pause(10, 40);
            let speed = b.speed(1.0, 2.5);
            if b.rng.random_bool(0.5) {
                // pass behind and out the other side
                let end = b.slide(snitch, &[], start, (ox + dir * side, oy + dy), speed, "slide")?;
                let back = end + b.pause(20, 60);
                let _ = b.slide(snitch, &[], back, snitch_at, speed, "slide");
            } else {
                // stop behind the occluder, come back out later
                let end = b.slide(snitch, &[], start, (ox, oy + dy), speed, "slide")?;
                let out = end + b.pause(30, 80);
                let _ = b.slide(snitch, &[], out, snitch_at, speed, "slide");
            }
            let _ = occluder;
        }
        Template::Contained => {
            let (snitch, cone) = snitch_and_cone(b)?;
            let contained_at = approach_and_contain(b, snitch, cone)?;
            let release = contained_at + b.pause(60, 120);
            if release + 40 < b.n_frames {
                b.release(cone, snitch, release)?;
            }
        }
        Template::Carried => {
            let (snitch, cone) = snitch_and_cone(b)?;
            let contained_at = approach_and_contain(b, snitch, cone)?;
            let mut t = contained_at + b.pause(5, 15);
            for _ in 0..b.pause(1, 2) {
                let to = b.point_near(b.pos(cone), (50.0, 110.0), CONE_SIZE, CONE_SIZE)?;
                let speed = b.speed(1.5, 3.0);
                match b.slide(cone, &[snitch], t, to, speed, "slide") {
                    Ok(end) => t = end + b.pause(5, 15),
                    Err(_) => break,
                }
            }
            if t + 40 < b.n_frames {
                b.release(cone, snitch, t)?;
            }
        }
    }
    Ok(())
}

fn try_generate(params: &ScenarioParams, seed: u64) -> Result<ScenarioScript, Retry> {
    let mut b = Builder::new(seed, params.n_frames);
    let n_objects = b.rng.random_range(params.min_objects..=params.max_objects);
    script_template(&mut b, params.template)?;
    let involved = b.objects.len();
    for i in involved..n_objects {
        b.add_distractor(i)?;
    }
    for _ in 0..params.distractor_motions {
        if b.objects.len() == involved {
            break;
        }
        let i = b.rng.random_range(involved..b.objects.len());
        if b.rng.random_bool(0.25) {
            let start = b.rng.random_range(0..b.n_frames);
            b.motions.push(Motion {
                verb: "rotate".into(),
                object: b.objects[i].id.clone(),
                start,
                end: start,
            });
        } else {
            b.move_distractor(i);
        }
    }
    let mut actions = b.actions;
    actions.sort_by_key(|a| a.frame);
    let mut motions = b.motions;
    motions.sort_by(|x, y| (x.start, &x.object).cmp(&(y.start, &y.object)));
    Ok(ScenarioScript {
        n_frames: params.n_frames,
        frame_width: FRAME_WIDTH,
        frame_height: FRAME_HEIGHT,
        template: params.template,
        target: "snitch".into(),
        objects: b.objects,
        actions,
        motions,
        registry: AttachDetachRegistry::containment(),
    })
}

/// Deterministic scenario for `(params, seed)`.
pub fn generate_scenario(params: &ScenarioParams, seed: u64) -> Result<ScenarioScript> {
    params.validate()?;
    for attempt in 0..512u64 {
        let sub_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(attempt);
        if let Ok(script) = try_generate(params, sub_seed) {
            if script.validate().is_ok() {
                return Ok(script);
            }
        }
    }
    Err(Error::Invalid(format!(
        "could not lay out a {} scenario for seed {seed}",
        params.template
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(id: &str, class: ObjectClass, size: f64, depth: f64, kf: &[(usize, f64, f64)]) -> ScriptObject {
        ScriptObject {
            id: id.into(),
            class,
            w: size,
            h: size,
            depth,
            keyframes: kf
                .iter()
                .map(|&(frame, cx, cy)| Keyframe { frame, cx, cy })
                .collect(),
        }
    }

    fn filler(n: usize) -> Vec<ScriptObject> {
        (0..n)
            .map(|i| {
                obj(
                    &format!("f{i}"),
                    ObjectClass::new(Shape::Cube, SizeClass::Small, "rubber", COLORS[i]),
                    10.0,
                    1.0,
                    &[(0, 20.0 + 30.0 * i as f64, 220.0)],
                )
            })
            .collect()
    }

    fn cone_script() -> ScenarioScript {
        let cone_class = ObjectClass::new(Shape::Cone, SizeClass::Large, "rubber", "green");
        let mut objects = vec![
            obj("snitch", ObjectClass::snitch(), 16.0, 0.0, &[(0, 100.0, 100.0), (20, 100.0, 100.0), (30, 150.0, 100.0)]),
            obj("cone", cone_class, 40.0, 10.0, &[(0, 100.0, 100.0), (20, 100.0, 100.0), (30, 150.0, 100.0)]),
        ];
        objects.extend(filler(3));
        ScenarioScript {
            n_frames: 40,
            frame_width: FRAME_WIDTH,
            frame_height: FRAME_HEIGHT,
            template: Template::Carried,
            target: "snitch".into(),
            objects,
            actions: vec![
                ActionEvent::new(5, "contain", "snitch".into(), "cone".into()).unwrap(),
                ActionEvent::new(35, "pick&place", "snitch".into(), "cone".into()).unwrap(),
            ],
            motions: vec![],
            registry: AttachDetachRegistry::containment(),
        }
    }

    #[test]
    fn interpolation() {
        let o = obj("a", ObjectClass::snitch(), 10.0, 0.0, &[(10, 0.0, 0.0), (20, 10.0, 20.0)]);
        assert_eq!(o.center_at(0), (0.0, 0.0));
        assert_eq!(o.center_at(15), (5.0, 10.0));
        assert_eq!(o.center_at(99), (10.0, 20.0));
    }

    #[test]
    fn labels_for_cone_over_snitch() {
        let labels = label_frames(&cone_script()).unwrap();
        // before the contain, fully covered by the cone in front
        assert_eq!(labels[0], TaskLabel::Occluded);
        assert_eq!(labels[5], TaskLabel::Contained);
        assert_eq!(labels[20], TaskLabel::Contained);
        assert_eq!(labels[21], TaskLabel::Carried);
        assert_eq!(labels[30], TaskLabel::Carried);
        assert_eq!(labels[31], TaskLabel::Contained);
        assert_eq!(labels[35], TaskLabel::Occluded);
    }

    #[test]
    fn no_actions_no_occluders_all_visible() {
        let mut objects = vec![obj("snitch", ObjectClass::snitch(), 16.0, 0.0, &[(0, 100.0, 100.0)])];
        objects.extend(filler(4));
        let script = ScenarioScript {
            n_frames: 10,
            frame_width: FRAME_WIDTH,
            frame_height: FRAME_HEIGHT,
            template: Template::Static,
            target: "snitch".into(),
            objects,
            actions: vec![],
            motions: vec![],
            registry: AttachDetachRegistry::containment(),
        };
        script.validate().unwrap();
        assert!(label_frames(&script).unwrap().iter().all(|l| *l == TaskLabel::Visible));
    }

    #[test]
    fn hidden_objects_never_detected() {
        let gt = render_ground_truth(&cone_script()).unwrap();
        let stream = degrade(&gt, &NoiseProfile::perfect()).unwrap();
        assert!(stream.iter().all(|d| !d.class.is_snitch()));
        assert_eq!(stream.iter().filter(|d| d.frame == 0).count(), 4);
    }

    #[test]
    fn validation_rejects_bad_scripts() {
        let mut s = cone_script();
        s.objects.truncate(3);
        assert!(s.validate().is_err());
        let mut s = cone_script();
        s.objects[2].keyframes[0].cx = 2.0;
        assert!(s.validate().is_err());
        let mut s = cone_script();
        s.objects[2].class = ObjectClass::snitch();
        assert!(s.validate().is_err());
        assert!(cone_script().validate().is_ok());
    }

    #[test]
    fn noise_profile_validation() {
        let mut p = NoiseProfile::detector();
        p.flicker_probability = 1.5;
        assert!(p.validate().is_err());
        let mut p = NoiseProfile::detector();
        p.burst_min = 0;
        assert!(p.validate().is_err());
        assert!(NoiseProfile::named("od").is_ok());
        assert!(NoiseProfile::named("xyz").is_err());
    }

    #[test]
    fn generated_templates_validate() {
        for template in [Template::Static, Template::Visible, Template::Occluded, Template::Contained, Template::Carried] {
            for seed in 0..5 {
                let s = generate_scenario(&ScenarioParams::with_template(template), seed).unwrap();
                s.validate().unwrap();
                assert_eq!(s.n_frames, 300);
            }
        }
    }
}
