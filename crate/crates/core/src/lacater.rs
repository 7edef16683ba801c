//! Import of LA-CATER style per-video annotation files.
//!
//! Expected JSON layout, one file per video:
//!
//! ```json
//! {
//!   "objects": [
//!     {"instance": "Cone_0", "shape": "cone", "size": "large",
//!      "material": "rubber", "color": "green",
//!      "locations": [[x, y, w, h], null, ...]}
//!   ],
//!   "movements": {"Cone_0": [["_contain", "Spl_0", 40, 52],
//!                            ["_pick_place", null, 120, 140]]},
//!   "labels": ["visible", "occluded", ...]
//! }
//! ```
//!
//! `locations` holds one box per frame (`null` when the object is out of
//! view). The CATER shape `spl` is the snitch. A `_contain` movement
//! attaches its second argument to the moving object at the movement's end
//! frame; a later `_pick_place` of that container releases the contents at
//! its start frame. Other movements carry no attachment information. When
//! `labels` is absent, frames are labeled from the hierarchy alone
//! (contained/carried/visible).

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::attachment::{hierarchy_timeline, ActionEvent, AttachDetachRegistry};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, ObjectClass, Shape};
use crate::records::read_text;
use crate::simulator::{FrameAnnotation, GroundTruth, TaskLabel};

#[derive(Debug, Deserialize)]
struct RawObject {
    instance: String,
    shape: String,
    size: String,
    material: String,
    color: String,
    locations: Vec<Option<[f64; 4]>>,
}

#[derive(Debug, Deserialize)]
struct RawVideo {
    objects: Vec<RawObject>,
    #[serde(default)]
    movements: BTreeMap<String, Vec<(String, Option<String>, usize, usize)>>,
    #[serde(default)]
    labels: Option<Vec<TaskLabel>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportedVideo {
    pub truth: GroundTruth,
    pub actions: Vec<ActionEvent<String>>,
}

fn class_of(o: &RawObject) -> Result<ObjectClass> {
    let shape = match o.shape.as_str() {
        "spl" | "snitch" => return Ok(ObjectClass::snitch()),
        other => other.parse::<Shape>()?,
    };
    Ok(ObjectClass::new(shape, o.size.parse()?, &o.material, &o.color))
}

fn containment_actions(video: &RawVideo) -> Result<Vec<ActionEvent<String>>> {
    let mut moves: Vec<(usize, usize, &str, &str, Option<&str>)> = video
        .movements
        .iter()
        .flat_map(|(obj, list)| {
            list.iter()
                .map(move |(verb, other, s, e)| (*s, *e, obj.as_str(), verb.as_str(), other.as_deref()))
        })
        .collect();
    moves.sort();

    let mut contents: BTreeMap<&str, &str> = BTreeMap::new();
    let mut actions = Vec::new();
    for (start, end, obj, verb, other) in moves {
        match verb {
            "_contain" => {
                let child = other.ok_or_else(|| Error::Invalid(format!("`_contain` by `{obj}` has no target")))?;
                contents.insert(obj, child);
                actions.push(ActionEvent::new(end, "contain", child.to_string(), obj.to_string())?);
            }
            "_pick_place" => {
                if let Some(child) = contents.remove(obj) {
                    actions.push(ActionEvent::new(start, "pick&place", child.to_string(), obj.to_string())?);
                }
            }
            _ => {}
        }
    }
    actions.sort_by_key(|a| a.frame);
    Ok(actions)
}

pub fn import_video(text: &str, path: &Path) -> Result<ImportedVideo> {
    let video: RawVideo =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let n_frames = video.objects.iter().map(|o| o.locations.len()).max().unwrap_or(0);
    if n_frames == 0 {
        return Err(Error::Invalid(format!("{}: no frames", path.display())));
    }
    let mut classes = BTreeMap::new();
    for o in &video.objects {
        if classes.insert(o.instance.clone(), class_of(o)?).is_some() {
            return Err(Error::Invalid(format!("duplicate instance `{}`", o.instance)));
        }
    }
    let targets: Vec<&String> = classes.iter().filter(|(_, c)| c.is_snitch()).map(|(k, _)| k).collect();
    let [target] = targets.as_slice() else {
        return Err(Error::Invalid(format!("{}: expected exactly one snitch", path.display())));
    };
    let target = (*target).clone();

    let actions = containment_actions(&video)?;
    let timeline = hierarchy_timeline(&actions, &AttachDetachRegistry::containment(), n_frames)?;
    if let Some(labels) = &video.labels {
        if labels.len() != n_frames {
            return Err(Error::LengthMismatch(format!("{} labels for {n_frames} frames", labels.len())));
        }
    }

    let mut frames = Vec::with_capacity(n_frames);
    for (t, h) in timeline.iter().enumerate() {
        let mut boxes = BTreeMap::new();
        for o in &video.objects {
            if let Some(Some([x, y, w, hh])) = o.locations.get(t) {
                boxes.insert(o.instance.clone(), BoundingBox::new(*x, *y, *w, *hh));
            }
        }
        if !boxes.contains_key(&target) {
            return Err(Error::Invalid(format!("frame {t}: the snitch has no location")));
        }
        let hidden = boxes.keys().filter(|id| h.parent(*id).is_some()).cloned().collect();
        let label = match &video.labels {
            Some(labels) => labels[t],
            None => match h.parent(&target) {
                None => TaskLabel::Visible,
                Some(c) => {
                    let center = |f: usize| frames_center(&video, c, f);
                    if t > 0 && center(t) != center(t - 1) {
                        TaskLabel::Carried
                    } else {
                        TaskLabel::Contained
                    }
                }
            },
        };
        frames.push(FrameAnnotation {
            frame: t,
            boxes,
            label,
            hidden,
        });
    }
    Ok(ImportedVideo {
        truth: GroundTruth {
            target,
            classes,
            frames,
        },
        actions,
    })
}

fn frames_center(video: &RawVideo, id: &str, t: usize) -> Option<(f64, f64)> {
    video
        .objects
        .iter()
        .find(|o| o.instance == id)
        .and_then(|o| o.locations.get(t).copied().flatten())
        .map(|[x, y, w, h]| (x + w / 2.0, y + h / 2.0))
}

/// Every `*.json` file in `dir`, in file-name order, keyed by file stem.
pub fn import_dir(dir: &Path) -> Result<Vec<(String, ImportedVideo)>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, import_video(&read_text(p)?, p)?))
        })
        .collect()
}
