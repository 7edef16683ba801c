//! Line-oriented record files.
//!
//! | file        | columns                                  |
//! |-------------|------------------------------------------|
//! | detections  | `frame class x y w h`                    |
//! | actions     | `frame verb child parent`                |
//! | annotations | `frame id class x y w h label`           |
//! | predictions | `frame symbol class x y w h status`      |
//! | registry    | `attach-verb detach-verb`                |
//!
//! Fields are whitespace separated. Blank lines and lines starting with `#`
//! are skipped. Numbers are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::anchoring::{AnchorId, AnchorStatus, PredictionRecord};
use crate::attachment::{ActionEvent, AttachDetachRegistry};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Detection, FrameIndex, ObjectClass};
use crate::simulator::{FrameAnnotation, GroundTruth, TaskLabel};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct Line<'a> {
    path: &'a Path,
    number: usize,
    fields: Vec<&'a str>,
}

impl<'a> Line<'a> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Record {
            path: self.path.to_path_buf(),
            line: self.number,
            message: message.into(),
        }
    }

    fn expect_len(&self, n: usize, layout: &str) -> Result<()> {
        if self.fields.len() == n {
            Ok(())
        } else {
            Err(self.error(format!("expected `{layout}`, got {} fields", self.fields.len())))
        }
    }

    fn parse<T: FromStr>(&self, i: usize, what: &str) -> Result<T> {
        self.fields[i]
            .parse()
            .map_err(|_| self.error(format!("bad {what} `{}`", self.fields[i])))
    }

    fn bbox(&self, first: usize) -> Result<BoundingBox> {
        let mut v = [0.0; 4];
        for (k, name) in ["x", "y", "w", "h"].iter().enumerate() {
            let x: f64 = self.parse(first + k, name)?;
            if !x.is_finite() {
                return Err(self.error(format!("non-finite {name}")));
            }
            v[k] = x;
        }
        Ok(BoundingBox::new(v[0], v[1], v[2], v[3]))
    }
}

fn lines<'a>(text: &'a str, path: &'a Path) -> impl Iterator<Item = Line<'a>> {
    text.lines().enumerate().filter_map(move |(i, raw)| {
        let trimmed = raw.trim();
        (!trimmed.is_empty() && !trimmed.starts_with('#')).then(|| Line {
            path,
            number: i + 1,
            fields: trimmed.split_whitespace().collect(),
        })
    })
}

fn push_box(out: &mut String, b: &BoundingBox) {
    let _ = write!(out, "{} {} {} {}", b.x, b.y, b.w, b.h);
}

pub fn parse_detections(text: &str, path: &Path) -> Result<Vec<Detection>> {
    lines(text, path)
        .map(|l| {
            l.expect_len(6, "frame class x y w h")?;
            let frame = l.parse(0, "frame")?;
            let class = l.parse(1, "class")?;
            Detection::new(frame, class, l.bbox(2)?).map_err(|e| l.error(e.to_string()))
        })
        .collect()
}

pub fn format_detections(stream: &[Detection]) -> String {
    let mut out = String::new();
    for d in stream {
        let _ = write!(out, "{} {} ", d.frame, d.class);
        push_box(&mut out, &d.bbox);
        out.push('\n');
    }
    out
}

pub fn parse_actions(text: &str, path: &Path) -> Result<Vec<ActionEvent<String>>> {
    lines(text, path)
        .map(|l| {
            l.expect_len(4, "frame verb child parent")?;
            let frame = l.parse(0, "frame")?;
            ActionEvent::new(frame, l.fields[1], l.fields[2].to_string(), l.fields[3].to_string())
                .map_err(|e| l.error(e.to_string()))
        })
        .collect()
}

pub fn format_actions(actions: &[ActionEvent<String>]) -> String {
    let mut out = String::new();
    for a in actions {
        let _ = writeln!(out, "{} {} {} {}", a.frame, a.verb, a.child, a.parent);
    }
    out
}

/// Frames must be numbered `0..N` without gaps, every frame must carry a
/// single label, and exactly one object must be of the snitch class (the
/// target).
pub fn parse_annotations(text: &str, path: &Path) -> Result<GroundTruth> {
    let mut frames: Vec<FrameAnnotation> = Vec::new();
    let mut classes: BTreeMap<String, ObjectClass> = BTreeMap::new();
    for l in lines(text, path) {
        l.expect_len(8, "frame id class x y w h label")?;
        let frame: FrameIndex = l.parse(0, "frame")?;
        let id = l.fields[1].to_string();
        let class: ObjectClass = l.parse(2, "class")?;
        let bbox = l.bbox(3)?;
        let label: TaskLabel = l.parse(7, "label")?;

        if let Some(prev) = classes.get(&id) {
            if *prev != class {
                return Err(l.error(format!("object `{id}` changes class")));
            }
        } else {
            classes.insert(id.clone(), class);
        }
        match frame.cmp(&frames.len()) {
            std::cmp::Ordering::Equal => frames.push(FrameAnnotation {
                frame,
                boxes: BTreeMap::new(),
                label,
                hidden: Default::default(),
            }),
            std::cmp::Ordering::Greater => {
                return Err(l.error(format!("frame {frame} skips frame {}", frames.len())));
            }
            std::cmp::Ordering::Less if frame + 1 != frames.len() => {
                return Err(l.error(format!("frame {frame} is out of order")));
            }
            std::cmp::Ordering::Less => {}
        }
        let current = frames.last_mut().expect("pushed above");
        if current.label != label {
            return Err(l.error(format!("frame {frame} has conflicting labels")));
        }
        if current.boxes.insert(id.clone(), bbox).is_some() {
            return Err(l.error(format!("object `{id}` listed twice in frame {frame}")));
        }
    }
    let snitches: Vec<&String> = classes.iter().filter(|(_, c)| c.is_snitch()).map(|(id, _)| id).collect();
    let target = match snitches.as_slice() {
        [one] => (*one).clone(),
        _ => {
            return Err(Error::Invalid(format!(
                "{}: expected exactly one snitch, found {}",
                path.display(),
                snitches.len()
            )))
        }
    };
    Ok(GroundTruth {
        target,
        classes,
        frames,
    })
}

pub fn format_annotations(truth: &GroundTruth) -> String {
    let mut out = String::new();
    for f in &truth.frames {
        for (id, b) in &f.boxes {
            let class = &truth.classes[id];
            let _ = write!(out, "{} {id} {class} ", f.frame);
            push_box(&mut out, b);
            let _ = writeln!(out, " {}", f.label);
        }
    }
    out
}

pub fn parse_predictions(text: &str, path: &Path) -> Result<Vec<PredictionRecord>> {
    lines(text, path)
        .map(|l| {
            l.expect_len(8, "frame symbol class x y w h status")?;
            Ok(PredictionRecord {
                frame: l.parse(0, "frame")?,
                symbol: l.parse::<AnchorId>(1, "symbol")?,
                class: l.parse(2, "class")?,
                bbox: l.bbox(3)?,
                status: l.parse::<AnchorStatus>(7, "status")?,
            })
        })
        .collect()
}

pub fn format_predictions(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = write!(out, "{} {} {} ", r.frame, r.symbol, r.class);
        push_box(&mut out, &r.bbox);
        let _ = writeln!(out, " {}", r.status);
    }
    out
}

pub fn parse_registry(text: &str, path: &Path) -> Result<AttachDetachRegistry> {
    let pairs = lines(text, path)
        .map(|l| {
            l.expect_len(2, "attach-verb detach-verb")?;
            Ok((l.fields[0].to_string(), l.fields[1].to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    AttachDetachRegistry::new(pairs).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

pub fn format_registry(registry: &AttachDetachRegistry) -> String {
    let mut out = String::new();
    for (a, d) in registry.pairs() {
        let _ = writeln!(out, "{a} {d}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.txt")
    }

    #[test]
    fn detections_round_trip() {
        let text = "# comment\n0 snitch:small:metal:gold 1.5 2 16 16\n\n3 cube:large:rubber:red 0.1 0.2 30 30.25\n";
        let d = parse_detections(text, p()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[1].bbox.h, 30.25);
        assert_eq!(parse_detections(&format_detections(&d), p()).unwrap(), d);
    }

    #[test]
    fn bad_record_reports_line() {
        let err = parse_detections("0 snitch:small:metal:gold 1 2 3\n", p()).unwrap_err();
        assert!(matches!(err, Error::Record { line: 1, .. }));
        let err = parse_detections("\n0 snitch:small:metal:gold 1 2 x 4\n", p()).unwrap_err();
        assert!(matches!(err, Error::Record { line: 2, .. }));
        assert!(parse_detections("0 snitch:small:metal:gold 1 2 -3 4\n", p()).is_err());
    }

    #[test]
    fn actions_round_trip() {
        let text = "5 contain snitch cone\n9 pick&place snitch cone\n";
        let a = parse_actions(text, p()).unwrap();
        assert_eq!(a[0].verb, "contain");
        assert_eq!(format_actions(&a), text);
        assert!(parse_actions("1 contain x x\n", p()).is_err());
    }

    #[test]
    fn annotations_round_trip_and_checks() {
        let text = "\
0 cone cone:large:rubber:green 10 10 40 40 visible
0 snitch snitch:small:metal:gold 22 22 16 16 visible
1 cone cone:large:rubber:green 10 10 40 40 contained
1 snitch snitch:small:metal:gold 22 22 16 16 contained
";
        let gt = parse_annotations(text, p()).unwrap();
        assert_eq!(gt.target, "snitch");
        assert_eq!(gt.labels(), vec![TaskLabel::Visible, TaskLabel::Contained]);
        assert_eq!(format_annotations(&gt), text);

        let gap = "0 snitch snitch:small:metal:gold 1 1 2 2 visible\n2 snitch snitch:small:metal:gold 1 1 2 2 visible\n";
        assert!(parse_annotations(gap, p()).is_err());
        let conflict = "0 a cube:large:rubber:red 1 1 2 2 visible\n0 snitch snitch:small:metal:gold 1 1 2 2 occluded\n";
        assert!(parse_annotations(conflict, p()).is_err());
        let no_target = "0 a cube:large:rubber:red 1 1 2 2 visible\n";
        assert!(parse_annotations(no_target, p()).is_err());
    }

    #[test]
    fn predictions_round_trip() {
        let text = "4 p0 snitch:small:metal:gold 1 2 16 16 attached-follow\n4 p1 cone:large:rubber:green 0 0 40 40 visible\n";
        let r = parse_predictions(text, p()).unwrap();
        assert_eq!(r[0].status, AnchorStatus::AttachedFollow);
        assert_eq!(format_predictions(&r), text);
    }

    #[test]
    fn registry_file() {
        let reg = parse_registry("pick-up put-down\n# more\ninsert take-out\n", p()).unwrap();
        assert_eq!(reg.pairs().len(), 2);
        assert_eq!(parse_registry(&format_registry(&reg), p()).unwrap(), reg);
        assert!(parse_registry("a b\na c\n", p()).is_err());
        assert!(parse_registry("a\n", p()).is_err());
    }
}
