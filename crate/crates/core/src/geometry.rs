//! Spatial vocabulary shared by every other module: boxes, object classes,
//! detections, and the two evaluation primitives (IoU and center distance).
//!
//! Boxes are top-left + width/height in continuous pixel units, origin at the
//! top-left corner of the frame with y growing downward. Area is `w * h`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frame index within a stream.
pub type FrameIndex = usize;

/// Axis-aligned bounding box in pixels.
///
/// A box with `w == 0 && h == 0` is the "absent" sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub const ABSENT: BoundingBox = BoundingBox {
        x: 0.0,
        y: 0.0,
        w: 0.0,
        h: 0.0,
    };

    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Builds a box of the given size centered on `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self {
            x: cx - w / 2.0,
            y: cy - h / 2.0,
            w,
            h,
        }
    }

    pub fn is_absent(&self) -> bool {
        self.w == 0.0 && self.h == 0.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// Center point, `None` for the absent sentinel.
    pub fn center(&self) -> Option<(f64, f64)> {
        if self.is_absent() {
            None
        } else {
            Some((self.x + self.w / 2.0, self.y + self.h / 2.0))
        }
    }

    /// Same size, translated so its center lands on `(cx, cy)`.
    pub fn recentered(&self, cx: f64, cy: f64) -> Self {
        Self::from_center(cx, cy, self.w, self.h)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let ih = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        iw * ih
    }

    /// Fraction of `self`'s area covered by `other`. Zero for empty boxes.
    pub fn coverage_by(&self, other: &BoundingBox) -> f64 {
        let area = self.area();
        if area <= 0.0 {
            return 0.0;
        }
        self.intersection_area(other) / area
    }
}

/// Intersection over union. Absent boxes score zero.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    if a.is_absent() || b.is_absent() {
        return 0.0;
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Euclidean distance between box centers, in pixels.
pub fn l2_center(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    let (ax, ay) = a.center().ok_or(Error::AbsentBox)?;
    let (bx, by) = b.center().ok_or(Error::AbsentBox)?;
    Ok((ax - bx).hypot(ay - by))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Shape {
    Cube,
    Cylinder,
    Sphere,
    Cone,
    Snitch,
    /// Domain-defined shapes such as `hand` or `gearbox-case`.
    Other(String),
}

impl Shape {
    pub fn as_str(&self) -> &str {
        match self {
            Shape::Cube => "cube",
            Shape::Cylinder => "cylinder",
            Shape::Sphere => "sphere",
            Shape::Cone => "cone",
            Shape::Snitch => "snitch",
            Shape::Other(s) => s,
        }
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cube" => Shape::Cube,
            "cylinder" => Shape::Cylinder,
            "sphere" => Shape::Sphere,
            "cone" | "inverted-cone" => Shape::Cone,
            "snitch" => Shape::Snitch,
            other => {
                check_tag(other)?;
                Shape::Other(other.to_string())
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];

    pub fn as_str(&self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        }
    }
}

impl FromStr for SizeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(SizeClass::Small),
            "medium" => Ok(SizeClass::Medium),
            "large" => Ok(SizeClass::Large),
            other => Err(Error::Parse(format!("unknown size class `{other}`"))),
        }
    }
}

/// Object type label. Equality is exact tag equality.
///
/// Serialized as `shape:size:material:color`, e.g. `cone:large:rubber:green`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ObjectClass {
    pub shape: Shape,
    pub size: SizeClass,
    pub material: String,
    pub color: String,
}

impl ObjectClass {
    pub fn new(shape: Shape, size: SizeClass, material: &str, color: &str) -> Self {
        Self {
            shape,
            size,
            material: material.to_string(),
            color: color.to_string(),
        }
    }

    /// The designated target class (small golden sphere).
    pub fn snitch() -> Self {
        Self::new(Shape::Snitch, SizeClass::Small, "metal", "gold")
    }

    pub fn is_snitch(&self) -> bool {
        self.shape == Shape::Snitch
    }
}

fn check_tag(tag: &str) -> Result<()> {
    if tag.is_empty() || tag.contains(':') || tag.chars().any(char::is_whitespace) {
        return Err(Error::Parse(format!("invalid class tag `{tag}`")));
    }
    Ok(())
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}",
            self.shape.as_str(),
            self.size.as_str(),
            self.material,
            self.color
        )
    }
}

impl FromStr for ObjectClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [shape, size, material, color] = parts.as_slice() else {
            return Err(Error::Parse(format!(
                "class `{s}` is not of the form shape:size:material:color"
            )));
        };
        check_tag(material)?;
        check_tag(color)?;
        Ok(Self {
            shape: shape.parse()?,
            size: size.parse()?,
            material: material.to_string(),
            color: color.to_string(),
        })
    }
}

impl TryFrom<String> for ObjectClass {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ObjectClass> for String {
    fn from(c: ObjectClass) -> String {
        c.to_string()
    }
}

/// One perceived object in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: FrameIndex,
    pub class: ObjectClass,
    pub bbox: BoundingBox,
}

impl Detection {
    pub fn new(frame: FrameIndex, class: ObjectClass, bbox: BoundingBox) -> Result<Self> {
        if bbox.is_absent() || bbox.w < 0.0 || bbox.h < 0.0 {
            return Err(Error::Invalid(format!(
                "detection at frame {frame} has an absent or negative box"
            )));
        }
        Ok(Self { frame, class, bbox })
    }
}
