use permanence::geometry::{iou, l2_center, BoundingBox};
use proptest::prelude::*;

/// Pixel-count IoU for boxes on the integer grid.
fn raster_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let covers = |bx: &BoundingBox, x: i64, y: i64| {
        (x as f64) >= bx.x && (x as f64) < bx.right() && (y as f64) >= bx.y && (y as f64) < bx.bottom()
    };
    let (mut inter, mut union) = (0u64, 0u64);
    for x in 0..64 {
        for y in 0..64 {
            let (ia, ib) = (covers(a, x, y), covers(b, x, y));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn grid_box() -> impl Strategy<Value = BoundingBox> {
    (0u8..40, 0u8..40, 1u8..24, 1u8..24)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x as f64, y as f64, w as f64, h as f64))
}

fn any_box() -> impl Strategy<Value = BoundingBox> {
    (-100.0f64..300.0, -100.0f64..300.0, 0.0f64..80.0, 0.0f64..80.0)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h))
}

proptest! {
    #[test]
    fn iou_matches_rasterization(a in grid_box(), b in grid_box()) {
        prop_assert!((iou(&a, &b) - raster_iou(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in any_box(), b in any_box()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&b, &a));
    }

    #[test]
    fn iou_of_self_is_one(a in grid_box()) {
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn l2_is_a_metric(a in any_box(), b in any_box(), c in any_box()) {
        let ab = l2_center(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, l2_center(&b, &a).unwrap());
        prop_assert_eq!(l2_center(&a, &a).unwrap(), 0.0);
        let ac = l2_center(&a, &c).unwrap();
        let cb = l2_center(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-9);
    }

    #[test]
    fn translation_keeps_iou(a in grid_box(), b in grid_box(), dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
        let shift = |bx: &BoundingBox| BoundingBox::new(bx.x + dx, bx.y + dy, bx.w, bx.h);
        prop_assert!((iou(&a, &b) - iou(&shift(&a), &shift(&b))).abs() < 1e-9);
    }
}

#[test]
fn absent_boxes() {
    let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
    assert_eq!(iou(&a, &BoundingBox::ABSENT), 0.0);
    assert!(l2_center(&a, &BoundingBox::ABSENT).is_err());
}
