//! Box overlap and center distance, the two per-frame scores.

use permanence::geometry::{iou, l2_center, BoundingBox};

fn main() {
    let truth = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
    let cases = [
        ("same box", BoundingBox::new(0.0, 0.0, 10.0, 10.0)),
        ("quarter overlap", BoundingBox::new(5.0, 5.0, 10.0, 10.0)),
        ("shifted 3,4", BoundingBox::new(3.0, 4.0, 10.0, 10.0)),
        ("disjoint", BoundingBox::new(20.0, 20.0, 5.0, 5.0)),
    ];
    println!("{:<16} {:>8} {:>8}", "prediction", "IoU", "L2 px");
    for (name, pred) in cases {
        let d = l2_center(&pred, &truth).expect("both boxes present");
        println!("{name:<16} {:>8.4} {d:>8.3}", iou(&pred, &truth));
    }
    // an absent prediction scores zero overlap and has no center
    println!("absent: IoU {} / L2 {:?}", iou(&BoundingBox::ABSENT, &truth), l2_center(&BoundingBox::ABSENT, &truth).err());
}
