//! Globally optimal anchor/detection matching under a cost cap.

use permanence::alignment::{align, build_cost_matrix, solve_assignment, AlignmentConfig};
use permanence::geometry::{BoundingBox, Detection, ObjectClass, Shape, SizeClass};

fn main() -> permanence::error::Result<()> {
    let cube = ObjectClass::new(Shape::Cube, SizeClass::Medium, "rubber", "red");
    let snitch = ObjectClass::snitch();
    let anchors = vec![
        (BoundingBox::new(100.0, 100.0, 16.0, 16.0), snitch.clone()),
        (BoundingBox::new(110.0, 100.0, 26.0, 26.0), cube.clone()),
        (BoundingBox::new(250.0, 40.0, 16.0, 16.0), snitch.clone()),
    ];
    let detections = vec![
        Detection::new(1, cube, BoundingBox::new(113.0, 101.0, 26.0, 26.0))?,
        Detection::new(1, snitch.clone(), BoundingBox::new(104.0, 99.0, 16.0, 16.0))?,
        Detection::new(1, snitch, BoundingBox::new(20.0, 200.0, 16.0, 16.0))?,
    ];

    for tau in [3000.0, 6500.0, 10000.0] {
        let cfg = AlignmentConfig::with_tau(tau);
        let m = build_cost_matrix(&anchors, &detections, &cfg);
        let a = solve_assignment(&m);
        let r = align(&anchors, &detections, &cfg);
        println!(
            "tau {tau:>6}: pairs {:?} cost {} lost anchors {:?} new detections {:?}",
            a.pairs, a.total_cost, r.lost, r.unmatched_detections
        );
    }
    Ok(())
}
