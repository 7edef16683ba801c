//! The snitch slides behind a wall and stops there. Nothing tells the
//! tracker it moved, so the belief stays at the last sighting.

use permanence::anchoring::{run_stream, AnchoringConfig, Tracker};
use permanence::attachment::AttachDetachRegistry;
use permanence::geometry::{ObjectClass, Shape, SizeClass};
use permanence::simulator::{
    degrade, render_ground_truth, Keyframe, NoiseProfile, ScenarioScript, ScriptObject, Template, FRAME_HEIGHT,
    FRAME_WIDTH,
};

fn object(id: &str, class: ObjectClass, side: f64, depth: f64, path: &[(usize, f64, f64)]) -> ScriptObject {
    ScriptObject {
        id: id.into(),
        class,
        w: side,
        h: side,
        depth,
        keyframes: path.iter().map(|&(frame, cx, cy)| Keyframe { frame, cx, cy }).collect(),
    }
}

fn main() -> permanence::error::Result<()> {
    let cube = |color| ObjectClass::new(Shape::Cube, SizeClass::Small, "rubber", color);
    let script = ScenarioScript {
        n_frames: 90,
        frame_width: FRAME_WIDTH,
        frame_height: FRAME_HEIGHT,
        template: Template::Occluded,
        target: "snitch".into(),
        objects: vec![
            object("snitch", ObjectClass::snitch(), 16.0, 0.0, &[(10, 100.0, 120.0), (40, 160.0, 120.0)]),
            object("wall", ObjectClass::new(Shape::Cube, SizeClass::Large, "rubber", "gray"), 60.0, 5.0, &[(0, 160.0, 120.0)]),
            object("a", cube("red"), 18.0, 1.0, &[(0, 30.0, 210.0)]),
            object("b", cube("blue"), 18.0, 1.0, &[(0, 90.0, 210.0)]),
            object("c", cube("green"), 18.0, 1.0, &[(0, 150.0, 210.0)]),
        ],
        actions: vec![],
        motions: vec![],
        registry: AttachDetachRegistry::containment(),
    };
    script.validate()?;
    let truth = render_ground_truth(&script)?;
    let stream = degrade(&truth, &NoiseProfile::perfect())?;
    let mut tracker = Tracker::new(AnchoringConfig::default(), AttachDetachRegistry::containment())?
        .with_catalog(script.catalog());
    let out = run_stream(&mut tracker, script.n_frames, &stream, &[], &ObjectClass::snitch())?;

    for t in (20..script.n_frames).step_by(5) {
        let belief = out.target_boxes[t].and_then(|b| b.center());
        let actual = truth.frames[t].boxes["snitch"].center();
        println!("frame {t:>2} {:<9} believed {belief:?} actual {actual:?}", truth.frames[t].label.to_string());
    }
    Ok(())
}
