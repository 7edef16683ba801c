//! A cone carries the snitch away; only the action-aware tracker follows.

use permanence::anchoring::{run_stream, AnchoringConfig, Tracker};
use permanence::attachment::AttachDetachRegistry;
use permanence::evaluation::{compare, evaluate};
use permanence::simulator::{
    degrade, first_detection_frame, generate_scenario, render_ground_truth, NoiseProfile, ScenarioParams, Template,
};

fn main() -> permanence::error::Result<()> {
    let script = generate_scenario(&ScenarioParams::with_template(Template::Carried), 7)?;
    let truth = render_ground_truth(&script)?;
    let stream = degrade(&truth, &NoiseProfile::perfect())?;
    let target = script.target_class()?.clone();
    let start = first_detection_frame(&stream, &target).unwrap_or(script.n_frames);
    for a in &script.actions {
        println!("frame {:>3}: {} {} {}", a.frame, a.verb, a.child, a.parent);
    }

    let mut reports = Vec::new();
    let mut traces = Vec::new();
    for (name, cfg) in [
        ("AAPA-6k5", AnchoringConfig::default()),
        ("PA-6k5", AnchoringConfig::default().baseline()),
    ] {
        let mut tracker = Tracker::new(cfg, AttachDetachRegistry::containment())?.with_catalog(script.catalog());
        let out = run_stream(&mut tracker, script.n_frames, &stream, &script.actions, &target)?;
        reports.push(evaluate(name, "pp", &out.target_boxes, &truth.target_boxes()?, &truth.labels(), start)?);
        traces.push(out.target_boxes);
    }

    println!("\nframe  label      truth center      AAPA center       PA center");
    let center = |b: Option<permanence::geometry::BoundingBox>| {
        b.and_then(|b| b.center()).map_or("-".to_string(), |(x, y)| format!("({x:.0},{y:.0})"))
    };
    for t in (0..script.n_frames).step_by(15) {
        println!(
            "{t:>5}  {:<9}  {:<16}  {:<16}  {}",
            truth.frames[t].label,
            center(Some(truth.frames[t].boxes[&truth.target])),
            center(traces[0][t]),
            center(traces[1][t]),
        );
    }
    println!("\n{}", compare(&reports));
    Ok(())
}
