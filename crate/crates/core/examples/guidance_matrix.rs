//! Tracking vector and weight matrix for an attention-guided video model.

use permanence::guidance::{build_tracking_vector, build_weight_matrix, ColumnMap};
use permanence::simulator::{generate_scenario, render_ground_truth, ScenarioParams, Template, MAX_OBJECTS};

fn main() -> permanence::error::Result<()> {
    let script = generate_scenario(&ScenarioParams::with_template(Template::Contained), 2)?;
    let truth = render_ground_truth(&script)?;
    let timeline = script.timeline()?;
    let v = build_tracking_vector(&truth.frames, &timeline, &script.target)?;
    let columns = ColumnMap::from_annotations(&truth.frames);
    println!("columns: {}", columns.ids().join(" "));

    let mut last = "";
    for (t, id) in v.entries.iter().enumerate() {
        if id != last {
            println!("from frame {t:>3} track `{id}` ({})", truth.frames[t].label);
            last = id;
        }
    }

    for normalize in [false, true] {
        let w = build_weight_matrix(&v, &columns, MAX_OBJECTS, 100.0, normalize)?;
        let row: Vec<String> = w.values[0].iter().map(|x| format!("{x:.3}")).collect();
        println!("normalized={normalize}: row 0 = [{}]", row.join(", "));
    }
    Ok(())
}
