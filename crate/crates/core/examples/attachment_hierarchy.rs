//! Building an attachment hierarchy from agent actions.

use permanence::attachment::{hierarchy_timeline, ActionEvent, AttachDetachRegistry};

fn ev(frame: usize, verb: &str, child: &str, parent: &str) -> ActionEvent<String> {
    ActionEvent::new(frame, verb, child.to_string(), parent.to_string()).expect("distinct objects")
}

fn main() -> permanence::error::Result<()> {
    let registry = AttachDetachRegistry::new([("insert", "take-out"), ("pick-up", "put-down")])?;
    let actions = vec![
        ev(0, "insert", "hubcover", "case"),
        ev(1, "insert", "subassembly", "case"),
        ev(2, "insert", "plug", "case"),
        ev(3, "pick-up", "case", "hand"),
        ev(8, "put-down", "case", "hand"),
        ev(9, "take-out", "plug", "case"),
    ];
    let timeline = hierarchy_timeline(&actions, &registry, 11)?;
    for (t, h) in timeline.iter().enumerate() {
        let edges: Vec<String> = h.edges().map(|(c, p)| format!("{c}->{p}")).collect();
        println!("frame {t:>2}: root(plug) = {:<5} {}", h.root(&"plug".to_string()), edges.join(" "));
    }

    // a second parent, or a cycle, is refused
    let mut h = timeline[5].clone();
    println!("{}", h.attach("case".into(), "table".into()).unwrap_err());
    println!("{}", h.attach("hand".into(), "plug".into()).unwrap_err());
    Ok(())
}
