//! Reading an LA-CATER style annotation file into ground truth and actions.

use std::path::Path;

use permanence::lacater::import_video;
use permanence::simulator::{degrade, NoiseProfile};

const VIDEO: &str = r#"{
  "objects": [
    {"instance": "Spl_0", "shape": "spl", "size": "small", "material": "metal", "color": "gold",
     "locations": [[50,50,16,16],[50,50,16,16],[50,50,16,16],[50,50,16,16],[70,50,16,16],[90,50,16,16],[90,50,16,16],[90,50,16,16]]},
    {"instance": "Cone_0", "shape": "cone", "size": "large", "material": "rubber", "color": "green",
     "locations": [[10,38,40,40],[38,38,40,40],[38,38,40,40],[38,38,40,40],[58,38,40,40],[78,38,40,40],[78,38,40,40],[140,38,40,40]]}
  ],
  "movements": {"Cone_0": [["_contain", "Spl_0", 0, 1], ["_slide", null, 3, 5], ["_pick_place", null, 7, 7]]}
}"#;

fn main() -> permanence::error::Result<()> {
    let video = import_video(VIDEO, Path::new("video.json"))?;
    for a in &video.actions {
        println!("frame {}: {} {} {}", a.frame, a.verb, a.child, a.parent);
    }
    let stream = degrade(&video.truth, &NoiseProfile::perfect())?;
    for f in &video.truth.frames {
        let seen = stream.iter().filter(|d| d.frame == f.frame).count();
        println!("frame {}: {:<9} {} of {} objects detectable", f.frame, f.label, seen, f.boxes.len());
    }
    Ok(())
}
