//! Generate a small corpus on disk, run both trackers across the cost caps
//! and tabulate.

use permanence::commands::{cmd_generate, cmd_run, GenerateConfig, Model, RunConfig, TAU_SWEEP};
use permanence::evaluation::compare;
use permanence::simulator::NoiseProfile;

fn main() -> permanence::error::Result<()> {
    let root = std::env::temp_dir().join(format!("permanence-sweep-{}", std::process::id()));
    let corpus = root.join("corpus");
    cmd_generate(&GenerateConfig {
        out: corpus.clone(),
        scenarios: 16,
        seed: 1,
        noise: vec![NoiseProfile::perfect(), NoiseProfile::detector()],
        ..GenerateConfig::default()
    })?;

    let mut reports = Vec::new();
    for noise in ["pp", "od"] {
        for model in [Model::Pa, Model::Aapa] {
            let mut cfg = RunConfig::new(model, &corpus, root.join("runs").join(noise));
            cfg.taus = TAU_SWEEP.to_vec();
            cfg.noise = noise.into();
            reports.extend(cmd_run(&cfg)?);
        }
    }
    print!("{}", compare(&reports));
    println!("outputs under {}", root.display());
    Ok(())
}
