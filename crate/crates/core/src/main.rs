use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use permanence::commands::{
    cmd_compare, cmd_generate, cmd_guidance, cmd_run, GenerateConfig, GuidanceConfig, RunSettings,
    TauSetting, TAU_SWEEP,
};
use permanence::error::{Error, Result};
use permanence::records::{read_text, write_text};
use permanence::simulator::{NoiseProfile, Template};

#[derive(Parser)]
#[command(name = "permanence", version, about = "Object-permanence tracking with attachment-aware anchoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scenario corpus.
    Generate(GenerateArgs),
    /// Run a tracker variant over a corpus and score it.
    Run(RunArgs),
    /// Write tracking vectors and weight matrices for a corpus.
    Guidance(GuidanceArgs),
    /// Tabulate report files side by side.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    scenarios: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma separated: visible, occluded, contained, carried, static.
    #[arg(long, value_delimiter = ',', default_value = "visible,occluded,contained,carried")]
    templates: Vec<String>,
    #[arg(long, default_value_t = 300)]
    frames: usize,
    /// Comma separated noise profiles: pp, od, flicker.
    #[arg(long, value_delimiter = ',', default_value = "pp,od,flicker")]
    noise: Vec<String>,
    /// Convert LA-CATER style annotation files from this directory.
    #[arg(long)]
    lacater_import: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Key-value settings file; flags win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// pa or aapa.
    #[arg(long)]
    model: Option<String>,
    /// Alignment cost cap; comma separated for several runs.
    #[arg(long, value_delimiter = ',')]
    tau: Vec<f64>,
    /// Run the 3000, 6500 and 10000 caps.
    #[arg(long, conflicts_with = "tau")]
    sweep: bool,
    #[arg(long)]
    appear: Option<u32>,
    #[arg(long)]
    disappear: Option<u32>,
    #[arg(long)]
    occlusion_overlap: Option<f64>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Attach/detach verb pairs, one `attach detach` pair per line.
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct GuidanceArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value_t = 100.0)]
    w: f64,
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = permanence::simulator::MAX_OBJECTS)]
    k: usize,
    #[arg(long)]
    registry: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Report JSON files written by `run`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Write compare.txt and compare.json here instead of printing.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn generate(a: GenerateArgs) -> Result<()> {
    let cfg = GenerateConfig {
        out: a.out,
        scenarios: a.scenarios,
        seed: a.seed,
        templates: a.templates.iter().map(|t| t.parse()).collect::<Result<Vec<Template>>>()?,
        n_frames: a.frames,
        noise: a.noise.iter().map(|n| NoiseProfile::named(n)).collect::<Result<_>>()?,
        lacater_import: a.lacater_import,
    };
    let manifest = cmd_generate(&cfg)?;
    println!("{} scenarios written to {}", manifest.scenarios.len(), cfg.out.display());
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let file = match &a.config {
        Some(p) => RunSettings::from_toml(&read_text(p)?, p)?,
        None => RunSettings::default(),
    };
    let tau = if a.sweep {
        Some(TauSetting::Many(TAU_SWEEP.to_vec()))
    } else if a.tau.is_empty() {
        None
    } else {
        Some(TauSetting::Many(a.tau))
    };
    let flags = RunSettings {
        model: a.model,
        tau,
        appear: a.appear,
        disappear: a.disappear,
        occlusion_overlap: a.occlusion_overlap,
        noise: a.noise,
        seed: a.seed,
        corpus: a.corpus,
        out: a.out,
        registry: a.registry,
        threads: a.threads,
    };
    let cfg = file.overlay(flags).resolve()?;
    let reports = cmd_run(&cfg)?;
    print!("{}", permanence::evaluation::compare(&reports));
    Ok(())
}

fn guidance(a: GuidanceArgs) -> Result<()> {
    let cfg = GuidanceConfig {
        corpus: a.corpus,
        out: a.out,
        target: a.target,
        w: a.w,
        normalize: a.normalize,
        k: a.k,
        registry: a.registry,
    };
    let n = cmd_guidance(&cfg)?;
    println!("guidance written for {n} scenarios to {}", cfg.out.display());
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let (text, json) = cmd_compare(&a.reports)?;
    match a.out {
        Some(dir) => {
            write_text(&dir.join("compare.txt"), &text)?;
            write_text(&dir.join("compare.json"), &json)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result: Result<()> = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Guidance(a) => guidance(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if Error::is_validation(&e) { 1 } else { 2 })
        }
    }
}
