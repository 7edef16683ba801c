//! Corpus-level commands behind the `permanence` binary.
//!
//! Corpus layout:
//!
//! ```text
//! <corpus>/manifest.json
//! <corpus>/<scenario>/script.json           (generated corpora only)
//! <corpus>/<scenario>/truth.txt             frame id class x y w h label
//! <corpus>/<scenario>/actions.txt           frame verb child parent
//! <corpus>/<scenario>/detections.<noise>.txt
//! ```
//!
//! Run output:
//!
//! ```text
//! <out>/<model>/<scenario>.predictions.txt
//! <out>/<model>.report.json
//! <out>/<model>.report.txt
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentConfig, DEFAULT_TAU};
use crate::anchoring::{run_stream, AnchoringConfig, Tracker};
use crate::attachment::{hierarchy_timeline, ActionEvent, AttachDetachRegistry};
use crate::error::{Error, Result};
use crate::evaluation::{compare, evaluate, EvalReport};
use crate::geometry::Detection;
use crate::guidance::{build_tracking_vector, build_weight_matrix, ColumnMap};
use crate::lacater::import_dir;
use crate::records::{
    format_actions, format_annotations, format_detections, format_predictions, parse_actions,
    parse_annotations, parse_detections, parse_registry, read_text, write_text,
};
use crate::simulator::{
    degrade, first_detection_frame, generate_scenario, render_ground_truth, GroundTruth,
    NoiseProfile, ScenarioParams, ScenarioScript, Template, MAX_OBJECTS,
};

pub const MANIFEST: &str = "manifest.json";
pub const TAU_SWEEP: [f64; 3] = [3000.0, 6500.0, 10000.0];

/// Deterministic per-item seed.
pub fn derive_seed(seed: u64, index: u64, salt: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn salt_of(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    #[serde(default)]
    pub template: Option<Template>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub noise: Vec<NoiseProfile>,
    pub scenarios: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(corpus: &Path) -> Result<Self> {
        let path = corpus.join(MANIFEST);
        if !path.is_file() {
            return Err(Error::Invalid(format!("{} is not a corpus (no {MANIFEST})", corpus.display())));
        }
        serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateConfig {
    pub out: PathBuf,
    pub scenarios: usize,
    pub seed: u64,
    /// Scenario `i` uses `templates[i % len]`.
    pub templates: Vec<Template>,
    pub n_frames: usize,
    pub noise: Vec<NoiseProfile>,
    /// Convert a directory of LA-CATER style files instead of generating.
    pub lacater_import: Option<PathBuf>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("corpus"),
            scenarios: 20,
            seed: 0,
            templates: Template::MIXED.to_vec(),
            n_frames: crate::simulator::DEFAULT_FRAMES,
            noise: NoiseProfile::builtin(),
            lacater_import: None,
        }
    }
}

struct RenderedScenario {
    name: String,
    template: Option<Template>,
    seed: Option<u64>,
    script: Option<ScenarioScript>,
    truth: GroundTruth,
    actions: Vec<ActionEvent<String>>,
    streams: Vec<(String, Vec<Detection>)>,
}

fn scenario_name(i: usize) -> String {
    format!("s{i:04}")
}

fn write_scenario(dir: &Path, s: &RenderedScenario) -> Result<()> {
    let sdir = dir.join(&s.name);
    if let Some(script) = &s.script {
        write_text(&sdir.join("script.json"), &(serde_json::to_string_pretty(script)? + "\n"))?;
    }
    write_text(&sdir.join("truth.txt"), &format_annotations(&s.truth))?;
    write_text(&sdir.join("actions.txt"), &format_actions(&s.actions))?;
    for (noise, stream) in &s.streams {
        write_text(&sdir.join(format!("detections.{noise}.txt")), &format_detections(stream))?;
    }
    Ok(())
}

fn noise_for(profile: &NoiseProfile, seed: u64, index: usize) -> NoiseProfile {
    profile.clone().with_seed(derive_seed(seed, index as u64, salt_of(&profile.name)))
}

pub fn cmd_generate(cfg: &GenerateConfig) -> Result<Manifest> {
    for p in &cfg.noise {
        p.validate()?;
    }
    let rendered: Vec<RenderedScenario> = match &cfg.lacater_import {
        Some(dir) => import_dir(dir)?
            .into_par_iter()
            .enumerate()
            .map(|(i, (name, video))| {
                let streams = cfg
                    .noise
                    .iter()
                    .map(|p| Ok((p.name.clone(), degrade(&video.truth, &noise_for(p, cfg.seed, i))?)))
                    .collect::<Result<_>>()
                    .map_err(|e| e.in_scenario(&name))?;
                Ok(RenderedScenario {
                    name,
                    template: None,
                    seed: None,
                    script: None,
                    truth: video.truth,
                    actions: video.actions,
                    streams,
                })
            })
            .collect::<Result<_>>()?,
        None => {
            if cfg.templates.is_empty() {
                return Err(Error::Invalid("no scenario templates given".into()));
            }
            (0..cfg.scenarios)
                .into_par_iter()
                .map(|i| {
                    let name = scenario_name(i);
                    let template = cfg.templates[i % cfg.templates.len()];
                    let seed = derive_seed(cfg.seed, i as u64, 0);
                    let params = ScenarioParams {
                        n_frames: cfg.n_frames,
                        ..ScenarioParams::with_template(template)
                    };
                    let build = || -> Result<RenderedScenario> {
                        let script = generate_scenario(&params, seed)?;
                        let truth = render_ground_truth(&script)?;
                        let streams = cfg
                            .noise
                            .iter()
                            .map(|p| Ok((p.name.clone(), degrade(&truth, &noise_for(p, cfg.seed, i))?)))
                            .collect::<Result<_>>()?;
                        Ok(RenderedScenario {
                            name: name.clone(),
                            template: Some(template),
                            seed: Some(seed),
                            actions: script.actions.clone(),
                            script: Some(script),
                            truth,
                            streams,
                        })
                    };
                    build().map_err(|e| e.in_scenario(&name))
                })
                .collect::<Result<_>>()?
        }
    };

    for s in &rendered {
        write_scenario(&cfg.out, s)?;
    }
    let manifest = Manifest {
        seed: cfg.seed,
        noise: cfg.noise.clone(),
        scenarios: rendered
            .iter()
            .map(|s| ManifestEntry {
                name: s.name.clone(),
                template: s.template,
                seed: s.seed,
            })
            .collect(),
    };
    write_text(&cfg.out.join(MANIFEST), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    info!("wrote {} scenarios to {}", manifest.scenarios.len(), cfg.out.display());
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Pa,
    Aapa,
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pa" => Ok(Model::Pa),
            "aapa" => Ok(Model::Aapa),
            other => Err(Error::Invalid(format!("unknown model `{other}` (expected pa or aapa)"))),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Pa => "PA",
            Model::Aapa => "AAPA",
        })
    }
}

/// `3000 -> 3k`, `6500 -> 6k5`, `10000 -> 10k`; other values verbatim.
pub fn tau_label(tau: f64) -> String {
    if tau.fract() == 0.0 && tau >= 1000.0 && (tau % 100.0) == 0.0 {
        let k = (tau / 1000.0).floor();
        let h = ((tau - k * 1000.0) / 100.0).round();
        if h == 0.0 {
            format!("{k}k")
        } else {
            format!("{k}k{h}")
        }
    } else {
        format!("{tau}")
    }
}

pub fn model_name(model: Model, tau: f64) -> String {
    format!("{model}-{}", tau_label(tau))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TauSetting {
    One(f64),
    Many(Vec<f64>),
}

impl TauSetting {
    pub fn values(&self) -> Vec<f64> {
        match self {
            TauSetting::One(t) => vec![*t],
            TauSetting::Many(v) => v.clone(),
        }
    }
}

/// Partial run settings, from a config file or from flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub model: Option<String>,
    pub tau: Option<TauSetting>,
    pub appear: Option<u32>,
    pub disappear: Option<u32>,
    pub occlusion_overlap: Option<f64>,
    pub noise: Option<String>,
    pub seed: Option<u64>,
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunSettings {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// `other` wins wherever it is set.
    pub fn overlay(self, other: RunSettings) -> RunSettings {
        RunSettings {
            model: other.model.or(self.model),
            tau: other.tau.or(self.tau),
            appear: other.appear.or(self.appear),
            disappear: other.disappear.or(self.disappear),
            occlusion_overlap: other.occlusion_overlap.or(self.occlusion_overlap),
            noise: other.noise.or(self.noise),
            seed: other.seed.or(self.seed),
            corpus: other.corpus.or(self.corpus),
            out: other.out.or(self.out),
            registry: other.registry.or(self.registry),
            threads: other.threads.or(self.threads),
        }
    }

    pub fn resolve(self) -> Result<RunConfig> {
        let defaults = AnchoringConfig::default();
        let cfg = RunConfig {
            model: self.model.as_deref().unwrap_or("aapa").parse()?,
            taus: self.tau.map(|t| t.values()).unwrap_or_else(|| vec![DEFAULT_TAU]),
            appear: self.appear.unwrap_or(defaults.appear_threshold),
            disappear: self.disappear.unwrap_or(defaults.disappear_threshold),
            occlusion_overlap: self.occlusion_overlap.unwrap_or(defaults.occlusion_overlap),
            noise: self.noise.unwrap_or_else(|| "pp".into()),
            seed: self.seed.unwrap_or(0),
            corpus: self
                .corpus
                .ok_or_else(|| Error::Invalid("no corpus given".into()))?,
            out: self.out.unwrap_or_else(|| PathBuf::from("runs")),
            registry: self.registry,
            threads: self.threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Model,
    /// One report per value.
    pub taus: Vec<f64>,
    pub appear: u32,
    pub disappear: u32,
    pub occlusion_overlap: f64,
    pub noise: String,
    /// Seeds detection streams synthesized when a corpus lacks one for
    /// `noise`; also recorded in reports.
    pub seed: u64,
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub registry: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(model: Model, corpus: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        let d = AnchoringConfig::default();
        Self {
            model,
            taus: vec![DEFAULT_TAU],
            appear: d.appear_threshold,
            disappear: d.disappear_threshold,
            occlusion_overlap: d.occlusion_overlap,
            noise: "pp".into(),
            seed: 0,
            corpus: corpus.into(),
            out: out.into(),
            registry: None,
            threads: None,
        }
    }

    pub fn anchoring(&self, tau: f64) -> AnchoringConfig {
        AnchoringConfig {
            alignment: AlignmentConfig::with_tau(tau),
            appear_threshold: self.appear,
            disappear_threshold: self.disappear,
            occlusion_overlap: self.occlusion_overlap,
            action_aware: self.model == Model::Aapa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() {
            return Err(Error::Invalid("no tau given".into()));
        }
        for &tau in &self.taus {
            self.anchoring(tau).validate()?;
        }
        if self.threads == Some(0) {
            return Err(Error::Invalid("threads must be >= 1".into()));
        }
        Ok(())
    }

    fn registry(&self) -> Result<AttachDetachRegistry> {
        match &self.registry {
            Some(p) => parse_registry(&read_text(p)?, p),
            None => Ok(AttachDetachRegistry::containment()),
        }
    }
}

/// Truth, actions and one detection stream of a corpus scenario.
pub struct ScenarioInput {
    pub truth: GroundTruth,
    pub actions: Vec<ActionEvent<String>>,
    pub detections: Vec<Detection>,
}

/// Loads a scenario and checks that every record falls inside the
/// annotated frame range. A missing detection file for a built-in noise
/// profile is synthesized from `script.json`.
pub fn load_scenario(corpus: &Path, entry: &ManifestEntry, index: usize, noise: &str, seed: u64) -> Result<ScenarioInput> {
    let dir = corpus.join(&entry.name);
    let truth_path = dir.join("truth.txt");
    let truth = parse_annotations(&read_text(&truth_path)?, &truth_path)?;
    let actions_path = dir.join("actions.txt");
    let actions = parse_actions(&read_text(&actions_path)?, &actions_path)?;
    let det_path = dir.join(format!("detections.{noise}.txt"));
    let detections = if det_path.exists() {
        parse_detections(&read_text(&det_path)?, &det_path)?
    } else {
        let script_path = dir.join("script.json");
        if !script_path.exists() {
            return Err(Error::Invalid(format!("{} does not exist", det_path.display())));
        }
        let script: ScenarioScript = serde_json::from_str(&read_text(&script_path)?)?;
        let profile = noise_for(&NoiseProfile::named(noise)?, seed, index);
        degrade(&render_ground_truth(&script)?, &profile)?
    };

    let n = truth.frames.len();
    if let Some(d) = detections.iter().find(|d| d.frame >= n) {
        return Err(Error::LengthMismatch(format!(
            "detection at frame {} but only {n} annotated frames",
            d.frame
        )));
    }
    if let Some(a) = actions.iter().find(|a| a.frame >= n) {
        return Err(Error::LengthMismatch(format!(
            "action at frame {} but only {n} annotated frames",
            a.frame
        )));
    }
    Ok(ScenarioInput {
        truth,
        actions,
        detections,
    })
}

pub struct ScenarioRun {
    pub predictions: String,
    pub report: EvalReport,
}

/// Runs one model variant over one loaded scenario.
pub fn run_scenario(
    input: &ScenarioInput,
    cfg: AnchoringConfig,
    registry: &AttachDetachRegistry,
    model: &str,
    noise: &str,
) -> Result<ScenarioRun> {
    let target = input.truth.target_class()?.clone();
    let mut tracker = Tracker::new(cfg, registry.clone())?.with_catalog(input.truth.classes.clone());
    let n = input.truth.frames.len();
    let out = run_stream(&mut tracker, n, &input.detections, &input.actions, &target)?;
    let start = first_detection_frame(&input.detections, &target).unwrap_or(n);
    let mut report = evaluate(
        model,
        noise,
        &out.target_boxes,
        &input.truth.target_boxes()?,
        &input.truth.labels(),
        start,
    )?;
    report.tau = cfg.alignment.tau;
    Ok(ScenarioRun {
        predictions: format_predictions(&out.records),
        report,
    })
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Invalid(format!("thread pool: {e}")))
}

/// Runs every configured tau over the corpus. Returns one merged report per
/// tau, in the order given.
pub fn cmd_run(cfg: &RunConfig) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    let registry = cfg.registry()?;
    let manifest = Manifest::load(&cfg.corpus)?;
    let pool = pool(cfg.threads)?;

    let inputs: Vec<ScenarioInput> = pool.install(|| {
        manifest
            .scenarios
            .par_iter()
            .enumerate()
            .map(|(i, e)| load_scenario(&cfg.corpus, e, i, &cfg.noise, cfg.seed).map_err(|err| err.in_scenario(&e.name)))
            .collect::<Result<_>>()
    })?;

    let mut reports = Vec::new();
    for &tau in &cfg.taus {
        let name = model_name(cfg.model, tau);
        let anchoring = cfg.anchoring(tau);
        let runs: Vec<ScenarioRun> = pool.install(|| {
            inputs
                .par_iter()
                .zip(&manifest.scenarios)
                .map(|(input, e)| {
                    run_scenario(input, anchoring, &registry, &name, &cfg.noise).map_err(|err| err.in_scenario(&e.name))
                })
                .collect::<Result<_>>()
        })?;

        let mut merged = EvalReport::new(&name, &cfg.noise);
        merged.tau = tau;
        for (run, e) in runs.iter().zip(&manifest.scenarios) {
            write_text(&cfg.out.join(&name).join(format!("{}.predictions.txt", e.name)), &run.predictions)?;
            merged.merge(&run.report)?;
        }
        merged.seed = cfg.seed;
        write_text(
            &cfg.out.join(format!("{name}.report.json")),
            &(serde_json::to_string_pretty(&merged)? + "\n"),
        )?;
        write_text(&cfg.out.join(format!("{name}.report.txt")), &compare(std::slice::from_ref(&merged)))?;
        info!("{name}: {} scenarios", merged.scenarios);
        reports.push(merged);
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceConfig {
    pub corpus: PathBuf,
    pub out: PathBuf,
    /// Defaults to each scenario's snitch.
    pub target: Option<String>,
    pub w: f64,
    pub normalize: bool,
    /// Matrix width; columns beyond the scenario's objects are padding.
    pub k: usize,
    pub registry: Option<PathBuf>,
}

impl GuidanceConfig {
    pub fn new(corpus: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            corpus: corpus.into(),
            out: out.into(),
            target: None,
            w: 100.0,
            normalize: false,
            k: MAX_OBJECTS,
            registry: None,
        }
    }
}

/// Writes `<out>/<scenario>/{vector,matrix,columns,actions}.txt`.
pub fn cmd_guidance(cfg: &GuidanceConfig) -> Result<usize> {
    let registry = match &cfg.registry {
        Some(p) => parse_registry(&read_text(p)?, p)?,
        None => AttachDetachRegistry::containment(),
    };
    let manifest = Manifest::load(&cfg.corpus)?;
    for e in &manifest.scenarios {
        let build = || -> Result<()> {
            let dir = cfg.corpus.join(&e.name);
            let truth_path = dir.join("truth.txt");
            let truth = parse_annotations(&read_text(&truth_path)?, &truth_path)?;
            let actions_path = dir.join("actions.txt");
            let actions = parse_actions(&read_text(&actions_path)?, &actions_path)?;
            let timeline = hierarchy_timeline(&actions, &registry, truth.frames.len())?;
            let target = cfg.target.as_deref().unwrap_or(&truth.target);
            let vector = build_tracking_vector(&truth.frames, &timeline, target)?;
            let columns = ColumnMap::from_annotations(&truth.frames);
            let matrix = build_weight_matrix(&vector, &columns, cfg.k, cfg.w, cfg.normalize)?;

            let out = cfg.out.join(&e.name);
            write_text(&out.join("vector.txt"), &vector.to_text())?;
            write_text(&out.join("matrix.txt"), &matrix.to_text())?;
            write_text(&out.join("columns.txt"), &(columns.ids().join("\n") + "\n"))?;
            write_text(&out.join("actions.txt"), &format_actions(&actions))
        };
        build().map_err(|err| err.in_scenario(&e.name))?;
    }
    Ok(manifest.scenarios.len())
}

/// Text table and JSON for the given report files, in argument order.
pub fn cmd_compare(reports: &[PathBuf]) -> Result<(String, String)> {
    if reports.is_empty() {
        return Err(Error::Invalid("no reports to compare".into()));
    }
    let parsed = reports
        .iter()
        .map(|p| {
            serde_json::from_str::<EvalReport>(&read_text(p)?)
                .map_err(|e| Error::Parse(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((compare(&parsed), serde_json::to_string_pretty(&parsed)? + "\n"))
}
