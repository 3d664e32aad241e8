//! The four experiment stages and their on-disk artifacts.
//!
//! Every artifact written by `prepare`, `train` and `attack` gets a `.key`
//! sidecar holding a hash of the configuration it was built from. A rerun
//! whose key matches reuses the artifact instead of rebuilding it.

use std::fs;
use std::path::{Path, PathBuf};

use freqshield::attacks::{craft_attack_set, load_adversarial_set, write_adversarial_set, build_mixed_set, AdversarialSet};
use freqshield::data::{load_dataset, split_dataset, write_dataset, Dataset, SplitSpec};
use freqshield::detector::DetectorBundle;
use freqshield::frequency::RepresentationMode;
use freqshield::models::{
    load_reconstructor, load_segmenter, save_model, train_reconstructor, train_segmenter, ArchitectureSpec, Model, ReconstructionModel,
    SegmenterModel, TrainConfig, TrainHistory,
};
use freqshield::pipeline::{
    auc_table_tsv, evaluate_detector, run_combination_grid, AucRow, GridInputs, GridPlan, GridResult, GridRow, NamedDetector,
    NamedReformer, NamedSegmenter,
};
use freqshield::reformer::ReformerBundle;
use freqshield::synthetic::{generate, SyntheticConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, PlanKind};
use crate::error::{CliError, CliResult, StageContext};

pub const SPLITS: [&str; 3] = ["train", "val", "test"];
pub const ADVERSARIAL_MANIFEST: &str = "adversarial.txt";

/// Paths of every artifact under the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn manifest(&self, split: &str) -> PathBuf {
        self.data_dir().join(format!("{split}.txt"))
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn model(&self, role: Role, name: &str) -> PathBuf {
        self.models_dir().join(format!("{}-{}.model", role.prefix(), slug(name)))
    }

    pub fn history(&self, role: Role, name: &str) -> PathBuf {
        self.models_dir().join(format!("{}-{}.history.json", role.prefix(), slug(name)))
    }

    pub fn attack_dir(&self, attack: &str) -> PathBuf {
        self.root.join("attacks").join(slug(attack))
    }

    pub fn attack_manifest(&self, attack: &str) -> PathBuf {
        self.attack_dir(attack).join(ADVERSARIAL_MANIFEST)
    }

    pub fn attack_summary(&self) -> PathBuf {
        self.root.join("attacks").join("summary.tsv")
    }

    pub fn results_dir(&self) -> PathBuf {
        self.root.join("results")
    }

    pub fn auc_table(&self, attack: &str) -> PathBuf {
        self.results_dir().join(format!("auc-{}.tsv", slug(attack)))
    }

    pub fn grid_table(&self) -> PathBuf {
        self.results_dir().join("grid.tsv")
    }

    pub fn plot_data(&self) -> PathBuf {
        self.results_dir().join("plot.csv")
    }

    pub fn grid_rows(&self) -> PathBuf {
        self.results_dir().join("grid.json")
    }
}

/// File-name form of a display name.
pub fn slug(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' { c } else { '_' }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Role {
    Segmenter,
    Detector,
    Reformer,
}

impl Role {
    fn prefix(self) -> &'static str {
        match self {
            Self::Segmenter => "segmenter",
            Self::Detector => "detector",
            Self::Reformer => "reformer",
        }
    }
}

/// Which models `train` builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum TrainWhich {
    Targets,
    Detectors,
    Reformers,
    #[default]
    All,
}

fn hash_key(value: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(value).expect("key material serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// A seed for one component, derived from the experiment seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let d = Sha256::digest(format!("{seed}/{label}").as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn key_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".key");
    PathBuf::from(s)
}

fn is_fresh(artifact: &Path, key: &str) -> bool {
    artifact.exists() && fs::read_to_string(key_path(artifact)).map(|k| k.trim() == key).unwrap_or(false)
}

fn stamp(artifact: &Path, key: &str, stage: &'static str) -> CliResult<()> {
    fs::write(key_path(artifact), format!("{key}\n")).stage(stage, artifact.display())
}

fn require(path: &Path, stage: &'static str, needs: &'static str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact { stage, needs, path: path.to_path_buf() })
    }
}

fn prepare_key(cfg: &ExperimentConfig) -> String {
    hash_key(&("prepare", cfg.seed, resolved_synthetic(cfg), &cfg.dataset.manifest, resolved_split(cfg)))
}

fn resolved_synthetic(cfg: &ExperimentConfig) -> Option<SyntheticConfig> {
    cfg.dataset.synthetic.as_ref().map(|s| SyntheticConfig { seed: cfg.seed, ..s.clone() })
}

fn resolved_split(cfg: &ExperimentConfig) -> SplitSpec {
    SplitSpec { seed: cfg.seed, ..cfg.dataset.split }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareReport {
    pub manifests: Vec<PathBuf>,
    pub counts: [usize; 3],
    pub skipped: bool,
}

/// Build or load the dataset, split it and write one manifest per split.
pub fn cmd_prepare(cfg: &ExperimentConfig) -> CliResult<PrepareReport> {
    const STAGE: &str = "prepare";
    let layout = Layout::new(&cfg.output_dir);
    if let Some(parent) = cfg.output_dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            let e = std::io::Error::new(std::io::ErrorKind::NotFound, "parent directory does not exist");
            return Err(e).stage(STAGE, cfg.output_dir.display());
        }
    }
    let key = prepare_key(cfg);
    let manifests: Vec<PathBuf> = SPLITS.iter().map(|s| layout.manifest(s)).collect();
    if manifests.iter().all(|m| is_fresh(m, &key)) {
        let mut counts = [0; 3];
        for (c, m) in counts.iter_mut().zip(&manifests) {
            *c = load_dataset(m).stage(STAGE, m.display())?.len();
        }
        log::info!("prepare: dataset unchanged, reusing {}", layout.data_dir().display());
        return Ok(PrepareReport { manifests, counts, skipped: true });
    }
    let ds = match (&resolved_synthetic(cfg), &cfg.dataset.manifest) {
        (Some(syn), _) => generate(syn).stage(STAGE, "synthetic dataset")?,
        (None, Some(path)) => load_dataset(path).stage(STAGE, path.display())?,
        (None, None) => return Err(CliError::Config("dataset has no source".into())),
    };
    let (train, val, test) = split_dataset(&ds, &resolved_split(cfg)).stage(STAGE, &ds.name)?;
    let dir = layout.data_dir();
    for (split, part) in SPLITS.iter().zip([&train, &val, &test]) {
        let m = write_dataset(part, &dir, &format!("{split}.txt")).stage(STAGE, dir.display())?;
        stamp(&m, &key, STAGE)?;
    }
    log::info!("prepare: {} train, {} val, {} test samples", train.len(), val.len(), test.len());
    Ok(PrepareReport { manifests, counts: [train.len(), val.len(), test.len()], skipped: false })
}

/// Load one prepared split.
pub fn load_split(layout: &Layout, split: &str, stage: &'static str) -> CliResult<Dataset> {
    let path = layout.manifest(split);
    require(&path, stage, "prepare")?;
    load_dataset(&path).stage(stage, path.display())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub role: Role,
    pub name: String,
    pub path: PathBuf,
    pub skipped: bool,
    /// Final validation loss; `None` when the model was reused.
    pub final_val_loss: Option<f64>,
}

struct Job {
    role: Role,
    name: String,
    spec: ArchitectureSpec,
    mode: RepresentationMode,
}

fn jobs(cfg: &ExperimentConfig, which: TrainWhich, num_classes: usize) -> CliResult<Vec<Job>> {
    let mut out = Vec::new();
    if matches!(which, TrainWhich::Targets | TrainWhich::All) {
        for s in cfg.segmenters()? {
            let spec = ArchitectureSpec { out_channels: num_classes, ..s.spec };
            out.push(Job { role: Role::Segmenter, name: s.name, spec, mode: RepresentationMode::Spatial });
        }
    }
    if matches!(which, TrainWhich::Detectors | TrainWhich::All) {
        for d in cfg.detectors()? {
            out.push(Job { role: Role::Detector, name: d.name, spec: d.spec, mode: d.mode });
        }
    }
    if matches!(which, TrainWhich::Reformers | TrainWhich::All) {
        for r in cfg.reformers()? {
            out.push(Job { role: Role::Reformer, name: r.name, spec: r.spec, mode: RepresentationMode::Spatial });
        }
    }
    Ok(out)
}

fn model_key(cfg: &ExperimentConfig, job: &Job, num_classes: usize) -> String {
    let train = match job.role {
        Role::Segmenter => &cfg.models.segmenter_training,
        _ => &cfg.models.reconstructor_training,
    };
    hash_key(&("model", prepare_key(cfg), job.role, &job.spec, job.mode, num_classes, train, cfg.seed))
}

/// Train the selected models on the prepared train/validation splits.
pub fn cmd_train(cfg: &ExperimentConfig, which: TrainWhich) -> CliResult<Vec<TrainedModel>> {
    const STAGE: &str = "train";
    let layout = Layout::new(&cfg.output_dir);
    let train = load_split(&layout, "train", STAGE)?;
    let val = load_split(&layout, "val", STAGE)?;
    let c = train.num_classes;
    fs::create_dir_all(layout.models_dir()).stage(STAGE, layout.models_dir().display())?;
    let mut out = Vec::new();
    for job in jobs(cfg, which, c)? {
        let path = layout.model(job.role, &job.name);
        let key = model_key(cfg, &job, c);
        let subject = format!("{} {}", job.role.prefix(), job.name);
        if is_fresh(&path, &key) {
            log::info!("train: {subject} unchanged");
            out.push(TrainedModel { role: job.role, name: job.name, path, skipped: true, final_val_loss: None });
            continue;
        }
        let label = format!("{}/{}", job.role.prefix(), job.name);
        let init_seed = derive_seed(cfg.seed, &format!("init/{label}"));
        let (model, history): (Model, TrainHistory) = match job.role {
            Role::Segmenter => {
                let tc = TrainConfig { seed: derive_seed(cfg.seed, &format!("train/{label}")), ..cfg.models.segmenter_training.clone() };
                let m = SegmenterModel::new(job.spec, c, init_seed).stage(STAGE, &subject)?;
                let (m, h) = train_segmenter(m, &train, &val, &tc).stage(STAGE, &subject)?;
                (Model::Segmenter(m), h)
            }
            Role::Detector | Role::Reformer => {
                let tc = TrainConfig { seed: derive_seed(cfg.seed, &format!("train/{label}")), ..cfg.models.reconstructor_training.clone() };
                let m = ReconstructionModel::new(job.spec, job.mode, init_seed).stage(STAGE, &subject)?;
                let (m, h) = train_reconstructor(m, &train, &val, &tc, job.mode).stage(STAGE, &subject)?;
                (Model::Reconstructor(m), h)
            }
        };
        save_model(&model, &path).stage(STAGE, &subject)?;
        let hist = serde_json::to_string_pretty(&history).expect("history serializes");
        fs::write(layout.history(job.role, &job.name), hist + "\n").stage(STAGE, &subject)?;
        stamp(&path, &key, STAGE)?;
        let final_val_loss = history.val_loss.last().copied();
        log::info!("train: {subject} done, validation loss {:?}", final_val_loss);
        out.push(TrainedModel { role: job.role, name: job.name, path, skipped: false, final_val_loss });
    }
    Ok(out)
}

/// Trained segmenters in configuration order.
pub fn load_segmenters(cfg: &ExperimentConfig, stage: &'static str) -> CliResult<Vec<NamedSegmenter>> {
    let layout = Layout::new(&cfg.output_dir);
    cfg.segmenters()?
        .into_iter()
        .map(|s| {
            let path = layout.model(Role::Segmenter, &s.name);
            require(&path, stage, "train")?;
            Ok(NamedSegmenter { model: load_segmenter(&path).stage(stage, path.display())?, name: s.name })
        })
        .collect()
}

fn load_reconstruction(layout: &Layout, role: Role, name: &str, stage: &'static str) -> CliResult<ReconstructionModel> {
    let path = layout.model(role, name);
    require(&path, stage, "train")?;
    load_reconstructor(&path).stage(stage, path.display())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackSummary {
    pub attack: String,
    pub target: String,
    pub samples: usize,
    pub mean_dice_drop: f64,
    pub skipped: bool,
}

fn attack_key(cfg: &ExperimentConfig, attack: &freqshield::attacks::AttackConfig, c: usize) -> CliResult<String> {
    let targets: Vec<String> = jobs(cfg, TrainWhich::Targets, c)?.iter().map(|j| model_key(cfg, j, c)).collect();
    Ok(hash_key(&("attack", prepare_key(cfg), targets, attack)))
}

/// Craft every configured attack against every trained segmenter on the
/// test split and write the adversarial sets with per-sample metadata.
pub fn cmd_attack(cfg: &ExperimentConfig) -> CliResult<Vec<AttackSummary>> {
    const STAGE: &str = "attack";
    let layout = Layout::new(&cfg.output_dir);
    let test = load_split(&layout, "test", STAGE)?;
    let segs = load_segmenters(cfg, STAGE)?;
    let models: Vec<(&str, &SegmenterModel)> = segs.iter().map(|s| (s.name.as_str(), &s.model)).collect();
    let mut out = Vec::new();
    for attack in cfg.attacks() {
        let name = attack.name();
        let manifest = layout.attack_manifest(&name);
        let key = attack_key(cfg, &attack, test.num_classes)?;
        let (set, skipped) = if is_fresh(&manifest, &key) {
            log::info!("attack: {name} unchanged");
            (load_adversarial_set(&manifest, &test).stage(STAGE, manifest.display())?, true)
        } else {
            let dir = layout.attack_dir(&name);
            if dir.exists() {
                fs::remove_dir_all(&dir).stage(STAGE, dir.display())?;
            }
            let set = craft_attack_set(&models, &test, &attack).stage(STAGE, &name)?;
            if let Some(bad) = set.samples.iter().find(|s| !s.within_budget()) {
                let e = freqshield::Error::Numeric(format!("sample {} exceeds the L-infinity budget ({})", bad.id(), bad.linf()));
                return Err(e).stage(STAGE, &name);
            }
            let m = write_adversarial_set(&set, &dir, ADVERSARIAL_MANIFEST).stage(STAGE, &name)?;
            stamp(&m, &key, STAGE)?;
            (set, false)
        };
        for (target, _) in &models {
            let drops: Vec<f64> = set.for_model(target).map(|s| s.achieved_dice_drop).collect();
            let mean = drops.iter().sum::<f64>() / drops.len().max(1) as f64;
            log::info!("attack: {name} on {target}: mean Dice drop {mean:.4} over {} samples", drops.len());
            out.push(AttackSummary { attack: name.clone(), target: target.to_string(), samples: drops.len(), mean_dice_drop: mean, skipped });
        }
    }
    let mut tsv = String::from("attack\ttarget\tsamples\tmean_dice_drop\n");
    for s in &out {
        tsv.push_str(&format!("{}\t{}\t{}\t{:.6}\n", s.attack, s.target, s.samples, s.mean_dice_drop));
    }
    fs::write(layout.attack_summary(), tsv).stage(STAGE, layout.attack_summary().display())?;
    Ok(out)
}

/// Load the adversarial sets written by `attack`.
pub fn load_attack_sets(cfg: &ExperimentConfig, test: &Dataset, stage: &'static str) -> CliResult<Vec<AdversarialSet>> {
    let layout = Layout::new(&cfg.output_dir);
    cfg.attacks()
        .iter()
        .map(|a| {
            let m = layout.attack_manifest(&a.name());
            require(&m, stage, "attack")?;
            let mut set = load_adversarial_set(&m, test).stage(stage, m.display())?;
            set.name = a.name();
            Ok(set)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AucTable {
    pub attack: String,
    pub rows: Vec<AucRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub auc: Vec<AucTable>,
    pub grid: GridResult,
}

/// Detector ROC-AUC tables over mixed clean/adversarial test sets, then the
/// calibrated combination grid with its result tables.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> CliResult<EvaluationReport> {
    const STAGE: &str = "evaluate";
    let layout = Layout::new(&cfg.output_dir);
    let val = load_split(&layout, "val", STAGE)?;
    let test = load_split(&layout, "test", STAGE)?;
    let segmenters = load_segmenters(cfg, STAGE)?;
    let mut detectors = Vec::new();
    for d in cfg.detectors()? {
        let model = load_reconstruction(&layout, Role::Detector, &d.name, STAGE)?;
        let bundle = DetectorBundle::new(model).with_norm(cfg.defense.norm_p).stage(STAGE, &d.name)?;
        detectors.push(NamedDetector { name: d.name, bundle });
    }
    let mut reformers = Vec::new();
    for r in cfg.reformers()? {
        let model = load_reconstruction(&layout, Role::Reformer, &r.name, STAGE)?;
        reformers.push(NamedReformer { bundle: ReformerBundle::new(model).stage(STAGE, &r.name)?, name: r.name });
    }
    let attack_sets = load_attack_sets(cfg, &test, STAGE)?;
    fs::create_dir_all(layout.results_dir()).stage(STAGE, layout.results_dir().display())?;

    let mut auc = Vec::new();
    for set in &attack_sets {
        let mut rows: Vec<AucRow> = detectors.iter().map(|d| AucRow { detector: d.name.clone(), per_target: Vec::new() }).collect();
        for seg in &segmenters {
            let adv = set.model_dataset(&seg.name).stage(STAGE, &seg.name)?;
            let mixed = build_mixed_set(&test, &adv, cfg.attack.mixed_ratio, cfg.seed).stage(STAGE, &set.name)?;
            for (row, det) in rows.iter_mut().zip(&detectors) {
                let value = evaluate_detector(&det.bundle, &mixed).stage(STAGE, &det.name)?.value;
                log::info!("evaluate: {} AUC {value:.4} on {} / {}", det.name, seg.name, set.name);
                row.per_target.push((seg.name.clone(), value));
            }
        }
        let path = layout.auc_table(&set.name);
        fs::write(&path, auc_table_tsv(&rows)).stage(STAGE, path.display())?;
        auc.push(AucTable { attack: set.name.clone(), rows });
    }

    let plan = match cfg.defense.plan {
        PlanKind::Cross => GridPlan::CrossProduct,
        PlanKind::Standard => GridPlan::Standard,
    };
    let inputs = GridInputs { clean_val: &val, clean_test: &test, attack_sets: &attack_sets, t_fp: cfg.defense.t_fp, seed: cfg.seed };
    let grid = run_combination_grid(&mut detectors, &reformers, &segmenters, &inputs, &plan).stage(STAGE, "combination grid")?;
    for (path, text) in [(layout.grid_table(), grid.to_tsv()), (layout.plot_data(), grid.plot_csv()), (layout.grid_rows(), rows_json(&grid.rows))] {
        fs::write(&path, text).stage(STAGE, path.display())?;
    }
    log::info!("evaluate: {} grid rows written to {}", grid.rows.len(), layout.grid_table().display());
    Ok(EvaluationReport { auc, grid })
}

/// JSON array of grid rows; NaN values become `null`.
fn rows_json(rows: &[GridRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize") + "\n"
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub prepare: PrepareReport,
    pub trained: Vec<TrainedModel>,
    pub attacks: Vec<AttackSummary>,
    pub evaluation: EvaluationReport,
}

/// `prepare`, `train`, `attack` and `evaluate` in sequence.
pub fn cmd_all(cfg: &ExperimentConfig) -> CliResult<RunReport> {
    let prepare = cmd_prepare(cfg)?;
    let trained = cmd_train(cfg, TrainWhich::All)?;
    let attacks = cmd_attack(cfg)?;
    let evaluation = cmd_evaluate(cfg)?;
    Ok(RunReport { prepare, trained, attacks, evaluation })
}
