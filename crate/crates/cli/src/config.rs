//! Experiment configuration: one TOML file with dataset, models, attack and
//! defense sections.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use freqshield::attacks::AttackConfig;
use freqshield::data::SplitSpec;
use freqshield::frequency::RepresentationMode;
use freqshield::models::{ArchitectureSpec, Family, TrainConfig};
use freqshield::pipeline::detector_name;
use freqshield::synthetic::SyntheticConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base seed; every dataset, model and attack seed is derived from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    pub models: ModelsSection,
    #[serde(default)]
    pub attack: AttackSection,
    pub defense: DefenseSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("freqshield-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// Generator parameters; its `seed` is replaced by the experiment seed.
    pub synthetic: Option<SyntheticConfig>,
    /// Existing dataset manifest, as an alternative to `synthetic`.
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub split: SplitSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureEntry {
    pub name: String,
    pub family: Family,
    #[serde(default = "default_base_width")]
    pub base_width: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
}

fn default_base_width() -> usize {
    16
}

fn default_depth() -> usize {
    4
}

impl ArchitectureEntry {
    pub fn spec(&self, out_channels: usize) -> ArchitectureSpec {
        ArchitectureSpec::new(self.family, out_channels).with_size(self.base_width, self.depth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsSection {
    pub architectures: Vec<ArchitectureEntry>,
    /// Architecture names trained as target segmenters.
    pub segmenters: Vec<String>,
    #[serde(default)]
    pub segmenter_training: TrainConfig,
    #[serde(default)]
    pub reconstructor_training: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    pub configs: Vec<AttackConfig>,
    /// Fraction of adversarial samples in the detector evaluation set.
    pub mixed_ratio: f64,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self { configs: vec![AttackConfig::default()], mixed_ratio: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    #[default]
    Cross,
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorEntry {
    pub architecture: String,
    #[serde(default = "default_detector_mode")]
    pub mode: RepresentationMode,
}

fn default_detector_mode() -> RepresentationMode {
    RepresentationMode::ShiftFrequency
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseSection {
    #[serde(default = "default_t_fp")]
    pub t_fp: f64,
    #[serde(default = "default_norm")]
    pub norm_p: f64,
    pub detectors: Vec<DetectorEntry>,
    /// Architecture names trained as spatial reformers.
    pub reformers: Vec<String>,
    #[serde(default)]
    pub plan: PlanKind,
}

fn default_t_fp() -> f64 {
    0.05
}

fn default_norm() -> f64 {
    2.0
}

/// A detector with its resolved architecture and display name.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedDetector {
    pub name: String,
    pub spec: ArchitectureSpec,
    pub mode: RepresentationMode,
}

/// A segmenter or reformer with its resolved architecture and display name.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedModel {
    pub name: String,
    pub spec: ArchitectureSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.dataset.synthetic.as_ref().map(|s| s.num_classes)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        match (&self.dataset.synthetic, &self.dataset.manifest) {
            (Some(_), Some(_)) => return bad("dataset needs exactly one of `synthetic` and `manifest`, got both".into()),
            (None, None) => return bad("dataset needs one of `synthetic` or `manifest`".into()),
            _ => {}
        }
        self.dataset.split.validate().map_err(config_err)?;
        if !(self.defense.t_fp > 0.0 && self.defense.t_fp < 1.0) {
            return bad(format!("t_fp must lie in (0, 1), got {}", self.defense.t_fp));
        }
        if !(self.defense.norm_p >= 1.0) {
            return bad(format!("norm_p must be at least 1, got {}", self.defense.norm_p));
        }
        if !(self.attack.mixed_ratio > 0.0 && self.attack.mixed_ratio < 1.0) {
            return bad(format!("mixed_ratio must lie in (0, 1), got {}", self.attack.mixed_ratio));
        }
        if self.attack.configs.is_empty() {
            return bad("attack section lists no attacks".into());
        }
        for a in &self.attack.configs {
            a.validate().map_err(config_err)?;
        }
        let mut names = BTreeSet::new();
        for a in &self.models.architectures {
            if !names.insert(a.name.as_str()) {
                return bad(format!("architecture '{}' is defined twice", a.name));
            }
            a.spec(1).validate().map_err(config_err)?;
        }
        self.models.segmenter_training.validate().map_err(config_err)?;
        self.models.reconstructor_training.validate().map_err(config_err)?;
        if self.models.segmenters.is_empty() {
            return bad("models section lists no segmenters".into());
        }
        let segs = self.segmenters()?;
        if segs.iter().any(|s| s.spec.family.is_autoencoder()) {
            return bad("autoencoders cannot be segmenters".into());
        }
        unique("segmenter", segs.iter().map(|s| &s.name))?;
        unique("detector", self.detectors()?.iter().map(|d| &d.name))?;
        unique("reformer", self.reformers()?.iter().map(|r| &r.name))?;
        if self.defense.detectors.is_empty() || self.defense.reformers.is_empty() {
            return bad("defense section needs at least one detector and one reformer".into());
        }
        let attack_names: Vec<String> = self.attack.configs.iter().map(|a| a.name()).collect();
        unique("attack", attack_names.iter())?;
        Ok(())
    }

    fn architecture(&self, name: &str, role: &str) -> CliResult<&ArchitectureEntry> {
        self.models
            .architectures
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| CliError::Config(format!("{role} refers to undefined architecture '{name}'")))
    }

    /// Segmenters named by family label, with `num_classes` outputs.
    pub fn segmenters(&self) -> CliResult<Vec<ResolvedModel>> {
        let c = self.num_classes().unwrap_or(1);
        self.models
            .segmenters
            .iter()
            .map(|n| {
                let a = self.architecture(n, "segmenter")?;
                Ok(ResolvedModel { name: a.family.label().to_string(), spec: a.spec(c) })
            })
            .collect()
    }

    pub fn detectors(&self) -> CliResult<Vec<ResolvedDetector>> {
        self.defense
            .detectors
            .iter()
            .map(|d| {
                let spec = self.architecture(&d.architecture, "detector")?.spec(1);
                Ok(ResolvedDetector { name: detector_name(&spec, d.mode), spec, mode: d.mode })
            })
            .collect()
    }

    pub fn reformers(&self) -> CliResult<Vec<ResolvedModel>> {
        self.defense
            .reformers
            .iter()
            .map(|n| {
                let a = self.architecture(n, "reformer")?;
                Ok(ResolvedModel { name: a.family.label().to_string(), spec: a.spec(1) })
            })
            .collect()
    }

    /// Attack configs with the experiment seed applied.
    pub fn attacks(&self) -> Vec<AttackConfig> {
        self.attack.configs.iter().map(|a| AttackConfig { seed: self.seed, ..a.clone() }).collect()
    }
}

fn config_err(e: freqshield::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn unique<'a>(role: &str, names: impl Iterator<Item = &'a String>) -> CliResult<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(CliError::Config(format!("two {role}s resolve to the name '{n}'")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SMALL: &str = r#"
seed = 3
output_dir = "out"

[dataset.synthetic]
count = 40
height = 16
width = 16
num_classes = 3

[models]
segmenters = ["unet"]

[[models.architectures]]
name = "unet"
family = "UNET"
base_width = 4
depth = 2

[[models.architectures]]
name = "ae1"
family = "AUTOENCODER_I"
base_width = 4
depth = 2

[defense]
detectors = [{ architecture = "unet" }, { architecture = "ae1", mode = "SPATIAL" }]
reformers = ["unet"]
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        assert_eq!(cfg.defense.t_fp, 0.05);
        assert_eq!(cfg.attack.configs, vec![AttackConfig::default()]);
        let dets: Vec<String> = cfg.detectors().unwrap().into_iter().map(|d| d.name).collect();
        assert_eq!(dets, ["UNet_shiftFrequency", "Autoencoder I"]);
        assert_eq!(cfg.segmenters().unwrap()[0].spec.out_channels, 3);
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_references_and_ranges() {
        let cases = [
            SMALL.replace("reformers = [\"unet\"]", "reformers = [\"densenet\"]"),
            SMALL.replace("[defense]", "[defense]\nt_fp = 1.5"),
            SMALL.replace("segmenters = [\"unet\"]", "segmenters = [\"ae1\"]"),
            SMALL.replace("reformers = [\"unet\"]", "reformers = [\"unet\", \"unet\"]"),
            SMALL.replace("seed = 3", "seed = 3\nbogus = 1"),
            SMALL.replace("[dataset.synthetic]", "[dataset]\nmanifest = \"x.txt\"\n[dataset.synthetic]"),
        ];
        for text in cases {
            assert!(matches!(ExperimentConfig::from_toml(&text), Err(CliError::Config(_))), "{text}");
        }
    }
}
