use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{AugmentConfig, SynthConfig};
use crate::diffusion::TrainConfig;
use crate::error::{Error, Result};
use crate::hardness::KMeansConfig;
use crate::vrrmodel::{BaselineConfig, FinetuneConfig, LossKind};

/// Environment variables that may replace `[paths]` entries.
pub const PATH_ENV: [(&str, &str); 6] = [
    ("TAILFORGE_OUT_DIR", "out_dir"),
    ("TAILFORGE_TAXONOMY", "taxonomy"),
    ("TAILFORGE_TRAIN", "train"),
    ("TAILFORGE_TEST", "test"),
    ("TAILFORGE_VISUAL", "visual"),
    ("TAILFORGE_TEXT", "text"),
];

/// Input and output locations. Unset inputs default to the files written
/// by `synth-bench` inside `out_dir`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub out_dir: PathBuf,
    pub taxonomy: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub visual: Option<PathBuf>,
    pub text: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            taxonomy: None,
            train: None,
            test: None,
            visual: None,
            text: None,
        }
    }
}

mod budget {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(n) => s.serialize_u64(*n as u64),
            None => s.serialize_str("all"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(Some(n)),
            Raw::Word(w) if w == "all" => Ok(None),
            Raw::Word(w) => Err(D::Error::custom(format!("expected a count or \"all\", got {w:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub lch_threshold: f64,
    /// Generated-sample budget for few-origin variants; `"all"` keeps every one.
    #[serde(with = "budget")]
    pub budget_few: Option<usize>,
    #[serde(with = "budget")]
    pub budget_medium: Option<usize>,
    pub seed: u64,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let d = AugmentConfig::default();
        Self {
            lch_threshold: d.threshold,
            budget_few: d.budget_few,
            budget_medium: d.budget_medium,
            seed: d.seed,
        }
    }
}

impl AugmentSection {
    pub fn to_config(&self) -> AugmentConfig {
        AugmentConfig {
            threshold: self.lch_threshold,
            budget_few: self.budget_few,
            budget_medium: self.budget_medium,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodeMode {
    /// Encode missing triplets with the synthetic benchmark's text encoder.
    Synthetic,
    /// The text store must already cover every triplet.
    Precomputed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeSection {
    pub mode: EncodeMode,
}

impl Default for EncodeSection {
    fn default() -> Self {
        Self {
            mode: EncodeMode::Synthetic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    pub timesteps: usize,
    pub hidden: usize,
    pub depth: usize,
    pub init_seed: u64,
    pub sample_seed: u64,
    pub train: TrainConfig,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        Self {
            timesteps: 50,
            hidden: 128,
            depth: 2,
            init_seed: 0,
            sample_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSection {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub loss: LossKind,
    /// Original training samples added per generated sample.
    pub mix_ratio: f64,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        let d = FinetuneConfig::default();
        Self {
            epochs: d.epochs,
            batch: d.batch,
            lr: d.lr,
            seed: d.seed,
            loss: d.loss,
            mix_ratio: 0.0,
        }
    }
}

impl FinetuneSection {
    pub fn to_config(&self) -> FinetuneConfig {
        FinetuneConfig {
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            seed: self.seed,
            loss: self.loss,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub loss: LossKind,
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let d = BaselineConfig::default();
        Self {
            loss: LossKind::Ce,
            hidden: d.hidden,
            epochs: d.epochs,
            batch: d.batch,
            lr: d.lr,
            seed: d.seed,
        }
    }
}

impl BaselineSection {
    pub fn to_config(&self) -> BaselineConfig {
        BaselineConfig {
            hidden: self.hidden,
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    pub so_seed: bool,
    pub hardness_condition: bool,
    pub curriculum: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Self {
            so_seed: true,
            hardness_condition: true,
            curriculum: false,
        }
    }
}

impl Flags {
    /// Hardness clusters are needed by the conditional or the curriculum.
    pub fn needs_hardness(&self) -> bool {
        self.hardness_condition || self.curriculum
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Further output directories whose evaluations join the report.
    pub runs: Vec<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub synth: SynthConfig,
    pub augment: AugmentSection,
    pub encode: EncodeSection,
    pub hardness: KMeansConfig,
    pub diffusion: DiffusionSection,
    pub baseline: BaselineSection,
    pub finetune: FinetuneSection,
    pub flags: Flags,
    pub report: ReportSection,
}

fn config_err(key: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        msg: msg.into(),
    }
}

/// Parses an override value as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(key, "malformed key"));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let next = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = next
            .as_table_mut()
            .ok_or_else(|| config_err(key, format!("`{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl PipelineConfig {
    /// Reads a TOML config, then applies path environment variables and
    /// `key=value` overrides (in that order). Relative paths resolve against
    /// the config file's directory.
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| config_err(path.display().to_string(), e.to_string()))?;
        let env: Vec<(String, String)> = PATH_ENV
            .iter()
            .filter_map(|(var, key)| std::env::var(var).ok().map(|v| (format!("paths.{key}"), v)))
            .collect();
        let mut cfg = Self::from_toml_str(&text, &env, overrides)?;
        cfg.resolve_relative(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Parses config text with `(dotted key, value)` path overrides followed
    /// by raw `key=value` overrides.
    pub fn from_toml_str(text: &str, path_overrides: &[(String, String)], overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| config_err("<file>", e.to_string()))?;
        for (key, value) in path_overrides {
            set_dotted(&mut table, key, toml::Value::String(value.clone()))?;
        }
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| config_err(o.as_str(), "override must look like key=value"))?;
            set_dotted(&mut table, key.trim(), parse_value(raw.trim()))?;
        }
        let cfg: Self = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let key = e.path().to_string();
            config_err(key, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate().map_err(|e| config_err("synth", e.to_string()))?;
        if !(self.augment.lch_threshold > 0.0) {
            return Err(config_err("augment.lch_threshold", "must be positive"));
        }
        let positive = [
            ("hardness.k", self.hardness.k),
            ("hardness.n_init", self.hardness.n_init),
            ("diffusion.timesteps", self.diffusion.timesteps),
            ("diffusion.hidden", self.diffusion.hidden),
            ("diffusion.train.batch", self.diffusion.train.batch),
            ("baseline.hidden", self.baseline.hidden),
            ("baseline.batch", self.baseline.batch),
            ("finetune.batch", self.finetune.batch),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(config_err(key, "must be positive"));
            }
        }
        if self.diffusion.hidden < 2 {
            return Err(config_err("diffusion.hidden", "must be at least 2"));
        }
        if !(self.finetune.mix_ratio >= 0.0) {
            return Err(config_err("finetune.mix_ratio", "must be non-negative"));
        }
        Ok(())
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        fix(&mut paths.out_dir);
        for p in [&mut paths.taxonomy, &mut paths.train, &mut paths.test, &mut paths.visual, &mut paths.text]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        for p in &mut self.report.runs {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}
