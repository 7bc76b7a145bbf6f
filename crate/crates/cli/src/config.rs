use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use boundfix::correct::DEFAULT_MIN_DUR;

/// Settings shared by `compare`, `train`, `correct` and `evaluate`.
///
/// Relative paths are resolved against the directory holding the config
/// file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub phoneset: PathBuf,
    /// Phone set of the hypothesis aligner, when it differs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyp_phoneset: Option<PathBuf>,
    /// `hyp<TAB>ref` symbol correspondences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol_map: Option<PathBuf>,
    /// Feature schema file; the built-in schema is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    pub reference_dir: PathBuf,
    pub hypothesis_dir: PathBuf,
    pub structure_dir: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "default_stop_size")]
    pub stop_size: usize,
    #[serde(default = "default_min_dur")]
    pub min_dur: f64,
    /// Fraction of utterances used for training.
    #[serde(default = "default_split")]
    pub split: f64,
    /// Seed of the train/test shuffle.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub min_iou: f64,
}

fn default_stop_size() -> usize {
    25
}

fn default_min_dur() -> f64 {
    DEFAULT_MIN_DUR
}

fn default_split() -> f64 {
    0.9
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub stop_size: Option<usize>,
    pub min_dur: Option<f64>,
    pub split: Option<f64>,
}

impl RunConfig {
    /// A config with default knobs and paths relative to `root`.
    pub fn for_layout(root: &Path) -> Self {
        Self {
            phoneset: root.join("phoneset.txt"),
            hyp_phoneset: None,
            symbol_map: None,
            schema: Some(root.join("schema.txt")),
            reference_dir: root.join("ref"),
            hypothesis_dir: root.join("hyp"),
            structure_dir: root.join("struct"),
            output_dir: root.join("out"),
            stop_size: default_stop_size(),
            min_dur: default_min_dur(),
            split: default_split(),
            seed: 0,
            min_iou: 0.0,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.phoneset);
        fix(&mut self.reference_dir);
        fix(&mut self.hypothesis_dir);
        fix(&mut self.structure_dir);
        fix(&mut self.output_dir);
        for p in [&mut self.hyp_phoneset, &mut self.symbol_map, &mut self.schema].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.stop_size {
            self.stop_size = v;
        }
        if let Some(v) = o.min_dur {
            self.min_dur = v;
        }
        if let Some(v) = o.split {
            self.split = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            bail!("split must lie strictly between 0 and 1, got {}", self.split);
        }
        if self.stop_size == 0 {
            bail!("stop_size must be at least 1");
        }
        if !(self.min_dur > 0.0 && self.min_dur.is_finite()) {
            bail!("min_dur must be positive, got {}", self.min_dur);
        }
        if !(0.0..1.0).contains(&self.min_iou) {
            bail!("min_iou must lie in [0, 1), got {}", self.min_iou);
        }
        Ok(())
    }

    /// `cor.S<stop_size>.tree` in the output directory.
    pub fn tree_path(&self) -> PathBuf {
        self.output_dir.join(format!("cor.S{}.tree", self.stop_size))
    }

    pub fn corrected_dir(&self) -> PathBuf {
        self.output_dir.join("corrected")
    }
}
