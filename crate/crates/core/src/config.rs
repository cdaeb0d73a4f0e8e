//! Pipeline configuration, read from a TOML file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Aggregation, InvalidTreePolicy, RegionFallback, RtTrim};
use crate::error::{Error, Result};
use crate::features::{Filters, Smoothing, CONTROL_PREDICTORS};
use crate::metrics::ArcPolicy;
use crate::participants::ParticipantConfig;
use crate::regression::{CvConfig, ModelSpec};

/// Input files. Relative paths resolve against the config file's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub treebank: PathBuf,
    pub regions: PathBuf,
    pub reading_times: PathBuf,
    pub freq_table: PathBuf,
    pub lm_surprisal: PathBuf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LanguageMode {
    #[default]
    HeadFinal,
    HeadMedial,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Language {
    pub mode: LanguageMode,
}

/// Per-field overrides of the language mode's arc policy.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArcOverrides {
    pub exclude_right_adjuncts: Option<bool>,
    pub adjunct_deprels: Option<BTreeSet<String>>,
    pub count_root_arc: Option<bool>,
    pub count_punct: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusOptions {
    pub invalid_trees: InvalidTreePolicy,
    /// Require `# sent_id` trailing numbers to match sentence positions.
    pub strict_sent_ids: bool,
    pub region_fallback: RegionFallback,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationOptions {
    pub mode: Aggregation,
    pub trim_min_ms: Option<f64>,
    pub trim_max_ms: Option<f64>,
}

impl AggregationOptions {
    pub fn trim(&self) -> RtTrim {
        RtTrim {
            min_ms: self.trim_min_ms,
            max_ms: self.trim_max_ms,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stats {
    pub k: usize,
    pub repeats: usize,
    pub n_perm: usize,
    /// Required; there is no default seed.
    pub seed: Option<u64>,
    pub alpha: f64,
    pub min_rows: usize,
    pub group_by_document: bool,
}

impl Default for Stats {
    fn default() -> Self {
        Stats {
            k: 10,
            repeats: 50,
            n_perm: 10_000,
            seed: None,
            alpha: 0.05,
            min_rows: 1000,
            group_by_document: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Baseline predictors.
    pub base: Vec<String>,
    /// Extra predictors for a custom full model, evaluated alongside the
    /// standard ones.
    pub add: Vec<String>,
    pub standardize: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            base: CONTROL_PREDICTORS.iter().map(|s| s.to_string()).collect(),
            add: Vec::new(),
            standardize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default)]
    pub language: Language,
    #[serde(default)]
    pub arcs: ArcOverrides,
    #[serde(default)]
    pub corpus: CorpusOptions,
    #[serde(default)]
    pub filters: Filters,
    #[serde(default)]
    pub smoothing: Smoothing,
    #[serde(default)]
    pub aggregation: AggregationOptions,
    #[serde(default)]
    pub stats: Stats,
    #[serde(default)]
    pub eval: EvalOptions,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line overrides of config values.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Overrides {
    pub base: Option<Vec<String>>,
    pub add: Option<Vec<String>>,
    pub k: Option<usize>,
    pub repeats: Option<usize>,
    pub n_perm: Option<usize>,
    pub seed: Option<u64>,
}

impl PipelineConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingPath(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, dir).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(b) = &o.base {
            self.eval.base = b.clone();
        }
        if let Some(a) = &o.add {
            self.eval.add = a.clone();
        }
        if let Some(k) = o.k {
            self.stats.k = k;
        }
        if let Some(r) = o.repeats {
            self.stats.repeats = r;
        }
        if let Some(n) = o.n_perm {
            self.stats.n_perm = n;
        }
        if let Some(s) = o.seed {
            self.stats.seed = Some(s);
        }
    }

    /// Check value constraints. Path existence is checked per command.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        if self.stats.k < 2 {
            return Err(Error::Config(format!("stats.k must be >= 2, got {}", self.stats.k)));
        }
        if self.stats.repeats < 1 {
            return Err(Error::Config("stats.repeats must be >= 1".to_owned()));
        }
        if self.stats.n_perm < 1 {
            return Err(Error::Config("stats.n_perm must be >= 1".to_owned()));
        }
        if !(self.stats.alpha > 0.0 && self.stats.alpha < 1.0) {
            return Err(Error::Config("stats.alpha must lie in (0, 1)".to_owned()));
        }
        if self.smoothing.alpha.is_nan() || self.smoothing.alpha <= 0.0 {
            return Err(Error::Config("smoothing.alpha must be > 0".to_owned()));
        }
        if self.filters.exclude_particles && self.filters.particle_lemmas.is_empty() {
            return Err(Error::Config(
                "filters.particle_lemmas is empty but filters.exclude_particles is set".to_owned(),
            ));
        }
        self.arc_policy().validate()?;
        self.base_spec().validate()?;
        Ok(())
    }

    pub fn seed(&self) -> Result<u64> {
        self.stats
            .seed
            .ok_or_else(|| Error::Config("stats.seed is required".to_owned()))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Resolve an input path and fail, naming it, if it does not exist.
    pub fn existing(&self, path: &Path) -> Result<PathBuf> {
        let p = self.resolve(path);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::MissingPath(p))
        }
    }

    pub fn arc_policy(&self) -> ArcPolicy {
        let mut p = match self.language.mode {
            LanguageMode::HeadFinal => ArcPolicy::head_final(),
            LanguageMode::HeadMedial => ArcPolicy::head_medial(),
        };
        let a = &self.arcs;
        if let Some(v) = a.exclude_right_adjuncts {
            p.exclude_right_adjuncts = v;
        }
        if let Some(v) = &a.adjunct_deprels {
            p.adjunct_deprels = v.clone();
        }
        if let Some(v) = a.count_root_arc {
            p.count_root_arc = v;
        }
        if let Some(v) = a.count_punct {
            p.count_punct = v;
        }
        p
    }

    pub fn base_spec(&self) -> ModelSpec {
        ModelSpec::new(&self.eval.base).with_standardize(self.eval.standardize)
    }

    pub fn cv(&self) -> Result<CvConfig> {
        Ok(CvConfig {
            k: self.stats.k,
            repeats: self.stats.repeats,
            n_perm: self.stats.n_perm,
            seed: self.seed()?,
            group_by_document: self.stats.group_by_document,
        })
    }

    pub fn participants(&self) -> Result<ParticipantConfig> {
        Ok(ParticipantConfig {
            k: self.stats.k,
            alpha: self.stats.alpha,
            min_rows: self.stats.min_rows,
            n_perm: self.stats.n_perm,
            seed: self.seed()?,
        })
    }
}
