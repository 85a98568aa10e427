//! Pipeline configuration, read from a JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tagprof_core::corpus::{FilterPolicy, ScoreScale};
use tagprof_core::lexsim::DEFAULT_FUSION_WEIGHT;
use tagprof_core::synth::SynthSpec;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub applications: PathBuf,
    pub pages: PathBuf,
    pub users: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TfidfConfig {
    /// Rank of the co-occurrence factorization; clamped to the matrix shape.
    pub rank: usize,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        TfidfConfig { rank: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexicalConfig {
    /// Defaults to `min(50, vocabulary)`.
    pub rank: Option<usize>,
    /// Lemma rules file; the built-in table when absent.
    pub rules: Option<PathBuf>,
    /// Weight of co-occurrence similarity in the fused similarity.
    pub weight: f64,
}

impl Default for LexicalConfig {
    fn default() -> Self {
        LexicalConfig {
            rank: None,
            rules: None,
            weight: DEFAULT_FUSION_WEIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsConfig {
    pub min_pts: usize,
    /// Unbounded when absent.
    pub max_eps: Option<f64>,
    /// Name of the eps-cut rule (`knee` or `fixed`).
    pub eps_rule: String,
    pub eps_cut: Option<f64>,
    /// Optional `tag,cluster_label` corrections applied after extraction.
    pub overrides: Option<PathBuf>,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        OpticsConfig {
            min_pts: 5,
            max_eps: None,
            eps_rule: "knee".into(),
            eps_cut: None,
            overrides: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenreConfig {
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for GenreConfig {
    fn default() -> Self {
        GenreConfig { k_min: 4, k_max: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    pub folds: usize,
    pub grid_size: usize,
    pub grid_ratio: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            folds: 10,
            grid_size: 100,
            grid_ratio: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Defaults to a third of the features.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    /// Name of the importance method (`permutation` or `drop-column`).
    pub importance: String,
    /// Pick `mtry` by cross-validation instead.
    pub tune_mtry: bool,
    pub tune_folds: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 500,
            mtry: None,
            min_leaf: 5,
            importance: "permutation".into(),
            tune_mtry: false,
            tune_folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub top: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { top: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Raw input files; when absent, `ingest` reads the `synth` stage output.
    #[serde(default)]
    pub inputs: Option<InputPaths>,
    #[serde(default)]
    pub synth: Option<SynthSpec>,
    #[serde(default)]
    pub scale: ScoreScale,
    #[serde(default)]
    pub filter: FilterPolicy,
    #[serde(default)]
    pub tfidf: TfidfConfig,
    #[serde(default)]
    pub lexical: LexicalConfig,
    #[serde(default)]
    pub optics: OpticsConfig,
    #[serde(default)]
    pub genres: GenreConfig,
    #[serde(default)]
    pub lasso: LassoConfig,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    /// Parse a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        if let Some(i) = &mut self.inputs {
            fix(&mut i.applications);
            fix(&mut i.pages);
            fix(&mut i.users);
        }
        if let Some(p) = &mut self.lexical.rules {
            fix(p);
        }
        if let Some(p) = &mut self.optics.overrides {
            fix(p);
        }
    }

    /// Check value ranges and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        let mut files: Vec<&Path> = Vec::new();
        if let Some(i) = &self.inputs {
            files.extend([i.applications.as_path(), i.pages.as_path(), i.users.as_path()]);
        } else if self.synth.is_none() {
            return Err(CliError::Config("either `inputs` or `synth` is required".into()));
        }
        files.extend(self.lexical.rules.as_deref());
        files.extend(self.optics.overrides.as_deref());
        if let Some(missing) = files.iter().find(|p| !p.is_file()) {
            return Err(CliError::Config(format!("file not found: {}", missing.display())));
        }
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        if !(0.0..=1.0).contains(&self.lexical.weight) {
            return bad("lexical.weight must lie in [0, 1]");
        }
        if self.tfidf.rank == 0 {
            return bad("tfidf.rank must be positive");
        }
        if self.optics.min_pts < 2 {
            return bad("optics.min_pts must be at least 2");
        }
        if self.genres.k_min == 0 || self.genres.k_min > self.genres.k_max {
            return bad("genres needs 1 <= k_min <= k_max");
        }
        if self.lasso.folds < 2 || self.lasso.grid_size == 0 || !(self.lasso.grid_ratio > 0.0 && self.lasso.grid_ratio < 1.0) {
            return bad("lasso needs folds >= 2, a nonempty grid and grid_ratio in (0, 1)");
        }
        if self.forest.n_trees == 0 || self.forest.min_leaf == 0 {
            return bad("forest needs at least one tree and min_leaf >= 1");
        }
        if self.report.top == 0 {
            return bad("report.top must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_required() {
        let err = serde_json::from_str::<PipelineConfig>(r#"{"synth": {}}"#).unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn defaults_fill_in() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"seed": 3, "synth": {"n_genres": 2}}"#).unwrap();
        assert_eq!(cfg.tfidf.rank, 100);
        assert_eq!(cfg.forest.n_trees, 500);
        assert_eq!(cfg.lasso.folds, 10);
        assert_eq!(cfg.synth.as_ref().unwrap().n_genres, 2);
        assert_eq!(cfg.synth.as_ref().unwrap().n_books, SynthSpec::default().n_books);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"seed": 3, "sedd": 4}"#).is_err());
    }

    #[test]
    fn missing_input_file() {
        let cfg: PipelineConfig = serde_json::from_str(
            r#"{"seed": 1, "inputs": {"applications": "/nope/a.csv", "pages": "/nope/p.csv", "users": "/nope/u.jsonl"}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(m)) if m.contains("/nope/a.csv")));
    }
}
