//! Pipeline stages, their registry, and the manifest-checked runner.
//!
//! Each stage writes into `<out>/<stage>/` and finishes with a
//! `manifest.json` recording its config hash, the master seed, and sha256
//! digests of everything it read and wrote. A stage's config hash covers
//! its own parameters and the hashes of its dependencies, so any upstream
//! config change marks downstream artifacts stale.

mod analysis;
mod data;
mod genre;
mod report;
mod tags;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tagprof_core::registry::{Named, Registry};
use tagprof_core::rng;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

/// Order used by `all`.
pub const PIPELINE: [&str; 13] = [
    "synth",
    "ingest",
    "tfidf",
    "tagsim",
    "tagcluster",
    "consolidate",
    "correlate",
    "lasso",
    "forest",
    "genres",
    "profiles",
    "disposition",
    "report",
];

pub trait Stage: Named + Send + Sync {
    fn deps(&self, cfg: &PipelineConfig) -> Vec<&'static str>;

    /// The config slice this stage reads; part of its hash.
    fn params(&self, cfg: &PipelineConfig) -> Value;

    /// Files outside the output tree that the stage reads, keyed by role.
    fn external_inputs(&self, _cfg: &PipelineConfig) -> Vec<(String, PathBuf)> {
        Vec::new()
    }

    /// Write artifacts into `ctx.dir` and return their file names.
    fn run(&self, ctx: &StageContext) -> Result<Vec<String>>;
}

pub struct StageContext<'a> {
    pub cfg: &'a PipelineConfig,
    pub dir: PathBuf,
    root: PathBuf,
    name: &'static str,
}

impl StageContext<'_> {
    /// Path of an upstream artifact.
    pub fn input(&self, stage: &str, file: &str) -> PathBuf {
        self.root.join(stage).join(file)
    }

    pub fn output(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// Seed for sub-stream `index` of this stage.
    pub fn seed(&self, index: u64) -> u64 {
        rng::derive_seed(self.cfg.seed, self.name, index)
    }
}

pub fn stages() -> Registry<dyn Stage> {
    let mut r: Registry<dyn Stage> = Registry::new();
    r.register(Box::new(data::Synth));
    r.register(Box::new(data::Ingest));
    r.register(Box::new(data::Tfidf));
    r.register(Box::new(tags::TagSim));
    r.register(Box::new(tags::TagCluster));
    r.register(Box::new(tags::Consolidate));
    r.register(Box::new(analysis::Correlate));
    r.register(Box::new(analysis::Lasso));
    r.register(Box::new(analysis::Forest));
    r.register(Box::new(analysis::Disposition));
    r.register(Box::new(genre::Genres));
    r.register(Box::new(genre::Profiles));
    r.register(Box::new(report::Report));
    r
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Option<Manifest>> {
        match fs::read(path) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(CliError::io(path, e)),
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Skipped,
}

pub struct Runner {
    registry: Registry<dyn Stage>,
    cfg: PipelineConfig,
}

impl Runner {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Runner { registry: stages(), cfg })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    fn stage(&self, name: &str) -> Result<&dyn Stage> {
        self.registry.get(name).ok_or_else(|| CliError::UnknownStage(name.to_string()))
    }

    /// Stages `all` runs for this config.
    pub fn plan(&self) -> Vec<&'static str> {
        PIPELINE
            .into_iter()
            .filter(|s| *s != "synth" || self.cfg.inputs.is_none())
            .collect()
    }

    /// Hash of a stage's parameters chained with its dependencies' hashes.
    pub fn config_hash(&self, name: &str) -> Result<String> {
        let stage = self.stage(name)?;
        let deps = stage
            .deps(&self.cfg)
            .into_iter()
            .map(|d| Ok((d, self.config_hash(d)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let doc = json!({
            "stage": name,
            "version": MANIFEST_VERSION,
            "seed": self.cfg.seed,
            "params": stage.params(&self.cfg),
            "deps": deps,
        });
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&doc)?)))
    }

    fn stage_dir(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    /// Digests of every upstream artifact, checking each dependency is
    /// present, built from the current config, and unmodified.
    fn input_digests(&self, name: &str, stage: &dyn Stage) -> Result<BTreeMap<String, String>> {
        let mut inputs = BTreeMap::new();
        for dep in stage.deps(&self.cfg) {
            let dir = self.stage_dir(dep);
            let Some(m) = Manifest::read(&dir.join(MANIFEST))? else {
                return Err(CliError::MissingDependency {
                    stage: name.to_string(),
                    missing: dep.to_string(),
                });
            };
            if m.config_hash != self.config_hash(dep)? {
                return Err(CliError::StaleUpstream {
                    stage: name.to_string(),
                    upstream: dep.to_string(),
                    reason: "built with a different configuration".into(),
                });
            }
            for (file, digest) in &m.outputs {
                let path = dir.join(file);
                if !path.is_file() || sha256_file(&path)? != *digest {
                    return Err(CliError::StaleUpstream {
                        stage: name.to_string(),
                        upstream: dep.to_string(),
                        reason: format!("artifact `{file}` is missing or was modified"),
                    });
                }
                inputs.insert(format!("{dep}/{file}"), digest.clone());
            }
        }
        for (role, path) in stage.external_inputs(&self.cfg) {
            inputs.insert(format!("input:{role}"), sha256_file(&path)?);
        }
        Ok(inputs)
    }

    fn up_to_date(&self, dir: &Path, hash: &str, inputs: &BTreeMap<String, String>) -> Result<bool> {
        let Some(m) = Manifest::read(&dir.join(MANIFEST))? else {
            return Ok(false);
        };
        if m.version != MANIFEST_VERSION || m.config_hash != hash || m.inputs != *inputs {
            return Ok(false);
        }
        for (file, digest) in &m.outputs {
            let path = dir.join(file);
            if !path.is_file() || sha256_file(&path)? != *digest {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Run one stage, or skip it when its manifest shows identical config,
    /// inputs and outputs.
    pub fn run_stage(&self, name: &str) -> Result<Outcome> {
        let stage = self.stage(name)?;
        let inputs = self.input_digests(name, stage)?;
        let hash = self.config_hash(name)?;
        let dir = self.stage_dir(name);
        if self.up_to_date(&dir, &hash, &inputs)? {
            log::info!("{name}: up to date");
            return Ok(Outcome::Skipped);
        }
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        log::info!("{name}: running");
        let ctx = StageContext {
            cfg: &self.cfg,
            dir: dir.clone(),
            root: self.cfg.out.clone(),
            name: stage.name(),
        };
        let files = stage.run(&ctx)?;
        let outputs = files
            .iter()
            .map(|f| Ok((f.clone(), sha256_file(&dir.join(f))?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            stage: name.to_string(),
            config_hash: hash,
            seed: self.cfg.seed,
            inputs,
            outputs,
        };
        let path = dir.join(MANIFEST);
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(Outcome::Ran)
    }

    /// Run a stage name from the command line; `all` runs the whole plan.
    pub fn run(&self, name: &str) -> Result<Vec<(&'static str, Outcome)>> {
        if name == "all" {
            return self.plan().into_iter().map(|s| Ok((s, self.run_stage(s)?))).collect();
        }
        let stage = self.stage(name)?;
        Ok(vec![(stage.name(), self.run_stage(name)?)])
    }
}

/// Serialize `value` as pretty JSON with a trailing newline.
pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}
