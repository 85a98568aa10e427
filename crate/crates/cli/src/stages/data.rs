use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tagprof_core::corpus::{self, CorpusPaths, TagCorpus};
use tagprof_core::matrix::{count_matrix, tfidf, SparseMatrix};
use tagprof_core::registry::Named;
use tagprof_core::synth::{self, SynthSpec};

use super::{read_json, write_json, Stage, StageContext};
use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

pub const APPLICATIONS: &str = "applications.csv";
pub const PAGES: &str = "pages.csv";
pub const USERS: &str = "users.jsonl";

/// Generate a synthetic corpus in the raw input formats.
pub struct Synth;

/// Planted structure of a synthetic corpus.
#[derive(Debug, Serialize, Deserialize)]
pub struct Truth {
    pub book_genres: BTreeMap<String, usize>,
    pub tag_groups: BTreeMap<String, usize>,
    pub page_targets: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Named for Synth {
    fn name(&self) -> &'static str {
        "synth"
    }
}

impl Synth {
    fn spec(cfg: &PipelineConfig) -> Result<SynthSpec> {
        let mut spec = cfg
            .synth
            .clone()
            .ok_or_else(|| CliError::Config("the synth stage needs a `synth` section".into()))?;
        spec.seed = cfg.seed;
        Ok(spec)
    }
}

impl Stage for Synth {
    fn deps(&self, _cfg: &PipelineConfig) -> Vec<&'static str> {
        Vec::new()
    }

    fn params(&self, cfg: &PipelineConfig) -> Value {
        json!({ "synth": cfg.synth })
    }

    fn run(&self, ctx: &StageContext) -> Result<Vec<String>> {
        let out = synth::generate_with_truth(&Self::spec(ctx.cfg)?)?;
        let c = &out.corpus;
        corpus::write_corpus(
            c,
            &CorpusPaths {
                applications: ctx.output(APPLICATIONS),
                pages: ctx.output(PAGES),
                users: ctx.output(USERS),
            },
        )?;
        let truth = Truth {
            book_genres: c.books.iter().cloned().zip(out.book_genres.iter().copied()).collect(),
            tag_groups: c.tags.iter().cloned().zip(out.tag_groups.iter().copied()).collect(),
            page_targets: out
                .page_targets
                .iter()
                .map(|(page, t)| (page.clone(), t.iter().map(|(f, v)| (f.name().to_string(), *v)).collect()))
                .collect(),
        };
        write_json(&ctx.output("truth.json"), &truth)?;
        Ok(vec![APPLICATIONS.into(), PAGES.into(), USERS.into(), "truth.json".into()])
    }
}

/// Load and validate the raw inputs, filter tags, and aggregate page traits.
pub struct Ingest;

impl Named for Ingest {
    fn name(&self) -> &'static str {
        "ingest"
    }
}

impl Stage for Ingest {
    fn deps(&self, cfg: &PipelineConfig) -> Vec<&'static str> {
        if cfg.inputs.is_some() {
            Vec::new()
        } else {
            vec!["synth"]
        }
    }

    fn params(&self, cfg: &PipelineConfig) -> Value {
        json!({ "scale": cfg.scale, "filter": cfg.filter })
    }

    fn external_inputs(&self, cfg: &PipelineConfig) -> Vec<(String, PathBuf)> {
        match &cfg.inputs {
            Some(i) => vec![
                ("applications".into(), i.applications.clone()),
                ("pages".into(), i.pages.clone()),
                ("users".into(), i.users.clone()),
            ],
            None => Vec::new(),
        }
    }

    fn run(&self, ctx: &StageContext) -> Result<Vec<String>> {
        let paths = match &ctx.cfg.inputs {
            Some(i) => CorpusPaths {
                applications: i.applications.clone(),
                pages: i.pages.clone(),
                users: i.users.clone(),
            },
            None => CorpusPaths {
                applications: ctx.input("synth", APPLICATIONS),
                pages: ctx.input("synth", PAGES),
                users: ctx.input("synth", USERS),
            },
        };
        let (raw, mut log) = corpus::load_corpus(&paths, ctx.cfg.scale)?;
        let filtered = corpus::filter_tags(&raw, &ctx.cfg.filter);
        let traits = corpus::aggregate_page_traits(&filtered, &ctx.cfg.filter);
        log.push(format!(
            "books {} tags {} -> {} applications {} -> {} pages {} scored pages {} users {}",
            raw.books.len(),
            raw.tags.len(),
            filtered.tags.len(),
            raw.applications.len(),
            filtered.applications.len(),
            filtered.page_books.len(),
            traits.len(),
            filtered.users.len(),
        ));
        for line in &log {
            log::info!("ingest: {line}");
        }
        write_json(&ctx.output("corpus.json"), &filtered)?;
        corpus::write_page_traits(&ctx.output("page_traits.csv"), &traits)?;
        let mut text = log.join("\n");
        text.push('\n');
        std::fs::write(ctx.output("ingest.log"), text).map_err(|e| CliError::io(&ctx.output("ingest.log"), e))?;
        Ok(vec!["corpus.json".into(), "page_traits.csv".into(), "ingest.log".into()])
    }
}

pub fn read_corpus(ctx: &StageContext) -> Result<TagCorpus> {
    read_json(&ctx.input("ingest", "corpus.json"))
}

/// Book × tag count and tf-idf matrices.
pub struct Tfidf;

impl Named for Tfidf {
    fn name(&self) -> &'static str {
        "tfidf"
    }
}

impl Stage for Tfidf {
    fn deps(&self, _cfg: &PipelineConfig) -> Vec<&'static str> {
        vec!["ingest"]
    }

    fn params(&self, _cfg: &PipelineConfig) -> Value {
        Value::Null
    }

    fn run(&self, ctx: &StageContext) -> Result<Vec<String>> {
        let corpus = read_corpus(ctx)?;
        let counts = count_matrix(&corpus);
        if counts.n_cols() == 0 || counts.n_rows() == 0 {
            return Err(CliError::Config("no tags survive filtering; relax the filter policy".into()));
        }
        counts.write_triplets(&ctx.output("counts.csv"))?;
        tfidf(&counts).write_triplets(&ctx.output("tfidf.csv"))?;
        Ok(vec!["counts.csv".into(), "tfidf.csv".into()])
    }
}

pub fn read_tfidf(ctx: &StageContext) -> Result<SparseMatrix> {
    Ok(SparseMatrix::read_triplets(&ctx.input("tfidf", "tfidf.csv"))?)
}
