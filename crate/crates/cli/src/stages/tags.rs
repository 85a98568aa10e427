use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tagprof_core::cluster::{
    apply_overrides, eps_cut_rules, extract_clusters, optics, read_assignment, read_overrides, similarity_to_distance,
    write_assignment, ClusterResult, DistanceMatrix, OpticsParams,
};
use tagprof_core::lexsim::{default_lexical_rank, fuse_similarity, lexical_similarity_matrix, LemmaRules};
use tagprof_core::lowrank::{cosine_matrix, read_dense, truncated_svd, write_dense};
use tagprof_core::matrix::{consolidate_pages, consolidate_tag_clusters, normalize_rows, SparseMatrix};
use tagprof_core::registry::Named;

use super::data::{read_corpus, read_tfidf};
use super::{write_json, Stage, StageContext};
use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::svg;

/// Fused co-occurrence and lexical tag similarity.
pub struct TagSim;

impl Named for TagSim {
    fn name(&self) -> &'static str {
        "tagsim"
    }
}

impl Stage for TagSim {
    fn deps(&self, _cfg: &PipelineConfig) -> Vec<&'static str> {
        vec!["tfidf"]
    }

    fn params(&self, cfg: &PipelineConfig) -> Value {
        json!({ "rank": cfg.tfidf.rank, "lexical": cfg.lexical })
    }

    fn external_inputs(&self, cfg: &PipelineConfig) -> Vec<(String, std::path::PathBuf)> {
        cfg.lexical.rules.iter().map(|p| ("lemma_rules".to_string(), p.clone())).collect()
    }

    fn run(&self, ctx: &StageContext) -> Result<Vec<String>> {
        let w = read_tfidf(ctx)?;
        let rank = ctx.cfg.tfidf.rank.min(w.n_rows()).min(w.n_cols());
        if rank < ctx.cfg.tfidf.rank {
            log::warn!("rank {} clamped to {rank} for a {}x{} matrix", ctx.cfg.tfidf.rank, w.n_rows(), w.n_cols());
        }
        let factors = truncated_svd(&w, rank, ctx.seed(0))?;
        factors.write(&ctx.dir, w.row_labels(), w.col_labels())?;
        let co = cosine_matrix(&factors.column_vectors());

        let tags = w.col_labels().to_vec();
        let rules = match &ctx.cfg.lexical.rules {
            Some(p) => LemmaRules::load(p)?,
            None => LemmaRules::default(),
        };
        let lex_rank = ctx.cfg.lexical.rank.unwrap_or_else(|| default_lexical_rank(tags.len()));
        let lex = lexical_similarity_matrix(&tags, &rules, lex_rank, ctx.seed(1))?;
        let weight = ctx.cfg.lexical.weight;
        let fused = nalgebra::DMatrix::from_fn(tags.len(), tags.len(), |i, j| {
            fuse_similarity(co[(i, j)], lex.matrix()[(i, j)], weight)
        });
        write_dense(&ctx.output("similarity.csv"), &fused, &tags)?;
        Ok(["u.csv", "s.csv", "v.csv", "similarity.csv"].map(String::from).to_vec())
    }
}

/// OPTICS over tag distances, cut into clusters.
pub struct TagCluster;

#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub eps_rule: String,
    pub eps_cut: f64,
    pub tags: usize,
    pub clusters: Vec<ClusterInfo>,
    pub noise: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterInfo {
    pub label: String,
    pub members: Vec<String>,
}

impl Named for TagCluster {
    fn name(&self) -> &'static str {
        "tagcluster"
    }
}

impl Stage for TagCluster {
    fn deps(&self, _cfg: &PipelineConfig) -> Vec<&'static str> {
        vec!["tagsim", "tfidf"]
    }

    fn params(&self, cfg: &PipelineConfig) -> Value {
        json!({ "optics": cfg.optics })
    }

    fn external_inputs(&self, cfg: &PipelineConfig) -> Vec<(String, std::path::PathBuf)> {
        cfg.optics.overrides.iter().map(|p| ("cluster_overrides".to_string(), p.clone())).collect()
    }

    fn run(&self, ctx: &StageContext) -> Result<Vec<String>> {
        let (tags, sim) = read_dense(&ctx.input("tagsim", "similarity.csv"))?;
        let w = read_tfidf(ctx)?;
        if w.col_labels() != tags.as_slice() {
            return Err(CliError::StaleUpstream {
                stage: "tagcluster".into(),
                upstream: "tagsim".into(),
                reason: "similarity labels do not match the tf-idf columns".into(),
            });
        }
        let d = DistanceMatrix::from_fn(tags.len(), |i, j| similarity_to_distance(sim[(i, j)]).max(0.0));
        let cfg = &ctx.cfg.optics;
        let params = OpticsParams {
            min_pts: cfg.min_pts,
            max_eps: cfg.max_eps.unwrap_or(f64::INFINITY),
        };
        let ord = optics(&d, &params);
        let rules = eps_cut_rules();
        let rule = rules.get(&cfg.eps_rule).ok_or_else(|| {
            CliError::Config(format!("unknown eps rule `{}`; known: {}", cfg.eps_rule, rules.names().join(", ")))
        })?;
        let cut = rule.choose(&ord, cfg.eps_cut)?;
        let clusters = extract_clusters(&ord, cut);
        let labels = representative_labels(&clusters, &w);
        let (clusters, labels) = match &cfg.overrides {
            Some(p) => apply_overrides(&clusters, &labels, &tags, &read_overrides(p)?),
            None => (clusters, labels),
        };
        log::info!("tagcluster: {} clusters, {} noise tags at eps {cut}", clusters.k, clusters.noise().len());

        ord.write(&ctx.output("reachability.csv"), &tags)?;
        svg::write_reachability(&ctx.output("reachability.svg"), &ord, cut)?;
        write_assignment(&ctx.output("tag_clusters.csv"), &clusters, &tags, &labels)?;
        let summary = ClusterSummary {
            eps_rule: rule.name().to_string(),
            eps_cut: cut,
            tags: tags.len(),
            clusters: clusters
                .members()
                .iter()
                .zip(&labels)
                .map(|(m, l)| ClusterInfo {
                    label: l.clone(),
                    members: m.iter().map(|&i| tags[i].clone()).collect(),
                })
                .collect(),
            noise: clusters.noise().iter().map(|&i| tags[i].clone()).collect(),
        };
        write_json(&ctx.output("clusters.json"), &summary)?;
        Ok(["reachability.csv", "reachability.svg", "tag_clusters.csv", "clusters.json"]
            .map(String::from)
            .to_vec())
    }
}

/// Name each cluster after its member tag with the largest total tf-idf
/// weight, ties to the smaller tag.
fn representative_labels(clusters: &ClusterResult, w: &SparseMatrix) -> Vec<String> {
    let mut weight = vec![0.0; w.n_cols()];
    for (_, j, v) in w.triplets() {
        weight[j] += v;
    }
    let tags = w.col_labels();
    clusters
        .members()
        .iter()
        .map(|m| {
            let best = m
                .iter()
                .copied()
                .max_by(|&a, &b| weight[a].total_cmp(&weight[b]).then_with(|| tags[b].cmp(&tags[a])))
                .expect("clusters are non-empty");
            tags[best].clone()
        })
        .collect()
}

/// Page × tag-cluster feature matrix.
pub struct Consolidate;

impl Named for Consolidate {
    fn name(&self) -> &'static str {
        "consolidate"
    }
}

impl Stage for Consolidate {
    fn deps(&self, _cfg: &PipelineConfig) -> Vec<&'static str> {
        vec!["ingest", "tfidf", "tagcluster"]
    }

    fn params(&self, _cfg: &PipelineConfig) -> Value {
        Value::Null
    }

    fn run(&self, ctx: &StageContext) -> Result<Vec<String>> {
        let w = read_tfidf(ctx)?;
        let (items, clusters, labels) = read_assignment(&ctx.input("tagcluster", "tag_clusters.csv"))?;
        if items != w.col_labels() {
            return Err(CliError::StaleUpstream {
                stage: "consolidate".into(),
                upstream: "tagcluster".into(),
                reason: "cluster assignment does not cover the tf-idf columns".into(),
            });
        }
        if clusters.k == 0 {
            return Err(CliError::Config("tag clustering found no clusters; adjust the optics settings".into()));
        }
        let books = consolidate_tag_clusters(&w, &clusters, &labels)?;
        let (books, zero) = normalize_rows(&books);
        if !zero.is_empty() {
            log::warn!("consolidate: {} books have no clustered tags", zero.len());
        }
        books.write_triplets(&ctx.output("book_features.csv"))?;
        let corpus = read_corpus(ctx)?;
        let (pages, dropped) = consolidate_pages(&books, &corpus.page_books);
        if !dropped.is_empty() {
            log::warn!("consolidate: {} pages dropped", dropped.len());
        }
        pages.write_triplets(&ctx.output("page_features.csv"))?;
        Ok(vec!["book_features.csv".into(), "page_features.csv".into()])
    }
}

pub fn read_page_features(ctx: &StageContext) -> Result<SparseMatrix> {
    Ok(SparseMatrix::read_triplets(&ctx.input("consolidate", "page_features.csv"))?)
}
