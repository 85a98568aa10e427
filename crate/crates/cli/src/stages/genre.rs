use serde_json::{json, Value};
use tagprof_core::cluster::{book_dissimilarity, read_assignment, select_k, write_assignment};
use tagprof_core::corpus::{read_page_traits, Factor};
use tagprof_core::registry::Named;
use tagprof_core::stats::{genre_profiles, project_profiles_2d};

use super::tags::read_page_features;
use super::{write_json, Stage, StageContext};
use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::svg;

/// PAM over page feature profiles, with `k` chosen by silhouette.
pub struct Genres;

impl Named for Genres {
    fn name(&self) -> &'static str {
        "genres"
    }
}

impl Stage for Genres {
    fn deps(&self, _cfg: &PipelineConfig) -> Vec<&'static str> {
        vec!["consolidate"]
    }

    fn params(&self, cfg: &PipelineConfig) -> Value {
        json!({ "genres": cfg.genres })
    }

    fn run(&self, ctx: &StageContext) -> Result<Vec<String>> {
        let pages = read_page_features(ctx)?;
        let d = book_dissimilarity(&pages)?;
        let sel = select_k(&d, ctx.cfg.genres.k_min, ctx.cfg.genres.k_max)?;
        log::info!("genres: k = {} (mean silhouette {:.3})", sel.k, sel.silhouette.mean);
        let labels: Vec<String> = (0..sel.clusters.k).map(|c| format!("genre{c}")).collect();
        write_assignment(&ctx.output("genres.csv"), &sel.clusters, pages.row_labels(), &labels)?;
        let mut w = csv::Writer::from_path(ctx.output("k_table.csv"))?;
        w.write_record(["k", "cost", "mean_silhouette", "median_silhouette", "selected"])?;
        for s in &sel.table {
            w.write_record([
                s.k.to_string(),
                s.cost.to_string(),
                s.mean_silhouette.to_string(),
                s.median_silhouette.to_string(),
                (s.k == sel.k).to_string(),
            ])?;
        }
        w.flush().map_err(|e| CliError::io(&ctx.output("k_table.csv"), e))?;
        Ok(vec!["genres.csv".into(), "k_table.csv".into()])
    }
}

/// Per-genre trait medians, normalized, with a 2-d projection.
pub struct Profiles;

impl Named for Profiles {
    fn name(&self) -> &'static str {
        "profiles"
    }
}

impl Stage for Profiles {
    fn deps(&self, _cfg: &PipelineConfig) -> Vec<&'static str> {
        vec!["genres", "ingest"]
    }

    fn params(&self, _cfg: &PipelineConfig) -> Value {
        Value::Null
    }

    fn run(&self, ctx: &StageContext) -> Result<Vec<String>> {
        let (items, genres, _) = read_assignment(&ctx.input("genres", "genres.csv"))?;
        let traits = read_page_traits(&ctx.input("ingest", "page_traits.csv"))?;
        let profiles = genre_profiles(&genres, &items, &traits)?;

        let mut w = csv::Writer::from_path(ctx.output("profiles.csv"))?;
        let mut header = vec!["genre".to_string(), "n_pages".to_string()];
        for f in Factor::ALL {
            header.push(format!("{f}_median"));
        }
        for f in Factor::ALL {
            header.push(format!("{f}_normalized"));
        }
        w.write_record(&header)?;
        for p in &profiles {
            let mut row = vec![p.genre.clone(), p.n_pages.to_string()];
            row.extend(p.medians.0.iter().map(f64::to_string));
            row.extend(p.normalized.0.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| CliError::io(&ctx.output("profiles.csv"), e))?;
        svg::write_profiles(&ctx.output("profiles.svg"), &profiles)?;
        let mut files = vec!["profiles.csv".to_string(), "profiles.svg".to_string()];

        if profiles.len() >= 3 {
            let proj = project_profiles_2d(&profiles)?;
            write_json(&ctx.output("projection.json"), &proj)?;
            svg::write_projection(&ctx.output("projection.svg"), &proj)?;
            files.extend(["projection.json".to_string(), "projection.svg".to_string()]);
        } else {
            log::warn!("profiles: {} genres, projection skipped", profiles.len());
        }
        Ok(files)
    }
}
