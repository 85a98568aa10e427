use std::fmt::Write as _;

use serde_json::{json, Value};
use tagprof_core::corpus::Factor;
use tagprof_core::registry::Named;
use tagprof_core::stats::{read_correlations, top_correlations, CorrelationEntry};

use super::analysis::{ForestSummary, LassoSummary};
use super::{read_json, Stage, StageContext};
use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

pub const TABLE1_HEADER: [&str; 8] = [
    "trait",
    "rank",
    "neg_feature",
    "neg_r",
    "neg_stars",
    "pos_feature",
    "pos_r",
    "pos_stars",
];

/// Top correlated clusters per trait and a model fit summary.
pub struct Report;

impl Named for Report {
    fn name(&self) -> &'static str {
        "report"
    }
}

impl Stage for Report {
    fn deps(&self, _cfg: &PipelineConfig) -> Vec<&'static str> {
        vec!["correlate", "lasso", "forest"]
    }

    fn params(&self, cfg: &PipelineConfig) -> Value {
        json!({ "report": cfg.report })
    }

    fn run(&self, ctx: &StageContext) -> Result<Vec<String>> {
        let entries = read_correlations(&ctx.input("correlate", "correlations.csv"))?;
        let top = ctx.cfg.report.top;
        let mut w = csv::Writer::from_path(ctx.output("table1.csv"))?;
        w.write_record(TABLE1_HEADER)?;
        let mut text = String::new();
        for f in Factor::ALL {
            let (neg, pos) = top_correlations(&entries, f.name(), top);
            let (low, high) = f.poles();
            writeln!(text, "{f}").unwrap();
            writeln!(text, "  {:<36} {:<36}", low, high).unwrap();
            for rank in 0..neg.len().max(pos.len()) {
                let (nf, nr, ns) = cells(neg.get(rank).copied());
                let (pf, pr, ps) = cells(pos.get(rank).copied());
                w.write_record([f.name(), &(rank + 1).to_string(), &nf, &nr, &ns, &pf, &pr, &ps])?;
                writeln!(
                    text,
                    "  {:<36} {:<36}",
                    display(neg.get(rank).copied()),
                    display(pos.get(rank).copied())
                )
                .unwrap();
            }
            text.push('\n');
        }
        text.push_str("* p < 0.05, ** p < 0.01, *** p < 0.001\n");
        w.flush().map_err(|e| CliError::io(&ctx.output("table1.csv"), e))?;
        write_text(ctx, "table1.txt", &text)?;

        let lasso: Vec<LassoSummary> = read_json(&ctx.input("lasso", "lasso.json"))?;
        let forest: Vec<ForestSummary> = read_json(&ctx.input("forest", "forest.json"))?;
        let mut w = csv::Writer::from_path(ctx.output("r2.csv"))?;
        w.write_record(["trait", "n", "lasso_r2", "lasso_r2_cv", "forest_r2", "forest_oob_r2"])?;
        for f in Factor::ALL {
            let l = lasso.iter().find(|s| s.trait_name == f.name());
            let t = forest.iter().find(|s| s.trait_name == f.name());
            let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
            w.write_record([
                f.name().to_string(),
                l.map(|l| l.n).or(t.map(|t| t.n)).unwrap_or(0).to_string(),
                opt(l.map(|l| l.r2)),
                opt(l.and_then(|l| l.r2_cv)),
                opt(t.map(|t| t.r2)),
                opt(t.and_then(|t| t.oob_r2)),
            ])?;
        }
        w.flush().map_err(|e| CliError::io(&ctx.output("r2.csv"), e))?;
        Ok(["table1.csv", "table1.txt", "r2.csv"].map(String::from).to_vec())
    }
}

fn cells(e: Option<&CorrelationEntry>) -> (String, String, String) {
    match e {
        Some(e) => (e.feature.clone(), format!("{:.6}", e.r), e.stars().to_string()),
        None => Default::default(),
    }
}

fn display(e: Option<&CorrelationEntry>) -> String {
    match e {
        Some(e) => format!("{} ({:.2}{})", e.feature, e.r, e.stars()),
        None => String::new(),
    }
}

fn write_text(ctx: &StageContext, file: &str, text: &str) -> Result<()> {
    let path = ctx.output(file);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}
