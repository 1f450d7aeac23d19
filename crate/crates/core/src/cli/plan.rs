use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::cli::output::{self, RunManifest};
use crate::cli::Common;
use crate::error::{Error, Result};
use crate::planner::{count_params, tradeoff_table, ArchSpec, ParamBreakdown, TradeoffRow, WidthMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Width {
    /// Head dimension fixed; embedding grows as heads × head_dim.
    ScaleEmbed,
    /// Embedding fixed; head dimension shrinks as embed_dim / heads.
    FixedEmbed,
    /// Embedding and head dimension fixed; attention width decoupled.
    Decoupled,
}

impl From<Width> for WidthMode {
    fn from(w: Width) -> Self {
        match w {
            Width::ScaleEmbed => WidthMode::ScaleEmbed,
            Width::FixedEmbed => WidthMode::FixedEmbed,
            Width::Decoupled => WidthMode::DecoupledAttention,
        }
    }
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// ArchSpec JSON.
    pub spec: PathBuf,
    /// Trade-off grid depths (requires --heads).
    #[arg(long, value_delimiter = ',', num_args = 1, requires = "heads")]
    pub depths: Option<Vec<usize>>,
    /// Trade-off grid head counts (requires --depths).
    #[arg(long, value_delimiter = ',', num_args = 1, requires = "depths")]
    pub heads: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "scale-embed")]
    pub width: Width,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

pub const BREAKDOWN_HEADER: [&str; 3] = ["part", "layer", "params"];
pub const TRADEOFF_HEADER: [&str; 7] = [
    "depth",
    "heads",
    "embed_dim",
    "head_dim",
    "mlp_hidden",
    "total_params",
    "delta_vs_base_percent",
];

/// Global parts, then `qkv`/`proj`/`mlp`/`norms` rows for every layer, then `total`.
pub fn breakdown_rows(b: &ParamBreakdown) -> Vec<Vec<String>> {
    let row = |part: &str, layer: String, n: u64| vec![part.to_string(), layer, n.to_string()];
    let mut rows = vec![
        row("patch_or_token_embed", String::new(), b.patch_or_token_embed),
        row("position_embed", String::new(), b.position_embed),
        row("cls", String::new(), b.cls),
    ];
    for l in 0..b.depth {
        let p = &b.per_layer;
        rows.push(row("qkv", l.to_string(), p.qkv));
        rows.push(row("proj", l.to_string(), p.proj));
        rows.push(row("mlp", l.to_string(), p.mlp));
        rows.push(row("norms", l.to_string(), p.norms));
    }
    rows.push(row("final_norm", String::new(), b.final_norm));
    rows.push(row("head", String::new(), b.head));
    rows.push(row("total", String::new(), b.total));
    rows
}

pub fn tradeoff_rows(rows: &[TradeoffRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.depth.to_string(),
                r.heads.to_string(),
                r.embed_dim.to_string(),
                r.head_dim.to_string(),
                r.mlp_hidden.to_string(),
                r.total_params.to_string(),
                format!("{:.2}", r.delta_vs_base_percent),
            ]
        })
        .collect()
}

#[derive(Serialize)]
#[serde(untagged)]
enum PlanJson {
    Breakdown(ParamBreakdown),
    Tradeoff(Vec<TradeoffRow>),
}

pub fn run(args: &PlanArgs, common: &Common) -> Result<()> {
    let spec: ArchSpec = output::parse_json(&output::read_to_string(&args.spec)?, &args.spec)?;
    let manifest = RunManifest::start(
        "plan",
        serde_json::json!({ "spec": spec, "depths": args.depths, "heads": args.heads, "width": format!("{:?}", args.width) }),
        common.seed.map(|s| BTreeMap::from([("seed".to_string(), s)])).unwrap_or_default(),
    );
    let (header, rows, json): (&[&str], _, _) = match (&args.depths, &args.heads) {
        (Some(depths), Some(heads)) => {
            if depths.is_empty() || heads.is_empty() {
                return Err(Error::validation("trade-off grid needs at least one depth and head count"));
            }
            let table = tradeoff_table(&spec, depths, heads, args.width.into())?;
            (&TRADEOFF_HEADER, tradeoff_rows(&table), PlanJson::Tradeoff(table))
        }
        _ => {
            let b = count_params(&spec)?;
            (&BREAKDOWN_HEADER, breakdown_rows(&b), PlanJson::Breakdown(b))
        }
    };
    let rendered = match args.format {
        Format::Csv => output::csv_bytes(header, &rows)?,
        Format::Text => output::aligned_table(header, &rows).into_bytes(),
    };
    if let Some(dir) = &common.out {
        output::create_dir(dir)?;
        let name = match args.format {
            Format::Csv => "plan.csv",
            Format::Text => "plan.txt",
        };
        output::write_atomic(&dir.join(name), &rendered)?;
        manifest.finish(dir, vec![name.into()])?;
    }
    if common.json {
        print!("{}", String::from_utf8_lossy(&output::to_json_bytes(&json)?));
    } else if common.out.is_none() {
        print!("{}", String::from_utf8_lossy(&rendered));
    }
    Ok(())
}
