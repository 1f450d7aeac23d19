use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use crate::cli::output::{self, RunManifest, MANIFEST};
use crate::cli::svg::{line_chart, Series};
use crate::cli::train::{RunSummary, CONDITIONING, METRICS, SUMMARY};
use crate::cli::Common;
use crate::error::{Error, Result};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `train`.
    pub run_dir: PathBuf,
}

pub const LOSS_SVG: &str = "loss.svg";
pub const KAPPA_SVG: &str = "kappa.svg";

/// Per probe step: the across-layer mean and each layer's concatenated κ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaPoint {
    pub step: usize,
    pub mean_concat_kappa: f64,
    pub per_layer: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub run_dir: PathBuf,
    pub summary: RunSummary,
    pub kappa_series: Vec<KappaPoint>,
    pub charts: Vec<PathBuf>,
}

fn parse_f64(s: &str, file: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        what: file.into(),
        message: format!("not a number: {s:?}"),
    })
}

fn column(header: &[String], name: &str, file: &str) -> Result<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
        what: file.into(),
        message: format!("missing column {name}"),
    })
}

pub fn read_losses(dir: &Path) -> Result<Vec<(f64, f64)>> {
    let (header, rows) = output::read_csv(&dir.join(METRICS))?;
    let (s, l) = (column(&header, "step", METRICS)?, column(&header, "loss", METRICS)?);
    rows.iter()
        .map(|r| Ok((parse_f64(&r[s], METRICS)?, parse_f64(&r[l], METRICS)?)))
        .collect()
}

/// Collapses the per-head rows of `conditioning.csv` to one point per step.
pub fn read_kappa_series(dir: &Path) -> Result<Vec<KappaPoint>> {
    let (header, rows) = output::read_csv(&dir.join(CONDITIONING))?;
    let step = column(&header, "step", CONDITIONING)?;
    let layer = column(&header, "layer", CONDITIONING)?;
    let concat = column(&header, "concat_kappa", CONDITIONING)?;
    let mean = column(&header, "mean_concat_kappa_across_layers", CONDITIONING)?;
    let mut by_step: BTreeMap<usize, (f64, BTreeMap<usize, f64>)> = BTreeMap::new();
    for r in &rows {
        let s = parse_f64(&r[step], CONDITIONING)? as usize;
        let l = parse_f64(&r[layer], CONDITIONING)? as usize;
        let entry = by_step.entry(s).or_insert((parse_f64(&r[mean], CONDITIONING)?, BTreeMap::new()));
        entry.1.insert(l, parse_f64(&r[concat], CONDITIONING)?);
    }
    Ok(by_step
        .into_iter()
        .map(|(step, (mean, layers))| KappaPoint {
            step,
            mean_concat_kappa: mean,
            per_layer: layers.into_values().collect(),
        })
        .collect())
}

pub fn build(dir: &Path) -> Result<Report> {
    for name in [MANIFEST, METRICS, CONDITIONING, SUMMARY] {
        if !dir.join(name).is_file() {
            return Err(Error::validation(format!(
                "run directory {} is missing {name}",
                dir.display()
            )));
        }
    }
    let summary: RunSummary = output::parse_json(&output::read_to_string(&dir.join(SUMMARY))?, &dir.join(SUMMARY))?;
    let _: RunManifest = output::parse_json(&output::read_to_string(&dir.join(MANIFEST))?, &dir.join(MANIFEST))?;
    Ok(Report {
        run_dir: dir.to_path_buf(),
        summary,
        kappa_series: read_kappa_series(dir)?,
        charts: Vec::new(),
    })
}

pub fn render_text(r: &Report) -> String {
    let s = &r.summary;
    let mut out = String::new();
    let kv = [
        ("run", r.run_dir.display().to_string()),
        (
            "model",
            format!(
                "depth {} heads {} head_dim {} embed {} mlp_ratio {}",
                s.model.depth, s.model.num_heads, s.model.head_dim, s.model.embed_dim, s.model.mlp_ratio
            ),
        ),
        ("param count", s.param_count.to_string()),
        ("steps", s.steps.to_string()),
        ("final train loss", format!("{:.4}", s.final_train_loss)),
        ("final eval loss", format!("{:.4}", s.final_eval_loss)),
        ("final accuracy", format!("{:.4}", s.final_eval_accuracy)),
        (
            "final mean kappa",
            s.final_mean_kappa.map_or("n/a (all layers rank deficient)".into(), |k| format!("{k:.4}")),
        ),
    ];
    for (k, v) in kv {
        out += &format!("{k:<18}{v}\n");
    }
    if !r.kappa_series.is_empty() {
        out.push('\n');
        let depth = r.kappa_series.iter().map(|p| p.per_layer.len()).max().unwrap_or(0);
        let mut header = vec!["step".to_string(), "mean_concat_kappa".to_string()];
        header.extend((0..depth).map(|l| format!("layer{l}")));
        let rows: Vec<Vec<String>> = r
            .kappa_series
            .iter()
            .map(|p| {
                let mut row = vec![p.step.to_string(), format!("{:.4}", p.mean_concat_kappa)];
                row.extend(p.per_layer.iter().map(|k| format!("{k:.4}")));
                row
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out += &output::aligned_table(&header, &rows);
    }
    out
}

pub fn write_charts(r: &Report, out: &Path) -> Result<Vec<PathBuf>> {
    output::create_dir(out)?;
    let losses = read_losses(&r.run_dir)?;
    let loss = line_chart(
        "training loss",
        "step",
        "loss",
        &[Series {
            label: "batch loss".into(),
            points: losses,
        }],
        false,
    );
    let mut series = vec![Series {
        label: "mean across layers".into(),
        points: r.kappa_series.iter().map(|p| (p.step as f64, p.mean_concat_kappa)).collect(),
    }];
    let depth = r.kappa_series.iter().map(|p| p.per_layer.len()).max().unwrap_or(0);
    for l in 0..depth {
        series.push(Series {
            label: format!("layer {l}"),
            points: r
                .kappa_series
                .iter()
                .filter_map(|p| p.per_layer.get(l).map(|&k| (p.step as f64, k)))
                .collect(),
        });
    }
    let kappa = line_chart("condition number of concatenated heads", "step", "kappa (log scale)", &series, true);
    let paths = vec![out.join(LOSS_SVG), out.join(KAPPA_SVG)];
    output::write_atomic(&paths[0], loss.as_bytes())?;
    output::write_atomic(&paths[1], kappa.as_bytes())?;
    Ok(paths)
}

pub fn run(args: &ReportArgs, common: &Common) -> Result<()> {
    let mut report = build(&args.run_dir)?;
    if let Some(out) = &common.out {
        if out.canonicalize().ok() == args.run_dir.canonicalize().ok() {
            return Err(Error::validation("--out must differ from the run directory; report never writes into it"));
        }
        report.charts = write_charts(&report, out)?;
    }
    if common.json {
        print!("{}", String::from_utf8_lossy(&output::to_json_bytes(&report)?));
    } else {
        print!("{}", render_text(&report));
        for c in &report.charts {
            println!("wrote {}", c.display());
        }
    }
    Ok(())
}
