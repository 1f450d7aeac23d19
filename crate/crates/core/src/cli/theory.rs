use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use crate::cli::output::{self, fmt_f64, RunManifest};
use crate::cli::Common;
use crate::error::{Error, Result};
use crate::rmt::{head_concat_sweep, is_nonincreasing_beyond_square, KappaStats, SweepSpec};

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// SweepSpec JSON; individual flags override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Sequence length N.
    #[arg(long = "N")]
    pub seq_len: Option<usize>,
    /// Head dimension d.
    #[arg(long = "d")]
    pub head_dim: Option<usize>,
    /// Comma-separated, strictly ascending head counts.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub heads: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub rank_tol: Option<f64>,
}

pub const CSV_NAME: &str = "kappa_stats.csv";
pub const SUMMARY_NAME: &str = "summary.json";
pub const HEADER: [&str; 9] = [
    "h",
    "D",
    "trials",
    "mean_kappa",
    "std_kappa",
    "min",
    "max",
    "asymptotic_kappa",
    "rank_deficient",
];

#[derive(Debug, Serialize)]
pub struct TheorySummary {
    pub spec: SweepSpec,
    pub stats: Vec<KappaStats>,
    /// Mean κ non-increasing (1% slack) over the points with `D > N`.
    pub nonincreasing_beyond_square: bool,
    /// `|mean / asymptotic - 1|` at the largest head count, when defined.
    pub final_relative_gap: Option<f64>,
}

fn resolve_spec(args: &TheoryArgs, common: &Common) -> Result<SweepSpec> {
    let mut spec = match &args.spec {
        Some(path) => output::parse_json(&output::read_to_string(path)?, path)?,
        None => SweepSpec::new(32, 16, vec![4, 8, 16, 32, 64], 50, 1),
    };
    if let Some(n) = args.seq_len {
        spec.seq_len = n;
    }
    if let Some(d) = args.head_dim {
        spec.head_dim = d;
    }
    if let Some(h) = &args.heads {
        spec.head_counts = h.clone();
    }
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(tol) = args.rank_tol {
        spec.rank_tol = tol;
    }
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}

pub fn stats_csv(stats: &[KappaStats]) -> Result<Vec<u8>> {
    let rows: Vec<Vec<String>> = stats
        .iter()
        .map(|s| {
            vec![
                s.h.to_string(),
                s.embed_dim.to_string(),
                s.trials.to_string(),
                fmt_f64(s.mean_kappa),
                fmt_f64(s.std_kappa),
                fmt_f64(s.min_kappa),
                fmt_f64(s.max_kappa),
                s.asymptotic_kappa.map(fmt_f64).unwrap_or_default(),
                s.rank_deficient_count.to_string(),
            ]
        })
        .collect();
    output::csv_bytes(&HEADER, &rows)
}

pub fn run(args: &TheoryArgs, common: &Common) -> Result<()> {
    let spec = resolve_spec(args, common)?;
    let mut manifest = None;
    if common.out.is_some() {
        let config = serde_json::to_value(&spec).map_err(|e| Error::validation(e.to_string()))?;
        manifest = Some(RunManifest::start("theory", config, BTreeMap::from([("sweep".into(), spec.seed)])));
    }
    let stats = head_concat_sweep(&spec)?;
    let last = stats.last().expect("validated non-empty");
    let summary = TheorySummary {
        nonincreasing_beyond_square: is_nonincreasing_beyond_square(&stats, spec.seq_len, 0.01),
        final_relative_gap: last.asymptotic_kappa.map(|a| (last.mean_kappa / a - 1.0).abs()),
        spec,
        stats,
    };
    let csv = stats_csv(&summary.stats)?;

    if let (Some(dir), Some(manifest)) = (&common.out, manifest) {
        output::create_dir(dir)?;
        output::write_atomic(&dir.join(CSV_NAME), &csv)?;
        output::write_atomic(&dir.join(SUMMARY_NAME), &output::to_json_bytes(&summary)?)?;
        manifest.finish(dir, vec![CSV_NAME.into(), SUMMARY_NAME.into()])?;
    }
    if common.json {
        print!("{}", String::from_utf8_lossy(&output::to_json_bytes(&summary)?));
    } else if common.out.is_none() {
        print!("{}", String::from_utf8_lossy(&csv));
    }
    Ok(())
}
