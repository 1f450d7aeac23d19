use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_attncond"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn attncond")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn tiny_train_config() -> Value {
    json!({
        "model": {
            "depth": 2, "num_heads": 2, "head_dim": 4, "embed_dim": 8, "mlp_ratio": 2.0,
            "vocab_size": 4, "seq_len": 4, "num_classes": 4
        },
        "task": {
            "kind": "seq_sum_mod", "vocab_size": 4, "seq_len": 4, "modulus": 4,
            "train_size": 4096, "eval_size": 64, "seed": 3
        },
        "train": {
            "steps": 12, "batch_size": 8, "learning_rate": 0.001, "weight_decay": 0.05,
            "warmup_steps": 4, "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8, "seed": 0,
            "probe_every": 5, "probe_batch_size": 4
        }
    })
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p
}

fn names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn theory_prints_a_decreasing_csv_deterministically() {
    let args = ["theory", "--N", "32", "--d", "16", "--heads", "4,8,16", "--trials", "50", "--seed", "1"];
    let a = run(&args);
    assert!(a.status.success());
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "h,D,trials,mean_kappa,std_kappa,min,max,asymptotic_kappa,rank_deficient");
    assert_eq!(lines.len(), 4);
    let means: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(means.windows(2).all(|w| w[1] < w[0]));
    assert!(text.ends_with('\n'));
    assert_eq!(run(&args).stdout, a.stdout);
}

#[test]
fn theory_rejects_bad_head_lists() {
    assert_eq!(run(&["theory", "--heads", ""]).status.code(), Some(2));
    assert_eq!(run(&["theory", "--heads", "8,4"]).status.code(), Some(2));
    assert_eq!(run(&["theory", "--heads", "4,x"]).status.code(), Some(2));
}

#[test]
fn theory_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let o = run(&["theory", "--N", "8", "--d", "4", "--heads", "1,4,8", "--trials", "5", "--out", out.to_str().unwrap(), "--json"]);
    assert!(o.status.success());
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["stats"].as_array().unwrap().len(), 3);
    assert_eq!(names(&out), vec!["kappa_stats.csv", "manifest.json", "summary.json"]);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "theory");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn train_writes_exactly_the_run_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "c.json", &tiny_train_config());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&["train", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(names(&a), vec!["conditioning.csv", "manifest.json", "metrics.csv", "summary.json"]);
    for f in ["summary.json", "metrics.csv", "conditioning.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("step,loss,lr"));
    assert_eq!(metrics.lines().count(), 13);
    let cond = fs::read_to_string(a.join("conditioning.csv")).unwrap();
    // Probes at 0, 5, 10, 12; two layers of two heads each.
    assert_eq!(cond.lines().count(), 1 + 4 * 2 * 2);

    // The manifest's config echo reproduces the run.
    let manifest: Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let echo = write_json(dir.path(), "echo.json", &manifest["config"]);
    let c = dir.path().join("c");
    assert!(run(&["train", echo.to_str().unwrap(), "--out", c.to_str().unwrap()]).status.success());
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(c.join("summary.json")).unwrap());
}

#[test]
fn train_grid_writes_one_directory_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_train_config();
    cfg["train"]["steps"] = json!(3);
    cfg["train"]["warmup_steps"] = json!(1);
    cfg["grid"] = json!({ "depths": [1, 2], "head_counts": [1, 2, 4], "seeds": [0, 1] });
    let path = write_json(dir.path(), "g.json", &cfg);
    let out = dir.path().join("grid");
    let o = run(&["train", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let entries = names(&out);
    let subdirs: Vec<&String> = entries.iter().filter(|n| out.join(n).is_dir()).collect();
    assert_eq!(subdirs.len(), 6);
    assert!(entries.contains(&"grid_summary.csv".to_string()));
    let summary = fs::read_to_string(out.join("grid_summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("depth,heads,params,mean_acc,std_acc,final_mean_kappa"));
    assert_eq!(summary.lines().count(), 7);
    assert_eq!(names(&out.join("depth2_heads4/seed1")).len(), 4);
}

#[test]
fn train_failure_classes_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_json(dir.path(), "c.json", &tiny_train_config());
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let o = run(&["train", good.to_str().unwrap(), "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));

    let mut diverge = tiny_train_config();
    diverge["train"]["learning_rate"] = json!(1e300);
    diverge["train"]["warmup_steps"] = json!(0);
    let p = write_json(dir.path(), "d.json", &diverge);
    let o = run(&["train", p.to_str().unwrap(), "--out", dir.path().join("d").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let diag: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(diag["exit_code"], 4);
    assert!(diag["kind"].is_string());

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"model\": 3}").unwrap();
    let o = run(&["train", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn plan_breakdown_and_tradeoff_tables() {
    let vit = configs().join("vit_base.json");
    let o = run(&["plan", vit.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let total: f64 = text.lines().last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((total / 86.6e6 - 1.0).abs() < 0.01);

    let dir = tempfile::tempdir().unwrap();
    let mut spec: Value = serde_json::from_str(&fs::read_to_string(&vit).unwrap()).unwrap();
    spec["depth"] = json!(0);
    let p = write_json(dir.path(), "d0.json", &spec);
    let o = run(&["plan", p.to_str().unwrap(), "--format", "csv"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(!text.lines().any(|l| l.starts_with("qkv") || l.starts_with("mlp")));

    let o = run(&["plan", vit.to_str().unwrap(), "--depths", "6,8", "--heads", "12,14,16", "--format", "csv"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 1 + 6);

    spec["patch_size"] = json!(15);
    let p = write_json(dir.path(), "bad.json", &spec);
    assert_eq!(run(&["plan", p.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn report_summarizes_and_charts_without_touching_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "c.json", &tiny_train_config());
    let run_dir = dir.path().join("run");
    assert!(run(&["train", cfg.to_str().unwrap(), "--out", run_dir.to_str().unwrap()]).status.success());
    let before: Vec<(String, Vec<u8>)> = names(&run_dir).into_iter().map(|n| (n.clone(), fs::read(run_dir.join(&n)).unwrap())).collect();

    let charts = dir.path().join("charts");
    let o = run(&["report", run_dir.to_str().unwrap(), "--out", charts.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let summary: Value = serde_json::from_str(&fs::read_to_string(run_dir.join("summary.json")).unwrap()).unwrap();
    assert!(text.contains("final accuracy"));
    assert!(text.contains(&summary["param_count"].to_string()));
    assert!(text.contains("final mean kappa"));
    let after: Vec<(String, Vec<u8>)> = names(&run_dir).into_iter().map(|n| (n.clone(), fs::read(run_dir.join(&n)).unwrap())).collect();
    assert_eq!(before, after);

    // Parse the κ chart back and compare with the CSV column.
    let svg = fs::read_to_string(charts.join("kappa.svg")).unwrap();
    let series = svg.split("<g class=\"series\"").nth(1).unwrap();
    let ys: Vec<f64> = series
        .split("data-y=\"")
        .skip(1)
        .map(|s| s[..s.find('"').unwrap()].parse().unwrap())
        .collect();
    let mut csv = csv::Reader::from_path(run_dir.join("conditioning.csv")).unwrap();
    let mut want: Vec<(usize, f64)> = csv
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[5].parse().unwrap())
        })
        .collect();
    want.dedup_by_key(|p| p.0);
    assert_eq!(ys, want.iter().map(|p| p.1).collect::<Vec<_>>());

    fs::remove_file(run_dir.join("conditioning.csv")).unwrap();
    let o = run(&["report", run_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("conditioning.csv"));
}
