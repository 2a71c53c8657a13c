use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fewstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fewstab"))
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fewstab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    fewstab(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, text).unwrap();
        path
    }

    /// A small synthetic split; returns its path.
    fn synth(&self) -> PathBuf {
        let cfg = self.write(
            "synth.json",
            r#"{"num_classes": 8, "samples_per_class": 200, "embedding_dim": 16, "within_class_noise": 0.1, "seed": "3"}"#,
        );
        let out = self.path("split.jsonl");
        ok(&["synth", "--config", p(&cfg), "--out", p(&out)]);
        out
    }

    fn build(&self, split: &Path, name: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(name);
        let mut args = vec!["build", "--dataset", p(split), "--out", p(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }

    fn evaluate(&self, split: &Path, tasks: &Path, name: &str, extra: &[&str]) -> Value {
        let out = self.path(name);
        let mut args = vec!["evaluate", "--dataset", p(split), "--tasks", p(tasks), "--out", p(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        json(&out)
    }
}

#[test]
fn synth_is_deterministic_and_writes_planted_map() {
    let f = Fixture::new();
    let a = f.synth();
    let first = fs::read(&a).unwrap();
    let b = f.synth();
    assert_eq!(first, fs::read(&b).unwrap());
    let planted = json(&f.path("split.jsonl.planted.json"));
    assert_eq!(planted.as_object().unwrap().len(), 8);
    assert!(f.path("split.jsonl.manifest.json").exists());
}

#[test]
fn build_defaults_to_3000_tasks() {
    let f = Fixture::new();
    let split = f.synth();
    let tasks = json(&f.build(&split, "tasks.json", &[]));
    assert_eq!(tasks["tasks"].as_array().unwrap().len(), 3000);
    assert_eq!(tasks["config"]["queries"], 15);
    assert_eq!(tasks["config"]["num_tasks"], 3000);
    let manifest = json(&f.path("tasks.json.manifest.json"));
    assert_eq!(manifest["command"], "build");
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 1);
}

#[test]
fn same_seed_same_bytes_across_threads() {
    let f = Fixture::new();
    let split = f.synth();
    let a = f.build(&split, "a.json", &["--num-tasks", "200", "--seed", "11", "--threads", "1"]);
    let b = f.build(&split, "b.json", &["--num-tasks", "200", "--seed", "11", "--threads", "4"]);
    let c = f.build(&split, "c.json", &["--num-tasks", "200", "--seed", "12"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn too_many_ways_is_a_config_error() {
    let f = Fixture::new();
    let split = f.synth();
    let out = f.path("t.json");
    assert_eq!(code(&["build", "--dataset", p(&split), "--ways", "9", "--out", p(&out)]), 2);
    assert!(!out.exists());
}

#[test]
fn prototype_is_perfect_on_separated_embeddings() {
    let f = Fixture::new();
    let split = f.synth();
    let tasks = f.build(&split, "t.json", &["--num-tasks", "100"]);
    let report = f.evaluate(&split, &tasks, "r.json", &["--classifier", "prototype"]);
    assert_eq!(report["n_tasks"], 100);
    assert_eq!(report["acc_mean"], 1.0);
    assert_eq!(report["wacc_mean"], 1.0);
    assert_eq!(report["metric"], "wAcc-A");
}

#[test]
fn external_predictions_must_cover_every_query() {
    let f = Fixture::new();
    let split = f.synth();
    let tasks = f.build(&split, "t.json", &["--num-tasks", "5", "--mode", "random"]);
    let full = f.path("pred.jsonl");
    f.evaluate(&split, &tasks, "r.json", &["--classifier", "prototype", "--predictions-out", p(&full)]);

    let report = f.evaluate(
        &split,
        &tasks,
        "ext.json",
        &["--classifier", "external", "--predictions", p(&full), "--method", "copy"],
    );
    assert_eq!(report["method"], "copy");
    assert_eq!(report["metric"], "wAcc-R");
    assert_eq!(report["acc_mean"], 1.0);

    let text = fs::read_to_string(&full).unwrap();
    let partial = f.write("partial.jsonl", &text.lines().skip(1).collect::<Vec<_>>().join("\n"));
    let out = f.path("bad.json");
    let args = [
        "evaluate",
        "--dataset",
        p(&split),
        "--tasks",
        p(&tasks),
        "--classifier",
        "external",
        "--predictions",
        p(&partial),
        "--out",
        p(&out),
    ];
    assert_eq!(code(&args), 2);
}

#[test]
fn oracle_with_task_rules_fails_every_fallback_free_task() {
    let f = Fixture::new();
    let split = f.synth();
    let tasks = f.build(&split, "t.json", &["--num-tasks", "100"]);
    let report = f.evaluate(&split, &tasks, "r.json", &["--classifier", "oracle", "--fallback-free-only"]);
    assert!(report["n_tasks"].as_u64().unwrap() > 0);
    assert_eq!(report["wacc_mean"], 0.0);
}

#[test]
fn oracle_accepts_planted_rules() {
    let f = Fixture::new();
    let split = f.synth();
    let planted = f.path("split.jsonl.planted.json");
    let tasks = f.build(&split, "t.json", &["--num-tasks", "50", "--restrict", p(&planted)]);
    let report = f.evaluate(
        &split,
        &tasks,
        "r.json",
        &["--classifier", "oracle", "--rules", p(&planted), "--fallback-free-only"],
    );
    assert_eq!(report["wacc_mean"], 0.0);
}

fn report_json(method: &str, mode: &str, wacc: f64) -> String {
    let metric = if mode == "random" { "wAcc-R" } else { "wAcc-A" };
    format!(
        r#"{{"method": "{method}", "mode": "{mode}", "metric": "{metric}", "n_tasks": 10, "acc_mean": 0.9, "acc_ci95": 0.01, "wacc_mean": {wacc}, "wacc_ci95": 0.02, "tasks": []}}"#
    )
}

#[test]
fn report_tables() {
    let f = Fixture::new();
    let inputs = [
        f.write("a_r.json", &report_json("a", "random", 0.8)),
        f.write("a_f.json", &report_json("a", "fewstab", 0.6)),
        f.write("b_r.json", &report_json("b", "random", 0.7)),
        f.write("b_f.json", &report_json("b", "fewstab", 0.65)),
    ];
    let mut args = vec!["report", "--inputs"];
    args.extend(inputs.iter().map(|i| p(i)));
    let md = ok(&args);
    assert!(md.contains("80.00 ± 2.00"), "{md}");
    assert!(md.contains("20.00"), "{md}");
    assert!(md.contains("Spearman rank correlation (wAcc-A vs wAcc-R): -1.00"), "{md}");

    args.extend(["--format", "csv"]);
    let csv = ok(&args);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,mode,metric,n_tasks,acc_mean,acc_ci95,wacc_mean,wacc_ci95,gap"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "a");
    assert!((first[8].parse::<f64>().unwrap() - 0.2).abs() < 1e-12);

    let single = ok(&["report", "--inputs", p(&inputs[0])]);
    assert!(!single.contains("Spearman"));
}

#[test]
fn stats_on_a_tiny_split() {
    let f = Fixture::new();
    let split = f.write(
        "tiny.jsonl",
        concat!(
            r#"{"id": "1", "class": "a", "attributes": ["x", "y"]}"#,
            "\n",
            r#"{"id": "2", "class": "b", "attributes": ["y", "z"]}"#,
            "\n",
            r#"{"id": "3", "class": "a", "attributes": []}"#,
            "\n",
        ),
    );
    let text = ok(&["stats", "--dataset", p(&split)]);
    assert!(text.contains("unique attributes: 3"), "{text}");
    assert!(text.contains("avg attributes per class: 2.00"), "{text}");
    let s: Value = serde_json::from_str(&ok(&["stats", "--dataset", p(&split), "--json"])).unwrap();
    assert_eq!(s["unique_attribute_count"], 3);
}

#[test]
fn self_agreement_is_one() {
    let f = Fixture::new();
    let split = f.synth();
    let a: Value = serde_json::from_str(&ok(&["agreement", "--query", p(&split), "--ref", p(&split), "--json"])).unwrap();
    assert_eq!(a["value"], 1.0);
}

#[test]
fn ingest_annotates_captions() {
    let f = Fixture::new();
    let captions = f.write(
        "captions.jsonl",
        "{\"id\": \"i1\", \"caption\": \"A green vase on a wooden table\"}\n{\"id\": \"i2\", \"caption\": \"two vases\"}\n",
    );
    let labels = f.write("labels.jsonl", "{\"id\": \"i1\", \"class\": \"vase\"}\n{\"id\": \"i2\", \"class\": \"vase\"}\n");
    let lexicon = f.write("lexicon.tsv", "green\tADJ\nvase\tNOUN\nwooden\tADJ\ntable\tNOUN\n");
    let out = f.path("split.jsonl");
    let base = ["ingest", "--captions", p(&captions), "--labels", p(&labels), "--lexicon", p(&lexicon), "--out", p(&out)];
    ok(&base);
    let first: Value = serde_json::from_str(fs::read_to_string(&out).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["attributes"], serde_json::json!(["green", "table", "vase", "wooden"]));
    let second = fs::read_to_string(&out).unwrap().lines().nth(1).unwrap().to_string();
    assert!(second.contains("\"attributes\":[]"), "{second}");

    let mut plural = base.to_vec();
    plural.push("--strip-plural");
    ok(&plural);
    let second = fs::read_to_string(&out).unwrap().lines().nth(1).unwrap().to_string();
    assert!(second.contains("vase"), "{second}");
}

#[test]
fn ingest_rejects_unlabelled_and_empty_input() {
    let f = Fixture::new();
    let captions = f.write("captions.jsonl", "{\"id\": \"i1\", \"caption\": \"a vase\"}\n");
    let labels = f.write("labels.jsonl", "{\"id\": \"other\", \"class\": \"vase\"}\n");
    let lexicon = f.write("lexicon.tsv", "vase\tNOUN\n");
    let out = f.path("split.jsonl");
    let args = ["ingest", "--captions", p(&captions), "--labels", p(&labels), "--lexicon", p(&lexicon), "--out", p(&out)];
    assert_eq!(code(&args), 2);

    let empty = f.write("empty.jsonl", "");
    let args = ["ingest", "--captions", p(&empty), "--labels", p(&labels), "--lexicon", p(&lexicon), "--out", p(&out)];
    assert_eq!(code(&args), 2);
    assert!(!out.exists());
}
