//! Classifying episodes and scoring them.
//!
//! Per slot, M_c is the fraction of that slot's queries predicted correctly.
//! A task's accuracy is the mean of its M_c and its worst-class accuracy the
//! minimum. Suite figures are means over tasks with a normal-approximation
//! 95% interval.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Xoshiro256StarStar};
use crate::task::{seed_string, Mode, TaskSpec};

/// Per task index, query id → predicted class.
pub type PredictionSet = BTreeMap<usize, BTreeMap<String, String>>;

#[derive(Debug, Serialize, Deserialize)]
struct PredictionLine {
    task: usize,
    id: String,
    pred: String,
}

/// Reads predictions-jsonl. A (task, id) pair may appear once.
pub fn read_predictions<R: BufRead>(reader: R) -> Result<PredictionSet> {
    let mut out = PredictionSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        if out.entry(p.task).or_default().insert(p.id.clone(), p.pred).is_some() {
            return Err(Error::InvalidPrediction {
                task: p.task,
                id: p.id,
                reason: "predicted twice".into(),
            });
        }
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(predictions: &PredictionSet, mut writer: W) -> Result<()> {
    for (&task, preds) in predictions {
        for (id, pred) in preds {
            let line = PredictionLine {
                task,
                id: id.clone(),
                pred: pred.clone(),
            };
            serde_json::to_writer(&mut writer, &line)?;
            writer.write_all(b"\n").map_err(|e| Error::io("<predictions>", e))?;
        }
    }
    Ok(())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn embedding<'s>(split: &'s DatasetSplit, id: &str) -> Result<&'s [f64]> {
    split
        .get(id)
        .and_then(|r| r.embedding.as_deref())
        .ok_or_else(|| Error::MissingEmbedding(id.to_string()))
}

/// Nearest-prototype predictions for every query of `task`; a prototype is the
/// mean of a slot's support embeddings. Equidistant queries go to the lowest slot.
pub fn prototype_classify(task: &TaskSpec, split: &DatasetSplit) -> Result<BTreeMap<String, String>> {
    let mut prototypes: Vec<Vec<f64>> = Vec::with_capacity(task.slots.len());
    for slot in &task.slots {
        let mut sum: Vec<f64> = Vec::new();
        for id in &slot.support {
            let e = embedding(split, id)?;
            if sum.is_empty() {
                sum = vec![0.0; e.len()];
            }
            for (s, v) in sum.iter_mut().zip(e) {
                *s += v;
            }
        }
        let n = slot.support.len().max(1) as f64;
        prototypes.push(sum.into_iter().map(|s| s / n).collect());
    }

    let mut out = BTreeMap::new();
    for slot in &task.slots {
        for id in &slot.query {
            let e = embedding(split, id)?;
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, p) in prototypes.iter().enumerate() {
                let d = squared_distance(e, p);
                if d < best_d {
                    best = i;
                    best_d = d;
                }
            }
            out.insert(id.clone(), task.slots[best].class.clone());
        }
    }
    Ok(out)
}

/// What the oracle predicts when no rule applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum FallbackPolicy {
    FixedFirstSlot,
    /// A uniformly drawn slot, from a stream keyed by `seed` and the task index.
    SeededUniform {
        #[serde(with = "seed_string")]
        seed: u64,
    },
}

/// A classifier that looks only at attributes: the first rule whose attribute
/// the query carries, and whose class is in the task, decides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRules {
    rules: Vec<(String, String)>,
    fallback: FallbackPolicy,
}

impl OracleRules {
    /// `rules` are (attribute, class) pairs in priority order.
    pub fn new(rules: Vec<(String, String)>, fallback: FallbackPolicy) -> Result<Self> {
        let mut seen = HashSet::new();
        for (a, _) in &rules {
            if !seen.insert(a.as_str()) {
                return Err(Error::InvalidConfig(format!("attribute `{a}` has two rules")));
            }
        }
        Ok(Self { rules, fallback })
    }

    /// One rule per planted class → attribute entry, in ascending class order.
    pub fn from_planted(planted: &BTreeMap<String, String>, fallback: FallbackPolicy) -> Result<Self> {
        Self::new(
            planted.iter().map(|(c, a)| (a.clone(), c.clone())).collect(),
            fallback,
        )
    }

    /// The task's own slot assignments, in slot order.
    pub fn from_task(task: &TaskSpec, fallback: FallbackPolicy) -> Result<Self> {
        let rules = task
            .slots
            .iter()
            .map(|s| {
                s.attribute
                    .clone()
                    .map(|a| (a, s.class.clone()))
                    .ok_or_else(|| Error::InvalidConfig(format!("task {} has no attributes", task.index)))
            })
            .collect::<Result<_>>()?;
        Self::new(rules, fallback)
    }

    pub fn rules(&self) -> &[(String, String)] {
        &self.rules
    }

    pub fn fallback(&self) -> FallbackPolicy {
        self.fallback
    }
}

pub fn oracle_classify(task: &TaskSpec, rules: &OracleRules, split: &DatasetSplit) -> Result<BTreeMap<String, String>> {
    let classes: HashSet<&str> = task.slots.iter().map(|s| s.class.as_str()).collect();
    let active: Vec<&(String, String)> = rules.rules.iter().filter(|(_, c)| classes.contains(c.as_str())).collect();
    let mut rng = match rules.fallback {
        FallbackPolicy::SeededUniform { seed } => {
            Some(Xoshiro256StarStar::seed_from_u64(derive_seed(seed, task.index as u64)))
        }
        FallbackPolicy::FixedFirstSlot => None,
    };

    let mut out = BTreeMap::new();
    for slot in &task.slots {
        for id in &slot.query {
            let record = split
                .get(id)
                .ok_or_else(|| Error::InvalidRecord(format!("unknown sample `{id}`")))?;
            let hit = active.iter().find(|(a, _)| record.attributes.contains(a));
            let pred = match (hit, rng.as_mut()) {
                (Some((_, c)), _) => c.clone(),
                (None, Some(r)) => task.slots[r.below(task.slots.len())].class.clone(),
                (None, None) => task.slots[0].class.clone(),
            };
            out.insert(id.clone(), pred);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub index: usize,
    /// M_c per slot, in slot order.
    pub class_acc: Vec<f64>,
    pub acc: f64,
    pub wacc: f64,
}

pub fn score_task(task: &TaskSpec, predictions: &BTreeMap<String, String>) -> Result<TaskResult> {
    let expected: HashSet<&str> = task.slots.iter().flat_map(|s| s.query.iter().map(String::as_str)).collect();
    let mut missing: Vec<String> = expected
        .iter()
        .filter(|id| !predictions.contains_key(**id))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::Coverage {
            task: task.index,
            ids: missing,
        });
    }
    let classes: HashSet<&str> = task.slots.iter().map(|s| s.class.as_str()).collect();
    for (id, pred) in predictions {
        if !expected.contains(id.as_str()) {
            return Err(Error::InvalidPrediction {
                task: task.index,
                id: id.clone(),
                reason: "not a query of this task".into(),
            });
        }
        if !classes.contains(pred.as_str()) {
            return Err(Error::InvalidPrediction {
                task: task.index,
                id: id.clone(),
                reason: format!("class `{pred}` is not in the task"),
            });
        }
    }

    let class_acc: Vec<f64> = task
        .slots
        .iter()
        .map(|s| {
            let hits = s.query.iter().filter(|id| predictions[id.as_str()] == s.class).count();
            hits as f64 / s.query.len().max(1) as f64
        })
        .collect();
    let acc = class_acc.iter().sum::<f64>() / class_acc.len() as f64;
    let wacc = class_acc.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(TaskResult {
        index: task.index,
        class_acc,
        acc,
        wacc,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub method: String,
    pub mode: Mode,
    /// "wAcc-R" for random episodes, "wAcc-A" for constructed ones.
    pub metric: String,
    pub n_tasks: usize,
    pub acc_mean: f64,
    pub acc_ci95: f64,
    pub wacc_mean: f64,
    pub wacc_ci95: f64,
    pub tasks: Vec<TaskResult>,
}

pub fn metric_label(mode: Mode) -> &'static str {
    match mode {
        Mode::Random => "wAcc-R",
        Mode::Fewstab => "wAcc-A",
    }
}

/// Mean and 1.96·s/√n with the sample standard deviation; the interval is 0
/// for a single value.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

pub fn score_suite(tasks: &[TaskSpec], predictions: &PredictionSet, method: &str, mode: Mode) -> Result<SuiteReport> {
    if tasks.is_empty() {
        return Err(Error::InvalidConfig("no tasks to score".into()));
    }
    let empty = BTreeMap::new();
    let mut results = tasks
        .iter()
        .map(|t| score_task(t, predictions.get(&t.index).unwrap_or(&empty)))
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|r| r.index);

    let accs: Vec<f64> = results.iter().map(|r| r.acc).collect();
    let waccs: Vec<f64> = results.iter().map(|r| r.wacc).collect();
    let (acc_mean, acc_ci95) = mean_ci95(&accs);
    let (wacc_mean, wacc_ci95) = mean_ci95(&waccs);
    Ok(SuiteReport {
        method: method.to_string(),
        mode,
        metric: metric_label(mode).to_string(),
        n_tasks: results.len(),
        acc_mean,
        acc_ci95,
        wacc_mean,
        wacc_ci95,
        tasks: results,
    })
}

/// wAcc on random episodes minus wAcc on constructed ones.
pub fn accuracy_gap(random: &SuiteReport, fewstab: &SuiteReport) -> f64 {
    random.wacc_mean - fewstab.wacc_mean
}

/// 1-based ranks, tied values sharing the mean of their positions.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation with ties averaged.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::Undefined("rank correlation needs at least two pairs".into()));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::Undefined("NaN input".into()));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
        .ok_or_else(|| Error::Undefined("constant input has no ranks to correlate".into()))
}

/// One table row per method, in first-appearance order.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodRow<'r> {
    pub method: &'r str,
    pub random: Option<&'r SuiteReport>,
    pub fewstab: Option<&'r SuiteReport>,
}

impl MethodRow<'_> {
    pub fn gap(&self) -> Option<f64> {
        Some(accuracy_gap(self.random?, self.fewstab?))
    }
}

/// Pairs reports by method name; a later report of the same method and mode
/// replaces an earlier one.
pub fn pair_reports(reports: &[SuiteReport]) -> Vec<MethodRow<'_>> {
    let mut rows: Vec<MethodRow<'_>> = Vec::new();
    for r in reports {
        let pos = match rows.iter().position(|row| row.method == r.method) {
            Some(p) => p,
            None => {
                rows.push(MethodRow {
                    method: &r.method,
                    random: None,
                    fewstab: None,
                });
                rows.len() - 1
            }
        };
        match r.mode {
            Mode::Random => rows[pos].random = Some(r),
            Mode::Fewstab => rows[pos].fewstab = Some(r),
        }
    }
    rows
}

fn pct(r: &SuiteReport) -> String {
    format!("{:.2} ± {:.2}", r.wacc_mean * 100.0, r.wacc_ci95 * 100.0)
}

/// Markdown table of worst-class accuracies in percent. Columns appear only
/// for modes present; gaps when a method has both; a Spearman row over the
/// complete pairs when there are at least two.
pub fn render_markdown(reports: &[SuiteReport]) -> String {
    let rows = pair_reports(reports);
    let has_r = rows.iter().any(|r| r.random.is_some());
    let has_a = rows.iter().any(|r| r.fewstab.is_some());
    let has_gap = rows.iter().any(|r| r.gap().is_some());

    let mut header = vec!["Method"];
    if has_r {
        header.push("wAcc-R");
    }
    if has_a {
        header.push("wAcc-A");
    }
    if has_gap {
        header.push("Gap");
    }
    let mut out = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));

    for row in &rows {
        let mut cells = vec![row.method.to_string()];
        if has_r {
            cells.push(row.random.map(pct).unwrap_or_else(|| "-".into()));
        }
        if has_a {
            cells.push(row.fewstab.map(pct).unwrap_or_else(|| "-".into()));
        }
        if has_gap {
            cells.push(row.gap().map(|g| format!("{:.2}", g * 100.0)).unwrap_or_else(|| "-".into()));
        }
        out.push_str(&format!("| {} |\n", cells.join(" | ")));
    }

    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.fewstab?.wacc_mean, r.random?.wacc_mean)))
        .collect();
    if pairs.len() >= 2 {
        let (a, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let rho = spearman_rho(&a, &r)
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|_| "undefined".into());
        out.push_str(&format!("\nSpearman rank correlation (wAcc-A vs wAcc-R): {rho}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SampleRecord;
    use crate::task::ClassSlot;

    fn slot(class: &str, attr: Option<&str>, support: &[&str], query: &[&str]) -> ClassSlot {
        ClassSlot {
            class: class.into(),
            attribute: attr.map(Into::into),
            support: support.iter().map(|s| s.to_string()).collect(),
            query: query.iter().map(|s| s.to_string()).collect(),
            fallback: false,
        }
    }

    fn emb(id: &str, class: &str, e: &[f64]) -> SampleRecord {
        SampleRecord::new(id, class, Vec::<String>::new()).with_embedding(e.to_vec())
    }

    #[test]
    fn prototype_one_dimensional() {
        let split = DatasetSplit::new(vec![
            emb("s1", "a", &[0.0]),
            emb("s2", "a", &[2.0]),
            emb("t1", "b", &[10.0]),
            emb("q1", "a", &[4.0]),
            emb("q2", "b", &[5.5]),
        ])
        .unwrap();
        let task = TaskSpec {
            index: 0,
            seed: 0,
            slots: vec![slot("a", None, &["s1", "s2"], &["q1"]), slot("b", None, &["t1"], &["q2"])],
            restarts: 0,
        };
        let p = prototype_classify(&task, &split).unwrap();
        assert_eq!(p["q1"], "a");
        // 5.5 is 4.5 from both prototypes
        assert_eq!(p["q2"], "a");
    }

    #[test]
    fn prototype_needs_embeddings() {
        let split = DatasetSplit::new(vec![SampleRecord::new("s", "a", ["x"]), SampleRecord::new("q", "a", ["x"])]).unwrap();
        let task = TaskSpec {
            index: 0,
            seed: 0,
            slots: vec![slot("a", None, &["s"], &["q"])],
            restarts: 0,
        };
        assert!(matches!(prototype_classify(&task, &split), Err(Error::MissingEmbedding(_))));
    }

    fn oracle_fixture() -> (DatasetSplit, TaskSpec) {
        let split = DatasetSplit::new(vec![
            SampleRecord::new("q0", "c0", ["a2"]),
            SampleRecord::new("q1", "c1", ["zz"]),
            SampleRecord::new("q2", "c2", ["a1", "a3"]),
            SampleRecord::new("q3", "c3", ["a0"]),
        ])
        .unwrap();
        let task = TaskSpec {
            index: 7,
            seed: 0,
            slots: (0..4)
                .map(|i| {
                    let a = format!("a{i}");
                    let q = format!("q{i}");
                    slot(&format!("c{i}"), Some(&a), &[], &[&q])
                })
                .collect(),
            restarts: 0,
        };
        (split, task)
    }

    #[test]
    fn oracle_rule_order() {
        let (split, task) = oracle_fixture();
        let rules = OracleRules::new(
            vec![
                ("a3".into(), "c3".into()),
                ("a2".into(), "c2".into()),
                ("a1".into(), "c1".into()),
                ("a0".into(), "c0".into()),
            ],
            FallbackPolicy::FixedFirstSlot,
        )
        .unwrap();
        let p = oracle_classify(&task, &rules, &split).unwrap();
        assert_eq!(p["q0"], "c2");
        assert_eq!(p["q1"], "c0");
        assert_eq!(p["q2"], "c3");
        assert_eq!(p["q3"], "c0");
    }

    #[test]
    fn oracle_skips_rules_for_absent_classes() {
        let (split, task) = oracle_fixture();
        let rules = OracleRules::new(
            vec![("a2".into(), "elsewhere".into()), ("zz".into(), "c1".into())],
            FallbackPolicy::SeededUniform { seed: 3 },
        )
        .unwrap();
        let p = oracle_classify(&task, &rules, &split).unwrap();
        assert_eq!(p["q1"], "c1");
        assert_eq!(p, oracle_classify(&task, &rules, &split).unwrap());
    }

    #[test]
    fn duplicate_rule_attribute_rejected() {
        let r = OracleRules::new(
            vec![("a".into(), "x".into()), ("a".into(), "y".into())],
            FallbackPolicy::FixedFirstSlot,
        );
        assert!(r.is_err());
    }

    #[test]
    fn score_example() {
        let task = TaskSpec {
            index: 0,
            seed: 0,
            slots: vec![
                slot("a", None, &[], &["a1", "a2", "a3", "a4", "a5"]),
                slot("b", None, &[], &["b1", "b2", "b3", "b4", "b5"]),
                slot("c", None, &[], &["c1", "c2", "c3", "c4", "c5"]),
            ],
            restarts: 0,
        };
        let mut p = BTreeMap::new();
        for (cls, wrong) in [("a", 1), ("b", 2), ("c", 0)] {
            for i in 1..=5 {
                let pred = if i <= wrong { "z" } else { cls };
                p.insert(format!("{cls}{i}"), pred.to_string());
            }
        }
        // "z" is not a task class
        assert!(matches!(score_task(&task, &p), Err(Error::InvalidPrediction { .. })));
        for v in p.values_mut() {
            if v == "z" {
                *v = "c".into();
            }
        }
        p.insert("c1".into(), "c".into());
        let r = score_task(&task, &p).unwrap();
        assert_eq!(r.class_acc, [0.8, 0.6, 1.0]);
        assert!((r.acc - 0.8).abs() < 1e-12);
        assert_eq!(r.wacc, 0.6);
    }

    #[test]
    fn coverage_lists_missing() {
        let task = TaskSpec {
            index: 3,
            seed: 0,
            slots: vec![slot("a", None, &[], &["x", "y"])],
            restarts: 0,
        };
        let p = BTreeMap::from([("x".to_string(), "a".to_string())]);
        match score_task(&task, &p) {
            Err(Error::Coverage { task: 3, ids }) => assert_eq!(ids, ["y"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ci_two_tasks() {
        let (m, ci) = mean_ci95(&[0.2, 0.6]);
        assert!((m - 0.4).abs() < 1e-12);
        let sd = (0.08f64).sqrt();
        assert!((ci - 1.96 * sd / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean_ci95(&[1.0, 1.0, 1.0]).1, 0.0);
    }

    #[test]
    fn spearman_basics() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman_rho(&xs, &[1.0, 4.0, 9.0, 16.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman_rho(&xs, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(spearman_rho(&xs, &[1.0]), Err(Error::LengthMismatch(4, 1))));
        assert!(matches!(spearman_rho(&xs, &[2.0; 4]), Err(Error::Undefined(_))));
        assert!(spearman_rho(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn spearman_ties_average() {
        // ranks x: 1, 2.5, 2.5, 4; y: 1..4 → pearson of those ranks
        let r = spearman_rho(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let rx = [1.0, 2.5, 2.5, 4.0];
        let ry = [1.0, 2.0, 3.0, 4.0];
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - 2.5) * (b - 2.5)).sum();
        let vx: f64 = rx.iter().map(|a| (a - 2.5f64).powi(2)).sum();
        let vy: f64 = ry.iter().map(|a| (a - 2.5f64).powi(2)).sum();
        assert!((r - cov / (vx * vy).sqrt()).abs() < 1e-12);
    }

    fn report(method: &str, mode: Mode, wacc: f64) -> SuiteReport {
        SuiteReport {
            method: method.into(),
            mode,
            metric: metric_label(mode).into(),
            n_tasks: 1,
            acc_mean: wacc,
            acc_ci95: 0.0,
            wacc_mean: wacc,
            wacc_ci95: 0.0,
            tasks: vec![],
        }
    }

    #[test]
    fn markdown_layouts() {
        let single = render_markdown(&[report("m", Mode::Fewstab, 0.5)]);
        assert!(single.contains("wAcc-A") && !single.contains("Gap") && !single.contains("Spearman"));

        let pair = render_markdown(&[report("m", Mode::Random, 0.2537), report("m", Mode::Fewstab, 0.1483)]);
        assert!(pair.contains("| m | 25.37 ± 0.00 | 14.83 ± 0.00 | 10.54 |"), "{pair}");
        assert!(!pair.contains("Spearman"));

        let two = render_markdown(&[
            report("m", Mode::Random, 0.3),
            report("m", Mode::Fewstab, 0.1),
            report("n", Mode::Random, 0.4),
            report("n", Mode::Fewstab, 0.2),
        ]);
        assert!(two.contains("Spearman rank correlation (wAcc-A vs wAcc-R): 1.00"), "{two}");
    }

    #[test]
    fn predictions_round_trip() {
        let mut p = PredictionSet::new();
        p.entry(2).or_default().insert("x".into(), "a".into());
        p.entry(0).or_default().insert("y".into(), "b".into());
        let mut buf = Vec::new();
        write_predictions(&p, &mut buf).unwrap();
        assert_eq!(read_predictions(buf.as_slice()).unwrap(), p);
        let dup = b"{\"task\":0,\"id\":\"y\",\"pred\":\"b\"}\n{\"task\":0,\"id\":\"y\",\"pred\":\"a\"}\n";
        assert!(read_predictions(&dup[..]).is_err());
    }
}
