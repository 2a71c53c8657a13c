//! Independent checks on built episodes.
//!
//! Nothing here reuses the builder's indices or candidate functions: every
//! condition is recomputed from the plain sample records with string sets, so
//! a bug in the builder cannot hide itself.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::data::{DatasetSplit, SampleRecord};
use crate::task::{BuildConfig, Mode, QueryVariant, SupportVariant, TaskSpec, TaskSuite};

/// Slack when comparing recomputed likelihood scores.
const SCORE_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub task: usize,
    pub slot: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.slot {
            Some(s) => write!(f, "task {} slot {}: {}", self.task, s, self.message),
            None => write!(f, "task {}: {}", self.task, self.message),
        }
    }
}

pub struct Validator<'a> {
    by_id: HashMap<&'a str, &'a SampleRecord>,
    by_class: HashMap<&'a str, Vec<&'a SampleRecord>>,
}

impl<'a> Validator<'a> {
    pub fn new(split: &'a DatasetSplit) -> Self {
        let mut by_id = HashMap::new();
        let mut by_class: HashMap<&str, Vec<&SampleRecord>> = HashMap::new();
        for s in split.samples() {
            by_id.insert(s.id.as_str(), s);
            by_class.entry(s.class.as_str()).or_default().push(s);
        }
        Self { by_id, by_class }
    }

    pub fn check_suite(&self, suite: &TaskSuite) -> Vec<Violation> {
        suite
            .tasks
            .iter()
            .flat_map(|t| self.check_task(&suite.config, t))
            .collect()
    }

    pub fn check_task(&self, config: &BuildConfig, task: &TaskSpec) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut fail = |slot: Option<usize>, message: String| {
            out.push(Violation {
                task: task.index,
                slot,
                message,
            })
        };

        if task.slots.len() != config.ways {
            fail(None, format!("{} slots, expected {}", task.slots.len(), config.ways));
        }
        let classes: HashSet<&str> = task.slots.iter().map(|s| s.class.as_str()).collect();
        if classes.len() != task.slots.len() {
            fail(None, "repeated class".into());
        }
        let mut seen: HashSet<&str> = HashSet::new();
        for (i, slot) in task.slots.iter().enumerate() {
            if slot.support.len() != config.shots {
                fail(Some(i), format!("{} support samples, expected {}", slot.support.len(), config.shots));
            }
            if slot.query.len() != config.queries {
                fail(Some(i), format!("{} query samples, expected {}", slot.query.len(), config.queries));
            }
            for id in slot.support.iter().chain(&slot.query) {
                if !seen.insert(id) {
                    fail(Some(i), format!("sample {id} used twice"));
                }
                match self.by_id.get(id.as_str()) {
                    None => fail(Some(i), format!("unknown sample {id}")),
                    Some(r) if r.class != slot.class => {
                        fail(Some(i), format!("sample {id} belongs to {}", r.class))
                    }
                    _ => {}
                }
            }
        }

        match config.mode {
            Mode::Random => {
                for (i, slot) in task.slots.iter().enumerate() {
                    if slot.attribute.is_some() || slot.fallback {
                        fail(Some(i), "random slot carries an attribute or fallback".into());
                    }
                }
            }
            Mode::Fewstab => {
                let attrs: Vec<&str> = task
                    .slots
                    .iter()
                    .map(|s| s.attribute.as_deref().unwrap_or(""))
                    .collect();
                if attrs.iter().any(|a| a.is_empty()) {
                    fail(None, "slot without attribute".into());
                    return out;
                }
                if attrs.iter().collect::<HashSet<_>>().len() != attrs.len() {
                    fail(None, "repeated attribute".into());
                }
                for i in 0..task.slots.len() {
                    for m in self.check_fewstab_slot(config, task, i, &attrs) {
                        fail(Some(i), m);
                    }
                }
            }
        }
        out
    }

    fn record(&self, id: &str) -> Option<&'a SampleRecord> {
        self.by_id.get(id).copied()
    }

    fn check_fewstab_slot(&self, config: &BuildConfig, task: &TaskSpec, i: usize, attrs: &[&str]) -> Vec<String> {
        let mut msgs = Vec::new();
        let slot = &task.slots[i];
        let own = attrs[i];
        let others: Vec<&str> = attrs.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, a)| *a).collect();
        let has = |r: &SampleRecord, a: &str| r.attributes.contains(a);
        let has_other = |r: &SampleRecord| others.iter().any(|a| has(r, a));
        let members = self.by_class.get(slot.class.as_str()).map(Vec::as_slice).unwrap_or(&[]);

        let carriers = members.iter().filter(|r| has(r, own)).count();
        if carriers == 0 || carriers == members.len() {
            msgs.push(format!("{own} is not spurious for {}", slot.class));
        }

        for id in &slot.support {
            let Some(r) = self.record(id) else { continue };
            if config.support_variant != SupportVariant::SC1 && !has(r, own) {
                msgs.push(format!("support {id} lacks {own}"));
            }
            if config.support_variant == SupportVariant::SC3 && has_other(r) {
                msgs.push(format!("support {id} carries another slot's attribute"));
            }
        }
        for id in &slot.query {
            let Some(r) = self.record(id) else { continue };
            if has(r, own) {
                msgs.push(format!("query {id} carries {own}"));
            }
            if !slot.fallback && !has_other(r) {
                msgs.push(format!("query {id} carries no other slot's attribute"));
            }
        }

        if config.query_variant == QueryVariant::QC3 {
            let support: HashSet<&str> = slot.support.iter().map(String::as_str).collect();
            let intra: Vec<&SampleRecord> = members
                .iter()
                .copied()
                .filter(|r| !has(r, own) && !support.contains(r.id.as_str()))
                .collect();
            let inter: Vec<&SampleRecord> = intra.iter().copied().filter(|r| has_other(r)).collect();
            let chosen: HashSet<&str> = slot.query.iter().map(String::as_str).collect();
            if !slot.fallback {
                msgs.extend(minimality(&inter, &chosen, attrs));
            } else {
                if inter.len() >= config.queries {
                    msgs.push(format!("fallback used although {} inter-class candidates exist", inter.len()));
                }
                if let Some(r) = inter.iter().find(|r| !chosen.contains(r.id.as_str())) {
                    msgs.push(format!("inter-class candidate {} skipped during fallback", r.id));
                }
                let rest: Vec<&SampleRecord> = intra.iter().copied().filter(|r| !has_other(r)).collect();
                let scores = scores_over(&intra, attrs);
                let picked: Vec<f64> = rest.iter().filter(|r| chosen.contains(r.id.as_str())).map(|r| scores[r.id.as_str()]).collect();
                let left: Vec<f64> = rest.iter().filter(|r| !chosen.contains(r.id.as_str())).map(|r| scores[r.id.as_str()]).collect();
                msgs.extend(compare(&picked, &left));
            }
        }
        msgs
    }
}

fn scores_over<'r>(pool: &[&'r SampleRecord], selected: &[&str]) -> HashMap<&'r str, f64> {
    let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
    for r in pool {
        for a in &r.attributes {
            if !selected.contains(&a.as_str()) {
                *counts.entry(a).or_default() += 1.0;
            }
        }
    }
    let n = pool.len() as f64;
    pool.iter()
        .map(|r| {
            let s = r.attributes.iter().filter_map(|a| counts.get(a.as_str())).map(|c| c / n).sum();
            (r.id.as_str(), s)
        })
        .collect()
}

fn minimality(pool: &[&SampleRecord], chosen: &HashSet<&str>, selected: &[&str]) -> Vec<String> {
    let mut msgs = Vec::new();
    let ids: HashSet<&str> = pool.iter().map(|r| r.id.as_str()).collect();
    for id in chosen {
        if !ids.contains(id) {
            msgs.push(format!("query {id} outside the inter-class pool"));
        }
    }
    let scores = scores_over(pool, selected);
    let picked: Vec<f64> = pool.iter().filter(|r| chosen.contains(r.id.as_str())).map(|r| scores[r.id.as_str()]).collect();
    let left: Vec<f64> = pool.iter().filter(|r| !chosen.contains(r.id.as_str())).map(|r| scores[r.id.as_str()]).collect();
    msgs.extend(compare(&picked, &left));
    msgs
}

fn compare(picked: &[f64], left: &[f64]) -> Option<String> {
    let worst = picked.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best = left.iter().copied().fold(f64::INFINITY, f64::min);
    (worst > best + SCORE_EPS).then(|| format!("chosen score {worst} exceeds unchosen {best}"))
}

pub fn validate_suite(split: &DatasetSplit, suite: &TaskSuite) -> Vec<Violation> {
    Validator::new(split).check_suite(suite)
}
