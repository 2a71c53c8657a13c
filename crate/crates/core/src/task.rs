//! Episode construction.
//!
//! A FewSTAB episode picks `ways` classes, gives each a distinct spurious
//! attribute, fills the support set with samples that carry their own class's
//! attribute (and, by default, none of the others'), and fills the query set
//! with samples that lack their own class's attribute but carry another
//! slot's. Among eligible queries the ones least explainable by the remaining
//! attributes are preferred.
//!
//! Any failure restarts the whole episode from class selection onwards, on the
//! same task stream. Random episodes are the baseline.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{self, Correlation, SpuriousCatalog};
use crate::data::{AttrId, DatasetSplit, SampleRecord};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Xoshiro256StarStar};

pub(crate) mod seed_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fewstab,
    Random,
}

/// How support samples are drawn for a slot ⟨c, a⟩.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SupportVariant {
    /// Any sample of c.
    SC1,
    /// Samples of c carrying a.
    SC2,
    /// Samples of c carrying a and none of the other slots' attributes.
    #[default]
    SC3,
}

/// How query samples are drawn for a slot ⟨c, a⟩.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryVariant {
    /// Random samples of c lacking a.
    QC1,
    /// Random samples of c lacking a and carrying another slot's attribute.
    QC2,
    /// As QC2, keeping the samples with the lowest likelihood score.
    #[default]
    QC3,
}

macro_rules! parse_enum {
    ($ty:ty, $($name:literal => $val:expr),+) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok($val),)+
                    other => Err(format!("unknown value `{other}`")),
                }
            }
        }
    };
}

parse_enum!(Mode, "fewstab" => Mode::Fewstab, "random" => Mode::Random);
parse_enum!(SupportVariant, "sc1" => SupportVariant::SC1, "sc2" => SupportVariant::SC2, "sc3" => SupportVariant::SC3);
parse_enum!(QueryVariant, "qc1" => QueryVariant::QC1, "qc2" => QueryVariant::QC2, "qc3" => QueryVariant::QC3);

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Fewstab => "fewstab",
            Mode::Random => "random",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    pub num_tasks: usize,
    #[serde(with = "seed_string")]
    pub master_seed: u64,
    pub mode: Mode,
    pub support_variant: SupportVariant,
    pub query_variant: QueryVariant,
    pub max_restarts: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            ways: 5,
            shots: 5,
            queries: 15,
            num_tasks: 3000,
            master_seed: 0,
            mode: Mode::Fewstab,
            support_variant: SupportVariant::SC3,
            query_variant: QueryVariant::QC3,
            max_restarts: 100,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(what.to_string()))
            }
        };
        check(self.ways >= 2, "ways must be at least 2")?;
        check(self.shots >= 1, "shots must be at least 1")?;
        check(self.queries >= 1, "queries must be at least 1")?;
        check(self.num_tasks >= 1, "num_tasks must be at least 1")?;
        check(self.max_restarts >= 1, "max_restarts must be at least 1")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSlot {
    pub class: String,
    pub attribute: Option<String>,
    pub support: Vec<String>,
    pub query: Vec<String>,
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub index: usize,
    #[serde(with = "seed_string")]
    pub seed: u64,
    pub slots: Vec<ClassSlot>,
    pub restarts: usize,
}

impl TaskSpec {
    pub fn fallback_free(&self) -> bool {
        self.slots.iter().all(|s| !s.fallback)
    }

    pub fn correlations(&self) -> Option<Vec<Correlation>> {
        self.slots
            .iter()
            .map(|s| s.attribute.as_ref().map(|a| Correlation::new(&s.class, a)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub index: usize,
    pub error: String,
}

/// A built suite; serializes as tasks-json.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSuite {
    pub config: BuildConfig,
    pub tasks: Vec<TaskSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed: Vec<TaskFailure>,
}

impl TaskSuite {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Copy, Debug)]
struct Slot {
    class: usize,
    attr: Option<AttrId>,
}

/// Classes with a non-empty spurious set, ascending, paired with that set.
fn usable<'c>(split: &DatasetSplit, catalog: &'c SpuriousCatalog) -> Vec<(&'c str, &'c BTreeSet<String>)> {
    catalog
        .iter()
        .filter(|(c, attrs)| !attrs.is_empty() && split.contains_class(c))
        .map(|(c, attrs)| (c.as_str(), attrs))
        .collect()
}

fn select_once(
    usable: &[(&str, &BTreeSet<String>)],
    ways: usize,
    rng: &mut Xoshiro256StarStar,
) -> Option<Vec<Correlation>> {
    if usable.len() < ways {
        return None;
    }
    let picks = rng.sample(usable.len(), ways);
    let mut chosen: Vec<Correlation> = Vec::with_capacity(ways);
    for p in picks {
        let (class, attrs) = usable[p];
        let taken = chosen.iter().filter(|c| attrs.contains(&c.attribute)).count();
        let available = attrs.len() - taken;
        if available == 0 {
            return None;
        }
        let k = rng.below(available);
        let attribute = attrs
            .iter()
            .filter(|a| chosen.iter().all(|c| &c.attribute != *a))
            .nth(k)
            .expect("k < available");
        chosen.push(Correlation::new(class, attribute.clone()));
    }
    Some(chosen)
}

/// Draws `ways` classes with distinct spurious attributes. A draw that runs out
/// of distinct attributes is retried, up to `max_restarts` times.
pub fn select_correlations(
    catalog: &SpuriousCatalog,
    ways: usize,
    max_restarts: usize,
    rng: &mut Xoshiro256StarStar,
) -> Result<Vec<Correlation>> {
    let usable: Vec<_> = catalog
        .iter()
        .filter(|(_, a)| !a.is_empty())
        .map(|(c, a)| (c.as_str(), a))
        .collect();
    if usable.len() < ways {
        return Err(Error::InfeasibleSelection { ways, attempts: 0 });
    }
    for _ in 0..=max_restarts {
        if let Some(c) = select_once(&usable, ways, rng) {
            return Ok(c);
        }
    }
    Err(Error::InfeasibleSelection {
        ways,
        attempts: max_restarts + 1,
    })
}

fn resolve(split: &DatasetSplit, correlations: &[Correlation]) -> Result<Vec<Slot>> {
    correlations
        .iter()
        .map(|c| {
            Ok(Slot {
                class: split.class_idx(&c.class)?,
                attr: split.attr_id(&c.attribute),
            })
        })
        .collect()
}

fn has(split: &DatasetSplit, sample: usize, attr: Option<AttrId>) -> bool {
    attr.is_some_and(|a| split.has_attr(sample, a))
}

fn other_attrs(slots: &[Slot], me: usize) -> Vec<Option<AttrId>> {
    slots
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != me)
        .map(|(_, s)| s.attr)
        .collect()
}

fn support_pool(split: &DatasetSplit, slots: &[Slot], me: usize, variant: SupportVariant) -> Vec<usize> {
    let slot = slots[me];
    let others = other_attrs(slots, me);
    split
        .members(slot.class)
        .iter()
        .copied()
        .filter(|&s| match variant {
            SupportVariant::SC1 => true,
            SupportVariant::SC2 => has(split, s, slot.attr),
            SupportVariant::SC3 => {
                has(split, s, slot.attr) && !others.iter().any(|&o| has(split, s, o))
            }
        })
        .collect()
}

fn draw_supports(
    split: &DatasetSplit,
    slots: &[Slot],
    shots: usize,
    variant: SupportVariant,
    rng: &mut Xoshiro256StarStar,
) -> Result<Vec<Vec<usize>>> {
    (0..slots.len())
        .map(|i| {
            let pool = support_pool(split, slots, i, variant);
            if pool.len() < shots {
                return Err(Error::InsufficientSupport {
                    class: split.classes()[slots[i].class].clone(),
                    available: pool.len(),
                    needed: shots,
                });
            }
            Ok(rng.choose_multiple(&pool, shots))
        })
        .collect()
}

/// Draws `shots` support samples per correlation, in correlation order.
pub fn build_support(
    split: &DatasetSplit,
    correlations: &[Correlation],
    shots: usize,
    variant: SupportVariant,
    rng: &mut Xoshiro256StarStar,
) -> Result<Vec<Vec<String>>> {
    let slots = resolve(split, correlations)?;
    let drawn = draw_supports(split, &slots, shots, variant, rng)?;
    Ok(drawn
        .into_iter()
        .map(|ids| ids.into_iter().map(|i| split.sample_id(i).to_string()).collect())
        .collect())
}

/// Per non-selected attribute, how many pool members carry it. Dividing by the
/// pool size gives the prevalence; keeping the integer count makes the score
/// ordering exact.
fn prevalence_counts(
    split: &DatasetSplit,
    pool: &[usize],
    selected: &[Option<AttrId>],
) -> Vec<u32> {
    let mut counts = vec![0u32; split.vocabulary().len()];
    for &s in pool {
        for &a in split.attrs_of(s) {
            counts[a as usize] += 1;
        }
    }
    for a in selected.iter().flatten() {
        counts[*a as usize] = 0;
    }
    counts
}

/// Sorts `pool` by ascending likelihood score, ties by ascending sample id.
/// `pool` must already be in ascending id order.
fn rank_by_score(split: &DatasetSplit, pool: &mut [usize], counts: &[u32]) {
    pool.sort_by_cached_key(|&s| {
        split
            .attrs_of(s)
            .iter()
            .map(|&a| u64::from(counts[a as usize]))
            .sum::<u64>()
    });
}

fn draw_query(
    split: &DatasetSplit,
    slots: &[Slot],
    me: usize,
    queries: usize,
    variant: QueryVariant,
    exclude: &HashSet<usize>,
    rng: &mut Xoshiro256StarStar,
) -> Result<(Vec<usize>, bool)> {
    let slot = slots[me];
    let others = other_attrs(slots, me);
    let selected: Vec<Option<AttrId>> = slots.iter().map(|s| s.attr).collect();
    let keep = |v: Vec<usize>| -> Vec<usize> { v.into_iter().filter(|s| !exclude.contains(s)).collect() };

    let intra = keep(catalog::intra_indices(split, slot.class, slot.attr));
    let insufficient = |available: usize| Error::InsufficientQuery {
        class: split.classes()[slot.class].clone(),
        available,
        needed: queries,
    };

    if variant == QueryVariant::QC1 {
        if intra.len() < queries {
            return Err(insufficient(intra.len()));
        }
        return Ok((rng.choose_multiple(&intra, queries), true));
    }

    let mut inter = keep(catalog::union_indices(split, slot.class, slot.attr, &others));
    if inter.len() >= queries {
        let picked = match variant {
            QueryVariant::QC3 => {
                let counts = prevalence_counts(split, &inter, &selected);
                rank_by_score(split, &mut inter, &counts);
                inter.truncate(queries);
                inter
            }
            _ => rng.choose_multiple(&inter, queries),
        };
        return Ok((picked, false));
    }
    if intra.len() < queries {
        return Err(insufficient(intra.len()));
    }

    let in_inter: HashSet<usize> = inter.iter().copied().collect();
    let mut rest: Vec<usize> = intra.into_iter().filter(|s| !in_inter.contains(s)).collect();
    let need = queries - inter.len();
    let picked = match variant {
        QueryVariant::QC3 => {
            if !inter.is_empty() {
                let counts = prevalence_counts(split, &inter, &selected);
                rank_by_score(split, &mut inter, &counts);
            }
            // prevalence for the fill is taken over the whole intra-class pool
            let mut pool = inter.clone();
            pool.extend_from_slice(&rest);
            let counts = prevalence_counts(split, &pool, &selected);
            rank_by_score(split, &mut rest, &counts);
            rest.truncate(need);
            inter.extend(rest);
            inter
        }
        _ => {
            let mut picked = rng.choose_multiple(&inter, inter.len());
            picked.extend(rng.choose_multiple(&rest, need));
            picked
        }
    };
    Ok((picked, true))
}

/// Query ids for `correlations[slot]`, and whether the intra-class pool had to
/// be used. Samples listed in `exclude` (the slot's support) are never chosen.
pub fn build_query(
    split: &DatasetSplit,
    correlations: &[Correlation],
    slot: usize,
    queries: usize,
    variant: QueryVariant,
    exclude: &[&str],
    rng: &mut Xoshiro256StarStar,
) -> Result<(Vec<String>, bool)> {
    catalog::check_correlations(correlations)?;
    if slot >= correlations.len() {
        return Err(Error::ConstraintViolation(format!("slot {slot} out of range")));
    }
    let slots = resolve(split, correlations)?;
    let exclude: HashSet<usize> = exclude.iter().filter_map(|id| split.index_of(id)).collect();
    let (ids, fallback) = draw_query(split, &slots, slot, queries, variant, &exclude, rng)?;
    Ok((ids.into_iter().map(|i| split.sample_id(i).to_string()).collect(), fallback))
}

/// p_a for every attribute of the candidates outside `selected`; attributes
/// that never occur are omitted.
pub fn attribute_prevalence(
    candidates: &[&str],
    split: &DatasetSplit,
    selected: &BTreeSet<String>,
) -> Result<BTreeMap<String, f64>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for id in candidates {
        let rec = split
            .get(id)
            .ok_or_else(|| Error::InvalidRecord(format!("unknown sample `{id}`")))?;
        for a in &rec.attributes {
            if !selected.contains(a) {
                *counts.entry(a).or_default() += 1;
            }
        }
    }
    let n = candidates.len() as f64;
    Ok(counts.into_iter().map(|(a, c)| (a.to_string(), c as f64 / n)).collect())
}

/// Sum of p_a over the sample's attributes that appear in `prevalence`.
pub fn likelihood_score(sample: &SampleRecord, prevalence: &BTreeMap<String, f64>) -> f64 {
    sample
        .attributes
        .iter()
        .filter_map(|a| prevalence.get(a))
        .sum()
}

/// Builds episodes for one split/catalog/config, sharing the per-suite setup.
pub struct TaskBuilder<'a> {
    split: &'a DatasetSplit,
    config: &'a BuildConfig,
    usable: Vec<(&'a str, &'a BTreeSet<String>)>,
}

impl<'a> TaskBuilder<'a> {
    pub fn new(split: &'a DatasetSplit, catalog: &'a SpuriousCatalog, config: &'a BuildConfig) -> Self {
        Self {
            split,
            config,
            usable: usable(split, catalog),
        }
    }

    /// Fails if no task could ever be built with this configuration.
    pub fn check_feasible(&self) -> Result<()> {
        self.config.validate()?;
        let (have, what) = match self.config.mode {
            Mode::Fewstab => (self.usable.len(), "classes with spurious attributes"),
            Mode::Random => (self.split.classes().len(), "classes"),
        };
        if have < self.config.ways {
            return Err(Error::InvalidConfig(format!(
                "{}-way tasks need {} {what}, split has {have}",
                self.config.ways, self.config.ways
            )));
        }
        Ok(())
    }

    pub fn build(&self, index: usize) -> Result<TaskSpec> {
        let seed = derive_seed(self.config.master_seed, index as u64);
        let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
        let attempts = self.config.max_restarts + 1;
        if let Err(e) = self.check_feasible() {
            return Err(Error::ConstructionFailed {
                index,
                attempts: 0,
                last: e.to_string(),
            });
        }
        let mut last = String::new();
        for attempt in 0..attempts {
            let built = match self.config.mode {
                Mode::Fewstab => self.try_fewstab(&mut rng),
                Mode::Random => self.try_random(&mut rng),
            };
            match built {
                Ok(slots) => {
                    return Ok(TaskSpec {
                        index,
                        seed,
                        slots,
                        restarts: attempt,
                    })
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(Error::ConstructionFailed {
            index,
            attempts,
            last,
        })
    }

    fn try_fewstab(&self, rng: &mut Xoshiro256StarStar) -> Result<Vec<ClassSlot>> {
        let cfg = self.config;
        let split = self.split;
        let correlations = select_once(&self.usable, cfg.ways, rng).ok_or(Error::InfeasibleSelection {
            ways: cfg.ways,
            attempts: 1,
        })?;
        let slots = resolve(split, &correlations)?;
        let supports = draw_supports(split, &slots, cfg.shots, cfg.support_variant, rng)?;
        let mut out = Vec::with_capacity(slots.len());
        for (i, (corr, support)) in correlations.into_iter().zip(supports).enumerate() {
            let exclude: HashSet<usize> = support.iter().copied().collect();
            let (query, fallback) = draw_query(split, &slots, i, cfg.queries, cfg.query_variant, &exclude, rng)?;
            out.push(ClassSlot {
                class: corr.class,
                attribute: Some(corr.attribute),
                support: support.iter().map(|&s| split.sample_id(s).to_string()).collect(),
                query: query.iter().map(|&s| split.sample_id(s).to_string()).collect(),
                fallback,
            });
        }
        Ok(out)
    }

    fn try_random(&self, rng: &mut Xoshiro256StarStar) -> Result<Vec<ClassSlot>> {
        let cfg = self.config;
        let split = self.split;
        let need = cfg.shots + cfg.queries;
        let classes = rng.sample(split.classes().len(), cfg.ways);
        let mut out = Vec::with_capacity(classes.len());
        for ci in classes {
            let members = split.members(ci);
            if members.len() < need {
                return Err(Error::InsufficientSupport {
                    class: split.classes()[ci].clone(),
                    available: members.len(),
                    needed: need,
                });
            }
            let drawn = rng.choose_multiple(members, need);
            let ids: Vec<String> = drawn.iter().map(|&s| split.sample_id(s).to_string()).collect();
            let (support, query) = ids.split_at(cfg.shots);
            out.push(ClassSlot {
                class: split.classes()[ci].clone(),
                attribute: None,
                support: support.to_vec(),
                query: query.to_vec(),
                fallback: false,
            });
        }
        Ok(out)
    }
}

/// One episode; a pure function of the inputs and `index`.
pub fn build_task(
    split: &DatasetSplit,
    catalog: &SpuriousCatalog,
    config: &BuildConfig,
    index: usize,
) -> Result<TaskSpec> {
    let mut cfg = config.clone();
    cfg.mode = Mode::Fewstab;
    TaskBuilder::new(split, catalog, &cfg).build(index)
}

pub fn build_random_task(split: &DatasetSplit, config: &BuildConfig, index: usize) -> Result<TaskSpec> {
    let mut cfg = config.clone();
    cfg.mode = Mode::Random;
    let empty = SpuriousCatalog::default();
    TaskBuilder::new(split, &empty, &cfg).build(index)
}

/// Builds tasks `0..num_tasks` on `threads` workers (0 = rayon default).
/// Output is ordered by task index whatever the schedule. Individual failures
/// are recorded; more than 1% of them fails the suite.
pub fn build_suite(
    split: &DatasetSplit,
    catalog: &SpuriousCatalog,
    config: &BuildConfig,
    threads: usize,
) -> Result<TaskSuite> {
    let builder = TaskBuilder::new(split, catalog, config);
    builder.check_feasible()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let results: Vec<Result<TaskSpec>> =
        pool.install(|| (0..config.num_tasks).into_par_iter().map(|i| builder.build(i)).collect());

    let mut tasks = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => tasks.push(t),
            Err(e) => failed.push(TaskFailure {
                index,
                error: e.to_string(),
            }),
        }
    }
    if failed.len() * 100 > config.num_tasks {
        return Err(Error::SuiteFailed {
            failed: failed.len(),
            total: config.num_tasks,
        });
    }
    Ok(TaskSuite {
        config: config.clone(),
        tasks,
        failed,
    })
}
