//! Spurious (class, attribute) pairs and the candidate pools derived from them.
//!
//! An attribute is spurious for a class when it occurs in some, but not all,
//! of that class's samples. Attributes that every sample of a class carries
//! never qualify, which also keeps class-name words out of the catalog.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::data::{AttrId, DatasetSplit};
use crate::error::{Error, Result};

/// A class paired with the attribute selected to stand in as its shortcut.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Correlation {
    pub class: String,
    pub attribute: String,
}

impl Correlation {
    pub fn new(class: impl Into<String>, attribute: impl Into<String>) -> Self {
        Self {
            class: class.into(),
            attribute: attribute.into(),
        }
    }
}

/// Per class, its spurious attributes. Every class of the source split has an
/// entry, possibly empty. Serializes as catalog-json.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpuriousCatalog {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl SpuriousCatalog {
    pub fn from_entries(entries: BTreeMap<String, BTreeSet<String>>) -> Self {
        Self { entries }
    }

    pub fn get(&self, class: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(class)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Classes with at least one spurious attribute, ascending.
    pub fn usable_classes(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, attrs)| !attrs.is_empty())
            .map(|(c, _)| c.as_str())
            .collect()
    }

    /// Keeps only the pairs accepted by `keep`.
    pub fn restrict(&self, mut keep: impl FnMut(&str, &str) -> bool) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(c, attrs)| {
                let kept = attrs.iter().filter(|a| keep(c, a)).cloned().collect();
                (c.clone(), kept)
            })
            .collect();
        Self { entries }
    }

    /// Keeps, for each class, only the attribute `allowed` maps it to.
    pub fn restrict_to(&self, allowed: &BTreeMap<String, String>) -> Self {
        self.restrict(|c, a| allowed.get(c).is_some_and(|x| x == a))
    }
}

pub fn build_catalog(split: &DatasetSplit) -> SpuriousCatalog {
    let mut entries = BTreeMap::new();
    let mut counts: Vec<u32> = vec![0; split.vocabulary().len()];
    for (ci, class) in split.classes().iter().enumerate() {
        let members = split.members(ci);
        let mut touched: Vec<AttrId> = Vec::new();
        for &s in members {
            for &a in split.attrs_of(s) {
                if counts[a as usize] == 0 {
                    touched.push(a);
                }
                counts[a as usize] += 1;
            }
        }
        let n = members.len() as u32;
        let mut spurious = BTreeSet::new();
        for a in touched {
            if counts[a as usize] < n {
                spurious.insert(split.attr_name(a).to_string());
            }
            counts[a as usize] = 0;
        }
        entries.insert(class.clone(), spurious);
    }
    SpuriousCatalog { entries }
}

fn has(split: &DatasetSplit, sample: usize, attr: Option<AttrId>) -> bool {
    attr.is_some_and(|a| split.has_attr(sample, a))
}

/// Members of class `ci` lacking `own`, ascending by sample id.
pub(crate) fn intra_indices(split: &DatasetSplit, ci: usize, own: Option<AttrId>) -> Vec<usize> {
    split
        .members(ci)
        .iter()
        .copied()
        .filter(|&s| !has(split, s, own))
        .collect()
}

/// Members of class `ci` lacking `own` and carrying at least one of `others`.
pub(crate) fn union_indices(
    split: &DatasetSplit,
    ci: usize,
    own: Option<AttrId>,
    others: &[Option<AttrId>],
) -> Vec<usize> {
    split
        .members(ci)
        .iter()
        .copied()
        .filter(|&s| !has(split, s, own) && others.iter().any(|&o| has(split, s, o)))
        .collect()
}

fn ids(split: &DatasetSplit, idx: Vec<usize>) -> Vec<&str> {
    idx.into_iter().map(|i| split.sample_id(i)).collect()
}

/// Samples of `class` that do not carry `attribute`, ascending by id.
pub fn intra_candidates<'a>(split: &'a DatasetSplit, class: &str, attribute: &str) -> Result<Vec<&'a str>> {
    let ci = split.class_idx(class)?;
    Ok(ids(split, intra_indices(split, ci, split.attr_id(attribute))))
}

/// Samples of `class` without `attribute` that carry `other`, ascending by id.
pub fn inter_candidates<'a>(
    split: &'a DatasetSplit,
    class: &str,
    attribute: &str,
    other: &str,
) -> Result<Vec<&'a str>> {
    if attribute == other {
        return Err(Error::SameAttribute(attribute.to_string()));
    }
    let ci = split.class_idx(class)?;
    Ok(ids(
        split,
        union_indices(split, ci, split.attr_id(attribute), &[split.attr_id(other)]),
    ))
}

pub(crate) fn check_correlations(correlations: &[Correlation]) -> Result<()> {
    if correlations.len() < 2 {
        return Err(Error::ConstraintViolation(format!(
            "need at least 2 correlations, got {}",
            correlations.len()
        )));
    }
    let mut classes = HashSet::new();
    let mut attrs = HashSet::new();
    for c in correlations {
        if !classes.insert(c.class.as_str()) {
            return Err(Error::ConstraintViolation(format!("class `{}` repeated", c.class)));
        }
        if !attrs.insert(c.attribute.as_str()) {
            return Err(Error::ConstraintViolation(format!(
                "attribute `{}` repeated",
                c.attribute
            )));
        }
    }
    Ok(())
}

/// Union over every other correlation ⟨c′, a′⟩ of the inter-class pool of
/// `correlations[target]`, ascending by id.
pub fn union_candidates<'a>(
    split: &'a DatasetSplit,
    correlations: &[Correlation],
    target: usize,
) -> Result<Vec<&'a str>> {
    check_correlations(correlations)?;
    let Some(slot) = correlations.get(target) else {
        return Err(Error::ConstraintViolation(format!(
            "target index {target} out of range for {} correlations",
            correlations.len()
        )));
    };
    let ci = split.class_idx(&slot.class)?;
    let others: Vec<Option<AttrId>> = correlations
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target)
        .map(|(_, c)| split.attr_id(&c.attribute))
        .collect();
    Ok(ids(
        split,
        union_indices(split, ci, split.attr_id(&slot.attribute), &others),
    ))
}
