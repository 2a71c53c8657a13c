//! Attribute-annotated dataset splits.
//!
//! A split is immutable once built. Alongside the public records it keeps an
//! interned view (attribute ids, per-class member lists sorted by sample id)
//! that the catalog and task builder use on hot paths.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) type AttrId = u32;

/// One annotated test image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub class: String,
    pub attributes: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl SampleRecord {
    pub fn new<I, S>(id: impl Into<String>, class: impl Into<String>, attributes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            id: id.into(),
            class: class.into(),
            attributes: attributes.into_iter().map(Into::into).collect(),
            embedding: None,
        }
    }

    pub fn with_embedding(mut self, embedding: Vec<f64>) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn has(&self, attribute: &str) -> bool {
        self.attributes.contains(attribute)
    }
}

/// On-disk formats accepted by [`load_split`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitFormat {
    AttributeJsonl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub unique_attribute_count: usize,
    pub avg_attributes_per_class: f64,
}

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    samples: Vec<SampleRecord>,
    classes: Vec<String>,
    vocabulary: Vec<String>,
    embedding_dim: Option<usize>,

    attr_index: HashMap<String, AttrId>,
    class_index: HashMap<String, usize>,
    id_index: HashMap<String, usize>,
    sample_attrs: Vec<Vec<AttrId>>,
    sample_class: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl PartialEq for DatasetSplit {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples
    }
}

fn check_attribute(id: &str, attr: &str) -> Result<String> {
    let lowered = attr.to_lowercase();
    if lowered.is_empty() {
        return Err(Error::InvalidRecord(format!("sample `{id}` has an empty attribute")));
    }
    if lowered.chars().any(char::is_whitespace) {
        return Err(Error::InvalidRecord(format!(
            "sample `{id}` attribute `{attr}` contains whitespace"
        )));
    }
    Ok(lowered)
}

impl DatasetSplit {
    /// Validates and indexes `samples`. Attribute strings are lowercased.
    pub fn new(mut samples: Vec<SampleRecord>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySplit);
        }

        let mut id_index = HashMap::with_capacity(samples.len());
        let mut embedding_dim: Option<Option<usize>> = None;
        for (i, s) in samples.iter_mut().enumerate() {
            if s.id.is_empty() {
                return Err(Error::InvalidRecord(format!("sample #{i} has an empty id")));
            }
            if s.class.is_empty() {
                return Err(Error::InvalidRecord(format!("sample `{}` has an empty class", s.id)));
            }
            if s.attributes.iter().any(|a| a.is_empty() || a.chars().any(|c| c.is_whitespace() || c.is_uppercase())) {
                s.attributes = std::mem::take(&mut s.attributes)
                    .iter()
                    .map(|a| check_attribute(&s.id, a))
                    .collect::<Result<_>>()?;
            }
            let dim = s.embedding.as_ref().map(Vec::len);
            if let Some(v) = &s.embedding {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidRecord(format!(
                        "sample `{}` has a non-finite embedding value",
                        s.id
                    )));
                }
            }
            match embedding_dim {
                None => embedding_dim = Some(dim),
                Some(expected) if expected != dim => {
                    return Err(Error::DimensionMismatch {
                        id: s.id.clone(),
                        expected: expected.unwrap_or(0),
                        found: dim.unwrap_or(0),
                    });
                }
                Some(_) => {}
            }
            if id_index.insert(s.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }

        let classes: Vec<String> = samples
            .iter()
            .map(|s| s.class.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_string)
            .collect();
        let vocabulary: Vec<String> = samples
            .iter()
            .flat_map(|s| s.attributes.iter().map(String::as_str))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_string)
            .collect();

        let class_index: HashMap<String, usize> =
            classes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        let attr_index: HashMap<String, AttrId> = vocabulary
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i as AttrId))
            .collect();

        // BTreeSet iteration is sorted and vocabulary ids follow string order,
        // so each per-sample id list comes out sorted.
        let sample_attrs: Vec<Vec<AttrId>> = samples
            .iter()
            .map(|s| s.attributes.iter().map(|a| attr_index[a]).collect())
            .collect();
        let sample_class: Vec<usize> = samples.iter().map(|s| class_index[&s.class]).collect();

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
        for (i, &c) in sample_class.iter().enumerate() {
            members[c].push(i);
        }
        for m in &mut members {
            m.sort_by(|&a, &b| samples[a].id.cmp(&samples[b].id));
        }

        Ok(Self {
            samples,
            classes,
            vocabulary,
            embedding_dim: embedding_dim.flatten(),
            attr_index,
            class_index,
            id_index,
            sample_attrs,
            sample_class,
            members,
        })
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Class ids in ascending order.
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Every attribute occurring in the split, ascending.
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding_dim
    }

    pub fn get(&self, id: &str) -> Option<&SampleRecord> {
        self.id_index.get(id).map(|&i| &self.samples[i])
    }

    pub fn contains_class(&self, class: &str) -> bool {
        self.class_index.contains_key(class)
    }

    pub(crate) fn index_of(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    pub(crate) fn class_idx(&self, class: &str) -> Result<usize> {
        self.class_index
            .get(class)
            .copied()
            .ok_or_else(|| Error::UnknownClass(class.to_string()))
    }

    pub(crate) fn attr_id(&self, attribute: &str) -> Option<AttrId> {
        self.attr_index.get(attribute).copied()
    }

    pub(crate) fn attr_name(&self, id: AttrId) -> &str {
        &self.vocabulary[id as usize]
    }

    pub(crate) fn attrs_of(&self, sample: usize) -> &[AttrId] {
        &self.sample_attrs[sample]
    }

    pub(crate) fn has_attr(&self, sample: usize, attr: AttrId) -> bool {
        self.sample_attrs[sample].binary_search(&attr).is_ok()
    }

    /// Sample indices of class `class_idx`, ascending by sample id.
    pub(crate) fn members(&self, class_idx: usize) -> &[usize] {
        &self.members[class_idx]
    }

    pub(crate) fn sample_id(&self, sample: usize) -> &str {
        &self.samples[sample].id
    }
}

#[derive(Deserialize)]
struct RawSample {
    id: String,
    class: String,
    #[serde(default)]
    attributes: Vec<String>,
    #[serde(default)]
    embedding: Option<Vec<f64>>,
}

/// Reads attribute-jsonl records. Blank lines are skipped; attribute arrays are
/// lowercased and deduplicated.
pub fn read_split<R: BufRead>(reader: R) -> Result<DatasetSplit> {
    let mut samples = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let attributes = raw
            .attributes
            .iter()
            .map(|a| check_attribute(&raw.id, a))
            .collect::<Result<BTreeSet<_>>>()
            .map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        if !seen.insert(raw.id.clone()) {
            return Err(Error::DuplicateId(raw.id));
        }
        samples.push(SampleRecord {
            id: raw.id,
            class: raw.class,
            attributes,
            embedding: raw.embedding,
        });
    }
    DatasetSplit::new(samples)
}

pub fn load_split(path: impl AsRef<Path>, format: SplitFormat) -> Result<DatasetSplit> {
    let path = path.as_ref();
    match format {
        SplitFormat::AttributeJsonl => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            read_split(BufReader::new(file))
        }
    }
}

/// Writes one JSON object per sample, in split order, LF-terminated.
pub fn write_split<W: Write>(split: &DatasetSplit, mut out: W) -> Result<()> {
    for s in split.samples() {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

/// Records of `class`, ascending by sample id.
pub fn class_samples<'a>(split: &'a DatasetSplit, class: &str) -> Result<Vec<&'a SampleRecord>> {
    let ci = split.class_idx(class)?;
    Ok(split.members(ci).iter().map(|&i| &split.samples[i]).collect())
}

pub fn split_stats(split: &DatasetSplit) -> SplitStats {
    let mut per_class: BTreeMap<usize, BTreeSet<AttrId>> = BTreeMap::new();
    for (i, attrs) in split.sample_attrs.iter().enumerate() {
        per_class
            .entry(split.sample_class[i])
            .or_default()
            .extend(attrs.iter().copied());
    }
    let total: usize = per_class.values().map(BTreeSet::len).sum();
    SplitStats {
        unique_attribute_count: split.vocabulary.len(),
        avg_attributes_per_class: total as f64 / split.classes.len() as f64,
    }
}
