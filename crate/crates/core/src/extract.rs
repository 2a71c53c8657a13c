//! Caption text to attribute sets, and cross-annotator agreement.
//!
//! Captions come from an external captioning model. Attributes are the caption
//! words that a part-of-speech lexicon tags as nouns or adjectives.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSplit, SampleRecord};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tag {
    #[serde(rename = "NOUN")]
    Noun,
    #[serde(rename = "ADJ")]
    Adj,
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "NOUN" => Ok(Tag::Noun),
            "ADJ" => Ok(Tag::Adj),
            other => Err(format!("unknown tag `{other}` (expected NOUN or ADJ)")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, BTreeSet<Tag>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: &str, tag: Tag) {
        self.entries.entry(word.to_lowercase()).or_default().insert(tag);
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Tag)>) -> Self {
        let mut lex = Self::new();
        for (w, t) in pairs {
            lex.insert(w, t);
        }
        lex
    }

    pub fn tags(&self, word: &str) -> Option<&BTreeSet<Tag>> {
        self.entries.get(word)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `word<TAB>TAG` lines. Blank lines and lines starting with `#` are ignored.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lex = Self::new();
        for (n, line) in reader.lines().enumerate() {
            let line_no = n + 1;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (word, tag) = trimmed.split_once('\t').ok_or_else(|| Error::Parse {
                line: line_no,
                message: "expected `word<TAB>TAG`".into(),
            })?;
            let word = word.trim();
            if word.is_empty() || word.chars().any(|c| !c.is_alphabetic()) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("`{word}` is not a single alphabetic word"),
                });
            }
            let tag = tag.trim().parse::<Tag>().map_err(|message| Error::Parse {
                line: line_no,
                message,
            })?;
            lex.insert(word, tag);
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub id: String,
    pub caption: String,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExtractOptions {
    /// Retry an unknown token ending in `s` without the trailing `s`.
    pub strip_plural: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementScore {
    pub value: f64,
    pub images_scored: usize,
    pub images_skipped: usize,
}

pub fn extract_attributes(caption: &str, lexicon: &Lexicon) -> BTreeSet<String> {
    extract_attributes_with(caption, lexicon, ExtractOptions::default())
}

pub fn extract_attributes_with(
    caption: &str,
    lexicon: &Lexicon,
    opts: ExtractOptions,
) -> BTreeSet<String> {
    caption
        .split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .filter_map(|token| {
            let token = token.to_lowercase();
            if lexicon.contains(&token) {
                return Some(token);
            }
            if opts.strip_plural && token.len() > 1 {
                if let Some(stem) = token.strip_suffix('s') {
                    if lexicon.contains(stem) {
                        return Some(stem.to_string());
                    }
                }
            }
            None
        })
        .collect()
}

/// One record per caption, in caption order, with no embeddings.
pub fn annotate_split(
    captions: &[CaptionRecord],
    labels: &BTreeMap<String, String>,
    lexicon: &Lexicon,
    opts: ExtractOptions,
) -> Result<DatasetSplit> {
    let missing: BTreeSet<&str> = captions
        .iter()
        .filter(|c| !labels.contains_key(&c.id))
        .map(|c| c.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingLabels(missing.into_iter().map(String::from).collect()));
    }
    let samples = captions
        .iter()
        .map(|c| SampleRecord {
            id: c.id.clone(),
            class: labels[&c.id].clone(),
            attributes: extract_attributes_with(&c.caption, lexicon, opts),
            embedding: None,
        })
        .collect();
    DatasetSplit::new(samples)
}

/// Mean over images of |query ∩ ref| / |ref|, skipping images whose reference
/// set is empty. Not symmetric in its arguments.
pub fn agreement(query: &DatasetSplit, reference: &DatasetSplit) -> Result<AgreementScore> {
    let q_ids: HashSet<&str> = query.samples().iter().map(|s| s.id.as_str()).collect();
    let r_ids: HashSet<&str> = reference.samples().iter().map(|s| s.id.as_str()).collect();
    if q_ids != r_ids {
        let mut only_q: Vec<&str> = q_ids.difference(&r_ids).copied().collect();
        let mut only_r: Vec<&str> = r_ids.difference(&q_ids).copied().collect();
        only_q.sort_unstable();
        only_r.sort_unstable();
        return Err(Error::IdMismatch {
            only_query: only_q.len(),
            only_ref: only_r.len(),
            example: only_q.first().or(only_r.first()).unwrap_or(&"").to_string(),
        });
    }

    let mut refs: Vec<&SampleRecord> = reference.samples().iter().collect();
    refs.sort_by(|a, b| a.id.cmp(&b.id));

    let mut sum = 0.0;
    let mut scored = 0;
    let mut skipped = 0;
    for r in refs {
        if r.attributes.is_empty() {
            skipped += 1;
            continue;
        }
        let q = query.get(&r.id).expect("id sets checked above");
        let hits = r.attributes.intersection(&q.attributes).count();
        sum += hits as f64 / r.attributes.len() as f64;
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::Undefined("every reference attribute set is empty".into()));
    }
    Ok(AgreementScore {
        value: sum / scored as f64,
        images_scored: scored,
        images_skipped: skipped,
    })
}

fn read_jsonl<T, R>(reader: R) -> Result<Vec<T>>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_captions<R: BufRead>(reader: R) -> Result<Vec<CaptionRecord>> {
    let captions: Vec<CaptionRecord> = read_jsonl(reader)?;
    if let Some(c) = captions.iter().find(|c| c.id.is_empty()) {
        return Err(Error::InvalidRecord(format!("caption `{}` has an empty id", c.caption)));
    }
    Ok(captions)
}

pub fn load_captions(path: impl AsRef<Path>) -> Result<Vec<CaptionRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_captions(BufReader::new(file))
}

#[derive(Deserialize)]
struct LabelLine {
    id: String,
    class: String,
}

/// labels-jsonl: `{"id": ..., "class": ...}` per line. Conflicting labels for one id are rejected.
pub fn read_labels<R: BufRead>(reader: R) -> Result<BTreeMap<String, String>> {
    let mut labels = BTreeMap::new();
    for l in read_jsonl::<LabelLine, _>(reader)? {
        if let Some(prev) = labels.insert(l.id.clone(), l.class.clone()) {
            if prev != l.class {
                return Err(Error::InvalidRecord(format!(
                    "id `{}` labelled both `{prev}` and `{}`",
                    l.id, l.class
                )));
            }
        }
    }
    Ok(labels)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels(BufReader::new(file))
}
