//! Few-shot episodes with controlled spurious correlations.
//!
//! Samples carry a set of textual attributes. For every class, the attributes
//! that occur in some but not all of its samples are spurious for it. An
//! episode ties each of its classes to one such attribute, shows support
//! samples that carry it, and asks about query samples that lack it while
//! carrying another class's attribute. A classifier that leans on the
//! attributes rather than on the class fails those queries; the worst class
//! accuracy per episode measures how much.

pub mod catalog;
pub mod data;
pub mod error;
pub mod eval;
pub mod extract;
pub mod rng;
pub mod synth;
pub mod task;
pub mod validate;

pub use catalog::{build_catalog, inter_candidates, intra_candidates, union_candidates, Correlation, SpuriousCatalog};
pub use data::{class_samples, load_split, read_split, split_stats, write_split, DatasetSplit, SampleRecord, SplitFormat, SplitStats};
pub use error::{Error, Result};
pub use extract::{agreement, annotate_split, extract_attributes, AgreementScore, CaptionRecord, Lexicon, Tag};
pub use rng::{derive_seed, SplitMix64, Xoshiro256StarStar};
pub use task::{
    attribute_prevalence, build_query, build_random_task, build_suite, build_support, build_task, likelihood_score,
    select_correlations, BuildConfig, ClassSlot, Mode, QueryVariant, SupportVariant, TaskBuilder, TaskSpec, TaskSuite,
};
pub use eval::{
    accuracy_gap, oracle_classify, prototype_classify, render_markdown, score_suite, spearman_rho, FallbackPolicy,
    OracleRules, PredictionSet, SuiteReport, TaskResult,
};
pub use synth::{generate_split, SynthConfig};
pub use validate::{validate_suite, Validator, Violation};
