//! Synthetic splits with known spurious correlations.
//!
//! Class k plants `pl_k` on an exact fraction of its samples. Every sample may
//! also pick up other classes' planted attributes (cross contamination) and
//! background attributes `bg_j`, each independently. Embeddings sit around
//! well separated class centroids, so a nearest-prototype classifier is
//! perfect whenever the noise is small.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::build_catalog;
use crate::data::{DatasetSplit, SampleRecord};
use crate::error::{Error, Result};
use crate::rng::Xoshiro256StarStar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    /// Fraction of a class's samples carrying its planted attribute.
    pub planted_rate: f64,
    pub background_pool_size: usize,
    pub background_rate: f64,
    /// Probability that a sample carries any one other class's planted attribute.
    pub cross_rate: f64,
    /// 0 produces a split without embeddings.
    pub embedding_dim: usize,
    pub class_separation: f64,
    pub within_class_noise: f64,
    #[serde(with = "crate::task::seed_string")]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 20,
            samples_per_class: 200,
            planted_rate: 0.9,
            background_pool_size: 50,
            background_rate: 0.05,
            cross_rate: 0.3,
            embedding_dim: 32,
            class_separation: 10.0,
            within_class_noise: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Samples per class that carry the planted attribute.
    pub fn planted_count(&self) -> usize {
        // guard against 0.9 * 100 landing a hair above 90
        (self.planted_rate * self.samples_per_class as f64 - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_classes < 2 {
            return bad("need at least 2 classes".into());
        }
        if !(self.planted_rate > 0.0 && self.planted_rate < 1.0) {
            return bad(format!("planted_rate {} outside (0, 1)", self.planted_rate));
        }
        for (name, v) in [("background_rate", self.background_rate), ("cross_rate", self.cross_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        let k = self.planted_count();
        if k == 0 || k >= self.samples_per_class {
            return bad(format!(
                "planting {k} of {} samples leaves the attribute non-spurious",
                self.samples_per_class
            ));
        }
        if self.embedding_dim > 0 {
            if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
                return bad("class_separation must be positive".into());
            }
            if !(self.within_class_noise >= 0.0 && self.within_class_noise.is_finite()) {
                return bad("within_class_noise must be non-negative".into());
            }
        }
        Ok(())
    }
}

pub fn planted_attribute(class: usize) -> String {
    format!("pl_{class}")
}

fn width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(3)
}

/// Indices in `0..n` each kept independently with probability `p`, visited by
/// geometric skips so sparse draws cost O(hits).
fn bernoulli_indices(rng: &mut Xoshiro256StarStar, n: usize, p: f64) -> Vec<usize> {
    if p <= 0.0 || n == 0 {
        return Vec::new();
    }
    if p >= 1.0 {
        return (0..n).collect();
    }
    let log_q = (1.0 - p).ln();
    let mut out = Vec::new();
    let mut i = 0usize;
    loop {
        let u = 1.0 - rng.next_f64();
        let skip = (u.ln() / log_q).floor();
        if skip >= (n - i) as f64 {
            break;
        }
        i += skip as usize;
        out.push(i);
        i += 1;
        if i >= n {
            break;
        }
    }
    out
}

fn centroids(cfg: &SynthConfig, rng: &mut Xoshiro256StarStar) -> Result<Vec<Vec<f64>>> {
    let (k, d, sep) = (cfg.num_classes, cfg.embedding_dim, cfg.class_separation);
    if d >= k {
        // scaled one-hot vectors are exactly `sep` apart
        let s = sep / std::f64::consts::SQRT_2;
        return Ok((0..k)
            .map(|c| (0..d).map(|j| if j == c { s } else { 0.0 }).collect())
            .collect());
    }
    let spread = 2.0 * sep * (k as f64).powf(1.0 / d as f64);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    for c in 0..k {
        let mut tries = 0;
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.normal() * spread).collect();
            let far = out
                .iter()
                .all(|o| o.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= sep);
            if far {
                out.push(v);
                break;
            }
            tries += 1;
            if tries == 10_000 {
                return Err(Error::InvalidConfig(format!(
                    "could not place centroid {c} at separation {sep} in {d} dimensions"
                )));
            }
        }
    }
    Ok(out)
}

/// A split and its planted map (class id → planted attribute).
pub fn generate_split(cfg: &SynthConfig) -> Result<(DatasetSplit, BTreeMap<String, String>)> {
    cfg.validate()?;
    let mut rng = Xoshiro256StarStar::seed_from_u64(cfg.seed);
    let n = cfg.samples_per_class;
    let k = cfg.planted_count();
    let cw = width(cfg.num_classes);
    let sw = width(cfg.num_classes * n);
    let class_id = |c: usize| format!("class_{c:0cw$}");

    let centers = if cfg.embedding_dim > 0 {
        Some(centroids(cfg, &mut rng)?)
    } else {
        None
    };

    let planted_names: Vec<String> = (0..cfg.num_classes).map(planted_attribute).collect();
    let background_names: Vec<String> = (0..cfg.background_pool_size).map(|b| format!("bg_{b}")).collect();
    let mut samples = Vec::with_capacity(cfg.num_classes * n);
    let mut planted = BTreeMap::new();
    for c in 0..cfg.num_classes {
        planted.insert(class_id(c), planted_attribute(c));
        let mut carries = vec![false; n];
        for i in rng.sample(n, k) {
            carries[i] = true;
        }
        for (i, &has_own) in carries.iter().enumerate() {
            let mut attrs = Vec::new();
            if has_own {
                attrs.push(planted_names[c].clone());
            }
            for o in bernoulli_indices(&mut rng, cfg.num_classes - 1, cfg.cross_rate) {
                let other = if o < c { o } else { o + 1 };
                attrs.push(planted_names[other].clone());
            }
            for b in bernoulli_indices(&mut rng, cfg.background_pool_size, cfg.background_rate) {
                attrs.push(background_names[b].clone());
            }
            let mut record = SampleRecord::new(format!("s{:0sw$}", c * n + i), class_id(c), attrs);
            if let Some(centers) = &centers {
                let e = centers[c]
                    .iter()
                    .map(|&x| {
                        if cfg.within_class_noise > 0.0 {
                            x + cfg.within_class_noise * rng.normal()
                        } else {
                            x
                        }
                    })
                    .collect();
                record = record.with_embedding(e);
            }
            samples.push(record);
        }
    }

    let split = DatasetSplit::new(samples)?;
    let catalog = build_catalog(&split);
    for (c, a) in &planted {
        if !catalog.get(c).is_some_and(|s| s.contains(a)) {
            return Err(Error::InvalidConfig(format!("planted {a} is not spurious for {c}")));
        }
    }
    Ok((split, planted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            num_classes: 4,
            samples_per_class: 100,
            embedding_dim: 8,
            ..Default::default()
        }
    }

    #[test]
    fn exact_planting() {
        let (split, planted) = generate_split(&small()).unwrap();
        for (c, a) in &planted {
            let n = split.samples().iter().filter(|s| &s.class == c && s.has(a)).count();
            assert_eq!(n, 90);
        }
    }

    #[test]
    fn noiseless_embeddings_collapse() {
        let cfg = SynthConfig {
            within_class_noise: 0.0,
            ..small()
        };
        let (split, _) = generate_split(&cfg).unwrap();
        for c in split.classes() {
            let embs: Vec<_> = split.samples().iter().filter(|s| &s.class == c).map(|s| s.embedding.clone()).collect();
            assert!(embs.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn low_dimensional_centroids_separated() {
        let cfg = SynthConfig {
            num_classes: 6,
            embedding_dim: 2,
            within_class_noise: 0.0,
            ..small()
        };
        let (split, _) = generate_split(&cfg).unwrap();
        let mut cents: Vec<Vec<f64>> = Vec::new();
        for c in split.classes() {
            cents.push(split.samples().iter().find(|s| &s.class == c).unwrap().embedding.clone().unwrap());
        }
        for i in 0..cents.len() {
            for j in 0..i {
                let d: f64 = cents[i].iter().zip(&cents[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(d >= cfg.class_separation);
            }
        }
    }

    #[test]
    fn infeasible_rates() {
        for rate in [1e-13, 0.9999, 0.0, 1.0] {
            let cfg = SynthConfig {
                planted_rate: rate,
                ..small()
            };
            assert!(generate_split(&cfg).is_err(), "{rate}");
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate_split(&small()).unwrap();
        let b = generate_split(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_split(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn bernoulli_indices_rate() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(9);
        let total: usize = (0..2000).map(|_| bernoulli_indices(&mut rng, 100, 0.05).len()).sum();
        let mean = total as f64 / 2000.0;
        assert!((mean - 5.0).abs() < 0.2, "{mean}");
        assert_eq!(bernoulli_indices(&mut rng, 10, 1.0).len(), 10);
        assert!(bernoulli_indices(&mut rng, 10, 0.0).is_empty());
    }

    #[test]
    fn config_json_partial() {
        let cfg: SynthConfig = serde_json::from_str(r#"{"num_classes": 3, "seed": "7"}"#).unwrap();
        assert_eq!(cfg.num_classes, 3);
        assert_eq!(cfg.seed, 7);
        assert!(serde_json::from_str::<SynthConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
