use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentParams;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::seed;
use crate::training::{build_batch_triplets, summarize, triplet_distances, Corpus, TripletStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub location: String,
    pub count: usize,
    pub accuracy: f64,
    pub mean_d_pos: f64,
    pub mean_d_neg: f64,
}

impl AccuracyRow {
    fn new(location: String, stats: TripletStats) -> Self {
        Self {
            location,
            count: stats.count,
            accuracy: stats.accuracy,
            mean_d_pos: stats.mean_d_pos,
            mean_d_neg: stats.mean_d_neg,
        }
    }
}

/// Per-location rows (sorted by location) and the overall row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub locations: Vec<AccuracyRow>,
    pub total: AccuracyRow,
}

/// Groups `(d_pos, d_neg)` pairs by the anchor's location.
pub fn accuracy_table(labels: &[String], distances: &[(f64, f64)]) -> AccuracyReport {
    let mut groups: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for (l, d) in labels.iter().zip(distances) {
        groups.entry(l.as_str()).or_default().push(*d);
    }
    AccuracyReport {
        locations: groups
            .into_iter()
            .map(|(l, d)| AccuracyRow::new(l.to_string(), summarize(&d, 0.0)))
            .collect(),
        total: AccuracyRow::new("total".to_string(), summarize(distances, 0.0)),
    }
}

/// Anchors are the scenes at `indices`, positives their augmentations, and
/// negatives other scenes from the same set. Passes over the set with fresh
/// augmentations and negatives until at least `min_triplets` are scored.
pub fn triplet_accuracy(
    params: &EncoderParams,
    corpus: &Corpus,
    indices: &[usize],
    aug: &AugmentParams,
    seed_value: u64,
    min_triplets: usize,
) -> Result<AccuracyReport> {
    if indices.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: indices.len(),
        });
    }
    let eval_aug = AugmentParams {
        seed: seed::derive(seed_value, "eval-augment", &[aug.seed]),
        ..*aug
    };
    let mut labels = Vec::new();
    let mut distances = Vec::new();
    let mut round = 0u64;
    while distances.is_empty() || distances.len() < min_triplets {
        let mut rng = seed::rng_for(seed_value, "eval-negatives", &[round]);
        let triplets = build_batch_triplets(corpus, indices, &eval_aug, round, &mut rng)?;
        labels.extend(triplets.iter().map(|t| t.anchor.location_label.clone()));
        distances.extend(triplet_distances(params, &triplets)?);
        round += 1;
    }
    Ok(accuracy_table(&labels, &distances))
}
