//! Training on synthetic scenes, then discrimination, probes and clustering
//! on the trained encoder.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use scene_embed::analysis::{
    adjusted_rand_index, probe_regress, select_clusters, triplet_accuracy, umap_lite, ProbeConfig, UmapConfig,
};
use scene_embed::augment::AugmentParams;
use scene_embed::encoder::{encode_batch, EncoderConfig, EncoderParams};
use scene_embed::graph::{graph_level_features, GraphParams, SceneGraph};
use scene_embed::seed;
use scene_embed::synth::{generate_dataset, ScenarioTemplate, SynthConfig};
use scene_embed::training::{split_indices, train, Corpus, TrainConfig};

const SEED: u64 = 0;
const PER_TEMPLATE: usize = 100;
const MIN_TRIPLETS: usize = 500;

pub struct Trained {
    pub corpus: Corpus,
    pub params: EncoderParams,
}

type Outcome = std::result::Result<String, String>;

fn verdict(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Trains on all five templates and scores holdout triplets before and
/// after training.
pub fn discrimination() -> (Outcome, Option<Trained>) {
    let start = Instant::now();
    let counts: Vec<_> = ScenarioTemplate::ALL.iter().map(|&t| (t, PER_TEMPLATE)).collect();
    let set = match generate_dataset(&SynthConfig::with_counts(SEED, &counts)) {
        Ok(s) => s,
        Err(e) => return (Err(e.to_string()), None),
    };
    let corpus = match Corpus::build(set, GraphParams::default()) {
        Ok(c) => c,
        Err(e) => return (Err(e.to_string()), None),
    };
    let splits = split_indices(corpus.len(), SEED);
    let config = TrainConfig {
        epochs: 100,
        batch_size: 64,
        ..TrainConfig::default()
    };
    let aug = AugmentParams::default();
    let init = EncoderParams::new(EncoderConfig::default(), &mut seed::rng_for(SEED, "encoder-init", &[]));
    let outcome = match train(&corpus, &splits.train, &splits.validation, &config, &aug, init.clone(), &mut ()) {
        Ok(o) => o,
        Err(e) => return (Err(e.to_string()), None),
    };
    let score = |p: &EncoderParams| triplet_accuracy(p, &corpus, &splits.holdout, &aug, SEED, MIN_TRIPLETS);
    let (trained, untrained) = match (score(&outcome.best), score(&init)) {
        (Ok(a), Ok(b)) => (a.total, b.total),
        (Err(e), _) | (_, Err(e)) => return (Err(e.to_string()), None),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let trained_ok = trained.accuracy >= 0.95 && trained.mean_d_pos < trained.mean_d_neg - config.margin;
    let baseline_ok = (untrained.accuracy - 0.5).abs() <= 0.1;
    let time_ok = elapsed < 15.0 * 60.0;
    let msg = format!(
        "{} scenes, best epoch {:?}: trained holdout accuracy {:.3} (d+ {:.3}, d- {:.3}, {} triplets){}; \
         untrained accuracy {:.3} (d+ {:.3}, d- {:.3}){}; {elapsed:.0} s{}",
        corpus.len(),
        outcome.best_epoch,
        trained.accuracy,
        trained.mean_d_pos,
        trained.mean_d_neg,
        trained.count,
        if trained_ok { "" } else { " [below target]" },
        untrained.accuracy,
        untrained.mean_d_pos,
        untrained.mean_d_neg,
        if baseline_ok { "" } else { " [outside 0.5 +- 0.1]" },
        if time_ok { "" } else { " [over 15 min]" },
    );
    let result = verdict(trained_ok && baseline_ok && time_ok, msg);
    (
        result,
        Some(Trained {
            corpus,
            params: outcome.best,
        }),
    )
}

pub fn probes(t: &Trained) -> Outcome {
    let graphs: Vec<SceneGraph> = t.corpus.samples.iter().map(|s| s.graph.clone()).collect();
    let emb = encode_batch(&t.params, &graphs).map_err(|e| e.to_string())?;
    let feats: Vec<_> = graphs.iter().map(graph_level_features).collect();
    let v_car: Vec<f64> = feats.iter().map(|f| f.v_car).collect();
    let speed: Vec<f64> = feats.iter().map(|f| f.mean_speed).collect();
    let config = ProbeConfig::default();
    let probe = |y: &[f64]| probe_regress(&emb, y, &config, SEED).map_err(|e| e.to_string());
    let shuffled = |y: &[f64]| {
        let mut y = y.to_vec();
        y.shuffle(&mut seed::rng_for(SEED, "shuffle-targets", &[]));
        y
    };
    let car = probe(&v_car)?;
    let spd = probe(&speed)?;
    let car_sh = probe(&shuffled(&v_car))?;
    let spd_sh = probe(&shuffled(&speed))?;
    let spread_ok = car.target_std >= 2.0;
    let car_ok = car.mae < 1.0;
    let spd_ok = spd.mae < 0.5 * spd.target_std;
    let shuffled_fail = car_sh.mae >= 1.0 && spd_sh.mae >= 0.5 * spd_sh.target_std;
    verdict(
        spread_ok && car_ok && spd_ok && shuffled_fail,
        format!(
            "|V_car| MAE {:.3} (std {:.2}), mean speed MAE {:.3} (0.5 std {:.3}); shuffled: |V_car| MAE {:.3}, mean speed MAE {:.3}",
            car.mae,
            car.target_std,
            spd.mae,
            0.5 * spd.target_std,
            car_sh.mae,
            spd_sh.mae
        ),
    )
}

const PLANTED: [ScenarioTemplate; 4] = [
    ScenarioTemplate::StraightFollowing,
    ScenarioTemplate::MergeLane,
    ScenarioTemplate::FourWayIntersection,
    ScenarioTemplate::QueueJam,
];

pub fn clustering(t: &Trained) -> Outcome {
    let counts: Vec<_> = PLANTED.iter().map(|&p| (p, 60)).collect();
    let set = generate_dataset(&SynthConfig::with_counts(SEED + 1, &counts)).map_err(|e| e.to_string())?;
    let corpus = Corpus::build(set, GraphParams::default()).map_err(|e| e.to_string())?;
    let graphs: Vec<SceneGraph> = corpus.samples.iter().map(|s| s.graph.clone()).collect();
    let emb = encode_batch(&t.params, &graphs).map_err(|e| e.to_string())?;
    let mut label_ids = BTreeMap::new();
    let truth: Vec<usize> = graphs
        .iter()
        .map(|g| {
            let next = label_ids.len();
            *label_ids.entry(g.location_label.clone()).or_insert(next)
        })
        .collect();
    let pipeline = || -> scene_embed::Result<(Vec<Vec<f64>>, _)> {
        let reduced = umap_lite(&emb, &UmapConfig::default(), SEED)?;
        let report = select_clusters(&reduced)?;
        Ok((reduced, report))
    };
    let (reduced, report) = pipeline().map_err(|e| e.to_string())?;
    let (reduced2, report2) = pipeline().map_err(|e| e.to_string())?;
    let deterministic = reduced == reduced2 && report == report2;
    let ari = adjusted_rand_index(&report.assignments, &truth).map_err(|e| e.to_string())?;
    // the same selection on the raw embeddings, for the log line only
    let raw = select_clusters(&emb).map_err(|e| e.to_string())?;
    let raw_ari = adjusted_rand_index(&raw.assignments, &truth).map_err(|e| e.to_string())?;
    let sil = report.best_silhouette();
    verdict(
        report.selected == 4 && sil > 0.5 && ari > 0.8 && deterministic,
        format!(
            "{} scenes of 4 templates: selected k={} silhouette {:.3} ARI {:.3}, deterministic {deterministic} \
             (raw embeddings: k={} silhouette {:.3} ARI {:.3})",
            emb.len(),
            report.selected,
            sil,
            ari,
            raw.selected,
            raw.best_silhouette(),
            raw_ari
        ),
    )
}
