//! Triplet construction, the margin loss, and the training loop.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_scene, AugmentParams};
use crate::encoder::{encode_backward, encode_with_tape, EncoderParams, Embedding};
use crate::error::{Error, Result};
use crate::graph::{build_scene_graph, GraphParams, SceneGraph};
use crate::nn::{Adam, AdamConfig, Mode, Parameters};
use crate::scene::{SceneSet, TrafficScene};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub margin: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            margin: 0.5,
            batch_size: 400,
            epochs: 400,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.margin > 0.0 && self.batch_size > 0) {
            return Err(Error::Config(
                "learning_rate, margin and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn check_widths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("embedding width {}", a.len()), b.len()));
    }
    Ok(())
}

/// `||b - a||_2`
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_widths(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt())
}

/// `max(d(s0, s+) - d(s0, s-) + margin, 0)`
pub fn triplet_loss(anchor: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> Result<f64> {
    let dp = euclidean_distance(anchor, positive)?;
    let dn = euclidean_distance(anchor, negative)?;
    Ok((dp - dn + margin).max(0.0))
}

/// Loss and its gradients with respect to the three embeddings. The
/// distance gradient at zero distance is taken as zero.
pub fn triplet_loss_grad(
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
    margin: f64,
) -> Result<(f64, [Vec<f64>; 3])> {
    check_widths(anchor, negative)?;
    let dp = euclidean_distance(anchor, positive)?;
    let dn = euclidean_distance(anchor, negative)?;
    let raw = dp - dn + margin;
    let w = anchor.len();
    let mut grads = [vec![0.0; w], vec![0.0; w], vec![0.0; w]];
    if raw <= 0.0 {
        return Ok((0.0, grads));
    }
    for k in 0..w {
        // d dp / d positive = (p - a)/dp ; d dn / d negative = (n - a)/dn
        let gp = if dp > 0.0 { (positive[k] - anchor[k]) / dp } else { 0.0 };
        let gn = if dn > 0.0 { (negative[k] - anchor[k]) / dn } else { 0.0 };
        grads[1][k] = gp;
        grads[2][k] = -gn;
        grads[0][k] = -gp + gn;
    }
    Ok((raw, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub anchor: SceneGraph,
    pub positive: SceneGraph,
    pub negative: SceneGraph,
}

/// A scene with its graph, the unit the training loop works on.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub scene: TrafficScene,
    pub graph: SceneGraph,
}

/// Scenes, their maps and their graphs.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub set: SceneSet,
    pub samples: Vec<Sample>,
    pub graph_params: GraphParams,
}

impl Corpus {
    pub fn build(set: SceneSet, graph_params: GraphParams) -> Result<Self> {
        let samples = set
            .scenes
            .par_iter()
            .map(|scene| {
                let map = set.map_for(scene)?;
                Ok(Sample {
                    scene: scene.clone(),
                    graph: build_scene_graph(scene, map, &graph_params)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            set,
            samples,
            graph_params,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Graph of an augmented copy of sample `i`.
    pub fn augmented_graph(&self, i: usize, aug: &AugmentParams) -> Result<SceneGraph> {
        let scene = &self.samples[i].scene;
        let map = self.set.map_for(scene)?;
        build_scene_graph(&augment_scene(scene, aug), map, &self.graph_params)
    }
}

/// For each batch member: the anchor graph, the graph of an augmented copy
/// (seeded per scene from `aug` and `stream`), and a negative drawn
/// uniformly from the other members.
pub fn build_batch_triplets(
    corpus: &Corpus,
    batch: &[usize],
    aug: &AugmentParams,
    stream: u64,
    rng: &mut Rng,
) -> Result<Vec<Triplet>> {
    if batch.len() < 2 {
        return Err(Error::BatchTooSmall(batch.len()));
    }
    let negatives = draw_negatives(batch.len(), rng);
    let positives = batch
        .par_iter()
        .map(|&i| corpus.augmented_graph(i, &aug.for_scene(stream, &corpus.samples[i].scene.scene_id)))
        .collect::<Result<Vec<_>>>()?;
    Ok(batch
        .iter()
        .zip(positives)
        .zip(negatives)
        .map(|((&i, positive), j)| {
            let negative = &corpus.samples[batch[j]];
            debug_assert_ne!(negative.scene.scene_id, corpus.samples[i].scene.scene_id);
            Triplet {
                anchor: corpus.samples[i].graph.clone(),
                positive,
                negative: negative.graph.clone(),
            }
        })
        .collect())
}

/// Uniform index in `0..n` excluding the position itself, per position.
pub fn draw_negatives(n: usize, rng: &mut Rng) -> Vec<usize> {
    (0..n)
        .map(|i| {
            let r = rng.random_range(0..n - 1);
            if r >= i {
                r + 1
            } else {
                r
            }
        })
        .collect()
}

/// Loss of one triplet and (when `grads` is given) accumulated gradients.
pub fn triplet_step(
    params: &EncoderParams,
    triplet: &Triplet,
    margin: f64,
    dropout_rng: Option<&mut Rng>,
    grads: Option<&mut EncoderParams>,
) -> Result<f64> {
    let graphs = [&triplet.anchor, &triplet.positive, &triplet.negative];
    let mut embeddings = Vec::with_capacity(3);
    let mut tapes = Vec::with_capacity(3);
    let mut rng = dropout_rng;
    for g in graphs {
        let mode = match rng.as_deref_mut() {
            Some(r) => Mode::Train(r),
            None => Mode::Eval,
        };
        let (e, t) = encode_with_tape(params, g, mode)?;
        embeddings.push(e);
        tapes.push(t);
    }
    let (loss, d) = triplet_loss_grad(&embeddings[0], &embeddings[1], &embeddings[2], margin)?;
    if let Some(grads) = grads {
        if loss > 0.0 {
            for ((g, t), de) in graphs.iter().zip(&tapes).zip(&d) {
                encode_backward(params, g, t, de, grads)?;
            }
        }
    }
    Ok(loss)
}

/// Triplet evaluation in evaluation mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TripletStats {
    pub count: usize,
    pub mean_loss: f64,
    /// Fraction with `d(s0, s+) < d(s0, s-)`.
    pub accuracy: f64,
    pub mean_d_pos: f64,
    pub mean_d_neg: f64,
}

pub fn triplet_distances(params: &EncoderParams, triplets: &[Triplet]) -> Result<Vec<(f64, f64)>> {
    triplets
        .par_iter()
        .map(|t| {
            let e: Vec<Embedding> = [&t.anchor, &t.positive, &t.negative]
                .iter()
                .map(|g| crate::encoder::encode(params, g, Mode::Eval))
                .collect::<Result<_>>()?;
            Ok((euclidean_distance(&e[0], &e[1])?, euclidean_distance(&e[0], &e[2])?))
        })
        .collect()
}

pub fn summarize(distances: &[(f64, f64)], margin: f64) -> TripletStats {
    let n = distances.len();
    if n == 0 {
        return TripletStats::default();
    }
    let nf = n as f64;
    TripletStats {
        count: n,
        mean_loss: distances.iter().map(|(p, q)| (p - q + margin).max(0.0)).sum::<f64>() / nf,
        accuracy: distances.iter().filter(|(p, q)| p < q).count() as f64 / nf,
        mean_d_pos: distances.iter().map(|d| d.0).sum::<f64>() / nf,
        mean_d_neg: distances.iter().map(|d| d.1).sum::<f64>() / nf,
    }
}

/// Index sets of the holdout / train / validation split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub holdout: Vec<usize>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// 20% holdout, then 80/20 train/validation of the rest, shuffled under
/// `seed`. Each index list is sorted.
pub fn split_indices(n: usize, seed_value: u64) -> Splits {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng_for(seed_value, "split", &[]));
    let n_holdout = (n as f64 * 0.2).round() as usize;
    let rest = n - n_holdout;
    let n_val = (rest as f64 * 0.2).round() as usize;
    let mut holdout = idx[..n_holdout].to_vec();
    let mut validation = idx[n_holdout..n_holdout + n_val].to_vec();
    let mut train = idx[n_holdout + n_val..].to_vec();
    holdout.sort_unstable();
    validation.sort_unstable();
    train.sort_unstable();
    Splits {
        holdout,
        train,
        validation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: EncoderParams,
    pub best_epoch: Option<usize>,
    pub last: EncoderParams,
    pub optimizer: Adam,
    pub history: Vec<EpochRecord>,
}

/// Training-progress hook: called after every epoch with the record, and
/// whether the epoch improved on the best validation score.
pub trait TrainObserver {
    fn epoch_end(&mut self, _record: &EpochRecord, _improved: bool, _params: &EncoderParams, _adam: &Adam) {}
}

impl TrainObserver for () {}

/// Triplets are accumulated in fixed-size chunks so the floating-point
/// reduction order does not depend on the rayon pool size.
const REDUCE_CHUNK: usize = 8;

/// Validation triplets use fixed augmentation and negative seeds so their
/// scores are comparable across epochs.
const VALIDATION_STREAM: u64 = u64::MAX;

pub fn validation_triplets(corpus: &Corpus, indices: &[usize], aug: &AugmentParams, seed_value: u64) -> Result<Vec<Triplet>> {
    if indices.len() < 2 {
        return Ok(Vec::new());
    }
    let mut rng = seed::rng_for(seed_value, "validation-negatives", &[]);
    build_batch_triplets(corpus, indices, aug, VALIDATION_STREAM, &mut rng)
}

pub fn train(
    corpus: &Corpus,
    train_idx: &[usize],
    val_idx: &[usize],
    config: &TrainConfig,
    aug: &AugmentParams,
    init: EncoderParams,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_idx.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    for &i in train_idx.iter().chain(val_idx) {
        if corpus.samples[i].graph.nodes.is_empty() {
            return Err(Error::EmptyGraph {
                index: i,
                scene_id: corpus.samples[i].scene.scene_id.clone(),
            });
        }
    }
    let mut params = init.clone();
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            ..Default::default()
        },
        &params,
    );
    let val_triplets = validation_triplets(corpus, val_idx, aug, config.seed)?;
    let mut best = init;
    let mut best_key: Option<(f64, f64)> = None;
    let mut best_epoch = None;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order = train_idx.to_vec();
        order.shuffle(&mut seed::rng_for(config.seed, "shuffle", &[epoch as u64]));
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            if batch.len() < 2 {
                log::warn!("epoch {epoch}: skipping batch {b} of size {}", batch.len());
                continue;
            }
            let mut neg_rng = seed::rng_for(config.seed, "negatives", &[epoch as u64, b as u64]);
            let triplets = build_batch_triplets(corpus, batch, aug, epoch as u64, &mut neg_rng)?;
            let partials = triplets
                .par_chunks(REDUCE_CHUNK)
                .enumerate()
                .map(|(c, chunk)| {
                    let mut grads = params.zeros_like();
                    let mut loss = 0.0;
                    for (k, t) in chunk.iter().enumerate() {
                        let tid = (c * REDUCE_CHUNK + k) as u64;
                        let mut rng = seed::rng_for(config.seed, "dropout", &[epoch as u64, b as u64, tid]);
                        loss += triplet_step(&params, t, config.margin, Some(&mut rng), Some(&mut grads))?;
                    }
                    Ok((loss, grads))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grads = params.zeros_like();
            let mut batch_loss = 0.0;
            for (l, g) in &partials {
                batch_loss += l;
                grads.add_assign(g);
            }
            if !batch_loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}, batch {b}")));
            }
            grads.scale(1.0 / triplets.len() as f64);
            adam.step(&mut params, &grads)?;
            loss_sum += batch_loss;
            loss_count += triplets.len();
        }
        let train_loss = if loss_count > 0 { loss_sum / loss_count as f64 } else { 0.0 };
        let val = summarize(&triplet_distances(&params, &val_triplets)?, config.margin);
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss: val.mean_loss,
            val_accuracy: val.accuracy,
        };
        if !val.mean_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        // higher accuracy wins, then lower loss
        let key = (val.accuracy, -val.mean_loss);
        let improved = best_key.is_none_or(|k| key.0 > k.0 || (key.0 == k.0 && key.1 > k.1));
        if improved {
            best_key = Some(key);
            best = params.clone();
            best_epoch = Some(epoch);
        }
        log::info!(
            "epoch {epoch}: train {train_loss:.4} val {:.4} acc {:.3}{}",
            val.mean_loss,
            val.accuracy,
            if improved { " *" } else { "" }
        );
        observer.epoch_end(&record, improved, &params, &adam);
        history.push(record);
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        last: params,
        optimizer: adam,
        history,
    })
}
