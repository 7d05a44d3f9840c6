//! Command implementations behind the CLI. Every command reads its inputs
//! from files, checks their config hashes, and writes artifacts stamped
//! with the hash of the current config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    pca_fit_transform, probe_regress, scatter_svg, select_clusters_in, triplet_accuracy, umap_lite, AccuracyReport,
    ClusterReport, ColorBy, ProbeReport,
};
use crate::config::{Config, Reduction, Stage};
use crate::encoder::{encode_batch, EncoderParams};
use crate::error::{Error, Result};
use crate::graph::{build_scene_graph, graph_level_features, GraphFeatures};
use crate::io::{self, EmbeddingRecord, GraphSet};
use crate::nn::Adam;
use crate::scene::SceneSet;
use crate::seed;
use crate::synth::{generate_dataset, generate_map, ScenarioTemplate};
use crate::training::{split_indices, train, Corpus, EpochRecord, TrainObserver};

pub const CHECKPOINT_FORMAT: &str = "scene-embed-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized encoder weights with optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    /// Epoch after which the weights were taken; `None` for the
    /// initialization.
    pub epoch: Option<usize>,
    pub params: EncoderParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam: Option<Adam>,
}

impl Checkpoint {
    pub fn new(config_hash: String, epoch: Option<usize>, params: EncoderParams, adam: Option<Adam>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config_hash,
            epoch,
            params,
            adam,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = io::read_json(path)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Invalid(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                ck.format,
                ck.version
            )));
        }
        use crate::nn::Parameters;
        if !ck.params.all_finite() {
            return Err(Error::NonFinite(format!("{}: checkpoint weights", path.display())));
        }
        Ok(ck)
    }
}

fn load_scenes(config: &Config, path: &Path, force: bool) -> Result<SceneSet> {
    let set = io::read_scene_set(path)?;
    config.check(Stage::Scenes, &set.config_hash, &path.display().to_string(), force)?;
    Ok(set)
}

fn load_graphs(config: &Config, path: &Path, force: bool) -> Result<GraphSet> {
    let set: GraphSet = io::read_json(path)?;
    config.check(Stage::Graphs, &set.config_hash, &path.display().to_string(), force)?;
    Ok(set)
}

fn load_checkpoint(config: &Config, path: &Path, force: bool) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    config.check(Stage::Model, &ck.config_hash, &path.display().to_string(), force)?;
    if ck.params.config != config.encoder && !force {
        return Err(Error::Invalid(format!("{}: encoder shape differs from config", path.display())));
    }
    Ok(ck)
}

/// Ingests one track file recorded on one map. `location` defaults to the
/// map id.
pub fn cmd_ingest(config: &Config, tracks: &Path, map: &Path, location: Option<&str>, out: &Path) -> Result<usize> {
    let map = io::read_map(map)?;
    let rows = io::read_tracks(tracks)?;
    let location = location.unwrap_or(&map.id).to_string();
    let scenes = io::tracks_to_scenes(&rows, &map.id, &location, config.ingest.stride)?;
    let mut set = SceneSet {
        config_hash: config.hash(Stage::Scenes),
        maps: [(map.id.clone(), map)].into_iter().collect(),
        scenes,
    };
    set.finalize()?;
    log::info!("{}: {} rows -> {} scenes", tracks.display(), rows.len(), set.scenes.len());
    io::write_json(out, &set)?;
    Ok(set.scenes.len())
}

/// Writes `scenes.json` plus, per template, the map JSON and a track CSV
/// holding the same scenes (one frame each).
pub fn cmd_generate(config: &Config, out_dir: &Path) -> Result<usize> {
    let mut set = generate_dataset(&config.synthetic)?;
    set.config_hash = config.hash(Stage::Scenes);
    for template in ScenarioTemplate::ALL {
        if config.synthetic.counts.get(&template).copied().unwrap_or(0) == 0 {
            continue;
        }
        let scenes: Vec<_> = set
            .scenes
            .iter()
            .filter(|s| s.location_label == template.name())
            .cloned()
            .collect();
        io::write_map(&out_dir.join("maps").join(format!("{}.json", template.name())), &generate_map(template))?;
        let tracks = out_dir.join("tracks").join(format!("{}.csv", template.name()));
        std::fs::create_dir_all(tracks.parent().expect("joined path")).map_err(|e| Error::io(&tracks, e))?;
        io::write_tracks(&tracks, &io::scenes_to_tracks(&scenes))?;
    }
    io::write_json(&out_dir.join("scenes.json"), &set)?;
    Ok(set.scenes.len())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BuildSummary {
    pub built: usize,
    /// `(scene id, error)` of scenes that produced no graph.
    pub failed: Vec<(String, String)>,
}

/// Builds one graph per scene. Scenes that fail are logged and skipped.
/// An extra map file, when given, is added to (or replaces in) the set.
pub fn cmd_build_graphs(config: &Config, scenes: &Path, map: Option<&Path>, out: &Path, force: bool) -> Result<BuildSummary> {
    let mut set = load_scenes(config, scenes, force)?;
    if let Some(m) = map {
        let m = io::read_map(m)?;
        set.maps.insert(m.id.clone(), m);
        set.finalize()?;
    }
    let total = set.scenes.len();
    let mut summary = BuildSummary::default();
    let mut graphs = Vec::with_capacity(total);
    let step = (total / 10).max(1);
    for (i, scene) in set.scenes.iter().enumerate() {
        match set.map_for(scene).and_then(|m| build_scene_graph(scene, m, &config.graph)) {
            Ok(g) => graphs.push(g),
            Err(e) => {
                log::error!("scene {} (record {}): {e}", scene.scene_id, i + 1);
                summary.failed.push((scene.scene_id.clone(), e.to_string()));
            }
        }
        if (i + 1) % step == 0 || i + 1 == total {
            log::info!("graphs: {}/{total}", i + 1);
        }
    }
    summary.built = graphs.len();
    io::write_json(
        out,
        &GraphSet {
            config_hash: config.hash(Stage::Graphs),
            graphs,
        },
    )?;
    Ok(summary)
}

/// Scene ids of each split, as written next to the checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub config_hash: String,
    pub holdout: Vec<String>,
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
    pub best: PathBuf,
    pub last: PathBuf,
}

struct CheckpointWriter {
    dir: PathBuf,
    hash: String,
    error: Option<Error>,
}

impl TrainObserver for CheckpointWriter {
    fn epoch_end(&mut self, record: &EpochRecord, improved: bool, params: &EncoderParams, adam: &Adam) {
        if !improved || self.error.is_some() {
            return;
        }
        let path = self.dir.join(format!("epoch-{:05}.json", record.epoch));
        let ck = Checkpoint::new(self.hash.clone(), Some(record.epoch), params.clone(), Some(adam.clone()));
        if let Err(e) = io::write_json(&path, &ck) {
            self.error = Some(e);
        }
    }
}

/// Splits the scenes, trains the encoder, and writes into `out_dir`:
/// `splits.json`, `loss.csv`, `checkpoints/epoch-*.json` for every
/// improvement, `best.json` and `final.json`.
///
/// Training needs scenes rather than graphs because positives are graphs
/// of freshly augmented scenes.
pub fn cmd_train(config: &Config, scenes: &Path, out_dir: &Path, force: bool) -> Result<TrainSummary> {
    let set = load_scenes(config, scenes, force)?;
    let corpus = Corpus::build(set, config.graph)?;
    let seed_value = config.train.seed;
    let splits = split_indices(corpus.len(), seed_value);
    let hash = config.hash(Stage::Model);
    let ids = |idx: &[usize]| idx.iter().map(|&i| corpus.samples[i].scene.scene_id.clone()).collect();
    io::write_json(
        &out_dir.join("splits.json"),
        &SplitFile {
            config_hash: hash.clone(),
            holdout: ids(&splits.holdout),
            train: ids(&splits.train),
            validation: ids(&splits.validation),
        },
    )?;
    let init = EncoderParams::new(config.encoder, &mut seed::rng_for(seed_value, "encoder-init", &[]));
    let ck_dir = out_dir.join("checkpoints");
    std::fs::create_dir_all(&ck_dir).map_err(|e| Error::io(&ck_dir, e))?;
    let mut writer = CheckpointWriter {
        dir: ck_dir,
        hash: hash.clone(),
        error: None,
    };
    let outcome = train(
        &corpus,
        &splits.train,
        &splits.validation,
        &config.train,
        &config.augment,
        init,
        &mut writer,
    )?;
    if let Some(e) = writer.error {
        return Err(e);
    }
    let rows: Vec<Vec<String>> = outcome
        .history
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
                r.val_accuracy.to_string(),
            ]
        })
        .collect();
    io::write_csv_rows(
        &out_dir.join("loss.csv"),
        &hash,
        &["epoch", "train_loss", "val_loss", "val_accuracy"],
        &rows,
    )?;
    let best = out_dir.join("best.json");
    let last = out_dir.join("final.json");
    io::write_json(&best, &Checkpoint::new(hash.clone(), outcome.best_epoch, outcome.best, None))?;
    let last_epoch = outcome.history.last().map(|r| r.epoch);
    io::write_json(&last, &Checkpoint::new(hash, last_epoch, outcome.last, Some(outcome.optimizer)))?;
    Ok(TrainSummary {
        best_epoch: outcome.best_epoch,
        history: outcome.history,
        best,
        last,
    })
}

pub fn cmd_embed(config: &Config, checkpoint: &Path, graphs: &Path, out: &Path, force: bool) -> Result<usize> {
    let ck = load_checkpoint(config, checkpoint, force)?;
    let set = load_graphs(config, graphs, force)?;
    let embeddings = encode_batch(&ck.params, &set.graphs)?;
    if embeddings.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embeddings".into()));
    }
    let rows: Vec<EmbeddingRecord> = set
        .graphs
        .iter()
        .zip(embeddings)
        .map(|(g, e)| EmbeddingRecord {
            scene_id: g.scene_id.clone(),
            location_label: g.location_label.clone(),
            embedding: e,
        })
        .collect();
    io::write_embeddings(out, &config.hash(Stage::Model), &rows)?;
    Ok(rows.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureProbe {
    pub feature: String,
    #[serde(flatten)]
    pub report: ProbeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub scenes: usize,
    pub accuracy: AccuracyReport,
    pub probes: Vec<FeatureProbe>,
}

/// Triplet accuracy and per-feature probes on the holdout scenes (all
/// scenes when no split file is given).
pub fn cmd_eval(
    config: &Config,
    checkpoint: &Path,
    scenes: &Path,
    splits: Option<&Path>,
    out: &Path,
    force: bool,
) -> Result<EvalReport> {
    let ck = load_checkpoint(config, checkpoint, force)?;
    let set = load_scenes(config, scenes, force)?;
    let corpus = Corpus::build(set, config.graph)?;
    let indices: Vec<usize> = match splits {
        Some(p) => {
            let file: SplitFile = io::read_json(p)?;
            config.check(Stage::Model, &file.config_hash, &p.display().to_string(), force)?;
            let lookup: std::collections::HashMap<&str, usize> = corpus
                .samples
                .iter()
                .enumerate()
                .map(|(i, s)| (s.scene.scene_id.as_str(), i))
                .collect();
            file.holdout
                .iter()
                .map(|id| {
                    lookup
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::Invalid(format!("holdout scene `{id}` not in {}", scenes.display())))
                })
                .collect::<Result<_>>()?
        }
        None => (0..corpus.len()).collect(),
    };
    let accuracy = triplet_accuracy(
        &ck.params,
        &corpus,
        &indices,
        &config.augment,
        config.eval.seed,
        config.eval.min_triplets,
    )?;
    let graphs: Vec<_> = indices.iter().map(|&i| corpus.samples[i].graph.clone()).collect();
    let embeddings = encode_batch(&ck.params, &graphs)?;
    let features: Vec<GraphFeatures> = graphs.iter().map(graph_level_features).collect();
    let mut probes = Vec::new();
    for name in GraphFeatures::NAMES {
        let targets: Vec<f64> = features.iter().map(|f| f.get(name).expect("known feature")).collect();
        let report = probe_regress(&embeddings, &targets, &config.probe, seed::derive(config.eval.seed, "probe", &[]))?;
        probes.push(FeatureProbe {
            feature: name.to_string(),
            report,
        });
    }
    let report = EvalReport {
        config_hash: config.hash(Stage::Eval),
        scenes: indices.len(),
        accuracy,
        probes,
    };
    io::write_json(out, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOutput {
    pub config_hash: String,
    pub reduction: Reduction,
    pub scene_ids: Vec<String>,
    pub location_labels: Vec<String>,
    pub points: Vec<[f64; 2]>,
    #[serde(flatten)]
    pub report: ClusterReport,
}

/// Reduces embeddings to 2-d, clusters them for every candidate count, and
/// writes `cluster.json` and `assignments.csv` into `out_dir`.
pub fn cmd_cluster(config: &Config, embeddings: &Path, out_dir: &Path, force: bool) -> Result<ClusterOutput> {
    let hash = io::csv_config_hash(embeddings)?.unwrap_or_default();
    config.check(Stage::Model, &hash, &embeddings.display().to_string(), force)?;
    let rows = io::read_embeddings(embeddings)?;
    let points: Vec<Vec<f64>> = rows.iter().map(|r| r.embedding.clone()).collect();
    let reduced = match config.cluster.reduction {
        Reduction::Pca => pca_fit_transform(&points, 2)?.projected,
        Reduction::Umap => umap_lite(
            &points,
            &crate::analysis::UmapConfig {
                out_dim: 2,
                ..config.cluster.umap
            },
            config.cluster.seed,
        )?,
    };
    let report = select_clusters_in(&reduced, config.cluster.k_min, config.cluster.k_max)?;
    let out = ClusterOutput {
        config_hash: config.hash(Stage::Cluster),
        reduction: config.cluster.reduction,
        scene_ids: rows.iter().map(|r| r.scene_id.clone()).collect(),
        location_labels: rows.iter().map(|r| r.location_label.clone()).collect(),
        points: reduced.iter().map(|p| [p[0], p[1]]).collect(),
        report,
    };
    io::write_json(&out_dir.join("cluster.json"), &out)?;
    let csv_rows: Vec<Vec<String>> = out
        .scene_ids
        .iter()
        .zip(&out.location_labels)
        .zip(out.points.iter().zip(&out.report.assignments))
        .map(|((id, loc), (p, c))| vec![id.clone(), loc.clone(), c.to_string(), p[0].to_string(), p[1].to_string()])
        .collect();
    io::write_csv_rows(
        &out_dir.join("assignments.csv"),
        &out.config_hash,
        &["scene_id", "location_label", "cluster", "x", "y"],
        &csv_rows,
    )?;
    Ok(out)
}

/// What the plot points come from.
pub enum PlotInput<'a> {
    /// Embeddings CSV, reduced with PCA.
    Embeddings(&'a Path),
    /// Cluster report, plotted in its own 2-d layout.
    Clusters(&'a Path),
}

/// `cluster`, `location`, or a graph-level feature name (which needs the
/// graphs file).
pub fn cmd_plot(
    config: &Config,
    input: PlotInput<'_>,
    color_by: &str,
    graphs: Option<&Path>,
    out: &Path,
    force: bool,
) -> Result<()> {
    let (hash, ids, locations, points, clusters, title) = match input {
        PlotInput::Embeddings(p) => {
            let hash = io::csv_config_hash(p)?.unwrap_or_default();
            config.check(Stage::Model, &hash, &p.display().to_string(), force)?;
            let rows = io::read_embeddings(p)?;
            let emb: Vec<Vec<f64>> = rows.iter().map(|r| r.embedding.clone()).collect();
            let pca = pca_fit_transform(&emb, 2)?;
            (
                hash,
                rows.iter().map(|r| r.scene_id.clone()).collect::<Vec<_>>(),
                rows.iter().map(|r| r.location_label.clone()).collect::<Vec<_>>(),
                pca.projected.iter().map(|q| [q[0], q[1]]).collect::<Vec<_>>(),
                None,
                "PCA of embeddings".to_string(),
            )
        }
        PlotInput::Clusters(p) => {
            let c: ClusterOutput = io::read_json(p)?;
            config.check(Stage::Cluster, &c.config_hash, &p.display().to_string(), force)?;
            let title = format!("{} layout, {} clusters", if c.reduction == Reduction::Pca { "PCA" } else { "UMAP" }, c.report.selected);
            (c.config_hash, c.scene_ids, c.location_labels, c.points, Some(c.report.assignments), title)
        }
    };
    let color = match color_by {
        "cluster" => ColorBy::Cluster(clusters.ok_or_else(|| Error::Invalid("colouring by cluster needs a cluster report".into()))?),
        "location" => {
            let mut names: Vec<&String> = locations.iter().collect();
            names.sort();
            names.dedup();
            ColorBy::Cluster(locations.iter().map(|l| names.binary_search(&l).expect("present")).collect())
        }
        feature => {
            if !GraphFeatures::NAMES.contains(&feature) {
                return Err(Error::Invalid(format!(
                    "unknown colour `{feature}`; expected cluster, location or one of {:?}",
                    GraphFeatures::NAMES
                )));
            }
            let path = graphs.ok_or_else(|| Error::Invalid(format!("colouring by `{feature}` needs --graphs")))?;
            let set = load_graphs(config, path, force)?;
            let by_id: std::collections::HashMap<&str, f64> = set
                .graphs
                .iter()
                .map(|g| (g.scene_id.as_str(), graph_level_features(g).get(feature).expect("known feature")))
                .collect();
            let values = ids
                .iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::Invalid(format!("scene `{id}` missing from {}", path.display())))
                })
                .collect::<Result<_>>()?;
            ColorBy::Value {
                name: feature.to_string(),
                values,
            }
        }
    };
    let svg = scatter_svg(&points, &color, &title, &hash)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(out, svg).map_err(|e| Error::io(out, e))
}
