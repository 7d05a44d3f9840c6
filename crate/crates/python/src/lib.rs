//! Python bindings: scenes and maps, scene graph construction, the
//! encoder, and the embedding-space analysis routines.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use scene_embed::analysis::{self, UmapConfig};
use scene_embed::encoder::{encode, encode_batch, EncoderConfig, EncoderParams};
use scene_embed::graph::{self, GraphFeatures, GraphParams};
use scene_embed::nn::{Mode, Parameters};
use scene_embed::pipeline::Checkpoint;
use scene_embed::synth::{generate_dataset, ScenarioTemplate, SynthConfig};
use scene_embed::{io, scene, seed, training, Error};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(module = "scene_embed_py", from_py_object)]
#[derive(Clone)]
struct LaneMap {
    inner: scene::LaneMap,
}

#[pymethods]
impl LaneMap {
    /// Parses a lane-map JSON document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let mut inner: scene::LaneMap = serde_json::from_str(text).map_err(json_err)?;
        inner.finalize().map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::read_map(&path).map_err(err)?,
        })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn lane_ids(&self) -> Vec<String> {
        self.inner.lanes.iter().map(|l| l.id.clone()).collect()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!("LaneMap(id={:?}, lanes={})", self.inner.id, self.inner.lanes.len())
    }
}

#[pyclass(module = "scene_embed_py", from_py_object)]
#[derive(Clone)]
struct Scene {
    inner: scene::TrafficScene,
}

#[pymethods]
impl Scene {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: scene::TrafficScene = serde_json::from_str(text).map_err(json_err)?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn scene_id(&self) -> String {
        self.inner.scene_id.clone()
    }

    #[getter]
    fn location_label(&self) -> String {
        self.inner.location_label.clone()
    }

    #[getter]
    fn map_ref(&self) -> String {
        self.inner.map_ref.clone()
    }

    /// `(id, class, x, y, speed, heading)` per participant.
    fn participants(&self) -> Vec<(String, String, f64, f64, f64, f64)> {
        self.inner
            .participants
            .iter()
            .map(|p| {
                (
                    p.id.clone(),
                    p.class.as_str().to_string(),
                    p.position.x,
                    p.position.y,
                    p.speed,
                    p.heading,
                )
            })
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    fn __len__(&self) -> usize {
        self.inner.participants.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scene(id={:?}, location={:?}, participants={})",
            self.inner.scene_id,
            self.inner.location_label,
            self.inner.participants.len()
        )
    }
}

#[pyclass(module = "scene_embed_py")]
struct SceneSet {
    inner: scene::SceneSet,
}

#[pymethods]
impl SceneSet {
    /// Reads a `scenes.json` written by `generate` or `ingest`.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::read_scene_set(&path).map_err(err)?,
        })
    }

    /// Synthetic scenes; `counts` maps template names (`straight_following`,
    /// `merge_lane`, `four_way_intersection`, `queue_jam`, `mixed`) to counts.
    #[staticmethod]
    #[pyo3(signature = (counts, seed=0))]
    fn generate(counts: BTreeMap<String, usize>, seed: u64) -> PyResult<Self> {
        let counts = counts
            .iter()
            .map(|(name, &n)| Ok((name.parse::<ScenarioTemplate>().map_err(err)?, n)))
            .collect::<PyResult<Vec<_>>>()?;
        let inner = generate_dataset(&SynthConfig::with_counts(seed, &counts)).map_err(err)?;
        Ok(Self { inner })
    }

    fn scenes(&self) -> Vec<Scene> {
        self.inner
            .scenes
            .iter()
            .map(|s| Scene { inner: s.clone() })
            .collect()
    }

    fn map_for(&self, scene: &Scene) -> PyResult<LaneMap> {
        Ok(LaneMap {
            inner: self.inner.map_for(&scene.inner).map_err(err)?.clone(),
        })
    }

    /// One graph per scene, in order.
    #[pyo3(signature = (gate_factor=1.5, horizon=50.0))]
    fn build_graphs(&self, py: Python<'_>, gate_factor: f64, horizon: f64) -> PyResult<Vec<SceneGraph>> {
        let params = GraphParams { gate_factor, horizon };
        let set = &self.inner;
        py.detach(|| {
            set.scenes
                .iter()
                .map(|s| {
                    let map = set.map_for(s)?;
                    graph::build_scene_graph(s, map, &params).map(|inner| SceneGraph { inner })
                })
                .collect::<scene_embed::Result<Vec<_>>>()
        })
        .map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.scenes.len()
    }
}

#[pyclass(module = "scene_embed_py", from_py_object)]
#[derive(Clone)]
struct SceneGraph {
    inner: graph::SceneGraph,
}

#[pymethods]
impl SceneGraph {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(json_err)?,
        })
    }

    #[getter]
    fn scene_id(&self) -> String {
        self.inner.scene_id.clone()
    }

    #[getter]
    fn location_label(&self) -> String {
        self.inner.location_label.clone()
    }

    /// `[speed, car, truck, pedestrian, bike]` per node.
    #[getter]
    fn nodes(&self) -> Vec<Vec<f64>> {
        self.inner.nodes.iter().map(|n| n.to_vec()).collect()
    }

    /// `(origin, target, features)` per edge; features are `[cert_lon,
    /// cert_lat, cert_int, path_distance, int_path_distance, origin_cl,
    /// target_cl, int_origin_cl, int_target_cl]`.
    #[getter]
    fn edges(&self) -> Vec<(usize, usize, Vec<f64>)> {
        self.inner
            .edges
            .iter()
            .map(|e| (e.origin, e.target, e.features.to_vec()))
            .collect()
    }

    /// Graph-level descriptors by name.
    fn features<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let f = graph::graph_level_features(&self.inner);
        let d = PyDict::new(py);
        for (name, v) in GraphFeatures::NAMES.iter().zip(f.as_array()) {
            d.set_item(name, v)?;
        }
        Ok(d)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "SceneGraph(id={:?}, nodes={}, edges={})",
            self.inner.scene_id,
            self.inner.nodes.len(),
            self.inner.edges.len()
        )
    }
}

#[pyclass(module = "scene_embed_py")]
struct Encoder {
    inner: EncoderParams,
}

#[pymethods]
impl Encoder {
    /// Freshly initialized encoder.
    #[new]
    #[pyo3(signature = (seed=0, hidden=60, embedding=12))]
    fn new(seed: u64, hidden: usize, embedding: usize) -> PyResult<Self> {
        if hidden == 0 || embedding == 0 {
            return Err(PyValueError::new_err("widths must be positive"));
        }
        let config = EncoderConfig {
            hidden,
            embedding,
            ..Default::default()
        };
        Ok(Self {
            inner: EncoderParams::new(config, &mut seed::rng_for(seed, "encoder-init", &[])),
        })
    }

    /// Weights from a checkpoint written by `train`.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Checkpoint::load(&path).map_err(err)?.params,
        })
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    fn encode(&self, graph: &SceneGraph) -> PyResult<Vec<f64>> {
        encode(&self.inner, &graph.inner, Mode::Eval).map_err(err)
    }

    fn encode_many(&self, py: Python<'_>, graphs: Vec<SceneGraph>) -> PyResult<Vec<Vec<f64>>> {
        let graphs: Vec<graph::SceneGraph> = graphs.into_iter().map(|g| g.inner).collect();
        let params = &self.inner;
        py.detach(|| encode_batch(params, &graphs)).map_err(err)
    }
}

#[pyfunction]
#[pyo3(signature = (scene, lane_map, gate_factor=1.5, horizon=50.0))]
fn build_scene_graph(scene: &Scene, lane_map: &LaneMap, gate_factor: f64, horizon: f64) -> PyResult<SceneGraph> {
    let params = GraphParams { gate_factor, horizon };
    Ok(SceneGraph {
        inner: graph::build_scene_graph(&scene.inner, &lane_map.inner, &params).map_err(err)?,
    })
}

#[pyfunction]
fn euclidean_distance(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    training::euclidean_distance(&a, &b).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (anchor, positive, negative, margin=0.5))]
fn triplet_loss(anchor: Vec<f64>, positive: Vec<f64>, negative: Vec<f64>, margin: f64) -> PyResult<f64> {
    training::triplet_loss(&anchor, &positive, &negative, margin).map_err(err)
}

/// Returns `(projected, explained_ratio)`.
#[pyfunction]
#[pyo3(signature = (points, out_dim=2))]
fn pca(points: Vec<Vec<f64>>, out_dim: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let p = analysis::pca_fit_transform(&points, out_dim).map_err(err)?;
    Ok((p.projected, p.explained_ratio))
}

#[pyfunction]
#[pyo3(signature = (points, n_neighbors=5, min_dist=0.0, out_dim=2, epochs=500, seed=0))]
fn umap(
    py: Python<'_>,
    points: Vec<Vec<f64>>,
    n_neighbors: usize,
    min_dist: f64,
    out_dim: usize,
    epochs: usize,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let config = UmapConfig {
        n_neighbors,
        min_dist,
        out_dim,
        epochs,
        ..Default::default()
    };
    py.detach(|| analysis::umap_lite(&points, &config, seed)).map_err(err)
}

/// Ward clustering for every k in `[k_min, k_max]`; the k with the best
/// silhouette is selected.
#[pyfunction]
#[pyo3(signature = (points, k_min=2, k_max=25))]
fn select_clusters<'py>(py: Python<'py>, points: Vec<Vec<f64>>, k_min: usize, k_max: usize) -> PyResult<Bound<'py, PyDict>> {
    let r = analysis::select_clusters_in(&points, k_min, k_max).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("selected", r.selected)?;
    d.set_item("silhouette", r.best_silhouette())?;
    d.set_item("candidates", r.candidates)?;
    d.set_item("silhouettes", r.silhouettes)?;
    d.set_item("assignments", r.assignments)?;
    Ok(d)
}

#[pyfunction]
fn silhouette_score(points: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
    analysis::silhouette_score(&points, &labels).map_err(err)
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    analysis::adjusted_rand_index(&a, &b).map_err(err)
}

/// Registers every class and function on `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<LaneMap>()?;
    m.add_class::<Scene>()?;
    m.add_class::<SceneSet>()?;
    m.add_class::<SceneGraph>()?;
    m.add_class::<Encoder>()?;
    m.add_function(wrap_pyfunction!(build_scene_graph, m)?)?;
    m.add_function(wrap_pyfunction!(euclidean_distance, m)?)?;
    m.add_function(wrap_pyfunction!(triplet_loss, m)?)?;
    m.add_function(wrap_pyfunction!(pca, m)?)?;
    m.add_function(wrap_pyfunction!(umap, m)?)?;
    m.add_function(wrap_pyfunction!(select_clusters, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette_score, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    Ok(())
}

#[pymodule]
fn scene_embed_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
