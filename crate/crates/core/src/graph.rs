//! Semantic scene graph construction.
//!
//! Every participant becomes a node. For each ordered pair of participants,
//! all pairs of their projection identities are classified against the lane
//! topology; related identity pairs are consolidated into one directed edge
//! whose per-type certainty is the clipped sum of identity-certainty
//! products and whose distances are certainty-weighted means.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::{candidate_identities_relative, ProjectionIdentity, DEFAULT_GATE_FACTOR};
use crate::scene::{LaneMap, ObjectClass, RelationKind, TrafficScene};

pub const NODE_FEATURES: usize = 5;
pub const EDGE_FEATURES: usize = 9;

/// Edge feature layout.
pub mod edge_feature {
    pub const CERT_LON: usize = 0;
    pub const CERT_LAT: usize = 1;
    pub const CERT_INT: usize = 2;
    pub const PATH_DISTANCE: usize = 3;
    pub const INT_PATH_DISTANCE: usize = 4;
    pub const ORIGIN_CENTERLINE: usize = 5;
    pub const TARGET_CENTERLINE: usize = 6;
    pub const INT_ORIGIN_CENTERLINE: usize = 7;
    pub const INT_TARGET_CENTERLINE: usize = 8;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationType {
    Longitudinal,
    Lateral,
    Intersecting,
}

impl RelationType {
    fn slot(self) -> usize {
        match self {
            RelationType::Longitudinal => 0,
            RelationType::Lateral => 1,
            RelationType::Intersecting => 2,
        }
    }
}

/// Relation between two identities plus its geometry: the signed Frenet path
/// distance for longitudinal/lateral relations (positive when the target is
/// ahead), or the origin's signed distance to the crossing for intersecting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRelation {
    pub kind: RelationType,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphParams {
    /// Identity gate as a multiple of the lane width.
    pub gate_factor: f64,
    /// Maximum |path distance| for longitudinal and lateral relations.
    pub horizon: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            gate_factor: DEFAULT_GATE_FACTOR,
            horizon: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub origin: usize,
    pub target: usize,
    pub features: [f64; EDGE_FEATURES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GraphRecord", try_from = "GraphRecord")]
pub struct SceneGraph {
    pub scene_id: String,
    pub location_label: String,
    pub node_ids: Vec<String>,
    /// `[speed, car, truck, pedestrian, bike]`
    pub nodes: Vec<[f64; NODE_FEATURES]>,
    pub edges: Vec<Edge>,
}

/// On-disk layout: `nodes: [[f0..f4]]`, `edges: [[o, t, f0..f8]]`.
#[derive(Serialize, Deserialize)]
struct GraphRecord {
    scene_id: String,
    location_label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    node_ids: Vec<String>,
    nodes: Vec<[f64; NODE_FEATURES]>,
    edges: Vec<Vec<f64>>,
}

impl From<SceneGraph> for GraphRecord {
    fn from(g: SceneGraph) -> Self {
        Self {
            scene_id: g.scene_id,
            location_label: g.location_label,
            node_ids: g.node_ids,
            nodes: g.nodes,
            edges: g
                .edges
                .into_iter()
                .map(|e| {
                    let mut row = Vec::with_capacity(2 + EDGE_FEATURES);
                    row.push(e.origin as f64);
                    row.push(e.target as f64);
                    row.extend_from_slice(&e.features);
                    row
                })
                .collect(),
        }
    }
}

impl TryFrom<GraphRecord> for SceneGraph {
    type Error = String;

    fn try_from(r: GraphRecord) -> std::result::Result<Self, String> {
        let n = r.nodes.len();
        let mut edges = Vec::with_capacity(r.edges.len());
        for row in r.edges {
            if row.len() != 2 + EDGE_FEATURES {
                return Err(format!("edge row has {} entries, expected {}", row.len(), 2 + EDGE_FEATURES));
            }
            let idx = |v: f64| -> std::result::Result<usize, String> {
                if v >= 0.0 && v.fract() == 0.0 && (v as usize) < n {
                    Ok(v as usize)
                } else {
                    Err(format!("edge endpoint {v} is not a node index"))
                }
            };
            let mut features = [0.0; EDGE_FEATURES];
            features.copy_from_slice(&row[2..]);
            edges.push(Edge {
                origin: idx(row[0])?,
                target: idx(row[1])?,
                features,
            });
        }
        let node_ids = if r.node_ids.is_empty() {
            (0..n).map(|i| i.to_string()).collect()
        } else if r.node_ids.len() == n {
            r.node_ids
        } else {
            return Err("node_ids length differs from node count".into());
        };
        Ok(Self {
            scene_id: r.scene_id,
            location_label: r.location_label,
            node_ids,
            nodes: r.nodes,
            edges,
        })
    }
}

impl SceneGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_car(&self, node: usize) -> bool {
        self.nodes[node][1 + ObjectClass::Car.index()] == 1.0
    }
}

/// Path distance from `(lane_from, s_from)` forward along successor links to
/// `(lane_to, s_to)`, if reachable within `horizon`.
fn forward_path(map: &LaneMap, from: usize, s_from: f64, to: usize, s_to: f64, horizon: f64) -> Option<f64> {
    // Depth-first over the (acyclic) successor graph. `offset` maps an
    // arclength on the current lane into path coordinates of `from`.
    let links: Vec<(usize, usize, f64, f64)> = map
        .relations
        .iter()
        .filter(|r| r.kind == RelationKind::Successor)
        .filter_map(|r| {
            let a = map.lane_index(&r.a)?;
            let b = map.lane_index(&r.b)?;
            Some((a, b, r.arclen_a.unwrap_or(map.lane_length(a)), r.arclen_b.unwrap_or(0.0)))
        })
        .collect();
    let mut best: Option<f64> = None;
    // (lane, offset, arclength at which we entered this lane)
    let mut stack = vec![(from, 0.0, s_from)];
    while let Some((lane, offset, entered_at)) = stack.pop() {
        if lane == to && lane != from && s_to >= entered_at {
            let d = s_to + offset - s_from;
            if d <= horizon && best.is_none_or(|b| d < b) {
                best = Some(d);
            }
        }
        for &(a, b, exit, entry) in &links {
            if a != lane || exit < entered_at {
                continue;
            }
            let next_offset = offset + exit - entry;
            // distance already travelled when entering `b`
            if entry + next_offset - s_from > horizon {
                continue;
            }
            stack.push((b, next_offset, entry));
        }
    }
    best
}

/// Classifies the relation between two identities of distinct participants.
pub fn classify_pair(
    origin: &ProjectionIdentity,
    target: &ProjectionIdentity,
    map: &LaneMap,
    horizon: f64,
) -> Option<PairRelation> {
    let lon = |distance| {
        Some(PairRelation {
            kind: RelationType::Longitudinal,
            distance,
        })
    };
    if origin.lane == target.lane {
        let ds = target.s - origin.s;
        return if ds.abs() <= horizon { lon(ds) } else { None };
    }
    if let Some(d) = forward_path(map, origin.lane, origin.s, target.lane, target.s, horizon) {
        return lon(d);
    }
    if let Some(d) = forward_path(map, target.lane, target.s, origin.lane, origin.s, horizon) {
        return lon(-d);
    }
    let lane_o = &map.lanes[origin.lane].id;
    let lane_t = &map.lanes[target.lane].id;
    let anchors = |kind: RelationKind| {
        map.relations.iter().filter(move |r| r.kind == kind).find_map(|r| {
            if &r.a == lane_o && &r.b == lane_t {
                Some((r.arclen_a, r.arclen_b))
            } else if &r.b == lane_o && &r.a == lane_t {
                Some((r.arclen_b, r.arclen_a))
            } else {
                None
            }
        })
    };
    if let Some((ao, at)) = anchors(RelationKind::Parallel) {
        let ds = (target.s - at.unwrap_or(0.0)) - (origin.s - ao.unwrap_or(0.0));
        if ds.abs() <= horizon {
            return Some(PairRelation {
                kind: RelationType::Lateral,
                distance: ds,
            });
        }
        return None;
    }
    if let Some((Some(cross_o), _)) = anchors(RelationKind::Intersecting) {
        return Some(PairRelation {
            kind: RelationType::Intersecting,
            distance: cross_o - origin.s,
        });
    }
    None
}

#[derive(Default)]
struct EdgeAccumulator {
    weight: [f64; 3],
    path_wd: f64,
    int_wd: f64,
    // (certainty, |d|) of the most certain identity involved, per side
    best_origin: Option<(f64, f64)>,
    best_target: Option<(f64, f64)>,
    best_int_origin: Option<(f64, f64)>,
    best_int_target: Option<(f64, f64)>,
}

fn keep_best(slot: &mut Option<(f64, f64)>, id: &ProjectionIdentity) {
    if slot.is_none_or(|(c, _)| id.certainty > c) {
        *slot = Some((id.certainty, id.d.abs()));
    }
}

impl EdgeAccumulator {
    fn add(&mut self, o: &ProjectionIdentity, t: &ProjectionIdentity, rel: PairRelation) {
        let w = o.certainty * t.certainty;
        if w <= 0.0 {
            return;
        }
        self.weight[rel.kind.slot()] += w;
        match rel.kind {
            RelationType::Longitudinal | RelationType::Lateral => {
                self.path_wd += w * rel.distance;
                keep_best(&mut self.best_origin, o);
                keep_best(&mut self.best_target, t);
            }
            RelationType::Intersecting => {
                self.int_wd += w * rel.distance;
                keep_best(&mut self.best_int_origin, o);
                keep_best(&mut self.best_int_target, t);
            }
        }
    }

    fn finish(&self) -> Option<[f64; EDGE_FEATURES]> {
        use edge_feature::*;
        let path_w = self.weight[0] + self.weight[1];
        let int_w = self.weight[2];
        if path_w <= 0.0 && int_w <= 0.0 {
            return None;
        }
        let mut f = [0.0; EDGE_FEATURES];
        f[CERT_LON] = self.weight[0].min(1.0);
        f[CERT_LAT] = self.weight[1].min(1.0);
        f[CERT_INT] = self.weight[2].min(1.0);
        if path_w > 0.0 {
            f[PATH_DISTANCE] = self.path_wd / path_w;
            f[ORIGIN_CENTERLINE] = self.best_origin.map_or(0.0, |b| b.1);
            f[TARGET_CENTERLINE] = self.best_target.map_or(0.0, |b| b.1);
        }
        if int_w > 0.0 {
            f[INT_PATH_DISTANCE] = self.int_wd / int_w;
            f[INT_ORIGIN_CENTERLINE] = self.best_int_origin.map_or(0.0, |b| b.1);
            f[INT_TARGET_CENTERLINE] = self.best_int_target.map_or(0.0, |b| b.1);
        }
        Some(f)
    }
}

pub fn node_features(p: &crate::scene::TrafficParticipant) -> [f64; NODE_FEATURES] {
    let mut f = [0.0; NODE_FEATURES];
    f[0] = p.speed;
    f[1 + p.class.index()] = 1.0;
    f
}

pub fn build_scene_graph(scene: &TrafficScene, map: &LaneMap, params: &GraphParams) -> Result<SceneGraph> {
    if scene.participants.is_empty() {
        return Err(Error::EmptyScene(scene.scene_id.clone()));
    }
    let identities: Vec<Vec<ProjectionIdentity>> = scene
        .participants
        .iter()
        .map(|p| candidate_identities_relative(p, map, params.gate_factor))
        .collect();
    let n = scene.participants.len();
    let mut edges = Vec::new();
    for o in 0..n {
        for t in 0..n {
            if o == t {
                continue;
            }
            let mut acc = EdgeAccumulator::default();
            for io in &identities[o] {
                for it in &identities[t] {
                    if let Some(rel) = classify_pair(io, it, map, params.horizon) {
                        acc.add(io, it, rel);
                    }
                }
            }
            if let Some(features) = acc.finish() {
                edges.push(Edge {
                    origin: o,
                    target: t,
                    features,
                });
            }
        }
    }
    Ok(SceneGraph {
        scene_id: scene.scene_id.clone(),
        location_label: scene.location_label.clone(),
        node_ids: scene.participants.iter().map(|p| p.id.clone()).collect(),
        nodes: scene.participants.iter().map(node_features).collect(),
        edges,
    })
}

/// Handcrafted graph-level descriptors used as probe targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphFeatures {
    /// Sum of longitudinal certainties per car.
    pub e_lon: f64,
    pub e_lat: f64,
    pub e_int: f64,
    /// Number of edges.
    pub e_total: f64,
    /// Number of car nodes.
    pub v_car: f64,
    /// Mean speed over cars, 0 without cars.
    pub mean_speed: f64,
}

impl GraphFeatures {
    pub const NAMES: [&'static str; 6] = ["e_lon", "e_lat", "e_int", "e_total", "v_car", "mean_speed"];

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "e_lon" => self.e_lon,
            "e_lat" => self.e_lat,
            "e_int" => self.e_int,
            "e_total" => self.e_total,
            "v_car" => self.v_car,
            "mean_speed" => self.mean_speed,
            _ => return None,
        })
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.e_lon, self.e_lat, self.e_int, self.e_total, self.v_car, self.mean_speed]
    }
}

pub fn graph_level_features(g: &SceneGraph) -> GraphFeatures {
    use edge_feature::*;
    let cars: Vec<usize> = (0..g.node_count()).filter(|&i| g.is_car(i)).collect();
    let n_cars = cars.len() as f64;
    let norm = n_cars.max(1.0);
    let sum = |k: usize| g.edges.iter().map(|e| e.features[k]).sum::<f64>() / norm;
    GraphFeatures {
        e_lon: sum(CERT_LON),
        e_lat: sum(CERT_LAT),
        e_int: sum(CERT_INT),
        e_total: g.edges.len() as f64,
        v_car: n_cars,
        mean_speed: if cars.is_empty() {
            0.0
        } else {
            cars.iter().map(|&i| g.nodes[i][0]).sum::<f64>() / n_cars
        },
    }
}
