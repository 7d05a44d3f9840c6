//! Traffic participants, lane maps and scenes.
//!
//! All types validate on construction (or via [`LaneMap::validate`] /
//! [`TrafficScene::validate`] after deserialization) and are immutable
//! afterwards.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        self.sub(o).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Car,
    Truck,
    Pedestrian,
    Bike,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 4] = [
        ObjectClass::Car,
        ObjectClass::Truck,
        ObjectClass::Pedestrian,
        ObjectClass::Bike,
    ];

    /// Position in the node feature one-hot block.
    pub fn index(self) -> usize {
        match self {
            ObjectClass::Car => 0,
            ObjectClass::Truck => 1,
            ObjectClass::Pedestrian => 2,
            ObjectClass::Bike => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Car => "car",
            ObjectClass::Truck => "truck",
            ObjectClass::Pedestrian => "pedestrian",
            ObjectClass::Bike => "bike",
        }
    }

    /// Parses the agent type column of a track file. Accepts the INTERACTION
    /// spellings (`car`, `truck`, `bus`, `pedestrian/bicycle`).
    pub fn parse(label: &str) -> Option<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "car" | "van" => Some(ObjectClass::Car),
            "truck" | "bus" => Some(ObjectClass::Truck),
            "pedestrian" | "pedestrian/bicycle" => Some(ObjectClass::Pedestrian),
            "bike" | "bicycle" | "cyclist" | "motorcycle" => Some(ObjectClass::Bike),
            _ => None,
        }
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficParticipant {
    pub id: String,
    pub position: Vec2,
    /// Norm of the velocity vector; direction is not kept.
    pub speed: f64,
    /// Only used for geometry, never as a model feature.
    pub heading: f64,
    pub class: ObjectClass,
}

impl TrafficParticipant {
    pub fn new(
        id: impl Into<String>,
        position: Vec2,
        speed: f64,
        heading: f64,
        class: ObjectClass,
    ) -> Result<Self> {
        let p = Self {
            id: id.into(),
            position,
            speed,
            heading: wrap_angle(heading),
            class,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.is_finite() {
            return Err(Error::Invalid(format!("participant `{}`: non-finite position", self.id)));
        }
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(Error::Invalid(format!(
                "participant `{}`: speed must be finite and >= 0, got {}",
                self.id, self.speed
            )));
        }
        if !(self.heading >= -PI && self.heading < PI) {
            return Err(Error::Invalid(format!(
                "participant `{}`: heading {} outside [-pi, pi)",
                self.id, self.heading
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: String,
    pub width: f64,
    pub centerline: Vec<Vec2>,
}

impl Lane {
    pub fn new(id: impl Into<String>, width: f64, centerline: Vec<Vec2>) -> Result<Self> {
        let lane = Self {
            id: id.into(),
            width,
            centerline,
        };
        lane.validate()?;
        Ok(lane)
    }

    pub fn validate(&self) -> Result<()> {
        if self.centerline.len() < 2 {
            return Err(Error::Invalid(format!("lane `{}`: centerline needs >= 2 points", self.id)));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::Invalid(format!("lane `{}`: width must be > 0", self.id)));
        }
        if let Some(p) = self.centerline.iter().find(|p| !p.is_finite()) {
            return Err(Error::Invalid(format!("lane `{}`: non-finite point {p:?}", self.id)));
        }
        if self.centerline.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid(format!(
                "lane `{}`: consecutive centerline points coincide",
                self.id
            )));
        }
        Ok(())
    }

    /// Total arclength of the centerline.
    pub fn arclength(&self) -> f64 {
        arclength_of(self)
    }
}

pub fn arclength_of(lane: &Lane) -> f64 {
    lane.centerline.windows(2).map(|w| w[0].distance(w[1])).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Successor,
    Parallel,
    Intersecting,
}

/// A topological relation between two lanes.
///
/// The optional arclengths carry kind-specific anchors:
/// * `Intersecting`: crossing position on `a` and on `b` (both required).
/// * `Successor`: exit position on `a` (default: end of `a`) and entry
///   position on `b` (default: 0). A non-default entry models a merge.
/// * `Parallel`: arclengths on `a` and `b` that are laterally aligned
///   (default: 0 / 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneRelation {
    pub kind: RelationKind,
    pub a: String,
    pub b: String,
    #[serde(rename = "s_a", default, skip_serializing_if = "Option::is_none")]
    pub arclen_a: Option<f64>,
    #[serde(rename = "s_b", default, skip_serializing_if = "Option::is_none")]
    pub arclen_b: Option<f64>,
}

impl LaneRelation {
    pub fn successor(a: impl Into<String>, b: impl Into<String>) -> Self {
        Self {
            kind: RelationKind::Successor,
            a: a.into(),
            b: b.into(),
            arclen_a: None,
            arclen_b: None,
        }
    }

    pub fn parallel(a: impl Into<String>, b: impl Into<String>) -> Self {
        Self {
            kind: RelationKind::Parallel,
            a: a.into(),
            b: b.into(),
            arclen_a: None,
            arclen_b: None,
        }
    }

    pub fn intersecting(a: impl Into<String>, b: impl Into<String>, s_a: f64, s_b: f64) -> Self {
        Self {
            kind: RelationKind::Intersecting,
            a: a.into(),
            b: b.into(),
            arclen_a: Some(s_a),
            arclen_b: Some(s_b),
        }
    }

    pub fn with_anchors(mut self, s_a: f64, s_b: f64) -> Self {
        self.arclen_a = Some(s_a);
        self.arclen_b = Some(s_b);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneMap {
    #[serde(default)]
    pub id: String,
    pub lanes: Vec<Lane>,
    #[serde(default)]
    pub relations: Vec<LaneRelation>,
    #[serde(skip)]
    lengths: Vec<f64>,
}

impl LaneMap {
    pub fn new(id: impl Into<String>, lanes: Vec<Lane>, relations: Vec<LaneRelation>) -> Result<Self> {
        let mut map = Self {
            id: id.into(),
            lanes,
            relations,
            lengths: Vec::new(),
        };
        map.finalize()?;
        Ok(map)
    }

    /// Validates invariants and caches lane lengths. Must be called after
    /// deserializing a map.
    pub fn finalize(&mut self) -> Result<()> {
        for lane in &self.lanes {
            lane.validate()?;
        }
        self.lengths = self.lanes.iter().map(arclength_of).collect();
        let mut seen = BTreeSet::new();
        for lane in &self.lanes {
            if !seen.insert(lane.id.as_str()) {
                return Err(Error::Invalid(format!("map `{}`: duplicate lane id `{}`", self.id, lane.id)));
            }
        }
        for rel in &self.relations {
            let (Some(ia), Some(ib)) = (self.lane_index(&rel.a), self.lane_index(&rel.b)) else {
                return Err(Error::Invalid(format!(
                    "map `{}`: relation {:?} references unknown lane ({} / {})",
                    self.id, rel.kind, rel.a, rel.b
                )));
            };
            if rel.kind != RelationKind::Successor && ia == ib {
                return Err(Error::Invalid(format!(
                    "map `{}`: {:?} relation of lane `{}` with itself",
                    self.id, rel.kind, rel.a
                )));
            }
            if rel.kind == RelationKind::Intersecting && (rel.arclen_a.is_none() || rel.arclen_b.is_none()) {
                return Err(Error::Invalid(format!(
                    "map `{}`: intersecting relation {}-{} needs s_a and s_b",
                    self.id, rel.a, rel.b
                )));
            }
            for (s, i) in [(rel.arclen_a, ia), (rel.arclen_b, ib)] {
                if let Some(s) = s {
                    if !(s.is_finite() && s >= 0.0 && s <= self.lengths[i] + 1e-9) {
                        return Err(Error::Invalid(format!(
                            "map `{}`: arclength {s} outside lane `{}` (length {})",
                            self.id, self.lanes[i].id, self.lengths[i]
                        )));
                    }
                }
            }
        }
        self.check_successors_acyclic()
    }

    fn check_successors_acyclic(&self) -> Result<()> {
        // Kahn's algorithm over the successor digraph.
        let n = self.lanes.len();
        let mut indeg = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (a, b, _) in self.successor_links() {
            out[a].push(b);
            indeg[b] += 1;
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut visited = 0;
        while let Some(v) = stack.pop() {
            visited += 1;
            for &w in &out[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    stack.push(w);
                }
            }
        }
        if visited != n {
            return Err(Error::Invalid(format!("map `{}`: successor relations form a cycle", self.id)));
        }
        Ok(())
    }

    pub fn lane_index(&self, id: &str) -> Option<usize> {
        self.lanes.iter().position(|l| l.id == id)
    }

    pub fn lane_length(&self, index: usize) -> f64 {
        self.lengths[index]
    }

    /// Successor links as `(from, to, distance from the start of `from` to the
    /// start of `to` along the path, i.e. exit_s - entry_s)`.
    pub(crate) fn successor_links(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.relations
            .iter()
            .filter(|r| r.kind == RelationKind::Successor)
            .filter_map(move |r| {
                let a = self.lane_index(&r.a)?;
                let b = self.lane_index(&r.b)?;
                let exit = r.arclen_a.unwrap_or(self.lengths[a]);
                let entry = r.arclen_b.unwrap_or(0.0);
                Some((a, b, exit - entry))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficScene {
    pub scene_id: String,
    pub location_label: String,
    pub map_ref: String,
    pub participants: Vec<TrafficParticipant>,
}

impl TrafficScene {
    pub fn validate(&self) -> Result<()> {
        if self.participants.is_empty() {
            return Err(Error::EmptyScene(self.scene_id.clone()));
        }
        let mut ids = BTreeSet::new();
        for p in &self.participants {
            p.validate()?;
            if !ids.insert(p.id.as_str()) {
                return Err(Error::Invalid(format!(
                    "scene `{}`: duplicate participant id `{}`",
                    self.scene_id, p.id
                )));
            }
        }
        Ok(())
    }
}

/// Scenes together with the maps they reference.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneSet {
    #[serde(default)]
    pub config_hash: String,
    pub maps: BTreeMap<String, LaneMap>,
    pub scenes: Vec<TrafficScene>,
}

impl SceneSet {
    pub fn finalize(&mut self) -> Result<()> {
        for (key, map) in self.maps.iter_mut() {
            if map.id.is_empty() {
                map.id = key.clone();
            }
            map.finalize()?;
        }
        for scene in &self.scenes {
            scene.validate()?;
            if !self.maps.contains_key(&scene.map_ref) {
                return Err(Error::Invalid(format!(
                    "scene `{}` references unknown map `{}`",
                    scene.scene_id, scene.map_ref
                )));
            }
        }
        Ok(())
    }

    pub fn map_for(&self, scene: &TrafficScene) -> Result<&LaneMap> {
        self.maps.get(&scene.map_ref).ok_or_else(|| {
            Error::Invalid(format!(
                "scene `{}` references unknown map `{}`",
                scene.scene_id, scene.map_ref
            ))
        })
    }
}
