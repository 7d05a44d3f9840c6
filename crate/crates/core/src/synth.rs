//! Synthetic lane maps and scenes with known structure.
//!
//! Each template has one canonical map and a parameterized placement rule.
//! Scenes are single snapshots; the template name doubles as location label.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Lane, LaneMap, LaneRelation, ObjectClass, SceneSet, TrafficParticipant, TrafficScene, Vec2};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioTemplate {
    StraightFollowing,
    MergeLane,
    FourWayIntersection,
    QueueJam,
    Mixed,
}

impl ScenarioTemplate {
    pub const ALL: [ScenarioTemplate; 5] = [
        ScenarioTemplate::StraightFollowing,
        ScenarioTemplate::MergeLane,
        ScenarioTemplate::FourWayIntersection,
        ScenarioTemplate::QueueJam,
        ScenarioTemplate::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioTemplate::StraightFollowing => "straight_following",
            ScenarioTemplate::MergeLane => "merge_lane",
            ScenarioTemplate::FourWayIntersection => "four_way_intersection",
            ScenarioTemplate::QueueJam => "queue_jam",
            ScenarioTemplate::Mixed => "mixed",
        }
    }

    /// Default placement ranges.
    pub fn default_spec(self) -> TemplateSpec {
        let spec = |count: (usize, usize), gap: (f64, f64), speed: (f64, f64)| TemplateSpec {
            count,
            gap,
            speed,
            lateral_jitter: 0.4,
            truck_probability: 0.1,
            vulnerable_count: (0, 0),
        };
        match self {
            ScenarioTemplate::StraightFollowing => spec((2, 6), (10.0, 30.0), (5.0, 11.0)),
            ScenarioTemplate::MergeLane => spec((2, 6), (8.0, 25.0), (4.0, 10.0)),
            ScenarioTemplate::FourWayIntersection => spec((4, 8), (6.0, 15.0), (2.0, 9.0)),
            ScenarioTemplate::QueueJam => spec((5, 15), (2.0, 6.0), (0.0, 1.0)),
            ScenarioTemplate::Mixed => TemplateSpec {
                vulnerable_count: (1, 3),
                ..spec((3, 8), (6.0, 20.0), (1.0, 8.0))
            },
        }
    }
}

impl fmt::Display for ScenarioTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario template `{s}`")))
    }
}

/// Placement ranges of one template. Ranges are inclusive `(min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSpec {
    /// Number of vehicles.
    pub count: (usize, usize),
    /// Bumper-to-bumper gap between consecutive vehicles on a lane, metres.
    pub gap: (f64, f64),
    pub speed: (f64, f64),
    /// Maximum absolute lateral offset from the centerline, metres.
    pub lateral_jitter: f64,
    pub truck_probability: f64,
    /// Pedestrians and bikes added on top of the vehicles.
    pub vulnerable_count: (usize, usize),
}

impl TemplateSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.count.0 >= 1
            && self.count.0 <= self.count.1
            && self.gap.0 >= 0.0
            && self.gap.0 <= self.gap.1
            && self.speed.0 >= 0.0
            && self.speed.0 <= self.speed.1
            && self.lateral_jitter >= 0.0
            && (0.0..=1.0).contains(&self.truck_probability)
            && self.vulnerable_count.0 <= self.vulnerable_count.1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid template spec {self:?}")))
        }
    }
}

const LANE_WIDTH: f64 = 3.5;
const VEHICLE_LENGTH: f64 = 4.5;
/// Lateral offset of each directional lane from the road axis at the
/// intersection; large enough that opposite lanes stay outside each other's
/// identity gate.
const OPPOSING_OFFSET: f64 = 3.0;
const ARM: f64 = 50.0;

fn lane(id: &str, pts: &[(f64, f64)]) -> Lane {
    Lane::new(id, LANE_WIDTH, pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect()).expect("canonical lane")
}

/// Canonical map of a template.
pub fn generate_map(template: ScenarioTemplate) -> LaneMap {
    let id = template.name();
    let map = match template {
        ScenarioTemplate::StraightFollowing | ScenarioTemplate::QueueJam => {
            LaneMap::new(id, vec![lane("main", &[(0.0, 0.0), (250.0, 0.0)])], vec![])
        }
        ScenarioTemplate::MergeLane => LaneMap::new(
            id,
            vec![
                lane("main", &[(0.0, 0.0), (250.0, 0.0)]),
                lane("ramp", &[(0.0, -LANE_WIDTH), (120.0, -LANE_WIDTH)]),
            ],
            vec![
                LaneRelation::parallel("main", "ramp"),
                LaneRelation::successor("ramp", "main").with_anchors(120.0, 120.0),
            ],
        ),
        ScenarioTemplate::FourWayIntersection => {
            let o = OPPOSING_OFFSET;
            let (near, far) = (ARM - o, ARM + o);
            LaneMap::new(
                id,
                vec![
                    lane("southbound", &[(-o, ARM), (-o, -ARM)]),
                    lane("northbound", &[(o, -ARM), (o, ARM)]),
                    lane("westbound", &[(ARM, o), (-ARM, o)]),
                    lane("eastbound", &[(-ARM, -o), (ARM, -o)]),
                ],
                vec![
                    LaneRelation::intersecting("southbound", "westbound", near, far),
                    LaneRelation::intersecting("southbound", "eastbound", far, near),
                    LaneRelation::intersecting("northbound", "westbound", far, near),
                    LaneRelation::intersecting("northbound", "eastbound", near, far),
                ],
            )
        }
        ScenarioTemplate::Mixed => LaneMap::new(
            id,
            vec![
                lane("right", &[(0.0, 0.0), (200.0, 0.0)]),
                lane("left", &[(0.0, LANE_WIDTH), (200.0, LANE_WIDTH)]),
                lane("cross", &[(100.0, -60.0), (100.0, 60.0)]),
            ],
            vec![
                LaneRelation::parallel("right", "left"),
                LaneRelation::intersecting("right", "cross", 100.0, 60.0),
                LaneRelation::intersecting("left", "cross", 100.0, 60.0 + LANE_WIDTH),
            ],
        ),
    };
    map.expect("canonical maps are valid")
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn uniform_count(rng: &mut Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

/// Point and heading on a lane at arclength `s`, shifted `d` to the left.
fn pose_on(lane: &Lane, s: f64, d: f64) -> (Vec2, f64) {
    let mut acc = 0.0;
    for w in lane.centerline.windows(2) {
        let seg = w[1].sub(w[0]);
        let len = seg.norm();
        if s <= acc + len {
            let dir = seg.scale(1.0 / len);
            let normal = Vec2::new(-dir.y, dir.x);
            let p = w[0].add(dir.scale(s - acc)).add(normal.scale(d));
            return (p, dir.y.atan2(dir.x));
        }
        acc += len;
    }
    let w = &lane.centerline[lane.centerline.len() - 2..];
    let dir = w[1].sub(w[0]);
    (w[1], dir.y.atan2(dir.x))
}

struct Placer<'a> {
    map: &'a LaneMap,
    spec: &'a TemplateSpec,
    rng: Rng,
    out: Vec<TrafficParticipant>,
}

impl Placer<'_> {
    fn vehicle_class(&mut self) -> ObjectClass {
        if self.rng.random::<f64>() < self.spec.truck_probability {
            ObjectClass::Truck
        } else {
            ObjectClass::Car
        }
    }

    fn place(&mut self, lane_id: &str, s: f64, class: ObjectClass) {
        let lane = &self.map.lanes[self.map.lane_index(lane_id).expect("template lane")];
        let j = self.spec.lateral_jitter;
        let d = if j > 0.0 { self.rng.random_range(-j..=j) } else { 0.0 };
        let (p, heading) = pose_on(lane, s, d);
        let speed = uniform(&mut self.rng, self.spec.speed);
        let id = format!("p{}", self.out.len());
        self.out
            .push(TrafficParticipant::new(id, p, speed, heading, class).expect("finite placement"));
    }

    /// A platoon of `n` vehicles on one lane, the first at `s0`, then
    /// upstream with sampled gaps; stops at `s_min`.
    fn platoon(&mut self, lane_id: &str, n: usize, s0: f64, s_min: f64) {
        let mut s = s0;
        for _ in 0..n {
            if s < s_min {
                break;
            }
            let class = self.vehicle_class();
            self.place(lane_id, s, class);
            s -= VEHICLE_LENGTH + uniform(&mut self.rng, self.spec.gap);
        }
    }
}

pub fn generate_scene(
    template: ScenarioTemplate,
    map: &LaneMap,
    spec: &TemplateSpec,
    scene_id: impl Into<String>,
    seed_value: u64,
) -> TrafficScene {
    let mut pl = Placer {
        map,
        spec,
        rng: seed::rng(seed_value),
        out: Vec::new(),
    };
    let n = uniform_count(&mut pl.rng, spec.count);
    match template {
        ScenarioTemplate::StraightFollowing | ScenarioTemplate::QueueJam => {
            let head = 240.0 - pl.rng.random_range(0.0..20.0);
            pl.platoon("main", n, head, 2.0);
        }
        ScenarioTemplate::MergeLane => {
            let on_ramp = 1 + pl.rng.random_range(0..n.div_ceil(2));
            let on_main = n - on_ramp.min(n);
            let ramp_head = pl.rng.random_range(60.0..115.0);
            pl.platoon("ramp", on_ramp.min(n), ramp_head, 2.0);
            let main_head = pl.rng.random_range(90.0..170.0);
            pl.platoon("main", on_main, main_head, 2.0);
        }
        ScenarioTemplate::FourWayIntersection => {
            let arms = ["southbound", "northbound", "westbound", "eastbound"];
            let mut per_arm = [1usize; 4];
            for _ in 4..n {
                per_arm[pl.rng.random_range(0..4)] += 1;
            }
            for (arm, &k) in arms.iter().zip(&per_arm) {
                // stop short of the crossing box so no car is gated onto a
                // crossing lane
                let head = pl.rng.random_range(30.0..(ARM - OPPOSING_OFFSET - 7.0));
                pl.platoon(arm, k, head, 1.0);
            }
        }
        ScenarioTemplate::Mixed => {
            let on_cross = pl.rng.random_range(0..=n / 3);
            let rest = n - on_cross;
            let on_left = pl.rng.random_range(0..=rest / 2);
            let on_right = rest - on_left;
            // heads stay clear of the crossing lane's gate
            let head = pl.rng.random_range(60.0..90.0);
            pl.platoon("right", on_right, head, 2.0);
            let head = pl.rng.random_range(60.0..90.0);
            pl.platoon("left", on_left, head, 2.0);
            let head = pl.rng.random_range(20.0..52.0);
            pl.platoon("cross", on_cross, head, 2.0);
            let vulnerable = uniform_count(&mut pl.rng, spec.vulnerable_count);
            for _ in 0..vulnerable {
                let class = if pl.rng.random::<bool>() {
                    ObjectClass::Pedestrian
                } else {
                    ObjectClass::Bike
                };
                // sidewalk beside the main road
                let x = pl.rng.random_range(20.0..180.0);
                let y = -LANE_WIDTH - pl.rng.random_range(3.0..6.0);
                let speed = if class == ObjectClass::Pedestrian {
                    pl.rng.random_range(0.5..2.0)
                } else {
                    pl.rng.random_range(2.0..6.0)
                };
                let id = format!("p{}", pl.out.len());
                let heading = if pl.rng.random::<bool>() { 0.0 } else { -std::f64::consts::PI };
                pl.out.push(TrafficParticipant::new(id, Vec2::new(x, y), speed, heading, class).expect("finite"));
            }
        }
    }
    TrafficScene {
        scene_id: scene_id.into(),
        location_label: template.name().to_string(),
        map_ref: map.id.clone(),
        participants: pl.out,
    }
}

/// Number of scenes per template plus optional per-template overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub counts: BTreeMap<ScenarioTemplate, usize>,
    pub templates: BTreeMap<ScenarioTemplate, TemplateSpec>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            counts: ScenarioTemplate::ALL.iter().map(|&t| (t, 120)).collect(),
            templates: ScenarioTemplate::ALL.iter().map(|&t| (t, t.default_spec())).collect(),
        }
    }
}

impl SynthConfig {
    pub fn with_counts(seed_value: u64, counts: &[(ScenarioTemplate, usize)]) -> Self {
        Self {
            seed: seed_value,
            counts: counts.iter().copied().collect(),
            ..Default::default()
        }
    }

    pub fn spec(&self, t: ScenarioTemplate) -> TemplateSpec {
        self.templates.get(&t).copied().unwrap_or_else(|| t.default_spec())
    }
}

/// Scenes for every template in `config.counts`, in template order, with
/// the maps they reference.
pub fn generate_dataset(config: &SynthConfig) -> Result<SceneSet> {
    let total: usize = config.counts.values().sum();
    if total < 10 {
        return Err(Error::TooFewSamples { needed: 10, got: total });
    }
    let mut set = SceneSet::default();
    for (&template, &count) in &config.counts {
        if count == 0 {
            continue;
        }
        let spec = config.spec(template);
        spec.validate()?;
        let map = generate_map(template);
        for i in 0..count {
            let s = seed::derive(config.seed, template.name(), &[i as u64]);
            let id = format!("{}-{i:05}", template.name());
            set.scenes.push(generate_scene(template, &map, &spec, id, s));
        }
        set.maps.insert(map.id.clone(), map);
    }
    set.finalize()?;
    Ok(set)
}
