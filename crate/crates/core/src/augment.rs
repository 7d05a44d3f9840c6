//! Positive-sample generation by perturbing the object list.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::scene::{TrafficScene, Vec2};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentParams {
    pub p_select: f64,
    /// Std of the displacement along the heading, metres.
    pub sigma_pos: f64,
    /// Std of the speed perturbation, m/s.
    pub sigma_speed: f64,
    pub seed: u64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            p_select: 0.5,
            sigma_pos: 1.0,
            sigma_speed: 0.5,
            seed: 0,
        }
    }
}

impl AugmentParams {
    /// Seed for one scene, derived from the global seed, a stream index
    /// (e.g. the epoch) and the scene id.
    pub fn for_scene(&self, stream: u64, scene_id: &str) -> AugmentParams {
        AugmentParams {
            seed: seed::derive(self.seed, "augment", &[stream, seed::hash_str(scene_id)]),
            ..*self
        }
    }
}

pub fn augment_scene(scene: &TrafficScene, params: &AugmentParams) -> TrafficScene {
    let mut rng = seed::rng(params.seed);
    // Normal::new only fails for non-finite or negative std
    let pos = Normal::new(0.0, params.sigma_pos.max(0.0)).expect("valid sigma_pos");
    let vel = Normal::new(0.0, params.sigma_speed.max(0.0)).expect("valid sigma_speed");
    let mut out = scene.clone();
    for p in &mut out.participants {
        // always draw so the stream layout does not depend on selections
        let selected = rng.random::<f64>() < params.p_select;
        let shift: f64 = pos.sample(&mut rng);
        let dv: f64 = vel.sample(&mut rng);
        if !selected {
            continue;
        }
        let (s, c) = p.heading.sin_cos();
        p.position = p.position.add(Vec2::new(c, s).scale(shift));
        p.speed = (p.speed + dv).max(0.0);
    }
    out
}
