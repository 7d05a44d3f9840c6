//! Frenet projection of participants onto lane centerlines.

use serde::{Deserialize, Serialize};

use crate::scene::{Lane, LaneMap, TrafficParticipant, Vec2};

/// A hypothesis that a participant drives on a particular lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionIdentity {
    pub participant_id: String,
    /// Index into `LaneMap::lanes`.
    pub lane: usize,
    pub lane_id: String,
    pub s: f64,
    /// Signed lateral offset, positive to the left of the driving direction.
    pub d: f64,
    pub certainty: f64,
}

/// Closest point on the centerline: `(s, d)` with `|d|` the Euclidean
/// point-to-polyline distance. Ties between segments go to the first one.
pub fn project_point(lane: &Lane, p: Vec2) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut acc = 0.0;
    for w in lane.centerline.windows(2) {
        let (a, b) = (w[0], w[1]);
        let seg = b.sub(a);
        let len2 = seg.dot(seg);
        let len = len2.sqrt();
        let t = (p.sub(a).dot(seg) / len2).clamp(0.0, 1.0);
        let foot = a.add(seg.scale(t));
        let off = p.sub(foot);
        let dist = off.norm();
        if dist < best.0 {
            let sign = if seg.cross(off) < 0.0 { -1.0 } else { 1.0 };
            best = (dist, acc + t * len, sign * dist);
        }
        acc += len;
    }
    (best.1, best.2)
}

/// Gaussian lane-membership kernel with sigma = width / 4.
pub fn certainty_kernel(d: f64, lane_width: f64) -> f64 {
    let sigma = lane_width / 4.0;
    (-(d * d) / (2.0 * sigma * sigma)).exp()
}

/// Default gating distance: 1.5 lane widths.
pub const DEFAULT_GATE_FACTOR: f64 = 1.5;

/// All lanes within `gate` metres of the participant, with certainties
/// normalized to sum to one. Identities are ordered by lane index.
pub fn candidate_identities(
    participant: &TrafficParticipant,
    map: &LaneMap,
    gate: f64,
) -> Vec<ProjectionIdentity> {
    gated_identities(participant, map, |_| gate)
}

/// Like [`candidate_identities`], but each lane gates at `gate_factor` times
/// its own width.
pub fn candidate_identities_relative(
    participant: &TrafficParticipant,
    map: &LaneMap,
    gate_factor: f64,
) -> Vec<ProjectionIdentity> {
    gated_identities(participant, map, |lane| gate_factor * lane.width)
}

fn gated_identities(
    participant: &TrafficParticipant,
    map: &LaneMap,
    gate: impl Fn(&Lane) -> f64,
) -> Vec<ProjectionIdentity> {
    let mut out: Vec<ProjectionIdentity> = map
        .lanes
        .iter()
        .enumerate()
        .filter_map(|(i, lane)| {
            let (s, d) = project_point(lane, participant.position);
            (d.abs() <= gate(lane)).then(|| ProjectionIdentity {
                participant_id: participant.id.clone(),
                lane: i,
                lane_id: lane.id.clone(),
                s: s.min(map.lane_length(i)),
                d,
                certainty: certainty_kernel(d, lane.width),
            })
        })
        .collect();
    let total: f64 = out.iter().map(|c| c.certainty).sum();
    if total > 0.0 {
        for c in &mut out {
            c.certainty /= total;
        }
    } else if !out.is_empty() {
        // every kernel underflowed; split uniformly
        let u = 1.0 / out.len() as f64;
        for c in &mut out {
            c.certainty = u;
        }
    }
    out
}
