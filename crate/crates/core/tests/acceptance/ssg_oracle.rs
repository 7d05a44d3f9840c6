//! Hand-built micro-scenes with hand-derived node and edge tables.
//!
//! Every lane is 4 m wide, so the membership kernel is `exp(-d^2 / 2)` and
//! the identity gate is 6 m. Horizon 50 m. Expected values below were worked
//! out on paper from the lane geometry; nothing here calls into the library
//! except to build the inputs and the graph under test.

use scene_embed::graph::{build_scene_graph, GraphParams, SceneGraph};
use scene_embed::scene::{Lane, LaneMap, LaneRelation, ObjectClass, TrafficParticipant, TrafficScene, Vec2};

const W: f64 = 4.0;

fn kernel(d: f64) -> f64 {
    (-d * d / 2.0).exp()
}

fn lane(id: &str, a: (f64, f64), b: (f64, f64)) -> Lane {
    Lane::new(id, W, vec![Vec2::new(a.0, a.1), Vec2::new(b.0, b.1)]).unwrap()
}

fn agent(id: &str, x: f64, y: f64, speed: f64, class: ObjectClass) -> TrafficParticipant {
    TrafficParticipant::new(id, Vec2::new(x, y), speed, 0.0, class).unwrap()
}

fn car(id: &str, x: f64, y: f64, speed: f64) -> TrafficParticipant {
    agent(id, x, y, speed, ObjectClass::Car)
}

/// Expected edge: `(origin, target, [lon, lat, int], path, int_path,
/// [origin_cl, target_cl, int_origin_cl, int_target_cl])`.
struct E(usize, usize, [f64; 3], f64, f64, [f64; 4]);

fn path(o: usize, t: usize, lon: f64, lat: f64, dist: f64, ocl: f64, tcl: f64) -> E {
    E(o, t, [lon, lat, 0.0], dist, 0.0, [ocl, tcl, 0.0, 0.0])
}

fn crossing(o: usize, t: usize, dist: f64, ocl: f64, tcl: f64) -> E {
    E(o, t, [0.0, 0.0, 1.0], 0.0, dist, [0.0, 0.0, ocl, tcl])
}

struct Case {
    name: &'static str,
    map: LaneMap,
    agents: Vec<TrafficParticipant>,
    nodes: Vec<[f64; 5]>,
    edges: Vec<E>,
}

fn single_lane() -> LaneMap {
    LaneMap::new("single", vec![lane("a", (0.0, 0.0), (100.0, 0.0))], vec![]).unwrap()
}

fn cases() -> Vec<Case> {
    let mut out = Vec::new();

    out.push(Case {
        name: "lone car",
        map: single_lane(),
        agents: vec![car("c", 10.0, 0.0, 7.0)],
        nodes: vec![[7.0, 1.0, 0.0, 0.0, 0.0]],
        edges: vec![],
    });

    out.push(Case {
        name: "car and truck in line",
        map: single_lane(),
        agents: vec![car("c", 10.0, 0.0, 5.0), agent("t", 22.0, 0.0, 7.0, ObjectClass::Truck)],
        nodes: vec![[5.0, 1.0, 0.0, 0.0, 0.0], [7.0, 0.0, 1.0, 0.0, 0.0]],
        edges: vec![path(0, 1, 1.0, 0.0, 12.0, 0.0, 0.0), path(1, 0, 1.0, 0.0, -12.0, 0.0, 0.0)],
    });

    // offsets of +0.5 (left) and -1.0 (right) of the centerline
    out.push(Case {
        name: "off-center pair",
        map: single_lane(),
        agents: vec![car("a", 10.0, 0.5, 3.0), car("b", 40.0, -1.0, 4.0)],
        nodes: vec![[3.0, 1.0, 0.0, 0.0, 0.0], [4.0, 1.0, 0.0, 0.0, 0.0]],
        edges: vec![path(0, 1, 1.0, 0.0, 30.0, 0.5, 1.0), path(1, 0, 1.0, 0.0, -30.0, 1.0, 0.5)],
    });

    // 0 and 1 are 60 m apart (beyond the horizon); the pedestrian is 20 m
    // off the lane and gets no identity.
    out.push(Case {
        name: "horizon and off-map pedestrian",
        map: single_lane(),
        agents: vec![
            car("a", 10.0, 0.0, 6.0),
            car("b", 70.0, 0.0, 6.0),
            car("c", 55.0, 0.0, 6.0),
            agent("p", 30.0, 20.0, 1.2, ObjectClass::Pedestrian),
        ],
        nodes: vec![
            [6.0, 1.0, 0.0, 0.0, 0.0],
            [6.0, 1.0, 0.0, 0.0, 0.0],
            [6.0, 1.0, 0.0, 0.0, 0.0],
            [1.2, 0.0, 0.0, 1.0, 0.0],
        ],
        edges: vec![
            path(0, 2, 1.0, 0.0, 45.0, 0.0, 0.0),
            path(1, 2, 1.0, 0.0, -15.0, 0.0, 0.0),
            path(2, 0, 1.0, 0.0, -45.0, 0.0, 0.0),
            path(2, 1, 1.0, 0.0, 15.0, 0.0, 0.0),
        ],
    });

    // Two parallel lanes 4 m apart, so both cars fall inside both gates.
    // a at y=1: d=+1 on r, d=-3 on l. b at y=4: d=+4 on r, d=0 on l.
    {
        let map = LaneMap::new(
            "parallel",
            vec![lane("r", (0.0, 0.0), (100.0, 0.0)), lane("l", (0.0, 4.0), (100.0, 4.0))],
            vec![LaneRelation::parallel("r", "l")],
        )
        .unwrap();
        let a_r = kernel(1.0) / (kernel(1.0) + kernel(3.0));
        let a_l = kernel(3.0) / (kernel(1.0) + kernel(3.0));
        let b_r = kernel(4.0) / (kernel(4.0) + 1.0);
        let b_l = 1.0 / (kernel(4.0) + 1.0);
        let lon = a_r * b_r + a_l * b_l;
        let lat = a_r * b_l + a_l * b_r;
        out.push(Case {
            name: "straddling parallel lanes",
            map,
            agents: vec![car("a", 10.0, 1.0, 6.0), car("b", 30.0, 4.0, 6.0)],
            nodes: vec![[6.0, 1.0, 0.0, 0.0, 0.0]; 2],
            // a's most certain identity is on r (|d|=1), b's on l (|d|=0)
            edges: vec![path(0, 1, lon, lat, 20.0, 1.0, 0.0), path(1, 0, lon, lat, -20.0, 0.0, 1.0)],
        });
    }

    // Parallel lanes 7 m apart (outside each other's gate) whose arclengths
    // are aligned at main s=100 <-> ramp s=0.
    {
        let map = LaneMap::new(
            "aligned",
            vec![lane("main", (0.0, 0.0), (200.0, 0.0)), lane("ramp", (100.0, -7.0), (180.0, -7.0))],
            vec![LaneRelation::parallel("main", "ramp").with_anchors(100.0, 0.0)],
        )
        .unwrap();
        // a: main s=110 -> 10 past the anchor; b: ramp s=25 -> 25 past it
        out.push(Case {
            name: "anchored parallel lanes",
            map,
            agents: vec![car("a", 110.0, 0.0, 10.0), car("b", 125.0, -7.0, 8.0)],
            nodes: vec![[10.0, 1.0, 0.0, 0.0, 0.0], [8.0, 1.0, 0.0, 0.0, 0.0]],
            edges: vec![path(0, 1, 0.0, 1.0, 15.0, 0.0, 0.0), path(1, 0, 0.0, 1.0, -15.0, 0.0, 0.0)],
        });
    }

    // a (40 m) -> b (60 m). Cars at a:30, b:15, b:45.
    {
        let map = LaneMap::new(
            "chain",
            vec![lane("a", (0.0, 0.0), (40.0, 0.0)), lane("b", (40.0, 0.0), (100.0, 0.0))],
            vec![LaneRelation::successor("a", "b")],
        )
        .unwrap();
        out.push(Case {
            name: "successor chain",
            map,
            agents: vec![car("x", 30.0, 0.0, 5.0), car("y", 55.0, 0.0, 5.0), car("z", 85.0, 0.0, 5.0)],
            nodes: vec![[5.0, 1.0, 0.0, 0.0, 0.0]; 3],
            // x -> z would be 10 + 45 = 55 m
            edges: vec![
                path(0, 1, 1.0, 0.0, 25.0, 0.0, 0.0),
                path(1, 0, 1.0, 0.0, -25.0, 0.0, 0.0),
                path(1, 2, 1.0, 0.0, 30.0, 0.0, 0.0),
                path(2, 1, 1.0, 0.0, -30.0, 0.0, 0.0),
            ],
        });
    }

    // h runs east, v runs north; they cross at h:50 / v:50.
    // a: h s=30 d=+0.5; b: v s=40 d=-0.8 (east of a northbound lane is its
    // right); c: v s=95 d=0. b and c share v but are 55 m apart.
    {
        let map = LaneMap::new(
            "cross",
            vec![lane("h", (0.0, 0.0), (100.0, 0.0)), lane("v", (50.0, -50.0), (50.0, 50.0))],
            vec![LaneRelation::intersecting("h", "v", 50.0, 50.0)],
        )
        .unwrap();
        out.push(Case {
            name: "crossing lanes",
            map,
            agents: vec![car("a", 30.0, 0.5, 8.0), car("b", 50.8, -10.0, 7.0), car("c", 50.0, 45.0, 9.0)],
            nodes: vec![[8.0, 1.0, 0.0, 0.0, 0.0], [7.0, 1.0, 0.0, 0.0, 0.0], [9.0, 1.0, 0.0, 0.0, 0.0]],
            edges: vec![
                crossing(0, 1, 20.0, 0.5, 0.8),
                crossing(0, 2, 20.0, 0.5, 0.0),
                crossing(1, 0, 10.0, 0.8, 0.5),
                crossing(2, 0, -45.0, 0.0, 0.5),
            ],
        });
    }

    out.push(figure_scene());

    // in (50 m) hands over to out at in:45 -> out:5, so the path from in:s
    // to out:t is (45 - s) + (t - 5). c sits at in:47, past the exit, and
    // 3 m before the start of out, which gives it a second identity (out
    // s=0, d=+3).
    {
        let map = LaneMap::new(
            "handover",
            vec![lane("in", (0.0, 0.0), (50.0, 0.0)), lane("out", (50.0, 0.0), (100.0, 0.0))],
            vec![LaneRelation::successor("in", "out").with_anchors(45.0, 5.0)],
        )
        .unwrap();
        let c_in = 1.0 / (1.0 + kernel(3.0));
        let c_out = kernel(3.0) / (1.0 + kernel(3.0));
        out.push(Case {
            name: "anchored successor",
            map,
            agents: vec![car("a", 20.0, 0.0, 4.0), car("b", 70.0, 0.0, 4.0), car("c", 47.0, 0.0, 4.0)],
            nodes: vec![[4.0, 1.0, 0.0, 0.0, 0.0]; 3],
            edges: vec![
                path(0, 1, 1.0, 0.0, 40.0, 0.0, 0.0),
                // only c's in-identity relates to a
                path(0, 2, c_in, 0.0, 27.0, 0.0, 0.0),
                path(1, 0, 1.0, 0.0, -40.0, 0.0, 0.0),
                // only c's out-identity relates to b: c passed the exit
                path(1, 2, c_out, 0.0, -20.0, 0.0, 3.0),
                path(2, 0, c_in, 0.0, -27.0, 0.0, 0.0),
                path(2, 1, c_out, 0.0, 20.0, 3.0, 0.0),
            ],
        });
    }

    out
}

/// Five vehicles with six projection identities: a two-lane approach (a1,
/// a2 7 m apart), a1 continuing into b, and a crossing lane c. v2 is
/// changing lanes exactly between a1 and a2 and is on both with certainty
/// 1/2.
fn figure_scene() -> Case {
    let map = LaneMap::new(
        "figure",
        vec![
            lane("a1", (0.0, 0.0), (60.0, 0.0)),
            lane("a2", (0.0, 7.0), (60.0, 7.0)),
            lane("b", (60.0, 0.0), (120.0, 0.0)),
            lane("c", (90.0, -40.0), (90.0, 40.0)),
        ],
        vec![
            LaneRelation::parallel("a1", "a2"),
            LaneRelation::successor("a1", "b"),
            LaneRelation::intersecting("b", "c", 30.0, 40.0),
        ],
    )
    .unwrap();
    // identities: v1 a1:10 | v2 a1:30 d=+3.5, a2:30 d=-3.5 | v3 a2:45 |
    // v4 b:18 d=+0.5 | v5 c:25 d=-0.3
    let agents = vec![
        car("v1", 10.0, 0.0, 8.0),
        car("v2", 30.0, 3.5, 6.0),
        agent("v3", 45.0, 7.0, 5.0, ObjectClass::Truck),
        car("v4", 78.0, 0.5, 9.0),
        agent("v5", 90.3, -15.0, 4.0, ObjectClass::Bike),
    ];
    let nodes = vec![
        [8.0, 1.0, 0.0, 0.0, 0.0],
        [6.0, 1.0, 0.0, 0.0, 0.0],
        [5.0, 0.0, 1.0, 0.0, 0.0],
        [9.0, 1.0, 0.0, 0.0, 0.0],
        [4.0, 0.0, 0.0, 0.0, 1.0],
    ];
    let edges = vec![
        // v1 -> v2: same lane via a1 (1/2), lateral via a2 (1/2), both 20 m
        path(0, 1, 0.5, 0.5, 20.0, 0.0, 3.5),
        path(0, 2, 0.0, 1.0, 35.0, 0.0, 0.0),
        // v1 -> v4 would be 50 + 18 = 68 m; v1/v5 lanes are unrelated
        path(1, 0, 0.5, 0.5, -20.0, 3.5, 0.0),
        path(1, 2, 0.5, 0.5, 15.0, 3.5, 0.0),
        // only v2's a1 identity leads into b: 30 + 18 = 48 m
        path(1, 3, 0.5, 0.0, 48.0, 3.5, 0.5),
        path(2, 0, 0.0, 1.0, -35.0, 0.0, 0.0),
        path(2, 1, 0.5, 0.5, -15.0, 0.0, 3.5),
        path(3, 1, 0.5, 0.0, -48.0, 0.5, 3.5),
        // v4 is 12 m before the crossing (b:30), v5 15 m before it (c:40)
        crossing(3, 4, 12.0, 0.5, 0.3),
        crossing(4, 3, 15.0, 0.3, 0.5),
    ];
    Case {
        name: "two-lane approach with successor and crossing",
        map,
        agents,
        nodes,
        edges,
    }
}

fn compare(case: &Case, g: &SceneGraph) -> std::result::Result<(f64, f64), String> {
    let fail = |msg: String| Err(format!("{}: {msg}", case.name));
    if g.nodes.len() != case.nodes.len() {
        return fail(format!("{} nodes, expected {}", g.nodes.len(), case.nodes.len()));
    }
    for (i, (got, want)) in g.nodes.iter().zip(&case.nodes).enumerate() {
        if got.iter().zip(want).any(|(a, b)| (a - b).abs() > 1e-12) {
            return fail(format!("node {i}: {got:?} != {want:?}"));
        }
    }
    let got_pairs: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.origin, e.target)).collect();
    let want_pairs: Vec<(usize, usize)> = case.edges.iter().map(|e| (e.0, e.1)).collect();
    if got_pairs != want_pairs {
        return fail(format!("edges {got_pairs:?}, expected {want_pairs:?}"));
    }
    let (mut cert_err, mut dist_err) = (0.0f64, 0.0f64);
    for (e, want) in g.edges.iter().zip(&case.edges) {
        let f = &e.features;
        for k in 0..3 {
            cert_err = cert_err.max((f[k] - want.2[k]).abs());
        }
        dist_err = dist_err.max((f[3] - want.3).abs()).max((f[4] - want.4).abs());
        for k in 0..4 {
            dist_err = dist_err.max((f[5 + k] - want.5[k]).abs());
        }
        if cert_err > 1e-9 || dist_err > 1e-6 {
            return fail(format!("edge {}->{}: got {:?}", e.origin, e.target, f));
        }
    }
    Ok((cert_err, dist_err))
}

/// Returns the number of scenes checked and the worst certainty / distance
/// deviation.
pub fn run() -> std::result::Result<String, String> {
    let cases = cases();
    let (mut cert, mut dist) = (0.0f64, 0.0f64);
    for case in &cases {
        let scene = TrafficScene {
            scene_id: case.name.to_string(),
            location_label: "oracle".into(),
            map_ref: case.map.id.clone(),
            participants: case.agents.clone(),
        };
        let g = build_scene_graph(&scene, &case.map, &GraphParams::default()).map_err(|e| e.to_string())?;
        let (c, d) = compare(case, &g)?;
        cert = cert.max(c);
        dist = dist.max(d);
    }
    Ok(format!(
        "{} micro-scenes match; max certainty error {cert:.1e}, max distance error {dist:.1e} m",
        cases.len()
    ))
}
