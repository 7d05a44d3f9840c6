//! Reverse-mode gradients against central finite differences.

use rand::seq::index::sample;
use rand::Rng as _;
use scene_embed::encoder::{encode, message_pass, message_pass_backward, EncoderConfig, EncoderParams, GnnLayer};
use scene_embed::graph::{Edge, SceneGraph, EDGE_FEATURES, NODE_FEATURES};
use scene_embed::nn::{Matrix, Mlp, MlpSpec, Mode, Parameters};
use scene_embed::seed::{self, Rng};
use scene_embed::training::{euclidean_distance, triplet_step, Triplet};

const H: f64 = 1e-5;
const SEEDS: u64 = 20;
/// Entries smaller than this fraction of the largest gradient entry (or
/// than `FLOOR`) are compared on that scale instead of their own: central
/// differences of an O(100) loss carry O(1e-9) rounding noise.
const RELATIVE_FLOOR: f64 = 1e-4;
const FLOOR: f64 = 1e-6;

#[derive(Default)]
struct Worst {
    rel: f64,
    checked: usize,
}

impl Worst {
    fn record(&mut self, analytic: f64, numeric: f64, floor: f64) {
        let scale = analytic.abs().max(numeric.abs()).max(floor);
        self.rel = self.rel.max((analytic - numeric).abs() / scale);
        self.checked += 1;
    }
}

fn floor_for(grad: &[f64]) -> f64 {
    let largest = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    (RELATIVE_FLOOR * largest).max(FLOOR)
}

/// Flat index -> (tensor, offset).
fn locate<P: Parameters>(p: &P, mut k: usize) -> (usize, usize) {
    for (t, tensor) in p.tensors().iter().enumerate() {
        if k < tensor.len() {
            return (t, k);
        }
        k -= tensor.len();
    }
    panic!("index out of range")
}

/// Compares `grads` with central differences of `loss` at `params` over
/// the given flat coordinates.
fn check_params<P: Parameters>(params: &P, grads: &P, coords: &[usize], loss: impl Fn(&P) -> f64, worst: &mut Worst) {
    let analytic = grads.flatten();
    let floor = floor_for(&analytic);
    for &k in coords {
        let (t, i) = locate(params, k);
        let mut plus = params.clone();
        plus.tensors_mut()[t][i] += H;
        let mut minus = params.clone();
        minus.tensors_mut()[t][i] -= H;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * H);
        worst.record(analytic[k], numeric, floor);
    }
}

fn check_input(x: &Matrix, analytic: &Matrix, loss: impl Fn(&Matrix) -> f64, worst: &mut Worst) {
    let floor = floor_for(analytic.data());
    for k in 0..x.data().len() {
        let mut plus = x.clone();
        plus.data_mut()[k] += H;
        let mut minus = x.clone();
        minus.data_mut()[k] -= H;
        worst.record(analytic.data()[k], (loss(&plus) - loss(&minus)) / (2.0 * H), floor);
    }
}

/// Zero-initialized biases put every unit of an all-zero input exactly on
/// the LeakyReLU kink; shifting all parameters avoids that.
fn jitter<P: Parameters>(p: &mut P, rng: &mut Rng) {
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn dot(a: &Matrix, b: &Matrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

pub fn random_graph(nodes: usize, rng: &mut Rng) -> SceneGraph {
    let nodes_f: Vec<[f64; NODE_FEATURES]> = (0..nodes)
        .map(|_| {
            let mut f = [0.0; NODE_FEATURES];
            f[0] = rng.random_range(0.0..12.0);
            f[1 + rng.random_range(0..4)] = 1.0;
            f
        })
        .collect();
    let mut edges = Vec::new();
    for o in 0..nodes {
        for t in 0..nodes {
            if o != t && rng.random::<f64>() < 0.5 {
                let mut f = [0.0; EDGE_FEATURES];
                for v in f.iter_mut().take(3) {
                    *v = rng.random_range(0.0..1.0);
                }
                for v in f.iter_mut().skip(3) {
                    *v = rng.random_range(-20.0..20.0);
                }
                edges.push(Edge {
                    origin: o,
                    target: t,
                    features: f,
                });
            }
        }
    }
    SceneGraph {
        scene_id: "random".into(),
        location_label: "random".into(),
        node_ids: (0..nodes).map(|i| format!("n{i}")).collect(),
        nodes: nodes_f,
        edges,
    }
}

fn mlp_case(s: u64, worst: &mut Worst) {
    let mut rng = seed::rng_for(s, "fd-mlp", &[]);
    let mut mlp = Mlp::new(
        MlpSpec {
            widths: vec![5, 9, 7, 4],
            leaky_slope: 0.01,
            dropout: 0.1,
        },
        &mut rng,
    );
    jitter(&mut mlp, &mut rng);
    let x = random_matrix(3, 5, &mut rng);
    let r = random_matrix(3, 4, &mut rng);
    // the same dropout masks in every evaluation
    let mask_seed = rng.random::<u64>();
    let run = |m: &Mlp, x: &Matrix| m.forward(x, Mode::Train(&mut seed::rng(mask_seed))).unwrap();
    let (_, tape) = run(&mlp, &x);
    let (grads, dx) = mlp.backward(&tape, &r).unwrap();
    let all: Vec<usize> = (0..mlp.param_count()).collect();
    check_params(&mlp, &grads, &all, |m| dot(&run(m, &x).0, &r), worst);
    check_input(&x, &dx, |x| dot(&run(&mlp, x).0, &r), worst);
}

fn layer_case(s: u64, edge_features: bool, worst: &mut Worst) {
    let mut rng = seed::rng_for(s, "fd-layer", &[edge_features as u64]);
    let config = EncoderConfig {
        hidden: 8,
        embedding: 4,
        gnn_dropout: 0.1,
        leaky_slope: 0.01,
    };
    let width = if edge_features { NODE_FEATURES } else { 6 };
    let mut layer = GnnLayer::new(width, edge_features, &config, &mut rng);
    jitter(&mut layer, &mut rng);
    let n = rng.random_range(2..=5);
    let graph = random_graph(n, &mut rng);
    let states = random_matrix(n, width, &mut rng);
    let r = random_matrix(n, config.hidden, &mut rng);
    let mask_seed = rng.random::<u64>();
    let run = |l: &GnnLayer, x: &Matrix| message_pass(l, &graph, x, Mode::Train(&mut seed::rng(mask_seed))).unwrap();
    let (_, tape) = run(&layer, &states);
    let mut grads = layer.zeros_like();
    let d_states = message_pass_backward(&layer, &graph, &tape, &r, &mut grads).unwrap();
    let all: Vec<usize> = (0..layer.param_count()).collect();
    check_params(&layer, &grads, &all, |l| dot(&run(l, &states).0, &r), worst);
    check_input(&states, &d_states, |x| dot(&run(&layer, x).0, &r), worst);
}

/// Anchor, a perturbed copy as positive, and an unrelated negative.
fn random_triplet(rng: &mut Rng) -> Triplet {
    let n = rng.random_range(1..=5);
    let anchor = random_graph(n, rng);
    let mut positive = anchor.clone();
    for node in &mut positive.nodes {
        node[0] += rng.random_range(-1.0..1.0);
    }
    for e in &mut positive.edges {
        e.features[3] += rng.random_range(-1.0..1.0);
    }
    let m = rng.random_range(1..=5);
    Triplet {
        anchor,
        positive,
        negative: random_graph(m, rng),
    }
}

fn encoder_case(s: u64, config: EncoderConfig, coords: Option<usize>, worst: &mut Worst) {
    let mut rng = seed::rng_for(s, "fd-encoder", &[config.hidden as u64]);
    let mut params = EncoderParams::new(config, &mut rng);
    jitter(&mut params, &mut rng);
    let triplet = random_triplet(&mut rng);
    let mask_seed = rng.random::<u64>();
    // A margin just large enough to keep the hinge active; a huge one would
    // drown the finite differences in rounding noise.
    let mut masks = seed::rng(mask_seed);
    let mut embed = |g| encode(&params, g, Mode::Train(&mut masks)).unwrap();
    let (a, p, n) = (embed(&triplet.anchor), embed(&triplet.positive), embed(&triplet.negative));
    let margin = euclidean_distance(&a, &n).unwrap() - euclidean_distance(&a, &p).unwrap() + 1.0;
    let loss = |p: &EncoderParams| triplet_step(p, &triplet, margin, Some(&mut seed::rng(mask_seed)), None).unwrap();
    let mut grads = params.zeros_like();
    triplet_step(&params, &triplet, margin, Some(&mut seed::rng(mask_seed)), Some(&mut grads)).unwrap();
    let total = params.param_count();
    let idx: Vec<usize> = match coords {
        Some(c) => sample(&mut rng, total, c.min(total)).into_vec(),
        None => (0..total).collect(),
    };
    check_params(&params, &grads, &idx, loss, worst);
}

pub fn run() -> std::result::Result<String, String> {
    let mut mlp = Worst::default();
    let mut layer = Worst::default();
    let mut full = Worst::default();
    let small = EncoderConfig {
        hidden: 8,
        embedding: 4,
        gnn_dropout: 0.1,
        leaky_slope: 0.01,
    };
    for s in 0..SEEDS {
        mlp_case(s, &mut mlp);
        layer_case(s, true, &mut layer);
        layer_case(s, false, &mut layer);
        encoder_case(s, small, None, &mut full);
        // the real architecture on a sample of its parameters
        encoder_case(s, EncoderConfig::default(), Some(150), &mut full);
    }
    let worst = mlp.rel.max(layer.rel).max(full.rel);
    let msg = format!(
        "max relative error mlp {:.1e}, gnn layer {:.1e}, encoder+triplet {:.1e} ({} coordinates, {SEEDS} seeds)",
        mlp.rel,
        layer.rel,
        full.rel,
        mlp.checked + layer.checked + full.checked
    );
    if worst < 1e-3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}
