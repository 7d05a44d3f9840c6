//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so that every
//! criterion is reported even when an earlier one fails.

mod gradients;
mod learning;
mod ssg_oracle;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use scene_embed::config::Config;
use scene_embed::encoder::{encode, EncoderConfig, EncoderParams};
use scene_embed::graph::{Edge, SceneGraph};
use scene_embed::nn::Mode;
use scene_embed::pipeline::{cmd_generate, cmd_train};
use scene_embed::seed;
use scene_embed::synth::ScenarioTemplate;
use scene_embed::training::{euclidean_distance, triplet_loss};

type Outcome = std::result::Result<String, String>;

fn permutation_invariance() -> Outcome {
    let mut rng = seed::rng_for(0, "permutation", &[]);
    let params = EncoderParams::new(EncoderConfig::default(), &mut rng);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let n = 1 + i % 8;
        let g = gradients::random_graph(n, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        // node i of g becomes node perm[i] of h
        let mut nodes = vec![[0.0; 5]; n];
        let mut ids = vec![String::new(); n];
        for (i, &p) in perm.iter().enumerate() {
            nodes[p] = g.nodes[i];
            ids[p] = g.node_ids[i].clone();
        }
        let mut edges: Vec<Edge> = g
            .edges
            .iter()
            .map(|e| Edge {
                origin: perm[e.origin],
                target: perm[e.target],
                features: e.features,
            })
            .collect();
        edges.shuffle(&mut rng);
        let h = SceneGraph {
            node_ids: ids,
            nodes,
            edges,
            ..g.clone()
        };
        let a = encode(&params, &g, Mode::Eval).map_err(|e| e.to_string())?;
        let b = encode(&params, &h, Mode::Eval).map_err(|e| e.to_string())?;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    let msg = format!("100 graphs, max component deviation {worst:.1e}");
    if worst < 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn closed_form() -> Outcome {
    let mut worst = 0.0f64;
    let mut check = |got: scene_embed::Result<f64>, want: f64| -> std::result::Result<(), String> {
        let got = got.map_err(|e| e.to_string())?;
        worst = worst.max((got - want).abs());
        Ok(())
    };
    check(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]), 5.0)?;
    check(euclidean_distance(&[1.0, -2.0, 2.0], &[1.0, -2.0, 2.0]), 0.0)?;
    // twelve coordinates each differing by 1/2: sqrt(12 / 4)
    let a: Vec<f64> = (0..12).map(|i| i as f64 * 0.25).collect();
    let b: Vec<f64> = a.iter().map(|x| x - 0.5).collect();
    check(euclidean_distance(&a, &b), 3f64.sqrt())?;
    // d+ = 0.439, d- = 2.927, M = 0.5: 0.439 - 2.927 + 0.5 < 0
    check(triplet_loss(&[0.0, 0.0], &[0.439, 0.0], &[0.0, 2.927], 0.5), 0.0)?;
    // d+ = 2, d- = 5, M = 3.5 -> 0.5
    check(triplet_loss(&[1.0, 2.0, 3.0], &[1.0, 2.0, 5.0], &[4.0, 6.0, 3.0], 3.5), 0.5)?;
    // d+ = 5, d- = 5 -> M
    check(triplet_loss(&[0.0, 0.0], &[3.0, 4.0], &[-4.0, 3.0], 0.5), 0.5)?;
    // d+ = 1, d- = 1.5, M = 0.5 -> exactly on the hinge
    check(triplet_loss(&[0.0], &[1.0], &[-1.5], 0.5), 0.0)?;
    let msg = format!("7 hand values, max deviation {worst:.1e}");
    if worst <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn train_once(config: &Config, scenes: &Path, out: &Path) -> std::result::Result<Vec<Vec<u8>>, String> {
    cmd_train(config, scenes, out, false).map_err(|e| e.to_string())?;
    ["loss.csv", "final.json", "best.json"]
        .iter()
        .map(|f| std::fs::read(out.join(f)).map_err(|e| format!("{f}: {e}")))
        .collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut config = Config::default();
    config.synthetic.counts = ScenarioTemplate::ALL.iter().map(|&t| (t, 12)).collect();
    config.train.epochs = 4;
    config.train.batch_size = 16;
    cmd_generate(&config, &dir.path().join("data")).map_err(|e| e.to_string())?;
    let scenes = dir.path().join("data/scenes.json");
    let first = train_once(&config, &scenes, &dir.path().join("run1"))?;
    let second = train_once(&config, &scenes, &dir.path().join("run2"))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let single = pool.install(|| train_once(&config, &scenes, &dir.path().join("run3")))?;
    let same = first == second && first == single;
    let msg = format!(
        "two runs and a single-thread run: loss.csv, final.json, best.json byte-identical: {same} ({} + {} bytes)",
        first[0].len(),
        first[1].len()
    );
    if same {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    let mut failures = 0;
    let mut report = |n: u32, name: &str, start: Instant, r: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(msg) => println!("PASS criterion {n} ({name}): {msg} [{secs:.1} s]"),
            Err(msg) => {
                failures += 1;
                println!("FAIL criterion {n} ({name}): {msg} [{secs:.1} s]");
            }
        }
    };

    let t = Instant::now();
    report(1, "gradient check", t, guarded(gradients::run));
    let t = Instant::now();
    report(2, "permutation invariance", t, guarded(permutation_invariance));

    let t = Instant::now();
    let mut trained = None;
    let r = guarded(|| {
        let (r, model) = learning::discrimination();
        trained = model;
        r
    });
    report(3, "triplet discrimination", t, r);

    let t = Instant::now();
    let r = match &trained {
        Some(m) => guarded(|| learning::probes(m)),
        None => Err("no trained encoder".into()),
    };
    report(4, "probe meaningfulness", t, r);
    let t = Instant::now();
    let r = match &trained {
        Some(m) => guarded(|| learning::clustering(m)),
        None => Err("no trained encoder".into()),
    };
    report(5, "clustering recovery", t, r);

    let t = Instant::now();
    report(6, "loss and distance closed form", t, guarded(closed_form));
    let t = Instant::now();
    report(7, "scene graph oracle", t, guarded(ssg_oracle::run));
    let t = Instant::now();
    report(8, "training determinism", t, guarded(determinism));

    if failures > 0 {
        println!("{failures} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
