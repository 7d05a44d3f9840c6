use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Matrix, Mlp, MlpSpec, Mode};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub hidden: usize,
    /// Number of affine layers.
    pub depth: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub test_fraction: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: 30,
            depth: 4,
            dropout: 0.1,
            epochs: 2500,
            learning_rate: 1e-3,
            test_fraction: 0.2,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.depth == 0 {
            return Err(Error::Invalid("probe widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Invalid(format!("probe dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Invalid(format!("probe test fraction {} outside (0, 1)", self.test_fraction)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Invalid("probe learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Test-split errors of the probe plus statistics of the full target column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub mse: f64,
    pub mae: f64,
    pub target_mean: f64,
    pub target_std: f64,
    pub target_min: f64,
    pub target_max: f64,
    pub train_count: usize,
    pub test_count: usize,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains an MLP from embeddings to one scalar target on a random split
/// and reports its errors on the held-out part. Inputs and target are
/// standardized with training-split statistics. A zero-spread input column
/// is only centered; a zero-spread target makes every prediction the
/// training mean.
pub fn probe_regress(embeddings: &[Vec<f64>], targets: &[f64], config: &ProbeConfig, seed_value: u64) -> Result<ProbeReport> {
    config.validate()?;
    let n = embeddings.len();
    if n < 10 {
        return Err(Error::TooFewSamples { needed: 10, got: n });
    }
    if targets.len() != n {
        return Err(Error::shape(format!("{n} targets"), targets.len()));
    }
    let dim = embeddings[0].len();
    if dim == 0 || embeddings.iter().any(|e| e.len() != dim) {
        return Err(Error::Invalid("embeddings must share a positive width".into()));
    }
    if embeddings.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("probe inputs".into()));
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng_for(seed_value, "probe-split", &[]));
    let n_test = ((n as f64 * config.test_fraction).round() as usize).clamp(1, n - 1);
    let (test, train) = idx.split_at(n_test);

    let spread = |s: f64| if s > 0.0 { s } else { 1.0 };
    let col_stats: Vec<(f64, f64)> = (0..dim)
        .map(|c| {
            let (m, s) = mean_std(train.iter().map(|&i| embeddings[i][c]));
            (m, spread(s))
        })
        .collect();
    let (t_mean, t_std) = mean_std(train.iter().map(|&i| targets[i]));
    let design = |rows: &[usize]| -> Result<Matrix> {
        let data = rows
            .iter()
            .flat_map(|&i| embeddings[i].iter().zip(&col_stats).map(|(v, (m, s))| (v - m) / s))
            .collect();
        Matrix::from_vec(rows.len(), dim, data)
    };
    let x_train = design(train)?;
    let y_train: Vec<f64> = train.iter().map(|&i| (targets[i] - t_mean) / spread(t_std)).collect();

    let mut widths = vec![dim];
    widths.extend(std::iter::repeat_n(config.hidden, config.depth - 1));
    widths.push(1);
    let mut rng = seed::rng_for(seed_value, "probe-init", &[]);
    let mut net = Mlp::new(MlpSpec::new(widths, config.dropout), &mut rng);
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            ..Default::default()
        },
        &net,
    );
    let mut drop_rng = seed::rng_for(seed_value, "probe-dropout", &[]);
    let scale = 2.0 / train.len() as f64;
    for epoch in 0..config.epochs {
        let (out, tape) = net.forward(&x_train, Mode::Train(&mut drop_rng))?;
        let grad: Vec<f64> = out.data().iter().zip(&y_train).map(|(p, y)| scale * (p - y)).collect();
        let (grads, _) = net.backward(&tape, &Matrix::from_vec(train.len(), 1, grad)?)?;
        if !grads.layers.iter().all(|l| l.weight.is_finite()) {
            return Err(Error::NonFinite(format!("probe gradient at epoch {epoch}")));
        }
        adam.step(&mut net, &grads)?;
    }

    let (pred, _) = net.forward(&design(test)?, Mode::Eval)?;
    let mut se = 0.0;
    let mut ae = 0.0;
    for (p, &i) in pred.data().iter().zip(test) {
        let err = p * t_std + t_mean - targets[i];
        se += err * err;
        ae += err.abs();
    }
    let (mean, std) = mean_std(targets.iter().copied());
    Ok(ProbeReport {
        mse: se / n_test as f64,
        mae: ae / n_test as f64,
        target_mean: mean,
        target_std: std,
        target_min: targets.iter().copied().fold(f64::INFINITY, f64::min),
        target_max: targets.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        train_count: train.len(),
        test_count: n_test,
    })
}
