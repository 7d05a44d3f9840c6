use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Matrix, Parameters};
use crate::error::{Error, Result};
use crate::seed::Rng;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width followed by the width of every affine layer.
    pub widths: Vec<usize>,
    pub leaky_slope: f64,
    pub dropout: f64,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, dropout: f64) -> Self {
        Self {
            widths,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            dropout,
        }
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("spec has at least two widths")
    }
}

/// Affine map `y = W x + b`, `W` stored as `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weight: Matrix::from_vec(fan_out, fan_in, data).expect("sized by construction"),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn in_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_width(&self) -> usize {
        self.weight.rows()
    }

    /// Rows of `x` are samples.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.matmul_t(&self.weight)?;
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(y)
    }
}

/// Whether a forward pass is for training (dropout active) or evaluation.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut Rng),
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }

    pub fn reborrow(&mut self) -> Mode<'_> {
        match self {
            Mode::Eval => Mode::Eval,
            Mode::Train(r) => Mode::Train(r),
        }
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    widths: Vec<usize>,
    /// Input of every affine layer.
    inputs: Vec<Matrix>,
    /// Pre-activation of every hidden layer.
    pre: Vec<Matrix>,
    /// Inverted-dropout multipliers (0 or 1/(1-r)) per hidden layer.
    masks: Vec<Option<Vec<f64>>>,
}

impl MlpTape {
    pub fn batch(&self) -> usize {
        self.inputs.first().map_or(0, |m| m.rows())
    }
}

/// Perceptron: affine, LeakyReLU and (in training) dropout per hidden layer;
/// the final affine layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(spec: MlpSpec, rng: &mut Rng) -> Self {
        assert!(spec.widths.len() >= 2, "an MLP needs at least two widths");
        let layers = spec
            .widths
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], rng))
            .collect();
        Self { spec, layers }
    }

    pub fn input_width(&self) -> usize {
        self.spec.input_width()
    }

    pub fn output_width(&self) -> usize {
        self.spec.output_width()
    }

    pub fn forward(&self, x: &Matrix, mut mode: Mode<'_>) -> Result<(Matrix, MlpTape)> {
        if x.cols() != self.input_width() {
            return Err(Error::shape(format!("input width {}", self.input_width()), x.cols()));
        }
        let slope = self.spec.leaky_slope;
        let rate = self.spec.dropout;
        let last = self.layers.len() - 1;
        let mut tape = MlpTape {
            widths: self.spec.widths.clone(),
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(last),
            masks: Vec::with_capacity(last),
        };
        let mut cur = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let h = layer.forward(&cur)?;
            tape.inputs.push(cur);
            if l == last {
                return Ok((h, tape));
            }
            let mut a = h.clone();
            for v in a.data_mut() {
                *v = leaky_relu(*v, slope);
            }
            let mask = match (&mut mode, rate > 0.0) {
                (Mode::Train(rng), true) => {
                    let keep = 1.0 / (1.0 - rate);
                    let m: Vec<f64> = (0..a.data().len())
                        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                        .collect();
                    for (v, k) in a.data_mut().iter_mut().zip(&m) {
                        *v *= k;
                    }
                    Some(m)
                }
                _ => None,
            };
            tape.pre.push(h);
            tape.masks.push(mask);
            cur = a;
        }
        unreachable!("loop returns at the last layer")
    }

    /// Reverse pass: parameter gradients (as an `Mlp` of the same shape) and
    /// the gradient with respect to the input.
    pub fn backward(&self, tape: &MlpTape, upstream: &Matrix) -> Result<(Mlp, Matrix)> {
        let mut grads = self.zeros_like();
        let dx = self.backward_into(tape, upstream, &mut grads)?;
        Ok((grads, dx))
    }

    /// Like [`Mlp::backward`] but accumulates into existing gradients.
    pub fn backward_into(&self, tape: &MlpTape, upstream: &Matrix, grads: &mut Mlp) -> Result<Matrix> {
        if tape.widths != self.spec.widths || tape.inputs.len() != self.layers.len() {
            return Err(Error::TapeMismatch(format!(
                "tape widths {:?}, network widths {:?}",
                tape.widths, self.spec.widths
            )));
        }
        if upstream.shape() != (tape.batch(), self.output_width()) {
            return Err(Error::TapeMismatch(format!(
                "upstream {:?}, expected {:?}",
                upstream.shape(),
                (tape.batch(), self.output_width())
            )));
        }
        let slope = self.spec.leaky_slope;
        let mut g = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            let gl = &mut grads.layers[l];
            gl.weight.add_assign(&g.t_matmul(&tape.inputs[l])?);
            for (b, s) in gl.bias.iter_mut().zip(g.column_sums()) {
                *b += s;
            }
            let mut gin = g.matmul(&self.layers[l].weight)?;
            if l > 0 {
                let pre = &tape.pre[l - 1];
                if let Some(mask) = &tape.masks[l - 1] {
                    for (v, m) in gin.data_mut().iter_mut().zip(mask) {
                        *v *= m;
                    }
                }
                for (v, h) in gin.data_mut().iter_mut().zip(pre.data()) {
                    if *h <= 0.0 {
                        *v *= slope;
                    }
                }
            }
            g = gin;
        }
        Ok(g)
    }
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn rand_matrix(r: usize, c: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Straight-line reimplementation used as an oracle.
    fn reference_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for (l, layer) in net.layers.iter().enumerate() {
            let mut next = Vec::new();
            for o in 0..layer.out_width() {
                let mut s = layer.bias[o];
                for i in 0..layer.in_width() {
                    s += layer.weight.get(o, i) * cur[i];
                }
                if l + 1 < net.layers.len() {
                    s = if s > 0.0 { s } else { 0.01 * s };
                }
                next.push(s);
            }
            cur = next;
        }
        cur
    }

    fn scalar_loss(net: &Mlp, x: &Matrix, w: &Matrix) -> f64 {
        let (y, _) = net.forward(x, Mode::Eval).unwrap();
        y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn leaky_definition() {
        assert_eq!(leaky_relu(-2.0, 0.01), -0.02);
        assert_eq!(leaky_relu(3.0, 0.01), 3.0);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut rng = seed::rng(0);
        let mut net = Mlp::new(MlpSpec::new(vec![3, 3], 0.0), &mut rng);
        net.layers[0].weight = Matrix::identity(3);
        let x = Matrix::row_vector(&[1.5, -2.0, 0.25]);
        let (y, _) = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = seed::rng(7);
        let net = Mlp::new(MlpSpec::new(vec![5, 8, 3], 0.0), &mut rng);
        let mut net = net;
        for l in &mut net.layers {
            for b in &mut l.bias {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let x = rand_matrix(4, 5, &mut rng);
        let (y, _) = net.forward(&x, Mode::Eval).unwrap();
        for r in 0..4 {
            let want = reference_forward(&net, x.row(r));
            for (a, b) in y.row(r).iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let mut rng = seed::rng(0);
        let net = Mlp::new(MlpSpec::new(vec![4, 6, 2], 0.0), &mut rng);
        assert!(matches!(
            net.forward(&Matrix::zeros(1, 3), Mode::Eval),
            Err(Error::ShapeMismatch { .. })
        ));
        let other = Mlp::new(MlpSpec::new(vec![4, 5, 2], 0.0), &mut rng);
        let (_, tape) = other.forward(&Matrix::zeros(1, 4), Mode::Eval).unwrap();
        assert!(matches!(net.backward(&tape, &Matrix::zeros(1, 2)), Err(Error::TapeMismatch(_))));
        let (_, tape) = net.forward(&Matrix::zeros(2, 4), Mode::Eval).unwrap();
        assert!(matches!(net.backward(&tape, &Matrix::zeros(1, 2)), Err(Error::TapeMismatch(_))));
    }

    #[test]
    fn linear_weight_gradient_closed_form() {
        let mut rng = seed::rng(1);
        let net = Mlp::new(MlpSpec::new(vec![3, 2], 0.0), &mut rng);
        let x = [0.5, -1.0, 2.0];
        let g = [0.3, -0.7];
        let (_, tape) = net.forward(&Matrix::row_vector(&x), Mode::Eval).unwrap();
        let (grads, dx) = net.backward(&tape, &Matrix::row_vector(&g)).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(grads.layers[0].weight.get(o, i), g[o] * x[i]);
            }
            assert_eq!(grads.layers[0].bias[o], g[o]);
        }
        for i in 0..3 {
            let want = g[0] * net.layers[0].weight.get(0, i) + g[1] * net.layers[0].weight.get(1, i);
            assert!((dx.get(0, i) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = seed::rng(2);
        let net = Mlp::new(MlpSpec::new(vec![4, 6, 2], 0.0), &mut rng);
        let x = rand_matrix(3, 4, &mut rng);
        let (_, tape) = net.forward(&x, Mode::Eval).unwrap();
        let (grads, dx) = net.backward(&tape, &Matrix::zeros(3, 2)).unwrap();
        assert!(grads.flatten().iter().all(|&v| v == 0.0));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    /// Central finite differences over every parameter and input entry.
    fn finite_difference_check(widths: Vec<usize>, seed_value: u64) -> f64 {
        let mut rng = seed::rng(seed_value);
        let mut net = Mlp::new(MlpSpec::new(widths.clone(), 0.0), &mut rng);
        for l in &mut net.layers {
            for b in &mut l.bias {
                *b = rng.random_range(-0.3..0.3);
            }
        }
        let x = rand_matrix(3, widths[0], &mut rng);
        let w = rand_matrix(3, *widths.last().unwrap(), &mut rng);
        let (_, tape) = net.forward(&x, Mode::Eval).unwrap();
        let (grads, dx) = net.backward(&tape, &w).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let analytic = grads.flatten();
        let n = net.param_count();
        for k in 0..n {
            let bump = |delta: f64| {
                let mut p = net.clone();
                let mut seen = 0;
                for t in p.tensors_mut() {
                    if k < seen + t.len() {
                        t[k - seen] += delta;
                        break;
                    }
                    seen += t.len();
                }
                scalar_loss(&p, &x, &w)
            };
            let numeric = (bump(h) - bump(-h)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[k], numeric));
        }
        for i in 0..x.data().len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let numeric = (scalar_loss(&net, &xp, &w) - scalar_loss(&net, &xm, &w)) / (2.0 * h);
            worst = worst.max(rel_err(dx.data()[i], numeric));
        }
        worst
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
    }

    #[test]
    fn gradients_match_finite_differences() {
        for s in 0..20 {
            let e = finite_difference_check(vec![4, 6, 2], s);
            assert!(e < 1e-4, "seed {s}: relative error {e}");
        }
        let e = finite_difference_check(vec![3, 5, 5, 5, 2], 99);
        assert!(e < 1e-4, "deep net: {e}");
    }

    #[test]
    fn dropout_rate_and_scaling() {
        let mut rng = seed::rng(3);
        let mut net = Mlp::new(MlpSpec::new(vec![1, 100_000, 1], 0.3), &mut rng);
        net.layers[0].weight = Matrix::from_vec(100_000, 1, vec![1.0; 100_000]).unwrap();
        let x = Matrix::row_vector(&[2.0]);
        let mut drng = seed::rng(4);
        let (_, tape) = net.forward(&x, Mode::Train(&mut drng)).unwrap();
        let mask = tape.masks[0].as_ref().unwrap();
        let zeros = mask.iter().filter(|&&m| m == 0.0).count() as f64 / mask.len() as f64;
        assert!((zeros - 0.3).abs() < 0.02, "dropped fraction {zeros}");
        assert!(mask.iter().all(|&m| m == 0.0 || (m - 1.0 / 0.7).abs() < 1e-15));
        // evaluation mode is the identity on activations
        let (_, tape) = net.forward(&x, Mode::Eval).unwrap();
        assert!(tape.masks[0].is_none());
    }

    #[test]
    fn dropout_gradients_match_finite_differences() {
        // with a fixed mask the network is a deterministic function
        let mut rng = seed::rng(5);
        let net = Mlp::new(MlpSpec::new(vec![4, 8, 3], 0.25), &mut rng);
        let x = rand_matrix(2, 4, &mut rng);
        let w = rand_matrix(2, 3, &mut rng);
        let loss = |n: &Mlp| {
            let mut r = seed::rng(11);
            let (y, _) = n.forward(&x, Mode::Train(&mut r)).unwrap();
            y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut r = seed::rng(11);
        let (_, tape) = net.forward(&x, Mode::Train(&mut r)).unwrap();
        let (grads, _) = net.backward(&tape, &w).unwrap();
        let analytic = grads.flatten();
        let h = 1e-5;
        let mut k = 0;
        for ti in 0..net.tensors().len() {
            for j in 0..net.tensors()[ti].len() {
                let mut p = net.clone();
                p.tensors_mut()[ti][j] += h;
                let mut m = net.clone();
                m.tensors_mut()[ti][j] -= h;
                let numeric = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!(rel_err(analytic[k], numeric) < 1e-4);
                k += 1;
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = seed::rng(6);
        let net = Mlp::new(MlpSpec::new(vec![4, 8, 3], 0.5), &mut rng);
        let x = rand_matrix(5, 4, &mut rng);
        let run = || {
            let mut r = seed::rng(8);
            net.forward(&x, Mode::Train(&mut r)).unwrap().0
        };
        assert_eq!(run(), run());
    }
}
