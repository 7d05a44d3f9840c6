//! Minimal dense numeric core: row-major matrices, perceptrons with
//! tape-based reverse-mode gradients, and the ADAM optimizer.

mod adam;
mod matrix;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use matrix::Matrix;
pub use mlp::{leaky_relu, Linear, Mlp, MlpSpec, MlpTape, Mode};

/// A fixed-layout collection of parameter tensors. Gradients use the same
/// type as the parameters they belong to.
pub trait Parameters: Clone {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += other`, tensor by tensor in a fixed order.
    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x *= k;
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Flattened copy of every tensor, in `tensors()` order.
    fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }
}
