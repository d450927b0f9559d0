use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Real, Tensor};

/// Seeded source of initial parameter values.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Glorot-uniform: `U(-√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out)))`.
    pub fn xavier<T: Real>(&mut self, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Tensor<T> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| T::of(self.rng.random_range(-bound..bound)))
            .collect();
        Tensor::from_vec(rows, cols, data).expect("positive extents")
    }

    /// Xavier for a plain `[rows x cols]` weight applied as `W · x`.
    pub fn weight<T: Real>(&mut self, rows: usize, cols: usize) -> Tensor<T> {
        self.xavier(rows, cols, cols, rows)
    }
}
