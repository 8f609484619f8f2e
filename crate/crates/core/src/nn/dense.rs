//! Fully-connected layer with explicit forward caches and accumulating
//! gradients.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::Real;

/// Negative-side slope of the leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Tanh,
    Linear,
}

/// One affine layer `y = act(x W + b)`, `W` stored (in, out) row-major.
/// Gradient buffers live alongside the parameters and accumulate across
/// backward calls until [`Dense::zero_grads`].
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub act: Activation,
    pub dw: Array2<T>,
    pub db: Array1<T>,
}

/// Intermediates from one forward call: the input and the pre-activation.
#[derive(Debug, Clone)]
pub struct DenseCache<T> {
    x: Array2<T>,
    z: Array2<T>,
}

impl<T: Real> Dense<T> {
    /// Uniform fan-in initialization on `[-1/sqrt(in), 1/sqrt(in)]`, with the
    /// whole layer scaled by `scale` (heads use 0.01 to start near neutral).
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        act: Activation,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "layer dims must be positive");
        let bound = scale / (in_dim as f64).sqrt();
        let mut draw = || T::from_f64(rng.random_range(-bound..bound));
        let w = Array2::from_shape_simple_fn((in_dim, out_dim), &mut draw);
        let b = Array1::from_shape_simple_fn(out_dim, &mut draw);
        Self {
            dw: Array2::zeros(w.raw_dim()),
            db: Array1::zeros(b.raw_dim()),
            w,
            b,
            act,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: &Array2<T>) -> (Array2<T>, DenseCache<T>) {
        assert_eq!(x.ncols(), self.in_dim(), "input width mismatch");
        let z = x.dot(&self.w) + &self.b;
        let y = match self.act {
            Activation::Linear => z.clone(),
            Activation::LeakyRelu => {
                let slope = T::from_f64(LEAKY_SLOPE);
                z.mapv(|v| if v > T::zero() { v } else { v * slope })
            }
            Activation::Tanh => z.mapv(|v| v.tanh()),
        };
        (y, DenseCache { x: x.clone(), z })
    }

    /// Push `dy` back through the layer, accumulating parameter gradients and
    /// returning the input gradient.
    pub fn backward(&mut self, cache: &DenseCache<T>, dy: &Array2<T>) -> Array2<T> {
        assert_eq!(dy.ncols(), self.out_dim(), "upstream width mismatch");
        assert_eq!(dy.nrows(), cache.z.nrows(), "stale cache: batch mismatch");
        let dz = match self.act {
            Activation::Linear => dy.clone(),
            Activation::LeakyRelu => {
                let slope = T::from_f64(LEAKY_SLOPE);
                let mut dz = dy.clone();
                dz.zip_mut_with(&cache.z, |g, &z| {
                    if z <= T::zero() {
                        *g = *g * slope;
                    }
                });
                dz
            }
            Activation::Tanh => {
                let mut dz = dy.clone();
                dz.zip_mut_with(&cache.z, |g, &z| {
                    let t = z.tanh();
                    *g = *g * (T::one() - t * t);
                });
                dz
            }
        };
        self.dw = &self.dw + &cache.x.t().dot(&dz);
        self.db = &self.db + &dz.sum_axis(Axis(0));
        dz.dot(&self.w.t())
    }

    pub fn zero_grads(&mut self) {
        self.dw.fill(T::zero());
        self.db.fill(T::zero());
    }

    /// Parameter count (weights plus biases).
    pub fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}
