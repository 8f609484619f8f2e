//! Minimal dense-network machinery with exact reverse-mode gradients: just
//! the pieces the learner needs — fully-connected layers, a mean observation
//! embedding, a squashed-Gaussian policy head, and an adapter head.
//!
//! Everything is generic over the scalar so training runs in f32 while
//! gradient tests run in f64.

pub mod actor;
pub mod adam;
pub mod checkpoint;
pub mod critic;
pub mod dense;

pub use actor::{ActorCache, ActorNet, ActorSpec, GaussianSample};
pub use adam::Adam;
pub use critic::{CriticCache, CriticNet, CriticSpec};
pub use dense::{Activation, Dense, DenseCache};

use ndarray::{Array1, Array2, LinalgScalar, ScalarOperand};
use num_traits::Float;

/// Scalar type usable for network parameters and arithmetic.
pub trait Real: Float + LinalgScalar + ScalarOperand + std::fmt::Debug + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn into_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn into_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn into_f64(self) -> f64 {
        self
    }
}

/// Borrowed view of one named parameter tensor (row-major).
pub type TensorRef<'a, T> = (String, Vec<usize>, &'a [T]);
/// Mutable counterpart of [`TensorRef`].
pub type TensorMut<'a, T> = (String, Vec<usize>, &'a mut [T]);

/// Mean observation embedding: run every item through the shared layer and
/// average the outputs per sample. An empty item set maps to the zero
/// vector, so the output dimension never depends on the item count.
///
/// `items` stacks all samples' item rows; `offsets` (length batch + 1)
/// delimits each sample's slice, allowing ragged batches. Returns the
/// (batch, out) means plus the layer cache for backward.
pub fn mean_embed<T: Real>(
    layer: &Dense<T>,
    items: &Array2<T>,
    offsets: &[usize],
) -> (Array2<T>, Option<DenseCache<T>>) {
    let batch = offsets.len() - 1;
    let out_dim = layer.out_dim();
    assert_eq!(*offsets.last().expect("nonempty offsets"), items.nrows(), "offsets mismatch");
    if items.nrows() == 0 {
        return (Array2::zeros((batch, out_dim)), None);
    }
    let (y, cache) = layer.forward(items);
    let mut mean = Array2::zeros((batch, out_dim));
    // Sum in sorted value order so the mean is bit-exactly permutation
    // invariant, not merely up to rounding.
    let mut bucket: Vec<T> = Vec::new();
    for b in 0..batch {
        let (start, end) = (offsets[b], offsets[b + 1]);
        if start == end {
            continue;
        }
        let inv_k = T::from_f64(1.0 / (end - start) as f64);
        for j in 0..out_dim {
            bucket.clear();
            bucket.extend((start..end).map(|r| y[(r, j)]));
            bucket.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite embeddings"));
            let mut acc = T::zero();
            for &v in &bucket {
                acc = acc + v;
            }
            mean[(b, j)] = acc * inv_k;
        }
    }
    (mean, Some(cache))
}

/// Backward pass of [`mean_embed`]: spread the upstream gradient uniformly
/// over each sample's items and push it through the shared layer.
/// Returns the gradient with respect to the stacked item rows.
pub fn mean_embed_backward<T: Real>(
    layer: &mut Dense<T>,
    cache: &Option<DenseCache<T>>,
    d_mean: &Array2<T>,
    offsets: &[usize],
) -> Array2<T> {
    let Some(cache) = cache else {
        return Array2::zeros((0, layer.in_dim()));
    };
    let batch = offsets.len() - 1;
    let rows = *offsets.last().expect("nonempty offsets");
    let out_dim = layer.out_dim();
    let mut dy = Array2::zeros((rows, out_dim));
    for b in 0..batch {
        let (start, end) = (offsets[b], offsets[b + 1]);
        if start == end {
            continue;
        }
        let inv_k = T::from_f64(1.0 / (end - start) as f64);
        for r in start..end {
            for j in 0..out_dim {
                dy[(r, j)] = d_mean[(b, j)] * inv_k;
            }
        }
    }
    layer.backward(cache, &dy)
}

/// Offsets for the common case of `k` items per sample.
pub fn uniform_offsets(batch: usize, k: usize) -> Vec<usize> {
    (0..=batch).map(|b| b * k).collect()
}

/// Column-wise concatenation of equally-tall matrices.
pub fn hcat<T: Real>(parts: &[&Array2<T>]) -> Array2<T> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(ndarray::Axis(1), &views).expect("hcat shape mismatch")
}

/// Split a column-concatenated gradient back into per-part widths.
pub fn hsplit<T: Real>(grad: &Array2<T>, widths: &[usize]) -> Vec<Array2<T>> {
    let mut out = Vec::with_capacity(widths.len());
    let mut start = 0;
    for &w in widths {
        out.push(grad.slice(ndarray::s![.., start..start + w]).to_owned());
        start += w;
    }
    assert_eq!(start, grad.ncols(), "hsplit widths mismatch");
    out
}

/// Convert an f64 matrix (observations are built in f64) into the network
/// scalar type.
pub fn to_scalar<T: Real>(a: &Array2<f64>) -> Array2<T> {
    a.mapv(T::from_f64)
}

/// Row vector helper.
pub fn row<T: Real>(values: &[f64]) -> Array2<T> {
    Array2::from_shape_vec((1, values.len()), values.iter().map(|&v| T::from_f64(v)).collect())
        .expect("row shape")
}

/// Sum of a rank-1 array, as f64.
pub fn sum_f64<T: Real>(a: &Array1<T>) -> f64 {
    a.iter().map(|v| v.into_f64()).sum()
}
