//! Adam optimizer over the layer lists the networks expose. Moments are kept
//! per tensor, positionally: each layer contributes its weight matrix then
//! its bias vector, in the order `layers_mut` yields them.

use super::dense::Dense;
use super::Real;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    /// Per-layer step-size multipliers: layers whose name starts with the
    /// prefix use `lr * scale`. First matching prefix wins.
    pub lr_prefix_scales: Vec<(String, f64)>,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            lr_prefix_scales: Vec::new(),
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    fn scale_for(&self, name: &str) -> f64 {
        self.lr_prefix_scales
            .iter()
            .find(|(p, _)| name.starts_with(p.as_str()))
            .map_or(1.0, |(_, s)| *s)
    }

    /// One update over every (parameter, gradient) pair in `layers`.
    pub fn step(&mut self, mut layers: Vec<(String, &mut Dense<T>)>) {
        self.t += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one = T::one();
        let eps = T::from_f64(self.eps);
        // Bias-corrected step size.
        let corr =
            self.lr * (1.0 - self.beta2.powi(self.t as i32)).sqrt() / (1.0 - self.beta1.powi(self.t as i32));

        let mut slot = 0usize;
        for (name, layer) in layers.iter_mut() {
            let step = T::from_f64(corr * self.scale_for(name));
            for pick in 0..2 {
                let (params, grads): (&mut [T], &[T]) = if pick == 0 {
                    let Dense { w, dw, .. } = &mut **layer;
                    (w.as_slice_mut().unwrap(), dw.as_slice().unwrap())
                } else {
                    let Dense { b, db, .. } = &mut **layer;
                    (b.as_slice_mut().unwrap(), db.as_slice().unwrap())
                };
                if self.m.len() <= slot {
                    self.m.push(vec![T::zero(); params.len()]);
                    self.v.push(vec![T::zero(); params.len()]);
                }
                let m = &mut self.m[slot];
                let v = &mut self.v[slot];
                assert_eq!(m.len(), params.len(), "optimizer slot shape changed");
                for i in 0..params.len() {
                    let g = grads[i];
                    m[i] = b1 * m[i] + (one - b1) * g;
                    v[i] = b2 * v[i] + (one - b2) * g * g;
                    params[i] = params[i] - step * m[i] / (v[i].sqrt() + eps);
                }
                slot += 1;
            }
        }
    }

    /// Flatten moments for checkpointing: (first, second) per tensor slot.
    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.m, &self.v)
    }

    pub fn restore_moments(&mut self, m: Vec<Vec<T>>, v: Vec<Vec<T>>, t: u64) {
        self.m = m;
        self.v = v;
        self.t = t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dense::Activation;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn adam_descends_a_quadratic() {
        // Minimize ||W x - y||^2 for a fixed pair; Adam should roughly reach
        // the optimum on a 1-layer linear model.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut layer: Dense<f64> = Dense::init(2, 1, Activation::Linear, 1.0, &mut rng);
        let x = Array2::from_shape_vec((1, 2), vec![1.0, -0.5]).unwrap();
        let target = 3.0;
        let mut adam = Adam::new(0.05);
        let mut last = f64::INFINITY;
        for i in 0..500 {
            let (y, cache) = layer.forward(&x);
            let err = y[(0, 0)] - target;
            if i % 100 == 0 {
                assert!(err * err <= last + 1e-9, "loss should trend down");
                last = err * err;
            }
            layer.zero_grads();
            let dy = Array2::from_elem((1, 1), 2.0 * err);
            layer.backward(&cache, &dy);
            adam.step(vec![("l".into(), &mut layer)]);
        }
        let (y, _) = layer.forward(&x);
        assert!((y[(0, 0)] - target).abs() < 1e-3, "converged to {}", y[(0, 0)]);
    }

    #[test]
    fn adam_first_step_moves_by_lr_sign() {
        // With fresh moments the first Adam step is lr * sign(grad) (up to
        // eps), a standard sanity identity.
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let mut layer: Dense<f64> = Dense::init(2, 2, Activation::Linear, 1.0, &mut rng);
        let before = layer.w.clone();
        layer.zero_grads();
        layer.dw.fill(0.7);
        layer.db.fill(-0.3);
        let mut adam = Adam::new(1e-2);
        adam.step(vec![("l".into(), &mut layer)]);
        for (a, b) in layer.w.iter().zip(before.iter()) {
            assert!((a - (b - 1e-2)).abs() < 1e-6, "{a} vs {b}");
        }
    }
}
