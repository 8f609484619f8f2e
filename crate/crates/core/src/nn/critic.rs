//! Q-network: the same state encoder as the actor plus an action-embedding
//! layer over (a_drl, theta), a three-layer trunk, and a scalar head.

use ndarray::{Array1, Array2};
use rand::Rng;

use super::actor::{ObsBatch, ACTION_DIM};
use super::dense::{Activation, Dense, DenseCache};
use super::{hcat, hsplit, mean_embed, mean_embed_backward, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CriticSpec {
    pub at_dim: usize,
    pub team_dim: usize,
    pub boids_dim: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl CriticSpec {
    pub fn feat_dim(&self) -> usize {
        self.embed * if self.boids_dim > 0 { 3 } else { 2 }
    }
}

#[derive(Debug, Clone)]
pub struct CriticCache<T> {
    at: DenseCache<T>,
    boids: Option<DenseCache<T>>,
    team: Option<DenseCache<T>>,
    act: DenseCache<T>,
    trunk: Vec<DenseCache<T>>,
    head: DenseCache<T>,
    batch: usize,
    offsets: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CriticNet<T> {
    pub spec: CriticSpec,
    pub embed_at: Dense<T>,
    pub embed_boids: Option<Dense<T>>,
    pub embed_team: Dense<T>,
    pub embed_act: Dense<T>,
    pub trunk: Vec<Dense<T>>,
    pub head: Dense<T>,
}

impl<T: Real> CriticNet<T> {
    pub fn new<R: Rng + ?Sized>(spec: CriticSpec, rng: &mut R) -> Self {
        let e = spec.embed;
        let h = spec.hidden;
        let embed_at = Dense::init(spec.at_dim, e, Activation::LeakyRelu, 1.0, rng);
        let embed_boids = (spec.boids_dim > 0)
            .then(|| Dense::init(spec.boids_dim, e, Activation::LeakyRelu, 1.0, rng));
        let embed_team = Dense::init(spec.team_dim, e, Activation::LeakyRelu, 1.0, rng);
        let embed_act = Dense::init(ACTION_DIM + 1, e, Activation::LeakyRelu, 1.0, rng);
        let trunk = vec![
            Dense::init(spec.feat_dim() + e, h, Activation::LeakyRelu, 1.0, rng),
            Dense::init(h, h, Activation::LeakyRelu, 1.0, rng),
            Dense::init(h, h, Activation::LeakyRelu, 1.0, rng),
        ];
        let head = Dense::init(h, 1, Activation::Linear, 1.0, rng);
        Self { spec, embed_at, embed_boids, embed_team, embed_act, trunk, head }
    }

    /// Q(s, a, theta) for a batch; returns values and the backward cache.
    pub fn forward(
        &self,
        obs: &ObsBatch<T>,
        a: &Array2<T>,
        theta: &Array1<T>,
    ) -> (Array1<T>, CriticCache<T>) {
        obs.validate();
        let b = obs.batch();
        assert_eq!(a.nrows(), b, "action batch mismatch");
        assert_eq!(theta.len(), b, "theta batch mismatch");

        let (e_at, c_at) = self.embed_at.forward(&obs.at);
        let (e_team, c_team) = mean_embed(&self.embed_team, &obs.team, &obs.team_offsets);
        let theta_col =
            Array2::from_shape_fn((b, 1), |(i, _)| theta[i]);
        let act_in = hcat(&[a, &theta_col]);
        let (e_act, c_act) = self.embed_act.forward(&act_in);

        let (feat, c_boids) = match &self.embed_boids {
            Some(layer) => {
                let (e_boids, c_boids) = layer.forward(&obs.boids);
                (hcat(&[&e_at, &e_boids, &e_team, &e_act]), Some(c_boids))
            }
            None => (hcat(&[&e_at, &e_team, &e_act]), None),
        };

        let (h1, t1) = self.trunk[0].forward(&feat);
        let (h2, t2) = self.trunk[1].forward(&h1);
        let (h3, t3) = self.trunk[2].forward(&h2);
        let (q, c_head) = self.head.forward(&h3);
        let q1 = Array1::from_iter(q.column(0).iter().copied());
        (
            q1,
            CriticCache {
                at: c_at,
                boids: c_boids,
                team: c_team,
                act: c_act,
                trunk: vec![t1, t2, t3],
                head: c_head,
                batch: b,
                offsets: obs.team_offsets.clone(),
            },
        )
    }

    /// Reverse pass from per-sample `dq`. Accumulates parameter gradients and
    /// returns the input gradients on the action and theta (for the actor
    /// update).
    pub fn backward(&mut self, cache: &CriticCache<T>, dq: &Array1<T>) -> (Array2<T>, Array1<T>) {
        let b = cache.batch;
        let e = self.spec.embed;
        let dq_col = Array2::from_shape_fn((b, 1), |(i, _)| dq[i]);
        let dh3 = self.head.backward(&cache.head, &dq_col);
        let dh2 = self.trunk[2].backward(&cache.trunk[2], &dh3);
        let dh1 = self.trunk[1].backward(&cache.trunk[1], &dh2);
        let dfeat = self.trunk[0].backward(&cache.trunk[0], &dh1);

        let d_act_emb;
        match &mut self.embed_boids {
            Some(layer) => {
                let parts = hsplit(&dfeat, &[e, e, e, e]);
                self.embed_at.backward(&cache.at, &parts[0]);
                layer.backward(cache.boids.as_ref().expect("boids cache"), &parts[1]);
                mean_embed_backward(&mut self.embed_team, &cache.team, &parts[2], &cache.offsets);
                d_act_emb = parts[3].clone();
            }
            None => {
                let parts = hsplit(&dfeat, &[e, e, e]);
                self.embed_at.backward(&cache.at, &parts[0]);
                mean_embed_backward(&mut self.embed_team, &cache.team, &parts[1], &cache.offsets);
                d_act_emb = parts[2].clone();
            }
        }
        let d_act_in = self.embed_act.backward(&cache.act, &d_act_emb);
        let parts = hsplit(&d_act_in, &[ACTION_DIM, 1]);
        let d_theta = Array1::from_iter(parts[1].column(0).iter().copied());
        (parts[0].clone(), d_theta)
    }

    pub fn layers(&self) -> Vec<(String, &Dense<T>)> {
        let mut v: Vec<(String, &Dense<T>)> = vec![("embed_at".into(), &self.embed_at)];
        if let Some(l) = &self.embed_boids {
            v.push(("embed_boids".into(), l));
        }
        v.push(("embed_team".into(), &self.embed_team));
        v.push(("embed_act".into(), &self.embed_act));
        for (i, l) in self.trunk.iter().enumerate() {
            v.push((format!("trunk{i}"), l));
        }
        v.push(("head".into(), &self.head));
        v
    }

    pub fn layers_mut(&mut self) -> Vec<(String, &mut Dense<T>)> {
        let mut v: Vec<(String, &mut Dense<T>)> = vec![("embed_at".into(), &mut self.embed_at)];
        if let Some(l) = &mut self.embed_boids {
            v.push(("embed_boids".into(), l));
        }
        v.push(("embed_team".into(), &mut self.embed_team));
        v.push(("embed_act".into(), &mut self.embed_act));
        for (i, l) in self.trunk.iter_mut().enumerate() {
            v.push((format!("trunk{i}"), l));
        }
        v.push(("head".into(), &mut self.head));
        v
    }

    pub fn zero_grads(&mut self) {
        for (_, l) in self.layers_mut() {
            l.zero_grads();
        }
    }
}

/// Polyak averaging: `target <- (1 - tau) * target + tau * online`,
/// layer by layer. Shapes must match exactly.
pub fn soft_update<T: Real>(
    target: &mut CriticNet<T>,
    online: &CriticNet<T>,
    tau: f64,
) -> crate::error::Result<()> {
    let t = T::from_f64(tau);
    let keep = T::one() - t;
    let online_layers = online.layers();
    let mut target_layers = target.layers_mut();
    if online_layers.len() != target_layers.len() {
        return Err(crate::error::Error::runtime("soft_update: layer count mismatch"));
    }
    for ((_, tl), (_, ol)) in target_layers.iter_mut().zip(online_layers.iter()) {
        if tl.w.shape() != ol.w.shape() || tl.b.shape() != ol.b.shape() {
            return Err(crate::error::Error::runtime("soft_update: shape mismatch"));
        }
        tl.w.zip_mut_with(&ol.w, |tv, &ov| *tv = keep * *tv + t * ov);
        tl.b.zip_mut_with(&ol.b, |tv, &ov| *tv = keep * *tv + t * ov);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_spec(boids: bool) -> CriticSpec {
        CriticSpec { at_dim: 4, team_dim: 2, boids_dim: if boids { 8 } else { 0 }, embed: 5, hidden: 7 }
    }

    fn random_inputs(
        spec: &CriticSpec,
        b: usize,
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> (ObsBatch<f64>, Array2<f64>, Array1<f64>) {
        let mut draw = || rng.random_range(-1.0..1.0);
        let obs = ObsBatch {
            at: Array2::from_shape_simple_fn((b, spec.at_dim), &mut draw),
            boids: Array2::from_shape_simple_fn((b, spec.boids_dim), &mut draw),
            team: Array2::from_shape_simple_fn((b * k, spec.team_dim), &mut draw),
            team_offsets: super::super::uniform_offsets(b, k),
        };
        let a = Array2::from_shape_simple_fn((b, ACTION_DIM), &mut draw);
        let theta = Array1::from_shape_simple_fn(b, || rng.random_range(0.0..1.0));
        (obs, a, theta)
    }

    #[test]
    fn forward_is_deterministic_and_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let net: CriticNet<f64> = CriticNet::new(tiny_spec(true), &mut rng);
        let (obs, a, theta) = random_inputs(&net.spec, 4, 2, &mut rng);
        let (q1, _) = net.forward(&obs, &a, &theta);
        let (q2, _) = net.forward(&obs, &a, &theta);
        assert_eq!(q1, q2);
        assert!(q1.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn parameter_and_input_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for boids in [true, false] {
            for k in [0usize, 2] {
                let mut net: CriticNet<f64> = CriticNet::new(tiny_spec(boids), &mut rng);
                let b = 3;
                let (obs, a, theta) = random_inputs(&net.spec, b, k, &mut rng);
                let wq = Array1::from_shape_simple_fn(b, || rng.random_range(-1.0..1.0));
                let loss = |n: &CriticNet<f64>, a: &Array2<f64>, th: &Array1<f64>| -> f64 {
                    let (q, _) = n.forward(&obs, a, th);
                    (0..b).map(|i| wq[i] * q[i]).sum()
                };

                net.zero_grads();
                let (_, cache) = net.forward(&obs, &a, &theta);
                let (da, dtheta) = net.backward(&cache, &wq);

                let h = 1e-5;
                let mut checked = 0;
                for li in 0..net.layers().len() {
                    let len = net.layers()[li].1.w.len();
                    for t in 0..len.min(5) {
                        let idx = (t * 11) % len;
                        let orig;
                        {
                            let mut ls = net.layers_mut();
                            let s = ls[li].1.w.as_slice_mut().unwrap();
                            orig = s[idx];
                            s[idx] = orig + h;
                        }
                        let up = loss(&net, &a, &theta);
                        {
                            let mut ls = net.layers_mut();
                            ls[li].1.w.as_slice_mut().unwrap()[idx] = orig - h;
                        }
                        let down = loss(&net, &a, &theta);
                        {
                            let mut ls = net.layers_mut();
                            ls[li].1.w.as_slice_mut().unwrap()[idx] = orig;
                        }
                        let fd = (up - down) / (2.0 * h);
                        let an = net.layers()[li].1.dw.as_slice().unwrap()[idx];
                        let denom = fd.abs().max(an.abs()).max(1e-3);
                        assert!(
                            (fd - an).abs() / denom < 1e-6,
                            "critic layer {li} idx {idx}: fd {fd} vs {an}"
                        );
                        checked += 1;
                    }
                }
                assert!(checked >= 20);

                // Input gradients: action and theta.
                for j in 0..ACTION_DIM {
                    let mut a_up = a.clone();
                    a_up[(0, j)] += h;
                    let mut a_dn = a.clone();
                    a_dn[(0, j)] -= h;
                    let fd = (loss(&net, &a_up, &theta) - loss(&net, &a_dn, &theta)) / (2.0 * h);
                    let denom = fd.abs().max(da[(0, j)].abs()).max(1e-3);
                    assert!((fd - da[(0, j)]).abs() / denom < 1e-6);
                }
                let mut th_up = theta.clone();
                th_up[1] += h;
                let mut th_dn = theta.clone();
                th_dn[1] -= h;
                let fd = (loss(&net, &a, &th_up) - loss(&net, &a, &th_dn)) / (2.0 * h);
                let denom = fd.abs().max(dtheta[1].abs()).max(1e-3);
                assert!((fd - dtheta[1]).abs() / denom < 1e-6);
            }
        }
    }

    #[test]
    fn soft_update_endpoints_and_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let online: CriticNet<f64> = CriticNet::new(tiny_spec(true), &mut rng);
        let fresh: CriticNet<f64> = CriticNet::new(tiny_spec(true), &mut rng);

        // tau = 0: unchanged.
        let mut target = fresh.clone();
        soft_update(&mut target, &online, 0.0).unwrap();
        for ((_, t), (_, f)) in target.layers().iter().zip(fresh.layers().iter()) {
            assert_eq!(t.w, f.w);
        }

        // tau = 1: exact copy.
        let mut target = fresh.clone();
        soft_update(&mut target, &online, 1.0).unwrap();
        for ((_, t), (_, o)) in target.layers().iter().zip(online.layers().iter()) {
            assert_eq!(t.w, o.w);
            assert_eq!(t.b, o.b);
        }

        // tau = 0.5: element-wise midpoint.
        let mut target = fresh.clone();
        soft_update(&mut target, &online, 0.5).unwrap();
        for (((_, t), (_, f)), (_, o)) in target
            .layers()
            .iter()
            .zip(fresh.layers().iter())
            .zip(online.layers().iter())
        {
            for ((tv, fv), ov) in t.w.iter().zip(f.w.iter()).zip(o.w.iter()) {
                assert!((tv - 0.5 * (fv + ov)).abs() < 1e-12);
            }
        }

        // Shape mismatch rejected.
        let mut small: CriticNet<f64> = CriticNet::new(tiny_spec(false), &mut rng);
        assert!(soft_update(&mut small, &online, 0.5).is_err());
    }
}
