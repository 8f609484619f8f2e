//! Policy network: shared state encoder (attacker/target block, optional
//! Boids block, mean-embedded teammates), a three-layer decision trunk, a
//! tanh-squashed Gaussian action head, and the optional adapter head that
//! produces the blend weight theta.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dense::{Activation, Dense, DenseCache};
use super::{hcat, hsplit, mean_embed, mean_embed_backward, Real};

#[cfg(test)]
use super::uniform_offsets;

pub const ACTION_DIM: usize = 2;
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Floor inside the tanh change-of-variables log term.
pub const SQUASH_EPS: f64 = 1e-6;

/// One flattened observation batch. `team` stacks every sample's
/// mean-embedded item rows; `team_offsets` (length batch + 1) delimits each
/// sample's slice, so item counts may differ per sample. `boids` may have
/// zero columns when the policy does not see the Boids block.
#[derive(Debug, Clone)]
pub struct ObsBatch<T> {
    pub at: Array2<T>,
    pub boids: Array2<T>,
    pub team: Array2<T>,
    pub team_offsets: Vec<usize>,
}

impl<T: Real> ObsBatch<T> {
    pub fn batch(&self) -> usize {
        self.at.nrows()
    }

    pub fn validate(&self) {
        let b = self.batch();
        assert_eq!(self.boids.nrows(), b, "boids batch mismatch");
        assert_eq!(self.team_offsets.len(), b + 1, "offsets length mismatch");
        assert_eq!(*self.team_offsets.last().expect("offsets"), self.team.nrows());
    }
}

/// Architecture of an actor network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActorSpec {
    pub at_dim: usize,
    pub team_dim: usize,
    /// Zero drops the Boids embedding entirely (vanilla policy, attacker).
    pub boids_dim: usize,
    pub embed: usize,
    pub hidden: usize,
    pub adapter_hidden: usize,
    pub has_adapter: bool,
    /// Feed the adapter from the last trunk layer instead of the penultimate.
    pub adapter_tap_last: bool,
}

impl ActorSpec {
    pub fn feat_dim(&self) -> usize {
        self.embed * if self.boids_dim > 0 { 3 } else { 2 }
    }

    pub fn validate(&self) {
        assert!(self.at_dim > 0 && self.team_dim > 0, "state dims must be positive");
        assert!(self.embed > 0 && self.hidden > 0, "layer widths must be positive");
        assert!(!self.has_adapter || self.adapter_hidden > 0, "adapter width must be positive");
    }
}

/// Draw of the squashed-Gaussian head, everything backward needs retained.
#[derive(Debug, Clone)]
pub struct GaussianSample<T> {
    /// Squashed action, strictly inside (-1, 1).
    pub a: Array2<T>,
    /// Pre-tanh value `mean + std * xi`.
    pub pre: Array2<T>,
    /// The standard-normal draw used (zero for deterministic evaluation).
    pub xi: Array2<T>,
    /// Per-sample log-density including the tanh correction.
    pub log_prob: Array1<T>,
}

/// Evaluate the squashed-Gaussian head at a fixed noise draw.
pub fn sample_squashed<T: Real>(
    mean: &Array2<T>,
    log_std: &Array2<T>,
    xi: &Array2<T>,
) -> GaussianSample<T> {
    let b = mean.nrows();
    let d = mean.ncols();
    let half = T::from_f64(0.5);
    let ln_2pi = T::from_f64((2.0 * std::f64::consts::PI).ln());
    let eps = T::from_f64(SQUASH_EPS);

    let std = log_std.mapv(|v| v.exp());
    let pre = mean + &(&std * xi);
    let a = pre.mapv(|v| v.tanh());
    let mut log_prob = Array1::zeros(b);
    for i in 0..b {
        let mut lp = T::zero();
        for j in 0..d {
            let gauss = -half * xi[(i, j)] * xi[(i, j)] - log_std[(i, j)] - half * ln_2pi;
            let sq = a[(i, j)] * a[(i, j)];
            lp = lp + gauss - (T::one() - sq + eps).ln();
        }
        log_prob[i] = lp;
    }
    GaussianSample { a, pre, xi: xi.clone(), log_prob }
}

/// Standard-normal matrix in the network scalar type. Draws are made in f64
/// so the stream is identical across scalar widths.
pub fn normal_matrix<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || {
        T::from_f64(StandardNormal.sample(rng))
    })
}

#[derive(Debug, Clone)]
pub struct FeatCache<T> {
    at: DenseCache<T>,
    boids: Option<DenseCache<T>>,
    team: Option<DenseCache<T>>,
    offsets: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct AdapterCache<T> {
    hidden: DenseCache<T>,
    out: DenseCache<T>,
    z: Array2<T>,
    pub theta: Array1<T>,
}

/// Everything one actor forward pass produced.
#[derive(Debug, Clone)]
pub struct ActorCache<T> {
    feat: FeatCache<T>,
    trunk: Vec<DenseCache<T>>,
    head_mean: DenseCache<T>,
    head_log_std: DenseCache<T>,
    log_std_raw: Array2<T>,
    pub mean: Array2<T>,
    pub log_std: Array2<T>,
    pub sample: GaussianSample<T>,
    pub adapter: Option<AdapterCache<T>>,
}

impl<T: Real> ActorCache<T> {
    /// Blend weight, defaulting to one where the adapter is absent.
    pub fn theta_or_one(&self) -> Array1<T> {
        match &self.adapter {
            Some(ac) => ac.theta.clone(),
            None => Array1::from_elem(self.mean.nrows(), T::one()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ActorNet<T> {
    pub spec: ActorSpec,
    pub embed_at: Dense<T>,
    pub embed_boids: Option<Dense<T>>,
    pub embed_team: Dense<T>,
    pub trunk: Vec<Dense<T>>,
    pub head_mean: Dense<T>,
    pub head_log_std: Dense<T>,
    pub adapter_hidden: Option<Dense<T>>,
    pub adapter_out: Option<Dense<T>>,
}

impl<T: Real> ActorNet<T> {
    pub fn new<R: Rng + ?Sized>(spec: ActorSpec, rng: &mut R) -> Self {
        spec.validate();
        let e = spec.embed;
        let h = spec.hidden;
        let embed_at = Dense::init(spec.at_dim, e, Activation::LeakyRelu, 1.0, rng);
        let embed_boids = (spec.boids_dim > 0)
            .then(|| Dense::init(spec.boids_dim, e, Activation::LeakyRelu, 1.0, rng));
        let embed_team = Dense::init(spec.team_dim, e, Activation::LeakyRelu, 1.0, rng);
        let trunk = vec![
            Dense::init(spec.feat_dim(), h, Activation::LeakyRelu, 1.0, rng),
            Dense::init(h, h, Activation::LeakyRelu, 1.0, rng),
            Dense::init(h, h, Activation::LeakyRelu, 1.0, rng),
        ];
        let head_mean = Dense::init(h, ACTION_DIM, Activation::Linear, 0.01, rng);
        let head_log_std = Dense::init(h, ACTION_DIM, Activation::Linear, 0.01, rng);
        let (adapter_hidden, adapter_out) = if spec.has_adapter {
            (
                Some(Dense::init(
                    2 * ACTION_DIM + h,
                    spec.adapter_hidden,
                    Activation::LeakyRelu,
                    1.0,
                    rng,
                )),
                Some(Dense::init(spec.adapter_hidden, 1, Activation::Linear, 0.01, rng)),
            )
        } else {
            (None, None)
        };
        Self {
            spec,
            embed_at,
            embed_boids,
            embed_team,
            trunk,
            head_mean,
            head_log_std,
            adapter_hidden,
            adapter_out,
        }
    }

    fn encode(&self, obs: &ObsBatch<T>) -> (Array2<T>, FeatCache<T>) {
        obs.validate();
        let (e_at, c_at) = self.embed_at.forward(&obs.at);
        let (e_team, c_team) = mean_embed(&self.embed_team, &obs.team, &obs.team_offsets);
        let offsets = obs.team_offsets.clone();
        match &self.embed_boids {
            Some(layer) => {
                let (e_boids, c_boids) = layer.forward(&obs.boids);
                (
                    hcat(&[&e_at, &e_boids, &e_team]),
                    FeatCache { at: c_at, boids: Some(c_boids), team: c_team, offsets },
                )
            }
            None => (
                hcat(&[&e_at, &e_team]),
                FeatCache { at: c_at, boids: None, team: c_team, offsets },
            ),
        }
    }

    /// Full forward pass at a fixed noise draw `xi` (zeros for deterministic
    /// evaluation). `a_boids` feeds the adapter only.
    pub fn forward(&self, obs: &ObsBatch<T>, a_boids: &Array2<T>, xi: &Array2<T>) -> ActorCache<T> {
        let (feat, feat_cache) = self.encode(obs);
        let (h1, c1) = self.trunk[0].forward(&feat);
        let (h2, c2) = self.trunk[1].forward(&h1);
        let (h3, c3) = self.trunk[2].forward(&h2);
        let tap = if self.spec.adapter_tap_last { h3.clone() } else { h2.clone() };

        let (mean, head_mean) = self.head_mean.forward(&h3);
        let (log_std_raw, head_log_std) = self.head_log_std.forward(&h3);
        let lo = T::from_f64(LOG_STD_MIN);
        let hi = T::from_f64(LOG_STD_MAX);
        let log_std = log_std_raw.mapv(|v| if v < lo { lo } else if v > hi { hi } else { v });
        let sample = sample_squashed(&mean, &log_std, xi);

        let adapter = match (&self.adapter_hidden, &self.adapter_out) {
            (Some(a1), Some(a2)) => {
                let input = hcat(&[&sample.a, a_boids, &tap]);
                let (ha, hidden) = a1.forward(&input);
                let (z, out) = a2.forward(&ha);
                let half = T::from_f64(0.5);
                let theta =
                    Array1::from_iter(z.column(0).iter().map(|&v| half * (v.tanh() + T::one())));
                Some(AdapterCache { hidden, out, z, theta })
            }
            _ => None,
        };

        ActorCache {
            feat: feat_cache,
            trunk: vec![c1, c2, c3],
            head_mean,
            head_log_std,
            log_std_raw,
            mean,
            log_std,
            sample,
            adapter,
        }
    }

    /// Reverse pass. `g_a` is the upstream gradient on the sampled action,
    /// `g_logp` on the log-probability, `g_theta` on theta (ignored without
    /// an adapter). Parameter gradients accumulate in the layers.
    pub fn backward(
        &mut self,
        cache: &ActorCache<T>,
        g_a: &Array2<T>,
        g_logp: &Array1<T>,
        g_theta: Option<&Array1<T>>,
    ) {
        let b = cache.mean.nrows();
        let h = self.spec.hidden;
        let half = T::from_f64(0.5);
        let eps = T::from_f64(SQUASH_EPS);
        let two = T::from_f64(2.0);

        // Adapter path first: it feeds extra gradient into the action and
        // the trunk tap.
        let mut d_a = g_a.clone();
        let mut d_tap: Option<Array2<T>> = None;
        if let (Some(g_theta), Some(ac)) = (g_theta, &cache.adapter) {
            let mut dz = Array2::zeros((b, 1));
            for i in 0..b {
                let t = ac.z[(i, 0)].tanh();
                dz[(i, 0)] = g_theta[i] * half * (T::one() - t * t);
            }
            let a2 = self.adapter_out.as_mut().expect("adapter layers present");
            let d_ha = a2.backward(&ac.out, &dz);
            let a1 = self.adapter_hidden.as_mut().expect("adapter layers present");
            let d_in = a1.backward(&ac.hidden, &d_ha);
            let parts = hsplit(&d_in, &[ACTION_DIM, ACTION_DIM, h]);
            d_a = &d_a + &parts[0];
            d_tap = Some(parts[2].clone());
        }

        // Squashed-Gaussian head: exact gradients with xi held fixed
        // (reparameterization).
        let s = &cache.sample;
        let mut d_mean = Array2::zeros((b, ACTION_DIM));
        let mut d_log_std = Array2::zeros((b, ACTION_DIM));
        let lo = T::from_f64(LOG_STD_MIN);
        let hi = T::from_f64(LOG_STD_MAX);
        for i in 0..b {
            for j in 0..ACTION_DIM {
                let a = s.a[(i, j)];
                let sq = T::one() - a * a;
                let dlp_dpre = two * a * sq / (sq + eps);
                let d_pre = g_logp[i] * dlp_dpre + d_a[(i, j)] * sq;
                let std = cache.log_std[(i, j)].exp();
                d_mean[(i, j)] = d_pre;
                let raw = cache.log_std_raw[(i, j)];
                d_log_std[(i, j)] = if raw < lo || raw > hi {
                    T::zero()
                } else {
                    d_pre * std * s.xi[(i, j)] - g_logp[i]
                };
            }
        }

        let mut dh3 = self.head_mean.backward(&cache.head_mean, &d_mean)
            + self.head_log_std.backward(&cache.head_log_std, &d_log_std);
        if self.spec.adapter_tap_last {
            if let Some(t) = &d_tap {
                dh3 = dh3 + t;
            }
        }
        let mut dh2 = self.trunk[2].backward(&cache.trunk[2], &dh3);
        if !self.spec.adapter_tap_last {
            if let Some(t) = &d_tap {
                dh2 = dh2 + t;
            }
        }
        let dh1 = self.trunk[1].backward(&cache.trunk[1], &dh2);
        let dfeat = self.trunk[0].backward(&cache.trunk[0], &dh1);
        self.encode_backward(&cache.feat, &dfeat);
    }

    fn encode_backward(&mut self, feat: &FeatCache<T>, dfeat: &Array2<T>) {
        let e = self.spec.embed;
        match &mut self.embed_boids {
            Some(layer) => {
                let parts = hsplit(dfeat, &[e, e, e]);
                self.embed_at.backward(&feat.at, &parts[0]);
                layer.backward(feat.boids.as_ref().expect("boids cache"), &parts[1]);
                mean_embed_backward(&mut self.embed_team, &feat.team, &parts[2], &feat.offsets);
            }
            None => {
                let parts = hsplit(dfeat, &[e, e]);
                self.embed_at.backward(&feat.at, &parts[0]);
                mean_embed_backward(&mut self.embed_team, &feat.team, &parts[1], &feat.offsets);
            }
        }
    }

    pub fn layers(&self) -> Vec<(String, &Dense<T>)> {
        let mut v: Vec<(String, &Dense<T>)> = vec![("embed_at".into(), &self.embed_at)];
        if let Some(l) = &self.embed_boids {
            v.push(("embed_boids".into(), l));
        }
        v.push(("embed_team".into(), &self.embed_team));
        for (i, l) in self.trunk.iter().enumerate() {
            v.push((format!("trunk{i}"), l));
        }
        v.push(("head_mean".into(), &self.head_mean));
        v.push(("head_log_std".into(), &self.head_log_std));
        if let Some(l) = &self.adapter_hidden {
            v.push(("adapter_hidden".into(), l));
        }
        if let Some(l) = &self.adapter_out {
            v.push(("adapter_out".into(), l));
        }
        v
    }

    pub fn layers_mut(&mut self) -> Vec<(String, &mut Dense<T>)> {
        let mut v: Vec<(String, &mut Dense<T>)> = vec![("embed_at".into(), &mut self.embed_at)];
        if let Some(l) = &mut self.embed_boids {
            v.push(("embed_boids".into(), l));
        }
        v.push(("embed_team".into(), &mut self.embed_team));
        for (i, l) in self.trunk.iter_mut().enumerate() {
            v.push((format!("trunk{i}"), l));
        }
        v.push(("head_mean".into(), &mut self.head_mean));
        v.push(("head_log_std".into(), &mut self.head_log_std));
        if let Some(l) = &mut self.adapter_hidden {
            v.push(("adapter_hidden".into(), l));
        }
        if let Some(l) = &mut self.adapter_out {
            v.push(("adapter_out".into(), l));
        }
        v
    }

    pub fn zero_grads(&mut self) {
        for (_, l) in self.layers_mut() {
            l.zero_grads();
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers().iter().map(|(_, l)| l.n_params()).sum()
    }
}
