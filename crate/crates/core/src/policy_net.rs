//! Masked step-independent policy network, step-indexed critic, optimizer
//! and checkpoints.

use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{log_softmax_rows, tanh, Tape, Var};
use crate::binio::{Reader, Writer};
use crate::config::{NetworkConfig, Problem};
use crate::error::{Result, SpnError};
use crate::sim::AtomicPolicy;
use crate::state::SystemState;

/// Logit substituted for infeasible actions.
pub const MASK_LOGIT: f64 = -1e9;

const CKPT_MAGIC: &[u8; 8] = b"SPNCKPT1";
const CKPT_VERSION: u32 = 1;
pub const CHECKPOINT_SCHEMA: &str = "spn-checkpoint/v1";

/// Maps states to fixed-length network inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Featurizer {
    num_classes: usize,
    num_types: usize,
    tau_max: usize,
    num_servers: usize,
    caps: Vec<f64>,
}

impl Featurizer {
    pub fn new(cfg: &NetworkConfig) -> Self {
        Self {
            num_classes: cfg.num_classes,
            num_types: cfg.num_service_types,
            tau_max: cfg.tau_max,
            num_servers: cfg.num_servers,
            caps: cfg.item_cap.iter().map(|&c| c.max(1) as f64).collect(),
        }
    }

    /// Queue lengths over caps, open services by (type, age) over K, idle
    /// servers by type over K.
    pub fn policy_dim(&self) -> usize {
        self.num_classes + self.num_types * (self.tau_max + 1) + self.num_types
    }

    /// Policy features followed by a one-hot atomic step.
    pub fn critic_dim(&self) -> usize {
        self.policy_dim() + self.num_servers
    }

    pub fn num_servers(&self) -> usize {
        self.num_servers
    }

    /// Rebuilds a state from its flat record (queue lengths, then counts).
    pub fn state_from_record(&self, rec: &[u32]) -> SystemState {
        SystemState { z: rec[..self.num_classes].to_vec(), n: rec[self.num_classes..].to_vec() }
    }

    pub fn write_policy(&self, s: &SystemState, out: &mut [f64]) {
        let k = self.num_servers as f64;
        let slots = self.tau_max + 2;
        let mut p = 0;
        for (i, &z) in s.z.iter().enumerate() {
            out[p] = z as f64 / self.caps[i];
            p += 1;
        }
        for j in 0..self.num_types {
            for tau in 0..=self.tau_max {
                out[p] = s.n[j * slots + tau] as f64 / k;
                p += 1;
            }
        }
        for j in 0..self.num_types {
            out[p] = s.n[j * slots + slots - 1] as f64 / k;
            p += 1;
        }
    }

    /// `step` is 1-based.
    pub fn write_critic(&self, s: &SystemState, step: usize, out: &mut [f64]) -> Result<()> {
        if step == 0 || step > self.num_servers {
            return Err(SpnError::StepIndex { step, max: self.num_servers });
        }
        let d = self.policy_dim();
        self.write_policy(s, &mut out[..d]);
        out[d..].iter_mut().for_each(|x| *x = 0.0);
        out[d + step - 1] = 1.0;
        Ok(())
    }

    pub fn policy_row(&self, s: &SystemState) -> Array2<f64> {
        let mut x = Array2::zeros((1, self.policy_dim()));
        self.write_policy(s, x.as_slice_mut().expect("standard layout"));
        x
    }

    pub fn critic_row(&self, s: &SystemState, step: usize) -> Result<Array2<f64>> {
        let mut x = Array2::zeros((1, self.critic_dim()));
        self.write_critic(s, step, x.as_slice_mut().expect("standard layout"))?;
        Ok(x)
    }
}

/// Fully connected layer, `y = x w + b` with `w` of shape `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

/// Feed-forward network with tanh hidden units and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Orthogonal `rows x cols` matrix scaled by `gain`.
fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (r, c) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let a = DMatrix::<f64>::from_fn(r, c, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let rd = qr.r();
    for j in 0..c {
        if rd[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Array2::from_shape_fn((rows, cols), |(i, j)| gain * if rows >= cols { q[(i, j)] } else { q[(j, i)] })
}

impl Mlp {
    /// Orthogonal weights with gain `sqrt(2)` on hidden layers and
    /// `out_gain` on the output layer; zero biases.
    pub fn orthogonal(sizes: &[usize], out_gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let gain = if l + 1 == n { out_gain } else { std::f64::consts::SQRT_2 };
                Layer { w: orthogonal(sizes[l], sizes[l + 1], gain, rng), b: Array2::zeros((1, sizes[l + 1])) }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Layer { w: Array2::zeros((w[0], w[1])), b: Array2::zeros((1, w[1])) })
            .collect();
        Self { layers }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].w.nrows()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").w.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Weights and biases in layer order.
    pub fn params(&self) -> Vec<&Array2<f64>> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let n = self.layers.len();
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = h.dot(&l.w) + &l.b;
            if i + 1 < n {
                h.mapv_inplace(tanh);
            }
        }
        h
    }

    /// Forward pass of a single input row.
    pub fn forward_row(&self, x: &[f64]) -> Vec<f64> {
        let n = self.layers.len();
        let mut h = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let mut out = l.b.as_slice().expect("standard layout").to_vec();
            let w = l.w.as_slice().expect("standard layout");
            for (xi, wrow) in h.iter().zip(w.chunks_exact(out.len())) {
                for (o, &w) in out.iter_mut().zip(wrow) {
                    *o += xi * w;
                }
            }
            if i + 1 < n {
                out.iter_mut().for_each(|v| *v = tanh(*v));
            }
            h = out;
        }
        h
    }

    /// Records the forward pass; returns the output and the parameter leaves
    /// in [`Mlp::params`] order.
    pub fn forward_tape(&self, tape: &mut Tape, x: Var) -> (Var, Vec<Var>) {
        let n = self.layers.len();
        let mut params = Vec::with_capacity(2 * n);
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            let w = tape.leaf(l.w.clone());
            let b = tape.leaf(l.b.clone());
            params.extend([w, b]);
            let z = tape.matmul(h, w);
            h = tape.add_row(z, b);
            if i + 1 < n {
                h = tape.tanh(h);
            }
            tape.label(h, format!("layer {}", i + 1));
        }
        (h, params)
    }

    fn write(&self, w: &mut Writer<impl Write>) -> Result<()> {
        w.u64(self.layers.len() as u64)?;
        for l in &self.layers {
            for m in [&l.w, &l.b] {
                w.u64(m.nrows() as u64)?;
                w.u64(m.ncols() as u64)?;
                w.f64s(m.as_slice().expect("standard layout"))?;
            }
        }
        Ok(())
    }

    fn read(r: &mut Reader<impl std::io::Read>) -> Result<Self> {
        let n = r.u64()? as usize;
        let mut layers = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let mut mats = Vec::with_capacity(2);
            for _ in 0..2 {
                let rows = r.u64()? as usize;
                let cols = r.u64()? as usize;
                let data = r.f64s()?;
                mats.push(
                    Array2::from_shape_vec((rows, cols), data).map_err(|e| SpnError::Format(e.to_string()))?,
                );
            }
            let b = mats.pop().expect("two matrices");
            let w = mats.pop().expect("two matrices");
            if b.nrows() != 1 || b.ncols() != w.ncols() {
                return Err(SpnError::Format("bias shape does not match weights".into()));
            }
            layers.push(Layer { w, b });
        }
        if layers.is_empty() {
            return Err(SpnError::Format("network without layers".into()));
        }
        Ok(Self { layers })
    }
}

/// Feasibility masks as a boolean matrix, one row per sample.
pub fn mask_matrix(masks: &[&[bool]]) -> Array2<bool> {
    let a = masks.first().map_or(0, |m| m.len());
    Array2::from_shape_fn((masks.len(), a), |(i, c)| masks[i][c])
}

/// Masked log-probabilities for a batch of feature rows.
pub fn masked_log_probs(mlp: &Mlp, x: &Array2<f64>, keep: &Array2<bool>) -> Result<Array2<f64>> {
    for row in keep.rows() {
        if !row.iter().any(|&b| b) {
            return Err(SpnError::EmptyMask);
        }
    }
    let mut logits = mlp.forward(x);
    ndarray::Zip::from(&mut logits).and(keep).for_each(|v, &k| {
        if !k {
            *v = MASK_LOGIT;
        }
    });
    Ok(log_softmax_rows(&logits))
}

/// Step-independent atomic policy with logits over every atomic action code.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNet {
    pub features: Featurizer,
    pub mlp: Mlp,
}

impl PolicyNet {
    pub fn new(cfg: &NetworkConfig, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let features = Featurizer::new(cfg);
        let sizes = [features.policy_dim(), hidden, hidden, cfg.num_atomic_actions()];
        Self { mlp: Mlp::orthogonal(&sizes, 0.01, rng), features }
    }

    pub fn from_mlp(cfg: &NetworkConfig, mlp: Mlp) -> Result<Self> {
        let features = Featurizer::new(cfg);
        if mlp.input_dim() != features.policy_dim() || mlp.output_dim() != cfg.num_atomic_actions() {
            return Err(SpnError::Dimension(format!(
                "policy network {:?} does not fit {} features and {} actions",
                mlp.sizes(),
                features.policy_dim(),
                cfg.num_atomic_actions()
            )));
        }
        Ok(Self { features, mlp })
    }

    pub fn num_actions(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn log_probs(&self, state: &SystemState, mask: &[bool]) -> Result<Vec<f64>> {
        if mask.len() != self.num_actions() {
            return Err(SpnError::Dimension(format!("mask of {} for {} actions", mask.len(), self.num_actions())));
        }
        if !mask.iter().any(|&b| b) {
            return Err(SpnError::EmptyMask);
        }
        let mut x = vec![0.0; self.features.policy_dim()];
        self.features.write_policy(state, &mut x);
        let mut logits = self.mlp.forward_row(&x);
        for (v, &k) in logits.iter_mut().zip(mask) {
            if !k {
                *v = MASK_LOGIT;
            }
        }
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &v in &logits {
            sum += (v - m).exp();
        }
        let lse = m + sum.ln();
        Ok(logits.into_iter().map(|v| v - lse).collect())
    }

    pub fn probs(&self, state: &SystemState, mask: &[bool]) -> Result<Vec<f64>> {
        Ok(self.log_probs(state, mask)?.into_iter().map(f64::exp).collect())
    }

    /// Samples a code by inversion; the returned log-probability is the
    /// log of the sampled entry of [`PolicyNet::probs`].
    pub fn sample_action(&self, state: &SystemState, mask: &[bool], rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
        let p = self.probs(state, mask)?;
        let code = crate::sim::draw_code(&p, rng.random::<f64>());
        Ok((code, p[code].ln()))
    }

    /// Most likely feasible code, ties to the smallest code.
    pub fn greedy_action(&self, state: &SystemState, mask: &[bool]) -> Result<usize> {
        let lp = self.log_probs(state, mask)?;
        let mut best = 0;
        for c in 1..lp.len() {
            if mask[c] && (!mask[best] || lp[c] > lp[best]) {
                best = c;
            }
        }
        Ok(best)
    }
}

impl AtomicPolicy for PolicyNet {
    fn action_probs(&self, state: &SystemState, _step: usize, mask: &[bool]) -> Result<Vec<f64>> {
        self.probs(state, mask)
    }
}

/// Deterministic argmax of a policy network.
#[derive(Clone, Copy, Debug)]
pub struct GreedyPolicy<'a>(pub &'a PolicyNet);

impl AtomicPolicy for GreedyPolicy<'_> {
    fn action_probs(&self, state: &SystemState, _step: usize, mask: &[bool]) -> Result<Vec<f64>> {
        let c = self.0.greedy_action(state, mask)?;
        let mut p = vec![0.0; mask.len()];
        p[c] = 1.0;
        Ok(p)
    }
}

/// Relative value estimate per (state, atomic step).
#[derive(Clone, Debug, PartialEq)]
pub struct CriticNet {
    pub features: Featurizer,
    pub mlp: Mlp,
}

impl CriticNet {
    pub fn new(cfg: &NetworkConfig, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let features = Featurizer::new(cfg);
        let sizes = [features.critic_dim(), hidden, hidden, 1];
        Self { mlp: Mlp::orthogonal(&sizes, 1.0, rng), features }
    }

    pub fn from_mlp(cfg: &NetworkConfig, mlp: Mlp) -> Result<Self> {
        let features = Featurizer::new(cfg);
        if mlp.input_dim() != features.critic_dim() || mlp.output_dim() != 1 {
            return Err(SpnError::Dimension(format!(
                "critic network {:?} does not fit {} features",
                mlp.sizes(),
                features.critic_dim()
            )));
        }
        Ok(Self { features, mlp })
    }

    /// `step` is 1-based.
    pub fn value(&self, state: &SystemState, step: usize) -> Result<f64> {
        let mut x = vec![0.0; self.features.critic_dim()];
        self.features.write_critic(state, step, &mut x)?;
        Ok(self.mlp.forward_row(&x)[0])
    }

    /// Values of a batch of critic feature rows, as a flat vector.
    pub fn values(&self, x: &Array2<f64>) -> Vec<f64> {
        self.mlp.forward(x).into_raw_vec_and_offset().0
    }
}

/// Samples for a clipped-surrogate evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyBatch {
    pub features: Array2<f64>,
    pub keep: Array2<bool>,
    pub actions: Vec<usize>,
    /// Behaviour log-probabilities, `n x 1`.
    pub old_log_probs: Array2<f64>,
    /// `n x 1`.
    pub advantages: Array2<f64>,
}

impl PolicyBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateSpec {
    pub clip: f64,
    pub entropy_coef: f64,
}

/// Value and gradient of the clipped surrogate objective (to be maximized).
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateGrad {
    /// Mean clipped surrogate plus the entropy bonus.
    pub objective: f64,
    pub surrogate: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub grads: Vec<Array2<f64>>,
}

pub fn surrogate_gradients(mlp: &Mlp, batch: &PolicyBatch, spec: &SurrogateSpec) -> Result<SurrogateGrad> {
    if batch.old_log_probs.iter().any(|x| !x.is_finite()) {
        return Err(SpnError::NonFinite("behaviour log-probability (probability 0 recorded)".into()));
    }
    let mut t = Tape::new();
    let x = t.constant(batch.features.clone());
    let (logits, params) = mlp.forward_tape(&mut t, x);
    let masked = t.mask_fill(logits, batch.keep.clone(), MASK_LOGIT);
    let logp = t.log_softmax(masked);
    let taken = t.gather(logp, batch.actions.clone());
    let old = t.constant(batch.old_log_probs.clone());
    let diff = t.sub(taken, old);
    let ratio = t.exp(diff);
    t.label(ratio, "probability ratio");
    let adv = t.constant(batch.advantages.clone());
    let unclipped = t.mul(ratio, adv);
    let clipped_ratio = t.clip(ratio, 1.0 - spec.clip, 1.0 + spec.clip);
    let clipped = t.mul(clipped_ratio, adv);
    let m = t.min(unclipped, clipped);
    let surrogate = t.mean(m);
    let ent = t.entropy(logp);
    let ent = t.mean(ent);
    let bonus = t.scale(ent, spec.entropy_coef);
    let objective = t.add(surrogate, bonus);
    t.check_finite()?;
    let g = t.backward(objective);
    let grads = params.iter().map(|&p| g.of(&t, p)).collect();
    let ratios = t.value(ratio);
    let clipped_n = ratios.iter().filter(|&&r| (r - 1.0).abs() > spec.clip).count();
    Ok(SurrogateGrad {
        objective: t.scalar(objective),
        surrogate: t.scalar(surrogate),
        entropy: t.scalar(ent),
        clip_fraction: clipped_n as f64 / batch.len().max(1) as f64,
        grads,
    })
}

/// Mean squared error of critic outputs against targets (`n x 1`) and its gradient.
pub fn critic_gradients(mlp: &Mlp, features: &Array2<f64>, targets: &Array2<f64>) -> Result<(f64, Vec<Array2<f64>>)> {
    let mut t = Tape::new();
    let x = t.constant(features.clone());
    let (v, params) = mlp.forward_tape(&mut t, x);
    let y = t.constant(targets.clone());
    let d = t.sub(v, y);
    let sq = t.square(d);
    let loss = t.mean(sq);
    t.check_finite()?;
    let g = t.backward(loss);
    Ok((t.scalar(loss), params.iter().map(|&p| g.of(&t, p)).collect()))
}

/// Adaptive-moment optimizer with global gradient-norm clipping.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_grad_norm: f64,
    pub t: u64,
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(mlp: &Mlp, lr: f64, max_grad_norm: f64) -> Self {
        let zeros: Vec<Array2<f64>> = mlp.params().iter().map(|p| Array2::zeros(p.raw_dim())).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, max_grad_norm, t: 0, m: zeros.clone(), v: zeros }
    }

    /// One descent step along `grads`; pass negated gradients to ascend.
    /// Returns the gradient norm before clipping.
    pub fn step(&mut self, mlp: &mut Mlp, grads: &[Array2<f64>]) -> f64 {
        let norm = grads.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
        let scale = if norm > self.max_grad_norm { self.max_grad_norm / norm } else { 1.0 };
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in mlp.params_mut().into_iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            ndarray::Zip::from(p).and(m).and(v).and(&grads[i]).for_each(|p, m, v, &g| {
                let g = g * scale;
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
            });
        }
        norm
    }

    fn write(&self, w: &mut Writer<impl Write>) -> Result<()> {
        for x in [self.lr, self.beta1, self.beta2, self.eps, self.max_grad_norm] {
            w.f64(x)?;
        }
        w.u64(self.t)?;
        w.u64(self.m.len() as u64)?;
        for a in self.m.iter().chain(&self.v) {
            w.u64(a.nrows() as u64)?;
            w.u64(a.ncols() as u64)?;
            w.f64s(a.as_slice().expect("standard layout"))?;
        }
        Ok(())
    }

    fn read(r: &mut Reader<impl std::io::Read>) -> Result<Self> {
        let (lr, beta1, beta2, eps, max_grad_norm) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let t = r.u64()?;
        let n = r.u64()? as usize;
        let mut mats = Vec::with_capacity(2 * n.min(64));
        for _ in 0..2 * n {
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let data = r.f64s()?;
            mats.push(Array2::from_shape_vec((rows, cols), data).map_err(|e| SpnError::Format(e.to_string()))?);
        }
        let v = mats.split_off(n);
        Ok(Self { lr, beta1, beta2, eps, max_grad_norm, t, m: mats, v })
    }
}

/// Training state written after each iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    /// Number of completed policy iterations.
    pub iteration: u64,
    pub seed: u64,
    pub policy: Mlp,
    pub critic: Mlp,
    pub policy_opt: Adam,
    pub critic_opt: Adam,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(Vec::new());
        w.bytes(CKPT_MAGIC)?;
        w.u32(CKPT_VERSION)?;
        w.str(CHECKPOINT_SCHEMA)?;
        w.str(&self.config_hash)?;
        w.u64(self.iteration)?;
        w.u64(self.seed)?;
        self.policy.write(&mut w)?;
        self.critic.write(&mut w)?;
        self.policy_opt.write(&mut w)?;
        self.critic_opt.write(&mut w)?;
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(CKPT_MAGIC)?;
        let version = r.u32()?;
        if version != CKPT_VERSION {
            return Err(SpnError::Format(format!("checkpoint version {version}, expected {CKPT_VERSION}")));
        }
        let schema = r.str()?;
        if schema != CHECKPOINT_SCHEMA {
            return Err(SpnError::Format(format!("checkpoint schema {schema:?}")));
        }
        let config_hash = r.str()?;
        let iteration = r.u64()?;
        let seed = r.u64()?;
        let policy = Mlp::read(&mut r)?;
        let critic = Mlp::read(&mut r)?;
        let policy_opt = Adam::read(&mut r)?;
        let critic_opt = Adam::read(&mut r)?;
        r.finish()?;
        Ok(Self { config_hash, iteration, seed, policy, critic, policy_opt, critic_opt })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes()?)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::io::Read::read_to_end(&mut BufReader::new(std::fs::File::open(path)?), &mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks that the checkpoint belongs to `problem`.
    pub fn load_for(path: &Path, problem: &Problem) -> Result<Self> {
        let c = Self::load(path)?;
        let expected = problem.content_hash();
        if c.config_hash != expected {
            return Err(SpnError::HashMismatch { expected, found: c.config_hash });
        }
        Ok(c)
    }

    pub fn policy_net(&self, cfg: &NetworkConfig) -> Result<PolicyNet> {
        PolicyNet::from_mlp(cfg, self.policy.clone())
    }

    pub fn critic_net(&self, cfg: &NetworkConfig) -> Result<CriticNet> {
        CriticNet::from_mlp(cfg, self.critic.clone())
    }

    /// Human-readable summary of dimensions and provenance.
    pub fn manifest(&self) -> String {
        format!(
            "schema = \"{CHECKPOINT_SCHEMA}\"\nconfig_hash = \"{}\"\nseed = {}\niteration = {}\n\
             policy_layers = {:?}\npolicy_params = {}\ncritic_layers = {:?}\ncritic_params = {}\n\
             optimizer_steps = [{}, {}]\n",
            self.config_hash,
            self.seed,
            self.iteration,
            self.policy.sizes(),
            self.policy.num_params(),
            self.critic.sizes(),
            self.critic.num_params(),
            self.policy_opt.t,
            self.critic_opt.t,
        )
    }
}
