//! Per-fleet PPO-clipped advantage actor-critic updates.
//!
//! Each fleet owns its network, optimizer state, shuffle stream and buffer;
//! nothing here ever touches two fleets at once.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::math::Real;
use crate::nn::{Gradients, NetDims, PolicyNetwork, Tape};
use crate::scenario::FleetId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PpoError {
    #[error("sequence lengths differ: rewards {rewards}, values {values}, dones {dones}")]
    LengthMismatch {
        rewards: usize,
        values: usize,
        dones: usize,
    },
    #[error(transparent)]
    Network(#[from] crate::nn::NnError),
}

/// One agent decision and its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub own: [f64; 4],
    /// Flattened `n × 4` front-intruder observations.
    pub intruders: Vec<f64>,
    pub action: usize,
    pub log_prob_old: f64,
    pub reward: f64,
    pub value_old: f64,
    /// Last transition of this agent in the episode.
    pub done: bool,
    pub agent_id: usize,
    pub step: u32,
}

/// Experience of one fleet for one episode, kept per agent trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetBuffer {
    pub fleet: FleetId,
    trajectories: Vec<(usize, Vec<Transition>)>,
}

impl FleetBuffer {
    pub fn new(fleet: FleetId) -> Self {
        Self {
            fleet,
            trajectories: Vec::new(),
        }
    }

    pub fn push(&mut self, t: Transition) {
        match self
            .trajectories
            .iter_mut()
            .find(|(id, _)| *id == t.agent_id)
        {
            Some((_, traj)) => traj.push(t),
            None => self.trajectories.push((t.agent_id, vec![t])),
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        self.trajectories.clear();
    }

    /// Mark the last transition of every trajectory terminal.
    pub fn close_open_trajectories(&mut self) {
        for (_, traj) in &mut self.trajectories {
            if let Some(last) = traj.last_mut() {
                last.done = true;
            }
        }
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &[Transition]> {
        self.trajectories.iter().map(|(_, t)| t.as_slice())
    }

    /// Flatten into update samples with GAE advantages and value targets.
    pub fn samples(&self, gamma: f64, lambda: f64) -> Vec<Sample<'_>> {
        let mut out = Vec::with_capacity(self.len());
        for traj in self.trajectories() {
            let rewards: Vec<f64> = traj.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = traj.iter().map(|t| t.value_old).collect();
            let dones: Vec<bool> = traj.iter().map(|t| t.done).collect();
            let (adv, ret) =
                compute_gae(&rewards, &values, &dones, gamma, lambda).expect("parallel sequences");
            out.extend(traj.iter().zip(adv).zip(ret).map(|((t, a), r)| Sample {
                transition: t,
                advantage: a,
                ret: r,
            }));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<'a> {
    pub transition: &'a Transition,
    pub advantage: f64,
    /// Value target: advantage plus the value recorded at collection time.
    pub ret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Entropy bonus weight β.
    pub entropy_coef: f64,
    /// Clip range ε.
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub value_coef: f64,
    pub batch_size: usize,
    pub epochs_per_episode: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip; off unless set.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            entropy_coef: 1e-3,
            clip: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            value_coef: 0.5,
            batch_size: 512,
            epochs_per_episode: 8,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_grad_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err("clip in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err("gamma in (0, 1]");
        }
        if !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return Err("gae_lambda in (0, 1]");
        }
        if self.batch_size == 0 {
            return Err("batch_size > 0");
        }
        if !(self.learning_rate > 0.0) {
            return Err("learning_rate > 0");
        }
        Ok(())
    }
}

/// Generalized advantage estimation over one trajectory.
///
/// `δₜ = rₜ + γ·Vₜ₊₁·(1−doneₜ) − Vₜ`, `Aₜ = δₜ + γλ·(1−doneₜ)·Aₜ₊₁`, with
/// the value past the end taken as 0. Returns raw (unnormalized) advantages
/// and value targets `A + V`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(PpoError::LengthMismatch {
            rewards: n,
            values: values.len(),
            dones: dones.len(),
        });
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let next_v = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_v * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// Zero-mean, unit-variance advantages. A single advantage is only rescaled
/// (to ±1) so its sign survives.
pub fn normalize_advantages(adv: &mut [f64]) {
    const EPS: f64 = 1e-8;
    match adv.len() {
        0 => {}
        1 => adv[0] /= libm::fabs(adv[0]) + EPS,
        n => {
            let mean = adv.iter().sum::<f64>() / n as f64;
            let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
            let std = libm::sqrt(var);
            adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + EPS));
        }
    }
}

/// Log-ratio magnitude beyond which a sample is dropped from the loss.
pub const MAX_LOG_RATIO: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub used: usize,
    pub skipped: usize,
}

/// Minimized objective over a batch:
/// `−mean[min(ζA, clip(ζ,1−ε,1+ε)A)] − β·mean[H] + c_v·mean[(R − V)²]`.
/// Parameter gradients are added into `grads`.
pub fn ppo_loss<T: Real>(
    net: &PolicyNetwork<T>,
    batch: &[Sample<'_>],
    cfg: &TrainConfig,
    grads: &mut Gradients<T>,
) -> Result<LossStats, PpoError> {
    let mut tape = Tape::new();
    let mut own = [T::ZERO; 4];
    let mut intr: Vec<T> = Vec::new();
    // Per-sample gradients are summed unscaled and divided by the number of
    // kept samples at the end, since skips are only known after the forward.
    let mut sum = Gradients::zeros_like(net);
    let mut stats = LossStats::default();
    let (lo, hi) = (1.0 - cfg.clip, 1.0 + cfg.clip);
    let mut d_logits = vec![T::ZERO; net.dims.actions];
    let mut clipped = 0usize;

    for s in batch {
        load_inputs(s.transition, &mut own, &mut intr);
        net.forward(&mut tape, &own, &intr)?;
        let log_ratio = tape.log_probs()[s.transition.action].to_f64() - s.transition.log_prob_old;
        if !log_ratio.is_finite() || libm::fabs(log_ratio) > MAX_LOG_RATIO {
            stats.skipped += 1;
            continue;
        }
        stats.used += 1;
        let probs = tape.probs();
        let logp = tape.log_probs();
        let value = tape.value().to_f64();

        let ratio = libm::exp(log_ratio);
        let a = s.advantage;
        let surr1 = ratio * a;
        let surr2 = ratio.clamp(lo, hi) * a;
        let through_ratio = surr1 <= surr2;
        if !through_ratio {
            clipped += 1;
        }
        let entropy: f64 = -probs
            .iter()
            .zip(logp)
            .map(|(p, l)| p.to_f64() * l.to_f64())
            .sum::<f64>();
        let verr = s.ret - value;

        stats.policy_loss -= surr1.min(surr2);
        stats.entropy += entropy;
        stats.value_loss += verr * verr;

        // d(loss)/d(log π(a)) for the surrogate term.
        let d_logp = if through_ratio { -ratio * a } else { 0.0 };
        for (k, dl) in d_logits.iter_mut().enumerate() {
            let p = probs[k].to_f64();
            let onehot = if k == s.transition.action { 1.0 } else { 0.0 };
            let g_pol = d_logp * (onehot - p);
            // −β·H, with dH/dz_k = −p_k (log p_k + H).
            let g_ent = cfg.entropy_coef * p * (logp[k].to_f64() + entropy);
            *dl = T::from_f64(g_pol + g_ent);
        }
        let d_value = T::from_f64(-2.0 * cfg.value_coef * verr);
        net.backward(&tape, &d_logits, d_value, &mut sum)?;
    }
    if stats.used == 0 {
        return Ok(stats);
    }
    let inv_n = 1.0 / stats.used as f64;
    sum.scale(T::from_f64(inv_n));
    grads.add_assign(&sum);
    stats.policy_loss *= inv_n;
    stats.entropy *= inv_n;
    stats.value_loss *= inv_n;
    stats.clip_fraction = clipped as f64 * inv_n;
    stats.loss =
        stats.policy_loss - cfg.entropy_coef * stats.entropy + cfg.value_coef * stats.value_loss;
    Ok(stats)
}

fn load_inputs<T: Real>(t: &Transition, own: &mut [T; 4], intr: &mut Vec<T>) {
    for (o, v) in own.iter_mut().zip(t.own) {
        *o = T::from_f64(v);
    }
    intr.clear();
    intr.extend(t.intruders.iter().map(|v| T::from_f64(*v)));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdamOutcome {
    Applied,
    /// A gradient was non-finite; parameters and moments were left untouched.
    SkippedNonFinite,
}

/// Adam with bias correction. Moments are kept in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<T: Real>(net: &PolicyNetwork<T>, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Vec<f64>> = net.params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update from the gradients stored in the network; zeroes them.
    pub fn step<T: Real>(&mut self, net: &mut PolicyNetwork<T>) -> AdamOutcome {
        if !net
            .params
            .iter()
            .all(|p| p.grad.iter().all(|g| g.is_finite()))
        {
            log::warn!("non-finite gradient; Adam step skipped");
            net.zero_grad();
            return AdamOutcome::SkippedNonFinite;
        }
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for ((p, m), v) in net.params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for (((w, g), mi), vi) in p.values.iter_mut().zip(&p.grad).zip(m).zip(v) {
                let g = g.to_f64();
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                let upd = self.lr * mhat / (libm::sqrt(vhat) + self.eps);
                *w = T::from_f64(w.to_f64() - upd);
            }
            p.zero_grad();
        }
        AdamOutcome::Applied
    }
}

/// Network, optimizer and shuffle stream of one trainable fleet.
#[derive(Debug, Clone)]
pub struct FleetLearner {
    pub fleet: FleetId,
    pub net: PolicyNetwork<f32>,
    pub adam: Adam,
    shuffle: ChaCha8Rng,
}

impl FleetLearner {
    pub fn new(
        fleet: FleetId,
        dims: NetDims,
        init_seed: u64,
        shuffle_seed: u64,
        cfg: &TrainConfig,
    ) -> Self {
        let net = PolicyNetwork::init(dims, init_seed);
        Self::from_network(fleet, net, shuffle_seed, cfg)
    }

    pub fn from_network(
        fleet: FleetId,
        net: PolicyNetwork<f32>,
        shuffle_seed: u64,
        cfg: &TrainConfig,
    ) -> Self {
        let adam = Adam::new(&net, cfg);
        Self {
            fleet,
            net,
            adam,
            shuffle: ChaCha8Rng::seed_from_u64(shuffle_seed),
        }
    }
}

/// Aggregate of one fleet's update after an episode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainStats {
    pub samples: usize,
    pub minibatches: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub skipped_samples: usize,
    pub skipped_steps: usize,
}

/// Minibatch sizes for one epoch over `n` samples.
pub fn minibatch_sizes(n: usize, batch: usize) -> Vec<usize> {
    (0..n).step_by(batch).map(|s| batch.min(n - s)).collect()
}

/// Run the PPO epochs for one fleet over its buffer, then clear the buffer.
/// Returns `None` (and leaves the learner untouched) if the buffer is empty.
pub fn train_fleet(
    learner: &mut FleetLearner,
    buffer: &mut FleetBuffer,
    cfg: &TrainConfig,
) -> Result<Option<TrainStats>, PpoError> {
    debug_assert_eq!(learner.fleet, buffer.fleet);
    if buffer.is_empty() {
        log::warn!("fleet {} buffer empty; update skipped", buffer.fleet);
        return Ok(None);
    }
    let samples = buffer.samples(cfg.gamma, cfg.gae_lambda);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grads = Gradients::zeros_like(&learner.net);
    let mut stats = TrainStats {
        samples: samples.len(),
        ..TrainStats::default()
    };
    let mut minibatch: Vec<Sample<'_>> = Vec::with_capacity(cfg.batch_size);
    let mut advs: Vec<f64> = Vec::with_capacity(cfg.batch_size);

    for _ in 0..cfg.epochs_per_episode {
        order.shuffle(&mut learner.shuffle);
        for chunk in order.chunks(cfg.batch_size) {
            advs.clear();
            advs.extend(chunk.iter().map(|&i| samples[i].advantage));
            normalize_advantages(&mut advs);
            minibatch.clear();
            minibatch.extend(chunk.iter().zip(&advs).map(|(&i, &a)| Sample {
                advantage: a,
                ..samples[i]
            }));

            grads.clear();
            let ls = ppo_loss(&learner.net, &minibatch, cfg, &mut grads)?;
            if let Some(max_norm) = cfg.max_grad_norm {
                let norm = grads.global_norm();
                if norm > max_norm {
                    grads.scale((max_norm / norm) as f32);
                }
            }
            learner.net.zero_grad();
            learner.net.accumulate_grads(&grads);
            if learner.adam.step(&mut learner.net) == AdamOutcome::SkippedNonFinite {
                stats.skipped_steps += 1;
            }
            stats.minibatches += 1;
            stats.policy_loss += ls.policy_loss;
            stats.value_loss += ls.value_loss;
            stats.entropy += ls.entropy;
            stats.clip_fraction += ls.clip_fraction;
            stats.skipped_samples += ls.skipped;
        }
    }
    let k = stats.minibatches.max(1) as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.clip_fraction /= k;
    drop(samples);
    buffer.clear();
    Ok(Some(stats))
}

/// Update every trainable fleet independently from its own buffer.
pub fn train_episode(
    learners: &mut [Option<FleetLearner>; 2],
    buffers: &mut [FleetBuffer; 2],
    cfg: &TrainConfig,
) -> Result<[Option<TrainStats>; 2], PpoError> {
    let mut out = [None, None];
    for ((learner, buffer), slot) in learners.iter_mut().zip(buffers.iter_mut()).zip(&mut out) {
        if let Some(l) = learner {
            *slot = train_fleet(l, buffer, cfg)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetDims;
    use rand::Rng;

    fn tiny() -> NetDims {
        NetDims {
            obs: 4,
            embed: 8,
            hidden: 8,
            actions: 3,
        }
    }

    /// Brute-force GAE: explicit exponentially weighted δ sum, stopping after
    /// the first terminal step.
    fn gae_oracle(r: &[f64], v: &[f64], d: &[bool], g: f64, l: f64) -> Vec<f64> {
        let n = r.len();
        let delta: Vec<f64> = (0..n)
            .map(|t| {
                let nv = if t + 1 < n && !d[t] { v[t + 1] } else { 0.0 };
                r[t] + g * nv - v[t]
            })
            .collect();
        (0..n)
            .map(|t| {
                let mut acc = 0.0;
                for k in t..n {
                    acc += libm::pow(g * l, (k - t) as f64) * delta[k];
                    if d[k] {
                        break;
                    }
                }
                acc
            })
            .collect()
    }

    #[test]
    fn gae_single_terminal() {
        let (a, r) = compute_gae(&[1.0], &[0.5], &[true], 0.99, 0.95).unwrap();
        assert!((a[0] - 0.5).abs() < 1e-15);
        assert!((r[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gae_zero() {
        let (a, _) = compute_gae(
            &[0.0; 5],
            &[0.0; 5],
            &[false, false, false, false, true],
            0.99,
            0.95,
        )
        .unwrap();
        assert!(a.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn gae_length_mismatch() {
        assert!(matches!(
            compute_gae(&[0.0; 3], &[0.0; 2], &[false; 3], 0.9, 0.9),
            Err(PpoError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn gae_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let n = rng.gen_range(1..=20);
            let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.2)).collect();
            let (a, _) = compute_gae(&r, &v, &d, 0.99, 0.95).unwrap();
            for (x, y) in a.iter().zip(gae_oracle(&r, &v, &d, 0.99, 0.95)) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalization_properties() {
        let mut a = [1.0, 2.0, 3.0, 6.0];
        normalize_advantages(&mut a);
        let mean: f64 = a.iter().sum::<f64>() / 4.0;
        let var: f64 = a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-6);
        let mut single = [-0.03];
        normalize_advantages(&mut single);
        assert!(single[0] < 0.0);
        let mut single = [4.0];
        normalize_advantages(&mut single);
        assert!((single[0] - 1.0).abs() < 1e-6);
    }

    fn transition(action: usize, log_prob_old: f64) -> Transition {
        Transition {
            own: [0.2, 0.5, 0.25, 0.0],
            intruders: vec![0.4, 0.6, 0.1, 1.0],
            action,
            log_prob_old,
            reward: 0.0,
            value_old: 0.0,
            done: true,
            agent_id: 0,
            step: 0,
        }
    }

    fn uniform_net() -> PolicyNetwork<f64> {
        let mut net = PolicyNetwork::<f64>::init(tiny(), 3);
        // Zero actor head: uniform policy everywhere.
        net.params[9].values.iter_mut().for_each(|v| *v = 0.0);
        net
    }

    #[test]
    fn loss_hand_evaluation() {
        // ζ = 1, A = 1, uniform policy, V = return: policy −1, entropy ln 3.
        let net = uniform_net();
        let t = transition(1, libm::log(1.0 / 3.0));
        let mut tape = Tape::new();
        net.forward(&mut tape, &[0.2, 0.5, 0.25, 0.0], &[0.4, 0.6, 0.1, 1.0])
            .unwrap();
        let v = tape.value();
        let batch = [Sample {
            transition: &t,
            advantage: 1.0,
            ret: v,
        }];
        let cfg = TrainConfig::default();
        let mut g = Gradients::zeros_like(&net);
        let s = ppo_loss(&net, &batch, &cfg, &mut g).unwrap();
        assert!((s.policy_loss + 1.0).abs() < 1e-12);
        assert!((s.entropy - libm::log(3.0)).abs() < 1e-12);
        assert!((s.loss - (-1.0 - 0.001 * libm::log(3.0))).abs() < 1e-12);
        assert!(s.value_loss < 1e-24);
    }

    #[test]
    fn loss_clips_ratio() {
        // ζ = 1.5 with A = 1: the surrogate is min(1.5, 1.2) = 1.2.
        let net = uniform_net();
        let t = transition(0, libm::log(1.0 / 3.0) - libm::log(1.5));
        let batch = [Sample {
            transition: &t,
            advantage: 1.0,
            ret: 0.0,
        }];
        let mut g = Gradients::zeros_like(&net);
        let s = ppo_loss(&net, &batch, &TrainConfig::default(), &mut g).unwrap();
        assert!((s.policy_loss + 1.2).abs() < 1e-12);
        assert_eq!(s.clip_fraction, 1.0);
    }

    #[test]
    fn loss_with_vanishing_terms_is_entropy_only() {
        let net = PolicyNetwork::<f64>::init(tiny(), 8);
        let ts: Vec<Transition> = (0..4).map(|a| transition(a % 3, -1.0)).collect();
        let mut tape = Tape::new();
        net.forward(&mut tape, &ts[0].own, &ts[0].intruders)
            .unwrap();
        let v = tape.value();
        let batch: Vec<Sample> = ts
            .iter()
            .map(|t| Sample {
                transition: t,
                advantage: 0.0,
                ret: v,
            })
            .collect();
        let cfg = TrainConfig::default();
        let mut g = Gradients::zeros_like(&net);
        let s = ppo_loss(&net, &batch, &cfg, &mut g).unwrap();
        assert_eq!(s.policy_loss, 0.0);
        assert!((s.loss + cfg.entropy_coef * s.entropy).abs() < 1e-15);
    }

    #[test]
    fn extreme_ratio_is_skipped() {
        let net = uniform_net();
        let t = transition(0, 30.0);
        let batch = [Sample {
            transition: &t,
            advantage: 1.0,
            ret: 0.0,
        }];
        let mut g = Gradients::zeros_like(&net);
        let s = ppo_loss(&net, &batch, &TrainConfig::default(), &mut g).unwrap();
        assert_eq!((s.used, s.skipped), (0, 1));
        assert!(g.tensors.iter().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn clip_inactive_equals_ratio_mean() {
        // β = 0, A ≡ 1, ratios inside (1−ε, 1+ε): surrogate = mean ratio.
        let net = uniform_net();
        let ratios = [0.9, 1.05, 1.15, 0.85];
        let ts: Vec<Transition> = ratios
            .iter()
            .map(|r| transition(2, libm::log(1.0 / 3.0) - libm::log(*r)))
            .collect();
        let batch: Vec<Sample> = ts
            .iter()
            .map(|t| Sample {
                transition: t,
                advantage: 1.0,
                ret: 0.0,
            })
            .collect();
        let cfg = TrainConfig {
            entropy_coef: 0.0,
            ..TrainConfig::default()
        };
        let mut g = Gradients::zeros_like(&net);
        let s = ppo_loss(&net, &batch, &cfg, &mut g).unwrap();
        let mean: f64 = ratios.iter().sum::<f64>() / 4.0;
        assert!((s.policy_loss + mean).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        let mut net = PolicyNetwork::<f64>::init(tiny(), 1);
        let before = net.flat_values();
        let cfg = TrainConfig::default();
        let mut adam = Adam::new(&net, &cfg);
        for p in &mut net.params {
            for (i, g) in p.grad.iter_mut().enumerate() {
                *g = if i % 2 == 0 { 0.5 } else { -3.0 };
            }
        }
        assert_eq!(adam.step(&mut net), AdamOutcome::Applied);
        let mut off = 0;
        for p in &net.params {
            for (i, w) in p.values.iter().enumerate() {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let expect = before[off + i] - cfg.learning_rate * sign;
                assert!((w - expect).abs() < 1e-10);
            }
            off += p.len();
            assert!(p.grad.iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn adam_zero_grad_keeps_params() {
        let mut net = PolicyNetwork::<f64>::init(tiny(), 1);
        let cfg = TrainConfig::default();
        let mut adam = Adam::new(&net, &cfg);
        net.params[0].grad[0] = 1.0;
        adam.step(&mut net);
        let after_first = net.flat_values();
        let m0 = adam.m[0][0];
        adam.step(&mut net);
        // Zero gradient: only the decayed momentum moves the first weight.
        assert!((adam.m[0][0] - 0.9 * m0).abs() < 1e-15);
        let after_second = net.flat_values();
        assert_eq!(after_first[1..], after_second[1..]);
    }

    #[test]
    fn adam_skips_non_finite() {
        let mut net = PolicyNetwork::<f64>::init(tiny(), 1);
        let before = net.flat_values();
        let mut adam = Adam::new(&net, &TrainConfig::default());
        net.params[3].grad[0] = f64::NAN;
        assert_eq!(adam.step(&mut net), AdamOutcome::SkippedNonFinite);
        assert_eq!(net.flat_values(), before);
        assert_eq!(adam.t, 0);
    }

    #[test]
    fn partition_arithmetic() {
        assert_eq!(minibatch_sizes(1000, 512), vec![512, 488]);
        assert_eq!(minibatch_sizes(512, 512), vec![512]);
        assert_eq!(minibatch_sizes(3, 512), vec![3]);
    }

    #[test]
    fn empty_buffer_is_noop() {
        let cfg = TrainConfig::default();
        let mut learner = FleetLearner::new(FleetId::B, tiny(), 1, 2, &cfg);
        let before = learner.net.clone();
        let mut buf = FleetBuffer::new(FleetId::B);
        assert_eq!(train_fleet(&mut learner, &mut buf, &cfg).unwrap(), None);
        assert_eq!(learner.net, before);
    }
}
