//! Attention actor-critic network with hand-written reverse mode.
//!
//! Layout (with the default dimensions):
//!
//! ```text
//! ownship obs (4) ── dense 4→64, tanh ──────────────┐
//!                                                   ├─ concat (128) ─ dense 128→128, tanh
//! intruder obs (n×4) ─ dense 4→64, tanh ─ bilinear ─┘                 ─ dense 128→128, tanh
//!                      attention (64×64, /√64, softmax over n)          ├─ actor 128→3 ─ softmax
//!                                                                       └─ critic 128→1
//! ```
//!
//! The scalar type is generic so the same code runs in `f32` for training and
//! in `f64` for finite-difference checks.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::math::Real;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NnError {
    #[error("non-finite value in layer `{layer}`")]
    NonFinite { layer: &'static str },
    #[error("backward called without a recorded forward pass")]
    NoForward,
    #[error("input has {found} values, expected {expected}")]
    InputShape { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetDims {
    pub obs: usize,
    pub embed: usize,
    pub hidden: usize,
    pub actions: usize,
}

impl NetDims {
    pub const DEFAULT: NetDims = NetDims {
        obs: 4,
        embed: 64,
        hidden: 128,
        actions: 3,
    };
}

impl Default for NetDims {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> ParamTensor<T> {
    fn zeros(name: &'static str, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name,
            shape,
            values: vec![T::ZERO; n],
            grad: vec![T::ZERO; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::ZERO);
    }
}

// Tensor order; also the checkpoint order.
const OWN_W: usize = 0;
const OWN_B: usize = 1;
const INTR_W: usize = 2;
const INTR_B: usize = 3;
const ATTN: usize = 4;
const T1_W: usize = 5;
const T1_B: usize = 6;
const T2_W: usize = 7;
const T2_B: usize = 8;
const ACT_W: usize = 9;
const ACT_B: usize = 10;
const CRIT_W: usize = 11;
const CRIT_B: usize = 12;
pub const TENSOR_COUNT: usize = 13;

pub fn tensor_layout(d: NetDims) -> [(&'static str, Vec<usize>); TENSOR_COUNT] {
    [
        ("ownship_encoder.weight", vec![d.embed, d.obs]),
        ("ownship_encoder.bias", vec![d.embed]),
        ("intruder_encoder.weight", vec![d.embed, d.obs]),
        ("intruder_encoder.bias", vec![d.embed]),
        ("attention.weight", vec![d.embed, d.embed]),
        ("trunk1.weight", vec![d.hidden, 2 * d.embed]),
        ("trunk1.bias", vec![d.hidden]),
        ("trunk2.weight", vec![d.hidden, d.hidden]),
        ("trunk2.bias", vec![d.hidden]),
        ("actor.weight", vec![d.actions, d.hidden]),
        ("actor.bias", vec![d.actions]),
        ("critic.weight", vec![1, d.hidden]),
        ("critic.bias", vec![1]),
    ]
}

/// Per-tensor gradient buffers with the network's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(net: &PolicyNetwork<T>) -> Self {
        Self {
            tensors: net.params.iter().map(|p| vec![T::ZERO; p.len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        for t in &mut self.tensors {
            t.iter_mut().for_each(|g| *g = T::ZERO);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        for t in &mut self.tensors {
            t.iter_mut().for_each(|g| *g *= k);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|g| g.is_finite())
    }

    pub fn global_norm(&self) -> f64 {
        libm::sqrt(
            self.tensors
                .iter()
                .flatten()
                .map(|g| g.to_f64() * g.to_f64())
                .sum(),
        )
    }
}

/// Activations recorded by a forward pass, consumed by [`PolicyNetwork::backward`].
/// Reusable across calls to avoid reallocation.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    recorded: bool,
    n_intr: usize,
    own_in: Vec<T>,
    intr_in: Vec<T>,
    h_own: Vec<T>,
    /// n × embed intruder encodings.
    enc: Vec<T>,
    /// Aᵀ·h_own, the query used for every score.
    query: Vec<T>,
    attn: Vec<T>,
    /// Concatenation of `h_own` and the attention context.
    z0: Vec<T>,
    h1: Vec<T>,
    h2: Vec<T>,
    logits: Vec<T>,
    probs: Vec<T>,
    log_probs: Vec<T>,
    value: T,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            recorded: false,
            n_intr: 0,
            own_in: Vec::new(),
            intr_in: Vec::new(),
            h_own: Vec::new(),
            enc: Vec::new(),
            query: Vec::new(),
            attn: Vec::new(),
            z0: Vec::new(),
            h1: Vec::new(),
            h2: Vec::new(),
            logits: Vec::new(),
            probs: Vec::new(),
            log_probs: Vec::new(),
            value: T::ZERO,
        }
    }

    pub fn is_recorded(&self) -> bool {
        self.recorded
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[T] {
        &self.log_probs
    }

    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    pub fn value(&self) -> T {
        self.value
    }

    /// Attention context from the last forward pass.
    pub fn context(&self) -> &[T] {
        let e = self.h_own.len();
        &self.z0[e..]
    }

    pub fn attention_weights(&self) -> &[T] {
        &self.attn
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork<T> {
    pub dims: NetDims,
    pub params: Vec<ParamTensor<T>>,
}

/// `y = W·x + b` for a row-major `[out, in]` weight.
fn dense<T: Real>(w: &[T], b: Option<&[T]>, x: &[T], y: &mut Vec<T>, out: usize) {
    let inp = x.len();
    y.clear();
    for o in 0..out {
        let row = &w[o * inp..(o + 1) * inp];
        let mut acc = b.map_or(T::ZERO, |b| b[o]);
        for (wi, xi) in row.iter().zip(x) {
            acc += *wi * *xi;
        }
        y.push(acc);
    }
}

/// Accumulate `dW += dy ⊗ x` and, if requested, `dx += Wᵀ·dy`.
fn dense_backward<T: Real>(
    w: &[T],
    x: &[T],
    dy: &[T],
    dw: &mut [T],
    db: Option<&mut [T]>,
    dx: Option<&mut [T]>,
) {
    let inp = x.len();
    for (o, &g) in dy.iter().enumerate() {
        let row = &mut dw[o * inp..(o + 1) * inp];
        for (d, xi) in row.iter_mut().zip(x) {
            *d += g * *xi;
        }
    }
    if let Some(db) = db {
        for (d, g) in db.iter_mut().zip(dy) {
            *d += *g;
        }
    }
    if let Some(dx) = dx {
        for (o, &g) in dy.iter().enumerate() {
            let row = &w[o * inp..(o + 1) * inp];
            for (d, wi) in dx.iter_mut().zip(row) {
                *d += *wi * g;
            }
        }
    }
}

fn tanh_in_place<T: Real>(v: &mut [T]) {
    v.iter_mut().for_each(|x| *x = x.tanh());
}

fn check<T: Real>(v: &[T], layer: &'static str) -> Result<(), NnError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFinite { layer })
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(logits: &[T], out: &mut Vec<T>) {
    out.clear();
    let m = logits.iter().copied().fold(logits[0], Real::max);
    let mut sum = T::ZERO;
    for &l in logits {
        let e = (l - m).exp();
        sum += e;
        out.push(e);
    }
    out.iter_mut().for_each(|p| *p = *p / sum);
}

fn log_softmax<T: Real>(logits: &[T], out: &mut Vec<T>) {
    out.clear();
    let m = logits.iter().copied().fold(logits[0], Real::max);
    let mut sum = T::ZERO;
    for &l in logits {
        sum += (l - m).exp();
    }
    let lse = m + sum.ln();
    out.extend(logits.iter().map(|&l| l - lse));
}

/// Multiplicative attention: `sᵢ = ownᵀ·W·encᵢ / √d`, softmax over `i`,
/// context `Σ aᵢ·encᵢ`. An empty intruder set gives the zero vector.
pub fn attention_context<T: Real>(own: &[T], encs: &[Vec<T>], w: &[T]) -> Vec<T> {
    let d = own.len();
    if encs.is_empty() {
        return vec![T::ZERO; d];
    }
    let mut query = vec![T::ZERO; d];
    for (r, &o) in own.iter().enumerate() {
        for (q, &wv) in query.iter_mut().zip(&w[r * d..(r + 1) * d]) {
            *q += o * wv;
        }
    }
    let scale = T::from_f64(1.0 / libm::sqrt(d as f64));
    let scores: Vec<T> = encs
        .iter()
        .map(|e| {
            let mut s = T::ZERO;
            for (q, x) in query.iter().zip(e) {
                s += *q * *x;
            }
            s * scale
        })
        .collect();
    let mut weights = Vec::new();
    softmax(&scores, &mut weights);
    let mut ctx = vec![T::ZERO; d];
    for (a, e) in weights.iter().zip(encs) {
        for (c, x) in ctx.iter_mut().zip(e) {
            *c += *a * *x;
        }
    }
    ctx
}

impl<T: Real> PolicyNetwork<T> {
    pub fn zeros(dims: NetDims) -> Self {
        let params = tensor_layout(dims)
            .into_iter()
            .map(|(name, shape)| ParamTensor::zeros(name, shape))
            .collect();
        Self { dims, params }
    }

    /// Glorot-uniform weights, zero biases, reproducible from `seed`.
    pub fn init(dims: NetDims, seed: u64) -> Self {
        let mut net = Self::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in net.params.iter_mut().filter(|p| p.shape.len() == 2) {
            let bound = glorot_bound(&p.shape);
            for v in &mut p.values {
                *v = T::from_f64(rng.gen_range(-bound..bound));
            }
        }
        net
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(ParamTensor::len).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(ParamTensor::zero_grad);
    }

    pub fn accumulate_grads(&mut self, g: &Gradients<T>) {
        for (p, src) in self.params.iter_mut().zip(&g.tensors) {
            for (d, s) in p.grad.iter_mut().zip(src) {
                *d += *s;
            }
        }
    }

    /// Convert every parameter to another scalar type.
    pub fn cast<U: Real>(&self) -> PolicyNetwork<U> {
        PolicyNetwork {
            dims: self.dims,
            params: self
                .params
                .iter()
                .map(|p| ParamTensor {
                    name: p.name,
                    shape: p.shape.clone(),
                    values: p.values.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                    grad: vec![U::ZERO; p.len()],
                })
                .collect(),
        }
    }

    fn v(&self, i: usize) -> &[T] {
        &self.params[i].values
    }

    /// Forward pass recording activations in `tape`.
    ///
    /// `own` holds `dims.obs` values; `intruders` holds `n·dims.obs` values.
    pub fn forward(&self, tape: &mut Tape<T>, own: &[T], intruders: &[T]) -> Result<(), NnError> {
        let d = self.dims;
        tape.recorded = false;
        if own.len() != d.obs {
            return Err(NnError::InputShape {
                expected: d.obs,
                found: own.len(),
            });
        }
        if !intruders.len().is_multiple_of(d.obs) {
            return Err(NnError::InputShape {
                expected: d.obs * (intruders.len() / d.obs + 1),
                found: intruders.len(),
            });
        }
        let n = intruders.len() / d.obs;
        let e = d.embed;
        tape.n_intr = n;
        tape.own_in.clear();
        tape.own_in.extend_from_slice(own);
        tape.intr_in.clear();
        tape.intr_in.extend_from_slice(intruders);

        dense(self.v(OWN_W), Some(self.v(OWN_B)), own, &mut tape.h_own, e);
        tanh_in_place(&mut tape.h_own);
        check(&tape.h_own, "ownship_encoder")?;

        tape.enc.clear();
        let mut tmp = Vec::with_capacity(e);
        for x in intruders.chunks_exact(d.obs) {
            dense(self.v(INTR_W), Some(self.v(INTR_B)), x, &mut tmp, e);
            tanh_in_place(&mut tmp);
            tape.enc.extend_from_slice(&tmp);
        }
        check(&tape.enc, "intruder_encoder")?;

        // query = Aᵀ·h_own, so score_i = query·enc_i.
        tape.query.clear();
        tape.query.resize(e, T::ZERO);
        let a = self.v(ATTN);
        for (r, &h) in tape.h_own.iter().enumerate() {
            for (q, &w) in tape.query.iter_mut().zip(&a[r * e..(r + 1) * e]) {
                *q += h * w;
            }
        }
        let scale = T::from_f64(1.0 / libm::sqrt(e as f64));
        let scores: Vec<T> = tape
            .enc
            .chunks_exact(e)
            .map(|x| {
                let mut s = T::ZERO;
                for (q, v) in tape.query.iter().zip(x) {
                    s += *q * *v;
                }
                s * scale
            })
            .collect();
        tape.attn.clear();
        if n > 0 {
            softmax(&scores, &mut tape.attn);
        }
        tape.z0.clear();
        tape.z0.extend_from_slice(&tape.h_own);
        tape.z0.resize(2 * e, T::ZERO);
        for (w, x) in tape.attn.iter().zip(tape.enc.chunks_exact(e)) {
            for (c, v) in tape.z0[e..].iter_mut().zip(x) {
                *c += *w * *v;
            }
        }
        check(&tape.z0, "attention")?;

        dense(
            self.v(T1_W),
            Some(self.v(T1_B)),
            &tape.z0,
            &mut tape.h1,
            d.hidden,
        );
        tanh_in_place(&mut tape.h1);
        check(&tape.h1, "trunk1")?;
        dense(
            self.v(T2_W),
            Some(self.v(T2_B)),
            &tape.h1,
            &mut tape.h2,
            d.hidden,
        );
        tanh_in_place(&mut tape.h2);
        check(&tape.h2, "trunk2")?;

        dense(
            self.v(ACT_W),
            Some(self.v(ACT_B)),
            &tape.h2,
            &mut tape.logits,
            d.actions,
        );
        check(&tape.logits, "actor")?;
        softmax(&tape.logits, &mut tape.probs);
        log_softmax(&tape.logits, &mut tape.log_probs);

        let mut val = Vec::with_capacity(1);
        dense(self.v(CRIT_W), Some(self.v(CRIT_B)), &tape.h2, &mut val, 1);
        check(&val, "critic")?;
        tape.value = val[0];
        tape.recorded = true;
        Ok(())
    }

    /// Action probabilities and state value without keeping the tape.
    pub fn evaluate(&self, own: &[T], intruders: &[T]) -> Result<(Vec<T>, T), NnError> {
        let mut tape = Tape::new();
        self.forward(&mut tape, own, intruders)?;
        Ok((tape.probs.clone(), tape.value))
    }

    /// Reverse pass for the recorded forward. `d_logits` and `d_value` are the
    /// loss gradients with respect to the actor logits and the critic output;
    /// parameter gradients are added into `grads`.
    pub fn backward(
        &self,
        tape: &Tape<T>,
        d_logits: &[T],
        d_value: T,
        grads: &mut Gradients<T>,
    ) -> Result<(), NnError> {
        if !tape.recorded {
            return Err(NnError::NoForward);
        }
        let d = self.dims;
        let e = d.embed;
        let g = &mut grads.tensors;

        // Heads.
        let mut dh2 = vec![T::ZERO; d.hidden];
        {
            let (lo, hi) = g.split_at_mut(ACT_B);
            dense_backward(
                self.v(ACT_W),
                &tape.h2,
                d_logits,
                &mut lo[ACT_W],
                Some(&mut hi[0]),
                Some(&mut dh2),
            );
        }
        {
            let (lo, hi) = g.split_at_mut(CRIT_B);
            dense_backward(
                self.v(CRIT_W),
                &tape.h2,
                &[d_value],
                &mut lo[CRIT_W],
                Some(&mut hi[0]),
                Some(&mut dh2),
            );
        }

        // Trunk.
        for (dv, h) in dh2.iter_mut().zip(&tape.h2) {
            *dv *= T::ONE - *h * *h;
        }
        let mut dh1 = vec![T::ZERO; d.hidden];
        {
            let (lo, hi) = g.split_at_mut(T2_B);
            dense_backward(
                self.v(T2_W),
                &tape.h1,
                &dh2,
                &mut lo[T2_W],
                Some(&mut hi[0]),
                Some(&mut dh1),
            );
        }
        for (dv, h) in dh1.iter_mut().zip(&tape.h1) {
            *dv *= T::ONE - *h * *h;
        }
        let mut dz0 = vec![T::ZERO; 2 * e];
        {
            let (lo, hi) = g.split_at_mut(T1_B);
            dense_backward(
                self.v(T1_W),
                &tape.z0,
                &dh1,
                &mut lo[T1_W],
                Some(&mut hi[0]),
                Some(&mut dz0),
            );
        }
        let (dh_own_direct, dctx) = dz0.split_at(e);
        let mut dh_own = dh_own_direct.to_vec();

        // Attention.
        let n = tape.n_intr;
        let mut denc = vec![T::ZERO; n * e];
        if n > 0 {
            let scale = T::from_f64(1.0 / libm::sqrt(e as f64));
            // c = Σ a_i e_i
            let da: Vec<T> = tape
                .enc
                .chunks_exact(e)
                .map(|x| {
                    let mut s = T::ZERO;
                    for (c, v) in dctx.iter().zip(x) {
                        s += *c * *v;
                    }
                    s
                })
                .collect();
            let mut mean = T::ZERO;
            for (a, g) in tape.attn.iter().zip(&da) {
                mean += *a * *g;
            }
            // ds_i = a_i (da_i − Σ a_j da_j); score_i = scale · h_ownᵀ A e_i.
            let mut weighted_enc = vec![T::ZERO; e];
            for (i, ((a, dai), x)) in tape
                .attn
                .iter()
                .zip(&da)
                .zip(tape.enc.chunks_exact(e))
                .enumerate()
            {
                let ds = *a * (*dai - mean) * scale;
                let row = &mut denc[i * e..(i + 1) * e];
                for ((dv, q), c) in row.iter_mut().zip(&tape.query).zip(dctx) {
                    *dv += ds * *q + *a * *c;
                }
                for (w, v) in weighted_enc.iter_mut().zip(x) {
                    *w += ds * *v;
                }
            }
            // dA += h_own ⊗ weighted_enc; dh_own += A·weighted_enc.
            let am = self.v(ATTN);
            let da_mat = &mut g[ATTN];
            for (r, &h) in tape.h_own.iter().enumerate() {
                let row = &am[r * e..(r + 1) * e];
                let drow = &mut da_mat[r * e..(r + 1) * e];
                let mut acc = T::ZERO;
                for ((dv, w), we) in drow.iter_mut().zip(row).zip(&weighted_enc) {
                    *dv += h * *we;
                    acc += *w * *we;
                }
                dh_own[r] += acc;
            }
        }

        // Intruder encoder.
        for (i, x) in tape.intr_in.chunks_exact(d.obs).enumerate() {
            let enc = &tape.enc[i * e..(i + 1) * e];
            let dpre: Vec<T> = denc[i * e..(i + 1) * e]
                .iter()
                .zip(enc)
                .map(|(g, h)| *g * (T::ONE - *h * *h))
                .collect();
            let (lo, hi) = g.split_at_mut(INTR_B);
            dense_backward(
                self.v(INTR_W),
                x,
                &dpre,
                &mut lo[INTR_W],
                Some(&mut hi[0]),
                None,
            );
        }

        // Ownship encoder.
        for (dv, h) in dh_own.iter_mut().zip(&tape.h_own) {
            *dv *= T::ONE - *h * *h;
        }
        let (lo, hi) = g.split_at_mut(OWN_B);
        dense_backward(
            self.v(OWN_W),
            &tape.own_in,
            &dh_own,
            &mut lo[OWN_W],
            Some(&mut hi[0]),
            None,
        );
        Ok(())
    }

    /// All parameter values in tensor order.
    pub fn flat_values(&self) -> Vec<T> {
        self.params
            .iter()
            .flat_map(|p| p.values.iter().copied())
            .collect()
    }

    /// Overwrite all parameter values from tensor-ordered data.
    pub fn load_flat(&mut self, data: &[T]) -> Result<(), NnError> {
        let n = self.param_count();
        if data.len() != n {
            return Err(NnError::InputShape {
                expected: n,
                found: data.len(),
            });
        }
        let mut off = 0;
        for p in &mut self.params {
            let len = p.len();
            p.values.copy_from_slice(&data[off..off + len]);
            off += len;
        }
        Ok(())
    }
}

fn glorot_bound(shape: &[usize]) -> f64 {
    let (fan_out, fan_in) = (shape[0], shape[1]);
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

/// Glorot bound for a weight tensor, `None` for biases.
pub fn init_bound(shape: &[usize]) -> Option<f64> {
    (shape.len() == 2).then(|| glorot_bound(shape))
}

/// Draw an action index from `probs`; returns the index and its log-probability.
pub fn sample_action<T: Real, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> (usize, f64) {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last_nonzero = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.to_f64();
        if p > 0.0 {
            last_nonzero = i;
        }
        cum += p;
        if u < cum && p > 0.0 {
            return (i, libm::log(p));
        }
    }
    (last_nonzero, libm::log(probs[last_nonzero].to_f64()))
}

/// Most probable action, lowest index on ties.
pub fn greedy_action<T: Real>(probs: &[T]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}
