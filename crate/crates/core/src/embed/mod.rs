//! The visual classifier: a trainable embedding map with cosine matching.
//!
//! Two observations match visually according to the cosine similarity of
//! their embeddings, clamped to `[0, 1]` so the score can act as a
//! probability downstream. Training drives two heads that share the
//! embedding parameters:
//!
//! * a verification head `sigmoid(w_s . (e_i - e_j)^2 + b_s)` scoring
//!   whether a pair depicts one person, and
//! * an identification head `softmax(W_x e + b_x)` predicting which one.
//!
//! The verification head doubles as the pair-similarity pathway of the
//! ranking-feedback trainer in [`crate::rankopt`].

mod train;

pub use train::{
    balanced_pairs, supervised_grad, supervised_loss, train_supervised, SupPair, TrainHyper,
    TrainReport,
};

use rand::Rng;

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::scalar::{logistic, real, Real};
use crate::seed;

/// Embedding map architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedArch {
    /// Features pass through unchanged; no trainable embedding parameters.
    Identity,
    /// Single affine map `dim_in -> dim_embed`.
    Linear,
    /// Affine, tanh, affine: `dim_in -> dim_hidden -> dim_embed`.
    OneHidden,
}

impl EmbedArch {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbedArch::Identity => "identity",
            EmbedArch::Linear => "linear",
            EmbedArch::OneHidden => "hidden",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(EmbedArch::Identity),
            "linear" => Ok(EmbedArch::Linear),
            "hidden" => Ok(EmbedArch::OneHidden),
            other => Err(Error::parse(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Binary judgement of the classifier on an observation pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Judgement {
    Same,
    Different,
}

impl Judgement {
    pub fn is_same(self) -> bool {
        matches!(self, Judgement::Same)
    }
}

/// Trainable visual model: embedding map plus verification and
/// identification heads.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualModel<T> {
    arch: EmbedArch,
    dim_in: usize,
    dim_hidden: usize,
    dim_embed: usize,
    num_classes: usize,
    tau: T,
    // Parameters, in flat order: w1, b1, w2, b2, w_s, b_s, w_x, b_x.
    w1: Vec<T>, // dim_hidden x dim_in
    b1: Vec<T>,
    w2: Vec<T>, // dim_embed x (dim_in | dim_hidden)
    b2: Vec<T>,
    w_s: Vec<T>, // dim_embed
    b_s: T,
    w_x: Vec<T>, // num_classes x dim_embed
    b_x: Vec<T>,
}

impl<T: Real> VisualModel<T> {
    /// Model with all parameters zero. Used as the deserialization target
    /// and as the base for [`VisualModel::init`].
    pub fn zeroed(
        arch: EmbedArch,
        dim_in: usize,
        dim_hidden: usize,
        dim_embed: usize,
        num_classes: usize,
        tau: T,
    ) -> Result<Self> {
        if dim_in == 0 {
            return Err(Error::config("dim_in must be positive"));
        }
        if dim_embed == 0 {
            return Err(Error::config("dim_embed must be positive"));
        }
        if tau <= T::zero() || tau >= T::one() {
            return Err(Error::config("tau must lie strictly inside (0, 1)"));
        }
        let (dim_hidden, w2_cols) = match arch {
            EmbedArch::Identity => {
                if dim_embed != dim_in {
                    return Err(Error::config(
                        "identity architecture requires dim_embed == dim_in",
                    ));
                }
                (0, 0)
            }
            EmbedArch::Linear => (0, dim_in),
            EmbedArch::OneHidden => {
                if dim_hidden == 0 {
                    return Err(Error::config("hidden architecture requires dim_hidden >= 1"));
                }
                (dim_hidden, dim_hidden)
            }
        };
        let has_emb = !matches!(arch, EmbedArch::Identity);
        Ok(VisualModel {
            arch,
            dim_in,
            dim_hidden,
            dim_embed,
            num_classes,
            tau,
            w1: vec![T::zero(); dim_hidden * dim_in],
            b1: vec![T::zero(); dim_hidden],
            w2: if has_emb { vec![T::zero(); dim_embed * w2_cols] } else { Vec::new() },
            b2: if has_emb { vec![T::zero(); dim_embed] } else { Vec::new() },
            w_s: vec![T::zero(); dim_embed],
            b_s: T::zero(),
            w_x: vec![T::zero(); num_classes * dim_embed],
            b_x: vec![T::zero(); num_classes],
        })
    }

    /// Seeded initialization. The linear map starts near the identity on
    /// its leading square block so an untrained model ranks roughly like
    /// raw-feature cosine; heads start small with `w_s` negative (larger
    /// embedding distance means lower similarity).
    pub fn init(
        arch: EmbedArch,
        dim_in: usize,
        dim_hidden: usize,
        dim_embed: usize,
        num_classes: usize,
        tau: T,
        master_seed: u64,
    ) -> Result<Self> {
        let mut m = Self::zeroed(arch, dim_in, dim_hidden, dim_embed, num_classes, tau)?;
        let mut rng = seed::rng(master_seed, "model-init", 0);
        let uniform = |scale: f64, rng: &mut rand_chacha::ChaCha8Rng| -> T {
            real::<T>(rng.gen_range(-scale..scale))
        };
        match arch {
            EmbedArch::Identity => {}
            EmbedArch::Linear => {
                let noise = 0.02;
                for r in 0..dim_embed {
                    for c in 0..dim_in {
                        let base = if r == c { 1.0 } else { 0.0 };
                        m.w2[r * dim_in + c] = real::<T>(base) + uniform(noise, &mut rng);
                    }
                }
            }
            EmbedArch::OneHidden => {
                let s1 = (6.0 / (dim_in + m.dim_hidden) as f64).sqrt();
                for v in m.w1.iter_mut() {
                    *v = uniform(s1, &mut rng);
                }
                let s2 = (6.0 / (m.dim_hidden + dim_embed) as f64).sqrt();
                for v in m.w2.iter_mut() {
                    *v = uniform(s2, &mut rng);
                }
            }
        }
        for v in m.w_s.iter_mut() {
            *v = real::<T>(-2.0 / dim_embed as f64) + uniform(0.1 / dim_embed as f64, &mut rng);
        }
        m.b_s = T::one();
        for v in m.w_x.iter_mut() {
            *v = uniform(0.1, &mut rng);
        }
        Ok(m)
    }

    pub fn arch(&self) -> EmbedArch {
        self.arch
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_hidden(&self) -> usize {
        self.dim_hidden
    }

    pub fn dim_embed(&self) -> usize {
        self.dim_embed
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn set_tau(&mut self, tau: T) -> Result<()> {
        if tau <= T::zero() || tau >= T::one() {
            return Err(Error::config("tau must lie strictly inside (0, 1)"));
        }
        self.tau = tau;
        Ok(())
    }

    /// Map raw features into the embedding space.
    pub fn embed(&self, features: &[T]) -> Result<Vec<T>> {
        if features.len() != self.dim_in {
            return Err(Error::input(format!(
                "feature dimension {} does not match model input {}",
                features.len(),
                self.dim_in
            )));
        }
        Ok(self.trace(features).embed)
    }

    /// Cosine similarity of the two embeddings, clamped to `[0, 1]`.
    /// This is the matching probability the fusion stage calls `M1`.
    pub fn visual_score(&self, a: &Observation<T>, b: &Observation<T>) -> Result<T> {
        self.visual_score_checked(a, b).map(|(s, _)| s)
    }

    /// Like [`visual_score`](Self::visual_score); the flag marks a
    /// degenerate input (an embedding with zero norm), which scores 0.
    pub fn visual_score_checked(
        &self,
        a: &Observation<T>,
        b: &Observation<T>,
    ) -> Result<(T, bool)> {
        let ea = self.embed(&a.features)?;
        let eb = self.embed(&b.features)?;
        Ok(cosine_clamped(&ea, &eb))
    }

    /// Judged-same iff the visual score strictly exceeds `tau`.
    pub fn classify(&self, a: &Observation<T>, b: &Observation<T>) -> Result<Judgement> {
        let score = self.visual_score(a, b)?;
        Ok(if score > self.tau { Judgement::Same } else { Judgement::Different })
    }

    /// Verification-head similarity of two embeddings:
    /// `sigmoid(w_s . (a - b)^2 + b_s)`.
    pub fn verification_score(&self, a: &[T], b: &[T]) -> T {
        logistic(self.verification_logit(a, b))
    }

    pub(crate) fn verification_logit(&self, a: &[T], b: &[T]) -> T {
        let mut s = self.b_s;
        for d in 0..self.dim_embed {
            let diff = a[d] - b[d];
            s = s + self.w_s[d] * diff * diff;
        }
        s
    }

    /// Identification-head class probabilities for one embedding.
    pub fn id_probs(&self, e: &[T]) -> Vec<T> {
        let k = self.num_classes;
        let mut z = vec![T::zero(); k];
        for c in 0..k {
            let mut acc = self.b_x[c];
            for d in 0..self.dim_embed {
                acc = acc + self.w_x[c * self.dim_embed + d] * e[d];
            }
            z[c] = acc;
        }
        softmax_in_place(&mut z);
        z
    }

    pub fn param_len(&self) -> usize {
        self.w1.len()
            + self.b1.len()
            + self.w2.len()
            + self.b2.len()
            + self.w_s.len()
            + 1
            + self.w_x.len()
            + self.b_x.len()
    }

    /// Flat parameter vector in the canonical order
    /// `w1, b1, w2, b2, w_s, b_s, w_x, b_x`.
    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_len());
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
        out.extend_from_slice(&self.w_s);
        out.push(self.b_s);
        out.extend_from_slice(&self.w_x);
        out.extend_from_slice(&self.b_x);
        out
    }

    pub fn set_params_flat(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_len() {
            return Err(Error::input(format!(
                "expected {} parameters, got {}",
                self.param_len(),
                params.len()
            )));
        }
        let mut at = 0;
        let take = |dst: &mut [T], at: &mut usize| {
            dst.copy_from_slice(&params[*at..*at + dst.len()]);
            *at += dst.len();
        };
        let mut w1 = std::mem::take(&mut self.w1);
        take(&mut w1, &mut at);
        self.w1 = w1;
        let mut b1 = std::mem::take(&mut self.b1);
        take(&mut b1, &mut at);
        self.b1 = b1;
        let mut w2 = std::mem::take(&mut self.w2);
        take(&mut w2, &mut at);
        self.w2 = w2;
        let mut b2 = std::mem::take(&mut self.b2);
        take(&mut b2, &mut at);
        self.b2 = b2;
        let mut w_s = std::mem::take(&mut self.w_s);
        take(&mut w_s, &mut at);
        self.w_s = w_s;
        self.b_s = params[at];
        at += 1;
        let mut w_x = std::mem::take(&mut self.w_x);
        take(&mut w_x, &mut at);
        self.w_x = w_x;
        let mut b_x = std::mem::take(&mut self.b_x);
        take(&mut b_x, &mut at);
        self.b_x = b_x;
        Ok(())
    }

    pub fn params_finite(&self) -> bool {
        self.params_flat().iter().all(|p| p.is_finite())
    }

    /// In-place gradient step `p -= lr * g`.
    pub(crate) fn apply_step(&mut self, lr: T, grad: &[T]) {
        debug_assert_eq!(grad.len(), self.param_len());
        let mut p = self.params_flat();
        for (pi, gi) in p.iter_mut().zip(grad) {
            *pi = *pi - lr * *gi;
        }
        self.set_params_flat(&p).expect("length preserved");
    }

    // ----- forward / backward internals ------------------------------------

    pub(crate) fn trace(&self, x: &[T]) -> Trace<T> {
        match self.arch {
            EmbedArch::Identity => Trace { hidden: Vec::new(), embed: x.to_vec() },
            EmbedArch::Linear => {
                let mut e = self.b2.clone();
                matvec_add(&self.w2, self.dim_embed, self.dim_in, x, &mut e);
                Trace { hidden: Vec::new(), embed: e }
            }
            EmbedArch::OneHidden => {
                let mut h = self.b1.clone();
                matvec_add(&self.w1, self.dim_hidden, self.dim_in, x, &mut h);
                for v in h.iter_mut() {
                    *v = v.tanh();
                }
                let mut e = self.b2.clone();
                matvec_add(&self.w2, self.dim_embed, self.dim_hidden, &h, &mut e);
                Trace { hidden: h, embed: e }
            }
        }
    }

    /// Accumulate parameter gradients of the embedding map given
    /// `g = dL/d(embed)` for input `x`, into the flat gradient buffer.
    pub(crate) fn backprop_embed(&self, x: &[T], tr: &Trace<T>, g: &[T], grad: &mut [T]) {
        let o = self.offsets();
        match self.arch {
            EmbedArch::Identity => {}
            EmbedArch::Linear => {
                for r in 0..self.dim_embed {
                    let row = &mut grad[o.w2 + r * self.dim_in..o.w2 + (r + 1) * self.dim_in];
                    for c in 0..self.dim_in {
                        row[c] = row[c] + g[r] * x[c];
                    }
                    grad[o.b2 + r] = grad[o.b2 + r] + g[r];
                }
            }
            EmbedArch::OneHidden => {
                let h = &tr.hidden;
                let mut gh = vec![T::zero(); self.dim_hidden];
                for r in 0..self.dim_embed {
                    for c in 0..self.dim_hidden {
                        grad[o.w2 + r * self.dim_hidden + c] =
                            grad[o.w2 + r * self.dim_hidden + c] + g[r] * h[c];
                        gh[c] = gh[c] + g[r] * self.w2[r * self.dim_hidden + c];
                    }
                    grad[o.b2 + r] = grad[o.b2 + r] + g[r];
                }
                for c in 0..self.dim_hidden {
                    gh[c] = gh[c] * (T::one() - h[c] * h[c]);
                }
                for r in 0..self.dim_hidden {
                    for c in 0..self.dim_in {
                        grad[o.w1 + r * self.dim_in + c] =
                            grad[o.w1 + r * self.dim_in + c] + gh[r] * x[c];
                    }
                    grad[o.b1 + r] = grad[o.b1 + r] + gh[r];
                }
            }
        }
    }

    /// Accumulate gradients of the verification logit
    /// `s = w_s . (e_i - e_j)^2 + b_s` given `g_s = dL/ds`, chaining into
    /// both embedding traces.
    pub(crate) fn backprop_verification(
        &self,
        xi: &[T],
        ti: &Trace<T>,
        xj: &[T],
        tj: &Trace<T>,
        g_s: T,
        grad: &mut [T],
    ) {
        let o = self.offsets();
        let mut g_ei = vec![T::zero(); self.dim_embed];
        let mut g_ej = vec![T::zero(); self.dim_embed];
        for d in 0..self.dim_embed {
            let diff = ti.embed[d] - tj.embed[d];
            grad[o.w_s + d] = grad[o.w_s + d] + g_s * diff * diff;
            let two = real::<T>(2.0);
            g_ei[d] = g_s * self.w_s[d] * two * diff;
            g_ej[d] = -g_ei[d];
        }
        grad[o.b_s] = grad[o.b_s] + g_s;
        self.backprop_embed(xi, ti, &g_ei, grad);
        self.backprop_embed(xj, tj, &g_ej, grad);
    }

    /// Identification loss `-log p_hat[class]` and its gradients for one
    /// embedding; returns the loss and accumulates into `grad` and `g_e`.
    pub(crate) fn id_loss_backward(
        &self,
        tr: &Trace<T>,
        class: usize,
        grad: &mut [T],
        g_e: &mut [T],
    ) -> T {
        let o = self.offsets();
        let probs = self.id_probs(&tr.embed);
        let eps = real::<T>(1e-300);
        let loss = -(probs[class].max(eps)).ln();
        for k in 0..self.num_classes {
            let dz = probs[k] - if k == class { T::one() } else { T::zero() };
            for d in 0..self.dim_embed {
                grad[o.w_x + k * self.dim_embed + d] =
                    grad[o.w_x + k * self.dim_embed + d] + dz * tr.embed[d];
                g_e[d] = g_e[d] + dz * self.w_x[k * self.dim_embed + d];
            }
            grad[o.b_x + k] = grad[o.b_x + k] + dz;
        }
        loss
    }

    pub(crate) fn offsets(&self) -> Offsets {
        let w1 = 0;
        let b1 = w1 + self.w1.len();
        let w2 = b1 + self.b1.len();
        let b2 = w2 + self.w2.len();
        let w_s = b2 + self.b2.len();
        let b_s = w_s + self.w_s.len();
        let w_x = b_s + 1;
        let b_x = w_x + self.w_x.len();
        Offsets { w1, b1, w2, b2, w_s, b_s, w_x, b_x }
    }

    /// Flat indices of the embedding-map parameters (empty for the
    /// identity architecture). Used to restrict ranking-feedback training
    /// to the shared embedding when the head is frozen.
    pub(crate) fn embedding_param_range(&self) -> std::ops::Range<usize> {
        0..self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }
}

pub(crate) struct Trace<T> {
    pub hidden: Vec<T>,
    pub embed: Vec<T>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Offsets {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub w_s: usize,
    pub b_s: usize,
    pub w_x: usize,
    pub b_x: usize,
}

/// Cosine similarity clamped to `[0, 1]`; the flag marks zero-norm input,
/// which scores 0.
pub fn cosine_clamped<T: Real>(a: &[T], b: &[T]) -> (T, bool) {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = T::zero();
    let mut na = T::zero();
    let mut nb = T::zero();
    for d in 0..a.len() {
        dot = dot + a[d] * b[d];
        na = na + a[d] * a[d];
        nb = nb + b[d] * b[d];
    }
    if na == T::zero() || nb == T::zero() {
        return (T::zero(), true);
    }
    let cos = dot / (na.sqrt() * nb.sqrt());
    (cos.max(T::zero()).min(T::one()), false)
}

fn matvec_add<T: Real>(w: &[T], rows: usize, cols: usize, x: &[T], out: &mut [T]) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = out[r];
        for c in 0..cols {
            acc = acc + row[c] * x[c];
        }
        out[r] = acc;
    }
}

fn softmax_in_place<T: Real>(z: &mut [T]) {
    let mut m = T::neg_infinity();
    for v in z.iter() {
        m = m.max(*v);
    }
    let mut sum = T::zero();
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum = sum + *v;
    }
    for v in z.iter_mut() {
        *v = *v / sum;
    }
}

/// Precomputed embeddings for a whole dataset; pair scoring against this
/// cache avoids re-running the embedding map per pair.
pub struct Embeddings<T> {
    dim: usize,
    data: Vec<T>,
    norms: Vec<T>,
}

impl<T: Real> Embeddings<T> {
    pub fn compute(model: &VisualModel<T>, dataset: &Dataset<T>) -> Result<Self> {
        let dim = model.dim_embed();
        let mut data = Vec::with_capacity(dataset.len() * dim);
        let mut norms = Vec::with_capacity(dataset.len());
        for obs in dataset.observations() {
            let e = model.embed(&obs.features)?;
            let mut n = T::zero();
            for v in &e {
                n = n + *v * *v;
            }
            norms.push(n.sqrt());
            data.extend_from_slice(&e);
        }
        Ok(Embeddings { dim, data, norms })
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn get(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Clamped cosine between cached embeddings `i` and `j`.
    pub fn cosine(&self, i: usize, j: usize) -> T {
        if self.norms[i] == T::zero() || self.norms[j] == T::zero() {
            return T::zero();
        }
        let (a, b) = (self.get(i), self.get(j));
        let mut dot = T::zero();
        for d in 0..self.dim {
            dot = dot + a[d] * b[d];
        }
        let cos = dot / (self.norms[i] * self.norms[j]);
        cos.max(T::zero()).min(T::one())
    }

    pub fn judge(&self, i: usize, j: usize, tau: T) -> Judgement {
        if self.cosine(i, j) > tau {
            Judgement::Same
        } else {
            Judgement::Different
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ObsId;
    use proptest::prelude::*;

    fn obs(id: u64, features: Vec<f64>) -> Observation<f64> {
        Observation { id: ObsId(id), camera: 0, frame: 0, features }
    }

    fn identity_model(dim: usize) -> VisualModel<f64> {
        VisualModel::zeroed(EmbedArch::Identity, dim, 0, dim, 2, 0.5).unwrap()
    }

    #[test]
    fn identity_embed_passes_through() {
        let m = identity_model(3);
        assert_eq!(m.embed(&[1.0, 0.0, 2.0]).unwrap(), vec![1.0, 0.0, 2.0]);
    }

    #[test]
    fn zero_linear_map_embeds_to_zero() {
        let m = VisualModel::zeroed(EmbedArch::Linear, 3, 0, 2, 2, 0.5).unwrap();
        assert_eq!(m.embed(&[4.0, -1.0, 9.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn random_linear_map_matches_independent_matvec() {
        // Independent oracle: plain nested-loop product written separately
        // from the model's forward pass.
        let mut m = VisualModel::zeroed(EmbedArch::Linear, 4, 0, 3, 2, 0.5).unwrap();
        let mut rng = crate::seed::rng(99, "test-linear", 0);
        let mut params = m.params_flat();
        for p in params.iter_mut() {
            *p = rng.gen_range(-1.0..1.0);
        }
        m.set_params_flat(&params).unwrap();
        let x = [0.3, -1.2, 2.0, 0.7];
        let got = m.embed(&x).unwrap();

        let o = m.offsets();
        for r in 0..3 {
            let mut want: f64 = params[o.b2 + r];
            for c in 0..4 {
                want += params[o.w2 + r * 4 + c] * x[c];
            }
            assert!((got[r] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let m = identity_model(3);
        assert!(m.embed(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn score_identical_orthogonal_antiparallel() {
        let m = identity_model(2);
        let a = obs(0, vec![1.0, 0.0]);
        let same = obs(1, vec![1.0, 0.0]);
        let orth = obs(2, vec![0.0, 1.0]);
        let anti = obs(3, vec![-1.0, 0.0]);
        assert!((m.visual_score(&a, &same).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(m.visual_score(&a, &orth).unwrap(), 0.0);
        assert_eq!(m.visual_score(&a, &anti).unwrap(), 0.0);
    }

    #[test]
    fn zero_norm_scores_zero_with_flag() {
        let m = identity_model(2);
        let a = obs(0, vec![0.0, 0.0]);
        let b = obs(1, vec![1.0, 0.0]);
        let (score, degenerate) = m.visual_score_checked(&a, &b).unwrap();
        assert_eq!(score, 0.0);
        assert!(degenerate);
    }

    #[test]
    fn classify_uses_strict_threshold() {
        let mut m = identity_model(2);
        let a = obs(0, vec![1.0, 0.0]);
        let b = obs(1, vec![1.0, 0.0]);
        let c = obs(2, vec![0.0, 1.0]);
        assert_eq!(m.classify(&a, &b).unwrap(), Judgement::Same);
        assert_eq!(m.classify(&a, &c).unwrap(), Judgement::Different);
        // A score exactly at tau is judged different.
        let d = obs(3, vec![1.0, 1.0]);
        let score = m.visual_score(&a, &d).unwrap(); // 1/sqrt(2)
        m.set_tau(score).unwrap();
        assert_eq!(m.classify(&a, &d).unwrap(), Judgement::Different);
    }

    #[test]
    fn embeddings_cache_matches_direct_scores() {
        let m = VisualModel::init(EmbedArch::Linear, 3, 0, 3, 2, 0.5, 7).unwrap();
        let observations = vec![
            obs(0, vec![1.0, 0.2, -0.3]),
            obs(1, vec![0.5, -1.0, 0.8]),
            obs(2, vec![-0.1, 0.4, 1.5]),
        ];
        let ds = Dataset::new(observations, vec![None; 3], 1, crate::data::Split::TargetEval)
            .unwrap();
        let cache = Embeddings::compute(&m, &ds).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let direct = m.visual_score(ds.get(i), ds.get(j)).unwrap();
                assert!((cache.cosine(i, j) - direct).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn score_symmetric_and_scale_invariant(
            a in proptest::collection::vec(-5.0f64..5.0, 4),
            b in proptest::collection::vec(-5.0f64..5.0, 4),
            scale in 0.01f64..50.0,
        ) {
            let m = identity_model(4);
            let oa = obs(0, a.clone());
            let ob = obs(1, b.clone());
            let sab = m.visual_score(&oa, &ob).unwrap();
            let sba = m.visual_score(&ob, &oa).unwrap();
            // Exact symmetry: same multiplications, same summation order.
            prop_assert_eq!(sab, sba);

            let oa2 = obs(2, a.iter().map(|v| v * scale).collect());
            let ob2 = obs(3, b.iter().map(|v| v * scale).collect());
            let s2 = m.visual_score(&oa2, &ob2).unwrap();
            prop_assert!((sab - s2).abs() < 1e-9);
        }
    }
}
