//! Ranking-feedback training: the fusion scorer teaches the visual model.
//!
//! Each round, the fusion scorer ranks every query over the unlabeled
//! dataset. For a query `S_i`, one gallery item is drawn from the top `n`
//! ranks and one from ranks `(n, 2n]`; a fair coin assigns them the roles
//! `S_j` and `S_k`. The teacher signal is the normalized ranking
//! difference
//!
//! ```text
//! P_jk = exp(phi_ij - phi_ik) / (1 + exp(phi_ij - phi_ik))
//! ```
//!
//! over the fusion scores `phi`. The student predicts `P_hat_jk` through
//! the verification head applied to its own embeddings and trains on the
//! pair cross entropy
//!
//! ```text
//! LOSS_r = -P_hat * log(P) - (1 - P_hat) * log(1 - P)
//! ```
//!
//! written exactly in this orientation (the teacher probability sits
//! inside the logarithms). [`LossOrientation::Conventional`] swaps the
//! roles for sensitivity studies. A trained model regenerates the
//! histograms, which yields a better fusion scorer, and the loop repeats
//! until the mean loss stops moving or the iteration budget runs out.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use crate::data::{Dataset, ObsId};
use crate::embed::VisualModel;
use crate::error::{Error, Result};
use crate::fusion::{rank_all_fusion, FusionParams, RankingResult};
use crate::scalar::{logistic, real, to_f64, Real};
use crate::seed;
use crate::stpattern::{count_patterns, BinSpec};

/// Which side of the ranking cross entropy carries the teacher value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossOrientation {
    /// Teacher inside the logarithms, prediction as the weight.
    #[default]
    Verbatim,
    /// Prediction inside the logarithms, teacher as the weight.
    Conventional,
}

/// One teaching example. `sj`/`sk` are one top-`n` item and one
/// `(n, 2n]` item of the query's ranking, roles assigned by a fair coin;
/// `p_target` is the teacher's `P_jk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet<T> {
    pub query: ObsId,
    pub sj: ObsId,
    pub sk: ObsId,
    pub p_target: T,
}

/// Gradient-descent settings for one training call inside the loop.
#[derive(Debug, Clone)]
pub struct RankHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for RankHyper {
    fn default() -> Self {
        RankHyper { learning_rate: 0.05, epochs: 5, batch_size: 32 }
    }
}

/// Loop configuration.
#[derive(Debug, Clone)]
pub struct LoopConfig {
    /// Stratum size `n`; a query needs a gallery of at least `2n`.
    pub n: usize,
    pub triplets_per_query: usize,
    pub max_iterations: usize,
    /// Stop once the mean loss changes by less than this between rounds.
    pub delta: f64,
    pub inner: RankHyper,
    /// Pair budget for the per-round histogram rebuild (same seeded
    /// subsample every round, so rounds differ only through the model).
    pub pair_budget: u64,
    /// Rank only this many seeded query indices per round; all when absent.
    pub query_budget: Option<usize>,
    pub seed: u64,
    pub orientation: LossOrientation,
    /// Train only the shared embedding parameters, leaving the
    /// verification head fixed at its supervised operating point.
    pub freeze_head: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            n: 4,
            triplets_per_query: 1,
            max_iterations: 3,
            delta: 1e-4,
            inner: RankHyper::default(),
            pair_budget: u64::MAX,
            query_budget: None,
            seed: 0,
            orientation: LossOrientation::Verbatim,
            freeze_head: false,
        }
    }
}

/// Ranking cross entropy in the written orientation:
/// `-p_hat * ln(p) - (1 - p_hat) * ln(1 - p)`.
///
/// `p` must lie strictly inside (0, 1); a logistic teacher value never
/// reaches the endpoints exactly (triplet sampling clamps away the
/// floating-point saturation), so an endpoint here is a caller bug.
pub fn rank_loss<T: Real>(p_hat: T, p: T) -> Result<T> {
    rank_loss_oriented(p_hat, p, LossOrientation::Verbatim)
}

/// [`rank_loss`] with a selectable orientation.
pub fn rank_loss_oriented<T: Real>(p_hat: T, p: T, orientation: LossOrientation) -> Result<T> {
    if p <= T::zero() || p >= T::one() {
        return Err(Error::domain(format!("teacher probability {p} outside (0, 1)")));
    }
    if p_hat < T::zero() || p_hat > T::one() {
        return Err(Error::domain(format!("prediction {p_hat} outside [0, 1]")));
    }
    Ok(match orientation {
        LossOrientation::Verbatim => -(p_hat * p.ln()) - (T::one() - p_hat) * (T::one() - p).ln(),
        LossOrientation::Conventional => {
            let eps = real::<T>(1e-12);
            let ph = p_hat.max(eps).min(T::one() - eps);
            -(p * ph.ln()) - (T::one() - p) * (T::one() - ph).ln()
        }
    })
}

/// Draw triplets from one ranking. Requires a gallery of at least `2n`.
pub fn sample_triplets<T: Real>(
    ranking: &RankingResult<T>,
    cfg: &LoopConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<Triplet<T>>> {
    let n = cfg.n;
    if n == 0 {
        return Err(Error::config("stratum size n must be >= 1"));
    }
    if ranking.entries.len() < 2 * n {
        return Err(Error::input(format!(
            "gallery of {} is smaller than 2n = {}",
            ranking.entries.len(),
            2 * n
        )));
    }
    let mut out = Vec::with_capacity(cfg.triplets_per_query);
    for _ in 0..cfg.triplets_per_query {
        let top = rng.gen_range(0..n);
        let mid = rng.gen_range(n..2 * n);
        let (j, k) = if rng.gen::<bool>() { (top, mid) } else { (mid, top) };
        let phi_ij = ranking.entries[j].1;
        let phi_ik = ranking.entries[k].1;
        // Clamp away floating-point saturation of the logistic so the loss
        // logarithms stay finite.
        let eps = T::epsilon();
        let p = logistic(phi_ij - phi_ik).max(eps).min(T::one() - eps);
        out.push(Triplet {
            query: ranking.query,
            sj: ranking.entries[j].0,
            sk: ranking.entries[k].0,
            p_target: p,
        });
    }
    Ok(out)
}

fn index_map<T: Real>(dataset: &Dataset<T>) -> HashMap<ObsId, usize> {
    dataset
        .observations()
        .iter()
        .enumerate()
        .map(|(idx, o)| (o.id, idx))
        .collect()
}

fn resolve<T: Real>(
    map: &HashMap<ObsId, usize>,
    t: &Triplet<T>,
) -> Result<(usize, usize, usize)> {
    let get = |id: ObsId| {
        map.get(&id)
            .copied()
            .ok_or_else(|| Error::input(format!("triplet references unknown observation {id}")))
    };
    Ok((get(t.query)?, get(t.sj)?, get(t.sk)?))
}

/// Mean ranking loss of the model's predictions over a fixed triplet set.
pub fn triplet_loss<T: Real>(
    model: &VisualModel<T>,
    dataset: &Dataset<T>,
    triplets: &[Triplet<T>],
    orientation: LossOrientation,
) -> Result<T> {
    if triplets.is_empty() {
        return Err(Error::input("empty triplet set"));
    }
    let map = index_map(dataset);
    let mut acc = T::zero();
    for t in triplets {
        let (qi, ji, ki) = resolve(&map, t)?;
        let ei = model.embed(&dataset.get(qi).features)?;
        let ej = model.embed(&dataset.get(ji).features)?;
        let ek = model.embed(&dataset.get(ki).features)?;
        let phi_j = model.verification_score(&ei, &ej);
        let phi_k = model.verification_score(&ei, &ek);
        let p_hat = logistic(phi_j - phi_k);
        acc = acc + rank_loss_oriented(p_hat, t.p_target, orientation)?;
    }
    Ok(acc / real::<T>(triplets.len() as f64))
}

/// Mean ranking loss and its analytic gradient (flat, canonical order)
/// over a fixed triplet set. Gradients flow through both verification
/// pathways into the shared embedding parameters.
pub fn triplet_grad<T: Real>(
    model: &VisualModel<T>,
    dataset: &Dataset<T>,
    triplets: &[Triplet<T>],
    orientation: LossOrientation,
) -> Result<(T, Vec<T>)> {
    if triplets.is_empty() {
        return Err(Error::input("empty triplet set"));
    }
    let map = index_map(dataset);
    let mut grad = vec![T::zero(); model.param_len()];
    let mut acc = T::zero();
    for t in triplets {
        let (qi, ji, ki) = resolve(&map, t)?;
        let xi = &dataset.get(qi).features;
        let xj = &dataset.get(ji).features;
        let xk = &dataset.get(ki).features;
        let ti = model.trace(xi);
        let tj = model.trace(xj);
        let tk = model.trace(xk);
        let phi_j = logistic(model.verification_logit(&ti.embed, &tj.embed));
        let phi_k = logistic(model.verification_logit(&ti.embed, &tk.embed));
        let p_hat = logistic(phi_j - phi_k);
        let p = t.p_target;
        acc = acc + rank_loss_oriented(p_hat, p, orientation)?;

        // dL/d(phi_j - phi_k)
        let g_diff = match orientation {
            LossOrientation::Verbatim => {
                // dL/dp_hat = ln((1 - p) / p), then the logistic derivative.
                ((T::one() - p) / p).ln() * p_hat * (T::one() - p_hat)
            }
            LossOrientation::Conventional => p_hat - p,
        };
        let g_sj = g_diff * phi_j * (T::one() - phi_j);
        let g_sk = -g_diff * phi_k * (T::one() - phi_k);
        model.backprop_verification(xi, &ti, xj, &tj, g_sj, &mut grad);
        model.backprop_verification(xi, &ti, xk, &tk, g_sk, &mut grad);
    }
    let inv = T::one() / real::<T>(triplets.len() as f64);
    for g in grad.iter_mut() {
        *g = *g * inv;
    }
    Ok((acc * inv, grad))
}

/// Outcome of one ranking-feedback training call.
#[derive(Debug, Clone)]
pub struct RankTrainReport {
    pub loss_start: f64,
    pub loss_end: f64,
    pub epochs_run: usize,
}

/// Gradient descent on the mean ranking loss over a fixed triplet set.
///
/// Epochs run over seeded shuffles; the returned model is the best
/// full-set iterate, so the reported end loss never exceeds the start
/// loss.
pub fn train_on_triplets<T: Real>(
    model: &VisualModel<T>,
    dataset: &Dataset<T>,
    triplets: &[Triplet<T>],
    hyper: &RankHyper,
    orientation: LossOrientation,
    freeze_head: bool,
    seed: u64,
) -> Result<(VisualModel<T>, RankTrainReport)> {
    if triplets.is_empty() {
        return Err(Error::input("empty triplet set"));
    }
    let mut current = model.clone();
    let loss_start = to_f64(triplet_loss(&current, dataset, triplets, orientation)?);
    let mut best = current.clone();
    let mut best_loss = loss_start;

    let mut order: Vec<usize> = (0..triplets.len()).collect();
    let mut rng = seed::rng(seed, "triplet-shuffle", 0);
    let lr = real::<T>(hyper.learning_rate);
    let head_start = current.embedding_param_range().end;

    for _epoch in 0..hyper.epochs {
        // Fisher-Yates shuffle of the triplet order.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let batch_size = hyper.batch_size.max(1);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<Triplet<T>> = chunk.iter().map(|&i| triplets[i]).collect();
            let (_, mut grad) = triplet_grad(&current, dataset, &batch, orientation)?;
            if freeze_head {
                for g in grad.iter_mut().skip(head_start) {
                    *g = T::zero();
                }
            }
            current.apply_step(lr, &grad);
        }
        if !current.params_finite() {
            return Err(Error::domain("ranking training diverged: non-finite parameters"));
        }
        let loss = to_f64(triplet_loss(&current, dataset, triplets, orientation)?);
        if loss < best_loss {
            best_loss = loss;
            best = current.clone();
        }
    }
    Ok((
        best,
        RankTrainReport { loss_start, loss_end: best_loss, epochs_run: hyper.epochs },
    ))
}

/// Per-round record of the promotion loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean loss over this round's triplets before/after training.
    pub mean_loss_start: f64,
    pub mean_loss_end: f64,
    pub triplets: usize,
    /// Queries skipped because their gallery was smaller than `2n`.
    pub skipped_queries: usize,
    /// Rank-1 of the updated visual model, when an evaluation hook ran.
    pub rank1_visual: Option<f64>,
    /// Rank-1 of this round's fusion teacher, when a hook ran.
    pub rank1_fusion: Option<f64>,
}

/// Optional measurement callback; receives the round's fusion teacher and
/// the post-training visual model, returns their rank-1 scores. Runs
/// outside the learning path — it may use labeled data freely.
pub type EvalHook<'a, T> = dyn Fn(&VisualModel<T>, &FusionParams<T>) -> (f64, f64) + 'a;

/// The mutual-promotion loop. Per round: rebuild the histograms with the
/// current model, build the fusion teacher, rank the queries, sample
/// triplets, train the model on the teacher's ranking differences. Stops
/// at the iteration budget or once the mean loss moves less than `delta`.
///
/// Returns the final model, a fusion scorer rebuilt from it, and the
/// per-round history. Never reads labels.
pub fn mutual_promote<T: Real>(
    model: &VisualModel<T>,
    dataset: &Dataset<T>,
    bins: &BinSpec,
    alpha: T,
    beta: T,
    cfg: &LoopConfig,
    eval_hook: Option<&EvalHook<'_, T>>,
) -> Result<(VisualModel<T>, FusionParams<T>, Vec<IterationRecord>)> {
    if dataset.is_empty() {
        return Err(Error::input("cannot run the promotion loop on an empty dataset"));
    }
    let mut current = model.clone();
    let mut history: Vec<IterationRecord> = Vec::new();

    let queries: Vec<usize> = match cfg.query_budget {
        None => (0..dataset.len()).collect(),
        Some(budget) if budget >= dataset.len() => (0..dataset.len()).collect(),
        Some(budget) => {
            let mut rng = seed::rng(cfg.seed, "query-sample", 0);
            let mut idx: Vec<usize> = (0..dataset.len()).collect();
            for i in (1..idx.len()).rev() {
                let j = rng.gen_range(0..=i);
                idx.swap(i, j);
            }
            let mut chosen: Vec<usize> = idx.into_iter().take(budget).collect();
            chosen.sort_unstable();
            chosen
        }
    };

    let build_fusion = |m: &VisualModel<T>| -> Result<FusionParams<T>> {
        let counts = count_patterns(m, dataset, bins, cfg.pair_budget, cfg.seed)?;
        FusionParams::new(
            alpha,
            beta,
            Arc::new(m.clone()),
            Arc::new(counts.pos),
            Arc::new(counts.neg),
            Arc::new(counts.marginal),
        )
    };

    for iteration in 0..cfg.max_iterations {
        let fusion = build_fusion(&current)?;
        let rankings = rank_all_fusion(&fusion, dataset, &queries)?;

        let mut rng = seed::rng(cfg.seed, "triplet-draw", iteration as u64);
        let mut triplets = Vec::new();
        let mut skipped = 0usize;
        for ranking in &rankings {
            if ranking.entries.len() < 2 * cfg.n {
                skipped += 1;
                log::warn!(
                    "query {} skipped: gallery {} < 2n = {}",
                    ranking.query,
                    ranking.entries.len(),
                    2 * cfg.n
                );
                continue;
            }
            triplets.extend(sample_triplets(ranking, cfg, &mut rng)?);
        }
        if triplets.is_empty() {
            log::warn!("round {iteration}: no usable queries, stopping early");
            break;
        }

        let (trained, report) = train_on_triplets(
            &current,
            dataset,
            &triplets,
            &cfg.inner,
            cfg.orientation,
            cfg.freeze_head,
            seed::substream(cfg.seed, "train", iteration as u64),
        )?;
        current = trained;

        let (rank1_visual, rank1_fusion) = match eval_hook {
            Some(hook) => {
                let (c, f) = hook(&current, &fusion);
                (Some(c), Some(f))
            }
            None => (None, None),
        };
        history.push(IterationRecord {
            iteration,
            mean_loss_start: report.loss_start,
            mean_loss_end: report.loss_end,
            triplets: triplets.len(),
            skipped_queries: skipped,
            rank1_visual,
            rank1_fusion,
        });

        if history.len() >= 2 {
            let prev = history[history.len() - 2].mean_loss_end;
            if (report.loss_end - prev).abs() < cfg.delta {
                break;
            }
        }
    }

    let fusion = build_fusion(&current)?;
    Ok((current, fusion, history))
}
