//! Fusion of visual similarity with spatio-temporal statistics.
//!
//! For a pair with visual score `M1`, judged-same interval probability
//! `M2`, judged-different interval probability `M3`, and marginal interval
//! probability `Pm` (all three from windowed histogram lookups), the
//! fusion score with configurable rates `alpha`, `beta` is
//!
//! ```text
//! (M1 + alpha / (1 - alpha - beta)) * ((1 - alpha) * M2 - beta * M3) / Pm
//! ```
//!
//! Scores are unnormalized ranking scores, not probabilities: only their
//! order matters, and spatio-temporally impossible pairs may go negative.

use std::sync::Arc;

use rayon::prelude::*;

use crate::data::{pair_interval, Dataset, ObsId, Observation, PairInterval};
use crate::embed::{Embeddings, Judgement, VisualModel};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::stpattern::StHistogram;

/// Fusion scorer: `(alpha, beta)` plus the three histograms and the
/// visual model the scores come from.
#[derive(Debug, Clone)]
pub struct FusionParams<T> {
    alpha: T,
    beta: T,
    model: Arc<VisualModel<T>>,
    pos: Arc<StHistogram<T>>,
    neg: Arc<StHistogram<T>>,
    marginal: Arc<StHistogram<T>>,
}

impl<T: Real> FusionParams<T> {
    /// Requires `alpha, beta in [0, 1)` and `alpha + beta < 1`; the three
    /// histograms must share one bin specification.
    pub fn new(
        alpha: T,
        beta: T,
        model: Arc<VisualModel<T>>,
        pos: Arc<StHistogram<T>>,
        neg: Arc<StHistogram<T>>,
        marginal: Arc<StHistogram<T>>,
    ) -> Result<Self> {
        if alpha < T::zero() || beta < T::zero() || alpha >= T::one() || beta >= T::one() {
            return Err(Error::domain("alpha and beta must lie in [0, 1)"));
        }
        if alpha + beta >= T::one() {
            return Err(Error::domain(format!(
                "alpha + beta must be < 1, got {} + {}",
                alpha, beta
            )));
        }
        pos.check_compatible(&neg)?;
        pos.check_compatible(&marginal)?;
        Ok(FusionParams { alpha, beta, model, pos, neg, marginal })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn model(&self) -> &VisualModel<T> {
        &self.model
    }

    pub fn histograms(&self) -> (&StHistogram<T>, &StHistogram<T>, &StHistogram<T>) {
        (&self.pos, &self.neg, &self.marginal)
    }

    /// Fusion score given a precomputed visual score `m1`; the flag marks
    /// a degenerate zero-marginal lookup (possible only with a zero
    /// smoothing pseudocount), which scores 0.
    pub fn score_with_m1(&self, m1: T, pi: &PairInterval) -> (T, bool) {
        let m2 = self.pos.lookup(pi);
        let m3 = self.neg.lookup(pi);
        let pm = self.marginal.lookup(pi);
        fusion_kernel(self.alpha, self.beta, m1, m2, m3, pm)
    }

    /// Fusion score of an observation pair.
    pub fn fusion_score(&self, a: &Observation<T>, b: &Observation<T>) -> Result<T> {
        self.fusion_score_checked(a, b).map(|(s, _)| s)
    }

    pub fn fusion_score_checked(
        &self,
        a: &Observation<T>,
        b: &Observation<T>,
    ) -> Result<(T, bool)> {
        let (m1, m1_degenerate) = self.model.visual_score_checked(a, b)?;
        let (score, pm_degenerate) = self.score_with_m1(m1, &pair_interval(a, b));
        Ok((score, m1_degenerate || pm_degenerate))
    }

    /// Judged-same iff the fusion score strictly exceeds `tau_f`.
    pub fn classify(
        &self,
        a: &Observation<T>,
        b: &Observation<T>,
        tau_f: T,
    ) -> Result<Judgement> {
        let score = self.fusion_score(a, b)?;
        Ok(if score > tau_f { Judgement::Same } else { Judgement::Different })
    }
}

/// The fusion formula on raw ingredients. Returns the score and a flag
/// for the degenerate `Pm = 0` case (score 0).
pub fn fusion_kernel<T: Real>(alpha: T, beta: T, m1: T, m2: T, m3: T, p_marginal: T) -> (T, bool) {
    if p_marginal <= T::zero() {
        return (T::zero(), true);
    }
    let shift = alpha / (T::one() - alpha - beta);
    let st = (T::one() - alpha) * m2 - beta * m3;
    ((m1 + shift) * st / p_marginal, false)
}

/// Ranked gallery for one query, scores non-increasing; ties broken by
/// ascending observation id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult<T> {
    pub query: ObsId,
    /// `(gallery id, score)`, best first.
    pub entries: Vec<(ObsId, T)>,
    /// Tie-break rule tag, fixed for reproducibility.
    pub tie_break: &'static str,
}

pub const TIE_BREAK_RULE: &str = "score-desc,id-asc";

fn sort_entries<T: Real>(entries: &mut [(ObsId, T)]) {
    entries.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
}

/// Rank a gallery against one query by fusion score. The query itself is
/// excluded from the gallery by observation id.
pub fn fuse_rank<T: Real>(
    params: &FusionParams<T>,
    query: &Observation<T>,
    gallery: &[Observation<T>],
) -> Result<RankingResult<T>> {
    let mut entries = Vec::with_capacity(gallery.len());
    for g in gallery {
        if g.id == query.id {
            continue;
        }
        entries.push((g.id, params.fusion_score(query, g)?));
    }
    if entries.is_empty() {
        return Err(Error::input("empty gallery"));
    }
    sort_entries(&mut entries);
    Ok(RankingResult { query: query.id, entries, tie_break: TIE_BREAK_RULE })
}

/// Rank a gallery against one query by visual score alone.
pub fn visual_rank<T: Real>(
    model: &VisualModel<T>,
    query: &Observation<T>,
    gallery: &[Observation<T>],
) -> Result<RankingResult<T>> {
    let mut entries = Vec::with_capacity(gallery.len());
    for g in gallery {
        if g.id == query.id {
            continue;
        }
        entries.push((g.id, model.visual_score(query, g)?));
    }
    if entries.is_empty() {
        return Err(Error::input("empty gallery"));
    }
    sort_entries(&mut entries);
    Ok(RankingResult { query: query.id, entries, tie_break: TIE_BREAK_RULE })
}

/// Rank every query index against the rest of the dataset by fusion
/// score, embedding each observation once.
pub fn rank_all_fusion<T: Real>(
    params: &FusionParams<T>,
    dataset: &Dataset<T>,
    queries: &[usize],
) -> Result<Vec<RankingResult<T>>> {
    let cache = Embeddings::compute(params.model(), dataset)?;
    let ranked: Vec<RankingResult<T>> = queries
        .par_iter()
        .map(|&qi| {
            let q = dataset.get(qi);
            let mut entries = Vec::with_capacity(dataset.len() - 1);
            for gi in 0..dataset.len() {
                if gi == qi {
                    continue;
                }
                let g = dataset.get(gi);
                let m1 = cache.cosine(qi, gi);
                let (score, _) = params.score_with_m1(m1, &pair_interval(q, g));
                entries.push((g.id, score));
            }
            sort_entries(&mut entries);
            RankingResult { query: q.id, entries, tie_break: TIE_BREAK_RULE }
        })
        .collect();
    Ok(ranked)
}

/// Rank every query index against the rest of the dataset by visual score.
pub fn rank_all_visual<T: Real>(
    model: &VisualModel<T>,
    dataset: &Dataset<T>,
    queries: &[usize],
) -> Result<Vec<RankingResult<T>>> {
    let cache = Embeddings::compute(model, dataset)?;
    let ranked: Vec<RankingResult<T>> = queries
        .par_iter()
        .map(|&qi| {
            let q = dataset.get(qi);
            let mut entries = Vec::with_capacity(dataset.len() - 1);
            for gi in 0..dataset.len() {
                if gi == qi {
                    continue;
                }
                entries.push((dataset.get(gi).id, cache.cosine(qi, gi)));
            }
            sort_entries(&mut entries);
            RankingResult { query: q.id, entries, tie_break: TIE_BREAK_RULE }
        })
        .collect();
    Ok(ranked)
}

/// Threshold whose strict exceedance selects about `frac_above` of the
/// given scores; used to match the fusion classifier's operating point to
/// the visual classifier's.
pub fn threshold_for_fraction<T: Real>(scores: &[T], frac_above: f64) -> Result<T> {
    if scores.is_empty() {
        return Err(Error::input("cannot derive a threshold from no scores"));
    }
    if !(0.0..=1.0).contains(&frac_above) {
        return Err(Error::domain("frac_above must lie in [0, 1]"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    let k = (frac_above * n as f64).round() as usize; // target count above
    if k == 0 {
        return Ok(sorted[n - 1]); // nothing strictly above the maximum
    }
    if k >= n {
        return Ok(sorted[0] - T::one());
    }
    Ok(sorted[n - 1 - k])
}

/// Fraction of pairs a model judges same on a pair sample; the companion
/// measurement for [`threshold_for_fraction`].
pub fn judged_same_fraction<T: Real>(
    model: &VisualModel<T>,
    dataset: &Dataset<T>,
    pairs: &[(usize, usize)],
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::input("empty pair sample"));
    }
    let cache = Embeddings::compute(model, dataset)?;
    let same = pairs
        .iter()
        .filter(|(i, j)| cache.judge(*i, *j, model.tau()).is_same())
        .count();
    Ok(same as f64 / pairs.len() as f64)
}

/// Convenience: evaluate fusion scores over an indexed pair sample with a
/// shared embedding cache.
pub fn fusion_scores_for_pairs<T: Real>(
    params: &FusionParams<T>,
    dataset: &Dataset<T>,
    pairs: &[(usize, usize)],
) -> Result<Vec<T>> {
    let cache = Embeddings::compute(params.model(), dataset)?;
    Ok(pairs
        .par_iter()
        .map(|&(i, j)| {
            let m1 = cache.cosine(i, j);
            let pi = pair_interval(dataset.get(i), dataset.get(j));
            params.score_with_m1(m1, &pi).0
        })
        .collect())
}
