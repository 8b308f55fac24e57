//! Spatio-temporal pattern estimation on an unlabeled dataset.
//!
//! The classifier judges observation pairs; judged-same pairs, judged-
//! different pairs, and all pairs are counted into three histograms over
//! (ordered camera pair, signed frame interval). The judged-same histogram
//! is a biased estimate of the true same-person transition pattern; the
//! bias is removable given the classifier's error rates `Ep`, `En`:
//!
//! ```text
//! p_true = ((1 - En) * p_pos - Ep * p_neg) / (1 - En - Ep)
//! ```
//!
//! which holds whenever `Ep + En < 1`.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PairInterval};
use crate::embed::{Embeddings, VisualModel};
use crate::error::{Error, Result};
use crate::scalar::{real, Real};
use crate::seed;

/// Interval binning: width, signed range, lookup window half-width, and
/// the lookup-time smoothing pseudocount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    /// Bin width in frames, >= 1.
    pub width: i64,
    /// Inclusive lower edge of the binned range.
    pub delta_min: i64,
    /// Exclusive upper edge of the binned range.
    pub delta_max: i64,
    /// Window half-width `t`: a lookup at `delta` sums bins touching
    /// `[delta - t, delta + t]`.
    #[serde(default)]
    pub window: i64,
    /// Laplace pseudocount applied per covered bin at lookup time only.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    1.0
}

impl BinSpec {
    pub fn new(width: i64, delta_min: i64, delta_max: i64, window: i64, epsilon: f64) -> Result<Self> {
        let spec = BinSpec { width, delta_min, delta_max, window, epsilon };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 1 {
            return Err(Error::config("bin width must be >= 1"));
        }
        if self.delta_min >= self.delta_max {
            return Err(Error::config("delta_min must be < delta_max"));
        }
        if self.window < 0 {
            return Err(Error::config("window must be >= 0"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::config("epsilon must be >= 0"));
        }
        Ok(())
    }

    /// Number of interior bins.
    pub fn num_bins(&self) -> usize {
        let span = (self.delta_max - self.delta_min) as u64;
        span.div_ceil(self.width as u64) as usize
    }

    /// Row slot for a signed interval: 0 is the underflow bin, then the
    /// interior bins, then the overflow bin. Monotone in `delta`.
    pub fn slot(&self, delta: i64) -> usize {
        if delta < self.delta_min {
            0
        } else if delta >= self.delta_max {
            self.num_bins() + 1
        } else {
            1 + ((delta - self.delta_min) / self.width) as usize
        }
    }

    /// Row length including both overflow slots.
    pub fn row_len(&self) -> usize {
        self.num_bins() + 2
    }

    /// Center of interior bin `b` (0-based), as f64 for plotting.
    pub fn center(&self, b: usize) -> f64 {
        self.delta_min as f64 + (b as f64 + 0.5) * self.width as f64
    }
}

/// Histogram over (ordered camera pair, binned signed interval).
///
/// `values` holds raw counts after counting, or probabilities after
/// normalization / correction; `total` is the matching normalizer, so
/// `values[k] / total` is always the joint probability of cell `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StHistogram<T> {
    num_cameras: usize,
    bins: BinSpec,
    values: Vec<T>,
    total: T,
}

impl<T: Real> StHistogram<T> {
    pub fn new_zero(num_cameras: usize, bins: BinSpec) -> Result<Self> {
        bins.validate()?;
        if num_cameras == 0 {
            return Err(Error::config("num_cameras must be positive"));
        }
        let len = num_cameras * num_cameras * bins.row_len();
        Ok(StHistogram { num_cameras, bins, values: vec![T::zero(); len], total: T::zero() })
    }

    /// Rebuild from parts (deserialization).
    pub fn from_parts(
        num_cameras: usize,
        bins: BinSpec,
        values: Vec<T>,
        total: T,
    ) -> Result<Self> {
        let mut h = Self::new_zero(num_cameras, bins)?;
        if values.len() != h.values.len() {
            return Err(Error::parse(format!(
                "histogram has {} cells, expected {}",
                values.len(),
                h.values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::parse("histogram cells must be finite and nonnegative"));
        }
        h.values = values;
        h.total = total;
        Ok(h)
    }

    pub fn num_cameras(&self) -> usize {
        self.num_cameras
    }

    pub fn bins(&self) -> &BinSpec {
        &self.bins
    }

    pub fn total(&self) -> T {
        self.total
    }

    /// Total number of cells across all camera pairs, overflow included.
    pub fn num_cells(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    fn row_start(&self, cam_i: usize, cam_j: usize) -> usize {
        (cam_i * self.num_cameras + cam_j) * self.bins.row_len()
    }

    pub fn row(&self, cam_i: usize, cam_j: usize) -> &[T] {
        let s = self.row_start(cam_i, cam_j);
        &self.values[s..s + self.bins.row_len()]
    }

    /// Add `weight` at (cam_i, cam_j, delta).
    pub fn add(&mut self, cam_i: usize, cam_j: usize, delta: i64, weight: T) {
        let idx = self.row_start(cam_i, cam_j) + self.bins.slot(delta);
        self.values[idx] = self.values[idx] + weight;
        self.total = self.total + weight;
    }

    pub fn increment(&mut self, pi: &PairInterval) {
        self.add(pi.cam_i, pi.cam_j, pi.delta, T::one());
    }

    fn merge(&mut self, other: &StHistogram<T>) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = *a + *b;
        }
        self.total = self.total + other.total;
    }

    /// Joint probability normalization: values sum to 1 over the whole
    /// (pair x bin) space.
    pub fn normalized(&self) -> Result<StHistogram<T>> {
        if self.total <= T::zero() {
            return Err(Error::domain("cannot normalize an empty histogram"));
        }
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v = *v / self.total;
        }
        out.total = T::one();
        Ok(out)
    }

    /// Windowed probability of (camera pair, interval):
    /// `(sum of bins touching [delta-t, delta+t] + eps * covered) /
    /// (total + eps * num_cells)`.
    pub fn lookup(&self, pi: &PairInterval) -> T {
        let t = self.bins.window;
        let lo = self.bins.slot(pi.delta.saturating_sub(t));
        let hi = self.bins.slot(pi.delta.saturating_add(t));
        let row = self.row(pi.cam_i, pi.cam_j);
        let mut acc = T::zero();
        for slot in lo..=hi {
            acc = acc + row[slot];
        }
        let eps = real::<T>(self.bins.epsilon);
        let covered = real::<T>((hi - lo + 1) as f64);
        let denom = self.total + eps * real::<T>(self.num_cells() as f64);
        if denom <= T::zero() {
            return T::zero();
        }
        (acc + eps * covered) / denom
    }

    /// Total-variation distance between the joint distributions.
    pub fn tv_distance(&self, other: &StHistogram<T>) -> Result<T> {
        self.check_compatible(other)?;
        let a = self.normalized()?;
        let b = other.normalized()?;
        let mut acc = T::zero();
        for (x, y) in a.values.iter().zip(&b.values) {
            acc = acc + (*x - *y).abs();
        }
        Ok(acc / real::<T>(2.0))
    }

    /// Per-pair conditional interval distribution, normalized within the
    /// row; `None` when the row carries no mass.
    pub fn conditional_row(&self, cam_i: usize, cam_j: usize) -> Option<Vec<T>> {
        let row = self.row(cam_i, cam_j);
        let sum: T = row.iter().copied().sum();
        if sum <= T::zero() {
            return None;
        }
        Some(row.iter().map(|v| *v / sum).collect())
    }

    /// Total-variation distance between per-pair conditional distributions;
    /// `None` when either side has no mass on this pair.
    pub fn tv_conditional(&self, other: &StHistogram<T>, cam_i: usize, cam_j: usize) -> Option<T> {
        let a = self.conditional_row(cam_i, cam_j)?;
        let b = other.conditional_row(cam_i, cam_j)?;
        let mut acc = T::zero();
        for (x, y) in a.iter().zip(&b) {
            acc = acc + (*x - *y).abs();
        }
        Some(acc / real::<T>(2.0))
    }

    pub fn check_compatible(&self, other: &StHistogram<T>) -> Result<()> {
        if self.num_cameras != other.num_cameras || self.bins != other.bins {
            return Err(Error::input(
                "histograms have different camera counts or bin specifications",
            ));
        }
        Ok(())
    }
}

/// The three histograms produced by one counting pass.
#[derive(Debug, Clone)]
pub struct PatternCounts<T> {
    /// Judged-same pairs.
    pub pos: StHistogram<T>,
    /// Judged-different pairs.
    pub neg: StHistogram<T>,
    /// Every sampled pair regardless of judgement.
    pub marginal: StHistogram<T>,
}

/// Map a linear index in `0..n*(n-1)` to an ordered pair `(i, j)`, `i != j`.
#[inline]
fn pair_of(k: u64, n: u64) -> (usize, usize) {
    let i = k / (n - 1);
    let r = k % (n - 1);
    let j = if r < i { r } else { r + 1 };
    (i as usize, j as usize)
}

/// Materialized ordered-pair sample: every pair `(i, j), i != j` when the
/// budget covers them all, otherwise a seeded uniform subsample without
/// replacement. For measurement harnesses on small datasets; the counting
/// pass itself streams the exhaustive case instead of materializing it.
pub fn sample_ordered_pairs(n: usize, budget: u64, seed: u64) -> Vec<(usize, usize)> {
    let total = (n as u64) * (n as u64).saturating_sub(1);
    match sampled_pairs(total, budget, seed) {
        Some(ks) => ks.into_iter().map(|k| pair_of(k, n as u64)).collect(),
        None => (0..total).map(|k| pair_of(k, n as u64)).collect(),
    }
}

/// Uniform sample of `budget` distinct values from `0..total` (Floyd's
/// algorithm), returned sorted. Deterministic under the rng.
fn sample_indices(total: u64, budget: u64, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<u64> {
    let mut chosen: HashSet<u64> = HashSet::with_capacity(budget as usize);
    for j in (total - budget)..total {
        let t = rng.gen_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    let mut v: Vec<u64> = chosen.into_iter().collect();
    v.sort_unstable();
    v
}

/// Enumerate the ordered pairs to count: everything when the budget covers
/// the full pair space, otherwise a seeded uniform sample without
/// replacement.
fn sampled_pairs(total: u64, budget: u64, seed: u64) -> Option<Vec<u64>> {
    if budget >= total {
        return None; // exhaustive
    }
    let mut rng = seed::rng(seed, "pair-subsample", 0);
    if budget <= total / 2 {
        Some(sample_indices(total, budget, &mut rng))
    } else {
        // Sample the smaller complement and keep everything else.
        let reject: HashSet<u64> =
            sample_indices(total, total - budget, &mut rng).into_iter().collect();
        Some((0..total).filter(|k| !reject.contains(k)).collect())
    }
}

/// Classify observation pairs and count them into (judged-same,
/// judged-different, all-sampled) histograms.
///
/// Exhaustive over all `n * (n-1)` ordered pairs when `pair_budget` covers
/// them, otherwise a seeded uniform subsample without replacement. Never
/// reads labels.
pub fn count_patterns<T: Real>(
    model: &VisualModel<T>,
    dataset: &Dataset<T>,
    bins: &BinSpec,
    pair_budget: u64,
    seed: u64,
) -> Result<PatternCounts<T>> {
    if dataset.is_empty() {
        return Err(Error::input("cannot learn patterns from an empty dataset"));
    }
    let n = dataset.len() as u64;
    let total = dataset.ordered_pair_count();
    let cams = dataset.num_cameras();
    let cache = Embeddings::compute(model, dataset)?;
    let tau = model.tau();

    let tally = |pairs: &mut dyn Iterator<Item = (usize, usize)>| -> Result<PatternCounts<T>> {
        let mut pos = StHistogram::new_zero(cams, *bins)?;
        let mut neg = StHistogram::new_zero(cams, *bins)?;
        let mut marginal = StHistogram::new_zero(cams, *bins)?;
        for (i, j) in pairs {
            let pi = crate::data::pair_interval(dataset.get(i), dataset.get(j));
            if cache.judge(i, j, tau).is_same() {
                pos.increment(&pi);
            } else {
                neg.increment(&pi);
            }
            marginal.increment(&pi);
        }
        Ok(PatternCounts { pos, neg, marginal })
    };

    let partials: Vec<Result<PatternCounts<T>>> = match sampled_pairs(total, pair_budget, seed) {
        Some(indices) => indices
            .par_chunks(1 << 16)
            .map(|ks| tally(&mut ks.iter().map(|&k| pair_of(k, n))))
            .collect(),
        None => {
            // Exhaustive: stream row ranges instead of materializing the
            // pair space.
            let rows: Vec<usize> = (0..dataset.len()).collect();
            rows.par_chunks(64)
                .map(|is| {
                    let mut pairs = is.iter().flat_map(|&i| {
                        (0..dataset.len()).filter(move |&j| j != i).map(move |j| (i, j))
                    });
                    tally(&mut pairs)
                })
                .collect()
        }
    };

    let mut acc = PatternCounts {
        pos: StHistogram::new_zero(cams, *bins)?,
        neg: StHistogram::new_zero(cams, *bins)?,
        marginal: StHistogram::new_zero(cams, *bins)?,
    };
    for part in partials {
        let part = part?;
        acc.pos.merge(&part.pos);
        acc.neg.merge(&part.neg);
        acc.marginal.merge(&part.marginal);
    }
    Ok(acc)
}

/// Remove classifier-error bias from the judged-same pattern:
/// `((1 - En) * p_pos - Ep * p_neg) / (1 - En - Ep)` per cell, with
/// negative cells (sampling noise) floored at zero and the result
/// renormalized. Requires `Ep + En < 1`.
pub fn correct_pattern<T: Real>(
    pos: &StHistogram<T>,
    neg: &StHistogram<T>,
    ep: T,
    en: T,
) -> Result<StHistogram<T>> {
    pos.check_compatible(neg)?;
    if ep < T::zero() || en < T::zero() {
        return Err(Error::domain("error rates must be nonnegative"));
    }
    if ep + en >= T::one() {
        return Err(Error::domain(format!(
            "correction needs Ep + En < 1, got {} + {}",
            ep, en
        )));
    }
    let p_pos = pos.normalized()?;
    // An empty judged-different histogram acts as a zero distribution; it
    // only matters when Ep > 0 actually weighs it.
    let p_neg = if neg.total() > T::zero() { Some(neg.normalized()?) } else { None };
    if p_neg.is_none() && ep > T::zero() {
        return Err(Error::domain(
            "Ep > 0 requires a nonempty judged-different histogram",
        ));
    }
    let denom = T::one() - en - ep;
    let mut out = p_pos.clone();
    let mut sum = T::zero();
    for idx in 0..out.values.len() {
        let pn = p_neg.as_ref().map_or(T::zero(), |h| h.values[idx]);
        let v = ((T::one() - en) * p_pos.values[idx] - ep * pn) / denom;
        let v = v.max(T::zero());
        out.values[idx] = v;
        sum = sum + v;
    }
    // Flooring can only raise the pre-floor sum of exactly 1, so sum > 0.
    for v in out.values.iter_mut() {
        *v = *v / sum;
    }
    out.total = T::one();
    Ok(out)
}
