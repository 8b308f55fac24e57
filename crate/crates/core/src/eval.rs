//! Ground-truth measurement: CMC curves, judgement-conditional error
//! rates, and the empirical harness for the fusion error bound.
//!
//! The error rates are conditioned on the judgement, not the truth:
//!
//! ```text
//! Ep = Pr(truth-different | judged-same)
//! En = Pr(truth-same     | judged-different)
//! ```
//!
//! The bound under test says that whenever `Ep + En < 1` and
//! `alpha + beta < 1`, the fusion classifier's rates satisfy
//! `Ep' + En' < Ep + En`. It holds at the distribution level; the harness
//! measures both sums on a shared pair sample and reports how often and by
//! what margin the inequality comes out on finite data.

use std::collections::HashMap;
use std::sync::Arc;

use crate::data::{pair_interval, Dataset, ObsId};
use crate::embed::{Embeddings, Judgement, VisualModel};
use crate::error::{Error, Result};
use crate::fusion::{
    rank_all_fusion, rank_all_visual, threshold_for_fraction, FusionParams, RankingResult,
};
use crate::scalar::{real, to_f64, Real};
use crate::stpattern::{sample_ordered_pairs, BinSpec, PatternCounts, StHistogram};

/// Cumulative matching characteristic: `accuracy[k-1]` is the fraction of
/// counted queries whose first true match ranks within the top `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmcCurve<T> {
    pub accuracy: Vec<T>,
    /// Queries with at least one true match in their gallery.
    pub queries: usize,
    /// Queries without any true match, excluded from the curve.
    pub excluded: usize,
}

impl<T: Real> CmcCurve<T> {
    pub fn rank1(&self) -> T {
        self.accuracy[0]
    }
}

/// Rank-k accuracies over a set of per-query rankings. Labels must be
/// readable on the dataset split; queries with no true match in their
/// gallery are excluded (with a warning) and counted separately.
pub fn cmc<T: Real>(
    rankings: &[RankingResult<T>],
    dataset: &Dataset<T>,
    k_max: usize,
) -> Result<CmcCurve<T>> {
    if k_max == 0 {
        return Err(Error::input("k_max must be >= 1"));
    }
    if rankings.is_empty() {
        return Err(Error::input("no rankings to evaluate"));
    }
    let index: HashMap<ObsId, usize> = dataset
        .observations()
        .iter()
        .enumerate()
        .map(|(i, o)| (o.id, i))
        .collect();
    let label_of = |id: ObsId| -> Result<_> {
        let idx = index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::input(format!("ranking references unknown observation {id}")))?;
        dataset.label(idx)?.ok_or_else(|| {
            Error::input(format!("observation {id} has no label; evaluation needs labels"))
        })
    };

    let mut hits = vec![0usize; k_max];
    let mut counted = 0usize;
    let mut excluded = 0usize;
    for ranking in rankings {
        let query_label = label_of(ranking.query)?;
        let mut first_match = None;
        for (rank0, (id, _)) in ranking.entries.iter().enumerate() {
            if label_of(*id)? == query_label {
                first_match = Some(rank0 + 1);
                break;
            }
        }
        match first_match {
            None => {
                excluded += 1;
                log::warn!("query {} has no true match in its gallery", ranking.query);
            }
            Some(rank) => {
                counted += 1;
                if rank <= k_max {
                    hits[rank - 1] += 1;
                }
            }
        }
    }
    if counted == 0 {
        return Err(Error::input("no query has a true match in its gallery"));
    }
    let mut accuracy = Vec::with_capacity(k_max);
    let mut cum = 0usize;
    for h in &hits {
        cum += h;
        accuracy.push(real::<T>(cum as f64 / counted as f64));
    }
    Ok(CmcCurve { accuracy, queries: counted, excluded })
}

/// Judgement-conditional error rates over a labeled pair sample. A rate
/// with an empty denominator is reported as absent, never as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRates<T> {
    pub ep: Option<T>,
    pub en: Option<T>,
    pub judged_same: usize,
    pub judged_different: usize,
}

impl<T: Real> ErrorRates<T> {
    /// `Ep + En` when both rates are defined.
    pub fn sum(&self) -> Option<T> {
        match (self.ep, self.en) {
            (Some(p), Some(n)) => Some(p + n),
            _ => None,
        }
    }
}

/// Measure `Ep`/`En` of a judgement function over indexed pairs.
pub fn error_rates<T: Real, J>(
    dataset: &Dataset<T>,
    pairs: &[(usize, usize)],
    judge: J,
) -> Result<ErrorRates<T>>
where
    J: Fn(usize, usize) -> Judgement,
{
    if pairs.is_empty() {
        return Err(Error::input("empty pair sample"));
    }
    let mut judged_same = 0usize;
    let mut judged_different = 0usize;
    let mut false_positive = 0usize;
    let mut false_negative = 0usize;
    for &(i, j) in pairs {
        let truth_same = dataset.label(i)? == dataset.label(j)?;
        match judge(i, j) {
            Judgement::Same => {
                judged_same += 1;
                if !truth_same {
                    false_positive += 1;
                }
            }
            Judgement::Different => {
                judged_different += 1;
                if truth_same {
                    false_negative += 1;
                }
            }
        }
    }
    let rate = |num: usize, den: usize| {
        (den > 0).then(|| real::<T>(num as f64 / den as f64))
    };
    Ok(ErrorRates {
        ep: rate(false_positive, judged_same),
        en: rate(false_negative, judged_different),
        judged_same,
        judged_different,
    })
}

/// Rank-1 accuracy of the visual model over every query in a labeled
/// dataset.
pub fn rank1_visual<T: Real>(model: &VisualModel<T>, dataset: &Dataset<T>) -> Result<f64> {
    let queries: Vec<usize> = (0..dataset.len()).collect();
    let rankings = rank_all_visual(model, dataset, &queries)?;
    Ok(to_f64(cmc(&rankings, dataset, 1)?.rank1()))
}

/// Rank-1 accuracy of the fusion scorer over every query in a labeled
/// dataset.
pub fn rank1_fusion<T: Real>(params: &FusionParams<T>, dataset: &Dataset<T>) -> Result<f64> {
    let queries: Vec<usize> = (0..dataset.len()).collect();
    let rankings = rank_all_fusion(params, dataset, &queries)?;
    Ok(to_f64(cmc(&rankings, dataset, 1)?.rank1()))
}

/// How the fusion threshold of a grid point is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauF {
    /// Use this score threshold as given.
    Absolute(f64),
    /// Threshold at which this fraction of the sampled fusion scores lies
    /// strictly above.
    FractionAbove(f64),
    /// Match the visual classifier's operating point: the fraction of
    /// pairs it judges same at the grid point's `tau`.
    MatchedToVisual,
}

/// One grid point of the fusion-error-bound harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub tau_f: TauF,
}

/// Measured outcome at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Row {
    pub point: GridPoint,
    /// Resolved fusion threshold actually applied.
    pub tau_f_value: f64,
    pub ep: Option<f64>,
    pub en: Option<f64>,
    pub ep_fused: Option<f64>,
    pub en_fused: Option<f64>,
    /// All four rates defined and `Ep + En < 1`.
    pub precondition_ok: bool,
    /// `Ep' + En' < Ep + En`.
    pub holds: bool,
    /// `(Ep + En) - (Ep' + En')`; positive when fusion is better.
    pub margin: f64,
}

/// Aggregate harness report.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Report {
    pub rows: Vec<Theorem1Row>,
    /// Rows passing the precondition.
    pub evaluated: usize,
    pub holds_count: usize,
    /// `holds_count / evaluated`.
    pub pass_fraction: f64,
    pub mean_margin: f64,
    pub worst_margin: f64,
}

/// Measure the visual and fused error sums over a shared seeded pair
/// sample for every grid point.
pub fn theorem1_harness<T: Real>(
    dataset: &Dataset<T>,
    model: &VisualModel<T>,
    bins: &BinSpec,
    grid: &[GridPoint],
    pair_budget: u64,
    seed: u64,
) -> Result<Theorem1Report> {
    if grid.is_empty() {
        return Err(Error::input("empty grid"));
    }
    if dataset.len() < 2 {
        return Err(Error::input("need at least two observations"));
    }
    let pairs = sample_ordered_pairs(dataset.len(), pair_budget, seed);
    let cache = Embeddings::compute(model, dataset)?;
    let m1: Vec<T> = pairs.iter().map(|&(i, j)| cache.cosine(i, j)).collect();
    let truth_same: Vec<bool> = pairs
        .iter()
        .map(|&(i, j)| Ok(dataset.label(i)? == dataset.label(j)?))
        .collect::<Result<_>>()?;
    let intervals: Vec<_> = pairs
        .iter()
        .map(|&(i, j)| pair_interval(dataset.get(i), dataset.get(j)))
        .collect();

    // Caches keyed by parameter bit patterns; rows stay in grid order.
    struct TauState<T> {
        judged: Vec<bool>,
        ep: Option<f64>,
        en: Option<f64>,
        pos: Arc<StHistogram<T>>,
        neg: Arc<StHistogram<T>>,
        marginal: Arc<StHistogram<T>>,
    }
    let mut tau_states: HashMap<u64, TauState<T>> = HashMap::new();
    let mut score_cache: HashMap<(u64, u64, u64), Arc<Vec<f64>>> = HashMap::new();
    let model_arc = Arc::new(model.clone());

    let mut rows = Vec::with_capacity(grid.len());
    for point in grid {
        let tau_key = point.tau.to_bits();
        if !tau_states.contains_key(&tau_key) {
            let tau_t = real::<T>(point.tau);
            let judged: Vec<bool> = m1.iter().map(|s| *s > tau_t).collect();
            let (ep, en) = conditional_rates(&truth_same, &judged);
            let mut pos = StHistogram::<T>::new_zero(dataset.num_cameras(), *bins)?;
            let mut neg = StHistogram::<T>::new_zero(dataset.num_cameras(), *bins)?;
            let mut marginal = StHistogram::<T>::new_zero(dataset.num_cameras(), *bins)?;
            for (pi, same) in intervals.iter().zip(&judged) {
                if *same {
                    pos.increment(pi);
                } else {
                    neg.increment(pi);
                }
                marginal.increment(pi);
            }
            tau_states.insert(
                tau_key,
                TauState {
                    judged,
                    ep,
                    en,
                    pos: Arc::new(pos),
                    neg: Arc::new(neg),
                    marginal: Arc::new(marginal),
                },
            );
        }
        let state = &tau_states[&tau_key];

        let score_key = (point.tau.to_bits(), point.alpha.to_bits(), point.beta.to_bits());
        if !score_cache.contains_key(&score_key) {
            let params = FusionParams::new(
                real::<T>(point.alpha),
                real::<T>(point.beta),
                model_arc.clone(),
                state.pos.clone(),
                state.neg.clone(),
                state.marginal.clone(),
            )?;
            let scores: Vec<f64> = m1
                .iter()
                .zip(&intervals)
                .map(|(s, pi)| to_f64(params.score_with_m1(*s, pi).0))
                .collect();
            score_cache.insert(score_key, Arc::new(scores));
        }
        let scores = score_cache[&score_key].clone();

        let tau_f_value = match point.tau_f {
            TauF::Absolute(v) => v,
            TauF::FractionAbove(frac) => threshold_for_fraction(&scores, frac)?,
            TauF::MatchedToVisual => {
                let frac =
                    state.judged.iter().filter(|b| **b).count() as f64 / pairs.len() as f64;
                threshold_for_fraction(&scores, frac)?
            }
        };
        let judged_f: Vec<bool> = scores.iter().map(|s| *s > tau_f_value).collect();
        let (ep_fused, en_fused) = conditional_rates(&truth_same, &judged_f);

        let sums = match (state.ep, state.en, ep_fused, en_fused) {
            (Some(ep), Some(en), Some(epf), Some(enf)) => Some((ep + en, epf + enf)),
            _ => None,
        };
        let precondition_ok = matches!(sums, Some((c, _)) if c < 1.0);
        let (holds, margin) = match sums {
            Some((c, f)) => (f < c, c - f),
            None => (false, f64::NAN),
        };
        rows.push(Theorem1Row {
            point: *point,
            tau_f_value,
            ep: state.ep,
            en: state.en,
            ep_fused,
            en_fused,
            precondition_ok,
            holds: precondition_ok && holds,
            margin,
        });
    }

    let evaluated = rows.iter().filter(|r| r.precondition_ok).count();
    let holds_count = rows.iter().filter(|r| r.precondition_ok && r.holds).count();
    let margins: Vec<f64> = rows
        .iter()
        .filter(|r| r.precondition_ok)
        .map(|r| r.margin)
        .collect();
    let mean_margin = if margins.is_empty() {
        f64::NAN
    } else {
        margins.iter().sum::<f64>() / margins.len() as f64
    };
    let worst_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Theorem1Report {
        rows,
        evaluated,
        holds_count,
        pass_fraction: if evaluated > 0 {
            holds_count as f64 / evaluated as f64
        } else {
            0.0
        },
        mean_margin,
        worst_margin: if margins.is_empty() { f64::NAN } else { worst_margin },
    })
}

fn conditional_rates(truth_same: &[bool], judged_same: &[bool]) -> (Option<f64>, Option<f64>) {
    let mut same = 0usize;
    let mut diff = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    for (t, j) in truth_same.iter().zip(judged_same) {
        if *j {
            same += 1;
            if !*t {
                fp += 1;
            }
        } else {
            diff += 1;
            if *t {
                fneg += 1;
            }
        }
    }
    (
        (same > 0).then(|| fp as f64 / same as f64),
        (diff > 0).then(|| fneg as f64 / diff as f64),
    )
}

/// One cell of an `(alpha, beta)` sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub alpha: f64,
    pub beta: f64,
    pub rank1: f64,
}

/// Rank-1 accuracy per `(alpha, beta)` combination with `alpha + beta < 1`,
/// over a labeled dataset, using histograms learned elsewhere.
pub fn sweep_alpha_beta<T: Real>(
    model: &VisualModel<T>,
    dataset: &Dataset<T>,
    counts: &PatternCounts<T>,
    alphas: &[f64],
    betas: &[f64],
) -> Result<Vec<SweepCell>> {
    let model = Arc::new(model.clone());
    let pos = Arc::new(counts.pos.clone());
    let neg = Arc::new(counts.neg.clone());
    let marginal = Arc::new(counts.marginal.clone());
    let mut cells = Vec::new();
    for &alpha in alphas {
        for &beta in betas {
            if alpha + beta >= 1.0 {
                continue;
            }
            let params = FusionParams::new(
                real::<T>(alpha),
                real::<T>(beta),
                model.clone(),
                pos.clone(),
                neg.clone(),
                marginal.clone(),
            )?;
            cells.push(SweepCell { alpha, beta, rank1: rank1_fusion(&params, dataset)? });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Observation, PersonId, Split};
    use crate::embed::EmbedArch;
    use crate::fusion::TIE_BREAK_RULE;
    use proptest::prelude::*;

    fn eval_dataset(labels: &[u64]) -> Dataset<f64> {
        let obs = labels
            .iter()
            .enumerate()
            .map(|(k, _)| Observation {
                id: ObsId(k as u64),
                camera: 0,
                frame: k as i64,
                features: vec![1.0, 0.0],
            })
            .collect();
        let lab = labels.iter().map(|l| Some(PersonId(*l))).collect();
        Dataset::new(obs, lab, 1, Split::TargetEval).unwrap()
    }

    fn ranking_of(query: u64, ids: &[u64]) -> RankingResult<f64> {
        RankingResult {
            query: ObsId(query),
            entries: ids
                .iter()
                .enumerate()
                .map(|(r, id)| (ObsId(*id), 1.0 - r as f64 * 0.1))
                .collect(),
            tie_break: TIE_BREAK_RULE,
        }
    }

    #[test]
    fn cmc_all_top1_hits() {
        let ds = eval_dataset(&[7, 7, 8, 8]);
        let rankings = vec![ranking_of(0, &[1, 2, 3]), ranking_of(2, &[3, 0, 1])];
        let curve = cmc(&rankings, &ds, 3).unwrap();
        assert_eq!(curve.accuracy, vec![1.0, 1.0, 1.0]);
        assert_eq!(curve.queries, 2);
        assert_eq!(curve.excluded, 0);
    }

    #[test]
    fn cmc_match_at_rank_three() {
        let ds = eval_dataset(&[7, 9, 8, 7]);
        let rankings = vec![ranking_of(0, &[1, 2, 3])];
        let curve = cmc(&rankings, &ds, 4).unwrap();
        assert_eq!(curve.accuracy, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn cmc_excludes_matchless_queries() {
        let ds = eval_dataset(&[7, 8, 9, 7]);
        let rankings = vec![ranking_of(1, &[0, 2, 3]), ranking_of(0, &[1, 2, 3])];
        let curve = cmc(&rankings, &ds, 2).unwrap();
        assert_eq!(curve.queries, 1);
        assert_eq!(curve.excluded, 1);
        assert_eq!(curve.accuracy, vec![0.0, 1.0]);
    }

    #[test]
    fn cmc_hand_counted_five_rankings() {
        // Brute-force oracle: first-match ranks 1, 2, 1, 3, 2 over five
        // queries -> rank-1 = 2/5, rank-2 = 4/5, rank-3 = 5/5.
        let ds = eval_dataset(&[1, 1, 2, 2, 3, 3, 4, 4, 5, 5]);
        let rankings = vec![
            ranking_of(0, &[1, 2, 4]),    // match at 1
            ranking_of(2, &[0, 3, 5]),    // match at 2
            ranking_of(4, &[5, 1, 9]),    // match at 1
            ranking_of(6, &[0, 2, 7]),    // match at 3
            ranking_of(8, &[1, 9, 3]),    // match at 2
        ];
        let curve = cmc(&rankings, &ds, 3).unwrap();
        assert_eq!(curve.accuracy, vec![0.4, 0.8, 1.0]);
    }

    #[test]
    fn cmc_requires_readable_labels() {
        let ds = eval_dataset(&[1, 1]).with_split(Split::TargetUnlabeled);
        let rankings = vec![ranking_of(0, &[1])];
        assert!(matches!(cmc(&rankings, &ds, 1), Err(Error::LabelAccess(_))));
    }

    #[test]
    fn error_rates_perfect_and_inverted() {
        let ds = eval_dataset(&[1, 1, 2, 2]);
        let pairs: Vec<(usize, usize)> =
            (0..4).flat_map(|i| (0..4).filter(move |j| *j != i).map(move |j| (i, j))).collect();
        let perfect = error_rates(&ds, &pairs, |i, j| {
            if (i < 2) == (j < 2) { Judgement::Same } else { Judgement::Different }
        })
        .unwrap();
        assert_eq!(perfect.ep, Some(0.0));
        assert_eq!(perfect.en, Some(0.0));

        let inverted = error_rates(&ds, &pairs, |i, j| {
            if (i < 2) == (j < 2) { Judgement::Different } else { Judgement::Same }
        })
        .unwrap();
        assert_eq!(inverted.ep, Some(1.0));
        assert_eq!(inverted.en, Some(1.0));
    }

    #[test]
    fn error_rates_hand_counted() {
        // 10 pairs, fixed judgements; Ep = 2/6, En = 1/4 by hand.
        let ds = eval_dataset(&[1, 1, 1, 2, 2, 2]);
        let pairs = vec![
            (0, 1), // same, judged same        TP
            (0, 2), // same, judged same        TP
            (1, 2), // same, judged different   FN
            (3, 4), // same, judged same        TP
            (3, 5), // same, judged same        TP
            (0, 3), // diff, judged same        FP
            (0, 4), // diff, judged same        FP
            (1, 4), // diff, judged different   TN
            (2, 5), // diff, judged different   TN
            (1, 5), // diff, judged different   TN
        ];
        let judged_same: std::collections::HashSet<(usize, usize)> =
            [(0, 1), (0, 2), (3, 4), (3, 5), (0, 3), (0, 4)].into_iter().collect();
        let rates =
            error_rates(&ds, &pairs, |i, j| {
                if judged_same.contains(&(i, j)) { Judgement::Same } else { Judgement::Different }
            })
            .unwrap();
        assert_eq!(rates.judged_same, 6);
        assert_eq!(rates.judged_different, 4);
        assert!((rates.ep.unwrap() - 2.0 / 6.0).abs() < 1e-12);
        assert!((rates.en.unwrap() - 1.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn error_rates_absent_on_empty_denominator() {
        let ds = eval_dataset(&[1, 1]);
        let rates = error_rates(&ds, &[(0, 1)], |_, _| Judgement::Same).unwrap();
        assert!(rates.ep.is_some());
        assert!(rates.en.is_none());
    }

    #[test]
    fn harness_zero_noise_bound_holds() {
        // Separable world: the visual classifier is nearly perfect, the
        // transit pattern is sharp; the bound must hold wherever the
        // precondition does.
        use crate::sim::{simulate, IntervalDist, SimConfig};
        let cfg = SimConfig::complete(
            2,
            60,
            2,
            16,
            0.0,
            |_, _| IntervalDist::Gaussian { mean: 60.0, sigma: 8.0 },
            5,
        );
        let mut cfg = cfg;
        cfg.start_window = 5_000;
        let ds: Dataset<f64> = simulate(&cfg, Split::TargetEval).unwrap();
        let model = VisualModel::zeroed(EmbedArch::Identity, 16, 0, 16, 2, 0.8).unwrap();
        let bins = BinSpec::new(20, -400, 400, 0, 1.0).unwrap();
        let grid: Vec<GridPoint> = [0.0, 0.25]
            .iter()
            .flat_map(|&alpha| {
                [0.0, 0.25].iter().map(move |&beta| GridPoint {
                    alpha,
                    beta,
                    tau: 0.8,
                    tau_f: TauF::MatchedToVisual,
                })
            })
            .collect();
        let report = theorem1_harness(&ds, &model, &bins, &grid, 40_000, 3).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert!(report.evaluated > 0);
        assert_eq!(report.holds_count, report.evaluated);
        assert!(report.mean_margin > 0.0);
    }

    #[test]
    fn harness_is_deterministic() {
        use crate::sim::{simulate, IntervalDist, SimConfig};
        let mut cfg = SimConfig::complete(
            2,
            30,
            1,
            8,
            0.5,
            |_, _| IntervalDist::Uniform { lo: 10, hi: 50 },
            9,
        );
        cfg.start_window = 500;
        let ds: Dataset<f64> = simulate(&cfg, Split::TargetEval).unwrap();
        let model = VisualModel::zeroed(EmbedArch::Identity, 8, 0, 8, 2, 0.5).unwrap();
        let bins = BinSpec::new(25, -300, 300, 0, 1.0).unwrap();
        let grid = vec![GridPoint { alpha: 0.0, beta: 0.0, tau: 0.5, tau_f: TauF::MatchedToVisual }];
        let a = theorem1_harness(&ds, &model, &bins, &grid, 2_000, 1).unwrap();
        let b = theorem1_harness(&ds, &model, &bins, &grid, 2_000, 1).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn error_rates_permutation_invariant(perm_seed in 0u64..100) {
            let ds = eval_dataset(&[1, 1, 1, 2, 2, 3]);
            let mut pairs: Vec<(usize, usize)> = (0..6)
                .flat_map(|i| (0..6).filter(move |j| *j != i).map(move |j| (i, j)))
                .collect();
            let judge = |i: usize, j: usize| {
                if (i + j) % 3 == 0 { Judgement::Same } else { Judgement::Different }
            };
            let base = error_rates(&ds, &pairs, judge).unwrap();
            let mut rng = crate::seed::rng(perm_seed, "perm", 0);
            for i in (1..pairs.len()).rev() {
                let j = rand::Rng::gen_range(&mut rng, 0..=i);
                pairs.swap(i, j);
            }
            let shuffled = error_rates(&ds, &pairs, judge).unwrap();
            prop_assert_eq!(base, shuffled);
        }

        #[test]
        fn cmc_monotone_nondecreasing(ranks in proptest::collection::vec(1usize..8, 1..12)) {
            // Everyone shares one label, so each query's first match sits
            // exactly where the gallery permutation puts any item: rank 1.
            // To place matches deeper, pair a two-label dataset with
            // galleries that delay the matching label until `r`.
            let n = 9usize;
            let mut rankings = Vec::new();
            for (q, r) in ranks.iter().enumerate() {
                // Gallery ids 1..9: ids < 100 share the query's label only
                // at position r - 1 (id 0 is the lone same-label item).
                let mut ids: Vec<u64> = (1..n as u64).collect();
                ids[r - 1] = 0;
                rankings.push(ranking_of(q as u64 + 100, &ids));
            }
            // Dataset: ids 0..9 and 100..112; label 1 for id 0 and all
            // queries, label 2 for the rest of the gallery.
            let mut obs = Vec::new();
            let mut labels = Vec::new();
            for id in 0..n as u64 {
                obs.push(Observation {
                    id: ObsId(id), camera: 0, frame: id as i64, features: vec![1.0],
                });
                labels.push(Some(PersonId(if id == 0 { 1 } else { 2 })));
            }
            for q in 0..rankings.len() as u64 {
                obs.push(Observation {
                    id: ObsId(q + 100), camera: 0, frame: 50 + q as i64, features: vec![1.0],
                });
                labels.push(Some(PersonId(1)));
            }
            let ds = Dataset::new(obs, labels, 1, Split::TargetEval).unwrap();
            let curve = cmc(&rankings, &ds, n - 1).unwrap();
            for w in curve.accuracy.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            prop_assert!((*curve.accuracy.last().unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
