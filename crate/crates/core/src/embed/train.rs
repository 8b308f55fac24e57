//! Supervised training of the visual model on a labeled source dataset.
//!
//! Per pair the loss is the sum of a verification cross entropy on the
//! head score `q_hat` and an identification cross entropy on both
//! endpoints' class predictions. Optimization is plain mini-batch gradient
//! descent with a fixed learning rate; pairs are drawn balanced, one
//! same-identity pair per different-identity pair.

use std::collections::BTreeMap;

use rand::Rng;

use crate::data::{Dataset, PersonId};
use crate::error::{Error, Result};
use crate::scalar::{logistic, real, to_f64, Real};
use crate::seed;

use super::VisualModel;

/// Hyperparameters for supervised training.
#[derive(Debug, Clone)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub pairs_per_epoch: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            learning_rate: 0.05,
            epochs: 20,
            pairs_per_epoch: 2048,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// One labeled training pair: dataset indices, truth flag, class indices.
#[derive(Debug, Clone, Copy)]
pub struct SupPair {
    pub i: usize,
    pub j: usize,
    pub same: bool,
    pub class_i: usize,
    pub class_j: usize,
}

/// Per-epoch record of the full-set loss, evaluated on a pair sample that
/// is fixed before the first step.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// `loss_history[0]` is the pre-training loss; one entry per epoch after.
    pub loss_history: Vec<f64>,
    pub num_classes: usize,
}

/// Map person ids to contiguous class indices, sorted for determinism.
fn class_map<T: Real>(dataset: &Dataset<T>) -> Result<BTreeMap<PersonId, usize>> {
    let mut ids = BTreeMap::new();
    for idx in 0..dataset.len() {
        if let Some(pid) = dataset.label(idx)? {
            let next = ids.len();
            ids.entry(pid).or_insert(next);
        } else {
            return Err(Error::input(format!(
                "observation {} has no label; supervised training needs labels",
                dataset.get(idx).id
            )));
        }
    }
    Ok(ids)
}

/// Draw `count` pairs, alternating same-identity and different-identity.
pub fn balanced_pairs<T: Real>(
    dataset: &Dataset<T>,
    count: usize,
    seed: u64,
) -> Result<Vec<SupPair>> {
    let classes = class_map(dataset)?;
    if classes.len() < 2 {
        return Err(Error::input(format!(
            "training needs at least 2 identities, found {}",
            classes.len()
        )));
    }
    let mut by_person: BTreeMap<PersonId, Vec<usize>> = BTreeMap::new();
    for idx in 0..dataset.len() {
        let pid = dataset.label(idx)?.expect("checked by class_map");
        by_person.entry(pid).or_default().push(idx);
    }
    let multi: Vec<&Vec<usize>> = by_person.values().filter(|v| v.len() >= 2).collect();
    if multi.is_empty() {
        return Err(Error::input(
            "no identity has two sightings; cannot form same-identity pairs",
        ));
    }
    let persons: Vec<(&PersonId, &Vec<usize>)> = by_person.iter().collect();
    let mut rng = seed::rng(seed, "pair-sampling", 0);
    let mut out = Vec::with_capacity(count);
    for n in 0..count {
        if n % 2 == 0 {
            let group = multi[rng.gen_range(0..multi.len())];
            let a = rng.gen_range(0..group.len());
            let mut b = rng.gen_range(0..group.len() - 1);
            if b >= a {
                b += 1;
            }
            let (i, j) = (group[a], group[b]);
            let c = classes[&dataset.label(i)?.unwrap()];
            out.push(SupPair { i, j, same: true, class_i: c, class_j: c });
        } else {
            let pa = rng.gen_range(0..persons.len());
            let mut pb = rng.gen_range(0..persons.len() - 1);
            if pb >= pa {
                pb += 1;
            }
            let i = persons[pa].1[rng.gen_range(0..persons[pa].1.len())];
            let j = persons[pb].1[rng.gen_range(0..persons[pb].1.len())];
            out.push(SupPair {
                i,
                j,
                same: false,
                class_i: classes[persons[pa].0],
                class_j: classes[persons[pb].0],
            });
        }
    }
    Ok(out)
}

/// Composite loss (verification + identification) of one pair.
fn pair_loss<T: Real>(model: &VisualModel<T>, dataset: &Dataset<T>, p: &SupPair) -> T {
    let xi = &dataset.get(p.i).features;
    let xj = &dataset.get(p.j).features;
    let ti = model.trace(xi);
    let tj = model.trace(xj);
    let q_hat = logistic(model.verification_logit(&ti.embed, &tj.embed));
    let eps = real::<T>(1e-300);
    let loss_v = if p.same {
        -(q_hat.max(eps)).ln()
    } else {
        -((T::one() - q_hat).max(eps)).ln()
    };
    let pi = model.id_probs(&ti.embed);
    let pj = model.id_probs(&tj.embed);
    let loss_id = -(pi[p.class_i].max(eps)).ln() - (pj[p.class_j].max(eps)).ln();
    loss_v + loss_id
}

/// Mean composite loss over a fixed pair set.
pub fn supervised_loss<T: Real>(
    model: &VisualModel<T>,
    dataset: &Dataset<T>,
    pairs: &[SupPair],
) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::input("empty pair set"));
    }
    let mut acc = T::zero();
    for p in pairs {
        acc = acc + pair_loss(model, dataset, p);
    }
    Ok(acc / real::<T>(pairs.len() as f64))
}

/// Mean composite loss and its analytic gradient over a fixed pair set,
/// flat in the model's canonical parameter order.
pub fn supervised_grad<T: Real>(
    model: &VisualModel<T>,
    dataset: &Dataset<T>,
    pairs: &[SupPair],
) -> Result<(T, Vec<T>)> {
    if pairs.is_empty() {
        return Err(Error::input("empty pair set"));
    }
    let mut grad = vec![T::zero(); model.param_len()];
    let mut acc = T::zero();
    for p in pairs {
        let xi = &dataset.get(p.i).features;
        let xj = &dataset.get(p.j).features;
        let ti = model.trace(xi);
        let tj = model.trace(xj);

        // Verification: dL/ds = q_hat - q for the sigmoid cross entropy.
        let q_hat = logistic(model.verification_logit(&ti.embed, &tj.embed));
        let q = if p.same { T::one() } else { T::zero() };
        let eps = real::<T>(1e-300);
        acc = acc
            + if p.same {
                -(q_hat.max(eps)).ln()
            } else {
                -((T::one() - q_hat).max(eps)).ln()
            };
        model.backprop_verification(xi, &ti, xj, &tj, q_hat - q, &mut grad);

        // Identification on both endpoints.
        let mut g_ei = vec![T::zero(); model.dim_embed()];
        let mut g_ej = vec![T::zero(); model.dim_embed()];
        acc = acc + model.id_loss_backward(&ti, p.class_i, &mut grad, &mut g_ei);
        acc = acc + model.id_loss_backward(&tj, p.class_j, &mut grad, &mut g_ej);
        model.backprop_embed(xi, &ti, &g_ei, &mut grad);
        model.backprop_embed(xj, &tj, &g_ej, &mut grad);
    }
    let inv = T::one() / real::<T>(pairs.len() as f64);
    for g in grad.iter_mut() {
        *g = *g * inv;
    }
    Ok((acc * inv, grad))
}

/// Train the model on a labeled dataset. Returns the trained model and the
/// per-epoch full-set loss history.
pub fn train_supervised<T: Real>(
    model: &VisualModel<T>,
    dataset: &Dataset<T>,
    hyper: &TrainHyper,
) -> Result<(VisualModel<T>, TrainReport)> {
    let classes = class_map(dataset)?;
    if classes.len() < 2 {
        return Err(Error::input(format!(
            "training needs at least 2 identities, found {}",
            classes.len()
        )));
    }
    if model.num_classes() != classes.len() {
        return Err(Error::config(format!(
            "model has {} classes but the dataset has {} identities",
            model.num_classes(),
            classes.len()
        )));
    }
    let mut model = model.clone();
    let eval_pairs = balanced_pairs(dataset, hyper.pairs_per_epoch.max(64), hyper.seed ^ 0x5eed)?;
    let mut history = vec![to_f64(supervised_loss(&model, dataset, &eval_pairs)?)];

    for epoch in 0..hyper.epochs {
        let pairs = balanced_pairs(
            dataset,
            hyper.pairs_per_epoch,
            seed::substream(hyper.seed, "epoch", epoch as u64),
        )?;
        let lr = real::<T>(hyper.learning_rate);
        for batch in pairs.chunks(hyper.batch_size.max(1)) {
            let (_, grad) = supervised_grad(&model, dataset, batch)?;
            model.apply_step(lr, &grad);
        }
        if !model.params_finite() {
            return Err(Error::domain(format!(
                "training diverged at epoch {epoch}: non-finite parameters"
            )));
        }
        history.push(to_f64(supervised_loss(&model, dataset, &eval_pairs)?));
    }
    Ok((
        model,
        TrainReport { loss_history: history, num_classes: classes.len() },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ObsId, Observation, Split};
    use crate::embed::EmbedArch;

    fn labeled_dataset() -> Dataset<f64> {
        // Two identities, two sightings each, well separated.
        let obs = vec![
            Observation { id: ObsId(0), camera: 0, frame: 0, features: vec![1.0, 0.0, 0.1] },
            Observation { id: ObsId(1), camera: 1, frame: 5, features: vec![0.9, 0.1, 0.0] },
            Observation { id: ObsId(2), camera: 0, frame: 9, features: vec![0.0, 1.0, -0.1] },
            Observation { id: ObsId(3), camera: 1, frame: 14, features: vec![0.1, 0.9, 0.0] },
        ];
        let labels = vec![
            Some(PersonId(10)),
            Some(PersonId(10)),
            Some(PersonId(20)),
            Some(PersonId(20)),
        ];
        Dataset::new(obs, labels, 2, Split::SourceLabeled).unwrap()
    }

    #[test]
    fn zero_epochs_returns_model_unchanged() {
        let ds = labeled_dataset();
        let model = VisualModel::init(EmbedArch::Linear, 3, 0, 3, 2, 0.5, 1).unwrap();
        let hyper = TrainHyper { epochs: 0, ..TrainHyper::default() };
        let (trained, report) = train_supervised(&model, &ds, &hyper).unwrap();
        assert_eq!(trained.params_flat(), model.params_flat());
        assert_eq!(report.loss_history.len(), 1);
    }

    #[test]
    fn single_identity_is_an_error() {
        let obs = vec![
            Observation { id: ObsId(0), camera: 0, frame: 0, features: vec![1.0] },
            Observation { id: ObsId(1), camera: 0, frame: 1, features: vec![0.9] },
        ];
        let labels = vec![Some(PersonId(1)), Some(PersonId(1))];
        let ds = Dataset::new(obs, labels, 1, Split::SourceLabeled).unwrap();
        let model = VisualModel::init(EmbedArch::Identity, 1, 0, 1, 1, 0.5, 1).unwrap();
        assert!(train_supervised(&model, &ds, &TrainHyper::default()).is_err());
    }

    #[test]
    fn loss_decreases_and_params_stay_finite() {
        let ds = labeled_dataset();
        let model = VisualModel::init(EmbedArch::Linear, 3, 0, 3, 2, 0.5, 3).unwrap();
        let hyper = TrainHyper {
            learning_rate: 0.1,
            epochs: 30,
            pairs_per_epoch: 64,
            batch_size: 16,
            seed: 5,
        };
        let (trained, report) = train_supervised(&model, &ds, &hyper).unwrap();
        assert!(trained.params_finite());
        let first = report.loss_history[0];
        let last = *report.loss_history.last().unwrap();
        assert!(
            last < first,
            "full-set loss should decrease: {first} -> {last}"
        );
    }

    #[test]
    fn supervised_gradient_matches_finite_differences() {
        let ds = labeled_dataset();
        let mut model = VisualModel::init(EmbedArch::OneHidden, 3, 3, 2, 2, 0.5, 11).unwrap();
        let pairs = balanced_pairs(&ds, 8, 17).unwrap();
        let (_, grad) = supervised_grad(&model, &ds, &pairs).unwrap();
        let params = model.params_flat();
        let h = 1e-6;
        for idx in 0..params.len() {
            let mut plus = params.clone();
            plus[idx] += h;
            model.set_params_flat(&plus).unwrap();
            let lp = supervised_loss(&model, &ds, &pairs).unwrap();
            let mut minus = params.clone();
            minus[idx] -= h;
            model.set_params_flat(&minus).unwrap();
            let lm = supervised_loss(&model, &ds, &pairs).unwrap();
            model.set_params_flat(&params).unwrap();
            let numeric = (lp - lm) / (2.0 * h);
            let denom = grad[idx].abs().max(numeric.abs()).max(1.0);
            assert!(
                (grad[idx] - numeric).abs() / denom < 1e-4,
                "param {idx}: analytic {} vs numeric {numeric}",
                grad[idx]
            );
        }
    }
}
