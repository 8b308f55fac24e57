//! Domain types: observations, datasets, and camera-pair intervals.
//!
//! A [`Dataset`] keeps identity labels in a side table guarded by its
//! [`Split`]: learning code cannot read labels on an unlabeled split, it
//! can only get an error. That gate is the central contract of the whole
//! pipeline — everything downstream of the source-training step must work
//! without identities.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Camera index, `0..num_cameras`.
pub type CameraId = usize;

/// Frame number within the recording; monotone per camera, never negative.
pub type Timestamp = i64;

/// Opaque unique observation id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObsId(pub u64);

impl fmt::Display for ObsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identity label; visible to evaluation and the simulator only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PersonId(pub u64);

impl fmt::Display for PersonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One sighting: where and when it was captured plus its appearance vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub id: ObsId,
    pub camera: CameraId,
    pub frame: Timestamp,
    pub features: Vec<T>,
}

/// Dataset role. Labels are readable on `SourceLabeled` and `TargetEval`;
/// any label request on `TargetUnlabeled` is an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    SourceLabeled,
    TargetUnlabeled,
    TargetEval,
}

impl Split {
    pub fn labels_readable(self) -> bool {
        !matches!(self, Split::TargetUnlabeled)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::SourceLabeled => "source-labeled",
            Split::TargetUnlabeled => "target-unlabeled",
            Split::TargetEval => "target-eval",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "source-labeled" => Ok(Split::SourceLabeled),
            "target-unlabeled" => Ok(Split::TargetUnlabeled),
            "target-eval" => Ok(Split::TargetEval),
            other => Err(Error::parse(format!("unknown split `{other}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Immutable observation container. Safe to share across worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    observations: Vec<Observation<T>>,
    labels: Vec<Option<PersonId>>,
    num_cameras: usize,
    split: Split,
}

impl<T: Real> Dataset<T> {
    /// Build a dataset, validating every container invariant: unique ids,
    /// one feature dimension, cameras in range, nonnegative frames.
    pub fn new(
        observations: Vec<Observation<T>>,
        labels: Vec<Option<PersonId>>,
        num_cameras: usize,
        split: Split,
    ) -> Result<Self> {
        if labels.len() != observations.len() {
            return Err(Error::input(format!(
                "label table size {} does not match observation count {}",
                labels.len(),
                observations.len()
            )));
        }
        if num_cameras == 0 && !observations.is_empty() {
            return Err(Error::input("num_cameras must be positive"));
        }
        let dim = observations.first().map_or(0, |o| o.features.len());
        let mut seen = HashSet::with_capacity(observations.len());
        for obs in &observations {
            if !seen.insert(obs.id) {
                return Err(Error::input(format!("duplicate obs id {}", obs.id)));
            }
            if obs.features.len() != dim {
                return Err(Error::input(format!(
                    "obs {} has dimension {}, expected {}",
                    obs.id,
                    obs.features.len(),
                    dim
                )));
            }
            if obs.camera >= num_cameras {
                return Err(Error::input(format!(
                    "obs {} camera {} out of range 0..{}",
                    obs.id, obs.camera, num_cameras
                )));
            }
            if obs.frame < 0 {
                return Err(Error::input(format!(
                    "obs {} has negative frame {}",
                    obs.id, obs.frame
                )));
            }
            if obs.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("obs {} has non-finite features", obs.id)));
            }
        }
        Ok(Dataset {
            observations,
            labels,
            num_cameras,
            split,
        })
    }

    pub fn observations(&self) -> &[Observation<T>] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn num_cameras(&self) -> usize {
        self.num_cameras
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// Feature dimension (0 for an empty dataset).
    pub fn dim(&self) -> usize {
        self.observations.first().map_or(0, |o| o.features.len())
    }

    pub fn get(&self, index: usize) -> &Observation<T> {
        &self.observations[index]
    }

    pub fn index_of(&self, id: ObsId) -> Option<usize> {
        self.observations.iter().position(|o| o.id == id)
    }

    /// Identity label of the observation at `index`.
    ///
    /// Fails on a `target-unlabeled` split: that request is a label leak in
    /// the caller, never a recoverable condition.
    pub fn label(&self, index: usize) -> Result<Option<PersonId>> {
        if !self.split.labels_readable() {
            return Err(Error::LabelAccess(self.split));
        }
        Ok(self.labels[index])
    }

    /// Raw label table, bypassing the split gate. For serialization only:
    /// the file format persists labels regardless of split so that one file
    /// can serve several roles.
    pub fn raw_labels(&self) -> &[Option<PersonId>] {
        &self.labels
    }

    /// Same observations under a different split.
    pub fn with_split(&self, split: Split) -> Self {
        Dataset {
            observations: self.observations.clone(),
            labels: self.labels.clone(),
            num_cameras: self.num_cameras,
            split,
        }
    }

    /// Same observations with every label replaced. Test hook for the
    /// label-leak tripwire.
    pub fn with_labels(&self, labels: Vec<Option<PersonId>>) -> Result<Self> {
        Dataset::new(
            self.observations.clone(),
            labels,
            self.num_cameras,
            self.split,
        )
    }

    /// Total number of ordered observation pairs `(i, j), i != j`.
    pub fn ordered_pair_count(&self) -> u64 {
        let n = self.len() as u64;
        n.saturating_mul(n.saturating_sub(1))
    }
}

/// Camera pair plus the signed frame interval between two sightings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairInterval {
    pub cam_i: CameraId,
    pub cam_j: CameraId,
    /// `frame_j - frame_i`; negative when `j` was captured first.
    pub delta: i64,
}

/// Camera pair and signed interval for an ordered observation pair.
pub fn pair_interval<T>(obs_i: &Observation<T>, obs_j: &Observation<T>) -> PairInterval {
    PairInterval {
        cam_i: obs_i.camera,
        cam_j: obs_j.camera,
        delta: obs_j.frame - obs_i.frame,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(id: u64, camera: CameraId, frame: Timestamp) -> Observation<f64> {
        Observation {
            id: ObsId(id),
            camera,
            frame,
            features: vec![1.0, 0.0],
        }
    }

    #[test]
    fn pair_interval_forward() {
        let pi = pair_interval(&obs(0, 0, 100), &obs(1, 1, 160));
        assert_eq!(pi, PairInterval { cam_i: 0, cam_j: 1, delta: 60 });
    }

    #[test]
    fn pair_interval_reversed() {
        let pi = pair_interval(&obs(1, 1, 160), &obs(0, 0, 100));
        assert_eq!(pi, PairInterval { cam_i: 1, cam_j: 0, delta: -60 });
    }

    #[test]
    fn pair_interval_same_frame() {
        let pi = pair_interval(&obs(0, 2, 50), &obs(1, 2, 50));
        assert_eq!(pi, PairInterval { cam_i: 2, cam_j: 2, delta: 0 });
    }

    #[test]
    fn label_gate_blocks_unlabeled_split() {
        let ds = Dataset::new(
            vec![obs(0, 0, 1)],
            vec![Some(PersonId(7))],
            1,
            Split::TargetUnlabeled,
        )
        .unwrap();
        assert!(matches!(ds.label(0), Err(Error::LabelAccess(_))));
        let eval = ds.with_split(Split::TargetEval);
        assert_eq!(eval.label(0).unwrap(), Some(PersonId(7)));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Dataset::new(
            vec![obs(3, 0, 1), obs(3, 0, 2)],
            vec![None, None],
            1,
            Split::TargetEval,
        );
        assert!(err.is_err());
    }

    #[test]
    fn mismatched_dims_rejected() {
        let a = obs(0, 0, 1);
        let mut b = obs(1, 0, 2);
        b.features.push(3.0);
        assert!(Dataset::new(vec![a, b], vec![None, None], 1, Split::TargetEval).is_err());
    }

    #[test]
    fn camera_out_of_range_rejected() {
        assert!(Dataset::new(vec![obs(0, 2, 1)], vec![None], 2, Split::TargetEval).is_err());
    }

    proptest! {
        #[test]
        fn interval_antisymmetry(
            ca in 0usize..4, cb in 0usize..4,
            fa in 0i64..10_000, fb in 0i64..10_000,
        ) {
            let a = obs(0, ca, fa);
            let b = obs(1, cb, fb);
            prop_assert_eq!(pair_interval(&a, &b).delta, -pair_interval(&b, &a).delta);
        }
    }
}
