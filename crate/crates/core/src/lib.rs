//! Camera-network person re-identification built from three cooperating
//! pieces:
//!
//! 1. a **visual classifier** — a trainable embedding map scored by
//!    clamped cosine similarity ([`embed`]);
//! 2. **spatio-temporal patterns** — histograms of (camera pair, signed
//!    frame interval) counted from classifier judgements on unlabeled
//!    data, with an error-rate correction ([`stpattern`]);
//! 3. a **fusion scorer** that combines both signals into one ranking
//!    score, plus a ranking-feedback loop in which the fusion model
//!    teaches the visual model on unlabeled data ([`fusion`], [`rankopt`]).
//!
//! A deterministic camera-network simulator ([`sim`]) with an analytic
//! transition-pattern oracle backs the test suite, and [`eval`] measures
//! CMC curves and judgement-conditional error rates.
//!
//! All numeric code is generic over the scalar type via [`scalar::Real`]
//! (`f32` or `f64`); the aliases below fix the default double-precision
//! instantiation used by the CLI and the file tools.

pub mod data;
pub mod embed;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod rankopt;
pub mod scalar;
pub mod seed;
pub mod sim;
pub mod stpattern;

pub use data::{pair_interval, CameraId, Dataset, ObsId, Observation, PairInterval, PersonId, Split, Timestamp};
pub use embed::{EmbedArch, Embeddings, Judgement, TrainHyper, VisualModel};
pub use error::{Error, Result};
pub use eval::{cmc, error_rates, theorem1_harness, CmcCurve, ErrorRates, GridPoint, SweepCell, TauF, Theorem1Report};
pub use fusion::{fuse_rank, fusion_kernel, rank_all_fusion, rank_all_visual, visual_rank, FusionParams, RankingResult};
pub use rankopt::{mutual_promote, rank_loss, sample_triplets, train_on_triplets, IterationRecord, LoopConfig, LossOrientation, RankHyper, Triplet};
pub use scalar::Real;
pub use stpattern::{correct_pattern, count_patterns, BinSpec, PatternCounts, StHistogram};

/// Default scalar type for the CLI and file tools.
pub type Scalar = f64;

/// Double-precision aliases for the main value types.
pub type Dataset64 = Dataset<Scalar>;
pub type Observation64 = Observation<Scalar>;
pub type VisualModel64 = VisualModel<Scalar>;
pub type StHistogram64 = StHistogram<Scalar>;
pub type PatternCounts64 = PatternCounts<Scalar>;
