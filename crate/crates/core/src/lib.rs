//! Effective class-margin theory for long-tail detection.
//!
//! Probabilistic AP and pairwise ranking error estimators, the bounds that tie
//! them together, closed-form class margins, the ECM surrogate loss, and a
//! synthetic long-tail training sandbox that audits models against the bounds.

pub mod bounds;
pub mod error;
pub mod loss;
pub mod margins;
pub mod metrics;
pub mod priors;
pub mod sandbox;
pub mod verify;

pub use bounds::{BoundEnvelope, SlopeMode};
pub use error::{Error, Result};
pub use loss::{Label, LossEval};
pub use margins::{MarginWeights, Margins};
pub use metrics::{PrecisionRecallCurve, ScoreSet, TieMode};
pub use priors::{ClassCounts, ClassStats};
