//! Call admission control workbench.
//!
//! Every admission scheme (guard band, fractional guard channel, uniform
//! fractional band, multiclass band thinning, ...) compiles into an
//! [`AdmissionProfile`]: the probability that a class-`k` arrival is admitted
//! when `i` channels are busy. A single state-dependent birth-death solver turns
//! the profile into a stationary distribution, from which every blocking,
//! dropping and utilization figure is read.
//!
//! Classes are indexed from zero and ordered by priority: index 0 is the
//! highest-priority class (handover calls in the two-class schemes).

pub mod des;
pub mod engine;
pub mod error;
pub mod optimizer;
pub mod policy;
pub mod traffic;

pub use engine::{AdmissionProfile, MetricsReport, StationaryDistribution};
pub use error::{Error, Result};
pub use policy::{evaluate_policy, PolicyEvaluation, PolicySpec};
pub use traffic::{FixedPointReport, FixedPointSettings, HandoverMode, TrafficModel};
