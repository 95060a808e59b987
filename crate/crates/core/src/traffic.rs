//! Cell traffic parameters and the handover-rate flow balance.
//!
//! A call in progress leaves the cell either because it ends (rate `mu_a`) or
//! because the user moves out (rate `eta`). The handover stream seen by a cell
//! can be fixed as a ratio of the new-call stream, or derived from the flow
//! balance: handovers are generated by admitted new calls and by handovers
//! that were themselves carried.

use serde::{Deserialize, Serialize};

use crate::engine::MetricsReport;
use crate::error::{Error, Result};
use crate::policy::{evaluate_policy, PolicySpec};

/// How the handover arrival rate is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoverMode {
    /// `lambda_h = ratio · lambda_n`.
    FixedRatio(f64),
    /// `lambda_h` solves the flow balance at the policy's own blocking and
    /// dropping. The handover probability is given directly or, when `None`,
    /// derived from `eta` and `mu_a`.
    FlowBalance { handover_probability: Option<f64> },
}

/// Arrival and departure parameters of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficModel {
    /// New-call arrival rate (calls/s).
    pub lambda_n: f64,
    /// Reciprocal mean call duration (1/s).
    pub mu_a: f64,
    /// Reciprocal mean cell dwell time (1/s).
    pub eta: f64,
    /// Channel departure rate (1/s), set directly.
    pub mu: f64,
    pub handover_mode: HandoverMode,
    /// Handover arrival rate (calls/s); `None` until resolved.
    pub lambda_h: Option<f64>,
}

impl TrafficModel {
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("lambda_n", self.lambda_n),
            ("mu_a", self.mu_a),
            ("eta", self.eta),
            ("mu", self.mu),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::invalid(
                    field,
                    format!("{value} is not a nonnegative rate"),
                ));
            }
        }
        match self.handover_mode {
            HandoverMode::FixedRatio(r) if !(r.is_finite() && r >= 0.0) => Err(Error::invalid(
                "handover_ratio",
                format!("{r} is not a nonnegative ratio"),
            )),
            HandoverMode::FlowBalance {
                handover_probability: Some(p),
            } if !(0.0..1.0).contains(&p) => Err(Error::invalid(
                "handover_probability",
                format!("{p} is not in [0, 1)"),
            )),
            _ => Ok(()),
        }
    }

    /// The handover probability in use: explicit in flow-balance mode, else
    /// derived from `eta` and `mu_a`.
    pub fn handover_probability(&self) -> Result<f64> {
        match self.handover_mode {
            HandoverMode::FlowBalance {
                handover_probability: Some(p),
            } => Ok(p),
            _ => handover_probability(self.eta, self.mu_a),
        }
    }

    /// Fills in `lambda_h` for `policy`. Flow-balance mode runs the fixed-point
    /// estimator and returns its report.
    pub fn resolve(
        &mut self,
        policy: &PolicySpec,
        settings: &FixedPointSettings,
    ) -> Result<Option<FixedPointReport>> {
        self.validate()?;
        match self.handover_mode {
            HandoverMode::FixedRatio(r) => {
                self.lambda_h = Some(r * self.lambda_n);
                Ok(None)
            }
            HandoverMode::FlowBalance { .. } => {
                let ph = self.handover_probability()?;
                let report = estimate_handover_rate(policy, self.lambda_n, ph, self.mu, settings)?;
                self.lambda_h = Some(report.lambda_h);
                Ok(Some(report))
            }
        }
    }
}

/// Probability that a call hands over before completing, `eta / (eta + mu_a)`.
pub fn handover_probability(eta: f64, mu_a: f64) -> Result<f64> {
    if !(eta >= 0.0 && mu_a >= 0.0) {
        return Err(Error::invalid("eta/mu_a", "rates must be nonnegative"));
    }
    let total = eta + mu_a;
    if total <= 0.0 {
        return Err(Error::Degenerate(
            "handover probability needs eta + mu_a > 0".into(),
        ));
    }
    Ok(eta / total)
}

/// Rate of the channel holding time `min(Exp(mu_a), Exp(eta))`.
pub fn effective_departure_rate(mu_a: f64, eta: f64) -> f64 {
    mu_a + eta
}

/// One evaluation of the flow balance
/// `lambda_h = lambda_n (1 − P_B) P_h / (1 − P_h (1 − P_D))`.
pub fn handover_rate_balance(
    lambda_n: f64,
    handover_probability: f64,
    new_blocking: f64,
    dropping: f64,
) -> Result<f64> {
    let ph = handover_probability;
    if !(0.0..=1.0).contains(&ph) {
        return Err(Error::invalid(
            "handover_probability",
            format!("{ph} is not in [0, 1]"),
        ));
    }
    for (field, p) in [("new_blocking", new_blocking), ("dropping", dropping)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(field, format!("{p} is not a probability")));
        }
    }
    let denominator = 1.0 - ph * (1.0 - dropping);
    if denominator <= 0.0 {
        return Err(Error::Degenerate(
            "handover flow balance diverges when P_h (1 − P_D) = 1".into(),
        ));
    }
    Ok(lambda_n * (1.0 - new_blocking) * ph / denominator)
}

/// Iteration controls for [`estimate_handover_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSettings {
    /// Weight of the fresh balance value in each damped update.
    pub damping: f64,
    /// Absolute tolerance in calls/s; `None` means `1e-9 · max(lambda_n, 1)`.
    pub tolerance: Option<f64>,
    pub max_iterations: usize,
}

impl Default for FixedPointSettings {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tolerance: None,
            max_iterations: 10_000,
        }
    }
}

impl FixedPointSettings {
    pub fn tolerance_for(&self, lambda_n: f64) -> f64 {
        self.tolerance.unwrap_or(1e-9 * lambda_n.max(1.0))
    }
}

/// Outcome of the handover-rate fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub lambda_h: f64,
    pub iterations: usize,
    /// `|balance(lambda_h) − lambda_h|` at the reported `lambda_h`.
    pub residual: f64,
    pub converged: bool,
    pub metrics_at_solution: MetricsReport,
}

/// Solves the handover flow balance against a two-class `policy` by damped
/// fixed-point iteration, starting from the lossless value
/// `lambda_n · P_h / (1 − P_h)`.
///
/// Each iteration solves the chain at the current `lambda_h`, evaluates the
/// balance at the resulting `(P_B, P_D)` and stops as soon as the two agree to
/// within the tolerance. Exhausting `max_iterations` yields
/// [`Error::NonConvergence`] carrying the last iterate.
pub fn estimate_handover_rate(
    policy: &PolicySpec,
    lambda_n: f64,
    handover_probability: f64,
    mu: f64,
    settings: &FixedPointSettings,
) -> Result<FixedPointReport> {
    if !policy.is_handover_scheme() {
        return Err(Error::invalid(
            "policy",
            format!("{} is not a two-class handover scheme", policy.name()),
        ));
    }
    policy.validate()?;
    if !(lambda_n.is_finite() && lambda_n >= 0.0) {
        return Err(Error::invalid(
            "lambda_n",
            format!("{lambda_n} is not a nonnegative rate"),
        ));
    }
    let ph = handover_probability;
    if !(0.0..1.0).contains(&ph) {
        return Err(Error::invalid(
            "handover_probability",
            format!("{ph} is not in [0, 1)"),
        ));
    }
    if !(settings.damping > 0.0 && settings.damping <= 1.0) {
        return Err(Error::invalid("damping", "must lie in (0, 1]"));
    }
    let tolerance = settings.tolerance_for(lambda_n);

    let mut lambda_h = lambda_n * ph / (1.0 - ph);
    let mut last = None;
    for iteration in 1..=settings.max_iterations {
        let eval = evaluate_policy(policy, &[lambda_h, lambda_n], mu)?;
        let metrics = eval.metrics;
        let balanced = handover_rate_balance(lambda_n, ph, metrics.blocking[1], metrics.dropping)?;
        let residual = (balanced - lambda_h).abs();
        let report = FixedPointReport {
            lambda_h,
            iterations: iteration,
            residual,
            converged: residual <= tolerance,
            metrics_at_solution: metrics,
        };
        if report.converged {
            return Ok(report);
        }
        last = Some(report);
        lambda_h = (1.0 - settings.damping) * lambda_h + settings.damping * balanced;
    }
    match last {
        Some(report) => Err(Error::NonConvergence(Box::new(report))),
        None => Err(Error::invalid("max_iterations", "must be at least 1")),
    }
}
