//! Experiment configuration: one JSON document per run.
//!
//! ```json
//! {
//!   "policy":  { "scheme": "ufb", "channels": 100, "m": 90, "n": 94, "alpha": 0.5 },
//!   "traffic": {
//!     "mean_holding_time": 90,
//!     "handover": { "mode": "fixed_ratio", "ratio": 0.16666666666666666 },
//!     "sweep": { "min": 0, "max": 6, "step": 0.1 }
//!   },
//!   "run": { "mode": "sweep" }
//! }
//! ```
//!
//! Two-class schemes are driven by the new-call rate `lambda_n`; multiclass
//! schemes by a total offered load in erlangs split by `class_ratio`. Unknown
//! keys anywhere are rejected.

use std::path::{Path, PathBuf};

use cacwb_core::des::HoldingTime;
use cacwb_core::optimizer::Objective;
use cacwb_core::traffic::{handover_probability, FixedPointSettings};
use cacwb_core::PolicySpec;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Solve,
    Sweep,
    Simulate,
    Optimize,
    EstimateHandover,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Sweep => "sweep",
            Mode::Simulate => "simulate",
            Mode::Optimize => "optimize",
            Mode::EstimateHandover => "estimate-handover",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl SweepRange {
    /// Sweep points `min + k·step`, each rounded to 12 significant digits so
    /// that accumulated binary error never leaks into outputs.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|k| {
                let x = self.min + k as f64 * self.step;
                format!("{x:.11e}").parse().expect("formatted float parses")
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Departure {
    /// `mu` comes straight from `mean_holding_time`.
    #[default]
    Direct,
    /// `mu = 1/mean_call_duration + 1/mean_dwell_time`.
    Effective,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum HandoverSection {
    FixedRatio { ratio: f64 },
    FlowBalance { handover_probability: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TrafficSection {
    pub mean_holding_time: Option<f64>,
    pub mean_call_duration: Option<f64>,
    pub mean_dwell_time: Option<f64>,
    #[serde(default)]
    pub departure: Departure,
    pub lambda_n: Option<f64>,
    pub handover: Option<HandoverSection>,
    pub load: Option<f64>,
    pub class_ratio: Option<Vec<f64>>,
    pub rates: Option<Vec<f64>>,
    pub sweep: Option<SweepRange>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub total_arrivals: Option<u64>,
    pub warmup_fraction: Option<f64>,
    pub batches: Option<usize>,
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub grid_step: Option<f64>,
    /// One-based class numbers.
    pub protected_classes: Option<Vec<usize>>,
    pub epsilon_qos: Option<f64>,
    pub objective: Option<Objective>,
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FixedPointSection {
    pub damping: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    policy: serde_json::Value,
    traffic: TrafficSection,
    #[serde(default)]
    run: RunSection,
    simulation: Option<SimulationSection>,
    optimizer: Option<OptimizerSection>,
    fixed_point: Option<FixedPointSection>,
}

/// Where a handover rate comes from at each traffic point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HandoverRule {
    Ratio(f64),
    FlowBalance { handover_probability: f64 },
}

/// A parsed and fully validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub policy: PolicySpec,
    pub traffic: TrafficSection,
    pub run: RunSection,
    pub simulation: SimulationSection,
    pub optimizer: OptimizerSection,
    pub fixed_point: FixedPointSettings,
    /// Channel departure rate used by the analytic models.
    pub mu: f64,
    pub holding: HoldingTime,
    /// Set for two-class schemes unless explicit rates are given.
    pub handover: Option<HandoverRule>,
}

fn invalid(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Validation(format!("{field}: {}", reason.into()))
}

fn positive(field: &str, value: f64) -> Result<f64, CliError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(invalid(field, format!("{value} must be positive")))
    }
}

fn nonnegative(field: &str, value: f64) -> Result<f64, CliError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(invalid(field, format!("{value} must be nonnegative")))
    }
}

fn parse_policy(mut value: serde_json::Value) -> Result<PolicySpec, CliError> {
    // FGC without an explicit vector gets the linear ramp.
    if let Some(obj) = value.as_object_mut() {
        if obj.get("scheme").and_then(|s| s.as_str()) == Some("fgc") && !obj.contains_key("alpha") {
            let channels = obj
                .get("channels")
                .and_then(|c| c.as_u64())
                .ok_or_else(|| invalid("policy.channels", "missing or not an integer"))?;
            let ramp = PolicySpec::fgc_linear_ramp(channels as usize);
            if let PolicySpec::Fgc { alpha, .. } = ramp {
                obj.insert("alpha".into(), serde_json::json!(alpha));
            }
        }
    }
    let spec: PolicySpec =
        serde_json::from_value(value).map_err(|e| invalid("policy", e.to_string()))?;
    spec.validate().map_err(|e| match e {
        cacwb_core::Error::Validation { field, reason } => {
            invalid(&format!("policy.{field}"), reason)
        }
        other => invalid("policy", other.to_string()),
    })?;
    Ok(spec)
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig =
            serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        let policy = parse_policy(raw.policy)?;
        let traffic = raw.traffic;

        let rate_of = |field: &str, mean: Option<f64>| -> Result<Option<f64>, CliError> {
            mean.map(|m| positive(field, m).map(|m| 1.0 / m))
                .transpose()
        };
        let mu_direct = rate_of("traffic.mean_holding_time", traffic.mean_holding_time)?;
        let mu_a = rate_of("traffic.mean_call_duration", traffic.mean_call_duration)?;
        let eta = rate_of("traffic.mean_dwell_time", traffic.mean_dwell_time)?;

        let (mu, holding) = match traffic.departure {
            Departure::Direct => {
                let mu = mu_direct.ok_or_else(|| {
                    invalid(
                        "traffic.mean_holding_time",
                        "required with direct departure",
                    )
                })?;
                (mu, HoldingTime::Exponential { mu })
            }
            Departure::Effective => {
                if mu_direct.is_some() {
                    return Err(invalid(
                        "traffic.mean_holding_time",
                        "conflicts with effective departure; give call duration and dwell time",
                    ));
                }
                let mu_a = mu_a.unwrap_or(0.0);
                let eta = eta.unwrap_or(0.0);
                let mu = positive("traffic.departure", mu_a + eta)?;
                (mu, HoldingTime::DwellLimited { mu_a, eta })
            }
        };

        let classes = policy.num_classes();
        let explicit = traffic.rates.is_some();
        if let Some(rates) = &traffic.rates {
            if rates.len() != classes {
                return Err(invalid(
                    "traffic.rates",
                    format!("{} rates for a {classes}-class policy", rates.len()),
                ));
            }
            for r in rates {
                nonnegative("traffic.rates", *r)?;
            }
            for (field, present) in [
                ("traffic.lambda_n", traffic.lambda_n.is_some()),
                ("traffic.load", traffic.load.is_some()),
                ("traffic.sweep", traffic.sweep.is_some()),
                ("traffic.handover", traffic.handover.is_some()),
                ("traffic.class_ratio", traffic.class_ratio.is_some()),
            ] {
                if present {
                    return Err(invalid(field, "cannot be combined with explicit rates"));
                }
            }
        }
        if let Some(sweep) = &traffic.sweep {
            nonnegative("traffic.sweep.min", sweep.min)?;
            positive("traffic.sweep.step", sweep.step)?;
            if !(sweep.max.is_finite() && sweep.min <= sweep.max) {
                return Err(invalid("traffic.sweep", "needs min <= max"));
            }
        }

        let mut handover = None;
        if policy.is_handover_scheme() {
            for (field, present) in [
                ("traffic.load", traffic.load.is_some()),
                ("traffic.class_ratio", traffic.class_ratio.is_some()),
            ] {
                if present {
                    return Err(invalid(field, "only applies to multiclass schemes"));
                }
            }
            if !explicit {
                if let Some(l) = traffic.lambda_n {
                    nonnegative("traffic.lambda_n", l)?;
                }
                let rule = match traffic.handover.clone() {
                    None => {
                        return Err(invalid(
                            "traffic.handover",
                            "required for two-class schemes",
                        ))
                    }
                    Some(HandoverSection::FixedRatio { ratio }) => {
                        HandoverRule::Ratio(nonnegative("traffic.handover.ratio", ratio)?)
                    }
                    Some(HandoverSection::FlowBalance {
                        handover_probability: explicit_ph,
                    }) => {
                        let derived = traffic.mean_dwell_time.is_some();
                        let ph =
                            match (explicit_ph, derived) {
                                (Some(_), true) => return Err(invalid(
                                    "traffic.handover.handover_probability",
                                    "give it directly or derive it from mean_dwell_time, not both",
                                )),
                                (Some(p), false) => p,
                                (None, _) => {
                                    handover_probability(eta.unwrap_or(0.0), mu_a.unwrap_or(0.0))
                                        .map_err(|e| invalid("traffic.handover", e.to_string()))?
                                }
                            };
                        if !(0.0..1.0).contains(&ph) {
                            return Err(invalid(
                                "traffic.handover.handover_probability",
                                format!("{ph} is not in [0, 1)"),
                            ));
                        }
                        HandoverRule::FlowBalance {
                            handover_probability: ph,
                        }
                    }
                };
                handover = Some(rule);
            }
        } else {
            for (field, present) in [
                ("traffic.lambda_n", traffic.lambda_n.is_some()),
                ("traffic.handover", traffic.handover.is_some()),
            ] {
                if present {
                    return Err(invalid(field, "only applies to two-class schemes"));
                }
            }
            if !explicit {
                let ratio = traffic.class_ratio.as_ref().ok_or_else(|| {
                    invalid("traffic.class_ratio", "required for multiclass schemes")
                })?;
                if ratio.len() != classes {
                    return Err(invalid(
                        "traffic.class_ratio",
                        format!("{} entries for a {classes}-class policy", ratio.len()),
                    ));
                }
                for r in ratio {
                    nonnegative("traffic.class_ratio", *r)?;
                }
                if ratio.iter().sum::<f64>() <= 0.0 {
                    return Err(invalid("traffic.class_ratio", "must have a positive entry"));
                }
                if let Some(l) = traffic.load {
                    nonnegative("traffic.load", l)?;
                }
            }
        }

        let fp = raw.fixed_point.unwrap_or_default();
        let defaults = FixedPointSettings::default();
        let fixed_point = FixedPointSettings {
            damping: fp.damping.unwrap_or(defaults.damping),
            tolerance: fp
                .tolerance
                .map(|t| positive("fixed_point.tolerance", t))
                .transpose()?,
            max_iterations: fp.max_iterations.unwrap_or(defaults.max_iterations),
        };
        if !(fixed_point.damping > 0.0 && fixed_point.damping <= 1.0) {
            return Err(invalid("fixed_point.damping", "must lie in (0, 1]"));
        }
        if fixed_point.max_iterations == 0 {
            return Err(invalid("fixed_point.max_iterations", "must be at least 1"));
        }

        let simulation = raw.simulation.unwrap_or_default();
        let optimizer = raw.optimizer.unwrap_or_default();
        if let Some(protected) = &optimizer.protected_classes {
            if let Some(k) = protected.iter().find(|&&k| k == 0 || k > classes) {
                return Err(invalid(
                    "optimizer.protected_classes",
                    format!("class {k} is not in 1..={classes}"),
                ));
            }
        }

        Ok(Self {
            policy,
            traffic,
            run: raw.run,
            simulation,
            optimizer,
            fixed_point,
            mu,
            holding,
            handover,
        })
    }

    /// Checks that the configuration suits `mode`, before any work starts.
    pub fn check_mode(&self, mode: Mode) -> Result<(), CliError> {
        if let Some(declared) = self.run.mode {
            if declared != mode {
                return Err(invalid(
                    "run.mode",
                    format!(
                        "config declares {} but {} was requested",
                        declared.as_str(),
                        mode.as_str()
                    ),
                ));
            }
        }
        let sweep = self.traffic.sweep.is_some();
        let point = self.traffic.rates.is_some()
            || self.traffic.lambda_n.is_some()
            || self.traffic.load.is_some();
        match mode {
            Mode::Sweep if !sweep => Err(invalid("traffic.sweep", "required in sweep mode")),
            Mode::Sweep | Mode::EstimateHandover if point && sweep => Err(invalid(
                "traffic.sweep",
                "give either a sweep or a single traffic point, not both",
            )),
            Mode::Solve | Mode::Simulate | Mode::Optimize if sweep => Err(invalid(
                "traffic.sweep",
                format!("not used in {} mode", mode.as_str()),
            )),
            Mode::Solve | Mode::Simulate | Mode::Optimize if !point => Err(invalid(
                "traffic",
                "a single traffic point (lambda_n, load or rates) is required",
            )),
            Mode::EstimateHandover if !(sweep || point) => {
                Err(invalid("traffic", "lambda_n or a sweep is required"))
            }
            Mode::EstimateHandover
                if !matches!(self.handover, Some(HandoverRule::FlowBalance { .. })) =>
            {
                Err(invalid(
                    "traffic.handover",
                    "estimate-handover needs flow_balance mode",
                ))
            }
            Mode::Optimize
                if !matches!(
                    self.policy,
                    PolicySpec::MultiFgb { .. } | PolicySpec::Fgb { .. } | PolicySpec::Ufb { .. }
                ) =>
            {
                Err(invalid(
                    "policy.scheme",
                    "optimize needs a multi_fgb, fgb or ufb base policy",
                ))
            }
            _ => Ok(()),
        }
    }

    /// The traffic points of this run, in order: sweep points, or the single
    /// configured point (`lambda_n` or `load`; `None` for explicit rates).
    pub fn axis(&self) -> Vec<Option<f64>> {
        if let Some(sweep) = &self.traffic.sweep {
            return sweep.points().into_iter().map(Some).collect();
        }
        if self.traffic.rates.is_some() {
            return vec![None];
        }
        vec![self.traffic.lambda_n.or(self.traffic.load)]
    }

    /// Per-class rates for a multiclass load point.
    pub fn multiclass_rates(&self, load: f64) -> Vec<f64> {
        let ratio = self.traffic.class_ratio.as_deref().unwrap_or(&[]);
        let total: f64 = ratio.iter().sum();
        ratio.iter().map(|r| r / total * load * self.mu).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SUITE_A: &str = r#"{
        "policy": { "scheme": "ufb", "channels": 100, "m": 90, "n": 94, "alpha": 0.5 },
        "traffic": {
            "mean_holding_time": 90,
            "handover": { "mode": "fixed_ratio", "ratio": 0.16666666666666666 },
            "sweep": { "min": 0, "max": 6, "step": 0.1 }
        }
    }"#;

    fn expect_field(text: &str, field: &str) {
        match ExperimentConfig::from_json(text) {
            Err(CliError::Validation(msg)) => assert!(msg.contains(field), "{msg}"),
            other => panic!("expected validation error on {field}, got {other:?}"),
        }
    }

    #[test]
    fn parses_suite_a() {
        let cfg = ExperimentConfig::from_json(SUITE_A).unwrap();
        assert_eq!(cfg.mu, 1.0 / 90.0);
        assert_eq!(cfg.handover, Some(HandoverRule::Ratio(1.0 / 6.0)));
        let axis = cfg.axis();
        assert_eq!(axis.len(), 61);
        assert_eq!(axis[3], Some(0.3));
        assert_eq!(axis[60], Some(6.0));
        cfg.check_mode(Mode::Sweep).unwrap();
        assert!(cfg.check_mode(Mode::Solve).is_err());
    }

    #[test]
    fn fgc_defaults_to_ramp() {
        let text = SUITE_A.replace(
            r#""scheme": "ufb", "channels": 100, "m": 90, "n": 94, "alpha": 0.5"#,
            r#""scheme": "fgc", "channels": 100"#,
        );
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg.policy, PolicySpec::fgc_linear_ramp(100));
    }

    #[test]
    fn rejects_unknown_keys() {
        expect_field(&SUITE_A.replace("\"sweep\"", "\"sweeep\""), "sweeep");
        expect_field(
            &SUITE_A.replace("\"alpha\": 0.5", "\"alpha\": 0.5, \"beta\": 1"),
            "policy",
        );
    }

    #[test]
    fn names_the_violated_field() {
        expect_field(&SUITE_A.replace("\"n\": 94", "\"n\": 101"), "policy.n");
        expect_field(
            &SUITE_A.replace("\"step\": 0.1", "\"step\": 0"),
            "traffic.sweep.step",
        );
        expect_field(
            &SUITE_A.replace("\"max\": 6", "\"max\": -1"),
            "traffic.sweep",
        );
        expect_field(
            &SUITE_A.replace("\"mean_holding_time\": 90,", ""),
            "traffic.mean_holding_time",
        );
        expect_field(
            &SUITE_A.replace(
                r#"{ "mode": "fixed_ratio", "ratio": 0.16666666666666666 }"#,
                r#"{ "mode": "flow_balance", "handover_probability": 0.2 }, "mean_dwell_time": 360"#,
            ),
            "handover_probability",
        );
        expect_field(
            &SUITE_A.replace(
                "\"mean_holding_time\": 90",
                "\"mean_holding_time\": 90, \"load\": 3",
            ),
            "traffic.load",
        );
    }

    #[test]
    fn effective_departure_and_derived_handover_probability() {
        let text = r#"{
            "policy": { "scheme": "fgb", "channels": 100, "m": 90 },
            "traffic": {
                "departure": "effective",
                "mean_call_duration": 90,
                "mean_dwell_time": 360,
                "handover": { "mode": "flow_balance" },
                "lambda_n": 2
            }
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert!((cfg.mu - 5.0 / 360.0).abs() < 1e-15);
        match cfg.handover {
            Some(HandoverRule::FlowBalance {
                handover_probability,
            }) => {
                assert!((handover_probability - 0.2).abs() < 1e-15)
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(cfg.holding, HoldingTime::DwellLimited { .. }));
        cfg.check_mode(Mode::EstimateHandover).unwrap();
    }

    #[test]
    fn multiclass_traffic() {
        let text = r#"{
            "policy": { "scheme": "ubt", "channels": 120, "thresholds": [120, 110, 100, 90], "alpha": [0.2, 0.3, 0.9] },
            "traffic": { "mean_holding_time": 120, "class_ratio": [1, 2, 4, 6], "load": 130 },
            "optimizer": { "protected_classes": [1, 2] }
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let rates = cfg.multiclass_rates(130.0);
        assert!((rates.iter().sum::<f64>() - 130.0 / 120.0).abs() < 1e-15);
        assert!((rates[3] / rates[0] - 6.0).abs() < 1e-12);
        assert!(cfg.check_mode(Mode::Optimize).is_err());
        expect_field(
            &text.replace("[1, 2]", "[0, 2]"),
            "optimizer.protected_classes",
        );
        expect_field(
            &text.replace("[1, 2, 4, 6]", "[1, 2, 4]"),
            "traffic.class_ratio",
        );
    }

    #[test]
    fn declared_mode_must_match() {
        let text = SUITE_A.replace(
            "\"traffic\"",
            "\"run\": { \"mode\": \"solve\" }, \"traffic\"",
        );
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        assert!(cfg.check_mode(Mode::Sweep).is_err());
    }
}
