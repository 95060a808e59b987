//! Admission schemes and their compilation into [`AdmissionProfile`]s.
//!
//! The handover-priority schemes are two-class: class 0 carries handover
//! calls, admitted in every state below `C`, and class 1 carries new calls,
//! admitted according to the scheme. The multiclass schemes take `m` classes
//! with nonincreasing thresholds `C_1 = C ≥ C_2 ≥ … ≥ C_m`.
//!
//! A threshold `T` means "admit while fewer than `T` channels are busy": state
//! `T` itself already refuses.

use serde::{Deserialize, Serialize};

use crate::engine::{AdmissionProfile, MetricsReport, StationaryDistribution};
use crate::error::{Error, Result};

/// One admission scheme with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    /// No priority: both classes admitted up to `C`.
    Nps { channels: usize },
    /// Fixed guard band: new calls admitted while fewer than `m` channels are busy.
    Fgb { channels: usize, m: usize },
    /// Fractional guard channel: new calls admitted in state `i` with
    /// probability `alpha[i]`, `alpha` of length `C + 1` from 1 down to 0.
    Fgc { channels: usize, alpha: Vec<f64> },
    /// Limited fractional channel: guard band with a single randomized state at `m`.
    Lfc {
        channels: usize,
        m: usize,
        alpha: f64,
    },
    /// Uniform fractional channel: new calls thinned by `alpha` in every state.
    Ufc { channels: usize, alpha: f64 },
    /// Uniform fractional band: open below `m`, thinned by `alpha` on
    /// `[m, n)`, handover-only from `n` up.
    Ufb {
        channels: usize,
        m: usize,
        n: usize,
        alpha: f64,
    },
    /// Multiclass guard bands: class `k` admitted below `thresholds[k]`.
    MultiFgb {
        channels: usize,
        thresholds: Vec<usize>,
    },
    /// Uniform band thinning: like [`PolicySpec::MultiFgb`], plus class `k ≥ 1`
    /// admitted with probability `alpha[k − 1]` on `[thresholds[k], thresholds[k − 1])`.
    Ubt {
        channels: usize,
        thresholds: Vec<usize>,
        alpha: Vec<f64>,
    },
}

fn check_probability(field: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{value} is not in [0, 1]")))
    }
}

fn check_threshold(field: &str, value: usize, channels: usize) -> Result<()> {
    if value <= channels {
        Ok(())
    } else {
        Err(Error::invalid(
            field,
            format!("{value} exceeds the {channels} available channels"),
        ))
    }
}

fn check_thresholds(thresholds: &[usize], channels: usize) -> Result<()> {
    match thresholds.first() {
        None => {
            return Err(Error::invalid(
                "thresholds",
                "at least one class is required",
            ))
        }
        Some(&first) if first != channels => {
            return Err(Error::invalid(
                "thresholds",
                format!("the top class must reach all {channels} channels, got {first}"),
            ))
        }
        _ => {}
    }
    if let Some(w) = thresholds.windows(2).find(|w| w[1] > w[0]) {
        return Err(Error::invalid(
            "thresholds",
            format!("must be nonincreasing, found {} after {}", w[1], w[0]),
        ));
    }
    Ok(())
}

impl PolicySpec {
    /// FGC with the linear ramp `alpha_i = 1 − i/C`.
    pub fn fgc_linear_ramp(channels: usize) -> Self {
        let c = channels as f64;
        PolicySpec::Fgc {
            channels,
            alpha: (0..=channels).map(|i| 1.0 - i as f64 / c).collect(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Nps { .. } => "nps",
            PolicySpec::Fgb { .. } => "fgb",
            PolicySpec::Fgc { .. } => "fgc",
            PolicySpec::Lfc { .. } => "lfc",
            PolicySpec::Ufc { .. } => "ufc",
            PolicySpec::Ufb { .. } => "ufb",
            PolicySpec::MultiFgb { .. } => "multi_fgb",
            PolicySpec::Ubt { .. } => "ubt",
        }
    }

    pub fn channels(&self) -> usize {
        match *self {
            PolicySpec::Nps { channels }
            | PolicySpec::Fgb { channels, .. }
            | PolicySpec::Fgc { channels, .. }
            | PolicySpec::Lfc { channels, .. }
            | PolicySpec::Ufc { channels, .. }
            | PolicySpec::Ufb { channels, .. }
            | PolicySpec::MultiFgb { channels, .. }
            | PolicySpec::Ubt { channels, .. } => channels,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            PolicySpec::MultiFgb { thresholds, .. } | PolicySpec::Ubt { thresholds, .. } => {
                thresholds.len()
            }
            _ => 2,
        }
    }

    /// True for the two-class handover-priority schemes.
    pub fn is_handover_scheme(&self) -> bool {
        !matches!(self, PolicySpec::MultiFgb { .. } | PolicySpec::Ubt { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let channels = self.channels();
        if channels == 0 {
            return Err(Error::invalid("channels", "must be at least 1"));
        }
        match self {
            PolicySpec::Nps { .. } => {}
            PolicySpec::Fgb { m, .. } => check_threshold("m", *m, channels)?,
            PolicySpec::Fgc { alpha, .. } => {
                if alpha.len() != channels + 1 {
                    return Err(Error::invalid(
                        "alpha",
                        format!("expected {} entries, got {}", channels + 1, alpha.len()),
                    ));
                }
                for (i, a) in alpha.iter().enumerate() {
                    check_probability(&format!("alpha[{i}]"), *a)?;
                }
                if alpha[0] != 1.0 {
                    return Err(Error::invalid("alpha[0]", "must be 1"));
                }
                if alpha[channels] != 0.0 {
                    return Err(Error::invalid(format!("alpha[{channels}]"), "must be 0"));
                }
                if let Some(i) = alpha.windows(2).position(|w| w[1] > w[0]) {
                    return Err(Error::invalid(
                        "alpha",
                        format!("must be nonincreasing, rises at index {}", i + 1),
                    ));
                }
            }
            PolicySpec::Lfc { m, alpha, .. } => {
                check_threshold("m", *m, channels)?;
                check_probability("alpha", *alpha)?;
            }
            PolicySpec::Ufc { alpha, .. } => check_probability("alpha", *alpha)?,
            PolicySpec::Ufb { m, n, alpha, .. } => {
                check_threshold("n", *n, channels)?;
                if m > n {
                    return Err(Error::invalid("m", format!("{m} exceeds n = {n}")));
                }
                check_probability("alpha", *alpha)?;
            }
            PolicySpec::MultiFgb { thresholds, .. } => check_thresholds(thresholds, channels)?,
            PolicySpec::Ubt {
                thresholds, alpha, ..
            } => {
                check_thresholds(thresholds, channels)?;
                if alpha.len() + 1 != thresholds.len() {
                    return Err(Error::invalid(
                        "alpha",
                        format!(
                            "{} classes need {} acceptance factors, got {}",
                            thresholds.len(),
                            thresholds.len() - 1,
                            alpha.len()
                        ),
                    ));
                }
                for (u, a) in alpha.iter().enumerate() {
                    check_probability(&format!("alpha[{u}]"), *a)?;
                }
            }
        }
        Ok(())
    }

    /// Compiles the scheme into per-class admission probabilities.
    pub fn build_profile(&self) -> Result<AdmissionProfile> {
        self.validate()?;
        let c = self.channels();
        let ramp = |f: &dyn Fn(usize) -> f64| (0..c).map(f).collect::<Vec<f64>>();
        let accept = match self {
            PolicySpec::Nps { .. } => vec![vec![1.0; c], vec![1.0; c]],
            PolicySpec::Fgb { m, .. } => {
                vec![vec![1.0; c], ramp(&|i| if i < *m { 1.0 } else { 0.0 })]
            }
            PolicySpec::Fgc { alpha, .. } => vec![vec![1.0; c], alpha[..c].to_vec()],
            PolicySpec::Lfc { m, alpha, .. } => vec![
                vec![1.0; c],
                ramp(&|i| match i.cmp(m) {
                    std::cmp::Ordering::Less => 1.0,
                    std::cmp::Ordering::Equal => *alpha,
                    std::cmp::Ordering::Greater => 0.0,
                }),
            ],
            PolicySpec::Ufc { alpha, .. } => vec![vec![1.0; c], vec![*alpha; c]],
            PolicySpec::Ufb { m, n, alpha, .. } => vec![
                vec![1.0; c],
                ramp(&|i| {
                    if i < *m {
                        1.0
                    } else if i < *n {
                        *alpha
                    } else {
                        0.0
                    }
                }),
            ],
            PolicySpec::MultiFgb { thresholds, .. } => thresholds
                .iter()
                .map(|&t| ramp(&|i| if i < t { 1.0 } else { 0.0 }))
                .collect(),
            PolicySpec::Ubt {
                thresholds, alpha, ..
            } => thresholds
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    ramp(&|i| {
                        if i < t {
                            1.0
                        } else if k > 0 && i < thresholds[k - 1] {
                            alpha[k - 1]
                        } else {
                            0.0
                        }
                    })
                })
                .collect(),
        };
        AdmissionProfile::new(c, accept)
    }

    /// A simpler scheme with the identical admission profile, if one exists.
    pub fn reduction(&self) -> Option<PolicySpec> {
        match *self {
            PolicySpec::Ufb {
                channels,
                m,
                alpha: 0.0,
                ..
            } => Some(PolicySpec::Fgb { channels, m }),
            PolicySpec::Ufb {
                channels,
                n,
                alpha: 1.0,
                ..
            } => Some(PolicySpec::Fgb { channels, m: n }),
            PolicySpec::Ufb { channels, m, n, .. } if m == n => {
                Some(PolicySpec::Fgb { channels, m })
            }
            PolicySpec::Ufc {
                channels,
                alpha: 1.0,
            } => Some(PolicySpec::Nps { channels }),
            PolicySpec::Ufc {
                channels,
                alpha: 0.0,
            } => Some(PolicySpec::Fgb { channels, m: 0 }),
            PolicySpec::Lfc {
                channels,
                m,
                alpha: 0.0,
            } => Some(PolicySpec::Fgb { channels, m }),
            PolicySpec::Lfc {
                channels,
                m,
                alpha: 1.0,
            } => Some(PolicySpec::Fgb {
                channels,
                m: (m + 1).min(channels),
            }),
            PolicySpec::Ubt {
                channels,
                ref thresholds,
                ref alpha,
            } if alpha.iter().all(|&a| a == 0.0) => Some(PolicySpec::MultiFgb {
                channels,
                thresholds: thresholds.clone(),
            }),
            _ => None,
        }
    }
}

/// Free-function form of [`PolicySpec::reduction`].
pub fn reduction_check(spec: &PolicySpec) -> Option<PolicySpec> {
    spec.reduction()
}

/// A scheme solved at one traffic point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub spec: PolicySpec,
    /// Per-class arrival rates, highest priority first.
    pub rates: Vec<f64>,
    pub mu: f64,
    pub distribution: StationaryDistribution,
    pub metrics: MetricsReport,
}

/// Builds the profile, solves the chain and extracts all metrics.
pub fn evaluate_policy(spec: &PolicySpec, rates: &[f64], mu: f64) -> Result<PolicyEvaluation> {
    let profile = spec.build_profile()?;
    let distribution = StationaryDistribution::solve(&profile, rates, mu)?;
    let metrics = MetricsReport::compute(&distribution, &profile, rates, mu)?;
    Ok(PolicyEvaluation {
        spec: spec.clone(),
        rates: rates.to_vec(),
        mu,
        distribution,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::oracle::erlang_b;
    use proptest::prelude::*;

    fn new_row(spec: &PolicySpec) -> Vec<f64> {
        spec.build_profile().unwrap().class_row(1).to_vec()
    }

    #[test]
    fn guard_band_profile() {
        let profile = PolicySpec::Fgb { channels: 3, m: 1 }
            .build_profile()
            .unwrap();
        assert_eq!(profile.class_row(1), &[1.0, 0.0, 0.0]);
        assert_eq!(profile.class_row(0), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn fractional_band_profile() {
        let spec = PolicySpec::Ufb {
            channels: 3,
            m: 1,
            n: 2,
            alpha: 0.5,
        };
        let profile = spec.build_profile().unwrap();
        assert_eq!(profile.class_row(1), &[1.0, 0.5, 0.0]);
        assert_eq!(profile.class_row(0), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn band_thinning_profile() {
        let spec = PolicySpec::Ubt {
            channels: 4,
            thresholds: vec![4, 2],
            alpha: vec![0.5],
        };
        let profile = spec.build_profile().unwrap();
        assert_eq!(profile.class_row(0), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(profile.class_row(1), &[1.0, 1.0, 0.5, 0.5]);

        let four = PolicySpec::Ubt {
            channels: 6,
            thresholds: vec![6, 5, 3, 1],
            alpha: vec![0.1, 0.2, 0.3],
        };
        let profile = four.build_profile().unwrap();
        assert_eq!(profile.class_row(1), &[1.0, 1.0, 1.0, 1.0, 1.0, 0.1]);
        assert_eq!(profile.class_row(2), &[1.0, 1.0, 1.0, 0.2, 0.2, 0.0]);
        assert_eq!(profile.class_row(3), &[1.0, 0.3, 0.3, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn remaining_scheme_profiles() {
        assert_eq!(new_row(&PolicySpec::Nps { channels: 2 }), vec![1.0, 1.0]);
        assert_eq!(
            new_row(&PolicySpec::Lfc {
                channels: 4,
                m: 2,
                alpha: 0.3
            }),
            vec![1.0, 1.0, 0.3, 0.0]
        );
        assert_eq!(
            new_row(&PolicySpec::Ufc {
                channels: 3,
                alpha: 0.4
            }),
            vec![0.4; 3]
        );
        assert_eq!(
            new_row(&PolicySpec::fgc_linear_ramp(4)),
            vec![1.0, 0.75, 0.5, 0.25]
        );
        let multi = PolicySpec::MultiFgb {
            channels: 3,
            thresholds: vec![3, 2, 0],
        };
        let profile = multi.build_profile().unwrap();
        assert_eq!(profile.class_row(1), &[1.0, 1.0, 0.0]);
        assert_eq!(profile.class_row(2), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn degenerate_thresholds_are_legal() {
        for spec in [
            PolicySpec::Fgb { channels: 3, m: 3 },
            PolicySpec::Fgb { channels: 3, m: 0 },
            PolicySpec::Ufb {
                channels: 3,
                m: 2,
                n: 2,
                alpha: 0.5,
            },
            PolicySpec::MultiFgb {
                channels: 3,
                thresholds: vec![3, 3, 3],
            },
        ] {
            assert!(spec.build_profile().is_ok(), "{spec:?}");
        }
    }

    #[test]
    fn validation_names_the_field() {
        let cases = [
            (PolicySpec::Fgb { channels: 3, m: 4 }, "m"),
            (
                PolicySpec::Ufb {
                    channels: 5,
                    m: 3,
                    n: 2,
                    alpha: 0.5,
                },
                "m",
            ),
            (
                PolicySpec::Ufb {
                    channels: 5,
                    m: 1,
                    n: 2,
                    alpha: 1.5,
                },
                "alpha",
            ),
            (
                PolicySpec::Fgc {
                    channels: 2,
                    alpha: vec![1.0, 0.2, 0.5],
                },
                "alpha[2]",
            ),
            (
                PolicySpec::Fgc {
                    channels: 3,
                    alpha: vec![1.0, 0.2, 0.5, 0.0],
                },
                "alpha",
            ),
            (
                PolicySpec::MultiFgb {
                    channels: 5,
                    thresholds: vec![5, 2, 3],
                },
                "thresholds",
            ),
            (
                PolicySpec::MultiFgb {
                    channels: 5,
                    thresholds: vec![4, 2],
                },
                "thresholds",
            ),
            (
                PolicySpec::Ubt {
                    channels: 5,
                    thresholds: vec![5, 2],
                    alpha: vec![0.1, 0.2],
                },
                "alpha",
            ),
            (PolicySpec::Nps { channels: 0 }, "channels"),
        ];
        for (spec, expected) in cases {
            match spec.build_profile() {
                Err(Error::Validation { field, .. }) => assert_eq!(field, expected, "{spec:?}"),
                other => panic!("{spec:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn evaluation_examples() {
        let nps = evaluate_policy(&PolicySpec::Nps { channels: 2 }, &[0.5, 0.5], 1.0).unwrap();
        assert!((nps.metrics.blocking[1] - erlang_b(2, 1.0)).abs() < 1e-15);
        assert!((nps.metrics.blocking[1] - 0.2).abs() < 1e-15);

        let fgb =
            evaluate_policy(&PolicySpec::Fgb { channels: 2, m: 1 }, &[1.0, 1.0], 1.0).unwrap();
        assert_eq!(fgb.metrics.blocking[1], 0.75);
        assert_eq!(fgb.metrics.dropping, 0.25);

        let ufb = PolicySpec::Ufb {
            channels: 3,
            m: 1,
            n: 2,
            alpha: 0.5,
        };
        let ufb = evaluate_policy(&ufb, &[1.0, 1.0], 1.0).unwrap();
        assert!((ufb.metrics.blocking[1] - 0.6).abs() < 1e-15);
        assert!((ufb.metrics.dropping - 0.1).abs() < 1e-15);
    }

    #[test]
    fn evaluation_is_recomputable() {
        let spec = PolicySpec::Ufb {
            channels: 40,
            m: 30,
            n: 36,
            alpha: 0.4,
        };
        let eval = evaluate_policy(&spec, &[3.0, 20.0], 0.7).unwrap();
        let profile = spec.build_profile().unwrap();
        let again =
            MetricsReport::compute(&eval.distribution, &profile, &eval.rates, eval.mu).unwrap();
        assert_eq!(again, eval.metrics);
    }

    #[test]
    fn reduction_examples() {
        assert_eq!(
            PolicySpec::Ufb {
                channels: 100,
                m: 90,
                n: 94,
                alpha: 0.0
            }
            .reduction(),
            Some(PolicySpec::Fgb {
                channels: 100,
                m: 90
            })
        );
        assert_eq!(
            PolicySpec::Ufb {
                channels: 100,
                m: 90,
                n: 94,
                alpha: 1.0
            }
            .reduction(),
            Some(PolicySpec::Fgb {
                channels: 100,
                m: 94
            })
        );
        assert_eq!(
            reduction_check(&PolicySpec::Ubt {
                channels: 12,
                thresholds: vec![12, 11, 10, 9],
                alpha: vec![0.0, 0.0, 0.0]
            }),
            Some(PolicySpec::MultiFgb {
                channels: 12,
                thresholds: vec![12, 11, 10, 9]
            })
        );
        assert_eq!(
            PolicySpec::Ufc {
                channels: 5,
                alpha: 1.0
            }
            .reduction(),
            Some(PolicySpec::Nps { channels: 5 })
        );
        assert_eq!(
            PolicySpec::Lfc {
                channels: 5,
                m: 3,
                alpha: 1.0
            }
            .reduction(),
            Some(PolicySpec::Fgb { channels: 5, m: 4 })
        );
        assert_eq!(PolicySpec::Fgb { channels: 5, m: 3 }.reduction(), None);
        assert_eq!(
            PolicySpec::Ufb {
                channels: 5,
                m: 2,
                n: 4,
                alpha: 0.5
            }
            .reduction(),
            None
        );
    }

    fn arb_two_class() -> impl Strategy<Value = PolicySpec> {
        (1usize..60).prop_flat_map(|c| {
            let alpha = 0.0f64..=1.0;
            prop_oneof![
                Just(PolicySpec::Nps { channels: c }),
                (0..=c).prop_map(move |m| PolicySpec::Fgb { channels: c, m }),
                (0..=c, alpha.clone()).prop_map(move |(m, a)| PolicySpec::Lfc {
                    channels: c,
                    m,
                    alpha: a
                }),
                alpha.clone().prop_map(move |a| PolicySpec::Ufc {
                    channels: c,
                    alpha: a
                }),
                (0..=c, 0..=c, alpha).prop_map(move |(x, y, a)| PolicySpec::Ufb {
                    channels: c,
                    m: x.min(y),
                    n: x.max(y),
                    alpha: a
                }),
                Just(PolicySpec::fgc_linear_ramp(c)),
            ]
        })
    }

    fn arb_multiclass() -> impl Strategy<Value = PolicySpec> {
        (1usize..40, 2usize..5).prop_flat_map(|(c, m)| {
            (
                prop::collection::vec(0..=c, m - 1),
                prop::collection::vec(0.0f64..=1.0, m - 1),
            )
                .prop_map(move |(mut rest, alpha)| {
                    rest.sort_unstable_by(|a, b| b.cmp(a));
                    let mut thresholds = vec![c];
                    thresholds.extend(rest);
                    PolicySpec::Ubt {
                        channels: c,
                        thresholds,
                        alpha,
                    }
                })
        })
    }

    proptest! {
        #[test]
        fn reductions_hold_numerically(
            spec in prop_oneof![arb_two_class(), arb_multiclass()],
            loads in prop::collection::vec(0.0f64..40.0, 4),
            mu in 0.01f64..2.0,
        ) {
            // Force the interesting reductions to trigger often.
            let variants: Vec<PolicySpec> = match &spec {
                PolicySpec::Ufb { channels, m, n, alpha } => vec![
                    spec.clone(),
                    PolicySpec::Ufb { channels: *channels, m: *m, n: *n, alpha: 0.0 },
                    PolicySpec::Ufb { channels: *channels, m: *m, n: *n, alpha: 1.0 },
                    PolicySpec::Ufb { channels: *channels, m: *m, n: *m, alpha: *alpha },
                ],
                PolicySpec::Ubt { channels, thresholds, .. } => vec![
                    PolicySpec::Ubt { channels: *channels, thresholds: thresholds.clone(), alpha: vec![0.0; thresholds.len() - 1] },
                ],
                PolicySpec::Ufc { channels, .. } => vec![PolicySpec::Ufc { channels: *channels, alpha: 1.0 }],
                PolicySpec::Lfc { channels, m, .. } => vec![
                    PolicySpec::Lfc { channels: *channels, m: *m, alpha: 0.0 },
                    PolicySpec::Lfc { channels: *channels, m: *m, alpha: 1.0 },
                ],
                _ => vec![spec.clone()],
            };
            for variant in variants {
                if let Some(simpler) = variant.reduction() {
                    let rates: Vec<f64> = loads[..variant.num_classes()].iter().map(|l| l * mu).collect();
                    let a = evaluate_policy(&variant, &rates, mu).unwrap();
                    let b = evaluate_policy(&simpler, &rates, mu).unwrap();
                    for (x, y) in a.distribution.probabilities().iter().zip(b.distribution.probabilities()) {
                        prop_assert!((x - y).abs() <= 1e-12);
                    }
                    for (x, y) in a.metrics.blocking.iter().zip(&b.metrics.blocking) {
                        prop_assert!((x - y).abs() <= 1e-12);
                    }
                    prop_assert!((a.metrics.utilization - b.metrics.utilization).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn higher_priority_never_blocks_more(
            spec in prop_oneof![arb_two_class(), arb_multiclass()],
            loads in prop::collection::vec(0.0f64..60.0, 4),
        ) {
            let rates = &loads[..spec.num_classes()];
            let eval = evaluate_policy(&spec, rates, 1.0).unwrap();
            let pb = &eval.metrics.blocking;
            prop_assert!(pb.windows(2).all(|w| w[0] <= w[1] + 1e-15));
            prop_assert!((pb[0] - eval.metrics.dropping).abs() <= 1e-15);
        }

        #[test]
        fn blocking_is_monotone_in_every_rate(
            spec in prop_oneof![arb_two_class(), arb_multiclass()],
            loads in prop::collection::vec(0.0f64..60.0, 4),
            bump in 0.0f64..20.0,
            which in 0usize..4,
        ) {
            let m = spec.num_classes();
            let rates = loads[..m].to_vec();
            let mut more = rates.clone();
            more[which % m] += bump;
            let before = evaluate_policy(&spec, &rates, 1.0).unwrap();
            let after = evaluate_policy(&spec, &more, 1.0).unwrap();
            for (b, a) in before.metrics.blocking.iter().zip(&after.metrics.blocking) {
                prop_assert!(*a >= *b - 1e-12);
            }
        }

        #[test]
        fn fractional_band_interpolates_guard_bands(
            c in 2usize..80,
            x in 0usize..80,
            y in 0usize..80,
            rho_h in 0.0f64..30.0,
            rho_n in 0.0f64..120.0,
            a1 in 0.0f64..=1.0,
            a2 in 0.0f64..=1.0,
        ) {
            let (m, n) = (x.min(y).min(c), x.max(y).min(c));
            let (lo, hi) = (a1.min(a2), a1.max(a2));
            let rates = [rho_h, rho_n];
            let eval = |spec: PolicySpec| evaluate_policy(&spec, &rates, 1.0).unwrap().metrics;
            let ufb = |alpha| eval(PolicySpec::Ufb { channels: c, m, n, alpha });
            let at_m = eval(PolicySpec::Fgb { channels: c, m });
            let at_n = eval(PolicySpec::Fgb { channels: c, m: n });
            let (l, h) = (ufb(lo), ufb(hi));
            let tol = 1e-12;
            prop_assert!(at_n.blocking[1] <= h.blocking[1] + tol);
            prop_assert!(h.blocking[1] <= l.blocking[1] + tol);
            prop_assert!(l.blocking[1] <= at_m.blocking[1] + tol);
            prop_assert!(at_m.dropping <= l.dropping + tol);
            prop_assert!(l.dropping <= h.dropping + tol);
            prop_assert!(h.dropping <= at_n.dropping + tol);

            let ufc = |alpha| eval(PolicySpec::Ufc { channels: c, alpha });
            let (l, h) = (ufc(lo), ufc(hi));
            prop_assert!(h.blocking[1] <= l.blocking[1] + tol);
            prop_assert!(l.dropping <= h.dropping + tol);
        }

        #[test]
        fn build_profile_is_deterministic(spec in prop_oneof![arb_two_class(), arb_multiclass()]) {
            let a = spec.build_profile().unwrap();
            prop_assert_eq!(&a, &spec.build_profile().unwrap());
            prop_assert!(a.is_monotone());
            prop_assert_eq!(a.num_classes(), spec.num_classes());
        }
    }
}
