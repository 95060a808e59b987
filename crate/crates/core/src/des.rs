//! Discrete-event simulation of a single-cell loss system.
//!
//! Each class arrives as its own Poisson stream, admission follows the
//! scheme's profile through a uniform draw, and admitted calls hold a channel
//! for an exponential time (or the minimum of call duration and dwell time).
//! Blocked calls are cleared. Estimates come from batch means over the
//! post-warmup arrivals with Student-t 95% intervals.
//!
//! Randomness is drawn from independent ChaCha8 streams sharing one seed: one
//! stream per arrival class, one for admission draws and one for holding
//! times. The same seed and configuration reproduce the same run exactly.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::engine::AdmissionProfile;
use crate::error::{Error, Result};
use crate::policy::PolicySpec;

const ADMISSION_STREAM: u64 = 1 << 32;
const HOLDING_STREAM: u64 = (1 << 32) + 1;

/// Channel holding-time law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldingTime {
    /// `Exp(mu)`.
    Exponential { mu: f64 },
    /// `min(Exp(mu_a), Exp(eta))`: the call ends or the user leaves the cell.
    DwellLimited { mu_a: f64, eta: f64 },
}

impl HoldingTime {
    pub fn mean(&self) -> f64 {
        match *self {
            HoldingTime::Exponential { mu } => 1.0 / mu,
            HoldingTime::DwellLimited { mu_a, eta } => 1.0 / (mu_a + eta),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            HoldingTime::Exponential { mu } => mu.is_finite() && mu > 0.0,
            HoldingTime::DwellLimited { mu_a, eta } => {
                mu_a.is_finite() && eta.is_finite() && mu_a >= 0.0 && eta >= 0.0 && mu_a + eta > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "holding",
                format!("{self:?} has no positive departure rate"),
            ))
        }
    }
}

/// Samples channel holding times; zero rates never fire.
pub struct HoldingSampler {
    first: Option<Exp<f64>>,
    second: Option<Exp<f64>>,
}

impl HoldingSampler {
    pub fn new(holding: HoldingTime) -> Result<Self> {
        holding.validate()?;
        let exp = |rate: f64| (rate > 0.0).then(|| Exp::new(rate).expect("positive rate"));
        Ok(match holding {
            HoldingTime::Exponential { mu } => Self {
                first: exp(mu),
                second: None,
            },
            HoldingTime::DwellLimited { mu_a, eta } => Self {
                first: exp(mu_a),
                second: exp(eta),
            },
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.first.map_or(f64::INFINITY, |d| d.sample(rng));
        let b = self.second.map_or(f64::INFINITY, |d| d.sample(rng));
        a.min(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub policy: PolicySpec,
    /// Per-class arrival rates (calls/s), highest priority first.
    pub rates: Vec<f64>,
    pub holding: HoldingTime,
    /// Total arrivals across all classes, warmup included.
    pub total_arrivals: u64,
    pub warmup_fraction: f64,
    pub batches: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(policy: PolicySpec, rates: Vec<f64>, holding: HoldingTime, seed: u64) -> Self {
        Self {
            policy,
            rates,
            holding,
            total_arrivals: 1_000_000,
            warmup_fraction: 0.1,
            batches: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if self.rates.len() != self.policy.num_classes() {
            return Err(Error::invalid(
                "rates",
                format!(
                    "{} rates for a {}-class policy",
                    self.rates.len(),
                    self.policy.num_classes()
                ),
            ));
        }
        if let Some(r) = self.rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::invalid(
                "rates",
                format!("{r} is not a nonnegative rate"),
            ));
        }
        self.holding.validate()?;
        if self.batches < 2 {
            return Err(Error::invalid("batches", "at least 2 batches are required"));
        }
        if self.total_arrivals < self.batches as u64 * 100 {
            return Err(Error::invalid(
                "total_arrivals",
                format!(
                    "needs at least 100 arrivals per batch ({})",
                    self.batches * 100
                ),
            ));
        }
        if !(0.0..=0.5).contains(&self.warmup_fraction) {
            return Err(Error::invalid("warmup_fraction", "must lie in [0, 0.5]"));
        }
        Ok(())
    }
}

/// Point estimate with its 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn covers(&self, value: f64) -> bool {
        (value - self.mean).abs() <= self.half_width
    }

    fn from_batches(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                half_width: 0.0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Self {
                mean,
                half_width: 0.0,
            };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975);
        Self {
            mean,
            half_width: t * (var / n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// Blocking estimate per class.
    pub blocking: Vec<Estimate>,
    /// Time fraction with every channel busy.
    pub dropping: Estimate,
    pub utilization: Estimate,
    /// Post-warmup arrivals per class.
    pub arrivals: Vec<u64>,
    /// Post-warmup admissions per class.
    pub accepted: Vec<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Admission {
    Accept,
    Block,
}

/// Admission decision for a class-`class` arrival seeing `occupancy` busy
/// channels, given a uniform draw `u` in `[0, 1)`.
pub fn admit(class: usize, occupancy: usize, profile: &AdmissionProfile, u: f64) -> Admission {
    if occupancy >= profile.num_channels() || u >= profile.accept(class, occupancy) {
        Admission::Block
    } else {
        Admission::Accept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Accepted,
    Blocked,
    Departure,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Accepted => "accepted",
            EventKind::Blocked => "blocked",
            EventKind::Departure => "departure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: EventKind,
    pub class: usize,
    /// Busy channels after the event.
    pub occupancy: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Departure {
    time: f64,
    class: usize,
}

impl Eq for Departure {}

impl PartialOrd for Departure {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Departure {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.class.cmp(&other.class))
    }
}

#[derive(Debug, Clone, Default)]
struct Batch {
    arrivals: Vec<u64>,
    blocked: Vec<u64>,
    elapsed: f64,
    busy: f64,
    full: f64,
}

pub fn simulate(config: &SimConfig) -> Result<SimReport> {
    simulate_traced(config, |_| {})
}

/// Runs the simulation, handing every event to `trace` in time order.
pub fn simulate_traced<F>(config: &SimConfig, mut trace: F) -> Result<SimReport>
where
    F: FnMut(&TraceEvent),
{
    config.validate()?;
    let profile = config.policy.build_profile()?;
    let classes = profile.num_classes();
    let channels = profile.num_channels();

    let mut report = SimReport {
        blocking: vec![
            Estimate {
                mean: 0.0,
                half_width: 0.0
            };
            classes
        ],
        dropping: Estimate {
            mean: 0.0,
            half_width: 0.0,
        },
        utilization: Estimate {
            mean: 0.0,
            half_width: 0.0,
        },
        arrivals: vec![0; classes],
        accepted: vec![0; classes],
        seed: config.seed,
    };
    if config.rates.iter().all(|&r| r == 0.0) {
        return Ok(report);
    }

    let stream = |id: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(id);
        rng
    };
    let mut arrival_rngs: Vec<ChaCha8Rng> = (0..classes as u64).map(stream).collect();
    let mut admission_rng = stream(ADMISSION_STREAM);
    let mut holding_rng = stream(HOLDING_STREAM);
    let interarrival: Vec<Option<Exp<f64>>> = config
        .rates
        .iter()
        .map(|&r| (r > 0.0).then(|| Exp::new(r).expect("positive rate")))
        .collect();
    let holding = HoldingSampler::new(config.holding)?;

    let mut next_arrival: Vec<f64> = interarrival
        .iter()
        .zip(arrival_rngs.iter_mut())
        .map(|(d, rng)| d.map_or(f64::INFINITY, |d| d.sample(rng)))
        .collect();

    let warmup = (config.total_arrivals as f64 * config.warmup_fraction).floor() as u64;
    let batch_size = (config.total_arrivals - warmup) / config.batches as u64;
    let mut batches = vec![
        Batch {
            arrivals: vec![0; classes],
            blocked: vec![0; classes],
            ..Batch::default()
        };
        config.batches
    ];

    let mut departures: BinaryHeap<Reverse<Departure>> = BinaryHeap::with_capacity(channels);
    let mut clock = 0.0_f64;
    let mut occupancy = 0_usize;
    let mut current: Option<usize> = None;
    let mut seen = 0_u64;

    let mut advance = |to: f64, occupancy: usize, current: Option<usize>, batches: &mut [Batch]| {
        let dt = to - clock;
        if let Some(b) = current {
            let batch = &mut batches[b];
            batch.elapsed += dt;
            batch.busy += dt * occupancy as f64;
            if occupancy == channels {
                batch.full += dt;
            }
        }
        clock = to;
    };

    while seen < config.total_arrivals {
        let (class, arrival_time) = next_arrival
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one class");

        if let Some(&Reverse(dep)) = departures.peek() {
            if dep.time <= arrival_time {
                departures.pop();
                advance(dep.time, occupancy, current, &mut batches);
                assert!(occupancy > 0, "departure from an empty cell");
                occupancy -= 1;
                trace(&TraceEvent {
                    time: dep.time,
                    kind: EventKind::Departure,
                    class: dep.class,
                    occupancy,
                });
                continue;
            }
        }

        advance(arrival_time, occupancy, current, &mut batches);
        let index = seen;
        seen += 1;
        current = (index >= warmup)
            .then(|| (((index - warmup) / batch_size) as usize).min(config.batches - 1));

        let u: f64 = admission_rng.random();
        let decision = admit(class, occupancy, &profile, u);
        if decision == Admission::Accept {
            occupancy += 1;
            assert!(
                occupancy <= channels,
                "occupancy exceeded the channel count"
            );
            departures.push(Reverse(Departure {
                time: arrival_time + holding.sample(&mut holding_rng),
                class,
            }));
        }
        if let Some(b) = current {
            batches[b].arrivals[class] += 1;
            report.arrivals[class] += 1;
            if decision == Admission::Accept {
                report.accepted[class] += 1;
            } else {
                batches[b].blocked[class] += 1;
            }
        }
        trace(&TraceEvent {
            time: arrival_time,
            kind: match decision {
                Admission::Accept => EventKind::Accepted,
                Admission::Block => EventKind::Blocked,
            },
            class,
            occupancy,
        });

        let dist = interarrival[class].expect("class with an arrival has a positive rate");
        next_arrival[class] = arrival_time + dist.sample(&mut arrival_rngs[class]);
    }

    for k in 0..classes {
        let values: Vec<f64> = batches
            .iter()
            .filter(|b| b.arrivals[k] > 0)
            .map(|b| b.blocked[k] as f64 / b.arrivals[k] as f64)
            .collect();
        report.blocking[k] = Estimate::from_batches(&values);
    }
    let timed: Vec<&Batch> = batches.iter().filter(|b| b.elapsed > 0.0).collect();
    let full: Vec<f64> = timed.iter().map(|b| b.full / b.elapsed).collect();
    let busy: Vec<f64> = timed
        .iter()
        .map(|b| b.busy / (b.elapsed * channels as f64))
        .collect();
    report.dropping = Estimate::from_batches(&full);
    report.utilization = Estimate::from_batches(&busy);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::evaluate_policy;
    use std::collections::hash_map::DefaultHasher;
    use std::hash::{Hash, Hasher};

    fn ufb_small() -> PolicySpec {
        PolicySpec::Ufb {
            channels: 3,
            m: 1,
            n: 2,
            alpha: 0.5,
        }
    }

    #[test]
    fn admission_rules() {
        let fgb = PolicySpec::Fgb { channels: 4, m: 2 }
            .build_profile()
            .unwrap();
        for u in [0.0, 0.5, 0.999_999] {
            assert_eq!(admit(0, 4, &fgb, u), Admission::Block);
            assert_eq!(admit(1, 4, &fgb, u), Admission::Block);
            assert_eq!(admit(1, 1, &fgb, u), Admission::Accept);
            assert_eq!(admit(1, 2, &fgb, u), Admission::Block);
            assert_eq!(admit(0, 3, &fgb, u), Admission::Accept);
        }
        let ufb = PolicySpec::Ufb {
            channels: 10,
            m: 4,
            n: 7,
            alpha: 0.5,
        }
        .build_profile()
        .unwrap();
        assert_eq!(admit(1, 5, &ufb, 0.49), Admission::Accept);
        assert_eq!(admit(1, 5, &ufb, 0.51), Admission::Block);
        assert_eq!(admit(1, 7, &ufb, 0.0), Admission::Block);
    }

    #[test]
    fn idle_system_reports_zeros() {
        let config = SimConfig::new(
            PolicySpec::Nps { channels: 2 },
            vec![0.0, 0.0],
            HoldingTime::Exponential { mu: 1.0 },
            7,
        );
        let report = simulate(&config).unwrap();
        assert_eq!(report.arrivals, vec![0, 0]);
        assert!(report
            .blocking
            .iter()
            .all(|e| e.mean == 0.0 && e.half_width == 0.0));
        assert_eq!(report.utilization.mean, 0.0);
    }

    #[test]
    fn config_validation() {
        let mut config = SimConfig::new(
            PolicySpec::Nps { channels: 2 },
            vec![0.5, 0.5],
            HoldingTime::Exponential { mu: 1.0 },
            1,
        );
        config.batches = 1;
        assert!(simulate(&config).is_err());
        config.batches = 20;
        config.total_arrivals = 1999;
        assert!(simulate(&config).is_err());
        config.total_arrivals = 2000;
        config.warmup_fraction = 0.6;
        assert!(simulate(&config).is_err());
        config.warmup_fraction = 0.1;
        config.rates = vec![1.0];
        assert!(simulate(&config).is_err());
        config.rates = vec![1.0, 1.0];
        config.holding = HoldingTime::DwellLimited {
            mu_a: 0.0,
            eta: 0.0,
        };
        assert!(simulate(&config).is_err());
    }

    #[test]
    fn erlang_b_agreement() {
        let config = SimConfig::new(
            PolicySpec::Nps { channels: 2 },
            vec![0.5, 0.5],
            HoldingTime::Exponential { mu: 1.0 },
            0x5eed,
        );
        let report = simulate(&config).unwrap();
        for est in &report.blocking {
            assert!(est.covers(0.2), "{est:?}");
            assert!(est.half_width < 0.005, "{est:?}");
        }
        assert!(report.dropping.covers(0.2));
        for k in 0..2 {
            assert!(report.accepted[k] <= report.arrivals[k]);
        }
    }

    #[test]
    fn fractional_band_agreement() {
        let config = SimConfig::new(
            ufb_small(),
            vec![1.0, 1.0],
            HoldingTime::Exponential { mu: 1.0 },
            11,
        );
        let report = simulate(&config).unwrap();
        assert!(report.blocking[1].covers(0.6), "{:?}", report.blocking[1]);
        assert!(report.dropping.covers(0.1), "{:?}", report.dropping);
        let exact = evaluate_policy(&ufb_small(), &[1.0, 1.0], 1.0)
            .unwrap()
            .metrics;
        assert!(report.utilization.covers(exact.utilization));
    }

    #[test]
    fn dwell_limited_holding_mean() {
        let (mu_a, eta) = (1.0 / 90.0, 1.0 / 360.0);
        let sampler = HoldingSampler::new(HoldingTime::DwellLimited { mu_a, eta }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let mean = (0..n).map(|_| sampler.sample(&mut rng)).sum::<f64>() / n as f64;
        let expected = 1.0 / crate::traffic::effective_departure_rate(mu_a, eta);
        assert!((mean / expected - 1.0).abs() < 0.01, "{mean} vs {expected}");
    }

    #[test]
    fn same_seed_same_trace() {
        let digest = |seed: u64| {
            let mut config = SimConfig::new(
                PolicySpec::Ubt {
                    channels: 6,
                    thresholds: vec![6, 4, 2],
                    alpha: vec![0.3, 0.6],
                },
                vec![1.0, 2.0, 3.0],
                HoldingTime::DwellLimited {
                    mu_a: 0.5,
                    eta: 0.25,
                },
                seed,
            );
            config.total_arrivals = 20_000;
            let mut hasher = DefaultHasher::new();
            let mut max_occupancy = 0;
            let report = simulate_traced(&config, |e| {
                e.time.to_bits().hash(&mut hasher);
                e.kind.hash(&mut hasher);
                e.class.hash(&mut hasher);
                e.occupancy.hash(&mut hasher);
                max_occupancy = max_occupancy.max(e.occupancy);
            })
            .unwrap();
            assert!(max_occupancy <= 6);
            (hasher.finish(), report)
        };
        let (a, ra) = digest(42);
        let (b, rb) = digest(42);
        let (c, _) = digest(43);
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_ne!(a, c);
    }
}
