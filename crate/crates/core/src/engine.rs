//! State-dependent birth-death solver for single-cell loss systems.
//!
//! With `C` channels, exponential channel holding time of rate `mu` and a
//! class-`k` Poisson stream of rate `lambda_k` admitted in state `i` with
//! probability `a[k][i]`, occupancy is a birth-death chain with birth rate
//! `Λ(i) = Σ_k a[k][i]·lambda_k` and death rate `i·mu`. Its stationary law is
//! the normalized product `p[i] ∝ Π_{j<i} Λ(j) / ((j+1)·mu)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unnormalized weights are rescaled once they pass this bound.
const RESCALE_THRESHOLD: f64 = 1e150;

/// Per-class, per-state admission probabilities.
///
/// `accept[k][i]` is the probability that a class-`k` arrival is admitted
/// while `i` channels are busy, for `i` in `0..C`. A full system (`i = C`)
/// never admits, whatever the profile says.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionProfile {
    num_channels: usize,
    accept: Vec<Vec<f64>>,
}

impl AdmissionProfile {
    pub fn new(num_channels: usize, accept: Vec<Vec<f64>>) -> Result<Self> {
        if num_channels == 0 {
            return Err(Error::invalid("num_channels", "must be at least 1"));
        }
        if accept.is_empty() {
            return Err(Error::invalid("accept", "at least one class is required"));
        }
        for (k, row) in accept.iter().enumerate() {
            if row.len() != num_channels {
                return Err(Error::Dimension(format!(
                    "class {k} has {} admission entries, expected {num_channels}",
                    row.len()
                )));
            }
            if let Some(i) = row.iter().position(|a| !(0.0..=1.0).contains(a)) {
                return Err(Error::invalid(
                    format!("accept[{k}][{i}]"),
                    format!("{} is not a probability", row[i]),
                ));
            }
        }
        Ok(Self {
            num_channels,
            accept,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn num_classes(&self) -> usize {
        self.accept.len()
    }

    /// Admission probability of `class` at `occupancy`; zero at a full system.
    pub fn accept(&self, class: usize, occupancy: usize) -> f64 {
        if occupancy >= self.num_channels {
            0.0
        } else {
            self.accept[class][occupancy]
        }
    }

    pub fn class_row(&self, class: usize) -> &[f64] {
        &self.accept[class]
    }

    /// True when every class is thinned monotonically (nonincreasing in
    /// occupancy). Built-in policies always are; hand-written profiles are
    /// flagged rather than rejected.
    pub fn is_monotone(&self) -> bool {
        self.accept
            .iter()
            .all(|row| row.windows(2).all(|w| w[1] <= w[0]))
    }

    /// Aggregate admitted arrival rate `Λ(i)` in state `occupancy`.
    pub fn birth_rate(&self, rates: &[f64], occupancy: usize) -> f64 {
        if occupancy >= self.num_channels {
            return 0.0;
        }
        self.accept
            .iter()
            .zip(rates)
            .map(|(row, &rate)| row[occupancy] * rate)
            .sum()
    }

    fn check_rates(&self, rates: &[f64]) -> Result<()> {
        if rates.len() != self.num_classes() {
            return Err(Error::Dimension(format!(
                "{} arrival rates for a {}-class profile",
                rates.len(),
                self.num_classes()
            )));
        }
        if let Some(k) = rates.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::invalid(
                format!("rates[{k}]"),
                format!("{} is not a nonnegative rate", rates[k]),
            ));
        }
        Ok(())
    }
}

/// Stationary occupancy probabilities `p[0..=C]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    p: Vec<f64>,
}

impl StationaryDistribution {
    /// Solves the chain defined by `profile`, per-class `rates` and channel
    /// departure rate `mu`. All-zero rates give the point mass at state 0.
    pub fn solve(profile: &AdmissionProfile, rates: &[f64], mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::invalid(
                "mu",
                format!("{mu} must be a positive rate"),
            ));
        }
        profile.check_rates(rates)?;

        let c = profile.num_channels();
        let mut weights = Vec::with_capacity(c + 1);
        weights.push(1.0_f64);
        let mut current = 1.0_f64;
        for j in 0..c {
            current *= profile.birth_rate(rates, j) / ((j + 1) as f64 * mu);
            if current > RESCALE_THRESHOLD {
                for w in weights.iter_mut() {
                    *w /= current;
                }
                current = 1.0;
            }
            weights.push(current);
        }

        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        Ok(Self { p: weights })
    }

    /// Wraps an explicit probability vector, e.g. one produced elsewhere.
    pub fn from_probabilities(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::invalid("p", "needs at least two states"));
        }
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid("p", "entries must be nonnegative"));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("p", format!("sums to {total}, not 1")));
        }
        Ok(Self { p })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn num_channels(&self) -> usize {
        self.p.len() - 1
    }

    pub fn full(&self) -> f64 {
        self.p[self.p.len() - 1]
    }

    pub fn mean_occupancy(&self) -> f64 {
        self.p.iter().enumerate().map(|(i, p)| i as f64 * p).sum()
    }

    /// Largest cut-equation mismatch `|Λ(i−1)·p[i−1] − i·mu·p[i]|`, relative
    /// to the largest flow term. Zero for an exact solution.
    pub fn balance_residual(&self, profile: &AdmissionProfile, rates: &[f64], mu: f64) -> f64 {
        let mut worst = 0.0_f64;
        let mut scale = 0.0_f64;
        for i in 1..self.p.len() {
            let up = profile.birth_rate(rates, i - 1) * self.p[i - 1];
            let down = i as f64 * mu * self.p[i];
            worst = worst.max((up - down).abs());
            scale = scale.max(up.abs()).max(down.abs());
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

fn check_shapes(dist: &StationaryDistribution, profile: &AdmissionProfile) -> Result<()> {
    if dist.num_channels() != profile.num_channels() {
        return Err(Error::Dimension(format!(
            "distribution has {} channels, profile has {}",
            dist.num_channels(),
            profile.num_channels()
        )));
    }
    Ok(())
}

fn check_class(profile: &AdmissionProfile, class: usize) -> Result<()> {
    if class >= profile.num_classes() {
        return Err(Error::Dimension(format!(
            "class index {class} out of range for {} classes",
            profile.num_classes()
        )));
    }
    Ok(())
}

/// Probability that a class-`class` arrival is refused:
/// `Σ_{i<C} (1 − a[k][i])·p[i] + p[C]`.
pub fn blocking_probability(
    dist: &StationaryDistribution,
    profile: &AdmissionProfile,
    class: usize,
) -> Result<f64> {
    check_shapes(dist, profile)?;
    check_class(profile, class)?;
    let p = dist.probabilities();
    let c = profile.num_channels();
    let row = profile.class_row(class);
    let thinned: f64 = (0..c).map(|i| (1.0 - row[i]) * p[i]).sum();
    // Rounding can push a certain refusal a hair above one.
    Ok((thinned + p[c]).min(1.0))
}

/// Handover dropping probability: the full-system probability `p[C]`.
pub fn dropping_probability(dist: &StationaryDistribution) -> f64 {
    dist.full()
}

/// Splits the blocking probability of `class` over contiguous state bands.
///
/// `band_edges` must start at 0, end at `C + 1` and be nondecreasing; band `j`
/// covers states `band_edges[j]..band_edges[j + 1]`. The returned contributions
/// sum to [`blocking_probability`].
pub fn band_blocking_decomposition(
    dist: &StationaryDistribution,
    profile: &AdmissionProfile,
    class: usize,
    band_edges: &[usize],
) -> Result<Vec<f64>> {
    check_shapes(dist, profile)?;
    check_class(profile, class)?;
    let c = profile.num_channels();
    let valid = band_edges.len() >= 2
        && band_edges[0] == 0
        && band_edges[band_edges.len() - 1] == c + 1
        && band_edges.windows(2).all(|w| w[0] <= w[1]);
    if !valid {
        return Err(Error::invalid(
            "band_edges",
            format!("{band_edges:?} does not partition states 0..={c}"),
        ));
    }
    let p = dist.probabilities();
    let refused = |i: usize| 1.0 - profile.accept(class, i);
    Ok(band_edges
        .windows(2)
        .map(|w| (w[0]..w[1]).map(|i| refused(i) * p[i]).sum())
        .collect())
}

/// Carried traffic per channel, `Σ λ_k (1 − PB_k) / (mu·C)`.
pub fn channel_utilization(rates: &[f64], blocking: &[f64], mu: f64, num_channels: usize) -> f64 {
    carried_rate(rates, blocking) / (mu * num_channels as f64)
}

/// Traffic-weighted blocking across classes, `1 − Σ λ_k (1 − PB_k) / Σ λ_k`.
pub fn overall_blocking(rates: &[f64], blocking: &[f64]) -> Result<f64> {
    if rates.len() != blocking.len() {
        return Err(Error::Dimension(format!(
            "{} rates against {} blocking values",
            rates.len(),
            blocking.len()
        )));
    }
    let offered: f64 = rates.iter().sum();
    if offered <= 0.0 {
        return Err(Error::Degenerate(
            "overall blocking is undefined without offered traffic".into(),
        ));
    }
    Ok(1.0 - carried_rate(rates, blocking) / offered)
}

fn carried_rate(rates: &[f64], blocking: &[f64]) -> f64 {
    rates
        .iter()
        .zip(blocking)
        .map(|(rate, pb)| rate * (1.0 - pb))
        .sum()
}

/// Performance figures of one solved chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Blocking probability per class, highest priority first.
    pub blocking: Vec<f64>,
    pub dropping: f64,
    pub utilization: f64,
    /// Zero when no traffic is offered.
    pub overall_blocking: f64,
    /// Carried traffic in erlangs.
    pub carried_load: f64,
    pub mean_occupancy: f64,
}

impl MetricsReport {
    pub fn compute(
        dist: &StationaryDistribution,
        profile: &AdmissionProfile,
        rates: &[f64],
        mu: f64,
    ) -> Result<Self> {
        check_shapes(dist, profile)?;
        profile.check_rates(rates)?;
        let blocking = (0..profile.num_classes())
            .map(|k| blocking_probability(dist, profile, k))
            .collect::<Result<Vec<_>>>()?;
        let overall = if rates.iter().sum::<f64>() > 0.0 {
            overall_blocking(rates, &blocking)?
        } else {
            0.0
        };
        let c = profile.num_channels();
        Ok(Self {
            dropping: dropping_probability(dist),
            utilization: channel_utilization(rates, &blocking, mu, c),
            overall_blocking: overall,
            carried_load: carried_rate(rates, &blocking) / mu,
            mean_occupancy: dist.mean_occupancy(),
            blocking,
        })
    }
}
