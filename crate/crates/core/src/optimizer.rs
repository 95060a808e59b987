//! Acceptance-factor search for band-thinning schemes.
//!
//! Starting from a guard-band baseline, every acceptance-factor vector on a
//! regular grid is solved analytically. Candidates that raise the blocking of
//! a protected class by more than the relative slack are discarded; the best
//! remaining candidate wins. Results are memoized under a load-normalized key
//! so that a repeated query, or the same loads expressed at a different time
//! scale, is answered from the cache.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::MetricsReport;
use crate::error::{Error, Result};
use crate::policy::{evaluate_policy, PolicySpec};

/// Upper bound on grid points, to keep runaway dimensions out.
const MAX_GRID_POINTS: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    MinOverallBlocking,
    MaxUtilization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    /// `MultiFgb` (searched as UBT), `Fgb` (searched as a fractional band
    /// reaching the top channel) or `Ufb` (its own factor searched, baseline
    /// at factor 0).
    pub base_policy: PolicySpec,
    /// Per-class arrival rates, highest priority first.
    pub rates: Vec<f64>,
    pub mu: f64,
    pub grid_step: f64,
    /// Zero-based indices of the classes whose blocking must not degrade.
    pub protected_classes: Vec<usize>,
    pub epsilon_qos: f64,
    pub objective: Objective,
}

impl SearchSpec {
    pub fn new(base_policy: PolicySpec, rates: Vec<f64>, mu: f64) -> Self {
        Self {
            base_policy,
            rates,
            mu,
            grid_step: 0.1,
            protected_classes: Vec::new(),
            epsilon_qos: 0.10,
            objective: Objective::MinOverallBlocking,
        }
    }

    fn candidate(&self, alpha: &[f64]) -> PolicySpec {
        match self.base_policy {
            PolicySpec::MultiFgb {
                channels,
                ref thresholds,
            } => PolicySpec::Ubt {
                channels,
                thresholds: thresholds.clone(),
                alpha: alpha.to_vec(),
            },
            PolicySpec::Fgb { channels, m } => PolicySpec::Ufb {
                channels,
                m,
                n: channels,
                alpha: alpha[0],
            },
            PolicySpec::Ufb { channels, m, n, .. } => PolicySpec::Ufb {
                channels,
                m,
                n,
                alpha: alpha[0],
            },
            _ => unreachable!("validated base policy"),
        }
    }

    fn dimensions(&self) -> usize {
        match &self.base_policy {
            PolicySpec::MultiFgb { thresholds, .. } => thresholds.len() - 1,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.base_policy {
            PolicySpec::MultiFgb { ref thresholds, .. } if thresholds.len() >= 2 => {}
            PolicySpec::Fgb { .. } | PolicySpec::Ufb { .. } => {}
            _ => {
                return Err(Error::invalid(
                    "base_policy",
                    format!(
                        "{} has no acceptance factors to search",
                        self.base_policy.name()
                    ),
                ))
            }
        }
        self.base_policy.validate()?;
        if self.rates.len() != self.base_policy.num_classes() {
            return Err(Error::invalid(
                "rates",
                format!(
                    "{} rates for a {}-class policy",
                    self.rates.len(),
                    self.base_policy.num_classes()
                ),
            ));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return Err(Error::invalid("grid_step", "must lie in (0, 1]"));
        }
        if self.epsilon_qos.is_nan() || self.epsilon_qos < 0.0 {
            return Err(Error::invalid("epsilon_qos", "must be nonnegative"));
        }
        let m = self.base_policy.num_classes();
        if let Some(k) = self.protected_classes.iter().find(|&&k| k >= m) {
            return Err(Error::invalid(
                "protected_classes",
                format!("class index {k} out of range for {m} classes"),
            ));
        }
        Ok(())
    }
}

/// Grid values `{0, step, 2·step, …, 1}`. A step that does not divide 1
/// still ends at 1.
pub fn acceptance_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::invalid("grid_step", "must lie in (0, 1]"));
    }
    let intervals = (1.0 / step).round();
    if ((intervals * step) - 1.0).abs() < 1e-9 {
        let n = intervals as usize;
        return Ok((0..=n).map(|k| k as f64 / n as f64).collect());
    }
    let n = (1.0 / step).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
    grid.push(1.0);
    Ok(grid)
}

/// True when no protected class blocks more than `(1 + epsilon)` times its
/// baseline blocking.
pub fn qos_feasible(
    candidate: &MetricsReport,
    baseline: &MetricsReport,
    protected: &[usize],
    epsilon: f64,
) -> bool {
    protected
        .iter()
        .all(|&k| candidate.blocking[k] <= baseline.blocking[k] * (1.0 + epsilon))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub alpha: Vec<f64>,
    pub blocking: Vec<f64>,
    pub overall_blocking: f64,
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_alpha: Vec<f64>,
    pub best_policy: PolicySpec,
    pub best_metrics: MetricsReport,
    pub baseline_metrics: MetricsReport,
    /// Grid points solved.
    pub evaluated: usize,
    pub feasible_count: usize,
    pub from_cache: bool,
    /// Every feasible candidate in grid order.
    pub feasible: Vec<CandidateSummary>,
}

impl OptimizationResult {
    pub fn is_feasible(&self, alpha: &[f64]) -> bool {
        self.feasible.iter().any(|c| {
            c.alpha.len() == alpha.len()
                && c.alpha
                    .iter()
                    .zip(alpha)
                    .all(|(a, b)| (a - b).abs() < 1e-12)
        })
    }
}

fn objective_value(objective: Objective, metrics: &MetricsReport) -> f64 {
    match objective {
        Objective::MinOverallBlocking => metrics.overall_blocking,
        Objective::MaxUtilization => -metrics.utilization,
    }
}

/// Total order used to pick the winner: objective, then higher utilization,
/// then the lexicographically smallest factor vector.
fn rank(objective: Objective, a: &CandidateSummary, b: &CandidateSummary) -> std::cmp::Ordering {
    let value = |c: &CandidateSummary| match objective {
        Objective::MinOverallBlocking => c.overall_blocking,
        Objective::MaxUtilization => -c.utilization,
    };
    value(a)
        .total_cmp(&value(b))
        .then(b.utilization.total_cmp(&a.utilization))
        .then_with(|| {
            a.alpha
                .iter()
                .zip(&b.alpha)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
}

fn grid_points(values: &[f64], dims: usize) -> Result<Vec<Vec<f64>>> {
    let total = values
        .len()
        .checked_pow(dims as u32)
        .filter(|&n| n <= MAX_GRID_POINTS)
        .ok_or_else(|| Error::invalid("grid_step", "grid is too large to enumerate"))?;
    Ok((0..total)
        .map(|mut index| {
            let mut point = vec![0.0; dims];
            for slot in point.iter_mut().rev() {
                *slot = values[index % values.len()];
                index /= values.len();
            }
            point
        })
        .collect())
}

/// Exhaustive grid search over acceptance factors.
pub fn search_acceptance_factors(spec: &SearchSpec) -> Result<OptimizationResult> {
    spec.validate()?;
    let baseline = match spec.base_policy {
        PolicySpec::Ufb { channels, m, .. } => PolicySpec::Fgb { channels, m },
        ref base => base.clone(),
    };
    let baseline_metrics = evaluate_policy(&baseline, &spec.rates, spec.mu)?.metrics;

    let values = acceptance_grid(spec.grid_step)?;
    let points = grid_points(&values, spec.dimensions())?;
    let evaluated = points.len();
    let summaries = points
        .into_par_iter()
        .map(|alpha| {
            let metrics = evaluate_policy(&spec.candidate(&alpha), &spec.rates, spec.mu)?.metrics;
            Ok((alpha, metrics))
        })
        .collect::<Result<Vec<_>>>()?;

    let feasible: Vec<CandidateSummary> = summaries
        .iter()
        .filter(|(_, m)| {
            qos_feasible(
                m,
                &baseline_metrics,
                &spec.protected_classes,
                spec.epsilon_qos,
            )
        })
        .map(|(alpha, m)| CandidateSummary {
            alpha: alpha.clone(),
            blocking: m.blocking.clone(),
            overall_blocking: m.overall_blocking,
            utilization: m.utilization,
        })
        .collect();
    // The all-zero vector reproduces the baseline, so this is never empty.
    let best = feasible
        .iter()
        .min_by(|a, b| rank(spec.objective, a, b))
        .ok_or_else(|| Error::Degenerate("no feasible acceptance factors".into()))?;
    let best_policy = spec.candidate(&best.alpha);
    let best_metrics = summaries
        .iter()
        .find(|(alpha, _)| *alpha == best.alpha)
        .map(|(_, m)| m.clone())
        .expect("best candidate comes from the evaluated set");
    debug_assert!(
        objective_value(spec.objective, &best_metrics)
            <= objective_value(spec.objective, &baseline_metrics)
    );

    Ok(OptimizationResult {
        best_alpha: best.alpha.clone(),
        best_policy,
        best_metrics,
        baseline_metrics,
        evaluated,
        feasible_count: feasible.len(),
        from_cache: false,
        feasible,
    })
}

fn canonical(x: f64) -> String {
    format!("{x:.11e}")
}

/// Cache key built from load-normalized inputs: class ratios and total
/// offered load in erlangs rather than raw rates, so scaling every rate and
/// `mu` together maps to the same entry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn for_spec(spec: &SearchSpec) -> Self {
        let (scheme, channels, thresholds) = match spec.base_policy {
            PolicySpec::MultiFgb {
                channels,
                ref thresholds,
            } => ("ubt", channels, thresholds.clone()),
            PolicySpec::Fgb { channels, m } => ("ufb", channels, vec![channels, m, channels]),
            PolicySpec::Ufb { channels, m, n, .. } => ("ufb", channels, vec![channels, m, n]),
            ref other => (other.name(), other.channels(), Vec::new()),
        };
        let offered: f64 = spec.rates.iter().sum();
        let ratio: Vec<String> = spec
            .rates
            .iter()
            .map(|r| canonical(if offered > 0.0 { r / offered } else { 0.0 }))
            .collect();
        let mut protected = spec.protected_classes.clone();
        protected.sort_unstable();
        protected.dedup();
        let join = |v: &[String]| v.join(",");
        Self(format!(
            "scheme={scheme};C={channels};thresholds={};ratio={};load={};step={};epsilon={};protected={};objective={:?}",
            join(&thresholds.iter().map(ToString::to_string).collect::<Vec<_>>()),
            join(&ratio),
            canonical(offered / spec.mu),
            canonical(spec.grid_step),
            canonical(spec.epsilon_qos),
            join(&protected.iter().map(ToString::to_string).collect::<Vec<_>>()),
            spec.objective,
        ))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Memo of search results, optionally persisted as one JSON map from key to
/// result.
#[derive(Debug, Default)]
pub struct AcceptanceCache {
    path: Option<PathBuf>,
    entries: BTreeMap<String, OptimizationResult>,
}

impl AcceptanceCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a cache file. A missing or unreadable file starts cold.
    pub fn open(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let entries = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).unwrap_or_else(|err| {
                log::warn!("ignoring corrupt cache {}: {err}", path.display());
                BTreeMap::new()
            }),
            Err(err) if err.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(err) => {
                log::warn!("cannot read cache {}: {err}", path.display());
                BTreeMap::new()
            }
        };
        Self {
            path: Some(path),
            entries,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, key: &CacheKey) -> Option<OptimizationResult> {
        self.entries.get(key.as_str()).map(|r| OptimizationResult {
            from_cache: true,
            ..r.clone()
        })
    }

    /// Records `result` and rewrites the backing file, if any.
    pub fn store(&mut self, key: &CacheKey, result: &OptimizationResult) -> io::Result<()> {
        let stored = OptimizationResult {
            from_cache: false,
            ..result.clone()
        };
        self.entries.insert(key.as_str().to_owned(), stored);
        match &self.path {
            Some(path) => {
                let text = serde_json::to_string(&self.entries)?;
                let tmp = path.with_extension("tmp");
                fs::write(&tmp, text)?;
                fs::rename(&tmp, path)
            }
            None => Ok(()),
        }
    }
}

/// [`search_acceptance_factors`] behind the memo. Cache write failures are
/// logged and otherwise ignored.
pub fn search_with_cache(
    spec: &SearchSpec,
    cache: &mut AcceptanceCache,
) -> Result<OptimizationResult> {
    spec.validate()?;
    let key = CacheKey::for_spec(spec);
    if let Some(hit) = cache.lookup(&key) {
        return Ok(hit);
    }
    let result = search_acceptance_factors(spec)?;
    if let Err(err) = cache.store(&key, &result) {
        log::warn!("could not persist optimizer cache: {err}");
    }
    Ok(result)
}
