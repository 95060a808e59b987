use std::path::{Path, PathBuf};

use cacwb_core::des::{self, SimConfig, SimReport, TraceEvent};
use cacwb_core::optimizer::{search_with_cache, AcceptanceCache, OptimizationResult, SearchSpec};
use cacwb_core::traffic::estimate_handover_rate;
use cacwb_core::{evaluate_policy, Error, MetricsReport, PolicySpec};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, Format, HandoverRule, Mode};
use crate::error::CliError;
use crate::format::{fmt_float, to_json, Csv};

pub const CACHE_ENV: &str = "CACWB_CACHE";

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub mode: Mode,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
}

/// A finished run: every file it produces, fully rendered.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub document: String,
    /// `None` means standard output.
    pub destination: Option<PathBuf>,
    pub side_files: Vec<(PathBuf, String)>,
    /// 0, or 4 when some handover fixed point did not converge.
    pub exit_code: i32,
}

impl Output {
    pub fn write(&self) -> Result<(), CliError> {
        for (path, text) in &self.side_files {
            std::fs::write(path, text)?;
        }
        match &self.destination {
            Some(path) => std::fs::write(path, &self.document)?,
            None => {
                use std::io::Write;
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(self.document.as_bytes())?;
                stdout.flush()?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct FixedPointSummary {
    iterations: usize,
    residual: f64,
    converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Point {
    /// `lambda_n` for two-class schemes, total load in erlangs otherwise.
    x: f64,
    rates: Vec<f64>,
    metrics: MetricsReport,
    fixed_point: Option<FixedPointSummary>,
}

impl Point {
    fn converged(&self) -> bool {
        self.fixed_point.is_none_or(|f| f.converged)
    }
}

/// Parses the config, validates it for `inv.mode` and produces the output
/// without touching the filesystem beyond reading the config and the
/// optimizer cache.
pub fn execute(inv: &Invocation) -> Result<Output, CliError> {
    let cfg = ExperimentConfig::from_path(&inv.config)?;
    execute_config(&cfg, inv)
}

pub fn execute_config(cfg: &ExperimentConfig, inv: &Invocation) -> Result<Output, CliError> {
    cfg.check_mode(inv.mode)?;
    let format = inv.format.or(cfg.run.format).unwrap_or(match inv.mode {
        Mode::Sweep | Mode::Simulate => Format::Csv,
        Mode::Solve | Mode::Optimize | Mode::EstimateHandover => Format::Json,
    });
    let destination = inv.out.clone().or_else(|| cfg.run.output.clone());
    let mut output = match inv.mode {
        Mode::Solve | Mode::Sweep => run_points(cfg, inv.mode, format)?,
        Mode::EstimateHandover => run_estimate(cfg, format)?,
        Mode::Simulate => run_simulate(cfg, inv.seed.or(cfg.run.seed), format)?,
        Mode::Optimize => run_optimize(cfg, format)?,
    };
    output.destination = destination;
    Ok(output)
}

/// Runs and writes, reporting failures on stderr. Returns the exit code.
pub fn run(inv: &Invocation) -> i32 {
    match execute(inv) {
        Ok(output) => match output.write() {
            Ok(()) => {
                if output.exit_code == 4 {
                    eprintln!("cacwb: handover rate did not converge at every point");
                }
                output.exit_code
            }
            Err(e) => {
                eprintln!("cacwb: {e}");
                e.exit_code()
            }
        },
        Err(e) => {
            eprintln!("cacwb: {e}");
            e.exit_code()
        }
    }
}

fn output(document: String, points: &[Point]) -> Output {
    Output {
        document,
        destination: None,
        side_files: Vec::new(),
        exit_code: if points.iter().all(Point::converged) {
            0
        } else {
            4
        },
    }
}

fn evaluate_point(cfg: &ExperimentConfig, x: Option<f64>) -> Result<Point, CliError> {
    let policy = &cfg.policy;
    let two_class = policy.is_handover_scheme();
    if let Some(rates) = &cfg.traffic.rates {
        let metrics = evaluate_policy(policy, rates, cfg.mu)?.metrics;
        let x = if two_class {
            rates[1]
        } else {
            rates.iter().sum::<f64>() / cfg.mu
        };
        return Ok(Point {
            x,
            rates: rates.clone(),
            metrics,
            fixed_point: None,
        });
    }
    let x = x.unwrap_or(0.0);
    if !two_class {
        let rates = cfg.multiclass_rates(x);
        let metrics = evaluate_policy(policy, &rates, cfg.mu)?.metrics;
        return Ok(Point {
            x,
            rates,
            metrics,
            fixed_point: None,
        });
    }
    match cfg.handover {
        Some(HandoverRule::Ratio(r)) => {
            let rates = vec![r * x, x];
            let metrics = evaluate_policy(policy, &rates, cfg.mu)?.metrics;
            Ok(Point {
                x,
                rates,
                metrics,
                fixed_point: None,
            })
        }
        Some(HandoverRule::FlowBalance {
            handover_probability,
        }) => {
            let report = match estimate_handover_rate(
                policy,
                x,
                handover_probability,
                cfg.mu,
                &cfg.fixed_point,
            ) {
                Ok(report) => report,
                Err(Error::NonConvergence(report)) => *report,
                Err(e) => return Err(e.into()),
            };
            Ok(Point {
                x,
                rates: vec![report.lambda_h, x],
                metrics: report.metrics_at_solution,
                fixed_point: Some(FixedPointSummary {
                    iterations: report.iterations,
                    residual: report.residual,
                    converged: report.converged,
                }),
            })
        }
        None => Err(CliError::Validation(
            "traffic.handover: required for two-class schemes".into(),
        )),
    }
}

fn evaluate_axis(cfg: &ExperimentConfig) -> Result<Vec<Point>, CliError> {
    cfg.axis()
        .into_par_iter()
        .map(|x| evaluate_point(cfg, x))
        .collect()
}

fn point_header(cfg: &ExperimentConfig) -> Vec<String> {
    let classes = cfg.policy.num_classes();
    let mut header: Vec<String> = if cfg.policy.is_handover_scheme() {
        vec!["lambda_n".into(), "lambda_h".into()]
    } else {
        vec!["load".into()]
    };
    header.extend((1..=classes).map(|k| format!("pb_{k}")));
    header.extend(["p_d", "utilization", "overall_blocking"].map(String::from));
    header
}

fn point_row(cfg: &ExperimentConfig, p: &Point) -> Vec<f64> {
    let mut row = vec![p.x];
    if cfg.policy.is_handover_scheme() {
        row.push(p.rates[0]);
    }
    row.extend(&p.metrics.blocking);
    row.extend([
        p.metrics.dropping,
        p.metrics.utilization,
        p.metrics.overall_blocking,
    ]);
    row
}

fn point_json(cfg: &ExperimentConfig, p: &Point) -> serde_json::Value {
    let mut v = json!({
        "rates": p.rates,
        "blocking": p.metrics.blocking,
        "dropping": p.metrics.dropping,
        "utilization": p.metrics.utilization,
        "overall_blocking": p.metrics.overall_blocking,
        "carried_load": p.metrics.carried_load,
        "mean_occupancy": p.metrics.mean_occupancy,
    });
    let obj = v.as_object_mut().expect("object literal");
    if cfg.policy.is_handover_scheme() {
        obj.insert("lambda_n".into(), json!(p.x));
        obj.insert("lambda_h".into(), json!(p.rates[0]));
    } else {
        obj.insert("load".into(), json!(p.x));
    }
    if let Some(fp) = p.fixed_point {
        obj.insert("fixed_point".into(), json!(fp));
    }
    v
}

fn run_points(cfg: &ExperimentConfig, mode: Mode, format: Format) -> Result<Output, CliError> {
    let points = evaluate_axis(cfg)?;
    let document = match format {
        Format::Csv => {
            let mut csv = Csv::with_header(&point_header(cfg));
            for p in &points {
                csv.row(&point_row(cfg, p));
            }
            csv.finish()
        }
        Format::Json => {
            let rendered: Vec<_> = points.iter().map(|p| point_json(cfg, p)).collect();
            let mut doc = json!({ "mode": mode.as_str(), "policy": cfg.policy, "mu": cfg.mu });
            if mode == Mode::Solve {
                doc["point"] = rendered.into_iter().next().expect("solve has one point");
            } else {
                doc["points"] = json!(rendered);
            }
            to_json(&doc)
        }
    };
    Ok(output(document, &points))
}

fn run_estimate(cfg: &ExperimentConfig, format: Format) -> Result<Output, CliError> {
    let points = evaluate_axis(cfg)?;
    let document = match format {
        Format::Csv => {
            let mut header: Vec<String> = [
                "lambda_n",
                "lambda_h",
                "iterations",
                "residual",
                "converged",
            ]
            .map(String::from)
            .to_vec();
            header.extend(point_header(cfg).into_iter().skip(2));
            let mut csv = Csv::with_header(&header);
            for p in &points {
                let fp = p
                    .fixed_point
                    .expect("flow balance points carry a fixed point");
                let mut cells = vec![
                    fmt_float(p.x),
                    fmt_float(p.rates[0]),
                    fp.iterations.to_string(),
                    fmt_float(fp.residual),
                    fp.converged.to_string(),
                ];
                cells.extend(point_row(cfg, p).into_iter().skip(2).map(fmt_float));
                csv.raw_row(cells);
            }
            csv.finish()
        }
        Format::Json => {
            let ph = match cfg.handover {
                Some(HandoverRule::FlowBalance {
                    handover_probability,
                }) => handover_probability,
                _ => unreachable!("checked by check_mode"),
            };
            let rendered: Vec<_> = points.iter().map(|p| point_json(cfg, p)).collect();
            to_json(&json!({
                "mode": Mode::EstimateHandover.as_str(),
                "policy": cfg.policy,
                "mu": cfg.mu,
                "handover_probability": ph,
                "converged": points.iter().all(Point::converged),
                "points": rendered,
            }))
        }
    };
    Ok(output(document, &points))
}

fn trace_csv(events: &[TraceEvent]) -> String {
    let mut csv = Csv::with_header(&["time", "kind", "class", "occupancy"]);
    for e in events {
        csv.raw_row([
            fmt_float(e.time),
            e.kind.as_str().to_string(),
            (e.class + 1).to_string(),
            e.occupancy.to_string(),
        ]);
    }
    csv.finish()
}

fn run_simulate(
    cfg: &ExperimentConfig,
    seed: Option<u64>,
    format: Format,
) -> Result<Output, CliError> {
    let seed = seed.ok_or_else(|| {
        CliError::Validation("run.seed: simulate needs a seed (config or --seed)".into())
    })?;
    let sim = &cfg.simulation;
    let point = evaluate_point(cfg, cfg.axis()[0])?;
    let mut config = SimConfig::new(cfg.policy.clone(), point.rates.clone(), cfg.holding, seed);
    if let Some(n) = sim.total_arrivals {
        config.total_arrivals = n;
    }
    if let Some(w) = sim.warmup_fraction {
        config.warmup_fraction = w;
    }
    if let Some(b) = sim.batches {
        config.batches = b;
    }
    config.validate().map_err(|e| match e {
        Error::Validation { field, reason } => {
            CliError::Validation(format!("simulation.{field}: {reason}"))
        }
        other => other.into(),
    })?;

    let mut side_files = Vec::new();
    let report: SimReport = match &sim.trace {
        Some(path) => {
            let mut events = Vec::new();
            let report = des::simulate_traced(&config, |e| events.push(*e))?;
            side_files.push((path.clone(), trace_csv(&events)));
            report
        }
        None => des::simulate(&config)?,
    };

    let analytic = &point.metrics;
    let document = match format {
        Format::Csv => {
            let mut csv = Csv::with_header(&["metric", "estimate", "half_width", "analytic"]);
            let mut line = |name: String, est: &des::Estimate, exact: f64| {
                csv.raw_row([
                    name,
                    fmt_float(est.mean),
                    fmt_float(est.half_width),
                    fmt_float(exact),
                ]);
            };
            for (k, est) in report.blocking.iter().enumerate() {
                line(format!("pb_{}", k + 1), est, analytic.blocking[k]);
            }
            line("p_d".into(), &report.dropping, analytic.dropping);
            line(
                "utilization".into(),
                &report.utilization,
                analytic.utilization,
            );
            csv.finish()
        }
        Format::Json => to_json(&json!({
            "mode": Mode::Simulate.as_str(),
            "policy": cfg.policy,
            "rates": point.rates,
            "simulation": report,
            "analytic": analytic,
            "total_arrivals": config.total_arrivals,
            "warmup_fraction": config.warmup_fraction,
            "batches": config.batches,
        })),
    };
    let mut out = output(document, std::slice::from_ref(&point));
    out.side_files = side_files;
    Ok(out)
}

/// Protected classes when the config names none: the top class of a
/// two-class scheme, or every class but the two lowest of a multiclass one.
pub fn default_protected(classes: usize) -> Vec<usize> {
    if classes <= 2 {
        vec![0]
    } else {
        (0..classes - 2).collect()
    }
}

fn cache_path(cfg: &ExperimentConfig) -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| cfg.optimizer.cache.clone())
}

fn open_cache(path: Option<&Path>) -> AcceptanceCache {
    match path {
        Some(p) => AcceptanceCache::open(p),
        None => AcceptanceCache::in_memory(),
    }
}

fn run_optimize(cfg: &ExperimentConfig, format: Format) -> Result<Output, CliError> {
    let point = evaluate_point(cfg, cfg.axis()[0])?;
    let opt = &cfg.optimizer;
    let base = match &cfg.policy {
        // A UFB config names a candidate; the search starts from its own family.
        PolicySpec::Ufb { .. } | PolicySpec::Fgb { .. } | PolicySpec::MultiFgb { .. } => {
            cfg.policy.clone()
        }
        other => unreachable!("{} rejected by check_mode", other.name()),
    };
    let mut spec = SearchSpec::new(base, point.rates.clone(), cfg.mu);
    if let Some(step) = opt.grid_step {
        spec.grid_step = step;
    }
    if let Some(eps) = opt.epsilon_qos {
        spec.epsilon_qos = eps;
    }
    if let Some(objective) = opt.objective {
        spec.objective = objective;
    }
    spec.protected_classes = match &opt.protected_classes {
        Some(classes) => classes.iter().map(|k| k - 1).collect(),
        None => default_protected(cfg.policy.num_classes()),
    };
    spec.validate().map_err(|e| match e {
        Error::Validation { field, reason } => {
            CliError::Validation(format!("optimizer.{field}: {reason}"))
        }
        other => other.into(),
    })?;

    let path = cache_path(cfg);
    let mut cache = open_cache(path.as_deref());
    let result: OptimizationResult = search_with_cache(&spec, &mut cache)?;

    let document = match format {
        Format::Csv => {
            let factors = result.best_alpha.len();
            let classes = cfg.policy.num_classes();
            let mut header: Vec<String> = (1..=factors).map(|j| format!("alpha_{j}")).collect();
            header.extend((1..=classes).map(|k| format!("pb_{k}")));
            header.extend(["overall_blocking", "utilization", "best"].map(String::from));
            let mut csv = Csv::with_header(&header);
            for c in &result.feasible {
                let mut row = c.alpha.clone();
                row.extend(&c.blocking);
                row.push(c.overall_blocking);
                row.push(c.utilization);
                row.push(if c.alpha == result.best_alpha {
                    1.0
                } else {
                    0.0
                });
                csv.row(&row);
            }
            csv.finish()
        }
        Format::Json => to_json(&json!({
            "mode": Mode::Optimize.as_str(),
            "base_policy": cfg.policy,
            "rates": point.rates,
            "mu": cfg.mu,
            "grid_step": spec.grid_step,
            "epsilon_qos": spec.epsilon_qos,
            "objective": spec.objective,
            "protected_classes": spec.protected_classes.iter().map(|k| k + 1).collect::<Vec<_>>(),
            "result": result,
        })),
    };
    Ok(output(document, std::slice::from_ref(&point)))
}
