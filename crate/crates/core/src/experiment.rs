//! Experiment orchestration: seed sweeps over graph families, summary
//! statistics, and log-log scaling fits of stabilisation times.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::engine::{run_single, InitSpec, ProtocolStack, RunRecord, RunSettings, Tail};
use crate::error::{Error, Result};
use crate::graph::GraphDescriptor;

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub graphs: Vec<GraphDescriptor>,
    pub stack: ProtocolStack,
    pub init: InitSpec,
    pub seeds: u64,
    pub seed_base: u64,
    /// None: the default cap 50 · n² · ⌈log2 n⌉ per graph.
    pub step_cap: Option<u64>,
    pub tail: Tail,
}

impl ExperimentSpec {
    fn validate(&self) -> Result<()> {
        if self.graphs.is_empty() {
            return Err(Error::invalid("experiment needs at least one graph point"));
        }
        if self.seeds == 0 {
            return Err(Error::invalid("experiment needs at least one seed"));
        }
        Ok(())
    }
}

/// One record per (graph point, seed), in deterministic (graph, seed)
/// order regardless of parallelism. `POPPROTO_THREADS` bounds the worker
/// count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let jobs: Vec<(&GraphDescriptor, u64)> = spec
        .graphs
        .iter()
        .flat_map(|g| (0..spec.seeds).map(move |s| (g, spec.seed_base + s)))
        .collect();
    let run_all = || -> Result<Vec<RunRecord>> {
        jobs.par_iter()
            .map(|&(descriptor, seed)| {
                let cap = match spec.step_cap {
                    Some(c) => c,
                    None => {
                        let n = match descriptor.node_count() {
                            Some(n) => n,
                            None => descriptor.build()?.node_count(),
                        };
                        crate::engine::default_step_cap(n)
                    }
                };
                run_single(
                    descriptor,
                    &spec.stack,
                    &spec.init,
                    seed,
                    RunSettings { step_cap: cap, tail: spec.tail },
                )
            })
            .collect()
    };
    match threads_from_env()? {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(run_all),
        None => run_all(),
    }
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("POPPROTO_THREADS") {
        Ok(s) => s
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::invalid(format!("POPPROTO_THREADS must be an integer, got {s:?}"))),
        Err(_) => Ok(None),
    }
}

/// Exact order statistics of whole-stack stabilisation steps. Capped runs
/// are counted but excluded from the moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub count: usize,
    pub capped: usize,
    pub mean: f64,
    pub median: u64,
    pub p95: u64,
}

/// Nearest-rank order statistic: the ⌈q·k⌉-th smallest of k values.
fn nearest_rank(sorted: &[u64], q: f64) -> u64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn summarize(records: &[RunRecord]) -> Result<Stats> {
    if records.is_empty() {
        return Err(Error::invalid("no records to summarize"));
    }
    let mut values: Vec<u64> = records
        .iter()
        .filter(|r| !r.capped)
        .filter_map(|r| r.steps_to_stable())
        .collect();
    values.sort_unstable();
    let capped = records.len() - values.len();
    if values.is_empty() {
        return Err(Error::invalid("all records capped; nothing to summarize"));
    }
    Ok(Stats {
        count: records.len(),
        capped,
        mean: values.iter().sum::<u64>() as f64 / values.len() as f64,
        median: nearest_rank(&values, 0.5),
        p95: nearest_rank(&values, 0.95),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitPoint {
    pub n: usize,
    pub runs: usize,
    pub capped: usize,
    pub mean: f64,
    pub p95: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub points: Vec<FitPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares on log-log points; returns (slope, intercept, R²).
pub fn ols_loglog(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(Error::Fit("log-log fit needs positive values".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all points share one x value".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, intercept, r2))
}

/// Groups records by graph size, requires ≥3 distinct sizes with ≥5
/// uncapped seeds each, and fits log(mean steps) against log(n). A point
/// with more than 10% capped runs invalidates the fit.
pub fn fit_scaling(records: &[RunRecord]) -> Result<ScalingFit> {
    let mut by_n: std::collections::BTreeMap<usize, Vec<&RunRecord>> =
        std::collections::BTreeMap::new();
    for r in records {
        let n = r
            .graph
            .node_count()
            .ok_or_else(|| Error::Fit("records lack a graph size".into()))?;
        by_n.entry(n).or_default().push(r);
    }
    if by_n.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 distinct sizes, got {}",
            by_n.len()
        )));
    }
    let mut points = Vec::new();
    for (n, recs) in &by_n {
        let mut values: Vec<u64> = recs
            .iter()
            .filter(|r| !r.capped)
            .filter_map(|r| r.steps_to_stable())
            .collect();
        values.sort_unstable();
        let capped = recs.len() - values.len();
        if capped * 10 > recs.len() {
            return Err(Error::Fit(format!(
                "size {n}: {capped}/{} runs capped (> 10%)",
                recs.len()
            )));
        }
        if values.len() < 5 {
            return Err(Error::Fit(format!(
                "size {n}: only {} uncapped runs, need 5",
                values.len()
            )));
        }
        points.push(FitPoint {
            n: *n,
            runs: recs.len(),
            capped,
            mean: values.iter().sum::<u64>() as f64 / values.len() as f64,
            p95: nearest_rank(&values, 0.95),
        });
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, p.mean)).collect();
    let (slope, intercept, r2) = ols_loglog(&xy)?;
    Ok(ScalingFit { points, slope, intercept, r2 })
}

pub fn write_jsonl(records: &[RunRecord], writer: &mut dyn Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *writer, r)?;
        writeln!(writer)?;
    }
    Ok(())
}

pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

pub fn write_fit_csv(fit: &ScalingFit, writer: &mut dyn Write) -> Result<()> {
    writeln!(writer, "n,runs,capped,mean_steps,p95_steps")?;
    for p in &fit.points {
        writeln!(writer, "{},{},{},{},{}", p.n, p.runs, p.capped, p.mean, p.p95)?;
    }
    writeln!(writer, "# slope={} intercept={} r2={}", fit.slope, fit.intercept, fit.r2)?;
    Ok(())
}
