//! Runs every (algorithm, scenario) pair and averages the cumulative
//! benefit curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use trade_core::{
    build_negotiator, run_negotiation, Algorithm, AlgorithmOptions, BenefitKind, Engine, GreedyResponder,
    NegotiationParams, Transcript,
};

use crate::error::{BenchError, Result};
use crate::scenario::{generate_scenario, scenario_rng, Scenario, ScenarioConfig};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "TRADE_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub scenario: ScenarioConfig,
    pub n_scenarios: usize,
    /// Offers per negotiation; also the curve length.
    pub budget: usize,
    pub algorithms: Vec<Algorithm>,
    pub options: AlgorithmOptions,
    pub angle_threshold: f64,
    pub use_cone_warm_start: bool,
}

impl BatchConfig {
    pub fn new(scenario: ScenarioConfig, n_scenarios: usize, budget: usize, algorithms: Vec<Algorithm>) -> Self {
        let defaults = NegotiationParams::for_dimension(scenario.n);
        Self {
            scenario,
            n_scenarios,
            budget,
            algorithms,
            options: AlgorithmOptions::default(),
            angle_threshold: defaults.angle_threshold,
            use_cone_warm_start: defaults.use_cone_warm_start,
        }
    }

    pub fn params(&self) -> NegotiationParams {
        NegotiationParams {
            angle_threshold: self.angle_threshold,
            use_cone_warm_start: self.use_cone_warm_start,
            ..self.scenario.params(self.budget)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.params().validate()?;
        if self.algorithms.is_empty() {
            return Err(BenchError::Config("no algorithms selected".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// 1-based.
    pub offer_index: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub algorithm: Algorithm,
    pub kind: BenefitKind,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone)]
pub struct Run {
    pub algorithm: Algorithm,
    pub scenario_index: u64,
    pub scenario_fingerprint: u64,
    pub transcript: Transcript,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub config: BatchConfig,
    pub series: Vec<CurveSeries>,
    /// Ordered by algorithm, then scenario index.
    pub runs: Vec<Run>,
    /// Ordered by index.
    pub scenarios: Vec<Scenario>,
}

impl BatchResult {
    pub fn series(&self, algorithm: Algorithm, kind: BenefitKind) -> Option<&CurveSeries> {
        self.series.iter().find(|s| s.algorithm == algorithm && s.kind == kind)
    }

    /// Mean cumulative benefit at a 1-based offer index.
    pub fn mean_at(&self, algorithm: Algorithm, kind: BenefitKind, offer_index: usize) -> Option<f64> {
        self.series(algorithm, kind)?.points.get(offer_index.checked_sub(1)?).map(|p| p.mean)
    }
}

/// One negotiation of `algo` on `scenario` against a greedy responder.
pub fn run_scenario(algo: Algorithm, scenario: &Scenario, cfg: &BatchConfig) -> Result<Transcript> {
    let params = cfg.params();
    let rng = scenario_rng(cfg.scenario.seed, scenario.index, 1);
    let negotiator = build_negotiator(algo, &params, &cfg.options, rng);
    let mut engine = Engine::new(
        params,
        scenario.f_a.clone(),
        scenario.f_b.clone(),
        scenario.s_a.clone(),
        scenario.s_b.clone(),
        negotiator,
    )?;
    let mut responder = GreedyResponder { utility: scenario.f_b.clone() };
    run_negotiation(&mut engine, &mut responder)?;
    Ok(engine.into_transcript())
}

/// Cumulative benefit after offers `1..=m`; a negotiation that ended early
/// keeps its final value.
pub fn padded_cumulative(t: &Transcript, kind: BenefitKind, m: usize) -> Vec<f64> {
    let mut c = t.cumulative(kind);
    c.truncate(m);
    let last = c.last().copied().unwrap_or(0.0);
    c.resize(m, last);
    c
}

/// Pool sized by `TRADE_THREADS` when set, else rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| BenchError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| BenchError::Config(e.to_string()))
}

/// Divides each kind's means by the largest mean of that kind across all
/// series. Kinds whose largest mean is not positive are left unscaled.
pub fn normalize(series: &mut [CurveSeries]) {
    for kind in BenefitKind::ALL {
        let peak = series
            .iter()
            .filter(|s| s.kind == kind)
            .flat_map(|s| s.points.iter().map(|p| p.mean))
            .fold(f64::NEG_INFINITY, f64::max);
        let denom = if peak > 0.0 { peak } else { 1.0 };
        for s in series.iter_mut().filter(|s| s.kind == kind) {
            for p in &mut s.points {
                p.normalized = p.mean / denom;
            }
        }
    }
}

fn aggregate(algorithm: Algorithm, kind: BenefitKind, runs: &[&Run], m: usize) -> CurveSeries {
    let curves: Vec<Vec<f64>> = runs.iter().map(|r| padded_cumulative(&r.transcript, kind, m)).collect();
    let count = curves.len().max(1) as f64;
    let points = (0..m)
        .map(|i| {
            let mean = curves.iter().map(|c| c[i]).sum::<f64>() / count;
            let var = curves.iter().map(|c| (c[i] - mean).powi(2)).sum::<f64>() / count;
            CurvePoint { offer_index: i + 1, mean, std_dev: var.sqrt(), normalized: mean }
        })
        .collect();
    CurveSeries { algorithm, kind, points }
}

pub fn run_batch(cfg: &BatchConfig) -> Result<BatchResult> {
    cfg.validate()?;
    let scenarios: Vec<Scenario> =
        (0..cfg.n_scenarios as u64).map(|i| generate_scenario(&cfg.scenario, i)).collect::<Result<_>>()?;
    let jobs: Vec<(Algorithm, &Scenario)> =
        cfg.algorithms.iter().flat_map(|&a| scenarios.iter().map(move |s| (a, s))).collect();
    let pool = thread_pool()?;
    let runs: Vec<Run> = pool.install(|| {
        jobs.par_iter()
            .map(|&(algorithm, s)| {
                Ok(Run {
                    algorithm,
                    scenario_index: s.index,
                    scenario_fingerprint: s.fingerprint(),
                    transcript: run_scenario(algorithm, s, cfg)?,
                })
            })
            .collect::<Result<Vec<Run>>>()
    })?;
    let mut series = Vec::new();
    for &algorithm in &cfg.algorithms {
        let mine: Vec<&Run> = runs.iter().filter(|r| r.algorithm == algorithm).collect();
        for kind in BenefitKind::ALL {
            series.push(aggregate(algorithm, kind, &mine, cfg.budget));
        }
    }
    normalize(&mut series);
    Ok(BatchResult { config: cfg.clone(), series, runs, scenarios })
}
