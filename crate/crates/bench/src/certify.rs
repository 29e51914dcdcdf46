//! Post-hoc certificates for finished runs: the weak Pareto grid search and
//! the refinement disjunction, evaluated at the terminal state.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trade_core::theory::{
    epsilon_bounds, pareto_certify, refinement_certificate, smoothness_constant, solve_kappa, EpsilonCase,
    ParetoCertificate, RefinementCertificate, TheoryParams,
};
use trade_core::{Algorithm, NegotiationParams, Transcript, Utility};

use crate::batch::BatchResult;
use crate::error::{BenchError, Result};
use crate::scenario::Scenario;

/// Everything needed to re-check one negotiation offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub scenario: Scenario,
    pub params: NegotiationParams,
    pub transcript: Transcript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsSource {
    /// Norm-case bound with `delta = d`.
    Auto,
    Given,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub algorithm: Algorithm,
    pub scenario_index: u64,
    /// Refinement offers rejected since the last acceptance, at least `n`.
    pub k: usize,
    pub kappa: f64,
    /// Larger smoothness constant of the two utilities.
    pub beta: f64,
    pub eps: f64,
    pub eps_source: EpsSource,
    pub final_s_a: Vec<f64>,
    pub final_s_b: Vec<f64>,
    pub pareto: ParetoCertificate,
    pub refinement: RefinementCertificate,
}

/// Refinement offers rejected since the last acceptance, counted from the end.
pub fn trailing_refinement_rejections(t: &Transcript) -> usize {
    t.events.iter().rev().take_while(|e| !e.accepted()).filter(|e| e.stage.is_refinement()).count()
}

/// Certifies the terminal state of `run` on the unit grid. With `eps` unset
/// the norm-case bound is used, which is loose when `k` is small.
pub fn certify_run(run: &RunRecord, eps: Option<f64>) -> Result<CertifyReport> {
    let sc = &run.scenario;
    let (s_a, s_b) = match run.transcript.events.last() {
        Some(e) => (e.s_a.clone(), e.s_b.clone()),
        None => (sc.s_a.as_slice().to_vec(), sc.s_b.as_slice().to_vec()),
    };
    let n = s_a.len();
    let k = trailing_refinement_rejections(&run.transcript).max(n);
    let kappa = solve_kappa(n, k, 1e-9)?;
    let beta = smoothness_constant(&sc.f_a).max(smoothness_constant(&sc.f_b));
    let d = run.params.offer_norm;
    let (eps, eps_source) = match eps {
        Some(e) if e >= 0.0 => (e, EpsSource::Given),
        Some(e) => return Err(BenchError::Config(format!("eps must be nonnegative, got {e}"))),
        None => {
            let p = TheoryParams { n, k, d, beta, lipschitz: 0.0, delta: d, kappa };
            (epsilon_bounds(&p, EpsilonCase::Norm)?, EpsSource::Auto)
        }
    };
    let pareto = pareto_certify(&s_a, &s_b, &sc.f_a, &sc.f_b, eps, &sc.limits, 1.0)?;
    let refinement = refinement_certificate(k, &sc.f_a.gradient(&s_a), &sc.f_b.gradient(&s_b), beta, d)?;
    Ok(CertifyReport {
        algorithm: run.algorithm,
        scenario_index: sc.index,
        k,
        kappa,
        beta,
        eps,
        eps_source,
        final_s_a: s_a,
        final_s_b: s_b,
        pareto,
        refinement,
    })
}

/// Writes one `runs/<algorithm>-<index>.json` file per run.
pub fn write_runs(result: &BatchResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|source| BenchError::Io { path: runs_dir.clone(), source })?;
    let params = result.config.params();
    let mut paths = Vec::with_capacity(result.runs.len());
    for run in &result.runs {
        let scenario = result
            .scenarios
            .iter()
            .find(|s| s.index == run.scenario_index)
            .ok_or_else(|| BenchError::Config(format!("scenario {} missing", run.scenario_index)))?;
        let record = RunRecord {
            algorithm: run.algorithm,
            scenario: scenario.clone(),
            params: params.clone(),
            transcript: run.transcript.clone(),
        };
        let path = runs_dir.join(format!("{}-{:04}.json", run.algorithm, run.scenario_index));
        let text = serde_json::to_string(&record).map_err(|source| BenchError::Json { path: path.clone(), source })?;
        fs::write(&path, text).map_err(|source| BenchError::Io { path: path.clone(), source })?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn read_run(path: &Path) -> Result<RunRecord> {
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| BenchError::Json { path: path.to_path_buf(), source })
}
