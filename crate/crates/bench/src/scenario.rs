//! Random quadratic trading scenarios with a tunable degree of alignment
//! between the two agents.

use std::hash::{DefaultHasher, Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trade_core::{AgentState, NegotiationParams, OfferLimits, QuadraticUtility, TradeError, Utility};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Continuous,
    Discrete,
}

impl Mode {
    pub fn is_discrete(self) -> bool {
        self == Mode::Discrete
    }
}

impl std::str::FromStr for Mode {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(Mode::Continuous),
            "discrete" => Ok(Mode::Discrete),
            other => Err(BenchError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n: usize,
    /// Mixing constant: 0 gives both agents the same utility, large values
    /// make them independent.
    pub rho: f64,
    pub seed: u64,
    pub initial_per_category: f64,
    pub per_category_cap: f64,
    pub mode: Mode,
}

impl ScenarioConfig {
    pub fn new(n: usize, rho: f64, seed: u64, mode: Mode) -> Self {
        Self { n, rho, seed, initial_per_category: 100.0, per_category_cap: 5.0, mode }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(BenchError::Config(format!("need n >= 2 and finite rho >= 0, got {self:?}")));
        }
        if !(self.initial_per_category >= 0.0) || !(self.per_category_cap > 0.0) {
            return Err(BenchError::Config(format!("bad holdings or cap in {self:?}")));
        }
        Ok(())
    }

    /// `d = cap * sqrt(n)`, i.e. `5 sqrt(n)` at the default cap.
    pub fn offer_norm(&self) -> f64 {
        self.per_category_cap * (self.n as f64).sqrt()
    }

    pub fn limits(&self) -> OfferLimits {
        OfferLimits::per_category(self.n, self.per_category_cap)
    }

    /// Negotiation defaults matching this scenario's caps and mode.
    pub fn params(&self, budget: usize) -> NegotiationParams {
        NegotiationParams {
            offer_budget: budget,
            offer_norm: self.offer_norm(),
            per_category_cap: Some(self.per_category_cap),
            discrete: self.mode.is_discrete(),
            ..NegotiationParams::for_dimension(self.n)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub index: u64,
    pub f_a: QuadraticUtility,
    pub f_b: QuadraticUtility,
    pub s_a: AgentState,
    pub s_b: AgentState,
    pub limits: OfferLimits,
}

impl Scenario {
    /// Fingerprint of every number in the scenario, for checking that
    /// compared algorithms saw identical inputs.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.index.hash(&mut h);
        for f in [&self.f_a, &self.f_b] {
            for row in f.q_rows() {
                row.iter().for_each(|x| x.to_bits().hash(&mut h));
            }
            f.u().iter().for_each(|x| x.to_bits().hash(&mut h));
        }
        for s in [&self.s_a, &self.s_b] {
            s.as_slice().iter().for_each(|x| x.to_bits().hash(&mut h));
        }
        h.finish()
    }
}

/// Generator for scenario `index`: seeded with `base_seed + index`, with
/// stream 0 for the scenario and stream 1 for the negotiator.
pub fn scenario_rng(base_seed: u64, index: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(index));
    rng.set_stream(stream);
    rng
}

/// `-M M^T` with `M` entries uniform on `[0, 1)`, and a linear term with
/// integer entries uniform on `1..=200`.
fn random_concave(n: usize, rng: &mut ChaCha8Rng) -> std::result::Result<QuadraticUtility, TradeError> {
    let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| -(0..n).map(|k| m[i][k] * m[j][k]).sum::<f64>()).collect())
        .collect();
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(1..=200) as f64).collect();
    QuadraticUtility::new(&q, u)
}

pub fn generate_scenario(cfg: &ScenarioConfig, index: u64) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = scenario_rng(cfg.seed, index, 0);
    let own_a = random_concave(cfg.n, &mut rng)?;
    let own_b = random_concave(cfg.n, &mut rng)?;
    let w = cfg.rho + 1.0;
    let f_a = own_a.mix(w, &own_b, 1.0)?;
    let f_b = own_b.mix(w, &own_a, 1.0)?;
    debug_assert_eq!(f_a.dim(), cfg.n);
    Ok(Scenario {
        index,
        f_a,
        f_b,
        s_a: AgentState::uniform(cfg.n, cfg.initial_per_category),
        s_b: AgentState::uniform(cfg.n, cfg.initial_per_category),
        limits: cfg.limits(),
    })
}
