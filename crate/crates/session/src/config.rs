//! Session configuration and the rotation of agent targets across sessions.

use serde::{Deserialize, Serialize};
use trade_core::{Algorithm, NegotiationParams};

use crate::error::{Result, SessionError};

/// The only targets the computer agent may be given.
pub const AGENT_TARGET_MENU: [[f64; 3]; 5] = [
    [66.0, 33.0, 33.0],
    [33.0, 66.0, 33.0],
    [33.0, 33.0, 66.0],
    [66.0, 66.0, 66.0],
    [33.0, 33.0, 33.0],
];

pub const SESSION_ALGORITHMS: [Algorithm; 3] = [Algorithm::Stcr, Algorithm::Gca, Algorithm::RandomPrev];

/// One day; keeps deadline arithmetic far from timestamp overflow.
pub const MAX_LIMIT_SECS: u64 = 86_400;

pub const DEFAULT_CATEGORIES: [&str; 3] = ["apples", "bananas", "oranges"];

/// Fully resolved configuration of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub categories: Vec<String>,
    /// Starting holdings of each side in every category.
    pub initial: f64,
    /// `b_B`, the human's private target.
    pub human_target: Vec<f64>,
    /// `b_A`, one of [`AGENT_TARGET_MENU`].
    pub agent_target: Vec<f64>,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub time_limit_secs: u64,
    pub per_offer_timeout_secs: u64,
    pub offer_budget: usize,
    /// Largest number of units of one category moved by a single offer.
    pub per_category_cap: f64,
}

/// Body of `POST /sessions`. Omitted agent target and algorithm are taken
/// from the rotation; an omitted seed is drawn at random.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    #[serde(default)]
    pub categories: Option<Vec<String>>,
    #[serde(default)]
    pub initial: Option<f64>,
    pub human_target: Vec<f64>,
    #[serde(default)]
    pub agent_target: Option<Vec<f64>>,
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub time_limit_secs: Option<u64>,
    #[serde(default)]
    pub per_offer_timeout_secs: Option<u64>,
    #[serde(default)]
    pub offer_budget: Option<usize>,
    #[serde(default)]
    pub per_category_cap: Option<f64>,
}

impl SessionRequest {
    pub fn new(human_target: Vec<f64>) -> Self {
        Self { human_target, ..Default::default() }
    }

    /// Fills the gaps; `slot` picks the rotation entry, `seed` the fallback seed.
    pub fn resolve(self, slot: u64, seed: u64) -> SessionConfig {
        let (rot_target, rot_algo) = rotation(slot);
        SessionConfig {
            categories: self.categories.unwrap_or_else(|| DEFAULT_CATEGORIES.map(String::from).to_vec()),
            initial: self.initial.unwrap_or(50.0),
            human_target: self.human_target,
            agent_target: self.agent_target.unwrap_or(rot_target),
            algorithm: self.algorithm.unwrap_or(rot_algo),
            seed: self.seed.unwrap_or(seed),
            time_limit_secs: self.time_limit_secs.unwrap_or(600),
            per_offer_timeout_secs: self.per_offer_timeout_secs.unwrap_or(120),
            offer_budget: self.offer_budget.unwrap_or(100),
            per_category_cap: self.per_category_cap.unwrap_or(10.0),
        }
    }
}

/// Round robin over every (menu target, algorithm) pair, menu fastest.
pub fn rotation(slot: u64) -> (Vec<f64>, Algorithm) {
    let menu = AGENT_TARGET_MENU.len() as u64;
    let target = AGENT_TARGET_MENU[(slot % menu) as usize].to_vec();
    let algo = SESSION_ALGORITHMS[((slot / menu) % SESSION_ALGORITHMS.len() as u64) as usize];
    (target, algo)
}

fn invalid(msg: impl Into<String>) -> SessionError {
    SessionError::InvalidConfig(msg.into())
}

impl SessionConfig {
    pub fn dim(&self) -> usize {
        self.categories.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n < 2 {
            return Err(invalid("need at least two categories"));
        }
        if self.human_target.len() != n || self.agent_target.len() != n {
            return Err(invalid(format!("targets must have {n} components")));
        }
        if self.human_target.iter().any(|b| !(0.0..=100.0).contains(b)) {
            return Err(invalid(format!("human target components must lie in [0, 100]: {:?}", self.human_target)));
        }
        if !AGENT_TARGET_MENU.iter().any(|m| m[..] == self.agent_target[..]) {
            return Err(invalid(format!("agent target {:?} is not on the menu", self.agent_target)));
        }
        if !SESSION_ALGORITHMS.contains(&self.algorithm) {
            return Err(invalid(format!("algorithm {} is not offered in live sessions", self.algorithm)));
        }
        if !(self.initial >= 0.0) || !self.initial.is_finite() {
            return Err(invalid("initial holdings must be finite and nonnegative"));
        }
        if self.time_limit_secs == 0 || self.per_offer_timeout_secs == 0 || self.offer_budget == 0 {
            return Err(invalid("time limits and offer budget must be positive"));
        }
        if self.time_limit_secs > MAX_LIMIT_SECS || self.per_offer_timeout_secs > MAX_LIMIT_SECS {
            return Err(invalid(format!("time limits are capped at {MAX_LIMIT_SECS} s")));
        }
        if !(self.per_category_cap >= 1.0) || self.per_category_cap.fract() != 0.0 {
            return Err(invalid("per-category cap must be a positive integer"));
        }
        Ok(())
    }

    /// Integer offers with `d = cap * sqrt(n)`.
    pub fn params(&self) -> NegotiationParams {
        let n = self.dim();
        NegotiationParams {
            offer_budget: self.offer_budget,
            offer_norm: self.per_category_cap * (n as f64).sqrt(),
            per_category_cap: Some(self.per_category_cap),
            discrete: true,
            ..NegotiationParams::for_dimension(n)
        }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![self.initial; self.dim()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SessionConfig {
        SessionRequest::new(vec![60.0, 70.0, 30.0]).resolve(0, 7)
    }

    #[test]
    fn defaults_follow_the_study_setup() {
        let c = cfg();
        assert_eq!(c.initial_state(), vec![50.0; 3]);
        assert_eq!((c.time_limit_secs, c.per_offer_timeout_secs), (600, 120));
        assert_eq!(c.agent_target, vec![66.0, 33.0, 33.0]);
        assert_eq!(c.algorithm, Algorithm::Stcr);
        assert_eq!(c.seed, 7);
        c.validate().unwrap();
        assert!(c.params().discrete);
    }

    #[test]
    fn off_menu_agent_target_is_rejected() {
        let mut c = cfg();
        c.agent_target = vec![10.0, 10.0, 10.0];
        assert!(matches!(c.validate(), Err(SessionError::InvalidConfig(_))));
    }

    #[test]
    fn human_target_range_and_length_are_checked() {
        let mut c = cfg();
        c.human_target = vec![101.0, 0.0, 0.0];
        assert!(c.validate().is_err());
        c.human_target = vec![1.0, 2.0];
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.algorithm = Algorithm::Random;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rotation_visits_every_pair_once_per_cycle() {
        let pairs: Vec<(Vec<f64>, Algorithm)> = (0..15).map(rotation).collect();
        for (i, a) in pairs.iter().enumerate() {
            for b in &pairs[i + 1..] {
                assert_ne!(a, b);
            }
        }
        assert_eq!(rotation(15), rotation(0));
    }

    #[test]
    fn unknown_request_fields_are_refused() {
        let bad = serde_json::from_str::<SessionRequest>(r#"{"human_target":[1,2,3],"colour":"red"}"#);
        assert!(bad.is_err());
    }
}
