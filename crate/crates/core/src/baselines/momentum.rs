//! Random trading with momentum: after a first accepted trade, proposals
//! perturb the last accepted direction with noise whose scale grows with
//! every rejection.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{norm, normalize};
use crate::model::Response;
use crate::negotiation::{Negotiator, Proposal, Stage, TerminalReason, View};

use super::random::{feasible_along, sample_uniform_offer, MAX_RESAMPLES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumState {
    pub d_dev: f64,
    pub d_interval: f64,
    pub d_max: f64,
    pub t_prev: Option<Vec<f64>>,
}

impl MomentumState {
    pub fn new(d_interval: f64, d_max: f64) -> Self {
        Self { d_dev: 0.0, d_interval, d_max, t_prev: None }
    }

    pub fn on_reject(&mut self) {
        self.d_dev = (self.d_dev + self.d_interval).min(self.d_max);
    }

    pub fn on_accept(&mut self, offer: &[f64]) {
        self.d_dev = 0.0;
        self.t_prev = Some(offer.to_vec());
    }
}

impl Default for MomentumState {
    fn default() -> Self {
        Self::new(0.05, 5.0)
    }
}

#[derive(Debug, Clone)]
pub struct MomentumTrader {
    state: MomentumState,
    rng: ChaCha8Rng,
    last_stage: Option<Stage>,
    /// Deviation scale used for each momentum proposal, in order.
    history: Vec<f64>,
}

impl MomentumTrader {
    pub fn new(state: MomentumState, rng: ChaCha8Rng) -> Self {
        Self { state, rng, last_stage: None, history: Vec::new() }
    }

    pub fn state(&self) -> &MomentumState {
        &self.state
    }

    pub fn deviation_history(&self) -> &[f64] {
        &self.history
    }

    fn momentum_offer(&mut self, view: &View<'_>, prev: &[f64]) -> Option<Vec<f64>> {
        let base = normalize(prev).ok()?;
        let tries = if self.state.d_dev == 0.0 { 1 } else { MAX_RESAMPLES };
        for _ in 0..tries {
            let dir: Vec<f64> = base
                .iter()
                .map(|b| b + self.state.d_dev * self.rng.sample::<f64, _>(StandardNormal))
                .collect();
            if norm(&dir) < 1e-12 {
                continue;
            }
            if let Some(t) = feasible_along(&dir, view) {
                if view.benefit_a(&t) >= 0.0 {
                    return Some(t);
                }
            }
        }
        None
    }
}

impl Negotiator for MomentumTrader {
    fn name(&self) -> &'static str {
        "random-momentum"
    }

    fn reset(&mut self, _n: usize) {
        self.state.d_dev = 0.0;
        self.state.t_prev = None;
        self.last_stage = None;
    }

    fn propose(&mut self, view: &View<'_>) -> Proposal {
        if let Some(prev) = self.state.t_prev.clone() {
            if let Some(t) = self.momentum_offer(view, &prev) {
                self.history.push(self.state.d_dev);
                self.last_stage = Some(Stage::Momentum);
                return Proposal::Offer { delta: t, stage: Stage::Momentum };
            }
        }
        self.last_stage = Some(Stage::Random);
        match sample_uniform_offer(view, &mut self.rng) {
            Some(t) => Proposal::Offer { delta: t, stage: Stage::Random },
            None => Proposal::Stop(TerminalReason::NoFeasibleOffer),
        }
    }

    fn observe(&mut self, _view: &View<'_>, offer: &[f64], response: Response) {
        match response {
            Response::Accept => self.state.on_accept(offer),
            Response::Reject => {
                if self.state.t_prev.is_some() {
                    self.state.on_reject();
                }
            }
        }
        self.last_stage = None;
    }
}
