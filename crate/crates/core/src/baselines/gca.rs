//! Greedy concession: candidate integer offers sorted by the offering
//! agent's expected benefit under a belief over linear responder weights.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use itertools::Itertools;

use crate::geometry::{dot, norm};
use crate::model::{Response, Utility};
use crate::negotiation::{Negotiator, Proposal, Stage, TerminalReason, View};

use super::random::sample_direction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcaConfig {
    pub n_weights: usize,
    pub shrink: f64,
    pub update_interval: usize,
    pub softmax_temperature: f64,
}

impl Default for GcaConfig {
    fn default() -> Self {
        Self { n_weights: 100, shrink: 0.1, update_interval: 10, softmax_temperature: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub weights: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
    pub shrink: f64,
    pub update_interval: usize,
    pub softmax_temperature: f64,
}

impl BeliefState {
    /// Uniform belief over `cfg.n_weights` directions drawn uniformly from
    /// the sphere.
    pub fn sample(n: usize, cfg: &GcaConfig, rng: &mut ChaCha8Rng) -> Self {
        let weights = (0..cfg.n_weights).map(|_| sample_direction(n, rng)).collect();
        Self::with_weights(weights, cfg)
    }

    pub fn with_weights(weights: Vec<Vec<f64>>, cfg: &GcaConfig) -> Self {
        let k = weights.len();
        Self {
            weights,
            probs: vec![1.0 / k as f64; k],
            shrink: cfg.shrink,
            update_interval: cfg.update_interval,
            softmax_temperature: cfg.softmax_temperature,
        }
    }

    /// Belief mass on weights under which `offer` would be accepted.
    pub fn p_accept(&self, offer: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&self.probs)
            .filter(|(w, _)| -dot(offer, w) > 0.0)
            .map(|(_, p)| p)
            .sum()
    }

    fn normalize(&mut self) {
        let total: f64 = self.probs.iter().sum();
        if !(total > 1e-300) || !total.is_finite() {
            tracing::warn!("belief probabilities collapsed; resetting to uniform");
            let k = self.probs.len();
            self.probs = vec![1.0 / k as f64; k];
            return;
        }
        for p in &mut self.probs {
            *p /= total;
        }
    }
}

/// Candidates with their expected-benefit score, highest first; ties in
/// lexicographic offer order.
pub fn gca_expected_sort(
    s_a: &[f64],
    f_a: &dyn Utility,
    beliefs: &BeliefState,
    candidates: &[Vec<f64>],
) -> Vec<(Vec<f64>, f64)> {
    let base = f_a.evaluate(s_a);
    let mut scored: Vec<(Vec<f64>, f64)> = candidates
        .iter()
        .map(|t| {
            let post: Vec<f64> = s_a.iter().zip(t).map(|(s, x)| s + x).collect();
            let gain = f_a.evaluate(&post) - base;
            (t.clone(), beliefs.p_accept(t) * gain)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.partial_cmp(&b.0).expect("finite offers")));
    scored
}

/// Scales down the weights that predicted acceptance of a rejected offer.
pub fn gca_belief_update(beliefs: &mut BeliefState, rejected: &[Vec<f64>]) {
    for t in rejected {
        for (w, p) in beliefs.weights.iter().zip(beliefs.probs.iter_mut()) {
            if -dot(t, w) > 0.0 {
                *p *= beliefs.shrink;
            }
        }
    }
    beliefs.normalize();
}

/// Softmax of the probabilities at the belief's temperature.
pub fn gca_softmax_smooth(beliefs: &mut BeliefState) {
    let temp = beliefs.softmax_temperature;
    let max = beliefs.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for p in &mut beliefs.probs {
        *p = ((*p - max) / temp).exp();
    }
    beliefs.normalize();
}

/// Every nonzero feasible integer offer within the caps.
pub fn enumerate_candidates(view: &View<'_>) -> Vec<Vec<f64>> {
    let c = view.limits.integer_box();
    (0..view.dim())
        .map(|_| -c..=c)
        .multi_cartesian_product()
        .map(|v| v.into_iter().map(|x| x as f64).collect::<Vec<f64>>())
        .filter(|t| norm(t) > 0.0 && view.feasible(t))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Gca {
    cfg: GcaConfig,
    rng: ChaCha8Rng,
    beliefs: Option<BeliefState>,
    pending_rejections: Vec<Vec<f64>>,
    order: Vec<(Vec<f64>, f64)>,
    cursor: usize,
    dirty: bool,
    epoch: usize,
    /// `(sort epoch, score)` of every emitted offer.
    emitted: Vec<(usize, f64)>,
}

impl Gca {
    pub fn new(cfg: GcaConfig, rng: ChaCha8Rng) -> Self {
        Self {
            cfg,
            rng,
            beliefs: None,
            pending_rejections: Vec::new(),
            order: Vec::new(),
            cursor: 0,
            dirty: true,
            epoch: 0,
            emitted: Vec::new(),
        }
    }

    pub fn beliefs(&self) -> Option<&BeliefState> {
        self.beliefs.as_ref()
    }

    pub fn emitted_scores(&self) -> &[(usize, f64)] {
        &self.emitted
    }
}

impl Negotiator for Gca {
    fn name(&self) -> &'static str {
        "gca"
    }

    fn reset(&mut self, n: usize) {
        self.beliefs = Some(BeliefState::sample(n, &self.cfg, &mut self.rng));
        self.pending_rejections.clear();
        self.dirty = true;
    }

    fn propose(&mut self, view: &View<'_>) -> Proposal {
        let Some(beliefs) = &self.beliefs else {
            return Proposal::Stop(TerminalReason::NoFeasibleOffer);
        };
        if self.dirty {
            let candidates = enumerate_candidates(view);
            self.order = gca_expected_sort(view.s_a, view.f_a, beliefs, &candidates);
            self.cursor = 0;
            self.dirty = false;
            self.epoch += 1;
        }
        while self.cursor < self.order.len() {
            let (t, score) = &self.order[self.cursor];
            self.cursor += 1;
            if view.benefit_a(t) < 0.0 {
                continue;
            }
            self.emitted.push((self.epoch, *score));
            return Proposal::Offer { delta: t.clone(), stage: Stage::Gca };
        }
        Proposal::Stop(TerminalReason::NoFeasibleOffer)
    }

    fn observe(&mut self, _view: &View<'_>, offer: &[f64], response: Response) {
        let Some(beliefs) = self.beliefs.as_mut() else { return };
        match response {
            Response::Reject => {
                self.pending_rejections.push(offer.to_vec());
                if self.pending_rejections.len() >= self.cfg.update_interval {
                    gca_belief_update(beliefs, &self.pending_rejections);
                    self.pending_rejections.clear();
                    self.dirty = true;
                }
            }
            Response::Accept => {
                gca_softmax_smooth(beliefs);
                self.dirty = true;
            }
        }
    }
}
