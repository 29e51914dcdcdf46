//! Uniform random trading, with and without re-offering the last accepted
//! trade.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::{norm, scale};
use crate::model::Response;
use crate::negotiation::{Negotiator, Proposal, Stage, TerminalReason, View};
use crate::stcr::stage1_heuristic;

/// Resampling budget before a random proposer gives up.
pub const MAX_RESAMPLES: usize = 50;

/// Uniform direction on the unit sphere.
pub fn sample_direction(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let len = norm(&z);
        if len > 1e-12 {
            return scale(&z, 1.0 / len);
        }
    }
}

/// Largest feasible offer along `dir`, rounded to integers in discrete mode.
pub(crate) fn feasible_along(dir: &[f64], view: &View<'_>) -> Option<Vec<f64>> {
    let t = view.scale_to_feasible(dir, 0.0)?;
    if !view.discrete {
        return Some(t);
    }
    let rounded: Vec<f64> = t.iter().map(|x| x.round()).collect();
    let cand = if view.feasible(&rounded) { rounded } else { t.iter().map(|x| x.trunc()).collect() };
    (norm(&cand) > 0.0 && view.feasible(&cand)).then_some(cand)
}

/// A random offer that does not hurt the offering agent: a uniform
/// direction at the largest feasible magnitude, flipped when it would not
/// help, and resampled when neither sign helps.
pub fn sample_uniform_offer(view: &View<'_>, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    for _ in 0..MAX_RESAMPLES {
        let dir = sample_direction(view.dim(), rng);
        let Some(mut t) = feasible_along(&dir, view) else { continue };
        if view.benefit_a(&t) <= 0.0 {
            match feasible_along(&scale(&dir, -1.0), view) {
                Some(flipped) => t = flipped,
                None => continue,
            }
        }
        if view.benefit_a(&t) >= 0.0 {
            return Some(t);
        }
        tracing::trace!("random offer harmful in both directions; resampling");
    }
    None
}

/// Random trading baseline.
#[derive(Debug, Clone)]
pub struct RandomTrader {
    with_prev_heuristic: bool,
    rng: ChaCha8Rng,
    t_prev: Option<Vec<f64>>,
    heuristic_due: bool,
}

impl RandomTrader {
    pub fn new(with_prev_heuristic: bool, rng: ChaCha8Rng) -> Self {
        Self { with_prev_heuristic, rng, t_prev: None, heuristic_due: false }
    }
}

impl Negotiator for RandomTrader {
    fn name(&self) -> &'static str {
        if self.with_prev_heuristic {
            "random-prev"
        } else {
            "random"
        }
    }

    fn reset(&mut self, _n: usize) {
        self.t_prev = None;
        self.heuristic_due = false;
    }

    fn propose(&mut self, view: &View<'_>) -> Proposal {
        if std::mem::take(&mut self.heuristic_due) && self.with_prev_heuristic {
            if let Some(t) = stage1_heuristic(self.t_prev.as_deref(), view) {
                return Proposal::Offer { delta: t, stage: Stage::Heuristic };
            }
        }
        match sample_uniform_offer(view, &mut self.rng) {
            Some(t) => Proposal::Offer { delta: t, stage: Stage::Random },
            None => Proposal::Stop(TerminalReason::NoFeasibleOffer),
        }
    }

    fn observe(&mut self, _view: &View<'_>, offer: &[f64], response: Response) {
        if response == Response::Accept {
            self.t_prev = Some(offer.to_vec());
            self.heuristic_due = true;
        }
    }
}
