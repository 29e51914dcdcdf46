//! Offer/response state machine shared by every algorithm.
//!
//! An [`Engine`] owns the two agents' holdings, asks a [`Negotiator`] for the
//! next offer, and applies the responder's feedback. Negotiators only see the
//! categories that are still active (both agents hold a positive amount); the
//! engine embeds their offers back into the full category space and resets
//! them whenever the active set changes.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, TradeError};
use crate::geometry::{is_finite, GradientCone};
use crate::model::{
    active_categories, apply_trade, is_feasible, max_feasible_scale, raw_benefit, AgentState,
    OfferLimits, QuadraticUtility, Response, Side, TradeOffer, Utility,
};

/// Which part of an algorithm produced an offer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Heuristic,
    Counteroffer,
    Quadrant,
    Orthogonal,
    Bisecting,
    Random,
    Momentum,
    Gca,
}

impl Stage {
    /// Offers whose rejection feeds cone refinement.
    pub fn is_refinement(self) -> bool {
        matches!(self, Stage::Quadrant | Stage::Orthogonal | Stage::Bisecting)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    Budget,
    AngleThreshold,
    NoFeasibleOffer,
    ExhaustedCategories,
    ExternalStop,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Proposal {
    Offer { delta: Vec<f64>, stage: Stage },
    Stop(TerminalReason),
}

/// Answer of the responding agent to a pending offer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Accept,
    Reject,
    /// No answer within the per-offer limit; handled as a rejection.
    Timeout,
    /// Rejection together with a proposed trade, written from the offering
    /// agent's side like every other offer.
    Counter(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    Accept,
    Reject,
    Timeout,
    Counter,
}

impl Feedback {
    pub fn kind(&self) -> ResponseKind {
        match self {
            Feedback::Accept => ResponseKind::Accept,
            Feedback::Reject => ResponseKind::Reject,
            Feedback::Timeout => ResponseKind::Timeout,
            Feedback::Counter(_) => ResponseKind::Counter,
        }
    }

    pub fn as_response(&self) -> Response {
        match self {
            Feedback::Accept => Response::Accept,
            _ => Response::Reject,
        }
    }
}

/// What a negotiator may observe: the offering agent's utility and both
/// agents' holdings, restricted to the active categories.
pub struct View<'a> {
    pub s_a: &'a [f64],
    pub s_b: &'a [f64],
    pub f_a: &'a dyn Utility,
    pub limits: &'a OfferLimits,
    pub discrete: bool,
}

impl View<'_> {
    pub fn dim(&self) -> usize {
        self.s_a.len()
    }

    pub fn grad_a(&self) -> Vec<f64> {
        self.f_a.gradient(self.s_a)
    }

    pub fn benefit_a(&self, t: &[f64]) -> f64 {
        raw_benefit(self.f_a, self.s_a, t, Side::Offering)
    }

    pub fn feasible(&self, t: &[f64]) -> bool {
        is_feasible(self.s_a, self.s_b, t, self.limits)
    }

    /// Largest feasible multiple of the unit vector along `dir`, provided its
    /// magnitude is at least `min_fraction` of the norm cap.
    pub fn scale_to_feasible(&self, dir: &[f64], min_fraction: f64) -> Option<Vec<f64>> {
        let len = crate::geometry::norm(dir);
        if len == 0.0 {
            return None;
        }
        let unit: Vec<f64> = dir.iter().map(|x| x / len).collect();
        let s = max_feasible_scale(self.s_a, self.s_b, &unit, self.limits);
        let floor = min_fraction * self.limits.norm_cap;
        if !(s >= floor) || s <= 0.0 {
            return None;
        }
        Some(unit.iter().map(|x| x * s).collect())
    }
}

/// Algorithm-internal milestones, logged next to the offer events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgoEvent {
    QuadrantInitialized { tau: Vec<f64>, theta: f64 },
    ConeRefined { n: usize, theta_before: f64, theta_after: f64, tau: Vec<f64> },
    WarmStart { theta_before: f64, theta_after: f64, reinit: bool },
    ConeAdopted { theta_before: f64, theta_after: f64, corners: usize, radius: f64 },
    Expanded { theta_before: f64, theta_after: f64 },
    Note { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedAlgoEvent {
    /// Number of offers emitted before the event.
    pub step: usize,
    pub active: Vec<usize>,
    #[serde(flatten)]
    pub event: AlgoEvent,
}

pub trait Negotiator: Send {
    fn name(&self) -> &'static str;

    /// Forget everything tied to the previous coordinate system.
    fn reset(&mut self, n: usize);

    fn propose(&mut self, view: &View<'_>) -> Proposal;

    /// Called with the pre-trade view after the responder answers `offer`.
    fn observe(&mut self, view: &View<'_>, offer: &[f64], response: Response);

    /// Structured counteroffer, delivered after `observe` recorded the
    /// rejection of the pending offer.
    fn counteroffer(&mut self, _view: &View<'_>, _counter: &[f64]) {}

    fn cone(&self) -> Option<&GradientCone> {
        None
    }

    fn take_events(&mut self) -> Vec<AlgoEvent> {
        Vec::new()
    }
}

/// Source of accept/reject decisions for simulated negotiations.
pub trait Responder {
    fn respond(&mut self, s_b: &[f64], offer: &[f64]) -> Feedback;
}

/// Accepts exactly the offers that do not lower its own utility.
#[derive(Debug, Clone)]
pub struct GreedyResponder<U> {
    pub utility: U,
}

impl<U: Utility> Responder for GreedyResponder<U> {
    fn respond(&mut self, s_b: &[f64], offer: &[f64]) -> Feedback {
        match crate::model::respond(&self.utility, s_b, offer) {
            Response::Accept => Feedback::Accept,
            Response::Reject => Feedback::Reject,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationParams {
    pub offer_budget: usize,
    pub angle_threshold: f64,
    pub offer_norm: f64,
    pub per_category_cap: Option<f64>,
    pub cone_expansion_rate: f64,
    pub use_prev_trade_heuristic: bool,
    pub use_cone_warm_start: bool,
    pub discrete: bool,
}

impl NegotiationParams {
    /// Defaults for `n` categories: `d = 5 sqrt(n)`, at most 5 units per
    /// category, 100 offers.
    pub fn for_dimension(n: usize) -> Self {
        Self {
            offer_budget: 100,
            angle_threshold: 1e-5,
            offer_norm: 5.0 * (n as f64).sqrt(),
            per_category_cap: Some(5.0),
            cone_expansion_rate: 0.02,
            use_prev_trade_heuristic: true,
            use_cone_warm_start: true,
            discrete: false,
        }
    }

    pub fn limits(&self) -> OfferLimits {
        OfferLimits { norm_cap: self.offer_norm, per_category_cap: self.per_category_cap }
    }

    pub fn validate(&self) -> Result<()> {
        if self.offer_budget == 0
            || !(self.angle_threshold > 0.0)
            || !(self.offer_norm > 0.0)
            || !(self.cone_expansion_rate >= 0.0)
            || self.per_category_cap.is_some_and(|c| !(c > 0.0))
        {
            return Err(TradeError::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingOffer {
    pub token: u64,
    pub offer: TradeOffer,
    pub stage: Stage,
}

/// One offer and its outcome. `S_A`/`S_B` hold the post-response states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub step: usize,
    pub token: u64,
    pub stage: Stage,
    pub offer: Vec<f64>,
    pub response: ResponseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counter: Option<Vec<f64>>,
    pub pre_s_a: Vec<f64>,
    pub pre_s_b: Vec<f64>,
    #[serde(rename = "S_A")]
    pub s_a: Vec<f64>,
    #[serde(rename = "S_B")]
    pub s_b: Vec<f64>,
    pub offering_benefit: f64,
    pub responding_benefit: f64,
    pub theta: Option<f64>,
    pub tau: Option<Vec<f64>>,
    pub active: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl TranscriptEvent {
    pub fn accepted(&self) -> bool {
        self.response == ResponseKind::Accept
    }

    /// Benefits realized by this event: zero unless the offer was accepted.
    pub fn realized(&self) -> (f64, f64) {
        if self.accepted() {
            (self.offering_benefit, self.responding_benefit)
        } else {
            (0.0, 0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenefitKind {
    Societal,
    Offering,
    Responding,
}

impl BenefitKind {
    pub const ALL: [BenefitKind; 3] = [BenefitKind::Societal, BenefitKind::Offering, BenefitKind::Responding];

    pub fn pick(self, offering: f64, responding: f64) -> f64 {
        match self {
            BenefitKind::Societal => offering + responding,
            BenefitKind::Offering => offering,
            BenefitKind::Responding => responding,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub algorithm: String,
    pub events: Vec<TranscriptEvent>,
    pub algo_events: Vec<LoggedAlgoEvent>,
    pub terminal: Option<TerminalReason>,
}

impl Transcript {
    pub fn accepted(&self) -> impl Iterator<Item = &TranscriptEvent> {
        self.events.iter().filter(|e| e.accepted())
    }

    /// Cumulative realized benefit after each offer.
    pub fn cumulative(&self, kind: BenefitKind) -> Vec<f64> {
        let mut total = 0.0;
        self.events
            .iter()
            .map(|e| {
                let (o, r) = e.realized();
                total += kind.pick(o, r);
                total
            })
            .collect()
    }

    pub fn total(&self, kind: BenefitKind) -> f64 {
        self.cumulative(kind).last().copied().unwrap_or(0.0)
    }

    /// One JSON object per offer event.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let mut v = serde_json::to_value(e).expect("transcript events serialize");
            v["algorithm"] = serde_json::Value::String(self.algorithm.clone());
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }
}

/// Drives one negotiation, one offer at a time.
pub struct Engine {
    params: NegotiationParams,
    limits: OfferLimits,
    f_a: QuadraticUtility,
    f_b: QuadraticUtility,
    s_a: AgentState,
    s_b: AgentState,
    negotiator: Box<dyn Negotiator>,
    active: Vec<usize>,
    started: bool,
    pending: Option<PendingOffer>,
    next_token: u64,
    offers_made: usize,
    transcript: Transcript,
}

impl Engine {
    pub fn new(
        params: NegotiationParams,
        f_a: QuadraticUtility,
        f_b: QuadraticUtility,
        s_a: AgentState,
        s_b: AgentState,
        negotiator: Box<dyn Negotiator>,
    ) -> Result<Self> {
        params.validate()?;
        let n = s_a.dim();
        check_dim(n, s_b.dim())?;
        check_dim(n, f_a.dim())?;
        check_dim(n, f_b.dim())?;
        let transcript = Transcript { algorithm: negotiator.name().to_string(), ..Default::default() };
        Ok(Self {
            limits: params.limits(),
            params,
            f_a,
            f_b,
            s_a,
            s_b,
            negotiator,
            active: Vec::new(),
            started: false,
            pending: None,
            next_token: 1,
            offers_made: 0,
            transcript,
        })
    }

    pub fn params(&self) -> &NegotiationParams {
        &self.params
    }

    pub fn state_a(&self) -> &AgentState {
        &self.s_a
    }

    pub fn state_b(&self) -> &AgentState {
        &self.s_b
    }

    pub fn utility_a(&self) -> &QuadraticUtility {
        &self.f_a
    }

    pub fn utility_b(&self) -> &QuadraticUtility {
        &self.f_b
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    pub fn offers_made(&self) -> usize {
        self.offers_made
    }

    pub fn pending(&self) -> Option<&PendingOffer> {
        self.pending.as_ref()
    }

    pub fn terminal(&self) -> Option<TerminalReason> {
        self.transcript.terminal
    }

    pub fn is_terminal(&self) -> bool {
        self.transcript.terminal.is_some()
    }

    pub fn negotiator(&self) -> &dyn Negotiator {
        self.negotiator.as_ref()
    }

    /// Ends the negotiation; any pending offer is withdrawn.
    pub fn stop(&mut self, reason: TerminalReason) {
        if self.transcript.terminal.is_none() {
            self.pending = None;
            self.transcript.terminal = Some(reason);
        }
    }

    fn reduced(&self) -> (Vec<f64>, Vec<f64>, QuadraticUtility) {
        let sa: Vec<f64> = self.active.iter().map(|&i| self.s_a.as_slice()[i]).collect();
        let sb: Vec<f64> = self.active.iter().map(|&i| self.s_b.as_slice()[i]).collect();
        let f = self.f_a.restrict(&self.active, self.s_a.as_slice());
        (sa, sb, f)
    }

    fn embed(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.s_a.dim()];
        for (k, &i) in self.active.iter().enumerate() {
            full[i] = reduced[k];
        }
        full
    }

    fn collect_algo_events(&mut self) {
        for event in self.negotiator.take_events() {
            self.transcript.algo_events.push(LoggedAlgoEvent {
                step: self.offers_made,
                active: self.active.clone(),
                event,
            });
        }
    }

    /// Current pending offer, asking the negotiator for one if needed.
    /// Returns `None` once the negotiation has terminated.
    pub fn next_offer(&mut self) -> Option<PendingOffer> {
        if self.is_terminal() {
            return None;
        }
        if let Some(p) = &self.pending {
            return Some(p.clone());
        }
        if self.offers_made >= self.params.offer_budget {
            self.stop(TerminalReason::Budget);
            return None;
        }
        let active = active_categories(self.s_a.as_slice(), self.s_b.as_slice());
        if active != self.active || !self.started {
            self.started = true;
            if active.len() < 2 {
                self.active = active;
                self.stop(TerminalReason::ExhaustedCategories);
                return None;
            }
            if !self.active.is_empty() {
                tracing::debug!(?active, "active categories changed; resetting negotiator");
            }
            self.active = active;
            self.negotiator.reset(self.active.len());
        }
        let (sa, sb, f) = self.reduced();
        let view = View { s_a: &sa, s_b: &sb, f_a: &f, limits: &self.limits, discrete: self.params.discrete };
        let proposal = self.negotiator.propose(&view);
        self.collect_algo_events();
        match proposal {
            Proposal::Stop(reason) => {
                self.stop(reason);
                None
            }
            Proposal::Offer { delta, stage } => {
                let limits = if stage == Stage::Counteroffer { OfferLimits::unbounded() } else { self.limits };
                let valid = delta.len() == sa.len()
                    && is_finite(&delta)
                    && delta.iter().any(|x| *x != 0.0)
                    && is_feasible(&sa, &sb, &delta, &limits)
                    && (!self.params.discrete || delta.iter().all(|x| x.fract() == 0.0));
                if !valid {
                    tracing::warn!(?delta, ?stage, "negotiator proposed an invalid offer");
                    self.transcript.algo_events.push(LoggedAlgoEvent {
                        step: self.offers_made,
                        active: self.active.clone(),
                        event: AlgoEvent::Note { message: format!("invalid {stage:?} offer {delta:?}") },
                    });
                    self.stop(TerminalReason::NoFeasibleOffer);
                    return None;
                }
                let full = self.embed(&delta);
                let offer = TradeOffer { delta: full, discrete: self.params.discrete };
                let pending = PendingOffer { token: self.next_token, offer, stage };
                self.next_token += 1;
                self.offers_made += 1;
                self.pending = Some(pending.clone());
                Some(pending)
            }
        }
    }

    /// Applies the responder's answer to the pending offer.
    pub fn respond(&mut self, feedback: Feedback) -> Result<&TranscriptEvent> {
        self.respond_tagged(feedback, None)
    }

    pub fn respond_tagged(&mut self, feedback: Feedback, tag: Option<String>) -> Result<&TranscriptEvent> {
        let pending = self
            .pending
            .take()
            .ok_or_else(|| TradeError::Domain("no pending offer".into()))?;
        if let Feedback::Counter(c) = &feedback {
            if let Err(e) = check_dim(self.s_a.dim(), c.len()) {
                self.pending = Some(pending);
                return Err(e);
            }
        }
        let (sa, sb, f) = self.reduced();
        let reduced_offer: Vec<f64> = self.active.iter().map(|&i| pending.offer.delta[i]).collect();
        let pre_a = self.s_a.as_slice().to_vec();
        let pre_b = self.s_b.as_slice().to_vec();
        let offering = raw_benefit(&self.f_a, &pre_a, &pending.offer.delta, Side::Offering);
        let responding = raw_benefit(&self.f_b, &pre_b, &pending.offer.delta, Side::Responding);
        {
            let view = View { s_a: &sa, s_b: &sb, f_a: &f, limits: &self.limits, discrete: self.params.discrete };
            self.negotiator.observe(&view, &reduced_offer, feedback.as_response());
            if let Feedback::Counter(c) = &feedback {
                let dropped = (0..c.len()).any(|i| !self.active.contains(&i) && c[i] != 0.0);
                let reduced: Vec<f64> = self.active.iter().map(|&i| c[i]).collect();
                if dropped {
                    tracing::warn!(?c, "counteroffer touches inactive categories; those components are ignored");
                }
                if reduced.iter().all(|x| *x == 0.0) || !is_finite(&reduced) {
                    tracing::warn!("ignoring empty counteroffer");
                } else {
                    self.negotiator.counteroffer(&view, &reduced);
                }
            }
        }
        if feedback == Feedback::Accept {
            let (a, b) = apply_trade(&self.s_a, &self.s_b, &pending.offer)?;
            self.s_a = a;
            self.s_b = b;
        }
        self.collect_algo_events();
        let cone = self.negotiator.cone();
        let event = TranscriptEvent {
            step: self.transcript.events.len(),
            token: pending.token,
            stage: pending.stage,
            offer: pending.offer.delta.clone(),
            response: feedback.kind(),
            counter: match &feedback {
                Feedback::Counter(c) => Some(c.clone()),
                _ => None,
            },
            pre_s_a: pre_a,
            pre_s_b: pre_b,
            s_a: self.s_a.as_slice().to_vec(),
            s_b: self.s_b.as_slice().to_vec(),
            offering_benefit: offering,
            responding_benefit: responding,
            theta: cone.map(|c| c.angle()),
            tau: cone.map(|c| c.direction().to_vec()),
            active: self.active.clone(),
            tag,
        };
        self.transcript.events.push(event);
        Ok(self.transcript.events.last().expect("just pushed"))
    }
}

/// Runs a simulated negotiation to termination.
pub fn run_negotiation(engine: &mut Engine, responder: &mut dyn Responder) -> Result<()> {
    while let Some(p) = engine.next_offer() {
        let fb = responder.respond(engine.state_b().as_slice(), &p.offer.delta);
        engine.respond(fb)?;
    }
    Ok(())
}
