//! One live negotiation against a human responder. Every state change goes
//! through [`Session::apply`] on a [`Record`], so replaying a session's log
//! rebuilds exactly the state that wrote it.

use chrono::{DateTime, Duration, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trade_core::algorithms::{build_negotiator, AlgorithmOptions};
use trade_core::negotiation::{AlgoEvent, ResponseKind};
use trade_core::{
    AgentState, Algorithm, Engine, Feedback, PendingOffer, QuadraticUtility, Stage, TerminalReason,
    TranscriptEvent,
};
use uuid::Uuid;

use crate::config::SessionConfig;
use crate::error::{Result, SessionError};
use crate::score::{alignment_angle, alignment_bin, score, AlignmentBin, Score};
use crate::store::{EndCause, Record};

/// Tag stored on responses produced by the per-offer timeout.
pub const TIMEOUT_TAG: &str = "timeout";

/// An offer as the human sees it: what each side receives, in whole units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferView {
    pub token: u64,
    pub stage: Stage,
    /// Signed change of the agent's holdings; the human's change is the negation.
    pub offer: Vec<i64>,
    pub agent_receives: Vec<i64>,
    pub you_receive: Vec<i64>,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
}

impl OfferView {
    pub fn from_offer(token: u64, stage: Stage, offer: &[f64], issued_at: DateTime<Utc>, expires_at: DateTime<Utc>) -> Self {
        let offer: Vec<i64> = offer.iter().map(|x| *x as i64).collect();
        Self {
            token,
            stage,
            agent_receives: offer.iter().map(|x| (*x).max(0)).collect(),
            you_receive: offer.iter().map(|x| (-*x).max(0)).collect(),
            offer,
            issued_at,
            expires_at,
        }
    }

    /// Inverse of the receive split.
    pub fn to_offer(&self) -> Vec<i64> {
        self.agent_receives.iter().zip(&self.you_receive).map(|(a, y)| a - y).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ending {
    pub at: DateTime<Utc>,
    pub cause: EndCause,
    pub reason: TerminalReason,
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryItem {
    pub step: usize,
    pub token: u64,
    pub stage: Stage,
    pub offer: Vec<f64>,
    pub response: ResponseKind,
    pub counter: Option<Vec<f64>>,
    pub tag: Option<String>,
    pub agent_allocation: Vec<f64>,
    pub your_allocation: Vec<f64>,
    pub at: DateTime<Utc>,
}

/// State returned by `GET /sessions/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub id: Uuid,
    pub created_at: DateTime<Utc>,
    pub config: SessionConfig,
    pub agent_allocation: Vec<f64>,
    pub your_allocation: Vec<f64>,
    pub offer: Option<OfferView>,
    pub offers_made: usize,
    pub history: Vec<HistoryItem>,
    pub time_remaining_secs: f64,
    pub ending: Option<Ending>,
    pub alignment_degrees: Option<f64>,
    pub alignment: Option<AlignmentBin>,
}

/// Result of one accepted `respond` call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespondOutcome {
    pub event: HistoryItem,
    /// Algorithm remarks raised while handling the response, such as a
    /// counteroffer that does not help the agent.
    pub notes: Vec<String>,
    pub offer: Option<OfferView>,
    pub terminal: Option<Ending>,
    /// Final score once the session has ended.
    pub score: Option<Score>,
}

pub struct Session {
    id: Uuid,
    config: SessionConfig,
    engine: Engine,
    created_at: DateTime<Utc>,
    /// Issue time of the pending offer.
    offered_at: Option<DateTime<Utc>>,
    /// Response time of each transcript event.
    responded_at: Vec<DateTime<Utc>>,
    ending: Option<Ending>,
    outbox: Vec<Record>,
}

/// Limits are validated to at most a day, so this cannot overflow.
fn seconds(s: u64) -> Duration {
    Duration::seconds(s as i64)
}

impl Session {
    fn build(id: Uuid, config: SessionConfig, at: DateTime<Utc>) -> Result<Self> {
        config.validate()?;
        let params = config.params();
        let start = AgentState::new(config.initial_state())?;
        let negotiator = build_negotiator(
            config.algorithm,
            &params,
            &AlgorithmOptions::default(),
            ChaCha8Rng::seed_from_u64(config.seed),
        );
        let engine = Engine::new(
            params,
            QuadraticUtility::target(&config.agent_target),
            QuadraticUtility::target(&config.human_target),
            start.clone(),
            start,
            negotiator,
        )?;
        Ok(Self {
            id,
            config,
            engine,
            created_at: at,
            offered_at: None,
            responded_at: Vec::new(),
            ending: None,
            outbox: Vec::new(),
        })
    }

    /// New session with its first offer already issued.
    pub fn create(id: Uuid, config: SessionConfig, now: DateTime<Utc>) -> Result<Self> {
        let mut s = Self::build(id, config.clone(), now)?;
        s.outbox.push(Record::Created { at: now, id, config });
        s.issue(now)?;
        Ok(s)
    }

    /// Rebuilds a session from its log. Any record that does not reproduce
    /// is reported as corruption at its line.
    pub fn replay(path: &std::path::Path, records: &[Record]) -> Result<Self> {
        let corrupt = |line: usize, message: String| SessionError::Corrupt { path: path.to_path_buf(), line, message };
        let Some(Record::Created { at, id, config }) = records.first() else {
            return Err(corrupt(1, "log must start with a created record".into()));
        };
        let mut s = Self::build(*id, config.clone(), *at).map_err(|e| corrupt(1, e.to_string()))?;
        for (i, r) in records.iter().enumerate().skip(1) {
            s.apply(r).map_err(|e| corrupt(i + 1, e.to_string()))?;
        }
        Ok(s)
    }

    pub fn id(&self) -> Uuid {
        self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn ending(&self) -> Option<&Ending> {
        self.ending.as_ref()
    }

    pub fn response_times(&self) -> &[DateTime<Utc>] {
        &self.responded_at
    }

    /// Records produced since the last call, in order.
    pub fn take_outbox(&mut self) -> Vec<Record> {
        std::mem::take(&mut self.outbox)
    }

    fn deadline(&self) -> DateTime<Utc> {
        self.created_at + seconds(self.config.time_limit_secs)
    }

    fn expiry(&self) -> Option<DateTime<Utc>> {
        self.offered_at.map(|t| t + seconds(self.config.per_offer_timeout_secs))
    }

    fn current_score(&self) -> Score {
        score(&self.config.human_target, &self.config.initial_state(), self.engine.state_b().as_slice())
    }

    fn apply(&mut self, record: &Record) -> Result<()> {
        if self.ending.is_some() {
            return Err(SessionError::Ended(self.id));
        }
        match record {
            Record::Created { .. } => {
                return Err(SessionError::InvalidResponse("duplicate created record".into()));
            }
            Record::Offered { at, token } => {
                let got = self.engine.next_offer().map(|p| p.token);
                if got != Some(*token) {
                    return Err(SessionError::StaleToken { got: *token, pending: got });
                }
                self.offered_at = Some(*at);
            }
            Record::Responded { at, token, feedback, tag } => {
                let pending = self.engine.pending().map(|p| p.token);
                if pending != Some(*token) {
                    return Err(SessionError::StaleToken { got: *token, pending });
                }
                self.engine.respond_tagged(feedback.clone(), tag.clone())?;
                self.responded_at.push(*at);
                self.offered_at = None;
            }
            Record::Ended { at, cause, reason, score } => {
                if !self.engine.is_terminal() {
                    match cause {
                        EndCause::Negotiation => {
                            if let Some(p) = self.engine.next_offer() {
                                return Err(SessionError::InvalidResponse(format!(
                                    "negotiation did not end; offer {} is pending",
                                    p.token
                                )));
                            }
                        }
                        EndCause::TimeLimit | EndCause::Client => self.engine.stop(TerminalReason::ExternalStop),
                    }
                }
                if self.engine.terminal() != Some(*reason) {
                    return Err(SessionError::InvalidResponse(format!(
                        "recorded end reason {reason:?} but negotiation ended with {:?}",
                        self.engine.terminal()
                    )));
                }
                let recomputed = self.current_score();
                if recomputed != *score {
                    return Err(SessionError::InvalidResponse(format!(
                        "recorded score {score:?} differs from recomputed {recomputed:?}"
                    )));
                }
                self.offered_at = None;
                self.ending = Some(Ending { at: *at, cause: *cause, reason: *reason, score: *score });
            }
        }
        Ok(())
    }

    fn commit(&mut self, record: Record) -> Result<()> {
        self.apply(&record)?;
        self.outbox.push(record);
        Ok(())
    }

    fn end_with(&mut self, at: DateTime<Utc>, cause: EndCause, reason: TerminalReason) -> Result<()> {
        if cause != EndCause::Negotiation {
            self.engine.stop(reason);
        }
        let score = self.current_score();
        self.commit(Record::Ended { at, cause, reason, score })
    }

    /// Issues the next offer at `at`, or ends the session if the
    /// negotiator has stopped.
    fn issue(&mut self, at: DateTime<Utc>) -> Result<()> {
        match self.engine.next_offer() {
            Some(p) => self.commit(Record::Offered { at, token: p.token }),
            None => {
                let reason = self.engine.terminal().expect("no offer means the engine stopped");
                self.end_with(at, EndCause::Negotiation, reason)
            }
        }
    }

    /// Applies every timeout and the session time limit up to `now`.
    pub fn tick(&mut self, now: DateTime<Utc>) -> Result<()> {
        loop {
            if self.ending.is_some() {
                return Ok(());
            }
            let deadline = self.deadline();
            match (self.engine.pending().map(|p| p.token), self.expiry()) {
                (Some(token), Some(expiry)) if expiry <= now && expiry < deadline => {
                    self.commit(Record::Responded {
                        at: expiry,
                        token,
                        feedback: Feedback::Timeout,
                        tag: Some(TIMEOUT_TAG.into()),
                    })?;
                    self.issue(expiry)?;
                }
                (None, _) if now < deadline => self.issue(now)?,
                _ => {
                    if now >= deadline {
                        self.end_with(deadline, EndCause::TimeLimit, TerminalReason::ExternalStop)?;
                    }
                    return Ok(());
                }
            }
        }
    }

    fn check_feedback(&self, feedback: &Feedback) -> Result<()> {
        if let Feedback::Counter(c) = feedback {
            let n = self.config.dim();
            if c.len() != n {
                return Err(SessionError::InvalidResponse(format!("counteroffer needs {n} components")));
            }
            if c.iter().any(|x| !x.is_finite() || x.fract() != 0.0) {
                return Err(SessionError::InvalidResponse("counteroffer must be whole units".into()));
            }
            if c.iter().all(|x| *x == 0.0) {
                return Err(SessionError::InvalidResponse("counteroffer is empty".into()));
            }
        }
        Ok(())
    }

    pub fn respond(&mut self, token: u64, feedback: Feedback, now: DateTime<Utc>) -> Result<RespondOutcome> {
        self.tick(now)?;
        if self.ending.is_some() {
            return Err(SessionError::Ended(self.id));
        }
        let pending = self.engine.pending().map(|p| p.token);
        if pending != Some(token) {
            return Err(SessionError::StaleToken { got: token, pending });
        }
        self.check_feedback(&feedback)?;
        let tag = (feedback == Feedback::Timeout).then(|| TIMEOUT_TAG.to_string());
        let seen = self.engine.transcript().algo_events.len();
        self.commit(Record::Responded { at: now, token, feedback, tag })?;
        self.issue(now)?;
        let notes = self.engine.transcript().algo_events[seen..]
            .iter()
            .filter_map(|e| match &e.event {
                AlgoEvent::Note { message } => Some(message.clone()),
                _ => None,
            })
            .collect();
        let events = &self.engine.transcript().events;
        Ok(RespondOutcome {
            event: self.history_item(events.len() - 1),
            notes,
            offer: self.offer_view(),
            terminal: self.ending.clone(),
            score: self.ending.as_ref().map(|e| e.score),
        })
    }

    /// Ends the session at the client's request; ending twice is a no-op.
    pub fn end(&mut self, now: DateTime<Utc>) -> Result<Ending> {
        self.tick(now)?;
        if self.ending.is_none() {
            self.end_with(now, EndCause::Client, TerminalReason::ExternalStop)?;
        }
        Ok(self.ending.clone().expect("ended above"))
    }

    fn offer_view(&self) -> Option<OfferView> {
        let p: &PendingOffer = self.engine.pending()?;
        let issued = self.offered_at?;
        Some(OfferView::from_offer(p.token, p.stage, &p.offer.delta, issued, self.expiry()?))
    }

    fn history_item(&self, i: usize) -> HistoryItem {
        let e: &TranscriptEvent = &self.engine.transcript().events[i];
        HistoryItem {
            step: e.step,
            token: e.token,
            stage: e.stage,
            offer: e.offer.clone(),
            response: e.response,
            counter: e.counter.clone(),
            tag: e.tag.clone(),
            agent_allocation: e.s_a.clone(),
            your_allocation: e.s_b.clone(),
            at: self.responded_at[i],
        }
    }

    pub fn snapshot(&self, now: DateTime<Utc>) -> SessionSnapshot {
        let start = self.config.initial_state();
        let remaining = match &self.ending {
            Some(_) => 0.0,
            None => ((self.deadline() - now).num_milliseconds().max(0) as f64) / 1000.0,
        };
        SessionSnapshot {
            id: self.id,
            created_at: self.created_at,
            config: self.config.clone(),
            agent_allocation: self.engine.state_a().as_slice().to_vec(),
            your_allocation: self.engine.state_b().as_slice().to_vec(),
            offer: self.offer_view(),
            offers_made: self.engine.offers_made(),
            history: (0..self.engine.transcript().events.len()).map(|i| self.history_item(i)).collect(),
            time_remaining_secs: remaining,
            ending: self.ending.clone(),
            alignment_degrees: alignment_angle(&self.config.agent_target, &self.config.human_target, &start),
            alignment: alignment_bin(&self.config.agent_target, &self.config.human_target, &start),
        }
    }

    /// Transcript as JSON lines, each stamped with its response time.
    pub fn transcript_jsonl(&self) -> String {
        let mut out = String::new();
        for (line, at) in self.engine.transcript().to_jsonl().lines().zip(&self.responded_at) {
            let mut v: serde_json::Value = serde_json::from_str(line).expect("engine writes valid json");
            v["at"] = serde_json::Value::String(at.to_rfc3339_opts(chrono::SecondsFormat::Millis, true));
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    pub fn algorithm(&self) -> Algorithm {
        self.config.algorithm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SessionRequest;
    use proptest::prelude::*;

    fn t0() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2024-05-01T12:00:00Z").unwrap().with_timezone(&Utc)
    }

    fn config(algorithm: Algorithm) -> SessionConfig {
        SessionRequest {
            agent_target: Some(vec![33.0, 33.0, 33.0]),
            algorithm: Some(algorithm),
            seed: Some(3),
            ..SessionRequest::new(vec![60.0, 70.0, 30.0])
        }
        .resolve(0, 0)
    }

    fn session(algorithm: Algorithm) -> Session {
        Session::create(Uuid::nil(), config(algorithm), t0()).unwrap()
    }

    #[test]
    fn first_stcr_offers_give_resources_away() {
        // agent gradient at the start is 2 (33 - 50) < 0 in every category
        let mut s = session(Algorithm::Stcr);
        let o = s.offer_view().unwrap();
        assert_eq!(o.stage, Stage::Quadrant);
        assert!(o.offer.iter().all(|x| *x <= 0) && o.offer.iter().any(|x| *x < 0), "{o:?}");
        let out = s.respond(o.token, Feedback::Reject, t0()).unwrap();
        let o2 = out.offer.unwrap();
        assert_eq!(o2.stage, Stage::Quadrant);
        assert!(o2.offer.iter().all(|x| *x <= 0));
    }

    #[test]
    fn identical_configs_give_identical_first_offers() {
        for algo in [Algorithm::Stcr, Algorithm::Gca, Algorithm::RandomPrev] {
            assert_eq!(session(algo).offer_view(), session(algo).offer_view());
        }
    }

    #[test]
    fn stale_tokens_change_nothing() {
        let mut s = session(Algorithm::Stcr);
        let tok = s.offer_view().unwrap().token;
        s.respond(tok, Feedback::Reject, t0()).unwrap();
        let before = s.snapshot(t0());
        for _ in 0..2 {
            assert!(matches!(s.respond(tok, Feedback::Accept, t0()), Err(SessionError::StaleToken { .. })));
        }
        assert_eq!(s.snapshot(t0()), before);
    }

    #[test]
    fn bad_counteroffers_are_refused_without_side_effects() {
        let mut s = session(Algorithm::Stcr);
        let tok = s.offer_view().unwrap().token;
        for c in [vec![1.0, 2.0], vec![0.5, 0.0, 0.0], vec![0.0; 3]] {
            assert!(matches!(s.respond(tok, Feedback::Counter(c), t0()), Err(SessionError::InvalidResponse(_))));
        }
        assert_eq!(s.offer_view().unwrap().token, tok);
    }

    #[test]
    fn harmful_counteroffer_is_noted_and_absorbed() {
        let mut s = session(Algorithm::Stcr);
        let o = s.offer_view().unwrap();
        // agent would receive 10 apples while wanting fewer
        let out = s.respond(o.token, Feedback::Counter(vec![10.0, 0.0, 0.0]), t0()).unwrap();
        assert!(out.notes.iter().any(|n| n.contains("not beneficial")), "{:?}", out.notes);
        assert_ne!(out.offer.unwrap().offer, vec![-10, 0, 0]);
    }

    #[test]
    fn beneficial_counteroffer_is_echoed() {
        let mut s = session(Algorithm::Stcr);
        let o = s.offer_view().unwrap();
        let out = s.respond(o.token, Feedback::Counter(vec![0.0, -10.0, 0.0]), t0()).unwrap();
        let next = out.offer.unwrap();
        assert_eq!(next.stage, Stage::Counteroffer);
        assert_eq!(next.offer, vec![0, -10, 0]);
    }

    #[test]
    fn timeouts_become_tagged_rejections() {
        let mut s = session(Algorithm::Stcr);
        let first = s.offer_view().unwrap();
        let later = t0() + Duration::seconds(250);
        s.tick(later).unwrap();
        let snap = s.snapshot(later);
        assert_eq!(snap.history.len(), 2);
        assert!(snap.history.iter().all(|h| h.response == ResponseKind::Timeout && h.tag.as_deref() == Some(TIMEOUT_TAG)));
        assert_eq!(snap.history[1].at, t0() + Duration::seconds(240));
        assert_eq!(snap.offer.as_ref().unwrap().issued_at, t0() + Duration::seconds(240));
        assert!(matches!(s.respond(first.token, Feedback::Accept, later), Err(SessionError::StaleToken { .. })));
    }

    #[test]
    fn time_limit_ends_the_session() {
        let mut s = session(Algorithm::Gca);
        let ending = s.end(t0() + Duration::seconds(10_000)).unwrap();
        assert_eq!(ending.cause, EndCause::TimeLimit);
        assert_eq!(ending.at, t0() + Duration::seconds(600));
        // four timeouts fit before the limit; the fifth expiry coincides with it
        assert_eq!(s.engine().transcript().events.len(), 4);
    }

    #[test]
    fn accepted_offer_moves_both_allocations() {
        let mut s = session(Algorithm::RandomPrev);
        let o = s.offer_view().unwrap();
        let out = s.respond(o.token, Feedback::Accept, t0()).unwrap();
        let want_b: Vec<f64> = o.offer.iter().map(|x| 50.0 - *x as f64).collect();
        assert_eq!(out.event.your_allocation, want_b);
        let snap = s.snapshot(t0());
        assert_eq!(snap.your_allocation, want_b);
    }

    #[test]
    fn replay_reproduces_the_session() {
        let mut s = session(Algorithm::Stcr);
        let mut log = s.take_outbox();
        for k in 0..6 {
            let o = s.offer_view().unwrap();
            let fb = match k % 3 {
                0 => Feedback::Reject,
                1 => Feedback::Accept,
                _ => Feedback::Counter(vec![-1.0, -1.0, 2.0]),
            };
            s.respond(o.token, fb, t0() + Duration::seconds(k)).unwrap();
            log.extend(s.take_outbox());
        }
        s.end(t0() + Duration::seconds(30)).unwrap();
        log.extend(s.take_outbox());
        let r = Session::replay(std::path::Path::new("mem"), &log).unwrap();
        let now = t0() + Duration::seconds(40);
        assert_eq!(r.snapshot(now), s.snapshot(now));
        assert_eq!(r.transcript_jsonl(), s.transcript_jsonl());
    }

    #[test]
    fn tampered_score_is_detected() {
        let mut s = session(Algorithm::Stcr);
        s.end(t0()).unwrap();
        let mut log = s.take_outbox();
        if let Some(Record::Ended { score, .. }) = log.last_mut() {
            score.raw += 0.25;
        }
        let Err(err) = Session::replay(std::path::Path::new("mem"), &log) else { panic!("tampered log replayed") };
        assert!(matches!(err, SessionError::Corrupt { line, .. } if line == log.len()));
    }

    proptest! {
        #[test]
        fn offer_view_round_trips(offer in proptest::collection::vec(-50i64..=50, 3)) {
            let f: Vec<f64> = offer.iter().map(|x| *x as f64).collect();
            let v = OfferView::from_offer(1, Stage::Gca, &f, t0(), t0());
            prop_assert_eq!(v.to_offer(), offer.clone());
            prop_assert!(v.agent_receives.iter().chain(&v.you_receive).all(|x| *x >= 0));
        }

        #[test]
        fn accepted_trades_conserve_and_stay_integer(
            seed in 0u64..500,
            actions in proptest::collection::vec(0u8..4, 1..30),
        ) {
            let mut cfg = config(Algorithm::Stcr);
            cfg.seed = seed;
            cfg.algorithm = [Algorithm::Stcr, Algorithm::Gca, Algorithm::RandomPrev][(seed % 3) as usize];
            let mut s = Session::create(Uuid::nil(), cfg, t0()).unwrap();
            for a in actions {
                let Some(o) = s.offer_view() else { break };
                let fb = match a {
                    0 => Feedback::Accept,
                    1 => Feedback::Reject,
                    2 => Feedback::Timeout,
                    _ => Feedback::Counter(vec![1.0, -2.0, 1.0]),
                };
                s.respond(o.token, fb, t0()).unwrap();
                prop_assert!(s.engine().pending().is_some() || s.ending().is_some());
            }
            for h in s.snapshot(t0()).history {
                for i in 0..3 {
                    prop_assert_eq!(h.agent_allocation[i] + h.your_allocation[i], 100.0);
                    prop_assert_eq!(h.your_allocation[i].fract(), 0.0);
                }
            }
        }
    }
}
