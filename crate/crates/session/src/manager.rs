//! Registry of live sessions. Each session has a single writer (its mutex);
//! ended sessions are also frozen into a snapshot read without locking.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock, PoisonError, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use trade_core::Feedback;
use uuid::Uuid;

use crate::config::{SessionConfig, SessionRequest};
use crate::error::{Result, SessionError};
use crate::session::{Ending, OfferView, RespondOutcome, Session, SessionSnapshot};
use crate::store::Store;

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Accept,
    Reject,
    Counter,
    /// Sent by a client whose offer countdown ran out.
    Timeout,
}

/// Body of `POST /sessions/{id}/respond`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespondRequest {
    pub token: u64,
    pub action: Action,
    /// Required with `counter`: signed whole units the agent would
    /// receive, the same orientation as offers.
    #[serde(default)]
    pub counter: Option<Vec<i64>>,
}

impl RespondRequest {
    pub fn feedback(&self) -> Result<Feedback> {
        match (self.action, &self.counter) {
            (Action::Counter, Some(c)) => Ok(Feedback::Counter(c.iter().map(|x| *x as f64).collect())),
            (Action::Counter, None) => Err(SessionError::InvalidResponse("counter action needs a counter vector".into())),
            (_, Some(_)) => Err(SessionError::InvalidResponse("counter vector given without the counter action".into())),
            (Action::Accept, None) => Ok(Feedback::Accept),
            (Action::Reject, None) => Ok(Feedback::Reject),
            (Action::Timeout, None) => Ok(Feedback::Timeout),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub id: Uuid,
    pub config: SessionConfig,
    pub offer: Option<OfferView>,
    pub terminal: Option<Ending>,
}

struct Entry {
    session: Mutex<Session>,
    frozen: OnceLock<Arc<SessionSnapshot>>,
}

pub struct Manager {
    sessions: RwLock<HashMap<Uuid, Arc<Entry>>>,
    store: Option<Store>,
    /// Rotation slot handed to the next session.
    next_slot: AtomicU64,
    clock: Clock,
}

impl Manager {
    /// In-memory manager; pass a store to persist sessions.
    pub fn new(store: Option<Store>) -> Self {
        Self { sessions: RwLock::default(), store, next_slot: AtomicU64::new(0), clock: Arc::new(Utc::now) }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Replays every log in the store. Logs that fail to replay are skipped
    /// and returned alongside the manager.
    pub fn recover(store: Store) -> Result<(Self, Vec<SessionError>)> {
        let mut failures = Vec::new();
        let mut sessions = HashMap::new();
        for (path, records) in store.load_all()? {
            match Session::replay(&path, &records) {
                Ok(s) => {
                    tracing::info!(id = %s.id(), ended = s.ending().is_some(), "recovered session");
                    sessions.insert(s.id(), Arc::new(Entry { session: Mutex::new(s), frozen: OnceLock::new() }));
                }
                Err(e) => {
                    tracing::error!(error = %e, "skipping unrecoverable session log");
                    failures.push(e);
                }
            }
        }
        let slot = sessions.len() as u64;
        let m = Self::new(Some(store));
        *m.sessions.write().unwrap_or_else(PoisonError::into_inner) = sessions;
        m.next_slot.store(slot, Ordering::SeqCst);
        Ok((m, failures))
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap_or_else(PoisonError::into_inner).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn persist(&self, s: &mut Session) -> Result<()> {
        let records = s.take_outbox();
        match &self.store {
            Some(store) => store.append(s.id(), &records),
            None => Ok(()),
        }
    }

    pub fn create(&self, request: SessionRequest) -> Result<Created> {
        let slot = self.next_slot.fetch_add(1, Ordering::SeqCst);
        let config = request.resolve(slot, rand::random());
        let id = Uuid::new_v4();
        let mut s = Session::create(id, config.clone(), (self.clock)())?;
        self.persist(&mut s)?;
        let now = (self.clock)();
        let snap = s.snapshot(now);
        let entry = Arc::new(Entry { session: Mutex::new(s), frozen: OnceLock::new() });
        self.sessions.write().unwrap_or_else(PoisonError::into_inner).insert(id, entry);
        tracing::info!(%id, algorithm = %config.algorithm, "session created");
        Ok(Created { id, config, offer: snap.offer, terminal: snap.ending })
    }

    fn entry(&self, id: Uuid) -> Result<Arc<Entry>> {
        self.sessions
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .get(&id)
            .cloned()
            .ok_or(SessionError::NotFound(id))
    }

    /// Runs `f` as the session's single writer after catching up on
    /// timeouts. Records are persisted even when `f` fails.
    fn with_session<T>(&self, id: Uuid, f: impl FnOnce(&mut Session, DateTime<Utc>) -> Result<T>) -> Result<T> {
        let entry = self.entry(id)?;
        let mut s = entry.session.lock().unwrap_or_else(PoisonError::into_inner);
        let now = (self.clock)();
        let out = s.tick(now).and_then(|()| f(&mut s, now));
        self.persist(&mut s)?;
        if s.ending().is_some() && entry.frozen.get().is_none() {
            let _ = entry.frozen.set(Arc::new(s.snapshot(now)));
        }
        out
    }

    pub fn snapshot(&self, id: Uuid) -> Result<Arc<SessionSnapshot>> {
        if let Some(frozen) = self.entry(id)?.frozen.get() {
            return Ok(frozen.clone());
        }
        self.with_session(id, |s, now| Ok(Arc::new(s.snapshot(now))))
    }

    pub fn respond(&self, id: Uuid, request: &RespondRequest) -> Result<RespondOutcome> {
        let feedback = request.feedback()?;
        self.with_session(id, |s, now| s.respond(request.token, feedback, now))
    }

    pub fn end(&self, id: Uuid) -> Result<Ending> {
        self.with_session(id, |s, now| s.end(now))
    }

    pub fn transcript(&self, id: Uuid) -> Result<String> {
        self.with_session(id, |s, _| Ok(s.transcript_jsonl()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn clock_at(t: Arc<Mutex<DateTime<Utc>>>) -> Clock {
        Arc::new(move || *t.lock().unwrap())
    }

    fn start() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2024-05-01T12:00:00Z").unwrap().with_timezone(&Utc)
    }

    #[test]
    fn action_and_counter_must_agree() {
        let r = RespondRequest { token: 1, action: Action::Counter, counter: None };
        assert!(r.feedback().is_err());
        let r = RespondRequest { token: 1, action: Action::Reject, counter: Some(vec![1, 0, 0]) };
        assert!(r.feedback().is_err());
        let r = RespondRequest { token: 1, action: Action::Counter, counter: Some(vec![1, 0, -1]) };
        assert_eq!(r.feedback().unwrap(), Feedback::Counter(vec![1.0, 0.0, -1.0]));
    }

    #[test]
    fn sessions_rotate_targets_and_algorithms() {
        let m = Manager::new(None);
        let made: Vec<Created> = (0..6).map(|_| m.create(SessionRequest::new(vec![60.0, 70.0, 30.0])).unwrap()).collect();
        assert_eq!(made[0].config.agent_target, vec![66.0, 33.0, 33.0]);
        assert_eq!(made[1].config.agent_target, vec![33.0, 66.0, 33.0]);
        assert_eq!(made[5].config.agent_target, made[0].config.agent_target);
        assert_ne!(made[5].config.algorithm, made[0].config.algorithm);
        assert_eq!(m.len(), 6);
    }

    #[test]
    fn unknown_ids_are_not_found() {
        let m = Manager::new(None);
        assert!(matches!(m.snapshot(Uuid::nil()), Err(SessionError::NotFound(_))));
    }

    #[test]
    fn restart_recovers_open_and_ended_sessions() {
        let dir = tempfile::tempdir().unwrap();
        let now = Arc::new(Mutex::new(start()));
        let m = Manager::new(Some(Store::open(dir.path()).unwrap())).with_clock(clock_at(now.clone()));
        let a = m.create(SessionRequest::new(vec![60.0, 70.0, 30.0])).unwrap();
        let b = m.create(SessionRequest::new(vec![10.0, 20.0, 90.0])).unwrap();
        let tok = a.offer.unwrap().token;
        m.respond(a.id, &RespondRequest { token: tok, action: Action::Accept, counter: None }).unwrap();
        *now.lock().unwrap() += Duration::seconds(130);
        let ended = m.end(b.id).unwrap();
        let before_a = m.snapshot(a.id).unwrap();
        let before_b = m.snapshot(b.id).unwrap();
        assert_eq!(before_b.history.len(), 1, "one timeout before the end");
        drop(m);

        let (r, failures) = Manager::recover(Store::open(dir.path()).unwrap()).unwrap();
        assert!(failures.is_empty());
        let r = r.with_clock(clock_at(now.clone()));
        assert_eq!(r.snapshot(a.id).unwrap(), before_a);
        assert_eq!(r.snapshot(b.id).unwrap().ending, Some(ended));
        // the recovered open session keeps negotiating
        let tok = before_a.offer.as_ref().unwrap().token;
        r.respond(a.id, &RespondRequest { token: tok, action: Action::Reject, counter: None }).unwrap();
    }
}
