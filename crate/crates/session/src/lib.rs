//! Live trading sessions between a computer agent and a human responder,
//! served over HTTP.
//!
//! The agent wants to reach a target allocation `b_A` from the menu and
//! negotiates with integer offers; the human answers each offer with
//! accept, reject or a counteroffer and is scored by how far they moved
//! toward their own target.

pub mod config;
pub mod error;
pub mod http;
pub mod manager;
pub mod score;
pub mod session;
pub mod store;

pub use config::{rotation, SessionConfig, SessionRequest, AGENT_TARGET_MENU, SESSION_ALGORITHMS};
pub use error::{Result, SessionError};
pub use http::router;
pub use manager::{Action, Clock, Created, Manager, RespondRequest};
pub use score::{alignment_angle, alignment_bin, score, AlignmentBin, Score};
pub use session::{Ending, HistoryItem, OfferView, RespondOutcome, Session, SessionSnapshot, TIMEOUT_TAG};
pub use store::{EndCause, Record, Store};
