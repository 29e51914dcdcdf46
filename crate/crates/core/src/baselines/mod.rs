//! Comparison negotiators: uniform random trading, random trading with
//! momentum, and greedy concession over a belief of responder weights.

pub mod gca;
pub mod momentum;
pub mod random;

pub use gca::{BeliefState, Gca, GcaConfig};
pub use momentum::{MomentumState, MomentumTrader};
pub use random::RandomTrader;
