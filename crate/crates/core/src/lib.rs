//! Sequential bilateral trading by comparison-based refinement of a cone
//! around the responder's utility gradient.
//!
//! An offering agent proposes trades and observes only accept/reject
//! answers. [`stcr::Stcr`] (continuous offers) and [`discrete::DiscreteStcr`]
//! (integer offers) shrink a cone that provably contains the responder's
//! gradient; [`baselines`] holds the comparison negotiators and
//! [`negotiation::Engine`] drives any of them against a responder.

pub mod algorithms;
pub mod baselines;
pub mod discrete;
pub mod error;
pub mod geometry;
pub mod model;
pub mod negotiation;
pub mod stcr;
pub mod theory;

pub use algorithms::{build_negotiator, Algorithm, AlgorithmOptions};
pub use error::{Result, TradeError};
pub use geometry::{GradientCone, Halfspace};
pub use model::{AgentState, OfferLimits, QuadraticUtility, Response, Side, TradeOffer, Utility};
pub use negotiation::{
    run_negotiation, BenefitKind, Engine, Feedback, GreedyResponder, NegotiationParams, Negotiator, PendingOffer,
    Proposal, Responder, Stage, TerminalReason, Transcript, TranscriptEvent, View,
};
