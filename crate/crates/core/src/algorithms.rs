//! Named negotiators, so callers can pick one from a string.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{Gca, GcaConfig, MomentumState, MomentumTrader, RandomTrader};
use crate::discrete::DiscreteStcr;
use crate::error::TradeError;
use crate::negotiation::{NegotiationParams, Negotiator};
use crate::stcr::{Stcr, StcrConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Stcr,
    StcrNoheur,
    Random,
    RandomPrev,
    RandomMomentum,
    Gca,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Stcr,
        Algorithm::StcrNoheur,
        Algorithm::Random,
        Algorithm::RandomPrev,
        Algorithm::RandomMomentum,
        Algorithm::Gca,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Stcr => "stcr",
            Algorithm::StcrNoheur => "stcr-noheur",
            Algorithm::Random => "random",
            Algorithm::RandomPrev => "random-prev",
            Algorithm::RandomMomentum => "random-momentum",
            Algorithm::Gca => "gca",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = TradeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| TradeError::InvalidParameter(format!("unknown algorithm {s:?}")))
    }
}

/// Baseline hyperparameters not carried by [`NegotiationParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmOptions {
    pub gca: GcaConfig,
    pub deviation_interval: f64,
    pub max_deviation: f64,
}

impl Default for AlgorithmOptions {
    fn default() -> Self {
        let m = MomentumState::default();
        Self { gca: GcaConfig::default(), deviation_interval: m.d_interval, max_deviation: m.d_max }
    }
}

/// A fresh negotiator. The cone-refinement variants pick their discrete or
/// continuous form from `params.discrete`; `stcr-noheur` disables the
/// previous-trade re-offer regardless of `params`.
pub fn build_negotiator(
    algo: Algorithm,
    params: &NegotiationParams,
    opts: &AlgorithmOptions,
    rng: ChaCha8Rng,
) -> Box<dyn Negotiator> {
    let stcr = |heuristic: bool| -> Box<dyn Negotiator> {
        let cfg = StcrConfig { use_prev_trade_heuristic: heuristic, ..StcrConfig::from(params) };
        if params.discrete {
            Box::new(DiscreteStcr::new(cfg))
        } else {
            Box::new(Stcr::new(cfg))
        }
    };
    match algo {
        Algorithm::Stcr => stcr(params.use_prev_trade_heuristic),
        Algorithm::StcrNoheur => stcr(false),
        Algorithm::Random => Box::new(RandomTrader::new(false, rng)),
        Algorithm::RandomPrev => Box::new(RandomTrader::new(true, rng)),
        Algorithm::RandomMomentum => {
            Box::new(MomentumTrader::new(MomentumState::new(opts.deviation_interval, opts.max_deviation), rng))
        }
        Algorithm::Gca => Box::new(Gca::new(opts.gca.clone(), rng)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{a}\""));
        }
        assert!("rt".parse::<Algorithm>().is_err());
    }

    #[test]
    fn built_negotiators_carry_their_names() {
        let params = NegotiationParams::for_dimension(3);
        let opts = AlgorithmOptions::default();
        for a in Algorithm::ALL {
            let neg = build_negotiator(a, &params, &opts, ChaCha8Rng::seed_from_u64(0));
            assert_eq!(neg.name(), a.as_str());
        }
    }
}
