//! Recommendation policies as explicit state machines.
//!
//! Each policy is driven once per period with the outcome of the previous
//! period (`None` at `t = 0`) and returns the set to show now. Once a policy
//! reports [`Policy::is_absorbed`] it shows the same set forever, which lets
//! the simulator replace the rest of the episode by a geometric sum.

use serde::{Deserialize, Serialize};

use crate::analytics::{build_constants, Constants};
use crate::choice::{ChoiceOutcome, ItemType, RecommendationSet, UserProfile};
use crate::error::{check_prior, Error, Result};

/// Always-popular policy: `{P, P}` regardless of history.
pub fn app_recommend() -> RecommendationSet {
    RecommendationSet::POPULAR
}

/// Posterior that a user is of the high niche type after `successes`
/// niche picks and `failures` other outcomes from diverse sets.
///
/// Evaluated through the log-odds
/// `L = ln((1-p)/p) + S·ln(ρ₂/ρ₁) + F·ln((1-ρ₂)/(1-ρ₁))`, which stays finite
/// where the product form over- or underflows.
pub fn pear_posterior(successes: u64, failures: u64, p: f64, constants: &Constants) -> Result<f64> {
    check_prior(p)?;
    check_constants(p, constants)?;
    if successes == 0 && failures == 0 {
        return Ok(p);
    }
    let log_odds = log_prior_odds(p) - successes as f64 * constants.success_llr
        + failures as f64 * constants.failure_llr;
    Ok(1.0 / (1.0 + log_odds.exp()))
}

fn log_prior_odds(p: f64) -> f64 {
    ((1.0 - p) / p).ln()
}

fn check_constants(p: f64, constants: &Constants) -> Result<()> {
    if constants.p == p {
        Ok(())
    } else {
        Err(Error::InvalidState(format!(
            "posterior constants were built for p = {}, not p = {p}",
            constants.p
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PearState {
    pub successes: u64,
    pub failures: u64,
    pub switched: bool,
    /// `ln((1 - p_t) / p_t)`.
    pub log_posterior_odds: f64,
    pub constants: Constants,
    /// Periods already recommended.
    pub t: u64,
    last_rec: Option<RecommendationSet>,
}

impl PearState {
    pub fn new(constants: Constants) -> Self {
        Self {
            successes: 0,
            failures: 0,
            switched: false,
            log_posterior_odds: log_prior_odds(constants.p),
            constants,
            t: 0,
            last_rec: None,
        }
    }

    pub fn for_prior(p: f64, v_pop: f64) -> Result<Self> {
        Ok(Self::new(build_constants(p, v_pop)?))
    }

    pub fn prior(&self) -> f64 {
        self.constants.p
    }

    /// Current posterior `p_t`.
    pub fn posterior(&self) -> f64 {
        if self.successes == 0 && self.failures == 0 {
            self.constants.p
        } else {
            1.0 / (1.0 + self.log_posterior_odds.exp())
        }
    }

    /// Consumes the previous period's outcome and returns this period's set.
    pub fn step(&mut self, last: Option<&ChoiceOutcome>) -> Result<RecommendationSet> {
        match (self.last_rec, last) {
            (Some(rec), Some(outcome)) if !self.switched => {
                if outcome.chosen_type(&rec) == ItemType::Niche {
                    self.successes += 1;
                } else {
                    self.failures += 1;
                }
                self.log_posterior_odds = log_prior_odds(self.constants.p)
                    - self.successes as f64 * self.constants.success_llr
                    + self.failures as f64 * self.constants.failure_llr;
                // p_t < p  ⇔  F·ln((1-ρ₂)/(1-ρ₁)) > S·ln(ρ₁/ρ₂)
                if self
                    .constants
                    .boundary()
                    .is_below(self.successes, self.failures)
                {
                    self.switched = true;
                }
            }
            (Some(_), None) if !self.switched => {
                return Err(Error::InvalidState(
                    "an exploring period needs its outcome before the next step".into(),
                ));
            }
            _ => {}
        }
        let rec = if self.switched {
            RecommendationSet::POPULAR
        } else {
            RecommendationSet::DIVERSE
        };
        self.last_rec = Some(rec);
        self.t += 1;
        Ok(rec)
    }
}

/// Free-function form of [`PearState::step`] that also checks the prior.
pub fn pear_step(
    state: &mut PearState,
    last: Option<&ChoiceOutcome>,
    p: f64,
) -> Result<RecommendationSet> {
    check_prior(p)?;
    check_constants(p, &state.constants)?;
    state.step(last)
}

/// Explore-then-commit: `{P, N}` for the first `explore_len` periods, then
/// the type picked more often (popular on ties) in both slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiceState {
    pub count_pop: u64,
    pub count_niche: u64,
    /// Periods already recommended.
    pub t: u64,
    pub explore_len: u64,
    pub committed: Option<ItemType>,
    last_rec: Option<RecommendationSet>,
}

impl DiceState {
    pub fn new(explore_len: u64) -> Self {
        Self {
            count_pop: 0,
            count_niche: 0,
            t: 0,
            explore_len,
            committed: None,
            last_rec: None,
        }
    }

    pub fn step(&mut self, last: Option<&ChoiceOutcome>) -> Result<RecommendationSet> {
        if self.committed.is_none() {
            match (self.last_rec, last) {
                (Some(rec), Some(outcome)) => match outcome.chosen_type(&rec) {
                    ItemType::Popular => self.count_pop += 1,
                    ItemType::Niche => self.count_niche += 1,
                    ItemType::Outside => {}
                },
                (Some(_), None) => {
                    return Err(Error::InvalidState(
                        "an exploring period needs its outcome before the next step".into(),
                    ))
                }
                _ => {}
            }
            if self.t >= self.explore_len {
                self.committed = Some(if self.count_pop >= self.count_niche {
                    ItemType::Popular
                } else {
                    ItemType::Niche
                });
            }
        }
        let rec = match self.committed {
            Some(ty) => RecommendationSet::homogeneous(ty),
            None => RecommendationSet::DIVERSE,
        };
        self.last_rec = Some(rec);
        self.t += 1;
        Ok(rec)
    }
}

pub fn dice_step(state: &mut DiceState, last: Option<&ChoiceOutcome>) -> Result<RecommendationSet> {
    state.step(last)
}

/// Clairvoyant benchmark: knows the realized profile at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OracleState {
    pub preferred: ItemType,
}

impl OracleState {
    /// Niche iff `v_niche > v_pop`; exact ties go to popular.
    pub fn new(profile: &UserProfile) -> Self {
        let preferred = if profile.v_niche > profile.v_pop {
            ItemType::Niche
        } else {
            ItemType::Popular
        };
        Self { preferred }
    }
}

pub fn oracle_recommend(state: &OracleState) -> RecommendationSet {
    RecommendationSet::homogeneous(state.preferred)
}

/// Which policy an episode runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum PolicySpec {
    App,
    Pear { prior: f64 },
    Dice { explore_len: u64 },
    Oracle,
}

impl std::fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicySpec::App => write!(f, "APP"),
            PolicySpec::Pear { prior } => write!(f, "PEAR(p={prior})"),
            PolicySpec::Dice { explore_len } => write!(f, "DICE(T={explore_len})"),
            PolicySpec::Oracle => write!(f, "OPT"),
        }
    }
}

/// A running policy for one simulated user.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    App,
    Pear(PearState),
    Dice(DiceState),
    Oracle(OracleState),
}

impl Policy {
    pub fn start(spec: &PolicySpec, profile: &UserProfile) -> Result<Self> {
        Ok(match *spec {
            PolicySpec::App => Policy::App,
            PolicySpec::Pear { prior } => Policy::Pear(PearState::for_prior(prior, profile.v_pop)?),
            PolicySpec::Dice { explore_len } => Policy::Dice(DiceState::new(explore_len)),
            PolicySpec::Oracle => Policy::Oracle(OracleState::new(profile)),
        })
    }

    pub fn next(&mut self, last: Option<&ChoiceOutcome>) -> Result<RecommendationSet> {
        match self {
            Policy::App => Ok(app_recommend()),
            Policy::Pear(state) => state.step(last),
            Policy::Dice(state) => state.step(last),
            Policy::Oracle(state) => Ok(oracle_recommend(state)),
        }
    }

    /// True once the most recent recommendation will repeat forever.
    pub fn is_absorbed(&self) -> bool {
        match self {
            Policy::App | Policy::Oracle(_) => true,
            Policy::Pear(state) => state.switched,
            Policy::Dice(state) => state.committed.is_some(),
        }
    }
}
