//! Discounted infinite-horizon Monte Carlo.
//!
//! One episode is one user: `V_N` is drawn once, then the policy and the
//! user interact period by period. As soon as the policy's recommendation is
//! permanent the rest of the episode is added in closed form, so simulation
//! only has to cover exploration stretches. Those are cut at the first `T`
//! whose remaining discounted mass is below the truncation tolerance.
//!
//! Every episode owns a ChaCha8 stream selected by its index, and sums are
//! taken in index order, so results do not depend on the worker count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice::{
    engagement_probability, expected_max_utility, sample_choice, ChoiceOutcome, RecommendationSet,
    UserProfile,
};
use crate::distributions::NicheDistribution;
use crate::error::{check_discount, check_finite, Error, Result};
use crate::policies::{Policy, PolicySpec};

/// Periods an episode may run before it is abandoned and flagged.
pub const HARD_HORIZON_CAP: u64 = 1_000_000;

/// Default truncation tolerance, relative to the per-period payoff bound.
pub const DEFAULT_TRUNCATION_EPSILON: f64 = 1e-8;

const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub v_pop: f64,
    pub delta: f64,
    pub niche: NicheDistribution,
    /// Always 2.
    pub slots: usize,
}

impl ModelParams {
    pub fn new(v_pop: f64, delta: f64, niche: NicheDistribution) -> Result<Self> {
        let params = Self {
            v_pop,
            delta,
            niche,
            slots: 2,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("v_pop", self.v_pop)?;
        check_discount(self.delta)?;
        self.niche.validate()?;
        if self.slots != 2 {
            return Err(Error::InvalidParameter {
                name: "slots",
                value: self.slots as f64,
                reason: "only two-slot recommendations are modelled",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Payoffs are the realized choices and utilities.
    Pathwise,
    /// Payoffs are their conditional expectations given the recommendation;
    /// choices are still sampled to drive the policy.
    Conditional,
}

/// How users are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserSampling {
    /// `V_N` from the niche law; every episode has weight 1.
    Natural,
    /// `V_N` from a defensive mixture, reweighted by the likelihood ratio.
    /// Needed when rare or heavy-tailed users dominate the mean.
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub episodes: u64,
    pub master_seed: u64,
    pub mode: SimMode,
    pub truncation_epsilon: f64,
    pub policy: PolicySpec,
    pub user_sampling: UserSampling,
    /// Thread count; `None` uses rayon's default.
    pub workers: Option<usize>,
}

impl SimConfig {
    pub fn new(policy: PolicySpec) -> Self {
        Self {
            episodes: 10_000,
            master_seed: 0,
            mode: SimMode::Conditional,
            truncation_epsilon: DEFAULT_TRUNCATION_EPSILON,
            policy,
            user_sampling: UserSampling::Natural,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::InvalidParameter {
                name: "episodes",
                value: 0.0,
                reason: "at least one episode is required",
            });
        }
        if !(self.truncation_epsilon > 0.0 && self.truncation_epsilon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "truncation_epsilon",
                value: self.truncation_epsilon,
                reason: "must be positive and finite",
            });
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter {
                name: "workers",
                value: 0.0,
                reason: "need at least one worker",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DiscountedMetrics {
    pub engagement: f64,
    pub utility: f64,
}

/// One simulated user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub metrics: DiscountedMetrics,
    pub v_niche: f64,
    /// Likelihood-ratio weight of the user draw (1 under natural sampling).
    pub weight: f64,
    /// Periods simulated before absorption or truncation.
    pub periods: u64,
    /// The period from which the recommendation was permanent, if reached.
    pub absorbed_at: Option<u64>,
    /// Hit the hard cap with more than the tolerated mass left.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateWithCI {
    pub mean: f64,
    pub std_error: f64,
    pub n: u64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

impl EstimateWithCI {
    fn new(mean: f64, std_error: f64, n: u64) -> Self {
        Self {
            mean,
            std_error,
            n,
            ci95_low: mean - Z95 * std_error,
            ci95_high: mean + Z95 * std_error,
        }
    }

    pub fn half_width(&self) -> f64 {
        Z95 * self.std_error
    }

    /// Scales mean and error by `factor > 0`, e.g. to per-period units.
    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.mean * factor, self.std_error * factor, self.n)
    }

    /// True when the `k`-standard-error intervals of both estimates overlap.
    pub fn overlaps(&self, other: &Self, k: f64) -> bool {
        (self.mean - other.mean).abs() <= k * (self.std_error + other.std_error)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub engagement: EstimateWithCI,
    pub utility: EstimateWithCI,
    pub flagged_episodes: u64,
    /// Longest simulated stretch over all episodes.
    pub max_periods: u64,
}

/// Smallest `T` with `δ^T · bound / (1 - δ) < ε`; 1 when `δ = 0`.
pub fn truncation_horizon(delta: f64, epsilon: f64, bound_per_period: f64) -> Result<u64> {
    check_discount(delta)?;
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            value: epsilon,
            reason: "must be positive",
        });
    }
    if delta == 0.0 {
        return Ok(1);
    }
    let target = epsilon * (1.0 - delta) / bound_per_period;
    if target >= 1.0 {
        return Ok(1);
    }
    let mut t = (target.ln() / delta.ln()).ceil().max(1.0) as u64;
    // Settle the boundary case the logarithms may round either way.
    let tail = |t: u64| delta.powf(t as f64) * bound_per_period / (1.0 - delta);
    while t > 1 && tail(t - 1) < epsilon {
        t -= 1;
    }
    while tail(t) >= epsilon {
        t += 1;
    }
    Ok(t)
}

/// Value of showing `rec` forever from period `from_t` on.
pub fn tail_completion(
    rec: &RecommendationSet,
    profile: &UserProfile,
    delta: f64,
    from_t: u64,
) -> Result<DiscountedMetrics> {
    check_discount(delta)?;
    let discount = if from_t == 0 {
        1.0
    } else {
        delta.powf(from_t as f64)
    };
    stationary_tail(rec, profile, delta, discount)
}

fn stationary_tail(
    rec: &RecommendationSet,
    profile: &UserProfile,
    delta: f64,
    discount: f64,
) -> Result<DiscountedMetrics> {
    let scale = discount / (1.0 - delta);
    Ok(DiscountedMetrics {
        engagement: scale * engagement_probability(rec, profile)?,
        utility: scale * expected_max_utility(rec, profile)?,
    })
}

/// Per-period payoff bound used for truncation: engagement is at most 1 and
/// expected utility at most `max(0, V_P, V_N) + ln 3`.
pub fn per_period_bound(profile: &UserProfile) -> f64 {
    let top = profile.v_pop.max(profile.v_niche).max(0.0);
    (top + 3f64.ln()).max(1.0)
}

/// Runs one user with a given profile.
pub fn simulate_user<R: Rng + ?Sized>(
    params: &ModelParams,
    config: &SimConfig,
    profile: &UserProfile,
    rng: &mut R,
) -> Result<EpisodeResult> {
    let delta = params.delta;
    let bound = per_period_bound(profile);
    let horizon = truncation_horizon(delta, config.truncation_epsilon * bound, bound)?;

    let mut policy = Policy::start(&config.policy, profile)?;
    let mut eng = 0.0;
    let mut util = 0.0;
    let mut discount = 1.0;
    let mut last: Option<ChoiceOutcome> = None;
    let mut t = 0u64;
    let mut absorbed_at = None;
    let mut flagged = false;

    loop {
        let rec = policy.next(last.as_ref())?;
        if policy.is_absorbed() {
            let tail = stationary_tail(&rec, profile, delta, discount)?;
            eng += tail.engagement;
            util += tail.utility;
            absorbed_at = Some(t);
            break;
        }
        if t >= horizon {
            break;
        }
        if t >= HARD_HORIZON_CAP {
            flagged = true;
            break;
        }
        let outcome = sample_choice(&rec, profile, rng)?;
        match config.mode {
            SimMode::Pathwise => {
                if outcome.engaged() {
                    eng += discount;
                }
                util += discount * outcome.realized_max_utility;
            }
            SimMode::Conditional => {
                eng += discount * engagement_probability(&rec, profile)?;
                util += discount * expected_max_utility(&rec, profile)?;
            }
        }
        last = Some(outcome);
        discount *= delta;
        t += 1;
    }

    Ok(EpisodeResult {
        metrics: DiscountedMetrics {
            engagement: eng,
            utility: util,
        },
        v_niche: profile.v_niche,
        weight: 1.0,
        periods: t,
        absorbed_at,
        flagged,
    })
}

/// Draws a user and runs one episode.
pub fn simulate_episode<R: Rng + ?Sized>(
    params: &ModelParams,
    config: &SimConfig,
    rng: &mut R,
) -> Result<EpisodeResult> {
    let (v_niche, weight) = match config.user_sampling {
        UserSampling::Natural => (params.niche.sample(rng)?, 1.0),
        UserSampling::Weighted => {
            let draw = params.niche.sample_weighted(rng)?;
            (draw.value, draw.weight)
        }
    };
    let profile = UserProfile::new(params.v_pop, v_niche)?;
    let mut result = simulate_user(params, config, &profile, rng)?;
    result.weight = weight;
    Ok(result)
}

/// The generator of episode `index`: stream `index` of the master key.
pub fn episode_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Runs every episode and collects them in index order.
pub fn run_episodes(params: &ModelParams, config: &SimConfig) -> Result<Vec<EpisodeResult>> {
    params.validate()?;
    config.validate()?;
    let work = || {
        (0..config.episodes)
            .into_par_iter()
            .map(|i| simulate_episode(params, config, &mut episode_rng(config.master_seed, i)))
            .collect::<Result<Vec<_>>>()
    };
    match config.workers {
        None => work(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidState(format!("thread pool: {e}")))?
            .install(work),
    }
}

pub fn run_monte_carlo(params: &ModelParams, config: &SimConfig) -> Result<MonteCarloReport> {
    let episodes = run_episodes(params, config)?;
    Ok(summarize(&episodes))
}

/// Self-normalized weighted means with their delta-method standard errors.
pub fn summarize(episodes: &[EpisodeResult]) -> MonteCarloReport {
    let weights: Vec<f64> = episodes.iter().map(|e| e.weight).collect();
    let eng: Vec<f64> = episodes.iter().map(|e| e.metrics.engagement).collect();
    let util: Vec<f64> = episodes.iter().map(|e| e.metrics.utility).collect();
    MonteCarloReport {
        engagement: weighted_estimate(&eng, &weights),
        utility: weighted_estimate(&util, &weights),
        flagged_episodes: episodes.iter().filter(|e| e.flagged).count() as u64,
        max_periods: episodes.iter().map(|e| e.periods).max().unwrap_or(0),
    }
}

/// `Σwh / Σw`, centred on the first value so that constant samples come
/// back exactly with zero error.
pub fn weighted_estimate(values: &[f64], weights: &[f64]) -> EstimateWithCI {
    let n = values.len() as u64;
    if values.is_empty() {
        return EstimateWithCI::new(f64::NAN, f64::NAN, 0);
    }
    let shift = values[0];
    let total_weight = kahan_sum(weights.iter().copied());
    let offset = kahan_sum(values.iter().zip(weights).map(|(v, w)| w * (v - shift))) / total_weight;
    let mean = shift + offset;
    if n == 1 {
        return EstimateWithCI::new(mean, f64::INFINITY, n);
    }
    let spread = kahan_sum(
        values
            .iter()
            .zip(weights)
            .map(|(v, w)| (w * (v - shift - offset)).powi(2)),
    );
    let nf = n as f64;
    let var = nf / (nf - 1.0) * spread / (total_weight * total_weight);
    EstimateWithCI::new(mean, var.sqrt(), n)
}

/// Neumaier-compensated sum, evaluated strictly left to right.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{closed_forms_app, util_oracle, OraclePrior};
    use crate::choice::ItemType;
    use std::f64::consts::E;

    fn two_point(p: f64, v_pop: f64, delta: f64) -> ModelParams {
        ModelParams::new(v_pop, delta, NicheDistribution::TwoPoint { p }).unwrap()
    }

    #[test]
    fn horizon_examples() {
        assert_eq!(truncation_horizon(0.0, 1e-6, 2.0).unwrap(), 1);
        let t = truncation_horizon(0.99, 1e-6, 2.0).unwrap();
        let exact = ((1e-6f64 * 0.01 / 2.0).ln() / 0.99f64.ln()).ceil() as u64;
        assert_eq!(t, exact);
        assert_eq!(t, 1902);
        assert!(0.99f64.powf(t as f64) * 2.0 / 0.01 < 1e-6);
        assert!(0.99f64.powf((t - 1) as f64) * 2.0 / 0.01 >= 1e-6);
        let t = truncation_horizon(0.999, 1e-6, 2.0).unwrap();
        assert!((21_390..=21_420).contains(&t), "{t}");
        assert!(truncation_horizon(1.0, 1e-6, 2.0).is_err());
    }

    #[test]
    fn tail_completion_examples() {
        let prof = UserProfile::new(1.0, 0.0).unwrap();
        let m = tail_completion(&RecommendationSet::POPULAR, &prof, 0.99, 0).unwrap();
        assert!((m.engagement - 84.463_759_650_303_64).abs() < 1e-9);
        assert!((m.utility - 186.199_480_405_825_1).abs() < 1e-9);

        let m = tail_completion(&RecommendationSet::POPULAR, &prof, 0.0, 10).unwrap();
        assert_eq!(m.engagement, 0.0);

        let prof = UserProfile::new(1.0, 9.0).unwrap();
        let m = tail_completion(&RecommendationSet::NICHE, &prof, 0.9, 0).unwrap();
        let e9 = 9f64.exp();
        assert!((m.engagement - 10.0 * 2.0 * e9 / (1.0 + 2.0 * e9)).abs() < 1e-12);
        assert!((m.engagement - 9.99938).abs() < 1e-5);
    }

    #[test]
    fn app_is_exact_under_either_sampling() {
        let params = two_point(0.1, 1.0, 0.99);
        for sampling in [UserSampling::Natural, UserSampling::Weighted] {
            let mut cfg = SimConfig::new(PolicySpec::App);
            cfg.episodes = 500;
            cfg.user_sampling = sampling;
            let r = run_monte_carlo(&params, &cfg).unwrap();
            let exact = closed_forms_app(1.0, 0.99).unwrap();
            assert_eq!(r.engagement.std_error, 0.0);
            assert!((r.engagement.mean - exact.eng).abs() < 1e-10);
            assert!((r.utility.mean - exact.util).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_matches_corollary_value() {
        let params = two_point(0.1, 1.0, 0.9);
        let mut cfg = SimConfig::new(PolicySpec::Oracle);
        cfg.episodes = 20_000;
        let r = run_monte_carlo(&params, &cfg).unwrap();
        let exact = util_oracle(OraclePrior::Prior(0.1), 1.0, 0.9).unwrap();
        assert!(
            (r.utility.mean - exact).abs() < 4.0 * r.utility.std_error,
            "{r:?} vs {exact}"
        );

        cfg.user_sampling = UserSampling::Weighted;
        let r = run_monte_carlo(&params, &cfg).unwrap();
        assert!(
            (r.utility.mean - exact).abs() < 4.0 * r.utility.std_error,
            "{r:?} vs {exact}"
        );
    }

    #[test]
    fn pear_single_period_engagement_is_a_mixture() {
        let params = two_point(0.1, 1.0, 0.0);
        let mut cfg = SimConfig::new(PolicySpec::Pear { prior: 0.1 });
        cfg.mode = SimMode::Pathwise;
        cfg.episodes = 100_000;
        let episodes = run_episodes(&params, &cfg).unwrap();
        assert!(episodes
            .iter()
            .all(|e| e.metrics.engagement == 0.0 || e.metrics.engagement == 1.0));
        let r = summarize(&episodes);
        let e9 = 9f64.exp();
        let low = (E + E.recip()) / (1.0 + E + E.recip());
        let high = (E + e9) / (1.0 + E + e9);
        let exact = 0.9 * low + 0.1 * high;
        assert!((exact - 0.7797).abs() < 1e-4);
        assert!((r.engagement.mean - exact).abs() < 4.0 * r.engagement.std_error);
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let params = ModelParams::new(1.0, 0.95, NicheDistribution::Gpd { xi: 0.5 }).unwrap();
        let mut cfg = SimConfig::new(PolicySpec::Dice { explore_len: 10 });
        cfg.episodes = 2_000;
        cfg.mode = SimMode::Pathwise;
        cfg.user_sampling = UserSampling::Weighted;
        cfg.workers = Some(1);
        let a = run_monte_carlo(&params, &cfg).unwrap();
        cfg.workers = Some(3);
        let b = run_monte_carlo(&params, &cfg).unwrap();
        assert_eq!(a.engagement.mean.to_bits(), b.engagement.mean.to_bits());
        assert_eq!(a.utility.std_error.to_bits(), b.utility.std_error.to_bits());
    }

    #[test]
    fn absorbed_tail_matches_continued_simulation() {
        // Continuing a committed DICE user period by period must land within
        // the truncation tolerance of the closed-form tail.
        let params = ModelParams::new(1.0, 0.9, NicheDistribution::Gpd { xi: 0.25 }).unwrap();
        let eps = 1e-9;
        for i in 0..100u64 {
            let mut rng = episode_rng(7, i);
            let v_niche = params.niche.sample(&mut rng).unwrap();
            let prof = UserProfile::new(1.0, v_niche).unwrap();
            let ty = if i % 2 == 0 {
                ItemType::Popular
            } else {
                ItemType::Niche
            };
            let rec = RecommendationSet::homogeneous(ty);
            let closed = tail_completion(&rec, &prof, 0.9, 3).unwrap();
            let bound = per_period_bound(&prof);
            let horizon = truncation_horizon(0.9, eps, bound).unwrap();
            let eng_t = engagement_probability(&rec, &prof).unwrap();
            let util_t = expected_max_utility(&rec, &prof).unwrap();
            let (mut e, mut u) = (0.0, 0.0);
            for t in 3..horizon {
                let d = 0.9f64.powi(t as i32);
                e += d * eng_t;
                u += d * util_t;
            }
            assert!((closed.engagement - e).abs() < 2.0 * eps);
            assert!((closed.utility - u).abs() < 2.0 * eps);
        }
    }

    #[test]
    fn conditional_has_less_variance() {
        let params = two_point(0.1, 1.0, 0.9);
        let mut cfg = SimConfig::new(PolicySpec::Pear { prior: 0.1 });
        cfg.episodes = 20_000;
        cfg.mode = SimMode::Pathwise;
        let path = run_monte_carlo(&params, &cfg).unwrap();
        cfg.mode = SimMode::Conditional;
        let cond = run_monte_carlo(&params, &cfg).unwrap();
        assert!(cond.engagement.std_error <= path.engagement.std_error);
        assert!(cond.utility.std_error <= path.utility.std_error);
        assert!(cond.engagement.overlaps(&path.engagement, 3.0));
        assert!(cond.utility.overlaps(&path.utility, 3.0));
    }

    #[test]
    fn engagement_never_exceeds_geometric_bound() {
        let params = ModelParams::new(1.0, 0.8, NicheDistribution::Gpd { xi: 0.9 }).unwrap();
        let mut cfg = SimConfig::new(PolicySpec::Pear { prior: 0.2 });
        cfg.episodes = 2_000;
        cfg.mode = SimMode::Pathwise;
        for e in run_episodes(&params, &cfg).unwrap() {
            assert!(e.metrics.engagement <= 1.0 / (1.0 - 0.8) + 1e-12);
            assert!(!e.flagged);
        }
    }

    #[test]
    fn weighted_estimate_reduces_to_sample_mean() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let est = weighted_estimate(&xs, &[1.0; 4]);
        assert!((est.mean - 3.75).abs() < 1e-15);
        let var = xs.iter().map(|x| (x - 3.75f64).powi(2)).sum::<f64>() / 3.0;
        assert!((est.std_error - (var / 4.0).sqrt()).abs() < 1e-15);
        assert!(est.ci95_low < est.mean && est.mean < est.ci95_high);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::new(PolicySpec::App);
        cfg.episodes = 0;
        assert!(cfg.validate().is_err());
        cfg.episodes = 1;
        cfg.truncation_epsilon = 0.0;
        assert!(cfg.validate().is_err());
        assert!(ModelParams::new(1.0, 1.0, NicheDistribution::Gpd { xi: 0.5 }).is_err());
    }
}
