//! Closed-form results for the two-point niche model.
//!
//! Everything here is deterministic: the APP and limiting-PEAR metrics, the
//! clairvoyant oracle's utility, the posterior constants `ρ₁, ρ₂, c, M₀`, the
//! exact law of the PEAR switch time as the first passage of a two-step
//! random walk below zero, and `g(δ, ρ, x) = E[1 - δ^N]`.
//!
//! Per-period values are discounted totals multiplied by `1 - δ`. Ratios are
//! always formed from per-period expressions so nothing cancels near δ = 1.

use serde::Serialize;

use crate::choice::{log_add_exp, log_sum_exp};
use crate::distributions::two_point_high;
use crate::error::{check_discount, check_finite, check_prior, Error, Result};

/// Mass left in the tail above which a first-passage table is flagged.
pub const TAIL_WARNING_MASS: f64 = 1e-9;

/// Walk length beyond which `g_value` gives up.
pub const G_STEP_CAP: usize = 5_000_000;

/// Posterior constants for a prior `p` and popular utility `v_pop`.
///
/// `ρ₁` is the probability that a high-type user picks the niche slot of a
/// diverse set, `ρ₂` the same for a low-type user. Both log-probabilities
/// and log-complements are kept because `1 - ρ₁ ≈ (1 + e^{V_P}) e^{-(1-p)/p}`
/// underflows for `p` below roughly 1/700.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    pub p: f64,
    pub v_pop: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub ln_rho1: f64,
    pub ln_one_minus_rho1: f64,
    pub ln_rho2: f64,
    pub ln_one_minus_rho2: f64,
    /// `ln(ρ₁/ρ₂)`: log-likelihood ratio carried by one niche pick.
    pub success_llr: f64,
    /// `ln((1-ρ₂)/(1-ρ₁))`: log-likelihood ratio carried by one non-niche pick.
    pub failure_llr: f64,
    /// Down-step of the equivalent walk.
    pub c: f64,
    /// `c / (1 - c)`: successes needed to offset a single failure.
    pub m0: f64,
}

pub fn build_constants(p: f64, v_pop: f64) -> Result<Constants> {
    check_prior(p)?;
    check_finite("v_pop", v_pop)?;
    let high = two_point_high(p);
    // ln(1 + e^{V_P})
    let ln_pop_plus_out = log_add_exp(0.0, v_pop);

    let ln_z1 = log_add_exp(ln_pop_plus_out, high);
    let ln_rho1 = -((ln_pop_plus_out - high).exp()).ln_1p();
    let ln_one_minus_rho1 = ln_pop_plus_out - ln_z1;
    let rho1 = 1.0 / (1.0 + (ln_pop_plus_out - high).exp());

    // ρ₂ = e^{-1} / (1 + e^{V_P} + e^{-1}) = 1 / (1 + e + e^{V_P + 1})
    let ln_z2 = log_sum_exp(&[0.0, 1.0, v_pop + 1.0]);
    let ln_rho2 = -ln_z2;
    let ln_one_minus_rho2 = log_add_exp(1.0, v_pop + 1.0) - ln_z2;
    let rho2 = 1.0 / (1.0 + std::f64::consts::E + (v_pop + 1.0).exp());

    let success_llr = ln_rho1 - ln_rho2;
    let failure_llr = ln_one_minus_rho2 - ln_one_minus_rho1;
    let c = failure_llr / (success_llr + failure_llr);
    let m0 = failure_llr / success_llr;
    if !(success_llr > 0.0 && failure_llr > 0.0) {
        return Err(Error::InvalidParameter {
            name: "p",
            value: p,
            reason:
                "the high niche value must exceed the low one for the posterior to separate types",
        });
    }
    Ok(Constants {
        p,
        v_pop,
        rho1,
        rho2,
        ln_rho1,
        ln_one_minus_rho1,
        ln_rho2,
        ln_one_minus_rho2,
        success_llr,
        failure_llr,
        c,
        m0,
    })
}

impl Constants {
    pub fn one_minus_rho1(&self) -> f64 {
        self.ln_one_minus_rho1.exp()
    }

    pub fn one_minus_rho2(&self) -> f64 {
        self.ln_one_minus_rho2.exp()
    }

    /// The switch boundary in exact log-likelihood form.
    pub fn boundary(&self) -> WalkBoundary {
        WalkBoundary {
            up: self.success_llr,
            down: self.failure_llr,
        }
    }

    /// Exploration walk of a high-type user (`V_N = (1-p)/p`).
    pub fn walk_high(&self) -> RandomWalk {
        RandomWalk {
            up_prob: self.rho1,
            down_prob: self.one_minus_rho1(),
            boundary: self.boundary(),
        }
    }

    /// Exploration walk of a low-type user (`V_N = -1`).
    pub fn walk_low(&self) -> RandomWalk {
        RandomWalk {
            up_prob: self.rho2,
            down_prob: self.one_minus_rho2(),
            boundary: self.boundary(),
        }
    }
}

/// Discounted totals and their per-period normalizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormMetrics {
    pub eng: f64,
    pub util: f64,
    pub per_period_eng: f64,
    pub per_period_util: f64,
}

impl ClosedFormMetrics {
    fn from_per_period(delta: f64, per_period_eng: f64, per_period_util: f64) -> Self {
        Self {
            eng: per_period_eng / (1.0 - delta),
            util: per_period_util / (1.0 - delta),
            per_period_eng,
            per_period_util,
        }
    }
}

/// `2e^V / (1 + 2e^V)`.
fn homogeneous_engagement(v: f64) -> f64 {
    let ln_w = std::f64::consts::LN_2 + v;
    1.0 / (1.0 + (-ln_w).exp())
}

/// `ln(1 + 2e^V)`.
fn homogeneous_utility(v: f64) -> f64 {
    log_add_exp(0.0, std::f64::consts::LN_2 + v)
}

/// `(e^{a} + e^{b}) / (1 + e^{a} + e^{b})`.
fn mixed_engagement(a: f64, b: f64) -> f64 {
    let ln_w = log_add_exp(a, b);
    1.0 / (1.0 + (-ln_w).exp())
}

/// Always-popular policy.
pub fn closed_forms_app(v_pop: f64, delta: f64) -> Result<ClosedFormMetrics> {
    check_discount(delta)?;
    check_finite("v_pop", v_pop)?;
    Ok(ClosedFormMetrics::from_per_period(
        delta,
        homogeneous_engagement(v_pop),
        homogeneous_utility(v_pop),
    ))
}

/// PEAR as the prior `p → 0`, with `ρ = 1/(1 + e + e^{V_P+1})`.
pub fn closed_forms_pear_limit(v_pop: f64, delta: f64) -> Result<ClosedFormMetrics> {
    check_discount(delta)?;
    check_finite("v_pop", v_pop)?;
    let rho = 1.0 / (1.0 + std::f64::consts::E + (v_pop + 1.0).exp());
    let explore_weight = (1.0 - delta) / (1.0 - delta * rho);
    let exploit_weight = delta * (1.0 - rho) / (1.0 - delta * rho);
    let beta = mixed_engagement(v_pop, -1.0);
    let psi = log_sum_exp(&[0.0, v_pop, -1.0]);
    let eng = beta * explore_weight + homogeneous_engagement(v_pop) * exploit_weight;
    let util = 1.0 + psi * explore_weight + homogeneous_utility(v_pop) * exploit_weight;
    Ok(ClosedFormMetrics::from_per_period(delta, eng, util))
}

/// Which oracle benchmark to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OraclePrior {
    Prior(f64),
    /// The `p → 0` value.
    Limit,
}

/// Discounted utility of the clairvoyant policy that shows only the
/// user's preferred type from `t = 0`.
pub fn util_oracle(prior: OraclePrior, v_pop: f64, delta: f64) -> Result<f64> {
    check_discount(delta)?;
    check_finite("v_pop", v_pop)?;
    let per_period = match prior {
        OraclePrior::Limit => 1.0 + homogeneous_utility(v_pop),
        OraclePrior::Prior(p) => {
            check_prior(p)?;
            let high = two_point_high(p);
            let best_high = homogeneous_utility(high.max(v_pop));
            let best_low = homogeneous_utility(v_pop.max(-1.0));
            p * best_high + (1.0 - p) * best_low
        }
    };
    Ok(per_period / (1.0 - delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MisalignmentRow {
    pub delta: f64,
    pub eng_ratio: f64,
    pub util_ratio: f64,
    pub d_eng_pct: f64,
    pub d_util_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MisalignmentReport {
    pub v_pop: f64,
    pub rows: Vec<MisalignmentRow>,
    /// Utility ratio PEAR/APP as δ → 1: `1 + 1/ln(1 + 2e^{V_P})`.
    pub util_ratio_limit: f64,
}

/// Relative engagement loss and utility gain of limiting PEAR over APP.
pub fn misalignment_report(v_pop: f64, deltas: &[f64]) -> Result<MisalignmentReport> {
    let rows = deltas
        .iter()
        .map(|&delta| {
            let app = closed_forms_app(v_pop, delta)?;
            let pear = closed_forms_pear_limit(v_pop, delta)?;
            let eng_ratio = pear.per_period_eng / app.per_period_eng;
            let util_ratio = pear.per_period_util / app.per_period_util;
            Ok(MisalignmentRow {
                delta,
                eng_ratio,
                util_ratio,
                d_eng_pct: 100.0 * (eng_ratio - 1.0),
                d_util_pct: 100.0 * (util_ratio - 1.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MisalignmentReport {
        v_pop,
        rows,
        util_ratio_limit: 1.0 + 1.0 / homogeneous_utility(v_pop),
    })
}

/// Oracle-relaxed engagement bound for "diverse once, then engagement-optimal".
pub fn eng_do_upper_bound(p: f64, v_pop: f64, delta: f64) -> Result<f64> {
    check_prior(p)?;
    check_discount(delta)?;
    check_finite("v_pop", v_pop)?;
    let high = two_point_high(p);
    let first = (1.0 - p) * mixed_engagement(v_pop, -1.0) + p * mixed_engagement(v_pop, high);
    let later = p * homogeneous_engagement(high) + (1.0 - p) * homogeneous_engagement(v_pop);
    Ok(first + delta / (1.0 - delta) * later)
}

/// Decides whether a walk position `S·up − F·down` is below zero.
///
/// Positions are carried as the integer pair `(S, F)` so that the test is a
/// single comparison of two products and never accumulates rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WalkBoundary {
    pub up: f64,
    pub down: f64,
}

impl WalkBoundary {
    /// Steps `+(1 - x)` and `-x`.
    pub fn from_step(x: f64) -> Result<Self> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::InvalidParameter {
                name: "x",
                value: x,
                reason: "walk step must lie in (0, 1)",
            });
        }
        Ok(Self {
            up: 1.0 - x,
            down: x,
        })
    }

    pub fn is_below(&self, successes: u64, failures: u64) -> bool {
        (successes as f64) * self.up < (failures as f64) * self.down
    }
}

/// A walk stepping up with probability `up_prob`, down otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RandomWalk {
    pub up_prob: f64,
    /// Stored separately so that tiny complements survive.
    pub down_prob: f64,
    pub boundary: WalkBoundary,
}

impl RandomWalk {
    pub fn new(rho: f64, x: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParameter {
                name: "rho",
                value: rho,
                reason: "step probability must lie in [0, 1]",
            });
        }
        Ok(Self {
            up_prob: rho,
            down_prob: 1.0 - rho,
            boundary: WalkBoundary::from_step(x)?,
        })
    }
}

/// First `n` at which the partial sum of `steps` (true = up) is negative.
pub fn first_passage_time<I>(boundary: &WalkBoundary, steps: I) -> Option<usize>
where
    I: IntoIterator<Item = bool>,
{
    let (mut s, mut f) = (0u64, 0u64);
    for (i, up) in steps.into_iter().enumerate() {
        if up {
            s += 1;
        } else {
            f += 1;
        }
        if boundary.is_below(s, f) {
            return Some(i + 1);
        }
    }
    None
}

/// Forward recursion over the surviving `(S, F)` states of the walk.
///
/// After `n` steps, `mass[i]` is the probability of having stayed at or above
/// zero with `S = lo + i` successes. Runs of exactly-zero mass at either end
/// are trimmed, so a walk with negligible spread costs O(1) per step.
struct PassageRecursion {
    walk: RandomWalk,
    n: u64,
    lo: u64,
    mass: Vec<f64>,
    scratch: Vec<f64>,
}

impl PassageRecursion {
    fn new(walk: RandomWalk) -> Self {
        Self {
            walk,
            n: 0,
            lo: 0,
            mass: vec![1.0],
            scratch: Vec::new(),
        }
    }

    /// Advances one step and returns `P(N = n)` for the new `n`.
    fn step(&mut self) -> f64 {
        let RandomWalk {
            up_prob,
            down_prob,
            boundary,
        } = self.walk;
        let next_n = self.n + 1;
        self.scratch.clear();
        self.scratch.resize(self.mass.len() + 1, 0.0);
        let mut stopped = 0.0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let s = self.lo + i as u64;
            self.scratch[i + 1] += m * up_prob;
            let down = m * down_prob;
            if boundary.is_below(s, next_n - s) {
                stopped += down;
            } else {
                self.scratch[i] += down;
            }
        }
        std::mem::swap(&mut self.mass, &mut self.scratch);
        self.n = next_n;

        let first = self.mass.iter().position(|&m| m != 0.0);
        match first {
            None => {
                self.mass.clear();
            }
            Some(first) => {
                let last = self.mass.iter().rposition(|&m| m != 0.0).unwrap();
                self.mass.truncate(last + 1);
                self.mass.drain(..first);
                self.lo += first as u64;
            }
        }
        stopped
    }

    fn alive_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    fn is_extinct(&self) -> bool {
        self.mass.is_empty()
    }
}

/// `P(N = k)` for `k = 1..=k_max` plus the mass with `N > k_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstPassagePmf {
    pub walk: RandomWalk,
    /// `pmf[k - 1] = P(N = k)`.
    pub pmf: Vec<f64>,
    pub tail: f64,
    /// Set when more than [`TAIL_WARNING_MASS`] is left in the tail.
    pub truncated: bool,
}

impl FirstPassagePmf {
    pub fn prob(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.pmf.get(k - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.pmf.iter().sum::<f64>() + self.tail
    }
}

/// Exact law of `N(ρ, x)` up to `k_max` steps.
pub fn first_passage_pmf(rho: f64, x: f64, k_max: usize) -> Result<FirstPassagePmf> {
    first_passage_pmf_for(&RandomWalk::new(rho, x)?, k_max)
}

pub fn first_passage_pmf_for(walk: &RandomWalk, k_max: usize) -> Result<FirstPassagePmf> {
    if k_max == 0 {
        return Err(Error::InvalidParameter {
            name: "k_max",
            value: 0.0,
            reason: "need at least one step",
        });
    }
    let mut rec = PassageRecursion::new(*walk);
    let mut pmf = Vec::with_capacity(k_max);
    for _ in 0..k_max {
        pmf.push(rec.step());
    }
    let tail = rec.alive_mass();
    Ok(FirstPassagePmf {
        walk: *walk,
        pmf,
        tail,
        truncated: tail > TAIL_WARNING_MASS,
    })
}

/// `g = E[1 - δ^N]` with a certified bound on the truncation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GValue {
    pub value: f64,
    /// `|g - value| ≤ error_bound`.
    pub error_bound: f64,
    pub steps: usize,
}

impl GValue {
    pub fn lower(&self) -> f64 {
        self.value - self.error_bound
    }

    pub fn upper(&self) -> f64 {
        self.value + self.error_bound
    }
}

pub fn g_value(delta: f64, rho: f64, x: f64, tol: f64) -> Result<GValue> {
    g_value_for_walk(delta, &RandomWalk::new(rho, x)?, tol)
}

pub fn g_value_for_walk(delta: f64, walk: &RandomWalk, tol: f64) -> Result<GValue> {
    check_discount(delta)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "tol",
            value: tol,
            reason: "tolerance must be positive",
        });
    }
    let mut rec = PassageRecursion::new(*walk);
    // Σ_{k ≤ K} δ^k P(N = k); the remainder E[δ^N; N > K] lies in
    // [0, δ^{K+1} P(N > K)].
    let mut discounted_stop = 0.0;
    let mut discount = 1.0;
    let mut steps = 0usize;
    loop {
        if steps >= G_STEP_CAP {
            return Err(Error::NonConvergent(format!(
                "g(δ={delta}) needs more than {G_STEP_CAP} walk steps for tol={tol}"
            )));
        }
        discount *= delta;
        discounted_stop += discount * rec.step();
        steps += 1;
        let slack = if rec.is_extinct() {
            0.0
        } else {
            discount * delta * rec.alive_mass()
        };
        if slack < tol {
            return Ok(GValue {
                value: 1.0 - discounted_stop - 0.5 * slack,
                error_bound: 0.5 * slack,
                steps,
            });
        }
    }
}

/// Finite-`p` PEAR metrics assembled from the two exact g values.
///
/// Each user type explores (diverse set) until its walk first passes below
/// zero and then sees the popular pair forever.
pub fn pear_metrics_from_first_passage(
    constants: &Constants,
    delta: f64,
    tol: f64,
) -> Result<ClosedFormMetrics> {
    check_discount(delta)?;
    let p = constants.p;
    let v_pop = constants.v_pop;
    let high = two_point_high(p);
    let g_high = g_value_for_walk(delta, &constants.walk_high(), tol)?.value;
    let g_low = g_value_for_walk(delta, &constants.walk_low(), tol)?.value;

    let lambda = homogeneous_engagement(v_pop);
    let big_lambda = homogeneous_utility(v_pop);
    let beta_high = mixed_engagement(v_pop, high);
    let beta_low = mixed_engagement(v_pop, -1.0);
    let psi_high = log_sum_exp(&[0.0, v_pop, high]);
    let psi_low = log_sum_exp(&[0.0, v_pop, -1.0]);

    let eng = p * (beta_high * g_high + lambda * (1.0 - g_high))
        + (1.0 - p) * (beta_low * g_low + lambda * (1.0 - g_low));
    let util = p * (psi_high * g_high + big_lambda * (1.0 - g_high))
        + (1.0 - p) * (psi_low * g_low + big_lambda * (1.0 - g_low));
    Ok(ClosedFormMetrics::from_per_period(delta, eng, util))
}
