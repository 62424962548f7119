//! Noise and niche-utility distributions.
//!
//! Both niche families are centred so that the mean niche utility equals the
//! outside option's (zero):
//!
//! * two-point: `(1 - p) / p` with probability `p`, otherwise `-1`;
//! * generalized Pareto with location `-1`, scale `1 - ξ`, shape `ξ ∈ [0, 1)`.
//!
//! Inverse transforms use `1 - U` so that `U = 0` never reaches `ln(0)`.

use rand::distributions::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Largest niche utility the weighted sampler will emit. Mass beyond it is
/// folded onto the cap; at ξ = 0.99 that shifts the mean by under 1e-3.
pub const NICHE_UTILITY_CAP: f64 = 1e300;

/// Gumbel(location −γ, scale 1): mean 0, variance π²/6.
pub fn sample_gumbel_zero_mean<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -(-u.ln()).ln() - EULER_GAMMA
}

pub fn two_point_sample<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<f64> {
    check_two_point(p)?;
    Ok(if rng.gen::<f64>() < p {
        two_point_high(p)
    } else {
        -1.0
    })
}

/// High value `(1 - p) / p` of the two-point law.
pub fn two_point_high(p: f64) -> f64 {
    (1.0 - p) / p
}

pub fn gpd_cdf(xi: f64, x: f64) -> Result<f64> {
    check_xi(xi)?;
    if x.is_nan() || x < -1.0 {
        return Err(Error::Domain {
            value: x,
            reason: "generalized Pareto support is [-1, inf)",
        });
    }
    let shifted = x + 1.0;
    if xi == 0.0 {
        return Ok(-(-shifted).exp_m1());
    }
    let log_survival = -(xi / (1.0 - xi) * shifted).ln_1p() / xi;
    Ok(-log_survival.exp_m1())
}

/// Quantile expressed through `s = -ln(1 - u)`, which is Exp(1) under the
/// uniform. Working in `s` keeps extreme upper quantiles representable.
pub fn gpd_quantile_from_log_tail(xi: f64, s: f64) -> f64 {
    if xi == 0.0 {
        -1.0 + s
    } else {
        -1.0 + (1.0 - xi) * (xi * s).exp_m1() / xi
    }
}

pub fn gpd_sample<R: Rng + ?Sized>(xi: f64, rng: &mut R) -> Result<f64> {
    check_xi(xi)?;
    let u: f64 = rng.gen();
    let s = -(1.0 - u).ln();
    Ok(gpd_quantile_from_log_tail(xi, s))
}

fn check_two_point(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "p",
            value: p,
            reason: "two-point probability must lie in (0, 1)",
        })
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if (0.0..1.0).contains(&xi) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "xi",
            value: xi,
            reason: "shape must lie in [0, 1) for the mean to exist",
        })
    }
}

/// The niche base-utility law, both variants mean zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NicheDistribution {
    TwoPoint { p: f64 },
    Gpd { xi: f64 },
}

/// A niche utility drawn from a proposal law, with its likelihood ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedDraw {
    pub value: f64,
    pub weight: f64,
}

impl NicheDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NicheDistribution::TwoPoint { p } => check_two_point(p),
            NicheDistribution::Gpd { xi } => check_xi(xi),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            NicheDistribution::TwoPoint { p } => two_point_sample(p, rng),
            NicheDistribution::Gpd { xi } => gpd_sample(xi, rng),
        }
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        match *self {
            NicheDistribution::TwoPoint { p } => {
                check_two_point(p)?;
                Ok(if x < -1.0 {
                    0.0
                } else if x < two_point_high(p) {
                    1.0 - p
                } else {
                    1.0
                })
            }
            NicheDistribution::Gpd { xi } => gpd_cdf(xi, x),
        }
    }

    /// Draws from the defensive mixture `½·F + ½·G` and returns the draw with
    /// weight `dF/dq`, so that `E_q[w·h(V)] = E_F[h(V)]`.
    ///
    /// `G` puts half its mass on each two-point atom, or for the Pareto
    /// family draws `s = -ln(1 - u)` from Exp(1 - ξ) instead of Exp(1). The
    /// weights are bounded by 2 and `w·V` has finite variance for every
    /// `ξ < 1`, which plain sampling lacks once `ξ ≥ ½`.
    pub fn sample_weighted<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WeightedDraw> {
        self.validate()?;
        match *self {
            NicheDistribution::TwoPoint { p } => {
                let q_high = 0.5 * p + 0.25;
                if rng.gen::<f64>() < q_high {
                    Ok(WeightedDraw {
                        value: two_point_high(p),
                        weight: p / q_high,
                    })
                } else {
                    Ok(WeightedDraw {
                        value: -1.0,
                        weight: (1.0 - p) / (1.0 - q_high),
                    })
                }
            }
            NicheDistribution::Gpd { xi } => {
                let rate = 1.0 - xi;
                let heavy = rng.gen::<bool>();
                let u: f64 = rng.sample(Open01);
                let mut s = -u.ln();
                if heavy {
                    s /= rate;
                }
                if xi > 0.0 {
                    let s_cap = (NICHE_UTILITY_CAP * xi / (1.0 - xi)).ln_1p() / xi;
                    s = s.min(s_cap);
                }
                // f/q = 2 / (1 + r·e^{(1-r)s}); exponent is capped above.
                let weight = 2.0 / (1.0 + rate * (xi * s).exp());
                Ok(WeightedDraw {
                    value: gpd_quantile_from_log_tail(xi, s),
                    weight,
                })
            }
        }
    }
}
