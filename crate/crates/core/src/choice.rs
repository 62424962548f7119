//! Multinomial-logit user model.
//!
//! A user facing a two-slot recommendation picks the alternative with the
//! largest realized utility `V + ε` among the two recommended items and the
//! outside option (base utility 0), with independent zero-mean Gumbel noise.
//! The closed forms below are the usual softmax / log-sum-exp expressions,
//! always evaluated with max-subtraction since niche utilities can reach
//! several hundred nats.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::sample_gumbel_zero_mean;
use crate::error::{check_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ItemType {
    Popular,
    Niche,
    Outside,
}

/// The pair of item types shown in one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecommendationSet {
    slots: [ItemType; 2],
}

impl RecommendationSet {
    /// `{Popular, Popular}`.
    pub const POPULAR: Self = Self {
        slots: [ItemType::Popular, ItemType::Popular],
    };
    /// `{Popular, Niche}`: the mixed set every exploring policy shows.
    pub const DIVERSE: Self = Self {
        slots: [ItemType::Popular, ItemType::Niche],
    };
    /// `{Niche, Niche}`.
    pub const NICHE: Self = Self {
        slots: [ItemType::Niche, ItemType::Niche],
    };

    pub fn new(slot1: ItemType, slot2: ItemType) -> Result<Self> {
        if slot1 == ItemType::Outside || slot2 == ItemType::Outside {
            return Err(Error::InvalidState(
                "the outside option cannot be recommended".into(),
            ));
        }
        Ok(Self {
            slots: [slot1, slot2],
        })
    }

    /// Both slots of the given type. Panics on `Outside`.
    pub fn homogeneous(ty: ItemType) -> Self {
        match ty {
            ItemType::Popular => Self::POPULAR,
            ItemType::Niche => Self::NICHE,
            ItemType::Outside => panic!("the outside option cannot be recommended"),
        }
    }

    pub fn slot1(&self) -> ItemType {
        self.slots[0]
    }

    pub fn slot2(&self) -> ItemType {
        self.slots[1]
    }

    pub fn is_homogeneous(&self) -> bool {
        self.slots[0] == self.slots[1]
    }

    pub fn contains(&self, ty: ItemType) -> bool {
        self.slots.contains(&ty)
    }
}

/// A user's realized base utilities. `v_niche` is drawn once per user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub v_pop: f64,
    pub v_niche: f64,
}

impl UserProfile {
    pub fn new(v_pop: f64, v_niche: f64) -> Result<Self> {
        check_finite("v_pop", v_pop)?;
        check_finite("v_niche", v_niche)?;
        Ok(Self { v_pop, v_niche })
    }

    pub fn base_utility(&self, ty: ItemType) -> f64 {
        match ty {
            ItemType::Popular => self.v_pop,
            ItemType::Niche => self.v_niche,
            ItemType::Outside => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        check_finite("v_pop", self.v_pop)?;
        check_finite("v_niche", self.v_niche)
    }

    fn slot_utilities(&self, rec: &RecommendationSet) -> Result<(f64, f64)> {
        self.validate()?;
        Ok((
            self.base_utility(rec.slot1()),
            self.base_utility(rec.slot2()),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDistribution {
    pub p_slot1: f64,
    pub p_slot2: f64,
    pub p_outside: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Chosen {
    Slot1,
    Slot2,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChoiceOutcome {
    pub chosen: Chosen,
    pub realized_max_utility: f64,
}

impl ChoiceOutcome {
    /// Item type of the chosen alternative under the set it was drawn from.
    pub fn chosen_type(&self, rec: &RecommendationSet) -> ItemType {
        match self.chosen {
            Chosen::Slot1 => rec.slot1(),
            Chosen::Slot2 => rec.slot2(),
            Chosen::Outside => ItemType::Outside,
        }
    }

    pub fn engaged(&self) -> bool {
        self.chosen != Chosen::Outside
    }
}

/// `ln(Σ e^{x_i})` with max-subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Softmax over `{outside: 0, slot1, slot2}`.
pub fn mnl_choice_probabilities(
    rec: &RecommendationSet,
    profile: &UserProfile,
) -> Result<ChoiceDistribution> {
    let (v1, v2) = profile.slot_utilities(rec)?;
    let m = v1.max(v2).max(0.0);
    let w0 = (-m).exp();
    let w1 = (v1 - m).exp();
    let w2 = (v2 - m).exp();
    let z = w0 + w1 + w2;
    let engagement = (w1 + w2) / z;
    Ok(ChoiceDistribution {
        p_slot1: w1 / z,
        p_slot2: w2 / z,
        p_outside: 1.0 - engagement,
    })
}

/// Probability that the user picks one of the recommended items.
pub fn engagement_probability(rec: &RecommendationSet, profile: &UserProfile) -> Result<f64> {
    let dist = mnl_choice_probabilities(rec, profile)?;
    Ok(1.0 - dist.p_outside)
}

/// `E[max(u_outside, u_slot1, u_slot2)] = ln(1 + e^{V1} + e^{V2})`.
pub fn expected_max_utility(rec: &RecommendationSet, profile: &UserProfile) -> Result<f64> {
    let (v1, v2) = profile.slot_utilities(rec)?;
    Ok(log_sum_exp(&[0.0, v1, v2]))
}

/// Draws one period's choice by direct argmax of `V + ε`.
///
/// Floating-point ties go to the earliest alternative in the order
/// slot 1, slot 2, outside.
pub fn sample_choice<R: Rng + ?Sized>(
    rec: &RecommendationSet,
    profile: &UserProfile,
    rng: &mut R,
) -> Result<ChoiceOutcome> {
    let (v1, v2) = profile.slot_utilities(rec)?;
    let u1 = v1 + sample_gumbel_zero_mean(rng);
    let u2 = v2 + sample_gumbel_zero_mean(rng);
    let u0 = sample_gumbel_zero_mean(rng);

    let mut chosen = Chosen::Slot1;
    let mut best = u1;
    if u2 > best {
        chosen = Chosen::Slot2;
        best = u2;
    }
    if u0 > best {
        chosen = Chosen::Outside;
        best = u0;
    }
    Ok(ChoiceOutcome {
        chosen,
        realized_max_utility: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::E;

    fn profile(v_pop: f64, v_niche: f64) -> UserProfile {
        UserProfile::new(v_pop, v_niche).unwrap()
    }

    #[test]
    fn popular_pair_matches_plotted_engagement() {
        let d = mnl_choice_probabilities(&RecommendationSet::POPULAR, &profile(1.0, 0.0)).unwrap();
        assert!((d.p_outside - 1.0 / (1.0 + 2.0 * E)).abs() < 1e-15);
        let eng = engagement_probability(&RecommendationSet::POPULAR, &profile(1.0, 0.0)).unwrap();
        assert!((eng - 0.844_637_596_503_036_4).abs() < 1e-15);
        let util = expected_max_utility(&RecommendationSet::POPULAR, &profile(1.0, 0.0)).unwrap();
        assert!((util - 1.861_994_804_058_251).abs() < 1e-14);
    }

    #[test]
    fn symmetric_case_is_uniform() {
        let u = profile(0.0, 0.0);
        let d = mnl_choice_probabilities(&RecommendationSet::DIVERSE, &u).unwrap();
        for p in [d.p_slot1, d.p_slot2, d.p_outside] {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let eng = engagement_probability(&RecommendationSet::DIVERSE, &u).unwrap();
        assert!((eng - 2.0 / 3.0).abs() < 1e-15);
        let util = expected_max_utility(&RecommendationSet::DIVERSE, &u).unwrap();
        assert!((util - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn diverse_set_low_niche_user() {
        let u = profile(1.0, -1.0);
        let z = 1.0 + E + 1.0 / E;
        let d = mnl_choice_probabilities(&RecommendationSet::DIVERSE, &u).unwrap();
        assert!((d.p_outside - 1.0 / z).abs() < 1e-15);
        assert!((d.p_outside - 0.244_728).abs() < 1e-6);
        let eng = engagement_probability(&RecommendationSet::DIVERSE, &u).unwrap();
        assert!((eng - 0.755_272).abs() < 1e-6);
        let util = expected_max_utility(&RecommendationSet::DIVERSE, &u).unwrap();
        assert!((util - z.ln()).abs() < 1e-15);
        assert!((util - 1.407_606).abs() < 1e-6);
    }

    #[test]
    fn extreme_utilities_do_not_overflow() {
        // (1 - p) / p at p = 1e-3
        let u = profile(1.0, 999.0);
        let d = mnl_choice_probabilities(&RecommendationSet::NICHE, &u).unwrap();
        assert!(d.p_slot1.is_finite() && d.p_outside >= 0.0);
        assert!((d.p_slot1 - 0.5).abs() < 1e-15);
        let util = expected_max_utility(&RecommendationSet::NICHE, &u).unwrap();
        assert!((util - (999.0 + 2f64.ln())).abs() < 1e-12);
        let u = profile(-800.0, -900.0);
        let eng = engagement_probability(&RecommendationSet::DIVERSE, &u).unwrap();
        assert_eq!(eng, 0.0);
    }

    #[test]
    fn non_finite_utility_is_rejected() {
        assert!(UserProfile::new(f64::NAN, 0.0).is_err());
        let bad = UserProfile {
            v_pop: 0.0,
            v_niche: f64::INFINITY,
        };
        assert!(mnl_choice_probabilities(&RecommendationSet::DIVERSE, &bad).is_err());
        assert!(expected_max_utility(&RecommendationSet::DIVERSE, &bad).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_choice(&RecommendationSet::DIVERSE, &bad, &mut rng).is_err());
    }

    #[test]
    fn outside_cannot_be_recommended() {
        assert!(RecommendationSet::new(ItemType::Popular, ItemType::Outside).is_err());
        let rec = RecommendationSet::new(ItemType::Niche, ItemType::Popular).unwrap();
        assert_eq!(rec.slot1(), ItemType::Niche);
        assert!(!rec.is_homogeneous());
    }

    #[test]
    fn dominant_alternative_always_wins() {
        let u = profile(0.0, 500.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100_000 {
            let o = sample_choice(&RecommendationSet::DIVERSE, &u, &mut rng).unwrap();
            assert_eq!(o.chosen, Chosen::Slot2);
            assert_eq!(o.chosen_type(&RecommendationSet::DIVERSE), ItemType::Niche);
        }
    }

    #[test]
    fn realized_max_is_the_winner() {
        let u = profile(0.3, -0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let o = sample_choice(&RecommendationSet::DIVERSE, &u, &mut rng).unwrap();
            assert!(o.realized_max_utility.is_finite());
        }
    }

    #[test]
    fn log_add_exp_matches_log_sum_exp() {
        for (a, b) in [(0.0, 0.0), (1000.0, -3.0), (-2.0, 5.0)] {
            assert!((log_add_exp(a, b) - log_sum_exp(&[a, b])).abs() < 1e-12);
        }
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 2.0), 2.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rec_strategy() -> impl Strategy<Value = RecommendationSet> {
            prop_oneof![
                Just(RecommendationSet::POPULAR),
                Just(RecommendationSet::DIVERSE),
                Just(RecommendationSet::NICHE),
            ]
        }

        proptest! {
            #[test]
            fn probabilities_form_a_distribution(
                rec in rec_strategy(), vp in -700.0f64..700.0, vn in -700.0f64..700.0
            ) {
                let u = profile(vp, vn);
                let d = mnl_choice_probabilities(&rec, &u).unwrap();
                for p in [d.p_slot1, d.p_slot2, d.p_outside] {
                    prop_assert!((0.0..=1.0).contains(&p));
                }
                prop_assert!((d.p_slot1 + d.p_slot2 + d.p_outside - 1.0).abs() < 1e-12);
                let eng = engagement_probability(&rec, &u).unwrap();
                prop_assert_eq!(eng + d.p_outside, 1.0);
            }

            #[test]
            fn expected_max_is_sandwiched(
                rec in rec_strategy(), vp in -50.0f64..800.0, vn in -50.0f64..800.0
            ) {
                let u = profile(vp, vn);
                let lo = 0f64.max(u.base_utility(rec.slot1())).max(u.base_utility(rec.slot2()));
                let m = expected_max_utility(&rec, &u).unwrap();
                prop_assert!(m >= lo);
                prop_assert!(m <= lo + 3f64.ln() + 1e-12);
            }

            #[test]
            fn expected_max_is_monotone(vp in -20.0f64..20.0, vn in -20.0f64..20.0, bump in 0.0f64..5.0) {
                let base = expected_max_utility(&RecommendationSet::DIVERSE, &profile(vp, vn)).unwrap();
                let up_pop = expected_max_utility(&RecommendationSet::DIVERSE, &profile(vp + bump, vn)).unwrap();
                let up_niche = expected_max_utility(&RecommendationSet::DIVERSE, &profile(vp, vn + bump)).unwrap();
                prop_assert!(up_pop >= base && up_niche >= base);
            }
        }
    }
}
