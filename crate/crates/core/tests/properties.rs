use proptest::prelude::*;

use misalign_core::analytics::{
    build_constants, first_passage_pmf, first_passage_time, WalkBoundary,
};
use misalign_core::choice::{ChoiceOutcome, Chosen, RecommendationSet, UserProfile};
use misalign_core::policies::{pear_posterior, DiceState, PearState, Policy, PolicySpec};

fn outcome(chosen: Chosen) -> ChoiceOutcome {
    ChoiceOutcome {
        chosen,
        realized_max_utility: 0.0,
    }
}

/// `true` = niche pick (slot 2 of the diverse set), otherwise popular or outside.
fn picks() -> impl Strategy<Value = Vec<(bool, bool)>> {
    prop::collection::vec((any::<bool>(), any::<bool>()), 1..300)
}

fn as_outcome((niche, outside): (bool, bool)) -> ChoiceOutcome {
    outcome(if niche {
        Chosen::Slot2
    } else if outside {
        Chosen::Outside
    } else {
        Chosen::Slot1
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn pear_switch_is_the_first_passage(p in 1e-3f64..0.6, v_pop in 0.0f64..3.0, trace in picks()) {
        let k = build_constants(p, v_pop).unwrap();
        let mut state = PearState::new(k);
        let mut rec = state.step(None).unwrap();
        let mut switched_at = None;
        let mut below_at = None;
        let (mut s, mut f) = (0u64, 0u64);
        for (i, &pick) in trace.iter().enumerate() {
            prop_assert_eq!(rec, RecommendationSet::DIVERSE);
            rec = state.step(Some(&as_outcome(pick))).unwrap();
            if pick.0 { s += 1 } else { f += 1 }
            if below_at.is_none() && pear_posterior(s, f, p, &k).unwrap() < p {
                below_at = Some(i + 1);
            }
            if state.switched {
                switched_at = Some(i + 1);
                break;
            }
        }
        let walk = first_passage_time(&WalkBoundary::from_step(k.c).unwrap(), trace.iter().map(|t| t.0));
        prop_assert_eq!(switched_at, walk);
        prop_assert_eq!(below_at, walk);
    }

    #[test]
    fn pear_switch_is_absorbing(p in 0.01f64..0.5, trace in picks()) {
        let mut state = PearState::for_prior(p, 1.0).unwrap();
        state.step(None).unwrap();
        let mut frozen = None;
        for pick in trace {
            let rec = state.step(Some(&as_outcome(pick))).unwrap();
            match frozen {
                None if state.switched => frozen = Some((state.successes, state.failures, state.posterior())),
                Some(snapshot) => {
                    prop_assert_eq!(rec, RecommendationSet::POPULAR);
                    prop_assert_eq!(snapshot, (state.successes, state.failures, state.posterior()));
                }
                None => prop_assert_eq!(rec, RecommendationSet::DIVERSE),
            }
        }
    }

    #[test]
    fn posterior_stays_a_probability(p in 1e-6f64..0.999, s in 0u64..5000, f in 0u64..5000) {
        let k = build_constants(p, 1.0).unwrap();
        let post = pear_posterior(s, f, p, &k).unwrap();
        prop_assert!((0.0..=1.0).contains(&post));
        if s == 0 && f == 0 {
            prop_assert_eq!(post, p);
        }
    }

    #[test]
    fn dice_phase_discipline(explore_len in 0u64..25, trace in picks()) {
        let mut state = DiceState::new(explore_len);
        let mut last = None;
        for (t, pick) in trace.into_iter().enumerate() {
            let rec = state.step(last.as_ref()).unwrap();
            if (t as u64) < explore_len {
                prop_assert_eq!(rec, RecommendationSet::DIVERSE);
            } else {
                prop_assert!(rec.is_homogeneous());
                prop_assert_eq!(Some(rec.slot1()), state.committed);
            }
            prop_assert!(state.count_pop + state.count_niche <= explore_len);
            last = Some(as_outcome(pick));
        }
    }

    #[test]
    fn app_and_oracle_ignore_history(v_niche in -1.0f64..50.0, trace in picks()) {
        let profile = UserProfile::new(1.0, v_niche).unwrap();
        for spec in [PolicySpec::App, PolicySpec::Oracle] {
            let mut policy = Policy::start(&spec, &profile).unwrap();
            let first = policy.next(None).unwrap();
            for &pick in &trace {
                prop_assert_eq!(policy.next(Some(&as_outcome(pick))).unwrap(), first);
            }
        }
    }

    #[test]
    fn first_passage_mass_is_conserved(rho in 0.0f64..=1.0, x in 0.01f64..0.99, k_max in 1usize..400) {
        let pmf = first_passage_pmf(rho, x, k_max).unwrap();
        prop_assert!((pmf.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!((pmf.prob(1) - (1.0 - rho)).abs() < 1e-15);
        prop_assert!(pmf.pmf.iter().all(|&m| m >= 0.0));
    }
}
