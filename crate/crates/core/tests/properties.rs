//! Whole-auction invariants on random instances with mixed strategies.

use proptest::prelude::*;
use proptest::strategy::Strategy as PropStrategy;
use smra_core::mechanism::{default_max_rounds, price_of, replay_trace, run_auction};
use smra_core::oracle::{measure_rationality, optimal_welfare, welfare};
use smra_core::{random_near_submodular, Error, ItemSet, Rational, Strategy, Valuation};

fn pick_strategy(code: u8, m: usize) -> Strategy {
    match code % 5 {
        0 => Strategy::Truthful,
        1 => Strategy::locally_optimal(),
        2 => Strategy::secure_profit_max(),
        3 => Strategy::LocallyOptimal {
            start: smra_core::LocalStart::Empty,
        },
        _ => Strategy::Scripted(vec![ItemSet::full(m); 6]),
    }
}

#[derive(Debug, Clone)]
struct Instance {
    alpha: i64,
    valuations: Vec<Valuation>,
    strategies: Vec<Strategy>,
    seed: u64,
}

fn instance() -> impl PropStrategy<Value = Instance> {
    (1usize..=5, 1usize..=4, 1i64..=3, any::<u64>(), any::<u64>()).prop_flat_map(|(m, n, alpha, vseed, seed)| {
        proptest::collection::vec(any::<u8>(), n).prop_map(move |codes| Instance {
            alpha,
            valuations: (0..codes.len())
                .map(|i| {
                    random_near_submodular(m, Rational::from_integer(alpha), 40, vseed.wrapping_add(i as u64)).unwrap()
                })
                .collect(),
            strategies: codes.iter().map(|&c| pick_strategy(c, m)).collect(),
            seed,
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mixed_auctions_keep_their_invariants(inst in instance()) {
        let max_rounds = default_max_rounds(&inst.valuations);
        let out = match run_auction(&inst.valuations, &inst.strategies, inst.seed, max_rounds) {
            Ok(out) => out,
            Err(Error::Divergence { partial, .. }) => *partial,
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        out.verify().unwrap();
        for r in &out.trace {
            prop_assert!(!r.excess.is_empty());
        }

        let opt = optimal_welfare(&inst.valuations).unwrap();
        prop_assert!(welfare(&out.allocation, &inst.valuations).unwrap() <= opt.welfare);

        for (i, (v, s)) in inst.valuations.iter().zip(&inst.strategies).enumerate() {
            for r in &out.trace {
                let held = r.provisional[i];
                match s {
                    // Secure bidders stay individually rational whatever the others do.
                    Strategy::SecureProfitMax { .. } => {
                        for sub in held.subsets() {
                            prop_assert!(v.value(sub) >= price_of(&r.prices_after, sub));
                        }
                    }
                    // Truthful bidders stay alpha-rational on every subset.
                    Strategy::Truthful => {
                        for sub in held.subsets() {
                            prop_assert!(inst.alpha * v.value(sub) >= price_of(&r.prices_after, sub));
                        }
                    }
                    _ => {}
                }
            }
        }

        if !out.trace.is_empty() {
            let state = replay_trace(&out.trace).unwrap();
            prop_assert_eq!(state.provisional(), out.allocation.as_slice());
            prop_assert_eq!(state.prices(), out.prices.as_slice());
        }
    }

    #[test]
    fn uniform_secure_auctions_are_individually_rational(inst in instance()) {
        let strategies = vec![Strategy::secure_profit_max(); inst.valuations.len()];
        let out = run_auction(&inst.valuations, &strategies, inst.seed, default_max_rounds(&inst.valuations)).unwrap();
        let report = measure_rationality(&out, &inst.valuations).unwrap();
        prop_assert!(report.lambda <= smra_core::ExtRational::one());
        for (i, v) in inst.valuations.iter().enumerate() {
            prop_assert!(out.utility(i, v) >= 0);
        }
    }

    #[test]
    fn same_seed_same_outcome(inst in instance()) {
        let max_rounds = default_max_rounds(&inst.valuations);
        let a = run_auction(&inst.valuations, &inst.strategies, inst.seed, max_rounds);
        let b = run_auction(&inst.valuations, &inst.strategies, inst.seed, max_rounds);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(Error::Divergence { partial: a, .. }), Err(Error::Divergence { partial: b, .. })) => prop_assert_eq!(a, b),
            (a, b) => prop_assert!(false, "mismatch {:?} / {:?}", a.is_ok(), b.is_ok()),
        }
    }
}

#[test]
fn nonsecure_bidder_is_punished_and_secure_replacement_is_not() {
    let s = smra_core::scenario::build_nonsecure_punishment().unwrap();
    let valuations = s.valuations();
    let max_rounds = default_max_rounds(&valuations);
    for seed in 0..30 {
        let out = run_auction(&valuations, &s.strategies(), seed, max_rounds).unwrap();
        assert!(out.utility(0, &valuations[0]) < 0, "seed {seed}");
    }

    let mut secure = s.strategies();
    secure[0] = Strategy::secure_profit_max();
    for seed in 0..30 {
        let out = run_auction(&valuations, &secure, seed, max_rounds).unwrap();
        assert!(out.utility(0, &valuations[0]) >= 0, "seed {seed}");
    }

    let copies = valuations[1..].to_vec();
    let opt = optimal_welfare(&copies).unwrap();
    assert_eq!(opt.welfare, 28);
    for seed in 0..30 {
        let out = run_auction(&copies, &secure[1..], seed, max_rounds).unwrap();
        assert_eq!(welfare(&out.allocation, &copies).unwrap(), opt.welfare, "seed {seed}");
    }
}

#[test]
fn truthful_tight_prices_stay_below_alpha() {
    let s = smra_core::scenario::build_truthful_tight(4, 3, 60).unwrap();
    let valuations = s.valuations();
    for seed in 0..50 {
        let out = run_auction(&valuations, &s.strategies(), seed, default_max_rounds(&valuations)).unwrap();
        let report = measure_rationality(&out, &valuations).unwrap();
        assert!(report.lambda <= smra_core::ExtRational::integer(3));
    }
}
