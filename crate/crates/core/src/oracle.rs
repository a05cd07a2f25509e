//! Exact optimal welfare, realized welfare and the bounds they must satisfy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::itemset::ItemSet;
use crate::mechanism::{price_of, AuctionOutcome};
use crate::ratio::{ExtRational, Rational};
use crate::strategy::StrategyKind;
use crate::valuation::Valuation;

/// Largest universe the welfare oracle accepts.
pub const MAX_ORACLE_ITEMS: usize = 16;

/// Work budget for the oracle, counted as `n · 3^m` subset pairs.
pub const ORACLE_WORK_BUDGET: u64 = 500_000_000;

/// Largest provisional set whose subsets are scanned when measuring
/// rationality; bigger sets only contribute their full-set ratio.
pub const MAX_RATIONALITY_SUBSET_ITEMS: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimalAllocation {
    pub welfare: i64,
    pub assignment: Vec<ItemSet>,
}

fn common_universe(valuations: &[Valuation]) -> Result<usize> {
    let m = valuations
        .first()
        .map(Valuation::universe_size)
        .ok_or_else(|| Error::InvalidArgument("no bidders".into()))?;
    if let Some(v) = valuations.iter().find(|v| v.universe_size() != m) {
        return Err(Error::UniverseMismatch {
            expected: m,
            found: v.universe_size(),
        });
    }
    Ok(m)
}

/// Maximum of `Σ_i v_i(S_i)` over disjoint `S_1, …, S_n`, with one optimal
/// assignment.
///
/// `W_i[X]` is the best welfare from bidders `0..=i` using items of `X`;
/// `W_i[X] = max_{Y ⊆ X} v_i(Y) + W_{i-1}[X ∖ Y]`. Ties keep the smallest
/// `Y` in bitmask order.
pub fn optimal_welfare(valuations: &[Valuation]) -> Result<OptimalAllocation> {
    let m = common_universe(valuations)?;
    let n = valuations.len();
    let work = (n as u64).saturating_mul(3u64.saturating_pow(m as u32));
    if m > MAX_ORACLE_ITEMS || work > ORACLE_WORK_BUDGET {
        return Err(Error::OracleTooLarge { bidders: n, items: m });
    }
    let size = 1usize << m;
    let mut prev = vec![0i64; size];
    let mut choice: Vec<Vec<u32>> = Vec::with_capacity(n);
    for v in valuations {
        let values = v.values();
        let mut cur = vec![0i64; size];
        let mut pick = vec![0u32; size];
        for mask in 0..size {
            let mut best = i64::MIN;
            let mut best_sub = 0u32;
            for sub in ItemSet::from_bits(mask as u32).subsets() {
                let w = values[sub.bits() as usize] + prev[mask ^ sub.bits() as usize];
                if w > best {
                    best = w;
                    best_sub = sub.bits();
                }
            }
            cur[mask] = best;
            pick[mask] = best_sub;
        }
        choice.push(pick);
        prev = cur;
    }
    let mut assignment = vec![ItemSet::EMPTY; n];
    let mut mask = (size - 1) as u32;
    for i in (0..n).rev() {
        let sub = choice[i][mask as usize];
        assignment[i] = ItemSet::from_bits(sub);
        mask ^= sub;
    }
    Ok(OptimalAllocation {
        welfare: prev[size - 1],
        assignment,
    })
}

/// `Σ_i v_i(S_i)` after checking that the sets are pairwise disjoint.
pub fn welfare(allocation: &[ItemSet], valuations: &[Valuation]) -> Result<i64> {
    if allocation.len() != valuations.len() {
        return Err(Error::InvalidArgument(format!(
            "{} sets for {} bidders",
            allocation.len(),
            valuations.len()
        )));
    }
    for (i, (s, v)) in allocation.iter().zip(valuations).enumerate() {
        if !s.within(v.universe_size()) {
            return Err(Error::UniverseMismatch {
                expected: v.universe_size(),
                found: s.span(),
            });
        }
        for (k, other) in allocation.iter().enumerate().skip(i + 1) {
            let shared = s.intersection(*other);
            if !shared.is_empty() {
                return Err(Error::InvalidAllocation {
                    first: i,
                    second: k,
                    shared,
                });
            }
        }
    }
    Ok(allocation.iter().zip(valuations).map(|(s, v)| v.value(*s)).sum())
}

/// `ω / ω*`, taken as 1 when the optimum is 0.
pub fn welfare_ratio(welfare: i64, optimal: &OptimalAllocation) -> Rational {
    if optimal.welfare == 0 {
        Rational::from_integer(1)
    } else {
        Rational::new(welfare, optimal.welfare)
    }
}

/// A provisional holding attaining the measured rationality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalityWitness {
    /// Number of rounds completed when the holding was observed.
    pub round: usize,
    pub bidder: usize,
    pub subset: ItemSet,
    pub price: i64,
    pub value: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalityReport {
    /// `max p(S') / v(S')` over every round, bidder and positively priced
    /// `S' ⊆ S_i`; 1 when no holding was ever positively priced.
    pub lambda: ExtRational,
    pub witness: Option<RationalityWitness>,
    /// The same maximum restricted to whole provisional sets `S' = S_i`.
    pub full_set_lambda: ExtRational,
    pub full_set_witness: Option<RationalityWitness>,
    /// False when some provisional set was too large for the subset scan.
    pub subset_scan_complete: bool,
}

fn keep_max(slot: &mut Option<(ExtRational, RationalityWitness)>, ratio: ExtRational, w: RationalityWitness) {
    if slot.is_none_or(|(r, _)| ratio > r) {
        *slot = Some((ratio, w));
    }
}

/// Measures how far above their value bidders were ever committed to pay.
pub fn measure_rationality(outcome: &AuctionOutcome, valuations: &[Valuation]) -> Result<RationalityReport> {
    if outcome.allocation.len() != valuations.len() {
        return Err(Error::InvalidArgument(format!(
            "outcome has {} bidders, {} valuations given",
            outcome.allocation.len(),
            valuations.len()
        )));
    }
    let mut subset_best = None;
    let mut full_best = None;
    let mut complete = true;
    for record in &outcome.trace {
        let prices = &record.prices_after;
        for (bidder, (&held, v)) in record.provisional.iter().zip(valuations).enumerate() {
            if held.is_empty() {
                continue;
            }
            let witness = |subset: ItemSet| RationalityWitness {
                round: record.t + 1,
                bidder,
                subset,
                price: price_of(prices, subset),
                value: v.value(subset),
            };
            let w = witness(held);
            if w.price > 0 {
                keep_max(&mut full_best, ExtRational::new(w.price, w.value), w);
            }
            if held.len() > MAX_RATIONALITY_SUBSET_ITEMS {
                complete = false;
                if w.price > 0 {
                    keep_max(&mut subset_best, ExtRational::new(w.price, w.value), w);
                }
                continue;
            }
            for sub in held.subsets().skip(1) {
                let w = witness(sub);
                if w.price > 0 {
                    keep_max(&mut subset_best, ExtRational::new(w.price, w.value), w);
                }
            }
        }
    }
    Ok(RationalityReport {
        lambda: subset_best.map_or(ExtRational::one(), |(r, _)| r),
        witness: subset_best.map(|(_, w)| w),
        full_set_lambda: full_best.map_or(ExtRational::one(), |(r, _)| r),
        full_set_witness: full_best.map(|(_, w)| w),
        subset_scan_complete: complete,
    })
}

/// The welfare and rationality guarantees proved for each strategy family
/// on α-near-submodular valuations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guarantee {
    /// `ω* ≤ (1 + α) ω + m` and `λ ≤ α`.
    Truthful,
    /// `ω* ≤ (1 + α²) ω + α m` and `λ ≤ α`.
    LocallyOptimal,
    /// `ω* ≤ (1 + α) ω` and `λ ≤ 1`.
    SecureProfitMax,
}

impl Guarantee {
    pub fn for_kind(kind: StrategyKind) -> Option<Self> {
        match kind {
            StrategyKind::Truthful => Some(Guarantee::Truthful),
            StrategyKind::LocallyOptimal => Some(Guarantee::LocallyOptimal),
            StrategyKind::SecureProfitMax => Some(Guarantee::SecureProfitMax),
            StrategyKind::Scripted | StrategyKind::Custom => None,
        }
    }

    /// Checks the welfare bound exactly, scaling by the denominator of `α`.
    pub fn welfare_bound_holds(self, alpha: Rational, optimal: i64, welfare: i64, m: usize) -> bool {
        let a = i128::from(*alpha.numer());
        let b = i128::from(*alpha.denom());
        let (opt, w, m) = (i128::from(optimal), i128::from(welfare), m as i128);
        match self {
            Guarantee::Truthful => opt * b <= (b + a) * w + m * b,
            Guarantee::LocallyOptimal => opt * b * b <= (b * b + a * a) * w + a * b * m,
            Guarantee::SecureProfitMax => opt * b <= (b + a) * w,
        }
    }

    /// Largest `λ` the guarantee allows.
    pub fn rationality_bound(self, alpha: Rational) -> Rational {
        match self {
            Guarantee::Truthful | Guarantee::LocallyOptimal => alpha,
            Guarantee::SecureProfitMax => Rational::from_integer(1),
        }
    }

    pub fn rationality_bound_holds(self, alpha: Rational, lambda: ExtRational) -> bool {
        lambda <= ExtRational::Finite(self.rationality_bound(alpha))
    }
}
