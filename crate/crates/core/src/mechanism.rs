//! The simultaneous multiple-round auction engine.
//!
//! Each round every bidder submits a conditional bid `T_i ⊆ Ω ∖ S_i`. An item
//! named in at least one bid is in excess demand: its price rises by one
//! unit and a new standing high bidder is drawn uniformly from the bidders
//! that named it. Items nobody bid on keep their price and holder. The
//! auction stops once every conditional bid is empty and each bidder keeps
//! her provisional set at the posted prices.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::itemset::{ItemSet, MAX_ITEMS};
use crate::strategy::{BidContext, Strategy};
use crate::valuation::Valuation;

/// One winner selection: the bidders that named `item` and the one chosen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Draw {
    pub item: usize,
    pub candidates: Vec<usize>,
    pub chosen: usize,
}

/// Everything that happened in one round. Serialized one per line in trace
/// files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub prices_before: Vec<i64>,
    pub bids: Vec<ItemSet>,
    pub excess: ItemSet,
    pub draws: Vec<Draw>,
    pub prices_after: Vec<i64>,
    pub provisional: Vec<ItemSet>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuctionState {
    round: usize,
    prices: Vec<i64>,
    provisional: Vec<ItemSet>,
    history: Vec<RoundRecord>,
}

/// Final allocation, prices and the full trace of a completed (or, inside a
/// [`Error::Divergence`], a truncated) auction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub allocation: Vec<ItemSet>,
    pub prices: Vec<i64>,
    pub rounds: usize,
    pub trace: Vec<RoundRecord>,
}

/// `Σ_{j ∈ s ∩ held} p_j + Σ_{j ∈ s ∖ held} (p_j + increment)`.
pub fn personalized_price_with(prices: &[i64], held: ItemSet, s: ItemSet, increment: i64) -> i64 {
    s.iter()
        .map(|j| {
            if held.contains(j) {
                prices[j]
            } else {
                prices[j] + increment
            }
        })
        .sum()
}

/// `p(s)` at posted prices.
pub fn price_of(prices: &[i64], s: ItemSet) -> i64 {
    s.iter().map(|j| prices[j]).sum()
}

/// The state at round 0: zero prices, empty provisional sets.
pub fn init_auction(m: usize, n: usize) -> Result<AuctionState> {
    if m == 0 || m > MAX_ITEMS {
        return Err(Error::InvalidArgument(format!(
            "item count {m} must be in 1..={MAX_ITEMS}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("an auction needs at least one bidder".into()));
    }
    Ok(AuctionState {
        round: 0,
        prices: vec![0; m],
        provisional: vec![ItemSet::EMPTY; n],
        history: Vec::new(),
    })
}

impl AuctionState {
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn items(&self) -> usize {
        self.prices.len()
    }

    pub fn bidders(&self) -> usize {
        self.provisional.len()
    }

    pub fn prices(&self) -> &[i64] {
        &self.prices
    }

    pub fn provisional(&self) -> &[ItemSet] {
        &self.provisional
    }

    pub fn history(&self) -> &[RoundRecord] {
        &self.history
    }

    /// Standing high bidder of `item`, if any.
    pub fn holder(&self, item: usize) -> Option<usize> {
        self.provisional.iter().position(|s| s.contains(item))
    }

    /// Price of `s` as seen by `bidder`: posted prices on her provisional
    /// items, one unit more everywhere else.
    pub fn personalized_price(&self, bidder: usize, s: ItemSet) -> i64 {
        personalized_price_with(&self.prices, self.provisional[bidder], s, 1)
    }

    /// Applies one round of conditional bids, drawing winners from `rng` in
    /// ascending item order.
    pub fn run_round<R: Rng + ?Sized>(&mut self, bids: &[ItemSet], rng: &mut R) -> Result<&RoundRecord> {
        self.apply_round(bids, |_, candidates| Ok(rng.gen_range(0..candidates.len())))
    }

    /// Applies a recorded round, taking winners from its draws instead of a
    /// random source. Fails if the recorded bids or draws are inconsistent
    /// with the current state.
    pub fn replay_round(&mut self, record: &RoundRecord) -> Result<&RoundRecord> {
        if record.t != self.round {
            return Err(Error::InvalidTrace(format!(
                "record for round {} applied at round {}",
                record.t, self.round
            )));
        }
        if record.prices_before != self.prices {
            return Err(Error::InvalidTrace(format!(
                "round {}: prices_before mismatch",
                record.t
            )));
        }
        let mut draws = record.draws.iter().filter(|d| d.candidates.len() > 1);
        let t = record.t;
        self.apply_round(&record.bids, |item, candidates| {
            let draw = draws
                .next()
                .ok_or_else(|| Error::InvalidTrace(format!("round {t}: missing draw for item {item}")))?;
            if draw.item != item || draw.candidates != candidates {
                return Err(Error::InvalidTrace(format!(
                    "round {t}: draw for item {} does not match candidates {candidates:?} of item {item}",
                    draw.item
                )));
            }
            candidates.iter().position(|&c| c == draw.chosen).ok_or_else(|| {
                Error::InvalidTrace(format!("round {t}: chosen bidder {} is not a candidate", draw.chosen))
            })
        })?;
        let applied = self.history.last().expect("round was just recorded");
        if applied.draws != record.draws
            || applied.prices_after != record.prices_after
            || applied.provisional != record.provisional
        {
            return Err(Error::InvalidTrace(format!(
                "round {t}: replayed state differs from record"
            )));
        }
        Ok(applied)
    }

    /// `pick(item, candidates)` returns the index into `candidates` of the
    /// new standing high bidder. It is only consulted with two or more
    /// candidates.
    fn apply_round<F>(&mut self, bids: &[ItemSet], mut pick: F) -> Result<&RoundRecord>
    where
        F: FnMut(usize, &[usize]) -> Result<usize>,
    {
        let m = self.items();
        let n = self.bidders();
        if bids.len() != n {
            return Err(Error::InvalidArgument(format!("{} bids for {n} bidders", bids.len())));
        }
        for (i, bid) in bids.iter().enumerate() {
            if !bid.within(m) {
                return Err(Error::UniverseMismatch {
                    expected: m,
                    found: bid.span(),
                });
            }
            let overlap = bid.intersection(self.provisional[i]);
            if !overlap.is_empty() {
                return Err(Error::InvalidBid {
                    bidder: i,
                    items: overlap,
                });
            }
        }

        let prices_before = self.prices.clone();
        let excess = bids.iter().fold(ItemSet::EMPTY, |acc, b| acc.union(*b));
        let mut draws = Vec::with_capacity(excess.len());
        for item in excess.iter() {
            let candidates: Vec<usize> = (0..n).filter(|&i| bids[i].contains(item)).collect();
            let k = if candidates.len() == 1 {
                0
            } else {
                let k = pick(item, &candidates)?;
                if k >= candidates.len() {
                    return Err(Error::Internal(format!(
                        "winner index {k} out of range for {} candidates",
                        candidates.len()
                    )));
                }
                k
            };
            let chosen = candidates[k];
            if let Some(prev) = self.holder(item) {
                self.provisional[prev] = self.provisional[prev].without(item);
            }
            self.provisional[chosen] = self.provisional[chosen].with(item);
            self.prices[item] += 1;
            draws.push(Draw {
                item,
                candidates,
                chosen,
            });
        }

        self.history.push(RoundRecord {
            t: self.round,
            prices_before,
            bids: bids.to_vec(),
            excess,
            draws,
            prices_after: self.prices.clone(),
            provisional: self.provisional.clone(),
        });
        self.round += 1;
        Ok(self.history.last().expect("just pushed"))
    }

    fn into_outcome(self) -> AuctionOutcome {
        AuctionOutcome {
            rounds: self.round,
            allocation: self.provisional,
            prices: self.prices,
            trace: self.history,
        }
    }
}

/// `n · m · (1 + max_i v_i(Ω))`.
pub fn default_max_rounds(valuations: &[Valuation]) -> usize {
    let n = valuations.len();
    let m = valuations.first().map_or(0, Valuation::universe_size);
    let top = valuations
        .iter()
        .map(|v| v.value(ItemSet::full(v.universe_size())))
        .max()
        .unwrap_or(0);
    n.saturating_mul(m).saturating_mul(1 + top as usize).max(1)
}

/// Runs the auction to termination with a [`ChaCha8Rng`] seeded by `seed`.
pub fn run_auction(
    valuations: &[Valuation],
    strategies: &[Strategy],
    seed: u64,
    max_rounds: usize,
) -> Result<AuctionOutcome> {
    let n = valuations.len();
    if strategies.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} strategies for {n} bidders",
            strategies.len()
        )));
    }
    if max_rounds == 0 {
        return Err(Error::InvalidArgument("max_rounds must be at least 1".into()));
    }
    let m = valuations
        .first()
        .map(Valuation::universe_size)
        .ok_or_else(|| Error::InvalidArgument("an auction needs at least one bidder".into()))?;
    if let Some(v) = valuations.iter().find(|v| v.universe_size() != m) {
        return Err(Error::UniverseMismatch {
            expected: m,
            found: v.universe_size(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = init_auction(m, n)?;
    let mut price_history = vec![state.prices.clone()];
    let mut held_history: Vec<Vec<ItemSet>> = vec![vec![ItemSet::EMPTY]; n];
    let mut bid_history: Vec<Vec<ItemSet>> = vec![Vec::new(); n];

    loop {
        let bids = (0..n)
            .map(|i| {
                let ctx = BidContext::new(i, &valuations[i], &price_history, &held_history[i], &bid_history[i])?;
                strategies[i].bid(&ctx)
            })
            .collect::<Result<Vec<_>>>()?;
        if bids.iter().all(|b| b.is_empty()) {
            return Ok(state.into_outcome());
        }
        if state.round >= max_rounds {
            return Err(Error::Divergence {
                max_rounds,
                partial: Box::new(state.into_outcome()),
            });
        }
        state.run_round(&bids, &mut rng)?;
        price_history.push(state.prices.clone());
        for i in 0..n {
            held_history[i].push(state.provisional[i]);
            bid_history[i].push(bids[i]);
        }
    }
}

/// Re-applies every round of `trace` using its recorded draws and returns
/// the resulting state, checking each round against the record.
pub fn replay_trace(trace: &[RoundRecord]) -> Result<AuctionState> {
    let first = trace
        .first()
        .ok_or_else(|| Error::InvalidTrace("trace is empty".into()))?;
    let mut state = init_auction(first.prices_before.len(), first.bids.len())?;
    for record in trace {
        state.replay_round(record)?;
    }
    Ok(state)
}

pub fn write_trace_jsonl<W: Write>(trace: &[RoundRecord], mut out: W) -> Result<()> {
    for record in trace {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace_jsonl<R: BufRead>(input: R) -> Result<Vec<RoundRecord>> {
    let mut trace = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        trace.push(serde_json::from_str(&line)?);
    }
    Ok(trace)
}

impl AuctionOutcome {
    pub fn payment(&self, bidder: usize) -> i64 {
        price_of(&self.prices, self.allocation[bidder])
    }

    pub fn utility(&self, bidder: usize, valuation: &Valuation) -> i64 {
        valuation.value(self.allocation[bidder]) - self.payment(bidder)
    }

    /// Posted prices after each round, starting with the all-zero vector.
    pub fn price_path(&self) -> impl Iterator<Item = &[i64]> {
        let start = self.trace.first().map(|r| r.prices_before.as_slice());
        start
            .into_iter()
            .chain(self.trace.iter().map(|r| r.prices_after.as_slice()))
    }

    /// Checks the structural invariants of the mechanism over the whole
    /// trace: disjoint provisional sets, unit price steps exactly on excess
    /// items, ownership changes exactly on excess items, chosen winners drawn
    /// from their candidates, and every positively priced item sold.
    pub fn verify(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Internal(msg));
        let m = self.prices.len();
        let mut held_before = vec![ItemSet::EMPTY; self.allocation.len()];
        for (k, r) in self.trace.iter().enumerate() {
            if r.t != k {
                return fail(format!("record {k} has t = {}", r.t));
            }
            let mut union = ItemSet::EMPTY;
            for s in &r.provisional {
                if !union.is_disjoint(*s) {
                    return fail(format!("round {}: provisional sets overlap", r.t));
                }
                union = union.union(*s);
            }
            for j in 0..m {
                let step = r.prices_after[j] - r.prices_before[j];
                if step != i64::from(r.excess.contains(j)) {
                    return fail(format!("round {}: item {j} price step {step}", r.t));
                }
                let owner_before = held_before.iter().position(|s| s.contains(j));
                let owner_after = r.provisional.iter().position(|s| s.contains(j));
                if r.excess.contains(j) {
                    if owner_after.is_none() || owner_after == owner_before {
                        return fail(format!("round {}: item {j} in excess demand kept its holder", r.t));
                    }
                } else if owner_after != owner_before {
                    return fail(format!("round {}: item {j} changed holder without excess demand", r.t));
                }
                if r.prices_after[j] > 0 && owner_after.is_none() {
                    return fail(format!("round {}: priced item {j} has no holder", r.t));
                }
            }
            for d in &r.draws {
                if !d.candidates.contains(&d.chosen) || !r.provisional[d.chosen].contains(d.item) {
                    return fail(format!("round {}: bad draw for item {}", r.t, d.item));
                }
            }
            held_before.clone_from(&r.provisional);
        }
        if held_before != self.allocation {
            return fail("allocation differs from the last provisional sets".into());
        }
        let sold: i64 = (0..self.allocation.len()).map(|i| self.payment(i)).sum();
        let posted: i64 = self.prices.iter().filter(|&&p| p > 0).sum();
        if sold != posted {
            return fail(format!("revenue {sold} differs from total posted price {posted}"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::Strategy;

    fn set(items: &[usize]) -> ItemSet {
        items.iter().copied().collect()
    }

    #[test]
    fn init_examples() {
        let s = init_auction(2, 2).unwrap();
        assert_eq!(s.prices(), &[0, 0]);
        assert_eq!(s.provisional(), &[ItemSet::EMPTY, ItemSet::EMPTY]);
        assert!(s.history().is_empty());
        let s = init_auction(1, 1).unwrap();
        assert_eq!(s.prices(), &[0]);
        assert!(init_auction(0, 1).is_err());
        assert!(init_auction(1, 0).is_err());
    }

    #[test]
    fn personalized_price_examples() {
        let mut s = init_auction(2, 1).unwrap();
        s.prices = vec![3, 5];
        s.provisional[0] = set(&[0]);
        assert_eq!(s.personalized_price(0, set(&[0, 1])), 9);
        assert_eq!(s.personalized_price(0, ItemSet::EMPTY), 0);
        s.provisional[0] = ItemSet::EMPTY;
        assert_eq!(s.personalized_price(0, set(&[0, 1])), 10);
    }

    #[test]
    fn both_bidders_bid_both_items() {
        let mut s = init_auction(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = s.run_round(&[set(&[0, 1]), set(&[0, 1])], &mut rng).unwrap().clone();
        assert_eq!(r.excess, set(&[0, 1]));
        assert_eq!(r.prices_after, vec![1, 1]);
        assert_eq!(r.draws.len(), 2);
        for d in &r.draws {
            assert_eq!(d.candidates, vec![0, 1]);
        }
        assert_eq!(s.provisional()[0].union(s.provisional()[1]), set(&[0, 1]));
    }

    #[test]
    fn empty_bids_only_advance_the_round() {
        let mut s = init_auction(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        s.run_round(&[set(&[0]), ItemSet::EMPTY], &mut rng).unwrap();
        let before = s.clone();
        let r = s.run_round(&[ItemSet::EMPTY, ItemSet::EMPTY], &mut rng).unwrap();
        assert!(r.excess.is_empty());
        assert_eq!(s.prices(), before.prices());
        assert_eq!(s.provisional(), before.provisional());
        assert_eq!(s.round(), before.round() + 1);
    }

    #[test]
    fn single_bidder_takes_item_deterministically() {
        let mut s = init_auction(1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        s.run_round(&[set(&[0])], &mut rng).unwrap();
        assert_eq!(s.prices(), &[1]);
        assert_eq!(s.provisional(), &[set(&[0])]);
    }

    #[test]
    fn bid_on_held_item_is_rejected() {
        let mut s = init_auction(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        s.run_round(&[set(&[0]), ItemSet::EMPTY], &mut rng).unwrap();
        let err = s.run_round(&[set(&[0, 1]), ItemSet::EMPTY], &mut rng).unwrap_err();
        assert!(matches!(err, Error::InvalidBid { bidder: 0, items } if items == set(&[0])));
    }

    #[test]
    fn previous_holder_is_never_a_candidate() {
        let mut s = init_auction(1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        s.run_round(&[set(&[0]), ItemSet::EMPTY, ItemSet::EMPTY], &mut rng)
            .unwrap();
        let r = s.run_round(&[ItemSet::EMPTY, set(&[0]), set(&[0])], &mut rng).unwrap();
        assert_eq!(r.draws[0].candidates, vec![1, 2]);
        assert!(s.provisional()[0].is_empty());
    }

    #[test]
    fn one_bidder_wins_at_one_unit() {
        let v = vec![Valuation::additive(vec![5]).unwrap()];
        let out = run_auction(&v, &[Strategy::Truthful], 0, 100).unwrap();
        assert_eq!(out.allocation, vec![set(&[0])]);
        assert_eq!(out.prices, vec![1]);
        assert_eq!(out.rounds, 1);
        out.verify().unwrap();
    }

    #[test]
    fn zero_valuations_terminate_immediately() {
        let v = vec![Valuation::zero(3).unwrap(), Valuation::zero(3).unwrap()];
        let out = run_auction(&v, &[Strategy::Truthful, Strategy::Truthful], 5, 10).unwrap();
        assert_eq!(out.rounds, 0);
        assert_eq!(out.prices, vec![0, 0, 0]);
        assert!(out.allocation.iter().all(|s| s.is_empty()));
    }

    #[test]
    fn bad_pair_welfare_is_two_or_m() {
        let v = vec![
            Valuation::pair_bonus(2, 1, 10).unwrap(),
            Valuation::pair_bonus(2, 1, 10).unwrap(),
        ];
        let strategies = [Strategy::Truthful, Strategy::Truthful];
        for seed in 0..20 {
            let out = run_auction(&v, &strategies, seed, 1_000).unwrap();
            out.verify().unwrap();
            let welfare: i64 = (0..2).map(|i| v[i].value(out.allocation[i])).sum();
            assert!(welfare == 2 || welfare == 10, "seed {seed}: welfare {welfare}");
        }
    }

    #[test]
    fn divergence_returns_partial_trace() {
        let v = vec![
            Valuation::pair_bonus(2, 1, 10).unwrap(),
            Valuation::pair_bonus(2, 1, 10).unwrap(),
        ];
        let err = run_auction(&v, &[Strategy::Truthful, Strategy::Truthful], 1, 3).unwrap_err();
        match err {
            Error::Divergence { max_rounds, partial } => {
                assert_eq!(max_rounds, 3);
                assert_eq!(partial.rounds, 3);
                assert_eq!(partial.trace.len(), 3);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn trace_replays_and_round_trips_through_jsonl() {
        let v = vec![Valuation::symmetric_step(3, 2, 1).unwrap(); 5];
        let strategies = vec![Strategy::Truthful; 5];
        let out = run_auction(&v, &strategies, 42, 1_000).unwrap();
        let mut buf = Vec::new();
        write_trace_jsonl(&out.trace, &mut buf).unwrap();
        let first = std::str::from_utf8(&buf).unwrap().lines().next().unwrap();
        let keys: serde_json::Value = serde_json::from_str(first).unwrap();
        let keys: Vec<&str> = keys.as_object().unwrap().keys().map(String::as_str).collect();
        for k in [
            "t",
            "prices_before",
            "bids",
            "excess",
            "draws",
            "prices_after",
            "provisional",
        ] {
            assert!(keys.contains(&k), "missing {k}");
        }
        let back = read_trace_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, out.trace);
        let state = replay_trace(&back).unwrap();
        assert_eq!(state.provisional(), out.allocation.as_slice());
        assert_eq!(state.prices(), out.prices.as_slice());

        let mut tampered = back.clone();
        if let Some(r) = tampered
            .iter_mut()
            .find(|r| r.draws.iter().any(|d| d.candidates.len() > 1))
        {
            let d = r.draws.iter_mut().find(|d| d.candidates.len() > 1).unwrap();
            d.chosen = *d.candidates.iter().find(|&&c| c != d.chosen).unwrap();
            assert!(replay_trace(&tampered).is_err());
        }
    }

    #[test]
    fn default_round_bound() {
        let v = vec![Valuation::pair_bonus(2, 1, 10).unwrap(); 2];
        assert_eq!(default_max_rounds(&v), 2 * 2 * 11);
    }
}
