//! Bidding strategies: what a bidder asks for at the next price level.
//!
//! Every strategy maps a [`BidContext`] (her valuation plus her own view of
//! the auction so far) to a conditional bid `T ⊆ Ω ∖ S`, priced at one unit
//! above the posted price of each requested item.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::itemset::ItemSet;
use crate::mechanism::{personalized_price_with, price_of};
use crate::valuation::Valuation;

/// Largest available set for which exhaustive strategies are run.
pub const MAX_EXHAUSTIVE_ITEMS: usize = 20;

/// A bidder's view of the auction before round `t`.
#[derive(Clone, Copy, Debug)]
pub struct BidContext<'a> {
    bidder: usize,
    valuation: &'a Valuation,
    prices: &'a [Vec<i64>],
    held: &'a [ItemSet],
    bids: &'a [ItemSet],
}

impl<'a> BidContext<'a> {
    /// `prices` and `held` run from round 0 to the current round `t`
    /// inclusive; `bids` holds her own bids of rounds `0..t`. Only the
    /// lengths and the newest entries are validated.
    pub fn new(
        bidder: usize,
        valuation: &'a Valuation,
        prices: &'a [Vec<i64>],
        held: &'a [ItemSet],
        bids: &'a [ItemSet],
    ) -> Result<Self> {
        let m = valuation.universe_size();
        if prices.is_empty() || held.len() != prices.len() || bids.len() + 1 != prices.len() {
            return Err(Error::InvalidArgument(format!(
                "inconsistent history: {} price vectors, {} holdings, {} bids",
                prices.len(),
                held.len(),
                bids.len()
            )));
        }
        // Earlier entries were checked when they were current.
        let current = &prices[prices.len() - 1];
        if current.len() != m {
            return Err(Error::UniverseMismatch {
                expected: m,
                found: current.len(),
            });
        }
        if let Some(s) = held.last().into_iter().chain(bids.last()).find(|s| !s.within(m)) {
            return Err(Error::UniverseMismatch {
                expected: m,
                found: s.span(),
            });
        }
        Ok(BidContext {
            bidder,
            valuation,
            prices,
            held,
            bids,
        })
    }

    pub fn bidder(&self) -> usize {
        self.bidder
    }

    pub fn valuation(&self) -> &'a Valuation {
        self.valuation
    }

    pub fn round(&self) -> usize {
        self.prices.len() - 1
    }

    pub fn items(&self) -> usize {
        self.valuation.universe_size()
    }

    pub fn prices(&self) -> &'a [i64] {
        &self.prices[self.prices.len() - 1]
    }

    pub fn price_history(&self) -> &'a [Vec<i64>] {
        self.prices
    }

    pub fn held(&self) -> ItemSet {
        self.held[self.held.len() - 1]
    }

    pub fn held_history(&self) -> &'a [ItemSet] {
        self.held
    }

    pub fn bid_history(&self) -> &'a [ItemSet] {
        self.bids
    }

    pub fn previous_bid(&self) -> Option<ItemSet> {
        self.bids.last().copied()
    }

    /// `Ω ∖ S`: the items she may bid on.
    pub fn available(&self) -> ItemSet {
        ItemSet::full(self.items()).difference(self.held())
    }

    /// Cost of winning `t` at the next price level, `Σ_{j ∈ t} (p_j + 1)`.
    pub fn bid_cost(&self, t: ItemSet) -> i64 {
        price_of(self.prices(), t) + t.len() as i64
    }

    /// `v(S ∪ T) - v(S) - Σ_{j ∈ T} (p_j + 1)`.
    pub fn surplus(&self, t: ItemSet) -> i64 {
        let s = self.held();
        self.valuation.value(s.union(t)) - self.valuation.value(s) - self.bid_cost(t)
    }

    fn exhaustive_guard(&self) -> Result<()> {
        let k = self.available().len();
        if k > MAX_EXHAUSTIVE_ITEMS {
            return Err(Error::UniverseTooLarge {
                m: k,
                limit: MAX_EXHAUSTIVE_ITEMS,
            });
        }
        Ok(())
    }
}

/// Where local search starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalStart {
    /// The previous bid, minus anything now held.
    #[default]
    Previous,
    Empty,
}

/// Prices used when checking a set for security.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecureVariant {
    /// Unheld items at the posted price plus one unit.
    #[default]
    Incremented,
    /// Every item at the posted price.
    Plain,
}

impl SecureVariant {
    fn increment(self) -> i64 {
        match self {
            SecureVariant::Incremented => 1,
            SecureVariant::Plain => 0,
        }
    }
}

/// A user-supplied bidding rule.
pub trait BidPolicy: Send + Sync + fmt::Debug {
    fn bid(&self, ctx: &BidContext<'_>) -> Result<ItemSet>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Truthful,
    LocallyOptimal,
    SecureProfitMax,
    Scripted,
    Custom,
}

#[derive(Clone, Debug)]
pub enum Strategy {
    Truthful,
    LocallyOptimal {
        start: LocalStart,
    },
    SecureProfitMax {
        variant: SecureVariant,
    },
    /// Round `t` bids `script[t]` minus held items; empty after the script ends.
    Scripted(Vec<ItemSet>),
    Custom(Arc<dyn BidPolicy>),
}

impl PartialEq for Strategy {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Strategy::Truthful, Strategy::Truthful) => true,
            (Strategy::LocallyOptimal { start: a }, Strategy::LocallyOptimal { start: b }) => a == b,
            (Strategy::SecureProfitMax { variant: a }, Strategy::SecureProfitMax { variant: b }) => a == b,
            (Strategy::Scripted(a), Strategy::Scripted(b)) => a == b,
            (Strategy::Custom(a), Strategy::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl Strategy {
    pub fn locally_optimal() -> Self {
        Strategy::LocallyOptimal {
            start: LocalStart::Previous,
        }
    }

    pub fn secure_profit_max() -> Self {
        Strategy::SecureProfitMax {
            variant: SecureVariant::Incremented,
        }
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::Truthful => StrategyKind::Truthful,
            Strategy::LocallyOptimal { .. } => StrategyKind::LocallyOptimal,
            Strategy::SecureProfitMax { .. } => StrategyKind::SecureProfitMax,
            Strategy::Scripted(_) => StrategyKind::Scripted,
            Strategy::Custom(_) => StrategyKind::Custom,
        }
    }

    pub fn bid(&self, ctx: &BidContext<'_>) -> Result<ItemSet> {
        match self {
            Strategy::Truthful => truthful_bid(ctx),
            Strategy::LocallyOptimal { start } => locally_optimal_bid(ctx, *start),
            Strategy::SecureProfitMax { variant } => profit_max_secure_bid(ctx, *variant),
            Strategy::Scripted(script) => Ok(scripted_bid(ctx, script)),
            Strategy::Custom(policy) => policy.bid(ctx),
        }
    }
}

/// JSON form of a [`Strategy`], tagged by `"kind"`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<Vec<ItemSet>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_start: Option<LocalStart>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secure_variant: Option<SecureVariant>,
}

impl TryFrom<StrategySpec> for Strategy {
    type Error = Error;

    fn try_from(spec: StrategySpec) -> Result<Self> {
        let unexpected = |field: &str| {
            Err(Error::InvalidScenario(format!(
                "field {field:?} does not apply to strategy {:?}",
                spec.kind
            )))
        };
        match spec.kind.as_str() {
            "truthful" => {
                if spec.script.is_some() {
                    return unexpected("script");
                }
                Ok(Strategy::Truthful)
            }
            "locally_optimal" => {
                if spec.script.is_some() {
                    return unexpected("script");
                }
                Ok(Strategy::LocallyOptimal {
                    start: spec.local_start.unwrap_or_default(),
                })
            }
            "secure_profit_max" => {
                if spec.script.is_some() {
                    return unexpected("script");
                }
                Ok(Strategy::SecureProfitMax {
                    variant: spec.secure_variant.unwrap_or_default(),
                })
            }
            "scripted" => spec
                .script
                .map(Strategy::Scripted)
                .ok_or_else(|| Error::InvalidScenario("scripted strategy needs a \"script\"".into())),
            other => Err(Error::InvalidScenario(format!("unknown strategy kind {other:?}"))),
        }
    }
}

impl From<&Strategy> for StrategySpec {
    fn from(s: &Strategy) -> Self {
        let kind = |k: &str| StrategySpec {
            kind: k.into(),
            ..StrategySpec::default()
        };
        match s {
            Strategy::Truthful => kind("truthful"),
            Strategy::LocallyOptimal { start } => StrategySpec {
                local_start: Some(*start),
                ..kind("locally_optimal")
            },
            Strategy::SecureProfitMax { variant } => StrategySpec {
                secure_variant: Some(*variant),
                ..kind("secure_profit_max")
            },
            Strategy::Scripted(script) => StrategySpec {
                script: Some(script.clone()),
                ..kind("scripted")
            },
            Strategy::Custom(_) => kind("custom"),
        }
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if let Strategy::Custom(_) = self {
            return Err(serde::ser::Error::custom("custom strategies cannot be serialized"));
        }
        StrategySpec::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let spec = StrategySpec::deserialize(deserializer)?;
        Strategy::try_from(spec).map_err(serde::de::Error::custom)
    }
}

/// The surplus-maximizing conditional bid. Ties go to the smallest set,
/// then the smallest bitmask, so a zero best surplus yields `∅`.
pub fn truthful_bid(ctx: &BidContext<'_>) -> Result<ItemSet> {
    ctx.exhaustive_guard()?;
    let mut best = (0i64, ItemSet::EMPTY);
    for t in ctx.available().subsets() {
        let u = ctx.surplus(t);
        if u > best.0 || (u == best.0 && (t.len(), t) < (best.1.len(), best.1)) {
            best = (u, t);
        }
    }
    Ok(best.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Move {
    Delete(usize),
    Add(usize),
    Swap(usize, usize),
}

impl Move {
    fn apply(self, t: ItemSet) -> ItemSet {
        match self {
            Move::Delete(j) => t.without(j),
            Move::Add(j) => t.with(j),
            Move::Swap(out, add) => t.without(out).with(add),
        }
    }
}

/// Every single-item deletion, addition and swap of `t` within `available`,
/// in tie-break order: deletions, additions, swaps, each by item index.
fn neighbourhood(t: ItemSet, available: ItemSet) -> impl Iterator<Item = Move> {
    let outside = available.difference(t);
    t.iter().map(Move::Delete).chain(outside.iter().map(Move::Add)).chain(
        t.iter()
            .flat_map(move |o| outside.iter().map(move |a| Move::Swap(o, a))),
    )
}

/// Local-search objective `v(S ∪ T) - Σ_{j ∈ T} (p_j + 1)`.
fn local_objective(ctx: &BidContext<'_>, t: ItemSet) -> i64 {
    ctx.valuation.value(ctx.held().union(t)) - ctx.bid_cost(t)
}

/// Best-improvement local search over add, delete and swap moves.
///
/// Starts from the previous bid restricted to `Ω ∖ S` (or from `∅`) and
/// repeatedly applies the move with the largest strict improvement.
pub fn locally_optimal_bid(ctx: &BidContext<'_>, start: LocalStart) -> Result<ItemSet> {
    let available = ctx.available();
    let mut t = match start {
        LocalStart::Previous => ctx.previous_bid().unwrap_or_default().intersection(available),
        LocalStart::Empty => ItemSet::EMPTY,
    };
    let mut current = local_objective(ctx, t);
    // The objective strictly increases, so no set is visited twice.
    let limit = 1u64 << available.len().min(63);
    let mut steps = 0u64;
    loop {
        let mut best: Option<(i64, ItemSet)> = None;
        for mv in neighbourhood(t, available) {
            let next = mv.apply(t);
            let value = local_objective(ctx, next);
            if best.is_none_or(|(b, _)| value > b) {
                best = Some((value, next));
            }
        }
        match best {
            Some((value, next)) if value > current => {
                t = next;
                current = value;
            }
            _ => return Ok(t),
        }
        steps += 1;
        if steps > limit {
            return Err(Error::Internal(format!(
                "local search exceeded {limit} improving steps"
            )));
        }
    }
}

/// True when no single add, delete or swap strictly improves the bid.
pub fn is_locally_optimal(ctx: &BidContext<'_>, t: ItemSet) -> bool {
    let current = local_objective(ctx, t);
    neighbourhood(t, ctx.available()).all(|mv| local_objective(ctx, mv.apply(t)) <= current)
}

/// True when every `S' ⊆ S ∪ T` is worth at least its personalized price:
/// posted prices on held items, posted prices plus the variant's increment
/// on the bid items.
pub fn is_secure(ctx: &BidContext<'_>, bid: ItemSet, variant: SecureVariant) -> bool {
    first_insecure_subset(ctx, ctx.held().union(bid), variant).is_none()
}

fn first_insecure_subset(ctx: &BidContext<'_>, set: ItemSet, variant: SecureVariant) -> Option<ItemSet> {
    let held = ctx.held();
    let inc = variant.increment();
    set.subsets()
        .find(|&s| ctx.valuation.value(s) < personalized_price_with(ctx.prices(), held, s, inc))
}

/// The profit-maximizing bid among secure bids.
///
/// Profit is `v(S ∪ T) - p(S) - Σ_{j ∈ T} (p_j + 1)`. Ties prefer a
/// nonempty bid over `∅`, then the smallest set, then the smallest bitmask.
///
/// Security of every `S ∪ T` is decided at once: `ok[X]` holds when `X` and
/// all of its subsets are worth their personalized price, computed by
/// dropping one item at a time.
pub fn profit_max_secure_bid(ctx: &BidContext<'_>, variant: SecureVariant) -> Result<ItemSet> {
    ctx.exhaustive_guard()?;
    let held = ctx.held();
    if let Some(witness) = first_insecure_subset(ctx, held, variant) {
        return Err(Error::InsecureProvisionalState {
            bidder: ctx.bidder(),
            witness,
        });
    }
    let inc = variant.increment();
    let available = ctx.available();

    // Index sets X ⊆ held ∪ available by their rank inside the available
    // items: X = held' ∪ T with held' ⊆ held. Only sets with held' = held
    // matter for bids, but their subsets range over every held'.
    let scope = held.union(available);
    let scope_items: Vec<usize> = scope.iter().collect();
    let k = scope_items.len();
    let mut ok = vec![false; 1 << k];
    for idx in 0..1usize << k {
        let set: ItemSet = scope_items
            .iter()
            .enumerate()
            .filter(|&(b, _)| idx & (1 << b) != 0)
            .map(|(_, &j)| j)
            .collect();
        let fine = ctx.valuation.value(set) >= personalized_price_with(ctx.prices(), held, set, inc);
        ok[idx] = fine && (0..k).all(|b| idx & (1 << b) == 0 || ok[idx ^ (1 << b)]);
    }
    let rank = |s: ItemSet| -> usize {
        scope_items
            .iter()
            .enumerate()
            .filter(|&(_, &j)| s.contains(j))
            .fold(0, |acc, (b, _)| acc | 1 << b)
    };

    let mut best: Option<(i64, ItemSet)> = None;
    for t in available.subsets() {
        if !ok[rank(held.union(t))] {
            continue;
        }
        let profit = ctx.surplus(t);
        let better = match best {
            None => true,
            Some((b, bt)) => {
                profit > b
                    || (profit == b
                        && (bt.is_empty() && !t.is_empty()
                            || !bt.is_empty() && !t.is_empty() && (t.len(), t) < (bt.len(), bt)))
            }
        };
        if better {
            best = Some((profit, t));
        }
    }
    Ok(best.map_or(ItemSet::EMPTY, |(_, t)| t))
}

pub fn scripted_bid(ctx: &BidContext<'_>, script: &[ItemSet]) -> ItemSet {
    script
        .get(ctx.round())
        .map_or(ItemSet::EMPTY, |s| s.intersection(ctx.available()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use proptest::strategy::Strategy as PropStrategy;

    fn set(items: &[usize]) -> ItemSet {
        items.iter().copied().collect()
    }

    /// Owns the history slices a [`BidContext`] borrows.
    struct View {
        v: Valuation,
        prices: Vec<Vec<i64>>,
        held: Vec<ItemSet>,
        bids: Vec<ItemSet>,
    }

    impl View {
        fn new(v: Valuation, prices: Vec<i64>, held: ItemSet) -> Self {
            View {
                v,
                prices: vec![prices],
                held: vec![held],
                bids: Vec::new(),
            }
        }

        fn with_previous(mut self, prev: ItemSet) -> Self {
            self.prices.insert(0, self.prices[0].clone());
            self.held.insert(0, ItemSet::EMPTY);
            let m = self.v.universe_size();
            self.bids.push(prev.intersection(ItemSet::full(m)));
            self
        }

        fn ctx(&self) -> BidContext<'_> {
            BidContext::new(0, &self.v, &self.prices, &self.held, &self.bids).unwrap()
        }
    }

    fn brute_truthful(ctx: &BidContext<'_>) -> (i64, ItemSet) {
        ctx.available()
            .subsets()
            .map(|t| (ctx.surplus(t), t))
            .max_by(|a, b| a.0.cmp(&b.0).then((b.1.len(), b.1).cmp(&(a.1.len(), a.1))))
            .unwrap()
    }

    #[test]
    fn truthful_examples() {
        let view = View::new(Valuation::additive(vec![5, 3]).unwrap(), vec![0, 0], ItemSet::EMPTY);
        assert_eq!(truthful_bid(&view.ctx()).unwrap(), set(&[0, 1]));

        let view = View::new(Valuation::additive(vec![5, 3]).unwrap(), vec![4, 2], ItemSet::EMPTY);
        assert_eq!(truthful_bid(&view.ctx()).unwrap(), ItemSet::EMPTY);

        let view = View::new(Valuation::pair_bonus(2, 1, 10).unwrap(), vec![0, 0], ItemSet::EMPTY);
        assert_eq!(truthful_bid(&view.ctx()).unwrap(), set(&[0, 1]));

        let view = View::new(Valuation::additive(vec![5, 3]).unwrap(), vec![0, 0], set(&[0, 1]));
        assert_eq!(truthful_bid(&view.ctx()).unwrap(), ItemSet::EMPTY);
    }

    #[test]
    fn local_examples() {
        let v = Valuation::additive(vec![5, 3]).unwrap();
        let view = View::new(v.clone(), vec![0, 0], ItemSet::EMPTY);
        assert_eq!(
            locally_optimal_bid(&view.ctx(), LocalStart::Empty).unwrap(),
            set(&[0, 1])
        );
        let view = View::new(v, vec![0, 0], ItemSet::EMPTY).with_previous(set(&[0, 1]));
        assert_eq!(
            locally_optimal_bid(&view.ctx(), LocalStart::Previous).unwrap(),
            set(&[0, 1])
        );
    }

    #[test]
    fn local_search_can_stop_short_of_a_complementary_pair() {
        // Each item alone is worth less than its cost, so from ∅ no single
        // addition helps even though the pair is profitable.
        let v = Valuation::pair_bonus(2, 1, 10).unwrap();
        let view = View::new(v, vec![2, 2], ItemSet::EMPTY);
        assert_eq!(
            locally_optimal_bid(&view.ctx(), LocalStart::Empty).unwrap(),
            ItemSet::EMPTY
        );
        assert_eq!(truthful_bid(&view.ctx()).unwrap(), set(&[0, 1]));
    }

    #[test]
    fn swap_moves_are_used() {
        let v = Valuation::unit_demand(vec![3, 9]).unwrap();
        let view = View::new(v, vec![0, 0], ItemSet::EMPTY).with_previous(set(&[0]));
        assert_eq!(
            locally_optimal_bid(&view.ctx(), LocalStart::Previous).unwrap(),
            set(&[1])
        );
    }

    #[test]
    fn security_examples() {
        let v = Valuation::additive(vec![5, 3]).unwrap();
        let view = View::new(v, vec![4, 2], set(&[0]));
        assert!(is_secure(&view.ctx(), set(&[1]), SecureVariant::Incremented));

        let v = Valuation::pair_bonus(2, 1, 10).unwrap();
        let view = View::new(v, vec![3, 3], ItemSet::EMPTY);
        assert!(!is_secure(&view.ctx(), set(&[0, 1]), SecureVariant::Incremented));
        assert!(is_secure(&view.ctx(), ItemSet::EMPTY, SecureVariant::Incremented));
    }

    #[test]
    fn plain_variant_drops_the_increment() {
        let v = Valuation::additive(vec![3]).unwrap();
        let view = View::new(v, vec![3], ItemSet::EMPTY);
        assert!(!is_secure(&view.ctx(), set(&[0]), SecureVariant::Incremented));
        assert!(is_secure(&view.ctx(), set(&[0]), SecureVariant::Plain));
    }

    #[test]
    fn secure_bid_matches_truthful_when_truthful_is_secure() {
        let v = Valuation::additive(vec![5, 3]).unwrap();
        let view = View::new(v, vec![0, 0], ItemSet::EMPTY);
        let ctx = view.ctx();
        let truthful = truthful_bid(&ctx).unwrap();
        assert!(is_secure(&ctx, truthful, SecureVariant::Incremented));
        assert_eq!(
            profit_max_secure_bid(&ctx, SecureVariant::Incremented).unwrap(),
            truthful
        );
    }

    #[test]
    fn secure_bid_avoids_the_risky_pair() {
        let v = Valuation::pair_bonus(2, 1, 10).unwrap();
        let view = View::new(v, vec![1, 1], ItemSet::EMPTY);
        let ctx = view.ctx();
        assert_eq!(truthful_bid(&ctx).unwrap(), set(&[0, 1]));
        assert_eq!(
            profit_max_secure_bid(&ctx, SecureVariant::Incremented).unwrap(),
            ItemSet::EMPTY
        );
    }

    #[test]
    fn secure_bid_takes_a_zero_profit_item() {
        let v = Valuation::additive(vec![1]).unwrap();
        let view = View::new(v, vec![0], ItemSet::EMPTY);
        assert_eq!(
            profit_max_secure_bid(&view.ctx(), SecureVariant::Incremented).unwrap(),
            set(&[0])
        );
        assert_eq!(truthful_bid(&view.ctx()).unwrap(), ItemSet::EMPTY);
    }

    #[test]
    fn insecure_holding_is_reported() {
        let v = Valuation::pair_bonus(2, 1, 10).unwrap();
        let view = View::new(v, vec![3, 0], set(&[0]));
        let err = profit_max_secure_bid(&view.ctx(), SecureVariant::Incremented).unwrap_err();
        assert!(matches!(err, Error::InsecureProvisionalState { witness, .. } if witness == set(&[0])));
    }

    #[test]
    fn scripted_examples() {
        let v = Valuation::additive(vec![1, 1, 1]).unwrap();
        let script = vec![set(&[0, 2])];
        let view = View::new(v.clone(), vec![0, 0, 0], ItemSet::EMPTY);
        assert_eq!(scripted_bid(&view.ctx(), &script), set(&[0, 2]));
        let view = View::new(v, vec![0, 0, 0], set(&[0])).with_previous(set(&[0, 2]));
        assert_eq!(view.ctx().round(), 1);
        assert_eq!(scripted_bid(&view.ctx(), &script), ItemSet::EMPTY);
    }

    #[test]
    fn strategy_json_round_trip() {
        let all = [
            Strategy::Truthful,
            Strategy::locally_optimal(),
            Strategy::LocallyOptimal {
                start: LocalStart::Empty,
            },
            Strategy::secure_profit_max(),
            Strategy::SecureProfitMax {
                variant: SecureVariant::Plain,
            },
            Strategy::Scripted(vec![set(&[0, 1]), ItemSet::EMPTY]),
        ];
        for s in all {
            let text = serde_json::to_string(&s).unwrap();
            let back: Strategy = serde_json::from_str(&text).unwrap();
            assert_eq!(back, s, "{text}");
        }
        let parsed: Strategy = serde_json::from_str(r#"{"kind":"locally_optimal","local_start":"empty"}"#).unwrap();
        assert_eq!(parsed.kind(), StrategyKind::LocallyOptimal);
        assert!(serde_json::from_str::<Strategy>(r#"{"kind":"greedy"}"#).is_err());
        assert!(serde_json::from_str::<Strategy>(r#"{"kind":"scripted"}"#).is_err());
    }

    #[test]
    fn context_rejects_inconsistent_history() {
        let v = Valuation::additive(vec![1, 1]).unwrap();
        let prices = vec![vec![0, 0]];
        assert!(BidContext::new(0, &v, &prices, &[], &[]).is_err());
        let bad = vec![vec![0, 0, 0]];
        assert!(BidContext::new(0, &v, &bad, &[ItemSet::EMPTY], &[]).is_err());
    }

    fn small_case() -> impl PropStrategy<Value = (Vec<i64>, Vec<i64>, u32)> {
        (1usize..=4).prop_flat_map(|m| {
            (
                proptest::collection::vec(0i64..12, 1 << m),
                proptest::collection::vec(0i64..6, m),
                0u32..1 << m,
            )
        })
    }

    /// Turns arbitrary numbers into a monotone table by taking running
    /// maxima over subsets.
    fn monotone(raw: Vec<i64>) -> Valuation {
        let size = raw.len();
        let mut t = raw;
        t[0] = 0;
        for mask in 1..size {
            let best = ItemSet::from_bits(mask as u32)
                .iter()
                .map(|j| t[mask & !(1 << j)])
                .max()
                .unwrap_or(0);
            t[mask] = t[mask].max(best);
        }
        Valuation::table(t).unwrap()
    }

    proptest! {
        #[test]
        fn truthful_maximizes_surplus((raw, prices, held) in small_case()) {
            let view = View::new(monotone(raw), prices, ItemSet::from_bits(held));
            let ctx = view.ctx();
            let bid = truthful_bid(&ctx).unwrap();
            prop_assert!(bid.is_disjoint(ctx.held()));
            prop_assert_eq!((ctx.surplus(bid), bid), brute_truthful(&ctx));
        }

        #[test]
        fn local_search_output_is_locally_optimal((raw, prices, held) in small_case(), prev in 0u32..16) {
            let view = View::new(monotone(raw), prices, ItemSet::from_bits(held))
                .with_previous(ItemSet::from_bits(prev));
            let ctx = view.ctx();
            for start in [LocalStart::Previous, LocalStart::Empty] {
                let bid = locally_optimal_bid(&ctx, start).unwrap();
                prop_assert!(bid.is_subset(ctx.available()));
                prop_assert!(is_locally_optimal(&ctx, bid));
            }
        }

        #[test]
        fn truthful_bids_are_locally_optimal((raw, prices, held) in small_case()) {
            let view = View::new(monotone(raw), prices, ItemSet::from_bits(held));
            let ctx = view.ctx();
            prop_assert!(is_locally_optimal(&ctx, truthful_bid(&ctx).unwrap()));
        }

        #[test]
        fn secure_bids_are_secure_and_profit_maximal((raw, prices, held) in small_case()) {
            let view = View::new(monotone(raw), prices, ItemSet::from_bits(held));
            let ctx = view.ctx();
            for variant in [SecureVariant::Incremented, SecureVariant::Plain] {
                match profit_max_secure_bid(&ctx, variant) {
                    Ok(bid) => {
                        prop_assert!(is_secure(&ctx, bid, variant));
                        let best = ctx.available().subsets()
                            .filter(|&t| is_secure(&ctx, t, variant))
                            .map(|t| ctx.surplus(t))
                            .max()
                            .unwrap();
                        prop_assert_eq!(ctx.surplus(bid), best);
                    }
                    Err(Error::InsecureProvisionalState { witness, .. }) => {
                        prop_assert!(!is_secure(&ctx, ItemSet::EMPTY, variant));
                        prop_assert!(witness.is_subset(ctx.held()));
                    }
                    Err(e) => prop_assert!(false, "unexpected error {e}"),
                }
            }
        }
    }
}
