//! Named instance families and the Monte Carlo trial harness.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::itemset::{ItemSet, MAX_ITEMS};
use crate::mechanism::{default_max_rounds, run_auction, AuctionOutcome, RoundRecord};
use crate::oracle::{measure_rationality, optimal_welfare, welfare, welfare_ratio, Guarantee, OptimalAllocation};
use crate::ratio::{ExtRational, Rational};
use crate::strategy::{LocalStart, SecureVariant, Strategy, StrategyKind};
use crate::valuation::Valuation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bidder {
    pub valuation: Valuation,
    pub strategy: Strategy,
}

/// A yes/no property of a finished auction, reported per trial.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    WelfareEquals {
        name: String,
        value: i64,
    },
    /// Every item is sold and nobody holds more than one.
    DistinctWinners {
        name: String,
    },
    /// The listed bidders end with nothing.
    BiddersEmpty {
        name: String,
        bidders: Vec<usize>,
    },
    /// Every item is sold to one of the listed bidders.
    ItemsHeldBy {
        name: String,
        bidders: Vec<usize>,
    },
    AllocationEquals {
        name: String,
        allocation: Vec<ItemSet>,
    },
    NegativeUtility {
        name: String,
        bidder: usize,
    },
}

impl Event {
    pub fn name(&self) -> &str {
        match self {
            Event::WelfareEquals { name, .. }
            | Event::DistinctWinners { name }
            | Event::BiddersEmpty { name, .. }
            | Event::ItemsHeldBy { name, .. }
            | Event::AllocationEquals { name, .. }
            | Event::NegativeUtility { name, .. } => name,
        }
    }

    fn bidders_mentioned(&self) -> Vec<usize> {
        match self {
            Event::BiddersEmpty { bidders, .. } | Event::ItemsHeldBy { bidders, .. } => bidders.clone(),
            Event::NegativeUtility { bidder, .. } => vec![*bidder],
            _ => Vec::new(),
        }
    }

    pub fn holds(&self, outcome: &AuctionOutcome, valuations: &[Valuation], welfare: i64) -> bool {
        let m = outcome.prices.len();
        let sold = outcome.allocation.iter().fold(ItemSet::EMPTY, |a, s| a.union(*s));
        match self {
            Event::WelfareEquals { value, .. } => welfare == *value,
            Event::DistinctWinners { .. } => {
                sold == ItemSet::full(m) && outcome.allocation.iter().all(|s| s.len() <= 1)
            }
            Event::BiddersEmpty { bidders, .. } => bidders.iter().all(|&i| outcome.allocation[i].is_empty()),
            Event::ItemsHeldBy { bidders, .. } => {
                let held = bidders
                    .iter()
                    .fold(ItemSet::EMPTY, |a, &i| a.union(outcome.allocation[i]));
                held == ItemSet::full(m)
            }
            Event::AllocationEquals { allocation, .. } => &outcome.allocation == allocation,
            Event::NegativeUtility { bidder, .. } => outcome.utility(*bidder, &valuations[*bidder]) < 0,
        }
    }
}

/// A complete auction instance: items, bidders and the events to track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub m: usize,
    #[serde(default = "default_epsilon_label")]
    pub epsilon_label: String,
    pub bidders: Vec<Bidder>,
    /// The α every valuation is claimed to satisfy, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<ExtRational>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<Event>,
}

fn default_epsilon_label() -> String {
    "1".into()
}

impl Scenario {
    fn new(name: &str, m: usize, bidders: Vec<Bidder>) -> Self {
        Scenario {
            name: name.into(),
            m,
            epsilon_label: default_epsilon_label(),
            bidders,
            alpha: None,
            params: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    fn with_alpha(mut self, alpha: i64) -> Self {
        self.alpha = Some(ExtRational::integer(alpha));
        self
    }

    fn with_params(mut self, params: &[(&str, i64)]) -> Self {
        self.params = params.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        self
    }

    fn with_event(mut self, event: Event) -> Self {
        self.events.push(event);
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > MAX_ITEMS {
            return Err(Error::InvalidScenario(format!(
                "m = {} must be in 1..={MAX_ITEMS}",
                self.m
            )));
        }
        if self.bidders.is_empty() {
            return Err(Error::InvalidScenario("a scenario needs at least one bidder".into()));
        }
        for (i, b) in self.bidders.iter().enumerate() {
            if b.valuation.universe_size() != self.m {
                return Err(Error::InvalidScenario(format!(
                    "bidder {i} valuation is over {} items, scenario has {}",
                    b.valuation.universe_size(),
                    self.m
                )));
            }
            if let Strategy::Scripted(script) = &b.strategy {
                if let Some(s) = script.iter().find(|s| !s.within(self.m)) {
                    return Err(Error::InvalidScenario(format!(
                        "bidder {i} script names items outside {s}"
                    )));
                }
            }
        }
        let mut names = std::collections::HashSet::new();
        for e in &self.events {
            if !names.insert(e.name()) {
                return Err(Error::InvalidScenario(format!("duplicate event name {:?}", e.name())));
            }
            if let Some(&i) = e.bidders_mentioned().iter().find(|&&i| i >= self.bidders.len()) {
                return Err(Error::InvalidScenario(format!("event {:?} names bidder {i}", e.name())));
            }
            if let Event::AllocationEquals { allocation, .. } = e {
                if allocation.len() != self.bidders.len() {
                    return Err(Error::InvalidScenario(format!(
                        "event {:?} allocation has {} sets for {} bidders",
                        e.name(),
                        allocation.len(),
                        self.bidders.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn valuations(&self) -> Vec<Valuation> {
        self.bidders.iter().map(|b| b.valuation.clone()).collect()
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        self.bidders.iter().map(|b| b.strategy.clone()).collect()
    }

    /// The strategy kind shared by every bidder, if they all agree.
    pub fn uniform_strategy_kind(&self) -> Option<StrategyKind> {
        let first = self.bidders.first()?.strategy.kind();
        self.bidders.iter().all(|b| b.strategy.kind() == first).then_some(first)
    }

    /// The welfare and rationality guarantee that applies to this scenario:
    /// a claimed finite α and one strategy family for everybody.
    pub fn guarantee(&self) -> Option<(Guarantee, Rational)> {
        let alpha = self.alpha?.finite()?;
        Some((Guarantee::for_kind(self.uniform_strategy_kind()?)?, alpha))
    }

    pub fn set_local_start(&mut self, start: LocalStart) {
        for b in &mut self.bidders {
            if let Strategy::LocallyOptimal { start: s } = &mut b.strategy {
                *s = start;
            }
        }
    }

    pub fn set_secure_variant(&mut self, variant: SecureVariant) {
        for b in &mut self.bidders {
            if let Strategy::SecureProfitMax { variant: v } = &mut b.strategy {
                *v = variant;
            }
        }
    }
}

fn need(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg()))
    }
}

/// Two items, two bidders who value each item at 1 and the pair at `big_m`,
/// bidding truthfully.
pub fn build_bad_pair(big_m: i64) -> Result<Scenario> {
    need(big_m >= 2, || format!("bad_pair needs M >= 2 (got {big_m})"))?;
    let v = Valuation::pair_bonus(2, 1, big_m)?;
    let bidders = (0..2)
        .map(|_| Bidder {
            valuation: v.clone(),
            strategy: Strategy::Truthful,
        })
        .collect();
    Ok(Scenario::new("bad_pair", 2, bidders)
        .with_alpha(big_m - 1)
        .with_params(&[("M", big_m)])
        .with_event(Event::WelfareEquals {
            name: "welfare_2".into(),
            value: 2,
        }))
}

/// `k` items and `l` identical truthful bidders with
/// `v(S) = (|S| - 1) α + 1`.
pub fn build_truthful_tight(k: usize, alpha: i64, l: usize) -> Result<Scenario> {
    need((2..=MAX_ITEMS).contains(&k), || {
        format!("truthful_tight needs 2 <= k <= {MAX_ITEMS} (got {k})")
    })?;
    need(l > k, || format!("truthful_tight needs L > k (got L = {l}, k = {k})"))?;
    need(alpha >= 1, || format!("truthful_tight needs alpha >= 1 (got {alpha})"))?;
    let v = Valuation::symmetric_step(k, alpha, 1)?;
    let bidders = (0..l)
        .map(|_| Bidder {
            valuation: v.clone(),
            strategy: Strategy::Truthful,
        })
        .collect();
    Ok(Scenario::new("truthful_tight", k, bidders)
        .with_alpha(alpha)
        .with_params(&[("k", k as i64), ("alpha", alpha), ("L", l as i64)])
        .with_event(Event::DistinctWinners {
            name: "distinct_winners".into(),
        }))
}

/// `k n + 1` items: blocks `X_i = {i k, …, i k + k - 1}` and a shared item
/// `z = k n`. Bidder `i < n` (Type I) values `S ⊆ X_i` at
/// `(|S| - 1) α² + α`; then for every item `x` of every block, `l` Type II
/// bidders value `x` at 1, `z` at `h` and both at `h + α`. Everybody bids
/// locally optimally.
pub fn build_local_tight(k: usize, n: usize, alpha: i64, h: i64, l: usize) -> Result<Scenario> {
    need(k >= 1 && n >= 1, || {
        format!("local_tight needs k, n >= 1 (got k = {k}, n = {n})")
    })?;
    need(k * n < MAX_ITEMS, || {
        format!("local_tight needs k n + 1 <= {MAX_ITEMS}")
    })?;
    need(alpha >= 1, || format!("local_tight needs alpha >= 1 (got {alpha})"))?;
    need(h > alpha, || {
        format!("local_tight needs H > alpha (got H = {h}, alpha = {alpha})")
    })?;
    need(l >= 1, || "local_tight needs L >= 1".into())?;
    let m = k * n + 1;
    let z = k * n;
    let mut bidders = Vec::with_capacity(n + k * n * l);
    for i in 0..n {
        let block: ItemSet = (i * k..(i + 1) * k).collect();
        bidders.push(Bidder {
            valuation: Valuation::symmetric_step_on(m, alpha, 1, alpha, block)?,
            strategy: Strategy::locally_optimal(),
        });
    }
    for x in 0..k * n {
        let v = Valuation::type2_pair(m, x, z, 1, h, alpha)?;
        for _ in 0..l {
            bidders.push(Bidder {
                valuation: v.clone(),
                strategy: Strategy::locally_optimal(),
            });
        }
    }
    let type2: Vec<usize> = (n..bidders.len()).collect();
    Ok(Scenario::new("local_tight", m, bidders)
        .with_alpha(alpha)
        .with_params(&[
            ("k", k as i64),
            ("n", n as i64),
            ("alpha", alpha),
            ("H", h),
            ("L", l as i64),
        ])
        .with_event(Event::BiddersEmpty {
            name: "type1_empty".into(),
            bidders: (0..n).collect(),
        })
        .with_event(Event::ItemsHeldBy {
            name: "all_type2".into(),
            bidders: type2,
        }))
}

/// Two items; bidders 0 and 1 are unit-demand for item 0 and item 1 (value
/// 2), bidder 2 values each item at 1 and the pair at `2 big_m`. Everybody
/// bids the profit-maximizing secure set.
pub fn build_superadditive_lemma4(big_m: i64) -> Result<Scenario> {
    need(big_m >= 2, || format!("lemma4 needs M >= 2 (got {big_m})"))?;
    let secure = Strategy::secure_profit_max();
    let bidders = vec![
        Bidder {
            valuation: Valuation::unit_demand(vec![2, 0])?,
            strategy: secure.clone(),
        },
        Bidder {
            valuation: Valuation::unit_demand(vec![0, 2])?,
            strategy: secure.clone(),
        },
        Bidder {
            valuation: Valuation::pair_bonus(2, 1, 2 * big_m)?,
            strategy: secure,
        },
    ];
    Ok(Scenario::new("lemma4", 2, bidders)
        .with_alpha(2 * big_m - 1)
        .with_params(&[("M", big_m)])
        .with_event(Event::BiddersEmpty {
            name: "pair_bidder_empty".into(),
            bidders: vec![2],
        }))
}

/// Bidder `i` bids `partition[i]` in round 0 and nothing afterwards.
/// Without explicit valuations every bidder values each item at 1.
pub fn build_scripted_partition(
    m: usize,
    partition: Vec<ItemSet>,
    valuations: Option<Vec<Valuation>>,
) -> Result<Scenario> {
    if m == 0 || m > MAX_ITEMS {
        return Err(Error::InvalidPartition(format!("m = {m} must be in 1..={MAX_ITEMS}")));
    }
    if partition.is_empty() {
        return Err(Error::InvalidPartition("no parts".into()));
    }
    let mut seen = ItemSet::EMPTY;
    for (i, part) in partition.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::InvalidPartition(format!("part {i} is empty")));
        }
        if !part.within(m) {
            return Err(Error::InvalidPartition(format!(
                "part {i} = {part} leaves the {m}-item universe"
            )));
        }
        if !part.is_disjoint(seen) {
            return Err(Error::InvalidPartition(format!(
                "part {i} = {part} overlaps an earlier part"
            )));
        }
        seen = seen.union(*part);
    }
    let valuations = match valuations {
        Some(v) => {
            if v.len() != partition.len() {
                return Err(Error::InvalidPartition(format!(
                    "{} valuations for {} parts",
                    v.len(),
                    partition.len()
                )));
            }
            v
        }
        None => vec![Valuation::additive(vec![1; m])?; partition.len()],
    };
    let bidders = valuations
        .into_iter()
        .zip(&partition)
        .map(|(valuation, part)| Bidder {
            valuation,
            strategy: Strategy::Scripted(vec![*part]),
        })
        .collect();
    let s = Scenario::new("scripted_partition", m, bidders).with_event(Event::AllocationEquals {
        name: "partition_reproduced".into(),
        allocation: partition,
    });
    s.validate()?;
    Ok(s)
}

/// Rounds the scripted bidder keeps bidding in [`build_nonsecure_punishment`].
const PUNISHED_SCRIPT_ROUNDS: usize = 16;

/// Three items. Bidder 0 values items 0 and 1 at 1 each and 10 together
/// (item 2 at nothing) and stubbornly bids `{0, 1}` for 16 rounds,
/// regardless of price. Six additive copies value the items at 2, 13, 13
/// and bid the profit-maximizing secure set. The copies drive the price of
/// item 1 past 10 while bidder 0 keeps recapturing it, so she ends up owning
/// the pair at a loss.
pub fn build_nonsecure_punishment() -> Result<Scenario> {
    let m = 3;
    let mut bidders = vec![Bidder {
        valuation: Valuation::pair_bonus_on(m, [0, 1], 1, 10)?,
        strategy: Strategy::Scripted(vec![ItemSet::from_items([0, 1], m)?; PUNISHED_SCRIPT_ROUNDS]),
    }];
    for _ in 0..6 {
        bidders.push(Bidder {
            valuation: Valuation::additive(vec![2, 13, 13])?,
            strategy: Strategy::secure_profit_max(),
        });
    }
    Ok(Scenario::new("nonsecure_punishment", m, bidders)
        .with_alpha(9)
        .with_event(Event::NegativeUtility {
            name: "scripted_negative_utility".into(),
            bidder: 0,
        }))
}

/// Names accepted by [`build_builtin`].
pub const BUILTIN_NAMES: [&str; 6] = [
    "bad_pair",
    "truthful_tight",
    "local_tight",
    "lemma4",
    "nonsecure_punishment",
    "scripted_partition",
];

/// Parameters for the built-in families; unset values take the defaults
/// listed on each field.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BuiltinParams {
    /// Pair value: 10 for `bad_pair`, 50 for `lemma4`.
    pub big_m: Option<i64>,
    /// Items per block: 4 for `truthful_tight`, 2 for `local_tight`.
    pub k: Option<usize>,
    /// Type I bidders in `local_tight`: 2.
    pub n: Option<usize>,
    /// 3 for `truthful_tight`, 2 for `local_tight`.
    pub alpha: Option<i64>,
    /// `local_tight` special-item value: 3.
    pub h: Option<i64>,
    /// Copies: 60 for `truthful_tight`, 5 for `local_tight`.
    pub l: Option<usize>,
    /// `scripted_partition` parts; default `{0}, {1}`.
    pub partition: Option<Vec<ItemSet>>,
}

pub fn build_builtin(name: &str, p: &BuiltinParams) -> Result<Scenario> {
    match name {
        "bad_pair" => build_bad_pair(p.big_m.unwrap_or(10)),
        "truthful_tight" => build_truthful_tight(p.k.unwrap_or(4), p.alpha.unwrap_or(3), p.l.unwrap_or(60)),
        "local_tight" => build_local_tight(
            p.k.unwrap_or(2),
            p.n.unwrap_or(2),
            p.alpha.unwrap_or(2),
            p.h.unwrap_or(3),
            p.l.unwrap_or(5),
        ),
        "lemma4" => build_superadditive_lemma4(p.big_m.unwrap_or(50)),
        "nonsecure_punishment" => build_nonsecure_punishment(),
        "scripted_partition" => {
            let parts = p
                .partition
                .clone()
                .unwrap_or_else(|| vec![ItemSet::singleton(0), ItemSet::singleton(1)]);
            let m = parts.iter().map(|s| s.span()).max().unwrap_or(0);
            build_scripted_partition(m, parts, None)
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown builtin {other:?}; expected one of {}",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

/// Parses `"0,1;2;3,4"` into parts `{0,1}`, `{2}`, `{3,4}`.
pub fn parse_partition(text: &str) -> Result<Vec<ItemSet>> {
    text.split(';')
        .map(|part| {
            part.split(',')
                .map(|item| {
                    let item = item.trim();
                    item.parse::<usize>()
                        .ok()
                        .filter(|&j| j < MAX_ITEMS)
                        .ok_or_else(|| Error::InvalidPartition(format!("bad item {item:?} in {text:?}")))
                })
                .collect()
        })
        .collect()
}

/// Seed of trial `index`: the first output of ChaCha8 keyed by `master` on
/// stream `index`.
pub fn derive_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    rng.next_u64()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialOptions {
    /// Worker threads; 1 runs serially.
    pub jobs: usize,
    /// Round cap per auction; defaults to [`default_max_rounds`].
    pub max_rounds: Option<usize>,
    /// Keep the round trace of trial 0.
    pub capture_trace: bool,
}

impl Default for TrialOptions {
    fn default() -> Self {
        TrialOptions {
            jobs: 1,
            max_rounds: None,
            capture_trace: false,
        }
    }
}

/// One row of results. A diverged trial reports the state it reached.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub rounds: usize,
    pub welfare: i64,
    pub optimal: i64,
    pub ratio: Rational,
    /// Subset-level rationality.
    pub lambda: ExtRational,
    /// Rationality of whole provisional sets.
    pub full_lambda: ExtRational,
    pub diverged: bool,
    /// Whether the welfare bound of the scenario's guarantee held, when one
    /// applies.
    pub welfare_bound: Option<bool>,
    /// Whether the rationality bound held, when a guarantee applies.
    pub lambda_bound: Option<bool>,
    pub events: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregates {
    pub trials: usize,
    pub mean_welfare: f64,
    pub mean_ratio: f64,
    pub min_ratio: Rational,
    pub max_lambda: ExtRational,
    pub max_full_lambda: ExtRational,
    pub diverged: usize,
    pub bound_violations: usize,
    pub event_frequencies: Vec<(String, f64)>,
}

impl Aggregates {
    pub fn from_rows(rows: &[TrialRow], event_names: &[String]) -> Self {
        let n = rows.len().max(1) as f64;
        let freq = |k: usize| rows.iter().filter(|r| r.events[k]).count() as f64 / n;
        Aggregates {
            trials: rows.len(),
            mean_welfare: rows.iter().map(|r| r.welfare as f64).sum::<f64>() / n,
            mean_ratio: rows.iter().map(|r| ExtRational::Finite(r.ratio).to_f64()).sum::<f64>() / n,
            min_ratio: rows
                .iter()
                .map(|r| r.ratio)
                .min()
                .unwrap_or_else(|| Rational::from_integer(1)),
            max_lambda: rows.iter().map(|r| r.lambda).max().unwrap_or_else(ExtRational::one),
            max_full_lambda: rows
                .iter()
                .map(|r| r.full_lambda)
                .max()
                .unwrap_or_else(ExtRational::one),
            diverged: rows.iter().filter(|r| r.diverged).count(),
            bound_violations: rows
                .iter()
                .filter(|r| r.welfare_bound == Some(false) || r.lambda_bound == Some(false))
                .count(),
            event_frequencies: event_names
                .iter()
                .enumerate()
                .map(|(k, name)| (name.clone(), freq(k)))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialStats {
    pub scenario: String,
    pub seed: u64,
    pub optimal: OptimalAllocation,
    pub event_names: Vec<String>,
    pub rows: Vec<TrialRow>,
    pub aggregates: Aggregates,
    /// Round trace of trial 0, when requested.
    pub trace: Option<Vec<RoundRecord>>,
}

/// Runs `trials` independent auctions of `scenario`. Trial `i` uses seed
/// `derive_seed(seed, i)`, so results do not depend on `opts.jobs`.
pub fn run_trials(scenario: &Scenario, trials: usize, seed: u64, opts: &TrialOptions) -> Result<TrialStats> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if opts.jobs == 0 {
        return Err(Error::InvalidArgument("jobs must be at least 1".into()));
    }
    scenario.validate()?;
    let valuations = scenario.valuations();
    let strategies = scenario.strategies();
    let optimal = optimal_welfare(&valuations)?;
    let max_rounds = opts.max_rounds.unwrap_or_else(|| default_max_rounds(&valuations));
    let guarantee = scenario.guarantee();
    let event_names: Vec<String> = scenario.events.iter().map(|e| e.name().to_string()).collect();

    let run_one = |trial: usize| -> Result<(TrialRow, Option<Vec<RoundRecord>>)> {
        let trial_seed = derive_seed(seed, trial);
        let (outcome, diverged) = match run_auction(&valuations, &strategies, trial_seed, max_rounds) {
            Ok(o) => (o, false),
            Err(Error::Divergence { partial, .. }) => (*partial, true),
            Err(e) => return Err(e),
        };
        outcome.verify()?;
        let w = welfare(&outcome.allocation, &valuations)?;
        let rationality = measure_rationality(&outcome, &valuations)?;
        let (welfare_bound, lambda_bound) = match guarantee {
            Some((g, alpha)) if !diverged => (
                Some(g.welfare_bound_holds(alpha, optimal.welfare, w, scenario.m)),
                Some(g.rationality_bound_holds(alpha, rationality.lambda)),
            ),
            _ => (None, None),
        };
        let events = scenario
            .events
            .iter()
            .map(|e| !diverged && e.holds(&outcome, &valuations, w))
            .collect();
        let row = TrialRow {
            trial,
            seed: trial_seed,
            rounds: outcome.rounds,
            welfare: w,
            optimal: optimal.welfare,
            ratio: welfare_ratio(w, &optimal),
            lambda: rationality.lambda,
            full_lambda: rationality.full_set_lambda,
            diverged,
            welfare_bound,
            lambda_bound,
            events,
        };
        let trace = (opts.capture_trace && trial == 0).then_some(outcome.trace);
        Ok((row, trace))
    };

    let results: Vec<(TrialRow, Option<Vec<RoundRecord>>)> = if opts.jobs == 1 {
        (0..trials).map(run_one).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
        pool.install(|| (0..trials).into_par_iter().map(run_one).collect::<Result<_>>())?
    };

    let mut trace = None;
    let mut rows = Vec::with_capacity(trials);
    for (row, t) in results {
        if t.is_some() {
            trace = t;
        }
        rows.push(row);
    }
    let aggregates = Aggregates::from_rows(&rows, &event_names);
    Ok(TrialStats {
        scenario: scenario.name.clone(),
        seed,
        optimal,
        event_names,
        rows,
        aggregates,
        trace,
    })
}

const FIXED_COLUMNS: [&str; 14] = [
    "trial",
    "seed",
    "rounds",
    "welfare",
    "optimal",
    "ratio_num",
    "ratio_den",
    "lambda_num",
    "lambda_den",
    "full_lambda_num",
    "full_lambda_den",
    "diverged",
    "welfare_bound",
    "lambda_bound",
];

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn opt_flag(b: Option<bool>) -> &'static str {
    b.map_or("", flag)
}

/// Writes one CSV row per trial. Event flags follow the fixed columns,
/// one column per event name.
pub fn write_csv<W: Write>(rows: &[TrialRow], event_names: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = FIXED_COLUMNS
        .iter()
        .copied()
        .chain(event_names.iter().map(String::as_str))
        .collect();
    w.write_record(&header)?;
    for r in rows {
        let (ln, ld) = r.lambda.parts();
        let (fn_, fd) = r.full_lambda.parts();
        let mut record = vec![
            r.trial.to_string(),
            r.seed.to_string(),
            r.rounds.to_string(),
            r.welfare.to_string(),
            r.optimal.to_string(),
            r.ratio.numer().to_string(),
            r.ratio.denom().to_string(),
            ln,
            ld,
            fn_,
            fd,
            flag(r.diverged).into(),
            opt_flag(r.welfare_bound).into(),
            opt_flag(r.lambda_bound).into(),
        ];
        record.extend(r.events.iter().map(|&e| flag(e).to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, k: usize) -> Result<T> {
    let raw = record.get(k).unwrap_or("");
    raw.parse().map_err(|_| {
        Error::InvalidArgument(format!(
            "bad CSV value {raw:?} in column {}",
            FIXED_COLUMNS.get(k).unwrap_or(&"event")
        ))
    })
}

fn parse_flag(raw: &str) -> Result<bool> {
    match raw {
        "1" => Ok(true),
        "0" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("bad CSV flag {raw:?}"))),
    }
}

fn parse_opt_flag(raw: &str) -> Result<Option<bool>> {
    if raw.is_empty() {
        Ok(None)
    } else {
        parse_flag(raw).map(Some)
    }
}

fn parse_ext(num: &str, den: &str) -> Result<ExtRational> {
    if num == "inf" {
        return Ok(ExtRational::Infinite);
    }
    let bad = || Error::InvalidArgument(format!("bad CSV rational {num}/{den}"));
    let n: i64 = num.parse().map_err(|_| bad())?;
    let d: i64 = den.parse().map_err(|_| bad())?;
    if d == 0 {
        return Err(bad());
    }
    Ok(ExtRational::new(n, d))
}

/// Reads rows written by [`write_csv`], returning the event names and rows.
pub fn read_csv<R: Read>(input: R) -> Result<(Vec<String>, Vec<TrialRow>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.len() < FIXED_COLUMNS.len() || header.iter().zip(FIXED_COLUMNS).any(|(a, b)| a != b) {
        return Err(Error::InvalidArgument(
            "CSV header does not match the results schema".into(),
        ));
    }
    let event_names: Vec<String> = header.iter().skip(FIXED_COLUMNS.len()).map(String::from).collect();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let get = |k: usize| record.get(k).unwrap_or("");
        let ratio = parse_ext(get(5), get(6))?
            .finite()
            .ok_or_else(|| Error::InvalidArgument("welfare ratio cannot be infinite".into()))?;
        rows.push(TrialRow {
            trial: parse_field(&record, 0)?,
            seed: parse_field(&record, 1)?,
            rounds: parse_field(&record, 2)?,
            welfare: parse_field(&record, 3)?,
            optimal: parse_field(&record, 4)?,
            ratio,
            lambda: parse_ext(get(7), get(8))?,
            full_lambda: parse_ext(get(9), get(10))?,
            diverged: parse_flag(get(11))?,
            welfare_bound: parse_opt_flag(get(12))?,
            lambda_bound: parse_opt_flag(get(13))?,
            events: (FIXED_COLUMNS.len()..record.len())
                .map(|k| parse_flag(get(k)))
                .collect::<Result<_>>()?,
        });
    }
    Ok((event_names, rows))
}

/// The summary object: scenario, trial count, seed, optimum, means,
/// extremes and one `freq_<event>` entry per event.
pub fn summary_json(scenario: &str, seed: u64, optimal: i64, agg: &Aggregates) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    map.insert("scenario".into(), scenario.into());
    map.insert("trials".into(), agg.trials.into());
    map.insert("seed".into(), seed.into());
    map.insert("optimal".into(), optimal.into());
    map.insert("mean_welfare".into(), agg.mean_welfare.into());
    map.insert("mean_ratio".into(), agg.mean_ratio.into());
    map.insert("min_ratio".into(), agg.min_ratio.to_string().into());
    map.insert("max_lambda".into(), agg.max_lambda.to_string().into());
    map.insert("max_full_lambda".into(), agg.max_full_lambda.to_string().into());
    map.insert("diverged".into(), agg.diverged.into());
    map.insert("bound_violations".into(), agg.bound_violations.into());
    for (name, f) in &agg.event_frequencies {
        map.insert(format!("freq_{name}"), (*f).into());
    }
    serde_json::Value::Object(map)
}

impl TrialStats {
    pub fn summary(&self) -> serde_json::Value {
        summary_json(&self.scenario, self.seed, self.optimal.welfare, &self.aggregates)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(&self.rows, &self.event_names, out)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Internal(e.to_string()))
    }
}
