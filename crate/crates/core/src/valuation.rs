//! Monotone set-valued valuations and the degree-of-submodularity metric.
//!
//! All values are non-negative integers counted in price increments
//! ("units"). Structured forms are evaluated by closed formula; any form can
//! be expanded into an explicit table indexed by bitmask.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::itemset::{ItemSet, MAX_ITEMS};
use crate::ratio::{ExtRational, Rational};

/// Upper bound on any single set value, keeping every price and welfare sum
/// far from `i64` overflow.
pub const MAX_VALUE: i64 = 1 << 40;

/// Largest universe for which the degree of submodularity is computed.
pub const MAX_ANALYSIS_ITEMS: usize = 16;

/// Largest universe accepted by [`random_near_submodular`].
pub const MAX_RANDOM_ITEMS: usize = 10;

const GENERATION_ATTEMPTS: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Form {
    Table(Vec<i64>),
    Additive(Vec<i64>),
    UnitDemand(Vec<i64>),
    /// `scale * (den + (c - 1) * num)` where `c = |S ∩ support| > 0`.
    SymmetricStep {
        alpha_num: i64,
        alpha_den: i64,
        scale: i64,
        support: ItemSet,
    },
    /// `unit` for one of the two items, `pair` for both.
    PairBonus {
        items: [usize; 2],
        unit: i64,
        pair: i64,
    },
    /// `unit` for the target alone, `high` for the special item alone,
    /// `high + bonus` for both.
    Type2Pair {
        target: usize,
        special: usize,
        unit: i64,
        high: i64,
        bonus: i64,
    },
}

/// A normalized, monotone valuation over a universe of `m` items.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ValuationSpec", into = "ValuationSpec")]
pub struct Valuation {
    m: usize,
    form: Form,
}

/// JSON form of a valuation, tagged by `"form"`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ValuationSpec {
    /// `2^m` values in bitmask order.
    Table {
        values: Vec<i64>,
    },
    Additive {
        values: Vec<i64>,
    },
    UnitDemand {
        values: Vec<i64>,
    },
    SymmetricStep {
        m: usize,
        alpha_num: i64,
        #[serde(default = "one")]
        alpha_den: i64,
        #[serde(default = "one")]
        scale: i64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support: Option<ItemSet>,
    },
    PairBonus {
        m: usize,
        unit: i64,
        pair: i64,
        #[serde(default = "first_pair")]
        items: [usize; 2],
    },
    Type2Pair {
        m: usize,
        target: usize,
        special: usize,
        unit: i64,
        #[serde(alias = "H")]
        high: i64,
        bonus: i64,
    },
}

fn one() -> i64 {
    1
}

fn first_pair() -> [usize; 2] {
    [0, 1]
}

fn check_value(v: i64, what: &str) -> Result<()> {
    if !(0..=MAX_VALUE).contains(&v) {
        return Err(Error::InvalidValuation(format!(
            "{what} = {v} is outside [0, {MAX_VALUE}]"
        )));
    }
    Ok(())
}

fn check_universe(m: usize) -> Result<()> {
    if m == 0 || m > MAX_ITEMS {
        return Err(Error::InvalidValuation(format!(
            "universe size {m} must be in 1..={MAX_ITEMS}"
        )));
    }
    Ok(())
}

fn check_item(item: usize, m: usize) -> Result<()> {
    if item >= m {
        return Err(Error::UniverseMismatch {
            expected: m,
            found: item + 1,
        });
    }
    Ok(())
}

impl Valuation {
    /// Explicit table of `2^m` values in bitmask order.
    pub fn table(values: Vec<i64>) -> Result<Self> {
        let len = values.len();
        if !len.is_power_of_two() || len < 2 {
            return Err(Error::InvalidValuation(format!(
                "table length {len} is not 2^m for some m >= 1"
            )));
        }
        let m = len.trailing_zeros() as usize;
        check_universe(m)?;
        if values[0] != 0 {
            return Err(Error::InvalidValuation(format!(
                "v(empty set) = {} but must be 0",
                values[0]
            )));
        }
        for (mask, &v) in values.iter().enumerate() {
            check_value(v, &format!("v({})", ItemSet::from_bits(mask as u32)))?;
        }
        let v = Valuation {
            m,
            form: Form::Table(values),
        };
        v.check_monotone()?;
        Ok(v)
    }

    pub fn additive(values: Vec<i64>) -> Result<Self> {
        check_universe(values.len())?;
        for (j, &w) in values.iter().enumerate() {
            check_value(w, &format!("item {j}"))?;
        }
        let total: i64 = values.iter().sum();
        check_value(total, "v(all items)")?;
        Ok(Valuation {
            m: values.len(),
            form: Form::Additive(values),
        })
    }

    pub fn unit_demand(values: Vec<i64>) -> Result<Self> {
        check_universe(values.len())?;
        for (j, &w) in values.iter().enumerate() {
            check_value(w, &format!("item {j}"))?;
        }
        Ok(Valuation {
            m: values.len(),
            form: Form::UnitDemand(values),
        })
    }

    /// `v(S) = (|S| - 1) * alpha + 1` for nonempty `S`, with a rational
    /// `alpha = num / den` stored scaled by `den`.
    pub fn symmetric_step(m: usize, alpha_num: i64, alpha_den: i64) -> Result<Self> {
        Self::symmetric_step_on(m, alpha_num, alpha_den, 1, ItemSet::full(m.min(MAX_ITEMS)))
    }

    /// Scaled symmetric step counting only items of `support`.
    pub fn symmetric_step_on(m: usize, alpha_num: i64, alpha_den: i64, scale: i64, support: ItemSet) -> Result<Self> {
        check_universe(m)?;
        if alpha_den <= 0 || alpha_num < 0 || scale < 0 {
            return Err(Error::InvalidValuation(format!(
                "symmetric_step needs alpha_num >= 0, alpha_den > 0, scale >= 0 (got {alpha_num}/{alpha_den}, scale {scale})"
            )));
        }
        if !support.within(m) {
            return Err(Error::UniverseMismatch {
                expected: m,
                found: support.span(),
            });
        }
        let c = support.len() as i64;
        let top = (c.max(1) - 1)
            .checked_mul(alpha_num)
            .and_then(|x| x.checked_add(alpha_den))
            .and_then(|x| x.checked_mul(scale))
            .ok_or_else(|| Error::InvalidValuation("symmetric_step values overflow".into()))?;
        check_value(top, "v(support)")?;
        Ok(Valuation {
            m,
            form: Form::SymmetricStep {
                alpha_num,
                alpha_den,
                scale,
                support,
            },
        })
    }

    /// Items 0 and 1 worth `unit` each and `pair` together.
    pub fn pair_bonus(m: usize, unit: i64, pair: i64) -> Result<Self> {
        Self::pair_bonus_on(m, [0, 1], unit, pair)
    }

    pub fn pair_bonus_on(m: usize, items: [usize; 2], unit: i64, pair: i64) -> Result<Self> {
        check_universe(m)?;
        check_item(items[0], m)?;
        check_item(items[1], m)?;
        if items[0] == items[1] {
            return Err(Error::InvalidValuation("pair_bonus items must differ".into()));
        }
        check_value(unit, "unit")?;
        check_value(pair, "pair")?;
        if pair < unit {
            return Err(Error::InvalidValuation(format!(
                "pair_bonus is not monotone: pair {pair} < unit {unit}"
            )));
        }
        Ok(Valuation {
            m,
            form: Form::PairBonus { items, unit, pair },
        })
    }

    pub fn type2_pair(m: usize, target: usize, special: usize, unit: i64, high: i64, bonus: i64) -> Result<Self> {
        check_universe(m)?;
        check_item(target, m)?;
        check_item(special, m)?;
        if target == special {
            return Err(Error::InvalidValuation(
                "type2_pair target and special item must differ".into(),
            ));
        }
        check_value(unit, "unit")?;
        check_value(high, "high")?;
        check_value(bonus, "bonus")?;
        check_value(high + bonus, "v(target, special)")?;
        if high + bonus < unit {
            return Err(Error::InvalidValuation(format!(
                "type2_pair is not monotone: high + bonus = {} < unit {unit}",
                high + bonus
            )));
        }
        Ok(Valuation {
            m,
            form: Form::Type2Pair {
                target,
                special,
                unit,
                high,
                bonus,
            },
        })
    }

    /// The all-zero valuation.
    pub fn zero(m: usize) -> Result<Self> {
        Self::additive(vec![0; m])
    }

    pub fn universe_size(&self) -> usize {
        self.m
    }

    pub fn is_table(&self) -> bool {
        matches!(self.form, Form::Table(_))
    }

    /// `v(s)`, rejecting items outside the universe.
    pub fn eval(&self, s: ItemSet) -> Result<i64> {
        if !s.within(self.m) {
            return Err(Error::UniverseMismatch {
                expected: self.m,
                found: s.span(),
            });
        }
        Ok(self.value(s))
    }

    /// `v(s)` for a set already known to lie in the universe.
    pub fn value(&self, s: ItemSet) -> i64 {
        debug_assert!(s.within(self.m), "{s} outside universe of {}", self.m);
        match &self.form {
            Form::Table(values) => values[s.bits() as usize],
            Form::Additive(values) => s.iter().map(|j| values[j]).sum(),
            Form::UnitDemand(values) => s.iter().map(|j| values[j]).max().unwrap_or(0),
            Form::SymmetricStep {
                alpha_num,
                alpha_den,
                scale,
                support,
            } => {
                let c = s.intersection(*support).len() as i64;
                if c == 0 {
                    0
                } else {
                    scale * (alpha_den + (c - 1) * alpha_num)
                }
            }
            Form::PairBonus { items, unit, pair } => match (s.contains(items[0]), s.contains(items[1])) {
                (true, true) => *pair,
                (false, false) => 0,
                _ => *unit,
            },
            Form::Type2Pair {
                target,
                special,
                unit,
                high,
                bonus,
            } => match (s.contains(*target), s.contains(*special)) {
                (true, true) => high + bonus,
                (false, true) => *high,
                (true, false) => *unit,
                (false, false) => 0,
            },
        }
    }

    /// Marginal value `v(s ∪ {x}) - v(s)`.
    pub fn marginal(&self, x: usize, s: ItemSet) -> i64 {
        self.value(s.with(x)) - self.value(s.without(x))
    }

    /// All `2^m` values in bitmask order.
    pub fn values(&self) -> Vec<i64> {
        if let Form::Table(values) = &self.form {
            return values.clone();
        }
        (0..1u32 << self.m)
            .map(|mask| self.value(ItemSet::from_bits(mask)))
            .collect()
    }

    /// The same function in table form.
    pub fn to_table(&self) -> Valuation {
        Valuation {
            m: self.m,
            form: Form::Table(self.values()),
        }
    }

    /// Verifies normalization and free disposal over the whole lattice.
    pub fn check_monotone(&self) -> Result<()> {
        let values = self.values();
        if values[0] != 0 {
            return Err(Error::InvalidValuation(format!(
                "v(empty set) = {} but must be 0",
                values[0]
            )));
        }
        for mask in 0..values.len() {
            for x in 0..self.m {
                let bit = 1 << x;
                if mask & bit == 0 && values[mask | bit] < values[mask] {
                    return Err(Error::NotMonotone {
                        smaller: ItemSet::from_bits(mask as u32),
                        larger: ItemSet::from_bits((mask | bit) as u32),
                        smaller_value: values[mask],
                        larger_value: values[mask | bit],
                    });
                }
            }
        }
        Ok(())
    }

    /// Exact degree of submodularity, see [`SubmodularityReport`].
    pub fn degree_of_submodularity(&self) -> Result<SubmodularityReport> {
        degree_of_submodularity(self)
    }

    pub fn is_alpha_near_submodular(&self, alpha: Rational) -> Result<bool> {
        is_alpha_near_submodular(self, alpha)
    }
}

impl From<Valuation> for ValuationSpec {
    fn from(v: Valuation) -> Self {
        let m = v.m;
        match v.form {
            Form::Table(values) => ValuationSpec::Table { values },
            Form::Additive(values) => ValuationSpec::Additive { values },
            Form::UnitDemand(values) => ValuationSpec::UnitDemand { values },
            Form::SymmetricStep {
                alpha_num,
                alpha_den,
                scale,
                support,
            } => ValuationSpec::SymmetricStep {
                m,
                alpha_num,
                alpha_den,
                scale,
                support: (support != ItemSet::full(m)).then_some(support),
            },
            Form::PairBonus { items, unit, pair } => ValuationSpec::PairBonus { m, unit, pair, items },
            Form::Type2Pair {
                target,
                special,
                unit,
                high,
                bonus,
            } => ValuationSpec::Type2Pair {
                m,
                target,
                special,
                unit,
                high,
                bonus,
            },
        }
    }
}

impl TryFrom<ValuationSpec> for Valuation {
    type Error = Error;

    fn try_from(spec: ValuationSpec) -> Result<Self> {
        match spec {
            ValuationSpec::Table { values } => Valuation::table(values),
            ValuationSpec::Additive { values } => Valuation::additive(values),
            ValuationSpec::UnitDemand { values } => Valuation::unit_demand(values),
            ValuationSpec::SymmetricStep {
                m,
                alpha_num,
                alpha_den,
                scale,
                support,
            } => {
                check_universe(m)?;
                let support = support.unwrap_or_else(|| ItemSet::full(m));
                Valuation::symmetric_step_on(m, alpha_num, alpha_den, scale, support)
            }
            ValuationSpec::PairBonus { m, unit, pair, items } => Valuation::pair_bonus_on(m, items, unit, pair),
            ValuationSpec::Type2Pair {
                m,
                target,
                special,
                unit,
                high,
                bonus,
            } => Valuation::type2_pair(m, target, special, unit, high, bonus),
        }
    }
}

/// A triple `(x, A, B)` with `A ⊂ B`, `x ∉ B`, whose marginal ratio
/// `(v(A+x) - v(A)) / (v(B+x) - v(B))` attains the degree of submodularity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub item: usize,
    pub smaller: ItemSet,
    pub larger: ItemSet,
}

impl Witness {
    /// Marginal ratio of this triple under `v`; `inf` on a zero denominator.
    pub fn ratio(&self, v: &Valuation) -> ExtRational {
        let num = v.marginal(self.item, self.smaller);
        let den = v.marginal(self.item, self.larger);
        ExtRational::new(num, den)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmodularityReport {
    /// Minimum marginal ratio, `inf` when no triple has a positive denominator.
    pub degree: ExtRational,
    /// `1 / degree`.
    pub alpha: ExtRational,
    pub witness: Option<Witness>,
}

/// Exact `min (v(A+x) - v(A)) / (v(B+x) - v(B))` over `x ∉ B`, `A ⊂ B`
/// (strict), skipping triples whose denominator is zero.
///
/// For each item `x` the marginals `d(A)` over sets avoiding `x` are folded
/// into a subset-minimum table, so the minimum over strict subsets of every
/// `B` costs `O(m)`; the whole scan is `O(m^2 2^m)`.
pub fn degree_of_submodularity(v: &Valuation) -> Result<SubmodularityReport> {
    let m = v.universe_size();
    if m > MAX_ANALYSIS_ITEMS {
        return Err(Error::UniverseTooLarge {
            m,
            limit: MAX_ANALYSIS_ITEMS,
        });
    }
    v.check_monotone()?;
    let values = v.values();
    let size = 1usize << m;

    // (numerator, denominator, witness) of the current minimum.
    let mut best: Option<(i64, i64, Witness)> = None;
    let mut sub_min: Vec<(i64, u32)> = vec![(0, 0); size];

    for x in 0..m {
        let bit = 1usize << x;
        for mask in 0..size {
            if mask & bit == 0 {
                sub_min[mask] = (values[mask | bit] - values[mask], mask as u32);
            }
        }
        // sub_min[B] = lexicographic min of (d(A), A) over A ⊆ B.
        for y in 0..m {
            if y == x {
                continue;
            }
            let ybit = 1usize << y;
            for mask in 0..size {
                if mask & bit == 0 && mask & ybit != 0 {
                    let cand = sub_min[mask ^ ybit];
                    if cand < sub_min[mask] {
                        sub_min[mask] = cand;
                    }
                }
            }
        }
        for larger in 1..size {
            if larger & bit != 0 {
                continue;
            }
            let den = values[larger | bit] - values[larger];
            if den == 0 {
                continue;
            }
            let (num, smaller) = ItemSet::from_bits(larger as u32)
                .iter()
                .map(|y| sub_min[larger ^ (1 << y)])
                .min()
                .expect("larger is nonempty");
            let better = match &best {
                None => true,
                Some((bn, bd, _)) => (num as i128 * *bd as i128).cmp(&(*bn as i128 * den as i128)) == Ordering::Less,
            };
            if better {
                best = Some((
                    num,
                    den,
                    Witness {
                        item: x,
                        smaller: ItemSet::from_bits(smaller),
                        larger: ItemSet::from_bits(larger as u32),
                    },
                ));
            }
        }
    }

    Ok(match best {
        None => SubmodularityReport {
            degree: ExtRational::Infinite,
            alpha: ExtRational::Infinite.recip(),
            witness: None,
        },
        Some((num, den, witness)) => {
            let degree = ExtRational::new(num, den);
            SubmodularityReport {
                degree,
                alpha: degree.recip(),
                witness: Some(witness),
            }
        }
    })
}

/// `degree_of_submodularity(v) >= 1 / alpha`.
pub fn is_alpha_near_submodular(v: &Valuation, alpha: Rational) -> Result<bool> {
    if alpha < Rational::from_integer(1) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must be >= 1")));
    }
    let report = degree_of_submodularity(v)?;
    Ok(report.degree >= ExtRational::Finite(alpha.recip()))
}

/// Draws a table-form valuation that is `alpha`-near-submodular,
/// deterministically per `seed`.
///
/// Construction: `v(S) = Σ w_j + coverage(S) + Σ_{pairs ⊆ S} b_jk`, where the
/// pairwise bonuses touching item `j` sum to at most `(alpha - 1) * w_j`.
/// Every marginal of `j` then lies in `[w_j + c, w_j + c + (alpha - 1) w_j]`
/// for the (non-increasing) coverage marginal `c`, which bounds every ratio
/// by `alpha`. Draws exceeding `value_cap` are rejected, and each accepted
/// table is re-checked with [`is_alpha_near_submodular`].
pub fn random_near_submodular(m: usize, alpha: Rational, value_cap: i64, seed: u64) -> Result<Valuation> {
    if m == 0 || m > MAX_RANDOM_ITEMS {
        return Err(Error::InvalidArgument(format!(
            "random valuations need 1 <= m <= {MAX_RANDOM_ITEMS} (got {m})"
        )));
    }
    if alpha < Rational::from_integer(1) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must be >= 1")));
    }
    if !(1..=MAX_VALUE).contains(&value_cap) {
        return Err(Error::InvalidArgument(format!(
            "value cap {value_cap} must be in 1..={MAX_VALUE}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extra = alpha - Rational::from_integer(1);

    for _ in 0..GENERATION_ATTEMPTS {
        let base_max = (value_cap / (2 * m as i64)).max(1);
        let features = m.max(2);
        let cover_max = value_cap / (4 * features as i64);

        let active: Vec<bool> = (0..m).map(|_| !rng.gen_ratio(1, 8)).collect();
        let base: Vec<i64> = active
            .iter()
            .map(|&on| if on { rng.gen_range(1..=base_max) } else { 0 })
            .collect();

        let weights: Vec<i64> = (0..features).map(|_| rng.gen_range(0..=cover_max)).collect();
        let covers: Vec<u32> = (0..m)
            .map(|j| {
                if !active[j] {
                    return 0;
                }
                (0..features).fold(0u32, |acc, f| if rng.gen_bool(0.5) { acc | 1 << f } else { acc })
            })
            .collect();

        let mut bonus = vec![vec![0i64; m]; m];
        let mut room: Vec<i64> = base
            .iter()
            .map(|&w| (extra * Rational::from_integer(w)).floor().to_integer())
            .collect();
        let mut pairs: Vec<(usize, usize)> = (0..m)
            .flat_map(|j| (j + 1..m).map(move |k| (j, k)))
            .filter(|&(j, k)| active[j] && active[k])
            .collect();
        pairs.shuffle(&mut rng);
        for (j, k) in pairs {
            let cap = room[j].min(room[k]);
            if cap > 0 {
                let b = rng.gen_range(0..=cap);
                bonus[j][k] = b;
                bonus[k][j] = b;
                room[j] -= b;
                room[k] -= b;
            }
        }

        let values: Vec<i64> = (0..1u32 << m)
            .map(|mask| {
                let s = ItemSet::from_bits(mask);
                let additive: i64 = s.iter().map(|j| base[j]).sum();
                let covered = s.iter().fold(0u32, |acc, j| acc | covers[j]);
                let coverage: i64 = (0..features)
                    .filter(|f| covered & (1 << f) != 0)
                    .map(|f| weights[f])
                    .sum();
                let pairwise: i64 = s
                    .iter()
                    .flat_map(|j| s.iter().filter(move |&k| k > j).map(move |k| (j, k)))
                    .map(|(j, k)| bonus[j][k])
                    .sum();
                additive + coverage + pairwise
            })
            .collect();

        if values[values.len() - 1] > value_cap {
            continue;
        }
        let v = Valuation::table(values)?;
        if is_alpha_near_submodular(&v, alpha)? {
            return Ok(v);
        }
    }
    Err(Error::GenerationFailed {
        attempts: GENERATION_ATTEMPTS,
    })
}
