//! Possible worlds of a single A-group.
//!
//! Under the binary view of one target value set, an A-group of `N` tuples
//! holding `n` target values has `C(N, n)` possible worlds: one per choice of
//! which members carry the target. A world's weight is the product over
//! members of `f` (member assigned the target) or `1 - f` (otherwise), where
//! `f` is the probability the member's signature links to the target. Weights
//! are renormalized within the group, and a member's linkage probability is
//! the total conditional weight of the worlds assigning it the target.

use std::collections::HashMap;
use std::sync::Arc;

use crate::dataset::{group_signature_members, AGroup, AnonymizedDataset, AttributeSet, Signature, Target};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default cap on worlds per group.
pub const DEFAULT_WORLD_CAP: u64 = 2_000_000;

/// Groups larger than this are weighted in log space (float scalars only).
pub const LOG_SPACE_THRESHOLD: usize = 30;

/// `C(n, k)`, or `None` once it exceeds `limit`.
pub fn binomial_capped(n: usize, k: usize, limit: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
        if acc > limit {
            return None;
        }
    }
    Some(acc)
}

/// All `k`-subsets of `0..n` in lexicographic order, stored flat.
#[derive(Debug, PartialEq, Eq)]
pub struct Combinations {
    n: usize,
    k: usize,
    flat: Vec<u32>,
    count: usize,
}

impl Combinations {
    pub fn enumerate(n: usize, k: usize, cap: u64) -> Option<Combinations> {
        let count = binomial_capped(n, k, cap as u128)? as usize;
        let mut flat = Vec::with_capacity(count * k);
        if k > n {
            return Some(Combinations { n, k, flat, count: 0 });
        }
        let mut idx: Vec<u32> = (0..k as u32).collect();
        loop {
            flat.extend_from_slice(&idx);
            // rightmost position that can still advance
            let mut i = k;
            loop {
                if i == 0 {
                    debug_assert_eq!(flat.len(), count * k);
                    return Some(Combinations { n, k, flat, count });
                }
                i -= 1;
                if (idx[i] as usize) < n - k + i {
                    break;
                }
            }
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn get(&self, i: usize) -> &[u32] {
        &self.flat[i * self.k..(i + 1) * self.k]
    }
}

/// Caches combination tables by `(N, n)`; they do not depend on `f`.
#[derive(Debug, Default)]
pub struct WorldCache {
    tables: HashMap<(usize, usize), Arc<Combinations>>,
}

impl WorldCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, gid: u64, n: usize, k: usize, cap: u64) -> Result<Arc<Combinations>> {
        if let Some(c) = self.tables.get(&(n, k)) {
            return Ok(Arc::clone(c));
        }
        let table = Arc::new(Combinations::enumerate(n, k, cap).ok_or(Error::WorldExplosion {
            gid,
            count: binomial_capped(n, k, u128::MAX).unwrap_or(u128::MAX),
            cap,
        })?);
        self.tables.insert((n, k), Arc::clone(&table));
        Ok(table)
    }
}

/// The possible worlds of one A-group. World `i` assigns the target to the
/// members at positions `world(i)`.
#[derive(Clone, Debug)]
pub struct WorldSet {
    gid: u64,
    members: Vec<usize>,
    n_x: usize,
    table: Arc<Combinations>,
}

impl WorldSet {
    pub fn gid(&self) -> u64 {
        self.gid
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn group_size(&self) -> usize {
        self.members.len()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn world(&self, i: usize) -> &[u32] {
        self.table.get(i)
    }

    /// The world as a bit vector over members (`true` = target).
    pub fn world_bits(&self, i: usize) -> Vec<bool> {
        let mut bits = vec![false; self.members.len()];
        for &p in self.world(i) {
            bits[p as usize] = true;
        }
        bits
    }

    pub fn position_of(&self, row_id: usize) -> Option<usize> {
        self.members.iter().position(|&m| m == row_id)
    }

    /// Weighs every world given per-member target probabilities
    /// (`factors[j]` belongs to the member at position `j`).
    pub fn weigh<T: Scalar>(&self, factors: &[T]) -> WeightedWorlds<'_, T> {
        assert_eq!(factors.len(), self.members.len(), "one factor per member");
        if !T::EXACT && self.members.len() > LOG_SPACE_THRESHOLD {
            self.weigh_log(factors)
        } else {
            self.weigh_linear(factors)
        }
    }

    fn weigh_linear<T: Scalar>(&self, factors: &[T]) -> WeightedWorlds<'_, T> {
        let n = self.members.len();
        let mut weights = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let world = self.world(i);
            let mut next = world.iter().peekable();
            let mut w = T::one();
            for (j, &f) in factors.iter().enumerate().take(n) {
                if next.peek().is_some_and(|&&p| p as usize == j) {
                    next.next();
                    w = w * f;
                } else {
                    w = w * (T::one() - f);
                }
            }
            weights.push(w);
        }
        let total = weights.iter().fold(T::zero(), |a, &w| a + w);
        let (conditionals, degenerate) = if total > T::zero() {
            (weights.iter().map(|&w| w / total).collect(), false)
        } else {
            (self.uniform(), true)
        };
        WeightedWorlds {
            worlds: self,
            weights,
            conditionals,
            total,
            degenerate,
        }
    }

    fn weigh_log<T: Scalar>(&self, factors: &[T]) -> WeightedWorlds<'_, T> {
        let ln_x: Vec<f64> = factors.iter().map(|f| f.to_f64_lossy().ln()).collect();
        let ln_not: Vec<f64> = factors
            .iter()
            .map(|f| (1.0 - f.to_f64_lossy()).ln())
            .collect();
        let all_not: f64 = ln_not.iter().sum();
        let logs: Vec<f64> = (0..self.len())
            .map(|i| {
                if all_not.is_finite() {
                    self.world(i)
                        .iter()
                        .map(|&p| ln_x[p as usize] - ln_not[p as usize])
                        .sum::<f64>()
                        + all_not
                } else {
                    let mut bits = self.world_bits(i).into_iter();
                    (0..factors.len())
                        .map(|j| {
                            if bits.next().unwrap() {
                                ln_x[j]
                            } else {
                                ln_not[j]
                            }
                        })
                        .sum()
                }
            })
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<T> = logs.iter().map(|&l| T::from_f64_lossy(l.exp())).collect();
        let total = weights.iter().fold(T::zero(), |a, &w| a + w);
        if max == f64::NEG_INFINITY || max.is_nan() {
            return WeightedWorlds {
                worlds: self,
                weights,
                conditionals: self.uniform(),
                total,
                degenerate: true,
            };
        }
        let shifted: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = shifted.iter().sum();
        WeightedWorlds {
            worlds: self,
            weights,
            conditionals: shifted.iter().map(|&s| T::from_f64_lossy(s / sum)).collect(),
            total,
            degenerate: false,
        }
    }

    fn uniform<T: Scalar>(&self) -> Vec<T> {
        let u = T::from_ratio(1, self.len().max(1));
        vec![u; self.len()]
    }
}

/// A world set with weights `p(w)` and conditionals `p(w | group)`.
#[derive(Clone, Debug)]
pub struct WeightedWorlds<'a, T> {
    worlds: &'a WorldSet,
    weights: Vec<T>,
    conditionals: Vec<T>,
    total: T,
    degenerate: bool,
}

impl<'a, T: Scalar> WeightedWorlds<'a, T> {
    pub fn worlds(&self) -> &'a WorldSet {
        self.worlds
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn conditionals(&self) -> &[T] {
        &self.conditionals
    }

    /// Sum of `p(w)` over all worlds.
    pub fn total_weight(&self) -> T {
        self.total
    }

    /// Every world had zero weight; conditionals fell back to uniform.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Linkage probability of the member at `position`.
    pub fn linkage_at(&self, position: usize) -> T {
        (0..self.worlds.len())
            .filter(|&i| self.worlds.world(i).contains(&(position as u32)))
            .fold(T::zero(), |a, i| a + self.conditionals[i])
    }

    /// Linkage probabilities of all members, by position.
    pub fn linkages(&self) -> Vec<T> {
        let mut acc = vec![T::zero(); self.worlds.group_size()];
        for (i, &c) in self.conditionals.iter().enumerate() {
            for &p in self.worlds.world(i) {
                acc[p as usize] = acc[p as usize] + c;
            }
        }
        acc
    }
}

/// Probability of each admitted signature over one attribute set linking to a
/// target. Tuples matching no admitted signature use `fallback`.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalDistribution<T> {
    attribute_set: AttributeSet,
    target: Target,
    signatures: Vec<Signature>,
    probabilities: Vec<T>,
    supports: Vec<usize>,
    fallback: T,
    index: HashMap<Vec<String>, usize>,
}

impl<T: Scalar> GlobalDistribution<T> {
    /// `entries` are `(signature, f, support)`; every signature must be over
    /// `attribute_set` and every `f` in `[0, 1]`.
    pub fn new(
        attribute_set: AttributeSet,
        target: Target,
        entries: Vec<(Signature, T, usize)>,
        fallback: T,
    ) -> Result<Self> {
        let in_unit = |v: T| v >= T::zero() && v <= T::one();
        if !in_unit(fallback) {
            return Err(Error::InvalidParameter(format!(
                "fallback probability {fallback:?} outside [0, 1]"
            )));
        }
        let mut index = HashMap::with_capacity(entries.len());
        let mut signatures = Vec::with_capacity(entries.len());
        let mut probabilities = Vec::with_capacity(entries.len());
        let mut supports = Vec::with_capacity(entries.len());
        for (sig, f, support) in entries {
            if sig.attributes() != &attribute_set {
                return Err(Error::InvalidParameter(
                    "signature not over the distribution's attribute set".into(),
                ));
            }
            if !in_unit(f) {
                return Err(Error::InvalidParameter(format!(
                    "probability {f:?} outside [0, 1]"
                )));
            }
            if index.insert(sig.values().to_vec(), signatures.len()).is_some() {
                return Err(Error::InvalidParameter("duplicate signature".into()));
            }
            signatures.push(sig);
            probabilities.push(f);
            supports.push(support);
        }
        Ok(GlobalDistribution {
            attribute_set,
            target,
            signatures,
            probabilities,
            supports,
            fallback,
            index,
        })
    }

    pub fn attribute_set(&self) -> &AttributeSet {
        &self.attribute_set
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn fallback(&self) -> T {
        self.fallback
    }

    pub fn signatures(&self) -> &[Signature] {
        &self.signatures
    }

    pub fn probabilities(&self) -> &[T] {
        &self.probabilities
    }

    pub fn supports(&self) -> &[usize] {
        &self.supports
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Signature, T, usize)> {
        self.signatures
            .iter()
            .zip(&self.probabilities)
            .zip(&self.supports)
            .map(|((s, &f), &n)| (s, f, n))
    }

    pub fn probability(&self, signature: &Signature) -> Option<T> {
        if signature.attributes() != &self.attribute_set {
            return None;
        }
        self.index
            .get(signature.values())
            .map(|&i| self.probabilities[i])
    }

    /// Index of the admitted signature a QI row matches, if any.
    pub fn lookup(&self, qi_row: &[String]) -> Option<usize> {
        let key: Vec<String> = self
            .attribute_set
            .indices()
            .iter()
            .map(|&i| qi_row[i].clone())
            .collect();
        self.index.get(&key).copied()
    }

    /// Probability that a tuple with this QI row links to the target.
    pub fn factor(&self, qi_row: &[String]) -> T {
        self.lookup(qi_row)
            .map_or(self.fallback, |i| self.probabilities[i])
    }
}

/// Enumerates the worlds of `group` for `target`. Fails when `C(N, n)`
/// exceeds `cap`.
pub fn enumerate_worlds(group: &AGroup, target: &Target, cap: u64) -> Result<WorldSet> {
    if cap == 0 {
        return Err(Error::InvalidParameter("world cap must be at least 1".into()));
    }
    let n_x = group.count_in(target);
    let table = WorldCache::new().get(group.gid, group.len(), n_x, cap)?;
    Ok(world_set(group, n_x, table))
}

pub(crate) fn world_set(group: &AGroup, n_x: usize, table: Arc<Combinations>) -> WorldSet {
    WorldSet {
        gid: group.gid,
        members: group.members().to_vec(),
        n_x,
        table,
    }
}

/// Per-member factors for a group under `g`.
pub fn member_factors<T: Scalar>(
    dataset: &AnonymizedDataset,
    worlds: &WorldSet,
    g: &GlobalDistribution<T>,
) -> Vec<T> {
    worlds
        .members()
        .iter()
        .map(|&m| g.factor(dataset.qi_row(m)))
        .collect()
}

/// Weighs the worlds of a group under `g`.
pub fn weigh_worlds<'a, T: Scalar>(
    dataset: &AnonymizedDataset,
    worlds: &'a WorldSet,
    g: &GlobalDistribution<T>,
) -> WeightedWorlds<'a, T> {
    let factors = member_factors(dataset, worlds, g);
    let weighted = worlds.weigh(&factors);
    if weighted.is_degenerate() {
        log::warn!(
            "group {}: every possible world has zero weight; using uniform conditionals",
            worlds.gid()
        );
    }
    weighted
}

/// Linkage probability of `row_id`, or `None` if it is not in the group.
pub fn tuple_linkage<T: Scalar>(worlds: &WeightedWorlds<'_, T>, row_id: usize) -> Option<T> {
    worlds
        .worlds()
        .position_of(row_id)
        .map(|p| worlds.linkage_at(p))
}

/// Expected number of tuples in `group` matching `signature` that link to the
/// distribution's target. Checks that all matching tuples share one linkage.
pub fn expected_count<T: Scalar>(
    dataset: &AnonymizedDataset,
    group: &AGroup,
    signature: &Signature,
    g: &GlobalDistribution<T>,
    cap: u64,
) -> Result<T> {
    let matching = group_signature_members(dataset, group, signature);
    if matching.is_empty() {
        return Err(Error::NoMatchingTuple { gid: group.gid });
    }
    let worlds = enumerate_worlds(group, g.target(), cap)?;
    let weighted = weigh_worlds(dataset, &worlds, g);
    let linkages = weighted.linkages();
    let first = linkages[worlds.position_of(matching[0]).unwrap()];
    for &m in &matching[1..] {
        if !linkages[worlds.position_of(m).unwrap()].approx_eq(first) {
            return Err(Error::AsymmetricLinkage { gid: group.gid });
        }
    }
    let count = T::from_usize(matching.len()).expect("count fits in scalar");
    Ok(count * first)
}
