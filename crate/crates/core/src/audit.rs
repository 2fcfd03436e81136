//! Breach auditing: per-tuple linkage under mined knowledge, r-robustness
//! flags, and dataset-level metrics.

use std::collections::{BTreeSet, HashMap};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AGroup, AnonymizedDataset, AttributeSet, Table, Target};
use crate::error::{Error, Result};
use crate::miner::MinedKnowledge;
use crate::scalar::Scalar;
use crate::worlds::{enumerate_worlds, weigh_worlds, DEFAULT_WORLD_CAP};

#[derive(Clone, Debug, PartialEq)]
pub struct AuditConfig {
    /// A tuple is breached when its linkage exceeds `1 / r`.
    pub r: f64,
    pub targets: Vec<Target>,
    pub world_cap: u64,
}

impl AuditConfig {
    pub fn new(r: f64, targets: Vec<Target>) -> Self {
        AuditConfig {
            r,
            targets,
            world_cap: DEFAULT_WORLD_CAP,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.r >= 1.0 && self.r.is_finite()) {
            return Err(Error::InvalidParameter(format!("r must be >= 1, got {}", self.r)));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidParameter("no audit targets".into()));
        }
        Ok(())
    }
}

/// Where a tuple's largest linkage came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkageSource {
    /// `None` when no distribution covered the target and the group's own
    /// target fraction was used.
    pub attribute_set: Option<AttributeSet>,
    pub target: Target,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TupleBreach<T> {
    pub row_id: usize,
    pub gid: u64,
    /// `None` when every candidate computation for the group failed.
    pub max_linkage: Option<T>,
    pub source: Option<LinkageSource>,
    pub breached: bool,
    /// Whether the original sensitive value lies in a target; known only when
    /// the original table is supplied.
    pub sensitive: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BreachMetrics {
    pub flagged: usize,
    pub sensitive_tuples: Option<usize>,
    /// Flagged sensitive tuples over sensitive tuples.
    pub recall: Option<f64>,
    /// Flagged non-sensitive tuples over non-sensitive tuples.
    pub false_flag_rate: Option<f64>,
    /// Mean largest linkage over sensitive tuples.
    pub avg_breach_prob: Option<f64>,
    pub avg_delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BreachReport<T> {
    pub r: f64,
    pub tuples: Vec<TupleBreach<T>>,
    pub metrics: BreachMetrics,
    pub warnings: Vec<String>,
}

impl<T> BreachReport<T> {
    pub fn flagged_rows(&self) -> BTreeSet<usize> {
        self.tuples
            .iter()
            .filter(|t| t.breached)
            .map(|t| t.row_id)
            .collect()
    }
}

/// Checks that `original` holds the same rows as `dataset`, in the same order.
fn check_alignment(original: &Table, dataset: &AnonymizedDataset) -> Result<()> {
    if original.len() != dataset.len() {
        return Err(Error::InvalidParameter(format!(
            "original table has {} rows, anonymized dataset {}",
            original.len(),
            dataset.len()
        )));
    }
    let qi = dataset.schema().qi_attributes();
    let mapping: Vec<usize> = qi
        .iter()
        .map(|a| {
            original
                .schema()
                .qi_index(a)
                .ok_or_else(|| Error::MissingAttribute(a.clone()))
        })
        .collect::<Result<_>>()?;
    for id in 0..original.len() {
        let orig = original.qi_values(id);
        let anon = dataset.qi_row(id);
        if mapping.iter().zip(anon).any(|(&m, v)| orig[m] != *v) {
            return Err(Error::InvalidParameter(format!(
                "row {id} differs between original and anonymized QI values"
            )));
        }
    }
    Ok(())
}

struct GroupOutcome<T> {
    best: Vec<Option<(T, LinkageSource)>>,
    warnings: Vec<String>,
}

fn audit_group<T: Scalar>(
    dataset: &AnonymizedDataset,
    group: &AGroup,
    knowledge: &MinedKnowledge<T>,
    config: &AuditConfig,
) -> GroupOutcome<T> {
    let mut best: Vec<Option<(T, LinkageSource)>> = vec![None; group.len()];
    let mut warnings = Vec::new();
    let offer = |best: &mut Vec<Option<(T, LinkageSource)>>, pos: usize, p: T, src: &LinkageSource| {
        if best[pos].as_ref().is_none_or(|(b, _)| p > *b) {
            best[pos] = Some((p, src.clone()));
        }
    };
    for target in &config.targets {
        let dists: Vec<_> = knowledge
            .distributions()
            .filter(|d| d.target() == target)
            .collect();
        if dists.is_empty() {
            let p = T::from_ratio(group.count_in(target), group.len());
            let src = LinkageSource {
                attribute_set: None,
                target: target.clone(),
            };
            for pos in 0..group.len() {
                offer(&mut best, pos, p, &src);
            }
            continue;
        }
        let worlds = match enumerate_worlds(group, target, config.world_cap) {
            Ok(w) => w,
            Err(e) => {
                warnings.push(e.to_string());
                continue;
            }
        };
        for d in dists {
            let weighted = weigh_worlds(dataset, &worlds, d);
            if weighted.is_degenerate() {
                warnings.push(format!(
                    "group {}: degenerate world weights for target {}; used uniform conditionals",
                    group.gid, target
                ));
            }
            let src = LinkageSource {
                attribute_set: Some(d.attribute_set().clone()),
                target: target.clone(),
            };
            for (pos, p) in weighted.linkages().into_iter().enumerate() {
                offer(&mut best, pos, p, &src);
            }
        }
    }
    GroupOutcome { best, warnings }
}

/// Computes every tuple's largest linkage over the mined distributions and
/// targets, flags linkages strictly above `1 / r`, and derives metrics.
/// Recall-style metrics need the original table.
pub fn audit<T: Scalar>(
    dataset: &AnonymizedDataset,
    knowledge: &MinedKnowledge<T>,
    config: &AuditConfig,
    original: Option<&Table>,
) -> Result<BreachReport<T>> {
    config.validate()?;
    if let Some(t) = original {
        check_alignment(t, dataset)?;
    }
    let threshold = T::one() / T::from_f64_lossy(config.r);
    let outcomes: Vec<GroupOutcome<T>> = dataset
        .groups()
        .par_iter()
        .map(|g| audit_group(dataset, g, knowledge, config))
        .collect();

    let mut tuples: Vec<Option<TupleBreach<T>>> = vec![None; dataset.len()];
    let mut warnings = Vec::new();
    for (group, outcome) in dataset.groups().iter().zip(outcomes) {
        warnings.extend(outcome.warnings);
        for (&row, best) in group.members().iter().zip(outcome.best) {
            let (max_linkage, source) = match best {
                Some((p, s)) => (Some(p), Some(s)),
                None => (None, None),
            };
            let sensitive =
                original.map(|t| config.targets.iter().any(|x| x.contains(t.sensitive_value(row))));
            tuples[row] = Some(TupleBreach {
                row_id: row,
                gid: group.gid,
                breached: max_linkage.is_some_and(|p| p > threshold),
                max_linkage,
                source,
                sensitive,
            });
        }
    }
    let tuples: Vec<TupleBreach<T>> = tuples.into_iter().map(|t| t.expect("partition")).collect();

    let mut metrics = BreachMetrics {
        flagged: tuples.iter().filter(|t| t.breached).count(),
        avg_delta: delta_metric(dataset, knowledge).to_f64_lossy(),
        ..BreachMetrics::default()
    };
    if original.is_some() {
        let sensitive: Vec<&TupleBreach<T>> =
            tuples.iter().filter(|t| t.sensitive == Some(true)).collect();
        let others = tuples.len() - sensitive.len();
        let hit = sensitive.iter().filter(|t| t.breached).count();
        let false_hits = metrics.flagged - hit;
        metrics.sensitive_tuples = Some(sensitive.len());
        metrics.recall = (!sensitive.is_empty()).then(|| hit as f64 / sensitive.len() as f64);
        metrics.false_flag_rate = (others > 0).then(|| false_hits as f64 / others as f64);
        metrics.avg_breach_prob = (!sensitive.is_empty()).then(|| {
            sensitive
                .iter()
                .map(|t| t.max_linkage.map_or(0.0, Scalar::to_f64_lossy))
                .sum::<f64>()
                / sensitive.len() as f64
        });
    }
    Ok(BreachReport {
        r: config.r,
        tuples,
        metrics,
        warnings,
    })
}

/// Mean over distributions of the mean, over groups holding at least one
/// admitted signature, of the spread `max f - min f` among those signatures.
pub fn delta_metric<T: Scalar>(dataset: &AnonymizedDataset, knowledge: &MinedKnowledge<T>) -> T {
    let mut per_dist = Vec::new();
    for d in knowledge.distributions() {
        let mut sum = T::zero();
        let mut n = 0usize;
        for g in dataset.groups() {
            let fs: Vec<T> = g
                .members()
                .iter()
                .filter_map(|&m| d.lookup(dataset.qi_row(m)))
                .map(|i| d.probabilities()[i])
                .collect();
            let Some(&first) = fs.first() else { continue };
            let (lo, hi) = fs.iter().fold((first, first), |(lo, hi), &f| {
                (if f < lo { f } else { lo }, if f > hi { f } else { hi })
            });
            sum = sum + (hi - lo);
            n += 1;
        }
        if n > 0 {
            per_dist.push(sum / T::from_usize(n).unwrap());
        }
    }
    if per_dist.is_empty() {
        return T::zero();
    }
    let n = T::from_usize(per_dist.len()).unwrap();
    per_dist.into_iter().fold(T::zero(), |a, b| a + b) / n
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    /// Number of QI attributes each query constrains.
    pub qd: usize,
    /// Expected fraction of rows matched by the QI predicates.
    pub selectivity: f64,
    pub count: usize,
    pub seed: u64,
}

impl QuerySpec {
    fn validate(&self, qi: usize) -> Result<()> {
        if self.qd == 0 || self.qd > qi {
            return Err(Error::InvalidParameter(format!(
                "query dimensionality must lie in 1..={qi}, got {}",
                self.qd
            )));
        }
        if !(self.selectivity > 0.0 && self.selectivity <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "selectivity must lie in (0, 1], got {}",
                self.selectivity
            )));
        }
        if self.count == 0 {
            return Err(Error::InvalidParameter("query count must be positive".into()));
        }
        Ok(())
    }
}

struct Query {
    /// (QI attribute index, accepted value ids)
    predicates: Vec<(usize, Vec<bool>)>,
}

impl Query {
    fn matches(&self, row: &[u32]) -> bool {
        self.predicates
            .iter()
            .all(|(a, ok)| ok.get(row[*a] as usize).copied().unwrap_or(false))
    }
}

/// Mean relative error of random COUNT queries answered from the bucketized
/// data, where each query constrains `qd` QI attributes and the sensitive
/// attribute to the schema target. A group contributes its matching members
/// times its target fraction.
pub fn query_error(original: &Table, dataset: &AnonymizedDataset, spec: &QuerySpec) -> Result<f64> {
    check_alignment(original, dataset)?;
    let qi = dataset.schema().qi_attributes();
    spec.validate(qi.len())?;
    let target = dataset.schema().target();

    // dictionary-encode QI values per attribute, domains sorted
    let domains: Vec<Vec<&str>> = (0..qi.len())
        .map(|a| {
            let set: BTreeSet<&str> = dataset.qi_rows().iter().map(|r| r[a].as_str()).collect();
            set.into_iter().collect()
        })
        .collect();
    let lookup: Vec<HashMap<&str, u32>> = domains
        .iter()
        .map(|d| d.iter().enumerate().map(|(i, v)| (*v, i as u32)).collect())
        .collect();
    let encoded: Vec<Vec<u32>> = dataset
        .qi_rows()
        .iter()
        .map(|r| r.iter().enumerate().map(|(a, v)| lookup[a][v.as_str()]).collect())
        .collect();
    let truth: Vec<bool> = (0..original.len())
        .map(|i| target.contains(original.sensitive_value(i)))
        .collect();
    let fractions: Vec<f64> = dataset
        .groups()
        .iter()
        .map(|g| g.count_in(target) as f64 / g.len() as f64)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per_attr = spec.selectivity.powf(1.0 / spec.qd as f64);
    let queries: Vec<Query> = (0..spec.count)
        .map(|_| {
            let mut attrs = index::sample(&mut rng, qi.len(), spec.qd).into_vec();
            attrs.sort_unstable();
            let predicates = attrs
                .into_iter()
                .map(|a| {
                    let d = domains[a].len();
                    let k = ((per_attr * d as f64).round() as usize).clamp(1, d);
                    let mut ids: Vec<usize> = (0..d).collect();
                    ids.shuffle(&mut rng);
                    let mut ok = vec![false; d];
                    for &i in &ids[..k] {
                        ok[i] = true;
                    }
                    // keep the generator stream independent of domain size quirks
                    let _: u8 = rng.gen();
                    (a, ok)
                })
                .collect();
            Query { predicates }
        })
        .collect();

    let errors: Vec<f64> = queries
        .par_iter()
        .map(|q| {
            let mut actual = 0usize;
            let mut estimate = 0.0;
            for (gi, g) in dataset.groups().iter().enumerate() {
                let mut matching = 0usize;
                for &m in g.members() {
                    if q.matches(&encoded[m]) {
                        matching += 1;
                        if truth[m] {
                            actual += 1;
                        }
                    }
                }
                estimate += matching as f64 * fractions[gi];
            }
            (estimate - actual as f64).abs() / (actual.max(1) as f64)
        })
        .collect();
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}
