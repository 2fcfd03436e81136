//! l-diverse bucketization of raw tables.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnonymizedDataset, Table};
use crate::error::{Error, Result};

const PARTITION_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Groups of `l` or `l + 1` tuples with pairwise distinct sensitive values,
    /// drawn from the `l` largest remaining value buckets.
    Anatomy,
    /// Shuffled rows greedily packed into groups of distinct sensitive values.
    RandomPartition,
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anatomy" => Ok(Strategy::Anatomy),
            "random" | "random_partition" | "random-partition" => Ok(Strategy::RandomPartition),
            other => Err(Error::InvalidParameter(format!("unknown strategy `{other}`"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Anatomy => "anatomy",
            Strategy::RandomPartition => "random_partition",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonymizerConfig {
    pub l: usize,
    pub strategy: Strategy,
    pub seed: u64,
}

impl AnonymizerConfig {
    pub fn new(l: usize, strategy: Strategy, seed: u64) -> Self {
        AnonymizerConfig { l, strategy, seed }
    }
}

/// Rows grouped by sensitive value, buckets in first-seen order.
fn buckets(table: &Table) -> Vec<(String, Vec<usize>)> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    for id in 0..table.len() {
        let v = table.sensitive_value(id);
        let i = *index.entry(v).or_insert_with(|| {
            out.push((v.to_string(), Vec::new()));
            out.len() - 1
        });
        out[i].1.push(id);
    }
    out
}

fn check_eligible(table: &Table, buckets: &[(String, Vec<usize>)], l: usize) -> Result<()> {
    if l < 2 {
        return Err(Error::InvalidParameter(format!("l must be at least 2, got {l}")));
    }
    if buckets.len() < l {
        return Err(Error::TooFewSensitiveValues {
            l,
            distinct: buckets.len(),
        });
    }
    let n = table.len();
    if let Some((value, rows)) = buckets.iter().max_by_key(|(_, r)| r.len()) {
        if rows.len() * l > n {
            return Err(Error::NotLEligible {
                l,
                value: value.clone(),
                count: rows.len(),
                rows: n,
            });
        }
    }
    Ok(())
}

pub fn anonymize(table: &Table, config: &AnonymizerConfig) -> Result<AnonymizedDataset> {
    let mut buckets = buckets(table);
    check_eligible(table, &buckets, config.l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let partition = match config.strategy {
        Strategy::Anatomy => anatomy(table, &mut buckets, config.l, &mut rng)?,
        Strategy::RandomPartition => random_partition(table, config.l, &mut rng)?,
    };
    AnonymizedDataset::from_partition(table, partition)
}

fn anatomy(
    table: &Table,
    buckets: &mut [(String, Vec<usize>)],
    l: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    for (_, rows) in buckets.iter_mut() {
        rows.shuffle(rng);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    loop {
        let mut live: Vec<usize> = (0..buckets.len())
            .filter(|&b| !buckets[b].1.is_empty())
            .collect();
        if live.len() < l {
            break;
        }
        live.sort_by(|&a, &b| buckets[b].1.len().cmp(&buckets[a].1.len()).then(a.cmp(&b)));
        groups.push(live[..l].iter().map(|&b| buckets[b].1.pop().unwrap()).collect());
    }
    let residue: Vec<usize> = buckets.iter_mut().flat_map(|(_, r)| r.drain(..)).collect();
    for row in residue {
        let v = table.sensitive_value(row);
        let home = groups
            .iter_mut()
            .find(|g| g.len() == l && g.iter().all(|&m| table.sensitive_value(m) != v))
            .ok_or_else(|| Error::NotLEligible {
                l,
                value: v.to_string(),
                count: (0..table.len()).filter(|&i| table.sensitive_value(i) == v).count(),
                rows: table.len(),
            })?;
        home.push(row);
    }
    Ok(groups)
}

fn random_partition(table: &Table, l: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let lacks = |g: &[usize], row: usize| {
        let v = table.sensitive_value(row);
        g.iter().all(|&m| table.sensitive_value(m) != v)
    };
    'attempt: for _ in 0..PARTITION_ATTEMPTS {
        let mut order: Vec<usize> = (0..table.len()).collect();
        order.shuffle(rng);
        let mut open: Vec<Vec<usize>> = Vec::new();
        let mut closed: Vec<Vec<usize>> = Vec::new();
        for row in order {
            match open.iter().position(|g| lacks(g, row)) {
                Some(i) => {
                    open[i].push(row);
                    if open[i].len() == l {
                        closed.push(open.remove(i));
                    }
                }
                None => open.push(vec![row]),
            }
        }
        for row in open.into_iter().flatten() {
            match closed.iter_mut().find(|g| g.len() == l && lacks(g, row)) {
                Some(g) => g.push(row),
                None => continue 'attempt,
            }
        }
        return Ok(closed);
    }
    Err(Error::PartitionFailed(PARTITION_ATTEMPTS))
}

/// True iff no sensitive value exceeds `1/l` of any group.
pub fn check_l_diversity(dataset: &AnonymizedDataset, l: usize) -> bool {
    dataset
        .groups()
        .iter()
        .all(|g| g.max_multiplicity() * l <= g.len())
}
