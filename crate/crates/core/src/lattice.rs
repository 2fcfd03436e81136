//! Candidate attribute sets and the signatures with enough support to yield a
//! reliable distribution.
//!
//! Support is anti-monotone: a signature never has more matching rows than any
//! of its sub-signatures. The walk is breadth-first over attribute-set size and
//! only counts a signature when every one-smaller sub-signature was admitted.

use std::collections::{HashMap, HashSet};

use itertools::Itertools;
use rayon::prelude::*;

use crate::dataset::{AnonymizedDataset, AttributeSet, Signature};
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_SIGMA: f64 = 0.9;
pub const DEFAULT_MAX_SET_SIZE: usize = 3;

/// Smallest sample size `|S| >= ln(2 / sigma) / (2 epsilon^2)` for which the
/// observed fraction is within `epsilon` of the true one with probability at
/// least `1 - sigma`.
pub fn required_sample_size(epsilon: f64, sigma: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must lie in (0, 1], got {sigma}"
        )));
    }
    let bound = (2.0 / sigma).ln() / (2.0 * epsilon * epsilon);
    Ok(bound.ceil() as usize)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleGate {
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
    pub min_support: usize,
}

impl SampleGate {
    pub fn new(epsilon: f64, sigma: f64) -> Result<Self> {
        Ok(SampleGate {
            epsilon: Some(epsilon),
            sigma: Some(sigma),
            min_support: required_sample_size(epsilon, sigma)?,
        })
    }

    /// A gate with an explicit support threshold instead of `(epsilon, sigma)`.
    pub fn with_min_support(min_support: usize) -> Self {
        SampleGate {
            epsilon: None,
            sigma: None,
            min_support: min_support.max(1),
        }
    }
}

impl Default for SampleGate {
    fn default() -> Self {
        SampleGate::new(DEFAULT_EPSILON, DEFAULT_SIGMA).expect("default gate is valid")
    }
}

/// Admitted signatures of one attribute set with their supports, in
/// first-seen row order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmittedSet {
    pub attributes: AttributeSet,
    pub signatures: Vec<(Signature, usize)>,
}

impl AdmittedSet {
    pub fn support_of(&self, signature: &Signature) -> Option<usize> {
        self.signatures
            .iter()
            .find(|(s, _)| s == signature)
            .map(|&(_, n)| n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmittedSignatures {
    pub min_support: usize,
    /// Attribute sets with at least one admitted signature, by size then
    /// lexicographically.
    pub sets: Vec<AdmittedSet>,
    /// Attribute sets considered and left with no admitted signature.
    pub pruned: Vec<AttributeSet>,
}

impl AdmittedSignatures {
    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn get(&self, attributes: &AttributeSet) -> Option<&AdmittedSet> {
        self.sets.iter().find(|s| &s.attributes == attributes)
    }
}

/// Signature values with their support, in first-seen order.
type Counts = Vec<(Vec<String>, usize)>;

/// Counts signatures over `attrs`, skipping rows rejected by `keep`.
fn count_signatures<F>(dataset: &AnonymizedDataset, attrs: &[usize], keep: F) -> Counts
where
    F: Fn(&[String]) -> bool,
{
    let mut order: Vec<(Vec<String>, usize)> = Vec::new();
    let mut index: HashMap<Vec<String>, usize> = HashMap::new();
    for row in dataset.qi_rows() {
        if !keep(row) {
            continue;
        }
        let key: Vec<String> = attrs.iter().map(|&i| row[i].clone()).collect();
        match index.get(&key) {
            Some(&i) => order[i].1 += 1,
            None => {
                index.insert(key.clone(), order.len());
                order.push((key, 1));
            }
        }
    }
    order
}

pub fn enumerate_admitted(
    dataset: &AnonymizedDataset,
    gate: &SampleGate,
    max_set_size: usize,
) -> Result<AdmittedSignatures> {
    if max_set_size == 0 {
        return Err(Error::InvalidParameter("max_set_size must be at least 1".into()));
    }
    let q = dataset.schema().qi_attributes().len();
    let j = gate.min_support;
    let mut admitted: HashMap<Vec<usize>, HashSet<Vec<String>>> = HashMap::new();
    let mut out = AdmittedSignatures {
        min_support: j,
        sets: Vec::new(),
        pruned: Vec::new(),
    };

    for size in 1..=max_set_size.min(q) {
        let candidates: Vec<Vec<usize>> = (0..q).combinations(size).collect();
        let level: Vec<(Vec<usize>, Option<Counts>)> = candidates
            .into_par_iter()
            .map(|attrs| {
                if size == 1 {
                    let counts = count_signatures(dataset, &attrs, |_| true);
                    return (attrs, Some(counts));
                }
                // (sub-attribute set, position dropped) for every immediate subset
                let parents: Vec<(&HashSet<Vec<String>>, usize)> = (0..size)
                    .filter_map(|drop| {
                        let sub: Vec<usize> = attrs
                            .iter()
                            .enumerate()
                            .filter(|&(k, _)| k != drop)
                            .map(|(_, &a)| a)
                            .collect();
                        admitted.get(&sub).map(|s| (s, drop))
                    })
                    .collect();
                if parents.len() < size {
                    return (attrs, None);
                }
                let counts = count_signatures(dataset, &attrs, |row| {
                    parents.iter().all(|(set, drop)| {
                        let key: Vec<String> = attrs
                            .iter()
                            .enumerate()
                            .filter(|&(k, _)| k != *drop)
                            .map(|(_, &a)| row[a].clone())
                            .collect();
                        set.contains(&key)
                    })
                });
                (attrs, Some(counts))
            })
            .collect();

        for (attrs, counts) in level {
            let set = AttributeSet::new(attrs.clone())?;
            let kept: Vec<(Vec<String>, usize)> = counts
                .unwrap_or_default()
                .into_iter()
                .filter(|&(_, n)| n >= j)
                .collect();
            if kept.is_empty() {
                out.pruned.push(set);
                continue;
            }
            admitted.insert(attrs, kept.iter().map(|(v, _)| v.clone()).collect());
            let signatures = kept
                .into_iter()
                .map(|(values, n)| Ok((Signature::new(set.clone(), values)?, n)))
                .collect::<Result<Vec<_>>>()?;
            out.sets.push(AdmittedSet {
                attributes: set,
                signatures,
            });
        }
    }
    Ok(out)
}
