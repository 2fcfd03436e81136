//! Independent oracles and random instance generators shared by the
//! integration tests. Nothing here calls into the world or lattice code it
//! checks.

#![allow(dead_code)]

use std::collections::BTreeMap;

use fgaudit::{
    read_anonymized, read_table, AnonymizedDataset, AttributeSet, DatasetConfig, GlobalDistribution,
    Signature, Table, Target,
};
use num_rational::Ratio;
use rand::Rng;

pub const QI: [&str; 2] = ["A", "B"];
pub const A_VALUES: [&str; 3] = ["a0", "a1", "a2"];
pub const B_VALUES: [&str; 2] = ["b0", "b1"];

pub fn config() -> DatasetConfig {
    DatasetConfig::new(&QI, "S", &["x"])
}

/// Linkage of every member by walking all `2^N` assignments and keeping those
/// with exactly `n_x` targets.
pub fn brute_linkage(factors: &[f64], n_x: usize) -> Vec<f64> {
    let n = factors.len();
    let mut total = 0.0;
    let mut acc = vec![0.0; n];
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n_x {
            continue;
        }
        let w: f64 = (0..n)
            .map(|j| if mask >> j & 1 == 1 { factors[j] } else { 1.0 - factors[j] })
            .product();
        total += w;
        for (j, a) in acc.iter_mut().enumerate() {
            if mask >> j & 1 == 1 {
                *a += w;
            }
        }
    }
    acc.iter().map(|a| a / total).collect()
}

pub fn brute_linkage_exact(factors: &[Ratio<i128>], n_x: usize) -> Vec<Ratio<i128>> {
    let n = factors.len();
    let one = Ratio::from_integer(1);
    let zero = Ratio::from_integer(0);
    let mut total = zero;
    let mut acc = vec![zero; n];
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n_x {
            continue;
        }
        let w = (0..n).fold(one, |p, j| {
            p * if mask >> j & 1 == 1 { factors[j] } else { one - factors[j] }
        });
        total += w;
        for (j, a) in acc.iter_mut().enumerate() {
            if mask >> j & 1 == 1 {
                *a += w;
            }
        }
    }
    acc.into_iter().map(|a| a / total).collect()
}

/// Every signature over every attribute subset of size `1..=max` whose
/// support is at least `j`, counted by a direct scan.
pub fn exhaustive_lattice(
    ds: &AnonymizedDataset,
    j: usize,
    max: usize,
) -> BTreeMap<Vec<usize>, BTreeMap<Vec<String>, usize>> {
    let q = ds.schema().qi_attributes().len();
    let mut out = BTreeMap::new();
    for mask in 1u32..(1 << q) {
        let attrs: Vec<usize> = (0..q).filter(|i| mask >> i & 1 == 1).collect();
        if attrs.len() > max {
            continue;
        }
        let mut counts: BTreeMap<Vec<String>, usize> = BTreeMap::new();
        for row in ds.qi_rows() {
            let key = attrs.iter().map(|&a| row[a].clone()).collect();
            *counts.entry(key).or_default() += 1;
        }
        counts.retain(|_, n| *n >= j);
        if !counts.is_empty() {
            out.insert(attrs, counts);
        }
    }
    out
}

/// Residual of the mining equations evaluated with brute-force linkage:
/// `f_i - sum over s_i-tuples of p(t:x) / |s_i-tuples|`.
pub fn naive_residual(ds: &AnonymizedDataset, g: &GlobalDistribution<f64>) -> Vec<f64> {
    let target = g.target();
    let mut linkage = vec![0.0; ds.len()];
    for group in ds.groups() {
        let factors: Vec<f64> = group.members().iter().map(|&m| g.factor(ds.qi_row(m))).collect();
        let p = brute_linkage(&factors, group.count_in(target));
        for (&m, v) in group.members().iter().zip(p) {
            linkage[m] = v;
        }
    }
    g.entries()
        .map(|(sig, f, _)| {
            let rows: Vec<usize> = (0..ds.len()).filter(|&r| sig.matches(ds.qi_row(r))).collect();
            f - rows.iter().map(|&r| linkage[r]).sum::<f64>() / rows.len() as f64
        })
        .collect()
}

/// A random bucketized dataset: groups of size `1..=max_group`, QI values
/// from small domains, `n_x` drawn per group. At least one target value is
/// present.
pub fn random_dataset<R: Rng>(rng: &mut R, groups: usize, max_group: usize) -> AnonymizedDataset {
    let mut qi = String::from("A,B,GID\n");
    let mut sens = String::from("GID,S\n");
    let mut any_x = false;
    for gid in 1..=groups {
        let n = rng.gen_range(1..=max_group);
        let mut n_x = rng.gen_range(0..=n);
        if gid == groups && !any_x && n_x == 0 {
            n_x = 1;
        }
        any_x |= n_x > 0;
        for k in 0..n {
            let a = A_VALUES[rng.gen_range(0..A_VALUES.len())];
            let b = B_VALUES[rng.gen_range(0..B_VALUES.len())];
            qi.push_str(&format!("{a},{b},{gid}\n"));
            let v = if k < n_x { "x".to_string() } else { format!("v{k}") };
            sens.push_str(&format!("{gid},{v}\n"));
        }
    }
    read_anonymized(qi.as_bytes(), sens.as_bytes(), &config()).expect("generated dataset is valid")
}

/// A random distribution over the signatures of `attrs` observed in `ds`,
/// with probabilities in `[lo, hi]`.
pub fn random_distribution<R: Rng>(
    rng: &mut R,
    ds: &AnonymizedDataset,
    attrs: &[usize],
    lo: f64,
    hi: f64,
) -> GlobalDistribution<f64> {
    let set = AttributeSet::new(attrs.to_vec()).unwrap();
    let mut seen: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for row in ds.qi_rows() {
        *seen
            .entry(attrs.iter().map(|&a| row[a].clone()).collect())
            .or_default() += 1;
    }
    let entries = seen
        .into_iter()
        .map(|(values, n)| (Signature::new(set.clone(), values).unwrap(), rng.gen_range(lo..=hi), n))
        .collect();
    GlobalDistribution::new(set, Target::single("x"), entries, rng.gen_range(lo..=hi)).unwrap()
}

/// The same distribution for the complement target with `1 - f`.
pub fn complement(g: &GlobalDistribution<f64>, ds: &AnonymizedDataset) -> GlobalDistribution<f64> {
    let mut others: Vec<String> = ds
        .groups()
        .iter()
        .flat_map(|gr| gr.sensitive().iter().cloned())
        .filter(|v| v != "x")
        .collect();
    others.sort();
    others.dedup();
    let entries = g
        .entries()
        .map(|(s, f, n)| (s.clone(), 1.0 - f, n))
        .collect();
    GlobalDistribution::new(
        g.attribute_set().clone(),
        Target::new(others).unwrap(),
        entries,
        1.0 - g.fallback(),
    )
    .unwrap()
}

/// Raw table over `A,B,S` where each `(a, b)` cell has its own target rate.
/// Non-target rows take one of `others` values uniformly.
pub fn synthetic_table<R: Rng>(rng: &mut R, rows: usize, rates: &[(&str, &str, f64)], others: usize) -> Table {
    let mut csv = String::from("A,B,S\n");
    for i in 0..rows {
        let (a, b, rate) = rates[i % rates.len()];
        let s = if rng.gen_bool(rate) {
            "x".to_string()
        } else {
            format!("y{}", rng.gen_range(0..others))
        };
        csv.push_str(&format!("{a},{b},{s}\n"));
    }
    read_table(csv.as_bytes(), &config()).expect("synthetic table is valid")
}

/// Fraction of target rows among rows matching `sig` in the raw table.
pub fn true_frequency(table: &Table, sig: &Signature) -> f64 {
    let rows: Vec<usize> = (0..table.len())
        .filter(|&r| sig.matches(&table.qi_values(r)))
        .collect();
    rows.iter().filter(|&&r| table.sensitive_value(r) == "x").count() as f64 / rows.len() as f64
}
