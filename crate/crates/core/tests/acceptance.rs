//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use fgaudit::{
    anonymize, audit, enumerate_admitted, enumerate_worlds, mine_all, query_error,
    read_anonymized, required_sample_size, tuple_linkage, weigh_worlds, AnonymizedDataset,
    AnonymizerConfig, AuditConfig, DatasetConfig, GlobalDistribution, MinedKnowledge, QuerySpec,
    Rational64, SampleGate, Signature, SolverConfig, Strategy, Table, Target, DEFAULT_WORLD_CAP,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn one_attr() -> DatasetConfig {
    DatasetConfig::new(&["A"], "X", &["x"])
}

fn ac1() -> Outcome {
    let ds = read_anonymized(
        "A,GID\ns1,1\ns1,1\ns2,1\ns2,1\n".as_bytes(),
        "GID,X\n1,x\n1,x\n1,y\n1,z\n".as_bytes(),
        &one_attr(),
    )
    .unwrap();
    let sig = |v: &str| Signature::from_pairs(ds.schema(), &[("A", v)]).unwrap();
    let r = Rational64::new;
    let g = GlobalDistribution::new(
        fgaudit::AttributeSet::new(vec![0]).unwrap(),
        Target::single("x"),
        vec![(sig("s1"), r(1, 2), 2), (sig("s2"), r(1, 5), 2)],
        r(1, 2),
    )
    .unwrap();
    let group = &ds.groups()[0];
    let start = Instant::now();
    let worlds = enumerate_worlds(group, g.target(), DEFAULT_WORLD_CAP).unwrap();
    let weighted = weigh_worlds(&ds, &worlds, &g);
    let p1 = tuple_linkage(&weighted, 0).unwrap();
    let elapsed = start.elapsed();

    let expect = [r(16, 100), r(4, 100), r(4, 100), r(4, 100), r(4, 100), r(1, 100)];
    let weights_ok = weighted.weights() == expect;
    let total_ok = weighted.total_weight() == r(33, 100);
    let p = *p1.numer() as f64 / *p1.denom() as f64;
    let link_ok = p1 == r(24, 33) && (p - 24.0 / 33.0).abs() < 1e-9;
    outcome(
        weights_ok && total_ok && link_ok && elapsed < Duration::from_millis(1),
        format!(
            "weights {:?}, total {}, p(t1:x) = {} ({p:.9}), {:.3} ms",
            weighted.weights().iter().map(|w| w.to_string()).collect::<Vec<_>>(),
            weighted.total_weight(),
            p1,
            ms(elapsed)
        ),
    )
}

fn newton_example() -> AnonymizedDataset {
    read_anonymized(
        "A,GID\ns1,1\ns2,1\ns1,2\ns1,2\ns2,3\ns2,3\n".as_bytes(),
        "GID,X\n1,x\n1,y\n2,x\n2,z\n3,y\n3,w\n".as_bytes(),
        &one_attr(),
    )
    .unwrap()
}

fn ac2() -> Outcome {
    let ds = newton_example();
    let start = Instant::now();
    let adm = enumerate_admitted(&ds, &SampleGate::with_min_support(1), 1).unwrap();
    let k: MinedKnowledge<f64> = mine_all(
        &ds,
        &adm,
        &[Target::single("x")],
        &SolverConfig::default(),
        DEFAULT_WORLD_CAP,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let Some(d) = k.distributions().next() else {
        return outcome(false, "no distribution mined");
    };
    let sig = |v: &str| Signature::from_pairs(ds.schema(), &[("A", v)]).unwrap();
    let f1 = d.probability(&sig("s1")).unwrap();
    let f2 = d.probability(&sig("s2")).unwrap();
    let diag = k.systems[0].diagnostics.as_ref().unwrap();
    let pass = (f1 - 2.0 / 3.0).abs() <= 1e-4
        && (0.0..=1e-4).contains(&f2)
        && diag.residual <= 1e-8
        && elapsed < Duration::from_millis(100);
    outcome(
        pass,
        format!(
            "f1 = {f1:.6}, f2 = {f2:.6}, residual {:.2e} after {} iterations, {:.3} ms",
            diag.residual,
            diag.iterations,
            ms(elapsed)
        ),
    )
}

fn ac3() -> Outcome {
    let direct = |e: f64, s: f64| ((2.0 / s).ln() / (2.0 * e * e)).ceil() as usize;
    let a = required_sample_size(0.01, 0.9).unwrap();
    let b = required_sample_size(0.02, 1.0).unwrap();
    outcome(
        a == 3993 && b == 867 && a == direct(0.01, 0.9) && b == direct(0.02, 1.0),
        format!("J(0.01, 0.9) = {a}, J(0.02, 1.0) = {b}"),
    )
}

fn ac4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut tuples = 0;
    for _ in 0..200 {
        let ds = random_dataset(&mut rng, 1, 8);
        let attrs = if rng.gen_bool(0.5) { vec![0] } else { vec![0, 1] };
        let g = random_distribution(&mut rng, &ds, &attrs, 0.01, 0.99);
        let group = &ds.groups()[0];
        let worlds = enumerate_worlds(group, g.target(), DEFAULT_WORLD_CAP).unwrap();
        let weighted = weigh_worlds(&ds, &worlds, &g);
        let factors: Vec<f64> = group.members().iter().map(|&m| g.factor(ds.qi_row(m))).collect();
        let expect = brute_linkage(&factors, group.count_in(g.target()));
        for (&m, e) in group.members().iter().zip(expect) {
            worst = worst.max((tuple_linkage(&weighted, m).unwrap() - e).abs());
            tuples += 1;
        }
    }
    outcome(
        worst < 1e-9,
        format!("200 groups, {tuples} tuples, max deviation {worst:.2e}"),
    )
}

fn ac5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let start = Instant::now();
    let mut failures: Vec<String> = Vec::new();
    let cfg = SolverConfig::default();
    for case in 0..1000 {
        let ds = random_dataset(&mut rng, 5, 6);
        let attrs = match rng.gen_range(0..3) {
            0 => vec![0],
            1 => vec![1],
            _ => vec![0, 1],
        };
        let g = random_distribution(&mut rng, &ds, &attrs, 0.01, 0.99);
        let gc = complement(&g, &ds);
        let mut fail = |what: &str| failures.push(format!("case {case}: {what}"));
        for group in ds.groups() {
            let worlds = enumerate_worlds(group, g.target(), DEFAULT_WORLD_CAP).unwrap();
            let weighted = weigh_worlds(&ds, &worlds, &g);
            let total: f64 = weighted.conditionals().iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                fail("normalization");
            }
            let p = weighted.linkages();
            if (p.iter().sum::<f64>() - group.count_in(g.target()) as f64).abs() > 1e-9 {
                fail("mass conservation");
            }
            let cworlds = enumerate_worlds(group, gc.target(), DEFAULT_WORLD_CAP).unwrap();
            let q = weigh_worlds(&ds, &cworlds, &gc).linkages();
            if p.iter().zip(&q).any(|(a, b)| (a + b - 1.0).abs() > 1e-9) {
                fail("complement");
            }
            let m = group.members();
            for i in 0..m.len() {
                for j in 0..m.len() {
                    let same = g.lookup(ds.qi_row(m[i])) == g.lookup(ds.qi_row(m[j]));
                    if same && (p[i] - p[j]).abs() > 1e-9 {
                        fail("signature symmetry");
                    }
                }
            }
        }
        let j = rng.gen_range(1..5);
        let adm = enumerate_admitted(&ds, &SampleGate::with_min_support(j), 2).unwrap();
        let oracle = exhaustive_lattice(&ds, j, 2);
        let sound = adm.sets.len() == oracle.len()
            && adm.sets.iter().all(|s| {
                let e = &oracle[s.attributes.indices()];
                e.len() == s.signatures.len()
                    && s.signatures.iter().all(|(sig, n)| e.get(sig.values()) == Some(n))
            });
        if !sound {
            fail("pruning soundness");
        }
        let k = mine_all::<f64>(&ds, &adm, &[Target::single("x")], &cfg, DEFAULT_WORLD_CAP).unwrap();
        for d in k.distributions() {
            if naive_residual(&ds, d).iter().any(|r| r.abs() > 10.0 * cfg.tol) {
                fail("fixed-point residual");
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(60);
    let detail = match failures.first() {
        None => format!("1000 instances, {:.2} s", elapsed.as_secs_f64()),
        Some(f) => format!("{} failures, first: {f}; {:.2} s", failures.len(), elapsed.as_secs_f64()),
    };
    outcome(pass, detail)
}

const AC6_RATES: [(&str, &str, f64); 12] = [
    ("a0", "b0", 0.05),
    ("a0", "b1", 0.60),
    ("a0", "b2", 0.15),
    ("a1", "b0", 0.40),
    ("a1", "b1", 0.10),
    ("a1", "b2", 0.70),
    ("a2", "b0", 0.25),
    ("a2", "b1", 0.50),
    ("a2", "b2", 0.08),
    ("a3", "b0", 0.35),
    ("a3", "b1", 0.20),
    ("a3", "b2", 0.55),
];

/// Mean absolute error of every mined frequency against the raw table, or
/// `None` when some system failed to produce a distribution.
fn recovery_error(table: &Table, k: &MinedKnowledge<f64>) -> Option<f64> {
    if k.systems.iter().any(|s| s.distribution.is_none()) {
        return None;
    }
    let mut err = 0.0;
    let mut n = 0;
    for d in k.distributions() {
        for (sig, f, _) in d.entries() {
            err += (f - true_frequency(table, sig)).abs();
            n += 1;
        }
    }
    Some(err / n as f64)
}

fn ac6() -> Outcome {
    let start = Instant::now();
    let mut ok = 0;
    let mut maes = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let table = synthetic_table(&mut rng, 2000, &AC6_RATES, 6);
        let ds = anonymize(&table, &AnonymizerConfig::new(2, Strategy::Anatomy, seed)).unwrap();
        let adm = enumerate_admitted(&ds, &SampleGate::with_min_support(20), 2).unwrap();
        let k: MinedKnowledge<f64> = mine_all(
            &ds,
            &adm,
            &[Target::single("x")],
            &SolverConfig::default(),
            DEFAULT_WORLD_CAP,
        )
        .unwrap();
        match recovery_error(&table, &k) {
            Some(mae) => {
                if mae <= 0.05 {
                    ok += 1;
                }
                maes.push(format!("{mae:.3}"));
            }
            None => maes.push("unconverged".into()),
        }
    }
    let elapsed = start.elapsed();
    outcome(
        ok >= 18 && elapsed < Duration::from_secs(120),
        format!(
            "{ok}/20 runs with MAE <= 0.05 [{}], {:.2} s",
            maes.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn ac7() -> Outcome {
    // `hi` tuples carry ten times the target rate of `lo` tuples
    let rates = [("hi", "b", 0.40), ("lo", "b", 0.04)];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let table = synthetic_table(&mut rng, 1000, &rates, 6);
    let ds = anonymize(&table, &AnonymizerConfig::new(2, Strategy::Anatomy, 7)).unwrap();
    let adm = enumerate_admitted(&ds, &SampleGate::with_min_support(10), 1).unwrap();
    let k: MinedKnowledge<f64> = mine_all(
        &ds,
        &adm,
        &[Target::single("x")],
        &SolverConfig::default(),
        DEFAULT_WORLD_CAP,
    )
    .unwrap();
    let targets = vec![Target::single("x")];
    let r2 = audit(&ds, &k, &AuditConfig::new(2.0, targets.clone()), Some(&table)).unwrap();
    let r4 = audit(&ds, &k, &AuditConfig::new(4.0, targets), Some(&table)).unwrap();
    let f2: BTreeSet<usize> = r2.flagged_rows();
    let f4: BTreeSet<usize> = r4.flagged_rows();
    let is_hi = |row: usize| ds.qi_row(row)[0] == "hi";
    let mixed_with_x = |row: usize| {
        let g = &ds.groups()[ds.group_index_of(row)];
        g.count_in(&Target::single("x")) > 0 && g.members().iter().any(|&m| !is_hi(m))
    };
    let lo_max = r2
        .tuples
        .iter()
        .filter(|t| !is_hi(t.row_id))
        .filter_map(|t| t.max_linkage)
        .fold(0.0, f64::max);
    let hi_flagged = f2.iter().all(|&r| is_hi(r) && mixed_with_x(r));
    let pass = !f2.is_empty() && hi_flagged && lo_max <= 0.5 && f2.is_subset(&f4);
    let f = |v: &str| {
        k.distributions()
            .next()
            .and_then(|d| d.probability(&Signature::from_pairs(ds.schema(), &[("A", v)]).unwrap()))
            .unwrap_or(f64::NAN)
    };
    outcome(
        pass,
        format!(
            "f(hi) = {:.3}, f(lo) = {:.3}; flagged {} at r=2 (all high-rate tuples in mixed groups: {hi_flagged}), {} at r=4 (superset: {}); max low-rate linkage {lo_max:.3}",
            f("hi"),
            f("lo"),
            f2.len(),
            f4.len(),
            f2.is_subset(&f4)
        ),
    )
}

fn in_unit(v: Option<f64>) -> bool {
    v.is_none_or(|x| (0.0..=1.0).contains(&x))
}

fn ac8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let table = synthetic_table(&mut rng, 400, &AC6_RATES, 6);
    let spec = QuerySpec {
        qd: 2,
        selectivity: 0.05,
        count: 2000,
        seed: 8,
    };
    let identity = AnonymizedDataset::identity(&table).unwrap();
    let id_err = query_error(&table, &identity, &spec).unwrap();

    let anatomy = anonymize(&table, &AnonymizerConfig::new(2, Strategy::Anatomy, 8)).unwrap();
    let mut partitions: Vec<Vec<Vec<usize>>> =
        vec![anatomy.groups().iter().map(|g| g.members().to_vec()).collect()];
    for _ in 0..3 {
        let last = partitions.last().unwrap();
        let coarser = last.chunks(2).map(|c| c.concat()).collect();
        partitions.push(coarser);
    }
    let mut ok = id_err == 0.0;
    let mut notes = vec![format!("identity error {id_err}")];
    for p in partitions {
        let ds = AnonymizedDataset::from_partition(&table, p).unwrap();
        let adm = enumerate_admitted(&ds, &SampleGate::with_min_support(10), 2).unwrap();
        let cfg = SolverConfig {
            max_iter: 100,
            ..SolverConfig::default()
        };
        let k: MinedKnowledge<f64> =
            mine_all(&ds, &adm, &[Target::single("x")], &cfg, DEFAULT_WORLD_CAP).unwrap();
        let rep = audit(&ds, &k, &AuditConfig::new(2.0, vec![Target::single("x")]), Some(&table)).unwrap();
        let m = &rep.metrics;
        let err = query_error(&table, &ds, &spec).unwrap();
        let probs_ok = rep
            .tuples
            .iter()
            .all(|t| in_unit(t.max_linkage));
        let step_ok = in_unit(m.recall)
            && in_unit(m.false_flag_rate)
            && in_unit(m.avg_breach_prob)
            && (0.0..=1.0).contains(&m.avg_delta)
            && probs_ok
            && err.is_finite()
            && err >= 0.0;
        ok &= step_ok;
        let max_group = ds.groups().iter().map(|g| g.len()).max().unwrap();
        notes.push(format!(
            "groups<={max_group}: recall {:.3}, false-flag {:.3}, error {err:.3}",
            m.recall.unwrap_or(f64::NAN),
            m.false_flag_rate.unwrap_or(f64::NAN)
        ));
    }
    outcome(ok, notes.join("; "))
}

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(&str, &str, Check); 8] = [
        ("AC1", "worked example world weights and linkage", ac1),
        ("AC2", "Newton solution of the six-tuple example", ac2),
        ("AC3", "sample-size gate", ac3),
        ("AC4", "linkage equals brute-force enumeration", ac4),
        ("AC5", "randomized invariant suite", ac5),
        ("AC6", "end-to-end frequency recovery", ac6),
        ("AC7", "breach direction and r monotonicity", ac7),
        ("AC8", "utility metric and rate bounds", ac8),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let o = check();
        println!("[{}] {id} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
