//! Mining global distributions from a bucketized dataset.
//!
//! For one attribute set and one target, each admitted signature `s_i`
//! contributes an unknown `f_i` and the equation
//!
//! ```text
//! f_i = sum_k c_k(s_i) / sum_k |L_k(s_i)|
//! ```
//!
//! where `c_k(s_i)` is the expected number of tuples in group `L_k` matching
//! `s_i` that link to the target, computed by weighing the group's possible
//! worlds under the candidate `f`. The system is solved numerically.

use rayon::prelude::*;

use crate::dataset::{AnonymizedDataset, AttributeSet, Signature, Target};
use crate::error::{Error, Result};
use crate::lattice::{AdmittedSet, AdmittedSignatures};
use crate::scalar::{Real, Scalar};
use crate::solver::{self, Diagnostics, SolverConfig};
use crate::worlds::{world_set, GlobalDistribution, WorldCache, WorldSet};

/// Term count above which residual evaluation fans out across threads.
const PARALLEL_TERMS: usize = 256;

struct GroupTerm {
    worlds: WorldSet,
    /// Equation index of each member's signature, `None` for unadmitted ones.
    slots: Vec<Option<usize>>,
}

/// The system of `m` equations in `m` unknowns for one attribute set and target.
pub struct EquationSystem<T> {
    attribute_set: AttributeSet,
    target: Target,
    signatures: Vec<Signature>,
    supports: Vec<usize>,
    denominators: Vec<usize>,
    groups_by_signature: Vec<Vec<u64>>,
    terms: Vec<GroupTerm>,
    fallback: T,
}

pub fn build_system<T: Real>(
    dataset: &AnonymizedDataset,
    admitted: &AdmittedSet,
    target: &Target,
    cap: u64,
) -> Result<EquationSystem<T>> {
    if admitted.signatures.is_empty() {
        return Err(Error::InvalidParameter(
            "attribute set has no admitted signatures".into(),
        ));
    }
    let (signatures, supports): (Vec<Signature>, Vec<usize>) =
        admitted.signatures.iter().cloned().unzip();
    let probe = GlobalDistribution::new(
        admitted.attributes.clone(),
        target.clone(),
        signatures.iter().map(|s| (s.clone(), T::zero(), 0)).collect(),
        T::zero(),
    )?;
    let (nx, rows) = dataset.base_rate(target);
    let fallback = T::from_ratio(nx, rows);

    let m = signatures.len();
    let mut denominators = vec![0usize; m];
    let mut groups_by_signature = vec![Vec::new(); m];
    let mut cache = WorldCache::new();
    let mut terms = Vec::new();
    for group in dataset.groups() {
        let slots: Vec<Option<usize>> = group
            .members()
            .iter()
            .map(|&r| probe.lookup(dataset.qi_row(r)))
            .collect();
        if slots.iter().all(Option::is_none) {
            continue;
        }
        for i in slots.iter().flatten() {
            denominators[*i] += 1;
            if groups_by_signature[*i].last() != Some(&group.gid) {
                groups_by_signature[*i].push(group.gid);
            }
        }
        let n_x = group.count_in(target);
        let table = cache.get(group.gid, group.len(), n_x, cap)?;
        terms.push(GroupTerm {
            worlds: world_set(group, n_x, table),
            slots,
        });
    }
    debug_assert_eq!(denominators, supports);
    Ok(EquationSystem {
        attribute_set: admitted.attributes.clone(),
        target: target.clone(),
        signatures,
        supports,
        denominators,
        groups_by_signature,
        terms,
        fallback,
    })
}

impl<T: Real> EquationSystem<T> {
    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn attribute_set(&self) -> &AttributeSet {
        &self.attribute_set
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn signatures(&self) -> &[Signature] {
        &self.signatures
    }

    /// `sum_k |L_k(s_i)|` per signature.
    pub fn denominators(&self) -> &[usize] {
        &self.denominators
    }

    /// Group ids holding at least one tuple matching each signature.
    pub fn groups_by_signature(&self) -> &[Vec<u64>] {
        &self.groups_by_signature
    }

    /// Probability applied to tuples matching no admitted signature.
    pub fn fallback(&self) -> T {
        self.fallback
    }

    fn term_contributions(&self, term: &GroupTerm, f: &[T]) -> Vec<(usize, T)> {
        let factors: Vec<T> = term
            .slots
            .iter()
            .map(|s| s.map_or(self.fallback, |i| f[i]))
            .collect();
        let links = term.worlds.weigh(&factors).linkages();
        term.slots
            .iter()
            .zip(links)
            .filter_map(|(s, p)| s.map(|i| (i, p)))
            .collect()
    }

    /// `sum_k c_k(s_i)` per signature under candidate `f`.
    pub fn expected_counts(&self, f: &[T]) -> Vec<T> {
        assert_eq!(f.len(), self.len());
        let parts: Vec<Vec<(usize, T)>> = if self.terms.len() >= PARALLEL_TERMS {
            self.terms
                .par_iter()
                .map(|t| self.term_contributions(t, f))
                .collect()
        } else {
            self.terms
                .iter()
                .map(|t| self.term_contributions(t, f))
                .collect()
        };
        let mut acc = vec![T::zero(); self.len()];
        for (i, p) in parts.into_iter().flatten() {
            acc[i] = acc[i] + p;
        }
        acc
    }

    /// `r_i(f) = f_i - sum_k c_k(s_i) / sum_k |L_k(s_i)|`.
    pub fn residual(&self, f: &[T]) -> Vec<T> {
        self.expected_counts(f)
            .into_iter()
            .zip(f)
            .zip(&self.denominators)
            .map(|((c, &fi), &d)| fi - c / T::from_usize(d).unwrap())
            .collect()
    }

    /// Each group contributes its own target fraction for the tuples it holds.
    pub fn initial_guess(&self) -> Vec<T> {
        let mut num = vec![T::zero(); self.len()];
        for term in &self.terms {
            let local = T::from_ratio(term.worlds.n_x(), term.worlds.group_size());
            for i in term.slots.iter().flatten() {
                num[*i] = num[*i] + local;
            }
        }
        num.into_iter()
            .zip(&self.denominators)
            .map(|(n, &d)| n / T::from_usize(d).unwrap())
            .collect()
    }

    pub fn distribution(&self, f: &[T]) -> Result<GlobalDistribution<T>> {
        GlobalDistribution::new(
            self.attribute_set.clone(),
            self.target.clone(),
            self.signatures
                .iter()
                .cloned()
                .zip(f.iter().copied())
                .zip(self.supports.iter().copied())
                .map(|((s, f), n)| (s, f, n))
                .collect(),
            self.fallback,
        )
    }
}

/// Solves one system from its local-proportion starting point.
pub fn solve<T: Real>(system: &EquationSystem<T>, config: &SolverConfig) -> Result<(Vec<T>, Diagnostics)> {
    solver::solve(|f| system.residual(f), &system.initial_guess(), config)
}

/// Outcome of mining one (attribute set, target) pair.
#[derive(Clone, Debug)]
pub struct MinedSystem<T> {
    pub attribute_set: AttributeSet,
    pub target: Target,
    /// Present only when the solver converged.
    pub distribution: Option<GlobalDistribution<T>>,
    pub signatures: Vec<Signature>,
    pub supports: Vec<usize>,
    pub solution: Vec<T>,
    pub diagnostics: Option<Diagnostics>,
    /// Set when the system could not be built.
    pub error: Option<String>,
}

/// The collection of mined global distributions, plus diagnostics for the
/// systems that failed.
#[derive(Clone, Debug, Default)]
pub struct MinedKnowledge<T> {
    pub systems: Vec<MinedSystem<T>>,
}

impl<T: Scalar> MinedKnowledge<T> {
    /// Knowledge made of ready distributions, e.g. read back from a report.
    pub fn from_distributions(distributions: Vec<GlobalDistribution<T>>) -> Self {
        MinedKnowledge {
            systems: distributions
                .into_iter()
                .map(|d| MinedSystem {
                    attribute_set: d.attribute_set().clone(),
                    target: d.target().clone(),
                    signatures: d.signatures().to_vec(),
                    supports: d.supports().to_vec(),
                    solution: d.probabilities().to_vec(),
                    distribution: Some(d),
                    diagnostics: None,
                    error: None,
                })
                .collect(),
        }
    }

    pub fn distributions(&self) -> impl Iterator<Item = &GlobalDistribution<T>> {
        self.systems.iter().filter_map(|s| s.distribution.as_ref())
    }

    pub fn len(&self) -> usize {
        self.distributions().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Builds and solves one system per (admitted attribute set, target).
pub fn mine_all<T: Real>(
    dataset: &AnonymizedDataset,
    admitted: &AdmittedSignatures,
    targets: &[Target],
    config: &SolverConfig,
    cap: u64,
) -> Result<MinedKnowledge<T>> {
    config.validate()?;
    let jobs: Vec<(&AdmittedSet, &Target)> = admitted
        .sets
        .iter()
        .flat_map(|s| targets.iter().map(move |t| (s, t)))
        .collect();
    let systems = jobs
        .into_par_iter()
        .map(|(set, target)| mine_one(dataset, set, target, config, cap))
        .collect::<Result<Vec<_>>>()?;
    Ok(MinedKnowledge { systems })
}

fn mine_one<T: Real>(
    dataset: &AnonymizedDataset,
    set: &AdmittedSet,
    target: &Target,
    config: &SolverConfig,
    cap: u64,
) -> Result<MinedSystem<T>> {
    let signatures: Vec<Signature> = set.signatures.iter().map(|(s, _)| s.clone()).collect();
    let supports: Vec<usize> = set.signatures.iter().map(|&(_, n)| n).collect();
    let system = match build_system::<T>(dataset, set, target, cap) {
        Ok(s) => s,
        Err(e @ Error::WorldExplosion { .. }) => {
            log::warn!("skipping attribute set: {e}");
            return Ok(MinedSystem {
                attribute_set: set.attributes.clone(),
                target: target.clone(),
                distribution: None,
                signatures,
                supports,
                solution: Vec::new(),
                diagnostics: None,
                error: Some(e.to_string()),
            });
        }
        Err(e) => return Err(e),
    };
    let (f, diagnostics) = solve(&system, config)?;
    if !diagnostics.converged {
        log::warn!(
            "system over {} signatures did not converge (residual {:e})",
            system.len(),
            diagnostics.residual
        );
    }
    let distribution = if diagnostics.converged {
        Some(system.distribution(&f)?)
    } else {
        None
    };
    Ok(MinedSystem {
        attribute_set: set.attributes.clone(),
        target: target.clone(),
        distribution,
        signatures,
        supports,
        solution: f,
        diagnostics: Some(diagnostics),
        error: None,
    })
}
