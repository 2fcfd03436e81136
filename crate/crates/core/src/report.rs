//! Machine-readable run reports.
//!
//! A report is one JSON document with the sections `config`, `distributions`,
//! `tuples`, `metrics` and `diagnostics`. Mined knowledge can be read back
//! from the `distributions` section.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audit::{BreachMetrics, BreachReport};
use crate::dataset::{AttributeSet, Schema, Signature, Target};
use crate::error::{Error, Result};
use crate::miner::MinedKnowledge;
use crate::scalar::Scalar;
use crate::solver::Method;
use crate::worlds::GlobalDistribution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub values: Vec<String>,
    pub f: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionRecord {
    pub attributes: Vec<String>,
    pub target: Vec<String>,
    pub converged: bool,
    pub iterations: Option<usize>,
    pub residual: Option<f64>,
    pub method: Option<Method>,
    /// Probability used for tuples matching no listed signature.
    pub fallback: Option<f64>,
    pub solver_fallback: Option<String>,
    pub error: Option<String>,
    pub entries: Vec<EntryRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TupleRecord {
    pub row_id: usize,
    pub gid: u64,
    pub max_linkage: Option<f64>,
    pub attributes: Option<Vec<String>>,
    pub target: Option<Vec<String>>,
    pub breached: bool,
    pub sensitive: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportDiagnostics {
    pub warnings: Vec<String>,
    pub notices: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: serde_json::Value,
    pub distributions: Vec<DistributionRecord>,
    pub tuples: Vec<TupleRecord>,
    pub metrics: Option<BreachMetrics>,
    pub diagnostics: ReportDiagnostics,
}

fn target_values(t: &Target) -> Vec<String> {
    t.values().map(str::to_string).collect()
}

impl Report {
    pub fn new(config: serde_json::Value) -> Self {
        Report {
            config,
            distributions: Vec::new(),
            tuples: Vec::new(),
            metrics: None,
            diagnostics: ReportDiagnostics::default(),
        }
    }

    /// Records every mined system, converged or not.
    pub fn add_knowledge<T: Scalar>(&mut self, schema: &Schema, knowledge: &MinedKnowledge<T>) {
        for s in &knowledge.systems {
            let d = s.diagnostics.as_ref();
            let converged = s.distribution.is_some();
            let entries = s
                .signatures
                .iter()
                .zip(&s.solution)
                .zip(&s.supports)
                .map(|((sig, &f), &support)| EntryRecord {
                    values: sig.values().to_vec(),
                    f: f.to_f64_lossy(),
                    support,
                })
                .collect();
            if !converged {
                let why = s.error.clone().unwrap_or_else(|| "did not converge".into());
                self.diagnostics.warnings.push(format!(
                    "distribution over {:?} for {}: {why}",
                    s.attribute_set.names(schema),
                    s.target
                ));
            }
            self.distributions.push(DistributionRecord {
                attributes: s.attribute_set.names(schema),
                target: target_values(&s.target),
                converged,
                iterations: d.map(|d| d.iterations),
                residual: d.map(|d| d.residual),
                method: d.map(|d| d.method),
                fallback: s.distribution.as_ref().map(|g| g.fallback().to_f64_lossy()),
                solver_fallback: d.and_then(|d| d.fallback.clone()),
                error: s.error.clone(),
                entries,
            });
        }
    }

    pub fn add_audit<T: Scalar>(&mut self, schema: &Schema, report: &BreachReport<T>) {
        self.tuples = report
            .tuples
            .iter()
            .map(|t| TupleRecord {
                row_id: t.row_id,
                gid: t.gid,
                max_linkage: t.max_linkage.map(Scalar::to_f64_lossy),
                attributes: t
                    .source
                    .as_ref()
                    .and_then(|s| s.attribute_set.as_ref())
                    .map(|a| a.names(schema)),
                target: t.source.as_ref().map(|s| target_values(&s.target)),
                breached: t.breached,
                sensitive: t.sensitive,
            })
            .collect();
        self.metrics = Some(report.metrics.clone());
        self.diagnostics.warnings.extend(report.warnings.iter().cloned());
    }

    /// Converged distributions as knowledge for `schema`.
    pub fn knowledge(&self, schema: &Schema) -> Result<MinedKnowledge<f64>> {
        let mut out = Vec::new();
        for d in self.distributions.iter().filter(|d| d.converged) {
            let names: Vec<&str> = d.attributes.iter().map(String::as_str).collect();
            let set = AttributeSet::from_names(schema, &names)?;
            let target = Target::new(d.target.iter().cloned())?;
            let entries = d
                .entries
                .iter()
                .map(|e| Ok((Signature::new(set.clone(), e.values.clone())?, e.f, e.support)))
                .collect::<Result<Vec<_>>>()?;
            let fallback = d.fallback.ok_or_else(|| {
                Error::Schema(format!("converged distribution over {names:?} lacks a fallback"))
            })?;
            out.push(GlobalDistribution::new(set, target, entries, fallback)?);
        }
        Ok(MinedKnowledge::from_distributions(out))
    }

    pub fn to_writer<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        self.to_writer(&mut w)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        Ok(serde_json::from_reader(r)?)
    }
}
