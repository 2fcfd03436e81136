//! Raw tables, bucketized datasets, and signature matching.
//!
//! A bucketized dataset is published as two comma-delimited files: a QI file
//! holding the quasi-identifier columns plus a `GID` column (one line per row,
//! in row-id order), and a sensitive file holding `GID` and the sensitive
//! column (one line per sensitive value, linkage to rows erased).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the group-id column in both files of a bucketized pair.
pub const GID_COLUMN: &str = "GID";

/// The set of sensitive values jointly treated as the target value `x`.
/// Every other sensitive value collapses to its complement.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Target(BTreeSet<String>);

impl Target {
    pub fn new<I, S>(values: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = values.into_iter().map(Into::into).collect();
        if set.is_empty() {
            return Err(Error::Schema("sensitive value set is empty".into()));
        }
        Ok(Target(set))
    }

    pub fn single(value: impl Into<String>) -> Self {
        Target(BTreeSet::from([value.into()]))
    }

    pub fn contains(&self, value: &str) -> bool {
        self.0.contains(value)
    }

    pub fn values(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let joined: Vec<&str> = self.values().collect();
        write!(f, "{{{}}}", joined.join(","))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schema {
    attributes: Vec<String>,
    qi_attributes: Vec<String>,
    qi_positions: Vec<usize>,
    sensitive_attribute: String,
    sensitive_position: usize,
    target: Target,
}

impl Schema {
    /// QI attributes are reordered into header order so signatures have one
    /// canonical form.
    pub fn new(
        attributes: Vec<String>,
        qi_attributes: &[String],
        sensitive_attribute: &str,
        target: Target,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for a in &attributes {
            if !seen.insert(a.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute `{a}`")));
            }
        }
        let position = |name: &str| {
            attributes
                .iter()
                .position(|a| a == name)
                .ok_or_else(|| Error::MissingAttribute(name.to_string()))
        };
        if qi_attributes.is_empty() {
            return Err(Error::Schema("no quasi-identifier attributes".into()));
        }
        let sensitive_position = position(sensitive_attribute)?;
        let mut qi_positions = Vec::with_capacity(qi_attributes.len());
        for q in qi_attributes {
            if q == sensitive_attribute {
                return Err(Error::Schema(format!(
                    "`{q}` cannot be both quasi-identifier and sensitive"
                )));
            }
            let p = position(q)?;
            if qi_positions.contains(&p) {
                return Err(Error::Schema(format!("duplicate QI attribute `{q}`")));
            }
            qi_positions.push(p);
        }
        qi_positions.sort_unstable();
        let qi_attributes = qi_positions.iter().map(|&p| attributes[p].clone()).collect();
        Ok(Schema {
            attributes,
            qi_attributes,
            qi_positions,
            sensitive_attribute: sensitive_attribute.to_string(),
            sensitive_position,
            target,
        })
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn qi_attributes(&self) -> &[String] {
        &self.qi_attributes
    }

    pub fn sensitive_attribute(&self) -> &str {
        &self.sensitive_attribute
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    /// Position of a QI attribute within the QI projection.
    pub fn qi_index(&self, name: &str) -> Option<usize> {
        self.qi_attributes.iter().position(|a| a == name)
    }

    fn qi_positions(&self) -> &[usize] {
        &self.qi_positions
    }

    fn sensitive_position(&self) -> usize {
        self.sensitive_position
    }
}

/// Loader configuration, usually read from a TOML file.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub qi_attributes: Vec<String>,
    pub sensitive_attribute: String,
    pub sensitive_values: Vec<String>,
    #[serde(default)]
    pub missing_marker: Option<String>,
    #[serde(default)]
    pub bin_widths: BTreeMap<String, f64>,
}

impl DatasetConfig {
    pub fn new(qi: &[&str], sensitive: &str, values: &[&str]) -> Self {
        DatasetConfig {
            qi_attributes: qi.iter().map(|s| s.to_string()).collect(),
            sensitive_attribute: sensitive.to_string(),
            sensitive_values: values.iter().map(|s| s.to_string()).collect(),
            missing_marker: None,
            bin_widths: BTreeMap::new(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn target(&self) -> Result<Target> {
        Target::new(self.sensitive_values.iter().cloned())
    }

    fn schema(&self, attributes: Vec<String>) -> Result<Schema> {
        Schema::new(
            attributes,
            &self.qi_attributes,
            &self.sensitive_attribute,
            self.target()?,
        )
    }
}

/// A raw relation. Row ids are the indices into `rows`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    schema: Schema,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: Schema, rows: Vec<Vec<String>>) -> Result<Self> {
        let arity = schema.attributes.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != arity {
                return Err(Error::RaggedRow {
                    line: i as u64 + 2,
                    expected: arity,
                    found: row.len(),
                });
            }
        }
        let table = Table { schema, rows };
        table.check_target_observed()?;
        Ok(table)
    }

    fn check_target_observed(&self) -> Result<()> {
        let pos = self.schema.sensitive_position();
        for v in self.schema.target.values() {
            if !self.rows.iter().any(|r| r[pos] == v) {
                return Err(Error::Schema(format!(
                    "sensitive value `{v}` never occurs in attribute `{}`",
                    self.schema.sensitive_attribute
                )));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, id: usize) -> &[String] {
        &self.rows[id]
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn sensitive_value(&self, id: usize) -> &str {
        &self.rows[id][self.schema.sensitive_position()]
    }

    /// QI projection of a row, in canonical QI order.
    pub fn qi_values(&self, id: usize) -> Vec<String> {
        self.schema
            .qi_positions()
            .iter()
            .map(|&p| self.rows[id][p].clone())
            .collect()
    }

    pub fn is_sensitive(&self, id: usize) -> bool {
        self.schema.target.contains(self.sensitive_value(id))
    }
}

fn bin_value(attribute: &str, value: &str, width: f64) -> Result<String> {
    let v: f64 = value.parse().map_err(|_| Error::Binning {
        attribute: attribute.to_string(),
        value: value.to_string(),
    })?;
    let lo = (v / width).floor() * width;
    Ok(format!("{}-{}", lo, lo + width))
}

pub fn load_table(path: impl AsRef<Path>, config: &DatasetConfig) -> Result<Table> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, config).map_err(|e| match e {
        Error::EmptyFile(_) => Error::EmptyFile(path.to_path_buf()),
        other => other,
    })
}

/// Reads a raw table. Rows holding the configured missing marker are dropped.
pub fn read_table<R: Read>(reader: R, config: &DatasetConfig) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::EmptyFile(Default::default()));
    }
    let schema = config.schema(header.clone())?;
    for name in config.bin_widths.keys() {
        if !header.contains(name) {
            return Err(Error::MissingAttribute(name.clone()));
        }
    }
    let bins: Vec<Option<f64>> = header
        .iter()
        .map(|a| config.bin_widths.get(a).copied())
        .collect();

    let mut rows = Vec::new();
    let mut dropped = 0usize;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        if let Some(marker) = &config.missing_marker {
            if record.iter().any(|v| v == marker) {
                dropped += 1;
                continue;
            }
        }
        let mut row = Vec::with_capacity(header.len());
        for (i, v) in record.iter().enumerate() {
            match bins[i] {
                Some(w) => row.push(bin_value(&header[i], v, w)?),
                None => row.push(v.to_string()),
            }
        }
        rows.push(row);
    }
    if dropped > 0 {
        log::info!("dropped {dropped} rows containing missing values");
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile(Default::default()));
    }
    Table::new(schema, rows)
}

/// Indices into the QI projection, strictly increasing and non-empty.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttributeSet(Vec<usize>);

impl AttributeSet {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptySignature);
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Schema("duplicate attribute in attribute set".into()));
        }
        Ok(AttributeSet(indices))
    }

    pub fn from_names(schema: &Schema, names: &[&str]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                schema
                    .qi_index(n)
                    .ok_or_else(|| Error::MissingAttribute(n.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(idx)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self, schema: &Schema) -> Vec<String> {
        self.0
            .iter()
            .map(|&i| schema.qi_attributes()[i].clone())
            .collect()
    }

    pub fn is_subset_of(&self, other: &AttributeSet) -> bool {
        self.0.iter().all(|i| other.0.contains(i))
    }
}

/// Attribute-value pattern over a set of QI attributes.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature {
    attributes: AttributeSet,
    values: Vec<String>,
}

impl Signature {
    pub fn new(attributes: AttributeSet, values: Vec<String>) -> Result<Self> {
        if attributes.len() != values.len() {
            return Err(Error::Schema(format!(
                "signature has {} attributes but {} values",
                attributes.len(),
                values.len()
            )));
        }
        Ok(Signature { attributes, values })
    }

    /// Builds a signature from `(attribute, value)` pairs in any order.
    pub fn from_pairs(schema: &Schema, pairs: &[(&str, &str)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptySignature);
        }
        let mut indexed = pairs
            .iter()
            .map(|(a, v)| {
                schema
                    .qi_index(a)
                    .map(|i| (i, v.to_string()))
                    .ok_or_else(|| Error::MissingAttribute(a.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        indexed.sort_by_key(|(i, _)| *i);
        let (idx, values): (Vec<_>, Vec<_>) = indexed.into_iter().unzip();
        Signature::new(AttributeSet::new(idx)?, values)
    }

    /// The signature a QI row carries over `attributes`.
    pub fn of_row(attributes: &AttributeSet, qi_row: &[String]) -> Self {
        Signature {
            attributes: attributes.clone(),
            values: attributes.0.iter().map(|&i| qi_row[i].clone()).collect(),
        }
    }

    pub fn attributes(&self) -> &AttributeSet {
        &self.attributes
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn matches(&self, qi_row: &[String]) -> bool {
        self.attributes
            .0
            .iter()
            .zip(&self.values)
            .all(|(&i, v)| qi_row[i] == *v)
    }

    /// Projection onto a non-empty subset of this signature's attributes.
    pub fn restrict(&self, subset: &AttributeSet) -> Option<Signature> {
        if !subset.is_subset_of(&self.attributes) {
            return None;
        }
        let values = subset
            .0
            .iter()
            .map(|i| {
                let pos = self.attributes.0.iter().position(|a| a == i).unwrap();
                self.values[pos].clone()
            })
            .collect();
        Some(Signature {
            attributes: subset.clone(),
            values,
        })
    }

    pub fn display(&self, schema: &Schema) -> String {
        let parts: Vec<String> = self
            .attributes
            .names(schema)
            .into_iter()
            .zip(&self.values)
            .map(|(a, v)| format!("{a}={v}"))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }
}

/// True iff every attribute-value pair of `signature` agrees with the tuple.
pub fn matches(tuple_qi: &[String], signature: &Signature) -> bool {
    signature.matches(tuple_qi)
}

/// An anonymized group: members and their sensitive multiset, unlinked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AGroup {
    pub gid: u64,
    members: Vec<usize>,
    sensitive: Vec<String>,
}

impl AGroup {
    /// The sensitive multiset is stored sorted so no member order leaks.
    pub fn new(gid: u64, mut members: Vec<usize>, mut sensitive: Vec<String>) -> Result<Self> {
        if members.len() != sensitive.len() {
            return Err(Error::CardinalityMismatch {
                gid,
                members: members.len(),
                sensitive: sensitive.len(),
            });
        }
        if members.is_empty() {
            return Err(Error::Schema(format!("group {gid} is empty")));
        }
        members.sort_unstable();
        sensitive.sort_unstable();
        Ok(AGroup {
            gid,
            members,
            sensitive,
        })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn sensitive(&self) -> &[String] {
        &self.sensitive
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Number of values in the multiset that belong to `target`.
    pub fn count_in(&self, target: &Target) -> usize {
        self.sensitive.iter().filter(|v| target.contains(v)).count()
    }

    /// Largest multiplicity of a single sensitive value.
    pub fn max_multiplicity(&self) -> usize {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for v in &self.sensitive {
            *counts.entry(v).or_default() += 1;
        }
        counts.into_values().max().unwrap_or(0)
    }
}

/// Bucketized dataset: QI rows plus A-groups over them.
#[derive(Clone, Debug, PartialEq)]
pub struct AnonymizedDataset {
    schema: Schema,
    qi_rows: Vec<Vec<String>>,
    row_group: Vec<usize>,
    groups: Vec<AGroup>,
}

impl AnonymizedDataset {
    /// `qi_rows` are in canonical QI order; groups must partition the rows.
    pub fn new(schema: Schema, qi_rows: Vec<Vec<String>>, groups: Vec<AGroup>) -> Result<Self> {
        let width = schema.qi_attributes().len();
        if let Some((i, r)) = qi_rows.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(Error::RaggedRow {
                line: i as u64 + 2,
                expected: width,
                found: r.len(),
            });
        }
        let mut row_group = vec![usize::MAX; qi_rows.len()];
        for (gi, g) in groups.iter().enumerate() {
            for &m in g.members() {
                if m >= qi_rows.len() {
                    return Err(Error::Schema(format!(
                        "group {} references unknown row {m}",
                        g.gid
                    )));
                }
                if row_group[m] != usize::MAX {
                    return Err(Error::Schema(format!("row {m} belongs to two groups")));
                }
                row_group[m] = gi;
            }
        }
        if let Some(r) = row_group.iter().position(|&g| g == usize::MAX) {
            return Err(Error::Schema(format!("row {r} belongs to no group")));
        }
        let ds = AnonymizedDataset {
            schema,
            qi_rows,
            row_group,
            groups,
        };
        for v in ds.schema.target.values() {
            if !ds.groups.iter().any(|g| g.sensitive.iter().any(|s| s == v)) {
                return Err(Error::Schema(format!(
                    "sensitive value `{v}` never occurs in the sensitive table"
                )));
            }
        }
        Ok(ds)
    }

    /// Bucketizes `table` under the given partition of its row ids.
    /// Group ids are assigned 1, 2, ... in partition order.
    pub fn from_partition(table: &Table, partition: Vec<Vec<usize>>) -> Result<Self> {
        let schema = Schema::new(
            anonymized_attributes(table.schema()),
            table.schema().qi_attributes(),
            table.schema().sensitive_attribute(),
            table.schema().target().clone(),
        )?;
        let qi_rows = (0..table.len()).map(|i| table.qi_values(i)).collect();
        let groups = partition
            .into_iter()
            .enumerate()
            .map(|(i, members)| {
                let sensitive = members
                    .iter()
                    .map(|&m| table.sensitive_value(m).to_string())
                    .collect();
                AGroup::new(i as u64 + 1, members, sensitive)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(schema, qi_rows, groups)
    }

    /// One singleton group per row: the anonymization that hides nothing.
    pub fn identity(table: &Table) -> Result<Self> {
        Self::from_partition(table, (0..table.len()).map(|i| vec![i]).collect())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.qi_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qi_rows.is_empty()
    }

    pub fn qi_row(&self, id: usize) -> &[String] {
        &self.qi_rows[id]
    }

    pub fn qi_rows(&self) -> &[Vec<String>] {
        &self.qi_rows
    }

    pub fn groups(&self) -> &[AGroup] {
        &self.groups
    }

    /// Index into [`groups`](Self::groups) of the group holding `row`.
    pub fn group_index_of(&self, row: usize) -> usize {
        self.row_group[row]
    }

    /// Number of rows whose published sensitive value lies in `target`.
    pub fn target_count(&self, target: &Target) -> usize {
        self.groups.iter().map(|g| g.count_in(target)).sum()
    }

    /// Dataset-wide fraction of sensitive values in `target`.
    pub fn base_rate(&self, target: &Target) -> (usize, usize) {
        (self.target_count(target), self.len())
    }

    pub fn write(&self, qi_path: impl AsRef<Path>, sensitive_path: impl AsRef<Path>) -> Result<()> {
        let (qi_path, sensitive_path) = (qi_path.as_ref(), sensitive_path.as_ref());
        let qi = File::create(qi_path).map_err(|e| Error::io(qi_path, e))?;
        let sens = File::create(sensitive_path).map_err(|e| Error::io(sensitive_path, e))?;
        self.write_to(qi, sens)
    }

    /// QI lines follow row-id order; sensitive lines are sorted by group then value.
    pub fn write_to<W1: Write, W2: Write>(&self, qi: W1, sensitive: W2) -> Result<()> {
        let mut w = csv::Writer::from_writer(qi);
        let mut header: Vec<&str> = self.schema.qi_attributes().iter().map(String::as_str).collect();
        header.push(GID_COLUMN);
        w.write_record(&header)?;
        for (id, row) in self.qi_rows.iter().enumerate() {
            let gid = self.groups[self.row_group[id]].gid.to_string();
            w.write_record(row.iter().map(String::as_str).chain(std::iter::once(gid.as_str())))?;
        }
        w.flush().map_err(|e| Error::io("<qi table>", e))?;

        let mut w = csv::Writer::from_writer(sensitive);
        w.write_record([GID_COLUMN, self.schema.sensitive_attribute()])?;
        let mut order: Vec<&AGroup> = self.groups.iter().collect();
        order.sort_by_key(|g| g.gid);
        for g in order {
            let gid = g.gid.to_string();
            for v in &g.sensitive {
                w.write_record([gid.as_str(), v.as_str()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<sensitive table>", e))?;
        Ok(())
    }
}

fn anonymized_attributes(schema: &Schema) -> Vec<String> {
    let mut attrs = schema.qi_attributes().to_vec();
    attrs.push(schema.sensitive_attribute().to_string());
    attrs
}

fn parse_gid(s: &str) -> Result<u64> {
    s.parse().map_err(|_| Error::InvalidGid(s.to_string()))
}

pub fn load_anonymized(
    qi_path: impl AsRef<Path>,
    sensitive_path: impl AsRef<Path>,
    config: &DatasetConfig,
) -> Result<AnonymizedDataset> {
    let (qi_path, sensitive_path) = (qi_path.as_ref(), sensitive_path.as_ref());
    let qi = File::open(qi_path).map_err(|e| Error::io(qi_path, e))?;
    let sens = File::open(sensitive_path).map_err(|e| Error::io(sensitive_path, e))?;
    read_anonymized(qi, sens, config)
}

/// Reads a QI/sensitive pair. Row ids follow QI-file line order; groups are
/// ordered by ascending GID.
pub fn read_anonymized<R1: Read, R2: Read>(
    qi: R1,
    sensitive: R2,
    config: &DatasetConfig,
) -> Result<AnonymizedDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(qi);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let gid_pos = header
        .iter()
        .position(|h| h == GID_COLUMN)
        .ok_or_else(|| Error::MissingAttribute(GID_COLUMN.into()))?;
    let mut attributes: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != gid_pos)
        .map(|(_, h)| h.clone())
        .collect();
    if attributes.contains(&config.sensitive_attribute) {
        return Err(Error::Schema(format!(
            "QI file must not contain the sensitive attribute `{}`",
            config.sensitive_attribute
        )));
    }
    for q in &config.qi_attributes {
        if !attributes.contains(q) {
            return Err(Error::MissingAttribute(q.clone()));
        }
    }
    attributes.retain(|a| config.qi_attributes.contains(a));
    attributes.push(config.sensitive_attribute.clone());
    let schema = config.schema(attributes)?;
    let columns: Vec<usize> = schema
        .qi_attributes()
        .iter()
        .map(|q| header.iter().position(|h| h == q).unwrap())
        .collect();

    let mut qi_rows = Vec::new();
    let mut members: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        if let Some(marker) = &config.missing_marker {
            if record.iter().any(|v| v == marker) {
                return Err(Error::MissingValue {
                    line,
                    marker: marker.clone(),
                });
            }
        }
        let gid = parse_gid(&record[gid_pos])?;
        members.entry(gid).or_default().push(qi_rows.len());
        qi_rows.push(columns.iter().map(|&c| record[c].to_string()).collect());
    }
    if qi_rows.is_empty() {
        return Err(Error::EmptyFile(Default::default()));
    }

    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(sensitive);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let sgid = header
        .iter()
        .position(|h| h == GID_COLUMN)
        .ok_or_else(|| Error::MissingAttribute(GID_COLUMN.into()))?;
    let sval = header
        .iter()
        .position(|h| *h == config.sensitive_attribute)
        .ok_or_else(|| Error::MissingAttribute(config.sensitive_attribute.clone()))?;
    let mut sensitive: BTreeMap<u64, Vec<String>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        let gid = parse_gid(&record[sgid])?;
        sensitive
            .entry(gid)
            .or_default()
            .push(record[sval].to_string());
    }

    if let Some(gid) = sensitive.keys().find(|g| !members.contains_key(g)) {
        return Err(Error::GidMismatch {
            gid: *gid,
            present_in: "sensitive",
        });
    }
    let mut groups = Vec::with_capacity(members.len());
    for (gid, m) in members {
        let s = sensitive.remove(&gid).ok_or(Error::GidMismatch {
            gid,
            present_in: "QI",
        })?;
        groups.push(AGroup::new(gid, m, s)?);
    }
    AnonymizedDataset::new(schema, qi_rows, groups)
}

/// Row ids in `group` whose QI values match `signature`, in stored order.
pub fn group_signature_members(
    dataset: &AnonymizedDataset,
    group: &AGroup,
    signature: &Signature,
) -> Vec<usize> {
    group
        .members()
        .iter()
        .copied()
        .filter(|&m| signature.matches(dataset.qi_row(m)))
        .collect()
}
