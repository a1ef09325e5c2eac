//! Ranking and covariate data: catalog, partial rankings, grouped datasets,
//! object-variable matrices, file ingestion and the identifiability check.
//!
//! Objects are referred to by string label in files and by dense 0-based
//! index everywhere else. The catalog order is the row order of the
//! covariate file.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::CoefficientSet;

/// Relative singular-value cutoff used for the numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

pub const RANKINGS_HEADER: [&str; 4] = ["group", "ranker", "position", "object"];

/// Ordered set of object labels with a label -> index lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectCatalog {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl ObjectCatalog {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::CatalogTooSmall(labels.len()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), i).is_some() {
                return Err(Error::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }
}

/// A strict ordering of distinct objects, most preferred first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartialRanking(Vec<usize>);

impl PartialRanking {
    pub fn new(ordering: Vec<usize>, catalog_size: usize) -> Result<Self> {
        if ordering.is_empty() {
            return Err(Error::InvalidRanking("empty ordering".into()));
        }
        if ordering.len() > catalog_size {
            return Err(Error::InvalidRanking(format!(
                "ordering of length {} exceeds catalog size {catalog_size}",
                ordering.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ordering.len());
        for &obj in &ordering {
            if obj >= catalog_size {
                return Err(Error::InvalidRanking(format!(
                    "object index {obj} out of range for catalog of {catalog_size}"
                )));
            }
            if !seen.insert(obj) {
                return Err(Error::InvalidRanking(format!(
                    "object index {obj} repeated"
                )));
            }
        }
        Ok(Self(ordering))
    }

    pub fn objects(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One named group of rankers.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingGroup {
    label: String,
    ranker_ids: Vec<String>,
    rankings: Vec<PartialRanking>,
}

impl RankingGroup {
    pub fn new(label: impl Into<String>, rankings: Vec<PartialRanking>) -> Self {
        let ranker_ids = (1..=rankings.len()).map(|i| i.to_string()).collect();
        Self::with_ranker_ids(label, ranker_ids, rankings)
    }

    pub fn with_ranker_ids(
        label: impl Into<String>,
        ranker_ids: Vec<String>,
        rankings: Vec<PartialRanking>,
    ) -> Self {
        assert_eq!(ranker_ids.len(), rankings.len());
        Self {
            label: label.into(),
            ranker_ids,
            rankings,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn ranker_ids(&self) -> &[String] {
        &self.ranker_ids
    }

    pub fn rankings(&self) -> &[PartialRanking] {
        &self.rankings
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }
}

/// K groups of partial rankings over a shared catalog of `n_objects`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingDataset {
    groups: Vec<RankingGroup>,
    n_objects: usize,
}

impl RankingDataset {
    pub fn new(groups: Vec<RankingGroup>, n_objects: usize) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidRanking("dataset has no groups".into()));
        }
        let mut labels = HashSet::new();
        for group in &groups {
            if group.is_empty() {
                return Err(Error::InvalidRanking(format!(
                    "group `{}` has no rankers",
                    group.label
                )));
            }
            if !labels.insert(group.label.as_str()) {
                return Err(Error::InvalidRanking(format!(
                    "group label `{}` repeated",
                    group.label
                )));
            }
            for ranking in &group.rankings {
                if ranking.objects().iter().any(|&o| o >= n_objects) {
                    return Err(Error::InvalidRanking(format!(
                        "group `{}` references an object outside the catalog",
                        group.label
                    )));
                }
            }
        }
        Ok(Self { groups, n_objects })
    }

    pub fn groups(&self) -> &[RankingGroup] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_objects(&self) -> usize {
        self.n_objects
    }

    pub fn group_labels(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.label.clone()).collect()
    }

    /// Σ_k n_k.
    pub fn total_rankings(&self) -> usize {
        self.groups.iter().map(RankingGroup::len).sum()
    }

    /// Per group, the number of catalog objects that appear in at least one ranking.
    pub fn coverage(&self) -> Vec<usize> {
        self.groups
            .iter()
            .map(|g| {
                let mut seen = vec![false; self.n_objects];
                for r in &g.rankings {
                    for &o in r.objects() {
                        seen[o] = true;
                    }
                }
                seen.into_iter().filter(|&s| s).count()
            })
            .collect()
    }

    /// Groups in which some catalog object is never ranked.
    pub fn incomplete_groups(&self) -> Vec<&str> {
        self.coverage()
            .into_iter()
            .zip(&self.groups)
            .filter(|(c, _)| *c < self.n_objects)
            .map(|(_, g)| g.label.as_str())
            .collect()
    }

    /// All rankings concatenated into a single group, in group order.
    pub fn pooled(&self, label: &str) -> RankingDataset {
        let mut ids = Vec::with_capacity(self.total_rankings());
        let mut rankings = Vec::with_capacity(self.total_rankings());
        for g in &self.groups {
            for (id, r) in g.ranker_ids.iter().zip(&g.rankings) {
                ids.push(format!("{}/{}", g.label, id));
                rankings.push(r.clone());
            }
        }
        RankingDataset {
            groups: vec![RankingGroup::with_ranker_ids(label, ids, rankings)],
            n_objects: self.n_objects,
        }
    }

    /// Reorders groups: the new group `i` is the old group `order[i]`.
    pub fn reorder_groups(&self, order: &[usize]) -> Result<RankingDataset> {
        if order.len() != self.groups.len() {
            return Err(Error::Shape(format!(
                "group permutation of length {} for {} groups",
                order.len(),
                self.groups.len()
            )));
        }
        let groups = order
            .iter()
            .map(|&i| {
                self.groups
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Shape(format!("group index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        RankingDataset::new(groups, self.n_objects)
    }
}

/// Column statistics used to map raw covariates to the standardized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.means.len() {
            return Err(Error::Shape(format!(
                "covariate vector of length {} for {} variables",
                raw.len(),
                self.means.len()
            )));
        }
        Ok(raw
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    /// Coefficients on the original covariate scale.
    pub fn raw_coefficients(&self, standardized: &[f64]) -> Vec<f64> {
        standardized
            .iter()
            .zip(&self.sds)
            .map(|(b, s)| b / s)
            .collect()
    }
}

/// M x p object-variable matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    variable_names: Vec<String>,
    standardization: Option<Standardization>,
}

impl CovariateMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, variable_names: Vec<String>) -> Result<Self> {
        let n_cols = variable_names.len();
        if n_cols == 0 {
            return Err(Error::Shape(
                "at least one object variable is required".into(),
            ));
        }
        let n_rows = rows.len();
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} values, expected {n_cols}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        Self::from_parts(data, n_rows, variable_names)
    }

    pub fn from_matrix(values: &DMatrix<f64>, variable_names: Vec<String>) -> Result<Self> {
        if values.ncols() != variable_names.len() {
            return Err(Error::Shape(format!(
                "{} columns but {} variable names",
                values.ncols(),
                variable_names.len()
            )));
        }
        let rows = values
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        Self::from_rows(rows, variable_names)
    }

    /// Unnamed variables `x1..xp`.
    pub fn from_matrix_unnamed(values: &DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|q| format!("x{q}")).collect();
        Self::from_matrix(values, names)
    }

    fn from_parts(data: Vec<f64>, n_rows: usize, variable_names: Vec<String>) -> Result<Self> {
        let n_cols = variable_names.len();
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCovariate {
                object: format!("row {}", pos / n_cols),
                variable: variable_names[pos % n_cols].clone(),
            });
        }
        Ok(Self {
            data,
            n_rows,
            n_cols,
            variable_names,
            standardization: None,
        })
    }

    pub fn nrows(&self) -> usize {
        self.n_rows
    }

    pub fn ncols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, q: usize) -> f64 {
        self.data[i * self.n_cols + q]
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardization.is_some()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_rows, self.n_cols, &self.data)
    }

    /// Row scores `x_i . beta` for every object.
    pub fn scores(&self, beta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(beta.len(), self.n_cols);
        self.data
            .chunks_exact(self.n_cols)
            .map(|row| row.iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect()
    }

    /// Appends rows (already on this matrix's scale).
    pub fn with_appended_rows(&self, rows: &[Vec<f64>]) -> Result<CovariateMatrix> {
        let mut data = self.data.clone();
        for row in rows {
            if row.len() != self.n_cols {
                return Err(Error::Shape(format!(
                    "new covariate vector of length {}, expected {}",
                    row.len(),
                    self.n_cols
                )));
            }
            data.extend_from_slice(row);
        }
        let mut out =
            Self::from_parts(data, self.n_rows + rows.len(), self.variable_names.clone())?;
        out.standardization = self.standardization.clone();
        Ok(out)
    }

    /// Column-wise z-scores with the sample (n - 1) standard deviation.
    ///
    /// Applied to an already standardized matrix the stored statistics are
    /// composed so that they still map the original raw scale.
    pub fn standardize(&self) -> Result<CovariateMatrix> {
        if self.n_rows < 2 {
            return Err(Error::Shape(
                "standardization needs at least two rows".into(),
            ));
        }
        let n = self.n_rows as f64;
        let mut means = vec![0.0; self.n_cols];
        let mut sds = vec![0.0; self.n_cols];
        for q in 0..self.n_cols {
            let mean = (0..self.n_rows).map(|i| self.get(i, q)).sum::<f64>() / n;
            let var = (0..self.n_rows)
                .map(|i| (self.get(i, q) - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            let sd = var.sqrt();
            let scale = mean.abs().max(1.0);
            if sd.is_nan() || sd <= 1e-12 * scale {
                return Err(Error::ConstantColumn(self.variable_names[q].clone()));
            }
            means[q] = mean;
            sds[q] = sd;
        }
        let data = self
            .data
            .chunks_exact(self.n_cols)
            .flat_map(|row| {
                row.iter()
                    .zip(means.iter().zip(&sds))
                    .map(|(x, (m, s))| (x - m) / s)
                    .collect::<Vec<_>>()
            })
            .collect();
        let standardization = match &self.standardization {
            None => Standardization { means, sds },
            Some(prev) => Standardization {
                means: prev
                    .means
                    .iter()
                    .zip(&prev.sds)
                    .zip(&means)
                    .map(|((m0, s0), m1)| m0 + s0 * m1)
                    .collect(),
                sds: prev.sds.iter().zip(&sds).map(|(s0, s1)| s0 * s1).collect(),
            },
        };
        Ok(CovariateMatrix {
            data,
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            variable_names: self.variable_names.clone(),
            standardization: Some(standardization),
        })
    }
}

/// Outcome of the full-column-rank check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifiabilityReport {
    pub rank: usize,
    pub p: usize,
    pub n_objects: usize,
    pub singular_values: Vec<f64>,
    pub passed: bool,
}

/// Numerical rank of X: singular values above `tol` times the largest.
/// Coefficients are identifiable iff the rank equals p.
pub fn check_identifiability(x: &CovariateMatrix, tol: f64) -> IdentifiabilityReport {
    let svd = x.to_matrix().svd(false, false);
    let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let largest = singular_values.first().copied().unwrap_or(0.0);
    let rank = if largest > 0.0 {
        singular_values
            .iter()
            .filter(|&&s| s > tol * largest)
            .count()
    } else {
        0
    };
    IdentifiabilityReport {
        rank,
        p: x.ncols(),
        n_objects: x.nrows(),
        singular_values,
        passed: rank == x.ncols(),
    }
}

fn sniff_delimiter(bytes: &[u8]) -> u8 {
    let first_line = bytes.split(|&b| b == b'\n').next().unwrap_or(&[]);
    if first_line.contains(&b',') {
        b','
    } else if first_line.contains(&b'\t') {
        b'\t'
    } else if first_line.contains(&b';') {
        b';'
    } else {
        b','
    }
}

fn csv_reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(sniff_delimiter(bytes))
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes)
}

fn read_all<R: Read>(mut reader: R) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    Ok(buf)
}

fn record_no(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.record())
}

/// Parses a long-format rankings file: `group,ranker,position,object`.
///
/// Groups and rankers keep their order of first appearance.
pub fn read_rankings<R: Read>(reader: R, catalog: &ObjectCatalog) -> Result<RankingDataset> {
    let bytes = read_all(reader)?;
    let mut rdr = csv_reader(&bytes);
    let headers = rdr.headers()?.clone();
    let found: Vec<String> = headers.iter().map(str::to_ascii_lowercase).collect();
    if found != RANKINGS_HEADER {
        return Err(Error::Malformed {
            record: 0,
            message: format!(
                "expected header `{}`, found `{}`",
                RANKINGS_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    type Lists = Vec<(String, BTreeMap<usize, usize>)>;
    let mut group_order: Vec<(String, Lists)> = Vec::new();
    let mut group_index: HashMap<String, usize> = HashMap::new();
    let mut ranker_index: HashMap<(usize, String), usize> = HashMap::new();

    for rec in rdr.records() {
        let rec = rec?;
        let record = record_no(&rec);
        let group = &rec[0];
        let ranker = &rec[1];
        let position: usize = rec[2].parse().map_err(|_| Error::Malformed {
            record,
            message: format!("position `{}` is not a positive integer", &rec[2]),
        })?;
        if position == 0 {
            return Err(Error::Malformed {
                record,
                message: "positions start at 1".into(),
            });
        }
        if position > catalog.len() {
            return Err(Error::Malformed {
                record,
                message: format!("position {position} exceeds catalog size {}", catalog.len()),
            });
        }
        let object = catalog
            .index_of(&rec[3])
            .ok_or_else(|| Error::UnknownObject {
                object: rec[3].to_string(),
                record,
            })?;

        let g = *group_index.entry(group.to_string()).or_insert_with(|| {
            group_order.push((group.to_string(), Vec::new()));
            group_order.len() - 1
        });
        let lists = &mut group_order[g].1;
        let r = *ranker_index
            .entry((g, ranker.to_string()))
            .or_insert_with(|| {
                lists.push((ranker.to_string(), BTreeMap::new()));
                lists.len() - 1
            });
        if lists[r].1.insert(position, object).is_some() {
            return Err(Error::DuplicatePosition {
                group: group.to_string(),
                ranker: ranker.to_string(),
                position,
            });
        }
    }

    let mut groups = Vec::with_capacity(group_order.len());
    for (label, lists) in group_order {
        let mut ids = Vec::with_capacity(lists.len());
        let mut rankings = Vec::with_capacity(lists.len());
        for (ranker, positions) in lists {
            let len = positions.len();
            if let Some(missing) = (1..=len).find(|p| !positions.contains_key(p)) {
                return Err(Error::PositionGap {
                    group: label,
                    ranker,
                    len,
                    missing,
                });
            }
            let ordering: Vec<usize> = positions.into_values().collect();
            let mut seen = HashSet::with_capacity(len);
            if let Some(&dup) = ordering.iter().find(|&&o| !seen.insert(o)) {
                return Err(Error::DuplicateObject {
                    group: label,
                    ranker,
                    object: catalog.label(dup).to_string(),
                });
            }
            rankings.push(PartialRanking::new(ordering, catalog.len())?);
            ids.push(ranker);
        }
        groups.push(RankingGroup::with_ranker_ids(label, ids, rankings));
    }
    if groups.is_empty() {
        return Err(Error::Malformed {
            record: 0,
            message: "rankings file contains no rows".into(),
        });
    }
    RankingDataset::new(groups, catalog.len())
}

pub fn load_rankings(path: impl AsRef<Path>, catalog: &ObjectCatalog) -> Result<RankingDataset> {
    read_rankings(File::open(path)?, catalog)
}

/// Writes the long format read by [`read_rankings`].
pub fn write_rankings<W: Write>(
    dataset: &RankingDataset,
    catalog: &ObjectCatalog,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RANKINGS_HEADER)?;
    for g in dataset.groups() {
        for (id, r) in g.ranker_ids().iter().zip(g.rankings()) {
            for (pos, &obj) in r.objects().iter().enumerate() {
                let position = (pos + 1).to_string();
                w.write_record([
                    g.label(),
                    id.as_str(),
                    position.as_str(),
                    catalog.label(obj),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_value(field: &str, object: &str, variable: &str, record: u64) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::Malformed {
        record,
        message: format!("`{field}` is not a number (object `{object}`, variable `{variable}`)"),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFiniteCovariate {
            object: object.to_string(),
            variable: variable.to_string(),
        });
    }
    Ok(v)
}

fn covariate_header(rdr: &mut csv::Reader<&[u8]>) -> Result<Vec<String>> {
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || !headers[0].eq_ignore_ascii_case("object") {
        return Err(Error::Malformed {
            record: 0,
            message: "covariate header must be `object,<var1>,...,<varp>`".into(),
        });
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(Error::Malformed {
            record: 0,
            message: format!("variable `{dup}` listed twice"),
        });
    }
    Ok(names)
}

/// Parses `object,<var1>,...,<varp>`; the catalog order is the row order.
pub fn read_covariates<R: Read>(reader: R) -> Result<(ObjectCatalog, CovariateMatrix)> {
    let bytes = read_all(reader)?;
    let mut rdr = csv_reader(&bytes);
    let names = covariate_header(&mut rdr)?;
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let record = record_no(&rec);
        let object = rec[0].to_string();
        let row = rec
            .iter()
            .skip(1)
            .zip(&names)
            .map(|(f, v)| parse_value(f, &object, v, record))
            .collect::<Result<Vec<_>>>()?;
        labels.push(object);
        rows.push(row);
    }
    let catalog = ObjectCatalog::new(labels)?;
    let x = CovariateMatrix::from_rows(rows, names)?;
    Ok((catalog, x))
}

pub fn load_covariates(path: impl AsRef<Path>) -> Result<(ObjectCatalog, CovariateMatrix)> {
    read_covariates(File::open(path)?)
}

/// Raw covariates for objects outside the training catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct NewObjects {
    pub labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Parses a covariate file for new objects, reordering columns to
/// `variable_names`. Unknown or missing variable columns are errors.
pub fn read_new_objects<R: Read>(reader: R, variable_names: &[String]) -> Result<NewObjects> {
    let bytes = read_all(reader)?;
    let mut rdr = csv_reader(&bytes);
    let names = covariate_header(&mut rdr)?;
    if let Some(unknown) = names.iter().find(|n| !variable_names.contains(n)) {
        return Err(Error::Malformed {
            record: 0,
            message: format!("unknown variable column `{unknown}`"),
        });
    }
    let columns = variable_names
        .iter()
        .map(|v| {
            names
                .iter()
                .position(|n| n == v)
                .ok_or_else(|| Error::Malformed {
                    record: 0,
                    message: format!("missing variable column `{v}`"),
                })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut labels: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let record = record_no(&rec);
        let object = rec[0].to_string();
        if !seen.insert(object.clone()) {
            return Err(Error::DuplicateLabel(object));
        }
        let row = columns
            .iter()
            .zip(variable_names)
            .map(|(&c, v)| parse_value(&rec[c + 1], &object, v, record))
            .collect::<Result<Vec<_>>>()?;
        labels.push(object);
        rows.push(row);
    }
    Ok(NewObjects { labels, rows })
}

/// Checks that a covariate matrix matches a dataset's catalog.
pub fn check_compatible(data: &RankingDataset, x: &CovariateMatrix) -> Result<()> {
    if x.nrows() != data.num_objects() {
        return Err(Error::Shape(format!(
            "covariate matrix has {} rows for a catalog of {} objects",
            x.nrows(),
            data.num_objects()
        )));
    }
    Ok(())
}

pub fn write_covariates<W: Write>(
    catalog_labels: &[String],
    x: &CovariateMatrix,
    writer: W,
) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["object".to_string()];
    header.extend(x.variable_names().iter().cloned());
    w.write_record(&header)?;
    for (i, label) in catalog_labels.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend(x.row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()
}

pub const COEFFICIENTS_HEADER: [&str; 4] = ["group", "variable", "beta_std", "beta_raw"];

/// Fitted coefficients with their group and variable labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub groups: Vec<String>,
    pub variables: Vec<String>,
    /// On the scale the model was fitted on.
    pub coefficients: CoefficientSet,
}

/// Writes `group,variable,beta_std,beta_raw` in group-major order. Without
/// standardization statistics the two coefficient columns are equal.
pub fn write_coefficient_table<W: Write>(
    table: &CoefficientTable,
    standardization: Option<&Standardization>,
    writer: W,
) -> Result<()> {
    let b = &table.coefficients;
    if b.num_groups() != table.groups.len() || b.num_vars() != table.variables.len() {
        return Err(Error::Shape(format!(
            "{}x{} coefficients for {} groups and {} variables",
            b.num_groups(),
            b.num_vars(),
            table.groups.len(),
            table.variables.len()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COEFFICIENTS_HEADER)?;
    for (g, group) in table.groups.iter().enumerate() {
        let beta = b.beta(g);
        let raw = standardization.map_or_else(|| beta.clone(), |s| s.raw_coefficients(&beta));
        for (q, var) in table.variables.iter().enumerate() {
            w.write_record([
                group.as_str(),
                var.as_str(),
                &format!("{:?}", beta[q]),
                &format!("{:?}", raw[q]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the `beta_std` column of a coefficient table. Groups and variables
/// keep their order of first appearance; every pair must occur exactly once.
pub fn read_coefficient_table<R: Read>(reader: R) -> Result<CoefficientTable> {
    let bytes = read_all(reader)?;
    let mut rdr = csv_reader(&bytes);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Malformed {
                record: 0,
                message: format!("missing column `{name}`"),
            })
    };
    let (gc, vc, bc) = (column("group")?, column("variable")?, column("beta_std")?);
    let mut groups: Vec<String> = Vec::new();
    let mut variables: Vec<String> = Vec::new();
    let mut values: HashMap<(usize, usize), f64> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let record = record_no(&rec);
        let field = |c: usize| {
            rec.get(c).ok_or_else(|| Error::Malformed {
                record,
                message: "short record".into(),
            })
        };
        let (group, variable, value) = (field(gc)?, field(vc)?, field(bc)?);
        let v: f64 = value.parse().map_err(|_| Error::Malformed {
            record,
            message: format!("`{value}` is not a number"),
        })?;
        if !v.is_finite() {
            return Err(Error::NonFinite("coefficient table"));
        }
        let g = first_index(&mut groups, group);
        let q = first_index(&mut variables, variable);
        if values.insert((g, q), v).is_some() {
            return Err(Error::Malformed {
                record,
                message: format!("coefficient for `{group}` / `{variable}` given twice"),
            });
        }
    }
    if groups.is_empty() || values.len() != groups.len() * variables.len() {
        return Err(Error::Malformed {
            record: 0,
            message: format!(
                "{} coefficients for {} groups and {} variables",
                values.len(),
                groups.len(),
                variables.len()
            ),
        });
    }
    let coefficients =
        CoefficientSet::from_matrix(DMatrix::from_fn(groups.len(), variables.len(), |g, q| {
            values[&(g, q)]
        }))?;
    Ok(CoefficientTable {
        groups,
        variables,
        coefficients,
    })
}

fn first_index(list: &mut Vec<String>, item: &str) -> usize {
    match list.iter().position(|x| x == item) {
        Some(i) => i,
        None => {
            list.push(item.to_string());
            list.len() - 1
        }
    }
}
