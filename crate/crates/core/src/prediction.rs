//! Worths and aggregated rankings per group, including objects that were
//! never ranked and are known only through their covariates.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::Write;

use nalgebra::DMatrix;

use crate::data::{CovariateMatrix, NewObjects};
use crate::error::{Error, Result};
use crate::likelihood::CoefficientSet;

pub const RANK_TABLE_HEADER: [&str; 5] = ["object", "group", "worth", "rank", "predicted_only"];

/// K x M' matrix of worths `exp(x_j β^(k))`.
pub fn object_worths(b: &CoefficientSet, x_all: &CovariateMatrix) -> Result<DMatrix<f64>> {
    if b.num_vars() != x_all.ncols() {
        return Err(Error::Shape(format!(
            "{} coefficients per group for {} covariates",
            b.num_vars(),
            x_all.ncols()
        )));
    }
    let k = b.num_groups();
    let n = x_all.nrows();
    let mut w = DMatrix::zeros(k, n);
    for g in 0..k {
        for (j, s) in x_all.scores(&b.beta(g)).into_iter().enumerate() {
            let v = s.exp();
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NonFinite("object worth"));
            }
            w[(g, j)] = v;
        }
    }
    Ok(w)
}

/// 1-based ranks by descending value; ties go to the lower index.
pub fn ranks_descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut ranks = vec![0; values.len()];
    for (pos, &j) in order.iter().enumerate() {
        ranks[j] = pos + 1;
    }
    ranks
}

/// Per-group worths and ranks over catalog objects followed by new objects.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub group_labels: Vec<String>,
    pub object_labels: Vec<String>,
    pub predicted_only: Vec<bool>,
    /// K x M'.
    pub worths: DMatrix<f64>,
    /// `ranks[k][j]` is the rank of object j in group k.
    pub ranks: Vec<Vec<usize>>,
}

impl RankTable {
    /// Objects of group k from best to worst.
    pub fn ordering(&self, group: usize) -> Vec<usize> {
        let mut order = vec![0; self.object_labels.len()];
        for (j, &r) in self.ranks[group].iter().enumerate() {
            order[r - 1] = j;
        }
        order
    }
}

pub fn aggregate_ranking(
    worths: &DMatrix<f64>,
    object_labels: Vec<String>,
    predicted_only: Vec<bool>,
    group_labels: Vec<String>,
) -> Result<RankTable> {
    let (k, n) = worths.shape();
    if object_labels.len() != n || predicted_only.len() != n || group_labels.len() != k {
        return Err(Error::Shape(format!(
            "{k}x{n} worths with {} objects, {} flags and {} groups",
            object_labels.len(),
            predicted_only.len(),
            group_labels.len()
        )));
    }
    if worths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::NonFinite("object worth"));
    }
    let ranks = (0..k)
        .map(|g| {
            let row: Vec<f64> = worths.row(g).iter().copied().collect();
            ranks_descending(&row)
        })
        .collect();
    Ok(RankTable {
        group_labels,
        object_labels,
        predicted_only,
        worths: worths.clone(),
        ranks,
    })
}

/// Ranks catalog objects together with new objects.
///
/// `x_train` is the matrix the coefficients were fitted on. When it carries
/// standardization statistics the raw new covariates are mapped with them.
pub fn predict_new(
    b: &CoefficientSet,
    x_train: &CovariateMatrix,
    catalog_labels: &[String],
    new_objects: &NewObjects,
    group_labels: Vec<String>,
) -> Result<RankTable> {
    if catalog_labels.len() != x_train.nrows() {
        return Err(Error::Shape(format!(
            "{} catalog labels for {} covariate rows",
            catalog_labels.len(),
            x_train.nrows()
        )));
    }
    if new_objects.labels.len() != new_objects.rows.len() {
        return Err(Error::Shape(
            "new object labels and rows differ in count".into(),
        ));
    }
    let mut seen: HashSet<&str> = catalog_labels.iter().map(String::as_str).collect();
    for label in &new_objects.labels {
        if !seen.insert(label) {
            return Err(Error::DuplicateLabel(label.clone()));
        }
    }
    let rows = new_objects
        .rows
        .iter()
        .map(|raw| match x_train.standardization() {
            Some(stats) => stats.apply(raw),
            None if raw.len() == x_train.ncols() => Ok(raw.clone()),
            None => Err(Error::Shape(format!(
                "new covariate vector of length {}, expected {}",
                raw.len(),
                x_train.ncols()
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    let x_all = x_train.with_appended_rows(&rows)?;
    let worths = object_worths(b, &x_all)?;
    let mut labels = catalog_labels.to_vec();
    labels.extend(new_objects.labels.iter().cloned());
    let mut flags = vec![false; catalog_labels.len()];
    flags.extend(std::iter::repeat_n(true, new_objects.labels.len()));
    aggregate_ranking(&worths, labels, flags, group_labels)
}

/// `object,group,worth,rank,predicted_only`, grouped by group in rank order.
pub fn write_rank_table<W: Write>(table: &RankTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RANK_TABLE_HEADER)?;
    for (g, group) in table.group_labels.iter().enumerate() {
        for j in table.ordering(g) {
            w.write_record([
                table.object_labels[j].as_str(),
                group.as_str(),
                &format!("{:.10e}", table.worths[(g, j)]),
                &table.ranks[g][j].to_string(),
                if table.predicted_only[j] {
                    "true"
                } else {
                    "false"
                },
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
