//! Plackett-Luce ranking probabilities with object covariates, the
//! multi-group negative log likelihood, its gradient and its block-diagonal
//! Hessian.
//!
//! A ranking `σ = (σ_1, …, σ_m)` of objects with scores `s_l = x_{σ_l}·β`
//! has probability `∏_j exp(s_j) / Σ_{l≥j} exp(s_l)`. Every stage normalizer
//! is evaluated as a log-sum-exp relative to the running maximum of the
//! remaining scores, so scores of any magnitude are safe. The remaining set at
//! stage `j` is exactly `{σ_j, …, σ_m}`; unranked catalog objects never
//! compete.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{CovariateMatrix, PartialRanking, RankingDataset};
use crate::error::{Error, Result};

/// K x p coefficient matrix; row k holds the coefficients of group k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct CoefficientSet(DMatrix<f64>);

impl From<CoefficientSet> for Vec<Vec<f64>> {
    fn from(b: CoefficientSet) -> Self {
        (0..b.num_groups()).map(|k| b.beta(k)).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for CoefficientSet {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl CoefficientSet {
    pub fn zeros(groups: usize, vars: usize) -> Self {
        Self(DMatrix::zeros(groups, vars))
    }

    pub fn from_matrix(b: DMatrix<f64>) -> Result<Self> {
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficient matrix"));
        }
        Ok(Self(b))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Shape("coefficient rows differ in length".into()));
        }
        Self::from_matrix(DMatrix::from_fn(k, p, |i, j| rows[i][j]))
    }

    /// Inverse of [`CoefficientSet::to_vector`].
    pub fn from_vector(groups: usize, vars: usize, v: &DVector<f64>) -> Result<Self> {
        if v.len() != groups * vars {
            return Err(Error::Shape(format!(
                "vector of length {} for {groups}x{vars} coefficients",
                v.len()
            )));
        }
        Self::from_matrix(DMatrix::from_fn(groups, vars, |k, q| v[k * vars + q]))
    }

    /// Group-major stacking: entry `k * p + q` is β_q^(k).
    pub fn to_vector(&self) -> DVector<f64> {
        let (k, p) = self.0.shape();
        DVector::from_fn(k * p, |i, _| self.0[(i / p, i % p)])
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn num_groups(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_vars(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, group: usize, var: usize) -> f64 {
        self.0[(group, var)]
    }

    /// β^(k) as a contiguous vector.
    pub fn beta(&self, group: usize) -> Vec<f64> {
        self.0.row(group).iter().copied().collect()
    }

    pub fn max_abs_diff(&self, other: &CoefficientSet) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Rows permuted so that new row `i` is old row `order[i]`.
    pub fn reorder_groups(&self, order: &[usize]) -> CoefficientSet {
        Self(DMatrix::from_fn(order.len(), self.num_vars(), |i, q| {
            self.0[(order[i], q)]
        }))
    }
}

/// `log Σ_{l≥j} exp(s_l)` for every stage `j`, accumulated from the back
/// with the running maximum subtracted.
pub fn stage_log_normalizers(scores: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; scores.len()];
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for (j, &s) in scores.iter().enumerate().rev() {
        if s > max {
            sum *= (max - s).exp();
            max = s;
        }
        sum += (s - max).exp();
        out[j] = max + sum.ln();
    }
    out
}

/// Log probability of observing the scores in the given order.
pub fn log_probability_from_scores(scores: &[f64]) -> f64 {
    stage_log_normalizers(scores)
        .iter()
        .zip(scores)
        .map(|(lse, s)| s - lse)
        .sum()
}

fn ranking_scores(ranking: &PartialRanking, object_scores: &[f64]) -> Vec<f64> {
    ranking
        .objects()
        .iter()
        .map(|&o| object_scores[o])
        .collect()
}

fn check_ranking(ranking: &PartialRanking, beta: &[f64], x: &CovariateMatrix) -> Result<()> {
    if beta.len() != x.ncols() {
        return Err(Error::Shape(format!(
            "coefficient vector of length {} for {} variables",
            beta.len(),
            x.ncols()
        )));
    }
    if ranking.objects().iter().any(|&o| o >= x.nrows()) {
        return Err(Error::Shape("ranking references a row outside X".into()));
    }
    Ok(())
}

pub fn log_ranking_probability(
    ranking: &PartialRanking,
    beta: &[f64],
    x: &CovariateMatrix,
) -> Result<f64> {
    check_ranking(ranking, beta, x)?;
    let scores: Vec<f64> = ranking
        .objects()
        .iter()
        .map(|&o| x.row(o).iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect();
    let lp = log_probability_from_scores(&scores);
    if !lp.is_finite() || lp > 1e-12 {
        return Err(Error::NonFinite("ranking log probability"));
    }
    Ok(lp.min(0.0))
}

/// Probability of a ranking under coefficients `beta`, in (0, 1].
pub fn ranking_probability(
    ranking: &PartialRanking,
    beta: &[f64],
    x: &CovariateMatrix,
) -> Result<f64> {
    Ok(log_ranking_probability(ranking, beta, x)?.exp())
}

fn check_shapes(b: &CoefficientSet, data: &RankingDataset, x: &CovariateMatrix) -> Result<()> {
    if b.num_groups() != data.num_groups() {
        return Err(Error::Shape(format!(
            "{} coefficient rows for {} groups",
            b.num_groups(),
            data.num_groups()
        )));
    }
    if b.num_vars() != x.ncols() {
        return Err(Error::Shape(format!(
            "{} coefficient columns for {} variables",
            b.num_vars(),
            x.ncols()
        )));
    }
    if x.nrows() != data.num_objects() {
        return Err(Error::Shape(format!(
            "{} covariate rows for a catalog of {} objects",
            x.nrows(),
            data.num_objects()
        )));
    }
    Ok(())
}

/// Value, gradient and (optionally) Hessian of one group's negative log
/// likelihood.
#[derive(Debug, Clone)]
pub struct GroupDerivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: Option<DMatrix<f64>>,
}

/// Single pass over a group's rankings.
///
/// Per ranking the stages are visited back to front while weighted sums
/// `Σ w_l`, `Σ w_l x_l` and `Σ w_l x_l x_lᵀ` are maintained relative to the
/// running maximum score, so each stage costs O(p²) at most.
pub fn group_derivatives(
    rankings: &[PartialRanking],
    beta: &[f64],
    x: &CovariateMatrix,
    with_hessian: bool,
) -> GroupDerivatives {
    let (m, p) = (x.nrows(), x.ncols());
    let stages: usize = rankings.iter().map(|r| r.len()).sum();
    // Object-level aggregation pays M²p + Mp² once instead of 2p² per stage.
    if with_hessian && m * m * p + m * p * p < 2 * stages * p * p {
        aggregated_derivatives(rankings, beta, x)
    } else {
        direct_derivatives(rankings, beta, x, with_hessian)
    }
}

/// Accumulates per object the summed choice probabilities, the number of
/// times it was chosen and the pairwise probability products `W`, then forms
/// `Xᵀ(π − chosen)` and `Xᵀ(diag(π) − W)X`. Final single-object stages
/// contribute nothing and are skipped.
fn aggregated_derivatives(
    rankings: &[PartialRanking],
    beta: &[f64],
    x: &CovariateMatrix,
) -> GroupDerivatives {
    let (m, p) = (x.nrows(), x.ncols());
    let object_scores = x.scores(beta);
    let mut value = 0.0;
    let mut pi = vec![0.0; m];
    let mut net = vec![0.0; m];
    let mut w = DMatrix::<f64>::zeros(m, m);
    let mut probs = Vec::new();
    for ranking in rankings {
        let objs = ranking.objects();
        let scores = ranking_scores(ranking, &object_scores);
        let lse = stage_log_normalizers(&scores);
        for j in 0..objs.len().saturating_sub(1) {
            value += lse[j] - scores[j];
            net[objs[j]] -= 1.0;
            probs.clear();
            probs.extend(scores[j..].iter().map(|s| (s - lse[j]).exp()));
            for (a, &oa) in objs[j..].iter().enumerate() {
                pi[oa] += probs[a];
                net[oa] += probs[a];
                for (b, &ob) in objs[j..].iter().enumerate() {
                    w[(oa, ob)] += probs[a] * probs[b];
                }
            }
        }
    }
    let xm = x.to_matrix();
    let gradient = xm.transpose() * DVector::from_vec(net);
    for o in 0..m {
        w[(o, o)] -= pi[o];
    }
    let mut h = -(xm.transpose() * w * &xm);
    for r in 0..p {
        for col in (r + 1)..p {
            let avg = 0.5 * (h[(r, col)] + h[(col, r)]);
            h[(r, col)] = avg;
            h[(col, r)] = avg;
        }
    }
    GroupDerivatives {
        value,
        gradient,
        hessian: Some(h),
    }
}

fn direct_derivatives(
    rankings: &[PartialRanking],
    beta: &[f64],
    x: &CovariateMatrix,
    with_hessian: bool,
) -> GroupDerivatives {
    let p = x.ncols();
    let object_scores = x.scores(beta);
    let mut value = 0.0;
    let mut grad = vec![0.0; p];
    let mut hess = if with_hessian {
        vec![0.0; p * p]
    } else {
        Vec::new()
    };

    let mut s1 = vec![0.0; p];
    let mut s2 = if with_hessian {
        vec![0.0; p * p]
    } else {
        Vec::new()
    };
    let mut mean = vec![0.0; p];

    for ranking in rankings {
        let objs = ranking.objects();
        s1.iter_mut().for_each(|v| *v = 0.0);
        s2.iter_mut().for_each(|v| *v = 0.0);
        let mut s0 = 0.0;
        let mut max = f64::NEG_INFINITY;
        for &o in objs.iter().rev() {
            let s = object_scores[o];
            let xo = x.row(o);
            if s > max {
                let f = (max - s).exp();
                s0 *= f;
                s1.iter_mut().for_each(|v| *v *= f);
                s2.iter_mut().for_each(|v| *v *= f);
                max = s;
            }
            let w = (s - max).exp();
            s0 += w;
            for (a, xa) in s1.iter_mut().zip(xo) {
                *a += w * xa;
            }
            if with_hessian {
                for (r, xr) in xo.iter().enumerate() {
                    let wxr = w * xr;
                    for (c, xc) in xo.iter().enumerate() {
                        s2[r * p + c] += wxr * xc;
                    }
                }
            }
            value += max + s0.ln() - s;
            for q in 0..p {
                mean[q] = s1[q] / s0;
                grad[q] += mean[q] - xo[q];
            }
            if with_hessian {
                for r in 0..p {
                    for c in 0..p {
                        hess[r * p + c] += s2[r * p + c] / s0 - mean[r] * mean[c];
                    }
                }
            }
        }
    }

    let hessian = with_hessian.then(|| {
        let mut h = DMatrix::from_row_slice(p, p, &hess);
        // exact symmetry; the two triangles only differ by roundoff
        for r in 0..p {
            for c in (r + 1)..p {
                let avg = 0.5 * (h[(r, c)] + h[(c, r)]);
                h[(r, c)] = avg;
                h[(c, r)] = avg;
            }
        }
        h
    });
    GroupDerivatives {
        value,
        gradient: DVector::from_vec(grad),
        hessian,
    }
}

/// Negative log likelihood ℓ(B) summed over all groups.
pub fn neg_log_likelihood(
    b: &CoefficientSet,
    data: &RankingDataset,
    x: &CovariateMatrix,
) -> Result<f64> {
    check_shapes(b, data, x)?;
    let mut total = 0.0;
    for (k, group) in data.groups().iter().enumerate() {
        let scores = x.scores(&b.beta(k));
        for ranking in group.rankings() {
            total -= log_probability_from_scores(&ranking_scores(ranking, &scores));
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("negative log likelihood"));
    }
    Ok(total)
}

/// ∇ℓ as a K x p matrix; row k only depends on group k.
pub fn gradient(
    b: &CoefficientSet,
    data: &RankingDataset,
    x: &CovariateMatrix,
) -> Result<DMatrix<f64>> {
    check_shapes(b, data, x)?;
    let (k, p) = (b.num_groups(), b.num_vars());
    let mut g = DMatrix::zeros(k, p);
    for (gi, group) in data.groups().iter().enumerate() {
        let d = group_derivatives(group.rankings(), &b.beta(gi), x, false);
        g.row_mut(gi).copy_from(&d.gradient.transpose());
    }
    Ok(g)
}

/// The p x p Hessian block of group `k`.
pub fn group_hessian(
    b: &CoefficientSet,
    data: &RankingDataset,
    x: &CovariateMatrix,
    k: usize,
) -> Result<DMatrix<f64>> {
    check_shapes(b, data, x)?;
    let group = data
        .groups()
        .get(k)
        .ok_or_else(|| Error::Shape(format!("group index {k} out of range")))?;
    Ok(group_derivatives(group.rankings(), &b.beta(k), x, true)
        .hessian
        .expect("hessian requested"))
}

/// ∇²ℓ as a Kp x Kp block-diagonal matrix in group-major order.
pub fn hessian(
    b: &CoefficientSet,
    data: &RankingDataset,
    x: &CovariateMatrix,
) -> Result<DMatrix<f64>> {
    Ok(evaluate(b, data, x)?.hessian)
}

/// ℓ, ∇ℓ (group-major vector) and ∇²ℓ at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

pub fn evaluate(
    b: &CoefficientSet,
    data: &RankingDataset,
    x: &CovariateMatrix,
) -> Result<Evaluation> {
    check_shapes(b, data, x)?;
    let (k, p) = (b.num_groups(), b.num_vars());
    let mut value = 0.0;
    let mut grad = DVector::zeros(k * p);
    let mut hess = DMatrix::zeros(k * p, k * p);
    for (gi, group) in data.groups().iter().enumerate() {
        let d = group_derivatives(group.rankings(), &b.beta(gi), x, true);
        value += d.value;
        grad.rows_mut(gi * p, p).copy_from(&d.gradient);
        hess.view_mut((gi * p, gi * p), (p, p))
            .copy_from(d.hessian.as_ref().expect("hessian requested"));
    }
    if !value.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("likelihood derivatives"));
    }
    Ok(Evaluation {
        value,
        gradient: grad,
        hessian: hess,
    })
}
