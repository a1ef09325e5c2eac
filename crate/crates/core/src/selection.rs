//! Penalty grid construction and information-criterion model selection.
//!
//! Degrees of freedom count numerically nonzero coefficients. The MM
//! iteration never produces exact zeros, so "nonzero" means
//! `|β̂| ≥ zero_threshold`. Under the default [`DfRule::Distinct`] the
//! coefficients of one variable that are fused across groups count once.
//! Both criteria add `2ℓ(B̂)` because ℓ is the negative log likelihood.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_identifiability, CovariateMatrix, RankingDataset, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::likelihood::{neg_log_likelihood, CoefficientSet};
use crate::optimizer::{initial_estimate, run, FitControls, FitResult};
use crate::penalty::PenaltyConfig;

pub const DEFAULT_ZERO_THRESHOLD: f64 = 1e-4;
pub const DEFAULT_FUSION_THRESHOLD: f64 = 1e-4;
/// Interior grid points span `[λ_max / GRID_SPAN, λ_max]` on a log scale.
pub const GRID_SPAN: f64 = 1000.0;
const DOUBLING_CAP: f64 = 1152921504606846976.0; // 2^60

/// Sorted penalty values; both axes start at exactly 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyGrid {
    lambda_s: Vec<f64>,
    lambda_f: Vec<f64>,
}

impl PenaltyGrid {
    pub fn new(lambda_s: Vec<f64>, lambda_f: Vec<f64>) -> Result<Self> {
        check_axis("lambda_s", &lambda_s)?;
        check_axis("lambda_f", &lambda_f)?;
        Ok(Self { lambda_s, lambda_f })
    }

    /// The single cell {0} x {0}.
    pub fn unpenalized() -> Self {
        Self {
            lambda_s: vec![0.0],
            lambda_f: vec![0.0],
        }
    }

    pub fn lambda_s(&self) -> &[f64] {
        &self.lambda_s
    }

    pub fn lambda_f(&self) -> &[f64] {
        &self.lambda_f
    }

    pub fn len(&self) -> usize {
        self.lambda_s.len() * self.lambda_f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_axis(name: &str, values: &[f64]) -> Result<()> {
    if values.first() != Some(&0.0) {
        return Err(Error::Config(format!("{name} grid must start at 0")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!(
            "{name} grid contains a non-finite value"
        )));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!(
            "{name} grid must be strictly increasing"
        )));
    }
    Ok(())
}

/// `[0, λ_max/1000, …, λ_max]` with `n` values in total.
pub fn grid_axis(lambda_max: f64, n: usize) -> Vec<f64> {
    let mut axis = vec![0.0];
    if n <= 1 || lambda_max <= 0.0 {
        return axis;
    }
    let interior = n - 1;
    if interior == 1 {
        axis.push(lambda_max);
        return axis;
    }
    let lo = (lambda_max / GRID_SPAN).ln();
    let hi = lambda_max.ln();
    for i in 0..interior {
        let t = i as f64 / (interior - 1) as f64;
        axis.push((lo + t * (hi - lo)).exp());
    }
    *axis.last_mut().expect("non-empty") = lambda_max;
    axis
}

/// Which information criterion to minimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => Err(Error::Config(format!(
                "unknown criterion `{other}` (expected aic or bic)"
            ))),
        }
    }
}

/// How the degrees of freedom of a fit are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DfRule {
    /// Every coefficient with `|β̂| ≥ zero_threshold`.
    Nonzero,
    /// Distinct nonzero values per variable: groups whose coefficients agree
    /// within the fusion threshold share one parameter.
    #[default]
    Distinct,
}

impl fmt::Display for DfRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DfRule::Nonzero => "nonzero",
            DfRule::Distinct => "distinct",
        })
    }
}

impl FromStr for DfRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nonzero" => Ok(DfRule::Nonzero),
            "distinct" => Ok(DfRule::Distinct),
            other => Err(Error::Config(format!(
                "unknown df rule `{other}` (expected nonzero or distinct)"
            ))),
        }
    }
}

/// Tuning for grid construction and selection.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionOptions {
    pub zero_threshold: f64,
    pub fusion_threshold: f64,
    pub n_s: usize,
    pub n_f: usize,
    pub df_rule: DfRule,
    pub controls: FitControls,
    /// Carries τ and ε; its λ values are ignored.
    pub base: PenaltyConfig,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            zero_threshold: DEFAULT_ZERO_THRESHOLD,
            fusion_threshold: DEFAULT_FUSION_THRESHOLD,
            n_s: 10,
            n_f: 10,
            df_rule: DfRule::default(),
            controls: FitControls::default(),
            base: PenaltyConfig::unpenalized(),
        }
    }
}

/// Number of coefficients with `|β̂| ≥ zero_threshold`.
pub fn effective_df(b: &CoefficientSet, zero_threshold: f64) -> usize {
    b.matrix()
        .iter()
        .filter(|v| v.abs() >= zero_threshold)
        .count()
}

/// Number of distinct nonzero coefficient values per variable, summed over
/// variables.
///
/// Within a variable, sorted nonzero values are split wherever consecutive
/// values differ by at least `fusion_threshold`; each cluster counts once.
pub fn distinct_df(b: &CoefficientSet, zero_threshold: f64, fusion_threshold: f64) -> usize {
    let m = b.matrix();
    let mut df = 0;
    for q in 0..m.ncols() {
        let mut values: Vec<f64> = m
            .column(q)
            .iter()
            .copied()
            .filter(|v| v.abs() >= zero_threshold)
            .collect();
        values.sort_by(f64::total_cmp);
        if !values.is_empty() {
            df += 1 + values
                .windows(2)
                .filter(|w| w[1] - w[0] >= fusion_threshold)
                .count();
        }
    }
    df
}

/// Degrees of freedom under `opts.df_rule`.
pub fn degrees_of_freedom(b: &CoefficientSet, opts: &SelectionOptions) -> usize {
    match opts.df_rule {
        DfRule::Nonzero => effective_df(b, opts.zero_threshold),
        DfRule::Distinct => distinct_df(b, opts.zero_threshold, opts.fusion_threshold),
    }
}

/// Largest `|β_q^(k) − β_q^(k')|` over all pairs of groups.
pub fn max_fusion_gap(b: &CoefficientSet) -> f64 {
    let m = b.matrix();
    let (k, p) = m.shape();
    let mut gap: f64 = 0.0;
    for q in 0..p {
        for a in 0..k {
            for c in (a + 1)..k {
                gap = gap.max((m[(a, q)] - m[(c, q)]).abs());
            }
        }
    }
    gap
}

/// `2r + 2ℓ`.
pub fn aic(df: usize, nll: f64) -> f64 {
    2.0 * df as f64 + 2.0 * nll
}

/// `log(Σ_k n_k) r + 2ℓ`.
pub fn bic(df: usize, nll: f64, total_rankings: f64) -> f64 {
    total_rankings.ln() * df as f64 + 2.0 * nll
}

/// Criteria for one fitted cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IcScores {
    pub df: usize,
    pub nll: f64,
    pub aic: f64,
    pub bic: f64,
}

impl IcScores {
    pub fn evaluate(
        fit: &FitResult,
        data: &RankingDataset,
        x: &CovariateMatrix,
        opts: &SelectionOptions,
    ) -> Result<Self> {
        let nll = neg_log_likelihood(&fit.coefficients, data, x)?;
        let df = degrees_of_freedom(&fit.coefficients, opts);
        Ok(Self {
            df,
            nll,
            aic: aic(df, nll),
            bic: bic(df, nll, data.total_rankings() as f64),
        })
    }

    pub fn get(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
        }
    }
}

/// Grid plus the endpoint search that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct GridBuild {
    pub grid: PenaltyGrid,
    pub lambda_s_max: f64,
    pub lambda_f_max: f64,
    pub span: f64,
}

fn doubling_search(
    data: &RankingDataset,
    x: &CovariateMatrix,
    opts: &SelectionOptions,
    start: &CoefficientSet,
    what: &'static str,
    penalties: impl Fn(f64) -> (f64, f64),
    done: impl Fn(&CoefficientSet) -> bool,
) -> Result<f64> {
    let mut lambda = 1.0;
    let mut warm = start.clone();
    loop {
        let (ls, lf) = penalties(lambda);
        let cfg = opts.base.with_lambdas(ls, lf)?;
        let fit = run(warm, data, x, &cfg, &opts.controls)?;
        if done(&fit.coefficients) {
            return Ok(lambda);
        }
        warm = fit.coefficients;
        lambda *= 2.0;
        if lambda > DOUBLING_CAP {
            return Err(Error::GridCap(what));
        }
    }
}

/// Finds λ_s^max (all coefficients below the zero threshold at λ_f = 0) and
/// λ_f^max (all groups fused at λ_s = 0) by doubling from 1, then spaces
/// `n - 1` values logarithmically in `[λ_max / 1000, λ_max]` after a leading 0.
pub fn build_grid(
    data: &RankingDataset,
    x: &CovariateMatrix,
    opts: &SelectionOptions,
) -> Result<GridBuild> {
    preflight(data, x, opts)?;
    let mle = initial_estimate(data, x)?.coefficients;
    let zero = opts.zero_threshold;
    let lambda_s_max = if opts.n_s > 1 {
        doubling_search(
            data,
            x,
            opts,
            &mle,
            "shrinking every coefficient to zero",
            |l| (l, 0.0),
            |b| b.max_abs() < zero,
        )?
    } else {
        0.0
    };
    let fuse = opts.fusion_threshold;
    let lambda_f_max = if data.num_groups() > 1 && opts.n_f > 1 {
        doubling_search(
            data,
            x,
            opts,
            &mle,
            "fusing all groups",
            |l| (0.0, l),
            |b| max_fusion_gap(b) < fuse,
        )?
    } else {
        0.0
    };
    let grid = PenaltyGrid::new(
        grid_axis(lambda_s_max, opts.n_s),
        grid_axis(lambda_f_max, opts.n_f),
    )?;
    Ok(GridBuild {
        grid,
        lambda_s_max,
        lambda_f_max,
        span: GRID_SPAN,
    })
}

/// One fitted grid cell.
#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub lambda_s: f64,
    pub lambda_f: f64,
    pub fit: Option<FitResult>,
    pub scores: Option<IcScores>,
    pub error: Option<String>,
}

/// All grid fits and the chosen cell.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    /// Row-major over λ_f, then λ_s ascending.
    pub cells: Vec<GridCell>,
    pub chosen: usize,
    pub criterion: Criterion,
    pub zero_threshold: f64,
    pub df_rule: DfRule,
}

impl SelectionResult {
    pub fn chosen_cell(&self) -> &GridCell {
        &self.cells[self.chosen]
    }

    pub fn chosen_fit(&self) -> &FitResult {
        self.cells[self.chosen]
            .fit
            .as_ref()
            .expect("chosen cell has a fit")
    }

    pub fn chosen_scores(&self) -> IcScores {
        self.cells[self.chosen]
            .scores
            .expect("chosen cell has scores")
    }
}

fn preflight(data: &RankingDataset, x: &CovariateMatrix, opts: &SelectionOptions) -> Result<()> {
    crate::data::check_compatible(data, x)?;
    opts.base.check_groups(data.num_groups())?;
    if !opts.controls.force {
        let report = check_identifiability(x, DEFAULT_RANK_TOL);
        if !report.passed {
            return Err(Error::NotIdentifiable {
                rank: report.rank,
                p: report.p,
            });
        }
    }
    Ok(())
}

/// Fits every cell and picks the one minimizing `criterion`.
///
/// Within a λ_f row the cells are fitted in increasing λ_s, each warm-started
/// from the previous estimate; rows start from the MLE and run in parallel.
/// Exact ties go to the larger (λ_s, λ_f), i.e. the sparser or more fused fit.
pub fn select(
    data: &RankingDataset,
    x: &CovariateMatrix,
    grid: &PenaltyGrid,
    criterion: Criterion,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    preflight(data, x, opts)?;
    let mle = initial_estimate(data, x)?.coefficients;

    let rows: Vec<Vec<GridCell>> = grid
        .lambda_f()
        .par_iter()
        .map(|&lf| {
            let mut warm = mle.clone();
            grid.lambda_s()
                .iter()
                .map(|&ls| {
                    let outcome = opts
                        .base
                        .with_lambdas(ls, lf)
                        .and_then(|cfg| run(warm.clone(), data, x, &cfg, &opts.controls))
                        .and_then(|fit| {
                            let scores = IcScores::evaluate(&fit, data, x, opts)?;
                            Ok((fit, scores))
                        });
                    match outcome {
                        Ok((fit, scores)) => {
                            warm = fit.coefficients.clone();
                            GridCell {
                                lambda_s: ls,
                                lambda_f: lf,
                                fit: Some(fit),
                                scores: Some(scores),
                                error: None,
                            }
                        }
                        Err(e) => GridCell {
                            lambda_s: ls,
                            lambda_f: lf,
                            fit: None,
                            scores: None,
                            error: Some(e.to_string()),
                        },
                    }
                })
                .collect()
        })
        .collect();
    let cells: Vec<GridCell> = rows.into_iter().flatten().collect();

    let mut chosen: Option<(usize, f64)> = None;
    for (i, cell) in cells.iter().enumerate() {
        let Some(scores) = cell.scores else { continue };
        let value = scores.get(criterion);
        let better = match chosen {
            None => true,
            Some((j, best)) => {
                value < best
                    || (value == best
                        && (cell.lambda_s, cell.lambda_f) > (cells[j].lambda_s, cells[j].lambda_f))
            }
        };
        if better {
            chosen = Some((i, value));
        }
    }
    let (chosen, _) = chosen.ok_or(Error::AllFitsFailed)?;
    Ok(SelectionResult {
        cells,
        chosen,
        criterion,
        zero_threshold: opts.zero_threshold,
        df_rule: opts.df_rule,
    })
}
