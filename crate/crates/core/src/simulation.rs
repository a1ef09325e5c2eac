//! Simulation study harness: coefficient and data generation, the PL / PPL
//! comparators, RMSE / F1 / RCR metrics and the brute-force ranking oracle.
//!
//! Every (scenario, replicate) pair draws from its own ChaCha stream derived
//! from the study seed, so results do not depend on how replicates are
//! scheduled across threads.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{CovariateMatrix, PartialRanking, RankingDataset, RankingGroup};
use crate::error::{Error, Result};
use crate::likelihood::CoefficientSet;
use crate::optimizer::initial_estimate;
use crate::prediction::ranks_descending;
use crate::selection::{build_grid, select, Criterion, SelectionOptions};

/// Largest subset size accepted by [`enumerate_ranking_distribution`].
pub const MAX_ENUMERATION: usize = 6;

/// One simulated scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub name: String,
    /// K
    pub groups: usize,
    /// M
    pub objects: usize,
    /// m, objects ranked by each ranker
    pub ranked: usize,
    /// p
    pub vars: usize,
    /// n_k, rankers per group
    pub rankers: usize,
    /// η, fraction of zeroed baseline coefficients
    pub eta: f64,
    /// δ, fraction of coefficients resampled per non-baseline group
    pub delta: f64,
    /// objects held out of the rankings and scored only by prediction
    pub new_objects: usize,
}

impl SimulationConfig {
    /// The baseline design: K = 4, m = 3, M = 20 (M = p once p ≥ 25).
    pub fn baseline(vars: usize, rankers: usize, eta: f64, delta: f64) -> Self {
        let objects = if vars >= 25 { vars } else { 20 };
        let mut cfg = Self {
            name: String::new(),
            groups: 4,
            objects,
            ranked: 3,
            vars,
            rankers,
            eta,
            delta,
            new_objects: 0,
        };
        cfg.name = cfg.auto_name();
        cfg
    }

    fn auto_name(&self) -> String {
        format!(
            "K{}-M{}-m{}-p{}-n{}-d{}-e{}-new{}",
            self.groups,
            self.objects,
            self.ranked,
            self.vars,
            self.rankers,
            self.delta,
            self.eta,
            self.new_objects
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.groups == 0 {
            return bad("at least one group is required".into());
        }
        if self.objects < 2 {
            return bad(format!(
                "M = {} objects; at least 2 are required",
                self.objects
            ));
        }
        if self.ranked == 0 || self.ranked > self.objects {
            return bad(format!(
                "m = {} must lie in 1..=M = {}",
                self.ranked, self.objects
            ));
        }
        if self.vars == 0 {
            return bad("p must be positive".into());
        }
        if self.vars > self.objects {
            return bad(format!(
                "p = {} exceeds M = {}; coefficients would not be identifiable",
                self.vars, self.objects
            ));
        }
        if self.rankers == 0 {
            return bad("n_k must be positive".into());
        }
        for (name, v) in [("eta", self.eta), ("delta", self.delta)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Parses `<family>-n<n_k>-p<p>[-d<pct>][-e<pct>]`.
    ///
    /// Families: `table1` (baseline), `table2` (baseline with 5 new objects),
    /// `appa-k2`, `appa-k6` (K = 2 or 6), `appa-m5` (M = 10, m = 5) and
    /// `appa-m10` (M = m = 10); all but `table1` add 5 new objects.
    /// δ and η default to 0.25 and are given in percent.
    pub fn preset(name: &str) -> Result<Self> {
        let err = || Error::Config(format!("unknown scenario preset `{name}`"));
        let lower = name.to_ascii_lowercase();
        let (family, rest) = [
            "table1", "table2", "appa-k2", "appa-k6", "appa-m5", "appa-m10",
        ]
        .iter()
        .filter_map(|f| lower.strip_prefix(f).map(|r| (*f, r)))
        .max_by_key(|(f, _)| f.len())
        .ok_or_else(err)?;
        let mut rankers = None;
        let mut vars = None;
        let mut delta = 0.25;
        let mut eta = 0.25;
        for part in rest.split('-').skip(1) {
            let (key, value) = part.split_at(part.len().min(1));
            let number = |v: &str| v.parse::<usize>().map_err(|_| err());
            match key {
                "n" => rankers = Some(number(value)?),
                "p" => vars = Some(number(value)?),
                "d" => delta = number(value)? as f64 / 100.0,
                "e" => eta = number(value)? as f64 / 100.0,
                _ => return Err(err()),
            }
        }
        if !rest.is_empty() && !rest.starts_with('-') {
            return Err(err());
        }
        let (rankers, vars) = (rankers.ok_or_else(err)?, vars.ok_or_else(err)?);
        let mut cfg = Self::baseline(vars, rankers, eta, delta);
        match family {
            "table1" => {}
            "table2" => cfg.new_objects = 5,
            "appa-k2" => {
                cfg.groups = 2;
                cfg.new_objects = 5;
            }
            "appa-k6" => {
                cfg.groups = 6;
                cfg.new_objects = 5;
            }
            "appa-m5" => {
                cfg.objects = 10;
                cfg.ranked = 5;
                cfg.new_objects = 5;
            }
            "appa-m10" => {
                cfg.objects = 10;
                cfg.ranked = 10;
                cfg.new_objects = 5;
            }
            _ => unreachable!(),
        }
        cfg.name = lower;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn renamed_auto(mut self) -> Self {
        self.name = self.auto_name();
        self
    }
}

/// Independent generator for one (scenario, replicate) pair.
pub fn replicate_rng(seed: u64, scenario: usize, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scenario as u64) << 32) | replicate as u64);
    rng
}

fn floor_count(fraction: f64, p: usize) -> usize {
    ((fraction * p as f64) + 1e-9).floor().min(p as f64) as usize
}

/// True coefficients: β^(1) ~ U(−1,1)^p with ⌊ηp⌋ random entries zeroed;
/// each further group copies β^(1) and redraws ⌊δp⌋ random entries.
pub fn generate_coefficients<R: Rng + ?Sized>(
    cfg: &SimulationConfig,
    rng: &mut R,
) -> CoefficientSet {
    let p = cfg.vars;
    let mut baseline: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    for q in sample(rng, p, floor_count(cfg.eta, p)) {
        baseline[q] = 0.0;
    }
    let mut rows = vec![baseline.clone()];
    let n_hetero = floor_count(cfg.delta, p);
    for _ in 1..cfg.groups {
        let mut row = baseline.clone();
        for q in sample(rng, p, n_hetero) {
            row[q] = rng.random_range(-1.0..1.0);
        }
        rows.push(row);
    }
    CoefficientSet::from_rows(&rows).expect("finite draws")
}

/// Draws a ranking of `subset` by sequential choice without replacement,
/// each stage picking among the remaining objects with probability
/// proportional to `exp(x_j β)`.
pub fn sample_partial_ranking<R: Rng + ?Sized>(
    beta: &[f64],
    x: &CovariateMatrix,
    subset: &[usize],
    rng: &mut R,
) -> Result<PartialRanking> {
    let mut remaining: Vec<(usize, f64)> = subset
        .iter()
        .map(|&o| (o, x.row(o).iter().zip(beta).map(|(a, b)| a * b).sum()))
        .collect();
    let mut ordering = Vec::with_capacity(subset.len());
    while !remaining.is_empty() {
        let max = remaining
            .iter()
            .map(|r| r.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = remaining.iter().map(|r| (r.1 - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                pick = i;
                break;
            }
            u -= w;
        }
        ordering.push(remaining.remove(pick).0);
    }
    PartialRanking::new(ordering, x.nrows())
}

/// Exhaustive Plackett-Luce distribution over all orderings of `subset`,
/// evaluated directly as a product of worth ratios.
pub fn enumerate_ranking_distribution(
    beta: &[f64],
    x: &CovariateMatrix,
    subset: &[usize],
) -> Result<Vec<(Vec<usize>, f64)>> {
    if subset.len() > MAX_ENUMERATION {
        return Err(Error::Config(format!(
            "enumeration supports at most {MAX_ENUMERATION} objects, got {}",
            subset.len()
        )));
    }
    if beta.len() != x.ncols() {
        return Err(Error::Shape(
            "coefficient length differs from covariate count".into(),
        ));
    }
    let worth = |o: usize| -> f64 {
        x.row(o)
            .iter()
            .zip(beta)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .exp()
    };
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(subset.len());
    let mut used = vec![false; subset.len()];
    permute(subset, &mut used, &mut current, &mut out);
    Ok(out
        .into_iter()
        .map(|perm| {
            let mut prob = 1.0;
            for j in 0..perm.len() {
                let denom: f64 = perm[j..].iter().map(|&o| worth(o)).sum();
                prob *= worth(perm[j]) / denom;
            }
            (perm, prob)
        })
        .collect())
}

fn permute(
    items: &[usize],
    used: &mut [bool],
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if current.len() == items.len() {
        out.push(current.clone());
        return;
    }
    for i in 0..items.len() {
        if !used[i] {
            used[i] = true;
            current.push(items[i]);
            permute(items, used, current, out);
            current.pop();
            used[i] = false;
        }
    }
}

/// One simulated dataset with its ground truth.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: RankingDataset,
    /// M x p covariates of the ranked catalog.
    pub covariates: CovariateMatrix,
    /// Covariates of the held-out objects (n_new x p).
    pub new_covariates: Vec<Vec<f64>>,
    pub truth: CoefficientSet,
    /// Per group, 1-based true ranks of the catalog objects.
    pub true_ranks: Vec<Vec<usize>>,
    /// Per group, true ranks over catalog plus new objects.
    pub true_ranks_all: Vec<Vec<usize>>,
}

/// Draws coefficients, standard-normal covariates and n_k rankings per
/// group, each over a uniformly random m-subset of the catalog.
pub fn generate_dataset<R: Rng + ?Sized>(
    cfg: &SimulationConfig,
    rng: &mut R,
) -> Result<SimulatedData> {
    cfg.validate()?;
    let truth = generate_coefficients(cfg, rng);
    let total = cfg.objects + cfg.new_objects;
    let rows: Vec<Vec<f64>> = (0..total)
        .map(|_| (0..cfg.vars).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let names: Vec<String> = (1..=cfg.vars).map(|q| format!("x{q}")).collect();
    let covariates = CovariateMatrix::from_rows(rows[..cfg.objects].to_vec(), names.clone())?;
    let all = CovariateMatrix::from_rows(rows.clone(), names)?;

    let mut groups = Vec::with_capacity(cfg.groups);
    for k in 0..cfg.groups {
        let beta = truth.beta(k);
        let mut rankings = Vec::with_capacity(cfg.rankers);
        for _ in 0..cfg.rankers {
            let subset = sample(rng, cfg.objects, cfg.ranked).into_vec();
            rankings.push(sample_partial_ranking(&beta, &covariates, &subset, rng)?);
        }
        groups.push(RankingGroup::new(format!("g{}", k + 1), rankings));
    }
    let dataset = RankingDataset::new(groups, cfg.objects)?;
    let true_ranks = score_ranks(&truth, &covariates);
    let true_ranks_all = score_ranks(&truth, &all);
    Ok(SimulatedData {
        dataset,
        covariates,
        new_covariates: rows[cfg.objects..].to_vec(),
        truth,
        true_ranks,
        true_ranks_all,
    })
}

/// Per-group ranks by descending `x_j β^(k)` (the order of the worths).
pub fn score_ranks(b: &CoefficientSet, x: &CovariateMatrix) -> Vec<Vec<usize>> {
    (0..b.num_groups())
        .map(|k| ranks_descending(&x.scores(&b.beta(k))))
        .collect()
}

pub fn rmse(truth: &CoefficientSet, estimate: &CoefficientSet) -> f64 {
    let n = truth.matrix().len() as f64;
    let ss: f64 = truth
        .matrix()
        .iter()
        .zip(estimate.matrix().iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    (ss / n).sqrt()
}

/// How the F1 denominator treats the negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum F1Variant {
    /// 2tp / (2tp + fp + fn)
    #[default]
    Standard,
    /// 2tp / (2tp + fp + tn)
    TrueNegatives,
}

/// Confusion counts for "coefficient is nonzero".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

pub fn confusion(
    truth: &CoefficientSet,
    estimate: &CoefficientSet,
    zero_threshold: f64,
) -> Confusion {
    let mut c = Confusion::default();
    for (t, e) in truth.matrix().iter().zip(estimate.matrix().iter()) {
        match (*t != 0.0, e.abs() >= zero_threshold) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

pub fn f1(
    truth: &CoefficientSet,
    estimate: &CoefficientSet,
    zero_threshold: f64,
    variant: F1Variant,
) -> f64 {
    let c = confusion(truth, estimate, zero_threshold);
    let other = match variant {
        F1Variant::Standard => c.fn_,
        F1Variant::TrueNegatives => c.tn,
    };
    let denom = 2 * c.tp + c.fp + other;
    if denom == 0 {
        return 1.0;
    }
    (2 * c.tp) as f64 / denom as f64
}

/// Mean over groups of the fraction of objects whose estimated rank equals
/// the true rank.
pub fn rcr(true_ranks: &[Vec<usize>], est_ranks: &[Vec<usize>]) -> f64 {
    let k = true_ranks.len();
    true_ranks
        .iter()
        .zip(est_ranks)
        .map(|(t, e)| {
            let hits = t.iter().zip(e).filter(|(a, b)| a == b).count();
            hits as f64 / t.len() as f64
        })
        .sum::<f64>()
        / k as f64
}

/// RCR restricted to the objects in `objects`.
pub fn rcr_subset(true_ranks: &[Vec<usize>], est_ranks: &[Vec<usize>], objects: &[usize]) -> f64 {
    let k = true_ranks.len();
    true_ranks
        .iter()
        .zip(est_ranks)
        .map(|(t, e)| {
            objects.iter().filter(|&&j| t[j] == e[j]).count() as f64 / objects.len() as f64
        })
        .sum::<f64>()
        / k as f64
}

/// Estimators compared in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    /// Penalized fit with grid search.
    Sfpl,
    /// Separate unpenalized fit per group.
    Pl,
    /// One unpenalized fit on the pooled groups.
    Ppl,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sfpl, Method::Pl, Method::Ppl];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sfpl => "SFPL",
            Method::Pl => "PL",
            Method::Ppl => "PPL",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SFPL" => Ok(Method::Sfpl),
            "PL" => Ok(Method::Pl),
            "PPL" => Ok(Method::Ppl),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Study-wide settings.
#[derive(Debug, Clone, Serialize)]
pub struct StudyOptions {
    pub replicates: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub criterion: Criterion,
    pub selection: SelectionOptions,
    pub f1_variant: F1Variant,
    /// Report wall-clock seconds in the study table (makes output
    /// run-dependent).
    pub record_timing: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            replicates: 50,
            seed: 1,
            methods: Method::ALL.to_vec(),
            criterion: Criterion::Bic,
            selection: SelectionOptions::default(),
            f1_variant: F1Variant::Standard,
            record_timing: false,
        }
    }
}

/// Metrics of one method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub method: Method,
    pub rmse: f64,
    /// Only for the penalized fit.
    pub f1: Option<f64>,
    pub rcr: f64,
    /// RCR over the merged list of catalog and new objects.
    pub rcr_pred: Option<f64>,
    /// Rank agreement of the new objects alone within the merged list.
    pub rcr_new: Option<f64>,
    pub seconds: f64,
    /// Chosen penalties (penalized fit only).
    pub lambda_s: Option<f64>,
    pub lambda_f: Option<f64>,
}

/// Estimates B for one method.
pub fn estimate(
    method: Method,
    data: &SimulatedData,
    opts: &StudyOptions,
) -> Result<(CoefficientSet, Option<(f64, f64)>)> {
    match method {
        Method::Sfpl => {
            let built = build_grid(&data.dataset, &data.covariates, &opts.selection)?;
            let sel = select(
                &data.dataset,
                &data.covariates,
                &built.grid,
                opts.criterion,
                &opts.selection,
            )?;
            let cell = sel.chosen_cell();
            Ok((
                sel.chosen_fit().coefficients.clone(),
                Some((cell.lambda_s, cell.lambda_f)),
            ))
        }
        Method::Pl => Ok((
            initial_estimate(&data.dataset, &data.covariates)?.coefficients,
            None,
        )),
        Method::Ppl => {
            let pooled = data.dataset.pooled("pooled");
            let est = initial_estimate(&pooled, &data.covariates)?.coefficients;
            let k = data.dataset.num_groups();
            let rows: Vec<Vec<f64>> = (0..k).map(|_| est.beta(0)).collect();
            Ok((CoefficientSet::from_rows(&rows)?, None))
        }
    }
}

/// Scores an estimate against the truth of a simulated dataset.
pub fn score(
    method: Method,
    estimate: &CoefficientSet,
    data: &SimulatedData,
    opts: &StudyOptions,
    seconds: f64,
    lambdas: Option<(f64, f64)>,
) -> Result<MetricsReport> {
    let est_ranks = score_ranks(estimate, &data.covariates);
    let (rcr_pred, rcr_new) = if data.new_covariates.is_empty() {
        (None, None)
    } else {
        let all = data.covariates.with_appended_rows(&data.new_covariates)?;
        let est_all = score_ranks(estimate, &all);
        let m = data.covariates.nrows();
        let new: Vec<usize> = (m..all.nrows()).collect();
        (
            Some(rcr(&data.true_ranks_all, &est_all)),
            Some(rcr_subset(&data.true_ranks_all, &est_all, &new)),
        )
    };
    Ok(MetricsReport {
        method,
        rmse: rmse(&data.truth, estimate),
        f1: (method == Method::Sfpl).then(|| {
            f1(
                &data.truth,
                estimate,
                opts.selection.zero_threshold,
                opts.f1_variant,
            )
        }),
        rcr: rcr(&data.true_ranks, &est_ranks),
        rcr_pred,
        rcr_new,
        seconds,
        lambda_s: lambdas.map(|l| l.0),
        lambda_f: lambdas.map(|l| l.1),
    })
}

/// Outcome of every method on one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateRecord {
    pub scenario: usize,
    pub replicate: usize,
    pub results: Vec<(Method, std::result::Result<MetricsReport, String>)>,
}

pub fn run_replicate(
    cfg: &SimulationConfig,
    scenario: usize,
    replicate: usize,
    opts: &StudyOptions,
) -> ReplicateRecord {
    let mut rng = replicate_rng(opts.seed, scenario, replicate);
    let results = match generate_dataset(cfg, &mut rng) {
        Err(e) => opts
            .methods
            .iter()
            .map(|&m| (m, Err(e.to_string())))
            .collect(),
        Ok(data) => opts
            .methods
            .iter()
            .map(|&method| {
                let start = Instant::now();
                let outcome = estimate(method, &data, opts).and_then(|(b, lambdas)| {
                    let secs = start.elapsed().as_secs_f64();
                    score(method, &b, &data, opts, secs, lambdas)
                });
                (method, outcome.map_err(|e| e.to_string()))
            })
            .collect(),
    };
    ReplicateRecord {
        scenario,
        replicate,
        results,
    }
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Undefined for fewer than two values.
    pub se: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = (values.len() > 1).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Some(Self { mean, se })
    }
}

/// Aggregated metrics of one method in one scenario.
#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub scenario: SimulationConfig,
    pub method: Method,
    pub succeeded: usize,
    pub failed: usize,
    pub rmse: Option<Summary>,
    pub f1: Option<Summary>,
    pub rcr: Option<Summary>,
    pub rcr_pred: Option<Summary>,
    pub rcr_new: Option<Summary>,
    pub seconds_mean: Option<f64>,
}

/// Study rows plus the per-replicate records they summarize.
#[derive(Debug, Clone)]
pub struct Study {
    pub rows: Vec<StudyRow>,
    pub records: Vec<ReplicateRecord>,
}

/// Runs every scenario for `opts.replicates` replicates.
///
/// Replicates are distributed over the current rayon pool; aggregation is by
/// (scenario, replicate) order.
pub fn run_study(scenarios: &[SimulationConfig], opts: &StudyOptions) -> Result<Study> {
    for s in scenarios {
        s.validate()?;
    }
    if opts.replicates == 0 {
        return Err(Error::Config("at least one replicate is required".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|s| (0..opts.replicates).map(move |r| (s, r)))
        .collect();
    let records: Vec<ReplicateRecord> = jobs
        .par_iter()
        .map(|&(s, r)| run_replicate(&scenarios[s], s, r, opts))
        .collect();

    let mut rows = Vec::new();
    for (si, scenario) in scenarios.iter().enumerate() {
        for &method in &opts.methods {
            let reports: Vec<&MetricsReport> = records
                .iter()
                .filter(|rec| rec.scenario == si)
                .flat_map(|rec| rec.results.iter())
                .filter(|(m, _)| *m == method)
                .filter_map(|(_, res)| res.as_ref().ok())
                .collect();
            let failed = opts.replicates - reports.len();
            let collect = |f: &dyn Fn(&MetricsReport) -> Option<f64>| -> Option<Summary> {
                let v: Vec<f64> = reports.iter().filter_map(|r| f(r)).collect();
                Summary::of(&v)
            };
            rows.push(StudyRow {
                scenario: scenario.clone(),
                method,
                succeeded: reports.len(),
                failed,
                rmse: collect(&|r| Some(r.rmse)),
                f1: collect(&|r| r.f1),
                rcr: collect(&|r| Some(r.rcr)),
                rcr_pred: collect(&|r| r.rcr_pred),
                rcr_new: collect(&|r| r.rcr_new),
                seconds_mean: (opts.record_timing && !reports.is_empty())
                    .then(|| reports.iter().map(|r| r.seconds).sum::<f64>() / reports.len() as f64),
            });
        }
    }
    Ok(Study { rows, records })
}

pub const STUDY_HEADER: [&str; 23] = [
    "scenario",
    "K",
    "M",
    "m",
    "p",
    "n_k",
    "eta",
    "delta",
    "n_new",
    "method",
    "replicates_ok",
    "replicates_failed",
    "rmse_mean",
    "rmse_se",
    "f1_mean",
    "f1_se",
    "rcr_mean",
    "rcr_se",
    "rcr_pred_mean",
    "rcr_pred_se",
    "rcr_new_mean",
    "rcr_new_se",
    "seconds_mean",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

pub fn write_study_table<W: Write>(rows: &[StudyRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(STUDY_HEADER)?;
    for row in rows {
        let s = &row.scenario;
        w.write_record([
            s.name.clone(),
            s.groups.to_string(),
            s.objects.to_string(),
            s.ranked.to_string(),
            s.vars.to_string(),
            s.rankers.to_string(),
            s.eta.to_string(),
            s.delta.to_string(),
            s.new_objects.to_string(),
            row.method.to_string(),
            row.succeeded.to_string(),
            row.failed.to_string(),
            fmt_opt(row.rmse.map(|m| m.mean)),
            fmt_opt(row.rmse.and_then(|m| m.se)),
            fmt_opt(row.f1.map(|m| m.mean)),
            fmt_opt(row.f1.and_then(|m| m.se)),
            fmt_opt(row.rcr.map(|m| m.mean)),
            fmt_opt(row.rcr.and_then(|m| m.se)),
            fmt_opt(row.rcr_pred.map(|m| m.mean)),
            fmt_opt(row.rcr_pred.and_then(|m| m.se)),
            fmt_opt(row.rcr_new.map(|m| m.mean)),
            fmt_opt(row.rcr_new.and_then(|m| m.se)),
            fmt_opt(row.seconds_mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-replicate metrics (the raw values behind box plots).
pub fn write_replicate_table<W: Write>(
    scenarios: &[SimulationConfig],
    records: &[ReplicateRecord],
    record_timing: bool,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "scenario",
        "replicate",
        "method",
        "rmse",
        "f1",
        "rcr",
        "rcr_pred",
        "rcr_new",
        "lambda_s",
        "lambda_f",
        "seconds",
        "error",
    ])?;
    for rec in records {
        for (method, res) in &rec.results {
            let name = scenarios[rec.scenario].name.clone();
            let fields = match res {
                Ok(r) => [
                    name,
                    rec.replicate.to_string(),
                    method.to_string(),
                    format!("{:.6}", r.rmse),
                    fmt_opt(r.f1),
                    format!("{:.6}", r.rcr),
                    fmt_opt(r.rcr_pred),
                    fmt_opt(r.rcr_new),
                    fmt_opt(r.lambda_s),
                    fmt_opt(r.lambda_f),
                    fmt_opt(record_timing.then_some(r.seconds)),
                    String::new(),
                ],
                Err(e) => [
                    name,
                    rec.replicate.to_string(),
                    method.to_string(),
                    "NA".into(),
                    "NA".into(),
                    "NA".into(),
                    "NA".into(),
                    "NA".into(),
                    "NA".into(),
                    "NA".into(),
                    "NA".into(),
                    e.clone(),
                ],
            };
            w.write_record(&fields)?;
        }
    }
    w.flush()?;
    Ok(())
}
