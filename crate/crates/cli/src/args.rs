use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sfpl::optimizer::FitControls;
use sfpl::penalty::DEFAULT_EPSILON;
use sfpl::selection::{Criterion, DfRule, DEFAULT_FUSION_THRESHOLD, DEFAULT_ZERO_THRESHOLD};
use sfpl::simulation::F1Variant;

/// Sparse fused Plackett-Luce fitting, selection, prediction and simulation.
///
/// Exit codes: 0 success, 1 I/O or internal failure, 2 invalid input or
/// arguments, 3 covariates not identifiable (rank(X) < p), 4 the fit did not
/// converge (outputs are still written).
#[derive(Debug, Parser)]
#[command(name = "sfpl", version)]
pub struct Cli {
    /// Worker threads for grid rows and replicates.
    #[arg(long, global = true, env = "SFPL_THREADS", value_parser = positive_usize)]
    pub threads: Option<usize>,

    /// Seed for simulated data; recorded in every manifest.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check input files and report rank and catalog coverage without fitting.
    Validate(ValidateArgs),
    /// Fit at one (λ_s, λ_f) pair.
    #[command(allow_negative_numbers = true)]
    Fit(FitArgs),
    /// Fit a penalty grid and keep the fit minimizing AIC or BIC.
    #[command(allow_negative_numbers = true)]
    Select(SelectArgs),
    /// Rank catalog and new objects with a previous fit.
    Predict(PredictArgs),
    /// Run the simulation study.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Long-format rankings: group,ranker,position,object.
    #[arg(long)]
    pub rankings: PathBuf,

    /// Object covariates: object,<var1>,<var2>,...
    #[arg(long)]
    pub covariates: PathBuf,

    /// Center and scale covariate columns before fitting (default).
    #[arg(long, overrides_with = "no_standardize")]
    #[serde(skip)]
    pub standardize: bool,

    #[arg(long, overrides_with = "standardize")]
    pub no_standardize: bool,
}

impl DataArgs {
    pub fn standardized(&self) -> bool {
        !self.no_standardize
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TuningArgs {
    /// Coefficients below this magnitude count as zero.
    #[arg(long, default_value_t = DEFAULT_ZERO_THRESHOLD, value_parser = positive_f64)]
    pub zero_threshold: f64,

    /// Coefficients of one variable within this distance count as fused.
    #[arg(long, default_value_t = DEFAULT_FUSION_THRESHOLD, value_parser = positive_f64)]
    pub fusion_threshold: f64,

    /// Smoothing constant of the penalty surrogate.
    #[arg(long, default_value_t = DEFAULT_EPSILON, value_parser = positive_f64)]
    pub epsilon: f64,

    /// Relative objective change at which the MM iteration stops.
    #[arg(long, default_value_t = FitControls::default().xi, value_parser = positive_f64)]
    pub xi: f64,

    #[arg(long, default_value_t = FitControls::default().max_iter, value_parser = positive_usize)]
    pub max_iter: usize,

    /// Degrees-of-freedom count used by AIC and BIC.
    #[arg(long, value_enum, default_value_t = DfRuleArg::Distinct)]
    pub df_rule: DfRuleArg,

    /// Fit even when the covariate matrix is rank deficient.
    #[arg(long)]
    pub force: bool,
}

impl TuningArgs {
    pub fn controls(&self) -> FitControls {
        FitControls {
            xi: self.xi,
            max_iter: self.max_iter,
            force: self.force,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Also write report.json and manifest.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub tuning: TuningArgs,

    #[arg(long, value_parser = non_negative_f64)]
    pub lambda_s: f64,

    #[arg(long, value_parser = non_negative_f64)]
    pub lambda_f: f64,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    pub tuning: TuningArgs,

    #[arg(long, value_enum)]
    pub criterion: CriterionArg,

    /// Explicit λ_s values, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = non_negative_f64)]
    pub grid_s: Option<Vec<f64>>,

    /// Explicit λ_f values, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = non_negative_f64)]
    pub grid_f: Option<Vec<f64>>,

    /// Number of λ_s values in a generated grid.
    #[arg(long, default_value_t = 10, value_parser = positive_usize)]
    pub n_s: usize,

    /// Number of λ_f values in a generated grid.
    #[arg(long, default_value_t = 10, value_parser = positive_usize)]
    pub n_f: usize,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    /// Output directory of a previous `fit` or `select` run.
    #[arg(long)]
    pub fit: PathBuf,

    /// Covariates of objects to place in the ranking: object,<vars...>
    #[arg(long)]
    pub new_covariates: PathBuf,

    /// Training covariates; defaults to the file recorded in the fit manifest.
    #[arg(long)]
    pub covariates: Option<PathBuf>,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Preset names such as table1-n100-p5, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["vars", "rankers"])]
    pub scenario: Vec<String>,

    /// Number of groups K.
    #[arg(long, value_parser = positive_usize)]
    pub groups: Option<usize>,

    /// Catalog size M.
    #[arg(long, value_parser = positive_usize)]
    pub objects: Option<usize>,

    /// Objects per ranking m.
    #[arg(long, value_parser = positive_usize)]
    pub ranked: Option<usize>,

    /// Number of variables p.
    #[arg(long, value_parser = positive_usize, requires = "rankers")]
    pub vars: Option<usize>,

    /// Rankings per group n_k.
    #[arg(long, value_parser = positive_usize, requires = "vars")]
    pub rankers: Option<usize>,

    #[arg(long, default_value_t = 0.25, value_parser = non_negative_f64)]
    pub eta: f64,

    #[arg(long, default_value_t = 0.25, value_parser = non_negative_f64)]
    pub delta: f64,

    /// Objects held out of the rankings for prediction.
    #[arg(long)]
    pub new_objects: Option<usize>,

    #[arg(long, default_value_t = 50, value_parser = positive_usize)]
    pub replicates: usize,

    #[arg(long, value_delimiter = ',', default_value = "sfpl,pl,ppl")]
    pub methods: Vec<MethodArg>,

    #[arg(long, value_enum, default_value_t = CriterionArg::Bic)]
    pub criterion: CriterionArg,

    #[arg(long, value_enum, default_value_t = F1Arg::Standard)]
    pub f1_variant: F1Arg,

    /// Report mean seconds per fit (the study table is then not reproducible).
    #[arg(long)]
    pub record_timing: bool,

    #[arg(long, default_value_t = 10, value_parser = positive_usize)]
    pub n_s: usize,

    #[arg(long, default_value_t = 10, value_parser = positive_usize)]
    pub n_f: usize,

    #[command(flatten)]
    pub tuning: TuningArgs,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionArg {
    Aic,
    Bic,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Aic => Criterion::Aic,
            CriterionArg::Bic => Criterion::Bic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DfRuleArg {
    Nonzero,
    Distinct,
}

impl From<DfRuleArg> for DfRule {
    fn from(r: DfRuleArg) -> Self {
        match r {
            DfRuleArg::Nonzero => DfRule::Nonzero,
            DfRuleArg::Distinct => DfRule::Distinct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum F1Arg {
    /// 2tp / (2tp + fp + fn)
    Standard,
    /// 2tp / (2tp + fp + tn)
    TrueNegatives,
}

impl From<F1Arg> for F1Variant {
    fn from(v: F1Arg) -> Self {
        match v {
            F1Arg::Standard => F1Variant::Standard,
            F1Arg::TrueNegatives => F1Variant::TrueNegatives,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Sfpl,
    Pl,
    Ppl,
}

impl From<MethodArg> for sfpl::simulation::Method {
    fn from(m: MethodArg) -> Self {
        use sfpl::simulation::Method;
        match m {
            MethodArg::Sfpl => Method::Sfpl,
            MethodArg::Pl => Method::Pl,
            MethodArg::Ppl => Method::Ppl,
        }
    }
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be a finite number >= 0, got {s}"))
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be a finite number > 0, got {s}"))
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("must be a positive integer, got {s}")),
    }
}
