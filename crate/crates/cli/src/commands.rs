use std::fs;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sfpl::data::{
    check_identifiability, load_covariates, read_new_objects, IdentifiabilityReport,
    Standardization, DEFAULT_RANK_TOL,
};
use sfpl::optimizer::{self, FitResult};
use sfpl::penalty::PenaltyConfig;
use sfpl::prediction::{predict_new, write_rank_table};
use sfpl::selection::{
    build_grid, effective_df, select, Criterion, IcScores, PenaltyGrid, SelectionOptions,
    SelectionResult,
};
use sfpl::simulation::{
    run_study, write_replicate_table, write_study_table, SimulationConfig, StudyOptions,
};

use crate::args::{FitArgs, PredictArgs, SelectArgs, SimulateArgs, TuningArgs, ValidateArgs};
use crate::error::{CliError, CliResult};
use crate::output::{
    self, coefficients_csv, create_dir, read_coefficients, read_manifest, write_file, write_json,
    write_manifest, FileDigest, Loaded, RunManifest, Thresholds, COEFFICIENTS, FIT_JSON,
};

/// Settings shared by every command, resolved before dispatch.
pub struct Context {
    pub seed: u64,
    pub threads: Option<usize>,
    pub started: Instant,
}

impl Context {
    fn manifest(
        &self,
        command: &str,
        options: &impl Serialize,
        inputs: Vec<FileDigest>,
        outputs: Vec<FileDigest>,
        grid: Option<serde_json::Value>,
        thresholds: Thresholds,
    ) -> CliResult<RunManifest> {
        Ok(RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            options: serde_json::to_value(options)?,
            inputs,
            outputs,
            seed: self.seed,
            threads: self.threads,
            grid,
            thresholds,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        })
    }
}

#[derive(Debug, Serialize)]
struct GroupReport {
    label: String,
    rankings: usize,
    objects_covered: usize,
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    objects: usize,
    variables: Vec<String>,
    total_rankings: usize,
    groups: Vec<GroupReport>,
    incomplete_groups: Vec<String>,
    standardized: bool,
    identifiability: IdentifiabilityReport,
}

pub fn validate(args: &ValidateArgs, ctx: &Context) -> CliResult<()> {
    let loaded = output::load(&args.data)?;
    let report = check_identifiability(&loaded.x, DEFAULT_RANK_TOL);
    let coverage = loaded.data.coverage();
    let groups: Vec<GroupReport> = loaded
        .data
        .groups()
        .iter()
        .zip(&coverage)
        .map(|(g, &c)| GroupReport {
            label: g.label().to_string(),
            rankings: g.len(),
            objects_covered: c,
        })
        .collect();
    let m = loaded.catalog.len();
    println!(
        "{} objects, {} variables, {} groups, {} rankings",
        m,
        loaded.x.ncols(),
        groups.len(),
        loaded.data.total_rankings()
    );
    for g in &groups {
        println!(
            "  group {}: {} rankings, {}/{} objects covered",
            g.label, g.rankings, g.objects_covered, m
        );
    }
    println!(
        "rank(X) = {} of p = {}: {}",
        report.rank,
        report.p,
        if report.passed {
            "identifiable"
        } else {
            "NOT identifiable"
        }
    );
    if !report.passed {
        warn!("covariate matrix is rank deficient; fit and select will refuse without --force");
    }
    let validation = ValidationReport {
        objects: m,
        variables: loaded.x.variable_names().to_vec(),
        total_rankings: loaded.data.total_rankings(),
        groups,
        incomplete_groups: loaded
            .data
            .incomplete_groups()
            .into_iter()
            .map(String::from)
            .collect(),
        standardized: args.data.standardized(),
        identifiability: report,
    };
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        let outputs = vec![write_json(dir, "report.json", &validation)?];
        let manifest = ctx.manifest(
            "validate",
            args,
            loaded.digests,
            outputs,
            None,
            Thresholds::none(),
        )?;
        write_manifest(dir, &manifest)?;
    }
    Ok(())
}

/// Contents of `fit.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub groups: Vec<String>,
    pub variables: Vec<String>,
    pub lambda_s: f64,
    pub lambda_f: f64,
    pub epsilon: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_step_size: f64,
    /// `ℓ + P_ε` per MM step, starting point first.
    pub objective_trace: Vec<f64>,
    /// Unsmoothed `ℓ + P` at the estimate.
    pub penalized_objective: f64,
    pub nll: f64,
    pub df: usize,
    pub df_rule: String,
    pub df_nonzero: usize,
    pub aic: f64,
    pub bic: f64,
    pub criterion: Option<Criterion>,
    pub standardized: bool,
    pub standardization: Option<Standardization>,
}

fn selection_options(t: &TuningArgs, n_s: usize, n_f: usize) -> CliResult<SelectionOptions> {
    Ok(SelectionOptions {
        zero_threshold: t.zero_threshold,
        fusion_threshold: t.fusion_threshold,
        n_s,
        n_f,
        df_rule: t.df_rule.into(),
        controls: t.controls(),
        base: PenaltyConfig::unpenalized().with_epsilon(t.epsilon)?,
    })
}

fn summarize(
    fit: &FitResult,
    scores: IcScores,
    loaded: &Loaded,
    opts: &SelectionOptions,
    criterion: Option<Criterion>,
) -> FitSummary {
    FitSummary {
        groups: loaded.data.group_labels(),
        variables: loaded.x.variable_names().to_vec(),
        lambda_s: fit.config.lambda_s(),
        lambda_f: fit.config.lambda_f(),
        epsilon: fit.config.epsilon(),
        converged: fit.converged,
        iterations: fit.iterations,
        final_step_size: fit.final_step_size,
        objective_trace: fit.objective_trace.clone(),
        penalized_objective: fit.penalized_objective,
        nll: scores.nll,
        df: scores.df,
        df_rule: opts.df_rule.to_string(),
        df_nonzero: effective_df(&fit.coefficients, opts.zero_threshold),
        aic: scores.aic,
        bic: scores.bic,
        criterion,
        standardized: loaded.x.is_standardized(),
        standardization: loaded.x.standardization().cloned(),
    }
}

fn write_fit_outputs(
    dir: &Path,
    fit: &FitResult,
    summary: &FitSummary,
) -> CliResult<Vec<FileDigest>> {
    let csv = coefficients_csv(
        &fit.coefficients,
        &summary.groups,
        &summary.variables,
        summary.standardization.as_ref(),
    )?;
    Ok(vec![
        write_file(dir, COEFFICIENTS, &csv)?,
        write_json(dir, FIT_JSON, summary)?,
    ])
}

fn print_fit(summary: &FitSummary) {
    println!(
        "lambda_s = {}, lambda_f = {}: {} after {} iterations",
        summary.lambda_s,
        summary.lambda_f,
        if summary.converged {
            "converged"
        } else {
            "NOT converged"
        },
        summary.iterations
    );
    println!(
        "nll = {:.6}, df = {}, AIC = {:.4}, BIC = {:.4}",
        summary.nll, summary.df, summary.aic, summary.bic
    );
}

fn convergence(summary: &FitSummary) -> CliResult<()> {
    if summary.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!(
            "fit at lambda_s = {}, lambda_f = {} did not converge in {} iterations (outputs written)",
            summary.lambda_s, summary.lambda_f, summary.iterations
        )))
    }
}

pub fn fit(args: &FitArgs, ctx: &Context) -> CliResult<()> {
    let loaded = output::load(&args.data)?;
    let opts = selection_options(&args.tuning, 1, 1)?;
    let cfg = opts.base.with_lambdas(args.lambda_s, args.lambda_f)?;
    let fit = optimizer::fit(&loaded.data, &loaded.x, &cfg, &opts.controls)?;
    let scores = IcScores::evaluate(&fit, &loaded.data, &loaded.x, &opts)?;
    let summary = summarize(&fit, scores, &loaded, &opts, None);

    create_dir(&args.out)?;
    let outputs = write_fit_outputs(&args.out, &fit, &summary)?;
    let manifest = ctx.manifest(
        "fit",
        args,
        loaded.digests.clone(),
        outputs,
        None,
        Thresholds::from_tuning(&args.tuning),
    )?;
    write_manifest(&args.out, &manifest)?;
    print_fit(&summary);
    convergence(&summary)
}

#[derive(Debug, Serialize)]
struct GridInfo {
    lambda_s: Vec<f64>,
    lambda_f: Vec<f64>,
    lambda_s_max: Option<f64>,
    lambda_f_max: Option<f64>,
    chosen: usize,
}

fn ic_table(result: &SelectionResult) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Core(e.into());
    w.write_record([
        "lambda_s",
        "lambda_f",
        "df",
        "aic",
        "bic",
        "nll",
        "converged",
        "chosen",
        "error",
    ])
    .map_err(io)?;
    for (i, cell) in result.cells.iter().enumerate() {
        let num = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:?}"));
        let s = cell.scores;
        w.write_record([
            format!("{:?}", cell.lambda_s),
            format!("{:?}", cell.lambda_f),
            s.map_or_else(|| "NA".to_string(), |s| s.df.to_string()),
            num(s.map(|s| s.aic)),
            num(s.map(|s| s.bic)),
            num(s.map(|s| s.nll)),
            cell.fit
                .as_ref()
                .map_or_else(|| "NA".to_string(), |f| f.converged.to_string()),
            (i == result.chosen).to_string(),
            cell.error.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| CliError::io("ic_table.csv", e.into_error()))
}

pub fn select_cmd(args: &SelectArgs, ctx: &Context) -> CliResult<()> {
    let loaded = output::load(&args.data)?;
    let n_s = if args.grid_s.is_some() { 1 } else { args.n_s };
    let n_f = if args.grid_f.is_some() { 1 } else { args.n_f };
    let opts = selection_options(&args.tuning, n_s, n_f)?;
    let criterion: Criterion = args.criterion.into();

    let (grid, lambda_s_max, lambda_f_max) = match (&args.grid_s, &args.grid_f) {
        (Some(s), Some(f)) => (PenaltyGrid::new(s.clone(), f.clone())?, None, None),
        _ => {
            let built = build_grid(&loaded.data, &loaded.x, &opts)?;
            info!(
                "grid endpoints: lambda_s_max = {}, lambda_f_max = {}",
                built.lambda_s_max, built.lambda_f_max
            );
            let s = args
                .grid_s
                .clone()
                .unwrap_or_else(|| built.grid.lambda_s().to_vec());
            let f = args
                .grid_f
                .clone()
                .unwrap_or_else(|| built.grid.lambda_f().to_vec());
            (
                PenaltyGrid::new(s, f)?,
                args.grid_s.is_none().then_some(built.lambda_s_max),
                args.grid_f.is_none().then_some(built.lambda_f_max),
            )
        }
    };
    let result = select(&loaded.data, &loaded.x, &grid, criterion, &opts)?;
    let fit = result.chosen_fit();
    let summary = summarize(fit, result.chosen_scores(), &loaded, &opts, Some(criterion));

    create_dir(&args.out)?;
    let mut outputs = vec![write_file(&args.out, "ic_table.csv", &ic_table(&result)?)?];
    outputs.extend(write_fit_outputs(&args.out, fit, &summary)?);
    let grid_info = GridInfo {
        lambda_s: grid.lambda_s().to_vec(),
        lambda_f: grid.lambda_f().to_vec(),
        lambda_s_max,
        lambda_f_max,
        chosen: result.chosen,
    };
    let manifest = ctx.manifest(
        "select",
        args,
        loaded.digests.clone(),
        outputs,
        Some(serde_json::to_value(&grid_info)?),
        Thresholds::from_tuning(&args.tuning),
    )?;
    write_manifest(&args.out, &manifest)?;
    let failed = result.cells.iter().filter(|c| c.error.is_some()).count();
    println!(
        "{} grid cells ({} failed), chosen by {}:",
        result.cells.len(),
        failed,
        criterion.to_string().to_uppercase()
    );
    print_fit(&summary);
    convergence(&summary)
}

pub fn predict(args: &PredictArgs, ctx: &Context) -> CliResult<()> {
    let manifest = read_manifest(&args.fit)?;
    if manifest.command != "fit" && manifest.command != "select" {
        return Err(CliError::invalid(
            "--fit",
            format!(
                "{} holds `{}` output, not a fit",
                args.fit.display(),
                manifest.command
            ),
        ));
    }
    let fit_path = args.fit.join(FIT_JSON);
    let summary: FitSummary =
        serde_json::from_slice(&fs::read(&fit_path).map_err(|e| CliError::io(&fit_path, e))?)
            .map_err(|e| CliError::invalid(fit_path.display().to_string(), e.to_string()))?;
    let coefs = read_coefficients(&args.fit.join(COEFFICIENTS))?;

    let recorded = manifest
        .inputs
        .iter()
        .find(|d| d.role == "covariates")
        .ok_or_else(|| CliError::invalid("--fit", "manifest records no covariates file"))?;
    let cov_path = args
        .covariates
        .clone()
        .unwrap_or_else(|| recorded.path.clone().into());
    let cov_digest = output::digest("covariates", &cov_path)?;
    if cov_digest.sha256 != recorded.sha256 {
        return Err(CliError::invalid(
            "--covariates",
            format!(
                "{} differs from the file the fit was made on",
                cov_path.display()
            ),
        ));
    }
    let new_digest = output::digest("new_covariates", &args.new_covariates)?;

    let (catalog, raw) = load_covariates(&cov_path)?;
    if raw.variable_names() != coefs.variables.as_slice() {
        return Err(CliError::invalid(
            "--fit",
            "coefficient variables do not match the covariate columns",
        ));
    }
    let x = if summary.standardized {
        raw.standardize()?
    } else {
        raw
    };
    let file =
        fs::File::open(&args.new_covariates).map_err(|e| CliError::io(&args.new_covariates, e))?;
    let new_objects = read_new_objects(file, x.variable_names())?;
    let table = predict_new(
        &coefs.coefficients,
        &x,
        catalog.labels(),
        &new_objects,
        coefs.groups,
    )?;

    create_dir(&args.out)?;
    let mut bytes = Vec::new();
    write_rank_table(&table, &mut bytes)?;
    let outputs = vec![write_file(&args.out, "rank_table.csv", &bytes)?];
    let manifest_out = ctx.manifest(
        "predict",
        args,
        vec![
            output::digest("fit_coefficients", &args.fit.join(COEFFICIENTS))?,
            output::digest("fit_summary", &fit_path)?,
            cov_digest,
            new_digest,
        ],
        outputs,
        None,
        Thresholds::none(),
    )?;
    write_manifest(&args.out, &manifest_out)?;
    for (g, label) in table.group_labels.iter().enumerate() {
        let top: Vec<String> = table
            .ordering(g)
            .into_iter()
            .take(5)
            .map(|j| {
                let mark = if table.predicted_only[j] { "*" } else { "" };
                format!("{}{}", table.object_labels[j], mark)
            })
            .collect();
        println!("group {label}: {}", top.join(" > "));
    }
    Ok(())
}

fn scenarios(args: &SimulateArgs) -> CliResult<Vec<SimulationConfig>> {
    let mut out = Vec::new();
    for name in &args.scenario {
        let mut cfg = SimulationConfig::preset(name)?;
        if let Some(n) = args.new_objects {
            cfg.new_objects = n;
        }
        cfg.validate()?;
        out.push(cfg);
    }
    if let (Some(vars), Some(rankers)) = (args.vars, args.rankers) {
        let mut cfg = SimulationConfig::baseline(vars, rankers, args.eta, args.delta);
        if let Some(k) = args.groups {
            cfg.groups = k;
        }
        if let Some(m) = args.objects {
            cfg.objects = m;
        }
        if let Some(m) = args.ranked {
            cfg.ranked = m;
        }
        if let Some(n) = args.new_objects {
            cfg.new_objects = n;
        }
        let cfg = cfg.renamed_auto();
        cfg.validate()?;
        out.push(cfg);
    }
    if out.is_empty() {
        return Err(CliError::invalid(
            "scenario",
            "give --scenario or both --vars and --rankers",
        ));
    }
    Ok(out)
}

pub fn simulate(args: &SimulateArgs, ctx: &Context) -> CliResult<()> {
    let scenarios = scenarios(args)?;
    let opts = StudyOptions {
        replicates: args.replicates,
        seed: ctx.seed,
        methods: args.methods.iter().map(|&m| m.into()).collect(),
        criterion: args.criterion.into(),
        selection: selection_options(&args.tuning, args.n_s, args.n_f)?,
        f1_variant: args.f1_variant.into(),
        record_timing: args.record_timing,
    };
    info!(
        "{} scenarios x {} replicates",
        scenarios.len(),
        opts.replicates
    );
    let study = run_study(&scenarios, &opts)?;

    create_dir(&args.out)?;
    let mut study_bytes = Vec::new();
    write_study_table(&study.rows, &mut study_bytes)?;
    let mut rep_bytes = Vec::new();
    write_replicate_table(
        &scenarios,
        &study.records,
        opts.record_timing,
        &mut rep_bytes,
    )?;
    let outputs = vec![
        write_file(&args.out, "study.csv", &study_bytes)?,
        write_file(&args.out, "replicates.csv", &rep_bytes)?,
    ];
    let manifest = ctx.manifest(
        "simulate",
        &serde_json::json!({ "args": args, "scenarios": scenarios }),
        Vec::new(),
        outputs,
        None,
        Thresholds::from_tuning(&args.tuning),
    )?;
    write_manifest(&args.out, &manifest)?;

    let na = |s: &Option<sfpl::simulation::Summary>| {
        s.as_ref()
            .map_or_else(|| "NA".to_string(), |s| format!("{:.3}", s.mean))
    };
    println!("scenario            method  ok  rmse   f1     rcr    rcr_pred");
    for row in &study.rows {
        println!(
            "{:<19} {:<6} {:>3}  {:<6} {:<6} {:<6} {}",
            row.scenario.name,
            row.method.to_string(),
            row.succeeded,
            na(&row.rmse),
            na(&row.f1),
            na(&row.rcr),
            na(&row.rcr_pred)
        );
    }
    Ok(())
}
