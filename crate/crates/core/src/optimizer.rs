//! MM-Newton estimation of the penalized model.
//!
//! Each iteration minimizes a Newton approximation of the surrogate
//! `Q(B | B_h) = ℓ(B) + S(B | B_h)`:
//!
//! ```text
//! B_{h+1} = B_h − α_h [∇²ℓ + λ_s V_s + λ_f V_f]⁻¹ [∇ℓ + (λ_s V_s + λ_f V_f) B_h]
//! ```
//!
//! with α_h found by step halving. The surrogate majorizes the smoothed
//! objective `ℓ + P_ε` (each `|t|` replaced by `|t| − ε log(1 + |t|/ε)`), so
//! halving and the stopping rule both use that objective and its trace is
//! monotone. The iteration starts from the per-group unpenalized MLE.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::data::{
    check_identifiability, CovariateMatrix, PartialRanking, RankingDataset, DEFAULT_RANK_TOL,
};
use crate::error::{Error, Result};
use crate::likelihood::{evaluate, group_derivatives, neg_log_likelihood, CoefficientSet};
use crate::penalty::{build_vf, build_vs, penalty_value, smoothed_penalty_value, PenaltyConfig};

const MLE_GRAD_TOL: f64 = 1e-6;
const MLE_MAX_ITER: usize = 100;
const MLE_COND_LIMIT: f64 = 1e12;
const MAX_HALVINGS: usize = 50;
const DESCENT_MARGIN: f64 = 1e-12;
const SOLVE_RIDGE: f64 = 1e-8;
const RIDGE_ESCALATIONS: usize = 3;

/// Stopping rule for [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitControls {
    /// Relative objective change at which iteration stops.
    pub xi: f64,
    pub max_iter: usize,
    /// Skip the full-column-rank check on X.
    pub force: bool,
}

impl Default for FitControls {
    fn default() -> Self {
        Self {
            xi: 1e-8,
            max_iter: 500,
            force: false,
        }
    }
}

/// Converged estimate and its iteration history.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub coefficients: CoefficientSet,
    /// `ℓ + P_ε` at the start point followed by one value per MM step.
    pub objective_trace: Vec<f64>,
    /// Unsmoothed `ℓ + P` at the returned coefficients.
    pub penalized_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_step_size: f64,
    pub config: PenaltyConfig,
}

impl FitResult {
    pub fn objective(&self) -> f64 {
        *self
            .objective_trace
            .last()
            .expect("trace holds the start value")
    }
}

/// Per-group unpenalized maximum likelihood estimate.
#[derive(Debug, Clone)]
pub struct MleEstimate {
    pub coefficients: CoefficientSet,
    /// False if any group hit the iteration cap or exhausted step halving.
    pub converged: bool,
    pub iterations: Vec<usize>,
}

/// Damped Newton-Raphson on one group's likelihood, from β = 0.
pub fn group_mle(rankings: &[PartialRanking], x: &CovariateMatrix) -> (Vec<f64>, bool, usize) {
    let p = x.ncols();
    let mut beta = vec![0.0; p];
    let mut current = group_derivatives(rankings, &beta, x, true);
    for it in 0..MLE_MAX_ITER {
        if current.gradient.amax() < MLE_GRAD_TOL {
            return (beta, true, it);
        }
        let h = current.hessian.take().expect("hessian requested");
        let dir = match newton_direction(h, &current.gradient) {
            Some(d) => d,
            None => return (beta, false, it),
        };
        let f0 = current.value;
        let slack = 1e-12 * f0.abs().max(1.0);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = beta
                .iter()
                .zip(dir.iter())
                .map(|(b, d)| b - alpha * d)
                .collect();
            let val = group_derivatives(rankings, &cand, x, false).value;
            if val.is_finite() && val <= f0 + slack {
                accepted = Some(cand);
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some(next) => {
                beta = next;
                current = group_derivatives(rankings, &beta, x, true);
            }
            None => return (beta, false, it + 1),
        }
    }
    let ok = current.gradient.amax() < MLE_GRAD_TOL;
    (beta, ok, MLE_MAX_ITER)
}

/// Solves `H d = g`, adding a ridge of 1e-6·trace/p when H is singular or
/// badly conditioned.
fn newton_direction(mut h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let p = h.nrows();
    let eig = SymmetricEigen::new(h.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0 && max / min <= MLE_COND_LIMIT) {
        let trace = h.trace();
        let ridge = if trace > 0.0 {
            1e-6 * trace / p as f64
        } else {
            1e-6
        };
        for i in 0..p {
            h[(i, i)] += ridge;
        }
    }
    h.cholesky().map(|c| c.solve(g))
}

/// B̂^[0]: independent damped Newton fits per group.
pub fn initial_estimate(data: &RankingDataset, x: &CovariateMatrix) -> Result<MleEstimate> {
    crate::data::check_compatible(data, x)?;
    let k = data.num_groups();
    let p = x.ncols();
    let mut b = DMatrix::zeros(k, p);
    let mut converged = true;
    let mut iterations = Vec::with_capacity(k);
    for (gi, group) in data.groups().iter().enumerate() {
        let (beta, ok, it) = group_mle(group.rankings(), x);
        if !ok {
            warn!(
                "maximum likelihood iteration for group `{}` did not converge after {it} steps",
                group.label()
            );
        }
        converged &= ok;
        iterations.push(it);
        for (q, v) in beta.into_iter().enumerate() {
            b[(gi, q)] = v;
        }
    }
    Ok(MleEstimate {
        coefficients: CoefficientSet::from_matrix(b)?,
        converged,
        iterations,
    })
}

/// Result of one MM-Newton step.
#[derive(Debug, Clone)]
pub struct MmStep {
    pub coefficients: CoefficientSet,
    /// Accepted α_h; 0 when no halving produced descent.
    pub step_size: f64,
    /// `ℓ + P_ε` at the returned coefficients.
    pub objective: f64,
}

/// Cholesky solve with ridge escalation 1e-8·trace/n, ×10 up to three times.
pub(crate) fn solve_spd(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(c) = a.clone().cholesky() {
        return Ok(c.solve(rhs));
    }
    let n = a.nrows();
    let trace = a.trace();
    let mut ridge = if trace > 0.0 {
        SOLVE_RIDGE * trace / n as f64
    } else {
        SOLVE_RIDGE
    };
    for _ in 0..=RIDGE_ESCALATIONS {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += ridge;
        }
        if let Some(c) = m.cholesky() {
            return Ok(c.solve(rhs));
        }
        ridge *= 10.0;
    }
    Err(Error::LinearSolve)
}

pub fn mm_step(
    b_h: &CoefficientSet,
    data: &RankingDataset,
    x: &CovariateMatrix,
    cfg: &PenaltyConfig,
) -> Result<MmStep> {
    cfg.check_groups(b_h.num_groups())?;
    let objective = neg_log_likelihood(b_h, data, x)? + smoothed_penalty_value(b_h, cfg)?;
    step_from(b_h, objective, data, x, cfg)
}

fn step_from(
    b_h: &CoefficientSet,
    objective: f64,
    data: &RankingDataset,
    x: &CovariateMatrix,
    cfg: &PenaltyConfig,
) -> Result<MmStep> {
    let (k, p) = (b_h.num_groups(), b_h.num_vars());
    let eval = evaluate(b_h, data, x)?;
    let mut curvature = DMatrix::zeros(k * p, k * p);
    if cfg.lambda_s() > 0.0 {
        curvature += build_vs(b_h, cfg) * cfg.lambda_s();
    }
    if cfg.lambda_f() > 0.0 && k > 1 {
        curvature += build_vf(b_h, cfg) * cfg.lambda_f();
    }
    let current = b_h.to_vector();
    let rhs = &eval.gradient + &curvature * &current;
    let stay = MmStep {
        coefficients: b_h.clone(),
        step_size: 0.0,
        objective,
    };
    if rhs.iter().all(|&v| v == 0.0) {
        return Ok(stay);
    }
    let system = eval.hessian + curvature;
    let dir = solve_spd(&system, &rhs)?;
    if dir.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("MM-Newton direction"));
    }

    let mut alpha = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let cand = CoefficientSet::from_vector(k, p, &(&current - &dir * alpha));
        if let Ok(cand) = cand {
            let val = neg_log_likelihood(&cand, data, x)
                .and_then(|l| Ok(l + smoothed_penalty_value(&cand, cfg)?));
            if let Ok(val) = val {
                if val <= objective - DESCENT_MARGIN {
                    return Ok(MmStep {
                        coefficients: cand,
                        step_size: alpha,
                        objective: val,
                    });
                }
            }
        }
        alpha *= 0.5;
    }
    Ok(stay)
}

/// Fits the penalized model starting from the per-group MLE.
pub fn fit(
    data: &RankingDataset,
    x: &CovariateMatrix,
    cfg: &PenaltyConfig,
    controls: &FitControls,
) -> Result<FitResult> {
    preflight(data, x, cfg, controls)?;
    let start = initial_estimate(data, x)?;
    run(start.coefficients, data, x, cfg, controls)
}

/// Fits the penalized model from a caller-supplied start point.
pub fn fit_from(
    start: &CoefficientSet,
    data: &RankingDataset,
    x: &CovariateMatrix,
    cfg: &PenaltyConfig,
    controls: &FitControls,
) -> Result<FitResult> {
    preflight(data, x, cfg, controls)?;
    run(start.clone(), data, x, cfg, controls)
}

fn preflight(
    data: &RankingDataset,
    x: &CovariateMatrix,
    cfg: &PenaltyConfig,
    controls: &FitControls,
) -> Result<()> {
    crate::data::check_compatible(data, x)?;
    cfg.check_groups(data.num_groups())?;
    if !(controls.xi.is_finite() && controls.xi > 0.0) {
        return Err(Error::Config(format!(
            "xi must be positive, got {}",
            controls.xi
        )));
    }
    if !controls.force {
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

pub(crate) fn run(
    start: CoefficientSet,
    data: &RankingDataset,
    x: &CovariateMatrix,
    cfg: &PenaltyConfig,
    controls: &FitControls,
) -> Result<FitResult> {
    let mut b = start;
    let mut objective = neg_log_likelihood(&b, data, x)? + smoothed_penalty_value(&b, cfg)?;
    let mut trace = vec![objective];
    let mut iterations = 0;
    let mut converged = false;
    let mut step_size = 0.0;

    while iterations < controls.max_iter {
        if objective == 0.0 {
            converged = true;
            break;
        }
        let step = step_from(&b, objective, data, x, cfg)?;
        iterations += 1;
        step_size = step.step_size;
        let change = ((step.objective - objective) / objective).abs();
        b = step.coefficients;
        objective = step.objective;
        trace.push(objective);
        if change <= controls.xi {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!(
            "MM iteration stopped after {iterations} steps without meeting the relative change {}",
            controls.xi
        );
    }
    let penalized_objective = neg_log_likelihood(&b, data, x)? + penalty_value(&b, cfg)?;
    Ok(FitResult {
        penalized_objective,
        coefficients: b,
        objective_trace: trace,
        iterations,
        converged,
        final_step_size: step_size,
        config: cfg.clone(),
    })
}
