//! Sparsity and fusion penalties, their quadratic majorizer and the
//! curvature matrices used by the MM-Newton update.
//!
//! With `φ_ε(t) = t − ε·ln(1 + t/ε)` the majorizer at `B_h` replaces each
//! penalized absolute value `|u|` (a coefficient or a pairwise difference,
//! current value `u_h`) by
//!
//! ```text
//! φ_ε(|u_h|) + (u² − u_h²) / (2(|u_h| + ε))
//! ```
//!
//! which touches `φ_ε(|u|)` at `u = u_h` and lies above it everywhere, because
//! `φ_ε(√v)` is concave in `v`. The smoothed penalty `P_ε` built from `φ_ε` is
//! therefore what the iteration majorizes; it differs from the L1 penalty by
//! at most `ε·ln(1 + |u|/ε)` per term.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateMatrix, RankingDataset};
use crate::error::{Error, Result};
use crate::likelihood::{neg_log_likelihood, CoefficientSet};

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Penalty strengths, optional pairwise fusion weights and the smoothing ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    lambda_s: f64,
    lambda_f: f64,
    /// K x K fusion weights; `None` means all ones.
    tau: Option<Vec<Vec<f64>>>,
    epsilon: f64,
}

impl PenaltyConfig {
    pub fn new(lambda_s: f64, lambda_f: f64) -> Result<Self> {
        check_lambda("lambda_s", lambda_s)?;
        check_lambda("lambda_f", lambda_f)?;
        Ok(Self {
            lambda_s,
            lambda_f,
            tau: None,
            epsilon: DEFAULT_EPSILON,
        })
    }

    pub fn unpenalized() -> Self {
        Self::new(0.0, 0.0).expect("zero penalties are valid")
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    /// Symmetric nonnegative weights; the diagonal is ignored.
    pub fn with_tau(mut self, tau: Vec<Vec<f64>>) -> Result<Self> {
        let k = tau.len();
        for (i, row) in tau.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Config("tau must be square".into()));
            }
            for (j, &t) in row.iter().enumerate() {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(Error::Config(format!(
                        "tau[{i}][{j}] = {t} is not a nonnegative number"
                    )));
                }
                if i != j && (t - tau[j][i]).abs() > 1e-12 * t.abs().max(1.0) {
                    return Err(Error::Config(format!("tau is not symmetric at ({i}, {j})")));
                }
            }
        }
        self.tau = Some(tau);
        Ok(self)
    }

    /// Same τ and ε with new penalty strengths.
    pub fn with_lambdas(&self, lambda_s: f64, lambda_f: f64) -> Result<Self> {
        check_lambda("lambda_s", lambda_s)?;
        check_lambda("lambda_f", lambda_f)?;
        Ok(Self {
            lambda_s,
            lambda_f,
            ..self.clone()
        })
    }

    pub fn lambda_s(&self) -> f64 {
        self.lambda_s
    }

    pub fn lambda_f(&self) -> f64 {
        self.lambda_f
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tau_matrix(&self) -> Option<&[Vec<f64>]> {
        self.tau.as_deref()
    }

    /// τ_{k,k'} (1 when no weights were supplied).
    pub fn tau(&self, k: usize, k2: usize) -> f64 {
        self.tau.as_ref().map_or(1.0, |t| t[k][k2])
    }

    /// Weights permuted consistently with a group reordering.
    pub fn reorder_groups(&self, order: &[usize]) -> Self {
        let tau = self.tau.as_ref().map(|t| {
            order
                .iter()
                .map(|&i| order.iter().map(|&j| t[i][j]).collect())
                .collect()
        });
        Self {
            tau,
            ..self.clone()
        }
    }

    pub(crate) fn check_groups(&self, groups: usize) -> Result<()> {
        match &self.tau {
            Some(t) if t.len() != groups => Err(Error::Shape(format!(
                "tau is {0}x{0} for {groups} groups",
                t.len()
            ))),
            _ => Ok(()),
        }
    }
}

fn check_lambda(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::Config(format!(
            "{name} must be a finite nonnegative number, got {v}"
        )));
    }
    Ok(())
}

fn check_pair(b: &CoefficientSet, b_h: &CoefficientSet) -> Result<()> {
    if b.matrix().shape() != b_h.matrix().shape() {
        return Err(Error::Shape(format!(
            "coefficient shapes {:?} and {:?} differ",
            b.matrix().shape(),
            b_h.matrix().shape()
        )));
    }
    Ok(())
}

fn smooth_abs(t: f64, eps: f64) -> f64 {
    let a = t.abs();
    a - eps * (a / eps).ln_1p()
}

/// Applies `f` to every penalized quantity: coefficients with weight λ_s,
/// pairwise differences with weight λ_f τ_{k,k'}.
fn sum_terms(b: &CoefficientSet, cfg: &PenaltyConfig, f: impl Fn(f64) -> f64) -> f64 {
    let (k, p) = (b.num_groups(), b.num_vars());
    let m = b.matrix();
    let mut sparse = 0.0;
    for v in m.iter() {
        sparse += f(*v);
    }
    let mut fused = 0.0;
    if cfg.lambda_f > 0.0 {
        for a in 0..k {
            for c in (a + 1)..k {
                let tau = cfg.tau(a, c);
                if tau == 0.0 {
                    continue;
                }
                let mut s = 0.0;
                for q in 0..p {
                    s += f(m[(a, q)] - m[(c, q)]);
                }
                fused += tau * s;
            }
        }
    }
    cfg.lambda_s * sparse + cfg.lambda_f * fused
}

/// `λ_s Σ_k ‖β^(k)‖₁ + λ_f Σ_{k<k'} τ_{k,k'} ‖β^(k) − β^(k')‖₁`.
pub fn penalty_value(b: &CoefficientSet, cfg: &PenaltyConfig) -> Result<f64> {
    cfg.check_groups(b.num_groups())?;
    Ok(sum_terms(b, cfg, f64::abs))
}

/// The penalty with every `|u|` replaced by `φ_ε(|u|)`.
pub fn smoothed_penalty_value(b: &CoefficientSet, cfg: &PenaltyConfig) -> Result<f64> {
    cfg.check_groups(b.num_groups())?;
    let eps = cfg.epsilon;
    Ok(sum_terms(b, cfg, |u| smooth_abs(u, eps)))
}

/// The quadratic majorizer S(B | B_h) of the smoothed penalty.
pub fn surrogate_value(
    b: &CoefficientSet,
    b_h: &CoefficientSet,
    cfg: &PenaltyConfig,
) -> Result<f64> {
    check_pair(b, b_h)?;
    cfg.check_groups(b.num_groups())?;
    let eps = cfg.epsilon;
    let term = |u: f64, u_h: f64| {
        let a = u_h.abs();
        smooth_abs(u_h, eps) + (u * u - u_h * u_h) / (2.0 * (a + eps))
    };
    let (k, p) = (b.num_groups(), b.num_vars());
    let (m, mh) = (b.matrix(), b_h.matrix());
    let mut sparse = 0.0;
    for (v, vh) in m.iter().zip(mh.iter()) {
        sparse += term(*v, *vh);
    }
    let mut fused = 0.0;
    if cfg.lambda_f > 0.0 {
        for a in 0..k {
            for c in (a + 1)..k {
                let tau = cfg.tau(a, c);
                if tau == 0.0 {
                    continue;
                }
                let mut s = 0.0;
                for q in 0..p {
                    s += term(m[(a, q)] - m[(c, q)], mh[(a, q)] - mh[(c, q)]);
                }
                fused += tau * s;
            }
        }
    }
    Ok(cfg.lambda_s * sparse + cfg.lambda_f * fused)
}

/// Diagonal Kp x Kp matrix with entries `1 / (|β_q^(k)| + ε)` (group-major).
pub fn build_vs(b_h: &CoefficientSet, cfg: &PenaltyConfig) -> DMatrix<f64> {
    let v = b_h.to_vector();
    let diag = v.map(|b| 1.0 / (b.abs() + cfg.epsilon));
    DMatrix::from_diagonal(&diag)
}

/// Kp x Kp weighted graph Laplacian of the fusion majorizer.
///
/// For each variable q the K x K slice has off-diagonal entries
/// `−τ_{k,k'} / (|β_q^(k) − β_q^(k')| + ε)` and diagonal entries equal to
/// minus the off-diagonal row sum. Entries linking different variables are 0.
pub fn build_vf(b_h: &CoefficientSet, cfg: &PenaltyConfig) -> DMatrix<f64> {
    let (k, p) = (b_h.num_groups(), b_h.num_vars());
    let m = b_h.matrix();
    let mut v = DMatrix::zeros(k * p, k * p);
    for q in 0..p {
        for a in 0..k {
            for c in (a + 1)..k {
                let w = cfg.tau(a, c) / ((m[(a, q)] - m[(c, q)]).abs() + cfg.epsilon);
                let (i, j) = (a * p + q, c * p + q);
                v[(i, j)] = -w;
                v[(j, i)] = -w;
                v[(i, i)] += w;
                v[(j, j)] += w;
            }
        }
    }
    v
}

/// ℓ_P(B) = ℓ(B) + P(B).
pub fn penalized_objective(
    b: &CoefficientSet,
    data: &RankingDataset,
    x: &CovariateMatrix,
    cfg: &PenaltyConfig,
) -> Result<f64> {
    Ok(neg_log_likelihood(b, data, x)? + penalty_value(b, cfg)?)
}

/// ℓ(B) + P_ε(B), the objective majorized by [`surrogate_objective`].
pub fn smoothed_objective(
    b: &CoefficientSet,
    data: &RankingDataset,
    x: &CovariateMatrix,
    cfg: &PenaltyConfig,
) -> Result<f64> {
    Ok(neg_log_likelihood(b, data, x)? + smoothed_penalty_value(b, cfg)?)
}

/// Q(B | B_h) = ℓ(B) + S(B | B_h).
pub fn surrogate_objective(
    b: &CoefficientSet,
    b_h: &CoefficientSet,
    data: &RankingDataset,
    x: &CovariateMatrix,
    cfg: &PenaltyConfig,
) -> Result<f64> {
    Ok(neg_log_likelihood(b, data, x)? + surrogate_value(b, b_h, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cs(rows: &[Vec<f64>]) -> CoefficientSet {
        CoefficientSet::from_rows(rows).unwrap()
    }

    #[test]
    fn penalty_examples() {
        let b = cs(&[vec![1.0, -2.0], vec![1.0, 0.0]]);
        assert_eq!(
            penalty_value(&b, &PenaltyConfig::unpenalized()).unwrap(),
            0.0
        );
        let cfg = PenaltyConfig::new(0.5, 1.0).unwrap();
        assert!((penalty_value(&b, &cfg).unwrap() - 4.0).abs() < 1e-15);

        let single = cs(&[vec![1.0, -2.0]]);
        let fuse_only = PenaltyConfig::new(0.0, 7.0).unwrap();
        assert_eq!(penalty_value(&single, &fuse_only).unwrap(), 0.0);
    }

    #[test]
    fn unit_tau_matches_default() {
        let b = cs(&[vec![1.0, -2.0], vec![0.5, 0.0], vec![-1.0, 3.0]]);
        let cfg = PenaltyConfig::new(0.3, 0.7).unwrap();
        let ones = cfg.clone().with_tau(vec![vec![1.0; 3]; 3]).unwrap();
        assert_eq!(
            penalty_value(&b, &cfg).unwrap(),
            penalty_value(&b, &ones).unwrap()
        );
        let weighted = cfg
            .with_tau(vec![
                vec![0.0, 2.0, 0.0],
                vec![2.0, 0.0, 1.0],
                vec![0.0, 1.0, 0.0],
            ])
            .unwrap();
        // 0.3 * 7.5 + 0.7 * (2 * 2.5 + 1 * 4.5)
        assert!((penalty_value(&b, &weighted).unwrap() - (2.25 + 0.7 * 9.5)).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs() {
        assert!(PenaltyConfig::new(-1.0, 0.0).is_err());
        assert!(PenaltyConfig::new(0.0, f64::NAN).is_err());
        assert!(PenaltyConfig::unpenalized().with_epsilon(0.0).is_err());
        assert!(PenaltyConfig::unpenalized()
            .with_tau(vec![vec![0.0, 1.0], vec![2.0, 0.0]])
            .is_err());
        assert!(PenaltyConfig::unpenalized()
            .with_tau(vec![vec![0.0, -1.0], vec![-1.0, 0.0]])
            .is_err());
    }

    #[test]
    fn vs_entries() {
        let cfg = PenaltyConfig::unpenalized();
        let vs = build_vs(&cs(&[vec![0.0, 1.0]]), &cfg);
        assert!((vs[(0, 0)] / 1e5 - 1.0).abs() < 1e-12);
        assert!((vs[(1, 1)] - 1.0 / 1.00001).abs() < 1e-15);
        assert!((vs[(1, 1)] - 0.99999).abs() < 1e-9);
        assert_eq!(vs[(0, 1)], 0.0);
    }

    #[test]
    fn vf_for_equal_rows() {
        let cfg = PenaltyConfig::unpenalized();
        let vf = build_vf(&cs(&[vec![0.4], vec![0.4]]), &cfg);
        assert!((vf[(0, 0)] / 1e5 - 1.0).abs() < 1e-12);
        assert!((vf[(1, 1)] / 1e5 - 1.0).abs() < 1e-12);
        assert!((vf[(0, 1)] / -1e5 - 1.0).abs() < 1e-12);
        assert!((vf[(1, 0)] / -1e5 - 1.0).abs() < 1e-12);

        let single = build_vf(&cs(&[vec![0.4, 2.0]]), &cfg);
        assert!(single.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn penalty_off_surrogate_vanishes() {
        let b = cs(&[vec![1.0, -2.0], vec![0.3, 0.1]]);
        let bh = cs(&[vec![0.2, 0.0], vec![-1.0, 4.0]]);
        let s = surrogate_value(&b, &bh, &PenaltyConfig::unpenalized()).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn surrogate_touches_smoothed_penalty() {
        let bh = cs(&[vec![0.2, 0.0, -3.0], vec![-1.0, 4.0, 1e-6]]);
        let cfg = PenaltyConfig::new(1.3, 0.8).unwrap();
        let s = surrogate_value(&bh, &bh, &cfg).unwrap();
        let p = smoothed_penalty_value(&bh, &cfg).unwrap();
        assert!((s - p).abs() < 1e-12);
    }

    #[test]
    fn surrogate_is_quadratic_in_vs_vf() {
        // S(B|B_h) - S(0|B_h) = ½ vec(B)ᵀ (λ_s V_s + λ_f V_f) vec(B)
        let b = cs(&[vec![1.0, -2.0], vec![0.3, 0.1], vec![0.0, 0.7]]);
        let bh = cs(&[vec![0.2, 0.0], vec![-1.0, 4.0], vec![0.5, 0.5]]);
        let cfg = PenaltyConfig::new(0.6, 1.7).unwrap();
        let zero = CoefficientSet::zeros(3, 2);
        let curv = build_vs(&bh, &cfg) * cfg.lambda_s() + build_vf(&bh, &cfg) * cfg.lambda_f();
        let v = b.to_vector();
        let quad = 0.5 * (v.transpose() * &curv * &v)[(0, 0)];
        let diff =
            surrogate_value(&b, &bh, &cfg).unwrap() - surrogate_value(&zero, &bh, &cfg).unwrap();
        assert!(
            (quad - diff).abs() < 1e-9 * quad.abs().max(1.0),
            "{quad} vs {diff}"
        );
    }
}
