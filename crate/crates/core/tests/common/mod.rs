#![allow(dead_code)]

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfpl::data::{CovariateMatrix, RankingDataset, RankingGroup};
use sfpl::likelihood::CoefficientSet;
use sfpl::simulation::sample_partial_ranking;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn covariates(rng: &mut ChaCha8Rng, m: usize, p: usize) -> CovariateMatrix {
    let rows = (0..m)
        .map(|_| (0..p).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    CovariateMatrix::from_rows(rows, (0..p).map(|q| format!("x{q}")).collect()).unwrap()
}

pub fn coefficients(rng: &mut ChaCha8Rng, k: usize, p: usize, scale: f64) -> CoefficientSet {
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..p).map(|_| rng.random_range(-scale..scale)).collect())
        .collect();
    CoefficientSet::from_rows(&rows).unwrap()
}

pub fn dataset(
    rng: &mut ChaCha8Rng,
    b: &CoefficientSet,
    x: &CovariateMatrix,
    n: usize,
    m: usize,
) -> RankingDataset {
    let groups = (0..b.num_groups())
        .map(|k| {
            let beta = b.beta(k);
            let rankings = (0..n)
                .map(|_| {
                    let subset = sample(rng, x.nrows(), m).into_vec();
                    sample_partial_ranking(&beta, x, &subset, rng).unwrap()
                })
                .collect();
            RankingGroup::new(format!("g{k}"), rankings)
        })
        .collect();
    RankingDataset::new(groups, x.nrows()).unwrap()
}

/// A small random problem: K groups, M objects, p variables, n rankings of m.
pub struct Instance {
    pub x: CovariateMatrix,
    pub truth: CoefficientSet,
    pub data: RankingDataset,
}

pub fn instance(seed: u64, k: usize, m_obj: usize, p: usize, n: usize, m: usize) -> Instance {
    let mut r = rng(seed);
    let x = covariates(&mut r, m_obj, p);
    let truth = coefficients(&mut r, k, p, 1.0);
    let data = dataset(&mut r, &truth, &x, n, m);
    Instance { x, truth, data }
}

/// −log likelihood as a plain sum of log worth ratios, without any
/// stabilization.
pub fn naive_nll(b: &CoefficientSet, data: &RankingDataset, x: &CovariateMatrix) -> f64 {
    let mut total = 0.0;
    for (k, g) in data.groups().iter().enumerate() {
        let beta = b.beta(k);
        let w: Vec<f64> = (0..x.nrows())
            .map(|j| {
                x.row(j)
                    .iter()
                    .zip(&beta)
                    .map(|(a, c)| a * c)
                    .sum::<f64>()
                    .exp()
            })
            .collect();
        for r in g.rankings() {
            let objs = r.objects();
            for s in 0..objs.len() {
                let denom: f64 = objs[s..].iter().map(|&o| w[o]).sum();
                total -= (w[objs[s]] / denom).ln();
            }
        }
    }
    total
}
