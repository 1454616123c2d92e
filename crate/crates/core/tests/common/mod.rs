//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use mfm_mxn::gibbs::{update_assignments, update_cluster_means, ClusterState, MarginalCache, Model};
use mfm_mxn::matnorm::{RealMatrix, SpdMatrix};
use mfm_mxn::prior::Hyperparams;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::function::gamma::ln_gamma;

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log V_n(t)` by direct summation with log-gamma functions.
pub fn log_vn_direct(n: usize, t: usize, gamma: f64, tau: f64) -> f64 {
    let log_norm = tau + (1.0 - (-tau).exp()).ln();
    let terms: Vec<f64> = (t..t + 400)
        .map(|k| {
            let k_f = k as f64;
            let falling = ln_gamma(k_f + 1.0) - ln_gamma(k_f - t as f64 + 1.0);
            let rising = ln_gamma(gamma * k_f + n as f64) - ln_gamma(gamma * k_f);
            let log_pk = k_f * tau.ln() - ln_gamma(k_f + 1.0) - log_norm;
            falling - rising + log_pk
        })
        .collect();
    log_sum_exp(&terms)
}

/// Dense MVN log density through LU.
pub fn mvn_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let lu = cov.clone().lu();
    let r = x - mean;
    let sol = lu.solve(&r).unwrap();
    -0.5 * r.dot(&sol) - 0.5 * d * (2.0 * PI).ln() - 0.5 * lu.determinant().ln()
}

/// All set partitions of `0..n` as restricted growth strings, which is the
/// labelling produced by first-appearance compaction.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, max: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == a.len() {
            out.push(a.clone());
            return;
        }
        for v in 0..=max + 1 {
            a[i] = v;
            rec(i + 1, max.max(v), a, out);
        }
    }
    let mut out = Vec::new();
    let mut a = vec![0usize; n];
    rec(1, 0, &mut a, &mut out);
    out
}

pub fn scalar(x: f64) -> RealMatrix {
    RealMatrix::from_row_slice(1, 1, &[x]).unwrap()
}

pub fn spd1(x: f64) -> SpdMatrix {
    SpdMatrix::new(DMatrix::from_element(1, 1, x)).unwrap()
}

/// Scalar hyperparameters with the given mean prior and unit IW scales.
pub fn scalar_hyper(gamma: f64, tau: f64, m0: f64, s0: f64, o0: f64) -> Hyperparams {
    Hyperparams {
        gamma,
        tau,
        m0: scalar(m0),
        sigma0: spd1(s0),
        omega0: spd1(o0),
        alpha: 1.5,
        beta_scale: spd1(1.0),
        psi: 1.5,
        rho_scale: spd1(1.0),
    }
}

/// Exact partition posterior for scalar data with fixed `U = u`, `V = v`:
/// each block is jointly normal with covariance `uv I + σ₀²ω₀² 11ᵀ`.
pub fn exact_scalar_partition_posterior(ys: &[f64], u: f64, v: f64, h: &Hyperparams) -> Vec<(Vec<usize>, f64)> {
    let n = ys.len();
    let s0 = h.sigma0.matrix()[(0, 0)] * h.omega0.matrix()[(0, 0)];
    let m0 = h.m0.get(0, 0);
    let parts = set_partitions(n);
    let logs: Vec<f64> = parts
        .iter()
        .map(|z| {
            let t = z.iter().max().unwrap() + 1;
            let mut lp = log_vn_direct(n, t, h.gamma, h.tau);
            for c in 0..t {
                let block: Vec<f64> = ys.iter().zip(z).filter(|(_, &l)| l == c).map(|(y, _)| *y).collect();
                let m = block.len();
                lp += ln_gamma(h.gamma + m as f64) - ln_gamma(h.gamma);
                let cov = DMatrix::identity(m, m) * (u * v) + DMatrix::from_element(m, m, s0);
                lp += mvn_logpdf(&DVector::from_vec(block), &DVector::from_element(m, m0), &cov);
            }
            lp
        })
        .collect();
    let norm = log_sum_exp(&logs);
    parts.into_iter().zip(logs).map(|(z, l)| (z, (l - norm).exp())).collect()
}

/// Runs assignment and mean updates with `U`, `V` held fixed, returning the
/// compacted label vector after every post-burn-in sweep.
pub fn fixed_covariance_chain<R: Rng>(
    data: &[RealMatrix],
    model: &Model<'_>,
    u: SpdMatrix,
    v: SpdMatrix,
    burnin: usize,
    sweeps: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let p = model.hyper.p();
    let q = model.hyper.q();
    let mut state = ClusterState::new(vec![0; data.len()], vec![RealMatrix::zeros(p, q)], u, v).unwrap();
    let cache = MarginalCache::new(&state, &model.prior).unwrap();
    let mut out = Vec::with_capacity(sweeps);
    for it in 0..burnin + sweeps {
        update_assignments(&mut state, data, model, &cache, rng).unwrap();
        update_cluster_means(&mut state, data, model, rng).unwrap();
        state.compact();
        if it >= burnin {
            out.push(state.labels().to_vec());
        }
    }
    out
}

/// Mean and batch-means standard error of a scalar series.
pub fn batch_mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let b = n / batches;
    let mean = xs.iter().sum::<f64>() / n as f64;
    let bm: Vec<f64> = (0..batches)
        .map(|i| xs[i * b..(i + 1) * b].iter().sum::<f64>() / b as f64)
        .collect();
    let grand = bm.iter().sum::<f64>() / batches as f64;
    let var = bm.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// Largest |empirical − exact| / SE over partitions, with SE floored by the
/// binomial error of an independent sample so a never-visited partition with
/// tiny mass is not judged against a zero SE.
pub fn partition_z_scores(draws: &[Vec<usize>], exact: &[(Vec<usize>, f64)]) -> Vec<(Vec<usize>, f64, f64, f64)> {
    let mut index: HashMap<&[usize], usize> = HashMap::new();
    for (i, (z, _)) in exact.iter().enumerate() {
        index.insert(z.as_slice(), i);
    }
    let ids: Vec<usize> = draws.iter().map(|d| index[d.as_slice()]).collect();
    exact
        .iter()
        .enumerate()
        .map(|(i, (z, prob))| {
            let ind: Vec<f64> = ids.iter().map(|&k| f64::from(u8::from(k == i))).collect();
            let (freq, se) = batch_mean_se(&ind, 100);
            let iid = (prob * (1.0 - prob) / draws.len() as f64).sqrt();
            let se = se.max(iid);
            (z.clone(), *prob, freq, (freq - prob) / se)
        })
        .collect()
}
