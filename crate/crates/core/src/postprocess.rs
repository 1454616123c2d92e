//! Posterior summaries of a chain and clustering metrics.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::ChainTrace;
use crate::matnorm::{kron, normalize_trace, vec, RealMatrix, SpdMatrix};

/// Co-clustering indicator matrix of one partition.
#[derive(Clone, Debug, PartialEq)]
pub struct MembershipMatrix(DMatrix<u8>);

impl MembershipMatrix {
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<u8> {
        &self.0
    }
}

pub fn membership_matrix(labels: &[usize]) -> MembershipMatrix {
    let n = labels.len();
    MembershipMatrix(DMatrix::from_fn(n, n, |i, j| u8::from(labels[i] == labels[j])))
}

/// The retained draw chosen by Dahl's least-squares criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionEstimate {
    pub labels: Vec<usize>,
    pub source_draw_index: usize,
    pub k_hat: usize,
}

/// Picks the retained draw whose membership matrix is closest, in squared
/// element-wise distance, to the posterior mean membership matrix. Ties go to
/// the earliest draw.
pub fn dahl_select(trace: &ChainTrace) -> Result<PartitionEstimate> {
    let draws: Vec<&[usize]> = trace.states.iter().map(|s| s.labels.as_slice()).collect();
    dahl_select_labels(&draws)
}

pub fn dahl_select_labels(draws: &[&[usize]]) -> Result<PartitionEstimate> {
    let first = draws
        .first()
        .ok_or_else(|| Error::EmptyData("no retained draws".into()))?;
    let n = first.len();
    if draws.iter().any(|d| d.len() != n) {
        return Err(Error::DimensionMismatch("draws have different lengths".into()));
    }

    // Pass 1: co-clustering counts over the upper triangle. Distances are
    // kept scaled by L^2 so they stay integers and ties are exact.
    let mut counts = vec![0u64; n * (n.saturating_sub(1)) / 2];
    for labels in draws {
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                if labels[i] == labels[j] {
                    counts[idx] += 1;
                }
                idx += 1;
            }
        }
    }
    let l = draws.len() as i128;

    // Pass 2: score each draw. The diagonal contributes zero and the matrix is
    // symmetric, so the upper triangle suffices.
    let mut best = (i128::MAX, 0usize);
    for (d, labels) in draws.iter().enumerate() {
        let mut dist = 0i128;
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                let a = if labels[i] == labels[j] { l } else { 0 };
                let diff = a - counts[idx] as i128;
                dist += diff * diff;
                idx += 1;
            }
        }
        if dist < best.0 {
            best = (dist, d);
        }
    }
    let labels = draws[best.1].to_vec();
    Ok(PartitionEstimate {
        k_hat: count_distinct(&labels),
        labels,
        source_draw_index: best.1,
    })
}

pub fn count_distinct(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Fraction of item pairs on which the two partitions agree.
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "label vectors have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidParameter("rand index needs at least two items".into()));
    }
    // Contingency-table form: agreements = C(n,2) + 2 Σ C(n_ij,2) - Σ C(a_i,2) - Σ C(b_j,2).
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let pairs = |m: u64| m * m.saturating_sub(1) / 2;
    let total = pairs(n as u64);
    let both: u64 = table.values().map(|&m| pairs(m)).sum();
    let ra: u64 = rows.values().map(|&m| pairs(m)).sum();
    let cb: u64 = cols.values().map(|&m| pairs(m)).sum();
    let agree = total + 2 * both - ra - cb;
    Ok(agree as f64 / total as f64)
}

/// Index of the chain whose Dahl partition has the highest mean Rand index
/// against every other chain's. Ties go to the smallest index.
pub fn select_representative_chain(estimates: &[PartitionEstimate]) -> Result<usize> {
    if estimates.len() < 2 {
        return Err(Error::InvalidParameter(
            "representative chain selection needs at least two chains".into(),
        ));
    }
    let c = estimates.len();
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 0..c {
        let mut total = 0.0;
        for j in (0..c).filter(|&j| j != i) {
            total += rand_index(&estimates[i].labels, &estimates[j].labels)?;
        }
        let mean = total / (c - 1) as f64;
        if mean > best.0 {
            best = (mean, i);
        }
    }
    Ok(best.1)
}

/// Empirical distribution of the number of clusters over retained draws.
pub fn k_posterior(trace: &ChainTrace) -> BTreeMap<usize, f64> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for s in &trace.states {
        *counts.entry(s.num_clusters).or_default() += 1;
    }
    let total = trace.states.len() as f64;
    counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / total))
        .collect()
}

/// Root mean squared element-wise error between `V̂ ⊗ Û` and `V ⊗ U`, both
/// pairs trace-normalized first.
pub fn rmse_kron(u_hat: &SpdMatrix, v_hat: &SpdMatrix, u_true: &SpdMatrix, v_true: &SpdMatrix) -> Result<f64> {
    if u_hat.dim() != u_true.dim() || v_hat.dim() != v_true.dim() {
        return Err(Error::DimensionMismatch(format!(
            "estimate is ({}, {}), truth is ({}, {})",
            u_hat.dim(),
            v_hat.dim(),
            u_true.dim(),
            v_true.dim()
        )));
    }
    let (uh, vh) = normalize_trace(u_hat, v_hat);
    let (ut, vt) = normalize_trace(u_true, v_true);
    let diff = kron(vh.matrix(), uh.matrix()) - kron(vt.matrix(), ut.matrix());
    Ok((diff.norm_squared() / diff.len() as f64).sqrt())
}

/// Number of k-means++ restarts in [`kmeans_baseline`].
pub const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITER: usize = 300;

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub objective: f64,
    /// Objective after every Lloyd iteration of the winning restart.
    pub history: Vec<f64>,
}

/// Lloyd's algorithm on `vec(Y)` with k-means++ seeding; best of
/// [`KMEANS_RESTARTS`] restarts by within-cluster sum of squares.
pub fn kmeans_baseline<R: Rng + ?Sized>(data: &[RealMatrix], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    Ok(kmeans_fit(data, k, rng)?.labels)
}

pub fn kmeans_fit<R: Rng + ?Sized>(data: &[RealMatrix], k: usize, rng: &mut R) -> Result<KMeansFit> {
    let n = data.len();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds n = {n}")));
    }
    let points: Vec<Vec<f64>> = data.iter().map(|y| vec(y.as_matrix()).as_slice().to_vec()).collect();
    let mut best: Option<KMeansFit> = None;
    for _ in 0..KMEANS_RESTARTS {
        let fit = lloyd(&points, k, rng);
        if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
            best = Some(fit);
        }
    }
    Ok(best.unwrap())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[idx].clone());
        for (d, x) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(x, centers.last().unwrap()));
        }
    }
    centers
}

fn lloyd<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> KMeansFit {
    let dim = points[0].len();
    let mut centers = kmeans_pp(points, k, rng);
    let mut labels = vec![0usize; points.len()];
    let mut history = Vec::new();
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        let mut objective = 0.0;
        for (i, x) in points.iter().enumerate() {
            let (c, d) = centers
                .iter()
                .enumerate()
                .map(|(c, m)| (c, sq_dist(x, m)))
                .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
            if labels[i] != c {
                changed = true;
                labels[i] = c;
            }
            objective += d;
        }
        history.push(objective);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            sums[c].iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            // empty clusters keep their previous center
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed && history.len() > 1 {
            break;
        }
    }
    let objective = points
        .iter()
        .zip(&labels)
        .map(|(x, &c)| sq_dist(x, &centers[c]))
        .sum();
    history.push(objective);
    KMeansFit {
        labels,
        objective,
        history,
    }
}
