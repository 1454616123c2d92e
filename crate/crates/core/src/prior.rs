//! Prior constants of the mixture of finite mixtures and the partition
//! coefficients `V_n(t)`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matnorm::{RealMatrix, SpdMatrix};

/// Fixed prior constants.
///
/// The covariance priors are `U ~ IW_p(2α, 2β)` and `V ~ IW_q(2ψ, 2ρ)` with
/// density proportional to `|Σ|^{-(ν+d+1)/2} exp(-tr(S Σ⁻¹)/2)`;
/// `beta_scale` and `rho_scale` hold the matrices `2β` and `2ρ` (the `S`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Dirichlet concentration.
    pub gamma: f64,
    /// Rate of the zero-truncated Poisson prior on the number of components.
    pub tau: f64,
    pub m0: RealMatrix,
    pub sigma0: SpdMatrix,
    pub omega0: SpdMatrix,
    pub alpha: f64,
    pub beta_scale: SpdMatrix,
    pub psi: f64,
    pub rho_scale: SpdMatrix,
}

impl Hyperparams {
    pub fn p(&self) -> usize {
        self.m0.rows()
    }

    pub fn q(&self) -> usize {
        self.m0.cols()
    }

    pub fn u_df(&self) -> f64 {
        2.0 * self.alpha
    }

    pub fn v_df(&self) -> f64 {
        2.0 * self.psi
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q) = (self.p(), self.q());
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {}", self.tau)));
        }
        if self.sigma0.dim() != p || self.beta_scale.dim() != p {
            return Err(Error::DimensionMismatch(format!(
                "row-side prior matrices must be {p}x{p}"
            )));
        }
        if self.omega0.dim() != q || self.rho_scale.dim() != q {
            return Err(Error::DimensionMismatch(format!(
                "column-side prior matrices must be {q}x{q}"
            )));
        }
        if !(self.u_df() > p as f64 - 1.0) {
            return Err(Error::InvalidParameter(format!(
                "2 alpha = {} must exceed p - 1 = {}",
                self.u_df(),
                p as f64 - 1.0
            )));
        }
        if !(self.v_df() > q as f64 - 1.0) {
            return Err(Error::InvalidParameter(format!(
                "2 psi = {} must exceed q - 1 = {}",
                self.v_df(),
                q as f64 - 1.0
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let h: Hyperparams = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        h.validate()?;
        Ok(h)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}

/// Data-driven defaults: `α = (p+1)/2`, `ψ = (q+1)/2`, `2β = I`, `2ρ = I`,
/// `γ = 3`, `τ = 1`, `M₀` the element-wise midpoint of the data and
/// `Σ₀`, `Ω₀` diagonal with squared half-ranges along rows and columns.
///
/// A row or column that is constant across the whole dataset gets its
/// half-range floored at `1e-6` times the global range (with a warning).
pub fn default_hyperparams(data: &[RealMatrix]) -> Result<Hyperparams> {
    let first = data
        .first()
        .ok_or_else(|| Error::EmptyData("no observations".into()))?;
    let (p, q) = first.shape();
    if let Some(i) = data.iter().position(|y| y.shape() != (p, q)) {
        return Err(Error::DimensionMismatch(format!(
            "observation {i} is {}x{}, expected {p}x{q}",
            data[i].rows(),
            data[i].cols()
        )));
    }

    let mut lo = first.as_matrix().clone();
    let mut hi = first.as_matrix().clone();
    for y in &data[1..] {
        lo.zip_apply(y.as_matrix(), |a, b| *a = a.min(b));
        hi.zip_apply(y.as_matrix(), |a, b| *a = a.max(b));
    }
    let global = hi.max() - lo.min();
    if !(global > 0.0) {
        return Err(Error::InvalidParameter(
            "dataset is a single repeated constant matrix; prior scales are undefined".into(),
        ));
    }
    let floor = 1e-6 * global;
    let half_range = |lo: f64, hi: f64, what: &str, idx: usize| {
        let h = 0.5 * (hi - lo);
        if h < floor {
            log::warn!("{what} {idx} is constant across the data; half-range floored at {floor:e}");
            floor
        } else {
            h
        }
    };

    let row_sd: Vec<f64> = (0..p)
        .map(|i| half_range(lo.row(i).min(), hi.row(i).max(), "row", i))
        .collect();
    let col_sd: Vec<f64> = (0..q)
        .map(|j| half_range(lo.column(j).min(), hi.column(j).max(), "column", j))
        .collect();

    let m0 = RealMatrix::new((&lo + &hi) * 0.5)?;
    let diag = |sd: &[f64]| {
        SpdMatrix::new(DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            sd.len(),
            sd.iter().map(|s| s * s),
        )))
    };

    let h = Hyperparams {
        gamma: 3.0,
        tau: 1.0,
        m0,
        sigma0: diag(&row_sd)?,
        omega0: diag(&col_sd)?,
        alpha: (p as f64 + 1.0) / 2.0,
        beta_scale: SpdMatrix::identity(p),
        psi: (q as f64 + 1.0) / 2.0,
        rho_scale: SpdMatrix::identity(q),
    };
    h.validate()?;
    Ok(h)
}

/// Log mass of the zero-truncated Poisson: `log[τᵏ e^{-τ} / (k! (1 - e^{-τ}))]`.
pub fn log_pk(k: usize, tau: f64) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidParameter("p_K is supported on k >= 1".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be > 0, got {tau}")));
    }
    let log_fact: f64 = (2..=k).map(|j| (j as f64).ln()).sum();
    Ok(k as f64 * tau.ln() - tau - log_fact - (-(-tau).exp_m1()).ln())
}

/// Relative tail size at which the `V_n(t)` series is truncated.
pub const SERIES_TOL: f64 = 1e-12;

/// Maximum number of terms summed per `V_n(t)` entry.
pub const SERIES_MAX_TERMS: usize = 10_000;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Table of `log V_n(t)` for `t = 1..=n+1`, where
/// `V_n(t) = Σ_{k≥t} k_(t) / (γk)^(n) · p_K(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionCoefficients {
    n: usize,
    gamma: f64,
    tau: f64,
    log_vn: Vec<f64>,
}

impl PartitionCoefficients {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `log V_n(t)` for `1 <= t <= n + 1`.
    pub fn log_vn(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.n + 1, "t = {t} outside 1..={}", self.n + 1);
        self.log_vn[t - 1]
    }

    /// `log[V_n(t+1) / V_n(t)]`, the new-cluster coefficient when the other
    /// observations occupy `t` blocks.
    pub fn log_new_cluster_ratio(&self, t: usize) -> f64 {
        self.log_vn(t + 1) - self.log_vn(t)
    }

    pub fn entries(&self) -> &[f64] {
        &self.log_vn
    }
}

pub fn build_vn_table(n: usize, gamma: f64, tau: f64) -> Result<PartitionCoefficients> {
    build_vn_table_with_cap(n, gamma, tau, SERIES_MAX_TERMS)
}

/// As [`build_vn_table`] with an explicit per-entry term cap.
pub fn build_vn_table_with_cap(
    n: usize,
    gamma: f64,
    tau: f64,
    max_terms: usize,
) -> Result<PartitionCoefficients> {
    if n < 1 {
        return Err(Error::InvalidParameter("V_n table needs n >= 1".into()));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("tau must be > 0, got {tau}")));
    }
    let log_tau = tau.ln();
    let log_norm = tau + (-(-tau).exp_m1()).ln();

    // log m! for the falling factorial; k_(t) / k! = 1 / (k - t)!.
    let mut log_fact = vec![0.0];
    let mut acc = CompensatedSum::default();
    // log (γk)^(n), memoized by k.
    let mut log_rising: Vec<f64> = vec![f64::NAN];

    let mut table = Vec::with_capacity(n + 1);
    for t in 1..=n + 1 {
        let mut terms: Vec<f64> = Vec::new();
        let mut max_term = f64::NEG_INFINITY;
        let mut converged = false;
        for k in t..t + max_terms {
            while log_fact.len() <= k - t {
                acc.add((log_fact.len() as f64).ln());
                log_fact.push(acc.value());
            }
            while log_rising.len() <= k {
                let gk = gamma * log_rising.len() as f64;
                let mut s = CompensatedSum::default();
                for j in 0..n {
                    s.add((gk + j as f64).ln());
                }
                log_rising.push(s.value());
            }
            // log[k_(t) p_K(k) / (γk)^(n)] with k! cancelled.
            let term = -log_fact[k - t] - log_rising[k] + k as f64 * log_tau - log_norm;
            terms.push(term);
            max_term = max_term.max(term);

            // Successive term ratios are bounded by τ / (m + 1 - t) for m >= k.
            let ratio = tau / (k + 1 - t) as f64;
            if ratio < 1.0 {
                let log_tail = term + (ratio / (1.0 - ratio)).ln();
                let log_sum = log_sum_exp(&terms, max_term);
                if log_tail - log_sum < SERIES_TOL.ln() {
                    table.push(log_sum);
                    converged = true;
                    break;
                }
            }
        }
        if !converged {
            return Err(Error::SeriesNotConverged {
                t,
                terms: max_terms,
            });
        }
    }
    Ok(PartitionCoefficients {
        n,
        gamma,
        tau,
        log_vn: table,
    })
}

fn log_sum_exp(xs: &[f64], max: f64) -> f64 {
    let mut s = CompensatedSum::default();
    for x in xs {
        s.add((x - max).exp());
    }
    max + s.value().ln()
}
