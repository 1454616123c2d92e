//! Collapsed Gibbs sampler for the mixture of finite mixtures of matrix
//! normals with a shared row covariance `U` and column covariance `V`.
//!
//! One sweep updates, in order:
//!
//! 1. the assignments `Z`, one observation at a time, with the mixture
//!    weights and the number of components integrated out. An existing
//!    cluster `c` is chosen with weight `(#c + γ) f(Yᵢ | M_c, U, V)` and a new
//!    cluster with weight `γ V_n(t+1)/V_n(t) m(Yᵢ | U, V)`, where `m` is the
//!    prior predictive density of a single observation and `t` the number of
//!    clusters among the other observations. A new cluster's mean is drawn
//!    from its one-observation conditional straight away;
//! 2. the cluster means, each from its Normal–Normal conditional;
//! 3. `U` then `V` from their inverse-Wishart conditionals.
//!
//! Clusters are relabelled `0..K` by first appearance after every sweep.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matnorm::{
    cholesky_lower, kron, kron_quadratic_form, log_density_inv_wishart, log_density_matnorm,
    matnorm_log_norm, normalize_trace, sample_inv_wishart, solve_lower, solve_lower_transpose_vec,
    solve_lower_vec, unvec, vec, MatrixNormalParams, RealMatrix, SpdMatrix,
};
use crate::prior::{build_vn_table, Hyperparams, PartitionCoefficients};
use crate::stats::sample_log_weights;

/// Quantities of the `N(M₀, Σ₀, Ω₀)` mean prior reused by every update.
#[derive(Clone, Debug)]
pub struct MeanPrior {
    p: usize,
    q: usize,
    /// `Ω₀⁻¹ ⊗ Σ₀⁻¹`
    precision: DMatrix<f64>,
    /// `(Ω₀⁻¹ ⊗ Σ₀⁻¹) vec(M₀)`
    precision_mean: DVector<f64>,
    /// `vec(M₀)ᵀ (Ω₀⁻¹ ⊗ Σ₀⁻¹) vec(M₀)`
    quad: f64,
    log_det_sigma0: f64,
    log_det_omega0: f64,
}

impl MeanPrior {
    pub fn new(hyper: &Hyperparams) -> Self {
        let s_inv = hyper.sigma0.inverse();
        let o_inv = hyper.omega0.inverse();
        let precision = kron(&o_inv, &s_inv);
        let precision_mean = vec(&(&s_inv * hyper.m0.as_matrix() * &o_inv));
        let quad = vec(hyper.m0.as_matrix()).dot(&precision_mean);
        MeanPrior {
            p: hyper.p(),
            q: hyper.q(),
            precision,
            precision_mean,
            quad,
            log_det_sigma0: hyper.sigma0.log_det(),
            log_det_omega0: hyper.omega0.log_det(),
        }
    }
}

/// Everything the sweep reads but never writes: prior constants, the `V_n`
/// table and the precomputed mean-prior terms.
#[derive(Clone, Debug)]
pub struct Model<'a> {
    pub hyper: &'a Hyperparams,
    pub vn: &'a PartitionCoefficients,
    pub prior: MeanPrior,
}

impl<'a> Model<'a> {
    pub fn new(hyper: &'a Hyperparams, vn: &'a PartitionCoefficients) -> Result<Self> {
        hyper.validate()?;
        if vn.gamma() != hyper.gamma || vn.tau() != hyper.tau {
            return Err(Error::InvalidParameter(format!(
                "V_n table built for (gamma, tau) = ({}, {}), hyperparameters have ({}, {})",
                vn.gamma(),
                vn.tau(),
                hyper.gamma,
                hyper.tau
            )));
        }
        Ok(Model {
            hyper,
            vn,
            prior: MeanPrior::new(hyper),
        })
    }

    fn check_data(&self, data: &[RealMatrix]) -> Result<()> {
        if data.len() != self.vn.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} observations but the V_n table was built for n = {}",
                data.len(),
                self.vn.n()
            )));
        }
        let shape = (self.hyper.p(), self.hyper.q());
        if let Some(i) = data.iter().position(|y| y.shape() != shape) {
            return Err(Error::DimensionMismatch(format!(
                "observation {i} is {}x{}, expected {}x{}",
                data[i].rows(),
                data[i].cols(),
                shape.0,
                shape.1
            )));
        }
        Ok(())
    }
}

/// Partition labels, per-cluster means and the shared covariance pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterState {
    labels: Vec<usize>,
    means: Vec<RealMatrix>,
    u: SpdMatrix,
    v: SpdMatrix,
    revision: u64,
}

impl ClusterState {
    pub fn new(labels: Vec<usize>, means: Vec<RealMatrix>, u: SpdMatrix, v: SpdMatrix) -> Result<Self> {
        let state = ClusterState {
            labels,
            means,
            u,
            v,
            revision: 0,
        };
        state.check_invariants()?;
        Ok(state)
    }

    /// `k` round-robin clusters with means at the cluster sample means and
    /// identity covariances.
    pub fn initial(data: &[RealMatrix], k: usize) -> Result<Self> {
        let first = data
            .first()
            .ok_or_else(|| Error::EmptyData("no observations".into()))?;
        let k = k.clamp(1, data.len());
        let labels: Vec<usize> = (0..data.len()).map(|i| i % k).collect();
        let mut means = vec![DMatrix::zeros(first.rows(), first.cols()); k];
        let mut counts = vec![0usize; k];
        for (y, &z) in data.iter().zip(&labels) {
            means[z] += y.as_matrix();
            counts[z] += 1;
        }
        let means = means
            .into_iter()
            .zip(counts)
            .map(|(s, c)| RealMatrix::new(s / c as f64))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            labels,
            means,
            SpdMatrix::identity(first.rows()),
            SpdMatrix::identity(first.cols()),
        )
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn means(&self) -> &[RealMatrix] {
        &self.means
    }

    pub fn u(&self) -> &SpdMatrix {
        &self.u
    }

    pub fn v(&self) -> &SpdMatrix {
        &self.v
    }

    pub fn num_clusters(&self) -> usize {
        self.means.len()
    }

    /// Counter bumped whenever `U` or `V` changes.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.means.len()];
        for &z in &self.labels {
            c[z] += 1;
        }
        c
    }

    pub fn set_covariances(&mut self, u: SpdMatrix, v: SpdMatrix) -> Result<()> {
        if u.dim() != self.u.dim() || v.dim() != self.v.dim() {
            return Err(Error::DimensionMismatch("covariance dimensions changed".into()));
        }
        self.u = u;
        self.v = v;
        self.revision += 1;
        Ok(())
    }

    pub fn set_mean(&mut self, cluster: usize, mean: RealMatrix) -> Result<()> {
        if mean.shape() != (self.u.dim(), self.v.dim()) {
            return Err(Error::DimensionMismatch("mean has the wrong shape".into()));
        }
        self.means[cluster] = mean;
        Ok(())
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.labels.is_empty() && self.means.is_empty() {
            return Ok(());
        }
        if self.means.is_empty() {
            return Err(Error::InvalidParameter("state has no clusters".into()));
        }
        let counts = {
            let mut c = vec![0usize; self.means.len()];
            for &z in &self.labels {
                if z >= c.len() {
                    return Err(Error::InvalidParameter(format!(
                        "label {z} has no mean ({} clusters)",
                        c.len()
                    )));
                }
                c[z] += 1;
            }
            c
        };
        if let Some(c) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidParameter(format!("cluster {c} is empty")));
        }
        let shape = (self.u.dim(), self.v.dim());
        if self.means.iter().any(|m| m.shape() != shape) {
            return Err(Error::DimensionMismatch("cluster mean shape".into()));
        }
        Ok(())
    }

    /// Relabels clusters `0..K` in order of first appearance.
    pub fn compact(&mut self) {
        let mut map = vec![usize::MAX; self.means.len()];
        let mut next = 0;
        for z in self.labels.iter_mut() {
            if map[*z] == usize::MAX {
                map[*z] = next;
                next += 1;
            }
            *z = map[*z];
        }
        let mut means: Vec<Option<RealMatrix>> = vec![None; next];
        for (old, m) in std::mem::take(&mut self.means).into_iter().enumerate() {
            if map[old] != usize::MAX {
                means[map[old]] = Some(m);
            }
        }
        self.means = means.into_iter().map(Option::unwrap).collect();
    }

    fn remove_cluster(&mut self, c: usize) {
        self.means.remove(c);
        for z in self.labels.iter_mut() {
            if *z > c {
                *z -= 1;
            }
        }
    }
}

/// Per-`(U, V)` factorization behind the prior predictive `m(Y | U, V)`.
///
/// Holds the Cholesky factor of `Σ̃⁻¹ = V⁻¹ ⊗ U⁻¹ + Ω₀⁻¹ ⊗ Σ₀⁻¹` and every
/// term of `log m` that does not depend on `Y`.
#[derive(Clone, Debug)]
pub struct MarginalCache {
    revision: u64,
    u_inv: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    posterior_lower: DMatrix<f64>,
    log_const: f64,
}

impl MarginalCache {
    pub fn new(state: &ClusterState, prior: &MeanPrior) -> Result<Self> {
        let (u, v) = (&state.u, &state.v);
        if u.dim() != prior.p || v.dim() != prior.q {
            return Err(Error::DimensionMismatch("state and prior dimensions differ".into()));
        }
        let u_inv = u.inverse();
        let v_inv = v.inverse();
        let precision = kron(&v_inv, &u_inv) + &prior.precision;
        let posterior_lower = cholesky_lower(&precision)?;
        let log_det_posterior_precision =
            2.0 * posterior_lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let (p, q) = (prior.p as f64, prior.q as f64);
        let log_const = -0.5 * prior.quad + matnorm_log_norm(u, v)
            - 0.5 * p * prior.log_det_omega0
            - 0.5 * q * prior.log_det_sigma0
            - 0.5 * log_det_posterior_precision;
        Ok(MarginalCache {
            revision: state.revision,
            u_inv,
            v_inv,
            posterior_lower,
            log_const,
        })
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    fn check(&self, state: &ClusterState) -> Result<()> {
        if self.revision != state.revision {
            return Err(Error::StaleCache {
                cache: self.revision,
                state: state.revision,
            });
        }
        Ok(())
    }

    /// `L⁻¹ b` with `b = (V⁻¹ ⊗ U⁻¹) vec(Y) + (Ω₀⁻¹ ⊗ Σ₀⁻¹) vec(M₀)`,
    /// together with `vec(Y)ᵀ (V⁻¹ ⊗ U⁻¹) vec(Y)`.
    fn whitened_information(&self, y: &RealMatrix, prior: &MeanPrior) -> (DVector<f64>, f64) {
        let weighted = vec(&(&self.u_inv * y.as_matrix() * &self.v_inv));
        let quad = vec(y.as_matrix()).dot(&weighted);
        let b = weighted + &prior.precision_mean;
        (solve_lower_vec(&self.posterior_lower, &b), quad)
    }
}

/// `log m(Y | U, V)`: the density of `Y` with its cluster mean integrated
/// against the `N(M₀, Σ₀, Ω₀)` prior.
pub fn marginal_loglik(
    y: &RealMatrix,
    cache: &MarginalCache,
    state: &ClusterState,
    model: &Model<'_>,
) -> Result<f64> {
    cache.check(state)?;
    if y.shape() != (model.prior.p, model.prior.q) {
        return Err(Error::DimensionMismatch("observation shape".into()));
    }
    let (w, quad) = cache.whitened_information(y, &model.prior);
    // μ̃ᵀ Σ̃⁻¹ μ̃ = bᵀ Σ̃ b = ‖L⁻¹ b‖²
    Ok(-0.5 * (quad - w.norm_squared()) + cache.log_const)
}

/// Draws `x ~ N(P⁻¹ h, P⁻¹)` from `L` with `L Lᵀ = P` and `w = L⁻¹ h`.
fn sample_canonical<R: Rng + ?Sized>(lower: &DMatrix<f64>, w: DVector<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(w.len(), |_, _| StandardNormal.sample(rng));
    solve_lower_transpose_vec(lower, &(w + z))
}

/// Reassigns every observation in turn.
pub fn update_assignments<R: Rng + ?Sized>(
    state: &mut ClusterState,
    data: &[RealMatrix],
    model: &Model<'_>,
    cache: &MarginalCache,
    rng: &mut R,
) -> Result<()> {
    model.check_data(data)?;
    cache.check(state)?;
    let gamma = model.hyper.gamma;
    let log_gamma = gamma.ln();
    let log_norm = matnorm_log_norm(&state.u, &state.v);
    let log_m = data
        .iter()
        .map(|y| marginal_loglik(y, cache, state, model))
        .collect::<Result<Vec<f64>>>()?;

    let mut counts = state.counts();
    let mut log_w = Vec::new();
    for (i, y) in data.iter().enumerate() {
        let old = state.labels[i];
        counts[old] -= 1;
        if counts[old] == 0 {
            counts.remove(old);
            state.remove_cluster(old);
        }

        let t = counts.len();
        log_w.clear();
        for (c, mean) in state.means.iter().enumerate() {
            let r = y.as_matrix() - mean.as_matrix();
            let log_f = -0.5 * kron_quadratic_form(&r, &state.u, &state.v) + log_norm;
            log_w.push((counts[c] as f64 + gamma).ln() + log_f);
        }
        let log_new = if t == 0 {
            0.0
        } else {
            model.vn.log_new_cluster_ratio(t) + log_gamma + log_m[i]
        };
        log_w.push(log_new);

        let choice = sample_log_weights(&log_w, rng);
        if choice == t {
            let (w, _) = cache.whitened_information(y, &model.prior);
            let draw = sample_canonical(&cache.posterior_lower, w, rng);
            state
                .means
                .push(RealMatrix::new(unvec(&draw, model.prior.p, model.prior.q))?);
            counts.push(1);
        } else {
            counts[choice] += 1;
        }
        state.labels[i] = choice;
    }
    Ok(())
}

/// Draws every cluster mean from its conditional: precision
/// `n_c (V⁻¹ ⊗ U⁻¹) + Ω₀⁻¹ ⊗ Σ₀⁻¹`, information
/// `(V⁻¹ ⊗ U⁻¹) vec(S_c) + (Ω₀⁻¹ ⊗ Σ₀⁻¹) vec(M₀)` for data sum `S_c`.
pub fn update_cluster_means<R: Rng + ?Sized>(
    state: &mut ClusterState,
    data: &[RealMatrix],
    model: &Model<'_>,
    rng: &mut R,
) -> Result<()> {
    model.check_data(data)?;
    let (p, q) = (model.prior.p, model.prior.q);
    let u_inv = state.u.inverse();
    let v_inv = state.v.inverse();
    let likelihood_precision = kron(&v_inv, &u_inv);

    let k = state.num_clusters();
    let mut sums = vec![DMatrix::zeros(p, q); k];
    let mut counts = vec![0usize; k];
    for (y, &z) in data.iter().zip(&state.labels) {
        sums[z] += y.as_matrix();
        counts[z] += 1;
    }
    for c in 0..k {
        debug_assert!(counts[c] > 0, "empty cluster reached the mean update");
        let precision = &likelihood_precision * counts[c] as f64 + &model.prior.precision;
        let lower = cholesky_lower(&precision)?;
        let h = vec(&(&u_inv * &sums[c] * &v_inv)) + &model.prior.precision_mean;
        let w = solve_lower_vec(&lower, &h);
        let draw = sample_canonical(&lower, w, rng);
        state.means[c] = RealMatrix::new(unvec(&draw, p, q))?;
    }
    Ok(())
}

/// Draws `U | V` then `V | U` from their inverse-Wishart conditionals and
/// bumps the state's covariance revision.
pub fn update_covariances<R: Rng + ?Sized>(
    state: &mut ClusterState,
    data: &[RealMatrix],
    model: &Model<'_>,
    rng: &mut R,
) -> Result<()> {
    let hyper = model.hyper;
    let (p, q) = (hyper.p(), hyper.q());
    let n = data.len() as f64;
    let residuals: Vec<DMatrix<f64>> = data
        .iter()
        .zip(&state.labels)
        .map(|(y, &z)| y.as_matrix() - state.means[z].as_matrix())
        .collect();

    // Σᵢ Rᵢ V⁻¹ Rᵢᵀ = Σᵢ (L_V⁻¹ Rᵢᵀ)ᵀ (L_V⁻¹ Rᵢᵀ)
    let mut scatter_u = hyper.beta_scale.matrix().clone();
    for r in &residuals {
        let x = solve_lower(state.v.cholesky(), &r.transpose());
        scatter_u += x.transpose() * x;
    }
    let u = sample_inv_wishart(
        hyper.u_df() + n * q as f64,
        &SpdMatrix::new(scatter_u)?,
        rng,
    )?;

    let mut scatter_v = hyper.rho_scale.matrix().clone();
    for r in &residuals {
        let x = solve_lower(u.cholesky(), r);
        scatter_v += x.transpose() * x;
    }
    let v = sample_inv_wishart(
        hyper.v_df() + n * p as f64,
        &SpdMatrix::new(scatter_v)?,
        rng,
    )?;
    state.set_covariances(u, v)
}

/// One full sweep: assignments, means, covariances, then compaction.
pub fn sweep<R: Rng + ?Sized>(
    state: &mut ClusterState,
    data: &[RealMatrix],
    model: &Model<'_>,
    rng: &mut R,
) -> Result<()> {
    let cache = MarginalCache::new(state, &model.prior)?;
    update_assignments(state, data, model, &cache, rng)?;
    update_cluster_means(state, data, model, rng)?;
    update_covariances(state, data, model, rng)?;
    state.compact();
    if cfg!(debug_assertions) {
        state.check_invariants()?;
    }
    Ok(())
}

/// `log p(Y, Z, M, U, V)` up to nothing: every factor is normalized.
pub fn log_joint_density(state: &ClusterState, data: &[RealMatrix], model: &Model<'_>) -> Result<f64> {
    let hyper = model.hyper;
    let mut total = 0.0;
    for (y, &z) in data.iter().zip(&state.labels) {
        let r = y.as_matrix() - state.means[z].as_matrix();
        total += -0.5 * kron_quadratic_form(&r, &state.u, &state.v);
    }
    total += data.len() as f64 * matnorm_log_norm(&state.u, &state.v);

    let prior = MatrixNormalParams::new(hyper.m0.clone(), hyper.sigma0.clone(), hyper.omega0.clone())?;
    for m in &state.means {
        total += log_density_matnorm(m, &prior)?;
    }
    total += log_density_inv_wishart(&state.u, hyper.u_df(), &hyper.beta_scale)?;
    total += log_density_inv_wishart(&state.v, hyper.v_df(), &hyper.rho_scale)?;

    // p(partition) = V_n(t) Π_c γ^(n_c)
    let counts = state.counts();
    total += model.vn.log_vn(counts.len());
    for c in counts {
        total += (0..c).map(|j| (hyper.gamma + j as f64).ln()).sum::<f64>();
    }
    Ok(total)
}

/// Default number of round-robin clusters a chain starts from. A chain
/// started from one cluster rarely splits: under the diffuse mean prior a
/// singleton's new-cluster weight is far below its weight in the big cluster,
/// while merging surplus clusters happens readily.
pub const DEFAULT_INITIAL_CLUSTERS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burnin: usize,
    pub seed: u64,
    pub thin: usize,
    pub initial_clusters: usize,
}

impl ChainConfig {
    pub fn new(iterations: usize, burnin: usize, seed: u64) -> Self {
        ChainConfig {
            iterations,
            burnin,
            seed,
            thin: 1,
            initial_clusters: DEFAULT_INITIAL_CLUSTERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burnin >= self.iterations {
            return Err(Error::InvalidParameter(format!(
                "burn-in {} must be smaller than iterations {}",
                self.burnin, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParameter("thin must be >= 1".into()));
        }
        if self.initial_clusters == 0 {
            return Err(Error::InvalidParameter("initial_clusters must be >= 1".into()));
        }
        Ok(())
    }

    pub fn retained_len(&self) -> usize {
        (self.iterations - self.burnin) / self.thin
    }
}

/// A post-burn-in draw. `u` and `v` are trace-normalized so `tr(v) = q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetainedState {
    pub iteration: usize,
    pub labels: Vec<usize>,
    pub num_clusters: usize,
    pub log_joint: f64,
    pub means: Vec<RealMatrix>,
    pub u: SpdMatrix,
    pub v: SpdMatrix,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ChainTrace {
    pub states: Vec<RetainedState>,
    /// Log joint density after every sweep, burn-in included.
    pub log_joint: Vec<f64>,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Writes one JSON record per retained state. Means and covariances are
    /// included for the final state always, and for every state when
    /// `all_states` is set.
    pub fn write_jsonl(&self, path: &Path, all_states: bool) -> Result<()> {
        #[derive(Serialize)]
        struct Record<'a> {
            iteration: usize,
            num_clusters: usize,
            log_joint: f64,
            labels: &'a [usize],
            #[serde(skip_serializing_if = "Option::is_none")]
            means: Option<&'a [RealMatrix]>,
            #[serde(skip_serializing_if = "Option::is_none")]
            u: Option<&'a SpdMatrix>,
            #[serde(skip_serializing_if = "Option::is_none")]
            v: Option<&'a SpdMatrix>,
        }
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let last = self.states.len().saturating_sub(1);
        for (idx, s) in self.states.iter().enumerate() {
            let full = all_states || idx == last;
            let rec = Record {
                iteration: s.iteration,
                num_clusters: s.num_clusters,
                log_joint: s.log_joint,
                labels: &s.labels,
                means: full.then_some(s.means.as_slice()),
                u: full.then_some(&s.u),
                v: full.then_some(&s.v),
            };
            let line = serde_json::to_string(&rec).map_err(|e| Error::Config(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Runs a chain against a prebuilt model (shared `V_n` table).
pub fn run_chain_with_model(
    data: &[RealMatrix],
    config: &ChainConfig,
    model: &Model<'_>,
) -> Result<ChainTrace> {
    config.validate()?;
    if data.len() < 2 {
        return Err(Error::EmptyData("a chain needs at least two observations".into()));
    }
    model.check_data(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = ClusterState::initial(data, config.initial_clusters)?;
    let mut trace = ChainTrace {
        states: Vec::with_capacity(config.retained_len()),
        log_joint: Vec::with_capacity(config.iterations),
    };
    for iteration in 0..config.iterations {
        let attach = |e: Error| Error::Chain {
            iteration,
            source: Box::new(e),
        };
        sweep(&mut state, data, model, &mut rng).map_err(attach)?;
        let lj = log_joint_density(&state, data, model).map_err(attach)?;
        trace.log_joint.push(lj);
        if iteration >= config.burnin && (iteration - config.burnin + 1).is_multiple_of(config.thin) {
            let (u, v) = normalize_trace(&state.u, &state.v);
            trace.states.push(RetainedState {
                iteration,
                labels: state.labels.clone(),
                num_clusters: state.num_clusters(),
                log_joint: lj,
                means: state.means.clone(),
                u,
                v,
            });
        }
    }
    Ok(trace)
}

pub fn run_chain(data: &[RealMatrix], config: &ChainConfig, hyper: &Hyperparams) -> Result<ChainTrace> {
    let vn = build_vn_table(data.len(), hyper.gamma, hyper.tau)?;
    let model = Model::new(hyper, &vn)?;
    run_chain_with_model(data, config, &model)
}
