//! Multi-chain fitting, result assembly and output files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{run_chain_with_model, ChainConfig, ChainTrace, Model};
use crate::matnorm::{normalize_trace, RealMatrix, SpdMatrix};
use crate::postprocess::{
    count_distinct, dahl_select, k_posterior, rand_index, rmse_kron, select_representative_chain,
    PartitionEstimate,
};
use crate::prior::{build_vn_table, default_hyperparams, Hyperparams};

/// Scalar hyperparameter overrides applied on top of the defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HyperOverrides {
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    pub psi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Per-chain settings; chain `c` runs with seed `chain.seed + c`.
    pub chain: ChainConfig,
    pub chains: usize,
    /// Full hyperparameter set; data-driven defaults when absent.
    pub hyper: Option<Hyperparams>,
    pub overrides: HyperOverrides,
}

impl RunConfig {
    pub fn new(iterations: usize, burnin: usize, seed: u64, chains: usize) -> Self {
        RunConfig {
            chain: ChainConfig::new(iterations, burnin, seed),
            chains,
            hyper: None,
            overrides: HyperOverrides::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::InvalidParameter("need at least one chain".into()));
        }
        self.chain.validate()
    }

    pub fn resolve_hyperparams(&self, data: &[RealMatrix]) -> Result<Hyperparams> {
        let mut h = match &self.hyper {
            Some(h) => h.clone(),
            None => default_hyperparams(data)?,
        };
        let o = &self.overrides;
        if let Some(g) = o.gamma {
            h.gamma = g;
        }
        if let Some(t) = o.tau {
            h.tau = t;
        }
        if let Some(a) = o.alpha {
            h.alpha = a;
        }
        if let Some(p) = o.psi {
            h.psi = p;
        }
        h.validate()?;
        Ok(h)
    }
}

/// Known generating truth, for scoring a fit.
#[derive(Clone, Debug)]
pub struct Truth {
    pub labels: Vec<usize>,
    pub covariances: Option<(SpdMatrix, SpdMatrix)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub seed: u64,
    pub dahl: PartitionEstimate,
    pub k_posterior: BTreeMap<usize, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rand_index: f64,
    pub k_true: usize,
    pub k_correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse_kron: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub settings: RunSettings,
    pub hyperparams: Hyperparams,
    pub chains: Vec<ChainSummary>,
    pub representative_chain: usize,
    pub labels: Vec<usize>,
    pub k_hat: usize,
    /// Cluster-count frequencies over the representative chain.
    pub k_posterior: BTreeMap<usize, f64>,
    /// Cluster means of the Dahl-selected draw, indexed by label.
    pub means: Vec<RealMatrix>,
    /// Posterior mean of the trace-normalized covariances of the
    /// representative chain.
    pub u: SpdMatrix,
    pub v: SpdMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
}

impl RunResult {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub struct RunOutput {
    pub result: RunResult,
    pub traces: Vec<ChainTrace>,
}

/// Runs `f(0..count)` on at most `workers` scoped threads; results come back
/// in index order.
fn run_pool<T: Send>(count: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, count.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let out = f(i);
                slots.lock().unwrap()[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|o| o.expect("worker finished every index"))
        .collect()
}

fn mean_spd(mats: impl Iterator<Item = DMatrix<f64>>) -> Result<SpdMatrix> {
    let mut count = 0usize;
    let mut acc: Option<DMatrix<f64>> = None;
    for m in mats {
        count += 1;
        acc = Some(match acc {
            Some(a) => a + m,
            None => m,
        });
    }
    let acc = acc.ok_or_else(|| Error::EmptyData("no retained draws".into()))?;
    SpdMatrix::new(acc / count as f64)
}

pub fn run_experiment(data: &[RealMatrix], config: &RunConfig, truth: Option<&Truth>) -> Result<RunOutput> {
    config.validate()?;
    let first = data
        .first()
        .ok_or_else(|| Error::EmptyData("no observations".into()))?;
    let (p, q) = first.shape();
    if let Some(t) = truth {
        if t.labels.len() != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} true labels for {} observations",
                t.labels.len(),
                data.len()
            )));
        }
    }

    let hyper = config.resolve_hyperparams(data)?;
    let vn = build_vn_table(data.len(), hyper.gamma, hyper.tau)?;
    let model = Model::new(&hyper, &vn)?;

    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let seeds: Vec<u64> = (0..config.chains as u64)
        .map(|c| config.chain.seed.wrapping_add(c))
        .collect();
    let traces = run_pool(config.chains, workers.min(config.chains), |c| {
        let cfg = ChainConfig {
            seed: seeds[c],
            ..config.chain.clone()
        };
        log::debug!("chain {c} starting with seed {}", cfg.seed);
        run_chain_with_model(data, &cfg, &model)
    })
    .into_iter()
    .enumerate()
    .map(|(c, r)| r.inspect_err(|e| log::error!("chain {c} failed: {e}")))
    .collect::<Result<Vec<_>>>()?;

    let estimates = traces.iter().map(dahl_select).collect::<Result<Vec<_>>>()?;
    let representative = if estimates.len() == 1 {
        0
    } else {
        select_representative_chain(&estimates)?
    };
    let chains: Vec<ChainSummary> = estimates
        .iter()
        .zip(&traces)
        .zip(&seeds)
        .map(|((est, tr), &seed)| ChainSummary {
            seed,
            dahl: est.clone(),
            k_posterior: k_posterior(tr),
        })
        .collect();

    let best = &estimates[representative];
    let trace = &traces[representative];
    let draw = &trace.states[best.source_draw_index];
    let u = mean_spd(trace.states.iter().map(|s| s.u.matrix().clone()))?;
    let v = mean_spd(trace.states.iter().map(|s| s.v.matrix().clone()))?;
    let (u, v) = normalize_trace(&u, &v);

    let metrics = truth
        .map(|t| -> Result<Metrics> {
            let k_true = count_distinct(&t.labels);
            Ok(Metrics {
                rand_index: rand_index(&best.labels, &t.labels)?,
                k_true,
                k_correct: best.k_hat == k_true,
                rmse_kron: t
                    .covariances
                    .as_ref()
                    .map(|(ut, vt)| rmse_kron(&u, &v, ut, vt))
                    .transpose()?,
            })
        })
        .transpose()?;

    let result = RunResult {
        n: data.len(),
        p,
        q,
        settings: RunSettings {
            iterations: config.chain.iterations,
            burnin: config.chain.burnin,
            thin: config.chain.thin,
            seed: config.chain.seed,
            chains: config.chains,
        },
        hyperparams: hyper.clone(),
        k_posterior: chains[representative].k_posterior.clone(),
        chains,
        representative_chain: representative,
        labels: best.labels.clone(),
        k_hat: best.k_hat,
        means: draw.means.clone(),
        u,
        v,
        metrics,
    };
    Ok(RunOutput { result, traces })
}

fn grid_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

/// Reads a header-less comma-separated grid as written by [`emit_plot_data`].
pub fn load_grid_csv(path: &Path) -> Result<RealMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("not a number: {f:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    RealMatrix::from_rows(&rows)
}

/// Writes `mean_cluster_<k>.csv` per cluster, `u.csv`, `v.csv` and
/// `assignments.csv` (`index,label`). Returns the written paths.
pub fn emit_plot_data(result: &RunResult, data: &[RealMatrix], dir: &Path) -> Result<Vec<PathBuf>> {
    if data.len() != result.labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "result has {} labels, data has {} observations",
            result.labels.len(),
            data.len()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    for (k, m) in result.means.iter().enumerate() {
        put(format!("mean_cluster_{k}.csv"), grid_csv(m.as_matrix()))?;
    }
    put("u.csv".into(), grid_csv(result.u.matrix()))?;
    put("v.csv".into(), grid_csv(result.v.matrix()))?;
    let mut assign = String::from("index,label\n");
    for (i, l) in result.labels.iter().enumerate() {
        let _ = writeln!(assign, "{i},{l}");
    }
    put("assignments.csv".into(), assign)?;
    Ok(written)
}
