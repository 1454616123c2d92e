use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mfm_mxn::experiment::{emit_plot_data, run_experiment, HyperOverrides, RunConfig, RunResult, Truth};
use mfm_mxn::gibbs::{ChainConfig, DEFAULT_INITIAL_CLUSTERS};
use mfm_mxn::io::{
    bin_shots, load_labels, load_matrices, save_labels, save_matrices, ShotEventTable, DEFAULT_EPSILON,
};
use mfm_mxn::matnorm::SpdMatrix;
use mfm_mxn::postprocess::{count_distinct, rand_index};
use mfm_mxn::prior::Hyperparams;
use mfm_mxn::simgen::{large_scenario, small_scenario, NoiseLevel};
use mfm_mxn::{Error, Result};

#[derive(Parser)]
#[command(name = "mfm-mxn", version, about = "Clustering matrix-valued data with MFM matrix normal mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled simulation dataset.
    Simulate(SimulateArgs),
    /// Fit the model with one or more chains.
    Fit(FitArgs),
    /// Compare a label file against reference labels.
    Metrics(MetricsArgs),
    /// Turn a shot-event CSV into per-entity log-rate grids.
    Bin(BinArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Small,
    Large,
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    High,
    Low,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "small")]
    scenario: Scenario,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Noise level of the small scenario.
    #[arg(long, value_enum, default_value = "high")]
    noise: Noise,
    /// Column standard deviation of the large scenario.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Column AR(1) correlation of the large scenario.
    #[arg(long, default_value_t = 0.6)]
    rho: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Matrix file with the observations.
    #[arg(long)]
    data: PathBuf,
    /// True labels; enables Rand index and K-hat scoring.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// JSON file with true `u` and `v`; enables covariance RMSE.
    #[arg(long)]
    truth_cov: Option<PathBuf>,
    #[arg(long, default_value_t = 1500)]
    iters: usize,
    #[arg(long, default_value_t = 1000)]
    burnin: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Round-robin clusters the chains start from (capped at n).
    #[arg(long, default_value_t = DEFAULT_INITIAL_CLUSTERS)]
    initial_clusters: usize,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    psi: Option<f64>,
    /// TOML file with a full hyperparameter set.
    #[arg(long)]
    hyper_config: Option<PathBuf>,
    #[arg(long)]
    output_dir: PathBuf,
    /// Write means and covariances of every retained draw to the traces.
    #[arg(long)]
    emit_all_states: bool,
}

#[derive(Args)]
struct MetricsArgs {
    /// Reference label file.
    #[arg(long)]
    labels: PathBuf,
    /// Label file or a run_result.json from `fit`.
    #[arg(long)]
    predicted: PathBuf,
}

#[derive(Args)]
struct BinArgs {
    /// CSV with columns entity_id,x,y,games_played.
    #[arg(long)]
    events: PathBuf,
    #[arg(long, default_value_t = 25)]
    p: usize,
    #[arg(long, default_value_t = 18)]
    q: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct TrueCovariances {
    u: SpdMatrix,
    v: SpdMatrix,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let ds = match a.scenario {
        Scenario::Small => {
            let noise = match a.noise {
                Noise::High => NoiseLevel::High,
                Noise::Low => NoiseLevel::Low,
            };
            small_scenario(a.n, noise, a.seed)?
        }
        Scenario::Large => large_scenario(a.n, a.sigma, a.rho, a.seed)?,
    };
    create_dir(&a.output_dir)?;
    save_matrices(&a.output_dir.join("data.txt"), &ds.data)?;
    save_labels(&a.output_dir.join("labels.txt"), &ds.true_labels)?;
    let first = &ds.spec.components[0];
    let truth = TrueCovariances {
        u: first.row_cov.clone(),
        v: first.col_cov.clone(),
    };
    let json = serde_json::to_string_pretty(&truth).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&a.output_dir.join("truth_cov.json"), json + "\n")?;
    println!("wrote {} observations to {}", ds.data.len(), a.output_dir.display());
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let data = load_matrices(&a.data)?;
    let truth = match &a.labels {
        Some(path) => {
            let covariances = match &a.truth_cov {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| Error::Io {
                        path: p.clone(),
                        source: e,
                    })?;
                    let t: TrueCovariances =
                        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                    Some((t.u, t.v))
                }
                None => None,
            };
            Some(Truth {
                labels: load_labels(path)?,
                covariances,
            })
        }
        None => None,
    };
    let config = RunConfig {
        chain: ChainConfig {
            iterations: a.iters,
            burnin: a.burnin,
            seed: a.seed,
            thin: a.thin,
            initial_clusters: a.initial_clusters,
        },
        chains: a.chains,
        hyper: a.hyper_config.as_deref().map(Hyperparams::load).transpose()?,
        overrides: HyperOverrides {
            gamma: a.gamma,
            tau: a.tau,
            alpha: a.alpha,
            psi: a.psi,
        },
    };
    let out = run_experiment(&data, &config, truth.as_ref())?;

    create_dir(&a.output_dir)?;
    out.result.save(&a.output_dir.join("run_result.json"))?;
    for (c, trace) in out.traces.iter().enumerate() {
        trace.write_jsonl(&a.output_dir.join(format!("chain_{c}.jsonl")), a.emit_all_states)?;
    }
    emit_plot_data(&out.result, &data, &a.output_dir.join("plot"))?;

    let r = &out.result;
    println!("K-hat = {} (representative chain {})", r.k_hat, r.representative_chain);
    if let Some(m) = &r.metrics {
        println!("Rand index = {:.4}, K correct = {}", m.rand_index, m.k_correct);
        if let Some(rmse) = m.rmse_kron {
            println!("RMSE(V x U) = {rmse:.5}");
        }
    }
    Ok(())
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let truth = load_labels(&a.labels)?;
    let predicted = if a.predicted.extension().is_some_and(|e| e == "json") {
        RunResult::load(&a.predicted)?.labels
    } else {
        load_labels(&a.predicted)?
    };
    let ri = rand_index(&predicted, &truth)?;
    println!("rand_index {ri}");
    println!("k_predicted {}", count_distinct(&predicted));
    println!("k_true {}", count_distinct(&truth));
    Ok(())
}

fn bin(a: BinArgs) -> Result<()> {
    let events = ShotEventTable::load_csv(&a.events)?;
    let (ids, grids) = bin_shots(&events, a.p, a.q, a.epsilon)?;
    create_dir(&a.output_dir)?;
    save_matrices(&a.output_dir.join("data.txt"), &grids)?;
    write_text(&a.output_dir.join("entities.txt"), ids.join("\n") + "\n")?;
    println!("binned {} entities into {}x{} grids", ids.len(), a.p, a.q);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Metrics(a) => metrics(a),
        Command::Bin(a) => bin(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
