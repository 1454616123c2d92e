//! Synthetic benchmarks: a generic matrix-normal mixture generator and two
//! fixed scenarios.
//!
//! * small: `10 × 6` binary shape masks (filled rectangle, plus sign, hollow
//!   frame), weights `(0.3, 0.3, 0.4)`, `U` a correlation matrix from a
//!   `Wishart(11, I₁₀)` draw and `V` an AR(1) with `ρ = 0.9`, scaled by `0.25`
//!   at low noise.
//! * large: `25 × 18` log-intensity surfaces on a half court with 2 ft cells
//!   (rows run sideline to sideline, columns run away from the baseline),
//!   weights `(0.3, 0.4, 0.3)`, `U` a correlation matrix from a
//!   `Wishart(26, I₂₅)` draw and `V = σ² AR(1, ρ)`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matnorm::{
    ar1_cov, cov_to_corr, log_density_matnorm, sample_matnorm, sample_wishart, MatrixNormalParams,
    RealMatrix, SpdMatrix,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub weights: Vec<f64>,
    pub components: Vec<MatrixNormalParams>,
    pub n: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidParameter("no mixture components".into()));
        }
        if self.weights.len() != self.components.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} components",
                self.weights.len(),
                self.components.len()
            )));
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidParameter("weights must be positive".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, not 1")));
        }
        let shape = self.components[0].mean.shape();
        if self.components.iter().any(|c| c.mean.shape() != shape) {
            return Err(Error::DimensionMismatch("components differ in shape".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub data: Vec<RealMatrix>,
    pub true_labels: Vec<usize>,
    pub spec: GeneratorSpec,
}

/// Draws `spec.n` labels i.i.d. from the weights and an observation from each
/// label's component.
pub fn gen_mixture<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<LabeledDataset> {
    spec.validate()?;
    let pick = WeightedIndex::new(&spec.weights)
        .map_err(|e| Error::InvalidParameter(format!("weights: {e}")))?;
    let mut data = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let z = pick.sample(rng);
        data.push(sample_matnorm(&spec.components[z], rng));
        labels.push(z);
    }
    Ok(LabeledDataset {
        data,
        true_labels: labels,
        spec: spec.clone(),
    })
}

/// Assigns each observation to the component with the highest posterior
/// probability under the generating mixture.
pub fn bayes_classify(spec: &GeneratorSpec, data: &[RealMatrix]) -> Result<Vec<usize>> {
    data.iter()
        .map(|y| {
            let mut best = (f64::NEG_INFINITY, 0);
            for (k, (w, c)) in spec.weights.iter().zip(&spec.components).enumerate() {
                let s = w.ln() + log_density_matnorm(y, c)?;
                if s > best.0 {
                    best = (s, k);
                }
            }
            Ok(best.1)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLevel {
    High,
    Low,
}

impl std::str::FromStr for NoiseLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "high" => Ok(NoiseLevel::High),
            "low" => Ok(NoiseLevel::Low),
            other => Err(Error::InvalidParameter(format!("unknown noise level {other:?}"))),
        }
    }
}

pub const SMALL_P: usize = 10;
pub const SMALL_Q: usize = 6;
pub const LARGE_P: usize = 25;
pub const LARGE_Q: usize = 18;

/// Binary masks of the small scenario: filled rectangle, plus sign, hollow frame.
pub fn small_masks() -> [RealMatrix; 3] {
    let mask = |f: &dyn Fn(usize, usize) -> bool| {
        RealMatrix::from_fn(SMALL_P, SMALL_Q, |i, j| f64::from(u8::from(f(i, j)))).unwrap()
    };
    [
        mask(&|i, j| (2..=7).contains(&i) && (1..=4).contains(&j)),
        mask(&|i, j| i == 4 || i == 5 || j == 2 || j == 3),
        mask(&|i, j| i == 0 || i == SMALL_P - 1 || j == 0 || j == SMALL_Q - 1),
    ]
}

/// Separate streams for the covariance draw and the observations.
fn scenario_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let data = ChaCha8Rng::seed_from_u64(seed);
    let mut cov = ChaCha8Rng::seed_from_u64(seed);
    cov.set_stream(1);
    (cov, data)
}

fn wishart_correlation(dim: usize, df: f64, rng: &mut ChaCha8Rng) -> Result<SpdMatrix> {
    cov_to_corr(&sample_wishart(df, &SpdMatrix::identity(dim), rng)?)
}

pub fn small_scenario_spec(n: usize, noise: NoiseLevel, seed: u64) -> Result<GeneratorSpec> {
    if n < 3 {
        return Err(Error::InvalidParameter("scenario needs n >= 3".into()));
    }
    let (mut cov_rng, _) = scenario_rngs(seed);
    let u = wishart_correlation(SMALL_P, SMALL_P as f64 + 1.0, &mut cov_rng)?;
    let sigma2 = match noise {
        NoiseLevel::High => 1.0,
        NoiseLevel::Low => 0.25,
    };
    let v = ar1_cov(SMALL_Q, 0.9, sigma2)?;
    let components = small_masks()
        .into_iter()
        .map(|m| MatrixNormalParams::new(m, u.clone(), v.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneratorSpec {
        weights: vec![0.3, 0.3, 0.4],
        components,
        n,
        seed,
    })
}

pub fn small_scenario(n: usize, noise: NoiseLevel, seed: u64) -> Result<LabeledDataset> {
    let spec = small_scenario_spec(n, noise, seed)?;
    let (_, mut data_rng) = scenario_rngs(seed);
    gen_mixture(&spec, &mut data_rng)
}

/// Cell centres in feet: `x` (sideline to sideline) for row `i`, `y`
/// (distance from the baseline) for column `j`.
fn cell_center(i: usize, j: usize) -> (f64, f64) {
    (2.0 * i as f64 + 1.0, 2.0 * j as f64 + 1.0)
}

const BASKET: (f64, f64) = (25.0, 5.25);
const THREE_POINT_RADIUS: f64 = 23.75;

fn basket_distance(i: usize, j: usize) -> f64 {
    let (x, y) = cell_center(i, j);
    ((x - BASKET.0).powi(2) + (y - BASKET.1).powi(2)).sqrt()
}

/// Mean log-intensity surfaces of the large scenario: inside-dominant,
/// all-around and perimeter-dominant shooters. All values lie in `[0, 3]`.
pub fn large_surfaces() -> [RealMatrix; 3] {
    let surface = |f: &dyn Fn(f64) -> f64| {
        RealMatrix::from_fn(LARGE_P, LARGE_Q, |i, j| f(basket_distance(i, j))).unwrap()
    };
    [
        surface(&|d| 3.0 * (-d * d / (2.0 * 5.0 * 5.0)).exp()),
        surface(&|d| 1.2 + 0.8 * (-d * d / (2.0 * 6.0 * 6.0)).exp()),
        surface(&|d| {
            let r = d - THREE_POINT_RADIUS;
            0.3 + 2.7 * (-r * r / (2.0 * 2.5 * 2.5)).exp()
        }),
    ]
}

pub fn large_scenario_spec(n: usize, sigma: f64, rho: f64, seed: u64) -> Result<GeneratorSpec> {
    if n < 3 {
        return Err(Error::InvalidParameter("scenario needs n >= 3".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    let (mut cov_rng, _) = scenario_rngs(seed);
    let u = wishart_correlation(LARGE_P, LARGE_P as f64 + 1.0, &mut cov_rng)?;
    let v = ar1_cov(LARGE_Q, rho, sigma * sigma)?;
    let components = large_surfaces()
        .into_iter()
        .map(|m| MatrixNormalParams::new(m, u.clone(), v.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneratorSpec {
        weights: vec![0.3, 0.4, 0.3],
        components,
        n,
        seed,
    })
}

pub fn large_scenario(n: usize, sigma: f64, rho: f64, seed: u64) -> Result<LabeledDataset> {
    let spec = large_scenario_spec(n, sigma, rho, seed)?;
    let (_, mut data_rng) = scenario_rngs(seed);
    gen_mixture(&spec, &mut data_rng)
}

/// Element-wise L2 distance between two equally shaped matrices.
pub fn l2_distance(a: &RealMatrix, b: &RealMatrix) -> f64 {
    (a.as_matrix() - b.as_matrix()).norm()
}
