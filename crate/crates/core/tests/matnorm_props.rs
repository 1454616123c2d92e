use std::f64::consts::PI;

use approx::assert_relative_eq;
use mfm_mxn::matnorm::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erf;

fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_spd(rng: &mut impl Rng, d: usize) -> SpdMatrix {
    let a = random_matrix(rng, d, d);
    SpdMatrix::new(&a * a.transpose() + DMatrix::identity(d, d) * 0.5).unwrap()
}

/// Dense MVN log density through LU, sharing nothing with the Cholesky path.
fn mvn_logpdf_lu(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let lu = cov.clone().lu();
    let r = x - mean;
    let sol = lu.solve(&r).unwrap();
    -0.5 * r.dot(&sol) - 0.5 * d * (2.0 * PI).ln() - 0.5 * lu.determinant().ln()
}

#[test]
fn density_matches_vectorized_mvn() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let p = rng.random_range(1..=4);
        let q = rng.random_range(1..=4);
        let u = random_spd(&mut rng, p);
        let v = random_spd(&mut rng, q);
        let m = random_matrix(&mut rng, p, q);
        let y = random_matrix(&mut rng, p, q) * 2.0;
        let params = MatrixNormalParams::new(RealMatrix::new(m.clone()).unwrap(), u.clone(), v.clone()).unwrap();
        let got = log_density_matnorm(&RealMatrix::new(y.clone()).unwrap(), &params).unwrap();
        let want = mvn_logpdf_lu(&vec(&y), &vec(&m), &kron(v.matrix(), u.matrix()));
        assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn density_at_mean_is_normalizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let u = random_spd(&mut rng, 3);
    let v = random_spd(&mut rng, 2);
    let m = RealMatrix::new(random_matrix(&mut rng, 3, 2)).unwrap();
    let params = MatrixNormalParams::new(m.clone(), u.clone(), v.clone()).unwrap();
    let want = -3.0 * (2.0 * PI).ln() - 1.5 * v.log_det() - u.log_det();
    assert_relative_eq!(log_density_matnorm(&m, &params).unwrap(), want, epsilon = 1e-12);
}

#[test]
fn density_rejects_bad_shapes() {
    let params = MatrixNormalParams::new(RealMatrix::zeros(2, 2), SpdMatrix::identity(2), SpdMatrix::identity(2)).unwrap();
    assert!(log_density_matnorm(&RealMatrix::zeros(2, 3), &params).is_err());
    assert!(MatrixNormalParams::new(RealMatrix::zeros(2, 2), SpdMatrix::identity(3), SpdMatrix::identity(2)).is_err());
    let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(matches!(SpdMatrix::new(bad), Err(mfm_mxn::Error::NotPositiveDefinite(_))));
    let asym = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.0, 2.0]);
    assert!(SpdMatrix::new(asym).is_err());
}

#[test]
fn one_by_two_density_integrates_to_one() {
    let u = SpdMatrix::new(DMatrix::from_element(1, 1, 0.7)).unwrap();
    let v = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0])).unwrap();
    let m = RealMatrix::from_row_slice(1, 2, &[0.3, -0.4]).unwrap();
    let params = MatrixNormalParams::new(m, u, v).unwrap();
    let (lo, hi, steps) = (-9.0, 9.0, 600);
    let h = (hi - lo) / steps as f64;
    let mut total = 0.0;
    for i in 0..steps {
        for j in 0..steps {
            let y = RealMatrix::from_row_slice(1, 2, &[lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h]).unwrap();
            total += log_density_matnorm(&y, &params).unwrap().exp();
        }
    }
    assert!((total * h * h - 1.0).abs() < 1e-4);
}

#[test]
fn standard_draws_pass_ks() {
    let params = MatrixNormalParams::new(RealMatrix::zeros(2, 3), SpdMatrix::identity(2), SpdMatrix::identity(3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut xs: Vec<f64> = (0..10_000).map(|_| sample_matnorm(&params, &mut rng).get(1, 2)).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 0.5 * (1.0 + erf(x / 2f64.sqrt()));
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // critical value at alpha = 0.01
    assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
}

#[test]
fn draw_moments_match_kron_covariance() {
    let u = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0])).unwrap();
    let v = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.5, -0.4, -0.4, 0.8])).unwrap();
    let m = RealMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]).unwrap();
    let params = MatrixNormalParams::new(m.clone(), u.clone(), v.clone()).unwrap();
    let target = kron(v.matrix(), u.matrix());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 100_000;
    let mut sum = DVector::zeros(4);
    let mut outer = DMatrix::zeros(4, 4);
    let mu = vec(m.as_matrix());
    for i in 0..n {
        let x = vec(sample_matnorm(&params, &mut rng).as_matrix());
        if i < 10_000 {
            sum += &x;
        }
        let r = x - &mu;
        outer += &r * r.transpose();
    }
    let mean = sum / 10_000.0;
    for k in 0..4 {
        let sd = target[(k, k)].sqrt();
        assert!((mean[k] - mu[k]).abs() < 4.0 * sd / 100.0);
    }
    let cov = outer / n as f64;
    for i in 0..4 {
        for j in 0..4 {
            let scale = (target[(i, i)] * target[(j, j)]).sqrt();
            assert!((cov[(i, j)] - target[(i, j)]).abs() < 0.05 * scale, "({i},{j})");
        }
    }
}

#[test]
fn samplers_are_seed_deterministic() {
    let params = MatrixNormalParams::new(RealMatrix::zeros(3, 2), SpdMatrix::identity(3), SpdMatrix::identity(2)).unwrap();
    let a: Vec<_> = {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        (0..5).map(|_| sample_matnorm(&params, &mut r)).collect()
    };
    let b: Vec<_> = {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        (0..5).map(|_| sample_matnorm(&params, &mut r)).collect()
    };
    assert_eq!(a, b);
}

#[test]
fn scalar_wishart_is_chi_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let k = 7.0;
    let n = 100_000;
    let xs: Vec<f64> = (0..n)
        .map(|_| sample_wishart(k, &SpdMatrix::identity(1), &mut rng).unwrap().matrix()[(0, 0)])
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    assert_relative_eq!(mean, k, max_relative = 0.05);
    assert_relative_eq!(var, 2.0 * k, max_relative = 0.05);
}

#[test]
fn wishart_mean_is_df_times_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut acc = DMatrix::zeros(3, 3);
    for _ in 0..10_000 {
        acc += sample_wishart(5.0, &SpdMatrix::identity(3), &mut rng).unwrap().matrix();
    }
    let mean = acc / 10_000.0;
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 5.0 } else { 0.0 };
            assert!((mean[(i, j)] - want).abs() < 0.05 * 5.0);
        }
    }
}

#[test]
fn scalar_inverse_wishart_moments() {
    // scale / chi2(df): mean s/(df-2), var 2 s^2 / ((df-2)^2 (df-4))
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (df, s) = (12.0, 3.0);
    let scale = SpdMatrix::new(DMatrix::from_element(1, 1, s)).unwrap();
    let n = 100_000;
    let xs: Vec<f64> = (0..n)
        .map(|_| sample_inv_wishart(df, &scale, &mut rng).unwrap().matrix()[(0, 0)])
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    assert_relative_eq!(mean, s / (df - 2.0), max_relative = 0.05);
    assert_relative_eq!(var, 2.0 * s * s / ((df - 2.0).powi(2) * (df - 4.0)), max_relative = 0.05);
}

#[test]
fn inverse_wishart_mean_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let mut acc = DMatrix::zeros(2, 2);
    for _ in 0..10_000 {
        let d = sample_inv_wishart(6.0, &SpdMatrix::identity(2), &mut rng).unwrap();
        assert!(SpdMatrix::new(d.inverse()).is_ok());
        acc += d.matrix();
    }
    let mean = acc / 10_000.0;
    assert_relative_eq!(mean[(0, 0)], 1.0 / 3.0, max_relative = 0.05);
    assert_relative_eq!(mean[(1, 1)], 1.0 / 3.0, max_relative = 0.05);
    assert!(mean[(0, 1)].abs() < 0.05 / 3.0);
}

#[test]
fn inverse_wishart_density_is_normalized_in_one_dim() {
    // 1-D inverse Wishart is inverse-gamma(df/2, s/2)
    let scale = SpdMatrix::new(DMatrix::from_element(1, 1, 2.0)).unwrap();
    let (lo, hi, steps) = (1e-4, 60.0, 200_000);
    let h = (hi - lo) / steps as f64;
    let total: f64 = (0..steps)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * h;
            let s = SpdMatrix::new(DMatrix::from_element(1, 1, x)).unwrap();
            log_density_inv_wishart(&s, 5.0, &scale).unwrap().exp()
        })
        .sum();
    assert!((total * h - 1.0).abs() < 1e-3);
}

#[test]
fn kron_and_vec_examples() {
    assert_eq!(kron(&DMatrix::identity(2, 2), &DMatrix::identity(3, 3)), DMatrix::identity(6, 6));
    let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(kron(&DMatrix::from_element(1, 1, 2.0), &b), &b * 2.0);
    assert_eq!(vec(&b).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
    let row = DMatrix::from_row_slice(1, 3, &[5.0, 6.0, 7.0]);
    assert_eq!(vec(&row).as_slice(), &[5.0, 6.0, 7.0]);
    assert_eq!(unvec(&vec(&b), 2, 2), b);
}

#[test]
fn ar1_and_correlation_examples() {
    assert_eq!(ar1_cov(4, 0.0, 2.0).unwrap().matrix(), &(DMatrix::identity(4, 4) * 2.0));
    assert_eq!(
        ar1_cov(2, 0.9, 1.0).unwrap().matrix(),
        &DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0])
    );
    assert!(ar1_cov(3, 1.0, 1.0).is_err());
    let s = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 1.25])).unwrap();
    let c = cov_to_corr(&s).unwrap();
    assert_relative_eq!(c.matrix()[(0, 1)], 2.0 / (4.0f64 * 1.25).sqrt(), epsilon = 1e-15);
    let d = SpdMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 0.2, 9.0]))).unwrap();
    assert_eq!(cov_to_corr(&d).unwrap().matrix(), &DMatrix::identity(3, 3));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let w = sample_wishart(6.0, &SpdMatrix::identity(5), &mut rng).unwrap();
        let c = cov_to_corr(&w).unwrap();
        assert!(c.matrix().diagonal().iter().all(|&x| x == 1.0));
    }
}

#[test]
fn normalize_trace_examples() {
    let u = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
    let v = SpdMatrix::identity(3);
    let (u2, v2) = normalize_trace(&u, &v);
    assert_eq!(u2.matrix(), u.matrix());
    assert_eq!(v2.matrix(), v.matrix());
    let (u3, v3) = normalize_trace(&u, &v.scaled(2.0));
    assert_relative_eq!(u3.matrix(), &(u.matrix() * 2.0), epsilon = 1e-14);
    assert_relative_eq!(v3.matrix(), v.matrix(), epsilon = 1e-14);
}

fn spd_strategy(d: usize) -> impl Strategy<Value = SpdMatrix> {
    proptest::collection::vec(-2.0f64..2.0, d * d).prop_map(move |xs| {
        let a = DMatrix::from_vec(d, d, xs);
        SpdMatrix::new(&a * a.transpose() + DMatrix::identity(d, d) * 0.3).unwrap()
    })
}

fn pair_strategy() -> impl Strategy<Value = (SpdMatrix, SpdMatrix, DMatrix<f64>, DMatrix<f64>)> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(p, q)| {
        (
            spd_strategy(p),
            spd_strategy(q),
            proptest::collection::vec(-3.0f64..3.0, p * q).prop_map(move |x| DMatrix::from_vec(p, q, x)),
            proptest::collection::vec(-3.0f64..3.0, p * q).prop_map(move |x| DMatrix::from_vec(p, q, x)),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn prop_density_equals_mvn((u, v, y, m) in pair_strategy()) {
        let params = MatrixNormalParams::new(RealMatrix::new(m.clone()).unwrap(), u.clone(), v.clone()).unwrap();
        let got = log_density_matnorm(&RealMatrix::new(y.clone()).unwrap(), &params).unwrap();
        let want = mvn_logpdf_lu(&vec(&y), &vec(&m), &kron(v.matrix(), u.matrix()));
        prop_assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0));
    }

    #[test]
    fn prop_density_scale_invariant((u, v, y, m) in pair_strategy(), a in 0.05f64..20.0) {
        let yy = RealMatrix::new(y).unwrap();
        let base = MatrixNormalParams::new(RealMatrix::new(m.clone()).unwrap(), u.clone(), v.clone()).unwrap();
        let moved = MatrixNormalParams::new(RealMatrix::new(m).unwrap(), u.scaled(a), v.scaled(1.0 / a)).unwrap();
        let d = log_density_matnorm(&yy, &base).unwrap() - log_density_matnorm(&yy, &moved).unwrap();
        prop_assert!(d.abs() < 1e-10);
    }

    #[test]
    fn prop_normalize_trace_keeps_kron((u, v, _y, _m) in pair_strategy()) {
        let (u2, v2) = normalize_trace(&u, &v);
        prop_assert!((v2.trace() - v.dim() as f64).abs() < 1e-12 * v.dim() as f64);
        let before = kron(v.matrix(), u.matrix());
        let after = kron(v2.matrix(), u2.matrix());
        let scale = before.amax();
        prop_assert!((before - after).amax() <= 1e-12 * scale);
    }

    #[test]
    fn prop_kron_mixed_product(xs in proptest::collection::vec(-2.0f64..2.0, 16)) {
        let m = |k: usize| DMatrix::from_row_slice(2, 2, &xs[4 * k..4 * k + 4]);
        let (a, b, c, d) = (m(0), m(1), m(2), m(3));
        let lhs = kron(&a, &b) * kron(&c, &d);
        let rhs = kron(&(&a * &c), &(&b * &d));
        prop_assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn prop_vec_identity(xs in proptest::collection::vec(-2.0f64..2.0, 9 + 6 + 4)) {
        // vec(A X Bᵀ) = (B ⊗ A) vec(X), A 3x3, X 3x2, B 2x2
        let a = DMatrix::from_row_slice(3, 3, &xs[..9]);
        let x = DMatrix::from_row_slice(3, 2, &xs[9..15]);
        let b = DMatrix::from_row_slice(2, 2, &xs[15..]);
        let lhs = vec(&(&a * &x * b.transpose()));
        let rhs = kron(&b, &a) * vec(&x);
        prop_assert!((lhs - rhs).amax() < 1e-12);
    }
}
