use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;

fn random_data(rng: &mut ChaCha8Rng, n: usize, dim: usize, spread: f64) -> (DMatrix<f64>, DVector<f64>) {
    let x = DMatrix::from_fn(n, dim, |_, _| rng.gen_range(-spread..spread));
    let y = DVector::from_fn(n, |i, _| x.row(i).sum().sin() + 0.3 * x[(i, 0)]);
    (x, y)
}

fn random_hyper(rng: &mut ChaCha8Rng, dim: usize) -> Hyperparameters {
    Hyperparameters::new(
        rng.gen_range(0.5..2.0),
        (0..dim).map(|_| rng.gen_range(0.4..2.0)).collect(),
        rng.gen_range(0.05..0.3),
    )
    .unwrap()
}

/// Gram matrix plus noise, built entry by entry from the public kernel.
fn dense_gram(x: &DMatrix<f64>, h: &Hyperparameters) -> DMatrix<f64> {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        se_kernel(h, &rows[i], &rows[j]) + if i == j { h.sigma_on.powi(2) } else { 0.0 }
    })
}

/// Mean and variance by LU solves, no Cholesky anywhere.
fn dense_predict(x: &DMatrix<f64>, y: &DVector<f64>, h: &Hyperparameters, q: &[f64]) -> (f64, f64) {
    let lu = dense_gram(x, h).lu();
    let k = DVector::from_fn(x.nrows(), |i, _| {
        se_kernel(h, &x.row(i).iter().copied().collect::<Vec<_>>(), q)
    });
    let a = lu.solve(y).unwrap();
    let b = lu.solve(&k).unwrap();
    (k.dot(&a), se_kernel(h, q, q) - k.dot(&b))
}

fn fd_gradient(m: &GpModel, x: &[f64]) -> DVector<f64> {
    DVector::from_fn(x.len(), |d, _| {
        let mut p = x.to_vec();
        let mut q = x.to_vec();
        p[d] += 1e-6;
        q[d] -= 1e-6;
        (m.predict_mean(&p) - m.predict_mean(&q)) / 2e-6
    })
}

#[test]
fn single_point_alpha() {
    let h = Hyperparameters::isotropic(1.5, 0.7, 2, 0.2).unwrap();
    let x = DMatrix::from_row_slice(1, 2, &[0.3, -0.1]);
    let m = GpModel::condition(&x, &DVector::from_element(1, 2.0), h).unwrap();
    assert!((m.alpha()[0] - 2.0 / (2.25 + 0.04)).abs() < 1e-14);
}

#[test]
fn alpha_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let h = random_hyper(&mut rng, 3);
        let (x, y) = random_data(&mut rng, 60, 3, 2.0);
        let m = GpModel::condition(&x, &y, h.clone()).unwrap();
        let dense = dense_gram(&x, &h).lu().solve(&y).unwrap();
        assert!((m.alpha() - &dense).amax() < 1e-10);
        // The stored factor reproduces the targets.
        let resid = dense_gram(&x, &h) * m.alpha() - &y;
        assert!(resid.norm() < 1e-8 * y.norm());
    }
}

#[test]
fn interpolates_with_tiny_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = Hyperparameters::isotropic(1.0, 0.5, 3, 1e-6).unwrap();
    let (x, y) = random_data(&mut rng, 50, 3, 3.0);
    let m = GpModel::condition(&x, &y, h).unwrap();
    for i in 0..50 {
        let (mu, _) = m.predict(m.input(i));
        assert!((mu - y[i]).abs() < 1e-6, "{} vs {}", mu, y[i]);
    }
}

#[test]
fn prediction_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let h = random_hyper(&mut rng, 4);
    let (x, y) = random_data(&mut rng, 80, 4, 2.0);
    let m = GpModel::condition(&x, &y, h.clone()).unwrap();
    for _ in 0..20 {
        let q: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.5..2.5)).collect();
        let (mu, var) = m.predict(&q);
        let (dm, dv) = dense_predict(&x, &y, &h, &q);
        assert!((mu - dm).abs() < 1e-10);
        assert!((var - dv.clamp(0.0, h.sigma_f.powi(2))).abs() < 1e-10);
    }
}

#[test]
fn far_query_recovers_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let h = Hyperparameters::isotropic(1.3, 0.5, 2, 0.1).unwrap();
    let (x, y) = random_data(&mut rng, 30, 2, 1.0);
    let m = GpModel::condition(&x, &y, h).unwrap();
    let (mu, var) = m.predict(&[100.0, -100.0]);
    assert!(mu.abs() < 1e-12);
    assert!((var - 1.69).abs() < 1e-12);
}

#[test]
fn near_interpolation_at_training_input() {
    let h = Hyperparameters::isotropic(1.0, 1.0, 1, 1e-6).unwrap();
    let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.5]);
    let y = DVector::from_column_slice(&[0.4, -0.2, 1.1]);
    let m = GpModel::condition(&x, &y, h).unwrap();
    assert!((m.predict(&[1.0]).0 + 0.2).abs() < 1e-4);
}

#[test]
fn empty_model_is_the_prior() {
    let m = GpModel::empty(Hyperparameters::isotropic(2.0, 1.0, 3, 0.1).unwrap()).unwrap();
    assert_eq!(m.predict(&[0.1, 0.2, 0.3]), (0.0, 4.0));
    assert_eq!(m.mean_jacobian(&[0.1, 0.2, 0.3]).amax(), 0.0);
}

#[test]
fn gradient_vanishes_at_single_training_input() {
    let h = Hyperparameters::new(1.0, vec![0.3, 0.8], 0.1).unwrap();
    let x = DMatrix::from_row_slice(1, 2, &[0.5, -0.4]);
    let m = GpModel::condition(&x, &DVector::from_element(1, 1.7), h).unwrap();
    assert!(m.mean_jacobian(&[0.5, -0.4]).amax() < 1e-15);
}

#[test]
fn mean_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let h = random_hyper(&mut rng, 3);
    let (x, y) = random_data(&mut rng, 100, 3, 2.0);
    let m = GpModel::condition(&x, &y, h).unwrap();
    for _ in 0..100 {
        let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let g = m.mean_jacobian(&q);
        let fd = fd_gradient(&m, &q);
        assert!((&g - &fd).norm() / fd.norm().max(1e-3) < 1e-5);
        let full = m.predict_full(&q);
        assert!((full.gradient - g).amax() < 1e-14);
    }
}

#[test]
fn variance_never_increases_when_adding_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let h = random_hyper(&mut rng, 2);
        let (x, y) = random_data(&mut rng, 20, 2, 2.0);
        let mut m = GpModel::condition(&x, &y, h).unwrap();
        let q: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut last = m.predict(&q).1;
        for _ in 0..5 {
            let p: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            m = m.add_point(&p, rng.gen_range(-1.0..1.0)).unwrap();
            let now = m.predict(&q).1;
            assert!(now <= last + 1e-12);
            last = now;
        }
    }
}

#[test]
fn incremental_matches_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = random_hyper(&mut rng, 3);
    let (x, y) = random_data(&mut rng, 120, 3, 2.0);
    let mut inc = GpModel::empty(h.clone()).unwrap();
    for i in 0..120 {
        inc.push(x.row(i).iter().copied().collect::<Vec<_>>().as_slice(), y[i]).unwrap();
    }
    let batch = GpModel::condition(&x, &y, h).unwrap();
    for _ in 0..30 {
        let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (a, b) = (inc.predict(&q), batch.predict(&q));
        assert!((a.0 - b.0).abs() < 1e-8 && (a.1 - b.1).abs() < 1e-8);
    }
    assert!((inc.log_marginal_likelihood() - batch.log_marginal_likelihood()).abs() < 1e-8);
}

#[test]
fn fifo_eviction_keeps_the_newest_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let h = random_hyper(&mut rng, 2);
    let (x, y) = random_data(&mut rng, 130, 2, 2.0);
    let full = GpModel::condition(&x, &y, h.clone()).unwrap();
    let kept = full.budget_evict(100, EvictionPolicy::Fifo);
    assert_eq!(kept.len(), 100);
    assert_eq!(full.len(), 130);
    let tail = GpModel::condition(
        &x.rows(30, 100).into_owned(),
        &y.rows(30, 100).into_owned(),
        h,
    )
    .unwrap();
    for _ in 0..20 {
        let q: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        assert!((kept.predict(&q).0 - tail.predict(&q).0).abs() < 1e-8);
        assert!((kept.predict(&q).1 - tail.predict(&q).1).abs() < 1e-8);
    }
}

#[test]
fn loo_eviction_matches_dense_leave_one_out() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let h = random_hyper(&mut rng, 2);
    let (x, y) = random_data(&mut rng, 40, 2, 2.0);
    let mut m = GpModel::empty(h.clone()).unwrap();
    for i in 0..40 {
        m.push(&[x[(i, 0)], x[(i, 1)]], y[i]).unwrap();
        if m.len() > 25 {
            m.evict_to_budget(25, EvictionPolicy::LeaveOneOut);
        }
    }
    assert_eq!(m.len(), 25);
    // Cached diag(K⁻¹) still agrees with a dense inverse after many updates.
    let kinv = dense_gram(&m.inputs(), &h).try_inverse().unwrap();
    let loo = m.loo_residuals();
    let alpha = &kinv * m.targets();
    for i in 0..25 {
        assert!((loo[i] - alpha[i] / kinv[(i, i)]).abs() < 1e-8 * (1.0 + loo[i].abs()));
    }
    // Surviving model equals a batch fit on the surviving points.
    let batch = GpModel::condition(&m.inputs(), &m.targets(), h).unwrap();
    assert!((batch.alpha() - m.alpha()).amax() < 1e-8);
}

#[test]
fn removal_from_the_middle_matches_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let h = random_hyper(&mut rng, 3);
    let (x, y) = random_data(&mut rng, 30, 3, 2.0);
    let mut m = GpModel::condition(&x, &y, h.clone()).unwrap();
    m.remove(17);
    let keep: Vec<usize> = (0..30).filter(|&i| i != 17).collect();
    let xb = DMatrix::from_fn(29, 3, |i, j| x[(keep[i], j)]);
    let yb = DVector::from_fn(29, |i, _| y[keep[i]]);
    let batch = GpModel::condition(&xb, &yb, h).unwrap();
    assert!((batch.gram_factor() - m.gram_factor()).amax() < 1e-10);
}

#[test]
fn variance_bounds_before_clamping() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let h = random_hyper(&mut rng, 3);
        let (x, y) = random_data(&mut rng, 40, 3, 1.0);
        let m = GpModel::condition(&x, &y, h.clone()).unwrap();
        for i in 0..40 {
            let (_, v, _) = m.predict_unclamped(m.input(i));
            assert!(v > -1e-8 && v < h.sigma_f.powi(2) + 1e-8);
        }
    }
}

#[test]
fn lml_matches_dense_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let h = random_hyper(&mut rng, 2);
    let (x, y) = random_data(&mut rng, 50, 2, 2.0);
    let m = GpModel::condition(&x, &y, h.clone()).unwrap();
    let k = dense_gram(&x, &h);
    let logdet = k.clone().lu().determinant().ln();
    let expect = -0.5 * y.dot(&k.lu().solve(&y).unwrap())
        - 0.5 * logdet
        - 25.0 * (2.0 * std::f64::consts::PI).ln();
    assert!((m.log_marginal_likelihood() - expect).abs() < 1e-9);
    let (lml, _) = lml_with_gradient(&x, &y, &h).unwrap();
    assert!((lml - expect).abs() < 1e-9);
}

#[test]
fn lml_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let h = random_hyper(&mut rng, 3);
    let (x, y) = random_data(&mut rng, 40, 3, 2.0);
    let (_, g) = lml_with_gradient(&x, &y, &h).unwrap();
    let p0 = h.to_log();
    let fd = DVector::from_fn(p0.len(), |i, _| {
        let mut a = p0.clone();
        let mut b = p0.clone();
        a[i] += 1e-6;
        b[i] -= 1e-6;
        let la = lml_with_gradient(&x, &y, &Hyperparameters::from_log(&a)).unwrap().0;
        let lb = lml_with_gradient(&x, &y, &Hyperparameters::from_log(&b)).unwrap().0;
        (la - lb) / 2e-6
    });
    assert!((&g - &fd).norm() / fd.norm() < 1e-4, "{g} vs {fd}");
}

/// Draw targets from the GP prior with known hyperparameters.
fn sample_prior(rng: &mut ChaCha8Rng, h: &Hyperparameters, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let x = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(0.0..10.0));
    let l = dense_gram(&x, h).cholesky().unwrap().unpack();
    let w = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (x, l * w)
}

#[test]
fn optimiser_improves_and_recovers_known_hyperparameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let truth = Hyperparameters::new(2.0, vec![0.5], 0.1).unwrap();
    let (x, y) = sample_prior(&mut rng, &truth, 200);
    let init = Hyperparameters::new(1.0, vec![1.5], 0.5).unwrap();
    let res = optimize_hyperparameters(&x, &y, &init, &OptimizerConfig::default()).unwrap();
    assert!(res.converged);
    assert!(res.lml >= res.initial_lml);
    let within = |a: f64, b: f64| a / b < 2.0 && b / a < 2.0;
    assert!(within(res.hyper.sigma_f, 2.0), "{:?}", res.hyper);
    assert!(within(res.hyper.lengthscales[0], 0.5), "{:?}", res.hyper);
    assert!(within(res.hyper.sigma_on, 0.1), "{:?}", res.hyper);
}

#[test]
fn optimiser_needs_two_points() {
    let h = Hyperparameters::isotropic(1.0, 1.0, 1, 0.1).unwrap();
    let x = DMatrix::from_element(1, 1, 0.0);
    let y = DVector::from_element(1, 1.0);
    assert!(optimize_hyperparameters(&x, &y, &h, &OptimizerConfig::default()).is_err());
}

#[test]
fn multi_output_reduces_to_single_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let h = random_hyper(&mut rng, 3);
    let (x, y) = random_data(&mut rng, 30, 3, 2.0);
    let single = GpModel::condition(&x, &y, h.clone()).unwrap();
    let multi = MultiGp::condition(
        &x,
        &DMatrix::from_columns(&[y.clone()]),
        vec![h],
        None,
        EvictionPolicy::Fifo,
    )
    .unwrap();
    let q = [0.1, -0.4, 0.9];
    let (mu, var) = multi.predict(&q);
    assert_eq!((mu[0], var[0]), single.predict(&q));
    let p = ResidualModel::predict(&multi, &DVector::from_column_slice(&q));
    assert!((p.mean[0] - mu[0]).abs() < 1e-14);
    assert!((p.variance[0] - var[0]).abs() < 1e-14);
    assert_eq!(multi.mean_jacobian(&q).row(0).transpose(), single.mean_jacobian(&q));
}

#[test]
fn multi_outputs_are_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let (x, y) = random_data(&mut rng, 30, 6, 1.0);
    let hs = vec![random_hyper(&mut rng, 6), random_hyper(&mut rng, 6)];
    let t1 = DMatrix::from_columns(&[y.clone(), y.map(|v| 2.0 * v)]);
    let t2 = DMatrix::from_columns(&[y.clone(), y.map(|v| -v + 0.5)]);
    let a = MultiGp::condition(&x, &t1, hs.clone(), None, EvictionPolicy::Fifo).unwrap();
    let b = MultiGp::condition(&x, &t2, hs.clone(), None, EvictionPolicy::Fifo).unwrap();
    let q = [0.2; 6];
    assert_eq!(a.predict(&q).0[0], b.predict(&q).0[0]);
    assert_ne!(a.predict(&q).0[1], b.predict(&q).0[1]);
    // Loop oracle.
    for (j, h) in hs.into_iter().enumerate() {
        let m = GpModel::condition(&x, &t1.column(j).into_owned(), h).unwrap();
        assert_eq!(a.predict(&q).0[j], m.predict(&q).0);
    }
}

#[test]
fn multi_budget_is_enforced() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let hs = vec![random_hyper(&mut rng, 3), random_hyper(&mut rng, 3)];
    for policy in [EvictionPolicy::Fifo, EvictionPolicy::LeaveOneOut] {
        let mut m = MultiGp::new(hs.clone(), Some(100), policy).unwrap();
        for _ in 0..150 {
            let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            m.push(&z, &[z[0].sin(), z[1] * z[2]]).unwrap();
        }
        assert_eq!(m.len(), 100);
        assert_eq!(m.models()[1].len(), 100);
        assert_eq!(m.models()[0].inputs(), m.models()[1].inputs());
    }
}

#[test]
fn no_residual_is_zero() {
    let r = NoResidual { joints: 2 };
    let p = r.predict(&DVector::from_element(6, 1.0));
    assert_eq!(p, ResidualPrediction::zeros(2, 6));
}

#[test]
fn dataset_csv_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut set = TrainingSet::new(1);
    for i in 0..5 {
        let t = i as f64 * 0.01;
        set.push(t, DVector::from_column_slice(&[t, 0.1 / 3.0, -t]), DVector::from_element(1, t * t));
    }
    let path = dir.path().join("train.csv");
    set.write_csv(&path).unwrap();
    assert_eq!(TrainingSet::read_csv(&path).unwrap(), set);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t,z1,z2,z3,y1\n0,1,2,3,4\n0.01,1,2\n").unwrap();
    match TrainingSet::read_csv(&bad) {
        Err(crate::Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
}

proptest! {
    #[test]
    fn prop_variance_within_prior(seed in 0u64..1000, qx in -5.0f64..5.0, qy in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hyper(&mut rng, 2);
        let (x, y) = random_data(&mut rng, 15, 2, 2.0);
        let m = GpModel::condition(&x, &y, h.clone()).unwrap();
        let (_, v) = m.predict(&[qx, qy]);
        prop_assert!(v >= 0.0 && v <= h.sigma_f.powi(2));
    }

    #[test]
    fn prop_kernel_bounded_and_symmetric(a in prop::collection::vec(-3.0f64..3.0, 3),
                                         b in prop::collection::vec(-3.0f64..3.0, 3)) {
        let h = Hyperparameters::new(1.3, vec![0.5, 1.0, 2.0], 0.1).unwrap();
        let k = se_kernel(&h, &a, &b);
        prop_assert!(k > 0.0 && k <= 1.69 + 1e-15);
        prop_assert_eq!(k, se_kernel(&h, &b, &a));
    }
}
