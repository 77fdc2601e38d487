use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::oracle;

fn iv(lo: f64, up: f64) -> TruncationInterval {
    TruncationInterval::new(lo, up).unwrap()
}

fn rows_of(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn intervals_of(model: &TggmModel) -> Vec<TruncationInterval> {
    (0..model.n_hidden()).map(|j| model.trug.interval(j)).collect()
}

/// Small model with nonzero everything and per-unit bounded intervals.
fn small_tggm(p: usize, m: usize, q: usize, seed: u64) -> TggmModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trug = TrugParams::per_unit(
        (0..m)
            .map(|j| if j % 2 == 0 { iv(0.0, 1.0) } else { iv(-1.0, 2.0) })
            .collect(),
    )
    .with_trainable(true, true);
    let mut model = TggmModel::init(p, m, q, trug, &mut rng).unwrap();
    for v in model.b0.iter_mut().chain(model.b1.iter_mut()) {
        *v = rng.random::<f64>() - 0.5;
    }
    model.w0.scale(8.0);
    model.w1.scale(8.0);
    model.sigma2 = 0.5;
    model.validate().unwrap();
    model
}

fn quad_log_lik(model: &TggmModel, x: &[f64], y: &[f64]) -> f64 {
    oracle::tggm_log_lik_quadrature(
        &rows_of(&model.w0),
        &model.b0,
        &rows_of(&model.w1),
        &model.b1,
        model.sigma2,
        &intervals_of(model),
        x,
        y,
    )
}

#[test]
fn predict_is_bias_when_output_weights_vanish() {
    let mut model = small_tggm(2, 3, 2, 3);
    model.w1.scale(0.0);
    let out = model.predict(&[0.7, -1.3]);
    assert_eq!(out, model.b1);
}

/// With interval (0, inf), tiny noise and strongly positive activations,
/// the hidden means approach the activations themselves: the rectified
/// linear regime.
#[test]
fn predict_relu_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trug = TrugParams::shared(iv(0.0, f64::INFINITY), 2);
    let mut model = TggmModel::init(2, 2, 1, trug, &mut rng).unwrap();
    model.w0 = Mat::from_rows(vec![vec![2.0, 1.0], vec![0.5, 1.5]]);
    model.b0 = vec![1.0, 2.0];
    model.w1 = Mat::from_rows(vec![vec![0.8, -0.6]]);
    model.b1 = vec![0.3];
    model.sigma2 = 1e-6;
    let x = vec![1.0, 2.0];
    let act = {
        let mut a = model.w0.matvec(&x);
        mat::add_vec(&mut a, &model.b0);
        a
    };
    let expected = model.w1.matvec(&act)[0] + model.b1[0];
    let got = model.predict(&x)[0];
    assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
}

/// predict equals W1 E[h|x] + b1 with the hidden means checked against
/// quadrature of the free truncated normals.
#[test]
fn predict_matches_quadrature_means() {
    let model = small_tggm(1, 2, 1, 7);
    let x = vec![0.4];
    let means: Vec<f64> = model
        .prior_hidden(&x)
        .iter()
        .map(|(base, ivl)| oracle::moments_by_quadrature(base, ivl).0)
        .collect();
    let expected = model.w1.matvec(&means)[0] + model.b1[0];
    let got = model.predict(&x)[0];
    assert!(
        ((got - expected) / expected.abs().max(1e-12)).abs() < 1e-6,
        "{got} vs {expected}"
    );
}

/// With W1 = 0 the posterior decouples from y and equals the free
/// conditional exactly.
#[test]
fn mean_field_decouples_without_output_weights() {
    let mut model = small_tggm(2, 4, 2, 11);
    model.w1.scale(0.0);
    let x = vec![0.3, -0.8];
    let y = vec![1.0, -2.0];
    let state = model.mean_field_posterior(&x, &y, 3).unwrap();
    for (j, (base, ivl)) in model.prior_hidden(&x).iter().enumerate() {
        assert!((state.q_mean[j] - truncnorm::trunc_mean(base, ivl)).abs() < 1e-14);
        assert!((state.q_var[j] - truncnorm::trunc_var(base, ivl)).abs() < 1e-14);
        let i = model.trug.interval(j);
        assert!(i.contains(state.q_mean[j]));
    }
}

/// One hidden unit: a single sweep is exact, matching the quadrature
/// posterior moments.
#[test]
fn mean_field_exact_for_one_unit() {
    let model = small_tggm(2, 1, 2, 13);
    let x = vec![0.5, -0.2];
    let y = vec![0.8, -0.1];
    let state = model.mean_field_posterior(&x, &y, 1).unwrap();
    let oracle_moments = oracle::tggm_posterior_moments_quadrature(
        &rows_of(&model.w0),
        &model.b0,
        &rows_of(&model.w1),
        &model.b1,
        model.sigma2,
        &intervals_of(&model),
        &x,
        &y,
    );
    assert!((state.q_mean[0] - oracle_moments[0].0).abs() < 1e-8);
    assert!((state.q_var[0] - oracle_moments[0].1).abs() < 1e-8);
}

/// Orthogonal output columns make the clamped posterior factorize, so
/// mean field recovers the exact marginals.
#[test]
fn mean_field_exact_for_orthogonal_columns() {
    let mut model = small_tggm(1, 2, 2, 17);
    model.w1 = Mat::from_rows(vec![vec![1.4, 0.0], vec![0.0, -0.9]]);
    let x = vec![0.6];
    let y = vec![1.2, 0.4];
    let state = model.mean_field_posterior(&x, &y, 10).unwrap();
    let oracle_moments = oracle::tggm_posterior_moments_quadrature(
        &rows_of(&model.w0),
        &model.b0,
        &rows_of(&model.w1),
        &model.b1,
        model.sigma2,
        &intervals_of(&model),
        &x,
        &y,
    );
    for j in 0..2 {
        assert!(
            (state.q_mean[j] - oracle_moments[j].0).abs() < 1e-6,
            "unit {j} mean"
        );
        assert!(
            (state.q_var[j] - oracle_moments[j].1).abs() < 1e-6,
            "unit {j} var"
        );
    }
}

/// Mean field is a fixed-point iteration: an extra sweep from a converged
/// state moves the means by less than 1e-12.
#[test]
fn mean_field_fixed_point() {
    let model = small_tggm(2, 3, 2, 19);
    let x = vec![0.2, 0.9];
    let y = vec![-0.5, 1.1];
    let state = model.mean_field_posterior(&x, &y, 60).unwrap();
    let again = model.mean_field_continue(&x, &y, &state, 1);
    for j in 0..3 {
        assert!(
            (state.q_mean[j] - again.q_mean[j]).abs() < 1e-12,
            "unit {j} moved"
        );
    }
    assert_eq!(again.cycles_run, 61);
}

/// One hidden unit: every analytic gradient component matches central
/// finite differences of the quadrature log-likelihood.
#[test]
fn grads_match_finite_difference() {
    let model = small_tggm(2, 1, 2, 23);
    let x = vec![0.5, -0.2];
    let y = vec![0.8, -0.1];
    let xb = vec![x.clone()];
    let yb = vec![y.clone()];
    let (g, tg) = model.ml_grads(&xb, &yb, 30).unwrap();

    let step = 1e-5;
    let check = |name: &str, analytic: f64, fd: f64, tol: f64| {
        let scale = analytic.abs().max(fd.abs()).max(1e-6);
        assert!(
            (analytic - fd).abs() / scale < tol,
            "{name}: analytic {analytic} vs fd {fd}"
        );
    };
    let fd = |mp: TggmModel, mm: TggmModel| {
        (quad_log_lik(&mp, &x, &y) - quad_log_lik(&mm, &x, &y)) / (2.0 * step)
    };

    for k in 0..2 {
        let (mut mp, mut mm) = (model.clone(), model.clone());
        *mp.w0.at_mut(0, k) += step;
        *mm.w0.at_mut(0, k) -= step;
        check("w0", g.dw0.at(0, k), fd(mp, mm), 1e-4);
        let (mut mp, mut mm) = (model.clone(), model.clone());
        *mp.w1.at_mut(k, 0) += step;
        *mm.w1.at_mut(k, 0) -= step;
        check("w1", g.dw1.at(k, 0), fd(mp, mm), 1e-4);
        let (mut mp, mut mm) = (model.clone(), model.clone());
        mp.b1[k] += step;
        mm.b1[k] -= step;
        check("b1", g.db1[k], fd(mp, mm), 1e-4);
    }
    let (mut mp, mut mm) = (model.clone(), model.clone());
    mp.b0[0] += step;
    mm.b0[0] -= step;
    check("b0", g.db0[0], fd(mp, mm), 1e-4);

    // Noise variance through its log.
    let (mut mp, mut mm) = (model.clone(), model.clone());
    mp.sigma2 = model.sigma2 * step.exp();
    mm.sigma2 = model.sigma2 * (-step).exp();
    check("log_sigma2", g.d_log_sigma2, fd(mp, mm), 1e-4);

    // Truncation points.
    let (mut mp, mut mm) = (model.clone(), model.clone());
    let lo = model.trug.raw_lower()[0];
    mp.trug.set_lower(0, lo + step).unwrap();
    mm.trug.set_lower(0, lo - step).unwrap();
    check("lower", tg.d_lower[0], fd(mp, mm), 1e-3);
    let (mut mp, mut mm) = (model.clone(), model.clone());
    let up = model.trug.raw_upper()[0];
    mp.trug.set_upper(0, up + step).unwrap();
    mm.trug.set_upper(0, up - step).unwrap();
    check("upper", tg.d_upper[0], fd(mp, mm), 1e-3);
}

/// Data generated by the model itself gives near-zero gradients on a
/// large batch (orthogonal output columns keep mean field exact, so the
/// only error is sampling noise).
#[test]
fn gradient_near_zero_at_generating_parameters() {
    let mut model = small_tggm(2, 2, 2, 29);
    model.w1 = Mat::from_rows(vec![vec![1.2, 0.0], vec![0.0, 0.8]]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 4000;
    let mut xb = Vec::with_capacity(n);
    let mut yb = Vec::with_capacity(n);
    for _ in 0..n {
        let x = vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
        let mut h = Vec::with_capacity(2);
        for (base, ivl) in model.prior_hidden(&x) {
            h.push(truncnorm::sample(&base, &ivl, &mut rng).unwrap());
        }
        let mut y = model.w1.matvec(&h);
        let s = model.sigma2.sqrt();
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += model.b1[i] + s * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        xb.push(x);
        yb.push(y);
    }
    let (g, tg) = model.ml_grads(&xb, &yb, 10).unwrap();
    let worst = g
        .dw0
        .data()
        .iter()
        .chain(g.dw1.data())
        .chain(&g.db0)
        .chain(&g.db1)
        .chain(std::iter::once(&g.d_log_sigma2))
        .chain(&tg.d_lower)
        .chain(&tg.d_upper)
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    assert!(worst < 0.12, "largest gradient component {worst}");
}

/// With W1 = 0 the two phases coincide, so truncation gradients vanish
/// exactly; infinite endpoints always contribute zero.
#[test]
fn trunc_grad_zero_cases() {
    let mut model = small_tggm(2, 2, 1, 31);
    model.w1.scale(0.0);
    let xb = vec![vec![0.1, -0.4], vec![0.9, 0.2]];
    let yb = vec![vec![0.5], vec![-1.0]];
    let tg = model.ml_trunc_grad(&xb, &yb, 5).unwrap();
    assert!(tg.d_lower.iter().all(|&v| v == 0.0));
    assert!(tg.d_upper.iter().all(|&v| v == 0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trug = TrugParams::per_unit(vec![iv(0.0, f64::INFINITY), iv(f64::NEG_INFINITY, 1.0)])
        .with_trainable(true, true);
    let model = TggmModel::init(2, 2, 1, trug, &mut rng).unwrap();
    let tg = model.ml_trunc_grad(&xb, &yb, 5).unwrap();
    assert_eq!(tg.d_upper[0], 0.0, "infinite upper endpoint");
    assert_eq!(tg.d_lower[1], 0.0, "infinite lower endpoint");
}

/// Noiseless data produced by the model's own deterministic forward pass
/// is predicted exactly; a constant predictor's rmse is the population
/// standard deviation of the targets.
#[test]
fn rmse_reference_points() {
    let model = small_tggm(2, 2, 1, 37);
    let xs: Vec<Vec<f64>> = (0..20)
        .map(|i| vec![(i as f64) / 10.0 - 1.0, ((3 * i % 7) as f64) / 3.0])
        .collect();
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| model.predict(x)).collect();
    assert!(model.rmse(&xs, &ys).unwrap() < 1e-12);

    let mut constant = model.clone();
    constant.w1.scale(0.0);
    let mean_y = ys.iter().map(|y| y[0]).sum::<f64>() / ys.len() as f64;
    constant.b1 = vec![mean_y];
    let expected = (ys.iter().map(|y| (y[0] - mean_y) * (y[0] - mean_y)).sum::<f64>()
        / ys.len() as f64)
        .sqrt();
    assert!((constant.rmse(&xs, &ys).unwrap() - expected).abs() < 1e-12);
}

/// Permuting hidden units together with the matching rows/columns and
/// truncation points leaves predictions unchanged.
#[test]
fn predict_invariant_to_hidden_permutation() {
    let model = small_tggm(2, 3, 2, 41);
    let perm = [2usize, 0, 1];
    let mut permuted = model.clone();
    for (new_j, &old_j) in perm.iter().enumerate() {
        for k in 0..2 {
            *permuted.w0.at_mut(new_j, k) = model.w0.at(old_j, k);
        }
        permuted.b0[new_j] = model.b0[old_j];
        for i in 0..2 {
            *permuted.w1.at_mut(i, new_j) = model.w1.at(i, old_j);
        }
        let src = model.trug.interval(old_j);
        permuted.trug.set_lower(new_j, src.lower()).unwrap();
        permuted.trug.set_upper(new_j, src.upper()).unwrap();
    }
    let x = vec![0.3, -0.7];
    let a = model.predict(&x);
    let b = permuted.predict(&x);
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-12);
    }
}
