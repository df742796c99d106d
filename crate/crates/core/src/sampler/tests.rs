use super::*;
use crate::csvd::column_cosines;
use crate::linalg::orthonormality_error;
use crate::model::ColumnUpdate;
use crate::stiefel::generate_structured_orthonormal;
use rand_distr::StandardNormal;

fn grid(n: usize, lo: f64, hi: f64) -> CoordinateSet {
    CoordinateSet::equally_spaced(lo, hi, n).unwrap()
}

fn low_rank_data(n: usize, m: usize, d: &[f64], noise: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = d.len();
    let u = generate_structured_orthonormal(n, k, &vec![DMatrix::identity(n, n); k], &mut rng).unwrap();
    let v = generate_structured_orthonormal(m, k, &vec![DMatrix::identity(m, m); k], &mut rng).unwrap();
    let mut ud = u.clone();
    for j in 0..k {
        ud.column_mut(j).scale_mut(d[j]);
    }
    ud * v.transpose() + DMatrix::from_fn(n, m, |_, _| noise * rng.sample::<f64, _>(StandardNormal))
}

fn matern_config(k: usize, iters: usize, burn: usize) -> SvdModelConfig {
    SvdModelConfig::new(k, iters, burn)
        .with_kernels(KernelSpec::Matern { nu: 3.5, rho: 1.0 }, KernelSpec::Matern { nu: 3.5, rho: 1.0 })
}

#[test]
fn chain_length_and_thinning() {
    let z = low_rank_data(8, 7, &[5.0, 3.0], 0.3, 1);
    let mut cfg = matern_config(2, 10, 5);
    let chain = run_mcmc(&z, &grid(8, -5.0, 5.0), &grid(7, 0.0, 10.0), &cfg, None).unwrap();
    assert_eq!(chain.len(), 5);
    assert_eq!(chain.iterations, vec![5, 6, 7, 8, 9]);
    cfg.n_iterations = 25;
    cfg.thin = 4;
    let chain = run_mcmc(&z, &grid(8, -5.0, 5.0), &grid(7, 0.0, 10.0), &cfg, None).unwrap();
    assert_eq!(chain.len(), 5);
    assert_eq!(chain.iterations, vec![8, 12, 16, 20, 24]);
}

#[test]
fn fixed_seed_is_bit_reproducible() {
    let z = low_rank_data(10, 9, &[6.0, 2.0], 0.5, 2);
    let mut cfg = matern_config(2, 60, 20);
    cfg.seed = 77;
    let a = run_mcmc(&z, &grid(10, -5.0, 5.0), &grid(9, 0.0, 10.0), &cfg, None).unwrap();
    let b = run_mcmc(&z, &grid(10, -5.0, 5.0), &grid(9, 0.0, 10.0), &cfg, None).unwrap();
    assert_eq!(a, b);
    cfg.seed = 78;
    let c = run_mcmc(&z, &grid(10, -5.0, 5.0), &grid(9, 0.0, 10.0), &cfg, None).unwrap();
    assert_ne!(a.states, c.states);
}

#[test]
fn every_iteration_keeps_orthonormality_and_positivity() {
    let z = low_rank_data(15, 12, &[8.0, 5.0, 2.0], 0.5, 3);
    for grouped in [false, true] {
        let mut cfg = matern_config(3, 150, 50);
        cfg.grouped_rho = grouped;
        let mut s = Sampler::new(&z, &grid(15, -5.0, 5.0), &grid(12, 0.0, 10.0), None, &cfg).unwrap();
        for _ in 0..150 {
            s.step().unwrap();
            let st = s.state();
            assert!(orthonormality_error(&st.u) < 1e-8);
            assert!(orthonormality_error(&st.v) < 1e-8);
            assert!(st.d.iter().all(|&v| v > 0.0));
            assert!(st.sigma2 > 0.0);
            assert!(st.sigma2_u.iter().chain(&st.sigma2_v).all(|&v| v > 0.0));
            assert!(st.rho_u.iter().all(|&r| r > 0.0 && r <= 5.0));
            assert!(st.rho_v.iter().all(|&r| r > 0.0 && r <= 5.0));
            assert_eq!(st.rho_u.len(), if grouped { 1 } else { 3 });
        }
        // cached residual agrees with a fresh computation
        let fresh = &s.z - &s.mean - s.state.signal();
        assert!((fresh - &s.resid).amax() < 1e-9);
    }
}

#[test]
fn identity_kernel_skips_length_scales() {
    let z = low_rank_data(6, 5, &[4.0], 0.2, 4);
    let cfg = SvdModelConfig::new(1, 20, 10).with_kernels(KernelSpec::Identity, KernelSpec::Identity);
    let chain = run_mcmc(&z, &grid(6, 0.0, 1.0), &grid(5, 0.0, 1.0), &cfg, None).unwrap();
    assert!(chain.states.iter().all(|s| s.rho_u.is_empty() && s.rho_v.is_empty()));
    assert!(!chain.acceptance.iter().any(|a| a.parameter.starts_with("rho")));
}

#[test]
fn rank_check_and_dimension_errors() {
    let z = low_rank_data(4, 3, &[1.0], 0.1, 5);
    let cfg = matern_config(4, 10, 5);
    assert!(matches!(
        run_mcmc(&z, &grid(4, 0.0, 1.0), &grid(3, 0.0, 1.0), &cfg, None),
        Err(Error::Input(_))
    ));
    let cfg = matern_config(1, 10, 5);
    assert!(run_mcmc(&z, &grid(5, 0.0, 1.0), &grid(3, 0.0, 1.0), &cfg, None).is_err());
}

#[test]
fn d_stationary_distribution_matches_quadrature() {
    // n = 5, m = 4, k = 1 with everything but d held fixed.
    let z = low_rank_data(5, 4, &[3.0], 0.6, 6);
    let mut cfg = SvdModelConfig::new(1, 10, 5).with_kernels(KernelSpec::Identity, KernelSpec::Identity);
    cfg.fixed_noise_variance = Some(0.5);
    cfg.fixed_basis_variance = Some(2.0);
    let mut s = Sampler::new(&z, &grid(5, 0.0, 1.0), &grid(4, 0.0, 1.0), None, &cfg).unwrap();
    let (u, v) = (s.state.u.column(0).into_owned(), s.state.v.column(0).into_owned());
    let c = u.dot(&(&z * &v));
    // log target: (d c - d²/2)/σ² - d² (1/2 + 1/2)/2 + (5 + 4 - 2) ln d
    let log_target = |d: f64| (d * c - 0.5 * d * d) / 0.5 - 0.5 * d * d + 7.0 * d.ln();
    let h = 1e-4;
    let (mut num, mut den) = (0.0, 0.0);
    let peak = (1..200_000).map(|j| log_target(j as f64 * h)).fold(f64::MIN, f64::max);
    for j in 1..200_000 {
        let d = j as f64 * h;
        let w = (log_target(d) - peak).exp();
        num += d * w;
        den += w;
    }
    let exact_mean = num / den;

    let draws = 60_000;
    let mut samples = Vec::with_capacity(draws);
    for it in 0..(draws + 2000) {
        s.refresh_residual();
        s.update_d().unwrap();
        if it >= 2000 {
            samples.push(s.state.d[0]);
        }
    }
    let mean = samples.iter().sum::<f64>() / draws as f64;
    // batch-means standard error
    let batch = 500;
    let bm: Vec<f64> = samples.chunks(batch).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let bmean = bm.iter().sum::<f64>() / bm.len() as f64;
    let se = (bm.iter().map(|x| (x - bmean).powi(2)).sum::<f64>() / (bm.len() as f64 - 1.0) / bm.len() as f64).sqrt();
    assert!((mean - exact_mean).abs() < 4.0 * se, "{mean} vs {exact_mean} (se {se})");
}

#[test]
fn d_acceptance_is_tuned_into_band() {
    let z = low_rank_data(8, 6, &[3.0], 0.0, 7);
    let mut cfg = SvdModelConfig::new(1, 4000, 2000).with_kernels(KernelSpec::Identity, KernelSpec::Identity);
    cfg.fixed_noise_variance = Some(25.0);
    cfg.fixed_basis_variance = Some(100.0);
    let mut s = Sampler::new(&z, &grid(8, 0.0, 1.0), &grid(6, 0.0, 1.0), None, &cfg).unwrap();
    // start an order of magnitude too wide
    s.d_tuners[0].proposal_sd = 20.0;
    for it in 0..4000 {
        if it == 2000 {
            s.d_tuners[0].freeze();
        }
        s.refresh_residual();
        s.update_d().unwrap();
    }
    let (acc, att) = s.d_tuners[0].counts();
    let rate = acc as f64 / att as f64;
    assert!((0.25..=0.45).contains(&rate), "rate {rate}");
}

#[test]
fn noise_variance_wiring() {
    // zero residual, nm = 4, ξ = 1: given a, σ² ~ IG(2.5, ξ/a), so ξ/(a σ²) ~ Gamma(2.5, 1).
    let z = low_rank_data(2, 2, &[1.0], 0.0, 8);
    let mut cfg = SvdModelConfig::new(1, 10, 5).with_kernels(KernelSpec::Identity, KernelSpec::Identity);
    cfg.halft_a = 1e5;
    let mut s = Sampler::new(&z, &grid(2, 0.0, 1.0), &grid(2, 0.0, 1.0), None, &cfg).unwrap();
    s.resid = DMatrix::zeros(2, 2);
    let n = 50_000;
    let (mut g_sum, mut g_sq, mut a_sum) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        // with zero residual the chain itself drifts to 0; check one draw at a time
        s.state.sigma2 = 1.0;
        let prev = s.state.sigma2;
        s.update_noise_variance();
        let a = s.state.aux_a;
        // a ~ IG(1, 1/A² + 1/σ²_prev) so a / rate ~ IG(1, 1): use 1/a * rate ~ Exp(1)
        a_sum += (1e-10 + 1.0 / prev) / a;
        let g = 1.0 / (a * s.state.sigma2);
        g_sum += g;
        g_sq += g * g;
    }
    let g_mean = g_sum / n as f64;
    let g_sd = (g_sq / n as f64 - g_mean * g_mean).sqrt();
    assert!((g_mean - 2.5).abs() < 3.0 * g_sd / (n as f64).sqrt(), "{g_mean}");
    assert!((a_sum / n as f64 - 1.0).abs() < 3.0 / (n as f64).sqrt());
}

#[test]
fn auxiliary_rate_at_unit_sigma() {
    let cfg = SvdModelConfig::new(1, 10, 5);
    let rate = 1.0 / (cfg.halft_a * cfg.halft_a) + cfg.halft_xi / 1.0;
    assert!((rate - (1.0 + 1e-10)).abs() < 1e-15);
}

#[test]
fn rho_update_matches_grid_posterior() {
    let n = 12;
    let coords = grid(n, 0.0, 6.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let truth = KernelSpec::Matern { nu: 3.5, rho: 1.0 };
    let u = crate::stiefel::generate_basis(&coords, &[truth], &mut rng).unwrap().columns;
    let v = DMatrix::from_element(3, 1, 1.0 / 3f64.sqrt());
    let z = &u * v.transpose() * 4.0;
    let mut cfg = matern_config(1, 10, 5);
    cfg.fixed_basis_variance = Some(1.0);
    let mut s = Sampler::new(&z, &coords, &grid(3, 0.0, 1.0), None, &cfg).unwrap();
    s.state.u = u.clone();
    s.state.d = vec![4.0];
    let upper = s.u_side.rho_upper;

    let target = |rho: f64| {
        let f = CorrelationFactor::new(&truth.with_rho(rho), &s.u_side.dist).unwrap();
        let st = column_prior_stats(&f, &u, 0).unwrap();
        column_log_prior(4.0, 1.0, n, st)
    };
    let m = 3000;
    let vals: Vec<(f64, f64)> = (1..m).map(|j| (j as f64 * upper / m as f64, 0.0)).map(|(r, _)| (r, target(r))).collect();
    let peak = vals.iter().map(|v| v.1).fold(f64::MIN, f64::max);
    let (num, den) = vals.iter().fold((0.0, 0.0), |(a, b), &(r, lp)| {
        let w = (lp - peak).exp();
        (a + r * w, b + w)
    });
    let exact = num / den;

    let mut draws = Vec::new();
    for it in 0..30_000 {
        if it == 3000 {
            s.u_side.rho_tuners[0].freeze();
        }
        s.update_rho(Side::U).unwrap();
        if it >= 3000 {
            draws.push(s.state.rho_u[0]);
        }
    }
    assert!(draws.iter().all(|&r| r > 0.0 && r <= upper));
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let bm: Vec<f64> = draws.chunks(500).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let bmean = bm.iter().sum::<f64>() / bm.len() as f64;
    let se = (bm.iter().map(|x| (x - bmean).powi(2)).sum::<f64>() / (bm.len() as f64 - 1.0) / bm.len() as f64).sqrt();
    assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn beta_matches_conjugate_posterior() {
    let (n, m) = (5, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = DMatrix::from_fn(n * m, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let z = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal)) + DMatrix::from_element(n, m, 1.5);
    let mut cfg = SvdModelConfig::new(1, 10, 5).with_kernels(KernelSpec::Identity, KernelSpec::Identity);
    cfg.beta_prior_sd = 3.0;
    let mut s = Sampler::new(&z, &grid(n, 0.0, 1.0), &grid(m, 0.0, 1.0), Some(&x), &cfg).unwrap();
    s.state.sigma2 = 0.8;
    // independent dense route
    let y = &z - s.state.signal();
    let q = x.transpose() * &x / 0.8 + DMatrix::identity(2, 2) / 9.0;
    let cov = q.clone().try_inverse().unwrap();
    let mean = &cov * x.transpose() * DVector::from_column_slice(y.as_slice()) / 0.8;
    let draws = 40_000;
    let mut acc = DVector::zeros(2);
    let mut acc2 = DMatrix::zeros(2, 2);
    for _ in 0..draws {
        s.update_beta().unwrap();
        let b = DVector::from_vec(s.state.beta.clone());
        acc += &b;
        acc2 += &b * b.transpose();
    }
    let emp = &acc / draws as f64;
    let emp_cov = acc2 / draws as f64 - &emp * emp.transpose();
    for j in 0..2 {
        let se = (cov[(j, j)] / draws as f64).sqrt();
        assert!((emp[j] - mean[j]).abs() < 4.0 * se);
        assert!((emp_cov[(j, j)] / cov[(j, j)] - 1.0).abs() < 0.05);
    }
}

#[test]
fn intercept_only_beta_tends_to_sample_mean() {
    let (n, m) = (6, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let z = DMatrix::from_fn(n, m, |_, _| 2.0 + rng.sample::<f64, _>(StandardNormal));
    let x = DMatrix::from_element(n * m, 1, 1.0);
    let mut cfg = SvdModelConfig::new(1, 10, 5).with_kernels(KernelSpec::Identity, KernelSpec::Identity);
    cfg.beta_prior_sd = 1e6;
    let mut s = Sampler::new(&z, &grid(n, 0.0, 1.0), &grid(m, 0.0, 1.0), Some(&x), &cfg).unwrap();
    s.state.d = vec![1e-12];
    s.state.sigma2 = 1.0;
    let draws = 20_000;
    let mean = (0..draws)
        .map(|_| {
            s.update_beta().unwrap();
            s.state.beta[0]
        })
        .sum::<f64>()
        / draws as f64;
    let sample_mean = z.mean();
    let se = (1.0 / (n * m) as f64 / draws as f64).sqrt();
    assert!((mean - sample_mean).abs() < 4.0 * se);
}

#[test]
fn identity_kernels_recover_csvd_directions() {
    let z = low_rank_data(20, 15, &[20.0, 12.0], 0.05, 12);
    let mut cfg = SvdModelConfig::new(2, 600, 200).with_kernels(KernelSpec::Identity, KernelSpec::Identity);
    cfg.fixed_noise_variance = Some(0.0025);
    let chain = run_mcmc(&z, &grid(20, 0.0, 1.0), &grid(15, 0.0, 1.0), &cfg, None).unwrap();
    let (mu, mv) = chain.basis_means().unwrap();
    let svd = classical_svd(&z, 2).unwrap();
    for c in column_cosines(&mu, &svd.u).into_iter().chain(column_cosines(&mv, &svd.v)) {
        assert!(c > 0.99, "{c}");
    }
}

#[test]
fn conditional_mean_direction_in_small_noise_limit() {
    // k = 1, Ω = I: as σ² → 0 the column conditional concentrates on E v / d.
    let z = low_rank_data(6, 5, &[3.0], 0.4, 13);
    let mut cfg = SvdModelConfig::new(1, 10, 5).with_kernels(KernelSpec::Identity, KernelSpec::Identity);
    cfg.fixed_noise_variance = Some(1e-8);
    cfg.align_signs = false;
    let mut s = Sampler::new(&z, &grid(6, 0.0, 1.0), &grid(5, 0.0, 1.0), None, &cfg).unwrap();
    let v = s.state.v.column(0).into_owned();
    let target = (&z * &v).normalize();
    for _ in 0..20 {
        s.refresh_residual();
        s.update_column(Side::U, 0).unwrap();
        assert!((s.state.u.column(0).dot(&target) - 1.0).abs() < 1e-6);
        assert!((s.state.u.column(0).norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn normalized_column_mode_runs() {
    let z = low_rank_data(7, 6, &[4.0], 0.3, 14);
    let mut cfg = matern_config(1, 30, 10);
    cfg.column_update = ColumnUpdate::Normalized;
    let chain = run_mcmc(&z, &grid(7, 0.0, 1.0), &grid(6, 0.0, 1.0), &cfg, None).unwrap();
    let u_rate = chain.acceptance.iter().find(|a| a.parameter == "u[0]").unwrap();
    assert_eq!(u_rate.accepted, u_rate.attempted);
}

#[test]
fn rotation_moves_keep_d_ordered_and_are_reported() {
    let z = low_rank_data(12, 10, &[6.0, 5.5, 2.0], 0.5, 15);
    let mut cfg = matern_config(3, 400, 200);
    cfg.rotation_moves = true;
    let mut s = Sampler::new(&z, &grid(12, -5.0, 5.0), &grid(10, 0.0, 10.0), None, &cfg).unwrap();
    for _ in 0..400 {
        s.step().unwrap();
        assert!(s.state().d.windows(2).all(|w| w[0] >= w[1]));
        assert!(orthonormality_error(&s.state().u) < 1e-8);
        assert!(orthonormality_error(&s.state().v) < 1e-8);
    }
    let rates = s.acceptance();
    let names: Vec<&str> = rates.iter().map(|a| a.parameter.as_str()).filter(|p| p.starts_with("rotation")).collect();
    assert_eq!(names, ["rotation[0,1]", "rotation[0,2]", "rotation[1,2]"]);
    assert!(rates.iter().filter(|a| a.parameter.starts_with("rotation")).all(|a| a.attempted == 200));

    let mut off = cfg.clone();
    off.rotation_moves = false;
    let chain = run_mcmc(&z, &grid(12, -5.0, 5.0), &grid(10, 0.0, 10.0), &off, None).unwrap();
    assert!(chain.acceptance.iter().filter(|a| a.parameter.starts_with("rotation")).all(|a| a.attempted == 0));
}

#[test]
fn unordered_start_state_is_rejected_with_rotations() {
    let z = low_rank_data(6, 5, &[3.0, 2.0], 0.2, 16);
    let mut cfg = matern_config(2, 10, 5);
    let s = Sampler::new(&z, &grid(6, 0.0, 1.0), &grid(5, 0.0, 1.0), None, &cfg).unwrap();
    let mut state = s.state().clone();
    state.d.swap(0, 1);
    assert!(Sampler::from_state(&z, &grid(6, 0.0, 1.0), &grid(5, 0.0, 1.0), None, &cfg, state.clone()).is_ok());
    cfg.rotation_moves = true;
    assert!(Sampler::from_state(&z, &grid(6, 0.0, 1.0), &grid(5, 0.0, 1.0), None, &cfg, state).is_err());
}
