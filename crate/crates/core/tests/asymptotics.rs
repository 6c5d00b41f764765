use otl::likelihood::{lan_remainder, log_likelihood_ratio, score_and_bracket};
use otl::model::{limit_info_matrix, local_scale, ModelParams};
use otl::montecarlo::{
    functional_probe_lemma1, functional_probe_lemma4, run_study, Functional, StudyConfig,
};
use otl::ou::simulate_observation;
use otl::estimators::estimate;
use otl::path::{channel, SamplePath};
use otl::RngSpec;

fn line() -> ModelParams {
    ModelParams::from_coeffs(&[0.0, 1.0], 1.0, 1.0, 0.0).unwrap()
}

#[test]
fn observed_information_converges_to_its_limit() {
    let th = line();
    let limit = limit_info_matrix(1, 1.0, 1.0, 1.0).unwrap();
    let reps = 100;
    let close = (0..reps)
        .filter(|&r| {
            let path = simulate_observation(&th, 2000.0, 0.01, RngSpec::new(41, r)).unwrap();
            let (_, j) = score_and_bracket(&path, &th, 2000.0, 1.0).unwrap();
            let err = (j.matrix() - limit.matrix()).abs().max();
            err < 0.1
        })
        .count();
    assert!(close as f64 >= 0.95 * reps as f64, "{close}/{reps} within 0.1");
}

#[test]
fn expansion_is_consistent_with_score_and_bracket() {
    let th = line();
    let n = 500.0;
    let h = [0.7, -0.4, 0.5];
    let path = simulate_observation(&th, n, 0.01, RngSpec::new(43, 0)).unwrap();
    let shift = local_scale(1, n).unwrap().apply(&h);
    let moved: Vec<f64> = th.theta().iter().zip(&shift).map(|(a, b)| a + b).collect();
    let log_l = log_likelihood_ratio(&path, &th.with_theta(&moved).unwrap(), &th, n).unwrap();
    let (s, j) = score_and_bracket(&path, &th, n, 1.0).unwrap();
    let rho = lan_remainder(&path, &th, &h, n, 1.0).unwrap();
    assert!((log_l - (s.dot(&h) - 0.5 * j.quadratic_form(&h)) - rho).abs() < 1e-12);
    assert!(rho.abs() < 0.1, "rho = {rho}");
}

#[test]
fn lan_remainder_shrinks_with_n() {
    let th = line();
    let h = [0.6, 0.6, 0.5];
    let medians: Vec<f64> = [250.0, 1000.0]
        .iter()
        .map(|&n| {
            let mut r: Vec<f64> = (0..60)
                .map(|k| {
                    let path = simulate_observation(&th, n, 0.01, RngSpec::new(44, k)).unwrap();
                    lan_remainder(&path, &th, &h, n, 1.0).unwrap().abs()
                })
                .collect();
            r.sort_by(f64::total_cmp);
            0.5 * (r[29] + r[30])
        })
        .collect();
    assert!(medians[1] < medians[0], "{medians:?}");
}

fn study(n: f64) -> StudyConfig {
    StudyConfig {
        n,
        replications: 500,
        seed: 45,
        ..StudyConfig::default()
    }
}

#[test]
fn slope_error_variance_scales_like_n_cubed_and_is_gaussian() {
    let small = run_study(&study(1000.0)).unwrap();
    let large = run_study(&study(2000.0)).unwrap();
    // unrescaled variance is the rescaled one divided by n³
    let ratio = (small.empirical_cov[1][1] / 1000f64.powi(3)) / (large.empirical_cov[1][1] / 2000f64.powi(3));
    assert!((5.0..=12.0).contains(&ratio), "ratio {ratio}");
    for i in 0..3 {
        assert!(large.skewness[i].abs() < 0.3, "skewness {:?}", large.skewness);
        assert!(large.excess_kurtosis[i].abs() < 0.6, "kurtosis {:?}", large.excess_kurtosis);
    }
}

#[test]
fn weighted_ergodic_averages() {
    let sq = functional_probe_lemma1(1.0, 1.0, 0.0, Functional::Square, 3, &[4000.0], 0.01, RngSpec::new(46, 0)).unwrap();
    assert!((sq[0].1 - 0.5).abs() < 0.05, "{sq:?}");
    for ell in 1..=3 {
        let id = functional_probe_lemma1(1.0, 1.0, 0.0, Functional::Identity, ell, &[2000.0], 0.01, RngSpec::new(46, ell as u64))
            .unwrap();
        assert!(id[0].1.abs() < 0.05, "ell {ell}: {id:?}");
    }
    let ind = Functional::Indicator(-1.0, 1.0);
    let out = functional_probe_lemma1(1.0, 1.0, 0.0, ind, 1, &[2000.0], 0.01, RngSpec::new(46, 9)).unwrap();
    assert!((out[0].1 - ind.invariant_mean(1.0, 1.0)).abs() < 0.05);
}

#[test]
fn weighted_integrals_of_the_noise() {
    let p0 = functional_probe_lemma4(1.0, 1.0, 0.0, 0, 2000.0, 500, 0.01, 47, 1).unwrap();
    assert!((p0.empirical_cov[0][0] - 1.0).abs() < 0.15, "{:?}", p0.empirical_cov);
    let p1 = functional_probe_lemma4(1.0, 1.0, 0.0, 1, 2000.0, 500, 0.01, 48, 1).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let t = p1.target_cov[i][j];
            assert!((p1.empirical_cov[i][j] - t).abs() < 0.2 * t, "({i},{j}) {:?}", p1.empirical_cov);
        }
    }
}

#[test]
fn halving_the_step_barely_moves_tau() {
    let th = line();
    let (n, fine) = (2000.0, 0.005);
    let mut shifts = Vec::new();
    let mut coarse_taus = Vec::new();
    for r in 0..200 {
        let path = simulate_observation(&th, n, fine, RngSpec::new(49, r)).unwrap();
        let y = path.channel(channel::Y).unwrap();
        let coarse = SamplePath::single(2.0 * fine, channel::Y, y.iter().step_by(2).copied().collect()).unwrap();
        let t_fine = estimate(&path, 1).unwrap().tau_hat.unwrap();
        let t_coarse = estimate(&coarse, 1).unwrap().tau_hat.unwrap();
        shifts.push(t_coarse - t_fine);
        coarse_taus.push(t_coarse);
    }
    let m = shifts.len() as f64;
    let mean_shift = shifts.iter().sum::<f64>() / m;
    let mean = coarse_taus.iter().sum::<f64>() / m;
    let sd = (coarse_taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    assert!(mean_shift.abs() < 0.1 * sd, "shift {mean_shift}, sd {sd}");
}
