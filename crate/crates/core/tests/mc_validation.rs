mod common;

use asymopt::linalg::Matrix;
use asymopt::mc::{estimate_asymptotics, simulate, FactorScheme, SimConfig};
use asymopt::{moments, reference_model, FactorModel, Strategy};
use common::*;

const Z_LIMIT: f64 = 5.0;

fn faster_model(seed: u64) -> FactorModel {
    let mut rng = rng(seed);
    let base = random_model(&mut rng, 1, 2);
    FactorModel::new(
        base.drift().clone(),
        base.drift_loading().clone(),
        base.mean_reversion() - Matrix::identity(2, 2) * 0.3,
        base.asset_diffusion().clone(),
        base.factor_diffusion().clone(),
    )
    .unwrap()
}

#[test]
fn reference_model_moments_within_tolerance() {
    let model = reference_model();
    let config = SimConfig {
        horizon: 2000.0,
        paths: 2000,
        seed: 11,
        ..SimConfig::default()
    };
    for (h, big_h) in [(1.0, 0.0), (1.0, 1.0), (0.5, -1.0)] {
        let strategy = Strategy::scalar(h, big_h);
        let closed = moments(&model, &strategy).unwrap();
        let z = simulate(&model, &strategy, &config)
            .unwrap()
            .z_scores(&closed);
        assert!(z.max_abs() < Z_LIMIT, "({h}, {big_h}): {z:?}");
    }
}

#[test]
fn random_two_factor_models_within_tolerance() {
    for seed in [3u64, 17, 29] {
        let model = faster_model(seed);
        let mut rng = rng(seed + 1000);
        let strategy = random_strategy(&mut rng, 1, 2);
        let closed = moments(&model, &strategy).unwrap();
        let config = SimConfig {
            horizon: 1000.0,
            paths: 2000,
            seed,
            ..SimConfig::default()
        };
        let z = simulate(&model, &strategy, &config)
            .unwrap()
            .z_scores(&closed);
        assert!(z.max_abs() < Z_LIMIT, "model {seed}: {z:?}");
    }
}

#[test]
fn euler_scheme_agrees_at_small_step() {
    let model = faster_model(5);
    let strategy = Strategy::new(
        asymopt::linalg::Vector::from_element(1, 0.8),
        Matrix::from_row_slice(1, 2, &[0.5, -0.5]),
    )
    .unwrap();
    let closed = moments(&model, &strategy).unwrap();
    let config = SimConfig {
        dt: 0.02,
        horizon: 400.0,
        paths: 1000,
        scheme: FactorScheme::Euler,
        seed: 5,
        ..SimConfig::default()
    };
    let z = simulate(&model, &strategy, &config)
        .unwrap()
        .z_scores(&closed);
    assert!(z.max_abs() < Z_LIMIT, "{z:?}");
}

#[test]
fn antithetic_pairs_within_tolerance() {
    let model = faster_model(8);
    let strategy = Strategy::new(
        asymopt::linalg::Vector::from_element(1, 1.0),
        Matrix::from_row_slice(1, 2, &[-1.0, 0.3]),
    )
    .unwrap();
    let closed = moments(&model, &strategy).unwrap();
    let config = SimConfig {
        horizon: 1000.0,
        paths: 2000,
        antithetic: true,
        seed: 8,
        ..SimConfig::default()
    };
    let z = simulate(&model, &strategy, &config)
        .unwrap()
        .z_scores(&closed);
    assert!(z.max_abs() < Z_LIMIT, "{z:?}");
}

#[test]
fn uxx_slope_matches_growth_times_delta() {
    let model = faster_model(21);
    let strategy = Strategy::new(
        asymopt::linalg::Vector::from_element(1, 1.0),
        Matrix::from_row_slice(1, 2, &[0.4, 0.4]),
    )
    .unwrap();
    let closed = moments(&model, &strategy).unwrap();
    let config = SimConfig {
        horizon: 800.0,
        paths: 2000,
        seed: 21,
        ..SimConfig::default()
    };
    let fit =
        estimate_asymptotics(&model, &strategy, &config, &[200.0, 400.0, 600.0, 800.0]).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let est = fit.r[i][j];
            let z = est.z_score(closed.r[(i, j)]);
            assert!(
                z.abs() < Z_LIMIT,
                "R[{i}][{j}] = {est:?} vs {}",
                closed.r[(i, j)]
            );
        }
    }
    assert!(fit.growth_rate.z_score(closed.growth_rate).abs() < Z_LIMIT);
    assert!(fit.variance_rate.z_score(closed.variance_rate).abs() < Z_LIMIT);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let model = reference_model();
    let strategy = Strategy::scalar(1.0, 0.5);
    let config = SimConfig {
        horizon: 50.0,
        paths: 64,
        seed: 99,
        keep_paths: true,
        ..SimConfig::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate(&model, &strategy, &config).unwrap())
    };
    assert_eq!(run(1), run(3));
}
