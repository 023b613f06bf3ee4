//! End-to-end flows through the public API: generate data, split,
//! standardize, train, evaluate, and shift.

use fairdro_core::data::{apply_shift, split, ShiftMode, ShiftRequest, Standardizer};
use fairdro_core::fairness::metrics;
use fairdro_core::model::{accuracy, ModelParams};
use fairdro_core::robust::{BallNorm, RobustSpec};
use fairdro_core::synth::{generate, SynthConfig};
use fairdro_core::train::{train, SolverKind, TrainConfig};

fn fair_config(lambda: f64, epsilon: f64) -> TrainConfig {
    TrainConfig {
        solver: SolverKind::DetL2,
        lambda,
        robust: RobustSpec {
            norm: BallNorm::L2,
            epsilon,
        },
        step_size: 0.5,
        iterations: 250,
        safeguard: true,
        ..TrainConfig::default()
    }
}

#[test]
fn generate_split_standardize_train_evaluate() {
    // The test split keeps ~250 positive rows so a 10% conditional
    // target is reachable within the resampler's 0.5% tolerance.
    let data = generate(&SynthConfig::adult_like(3000, 31)).unwrap();
    let (train_set, test_set) = split(&data, 0.6667, true, 7).unwrap();
    let columns: Vec<usize> = (0..train_set.d()).collect();
    let scaler = Standardizer::fit(&train_set, &columns).unwrap();
    let train_set = scaler.apply(&train_set).unwrap();
    let test_set = scaler.apply(&test_set).unwrap();

    let model = ModelParams::logistic(train_set.d(), 2);
    let (fitted, trace) = train(&train_set, &model, &fair_config(5.0, 0.1)).unwrap();
    assert_eq!(trace.records.last().unwrap().iteration, 250);

    let batch = fitted.forward(&test_set).unwrap();
    let acc = accuracy(&batch.hard, &test_set.labels);
    assert!(acc > 0.65, "test accuracy {acc}");
    let report = metrics(&batch, &test_set.labels, &test_set.sensitive, test_set.k).unwrap();
    assert!((0.0..=1.0).contains(&report.dpv));
    assert!(report.ermi >= 1.0 - 1e-9);

    // Shift the test distribution and re-evaluate; metrics stay valid.
    let shifted = apply_shift(
        &test_set,
        &ShiftRequest {
            target_label: 1,
            target_sensitive: 1,
            target_conditional: 0.10,
            mode: ShiftMode::Undersample,
            seed: 3,
        },
    )
    .unwrap();
    let rate = shifted.conditional_rate(1, 1).unwrap();
    assert!((rate - 0.10).abs() <= 0.005, "shifted rate {rate}");
    let batch = fitted.forward(&shifted).unwrap();
    let report = metrics(&batch, &shifted.labels, &shifted.sensitive, shifted.k).unwrap();
    assert!(report.hgr >= 0.0 && report.hgr <= 1.0);
}

#[test]
fn fairness_regularization_trades_accuracy_for_dependence() {
    let data = generate(&SynthConfig::adult_like(600, 32)).unwrap();
    let model = ModelParams::logistic(data.d(), 2);
    let (plain, _) = train(&data, &model, &fair_config(0.0, 0.0)).unwrap();
    let (fair, _) = train(&data, &model, &fair_config(20.0, 0.0)).unwrap();
    let dpv = |m: &ModelParams| {
        let batch = m.forward(&data).unwrap();
        metrics(&batch, &data.labels, &data.sensitive, data.k)
            .unwrap()
            .dpv
    };
    assert!(
        dpv(&fair) < dpv(&plain),
        "fair {} vs plain {}",
        dpv(&fair),
        dpv(&plain)
    );
}

#[test]
fn tail_level_training_controls_the_high_loss_quantile() {
    let mut cfg = SynthConfig::adult_like(500, 33);
    cfg.hard_fraction = 0.1;
    let data = generate(&cfg).unwrap();
    let model = ModelParams::logistic(data.d(), 2);
    let erm_cfg = TrainConfig {
        solver: SolverKind::DetL2,
        step_size: 0.2,
        iterations: 400,
        ..TrainConfig::default()
    };
    // The threshold subgradient scales like 1/level, so the tail run
    // takes a smaller step for more iterations.
    let cvar_cfg = TrainConfig {
        solver: SolverKind::Cvar,
        cvar_level: 0.1,
        step_size: 0.02,
        iterations: 3000,
        ..TrainConfig::default()
    };
    let (erm, _) = train(&data, &model, &erm_cfg).unwrap();
    let (tail, _) = train(&data, &model, &cvar_cfg).unwrap();
    let rows: Vec<usize> = (0..data.n()).collect();
    let p90 = |m: &ModelParams| {
        let mut losses = m.per_sample_loss(&data, &rows).unwrap();
        losses.sort_by(|a, b| a.partial_cmp(b).unwrap());
        losses[(0.9 * losses.len() as f64) as usize]
    };
    assert!(
        p90(&tail) < p90(&erm),
        "tail p90 {} vs erm p90 {}",
        p90(&tail),
        p90(&erm)
    );
}

#[test]
fn plain_run_matches_a_reference_fit_on_separable_data() {
    // Two well-separated clouds: a plain run and an identically stepped
    // reference loop must land on the same loss.
    let mut cfg = SynthConfig::adult_like(100, 34);
    cfg.noise = 0.05;
    let data = generate(&cfg).unwrap();
    let model = ModelParams::logistic(data.d(), 2);
    let run_cfg = TrainConfig {
        solver: SolverKind::DetL2,
        step_size: 0.5,
        iterations: 600,
        ..TrainConfig::default()
    };
    let (fitted, _) = train(&data, &model, &run_cfg).unwrap();
    let rows: Vec<usize> = (0..data.n()).collect();
    let mut reference = model.clone();
    for _ in 0..run_cfg.iterations {
        let (_, grad) = reference.loss_and_grad(&data, &rows).unwrap();
        for (slot, g) in reference.theta.iter_mut().zip(&grad) {
            *slot -= run_cfg.step_size * g;
        }
    }
    let (fit_loss, _) = fitted.loss_and_grad(&data, &rows).unwrap();
    let (ref_loss, _) = reference.loss_and_grad(&data, &rows).unwrap();
    assert!((fit_loss - ref_loss).abs() < 1e-6);
    assert!(fit_loss < 0.1, "separable-set loss {fit_loss}");
}

#[test]
fn identical_seeds_reproduce_runs_bitwise() {
    let data = generate(&SynthConfig::adult_like(300, 35)).unwrap();
    let model = ModelParams::logistic(data.d(), 2);
    let cfg = TrainConfig {
        solver: SolverKind::SgdaL2,
        lambda: 2.0,
        robust: RobustSpec {
            norm: BallNorm::L2,
            epsilon: 0.1,
        },
        batch_size: 32,
        step_size: 0.05,
        iterations: 200,
        seed: 9,
        ..TrainConfig::default()
    };
    let (a, ta) = train(&data, &model, &cfg).unwrap();
    let (b, tb) = train(&data, &model, &cfg).unwrap();
    assert_eq!(a.theta, b.theta);
    let oa: Vec<u64> = ta.records.iter().map(|r| r.objective.to_bits()).collect();
    let ob: Vec<u64> = tb.records.iter().map(|r| r.objective.to_bits()).collect();
    assert_eq!(oa, ob);
}

#[test]
fn shallow_network_trains_through_the_same_loop() {
    let data = generate(&SynthConfig::adult_like(300, 36)).unwrap();
    let model = ModelParams::mlp1(data.d(), 2, 8, 1);
    let cfg = TrainConfig {
        solver: SolverKind::DetL2,
        lambda: 1.0,
        robust: RobustSpec {
            norm: BallNorm::L2,
            epsilon: 0.1,
        },
        step_size: 0.3,
        iterations: 150,
        safeguard: true,
        ..TrainConfig::default()
    };
    let (_, trace) = train(&data, &model, &cfg).unwrap();
    let first = trace.records.first().unwrap();
    let last = trace.records.last().unwrap();
    assert!(last.objective <= first.objective);
    assert!(last.loss < first.loss, "loss {} -> {}", first.loss, last.loss);
}
