//! Self-check oracles: a central finite-difference harness for every
//! hand-derived gradient, plus the randomized verification battery behind
//! the `check` command.
//!
//! The oracles here never call the gradient code they validate; they only
//! evaluate objective values at perturbed points or search over balls and
//! grids directly.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::Result;
use crate::fairness::{
    build_q, ermi, ermi_grad, estimate_probs, second_right_vector, sigma2_grad, soft_q_state,
    variational_ermi, variational_grad_w, variational_value, ProbMode, ProbTriple,
};
use crate::model::{hard_labels, ModelParams, PredictionBatch};
use crate::robust::{brute_force_ball_max, robust_grad, robust_value, BallNorm, RobustSpec};

/// Central finite-difference gradient of `f` at `point`.
///
/// (f(x + h e_i) - f(x - h e_i)) / (2h), one coordinate at a time, using a
/// scratch copy of the point.
pub fn finite_diff_grad<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    point: &[f64],
    step: f64,
) -> Vec<f64> {
    let mut x = point.to_vec();
    let mut grad = vec![0.0; point.len()];
    for i in 0..point.len() {
        let saved = x[i];
        x[i] = saved + step;
        let plus = f(&x);
        x[i] = saved - step;
        let minus = f(&x);
        x[i] = saved;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Relative difference between two gradients: L2 distance over the larger
/// L2 norm, floored so the all-zero case compares absolutely.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    let dist: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    dist / na.max(nb).max(1.0)
}

/// Outcome of one oracle check.
#[derive(Debug, Clone)]
pub struct CheckItem {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
}

impl CheckItem {
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> CheckItem {
        CheckItem {
            name: name.into(),
            residual,
            tolerance,
        }
    }

    pub fn pass(&self) -> bool {
        self.residual.is_finite() && self.residual <= self.tolerance
    }
}

/// Random soft probability triple with m prediction classes and k
/// sensitive levels, built through the same estimator production code
/// uses: a 30-row batch of strictly positive row-stochastic scores.
fn random_triple(rng: &mut ChaCha8Rng, m: usize, k: usize) -> ProbTriple {
    let n = 30;
    let mut probs = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        let mut row: Vec<f64> = (0..m).map(|_| rng.gen::<f64>().powi(2) + 1e-3).collect();
        let total: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= total;
        }
        for (j, v) in row.iter().enumerate() {
            probs[[i, j]] = *v;
        }
    }
    let mut sensitive: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    for (l, slot) in sensitive.iter_mut().take(k).enumerate() {
        *slot = l;
    }
    let batch = PredictionBatch {
        hard: hard_labels(&probs),
        probs,
    };
    estimate_probs(&batch, &sensitive, k, ProbMode::Soft).expect("random batch is valid")
}

/// Worst absolute gap between the closed-form ball maximum and the
/// direct search, over `cases` random dependence matrices (m, k up to
/// 4), all three norms, and radii {0.05, 0.1, 0.5}.
pub fn ball_oracle_check(cases: usize, seed: u64) -> Result<CheckItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let m = rng.gen_range(2..=4);
        let k = rng.gen_range(2..=4);
        let pt = random_triple(&mut rng, m, k);
        let qm = build_q(&pt)?;
        for norm in [BallNorm::L1, BallNorm::L2, BallNorm::Linf] {
            for epsilon in [0.05, 0.1, 0.5] {
                let spec = RobustSpec { norm, epsilon };
                let closed = robust_value(&qm, &spec);
                let brute = brute_force_ball_max(&qm, &spec, 1e-3)?;
                worst = worst.max((closed - brute).abs());
            }
        }
    }
    Ok(CheckItem::new(
        format!("ball maximum: closed form vs direct search ({cases} cases)"),
        worst,
        1e-4,
    ))
}

/// Two residuals over random triples: the closed-form auxiliary maximum
/// against the dependence measure minus one, and an independent gradient
/// ascent (constant step from zero) against that closed form.
pub fn variational_check(cases: usize, seed: u64) -> Result<(CheckItem, CheckItem)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_value = 0.0f64;
    let mut worst_ascent = 0.0f64;
    for _ in 0..cases {
        let m = rng.gen_range(2..=4);
        let k = rng.gen_range(2..=4);
        let pt = random_triple(&mut rng, m, k);
        let qm = build_q(&pt)?;
        let (value, _) = variational_ermi(&pt)?;
        worst_value = worst_value.max((value - (ermi(&qm) - 1.0)).abs());
        // Plain ascent: the objective is concave quadratic in each entry
        // with curvature 2 * prediction marginal <= 2, so step 0.45 is
        // stable and contracts every coordinate.
        let mut w = Array2::<f64>::zeros((k, m));
        for _ in 0..4000 {
            let g = variational_grad_w(&pt, &w)?;
            w.iter_mut().zip(g.iter()).for_each(|(a, b)| *a += 0.45 * b);
        }
        let reached = variational_value(&pt, &w)?;
        worst_ascent = worst_ascent.max((reached - value).abs());
    }
    Ok((
        CheckItem::new(
            format!("auxiliary maximum vs dependence measure ({cases} cases)"),
            worst_value,
            1e-8,
        ),
        CheckItem::new(
            format!("independent ascent vs closed form ({cases} cases)"),
            worst_ascent,
            1e-6,
        ),
    ))
}

/// Grid-search oracle for the square-root identity: coarse log grid over
/// the minimizer range, then a fine linear refinement around the best
/// coarse point. Returns the worst gap over `count` sampled z in (0, 10].
pub fn sqrt_identity_check(count: usize, seed: u64) -> Result<CheckItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eval = |z: f64, alpha: f64| 0.5 * (z * alpha + 1.0 / alpha);
    let (lo, hi, coarse_points) = (0.05f64, 400.0f64, 2000usize);
    let ratio = (hi / lo).powf(1.0 / (coarse_points - 1) as f64);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let z = 10.0 * (1.0 - rng.gen::<f64>());
        let (_, closed) = crate::train::sqrt_min_identity(z)?;
        let mut best_alpha = lo;
        let mut best = f64::INFINITY;
        let mut alpha = lo;
        for _ in 0..coarse_points {
            let v = eval(z, alpha);
            if v < best {
                best = v;
                best_alpha = alpha;
            }
            alpha *= ratio;
        }
        let fine_lo = best_alpha / ratio;
        let fine_hi = best_alpha * ratio;
        let fine_step = (fine_hi - fine_lo) / 2000.0;
        let mut a = fine_lo;
        while a <= fine_hi {
            best = best.min(eval(z, a));
            a += fine_step;
        }
        worst = worst.max((best - closed).abs());
    }
    Ok(CheckItem::new(
        format!("square-root identity vs grid search ({count} samples)"),
        worst,
        1e-8,
    ))
}

fn random_point(d: usize, m: usize, n: usize, seed: u64) -> (Dataset, ModelParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Array2::<f64>::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    for i in 0..n {
        let s = (rng.gen::<f64>() < 0.4) as usize;
        let y = if rng.gen::<f64>() < 0.75 { s } else { 1 - s };
        for t in 0..d {
            let center = (y as f64 - 0.5) + 0.5 * (s as f64 - 0.5);
            features[[i, t]] = center + rng.gen_range(-1.0..1.0);
        }
        labels.push(y);
        sensitive.push(s);
    }
    sensitive[0] = 0;
    sensitive[1] = 1;
    let data = Dataset::new(features, labels, sensitive, 2, 2).expect("valid synthetic data");
    let mut params = ModelParams::logistic(d, m);
    for slot in params.theta.iter_mut() {
        *slot = rng.gen_range(-0.8..0.8);
    }
    (data, params)
}

/// Finite-difference verification of every hand-derived gradient at
/// `points` random (dataset, parameter) pairs: the dependence gradient,
/// the frozen-direction second-singular-value gradient, the robust
/// gradient under all three balls, and the loss gradient.
pub fn gradient_battery(points: usize, seed: u64) -> Result<Vec<CheckItem>> {
    const STEP: f64 = 1e-6;
    let mut worst = [0.0f64; 6];
    for p in 0..points {
        let (data, params) = random_point(3, 2, 40, seed.wrapping_add(p as u64));
        let rows: Vec<usize> = (0..data.n()).collect();

        let at = |theta: &[f64]| {
            let mut probe = params.clone();
            probe.theta = theta.to_vec();
            probe
        };

        let analytic = ermi_grad(&params, &data)?;
        let numeric = finite_diff_grad(
            |theta| {
                let probe = at(theta);
                let state = soft_q_state(&probe, &data).unwrap();
                ermi(&state.qm)
            },
            &params.theta,
            STEP,
        );
        worst[0] = worst[0].max(rel_error(&analytic, &numeric));

        let base_state = soft_q_state(&params, &data)?;
        let v = second_right_vector(&base_state.qm)?;
        let analytic = sigma2_grad(&params, &data, &v)?;
        let numeric = finite_diff_grad(
            |theta| {
                let probe = at(theta);
                let state = soft_q_state(&probe, &data).unwrap();
                let qv = state.qm.q.dot(&v);
                qv.iter().map(|x| x * x).sum::<f64>().sqrt()
            },
            &params.theta,
            STEP,
        );
        worst[1] = worst[1].max(rel_error(&analytic, &numeric));

        for (slot, norm) in [(2, BallNorm::L1), (3, BallNorm::L2), (4, BallNorm::Linf)] {
            let spec = RobustSpec { norm, epsilon: 0.2 };
            let analytic = robust_grad(&params, &data, &spec)?;
            let numeric = finite_diff_grad(
                |theta| {
                    let probe = at(theta);
                    let state = soft_q_state(&probe, &data).unwrap();
                    robust_value(&state.qm, &spec)
                },
                &params.theta,
                STEP,
            );
            worst[slot] = worst[slot].max(rel_error(&analytic, &numeric));
        }

        let (_, analytic) = params.loss_and_grad(&data, &rows)?;
        let numeric = finite_diff_grad(
            |theta| {
                let probe = at(theta);
                probe.loss_and_grad(&data, &rows).unwrap().0
            },
            &params.theta,
            STEP,
        );
        worst[5] = worst[5].max(rel_error(&analytic, &numeric));
    }
    let names = [
        "dependence gradient vs finite differences",
        "second-direction gradient vs finite differences",
        "robust gradient (l1) vs finite differences",
        "robust gradient (l2) vs finite differences",
        "robust gradient (linf) vs finite differences",
        "loss gradient vs finite differences",
    ];
    Ok(names
        .iter()
        .zip(worst)
        .map(|(name, residual)| CheckItem::new(format!("{name} ({points} points)"), residual, 1e-4))
        .collect())
}

/// The full oracle battery at its standard scale. Deterministic in the
/// seed; the `check` command prints one line per item.
pub fn run_battery(seed: u64) -> Result<Vec<CheckItem>> {
    let mut items = Vec::new();
    items.push(ball_oracle_check(200, seed)?);
    let (value_item, ascent_item) = variational_check(50, seed.wrapping_add(1))?;
    items.push(value_item);
    items.push(ascent_item);
    items.push(sqrt_identity_check(1000, seed.wrapping_add(2))?);
    items.extend(gradient_battery(20, seed.wrapping_add(3))?);
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_diff_matches_quadratic_closed_form() {
        // f(x) = sum x_i^2, grad = 2x.
        let point = [1.0, -2.0, 0.5];
        let grad = finite_diff_grad(|x| x.iter().map(|v| v * v).sum(), &point, 1e-6);
        let expect = [2.0, -4.0, 1.0];
        assert!(rel_error(&expect, &grad) < 1e-9);
    }

    #[test]
    fn rel_error_flags_sign_bug() {
        let good = [1.0, 2.0];
        let flipped = [-1.0, 2.0];
        assert!(rel_error(&good, &flipped) > 0.5);
    }

    #[test]
    fn rel_error_handles_zero_gradients() {
        assert!(rel_error(&[0.0, 0.0], &[1e-9, -1e-9]) < 1e-8);
    }

    #[test]
    fn small_battery_passes_end_to_end() {
        let ball = ball_oracle_check(10, 5).unwrap();
        assert!(ball.pass(), "{}: residual {}", ball.name, ball.residual);
        let (value, ascent) = variational_check(5, 6).unwrap();
        assert!(value.pass(), "{}: residual {}", value.name, value.residual);
        assert!(ascent.pass(), "{}: residual {}", ascent.name, ascent.residual);
        let sqrt = sqrt_identity_check(50, 7).unwrap();
        assert!(sqrt.pass(), "{}: residual {}", sqrt.name, sqrt.residual);
        for item in gradient_battery(3, 8).unwrap() {
            assert!(item.pass(), "{}: residual {}", item.name, item.residual);
        }
    }

    #[test]
    fn battery_is_deterministic_in_the_seed() {
        let a = run_battery_small(11);
        let b = run_battery_small(11);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.residual.to_bits(), y.residual.to_bits(), "{}", x.name);
        }
        let c = run_battery_small(12);
        assert!(a.iter().zip(&c).any(|(x, y)| x.residual != y.residual));
    }

    fn run_battery_small(seed: u64) -> Vec<CheckItem> {
        let mut items = vec![ball_oracle_check(5, seed).unwrap()];
        let (v, a) = variational_check(3, seed + 1).unwrap();
        items.push(v);
        items.push(a);
        items.push(sqrt_identity_check(20, seed + 2).unwrap());
        items.extend(gradient_battery(2, seed + 3).unwrap());
        items
    }

    #[test]
    fn a_corrupted_gradient_is_caught() {
        // Mimic a sign bug: compare the true dependence gradient against a
        // finite-difference oracle of the negated objective.
        let (data, params) = random_point(3, 2, 30, 42);
        let analytic = ermi_grad(&params, &data).unwrap();
        let numeric = finite_diff_grad(
            |theta| {
                let mut probe = params.clone();
                probe.theta = theta.to_vec();
                let state = soft_q_state(&probe, &data).unwrap();
                -ermi(&state.qm)
            },
            &params.theta,
            1e-6,
        );
        assert!(rel_error(&analytic, &numeric) > 1e-2);
    }
}
