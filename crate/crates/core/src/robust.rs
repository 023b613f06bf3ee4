//! Worst-case dependence over uncertainty balls on Q's singular values.
//!
//! The adversary may move the singular-value vector of the dependence
//! matrix anywhere within an epsilon ball in the l1, l2, or l-infinity
//! norm; the regularizer is the largest Tr(Q'Q) it can reach. Each ball
//! admits a closed form (`robust_value`) and a matching parameter
//! gradient (`robust_grad`). An independent vertex/sampling oracle
//! (`brute_force_ball_max`) maximizes over the ball directly and is the
//! executable check that the closed forms are exact.
//!
//! Ball conventions: the l1 budget leaves the top singular value pinned
//! at its structural value 1 and flows to the second singular value; the
//! l2 and l-infinity balls are unconstrained, so their worst case pushes
//! even the pinned top value outward (the l-infinity form therefore adds
//! epsilon to every singular value, and its quadratic expansion carries
//! one epsilon^2 per singular value).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fairness::{
    ermi, ermi_grad_at, nuclear_grad_at, second_right_vector, sigma2_grad_at, soft_q_state,
    QMatrix, QState,
};
use crate::model::ModelParams;

/// Largest singular-value count the brute-force oracle searches over.
const ORACLE_MAX_RANK: usize = 6;

/// Which norm bounds the adversary's movement of the singular values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BallNorm {
    L1,
    L2,
    Linf,
}

impl BallNorm {
    pub fn as_str(&self) -> &'static str {
        match self {
            BallNorm::L1 => "l1",
            BallNorm::L2 => "l2",
            BallNorm::Linf => "linf",
        }
    }
}

/// Uncertainty-ball description: norm and radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustSpec {
    pub norm: BallNorm,
    pub epsilon: f64,
}

impl RobustSpec {
    pub fn new(norm: BallNorm, epsilon: f64) -> Result<RobustSpec> {
        let spec = RobustSpec { norm, epsilon };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::Validation(format!(
                "ball radius must be finite and nonnegative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Worst-case Tr(Q'Q) over the epsilon ball.
///
/// l1: Tr + 2 eps sigma2 + eps^2 (all budget on the second singular
/// value, top pinned). l2: Tr + 2 eps sqrt(Tr) + eps^2 (radial push).
/// l-infinity: Tr + 2 eps (sum of singular values) + r eps^2 where r is
/// the singular-value count, since every coordinate moves out by eps.
/// At eps = 0 all three equal Tr exactly.
pub fn robust_value(qm: &QMatrix, spec: &RobustSpec) -> f64 {
    let tr = ermi(qm);
    let eps = spec.epsilon;
    let sigma = qm.sigma();
    match spec.norm {
        BallNorm::L1 => {
            let sigma2 = if sigma.len() > 1 { sigma[1] } else { 0.0 };
            tr + 2.0 * eps * sigma2 + eps * eps
        }
        BallNorm::L2 => tr + 2.0 * eps * tr.sqrt() + eps * eps,
        BallNorm::Linf => {
            let nuclear: f64 = sigma.iter().sum();
            tr + 2.0 * eps * nuclear + sigma.len() as f64 * eps * eps
        }
    }
}

/// Parameter gradient of [`robust_value`] composed with the soft
/// probability estimates at the current parameters.
///
/// Constant-in-parameters terms (the eps^2 additives) contribute nothing;
/// singular vectors are held fixed at the current decomposition, which is
/// the exact derivative wherever the relevant singular values are simple.
/// At eps = 0 the result is bitwise the plain dependence gradient.
pub fn robust_grad(params: &ModelParams, data: &Dataset, spec: &RobustSpec) -> Result<Vec<f64>> {
    let state = soft_q_state(params, data)?;
    robust_grad_at(params, data, &state, spec)
}

/// [`robust_grad`] with a precomputed soft-probability state, so training
/// loops reuse one forward pass per iteration.
pub fn robust_grad_at(
    params: &ModelParams,
    data: &Dataset,
    state: &QState,
    spec: &RobustSpec,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let eps = spec.epsilon;
    if eps == 0.0 {
        return ermi_grad_at(params, data, state);
    }
    match spec.norm {
        BallNorm::L1 => {
            let v = second_right_vector(&state.qm)?;
            let base = ermi_grad_at(params, data, state)?;
            let dir = sigma2_grad_at(params, data, state, &v)?;
            Ok(base
                .into_iter()
                .zip(dir)
                .map(|(b, d)| b + 2.0 * eps * d)
                .collect())
        }
        BallNorm::L2 => {
            let scale = 1.0 + eps / ermi(&state.qm).sqrt();
            let base = ermi_grad_at(params, data, state)?;
            Ok(base.into_iter().map(|b| b * scale).collect())
        }
        BallNorm::Linf => {
            let base = ermi_grad_at(params, data, state)?;
            let dir = nuclear_grad_at(params, data, state)?;
            Ok(base
                .into_iter()
                .zip(dir)
                .map(|(b, d)| b + 2.0 * eps * d)
                .collect())
        }
    }
}

/// Independent maximization of Tr(Q'Q) over the ball, by direct search in
/// singular-value space.
///
/// l1 and l-infinity balls are polytopes and the objective is convex, so
/// the maximum sits on a vertex and vertex enumeration is exact (the l1
/// enumeration respects the pinned top value). The l2 ball adds the
/// radial boundary point plus seeded boundary sampling at the requested
/// resolution; sampled points can only confirm, never beat, the radial
/// one. Values below zero are clamped since singular values cannot be
/// negative; this never lowers the maximum.
pub fn brute_force_ball_max(qm: &QMatrix, spec: &RobustSpec, resolution: f64) -> Result<f64> {
    spec.validate()?;
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::Validation(format!(
            "grid resolution must be positive, got {resolution}"
        )));
    }
    let sigma: Vec<f64> = qm.sigma().iter().cloned().collect();
    let r = sigma.len();
    if r > ORACLE_MAX_RANK {
        return Err(Error::Validation(format!(
            "ball oracle handles at most {ORACLE_MAX_RANK} singular values, got {r}"
        )));
    }
    let eps = spec.epsilon;
    let value = |candidate: &[f64]| -> f64 {
        candidate.iter().map(|&s| s.max(0.0).powi(2)).sum()
    };
    let mut best = value(&sigma);
    match spec.norm {
        BallNorm::L1 => {
            // Vertices of the simplex-slice: all budget on one free
            // coordinate, either direction; coordinate 0 stays pinned.
            let mut candidate = sigma.clone();
            for i in 1..r {
                for sign in [1.0, -1.0] {
                    candidate.copy_from_slice(&sigma);
                    candidate[i] += sign * eps;
                    best = best.max(value(&candidate));
                }
            }
            if r == 1 {
                // No free coordinate; the ball collapses to the point.
                best = value(&sigma);
            }
        }
        BallNorm::L2 => {
            let norm = sigma.iter().map(|s| s * s).sum::<f64>().sqrt();
            let mut candidate = sigma.clone();
            if norm > 0.0 {
                for (c, &s) in candidate.iter_mut().zip(&sigma) {
                    *c = s * (1.0 + eps / norm);
                }
                best = best.max(value(&candidate));
            }
            // Seeded boundary sampling as confirmation.
            let samples = ((1.0 / resolution).ceil() as usize).clamp(100, 20_000);
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_ba11);
            for _ in 0..samples {
                let mut dir: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let dn = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
                if dn == 0.0 {
                    continue;
                }
                for ((c, &s), d) in candidate.iter_mut().zip(&sigma).zip(&dir) {
                    *c = s + eps * *d / dn;
                }
                best = best.max(value(&candidate));
                for d in dir.iter_mut() {
                    *d = -*d;
                }
            }
        }
        BallNorm::Linf => {
            // Box vertices: every sign pattern of a full-epsilon move.
            let mut candidate = sigma.clone();
            for mask in 0..(1u32 << r) {
                for i in 0..r {
                    let sign = if mask & (1 << i) != 0 { 1.0 } else { -1.0 };
                    candidate[i] = sigma[i] + sign * eps;
                }
                best = best.max(value(&candidate));
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::{finite_diff_grad, rel_error};
    use crate::error::Error;
    use crate::fairness::{build_q, estimate_probs, ProbMode, ProbTriple};
    use crate::model::{hard_labels, PredictionBatch};
    use ndarray::{arr2, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Binary uniform-marginal Q with singular values exactly (1, t).
    fn binary_qm(t: f64) -> QMatrix {
        let a = (1.0 + t) / 4.0;
        let b = (1.0 - t) / 4.0;
        let pt = ProbTriple::from_joint(arr2(&[[a, b], [b, a]])).unwrap();
        build_q(&pt).unwrap()
    }

    fn spec(norm: BallNorm, epsilon: f64) -> RobustSpec {
        RobustSpec::new(norm, epsilon).unwrap()
    }

    #[test]
    fn closed_forms_match_frozen_values() {
        let independent = binary_qm(0.0);
        assert!((robust_value(&independent, &spec(BallNorm::L1, 0.1)) - 1.01).abs() < 1e-10);
        assert!((robust_value(&independent, &spec(BallNorm::L2, 0.1)) - 1.21).abs() < 1e-10);
        // Both singular values move out, so two eps^2 terms appear.
        assert!((robust_value(&independent, &spec(BallNorm::Linf, 0.1)) - 1.22).abs() < 1e-10);

        let dependent = binary_qm(1.0);
        assert!((robust_value(&dependent, &spec(BallNorm::L1, 0.1)) - 2.21).abs() < 1e-10);
        let l2_expect = 2.0 + 0.2 * 2.0f64.sqrt() + 0.01;
        assert!((robust_value(&dependent, &spec(BallNorm::L2, 0.1)) - l2_expect).abs() < 1e-10);
        assert!((robust_value(&dependent, &spec(BallNorm::Linf, 0.1)) - 2.42).abs() < 1e-10);

        let mid = binary_qm(0.3);
        assert!((robust_value(&mid, &spec(BallNorm::L1, 0.2)) - 1.25).abs() < 1e-10);
        let half = binary_qm(0.5);
        let l2_half = (1.25f64.sqrt() + 0.2).powi(2);
        assert!((robust_value(&half, &spec(BallNorm::L2, 0.2)) - l2_half).abs() < 1e-10);

        let strong = binary_qm(0.6);
        assert!((robust_value(&strong, &spec(BallNorm::L1, 0.1)) - 1.49).abs() < 1e-10);
        assert!((robust_value(&strong, &spec(BallNorm::Linf, 0.1)) - 1.70).abs() < 1e-10);
    }

    #[test]
    fn zero_radius_reduces_to_ermi_exactly() {
        for t in [0.0, 0.37, 0.9] {
            let qm = binary_qm(t);
            for norm in [BallNorm::L1, BallNorm::L2, BallNorm::Linf] {
                assert_eq!(robust_value(&qm, &spec(norm, 0.0)), ermi(&qm));
            }
        }
    }

    #[test]
    fn oracle_agrees_with_closed_forms_on_frozen_points() {
        for t in [0.0, 0.3, 0.6, 1.0] {
            let qm = binary_qm(t);
            for norm in [BallNorm::L1, BallNorm::L2, BallNorm::Linf] {
                for eps in [0.0, 0.05, 0.1, 0.5] {
                    let s = spec(norm, eps);
                    let closed = robust_value(&qm, &s);
                    let oracle = brute_force_ball_max(&qm, &s, 1e-3).unwrap();
                    assert!(
                        (closed - oracle).abs() < 1e-4,
                        "{norm:?} eps={eps} t={t}: closed {closed} vs oracle {oracle}"
                    );
                }
            }
        }
    }

    #[test]
    fn negative_radius_is_rejected() {
        assert!(RobustSpec::new(BallNorm::L2, -0.1).is_err());
    }

    #[test]
    fn spec_serializes_with_lowercase_norms() {
        let s = spec(BallNorm::Linf, 0.25);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, "{\"norm\":\"linf\",\"epsilon\":0.25}");
        let back: RobustSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    fn correlated_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Array2::<f64>::zeros((n, d));
        let mut labels = Vec::with_capacity(n);
        let mut sensitive = Vec::with_capacity(n);
        for i in 0..n {
            let s = (rng.gen::<f64>() < 0.4) as usize;
            let y = if rng.gen::<f64>() < 0.7 { s } else { 1 - s };
            for t in 0..d {
                let center = 0.8 * (y as f64 - 0.5) + 0.4 * (s as f64 - 0.5);
                features[[i, t]] = center + rng.gen_range(-1.0..1.0);
            }
            labels.push(y);
            sensitive.push(s);
        }
        sensitive[0] = 0;
        sensitive[1] = 1;
        Dataset::new(features, labels, sensitive, 2, 2).unwrap()
    }

    fn random_logistic(d: usize, seed: u64) -> ModelParams {
        let mut model = ModelParams::logistic(d, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for slot in model.theta.iter_mut() {
            *slot = rng.gen_range(-0.8..0.8);
        }
        model
    }

    #[test]
    fn gradients_match_finite_differences_for_every_norm() {
        let data = correlated_dataset(30, 3, 61);
        let model = random_logistic(3, 67);
        for norm in [BallNorm::L1, BallNorm::L2, BallNorm::Linf] {
            let s = spec(norm, 0.2);
            let grad = robust_grad(&model, &data, &s).unwrap();
            let probe = model.clone();
            let fd = finite_diff_grad(
                |theta| {
                    let mut p = probe.clone();
                    p.theta = theta.to_vec();
                    let state = soft_q_state(&p, &data).unwrap();
                    robust_value(&state.qm, &s)
                },
                &model.theta,
                1e-5,
            );
            let rel = rel_error(&grad, &fd);
            assert!(rel < 1e-6, "{norm:?}: rel {rel}");
        }
    }

    #[test]
    fn zero_radius_gradient_is_bitwise_the_dependence_gradient() {
        let data = correlated_dataset(25, 3, 71);
        let model = random_logistic(3, 73);
        let state = soft_q_state(&model, &data).unwrap();
        for norm in [BallNorm::L1, BallNorm::L2, BallNorm::Linf] {
            let grad = robust_grad_at(&model, &data, &state, &spec(norm, 0.0)).unwrap();
            let base = ermi_grad_at(&model, &data, &state).unwrap();
            assert_eq!(grad, base);
        }
    }

    #[test]
    fn l2_gradient_vanishes_at_independence() {
        let data = correlated_dataset(20, 3, 79);
        let model = ModelParams::logistic(3, 2);
        let grad = robust_grad(&model, &data, &spec(BallNorm::L2, 0.3)).unwrap();
        for g in grad {
            assert!(g.abs() < 1e-13);
        }
    }

    #[test]
    fn l1_gradient_errors_at_independence() {
        let data = correlated_dataset(20, 3, 83);
        let model = ModelParams::logistic(3, 2);
        let err = robust_grad(&model, &data, &spec(BallNorm::L1, 0.3)).unwrap_err();
        assert!(matches!(err, Error::NotDifferentiable(_)));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn random_qm(seed: u64, m: usize, k: usize) -> QMatrix {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 40;
            let mut probs = Array2::<f64>::zeros((n, m));
            for i in 0..n {
                let mut total = 0.0;
                for j in 0..m {
                    let v: f64 = rng.gen_range(0.05..1.0);
                    probs[[i, j]] = v;
                    total += v;
                }
                for j in 0..m {
                    probs[[i, j]] /= total;
                }
            }
            let sensitive: Vec<usize> = (0..n)
                .map(|i| if i < k { i } else { rng.gen_range(0..k) })
                .collect();
            let hard = hard_labels(&probs);
            let batch = PredictionBatch { probs, hard };
            let pt = estimate_probs(&batch, &sensitive, k, ProbMode::Soft).unwrap();
            build_q(&pt).unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(40))]

            #[test]
            fn closed_forms_match_the_ball_oracle(
                seed in 0u64..10_000,
                m in 2usize..5,
                k in 2usize..5,
                eps_idx in 0usize..3,
            ) {
                let qm = random_qm(seed, m, k);
                let eps = [0.05, 0.1, 0.5][eps_idx];
                for norm in [BallNorm::L1, BallNorm::L2, BallNorm::Linf] {
                    let s = spec(norm, eps);
                    let closed = robust_value(&qm, &s);
                    let oracle = brute_force_ball_max(&qm, &s, 1e-3).unwrap();
                    prop_assert!(
                        (closed - oracle).abs() < 1e-4,
                        "{:?} eps={} closed {} oracle {}", norm, eps, closed, oracle
                    );
                }
            }

            #[test]
            fn value_is_monotone_in_radius_and_ordered_across_norms(
                seed in 0u64..10_000,
                m in 2usize..5,
                k in 2usize..5,
            ) {
                let qm = random_qm(seed, m, k);
                let grid = [0.0, 0.05, 0.1, 0.3, 0.7];
                for norm in [BallNorm::L1, BallNorm::L2, BallNorm::Linf] {
                    let mut last = f64::NEG_INFINITY;
                    for &eps in &grid {
                        let v = robust_value(&qm, &spec(norm, eps));
                        prop_assert!(v >= last - 1e-12);
                        last = v;
                    }
                }
                for &eps in &grid {
                    let l1 = robust_value(&qm, &spec(BallNorm::L1, eps));
                    let linf = robust_value(&qm, &spec(BallNorm::Linf, eps));
                    prop_assert!(l1 <= linf + 1e-12);
                    let sigma2 = qm.sigma()[1];
                    let tr = ermi(&qm);
                    if sigma2 <= tr.sqrt() {
                        let l2 = robust_value(&qm, &spec(BallNorm::L2, eps));
                        prop_assert!(l1 <= l2 + 1e-12);
                    }
                }
            }
        }
    }
}
