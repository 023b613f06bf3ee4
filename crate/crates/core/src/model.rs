//! Probabilistic classifiers with hand-derived gradients: multinomial
//! logistic regression and an optional one-hidden-layer tanh perceptron.
//!
//! Everything a training loop needs is exposed through three entry points:
//! [`ModelParams::forward`] for probabilities, [`ModelParams::loss_and_grad`]
//! for mean cross-entropy, and [`ModelParams::prob_vjp`] for contracting
//! per-sample probability Jacobians against coefficient vectors (the
//! building block of the dependence-measure gradients). All accumulation is
//! in f64; the min-max objectives downstream are sensitive to estimate bias.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Probabilities are clamped to this range inside logarithms only, so P
/// matrices keep genuinely small class masses.
const LOG_CLAMP: f64 = 1e-12;

/// Model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Mlp1 { hidden: usize },
}

/// Flat parameter vector plus the layout that interprets it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub kind: ModelKind,
    /// Input feature dimension d.
    pub input_dim: usize,
    /// Class count m.
    pub classes: usize,
    /// All parameter blocks, concatenated.
    pub theta: Vec<f64>,
}

/// Batch of predictions: row-stochastic probabilities and argmax labels
/// (ties broken toward the smallest class index).
#[derive(Debug, Clone)]
pub struct PredictionBatch {
    pub probs: Array2<f64>,
    pub hard: Vec<usize>,
}

impl ModelKind {
    /// Total parameter count for input dimension `d` and `m` classes.
    pub fn param_len(&self, d: usize, m: usize) -> usize {
        match *self {
            ModelKind::Logistic => m * d + m,
            ModelKind::Mlp1 { hidden } => hidden * d + hidden + m * hidden + m,
        }
    }
}

impl ModelParams {
    /// Zero-initialized logistic model (the convex case starts at the
    /// uniform predictor).
    pub fn logistic(input_dim: usize, classes: usize) -> ModelParams {
        let kind = ModelKind::Logistic;
        ModelParams {
            kind,
            input_dim,
            classes,
            theta: vec![0.0; kind.param_len(input_dim, classes)],
        }
    }

    /// One-hidden-layer tanh perceptron, each layer seeded uniform in
    /// [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    pub fn mlp1(input_dim: usize, classes: usize, hidden: usize, seed: u64) -> ModelParams {
        let kind = ModelKind::Mlp1 { hidden };
        let mut theta = vec![0.0; kind.param_len(input_dim, classes)];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound1 = 1.0 / (input_dim as f64).sqrt();
        let bound2 = 1.0 / (hidden as f64).sqrt();
        let first = hidden * input_dim + hidden;
        for slot in theta[..first].iter_mut() {
            *slot = rng.gen_range(-bound1..bound1);
        }
        for slot in theta[first..].iter_mut() {
            *slot = rng.gen_range(-bound2..bound2);
        }
        ModelParams {
            kind,
            input_dim,
            classes,
            theta,
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    fn validate_against(&self, data: &Dataset) -> Result<()> {
        if data.d() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, dataset has {}",
                self.input_dim,
                data.d()
            )));
        }
        if data.m > self.classes {
            return Err(Error::DimensionMismatch(format!(
                "model has {} classes, dataset labels reach {}",
                self.classes, data.m
            )));
        }
        if self.theta.len() != self.kind.param_len(self.input_dim, self.classes) {
            return Err(Error::DimensionMismatch(
                "parameter vector length does not match layout".to_string(),
            ));
        }
        Ok(())
    }

    /// Logits for one feature row; for the MLP also returns the hidden
    /// activation needed by backprop.
    fn logits_row(&self, x: ndarray::ArrayView1<f64>) -> (Vec<f64>, Option<Vec<f64>>) {
        let d = self.input_dim;
        let m = self.classes;
        match self.kind {
            ModelKind::Logistic => {
                let w = &self.theta[..m * d];
                let b = &self.theta[m * d..];
                let mut z = vec![0.0; m];
                for j in 0..m {
                    let mut acc = b[j];
                    let row = &w[j * d..(j + 1) * d];
                    for t in 0..d {
                        acc += row[t] * x[t];
                    }
                    z[j] = acc;
                }
                (z, None)
            }
            ModelKind::Mlp1 { hidden } => {
                let w1 = &self.theta[..hidden * d];
                let b1 = &self.theta[hidden * d..hidden * d + hidden];
                let off2 = hidden * d + hidden;
                let w2 = &self.theta[off2..off2 + m * hidden];
                let b2 = &self.theta[off2 + m * hidden..];
                let mut a = vec![0.0; hidden];
                for h in 0..hidden {
                    let mut acc = b1[h];
                    let row = &w1[h * d..(h + 1) * d];
                    for t in 0..d {
                        acc += row[t] * x[t];
                    }
                    a[h] = acc.tanh();
                }
                let mut z = vec![0.0; m];
                for j in 0..m {
                    let mut acc = b2[j];
                    let row = &w2[j * hidden..(j + 1) * hidden];
                    for h in 0..hidden {
                        acc += row[h] * a[h];
                    }
                    z[j] = acc;
                }
                (z, Some(a))
            }
        }
    }

    /// Softmax probabilities for the given rows, plus hidden activations
    /// for the MLP kind.
    fn forward_cached(
        &self,
        data: &Dataset,
        rows: &[usize],
    ) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
        self.validate_against(data)?;
        let m = self.classes;
        let mut probs = Array2::<f64>::zeros((rows.len(), m));
        let mut hidden_out = match self.kind {
            ModelKind::Logistic => None,
            ModelKind::Mlp1 { hidden } => Some(Array2::<f64>::zeros((rows.len(), hidden))),
        };
        for (ri, &i) in rows.iter().enumerate() {
            if i >= data.n() {
                return Err(Error::Validation(format!("row index {i} out of range")));
            }
            let (z, hid) = self.logits_row(data.features.row(i));
            let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut norm = 0.0;
            for j in 0..m {
                let e = (z[j] - zmax).exp();
                probs[[ri, j]] = e;
                norm += e;
            }
            for j in 0..m {
                probs[[ri, j]] /= norm;
            }
            if let (Some(store), Some(a)) = (hidden_out.as_mut(), hid) {
                for (h, &v) in a.iter().enumerate() {
                    store[[ri, h]] = v;
                }
            }
        }
        Ok((probs, hidden_out))
    }

    /// Class probabilities and hard predictions for the whole dataset.
    pub fn forward(&self, data: &Dataset) -> Result<PredictionBatch> {
        let rows: Vec<usize> = (0..data.n()).collect();
        let (probs, _) = self.forward_cached(data, &rows)?;
        let hard = hard_labels(&probs);
        Ok(PredictionBatch { probs, hard })
    }

    /// Probabilities for a row subset (training batches).
    pub fn forward_rows(&self, data: &Dataset, rows: &[usize]) -> Result<Array2<f64>> {
        Ok(self.forward_cached(data, rows)?.0)
    }

    /// Mean cross-entropy over `rows` and its exact parameter gradient.
    pub fn loss_and_grad(&self, data: &Dataset, rows: &[usize]) -> Result<(f64, Vec<f64>)> {
        if rows.is_empty() {
            return Err(Error::Validation("loss over an empty row set".to_string()));
        }
        let (probs, hidden) = self.forward_cached(data, rows)?;
        let inv_n = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        let mut dlogits = Array2::<f64>::zeros((rows.len(), self.classes));
        for (ri, &i) in rows.iter().enumerate() {
            let y = data.labels[i];
            let p = probs[[ri, y]];
            loss -= p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP).ln() * inv_n;
            for j in 0..self.classes {
                let indicator = if j == y { 1.0 } else { 0.0 };
                dlogits[[ri, j]] = (probs[[ri, j]] - indicator) * inv_n;
            }
        }
        let grad = self.backprop(data, rows, &dlogits, hidden.as_ref());
        Ok((loss, grad))
    }

    /// Per-sample loss values (no gradient), used by the CVaR and
    /// group-reweighting solvers.
    pub fn per_sample_loss(&self, data: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
        let (probs, _) = self.forward_cached(data, rows)?;
        Ok(rows
            .iter()
            .enumerate()
            .map(|(ri, &i)| {
                -probs[[ri, data.labels[i]]]
                    .clamp(LOG_CLAMP, 1.0 - LOG_CLAMP)
                    .ln()
            })
            .collect())
    }

    /// Contract per-sample probability Jacobians with coefficients:
    /// returns sum over selected rows i and classes j of
    /// `coeffs[i][j] * grad_theta F_j(x_i)`.
    ///
    /// This is the exact vector-Jacobian product through the softmax:
    /// dz_l = F_l (c_l - <c, F>).
    pub fn prob_vjp(&self, data: &Dataset, rows: &[usize], coeffs: &Array2<f64>) -> Result<Vec<f64>> {
        if coeffs.nrows() != rows.len() || coeffs.ncols() != self.classes {
            return Err(Error::DimensionMismatch(format!(
                "coefficient matrix {}x{} does not match {} rows x {} classes",
                coeffs.nrows(),
                coeffs.ncols(),
                rows.len(),
                self.classes
            )));
        }
        let (probs, hidden) = self.forward_cached(data, rows)?;
        let m = self.classes;
        let mut dlogits = Array2::<f64>::zeros((rows.len(), m));
        for ri in 0..rows.len() {
            let mut dot = 0.0;
            for j in 0..m {
                dot += coeffs[[ri, j]] * probs[[ri, j]];
            }
            for l in 0..m {
                dlogits[[ri, l]] = probs[[ri, l]] * (coeffs[[ri, l]] - dot);
            }
        }
        Ok(self.backprop(data, rows, &dlogits, hidden.as_ref()))
    }

    /// Full per-(row, class) parameter gradients of the class
    /// probabilities. One (m x param_len) matrix per selected row;
    /// intended for oracle checks, `prob_vjp` is the efficient path.
    pub fn prob_jacobian(&self, data: &Dataset, rows: &[usize]) -> Result<Vec<Array2<f64>>> {
        let (probs, hidden) = self.forward_cached(data, rows)?;
        let m = self.classes;
        let mut out = Vec::with_capacity(rows.len());
        for (ri, &i) in rows.iter().enumerate() {
            let mut per_class = Array2::<f64>::zeros((m, self.theta.len()));
            for j in 0..m {
                // Softmax Jacobian row: dF_j/dz_l = F_j (delta_jl - F_l).
                let mut dlogits = Array2::<f64>::zeros((1, m));
                for l in 0..m {
                    let delta = if j == l { 1.0 } else { 0.0 };
                    dlogits[[0, l]] = probs[[ri, j]] * (delta - probs[[ri, l]]);
                }
                let hid_row = hidden.as_ref().map(|h| {
                    let mut one = Array2::<f64>::zeros((1, h.ncols()));
                    for c in 0..h.ncols() {
                        one[[0, c]] = h[[ri, c]];
                    }
                    one
                });
                let g = self.backprop(data, &[i], &dlogits, hid_row.as_ref());
                for (t, val) in g.into_iter().enumerate() {
                    per_class[[j, t]] = val;
                }
            }
            out.push(per_class);
        }
        Ok(out)
    }

    /// Push logit-space gradients back to the flat parameter vector.
    fn backprop(
        &self,
        data: &Dataset,
        rows: &[usize],
        dlogits: &Array2<f64>,
        hidden: Option<&Array2<f64>>,
    ) -> Vec<f64> {
        let d = self.input_dim;
        let m = self.classes;
        let mut grad = vec![0.0; self.theta.len()];
        match self.kind {
            ModelKind::Logistic => {
                let (gw, gb) = grad.split_at_mut(m * d);
                for (ri, &i) in rows.iter().enumerate() {
                    let x = data.features.row(i);
                    for j in 0..m {
                        let dz = dlogits[[ri, j]];
                        if dz == 0.0 {
                            continue;
                        }
                        let row = &mut gw[j * d..(j + 1) * d];
                        for t in 0..d {
                            row[t] += dz * x[t];
                        }
                        gb[j] += dz;
                    }
                }
            }
            ModelKind::Mlp1 { hidden: h } => {
                let acts = hidden.expect("mlp backprop needs cached activations");
                let off2 = h * d + h;
                let w2 = self.theta[off2..off2 + m * h].to_vec();
                for (ri, &i) in rows.iter().enumerate() {
                    let x = data.features.row(i);
                    let mut da = vec![0.0; h];
                    for j in 0..m {
                        let dz = dlogits[[ri, j]];
                        if dz == 0.0 {
                            continue;
                        }
                        for t in 0..h {
                            grad[off2 + j * h + t] += dz * acts[[ri, t]];
                            da[t] += dz * w2[j * h + t];
                        }
                        grad[off2 + m * h + j] += dz;
                    }
                    for t in 0..h {
                        let a = acts[[ri, t]];
                        let dpre = da[t] * (1.0 - a * a);
                        if dpre == 0.0 {
                            continue;
                        }
                        for c in 0..d {
                            grad[t * d + c] += dpre * x[c];
                        }
                        grad[h * d + t] += dpre;
                    }
                }
            }
        }
        grad
    }
}

/// Argmax per row with ties broken toward the smallest class index.
pub fn hard_labels(probs: &Array2<f64>) -> Vec<usize> {
    (0..probs.nrows())
        .map(|i| {
            let mut best = 0usize;
            let mut best_p = probs[[i, 0]];
            for j in 1..probs.ncols() {
                if probs[[i, j]] > best_p {
                    best_p = probs[[i, j]];
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Fraction of rows where the hard prediction matches the label.
pub fn accuracy(hard: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(hard.len(), labels.len());
    let hits = hard.iter().zip(labels).filter(|(&h, &y)| h == y).count();
    hits as f64 / hard.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::{finite_diff_grad, rel_error};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.5..1.5));
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let mut sensitive: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        sensitive[0] = 0;
        sensitive[1] = 1;
        Dataset::new(features, labels, sensitive, 2, 2).unwrap()
    }

    fn random_params(model: &mut ModelParams, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for slot in model.theta.iter_mut() {
            *slot = rng.gen_range(-1.0..1.0);
        }
    }

    #[test]
    fn zero_weights_predict_uniform() {
        let data = toy_dataset(6, 3, 1);
        let model = ModelParams::logistic(3, 2);
        let out = model.forward(&data).unwrap();
        for i in 0..6 {
            assert!((out.probs[[i, 0]] - 0.5).abs() < 1e-15);
            assert!((out.probs[[i, 1]] - 0.5).abs() < 1e-15);
            assert_eq!(out.hard[i], 0, "tie must break to the smallest class");
        }
    }

    #[test]
    fn bias_dominates_when_weights_are_zero() {
        let data = toy_dataset(4, 2, 2);
        let mut model = ModelParams::logistic(2, 2);
        model.theta[4] = 0.0;
        model.theta[5] = 10.0;
        let out = model.forward(&data).unwrap();
        for i in 0..4 {
            assert!((out.probs[[i, 1]] - 0.9999546021312976).abs() < 1e-12);
            assert!((out.probs[[i, 0]] - 4.5397868702434395e-5).abs() < 1e-15);
            assert_eq!(out.hard[i], 1);
        }
    }

    #[test]
    fn two_point_logit_margin_matches_logistic_closed_form() {
        // One feature x = 1, weights give class 1 a +2 logit margin.
        let features = Array2::from_shape_vec((2, 1), vec![1.0, 1.0]).unwrap();
        let data = Dataset::new(features, vec![0, 1], vec![0, 1], 2, 2).unwrap();
        let mut model = ModelParams::logistic(1, 2);
        model.theta[0] = 0.0; // w for class 0
        model.theta[1] = 2.0; // w for class 1
        let out = model.forward(&data).unwrap();
        let expect = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((out.probs[[0, 1]] - expect).abs() < 1e-12);
        assert!((expect - 0.8807970779778823).abs() < 1e-15);
    }

    #[test]
    fn uniform_predictor_loss_is_ln_two() {
        let data = toy_dataset(10, 3, 3);
        let model = ModelParams::logistic(3, 2);
        let rows: Vec<usize> = (0..data.n()).collect();
        let (loss, grad) = model.loss_and_grad(&data, &rows).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        // Bias-block gradient is mean(p - onehot).
        let ones = data.labels.iter().filter(|&&y| y == 1).count() as f64;
        let mean1 = 0.5 - ones / data.n() as f64;
        let bias = &grad[3 * 2..];
        assert!((bias[1] - mean1).abs() < 1e-12);
        assert!((bias[0] + mean1).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_predictor_has_vanishing_loss_and_grad() {
        let features = Array2::from_shape_vec((2, 1), vec![1.0, -1.0]).unwrap();
        let data = Dataset::new(features, vec![1, 0], vec![0, 1], 2, 2).unwrap();
        let mut model = ModelParams::logistic(1, 2);
        model.theta[0] = -20.0;
        model.theta[1] = 20.0;
        let (loss, grad) = model.loss_and_grad(&data, &[0, 1]).unwrap();
        assert!(loss < 1e-12);
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn loss_grad_matches_finite_differences_logistic() {
        let data = toy_dataset(20, 4, 5);
        let mut model = ModelParams::logistic(4, 2);
        random_params(&mut model, 7);
        let rows: Vec<usize> = (0..data.n()).collect();
        let (_, grad) = model.loss_and_grad(&data, &rows).unwrap();
        let probe = model.clone();
        let fd = finite_diff_grad(
            |theta| {
                let mut p = probe.clone();
                p.theta = theta.to_vec();
                p.loss_and_grad(&data, &rows).unwrap().0
            },
            &model.theta,
            1e-6,
        );
        assert!(rel_error(&grad, &fd) < 1e-5, "rel {}", rel_error(&grad, &fd));
    }

    #[test]
    fn loss_grad_matches_finite_differences_mlp() {
        let data = toy_dataset(15, 3, 11);
        let model = ModelParams::mlp1(3, 2, 5, 13);
        let rows: Vec<usize> = (0..data.n()).collect();
        let (_, grad) = model.loss_and_grad(&data, &rows).unwrap();
        let probe = model.clone();
        let fd = finite_diff_grad(
            |theta| {
                let mut p = probe.clone();
                p.theta = theta.to_vec();
                p.loss_and_grad(&data, &rows).unwrap().0
            },
            &model.theta,
            1e-6,
        );
        assert!(rel_error(&grad, &fd) < 1e-5, "rel {}", rel_error(&grad, &fd));
    }

    #[test]
    fn jacobian_at_symmetric_point_matches_quarter() {
        let data = toy_dataset(3, 2, 17);
        let model = ModelParams::logistic(2, 2);
        let jac = model.prob_jacobian(&data, &[0, 1, 2]).unwrap();
        // dF_1/db_1 = F_1 (1 - F_1) = 0.25 at the uniform point.
        for per_row in &jac {
            assert!((per_row[[1, 5]] - 0.25).abs() < 1e-12);
            assert!((per_row[[1, 4]] + 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_rows_sum_to_zero() {
        let data = toy_dataset(6, 3, 19);
        let mut model = ModelParams::logistic(3, 2);
        random_params(&mut model, 23);
        let jac = model.prob_jacobian(&data, &[0, 2, 4]).unwrap();
        for per_row in &jac {
            for t in 0..model.len() {
                let total: f64 = (0..2).map(|j| per_row[[j, t]]).sum();
                assert!(total.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let data = toy_dataset(5, 3, 29);
        let mut model = ModelParams::logistic(3, 2);
        random_params(&mut model, 31);
        let jac = model.prob_jacobian(&data, &[1, 3]).unwrap();
        for (ji, &row) in [1usize, 3].iter().enumerate() {
            for class in 0..2 {
                let probe = model.clone();
                let fd = finite_diff_grad(
                    |theta| {
                        let mut p = probe.clone();
                        p.theta = theta.to_vec();
                        p.forward_rows(&data, &[row]).unwrap()[[0, class]]
                    },
                    &model.theta,
                    1e-6,
                );
                let analytic: Vec<f64> = (0..model.len()).map(|t| jac[ji][[class, t]]).collect();
                assert!(rel_error(&analytic, &fd) < 1e-5);
            }
        }
    }

    #[test]
    fn vjp_equals_jacobian_contraction() {
        let data = toy_dataset(8, 3, 37);
        for model in [
            {
                let mut m = ModelParams::logistic(3, 2);
                random_params(&mut m, 41);
                m
            },
            ModelParams::mlp1(3, 2, 4, 43),
        ] {
            let rows: Vec<usize> = (0..8).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(47);
            let coeffs = Array2::from_shape_fn((8, 2), |_| rng.gen_range(-1.0..1.0));
            let vjp = model.prob_vjp(&data, &rows, &coeffs).unwrap();
            let jac = model.prob_jacobian(&data, &rows).unwrap();
            let mut expect = vec![0.0; model.len()];
            for ri in 0..rows.len() {
                for j in 0..2 {
                    for t in 0..model.len() {
                        expect[t] += coeffs[[ri, j]] * jac[ri][[j, t]];
                    }
                }
            }
            assert!(rel_error(&expect, &vjp) < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let data = toy_dataset(4, 3, 53);
        let model = ModelParams::logistic(2, 2);
        assert!(matches!(
            model.forward(&data).unwrap_err(),
            Error::DimensionMismatch(_)
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn probabilities_are_row_stochastic(seed in 0u64..500, hidden in 0usize..5) {
                let data = toy_dataset(12, 3, seed);
                let model = if hidden == 0 {
                    let mut m = ModelParams::logistic(3, 2);
                    random_params(&mut m, seed ^ 0xabcd);
                    m
                } else {
                    ModelParams::mlp1(3, 2, hidden, seed)
                };
                let out = model.forward(&data).unwrap();
                for i in 0..data.n() {
                    let total: f64 = (0..2).map(|j| out.probs[[i, j]]).sum();
                    prop_assert!((total - 1.0).abs() < 1e-9);
                    for j in 0..2 {
                        let p = out.probs[[i, j]];
                        prop_assert!((0.0..=1.0).contains(&p));
                    }
                }
            }

            #[test]
            fn loss_is_nonnegative(seed in 0u64..500) {
                let data = toy_dataset(10, 3, seed);
                let mut model = ModelParams::logistic(3, 2);
                random_params(&mut model, seed.wrapping_mul(31));
                let rows: Vec<usize> = (0..data.n()).collect();
                let (loss, _) = model.loss_and_grad(&data, &rows).unwrap();
                prop_assert!(loss >= 0.0);
            }
        }
    }
}
