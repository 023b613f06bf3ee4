//! Dependence measures between a classifier's predictions and a sensitive
//! attribute, built on the normalized joint-probability matrix Q with
//! entries q[j][l] = P(yhat=j, s=l) / sqrt(P(yhat=j) P(s=l)).
//!
//! The exponential Renyi mutual information (`ermi`) is Tr(Q'Q); the
//! Hirschfeld-Gebelein-Renyi coefficient (`hgr`) is Q's second singular
//! value. Both equal their independence baselines (1 and 0) exactly when
//! predictions carry no information about the attribute. A variational
//! form of Tr(Q'Q) - 1 over an auxiliary matrix W yields per-sample
//! kernels (`psi_kernel`) whose mean recovers the full statistic, which is
//! what makes unbiased minibatch estimates possible.
//!
//! Gradients with respect to model parameters flow through one shared
//! chain (`q_chain_grad`): any objective with a known derivative against
//! Q's entries turns into per-sample probability coefficients and then a
//! vector-Jacobian product through the classifier. The sensitive marginal
//! is frozen at its empirical counts throughout.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Svd;
use crate::model::{ModelParams, PredictionBatch};

/// Consistency tolerance for ProbTriple marginal/mass invariants.
const TRIPLE_TOL: f64 = 1e-9;
/// Allowed drift of Q's top singular value from its pinned value 1.
const SIGMA_TOP_TOL: f64 = 1e-6;
/// Singular values this close are treated as tied (warning, deterministic pick).
const SIGMA_TIE_TOL: f64 = 1e-9;
/// Singular values at or below this are treated as zero.
const SIGMA_ZERO_TOL: f64 = 1e-12;

/// Whether probability estimates use soft class probabilities or one-hot
/// argmax predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbMode {
    Soft,
    Hard,
}

/// Empirical joint distribution of (prediction, sensitive attribute) with
/// its two marginals.
///
/// Invariants (checked by [`ProbTriple::validate`]): entries nonnegative,
/// total mass 1, `p_yhat` equals row sums and `p_s` equals column sums of
/// `p_joint`, all within 1e-9.
#[derive(Debug, Clone)]
pub struct ProbTriple {
    /// m x k joint mass: entry (j, l) is P(yhat=j, s=l).
    pub p_joint: Array2<f64>,
    /// Prediction marginal, length m.
    pub p_yhat: Array1<f64>,
    /// Sensitive marginal, length k.
    pub p_s: Array1<f64>,
}

impl ProbTriple {
    /// Builds a triple from a joint mass matrix, deriving both marginals
    /// as exact row/column sums.
    pub fn from_joint(p_joint: Array2<f64>) -> Result<ProbTriple> {
        if p_joint.nrows() == 0 || p_joint.ncols() == 0 {
            return Err(Error::Validation("joint matrix must be nonempty".to_string()));
        }
        let mut mass = 0.0;
        for &v in p_joint.iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!(
                    "joint mass entries must be finite and nonnegative, got {v}"
                )));
            }
            mass += v;
        }
        if (mass - 1.0).abs() > TRIPLE_TOL {
            return Err(Error::Validation(format!(
                "joint mass must total 1, got {mass}"
            )));
        }
        let p_yhat = Array1::from_iter((0..p_joint.nrows()).map(|j| p_joint.row(j).sum()));
        let p_s = Array1::from_iter((0..p_joint.ncols()).map(|l| p_joint.column(l).sum()));
        Ok(ProbTriple {
            p_joint,
            p_yhat,
            p_s,
        })
    }

    /// Prediction-class count m.
    pub fn m(&self) -> usize {
        self.p_joint.nrows()
    }

    /// Sensitive-level count k.
    pub fn k(&self) -> usize {
        self.p_joint.ncols()
    }

    /// Checks the marginal-consistency and mass invariants.
    pub fn validate(&self) -> Result<()> {
        if self.p_yhat.len() != self.m() || self.p_s.len() != self.k() {
            return Err(Error::DimensionMismatch(
                "marginal lengths do not match the joint matrix".to_string(),
            ));
        }
        let mut mass = 0.0;
        for &v in self.p_joint.iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(
                    "joint mass entries must be finite and nonnegative".to_string(),
                ));
            }
            mass += v;
        }
        if (mass - 1.0).abs() > TRIPLE_TOL {
            return Err(Error::Validation(format!(
                "joint mass must total 1, got {mass}"
            )));
        }
        for j in 0..self.m() {
            if (self.p_joint.row(j).sum() - self.p_yhat[j]).abs() > TRIPLE_TOL {
                return Err(Error::Validation(format!(
                    "p_yhat[{j}] does not match the joint row sum"
                )));
            }
        }
        for l in 0..self.k() {
            if (self.p_joint.column(l).sum() - self.p_s[l]).abs() > TRIPLE_TOL {
                return Err(Error::Validation(format!(
                    "p_s[{l}] does not match the joint column sum"
                )));
            }
        }
        Ok(())
    }

    /// Restriction to prediction classes with positive mass. Zero-mass
    /// classes carry no probability, so every dependence measure is
    /// unchanged; this makes hard-prediction triples usable even when the
    /// classifier never emits some class.
    pub fn observed(&self) -> ProbTriple {
        let keep: Vec<usize> = (0..self.m()).filter(|&j| self.p_yhat[j] > 0.0).collect();
        let mut p_joint = Array2::<f64>::zeros((keep.len(), self.k()));
        let mut p_yhat = Array1::<f64>::zeros(keep.len());
        for (row, &j) in keep.iter().enumerate() {
            p_yhat[row] = self.p_yhat[j];
            for l in 0..self.k() {
                p_joint[[row, l]] = self.p_joint[[j, l]];
            }
        }
        ProbTriple {
            p_joint,
            p_yhat,
            p_s: self.p_s.clone(),
        }
    }
}

/// Estimates the (prediction, sensitive) probability triple from a batch.
///
/// Soft mode averages class probabilities; hard mode counts argmax
/// predictions. The sensitive marginal always comes from level counts.
pub fn estimate_probs(
    batch: &PredictionBatch,
    sensitive: &[usize],
    k: usize,
    mode: ProbMode,
) -> Result<ProbTriple> {
    let n = batch.probs.nrows();
    let m = batch.probs.ncols();
    if n == 0 {
        return Err(Error::Validation("empty prediction batch".to_string()));
    }
    if sensitive.len() != n || batch.hard.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} prediction rows but {} sensitive codes",
            sensitive.len()
        )));
    }
    let mut counts = vec![0usize; k];
    for &s in sensitive {
        if s >= k {
            return Err(Error::Validation(format!(
                "sensitive code {s} out of range for {k} levels"
            )));
        }
        counts[s] += 1;
    }
    if let Some(l) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Degenerate(format!(
            "sensitive level {l} has zero mass in this batch"
        )));
    }
    let inv_n = 1.0 / n as f64;
    let mut p_joint = Array2::<f64>::zeros((m, k));
    match mode {
        ProbMode::Soft => {
            for i in 0..n {
                let l = sensitive[i];
                for j in 0..m {
                    p_joint[[j, l]] += batch.probs[[i, j]] * inv_n;
                }
            }
        }
        ProbMode::Hard => {
            for i in 0..n {
                p_joint[[batch.hard[i], sensitive[i]]] += inv_n;
            }
        }
    }
    let p_yhat = Array1::from_iter((0..m).map(|j| p_joint.row(j).sum()));
    let p_s = Array1::from_iter(counts.iter().map(|&c| c as f64 * inv_n));
    Ok(ProbTriple {
        p_joint,
        p_yhat,
        p_s,
    })
}

/// The normalized dependence matrix together with its cached SVD.
#[derive(Debug, Clone)]
pub struct QMatrix {
    pub q: Array2<f64>,
    svd: Svd,
}

impl QMatrix {
    pub fn svd(&self) -> &Svd {
        &self.svd
    }

    /// Singular values, descending.
    pub fn sigma(&self) -> &Array1<f64> {
        &self.svd.sigma
    }
}

/// Builds Q from a probability triple and computes its SVD.
///
/// Requires strictly positive marginals; the top singular value of any Q
/// built from a consistent triple is pinned at 1 and is verified here.
pub fn build_q(pt: &ProbTriple) -> Result<QMatrix> {
    for j in 0..pt.m() {
        if pt.p_yhat[j] <= 0.0 {
            return Err(Error::Degenerate(format!(
                "prediction class {j} has zero marginal mass"
            )));
        }
    }
    for l in 0..pt.k() {
        if pt.p_s[l] <= 0.0 {
            return Err(Error::Degenerate(format!(
                "sensitive level {l} has zero marginal mass"
            )));
        }
    }
    let q = Array2::from_shape_fn((pt.m(), pt.k()), |(j, l)| {
        pt.p_joint[[j, l]] / (pt.p_yhat[j] * pt.p_s[l]).sqrt()
    });
    let svd = Svd::compute(&q)?;
    let sigma1 = svd.sigma[0];
    if (sigma1 - 1.0).abs() > SIGMA_TOP_TOL {
        return Err(Error::Degenerate(format!(
            "top singular value {sigma1} deviates from its pinned value 1; \
             the probability triple is inconsistent"
        )));
    }
    Ok(QMatrix { q, svd })
}

/// Exponential Renyi mutual information: Tr(Q'Q) = sum of squared entries
/// of Q. Always >= 1, with equality exactly at independence.
pub fn ermi(qm: &QMatrix) -> f64 {
    qm.q.iter().map(|v| v * v).sum()
}

/// Hirschfeld-Gebelein-Renyi coefficient: Q's second singular value, in
/// [0, 1]. Zero exactly at independence.
pub fn hgr(qm: &QMatrix) -> f64 {
    if qm.svd.sigma.len() > 1 {
        qm.svd.sigma[1]
    } else {
        0.0
    }
}

/// Closed-form maximizer of the variational dependence objective:
/// w[l][j] = p_joint[j][l] / (sqrt(p_s[l]) p_yhat[j]), shape k x m.
pub fn optimal_w(pt: &ProbTriple) -> Result<Array2<f64>> {
    for j in 0..pt.m() {
        if pt.p_yhat[j] <= 0.0 {
            return Err(Error::Degenerate(format!(
                "prediction class {j} has zero marginal mass"
            )));
        }
    }
    for l in 0..pt.k() {
        if pt.p_s[l] <= 0.0 {
            return Err(Error::Degenerate(format!(
                "sensitive level {l} has zero marginal mass"
            )));
        }
    }
    Ok(Array2::from_shape_fn((pt.k(), pt.m()), |(l, j)| {
        pt.p_joint[[j, l]] / (pt.p_s[l].sqrt() * pt.p_yhat[j])
    }))
}

/// Variational dependence objective at an arbitrary auxiliary matrix W
/// (k x m): -Tr(W diag(p_yhat) W') + 2 Tr(W p_joint diag(p_s)^{-1/2}) - 1.
///
/// Its maximum over W is Tr(Q'Q) - 1; note the -1 offset relative to
/// [`ermi`], kept because the quantity is the one whose per-sample kernels
/// average cleanly (see [`psi_kernel`]). Both conventions are exposed.
pub fn variational_value(pt: &ProbTriple, w: &Array2<f64>) -> Result<f64> {
    check_w_shape(pt, w)?;
    let mut quad = 0.0;
    let mut cross = 0.0;
    for l in 0..pt.k() {
        let root = pt.p_s[l].sqrt();
        if root <= 0.0 {
            return Err(Error::Degenerate(format!(
                "sensitive level {l} has zero marginal mass"
            )));
        }
        for j in 0..pt.m() {
            quad += w[[l, j]] * w[[l, j]] * pt.p_yhat[j];
            cross += w[[l, j]] * pt.p_joint[[j, l]] / root;
        }
    }
    Ok(-quad + 2.0 * cross - 1.0)
}

/// Gradient of [`variational_value`] in W: -2 W diag(p_yhat) + 2
/// diag(p_s)^{-1/2} p_joint'.
pub fn variational_grad_w(pt: &ProbTriple, w: &Array2<f64>) -> Result<Array2<f64>> {
    check_w_shape(pt, w)?;
    let mut grad = Array2::<f64>::zeros((pt.k(), pt.m()));
    for l in 0..pt.k() {
        let root = pt.p_s[l].sqrt();
        if root <= 0.0 {
            return Err(Error::Degenerate(format!(
                "sensitive level {l} has zero marginal mass"
            )));
        }
        for j in 0..pt.m() {
            grad[[l, j]] = -2.0 * w[[l, j]] * pt.p_yhat[j] + 2.0 * pt.p_joint[[j, l]] / root;
        }
    }
    Ok(grad)
}

/// Optimal value and maximizer of the variational objective. The value
/// equals `ermi(build_q(pt)) - 1` up to floating point.
pub fn variational_ermi(pt: &ProbTriple) -> Result<(f64, Array2<f64>)> {
    let w_star = optimal_w(pt)?;
    let value = variational_value(pt, &w_star)?;
    Ok((value, w_star))
}

fn check_w_shape(pt: &ProbTriple, w: &Array2<f64>) -> Result<()> {
    if w.nrows() != pt.k() || w.ncols() != pt.m() {
        return Err(Error::DimensionMismatch(format!(
            "auxiliary matrix is {}x{}, expected {}x{}",
            w.nrows(),
            w.ncols(),
            pt.k(),
            pt.m()
        )));
    }
    Ok(())
}

/// Per-sample dependence kernel for one observation: given the sample's
/// class probabilities, its sensitive level, the (frozen) sensitive
/// marginal, and an auxiliary matrix W (k x m),
///
/// psi = -sum_{a,j} w[a][j]^2 pr[j] + 2 sum_j w[s][j] pr[j] / sqrt(p_s[s]).
///
/// The dataset mean of psi equals `variational_value + 1`; at W = W* that
/// mean is exactly Tr(Q'Q). This is the quantity minibatch solvers
/// average, and what keeps their gradient estimates unbiased.
pub fn psi_kernel(probs_row: ArrayView1<f64>, s_i: usize, p_s: &Array1<f64>, w: &Array2<f64>) -> f64 {
    let k = w.nrows();
    let m = w.ncols();
    debug_assert_eq!(probs_row.len(), m);
    debug_assert!(s_i < k);
    let mut quad = 0.0;
    for a in 0..k {
        for j in 0..m {
            quad += w[[a, j]] * w[[a, j]] * probs_row[j];
        }
    }
    let root = p_s[s_i].sqrt();
    let mut cross = 0.0;
    for j in 0..m {
        cross += w[[s_i, j]] * probs_row[j];
    }
    -quad + 2.0 * cross / root
}

/// Gradient of [`psi_kernel`] in W for one sample:
/// d psi / d w[a][j] = -2 w[a][j] pr[j] + 2 [a = s] pr[j] / sqrt(p_s[a]).
pub fn psi_grad_w(
    probs_row: ArrayView1<f64>,
    s_i: usize,
    p_s: &Array1<f64>,
    w: &Array2<f64>,
) -> Array2<f64> {
    let k = w.nrows();
    let m = w.ncols();
    let root = p_s[s_i].sqrt();
    Array2::from_shape_fn((k, m), |(a, j)| {
        let mut g = -2.0 * w[[a, j]] * probs_row[j];
        if a == s_i {
            g += 2.0 * probs_row[j] / root;
        }
        g
    })
}

/// Derivative of [`psi_kernel`] against the sample's class probabilities:
/// d psi / d pr[j] = -sum_a w[a][j]^2 + 2 w[s][j] / sqrt(p_s[s]).
/// Linear in the probabilities, so this is exact and sample-independent
/// given the sensitive level.
pub fn psi_prob_coeffs(s_i: usize, p_s: &Array1<f64>, w: &Array2<f64>) -> Array1<f64> {
    let k = w.nrows();
    let m = w.ncols();
    let root = p_s[s_i].sqrt();
    Array1::from_shape_fn(m, |j| {
        let mut c = 2.0 * w[[s_i, j]] / root;
        for a in 0..k {
            c -= w[[a, j]] * w[[a, j]];
        }
        c
    })
}

/// Soft-probability state at the current parameters: forward pass,
/// probability triple, and Q with its SVD. Shared by every gradient that
/// chains through Q so a training step computes it once.
#[derive(Debug, Clone)]
pub struct QState {
    pub batch: PredictionBatch,
    pub triple: ProbTriple,
    pub qm: QMatrix,
}

/// Computes the soft-mode [`QState`] over the full dataset.
pub fn soft_q_state(params: &ModelParams, data: &Dataset) -> Result<QState> {
    let batch = params.forward(data)?;
    let triple = estimate_probs(&batch, &data.sensitive, data.k, ProbMode::Soft)?;
    let qm = build_q(&triple)?;
    Ok(QState { batch, triple, qm })
}

/// Chains an objective's derivative against Q's entries down to model
/// parameters.
///
/// With g_q[j][l] = d objective / d q[j][l], the per-sample probability
/// coefficient is
///
///   c[i][j] = (1/n) (g_q[j][s_i] / sqrt(p_yhat[j] p_s[s_i])
///             - sum_l g_q[j][l] q[j][l] / (2 p_yhat[j]))
///
/// (quotient rule: the joint cell grows with F_j when s matches, while the
/// prediction marginal in the denominator grows with F_j always; the
/// sensitive marginal is frozen at its counts). The result is the exact
/// parameter gradient, contracted through the classifier.
pub fn q_chain_grad(
    params: &ModelParams,
    data: &Dataset,
    state: &QState,
    g_q: &Array2<f64>,
) -> Result<Vec<f64>> {
    let m = state.triple.m();
    let k = state.triple.k();
    if g_q.nrows() != m || g_q.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "objective derivative is {}x{}, expected {m}x{k}",
            g_q.nrows(),
            g_q.ncols()
        )));
    }
    let n = data.n();
    let inv_n = 1.0 / n as f64;
    // Per-class marginal pressure: how much the objective moves when class
    // j's total mass grows, independent of which sensitive cell grew.
    let mut rowdot = vec![0.0; m];
    for j in 0..m {
        for l in 0..k {
            rowdot[j] += g_q[[j, l]] * state.qm.q[[j, l]];
        }
    }
    let mut coeffs = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        let l = data.sensitive[i];
        for j in 0..m {
            let joint = g_q[[j, l]] / (state.triple.p_yhat[j] * state.triple.p_s[l]).sqrt();
            let marginal = rowdot[j] / (2.0 * state.triple.p_yhat[j]);
            coeffs[[i, j]] = (joint - marginal) * inv_n;
        }
    }
    let rows: Vec<usize> = (0..n).collect();
    params.prob_vjp(data, &rows, &coeffs)
}

/// Parameter gradient of [`ermi`] at the given state (derivative against
/// Q is 2Q).
pub fn ermi_grad_at(params: &ModelParams, data: &Dataset, state: &QState) -> Result<Vec<f64>> {
    let g_q = state.qm.q.mapv(|v| 2.0 * v);
    q_chain_grad(params, data, state, &g_q)
}

/// Parameter gradient of the soft-probability ERMI, Tr(Q'Q).
pub fn ermi_grad(params: &ModelParams, data: &Dataset) -> Result<Vec<f64>> {
    let state = soft_q_state(params, data)?;
    ermi_grad_at(params, data, &state)
}

/// Second right singular vector of Q, the fixed direction used by the
/// dependence-coefficient gradient. Errors at independence (the second
/// singular value is zero there, a kink); near-ties with neighboring
/// singular values are resolved deterministically and logged.
pub fn second_right_vector(qm: &QMatrix) -> Result<Array1<f64>> {
    let sigma = &qm.svd.sigma;
    if sigma.len() < 2 || sigma[1] <= SIGMA_ZERO_TOL {
        return Err(Error::NotDifferentiable(
            "second singular value is zero; the dependence surface has a kink at independence"
                .to_string(),
        ));
    }
    let tied_above = (sigma[0] - sigma[1]).abs() < SIGMA_TIE_TOL;
    let tied_below = sigma.len() > 2 && (sigma[1] - sigma[2]).abs() < SIGMA_TIE_TOL;
    if tied_above || tied_below {
        log::warn!(
            "second singular value {} is tied with a neighbor; using the first vector in sort order",
            sigma[1]
        );
    }
    Ok(qm.svd.v.column(1).to_owned())
}

/// Parameter gradient of sqrt(v' Q'Q v) with the direction v held fixed.
///
/// With v frozen this is g(Q) = |Qv|, whose derivative against Q is the
/// outer product (Qv) v' / |Qv|; passing the second right singular vector
/// makes the value the second singular value and the gradient its
/// fixed-direction (Danskin) gradient.
pub fn sigma2_grad_at(
    params: &ModelParams,
    data: &Dataset,
    state: &QState,
    v: &Array1<f64>,
) -> Result<Vec<f64>> {
    let m = state.triple.m();
    let k = state.triple.k();
    if v.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "direction has length {}, expected {k}",
            v.len()
        )));
    }
    let mut qv = vec![0.0; m];
    for j in 0..m {
        for l in 0..k {
            qv[j] += state.qm.q[[j, l]] * v[l];
        }
    }
    let norm = qv.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= SIGMA_ZERO_TOL {
        return Err(Error::NotDifferentiable(
            "v'Q'Qv is zero; the singular-value surface is not differentiable here".to_string(),
        ));
    }
    let g_q = Array2::from_shape_fn((m, k), |(j, l)| qv[j] * v[l] / norm);
    q_chain_grad(params, data, state, &g_q)
}

/// Parameter gradient of sqrt(v' Q'Q v) at the current parameters with v
/// fixed.
pub fn sigma2_grad(params: &ModelParams, data: &Dataset, v: &Array1<f64>) -> Result<Vec<f64>> {
    let state = soft_q_state(params, data)?;
    sigma2_grad_at(params, data, &state, v)
}

/// Parameter gradient of the sum of Q's singular values, holding the
/// singular vectors fixed (Danskin-style subgradient): the derivative
/// against Q is the sum of outer products u_i v_i' over positive singular
/// values.
pub fn nuclear_grad_at(params: &ModelParams, data: &Dataset, state: &QState) -> Result<Vec<f64>> {
    let m = state.triple.m();
    let k = state.triple.k();
    let svd = state.qm.svd();
    let mut g_q = Array2::<f64>::zeros((m, k));
    for (idx, &s) in svd.sigma.iter().enumerate() {
        if s <= SIGMA_ZERO_TOL {
            continue;
        }
        for j in 0..m {
            for l in 0..k {
                g_q[[j, l]] += svd.u[[j, idx]] * svd.v[[l, idx]];
            }
        }
    }
    q_chain_grad(params, data, state, &g_q)
}

/// Group-fairness summary computed from hard predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    /// Demographic parity violation: widest gap in P(yhat=1 | s=l) across
    /// sensitive levels.
    pub dpv: f64,
    /// Equality of opportunity violation: the same gap restricted to
    /// positive-label rows; None when some level has no positive rows.
    pub eov: Option<f64>,
    /// Exponential Renyi mutual information of the hard predictions.
    pub ermi: f64,
    /// HGR coefficient of the hard predictions.
    pub hgr: f64,
}

/// Computes the fairness report from hard predictions.
///
/// Demographic parity and opportunity gaps require binary predictions
/// (m = 2); any number of sensitive levels is allowed and the gap is the
/// max-minus-min positive rate. ERMI/HGR come from the hard-prediction
/// probability triple restricted to observed classes.
pub fn metrics(
    batch: &PredictionBatch,
    labels: &[usize],
    sensitive: &[usize],
    k: usize,
) -> Result<FairnessReport> {
    let n = batch.hard.len();
    let m = batch.probs.ncols();
    if n == 0 {
        return Err(Error::Validation("empty prediction batch".to_string()));
    }
    if labels.len() != n || sensitive.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} predictions but {} labels and {} sensitive codes",
            labels.len(),
            sensitive.len()
        )));
    }
    if m != 2 {
        return Err(Error::Validation(format!(
            "parity gaps require binary predictions, model has {m} classes"
        )));
    }
    let mut count = vec![0usize; k];
    let mut pos = vec![0usize; k];
    let mut pos_label = vec![0usize; k];
    let mut pos_both = vec![0usize; k];
    for i in 0..n {
        let l = sensitive[i];
        if l >= k {
            return Err(Error::Validation(format!(
                "sensitive code {l} out of range for {k} levels"
            )));
        }
        if labels[i] > 1 {
            return Err(Error::Validation(
                "labels must be binary for opportunity gaps".to_string(),
            ));
        }
        count[l] += 1;
        if batch.hard[i] == 1 {
            pos[l] += 1;
        }
        if labels[i] == 1 {
            pos_label[l] += 1;
            if batch.hard[i] == 1 {
                pos_both[l] += 1;
            }
        }
    }
    if let Some(l) = count.iter().position(|&c| c == 0) {
        return Err(Error::Degenerate(format!(
            "sensitive level {l} has zero mass in this batch"
        )));
    }
    let rates: Vec<f64> = (0..k).map(|l| pos[l] as f64 / count[l] as f64).collect();
    let dpv = gap(&rates);
    let eov = if pos_label.iter().all(|&c| c > 0) {
        let cond: Vec<f64> = (0..k)
            .map(|l| pos_both[l] as f64 / pos_label[l] as f64)
            .collect();
        Some(gap(&cond))
    } else {
        None
    };
    let triple = estimate_probs(batch, sensitive, k, ProbMode::Hard)?.observed();
    let qm = build_q(&triple)?;
    Ok(FairnessReport {
        dpv,
        eov,
        ermi: ermi(&qm),
        hgr: hgr(&qm),
    })
}

fn gap(rates: &[f64]) -> f64 {
    let max = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}
