//! Training loops: deterministic full-gradient descent on the robust
//! fairness objective, a stochastic gradient-descent-ascent solver for
//! the l2 ball built on the per-sample kernel reformulation, a
//! conditional-value-at-risk variant that reweights toward the hardest
//! samples, and a group-reweighting variant that plays a multiplicative
//! game over sensitive groups.
//!
//! Shared conventions: the objective reported in traces always includes
//! the constant radius terms so runs with different balls stay
//! comparable; gradients never include constants. Setting lambda = 0
//! removes the fairness terms from the update entirely, and epsilon = 0
//! collapses every robust path onto the plain dependence gradient, so
//! both reductions reproduce their simpler counterparts step for step.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fairness::{
    build_q, ermi, ermi_grad_at, estimate_probs, hgr, metrics, optimal_w, psi_grad_w,
    psi_kernel, psi_prob_coeffs, soft_q_state, variational_value, ProbMode, QState,
};
use crate::model::ModelParams;
use crate::robust::{robust_grad_at, robust_value, BallNorm, RobustSpec};

/// Lower clamp for the scalar dual variable in the SGDA solver.
pub const ALPHA_MIN: f64 = 1e-3;
/// Floor applied to marginals inside the auxiliary-matrix projection radius.
const MARGINAL_FLOOR: f64 = 1e-6;
/// Maximum step halvings per iteration in safeguarded mode.
const MAX_BACKTRACKS: u32 = 60;
/// Consecutive lower-clamp hits before the SGDA solver warns about alpha.
const ALPHA_WARN_AFTER: u32 = 5;

/// Which training loop to run. The three deterministic variants differ
/// only in the uncertainty ball they pair with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    DetL1,
    DetL2,
    DetLinf,
    SgdaL2,
    Cvar,
    GroupDro,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::DetL1 => "det_l1",
            SolverKind::DetL2 => "det_l2",
            SolverKind::DetLinf => "det_linf",
            SolverKind::SgdaL2 => "sgda_l2",
            SolverKind::Cvar => "cvar",
            SolverKind::GroupDro => "group_dro",
        }
    }

    /// The ball norm a deterministic or SGDA variant is committed to.
    fn required_norm(&self) -> Option<BallNorm> {
        match self {
            SolverKind::DetL1 => Some(BallNorm::L1),
            SolverKind::DetL2 | SolverKind::SgdaL2 => Some(BallNorm::L2),
            SolverKind::DetLinf => Some(BallNorm::Linf),
            SolverKind::Cvar | SolverKind::GroupDro => None,
        }
    }
}

/// Full description of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub solver: SolverKind,
    /// Fairness weight; 0 removes the fairness terms entirely.
    pub lambda: f64,
    /// Uncertainty ball for the fairness regularizer.
    pub robust: RobustSpec,
    pub step_size: f64,
    pub iterations: usize,
    /// Minibatch size (SGDA solver only).
    pub batch_size: usize,
    /// Tail fraction for the CVaR solver, in (0, 1]; 1 recovers the mean.
    pub cvar_level: f64,
    /// Multiplicative-weights step for the group solver.
    pub group_step: f64,
    pub seed: u64,
    /// Halve the step until the objective stops increasing (deterministic
    /// solvers). Off by default: the plain fixed-step schedule, where any
    /// objective increase is logged but accepted.
    pub safeguard: bool,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            solver: SolverKind::DetL2,
            lambda: 0.0,
            robust: RobustSpec {
                norm: BallNorm::L2,
                epsilon: 0.0,
            },
            step_size: 1e-5,
            iterations: 3000,
            batch_size: 64,
            cvar_level: 0.9,
            group_step: 0.01,
            seed: 0,
            safeguard: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Validation(format!(
                "fairness weight must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        self.robust.validate()?;
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::Validation(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Validation("iteration count must be at least 1".to_string()));
        }
        if let Some(norm) = self.solver.required_norm() {
            if self.robust.norm != norm {
                return Err(Error::Validation(format!(
                    "solver {} requires the {} ball, got {}",
                    self.solver.as_str(),
                    norm.as_str(),
                    self.robust.norm.as_str()
                )));
            }
        }
        match self.solver {
            SolverKind::SgdaL2 => {
                if self.batch_size == 0 || self.batch_size > data.n() {
                    return Err(Error::Validation(format!(
                        "batch size must be in 1..={}, got {}",
                        data.n(),
                        self.batch_size
                    )));
                }
            }
            SolverKind::Cvar => {
                if !(self.cvar_level > 0.0 && self.cvar_level <= 1.0) {
                    return Err(Error::Validation(format!(
                        "tail level must be in (0, 1], got {}",
                        self.cvar_level
                    )));
                }
            }
            SolverKind::GroupDro => {
                if !(self.group_step.is_finite() && self.group_step > 0.0) {
                    return Err(Error::Validation(format!(
                        "group step must be positive, got {}",
                        self.group_step
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// One logged iteration. Solver-specific fields are None where they do
/// not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Solver objective, including constant radius terms.
    pub objective: f64,
    /// Mean cross-entropy on the training split.
    pub loss: f64,
    /// Soft-probability dependence measure Tr(Q'Q).
    pub fairness: f64,
    /// Worst-case dependence over the configured ball.
    pub robust: f64,
    /// Same quantity under the alternative l1 bookkeeping that weights
    /// the second singular value by epsilon instead of 2 epsilon; equals
    /// `robust` for the other balls.
    pub robust_alt: f64,
    /// Demographic parity violation on hard train predictions (binary
    /// classification only).
    pub dpv: Option<f64>,
    /// Opportunity gap on hard train predictions, when defined.
    pub eov: Option<f64>,
    /// Hard-prediction dependence measure.
    pub ermi_hard: f64,
    /// Hard-prediction second-singular-value coefficient.
    pub hgr_hard: f64,
    /// Euclidean norm of the parameter direction used at this iteration.
    pub grad_norm: f64,
    /// SGDA dual scalar.
    pub alpha: Option<f64>,
    /// Frobenius norm of the auxiliary matrix (SGDA's iterate, or the
    /// closed-form maximizer for the other solvers when lambda > 0).
    pub w_norm: Option<f64>,
    /// CVaR threshold.
    pub threshold: Option<f64>,
    /// Group weights (group solver).
    pub group_weights: Option<Vec<f64>>,
}

/// Logged history of a run. Records are kept every `log_every`
/// iterations (first iteration always, final iteration always).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub log_every: usize,
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    fn new(iterations: usize) -> TrainTrace {
        TrainTrace {
            log_every: (iterations / 200).max(1),
            records: Vec::new(),
        }
    }

    fn should_log(&self, iteration: usize, total: usize) -> bool {
        (iteration - 1) % self.log_every == 0 || iteration == total
    }
}

/// Dispatches to the solver named by the config.
pub fn train(data: &Dataset, model: &ModelParams, cfg: &TrainConfig) -> Result<(ModelParams, TrainTrace)> {
    match cfg.solver {
        SolverKind::DetL1 | SolverKind::DetL2 | SolverKind::DetLinf => {
            train_deterministic(data, model, cfg)
        }
        SolverKind::SgdaL2 => train_sgda(data, model, cfg),
        SolverKind::Cvar => train_cvar(data, model, cfg),
        SolverKind::GroupDro => train_group_dro(data, model, cfg),
    }
}

/// The scalar identity behind the l2-ball reformulation: for z > 0,
/// sqrt(z) = min over alpha > 0 of (z alpha + 1/alpha) / 2, attained at
/// alpha = 1/sqrt(z). Returns (minimizer, value).
pub fn sqrt_min_identity(z: f64) -> Result<(f64, f64)> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::Validation(format!(
            "the square-root identity needs a positive argument, got {z}"
        )));
    }
    let root = z.sqrt();
    Ok((1.0 / root, root))
}

/// Minibatch schedule used by the SGDA solver: epoch-shuffled contiguous
/// chunks, tail chunk included, reshuffled each pass. Exposed so
/// reference loops can replay the exact same batches.
pub fn batch_schedule(n: usize, batch_size: usize, iterations: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut pos = n;
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        if pos >= n {
            order.shuffle(&mut rng);
            pos = 0;
        }
        let end = (pos + batch_size).min(n);
        out.push(order[pos..end].to_vec());
        pos = end;
    }
    out
}

/// Multiplicative-weights step for the group solver: each weight is
/// scaled by exp(step * group loss) and the vector renormalized. The
/// largest loss is subtracted inside the exponent for stability, which
/// cancels in the normalization.
pub fn group_weight_update(weights: &mut [f64], losses: &[f64], step: f64) {
    debug_assert_eq!(weights.len(), losses.len());
    let max_loss = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (w, &l) in weights.iter_mut().zip(losses) {
        *w *= (step * (l - max_loss)).exp();
        total += *w;
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
}

fn all_rows(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn frobenius(w: &Array2<f64>) -> f64 {
    w.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn apply_step(model: &ModelParams, grad: &[f64], step: f64) -> ModelParams {
    let mut next = model.clone();
    for (slot, g) in next.theta.iter_mut().zip(grad) {
        *slot -= step * g;
    }
    next
}

fn ensure_finite_params(model: &ModelParams, iteration: usize) -> Result<()> {
    if model.theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            iteration,
            message: "parameters became non-finite".to_string(),
        });
    }
    Ok(())
}

fn ensure_finite_objective(objective: f64, iteration: usize) -> Result<()> {
    if !objective.is_finite() {
        return Err(Error::Divergence {
            iteration,
            message: format!("objective became non-finite ({objective})"),
        });
    }
    Ok(())
}

/// The l1 bookkeeping variant that weights the second singular value by
/// epsilon instead of 2 epsilon; identical to `robust_value` elsewhere.
fn robust_value_alt(state: &QState, spec: &RobustSpec) -> f64 {
    match spec.norm {
        BallNorm::L1 => {
            let sigma = state.qm.sigma();
            let sigma2 = if sigma.len() > 1 { sigma[1] } else { 0.0 };
            ermi(&state.qm) + spec.epsilon * sigma2 + spec.epsilon * spec.epsilon
        }
        _ => robust_value(&state.qm, spec),
    }
}

/// Robust fairness gradient with the solver-side convention for the l1
/// kink: at exact independence the second singular value sits at its
/// minimum, so zero is a valid subgradient for its term and the plain
/// dependence gradient is used (with a log note) instead of failing.
fn fairness_direction(
    params: &ModelParams,
    data: &Dataset,
    state: &QState,
    spec: &RobustSpec,
    iteration: usize,
) -> Result<Vec<f64>> {
    match robust_grad_at(params, data, state, spec) {
        Ok(g) => Ok(g),
        Err(Error::NotDifferentiable(_)) if spec.norm == BallNorm::L1 => {
            log::warn!(
                "second singular value is zero at iteration {iteration}; \
                 stepping with the plain dependence gradient"
            );
            ermi_grad_at(params, data, state)
        }
        Err(e) => Err(e),
    }
}

struct HardSummary {
    dpv: Option<f64>,
    eov: Option<f64>,
    ermi: f64,
    hgr: f64,
}

fn hard_summary(state: &QState, data: &Dataset) -> Result<HardSummary> {
    if state.batch.probs.ncols() == 2 {
        let report = metrics(&state.batch, &data.labels, &data.sensitive, data.k)?;
        Ok(HardSummary {
            dpv: Some(report.dpv),
            eov: report.eov,
            ermi: report.ermi,
            hgr: report.hgr,
        })
    } else {
        let pt = estimate_probs(&state.batch, &data.sensitive, data.k, ProbMode::Hard)?.observed();
        let qm = build_q(&pt)?;
        Ok(HardSummary {
            dpv: None,
            eov: None,
            ermi: ermi(&qm),
            hgr: hgr(&qm),
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn push_record(
    trace: &mut TrainTrace,
    data: &Dataset,
    cfg: &TrainConfig,
    iteration: usize,
    state: &QState,
    loss: f64,
    objective: f64,
    grad_norm: f64,
    alpha: Option<f64>,
    w_norm: Option<f64>,
    threshold: Option<f64>,
    group_weights: Option<Vec<f64>>,
) -> Result<()> {
    let hard = hard_summary(state, data)?;
    let w_norm = w_norm.or(if cfg.lambda > 0.0 {
        Some(frobenius(&optimal_w(&state.triple)?))
    } else {
        None
    });
    trace.records.push(TraceRecord {
        iteration,
        objective,
        loss,
        fairness: ermi(&state.qm),
        robust: robust_value(&state.qm, &cfg.robust),
        robust_alt: robust_value_alt(state, &cfg.robust),
        dpv: hard.dpv,
        eov: hard.eov,
        ermi_hard: hard.ermi,
        hgr_hard: hard.hgr,
        grad_norm,
        alpha,
        w_norm,
        threshold,
        group_weights,
    });
    Ok(())
}

struct DetEval {
    loss: f64,
    objective: f64,
    grad: Vec<f64>,
    state: Option<QState>,
}

fn det_eval(params: &ModelParams, data: &Dataset, cfg: &TrainConfig, iteration: usize) -> Result<DetEval> {
    let rows = all_rows(data.n());
    let (loss, grad_loss) = params.loss_and_grad(data, &rows)?;
    if cfg.lambda == 0.0 {
        return Ok(DetEval {
            loss,
            objective: loss,
            grad: grad_loss,
            state: None,
        });
    }
    let state = soft_q_state(params, data)?;
    let fair_grad = fairness_direction(params, data, &state, &cfg.robust, iteration)?;
    let grad: Vec<f64> = grad_loss
        .iter()
        .zip(&fair_grad)
        .map(|(l, f)| l + cfg.lambda * f)
        .collect();
    let objective = loss + cfg.lambda * robust_value(&state.qm, &cfg.robust);
    Ok(DetEval {
        loss,
        objective,
        grad,
        state: Some(state),
    })
}

/// Full-gradient descent on loss + lambda * worst-case dependence.
///
/// Each iteration recomputes the probability estimates, the dependence
/// matrix and its decomposition, and the closed-form auxiliary maximizer
/// at the current parameters, then steps against the exact gradient. In
/// safeguarded mode the step is halved until the objective stops
/// increasing (and relaxes back toward the configured step afterwards);
/// at a fixed step any increase is logged, never silent.
pub fn train_deterministic(
    data: &Dataset,
    model: &ModelParams,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainTrace)> {
    cfg.validate(data)?;
    if !matches!(
        cfg.solver,
        SolverKind::DetL1 | SolverKind::DetL2 | SolverKind::DetLinf
    ) {
        return Err(Error::Validation(format!(
            "deterministic loop called with solver {}",
            cfg.solver.as_str()
        )));
    }
    let mut trace = TrainTrace::new(cfg.iterations);
    let mut current = model.clone();
    let mut ev = det_eval(&current, data, cfg, 0)?;
    ensure_finite_objective(ev.objective, 0)?;
    let mut step = cfg.step_size;
    for t in 1..=cfg.iterations {
        let (next, next_ev, used_step) = if cfg.safeguard {
            let mut trial = step;
            let mut found = None;
            for _ in 0..MAX_BACKTRACKS {
                let cand = apply_step(&current, &ev.grad, trial);
                let cand_ev = det_eval(&cand, data, cfg, t)?;
                if cand_ev.objective.is_finite() && cand_ev.objective <= ev.objective {
                    found = Some((cand, cand_ev));
                    break;
                }
                trial /= 2.0;
            }
            match found {
                Some((cand, cand_ev)) => (cand, cand_ev, trial),
                None => {
                    log::warn!("no descent step found at iteration {t}; parameters held");
                    (current.clone(), det_eval(&current, data, cfg, t)?, trial)
                }
            }
        } else {
            let cand = apply_step(&current, &ev.grad, step);
            let cand_ev = det_eval(&cand, data, cfg, t)?;
            if cand_ev.objective > ev.objective {
                log::warn!(
                    "objective increased at iteration {t}: {} -> {}",
                    ev.objective,
                    cand_ev.objective
                );
            }
            (cand, cand_ev, step)
        };
        current = next;
        ev = next_ev;
        if cfg.safeguard {
            step = (used_step * 2.0).min(cfg.step_size);
        }
        ensure_finite_params(&current, t)?;
        ensure_finite_objective(ev.objective, t)?;
        if trace.should_log(t, cfg.iterations) {
            let state = match &ev.state {
                Some(s) => s.clone(),
                None => soft_q_state(&current, data)?,
            };
            let grad_norm = l2_norm(&ev.grad);
            push_record(
                &mut trace, data, cfg, t, &state, ev.loss, ev.objective, grad_norm, None, None,
                None, None,
            )?;
        }
    }
    Ok((current, trace))
}

/// Minibatch parameter direction for the SGDA solver at a fixed dual
/// state: the batch-mean loss gradient plus lambda (1 + epsilon alpha)
/// times the batch-mean kernel gradient at the auxiliary matrix `w`.
/// The sensitive marginal inside the kernel comes from full-data counts.
pub fn sgda_direction(
    params: &ModelParams,
    data: &Dataset,
    rows: &[usize],
    w: &Array2<f64>,
    alpha: f64,
    lambda: f64,
    epsilon: f64,
) -> Result<Vec<f64>> {
    let (_, direction, _) = sgda_batch_terms(params, data, rows, w, alpha, lambda, epsilon)?;
    Ok(direction)
}

/// Returns (batch mean kernel value, theta direction, batch mean kernel
/// W-gradient) at the given state.
fn sgda_batch_terms(
    params: &ModelParams,
    data: &Dataset,
    rows: &[usize],
    w: &Array2<f64>,
    alpha: f64,
    lambda: f64,
    epsilon: f64,
) -> Result<(f64, Vec<f64>, Array2<f64>)> {
    let (_, grad_loss) = params.loss_and_grad(data, rows)?;
    let k = data.k;
    let m = params.classes;
    if lambda == 0.0 {
        return Ok((0.0, grad_loss, Array2::zeros((k, m))));
    }
    let pi = Array1::from_vec(data.sensitive_marginal());
    let probs = params.forward_rows(data, rows)?;
    let inv_b = 1.0 / rows.len() as f64;
    let scale = lambda * (1.0 + epsilon * alpha);
    let mut psi_bar = 0.0;
    let mut w_grad = Array2::<f64>::zeros((k, m));
    let mut coeffs = Array2::<f64>::zeros((rows.len(), m));
    for (ri, &i) in rows.iter().enumerate() {
        let s_i = data.sensitive[i];
        psi_bar += psi_kernel(probs.row(ri), s_i, &pi, w) * inv_b;
        let gw = psi_grad_w(probs.row(ri), s_i, &pi, w);
        w_grad.iter_mut().zip(gw.iter()).for_each(|(a, b)| *a += b * inv_b);
        let c = psi_prob_coeffs(s_i, &pi, w);
        for j in 0..m {
            coeffs[[ri, j]] = c[j] * scale * inv_b;
        }
    }
    let psi_vjp = params.prob_vjp(data, rows, &coeffs)?;
    let direction: Vec<f64> = grad_loss.iter().zip(&psi_vjp).map(|(l, p)| l + p).collect();
    Ok((psi_bar, direction, w_grad))
}

/// Stochastic gradient-descent-ascent for the l2 ball.
///
/// State is (theta, alpha, W). Each iteration draws a minibatch and, from
/// the same pre-update state: steps theta against the batch direction;
/// steps alpha against lambda epsilon (mean kernel - 1/alpha^2) and
/// clamps it to [ALPHA_MIN, 1]; ascends W along the scaled batch kernel
/// gradient and projects it onto the Frobenius ball of radius
/// 2 / (min soft prediction marginal * sqrt(min sensitive marginal)),
/// marginals floored at 1e-6, the prediction marginal taken from the
/// current iterate over the full data.
pub fn train_sgda(
    data: &Dataset,
    model: &ModelParams,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainTrace)> {
    cfg.validate(data)?;
    if cfg.solver != SolverKind::SgdaL2 {
        return Err(Error::Validation(format!(
            "sgda loop called with solver {}",
            cfg.solver.as_str()
        )));
    }
    let mut trace = TrainTrace::new(cfg.iterations);
    let mut current = model.clone();
    let mut alpha = 1.0f64;
    let mut w = Array2::<f64>::zeros((data.k, model.classes));
    let pi = Array1::from_vec(data.sensitive_marginal());
    let pi_min_floored = pi.iter().cloned().fold(f64::INFINITY, f64::min).max(MARGINAL_FLOOR);
    let schedule = batch_schedule(data.n(), cfg.batch_size, cfg.iterations, cfg.seed);
    let eta = cfg.step_size;
    let mut alpha_min_streak = 0u32;
    let mut warned_alpha = false;
    for (t, rows) in schedule.iter().enumerate().map(|(i, r)| (i + 1, r)) {
        let (psi_bar, direction, w_grad) =
            sgda_batch_terms(&current, data, rows, &w, alpha, cfg.lambda, cfg.robust.epsilon)?;
        // All three updates read the same pre-update state.
        let next_params = apply_step(&current, &direction, eta);
        if cfg.lambda > 0.0 {
            if cfg.robust.epsilon > 0.0 {
                let alpha_grad = cfg.lambda * cfg.robust.epsilon * (psi_bar - 1.0 / (alpha * alpha));
                alpha = (alpha - eta * alpha_grad).clamp(ALPHA_MIN, 1.0);
                if alpha == ALPHA_MIN {
                    alpha_min_streak += 1;
                    if alpha_min_streak >= ALPHA_WARN_AFTER && !warned_alpha {
                        log::warn!(
                            "dual scalar pinned at its lower clamp for {alpha_min_streak} \
                             iterations; the fairness term is near zero"
                        );
                        warned_alpha = true;
                    }
                } else {
                    alpha_min_streak = 0;
                }
            }
            let scale = cfg.lambda * (1.0 + cfg.robust.epsilon * alpha);
            w.iter_mut().zip(w_grad.iter()).for_each(|(a, g)| *a += eta * scale * g);
            // Projection radius from the current iterate's soft marginals.
            let full = current.forward(data)?;
            let n_inv = 1.0 / data.n() as f64;
            let mut p_min = f64::INFINITY;
            for j in 0..current.classes {
                let mut mass = 0.0;
                for i in 0..data.n() {
                    mass += full.probs[[i, j]];
                }
                p_min = p_min.min(mass * n_inv);
            }
            let radius = 2.0 / (p_min.max(MARGINAL_FLOOR) * pi_min_floored.sqrt());
            let norm = frobenius(&w);
            if norm > radius {
                let shrink = radius / norm;
                w.mapv_inplace(|v| v * shrink);
            }
        }
        current = next_params;
        ensure_finite_params(&current, t)?;
        if trace.should_log(t, cfg.iterations) {
            let state = soft_q_state(&current, data)?;
            let rows_all = all_rows(data.n());
            let loss = current
                .per_sample_loss(data, &rows_all)?
                .iter()
                .sum::<f64>()
                / data.n() as f64;
            let eps = cfg.robust.epsilon;
            let psi_full = variational_value(&state.triple, &w)? + 1.0;
            let objective = if cfg.lambda == 0.0 {
                loss
            } else {
                loss + cfg.lambda * (1.0 + eps * alpha) * psi_full
                    + if eps > 0.0 { cfg.lambda * eps / alpha } else { 0.0 }
                    + cfg.lambda * eps * eps
            };
            ensure_finite_objective(objective, t)?;
            push_record(
                &mut trace,
                data,
                cfg,
                t,
                &state,
                loss,
                objective,
                l2_norm(&direction),
                Some(alpha),
                Some(frobenius(&w)),
                None,
                None,
            )?;
        }
    }
    Ok((current, trace))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("losses are finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Tail-focused training: the accuracy term is the conditional value at
/// risk of the per-sample losses at the configured level, handled by
/// joint subgradient descent on (theta, t) with the hinge subgradient
/// taken as zero at the kink; the fairness term is the same robust
/// regularizer as the deterministic solver. The threshold starts at the
/// median initial per-sample loss.
pub fn train_cvar(
    data: &Dataset,
    model: &ModelParams,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainTrace)> {
    cfg.validate(data)?;
    if cfg.solver != SolverKind::Cvar {
        return Err(Error::Validation(format!(
            "cvar loop called with solver {}",
            cfg.solver.as_str()
        )));
    }
    let mut trace = TrainTrace::new(cfg.iterations);
    let mut current = model.clone();
    let rows = all_rows(data.n());
    let n = data.n() as f64;
    let level = cfg.cvar_level;
    let mut threshold = {
        let mut losses = current.per_sample_loss(data, &rows)?;
        median(&mut losses)
    };
    for t in 1..=cfg.iterations {
        let losses = current.per_sample_loss(data, &rows)?;
        let tail: Vec<usize> = rows
            .iter()
            .cloned()
            .filter(|&i| losses[i] > threshold)
            .collect();
        let mut grad = vec![0.0; current.len()];
        if !tail.is_empty() {
            let (_, tail_grad) = current.loss_and_grad(data, &tail)?;
            let factor = tail.len() as f64 / (n * level);
            for (g, tg) in grad.iter_mut().zip(&tail_grad) {
                *g = tg * factor;
            }
        }
        if cfg.lambda > 0.0 {
            let st = soft_q_state(&current, data)?;
            let fair = fairness_direction(&current, data, &st, &cfg.robust, t)?;
            for (g, f) in grad.iter_mut().zip(&fair) {
                *g += cfg.lambda * f;
            }
        }
        let t_grad = 1.0 - tail.len() as f64 / (n * level);
        current = apply_step(&current, &grad, cfg.step_size);
        threshold -= cfg.step_size * t_grad;
        ensure_finite_params(&current, t)?;
        if !threshold.is_finite() {
            return Err(Error::Divergence {
                iteration: t,
                message: "threshold became non-finite".to_string(),
            });
        }
        if trace.should_log(t, cfg.iterations) {
            let state = soft_q_state(&current, data)?;
            let losses_now = current.per_sample_loss(data, &rows)?;
            let loss = losses_now.iter().sum::<f64>() / n;
            let hinge: f64 = losses_now
                .iter()
                .map(|&l| (l - threshold).max(0.0))
                .sum::<f64>()
                / n;
            let mut objective = hinge / level + threshold;
            if cfg.lambda > 0.0 {
                objective += cfg.lambda * robust_value(&state.qm, &cfg.robust);
            }
            ensure_finite_objective(objective, t)?;
            push_record(
                &mut trace,
                data,
                cfg,
                t,
                &state,
                loss,
                objective,
                l2_norm(&grad),
                None,
                None,
                Some(threshold),
                None,
            )?;
        }
    }
    Ok((current, trace))
}

/// Group-robust training: maintains a simplex weight per sensitive
/// level, scaled up multiplicatively where the group mean loss is high,
/// and steps theta against the weighted group gradients plus the robust
/// fairness gradient. Weights update before the parameter step each
/// iteration.
pub fn train_group_dro(
    data: &Dataset,
    model: &ModelParams,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainTrace)> {
    cfg.validate(data)?;
    if cfg.solver != SolverKind::GroupDro {
        return Err(Error::Validation(format!(
            "group loop called with solver {}",
            cfg.solver.as_str()
        )));
    }
    let mut trace = TrainTrace::new(cfg.iterations);
    let mut current = model.clone();
    let k = data.k;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &s) in data.sensitive.iter().enumerate() {
        groups[s].push(i);
    }
    let mut weights = vec![1.0 / k as f64; k];
    for t in 1..=cfg.iterations {
        let mut losses = vec![0.0; k];
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(k);
        for (g, rows) in groups.iter().enumerate() {
            let (loss, grad) = current.loss_and_grad(data, rows)?;
            losses[g] = loss;
            grads.push(grad);
        }
        group_weight_update(&mut weights, &losses, cfg.group_step);
        let mut grad = vec![0.0; current.len()];
        for (wg, gg) in weights.iter().zip(&grads) {
            for (a, b) in grad.iter_mut().zip(gg) {
                *a += wg * b;
            }
        }
        if cfg.lambda > 0.0 {
            let st = soft_q_state(&current, data)?;
            let fair = fairness_direction(&current, data, &st, &cfg.robust, t)?;
            for (a, f) in grad.iter_mut().zip(&fair) {
                *a += cfg.lambda * f;
            }
        }
        current = apply_step(&current, &grad, cfg.step_size);
        ensure_finite_params(&current, t)?;
        if trace.should_log(t, cfg.iterations) {
            let state = soft_q_state(&current, data)?;
            let mut weighted = 0.0;
            for (g, rows) in groups.iter().enumerate() {
                let losses_g = current.per_sample_loss(data, rows)?;
                weighted += weights[g] * losses_g.iter().sum::<f64>() / rows.len() as f64;
            }
            let rows_all = all_rows(data.n());
            let loss = current
                .per_sample_loss(data, &rows_all)?
                .iter()
                .sum::<f64>()
                / data.n() as f64;
            let mut objective = weighted;
            if cfg.lambda > 0.0 {
                objective += cfg.lambda * robust_value(&state.qm, &cfg.robust);
            }
            ensure_finite_objective(objective, t)?;
            push_record(
                &mut trace,
                data,
                cfg,
                t,
                &state,
                loss,
                objective,
                l2_norm(&grad),
                None,
                None,
                None,
                Some(weights.clone()),
            )?;
        }
    }
    Ok((current, trace))
}
