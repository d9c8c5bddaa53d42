//! Training-free restoration by block-coordinate descent on
//!
//! ```text
//! J_F(g, S) = 1/2 |f - h*g|^2 + lambda * R_F(g, S)
//! ```
//!
//! Step 1 minimizes over `g` with [`mm_gmotv`], step 2 over `S` with
//! [`mm_kl`]. Both sub-solvers are monotone, so `J_F` never increases beyond
//! round-off across half-steps.

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mmkl::{mm_kl, MmKlConfig};
use crate::prior::{grad_s_rf, penalty_rf, PriorConfig, StructureMatrix, DEFAULT_EPS_SMOOTH};
use crate::restore::{grad_j, mm_gmotv, DegradationModel, RestoreConfig};
use crate::signal::{derivative_stack, DerivativeBank, Signal};

/// Slack on the `J_F` decrease used by the block-condition stopping rule.
pub const BLOCK_DECREASE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TerminationMode {
    /// Stop when both block gradients of `J_F` fall below `eps_a`.
    #[default]
    GradientNorm,
    /// Stop when both Wolfe-style block conditions hold and `J_F` stalls.
    BlockConditions,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointConfig {
    pub lambda: f64,
    pub lambda_f: f64,
    /// Gradient tolerance for both sub-problems and the outer test.
    pub eps_a: f64,
    pub eps_smooth: f64,
    pub max_alternations: usize,
    pub termination: TerminationMode,
    /// Outer MM iterations allowed per step-1 call.
    pub max_outer: usize,
    pub max_cg: Option<usize>,
    /// MM-KL iterations allowed per step-2 call.
    pub max_kl_iters: usize,
    /// When false `S` stays at its initial value (plain multi-order TV).
    pub update_structure: bool,
    /// Relative inner CG tolerance handed to step 1, see [`RestoreConfig`].
    pub inner_rtol: f64,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig {
            lambda: 1.0,
            lambda_f: 1e-6,
            eps_a: 1e-6,
            eps_smooth: DEFAULT_EPS_SMOOTH,
            max_alternations: 50,
            termination: TerminationMode::GradientNorm,
            max_outer: 200,
            max_cg: None,
            max_kl_iters: 500,
            update_structure: true,
            inner_rtol: 0.0,
        }
    }
}

impl JointConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        JointConfig {
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_f > 0.0) {
            return Err(Error::InvalidValue(format!(
                "lambda_F must be positive for joint estimation, got {}",
                self.lambda_f
            )));
        }
        if self.max_alternations == 0 {
            return Err(Error::InvalidValue("max_alternations must be at least 1".into()));
        }
        self.restore_config().validate()?;
        self.kl_config().validate()
    }

    fn restore_config(&self) -> RestoreConfig {
        RestoreConfig {
            lambda: self.lambda,
            eps_q: self.eps_a,
            eps_m: self.eps_a,
            eps_smooth: self.eps_smooth,
            max_outer: self.max_outer,
            max_cg: self.max_cg,
            precondition: true,
            inner_rtol: self.inner_rtol,
        }
    }

    fn kl_config(&self) -> MmKlConfig {
        MmKlConfig {
            lambda_f: self.lambda_f,
            eps_grad: self.eps_a,
            eps_smooth: self.eps_smooth,
            max_iters: self.max_kl_iters,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepConditions {
    pub step1_ok: bool,
    pub step2_ok: bool,
}

#[derive(Debug, Clone)]
pub struct JointResult {
    pub g: Signal,
    pub s: StructureMatrix,
    pub alternations: usize,
    /// `J_F(g0, S0)` followed by `J_F(g^(m+1), S^(m+1))` for every alternation.
    pub jf_history: Vec<f64>,
    /// `J_F(g^(m+1), S^(m))`, the value between the two half-steps.
    pub jf_after_step1: Vec<f64>,
    pub conditions: Vec<StepConditions>,
    pub converged: bool,
}

/// `1/2 |f - h*g|^2 + lambda * R_F(L g, S)`.
#[allow(clippy::too_many_arguments)]
pub fn cost_jf(
    g: &Signal,
    f: &Signal,
    model: &DegradationModel,
    s: &StructureMatrix,
    bank: &DerivativeBank,
    lambda: f64,
    lambda_f: f64,
    eps_smooth: f64,
) -> Result<f64> {
    let hg = model.forward(g)?;
    if hg.len() != f.len() {
        return Err(Error::LengthMismatch {
            expected: f.len(),
            actual: g.len(),
        });
    }
    let data: f64 = f.iter().zip(hg.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let stack = derivative_stack(g, bank)?;
    let prior = PriorConfig {
        lambda_f,
        eps_smooth,
    };
    Ok(0.5 * data + lambda * penalty_rf(&stack, s, &prior)?)
}

/// `grad_S J_F = lambda * grad_S R_F`.
pub fn grad_s_jf(
    g: &Signal,
    s: &StructureMatrix,
    bank: &DerivativeBank,
    lambda: f64,
    lambda_f: f64,
    eps_smooth: f64,
) -> Result<DMatrix<f64>> {
    let stack = derivative_stack(g, bank)?;
    let prior = PriorConfig {
        lambda_f,
        eps_smooth,
    };
    Ok(grad_s_rf(&stack, s, &prior)? * lambda)
}

/// `|<step, grad_next>| < |<step, grad_prev>|`, with a zero step counted as satisfied.
pub fn directional_condition(step: &[f64], grad_next: &[f64], grad_prev: &[f64]) -> bool {
    if step.iter().all(|&d| d == 0.0) {
        return true;
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    dot(step, grad_next).abs() < dot(step, grad_prev).abs()
}

/// Evaluates the two block conditions for one alternation.
#[allow(clippy::too_many_arguments)]
pub fn check_step_conditions(
    g_prev: &Signal,
    g_next: &Signal,
    s_prev: &StructureMatrix,
    s_next: &StructureMatrix,
    f: &Signal,
    model: &DegradationModel,
    bank: &DerivativeBank,
    lambda: f64,
    lambda_f: f64,
    eps_smooth: f64,
) -> Result<StepConditions> {
    let dg = g_next.sub(g_prev)?;
    let step1_ok = {
        let next = grad_j(g_next, f, model, s_prev, bank, lambda, eps_smooth)?;
        let prev = grad_j(g_prev, f, model, s_prev, bank, lambda, eps_smooth)?;
        directional_condition(dg.as_slice(), next.as_slice(), prev.as_slice())
    };
    let ds = s_next.matrix() - s_prev.matrix();
    let step2_ok = {
        let next = grad_s_jf(g_next, s_next, bank, lambda, lambda_f, eps_smooth)?;
        let prev = grad_s_jf(g_next, s_prev, bank, lambda, lambda_f, eps_smooth)?;
        directional_condition(ds.as_slice(), next.as_slice(), prev.as_slice())
    };
    Ok(StepConditions { step1_ok, step2_ok })
}

/// Joint estimation of the signal and the structure matrix from `f` alone.
///
/// Starts at `g = f`, `S = I`.
pub fn igmotv(
    f: &Signal,
    model: &DegradationModel,
    bank: &DerivativeBank,
    cfg: &JointConfig,
) -> Result<JointResult> {
    cfg.validate()?;
    let restore_cfg = cfg.restore_config();
    let kl_cfg = cfg.kl_config();
    let jf = |g: &Signal, s: &StructureMatrix| {
        cost_jf(g, f, model, s, bank, cfg.lambda, cfg.lambda_f, cfg.eps_smooth)
    };

    let mut g = f.clone();
    let mut s = StructureMatrix::identity(bank.order());
    let mut jf_history = vec![jf(&g, &s)?];
    let mut jf_after_step1 = Vec::new();
    let mut conditions = Vec::new();
    let mut converged = false;
    let mut alternations = 0;

    while alternations < cfg.max_alternations {
        let (g_next, trace) = mm_gmotv(f, model, &s, bank, &g, &restore_cfg)?;
        jf_after_step1.push(jf(&g_next, &s)?);

        let (s_next, kl_converged) = if cfg.update_structure {
            let stack = derivative_stack(&g_next, bank)?;
            let r = mm_kl(&stack, &s, &kl_cfg)?;
            (r.s, r.converged)
        } else {
            (s.clone(), true)
        };
        let value = jf(&g_next, &s_next)?;
        let cond = check_step_conditions(
            &g,
            &g_next,
            &s,
            &s_next,
            f,
            model,
            bank,
            cfg.lambda,
            cfg.lambda_f,
            cfg.eps_smooth,
        )?;
        if trace.converged && kl_converged && !(cond.step1_ok && cond.step2_ok) {
            warn!(
                "alternation {}: sub-problems met eps_a but block conditions failed ({:?})",
                alternations + 1,
                cond
            );
        }
        let previous = *jf_history.last().unwrap();
        let unchanged = g_next == g && s_next == s;
        alternations += 1;
        conditions.push(cond);
        jf_history.push(value);
        g = g_next;
        s = s_next;

        let stop = match cfg.termination {
            TerminationMode::GradientNorm => {
                let gn = grad_j(&g, f, model, &s, bank, cfg.lambda, cfg.eps_smooth)?.norm();
                let sn = if cfg.update_structure {
                    grad_s_jf(&g, &s, bank, cfg.lambda, cfg.lambda_f, cfg.eps_smooth)?.norm()
                } else {
                    0.0
                };
                gn < cfg.eps_a && sn < cfg.eps_a
            }
            TerminationMode::BlockConditions => {
                cond.step1_ok && cond.step2_ok && previous - value <= BLOCK_DECREASE_SLACK
            }
        };
        if stop {
            converged = true;
            break;
        }
        if unchanged {
            break;
        }
    }

    Ok(JointResult {
        g,
        s,
        alternations,
        jf_history,
        jf_after_step1,
        conditions,
        converged,
    })
}
