//! Training-based restoration: minimize
//!
//! ```text
//! J(g) = 1/2 |f - h*g|^2 + lambda * sum_x sqrt(eps + |S (L g)(x)|^2)
//! ```
//!
//! by majorization-minimization. At anchor `gk` every square root is replaced
//! by its tangent quadratic, which gives the surrogate
//!
//! ```text
//! Jk(g) = 1/2 |f - h*g|^2 + lambda * sum_x [rho_k(x) + w_k(x) (|S L g|^2 - t_k(x))]
//! ```
//!
//! with `w_k = 1 / (2 rho_k)`. Its gradient is `Q g - h^T f` where
//! `Q = H^T H + 2 lambda L^T W S^T S L`; the surrogate minimizer solves that
//! linear system, which is done with diagonally preconditioned CG.

use crate::error::{Error, Result};
use crate::prior::{penalty_r, PriorConfig, StructureMatrix, DEFAULT_EPS_SMOOTH};
use crate::signal::{
    convolve, convolve_into, correlate_into, derivative_stack, dot, norm, DerivativeBank,
    DerivativeStack, Kernel, Signal,
};
use nalgebra::DMatrix;

/// The known linear degradation `f = h * g + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationModel {
    pub h: Kernel,
}

impl DegradationModel {
    pub fn new(h: Kernel) -> Self {
        DegradationModel { h }
    }

    /// Pure denoising, `h = delta`.
    pub fn denoise() -> Self {
        DegradationModel { h: Kernel::delta() }
    }

    /// `h * g`.
    pub fn forward(&self, g: &Signal) -> Result<Signal> {
        if self.h.is_delta() {
            return Ok(g.clone());
        }
        convolve(g, &self.h)
    }

    /// `h(-x) * u`.
    pub fn adjoint(&self, u: &Signal) -> Result<Signal> {
        if self.h.is_delta() {
            return Ok(u.clone());
        }
        crate::signal::adjoint_convolve(u, &self.h)
    }

    fn normal_into(&self, g: &[f64], tmp: &mut [f64], out: &mut [f64]) {
        if self.h.is_delta() {
            out.copy_from_slice(g);
        } else {
            convolve_into(g, self.h.taps(), self.h.origin(), tmp);
            correlate_into(tmp, self.h.taps(), self.h.origin(), out);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestoreConfig {
    pub lambda: f64,
    /// Inner CG tolerance on the surrogate gradient norm.
    pub eps_q: f64,
    /// Outer tolerance on the gradient norm of `J`.
    pub eps_m: f64,
    pub eps_smooth: f64,
    pub max_outer: usize,
    /// Defaults to `10 N` when `None`.
    pub max_cg: Option<usize>,
    pub precondition: bool,
    /// Optional forcing term: each inner solve also stops once the residual
    /// drops below `inner_rtol` times its initial value. `0` disables it.
    pub inner_rtol: f64,
}

impl Default for RestoreConfig {
    fn default() -> Self {
        RestoreConfig {
            lambda: 1.0,
            eps_q: 1e-6,
            eps_m: 1e-6,
            eps_smooth: DEFAULT_EPS_SMOOTH,
            max_outer: 200,
            max_cg: None,
            precondition: true,
            inner_rtol: 0.0,
        }
    }
}

impl RestoreConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        RestoreConfig {
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("eps_q", self.eps_q),
            ("eps_m", self.eps_m),
            ("eps_smooth", self.eps_smooth),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidValue(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidValue("max_outer must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.inner_rtol) {
            return Err(Error::InvalidValue(format!(
                "inner_rtol must lie in [0, 1), got {}",
                self.inner_rtol
            )));
        }
        Ok(())
    }
}

/// Per-run diagnostics of [`mm_gmotv`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RestoreTrace {
    /// `J` at every visited outer iterate, starting with `g0`.
    pub costs: Vec<f64>,
    /// `|grad J|` at the same iterates.
    pub grad_norms: Vec<f64>,
    pub cg_iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Set when an outer step failed to decrease `J` and was rejected.
    pub stalled: bool,
}

fn check_shapes(g: &Signal, f: &Signal, s: &StructureMatrix, bank: &DerivativeBank) -> Result<()> {
    if g.len() != f.len() {
        return Err(Error::LengthMismatch {
            expected: f.len(),
            actual: g.len(),
        });
    }
    if s.dim() != bank.order() {
        return Err(Error::DimensionMismatch(format!(
            "structure matrix is {0}x{0} but the bank has {1} filters",
            s.dim(),
            bank.order()
        )));
    }
    Ok(())
}

/// `1/2 |f - h*g|^2 + lambda * R(L g, S)`.
pub fn cost_j(
    g: &Signal,
    f: &Signal,
    model: &DegradationModel,
    s: &StructureMatrix,
    bank: &DerivativeBank,
    lambda: f64,
    eps_smooth: f64,
) -> Result<f64> {
    check_shapes(g, f, s, bank)?;
    let hg = model.forward(g)?;
    let data: f64 = f.iter().zip(hg.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let stack = derivative_stack(g, bank)?;
    let prior = PriorConfig {
        lambda_f: 0.0,
        eps_smooth,
    };
    Ok(0.5 * data + lambda * penalty_r(&stack, s, &prior)?)
}

/// `w(x) = 1 / (2 sqrt(eps + |S (L g_bar)(x)|^2))`.
pub fn weights(
    g_bar: &Signal,
    s: &StructureMatrix,
    bank: &DerivativeBank,
    eps_smooth: f64,
) -> Result<Signal> {
    if s.dim() != bank.order() {
        return Err(Error::DimensionMismatch(format!(
            "structure matrix is {0}x{0} but the bank has {1} filters",
            s.dim(),
            bank.order()
        )));
    }
    let stack = derivative_stack(g_bar, bank)?;
    Ok(Signal::from_vec_unchecked(weights_of_stack(&stack, s, eps_smooth)))
}

fn weights_of_stack(stack: &DerivativeStack, s: &StructureMatrix, eps_smooth: f64) -> Vec<f64> {
    crate::prior::projected_sq_norms(stack, s.matrix())
        .into_iter()
        .map(|t| 0.5 / (eps_smooth + t).sqrt())
        .collect()
}

/// The linear operator `Q = H^T H + mu L^T W S^T S L` frozen at an anchor.
///
/// `mu` is the weight on the regularization block exactly as written; the
/// surrogate of `J` with parameter `lambda` uses `mu = 2 lambda`.
#[derive(Debug, Clone)]
pub struct QuadOperator<'a> {
    model: &'a DegradationModel,
    bank: &'a DerivativeBank,
    gram: DMatrix<f64>,
    w: Vec<f64>,
    mu: f64,
    s: &'a StructureMatrix,
}

impl<'a> QuadOperator<'a> {
    pub fn new(
        g_bar: &Signal,
        s: &'a StructureMatrix,
        model: &'a DegradationModel,
        mu: f64,
        bank: &'a DerivativeBank,
        eps_smooth: f64,
    ) -> Result<Self> {
        let w = weights(g_bar, s, bank, eps_smooth)?.into_vec();
        Ok(QuadOperator {
            model,
            bank,
            gram: s.gram(),
            w,
            mu,
            s,
        })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn apply(&self, g: &Signal) -> Result<Signal> {
        if g.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: g.len(),
            });
        }
        let mut ws = Workspace::new(self.len(), self.bank.order());
        let mut out = vec![0.0; self.len()];
        self.apply_into(g.as_slice(), &mut ws, &mut out);
        Ok(Signal::from_vec_unchecked(out))
    }

    fn apply_into(&self, g: &[f64], ws: &mut Workspace, out: &mut [f64]) {
        let n = g.len();
        let k = self.bank.order();
        self.model.normal_into(g, &mut ws.tmp, out);
        if self.mu == 0.0 {
            return;
        }
        for (p, f) in self.bank.filters().iter().enumerate() {
            convolve_into(g, f.taps(), f.origin(), &mut ws.stack[p * n..(p + 1) * n]);
        }
        // u(x) = w(x) S^T S v(x), written back over the stack
        let mut v = [0.0; 8];
        for x in 0..n {
            for (p, vp) in v.iter_mut().enumerate().take(k) {
                *vp = ws.stack[p * n + x];
            }
            let scale = self.mu * self.w[x];
            for p in 0..k {
                let mut acc = 0.0;
                for q in 0..k {
                    acc += self.gram[(p, q)] * v[q];
                }
                ws.stack[p * n + x] = scale * acc;
            }
        }
        for (p, f) in self.bank.filters().iter().enumerate() {
            correlate_into(&ws.stack[p * n..(p + 1) * n], f.taps(), f.origin(), &mut ws.tmp);
            for (o, t) in out.iter_mut().zip(&ws.tmp) {
                *o += t;
            }
        }
    }

    /// Exact diagonal of the operator.
    pub fn diagonal(&self) -> Signal {
        let n = self.len();
        let mut d = vec![self.model.h.energy(); n];
        if self.mu != 0.0 {
            let mut tmp = vec![0.0; n];
            let m = self.s.matrix();
            for i in 0..self.s.dim() {
                let coeffs: Vec<f64> = (0..self.s.dim()).map(|p| m[(i, p)]).collect();
                let sq: Vec<f64> = Kernel::combine(self.bank.filters(), &coeffs)
                    .iter()
                    .map(|t| t * t)
                    .collect();
                correlate_into(&self.w, &sq, 0, &mut tmp);
                for (o, t) in d.iter_mut().zip(&tmp) {
                    *o += self.mu * t;
                }
            }
        }
        Signal::from_vec_unchecked(d)
    }
}

struct Workspace {
    tmp: Vec<f64>,
    stack: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, k: usize) -> Self {
        Workspace {
            tmp: vec![0.0; n],
            stack: vec![0.0; n * k],
        }
    }
}

/// `(H^T H g) + lambda L^T { w_[g_bar,S] S^T S (L g) }`.
pub fn apply_q(
    g: &Signal,
    g_bar: &Signal,
    s: &StructureMatrix,
    model: &DegradationModel,
    lambda: f64,
    bank: &DerivativeBank,
    eps_smooth: f64,
) -> Result<Signal> {
    QuadOperator::new(g_bar, s, model, lambda, bank, eps_smooth)?.apply(g)
}

/// `sum_y h(y)^2 + lambda sum_i (Lhat_i(-x))^2 * w(x)` with `Lhat_i = p_i^T L`.
pub fn precond_diag(
    g_bar: &Signal,
    s: &StructureMatrix,
    model: &DegradationModel,
    lambda: f64,
    bank: &DerivativeBank,
    eps_smooth: f64,
) -> Result<Signal> {
    Ok(QuadOperator::new(g_bar, s, model, lambda, bank, eps_smooth)?.diagonal())
}

/// Exact gradient of [`cost_j`] in `g`.
pub fn grad_j(
    g: &Signal,
    f: &Signal,
    model: &DegradationModel,
    s: &StructureMatrix,
    bank: &DerivativeBank,
    lambda: f64,
    eps_smooth: f64,
) -> Result<Signal> {
    check_shapes(g, f, s, bank)?;
    let qg = apply_q(g, g, s, model, 2.0 * lambda, bank, eps_smooth)?;
    let htf = model.adjoint(f)?;
    qg.sub(&htf)
}

/// The surrogate of [`cost_j`] anchored at `anchor`.
pub fn surrogate_j(
    g: &Signal,
    anchor: &Signal,
    f: &Signal,
    model: &DegradationModel,
    s: &StructureMatrix,
    bank: &DerivativeBank,
    lambda: f64,
    eps_smooth: f64,
) -> Result<f64> {
    check_shapes(g, f, s, bank)?;
    check_shapes(anchor, f, s, bank)?;
    let hg = model.forward(g)?;
    let data: f64 = f.iter().zip(hg.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let t_anchor = crate::prior::projected_sq_norms(&derivative_stack(anchor, bank)?, s.matrix());
    let t_g = crate::prior::projected_sq_norms(&derivative_stack(g, bank)?, s.matrix());
    let reg: f64 = t_anchor
        .iter()
        .zip(&t_g)
        .map(|(tk, t)| {
            let rho = (eps_smooth + tk).sqrt();
            rho + (t - tk) / (2.0 * rho)
        })
        .sum();
    Ok(0.5 * data + lambda * reg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgOutcome {
    pub solution: Signal,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

/// Solves `op x = b` by conjugate gradients from `x0`.
///
/// Stops once `|b - op x| < eps_q`. When `max_cg` runs out, the iterate with
/// the lowest quadratic energy `1/2 x^T Q x - b^T x` is returned.
pub fn pcg_solve(
    op: &QuadOperator<'_>,
    b: &Signal,
    x0: &Signal,
    eps_q: f64,
    max_cg: usize,
    precondition: bool,
) -> Result<PcgOutcome> {
    let n = op.len();
    for len in [b.len(), x0.len()] {
        if len != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    let inv_diag: Option<Vec<f64>> =
        precondition.then(|| op.diagonal().iter().map(|d| 1.0 / d).collect());
    let precond = |r: &[f64], z: &mut [f64]| match &inv_diag {
        Some(inv) => z.iter_mut().zip(r).zip(inv).for_each(|((z, r), i)| *z = r * i),
        None => z.copy_from_slice(r),
    };
    let energy = |x: &[f64], r: &[f64]| -0.5 * (dot(x, b.as_slice()) + dot(x, r));

    let mut ws = Workspace::new(n, op.bank.order());
    let mut x = x0.as_slice().to_vec();
    let mut ap = vec![0.0; n];
    op.apply_into(&x, &mut ws, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(b, a)| b - a).collect();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = norm(&r);

    let mut best = x.clone();
    let mut best_energy = energy(&x, &r);
    let mut best_res = res;
    let mut iterations = 0;

    while res >= eps_q && iterations < max_cg {
        op.apply_into(&p, &mut ws, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            // breakdown: direction of zero or negative curvature
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        res = norm(&r);
        let e = energy(&x, &r);
        if e <= best_energy {
            best_energy = e;
            best.copy_from_slice(&x);
            best_res = res;
        }
        if res < eps_q {
            break;
        }
        precond(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    let converged = res < eps_q;
    let (solution, residual_norm) = if converged { (x, res) } else { (best, best_res) };
    Ok(PcgOutcome {
        solution: Signal::from_vec_unchecked(solution),
        iterations,
        residual_norm,
        converged,
    })
}

/// MM restoration of `f` under prior `s` starting from `g0`.
pub fn mm_gmotv(
    f: &Signal,
    model: &DegradationModel,
    s: &StructureMatrix,
    bank: &DerivativeBank,
    g0: &Signal,
    cfg: &RestoreConfig,
) -> Result<(Signal, RestoreTrace)> {
    cfg.validate()?;
    check_shapes(g0, f, s, bank)?;
    if bank.max_len() > f.len() {
        return Err(Error::KernelTooLong {
            kernel: bank.max_len(),
            signal: f.len(),
        });
    }
    let max_cg = cfg.max_cg.unwrap_or(10 * f.len());
    let htf = model.adjoint(f)?;
    let cost = |g: &Signal| cost_j(g, f, model, s, bank, cfg.lambda, cfg.eps_smooth);
    let grad = |g: &Signal| grad_j(g, f, model, s, bank, cfg.lambda, cfg.eps_smooth);

    let mut trace = RestoreTrace::default();
    let mut g = g0.clone();
    let mut current = cost(&g)?;
    trace.costs.push(current);
    trace.grad_norms.push(grad(&g)?.norm());

    loop {
        if *trace.grad_norms.last().unwrap() < cfg.eps_m {
            trace.converged = true;
            break;
        }
        if trace.outer_iterations >= cfg.max_outer {
            break;
        }
        let op = QuadOperator::new(&g, s, model, 2.0 * cfg.lambda, bank, cfg.eps_smooth)?;
        // the surrogate gradient at the anchor equals grad J there
        let tol = cfg.eps_q.max(cfg.inner_rtol * trace.grad_norms.last().unwrap());
        let sol = pcg_solve(&op, &htf, &g, tol, max_cg, cfg.precondition)?;
        trace.cg_iterations += sol.iterations;
        trace.outer_iterations += 1;
        let next = sol.solution;
        let next_cost = cost(&next)?;
        if next_cost > current || next == g {
            // no representable descent left
            trace.stalled = true;
            break;
        }
        g = next;
        current = next_cost;
        trace.costs.push(current);
        trace.grad_norms.push(grad(&g)?.norm());
    }
    Ok((g, trace))
}

/// [`mm_gmotv`] warm-started at the measurement.
pub fn restore(
    f: &Signal,
    model: &DegradationModel,
    s: &StructureMatrix,
    bank: &DerivativeBank,
    cfg: &RestoreConfig,
) -> Result<(Signal, RestoreTrace)> {
    mm_gmotv(f, model, s, bank, f, cfg)
}
