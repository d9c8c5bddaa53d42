//! The multi-order TV penalty and its structure-matrix calculus.
//!
//! `R(g, S) = sum_x sqrt(eps + |S v(x)|^2)` where `v = L g`. The
//! Frobenius-regularized form adds `-1/2 log|S S^T| + 1/2 lambda_F |S|_F^2`,
//! the negative log-likelihood of a multivariate Laplacian prior with
//! precision `S^T S`, up to constants.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mmkl::accumulate_a;
use crate::signal::DerivativeStack;

/// Relative singular-value floor below which a structure matrix counts as singular.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Default smoothing constant added under every norm.
pub const DEFAULT_EPS_SMOOTH: f64 = 1e-10;

/// Full-rank `K x K` matrix whose rows weight the derivative orders.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureMatrix(DMatrix<f64>);

impl StructureMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "structure matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("structure matrix entries must be finite".into()));
        }
        let sv = m.singular_values();
        let largest = sv.max();
        let smallest = sv.min();
        if !(largest > 0.0) || smallest <= RANK_TOLERANCE * largest {
            return Err(Error::SingularStructure { smallest, largest });
        }
        Ok(StructureMatrix(m))
    }

    pub fn identity(k: usize) -> Self {
        StructureMatrix(DMatrix::identity(k, k))
    }

    pub fn from_row_slice(k: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != k * k {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {k}x{k} matrix, got {}",
                k * k,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(k, k, entries))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// `log|S S^T|` from the singular values of `S`.
    pub fn log_det_sst(&self) -> f64 {
        2.0 * self.0.singular_values().iter().map(|s| s.ln()).sum::<f64>()
    }

    /// `S^T S`, the precision matrix of the prior.
    pub fn gram(&self) -> DMatrix<f64> {
        self.0.transpose() * &self.0
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.0.norm_squared()
    }

    /// `(S S^T)^{-1} S`.
    fn inv_sst_s(&self) -> Result<DMatrix<f64>> {
        let sst = &self.0 * self.0.transpose();
        let chol = sst.cholesky().ok_or_else(|| {
            let sv = self.0.singular_values();
            Error::SingularStructure {
                smallest: sv.min(),
                largest: sv.max(),
            }
        })?;
        Ok(chol.solve(&self.0))
    }
}

/// Smoothing and Frobenius weights for the penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    pub lambda_f: f64,
    pub eps_smooth: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            lambda_f: 0.0,
            eps_smooth: DEFAULT_EPS_SMOOTH,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_smooth > 0.0) || !self.eps_smooth.is_finite() {
            return Err(Error::InvalidValue(format!(
                "eps_smooth must be positive, got {}",
                self.eps_smooth
            )));
        }
        if !(self.lambda_f >= 0.0) || !self.lambda_f.is_finite() {
            return Err(Error::InvalidValue(format!(
                "lambda_F must be nonnegative, got {}",
                self.lambda_f
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_order(stack: &DerivativeStack, s: &StructureMatrix) -> Result<()> {
    if stack.order() != s.dim() {
        return Err(Error::DimensionMismatch(format!(
            "stack has order {} but structure matrix is {}x{}",
            stack.order(),
            s.dim(),
            s.dim()
        )));
    }
    Ok(())
}

/// `|S v(x)|^2` for every column of the stack.
pub(crate) fn projected_sq_norms(stack: &DerivativeStack, s: &DMatrix<f64>) -> Vec<f64> {
    let k = stack.order();
    let mut out = vec![0.0; stack.len()];
    let mut sv = vec![0.0; k];
    for (x, o) in out.iter_mut().enumerate() {
        sv.iter_mut().for_each(|v| *v = 0.0);
        for q in 0..k {
            let vq = stack.get(q, x);
            if vq != 0.0 {
                for (i, acc) in sv.iter_mut().enumerate() {
                    *acc += s[(i, q)] * vq;
                }
            }
        }
        *o = sv.iter().map(|v| v * v).sum();
    }
    out
}

/// `sum_x sqrt(eps + |S v(x)|^2)`.
pub fn penalty_r(stack: &DerivativeStack, s: &StructureMatrix, cfg: &PriorConfig) -> Result<f64> {
    check_order(stack, s)?;
    Ok(projected_sq_norms(stack, s.matrix())
        .iter()
        .map(|t| (cfg.eps_smooth + t).sqrt())
        .sum())
}

/// `R - 1/2 log|S S^T| + 1/2 lambda_F |S|_F^2`.
pub fn penalty_rf(stack: &DerivativeStack, s: &StructureMatrix, cfg: &PriorConfig) -> Result<f64> {
    let r = penalty_r(stack, s, cfg)?;
    Ok(r - 0.5 * s.log_det_sst() + 0.5 * cfg.lambda_f * s.frobenius_sq())
}

/// The quadratic majorizer of [`penalty_rf`] anchored at `anchor`.
///
/// Each square root is replaced by its tangent in `|S v|^2` at the anchor, so
/// the surrogate touches `R_F` at `S = anchor` and lies above it elsewhere.
pub fn surrogate_rf(
    stack: &DerivativeStack,
    s: &StructureMatrix,
    anchor: &StructureMatrix,
    cfg: &PriorConfig,
) -> Result<f64> {
    check_order(stack, s)?;
    check_order(stack, anchor)?;
    let at_anchor = projected_sq_norms(stack, anchor.matrix());
    let at_s = projected_sq_norms(stack, s.matrix());
    let r: f64 = at_anchor
        .iter()
        .zip(&at_s)
        .map(|(tk, t)| {
            let rho = (cfg.eps_smooth + tk).sqrt();
            rho + (t - tk) / (2.0 * rho)
        })
        .sum();
    Ok(r - 0.5 * s.log_det_sst() + 0.5 * cfg.lambda_f * s.frobenius_sq())
}

/// Gradient of [`penalty_rf`] in `S`: `S A - (S S^T)^{-1} S + lambda_F S`.
pub fn grad_s_rf(
    stack: &DerivativeStack,
    s: &StructureMatrix,
    cfg: &PriorConfig,
) -> Result<DMatrix<f64>> {
    grad_s_majorized(stack, s, s, cfg)
}

/// Gradient of [`surrogate_rf`] in `S`, with `A` weighted at `anchor`.
pub fn grad_s_majorized(
    stack: &DerivativeStack,
    s: &StructureMatrix,
    anchor: &StructureMatrix,
    cfg: &PriorConfig,
) -> Result<DMatrix<f64>> {
    check_order(stack, s)?;
    let a = accumulate_a(stack, anchor, cfg.eps_smooth)?;
    Ok(gradient_with_a(s, &a, cfg.lambda_f)?)
}

pub(crate) fn gradient_with_a(
    s: &StructureMatrix,
    a: &DMatrix<f64>,
    lambda_f: f64,
) -> Result<DMatrix<f64>> {
    let m = s.matrix();
    Ok(m * a - s.inv_sst_s()? + m * lambda_f)
}
