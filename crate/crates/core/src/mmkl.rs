//! Majorization-minimization estimation of the structure matrix.
//!
//! Each iteration majorizes every `sqrt(eps + |S v|^2)` by its tangent
//! quadratic at the current `S`, which turns the problem into minimizing
//! `1/2 tr(S A S^T) - 1/2 log|S S^T| + 1/2 lambda_F |S|_F^2`. With
//! `A = U D U^T` that minimizer is `(D + lambda_F I)^{-1/2} U^T`, so the rows
//! of every iterate are mutually orthogonal.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::eigen::eig_sym;
use crate::error::{Error, Result};
use crate::prior::{
    check_order, gradient_with_a, penalty_rf, projected_sq_norms, PriorConfig, StructureMatrix,
    DEFAULT_EPS_SMOOTH,
};
use crate::signal::DerivativeStack;

// relative eigenvalue floor for the rank check when lambda_F = 0
const RANK_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmKlConfig {
    pub lambda_f: f64,
    /// Stop once the Frobenius norm of the gradient of `R_F` falls to this.
    pub eps_grad: f64,
    pub eps_smooth: f64,
    pub max_iters: usize,
}

impl Default for MmKlConfig {
    fn default() -> Self {
        MmKlConfig {
            lambda_f: 0.0,
            eps_grad: 1e-6,
            eps_smooth: DEFAULT_EPS_SMOOTH,
            max_iters: 500,
        }
    }
}

impl MmKlConfig {
    pub fn prior(&self) -> PriorConfig {
        PriorConfig {
            lambda_f: self.lambda_f,
            eps_smooth: self.eps_smooth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.prior().validate()?;
        if !(self.eps_grad > 0.0) {
            return Err(Error::InvalidValue(format!(
                "eps_grad must be positive, got {}",
                self.eps_grad
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidValue("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MmKlResult {
    pub s: StructureMatrix,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub converged: bool,
    /// `R_F` at the initial matrix followed by its value after every update.
    pub rf_history: Vec<f64>,
}

/// `sum_x v(x) v(x)^T / sqrt(eps + |S v(x)|^2)`.
pub fn accumulate_a(
    stack: &DerivativeStack,
    s: &StructureMatrix,
    eps_smooth: f64,
) -> Result<DMatrix<f64>> {
    check_order(stack, s)?;
    let k = stack.order();
    let weights = projected_sq_norms(stack, s.matrix());
    let mut a = DMatrix::zeros(k, k);
    let mut v = vec![0.0; k];
    for (x, t) in weights.iter().enumerate() {
        let w = 1.0 / (eps_smooth + t).sqrt();
        for (p, vp) in v.iter_mut().enumerate() {
            *vp = stack.get(p, x);
        }
        for p in 0..k {
            let wp = w * v[p];
            if wp == 0.0 {
                continue;
            }
            for q in 0..=p {
                a[(p, q)] += wp * v[q];
            }
        }
    }
    for p in 0..k {
        for q in 0..p {
            a[(q, p)] = a[(p, q)];
        }
    }
    Ok(a)
}

/// The closed-form minimizer of the surrogate built from `a`.
fn closed_form_update(a: &DMatrix<f64>, lambda_f: f64) -> Result<StructureMatrix> {
    let eig = eig_sym(a)?;
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    if lambda_f == 0.0 {
        if let Some((index, &value)) = eig
            .values
            .iter()
            .enumerate()
            .find(|(_, &d)| !(d > RANK_FLOOR * top))
        {
            return Err(Error::RankDeficient { index, value });
        }
    }
    // round-off can leave tiny negative eigenvalues of a PSD matrix
    let scale = DVector::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|&d| 1.0 / (d.max(0.0) + lambda_f).sqrt()),
    );
    let s = DMatrix::from_diagonal(&scale) * eig.vectors.transpose();
    StructureMatrix::new(s)
}

/// Estimates the structure matrix for `stack` starting from `s0`.
///
/// Always performs at least one update. Returns the last iterate; if the
/// gradient norm never reaches `eps_grad` the result has `converged = false`.
pub fn mm_kl(
    stack: &DerivativeStack,
    s0: &StructureMatrix,
    cfg: &MmKlConfig,
) -> Result<MmKlResult> {
    cfg.validate()?;
    check_order(stack, s0)?;
    let prior = cfg.prior();

    let mut s = s0.clone();
    let mut a = accumulate_a(stack, &s, cfg.eps_smooth)?;
    let mut rf_history = vec![penalty_rf(stack, &s, &prior)?];
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        s = closed_form_update(&a, cfg.lambda_f)?;
        a = accumulate_a(stack, &s, cfg.eps_smooth)?;
        iterations += 1;
        grad_norm = gradient_with_a(&s, &a, cfg.lambda_f)?.norm();
        rf_history.push(penalty_rf(stack, &s, &prior)?);
        if grad_norm <= cfg.eps_grad {
            break;
        }
    }

    Ok(MmKlResult {
        s,
        iterations,
        final_grad_norm: grad_norm,
        converged: grad_norm <= cfg.eps_grad,
        rf_history,
    })
}

/// Plain-text form: `K` on the first line, then `K` rows of `K` entries.
pub fn structure_to_text(s: &StructureMatrix) -> String {
    let k = s.dim();
    let m = s.matrix();
    let mut out = format!("{k}\n");
    for i in 0..k {
        let row: Vec<String> = (0..k).map(|j| format!("{:.17e}", m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn structure_from_text(text: &str) -> Result<StructureMatrix> {
    let bad = |m: String| Error::InvalidValue(format!("structure file: {m}"));
    let mut tokens = text.split_whitespace();
    let k: usize = tokens
        .next()
        .ok_or_else(|| bad("empty".into()))?
        .parse()
        .map_err(|e| bad(format!("bad order: {e}")))?;
    let entries = tokens
        .map(|t| t.parse::<f64>().map_err(|e| bad(format!("bad entry {t:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    StructureMatrix::from_row_slice(k, &entries)
}

pub fn write_structure(path: &Path, s: &StructureMatrix) -> Result<()> {
    std::fs::write(path, structure_to_text(s)).map_err(|e| Error::io(path, e))
}

pub fn read_structure(path: &Path) -> Result<StructureMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    structure_from_text(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::eig_sym;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stack(rng: &mut ChaCha8Rng, k: usize, n: usize) -> DerivativeStack {
        DerivativeStack::from_rows(
            (0..k)
                .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0f64).powi(3)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn accumulate_examples() {
        let st = DerivativeStack::from_rows(vec![vec![1.0, 2.0]]).unwrap();
        let a = accumulate_a(&st, &StructureMatrix::identity(1), 1e-30).unwrap();
        assert!((a[(0, 0)] - 3.0).abs() < 1e-12);

        let z = DerivativeStack::zeros(3, 7);
        let a = accumulate_a(&z, &StructureMatrix::identity(3), 1e-10).unwrap();
        assert_eq!(a, DMatrix::zeros(3, 3));
    }

    #[test]
    fn accumulate_is_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let st = random_stack(&mut rng, 4, 40);
            let a = accumulate_a(&st, &StructureMatrix::identity(4), 1e-10).unwrap();
            assert!((&a - a.transpose()).amax() <= 1e-14);
            assert!(eig_sym(&a).unwrap().values.iter().all(|&d| d >= -1e-12));
        }
    }

    fn tight() -> MmKlConfig {
        MmKlConfig {
            eps_grad: 1e-11,
            ..Default::default()
        }
    }

    #[test]
    fn scalar_fixed_point() {
        let st = DerivativeStack::from_rows(vec![vec![1.0, 2.0]]).unwrap();
        let r = mm_kl(&st, &StructureMatrix::identity(1), &tight()).unwrap();
        assert!(r.converged);
        assert!((r.s.matrix()[(0, 0)] - 1.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn isotropic_fixed_points() {
        let st = DerivativeStack::from_columns(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = mm_kl(&st, &StructureMatrix::identity(2), &MmKlConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert!((r.s.matrix() - DMatrix::identity(2, 2)).amax() < 1e-8);

        // one closed-form update from A = I gives (1 + lambda_F)^{-1/2} I
        let one_step = MmKlConfig {
            lambda_f: 3.0,
            max_iters: 1,
            ..tight()
        };
        let r = mm_kl(&st, &StructureMatrix::identity(2), &one_step).unwrap();
        assert!((r.s.matrix() - DMatrix::identity(2, 2) * 0.5).amax() < 1e-8);

        // the fixed point solves 3 s^2 + s - 1 = 0
        let cfg = MmKlConfig {
            lambda_f: 3.0,
            ..tight()
        };
        let r = mm_kl(&st, &StructureMatrix::identity(2), &cfg).unwrap();
        assert!(r.converged);
        let s_star = (13f64.sqrt() - 1.0) / 6.0;
        assert!((r.s.matrix() - DMatrix::identity(2, 2) * s_star).amax() < 1e-8);
    }

    #[test]
    fn rank_deficient_stack() {
        let z = DerivativeStack::zeros(2, 10);
        let e = mm_kl(&z, &StructureMatrix::identity(2), &MmKlConfig::default());
        assert!(matches!(e, Err(Error::RankDeficient { index: 0, .. })));

        // one direction never excited
        let st = DerivativeStack::from_rows(vec![vec![1.0, -2.0, 0.5], vec![0.0; 3]]).unwrap();
        let e = mm_kl(&st, &StructureMatrix::identity(2), &MmKlConfig::default());
        assert!(matches!(e, Err(Error::RankDeficient { index: 1, .. })));

        let cfg = MmKlConfig {
            lambda_f: 1e-3,
            ..Default::default()
        };
        assert!(mm_kl(&st, &StructureMatrix::identity(2), &cfg).is_ok());
    }

    #[test]
    fn iterates_orthogonal_and_descending() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..10 {
            let k = 1 + trial % 4;
            let st = random_stack(&mut rng, k, 60);
            let cfg = MmKlConfig {
                lambda_f: if trial % 2 == 0 { 0.0 } else { 0.1 },
                max_iters: 1,
                ..Default::default()
            };
            let mut s = StructureMatrix::identity(k);
            let mut last = f64::INFINITY;
            for _ in 0..30 {
                let r = mm_kl(&st, &s, &cfg).unwrap();
                let a = accumulate_a(&st, &s, cfg.eps_smooth).unwrap();
                let eig = eig_sym(&a).unwrap();
                let sst = r.s.matrix() * r.s.matrix().transpose();
                let want = DMatrix::from_fn(k, k, |i, j| {
                    if i == j {
                        1.0 / (eig.values[i] + cfg.lambda_f)
                    } else {
                        0.0
                    }
                });
                assert!((sst - &want).amax() <= 1e-10 * want.amax().max(1.0));
                let rf = *r.rf_history.last().unwrap();
                assert!(rf <= last + 1e-9 * last.abs().max(1.0));
                last = rf;
                s = r.s;
            }
        }
    }

    #[test]
    fn column_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let st = random_stack(&mut rng, 3, 30);
        let cols: Vec<Vec<f64>> = (0..st.len()).map(|x| st.column(x)).collect();
        let mut rev = cols.clone();
        rev.reverse();
        let shuffled = DerivativeStack::from_columns(&rev).unwrap();
        let cfg = MmKlConfig::default();
        let a = mm_kl(&st, &StructureMatrix::identity(3), &cfg).unwrap();
        let b = mm_kl(&shuffled, &StructureMatrix::identity(3), &cfg).unwrap();
        assert!((a.s.matrix() - b.s.matrix()).amax() <= 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let s = StructureMatrix::from_row_slice(2, &[0.1, -3.5e-7, 2.0, 1.0 / 3.0]).unwrap();
        let back = structure_from_text(&structure_to_text(&s)).unwrap();
        assert_eq!(back, s);
        assert!(structure_from_text("2\n1 2 3").is_err());
        assert!(structure_from_text("").is_err());
        assert!(structure_from_text("1\nabc").is_err());
    }
}
