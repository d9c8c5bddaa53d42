//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls the crate's operators: convolutions are dense matrices
//! built from the index formula, derivatives are taken by central differences
//! and the smoothed-TV reference is minimized by plain gradient descent.

#![allow(dead_code)]

use gmotv::prior::{penalty_rf, PriorConfig};
use gmotv::restore::{cost_j, DegradationModel};
use gmotv::{DerivativeBank, DerivativeStack, Kernel, Signal, StructureMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn rand_signal(rng: &mut ChaCha8Rng, n: usize) -> Signal {
    Signal::new(rand_vec(rng, n)).unwrap()
}

/// Identity plus a random perturbation, comfortably non-singular.
pub fn rand_structure(rng: &mut ChaCha8Rng, k: usize) -> StructureMatrix {
    let m = DMatrix::from_fn(k, k, |i, j| {
        let p: f64 = rng.gen_range(-0.3..0.3);
        if i == j {
            1.0 + p
        } else {
            p
        }
    });
    StructureMatrix::new(m).unwrap()
}

pub fn rand_kernel(rng: &mut ChaCha8Rng, max_len: usize) -> Kernel {
    let len = rng.gen_range(1..=max_len);
    let taps = rand_vec(rng, len);
    let origin = rng.gen_range(0..len);
    Kernel::new(taps, origin).unwrap()
}

pub fn rand_stack(rng: &mut ChaCha8Rng, k: usize, n: usize) -> DerivativeStack {
    DerivativeStack::from_rows((0..k).map(|_| rand_vec(rng, n)).collect()).unwrap()
}

/// Dense circular convolution matrix: `(C g)[y] = sum_j taps[j] g[(y - j + origin) mod n]`.
pub fn conv_matrix(taps: &[f64], origin: usize, n: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(n, n);
    for y in 0..n {
        for (j, t) in taps.iter().enumerate() {
            let x = (y as isize - j as isize + origin as isize).rem_euclid(n as isize) as usize;
            c[(y, x)] += t;
        }
    }
    c
}

/// Stacked dense derivative operators, one `n x n` block per bank filter.
pub fn derivative_matrices(bank: &DerivativeBank, n: usize) -> Vec<DMatrix<f64>> {
    bank.filters()
        .iter()
        .map(|k| conv_matrix(k.taps(), k.origin(), n))
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

/// Central finite-difference gradient of `penalty_rf` in `S`.
pub fn fd_grad_s_rf(stack: &DerivativeStack, s: &StructureMatrix, cfg: &PriorConfig) -> DMatrix<f64> {
    let k = s.dim();
    let base = s.matrix().clone();
    DMatrix::from_fn(k, k, |i, j| {
        let h = 1e-6 * base[(i, j)].abs().max(1.0);
        let mut plus = base.clone();
        plus[(i, j)] += h;
        let mut minus = base.clone();
        minus[(i, j)] -= h;
        let fp = penalty_rf(stack, &StructureMatrix::new(plus).unwrap(), cfg).unwrap();
        let fm = penalty_rf(stack, &StructureMatrix::new(minus).unwrap(), cfg).unwrap();
        (fp - fm) / (2.0 * h)
    })
}

/// Central finite-difference gradient of `cost_j` in `g`.
#[allow(clippy::too_many_arguments)]
pub fn fd_grad_j(
    g: &Signal,
    f: &Signal,
    model: &DegradationModel,
    s: &StructureMatrix,
    bank: &DerivativeBank,
    lambda: f64,
    eps: f64,
) -> Vec<f64> {
    let x = g.as_slice();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            let mut p = x.to_vec();
            p[i] += h;
            let mut m = x.to_vec();
            m[i] -= h;
            let jp = cost_j(&Signal::new(p).unwrap(), f, model, s, bank, lambda, eps).unwrap();
            let jm = cost_j(&Signal::new(m).unwrap(), f, model, s, bank, lambda, eps).unwrap();
            (jp - jm) / (2.0 * h)
        })
        .collect()
}

/// Smoothed first-order TV restoration problem in dense form:
/// `1/2 |f - H g|^2 + lambda sum_x sqrt(eps + (D g)_x^2)`.
pub struct DenseTv1 {
    pub h: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub f: DVector<f64>,
    pub lambda: f64,
    pub eps: f64,
}

impl DenseTv1 {
    pub fn new(kernel: &Kernel, f: &Signal, lambda: f64, eps: f64) -> Self {
        let n = f.len();
        DenseTv1 {
            h: conv_matrix(kernel.taps(), kernel.origin(), n),
            d: conv_matrix(&[1.0, -1.0], 0, n),
            f: DVector::from_column_slice(f.as_slice()),
            lambda,
            eps,
        }
    }

    pub fn cost(&self, g: &DVector<f64>) -> f64 {
        let r = &self.f - &self.h * g;
        let dg = &self.d * g;
        0.5 * r.norm_squared() + self.lambda * dg.iter().map(|v| (self.eps + v * v).sqrt()).sum::<f64>()
    }

    pub fn grad(&self, g: &DVector<f64>) -> DVector<f64> {
        let dg = &self.d * g;
        let phi = dg.map(|v| v / (self.eps + v * v).sqrt());
        self.h.transpose() * (&self.h * g - &self.f) + self.d.transpose() * phi * self.lambda
    }

    /// Barzilai-Borwein gradient descent with Armijo backtracking, run until
    /// the gradient norm falls below `tol`.
    pub fn gradient_descent(&self, g0: &DVector<f64>, tol: f64, max_iters: usize) -> (DVector<f64>, f64) {
        let mut g = g0.clone();
        let mut grad = self.grad(&g);
        let mut cost = self.cost(&g);
        let mut step = 1e-3;
        for _ in 0..max_iters {
            if grad.norm() < tol {
                break;
            }
            let mut t = step;
            let (next, next_cost) = loop {
                let cand = &g - &grad * t;
                let c = self.cost(&cand);
                let wanted = 1e-4 * t * grad.norm_squared();
                // below cost round-off the Armijo test is noise; accept any non-increase
                let resolvable = wanted > 1e-14 * cost.abs().max(1.0);
                let accept = if resolvable {
                    c <= cost - wanted
                } else {
                    c <= cost + 1e-14 * cost.abs().max(1.0)
                };
                if accept || t < 1e-16 {
                    break (cand, c);
                }
                t *= 0.5;
            };
            let next_grad = self.grad(&next);
            let s = &next - &g;
            let y = &next_grad - &grad;
            let sy = s.dot(&y);
            step = if sy > 0.0 { s.norm_squared() / sy } else { 1e-3 };
            g = next;
            grad = next_grad;
            cost = next_cost;
        }
        (g, grad.norm())
    }
}
