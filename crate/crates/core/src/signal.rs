//! Signals, kernels and circular convolution.
//!
//! All convolutions are periodic of length `N`. A kernel carries an `origin`,
//! the index of the tap aligned with the output sample, so that
//!
//! ```text
//! (k * g)(y) = sum_j taps[j] * g((y - j + origin) mod N)
//! ```
//!
//! With this convention `[1, -1]` at origin 0 is the backward difference
//! `g(x) - g(x-1)`. The adjoint is the matching circular correlation, which
//! makes every operator built on top of these two functions exactly adjoint
//! to its transpose.

use std::ops::Index;

use crate::error::{Error, Result};

/// A finite real-valued 1D sample sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal(Vec<f64>);

impl Signal {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidValue("signal must have at least one sample".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "signal sample {i} is not finite ({})",
                samples[i]
            )));
        }
        Ok(Signal(samples))
    }

    pub fn zeros(n: usize) -> Self {
        Signal(vec![0.0; n.max(1)])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Signal(vec![value; n.max(1)])
    }

    /// Wraps a buffer produced by internal arithmetic on finite inputs.
    pub(crate) fn from_vec_unchecked(samples: Vec<f64>) -> Self {
        debug_assert!(!samples.is_empty());
        Signal(samples)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn dot(&self, other: &Signal) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Circular shift: `out[(i + s) mod N] = self[i]`.
    pub fn shift(&self, s: isize) -> Signal {
        let n = self.len() as isize;
        let mut out = vec![0.0; self.len()];
        for (i, &v) in self.0.iter().enumerate() {
            out[((i as isize + s).rem_euclid(n)) as usize] = v;
        }
        Signal(out)
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        check_len(self.len(), other.len())?;
        Ok(Signal(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.len() as f64
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.0.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

impl Index<usize> for Signal {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for Signal {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Signal::new(v)
    }
}

/// A finite discrete filter with the index of the tap aligned with `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    taps: Vec<f64>,
    origin: usize,
}

impl Kernel {
    pub fn new(taps: Vec<f64>, origin: usize) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidValue("kernel has no taps".into()));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidValue("kernel taps must be finite".into()));
        }
        if taps.iter().all(|&t| t == 0.0) {
            return Err(Error::InvalidValue("kernel needs at least one nonzero tap".into()));
        }
        if origin >= taps.len() {
            return Err(Error::InvalidValue(format!(
                "kernel origin {origin} outside taps of length {}",
                taps.len()
            )));
        }
        Ok(Kernel { taps, origin })
    }

    /// The unit impulse.
    pub fn delta() -> Self {
        Kernel {
            taps: vec![1.0],
            origin: 0,
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Sum of squared taps.
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    pub fn is_delta(&self) -> bool {
        self.taps.len() == 1 && self.taps[0] == 1.0
    }

    /// Full linear convolution of two kernels; origins add.
    pub fn compose(&self, other: &Kernel) -> Kernel {
        let mut taps = vec![0.0; self.len() + other.len() - 1];
        for (i, a) in self.taps.iter().enumerate() {
            for (j, b) in other.taps.iter().enumerate() {
                taps[i + j] += a * b;
            }
        }
        Kernel {
            taps,
            origin: self.origin + other.origin,
        }
    }

    /// Linear combination `sum_i coeffs[i] * kernels[i]`, aligned on origin 0.
    ///
    /// All kernels must have origin 0.
    pub(crate) fn combine(kernels: &[Kernel], coeffs: &[f64]) -> Vec<f64> {
        let len = kernels.iter().map(Kernel::len).max().unwrap_or(0);
        let mut taps = vec![0.0; len];
        for (k, &c) in kernels.iter().zip(coeffs) {
            debug_assert_eq!(k.origin, 0);
            for (t, v) in taps.iter_mut().zip(&k.taps) {
                *t += c * v;
            }
        }
        taps
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}

fn check_fits(k: &Kernel, n: usize) -> Result<()> {
    if k.len() > n {
        return Err(Error::KernelTooLong {
            kernel: k.len(),
            signal: n,
        });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `out[y] = sum_j taps[j] * g[(y - j + origin) mod N]`.
pub(crate) fn convolve_into(g: &[f64], taps: &[f64], origin: usize, out: &mut [f64]) {
    let n = g.len();
    let len = taps.len();
    let wrapped = |y: usize| {
        let base = y + origin + n;
        taps.iter()
            .enumerate()
            .map(|(j, &t)| t * g[(base - j) % n])
            .sum::<f64>()
    };
    // indices y + origin - j stay inside [0, n) for every tap
    let lo = (len - 1).saturating_sub(origin).min(n);
    let hi = n.saturating_sub(origin).max(lo);
    for (y, o) in out.iter_mut().enumerate().take(lo) {
        *o = wrapped(y);
    }
    for y in lo..hi {
        let window = &g[y + origin + 1 - len..=y + origin];
        let mut acc = 0.0;
        for (t, v) in taps.iter().zip(window.iter().rev()) {
            acc += t * v;
        }
        out[y] = acc;
    }
    for y in hi..n {
        out[y] = wrapped(y);
    }
}

/// `out[x] = sum_j taps[j] * u[(x + j - origin) mod N]`, the exact transpose of
/// [`convolve_into`].
pub(crate) fn correlate_into(u: &[f64], taps: &[f64], origin: usize, out: &mut [f64]) {
    let n = u.len();
    let len = taps.len();
    let wrapped = |x: usize| {
        let base = x + n - origin;
        taps.iter()
            .enumerate()
            .map(|(j, &t)| t * u[(base + j) % n])
            .sum::<f64>()
    };
    // indices x + j - origin stay inside [0, n) for every tap
    let lo = origin.min(n);
    let hi = (n + origin + 1).saturating_sub(len).max(lo).min(n);
    for (x, o) in out.iter_mut().enumerate().take(lo) {
        *o = wrapped(x);
    }
    for x in lo..hi {
        let window = &u[x - origin..x - origin + len];
        let mut acc = 0.0;
        for (t, v) in taps.iter().zip(window) {
            acc += t * v;
        }
        out[x] = acc;
    }
    for x in hi..n {
        out[x] = wrapped(x);
    }
}

/// Circular convolution of `g` with `k`.
pub fn convolve(g: &Signal, k: &Kernel) -> Result<Signal> {
    check_fits(k, g.len())?;
    let mut out = vec![0.0; g.len()];
    convolve_into(g.as_slice(), &k.taps, k.origin, &mut out);
    Ok(Signal(out))
}

/// Circular correlation of `u` with `k`: the adjoint of [`convolve`].
pub fn adjoint_convolve(u: &Signal, k: &Kernel) -> Result<Signal> {
    check_fits(k, u.len())?;
    let mut out = vec![0.0; u.len()];
    correlate_into(u.as_slice(), &k.taps, k.origin, &mut out);
    Ok(Signal(out))
}

/// Discrete derivative filter of order 1 to 4, origin at the first tap.
pub fn derivative_filter(order: usize) -> Result<Kernel> {
    let taps = match order {
        1 => vec![1.0, -1.0],
        2 => vec![1.0, -2.0, 1.0],
        3 => vec![-1.0, 3.0, -3.0, 1.0],
        4 => vec![1.0, -4.0, 6.0, -4.0, 1.0],
        _ => {
            return Err(Error::InvalidValue(format!(
                "derivative order must be in 1..=4, got {order}"
            )))
        }
    };
    Ok(Kernel { taps, origin: 0 })
}

/// An ordered set of derivative filters, one row of the derivative stack each.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBank {
    orders: Vec<usize>,
    filters: Vec<Kernel>,
}

impl DerivativeBank {
    /// Orders `1..=k`.
    pub fn up_to(k: usize) -> Result<Self> {
        if !(1..=4).contains(&k) {
            return Err(Error::InvalidValue(format!(
                "bank order must be in 1..=4, got {k}"
            )));
        }
        Self::with_orders(&(1..=k).collect::<Vec<_>>())
    }

    /// A single-row bank holding only the filter of order `p`.
    pub fn single(p: usize) -> Result<Self> {
        Self::with_orders(&[p])
    }

    pub fn with_orders(orders: &[usize]) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::InvalidValue("derivative bank needs at least one order".into()));
        }
        let filters = orders
            .iter()
            .map(|&p| derivative_filter(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(DerivativeBank {
            orders: orders.to_vec(),
            filters,
        })
    }

    /// Number of rows `K` of the stacks this bank produces.
    pub fn order(&self) -> usize {
        self.filters.len()
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn filters(&self) -> &[Kernel] {
        &self.filters
    }

    pub fn max_len(&self) -> usize {
        self.filters.iter().map(Kernel::len).max().unwrap_or(0)
    }
}

/// `K x N` matrix of multi-order derivatives; column `x` holds `v(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeStack {
    k: usize,
    n: usize,
    // row-major, row p is contiguous
    values: Vec<f64>,
}

impl DerivativeStack {
    pub fn zeros(k: usize, n: usize) -> Self {
        DerivativeStack {
            k,
            n,
            values: vec![0.0; k * n],
        }
    }

    /// Builds a stack from its rows.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::DimensionMismatch("stack needs at least one row".into()));
        }
        let n = rows[0].len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("stack rows differ in length".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("stack entries must be finite".into()));
        }
        Ok(DerivativeStack {
            k,
            n,
            values: rows.into_iter().flatten().collect(),
        })
    }

    /// Builds a stack from its columns `v(x)`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = columns.first() else {
            return Err(Error::DimensionMismatch("stack needs at least one column".into()));
        };
        let k = first.len();
        let rows = (0..k)
            .map(|p| {
                columns
                    .iter()
                    .map(|c| {
                        c.get(p).copied().ok_or_else(|| {
                            Error::DimensionMismatch("stack columns differ in length".into())
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows)
    }

    /// Concatenates stacks of equal order along the sample axis.
    pub fn concat(stacks: &[DerivativeStack]) -> Result<Self> {
        let Some(first) = stacks.first() else {
            return Err(Error::DimensionMismatch("nothing to concatenate".into()));
        };
        let k = first.k;
        if stacks.iter().any(|s| s.k != k) {
            return Err(Error::DimensionMismatch("stacks differ in order".into()));
        }
        let rows = (0..k)
            .map(|p| stacks.iter().flat_map(|s| s.row(p).iter().copied()).collect())
            .collect();
        Self::from_rows(rows)
    }

    /// Number of rows `K`.
    pub fn order(&self) -> usize {
        self.k
    }

    /// Number of columns `N`.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.values[p * self.n..(p + 1) * self.n]
    }

    pub(crate) fn row_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.values[p * self.n..(p + 1) * self.n]
    }

    pub fn get(&self, p: usize, x: usize) -> f64 {
        self.values[p * self.n + x]
    }

    pub fn column(&self, x: usize) -> Vec<f64> {
        (0..self.k).map(|p| self.get(p, x)).collect()
    }

    pub fn dot(&self, other: &DerivativeStack) -> f64 {
        dot(&self.values, &other.values)
    }

    /// Row-major entries, row `p` first.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Applies every filter of `bank` to `g`; row `p` is `g` convolved with filter `p`.
pub fn derivative_stack(g: &Signal, bank: &DerivativeBank) -> Result<DerivativeStack> {
    let n = g.len();
    let mut stack = DerivativeStack::zeros(bank.order(), n);
    for (p, f) in bank.filters.iter().enumerate() {
        check_fits(f, n)?;
        convolve_into(g.as_slice(), &f.taps, f.origin, stack.row_mut(p));
    }
    Ok(stack)
}

/// Exact adjoint of [`derivative_stack`]: the sum over rows of the correlated rows.
pub fn adjoint_derivative_stack(u: &DerivativeStack, bank: &DerivativeBank) -> Result<Signal> {
    if u.order() != bank.order() {
        return Err(Error::DimensionMismatch(format!(
            "stack has {} rows but bank has {} filters",
            u.order(),
            bank.order()
        )));
    }
    let n = u.len();
    let mut out = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for (p, f) in bank.filters.iter().enumerate() {
        check_fits(f, n)?;
        correlate_into(u.row(p), &f.taps, f.origin, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
    }
    Ok(Signal(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(v: &[f64]) -> Signal {
        Signal::new(v.to_vec()).unwrap()
    }

    #[test]
    fn convolve_identity() {
        let g = sig(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(convolve(&g, &Kernel::delta()).unwrap(), g);
    }

    #[test]
    fn difference_annihilates_constants() {
        let g = Signal::constant(9, 3.7);
        let d = derivative_filter(1).unwrap();
        assert!(convolve(&g, &d).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_difference_hand_expanded() {
        let g = sig(&[0.0, 0.0, 1.0, 0.0]);
        let d = derivative_filter(1).unwrap();
        assert_eq!(convolve(&g, &d).unwrap().as_slice(), &[0.0, 0.0, 1.0, -1.0]);
    }

    #[test]
    fn adjoint_identity_case() {
        let u = sig(&[0.3, -1.0, 2.0, 5.5]);
        assert_eq!(adjoint_convolve(&u, &Kernel::delta()).unwrap(), u);
    }

    #[test]
    fn adjoint_of_difference_on_impulse() {
        // (D^T u)(x) = u(x) - u(x+1), so the impulse at 0 spreads to x = N-1
        let u = sig(&[1.0, 0.0, 0.0, 0.0]);
        let d = derivative_filter(1).unwrap();
        assert_eq!(
            adjoint_convolve(&u, &d).unwrap().as_slice(),
            &[1.0, 0.0, 0.0, -1.0]
        );
    }

    #[test]
    fn kernel_longer_than_signal() {
        let g = sig(&[1.0, 2.0]);
        let k = derivative_filter(2).unwrap();
        assert!(matches!(
            convolve(&g, &k),
            Err(Error::KernelTooLong { kernel: 3, signal: 2 })
        ));
        assert!(adjoint_convolve(&g, &k).is_err());
    }

    #[test]
    fn kernel_validation() {
        assert!(Kernel::new(vec![], 0).is_err());
        assert!(Kernel::new(vec![0.0, 0.0], 0).is_err());
        assert!(Kernel::new(vec![1.0, f64::NAN], 0).is_err());
        assert!(Kernel::new(vec![1.0], 1).is_err());
        assert!(Signal::new(vec![]).is_err());
        assert!(Signal::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn stack_of_constant_is_zero() {
        let bank = DerivativeBank::up_to(4).unwrap();
        let s = derivative_stack(&Signal::constant(16, -2.5), &bank).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stack_of_impulse_hand_expanded() {
        let g = sig(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let bank = DerivativeBank::up_to(2).unwrap();
        let s = derivative_stack(&g, &bank).unwrap();
        assert_eq!(s.row(0), &[0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.row(1), &[0.0, 0.0, 1.0, -2.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn second_difference_kills_lines_in_interior() {
        let g = Signal::new((0..12).map(|i| 0.5 * i as f64 - 1.0).collect()).unwrap();
        let bank = DerivativeBank::up_to(2).unwrap();
        let s = derivative_stack(&g, &bank).unwrap();
        // rows touching the wrap (x = 0, 1) see the discontinuity
        for x in 2..12 {
            assert!(s.get(1, x).abs() < 1e-12, "x={x}");
        }
        assert!(s.get(1, 0).abs() > 1.0);
    }

    #[test]
    fn adjoint_stack_zero_and_single_row() {
        let bank = DerivativeBank::up_to(3).unwrap();
        let z = adjoint_derivative_stack(&DerivativeStack::zeros(3, 10), &bank).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));

        let bank1 = DerivativeBank::up_to(1).unwrap();
        let mut row = vec![0.0; 6];
        row[0] = 1.0;
        let u = DerivativeStack::from_rows(vec![row.clone()]).unwrap();
        let got = adjoint_derivative_stack(&u, &bank1).unwrap();
        let want = adjoint_convolve(&sig(&row), &bank1.filters()[0]).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn adjoint_stack_dimension_mismatch() {
        let bank = DerivativeBank::up_to(2).unwrap();
        assert!(matches!(
            adjoint_derivative_stack(&DerivativeStack::zeros(3, 8), &bank),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn filters_are_repeated_differences() {
        let d1 = derivative_filter(1).unwrap();
        let d2 = d1.compose(&d1);
        assert_eq!(d2.taps(), derivative_filter(2).unwrap().taps());
        let d3 = d2.compose(&d1);
        let f3 = derivative_filter(3).unwrap();
        for (a, b) in d3.taps().iter().zip(f3.taps()) {
            assert_eq!(*a, -*b);
        }
        let d4 = d2.compose(&d2);
        assert_eq!(d4.taps(), derivative_filter(4).unwrap().taps());
        for p in 1..=4 {
            let f = derivative_filter(p).unwrap();
            assert_eq!(f.len(), p + 1);
            assert_eq!(f.taps().iter().sum::<f64>(), 0.0);
        }
        assert!(derivative_filter(0).is_err());
        assert!(derivative_filter(5).is_err());
        assert!(DerivativeBank::up_to(5).is_err());
    }

    fn finite_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, n)
    }

    proptest! {
        #[test]
        fn convolve_adjoint_identity(
            g in finite_vec(24),
            u in finite_vec(24),
            taps in proptest::collection::vec(-3.0f64..3.0, 1..8),
            origin_frac in 0.0f64..1.0,
        ) {
            prop_assume!(taps.iter().any(|&t| t != 0.0));
            let origin = ((taps.len() as f64) * origin_frac) as usize % taps.len();
            let k = Kernel::new(taps, origin).unwrap();
            let g = Signal::new(g).unwrap();
            let u = Signal::new(u).unwrap();
            let lhs = convolve(&g, &k).unwrap().dot(&u);
            let rhs = g.dot(&adjoint_convolve(&u, &k).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (g.norm() * u.norm()).max(1.0));
        }

        #[test]
        fn stack_adjoint_identity(g in finite_vec(20), u in finite_vec(80)) {
            let bank = DerivativeBank::up_to(4).unwrap();
            let g = Signal::new(g).unwrap();
            let rows = u.chunks(20).map(|c| c.to_vec()).collect();
            let u = DerivativeStack::from_rows(rows).unwrap();
            let lhs = derivative_stack(&g, &bank).unwrap().dot(&u);
            let rhs = g.dot(&adjoint_derivative_stack(&u, &bank).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (g.norm() * norm(u.values())).max(1.0));
        }

        #[test]
        fn shift_equivariance(g in finite_vec(17), s in -20isize..20, p in 1usize..=4) {
            let g = Signal::new(g).unwrap();
            let k = derivative_filter(p).unwrap();
            let a = convolve(&g.shift(s), &k).unwrap();
            let b = convolve(&g, &k).unwrap().shift(s);
            prop_assert_eq!(a, b);
        }
    }
}
