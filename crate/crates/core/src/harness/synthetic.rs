//! Seeded synthetic test signals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Continuous piecewise-linear signal of length `n` through `knots` random
/// knots with values in `[-1, 1]`, knot spacing jittered around `n / knots`.
pub fn piecewise_linear(n: usize, knots: usize, seed: u64) -> Result<Signal> {
    if knots < 2 || n < 2 * knots {
        return Err(Error::InvalidValue(format!(
            "need at least 2 knots and 2 samples per knot, got {knots} knots for {n} samples"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = (n - 1) as f64 / (knots - 1) as f64;
    let mut xs: Vec<f64> = (0..knots)
        .map(|i| {
            let jitter = if i == 0 || i + 1 == knots {
                0.0
            } else {
                rng.gen_range(-0.3..0.3) * step
            };
            i as f64 * step + jitter
        })
        .collect();
    xs[knots - 1] = (n - 1) as f64;
    let ys: Vec<f64> = (0..knots).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut seg = 0;
    let samples = (0..n)
        .map(|i| {
            let x = i as f64;
            while seg + 2 < knots && x > xs[seg + 1] {
                seg += 1;
            }
            let t = (x - xs[seg]) / (xs[seg + 1] - xs[seg]);
            ys[seg] + t * (ys[seg + 1] - ys[seg])
        })
        .collect();
    Signal::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_differences_vanish_between_knots() {
        let g = piecewise_linear(512, 9, 3).unwrap();
        let x = g.as_slice();
        let kinks = x
            .windows(3)
            .filter(|w| (w[0] - 2.0 * w[1] + w[2]).abs() > 1e-12)
            .count();
        assert!(kinks <= 2 * 7, "{kinks} kinks");
        assert!(x.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn seeded() {
        assert_eq!(piecewise_linear(64, 4, 1).unwrap(), piecewise_linear(64, 4, 1).unwrap());
        assert_ne!(piecewise_linear(64, 4, 1).unwrap(), piecewise_linear(64, 4, 2).unwrap());
        assert!(piecewise_linear(5, 4, 1).is_err());
    }
}
