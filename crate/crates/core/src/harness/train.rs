//! Structure-matrix training from clean signals.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mmkl::{mm_kl, MmKlConfig};
use crate::prior::StructureMatrix;
use crate::signal::{DerivativeBank, DerivativeStack, Signal};

use super::io::{load_signal, LoadOptions};

/// Derivative vectors of orders `1..K` at every position where no filter
/// wraps around the end of `g`.
///
/// Training data are not periodic, so circular differences across the seam
/// would inject a spurious jump into the statistics.
pub fn valid_stack(g: &Signal, bank: &DerivativeBank) -> Result<DerivativeStack> {
    let first = bank.max_len() - 1;
    if g.len() <= first {
        return Err(Error::InvalidValue(format!(
            "training signal of length {} is too short for derivative order {}",
            g.len(),
            bank.order()
        )));
    }
    let x = g.as_slice();
    let rows = bank
        .filters()
        .iter()
        .map(|k| {
            (first..x.len())
                .map(|y| k.taps().iter().enumerate().map(|(j, t)| t * x[y + k.origin() - j]).sum())
                .collect()
        })
        .collect();
    DerivativeStack::from_rows(rows)
}

/// MM-KL on the augmented stack of all `signals`, from `S = I` with `lambda_F = 0`.
pub fn train_structure_from(signals: &[Signal], order: usize) -> Result<StructureMatrix> {
    if signals.is_empty() {
        return Err(Error::InvalidValue("no training signals".into()));
    }
    let bank = DerivativeBank::up_to(order)?;
    let stacks = signals
        .iter()
        .map(|g| valid_stack(g, &bank))
        .collect::<Result<Vec<_>>>()?;
    let stack = DerivativeStack::concat(&stacks)?;
    let cfg = MmKlConfig::default();
    let result = mm_kl(&stack, &StructureMatrix::identity(order), &cfg)?;
    if !result.converged {
        log::warn!(
            "structure training stopped after {} iterations with gradient norm {:e}",
            result.iterations,
            result.final_grad_norm
        );
    }
    Ok(result.s)
}

/// Loads every file in `paths` and trains one structure matrix on all of them.
pub fn train_structure(paths: &[&Path], order: usize, opts: LoadOptions) -> Result<StructureMatrix> {
    let signals = paths
        .iter()
        .map(|p| load_signal(p, opts))
        .collect::<Result<Vec<_>>>()?;
    train_structure_from(&signals, order)
}
