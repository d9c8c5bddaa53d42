//! Synthetic degradation: Gaussian blur followed by additive white noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::restore::DegradationModel;
use crate::signal::{Kernel, Signal};

/// Sampled Gaussian on `[-ceil(3 sigma), ceil(3 sigma)]`, unit sum, centered origin.
pub fn gaussian_kernel(variance: f64) -> Result<Kernel> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::InvalidValue(format!(
            "blur variance must be positive, got {variance}"
        )));
    }
    let half = (3.0 * variance.sqrt()).ceil() as i64;
    let taps: Vec<f64> = (-half..=half)
        .map(|x| (-((x * x) as f64) / (2.0 * variance)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    Kernel::new(taps.into_iter().map(|t| t / total).collect(), half as usize)
}

/// What the target ratio is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseReference {
    /// `10 log10(sum g^2 / sum eta^2)`.
    SignalPower,
    /// `10 log10(var(h*g) / sigma_eta^2)` with `sigma_eta^2 = mean(eta^2)`.
    BlurredVariance,
}

/// Noise power `sum eta^2` that puts `reference_signal` at `target_db`.
fn target_noise_energy(reference_signal: &Signal, target_db: f64, reference: NoiseReference) -> Result<f64> {
    if !target_db.is_finite() {
        return Err(Error::InvalidValue(format!("target dB must be finite, got {target_db}")));
    }
    let ratio = 10f64.powf(target_db / 10.0);
    let n = reference_signal.len() as f64;
    let power = match reference {
        NoiseReference::SignalPower => reference_signal.energy(),
        NoiseReference::BlurredVariance => reference_signal.variance() * n,
    };
    if !(power > 0.0) {
        return Err(Error::InvalidValue(
            "reference signal has zero power; the noise level is undefined".into(),
        ));
    }
    Ok(power / ratio)
}

/// Adds zero-mean Gaussian noise whose empirical level is exactly `target_db`.
///
/// The draw is rescaled after sampling so the realized ratio hits the target.
/// `signal` is the (already blurred) clean signal the noise is added to.
pub fn add_noise(signal: &Signal, target_db: f64, reference: NoiseReference, seed: u64) -> Result<Signal> {
    let energy = target_noise_energy(signal, target_db, reference)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..signal.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let raw_energy: f64 = raw.iter().map(|v| v * v).sum();
    let scale = (energy / raw_energy).sqrt();
    Signal::new(
        signal
            .iter()
            .zip(&raw)
            .map(|(s, e)| s + scale * e)
            .collect(),
    )
}

/// Realized BSNR in dB: `10 log10(var(h*g) / mean(eta^2))`.
pub fn bsnr_db(blurred: &Signal, noisy: &Signal) -> Result<f64> {
    let noise = noisy.sub(blurred)?;
    Ok(10.0 * (blurred.variance() / (noise.energy() / noise.len() as f64)).log10())
}

/// Realized SNR in dB: `10 log10(sum g^2 / sum eta^2)`.
pub fn snr_db(clean: &Signal, noisy: &Signal) -> Result<f64> {
    let noise = noisy.sub(clean)?;
    Ok(10.0 * (clean.energy() / noise.energy()).log10())
}

/// Blur then add noise, the measurement model `f = h*g + eta`.
pub fn degrade(
    clean: &Signal,
    model: &DegradationModel,
    target_db: f64,
    reference: NoiseReference,
    seed: u64,
) -> Result<Signal> {
    let blurred = model.forward(clean)?;
    add_noise(&blurred, target_db, reference, seed)
}

/// Derives a per-cell seed from the experiment seed and a textual cell key,
/// so noise streams do not depend on evaluation order.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
