use crate::error::{Error, Result};
use crate::signal::Signal;

/// Improvement in SNR: `20 log10(|g - f| / |g - g_hat|)` in dB.
pub fn isnr(original: &Signal, degraded: &Signal, restored: &Signal) -> Result<f64> {
    let before = original.sub(degraded)?.norm();
    let after = original.sub(restored)?.norm();
    if after == 0.0 {
        return Err(Error::InfiniteIsnr);
    }
    Ok(20.0 * (before / after).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[f64]) -> Signal {
        Signal::new(v.to_vec()).unwrap()
    }

    #[test]
    fn reference_values() {
        let g = s(&[1.0, 2.0, 3.0, 4.0]);
        let f = s(&[1.4, 2.0, 2.0, 4.0]);
        assert_eq!(isnr(&g, &f, &f).unwrap(), 0.0);

        let half = s(&[1.2, 2.0, 2.5, 4.0]);
        assert!((isnr(&g, &f, &half).unwrap() - 6.020599913279624).abs() < 1e-12);

        let double = s(&[1.8, 2.0, 1.0, 4.0]);
        assert!((isnr(&g, &f, &double).unwrap() + 6.020599913279624).abs() < 1e-12);
    }

    #[test]
    fn perfect_restoration_is_an_error() {
        let g = s(&[1.0, 2.0]);
        let f = s(&[1.5, 2.0]);
        assert!(matches!(isnr(&g, &f, &g), Err(Error::InfiniteIsnr)));
        assert!(isnr(&g, &f, &s(&[1.0])).is_err());
    }
}
