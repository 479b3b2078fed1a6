use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::SynthError;

/// Additive Gaussian noise followed by Poisson shot noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionParams {
    pub sigma: f64,
    /// Photon count scale: a value `x` becomes `Poisson(x * photons) / photons`.
    pub photons: f64,
}

impl CorruptionParams {
    pub fn for_severity(severity: u8) -> Result<Self, SynthError> {
        let (sigma, photons) = match severity {
            1 => (0.08, 60.0),
            2 => (0.12, 25.0),
            3 => (0.18, 12.0),
            s => return Err(SynthError::BadSeverity(s)),
        };
        Ok(Self { sigma, photons })
    }
}

/// Corrupts values in `[0, 1]` (any layout, e.g. interleaved RGB). Each
/// stage clips to `[0, 1]`.
pub fn corrupt_image(pixels: &[f32], params: CorruptionParams, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, params.sigma).expect("finite sigma");
    pixels
        .iter()
        .map(|&x| {
            let g = (x as f64 + gauss.sample(&mut rng)).clamp(0.0, 1.0);
            let lambda = g * params.photons;
            let shot = if lambda > 0.0 {
                Poisson::new(lambda).expect("positive rate").sample(&mut rng) / params.photons
            } else {
                0.0
            };
            shot.clamp(0.0, 1.0) as f32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(v: &[f32]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().map(|&x| x as f64).sum::<f64>() / n;
        (m, v.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / n)
    }

    #[test]
    fn severity_one_is_unbiased_on_mid_grey() {
        let img = vec![0.5f32; 100_000];
        let out = corrupt_image(&img, CorruptionParams::for_severity(1).unwrap(), 7);
        assert!((mean_var(&out).0 - 0.5).abs() < 0.01);
    }

    #[test]
    fn deterministic_and_clamped() {
        let img: Vec<f32> = (0..1000).map(|i| (i % 11) as f32 / 10.0).collect();
        let p = CorruptionParams::for_severity(3).unwrap();
        assert_eq!(corrupt_image(&img, p, 1), corrupt_image(&img, p, 1));
        let zero = corrupt_image(&[0.0; 1000], p, 2);
        assert!(zero.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(CorruptionParams::for_severity(4).is_err());
    }

    #[test]
    fn variance_grows_with_severity() {
        let img = vec![0.4f32; 50_000];
        let vars: Vec<f64> = (1..=3)
            .map(|s| mean_var(&corrupt_image(&img, CorruptionParams::for_severity(s).unwrap(), 3)).1)
            .collect();
        assert!(vars[0] < vars[1] && vars[1] < vars[2], "{vars:?}");
    }
}
