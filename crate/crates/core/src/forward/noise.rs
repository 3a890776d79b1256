//! Multiplicative-amplitude uniform noise on boundary travel times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TravelTimeData;
use crate::error::{Error, Result};

/// How the uniform variable is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// One draw per source, shared by all of its detectors.
    #[default]
    PerSource,
    /// An independent draw at every detector.
    PerDetector,
}

impl NoiseMode {
    pub fn name(self) -> &'static str {
        match self {
            NoiseMode::PerSource => "per-source",
            NoiseMode::PerDetector => "per-detector",
        }
    }
}

/// Generator for source `s`: ChaCha keyed by `seed` with the source index as
/// stream id, so draws do not depend on evaluation order.
fn source_rng(seed: u64, s: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

/// `g + δ·max|g|·ξ`, `ξ ~ U(−1, 1)`.
pub fn add_noise(data: &TravelTimeData, delta: f64, seed: u64, mode: NoiseMode) -> Result<TravelTimeData> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::invalid(format!("noise level {delta} must lie in [0, 1)")));
    }
    let mut out = data.clone();
    if delta == 0.0 {
        return Ok(out);
    }
    let amplitude = delta * data.max_abs();
    for (s, record) in out.records.iter_mut().enumerate() {
        let mut rng = source_rng(seed, s);
        match mode {
            NoiseMode::PerSource => {
                let xi: f64 = rng.random_range(-1.0..1.0);
                for face in &mut record.faces {
                    face.values.iter_mut().for_each(|v| *v += amplitude * xi);
                }
            }
            NoiseMode::PerDetector => {
                for face in &mut record.faces {
                    for v in &mut face.values {
                        *v += amplitude * rng.random_range(-1.0..1.0);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::tests::tiny_data;

    #[test]
    fn zero_noise_is_identity() {
        let data = tiny_data();
        let out = add_noise(&data, 0.0, 7, NoiseMode::PerDetector).unwrap();
        assert_eq!(out, data);
    }

    #[test]
    fn amplitude_bound_and_determinism() {
        let data = tiny_data();
        let bound = 0.05 * data.max_abs();
        for mode in [NoiseMode::PerSource, NoiseMode::PerDetector] {
            let a = add_noise(&data, 0.05, 11, mode).unwrap();
            let b = add_noise(&data, 0.05, 11, mode).unwrap();
            assert_eq!(a, b);
            let c = add_noise(&data, 0.05, 12, mode).unwrap();
            assert_ne!(a, c);
            for (ra, r0) in a.records.iter().zip(&data.records) {
                for (fa, f0) in ra.faces.iter().zip(&r0.faces) {
                    for (va, v0) in fa.values.iter().zip(&f0.values) {
                        assert!((va - v0).abs() <= bound);
                    }
                }
            }
        }
    }

    #[test]
    fn per_source_shift_is_constant_within_a_source() {
        let data = tiny_data();
        let a = add_noise(&data, 0.05, 3, NoiseMode::PerSource).unwrap();
        for (ra, r0) in a.records.iter().zip(&data.records) {
            let shift = ra.faces[0].values[0] - r0.faces[0].values[0];
            for (fa, f0) in ra.faces.iter().zip(&r0.faces) {
                for (va, v0) in fa.values.iter().zip(&f0.values) {
                    assert!(((va - v0) - shift).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_large_delta() {
        assert!(add_noise(&tiny_data(), 1.0, 0, NoiseMode::PerSource).is_err());
        assert!(add_noise(&tiny_data(), -0.1, 0, NoiseMode::PerSource).is_err());
    }
}
