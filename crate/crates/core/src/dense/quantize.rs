use serde::{Deserialize, Serialize};

/// Per-dimension affine 8-bit scalar quantization.
///
/// `code = round((v - min) / scale)` clamped to `0..=255`, and
/// `v' = min + code * scale`. For values inside the calibrated range the
/// reconstruction error is at most `scale / 2`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuantizationSpec {
    pub enabled: bool,
    /// Empty until calibrated.
    pub mins: Vec<f32>,
    pub scales: Vec<f32>,
}

pub const QUANT_LEVELS: f64 = 255.0;
/// Vectors observed before the spec is frozen.
pub const CALIBRATION_SIZE: usize = 1024;
const MIN_SCALE: f32 = 1e-9;

impl QuantizationSpec {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn pending() -> Self {
        Self {
            enabled: true,
            ..Self::default()
        }
    }

    pub fn is_calibrated(&self) -> bool {
        self.enabled && !self.mins.is_empty()
    }

    /// Fit per-dimension ranges over `vectors`.
    pub fn calibrate<'a>(dims: usize, vectors: impl IntoIterator<Item = &'a [f32]>) -> Self {
        let mut mins = vec![f32::INFINITY; dims];
        let mut maxs = vec![f32::NEG_INFINITY; dims];
        let mut seen = false;
        for v in vectors {
            seen = true;
            for (d, &x) in v.iter().enumerate() {
                mins[d] = mins[d].min(x);
                maxs[d] = maxs[d].max(x);
            }
        }
        if !seen {
            mins.fill(-1.0);
            maxs.fill(1.0);
        }
        let scales = mins
            .iter()
            .zip(&maxs)
            .map(|(&lo, &hi)| (((hi as f64 - lo as f64) / QUANT_LEVELS) as f32).max(MIN_SCALE))
            .collect();
        Self {
            enabled: true,
            mins,
            scales,
        }
    }

    pub fn quantize(&self, v: &[f32]) -> Vec<u8> {
        v.iter()
            .zip(self.mins.iter().zip(&self.scales))
            .map(|(&x, (&lo, &s))| ((x as f64 - lo as f64) / s as f64).round().clamp(0.0, QUANT_LEVELS) as u8)
            .collect()
    }

    pub fn dequantize(&self, codes: &[u8]) -> Vec<f32> {
        codes
            .iter()
            .zip(self.mins.iter().zip(&self.scales))
            .map(|(&c, (&lo, &s))| (lo as f64 + c as f64 * s as f64) as f32)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_dimension_gets_positive_scale() {
        let vs = [vec![0.5f32, 0.0], vec![0.5, 1.0]];
        let spec = QuantizationSpec::calibrate(2, vs.iter().map(Vec::as_slice));
        assert!(spec.scales.iter().all(|&s| s > 0.0));
        assert_eq!(spec.dequantize(&spec.quantize(&[0.5, 1.0])), vec![0.5, 1.0]);
    }

    proptest! {
        #[test]
        fn reconstruction_within_half_step(
            data in proptest::collection::vec(proptest::collection::vec(-1.0f32..1.0, 6), 2..30)
        ) {
            let spec = QuantizationSpec::calibrate(6, data.iter().map(Vec::as_slice));
            for v in &data {
                let back = spec.dequantize(&spec.quantize(v));
                for d in 0..6 {
                    let err = (back[d] - v[d]).abs() as f64;
                    prop_assert!(err <= spec.scales[d] as f64 / 2.0 + 1e-6, "dim {} err {} scale {}", d, err, spec.scales[d]);
                }
            }
        }
    }
}
