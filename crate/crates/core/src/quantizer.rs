//! Level-`k` lattice quantizer.
//!
//! A real `x` is mapped toward zero onto the grid `i·2^(-k)`. Positive cells
//! are closed on the left (`i·2^(-k) <= x < (i+1)·2^(-k)`), negative cells are
//! closed on the right (`-(i+1)·2^(-k) < x <= -i·2^(-k)`), and the center cell
//! is the open interval `(-2^(-k), 2^(-k))`. Values are stored as the integer
//! lattice index so that pattern equality is exact integer comparison.

use alloc::vec::Vec;

/// Highest supported quantization level.
pub const MAX_LEVEL: u32 = 30;

/// Largest admissible index magnitude; keeps `index·2^(-level)` exact in `f64`.
pub const MAX_INDEX: i64 = 1 << 53;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum QuantizeError {
    #[error("input is not a finite real number")]
    NonFinite,
    #[error("level {0} exceeds the maximum level {MAX_LEVEL}")]
    LevelOutOfRange(u32),
    #[error("index for |x|·2^k overflows the lattice range at level {0}")]
    IndexOutOfRange(u32),
    #[error("cannot quantize an empty segment")]
    EmptySegment,
}

/// A point of the level-`k` lattice, representing `index·2^(-level)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuantizedValue {
    pub level: u32,
    pub index: i64,
}

impl QuantizedValue {
    pub fn value(&self) -> f64 {
        dequantize(*self)
    }
}

/// A quantized data segment, most recent sample last.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuantizedPattern {
    pub level: u32,
    pub indices: Vec<i64>,
}

impl QuantizedPattern {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[inline]
fn scale(k: u32) -> f64 {
    (1u64 << k) as f64
}

/// Lattice index of `x` at level `k` without building a [`QuantizedValue`].
#[inline]
pub fn quantize_index(x: f64, k: u32) -> Result<i64, QuantizeError> {
    if !x.is_finite() {
        return Err(QuantizeError::NonFinite);
    }
    if k > MAX_LEVEL {
        return Err(QuantizeError::LevelOutOfRange(k));
    }
    // Multiplication by a power of two is exact, so floor() sees the true cell.
    let magnitude = libm::floor(libm::fabs(x) * scale(k));
    if magnitude > MAX_INDEX as f64 {
        return Err(QuantizeError::IndexOutOfRange(k));
    }
    let index = magnitude as i64;
    Ok(if x < 0.0 { -index } else { index })
}

pub fn quantize(x: f64, k: u32) -> Result<QuantizedValue, QuantizeError> {
    quantize_index(x, k).map(|index| QuantizedValue { level: k, index })
}

pub fn dequantize(q: QuantizedValue) -> f64 {
    q.index as f64 / scale(q.level.min(63))
}

pub fn quantize_segment(xs: &[f64], k: u32) -> Result<QuantizedPattern, QuantizeError> {
    if xs.is_empty() {
        return Err(QuantizeError::EmptySegment);
    }
    let indices = xs
        .iter()
        .map(|&x| quantize_index(x, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QuantizedPattern { level: k, indices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn paper_cases() {
        assert_eq!(quantize(0.3, 1).unwrap(), QuantizedValue { level: 1, index: 0 });
        assert_eq!(quantize(0.3, 2).unwrap().index, 1);
        assert_eq!(quantize(0.3, 2).unwrap().value(), 0.25);
        assert_eq!(quantize(-0.3, 2).unwrap().index, -1);
        assert_eq!(quantize(-0.3, 2).unwrap().value(), -0.25);
        for k in 0..=MAX_LEVEL {
            assert_eq!(quantize(0.0, k).unwrap().index, 0);
            assert_eq!(quantize(-0.0, k).unwrap().index, 0);
        }
    }

    #[test]
    fn cell_boundaries() {
        // i·2^-k lands on i, -i·2^-k lands on -i.
        assert_eq!(quantize(0.75, 2).unwrap().index, 3);
        assert_eq!(quantize(-0.75, 2).unwrap().index, -3);
        assert_eq!(quantize(0.25, 2).unwrap().index, 1);
        assert_eq!(quantize(-0.25, 2).unwrap().index, -1);
        // Just inside the center cell.
        let below = f64::from_bits(0.25f64.to_bits() - 1);
        assert_eq!(quantize(below, 2).unwrap().index, 0);
        assert_eq!(quantize(-below, 2).unwrap().index, 0);
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(dequantize(QuantizedValue { level: 2, index: 1 }), 0.25);
        assert_eq!(dequantize(QuantizedValue { level: 3, index: -5 }), -0.625);
        assert_eq!(dequantize(quantize(0.3, 2).unwrap()), 0.25);
    }

    #[test]
    fn segments() {
        let p = quantize_segment(&[1.0, 0.0, 1.0, 1.0, 0.0], 2).unwrap();
        assert_eq!(p.indices, [4, 0, 4, 4, 0]);
        assert_eq!(quantize_segment(&[0.3, -0.3], 2).unwrap().indices, [1, -1]);
        assert_eq!(quantize_segment(&[], 3), Err(QuantizeError::EmptySegment));
        assert_eq!(
            quantize_segment(&[1.0, f64::NAN], 3),
            Err(QuantizeError::NonFinite)
        );
    }

    #[test]
    fn error_paths() {
        assert_eq!(quantize(f64::INFINITY, 0), Err(QuantizeError::NonFinite));
        assert_eq!(quantize(1.0, 31), Err(QuantizeError::LevelOutOfRange(31)));
        assert_eq!(quantize(1e10, 30), Err(QuantizeError::IndexOutOfRange(30)));
        assert!(quantize(1e9, 20).is_ok());
    }

    proptest! {
        #[test]
        fn approximation_and_shrinkage(x in -1.0e4f64..1.0e4, k in 0u32..=MAX_LEVEL) {
            let q = quantize(x, k).unwrap();
            let v = dequantize(q);
            prop_assert!(libm::fabs(v - x) < 1.0 / scale(k));
            prop_assert!(libm::fabs(v) <= libm::fabs(x));
            prop_assert_eq!(q.index == 0, libm::fabs(x) < 1.0 / scale(k));
        }

        #[test]
        fn idempotent(index in -(1i64 << 40)..(1i64 << 40), k in 0u32..=MAX_LEVEL) {
            let q = QuantizedValue { level: k, index };
            prop_assert_eq!(quantize(dequantize(q), k).unwrap(), q);
        }

        #[test]
        fn monotone(x in -1.0e3f64..1.0e3, y in -1.0e3f64..1.0e3, k in 0u32..=20) {
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(dequantize(quantize(lo, k).unwrap()) <= dequantize(quantize(hi, k).unwrap()));
        }

        #[test]
        fn integers_are_fixed(n in -100_000i64..100_000, k in 0u32..=20) {
            let q = quantize(n as f64, k).unwrap();
            prop_assert_eq!(q.index, n << k);
            prop_assert_eq!(dequantize(q), n as f64);
        }
    }
}
