//! Pattern-recurrence estimator.
//!
//! For a window `X_{-t}, …, X_{-1}` the estimator walks levels `k = 1, 2, …`:
//! the level-`k` pattern is the quantized suffix of length `λ_{k-1}`
//! (`λ_0 = 1`), `τ_k` is the distance back to its most recent earlier
//! occurrence and `λ_k = λ_{k-1} + τ_k`. The walk stops at the first level
//! whose recurrence does not fit in the window. The estimate is the mean of
//! the values `X_{-τ_j}` that followed each matched occurrence.
//!
//! [`compute_recurrence_trace`] is the direct backward scan.
//! [`OnlinePredictor`] produces identical traces for a growing history using
//! a hashed occurrence index per level, which makes long harness runs
//! tractable.

use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::quantizer::{quantize_index, QuantizeError, MAX_LEVEL};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictError {
    #[error("window must contain at least one sample")]
    EmptyWindow,
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error("recurrence search needs more than {cap} past samples")]
    DepthExceeded { cap: usize },
    #[error("estimator depth k must be at least 1")]
    ZeroDepth,
}

/// Realized recurrence recursion for one window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecurrenceTrace {
    /// `τ_1, …, τ_κ`.
    pub taus: Vec<usize>,
    /// `λ_0 = 1, λ_1, …, λ_κ`.
    pub lambdas: Vec<usize>,
    /// `X_{-τ_1}, …, X_{-τ_κ}`.
    pub picked_values: Vec<f64>,
}

impl RecurrenceTrace {
    fn start() -> Self {
        RecurrenceTrace { taus: Vec::new(), lambdas: vec![1], picked_values: Vec::new() }
    }

    /// `κ_t`, the number of completed levels.
    pub fn kappa(&self) -> usize {
        self.taus.len()
    }

    fn push(&mut self, tau: usize, picked: f64) {
        let lambda = self.lambdas.last().copied().unwrap_or(1) + tau;
        self.taus.push(tau);
        self.lambdas.push(lambda);
        self.picked_values.push(picked);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub value: f64,
    pub trace: RecurrenceTrace,
    pub fallback_used: bool,
}

impl Prediction {
    /// Mean of the picked values, or the zero fallback when `κ = 0`.
    pub fn from_trace(trace: RecurrenceTrace) -> Self {
        if trace.kappa() == 0 {
            return Prediction { value: 0.0, trace, fallback_used: true };
        }
        let sum: f64 = trace.picked_values.iter().sum();
        let value = sum / trace.kappa() as f64;
        Prediction { value, trace, fallback_used: false }
    }
}

/// Direct backward scan over `window` (last element is time `-1`).
pub fn compute_recurrence_trace(window: &[f64]) -> Result<RecurrenceTrace, PredictError> {
    let t = window.len();
    if t == 0 {
        return Err(PredictError::EmptyWindow);
    }
    let mut trace = RecurrenceTrace::start();
    let mut lambda = 1usize;
    let mut quantized = vec![0i64; t];
    for level in 1..=MAX_LEVEL {
        if lambda >= t {
            break;
        }
        for (q, &x) in quantized.iter_mut().zip(window) {
            *q = quantize_index(x, level)?;
        }
        let pattern = &quantized[t - lambda..];
        let found = (1..=t - lambda).find(|&tau| &quantized[t - lambda - tau..t - tau] == pattern);
        match found {
            Some(tau) => {
                trace.push(tau, window[t - tau]);
                lambda += tau;
            }
            None => break,
        }
    }
    Ok(trace)
}

/// Backward estimate `R̂_{-t}` from `X_{-t}^{-1}`.
pub fn backward_estimate(window: &[f64]) -> Result<Prediction, PredictError> {
    compute_recurrence_trace(window).map(Prediction::from_trace)
}

/// Forward prediction `R̂_t` of `X_t` from `X_0^{t-1}`. The finite array is
/// read exactly as a backward window, so this coincides with
/// [`backward_estimate`].
pub fn forward_predict(history: &[f64]) -> Result<Prediction, PredictError> {
    backward_estimate(history)
}

/// Checks the structural invariants of `trace` against `window` by
/// re-quantizing every claimed match.
pub fn trace_is_valid(window: &[f64], trace: &RecurrenceTrace) -> bool {
    let t = window.len();
    let kappa = trace.kappa();
    if trace.lambdas.len() != kappa + 1 || trace.picked_values.len() != kappa {
        return false;
    }
    if trace.lambdas.first() != Some(&1) {
        return false;
    }
    for j in 1..=kappa {
        let (prev, tau) = (trace.lambdas[j - 1], trace.taus[j - 1]);
        if tau == 0 || trace.lambdas[j] != prev + tau || trace.lambdas[j] > t {
            return false;
        }
        let level = j as u32;
        let same = (0..prev).all(|i| {
            let a = quantize_index(window[t - 1 - i], level);
            let b = quantize_index(window[t - 1 - i - tau], level);
            matches!((a, b), (Ok(a), Ok(b)) if a == b)
        });
        if !same || trace.picked_values[j - 1].to_bits() != window[t - tau].to_bits() {
            return false;
        }
    }
    true
}

/// Idealized backward estimator `R_k` on an unbounded past. `next_back`
/// yields `X_{-1}, X_{-2}, …` in order; at most `depth_cap` values are drawn.
pub fn r_k_infinite<F>(mut next_back: F, k: usize, depth_cap: usize) -> Result<f64, PredictError>
where
    F: FnMut() -> f64,
{
    if k == 0 {
        return Err(PredictError::ZeroDepth);
    }
    // past[m - 1] = X_{-m}
    let mut past: Vec<f64> = Vec::new();
    let mut fetch = |past: &mut Vec<f64>, m: usize| -> Result<(), PredictError> {
        while past.len() < m {
            if past.len() >= depth_cap {
                return Err(PredictError::DepthExceeded { cap: depth_cap });
            }
            past.push(next_back());
        }
        Ok(())
    };
    let mut lambda = 1usize;
    let mut sum = 0.0;
    for j in 1..=k {
        let level = u32::try_from(j).map_err(|_| QuantizeError::LevelOutOfRange(u32::MAX))?;
        fetch(&mut past, lambda)?;
        let mut quantized: Vec<i64> = Vec::with_capacity(past.len());
        let mut tau = 0usize;
        'search: loop {
            tau += 1;
            for i in 0..lambda {
                let m = i + 1 + tau;
                fetch(&mut past, m)?;
                while quantized.len() < past.len() {
                    quantized.push(quantize_index(past[quantized.len()], level)?);
                }
                if quantized[i] != quantized[m - 1] {
                    continue 'search;
                }
            }
            break;
        }
        sum += past[tau - 1];
        lambda += tau;
    }
    Ok(sum / k as f64)
}

const SPANS: [usize; 4] = [1, 4, 16, 64];
const NONE: u32 = u32::MAX;
const HASH_BASE: u64 = 0x9e37_79b9_7f4a_7c15 | 1;

#[inline]
fn mix(index: i64) -> u64 {
    // splitmix64 finalizer
    let mut z = (index as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Quantized history at one level plus, for each span `m`, a chain linking
/// every end position to the previous end position whose last `m` symbols
/// hash equally.
#[derive(Debug, Clone)]
struct LevelIndex {
    level: u32,
    quantized: Vec<i64>,
    prefix: Vec<u64>,
    heads: [HashMap<u64, u32>; SPANS.len()],
    prev: [Vec<u32>; SPANS.len()],
}

impl LevelIndex {
    fn new(level: u32) -> Self {
        LevelIndex {
            level,
            quantized: Vec::new(),
            prefix: vec![0],
            heads: Default::default(),
            prev: Default::default(),
        }
    }

    fn window_hash(&self, end: usize, span: usize, powers: &[u64; SPANS.len()], slot: usize) -> u64 {
        let hi = self.prefix[end + 1];
        let lo = self.prefix[end + 1 - span];
        hi.wrapping_sub(lo.wrapping_mul(powers[slot]))
    }

    fn append(&mut self, index: i64, powers: &[u64; SPANS.len()]) {
        let end = self.quantized.len();
        self.quantized.push(index);
        let last = *self.prefix.last().unwrap_or(&0);
        self.prefix.push(last.wrapping_mul(HASH_BASE).wrapping_add(mix(index)));
        for (slot, &span) in SPANS.iter().enumerate() {
            let link = if end + 1 >= span {
                let key = self.window_hash(end, span, powers, slot);
                self.heads[slot].insert(key, end as u32).unwrap_or(NONE)
            } else {
                NONE
            };
            self.prev[slot].push(link);
        }
    }

    /// Most recent `τ >= 1` whose length-`len` segment matches the suffix.
    fn recurrence(&self, len: usize) -> Option<usize> {
        let n = self.quantized.len();
        debug_assert!(len >= 1 && len < n);
        let slot = SPANS.iter().rposition(|&s| s <= len).unwrap_or(0);
        let pattern = &self.quantized[n - len..];
        let mut end = self.prev[slot][n - 1];
        while end != NONE {
            let e = end as usize;
            if e + 1 < len {
                return None;
            }
            if &self.quantized[e + 1 - len..=e] == pattern {
                return Some(n - 1 - e);
            }
            end = self.prev[slot][e];
        }
        None
    }
}

/// Incremental forward predictor: after pushing `X_0, …, X_{t-1}`,
/// [`OnlinePredictor::predict`] equals [`forward_predict`] on that history.
#[derive(Debug, Clone)]
pub struct OnlinePredictor {
    values: Vec<f64>,
    levels: Vec<LevelIndex>,
    powers: [u64; SPANS.len()],
}

impl Default for OnlinePredictor {
    fn default() -> Self {
        Self::new()
    }
}

impl OnlinePredictor {
    pub fn new() -> Self {
        let mut powers = [1u64; SPANS.len()];
        for (p, &span) in powers.iter_mut().zip(SPANS.iter()) {
            *p = (0..span).fold(1u64, |acc, _| acc.wrapping_mul(HASH_BASE));
        }
        OnlinePredictor { values: Vec::new(), levels: Vec::new(), powers }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn history(&self) -> &[f64] {
        &self.values
    }

    /// Appends the next observation. On error the predictor is unchanged.
    pub fn push(&mut self, x: f64) -> Result<(), PredictError> {
        let mut indices = [0i64; MAX_LEVEL as usize];
        for (slot, level) in self.levels.iter().enumerate() {
            indices[slot] = quantize_index(x, level.level)?;
        }
        if !x.is_finite() {
            return Err(QuantizeError::NonFinite.into());
        }
        self.values.push(x);
        for (level, index) in self.levels.iter_mut().zip(indices) {
            level.append(index, &self.powers);
        }
        Ok(())
    }

    fn ensure_level(&mut self, level: u32) -> Result<(), PredictError> {
        while self.levels.len() < level as usize {
            let next = self.levels.len() as u32 + 1;
            let mut index = LevelIndex::new(next);
            for &x in &self.values {
                index.append(quantize_index(x, next)?, &self.powers);
            }
            self.levels.push(index);
        }
        Ok(())
    }

    pub fn trace(&mut self) -> Result<RecurrenceTrace, PredictError> {
        let t = self.values.len();
        if t == 0 {
            return Err(PredictError::EmptyWindow);
        }
        let mut trace = RecurrenceTrace::start();
        let mut lambda = 1usize;
        for level in 1..=MAX_LEVEL {
            if lambda >= t {
                break;
            }
            self.ensure_level(level)?;
            match self.levels[level as usize - 1].recurrence(lambda) {
                Some(tau) => {
                    trace.push(tau, self.values[t - tau]);
                    lambda += tau;
                }
                None => break,
            }
        }
        Ok(trace)
    }

    /// Prediction of the next value from the history pushed so far.
    pub fn predict(&mut self) -> Result<Prediction, PredictError> {
        self.trace().map(Prediction::from_trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_trace() {
        let w = [1.0, 0.0, 1.0, 1.0, 0.0];
        let trace = compute_recurrence_trace(&w).unwrap();
        assert_eq!(trace.taus, [3]);
        assert_eq!(trace.lambdas, [1, 4]);
        assert_eq!(trace.kappa(), 1);
        assert_eq!(trace.picked_values, [1.0]);
        let p = backward_estimate(&w).unwrap();
        assert_eq!(p.value, 1.0);
        assert!(!p.fallback_used);
        assert_eq!(forward_predict(&w).unwrap(), p);
    }

    #[test]
    fn constant_window() {
        let c = 2.75;
        let trace = compute_recurrence_trace(&[c; 8]).unwrap();
        assert_eq!(trace.taus, [1; 7]);
        assert_eq!(trace.lambdas, [1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(trace.kappa(), 7);
        assert!(trace.picked_values.iter().all(|&v| v == c));
        assert_eq!(backward_estimate(&[c; 8]).unwrap().value, c);
    }

    #[test]
    fn constant_window_stops_at_level_cap() {
        let trace = compute_recurrence_trace(&[1.0; 100]).unwrap();
        assert_eq!(trace.kappa(), MAX_LEVEL as usize);
    }

    #[test]
    fn single_sample_falls_back() {
        let p = forward_predict(&[1.0]).unwrap();
        assert_eq!(p.trace.kappa(), 0);
        assert_eq!(p.value, 0.0);
        assert!(p.fallback_used);
        assert_eq!(forward_predict(&[]), Err(PredictError::EmptyWindow));
    }

    #[test]
    fn period_two() {
        // Hand trace for [0,1,0,1,0,1] (t = 6): level 1 matches 1 two steps
        // back (τ_1 = 2, λ_1 = 3); level 2 pattern (1,0,1) recurs at τ_2 = 2
        // (λ_2 = 5); level 3 pattern of length 5 would need λ_3 >= 6 + 1.
        let h = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let trace = compute_recurrence_trace(&h).unwrap();
        assert_eq!(trace.taus, [2, 2]);
        assert_eq!(trace.lambdas, [1, 3, 5]);
        assert_eq!(trace.picked_values, [0.0, 0.0]);
        // From t = 4 on the prediction is the true next symbol.
        let seq: Vec<f64> = (0..40).map(|i| (i % 2) as f64).collect();
        for t in 4..seq.len() {
            assert_eq!(forward_predict(&seq[..t]).unwrap().value, seq[t], "t = {t}");
        }
    }

    #[test]
    fn online_matches_hand_trace() {
        let mut online = OnlinePredictor::new();
        for x in [1.0, 0.0, 1.0, 1.0, 0.0] {
            online.push(x).unwrap();
        }
        let trace = online.trace().unwrap();
        assert_eq!(trace, compute_recurrence_trace(&[1.0, 0.0, 1.0, 1.0, 0.0]).unwrap());
        assert!(OnlinePredictor::new().predict().is_err());
    }

    #[test]
    fn online_rejects_bad_input_without_mutation() {
        let mut online = OnlinePredictor::new();
        online.push(1.0).unwrap();
        online.push(2.0).unwrap();
        online.predict().unwrap();
        assert!(online.push(f64::NAN).is_err());
        assert!(online.push(1e16).is_err());
        assert_eq!(online.len(), 2);
        online.push(1.0).unwrap();
        assert_eq!(online.trace().unwrap(), compute_recurrence_trace(&[1.0, 2.0, 1.0]).unwrap());
    }

    #[test]
    fn r_k_on_constant_and_errors() {
        assert_eq!(r_k_infinite(|| 3.5, 1, 100).unwrap(), 3.5);
        assert_eq!(r_k_infinite(|| 3.5, 5, 100).unwrap(), 3.5);
        assert_eq!(r_k_infinite(|| 1.0, 0, 100), Err(PredictError::ZeroDepth));
        // A strictly increasing past never repeats at level 1.
        let mut i = 0.0;
        let err = r_k_infinite(
            || {
                i += 1.0;
                i
            },
            1,
            1000,
        );
        assert_eq!(err, Err(PredictError::DepthExceeded { cap: 1000 }));
    }

    #[test]
    fn r_k_matches_finite_trace() {
        // With enough past, R_k agrees with the finite estimator's first k picks.
        let mut state = 12345u64;
        let w: Vec<f64> = (0..5000)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 60) % 3) as f64 * 0.5
            })
            .collect();
        let trace = compute_recurrence_trace(&w).unwrap();
        let k = trace.kappa();
        assert!(k >= 2, "{trace:?}");
        let mut m = w.len();
        let r = r_k_infinite(
            || {
                m -= 1;
                w[m]
            },
            k,
            w.len(),
        )
        .unwrap();
        let mean = trace.picked_values.iter().sum::<f64>() / k as f64;
        assert_eq!(r, mean);
    }

    fn small_alphabet() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop::sample::select(vec![0.0, 1.0, -0.3, 0.26]), 1..160)
    }

    proptest! {
        #[test]
        fn online_equals_naive(values in small_alphabet()) {
            let mut online = OnlinePredictor::new();
            for (t, &x) in values.iter().enumerate() {
                online.push(x).unwrap();
                let fast = online.trace().unwrap();
                let slow = compute_recurrence_trace(&values[..=t]).unwrap();
                prop_assert_eq!(fast, slow);
            }
        }

        #[test]
        fn online_equals_naive_real(values in prop::collection::vec(-3.0f64..3.0, 1..120)) {
            let mut online = OnlinePredictor::new();
            for (t, &x) in values.iter().enumerate() {
                online.push(x).unwrap();
                prop_assert_eq!(online.trace().unwrap(), compute_recurrence_trace(&values[..=t]).unwrap());
            }
        }

        #[test]
        fn traces_are_valid_and_bounded(values in small_alphabet()) {
            let trace = compute_recurrence_trace(&values).unwrap();
            prop_assert!(trace_is_valid(&values, &trace));
            let t = values.len();
            prop_assert!(*trace.lambdas.last().unwrap() <= t);
            let p = Prediction::from_trace(trace);
            if !p.fallback_used {
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(p.value >= lo && p.value <= hi);
            }
        }

        #[test]
        fn stops_only_when_next_level_fails(values in small_alphabet()) {
            let trace = compute_recurrence_trace(&values).unwrap();
            let t = values.len();
            let kappa = trace.kappa();
            let lambda = trace.lambdas[kappa];
            if kappa < MAX_LEVEL as usize && lambda < t {
                let level = kappa as u32 + 1;
                let q: Vec<i64> = values.iter().map(|&x| quantize_index(x, level).unwrap()).collect();
                for tau in 1..=t - lambda {
                    prop_assert_ne!(&q[t - lambda - tau..t - tau], &q[t - lambda..]);
                }
            }
        }

        #[test]
        fn left_extension_keeps_taus(values in small_alphabet(), extra in small_alphabet()) {
            let short = compute_recurrence_trace(&values).unwrap();
            let mut longer = extra.clone();
            longer.extend_from_slice(&values);
            let long = compute_recurrence_trace(&longer).unwrap();
            prop_assert!(long.kappa() >= short.kappa());
            prop_assert_eq!(&long.taus[..short.kappa()], &short.taus[..]);
        }

        #[test]
        fn deterministic(values in small_alphabet()) {
            prop_assert_eq!(forward_predict(&values).unwrap(), forward_predict(&values).unwrap());
        }
    }
}
