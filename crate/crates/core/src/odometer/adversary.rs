//! Schedules built against a fixed forecasting scheme.
//!
//! Stage `k` simulates the process defined by the stages chosen so far,
//! estimates the time `N_k` after which the scheme stays within `|h_m| <= m/10`
//! with frequency at least `1 - 2^{-k}`, and picks the smallest `l_k`
//! satisfying the growth constraints.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::{
    check_cap, find_special_time, stage_a, validate_schedule, values_from_state, OdometerError, OdometerSchedule,
    OdometerState, SpecialTime, SurvivorOracle, FIRST_STAGE, MAX_BIT,
};
use crate::processes::{derive_seed, ConditionalOracle};

/// A black-box predictor `h_m(X_0^{m-1})`.
pub trait Forecaster {
    fn reset(&mut self);
    fn observe(&mut self, x: f64);
    /// Forecast of the next value given everything observed since `reset`.
    fn forecast(&mut self) -> f64;
}

#[derive(Debug, Clone, Default)]
pub struct ZeroForecaster;

impl Forecaster for ZeroForecaster {
    fn reset(&mut self) {}
    fn observe(&mut self, _x: f64) {}
    fn forecast(&mut self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Default)]
pub struct SampleMeanForecaster {
    sum: f64,
    n: u64,
}

impl Forecaster for SampleMeanForecaster {
    fn reset(&mut self) {
        *self = Self::default();
    }

    fn observe(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
    }

    fn forecast(&mut self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LastValueForecaster {
    last: f64,
}

impl Forecaster for LastValueForecaster {
    fn reset(&mut self) {
        self.last = 0.0;
    }

    fn observe(&mut self, x: f64) {
        self.last = x;
    }

    fn forecast(&mut self) -> f64 {
        self.last
    }
}

/// `h_m = m`, which is unbounded in `m`.
#[derive(Debug, Clone, Default)]
pub struct TimeIndexForecaster {
    n: u64,
}

impl Forecaster for TimeIndexForecaster {
    fn reset(&mut self) {
        self.n = 0;
    }

    fn observe(&mut self, _x: f64) {
        self.n += 1;
    }

    fn forecast(&mut self) -> f64 {
        self.n as f64
    }
}

/// Any function of the full history.
pub struct HistoryForecaster<F> {
    history: Vec<f64>,
    f: F,
}

impl<F: FnMut(&[f64]) -> f64> HistoryForecaster<F> {
    pub fn new(f: F) -> Self {
        HistoryForecaster { history: Vec::new(), f }
    }
}

impl<F: FnMut(&[f64]) -> f64> Forecaster for HistoryForecaster<F> {
    fn reset(&mut self) {
        self.history.clear();
    }

    fn observe(&mut self, x: f64) {
        self.history.push(x);
    }

    fn forecast(&mut self) -> f64 {
        (self.f)(&self.history)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Zero,
    SampleMean,
    LastValue,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Zero, Baseline::SampleMean, Baseline::LastValue];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Zero => "zero",
            Baseline::SampleMean => "sample_mean",
            Baseline::LastValue => "last_value",
        }
    }

    pub fn forecaster(self) -> Box<dyn Forecaster> {
        match self {
            Baseline::Zero => Box::new(ZeroForecaster),
            Baseline::SampleMean => Box::new(SampleMeanForecaster::default()),
            Baseline::LastValue => Box::new(LastValueForecaster::default()),
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = OdometerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| OdometerError::Parse(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryParams {
    /// Number of stages to build, starting at `k = 3`.
    pub stages: usize,
    /// Monte Carlo paths per stage.
    pub mc_paths: usize,
    /// Simulated horizon per path; `N_k` must not exceed half of it.
    pub horizon: usize,
    /// `c` in `|h_m| <= m/c` and `2^{l_k - a_k} > c·N_k`.
    pub threshold: f64,
    /// `s` in `l_k - a_k > s·l_{k-1}`.
    pub separation_factor: u32,
    /// Largest admissible `l_k`.
    pub max_bit: u32,
    pub seed: u64,
}

impl Default for AdversaryParams {
    fn default() -> Self {
        AdversaryParams {
            stages: 3,
            mc_paths: 256,
            horizon: 4096,
            threshold: 10.0,
            separation_factor: 10,
            max_bit: MAX_BIT,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub k: u64,
    pub a_k: u32,
    pub n_k: u64,
    pub l_k: u32,
    /// Fraction of paths with a violation at or after `N_k`.
    pub exceed_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarySchedule {
    pub schedule: OdometerSchedule,
    pub stages: Vec<StageReport>,
}

/// Last time `m <= horizon` with `|h_m| > m/threshold`, or 0.
fn last_violation(values: &[f64], scheme: &mut dyn Forecaster, threshold: f64) -> u64 {
    scheme.reset();
    let mut last = 0;
    for (i, &x) in values.iter().enumerate() {
        scheme.observe(x);
        let m = (i + 1) as f64;
        let h = scheme.forecast();
        if !(libm::fabs(h) <= m / threshold) {
            last = i as u64 + 1;
        }
    }
    last
}

fn minimal_l(k: u64, prev: Option<u32>, n_k: u64, params: &AdversaryParams) -> Result<u32, OdometerError> {
    let a = stage_a(k);
    let p = prev.unwrap_or(0);
    let fits = |l: u32| {
        let w = l - a;
        let big_enough = w >= 64 || (1u64 << w) as f64 > params.threshold * n_k as f64;
        let separated = prev.is_none_or(|p| p + 2 * a < l);
        big_enough && separated && w as u64 > params.separation_factor as u64 * p as u64
    };
    let mut l = (p + 1).max(a + 1);
    while !fits(l) {
        l += 1;
        if l > params.max_bit {
            return Err(OdometerError::Budget(format!("l_{k} would exceed {}", params.max_bit)));
        }
    }
    Ok(l)
}

/// Builds `l_3, l_4, …` against `scheme`.
pub fn build_adversarial_schedule(scheme: &mut dyn Forecaster, params: &AdversaryParams) -> Result<AdversarySchedule, OdometerError> {
    if params.mc_paths == 0 || params.horizon < 2 || !(params.threshold > 0.0) {
        return Err(OdometerError::Budget("Monte Carlo budget must be positive".into()));
    }
    let mut ls = Vec::new();
    let mut stages = Vec::new();
    for i in 0..params.stages as u64 {
        let k = FIRST_STAGE + i;
        let current = OdometerSchedule::new(ls.clone());
        let mut lasts: Vec<u64> = (0..params.mc_paths as u64)
            .map(|path| {
                let seed = derive_seed(params.seed, (k << 32) | path);
                let values = values_from_state(&current, &mut OdometerState::from_seed(seed), params.horizon);
                last_violation(&values, scheme, params.threshold)
            })
            .collect();
        lasts.sort_unstable();
        let confidence = 1.0 - libm::ldexp(1.0, -(k as i32));
        let rank = libm::ceil(confidence * params.mc_paths as f64) as usize;
        let n_k = (lasts[rank.clamp(1, lasts.len()) - 1] + 1).max(1);
        if n_k as usize > params.horizon / 2 {
            return Err(OdometerError::Budget(format!(
                "N_{k} estimate {n_k} exceeds half the simulated horizon {}",
                params.horizon
            )));
        }
        let l_k = minimal_l(k, ls.last().copied(), n_k, params)?;
        let exceed = lasts.iter().filter(|&&v| v >= n_k).count() as f64 / params.mc_paths as f64;
        ls.push(l_k);
        stages.push(StageReport { k, a_k: stage_a(k), n_k, l_k, exceed_fraction: exceed });
    }
    let schedule = OdometerSchedule::new(ls);
    validate_schedule(&schedule).map_err(OdometerError::InvalidSchedule)?;
    Ok(AdversarySchedule { schedule, stages })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryCertificate {
    pub k: u64,
    pub a_k: u32,
    /// Stages of the built schedule that fit the enumeration cap.
    pub certified_schedule: OdometerSchedule,
    pub special: SpecialTime,
    /// `(1/N) Σ_{n=1}^{N} |E(X_n | X_0^{n-1}) - h_n|`.
    pub cesaro_average: f64,
    /// `|E(X_m | X_0^{m-1}) - h_m| / N` at the special time.
    pub special_term: f64,
    /// `(1/6)(4/3)^{a_k}`.
    pub bound: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Per-realization certificate of Cesàro divergence of `scheme` on the
/// prefix of `schedule` whose positions fit within `cap`.
pub fn adversary_certificate(
    schedule: &OdometerSchedule,
    k: u64,
    scheme: &mut dyn Forecaster,
    seed: u64,
    slack: f64,
    cap: u32,
) -> Result<AdversaryCertificate, OdometerError> {
    let certified = schedule.truncated_to_width(cap);
    check_cap(&certified, cap)?;
    let special = find_special_time(&certified, k, seed)?;
    let n = special.horizon as usize;
    let values = values_from_state(&certified, &mut OdometerState::from_seed(special.seed), n + 1);
    let mut oracle = SurvivorOracle::new(&certified, cap)?;
    scheme.reset();
    let mut total = 0.0;
    let mut special_term = 0.0;
    for i in 1..=n {
        oracle.observe(values[i - 1]).map_err(|_| OdometerError::Consistency(i - 1))?;
        scheme.observe(values[i - 1]);
        let gap = libm::fabs(oracle.mean_next() - scheme.forecast());
        if i as u64 == special.m {
            special_term = gap / n as f64;
        }
        total += gap;
    }
    let a_k = stage_a(k);
    let bound = libm::pow(4.0 / 3.0, a_k as f64) / 6.0;
    let cesaro_average = total / n as f64;
    Ok(AdversaryCertificate {
        k,
        a_k,
        certified_schedule: certified,
        special,
        cesaro_average,
        special_term,
        bound,
        slack,
        passed: cesaro_average >= (1.0 - slack) * bound,
    })
}
