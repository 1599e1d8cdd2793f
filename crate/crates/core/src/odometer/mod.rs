//! Binary odometer counterexample.
//!
//! A point `ω` is an infinite sequence of fair bits `ω_1, ω_2, …`, read as a
//! 2-adic integer with `ω_1` least significant; `T` adds one with carry.
//! Stages are numbered from `k = 3`, with `k = 2^{a_k} + b_k`,
//! `1 <= b_k <= 2^{a_k}`, and a schedule fixes the bit positions `l_k`.

pub mod adversary;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::processes::{abs_pow, derive_seed, rng_for, ConditionalOracle, HiddenChain, ProcessError, ProcessPath, ProcessSpec};

/// First stage index of a schedule.
pub const FIRST_STAGE: u64 = 3;

/// Largest admissible `l_k`; keeps `2^{l_k}` finite in `f64`.
pub const MAX_BIT: u32 = 1000;

/// Default bound on `l_K` for exact enumeration over `2^{l_K}` prefixes.
pub const ENUMERATION_CAP: u32 = 24;

/// Hard ceiling for the enumeration cap (survivors are stored as `u32`).
pub const MAX_ENUMERATION_CAP: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// `l_k < l_{k'} - 2 a_{k'}` fails for `k < k'`.
    Separation { k: u64, k_prime: u64 },
    /// `l_k - a_k >= 1` fails.
    Positivity { k: u64 },
    /// `l_k` exceeds [`MAX_BIT`].
    TooLarge { k: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Separation { k, k_prime } => write!(f, "separation fails between stages {k} and {k_prime}"),
            Violation::Positivity { k } => write!(f, "l_{k} - a_{k} < 1"),
            Violation::TooLarge { k } => write!(f, "l_{k} exceeds {MAX_BIT}"),
        }
    }
}

fn join_violations(vs: &[Violation]) -> String {
    let parts: Vec<String> = vs.iter().map(|v| format!("{v}")).collect();
    parts.join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OdometerError {
    #[error("invalid schedule: {}", join_violations(.0))]
    InvalidSchedule(Vec<Violation>),
    #[error("cannot parse schedule: {0}")]
    Parse(String),
    #[error("stage index {0} is below 3")]
    StageIndex(u64),
    #[error("stage {k} is outside the schedule range {first}..={last}")]
    StageOutOfRange { k: u64, first: u64, last: u64 },
    #[error("l_K = {width} exceeds the enumeration cap {cap}")]
    EnumerationCap { width: u32, cap: u32 },
    #[error("observed window has probability zero at time {0}")]
    Consistency(usize),
    #[error("no point of E_{k} found in {attempts} draws")]
    SearchExhausted { k: u64, attempts: u64 },
    #[error("budget exceeded: {0}")]
    Budget(String),
}

/// `(a_k, b_k)` with `k = 2^{a_k} + b_k`, `1 <= b_k <= 2^{a_k}`.
pub fn stage_exponents(k: u64) -> Result<(u32, u64), OdometerError> {
    if k < FIRST_STAGE {
        return Err(OdometerError::StageIndex(k));
    }
    let a = 63 - (k - 1).leading_zeros();
    Ok((a, k - (1u64 << a)))
}

fn stage_a(k: u64) -> u32 {
    stage_exponents(k).map_or(0, |(a, _)| a)
}

/// Bit positions `l_3 < l_4 < …`, stored from stage 3 onward.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct OdometerSchedule {
    ls: Vec<u32>,
}

impl OdometerSchedule {
    /// Wraps positions without checking them; see [`validate_schedule`].
    pub fn new(ls: Vec<u32>) -> Self {
        OdometerSchedule { ls }
    }

    pub fn validated(ls: Vec<u32>) -> Result<Self, OdometerError> {
        let s = Self::new(ls);
        validate_schedule(&s).map_err(OdometerError::InvalidSchedule)?;
        Ok(s)
    }

    pub fn positions(&self) -> &[u32] {
        &self.ls
    }

    pub fn is_empty(&self) -> bool {
        self.ls.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ls.len()
    }

    /// Last stage index `K`, or `None` for an empty schedule.
    pub fn last_stage(&self) -> Option<u64> {
        (!self.ls.is_empty()).then(|| FIRST_STAGE + self.ls.len() as u64 - 1)
    }

    pub fn stages(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.ls.len() as u64).map(|i| FIRST_STAGE + i)
    }

    pub fn l(&self, k: u64) -> Option<u32> {
        k.checked_sub(FIRST_STAGE).and_then(|i| self.ls.get(i as usize).copied())
    }

    fn l_checked(&self, k: u64) -> Result<u32, OdometerError> {
        self.l(k).ok_or(OdometerError::StageOutOfRange {
            k,
            first: FIRST_STAGE,
            last: self.last_stage().unwrap_or(FIRST_STAGE - 1),
        })
    }

    /// `l_K`, the number of bits the truncated process reads.
    pub fn width(&self) -> u32 {
        self.ls.last().copied().unwrap_or(0)
    }

    /// Stages `3..=k` only.
    pub fn truncated(&self, k: u64) -> Self {
        let keep = k.saturating_sub(FIRST_STAGE - 1).min(self.ls.len() as u64) as usize;
        Self::new(self.ls[..keep].to_vec())
    }

    /// Stages with `l_k <= cap`.
    pub fn truncated_to_width(&self, cap: u32) -> Self {
        Self::new(self.ls.iter().copied().take_while(|&l| l <= cap).collect())
    }

    /// Value of `f` on `C_k`: `2^{l_k} / 3^{a_k}`.
    pub fn c_value(&self, k: u64) -> Option<f64> {
        self.l(k).map(|l| libm::ldexp(1.0, l as i32) / libm::pow(3.0, stage_a(k) as f64))
    }
}

/// Value of `f` on `D_k`: `10^{-k}`.
pub fn d_value(k: u64) -> f64 {
    libm::pow(10.0, -(k as f64))
}

impl fmt::Display for OdometerSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.ls.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for OdometerSchedule {
    type Err = OdometerError;

    /// Parses `"l_3,l_4,…"` and validates the result.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let ls = s
            .split(',')
            .map(|part| {
                let part = part.trim();
                part.parse::<u32>()
                    .map_err(|e| OdometerError::Parse(format!("{part:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::validated(ls)
    }
}

pub fn validate_schedule(schedule: &OdometerSchedule) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let stages: Vec<(u64, u32, u32)> = schedule
        .stages()
        .zip(schedule.positions())
        .map(|(k, &l)| (k, l, stage_a(k)))
        .collect();
    for &(k, l, a) in &stages {
        if l > MAX_BIT {
            violations.push(Violation::TooLarge { k });
        }
        if l <= a {
            violations.push(Violation::Positivity { k });
        }
    }
    for (i, &(k, l, _)) in stages.iter().enumerate() {
        for &(k_prime, l_prime, a_prime) in &stages[i + 1..] {
            if l as i64 >= l_prime as i64 - 2 * a_prime as i64 {
                violations.push(Violation::Separation { k, k_prime });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// A point `ω` whose bits are drawn lazily from a seeded stream.
///
/// Bit `i` is always the `i`-th draw, so the point does not depend on the
/// order in which bits are inspected.
#[derive(Debug, Clone)]
pub struct OdometerState {
    bits: Vec<bool>,
    drawn: usize,
    rng: ChaCha8Rng,
}

impl OdometerState {
    pub fn from_seed(seed: u64) -> Self {
        OdometerState { bits: Vec::new(), drawn: 0, rng: rng_for(seed) }
    }

    /// Fixed leading bits, with later bits drawn from `seed`'s stream.
    pub fn from_prefix(prefix: &[bool], seed: u64) -> Self {
        let mut rng = rng_for(seed);
        for _ in prefix {
            let _: bool = rng.random();
        }
        OdometerState { bits: prefix.to_vec(), drawn: prefix.len(), rng }
    }

    /// Bit `i`, 1-indexed.
    pub fn bit(&mut self, i: u32) -> bool {
        let i = i as usize;
        while self.drawn < i {
            let b: bool = self.rng.random();
            self.bits.push(b);
            self.drawn += 1;
        }
        self.bits[i - 1]
    }

    fn set_bit(&mut self, i: u32, value: bool) {
        self.bit(i);
        self.bits[i as usize - 1] = value;
    }

    /// Bits materialized so far.
    pub fn prefix(&self) -> &[bool] {
        &self.bits
    }

    /// `ω_1 + 2 ω_2 + … + 2^{width-1} ω_width`.
    pub fn low_bits(&mut self, width: u32) -> u64 {
        assert!(width <= 64, "low_bits reads at most 64 bits");
        (1..=width).fold(0u64, |acc, i| acc | (u64::from(self.bit(i)) << (i - 1)))
    }

    /// `ω <- T^n ω`.
    pub fn advance(&mut self, mut n: u64) {
        let mut carry = false;
        let mut i = 1;
        while n > 0 || carry {
            let sum = u8::from(self.bit(i)) + u8::from(n & 1 == 1) + u8::from(carry);
            self.set_bit(i, sum & 1 == 1);
            carry = sum >= 2;
            n >>= 1;
            i += 1;
        }
    }

    pub fn apply_t(&self, n: u64) -> Self {
        let mut next = self.clone();
        next.advance(n);
        next
    }

    /// Position of the first zero bit.
    pub fn first_zero(&mut self) -> u32 {
        let mut i = 1;
        while self.bit(i) {
            i += 1;
        }
        i
    }

    fn all_ones(&mut self, from: u32, to: u32) -> bool {
        (from..=to).all(|i| self.bit(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdometerSet {
    C(u64),
    D(u64),
    E(u64),
}

/// Whether `ω` lies in the named set of `schedule`.
pub fn membership(state: &mut OdometerState, set: OdometerSet, schedule: &OdometerSchedule) -> Result<bool, OdometerError> {
    let k = match set {
        OdometerSet::C(k) | OdometerSet::D(k) | OdometerSet::E(k) => k,
    };
    let l = schedule.l_checked(k)?;
    let a = stage_a(k);
    Ok(match set {
        OdometerSet::C(_) => state.all_ones(1, l - 1) && !state.bit(l),
        OdometerSet::D(_) => state.all_ones(1, l - a - 1) && !state.bit(l - a) && state.all_ones(l - a + 1, l - 1),
        OdometerSet::E(_) => !state.bit(l - a) && state.all_ones(l - a + 1, l - 1),
    })
}

/// `f(ω) = Σ_k (2^{l_k}/3^{a_k}) 1_{C_k}(ω) + Σ_k 10^{-k} 1_{D_k}(ω)`.
pub fn eval_f(state: &mut OdometerState, schedule: &OdometerSchedule) -> f64 {
    let mut total = 0.0;
    for k in schedule.stages() {
        if membership(state, OdometerSet::C(k), schedule).unwrap_or(false) {
            total += schedule.c_value(k).unwrap_or(0.0);
        }
        if membership(state, OdometerSet::D(k), schedule).unwrap_or(false) {
            total += d_value(k);
        }
    }
    total
}

/// `f` on integers `x < 2^{l_K}`, keyed by the first zero bit.
#[derive(Debug, Clone)]
pub struct TruncatedMap {
    width: u32,
    c: Vec<f64>,
    d: Vec<Option<(u32, f64)>>,
}

impl TruncatedMap {
    pub fn new(schedule: &OdometerSchedule) -> Self {
        let width = schedule.width();
        assert!(width <= 63, "truncated map needs l_K <= 63");
        let mut c = vec![0.0; width as usize + 2];
        let mut d = vec![None; width as usize + 2];
        for k in schedule.stages() {
            let l = schedule.l(k).unwrap_or(0);
            let a = stage_a(k);
            c[l as usize] += schedule.c_value(k).unwrap_or(0.0);
            d[(l - a) as usize] = Some((a - 1, d_value(k)));
        }
        TruncatedMap { width, c, d }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn mask(&self) -> u64 {
        if self.width == 0 {
            0
        } else {
            u64::MAX >> (64 - self.width)
        }
    }

    pub fn eval(&self, x: u64) -> f64 {
        let z1 = x.trailing_ones() + 1;
        if z1 > self.width {
            return 0.0;
        }
        let mut value = self.c[z1 as usize];
        if let Some((ones, v)) = self.d[z1 as usize] {
            if (x >> z1).trailing_ones() >= ones {
                value += v;
            }
        }
        value
    }
}

/// `X_j = f(T^j ω)` for `j < n`, starting from `state`.
pub fn values_from_state(schedule: &OdometerSchedule, state: &mut OdometerState, n: usize) -> Vec<f64> {
    if schedule.width() <= 63 {
        let map = TruncatedMap::new(schedule);
        let x0 = state.low_bits(map.width());
        (0..n as u64).map(|j| map.eval(x0.wrapping_add(j) & map.mask())).collect()
    } else {
        values_by_carry(schedule, state.clone(), n)
    }
}

fn values_by_carry(schedule: &OdometerSchedule, mut state: OdometerState, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        if j > 0 {
            state.advance(1);
        }
        out.push(eval_f(&mut state, schedule));
    }
    out
}

pub fn sample_odometer_path(schedule: &OdometerSchedule, n: usize, seed: u64) -> Result<ProcessPath, OdometerError> {
    validate_schedule(schedule).map_err(OdometerError::InvalidSchedule)?;
    let mut state = OdometerState::from_seed(seed);
    let values = values_from_state(schedule, &mut state, n);
    Ok(ProcessPath { spec: ProcessSpec::Odometer(schedule.clone()), seed, values, hidden: None })
}

fn check_cap(schedule: &OdometerSchedule, cap: u32) -> Result<TruncatedMap, OdometerError> {
    let cap = cap.min(MAX_ENUMERATION_CAP);
    if schedule.width() > cap {
        return Err(OdometerError::EnumerationCap { width: schedule.width(), cap });
    }
    Ok(TruncatedMap::new(schedule))
}

/// Exact conditional mean of the truncated process: keeps every prefix
/// `x < 2^{l_K}` consistent with the observations so far.
#[derive(Debug, Clone)]
pub struct SurvivorOracle {
    map: TruncatedMap,
    survivors: Vec<u32>,
    time: u64,
}

impl SurvivorOracle {
    pub fn new(schedule: &OdometerSchedule, cap: u32) -> Result<Self, OdometerError> {
        validate_schedule(schedule).map_err(OdometerError::InvalidSchedule)?;
        let map = check_cap(schedule, cap)?;
        let survivors = (0..=map.mask() as u32).collect();
        Ok(SurvivorOracle { map, survivors, time: 0 })
    }

    pub fn survivors(&self) -> usize {
        self.survivors.len()
    }

    fn value_at(&self, x: u32) -> f64 {
        self.map.eval((u64::from(x) + self.time) & self.map.mask())
    }
}

impl ConditionalOracle for SurvivorOracle {
    fn mean_next(&self) -> f64 {
        let total: f64 = self.survivors.iter().map(|&x| self.value_at(x)).sum();
        total / self.survivors.len() as f64
    }

    fn observe(&mut self, x: f64) -> Result<(), ProcessError> {
        let (map, time) = (&self.map, self.time);
        self.survivors.retain(|&s| map.eval((u64::from(s) + time) & map.mask()) == x);
        if self.survivors.is_empty() {
            return Err(OdometerError::Consistency(self.time as usize).into());
        }
        self.time += 1;
        Ok(())
    }
}

/// The truncated process as a deterministic cycle on `2^{l_K}` hidden states.
#[derive(Debug, Clone)]
pub struct OdometerCycle {
    map: TruncatedMap,
}

impl OdometerCycle {
    pub fn new(schedule: &OdometerSchedule, cap: u32) -> Result<Self, OdometerError> {
        Ok(OdometerCycle { map: check_cap(schedule, cap)? })
    }
}

impl HiddenChain for OdometerCycle {
    fn num_states(&self) -> usize {
        self.map.mask() as usize + 1
    }

    fn initial(&self, _state: usize) -> f64 {
        1.0 / self.num_states() as f64
    }

    fn for_each_successor(&self, state: usize, visit: &mut dyn FnMut(usize, f64)) {
        visit((state + 1) & self.map.mask() as usize, 1.0);
    }

    fn emission(&self, state: usize) -> f64 {
        self.map.eval(state as u64)
    }
}

/// `E(X_m | X_0^{m-1})` for the truncated process, `m = observed.len()`.
pub fn brute_force_conditional_mean(schedule: &OdometerSchedule, observed: &[f64], cap: u32) -> Result<f64, OdometerError> {
    let mut oracle = SurvivorOracle::new(schedule, cap)?;
    for &x in observed {
        oracle.observe(x).map_err(|e| match e {
            ProcessError::Odometer(e) => e,
            _ => OdometerError::Consistency(oracle.time as usize),
        })?;
    }
    Ok(oracle.mean_next())
}

/// Exact `E(X_m | X_0^{m-1})` at the special time of stage `k`, when bits
/// `1..l_k - 1` are known to be ones and all higher bits are free.
pub fn special_time_conditional_mean(schedule: &OdometerSchedule, k: u64) -> Result<f64, OdometerError> {
    let lk = schedule.l_checked(k)? as i32;
    let mut total = 0.0;
    for j in schedule.stages().filter(|&j| j >= k) {
        let lj = schedule.l(j).unwrap_or(0) as i32;
        total += schedule.c_value(j).unwrap_or(0.0) * libm::ldexp(1.0, -(lj - lk + 1));
        if j > k {
            total += d_value(j) * libm::ldexp(1.0, -(lj - lk));
        }
    }
    Ok(total)
}

/// A point of `E_k` and the times it determines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialTime {
    /// Seed whose bit stream produced the point.
    pub seed: u64,
    /// `ω_1.. ω_{l_K}` as an integer.
    pub low_bits: u64,
    /// First time the orbit enters `D_k`.
    pub i0: u64,
    /// `i0 + 2^{l_k - a_k - 1}`: bits `1..l_k-1` are all ones.
    pub m: u64,
    /// Averaging horizon `2^{l_k - a_k}`.
    pub horizon: u64,
}

/// Draws points until one lands in `E_k`.
pub fn find_special_time(schedule: &OdometerSchedule, k: u64, seed: u64) -> Result<SpecialTime, OdometerError> {
    let lk = schedule.l_checked(k)?;
    let a = stage_a(k);
    let attempts = 1u64 << (a + 8).min(40);
    for attempt in 0..attempts {
        let s = derive_seed(seed, attempt);
        let mut state = OdometerState::from_seed(s);
        if membership(&mut state, OdometerSet::E(k), schedule)? {
            let w = lk - a - 1;
            let low = state.low_bits(schedule.width().min(64));
            let low_w = low & ((1u64 << w) - 1);
            let i0 = ((1u64 << w) - 1) - low_w;
            debug_assert!(membership(&mut state.apply_t(i0), OdometerSet::D(k), schedule)?);
            return Ok(SpecialTime { seed: s, low_bits: low, i0, m: i0 + (1u64 << w), horizon: 1u64 << (w + 1) });
        }
    }
    Err(OdometerError::SearchExhausted { k, attempts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceCertificate {
    pub k: u64,
    pub a_k: u32,
    pub l_k: u32,
    pub special: SpecialTime,
    /// `E(X_m | X_0^{m-1})`, by enumeration.
    pub window_conditional: f64,
    /// The same value from the closed form.
    pub closed_form_conditional: f64,
    /// `E(X_m | X_{-∞}^{m-1}) = X_m` for the periodic truncated process.
    pub full_past: f64,
    /// `|window - full_past| / N`, one summand of the Cesàro average.
    pub restricted_term: f64,
    /// `(1/N) Σ_{n=1}^{N} |E(X_n | X_0^{n-1}) - X_n|`.
    pub cesaro_average: f64,
    /// `(1/6)(4/3)^{a_k}`.
    pub bound: f64,
    pub slack: f64,
    /// `restricted_term >= (1 - slack)·bound`.
    pub passed: bool,
    /// `(1/2) 2^{l_k} (2/3)^{a_k+1}`.
    pub window_lower: f64,
    /// `4·2^{l_k} (2/3)^{a_k}`.
    pub window_upper: f64,
}

impl DivergenceCertificate {
    pub fn window_within_bounds(&self) -> bool {
        self.window_lower <= self.window_conditional && self.window_conditional <= self.window_upper
    }
}

/// Certifies the Cesàro lower bound at the special time of stage `k`.
pub fn divergence_certificate(
    schedule: &OdometerSchedule,
    k: u64,
    seed: u64,
    slack: f64,
    cap: u32,
) -> Result<DivergenceCertificate, OdometerError> {
    validate_schedule(schedule).map_err(OdometerError::InvalidSchedule)?;
    let l_k = schedule.l_checked(k)?;
    check_cap(schedule, cap)?;
    let a_k = stage_a(k);
    let special = find_special_time(schedule, k, seed)?;
    let mut state = OdometerState::from_seed(special.seed);
    let path = values_from_state(schedule, &mut state, special.horizon as usize + 1);
    let m = special.m as usize;

    let mut oracle = SurvivorOracle::new(schedule, cap)?;
    let mut window_conditional = f64::NAN;
    let mut total = 0.0;
    for n in 1..path.len() {
        oracle.observe(path[n - 1]).map_err(|_| OdometerError::Consistency(n - 1))?;
        let e = oracle.mean_next();
        if n == m {
            window_conditional = e;
        }
        total += abs_pow(e - path[n], 1.0);
    }
    let n_horizon = special.horizon as f64;
    let full_past = path[m];
    let restricted_term = libm::fabs(window_conditional - full_past) / n_horizon;
    let bound = libm::pow(4.0 / 3.0, a_k as f64) / 6.0;
    let two_l = libm::ldexp(1.0, l_k as i32);
    Ok(DivergenceCertificate {
        k,
        a_k,
        l_k,
        window_conditional,
        closed_form_conditional: special_time_conditional_mean(schedule, k)?,
        full_past,
        restricted_term,
        cesaro_average: total / n_horizon,
        bound,
        slack,
        passed: restricted_term >= (1.0 - slack) * bound,
        window_lower: 0.5 * two_l * libm::pow(2.0 / 3.0, a_k as f64 + 1.0),
        window_upper: 4.0 * two_l * libm::pow(2.0 / 3.0, a_k as f64),
        special,
    })
}
