//! Stationary ergodic process generators and their exact conditional means.
//!
//! Every generator is driven by [`rng_for`], a `ChaCha8Rng` seeded through
//! `SeedableRng::seed_from_u64`, so a `(spec, seed, n)` triple reproduces the
//! same path on every platform.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::odometer::{self, OdometerError, OdometerSchedule};

/// Identity of the pseudo-random generator, printed with every run config.
pub const GENERATOR: &str = "rand_chacha::ChaCha8Rng seeded by SeedableRng::seed_from_u64";

/// Tolerance for probability vectors and transition rows summing to one.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProcessError {
    #[error("invalid process spec: {0}")]
    InvalidSpec(String),
    #[error("transition matrix is reducible")]
    Reducible,
    #[error("transition matrix is periodic with period {0}")]
    Periodic(usize),
    #[error("value {0} is not in the state alphabet")]
    Domain(f64),
    #[error("observed history has probability zero at time {0}")]
    Consistency(usize),
    #[error("no exact oracle for {0}")]
    Capability(&'static str),
    #[error(transparent)]
    Odometer(#[from] OdometerError),
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent sub-stream seed derived from `(seed, stream)`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn check_probabilities(probs: &[f64], what: &str) -> Result<(), ProcessError> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(ProcessError::InvalidSpec(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = probs.iter().sum();
    if libm::fabs(total - 1.0) > SUM_TOLERANCE {
        return Err(ProcessError::InvalidSpec(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// Finite law on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteLaw {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self, ProcessError> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(ProcessError::InvalidSpec("values and probabilities must be nonempty and of equal length".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProcessError::InvalidSpec("law values must be finite".into()));
        }
        check_probabilities(&probs, "probability vector")?;
        Ok(DiscreteLaw { values, probs })
    }

    pub fn bernoulli(q: f64) -> Result<Self, ProcessError> {
        Self::new(vec![0.0, 1.0], vec![1.0 - q, q])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    /// `E|X - E X|^p`.
    pub fn central_abs_moment(&self, p: f64) -> f64 {
        let mean = self.mean();
        self.values
            .iter()
            .zip(&self.probs)
            .map(|(v, w)| w * abs_pow(v - mean, p))
            .sum()
    }
}

pub(crate) fn abs_pow(x: f64, p: f64) -> f64 {
    let a = libm::fabs(x);
    if p == 1.0 {
        a
    } else if p == 2.0 {
        a * a
    } else {
        libm::pow(a, p)
    }
}

/// Irreducible aperiodic first-order chain with distinct real state values.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    values: Vec<f64>,
    transition: Vec<Vec<f64>>,
    stationary: Vec<f64>,
}

impl MarkovChain {
    pub fn new(values: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self, ProcessError> {
        let n = values.len();
        if n == 0 || transition.len() != n || transition.iter().any(|row| row.len() != n) {
            return Err(ProcessError::InvalidSpec("transition matrix must be square and match the state values".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProcessError::InvalidSpec("state values must be finite".into()));
        }
        for (i, a) in values.iter().enumerate() {
            if values[..i].contains(a) {
                return Err(ProcessError::InvalidSpec(format!("state value {a} is repeated")));
            }
        }
        let stationary = stationary_distribution(&transition)?;
        Ok(MarkovChain { values, transition, stationary })
    }

    /// Two-state `{0, 1}` chain with `P(1|0) = up`, `P(1|1) = stay`.
    pub fn binary(up: f64, stay: f64) -> Result<Self, ProcessError> {
        Self::new(vec![0.0, 1.0], vec![vec![1.0 - up, up], vec![1.0 - stay, stay]])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn num_states(&self) -> usize {
        self.values.len()
    }

    pub fn state_of(&self, x: f64) -> Result<usize, ProcessError> {
        self.values.iter().position(|&v| v == x).ok_or(ProcessError::Domain(x))
    }

    /// `E(X_{i} | M_{i-1} = s)`.
    pub fn next_mean(&self, state: usize) -> f64 {
        self.transition[state].iter().zip(&self.values).map(|(p, v)| p * v).sum()
    }

    /// Transition matrix of the time-reversed stationary chain.
    pub fn reversed(&self) -> Vec<Vec<f64>> {
        let n = self.num_states();
        let pi = &self.stationary;
        (0..n)
            .map(|i| (0..n).map(|j| pi[j] * self.transition[j][i] / pi[i]).collect())
            .collect()
    }
}

fn reachable(n: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<Option<usize>> {
    let mut depth = vec![None; n];
    depth[0] = Some(0);
    let mut queue = alloc::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        let d = depth[u].unwrap_or(0);
        for v in 0..n {
            if depth[v].is_none() && edge(u, v) {
                depth[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    depth
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Unique stationary law of an irreducible aperiodic row-stochastic matrix.
pub fn stationary_distribution(matrix: &[Vec<f64>]) -> Result<Vec<f64>, ProcessError> {
    let n = matrix.len();
    if n == 0 || matrix.iter().any(|row| row.len() != n) {
        return Err(ProcessError::InvalidSpec("transition matrix must be square and nonempty".into()));
    }
    for (i, row) in matrix.iter().enumerate() {
        check_probabilities(row, &format!("transition row {i}"))?;
    }
    let forward = reachable(n, |u, v| matrix[u][v] > 0.0);
    let backward = reachable(n, |u, v| matrix[v][u] > 0.0);
    if forward.iter().chain(&backward).any(Option::is_none) {
        return Err(ProcessError::Reducible);
    }
    let mut period = 0;
    for u in 0..n {
        for v in 0..n {
            if matrix[u][v] > 0.0 {
                let (du, dv) = (forward[u].unwrap_or(0), forward[v].unwrap_or(0));
                period = gcd(period, (du + 1).abs_diff(dv));
            }
        }
    }
    if period != 1 {
        return Err(ProcessError::Periodic(period));
    }

    // Solve (P^T - I) π = 0 with the last equation replaced by Σ π = 1.
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| matrix[j][i] - if i == j { 1.0 } else { 0.0 }).collect();
            row.push(0.0);
            row
        })
        .collect();
    a[n - 1] = vec![1.0; n + 1];
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| libm::fabs(a[x][col]).total_cmp(&libm::fabs(a[y][col])))
            .unwrap_or(col);
        a.swap(col, pivot);
        let p = a[col][col];
        for j in col..=n {
            a[col][j] /= p;
        }
        for r in 0..n {
            if r != col {
                let factor = a[r][col];
                if factor != 0.0 {
                    for j in col..=n {
                        a[r][j] -= factor * a[col][j];
                    }
                }
            }
        }
    }
    let mut pi: Vec<f64> = a.iter().map(|row| row[n].max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
    }
    Ok(pi)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProcessSpec {
    Iid(DiscreteLaw),
    Markov(MarkovChain),
    /// `X_n = 1{M_n = state}` for a hidden chain `M`.
    FunctionOfMarkov { chain: MarkovChain, state: usize },
    Ar1 { coefficient: f64, sigma: f64 },
    Odometer(OdometerSchedule),
}

impl ProcessSpec {
    pub fn function_of_markov(chain: MarkovChain, state: usize) -> Result<Self, ProcessError> {
        if state >= chain.num_states() {
            return Err(ProcessError::InvalidSpec(format!("distinguished state {state} is out of range")));
        }
        Ok(ProcessSpec::FunctionOfMarkov { chain, state })
    }

    pub fn ar1(coefficient: f64, sigma: f64) -> Result<Self, ProcessError> {
        if !(coefficient.is_finite() && libm::fabs(coefficient) < 1.0) {
            return Err(ProcessError::InvalidSpec(format!("AR(1) coefficient {coefficient} must satisfy |a| < 1")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(ProcessError::InvalidSpec(format!("AR(1) noise deviation {sigma} must be positive")));
        }
        Ok(ProcessSpec::Ar1 { coefficient, sigma })
    }

    pub fn odometer(schedule: OdometerSchedule) -> Result<Self, ProcessError> {
        odometer::validate_schedule(&schedule).map_err(OdometerError::InvalidSchedule)?;
        Ok(ProcessSpec::Odometer(schedule))
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProcessSpec::Iid(_) => "iid",
            ProcessSpec::Markov(_) => "markov",
            ProcessSpec::FunctionOfMarkov { .. } => "function_of_markov",
            ProcessSpec::Ar1 { .. } => "ar1",
            ProcessSpec::Odometer(_) => "odometer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessPath {
    pub spec: ProcessSpec,
    pub seed: u64,
    /// `X_0, …, X_{n-1}`.
    pub values: Vec<f64>,
    /// Hidden chain states, for function-of-Markov paths.
    pub hidden: Option<Vec<usize>>,
}

fn sample_chain(chain: &MarkovChain, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>, ProcessError> {
    let bad = |_| ProcessError::InvalidSpec("degenerate probability row".into());
    let initial = WeightedIndex::new(chain.stationary()).map_err(bad)?;
    let rows = chain
        .transition()
        .iter()
        .map(|row| WeightedIndex::new(row).map_err(bad))
        .collect::<Result<Vec<_>, _>>()?;
    let mut states = Vec::with_capacity(n);
    let mut s = initial.sample(rng);
    states.push(s);
    for _ in 1..n {
        s = rows[s].sample(rng);
        states.push(s);
    }
    Ok(states)
}

/// Draws `X_0, …, X_{n-1}` started from the stationary law.
pub fn sample_path(spec: &ProcessSpec, n: usize, seed: u64) -> Result<ProcessPath, ProcessError> {
    if n == 0 {
        return Err(ProcessError::InvalidSpec("path length must be positive".into()));
    }
    let mut rng = rng_for(seed);
    let (values, hidden) = match spec {
        ProcessSpec::Iid(law) => {
            let dist = WeightedIndex::new(law.probs())
                .map_err(|_| ProcessError::InvalidSpec("degenerate probability vector".into()))?;
            ((0..n).map(|_| law.values()[dist.sample(&mut rng)]).collect(), None)
        }
        ProcessSpec::Markov(chain) => {
            let states = sample_chain(chain, n, &mut rng)?;
            (states.iter().map(|&s| chain.values()[s]).collect(), None)
        }
        ProcessSpec::FunctionOfMarkov { chain, state } => {
            let states = sample_chain(chain, n, &mut rng)?;
            let values = states.iter().map(|&s| if s == *state { 1.0 } else { 0.0 }).collect();
            (values, Some(states))
        }
        ProcessSpec::Ar1 { coefficient, sigma } => {
            let a = *coefficient;
            let stationary_sd = sigma / libm::sqrt(1.0 - a * a);
            let start = Normal::new(0.0, stationary_sd).map_err(|e| ProcessError::InvalidSpec(format!("{e}")))?;
            let noise = Normal::new(0.0, *sigma).map_err(|e| ProcessError::InvalidSpec(format!("{e}")))?;
            let mut x = start.sample(&mut rng);
            let mut values = Vec::with_capacity(n);
            values.push(x);
            for _ in 1..n {
                x = a * x + noise.sample(&mut rng);
                values.push(x);
            }
            (values, None)
        }
        ProcessSpec::Odometer(schedule) => return Ok(odometer::sample_odometer_path(schedule, n, seed)?),
    };
    Ok(ProcessPath { spec: spec.clone(), seed, values, hidden })
}

/// Generator of `X_{-1}, X_{-2}, …` for the backward estimator: a stationary
/// draw followed by the time-reversed chain.
#[derive(Debug, Clone)]
pub struct BackwardSampler {
    values: Vec<f64>,
    initial: WeightedIndex<f64>,
    rows: Option<Vec<WeightedIndex<f64>>>,
    state: Option<usize>,
    rng: ChaCha8Rng,
}

impl BackwardSampler {
    pub fn new(spec: &ProcessSpec, seed: u64) -> Result<Self, ProcessError> {
        let bad = |_| ProcessError::InvalidSpec("degenerate probability row".into());
        let (values, initial, rows) = match spec {
            ProcessSpec::Iid(law) => (law.values().to_vec(), WeightedIndex::new(law.probs()).map_err(bad)?, None),
            ProcessSpec::Markov(chain) => {
                let rows = chain
                    .reversed()
                    .iter()
                    .map(|row| WeightedIndex::new(row).map_err(bad))
                    .collect::<Result<Vec<_>, _>>()?;
                (chain.values().to_vec(), WeightedIndex::new(chain.stationary()).map_err(bad)?, Some(rows))
            }
            _ => return Err(ProcessError::Capability("backward sampling outside iid and markov specs")),
        };
        Ok(BackwardSampler { values, initial, rows, state: None, rng: rng_for(seed) })
    }

    pub fn next_back(&mut self) -> f64 {
        let s = match (&self.rows, self.state) {
            (Some(rows), Some(s)) => rows[s].sample(&mut self.rng),
            _ => self.initial.sample(&mut self.rng),
        };
        self.state = Some(s);
        self.values[s]
    }
}

/// Incremental exact conditional mean `E(X_i | X_0^{i-1})`.
pub trait ConditionalOracle {
    /// Conditional mean of the next value given everything observed so far.
    fn mean_next(&self) -> f64;
    fn observe(&mut self, x: f64) -> Result<(), ProcessError>;
}

#[derive(Debug, Clone)]
pub struct IidOracle {
    mean: f64,
}

impl ConditionalOracle for IidOracle {
    fn mean_next(&self) -> f64 {
        self.mean
    }

    fn observe(&mut self, _x: f64) -> Result<(), ProcessError> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MarkovOracle {
    chain: MarkovChain,
    last: Option<usize>,
}

impl ConditionalOracle for MarkovOracle {
    fn mean_next(&self) -> f64 {
        match self.last {
            Some(s) => self.chain.next_mean(s),
            None => self.chain.stationary().iter().zip(self.chain.values()).map(|(p, v)| p * v).sum(),
        }
    }

    fn observe(&mut self, x: f64) -> Result<(), ProcessError> {
        self.last = Some(self.chain.state_of(x)?);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Ar1Oracle {
    coefficient: f64,
    last: Option<f64>,
}

impl ConditionalOracle for Ar1Oracle {
    fn mean_next(&self) -> f64 {
        self.last.map_or(0.0, |x| self.coefficient * x)
    }

    fn observe(&mut self, x: f64) -> Result<(), ProcessError> {
        self.last = Some(x);
        Ok(())
    }
}

/// Finite hidden chain with a deterministic emission per state.
pub trait HiddenChain {
    fn num_states(&self) -> usize;
    fn initial(&self, state: usize) -> f64;
    fn for_each_successor(&self, state: usize, visit: &mut dyn FnMut(usize, f64));
    fn emission(&self, state: usize) -> f64;
}

/// The indicator chain `X_n = 1{M_n = s}`.
#[derive(Debug, Clone)]
pub struct IndicatorChain {
    pub chain: MarkovChain,
    pub state: usize,
}

impl HiddenChain for IndicatorChain {
    fn num_states(&self) -> usize {
        self.chain.num_states()
    }

    fn initial(&self, state: usize) -> f64 {
        self.chain.stationary()[state]
    }

    fn for_each_successor(&self, state: usize, visit: &mut dyn FnMut(usize, f64)) {
        for (to, &p) in self.chain.transition()[state].iter().enumerate() {
            if p > 0.0 {
                visit(to, p);
            }
        }
    }

    fn emission(&self, state: usize) -> f64 {
        if state == self.state {
            1.0
        } else {
            0.0
        }
    }
}

/// Forward filter over a [`HiddenChain`]: keeps the law of the next hidden
/// state given the observations so far.
#[derive(Debug, Clone)]
pub struct ForwardFilter<C> {
    chain: C,
    predictive: Vec<f64>,
    time: usize,
}

impl<C: HiddenChain> ForwardFilter<C> {
    pub fn new(chain: C) -> Self {
        let predictive = (0..chain.num_states()).map(|s| chain.initial(s)).collect();
        ForwardFilter { chain, predictive, time: 0 }
    }

    pub fn chain(&self) -> &C {
        &self.chain
    }
}

impl<C: HiddenChain> ConditionalOracle for ForwardFilter<C> {
    fn mean_next(&self) -> f64 {
        self.predictive
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(s, p)| p * self.chain.emission(s))
            .sum()
    }

    fn observe(&mut self, x: f64) -> Result<(), ProcessError> {
        let n = self.chain.num_states();
        let mut posterior = vec![0.0; n];
        let mut total = 0.0;
        for (s, &p) in self.predictive.iter().enumerate() {
            if p > 0.0 && self.chain.emission(s) == x {
                posterior[s] = p;
                total += p;
            }
        }
        if total <= 0.0 {
            return Err(ProcessError::Consistency(self.time));
        }
        let mut next = vec![0.0; n];
        for (s, &p) in posterior.iter().enumerate() {
            if p > 0.0 {
                let w = p / total;
                self.chain.for_each_successor(s, &mut |to, q| next[to] += w * q);
            }
        }
        self.predictive = next;
        self.time += 1;
        Ok(())
    }
}

/// Exact oracle for `spec`. Odometer specs are refused when the enumeration
/// over `2^{l_K}` prefixes would exceed `2^{enumeration_cap}`.
pub fn oracle_for(spec: &ProcessSpec, enumeration_cap: u32) -> Result<Box<dyn ConditionalOracle>, ProcessError> {
    Ok(match spec {
        ProcessSpec::Iid(law) => Box::new(IidOracle { mean: law.mean() }),
        ProcessSpec::Markov(chain) => Box::new(MarkovOracle { chain: chain.clone(), last: None }),
        ProcessSpec::FunctionOfMarkov { chain, state } => {
            Box::new(ForwardFilter::new(IndicatorChain { chain: chain.clone(), state: *state }))
        }
        ProcessSpec::Ar1 { coefficient, .. } => Box::new(Ar1Oracle { coefficient: *coefficient, last: None }),
        ProcessSpec::Odometer(schedule) => Box::new(odometer::SurvivorOracle::new(schedule, enumeration_cap)?),
    })
}

fn run_oracle(mut oracle: impl ConditionalOracle, history: &[f64]) -> Result<f64, ProcessError> {
    for &x in history {
        oracle.observe(x)?;
    }
    Ok(oracle.mean_next())
}

/// `E(X_i | X_0^{i-1})` for iid and Markov specs.
pub fn markov_conditional_mean(spec: &ProcessSpec, history: &[f64]) -> Result<f64, ProcessError> {
    match spec {
        ProcessSpec::Iid(law) => Ok(law.mean()),
        ProcessSpec::Markov(chain) => run_oracle(MarkovOracle { chain: chain.clone(), last: None }, history),
        _ => Err(ProcessError::Capability("markov_conditional_mean outside iid and markov specs")),
    }
}

/// `E(X_i | X_0^{i-1})` for a function-of-Markov spec by forward filtering.
pub fn hmm_filter_conditional_mean(spec: &ProcessSpec, history: &[f64]) -> Result<f64, ProcessError> {
    match spec {
        ProcessSpec::FunctionOfMarkov { chain, state } => {
            run_oracle(ForwardFilter::new(IndicatorChain { chain: chain.clone(), state: *state }), history)
        }
        _ => Err(ProcessError::Capability("hmm filtering outside function_of_markov specs")),
    }
}

/// `E(X_i | X_0^{i-1}) = a·X_{i-1}` for an AR(1) spec.
pub fn ar1_conditional_mean(spec: &ProcessSpec, history: &[f64]) -> Result<f64, ProcessError> {
    match spec {
        ProcessSpec::Ar1 { coefficient, .. } => Ok(history.last().map_or(0.0, |x| coefficient * x)),
        _ => Err(ProcessError::Capability("ar1_conditional_mean outside ar1 specs")),
    }
}
