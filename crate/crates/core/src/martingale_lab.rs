//! Averages of martingale differences and their maximal functions.
//!
//! Every generator centers explicitly: `Z_n = Y_n - E(Y_n | past)`, with the
//! conditional mean known in closed form.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, StandardUniform};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Pareto;

use crate::processes::{abs_pow, rng_for};

/// Smallest accepted `n_max`.
pub const MIN_STEPS: usize = 100;

/// Default largest exponent of the heavy dyadic law.
pub const HEAVY_MAX_EXPONENT: u32 = 48;

/// Relative change of the sup estimate over the last decade above which the
/// curve is flagged as still growing.
pub const STABILIZATION_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LabError {
    #[error("invalid martingale spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// `P(X = 2^j) ∝ 2^{-j} j^{-3}` for `1 <= j <= J`; `E|X| log⁺|X| < ∞` even as `J → ∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeavyDyadicLaw {
    max_exponent: u32,
    probs: Vec<f64>,
}

impl HeavyDyadicLaw {
    pub fn new(max_exponent: u32) -> Result<Self, LabError> {
        if !(1..=60).contains(&max_exponent) {
            return Err(LabError::InvalidSpec(format!("max exponent {max_exponent} must lie in 1..=60")));
        }
        let raw: Vec<f64> = (1..=max_exponent)
            .map(|j| libm::ldexp(1.0, -(j as i32)) / libm::pow(j as f64, 3.0))
            .collect();
        let total: f64 = raw.iter().sum();
        Ok(HeavyDyadicLaw { max_exponent, probs: raw.iter().map(|w| w / total).collect() })
    }

    pub fn max_exponent(&self) -> u32 {
        self.max_exponent
    }

    /// `P(X = 2^j)`.
    pub fn probability(&self, j: u32) -> f64 {
        j.checked_sub(1).and_then(|i| self.probs.get(i as usize)).copied().unwrap_or(0.0)
    }

    /// `E g(X + U) = E X` for the floor quantizer.
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| p * libm::ldexp(1.0, i as i32 + 1)).sum()
    }

    /// `E X log⁺ X`.
    pub fn llogl_moment(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let j = (i + 1) as f64;
                p * libm::ldexp(1.0, i as i32 + 1) * j * core::f64::consts::LN_2
            })
            .sum()
    }

    /// A draw of `2^J + U` with `U ~ U[0,1)` jitter.
    pub fn draw_jittered(&self, rng: &mut ChaCha8Rng) -> f64 {
        let dist = self.index();
        let j = dist.sample(rng) as i32 + 1;
        let u: f64 = rng.sample(StandardUniform);
        libm::ldexp(1.0, j) + u
    }

    fn index(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.probs).expect("heavy law weights are positive")
    }
}

/// Quantizer applied to the heavy law; `|quantize_unit(x) - x| < 1`.
pub fn quantize_unit(x: f64) -> f64 {
    libm::floor(x)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DifferenceGenerator {
    Zero,
    Rademacher,
    /// `Y - α/(α-1)` with `Y` Pareto of scale 1 and shape `α`.
    CenteredPareto { shape: f64 },
    /// `Z_n = (1 + γ|Z_{n-1}|) ε_n` with `ε_n = ±1`.
    Feedback { gain: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MartingaleSpec {
    /// `Z_n = g(X_n) - E g(X_n)` for i.i.d. `X_n` from the heavy law.
    QuantizedLlogl(HeavyDyadicLaw),
    /// Differences with `sup_n E|Z_n|^p < ∞`.
    LpBounded { p: f64, generator: DifferenceGenerator },
}

impl MartingaleSpec {
    pub fn quantized_llogl() -> Self {
        MartingaleSpec::QuantizedLlogl(HeavyDyadicLaw::new(HEAVY_MAX_EXPONENT).expect("default exponent is valid"))
    }

    pub fn lp_bounded(p: f64, generator: DifferenceGenerator) -> Result<Self, LabError> {
        if !(p.is_finite() && p > 1.0) {
            return Err(LabError::InvalidSpec(format!("moment order {p} must lie in (1, ∞)")));
        }
        match generator {
            DifferenceGenerator::CenteredPareto { shape } if !(shape.is_finite() && shape > p) => {
                return Err(LabError::InvalidSpec(format!("Pareto shape {shape} must exceed p = {p}")));
            }
            DifferenceGenerator::Feedback { gain } if !(0.0..1.0).contains(&gain) => {
                return Err(LabError::InvalidSpec(format!("feedback gain {gain} must lie in [0, 1)")));
            }
            _ => {}
        }
        Ok(MartingaleSpec::LpBounded { p, generator })
    }

    /// A pointwise bound on `|Z_n|`, when one exists.
    pub fn difference_bound(&self) -> Option<f64> {
        match self {
            MartingaleSpec::LpBounded { generator: DifferenceGenerator::Zero, .. } => Some(0.0),
            MartingaleSpec::LpBounded { generator: DifferenceGenerator::Rademacher, .. } => Some(1.0),
            MartingaleSpec::LpBounded { generator: DifferenceGenerator::Feedback { gain }, .. } => {
                Some(1.0 / (1.0 - gain))
            }
            _ => None,
        }
    }
}

/// Stateful generator of `Z_1, Z_2, …` for one seed.
#[derive(Debug, Clone)]
pub struct DifferenceStream {
    spec: MartingaleSpec,
    heavy: Option<(WeightedIndex<f64>, f64)>,
    pareto: Option<(Pareto<f64>, f64)>,
    previous: f64,
    rng: ChaCha8Rng,
}

impl DifferenceStream {
    pub fn new(spec: &MartingaleSpec, seed: u64) -> Result<Self, LabError> {
        let heavy = match spec {
            MartingaleSpec::QuantizedLlogl(law) => Some((law.index(), law.mean())),
            _ => None,
        };
        let pareto = match spec {
            MartingaleSpec::LpBounded { generator: DifferenceGenerator::CenteredPareto { shape }, .. } => {
                let dist = Pareto::new(1.0, *shape).map_err(|e| LabError::InvalidSpec(format!("{e}")))?;
                Some((dist, shape / (shape - 1.0)))
            }
            _ => None,
        };
        Ok(DifferenceStream { spec: spec.clone(), heavy, pareto, previous: 0.0, rng: rng_for(seed) })
    }

    /// `E(Y_n | past)`, the centering subtracted from the next draw.
    pub fn conditional_mean(&self) -> f64 {
        match (&self.heavy, &self.pareto) {
            (Some((_, m)), _) | (_, Some((_, m))) => *m,
            _ => 0.0,
        }
    }

    /// The next difference given the past so far; `resample_next` draws from
    /// the same conditional law without advancing.
    pub fn next_difference(&mut self) -> f64 {
        let z = self.draw();
        self.previous = z;
        z
    }

    pub fn resample_next(&mut self) -> f64 {
        self.draw()
    }

    fn draw(&mut self) -> f64 {
        let rng = &mut self.rng;
        match &self.spec {
            MartingaleSpec::QuantizedLlogl(_) => {
                let (index, mean) = self.heavy.as_ref().expect("heavy law index");
                let j = index.sample(rng) as i32 + 1;
                let u: f64 = rng.sample(StandardUniform);
                quantize_unit(libm::ldexp(1.0, j) + u) - mean
            }
            MartingaleSpec::LpBounded { generator, .. } => match generator {
                DifferenceGenerator::Zero => 0.0,
                DifferenceGenerator::Rademacher => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
                DifferenceGenerator::CenteredPareto { .. } => {
                    let (dist, mean) = self.pareto.as_ref().expect("pareto law");
                    dist.sample(rng) - mean
                }
                DifferenceGenerator::Feedback { gain } => {
                    let scale = 1.0 + gain * libm::fabs(self.previous);
                    if rng.random::<bool>() {
                        scale
                    } else {
                        -scale
                    }
                }
            },
        }
    }
}

/// Powers of two and of ten up to `n_max`, then `n_max`.
pub fn lab_grid(n_max: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (0..usize::BITS).map(|b| 1usize << b).take_while(|&t| t <= n_max).collect();
    let mut ten = 10usize;
    while ten <= n_max {
        grid.push(ten);
        ten = ten.saturating_mul(10);
    }
    grid.push(n_max);
    grid.sort_unstable();
    grid.dedup();
    grid
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub grid: Vec<usize>,
    /// `(1/n) Σ_{i<=n} Z_i` at the grid points.
    pub averages: Vec<f64>,
    /// `max_{m<=n} |(1/m) Σ_{i<=m} Z_i|` at the grid points, over every `m`.
    pub running_sup: Vec<f64>,
}

impl Trajectory {
    pub fn final_average(&self) -> f64 {
        self.averages.last().copied().unwrap_or(0.0)
    }

    pub fn sup(&self) -> f64 {
        self.running_sup.last().copied().unwrap_or(0.0)
    }
}

pub fn simulate_trajectory(spec: &MartingaleSpec, n_max: usize, seed: u64) -> Result<Trajectory, LabError> {
    if n_max < MIN_STEPS {
        return Err(LabError::InvalidArgument(format!("n_max {n_max} is below {MIN_STEPS}")));
    }
    let grid = lab_grid(n_max);
    let mut stream = DifferenceStream::new(spec, seed)?;
    let mut averages = Vec::with_capacity(grid.len());
    let mut running_sup = Vec::with_capacity(grid.len());
    let mut sum = 0.0;
    let mut sup: f64 = 0.0;
    let mut next = 0;
    for n in 1..=n_max {
        sum += stream.next_difference();
        let avg = sum / n as f64;
        sup = sup.max(libm::fabs(avg));
        if grid[next] == n {
            averages.push(avg);
            running_sup.push(sup);
            next += 1;
        }
    }
    Ok(Trajectory { seed, grid, averages, running_sup })
}

pub fn simulate_running_averages(spec: &MartingaleSpec, n_max: usize, seeds: &[u64]) -> Result<Vec<Trajectory>, LabError> {
    seeds.iter().map(|&s| simulate_trajectory(spec, n_max, s)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupEstimate {
    pub p: f64,
    pub n_max: usize,
    /// `sup_n |avg_n|^p` per seed, seeds ascending.
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    pub std_error: f64,
    /// Mean of `(running sup)^p` at each grid point.
    pub curve: Vec<(usize, f64)>,
    /// Relative change of the curve from the last power of ten below `n_max`.
    pub relative_change: Option<f64>,
    /// `relative_change` exceeds [`STABILIZATION_TOLERANCE`].
    pub still_growing: bool,
}

/// Relative change of the curve between grid points `from` and `to`.
pub fn curve_change(estimate: &SupEstimate, from: usize, to: usize) -> Option<f64> {
    let at = |t: usize| estimate.curve.iter().find(|(g, _)| *g == t).map(|(_, v)| *v);
    let (a, b) = (at(from)?, at(to)?);
    Some(if a == 0.0 {
        if b == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        libm::fabs(b - a) / a
    })
}

pub fn sup_estimate_from(trajectories: &[Trajectory], p: f64) -> Result<SupEstimate, LabError> {
    if trajectories.is_empty() {
        return Err(LabError::InvalidArgument("at least one seed is required".into()));
    }
    if !(p.is_finite() && p >= 1.0) {
        return Err(LabError::InvalidArgument(format!("exponent {p} must be >= 1")));
    }
    let mut sorted: Vec<&Trajectory> = trajectories.iter().collect();
    sorted.sort_by_key(|t| t.seed);
    let grid = sorted[0].grid.clone();
    let n_max = grid.last().copied().unwrap_or(0);
    let count = sorted.len() as f64;
    let per_seed: Vec<(u64, f64)> = sorted.iter().map(|t| (t.seed, abs_pow(t.sup(), p))).collect();
    let mean = per_seed.iter().map(|(_, v)| v).sum::<f64>() / count;
    let std_error = if sorted.len() > 1 {
        let var = per_seed.iter().map(|(_, v)| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0);
        libm::sqrt(var / count)
    } else {
        0.0
    };
    let curve = grid
        .iter()
        .enumerate()
        .map(|(j, &t)| (t, sorted.iter().map(|tr| abs_pow(tr.running_sup[j], p)).sum::<f64>() / count))
        .collect();
    let mut estimate = SupEstimate { p, n_max, per_seed, mean, std_error, curve, relative_change: None, still_growing: false };
    let mut decade = 1usize;
    while decade.saturating_mul(10) < n_max {
        decade *= 10;
    }
    if decade >= 10 {
        estimate.relative_change = curve_change(&estimate, decade, n_max);
        estimate.still_growing = estimate.relative_change.is_some_and(|c| c > STABILIZATION_TOLERANCE);
    }
    Ok(estimate)
}

/// Monte Carlo estimate of `E sup_{n<=n_max} |(1/n) Σ Z_i|^p`.
pub fn estimate_sup_average(spec: &MartingaleSpec, n_max: usize, seeds: &[u64], p: f64) -> Result<SupEstimate, LabError> {
    sup_estimate_from(&simulate_running_averages(spec, n_max, seeds)?, p)
}
