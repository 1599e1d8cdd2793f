//! Running Cesàro averages of the forward predictor's errors.
//!
//! For `i = 1..=T` the predictor sees `X_0^{i-1}` and its output `R̂_i` is
//! scored against both the exact conditional mean and the realized `X_i`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::odometer::ENUMERATION_CAP;
use crate::predictor::{OnlinePredictor, PredictError};
use crate::processes::{abs_pow, oracle_for, sample_path, ProcessError, ProcessSpec};

/// Smallest accepted horizon.
pub const MIN_HORIZON: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("capability: {0}")]
    Capability(String),
    #[error(transparent)]
    Process(ProcessError),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

impl From<ProcessError> for HarnessError {
    fn from(e: ProcessError) -> Self {
        match e {
            ProcessError::Capability(what) => HarnessError::Capability(what.into()),
            ProcessError::Odometer(e @ crate::odometer::OdometerError::EnumerationCap { .. }) => {
                HarnessError::Capability(format!("{e}"))
            }
            other => HarnessError::Process(other),
        }
    }
}

/// Powers of two up to `horizon`, then `horizon` itself.
pub fn grid_points(horizon: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (0..usize::BITS).map(|b| 1usize << b).take_while(|&t| t <= horizon).collect();
    if grid.last() != Some(&horizon) {
        grid.push(horizon);
    }
    grid
}

/// Per-step errors `|R̂_i - E(X_i|X_0^{i-1})|^p` and `|R̂_i - X_i|^p`, index `i - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSequences {
    pub vs_oracle: Vec<f64>,
    pub vs_realized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedSeries {
    pub seed: u64,
    /// Running averages at the grid points.
    pub err_vs_oracle: Vec<f64>,
    pub err_vs_realized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CesaroReport {
    pub spec: ProcessSpec,
    pub p: f64,
    pub horizon: usize,
    pub grid: Vec<usize>,
    /// Seeds in ascending order, matching `per_seed`.
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedSeries>,
    /// Mean over seeds at each grid point.
    pub err_vs_oracle: Vec<f64>,
    pub err_vs_realized: Vec<f64>,
    pub reference_limit: Option<f64>,
}

fn check_args(p: f64, horizon: usize) -> Result<(), HarnessError> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(HarnessError::InvalidArgument(format!("error exponent {p} must be a finite number >= 1")));
    }
    if horizon < MIN_HORIZON {
        return Err(HarnessError::InvalidArgument(format!("horizon {horizon} is below {MIN_HORIZON}")));
    }
    Ok(())
}

pub fn error_sequences(
    spec: &ProcessSpec,
    p: f64,
    horizon: usize,
    seed: u64,
    enumeration_cap: u32,
) -> Result<ErrorSequences, HarnessError> {
    check_args(p, horizon)?;
    let mut oracle = oracle_for(spec, enumeration_cap)?;
    let path = sample_path(spec, horizon + 1, seed)?;
    let mut predictor = OnlinePredictor::new();
    let mut vs_oracle = Vec::with_capacity(horizon);
    let mut vs_realized = Vec::with_capacity(horizon);
    for i in 1..=horizon {
        let seen = path.values[i - 1];
        predictor.push(seen)?;
        oracle.observe(seen)?;
        let r = predictor.predict()?.value;
        vs_oracle.push(abs_pow(r - oracle.mean_next(), p));
        vs_realized.push(abs_pow(r - path.values[i], p));
    }
    Ok(ErrorSequences { vs_oracle, vs_realized })
}

fn running_at(errors: &[f64], grid: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut sum = 0.0;
    let mut next = 0;
    for (i, e) in errors.iter().enumerate() {
        sum += e;
        let t = i + 1;
        while next < grid.len() && grid[next] == t {
            out.push(sum / t as f64);
            next += 1;
        }
    }
    out
}

pub fn evaluate_seed(
    spec: &ProcessSpec,
    p: f64,
    horizon: usize,
    seed: u64,
    enumeration_cap: u32,
) -> Result<SeedSeries, HarnessError> {
    let errors = error_sequences(spec, p, horizon, seed, enumeration_cap)?;
    let grid = grid_points(horizon);
    Ok(SeedSeries {
        seed,
        err_vs_oracle: running_at(&errors.vs_oracle, &grid),
        err_vs_realized: running_at(&errors.vs_realized, &grid),
    })
}

fn mean_columns(rows: &[SeedSeries], pick: impl Fn(&SeedSeries) -> &[f64], width: usize) -> Vec<f64> {
    (0..width)
        .map(|j| rows.iter().map(|r| pick(r)[j]).sum::<f64>() / rows.len() as f64)
        .collect()
}

/// Combines per-seed series into a report; the result does not depend on
/// the order of `per_seed`.
pub fn assemble_report(spec: &ProcessSpec, p: f64, horizon: usize, mut per_seed: Vec<SeedSeries>) -> CesaroReport {
    per_seed.sort_by_key(|s| s.seed);
    let grid = grid_points(horizon);
    let width = grid.len();
    let (err_vs_oracle, err_vs_realized) = if per_seed.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        (
            mean_columns(&per_seed, |s| &s.err_vs_oracle, width),
            mean_columns(&per_seed, |s| &s.err_vs_realized, width),
        )
    };
    CesaroReport {
        spec: spec.clone(),
        p,
        horizon,
        grid,
        seeds: per_seed.iter().map(|s| s.seed).collect(),
        reference_limit: limit_reference(spec, p).ok(),
        per_seed,
        err_vs_oracle,
        err_vs_realized,
    }
}

/// Sequential run over `seeds` with the default enumeration cap.
pub fn evaluate(spec: &ProcessSpec, p: f64, horizon: usize, seeds: &[u64]) -> Result<CesaroReport, HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::InvalidArgument("at least one seed is required".into()));
    }
    let per_seed = seeds
        .iter()
        .map(|&seed| evaluate_seed(spec, p, horizon, seed, ENUMERATION_CAP))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble_report(spec, p, horizon, per_seed))
}

/// `E|E(X_0 | X_{-∞}^{-1}) - X_0|^p` in closed form.
pub fn limit_reference(spec: &ProcessSpec, p: f64) -> Result<f64, HarnessError> {
    check_args(p, MIN_HORIZON)?;
    match spec {
        ProcessSpec::Iid(law) => Ok(law.central_abs_moment(p)),
        ProcessSpec::Markov(chain) => {
            let values = chain.values();
            Ok(chain
                .stationary()
                .iter()
                .enumerate()
                .map(|(s, pi)| {
                    let m = chain.next_mean(s);
                    let row: f64 =
                        chain.transition()[s].iter().zip(values).map(|(q, v)| q * abs_pow(m - v, p)).sum();
                    pi * row
                })
                .sum())
        }
        // E|Z|^p for Z ~ N(0, σ²).
        ProcessSpec::Ar1 { sigma, .. } => {
            Ok(libm::pow(*sigma, p) * libm::pow(2.0, p / 2.0) * libm::tgamma((p + 1.0) / 2.0)
                / libm::sqrt(core::f64::consts::PI))
        }
        ProcessSpec::FunctionOfMarkov { .. } => {
            Err(HarnessError::Capability("no closed-form limit for function_of_markov".into()))
        }
        ProcessSpec::Odometer(_) => Err(HarnessError::Capability("no closed-form limit for odometer".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odometer::OdometerSchedule;
    use crate::processes::{DiscreteLaw, MarkovChain};
    use alloc::vec;

    fn markov() -> ProcessSpec {
        ProcessSpec::Markov(MarkovChain::binary(0.3, 0.8).unwrap())
    }

    #[test]
    fn grid() {
        assert_eq!(grid_points(10), [1, 2, 4, 8, 10]);
        assert_eq!(grid_points(16), [1, 2, 4, 8, 16]);
    }

    #[test]
    fn references() {
        // 0.4·2·0.3·0.7 + 0.6·2·0.8·0.2
        assert!(libm::fabs(limit_reference(&markov(), 1.0).unwrap() - 0.36) < 1e-15);
        assert!(libm::fabs(limit_reference(&markov(), 2.0).unwrap() - (0.4 * 0.21 + 0.6 * 0.16)) < 1e-15);
        let coin = ProcessSpec::Iid(DiscreteLaw::bernoulli(0.5).unwrap());
        assert_eq!(limit_reference(&coin, 2.0).unwrap(), 0.25);
        let ar = ProcessSpec::ar1(0.5, 1.0).unwrap();
        assert!(libm::fabs(limit_reference(&ar, 2.0).unwrap() - 1.0) < 1e-14);
        let ar2 = ProcessSpec::ar1(0.5, 2.0).unwrap();
        let want = 2.0 * libm::sqrt(2.0 / core::f64::consts::PI);
        assert!(libm::fabs(limit_reference(&ar2, 1.0).unwrap() - want) < 1e-14);
        let fm = ProcessSpec::function_of_markov(MarkovChain::binary(0.3, 0.8).unwrap(), 0).unwrap();
        assert!(matches!(limit_reference(&fm, 1.0), Err(HarnessError::Capability(_))));
        assert!(matches!(limit_reference(&markov(), 0.5), Err(HarnessError::InvalidArgument(_))));
    }

    #[test]
    fn constant_process_has_zero_error() {
        let spec = ProcessSpec::Iid(DiscreteLaw::new(vec![2.5], vec![1.0]).unwrap());
        let errors = error_sequences(&spec, 1.0, 64, 0, ENUMERATION_CAP).unwrap();
        assert!(errors.vs_oracle[1..].iter().all(|&e| e == 0.0));
        assert!(errors.vs_realized[1..].iter().all(|&e| e == 0.0));
    }

    #[test]
    fn running_averages_are_partial_sums() {
        let errors = error_sequences(&markov(), 1.0, 300, 4, ENUMERATION_CAP).unwrap();
        let series = evaluate_seed(&markov(), 1.0, 300, 4, ENUMERATION_CAP).unwrap();
        for (j, &t) in grid_points(300).iter().enumerate() {
            let direct = errors.vs_realized[..t].iter().sum::<f64>() / t as f64;
            assert!(libm::fabs(direct - series.err_vs_realized[j]) < 1e-12);
        }
        let max = errors.vs_oracle.iter().cloned().fold(0.0, f64::max);
        let mut sum = 0.0;
        let mut prev = 0.0;
        for (i, e) in errors.vs_oracle.iter().enumerate() {
            sum += e;
            let t = (i + 1) as f64;
            let avg = sum / t;
            assert!(libm::fabs(avg - prev * (t - 1.0) / t) <= max / t + 1e-12);
            prev = avg;
        }
    }

    #[test]
    fn aggregate_ignores_seed_order() {
        let spec = markov();
        let rows: Vec<SeedSeries> = [3, 1, 2].iter().map(|&s| evaluate_seed(&spec, 1.0, 200, s, 24).unwrap()).collect();
        let mut reversed = rows.clone();
        reversed.reverse();
        let a = assemble_report(&spec, 1.0, 200, rows);
        let b = assemble_report(&spec, 1.0, 200, reversed);
        assert_eq!(a, b);
        assert_eq!(a.seeds, [1, 2, 3]);
        for j in 0..a.grid.len() {
            let mean = a.per_seed.iter().map(|s| s.err_vs_oracle[j]).sum::<f64>() / 3.0;
            assert!(libm::fabs(mean - a.err_vs_oracle[j]) < 1e-12);
        }
        assert_eq!(a.reference_limit, Some(limit_reference(&spec, 1.0).unwrap()));
    }

    #[test]
    fn argument_and_capability_errors() {
        assert!(matches!(evaluate(&markov(), 1.0, 5, &[1]), Err(HarnessError::InvalidArgument(_))));
        assert!(matches!(evaluate(&markov(), 1.0, 50, &[]), Err(HarnessError::InvalidArgument(_))));
        let wide = ProcessSpec::odometer("5,9,40".parse::<OdometerSchedule>().unwrap()).unwrap();
        assert!(matches!(evaluate(&wide, 1.0, 50, &[1]), Err(HarnessError::Capability(_))));
        let narrow = ProcessSpec::odometer("5,9,15".parse::<OdometerSchedule>().unwrap()).unwrap();
        let report = evaluate(&narrow, 1.0, 64, &[1]).unwrap();
        assert_eq!(report.reference_limit, None);
    }
}
