//! Subcommand bodies. Each prints a plain-text summary after the config block.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use recurpred_core::harness::{assemble_report, evaluate_seed, HarnessError};
use recurpred_core::martingale_lab::{simulate_trajectory, sup_estimate_from, LabError};
use recurpred_core::odometer::adversary::{adversary_certificate, build_adversarial_schedule};
use recurpred_core::odometer::{divergence_certificate, OdometerError, FIRST_STAGE};
use recurpred_core::processes::ProcessError;
use recurpred_core::{forward_predict, PredictError};

use crate::config::RunConfig;
use crate::{report, CliError};

impl From<OdometerError> for CliError {
    fn from(e: OdometerError) -> Self {
        match e {
            OdometerError::EnumerationCap { .. }
            | OdometerError::SearchExhausted { .. }
            | OdometerError::Budget(_)
            | OdometerError::Consistency(_) => CliError::Capability(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<PredictError> for CliError {
    fn from(e: PredictError) -> Self {
        match e {
            PredictError::DepthExceeded { .. } => CliError::Capability(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Capability(_) => CliError::Capability(e.to_string()),
            HarnessError::Process(ProcessError::Odometer(e)) => e.into(),
            HarnessError::Predict(e) => e.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn pool(config: &RunConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CliError::Capability(format!("worker pool: {e}")))
}

fn require_seeds(config: &RunConfig) -> Result<Vec<u64>, CliError> {
    let seeds = config.seed_list();
    if seeds.is_empty() {
        return Err(CliError::Input("seeds must be at least 1".into()));
    }
    Ok(seeds)
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> csv::Result<()>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Input(format!("{}: {other:?}", path.display())),
    })?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Parses one real per line; blank lines are skipped.
pub fn parse_data(text: &str) -> Result<Vec<f64>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.trim().parse::<f64>().map_err(|e| format!("line {}: {:?}: {e}", i + 1, l.trim())))
        .collect()
}

pub fn predict(config: &RunConfig) -> Result<(), CliError> {
    let path = config.data.as_deref().ok_or_else(|| CliError::Input("predict needs --data FILE".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let history = parse_data(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let prediction = forward_predict(&history)?;
    let trace = &prediction.trace;
    println!("samples: {}", history.len());
    println!("prediction: {}", report::format_float(prediction.value));
    println!("kappa: {}", trace.kappa());
    println!("taus: {:?}", trace.taus);
    println!("lambdas: {:?}", trace.lambdas);
    println!("fallback_used: {}", prediction.fallback_used);
    Ok(())
}

pub fn evaluate(config: &RunConfig) -> Result<(), CliError> {
    let spec = config.process_spec()?;
    let seeds = require_seeds(config)?;
    let (p, horizon, cap) = (config.p, config.horizon, config.enum_cap);
    let per_seed = pool(config)?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| evaluate_seed(&spec, p, horizon, seed, cap))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let result = assemble_report(&spec, p, horizon, per_seed);
    let out = config.output_path("evaluate.csv");
    write_file(&out, |w| report::write_report(&result, w))?;
    println!("process: {}", spec.name());
    println!("wrote: {}", out.display());
    if let (Some(t), Some(o), Some(r)) =
        (result.grid.last(), result.err_vs_oracle.last(), result.err_vs_realized.last())
    {
        println!("t: {t}");
        println!("err_vs_oracle: {}", report::format_float(*o));
        println!("err_vs_realized: {}", report::format_float(*r));
    }
    match result.reference_limit {
        Some(limit) => println!("reference_limit: {}", report::format_float(limit)),
        None => println!("reference_limit: none"),
    }
    Ok(())
}

fn stage_list(config: &RunConfig, last: Option<u64>) -> Result<Vec<u64>, CliError> {
    let last = last.ok_or_else(|| CliError::Input("schedule has no stages".into()))?;
    Ok(match config.k {
        Some(k) => vec![k],
        None => (FIRST_STAGE..=last).collect(),
    })
}

pub fn certify(config: &RunConfig) -> Result<(), CliError> {
    let schedule = &config.schedule;
    let mut all_passed = true;
    for k in stage_list(config, schedule.last_stage())? {
        let c = divergence_certificate(schedule, k, config.seed_base, config.slack, config.enum_cap)?;
        all_passed &= c.passed;
        println!("[certificate k={k}]");
        println!("a_k: {}", c.a_k);
        println!("l_k: {}", c.l_k);
        println!("special_time: m={} horizon={} seed={}", c.special.m, c.special.horizon, c.special.seed);
        println!("window_conditional: {}", report::format_float(c.window_conditional));
        println!("closed_form_conditional: {}", report::format_float(c.closed_form_conditional));
        println!("full_past: {}", report::format_float(c.full_past));
        println!("restricted_term: {}", report::format_float(c.restricted_term));
        println!("cesaro_average: {}", report::format_float(c.cesaro_average));
        println!("bound: {} ({})", report::format_float(c.bound), bound_fraction(c.a_k));
        println!("required: {}", report::format_float((1.0 - c.slack) * c.bound));
        println!("window_bounds: [{}, {}] within={}", c.window_lower, c.window_upper, c.window_within_bounds());
        println!("passed: {}", c.passed);
    }
    println!("all_passed: {all_passed}");
    Ok(())
}

/// `(1/6)(4/3)^a` as an exact fraction.
fn bound_fraction(a: u32) -> String {
    let (mut num, mut den) = (4u128.pow(a), 6 * 3u128.pow(a));
    let (mut x, mut y) = (num, den);
    while y != 0 {
        (x, y) = (y, x % y);
    }
    num /= x;
    den /= x;
    format!("{num}/{den}")
}

pub fn adversary(config: &RunConfig) -> Result<(), CliError> {
    let params = config.adversary_params();
    let built = build_adversarial_schedule(config.scheme.forecaster().as_mut(), &params)?;
    println!("scheme: {}", config.scheme);
    for s in &built.stages {
        println!(
            "stage k={} a_k={} n_k={} l_k={} exceed_fraction={}",
            s.k, s.a_k, s.n_k, s.l_k, s.exceed_fraction
        );
    }
    println!("schedule: {}", built.schedule);
    let k = config.k.unwrap_or(FIRST_STAGE);
    let c = adversary_certificate(
        &built.schedule,
        k,
        config.scheme.forecaster().as_mut(),
        config.seed_base,
        config.slack,
        config.enum_cap,
    )?;
    println!("[certificate k={k}]");
    println!("certified_schedule: {}", c.certified_schedule);
    println!("special_time: m={} horizon={} seed={}", c.special.m, c.special.horizon, c.special.seed);
    println!("cesaro_average: {}", report::format_float(c.cesaro_average));
    println!("special_term: {}", report::format_float(c.special_term));
    println!("bound: {} ({})", report::format_float(c.bound), bound_fraction(c.a_k));
    println!("passed: {}", c.passed);
    Ok(())
}

pub fn martingale(config: &RunConfig) -> Result<(), CliError> {
    let spec = config.martingale_spec()?;
    let seeds = require_seeds(config)?;
    let n_max = config.n_max;
    let trajectories = pool(config)?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| simulate_trajectory(&spec, n_max, seed))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let estimate = sup_estimate_from(&trajectories, config.sup_p)?;
    let out = config.output_path("martingale.csv");
    write_file(&out, |w| report::write_trajectories(&trajectories, w))?;
    let max_final = trajectories.iter().map(|t| t.final_average().abs()).fold(0.0, f64::max);
    println!("wrote: {}", out.display());
    println!("max_abs_final_average: {}", report::format_float(max_final));
    println!("sup_moment_mean: {}", report::format_float(estimate.mean));
    println!("sup_moment_std_error: {}", report::format_float(estimate.std_error));
    match estimate.relative_change {
        Some(c) => println!("relative_change: {}", report::format_float(c)),
        None => println!("relative_change: none"),
    }
    println!("still_growing: {}", estimate.still_growing);
    Ok(())
}
