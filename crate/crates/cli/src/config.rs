//! Run configuration: defaults, then a `key = value` file, then flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use recurpred_core::martingale_lab::{DifferenceGenerator, HeavyDyadicLaw, MartingaleSpec};
use recurpred_core::odometer::adversary::{AdversaryParams, Baseline};
use recurpred_core::odometer::{OdometerSchedule, ENUMERATION_CAP};
use recurpred_core::processes::{DiscreteLaw, MarkovChain, ProcessSpec, GENERATOR};

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "RECURPRED_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessKind {
    Markov,
    Iid,
    Ar1,
    FunctionOfMarkov,
    Odometer,
}

impl ProcessKind {
    const NAMES: [(&'static str, ProcessKind); 5] = [
        ("markov", ProcessKind::Markov),
        ("iid", ProcessKind::Iid),
        ("ar1", ProcessKind::Ar1),
        ("function_of_markov", ProcessKind::FunctionOfMarkov),
        ("odometer", ProcessKind::Odometer),
    ];

    fn name(self) -> &'static str {
        Self::NAMES.iter().find(|(_, k)| *k == self).map_or("?", |(n, _)| n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabKind {
    Coin,
    Pareto,
    Feedback,
    Llogl,
}

impl LabKind {
    const NAMES: [(&'static str, LabKind); 4] = [
        ("coin", LabKind::Coin),
        ("pareto", LabKind::Pareto),
        ("feedback", LabKind::Feedback),
        ("llogl", LabKind::Llogl),
    ];

    fn name(self) -> &'static str {
        Self::NAMES.iter().find(|(_, k)| *k == self).map_or("?", |(n, _)| n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub process: ProcessKind,
    pub markov_up: f64,
    pub markov_stay: f64,
    pub bernoulli: f64,
    pub ar1_a: f64,
    pub ar1_sigma: f64,
    pub fom_transition: Vec<Vec<f64>>,
    pub fom_state: usize,
    pub schedule: OdometerSchedule,
    pub horizon: usize,
    pub p: f64,
    pub seeds: u64,
    pub seed_base: u64,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub k: Option<u64>,
    pub enum_cap: u32,
    pub slack: f64,
    pub scheme: Baseline,
    pub stages: usize,
    pub mc_paths: usize,
    pub mc_horizon: usize,
    pub martingale: LabKind,
    pub moment_p: f64,
    pub pareto_shape: f64,
    pub feedback_gain: f64,
    pub heavy_max_exponent: u32,
    pub n_max: usize,
    pub sup_p: f64,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            process: ProcessKind::Markov,
            markov_up: 0.3,
            markov_stay: 0.8,
            bernoulli: 0.5,
            ar1_a: 0.5,
            ar1_sigma: 1.0,
            fom_transition: vec![vec![0.1, 0.2, 0.7], vec![0.5, 0.3, 0.2], vec![0.6, 0.1, 0.3]],
            fom_state: 1,
            schedule: OdometerSchedule::new(vec![5, 9, 15]),
            horizon: 10_000,
            p: 1.0,
            seeds: 5,
            seed_base: 1,
            out: None,
            data: None,
            k: None,
            enum_cap: ENUMERATION_CAP,
            slack: 0.1,
            scheme: Baseline::SampleMean,
            stages: 3,
            mc_paths: 256,
            mc_horizon: 4096,
            martingale: LabKind::Coin,
            moment_p: 1.5,
            pareto_shape: 2.0,
            feedback_gain: 0.5,
            heavy_max_exponent: recurpred_core::martingale_lab::HEAVY_MAX_EXPONENT,
            n_max: 100_000,
            sup_p: 1.0,
            workers: 0,
        }
    }
}

/// Every accepted key, in print order.
pub const KEYS: &[&str] = &[
    "process",
    "markov_up",
    "markov_stay",
    "bernoulli",
    "ar1_a",
    "ar1_sigma",
    "fom_transition",
    "fom_state",
    "schedule",
    "horizon",
    "p",
    "seeds",
    "seed_base",
    "out",
    "data",
    "k",
    "enum_cap",
    "slack",
    "scheme",
    "stages",
    "mc_paths",
    "mc_horizon",
    "martingale",
    "moment_p",
    "pareto_shape",
    "feedback_gain",
    "heavy_max_exponent",
    "n_max",
    "sup_p",
    "workers",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("{key}: cannot parse {value:?}: {e}"))
}

fn pick<T: Copy>(key: &str, value: &str, names: &[(&str, T)]) -> Result<T, String> {
    names.iter().find(|(n, _)| *n == value).map(|(_, v)| *v).ok_or_else(|| {
        let all: Vec<&str> = names.iter().map(|(n, _)| *n).collect();
        format!("{key}: unknown value {value:?} (expected one of {})", all.join(", "))
    })
}

fn parse_matrix(value: &str) -> Result<Vec<Vec<f64>>, String> {
    value
        .split(';')
        .map(|row| {
            row.split_whitespace()
                .map(|x| num::<f64>("fom_transition", x))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect()
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        match key {
            "process" => self.process = pick(key, value, &ProcessKind::NAMES)?,
            "markov_up" => self.markov_up = num(key, value)?,
            "markov_stay" => self.markov_stay = num(key, value)?,
            "bernoulli" => self.bernoulli = num(key, value)?,
            "ar1_a" => self.ar1_a = num(key, value)?,
            "ar1_sigma" => self.ar1_sigma = num(key, value)?,
            "fom_transition" => self.fom_transition = parse_matrix(value)?,
            "fom_state" => self.fom_state = num(key, value)?,
            "schedule" => self.schedule = value.parse().map_err(|e| format!("schedule: {e}"))?,
            "horizon" => self.horizon = num(key, value)?,
            "p" => self.p = num(key, value)?,
            "seeds" => self.seeds = num(key, value)?,
            "seed_base" => self.seed_base = num(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "data" => self.data = Some(PathBuf::from(value)),
            "k" => self.k = if value == "all" { None } else { Some(num(key, value)?) },
            "enum_cap" => self.enum_cap = num(key, value)?,
            "slack" => self.slack = num(key, value)?,
            "scheme" => self.scheme = value.parse().map_err(|e| format!("scheme: {e}"))?,
            "stages" => self.stages = num(key, value)?,
            "mc_paths" => self.mc_paths = num(key, value)?,
            "mc_horizon" => self.mc_horizon = num(key, value)?,
            "martingale" => self.martingale = pick(key, value, &LabKind::NAMES)?,
            "moment_p" => self.moment_p = num(key, value)?,
            "pareto_shape" => self.pareto_shape = num(key, value)?,
            "feedback_gain" => self.feedback_gain = num(key, value)?,
            "heavy_max_exponent" => self.heavy_max_exponent = num(key, value)?,
            "n_max" => self.n_max = num(key, value)?,
            "sup_p" => self.sup_p = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Applies a config file's text on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {line_no}: expected `key = value`"))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(format!("line {line_no}: duplicate key {key:?}"));
            }
            self.set(key, value).map_err(|e| format!("line {line_no}: {e}"))?;
            seen.push(key);
        }
        Ok(())
    }

    /// The seed list `seed_base, seed_base + 1, …`.
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds).map(|i| self.seed_base.wrapping_add(i)).collect()
    }

    pub fn process_spec(&self) -> Result<ProcessSpec, CliError> {
        let err = |e: recurpred_core::processes::ProcessError| CliError::Input(format!("process spec: {e}"));
        match self.process {
            ProcessKind::Markov => Ok(ProcessSpec::Markov(MarkovChain::binary(self.markov_up, self.markov_stay).map_err(err)?)),
            ProcessKind::Iid => Ok(ProcessSpec::Iid(DiscreteLaw::bernoulli(self.bernoulli).map_err(err)?)),
            ProcessKind::Ar1 => ProcessSpec::ar1(self.ar1_a, self.ar1_sigma).map_err(err),
            ProcessKind::FunctionOfMarkov => {
                let n = self.fom_transition.len();
                let chain = MarkovChain::new((0..n).map(|s| s as f64).collect(), self.fom_transition.clone()).map_err(err)?;
                ProcessSpec::function_of_markov(chain, self.fom_state).map_err(err)
            }
            ProcessKind::Odometer => ProcessSpec::odometer(self.schedule.clone()).map_err(err),
        }
    }

    pub fn martingale_spec(&self) -> Result<MartingaleSpec, CliError> {
        let err = |e: recurpred_core::martingale_lab::LabError| CliError::Input(format!("martingale spec: {e}"));
        match self.martingale {
            LabKind::Coin => MartingaleSpec::lp_bounded(self.moment_p, DifferenceGenerator::Rademacher).map_err(err),
            LabKind::Pareto => MartingaleSpec::lp_bounded(
                self.moment_p,
                DifferenceGenerator::CenteredPareto { shape: self.pareto_shape },
            )
            .map_err(err),
            LabKind::Feedback => {
                MartingaleSpec::lp_bounded(self.moment_p, DifferenceGenerator::Feedback { gain: self.feedback_gain })
                    .map_err(err)
            }
            LabKind::Llogl => Ok(MartingaleSpec::QuantizedLlogl(HeavyDyadicLaw::new(self.heavy_max_exponent).map_err(err)?)),
        }
    }

    pub fn adversary_params(&self) -> AdversaryParams {
        AdversaryParams {
            stages: self.stages,
            mc_paths: self.mc_paths,
            horizon: self.mc_horizon,
            seed: self.seed_base,
            ..AdversaryParams::default()
        }
    }

    /// `out`, else `$RECURPRED_OUT_DIR/<default_name>`, else `./<default_name>`.
    pub fn output_path(&self, default_name: &str) -> PathBuf {
        if let Some(out) = &self.out {
            return out.clone();
        }
        match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Path::new(&dir).join(default_name),
            _ => PathBuf::from(default_name),
        }
    }

    fn value_of(&self, key: &str) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        match key {
            "process" => self.process.name().into(),
            "markov_up" => self.markov_up.to_string(),
            "markov_stay" => self.markov_stay.to_string(),
            "bernoulli" => self.bernoulli.to_string(),
            "ar1_a" => self.ar1_a.to_string(),
            "ar1_sigma" => self.ar1_sigma.to_string(),
            "fom_transition" => {
                let rows: Vec<String> = self
                    .fom_transition
                    .iter()
                    .map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "))
                    .collect();
                rows.join("; ")
            }
            "fom_state" => self.fom_state.to_string(),
            "schedule" => self.schedule.to_string(),
            "horizon" => self.horizon.to_string(),
            "p" => self.p.to_string(),
            "seeds" => self.seeds.to_string(),
            "seed_base" => self.seed_base.to_string(),
            "out" => path(&self.out),
            "data" => path(&self.data),
            "k" => self.k.map_or("all".into(), |k| k.to_string()),
            "enum_cap" => self.enum_cap.to_string(),
            "slack" => self.slack.to_string(),
            "scheme" => self.scheme.to_string(),
            "stages" => self.stages.to_string(),
            "mc_paths" => self.mc_paths.to_string(),
            "mc_horizon" => self.mc_horizon.to_string(),
            "martingale" => self.martingale.name().into(),
            "moment_p" => self.moment_p.to_string(),
            "pareto_shape" => self.pareto_shape.to_string(),
            "feedback_gain" => self.feedback_gain.to_string(),
            "heavy_max_exponent" => self.heavy_max_exponent.to_string(),
            "n_max" => self.n_max.to_string(),
            "sup_p" => self.sup_p.to_string(),
            "workers" => self.workers.to_string(),
            _ => String::new(),
        }
    }

    /// The merged configuration in the file format, loadable as is.
    pub fn render(&self, subcommand: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# effective config for `{subcommand}`");
        let _ = writeln!(s, "# generator: {GENERATOR}");
        for key in KEYS {
            let value = self.value_of(key);
            if value.is_empty() {
                let _ = writeln!(s, "# {key} =");
            } else {
                let _ = writeln!(s, "{key} = {value}");
            }
        }
        s
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut config = RunConfig::default();
    config
        .apply_text(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(config)
}
