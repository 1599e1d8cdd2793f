//! CSV formats for harness reports and martingale lab trajectories.

use std::io::{Read, Write};

use recurpred_core::harness::CesaroReport;
use recurpred_core::martingale_lab::Trajectory;

pub const REPORT_HEADER: [&str; 6] = ["t", "p", "seed", "err_vs_oracle", "err_vs_realized", "reference_limit"];
pub const TRAJECTORY_HEADER: [&str; 4] = ["n", "seed", "average", "running_sup"];
pub const AGG_SEED: &str = "agg";

/// One CSV row; `seed = None` marks the aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub t: usize,
    pub p: f64,
    pub seed: Option<u64>,
    pub err_vs_oracle: f64,
    pub err_vs_realized: f64,
    pub reference_limit: Option<f64>,
}

/// 17 significant digits, enough to read back the identical `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Per-seed rows in seed order, then the aggregate rows.
pub fn report_rows(report: &CesaroReport) -> Vec<ReportRow> {
    let mut rows = Vec::with_capacity(report.grid.len() * (report.per_seed.len() + 1));
    let row = |j: usize, seed, oracle: &[f64], realized: &[f64]| ReportRow {
        t: report.grid[j],
        p: report.p,
        seed,
        err_vs_oracle: oracle[j],
        err_vs_realized: realized[j],
        reference_limit: report.reference_limit,
    };
    for series in &report.per_seed {
        for j in 0..report.grid.len() {
            rows.push(row(j, Some(series.seed), &series.err_vs_oracle, &series.err_vs_realized));
        }
    }
    for j in 0..report.err_vs_oracle.len() {
        rows.push(row(j, None, &report.err_vs_oracle, &report.err_vs_realized));
    }
    rows
}

pub fn write_report<W: Write>(report: &CesaroReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in report_rows(report) {
        w.write_record([
            r.t.to_string(),
            format_float(r.p),
            r.seed.map_or_else(|| AGG_SEED.to_string(), |s| s.to_string()),
            format_float(r.err_vs_oracle),
            format_float(r.err_vs_realized),
            r.reference_limit.map_or_else(String::new, format_float),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn report_to_string(report: &CesaroReport) -> String {
    let mut buf = Vec::new();
    write_report(report, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is ascii")
}

fn field(record: &csv::StringRecord, i: usize, line: u64) -> Result<&str, String> {
    record.get(i).ok_or_else(|| format!("line {line}: missing column {}", REPORT_HEADER[i]))
}

fn parse_field<T: std::str::FromStr>(text: &str, name: &str, line: u64) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    text.parse().map_err(|e| format!("line {line}: {name} {text:?}: {e}"))
}

/// Parses CSV written by [`write_report`].
pub fn read_report<R: Read>(input: R) -> Result<Vec<ReportRow>, String> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(REPORT_HEADER) {
        return Err(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| e.to_string())?;
        let line = record.position().map_or(0, |p| p.line());
        let seed = field(&record, 2, line)?;
        let limit = field(&record, 5, line)?;
        rows.push(ReportRow {
            t: parse_field(field(&record, 0, line)?, "t", line)?,
            p: parse_field(field(&record, 1, line)?, "p", line)?,
            seed: if seed == AGG_SEED { None } else { Some(parse_field(seed, "seed", line)?) },
            err_vs_oracle: parse_field(field(&record, 3, line)?, "err_vs_oracle", line)?,
            err_vs_realized: parse_field(field(&record, 4, line)?, "err_vs_realized", line)?,
            reference_limit: if limit.is_empty() { None } else { Some(parse_field(limit, "reference_limit", line)?) },
        });
    }
    Ok(rows)
}

pub fn write_trajectories<W: Write>(trajectories: &[Trajectory], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for tr in trajectories {
        for (j, n) in tr.grid.iter().enumerate() {
            w.write_record([
                n.to_string(),
                tr.seed.to_string(),
                format_float(tr.averages[j]),
                format_float(tr.running_sup[j]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
