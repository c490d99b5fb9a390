//! CSV and JSON outputs.
//!
//! Numbers use [`sig12`]; price columns use exact 12-decimal units so the
//! component columns add up to the price column digit for digit. Every file
//! is written to a temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{RunRecord, SweepRow, SweepTable};
use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::format::{price_units_to_string, sig12, to_price_units};
use crate::solver::MarketResult;

pub const AGGREGATORS_CSV: &str = "aggregators.csv";
pub const TRACE_CSV: &str = "trace.csv";
pub const LINEARIZATION_CSV: &str = "linearization.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SCENARIO_JSON: &str = "scenario.json";

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub record: RunRecord,
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One row of the price decomposition table in exact price units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriceRow {
    pub voltage: i128,
    pub congestion: i128,
    pub energy_loss: i128,
    pub fairness: i128,
}

impl PriceRow {
    pub fn total(&self) -> i128 {
        self.voltage + self.congestion + self.energy_loss + self.fairness
    }
}

/// Components rounded to `10⁻¹²`; the row total defines the printed price.
pub fn price_rows(result: &MarketResult) -> Vec<PriceRow> {
    let b = &result.breakdown;
    (0..b.voltage.len())
        .map(|k| PriceRow {
            voltage: to_price_units(b.voltage[k]),
            congestion: to_price_units(b.congestion[k]),
            energy_loss: to_price_units(b.energy_loss[k]),
            fairness: to_price_units(b.fairness[k]),
        })
        .collect()
}

/// `label,node,p_k,c_k,c_V,c_C,c_EL,c_F,G_k`, one row per aggregator.
pub fn aggregators_csv(record: &RunRecord) -> String {
    let mut s = String::from("label,node,p_k,c_k,c_V,c_C,c_EL,c_F,G_k\n");
    let rows = price_rows(&record.result);
    for ((info, row), p) in record
        .aggregators
        .iter()
        .zip(&rows)
        .zip(&record.result.demands)
    {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            info.label,
            info.node,
            sig12(*p),
            price_units_to_string(row.total()),
            price_units_to_string(row.voltage),
            price_units_to_string(row.congestion),
            price_units_to_string(row.energy_loss),
            price_units_to_string(row.fairness),
            info.size,
        );
    }
    s
}

/// `iteration,dp_l1,lagrangian,max_slack,jain`; missing values are empty.
pub fn trace_csv(result: &MarketResult) -> String {
    let opt = |x: Option<f64>| x.map(sig12).unwrap_or_default();
    let mut s = String::from("iteration,dp_l1,lagrangian,max_slack,jain\n");
    for t in &result.trace {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            t.iteration,
            opt(t.dp_l1),
            sig12(t.lagrangian),
            sig12(t.max_slack),
            opt(t.jain)
        );
    }
    s
}

/// Writes the aggregator table, trace, linearization report and summary.
pub fn emit_results(
    scenario: &Scenario,
    record: &RunRecord,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let summary = RunSummary {
        scenario: scenario.clone(),
        record: record.clone(),
    };
    let files = [
        (AGGREGATORS_CSV, aggregators_csv(record)),
        (TRACE_CSV, trace_csv(&record.result)),
        (LINEARIZATION_CSV, record.linearization.to_csv()),
        (SUMMARY_JSON, serde_json::to_string_pretty(&summary)? + "\n"),
    ];
    write_all(out_dir, &files)
}

fn write_all(out_dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = out_dir.join(name);
        write_atomic(&path, contents)?;
        written.push(path);
    }
    Ok(written)
}

impl SweepTable {
    /// `C,J,welfare,pof,price_spread,iterations,converged`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("C,J,welfare,pof,price_spread,iterations,converged\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                sig12(r.fairness_weight),
                sig12(r.jain),
                sig12(r.welfare),
                sig12(r.pof),
                sig12(r.price_spread),
                r.iterations,
                r.converged
            );
        }
        s
    }

    /// Parses the rows written by [`SweepTable::to_csv`].
    pub fn rows_from_csv(text: &str) -> Result<Vec<SweepRow>> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "C,J,welfare,pof,price_spread,iterations,converged")) => {}
            _ => return Err(parse_error(1, "unexpected sweep header")),
        }
        lines
            .filter(|(_, l)| !l.is_empty())
            .map(|(i, line)| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 7 {
                    return Err(parse_error(i + 1, "expected 7 fields"));
                }
                let num = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|e| parse_error(i + 1, &e.to_string()))
                };
                Ok(SweepRow {
                    fairness_weight: num(f[0])?,
                    jain: num(f[1])?,
                    welfare: num(f[2])?,
                    pof: num(f[3])?,
                    price_spread: num(f[4])?,
                    iterations: f[5]
                        .parse()
                        .map_err(|_| parse_error(i + 1, "bad iteration count"))?,
                    converged: f[6]
                        .parse()
                        .map_err(|_| parse_error(i + 1, "bad converged flag"))?,
                })
            })
            .collect()
    }
}

fn parse_error(line: usize, msg: &str) -> Error {
    Error::Parse {
        line,
        msg: msg.to_string(),
    }
}

/// Writes `sweep.csv` and the scenario it was run on.
pub fn emit_sweep(scenario: &Scenario, table: &SweepTable, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let files = [
        (SWEEP_CSV, table.to_csv()),
        (SCENARIO_JSON, scenario.to_json() + "\n"),
    ];
    write_all(out_dir, &files)
}

/// Reads a run directory's summary.
pub fn read_summary(run_dir: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(run_dir.join(SUMMARY_JSON))?;
    Ok(serde_json::from_str(&text)?)
}

/// Re-emits the price decomposition table of an earlier run.
pub fn decompose(run_dir: &Path, out_dir: &Path) -> Result<PathBuf> {
    let summary = read_summary(run_dir)?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(AGGREGATORS_CSV);
    write_atomic(&path, &aggregators_csv(&summary.record))?;
    Ok(path)
}
