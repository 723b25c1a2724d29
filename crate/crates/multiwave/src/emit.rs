//! CSV and aligned-text renderings of a [`ResultTable`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{CellRow, EreRow, ResultTable};

pub const ERE_FILE: &str = "ere.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// File name of a scenario's long-format CSV.
pub fn scenario_file(scenario: &str) -> String {
    let safe: String = scenario
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}.csv")
}

fn validate(table: &ResultTable) -> Result<()> {
    if table.cells.is_empty() {
        return Err(Error::InvalidTable("no result cells".into()));
    }
    for c in &table.cells {
        if ![c.true_value, c.mean, c.var, c.mse].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTable(format!(
                "non-finite entry for {} {} {} {} {}",
                c.scenario, c.strategy, c.design, c.estimator, c.coef
            )));
        }
        if c.mse < c.var {
            return Err(Error::InvalidTable(format!("MSE below variance for {} {}", c.scenario, c.coef)));
        }
    }
    if table.ere.iter().any(|e| !e.ere.is_finite() || !e.total_var.is_finite()) {
        return Err(Error::InvalidTable("non-finite ERE".into()));
    }
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[&T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::csv(path, e))).collect()
}

/// Writes one long-format CSV per scenario, `ere.csv` and `summary.txt`
/// into `dir` (created if needed) and returns the paths written.
///
/// The table is checked before anything is written.
pub fn emit(table: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>> {
    validate(table)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for scenario in table.scenarios() {
        let path = dir.join(scenario_file(&scenario));
        let rows: Vec<&CellRow> = table.cells.iter().filter(|c| c.scenario == scenario).collect();
        write_csv(&path, &rows)?;
        written.push(path);
    }
    let ere_path = dir.join(ERE_FILE);
    if table.ere.is_empty() {
        // csv writes no header for an empty serialize stream
        let header = "scenario,strategy,design,estimator,total_var,ere\n";
        fs::write(&ere_path, header).map_err(|e| Error::io(&ere_path, e))?;
    } else {
        write_csv(&ere_path, &table.ere.iter().collect::<Vec<_>>())?;
    }
    written.push(ere_path);
    let summary = dir.join(SUMMARY_FILE);
    fs::write(&summary, render_text(table)).map_err(|e| Error::io(&summary, e))?;
    written.push(summary);
    Ok(written)
}

pub fn read_cells(path: &Path) -> Result<Vec<CellRow>> {
    read_csv(path)
}

pub fn read_ere(path: &Path) -> Result<Vec<EreRow>> {
    read_csv(path)
}

/// Reads back every scenario CSV named in `scenarios` plus `ere.csv`.
pub fn read_table(dir: &Path, scenarios: &[String]) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    for s in scenarios {
        table.cells.extend(read_cells(&dir.join(scenario_file(s)))?);
    }
    table.ere = read_ere(&dir.join(ERE_FILE))?;
    Ok(table)
}

fn push_row(out: &mut String, cols: &[String], widths: &[usize]) {
    for (i, (c, w)) in cols.iter().zip(widths).enumerate() {
        if i == 0 {
            let _ = write!(out, "{c:<w$}");
        } else {
            let _ = write!(out, "  {c:>w$}");
        }
    }
    out.push('\n');
}

fn push_table(out: &mut String, header: Vec<String>, rows: Vec<Vec<String>>) {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    push_row(out, &header, &widths);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    push_row(out, &rule, &widths);
    for r in &rows {
        push_row(out, r, &widths);
    }
}

/// Human-readable summary: empirical variances (x 10^3) with strategies as
/// columns, followed by the ERE table.
pub fn render_text(table: &ResultTable) -> String {
    let mut out = String::new();
    for scenario in table.scenarios() {
        let cells: Vec<&CellRow> = table.cells.iter().filter(|c| c.scenario == scenario).collect();
        let mut strategies: Vec<(&str, &str)> = Vec::new();
        let mut rows_keys: Vec<(&str, &str)> = Vec::new();
        for c in &cells {
            if !strategies.contains(&(c.strategy.as_str(), c.design.as_str())) {
                strategies.push((&c.strategy, &c.design));
            }
            if !rows_keys.contains(&(c.estimator.as_str(), c.coef.as_str())) {
                rows_keys.push((&c.estimator, &c.coef));
            }
        }
        let _ = writeln!(out, "Scenario {scenario}: empirical variance x 10^3");
        let mut header = vec!["estimator/coef".to_string()];
        header.extend(strategies.iter().map(|(s, d)| format!("{s} ({d})")));
        let rows = rows_keys
            .iter()
            .map(|(est, coef)| {
                let mut r = vec![format!("{est} {coef}")];
                for (s, d) in &strategies {
                    let v = cells
                        .iter()
                        .find(|c| c.strategy == *s && c.design == *d && c.estimator == *est && c.coef == *coef);
                    r.push(v.map_or("-".into(), |c| format!("{:.3}", c.var * 1e3)));
                }
                r
            })
            .collect();
        push_table(&mut out, header, rows);
        out.push('\n');
    }
    if !table.ere.is_empty() {
        out.push_str("Empirical relative efficiency (A-optimal total variance / strategy total variance)\n");
        let header = ["scenario", "strategy", "design", "estimator", "ERE"].map(String::from).to_vec();
        let rows = table
            .ere
            .iter()
            .map(|e| {
                vec![
                    e.scenario.clone(),
                    e.strategy.clone(),
                    e.design.clone(),
                    e.estimator.clone(),
                    format!("{:.2}", e.ere),
                ]
            })
            .collect();
        push_table(&mut out, header, rows);
    }
    out
}
