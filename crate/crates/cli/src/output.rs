//! CSV tables with fixed schemas, written atomically.
//!
//! | file            | columns                                                    |
//! |-----------------|------------------------------------------------------------|
//! | u.csv           | k, j, t, x, u, grad                                        |
//! | nu_plus.csv     | k, j, t, x, mass                                           |
//! | nu_minus.csv    | k, j, t, x, mass                                           |
//! | diagnostics.csv | k, t, norm_sq, grad_norm_sq, upper_excess, lower_excess    |
//! | sweep.csv       | n, max_upper_excess, sup_diff_to_projected, mass_kp, mass_km |
//! | trace.csv       | iter, norm_sq, ratio                                       |
//! | summary.csv     | check, instance, status, metric, value, detail             |
//!
//! Reals use Rust's shortest round-trip form, so a table read back gives the
//! exact values.

use std::io::Write;
use std::path::Path;

use dospde::grid::Diagnostics;
use dospde::model::{DiscreteMeasure, FieldSeries};
use dospde::picard::PicardTrace;
use dospde::validation::{Summary, SweepRow};

use crate::CliError;

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

fn r(v: f64) -> String {
    format!("{v:?}")
}

pub fn field_table(u: &FieldSeries, times: &[f64], xs: &[f64]) -> Table {
    let mut rows = Vec::with_capacity(u.values.len() * xs.len());
    for (k, (vals, grads)) in u.values.iter().zip(&u.grad).enumerate() {
        for (j, (v, g)) in vals.iter().zip(grads).enumerate() {
            rows.push(vec![k.to_string(), j.to_string(), r(times[k]), r(xs[j]), r(*v), r(*g)]);
        }
    }
    Table {
        header: vec!["k", "j", "t", "x", "u", "grad"],
        rows,
    }
}

pub fn measure_table(m: &DiscreteMeasure, times: &[f64], xs: &[f64]) -> Table {
    let mut rows = Vec::with_capacity(m.increments.len() * xs.len());
    for (k, row) in m.increments.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            rows.push(vec![k.to_string(), j.to_string(), r(times[k]), r(xs[j]), r(*v)]);
        }
    }
    Table {
        header: vec!["k", "j", "t", "x", "mass"],
        rows,
    }
}

pub fn diagnostics_table(d: &Diagnostics, times: &[f64]) -> Table {
    let rows = d
        .energy
        .iter()
        .enumerate()
        .map(|(k, e)| {
            vec![
                k.to_string(),
                r(times[k]),
                r(e.norm_sq),
                r(e.grad_norm_sq),
                r(d.upper_excess[k]),
                r(d.lower_excess[k]),
            ]
        })
        .collect();
    Table {
        header: vec!["k", "t", "norm_sq", "grad_norm_sq", "upper_excess", "lower_excess"],
        rows,
    }
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    Table {
        header: vec!["n", "max_upper_excess", "sup_diff_to_projected", "mass_kp", "mass_km"],
        rows: rows
            .iter()
            .map(|s| vec![r(s.n), r(s.max_upper_excess), r(s.sup_diff_to_projected), r(s.mass_kp), r(s.mass_km)])
            .collect(),
    }
}

pub fn trace_table(trace: &PicardTrace) -> Table {
    Table {
        header: vec!["iter", "norm_sq", "ratio"],
        rows: trace
            .records
            .iter()
            .map(|rec| vec![rec.iter.to_string(), r(rec.norm_sq), rec.ratio.map(r).unwrap_or_default()])
            .collect(),
    }
}

pub fn summary_table(s: &Summary) -> Table {
    Table {
        header: vec!["check", "instance", "status", "metric", "value", "detail"],
        rows: s
            .rows
            .iter()
            .map(|row| {
                vec![
                    row.check.clone(),
                    row.instance.clone(),
                    row.status.to_string(),
                    row.metric.clone(),
                    r(row.value),
                    row.detail.clone(),
                ]
            })
            .collect(),
    }
}

pub fn to_csv(table: &Table) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header).expect("in-memory write");
    for row in &table.rows {
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_csv(dir: &Path, name: &str, table: &Table) -> Result<(), CliError> {
    write_atomic(dir, name, &to_csv(table))
}

/// Writes `dir/name` via a temporary file in the same directory and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.join(name).display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(dir.join(name)).map_err(|e| io(e.error))?;
    Ok(())
}
