//! File formats: CSV traces and sweep tables, gnuplot data files, matrix and
//! adjacency files, and JSON reports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gtsim_core::experiment::SweepRow;
use gtsim_core::metrics::RunTrace;
use gtsim_core::{Graph, Matrix};

use crate::error::{CliError, CliResult};

/// 17 significant digits, enough to round-trip an `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_adjacency(path: &Path) -> CliResult<Graph> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(Graph::from_adjacency_list(&text)?)
}

/// Consensus targets, one CSV row per worker. A first row that does not parse
/// as numbers is treated as a header.
pub fn read_targets(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err)?;
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if k == 0 => continue,
            Err(e) => {
                return Err(CliError::Core(gtsim_core::Error::Parse {
                    line: k + 1,
                    msg: format!("not a number: {e}"),
                }))
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Usage(format!("{}: no target rows", path.display())));
    }
    Ok(rows)
}

/// Where a command writes its files; `None` means standard output.
#[derive(Clone, Debug)]
pub struct OutDir(pub Option<PathBuf>);

impl OutDir {
    pub fn create(&self) -> CliResult<()> {
        if let Some(dir) = &self.0 {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        Ok(())
    }

    /// Writes `contents` to `name` inside the directory, or to stdout when
    /// `primary` and no directory was given.
    pub fn emit(&self, name: &str, contents: &str, primary: bool) -> CliResult<()> {
        match &self.0 {
            Some(dir) => {
                let path = dir.join(name);
                fs::write(&path, contents).map_err(|e| CliError::io(path, e))
            }
            None if primary => {
                let mut out = std::io::stdout().lock();
                out.write_all(contents.as_bytes())
                    .map_err(|e| CliError::io("<stdout>", e))
            }
            None => Ok(()),
        }
    }
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is UTF-8")
}

pub const TRACE_HEADER: [&str; 5] = ["t", "opt_error", "consensus_dist", "mean_dist_to_opt", "worker_error"];

pub fn trace_csv(trace: &RunTrace) -> String {
    csv_string(
        &TRACE_HEADER,
        trace.snapshots.iter().map(|s| {
            vec![
                s.t.to_string(),
                num(s.opt_error),
                num(s.consensus_dist),
                num(s.mean_dist),
                num(s.worker_error),
            ]
        }),
    )
}

pub fn sweep_header(param: &str) -> [&str; 7] {
    [param, "p", "c", "plateau", "std_err", "predicted_floor", "stationary"]
}

pub fn sweep_csv(param: &str, rows: &[SweepRow]) -> String {
    csv_string(
        &sweep_header(param),
        rows.iter().map(|r| {
            vec![
                num(r.param),
                num(r.p),
                num(r.c),
                num(r.plateau),
                num(r.std_err),
                num(r.predicted_floor),
                r.stationary.to_string(),
            ]
        }),
    )
}

/// Whitespace-separated columns with a `#` header line.
pub fn gnuplot_dat(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = format!("# {}\n", header.join(" "));
    for row in rows {
        let cols: Vec<String> = row.into_iter().map(num).collect();
        out.push_str(&cols.join(" "));
        out.push('\n');
    }
    out
}

pub fn matrix_csv(m: &Matrix) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    for r in 0..m.rows() {
        w.write_record(m.row(r).iter().map(|v| num(*v)))
            .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is UTF-8")
}

pub fn json_string(value: &serde_json::Value) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
