//! Report artifacts: CSV table, versioned JSON envelope, gnuplot script.

use std::io::Write;
use std::path::{Path, PathBuf};

use kfp_core::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

pub const SCHEMA: &str = "kfp-report";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Guard {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

/// A closed-form prediction next to the value the run produced.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub quantity: String,
    pub predicted: Value,
    pub measured: Value,
    pub relative_error: Option<f64>,
}

impl Comparison {
    pub fn real(quantity: impl Into<String>, predicted: f64, measured: f64) -> Self {
        let err = (measured - predicted).abs() / predicted.abs();
        Self {
            quantity: quantity.into(),
            predicted: json!(predicted),
            measured: json!(measured),
            relative_error: finite(err),
        }
    }

    pub fn complex(quantity: impl Into<String>, predicted: Complex64, measured: Complex64) -> Self {
        let err = (measured - predicted).norm() / predicted.norm();
        Self {
            quantity: quantity.into(),
            predicted: json!([predicted.re, predicted.im]),
            measured: json!([measured.re, measured.im]),
            relative_error: finite(err),
        }
    }

    /// One-sided bound; no relative error is meaningful.
    pub fn bound(quantity: impl Into<String>, bound: f64, measured: f64) -> Self {
        Self { quantity: quantity.into(), predicted: json!(bound), measured: json!(measured), relative_error: None }
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_col: usize,
    /// `(column, expression)` pairs; the expression defaults to the column.
    pub series: Vec<(String, String)>,
    pub logx: bool,
    pub logy: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| CliError::Serialize(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::Serialize(e.to_string()))?;
        }
        w.into_inner().map_err(|e| CliError::Serialize(e.to_string()))
    }
}

/// Shortest round-trip exponent form, stable across runs.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Everything one command produces.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub command: &'static str,
    pub parameters: Value,
    pub grid: Value,
    pub guards: Vec<Guard>,
    pub comparisons: Vec<Comparison>,
    pub result: Value,
    pub table: Option<Table>,
    pub plot: Option<Plot>,
}

impl Artifact {
    pub fn new(command: &'static str, parameters: &impl Serialize) -> CliResult<Self> {
        Ok(Self {
            command,
            parameters: to_value(parameters)?,
            grid: Value::Null,
            guards: Vec::new(),
            comparisons: Vec::new(),
            result: Value::Null,
            table: None,
            plot: None,
        })
    }

    pub fn guard(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.guards.push(Guard { name: name.into(), ok, detail: detail.into() });
    }

    pub fn stem(&self) -> String {
        self.command.replace('-', "_")
    }

    pub fn violated(&self) -> Vec<&Guard> {
        self.guards.iter().filter(|g| !g.ok).collect()
    }

    pub fn envelope(&self) -> Value {
        json!({
            "schema": SCHEMA,
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "versions": { "kfp-core": kfp_core::VERSION, "kfp-cli": env!("CARGO_PKG_VERSION") },
            "parameters": self.parameters,
            "grid": self.grid,
            "guards": self.guards,
            "predicted_vs_measured": self.comparisons,
            "result": self.result,
        })
    }

    fn gnuplot(&self, csv_name: &str) -> Option<String> {
        let p = self.plot.as_ref()?;
        let mut s = String::new();
        s.push_str("set datafile separator ','\n");
        s.push_str("set key autotitle columnhead\n");
        s.push_str(&format!("set title '{}'\n", p.title));
        s.push_str(&format!("set xlabel '{}'\n", self.table.as_ref()?.header[p.x_col - 1]));
        if p.logx {
            s.push_str("set logscale x\n");
        }
        if p.logy {
            s.push_str("set logscale y\n");
        }
        let parts: Vec<String> = p
            .series
            .iter()
            .map(|(name, expr)| format!("'{csv_name}' using {}:({expr}) with linespoints title '{name}'", p.x_col))
            .collect();
        s.push_str(&format!("plot {}\n", parts.join(", \\\n     ")));
        s.push_str("pause -1\n");
        Some(s)
    }

    /// Write `<stem>.json`, `<stem>.csv` and optionally `<stem>.gp` into `dir`.
    pub fn write(&self, dir: &Path, plot: bool) -> CliResult<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let stem = self.stem();
        let mut written = Vec::new();
        let json_path = dir.join(format!("{stem}.json"));
        let mut body = serde_json::to_vec_pretty(&self.envelope()).map_err(|e| CliError::Serialize(e.to_string()))?;
        body.push(b'\n');
        write_atomic(&json_path, &body)?;
        written.push(json_path);
        if let Some(t) = &self.table {
            let csv_path = dir.join(format!("{stem}.csv"));
            write_atomic(&csv_path, &t.to_csv()?)?;
            written.push(csv_path);
            if plot {
                if let Some(script) = self.gnuplot(&format!("{stem}.csv")) {
                    let gp = dir.join(format!("{stem}.gp"));
                    write_atomic(&gp, script.as_bytes())?;
                    written.push(gp);
                }
            }
        }
        Ok(written)
    }
}

pub fn to_value(v: &impl Serialize) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::Serialize(e.to_string()))
}

fn io(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), source }
}

/// Write to a sibling temporary file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let res = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = res {
        let _ = std::fs::remove_file(&tmp);
        return Err(io(path, e));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_format_round_trips() {
        for x in [0.0, 1.0, -2.5e-17, 1.0 / 3.0, 6.02e23] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(opt(None), "");
    }

    #[test]
    fn artifacts_land_atomically_with_plot() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifact::new("free-decay", &json!({"dim": 4})).unwrap();
        let mut t = Table::new(&["t", "value"]);
        t.push(vec![num(1.0), num(2.0)]);
        a.table = Some(t);
        a.plot = Some(Plot {
            title: "demo".into(),
            x_col: 1,
            series: vec![("value".into(), "$2".into())],
            logx: true,
            logy: false,
        });
        a.guard("hermite-tail", true, "ok");
        let files = a.write(dir.path(), true).unwrap();
        assert_eq!(files.len(), 3);
        let names: Vec<String> =
            std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        assert!(names.iter().all(|n| !n.contains(".tmp")), "{names:?}");
        let csv = std::fs::read_to_string(dir.path().join("free_decay.csv")).unwrap();
        assert_eq!(csv, "t,value\n1e0,2e0\n");
        let gp = std::fs::read_to_string(dir.path().join("free_decay.gp")).unwrap();
        assert!(gp.contains("'free_decay.csv' using 1:($2)"));
        let v: Value = serde_json::from_slice(&std::fs::read(dir.path().join("free_decay.json")).unwrap()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["versions"]["kfp-core"], kfp_core::VERSION);
    }
}
