//! Tabular results, derived metrics and their on-disk layout.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::LabError;

pub const CSV_COLUMNS: [&str; 9] = [
    "sweep_var",
    "value",
    "infidelity",
    "strength_base",
    "strength_corr",
    "integral_norm",
    "n_periods",
    "cert_delta",
    "certified",
];

/// One line of results.csv. `sweep_var` names the swept quantity and, in brackets, the curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub sweep_var: String,
    pub value: f64,
    pub infidelity: f64,
    pub strength_base: f64,
    pub strength_corr: f64,
    pub integral_norm: f64,
    pub n_periods: usize,
    pub cert_delta: f64,
    pub certified: bool,
}

impl Row {
    pub fn new(sweep_var: impl Into<String>, value: f64) -> Self {
        Self {
            sweep_var: sweep_var.into(),
            value,
            infidelity: f64::NAN,
            strength_base: 0.0,
            strength_corr: 0.0,
            integral_norm: 0.0,
            n_periods: 0,
            cert_delta: 0.0,
            certified: true,
        }
    }

    fn fields(&self) -> [String; 9] {
        [
            self.sweep_var.clone(),
            fmt_f64(self.value),
            fmt_f64(self.infidelity),
            fmt_f64(self.strength_base),
            fmt_f64(self.strength_corr),
            fmt_f64(self.integral_norm),
            self.n_periods.to_string(),
            fmt_f64(self.cert_delta),
            self.certified.to_string(),
        ]
    }
}

/// A two-column data file.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: &str, x_label: &str, y_label: &str, xs: &[f64], ys: &[f64]) -> Self {
        Self {
            name: name.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            points: xs.iter().copied().zip(ys.iter().copied()).collect(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ResultSet {
    pub rows: Vec<Row>,
    pub series: Vec<Series>,
    pub summary: BTreeMap<String, Value>,
}

impl ResultSet {
    pub fn put(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(key.to_string(), serde_json::to_value(value).expect("summary value serializes"));
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.summary.get(key).and_then(Value::as_f64)
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Rows of one curve, in sweep order.
    pub fn curve<'a>(&'a self, sweep_var: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.sweep_var == sweep_var)
    }

    pub fn sort_rows(&mut self) {
        self.rows.sort_by(|a, b| a.sweep_var.cmp(&b.sweep_var).then(a.value.total_cmp(&b.value)));
    }
}

/// Fixed-width scientific notation; identical inputs give identical bytes.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.12e}")
    }
}

/// Writes results.csv, results.json and one .dat file per series into `dir`.
pub fn write_results(
    dir: &Path,
    config: &ExperimentConfig,
    results: &ResultSet,
    extra_meta: BTreeMap<String, Value>,
) -> Result<Vec<PathBuf>, LabError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let csv_path = dir.join("results.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(CSV_COLUMNS)?;
    for row in &results.rows {
        w.write_record(row.fields())?;
    }
    w.flush()?;
    written.push(csv_path);

    let mut series_files = Vec::new();
    for s in &results.series {
        let path = dir.join(format!("{}.dat", s.name));
        let mut f = fs::File::create(&path)?;
        writeln!(f, "# {} {}", s.x_label, s.y_label)?;
        for (x, y) in &s.points {
            writeln!(f, "{} {}", fmt_f64(*x), fmt_f64(*y))?;
        }
        series_files.push(format!("{}.dat", s.name));
        written.push(path);
    }

    let mut meta = json!({
        "schema_version": crate::config::SCHEMA_VERSION,
        "experiment": config.kind().name(),
        "crate_version": env!("CARGO_PKG_VERSION"),
        "config_sha256": config.hash(),
        "config": config,
        "norm_convention": config.convention().to_string(),
        "strength_reference": config.strength_reference().as_str(),
        "columns": CSV_COLUMNS,
        "row_count": results.rows.len(),
        "series_files": series_files,
        "derived": results.summary,
    });
    if let Value::Object(m) = &mut meta {
        m.extend(extra_meta);
    }
    let json_path = dir.join("results.json");
    fs::write(&json_path, serde_json::to_string_pretty(&meta)? + "\n")?;
    written.push(json_path);
    Ok(written)
}
