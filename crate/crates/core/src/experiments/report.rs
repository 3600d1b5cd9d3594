use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            _ => Err(Error::InvalidArgument(format!(
                "unknown output format `{s}`"
            ))),
        }
    }
}

/// A table cell: numbers are written with 17 significant digits in CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Num(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }
}

/// A named grid with one header row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<Cell>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].clone()).collect())
    }

    fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::to_csv).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Setup of a single constrained fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub function: String,
    pub dim: usize,
    pub space: String,
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
}

/// Scalar outcome of a single constrained fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_factor: Option<f64>,
    pub iterations: usize,
    pub terminated: String,
    pub final_worst_sdist: f64,
    /// Worst signed distance on a uniform 10,001-point grid, computed
    /// independently of the solver's global search.
    pub grid_min_sdist: f64,
    pub input_norm: f64,
    pub output_norm: f64,
}

/// Everything one experiment cell produces. All parts are optional, so an
/// empty report serialises to `{}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<RunMetadata>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<RunSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tables: Vec<Table>,
}

impl ExperimentReport {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Files written for a CSV report at `path`: a single table goes to `path`
/// itself, several tables go to `<stem>.<table>.csv` next to it.
pub fn csv_paths(report: &ExperimentReport, path: &Path) -> Vec<PathBuf> {
    if report.tables.len() == 1 {
        return vec![path.to_path_buf()];
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    report
        .tables
        .iter()
        .map(|t| path.with_file_name(format!("{stem}.{}.csv", t.name)))
        .collect()
}

/// Writes the report as one JSON document or as one CSV file per table.
/// Returns the paths written.
pub fn emit_report(
    report: &ExperimentReport,
    format: OutputFormat,
    path: &Path,
) -> Result<Vec<PathBuf>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    match format {
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(report)?;
            fs::write(path, text).map_err(io_err(path))?;
            Ok(vec![path.to_path_buf()])
        }
        OutputFormat::Csv => {
            let paths = csv_paths(report, path);
            for (table, p) in report.tables.iter().zip(&paths) {
                let file = fs::File::create(p).map_err(io_err(p))?;
                let mut out = std::io::BufWriter::new(file);
                table
                    .write_csv(&mut out)
                    .and_then(|_| out.flush())
                    .map_err(io_err(p))?;
            }
            Ok(paths)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentReport {
        let mut t = Table::new("curves", &["x", "f"]);
        for i in 0..5 {
            let x = -1.0 + 0.5 * i as f64;
            t.push(vec![x.into(), (x * x / 3.0).into()]);
        }
        let mut s = Table::new("summary", &["name", "n"]);
        s.push(vec!["a,b".into(), 3usize.into()]);
        ExperimentReport {
            name: "sample".into(),
            metadata: Some(RunMetadata {
                function: "f2".into(),
                dim: 6,
                space: "l2".into(),
                preset: "F0".into(),
                algorithm: Some("greedy".into()),
                epsilon: None,
                delta: Some(1e-10),
                max_iters: None,
            }),
            summary: Some(RunSummary {
                eta: Some(0.1 + 0.2),
                error_factor: Some(1.0 / 3.0),
                iterations: 7,
                terminated: "feasible".into(),
                final_worst_sdist: -1.2345678901234567e-11,
                grid_min_sdist: 3.0e-300,
                input_norm: std::f64::consts::PI,
                output_norm: std::f64::consts::E,
            }),
            notes: vec!["note".into()],
            tables: vec![t, s],
        }
    }

    #[test]
    fn empty_report_is_empty_object() {
        let text = serde_json::to_string(&ExperimentReport::default()).unwrap();
        assert_eq!(text, "{}");
    }

    #[test]
    fn json_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let r = sample();
        emit_report(&r, OutputFormat::Json, &path).unwrap();
        let back: ExperimentReport =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_has_header_and_one_row_per_grid_point() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out").join("r.csv");
        let paths = emit_report(&sample(), OutputFormat::Csv, &path).unwrap();
        assert_eq!(paths.len(), 2);
        let text = fs::read_to_string(&paths[0]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,f");
        assert_eq!(lines.len(), 6);
        let v: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 0.25 / 3.0);
        assert!(paths[1].ends_with("r.summary.csv"));
        assert!(fs::read_to_string(&paths[1]).unwrap().contains("\"a,b\",3"));
    }

    #[test]
    fn single_table_csv_uses_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        let mut r = sample();
        r.tables.truncate(1);
        assert_eq!(
            emit_report(&r, OutputFormat::Csv, &path).unwrap(),
            vec![path]
        );
    }

    #[test]
    fn io_errors_carry_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_report(&sample(), OutputFormat::Json, &blocker.join("r.json")).unwrap_err();
        assert!(err.to_string().contains("file"));
    }
}
