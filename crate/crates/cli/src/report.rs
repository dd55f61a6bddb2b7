//! Result tables, metadata sidecar, summary text and plot-data files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    /// Meaning and unit of the values.
    pub description: String,
}

/// A numeric table written as `<name>.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    #[serde(skip)]
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[(&str, &str)]) -> Table {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|(n, d)| Column { name: n.to_string(), description: d.to_string() }).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c.name == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.iter().map(|v| format_cell(*v)).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }
}

/// Shortest round-trip decimal; non-finite values as `nan`, `inf`, `-inf`.
pub fn format_cell(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metadata {
    pub kind: String,
    /// SHA-256 of the resolved config in canonical JSON form.
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub threads: usize,
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportBundle {
    pub metadata: Metadata,
    pub tables: Vec<Table>,
    /// Plot-data series, one per figure panel; written as `plot_<name>.csv`.
    pub plots: Vec<Table>,
    /// Lines for the human-readable summary.
    pub summary: Vec<String>,
}

impl ReportBundle {
    pub fn new(metadata: Metadata) -> Self {
        ReportBundle { metadata, tables: Vec::new(), plots: Vec::new(), summary: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty() && self.plots.is_empty()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn plot(&self, name: &str) -> Option<&Table> {
        self.plots.iter().find(|t| t.name == name)
    }

    fn summary_text(&self) -> String {
        let m = &self.metadata;
        let mut s = format!(
            "kind: {}\nconfig hash: {}\nseed: {}\nversion: {}\n",
            m.kind, m.config_hash, m.seed, m.code_version
        );
        for t in self.tables.iter().chain(&self.plots) {
            s.push_str(&format!("table {}: {} rows x {} columns\n", t.name, t.rows.len(), t.columns.len()));
        }
        if !self.summary.is_empty() {
            s.push('\n');
        }
        for line in &self.summary {
            s.push_str(line);
            s.push('\n');
        }
        s
    }
}

#[derive(Serialize)]
struct FileEntry<'a> {
    file: String,
    rows: usize,
    columns: &'a [Column],
}

fn entry(t: &Table, file: String) -> FileEntry<'_> {
    FileEntry { file, rows: t.rows.len(), columns: &t.columns }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    #[serde(flatten)]
    metadata: &'a Metadata,
    tables: Vec<FileEntry<'a>>,
    plots: Vec<FileEntry<'a>>,
}

fn write(path: PathBuf, contents: &[u8]) -> CliResult<PathBuf> {
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn plot_file_name(name: &str) -> String {
    format!("plot_{name}.csv")
}

/// Writes every table, the sidecar `metadata.json` and `summary.txt` into
/// `dir`, overwriting earlier files. An empty bundle writes the summary only.
pub fn emit_reports(bundle: &ReportBundle, dir: &Path) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    if !bundle.is_empty() {
        let mut tables = Vec::new();
        for t in &bundle.tables {
            let file = format!("{}.csv", t.name);
            written.push(write(dir.join(&file), t.to_csv().as_bytes())?);
            tables.push(entry(t, file));
        }
        let mut plots = Vec::new();
        for t in &bundle.plots {
            let file = plot_file_name(&t.name);
            written.push(write(dir.join(&file), t.to_csv().as_bytes())?);
            plots.push(entry(t, file));
        }
        let sidecar = Sidecar { metadata: &bundle.metadata, tables, plots };
        let mut json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        json.push('\n');
        written.push(write(dir.join("metadata.json"), json.as_bytes())?);
    }
    written.push(write(dir.join("summary.txt"), bundle.summary_text().as_bytes())?);
    Ok(written)
}
