//! Activation files: headerless CSV or NPY matrices plus a labels file.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use gluekit::{build_ensemble, ManifoldEnsemble};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Context};
use crate::npy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Npy,
}

impl Format {
    /// Guesses from the file extension; anything but `.npy` is CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("npy") => Format::Npy,
            _ => Format::Csv,
        }
    }
}

fn data_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {msg}", path.display()))
}

pub fn parse_csv(text: &str, path: &Path) -> CliResult<Array2<f64>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for (j, field) in line.split(',').enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| data_err(path, format!("line {}, field {}: cannot parse {:?}", i + 1, j + 1, field.trim())))?;
            values.push(v);
        }
        let width = values.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(data_err(path, format!("line {} has {width} fields, expected {c}", i + 1)));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| data_err(path, "no rows"))?;
    Ok(Array2::from_shape_vec((rows, cols), values).expect("row widths checked"))
}

pub fn read_matrix(path: &Path, format: Format) -> CliResult<Array2<f64>> {
    let m = match format {
        Format::Csv => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            parse_csv(&text, path)?
        }
        Format::Npy => {
            let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
            npy::read_npy(std::io::BufReader::new(f)).map_err(|e| data_err(path, e))?
        }
    };
    if let Some(((r, c), _)) = m.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(data_err(path, format!("non-finite entry at row {r}, column {c}")));
    }
    Ok(m)
}

pub fn read_labels(path: &Path) -> CliResult<Vec<i64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.trim().parse().map_err(|_| data_err(path, format!("line {}: {:?} is not an integer", i + 1, l.trim()))))
        .collect()
}

/// Reads activations and labels and groups rows by label.
pub fn load_activations(path: &Path, format: Format, labels_path: &Path) -> CliResult<ManifoldEnsemble> {
    let x = read_matrix(path, format)?;
    let labels = read_labels(labels_path)?;
    if labels.len() != x.nrows() {
        return Err(data_err(
            labels_path,
            format!("{} labels for {} activation rows in {}", labels.len(), x.nrows(), path.display()),
        ));
    }
    let items = labels.into_iter().zip(x.rows()).map(|(l, r)| (l, r.to_vec())).collect();
    build_ensemble(items).ctx("grouping activations by label")
}

pub fn write_matrix(path: &Path, format: Format, m: &Array2<f64>) -> CliResult<()> {
    let io = |e| CliError::io(path, e);
    match format {
        Format::Csv => {
            let mut s = String::new();
            for r in m.rows() {
                let line: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
                s.push_str(&line.join(","));
                s.push('\n');
            }
            fs::write(path, s).map_err(io)
        }
        Format::Npy => {
            let f = fs::File::create(path).map_err(io)?;
            npy::write_npy(BufWriter::new(f), m).map_err(io)
        }
    }
}

pub fn write_labels(path: &Path, labels: &[i64]) -> CliResult<()> {
    let s: String = labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, s).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_parsing() {
        let p = Path::new("x.csv");
        let m = parse_csv("1,2.5\n-3e2, 4\n\n", p).unwrap();
        assert_eq!(m, ndarray::array![[1.0, 2.5], [-300.0, 4.0]]);
        assert!(matches!(parse_csv("1,2\n3\n", p), Err(CliError::Data(_))));
        assert!(matches!(parse_csv("1,x\n", p), Err(CliError::Data(_))));
        assert!(matches!(parse_csv("\n", p), Err(CliError::Data(_))));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(Format::from_path(Path::new("a/b.NPY")), Format::Npy);
        assert_eq!(Format::from_path(Path::new("a/b.txt")), Format::Csv);
    }
}
