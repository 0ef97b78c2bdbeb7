//! CSV and JSON export of the spectral and mask matrices.
//!
//! CSV files are row-major, comma separated, one matrix row per line, with
//! every value written to 12 significant digits. Vectors are written as a
//! single row. JSON documents hold the selected entries as nested arrays
//! under fixed key names, in a fixed order.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::sfmask::MaskComponents;
use crate::spectral;

pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::InvalidConfig(format!(
                "unknown format {other:?} (expected csv or json)"
            ))),
        }
    }
}

/// Quantities that can be exported for a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Quantity {
    Laplacian,
    Eigenvalues,
    Eigenvectors,
    Structure,
    Filter,
    Mask,
    EnergyLow,
    EnergyHigh,
}

impl Quantity {
    pub const ALL: [Quantity; 8] = [
        Quantity::Laplacian,
        Quantity::Eigenvalues,
        Quantity::Eigenvectors,
        Quantity::Structure,
        Quantity::Filter,
        Quantity::Mask,
        Quantity::EnergyLow,
        Quantity::EnergyHigh,
    ];

    /// Key in JSON documents and file stem for CSV.
    pub fn key(self) -> &'static str {
        match self {
            Quantity::Laplacian => "L",
            Quantity::Eigenvalues => "eigenvalues",
            Quantity::Eigenvectors => "eigenvectors",
            Quantity::Structure => "S",
            Quantity::Filter => "F",
            Quantity::Mask => "M",
            Quantity::EnergyLow => "e_low",
            Quantity::EnergyHigh => "e_high",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let alias = match s {
            "lambda" => "eigenvalues",
            "U" => "eigenvectors",
            other => other,
        };
        Quantity::ALL
            .into_iter()
            .find(|q| q.key() == alias)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown export quantity {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Vector(Array1<f64>),
    Matrix(Array2<f64>),
}

impl Entry {
    fn to_json(&self) -> Value {
        match self {
            Entry::Vector(v) => Value::from(v.to_vec()),
            Entry::Matrix(m) => Value::Array(
                m.rows()
                    .into_iter()
                    .map(|r| Value::from(r.to_vec()))
                    .collect(),
            ),
        }
    }

    fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut push_row = |row: &mut dyn Iterator<Item = &f64>| {
            let cells: Vec<String> = row.map(|&v| format_sig(v, SIGNIFICANT_DIGITS)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        };
        match self {
            Entry::Vector(v) => push_row(&mut v.iter()),
            Entry::Matrix(m) => {
                for r in m.rows() {
                    push_row(&mut r.iter());
                }
            }
        }
        out
    }
}

/// Named matrices and vectors selected for export, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExportBundle {
    entries: Vec<(Quantity, Entry)>,
}

impl ExportBundle {
    /// Collects `wanted` from the pipeline products of one graph. Energies are
    /// only available when the components were built in full mode.
    pub fn from_components(
        comps: &MaskComponents,
        laplacian: Option<&Array2<f64>>,
        wanted: &[Quantity],
    ) -> Result<Self> {
        let mut bundle = ExportBundle::default();
        let dec = &comps.decomposition;
        for &q in wanted {
            let entry = match q {
                Quantity::Laplacian => Entry::Matrix(match laplacian {
                    Some(l) => l.clone(),
                    None => dec.reconstruct(),
                }),
                Quantity::Eigenvalues => Entry::Vector(dec.eigenvalues().clone()),
                Quantity::Eigenvectors => Entry::Matrix(dec.eigenvectors().clone()),
                Quantity::Structure => Entry::Matrix(comps.matrices.structure.clone()),
                Quantity::Filter => Entry::Matrix(comps.matrices.filter.clone()),
                Quantity::Mask => Entry::Matrix(comps.matrices.mask.clone()),
                Quantity::EnergyLow | Quantity::EnergyHigh => {
                    let ep = comps.energy.as_ref().ok_or_else(|| {
                        Error::InvalidConfig(format!("{q} requires node features and full mode"))
                    })?;
                    Entry::Vector(if q == Quantity::EnergyLow {
                        ep.low.clone()
                    } else {
                        ep.high.clone()
                    })
                }
            };
            bundle.push(q, entry);
        }
        Ok(bundle)
    }

    pub fn push(&mut self, q: Quantity, e: Entry) {
        self.entries.retain(|(k, _)| *k != q);
        self.entries.push((q, e));
    }

    pub fn get(&self, q: Quantity) -> Option<&Entry> {
        self.entries.iter().find(|(k, _)| *k == q).map(|(_, e)| e)
    }

    pub fn entries(&self) -> &[(Quantity, Entry)] {
        &self.entries
    }

    pub fn to_json(&self) -> String {
        let mut map = Map::new();
        for (q, e) in &self.entries {
            map.insert(q.key().to_string(), e.to_json());
        }
        let mut s =
            serde_json::to_string_pretty(&Value::Object(map)).expect("finite values serialize");
        s.push('\n');
        s
    }

    /// CSV text per entry, keyed by file name.
    pub fn to_csv_files(&self) -> Vec<(String, String)> {
        self.entries
            .iter()
            .map(|(q, e)| (format!("{}.csv", q.key()), e.to_csv()))
            .collect()
    }

    /// Writes the bundle: for JSON `out` is the document path, for CSV it is
    /// a directory that receives one `<key>.csv` per entry.
    pub fn write(&self, out: &Path, format: ExportFormat) -> Result<()> {
        match format {
            ExportFormat::Json => {
                if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                fs::write(out, self.to_json()).map_err(|e| Error::io(out, e))
            }
            ExportFormat::Csv => {
                fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
                for (name, body) in self.to_csv_files() {
                    let path = out.join(name);
                    fs::write(&path, body).map_err(|e| Error::io(path, e))?;
                }
                Ok(())
            }
        }
    }
}

/// Formats `v` with `digits` significant digits, trailing zeros removed,
/// switching to exponent notation outside `[1e-5, 1e digits)`.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        return format!("{m}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Reads a CSV matrix written by [`ExportBundle::write`].
pub fn parse_csv_matrix(text: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(idx + 1, "ragged CSV row"));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| Error::parse(0, e.to_string()))
}

/// Largest entrywise difference between two equally shaped matrices.
pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> Option<f64> {
    (a.dim() == b.dim()).then(|| spectral::max_abs_diff(a, b))
}
