//! Delimited-text ingest: one row per location, one column per attribute.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use nmfk_core::{Dataset, Dropped};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    pub delimiter: u8,
    /// Extra cell text treated as missing, besides empty cells and `NaN`.
    pub missing: Option<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            missing: None,
        }
    }
}

/// A loaded table with attributes or locations lacking any observation
/// already removed.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub dataset: Dataset,
    pub dropped: Vec<Dropped>,
}

pub fn load_table(path: &Path, opts: &LoadOptions) -> Result<Table> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => CliError::Ingest {
                path: path.into(),
                message: "file is not valid UTF-8".into(),
            },
            _ => CliError::io(path, e),
        })?;
    parse_table(&text, path, opts)
}

/// Parses table text; `path` is only used in error messages.
pub fn parse_table(text: &str, path: &Path, opts: &LoadOptions) -> Result<Table> {
    let ingest = |message: String| CliError::Ingest {
        path: path.into(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header = reader.headers().map_err(|e| ingest(e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(ingest(
            "header needs a location id column and at least one attribute".into(),
        ));
    }
    let mut lon = None;
    let mut lat = None;
    let mut attributes = Vec::new();
    for (col, name) in header.iter().enumerate().skip(1) {
        match name.to_ascii_lowercase().as_str() {
            "lon" if lon.is_none() => lon = Some(col),
            "lat" if lat.is_none() => lat = Some(col),
            "lon" | "lat" => return Err(ingest(format!("duplicate {name:?} column"))),
            "" => return Err(ingest(format!("column {} has an empty name", col + 1))),
            _ => attributes.push((col, name.to_string())),
        }
    }
    if lon.is_some() != lat.is_some() {
        return Err(ingest("lon and lat columns must appear together".into()));
    }
    if attributes.is_empty() {
        return Err(ingest("no attribute columns".into()));
    }

    let missing = |cell: &str| {
        cell.is_empty() || cell.eq_ignore_ascii_case("nan") || opts.missing.as_deref() == Some(cell)
    };
    let mut ids = Vec::new();
    let mut coordinates = Vec::new();
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (index, record) in reader.records().enumerate() {
        // Line 1 is the header.
        let row = index + 2;
        let record = record.map_err(|e| ingest(format!("row {row}: {e}")))?;
        let cell_error = |column: usize, message: String| CliError::Cell {
            path: path.into(),
            row,
            column: column + 1,
            message,
        };
        let number = |column: usize| -> Result<Option<f64>> {
            let text = &record[column];
            if missing(text) {
                return Ok(None);
            }
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                Ok(_) => Err(cell_error(column, format!("non-finite value {text:?}"))),
                Err(_) => Err(cell_error(
                    column,
                    format!("cannot parse {text:?} as a number"),
                )),
            }
        };

        let id = record[0].to_string();
        if id.is_empty() {
            return Err(cell_error(0, "empty location id".into()));
        }
        ids.push(id);
        coordinates.push(match (lon, lat) {
            (Some(lo), Some(la)) => match (number(lo)?, number(la)?) {
                (Some(x), Some(y)) => {
                    if !(-180.0..=180.0).contains(&x) {
                        return Err(cell_error(lo, format!("longitude {x} outside [-180, 180]")));
                    }
                    if !(-90.0..=90.0).contains(&y) {
                        return Err(cell_error(la, format!("latitude {y} outside [-90, 90]")));
                    }
                    Some((x, y))
                }
                _ => None,
            },
            _ => None,
        });
        rows.push(
            attributes
                .iter()
                .map(|&(col, _)| number(col))
                .collect::<Result<_>>()?,
        );
    }
    if ids.is_empty() {
        return Err(ingest("no data rows".into()));
    }

    let (n, m) = (attributes.len(), ids.len());
    let mut cells = vec![None; n * m];
    for (l, row) in rows.iter().enumerate() {
        for (a, &v) in row.iter().enumerate() {
            cells[a * m + l] = v;
        }
    }
    let names = attributes.into_iter().map(|(_, name)| name).collect();
    let raw = Dataset::new(names, ids, coordinates, cells).map_err(|e| ingest(e.to_string()))?;
    let (dataset, dropped) = raw.drop_unobserved();
    if dataset.n_attributes() == 0 || dataset.n_locations() == 0 {
        return Err(ingest("no observed values".into()));
    }
    Ok(Table { dataset, dropped })
}
