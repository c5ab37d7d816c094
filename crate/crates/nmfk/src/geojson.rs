//! Point layer of signature assignments for mapping tools.

use std::collections::HashMap;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{CliError, Result};

/// One row of `assignments.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentRow {
    pub location_id: String,
    pub dominant_signature: usize,
    pub dominance: f64,
    pub weights: Vec<f64>,
}

pub fn read_assignments(path: &Path) -> Result<Vec<AssignmentRow>> {
    let ingest = |message: String| CliError::Ingest {
        path: path.into(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| ingest(e.to_string()))?.clone();
    let k = header.len().saturating_sub(3);
    let expected = ["location_id", "dominant_signature", "dominance"];
    let weights_ok = (0..k).all(|s| header.get(3 + s) == Some(format!("weight_{s}").as_str()));
    if k == 0 || header.iter().take(3).ne(expected) || !weights_ok {
        return Err(ingest("not an assignments table".into()));
    }
    let mut rows = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let row = index + 2;
        let record = record.map_err(|e| ingest(format!("row {row}: {e}")))?;
        let number = |column: usize| -> Result<f64> {
            record[column].parse::<f64>().map_err(|_| CliError::Cell {
                path: path.into(),
                row,
                column: column + 1,
                message: format!("cannot parse {:?} as a number", &record[column]),
            })
        };
        let dominant_signature = record[1].parse::<usize>().map_err(|_| CliError::Cell {
            path: path.into(),
            row,
            column: 2,
            message: format!("bad signature id {:?}", &record[1]),
        })?;
        rows.push(AssignmentRow {
            location_id: record[0].to_string(),
            dominant_signature,
            dominance: number(2)?,
            weights: (0..k).map(|s| number(3 + s)).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

/// A point feature collection plus the number of rows skipped for lacking
/// coordinates. Fails when no row can be placed.
pub fn feature_collection(
    rows: &[AssignmentRow],
    coordinates: &HashMap<String, (f64, f64)>,
) -> Result<(Value, usize)> {
    let mut features = Vec::new();
    let mut skipped = 0;
    for row in rows {
        let Some(&(lon, lat)) = coordinates.get(&row.location_id) else {
            skipped += 1;
            continue;
        };
        let mut properties = Map::new();
        properties.insert("location_id".into(), json!(row.location_id));
        properties.insert("dominant_signature".into(), json!(row.dominant_signature));
        properties.insert("dominance".into(), json!(row.dominance));
        for (s, w) in row.weights.iter().enumerate() {
            properties.insert(format!("weight_{s}"), json!(w));
        }
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Point", "coordinates": [lon, lat] },
            "properties": properties,
        }));
    }
    if features.is_empty() {
        return Err(CliError::Ingest {
            path: "assignments.csv".into(),
            message: "no location has coordinates".into(),
        });
    }
    Ok((
        json!({ "type": "FeatureCollection", "features": features }),
        skipped,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str) -> AssignmentRow {
        AssignmentRow {
            location_id: id.into(),
            dominant_signature: 1,
            dominance: 0.75,
            weights: vec![0.25, 0.75],
        }
    }

    #[test]
    fn located_rows_become_points() {
        let coords = HashMap::from([
            ("a".to_string(), (-113.0, 38.5)),
            ("c".to_string(), (-112.0, 39.0)),
        ]);
        let (fc, skipped) = feature_collection(&[row("a"), row("b"), row("c")], &coords).unwrap();
        assert_eq!(skipped, 1);
        let features = fc["features"].as_array().unwrap();
        assert_eq!(features.len(), 2);
        assert_eq!(
            features[0]["geometry"]["coordinates"],
            json!([-113.0, 38.5])
        );
        assert_eq!(features[0]["properties"]["weight_1"], json!(0.75));
    }

    #[test]
    fn no_coordinates_is_an_error() {
        assert!(feature_collection(&[row("a")], &HashMap::new()).is_err());
    }
}
