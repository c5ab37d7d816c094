//! Output artifacts. Every number is printed with 12 significant digits so
//! identical runs produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use nmfk_core::{invert_transforms, ConsensusSignatures, Matrix};

use crate::error::{CliError, Result};
use crate::pipeline::Analysis;

/// `%.12g`: 12 significant digits, trailing zeros trimmed, exponent form
/// outside `[1e-4, 1e12)`.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exponent) = sci.split_once('e').expect("exponent form");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    if !(-4..12).contains(&exponent) {
        let sign = if exponent < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exponent.abs())
    } else {
        trim_zeros(&format!("{v:.*}", (11 - exponent) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rescales a consensus pair so every row of H peaks at 1, moving the scale
/// into the matching column of W. W columns then read as the (scaled)
/// attribute profile of a location fully expressing that signature.
pub fn unit_peak_factors(c: &ConsensusSignatures) -> (Matrix, Matrix) {
    let k = c.h.rows();
    let peaks: Vec<f64> = (0..k)
        .map(|s| c.h.row(s).iter().fold(0.0f64, |a, &b| a.max(b)))
        .map(|p| if p > 0.0 { p } else { 1.0 })
        .collect();
    let w = Matrix::from_fn(c.w.rows(), k, |i, s| c.w.get(i, s) * peaks[s]);
    let h = Matrix::from_fn(k, c.h.cols(), |s, j| c.h.get(s, j) / peaks[s]);
    (w, h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationAssignment {
    pub location_id: String,
    /// Non-negative, summing to 1.
    pub weights: Vec<f64>,
    pub dominant_signature: usize,
    pub dominance: f64,
}

/// Normalizes each column of `h` (k × locations) to sum 1; an all-zero
/// column becomes uniform. The dominant signature is the largest weight,
/// ties going to the lowest id.
pub fn assignments(h: &Matrix, location_ids: &[String]) -> Vec<LocationAssignment> {
    let k = h.rows();
    location_ids
        .iter()
        .enumerate()
        .map(|(j, id)| {
            let column = h.column(j);
            let total: f64 = column.iter().sum();
            let weights: Vec<f64> = if total > 0.0 {
                column.iter().map(|v| v / total).collect()
            } else {
                vec![1.0 / k as f64; k]
            };
            let mut dominant = 0;
            for (s, &w) in weights.iter().enumerate() {
                if w > weights[dominant] {
                    dominant = s;
                }
            }
            LocationAssignment {
                location_id: id.clone(),
                dominance: weights[dominant],
                dominant_signature: dominant,
                weights,
            }
        })
        .collect()
}

/// Attribute indices of signature `s`, by descending weight, ties by name.
pub fn ranked_attributes(w: &Matrix, names: &[String], s: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.rows()).collect();
    order.sort_by(|&a, &b| {
        w.get(b, s)
            .total_cmp(&w.get(a, s))
            .then_with(|| names[a].cmp(&names[b]))
    });
    order
}

fn csv_text(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Config(format!("csv encoding: {e}"));
    writer.write_record(header).map_err(io)?;
    for row in rows {
        writer.write_record(row).map_err(io)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Config(format!("csv encoding: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn write(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    written.push(path);
    Ok(())
}

fn signature_names(k: usize, suffix: &str) -> Vec<String> {
    (0..k).map(|s| format!("sig{s}{suffix}")).collect()
}

/// Writes every artifact into `dir`, returning the paths in write order.
pub fn write_reports(dir: &Path, analysis: &Analysis) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    let ds = &analysis.prepared.dataset;
    let k = analysis.chosen;
    let g = format_number;

    let header: Vec<String> = [
        "k",
        "best_loss",
        "normalized_loss",
        "mean_silhouette",
        "min_cluster_silhouette",
        "dropped_restarts",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = analysis
        .outcomes
        .iter()
        .map(|o| {
            let d = &o.diagnostics;
            vec![
                d.k.to_string(),
                g(d.best_loss),
                g(d.normalized_loss),
                g(d.mean_silhouette),
                g(d.min_cluster_silhouette),
                d.dropped_restarts.to_string(),
            ]
        })
        .collect();
    write(
        dir,
        "diagnostics.csv",
        &csv_text(&header, &rows)?,
        &mut written,
    )?;

    if let Some((selection, rule)) = &analysis.selection {
        let mut text = format!(
            "k = {}\nconfident = {}\nsilhouette_threshold = {}\nk_min = {}\nk_max = {}\n",
            selection.k,
            selection.confident,
            g(rule.silhouette_threshold),
            rule.k_min,
            rule.k_max
        );
        text.push_str(
            "rule = largest k whose lowest cluster silhouette reaches the threshold and whose normalized loss does not rise; otherwise highest mean silhouette\n",
        );
        for (k, err) in &analysis.failures {
            text.push_str(&format!("failed_k = {k}: {err}\n"));
        }
        write(dir, "selection.txt", &text, &mut written)?;
    }

    let (w, h) = unit_peak_factors(&analysis.consensus);
    let original = invert_transforms(&w, &ds.transforms).map_err(CliError::Numerical)?;
    let mut header = vec!["attribute".to_string()];
    header.extend(signature_names(k, ""));
    header.extend(signature_names(k, "_original"));
    let rows: Vec<Vec<String>> = (0..w.rows())
        .map(|i| {
            let mut row = vec![ds.attribute_names[i].clone()];
            row.extend(w.row(i).iter().map(|&v| g(v)));
            row.extend(original.row(i).iter().map(|&v| g(v)));
            row
        })
        .collect();
    write(dir, "W.csv", &csv_text(&header, &rows)?, &mut written)?;

    let mut header = vec!["signature".to_string()];
    header.extend(ds.location_ids.iter().cloned());
    let rows: Vec<Vec<String>> = (0..k)
        .map(|s| {
            let mut row = vec![s.to_string()];
            row.extend(h.row(s).iter().map(|&v| g(v)));
            row
        })
        .collect();
    write(dir, "H.csv", &csv_text(&header, &rows)?, &mut written)?;

    let mut header: Vec<String> = ["location_id", "dominant_signature", "dominance"]
        .map(String::from)
        .to_vec();
    header.extend((0..k).map(|s| format!("weight_{s}")));
    let rows: Vec<Vec<String>> = assignments(&h, &ds.location_ids)
        .into_iter()
        .map(|a| {
            let mut row = vec![
                a.location_id,
                a.dominant_signature.to_string(),
                g(a.dominance),
            ];
            row.extend(a.weights.iter().map(|&v| g(v)));
            row
        })
        .collect();
    write(
        dir,
        "assignments.csv",
        &csv_text(&header, &rows)?,
        &mut written,
    )?;

    let header: Vec<String> = [
        "signature",
        "rank",
        "attribute",
        "weight",
        "weight_original",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    for s in 0..k {
        for (rank, i) in ranked_attributes(&w, &ds.attribute_names, s)
            .into_iter()
            .enumerate()
        {
            rows.push(vec![
                s.to_string(),
                (rank + 1).to_string(),
                ds.attribute_names[i].clone(),
                g(w.get(i, s)),
                g(original.get(i, s)),
            ]);
        }
    }
    write(
        dir,
        "attributes_ranked.csv",
        &csv_text(&header, &rows)?,
        &mut written,
    )?;

    let report = &analysis.prepared.report;
    let header: Vec<String> = [
        "attribute",
        "missing_count",
        "min",
        "max",
        "log_applied",
        "skewness",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = report
        .attributes
        .iter()
        .map(|a| {
            vec![
                a.name.clone(),
                a.missing_count.to_string(),
                g(a.min),
                g(a.max),
                a.log_applied.to_string(),
                g(a.skewness),
            ]
        })
        .collect();
    write(
        dir,
        "preprocess.csv",
        &csv_text(&header, &rows)?,
        &mut written,
    )?;

    let header: Vec<String> = ["kind", "name", "reason"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = report
        .dropped
        .iter()
        .map(|d| {
            let kind = match d.kind {
                nmfk_core::DropKind::Attribute => "attribute",
                nmfk_core::DropKind::Location => "location",
            };
            vec![
                kind.to_string(),
                d.name.clone(),
                d.reason.as_str().to_string(),
            ]
        })
        .collect();
    write(dir, "dropped.csv", &csv_text(&header, &rows)?, &mut written)?;

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(0.1), "0.1");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(-2.5e-7), "-2.5e-07");
        assert_eq!(format_number(123456789012345.0), "1.23456789012e+14");
        assert_eq!(format_number(999999999999.9), "1e+12");
        assert_eq!(format_number(0.0001), "0.0001");
        assert_eq!(format_number(f64::NAN), "NaN");
    }

    proptest! {
        #[test]
        fn formatting_keeps_twelve_digits(v in -1e15f64..1e15) {
            let back: f64 = format_number(v).parse().unwrap();
            prop_assert!((back - v).abs() <= 1e-11 * v.abs().max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn weights_sum_to_one_and_ties_go_low() {
        let h = Matrix::from_rows(&[[0.2, 0.0, 0.5], [0.2, 0.0, 1.0]]);
        let ids: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let a = assignments(&h, &ids);
        assert_eq!(a[0].dominant_signature, 0);
        assert_eq!(a[0].dominance, 0.5);
        assert_eq!(a[1].weights, vec![0.5, 0.5]);
        assert_eq!(a[2].dominant_signature, 1);
        for row in &a {
            assert!((row.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn ranking_breaks_ties_by_name() {
        let w = Matrix::from_rows(&[[0.5], [0.9], [0.5]]);
        let names: Vec<String> = ["zinc", "boron", "arsenic"].map(String::from).to_vec();
        assert_eq!(ranked_attributes(&w, &names, 0), vec![1, 2, 0]);
    }

    #[test]
    fn unit_peaks_preserve_product() {
        let c = ConsensusSignatures {
            w: Matrix::from_rows(&[[1.0, 2.0], [3.0, 0.5]]),
            h: Matrix::from_rows(&[[0.5, 0.25, 0.1], [4.0, 0.0, 2.0]]),
            within_cluster_spread: vec![0.0, 0.0],
            side: nmfk_core::FactorSide::W,
        };
        let (w, h) = unit_peak_factors(&c);
        assert_eq!(h.row(0).iter().cloned().fold(0.0, f64::max), 1.0);
        let before = c.w.matmul(&c.h).unwrap();
        let after = w.matmul(&h).unwrap();
        for (a, b) in before.as_slice().iter().zip(after.as_slice()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
