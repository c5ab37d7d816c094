//! Attribute-by-location datasets and their preprocessing: optional log
//! transform, per-attribute unit-range scaling, and exact inversion back to
//! original units.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{Mask, Matrix};

/// Skewness above which the automatic mode log-transforms an attribute.
pub const AUTO_LOG_SKEWNESS: f64 = 2.0;

/// Per-attribute forward map `x ↦ (g(x) − min) / (max − min)` where `g` is
/// either the identity or `log10(x − log_origin + log_shift)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributeTransform {
    pub log_applied: bool,
    /// Raw minimum subtracted before the log.
    pub log_origin: f64,
    pub log_shift: f64,
    /// Minimum of the (possibly logged) values before scaling.
    pub min: f64,
    /// Maximum of the (possibly logged) values before scaling.
    pub max: f64,
}

impl AttributeTransform {
    pub const IDENTITY: Self = Self {
        log_applied: false,
        log_origin: 0.0,
        log_shift: 0.0,
        min: 0.0,
        max: 1.0,
    };

    pub fn forward(&self, x: f64) -> f64 {
        let y = if self.log_applied {
            libm::log10(x - self.log_origin + self.log_shift)
        } else {
            x
        };
        (y - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, z: f64) -> f64 {
        let y = z * (self.max - self.min) + self.min;
        if self.log_applied {
            libm::pow(10.0, y) - self.log_shift + self.log_origin
        } else {
            y
        }
    }
}

/// Linear map of `values` onto `[0, 1]`. Returns the scaled values with
/// the min and max; a constant input is degenerate.
pub fn unit_range(values: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let (min, max) = min_max(values).ok_or_else(|| Error::Degenerate("no values".into()))?;
    if !(max > min) {
        return Err(Error::Degenerate(format!(
            "constant attribute (all values {min})"
        )));
    }
    let span = max - min;
    Ok((values.iter().map(|v| (v - min) / span).collect(), min, max))
}

/// `x ↦ log10(x − min + shift)` with `shift = max(1e-6, 1e-3 · (max − min))`.
/// Returns the transformed values with `(min, shift)`.
pub fn log_transform(values: &[f64]) -> (Vec<f64>, f64, f64) {
    let Some((min, max)) = min_max(values) else {
        return (Vec::new(), 0.0, 1e-6);
    };
    let shift = f64::max(1e-6, 1e-3 * (max - min));
    let out = values
        .iter()
        .map(|v| libm::log10(v - min + shift))
        .collect();
    (out, min, shift)
}

/// Fisher–Pearson sample skewness `m₃ / m₂^{3/2}`; zero for fewer than three
/// values or zero variance.
pub fn skewness(values: &[f64]) -> f64 {
    if values.len() < 3 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let m3 = values
        .iter()
        .map(|v| (v - mean) * (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    if m2 <= 0.0 {
        return 0.0;
    }
    m3 / libm::pow(m2, 1.5)
}

fn min_max(values: &[f64]) -> Option<(f64, f64)> {
    let first = *values.first()?;
    Some(
        values
            .iter()
            .fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LogMode {
    /// Log-transform attributes whose skewness exceeds [`AUTO_LOG_SKEWNESS`].
    #[default]
    Auto,
    None,
    /// Log-transform exactly the named attributes.
    Attributes(Vec<String>),
}

/// Attributes × locations table with missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub attribute_names: Vec<String>,
    pub location_ids: Vec<String>,
    /// `(longitude, latitude)` in degrees, per location.
    pub coordinates: Vec<Option<(f64, f64)>>,
    /// Row-major `n × m`; `None` marks a missing cell.
    cells: Vec<Option<f64>>,
    pub transforms: Vec<AttributeTransform>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropKind {
    Attribute,
    Location,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    NoObservations,
    Constant,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoObservations => "no observed values",
            DropReason::Constant => "constant over observed values",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dropped {
    pub kind: DropKind,
    pub name: String,
    pub reason: DropReason,
}

impl Dataset {
    pub fn new(
        attribute_names: Vec<String>,
        location_ids: Vec<String>,
        coordinates: Vec<Option<(f64, f64)>>,
        cells: Vec<Option<f64>>,
    ) -> Result<Self> {
        let (n, m) = (attribute_names.len(), location_ids.len());
        if cells.len() != n * m || coordinates.len() != m {
            return Err(Error::shape(
                "Dataset::new",
                format!(
                    "{n} attributes x {m} locations with {} cells and {} coordinates",
                    cells.len(),
                    coordinates.len()
                ),
            ));
        }
        if let Some(dup) = first_duplicate(&attribute_names) {
            return Err(Error::Parameter(format!(
                "duplicate attribute name {dup:?}"
            )));
        }
        if let Some(dup) = first_duplicate(&location_ids) {
            return Err(Error::Parameter(format!("duplicate location id {dup:?}")));
        }
        if cells.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite cell value".into()));
        }
        Ok(Self {
            attribute_names,
            location_ids,
            coordinates,
            cells,
            transforms: alloc::vec![AttributeTransform::IDENTITY; n],
        })
    }

    pub fn n_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn n_locations(&self) -> usize {
        self.location_ids.len()
    }

    #[inline]
    pub fn cell(&self, attribute: usize, location: usize) -> Option<f64> {
        self.cells[attribute * self.n_locations() + location]
    }

    /// Observed values of one attribute, in location order.
    pub fn observed(&self, attribute: usize) -> Vec<f64> {
        let m = self.n_locations();
        self.cells[attribute * m..(attribute + 1) * m]
            .iter()
            .flatten()
            .copied()
            .collect()
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    /// Keeps the listed attributes and locations, in the given order.
    fn select(&self, attributes: &[usize], locations: &[usize]) -> Self {
        let m = self.n_locations();
        let cells = attributes
            .iter()
            .flat_map(|&a| locations.iter().map(move |&l| self.cells[a * m + l]))
            .collect();
        Self {
            attribute_names: attributes
                .iter()
                .map(|&a| self.attribute_names[a].clone())
                .collect(),
            location_ids: locations
                .iter()
                .map(|&l| self.location_ids[l].clone())
                .collect(),
            coordinates: locations.iter().map(|&l| self.coordinates[l]).collect(),
            cells,
            transforms: attributes.iter().map(|&a| self.transforms[a]).collect(),
        }
    }

    /// Removes attributes and locations without any observed value. Dropping
    /// an attribute can empty a location and vice versa, so this repeats
    /// until stable.
    pub fn drop_unobserved(&self) -> (Self, Vec<Dropped>) {
        let mut dropped = Vec::new();
        let mut current = self.clone();
        loop {
            let (n, m) = (current.n_attributes(), current.n_locations());
            let keep_attr: Vec<usize> = (0..n)
                .filter(|&a| (0..m).any(|l| current.cell(a, l).is_some()))
                .collect();
            let keep_loc: Vec<usize> = (0..m)
                .filter(|&l| keep_attr.iter().any(|&a| current.cell(a, l).is_some()))
                .collect();
            if keep_attr.len() == n && keep_loc.len() == m {
                return (current, dropped);
            }
            dropped.extend((0..n).filter(|a| !keep_attr.contains(a)).map(|a| Dropped {
                kind: DropKind::Attribute,
                name: current.attribute_names[a].clone(),
                reason: DropReason::NoObservations,
            }));
            dropped.extend((0..m).filter(|l| !keep_loc.contains(l)).map(|l| Dropped {
                kind: DropKind::Location,
                name: current.location_ids[l].clone(),
                reason: DropReason::NoObservations,
            }));
            current = current.select(&keep_attr, &keep_loc);
        }
    }
}

fn first_duplicate(names: &[String]) -> Option<&str> {
    let mut seen = BTreeSet::new();
    names
        .iter()
        .find(|n| !seen.insert(n.as_str()))
        .map(String::as_str)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeReport {
    pub name: String,
    pub missing_count: usize,
    /// Raw observed minimum.
    pub min: f64,
    /// Raw observed maximum.
    pub max: f64,
    pub log_applied: bool,
    /// Skewness of the raw observed values.
    pub skewness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationReport {
    pub id: String,
    pub missing_count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PreprocessReport {
    pub attributes: Vec<AttributeReport>,
    pub locations: Vec<LocationReport>,
    pub dropped: Vec<Dropped>,
}

impl PreprocessReport {
    pub fn total_missing(&self) -> usize {
        self.attributes.iter().map(|a| a.missing_count).sum()
    }
}

/// Log-transforms (per `mode`) and unit-range scales every attribute of a
/// raw dataset, dropping constant attributes and anything left without
/// observations. The returned dataset holds scaled values in `[0, 1]` and
/// the transforms needed to invert them.
pub fn preprocess(raw: &Dataset, mode: &LogMode) -> Result<(Dataset, PreprocessReport)> {
    if let LogMode::Attributes(names) = mode {
        if let Some(unknown) = names.iter().find(|n| !raw.attribute_names.contains(n)) {
            return Err(Error::Parameter(format!(
                "log-transform names unknown attribute {unknown:?}"
            )));
        }
    }
    let (ds, mut dropped) = raw.drop_unobserved();
    let m = ds.n_locations();

    let mut cells = ds.cells.clone();
    let mut transforms = Vec::with_capacity(ds.n_attributes());
    let mut summaries = Vec::with_capacity(ds.n_attributes());
    let mut keep = Vec::new();
    for a in 0..ds.n_attributes() {
        let observed = ds.observed(a);
        let skew = skewness(&observed);
        let use_log = match mode {
            LogMode::Auto => skew > AUTO_LOG_SKEWNESS,
            LogMode::None => false,
            LogMode::Attributes(names) => names.contains(&ds.attribute_names[a]),
        };
        let (transformed, origin, shift) = if use_log {
            log_transform(&observed)
        } else {
            (observed.clone(), 0.0, 0.0)
        };
        let (scaled, min, max) = match unit_range(&transformed) {
            Ok(r) => r,
            Err(Error::Degenerate(_)) => {
                dropped.push(Dropped {
                    kind: DropKind::Attribute,
                    name: ds.attribute_names[a].clone(),
                    reason: DropReason::Constant,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut values = scaled.into_iter();
        for cell in cells[a * m..(a + 1) * m].iter_mut().flatten() {
            *cell = values.next().expect("one scaled value per observed cell");
        }
        let (raw_min, raw_max) = min_max(&observed).expect("attribute has observations");
        transforms.push(AttributeTransform {
            log_applied: use_log,
            log_origin: origin,
            log_shift: shift,
            min,
            max,
        });
        summaries.push((raw_min, raw_max, use_log, skew));
        keep.push(a);
    }

    let scaled = Dataset {
        cells,
        transforms: ds.transforms.clone(),
        ..ds.clone()
    };
    let locations: Vec<usize> = (0..m).collect();
    let mut scaled = scaled.select(&keep, &locations);
    scaled.transforms = transforms;
    let (scaled, more) = scaled.drop_unobserved();
    // Summaries follow `keep`; a second drop can only remove locations, since
    // every kept attribute still has its observations.
    dropped.extend(more);

    if scaled.n_attributes() == 0 || scaled.n_locations() == 0 {
        return Err(Error::Degenerate(
            "no usable attributes or locations remain".into(),
        ));
    }

    let attributes = (0..scaled.n_attributes())
        .map(|a| {
            let (min, max, log_applied, skewness) = summaries[a];
            AttributeReport {
                name: scaled.attribute_names[a].clone(),
                missing_count: (0..scaled.n_locations())
                    .filter(|&l| scaled.cell(a, l).is_none())
                    .count(),
                min,
                max,
                log_applied,
                skewness,
            }
        })
        .collect();
    let locations = (0..scaled.n_locations())
        .map(|l| LocationReport {
            id: scaled.location_ids[l].clone(),
            missing_count: (0..scaled.n_attributes())
                .filter(|&a| scaled.cell(a, l).is_none())
                .count(),
        })
        .collect();
    Ok((
        scaled,
        PreprocessReport {
            attributes,
            locations,
            dropped,
        },
    ))
}

/// Dense matrix and observation mask of a dataset; missing cells become 0.
pub fn to_matrix(ds: &Dataset) -> Result<(Matrix, Mask)> {
    let (n, m) = (ds.n_attributes(), ds.n_locations());
    if n == 0 || m == 0 {
        return Err(Error::Degenerate("empty dataset".into()));
    }
    let values = ds.cells.iter().map(|c| c.unwrap_or(0.0)).collect();
    let observed = ds.cells.iter().map(Option::is_some).collect();
    Ok((Matrix::new(n, m, values)?, Mask::new(n, m, observed)?))
}

/// Maps each row `i` of `values` (attribute-indexed, e.g. W) back to the
/// original units of attribute `i`.
pub fn invert_transforms(values: &Matrix, transforms: &[AttributeTransform]) -> Result<Matrix> {
    if values.rows() != transforms.len() {
        return Err(Error::shape(
            "invert_transforms",
            format!("{} rows for {} transforms", values.rows(), transforms.len()),
        ));
    }
    let out = Matrix::from_fn(values.rows(), values.cols(), |i, j| {
        transforms[i].invert(values.get(i, j))
    });
    if !out.all_finite() {
        return Err(Error::Degenerate("inverted values overflow".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn unit_range_examples() {
        assert_eq!(
            unit_range(&[0.0, 5.0, 10.0]).unwrap().0,
            vec![0.0, 0.5, 1.0]
        );
        assert_eq!(unit_range(&[0.0, 0.3, 1.0]).unwrap().0, vec![0.0, 0.3, 1.0]);
        assert_eq!(
            unit_range(&[-2.0, 0.0, 2.0]).unwrap().0,
            vec![0.0, 0.5, 1.0]
        );
        assert!(matches!(unit_range(&[4.0, 4.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn log_of_decades_is_evenly_spaced() {
        // min = 1, shift = max(1e-6, 0.099) = 0.099
        let (out, origin, shift) = log_transform(&[1.0, 10.0, 100.0]);
        assert_eq!(origin, 1.0);
        assert!((shift - 0.099).abs() < 1e-15);
        let expect = [libm::log10(0.099), libm::log10(9.099), libm::log10(99.099)];
        for (a, b) in out.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        // With a zero shift the three values would be exact decades; the
        // shift keeps zeros in range instead.
        let (out, _, _) = log_transform(&[0.0, 5.0]);
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn decades_round_trip_through_log_and_scale() {
        let raw = [1.0, 10.0, 100.0];
        let (logged, origin, shift) = log_transform(&raw);
        let (_, min, max) = unit_range(&logged).unwrap();
        let t = AttributeTransform {
            log_applied: true,
            log_origin: origin,
            log_shift: shift,
            min,
            max,
        };
        for x in raw {
            assert!((t.invert(t.forward(x)) - x).abs() <= 1e-10 * x);
        }
    }

    #[test]
    fn skewness_examples() {
        assert_eq!(skewness(&[1.0, 2.0, 3.0]), 0.0);
        assert!(skewness(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0]) > 2.0);
        assert_eq!(skewness(&[5.0, 5.0, 5.0]), 0.0);
    }

    #[test]
    fn auto_mode_skips_symmetric_attributes() {
        let ds = Dataset::new(
            names("a", 2),
            names("l", 10),
            vec![None; 10],
            (0..10)
                .map(|i| Some(i as f64))
                .chain((0..10).map(|i| {
                    Some(if i == 9 {
                        1000.0
                    } else {
                        1.0 + i as f64 * 0.01
                    })
                }))
                .collect(),
        )
        .unwrap();
        let (_, report) = preprocess(&ds, &LogMode::Auto).unwrap();
        assert!(!report.attributes[0].log_applied);
        assert!(report.attributes[1].log_applied);
        assert!(report.attributes[1].skewness > AUTO_LOG_SKEWNESS);
    }

    #[test]
    fn preprocess_scales_into_unit_interval_and_drops_constants() {
        let ds = Dataset::new(
            vec!["t".into(), "flat".into(), "q".into()],
            names("l", 3),
            vec![None; 3],
            vec![
                Some(-2.0),
                Some(0.0),
                Some(2.0),
                Some(7.0),
                Some(7.0),
                None,
                Some(3.0),
                None,
                Some(5.0),
            ],
        )
        .unwrap();
        let (scaled, report) = preprocess(&ds, &LogMode::None).unwrap();
        assert_eq!(
            scaled.attribute_names,
            vec!["t".to_string(), "q".to_string()]
        );
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.dropped[0].reason, DropReason::Constant);
        let (x, mask) = to_matrix(&scaled).unwrap();
        assert_eq!(x.row(0), &[0.0, 0.5, 1.0]);
        assert_eq!(x.row(1), &[0.0, 0.0, 1.0]);
        assert_eq!(mask.missing_count(), 1);
        assert_eq!(report.total_missing(), 1);
        assert_eq!(report.locations[1].missing_count, 1);
    }

    #[test]
    fn fully_missing_attribute_is_dropped() {
        let ds = Dataset::new(
            names("a", 2),
            names("l", 3),
            vec![None; 3],
            vec![Some(1.0), Some(2.0), Some(3.0), None, None, None],
        )
        .unwrap();
        let (kept, dropped) = ds.drop_unobserved();
        assert_eq!(kept.n_attributes(), 1);
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].kind, DropKind::Attribute);
        assert_eq!(dropped[0].name, "a1");
    }

    #[test]
    fn emptied_location_is_dropped() {
        // l1 is only observed in the constant attribute.
        let ds = Dataset::new(
            names("a", 2),
            names("l", 3),
            vec![None; 3],
            vec![Some(1.0), None, Some(3.0), Some(4.0), Some(4.0), Some(4.0)],
        )
        .unwrap();
        let (scaled, report) = preprocess(&ds, &LogMode::None).unwrap();
        assert_eq!(
            scaled.location_ids,
            vec!["l0".to_string(), "l2".to_string()]
        );
        assert!(report
            .dropped
            .iter()
            .any(|d| d.kind == DropKind::Location && d.name == "l1"));
    }

    #[test]
    fn duplicates_are_rejected() {
        assert!(Dataset::new(
            vec!["a".into(), "a".into()],
            names("l", 1),
            vec![None],
            vec![Some(1.0), Some(2.0)]
        )
        .is_err());
        assert!(Dataset::new(
            names("a", 1),
            vec!["x".into(), "x".into()],
            vec![None; 2],
            vec![Some(1.0), Some(2.0)]
        )
        .is_err());
    }

    #[test]
    fn unknown_log_attribute_is_rejected() {
        let ds = Dataset::new(
            names("a", 1),
            names("l", 2),
            vec![None; 2],
            vec![Some(1.0), Some(2.0)],
        )
        .unwrap();
        assert!(preprocess(&ds, &LogMode::Attributes(vec!["zz".into()])).is_err());
    }

    #[test]
    fn identity_inversion() {
        let w = Matrix::from_rows(&[[0.25, 0.5]]);
        assert_eq!(
            invert_transforms(&w, &[AttributeTransform::IDENTITY]).unwrap(),
            w
        );
    }

    fn attribute() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(
            prop_oneof![Just(0.0), -1e3f64..1e3, 0.0f64..1e-3, 1.0f64..1e6],
            3..40,
        )
        .prop_filter("non-constant", |v| v.iter().any(|&x| x != v[0]))
    }

    proptest! {
        #[test]
        fn transforms_round_trip(values in attribute(), log in any::<bool>()) {
            let ds = Dataset::new(
                names("a", 1),
                names("l", values.len()),
                vec![None; values.len()],
                values.iter().map(|&v| Some(v)).collect(),
            ).unwrap();
            let mode = if log { LogMode::Attributes(vec!["a0".into()]) } else { LogMode::None };
            let (scaled, _) = preprocess(&ds, &mode).unwrap();
            let (x, _) = to_matrix(&scaled).unwrap();
            prop_assert!(x.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
            let back = invert_transforms(&x, &scaled.transforms).unwrap();
            let range = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
            for (orig, got) in values.iter().zip(back.as_slice()) {
                prop_assert!((orig - got).abs() <= 1e-10 * orig.abs().max(range), "{} vs {}", orig, got);
            }
        }
    }
}
