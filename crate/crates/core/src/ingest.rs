//! Trip table loading, validation and the raw fuel-efficiency histogram.
//!
//! Row numbers reported anywhere in this module are 1-based data row numbers,
//! i.e. the header is not counted.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Samples;
use crate::error::{Error, Result};

/// One bus trip. `fuel_efficiency` is in L/100km.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub trip_id: String,
    pub driver_id: String,
    pub route_id: String,
    pub fuel_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripTable {
    pub records: Vec<TripRecord>,
    pub source_path: String,
}

impl TripTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn efficiencies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.fuel_efficiency).collect()
    }

    /// Fuel efficiencies as 1-D samples; fails on non-finite values.
    pub fn samples(&self) -> Result<Samples> {
        Samples::from_scalars(&self.efficiencies())
    }

    /// Rows not named in `report`, in file order.
    pub fn valid_subset(&self, report: &ValidationReport) -> TripTable {
        let bad: std::collections::HashSet<usize> =
            report.violations.iter().map(|v| v.row).collect();
        TripTable {
            records: self
                .records
                .iter()
                .enumerate()
                .filter(|(i, _)| !bad.contains(&(i + 1)))
                .map(|(_, r)| r.clone())
                .collect(),
            source_path: self.source_path.clone(),
        }
    }
}

/// Maps the canonical field names onto CSV header names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub trip_id: String,
    pub driver_id: String,
    pub route_id: String,
    pub fuel_efficiency: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            trip_id: "trip_id".into(),
            driver_id: "driver_id".into(),
            route_id: "route_id".into(),
            fuel_efficiency: "fuel_efficiency".into(),
        }
    }
}

/// Parses overrides of the form `fuel_efficiency=eff,trip_id=trip`.
impl FromStr for ColumnMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut map = ColumnMap::default();
        for pair in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("bad column mapping `{pair}`")))?;
            let slot = match key.trim() {
                "trip_id" => &mut map.trip_id,
                "driver_id" => &mut map.driver_id,
                "route_id" => &mut map.route_id,
                "fuel_efficiency" => &mut map.fuel_efficiency,
                other => {
                    return Err(Error::InvalidArgument(format!("unknown field `{other}`")));
                }
            };
            *slot = value.trim().to_string();
        }
        Ok(map)
    }
}

impl fmt::Display for ColumnMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "trip_id={},driver_id={},route_id={},fuel_efficiency={}",
            self.trip_id, self.driver_id, self.route_id, self.fuel_efficiency
        )
    }
}

#[derive(Debug, Clone)]
pub struct LoadedTrips {
    pub table: TripTable,
    pub rows_read: usize,
}

pub fn load_trips(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<LoadedTrips> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers().map_err(csv_err)?.clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let trip_col = position(&columns.trip_id)?;
    let driver_col = position(&columns.driver_id)?;
    let route_col = position(&columns.route_id)?;
    let eff_col = position(&columns.fuel_efficiency)?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let field = |c: usize| row.get(c).unwrap_or("").trim().to_string();
        let raw = field(eff_col);
        let fuel_efficiency = raw.parse::<f64>().map_err(|_| Error::ParseNumber {
            row: i + 1,
            column: columns.fuel_efficiency.clone(),
            value: raw.clone(),
        })?;
        records.push(TripRecord {
            trip_id: field(trip_col),
            driver_id: field(driver_col),
            route_id: field(route_col),
            fuel_efficiency,
        });
    }
    let rows_read = records.len();
    Ok(LoadedTrips {
        table: TripTable {
            records,
            source_path: path.display().to_string(),
        },
        rows_read,
    })
}

/// Writes the table with canonical column names.
pub fn write_trips(table: &TripTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let to_err = |source| Error::Csv {
        path: PathBuf::from(path),
        source,
    };
    writer
        .write_record(["trip_id", "driver_id", "route_id", "fuel_efficiency"])
        .map_err(to_err)?;
    for r in &table.records {
        writer
            .write_record([
                r.trip_id.as_str(),
                r.driver_id.as_str(),
                r.route_id.as_str(),
                &r.fuel_efficiency.to_string(),
            ])
            .map_err(to_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    NonFinite,
    NonPositive { value: f64 },
    DuplicateTripId { first_row: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub row: usize,
    pub trip_id: String,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows_checked: usize,
    pub valid_count: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_trips(table: &TripTable) -> ValidationReport {
    let mut violations = Vec::new();
    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    let mut bad_rows = 0;
    for (i, r) in table.records.iter().enumerate() {
        let row = i + 1;
        let before = violations.len();
        let mut flag = |kind| {
            violations.push(Violation {
                row,
                trip_id: r.trip_id.clone(),
                kind,
            })
        };
        if !r.fuel_efficiency.is_finite() {
            flag(ViolationKind::NonFinite);
        } else if r.fuel_efficiency <= 0.0 {
            flag(ViolationKind::NonPositive {
                value: r.fuel_efficiency,
            });
        }
        match first_seen.get(r.trip_id.as_str()) {
            Some(&first_row) => flag(ViolationKind::DuplicateTripId { first_row }),
            None => {
                first_seen.insert(&r.trip_id, row);
            }
        }
        if violations.len() > before {
            bad_rows += 1;
        }
    }
    ValidationReport {
        rows_checked: table.len(),
        valid_count: table.len() - bad_rows,
        violations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Equal-width histogram over `[min, max]`. Bins are half-open except the last,
/// which is closed. A zero-width range is widened to `[v - 0.5, v + 0.5]`.
pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::Empty("histogram of no values"));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("histogram values must be finite".into()));
    }
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut bin_edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    bin_edges.push(hi);

    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(Histogram { bin_edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn short_map() -> ColumnMap {
        "trip_id=trip,driver_id=driver,route_id=route,fuel_efficiency=eff"
            .parse()
            .unwrap()
    }

    #[test]
    fn loads_three_rows_with_mapped_columns() {
        let f = csv_file("trip,driver,route,eff\nT1,D1,R1,40.5\nT2,D1,R2,50\nT3,D2,R1,61.25\n");
        let loaded = load_trips(f.path(), &short_map()).unwrap();
        assert_eq!(loaded.rows_read, 3);
        assert_eq!(loaded.table.records[2].trip_id, "T3");
        assert_eq!(loaded.table.records[2].fuel_efficiency, 61.25);
    }

    #[test]
    fn bad_number_names_row_and_column() {
        let f = csv_file("trip,driver,route,eff\nT1,D1,R1,40.5\nT2,D1,R2,abc\n");
        let err = load_trips(f.path(), &short_map()).unwrap_err();
        match &err {
            Error::ParseNumber { row, column, .. } => {
                assert_eq!(*row, 2);
                assert_eq!(column, "eff");
            }
            other => panic!("unexpected {other:?}"),
        }
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("eff"));
    }

    #[test]
    fn missing_column_and_missing_file() {
        let f = csv_file("trip,driver,route\nT1,D1,R1\n");
        assert!(matches!(
            load_trips(f.path(), &short_map()),
            Err(Error::MissingColumn { .. })
        ));
        let err = load_trips("/definitely/not/here.csv", &ColumnMap::default()).unwrap_err();
        assert!(err.is_io());
    }

    #[test]
    fn column_map_parsing() {
        let m: ColumnMap = "fuel_efficiency = eff".parse().unwrap();
        assert_eq!(m.fuel_efficiency, "eff");
        assert_eq!(m.trip_id, "trip_id");
        assert!("bogus=x".parse::<ColumnMap>().is_err());
        assert!("noequals".parse::<ColumnMap>().is_err());
        assert_eq!(m.to_string().parse::<ColumnMap>().unwrap(), m);
    }

    fn rec(id: &str, eff: f64) -> TripRecord {
        TripRecord {
            trip_id: id.into(),
            driver_id: "D".into(),
            route_id: "R".into(),
            fuel_efficiency: eff,
        }
    }

    fn table(records: Vec<TripRecord>) -> TripTable {
        TripTable {
            records,
            source_path: "mem".into(),
        }
    }

    #[test]
    fn validation_flags() {
        let clean = table(vec![rec("T1", 40.0), rec("T2", 41.0)]);
        assert!(validate_trips(&clean).is_clean());

        let neg = table(vec![rec("T1", 40.0), rec("T2", -5.0)]);
        let report = validate_trips(&neg);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].row, 2);
        assert_eq!(report.violations[0].kind, ViolationKind::NonPositive { value: -5.0 });
        assert_eq!(report.valid_count, 1);

        let dup = table(vec![rec("T1", 40.0), rec("T1", 42.0), rec("T3", f64::NAN)]);
        let report = validate_trips(&dup);
        assert_eq!(
            report.violations[0].kind,
            ViolationKind::DuplicateTripId { first_row: 1 }
        );
        assert_eq!(report.violations[1].kind, ViolationKind::NonFinite);
        assert_eq!(report.valid_count, 1);

        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("duplicate_trip_id"));
    }

    #[test]
    fn validation_is_idempotent_on_valid_subset() {
        let t = table(vec![
            rec("T1", 40.0),
            rec("T1", 42.0),
            rec("T2", 0.0),
            rec("T3", 12.0),
        ]);
        let report = validate_trips(&t);
        let valid = t.valid_subset(&report);
        assert_eq!(valid.len(), report.valid_count);
        assert!(validate_trips(&valid).is_clean());
    }

    #[test]
    fn histogram_examples() {
        let h = histogram(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(h.bin_edges, vec![1.0, 2.5, 4.0]);
        assert_eq!(h.counts, vec![2, 2]);

        let h = histogram(&[5.0; 7], 3).unwrap();
        assert_eq!(h.bin_edges[0], 4.5);
        assert_eq!(h.bin_edges[3], 5.5);
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.total(), 7);

        assert!(histogram(&[], 3).is_err());
        assert!(histogram(&[1.0], 0).is_err());
    }

    proptest! {
        #[test]
        fn histogram_counts_sum_to_len(
            values in prop::collection::vec(-1e3f64..1e3, 1..300),
            bins in 1usize..=64,
        ) {
            let h = histogram(&values, bins).unwrap();
            prop_assert_eq!(h.total(), values.len());
            prop_assert_eq!(h.bin_edges.len(), bins + 1);
            prop_assert!(h.bin_edges.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn csv_round_trip(effs in prop::collection::vec(0.01f64..500.0, 1..40)) {
            let t = table(
                effs.iter().enumerate().map(|(i, &e)| TripRecord {
                    trip_id: format!("T{i}"),
                    driver_id: format!("D{}", i % 3),
                    route_id: format!("R{}", i % 5),
                    fuel_efficiency: e,
                }).collect(),
            );
            let f = tempfile::NamedTempFile::new().unwrap();
            write_trips(&t, f.path()).unwrap();
            let back = load_trips(f.path(), &ColumnMap::default()).unwrap();
            prop_assert_eq!(back.rows_read, t.len());
            prop_assert_eq!(back.table.records, t.records);
        }
    }
}
