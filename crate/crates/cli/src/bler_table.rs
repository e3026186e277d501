//! BLER lookup tables in CSV form.
//!
//! One row per sample, header `mcs_id,modulation_order,code_rate,snr_db,bler`.
//! Rows of one MCS may appear in any order and interleave with other
//! entries; they are sorted by SNR on load. Row numbers in errors are file
//! line numbers, the header being line 1.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use wncs_core::link_adaptation::{BlerCurve, Catalogue, McsEntry};

pub const HEADER: [&str; 5] = ["mcs_id", "modulation_order", "code_rate", "snr_db", "bler"];

/// The shipped table; identical to [`wncs_core::link_adaptation::default_catalogue`].
pub const DEFAULT_TABLE_CSV: &str = include_str!("../data/default_bler.csv");

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("row {row}: {message}")]
    Row { row: u64, message: String },
    #[error("{0}")]
    Table(String),
}

fn row_error(row: u64, message: impl Into<String>) -> TableError {
    TableError::Row { row, message: message.into() }
}

struct Sample {
    row: u64,
    snr_db: f64,
    bler: f64,
}

struct Pending {
    first_row: u64,
    modulation_order: u32,
    code_rate: f64,
    samples: Vec<Sample>,
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize, row: u64) -> Result<T, TableError> {
    let raw = record.get(i).unwrap_or("").trim();
    raw.parse().map_err(|_| row_error(row, format!("{} {raw:?} is not a valid number", HEADER[i])))
}

pub fn read_bler_table<R: Read>(reader: R) -> Result<Catalogue, TableError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers().map_err(|e| TableError::Table(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(row_error(1, format!("header must be {}", HEADER.join(","))));
    }
    let mut entries: BTreeMap<u32, Pending> = BTreeMap::new();
    for record in csv.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line());
            row_error(row, e.to_string())
        })?;
        let row = record.position().map_or(0, |p| p.line());
        let id: u32 = field(&record, 0, row)?;
        let m: u32 = field(&record, 1, row)?;
        let r: f64 = field(&record, 2, row)?;
        let snr_db: f64 = field(&record, 3, row)?;
        let bler: f64 = field(&record, 4, row)?;
        if !snr_db.is_finite() {
            return Err(row_error(row, "snr_db must be finite"));
        }
        if !(0.0..=1.0).contains(&bler) {
            return Err(row_error(row, format!("bler {bler} outside [0, 1]")));
        }
        let pending = entries.entry(id).or_insert_with(|| Pending {
            first_row: row,
            modulation_order: m,
            code_rate: r,
            samples: Vec::new(),
        });
        if pending.modulation_order != m || pending.code_rate != r {
            return Err(row_error(
                row,
                format!(
                    "MCS {id} was declared with M = {}, R = {} on row {}",
                    pending.modulation_order, pending.code_rate, pending.first_row
                ),
            ));
        }
        pending.samples.push(Sample { row, snr_db, bler });
    }
    if entries.is_empty() {
        return Err(TableError::Table("table has no rows".into()));
    }

    let mut built = Vec::with_capacity(entries.len());
    for (id, mut p) in entries {
        p.samples.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db).then(a.row.cmp(&b.row)));
        for w in p.samples.windows(2) {
            let later = w[0].row.max(w[1].row);
            if w[0].snr_db == w[1].snr_db {
                return Err(row_error(later, format!("duplicate sample for MCS {id} at {} dB", w[0].snr_db)));
            }
            if w[1].bler > w[0].bler {
                return Err(row_error(
                    w[1].row,
                    format!(
                        "BLER of MCS {id} rises from {} at {} dB to {} at {} dB",
                        w[0].bler, w[0].snr_db, w[1].bler, w[1].snr_db
                    ),
                ));
            }
        }
        let points: Vec<(f64, f64)> = p.samples.iter().map(|s| (s.snr_db, s.bler)).collect();
        let curve = BlerCurve::new(&points).map_err(|e| row_error(p.first_row, e.to_string()))?;
        let entry = McsEntry::new(id, p.modulation_order, p.code_rate, curve)
            .map_err(|e| row_error(p.first_row, e.to_string()))?;
        built.push(entry);
    }
    Catalogue::new(built).map_err(|e| TableError::Table(e.to_string()))
}

pub fn load_bler_table(path: &Path) -> Result<Catalogue, TableError> {
    let file =
        std::fs::File::open(path).map_err(|source| TableError::Io { path: path.display().to_string(), source })?;
    read_bler_table(std::io::BufReader::new(file))
}

/// Writes `catalogue` in the table format, entries in catalogue order.
pub fn write_bler_table<W: Write>(catalogue: &Catalogue, writer: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(HEADER)?;
    for e in catalogue.entries() {
        for (snr, bler) in e.curve.points() {
            out.write_record([
                e.id.to_string(),
                e.modulation_order.to_string(),
                e.code_rate.to_string(),
                snr.to_string(),
                bler.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
