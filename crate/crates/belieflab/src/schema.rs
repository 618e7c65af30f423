//! The canonical response CSV.
//!
//! One row per elicited update branch. Percentages are written with Rust's
//! shortest round-trip formatting, so integers print without a decimal
//! point and simulated reals read back bit-for-bit.

use std::io::{Read, Write};

use belieflab_core::{RecordError, ResponseRecord};
use thiserror::Error;

pub const COLUMNS: [&str; 12] = [
    "subject_id",
    "treatment",
    "task_id",
    "actual_prior",
    "reported_prior",
    "prior_confidence",
    "signal_accuracy",
    "signal",
    "reported_update",
    "update_confidence",
    "is_practice",
    "is_comprehension",
];

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("header must be {expected:?}, found {found:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
    /// `row` counts data rows from 1; the header is not a row.
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("row {row}: {source}")]
    Invalid { row: usize, source: RecordError },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fields(r: &ResponseRecord) -> [String; 12] {
    [
        r.subject_id.clone(),
        r.treatment.to_string(),
        r.task_id.to_string(),
        r.actual_prior.to_string(),
        r.reported_prior.to_string(),
        r.prior_confidence.to_string(),
        r.signal_accuracy.to_string(),
        r.signal.to_string(),
        r.reported_update.to_string(),
        r.update_confidence.to_string(),
        r.is_practice.to_string(),
        r.is_comprehension.to_string(),
    ]
}

pub fn write_records<W: Write>(out: W, records: &[ResponseRecord]) -> Result<(), SchemaError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record(fields(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(records: &[ResponseRecord]) -> String {
    let mut buf = Vec::new();
    write_records(&mut buf, records).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

/// Reads and validates every row. The header must list [`COLUMNS`] in
/// order.
pub fn read_records<R: Read>(input: R) -> Result<Vec<ResponseRecord>, SchemaError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != COLUMNS {
        return Err(SchemaError::Header { expected: COLUMNS.iter().map(|c| c.to_string()).collect(), found: header });
    }
    let mut records = Vec::new();
    let headers = reader.headers()?.clone();
    for (i, row) in reader.records().enumerate() {
        let row_number = i + 1;
        let raw = row.map_err(|e| SchemaError::Row { row: row_number, message: describe(&e, None) })?;
        let record: ResponseRecord = raw
            .deserialize(Some(&headers))
            .map_err(|e| SchemaError::Row { row: row_number, message: describe(&e, Some(&raw)) })?;
        record.validate().map_err(|source| SchemaError::Invalid { row: row_number, source })?;
        records.push(record);
    }
    Ok(records)
}

fn describe(e: &csv::Error, raw: Option<&csv::StringRecord>) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => {
            let column = err.field().and_then(|f| COLUMNS.get(f as usize).copied()).or_else(|| raw.and_then(bad_column));
            match column {
                Some(c) => format!("column {c}: {}", err.kind()),
                None => err.kind().to_string(),
            }
        }
        csv::ErrorKind::UnequalLengths { len, expected_len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        _ => e.to_string(),
    }
}

/// The first column whose text does not parse as its type. The csv crate
/// does not report the field for enum errors.
fn bad_column(raw: &csv::StringRecord) -> Option<&'static str> {
    COLUMNS.iter().zip(raw.iter()).find_map(|(&column, value)| {
        let ok = match column {
            "subject_id" => true,
            "treatment" => matches!(value, "low" | "high"),
            "signal" => matches!(value, "positive" | "negative"),
            "task_id" | "actual_prior" | "signal_accuracy" => value.parse::<u64>().is_ok(),
            "is_practice" | "is_comprehension" => value.parse::<bool>().is_ok(),
            _ => value.parse::<f64>().is_ok(),
        };
        (!ok).then_some(column)
    })
}
