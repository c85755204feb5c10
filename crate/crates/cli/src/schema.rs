//! CSV schemas for pipeline inputs and outputs.
//!
//! Readers are strict: the header must match exactly, every row must have
//! the header's arity, and malformed cells are reported with their file,
//! 1-based data row, and column name. Writers emit the same schemas with a
//! header even for zero rows, so empty datasets round-trip.
//!
//! Files and their headers:
//!
//! * annotations: `item_id,dataset,class,n_annotators,n_selected[,draws]`
//!   (`draws` is a `0`/`1` string, one char per annotator)
//! * correctness: `item_id,model_name,correct`
//! * ground truth: `item_id,true_s`
//! * matched selection: `item_id`
//! * series: `series,x,y,ci_lo,ci_hi`

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use matchbias::synthpop::{AnnotationRecord, CorrectnessRecord, DatasetTag};

use crate::error::{CliError, Result};

pub const ANNOTATIONS_HEADER: &[&str] =
    &["item_id", "dataset", "class", "n_annotators", "n_selected"];
pub const CORRECTNESS_HEADER: &[&str] = &["item_id", "model_name", "correct"];
pub const TRUTH_HEADER: &[&str] = &["item_id", "true_s"];
pub const MATCHED_HEADER: &[&str] = &["item_id"];
pub const SERIES_HEADER: &[&str] = &["series", "x", "y", "ci_lo", "ci_hi"];

/// One annotations row: the blind record plus its dataset tag and class.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRow {
    pub record: AnnotationRecord,
    pub dataset: DatasetTag,
    pub class: u32,
}

/// One row of a long-format series file.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub ci: Option<(f64, f64)>,
}

fn schema_err(path: &Path, row: usize, column: &str, message: impl Into<String>) -> CliError {
    CliError::Schema {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn csv_err(path: &Path, row: usize) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| schema_err(path, row, "row", e.to_string())
}

/// Data rows of a CSV file, each paired with its 1-based row number.
type NumberedRows = Vec<(usize, csv::StringRecord)>;

/// Read a whole CSV file: returns the header fields and the data rows,
/// enforcing uniform arity.
fn read_raw(path: &Path) -> Result<(Vec<String>, NumberedRows)> {
    let file = File::open(path).map_err(CliError::io(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut records = reader.records();
    let header: Vec<String> = match records.next() {
        Some(h) => h
            .map_err(csv_err(path, 0))?
            .iter()
            .map(str::to_string)
            .collect(),
        None => return Err(schema_err(path, 0, "header", "file is empty")),
    };
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let rec = rec.map_err(csv_err(path, row))?;
        if rec.len() != header.len() {
            return Err(schema_err(
                path,
                row,
                "row",
                format!("expected {} fields, got {}", header.len(), rec.len()),
            ));
        }
        rows.push((row, rec));
    }
    Ok((header, rows))
}

fn require_header(path: &Path, got: &[String], want: &[&str]) -> Result<()> {
    if got.iter().map(String::as_str).ne(want.iter().copied()) {
        return Err(schema_err(
            path,
            0,
            "header",
            format!("expected {:?}, got {:?}", want.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn parse_cell<T: std::str::FromStr>(path: &Path, row: usize, column: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| schema_err(path, row, column, format!("cannot parse {raw:?}: {e}")))
}

/// First line of a file, for cheap schema sniffing before a full read.
pub fn peek_header(path: &Path) -> Result<String> {
    let file = File::open(path).map_err(CliError::io(path))?;
    let mut line = String::new();
    BufReader::new(file)
        .read_line(&mut line)
        .map_err(CliError::io(path))?;
    Ok(line.trim_end().to_string())
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRow>> {
    let (header, rows) = read_raw(path)?;
    let plain: Vec<&str> = header.iter().map(String::as_str).collect();
    let with_draws = if plain == ANNOTATIONS_HEADER {
        false
    } else if plain.len() == 6 && plain[..5] == *ANNOTATIONS_HEADER && plain[5] == "draws" {
        true
    } else {
        return Err(schema_err(
            path,
            0,
            "header",
            format!(
                "expected {:?} with optional trailing `draws`, got {:?}",
                ANNOTATIONS_HEADER.join(","),
                header.join(",")
            ),
        ));
    };

    let mut out = Vec::with_capacity(rows.len());
    for (row, rec) in rows {
        let item_id: u64 = parse_cell(path, row, "item_id", &rec[0])?;
        let dataset = DatasetTag::parse(&rec[1])
            .map_err(|e| schema_err(path, row, "dataset", e.to_string()))?;
        let class: u32 = parse_cell(path, row, "class", &rec[2])?;
        let n_annotators: u32 = parse_cell(path, row, "n_annotators", &rec[3])?;
        let n_selected: u32 = parse_cell(path, row, "n_selected", &rec[4])?;

        let draws: Option<Vec<bool>> = if with_draws && !rec[5].is_empty() {
            let bits: Vec<bool> = rec[5]
                .chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => Err(schema_err(
                        path,
                        row,
                        "draws",
                        format!("expected a 0/1 string, found {other:?}"),
                    )),
                })
                .collect::<Result<_>>()?;
            if bits.len() != n_annotators as usize {
                return Err(schema_err(
                    path,
                    row,
                    "draws",
                    format!("{} draws for n_annotators = {n_annotators}", bits.len()),
                ));
            }
            let ones = bits.iter().filter(|&&b| b).count() as u32;
            if ones != n_selected {
                return Err(schema_err(
                    path,
                    row,
                    "draws",
                    format!("{ones} selections in draws but n_selected = {n_selected}"),
                ));
            }
            Some(bits)
        } else {
            None
        };

        let mut record = AnnotationRecord::new(item_id, n_annotators, n_selected)
            .map_err(|e| schema_err(path, row, "n_selected", e.to_string()))?;
        record.draws = draws;
        out.push(AnnotationRow {
            record,
            dataset,
            class,
        });
    }
    Ok(out)
}

pub fn write_annotations(path: &Path, rows: &[AnnotationRow], with_draws: bool) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<&str> = ANNOTATIONS_HEADER.to_vec();
    if with_draws {
        header.push("draws");
    }
    w.write_record(&header).map_err(csv_err(path, 0))?;
    for (i, row) in rows.iter().enumerate() {
        let r = &row.record;
        let mut fields = vec![
            r.item_id.to_string(),
            row.dataset.as_str().to_string(),
            row.class.to_string(),
            r.n_annotators.to_string(),
            r.n_selected.to_string(),
        ];
        if with_draws {
            fields.push(match &r.draws {
                Some(bits) => bits.iter().map(|&b| if b { '1' } else { '0' }).collect(),
                None => String::new(),
            });
        }
        w.write_record(&fields).map_err(csv_err(path, i + 1))?;
    }
    w.flush().map_err(CliError::io(path))?;
    Ok(())
}

pub fn read_correctness(path: &Path) -> Result<Vec<CorrectnessRecord>> {
    let (header, rows) = read_raw(path)?;
    require_header(path, &header, CORRECTNESS_HEADER)?;
    let mut out = Vec::with_capacity(rows.len());
    for (row, rec) in rows {
        let item_id: u64 = parse_cell(path, row, "item_id", &rec[0])?;
        let model_name = rec[1].to_string();
        if model_name.is_empty() {
            return Err(schema_err(path, row, "model_name", "must be non-empty"));
        }
        let correct = match &rec[2] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(schema_err(
                    path,
                    row,
                    "correct",
                    format!("expected 0/1/true/false, got {other:?}"),
                ))
            }
        };
        out.push(CorrectnessRecord {
            item_id,
            model_name,
            correct,
        });
    }
    Ok(out)
}

pub fn write_correctness(path: &Path, records: &[CorrectnessRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(CORRECTNESS_HEADER).map_err(csv_err(path, 0))?;
    for (i, r) in records.iter().enumerate() {
        w.write_record(&[
            r.item_id.to_string(),
            r.model_name.clone(),
            if r.correct { "1".into() } else { "0".into() },
        ])
        .map_err(csv_err(path, i + 1))?;
    }
    w.flush().map_err(CliError::io(path))?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<Vec<(u64, f64)>> {
    let (header, rows) = read_raw(path)?;
    require_header(path, &header, TRUTH_HEADER)?;
    let mut out = Vec::with_capacity(rows.len());
    for (row, rec) in rows {
        let item_id: u64 = parse_cell(path, row, "item_id", &rec[0])?;
        let true_s: f64 = parse_cell(path, row, "true_s", &rec[1])?;
        if !(0.0..=1.0).contains(&true_s) {
            return Err(schema_err(path, row, "true_s", format!("{true_s} outside [0, 1]")));
        }
        out.push((item_id, true_s));
    }
    Ok(out)
}

pub fn write_truth(path: &Path, rows: &[(u64, f64)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(TRUTH_HEADER).map_err(csv_err(path, 0))?;
    for (i, (id, s)) in rows.iter().enumerate() {
        w.write_record(&[id.to_string(), s.to_string()])
            .map_err(csv_err(path, i + 1))?;
    }
    w.flush().map_err(CliError::io(path))?;
    Ok(())
}

pub fn read_matched(path: &Path) -> Result<Vec<u64>> {
    let (header, rows) = read_raw(path)?;
    require_header(path, &header, MATCHED_HEADER)?;
    rows.into_iter()
        .map(|(row, rec)| parse_cell(path, row, "item_id", &rec[0]))
        .collect()
}

pub fn write_matched(path: &Path, ids: &[u64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(MATCHED_HEADER).map_err(csv_err(path, 0))?;
    for (i, id) in ids.iter().enumerate() {
        w.write_record(&[id.to_string()]).map_err(csv_err(path, i + 1))?;
    }
    w.flush().map_err(CliError::io(path))?;
    Ok(())
}

pub fn write_series(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SERIES_HEADER).map_err(csv_err(path, 0))?;
    for (i, r) in rows.iter().enumerate() {
        let (lo, hi) = match r.ci {
            Some((lo, hi)) => (lo.to_string(), hi.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record(&[r.series.clone(), r.x.to_string(), r.y.to_string(), lo, hi])
            .map_err(csv_err(path, i + 1))?;
    }
    w.flush().map_err(CliError::io(path))?;
    Ok(())
}

pub fn read_series(path: &Path) -> Result<Vec<SeriesRow>> {
    let (header, rows) = read_raw(path)?;
    require_header(path, &header, SERIES_HEADER)?;
    let mut out = Vec::with_capacity(rows.len());
    for (row, rec) in rows {
        let ci = match (&rec[3], &rec[4]) {
            ("", "") => None,
            (lo, hi) => Some((
                parse_cell(path, row, "ci_lo", lo)?,
                parse_cell(path, row, "ci_hi", hi)?,
            )),
        };
        out.push(SeriesRow {
            series: rec[0].to_string(),
            x: parse_cell(path, row, "x", &rec[1])?,
            y: parse_cell(path, row, "y", &rec[2])?,
            ci,
        });
    }
    Ok(out)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(CliError::io(path))?;
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file))
}
