use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};
use crate::learn::{ObservationSet, Record};
use crate::model::ItbnStructure;
use crate::timegrid::Resolution;

pub const OBSERVATION_HEADER: [&str; 4] = ["entity", "time", "process", "value"];

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn read_structure(path: &Path) -> Result<ItbnStructure> {
    read_json(path)
}

/// Parses observation CSV text. Times must be exact multiples of
/// `resolution`; duplicate `(entity, time, process)` triples are rejected
/// with the offending row number (the header is row 1).
pub fn parse_records<R: Read>(reader: R, resolution: Resolution) -> Result<Vec<Record>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = csv.headers()?.clone();
    if header.iter().ne(OBSERVATION_HEADER.iter().copied()) {
        return Err(Error::Data(format!(
            "observation header must be exactly `{}`, got `{}`",
            OBSERVATION_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut records = Vec::new();
    let mut seen: HashMap<(String, i64, String), usize> = HashMap::new();
    for (i, row) in csv.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Data(format!("row {line}: {e}")))?;
        if row.len() != 4 {
            return Err(Error::Data(format!(
                "row {line}: expected 4 fields, got {}",
                row.len()
            )));
        }
        let at = |e: Error| Error::Data(format!("row {line}: {e}"));
        let ticks = resolution.ticks_from_str(&row[1]).map_err(at)?;
        let value: f64 = row[3]
            .parse()
            .map_err(|_| Error::Data(format!("row {line}: cannot parse value `{}`", &row[3])))?;
        if !value.is_finite() {
            return Err(Error::Data(format!("row {line}: value must be finite")));
        }
        let key = (row[0].to_string(), ticks, row[2].to_string());
        if let Some(first) = seen.insert(key, line) {
            return Err(Error::Data(format!(
                "row {line}: duplicate observation of `{}` for entity `{}` at time {} (first seen on row {first})",
                &row[2], &row[0], &row[1]
            )));
        }
        records.push(Record {
            entity: row[0].to_string(),
            ticks,
            process: row[2].to_string(),
            value,
        });
    }
    Ok(records)
}

pub fn read_records(path: &Path, resolution: Resolution) -> Result<Vec<Record>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_records(file, resolution)
}

/// Finest decimal resolution needed by the times of an observation file,
/// `10^-d` for `d` the most fractional digits (at least 1).
pub fn infer_resolution(path: &Path) -> Result<Resolution> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let col = csv
        .headers()?
        .iter()
        .position(|h| h == "time")
        .ok_or_else(|| Error::Data("observation file has no `time` column".into()))?;
    let mut digits = 0;
    for (i, row) in csv.records().enumerate() {
        let row = row.map_err(|e| Error::Data(format!("row {}: {e}", i + 2)))?;
        let t = row.get(col).unwrap_or("");
        if t.contains(['e', 'E']) {
            return Err(Error::InvalidParameter(format!(
                "row {}: time `{t}` uses an exponent; pass --resolution",
                i + 2
            )));
        }
        if let Some((_, frac)) = t.split_once('.') {
            digits = digits.max(frac.trim_end_matches('0').len());
        }
    }
    Resolution::parse(&format!("1e-{digits}"))
}

pub fn read_observations(path: &Path, structure: &ItbnStructure) -> Result<ObservationSet> {
    let records = read_records(path, structure.resolution)?;
    ObservationSet::from_records(structure, structure.resolution, &records)
}

pub fn write_records<W: Write>(out: W, records: &[Record], resolution: Resolution) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OBSERVATION_HEADER)?;
    for r in records {
        w.write_record([
            r.entity.as_str(),
            &resolution.format_ticks(r.ticks),
            r.process.as_str(),
            &r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}
