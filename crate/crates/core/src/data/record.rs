use std::path::Path;

use chrono::{Days, NaiveDate};

use crate::error::{Error, Result};

/// Marker for a missing observation.
pub const MISSING: f64 = f64::NAN;

pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

/// One basin's daily series on a contiguous calendar, plus its static
/// attributes. Missing observations are stored as [`MISSING`].
#[derive(Clone, Debug, PartialEq)]
pub struct BasinRecord {
    pub basin_id: String,
    pub start: NaiveDate,
    pub dynamic_names: Vec<String>,
    /// One column per dynamic variable, each of length `len()`.
    pub dynamic: Vec<Vec<f64>>,
    pub target_name: String,
    pub target: Vec<f64>,
    pub static_names: Vec<String>,
    pub statics: Vec<f64>,
}

impl BasinRecord {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        self.start + Days::new(index as u64)
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        (0..self.len()).map(|i| self.date(i)).collect()
    }

    /// Dynamic variable names followed by the target name.
    pub fn series_names(&self) -> Vec<String> {
        let mut names = self.dynamic_names.clone();
        names.push(self.target_name.clone());
        names
    }

    /// Every series, dynamic variables first and the target last.
    pub fn series(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.dynamic
            .iter()
            .zip(&self.dynamic_names)
            .map(|(v, n)| (n.as_str(), v.as_slice()))
            .chain(std::iter::once((
                self.target_name.as_str(),
                self.target.as_slice(),
            )))
    }

    pub fn missing_count(&self) -> usize {
        self.series()
            .map(|(_, v)| v.iter().filter(|x| is_missing(**x)).count())
            .sum()
    }
}

fn parse_value(cell: &str, file: &str, row: usize, column: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(MISSING);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::ingest(
            file,
            format!("row {row}, column `{column}`: `{cell}` is not a finite number"),
        )),
    }
}

/// Parses one basin's timeseries table and its row of the attributes table.
///
/// The timeseries file has an ISO-8601 date in its first column and one named
/// variable per remaining column; `target_column` names the streamflow
/// column. Calendar days absent from the file become all-missing rows. The
/// attributes file has the basin identifier in its first column. Row numbers
/// in errors count the header as row 1.
pub fn load_basin(
    timeseries: &Path,
    attributes: &Path,
    basin_id: &str,
    target_column: &str,
) -> Result<BasinRecord> {
    let ts_name = timeseries.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(timeseries)?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.len() < 2 {
        return Err(Error::ingest(
            &ts_name,
            "expected a date column and at least one variable",
        ));
    }
    let target_pos = headers[1..]
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::ingest(&ts_name, format!("no target column `{target_column}`")))?
        + 1;

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::ingest(&ts_name, format!("row {row}: {e}")))?;
        let date_cell = rec.get(0).unwrap_or("").trim();
        let date = date_cell.parse::<NaiveDate>().map_err(|_| {
            Error::ingest(
                &ts_name,
                format!("row {row}: `{date_cell}` is not an ISO-8601 date"),
            )
        })?;
        if let Some((prev, _)) = rows.last() {
            if date <= *prev {
                return Err(Error::ingest(
                    &ts_name,
                    format!("row {row}: date {date} does not follow {prev}"),
                ));
            }
        }
        let values = (1..headers.len())
            .map(|c| parse_value(rec.get(c).unwrap_or(""), &ts_name, row, &headers[c]))
            .collect::<Result<Vec<_>>>()?;
        rows.push((date, values));
    }
    let (start, end) = match (rows.first(), rows.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return Err(Error::ingest(&ts_name, "no data rows")),
    };

    let n = (end - start).num_days() as usize + 1;
    let n_vars = headers.len() - 1;
    let mut columns = vec![vec![MISSING; n]; n_vars];
    for (date, values) in &rows {
        let t = (*date - start).num_days() as usize;
        for (col, v) in columns.iter_mut().zip(values) {
            col[t] = *v;
        }
    }
    let target = columns.remove(target_pos - 1);
    let dynamic_names: Vec<String> = headers[1..]
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target_pos - 1)
        .map(|(_, h)| h.clone())
        .collect();

    let (static_names, statics) = load_attributes(attributes, basin_id)?;
    Ok(BasinRecord {
        basin_id: basin_id.to_string(),
        start,
        dynamic_names,
        dynamic: columns,
        target_name: target_column.to_string(),
        target,
        static_names,
        statics,
    })
}

/// Reads the static attributes of `basin_id`. Every attribute must be a
/// finite number.
pub fn load_attributes(path: &Path, basin_id: &str) -> Result<(Vec<String>, Vec<f64>)> {
    let name = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::ingest(&name, format!("row {row}: {e}")))?;
        if rec.get(0).map(str::trim) != Some(basin_id) {
            continue;
        }
        let values = (1..headers.len())
            .map(|c| {
                let cell = rec.get(c).unwrap_or("").trim();
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::ingest(
                            &name,
                            format!(
                                "row {row}, column `{}`: `{cell}` is not a finite number",
                                headers[c]
                            ),
                        )
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok((headers[1..].to_vec(), values));
    }
    Err(Error::Lookup(basin_id.to_string()))
}

/// Identifiers listed in the first column of an attributes table.
pub fn list_basins(attributes: &Path) -> Result<Vec<String>> {
    let mut reader = csv::Reader::from_path(attributes)?;
    let mut ids = Vec::new();
    for rec in reader.records() {
        if let Some(id) = rec?.get(0) {
            ids.push(id.trim().to_string());
        }
    }
    Ok(ids)
}
