use std::path::Path;

use super::RawSeries;
use crate::error::{Error, Result};

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NaN" | "nan" | "NAN" | "NA" | "null")
}

/// Reads a comma-separated file whose first column is an integer-second
/// timestamp. Only `feature_columns` are kept, in the given order. Missing
/// cells (empty, `NaN`, `NA`) are recorded as `None`.
pub fn load_csv(path: impl AsRef<Path>, feature_columns: &[String]) -> Result<RawSeries> {
    let path = path.as_ref();
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "missing header row".into(),
        });
    }
    let indices = feature_columns
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::UnknownColumn(name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut series = RawSeries {
        source_id: path
            .file_stem()
            .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned()),
        feature_names: feature_columns.to_vec(),
        timestamps: Vec::new(),
        values: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let ts_cell = record.get(0).unwrap_or("").trim();
        let ts: i64 = ts_cell.parse().map_err(|_| Error::Parse {
            line,
            message: format!("timestamp `{ts_cell}` is not an integer"),
        })?;
        if series.timestamps.last().is_some_and(|&prev| ts <= prev) {
            return Err(Error::Parse {
                line,
                message: format!("timestamp {ts} is not strictly increasing"),
            });
        }
        let row = indices
            .iter()
            .map(|&i| {
                let cell = record.get(i).unwrap_or("");
                if is_missing(cell) {
                    Ok(None)
                } else {
                    cell.trim().parse::<f64>().map(Some).map_err(|_| Error::Parse {
                        line,
                        message: format!("value `{cell}` is not a number"),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        series.timestamps.push(ts);
        series.values.push(row);
    }
    Ok(series)
}

fn csv_error(path: &Path, e: ::csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        ::csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn parses_selected_columns() {
        let f = write("t,m0,m1,m2,m3,m4,m5\n0,1,2,3,4,5,6\n1,1,2,3,4,5,6\n2,NaN,2,3,4,5,6\n");
        let s = load_csv(f.path(), &names(6)).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.features(), 6);
        assert_eq!(s.values[2][0], None);
        assert_eq!(s.values[2][1], Some(2.0));
    }

    #[test]
    fn selects_six_of_many() {
        let header: Vec<String> = std::iter::once("t".to_string()).chain(names(104)).collect();
        let row: Vec<String> = (0..105).map(|i| i.to_string()).collect();
        let f = write(&format!("{}\n{}\n", header.join(","), row.join(",")));
        let wanted = vec!["m3", "m10", "m20", "m50", "m77", "m103"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        let s = load_csv(f.path(), &wanted).unwrap();
        assert_eq!(s.features(), 6);
        assert_eq!(s.values[0][0], Some(4.0));
        assert_eq!(s.values[0][5], Some(104.0));
    }

    #[test]
    fn unknown_column() {
        let f = write("t,a\n0,1\n");
        let err = load_csv(f.path(), &["b".to_string()]).unwrap_err();
        assert!(matches!(err, Error::UnknownColumn(c) if c == "b"));
    }

    #[test]
    fn bad_row_reports_line() {
        let f = write("t,a\n0,1\n1,oops\n");
        match load_csv(f.path(), &["a".to_string()]).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }
}
