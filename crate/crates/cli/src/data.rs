//! CSV tables with columns `x_1..x_d`, `a`, `y`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use effect_risk::nuisance::ObservationTable;

use crate::error::{CliError, Result};

enum Column {
    X(usize),
    A,
    Y,
}

fn classify(name: &str) -> Result<Column> {
    match name.trim() {
        "a" => Ok(Column::A),
        "y" => Ok(Column::Y),
        other => other
            .strip_prefix("x_")
            .and_then(|j| j.parse::<usize>().ok())
            .filter(|&j| j >= 1)
            .map(|j| Column::X(j - 1))
            .ok_or_else(|| CliError::input(format!("line 1: unexpected column '{other}' (expected x_1..x_d, a, y)"))),
    }
}

/// Read a table from CSV text. Line numbers in errors count the header as
/// line 1.
pub fn read_table_from(reader: impl Read) -> Result<ObservationTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::input(format!("line 1: {e}")))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(CliError::input("no rows"));
    }
    let columns = headers.iter().map(classify).collect::<Result<Vec<_>>>()?;
    let d = columns.iter().filter(|c| matches!(c, Column::X(_))).count();
    let mut seen = vec![false; d];
    let (mut has_a, mut has_y) = (false, false);
    for (c, name) in columns.iter().zip(headers.iter()) {
        let dup = match c {
            Column::X(j) if *j >= d => {
                return Err(CliError::input(format!(
                    "line 1: covariate columns must be x_1..x_{d}, found '{name}'"
                )))
            }
            Column::X(j) => std::mem::replace(&mut seen[*j], true),
            Column::A => std::mem::replace(&mut has_a, true),
            Column::Y => std::mem::replace(&mut has_y, true),
        };
        if dup {
            return Err(CliError::input(format!("line 1: duplicate column '{name}'")));
        }
    }
    if !has_a || !has_y {
        return Err(CliError::input("line 1: header must contain columns 'a' and 'y'"));
    }

    let (mut x, mut a, mut y) = (Vec::new(), Vec::new(), Vec::new());
    let mut row = vec![0.0; d];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::input(format!("line {line}: {e}")))?;
        if rec.len() != columns.len() {
            return Err(CliError::input(format!(
                "line {line}: expected {} fields, found {}",
                columns.len(),
                rec.len()
            )));
        }
        let (mut ai, mut yi) = (0, 0.0);
        for ((c, name), field) in columns.iter().zip(headers.iter()).zip(rec.iter()) {
            let field = field.trim();
            if field.is_empty() {
                return Err(CliError::input(format!(
                    "line {line}: missing value in column '{name}'"
                )));
            }
            let v: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                CliError::input(format!(
                    "line {line}: column '{name}': '{field}' is not a finite number"
                ))
            })?;
            match c {
                Column::X(j) => row[*j] = v,
                Column::A => {
                    ai = match v {
                        0.0 => 0,
                        1.0 => 1,
                        _ => {
                            return Err(CliError::input(format!(
                                "line {line}: treatment must be 0 or 1, found '{field}'"
                            )))
                        }
                    }
                }
                Column::Y => yi = v,
            }
        }
        x.extend_from_slice(&row);
        a.push(ai);
        y.push(yi);
    }
    if a.is_empty() {
        return Err(CliError::input("no rows"));
    }
    ObservationTable::new(d, x, a, y).map_err(|e| CliError::input(e.to_string()))
}

pub fn read_table(path: &Path) -> Result<ObservationTable> {
    let file = File::open(path).map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    read_table_from(file)
}

/// Write a table in the format [`read_table_from`] accepts. Values are
/// printed with round-trip precision.
pub fn write_table_to(table: &ObservationTable, writer: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=table.d()).map(|j| format!("x_{j}")).collect();
    header.push("a".into());
    header.push("y".into());
    w.write_record(&header)?;
    for i in 0..table.n() {
        let mut rec: Vec<String> = table.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(table.treatment(i).to_string());
        rec.push(table.outcome(i).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
