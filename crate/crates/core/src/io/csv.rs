use std::io::{Read, Write};

use super::FormatError;
use crate::scaling::SweepRow;

pub const CSV_HEADER: [&str; 9] = [
    "t", "c_ne", "c_so", "poa", "ratio_ne", "ratio_so", "eps_so", "ne_gap", "so_gap",
];

/// 17 significant digits, enough to round-trip any f64.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: ::csv::Error) -> FormatError {
    FormatError::Io(e.to_string())
}

/// Writes the sweep table and returns the number of bytes written.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut dest: W) -> Result<usize, FormatError> {
    if rows.is_empty() {
        return Err(FormatError::EmptyRows);
    }
    let mut w = ::csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            num(r.t),
            num(r.c_ne),
            num(r.c_so),
            num(r.poa),
            num(r.ratio_ne),
            num(r.ratio_so),
            num(r.eps_so),
            num(r.ne_gap),
            num(r.so_gap),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| FormatError::Io(e.to_string()))?;
    dest.write_all(&bytes)?;
    dest.flush()?;
    Ok(bytes.len())
}

/// Reads a table produced by [`write_sweep_csv`]. Row flags are not stored
/// and come back as `None`.
pub fn read_sweep_csv<R: Read>(src: R) -> Result<Vec<SweepRow>, FormatError> {
    let mut r = ::csv::Reader::from_reader(src);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(FormatError::Syntax {
            line: 1,
            column: 1,
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let mut v = [0.0; 9];
        for (j, field) in rec.iter().enumerate().take(9) {
            v[j] = field.parse().map_err(|_| FormatError::Syntax {
                line: i + 2,
                column: j + 1,
                message: format!("bad number {field:?}"),
            })?;
        }
        rows.push(SweepRow {
            t: v[0],
            c_ne: v[1],
            c_so: v[2],
            poa: v[3],
            ratio_ne: v[4],
            ratio_so: v[5],
            eps_so: v[6],
            ne_gap: v[7],
            so_gap: v[8],
            flag: None,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64) -> SweepRow {
        SweepRow {
            t,
            c_ne: 1.0 / 3.0,
            c_so: 0.1,
            poa: 1.0 / 3.0 / 0.1,
            ratio_ne: 1e-300,
            ratio_so: 5e-324,
            eps_so: 0.0,
            ne_gap: 1e-9,
            so_gap: 2.5e-10,
            flag: None,
        }
    }

    #[test]
    fn one_row_two_lines() {
        let mut out = Vec::new();
        let n = write_sweep_csv(&[row(1.0)], &mut out).unwrap();
        assert_eq!(n, out.len());
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "t,c_ne,c_so,poa,ratio_ne,ratio_so,eps_so,ne_gap,so_gap");
        assert!(lines[1].starts_with("1.0000000000000000e0,3.3333333333333331e-1,"));
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(write_sweep_csv(&[], Vec::new()), Err(FormatError::EmptyRows));
    }

    #[test]
    fn round_trips_exactly() {
        let rows = vec![row(1.0), row(101074.0)];
        let mut out = Vec::new();
        write_sweep_csv(&rows, &mut out).unwrap();
        assert_eq!(read_sweep_csv(out.as_slice()).unwrap(), rows);
    }
}
