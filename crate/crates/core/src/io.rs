//! CSV ingestion and emission. Readers accept `#` comment lines and
//! surrounding whitespace; writers use shortest round-trip float formatting.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::{PredictionRow, RStarObservation, SparsityObservation, SweepGroup};
use crate::scaling::RunRecord;

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn read_rows<T: DeserializeOwned, R: Read>(input: R, what: &str) -> Result<Vec<T>> {
    let mut rdr = reader(input);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let row: T = row.map_err(|e| invalid(format!("{what} row {}: {e}", i + 1)))?;
        out.push(row);
    }
    Ok(out)
}

fn write_rows<T: Serialize, W: Write>(output: W, header: &[&str], rows: &[T]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(output);
    wtr.write_record(header)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let records: Vec<RunRecord> = read_rows(input, "record")?;
    for (i, rec) in records.iter().enumerate() {
        rec.validate()
            .map_err(|e| invalid(format!("record row {}: {e}", i + 1)))?;
    }
    Ok(records)
}

pub fn write_records<W: Write>(output: W, records: &[RunRecord]) -> Result<()> {
    write_rows(output, &RunRecord::CSV_HEADER, records)
}

#[derive(Debug, Deserialize)]
struct SweepRow {
    #[serde(rename = "C")]
    c: f64,
    #[serde(rename = "S")]
    s: f64,
    r: f64,
    loss: f64,
}

/// Reads `C,S,r,loss` rows into one group per `(S, C)`, ordered by S then C.
pub fn read_sweep<R: Read>(input: R) -> Result<Vec<SweepGroup>> {
    let rows: Vec<SweepRow> = read_rows(input, "sweep")?;
    if rows.is_empty() {
        return Err(invalid("sweep file has no rows"));
    }
    let mut groups: BTreeMap<(OrdF64, OrdF64), Vec<(f64, f64)>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((OrdF64::new(row.s)?, OrdF64::new(row.c)?))
            .or_default()
            .push((row.r, row.loss));
    }
    groups
        .into_iter()
        .map(|((s, c), points)| SweepGroup::new(c.0, s.0, points))
        .collect()
}

/// Finite float with a total order, for grouping keys.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl OrdF64 {
    fn new(v: f64) -> Result<Self> {
        if v.is_finite() {
            // `+ 0.0` folds -0.0 into 0.0 so equality and ordering agree.
            Ok(Self(v + 0.0))
        } else {
            Err(invalid("non-finite value in key column"))
        }
    }
}

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Serialize)]
struct RStarRow<'a> {
    c: f64,
    s: f64,
    r_star: f64,
    loss: f64,
    selection: &'a str,
}

pub fn write_rstar<W: Write>(output: W, obs: &[RStarObservation]) -> Result<()> {
    let rows: Vec<RStarRow> = obs
        .iter()
        .map(|o| RStarRow {
            c: o.c,
            s: o.s,
            r_star: o.r_star,
            loss: o.loss_at_star,
            selection: o.selection.as_str(),
        })
        .collect();
    write_rows(output, &["C", "S", "r_star", "loss", "selection"], &rows)
}

/// `observed,predicted,residual`, one row per input record in input order.
pub fn write_predictions<W: Write>(output: W, rows: &[PredictionRow]) -> Result<()> {
    let rows: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.observed, r.predicted, r.residual)).collect();
    write_rows(output, &["observed", "predicted", "residual"], &rows)
}

pub fn read_sparsity_observations<R: Read>(input: R) -> Result<Vec<SparsityObservation>> {
    read_rows(input, "sparsity observation")
}

/// Two named numeric columns from an arbitrary CSV.
pub fn read_columns<R: Read>(input: R, x: &str, y: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| invalid(format!("missing column `{name}`")))
    };
    let (ix, iy) = (find(x)?, find(y)?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let parse = |idx: usize, name: &str| -> Result<f64> {
            let cell = row.get(idx).unwrap_or("");
            cell.parse::<f64>()
                .map_err(|_| invalid(format!("row {}: column `{name}` is not a number: `{cell}`", i + 1)))
        };
        xs.push(parse(ix, x)?);
        ys.push(parse(iy, y)?);
    }
    Ok((xs, ys))
}

/// Single-row FLOPs table.
pub fn write_flops<W: Write>(mut output: W, flops: &crate::flops::FlopsBreakdown) -> Result<()> {
    writeln!(output, "{}", crate::flops::FlopsBreakdown::CSV_HEADER).map_err(Error::Io)?;
    writeln!(output, "{}", flops.csv_row()).map_err(Error::Io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip() {
        let recs = vec![
            RunRecord {
                label: "a,b".into(),
                n: 5.5e8,
                n_active: 2.541e7,
                d: 1e10,
                s: 0.9538,
                r: 0.6,
                c: 1.5246e18,
                loss: 20.328_033_904_831_23,
            },
            RunRecord {
                label: "plain".into(),
                n: 1e8,
                n_active: 1e7,
                d: 3e9,
                s: 0.9,
                r: 1.0 / 3.0,
                c: 1.8e17,
                loss: 3.1,
            },
        ];
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("label,N,N_active,D,S,r,C,loss\n"));
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn comments_and_whitespace() {
        let text = "# header comment\nlabel, N, N_active, D, S, r, C, loss\n# skip\nx, 1e8, 1e7, 1e9, 0.9, 0.5, 6e16, 3.2\n";
        let recs = read_records(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].r, 0.5);
    }

    #[test]
    fn bad_rows_name_the_row() {
        let text = "label,N,N_active,D,S,r,C,loss\nx,1e8,1e7,1e9,1.5,0.5,6e16,3.2\n";
        let err = read_records(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("row 1"), "{err}");
    }

    #[test]
    fn sweep_groups_sorted() {
        let text = "C,S,r,loss\n1e20,0.9,0.5,3.0\n1e20,0.9,1.0,2.9\n1e19,0.9,0.5,3.2\n1e19,0.9,1.0,3.1\n1e19,0.8,1.0,3.3\n1e19,0.8,2.0,3.4\n";
        let groups = read_sweep(text.as_bytes()).unwrap();
        let keys: Vec<(f64, f64)> = groups.iter().map(|g| (g.s, g.c)).collect();
        assert_eq!(keys, vec![(0.8, 1e19), (0.9, 1e19), (0.9, 1e20)]);
        assert_eq!(groups[1].points.len(), 2);
    }

    #[test]
    fn columns() {
        let text = "x,y,z\n1,2,3\n4,5,6\n";
        let (xs, zs) = read_columns(text.as_bytes(), "x", "z").unwrap();
        assert_eq!((xs, zs), (vec![1.0, 4.0], vec![3.0, 6.0]));
        assert!(read_columns(text.as_bytes(), "x", "w").is_err());
    }
}
