//! Reading data tables and writing curves and chain records.

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::estimate::CurveEstimate;
use crate::fit::PreparedModel;
use crate::sampler::ChainOutput;

/// Numeric columns of a CSV file with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|j| &self.columns[j][..])
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return invalid("input has no header row");
    }
    let mut columns = vec![Vec::new(); names.len()];
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                crate::Error::InvalidInput(format!("row {}, column {}: not a number: {field:?}", i + 2, names[j]))
            })?;
            if !v.is_finite() {
                return invalid(format!("row {}, column {}: non-finite value", i + 2, names[j]));
            }
            columns[j].push(v);
        }
    }
    if columns[0].is_empty() {
        return invalid("input has no data rows");
    }
    Ok(Table { names, columns })
}

/// Writes curves as `x,fitted,kind,p` rows.
pub fn write_curves_csv<W: Write>(writer: W, curves: &[&CurveEstimate]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["x", "fitted", "kind", "p"])?;
    for curve in curves {
        for (x, v) in curve.grid.iter().zip(&curve.values) {
            wtr.write_record([x.to_string(), v.to_string(), curve.kind.as_str().to_string(), curve.p.to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// One recorded state, knot locations on the original covariate scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainRecord<'a> {
    pub iteration: usize,
    pub log_posterior: f64,
    pub c: f64,
    pub active_knots: usize,
    pub knots: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<&'a [f64]>,
}

/// Writes one JSON object per recorded state.
pub fn write_chain_jsonl<W: Write>(
    mut writer: W,
    model: &PreparedModel,
    chain: &ChainOutput,
    with_w: bool,
) -> Result<()> {
    for (t, (state, lp)) in chain.samples.iter().zip(&chain.log_post).enumerate() {
        let record = ChainRecord {
            iteration: t,
            log_posterior: lp.value(),
            c: state.c,
            active_knots: state.active_count(),
            knots: model.knot_locations(&state.z, &state.gamma),
            w: with_w.then_some(&state.w[..]),
        };
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::CurveKind;

    #[test]
    fn table_round_trip() {
        let t = read_table("x, y\n1,2\n3,4.5\n".as_bytes()).unwrap();
        assert_eq!(t.names, vec!["x", "y"]);
        assert_eq!(t.column("y").unwrap(), &[2.0, 4.5]);
        assert_eq!(t.rows(), 2);
    }

    #[test]
    fn bad_tables_are_rejected() {
        assert!(read_table("".as_bytes()).is_err());
        assert!(read_table("x,y\n".as_bytes()).is_err());
        assert!(read_table("x,y\n1,abc\n".as_bytes()).is_err());
        assert!(read_table("x,y\n1,2,3\n".as_bytes()).is_err());
        assert!(read_table("x,y\n1,NaN\n".as_bytes()).is_err());
    }

    #[test]
    fn curve_csv_layout() {
        let c = CurveEstimate {
            grid: vec![0.0, 0.5],
            values: vec![1.0, 2.0],
            kind: CurveKind::Map,
            p: 0.25,
            skipped_states: 0,
        };
        let mut out = Vec::new();
        write_curves_csv(&mut out, &[&c]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "x,fitted,kind,p\n0,1,map,0.25\n0.5,2,map,0.25\n");
    }
}
