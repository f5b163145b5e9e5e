//! File formats: weight CSV, report JSON, experiment CSV.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::analytic::NfPrediction;
use crate::circuit::NfMeasurement;
use crate::crossbar::{CrossbarGeometry, ResistanceParams, WeightMatrix};
use crate::error::{Error, Result};
use crate::experiments::{AccuracyPoint, BenchmarkRow, FitPoint};

/// Reads a headerless CSV of decimal weights, one matrix row per line.
pub fn read_weights_csv<R: Read>(reader: R) -> Result<WeightMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(rows.len() + 1, |p| p.line() as usize);
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("`{field}` is not a finite decimal number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data("no rows".into()));
    }
    WeightMatrix::from_rows(rows)
}

pub fn write_weights_csv<W: Write>(weights: &WeightMatrix, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..weights.rows() {
        w.write_record(weights.row(i).iter().map(|v| v.to_string()))
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedSection {
    pub nf_sum: f64,
    pub nf_normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredSection {
    pub aggregate: f64,
    pub per_column: Vec<Option<f64>>,
}

/// Contents of `nf-report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfReport {
    pub geometry: CrossbarGeometry,
    pub params: ResistanceParams,
    pub predicted: PredictedSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured: Option<MeasuredSection>,
}

impl NfReport {
    pub fn new(
        geometry: CrossbarGeometry,
        params: ResistanceParams,
        predicted: &NfPrediction,
        measured: Option<&NfMeasurement>,
    ) -> Self {
        Self {
            geometry,
            params,
            predicted: PredictedSection {
                nf_sum: predicted.nf_sum,
                nf_normalized: predicted.nf_normalized,
            },
            measured: measured.map(|m| MeasuredSection {
                aggregate: m.aggregate,
                per_column: m.per_column.clone(),
            }),
        }
    }
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_table<W: Write, const N: usize>(
    writer: W,
    header: [&str; N],
    rows: impl Iterator<Item = [String; N]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header).map_err(csv_io)?;
    for row in rows {
        w.write_record(row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// `benchmark.csv`: config, mean_nf, reduction_pct (blank when undefined).
pub fn write_benchmark_csv<W: Write>(rows: &[BenchmarkRow], writer: W) -> Result<()> {
    write_table(
        writer,
        ["config", "mean_nf", "reduction_pct"],
        rows.iter().map(|r| {
            [
                r.config.clone(),
                r.mean_nf.to_string(),
                r.reduction_pct.map(|v| v.to_string()).unwrap_or_default(),
            ]
        }),
    )
}

/// `scatter.csv`: predicted_nf, measured_nf per tile.
pub fn write_scatter_csv<W: Write>(points: &[FitPoint], writer: W) -> Result<()> {
    write_table(
        writer,
        ["predicted_nf", "measured_nf"],
        points.iter().map(|p| [p.predicted_nf.to_string(), p.measured_nf.to_string()]),
    )
}

/// `accuracy.csv`: eta, baseline_err, mdm_err.
pub fn write_accuracy_csv<W: Write>(points: &[AccuracyPoint], writer: W) -> Result<()> {
    write_table(
        writer,
        ["eta", "baseline_err", "mdm_err"],
        points.iter().map(|p| [p.eta.to_string(), p.baseline_err.to_string(), p.mdm_err.to_string()]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_weights() {
        let m = read_weights_csv("0.5, 0.25\n-0.125,1e-3\n".as_bytes()).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
        assert_eq!(m.get(1, 0), -0.125);
        assert_eq!(m.get(1, 1), 1e-3);
    }

    #[test]
    fn empty_input_has_no_rows() {
        let err = read_weights_csv("".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "data error: no rows");
    }

    #[test]
    fn bad_value_reports_line() {
        match read_weights_csv("0.1\n0.2\nabc\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match read_weights_csv("0.1\nNaN\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(read_weights_csv("0.1,0.2\n0.3\n".as_bytes()).is_err());
    }

    #[test]
    fn weights_round_trip() {
        let m = WeightMatrix::new(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let mut buf = Vec::new();
        write_weights_csv(&m, &mut buf).unwrap();
        assert_eq!(read_weights_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn benchmark_csv_blank_reduction() {
        let rows = vec![BenchmarkRow {
            config: "conventional+identity".into(),
            mean_nf: 0.0,
            reduction_pct: None,
            mean_distance_sum: 0.0,
        }];
        let mut buf = Vec::new();
        write_benchmark_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "config,mean_nf,reduction_pct\nconventional+identity,0,\n"
        );
    }
}
