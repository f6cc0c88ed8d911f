//! CSV and JSONL exports, each with a loader that reads it back unchanged.
//!
//! Attribution CSV columns: `player_ordinal, player_text, phi, standard_error,
//! v_empty, v_full, method, seed, permutations, efficiency_residual`; empty
//! cells mean "not applicable". Series CSV columns: `x, p`. Floats are written
//! in shortest round-trip form.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::Provenance;
use crate::probes::{summarize, BatterySummary, ProbeResult, SweepSeries};
use crate::shapley::{Attribution, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

/// One player's row of an exported attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub player_ordinal: usize,
    pub player_text: String,
    pub phi: f64,
    pub standard_error: Option<f64>,
    pub v_empty: f64,
    pub v_full: f64,
    /// `exact`, `sampled` or `enumerated`.
    pub method: String,
    pub seed: Option<u64>,
    pub permutations: Option<usize>,
    pub efficiency_residual: f64,
}

pub fn attribution_records(attribution: &Attribution) -> Vec<AttributionRecord> {
    let (method, seed, permutations) = match attribution.method {
        Method::Exact => ("exact", None, None),
        Method::Enumerated => ("enumerated", None, None),
        Method::Sampled { permutations, seed } => ("sampled", Some(seed), Some(permutations)),
    };
    attribution
        .values
        .iter()
        .enumerate()
        .map(|(i, &phi)| AttributionRecord {
            player_ordinal: i,
            player_text: attribution.labels[i].clone(),
            phi,
            standard_error: attribution.standard_errors.as_ref().map(|se| se[i]),
            v_empty: attribution.v_empty,
            v_full: attribution.v_full,
            method: method.into(),
            seed,
            permutations,
            efficiency_residual: attribution.efficiency_residual,
        })
        .collect()
}

/// Rebuilds an attribution from its exported rows.
pub fn attribution_from_records(records: &[AttributionRecord]) -> Result<Attribution> {
    let first = records.first().ok_or(Error::NoPlayers)?;
    let mut rows: Vec<&AttributionRecord> = records.iter().collect();
    rows.sort_by_key(|r| r.player_ordinal);
    if rows.iter().enumerate().any(|(i, r)| r.player_ordinal != i) {
        return Err(Error::InvalidSeries("player ordinals must be 0..n without gaps".into()));
    }
    let method = match (first.method.as_str(), first.seed, first.permutations) {
        ("exact", _, _) => Method::Exact,
        ("enumerated", _, _) => Method::Enumerated,
        ("sampled", Some(seed), Some(permutations)) => Method::Sampled { permutations, seed },
        (other, _, _) => {
            return Err(Error::InvalidSeries(format!("unknown attribution method `{other}`")))
        }
    };
    let standard_errors = if rows.iter().all(|r| r.standard_error.is_some()) && matches!(method, Method::Sampled { .. }) {
        Some(rows.iter().map(|r| r.standard_error.unwrap()).collect())
    } else {
        None
    };
    Ok(Attribution {
        values: rows.iter().map(|r| r.phi).collect(),
        labels: rows.iter().map(|r| r.player_text.clone()).collect(),
        v_empty: first.v_empty,
        v_full: first.v_full,
        method,
        efficiency_residual: first.efficiency_residual,
        standard_errors,
    })
}

/// First line of a JSONL export carrying the run's provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceHeader {
    pub provenance: Provenance,
}

pub fn write_attribution(
    attribution: &Attribution,
    provenance: Option<&Provenance>,
    format: Format,
    out: impl Write,
) -> Result<()> {
    let records = attribution_records(attribution);
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in &records {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut out = BufWriter::new(out);
            if let Some(p) = provenance {
                write_json_line(&mut out, &ProvenanceHeader { provenance: p.clone() })?;
            }
            for r in &records {
                write_json_line(&mut out, r)?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

pub fn save_attribution(
    attribution: &Attribution,
    provenance: Option<&Provenance>,
    out_path: impl AsRef<Path>,
) -> Result<()> {
    let path = out_path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_attribution(attribution, provenance, Format::from_path(path), file)
}

pub fn load_attribution(path: impl AsRef<Path>) -> Result<Attribution> {
    let path = path.as_ref();
    let records: Vec<AttributionRecord> = match Format::from_path(path) {
        Format::Csv => {
            let mut r = csv::Reader::from_path(path)?;
            r.deserialize().collect::<std::result::Result<_, _>>()?
        }
        Format::Jsonl => read_json_lines(path)?,
    };
    attribution_from_records(&records)
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRow {
    x: i64,
    p: f64,
}

pub fn write_series(series: &SweepSeries, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for pt in series.points() {
        w.serialize(SeriesRow { x: pt.x, p: pt.p })?;
    }
    if series.is_empty() {
        w.write_record(["x", "p"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_series(series: &SweepSeries, out_path: impl AsRef<Path>) -> Result<()> {
    let path = out_path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_series(series, file)
}

pub fn read_series(input: impl std::io::Read) -> Result<SweepSeries> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let rows: Vec<SeriesRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    SweepSeries::new(rows.into_iter().map(|r| (r.x, r.p)))
}

/// Loads a CSV series with header `x,p`.
pub fn load_series(path: impl AsRef<Path>) -> Result<SweepSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_series(file)
}

pub fn write_results(results: &[ProbeResult], format: Format, out: impl Write) -> Result<()> {
    match format {
        Format::Jsonl => {
            let mut out = BufWriter::new(out);
            for r in results {
                write_json_line(&mut out, r)?;
            }
            out.flush()?;
        }
        Format::Csv => write_summary_csv(&summarize(results), out)?,
    }
    Ok(())
}

/// Summary cells as CSV rows `bias, model_id, status`.
pub fn write_summary_csv(summary: &BatterySummary, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for cell in &summary.cells {
        w.serialize(cell)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_results(path: impl AsRef<Path>) -> Result<Vec<ProbeResult>> {
    read_json_lines(path.as_ref())
}

pub(crate) fn write_json_line<T: Serialize>(out: &mut impl Write, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Reads one record per non-blank line, skipping provenance headers.
fn read_json_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::file(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)?;
        if value.as_object().is_some_and(|o| o.len() == 1 && o.contains_key("provenance")) {
            continue;
        }
        out.push(serde_json::from_value(value)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapley::{exact_shapley, sampled_shapley, FnGame};

    fn game() -> FnGame<impl Fn(crate::coalition::CoalitionMask) -> f64 + Sync> {
        FnGame::new(3, |m: crate::coalition::CoalitionMask| {
            let k = m.size() as f64;
            0.1 + 0.7 * (k / 3.0).powi(2) + if m.contains(1) { 0.013_579 } else { 0.0 }
        })
    }

    #[test]
    fn attribution_round_trips_in_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        for a in [exact_shapley(&game()).unwrap(), sampled_shapley(&game(), 200, 3).unwrap()] {
            for name in ["a.csv", "a.jsonl"] {
                let path = dir.path().join(name);
                let prov = Provenance {
                    model_id: "m".into(),
                    system_prompt_sha256: "00".into(),
                    timestamp: 0,
                };
                save_attribution(&a, Some(&prov), &path).unwrap();
                assert_eq!(load_attribution(&path).unwrap(), a, "{name}");
            }
        }
    }

    #[test]
    fn series_round_trips() {
        let s = SweepSeries::new([(0, 0.1), (1, 1.0 / 3.0), (2, 1.58436296e-04)]).unwrap();
        let mut buf = Vec::new();
        write_series(&s, &mut buf).unwrap();
        assert!(buf.starts_with(b"x,p\n"));
        assert_eq!(read_series(buf.as_slice()).unwrap(), s);

        let empty = SweepSeries::new(Vec::<(i64, f64)>::new()).unwrap();
        let mut buf = Vec::new();
        write_series(&empty, &mut buf).unwrap();
        assert_eq!(buf, b"x,p\n");
        assert!(read_series(buf.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn attribution_csv_has_fixed_columns() {
        let mut buf = Vec::new();
        write_attribution(&exact_shapley(&game()).unwrap(), None, Format::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "player_ordinal,player_text,phi,standard_error,v_empty,v_full,method,seed,permutations,efficiency_residual"
        );
        assert_eq!(text.lines().count(), 4);
    }
}
