//! `records.csv`, `summary.json` and `curves/<variant>_<source>.csv`.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! re-reading a CSV reproduces every value bit for bit; undefined values are
//! `NaN`, sentinels `inf`/`-inf`. In JSON, non-finite means become `null`
//! and are accounted for by the count fields.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::mean_std;
use super::EvalRecord;
use crate::error::{Error, Result};
use crate::metrics::CAP_DB;

const FIXED_COLUMNS: [&str; 9] = [
    "track_id",
    "segment",
    "source",
    "gain_db",
    "variant",
    "min_sdr",
    "snr",
    "sd_sdr",
    "ld_manipulated",
];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// Writes one row per record; per-source LD columns are named `ld_<label>`.
pub fn write_records_csv(path: impl AsRef<Path>, records: &[EvalRecord], labels: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(labels.iter().map(|l| format!("ld_{l}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in records {
        if r.ld.len() != labels.len() {
            return Err(Error::invalid(format!("record has {} LD values for {} labels", r.ld.len(), labels.len())));
        }
        let mut row = vec![
            r.track_id.clone(),
            r.segment.to_string(),
            r.source.map(|s| s.to_string()).unwrap_or_default(),
            r.gain_db.to_string(),
            r.variant.clone(),
            r.min_sdr.to_string(),
            r.snr.to_string(),
            r.sd_sdr.to_string(),
            r.ld_manipulated.to_string(),
        ];
        row.extend(r.ld.iter().map(f64::to_string));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = row.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| Error::Format(format!("records line {line}: cannot parse {raw:?} in column {}", i + 1)))
}

/// Parses a file written by [`write_records_csv`]; returns the records and the source labels.
pub fn read_records_csv(path: impl AsRef<Path>) -> Result<(Vec<EvalRecord>, Vec<String>)> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let ok_prefix = header.iter().zip(FIXED_COLUMNS).all(|(a, b)| a == b);
    if !ok_prefix || header.len() < FIXED_COLUMNS.len() {
        return Err(Error::Format(format!("{}: unexpected header", path.display())));
    }
    let labels: Vec<String> = header
        .iter()
        .skip(FIXED_COLUMNS.len())
        .map(|h| h.strip_prefix("ld_").unwrap_or(h).to_string())
        .collect();
    let mut out = Vec::new();
    for (n, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = n + 2;
        let source = match row.get(2).unwrap_or("") {
            "" => None,
            _ => Some(field(&row, 2, line)?),
        };
        let ld = (FIXED_COLUMNS.len()..header.len())
            .map(|i| field(&row, i, line))
            .collect::<Result<Vec<f64>>>()?;
        out.push(EvalRecord {
            track_id: row.get(0).unwrap_or("").to_string(),
            segment: field(&row, 1, line)?,
            source,
            gain_db: field(&row, 3, line)?,
            variant: row.get(4).unwrap_or("").to_string(),
            min_sdr: field(&row, 5, line)?,
            snr: field(&row, 6, line)?,
            sd_sdr: field(&row, 7, line)?,
            ld_manipulated: field(&row, 8, line)?,
            ld,
        });
    }
    Ok((out, labels))
}

/// Statistics of one variant × manipulated source × gain cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub variant: String,
    /// Manipulated source label; `null` for the shared 0 dB point.
    pub source: Option<String>,
    pub gain_db: f64,
    pub count: usize,
    pub min_sdr_mean: f64,
    pub min_sdr_std: f64,
    pub snr_mean: f64,
    pub sd_sdr_mean: f64,
    pub ld_mean: f64,
    pub ld_std: f64,
    /// Records whose minSDR sits at the cap.
    pub cap_count: usize,
    pub neg_inf_count: usize,
    pub nan_count: usize,
}

/// Uniform average over every record of a variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub count: usize,
    pub min_sdr_mean: f64,
    pub min_sdr_std: f64,
    pub ld_mean: f64,
    pub ld_std: f64,
    pub cap_count: usize,
    pub neg_inf_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub labels: Vec<String>,
    pub variants: Vec<VariantSummary>,
    pub groups: Vec<GroupSummary>,
}

fn count(values: &[f64], pred: impl Fn(f64) -> bool) -> usize {
    values.iter().filter(|v| pred(**v)).count()
}

fn group(variant: &str, source: Option<String>, gain_db: f64, recs: &[&EvalRecord]) -> GroupSummary {
    let min_sdr: Vec<f64> = recs.iter().map(|r| r.min_sdr).collect();
    let ld: Vec<f64> = recs.iter().map(|r| r.ld_manipulated).collect();
    let (min_sdr_mean, min_sdr_std) = mean_std(&min_sdr);
    let (ld_mean, ld_std) = mean_std(&ld);
    GroupSummary {
        variant: variant.to_string(),
        source,
        gain_db,
        count: recs.len(),
        min_sdr_mean,
        min_sdr_std,
        snr_mean: mean_std(&recs.iter().map(|r| r.snr).collect::<Vec<_>>()).0,
        sd_sdr_mean: mean_std(&recs.iter().map(|r| r.sd_sdr).collect::<Vec<_>>()).0,
        ld_mean,
        ld_std,
        cap_count: count(&min_sdr, |v| v >= CAP_DB),
        neg_inf_count: count(&min_sdr, |v| v == f64::NEG_INFINITY),
        nan_count: count(&min_sdr, f64::is_nan),
    }
}

/// Groups records by variant, manipulated source and gain.
pub fn summarize(records: &[EvalRecord], labels: &[String]) -> Summary {
    let mut by_variant: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        by_variant.entry(&r.variant).or_default().push(r);
    }
    let mut variants = Vec::new();
    let mut groups = Vec::new();
    for (variant, recs) in &by_variant {
        let min_sdr: Vec<f64> = recs.iter().map(|r| r.min_sdr).collect();
        let ld: Vec<f64> = recs.iter().map(|r| r.ld_manipulated).collect();
        let (min_sdr_mean, min_sdr_std) = mean_std(&min_sdr);
        let (ld_mean, ld_std) = mean_std(&ld);
        variants.push(VariantSummary {
            variant: variant.to_string(),
            count: recs.len(),
            min_sdr_mean,
            min_sdr_std,
            ld_mean,
            ld_std,
            cap_count: count(&min_sdr, |v| v >= CAP_DB),
            neg_inf_count: count(&min_sdr, |v| v == f64::NEG_INFINITY),
        });
        let mut cells: BTreeMap<(Option<usize>, i64), Vec<&EvalRecord>> = BTreeMap::new();
        for r in recs {
            // gains are multiples of a millibel at most; the key only orders and groups
            cells.entry((r.source, (r.gain_db * 1000.0).round() as i64)).or_default().push(r);
        }
        for ((source, _), cell) in cells {
            let label = source.map(|s| labels.get(s).cloned().unwrap_or_else(|| s.to_string()));
            groups.push(group(variant, label, cell[0].gain_db, &cell));
        }
    }
    Summary {
        labels: labels.to_vec(),
        variants,
        groups,
    }
}

/// One point of a knob curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub gain_db: f64,
    pub count: usize,
    pub min_sdr_mean: f64,
    pub min_sdr_std: f64,
    pub ld_mean: f64,
    pub ld_std: f64,
}

/// Curve of `source` for `variant`: the source's own sweep points plus the
/// shared 0 dB point, where that source's LD is used.
pub fn curve(records: &[EvalRecord], variant: &str, source: usize) -> Vec<CurveRow> {
    let mut cells: BTreeMap<i64, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.variant == variant) {
        let ld = match r.source {
            Some(s) if s == source => r.ld_manipulated,
            None => r.ld.get(source).copied().unwrap_or(f64::NAN),
            Some(_) => continue,
        };
        let cell = cells
            .entry((r.gain_db * 1000.0).round() as i64)
            .or_insert_with(|| (r.gain_db, Vec::new(), Vec::new()));
        cell.1.push(r.min_sdr);
        cell.2.push(ld);
    }
    cells
        .into_values()
        .map(|(gain_db, m, l)| {
            let (min_sdr_mean, min_sdr_std) = mean_std(&m);
            let (ld_mean, ld_std) = mean_std(&l);
            CurveRow {
                gain_db,
                count: m.len(),
                min_sdr_mean,
                min_sdr_std,
                ld_mean,
                ld_std,
            }
        })
        .collect()
}

/// Writes `<dir>/<variant>_<label>.csv` for every variant and source.
pub fn write_curves(dir: impl AsRef<Path>, records: &[EvalRecord], labels: &[String]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut variants: Vec<&str> = records.iter().map(|r| r.variant.as_str()).collect();
    variants.sort_unstable();
    variants.dedup();
    for variant in variants {
        for (k, label) in labels.iter().enumerate() {
            let path = dir.join(format!("{variant}_{label}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
            for row in curve(records, variant, k) {
                w.serialize(row).map_err(|e| csv_err(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

/// Writes the full report into `out_dir` and returns the summary.
pub fn write_report(out_dir: impl AsRef<Path>, records: &[EvalRecord], labels: &[String]) -> Result<Summary> {
    let out_dir = out_dir.as_ref();
    if records.is_empty() {
        return Err(Error::invalid("no records to report"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_records_csv(out_dir.join("records.csv"), records, labels)?;
    let summary = summarize(records, labels);
    let path = out_dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    write_curves(out_dir.join("curves"), records, labels)?;
    Ok(summary)
}
