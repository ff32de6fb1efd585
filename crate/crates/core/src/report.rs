//! Result and feature-block files.
//!
//! Results CSV, one row per SNR point and metric:
//!
//! ```text
//! experiment,n_tx,m_rx,users,snr_db,policy,estimator,metric,index,mean,half_width,trials
//! ```
//!
//! `metric` is one of `equivalent_snr_db` (with a 1-based subchannel
//! `index`), `weighted_mse`, `unweighted_mse`, `estimation_mse`, or
//! `user_weighted_mse` (with a 1-based user `index`). Empty `policy`,
//! `estimator` and `index` fields mean "not applicable". Floats are printed
//! in shortest round-trip form so files are byte-stable across runs. The
//! JSON file carries the same records with nested structure.
//!
//! Feature-block CSV: `feature_index,importance,d_1,...,d_D`, one row per
//! feature, `feature_index` 0-based and in order.
//!
//! Reference equivalent-SNR CSV (calibration input):
//! `n_tx,m_rx,snr_db,subchannel,value`, subchannels 1-based and contiguous
//! within each `(n_tx, m_rx, snr_db)` group.
//!
//! Calibration CSV, one row per candidate pair and reference entry, best
//! pair first:
//! `convention,averaging,max_deviation_db,n_tx,m_rx,snr_db,subchannel,reference_db,predicted_db`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::Convention;
use crate::error::{Error, Result};
use crate::estimation::Estimator;
use crate::harness::{Averaging, MetricsRecord, PairDeviation, ReferenceRow, Summary};
use crate::scheduler::{FeatureBlock, SchedulerPolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub experiment: String,
    pub n_tx: usize,
    pub m_rx: usize,
    pub users: usize,
    pub snr_db: f64,
    pub policy: Option<SchedulerPolicy>,
    pub estimator: Option<Estimator>,
    pub metric: String,
    pub index: Option<usize>,
    pub mean: f64,
    pub half_width: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub records: Vec<MetricsRecord>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("{kind:?}"),
        },
    }
}

/// Flattens records into CSV rows in a fixed metric order.
pub fn csv_rows(records: &[MetricsRecord]) -> Vec<CsvRow> {
    let mut out = Vec::new();
    for r in records {
        let row = |metric: &str, index: Option<usize>, s: &Summary| CsvRow {
            experiment: r.experiment.clone(),
            n_tx: r.n_tx,
            m_rx: r.m_rx,
            users: r.users,
            snr_db: r.snr_db,
            policy: r.policy,
            estimator: r.estimator,
            metric: metric.to_string(),
            index,
            mean: s.mean,
            half_width: s.half_width,
            trials: r.trials,
        };
        for (q, s) in r.subchannel_snr_db.iter().enumerate() {
            out.push(row("equivalent_snr_db", Some(q + 1), s));
        }
        for (name, s) in [
            ("weighted_mse", &r.weighted_mse),
            ("unweighted_mse", &r.unweighted_mse),
            ("estimation_mse", &r.estimation_mse),
        ] {
            if let Some(s) = s {
                out.push(row(name, None, s));
            }
        }
        for (k, s) in r.per_user_weighted_mse.iter().enumerate() {
            out.push(row("user_weighted_mse", Some(k + 1), s));
        }
    }
    out
}

pub fn write_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in csv_rows(records) {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<CsvRow>, _>>()
        .map_err(|e| csv_err(path, e))
}

fn check_finite(records: &[MetricsRecord]) -> Result<()> {
    if csv_rows(records)
        .iter()
        .any(|r| !(r.snr_db.is_finite() && r.mean.is_finite() && r.half_width.is_finite()))
    {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// JSON mirror. Non-finite values have no JSON form and are rejected.
pub fn write_json(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    check_finite(records)?;
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let doc = ResultsFile {
        records: records.to_vec(),
    };
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let doc: ResultsFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })?;
    Ok(doc.records)
}

/// Plot-friendly equivalent-SNR table: `snr_db,sigma_1,...,sigma_Q`.
pub fn write_snr_table(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let q = records
        .iter()
        .map(|r| r.subchannel_snr_db.len())
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["snr_db".to_string()];
    header.extend((1..=q).map(|i| format!("sigma_{i}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in records {
        let mut row = vec![r.snr_db.to_string()];
        row.extend(r.subchannel_snr_db.iter().map(|s| s.mean.to_string()));
        row.resize(q + 1, String::new());
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_feature_block(path: &Path, fb: &FeatureBlock) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["feature_index".to_string(), "importance".to_string()];
    header.extend((1..=fb.dim()).map(|i| format!("d_{i}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for b in 0..fb.len() {
        let mut row = vec![b.to_string(), fb.importance()[b].to_string()];
        row.extend(fb.feature(b).iter().map(f64::to_string));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_feature_block(path: &Path) -> Result<FeatureBlock> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() < 4 || &header[0] != "feature_index" || &header[1] != "importance" {
        return Err(parse_err(
            1,
            "expected header feature_index,importance,d_1,...".into(),
        ));
    }
    let dim = header.len() - 2;
    for (i, name) in header.iter().skip(2).enumerate() {
        if name != format!("d_{}", i + 1) {
            return Err(parse_err(
                1,
                format!("column {} should be d_{}, got `{name}`", i + 3, i + 1),
            ));
        }
    }
    let mut features = Vec::new();
    let mut importance = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = row + 2;
        let idx: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("bad feature_index `{}`", &rec[0])))?;
        if idx != row {
            return Err(parse_err(
                line,
                format!("feature_index {idx} out of order, expected {row}"),
            ));
        }
        let mut vals = rec.iter().skip(1).map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("`{v}` is not a number")))
        });
        importance.push(vals.next().expect("importance column present")?);
        for v in vals {
            features.push(v?);
        }
    }
    FeatureBlock::new(dim, features, importance)
}

#[derive(Serialize, Deserialize)]
struct ReferenceEntry {
    n_tx: usize,
    m_rx: usize,
    snr_db: f64,
    subchannel: usize,
    value: f64,
}

pub fn write_reference(path: &Path, rows: &[ReferenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        for (q, &value) in row.values.iter().enumerate() {
            w.serialize(ReferenceEntry {
                n_tx: row.n_tx,
                m_rx: row.m_rx,
                snr_db: row.snr_db,
                subchannel: q + 1,
                value,
            })
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn read_reference(path: &Path) -> Result<Vec<ReferenceRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows: Vec<ReferenceRow> = Vec::new();
    for (i, entry) in r.deserialize::<ReferenceEntry>().enumerate() {
        let e = entry.map_err(|e| csv_err(path, e))?;
        let same = rows
            .last()
            .is_some_and(|l| (l.n_tx, l.m_rx, l.snr_db) == (e.n_tx, e.m_rx, e.snr_db));
        if !same {
            rows.push(ReferenceRow {
                n_tx: e.n_tx,
                m_rx: e.m_rx,
                snr_db: e.snr_db,
                values: Vec::new(),
            });
        }
        let row = rows.last_mut().expect("row pushed above");
        if e.subchannel != row.values.len() + 1 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                reason: format!(
                    "subchannel {} out of order, expected {}",
                    e.subchannel,
                    row.values.len() + 1
                ),
            });
        }
        row.values.push(e.value);
    }
    Ok(rows)
}

#[derive(Serialize)]
struct CalibrationEntry {
    convention: Convention,
    averaging: Averaging,
    max_deviation_db: f64,
    n_tx: usize,
    m_rx: usize,
    snr_db: f64,
    subchannel: usize,
    reference_db: f64,
    predicted_db: f64,
}

pub fn write_calibration(
    path: &Path,
    reference: &[ReferenceRow],
    candidates: &[PairDeviation],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for c in candidates {
        for (row, predicted) in reference.iter().zip(&c.predicted) {
            for (q, (&want, &got)) in row.values.iter().zip(predicted).enumerate() {
                w.serialize(CalibrationEntry {
                    convention: c.convention,
                    averaging: c.averaging,
                    max_deviation_db: c.max_deviation,
                    n_tx: row.n_tx,
                    m_rx: row.m_rx,
                    snr_db: row.snr_db,
                    subchannel: q + 1,
                    reference_db: want,
                    predicted_db: got,
                })
                .map_err(|e| csv_err(path, e))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_end_to_end, run_equivalent_snr_table, ExperimentConfig};

    fn records() -> Vec<MetricsRecord> {
        let mut cfg = ExperimentConfig {
            trials: 30,
            snr_db_list: vec![-8.0, 2.5],
            feature_count: 16,
            ..ExperimentConfig::mu(4, 2, 2)
        };
        let mut r = run_equivalent_snr_table(&cfg).unwrap();
        cfg.trials = 5;
        r.extend(run_end_to_end(&cfg).unwrap());
        r
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let recs = records();
        write_csv(&p, &recs).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "experiment,n_tx,m_rx,users,snr_db,policy,estimator,metric,index,mean,half_width,trials"
        );
        // 2 snr-table rows x 2 streams, 2 end-to-end rows x (3 scalar + 2 users)
        assert_eq!(lines.count(), 4 + 10);
        assert!(text.contains("end-to-end,4,2,2,2.5,importance,perfect,weighted_mse,,"));
    }

    #[test]
    fn json_mirror_equals_csv() {
        let dir = tempfile::tempdir().unwrap();
        let (c, j) = (dir.path().join("r.csv"), dir.path().join("r.json"));
        let recs = records();
        write_csv(&c, &recs).unwrap();
        write_json(&j, &recs).unwrap();
        let from_json = read_json(&j).unwrap();
        assert_eq!(from_json, recs);
        assert_eq!(csv_rows(&from_json), read_csv(&c).unwrap());
    }

    #[test]
    fn json_rejects_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let mut recs = records();
        recs[0].snr_db = f64::INFINITY;
        assert!(matches!(
            write_json(&dir.path().join("x.json"), &recs),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn wide_snr_table() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let cfg = ExperimentConfig {
            trials: 10,
            ..ExperimentConfig::su(4, 4)
        };
        write_snr_table(&p, &run_equivalent_snr_table(&cfg).unwrap()).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "snr_db,sigma_1,sigma_2,sigma_3,sigma_4");
    }

    #[test]
    fn reference_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ref.csv");
        let rows = crate::harness::reference_rows();
        write_reference(&p, &rows).unwrap();
        assert_eq!(read_reference(&p).unwrap(), rows);
        std::fs::write(&p, "n_tx,m_rx,snr_db,subchannel,value\n2,2,-8,2,-6.8\n").unwrap();
        assert!(matches!(
            read_reference(&p),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn calibration_lists_every_pair_and_entry() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cal.csv");
        let rows: Vec<ReferenceRow> = crate::harness::reference_rows()
            .into_iter()
            .take(2)
            .collect();
        let cands = crate::harness::evaluate_conventions(&rows, 20, 1).unwrap();
        write_calibration(&p, &rows, &cands).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "convention,averaging,max_deviation_db,n_tx,m_rx,snr_db,subchannel,reference_db,predicted_db"
        );
        assert_eq!(lines.count(), cands.len() * 6);
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with(&format!("{},{}", cands[0].convention, cands[0].averaging)));
    }

    #[test]
    fn feature_block_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let fb = FeatureBlock::new(
            4,
            (0..12).map(|i| i as f64 / 7.0 - 0.3).collect(),
            vec![0.1, 1e-17, 3.0],
        )
        .unwrap();
        write_feature_block(&p, &fb).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        for line in text.lines() {
            assert_eq!(line.split(',').count(), fb.dim() + 2);
        }
        assert_eq!(read_feature_block(&p).unwrap(), fb);
    }

    #[test]
    fn feature_block_errors_carry_path_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "feature_index,importance,d_1,d_2\n0,1,2,3\n1,x,2,3\n").unwrap();
        match read_feature_block(&p) {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(path, p);
            }
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "feature_index,importance,d_1,d_2\n1,1,2,3\n").unwrap();
        assert!(matches!(
            read_feature_block(&p),
            Err(Error::Parse { line: 2, .. })
        ));
        let missing = dir.path().join("none.csv");
        assert!(matches!(
            read_feature_block(&missing),
            Err(Error::Io { .. })
        ));
        assert!(matches!(
            write_csv(&dir.path().join("no/dir.csv"), &[]),
            Err(Error::Io { .. })
        ));
    }
}
