//! Equivalent-SNR tables and the normalization calibration.

use rayon::prelude::*;

use super::stats::Summary;
use super::{Averaging, ExperimentConfig, MetricsRecord, Mode};
use crate::channel::{sample_rayleigh, Convention};
use crate::cmatrix::singular_values;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Calibration fails when no pair gets every entry within this many dB.
pub const CALIBRATION_LIMIT_DB: f64 = 1.0;

/// Published mean equivalent SNRs (dB) of one `N x M` link.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceRow {
    pub n_tx: usize,
    pub m_rx: usize,
    pub snr_db: f64,
    pub values: Vec<f64>,
}

/// Reference equivalent SNRs at a true SNR of -8 dB for square links.
pub fn reference_rows() -> Vec<ReferenceRow> {
    let row = |n: usize, values: &[f64]| ReferenceRow {
        n_tx: n,
        m_rx: n,
        snr_db: -8.0,
        values: values.to_vec(),
    };
    vec![
        row(2, &[-6.8, -19.6]),
        row(4, &[-4.4, -8.0, -13.1, -24.6]),
        row(8, &[-3.4, -5.1, -6.9, -8.8, -11.2, -14.3, -19.0, -29.3]),
        row(
            16,
            &[
                -2.8, -3.8, -4.6, -5.5, -6.4, -7.3, -8.3, -9.3, -10.5, -11.8, -13.3, -15.1, -17.3,
                -20.2, -24.7, -33.8,
            ],
        ),
    ]
}

/// Per-trial stream gains, one vector per (trial, user), trial-major.
fn gain_samples(cfg: &ExperimentConfig, convention: Convention) -> Result<Vec<Vec<f64>>> {
    let per_trial = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(cfg.seed, t, Purpose::Channel);
            let h = sample_rayleigh(cfg.n_tx, cfg.m_rx, cfg.users, convention, &mut rng)?;
            match cfg.mode {
                Mode::Su => Ok(vec![singular_values(&h.h)?]),
                Mode::Mu => {
                    let keep = cfg.m_rx.min(cfg.n_tx / cfg.users);
                    (0..cfg.users)
                        .map(|k| {
                            let mut s = singular_values(&h.user_block(k))?;
                            s.truncate(keep);
                            Ok(s)
                        })
                        .collect::<Result<Vec<_>>>()
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

fn summarize_subchannels(gains: &[Vec<f64>], snr_db: f64, averaging: Averaging) -> Vec<Summary> {
    let q = gains.first().map_or(0, Vec::len);
    (0..q)
        .map(|i| match averaging {
            Averaging::DbDomain => {
                let v: Vec<f64> = gains.iter().map(|g| snr_db + 20.0 * g[i].log10()).collect();
                Summary::from_samples(&v)
            }
            Averaging::LinearDomain => {
                let sigma = 10f64.powf(snr_db / 10.0);
                let v: Vec<f64> = gains.iter().map(|g| g[i] * g[i] * sigma).collect();
                let lin = Summary::from_samples(&v);
                Summary {
                    mean: 10.0 * lin.mean.log10(),
                    half_width: 10.0 / std::f64::consts::LN_10 * lin.half_width / lin.mean,
                }
            }
        })
        .collect()
}

/// Mean per-subchannel equivalent SNR for every SNR in the config, under
/// its channel convention and averaging. MU mode pools all users.
pub fn run_equivalent_snr_table(cfg: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let gains = gain_samples(cfg, cfg.convention)?;
    Ok(cfg
        .snr_db_list
        .iter()
        .map(|&snr| MetricsRecord {
            subchannel_snr_db: summarize_subchannels(&gains, snr, cfg.averaging),
            ..MetricsRecord::empty("snr-table", cfg, snr)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairDeviation {
    pub convention: Convention,
    pub averaging: Averaging,
    /// Largest `|predicted - reference|` over every entry of every row.
    pub max_deviation: f64,
    /// Predicted means, aligned with the reference rows.
    pub predicted: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationResult {
    pub convention: Convention,
    pub averaging: Averaging,
    pub max_deviation: f64,
    /// All pairs, best first.
    pub candidates: Vec<PairDeviation>,
    pub report: String,
}

impl CalibrationResult {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        cfg.convention = self.convention;
        cfg.averaging = self.averaging;
    }
}

/// Scores every `(convention, averaging)` pair against `reference`, best
/// first. Channels are drawn once at unit variance and rescaled.
pub fn evaluate_conventions(
    reference: &[ReferenceRow],
    trials: usize,
    seed: u64,
) -> Result<Vec<PairDeviation>> {
    if reference.is_empty() {
        return Err(Error::config("reference", "no reference rows given"));
    }
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    // per row: mean of 10 log10(g^2) and mean of g^2 per subchannel at unit variance
    let mut moments = Vec::with_capacity(reference.len());
    for row in reference {
        let q = row.n_tx.min(row.m_rx);
        if row.values.len() != q {
            return Err(Error::config(
                "reference",
                format!(
                    "{}x{} row has {} values, expected {q}",
                    row.n_tx,
                    row.m_rx,
                    row.values.len()
                ),
            ));
        }
        let cfg = ExperimentConfig {
            trials,
            seed,
            ..ExperimentConfig::su(row.n_tx, row.m_rx)
        };
        let gains = gain_samples(&cfg, Convention::Unit)?;
        let n = gains.len() as f64;
        let log_mean: Vec<f64> = (0..q)
            .map(|i| gains.iter().map(|g| 20.0 * g[i].log10()).sum::<f64>() / n)
            .collect();
        let pow_mean: Vec<f64> = (0..q)
            .map(|i| gains.iter().map(|g| g[i] * g[i]).sum::<f64>() / n)
            .collect();
        moments.push((log_mean, pow_mean));
    }

    let mut out = Vec::new();
    for convention in Convention::ALL {
        for averaging in Averaging::ALL {
            let mut max_deviation = 0.0f64;
            let mut predicted = Vec::with_capacity(reference.len());
            for (row, (log_mean, pow_mean)) in reference.iter().zip(&moments) {
                let offset = 10.0 * convention.entry_variance(row.n_tx).log10();
                let pred: Vec<f64> = match averaging {
                    Averaging::DbDomain => {
                        log_mean.iter().map(|l| row.snr_db + offset + l).collect()
                    }
                    Averaging::LinearDomain => pow_mean
                        .iter()
                        .map(|p| row.snr_db + offset + 10.0 * p.log10())
                        .collect(),
                };
                for (p, r) in pred.iter().zip(&row.values) {
                    max_deviation = max_deviation.max((p - r).abs());
                }
                predicted.push(pred);
            }
            out.push(PairDeviation {
                convention,
                averaging,
                max_deviation,
                predicted,
            });
        }
    }
    out.sort_by(|a, b| a.max_deviation.total_cmp(&b.max_deviation));
    Ok(out)
}

fn deviation_report(reference: &[ReferenceRow], candidates: &[PairDeviation]) -> String {
    let mut s = String::new();
    for c in candidates {
        s.push_str(&format!(
            "{} / {}: max deviation {:.3} dB\n",
            c.convention, c.averaging, c.max_deviation
        ));
        for (row, pred) in reference.iter().zip(&c.predicted) {
            let devs: Vec<String> = pred
                .iter()
                .zip(&row.values)
                .map(|(p, r)| format!("{:+.2}", p - r))
                .collect();
            s.push_str(&format!(
                "  {}x{}: [{}]\n",
                row.n_tx,
                row.m_rx,
                devs.join(", ")
            ));
        }
    }
    s
}

/// Picks the `(convention, averaging)` pair closest to `reference` in the
/// max-abs sense. Fails with the full deviation report when even the best
/// pair misses some entry by more than [`CALIBRATION_LIMIT_DB`].
pub fn calibrate_convention(
    reference: &[ReferenceRow],
    trials: usize,
    seed: u64,
) -> Result<CalibrationResult> {
    let candidates = evaluate_conventions(reference, trials, seed)?;
    choose_convention(reference, &candidates)
}

/// The selection step of [`calibrate_convention`] on already scored pairs
/// (best first, as returned by [`evaluate_conventions`]).
pub fn choose_convention(
    reference: &[ReferenceRow],
    candidates: &[PairDeviation],
) -> Result<CalibrationResult> {
    if candidates.is_empty() {
        return Err(Error::config(
            "reference",
            "no candidate pairs to choose from",
        ));
    }
    let report = deviation_report(reference, candidates);
    let best = &candidates[0];
    if best.max_deviation > CALIBRATION_LIMIT_DB {
        return Err(Error::Calibration {
            best_deviation: best.max_deviation,
            report,
        });
    }
    Ok(CalibrationResult {
        convention: best.convention,
        averaging: best.averaging,
        max_deviation: best.max_deviation,
        candidates: candidates.to_vec(),
        report,
    })
}
