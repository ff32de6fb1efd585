//! Feature-transmission chains: select, order, assign, precode, transmit,
//! equalize, resort, score.
//!
//! Synthetic features are i.i.d. `N(0, 1/2)` reals, so each complex symbol
//! has unit power and the configured SNR is the per-symbol SNR. Errors are
//! measured against the selected block (masked rows count as zeros).

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::stats::Summary;
use super::{ChainPath, ExperimentConfig, MetricsRecord, Mode, NonTargetRx};
use crate::channel::{sample_rayleigh, send_pilots, ChannelRealization, NoiseSpec, PilotBlock};
use crate::cmatrix::{pinv, CMatrix, Complex};
use crate::error::{Error, Result};
use crate::estimation::{ls_estimate, mmse_estimate, refine, Estimator, IdentityRefiner};
use crate::mu_precoder::MuSystem;
use crate::rng::{stream, Purpose, SimRng};
use crate::scheduler::{
    from_symbols, mu_assignment, resort, select, su_assignment, to_symbols, Assignment,
    FeatureBlock, Permutation,
};
use crate::su_precoder::{scalar_mmse, SuPrecoder};

/// Unit-power symbols.
const SYMBOL_POWER: f64 = 1.0;

/// Fresh channel draws allowed when a multi-user draw is rank deficient.
const MAX_CHANNEL_DRAWS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    /// Mean over users of `Σ_b w_b |f_b - f^_b|² / (D Σ_b w_b)`.
    pub weighted_mse: f64,
    /// Mean over users of `Σ_b |f_b - f^_b|² / (B D)`.
    pub unweighted_mse: f64,
    /// `Σ |H - H^|²` over the whole channel; zero with perfect CSI.
    pub estimation_mse: f64,
    pub per_user_weighted_mse: Vec<f64>,
}

/// One feature block per user for trial `trial`. Importance values follow
/// the configured profile and are shuffled so that feature order carries
/// no information.
pub fn synthetic_features(cfg: &ExperimentConfig, trial: u64) -> Result<Vec<FeatureBlock>> {
    let mut frng = stream(cfg.seed, trial, Purpose::Features);
    let mut wrng = stream(cfg.seed, trial, Purpose::Importance);
    let (b, d) = (cfg.feature_count, cfg.feature_dim);
    let scale = (SYMBOL_POWER / 2.0).sqrt();
    (0..cfg.users)
        .map(|_| {
            let features: Vec<f64> = (0..b * d)
                .map(|_| scale * frng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut w = cfg.importance.weights(b);
            w.shuffle(&mut wrng);
            FeatureBlock::new(d, features, w)
        })
        .collect()
}

/// Channel state used by the transmitter and receivers.
struct Csi {
    h_hat: ChannelRealization,
    error: f64,
}

fn acquire_csi(
    cfg: &ExperimentConfig,
    h: &ChannelRealization,
    snr_db: f64,
    rng: &mut SimRng,
) -> Result<Csi> {
    if cfg.estimator == Estimator::Perfect {
        return Ok(Csi {
            h_hat: h.clone(),
            error: 0.0,
        });
    }
    let pilots = PilotBlock::orthogonal(cfg.n_tx, cfg.pilot_len())?;
    let noise = NoiseSpec::new(snr_db, SYMBOL_POWER);
    // one pilot round per user
    let mut blocks = Vec::with_capacity(h.users);
    for k in 0..h.users {
        let hk = ChannelRealization {
            entry_variance: h.entry_variance,
            ..ChannelRealization::single_user(h.user_block(k))
        };
        let yp = send_pilots(&hk, &pilots, &noise, rng)?;
        let est = match cfg.estimator {
            Estimator::Ls => ls_estimate(&yp, &pilots)?,
            Estimator::Mmse => mmse_estimate(&yp, &pilots, &noise, h.entry_variance)?,
            Estimator::Refined => refine(
                &mmse_estimate(&yp, &pilots, &noise, h.entry_variance)?,
                &IdentityRefiner,
            )?,
            Estimator::Perfect => unreachable!(),
        };
        blocks.push(est.h_hat);
    }
    let h_hat = CMatrix::vstack(&blocks.iter().collect::<Vec<_>>())?;
    let error = h.h.sub(&h_hat)?.frobenius_norm_sqr();
    Ok(Csi {
        h_hat: h.with_matrix(h_hat),
        error,
    })
}

/// Selection and ordering of one user's block.
struct Ordered {
    selected: FeatureBlock,
    perm: Permutation,
    sorted: FeatureBlock,
}

fn order_features(cfg: &ExperimentConfig, fb: &FeatureBlock, rng: &mut SimRng) -> Result<Ordered> {
    let selected = select(fb, cfg.mu_select)?;
    let perm = cfg.policy.order(&selected, rng);
    let sorted = perm.apply(&selected)?;
    Ok(Ordered {
        selected,
        perm,
        sorted,
    })
}

/// `rows x D/2` symbols for `user` in `slot`; rows without a feature stay zero.
fn slot_symbols(
    assignment: &Assignment,
    slot: usize,
    user: usize,
    rows: usize,
    sorted: &FeatureBlock,
) -> CMatrix {
    let cols = sorted.dim() / 2;
    let mut x = CMatrix::zeros(rows, cols);
    for (u, stream, b) in assignment.slot_members(slot) {
        if u == user && stream < rows {
            x.row_mut(stream)
                .copy_from_slice(&to_symbols(sorted.feature(b)));
        }
    }
    x
}

/// Writes stream estimates back into the sorted-order estimate block.
fn store_streams(
    assignment: &Assignment,
    slot: usize,
    user: usize,
    x_hat: &CMatrix,
    out: &mut FeatureBlock,
) {
    for (u, stream, b) in assignment.slot_members(slot) {
        if u == user && stream < x_hat.rows() {
            from_symbols(x_hat.row(stream), out.feature_mut(b));
        }
    }
}

fn zeroed(fb: &FeatureBlock) -> FeatureBlock {
    let mut z = fb.clone();
    for b in 0..z.len() {
        z.feature_mut(b).iter_mut().for_each(|x| *x = 0.0);
    }
    z
}

fn block_errors(reference: &FeatureBlock, estimate: &FeatureBlock) -> (f64, f64) {
    let d = reference.dim() as f64;
    let w = reference.importance();
    let mut weighted = 0.0;
    let mut plain = 0.0;
    for (b, &wb) in w.iter().enumerate() {
        let e: f64 = reference
            .feature(b)
            .iter()
            .zip(estimate.feature(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        weighted += wb * e;
        plain += e;
    }
    let plain = plain / (d * reference.len() as f64);
    let w_sum: f64 = w.iter().sum();
    let weighted = if w_sum > 0.0 {
        weighted / (d * w_sum)
    } else {
        plain
    };
    (weighted, plain)
}

/// Linear MMSE receive filter `G^H (G G^H + G_I G_I^H + σ² I)^+`.
fn lmmse_filter(g: &CMatrix, interference: Option<&CMatrix>, noise_var: f64) -> Result<CMatrix> {
    let mut c = g.matmul(&g.hermitian())?;
    if let Some(gi) = interference {
        c = c.add(&gi.matmul(&gi.hermitian())?)?;
    }
    for i in 0..c.rows() {
        c[(i, i)] += Complex::new(noise_var / SYMBOL_POWER, 0.0);
    }
    g.hermitian().matmul(&pinv(&c)?)
}

fn scalar_equalize(y_tilde: &CMatrix, gains: &[f64], streams: usize, noise_var: f64) -> CMatrix {
    CMatrix::from_fn(streams, y_tilde.cols(), |q, c| {
        if q < gains.len() && q < y_tilde.rows() {
            scalar_mmse(
                y_tilde[(q, c)],
                Complex::new(gains[q], 0.0),
                noise_var,
                SYMBOL_POWER,
            )
        } else {
            Complex::new(0.0, 0.0)
        }
    })
}

/// Every block of one trial: what was meant to arrive and what did.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    /// Per user, after selection, original order.
    pub sent: Vec<FeatureBlock>,
    /// Per user, after equalization and resort, original order.
    pub received: Vec<FeatureBlock>,
    pub outcome: TrialOutcome,
}

fn finish(
    ordered: Vec<Ordered>,
    estimates: Vec<FeatureBlock>,
    estimation_mse: f64,
) -> Result<ChainOutput> {
    let k = ordered.len() as f64;
    let mut per_user = Vec::with_capacity(ordered.len());
    let mut plain_sum = 0.0;
    let mut sent = Vec::with_capacity(ordered.len());
    let mut received = Vec::with_capacity(ordered.len());
    for (o, est) in ordered.into_iter().zip(estimates) {
        let restored = resort(&est, &o.perm)?;
        let (w, p) = block_errors(&o.selected, &restored);
        per_user.push(w);
        plain_sum += p;
        sent.push(o.selected);
        received.push(restored);
    }
    Ok(ChainOutput {
        sent,
        received,
        outcome: TrialOutcome {
            weighted_mse: per_user.iter().sum::<f64>() / k,
            unweighted_mse: plain_sum / k,
            estimation_mse,
            per_user_weighted_mse: per_user,
        },
    })
}

fn su_trial(cfg: &ExperimentConfig, snr_db: f64, trial: u64) -> Result<ChainOutput> {
    let mut crng = stream(cfg.seed, trial, Purpose::Channel);
    let mut prng = stream(cfg.seed, trial, Purpose::PilotNoise);
    let mut nrng = stream(cfg.seed, trial, Purpose::Noise);
    let mut srng = stream(cfg.seed, trial, Purpose::RandomSchedule);

    let h = sample_rayleigh(cfg.n_tx, cfg.m_rx, 1, cfg.convention, &mut crng)?;
    let csi = acquire_csi(cfg, &h, snr_db, &mut prng)?;
    let pre = SuPrecoder::from_matrix(&csi.h_hat.h)?;
    let noise = NoiseSpec::new(snr_db, SYMBOL_POWER);
    let noise_var = noise.variance();
    let decomposed = cfg.path == ChainPath::Decomposed && cfg.estimator == Estimator::Perfect;

    let fb = synthetic_features(cfg, trial)?.remove(0);
    let ordered = order_features(cfg, &fb, &mut srng)?;
    let assignment = su_assignment(cfg.feature_count, pre.q())?;
    let cols = cfg.feature_dim / 2;
    let mut est = zeroed(&ordered.sorted);

    for slot in 0..assignment.slots() {
        let x = slot_symbols(&assignment, slot, 0, cfg.n_tx, &ordered.sorted);
        let n = noise.sample(&mut nrng, cfg.m_rx, cols);
        let y_tilde = if decomposed {
            pre.subchannel_output(&x, &pre.equalize(&n)?)?
        } else {
            let y = h.h.matmul(&pre.precode(&x)?)?.add(&n)?;
            pre.equalize(&y)?
        };
        let x_hat = scalar_equalize(&y_tilde, pre.gains(), pre.q(), noise_var);
        store_streams(&assignment, slot, 0, &x_hat, &mut est);
    }
    finish(vec![ordered], vec![est], csi.error)
}

fn mu_trial(cfg: &ExperimentConfig, snr_db: f64, trial: u64) -> Result<ChainOutput> {
    let mut crng = stream(cfg.seed, trial, Purpose::Channel);
    let mut prng = stream(cfg.seed, trial, Purpose::PilotNoise);
    let mut nrng = stream(cfg.seed, trial, Purpose::Noise);
    let mut srng = stream(cfg.seed, trial, Purpose::RandomSchedule);
    let k_users = cfg.users;

    let mut draw = 0;
    let (h, csi, sys) = loop {
        let h = sample_rayleigh(cfg.n_tx, cfg.m_rx, k_users, cfg.convention, &mut crng)?;
        let csi = acquire_csi(cfg, &h, snr_db, &mut prng)?;
        match MuSystem::from_channel(&csi.h_hat) {
            Ok(sys) => break (h, csi, sys),
            Err(Error::DegenerateChannel { .. }) if draw + 1 < MAX_CHANNEL_DRAWS => draw += 1,
            Err(e) => return Err(e),
        }
    };
    let noise = NoiseSpec::new(snr_db, SYMBOL_POWER);
    let noise_var = noise.variance();
    let decomposed = cfg.path == ChainPath::Decomposed && cfg.estimator == Estimator::Perfect;
    let streams = sys.streams();
    let cols = cfg.feature_dim / 2;

    let blocks = synthetic_features(cfg, trial)?;
    let ordered = blocks
        .iter()
        .map(|fb| order_features(cfg, fb, &mut srng))
        .collect::<Result<Vec<_>>>()?;
    let assignment = mu_assignment(cfg.feature_count, cfg.n_tx, k_users)?;
    let mut est: Vec<FeatureBlock> = ordered.iter().map(|o| zeroed(&o.sorted)).collect();
    let h_true: Vec<CMatrix> = (0..k_users).map(|k| h.user_block(k)).collect();
    let h_est: Vec<CMatrix> = (0..k_users).map(|k| csi.h_hat.user_block(k)).collect();

    for slot in 0..assignment.slots() {
        let target = assignment.target(slot);
        let xs: Vec<CMatrix> = (0..k_users)
            .map(|u| slot_symbols(&assignment, slot, u, streams, &ordered[u].sorted))
            .collect();
        let x_tilde = sys.precode(target, &xs)?;
        let noises: Vec<CMatrix> = (0..k_users)
            .map(|_| noise.sample(&mut nrng, cfg.m_rx, cols))
            .collect();

        for u in 0..k_users {
            let u_hat = &sys.per_user[u].u;
            let n_tilde = sys.equalize(u, &noises[u])?;
            let x_hat = if u == target {
                let p = &sys.per_user[u];
                let y_tilde = if decomposed {
                    let mut y = n_tilde.clone();
                    for (q, &g) in p.stream_gains().iter().enumerate() {
                        for c in 0..cols {
                            y[(q, c)] += xs[u][(q, c)] * g;
                        }
                    }
                    y
                } else {
                    sys.equalize(u, &h_true[u].matmul(&x_tilde)?.add(&noises[u])?)?
                };
                scalar_equalize(&y_tilde, p.stream_gains(), streams, noise_var)
            } else {
                let own = sys.precoder_for(target, u);
                let others: Vec<&CMatrix> = (0..k_users)
                    .filter(|&v| v != u)
                    .map(|v| sys.precoder_for(target, v))
                    .collect();
                let superposed = cfg.non_target_rx == NonTargetRx::Superposed;
                let y_tilde = if decomposed {
                    let mut y = n_tilde.clone();
                    let rotated = u_hat.hermitian_matmul(&h_true[u])?;
                    y = y.add(&rotated.matmul(own)?.matmul(&xs[u])?)?;
                    if superposed {
                        for v in (0..k_users).filter(|&v| v != u) {
                            let pv = sys.precoder_for(target, v);
                            y = y.add(&rotated.matmul(pv)?.matmul(&xs[v])?)?;
                        }
                    }
                    y
                } else {
                    let sent = if superposed {
                        x_tilde.clone()
                    } else {
                        own.matmul(&xs[u])?
                    };
                    sys.equalize(u, &h_true[u].matmul(&sent)?.add(&noises[u])?)?
                };
                let rotated_est = u_hat.hermitian_matmul(&h_est[u])?;
                let g = rotated_est.matmul(own)?;
                let gi = if superposed {
                    Some(rotated_est.matmul(&CMatrix::hstack(&others)?)?)
                } else {
                    None
                };
                lmmse_filter(&g, gi.as_ref(), noise_var)?.matmul(&y_tilde)?
            };
            store_streams(&assignment, slot, u, &x_hat, &mut est[u]);
        }
    }
    finish(ordered, est, csi.error)
}

/// Runs trial `trial` of the configured chain at one SNR point and keeps
/// the sent and received blocks.
pub fn run_chain(cfg: &ExperimentConfig, snr_db: f64, trial: u64) -> Result<ChainOutput> {
    cfg.validate()?;
    match cfg.mode {
        Mode::Su => su_trial(cfg, snr_db, trial),
        Mode::Mu => mu_trial(cfg, snr_db, trial),
    }
}

/// Per-trial outcomes at one SNR point, in trial order.
pub fn run_trials(cfg: &ExperimentConfig, snr_db: f64) -> Result<Vec<TrialOutcome>> {
    cfg.validate()?;
    (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let out = match cfg.mode {
                Mode::Su => su_trial(cfg, snr_db, t),
                Mode::Mu => mu_trial(cfg, snr_db, t),
            };
            out.map(|o| o.outcome)
        })
        .collect()
}

fn record(
    cfg: &ExperimentConfig,
    experiment: &str,
    snr_db: f64,
    out: &[TrialOutcome],
) -> MetricsRecord {
    let col = |f: &dyn Fn(&TrialOutcome) -> f64| -> Vec<f64> { out.iter().map(f).collect() };
    let per_user = if cfg.mode == Mode::Mu {
        (0..cfg.users)
            .map(|k| Summary::from_samples(&col(&|o| o.per_user_weighted_mse[k])))
            .collect()
    } else {
        Vec::new()
    };
    MetricsRecord {
        policy: Some(cfg.policy),
        estimator: Some(cfg.estimator),
        weighted_mse: Some(Summary::from_samples(&col(&|o| o.weighted_mse))),
        unweighted_mse: Some(Summary::from_samples(&col(&|o| o.unweighted_mse))),
        estimation_mse: Some(Summary::from_samples(&col(&|o| o.estimation_mse))),
        per_user_weighted_mse: per_user,
        ..MetricsRecord::empty(experiment, cfg, snr_db)
    }
}

/// Full chain at every configured SNR.
pub fn run_end_to_end(cfg: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    cfg.snr_db_list
        .iter()
        .map(|&snr| Ok(record(cfg, "end-to-end", snr, &run_trials(cfg, snr)?)))
        .collect()
}

/// Full chain under every estimator (perfect, refined, mmse, ls) at every
/// SNR. Trials are paired across estimators.
pub fn run_estimation_sweep(cfg: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    let mut out = Vec::new();
    for &snr in &cfg.snr_db_list {
        for estimator in Estimator::ALL {
            let c = ExperimentConfig {
                estimator,
                ..cfg.clone()
            };
            out.push(record(&c, "estimation-sweep", snr, &run_trials(&c, snr)?));
        }
    }
    Ok(out)
}
