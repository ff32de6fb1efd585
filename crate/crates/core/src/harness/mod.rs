//! Monte Carlo experiments.
//!
//! Every trial draws from streams keyed by `(seed, trial, purpose)`, trials
//! run on a rayon pool and results are collected in trial order before any
//! reduction. Output is therefore independent of the worker count, and two
//! runs that differ only in policy or estimator see the same channels,
//! features and noise (paired trials).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{validate_dims, Convention};
use crate::error::{Error, Result};
use crate::estimation::Estimator;
use crate::scheduler::SchedulerPolicy;

mod end_to_end;
mod snr_table;
mod stats;

pub use end_to_end::{
    run_chain, run_end_to_end, run_estimation_sweep, run_trials, synthetic_features, ChainOutput,
    TrialOutcome,
};
pub use snr_table::{
    calibrate_convention, choose_convention, evaluate_conventions, reference_rows,
    run_equivalent_snr_table, CalibrationResult, PairDeviation, ReferenceRow, CALIBRATION_LIMIT_DB,
};
pub use stats::{paired_one_sided, PairedTest, Summary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Su,
    Mu,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Su => "su",
            Mode::Mu => "mu",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "su" => Ok(Mode::Su),
            "mu" => Ok(Mode::Mu),
            other => Err(Error::config(
                "mode",
                format!("unknown `{other}` (expected su | mu)"),
            )),
        }
    }
}

/// How per-subchannel equivalent SNRs are averaged over trials.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// Mean of the dB values.
    DbDomain,
    /// dB of the mean linear SNR.
    LinearDomain,
}

impl Averaging {
    pub const ALL: [Averaging; 2] = [Averaging::DbDomain, Averaging::LinearDomain];

    pub fn name(self) -> &'static str {
        match self {
            Averaging::DbDomain => "db-domain",
            Averaging::LinearDomain => "linear-domain",
        }
    }
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "db" | "db-domain" | "db_domain" => Ok(Averaging::DbDomain),
            "linear" | "linear-domain" | "linear_domain" => Ok(Averaging::LinearDomain),
            other => Err(Error::config(
                "averaging",
                format!("unknown `{other}` (expected db-domain | linear-domain)"),
            )),
        }
    }
}

/// Shape of the synthetic importance vector before it is shuffled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ImportanceProfile {
    /// `w_b = exp(-decay * b / B)`.
    Exponential {
        decay: f64,
    },
    Uniform,
    /// The top `fraction` of features get weight 1, the rest `low`.
    Step {
        fraction: f64,
        low: f64,
    },
}

impl Default for ImportanceProfile {
    fn default() -> Self {
        ImportanceProfile::Exponential { decay: 5.0 }
    }
}

impl ImportanceProfile {
    pub fn weights(&self, b: usize) -> Vec<f64> {
        match *self {
            ImportanceProfile::Exponential { decay } => (0..b)
                .map(|i| (-decay * i as f64 / b as f64).exp())
                .collect(),
            ImportanceProfile::Uniform => vec![1.0; b],
            ImportanceProfile::Step { fraction, low } => {
                let high = (fraction * b as f64).round() as usize;
                (0..b).map(|i| if i < high { 1.0 } else { low }).collect()
            }
        }
    }
}

impl fmt::Display for ImportanceProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImportanceProfile::Exponential { decay } => write!(f, "exponential:{decay}"),
            ImportanceProfile::Uniform => f.write_str("uniform"),
            ImportanceProfile::Step { fraction, low } => write!(f, "step:{fraction}:{low}"),
        }
    }
}

impl FromStr for ImportanceProfile {
    type Err = Error;

    /// `exponential[:decay]`, `uniform` or `step[:fraction[:low]]`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let args = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| Error::config("importance", format!("`{p}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        let arg = |i: usize, default: f64| args.get(i).copied().unwrap_or(default);
        let profile = match kind {
            "exponential" if args.len() <= 1 => ImportanceProfile::Exponential { decay: arg(0, 5.0) },
            "uniform" if args.is_empty() => ImportanceProfile::Uniform,
            "step" if args.len() <= 2 => ImportanceProfile::Step {
                fraction: arg(0, 0.3),
                low: arg(1, 0.1),
            },
            _ => {
                return Err(Error::config(
                    "importance",
                    format!("unknown `{s}` (expected exponential[:decay] | uniform | step[:fraction[:low]])"),
                ))
            }
        };
        Ok(profile)
    }
}

/// How the received signal is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainPath {
    /// After rotation, each stream is its gain times the symbol plus rotated noise.
    Decomposed,
    /// Precode, multiply by the channel, add noise, then rotate.
    FullMatrix,
}

impl ChainPath {
    pub fn name(self) -> &'static str {
        match self {
            ChainPath::Decomposed => "decomposed",
            ChainPath::FullMatrix => "full-matrix",
        }
    }
}

impl FromStr for ChainPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decomposed" => Ok(ChainPath::Decomposed),
            "full-matrix" | "full" => Ok(ChainPath::FullMatrix),
            other => Err(Error::config(
                "path",
                format!("unknown `{other}` (expected decomposed | full-matrix)"),
            )),
        }
    }
}

/// What a non-target user receives during another user's slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonTargetRx {
    /// Only its own null-space streams, as in the slot-by-slot transmission schedule.
    Isolated,
    /// The full superposed slot signal; the other streams act as interference.
    Superposed,
}

impl NonTargetRx {
    pub fn name(self) -> &'static str {
        match self {
            NonTargetRx::Isolated => "isolated",
            NonTargetRx::Superposed => "superposed",
        }
    }
}

impl FromStr for NonTargetRx {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isolated" => Ok(NonTargetRx::Isolated),
            "superposed" => Ok(NonTargetRx::Superposed),
            other => Err(Error::config(
                "non_target_rx",
                format!("unknown `{other}` (expected isolated | superposed)"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub n_tx: usize,
    pub m_rx: usize,
    pub users: usize,
    pub snr_db_list: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub convention: Convention,
    pub averaging: Averaging,
    /// `B`: features per user.
    pub feature_count: usize,
    /// `D`: reals per feature.
    pub feature_dim: usize,
    pub mu_select: f64,
    pub policy: SchedulerPolicy,
    pub estimator: Estimator,
    /// `None` means `P = N`.
    pub pilot_length: Option<usize>,
    pub importance: ImportanceProfile,
    pub path: ChainPath,
    pub non_target_rx: NonTargetRx,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::su(4, 4)
    }
}

impl ExperimentConfig {
    pub fn su(n_tx: usize, m_rx: usize) -> Self {
        Self {
            mode: Mode::Su,
            n_tx,
            m_rx,
            users: 1,
            snr_db_list: vec![-8.0],
            trials: 1000,
            seed: 0,
            convention: Convention::PerTx,
            averaging: Averaging::DbDomain,
            feature_count: 64,
            feature_dim: 8,
            mu_select: 0.3,
            policy: SchedulerPolicy::Importance,
            estimator: Estimator::Perfect,
            pilot_length: None,
            importance: ImportanceProfile::default(),
            path: ChainPath::Decomposed,
            non_target_rx: NonTargetRx::Isolated,
        }
    }

    pub fn mu(n_tx: usize, m_rx: usize, users: usize) -> Self {
        Self {
            mode: Mode::Mu,
            users,
            ..Self::su(n_tx, m_rx)
        }
    }

    /// Subchannels or streams carried per slot for one user.
    pub fn streams(&self) -> usize {
        match self.mode {
            Mode::Su => self.n_tx.min(self.m_rx),
            Mode::Mu => self.n_tx / self.users,
        }
    }

    pub fn pilot_len(&self) -> usize {
        self.pilot_length.unwrap_or(self.n_tx)
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Su if self.users != 1 => {
                return Err(Error::config(
                    "k",
                    format!("su mode needs K = 1, got {}", self.users),
                ))
            }
            Mode::Mu if self.users < 2 => {
                return Err(Error::config(
                    "k",
                    format!("mu mode needs K >= 2, got {}", self.users),
                ))
            }
            _ => {}
        }
        validate_dims(self.n_tx, self.m_rx, self.users)?;
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.snr_db_list.is_empty() {
            return Err(Error::config("snr", "no SNR values given"));
        }
        if let Some(bad) = self
            .snr_db_list
            .iter()
            .find(|s| s.is_nan() || **s == f64::NEG_INFINITY)
        {
            return Err(Error::config("snr", format!("{bad} is not a usable SNR")));
        }
        if self.feature_dim < 2 || !self.feature_dim.is_multiple_of(2) {
            return Err(Error::config(
                "d",
                format!("{} must be even and >= 2", self.feature_dim),
            ));
        }
        let divisor = match self.mode {
            Mode::Su => self.streams(),
            Mode::Mu => self.n_tx,
        };
        if self.feature_count == 0 || !self.feature_count.is_multiple_of(divisor) {
            return Err(Error::config(
                "b",
                format!(
                    "B = {} must be a positive multiple of {divisor}",
                    self.feature_count
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.mu_select) {
            return Err(Error::config(
                "mu",
                format!("{} is outside [0, 1]", self.mu_select),
            ));
        }
        if self.pilot_len() < self.n_tx {
            return Err(Error::config(
                "pilot_length",
                format!("{} is shorter than N = {}", self.pilot_len(), self.n_tx),
            ));
        }
        match self.importance {
            ImportanceProfile::Exponential { decay } if !(decay.is_finite() && decay >= 0.0) => {
                return Err(Error::config("importance", "decay must be finite and >= 0"))
            }
            ImportanceProfile::Step { fraction, low }
                if !(0.0..=1.0).contains(&fraction) || !(low.is_finite() && low >= 0.0) =>
            {
                return Err(Error::config(
                    "importance",
                    "step needs fraction in [0, 1] and low >= 0",
                ))
            }
            _ => {}
        }
        Ok(())
    }
}

/// One row of experiment output: one SNR point, one policy/estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub experiment: String,
    pub n_tx: usize,
    pub m_rx: usize,
    pub users: usize,
    pub snr_db: f64,
    pub policy: Option<SchedulerPolicy>,
    pub estimator: Option<Estimator>,
    pub trials: usize,
    /// Mean equivalent SNR per subchannel, strongest first.
    pub subchannel_snr_db: Vec<Summary>,
    pub weighted_mse: Option<Summary>,
    pub unweighted_mse: Option<Summary>,
    pub estimation_mse: Option<Summary>,
    /// Mean weighted MSE per user (MU only).
    pub per_user_weighted_mse: Vec<Summary>,
}

impl MetricsRecord {
    fn empty(experiment: &str, cfg: &ExperimentConfig, snr_db: f64) -> Self {
        Self {
            experiment: experiment.to_string(),
            n_tx: cfg.n_tx,
            m_rx: cfg.m_rx,
            users: cfg.users,
            snr_db,
            policy: None,
            estimator: None,
            trials: cfg.trials,
            subchannel_snr_db: Vec::new(),
            weighted_mse: None,
            unweighted_mse: None,
            estimation_mse: None,
            per_user_weighted_mse: Vec::new(),
        }
    }
}

/// Runs `f` on a dedicated pool of `workers` threads (0 = rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::su(4, 4).validate().unwrap();
        ExperimentConfig::mu(16, 4, 4).validate().unwrap();
        ExperimentConfig::mu(4, 2, 2).validate().unwrap();
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let field = |cfg: ExperimentConfig| match cfg.validate() {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(field(ExperimentConfig::mu(5, 2, 2)), "k");
        assert_eq!(
            field(ExperimentConfig {
                trials: 0,
                ..Default::default()
            }),
            "trials"
        );
        assert_eq!(
            field(ExperimentConfig {
                feature_dim: 3,
                ..Default::default()
            }),
            "d"
        );
        assert_eq!(
            field(ExperimentConfig {
                feature_count: 6,
                ..Default::default()
            }),
            "b"
        );
        assert_eq!(
            field(ExperimentConfig {
                mu_select: 1.5,
                ..Default::default()
            }),
            "mu"
        );
        assert_eq!(
            field(ExperimentConfig {
                pilot_length: Some(2),
                ..Default::default()
            }),
            "pilot_length"
        );
        assert_eq!(
            field(ExperimentConfig {
                users: 2,
                ..Default::default()
            }),
            "k"
        );
        assert_eq!(
            field(ExperimentConfig {
                snr_db_list: vec![],
                ..Default::default()
            }),
            "snr"
        );
        // B must be a multiple of N in MU mode, not only of N/K
        assert_eq!(
            field(ExperimentConfig {
                feature_count: 8,
                ..ExperimentConfig::mu(16, 4, 4)
            }),
            "b"
        );
    }

    #[test]
    fn importance_profiles() {
        let w = ImportanceProfile::Exponential { decay: 5.0 }.weights(4);
        assert_eq!(w[0], 1.0);
        assert!((w[2] - (-2.5f64).exp()).abs() < 1e-15);
        assert_eq!(ImportanceProfile::Uniform.weights(3), vec![1.0; 3]);
        assert_eq!(
            ImportanceProfile::Step {
                fraction: 0.5,
                low: 0.2
            }
            .weights(4),
            vec![1.0, 1.0, 0.2, 0.2]
        );
        for s in ["exponential:2.5", "uniform", "step:0.25:0.1"] {
            let p: ImportanceProfile = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert_eq!(
            "exponential".parse::<ImportanceProfile>().unwrap(),
            ImportanceProfile::default()
        );
        assert!("gaussian".parse::<ImportanceProfile>().is_err());
        assert!("uniform:3".parse::<ImportanceProfile>().is_err());
    }

    #[test]
    fn enum_parsing() {
        assert_eq!("db".parse::<Averaging>().unwrap(), Averaging::DbDomain);
        assert_eq!(
            "linear-domain".parse::<Averaging>().unwrap(),
            Averaging::LinearDomain
        );
        assert_eq!("mu".parse::<Mode>().unwrap(), Mode::Mu);
        assert_eq!(
            "full-matrix".parse::<ChainPath>().unwrap(),
            ChainPath::FullMatrix
        );
        assert_eq!(
            "superposed".parse::<NonTargetRx>().unwrap(),
            NonTargetRx::Superposed
        );
        assert!("x".parse::<Mode>().is_err());
    }

    #[test]
    fn worker_pool_runs_closure() {
        assert_eq!(with_workers(2, rayon::current_num_threads).unwrap(), 2);
    }
}
