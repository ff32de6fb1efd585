//! Rayleigh MIMO channels, AWGN and pilot transmission.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmatrix::{svd, CMatrix, Complex};
use crate::error::{Error, Result};
use crate::rng::complex_gaussian_matrix;

/// Per-entry variance of the channel matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// `E|h|^2 = 1`.
    Unit,
    /// `E|h|^2 = 1/2`.
    Half,
    /// `E|h|^2 = 1/N` with `N` transmit antennas.
    PerTx,
}

impl Convention {
    pub const ALL: [Convention; 3] = [Convention::Unit, Convention::Half, Convention::PerTx];

    pub fn entry_variance(self, n_tx: usize) -> f64 {
        match self {
            Convention::Unit => 1.0,
            Convention::Half => 0.5,
            Convention::PerTx => 1.0 / n_tx as f64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Convention::Unit => "unit",
            Convention::Half => "half",
            Convention::PerTx => "per-tx",
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(Convention::Unit),
            "half" | "per-entry-half" => Ok(Convention::Half),
            "per-tx" | "normalized-by-n" | "1/n" => Ok(Convention::PerTx),
            other => Err(Error::config(
                "convention",
                format!("unknown `{other}` (expected unit | half | per-tx)"),
            )),
        }
    }
}

/// One draw of the (possibly multi-user) channel.
/// `h` stacks the users' `M x N` blocks vertically.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    pub h: CMatrix,
    pub n_tx: usize,
    pub m_rx: usize,
    pub users: usize,
    pub entry_variance: f64,
}

impl ChannelRealization {
    /// Wraps a known matrix as a single-user channel.
    pub fn single_user(h: CMatrix) -> Self {
        let (m, n) = h.shape();
        Self {
            h,
            n_tx: n,
            m_rx: m,
            users: 1,
            entry_variance: 1.0,
        }
    }

    pub fn multi_user(h: CMatrix, users: usize) -> Result<Self> {
        if users == 0 || !h.rows().is_multiple_of(users) {
            return Err(Error::config(
                "users",
                format!("{} rows do not split into {users} users", h.rows()),
            ));
        }
        let m_rx = h.rows() / users;
        let n_tx = h.cols();
        validate_dims(n_tx, m_rx, users)?;
        Ok(Self {
            h,
            n_tx,
            m_rx,
            users,
            entry_variance: 1.0,
        })
    }

    /// The `M x N` block seen by user `k` (0-based).
    pub fn user_block(&self, k: usize) -> CMatrix {
        self.h.rows_range(k * self.m_rx, (k + 1) * self.m_rx)
    }

    pub fn with_matrix(&self, h: CMatrix) -> Self {
        Self { h, ..self.clone() }
    }
}

/// Checks antenna/user counts. Multi-user links need `N mod K = 0` and
/// `K*M >= N > M`.
pub fn validate_dims(n_tx: usize, m_rx: usize, users: usize) -> Result<()> {
    if n_tx == 0 {
        return Err(Error::config("n", "must be at least 1"));
    }
    if m_rx == 0 {
        return Err(Error::config("m", "must be at least 1"));
    }
    if users == 0 {
        return Err(Error::config("k", "must be at least 1"));
    }
    if users > 1 {
        if !n_tx.is_multiple_of(users) {
            return Err(Error::config(
                "k",
                format!("N = {n_tx} is not a multiple of K = {users}"),
            ));
        }
        if users * m_rx < n_tx || n_tx <= m_rx {
            return Err(Error::config(
                "m",
                format!("multi-user needs K*M >= N > M, got N={n_tx}, M={m_rx}, K={users}"),
            ));
        }
    }
    Ok(())
}

pub fn sample_rayleigh<R: Rng + ?Sized>(
    n_tx: usize,
    m_rx: usize,
    users: usize,
    convention: Convention,
    rng: &mut R,
) -> Result<ChannelRealization> {
    validate_dims(n_tx, m_rx, users)?;
    let entry_variance = convention.entry_variance(n_tx);
    let h = complex_gaussian_matrix(rng, users * m_rx, n_tx, entry_variance);
    Ok(ChannelRealization {
        h,
        n_tx,
        m_rx,
        users,
        entry_variance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub signal_power: f64,
}

impl NoiseSpec {
    pub fn new(snr_db: f64, signal_power: f64) -> Self {
        Self {
            snr_db,
            signal_power,
        }
    }

    /// `snr_db = +inf`: no noise is added.
    pub fn noiseless() -> Self {
        Self::new(f64::INFINITY, 1.0)
    }

    /// Signal power taken as the empirical mean power of `block`.
    pub fn for_block(snr_db: f64, block: &CMatrix) -> Self {
        Self::new(snr_db, block.mean_power())
    }

    pub fn is_noiseless(&self) -> bool {
        self.snr_db == f64::INFINITY
    }

    pub fn variance(&self) -> f64 {
        if self.is_noiseless() {
            0.0
        } else {
            self.signal_power / 10f64.powf(self.snr_db / 10.0)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, rows: usize, cols: usize) -> CMatrix {
        if self.is_noiseless() {
            CMatrix::zeros(rows, cols)
        } else {
            complex_gaussian_matrix(rng, rows, cols, self.variance())
        }
    }
}

/// `N x P` pilot symbols, full row rank.
#[derive(Clone, Debug)]
pub struct PilotBlock {
    x_p: CMatrix,
}

impl PilotBlock {
    pub fn new(x_p: CMatrix) -> Result<Self> {
        let (n, p) = x_p.shape();
        if p < n {
            return Err(Error::Estimation(format!(
                "pilot length {p} is shorter than {n} transmit antennas"
            )));
        }
        let rank = svd(&x_p)?.rank(1e-10);
        if rank < n {
            return Err(Error::Estimation(format!(
                "pilot matrix has rank {rank} < {n}"
            )));
        }
        Ok(Self { x_p })
    }

    /// DFT pilots: unit-modulus entries, `X X^H = P I`. `length` must be
    /// at least `n_tx`.
    pub fn orthogonal(n_tx: usize, length: usize) -> Result<Self> {
        let x = CMatrix::from_fn(n_tx, length, |i, j| {
            let angle = -2.0 * PI * (i * j) as f64 / length as f64;
            Complex::from_polar(1.0, angle)
        });
        Self::new(x)
    }

    pub fn x_p(&self) -> &CMatrix {
        &self.x_p
    }

    pub fn length(&self) -> usize {
        self.x_p.cols()
    }
}

/// `y = H x~ + n`.
pub fn transmit<R: Rng + ?Sized>(
    h: &ChannelRealization,
    x_tilde: &CMatrix,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<CMatrix> {
    let n = noise.sample(rng, h.h.rows(), x_tilde.cols());
    transmit_with_noise(&h.h, x_tilde, &n)
}

/// `y = H x~ + n` with caller-supplied noise.
pub fn transmit_with_noise(h: &CMatrix, x_tilde: &CMatrix, n: &CMatrix) -> Result<CMatrix> {
    if x_tilde.rows() != h.cols() {
        return Err(Error::Shape {
            op: "transmit",
            left: h.shape(),
            right: x_tilde.shape(),
        });
    }
    h.matmul(x_tilde)?.add(n)
}

/// `Y_p = H X_p + N_p`, pilots at unit per-symbol power.
pub fn send_pilots<R: Rng + ?Sized>(
    h: &ChannelRealization,
    pilots: &PilotBlock,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<CMatrix> {
    if pilots.x_p.rows() != h.h.cols() {
        return Err(Error::Shape {
            op: "send_pilots",
            left: h.h.shape(),
            right: pilots.x_p.shape(),
        });
    }
    transmit(h, &pilots.x_p, noise, rng)
}
