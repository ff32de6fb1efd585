//! Multi-user precoding from one SVD per user.
//!
//! Each user's channel `H_k = U_k Λ_k V_k^H` is split into a signal part
//! (the leading `N/K` right singular vectors) and `K-1` null-space blocks
//! of `N/K` columns each. While user `k` is the target, its own symbols
//! ride the signal part and the other users' symbols ride the null-space
//! blocks, so `H_k` sees no inter-user leakage: `U_k^H y_k = Λ_k x_k + n~_k`.

use crate::channel::ChannelRealization;
use crate::cmatrix::{svd, CMatrix};
use crate::error::{Error, Result};
use crate::su_precoder::EquivalentSubchannels;

/// Numerical rank cutoff relative to the largest singular value.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct MuUserPrecoder {
    pub user: usize,
    pub u: CMatrix,
    pub lambda: Vec<f64>,
    /// `N x N/K`, columns beyond `M` are zero.
    pub v_nonzero: CMatrix,
    /// `K-1` blocks, each `N x N/K`, all in the null space of `H_k`.
    pub v_zero_blocks: Vec<CMatrix>,
}

impl MuUserPrecoder {
    /// Streams carried per slot: `N/K`.
    pub fn streams(&self) -> usize {
        self.v_nonzero.cols()
    }

    /// Gains of the target streams, `Λ_k` truncated to `min(M, N/K)`.
    pub fn stream_gains(&self) -> &[f64] {
        let s = self.streams().min(self.lambda.len());
        &self.lambda[..s]
    }
}

/// Splits user `k`'s `M x N` channel into signal and null-space precoders.
pub fn decompose_user(h_k: &CMatrix, k: usize, users: usize) -> Result<MuUserPrecoder> {
    let (m, n) = h_k.shape();
    if users == 0 || n % users != 0 {
        return Err(Error::config(
            "k",
            format!("N = {n} is not a multiple of K = {users}"),
        ));
    }
    let streams = n / users;
    let null_needed = (users - 1) * streams;
    if n < m || n - m < null_needed {
        return Err(Error::config(
            "m",
            format!(
                "null space of a {m}x{n} channel cannot hold {} blocks of {streams}",
                users - 1
            ),
        ));
    }
    let t = svd(h_k)?;
    let rank = t.rank(RANK_TOL);
    if rank < m {
        return Err(Error::DegenerateChannel { rank, required: m });
    }
    let used = m.min(streams);
    let mut v_nonzero = CMatrix::zeros(n, streams);
    for i in 0..n {
        for j in 0..used {
            v_nonzero[(i, j)] = t.v[(i, j)];
        }
    }
    let v_zero_blocks = (0..users - 1)
        .map(|b| {
            let start = m + b * streams;
            t.v.columns(start, start + streams)
        })
        .collect();
    Ok(MuUserPrecoder {
        user: k,
        u: t.u,
        lambda: t.sigma,
        v_nonzero,
        v_zero_blocks,
    })
}

#[derive(Clone, Debug)]
pub struct MuSystem {
    pub per_user: Vec<MuUserPrecoder>,
    pub n_tx: usize,
    pub m_rx: usize,
    pub users: usize,
}

impl MuSystem {
    pub fn from_channel(h: &ChannelRealization) -> Result<Self> {
        crate::channel::validate_dims(h.n_tx, h.m_rx, h.users)?;
        let per_user = (0..h.users)
            .map(|k| decompose_user(&h.user_block(k), k, h.users))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            per_user,
            n_tx: h.n_tx,
            m_rx: h.m_rx,
            users: h.users,
        })
    }

    pub fn streams(&self) -> usize {
        self.n_tx / self.users
    }

    /// Null-space block of `target` that carries user `other`'s symbols.
    /// Non-target users take the blocks in increasing user order.
    pub fn block_index(&self, target: usize, other: usize) -> Option<usize> {
        match other.cmp(&target) {
            std::cmp::Ordering::Less => Some(other),
            std::cmp::Ordering::Greater => Some(other - 1),
            std::cmp::Ordering::Equal => None,
        }
    }

    /// Effective precoder applied to user `carried`'s symbols while
    /// `target` is the target user.
    pub fn precoder_for(&self, target: usize, carried: usize) -> &CMatrix {
        let p = &self.per_user[target];
        match self.block_index(target, carried) {
            None => &p.v_nonzero,
            Some(b) => &p.v_zero_blocks[b],
        }
    }

    /// `x~ = V_k^{nz} x_k + Σ V_{k,k'}^{zero} x_{k*}`.
    /// `x_all[u]` is user `u`'s `N/K x L` symbol block.
    pub fn precode(&self, target: usize, x_all: &[CMatrix]) -> Result<CMatrix> {
        if x_all.len() != self.users || target >= self.users {
            return Err(Error::Shape {
                op: "mu_precode",
                left: (self.users, self.streams()),
                right: (x_all.len(), target),
            });
        }
        let cols = x_all[0].cols();
        let mut out = CMatrix::zeros(self.n_tx, cols);
        for (u, x) in x_all.iter().enumerate() {
            if x.rows() != self.streams() || x.cols() != cols {
                return Err(Error::Shape {
                    op: "mu_precode",
                    left: (self.streams(), cols),
                    right: x.shape(),
                });
            }
            out = out.add(&self.precoder_for(target, u).matmul(x)?)?;
        }
        Ok(out)
    }

    /// `y~_k = U_k^H y_k`.
    pub fn equalize(&self, k: usize, y_k: &CMatrix) -> Result<CMatrix> {
        if y_k.rows() != self.m_rx {
            return Err(Error::Shape {
                op: "mu_equalize",
                left: (self.m_rx, 0),
                right: y_k.shape(),
            });
        }
        self.per_user[k].u.hermitian_matmul(y_k)
    }

    pub fn equivalent_snrs(&self, k: usize, snr_db: f64) -> EquivalentSubchannels {
        EquivalentSubchannels::from_gains(self.per_user[k].stream_gains(), snr_db)
    }
}

pub fn mu_precode(sys: &MuSystem, target: usize, x_all: &[CMatrix]) -> Result<CMatrix> {
    sys.precode(target, x_all)
}

pub fn mu_equalize(sys: &MuSystem, k: usize, y_k: &CMatrix) -> Result<CMatrix> {
    sys.equalize(k, y_k)
}

pub fn mu_equivalent_snrs(sys: &MuSystem, k: usize, snr_db: f64) -> EquivalentSubchannels {
    sys.equivalent_snrs(k, snr_db)
}
