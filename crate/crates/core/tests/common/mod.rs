#![allow(dead_code)]

use nalgebra::DMatrix;
use semimo::channel::ChannelRealization;
use semimo::cmatrix::{svd, CMatrix, Complex};
use semimo::mu_precoder::MuSystem;
use semimo::rng::{complex_gaussian_matrix, from_seed};

pub fn to_na(a: &CMatrix) -> DMatrix<Complex> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)])
}

pub fn from_na(a: &DMatrix<Complex>) -> CMatrix {
    CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Unit-variance complex Gaussian entries.
pub fn random(rows: usize, cols: usize, seed: u64) -> CMatrix {
    complex_gaussian_matrix(&mut from_seed(seed), rows, cols, 1.0)
}

/// Classical block diagonalization for user `k`: project onto the joint
/// null space of the other users, then diagonalize the projected channel.
/// Returns `(U, gains, precoder)`.
pub fn bd_user(h: &CMatrix, m: usize, users: usize, k: usize) -> (CMatrix, Vec<f64>, CMatrix) {
    let n = h.cols();
    let others: Vec<CMatrix> = (0..users)
        .filter(|&u| u != k)
        .map(|u| h.rows_range(u * m, (u + 1) * m))
        .collect();
    let refs: Vec<&CMatrix> = others.iter().collect();
    let stacked = CMatrix::vstack(&refs).unwrap();
    let t = svd(&stacked).unwrap();
    let rank = t.rank(1e-10);
    let null = t.v.columns(rank, n);
    let h_k = h.rows_range(k * m, (k + 1) * m);
    let proj = h_k.matmul(&null).unwrap();
    let s = svd(&proj).unwrap();
    let precoder = null.matmul(&s.v).unwrap();
    (s.u, s.sigma, precoder)
}

/// Worst disagreement, over every user as target, between what the target
/// receives under the one-SVD precoder and under block diagonalization.
/// Each stream is divided by its gain and compared up to a unit-modulus
/// factor; the returned value also covers the factor's modulus and the
/// recovered symbols themselves.
pub fn bd_mismatch(h: &ChannelRealization, seed: u64) -> f64 {
    let (n, m, users) = (h.n_tx, h.m_rx, h.users);
    let sys = MuSystem::from_channel(h).unwrap();
    let streams = sys.streams();
    let cols = 3;
    let x_all: Vec<CMatrix> = (0..users)
        .map(|u| random(streams, cols, seed.wrapping_mul(31).wrapping_add(u as u64)))
        .collect();
    let bd: Vec<_> = (0..users).map(|u| bd_user(&h.h, m, users, u)).collect();
    let mut tx_bd = CMatrix::zeros(n, cols);
    for (u, (_, _, p)) in bd.iter().enumerate() {
        tx_bd = tx_bd.add(&p.matmul(&x_all[u]).unwrap()).unwrap();
    }
    let mut worst = 0.0f64;
    for k in 0..users {
        let h_k = h.user_block(k);
        let tx = sys.precode(k, &x_all).unwrap();
        let ours = sys.equalize(k, &h_k.matmul(&tx).unwrap()).unwrap();
        let (u_bd, g_bd, _) = &bd[k];
        let theirs = u_bd.hermitian_matmul(&h_k.matmul(&tx_bd).unwrap()).unwrap();
        let gains = sys.per_user[k].stream_gains();
        for s in 0..gains.len() {
            let phase = (theirs[(s, 0)] / g_bd[s]) / (ours[(s, 0)] / gains[s]);
            worst = worst.max((phase.norm() - 1.0).abs());
            for t in 0..cols {
                let a = ours[(s, t)] / gains[s] * phase;
                let b = theirs[(s, t)] / g_bd[s];
                worst = worst.max((a - b).norm());
                worst = worst.max((a - x_all[k][(s, t)] * phase).norm());
            }
        }
    }
    worst
}
