//! Single-user SVD precoding.
//!
//! With `H = U Λ V^H`, transmitting `V x` and receiving through `U^H`
//! turns the link into `Q = min(N, M)` parallel scalar subchannels
//! `y~_q = Λ_qq x_q + n~_q`. The first subchannel is the strongest.

use crate::channel::ChannelRealization;
use crate::cmatrix::{svd, CMatrix, Complex, SvdTriple};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SuPrecoder {
    svd: SvdTriple,
    q: usize,
}

/// Per-subchannel gains and the SNRs they induce.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalentSubchannels {
    pub gains: Vec<f64>,
    pub snrs_linear: Vec<f64>,
    /// `-inf` where the gain is exactly zero.
    pub snrs_db: Vec<f64>,
}

impl EquivalentSubchannels {
    pub fn from_gains(gains: &[f64], snr_db: f64) -> Self {
        let sigma = 10f64.powf(snr_db / 10.0);
        let snrs_linear = gains.iter().map(|g| g * g * sigma).collect();
        let snrs_db = gains
            .iter()
            .map(|&g| {
                if g == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    snr_db + 20.0 * g.log10()
                }
            })
            .collect();
        Self {
            gains: gains.to_vec(),
            snrs_linear,
            snrs_db,
        }
    }
}

impl SuPrecoder {
    pub fn from_channel(h: &ChannelRealization) -> Result<Self> {
        if h.users != 1 {
            return Err(Error::config(
                "users",
                format!("single-user precoder needs K = 1, got {}", h.users),
            ));
        }
        Self::from_matrix(&h.h)
    }

    pub fn from_matrix(h: &CMatrix) -> Result<Self> {
        let svd = svd(h)?;
        let q = h.rows().min(h.cols());
        Ok(Self { svd, q })
    }

    pub fn svd(&self) -> &SvdTriple {
        &self.svd
    }

    /// Number of usable subchannels.
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_tx(&self) -> usize {
        self.svd.v.rows()
    }

    pub fn m_rx(&self) -> usize {
        self.svd.u.rows()
    }

    pub fn gains(&self) -> &[f64] {
        &self.svd.sigma
    }

    /// `x~ = V x`; `x` has `N` rows.
    pub fn precode(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.rows() != self.n_tx() {
            return Err(Error::Shape {
                op: "precode",
                left: self.svd.v.shape(),
                right: x.shape(),
            });
        }
        self.svd.v.matmul(x)
    }

    /// `y~ = U^H y`; `y` has `M` rows.
    pub fn equalize(&self, y: &CMatrix) -> Result<CMatrix> {
        if y.rows() != self.m_rx() {
            return Err(Error::Shape {
                op: "equalize",
                left: self.svd.u.shape(),
                right: y.shape(),
            });
        }
        self.svd.u.hermitian_matmul(y)
    }

    /// Decomposed form: `y~ = Λ x + n~`, with `Λ` the `M x N` rectangular
    /// diagonal and `n~` already in the rotated domain.
    pub fn subchannel_output(&self, x: &CMatrix, noise_tilde: &CMatrix) -> Result<CMatrix> {
        if x.rows() != self.n_tx()
            || noise_tilde.rows() != self.m_rx()
            || x.cols() != noise_tilde.cols()
        {
            return Err(Error::Shape {
                op: "subchannel_output",
                left: x.shape(),
                right: noise_tilde.shape(),
            });
        }
        let mut out = noise_tilde.clone();
        for (q, &g) in self.svd.sigma.iter().enumerate() {
            for (o, &xi) in out.row_mut(q).iter_mut().zip(x.row(q)) {
                *o += xi * g;
            }
        }
        Ok(out)
    }

    pub fn equivalent_snrs(&self, snr_db: f64) -> EquivalentSubchannels {
        EquivalentSubchannels::from_gains(&self.svd.sigma, snr_db)
    }
}

/// Single-tap LMMSE estimate of `x` from `y = g x + n`:
/// `conj(g) y / (|g|^2 + noise_var / signal_power)`.
///
/// With zero noise this is the exact inverse `y / g`.
pub fn scalar_mmse(y: Complex, gain: Complex, noise_var: f64, signal_power: f64) -> Complex {
    let reg = if signal_power > 0.0 {
        noise_var / signal_power
    } else {
        0.0
    };
    let denom = gain.norm_sqr() + reg;
    if denom == 0.0 {
        Complex::new(0.0, 0.0)
    } else {
        gain.conj() * y / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::transmit_with_noise;
    use crate::cmatrix::testutil::random;

    #[test]
    fn identity_and_diagonal_gains() {
        let p = SuPrecoder::from_matrix(&CMatrix::identity(4)).unwrap();
        assert_eq!(p.gains(), &[1.0; 4]);
        let p = SuPrecoder::from_matrix(&CMatrix::from_real_diag(2, 2, &[2.0, 1.0])).unwrap();
        assert_eq!(p.gains(), &[2.0, 1.0]);
    }

    #[test]
    fn rejects_multi_user_channel() {
        let c = ChannelRealization::multi_user(random(4, 4, 1), 2).unwrap();
        assert!(SuPrecoder::from_channel(&c).is_err());
    }

    #[test]
    fn precode_is_isometric() {
        let p = SuPrecoder::from_matrix(&random(4, 4, 2)).unwrap();
        let x = random(4, 7, 3);
        let xt = p.precode(&x).unwrap();
        assert!((xt.frobenius_norm() - x.frobenius_norm()).abs() <= 1e-12);
        assert!(p.precode(&random(3, 1, 1)).is_err());
        let id = SuPrecoder::from_matrix(&CMatrix::identity(3)).unwrap();
        let x = random(3, 2, 9);
        assert_eq!(id.precode(&x).unwrap(), x);
    }

    #[test]
    fn noiseless_round_trip_is_diag_gain() {
        for (m, n) in [(4, 4), (2, 4), (4, 2)] {
            let h = random(m, n, (m * n) as u64);
            let p = SuPrecoder::from_matrix(&h).unwrap();
            let x = random(n, 5, 8);
            let y =
                transmit_with_noise(&h, &p.precode(&x).unwrap(), &CMatrix::zeros(m, 5)).unwrap();
            let yt = p.equalize(&y).unwrap();
            for q in 0..p.q() {
                for c in 0..5 {
                    let expect = x[(q, c)] * p.gains()[q];
                    assert!((yt[(q, c)] - expect).norm() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn injected_noise_matches_stacked_form() {
        let h = random(3, 3, 4);
        let p = SuPrecoder::from_matrix(&h).unwrap();
        let x = random(3, 4, 5);
        let n = random(3, 4, 6);
        let y = transmit_with_noise(&h, &p.precode(&x).unwrap(), &n).unwrap();
        let full = p.equalize(&y).unwrap();
        let nt = p.equalize(&n).unwrap();
        let fast = p.subchannel_output(&x, &nt).unwrap();
        assert!(full.max_abs_diff(&fast) <= 1e-10);
    }

    #[test]
    fn equivalent_snr_values() {
        let e = EquivalentSubchannels::from_gains(&[1.0, 1.0], -8.0);
        assert_eq!(e.snrs_db, vec![-8.0, -8.0]);
        let e = EquivalentSubchannels::from_gains(&[2.0], 0.0);
        assert!((e.snrs_db[0] - 6.0206).abs() < 1e-4);
        assert!((e.snrs_linear[0] - 4.0).abs() < 1e-12);
        let e = EquivalentSubchannels::from_gains(&[3.0, 0.0], 0.0);
        assert_eq!(e.snrs_db[1], f64::NEG_INFINITY);
    }

    #[test]
    fn scalar_mmse_inverts_without_noise() {
        let g = Complex::new(0.3, -0.7);
        let x = Complex::new(1.5, 2.0);
        let est = scalar_mmse(g * x, g, 0.0, 1.0);
        assert!((est - x).norm() < 1e-14);
        assert_eq!(
            scalar_mmse(x, Complex::new(0.0, 0.0), 0.0, 1.0),
            Complex::new(0.0, 0.0)
        );
    }
}
