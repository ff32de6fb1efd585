//! Pilot-based channel estimation.
//!
//! The data path is: pilots `X_p` -> received `Y_p` -> LS or MMSE
//! pre-estimate -> refinement hook -> final `Ĥ`. The hook is where a
//! learned refiner would plug in; the default is the identity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, NoiseSpec, PilotBlock};
use crate::cmatrix::{pinv, CMatrix, Complex};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    Ls,
    Mmse,
    Refined,
}

#[derive(Clone, Debug)]
pub struct ChannelEstimate {
    pub h_hat: CMatrix,
    pub method: EstimateMethod,
    pub mse_vs_truth: Option<f64>,
}

impl ChannelEstimate {
    /// Fills `mse_vs_truth` against the true channel.
    pub fn scored(mut self, truth: &ChannelRealization) -> Result<Self> {
        self.mse_vs_truth = Some(estimation_mse(truth, &self)?);
        Ok(self)
    }
}

/// `Ĥ_LS = Y_p pinv(X_p)`.
pub fn ls_estimate(y_p: &CMatrix, pilots: &PilotBlock) -> Result<ChannelEstimate> {
    let x_p = pilots.x_p();
    if y_p.cols() != x_p.cols() {
        return Err(Error::Shape {
            op: "ls_estimate",
            left: y_p.shape(),
            right: x_p.shape(),
        });
    }
    let h_hat = y_p.matmul(&pinv(x_p)?)?;
    Ok(ChannelEstimate {
        h_hat,
        method: EstimateMethod::Ls,
        mse_vs_truth: None,
    })
}

/// Linear MMSE under an i.i.d. `CN(0, prior_variance)` channel prior:
/// `Ĥ = Y_p X_p^H (X_p X_p^H + (σ_n² / v) I)^-1`.
///
/// For orthogonal unit-power pilots this is an entrywise shrinkage of the
/// LS estimate by `v / (v + σ_n² / P)`.
pub fn mmse_estimate(
    y_p: &CMatrix,
    pilots: &PilotBlock,
    noise: &NoiseSpec,
    prior_variance: f64,
) -> Result<ChannelEstimate> {
    let x_p = pilots.x_p();
    if y_p.cols() != x_p.cols() {
        return Err(Error::Shape {
            op: "mmse_estimate",
            left: y_p.shape(),
            right: x_p.shape(),
        });
    }
    if prior_variance.is_nan() || prior_variance <= 0.0 {
        return Err(Error::Estimation(format!(
            "prior variance must be positive, got {prior_variance}"
        )));
    }
    let x_h = x_p.hermitian();
    let ratio = noise.variance() / prior_variance;
    let h_hat = if ratio.is_infinite() {
        CMatrix::zeros(y_p.rows(), x_p.rows())
    } else {
        let mut gram = x_p.matmul(&x_h)?;
        for i in 0..gram.rows() {
            gram[(i, i)] += Complex::new(ratio, 0.0);
        }
        y_p.matmul(&x_h)?.matmul(&pinv(&gram)?)?
    };
    Ok(ChannelEstimate {
        h_hat,
        method: EstimateMethod::Mmse,
        mse_vs_truth: None,
    })
}

/// Refinement stage. Implementations must be pure functions of the estimate.
pub trait Refiner: Send + Sync {
    fn refine(&self, h_hat: &CMatrix) -> CMatrix;
}

impl<F> Refiner for F
where
    F: Fn(&CMatrix) -> CMatrix + Send + Sync,
{
    fn refine(&self, h_hat: &CMatrix) -> CMatrix {
        self(h_hat)
    }
}

/// Passes the pre-estimate through unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityRefiner;

impl Refiner for IdentityRefiner {
    fn refine(&self, h_hat: &CMatrix) -> CMatrix {
        h_hat.clone()
    }
}

/// Scales the estimate by a fixed real factor.
#[derive(Clone, Copy, Debug)]
pub struct Shrinkage(pub f64);

impl Refiner for Shrinkage {
    fn refine(&self, h_hat: &CMatrix) -> CMatrix {
        h_hat.scale_real(self.0)
    }
}

pub fn refine(est: &ChannelEstimate, hook: &dyn Refiner) -> Result<ChannelEstimate> {
    let h_hat = hook.refine(&est.h_hat);
    if h_hat.shape() != est.h_hat.shape() {
        return Err(Error::Estimation(format!(
            "refinement changed shape {:?} -> {:?}",
            est.h_hat.shape(),
            h_hat.shape()
        )));
    }
    if !h_hat.is_finite() {
        return Err(Error::Estimation(
            "refinement produced non-finite entries".into(),
        ));
    }
    Ok(ChannelEstimate {
        h_hat,
        method: EstimateMethod::Refined,
        mse_vs_truth: None,
    })
}

/// `Σ |H_mn - Ĥ_mn|²`.
pub fn estimation_mse(h: &ChannelRealization, est: &ChannelEstimate) -> Result<f64> {
    Ok(h.h.sub(&est.h_hat)?.frobenius_norm_sqr())
}

/// CSI used to build precoders and receivers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Perfect,
    Ls,
    Mmse,
    /// MMSE pre-estimate followed by the refinement hook.
    Refined,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::Perfect,
        Estimator::Refined,
        Estimator::Mmse,
        Estimator::Ls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Perfect => "perfect",
            Estimator::Ls => "ls",
            Estimator::Mmse => "mmse",
            Estimator::Refined => "refined",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(Self::Perfect),
            "ls" => Ok(Self::Ls),
            "mmse" => Ok(Self::Mmse),
            "refined" => Ok(Self::Refined),
            other => Err(Error::config(
                "estimator",
                format!("unknown `{other}` (expected perfect | ls | mmse | refined)"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_rayleigh, send_pilots, Convention};
    use crate::cmatrix::testutil::random;
    use crate::rng::{from_seed, stream, Purpose};

    fn setup(seed: u64) -> (ChannelRealization, PilotBlock) {
        let h = sample_rayleigh(4, 4, 1, Convention::Unit, &mut from_seed(seed)).unwrap();
        (h, PilotBlock::orthogonal(4, 4).unwrap())
    }

    #[test]
    fn ls_noiseless_recovers_channel() {
        let (h, p) = setup(1);
        let yp = send_pilots(&h, &p, &NoiseSpec::noiseless(), &mut from_seed(0)).unwrap();
        let est = ls_estimate(&yp, &p).unwrap();
        assert!(est.h_hat.max_abs_diff(&h.h) <= 1e-10);
    }

    #[test]
    fn ls_error_is_noise_times_pinv() {
        let (h, p) = setup(2);
        let n = random(4, 4, 3);
        let yp = h.h.matmul(p.x_p()).unwrap().add(&n).unwrap();
        let est = ls_estimate(&yp, &p).unwrap();
        let err = est.h_hat.sub(&h.h).unwrap();
        let expect = n.matmul(&pinv(p.x_p()).unwrap()).unwrap();
        assert!(err.max_abs_diff(&expect) <= 1e-12);
    }

    #[test]
    fn mmse_limits() {
        let (h, p) = setup(3);
        let n = random(4, 4, 4);
        let yp = h.h.matmul(p.x_p()).unwrap().add(&n).unwrap();
        let ls = ls_estimate(&yp, &p).unwrap();
        let quiet = mmse_estimate(&yp, &p, &NoiseSpec::new(300.0, 1.0), 1.0).unwrap();
        assert!(quiet.h_hat.max_abs_diff(&ls.h_hat) <= 1e-12);
        let loud = mmse_estimate(&yp, &p, &NoiseSpec::new(-300.0, 1.0), 1.0).unwrap();
        assert!(loud.h_hat.frobenius_norm() <= 1e-12);
    }

    #[test]
    fn mmse_orthogonal_pilots_is_shrinkage() {
        let (h, p) = setup(4);
        let noise = NoiseSpec::new(0.0, 1.0);
        let yp = send_pilots(&h, &p, &noise, &mut from_seed(5)).unwrap();
        let ls = ls_estimate(&yp, &p).unwrap();
        let mmse = mmse_estimate(&yp, &p, &noise, 0.5).unwrap();
        let factor = 0.5 / (0.5 + noise.variance() / 4.0);
        assert!(mmse.h_hat.max_abs_diff(&ls.h_hat.scale_real(factor)) <= 1e-12);
    }

    #[test]
    fn mmse_dominates_ls() {
        for snr in [-5.0, 0.0, 10.0, 20.0] {
            let noise = NoiseSpec::new(snr, 1.0);
            let p = PilotBlock::orthogonal(4, 4).unwrap();
            let (mut ls_acc, mut mmse_acc) = (0.0, 0.0);
            for t in 0..1000 {
                let h = sample_rayleigh(
                    4,
                    4,
                    1,
                    Convention::Unit,
                    &mut stream(9, t, Purpose::Channel),
                )
                .unwrap();
                let yp =
                    send_pilots(&h, &p, &noise, &mut stream(9, t, Purpose::PilotNoise)).unwrap();
                ls_acc += estimation_mse(&h, &ls_estimate(&yp, &p).unwrap()).unwrap();
                mmse_acc +=
                    estimation_mse(&h, &mmse_estimate(&yp, &p, &noise, 1.0).unwrap()).unwrap();
            }
            assert!(mmse_acc <= ls_acc, "snr {snr}: {mmse_acc} > {ls_acc}");
        }
    }

    #[test]
    fn refine_hooks() {
        let (h, p) = setup(6);
        let yp = send_pilots(&h, &p, &NoiseSpec::new(0.0, 1.0), &mut from_seed(7)).unwrap();
        let ls = ls_estimate(&yp, &p).unwrap();
        let same = refine(&ls, &IdentityRefiner).unwrap();
        assert_eq!(same.h_hat, ls.h_hat);
        assert_eq!(same.method, EstimateMethod::Refined);

        let truth = h.h.clone();
        let oracle = move |_: &CMatrix| truth.clone();
        let exact = refine(&ls, &oracle).unwrap().scored(&h).unwrap();
        assert_eq!(exact.mse_vs_truth, Some(0.0));

        let bad = |_: &CMatrix| CMatrix::zeros(2, 2);
        assert!(matches!(refine(&ls, &bad), Err(Error::Estimation(_))));
    }

    #[test]
    fn shrinkage_hook_beats_ls_at_0db() {
        let noise = NoiseSpec::new(0.0, 1.0);
        let p = PilotBlock::orthogonal(4, 4).unwrap();
        let hook = Shrinkage(1.0 / (1.0 + noise.variance() / 4.0));
        let (mut ls_acc, mut hook_acc) = (0.0, 0.0);
        for t in 0..1000 {
            let h = sample_rayleigh(
                4,
                4,
                1,
                Convention::Unit,
                &mut stream(4, t, Purpose::Channel),
            )
            .unwrap();
            let yp = send_pilots(&h, &p, &noise, &mut stream(4, t, Purpose::PilotNoise)).unwrap();
            let ls = ls_estimate(&yp, &p).unwrap();
            hook_acc += estimation_mse(&h, &refine(&ls, &hook).unwrap()).unwrap();
            ls_acc += estimation_mse(&h, &ls).unwrap();
        }
        assert!(hook_acc < ls_acc);
    }

    #[test]
    fn mse_metric() {
        let (h, _) = setup(8);
        let truth = ChannelEstimate {
            h_hat: h.h.clone(),
            method: EstimateMethod::Ls,
            mse_vs_truth: None,
        };
        assert_eq!(estimation_mse(&h, &truth).unwrap(), 0.0);
        let e = random(4, 4, 9);
        let off = ChannelEstimate {
            h_hat: h.h.add(&e).unwrap(),
            ..truth.clone()
        };
        let got = estimation_mse(&h, &off).unwrap();
        assert!((got - e.frobenius_norm_sqr()).abs() <= 1e-12);

        // double-loop oracle
        let mut oracle = 0.0;
        for m in 0..4 {
            for n in 0..4 {
                oracle += (h.h[(m, n)] - off.h_hat[(m, n)]).norm_sqr();
            }
        }
        assert!((got - oracle).abs() <= 1e-12);

        let wrong = ChannelEstimate {
            h_hat: CMatrix::zeros(2, 4),
            ..truth
        };
        assert!(estimation_mse(&h, &wrong).is_err());
    }
}
