use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::Statistics;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Sample mean with a 95% confidence half-width `1.96 s / sqrt(T)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub half_width: f64,
}

impl Summary {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mean = samples.mean();
        let half_width = if samples.len() < 2 {
            0.0
        } else {
            Z95 * samples.std_dev() / (samples.len() as f64).sqrt()
        };
        Self { mean, half_width }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairedTest {
    /// Mean of `a - b`.
    pub mean_diff: f64,
    pub t: f64,
    /// One-sided p-value for `mean(a - b) < 0`.
    pub p_value: f64,
}

/// Paired one-sided t-test of `H1: E[a - b] < 0`.
pub fn paired_one_sided(a: &[f64], b: &[f64]) -> PairedTest {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    assert!(a.len() >= 2, "need at least two pairs");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean_diff = d.as_slice().mean();
    let sd = d.as_slice().std_dev();
    if sd == 0.0 {
        let p_value = if mean_diff < 0.0 { 0.0 } else { 1.0 };
        let t = if mean_diff == 0.0 {
            0.0
        } else {
            mean_diff.signum() * f64::INFINITY
        };
        return PairedTest {
            mean_diff,
            t,
            p_value,
        };
    }
    let t = mean_diff / (sd / (d.len() as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (d.len() - 1) as f64).expect("degrees of freedom >= 1");
    PairedTest {
        mean_diff,
        t,
        p_value: dist.cdf(t),
    }
}
