//! Small estimators shared by the samplers.

use serde::{Deserialize, Serialize};

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    /// Number of values averaged.
    pub count: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            std_error: 0.0,
            count: 0,
        }
    }

    /// `|self - other| / sqrt(se1^2 + se2^2)`; infinite when both are exact
    /// and differ.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        let diff = (self.mean - other.mean).abs();
        let se = self.std_error.hypot(other.std_error);
        if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Distance to a known value in standard errors.
    pub fn z_against(&self, value: f64) -> f64 {
        self.z_score(&Estimate::exact(value))
    }
}

/// Mean and standard error for independent values.
pub fn mean_se(values: &[f64]) -> Estimate {
    let n = values.len();
    if n == 0 {
        return Estimate { mean: f64::NAN, std_error: f64::NAN, count: 0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Estimate { mean, std_error: (var / n as f64).sqrt(), count: n }
}

/// Mean with a batch-means standard error for a correlated series.
/// Trailing values that do not fill a batch still enter the mean.
pub fn batch_means(values: &[f64], batches: usize) -> Estimate {
    let n = values.len();
    let batches = batches.clamp(2, n.max(2));
    let size = n / batches;
    if size == 0 {
        return mean_se(values);
    }
    let means: Vec<f64> = values
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let between = mean_se(&means);
    Estimate {
        mean: values.iter().sum::<f64>() / n as f64,
        std_error: between.std_error,
        count: n,
    }
}

/// Effective sample size by Geyer's initial positive sequence.
pub fn effective_sample_size(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 4 {
        return n as f64;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let c0 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| -> f64 {
        let s: f64 = (0..n - lag).map(|t| (values[t] - mean) * (values[t + lag] - mean)).sum();
        s / n as f64 / c0
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (n as f64 / tau.max(1.0 / n as f64)).min(n as f64)
}
