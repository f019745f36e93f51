//! Moment-matched count distributions over raw forecasts.
//!
//! The forecast agent emits a mean trajectory and a dimensionless
//! uncertainty scale; this module turns each step into a proper predictive
//! distribution over counts. The target variance blends the agent's
//! uncertainty with the series' own recent volatility:
//!
//! ```text
//! sigma^2 = (mu * v * (1 + u))^2
//! ```
//!
//! When the target variance exceeds the mean the result is a negative
//! binomial matched to both moments; when it does not (counts near zero,
//! or a very calm series) the distribution falls back to Poisson, and a
//! zero mean collapses to a point mass at zero. Quantiles are exact lattice
//! quantiles computed by accumulating the pmf from zero.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::agents::RawForecast;
use crate::timeseries::Volatility;

/// Accumulated-mass tolerance: once the CDF is within this of 1 the tail is
/// treated as exhausted.
pub const CDF_TOLERANCE: f64 = 1e-12;

/// Hard cap on lattice scans, far beyond any weekly count this pipeline
/// will ever see; reaching it indicates a numerical bug upstream.
const MAX_SUPPORT: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("mean must be finite and non-negative, got {0}")]
    BadMean(f64),
    #[error("uncertainty scale must be in [0, 1], got {0}")]
    BadUncertainty(f64),
    #[error("quantile level must be in (0, 1), got {0}")]
    BadQuantileLevel(f64),
}

/// Distribution family selected by moment matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    NegBinomial,
    Poisson,
    Degenerate,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Family::NegBinomial => "neg_binomial",
            Family::Poisson => "poisson",
            Family::Degenerate => "degenerate",
        };
        f.write_str(s)
    }
}

/// Inputs to one calibration step.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationInput {
    mu: f64,
    volatility: Volatility,
    uncertainty: f64,
}

impl CalibrationInput {
    pub fn new(mu: f64, volatility: Volatility, uncertainty: f64) -> Result<Self, CalibrationError> {
        if !mu.is_finite() || mu < 0.0 {
            return Err(CalibrationError::BadMean(mu));
        }
        if !uncertainty.is_finite() || !(0.0..=1.0).contains(&uncertainty) {
            return Err(CalibrationError::BadUncertainty(uncertainty));
        }
        Ok(CalibrationInput {
            mu,
            volatility,
            uncertainty,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// Target variance for moment matching: `(mu * v * (1 + u))^2`.
pub fn target_variance(input: &CalibrationInput) -> f64 {
    let sigma = input.mu * input.volatility.value() * (1.0 + input.uncertainty);
    sigma * sigma
}

/// A calibrated predictive distribution over non-negative counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub family: Family,
    /// Mean of the distribution (for `Degenerate`, the point itself).
    pub mu: f64,
    /// Negative binomial dispersion `n`; present only for `NegBinomial`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_dispersion: Option<f64>,
    /// Negative binomial success probability `p`; present only for `NegBinomial`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_success: Option<f64>,
    pub q05: u32,
    pub q50: u32,
    pub q95: u32,
}

impl PredictiveDistribution {
    /// Point mass at an integer count.
    pub fn degenerate(at: u32) -> Self {
        PredictiveDistribution {
            family: Family::Degenerate,
            mu: at as f64,
            n_dispersion: None,
            p_success: None,
            q05: at,
            q50: at,
            q95: at,
        }
    }

    /// Probability mass at count `k`.
    pub fn pmf(&self, k: u64) -> f64 {
        match self.family {
            Family::Degenerate => {
                if k == self.mu.round() as u64 {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Poisson => {
                let mu = self.mu;
                let kf = k as f64;
                (kf * mu.ln() - mu - ln_gamma(kf + 1.0)).exp()
            }
            Family::NegBinomial => {
                let n = self.n_dispersion.expect("neg binomial has dispersion");
                let p = self.p_success.expect("neg binomial has success probability");
                let kf = k as f64;
                (ln_gamma(kf + n) - ln_gamma(kf + 1.0) - ln_gamma(n)
                    + n * p.ln()
                    + kf * (1.0 - p).ln())
                .exp()
            }
        }
    }

    /// CDF at count `k`, by direct accumulation from zero.
    pub fn cdf(&self, k: u64) -> f64 {
        let mut acc = 0.0;
        for i in 0..=k {
            acc += self.pmf(i);
            if acc >= 1.0 - CDF_TOLERANCE {
                return 1.0_f64.min(acc);
            }
        }
        acc
    }
}

/// Picks the distribution family matching the requested mean and variance,
/// then fills in the standard quantiles.
pub fn moment_match(input: &CalibrationInput) -> PredictiveDistribution {
    let mu = input.mu;
    if mu == 0.0 {
        return PredictiveDistribution::degenerate(0);
    }
    let variance = target_variance(input);
    let mut dist = if variance > mu {
        let n = mu * mu / (variance - mu);
        let p = n / (n + mu);
        PredictiveDistribution {
            family: Family::NegBinomial,
            mu,
            n_dispersion: Some(n),
            p_success: Some(p),
            q05: 0,
            q50: 0,
            q95: 0,
        }
    } else {
        PredictiveDistribution {
            family: Family::Poisson,
            mu,
            n_dispersion: None,
            p_success: None,
            q05: 0,
            q50: 0,
            q95: 0,
        }
    };
    dist.q05 = quantile(&dist, 0.05).expect("0.05 is a valid level");
    dist.q50 = quantile(&dist, 0.50).expect("0.50 is a valid level");
    dist.q95 = quantile(&dist, 0.95).expect("0.95 is a valid level");
    dist
}

/// Smallest count `k` with `CDF(k) >= q`, by forward accumulation.
pub fn quantile(dist: &PredictiveDistribution, q: f64) -> Result<u32, CalibrationError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(CalibrationError::BadQuantileLevel(q));
    }
    if dist.family == Family::Degenerate {
        return Ok(dist.mu.round() as u32);
    }
    let mut acc = 0.0;
    let mut k: u64 = 0;
    loop {
        acc += dist.pmf(k);
        if acc >= q || acc >= 1.0 - CDF_TOLERANCE {
            return Ok(k as u32);
        }
        k += 1;
        if k > MAX_SUPPORT {
            return Ok(MAX_SUPPORT as u32);
        }
    }
}

/// Calibrates step `k` of a validated raw forecast against the series
/// volatility. Panics if `k` is outside the forecast trajectory, which is a
/// caller bug rather than a data condition.
pub fn calibrate_step(raw: &RawForecast, k: usize, volatility: Volatility) -> PredictiveDistribution {
    let mu = raw.forecast_mean[k];
    let input = CalibrationInput::new(mu, volatility, raw.uncertainty_scale)
        .expect("validated raw forecast yields a valid calibration input");
    moment_match(&input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{Volatility, VOLATILITY_MAX, VOLATILITY_MIN};

    fn vol(v: f64) -> Volatility {
        Volatility::clamped(v, VOLATILITY_MIN, VOLATILITY_MAX)
    }

    /// Mean and variance by direct pmf summation until the tail is gone.
    fn summed_moments(dist: &PredictiveDistribution) -> (f64, f64) {
        let mut mass = 0.0;
        let mut mean = 0.0;
        let mut second = 0.0;
        let mut k = 0u64;
        while mass < 1.0 - 1e-13 && k < 5_000_000 {
            let p = dist.pmf(k);
            mass += p;
            mean += k as f64 * p;
            second += (k as f64) * (k as f64) * p;
            k += 1;
        }
        (mean, second - mean * mean)
    }

    #[test]
    fn target_variance_follows_the_blend_formula() {
        let input = CalibrationInput::new(10.0, vol(0.2), 0.5).unwrap();
        assert!((target_variance(&input) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn neg_binomial_branch_matches_both_moments() {
        // mu=10, v=0.5, u=1.0 -> sigma = 10, variance 100 > mean.
        let input = CalibrationInput::new(10.0, vol(0.5), 1.0).unwrap();
        let dist = moment_match(&input);
        assert_eq!(dist.family, Family::NegBinomial);
        let n = dist.n_dispersion.unwrap();
        let p = dist.p_success.unwrap();
        assert!((n - 100.0 / 90.0).abs() < 1e-12);
        assert!(n > 0.0 && p > 0.0 && p < 1.0);
        let (mean, var) = summed_moments(&dist);
        assert!((mean - 10.0).abs() < 1e-8, "mean {mean}");
        assert!((var - 100.0).abs() < 1e-6, "var {var}");
    }

    #[test]
    fn poisson_fallback_when_variance_at_or_below_mean() {
        // mu=2, v=0.05, u=0 -> sigma^2 = 0.01 <= 2.
        let input = CalibrationInput::new(2.0, vol(0.05), 0.0).unwrap();
        let dist = moment_match(&input);
        assert_eq!(dist.family, Family::Poisson);
        let (mean, var) = summed_moments(&dist);
        assert!((mean - 2.0).abs() < 1e-10);
        assert!((var - 2.0).abs() < 1e-8);
    }

    #[test]
    fn zero_mean_collapses_to_point_mass_at_zero() {
        let input = CalibrationInput::new(0.0, vol(0.3), 0.5).unwrap();
        let dist = moment_match(&input);
        assert_eq!(dist.family, Family::Degenerate);
        assert_eq!((dist.q05, dist.q50, dist.q95), (0, 0, 0));
        assert_eq!(dist.pmf(0), 1.0);
        assert_eq!(dist.pmf(1), 0.0);
    }

    #[test]
    fn quantiles_are_ordered_and_hold_nominal_mass() {
        let input = CalibrationInput::new(12.0, vol(0.4), 0.6).unwrap();
        let dist = moment_match(&input);
        assert!(dist.q05 <= dist.q50 && dist.q50 <= dist.q95);
        // Closed-interval mass [q05, q95] must reach at least 0.90.
        let mass: f64 = (dist.q05 as u64..=dist.q95 as u64).map(|k| dist.pmf(k)).sum();
        assert!(mass >= 0.90, "interval mass {mass}");
    }

    #[test]
    fn quantile_is_smallest_count_reaching_level() {
        let input = CalibrationInput::new(5.0, vol(0.3), 0.5).unwrap();
        let dist = moment_match(&input);
        for q in [0.05, 0.25, 0.5, 0.75, 0.95] {
            let k = quantile(&dist, q).unwrap() as u64;
            assert!(dist.cdf(k) >= q);
            if k > 0 {
                assert!(dist.cdf(k - 1) < q);
            }
        }
    }

    #[test]
    fn quantile_rejects_degenerate_levels() {
        let dist = PredictiveDistribution::degenerate(3);
        assert!(quantile(&dist, 0.0).is_err());
        assert!(quantile(&dist, 1.0).is_err());
        assert_eq!(quantile(&dist, 0.5).unwrap(), 3);
    }

    #[test]
    fn near_boundary_neg_binomial_stays_close_to_poisson() {
        // Force sigma^2 barely above mu: the NB quantiles should sit within
        // one count of the Poisson quantiles at the same mean.
        let mu = 9.0;
        let variance = mu + 1e-6;
        let n = mu * mu / (variance - mu);
        let p = n / (n + mu);
        let nb = PredictiveDistribution {
            family: Family::NegBinomial,
            mu,
            n_dispersion: Some(n),
            p_success: Some(p),
            q05: 0,
            q50: 0,
            q95: 0,
        };
        let poisson = PredictiveDistribution {
            family: Family::Poisson,
            mu,
            n_dispersion: None,
            p_success: None,
            q05: 0,
            q50: 0,
            q95: 0,
        };
        for q in [0.05, 0.5, 0.95] {
            let a = quantile(&nb, q).unwrap() as i64;
            let b = quantile(&poisson, q).unwrap() as i64;
            assert!((a - b).abs() <= 1, "q={q}: nb {a} vs poisson {b}");
        }
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(CalibrationInput::new(-1.0, vol(0.1), 0.5).is_err());
        assert!(CalibrationInput::new(f64::NAN, vol(0.1), 0.5).is_err());
        assert!(CalibrationInput::new(3.0, vol(0.1), 1.5).is_err());
    }
}
