//! Exponential-decay fits: a straight line through `(distance, -ln value)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::TauEstimate;
use crate::error::{Error, Result};

/// Monte-Carlo points with fewer hits than this are left out of fits.
pub const MIN_FIT_HITS: u64 = 10;

/// One measured value at a distance, with optional absolute uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub distance: f64,
    pub value: f64,
    pub sigma: Option<f64>,
}

/// Least-squares line `-ln value = intercept + slope * distance`.
///
/// `slope` is the inverse decay length; a positive slope means a finite
/// length `1 / slope`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `(distance, -ln value)` pairs that entered the fit.
    pub points: Vec<(f64, f64)>,
    pub dropped: usize,
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// 95% confidence interval on the slope.
    pub slope_ci: (f64, f64),
    pub r_squared: f64,
    /// Root-mean-square residual in `-ln value`.
    pub rms_residual: f64,
    pub weighted: bool,
}

impl DecayFit {
    /// Decay length `1 / slope` (infinite for non-positive slopes).
    pub fn length(&self) -> f64 {
        if self.slope > 0.0 {
            1.0 / self.slope
        } else {
            f64::INFINITY
        }
    }

    /// Upper confidence limit of the decay length.
    pub fn length_upper(&self) -> f64 {
        if self.slope_ci.0 > 0.0 {
            1.0 / self.slope_ci.0
        } else {
            f64::INFINITY
        }
    }

    /// Lower confidence limit of the decay length.
    pub fn length_lower(&self) -> f64 {
        if self.slope_ci.1 > 0.0 {
            1.0 / self.slope_ci.1
        } else {
            f64::INFINITY
        }
    }

    /// Whether `value` lies within `k` standard errors of the slope.
    pub fn slope_consistent_with(&self, value: f64, k: f64) -> bool {
        (self.slope - value).abs() <= k * self.slope_stderr
    }
}

/// Fit the decay of positive values against distance.
///
/// Points with `value <= 0` are dropped. When every kept point carries a
/// positive `sigma` the fit is weighted by `(value / sigma)^2` and the slope
/// error is inflated by the reduced chi-square when that exceeds one;
/// otherwise ordinary least squares with residual-based errors is used.
pub fn fit_decay(points: &[DecayPoint]) -> Result<DecayFit> {
    let usable: Vec<&DecayPoint> = points
        .iter()
        .filter(|p| p.value > 0.0 && p.value.is_finite())
        .collect();
    if usable.is_empty() {
        return Err(Error::DegenerateFit(
            "no point above zero; decay length is below resolution".into(),
        ));
    }
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable point(s), need 3",
            usable.len()
        )));
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.distance).collect();
    let ys: Vec<f64> = usable.iter().map(|p| -p.value.ln()).collect();
    let weighted = usable.iter().all(|p| p.sigma.is_some_and(|s| s > 0.0));
    let ws: Vec<f64> = if weighted {
        usable
            .iter()
            .map(|p| {
                let sy = p.sigma.unwrap() / p.value;
                1.0 / (sy * sy)
            })
            .collect()
    } else {
        vec![1.0; usable.len()]
    };

    let sw: f64 = ws.iter().sum();
    let xm = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ym = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - xm).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData(
            "all points share one distance".into(),
        ));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((x, y), w)| w * (x - xm) * (y - ym))
        .sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;

    let residuals: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    let chi2: f64 = residuals.iter().zip(&ws).map(|(r, w)| w * r * r).sum();
    let syy: f64 = ys.iter().zip(&ws).map(|(y, w)| w * (y - ym).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - chi2 / syy } else { 1.0 };
    let dof = (usable.len() - 2) as f64;
    let slope_var = if weighted {
        (chi2 / dof).max(1.0) / sxx
    } else {
        chi2 / dof / sxx
    };
    let slope_stderr = slope_var.sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(1.96);
    let rms_residual =
        (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();

    Ok(DecayFit {
        points: xs.into_iter().zip(ys).collect(),
        dropped: points.len() - usable.len(),
        slope,
        intercept,
        slope_stderr,
        slope_ci: (slope - t * slope_stderr, slope + t * slope_stderr),
        r_squared,
        rms_residual,
        weighted,
    })
}

/// Fit `-ln tau` against distance. Estimates with fewer than
/// [`MIN_FIT_HITS`] hits are dropped; the rest are weighted by their
/// binomial standard errors (floored at one hit's worth).
pub fn fit_correlation_length(estimates: &[TauEstimate]) -> Result<DecayFit> {
    if estimates.iter().all(|e| e.hits == 0) {
        return Err(Error::DegenerateFit(
            "no connections observed; correlation length is below resolution".into(),
        ));
    }
    let kept: Vec<DecayPoint> = estimates
        .iter()
        .filter(|e| e.hits >= MIN_FIT_HITS)
        .map(|e| DecayPoint {
            distance: e.distance as f64,
            value: e.tau,
            sigma: Some(e.stderr.max(1.0 / e.samples as f64)),
        })
        .collect();
    let mut fit = fit_decay(&kept)?;
    fit.dropped += estimates.len() - kept.len();
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact(f: impl Fn(f64) -> f64) -> Vec<DecayPoint> {
        (1..=8)
            .map(|d| DecayPoint {
                distance: d as f64,
                value: f(d as f64),
                sigma: None,
            })
            .collect()
    }

    #[test]
    fn exact_exponential() {
        let fit = fit_decay(&exact(|d| (-d / 2.0).exp())).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-9);
        assert!((fit.length() - 2.0).abs() < 1e-8);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn constant_has_zero_slope() {
        let fit = fit_decay(&exact(|_| 0.3)).unwrap();
        assert!(fit.slope.abs() < 1e-12);
        assert!(fit.length().is_infinite());
    }

    #[test]
    fn error_paths() {
        let zeros = exact(|_| 0.0);
        assert!(matches!(fit_decay(&zeros), Err(Error::DegenerateFit(_))));
        let two = &exact(|d| (-d).exp())[..2];
        assert!(matches!(fit_decay(two), Err(Error::InsufficientData(_))));

        let none = vec![TauEstimate::from_counts(0, 1, 2, 100, 0); 4];
        assert!(matches!(
            fit_correlation_length(&none),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn low_hit_points_are_dropped() {
        let est: Vec<TauEstimate> = (1..=6)
            .map(|d| {
                let hits = (100_000.0 * (-(d as f64)).exp()).round() as u64;
                TauEstimate::from_counts(0, d, d, 100_000, hits)
            })
            .chain(std::iter::once(TauEstimate::from_counts(
                0, 9, 12, 100_000, 3,
            )))
            .collect();
        let fit = fit_correlation_length(&est).unwrap();
        assert_eq!(fit.points.len(), 6);
        assert_eq!(fit.dropped, 1);
        assert!((fit.slope - 1.0).abs() < 0.05, "{}", fit.slope);
        assert!(fit.slope_ci.0 < fit.slope && fit.slope < fit.slope_ci.1);
        assert!(fit.length_upper() > fit.length());
    }

    #[test]
    fn weighted_noiseless_fit_has_resolution_error() {
        let pts: Vec<DecayPoint> = (1..=6)
            .map(|d| DecayPoint {
                distance: d as f64,
                value: 1.0,
                sigma: Some(1e-9),
            })
            .collect();
        let fit = fit_decay(&pts).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert!(fit.slope_stderr > 0.0 && fit.slope_stderr < 1e-8);
        assert!(fit.slope_consistent_with(0.0, 2.0));
    }
}
