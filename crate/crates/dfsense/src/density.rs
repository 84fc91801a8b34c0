//! Weighted kernel density estimation with the Epanechnikov kernel:
//! density, exact CDF, quantile inversion, and the two-sample
//! Kolmogorov-Smirnov test.
//!
//! The kernel's compact support keeps every evaluation O(n) with small
//! constants, and its antiderivative is a cubic, so the CDF is exact
//! rather than quadrature-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Epanechnikov kernel: (3/4)(1 - q^2) on |q| <= 1, zero outside.
pub fn epanechnikov(q: f64) -> f64 {
    if q.abs() <= 1.0 {
        0.75 * (1.0 - q * q)
    } else {
        0.0
    }
}

/// Antiderivative of the kernel, normalized to [0, 1] over its support.
fn kernel_cdf(u: f64) -> f64 {
    if u <= -1.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        0.25 * (2.0 + 3.0 * u - u * u * u)
    }
}

/// Scott's bandwidth rule for this kernel: 2.345 * sigma * n^(-1/5).
pub fn scott_bandwidth(sigma_hat: f64, n: usize) -> Result<f64> {
    if !(sigma_hat > 0.0) {
        return Err(Error::InvalidParam(format!(
            "bandwidth needs a positive spread estimate, got {sigma_hat}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParam("bandwidth needs at least one point".into()));
    }
    Ok(2.345 * sigma_hat * (n as f64).powf(-0.2))
}

/// A fitted weighted density model: support points, normalized weights,
/// and one shared bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KdeModel {
    points: Vec<f64>,
    weights: Vec<f64>,
    bandwidth: f64,
}

impl<'de> Deserialize<'de> for KdeModel {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            points: Vec<f64>,
            weights: Vec<f64>,
            bandwidth: f64,
        }
        let raw = Raw::deserialize(de)?;
        KdeModel::from_parts(raw.points, raw.weights, raw.bandwidth)
            .map_err(serde::de::Error::custom)
    }
}

impl KdeModel {
    /// Fits a model. Omitted weights mean uniform 1/n; given weights are
    /// normalized to sum 1. Bandwidth comes from Scott's rule on the
    /// weighted standard deviation; an all-equal point set falls back to
    /// `max(0.01, 1e-3 * |mean|)` so the density stays invertible.
    pub fn fit(points: &[f64], weights: Option<&[f64]>) -> Result<KdeModel> {
        let n = points.len();
        if n == 0 {
            return Err(Error::InsufficientData("cannot fit a density to zero points".into()));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data("non-finite density point".into()));
        }
        let weights = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(Error::InvalidParam(format!(
                        "{} weights for {} points",
                        w.len(),
                        n
                    )));
                }
                if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(Error::InvalidParam("weights must be positive and finite".into()));
                }
                let total: f64 = w.iter().sum();
                w.iter().map(|x| x / total).collect()
            }
            None => vec![1.0 / n as f64; n],
        };
        let mean: f64 = points.iter().zip(&weights).map(|(x, w)| w * x).sum();
        let var: f64 = points
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * (x - mean) * (x - mean))
            .sum();
        let sigma = var.max(0.0).sqrt();
        // All-equal point sets can leave floating-point dust in sigma, so
        // detect them by range, not by sigma == 0.
        let all_equal = points.iter().all(|&x| x == points[0]);
        let bandwidth = if !all_equal && sigma > 0.0 {
            scott_bandwidth(sigma, n)?
        } else {
            (1e-3 * mean.abs()).max(0.01)
        };
        Ok(KdeModel { points: points.to_vec(), weights, bandwidth })
    }

    /// Rebuilds a model from stored parts, revalidating the invariants.
    pub fn from_parts(points: Vec<f64>, weights: Vec<f64>, bandwidth: f64) -> Result<KdeModel> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Data(format!(
                "density model with {} points and {} weights",
                points.len(),
                weights.len()
            )));
        }
        if !(bandwidth > 0.0) {
            return Err(Error::Data(format!("non-positive bandwidth {bandwidth}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Data("density weights must be positive and sum to 1".into()));
        }
        Ok(KdeModel { points, weights, bandwidth })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Interval outside which the density is identically zero.
    pub fn support(&self) -> (f64, f64) {
        let lo = self.points.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.points.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo - self.bandwidth, hi + self.bandwidth)
    }

    /// Density at `x`: sum of (w_i / h) * V((x - x_i)/h).
    pub fn pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(xi, w)| w / h * epanechnikov((x - xi) / h))
            .sum()
    }

    /// Exact CDF at `x` via the per-kernel cubic antiderivative. Outside
    /// the support the value is exactly 0 or 1, independent of roundoff
    /// in the normalized weights.
    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let h = self.bandwidth;
        let v: f64 = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(xi, w)| w * kernel_cdf((x - xi) / h))
            .sum();
        v.clamp(0.0, 1.0)
    }

    /// Smallest x with cdf(x) >= p, by bisection over the support. In a
    /// flat CDF stretch this is the leftmost solution.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParam(format!("quantile needs p in (0,1), got {p}")));
        }
        let (mut lo, mut hi) = self.support();
        for _ in 0..200 {
            if hi - lo <= 1e-12 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// Outcome of the two-sample Kolmogorov-Smirnov test at significance 0.05.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    /// sup-distance between the two empirical CDFs, in [0, 1].
    pub statistic: f64,
    /// True when the statistic is within the asymptotic 0.05 critical value.
    pub accept_at_0_05: bool,
}

/// Asymptotic two-sample critical value at significance 0.05.
pub fn ks_critical_value(m: usize, n: usize) -> f64 {
    1.358 * (((m + n) as f64) / ((m * n) as f64)).sqrt()
}

/// Two-sample Kolmogorov-Smirnov test: statistic plus the accept/reject
/// outcome against the asymptotic 0.05 critical value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("KS test needs two non-empty samples".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (m, n) = (sa.len(), sb.len());
    let mut i = 0;
    let mut j = 0;
    let mut stat: f64 = 0.0;
    while i < m || j < n {
        // Advance past all copies of the next smallest value in either
        // sample, then compare the ECDFs just after it.
        let x = match (sa.get(i), sb.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => break,
        };
        while i < m && sa[i] <= x {
            i += 1;
        }
        while j < n && sb[j] <= x {
            j += 1;
        }
        let d = (i as f64 / m as f64 - j as f64 / n as f64).abs();
        stat = stat.max(d);
    }
    Ok(KsResult { statistic: stat, accept_at_0_05: stat <= ks_critical_value(m, n) })
}
