//! Window features, silence-profile construction, and the online profile
//! update rule.
//!
//! A profile is a weighted density model over a window feature (sample
//! variance by default) plus the critical bound cut at the configured
//! significance. Scoring divides a live feature value by the bound, so
//! any value above 1 is anomalous. Updates admit disjoint groups of
//! feature values whose mean score stayed below 1, evicting the oldest
//! points and re-weighting the buffer by recency.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::KdeModel;
use crate::error::{Error, Result};
use crate::io;
use crate::trace::{RssTrace, StreamId};

/// Default bin count for the feature-separability histogram study.
pub const DEFAULT_HISTOGRAM_BINS: usize = 20;

/// Which scalar a window maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Mean,
    StdDev,
    Variance,
}

impl FeatureKind {
    /// Dispersion features get a one-sided upper bound; central-tendency
    /// features need both tails.
    pub fn is_dispersion(self) -> bool {
        !matches!(self, FeatureKind::Mean)
    }
}

/// Maps a window's samples to a single feature value. Sample variance
/// uses the unbiased denominator l - 1.
pub fn feature(samples: &[f64], kind: FeatureKind) -> Result<f64> {
    let l = samples.len();
    if l == 0 || (kind.is_dispersion() && l < 2) {
        return Err(Error::InsufficientData(format!(
            "{} samples is too few for the {kind:?} feature",
            l
        )));
    }
    let mean = samples.iter().sum::<f64>() / l as f64;
    Ok(match kind {
        FeatureKind::Mean => mean,
        FeatureKind::Variance | FeatureKind::StdDev => {
            let var =
                samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (l as f64 - 1.0);
            if kind == FeatureKind::Variance {
                var
            } else {
                var.sqrt()
            }
        }
    })
}

/// Euclidean distance between the frequency-normalized histograms of two
/// samples, over shared equal-width bins spanning the union of ranges.
pub fn histogram_distance(a: &[f64], b: &[f64], bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::InvalidParam("histogram needs at least one bin".into()));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("histogram distance needs two non-empty samples".into()));
    }
    let lo = a.iter().chain(b).cloned().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let histogram = |xs: &[f64]| -> Vec<f64> {
        let mut h = vec![0.0; bins];
        for &x in xs {
            let idx = if width > 0.0 {
                (((x - lo) / width) as usize).min(bins - 1)
            } else {
                0
            };
            h[idx] += 1.0 / xs.len() as f64;
        }
        h
    };
    let (ha, hb) = (histogram(a), histogram(b));
    Ok(ha
        .iter()
        .zip(&hb)
        .map(|(pa, pb)| (pa - pb) * (pa - pb))
        .sum::<f64>()
        .sqrt())
}

/// Critical bound(s) cut from the profile's CDF. Dispersion features use
/// a single upper bound at the 100(1-alpha)th percentile; the mean
/// feature brackets both tails at alpha/2 each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Upper(f64),
    TwoSided { lower: f64, upper: f64 },
}

impl Bound {
    fn from_model(model: &KdeModel, alpha: f64, kind: FeatureKind) -> Result<Bound> {
        if kind.is_dispersion() {
            Ok(Bound::Upper(model.quantile(1.0 - alpha)?))
        } else {
            let lower = model.quantile(alpha / 2.0)?;
            let upper = model.quantile(1.0 - alpha / 2.0)?;
            Ok(Bound::TwoSided { lower, upper })
        }
    }

    /// Anomaly score of a feature value against this bound; above 1 means
    /// anomalous in either direction.
    pub fn score(&self, x: f64) -> f64 {
        match *self {
            Bound::Upper(u) => x / u,
            Bound::TwoSided { lower, upper } => {
                let center = 0.5 * (lower + upper);
                let halfwidth = 0.5 * (upper - lower);
                (x - center).abs() / halfwidth
            }
        }
    }
}

/// Group size and weighting scheme for online updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdatePolicy {
    pub l_update: usize,
}

impl UpdatePolicy {
    pub fn new(l_update: usize) -> Result<Self> {
        if l_update == 0 {
            return Err(Error::InvalidParam("l_update must be >= 1".into()));
        }
        Ok(UpdatePolicy { l_update })
    }
}

/// Recency weights for a buffer of length n: w_i = i / (n(n+1)/2), oldest
/// first, so the newest point carries the most weight.
pub fn linear_weights(n: usize) -> Vec<f64> {
    let total = (n * (n + 1) / 2) as f64;
    (1..=n).map(|i| i as f64 / total).collect()
}

/// The learned silence profile of one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalProfile {
    pub stream: StreamId,
    pub feature: FeatureKind,
    pub alpha: f64,
    #[serde(rename = "u")]
    pub bound: Bound,
    #[serde(rename = "kde")]
    pub model: KdeModel,
    #[serde(rename = "n")]
    pub capacity: usize,
}

impl NormalProfile {
    /// Fits a profile over already-extracted feature points. Uniform
    /// weights when none are given; capacity frozen at the point count.
    pub fn from_points(
        stream: StreamId,
        kind: FeatureKind,
        alpha: f64,
        points: &[f64],
        weights: Option<&[f64]>,
    ) -> Result<NormalProfile> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParam(format!("alpha must be in (0,1), got {alpha}")));
        }
        if points.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "profile for {stream} needs at least 2 feature points, got {}",
                points.len()
            )));
        }
        let model = KdeModel::fit(points, weights)?;
        let bound = Bound::from_model(&model, alpha, kind)?;
        Ok(NormalProfile {
            stream,
            feature: kind,
            alpha,
            bound,
            model,
            capacity: points.len(),
        })
    }

    /// Anomaly score of one feature value; anomalous iff strictly above 1.
    pub fn score(&self, x: f64) -> f64 {
        self.bound.score(x)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Data(format!("profile alpha {} out of range", self.alpha)));
        }
        if self.model.len() != self.capacity {
            return Err(Error::Data(format!(
                "profile for {} holds {} points but declares capacity {}",
                self.stream,
                self.model.len(),
                self.capacity
            )));
        }
        match self.bound {
            Bound::Upper(u) => {
                if !u.is_finite() {
                    return Err(Error::Data("non-finite critical bound".into()));
                }
            }
            Bound::TwoSided { lower, upper } => {
                if !(lower < upper) {
                    return Err(Error::Data("two-sided bound is not ordered".into()));
                }
            }
        }
        Ok(())
    }
}

/// Builds the initial silence profile from a training trace: every
/// sliding-window feature value, fitted with uniform weights.
pub fn build_profile(
    trace: &RssTrace,
    stream: &StreamId,
    l: usize,
    alpha: f64,
    kind: FeatureKind,
) -> Result<NormalProfile> {
    let windows = trace.windows(stream, l)?;
    let points = windows
        .iter()
        .map(|w| feature(&w.samples, kind))
        .collect::<Result<Vec<f64>>>()?;
    NormalProfile::from_points(stream.clone(), kind, alpha, &points, None)
}

/// Applies one update group: the l_update feature values are admitted iff
/// their mean anomaly score is below 1, evicting the oldest points so the
/// buffer length stays at the profile's capacity, then re-weighting by
/// recency and recomputing bandwidth and bound. A rejected group returns
/// the profile unchanged.
pub fn maybe_update(
    profile: &NormalProfile,
    group: &[(f64, f64)],
    policy: &UpdatePolicy,
) -> Result<NormalProfile> {
    if group.len() != policy.l_update {
        return Err(Error::InvalidParam(format!(
            "update group has {} entries, policy wants {}",
            group.len(),
            policy.l_update
        )));
    }
    let mean_score = group.iter().map(|(_, s)| s).sum::<f64>() / group.len() as f64;
    if mean_score >= 1.0 {
        return Ok(profile.clone());
    }
    let n = profile.capacity;
    let mut points: Vec<f64> = profile.model.points().to_vec();
    points.extend(group.iter().map(|(x, _)| *x));
    let start = points.len() - n;
    let points = &points[start..];
    let weights = linear_weights(n);
    let model = KdeModel::fit(points, Some(&weights))?;
    let bound = Bound::from_model(&model, profile.alpha, profile.feature)?;
    Ok(NormalProfile { bound, model, ..profile.clone() })
}

/// Saves all streams' profiles as one sorted JSON array.
pub fn save_bundle(path: &Path, profiles: &BTreeMap<StreamId, NormalProfile>) -> Result<()> {
    let docs: Vec<&NormalProfile> = profiles.values().collect();
    io::write_json_pretty(path, &docs)
}

pub fn load_bundle(path: &Path) -> Result<BTreeMap<StreamId, NormalProfile>> {
    let docs: Vec<NormalProfile> = io::read_json(path)?;
    let mut out = BTreeMap::new();
    for p in docs {
        p.validate()?;
        if out.insert(p.stream.clone(), p).is_some() {
            return Err(Error::Data(format!("duplicate profile in {}", path.display())));
        }
    }
    Ok(out)
}
