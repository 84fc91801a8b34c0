//! Comparison detectors: moving-average, moving-variance, discrete MLE
//! profile matching, and the parametric chi-square variance bound. All
//! are deterministic; thresholds come from a seeded calibration against
//! training silence so comparisons against the main pipeline are fair.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::profile::{feature, FeatureKind, NormalProfile};
use crate::trace::{Label, LabelTrack, RssTrace, StreamId, SyncGrid, Window, MAX_GAP_TICKS};

/// Short-versus-long moving-average change detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingAverageCfg {
    pub short_len: usize,
    pub long_len: usize,
    /// dB gap between the two means that raises an alarm.
    pub threshold: f64,
}

impl Default for MovingAverageCfg {
    fn default() -> Self {
        MovingAverageCfg { short_len: 5, long_len: 60, threshold: 2.0 }
    }
}

impl MovingAverageCfg {
    pub fn validate(&self) -> Result<()> {
        if self.short_len < 2 || self.short_len >= self.long_len {
            return Err(Error::InvalidParam(format!(
                "moving-average windows need 2 <= short < long, got {}/{}",
                self.short_len, self.long_len
            )));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::InvalidParam("moving-average threshold must be > 0".into()));
        }
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Alarms when the short-window mean of the most recent history strays
/// more than the threshold from the long-window mean.
pub fn moving_average_step(cfg: &MovingAverageCfg, history: &[f64]) -> Result<bool> {
    cfg.validate()?;
    if history.len() < cfg.long_len {
        return Err(Error::InsufficientData(format!(
            "moving average needs {} samples, got {}",
            cfg.long_len,
            history.len()
        )));
    }
    let long = &history[history.len() - cfg.long_len..];
    let short = &history[history.len() - cfg.short_len..];
    Ok((mean(short) - mean(long)).abs() > cfg.threshold)
}

/// Windowed-variance detector against a fixed per-stream silence
/// variance learned in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingVarianceCfg {
    pub window_len: usize,
    /// Training-time variance per stream, dBm^2.
    pub silence_variance: BTreeMap<StreamId, f64>,
    /// dBm^2 excess over the silence variance that raises an alarm.
    pub threshold: f64,
}

impl MovingVarianceCfg {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(Error::InvalidParam("moving-variance window must be >= 2".into()));
        }
        if self.silence_variance.is_empty() {
            return Err(Error::InvalidParam("moving-variance needs trained silence variances".into()));
        }
        Ok(())
    }
}

/// Alarms when the window's sample variance exceeds the stream's silence
/// variance by more than the threshold.
pub fn moving_variance_step(cfg: &MovingVarianceCfg, window: &Window) -> Result<bool> {
    cfg.validate()?;
    if window.samples.len() < cfg.window_len {
        return Err(Error::InsufficientData(format!(
            "moving variance needs {} samples, got {}",
            cfg.window_len,
            window.samples.len()
        )));
    }
    let silence = *cfg
        .silence_variance
        .get(&window.stream)
        .ok_or_else(|| Error::UnknownStream(window.stream.to_string()))?;
    let tail = &window.samples[window.samples.len() - cfg.window_len..];
    let v = feature(tail, FeatureKind::Variance)?;
    Ok(v - silence > cfg.threshold)
}

/// One trained RSS distribution set: per stream, log-probabilities over
/// integer-dBm bins.
#[derive(Debug, Clone)]
pub struct MleProfile {
    pub id: String,
    pub motion: bool,
    /// Per stream, log p for bins origin..origin+bins.
    log_p: BTreeMap<StreamId, Vec<f64>>,
}

/// Discrete maximum-likelihood classifier over silence and per-location
/// motion profiles. Streams are assumed independent; histograms use
/// add-one smoothing so every likelihood is finite.
#[derive(Debug, Clone)]
pub struct MleModel {
    pub streams: Vec<StreamId>,
    /// dBm value of bin 0.
    pub origin_dbm: i64,
    pub bins: usize,
    pub profiles: Vec<MleProfile>,
}

impl MleModel {
    /// Trains one profile per label class found in the trace: `silence`,
    /// plus one motion profile per distinct location tag (untagged
    /// motion pools into `motion`).
    pub fn train(trace: &RssTrace, labels: &LabelTrack) -> Result<MleModel> {
        let streams: Vec<StreamId> = trace.stream_ids().into_iter().cloned().collect();
        if streams.is_empty() {
            return Err(Error::InsufficientData("MLE training trace is empty".into()));
        }
        let mut lo = i64::MAX;
        let mut hi = i64::MIN;
        for (_, series) in trace.iter() {
            for &v in &series.rss {
                lo = lo.min(v.floor() as i64);
                hi = hi.max(v.ceil() as i64);
            }
        }
        let origin_dbm = lo - 5;
        let bins = ((hi + 5) - origin_dbm + 1) as usize;

        // counts[profile][stream bin vec]
        let mut counts: BTreeMap<String, BTreeMap<StreamId, Vec<u64>>> = BTreeMap::new();
        for (stream, series) in trace.iter() {
            for (&t, &rss) in series.t.iter().zip(&series.rss) {
                let key = match labels.interval_at(t) {
                    Some(iv) if iv.label == Label::Motion => {
                        iv.loc.clone().unwrap_or_else(|| "motion".to_string())
                    }
                    _ => "silence".to_string(),
                };
                let bin = ((rss.round() as i64) - origin_dbm).clamp(0, bins as i64 - 1) as usize;
                counts
                    .entry(key)
                    .or_default()
                    .entry(stream.clone())
                    .or_insert_with(|| vec![0; bins])[bin] += 1;
            }
        }
        if !counts.contains_key("silence") {
            return Err(Error::InsufficientData("MLE training needs silence-labeled data".into()));
        }

        let profiles = counts
            .into_iter()
            .map(|(id, by_stream)| {
                let motion = id != "silence";
                let log_p = streams
                    .iter()
                    .map(|s| {
                        let empty = vec![0u64; bins];
                        let c = by_stream.get(s).unwrap_or(&empty);
                        let n: u64 = c.iter().sum();
                        let denom = (n as f64) + bins as f64;
                        let lp = c.iter().map(|&k| ((k + 1) as f64 / denom).ln()).collect();
                        (s.clone(), lp)
                    })
                    .collect();
                MleProfile { id, motion, log_p }
            })
            .collect();
        Ok(MleModel { streams, origin_dbm, bins, profiles })
    }

    fn log_likelihood(&self, profile: &MleProfile, values: &[f64]) -> f64 {
        self.streams
            .iter()
            .zip(values)
            .map(|(s, &v)| {
                let bin =
                    ((v.round() as i64) - self.origin_dbm).clamp(0, self.bins as i64 - 1) as usize;
                profile.log_p[s][bin]
            })
            .sum()
    }

    /// Picks the most likely profile for one reading per stream (aligned
    /// with `streams`). Ties go to silence: a motion profile wins only
    /// with strictly higher likelihood than every silence profile.
    pub fn classify(&self, values: &[f64]) -> Result<(&str, bool)> {
        if values.len() != self.streams.len() {
            return Err(Error::Data(format!(
                "MLE expects {} readings, got {}",
                self.streams.len(),
                values.len()
            )));
        }
        let mut best_silence: Option<(&MleProfile, f64)> = None;
        let mut best_motion: Option<(&MleProfile, f64)> = None;
        for p in &self.profiles {
            let ll = self.log_likelihood(p, values);
            let slot = if p.motion { &mut best_motion } else { &mut best_silence };
            let better = match slot {
                Some((_, cur)) => ll > *cur,
                None => true,
            };
            if better {
                *slot = Some((p, ll));
            }
        }
        let (sp, sll) =
            best_silence.ok_or_else(|| Error::Data("MLE model has no silence profile".into()))?;
        match best_motion {
            Some((mp, mll)) if mll > sll => Ok((&mp.id, true)),
            _ => Ok((&sp.id, false)),
        }
    }
}

/// Gaussian-assumption variance model: under silence the scaled sample
/// variance follows chi-square with l-1 degrees of freedom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricModel {
    /// Population variance of the stream under silence, dBm^2.
    pub sigma2: f64,
    pub l: usize,
    pub alpha: f64,
}

/// Quantile of the chi-square distribution with `k` degrees of freedom,
/// by bisecting the regularized lower incomplete gamma to 1e-10.
pub fn chi_square_quantile(k: usize, p: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParam("chi-square needs k >= 1".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParam(format!("quantile level must be in (0,1), got {p}")));
    }
    let a = k as f64 / 2.0;
    let cdf = |x: f64| gamma_lr(a, x / 2.0);
    let mut hi = k as f64 + 10.0;
    while cdf(hi) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Critical variance u = sigma^2 * Q(l-1, 1-alpha) / (l-1): windows with
/// sample variance above u are anomalous under the Gaussian assumption.
pub fn chi_square_bound(model: &ParametricModel) -> Result<f64> {
    if !(model.sigma2 > 0.0) {
        return Err(Error::InvalidParam("parametric model needs sigma2 > 0".into()));
    }
    if model.l < 2 {
        return Err(Error::InvalidParam("parametric model needs l >= 2".into()));
    }
    if !(model.alpha > 0.0 && model.alpha < 1.0) {
        return Err(Error::InvalidParam("alpha must be in (0,1)".into()));
    }
    let q = chi_square_quantile(model.l - 1, 1.0 - model.alpha)?;
    Ok(model.sigma2 * q / (model.l - 1) as f64)
}

/// Builds profiles whose critical bound comes from the chi-square model
/// instead of the density quantile, for parametric-versus-nonparametric
/// comparisons through the same engine.
pub fn parametric_profiles(
    train: &RssTrace,
    l: usize,
    alpha: f64,
) -> Result<BTreeMap<StreamId, NormalProfile>> {
    let mut out = BTreeMap::new();
    for id in train.stream_ids() {
        let mut p = crate::profile::build_profile(train, id, l, alpha, FeatureKind::Variance)?;
        let series = train.series(id).expect("stream listed by the trace");
        let sigma2 = feature(&series.rss, FeatureKind::Variance)?;
        let u = chi_square_bound(&ParametricModel { sigma2, l, alpha })?;
        p.bound = crate::profile::Bound::Upper(u);
        out.insert(id.clone(), p);
    }
    Ok(out)
}

/// Nearest-rank upper quantile of a sample, used by threshold
/// calibration.
fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Calibrates the moving-average threshold so at most `target_fp` of
/// training-silence positions alarm (pooled across streams).
pub fn calibrate_moving_average(
    train: &RssTrace,
    short_len: usize,
    long_len: usize,
    target_fp: f64,
) -> Result<MovingAverageCfg> {
    if !(target_fp > 0.0 && target_fp < 1.0) {
        return Err(Error::InvalidParam("target false-alarm rate must be in (0,1)".into()));
    }
    let mut stats = Vec::new();
    for (_, series) in train.iter() {
        if series.rss.len() < long_len {
            continue;
        }
        for end in long_len..=series.rss.len() {
            let history = &series.rss[..end];
            let long = &history[end - long_len..];
            let short = &history[end - short_len..];
            stats.push((mean(short) - mean(long)).abs());
        }
    }
    if stats.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no training stream has {long_len} samples for moving-average calibration"
        )));
    }
    stats.sort_by(f64::total_cmp);
    let cfg = MovingAverageCfg {
        short_len,
        long_len,
        threshold: empirical_quantile(&stats, 1.0 - target_fp),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Calibrates the moving-variance detector: per-stream silence variance
/// from the whole training series, one pooled excess threshold at the
/// `1 - target_fp` quantile.
pub fn calibrate_moving_variance(
    train: &RssTrace,
    window_len: usize,
    target_fp: f64,
) -> Result<MovingVarianceCfg> {
    if !(target_fp > 0.0 && target_fp < 1.0) {
        return Err(Error::InvalidParam("target false-alarm rate must be in (0,1)".into()));
    }
    let mut silence_variance = BTreeMap::new();
    let mut stats = Vec::new();
    for (stream, series) in train.iter() {
        let base = feature(&series.rss, FeatureKind::Variance)?;
        silence_variance.insert(stream.clone(), base);
        for w in series.rss.windows(window_len) {
            stats.push(feature(w, FeatureKind::Variance)? - base);
        }
    }
    if stats.is_empty() {
        return Err(Error::InsufficientData("no training windows for moving-variance calibration".into()));
    }
    stats.sort_by(f64::total_cmp);
    let cfg = MovingVarianceCfg {
        window_len,
        silence_variance,
        threshold: empirical_quantile(&stats, 1.0 - target_fp),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Per-tick alarm series from a baseline detector, comparable with the
/// engine's decision stream.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRun {
    pub name: String,
    /// (tick time, alarm) pairs; ticks where any stream lacks data are
    /// skipped, mirroring the engine's per-tick barrier.
    pub alarms: Vec<(f64, bool)>,
}

fn grid_history<'g>(
    grid: &'g SyncGrid,
    s: usize,
    end_tick: usize,
    len: usize,
) -> Option<&'g [f64]> {
    grid.window(s, end_tick, len)
}

/// Runs the moving-average detector over every stream; the global alarm
/// is the any-stream OR.
pub fn run_moving_average(
    trace: &RssTrace,
    cfg: &MovingAverageCfg,
    monitor_start_t: f64,
    rate_hz: f64,
) -> Result<BaselineRun> {
    cfg.validate()?;
    let grid = SyncGrid::build(trace, 1.0 / rate_hz, MAX_GAP_TICKS)?;
    let k = grid.stream_ids().len();
    let first = ((monitor_start_t - grid.t0) * rate_hz).ceil().max(0.0) as usize;
    let mut alarms = Vec::new();
    for tick in first..grid.ticks() {
        let mut alarm = false;
        let mut complete = true;
        for s in 0..k {
            match grid_history(&grid, s, tick, cfg.long_len) {
                Some(history) => alarm |= moving_average_step(cfg, history)?,
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if complete {
            alarms.push((grid.time(tick), alarm));
        }
    }
    Ok(BaselineRun { name: "moving_average".into(), alarms })
}

/// Runs the moving-variance detector; any-stream OR per tick.
pub fn run_moving_variance(
    trace: &RssTrace,
    cfg: &MovingVarianceCfg,
    monitor_start_t: f64,
    rate_hz: f64,
) -> Result<BaselineRun> {
    cfg.validate()?;
    let grid = SyncGrid::build(trace, 1.0 / rate_hz, MAX_GAP_TICKS)?;
    let ids: Vec<StreamId> = grid.stream_ids().to_vec();
    let first = ((monitor_start_t - grid.t0) * rate_hz).ceil().max(0.0) as usize;
    let mut alarms = Vec::new();
    for tick in first..grid.ticks() {
        let mut alarm = false;
        let mut complete = true;
        for (s, id) in ids.iter().enumerate() {
            match grid_history(&grid, s, tick, cfg.window_len) {
                Some(values) => {
                    let w = Window {
                        stream: id.clone(),
                        end_t: grid.time(tick),
                        samples: values.to_vec(),
                    };
                    alarm |= moving_variance_step(cfg, &w)?;
                }
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if complete {
            alarms.push((grid.time(tick), alarm));
        }
    }
    Ok(BaselineRun { name: "moving_variance".into(), alarms })
}

/// Runs the MLE classifier on each tick's reading vector.
pub fn run_mle(
    trace: &RssTrace,
    model: &MleModel,
    monitor_start_t: f64,
    rate_hz: f64,
) -> Result<BaselineRun> {
    let grid = SyncGrid::build(trace, 1.0 / rate_hz, MAX_GAP_TICKS)?;
    let ids: Vec<StreamId> = grid.stream_ids().to_vec();
    if ids != model.streams {
        return Err(Error::Data("trace streams do not match the MLE model's streams".into()));
    }
    let first = ((monitor_start_t - grid.t0) * rate_hz).ceil().max(0.0) as usize;
    let mut alarms = Vec::new();
    let mut values = vec![0.0; ids.len()];
    for tick in first..grid.ticks() {
        let mut complete = true;
        for s in 0..ids.len() {
            if grid.status(s, tick) == crate::trace::TickStatus::Invalid {
                complete = false;
                break;
            }
            values[s] = grid.value(s, tick);
        }
        if complete {
            let (_, alarm) = model.classify(&values)?;
            alarms.push((grid.time(tick), alarm));
        }
    }
    Ok(BaselineRun { name: "mle".into(), alarms })
}
