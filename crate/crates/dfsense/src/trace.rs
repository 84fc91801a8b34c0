//! RSS data model: streams, traces, sliding windows, ground-truth labels,
//! and the synchronized tick grid the detector runs on.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::io;

/// Nominal sampling rate when a config does not override it.
pub const DEFAULT_RATE_HZ: f64 = 1.0;
/// Consecutive missing ticks tolerated before a stream's tick is invalid.
pub const MAX_GAP_TICKS: usize = 5;

/// One monitored link, identified by its transmitter and receiver names.
/// Canonical text form is `"<ap>-<mp>"`, e.g. `"AP1-MP1"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StreamId {
    pub ap: String,
    pub mp: String,
}

impl StreamId {
    pub fn new(ap: impl Into<String>, mp: impl Into<String>) -> Self {
        StreamId { ap: ap.into(), mp: mp.into() }
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.ap, self.mp)
    }
}

impl FromStr for StreamId {
    type Err = Error;

    /// Splits on the first `-`; node names themselves must not contain one.
    fn from_str(s: &str) -> Result<Self> {
        let (ap, mp) = s
            .split_once('-')
            .ok_or_else(|| Error::Data(format!("stream id {s:?} is not of the form AP-MP")))?;
        if ap.is_empty() || mp.is_empty() {
            return Err(Error::Data(format!("stream id {s:?} has an empty endpoint")));
        }
        Ok(StreamId::new(ap, mp))
    }
}

impl Serialize for StreamId {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for StreamId {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// One RSS reading on one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssSample {
    pub t: f64,
    pub stream: StreamId,
    pub rss: f64,
}

/// Time-sorted readings for a single stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamSeries {
    pub t: Vec<f64>,
    pub rss: Vec<f64>,
}

impl StreamSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// A full recording: per-stream series keyed by stream id, kept in
/// lexicographic stream order for deterministic iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RssTrace {
    streams: BTreeMap<StreamId, StreamSeries>,
}

impl RssTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a sample, enforcing strictly increasing timestamps per stream.
    pub fn push(&mut self, sample: RssSample) -> Result<()> {
        if !sample.rss.is_finite() || !sample.t.is_finite() {
            return Err(Error::Data(format!(
                "non-finite sample on {} at t={}",
                sample.stream, sample.t
            )));
        }
        let series = self.streams.entry(sample.stream.clone()).or_default();
        if let Some(&last) = series.t.last() {
            if sample.t <= last {
                return Err(Error::NonMonotoneTimestamp { stream: sample.stream.to_string(), t: sample.t });
            }
        }
        series.t.push(sample.t);
        series.rss.push(sample.rss);
        Ok(())
    }

    /// Number of distinct streams.
    pub fn stream_count(&self) -> usize {
        self.streams.len()
    }

    pub fn stream_ids(&self) -> impl Iterator<Item = &StreamId> {
        self.streams.keys()
    }

    pub fn series(&self, stream: &StreamId) -> Option<&StreamSeries> {
        self.streams.get(stream)
    }

    pub fn total_samples(&self) -> usize {
        self.streams.values().map(|s| s.len()).sum()
    }

    /// Copies the samples with t in [start, end) into a new trace.
    /// Streams with no samples in the range are dropped.
    pub fn slice(&self, start: f64, end: f64) -> RssTrace {
        let mut out = RssTrace::new();
        for (id, series) in &self.streams {
            let lo = series.t.partition_point(|&t| t < start);
            let hi = series.t.partition_point(|&t| t < end);
            if lo < hi {
                out.streams.insert(
                    id.clone(),
                    StreamSeries {
                        t: series.t[lo..hi].to_vec(),
                        rss: series.rss[lo..hi].to_vec(),
                    },
                );
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StreamId, &StreamSeries)> {
        self.streams.iter()
    }

    /// All samples merged back into time order (stream order breaks ties),
    /// as written to trace files.
    pub fn to_samples(&self) -> Vec<RssSample> {
        let mut out: Vec<RssSample> = Vec::with_capacity(self.total_samples());
        for (id, series) in &self.streams {
            for (&t, &rss) in series.t.iter().zip(&series.rss) {
                out.push(RssSample { t, stream: id.clone(), rss });
            }
        }
        out.sort_by(|a, b| a.t.total_cmp(&b.t).then_with(|| a.stream.cmp(&b.stream)));
        out
    }

    /// Sliding windows of length `l` over one stream's readings: one window
    /// per tick from the l-th sample on, consecutive windows overlapping in
    /// l-1 samples. Returns an empty sequence when the stream is shorter
    /// than `l`.
    pub fn windows(&self, stream: &StreamId, l: usize) -> Result<Vec<Window>> {
        if l < 2 {
            return Err(Error::InvalidParam(format!("window length must be >= 2, got {l}")));
        }
        let series = self
            .series(stream)
            .ok_or_else(|| Error::UnknownStream(stream.to_string()))?;
        let n = series.len();
        if n < l {
            return Ok(Vec::new());
        }
        Ok((0..=n - l)
            .map(|i| Window {
                stream: stream.clone(),
                end_t: series.t[i + l - 1],
                samples: series.rss[i..i + l].to_vec(),
            })
            .collect())
    }
}

/// The `l` most recent readings of one stream ending at `end_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub stream: StreamId,
    pub end_t: f64,
    pub samples: Vec<f64>,
}

/// Ground-truth state over an interval of the recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Silence,
    Motion,
}

/// One labeled interval, half-open `[start, end)`. `loc` optionally names
/// the region occupied during a motion interval, for location-aware
/// training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelInterval {
    pub start: f64,
    pub end: f64,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loc: Option<String>,
}

/// Sorted, non-overlapping ground-truth intervals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelTrack {
    intervals: Vec<LabelInterval>,
}

impl LabelTrack {
    pub fn from_intervals(mut intervals: Vec<LabelInterval>) -> Result<Self> {
        intervals.sort_by(|a, b| a.start.total_cmp(&b.start));
        for iv in &intervals {
            if !(iv.start < iv.end) {
                return Err(Error::Data(format!(
                    "label interval [{}, {}) is empty or reversed",
                    iv.start, iv.end
                )));
            }
        }
        for pair in intervals.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(Error::Data(format!(
                    "label intervals [{}, {}) and [{}, {}) overlap",
                    pair[0].start, pair[0].end, pair[1].start, pair[1].end
                )));
            }
        }
        Ok(LabelTrack { intervals })
    }

    pub fn intervals(&self) -> &[LabelInterval] {
        &self.intervals
    }

    /// Label covering time `t`, or None when `t` falls in a gap.
    pub fn label_at(&self, t: f64) -> Option<Label> {
        self.interval_at(t).map(|iv| iv.label)
    }

    pub fn interval_at(&self, t: f64) -> Option<&LabelInterval> {
        // Binary search over sorted starts, then containment check.
        let idx = self.intervals.partition_point(|iv| iv.start <= t);
        if idx == 0 {
            return None;
        }
        let iv = &self.intervals[idx - 1];
        (t < iv.end).then_some(iv)
    }

    pub fn is_motion(&self, t: f64) -> bool {
        self.label_at(t) == Some(Label::Motion)
    }

    pub fn motion_intervals(&self) -> impl Iterator<Item = &LabelInterval> {
        self.intervals.iter().filter(|iv| iv.label == Label::Motion)
    }
}

/// Validity of one (stream, tick) cell in the synchronized grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickStatus {
    /// A reading landed in this tick's half-width neighborhood.
    Observed,
    /// No reading this tick; last value carried forward.
    Carried,
    /// Gap exceeded the tolerance, or no reading seen yet.
    Invalid,
}

/// All streams resampled onto one shared tick grid. A tick with no
/// reading carries the last-seen value forward and is flagged; more than
/// `max_gap` consecutive misses invalidates the tick for that stream.
#[derive(Debug, Clone)]
pub struct SyncGrid {
    pub t0: f64,
    pub dt: f64,
    streams: Vec<StreamId>,
    values: Vec<Vec<f64>>,
    status: Vec<Vec<TickStatus>>,
    ticks: usize,
}

impl SyncGrid {
    pub fn build(trace: &RssTrace, dt: f64, max_gap: usize) -> Result<SyncGrid> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParam(format!("tick interval must be > 0, got {dt}")));
        }
        let streams: Vec<StreamId> = trace.stream_ids().cloned().collect();
        let mut t0 = f64::INFINITY;
        let mut t_end = f64::NEG_INFINITY;
        for (_, series) in trace.iter() {
            if let (Some(&first), Some(&last)) = (series.t.first(), series.t.last()) {
                t0 = t0.min(first);
                t_end = t_end.max(last);
            }
        }
        if streams.is_empty() || !t0.is_finite() {
            return Ok(SyncGrid { t0: 0.0, dt, streams, values: vec![], status: vec![], ticks: 0 });
        }
        let ticks = ((t_end - t0) / dt).round() as usize + 1;
        let mut values = Vec::with_capacity(streams.len());
        let mut status = Vec::with_capacity(streams.len());
        for id in &streams {
            let series = trace.series(id).expect("stream listed but missing");
            let mut vals = Vec::with_capacity(ticks);
            let mut stats = Vec::with_capacity(ticks);
            let mut idx = 0usize;
            let mut last_value: Option<f64> = None;
            let mut miss_run = 0usize;
            for k in 0..ticks {
                let tk = t0 + k as f64 * dt;
                let mut observed = None;
                // Most recent reading no later than the tick's half-width edge.
                while idx < series.len() && series.t[idx] <= tk + dt / 2.0 {
                    observed = Some(series.rss[idx]);
                    idx += 1;
                }
                match observed {
                    Some(v) => {
                        last_value = Some(v);
                        miss_run = 0;
                        vals.push(v);
                        stats.push(TickStatus::Observed);
                    }
                    None => match last_value {
                        Some(v) => {
                            miss_run += 1;
                            vals.push(v);
                            stats.push(if miss_run > max_gap {
                                TickStatus::Invalid
                            } else {
                                TickStatus::Carried
                            });
                        }
                        None => {
                            vals.push(f64::NAN);
                            stats.push(TickStatus::Invalid);
                        }
                    },
                }
            }
            values.push(vals);
            status.push(stats);
        }
        Ok(SyncGrid { t0, dt, streams, values, status, ticks })
    }

    pub fn ticks(&self) -> usize {
        self.ticks
    }

    pub fn stream_ids(&self) -> &[StreamId] {
        &self.streams
    }

    pub fn stream_index(&self, id: &StreamId) -> Option<usize> {
        self.streams.iter().position(|s| s == id)
    }

    pub fn time(&self, tick: usize) -> f64 {
        self.t0 + tick as f64 * self.dt
    }

    pub fn value(&self, stream_idx: usize, tick: usize) -> f64 {
        self.values[stream_idx][tick]
    }

    pub fn status(&self, stream_idx: usize, tick: usize) -> TickStatus {
        self.status[stream_idx][tick]
    }

    /// The `l` values ending at `end_tick`, provided every tick in the span
    /// is usable (observed or carried).
    pub fn window(&self, stream_idx: usize, end_tick: usize, l: usize) -> Option<&[f64]> {
        if end_tick + 1 < l || end_tick >= self.ticks {
            return None;
        }
        let start = end_tick + 1 - l;
        let usable = self.status[stream_idx][start..=end_tick]
            .iter()
            .all(|s| *s != TickStatus::Invalid);
        usable.then(|| &self.values[stream_idx][start..=end_tick])
    }
}

/// Reads a trace file. `.csv` selects the `t,stream,rss` reader; anything
/// else is parsed as JSON Lines.
pub fn load_trace(path: &Path) -> Result<RssTrace> {
    let samples: Vec<RssSample> = if path.extension().is_some_and(|e| e == "csv") {
        io::read_csv(path)?
    } else {
        io::read_jsonl(path)?
    };
    let mut trace = RssTrace::new();
    for s in samples {
        trace.push(s)?;
    }
    Ok(trace)
}

pub fn save_trace(path: &Path, trace: &RssTrace) -> Result<()> {
    io::write_jsonl(path, &trace.to_samples())
}

pub fn load_labels(path: &Path) -> Result<LabelTrack> {
    LabelTrack::from_intervals(io::read_jsonl(path)?)
}

pub fn save_labels(path: &Path, labels: &LabelTrack) -> Result<()> {
    io::write_jsonl(path, labels.intervals())
}

pub fn load_geometry(path: &Path) -> Result<crate::geom::SiteGeometry> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let geo: crate::geom::SiteGeometry = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    geo.validate()?;
    Ok(geo)
}

pub fn save_geometry(path: &Path, geo: &crate::geom::SiteGeometry) -> Result<()> {
    geo.validate()?;
    let text = serde_json::to_string_pretty(geo).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
