//! The online detection engine.
//!
//! Per tick, every stream's current window is scored against its silence
//! profile (basic detection); profiles then absorb calm feature groups
//! (online update); finally all streams' scores are fused through an
//! exponentially smoothed sum compared against a learned silence level
//! (decision refinement). Heat grids and the event-independence analysis
//! interpret per-stream scores spatially.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Bounds, Point, Segment, SiteGeometry};
use crate::profile::{feature, maybe_update, FeatureKind, NormalProfile, UpdatePolicy};
use crate::trace::{RssTrace, StreamId, SyncGrid, Window, MAX_GAP_TICKS};

/// Exponential-decay length scale for heat grids, meters.
pub const DEFAULT_HEAT_LAMBDA_M: f64 = 2.0;

/// One stream's score at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamVerdict {
    pub t: f64,
    pub stream: StreamId,
    /// Feature value of the window ending at `t`.
    pub x: f64,
    /// x measured against the profile bound; above 1 is anomalous.
    pub score: f64,
    pub anomalous: bool,
}

/// Scores one window against the stream's profile.
pub fn basic_step(profile: &NormalProfile, window: &Window) -> Result<StreamVerdict> {
    if window.stream != profile.stream {
        return Err(Error::Data(format!(
            "window for {} scored against profile for {}",
            window.stream, profile.stream
        )));
    }
    let x = feature(&window.samples, profile.feature)?;
    let score = profile.score(x);
    Ok(StreamVerdict {
        t: window.end_t,
        stream: window.stream.clone(),
        x,
        score,
        anomalous: score > 1.0,
    })
}

/// Fused decision for one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalDecision {
    pub t: f64,
    /// Sum of all streams' anomaly scores, untruncated.
    pub raw_sum: f64,
    pub smoothed: f64,
    /// Any stream anomalous this tick.
    pub basic_alarm: bool,
    pub refined_alarm: bool,
}

/// State of the decision-refinement filter.
///
/// The smoothed score sum is compared against `normal_level`, its own
/// silence-time running mean. An alarm latches when the smoothed sum
/// rises more than `rel_threshold` above the level while some stream is
/// (recently) anomalous, and releases at half that rise (hysteresis).
/// The level is learned after a warm-up and frozen during alarms so
/// alarms cannot poison it.
#[derive(Debug, Clone)]
pub struct RefinementState {
    pub beta: f64,
    pub rel_threshold: f64,
    pub smoothed: f64,
    pub normal_level: Option<f64>,
    stream_count: usize,
    warmup_ticks: usize,
    level_coeff: f64,
    onset_window_ticks: usize,
    ticks_seen: usize,
    alarmed: bool,
    ticks_since_anomalous: usize,
}

impl RefinementState {
    pub fn new(params: &DetectorParams, stream_count: usize) -> RefinementState {
        RefinementState {
            beta: params.beta,
            rel_threshold: params.rel_threshold,
            smoothed: 0.0,
            normal_level: None,
            stream_count,
            warmup_ticks: params.warmup_ticks,
            level_coeff: params.level_coeff,
            onset_window_ticks: params.onset_window_ticks,
            ticks_seen: 0,
            alarmed: false,
            ticks_since_anomalous: usize::MAX,
        }
    }

    /// Consumes one tick's verdicts (exactly one per stream) and returns
    /// the fused decision.
    pub fn refine_step(&mut self, verdicts: &[StreamVerdict]) -> Result<GlobalDecision> {
        if verdicts.len() != self.stream_count {
            return Err(Error::Data(format!(
                "refinement needs {} stream verdicts per tick, got {}",
                self.stream_count,
                verdicts.len()
            )));
        }
        let t = verdicts[0].t;
        let raw_sum: f64 = verdicts.iter().map(|v| v.score).sum();
        let any_anomalous = verdicts.iter().any(|v| v.anomalous);

        self.smoothed = if self.ticks_seen == 0 {
            raw_sum
        } else {
            self.beta * raw_sum + (1.0 - self.beta) * self.smoothed
        };
        self.ticks_seen += 1;
        self.ticks_since_anomalous = if any_anomalous {
            0
        } else {
            self.ticks_since_anomalous.saturating_add(1)
        };

        if self.normal_level.is_none() && self.ticks_seen >= self.warmup_ticks {
            self.normal_level = Some(self.smoothed);
        }

        if let Some(level) = self.normal_level {
            if self.alarmed {
                if self.smoothed < (1.0 + self.rel_threshold / 2.0) * level {
                    self.alarmed = false;
                }
            } else {
                let risen = self.smoothed > (1.0 + self.rel_threshold) * level;
                let recent_anomaly = self.ticks_since_anomalous <= self.onset_window_ticks;
                if risen && recent_anomaly {
                    self.alarmed = true;
                }
            }
            if !self.alarmed {
                self.normal_level =
                    Some(self.level_coeff * self.smoothed + (1.0 - self.level_coeff) * level);
            }
        }

        Ok(GlobalDecision {
            t,
            raw_sum,
            smoothed: self.smoothed,
            basic_alarm: any_anomalous,
            refined_alarm: self.alarmed,
        })
    }
}

/// Engine parameters. Defaults are the operating point the detector is
/// documented with: l=5, alpha=0.01, l_update=15, beta=0.04 and a 22.5%
/// relative rise threshold; rel_threshold tolerates the whole 20-25%
/// band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    /// Sliding-window length in ticks.
    pub l: usize,
    /// Significance for the critical bound.
    pub alpha: f64,
    /// Online-update group size.
    pub l_update: usize,
    /// Disables profile updates when false (frozen profiles).
    pub update_enabled: bool,
    /// Smoothing coefficient of the refinement filter.
    pub beta: f64,
    /// Relative rise over the normal level that triggers an alarm.
    pub rel_threshold: f64,
    /// Feature used when training profiles.
    pub feature: FeatureKind,
    pub rate_hz: f64,
    /// Ticks of assumed silence used to initialize the normal level.
    pub warmup_ticks: usize,
    /// Coefficient of the normal level's slow running mean.
    pub level_coeff: f64,
    /// How recently a stream must have been anomalous for a rise to
    /// count as an alarm onset.
    pub onset_window_ticks: usize,
    /// Monitoring starts at this time; earlier ticks only provide window
    /// history.
    pub monitor_start_t: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            l: 5,
            alpha: 0.01,
            l_update: 15,
            update_enabled: true,
            beta: 0.04,
            rel_threshold: 0.225,
            feature: FeatureKind::Variance,
            rate_hz: 1.0,
            warmup_ticks: 60,
            level_coeff: 0.005,
            onset_window_ticks: 25,
            monitor_start_t: 0.0,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if self.l < 2 {
            return Err(Error::InvalidParam(format!("l must be >= 2, got {}", self.l)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParam(format!("alpha must be in (0,1), got {}", self.alpha)));
        }
        if self.l_update == 0 {
            return Err(Error::InvalidParam("l_update must be >= 1".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParam(format!("beta must be in (0,1], got {}", self.beta)));
        }
        if !(self.rel_threshold > 0.0) {
            return Err(Error::InvalidParam("rel_threshold must be > 0".into()));
        }
        if !(self.rate_hz > 0.0) {
            return Err(Error::InvalidParam("rate_hz must be > 0".into()));
        }
        Ok(())
    }
}

/// Everything a monitoring run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub decisions: Vec<GlobalDecision>,
    pub verdicts: Vec<StreamVerdict>,
    /// Profiles after all accepted online updates.
    pub final_profiles: BTreeMap<StreamId, NormalProfile>,
}

/// Runs the full pipeline over a trace: window, score, update, refine,
/// in tick order. Deterministic.
///
/// Ticks where any stream lacks a usable window produce no fused
/// decision (refinement is a per-tick barrier over all streams), and a
/// stream's broken tick also discards its partially collected update
/// group, since update groups must cover consecutive ticks.
pub fn run(
    trace: &RssTrace,
    profiles: &BTreeMap<StreamId, NormalProfile>,
    params: &DetectorParams,
) -> Result<RunOutput> {
    params.validate()?;
    let grid = SyncGrid::build(trace, 1.0 / params.rate_hz, MAX_GAP_TICKS)?;
    let streams: Vec<StreamId> = grid.stream_ids().to_vec();
    let mut live: Vec<NormalProfile> = Vec::with_capacity(streams.len());
    for id in &streams {
        let p = profiles
            .get(id)
            .ok_or_else(|| Error::Data(format!("stream {id} has no profile")))?;
        p.validate()?;
        live.push(p.clone());
    }
    let policy = UpdatePolicy::new(params.l_update)?;
    let mut state = RefinementState::new(params, streams.len());
    let mut pending: Vec<Vec<(f64, f64)>> = vec![Vec::new(); streams.len()];
    let mut out = RunOutput {
        decisions: Vec::new(),
        verdicts: Vec::new(),
        final_profiles: BTreeMap::new(),
    };

    let first_tick = ((params.monitor_start_t - grid.t0) * params.rate_hz).ceil().max(0.0) as usize;
    for k in first_tick..grid.ticks() {
        let t = grid.time(k);
        let mut tick_verdicts: Vec<StreamVerdict> = Vec::with_capacity(streams.len());
        let mut complete = true;
        for (s, id) in streams.iter().enumerate() {
            match grid.window(s, k, params.l) {
                Some(values) => {
                    let x = feature(values, live[s].feature)?;
                    let score = live[s].score(x);
                    let v = StreamVerdict {
                        t,
                        stream: id.clone(),
                        x,
                        score,
                        anomalous: score > 1.0,
                    };
                    pending[s].push((x, score));
                    tick_verdicts.push(v);
                }
                None => {
                    pending[s].clear();
                    complete = false;
                }
            }
        }
        if complete {
            let decision = state.refine_step(&tick_verdicts)?;
            out.decisions.push(decision);
        }
        out.verdicts.extend(tick_verdicts);
        for (s, group) in pending.iter_mut().enumerate() {
            if group.len() == params.l_update {
                if params.update_enabled {
                    live[s] = maybe_update(&live[s], group, &policy)?;
                }
                group.clear();
            }
        }
    }

    for (id, p) in streams.into_iter().zip(live) {
        out.final_profiles.insert(id, p);
    }
    Ok(out)
}

/// A maximal run of anomalous ticks on one stream, reduced to its peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedEvent {
    pub stream: StreamId,
    pub peak_t: f64,
    pub peak_score: f64,
}

/// Extracts events from a verdict log: per stream, each maximal run of
/// anomalous ticks becomes one event at its highest-score tick (the
/// earliest such tick on a tie).
pub fn detect_events(verdicts: &[StreamVerdict]) -> Vec<DetectedEvent> {
    let mut by_stream: BTreeMap<&StreamId, Vec<&StreamVerdict>> = BTreeMap::new();
    for v in verdicts {
        by_stream.entry(&v.stream).or_default().push(v);
    }
    let mut events = Vec::new();
    for (stream, mut vs) in by_stream {
        vs.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut peak: Option<(f64, f64)> = None;
        for v in vs {
            if v.anomalous {
                peak = match peak {
                    Some((pt, ps)) if ps >= v.score => Some((pt, ps)),
                    _ => Some((v.t, v.score)),
                };
            } else if let Some((peak_t, peak_score)) = peak.take() {
                events.push(DetectedEvent { stream: stream.clone(), peak_t, peak_score });
            }
        }
        if let Some((peak_t, peak_score)) = peak {
            events.push(DetectedEvent { stream: stream.clone(), peak_t, peak_score });
        }
    }
    events
}

/// Pairwise minimum distances between stream segments and the travel
/// times they imply at the site's maximum walking speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceMatrix {
    pub streams: Vec<StreamId>,
    /// Meters; symmetric, zero diagonal.
    pub d_min: Vec<Vec<f64>>,
    /// Seconds; d_min / v_max elementwise.
    pub t_min: Vec<Vec<f64>>,
}

impl IndependenceMatrix {
    pub fn t_min_between(&self, a: &StreamId, b: &StreamId) -> Option<f64> {
        let i = self.streams.iter().position(|s| s == a)?;
        let j = self.streams.iter().position(|s| s == b)?;
        Some(self.t_min[i][j])
    }
}

/// Builds the reachability matrices from deployment geometry.
pub fn independence_matrix(geo: &SiteGeometry) -> Result<IndependenceMatrix> {
    geo.validate()?;
    let segs: Vec<Segment> = geo
        .streams
        .iter()
        .map(|s| geo.segment(s))
        .collect::<Result<Vec<_>>>()?;
    let k = segs.len();
    let mut d_min = vec![vec![0.0; k]; k];
    let mut t_min = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let d = segs[i].dist_to_segment(&segs[j]);
            d_min[i][j] = d;
            d_min[j][i] = d;
            t_min[i][j] = d / geo.v_max;
            t_min[j][i] = d / geo.v_max;
        }
    }
    Ok(IndependenceMatrix { streams: geo.streams.clone(), d_min, t_min })
}

/// Pairwise-independence report over a set of detected events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    /// For each event pair (by index into the canonically sorted event
    /// list), whether the pair is provably independent.
    pub pairwise: Vec<(usize, usize, bool)>,
    /// True when every pair is independent.
    pub mutually_independent: bool,
    /// Size of the largest subset in which all pairs are independent;
    /// such a subset has one event per stream at most, so the count
    /// never exceeds the stream count.
    pub certified_count: usize,
}

/// Analyzes events for provable simultaneity: a pair is independent iff
/// the streams differ and the peak-time gap is below the pair's minimum
/// travel time. Output does not depend on input order (events are sorted
/// canonically first). The largest certified subset is found exactly for
/// up to 20 events and greedily beyond that.
pub fn independent_events(
    events: &[DetectedEvent],
    matrix: &IndependenceMatrix,
) -> Result<IndependenceReport> {
    let mut events: Vec<DetectedEvent> = events.to_vec();
    events.sort_by(|a, b| a.peak_t.total_cmp(&b.peak_t).then_with(|| a.stream.cmp(&b.stream)));
    let n = events.len();
    let mut independent = vec![vec![false; n]; n];
    let mut pairwise = Vec::new();
    let mut all = true;
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&events[i], &events[j]);
            let indep = if a.stream == b.stream {
                false
            } else {
                let t_min = matrix.t_min_between(&a.stream, &b.stream).ok_or_else(|| {
                    Error::Data(format!("no reachability entry for {} / {}", a.stream, b.stream))
                })?;
                (a.peak_t - b.peak_t).abs() < t_min
            };
            independent[i][j] = indep;
            independent[j][i] = indep;
            pairwise.push((i, j, indep));
            all &= indep;
        }
    }

    let certified_count = if n == 0 {
        0
    } else if all {
        n
    } else if n <= 20 {
        // Exact maximum clique over the independence graph by bitmask.
        let adj: Vec<u32> = (0..n)
            .map(|i| (0..n).filter(|&j| independent[i][j]).fold(0u32, |m, j| m | (1 << j)))
            .collect();
        let mut best = 1usize;
        for mask in 1u32..(1 << n) {
            let count = mask.count_ones() as usize;
            if count <= best {
                continue;
            }
            let ok = (0..n)
                .filter(|&i| mask & (1 << i) != 0)
                .all(|i| (mask & !(1 << i)) & !adj[i] == 0);
            if ok {
                best = count;
            }
        }
        best
    } else {
        // Greedy over the canonical order.
        let mut chosen: Vec<usize> = Vec::new();
        for i in 0..n {
            if chosen.iter().all(|&c| independent[c][i]) {
                chosen.push(i);
            }
        }
        chosen.len()
    };

    Ok(IndependenceReport { pairwise, mutually_independent: all && n > 0, certified_count })
}

/// A rasterized heat grid over the site bounds, row-major with the y
/// axis increasing by row. Cell (ix, iy) is centered at
/// (x0 + (ix+0.5)res, y0 + (iy+0.5)res).
#[derive(Debug, Clone, PartialEq)]
pub struct HeatGrid {
    pub bounds: Bounds,
    pub res_m: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, length nx*ny.
    pub values: Vec<f64>,
}

impl HeatGrid {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point {
        let [x0, y0, ..] = self.bounds.0;
        Point::new(x0 + (ix as f64 + 0.5) * self.res_m, y0 + (iy as f64 + 0.5) * self.res_m)
    }

    /// Index and center of the hottest cell.
    pub fn max_cell(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let v = self.at(ix, iy);
                if v > best.2 {
                    best = (ix, iy, v);
                }
            }
        }
        best
    }

    /// Writes the grid as CSV: comment header with bounds and
    /// resolution, then ny rows of nx values.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write as _;
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let [x0, y0, x1, y1] = self.bounds.0;
        writeln!(w, "# bounds {x0} {y0} {x1} {y1}").map_err(|e| Error::io(path, e))?;
        writeln!(w, "# res_m {}", self.res_m).map_err(|e| Error::io(path, e))?;
        for iy in 0..self.ny {
            let row: Vec<String> =
                (0..self.nx).map(|ix| format!("{}", self.at(ix, iy))).collect();
            writeln!(w, "{}", row.join(",")).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Rasterizes one tick's verdicts into a heat grid: each cell accumulates
/// max(0, score - 1) * exp(-d / lambda) over all streams, with d the
/// distance from the cell center to the stream's segment.
pub fn region_heatmap(
    verdicts: &[StreamVerdict],
    geo: &SiteGeometry,
    grid_res_m: f64,
    lambda_m: f64,
) -> Result<HeatGrid> {
    if !(grid_res_m > 0.0) || !(lambda_m > 0.0) {
        return Err(Error::InvalidParam("heatmap needs positive resolution and decay".into()));
    }
    geo.validate()?;
    let nx = (geo.bounds.width() / grid_res_m).ceil() as usize;
    let ny = (geo.bounds.height() / grid_res_m).ceil() as usize;
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidParam(format!(
            "resolution {grid_res_m} m produces an empty grid over {:?}",
            geo.bounds.0
        )));
    }
    let mut contrib: Vec<(Segment, f64)> = Vec::new();
    for v in verdicts {
        let excess = (v.score - 1.0).max(0.0);
        if excess > 0.0 {
            contrib.push((geo.segment(&v.stream)?, excess));
        }
    }
    let mut grid = HeatGrid {
        bounds: geo.bounds,
        res_m: grid_res_m,
        nx,
        ny,
        values: vec![0.0; nx * ny],
    };
    for iy in 0..ny {
        for ix in 0..nx {
            let p = grid.cell_center(ix, iy);
            let mut heat = 0.0;
            for (seg, excess) in &contrib {
                heat += excess * (-seg.dist_to_point(p) / lambda_m).exp();
            }
            grid.values[iy * nx + ix] = heat;
        }
    }
    Ok(grid)
}
