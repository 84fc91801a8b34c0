//! Scoring detector output against labeled ground truth, per tick:
//! confusion counts, FP/FN rates, F-measure, detection-latency
//! percentiles, and multi-detector comparison tables.

use serde::{Deserialize, Serialize};

use crate::detect::GlobalDecision;
use crate::error::{Error, Result};
use crate::trace::LabelTrack;

/// Per-tick confusion tally. Positive = alarm, truth positive = motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: usize, denom: usize) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fp_rate(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn fn_rate(&self) -> f64 {
        ratio(self.fn_, self.fn_ + self.tp)
    }

    /// Harmonic mean of precision and recall; 0 when both are 0.
    pub fn f_measure(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// One detector's scores over one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub detector: String,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    /// 90th percentile of per-interval detection latency, seconds;
    /// absent when no motion interval was detected.
    pub latency_p90_s: Option<f64>,
    /// Per detected motion interval, first-alarm delay in seconds.
    pub latencies_s: Vec<f64>,
    /// Motion intervals with no alarmed tick at all; excluded from the
    /// latency distribution.
    pub missed_intervals: usize,
    /// Parameter set the detector ran with, for comparison tables.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
}

/// Which alarm channel of the fused decision stream to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmChannel {
    Basic,
    Refined,
}

/// Projects a decision series onto (tick, alarm) pairs.
pub fn decision_alarms(decisions: &[GlobalDecision], channel: AlarmChannel) -> Vec<(f64, bool)> {
    decisions
        .iter()
        .map(|d| {
            (d.t, match channel {
                AlarmChannel::Basic => d.basic_alarm,
                AlarmChannel::Refined => d.refined_alarm,
            })
        })
        .collect()
}

/// Nearest-rank percentile of an unsorted sample.
fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

/// Scores per-tick alarms against the label track. Every alarm tick must
/// be covered by a label interval. Latency is measured per motion
/// interval as first alarmed tick minus interval start; only intervals
/// overlapping the scored time range count, and those never alarmed are
/// tallied as missed instead of entering the distribution.
pub fn score(alarms: &[(f64, bool)], truth: &LabelTrack, detector: &str) -> Result<EvalReport> {
    if detector.is_empty() {
        return Err(Error::InvalidParam("detector name must not be empty".into()));
    }
    if alarms.is_empty() {
        return Err(Error::InsufficientData("no decisions to score".into()));
    }
    let mut counts = ConfusionCounts::default();
    for &(t, alarm) in alarms {
        let motion = match truth.label_at(t) {
            Some(label) => label == crate::trace::Label::Motion,
            None => {
                return Err(Error::Data(format!("tick {t} not covered by any label interval")));
            }
        };
        match (motion, alarm) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fn_ += 1,
            (false, true) => counts.fp += 1,
            (false, false) => counts.tn += 1,
        }
    }

    let t_lo = alarms.iter().map(|&(t, _)| t).fold(f64::INFINITY, f64::min);
    let t_hi = alarms.iter().map(|&(t, _)| t).fold(f64::NEG_INFINITY, f64::max);
    let mut latencies = Vec::new();
    let mut missed = 0;
    for iv in truth.motion_intervals() {
        if iv.end <= t_lo || iv.start > t_hi {
            continue;
        }
        let first_alarm = alarms
            .iter()
            .filter(|&&(t, alarm)| alarm && t >= iv.start && t < iv.end)
            .map(|&(t, _)| t)
            .fold(f64::INFINITY, f64::min);
        if first_alarm.is_finite() {
            latencies.push(first_alarm - iv.start);
        } else {
            missed += 1;
        }
    }

    Ok(EvalReport {
        detector: detector.to_string(),
        counts,
        precision: counts.precision(),
        recall: counts.recall(),
        f_measure: counts.f_measure(),
        fp_rate: counts.fp_rate(),
        fn_rate: counts.fn_rate(),
        latency_p90_s: percentile(&latencies, 0.9),
        latencies_s: latencies,
        missed_intervals: missed,
        params: serde_json::Value::Null,
    })
}

/// Fixed column order of comparison tables.
pub const COMPARISON_COLUMNS: [&str; 8] = [
    "detector",
    "f_measure",
    "precision",
    "recall",
    "fp_rate",
    "fn_rate",
    "latency_p90_s",
    "missed_intervals",
];

/// Multi-detector comparison: one row per report, fixed column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub columns: Vec<String>,
    pub rows: Vec<EvalReport>,
}

/// Builds the comparison document. Needs at least two reports and
/// non-empty detector names; row order follows the input.
pub fn compare(reports: &[EvalReport]) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::InvalidParam(format!(
            "comparison needs at least 2 reports, got {}",
            reports.len()
        )));
    }
    for r in reports {
        if r.detector.is_empty() {
            return Err(Error::InvalidParam("comparison report with empty detector name".into()));
        }
    }
    Ok(Comparison {
        columns: COMPARISON_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows: reports.to_vec(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "-".to_string(),
    }
}

impl EvalReport {
    /// Plain-text block, all rates at 4 decimals.
    pub fn render_text(&self) -> String {
        format!(
            "detector: {}\n\
             f_measure: {:.4}\nprecision: {:.4}\nrecall: {:.4}\n\
             fp_rate: {:.4}\nfn_rate: {:.4}\n\
             latency_p90_s: {}\nmissed_intervals: {}\n\
             ticks: {} (tp {} fp {} tn {} fn {})\n",
            self.detector,
            self.f_measure,
            self.precision,
            self.recall,
            self.fp_rate,
            self.fn_rate,
            fmt_opt(self.latency_p90_s),
            self.missed_intervals,
            self.counts.total(),
            self.counts.tp,
            self.counts.fp,
            self.counts.tn,
            self.counts.fn_,
        )
    }
}

impl Comparison {
    /// Aligned plain-text table, rates at 4 decimals.
    pub fn render_text(&self) -> String {
        let mut cells: Vec<Vec<String>> = vec![self.columns.clone()];
        for r in &self.rows {
            cells.push(vec![
                r.detector.clone(),
                format!("{:.4}", r.f_measure),
                format!("{:.4}", r.precision),
                format!("{:.4}", r.recall),
                format!("{:.4}", r.fp_rate),
                format!("{:.4}", r.fn_rate),
                fmt_opt(r.latency_p90_s),
                r.missed_intervals.to_string(),
            ]);
        }
        let widths: Vec<usize> = (0..cells[0].len())
            .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:>w$}"))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Label, LabelInterval};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn track(intervals: Vec<(f64, f64, Label)>) -> LabelTrack {
        LabelTrack::from_intervals(
            intervals
                .into_iter()
                .map(|(start, end, label)| LabelInterval { start, end, label, loc: None })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn counts_arithmetic() {
        let c = ConfusionCounts { tp: 90, fp: 10, tn: 890, fn_: 10 };
        assert_relative_eq!(c.precision(), 0.9);
        assert_relative_eq!(c.recall(), 0.9);
        assert_relative_eq!(c.f_measure(), 0.9);
        assert_relative_eq!(c.fp_rate(), 10.0 / 900.0);
        assert_relative_eq!(c.fn_rate(), 0.1);
        assert_eq!(c.total(), 1000);
    }

    #[test]
    fn perfect_detector_scores_one() {
        let truth = track(vec![(0.0, 5.0, Label::Silence), (5.0, 10.0, Label::Motion)]);
        let alarms: Vec<(f64, bool)> = (0..10).map(|t| (t as f64, t >= 5)).collect();
        let r = score(&alarms, &truth, "perfect").unwrap();
        assert_eq!(r.f_measure, 1.0);
        assert_eq!(r.fp_rate, 0.0);
        assert_eq!(r.fn_rate, 0.0);
        assert_eq!(r.latency_p90_s, Some(0.0), "alarm at interval start has latency 0");
        assert_eq!(r.missed_intervals, 0);
    }

    #[test]
    fn always_alarm_on_half_motion() {
        let truth = track(vec![(0.0, 50.0, Label::Silence), (50.0, 100.0, Label::Motion)]);
        let alarms: Vec<(f64, bool)> = (0..100).map(|t| (t as f64, true)).collect();
        let r = score(&alarms, &truth, "always").unwrap();
        assert_relative_eq!(r.recall, 1.0);
        assert_relative_eq!(r.precision, 0.5);
        assert_relative_eq!(r.f_measure, 2.0 / 3.0);
    }

    #[test]
    fn latency_three_ticks_in() {
        let truth = track(vec![(0.0, 4.0, Label::Silence), (4.0, 20.0, Label::Motion)]);
        let alarms: Vec<(f64, bool)> = (0..20).map(|t| (t as f64, t >= 7)).collect();
        let r = score(&alarms, &truth, "d").unwrap();
        assert_eq!(r.latencies_s, vec![3.0]);
        assert_eq!(r.latency_p90_s, Some(3.0));
    }

    #[test]
    fn undetected_interval_counts_as_missed() {
        let truth = track(vec![
            (0.0, 10.0, Label::Silence),
            (10.0, 20.0, Label::Motion),
            (20.0, 30.0, Label::Silence),
            (30.0, 40.0, Label::Motion),
        ]);
        // Only the second motion interval gets alarms.
        let alarms: Vec<(f64, bool)> = (0..40).map(|t| (t as f64, t >= 32 && t < 38)).collect();
        let r = score(&alarms, &truth, "d").unwrap();
        assert_eq!(r.missed_intervals, 1);
        assert_eq!(r.latencies_s, vec![2.0]);
    }

    #[test]
    fn intervals_outside_the_scored_range_are_ignored() {
        let truth = track(vec![
            (0.0, 100.0, Label::Motion),
            (100.0, 200.0, Label::Silence),
            (200.0, 300.0, Label::Motion),
        ]);
        let alarms: Vec<(f64, bool)> = (100..200).map(|t| (t as f64, false)).collect();
        let r = score(&alarms, &truth, "d").unwrap();
        assert_eq!(r.missed_intervals, 0, "unmonitored motion is not missed motion");
    }

    #[test]
    fn uncovered_tick_is_an_error() {
        let truth = track(vec![(0.0, 5.0, Label::Silence)]);
        let alarms = vec![(0.0, false), (6.0, false)];
        let err = score(&alarms, &truth, "d").unwrap_err();
        assert!(err.to_string().contains('6'), "error should name the tick: {err}");
    }

    #[test]
    fn all_silence_fp_rate_equals_alarm_fraction_exactly() {
        let truth = track(vec![(0.0, 200.0, Label::Silence)]);
        let alarms: Vec<(f64, bool)> = (0..200).map(|t| (t as f64, t % 7 == 0)).collect();
        let alarmed = alarms.iter().filter(|(_, a)| *a).count();
        let r = score(&alarms, &truth, "d").unwrap();
        assert_eq!(r.fp_rate, alarmed as f64 / 200.0);
    }

    #[test]
    fn scoring_ignores_tick_order() {
        let truth = track(vec![(0.0, 30.0, Label::Silence), (30.0, 60.0, Label::Motion)]);
        let alarms: Vec<(f64, bool)> = (0..60).map(|t| (t as f64, t >= 33)).collect();
        let mut reversed = alarms.clone();
        reversed.reverse();
        assert_eq!(score(&alarms, &truth, "d").unwrap(), score(&reversed, &truth, "d").unwrap());
    }

    #[test]
    fn f_is_bounded_by_the_arithmetic_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..300 {
            let c = ConfusionCounts {
                tp: rng.random_range(0..50),
                fp: rng.random_range(0..50),
                tn: rng.random_range(0..50),
                fn_: rng.random_range(0..50),
            };
            let f = c.f_measure();
            let bound = (c.precision() + c.recall()) / 2.0;
            assert!(f <= bound + 1e-12, "F {f} above (P+R)/2 {bound} for {c:?}");
        }
    }

    fn dummy_report(name: &str) -> EvalReport {
        let counts = ConfusionCounts { tp: 9, fp: 1, tn: 89, fn_: 1 };
        EvalReport {
            detector: name.to_string(),
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
            f_measure: counts.f_measure(),
            fp_rate: counts.fp_rate(),
            fn_rate: counts.fn_rate(),
            latency_p90_s: Some(2.0),
            latencies_s: vec![1.0, 2.0],
            missed_intervals: 0,
            params: serde_json::Value::Null,
        }
    }

    #[test]
    fn compare_validates_and_keeps_row_order() {
        assert!(compare(&[dummy_report("only")]).is_err());
        assert!(compare(&[dummy_report("a"), dummy_report("")]).is_err());
        let cmp = compare(&[dummy_report("b"), dummy_report("a")]).unwrap();
        assert_eq!(cmp.columns, COMPARISON_COLUMNS.to_vec());
        assert_eq!(cmp.rows[0].detector, "b");
        assert_eq!(cmp.rows[1].detector, "a");
    }

    #[test]
    fn identical_reports_render_identical_rows() {
        let cmp = compare(&[dummy_report("x"), dummy_report("x")]).unwrap();
        let text = cmp.render_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], lines[2]);
        assert!(lines[1].contains("0.9000"), "4-decimal formatting: {}", lines[1]);
    }

    #[test]
    fn percentile_is_nearest_rank() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(percentile(&xs, 0.9), Some(8.0));
        assert_eq!(percentile(&xs, 1.0), Some(9.0));
        assert_eq!(percentile(&[], 0.9), None);
    }
}
