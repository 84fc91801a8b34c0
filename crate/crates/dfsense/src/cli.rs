//! Command implementations behind the binary: generate, train, run,
//! eval, compare, sweep, heatmap. Every command is deterministic given
//! config plus seed and records both in a sidecar meta file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::baseline;
use crate::config::RunConfig;
use crate::detect::{self, GlobalDecision, StreamVerdict};
use crate::error::{Error, Result};
use crate::eval::{self, AlarmChannel, EvalReport};
use crate::io;
use crate::profile::{build_profile, NormalProfile};
use crate::trace::{self, LabelTrack, RssTrace, StreamId};

fn channel_tag(c: AlarmChannel) -> &'static str {
    match c {
        AlarmChannel::Basic => "basic",
        AlarmChannel::Refined => "refined",
    }
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.paths.out_dir).map_err(|e| Error::io(&cfg.paths.out_dir, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}

/// Seed and full resolved config, written next to each command's
/// outputs for provenance.
#[derive(Serialize)]
struct Meta<'c> {
    command: &'static str,
    seed: u64,
    config: &'c RunConfig,
}

fn write_meta(cfg: &RunConfig, command: &'static str) -> Result<()> {
    ensure_out_dir(cfg)?;
    let path = cfg.paths.out_dir.join(format!("{command}_meta.json"));
    io::write_json_pretty(&path, &Meta { command, seed: cfg.seed, config: cfg })
}

/// Earliest sample time across streams.
fn trace_start(trace: &RssTrace) -> Result<f64> {
    trace
        .iter()
        .filter_map(|(_, s)| s.t.first().copied())
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))))
        .ok_or_else(|| Error::InsufficientData("trace has no samples".into()))
}

/// Training must be silence: any motion interval overlapping the slice
/// is refused.
fn ensure_silence_training(labels: &LabelTrack, t0: f64, train_end: f64) -> Result<()> {
    for iv in labels.motion_intervals() {
        if iv.start < train_end && iv.end > t0 {
            return Err(Error::Data(format!(
                "training slice [{t0}, {train_end}) overlaps motion interval [{}, {})",
                iv.start, iv.end
            )));
        }
    }
    Ok(())
}

fn train_profiles(
    trace: &RssTrace,
    t0: f64,
    params: &crate::config::Params,
) -> Result<BTreeMap<StreamId, NormalProfile>> {
    let train = trace.slice(t0, t0 + params.train_secs);
    let mut out = BTreeMap::new();
    for id in trace.stream_ids() {
        let p = build_profile(&train, id, params.l, params.alpha, params.feature)?;
        out.insert(id.clone(), p);
    }
    Ok(out)
}

/// Generates the synthetic trace and label files from the `[synth]`
/// section and the geometry.
pub fn cmd_gen(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let mut synth = cfg
        .synth
        .clone()
        .ok_or_else(|| Error::Config("gen needs a [synth] section".into()))?;
    synth.seed = cfg.seed;
    let geo = trace::load_geometry(&cfg.paths.geometry)?;
    let (rss, labels) = crate::synth::generate_synthetic(&synth, &geo)?;
    ensure_parent(&cfg.paths.trace)?;
    ensure_parent(&cfg.paths.labels)?;
    trace::save_trace(&cfg.paths.trace, &rss)?;
    trace::save_labels(&cfg.paths.labels, &labels)?;
    write_meta(cfg, "gen")?;
    println!("seed {}", cfg.seed);
    println!(
        "wrote {} ({} samples) and {}",
        cfg.paths.trace.display(),
        rss.total_samples(),
        cfg.paths.labels.display()
    );
    Ok(())
}

/// Learns one silence profile per stream from the training prefix.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let rss = trace::load_trace(&cfg.paths.trace)?;
    let labels = trace::load_labels(&cfg.paths.labels)?;
    let t0 = trace_start(&rss)?;
    ensure_silence_training(&labels, t0, t0 + cfg.params.train_secs)?;
    let profiles = train_profiles(&rss, t0, &cfg.params)?;
    ensure_parent(&cfg.paths.profiles)?;
    crate::profile::save_bundle(&cfg.paths.profiles, &profiles)?;
    write_meta(cfg, "train")?;
    println!("wrote {} ({} profiles)", cfg.paths.profiles.display(), profiles.len());
    Ok(())
}

fn run_engine(cfg: &RunConfig, rss: &RssTrace) -> Result<detect::RunOutput> {
    let profiles = crate::profile::load_bundle(&cfg.paths.profiles)?;
    let t0 = trace_start(rss)?;
    let params = cfg.params.detector_params(t0 + cfg.params.train_secs);
    detect::run(rss, &profiles, &params)
}

/// Monitors the trace with the trained profiles; writes decision and
/// verdict logs plus the updated profiles. With `with_eval`, also runs
/// `eval` on the fresh logs so the combined invocation matches a
/// separate `eval` byte for byte.
pub fn cmd_run(cfg: &RunConfig, with_eval: bool) -> Result<()> {
    cfg.validate()?;
    let rss = trace::load_trace(&cfg.paths.trace)?;
    let out = run_engine(cfg, &rss)?;
    ensure_out_dir(cfg)?;
    let decisions_path = cfg.paths.decisions_path();
    let verdicts_path = cfg.paths.verdicts_path();
    ensure_parent(&decisions_path)?;
    ensure_parent(&verdicts_path)?;
    io::write_jsonl(&decisions_path, &out.decisions)?;
    io::write_jsonl(&verdicts_path, &out.verdicts)?;
    let updated_path = cfg.paths.out_dir.join("profiles_updated.json");
    crate::profile::save_bundle(&updated_path, &out.final_profiles)?;
    write_meta(cfg, "run")?;
    println!("seed {}", cfg.seed);
    println!(
        "wrote {} ({} decisions), {} ({} verdicts), {}",
        decisions_path.display(),
        out.decisions.len(),
        verdicts_path.display(),
        out.verdicts.len(),
        updated_path.display()
    );
    if with_eval {
        cmd_eval(cfg)?;
    }
    Ok(())
}

fn eval_decisions(cfg: &RunConfig, decisions: &[GlobalDecision]) -> Result<EvalReport> {
    let labels = trace::load_labels(&cfg.paths.labels)?;
    let alarms = eval::decision_alarms(decisions, cfg.params.channel);
    let name = format!("main_{}", channel_tag(cfg.params.channel));
    let mut report = eval::score(&alarms, &labels, &name)?;
    report.params = serde_json::to_value(&cfg.params)
        .map_err(|e| Error::Data(format!("could not serialize params: {e}")))?;
    Ok(report)
}

/// Scores the decision log against the labels on the configured alarm
/// channel.
pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let decisions: Vec<GlobalDecision> = io::read_jsonl(&cfg.paths.decisions_path())?;
    let report = eval_decisions(cfg, &decisions)?;
    ensure_out_dir(cfg)?;
    let json_path = cfg.paths.out_dir.join("eval.json");
    let text_path = cfg.paths.out_dir.join("eval.txt");
    io::write_json_pretty(&json_path, &report)?;
    std::fs::write(&text_path, report.render_text()).map_err(|e| Error::io(&text_path, e))?;
    write_meta(cfg, "eval")?;
    print!("{}", report.render_text());
    println!("wrote {} and {}", json_path.display(), text_path.display());
    Ok(())
}

fn baseline_report(
    cfg: &RunConfig,
    rss: &RssTrace,
    train: &RssTrace,
    labels: &LabelTrack,
    monitor_start: f64,
    name: &str,
) -> Result<EvalReport> {
    let b = &cfg.baselines;
    let rate = cfg.params.rate_hz;
    let (alarms, params) = match name {
        "moving_average" => {
            let ma = baseline::calibrate_moving_average(train, b.ma_short, b.ma_long, b.target_fp)?;
            let run = baseline::run_moving_average(rss, &ma, monitor_start, rate)?;
            (run.alarms, serde_json::to_value(&ma))
        }
        "moving_variance" => {
            let mv = baseline::calibrate_moving_variance(train, b.mv_window, b.target_fp)?;
            let run = baseline::run_moving_variance(rss, &mv, monitor_start, rate)?;
            (run.alarms, serde_json::to_value(&mv))
        }
        "mle" => {
            let mle_trace = match &cfg.paths.mle_train_trace {
                Some(p) => trace::load_trace(p)?,
                None => rss.clone(),
            };
            let mle_labels = match &cfg.paths.mle_train_labels {
                Some(p) => trace::load_labels(p)?,
                None => labels.clone(),
            };
            let model = baseline::MleModel::train(&mle_trace, &mle_labels)?;
            let run = baseline::run_mle(rss, &model, monitor_start, rate)?;
            (run.alarms, Ok(serde_json::json!({"bins": model.bins})))
        }
        "parametric" => {
            // The chi-square bound replaces the density quantile; the
            // rest of the basic pipeline is unchanged and frozen.
            let profiles = baseline::parametric_profiles(train, cfg.params.l, cfg.params.alpha)?;
            let mut params = cfg.params.detector_params(monitor_start);
            params.update_enabled = false;
            let out = detect::run(rss, &profiles, &params)?;
            let alarms = eval::decision_alarms(&out.decisions, AlarmChannel::Basic);
            (alarms, serde_json::to_value(&cfg.params))
        }
        other => {
            return Err(Error::Config(format!("unknown baseline '{other}'")));
        }
    };
    let mut report = eval::score(&alarms, labels, name)?;
    report.params = params.map_err(|e| Error::Data(format!("could not serialize params: {e}")))?;
    Ok(report)
}

/// Trains the main pipeline and every enabled baseline on the same
/// trace, scores them all, and writes the comparison table.
pub fn cmd_compare(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let rss = trace::load_trace(&cfg.paths.trace)?;
    let labels = trace::load_labels(&cfg.paths.labels)?;
    let t0 = trace_start(&rss)?;
    let monitor_start = t0 + cfg.params.train_secs;
    ensure_silence_training(&labels, t0, monitor_start)?;
    let train = rss.slice(t0, monitor_start);

    let profiles = train_profiles(&rss, t0, &cfg.params)?;
    let params = cfg.params.detector_params(monitor_start);
    let out = detect::run(&rss, &profiles, &params)?;
    let mut reports = vec![eval_decisions_with(
        &out.decisions,
        &labels,
        cfg.params.channel,
        &serde_json::to_value(&cfg.params).unwrap_or_default(),
    )?];
    for name in &cfg.baselines.enabled {
        reports.push(baseline_report(cfg, &rss, &train, &labels, monitor_start, name)?);
    }

    let cmp = eval::compare(&reports)?;
    ensure_out_dir(cfg)?;
    let json_path = cfg.paths.out_dir.join("compare.json");
    let text_path = cfg.paths.out_dir.join("compare.txt");
    io::write_json_pretty(&json_path, &cmp)?;
    std::fs::write(&text_path, cmp.render_text()).map_err(|e| Error::io(&text_path, e))?;
    write_meta(cfg, "compare")?;
    print!("{}", cmp.render_text());
    println!("wrote {} and {}", json_path.display(), text_path.display());
    Ok(())
}

fn eval_decisions_with(
    decisions: &[GlobalDecision],
    labels: &LabelTrack,
    channel: AlarmChannel,
    params: &serde_json::Value,
) -> Result<EvalReport> {
    let alarms = eval::decision_alarms(decisions, channel);
    let mut report = eval::score(&alarms, labels, &format!("main_{}", channel_tag(channel)))?;
    report.params = params.clone();
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
struct SweepEntry {
    l: usize,
    alpha: f64,
    l_update: usize,
    report: EvalReport,
}

/// Grids over the `[sweep]` parameter lists (missing lists pin to the
/// configured single value), running train + run + eval per point.
/// Points run in parallel; results merge in grid order.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let rss = trace::load_trace(&cfg.paths.trace)?;
    let labels = trace::load_labels(&cfg.paths.labels)?;
    let t0 = trace_start(&rss)?;
    ensure_silence_training(&labels, t0, t0 + cfg.params.train_secs)?;

    let one = |v| vec![v];
    let ls = if cfg.sweep.l.is_empty() { one(cfg.params.l) } else { cfg.sweep.l.clone() };
    let alphas =
        if cfg.sweep.alpha.is_empty() { vec![cfg.params.alpha] } else { cfg.sweep.alpha.clone() };
    let lus = if cfg.sweep.l_update.is_empty() {
        one(cfg.params.l_update)
    } else {
        cfg.sweep.l_update.clone()
    };
    let mut combos = Vec::new();
    for &l in &ls {
        for &alpha in &alphas {
            for &l_update in &lus {
                combos.push((l, alpha, l_update));
            }
        }
    }

    let entries: Vec<SweepEntry> = combos
        .par_iter()
        .map(|&(l, alpha, l_update)| {
            let mut p = cfg.params.clone();
            p.l = l;
            p.alpha = alpha;
            p.l_update = l_update;
            let profiles = train_profiles(&rss, t0, &p)?;
            let dp = p.detector_params(t0 + p.train_secs);
            let out = detect::run(&rss, &profiles, &dp)?;
            let alarms = eval::decision_alarms(&out.decisions, p.channel);
            let name = format!("l={l},alpha={alpha},l_update={l_update}");
            let mut report = eval::score(&alarms, &labels, &name)?;
            report.params = serde_json::to_value(&p)
                .map_err(|e| Error::Data(format!("could not serialize params: {e}")))?;
            Ok(SweepEntry { l, alpha, l_update, report })
        })
        .collect::<Result<Vec<_>>>()?;

    ensure_out_dir(cfg)?;
    let json_path = cfg.paths.out_dir.join("sweep.json");
    io::write_json_pretty(&json_path, &entries)?;
    let mut text = format!(
        "{:>4}  {:>8}  {:>8}  {:>9}  {:>7}  {:>7}  {:>7}\n",
        "l", "alpha", "l_update", "f_measure", "fp_rate", "fn_rate", "p90_s"
    );
    for e in &entries {
        text.push_str(&format!(
            "{:>4}  {:>8}  {:>8}  {:>9.4}  {:>7.4}  {:>7.4}  {:>7}\n",
            e.l,
            e.alpha,
            e.l_update,
            e.report.f_measure,
            e.report.fp_rate,
            e.report.fn_rate,
            match e.report.latency_p90_s {
                Some(v) => format!("{v:.1}"),
                None => "-".into(),
            },
        ));
    }
    let text_path = cfg.paths.out_dir.join("sweep.txt");
    std::fs::write(&text_path, &text).map_err(|e| Error::io(&text_path, e))?;
    write_meta(cfg, "sweep")?;
    print!("{text}");
    println!("wrote {} and {}", json_path.display(), text_path.display());
    Ok(())
}

/// Rasterizes the verdicts at one tick into a heat-grid CSV.
pub fn cmd_heatmap(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let t = cfg
        .heatmap
        .t
        .ok_or_else(|| Error::Config("heatmap needs a tick: set [heatmap] t or pass --t".into()))?;
    let verdicts: Vec<StreamVerdict> = io::read_jsonl(&cfg.paths.verdicts_path())?;
    let geo = trace::load_geometry(&cfg.paths.geometry)?;
    let half = 0.5 / cfg.params.rate_hz + 1e-9;
    let at_tick: Vec<StreamVerdict> =
        verdicts.into_iter().filter(|v| (v.t - t).abs() <= half).collect();
    if at_tick.is_empty() {
        return Err(Error::Data(format!("no verdicts within half a tick of t={t}")));
    }
    let grid = detect::region_heatmap(&at_tick, &geo, cfg.heatmap.res_m, cfg.heatmap.lambda_m)?;
    ensure_out_dir(cfg)?;
    let path = cfg.paths.out_dir.join("heatmap.csv");
    grid.write_csv(&path)?;
    write_meta(cfg, "heatmap")?;
    let (ix, iy, peak) = grid.max_cell();
    let c = grid.cell_center(ix, iy);
    println!("wrote {} ({}x{} cells, peak {peak:.3} at ({:.2}, {:.2}))",
        path.display(), grid.nx, grid.ny, c.x, c.y);
    Ok(())
}

/// Recovers a PathBuf argument list for tests and the binary.
pub fn out_files(cfg: &RunConfig, command: &str) -> Vec<PathBuf> {
    let d = &cfg.paths.out_dir;
    match command {
        "gen" => vec![cfg.paths.trace.clone(), cfg.paths.labels.clone()],
        "train" => vec![cfg.paths.profiles.clone()],
        "run" => vec![
            cfg.paths.decisions_path(),
            cfg.paths.verdicts_path(),
            d.join("profiles_updated.json"),
        ],
        "eval" => vec![d.join("eval.json"), d.join("eval.txt")],
        "compare" => vec![d.join("compare.json"), d.join("compare.txt")],
        "sweep" => vec![d.join("sweep.json"), d.join("sweep.txt")],
        "heatmap" => vec![d.join("heatmap.csv")],
        _ => vec![],
    }
}
