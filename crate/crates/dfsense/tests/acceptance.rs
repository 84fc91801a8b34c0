//! Shipping gate: one test per release criterion, each printing a
//! single pass/fail line. Every experiment is seeded and deterministic;
//! the whole suite is budgeted to finish in under three minutes.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use dfsense::baseline;
use dfsense::density::{ks_two_sample, KdeModel};
use dfsense::detect::{self, DetectorParams, RunOutput};
use dfsense::eval::{self, AlarmChannel, EvalReport};
use dfsense::geom::{Bounds, Point, Segment, SiteGeometry};
use dfsense::profile::{build_profile, feature, FeatureKind, NormalProfile};
use dfsense::synth::{generate_synthetic, MotionEntry, NoiseKind, SynthConfig};
use dfsense::trace::{LabelTrack, RssTrace, StreamId};

fn gate(name: &str, ok: bool, detail: String) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("[acceptance] {name}: {verdict} ({detail})");
    assert!(ok, "{name}: {detail}");
}

fn sid(s: &str) -> StreamId {
    s.parse().unwrap()
}

/// Twelve monitored links spanning a 14 x 10 m floor: four transmitters
/// on the left wall, three monitors on the right.
fn site12() -> SiteGeometry {
    let mut nodes = BTreeMap::new();
    for (i, y) in [1.0, 3.7, 6.3, 9.0].into_iter().enumerate() {
        nodes.insert(format!("AP{}", i + 1), [0.5, y]);
    }
    for (i, y) in [1.5, 5.0, 8.5].into_iter().enumerate() {
        nodes.insert(format!("MP{}", i + 1), [13.5, y]);
    }
    let mut streams = Vec::new();
    for a in 1..=4 {
        for m in 1..=3 {
            streams.push(sid(&format!("AP{a}-MP{m}")));
        }
    }
    SiteGeometry { nodes, streams, v_max: 2.0, bounds: Bounds([0.0, 0.0, 14.0, 10.0]) }
}

fn entry(start: f64, end: f64, path: &[[f64; 2]]) -> MotionEntry {
    MotionEntry { start, end, path: path.to_vec(), loc: None }
}

/// The 75-minute testbed: three walks that wander near the links and
/// leave through the quiet corner, on slowly widening noise with rare
/// RF glitches.
fn testbed_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        duration_s: 4500.0,
        rate_hz: 1.0,
        silence_mean_dbm: -45.0,
        silence_std_db: 1.0,
        per_stream: BTreeMap::new(),
        motion_std_factor: 3.0,
        drift_per_hour_db: 0.0,
        std_drift_per_hour_db: 0.24,
        schedule: vec![
            entry(600.0, 900.0, &[
                [7.0, 5.0], [4.0, 4.5], [3.0, 2.0], [6.0, 2.0], [9.0, 2.0],
                [7.0, 5.0], [5.0, 8.0], [9.0, 7.5], [10.0, 7.5], [13.0, 0.3], [13.0, 0.3],
            ]),
            entry(1800.0, 2100.0, &[
                [3.0, 7.0], [6.0, 7.2], [9.0, 7.5], [7.0, 5.0], [4.0, 4.5],
                [3.0, 2.0], [7.0, 2.2], [9.0, 2.0], [6.0, 2.0], [13.0, 0.3], [13.0, 0.3],
            ]),
            entry(3300.0, 3600.0, &[
                [5.0, 2.0], [8.0, 2.1], [9.0, 2.0], [7.0, 5.0], [9.0, 7.5],
                [5.0, 8.0], [4.0, 4.5], [3.0, 2.0], [6.0, 2.0], [13.0, 0.3], [13.0, 0.3],
            ]),
        ],
        influence_radius_m: 1.0,
        glitch_rate_per_tick: 0.00025,
        glitch_magnitude_db: 7.0,
        noise: NoiseKind::Gaussian,
    }
}

const TRAIN_SECS: f64 = 120.0;

fn train_profiles(
    trace: &RssTrace,
    l: usize,
    alpha: f64,
    kind: FeatureKind,
) -> BTreeMap<StreamId, NormalProfile> {
    let train = trace.slice(0.0, TRAIN_SECS);
    trace
        .stream_ids()
        .map(|id| (id.clone(), build_profile(&train, id, l, alpha, kind).unwrap()))
        .collect()
}

/// Testbed operating point: rise threshold at the top of the tolerated
/// 20-25% band, as in the shipped example config.
fn monitor_params() -> DetectorParams {
    DetectorParams {
        monitor_start_t: TRAIN_SECS,
        rel_threshold: 0.25,
        ..DetectorParams::default()
    }
}

fn testbed() -> &'static (RssTrace, LabelTrack) {
    static T: OnceLock<(RssTrace, LabelTrack)> = OnceLock::new();
    T.get_or_init(|| generate_synthetic(&testbed_synth(1), &site12()).unwrap())
}

fn testbed_run() -> &'static RunOutput {
    static R: OnceLock<RunOutput> = OnceLock::new();
    R.get_or_init(|| {
        let (trace, _) = testbed();
        let profiles = train_profiles(trace, 5, 0.01, FeatureKind::Variance);
        detect::run(trace, &profiles, &monitor_params()).unwrap()
    })
}

fn score_channel(
    decisions: &[detect::GlobalDecision],
    labels: &LabelTrack,
    channel: AlarmChannel,
) -> EvalReport {
    let alarms = eval::decision_alarms(decisions, channel);
    eval::score(&alarms, labels, "gate").unwrap()
}

/// Density backbone: unit mass, invertible tails, and the weighted
/// estimator collapsing to the plain one under uniform weights.
#[test]
fn gate_00_density_suite() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst_mass = 0.0f64;
    let mut worst_round = 0.0f64;
    let mut worst_uni = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(5..=200);
        let shift: f64 = rng.random_range(-30.0..30.0);
        let scale: f64 = rng.random_range(0.05..4.0);
        let points: Vec<f64> = (0..n)
            .map(|_| shift + scale * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let weighted = case % 2 == 0;
        let weights: Option<Vec<f64>> = weighted.then(|| {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect()
        });
        let model = KdeModel::fit(&points, weights.as_deref()).unwrap();

        // Exact piecewise integration: between consecutive kernel edges
        // the pdf is quadratic, so two-point Gauss-Legendre is exact.
        let h = model.bandwidth();
        let mut edges: Vec<f64> = model
            .points()
            .iter()
            .flat_map(|&x| [x - h, x + h])
            .collect();
        edges.sort_by(|a, b| a.total_cmp(b));
        edges.dedup();
        let mut mass = 0.0;
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let off = half / 3.0f64.sqrt();
            mass += half * (model.pdf(mid - off) + model.pdf(mid + off));
        }
        worst_mass = worst_mass.max((mass - 1.0).abs());

        for p in [0.001, 0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99, 0.999] {
            let q = model.quantile(p).unwrap();
            worst_round = worst_round.max((model.cdf(q) - p).abs());
        }

        if !weighted {
            // Plain estimator written out independently.
            let nf = n as f64;
            let (lo, hi) = model.support();
            for k in 0..50 {
                let x = lo + (hi - lo) * k as f64 / 49.0;
                let manual: f64 = points
                    .iter()
                    .map(|&xi| {
                        let q = (x - xi) / h;
                        if q.abs() < 1.0 { 0.75 * (1.0 - q * q) / (nf * h) } else { 0.0 }
                    })
                    .sum();
                worst_uni = worst_uni.max((model.pdf(x) - manual).abs());
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    gate(
        "density-suite",
        worst_mass <= 1e-6 && worst_round <= 1e-9 && worst_uni <= 1e-12 && secs < 5.0,
        format!(
            "mass err {worst_mass:.2e}, roundtrip {worst_round:.2e}, uniform {worst_uni:.2e}, {secs:.1}s"
        ),
    );
}

/// End-to-end testbed: 12 streams, 75 min, 2-minute training, default
/// parameters. Refined channel quality bars.
#[test]
fn gate_01_testbed_quality() {
    let t0 = Instant::now();
    let (_, labels) = testbed();
    let out = testbed_run();
    let rep = score_channel(&out.decisions, labels, AlarmChannel::Refined);
    let secs = t0.elapsed().as_secs_f64();
    let p90 = rep.latency_p90_s.unwrap_or(f64::INFINITY);
    gate(
        "testbed-quality",
        rep.f_measure >= 0.90 && rep.fp_rate <= 0.05 && p90 <= 20.0 && secs < 30.0,
        format!(
            "F {:.4}, FP {:.4}, latency p90 {p90:.0}s, {secs:.1}s",
            rep.f_measure, rep.fp_rate
        ),
    );
}

/// Each pipeline stage must strictly improve F on the same trace:
/// refined > updates-only > frozen basic.
#[test]
fn gate_02_stage_ordering() {
    let (trace, labels) = testbed();
    let out = testbed_run();
    let f_refined = score_channel(&out.decisions, labels, AlarmChannel::Refined).f_measure;
    let f_updated = score_channel(&out.decisions, labels, AlarmChannel::Basic).f_measure;
    let profiles = train_profiles(trace, 5, 0.01, FeatureKind::Variance);
    let frozen = detect::run(
        trace,
        &profiles,
        &DetectorParams { update_enabled: false, ..monitor_params() },
    )
    .unwrap();
    let f_basic = score_channel(&frozen.decisions, labels, AlarmChannel::Basic).f_measure;
    gate(
        "stage-ordering",
        f_refined > f_updated && f_updated > f_basic,
        format!("refined {f_refined:.4} > updated {f_updated:.4} > basic {f_basic:.4}"),
    );
}

/// A 2 dB/h mean drift must barely move the main detector while the
/// mean- and variance-threshold baselines stay strictly worse.
#[test]
fn gate_03_drift_robustness() {
    let (_, labels_clean) = testbed();
    let out = testbed_run();
    let f_clean = score_channel(&out.decisions, labels_clean, AlarmChannel::Refined).f_measure;

    let mut cfg = testbed_synth(1);
    cfg.drift_per_hour_db = 2.0;
    let (trace, labels) = generate_synthetic(&cfg, &site12()).unwrap();
    let profiles = train_profiles(&trace, 5, 0.01, FeatureKind::Variance);
    let drifted = detect::run(&trace, &profiles, &monitor_params()).unwrap();
    let f_main = score_channel(&drifted.decisions, &labels, AlarmChannel::Refined).f_measure;

    let train = trace.slice(0.0, TRAIN_SECS);
    let ma = baseline::calibrate_moving_average(&train, 5, 60, 0.01).unwrap();
    let ma_run = baseline::run_moving_average(&trace, &ma, TRAIN_SECS, 1.0).unwrap();
    let f_ma = eval::score(&ma_run.alarms, &labels, &ma_run.name).unwrap().f_measure;
    let mv = baseline::calibrate_moving_variance(&train, 5, 0.01).unwrap();
    let mv_run = baseline::run_moving_variance(&trace, &mv, TRAIN_SECS, 1.0).unwrap();
    let f_mv = eval::score(&mv_run.alarms, &labels, &mv_run.name).unwrap().f_measure;

    gate(
        "drift-robustness",
        f_clean - f_main < 0.05 && f_ma < f_main && f_mv < f_main,
        format!(
            "main {f_main:.4} (clean {f_clean:.4}, drop {:.4}), moving-average {f_ma:.4}, moving-variance {f_mv:.4}",
            f_clean - f_main
        ),
    );
}

/// A uniform -5 dB level shift wrecks the histogram classifier but not
/// the variance pipeline.
#[test]
fn gate_04_level_shift() {
    let (trace, labels) = testbed();
    let model = baseline::MleModel::train(trace, labels).unwrap();

    let mut cfg = testbed_synth(5);
    cfg.silence_mean_dbm = -50.0;
    cfg.duration_s = 900.0;
    cfg.schedule.clear();
    cfg.std_drift_per_hour_db = 0.0;
    let (shifted, shifted_labels) = generate_synthetic(&cfg, &site12()).unwrap();

    let mle_run = baseline::run_mle(&shifted, &model, TRAIN_SECS, 1.0).unwrap();
    let mle_fp = eval::score(&mle_run.alarms, &shifted_labels, &mle_run.name).unwrap().fp_rate;

    let profiles = train_profiles(&testbed().0, 5, 0.01, FeatureKind::Variance);
    let main = detect::run(&shifted, &profiles, &monitor_params()).unwrap();
    let main_fp =
        score_channel(&main.decisions, &shifted_labels, AlarmChannel::Refined).fp_rate;

    gate(
        "level-shift",
        mle_fp > 0.5 && main_fp <= 0.10,
        format!("mle FP {mle_fp:.4} > 0.5, main FP {main_fp:.4} <= 0.10"),
    );
}

/// Closed-form bound oracle, heavy-tail advantage of the learned
/// profile over the chi-square model, and bound monotonicity in l.
#[test]
fn gate_05_parametric_comparison() {
    let bound_at = |l: usize| {
        baseline::chi_square_bound(&baseline::ParametricModel { sigma2: 1.0, l, alpha: 0.01 })
            .unwrap()
    };
    let b = bound_at(5);
    let bound_ok = (b - 3.3192).abs() <= 1e-3;

    let mut cfg = testbed_synth(9);
    cfg.duration_s = 1500.0;
    cfg.std_drift_per_hour_db = 0.0;
    cfg.glitch_rate_per_tick = 0.0;
    cfg.noise = NoiseKind::HeavyTailed { dof: 3.0 };
    cfg.schedule = vec![
        entry(400.0, 700.0, &[
            [7.0, 5.0], [4.0, 4.5], [3.0, 2.0], [6.0, 2.0], [9.0, 2.0],
            [7.0, 5.0], [5.0, 8.0], [9.0, 7.5], [10.0, 7.5], [13.0, 0.3], [13.0, 0.3],
        ]),
        entry(1000.0, 1300.0, &[
            [3.0, 7.0], [6.0, 7.2], [9.0, 7.5], [7.0, 5.0], [4.0, 4.5],
            [3.0, 2.0], [7.0, 2.2], [9.0, 2.0], [6.0, 2.0], [13.0, 0.3], [13.0, 0.3],
        ]),
    ];
    let (trace, labels) = generate_synthetic(&cfg, &site12()).unwrap();
    let frozen = DetectorParams { update_enabled: false, ..monitor_params() };
    let learned = train_profiles(&trace, 5, 0.01, FeatureKind::Variance);
    let np = detect::run(&trace, &learned, &frozen).unwrap();
    let f_np = score_channel(&np.decisions, &labels, AlarmChannel::Basic).f_measure;
    let train = trace.slice(0.0, TRAIN_SECS);
    let param = baseline::parametric_profiles(&train, 5, 0.01).unwrap();
    let pp = detect::run(&trace, &param, &frozen).unwrap();
    let f_p = score_channel(&pp.decisions, &labels, AlarmChannel::Basic).f_measure;

    let mut monotone = true;
    let mut prev = f64::INFINITY;
    for l in 2..=30 {
        let bl = bound_at(l);
        monotone &= bl < prev;
        prev = bl;
    }

    gate(
        "parametric-comparison",
        bound_ok && f_np >= f_p && monotone,
        format!("bound {b:.4}, learned F {f_np:.4} >= chi-square F {f_p:.4}, monotone in l {monotone}"),
    );
}

/// After a slowly drifting silent run, the updated profile must match
/// fresh silence (two-sample KS at 0.05) while the frozen initial
/// profile is rejected.
#[test]
fn gate_06_update_verification() {
    let geo = site12();
    let mut cfg = testbed_synth(11);
    cfg.duration_s = 2400.0;
    cfg.schedule.clear();
    cfg.std_drift_per_hour_db = 0.0;
    cfg.glitch_rate_per_tick = 0.0;
    cfg.drift_per_hour_db = 2.0;
    let (trace, _) = generate_synthetic(&cfg, &geo).unwrap();

    let initial = train_profiles(&trace, 5, 0.01, FeatureKind::Mean);
    let params = DetectorParams { feature: FeatureKind::Mean, ..monitor_params() };
    let out = detect::run(&trace, &initial, &params).unwrap();

    // Fresh silence drawn at the drift's end level.
    let mut fresh_cfg = testbed_synth(13);
    fresh_cfg.duration_s = 600.0;
    fresh_cfg.schedule.clear();
    fresh_cfg.std_drift_per_hour_db = 0.0;
    fresh_cfg.glitch_rate_per_tick = 0.0;
    fresh_cfg.silence_mean_dbm = -45.0 + 2.0 * cfg.duration_s / 3600.0;
    let (fresh, _) = generate_synthetic(&fresh_cfg, &geo).unwrap();

    let id = trace.stream_ids().next().unwrap();
    let feats: Vec<f64> = fresh
        .windows(id, 5)
        .unwrap()
        .iter()
        .map(|w| feature(&w.samples, FeatureKind::Mean).unwrap())
        .collect();
    let updated = ks_two_sample(out.final_profiles[id].model.points(), &feats).unwrap();
    let frozen = ks_two_sample(initial[id].model.points(), &feats).unwrap();
    gate(
        "update-verification",
        updated.accept_at_0_05 && !frozen.accept_at_0_05,
        format!(
            "{id}: updated D {:.3} accepted, frozen D {:.3} rejected",
            updated.statistic, frozen.statistic
        ),
    );
}

/// Parameter sweeps must reproduce the documented trends: FP grows with
/// l, shrinks as alpha tightens, and the update group size has its
/// sweet spot between 10 and 20.
#[test]
fn gate_07_parameter_trends() {
    let (trace, labels) = testbed();

    let basic_eval = |l: usize, alpha: f64, l_update: usize, updates: bool| -> EvalReport {
        let profiles = train_profiles(trace, l, alpha, FeatureKind::Variance);
        let params = DetectorParams {
            l,
            alpha,
            l_update,
            update_enabled: updates,
            ..monitor_params()
        };
        let out = detect::run(trace, &profiles, &params).unwrap();
        score_channel(&out.decisions, labels, AlarmChannel::Basic)
    };

    let fp_by_l: Vec<f64> =
        [2, 5, 10, 20].iter().map(|&l| basic_eval(l, 0.01, 15, false).fp_rate).collect();
    let l_rising = fp_by_l.windows(2).all(|w| w[0] < w[1]);

    let fp_by_alpha: Vec<f64> = [0.05, 0.02, 0.01, 0.005, 0.002]
        .iter()
        .map(|&a| basic_eval(5, a, 15, false).fp_rate)
        .collect();
    let alpha_falling = fp_by_alpha.windows(2).all(|w| w[0] > w[1]);

    let lus = [5usize, 10, 15, 20, 30, 50];
    let reports: Vec<EvalReport> =
        lus.iter().map(|&lu| basic_eval(5, 0.01, lu, true)).collect();
    let best = (0..lus.len()).max_by(|&i, &j| {
        reports[i].f_measure.total_cmp(&reports[j].f_measure)
    })
    .unwrap();
    let knee_ok = (10..=20).contains(&lus[best]);
    let fp_falls = reports[0].fp_rate > reports[best].fp_rate;
    let fn_rises = reports[lus.len() - 1].fn_rate > reports[best].fn_rate;

    gate(
        "parameter-trends",
        l_rising && alpha_falling && knee_ok && fp_falls && fn_rises,
        format!(
            "FP by l {:?} rising {l_rising}; FP by alpha {:?} falling {alpha_falling}; best l_update {} in 10..=20",
            fp_by_l.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(),
            fp_by_alpha.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(),
            lus[best]
        ),
    );
}

/// Reachability-matrix distances against a brute-force sampling oracle
/// on a random 11-link site (55 distinct pairs).
#[test]
fn gate_08_geometry_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut coord = move || rng.random_range(0.0..20.0);
    let mut nodes = BTreeMap::new();
    let mut streams = Vec::new();
    for i in 0..11 {
        nodes.insert(format!("T{i}"), [coord(), coord()]);
        nodes.insert(format!("R{i}"), [coord(), coord()]);
        streams.push(sid(&format!("T{i}-R{i}")));
    }
    let geo =
        SiteGeometry { nodes, streams, v_max: 2.0, bounds: Bounds([0.0, 0.0, 20.0, 20.0]) };
    let m = detect::independence_matrix(&geo).unwrap();
    // Sampling oracle built only on point arithmetic: squared distance
    // between sliding points is convex over the parameter square, and
    // min over one parameter stays convex in the other, so two nested
    // ternary searches converge to the global minimum.
    let oracle = |a: &Segment, b: &Segment| -> f64 {
        let at = |s: &Segment, t: f64| {
            Point::new(s.a.x + t * (s.b.x - s.a.x), s.a.y + t * (s.b.y - s.a.y))
        };
        let ternary = |f: &dyn Fn(f64) -> f64| {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..200 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if f(m1) < f(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            f(0.5 * (lo + hi))
        };
        let d2 = |s: f64, t: f64| {
            let p = at(a, s);
            let q = at(b, t);
            let (dx, dy) = (p.x - q.x, p.y - q.y);
            dx * dx + dy * dy
        };
        ternary(&|s| ternary(&|t| d2(s, t))).sqrt()
    };
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for i in 0..geo.streams.len() {
        assert_eq!(m.d_min[i][i], 0.0);
        for j in (i + 1)..geo.streams.len() {
            let a = geo.segment(&geo.streams[i]).unwrap();
            let b = geo.segment(&geo.streams[j]).unwrap();
            worst = worst.max((oracle(&a, &b) - m.d_min[i][j]).abs());
            assert_eq!(m.d_min[i][j], m.d_min[j][i]);
            assert_eq!(m.t_min[i][j], m.d_min[i][j] / geo.v_max);
            pairs += 1;
        }
    }
    gate(
        "geometry-oracle",
        worst <= 1e-3 && pairs >= 50,
        format!("worst oracle gap {worst:.2e} m over {pairs} pairs"),
    );
}
