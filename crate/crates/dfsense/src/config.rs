//! Run configuration: one TOML file shared by every command, with
//! command-line overrides beating file values. Relative paths resolve
//! against the config file's directory so configs can ship with data.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detect::DetectorParams;
use crate::error::{Error, Result};
use crate::eval::AlarmChannel;
use crate::profile::FeatureKind;
use crate::synth::SynthConfig;

/// Input and output locations. `decisions`/`verdicts` default into
/// `out_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub trace: PathBuf,
    pub labels: PathBuf,
    pub geometry: PathBuf,
    pub profiles: PathBuf,
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decisions: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdicts: Option<PathBuf>,
    /// Separate trace for MLE training; defaults to `trace`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mle_train_trace: Option<PathBuf>,
    /// Labels for the MLE training trace; defaults to `labels`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mle_train_labels: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            trace: "trace.jsonl".into(),
            labels: "labels.jsonl".into(),
            geometry: "site.json".into(),
            profiles: "profiles.json".into(),
            out_dir: "out".into(),
            decisions: None,
            verdicts: None,
            mle_train_trace: None,
            mle_train_labels: None,
        }
    }
}

impl Paths {
    pub fn decisions_path(&self) -> PathBuf {
        self.decisions.clone().unwrap_or_else(|| self.out_dir.join("decisions.jsonl"))
    }

    pub fn verdicts_path(&self) -> PathBuf {
        self.verdicts.clone().unwrap_or_else(|| self.out_dir.join("verdicts.jsonl"))
    }
}

/// Pipeline parameters; defaults are the documented operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Params {
    pub l: usize,
    pub alpha: f64,
    pub l_update: usize,
    pub updates: bool,
    pub beta: f64,
    pub rel_threshold: f64,
    pub feature: FeatureKind,
    pub rate_hz: f64,
    /// Length of the silence training prefix, seconds.
    pub train_secs: f64,
    /// Alarm channel commands evaluate by default.
    pub channel: AlarmChannel,
    pub warmup_ticks: usize,
    pub level_coeff: f64,
    pub onset_window_ticks: usize,
}

impl Default for Params {
    fn default() -> Self {
        let d = DetectorParams::default();
        Params {
            l: d.l,
            alpha: d.alpha,
            l_update: d.l_update,
            updates: d.update_enabled,
            beta: d.beta,
            rel_threshold: d.rel_threshold,
            feature: d.feature,
            rate_hz: d.rate_hz,
            train_secs: 120.0,
            channel: AlarmChannel::Refined,
            warmup_ticks: d.warmup_ticks,
            level_coeff: d.level_coeff,
            onset_window_ticks: d.onset_window_ticks,
        }
    }
}

impl Params {
    pub fn detector_params(&self, monitor_start_t: f64) -> DetectorParams {
        DetectorParams {
            l: self.l,
            alpha: self.alpha,
            l_update: self.l_update,
            update_enabled: self.updates,
            beta: self.beta,
            rel_threshold: self.rel_threshold,
            feature: self.feature,
            rate_hz: self.rate_hz,
            warmup_ticks: self.warmup_ticks,
            level_coeff: self.level_coeff,
            onset_window_ticks: self.onset_window_ticks,
            monitor_start_t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.detector_params(0.0).validate()?;
        if !(self.train_secs > 0.0) {
            return Err(Error::Config("train_secs must be > 0".into()));
        }
        Ok(())
    }
}

/// Which comparison detectors run and how they calibrate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineSection {
    /// Any of: moving_average, moving_variance, mle, parametric.
    pub enabled: Vec<String>,
    pub ma_short: usize,
    pub ma_long: usize,
    pub mv_window: usize,
    /// Per-window false-alarm rate the thresholds calibrate to.
    pub target_fp: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            enabled: vec!["moving_average".into(), "moving_variance".into(), "mle".into()],
            ma_short: 5,
            ma_long: 60,
            mv_window: 5,
            target_fp: 0.01,
        }
    }
}

/// Parameter lists to grid over; empty lists fall back to the single
/// configured value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub l: Vec<usize>,
    pub alpha: Vec<f64>,
    pub l_update: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapSection {
    /// Tick to rasterize; `--t` overrides.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub res_m: f64,
    pub lambda_m: f64,
}

impl Default for HeatmapSection {
    fn default() -> Self {
        HeatmapSection { t: None, res_m: 0.25, lambda_m: crate::detect::DEFAULT_HEAT_LAMBDA_M }
    }
}

/// Everything a command needs, resolved and override-applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// The one seed all randomness flows from.
    pub seed: u64,
    pub paths: Paths,
    pub params: Params,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    pub baselines: BaselineSection,
    pub sweep: SweepSection,
    pub heatmap: HeatmapSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            paths: Paths::default(),
            params: Params::default(),
            synth: None,
            baselines: BaselineSection::default(),
            sweep: SweepSection::default(),
            heatmap: HeatmapSection::default(),
        }
    }
}

/// Command-line values that beat the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub l: Option<usize>,
    pub alpha: Option<f64>,
    pub l_update: Option<usize>,
    pub beta: Option<f64>,
    pub rel_threshold: Option<f64>,
    pub train_secs: Option<f64>,
    pub channel: Option<AlarmChannel>,
    pub t: Option<f64>,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Reads the TOML file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        resolve(&base, &mut cfg.paths.trace);
        resolve(&base, &mut cfg.paths.labels);
        resolve(&base, &mut cfg.paths.geometry);
        resolve(&base, &mut cfg.paths.profiles);
        resolve(&base, &mut cfg.paths.out_dir);
        for opt in [
            &mut cfg.paths.decisions,
            &mut cfg.paths.verdicts,
            &mut cfg.paths.mle_train_trace,
            &mut cfg.paths.mle_train_labels,
        ] {
            if let Some(p) = opt.as_mut() {
                resolve(&base, p);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
            if let Some(s) = self.synth.as_mut() {
                s.seed = v;
            }
        }
        if let Some(v) = &o.out {
            self.paths.out_dir = v.clone();
            self.paths.decisions = None;
            self.paths.verdicts = None;
        }
        if let Some(v) = o.l {
            self.params.l = v;
        }
        if let Some(v) = o.alpha {
            self.params.alpha = v;
        }
        if let Some(v) = o.l_update {
            self.params.l_update = v;
        }
        if let Some(v) = o.beta {
            self.params.beta = v;
        }
        if let Some(v) = o.rel_threshold {
            self.params.rel_threshold = v;
        }
        if let Some(v) = o.train_secs {
            self.params.train_secs = v;
        }
        if let Some(v) = o.channel {
            self.params.channel = v;
        }
        if let Some(v) = o.t {
            self.heatmap.t = Some(v);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.baselines.target_fp > 0.0 && self.baselines.target_fp < 1.0) {
            return Err(Error::Config("baselines.target_fp must be in (0,1)".into()));
        }
        Ok(())
    }
}
