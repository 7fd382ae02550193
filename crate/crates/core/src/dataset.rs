//! Sensor recordings: loading, sample extraction and synthetic plumes.
//!
//! Two on-disk formats are read. The distribution format is a delimited numeric
//! table with a time column, optional auxiliary columns and one column per sensor.
//! The canonical format written by [`write_canonical`] is a `key=value` header
//! line followed by one tab-separated row of sensor readings per timestep.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{calibrate, discretize, sparsify, LevelVector, SensorCalibration};
use crate::error::{Error, Result};
use crate::seed::rng_for;

pub const NUM_SENSORS: usize = 72;
pub const TRAIN_TIME_S: f64 = 90.0;
pub const MIN_TRIAL_S: f64 = 180.0;

/// Test timepoints: 30, 35, ..., 175 s.
pub fn test_times() -> Vec<f64> {
    (0..30).map(|i| 30.0 + 5.0 * f64::from(i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetadata {
    pub location: String,
    pub wind_speed: f64,
    pub heater_voltage: f64,
}

impl Default for TrialMetadata {
    fn default() -> Self {
        Self {
            location: "L4".into(),
            wind_speed: 0.21,
            heater_voltage: 500.0,
        }
    }
}

/// One odor presentation: raw readings sampled at a fixed rate from trial onset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecording {
    pub odor_label: String,
    pub sample_rate: f64,
    pub metadata: TrialMetadata,
    columns: usize,
    data: Vec<f64>,
}

impl TrialRecording {
    pub fn new(
        odor_label: impl Into<String>,
        sample_rate: f64,
        metadata: TrialMetadata,
        columns: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        let odor_label = odor_label.into();
        if odor_label.is_empty() || odor_label.contains(['\t', '\n', '\r', '=']) {
            return Err(Error::input(format!("unusable odor label {odor_label:?}")));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::input("sample rate must be positive"));
        }
        if columns == 0 || data.len() % columns != 0 {
            return Err(Error::input("sample matrix is not rectangular"));
        }
        Ok(Self {
            odor_label,
            sample_rate,
            metadata,
            columns,
            data,
        })
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.columns
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.columns..(i + 1) * self.columns]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.columns)
    }

    /// Time covered by the recording: rows / rate.
    pub fn duration(&self) -> f64 {
        self.rows() as f64 / self.sample_rate
    }
}

/// Layout of a distribution-format file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    pub expected_columns: usize,
    /// Auxiliary columns between the time column and the sensors.
    pub skip_columns: usize,
    /// Multiplier taking the time column to seconds.
    pub time_scale: f64,
    /// Sensor permutation: output column `j` is raw sensor `column_order[j]`.
    pub column_order: Option<Vec<usize>>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            expected_columns: NUM_SENSORS,
            skip_columns: 0,
            time_scale: 1.0,
            column_order: None,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_field(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("not a number: {s:?}"),
        })
}

fn split_fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|f| !f.is_empty())
}

/// Reads a distribution-format trial (time column, auxiliary columns, sensors).
///
/// The rate is estimated from the first and last timestamps.
pub fn load_trial(
    path: &Path,
    label: &str,
    metadata: TrialMetadata,
    opts: &LoadOptions,
) -> Result<TrialRecording> {
    if let Some(order) = &opts.column_order {
        let mut seen = order.clone();
        seen.sort_unstable();
        if seen != (0..opts.expected_columns).collect::<Vec<_>>() {
            return Err(Error::config("column_order must be a permutation of the sensor columns"));
        }
    }
    let text = read(path)?;
    let want = 1 + opts.skip_columns + opts.expected_columns;
    let mut times = Vec::new();
    let mut data = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = split_fields(line).collect();
        let numeric: Vec<f64> = fields
            .iter()
            .map(|f| parse_field(path, lineno, f))
            .collect::<Result<_>>()?;
        if numeric.len() != want {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!(
                    "line {lineno} has {} columns, expected {want} (time + {} auxiliary + {} sensors)",
                    numeric.len(),
                    opts.skip_columns,
                    opts.expected_columns
                ),
            });
        }
        times.push(numeric[0] * opts.time_scale);
        let sensors = &numeric[1 + opts.skip_columns..];
        match &opts.column_order {
            Some(order) => data.extend(order.iter().map(|&j| sensors[j])),
            None => data.extend_from_slice(sensors),
        }
    }
    if times.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "no data rows".into(),
        });
    }
    let span = times[times.len() - 1] - times[0];
    if times.len() < 2 || !(span > 0.0) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "need at least two rows with increasing timestamps".into(),
        });
    }
    let sample_rate = (times.len() - 1) as f64 / span;
    TrialRecording::new(label, sample_rate, metadata, opts.expected_columns, data)
}

/// Writes the canonical tab-separated format.
pub fn write_canonical(trial: &TrialRecording, path: &Path) -> Result<()> {
    let mut out = String::new();
    let m = &trial.metadata;
    let _ = writeln!(
        out,
        "label={}\trate={}\tlocation={}\twind_speed={}\theater_voltage={}",
        trial.odor_label, trial.sample_rate, m.location, m.wind_speed, m.heater_voltage
    );
    for row in trial.iter_rows() {
        let mut first = true;
        for x in row {
            if !first {
                out.push('\t');
            }
            first = false;
            let _ = write!(out, "{x}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads the canonical format written by [`write_canonical`].
pub fn load_canonical(path: &Path, expected_columns: usize) -> Result<TrialRecording> {
    let text = read(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let mut label = None;
    let mut rate = None;
    let mut meta = TrialMetadata::default();
    for kv in header.split('\t') {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("header field {kv:?} is not key=value"),
        })?;
        match k {
            "label" => label = Some(v.to_string()),
            "rate" => rate = Some(parse_field(path, 1, v)?),
            "location" => meta.location = v.to_string(),
            "wind_speed" => meta.wind_speed = parse_field(path, 1, v)?,
            "heater_voltage" => meta.heater_voltage = parse_field(path, 1, v)?,
            _ => {}
        }
    }
    let missing = |what: &str| Error::Format {
        path: path.to_path_buf(),
        msg: format!("header lacks {what}"),
    };
    let label = label.ok_or_else(|| missing("label"))?;
    let rate = rate.ok_or_else(|| missing("rate"))?;
    let mut data = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        let start = data.len();
        for f in line.split('\t') {
            data.push(parse_field(path, lineno, f)?);
        }
        if data.len() - start != expected_columns {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!(
                    "line {lineno} has {} columns, expected {expected_columns}",
                    data.len() - start
                ),
            });
        }
    }
    if data.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 2,
            msg: "no data rows".into(),
        });
    }
    TrialRecording::new(label, rate, meta, expected_columns, data)
}

/// Raw readings of the row nearest to `t` seconds; ties go to the earlier row.
pub fn extract_sample(trial: &TrialRecording, t: f64) -> Result<&[f64]> {
    if !(t >= 0.0 && t <= trial.duration()) {
        return Err(Error::input(format!(
            "t = {t} s lies outside the {:.3} s recording",
            trial.duration()
        )));
    }
    // Row i sits at i / rate; nearest row with ties rounding down.
    let x = t * trial.sample_rate;
    let below = x.floor();
    let idx = if x - below > 0.5 { below + 1.0 } else { below };
    Ok(trial.row((idx as usize).min(trial.rows() - 1)))
}

/// The 90 s training sample and the 30 test samples of a trial.
pub fn training_and_test_samples(trial: &TrialRecording) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if trial.duration() < MIN_TRIAL_S {
        return Err(Error::input(format!(
            "trial '{}' lasts {:.1} s, at least {MIN_TRIAL_S} s needed",
            trial.odor_label,
            trial.duration()
        )));
    }
    let train = extract_sample(trial, TRAIN_TIME_S)?.to_vec();
    let tests = test_times()
        .into_iter()
        .map(|t| extract_sample(trial, t).map(<[f64]>::to_vec))
        .collect::<Result<_>>()?;
    Ok((train, tests))
}

/// One manifest entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub label: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    #[serde(default)]
    pub format: FileFormat,
    #[serde(default, flatten)]
    pub metadata: Option<TrialMetadata>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    #[default]
    Distribution,
    Canonical,
}

/// Odor labels, file paths and layout of a recorded dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub layout: LoadOptions,
    #[serde(rename = "odor", default)]
    pub odors: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = read(path)?;
        toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    /// Loads every trial in manifest order.
    pub fn load(&self, base_dir: &Path) -> Result<Vec<TrialRecording>> {
        if self.odors.is_empty() {
            return Err(Error::usage("manifest lists no odors"));
        }
        self.odors
            .iter()
            .map(|e| {
                let p = base_dir.join(&e.path);
                match e.format {
                    FileFormat::Distribution => load_trial(
                        &p,
                        &e.label,
                        e.metadata.clone().unwrap_or_default(),
                        &self.layout,
                    ),
                    FileFormat::Canonical => load_canonical(&p, self.layout.expected_columns),
                }
            })
            .collect()
    }
}

/// Reads a manifest and all trials it lists.
pub fn load_manifest(path: &Path) -> Result<Vec<TrialRecording>> {
    let manifest = Manifest::from_file(path)?;
    manifest.load(path.parent().unwrap_or(Path::new(".")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub num_odors: usize,
    /// Fraction of sensors an odor drives strongly.
    pub base_sparsity: f64,
    /// Standard deviation of the per-sensor multiplicative plume fluctuation.
    pub plume_noise_sd: f64,
    pub duration_s: f64,
    pub sample_rate: f64,
    pub rng_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_odors: 10,
            base_sparsity: 0.5,
            plume_noise_sd: 0.02,
            duration_s: 180.0,
            sample_rate: 10.0,
            rng_seed: 0,
        }
    }
}

/// Largest allowed fraction of shared active sensors between two synthetic odors.
pub const MAX_ACTIVE_OVERLAP: f64 = 0.6;

/// Smooth zero-mean noise: a sum of a few random low-frequency sinusoids, unit RMS.
fn smooth_series(rng: &mut impl Rng, n: usize, rate: f64) -> Vec<f64> {
    const COMPONENTS: usize = 4;
    let parts: Vec<(f64, f64)> = (0..COMPONENTS)
        .map(|_| {
            (
                rng.random_range(0.005..0.05) * std::f64::consts::TAU,
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let norm = (2.0 / COMPONENTS as f64).sqrt();
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            norm * parts.iter().map(|(w, ph)| (w * t + ph).sin()).sum::<f64>()
        })
        .collect()
}

/// Generates one recording per odor from a random base pattern and smooth plume fluctuations.
///
/// Each odor drives a random subset of sensors. Subsets are redrawn until every
/// pair shares less than [`MAX_ACTIVE_OVERLAP`] of its active sensors.
pub fn synthesize_dataset(spec: &SyntheticSpec) -> Result<Vec<TrialRecording>> {
    if spec.num_odors == 0 {
        return Err(Error::config("synthetic dataset needs at least one odor"));
    }
    if !(spec.base_sparsity > 0.0 && spec.base_sparsity <= 1.0) {
        return Err(Error::config("base_sparsity must lie in (0, 1]"));
    }
    if !(spec.plume_noise_sd >= 0.0) || !(spec.sample_rate > 0.0) || !(spec.duration_s > 0.0) {
        return Err(Error::config("plume noise, rate and duration must be positive"));
    }
    let n_active = ((spec.base_sparsity * NUM_SENSORS as f64).round() as usize).max(1);
    let rows = (spec.duration_s * spec.sample_rate).round() as usize;
    let mut rng = rng_for(spec.rng_seed, "synthetic", 0);
    let baseline: Vec<f64> = (0..NUM_SENSORS).map(|_| rng.random_range(1.0..3.0)).collect();
    let gain: Vec<f64> = (0..NUM_SENSORS).map(|_| rng.random_range(0.5..2.0)).collect();

    let mut active_sets: Vec<Vec<bool>> = Vec::new();
    let mut trials = Vec::with_capacity(spec.num_odors);
    for odor in 0..spec.num_odors {
        let mut orng = rng_for(spec.rng_seed, "synthetic-odor", odor as u64);
        let active = loop {
            let mut mask = vec![false; NUM_SENSORS];
            for i in rand::seq::index::sample(&mut orng, NUM_SENSORS, n_active) {
                mask[i] = true;
            }
            let ok = active_sets.iter().all(|other| {
                let shared = mask.iter().zip(other).filter(|(a, b)| **a && **b).count();
                (shared as f64) < MAX_ACTIVE_OVERLAP * n_active as f64
            });
            if ok {
                break mask;
            }
        };
        let amplitude: Vec<f64> = active
            .iter()
            .map(|&a| if a { orng.random_range(0.2..1.0) } else { orng.random_range(0.0..0.05) })
            .collect();
        let envelope = smooth_series(&mut orng, rows, spec.sample_rate);
        let mut data = Vec::with_capacity(rows * NUM_SENSORS);
        let per_sensor: Vec<Vec<f64>> = (0..NUM_SENSORS)
            .map(|_| smooth_series(&mut orng, rows, spec.sample_rate))
            .collect();
        for r in 0..rows {
            let plume = (1.0 + spec.plume_noise_sd * envelope[r]).max(0.0);
            for s in 0..NUM_SENSORS {
                let local = (1.0 + spec.plume_noise_sd * per_sensor[s][r]).max(0.0);
                data.push(baseline[s] + gain[s] * amplitude[s] * plume * local);
            }
        }
        active_sets.push(active);
        trials.push(TrialRecording::new(
            format!("odor{:02}", odor + 1),
            spec.sample_rate,
            TrialMetadata::default(),
            NUM_SENSORS,
            data,
        )?);
    }
    Ok(trials)
}

/// Calibration over every row of the given training recordings.
pub fn calibrate_trials(trials: &[TrialRecording]) -> Result<SensorCalibration> {
    calibrate(trials.iter().flat_map(TrialRecording::iter_rows))
}

/// Raw readings to the sparse level vector presented to the network.
pub fn encode(raw: &[f64], cal: &SensorCalibration) -> Result<LevelVector> {
    Ok(sparsify(&discretize(raw, cal)?))
}

/// Encoded training sample and test grid of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct OdorSamples {
    pub label: String,
    pub train: LevelVector,
    pub tests: Vec<LevelVector>,
}

/// Calibrates on `trials` and encodes each trial's training sample and test grid.
pub fn prepare(trials: &[TrialRecording]) -> Result<Vec<OdorSamples>> {
    let cal = calibrate_trials(trials)?;
    trials
        .iter()
        .map(|t| {
            let (train, tests) = training_and_test_samples(t)?;
            Ok(OdorSamples {
                label: t.odor_label.clone(),
                train: encode(&train, &cal)?,
                tests: tests.iter().map(|x| encode(x, &cal)).collect::<Result<_>>()?,
            })
        })
        .collect()
}
