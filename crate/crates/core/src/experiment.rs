//! Experiment protocols, run reports and their on-disk form.
//!
//! Every random draw comes from a stream derived from the master seed by label,
//! so a run is fully determined by its config and adding trials to one sweep
//! point leaves the draws of all earlier trials unchanged.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{run_benchmark, BaselineConfig, BenchmarkSpec, Method};
use crate::dataset::{
    calibrate_trials, encode, load_manifest, prepare, synthesize_dataset, test_times,
    OdorSamples, SyntheticSpec, TrialRecording,
};
use crate::encoding::{occlude_with, LevelVector};
use crate::error::{Error, Result};
use crate::modulation::{clear_priming, neuromodulated_identify, prime_gcs, NeuromodSchedule, PrimingSpec};
use crate::network::{GammaConfig, Mode, Network, NetworkConfig, SniffResponse, SniffState};
use crate::parallel::{try_map_indexed, ExecMode};
use crate::plasticity::{train_odor, train_sequence, OdorLibrary, PlasticityConfig};
use crate::readout::{classify_sniff, jaccard, Classification, DEFAULT_THRESHOLD};
use crate::seed::{derive, rng_for, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    TrainTest,
    SweepNoise,
    Neuromod,
    Prime,
    Benchmark,
    Continuous,
    Fewshot,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::TrainTest,
        Command::SweepNoise,
        Command::Neuromod,
        Command::Prime,
        Command::Benchmark,
        Command::Continuous,
        Command::Fewshot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::TrainTest => "train-test",
            Command::SweepNoise => "sweep-noise",
            Command::Neuromod => "neuromod",
            Command::Prime => "prime",
            Command::Benchmark => "benchmark",
            Command::Continuous => "continuous",
            Command::Fewshot => "fewshot",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Command::ALL.iter().map(|c| c.name()).collect();
                Error::usage(format!("unknown command '{s}'; expected one of {}", names.join(", ")))
            })
    }
}

/// Where odor recordings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Manifest { path: PathBuf },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Trials per odor at every sweep point.
    pub trials: usize,
    pub threshold: f64,
    /// Restricts sweeps to one occlusion level, or sets the level of single-level protocols.
    pub noise_p: Option<f64>,
    /// Continuous mode: keep one noise instantiation across successive samples.
    pub held_noise: bool,
    /// Restricts the priming sweep to one fraction.
    pub prime_fraction: Option<f64>,
    /// Output location; not part of the config hash.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    /// Execution strategy; results do not depend on it.
    #[serde(skip_serializing)]
    pub exec: ExecMode,
    pub schedule: NeuromodSchedule,
    pub network: NetworkConfig,
    pub gamma: GammaConfig,
    pub plasticity: PlasticityConfig,
    pub baselines: BaselineConfig,
    pub dataset: DatasetSource,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 100,
            threshold: DEFAULT_THRESHOLD,
            noise_p: None,
            held_noise: false,
            prime_fraction: None,
            out: PathBuf::from("results"),
            exec: ExecMode::default(),
            schedule: NeuromodSchedule::default(),
            network: NetworkConfig::default(),
            gamma: GammaConfig::default(),
            plasticity: PlasticityConfig::default(),
            baselines: BaselineConfig::default(),
            dataset: DatasetSource::default(),
        }
    }
}

fn unit_interval(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::config(format!("{name} must lie in [0, 1], got {x}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate(&self.gamma)?;
        self.plasticity.validate()?;
        self.baselines.validate(self.network.num_columns)?;
        unit_interval("threshold", self.threshold)?;
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if let Some(p) = self.noise_p {
            unit_interval("noise_p", p)?;
        }
        if let Some(f) = self.prime_fraction {
            unit_interval("prime_fraction", f)?;
        }
        Ok(())
    }

    /// Canonical serialized form; everything that can change results is included.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }

    /// SHA-256 of the canonical serialized form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// A named comma-separated table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    /// Values of one column, or `None` if there is no such column.
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::input(format!("cannot serialize table {}: {e}", self.name));
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: Command,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub version: String,
    /// Named sub-seeds derived from the master seed.
    pub seeds: BTreeMap<String, u64>,
    pub metrics: Vec<Table>,
    /// Spike rasters: one row per spike.
    pub rasters: Vec<Table>,
}

impl RunReport {
    pub fn metric(&self, name: &str) -> Option<&Table> {
        self.metrics.iter().find(|t| t.name == name)
    }

    pub fn raster(&self, name: &str) -> Option<&Table> {
        self.rasters.iter().find(|t| t.name == name)
    }
}

#[derive(Serialize)]
struct ManifestFile<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_hash: &'a str,
    metrics: Vec<String>,
    rasters: Vec<String>,
    seeds: &'a BTreeMap<String, u64>,
    config: &'a ExperimentConfig,
}

/// Writes `<name>.csv` per metric table, `raster_<name>.csv` per raster and `manifest.toml`.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |file: String, text: String| -> Result<String> {
        let path = dir.join(&file);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(file)
    };
    let mut metrics = Vec::new();
    for t in &report.metrics {
        metrics.push(put(format!("{}.csv", t.name), t.to_csv()?)?);
    }
    let mut rasters = Vec::new();
    for t in &report.rasters {
        rasters.push(put(format!("raster_{}.csv", t.name), t.to_csv()?)?);
    }
    let manifest = ManifestFile {
        command: report.command.name(),
        version: &report.version,
        seed: report.config.seed,
        config_hash: &report.config_hash,
        metrics,
        rasters,
        seeds: &report.seeds,
        config: &report.config,
    };
    let text = toml::to_string(&manifest)
        .map_err(|e| Error::config(format!("cannot serialize manifest: {e}")))?;
    put("manifest.toml".into(), text)?;
    Ok(written)
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn label_or_unknown(c: &Option<String>) -> String {
    c.clone().unwrap_or_else(|| "unknown".into())
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.into()
}

/// Seed of trial `trial` of `odor` at sweep point `point` of `experiment`.
pub fn trial_seed(master: u64, experiment: &str, point: u64, odor: &str, trial: u64) -> u64 {
    derive(derive(derive(master, experiment, point), odor, 0), "trial", trial)
}

fn occluded(clean: &LevelVector, p: f64, seed: u64) -> LevelVector {
    occlude_with(clean, p, &mut rng_from(seed)).0
}

/// Similarity of every cycle of a sniff to `label`'s learned pattern.
fn trace_for(c: &Classification, label: &str) -> Vec<f64> {
    c.per_cycle
        .iter()
        .find(|(l, _)| l == label)
        .map(|(_, s)| s.clone())
        .unwrap_or_default()
}

fn cycle_columns(prefix: &str, n: u32) -> Vec<String> {
    (1..=n).map(|c| format!("{prefix}{c}")).collect()
}

fn sweep_levels(cfg: &ExperimentConfig) -> Vec<f64> {
    match cfg.noise_p {
        Some(p) => vec![p],
        None => (0..=10).map(|i| f64::from(i) / 10.0).collect(),
    }
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    seeds: BTreeMap<String, u64>,
}

impl Run<'_> {
    fn seed(&mut self, label: &str) -> u64 {
        let s = derive(self.cfg.seed, label, 0);
        self.seeds.insert(label.to_string(), s);
        s
    }

    fn recordings(&mut self) -> Result<Vec<TrialRecording>> {
        let trials = match &self.cfg.dataset {
            DatasetSource::Synthetic(spec) => {
                if spec.num_odors == 0 {
                    return Err(Error::usage("the synthetic dataset has zero odors"));
                }
                let spec = SyntheticSpec {
                    rng_seed: self.seed("dataset"),
                    ..spec.clone()
                };
                synthesize_dataset(&spec)?
            }
            DatasetSource::Manifest { path } => load_manifest(path).map_err(|e| match e {
                Error::Io { .. } => Error::input(format!(
                    "cannot load dataset manifest {}: {e}; use --dataset synthetic for generated data",
                    path.display()
                )),
                e => e,
            })?,
        };
        if trials.is_empty() {
            return Err(Error::usage("the dataset has zero odors; nothing to train"));
        }
        Ok(trials)
    }

    fn build(&mut self) -> Result<Network> {
        let cfg = NetworkConfig {
            rng_seed: self.seed("network"),
            ..self.cfg.network.clone()
        };
        Network::build(cfg, self.cfg.gamma)
    }

    fn train_all(&mut self, odors: &[OdorSamples]) -> Result<(Network, OdorLibrary)> {
        let mut net = self.build()?;
        let mut lib = OdorLibrary::new();
        let mut rng = rng_from(self.seed("training"));
        train_sequence(
            &mut net,
            &mut lib,
            odors.iter().map(|o| (o.label.as_str(), &o.train)),
            &self.cfg.plasticity,
            &mut rng,
        )?;
        Ok((net, lib))
    }

    fn cycles(&self) -> u32 {
        self.cfg.gamma.cycles_per_sniff
    }
}

fn tuning_table(lib: &OdorLibrary) -> Table {
    let mut t = Table::new("tuning", &["odor", "cohort", "tuned_gcs"]);
    for r in lib.records() {
        t.push(vec![r.label.clone(), r.cohort.to_string(), r.tuned_gcs.len().to_string()]);
    }
    t
}

fn raster_rows(t: &mut Table, keys: &[String], sniff: &SniffResponse) {
    for (c, cycle) in sniff.cycles.iter().enumerate() {
        for s in cycle.iter() {
            let mut row = keys.to_vec();
            row.extend([(c + 1).to_string(), s.mc.to_string(), s.ts.to_string()]);
            t.push(row);
        }
    }
}

fn accuracy_row(correct: usize, n: usize) -> [String; 3] {
    [n.to_string(), correct.to_string(), f6(correct as f64 / n.max(1) as f64)]
}

/// Runs `command` and returns its report; nothing is written to disk.
pub fn run_experiment(cfg: &ExperimentConfig, command: Command) -> Result<RunReport> {
    cfg.validate()?;
    let mut run = Run {
        cfg,
        seeds: BTreeMap::new(),
    };
    let (metrics, rasters) = match command {
        Command::TrainTest => train_test(&mut run)?,
        Command::SweepNoise => sweep_noise(&mut run)?,
        Command::Neuromod => neuromod(&mut run)?,
        Command::Prime => prime(&mut run)?,
        Command::Benchmark => benchmark(&mut run)?,
        Command::Continuous => continuous(&mut run)?,
        Command::Fewshot => fewshot(&mut run)?,
    };
    Ok(RunReport {
        command,
        config: cfg.clone(),
        config_hash: cfg.hash()?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: run.seeds,
        metrics,
        rasters,
    })
}

type Tables = (Vec<Table>, Vec<Table>);

fn train_test(run: &mut Run) -> Result<Tables> {
    let odors = prepare(&run.recordings()?)?;
    let (net, lib) = run.train_all(&odors)?;
    let master = run.seed("train-test");
    let cfg = run.cfg;
    let noise = cfg.noise_p.unwrap_or(0.6);
    let times = test_times();
    let levels = [0.0, noise];
    let jobs: Vec<(usize, usize, usize)> = (0..levels.len())
        .flat_map(|pi| {
            let odors = &odors;
            (0..odors.len()).flat_map(move |o| (0..odors[o].tests.len()).map(move |k| (pi, o, k)))
        })
        .collect();
    let results = try_map_indexed(cfg.exec, jobs.len(), |i| {
        let (pi, o, k) = jobs[i];
        let odor = &odors[o];
        let seed = trial_seed(master, "plume", pi as u64, &odor.label, k as u64);
        let input = if levels[pi] > 0.0 {
            occluded(&odor.tests[k], levels[pi], seed)
        } else {
            odor.tests[k].clone()
        };
        let resp = net.run_sniff(&input, Mode::Test)?;
        let c = classify_sniff(&resp, &lib, cfg.threshold)?;
        Ok::<_, Error>((seed, c, resp))
    })?;

    let mut trials = Table::new(
        "trials",
        &["p", "odor", "time_s", "seed", "predicted", "correct", "best_similarity"],
    );
    let mut raster = Table::new("plume", &["p", "odor", "time_s", "cycle", "mc", "ts"]);
    let mut correct = vec![0usize; levels.len()];
    for (&(pi, o, k), (seed, c, resp)) in jobs.iter().zip(&results) {
        let label = &odors[o].label;
        let ok = c.is(label);
        correct[pi] += usize::from(ok);
        let time = times.get(k).map_or_else(|| k.to_string(), |t| format!("{t}"));
        trials.push(vec![
            f6(levels[pi]),
            label.clone(),
            time.clone(),
            seed.to_string(),
            label_or_unknown(&c.label),
            flag(ok),
            f6(c.best_similarity),
        ]);
        if k == 0 {
            raster_rows(&mut raster, &[f6(levels[pi]), label.clone(), time], resp);
        }
    }
    let mut acc = Table::new("accuracy", &["p", "trials", "correct", "accuracy", "seed"]);
    let per_level = jobs.len() / levels.len();
    for (pi, &p) in levels.iter().enumerate() {
        let mut row = vec![f6(p)];
        row.extend(accuracy_row(correct[pi], per_level));
        row.push(master.to_string());
        acc.push(row);
    }
    Ok((vec![acc, trials, tuning_table(&lib)], vec![raster]))
}

/// Flattened (level, odor, trial) jobs of a sweep.
fn sweep_jobs(levels: usize, odors: usize, trials: usize) -> Vec<(usize, usize, usize)> {
    let mut v = Vec::with_capacity(levels * odors * trials);
    for p in 0..levels {
        for o in 0..odors {
            for t in 0..trials {
                v.push((p, o, t));
            }
        }
    }
    v
}

fn sweep_noise(run: &mut Run) -> Result<Tables> {
    let odors = prepare(&run.recordings()?)?;
    let (net, lib) = run.train_all(&odors)?;
    let master = run.seed("sweep-noise");
    let cfg = run.cfg;
    let levels = sweep_levels(cfg);
    let jobs = sweep_jobs(levels.len(), odors.len(), cfg.trials);
    let results = try_map_indexed(cfg.exec, jobs.len(), |i| {
        let (pi, o, t) = jobs[i];
        let seed = trial_seed(master, "p", pi as u64, &odors[o].label, t as u64);
        let input = occluded(&odors[o].train, levels[pi], seed);
        let c = classify_sniff(&net.run_sniff(&input, Mode::Test)?, &lib, cfg.threshold)?;
        Ok::<_, Error>((seed, c))
    })?;

    let mut header = vec!["p", "odor", "trial", "seed", "predicted", "correct"];
    let sims = cycle_columns("sim_c", run.cycles());
    header.extend(sims.iter().map(String::as_str));
    let mut trials = Table::new("trials", &header);
    let mut correct = vec![0usize; levels.len()];
    for (&(pi, o, t), (seed, c)) in jobs.iter().zip(&results) {
        let label = &odors[o].label;
        let ok = c.is(label);
        correct[pi] += usize::from(ok);
        let mut row = vec![
            f6(levels[pi]),
            label.clone(),
            t.to_string(),
            seed.to_string(),
            label_or_unknown(&c.label),
            flag(ok),
        ];
        row.extend(trace_for(c, label).into_iter().map(f6));
        trials.push(row);
    }
    let mut acc = Table::new("accuracy", &["p", "trials", "correct", "accuracy", "seed"]);
    for (pi, &p) in levels.iter().enumerate() {
        let mut row = vec![f6(p)];
        row.extend(accuracy_row(correct[pi], odors.len() * cfg.trials));
        row.push(master.to_string());
        acc.push(row);
    }
    Ok((vec![acc, trials, tuning_table(&lib)], Vec::new()))
}

fn neuromod(run: &mut Run) -> Result<Tables> {
    let odors = prepare(&run.recordings()?)?;
    let (net, lib) = run.train_all(&odors)?;
    let master = run.seed("neuromod");
    let cfg = run.cfg;
    let levels = sweep_levels(cfg);
    let jobs = sweep_jobs(levels.len(), odors.len(), cfg.trials);
    let results = try_map_indexed(cfg.exec, jobs.len(), |i| {
        let (pi, o, t) = jobs[i];
        let seed = trial_seed(master, "p", pi as u64, &odors[o].label, t as u64);
        let input = occluded(&odors[o].train, levels[pi], seed);
        let single = classify_sniff(&net.run_sniff(&input, Mode::Test)?, &lib, cfg.threshold)?;
        let sched = neuromodulated_identify(&net, &input, &lib, &cfg.schedule, cfg.threshold)?;
        Ok::<_, Error>((seed, single.label, sched.classification.label))
    })?;

    let mut trials = Table::new(
        "trials",
        &["p", "odor", "trial", "seed", "single_predicted", "single_correct", "scheduled_predicted", "scheduled_correct"],
    );
    let mut single_ok = vec![0usize; levels.len()];
    let mut sched_ok = vec![0usize; levels.len()];
    for (&(pi, o, t), (seed, single, sched)) in jobs.iter().zip(&results) {
        let label = &odors[o].label;
        let a = single.as_deref() == Some(label.as_str());
        let b = sched.as_deref() == Some(label.as_str());
        single_ok[pi] += usize::from(a);
        sched_ok[pi] += usize::from(b);
        trials.push(vec![
            f6(levels[pi]),
            label.clone(),
            t.to_string(),
            seed.to_string(),
            label_or_unknown(single),
            flag(a),
            label_or_unknown(sched),
            flag(b),
        ]);
    }
    let n = odors.len() * cfg.trials;
    let mut acc = Table::new(
        "accuracy",
        &["p", "trials", "single_accuracy", "scheduled_accuracy", "seed"],
    );
    for (pi, &p) in levels.iter().enumerate() {
        acc.push(vec![
            f6(p),
            n.to_string(),
            f6(single_ok[pi] as f64 / n as f64),
            f6(sched_ok[pi] as f64 / n as f64),
            master.to_string(),
        ]);
    }
    Ok((vec![acc, trials], Vec::new()))
}

fn prime(run: &mut Run) -> Result<Tables> {
    let odors = prepare(&run.recordings()?)?;
    let (mut net, lib) = run.train_all(&odors)?;
    let master = run.seed("prime");
    let cfg = run.cfg;
    let p = cfg.noise_p.unwrap_or(0.9);
    let fractions = match cfg.prime_fraction {
        Some(f) => vec![f],
        None => vec![0.0, 0.25, 0.5, 0.75, 1.0],
    };
    let mut trials = Table::new(
        "trials",
        &["fraction", "p", "odor", "trial", "seed", "primed_gcs", "predicted", "correct"],
    );
    let mut acc = Table::new("accuracy", &["fraction", "p", "trials", "correct", "accuracy", "seed"]);
    for (fi, &f) in fractions.iter().enumerate() {
        let mut correct = 0;
        for odor in &odors {
            let mut rng = rng_for(derive(master, "fraction", fi as u64), &odor.label, 0);
            let primed = prime_gcs(&mut net, &lib, &PrimingSpec::new(odor.label.clone(), f), &mut rng)?;
            let net_ref = &net;
            let results = try_map_indexed(cfg.exec, cfg.trials, |t| {
                let seed = trial_seed(master, "trial-noise", fi as u64, &odor.label, t as u64);
                let input = occluded(&odor.train, p, seed);
                let c = classify_sniff(&net_ref.run_sniff(&input, Mode::Test)?, &lib, cfg.threshold)?;
                Ok::<_, Error>((seed, c.label))
            })?;
            clear_priming(&mut net);
            for (t, (seed, label)) in results.into_iter().enumerate() {
                let ok = label.as_deref() == Some(odor.label.as_str());
                correct += usize::from(ok);
                trials.push(vec![
                    f6(f),
                    f6(p),
                    odor.label.clone(),
                    t.to_string(),
                    seed.to_string(),
                    primed.len().to_string(),
                    label_or_unknown(&label),
                    flag(ok),
                ]);
            }
        }
        let mut row = vec![f6(f), f6(p)];
        row.extend(accuracy_row(correct, odors.len() * cfg.trials));
        row.push(master.to_string());
        acc.push(row);
    }
    Ok((vec![acc, trials], Vec::new()))
}

fn benchmark(run: &mut Run) -> Result<Tables> {
    let odors = prepare(&run.recordings()?)?;
    let (net, lib) = run.train_all(&odors)?;
    let cfg = run.cfg;
    let spec = BenchmarkSpec {
        methods: Method::ALL.to_vec(),
        trials_per_odor: cfg.trials,
        p_range: cfg.noise_p.map_or((0.2, 0.8), |p| (p, p)),
        threshold: cfg.threshold,
        baselines: cfg.baselines.clone(),
        seed: run.seed("benchmark"),
        exec: cfg.exec,
    };
    let samples: Vec<(String, LevelVector)> =
        odors.iter().map(|o| (o.label.clone(), o.train.clone())).collect();
    let report = run_benchmark(&net, &lib, &samples, &spec)?;
    let mut trials = Table::new("trials", &["method", "odor", "p", "seed", "predicted", "correct"]);
    for t in &report.trials {
        trials.push(vec![
            t.method.name().into(),
            t.odor.clone(),
            f6(t.p),
            t.seed.to_string(),
            label_or_unknown(&t.predicted),
            flag(t.correct),
        ]);
    }
    let mut acc = Table::new("accuracy", &["method", "trials", "accuracy", "seed"]);
    for m in &spec.methods {
        let n = report.trials.iter().filter(|t| t.method == *m).count();
        acc.push(vec![
            m.name().into(),
            n.to_string(),
            f6(report.accuracy(*m).unwrap_or(0.0)),
            spec.seed.to_string(),
        ]);
    }
    Ok((vec![acc, trials], Vec::new()))
}

/// Successive raw samples presented back to back.
pub const CONTINUOUS_SAMPLES: usize = 8;

fn continuous(run: &mut Run) -> Result<Tables> {
    let recordings = run.recordings()?;
    let odors = prepare(&recordings)?;
    let cal = calibrate_trials(&recordings)?;
    let (net, lib) = run.train_all(&odors)?;
    let master = run.seed("continuous");
    let cfg = run.cfg;
    let p = cfg.noise_p.unwrap_or(0.5);
    let cycles = run.cycles();

    let results = try_map_indexed(cfg.exec, recordings.len(), |o| {
        successive_samples(&net, &lib, &recordings[o], &cal, p, cfg.held_noise, master, cfg.threshold)
    })?;

    let mut header = vec!["odor", "sample", "noise", "p", "seed", "predicted", "correct"];
    let sims = cycle_columns("sim_c", cycles);
    header.extend(sims.iter().map(String::as_str));
    let mut samples = Table::new("samples", &header);
    let mut raster = Table::new("continuous", &["odor", "sample", "cycle", "mc", "ts"]);
    let mut correct = 0;
    let noise = if cfg.held_noise { "held" } else { "redrawn" };
    for (rec, per_sample) in recordings.iter().zip(&results) {
        let label = &rec.odor_label;
        for (k, (seed, c, resp)) in per_sample.iter().enumerate() {
            let ok = c.is(label);
            correct += usize::from(ok);
            let mut row = vec![
                label.clone(),
                k.to_string(),
                noise.into(),
                f6(p),
                seed.to_string(),
                label_or_unknown(&c.label),
                flag(ok),
            ];
            row.extend(trace_for(c, label).into_iter().map(f6));
            samples.push(row);
            raster_rows(&mut raster, &[label.clone(), k.to_string()], resp);
        }
    }
    let mut acc = Table::new("accuracy", &["noise", "p", "trials", "correct", "accuracy", "seed"]);
    let mut row = vec![noise.to_string(), f6(p)];
    row.extend(accuracy_row(correct, recordings.len() * CONTINUOUS_SAMPLES));
    row.push(master.to_string());
    acc.push(row);
    Ok((vec![acc, samples], vec![raster]))
}

/// Presents [`CONTINUOUS_SAMPLES`] consecutive rows of `rec`, starting at the first test time,
/// without resetting the network between them.
#[allow(clippy::too_many_arguments)]
pub fn successive_samples(
    net: &Network,
    lib: &OdorLibrary,
    rec: &TrialRecording,
    cal: &crate::encoding::SensorCalibration,
    p: f64,
    held_noise: bool,
    master: u64,
    threshold: f64,
) -> Result<Vec<(u64, Classification, SniffResponse)>> {
    let start = (test_times()[0] * rec.sample_rate).round() as usize;
    if start + CONTINUOUS_SAMPLES > rec.rows() {
        return Err(Error::input(format!(
            "recording of '{}' is too short for {CONTINUOUS_SAMPLES} successive samples",
            rec.odor_label
        )));
    }
    let mut state = SniffState::new(net);
    (0..CONTINUOUS_SAMPLES)
        .map(|k| {
            let clean = encode(rec.row(start + k), cal)?;
            let draw = if held_noise { 0 } else { k as u64 };
            let seed = trial_seed(master, "noise", 0, &rec.odor_label, draw);
            let input = occluded(&clean, p, seed);
            let records = (0..net.gamma().cycles_per_sniff)
                .map(|_| net.run_cycle(&mut state, &input, Mode::Test))
                .collect::<Result<Vec<_>>>()?;
            let resp = SniffResponse::from_records(records);
            let c = classify_sniff(&resp, lib, threshold)?;
            Ok((seed, c, resp))
        })
        .collect()
}

/// Training noise levels of the few-shot sweep.
pub const FEWSHOT_LEVELS: [f64; 4] = [0.0, 0.2, 0.4, 0.6];

/// Mean per-cycle recall similarity after few-shot training on `odor` at training noise `train_p`.
///
/// Test samples are occluded at a level drawn uniformly from [0.2, 0.8].
pub fn fewshot_recall(
    net_cfg: &NetworkConfig,
    gamma: GammaConfig,
    odor: &OdorSamples,
    train_p: f64,
    trials: usize,
    seed: u64,
    exec: ExecMode,
) -> Result<Vec<(u64, f64, Vec<f64>)>> {
    let mut net = Network::build(net_cfg.clone(), gamma)?;
    let mut lib = OdorLibrary::new();
    let mut rng = rng_for(seed, "training", 0);
    let rec = train_odor(&mut net, &mut lib, &odor.train, &odor.label, &PlasticityConfig::few_shot(train_p), &mut rng)?;
    try_map_indexed(exec, trials, |t| {
        let s = derive(seed, "trial", t as u64);
        let mut rng = rng_from(s);
        let p = rng.random_range(0.2..=0.8);
        let (input, _) = occlude_with(&odor.train, p, &mut rng);
        let resp = net.run_sniff(&input, Mode::Test)?;
        let sims = resp.cycles.iter().map(|c| jaccard(c, &rec.learned_pattern)).collect();
        Ok((s, p, sims))
    })
}

fn fewshot(run: &mut Run) -> Result<Tables> {
    let odors = prepare(&run.recordings()?)?;
    let master = run.seed("fewshot");
    let net_cfg = NetworkConfig {
        rng_seed: run.seed("network"),
        ..run.cfg.network.clone()
    };
    let cfg = run.cfg;
    let levels = cfg.noise_p.map_or(FEWSHOT_LEVELS.to_vec(), |p| vec![p]);
    let cycles = run.cycles();
    let odor = &odors[0];

    let mut header = vec!["train_p", "odor", "trial", "seed", "test_p"];
    let sims = cycle_columns("sim_c", cycles);
    header.extend(sims.iter().map(String::as_str));
    let mut trials = Table::new("trials", &header);
    let mut sheader = vec!["train_p", "odor", "trials", "seed"];
    let means = cycle_columns("mean_sim_c", cycles);
    sheader.extend(means.iter().map(String::as_str));
    let mut summary = Table::new("recall", &sheader);

    for (li, &train_p) in levels.iter().enumerate() {
        let seed = derive(master, "level", li as u64);
        let rows = fewshot_recall(&net_cfg, cfg.gamma, odor, train_p, cfg.trials, seed, cfg.exec)?;
        let mut mean = vec![0.0; cycles as usize];
        for (t, (s, p, sims)) in rows.iter().enumerate() {
            let mut row = vec![f6(train_p), odor.label.clone(), t.to_string(), s.to_string(), f6(*p)];
            row.extend(sims.iter().map(|x| f6(*x)));
            trials.push(row);
            for (m, x) in mean.iter_mut().zip(sims) {
                *m += x / rows.len() as f64;
            }
        }
        let mut row = vec![f6(train_p), odor.label.clone(), rows.len().to_string(), seed.to_string()];
        row.extend(mean.into_iter().map(f6));
        summary.push(row);
    }
    Ok((vec![summary, trials], Vec::new()))
}
