//! Excitatory heterosynaptic STDP, inhibitory blocking-period learning, one-shot
//! odor training and neurogenesis bookkeeping.

use serde::{Deserialize, Serialize};

use crate::encoding::{occlude_with, LevelVector};
use crate::error::{Error, Result};
use crate::network::{CycleRecord, Mode, Network, SniffState, SpikeSet, Timestep};
use crate::seed::SimRng;

/// Which incoming synapses count as coincident with a GC spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoincidenceWindow {
    /// Only arrivals exactly one timestep before the GC spike.
    PrecedingStep,
    /// Every arrival still inside the GC's integration window when it crossed threshold.
    Integration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlasticityConfig {
    /// Potentiation step, in multiples of the base weight.
    pub potentiation: f64,
    /// Depression step, in multiples of the base weight.
    pub depression: f64,
    /// Inhibitory learning rate.
    pub eta: f64,
    pub training_sniffs: u32,
    /// Occlusion applied to every training sniff (few-shot regime).
    pub training_noise_p: f64,
    pub coincidence: CoincidenceWindow,
    pub excitatory_enabled: bool,
    pub inhibitory_enabled: bool,
}

impl Default for PlasticityConfig {
    fn default() -> Self {
        Self {
            potentiation: 0.05,
            depression: 0.2,
            eta: 1.0,
            training_sniffs: 1,
            training_noise_p: 0.0,
            coincidence: CoincidenceWindow::Integration,
            excitatory_enabled: true,
            inhibitory_enabled: true,
        }
    }
}

impl PlasticityConfig {
    /// Gradual regime: both excitatory steps scaled by 0.005, eta 0.1, 200 sniffs.
    pub fn few_shot(training_noise_p: f64) -> Self {
        const RATE: f64 = 0.005;
        Self {
            potentiation: 0.05 * RATE,
            depression: 0.2 * RATE,
            eta: 0.1,
            training_sniffs: 200,
            training_noise_p,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.potentiation > 0.0) || !(self.depression > 0.0) {
            return Err(Error::config("plasticity steps must be positive"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::config("eta must lie in (0, 1]"));
        }
        if self.training_sniffs == 0 {
            return Err(Error::config("need at least one training sniff"));
        }
        if !(0.0..=1.0).contains(&self.training_noise_p) {
            return Err(Error::config("training noise fraction outside [0, 1]"));
        }
        Ok(())
    }
}

/// A learned odor: its stored pattern and the GCs that differentiated for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdorRecord {
    pub label: String,
    pub cohort: usize,
    pub learned_pattern: SpikeSet,
    pub tuned_gcs: Vec<usize>,
    /// Number of distinct cohort GCs that had spiked by the end of each training cycle.
    pub tuning_trace: Vec<usize>,
}

/// Learned odors in training order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OdorLibrary {
    records: Vec<OdorRecord>,
}

impl OdorLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[OdorRecord] {
        &self.records
    }

    pub fn get(&self, label: &str) -> Option<&OdorRecord> {
        self.records.iter().find(|r| r.label == label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.label.as_str())
    }

    pub fn push(&mut self, record: OdorRecord) -> Result<()> {
        if self.get(&record.label).is_some() {
            return Err(Error::usage(format!("odor '{}' already trained", record.label)));
        }
        self.records.push(record);
        Ok(())
    }
}

/// Heterosynaptic STDP on one GC that spiked at `gc_spike_ts`.
///
/// `mc_spikes` are the presynaptic MC spike times of this cycle; arrival times
/// follow from each synapse's delay. Coincident synapses gain `potentiation`,
/// every other incoming synapse (silent ones included) loses `depression`.
pub fn excitatory_update(
    net: &mut Network,
    gc: usize,
    gc_spike_ts: Timestep,
    mc_spikes: &SpikeSet,
    cfg: &PlasticityConfig,
) -> Result<()> {
    if net.gcs()[gc].mature {
        return Err(Error::Contract(format!(
            "excitatory update requested on mature GC {gc}"
        )));
    }
    let we = net.config().base_weight;
    let cap = net.config().weight_cap();
    let inputs = net.gc_inputs(gc).to_vec();
    let window_start = net
        .config()
        .gc_integration
        .window_start(gc_spike_ts.saturating_sub(1));
    for syn in inputs {
        let s = &net.exc_synapses()[syn];
        let arrival = mc_spikes.ts_of(s.pre_mc).map(|t| t + s.delay());
        let coincident = match (arrival, cfg.coincidence) {
            (Some(a), CoincidenceWindow::PrecedingStep) => a + 1 == gc_spike_ts,
            (Some(a), CoincidenceWindow::Integration) => a < gc_spike_ts && a >= window_start,
            (None, _) => false,
        };
        let w = if coincident {
            (s.weight() + cfg.potentiation * we).min(cap)
        } else {
            (s.weight() - cfg.depression * we).max(0.0)
        };
        net.set_weight(syn, w);
    }
    Ok(())
}

/// New blocking period after one cycle in which the synapse blocked its MC.
///
/// The change is `eta * (t_ad - t_release)` rounded up. A missing AD event counts as
/// `t_ad = permissive_len`, growing the block toward the whole epoch.
pub fn updated_blocking_period(
    blocking_period: Timestep,
    t_ad: Option<Timestep>,
    eta: f64,
    permissive_len: Timestep,
) -> Timestep {
    let t_release = f64::from(blocking_period);
    let target = f64::from(t_ad.unwrap_or(permissive_len));
    let delta = (eta * (target - t_release)).ceil();
    (t_release + delta).clamp(0.0, f64::from(permissive_len)) as Timestep
}

/// Applies the inhibitory rule to the synapse of `gc`, which spiked last cycle.
pub fn inhibitory_update(net: &mut Network, gc: usize, t_ad: Option<Timestep>, eta: f64) {
    let current = net.inh_synapses()[gc].blocking_period();
    let next = updated_blocking_period(current, t_ad, eta, net.gamma().permissive_len);
    net.set_blocking_period(gc, next);
}

/// Applies both rules to the plastic cohort after one training cycle.
pub fn apply_cycle_plasticity(
    net: &mut Network,
    record: &CycleRecord,
    cfg: &PlasticityConfig,
) -> Result<()> {
    let Some(cohort) = net.plastic_cohort().map(|c| c.gc_ids()) else {
        return Ok(());
    };
    if cfg.excitatory_enabled {
        for &(gc, ts) in &record.gc_spikes {
            if cohort.contains(&gc) {
                excitatory_update(net, gc, ts, &record.mc_spikes, cfg)?;
            }
        }
    }
    if cfg.inhibitory_enabled {
        for &gc in &record.armed_gcs {
            if cohort.contains(&gc) {
                let mc = net.inh_synapses()[gc].post_mc;
                inhibitory_update(net, gc, record.ad_times[mc], cfg.eta);
            }
        }
    }
    Ok(())
}

/// Trains the plastic cohort on one odor, matures it and stores the learned pattern.
///
/// `rng` only drives training-time occlusion; with zero training noise it is untouched.
pub fn train_odor(
    net: &mut Network,
    library: &mut OdorLibrary,
    clean: &LevelVector,
    label: &str,
    cfg: &PlasticityConfig,
    rng: &mut SimRng,
) -> Result<OdorRecord> {
    cfg.validate()?;
    if library.get(label).is_some() {
        return Err(Error::usage(format!("odor '{label}' already trained")));
    }
    let cohort = net
        .plastic_cohort()
        .ok_or_else(|| Error::State("no immature cohort to train; add one first".into()))?
        .clone();
    let range = cohort.gc_ids();
    let mut spiked = vec![false; range.len()];
    let mut tuning_trace = Vec::new();

    for _ in 0..cfg.training_sniffs {
        let input = if cfg.training_noise_p > 0.0 {
            occlude_with(clean, cfg.training_noise_p, rng).0
        } else {
            clean.clone()
        };
        let mut state = SniffState::new(net);
        for _ in 0..net.gamma().cycles_per_sniff {
            let record = net.run_cycle(&mut state, &input, Mode::Train)?;
            for &(gc, _) in &record.gc_spikes {
                if range.contains(&gc) {
                    spiked[gc - range.start] = true;
                }
            }
            tuning_trace.push(spiked.iter().filter(|&&s| s).count());
            apply_cycle_plasticity(net, &record, cfg)?;
        }
    }

    net.mature_cohort(cohort.id);
    let learned_pattern = net.run_sniff(clean, Mode::Test)?.last().clone();
    let tuned_gcs = spiked
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(i, _)| range.start + i)
        .collect();
    let record = OdorRecord {
        label: label.to_string(),
        cohort: cohort.id,
        learned_pattern,
        tuned_gcs,
        tuning_trace,
    };
    library.push(record.clone())?;
    Ok(record)
}

/// Trains odors in order, adding a fresh cohort before every odor after the first.
pub fn train_sequence<'a, I>(
    net: &mut Network,
    library: &mut OdorLibrary,
    odors: I,
    cfg: &PlasticityConfig,
    rng: &mut SimRng,
) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a LevelVector)>,
{
    for (label, sample) in odors {
        if net.plastic_cohort().is_none() {
            net.add_cohort()?;
        }
        train_odor(net, library, sample, label, cfg, rng)?;
    }
    Ok(())
}
