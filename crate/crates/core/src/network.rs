//! Columnar mitral/granule cell network and its discrete-time gamma dynamics.
//!
//! Each column holds one mitral cell (MC) and a growing set of granule cells
//! (GCs). A gamma cycle is a permissive epoch, in which MCs integrate their
//! sensor level and spike, followed by an inhibitory epoch in which MCs are held
//! silent while delayed MC spikes reach the GCs. GC spikes arm an inhibitory
//! synapse onto the cocolumnar MC that shapes MC timing in the next cycle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{LevelVector, MAX_LEVEL, NUM_LEVELS};
use crate::error::{Error, Result};
use crate::seed::{self, SimRng};

pub type Timestep = u32;

/// Timing of the gamma and sniff cycles, in timesteps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GammaConfig {
    pub permissive_len: Timestep,
    pub inhibitory_len: Timestep,
    pub cycles_per_sniff: u32,
}

impl Default for GammaConfig {
    fn default() -> Self {
        Self {
            permissive_len: 16,
            inhibitory_len: 24,
            cycles_per_sniff: 5,
        }
    }
}

impl GammaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.permissive_len == 0 || self.inhibitory_len == 0 || self.cycles_per_sniff == 0 {
            return Err(Error::config("gamma epoch lengths and cycle count must be >= 1"));
        }
        if self.permissive_len < Timestep::from(NUM_LEVELS) {
            return Err(Error::config(format!(
                "permissive epoch ({}) shorter than the {NUM_LEVELS} encoding levels",
                self.permissive_len
            )));
        }
        Ok(())
    }

    pub fn cycle_len(&self) -> Timestep {
        self.permissive_len + self.inhibitory_len
    }
}

/// Apical-dendrite spike initiation time for a sensor level.
///
/// Level 0 never initiates; level `v` initiates at `permissive_len - v`, so
/// stronger inputs lead.
pub fn ad_initiation_time(level: u8, gamma: &GammaConfig) -> Result<Option<Timestep>> {
    if level > MAX_LEVEL || Timestep::from(level) >= gamma.permissive_len {
        return Err(Error::input(format!(
            "level {level} outside 0..={}",
            MAX_LEVEL.min((gamma.permissive_len - 1).min(255) as u8)
        )));
    }
    Ok((level > 0).then(|| gamma.permissive_len - Timestep::from(level)))
}

/// How a GC combines delayed MC inputs within a gamma cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GcIntegration {
    /// Arrivals sum without loss until the cycle boundary or a spike.
    Accumulate,
    /// Excitation is multiplied by `decay` every timestep before new arrivals add.
    Leaky { decay: f64 },
    /// Only arrivals from the last `len` timesteps count toward threshold.
    Window { len: Timestep },
}

impl GcIntegration {
    /// Earliest arrival time still inside the integration window at crossing time `ts`.
    pub fn window_start(&self, ts: Timestep) -> Timestep {
        match *self {
            GcIntegration::Window { len } => (ts + 1).saturating_sub(len),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub num_columns: usize,
    pub gcs_per_cohort: usize,
    pub mc_to_gc_prob: f64,
    /// Initial excitatory weight `we`; every other weight quantity is a multiple of it.
    pub base_weight: f64,
    pub gc_threshold_factor: f64,
    pub weight_cap_factor: f64,
    pub gc_refractory: Timestep,
    pub gc_integration: GcIntegration,
    /// Inclusive range of MC->GC conduction delays. `None` derives
    /// `permissive_len ..= inhibitory_len - 1` so every arrival lands in the inhibitory epoch.
    pub delay_range: Option<(Timestep, Timestep)>,
    pub rng_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_columns: 72,
            gcs_per_cohort: 5,
            mc_to_gc_prob: 0.2,
            base_weight: 1.0,
            gc_threshold_factor: 6.0,
            weight_cap_factor: 1.25,
            gc_refractory: 20,
            gc_integration: GcIntegration::Window { len: 8 },
            delay_range: None,
            rng_seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self, gamma: &GammaConfig) -> Result<()> {
        gamma.validate()?;
        if self.num_columns == 0 || self.gcs_per_cohort == 0 {
            return Err(Error::config("need at least one column and one GC per cohort"));
        }
        if !(self.mc_to_gc_prob > 0.0 && self.mc_to_gc_prob <= 1.0) {
            return Err(Error::config("mc_to_gc_prob must lie in (0, 1]"));
        }
        if !(self.base_weight > 0.0) || !(self.gc_threshold_factor > 0.0) {
            return Err(Error::config("base weight and GC threshold must be positive"));
        }
        if !(self.weight_cap_factor >= 1.0) {
            return Err(Error::config("weight cap must be at least the base weight"));
        }
        match self.gc_integration {
            GcIntegration::Leaky { decay } if !(decay > 0.0 && decay <= 1.0) => {
                return Err(Error::config("leaky GC decay must lie in (0, 1]"));
            }
            GcIntegration::Window { len: 0 } => {
                return Err(Error::config("GC integration window must be >= 1"));
            }
            _ => {}
        }
        let (lo, hi) = self.delays(gamma)?;
        // Earliest MC spike is at ts 1, latest at permissive_len - 1; the GC spike
        // follows the last arrival by one step and must stay inside the cycle.
        if 1 + lo < gamma.permissive_len {
            return Err(Error::config(format!(
                "delay {lo} lets arrivals reach GCs during the permissive epoch"
            )));
        }
        if gamma.permissive_len - 1 + hi + 1 >= gamma.cycle_len() {
            return Err(Error::config(format!(
                "delay {hi} pushes GC spikes past the end of the gamma cycle"
            )));
        }
        Ok(())
    }

    pub fn delays(&self, gamma: &GammaConfig) -> Result<(Timestep, Timestep)> {
        let (lo, hi) = match self.delay_range {
            Some(r) => r,
            None => (gamma.permissive_len, gamma.inhibitory_len.saturating_sub(1)),
        };
        if lo > hi {
            return Err(Error::config(format!("empty delay range {lo}..={hi}")));
        }
        Ok((lo, hi))
    }

    pub fn threshold(&self) -> f64 {
        self.gc_threshold_factor * self.base_weight
    }

    pub fn weight_cap(&self) -> f64 {
        self.weight_cap_factor * self.base_weight
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranuleCell {
    pub id: usize,
    pub column: usize,
    pub cohort: usize,
    /// Unscaled, unprimed threshold.
    pub base_threshold: f64,
    /// Threshold currently in force (neuromodulation and priming adjust this).
    pub threshold: f64,
    pub mature: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcSynapse {
    pub pre_mc: usize,
    pub post_gc: usize,
    weight: f64,
    delay: Timestep,
}

impl ExcSynapse {
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn delay(&self) -> Timestep {
        self.delay
    }
}

/// Functional state of an inhibitory synapse at one permissive timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InhState {
    Inactive,
    Blocking,
    Release,
}

impl InhState {
    pub fn contribution(self) -> i32 {
        match self {
            InhState::Inactive => 0,
            InhState::Blocking => -1,
            InhState::Release => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InhSynapse {
    pub pre_gc: usize,
    pub post_mc: usize,
    blocking_period: Timestep,
}

impl InhSynapse {
    pub fn blocking_period(&self) -> Timestep {
        self.blocking_period
    }

    /// Timestep at which blocking ends and the one-step release fires.
    pub fn release_time(&self) -> Timestep {
        self.blocking_period
    }

    /// State at permissive timestep `ts` of a cycle that follows a GC spike.
    ///
    /// A zero blocking period is a zero-strength synapse and stays inactive.
    pub fn state_at(&self, ts: Timestep) -> InhState {
        if self.blocking_period == 0 {
            InhState::Inactive
        } else if ts < self.blocking_period {
            InhState::Blocking
        } else if ts == self.blocking_period {
            InhState::Release
        } else {
            InhState::Inactive
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub id: usize,
    pub first_gc: usize,
    pub len: usize,
    pub mature: bool,
}

impl Cohort {
    pub fn gc_ids(&self) -> std::ops::Range<usize> {
        self.first_gc..self.first_gc + self.len
    }
}

/// One MC spike: column index and latency within the permissive epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Spike {
    pub mc: usize,
    pub ts: Timestep,
}

/// Spikes of one gamma cycle, sorted by MC with at most one spike per MC.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpikeSet {
    spikes: Vec<Spike>,
}

impl SpikeSet {
    pub fn from_spikes(mut spikes: Vec<Spike>) -> Result<Self> {
        spikes.sort_unstable();
        if spikes.windows(2).any(|w| w[0].mc == w[1].mc) {
            return Err(Error::input("an MC may spike at most once per cycle"));
        }
        Ok(Self { spikes })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Spike> {
        self.spikes.iter()
    }

    pub fn as_slice(&self) -> &[Spike] {
        &self.spikes
    }

    pub fn ts_of(&self, mc: usize) -> Option<Timestep> {
        self.spikes
            .binary_search_by_key(&mc, |s| s.mc)
            .ok()
            .map(|i| self.spikes[i].ts)
    }
}

/// Per-cycle MC output of one sniff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SniffResponse {
    pub cycles: Vec<SpikeSet>,
}

impl SniffResponse {
    pub fn from_records(records: Vec<CycleRecord>) -> Self {
        Self {
            cycles: records.into_iter().map(|c| c.mc_spikes).collect(),
        }
    }

    pub fn last(&self) -> &SpikeSet {
        self.cycles.last().expect("a sniff has at least one cycle")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Inhibition on MC somata is suppressed; MCs spike at their AD time.
    Train,
    Test,
}

/// Everything observable about one simulated gamma cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub mc_spikes: SpikeSet,
    /// AD initiation time per MC (independent of inhibition).
    pub ad_times: Vec<Option<Timestep>>,
    /// GC spikes as (gc id, timestep within the cycle).
    pub gc_spikes: Vec<(usize, Timestep)>,
    /// GCs whose inhibitory synapse was armed during this cycle's permissive epoch.
    pub armed_gcs: Vec<usize>,
}

/// Transient per-sniff state: GC excitation, refractoriness and armed inhibition.
#[derive(Debug, Clone)]
pub struct SniffState {
    cycle: u32,
    gc_v: Vec<f64>,
    gc_v_ts: Vec<Timestep>,
    gc_recent: Vec<Vec<(Timestep, f64)>>,
    gc_last_spike: Vec<Option<u64>>,
    gc_done: Vec<bool>,
    pending: Vec<bool>,
    arrivals: Vec<Vec<usize>>,
    emissions: Vec<Vec<usize>>,
    inh_by_mc: Vec<Vec<usize>>,
    threshold_scale: f64,
}

impl SniffState {
    pub fn new(net: &Network) -> Self {
        let n_gc = net.gcs.len();
        let len = net.gamma.cycle_len() as usize;
        Self {
            cycle: 0,
            gc_v: vec![0.0; n_gc],
            gc_v_ts: vec![0; n_gc],
            gc_recent: vec![Vec::new(); n_gc],
            gc_last_spike: vec![None; n_gc],
            gc_done: vec![false; n_gc],
            pending: vec![false; n_gc],
            arrivals: vec![Vec::new(); len + 1],
            emissions: vec![Vec::new(); len + 1],
            inh_by_mc: vec![Vec::new(); net.cfg.num_columns],
            threshold_scale: 1.0,
        }
    }

    /// Multiplies every GC threshold for the rest of this sniff (neuromodulatory state).
    pub fn with_threshold_scale(mut self, scale: f64) -> Self {
        self.threshold_scale = scale;
        self
    }

    pub fn cycle(&self) -> u32 {
        self.cycle
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    cfg: NetworkConfig,
    gamma: GammaConfig,
    gcs: Vec<GranuleCell>,
    exc: Vec<ExcSynapse>,
    gc_inputs: Vec<Vec<usize>>,
    mc_outputs: Vec<Vec<usize>>,
    inh: Vec<InhSynapse>,
    cohorts: Vec<Cohort>,
}

impl Network {
    /// Builds a network with one immature cohort (cohort 0).
    pub fn build(cfg: NetworkConfig, gamma: GammaConfig) -> Result<Self> {
        cfg.validate(&gamma)?;
        let mut net = Self {
            mc_outputs: vec![Vec::new(); cfg.num_columns],
            cfg,
            gamma,
            gcs: Vec::new(),
            exc: Vec::new(),
            gc_inputs: Vec::new(),
            inh: Vec::new(),
            cohorts: Vec::new(),
        };
        net.grow_cohort()?;
        Ok(net)
    }

    /// Adds a fresh immature cohort. Fails while the newest cohort is still immature.
    pub fn add_cohort(&mut self) -> Result<usize> {
        if let Some(c) = self.cohorts.last() {
            if !c.mature {
                return Err(Error::State(format!(
                    "cohort {} is still immature; train it before adding another",
                    c.id
                )));
            }
        }
        self.grow_cohort()
    }

    fn grow_cohort(&mut self) -> Result<usize> {
        let id = self.cohorts.len();
        let mut rng: SimRng = seed::rng_for(self.cfg.rng_seed, "cohort", id as u64);
        let (d_lo, d_hi) = self.cfg.delays(&self.gamma)?;
        let first_gc = self.gcs.len();
        let threshold = self.cfg.threshold();
        for column in 0..self.cfg.num_columns {
            for _ in 0..self.cfg.gcs_per_cohort {
                let gc = self.gcs.len();
                self.gcs.push(GranuleCell {
                    id: gc,
                    column,
                    cohort: id,
                    base_threshold: threshold,
                    threshold,
                    mature: false,
                });
                let mut inputs = Vec::new();
                for mc in 0..self.cfg.num_columns {
                    if rng.random_bool(self.cfg.mc_to_gc_prob) {
                        let delay = rng.random_range(d_lo..=d_hi);
                        let syn = self.exc.len();
                        self.exc.push(ExcSynapse {
                            pre_mc: mc,
                            post_gc: gc,
                            weight: self.cfg.base_weight,
                            delay,
                        });
                        self.mc_outputs[mc].push(syn);
                        inputs.push(syn);
                    }
                }
                self.gc_inputs.push(inputs);
                self.inh.push(InhSynapse {
                    pre_gc: gc,
                    post_mc: column,
                    blocking_period: 0,
                });
            }
        }
        self.cohorts.push(Cohort {
            id,
            first_gc,
            len: self.gcs.len() - first_gc,
            mature: false,
        });
        Ok(id)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn gamma(&self) -> &GammaConfig {
        &self.gamma
    }

    pub fn num_columns(&self) -> usize {
        self.cfg.num_columns
    }

    pub fn gcs(&self) -> &[GranuleCell] {
        &self.gcs
    }

    pub fn exc_synapses(&self) -> &[ExcSynapse] {
        &self.exc
    }

    /// Inhibitory synapses, indexed by presynaptic GC id.
    pub fn inh_synapses(&self) -> &[InhSynapse] {
        &self.inh
    }

    pub fn gc_inputs(&self, gc: usize) -> &[usize] {
        &self.gc_inputs[gc]
    }

    pub fn cohorts(&self) -> &[Cohort] {
        &self.cohorts
    }

    /// The newest cohort if it is still plastic.
    pub fn plastic_cohort(&self) -> Option<&Cohort> {
        self.cohorts.last().filter(|c| !c.mature)
    }

    pub(crate) fn mature_cohort(&mut self, cohort: usize) {
        let range = self.cohorts[cohort].gc_ids();
        for gc in &mut self.gcs[range] {
            gc.mature = true;
        }
        self.cohorts[cohort].mature = true;
    }

    pub(crate) fn set_weight(&mut self, syn: usize, w: f64) {
        let cap = self.cfg.weight_cap();
        assert!(
            (0.0..=cap + 1e-12).contains(&w),
            "excitatory weight {w} outside [0, {cap}]"
        );
        self.exc[syn].weight = w;
    }

    pub(crate) fn set_blocking_period(&mut self, gc: usize, period: Timestep) {
        assert!(
            period <= self.gamma.permissive_len,
            "blocking period {period} exceeds the permissive epoch"
        );
        self.inh[gc].blocking_period = period;
    }

    pub fn set_threshold(&mut self, gc: usize, threshold: f64) {
        self.gcs[gc].threshold = threshold;
    }

    /// Restores every GC threshold to its unscaled, unprimed value.
    pub fn reset_thresholds(&mut self) {
        for gc in &mut self.gcs {
            gc.threshold = gc.base_threshold;
        }
    }

    pub fn ad_times(&self, input: &LevelVector) -> Result<Vec<Option<Timestep>>> {
        self.check_input(input)?;
        input
            .as_slice()
            .iter()
            .map(|&v| ad_initiation_time(v, &self.gamma))
            .collect()
    }

    fn check_input(&self, input: &LevelVector) -> Result<()> {
        if input.len() != self.cfg.num_columns {
            return Err(Error::input(format!(
                "input has {} levels, network has {} columns",
                input.len(),
                self.cfg.num_columns
            )));
        }
        Ok(())
    }

    /// Simulates one gamma cycle, advancing `state`.
    pub fn run_cycle(
        &self,
        state: &mut SniffState,
        input: &LevelVector,
        mode: Mode,
    ) -> Result<CycleRecord> {
        let ad_times = self.ad_times(input)?;
        if state.gc_v.len() != self.gcs.len() {
            return Err(Error::State(
                "sniff state was created for a different network".into(),
            ));
        }
        Ok(self.cycle_inner(state, ad_times, mode))
    }

    fn cycle_inner(
        &self,
        state: &mut SniffState,
        ad_times: Vec<Option<Timestep>>,
        mode: Mode,
    ) -> CycleRecord {
        let permissive = self.gamma.permissive_len;
        let len = self.gamma.cycle_len();
        let origin = u64::from(state.cycle) * u64::from(len);
        let refractory = u64::from(self.cfg.gc_refractory);
        let integration = self.cfg.gc_integration;

        // Inhibition armed by last cycle's GC spikes.
        let mut armed_gcs = Vec::new();
        for list in &mut state.inh_by_mc {
            list.clear();
        }
        for (gc, p) in state.pending.iter_mut().enumerate() {
            if std::mem::take(p) {
                armed_gcs.push(gc);
                if mode == Mode::Test && self.inh[gc].blocking_period > 0 {
                    state.inh_by_mc[self.inh[gc].post_mc].push(gc);
                }
            }
        }
        state.gc_v.fill(0.0);
        state.gc_v_ts.fill(0);
        state.gc_done.fill(false);
        if matches!(integration, GcIntegration::Window { .. }) {
            state.gc_recent.iter_mut().for_each(Vec::clear);
        }

        let mut mc_spiked: Vec<Option<Timestep>> = vec![None; self.cfg.num_columns];
        let mut gc_spikes = Vec::new();

        for ts in 0..len {
            // GC spikes scheduled by a threshold crossing in the previous step.
            let emitting = std::mem::take(&mut state.emissions[ts as usize]);
            for &gc in &emitting {
                assert!(
                    ts >= permissive,
                    "GC {gc} spiked at ts {ts}, inside the permissive epoch"
                );
                gc_spikes.push((gc, ts));
                state.pending[gc] = true;
                state.gc_last_spike[gc] = Some(origin + u64::from(ts));
            }
            state.emissions[ts as usize] = emitting;
            state.emissions[ts as usize].clear();

            if ts < permissive {
                for mc in 0..self.cfg.num_columns {
                    if mc_spiked[mc].is_some() {
                        continue;
                    }
                    let drive = i32::from(ad_times[mc].is_some_and(|t| ts >= t));
                    let inhibition: i32 = state.inh_by_mc[mc]
                        .iter()
                        .map(|&gc| self.inh[gc].state_at(ts).contribution())
                        .sum();
                    if drive + inhibition > 0 {
                        mc_spiked[mc] = Some(ts);
                        for &syn in &self.mc_outputs[mc] {
                            let at = ts + self.exc[syn].delay;
                            debug_assert!(at + 1 < len);
                            state.arrivals[at as usize].push(syn);
                        }
                    }
                }
            }

            let arriving = std::mem::take(&mut state.arrivals[ts as usize]);
            let now = origin + u64::from(ts);
            for &syn in &arriving {
                let gc = self.exc[syn].post_gc;
                if state.gc_done[gc] {
                    continue;
                }
                if state.gc_last_spike[gc].is_some_and(|t| now <= t + refractory) {
                    continue;
                }
                let w = self.exc[syn].weight;
                match integration {
                    GcIntegration::Accumulate => state.gc_v[gc] += w,
                    GcIntegration::Leaky { decay } => {
                        let age = (ts - state.gc_v_ts[gc]) as i32;
                        state.gc_v[gc] = state.gc_v[gc] * decay.powi(age) + w;
                        state.gc_v_ts[gc] = ts;
                    }
                    GcIntegration::Window { .. } => {
                        let start = integration.window_start(ts);
                        let recent = &mut state.gc_recent[gc];
                        recent.retain(|&(t, _)| t >= start);
                        recent.push((ts, w));
                        state.gc_v[gc] = recent.iter().map(|&(_, x)| x).sum();
                    }
                }
                let g = &self.gcs[gc];
                if state.gc_v[gc] >= g.threshold * state.threshold_scale - 1e-9 * self.cfg.base_weight {
                    state.gc_v[gc] = 0.0;
                    state.gc_recent[gc].clear();
                    state.gc_done[gc] = true;
                    state.emissions[ts as usize + 1].push(gc);
                }
            }
            state.arrivals[ts as usize] = arriving;
            state.arrivals[ts as usize].clear();
        }

        state.cycle += 1;
        let spikes = mc_spiked
            .iter()
            .enumerate()
            .filter_map(|(mc, t)| t.map(|ts| Spike { mc, ts }))
            .collect();
        CycleRecord {
            mc_spikes: SpikeSet { spikes },
            ad_times,
            gc_spikes,
            armed_gcs,
        }
    }

    /// Presents `input` for one sniff from a fresh transient state and records every cycle.
    pub fn run_sniff_traced(&self, input: &LevelVector, mode: Mode) -> Result<Vec<CycleRecord>> {
        self.run_sniff_scaled(input, mode, 1.0)
    }

    /// Like [`Network::run_sniff_traced`] with every GC threshold multiplied by `scale`.
    pub fn run_sniff_scaled(
        &self,
        input: &LevelVector,
        mode: Mode,
        scale: f64,
    ) -> Result<Vec<CycleRecord>> {
        if !(scale > 0.0) {
            return Err(Error::config("threshold scale must be positive"));
        }
        let ad_times = self.ad_times(input)?;
        let mut state = SniffState::new(self).with_threshold_scale(scale);
        Ok((0..self.gamma.cycles_per_sniff)
            .map(|_| self.cycle_inner(&mut state, ad_times.clone(), mode))
            .collect())
    }

    /// Presents `input` for one sniff; plasticity is not applied.
    pub fn run_sniff(&self, input: &LevelVector, mode: Mode) -> Result<SniffResponse> {
        Ok(SniffResponse::from_records(self.run_sniff_traced(input, mode)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(cols: usize, gcs: usize, p: f64, seed: u64) -> Network {
        Network::build(
            NetworkConfig {
                num_columns: cols,
                gcs_per_cohort: gcs,
                mc_to_gc_prob: p,
                rng_seed: seed,
                ..NetworkConfig::default()
            },
            GammaConfig::default(),
        )
        .unwrap()
    }

    fn levels(v: &[u8]) -> LevelVector {
        LevelVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn default_network_sizes() {
        let net = Network::build(NetworkConfig::default(), GammaConfig::default()).unwrap();
        assert_eq!(net.num_columns(), 72);
        assert_eq!(net.gcs().len(), 360);
        assert_eq!(net.inh_synapses().len(), 360);
        assert!(net.inh_synapses().iter().all(|s| s.blocking_period() == 0));
        for s in net.inh_synapses() {
            assert_eq!(net.gcs()[s.pre_gc].column, s.post_mc);
        }
        assert!(net.exc_synapses().iter().all(|s| (16..=23).contains(&s.delay())));
    }

    #[test]
    fn full_connectivity_gives_every_pair() {
        let net = small(2, 1, 1.0, 1);
        assert_eq!(net.exc_synapses().len(), 4);
    }

    #[test]
    fn same_seed_same_structure() {
        let a = small(72, 5, 0.2, 42);
        let b = small(72, 5, 0.2, 42);
        assert_eq!(a, b);
        assert_ne!(a, small(72, 5, 0.2, 43));
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = |cfg: NetworkConfig| Network::build(cfg, GammaConfig::default()).is_err();
        assert!(bad(NetworkConfig { mc_to_gc_prob: 0.0, ..Default::default() }));
        assert!(bad(NetworkConfig { weight_cap_factor: 0.9, ..Default::default() }));
        assert!(bad(NetworkConfig { delay_range: Some((10, 20)), ..Default::default() }));
        assert!(bad(NetworkConfig { delay_range: Some((16, 24)), ..Default::default() }));
        let g = GammaConfig { permissive_len: 20, inhibitory_len: 20, cycles_per_sniff: 5 };
        assert!(Network::build(NetworkConfig::default(), g).is_err());
        let ok = NetworkConfig { delay_range: Some((19, 19)), ..Default::default() };
        assert!(Network::build(ok, g).is_ok());
    }

    #[test]
    fn ad_mapping_is_strictly_decreasing() {
        let g = GammaConfig::default();
        assert_eq!(ad_initiation_time(0, &g).unwrap(), None);
        assert_eq!(ad_initiation_time(15, &g).unwrap(), Some(1));
        assert_eq!(ad_initiation_time(1, &g).unwrap(), Some(15));
        let times: Vec<_> = (1..=15).map(|v| ad_initiation_time(v, &g).unwrap().unwrap()).collect();
        assert!(times.windows(2).all(|w| w[0] > w[1]));
        assert!(ad_initiation_time(16, &g).is_err());
    }

    #[test]
    fn inhibitory_state_machine() {
        let s = InhSynapse { pre_gc: 0, post_mc: 0, blocking_period: 3 };
        let states: Vec<_> = (0..6).map(|t| s.state_at(t)).collect();
        use InhState::*;
        assert_eq!(states, vec![Blocking, Blocking, Blocking, Release, Inactive, Inactive]);
        let z = InhSynapse { pre_gc: 0, post_mc: 0, blocking_period: 0 };
        assert!((0..16).all(|t| z.state_at(t) == Inactive));
    }

    #[test]
    fn silent_input_gives_silent_sniff() {
        let net = small(72, 5, 0.2, 3);
        let r = net.run_sniff(&LevelVector::zeros(72), Mode::Test).unwrap();
        assert_eq!(r.cycles.len(), 5);
        assert!(r.cycles.iter().all(SpikeSet::is_empty));
    }

    #[test]
    fn naive_network_is_stationary_with_phase_code() {
        let net = small(72, 5, 0.2, 9);
        let input = LevelVector::new((0..72).map(|i| (i * 7 % 16) as u8).collect()).unwrap();
        let r = net.run_sniff(&input, Mode::Test).unwrap();
        for c in &r.cycles {
            assert_eq!(c, &r.cycles[0]);
        }
        for s in r.cycles[0].iter() {
            assert_eq!(s.ts, 16 - u32::from(input.get(s.mc)));
        }
    }

    #[test]
    fn single_input_never_reaches_threshold() {
        // One GC, one synapse of weight we against a 6we threshold: brute-force trace.
        let net = small(2, 1, 1.0, 5);
        let input = levels(&[15, 0]);
        let trace = net.run_sniff_traced(&input, Mode::Test).unwrap();
        assert!(trace.iter().all(|c| c.gc_spikes.is_empty()));
    }

    #[test]
    fn gc_spikes_one_step_after_crossing_in_inhibitory_epoch() {
        // Six MCs fully connected to GC(s) with threshold 6we: the sixth arrival crosses.
        let net = Network::build(
            NetworkConfig {
                num_columns: 6,
                gcs_per_cohort: 1,
                mc_to_gc_prob: 1.0,
                gc_integration: GcIntegration::Accumulate,
                ..NetworkConfig::default()
            },
            GammaConfig::default(),
        )
        .unwrap();
        let input = levels(&[15, 14, 13, 12, 11, 10]);
        let trace = net.run_sniff_traced(&input, Mode::Test).unwrap();
        let ad = net.ad_times(&input).unwrap();
        for (gc, ts) in &trace[0].gc_spikes {
            let last_arrival = net
                .gc_inputs(*gc)
                .iter()
                .map(|&s| ad[net.exc_synapses()[s].pre_mc].unwrap() + net.exc_synapses()[s].delay())
                .max()
                .unwrap();
            assert_eq!(*ts, last_arrival + 1);
            assert!(*ts >= 16);
        }
        assert_eq!(trace[0].gc_spikes.len(), 6);
        // each GC spikes at most once per cycle
        for c in &trace {
            let mut ids: Vec<_> = c.gc_spikes.iter().map(|g| g.0).collect();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), c.gc_spikes.len());
        }
    }

    #[test]
    fn blocking_delays_and_release_rebounds() {
        // Column 0 has one GC whose learned block ends at ts 9.
        let mut net = Network::build(
            NetworkConfig {
                num_columns: 6,
                gcs_per_cohort: 1,
                mc_to_gc_prob: 1.0,
                ..NetworkConfig::default()
            },
            GammaConfig::default(),
        )
        .unwrap();
        net.set_blocking_period(0, 9);
        // MC 0 has AD at ts 3 (level 13): held until release at 9.
        let input = levels(&[13, 14, 13, 12, 11, 10]);
        let r = net.run_sniff(&input, Mode::Test).unwrap();
        assert_eq!(r.cycles[0].ts_of(0), Some(3));
        assert_eq!(r.cycles[1].ts_of(0), Some(9));
        // MC 0 silent: the release alone evokes a rebound spike.
        let input = levels(&[0, 15, 14, 13, 12, 11]);
        let mut state = SniffState::new(&net);
        state.pending[0] = true;
        let c = net.run_cycle(&mut state, &input, Mode::Test).unwrap();
        assert_eq!(c.armed_gcs, vec![0]);
        assert_eq!(c.mc_spikes.ts_of(0), Some(9));
        // Full-epoch block silences the MC; the release lands in the inhibitory epoch.
        net.set_blocking_period(0, 16);
        let mut state = SniffState::new(&net);
        state.pending[0] = true;
        let c = net.run_cycle(&mut state, &levels(&[13, 14, 13, 12, 11, 10]), Mode::Test).unwrap();
        assert_eq!(c.mc_spikes.ts_of(0), None);
        net.set_blocking_period(0, 9);
        // Train mode ignores inhibition entirely.
        let input = levels(&[13, 14, 13, 12, 11, 10]);
        let r = net.run_sniff(&input, Mode::Train).unwrap();
        assert!(r.cycles.iter().all(|c| c.ts_of(0) == Some(3)));
    }
}
