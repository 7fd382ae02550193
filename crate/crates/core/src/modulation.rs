//! Neuromodulation as a threshold trajectory over successive sniffs, and
//! cortical priming of odor-tuned granule cells.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::encoding::LevelVector;
use crate::error::{Error, Result};
use crate::network::{Mode, Network, SniffResponse};
use crate::plasticity::OdorLibrary;
use crate::readout::{jaccard, pick_label, Classification};
use crate::seed::SimRng;

pub const SNIFFS_PER_SCHEDULE: usize = 5;

/// Per-sniff GC threshold multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct NeuromodSchedule {
    scale_factors: [f64; SNIFFS_PER_SCHEDULE],
}

impl NeuromodSchedule {
    pub fn new(factors: &[f64]) -> Result<Self> {
        let scale_factors: [f64; SNIFFS_PER_SCHEDULE] = factors.try_into().map_err(|_| {
            Error::config(format!(
                "a neuromodulation schedule needs {SNIFFS_PER_SCHEDULE} factors, got {}",
                factors.len()
            ))
        })?;
        if scale_factors[0] != 1.0 {
            return Err(Error::config("schedule must start at 1.0"));
        }
        if scale_factors.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::config("schedule factors must lie in (0, 1]"));
        }
        if scale_factors.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::config("schedule factors must be nonincreasing"));
        }
        Ok(Self { scale_factors })
    }

    /// A schedule that never changes the thresholds.
    pub fn constant() -> Self {
        Self {
            scale_factors: [1.0; SNIFFS_PER_SCHEDULE],
        }
    }

    pub fn factors(&self) -> &[f64] {
        &self.scale_factors
    }
}

impl Default for NeuromodSchedule {
    fn default() -> Self {
        Self {
            scale_factors: [1.0, 0.9, 0.8, 0.7, 0.6],
        }
    }
}

impl TryFrom<Vec<f64>> for NeuromodSchedule {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(&v)
    }
}

impl From<NeuromodSchedule> for Vec<f64> {
    fn from(s: NeuromodSchedule) -> Self {
        s.scale_factors.to_vec()
    }
}

/// Outcome of a scheduled identification: the classification plus each sniff's response.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledIdentification {
    /// `per_cycle` holds, per odor, the last-cycle similarity of each sniff.
    pub classification: Classification,
    pub sniffs: Vec<SniffResponse>,
}

/// Presents `sample` once per schedule entry and classifies on the best last-cycle similarity.
///
/// Thresholds are scaled only inside each simulated sniff, so `net` is untouched.
pub fn neuromodulated_identify(
    net: &Network,
    sample: &LevelVector,
    library: &OdorLibrary,
    sched: &NeuromodSchedule,
    threshold: f64,
) -> Result<ScheduledIdentification> {
    if library.is_empty() {
        return Err(Error::usage("cannot classify against an empty odor library"));
    }
    let sniffs = sched
        .factors()
        .iter()
        .map(|&f| {
            net.run_sniff_scaled(sample, Mode::Test, f)
                .map(SniffResponse::from_records)
        })
        .collect::<Result<Vec<_>>>()?;
    let per_cycle: Vec<(String, Vec<f64>)> = library
        .records()
        .iter()
        .map(|r| {
            let sims = sniffs
                .iter()
                .map(|s| jaccard(s.last(), &r.learned_pattern))
                .collect();
            (r.label.clone(), sims)
        })
        .collect();
    let (label, best_similarity) = pick_label(
        per_cycle.iter().map(|(l, s)| {
            let best = s.iter().cloned().fold(0.0, f64::max);
            (l.as_str(), best, best)
        }),
        threshold,
    );
    Ok(ScheduledIdentification {
        classification: Classification {
            label,
            best_similarity,
            per_cycle,
        },
        sniffs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimingSpec {
    pub target_label: String,
    pub fraction: f64,
    /// Threshold given to primed GCs, in units of the base weight.
    pub primed_threshold_factor: f64,
}

impl PrimingSpec {
    pub fn new(target_label: impl Into<String>, fraction: f64) -> Self {
        Self {
            target_label: target_label.into(),
            fraction,
            primed_threshold_factor: 2.0,
        }
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::config("priming fraction must lie in [0, 1]"));
        }
        let cfg = net.config();
        if !(self.primed_threshold_factor > 0.0
            && self.primed_threshold_factor < cfg.gc_threshold_factor)
        {
            return Err(Error::config(
                "primed threshold must be positive and below the default GC threshold",
            ));
        }
        Ok(())
    }
}

/// Lowers the threshold of a random `fraction` of the target odor's tuned GCs.
///
/// Returns the primed GC ids in ascending order.
pub fn prime_gcs(
    net: &mut Network,
    library: &OdorLibrary,
    spec: &PrimingSpec,
    rng: &mut SimRng,
) -> Result<Vec<usize>> {
    spec.validate(net)?;
    let record = library
        .get(&spec.target_label)
        .ok_or_else(|| Error::usage(format!("unknown odor '{}'", spec.target_label)))?;
    let tuned = &record.tuned_gcs;
    let k = (spec.fraction * tuned.len() as f64).round() as usize;
    let mut chosen: Vec<usize> = sample(rng, tuned.len(), k.min(tuned.len()))
        .into_iter()
        .map(|i| tuned[i])
        .collect();
    chosen.sort_unstable();
    let threshold = spec.primed_threshold_factor * net.config().base_weight;
    for &gc in &chosen {
        net.set_threshold(gc, threshold);
    }
    Ok(chosen)
}

/// Restores every GC threshold to its unscaled, unprimed value.
pub fn clear_priming(net: &mut Network) {
    net.reset_thresholds();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{occlude_with, sparsify};
    use crate::network::{GammaConfig, NetworkConfig};
    use crate::plasticity::{train_sequence, PlasticityConfig};
    use crate::readout::classify_sniff;
    use crate::seed::rng_from;
    use rand::Rng;

    fn odor(seed: u64) -> LevelVector {
        let mut r = rng_from(seed);
        sparsify(&LevelVector::new((0..72).map(|_| r.random_range(0..16)).collect()).unwrap())
    }

    fn trained(n: usize) -> (Network, OdorLibrary, Vec<LevelVector>) {
        let mut net = Network::build(NetworkConfig::default(), GammaConfig::default()).unwrap();
        let mut lib = OdorLibrary::new();
        let odors: Vec<_> = (0..n).map(|i| odor(40 + i as u64)).collect();
        let named: Vec<_> = odors.iter().enumerate().map(|(i, o)| (format!("o{i}"), o.clone())).collect();
        train_sequence(
            &mut net,
            &mut lib,
            named.iter().map(|(l, o)| (l.as_str(), o)),
            &PlasticityConfig::default(),
            &mut rng_from(3),
        )
        .unwrap();
        (net, lib, odors)
    }

    #[test]
    fn schedule_validation() {
        assert!(NeuromodSchedule::new(&[1.0, 0.9, 0.8, 0.7, 0.6]).is_ok());
        assert!(NeuromodSchedule::new(&[0.9, 0.9, 0.8, 0.7, 0.6]).is_err());
        assert!(NeuromodSchedule::new(&[1.0, 0.9, 0.95, 0.7, 0.6]).is_err());
        assert!(NeuromodSchedule::new(&[1.0, 0.9, 0.8, 0.7]).is_err());
        assert!(NeuromodSchedule::new(&[1.0, 0.9, 0.8, 0.7, 0.0]).is_err());
        let s: NeuromodSchedule = toml::from_str::<std::collections::BTreeMap<String, NeuromodSchedule>>(
            "s = [1.0, 1.0, 0.5, 0.5, 0.5]",
        )
        .unwrap()
        .remove("s")
        .unwrap();
        assert_eq!(s.factors(), &[1.0, 1.0, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn constant_schedule_matches_single_sniff() {
        let (net, lib, odors) = trained(2);
        for o in &odors {
            let single = classify_sniff(&net.run_sniff(o, Mode::Test).unwrap(), &lib, 0.75).unwrap();
            let sched =
                neuromodulated_identify(&net, o, &lib, &NeuromodSchedule::constant(), 0.75).unwrap();
            assert_eq!(single.label, sched.classification.label);
        }
    }

    #[test]
    fn identify_leaves_thresholds_untouched() {
        let (net, lib, odors) = trained(1);
        let before: Vec<f64> = net.gcs().iter().map(|g| g.threshold).collect();
        let (x, _) = occlude_with(&odors[0], 0.8, &mut rng_from(1));
        neuromodulated_identify(&net, &x, &lib, &NeuromodSchedule::default(), 0.75).unwrap();
        let after: Vec<f64> = net.gcs().iter().map(|g| g.threshold).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn lower_thresholds_recruit_more_gcs() {
        let (net, _, odors) = trained(1);
        let (x, _) = occlude_with(&odors[0], 0.8, &mut rng_from(2));
        let count = |s| -> usize {
            net.run_sniff_scaled(&x, Mode::Test, s).unwrap()[0].gc_spikes.len()
        };
        assert!(count(0.6) >= count(1.0));
    }

    #[test]
    fn priming_fractions_and_clearing() {
        let (mut net, lib, _) = trained(1);
        let before: Vec<f64> = net.gcs().iter().map(|g| g.threshold).collect();
        let tuned = lib.get("o0").unwrap().tuned_gcs.clone();

        let none = prime_gcs(&mut net, &lib, &PrimingSpec::new("o0", 0.0), &mut rng_from(9)).unwrap();
        assert!(none.is_empty());
        assert_eq!(before, net.gcs().iter().map(|g| g.threshold).collect::<Vec<_>>());

        let all = prime_gcs(&mut net, &lib, &PrimingSpec::new("o0", 1.0), &mut rng_from(9)).unwrap();
        assert_eq!(all, tuned);
        assert!(all.iter().all(|&g| net.gcs()[g].threshold == 2.0));
        clear_priming(&mut net);
        assert_eq!(before, net.gcs().iter().map(|g| g.threshold).collect::<Vec<_>>());
        clear_priming(&mut net);
        assert_eq!(before, net.gcs().iter().map(|g| g.threshold).collect::<Vec<_>>());

        let half = PrimingSpec::new("o0", 0.5);
        let a = prime_gcs(&mut net, &lib, &half, &mut rng_from(4)).unwrap();
        clear_priming(&mut net);
        let b = prime_gcs(&mut net, &lib, &half, &mut rng_from(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), (tuned.len() as f64 * 0.5).round() as usize);
    }

    #[test]
    fn priming_errors() {
        let (mut net, lib, _) = trained(1);
        let r = prime_gcs(&mut net, &lib, &PrimingSpec::new("nope", 0.5), &mut rng_from(0));
        assert!(matches!(r, Err(Error::Usage(_))));
        let r = prime_gcs(&mut net, &lib, &PrimingSpec::new("o0", 1.5), &mut rng_from(0));
        assert!(matches!(r, Err(Error::Config(_))));
        let mut spec = PrimingSpec::new("o0", 0.5);
        spec.primed_threshold_factor = 6.0;
        assert!(matches!(prime_gcs(&mut net, &lib, &spec, &mut rng_from(0)), Err(Error::Config(_))));
    }
}
