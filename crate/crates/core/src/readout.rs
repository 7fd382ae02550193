//! Similarity measures and classification rules.
//!
//! Two readouts: Jaccard similarity between binned spike sets (the network's own
//! classifier), and the rank-vector / Manhattan nearest-neighbour pipeline shared
//! with the classical baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{GammaConfig, SniffResponse, SpikeSet};
use crate::plasticity::OdorLibrary;

pub const DEFAULT_THRESHOLD: f64 = 0.75;

/// `|a ∩ b| / |a ∪ b|` over (MC, timestep) spikes; two empty sets are identical.
pub fn jaccard(a: &SpikeSet, b: &SpikeSet) -> f64 {
    let (xs, ys) = (a.as_slice(), b.as_slice());
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < xs.len() && j < ys.len() {
        match xs[i].mc.cmp(&ys[j].mc) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += usize::from(xs[i].ts == ys[j].ts);
                i += 1;
                j += 1;
            }
        }
    }
    let union = xs.len() + ys.len() - common;
    if union == 0 {
        1.0
    } else {
        common as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    /// `None` means the sample was classified as unknown.
    pub label: Option<String>,
    pub best_similarity: f64,
    /// Per odor, in training order: similarity to the learned pattern per cycle.
    pub per_cycle: Vec<(String, Vec<f64>)>,
}

impl Classification {
    pub fn is(&self, label: &str) -> bool {
        self.label.as_deref() == Some(label)
    }
}

/// Thresholded nearest-neighbour choice over precomputed scores.
///
/// `scores` holds, per odor in training order, the gating similarity (compared
/// against `threshold`) and the ranking similarity. Ties keep the earlier odor.
pub fn pick_label<'a>(
    scores: impl IntoIterator<Item = (&'a str, f64, f64)>,
    threshold: f64,
) -> (Option<String>, f64) {
    let mut best: Option<(&str, f64)> = None;
    let mut best_gate = 0.0f64;
    for (label, gate, rank) in scores {
        best_gate = best_gate.max(gate);
        if gate > threshold && best.is_none_or(|(_, r)| rank > r) {
            best = Some((label, rank));
        }
    }
    match best {
        Some((l, r)) => (Some(l.to_string()), r),
        None => (None, best_gate),
    }
}

/// Classifies a sniff against every learned pattern.
///
/// Odors whose final-cycle similarity exceeds `threshold` are candidates; the
/// candidate with the highest similarity in any cycle wins.
pub fn classify_sniff(
    resp: &SniffResponse,
    library: &OdorLibrary,
    threshold: f64,
) -> Result<Classification> {
    if library.is_empty() {
        return Err(Error::usage("cannot classify against an empty odor library"));
    }
    let per_cycle: Vec<(String, Vec<f64>)> = library
        .records()
        .iter()
        .map(|r| {
            let sims = resp
                .cycles
                .iter()
                .map(|c| jaccard(c, &r.learned_pattern))
                .collect();
            (r.label.clone(), sims)
        })
        .collect();
    let (label, best_similarity) = pick_label(
        per_cycle.iter().map(|(l, s)| {
            let last = *s.last().unwrap_or(&0.0);
            let max = s.iter().cloned().fold(0.0, f64::max);
            (l.as_str(), last, max)
        }),
        threshold,
    );
    Ok(Classification {
        label,
        best_similarity,
        per_cycle,
    })
}

/// Per-MC latency rank (`permissive_len - ts`, 0 when silent), normalized to unit sum.
pub fn rank_vector(spikes: &SpikeSet, num_columns: usize, gamma: &GammaConfig) -> Vec<f64> {
    let mut v = vec![0.0; num_columns];
    for s in spikes.iter() {
        v[s.mc] = f64::from(gamma.permissive_len.saturating_sub(s.ts));
    }
    normalize_unit_sum(&mut v);
    v
}

/// Scales to unit sum; all-zero (or non-positive sum) vectors become all-zero.
pub fn normalize_unit_sum(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
}

pub fn manhattan_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::input(format!(
            "vector dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    Ok(1.0 / (1.0 + d))
}

/// Nearest training vector by Manhattan distance, accepted only above `threshold`.
pub fn manhattan_classify(
    test: &[f64],
    train: &[(String, Vec<f64>)],
    threshold: f64,
) -> Result<Option<String>> {
    let mut best: Option<(&str, f64)> = None;
    for (label, v) in train {
        let s = manhattan_similarity(test, v)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((label, s));
        }
    }
    Ok(best
        .filter(|&(_, s)| s > threshold)
        .map(|(l, _)| l.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Spike;
    use crate::plasticity::OdorRecord;
    use proptest::prelude::*;

    fn set(pairs: &[(usize, u32)]) -> SpikeSet {
        SpikeSet::from_spikes(pairs.iter().map(|&(mc, ts)| Spike { mc, ts }).collect()).unwrap()
    }

    fn lib(patterns: &[(&str, SpikeSet)]) -> OdorLibrary {
        let mut l = OdorLibrary::new();
        for (i, (name, p)) in patterns.iter().enumerate() {
            l.push(OdorRecord {
                label: name.to_string(),
                cohort: i,
                learned_pattern: p.clone(),
                tuned_gcs: vec![],
                tuning_trace: vec![],
            })
            .unwrap();
        }
        l
    }

    #[test]
    fn jaccard_examples() {
        let a = set(&[(1, 3), (2, 5)]);
        assert_eq!(jaccard(&a, &a), 1.0);
        assert_eq!(jaccard(&a, &set(&[(3, 3), (4, 5)])), 0.0);
        assert!((jaccard(&a, &set(&[(1, 3), (2, 6)])) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard(&SpikeSet::empty(), &SpikeSet::empty()), 1.0);
    }

    #[test]
    fn self_match_classifies_with_similarity_one() {
        let p = set(&[(0, 1), (5, 4), (9, 12)]);
        let l = lib(&[("x", set(&[(1, 1)])), ("tol", p.clone())]);
        let resp = SniffResponse { cycles: vec![p; 5] };
        let c = classify_sniff(&resp, &l, DEFAULT_THRESHOLD).unwrap();
        assert!(c.is("tol"));
        assert_eq!(c.best_similarity, 1.0);
    }

    #[test]
    fn below_threshold_is_unknown_and_empty_library_errors() {
        let l = lib(&[("a", set(&[(0, 1), (1, 1)]))]);
        let resp = SniffResponse { cycles: vec![set(&[(0, 1), (1, 2)]); 5] };
        assert_eq!(classify_sniff(&resp, &l, 0.75).unwrap().label, None);
        assert!(classify_sniff(&resp, &OdorLibrary::new(), 0.75).is_err());
    }

    #[test]
    fn candidate_with_higher_cycle_max_wins() {
        // Ten-spike patterns; build responses whose similarity is known by construction.
        let base: Vec<(usize, u32)> = (0..10).map(|i| (i, 5)).collect();
        let a = set(&base);
        let mut b_pairs = base.clone();
        b_pairs[9] = (9, 6);
        let b = set(&b_pairs);
        // final cycle equals a except MC 9 silent: J(a)=9/10, J(b)=9/10
        let last = set(&base[..9]);
        // an earlier cycle equal to b: J(b)=1.0, J(a)=9/11
        let resp = SniffResponse {
            cycles: vec![b.clone(), last.clone(), last.clone(), last.clone(), last],
        };
        let c = classify_sniff(&resp, &lib(&[("a", a.clone()), ("b", b.clone())]), 0.75).unwrap();
        assert!(c.is("b"));
        // brute-force check of the rule
        let sims = &c.per_cycle;
        assert!((sims[0].1[4] - 0.9).abs() < 1e-12 && (sims[1].1[4] - 0.9).abs() < 1e-12);
        assert!((sims[0].1[0] - 9.0 / 11.0).abs() < 1e-12);
        // with identical maxima the earlier-trained odor wins
        let resp = SniffResponse { cycles: vec![set(&base[..9]); 5] };
        let c = classify_sniff(&resp, &lib(&[("a", a), ("b", b)]), 0.75).unwrap();
        assert!(c.is("a"));
    }

    #[test]
    fn rank_vector_examples() {
        let g = GammaConfig::default();
        let v = rank_vector(&set(&[(2, 1)]), 4, &g);
        assert_eq!(v, vec![0.0, 0.0, 1.0, 0.0]);
        let v = rank_vector(&set(&[(0, 1), (1, 15)]), 2, &g);
        assert_eq!(v, vec![15.0 / 16.0, 1.0 / 16.0]);
        assert_eq!(rank_vector(&SpikeSet::empty(), 3, &g), vec![0.0; 3]);
    }

    #[test]
    fn manhattan_examples() {
        let train = vec![
            ("a".to_string(), vec![1.0, 0.0]),
            ("b".to_string(), vec![0.0, 1.0]),
        ];
        assert_eq!(manhattan_classify(&[1.0, 0.0], &train, 0.75).unwrap().as_deref(), Some("a"));
        assert!((manhattan_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let t = vec![("b".to_string(), vec![0.0, 1.0])];
        assert_eq!(manhattan_classify(&[1.0, 0.0], &t, 0.75).unwrap(), None);
        assert!(manhattan_classify(&[1.0], &train, 0.75).is_err());
        // two entries above threshold: the nearer wins (d = 0.1 vs 0.2)
        let train = vec![
            ("far".to_string(), vec![0.6, 0.4]),
            ("near".to_string(), vec![0.55, 0.45]),
        ];
        let test = [0.5, 0.5];
        let sims: Vec<f64> = train.iter().map(|(_, v)| manhattan_similarity(&test, v).unwrap()).collect();
        assert!(sims.iter().all(|&s| s > 0.75));
        assert_eq!(manhattan_classify(&test, &train, 0.75).unwrap().as_deref(), Some("near"));
    }

    fn arb_set() -> impl Strategy<Value = SpikeSet> {
        proptest::collection::btree_map(0usize..20, 1u32..16, 0..12).prop_map(|m| {
            SpikeSet::from_spikes(m.into_iter().map(|(mc, ts)| Spike { mc, ts }).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn jaccard_symmetric_bounded_identity(a in arb_set(), b in arb_set()) {
            let ab = jaccard(&a, &b);
            prop_assert_eq!(ab, jaccard(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, a == b);
        }

        #[test]
        fn manhattan_similarity_in_unit_interval(
            a in proptest::collection::vec(0.0f64..1.0, 6),
            b in proptest::collection::vec(0.0f64..1.0, 6),
        ) {
            let s = manhattan_similarity(&a, &b).unwrap();
            prop_assert!(s > 0.0 && s <= 1.0);
            prop_assert_eq!(s == 1.0, a == b);
        }

        #[test]
        fn classification_ignores_spike_insertion_order(
            a in arb_set(),
            perm_seed in any::<u64>(),
        ) {
            let mut shuffled: Vec<Spike> = a.as_slice().to_vec();
            let n = shuffled.len();
            if n > 1 {
                let k = (perm_seed as usize) % n;
                shuffled.rotate_left(k);
                shuffled.reverse();
            }
            let b = SpikeSet::from_spikes(shuffled).unwrap();
            let l = lib(&[("a", a.clone())]);
            let ra = classify_sniff(&SniffResponse { cycles: vec![a; 5] }, &l, 0.75).unwrap();
            let rb = classify_sniff(&SniffResponse { cycles: vec![b; 5] }, &l, 0.75).unwrap();
            prop_assert_eq!(ra, rb);
        }
    }
}
