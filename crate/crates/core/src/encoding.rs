//! Sensor calibration, 16-level discretization, 50% sparsification and
//! impulse-noise occlusion.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{rng_from, SimRng};

/// Number of discrete activation levels a sensor can take.
pub const NUM_LEVELS: u8 = 16;

/// Highest activation level.
pub const MAX_LEVEL: u8 = NUM_LEVELS - 1;

/// Integer sensor activation vector, one level (0..=15) per column.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LevelVector(Vec<u8>);

impl LevelVector {
    pub fn new(levels: Vec<u8>) -> Result<Self> {
        if let Some((i, v)) = levels.iter().enumerate().find(|(_, &v)| v > MAX_LEVEL) {
            return Err(Error::input(format!(
                "level {v} at index {i} exceeds {MAX_LEVEL}"
            )));
        }
        Ok(Self(levels))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }

    pub fn count_nonzero(&self) -> usize {
        self.0.iter().filter(|&&v| v > 0).count()
    }

    /// Levels as reals, for the classical baselines.
    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }
}

/// Per-sensor raw response range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorCalibration {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Width assigned to sensors whose observed range is degenerate.
pub const DEGENERATE_SPREAD: f64 = 1.0;

impl SensorCalibration {
    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }
}

/// Per-sensor min/max over every row of every recording.
pub fn calibrate<'a, I>(rows: I) -> Result<SensorCalibration>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut min: Vec<f64> = Vec::new();
    let mut max: Vec<f64> = Vec::new();
    for row in rows {
        if min.is_empty() {
            min = row.to_vec();
            max = row.to_vec();
            continue;
        }
        if row.len() != min.len() {
            return Err(Error::input(format!(
                "row has {} sensors, expected {}",
                row.len(),
                min.len()
            )));
        }
        for (j, &x) in row.iter().enumerate() {
            min[j] = min[j].min(x);
            max[j] = max[j].max(x);
        }
    }
    if min.is_empty() {
        return Err(Error::input("calibration needs at least one sample"));
    }
    for (lo, hi) in min.iter().zip(max.iter_mut()) {
        if *hi <= *lo {
            *hi = *lo + DEGENERATE_SPREAD;
        }
    }
    Ok(SensorCalibration { min, max })
}

/// Maps raw readings onto levels 0..=15 using the calibration range.
pub fn discretize(raw: &[f64], cal: &SensorCalibration) -> Result<LevelVector> {
    if raw.len() != cal.len() {
        return Err(Error::input(format!(
            "raw vector has {} sensors, calibration has {}",
            raw.len(),
            cal.len()
        )));
    }
    let levels = raw
        .iter()
        .zip(cal.min.iter().zip(&cal.max))
        .map(|(&x, (&lo, &hi))| {
            let scaled = ((x - lo) / (hi - lo) * f64::from(NUM_LEVELS)).floor();
            scaled.clamp(0.0, f64::from(MAX_LEVEL)) as u8
        })
        .collect();
    Ok(LevelVector(levels))
}

/// Zeroes the smallest half of the entries. Ties go to the lower index.
pub fn sparsify(levels: &LevelVector) -> LevelVector {
    let n = levels.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (levels.0[i], i));
    let mut out = levels.0.clone();
    for &i in &order[..n / 2] {
        out[i] = 0;
    }
    LevelVector(out)
}

/// Impulse-noise parameters: fraction of replaced elements and the seed that drives them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub p: f64,
    pub rng_seed: u64,
}

impl NoiseSpec {
    pub fn new(p: f64, rng_seed: u64) -> Result<Self> {
        check_fraction(p)?;
        Ok(Self { p, rng_seed })
    }
}

fn check_fraction(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::input(format!("noise fraction {p} outside [0, 1]")));
    }
    Ok(())
}

/// Number of elements replaced at occlusion level `p`: round-half-up of `p * n`.
pub fn occluded_count(p: f64, n: usize) -> usize {
    // The epsilon keeps exact halves like 0.5 * 9 from rounding down through float error.
    ((p * n as f64 + 0.5 + 1e-9).floor() as usize).min(n)
}

/// Replaces `occluded_count(p)` distinct positions with uniform levels 0..=15.
pub fn occlude(levels: &LevelVector, spec: &NoiseSpec) -> Result<LevelVector> {
    check_fraction(spec.p)?;
    let mut rng = rng_from(spec.rng_seed);
    Ok(occlude_with(levels, spec.p, &mut rng).0)
}

/// Occludes using the supplied stream; also returns the replaced positions (sorted).
pub fn occlude_with(levels: &LevelVector, p: f64, rng: &mut SimRng) -> (LevelVector, Vec<usize>) {
    let n = levels.len();
    let k = occluded_count(p, n);
    let mut positions = index::sample(rng, n, k).into_vec();
    positions.sort_unstable();
    let mut out = levels.0.clone();
    for &i in &positions {
        out[i] = rng.random_range(0..=MAX_LEVEL);
    }
    (LevelVector(out), positions)
}
