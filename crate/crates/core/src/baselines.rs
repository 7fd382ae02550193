//! Classical denoisers and the shared nearest-neighbour benchmark.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::encoding::{occlude_with, LevelVector};
use crate::error::{Error, Result};
use crate::network::{Mode, Network};
use crate::parallel::{try_map_indexed, ExecMode};
use crate::plasticity::OdorLibrary;
use crate::readout::{manhattan_classify, normalize_unit_sum, rank_vector, DEFAULT_THRESHOLD};
use crate::seed::rng_for;

use rand::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub mf_window: usize,
    pub tv_lambda: f64,
    pub pca_components: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            mf_window: 5,
            tv_lambda: 0.5,
            pca_components: 5,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.mf_window == 0 || self.mf_window % 2 == 0 {
            return Err(Error::config("median filter window must be odd"));
        }
        if !(self.tv_lambda >= 0.0) {
            return Err(Error::config("TV lambda must be non-negative"));
        }
        if self.pca_components == 0 || self.pca_components > dim {
            return Err(Error::config(format!(
                "PCA components must lie in 1..={dim}"
            )));
        }
        Ok(())
    }
}

/// Sliding median with indices clamped at the edges.
pub fn median_filter(v: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::config(format!("median filter window {window} is not odd")));
    }
    if v.is_empty() {
        return Ok(Vec::new());
    }
    let half = (window / 2) as isize;
    let last = v.len() as isize - 1;
    let mut buf = Vec::with_capacity(window);
    Ok((0..v.len() as isize)
        .map(|i| {
            buf.clear();
            buf.extend((i - half..=i + half).map(|j| v[j.clamp(0, last) as usize]));
            buf.sort_by(f64::total_cmp);
            buf[window / 2]
        })
        .collect())
}

/// Exact minimizer of `0.5 * |u - v|^2 + lambda * sum |u[i+1] - u[i]|`.
///
/// Condat's direct algorithm: a single forward pass that keeps the bounds of
/// the current segment's value and backtracks only to the last jump.
pub fn tv_denoise_1d(v: &[f64], lambda: f64) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    if lambda <= 0.0 {
        out.copy_from_slice(v);
        return out;
    }
    let (mut k, mut k0, mut kminus, mut kplus) = (0usize, 0usize, 0usize, 0usize);
    let (mut umin, mut umax) = (lambda, -lambda);
    let (mut vmin, mut vmax) = (v[0] - lambda, v[0] + lambda);
    let twolambda = 2.0 * lambda;
    loop {
        while k == n - 1 {
            if umin < 0.0 {
                while k0 <= kminus {
                    out[k0] = vmin;
                    k0 += 1;
                }
                k = k0;
                kminus = k0;
                vmin = v[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                while k0 <= kplus {
                    out[k0] = vmax;
                    k0 += 1;
                }
                k = k0;
                kplus = k0;
                vmax = v[k0];
                umax = -lambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                while k0 <= k {
                    out[k0] = vmin;
                    k0 += 1;
                }
                debug_assert!(tv_certificate_holds(v, &out, lambda, 1e-6));
                return out;
            }
        }
        umin += v[k + 1] - vmin;
        if umin < -lambda {
            while k0 <= kminus {
                out[k0] = vmin;
                k0 += 1;
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = v[k0];
            vmax = vmin + twolambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        umax += v[k + 1] - vmax;
        if umax > lambda {
            while k0 <= kplus {
                out[k0] = vmax;
                k0 += 1;
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = v[k0];
            vmin = vmax - twolambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        k += 1;
        if umin >= lambda {
            kminus = k;
            vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
            umin = lambda;
        }
        if umax <= -lambda {
            kplus = k;
            vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
            umax = -lambda;
        }
    }
}

/// Checks the first-order optimality conditions of the TV problem for `u`.
///
/// The dual variable `z[j] = z[j-1] - (v[j] - u[j])` must stay in `[-lambda, lambda]`,
/// end at zero, and equal `lambda * sign(u[j+1] - u[j])` across every jump.
pub fn tv_certificate_holds(v: &[f64], u: &[f64], lambda: f64, tol: f64) -> bool {
    if v.len() != u.len() {
        return false;
    }
    let scale = 1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = tol * scale;
    let mut z = 0.0;
    for j in 0..v.len() {
        z -= v[j] - u[j];
        if j + 1 == v.len() {
            return z.abs() <= tol;
        }
        if z.abs() > lambda + tol {
            return false;
        }
        let jump = u[j + 1] - u[j];
        if jump.abs() > tol && (z - lambda * jump.signum()).abs() > tol {
            return false;
        }
    }
    true
}

/// Principal subspace of a training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    mean: DVector<f64>,
    /// Columns are principal directions with positive variance, strongest first.
    components: DMatrix<f64>,
}

impl Pca {
    /// Fits the top `k` components of `rows` (each of equal length).
    pub fn fit(rows: &[Vec<f64>], k: usize) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if n == 0 || dim == 0 {
            return Err(Error::input("PCA needs at least one non-empty training row"));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::input("PCA training rows differ in length"));
        }
        if k == 0 || k > dim.min(n) {
            return Err(Error::config(format!(
                "PCA components {k} must lie in 1..={}",
                dim.min(n)
            )));
        }
        let x = DMatrix::from_fn(n, dim, |i, j| rows[i][j]);
        let mean = x.row_mean().transpose();
        let centered = DMatrix::from_fn(n, dim, |i, j| x[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / n as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let floor = 1e-12 * eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        let keep: Vec<usize> = order
            .into_iter()
            .take(k)
            .filter(|&i| eig.eigenvalues[i] > floor)
            .collect();
        let components = DMatrix::from_fn(dim, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]);
        Ok(Self { mean, components })
    }

    pub fn num_components(&self) -> usize {
        self.components.ncols()
    }

    /// Projects onto the fitted subspace and reconstructs.
    pub fn denoise(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.mean.len() {
            return Err(Error::input(format!(
                "PCA input has {} elements, expected {}",
                v.len(),
                self.mean.len()
            )));
        }
        let centered = DVector::from_column_slice(v) - &self.mean;
        let coords = self.components.transpose() * centered;
        let recon = &self.components * coords + &self.mean;
        Ok(recon.iter().copied().collect())
    }
}

/// Fits PCA on `train` and reconstructs `test` from the top `k` components.
pub fn pca_fit_denoise(train: &[Vec<f64>], test: &[f64], k: usize) -> Result<Vec<f64>> {
    Pca::fit(train, k)?.denoise(test)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Raw,
    Mf,
    Tvf,
    Pca,
    Epl,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Raw, Method::Mf, Method::Tvf, Method::Pca, Method::Epl];

    pub fn name(self) -> &'static str {
        match self {
            Method::Raw => "raw",
            Method::Mf => "mf",
            Method::Tvf => "tvf",
            Method::Pca => "pca",
            Method::Epl => "epl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One scored trial of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTrial {
    pub method: Method,
    pub odor: String,
    pub p: f64,
    pub seed: u64,
    pub predicted: Option<String>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkReport {
    pub trials: Vec<BenchmarkTrial>,
}

impl BenchmarkReport {
    /// Fraction correct; unknown outcomes count as failures. `None` if the method never ran.
    pub fn accuracy(&self, method: Method) -> Option<f64> {
        let (n, ok) = self
            .trials
            .iter()
            .filter(|t| t.method == method)
            .fold((0usize, 0usize), |(n, ok), t| (n + 1, ok + usize::from(t.correct)));
        (n > 0).then(|| ok as f64 / n as f64)
    }

    /// Comma-separated rows: method, odor, P, seed, predicted, correct.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::input(format!("cannot serialize benchmark: {e}"));
        w.write_record(["method", "odor", "p", "seed", "predicted", "correct"])
            .map_err(io)?;
        for t in &self.trials {
            w.write_record([
                t.method.name(),
                &t.odor,
                &format!("{:.6}", t.p),
                &t.seed.to_string(),
                t.predicted.as_deref().unwrap_or("unknown"),
                if t.correct { "1" } else { "0" },
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub methods: Vec<Method>,
    pub trials_per_odor: usize,
    pub p_range: (f64, f64),
    pub threshold: f64,
    pub baselines: BaselineConfig,
    pub seed: u64,
    pub exec: ExecMode,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            trials_per_odor: 100,
            p_range: (0.2, 0.8),
            threshold: DEFAULT_THRESHOLD,
            baselines: BaselineConfig::default(),
            seed: 0,
            exec: ExecMode::default(),
        }
    }
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    normalize_unit_sum(&mut v);
    v
}

struct Denoisers<'a> {
    net: &'a Network,
    cfg: &'a BaselineConfig,
    pca: Pca,
}

impl Denoisers<'_> {
    fn output(&self, method: Method, levels: &LevelVector) -> Result<Vec<f64>> {
        let x = levels.to_f64();
        Ok(unit(match method {
            Method::Raw => x,
            Method::Mf => median_filter(&x, self.cfg.mf_window)?,
            Method::Tvf => tv_denoise_1d(&x, self.cfg.tv_lambda),
            Method::Pca => self.pca.denoise(&x)?,
            Method::Epl => {
                let resp = self.net.run_sniff(levels, Mode::Test)?;
                rank_vector(resp.last(), self.net.num_columns(), self.net.gamma())
            }
        }))
    }
}

/// Scores each method on occluded copies of every training sample.
///
/// `samples` pairs each odor label with its clean training sample, in the order
/// the odors were learned. Trial `i` of odor `o` draws its noise level and
/// occlusion from its own stream, so results do not depend on execution order.
pub fn run_benchmark(
    net: &Network,
    library: &OdorLibrary,
    samples: &[(String, LevelVector)],
    spec: &BenchmarkSpec,
) -> Result<BenchmarkReport> {
    let (lo, hi) = spec.p_range;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(Error::config("P range must satisfy 0 <= lo <= hi <= 1"));
    }
    if samples.is_empty() {
        return Err(Error::usage("benchmark needs at least one odor"));
    }
    spec.baselines.validate(net.num_columns())?;
    let train_rows: Vec<Vec<f64>> = samples.iter().map(|(_, s)| s.to_f64()).collect();
    let k = spec.baselines.pca_components.min(train_rows.len());
    let d = Denoisers {
        net,
        cfg: &spec.baselines,
        pca: Pca::fit(&train_rows, k)?,
    };
    let references: Vec<Vec<(String, Vec<f64>)>> = spec
        .methods
        .iter()
        .map(|&m| {
            samples
                .iter()
                .map(|(label, s)| {
                    let v = if m == Method::Epl {
                        let rec = library.get(label).ok_or_else(|| {
                            Error::usage(format!("odor '{label}' has not been trained"))
                        })?;
                        unit(rank_vector(&rec.learned_pattern, net.num_columns(), net.gamma()))
                    } else {
                        d.output(m, s)?
                    };
                    Ok((label.clone(), v))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let total = samples.len() * spec.trials_per_odor;
    let per_trial = try_map_indexed(spec.exec, total, |i| -> Result<Vec<BenchmarkTrial>> {
        let odor = i / spec.trials_per_odor;
        let seed = crate::seed::derive(spec.seed, "benchmark", i as u64);
        let mut rng = rng_for(seed, "trial", 0);
        let p = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let (label, clean) = &samples[odor];
        let (noisy, _) = occlude_with(clean, p, &mut rng);
        spec.methods
            .iter()
            .zip(&references)
            .map(|(&m, refs)| {
                let predicted = manhattan_classify(&d.output(m, &noisy)?, refs, spec.threshold)?;
                Ok(BenchmarkTrial {
                    method: m,
                    odor: label.clone(),
                    p,
                    seed,
                    correct: predicted.as_deref() == Some(label.as_str()),
                    predicted,
                })
            })
            .collect()
    })?;
    Ok(BenchmarkReport {
        trials: per_trial.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use proptest::prelude::*;
    use rand::Rng;

    fn objective(v: &[f64], u: &[f64], lambda: f64) -> f64 {
        let fit: f64 = v.iter().zip(u).map(|(a, b)| 0.5 * (a - b).powi(2)).sum();
        let tv: f64 = u.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        fit + lambda * tv
    }

    /// Projected coordinate descent on the dual `min 0.5|v - D^T z|^2, |z| <= lambda`.
    pub(crate) fn tv_dual_oracle(v: &[f64], lambda: f64) -> Vec<f64> {
        let n = v.len();
        if n < 2 {
            return v.to_vec();
        }
        let mut z = vec![0.0; n - 1];
        let primal = |z: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    let left = if j > 0 { z[j - 1] } else { 0.0 };
                    let right = if j < n - 1 { z[j] } else { 0.0 };
                    v[j] - (left - right)
                })
                .collect()
        };
        for _ in 0..200_000 {
            let mut moved = 0.0f64;
            for i in 0..n - 1 {
                let u = primal(&z);
                // d/dz_i of 0.5|u|^2 with u_i += z_i, u_{i+1} -= z_i; curvature 2
                let grad = u[i] - u[i + 1];
                let next = (z[i] - grad / 2.0).clamp(-lambda, lambda);
                moved = moved.max((next - z[i]).abs());
                z[i] = next;
            }
            if moved < 1e-14 {
                break;
            }
        }
        primal(&z)
    }

    #[test]
    fn median_examples() {
        assert_eq!(median_filter(&[0.0, 0.0, 9.0, 0.0, 0.0], 5).unwrap()[2], 0.0);
        let v = [3.0, 1.0, 4.0, 1.0, 5.0];
        assert_eq!(median_filter(&v, 1).unwrap(), v);
        assert_eq!(median_filter(&[2.0; 7], 5).unwrap(), vec![2.0; 7]);
        // clamped edges: window at 0 is {3,3,3,1,4}
        assert_eq!(median_filter(&v, 5).unwrap()[0], 3.0);
        assert!(matches!(median_filter(&v, 4), Err(Error::Config(_))));
    }

    #[test]
    fn median_window3_needs_two_passes_here() {
        let v = [0.0, 8.0, 0.0, 15.0, 0.0];
        let once = median_filter(&v, 3).unwrap();
        assert_eq!(once, [0.0, 0.0, 8.0, 0.0, 0.0]);
        assert_eq!(median_filter(&once, 3).unwrap(), [0.0; 5]);
    }

    #[test]
    fn tv_trivial_cases() {
        let v = [1.0, 5.0, -2.0, 3.5];
        assert_eq!(tv_denoise_1d(&v, 0.0), v);
        assert_eq!(tv_denoise_1d(&[4.0; 6], 3.0), vec![4.0; 6]);
        assert_eq!(tv_denoise_1d(&[7.0], 1.0), vec![7.0]);
        // large lambda collapses to the mean
        let u = tv_denoise_1d(&v, 100.0);
        assert!(u.iter().all(|x| (x - 1.875).abs() < 1e-12));
    }

    #[test]
    fn tv_two_points_analytic() {
        // u = (a + l, b - l) while the gap stays open, otherwise both at the mean.
        let u = tv_denoise_1d(&[0.0, 3.0], 0.5);
        assert!((u[0] - 0.5).abs() < 1e-12 && (u[1] - 2.5).abs() < 1e-12);
        let u = tv_denoise_1d(&[0.0, 3.0], 2.0);
        assert!((u[0] - 1.5).abs() < 1e-12 && (u[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn tv_matches_dual_oracle_on_random_vectors() {
        let mut rng = rng_from(11);
        for _ in 0..200 {
            let n = rng.random_range(1..=8);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let lambda = rng.random_range(0.0..3.0);
            let fast = tv_denoise_1d(&v, lambda);
            let slow = tv_dual_oracle(&v, lambda);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-6, "v={v:?} l={lambda} fast={fast:?} slow={slow:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn tv_output_is_certified_and_beats_perturbations(
            v in proptest::collection::vec(-10.0f64..10.0, 1..40),
            lambda in 0.0f64..4.0,
            bump in -0.5f64..0.5,
            at in 0usize..40,
        ) {
            let u = tv_denoise_1d(&v, lambda);
            prop_assert!(tv_certificate_holds(&v, &u, lambda, 1e-9));
            let mut w = u.clone();
            let i = at % w.len();
            w[i] += bump;
            prop_assert!(objective(&v, &u, lambda) <= objective(&v, &w, lambda) + 1e-9);
        }

        #[test]
        fn median_window3_reaches_a_root(v in proptest::collection::vec(0.0f64..16.0, 1..72)) {
            let mut x = v.clone();
            let mut settled = false;
            for _ in 0..v.len() {
                let next = median_filter(&x, 3).unwrap();
                if next == x {
                    settled = true;
                    break;
                }
                x = next;
            }
            prop_assert!(settled);
            // a root contains no isolated extremum
            for w in x.windows(3) {
                prop_assert!(!(w[1] > w[0] && w[1] > w[2]) && !(w[1] < w[0] && w[1] < w[2]));
            }
        }
    }

    #[test]
    fn pca_examples() {
        let rows = vec![vec![1.0, 2.0, 0.0], vec![3.0, -1.0, 2.0], vec![0.0, 0.5, 1.0]];
        let back = pca_fit_denoise(&rows, &rows[1], 2).unwrap();
        for (a, b) in back.iter().zip(&rows[1]) {
            assert!((a - b).abs() < 1e-9);
        }
        // two orthogonal directions, variance along x dominates
        let rows = vec![
            vec![2.0, 0.0],
            vec![-2.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ];
        let r = pca_fit_denoise(&rows, &[0.7, 0.9], 1).unwrap();
        assert!((r[0] - 0.7).abs() < 1e-9 && r[1].abs() < 1e-9);
        let flat = vec![vec![1.0, 2.0, 3.0]; 4];
        assert_eq!(pca_fit_denoise(&flat, &[9.0, 9.0, 9.0], 2).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(matches!(pca_fit_denoise(&flat, &[0.0; 3], 5), Err(Error::Config(_))));
    }

    #[test]
    fn pca_error_nonincreasing_in_k() {
        let mut rng = rng_from(5);
        let rows: Vec<Vec<f64>> = (0..12).map(|_| (0..8).map(|_| rng.random_range(0.0..15.0)).collect()).collect();
        let err = |k| -> f64 {
            let pca = Pca::fit(&rows, k).unwrap();
            rows.iter()
                .map(|r| pca.denoise(r).unwrap().iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .sum()
        };
        let errs: Vec<f64> = (1..=8).map(err).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{errs:?}");
        assert!(errs[7] < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(BaselineConfig::default().validate(72).is_ok());
        let bad = BaselineConfig { mf_window: 4, ..BaselineConfig::default() };
        assert!(bad.validate(72).is_err());
        let bad = BaselineConfig { pca_components: 73, ..BaselineConfig::default() };
        assert!(bad.validate(72).is_err());
        let bad = BaselineConfig { tv_lambda: -1.0, ..BaselineConfig::default() };
        assert!(bad.validate(72).is_err());
    }
}
