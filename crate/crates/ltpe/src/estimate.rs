//! Monte Carlo estimation over trajectory ensembles.
//!
//! Everything here is deterministic given a seed: trajectories are indexed,
//! their noise comes from counter streams, and reductions fold fixed-size
//! chunks in index order. Splitting an ensemble across any number of
//! workers therefore yields bit-identical results; the chunk map is a
//! disjoint union, which is associative exactly, not just approximately.
//!
//! Weak-error sweeps couple each coarse run to the fine reference through
//! one shared Brownian grid per trajectory index (the coarse increments are
//! block sums of the fine ones), which cancels most of the Monte Carlo
//! variance out of the error difference.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linop::ShiftedSolver;
use crate::model::SemiLinearModel;
use crate::paths::BrownianGrid;
use crate::scheme::{simulate_path, SchemeParams};

/// Trajectories per reduction chunk. Chunks accumulate sequentially and are
/// folded in index order, so results never depend on worker scheduling.
pub const CHUNK: usize = 256;

/// 97.5% standard-normal quantile: half-width factor for 95% intervals.
pub const Z95: f64 = 1.9599639845400536;

/// The four bounded, smooth test functionals the weak-error protocol uses.
/// All outputs lie in `[-1, pi/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestFunction {
    AtanNorm,
    Gauss,
    CosNorm,
    SinNormSq,
}

impl TestFunction {
    pub const ALL: [TestFunction; 4] =
        [Self::AtanNorm, Self::Gauss, Self::CosNorm, Self::SinNormSq];

    pub fn name(self) -> &'static str {
        match self {
            Self::AtanNorm => "atan_norm",
            Self::Gauss => "gauss",
            Self::CosNorm => "cos_norm",
            Self::SinNormSq => "sin_norm_sq",
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        let n2: f64 = x.iter().map(|v| v * v).sum();
        match self {
            Self::AtanNorm => n2.sqrt().atan(),
            Self::Gauss => (-n2).exp(),
            Self::CosNorm => n2.sqrt().cos(),
            Self::SinNormSq => n2.sin(),
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "atan_norm" => Ok(Self::AtanNorm),
            "gauss" => Ok(Self::Gauss),
            "cos_norm" => Ok(Self::CosNorm),
            "sin_norm_sq" => Ok(Self::SinNormSq),
            other => Err(Error::InvalidParameter(format!(
                "unknown test function '{other}' (expected atan_norm, gauss, cos_norm or sin_norm_sq)"
            ))),
        }
    }
}

/// Per-chunk running sums of a fixed-width observable vector.
#[derive(Clone, Debug)]
pub struct ChunkStats {
    count: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl ChunkStats {
    pub fn new(n_obs: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; n_obs],
            sum_sq: vec![0.0; n_obs],
        }
    }

    pub fn record(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.sum.len());
        self.count += 1;
        for (i, &v) in values.iter().enumerate() {
            self.sum[i] += v;
            self.sum_sq[i] += v * v;
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Ensemble statistics as a disjoint union of chunk sums, keyed by chunk
/// index. Reading any moment folds the chunks in ascending key order, so a
/// given set of chunks always reduces to the same bits.
#[derive(Clone, Debug)]
pub struct EnsembleStats {
    n_obs: usize,
    chunks: BTreeMap<usize, ChunkStats>,
}

impl EnsembleStats {
    pub fn new(n_obs: usize) -> Self {
        Self {
            n_obs,
            chunks: BTreeMap::new(),
        }
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn insert_chunk(&mut self, index: usize, chunk: ChunkStats) -> Result<()> {
        if chunk.sum.len() != self.n_obs {
            return Err(Error::DimensionMismatch {
                expected: self.n_obs,
                got: chunk.sum.len(),
            });
        }
        if self.chunks.contains_key(&index) {
            return Err(Error::InvalidParameter(format!(
                "chunk {index} recorded twice; chunks must partition the ensemble"
            )));
        }
        self.chunks.insert(index, chunk);
        Ok(())
    }

    /// Disjoint union; rejects overlapping chunk indices.
    pub fn merge(mut self, other: EnsembleStats) -> Result<EnsembleStats> {
        if other.n_obs != self.n_obs {
            return Err(Error::DimensionMismatch {
                expected: self.n_obs,
                got: other.n_obs,
            });
        }
        for (index, chunk) in other.chunks {
            self.insert_chunk(index, chunk)?;
        }
        Ok(self)
    }

    pub fn count(&self) -> usize {
        self.chunks.values().map(|c| c.count).sum()
    }

    fn totals(&self, i: usize) -> (usize, f64, f64) {
        let mut n = 0;
        let mut s = 0.0;
        let mut s2 = 0.0;
        for chunk in self.chunks.values() {
            n += chunk.count;
            s += chunk.sum[i];
            s2 += chunk.sum_sq[i];
        }
        (n, s, s2)
    }

    pub fn mean(&self, i: usize) -> f64 {
        let (n, s, _) = self.totals(i);
        s / n as f64
    }

    /// Unbiased sample variance, clamped at zero against cancellation.
    pub fn variance(&self, i: usize) -> f64 {
        let (n, s, s2) = self.totals(i);
        if n < 2 {
            return 0.0;
        }
        ((s2 - s * s / n as f64) / (n as f64 - 1.0)).max(0.0)
    }

    /// 95% normal-approximation half-width of the mean.
    pub fn half_width(&self, i: usize) -> f64 {
        let n = self.count();
        Z95 * (self.variance(i) / n as f64).sqrt()
    }
}

/// Run `worker` for trajectory indices `0..m` in parallel and reduce
/// deterministically. The worker fills the observable buffer for its index;
/// a step failure is reported with the first failing trajectory in chunk
/// order, independent of scheduling.
pub fn ensemble<F>(m: usize, n_obs: usize, worker: &F) -> Result<EnsembleStats>
where
    F: Fn(usize, &mut [f64]) -> Result<()> + Sync,
{
    if m == 0 {
        return Err(Error::EmptySamples("ensemble of zero trajectories".into()));
    }
    let n_chunks = m.div_ceil(CHUNK);
    let results: Vec<Result<ChunkStats>> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * CHUNK;
            let hi = ((ci + 1) * CHUNK).min(m);
            let mut chunk = ChunkStats::new(n_obs);
            let mut buf = vec![0.0; n_obs];
            for t in lo..hi {
                worker(t, &mut buf).map_err(|e| match e {
                    Error::StepFailure { step } => Error::TrajectoryFailure {
                        trajectory: t,
                        step,
                    },
                    other => other,
                })?;
                chunk.record(&buf);
            }
            Ok(chunk)
        })
        .collect();
    let mut stats = EnsembleStats::new(n_obs);
    for (ci, r) in results.into_iter().enumerate() {
        stats.insert_chunk(ci, r?)?;
    }
    Ok(stats)
}

fn endpoint_stride(n_steps: usize) -> Option<usize> {
    Some(n_steps.max(1))
}

/// `E[phi(Y_N)]` over `m` trajectories: `(mean, 95% half-width)`.
///
/// Assumes the caller has settled admissibility of `params.h`; trajectories
/// that produce a non-finite state fail the whole run with the trajectory
/// and step index.
pub fn expectation(
    model: &SemiLinearModel,
    params: SchemeParams,
    phi: TestFunction,
    m: usize,
    t_horizon: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let solver = ShiftedSolver::new(model.linear(), params.theta, params.h)?;
    // probe grid settles T/h validation once, before the parallel loop
    let probe = BrownianGrid::for_trajectory(seed, 0, model.noise_dim(), t_horizon, params.h)?;
    let n_steps = {
        use crate::paths::NoiseSource;
        probe.n_steps()
    };
    let stats = ensemble(m, 1, &|t, buf: &mut [f64]| {
        let noise =
            BrownianGrid::for_trajectory(seed, t as u64, model.noise_dim(), t_horizon, params.h)?;
        let traj = simulate_path(
            model,
            params,
            &solver,
            model.initial(),
            &noise,
            endpoint_stride(n_steps),
        )?;
        buf[0] = phi.eval(traj.last());
        Ok(())
    })?;
    Ok((stats.mean(0), stats.half_width(0)))
}

/// Endpoint states of `m` trajectories of a scalar model, in trajectory
/// order (an index-addressed write, so parallel and deterministic).
pub fn endpoint_samples(
    model: &SemiLinearModel,
    params: SchemeParams,
    m: usize,
    t_horizon: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if model.dim() != 1 {
        return Err(Error::InvalidParameter(format!(
            "endpoint sampling is defined for scalar models; '{}' has dimension {}",
            model.name(),
            model.dim()
        )));
    }
    if m == 0 {
        return Err(Error::EmptySamples("ensemble of zero trajectories".into()));
    }
    let solver = ShiftedSolver::new(model.linear(), params.theta, params.h)?;
    let probe = BrownianGrid::for_trajectory(seed, 0, model.noise_dim(), t_horizon, params.h)?;
    let n_steps = {
        use crate::paths::NoiseSource;
        probe.n_steps()
    };
    let mut out = vec![0.0; m];
    let failures: Vec<Result<()>> = out
        .par_chunks_mut(CHUNK)
        .enumerate()
        .map(|(ci, block)| {
            for (j, slot) in block.iter_mut().enumerate() {
                let t = ci * CHUNK + j;
                let noise = BrownianGrid::for_trajectory(
                    seed,
                    t as u64,
                    model.noise_dim(),
                    t_horizon,
                    params.h,
                )?;
                let traj = simulate_path(
                    model,
                    params,
                    &solver,
                    model.initial(),
                    &noise,
                    endpoint_stride(n_steps),
                )
                .map_err(|e| match e {
                    Error::StepFailure { step } => Error::TrajectoryFailure {
                        trajectory: t,
                        step,
                    },
                    other => other,
                })?;
                *slot = traj.last()[0];
            }
            Ok(())
        })
        .collect();
    for r in failures {
        r?;
    }
    Ok(out)
}

/// One rung of a weak-error ladder: per-phi `|E phi(coarse) - E phi(ref)|`
/// with the 95% half-width of the coupled difference.
#[derive(Clone, Debug)]
pub struct WeakErrorPoint {
    pub h: f64,
    pub errors: Vec<f64>,
    pub half_widths: Vec<f64>,
}

/// Weak errors of the scheme at each `h` in `h_list` against a fine
/// reference at `h_ref`, all driven by the same Brownian grids.
///
/// `ref_theta` lets the reference run a different theta variant (default:
/// the same as `base`). Every `h` must be a power-of-two multiple of
/// `h_ref`; the reference trajectory is simulated once per index and its
/// coarse runs see block sums of the identical increments.
pub fn weak_error_sweep(
    model: &SemiLinearModel,
    base: SchemeParams,
    h_list: &[f64],
    h_ref: f64,
    ref_theta: Option<f64>,
    t_horizon: f64,
    m: usize,
    phis: &[TestFunction],
    seed: u64,
) -> Result<Vec<WeakErrorPoint>> {
    if h_list.is_empty() || phis.is_empty() {
        return Err(Error::InvalidParameter(
            "weak-error sweep needs at least one step size and one test function".into(),
        ));
    }
    if !(h_ref > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "reference step {h_ref} must be positive"
        )));
    }
    let mut factors = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let ratio = h / h_ref;
        let factor = ratio.round() as usize;
        if factor == 0 || (ratio - factor as f64).abs() > 1e-9 * ratio || !factor.is_power_of_two()
        {
            return Err(Error::GridMismatch(format!(
                "step {h} is not a power-of-two multiple of the reference step {h_ref}"
            )));
        }
        factors.push(factor);
    }
    let ref_theta = ref_theta.unwrap_or(base.theta);
    let ref_params = SchemeParams::with_bound_knobs(ref_theta, h_ref, base.kappa, base.p)?;
    let ref_solver = ShiftedSolver::new(model.linear(), ref_theta, h_ref)?;
    let coarse: Vec<(SchemeParams, ShiftedSolver)> = h_list
        .iter()
        .map(|&h| -> Result<_> {
            let p = SchemeParams::with_bound_knobs(base.theta, h, base.kappa, base.p)?;
            let s = ShiftedSolver::new(model.linear(), base.theta, h)?;
            Ok((p, s))
        })
        .collect::<Result<_>>()?;

    let n_phi = phis.len();
    let n_obs = h_list.len() * n_phi;
    let stats = ensemble(m, n_obs, &|t, buf: &mut [f64]| {
        use crate::paths::NoiseSource;
        let fine =
            BrownianGrid::for_trajectory(seed, t as u64, model.noise_dim(), t_horizon, h_ref)?;
        let fine_traj = simulate_path(
            model,
            ref_params,
            &ref_solver,
            model.initial(),
            &fine,
            endpoint_stride(fine.n_steps()),
        )?;
        let mut ref_vals = vec![0.0; n_phi];
        for (j, phi) in phis.iter().enumerate() {
            ref_vals[j] = phi.eval(fine_traj.last());
        }
        for (k, &factor) in factors.iter().enumerate() {
            let grid = fine.coarsen(factor)?;
            let (params, solver) = &coarse[k];
            let traj = simulate_path(
                model,
                *params,
                solver,
                model.initial(),
                &grid,
                endpoint_stride(grid.n_steps()),
            )?;
            for (j, phi) in phis.iter().enumerate() {
                buf[k * n_phi + j] = phi.eval(traj.last()) - ref_vals[j];
            }
        }
        Ok(())
    })?;

    Ok(h_list
        .iter()
        .enumerate()
        .map(|(k, &h)| WeakErrorPoint {
            h,
            errors: (0..n_phi)
                .map(|j| stats.mean(k * n_phi + j).abs())
                .collect(),
            half_widths: (0..n_phi)
                .map(|j| stats.half_width(k * n_phi + j))
                .collect(),
        })
        .collect())
}

/// Least-squares fit of `log2(error)` against `log2(h)`.
#[derive(Clone, Copy, Debug)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "rate fit needs at least two points, got {}",
            points.len()
        )));
    }
    let bad: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, &(_, e))| !(e > 0.0))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::NonPositiveErrors { indices: bad });
    }
    let xs: Vec<f64> = points.iter().map(|&(h, _)| h.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, e)| e.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "rate fit needs at least two distinct step sizes".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let p = intercept + slope * x;
            (y - p) * (y - p)
        })
        .sum();
    // a flat, exactly-reproduced ladder has zero total variance; call it a
    // perfect fit rather than 0/0
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(RateFit {
        slope,
        intercept,
        r2,
    })
}

/// Time-and-ensemble average of `phi` over steps `burn_in..=n`:
/// `(average, standard error across trajectories)`.
pub fn ergodic_average(
    model: &SemiLinearModel,
    params: SchemeParams,
    phi: TestFunction,
    burn_in: usize,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if burn_in >= n {
        return Err(Error::InvalidParameter(format!(
            "burn-in {burn_in} must be below the step count {n}"
        )));
    }
    let solver = ShiftedSolver::new(model.linear(), params.theta, params.h)?;
    let t_horizon = n as f64 * params.h;
    let stats = ensemble(m, 1, &|t, buf: &mut [f64]| {
        let noise =
            BrownianGrid::for_trajectory(seed, t as u64, model.noise_dim(), t_horizon, params.h)?;
        let traj = simulate_path(model, params, &solver, model.initial(), &noise, Some(1))?;
        let mut acc = 0.0;
        for k in burn_in..=n {
            acc += phi.eval(traj.state(k));
        }
        buf[0] = acc / (n - burn_in + 1) as f64;
        Ok(())
    })?;
    let sem = (stats.variance(0) / stats.count() as f64).sqrt();
    Ok((stats.mean(0), sem))
}

/// Normalized histogram on a uniform grid.
#[derive(Clone, Debug)]
pub struct DensityCurve {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    /// Heights per bin; `sum(height * width) = 1`.
    pub heights: Vec<f64>,
}

impl DensityCurve {
    pub fn bins(&self) -> usize {
        self.heights.len()
    }

    pub fn integral(&self) -> f64 {
        let w = (self.edges[self.edges.len() - 1] - self.edges[0]) / self.bins() as f64;
        self.heights.iter().sum::<f64>() * w
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    // this form is exact when the bracketing order statistics coincide
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Histogram over the 0.5%..99.5% quantile window; samples outside the
/// window are dropped and the kept mass renormalizes to one. The point-mass
/// case (zero-width window) collapses to a single unit-width bin.
pub fn empirical_density(samples: &[f64], bins: usize) -> Result<DensityCurve> {
    if samples.is_empty() {
        return Err(Error::EmptySamples("density of an empty sample set".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidParameter(
            "density needs at least one bin".into(),
        ));
    }
    let mut sorted: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return Err(Error::EmptySamples(
            "no finite samples for the density".into(),
        ));
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = quantile(&sorted, 0.005);
    let hi = quantile(&sorted, 0.995);
    // a window at rounding scale is a point mass; give it one unit bin
    let tiny = 8.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1.0);
    if !(hi - lo > tiny) {
        return Ok(DensityCurve {
            edges: vec![lo - 0.5, lo + 0.5],
            heights: vec![1.0],
        });
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut kept = 0usize;
    for &v in &sorted {
        if v < lo || v > hi {
            continue;
        }
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
        kept += 1;
    }
    let norm = 1.0 / (kept as f64 * width);
    let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let heights = counts.iter().map(|&c| c as f64 * norm).collect();
    Ok(DensityCurve { edges, heights })
}

fn height_at(curve: &DensityCurve, x: f64) -> f64 {
    let edges = &curve.edges;
    if x < edges[0] || x >= edges[edges.len() - 1] {
        return 0.0;
    }
    // uniform grid: direct index, clamped against the right edge
    let w = (edges[edges.len() - 1] - edges[0]) / curve.bins() as f64;
    let idx = (((x - edges[0]) / w) as usize).min(curve.bins() - 1);
    curve.heights[idx]
}

/// Exact L1 distance between two histograms, zero off their supports.
/// Both are step functions, so the integral is a finite sum over the merged
/// breakpoints, evaluated at interval midpoints.
pub fn density_distance(a: &DensityCurve, b: &DensityCurve) -> f64 {
    let mut cuts: Vec<f64> = a.edges.iter().chain(b.edges.iter()).copied().collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        let (l, r) = (pair[0], pair[1]);
        let mid = 0.5 * (l + r);
        total += (height_at(a, mid) - height_at(b, mid)).abs() * (r - l);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ginzburg_landau, mean_reverting, SemiLinearModel, SpectralOperator};
    use crate::paths::NoiseSource;
    use crate::rng;
    use crate::scheme::LtpeStepper;
    use std::sync::Arc;

    fn additive_linear(lam: f64, sigma: f64, x0: f64) -> SemiLinearModel {
        SemiLinearModel::new(
            "linear-additive",
            SpectralOperator::scalar(-lam).unwrap(),
            Arc::new(|_x: &[f64], out: &mut [f64]| out[0] = 0.0),
            Arc::new(move |_x: &[f64], out: &mut [f64]| out[0] = sigma),
            1,
            1.0,
            crate::model::DEFAULT_P0,
            crate::model::DEFAULT_P1,
            vec![x0],
        )
        .unwrap()
    }

    #[test]
    fn test_functions_evaluate_and_parse() {
        assert_eq!(TestFunction::AtanNorm.eval(&[0.0, 0.0]), 0.0);
        assert_eq!(TestFunction::Gauss.eval(&[0.0]), 1.0);
        assert_eq!(TestFunction::CosNorm.eval(&[0.0]), 1.0);
        assert_eq!(TestFunction::SinNormSq.eval(&[0.0]), 0.0);
        assert!((TestFunction::AtanNorm.eval(&[1e12]) - std::f64::consts::FRAC_PI_2).abs() < 1e-9);

        for phi in TestFunction::ALL {
            assert_eq!(phi.name().parse::<TestFunction>().unwrap(), phi);
            for i in 0..10_000u64 {
                let x = [
                    20.0 * rng::standard_normal(7, i, 0, 0),
                    20.0 * rng::standard_normal(7, i, 0, 1),
                ];
                let v = phi.eval(&x);
                assert!((-1.0..=std::f64::consts::FRAC_PI_2 + 1e-15).contains(&v));
            }
        }
        assert!("arctan".parse::<TestFunction>().is_err());
    }

    #[test]
    fn chunk_merge_is_an_exact_disjoint_union() {
        let worker = |t: usize, buf: &mut [f64]| -> Result<()> {
            buf[0] = t as f64;
            buf[1] = (t as f64).sin();
            Ok(())
        };
        let m = 1000;
        let whole = ensemble(m, 2, &worker).unwrap();
        assert_eq!(whole.count(), m);
        // mean of 0..999 is exactly 499.5
        assert_eq!(whole.mean(0), 499.5);

        // rebuild the same chunks by hand, merge in two association orders
        let build = |range: std::ops::Range<usize>| -> EnsembleStats {
            let mut s = EnsembleStats::new(2);
            for ci in range {
                let lo = ci * CHUNK;
                let hi = ((ci + 1) * CHUNK).min(m);
                let mut c = ChunkStats::new(2);
                let mut buf = [0.0; 2];
                for t in lo..hi {
                    worker(t, &mut buf).unwrap();
                    c.record(&buf);
                }
                s.insert_chunk(ci, c).unwrap();
            }
            s
        };
        let left = build(0..1)
            .merge(build(1..2))
            .unwrap()
            .merge(build(2..4))
            .unwrap();
        let right = build(0..1)
            .merge(build(1..2).merge(build(2..4)).unwrap())
            .unwrap();
        for i in 0..2 {
            assert_eq!(left.mean(i), whole.mean(i));
            assert_eq!(right.mean(i), whole.mean(i));
            assert_eq!(left.variance(i), whole.variance(i));
            assert_eq!(right.variance(i), whole.variance(i));
        }

        let overlap = build(0..1).merge(build(0..1));
        assert!(overlap.is_err());
    }

    #[test]
    fn ensemble_reduction_is_thread_count_independent() {
        let worker = |t: usize, buf: &mut [f64]| -> Result<()> {
            buf[0] = rng::standard_normal(42, t as u64, 0, 0);
            Ok(())
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| ensemble(2000, 1, &worker).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.mean(0).to_bits(), b.mean(0).to_bits());
        assert_eq!(a.variance(0).to_bits(), b.variance(0).to_bits());
    }

    #[test]
    fn expectation_is_deterministic_and_exact_on_the_degenerate_flow() {
        let model = additive_linear(2.0, 0.0, 1.0);
        let params = SchemeParams::new(1.0, 0.1).unwrap();
        let (mean, hw) = expectation(&model, params, TestFunction::AtanNorm, 500, 1.0, 9).unwrap();
        // all trajectories identical: zero spread, mean = phi(decayed state)
        assert_eq!(hw, 0.0);
        let want = (1.0f64 / 1.2f64.powi(10)).atan();
        assert!((mean - want).abs() <= 1e-12);

        // m = 1 equals the trajectory-0 value bitwise
        let noisy = additive_linear(2.0, 0.3, 1.0);
        let (m1, _) = expectation(&noisy, params, TestFunction::Gauss, 1, 1.0, 9).unwrap();
        let solver = ShiftedSolver::new(noisy.linear(), 1.0, 0.1).unwrap();
        let grid = BrownianGrid::for_trajectory(9, 0, 1, 1.0, 0.1).unwrap();
        let traj = simulate_path(&noisy, params, &solver, noisy.initial(), &grid, None).unwrap();
        assert_eq!(
            m1.to_bits(),
            TestFunction::Gauss.eval(traj.last()).to_bits()
        );
    }

    #[test]
    fn expectation_matches_an_independent_flat_loop() {
        let model = ginzburg_landau(-2.0, 0.5, 1.0).unwrap();
        let h = 2.0f64.powi(-6);
        let params = SchemeParams::new(0.0, h).unwrap();
        let (mean, _) =
            expectation(&model, params, TestFunction::AtanNorm, 10_000, 5.0, 1234).unwrap();

        // same seeds, single flat accumulation, no chunking
        let solver = ShiftedSolver::new(model.linear(), 0.0, h).unwrap();
        let n = (5.0 / h) as usize;
        let mut acc = 0.0;
        let mut y = vec![0.0];
        let mut y_next = vec![0.0];
        let mut dw = vec![0.0];
        for t in 0..10_000u64 {
            let grid = BrownianGrid::for_trajectory(1234, t, 1, 5.0, h).unwrap();
            let mut stepper = LtpeStepper::new(&model, params, &solver).unwrap();
            y.copy_from_slice(model.initial());
            for k in 0..n {
                grid.fill(k, &mut dw);
                stepper.step(&y, &dw, &mut y_next).unwrap();
                std::mem::swap(&mut y, &mut y_next);
            }
            acc += TestFunction::AtanNorm.eval(&y);
        }
        let flat = acc / 10_000.0;
        assert!((mean - flat).abs() <= 1e-12, "{mean} vs {flat}");
    }

    #[test]
    fn weak_error_against_itself_is_exactly_zero() {
        let model = ginzburg_landau(-2.0, 0.5, 1.0).unwrap();
        let h = 2.0f64.powi(-6);
        let base = SchemeParams::new(0.0, h).unwrap();
        let pts = weak_error_sweep(
            &model,
            base,
            &[h],
            h,
            None,
            1.0,
            100,
            &[TestFunction::AtanNorm, TestFunction::Gauss],
            7,
        )
        .unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].errors, vec![0.0, 0.0]);
        assert_eq!(pts[0].half_widths, vec![0.0, 0.0]);
    }

    #[test]
    fn weak_error_matches_the_gaussian_closed_form() {
        // theta = 1 on the additive linear model: Y_N is Gaussian with known
        // mean/variance, so E exp(-Y^2) = exp(-mu^2/(1+2v))/sqrt(1+2v)
        let lam = 2.0;
        let sigma = 0.1;
        let y0 = 0.5;
        let t_end = 2.0;
        let model = additive_linear(lam, sigma, y0);
        let base = SchemeParams::new(1.0, 0.0625).unwrap();
        let h_ref = 2.0f64.powi(-7);
        let pts = weak_error_sweep(
            &model,
            base,
            &[2.0f64.powi(-4), 2.0f64.powi(-5)],
            h_ref,
            None,
            t_end,
            4000,
            &[TestFunction::Gauss],
            31,
        )
        .unwrap();

        let closed = |h: f64| -> f64 {
            let n = (t_end / h).round() as i32;
            let beta = 1.0 / (1.0 + h * lam);
            let mu = y0 * beta.powi(n);
            let b2 = beta * beta;
            let v = sigma * sigma * h * b2 * (1.0 - b2.powi(n)) / (1.0 - b2);
            (1.0 + 2.0 * v).sqrt().recip() * (-mu * mu / (1.0 + 2.0 * v)).exp()
        };
        let g_ref = closed(h_ref);
        for pt in &pts {
            let want = (closed(pt.h) - g_ref).abs();
            let slack = 0.05 * want + 4.0 * pt.half_widths[0];
            assert!(
                (pt.errors[0] - want).abs() <= slack,
                "h = {}: {} vs closed form {want} (slack {slack})",
                pt.h,
                pt.errors[0]
            );
        }
        // non-dyadic ladder is rejected
        assert!(weak_error_sweep(
            &model,
            base,
            &[3.0 * h_ref],
            h_ref,
            None,
            t_end,
            10,
            &[TestFunction::Gauss],
            31
        )
        .is_err());
    }

    #[test]
    fn rate_fit_recovers_synthetic_slopes() {
        let ladder: Vec<f64> = (4..=9).map(|k| 2.0f64.powi(-k)).collect();
        let first: Vec<(f64, f64)> = ladder.iter().map(|&h| (h, 3.0 * h)).collect();
        let fit = fit_rate(&first).unwrap();
        assert!((fit.slope - 1.0).abs() <= 1e-12);
        assert!((fit.r2 - 1.0).abs() <= 1e-12);

        let half: Vec<(f64, f64)> = ladder.iter().map(|&h| (h, 0.7 * h.sqrt())).collect();
        let fit = fit_rate(&half).unwrap();
        assert!((fit.slope - 0.5).abs() <= 1e-12);

        // +-5% deterministic perturbation stays near slope one
        let noisy: Vec<(f64, f64)> = ladder
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                (
                    h,
                    3.0 * h * (1.0 + 0.1 * (rng::uniform_open(5, i as u64, 0, 0) - 0.5)),
                )
            })
            .collect();
        let fit = fit_rate(&noisy).unwrap();
        assert!(fit.slope > 0.9 && fit.slope < 1.1, "slope {}", fit.slope);
        assert!(fit.r2 >= 0.98, "r2 {}", fit.r2);

        assert!(matches!(
            fit_rate(&[(0.5, 1.0), (0.25, 0.0)]),
            Err(Error::NonPositiveErrors { indices }) if indices == vec![1]
        ));
        assert!(fit_rate(&[(0.5, 1.0)]).is_err());
        assert!(fit_rate(&[(0.5, 1.0), (0.5, 2.0)]).is_err());
    }

    #[test]
    fn ergodic_average_sits_at_the_deterministic_fixed_point() {
        // b = 0, sigma = 0: the origin is a fixed point of the flow
        let model = mean_reverting(0.0, 1.0, 0.6, 0.0, 0.0).unwrap();
        let params = SchemeParams::new(0.5, 0.125).unwrap();
        let (avg, sem) =
            ergodic_average(&model, params, TestFunction::CosNorm, 10, 100, 50, 3).unwrap();
        assert_eq!(avg, 1.0);
        assert_eq!(sem, 0.0);
        assert!(ergodic_average(&model, params, TestFunction::CosNorm, 100, 100, 50, 3).is_err());
    }

    #[test]
    fn ergodic_average_agrees_with_the_endpoint_expectation_after_mixing() {
        let model = ginzburg_landau(-2.0, 0.5, 1.0).unwrap();
        let h = 2.0f64.powi(-4);
        let params = SchemeParams::new(1.0, h).unwrap();
        let n = (50.0 / h) as usize;
        let m = 2000;
        let (avg, sem) =
            ergodic_average(&model, params, TestFunction::AtanNorm, n / 2, n, m, 77).unwrap();
        let (end, hw) = expectation(&model, params, TestFunction::AtanNorm, m, 50.0, 78).unwrap();
        let tol = 3.0 * (sem + hw / Z95).max(1e-4);
        assert!((avg - end).abs() <= tol, "{avg} vs {end} (tol {tol})");

        // doubling the horizon beyond burn-in moves the average within noise
        let (avg2, sem2) =
            ergodic_average(&model, params, TestFunction::AtanNorm, n / 2, 2 * n, m, 77).unwrap();
        assert!((avg2 - avg).abs() <= 2.0 * (sem + sem2).max(1e-4));
    }

    #[test]
    fn density_of_a_known_distribution_is_close_in_l1() {
        let samples: Vec<f64> = (0..1_000_000u64)
            .map(|i| rng::standard_normal(11, i, 0, 0))
            .collect();
        let hist = empirical_density(&samples, 100).unwrap();
        assert!((hist.integral() - 1.0).abs() <= 1e-9);

        // analytic reference on the same window: bin-averaged standard
        // normal pdf, renormalized over the window like the histogram
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let bin_mass = |l: f64, r: f64| -> f64 {
            // Simpson on 8 panels per bin is far below the assertion scale
            let n = 8;
            let w = (r - l) / n as f64;
            let mut s = pdf(l) + pdf(r);
            for j in 1..n {
                s += pdf(l + j as f64 * w) * if j % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * w / 3.0
        };
        let masses: Vec<f64> = hist
            .edges
            .windows(2)
            .map(|e| bin_mass(e[0], e[1]))
            .collect();
        let total: f64 = masses.iter().sum();
        let w = (hist.edges[100] - hist.edges[0]) / 100.0;
        let analytic = DensityCurve {
            edges: hist.edges.clone(),
            heights: masses.iter().map(|m| m / (total * w)).collect(),
        };
        let d = density_distance(&hist, &analytic);
        assert!(d <= 0.02, "L1 distance {d}");
    }

    #[test]
    fn density_point_mass_and_distance_extremes() {
        let hist = empirical_density(&vec![3.25; 500], 100).unwrap();
        assert_eq!(hist.bins(), 1);
        assert_eq!(hist.integral(), 1.0);

        let a = empirical_density(&vec![0.0; 10], 100).unwrap();
        let b = empirical_density(&vec![10.0; 10], 100).unwrap();
        assert_eq!(density_distance(&a, &a), 0.0);
        assert!((density_distance(&a, &b) - 2.0).abs() <= 1e-12);

        assert!(empirical_density(&[], 100).is_err());
        assert!(empirical_density(&[1.0], 0).is_err());
    }

    #[test]
    fn endpoint_samples_are_index_addressed() {
        let model = ginzburg_landau(-2.0, 0.5, 1.0).unwrap();
        let h = 2.0f64.powi(-5);
        let params = SchemeParams::new(0.5, h).unwrap();
        let all = endpoint_samples(&model, params, 300, 1.0, 5).unwrap();
        assert_eq!(all.len(), 300);
        // spot-check one index against a direct simulation
        let solver = ShiftedSolver::new(model.linear(), 0.5, h).unwrap();
        let grid = BrownianGrid::for_trajectory(5, 257, 1, 1.0, h).unwrap();
        let traj = simulate_path(&model, params, &solver, model.initial(), &grid, None).unwrap();
        assert_eq!(all[257].to_bits(), traj.last()[0].to_bits());

        let ac = crate::model::allen_cahn(4).unwrap();
        let p = SchemeParams::new(1.0, 2.0f64.powi(-4)).unwrap();
        assert!(endpoint_samples(&ac, p, 10, 1.0, 5).is_err());
    }
}
