//! Brownian increments on dyadic grids.
//!
//! A [`BrownianGrid`] holds (or regenerates) the increments of one
//! trajectory's driving noise on a uniform grid: increment `(step, comp)` is
//! `sqrt(h) * N(0,1)` with the Gaussian drawn from the counter stream at
//! `(seed, trajectory, step, comp)`. Nothing depends on evaluation order, so
//! grids above [`STREAM_LIMIT`] stored values are not materialized at all;
//! they regenerate increments on demand.
//!
//! Coarsening by a power-of-two factor replaces blocks by their sums, one
//! halving pass per factor of two. The cascade makes refinement routes agree
//! bit-exactly: coarsening by 4 is literally coarsening by 2 twice, and the
//! total mass `W_T` is independent of the level it is summed at. This is the
//! coupling contract the weak-error sweeps rely on: a scheme at `h` and a
//! reference at `h_ref` draw from one grid and see exactly the same Brownian
//! path.

use crate::error::{Error, Result};
use crate::rng;

/// Above this many stored f64 values per grid, increments are regenerated
/// from counters instead of being kept in memory.
pub const STREAM_LIMIT: usize = 1_000_000;

/// Per-step noise for a stepper: `fill` writes the `noise_dim` increments of
/// the given step.
pub trait NoiseSource {
    fn noise_dim(&self) -> usize;
    fn n_steps(&self) -> usize;
    fn h(&self) -> f64;
    fn fill(&self, step: usize, out: &mut [f64]);
}

pub struct BrownianGrid {
    seed: u64,
    trajectory: u64,
    noise_dim: usize,
    h: f64,
    n_steps: usize,
    /// Coarsening level: 0 is the native grid, each level doubles `h`.
    level: u32,
    /// Row-major `[step][component]`; `None` for native streaming grids.
    storage: Option<Vec<f64>>,
}

impl BrownianGrid {
    /// Grid for trajectory 0; see [`BrownianGrid::for_trajectory`].
    pub fn generate(seed: u64, noise_dim: usize, t_horizon: f64, h: f64) -> Result<Self> {
        Self::for_trajectory(seed, 0, noise_dim, t_horizon, h)
    }

    /// Increments of one trajectory over `[0, t_horizon]` at spacing `h`,
    /// which must tile the horizon to within 1e-9 relative.
    pub fn for_trajectory(
        seed: u64,
        trajectory: u64,
        noise_dim: usize,
        t_horizon: f64,
        h: f64,
    ) -> Result<Self> {
        if noise_dim == 0 {
            return Err(Error::InvalidParameter(
                "noise dimension must be positive".into(),
            ));
        }
        if !(h > 0.0) || !(t_horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need positive horizon and step (T = {t_horizon}, h = {h})"
            )));
        }
        let ratio = t_horizon / h;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon {t_horizon} is not an integer multiple of h = {h}"
            )));
        }
        let n_steps = n as usize;
        let mut grid = Self {
            seed,
            trajectory,
            noise_dim,
            h,
            n_steps,
            level: 0,
            storage: None,
        };
        if n_steps * noise_dim <= STREAM_LIMIT {
            let mut data = vec![0.0; n_steps * noise_dim];
            for step in 0..n_steps {
                for comp in 0..noise_dim {
                    data[step * noise_dim + comp] = grid.raw(step, comp);
                }
            }
            grid.storage = Some(data);
        }
        Ok(grid)
    }

    #[inline]
    fn raw(&self, step: usize, comp: usize) -> f64 {
        self.h.sqrt() * rng::standard_normal(self.seed, self.trajectory, step as u64, comp as u64)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trajectory(&self) -> u64 {
        self.trajectory
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn t_horizon(&self) -> f64 {
        self.h * self.n_steps as f64
    }

    pub fn is_streaming(&self) -> bool {
        self.storage.is_none()
    }

    /// Single increment component.
    #[inline]
    pub fn increment(&self, step: usize, comp: usize) -> f64 {
        debug_assert!(step < self.n_steps && comp < self.noise_dim);
        match &self.storage {
            Some(data) => data[step * self.noise_dim + comp],
            None => self.raw(step, comp),
        }
    }

    /// Sum increments into blocks of `factor` (a power of two dividing the
    /// step count), one halving pass per factor of two.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianGrid> {
        if factor == 0 || !factor.is_power_of_two() {
            return Err(Error::GridMismatch(format!(
                "factor {factor} is not a power of two"
            )));
        }
        if self.n_steps % factor != 0 {
            return Err(Error::GridMismatch(format!(
                "factor {factor} does not divide {} steps",
                self.n_steps
            )));
        }
        let m = self.noise_dim;
        // First halving pass reads through `increment` so streaming grids
        // never materialize at full resolution.
        let mut cur: Vec<f64>;
        let mut n = self.n_steps;
        let mut h = self.h;
        let mut level = self.level;
        let mut remaining = factor;
        if remaining == 1 {
            cur = (0..n * m).map(|i| self.increment(i / m, i % m)).collect();
        } else {
            n /= 2;
            cur = vec![0.0; n * m];
            for k in 0..n {
                for c in 0..m {
                    cur[k * m + c] = self.increment(2 * k, c) + self.increment(2 * k + 1, c);
                }
            }
            h *= 2.0;
            level += 1;
            remaining /= 2;
        }
        while remaining > 1 {
            n /= 2;
            let mut next = vec![0.0; n * m];
            for k in 0..n {
                for c in 0..m {
                    next[k * m + c] = cur[2 * k * m + c] + cur[(2 * k + 1) * m + c];
                }
            }
            cur = next;
            h *= 2.0;
            level += 1;
            remaining /= 2;
        }
        Ok(BrownianGrid {
            seed: self.seed,
            trajectory: self.trajectory,
            noise_dim: m,
            h,
            n_steps: n,
            level,
            storage: Some(cur),
        })
    }
}

impl NoiseSource for BrownianGrid {
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn n_steps(&self) -> usize {
        self.n_steps
    }

    fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    fn fill(&self, step: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.noise_dim);
        match &self.storage {
            Some(data) => {
                out.copy_from_slice(&data[step * self.noise_dim..(step + 1) * self.noise_dim])
            }
            None => {
                for (c, o) in out.iter_mut().enumerate() {
                    *o = self.raw(step, c);
                }
            }
        }
    }
}

/// Identically-zero increments; drives deterministic flows through the same
/// stepping code.
pub struct ZeroNoise {
    pub noise_dim: usize,
    pub n_steps: usize,
    pub h: f64,
}

impl NoiseSource for ZeroNoise {
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn n_steps(&self) -> usize {
        self.n_steps
    }

    fn h(&self) -> f64 {
        self.h
    }

    fn fill(&self, _step: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}

/// Explicit increments handed in as a flat `[step][component]` slice.
pub struct SliceNoise<'a> {
    data: &'a [f64],
    noise_dim: usize,
    h: f64,
}

impl<'a> SliceNoise<'a> {
    pub fn new(data: &'a [f64], noise_dim: usize, h: f64) -> Result<Self> {
        if noise_dim == 0 || data.len() % noise_dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: noise_dim,
                got: data.len(),
            });
        }
        Ok(Self { data, noise_dim, h })
    }
}

impl NoiseSource for SliceNoise<'_> {
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn n_steps(&self) -> usize {
        self.data.len() / self.noise_dim
    }

    fn h(&self) -> f64 {
        self.h
    }

    fn fill(&self, step: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.data[step * self.noise_dim..(step + 1) * self.noise_dim]);
    }
}
