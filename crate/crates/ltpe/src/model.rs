//! Problem definitions: semi-linear SDE models
//!
//! ```text
//!     dX_t = (A X_t + f(X_t)) dt + g(X_t) dW_t,   X_0 = x0,
//! ```
//!
//! where `A` is self-adjoint negative definite with structure we can exploit
//! (scalar, diagonal, symmetric tridiagonal Toeplitz, dense symmetric), `f`
//! grows at most polynomially with exponent `gamma`, and the pair `(f, g)`
//! satisfies a one-sided coercivity bound of order `p0` and a coupled
//! monotonicity bound of order `p1`:
//!
//! ```text
//!     2<x, f(x)>        + (2 p0 - 1) |g(x)|^2          <= L1 (1 + |x|^2),
//!     2<x-y, f(x)-f(y)> + (2 p1 - 1) |g(x)-g(y)|^2     <= L2 |x - y|^2,
//!     |f(x) - f(y)| <= C1 (1 + |x| + |y|)^(gamma-1) |x - y|,
//!     |f(x)|        <= C2 (1 + |x|)^gamma.
//! ```
//!
//! The constants `L1, L2, C1, C2` are rarely available in closed form, so a
//! model fits them at construction: empirical suprema of the four ratios over
//! a deterministic cloud of points (pairs) drawn uniformly from a ball,
//! inflated by 5% and frozen. `check_assumptions` re-samples the same ratios
//! with a caller-chosen cloud and flags any excess over the stored constants.
//! Long-time (ergodicity) claims additionally need `2*lambda_1 > max(L1, L2)`
//! where `lambda_1` is the smallest eigenvalue magnitude of `-A`; the pair of
//! margins is exposed by [`dissipativity_gap`].

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::rng;

/// Defaults used by the built-in models: the weak-error theory needs
/// moment order `p0 >= max(4*gamma + 1, 5*gamma - 4)`, which is 13 for the
/// cubic (`gamma = 3`) nonlinearities below; `p1 = 2` keeps the coupled
/// monotonicity constant small.
pub const DEFAULT_P0: f64 = 13.0;
pub const DEFAULT_P1: f64 = 2.0;

/// Fitting cloud: ball radius, number of sample pairs, stream seed.
pub const FIT_RADIUS: f64 = 20.0;
pub const FIT_SAMPLES: usize = 1_000_000;
pub const FIT_SEED: u64 = 0x4C54_5045;

const INFLATION: f64 = 0.05;
const FLOOR: f64 = 1e-12;

pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Structured symmetric linear part. Dense operators carry a one-time
/// symmetric eigendecomposition so shifted solves stay direct.
#[derive(Clone, Debug)]
pub enum Structure {
    Scalar {
        a: f64,
    },
    Diagonal {
        diag: Vec<f64>,
    },
    /// Symmetric Toeplitz tridiagonal: `diag` on the main diagonal, `off` on
    /// both neighbours.
    TridiagonalToeplitz {
        diag: f64,
        off: f64,
    },
    /// Row-major symmetric matrix plus its eigendecomposition
    /// (`eigvecs` column j <-> `eigvals[j]`).
    DenseSymmetric {
        matrix: Vec<f64>,
        eigvecs: Vec<f64>,
        eigvals: Vec<f64>,
    },
}

#[derive(Clone, Debug)]
pub struct SpectralOperator {
    dim: usize,
    structure: Structure,
    /// Eigenvalue magnitudes of `-A`, ascending: `eig_mags[0] = lambda_1`.
    eig_mags: Vec<f64>,
}

impl SpectralOperator {
    pub fn scalar(a: f64) -> Result<Self> {
        if !(a < 0.0) || !a.is_finite() {
            return Err(Error::NotDissipative(format!(
                "scalar part {a} is not negative"
            )));
        }
        Ok(Self {
            dim: 1,
            structure: Structure::Scalar { a },
            eig_mags: vec![-a],
        })
    }

    pub fn diagonal(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidParameter("empty diagonal".into()));
        }
        if let Some(bad) = diag.iter().find(|v| !(**v < 0.0) || !v.is_finite()) {
            return Err(Error::NotDissipative(format!(
                "diagonal entry {bad} is not negative"
            )));
        }
        let mut mags: Vec<f64> = diag.iter().map(|v| -v).collect();
        mags.sort_by(|a, b| a.total_cmp(b));
        Ok(Self {
            dim: diag.len(),
            structure: Structure::Diagonal { diag },
            eig_mags: mags,
        })
    }

    /// Symmetric Toeplitz tridiagonal of size `dim`; eigenvalues are the
    /// closed form `diag + 2*off*cos(i*pi/(dim+1))`, i = 1..dim.
    pub fn tridiagonal_toeplitz(diag: f64, off: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("zero-dimensional operator".into()));
        }
        let n = dim as f64;
        let mut mags = Vec::with_capacity(dim);
        for i in 1..=dim {
            let eig = diag + 2.0 * off * (i as f64 * std::f64::consts::PI / (n + 1.0)).cos();
            if !(eig < 0.0) || !eig.is_finite() {
                return Err(Error::NotDissipative(format!(
                    "tridiagonal eigenvalue {eig} (index {i}) is not negative"
                )));
            }
            mags.push(-eig);
        }
        mags.sort_by(|a, b| a.total_cmp(b));
        Ok(Self {
            dim,
            structure: Structure::TridiagonalToeplitz { diag, off },
            eig_mags: mags,
        })
    }

    /// Dense symmetric operator from a row-major `dim x dim` matrix.
    pub fn dense_symmetric(matrix: Vec<f64>, dim: usize) -> Result<Self> {
        if matrix.len() != dim * dim || dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: matrix.len(),
            });
        }
        let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (matrix[i * dim + j] - matrix[j * dim + i]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter(format!(
                        "matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let (eigvals, eigvecs) = jacobi_symmetric_eigen(&matrix, dim);
        if let Some(bad) = eigvals.iter().find(|v| !(**v < 0.0)) {
            return Err(Error::NotDissipative(format!(
                "eigenvalue {bad} is not negative"
            )));
        }
        let mut mags: Vec<f64> = eigvals.iter().map(|v| -v).collect();
        mags.sort_by(|a, b| a.total_cmp(b));
        Ok(Self {
            dim,
            structure: Structure::DenseSymmetric {
                matrix,
                eigvecs,
                eigvals,
            },
            eig_mags: mags,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    /// Eigenvalue magnitudes of `-A`, ascending.
    pub fn eig_mags(&self) -> &[f64] {
        &self.eig_mags
    }

    /// `lambda_1`: the slowest decay rate.
    pub fn lambda_min(&self) -> f64 {
        self.eig_mags[0]
    }

    /// `lambda_d`: the fastest decay rate.
    pub fn lambda_max(&self) -> f64 {
        *self.eig_mags.last().unwrap()
    }

    pub fn structure_name(&self) -> &'static str {
        match self.structure {
            Structure::Scalar { .. } => "scalar",
            Structure::Diagonal { .. } => "diagonal",
            Structure::TridiagonalToeplitz { .. } => "tridiagonal-toeplitz",
            Structure::DenseSymmetric { .. } => "dense-symmetric",
        }
    }
}

/// Cyclic Jacobi on a symmetric matrix; returns (eigenvalues, eigenvectors)
/// with eigenvector j stored in column j of the row-major matrix. Plenty for
/// the moderate dimensions structured operators are lowered from.
fn jacobi_symmetric_eigen(matrix: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let frob: f64 = matrix
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    for _sweep in 0..128 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[p * d + q] * a[p * d + q];
            }
        }
        if (2.0 * off).sqrt() <= 1e-15 * frob {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..d {
                    if k != p && k != q {
                        let akp = a[k * d + p];
                        let akq = a[k * d + q];
                        a[k * d + p] = c * akp - s * akq;
                        a[p * d + k] = a[k * d + p];
                        a[k * d + q] = s * akp + c * akq;
                        a[q * d + k] = a[k * d + q];
                    }
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                a[p * d + p] = app - t * apq;
                a[q * d + q] = aqq + t * apq;
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigvals = (0..d).map(|i| a[i * d + i]).collect();
    (eigvals, v)
}

/// Frozen coefficient bounds; see the module docs for the inequalities each
/// one certifies.
#[derive(Clone, Copy, Debug)]
pub struct ModelConstants {
    pub l1: f64,
    pub l2: f64,
    pub p0: f64,
    pub p1: f64,
    pub c1: f64,
    pub c2: f64,
}

impl ModelConstants {
    fn validate(&self) -> Result<()> {
        if !(self.p0 >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "p0 = {} must be >= 1",
                self.p0
            )));
        }
        if !(self.p1 > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "p1 = {} must be > 1",
                self.p1
            )));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "growth constants must be positive (c1 = {}, c2 = {})",
                self.c1, self.c2
            )));
        }
        Ok(())
    }
}

/// Raw (uninflated) empirical suprema from one fitting cloud.
#[derive(Clone, Copy, Debug)]
pub struct FittedConstants {
    pub l1: f64,
    pub l2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl FittedConstants {
    /// Inflate each supremum by 5% away from tighter values (towards +inf)
    /// and floor the growth constants at a tiny positive number so that
    /// degenerate drifts (f = 0) still yield valid constants.
    pub fn frozen(&self, p0: f64, p1: f64) -> ModelConstants {
        let up = |v: f64| v + INFLATION * v.abs();
        ModelConstants {
            l1: up(self.l1),
            l2: up(self.l2),
            p0,
            p1,
            c1: up(self.c1).max(FLOOR),
            c2: up(self.c2).max(FLOOR),
        }
    }
}

pub struct SemiLinearModel {
    name: String,
    dim: usize,
    noise_dim: usize,
    linear: SpectralOperator,
    drift: VectorField,
    diffusion: VectorField,
    gamma: f64,
    constants: ModelConstants,
    initial: Vec<f64>,
}

impl SemiLinearModel {
    /// Build a model from its parts, fitting the coefficient constants on the
    /// standard cloud. `drift` writes `f(x)` (the nonlinear part only, the
    /// linear part lives in `linear`); `diffusion` writes the `dim x
    /// noise_dim` matrix `g(x)` column-major.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        linear: SpectralOperator,
        drift: VectorField,
        diffusion: VectorField,
        noise_dim: usize,
        gamma: f64,
        p0: f64,
        p1: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let dim = linear.dim();
        if initial.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: initial.len(),
            });
        }
        if noise_dim == 0 {
            return Err(Error::InvalidParameter(
                "noise dimension must be positive".into(),
            ));
        }
        if !(gamma >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma = {gamma} must be >= 1"
            )));
        }
        let fit = fit_constants(
            drift.as_ref(),
            diffusion.as_ref(),
            dim,
            noise_dim,
            gamma,
            p0,
            p1,
            FIT_RADIUS,
            FIT_SAMPLES,
            FIT_SEED,
        );
        let constants = fit.frozen(p0, p1);
        constants.validate()?;
        Ok(Self {
            name: name.into(),
            dim,
            noise_dim,
            linear,
            drift,
            diffusion,
            gamma,
            constants,
            initial,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn linear(&self) -> &SpectralOperator {
        &self.linear
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Nonlinear drift `f(x)` into `out` (length `dim`).
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out);
    }

    /// Diffusion matrix `g(x)` into `out` (length `dim * noise_dim`,
    /// column-major).
    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out);
    }

    /// `out += g_matrix * dw` for a column-major `dim x noise_dim` matrix.
    pub fn apply_noise(&self, g_matrix: &[f64], dw: &[f64], out: &mut [f64]) {
        debug_assert_eq!(g_matrix.len(), self.dim * self.noise_dim);
        debug_assert_eq!(dw.len(), self.noise_dim);
        debug_assert_eq!(out.len(), self.dim);
        for (j, &w) in dw.iter().enumerate() {
            let col = &g_matrix[j * self.dim..(j + 1) * self.dim];
            for (o, &gij) in out.iter_mut().zip(col) {
                *o += gij * w;
            }
        }
    }
}

/// Empirical maxima of the assumption ratios over a fresh cloud, plus
/// violation flags against a model's stored constants.
#[derive(Clone, Copy, Debug)]
pub struct AssumptionReport {
    pub coercivity_max: f64,
    pub monotonicity_max: f64,
    pub growth_max: f64,
    pub l1_violated: bool,
    pub l2_violated: bool,
    pub c2_violated: bool,
    pub samples: usize,
    pub radius: f64,
    pub seed: u64,
}

impl AssumptionReport {
    pub fn ok(&self) -> bool {
        !(self.l1_violated || self.l2_violated || self.c2_violated)
    }
}

/// Re-sample the coercivity / monotonicity / growth ratios on `samples`
/// uniform pairs from the ball of the given radius and compare against the
/// stored constants (violation if an empirical maximum exceeds the stored
/// value by more than 1e-9 relative).
pub fn check_assumptions(
    model: &SemiLinearModel,
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<AssumptionReport> {
    if samples == 0 {
        return Err(Error::EmptySamples("assumption check needs samples".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "radius {radius} must be positive"
        )));
    }
    let c = model.constants();
    let fit = fit_constants(
        model.drift.as_ref(),
        model.diffusion.as_ref(),
        model.dim,
        model.noise_dim,
        model.gamma,
        c.p0,
        c.p1,
        radius,
        samples,
        seed,
    );
    let tol = |stored: f64| stored + 1e-9 * stored.abs().max(1.0);
    Ok(AssumptionReport {
        coercivity_max: fit.l1,
        monotonicity_max: fit.l2,
        growth_max: fit.c2,
        l1_violated: fit.l1 > tol(c.l1),
        l2_violated: fit.l2 > tol(c.l2),
        c2_violated: fit.c2 > tol(c.c2),
        samples,
        radius,
        seed,
    })
}

/// `(2*lambda_1 - L1, 2*lambda_1 - L2)`. Both margins must be positive for
/// the long-time claims to be backed by theory; the second one also gates
/// step-size admissibility. Callers are expected to surface (not hide) a
/// negative first margin: the fitted `L1` of a model with non-vanishing
/// noise floor grows with `p0` and can dwarf `2*lambda_1` even when the
/// dynamics are visibly dissipative.
pub fn dissipativity_gap(model: &SemiLinearModel) -> (f64, f64) {
    let two_l = 2.0 * model.linear().lambda_min();
    (two_l - model.constants().l1, two_l - model.constants().l2)
}

/// Empirical suprema of the four assumption ratios over `samples` pairs
/// drawn uniformly from the ball of radius `radius`. Deterministic in
/// `seed`; the reduction is a max, so chunk order cannot matter.
#[allow(clippy::too_many_arguments)]
pub fn fit_constants(
    drift: &(dyn Fn(&[f64], &mut [f64]) + Send + Sync),
    diffusion: &(dyn Fn(&[f64], &mut [f64]) + Send + Sync),
    dim: usize,
    noise_dim: usize,
    gamma: f64,
    p0: f64,
    p1: f64,
    radius: f64,
    samples: usize,
    seed: u64,
) -> FittedConstants {
    use rayon::prelude::*;

    let chunk = 4096;
    let n_chunks = samples.div_ceil(chunk);
    let id = |acc: Acc, other: Acc| acc.join(other);
    let acc = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * chunk;
            let hi = ((ci + 1) * chunk).min(samples);
            let mut scratch = FitScratch::new(dim, noise_dim);
            let mut acc = Acc::default();
            for k in lo..hi {
                scratch.sample_pair(seed, k as u64, radius);
                acc.absorb(&mut scratch, drift, diffusion, gamma, p0, p1);
            }
            acc
        })
        .reduce(Acc::default, id);
    FittedConstants {
        l1: acc.coer,
        l2: acc.mono,
        c1: acc.lip,
        c2: acc.growth,
    }
}

#[derive(Clone, Copy)]
struct Acc {
    coer: f64,
    mono: f64,
    lip: f64,
    growth: f64,
}

impl Default for Acc {
    fn default() -> Self {
        Self {
            coer: f64::NEG_INFINITY,
            mono: f64::NEG_INFINITY,
            lip: f64::NEG_INFINITY,
            growth: f64::NEG_INFINITY,
        }
    }
}

impl Acc {
    fn join(self, o: Self) -> Self {
        Self {
            coer: self.coer.max(o.coer),
            mono: self.mono.max(o.mono),
            lip: self.lip.max(o.lip),
            growth: self.growth.max(o.growth),
        }
    }

    fn absorb(
        &mut self,
        s: &mut FitScratch,
        drift: &(dyn Fn(&[f64], &mut [f64]) + Send + Sync),
        diffusion: &(dyn Fn(&[f64], &mut [f64]) + Send + Sync),
        gamma: f64,
        p0: f64,
        p1: f64,
    ) {
        drift(&s.x, &mut s.fx);
        drift(&s.y, &mut s.fy);
        diffusion(&s.x, &mut s.gx);
        diffusion(&s.y, &mut s.gy);

        let nx2 = dot(&s.x, &s.x);
        let xfx = dot(&s.x, &s.fx);
        let gx2: f64 = s.gx.iter().map(|v| v * v).sum();
        self.coer = self
            .coer
            .max((2.0 * xfx + (2.0 * p0 - 1.0) * gx2) / (1.0 + nx2));

        let nfx = dot(&s.fx, &s.fx).sqrt();
        self.growth = self.growth.max(nfx / (1.0 + nx2.sqrt()).powf(gamma));

        let mut dxy2 = 0.0;
        let mut dxy_df = 0.0;
        let mut df2 = 0.0;
        for i in 0..s.x.len() {
            let dx = s.x[i] - s.y[i];
            let df = s.fx[i] - s.fy[i];
            dxy2 += dx * dx;
            dxy_df += dx * df;
            df2 += df * df;
        }
        if dxy2 > 0.0 {
            let dg2: f64 = s.gx.iter().zip(&s.gy).map(|(a, b)| (a - b) * (a - b)).sum();
            self.mono = self
                .mono
                .max((2.0 * dxy_df + (2.0 * p1 - 1.0) * dg2) / dxy2);
            let ny = dot(&s.y, &s.y).sqrt();
            let reach = (1.0 + nx2.sqrt() + ny).powf(gamma - 1.0);
            self.lip = self.lip.max(df2.sqrt() / (reach * dxy2.sqrt()));
        }
    }
}

struct FitScratch {
    x: Vec<f64>,
    y: Vec<f64>,
    fx: Vec<f64>,
    fy: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl FitScratch {
    fn new(dim: usize, noise_dim: usize) -> Self {
        Self {
            x: vec![0.0; dim],
            y: vec![0.0; dim],
            fx: vec![0.0; dim],
            fy: vec![0.0; dim],
            gx: vec![0.0; dim * noise_dim],
            gy: vec![0.0; dim * noise_dim],
        }
    }

    /// Uniform pair in the ball: Gaussian direction, radius `R * u^(1/d)`.
    /// Slot 0 components feed `x`, slot 1 components feed `y`; the radius
    /// uniform sits one component past the direction block.
    fn sample_pair(&mut self, seed: u64, k: u64, radius: f64) {
        let d = self.x.len();
        for slot in 0..2u64 {
            let target = if slot == 0 { &mut self.x } else { &mut self.y };
            let mut norm2 = 0.0;
            for (c, t) in target.iter_mut().enumerate() {
                *t = rng::standard_normal(seed, k, slot, c as u64);
                norm2 += *t * *t;
            }
            let u = rng::uniform_open(seed, k, slot, d as u64);
            let r = radius * u.powf(1.0 / d as f64);
            let scale = if norm2 > 0.0 { r / norm2.sqrt() } else { 0.0 };
            for t in target.iter_mut() {
                *t *= scale;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Built-in models
// ---------------------------------------------------------------------------

fn fit_cache() -> &'static Mutex<HashMap<u64, FittedConstants>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, FittedConstants>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Built-in constructors are hit repeatedly by tests and sweeps; cache the
/// deterministic fit per exact parameter set.
fn cached_fit(
    key_parts: &[u64],
    drift: &VectorField,
    diffusion: &VectorField,
    dim: usize,
    noise_dim: usize,
    gamma: f64,
) -> FittedConstants {
    let mut key = 0xcbf2_9ce4_8422_2325u64;
    for part in key_parts {
        key ^= *part;
        key = key.wrapping_mul(0x0000_0100_0000_01b3);
    }
    if let Some(hit) = fit_cache().lock().unwrap().get(&key) {
        return *hit;
    }
    let fit = fit_constants(
        drift.as_ref(),
        diffusion.as_ref(),
        dim,
        noise_dim,
        gamma,
        DEFAULT_P0,
        DEFAULT_P1,
        FIT_RADIUS,
        FIT_SAMPLES,
        FIT_SEED,
    );
    fit_cache().lock().unwrap().insert(key, fit);
    fit
}

fn finish_builtin(
    name: &str,
    linear: SpectralOperator,
    drift: VectorField,
    diffusion: VectorField,
    noise_dim: usize,
    initial: Vec<f64>,
    key_parts: &[u64],
) -> Result<SemiLinearModel> {
    let gamma = 3.0;
    let dim = linear.dim();
    let fit = cached_fit(key_parts, &drift, &diffusion, dim, noise_dim, gamma);
    let constants = fit.frozen(DEFAULT_P0, DEFAULT_P1);
    constants.validate()?;
    Ok(SemiLinearModel {
        name: name.into(),
        dim,
        noise_dim,
        linear,
        drift,
        diffusion,
        gamma,
        constants,
        initial,
    })
}

/// Scalar stochastic Ginzburg-Landau:
/// `dX = (-X^3 + (alpha + sigma^2/2) X) dt + sigma X dW`.
/// The linear part `alpha + sigma^2/2` must be negative.
pub fn ginzburg_landau(alpha: f64, sigma: f64, x0: f64) -> Result<SemiLinearModel> {
    let a = alpha + 0.5 * sigma * sigma;
    let linear = SpectralOperator::scalar(a)?;
    let drift: VectorField = Arc::new(|x, out| out[0] = -x[0] * x[0] * x[0]);
    let diffusion: VectorField = Arc::new(move |x, out| out[0] = sigma * x[0]);
    finish_builtin(
        "ginzburg_landau",
        linear,
        drift,
        diffusion,
        1,
        vec![x0],
        &[1, alpha.to_bits(), sigma.to_bits()],
    )
}

/// Scalar mean-reverting model with quadratic noise:
/// `dX = (b - alpha X - beta X^3) dt + sigma X^2 dW`, `alpha, beta > 0`.
pub fn mean_reverting(
    b: f64,
    alpha: f64,
    beta: f64,
    sigma: f64,
    x0: f64,
) -> Result<SemiLinearModel> {
    if !(alpha > 0.0) {
        return Err(Error::NotDissipative(format!(
            "alpha = {alpha} must be positive"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta = {beta} must be positive"
        )));
    }
    let linear = SpectralOperator::scalar(-alpha)?;
    let drift: VectorField = Arc::new(move |x, out| out[0] = b - beta * x[0] * x[0] * x[0]);
    let diffusion: VectorField = Arc::new(move |x, out| out[0] = sigma * x[0] * x[0]);
    finish_builtin(
        "mean_reverting",
        linear,
        drift,
        diffusion,
        1,
        vec![x0],
        &[
            2,
            b.to_bits(),
            alpha.to_bits(),
            beta.to_bits(),
            sigma.to_bits(),
        ],
    )
}

/// Finite-difference Allen-Cahn chain on `K-1` interior nodes:
/// `dU = (K^2 tridiag(1,-2,1) U + U - U.^3) dt + (sin(U) + 1) dW` with a
/// single shared Brownian motion and `U_0 = 1` at every node.
pub fn allen_cahn(k: usize) -> Result<SemiLinearModel> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "mesh parameter K = {k} must be >= 2"
        )));
    }
    let k2 = (k * k) as f64;
    let dim = k - 1;
    let linear = SpectralOperator::tridiagonal_toeplitz(-2.0 * k2, k2, dim)?;
    let drift: VectorField = Arc::new(|x, out| {
        for (o, &u) in out.iter_mut().zip(x) {
            *o = u - u * u * u;
        }
    });
    let diffusion: VectorField = Arc::new(|x, out| {
        for (o, &u) in out.iter_mut().zip(x) {
            *o = u.sin() + 1.0;
        }
    });
    finish_builtin(
        "allen_cahn",
        linear,
        drift,
        diffusion,
        1,
        vec![1.0; dim],
        &[3, k as u64],
    )
}
