//! One-step maps and step-size admissibility.
//!
//! The projected theta step advances `Y_n` by solving
//!
//! ```text
//! (I - theta h A) Y_{n+1} = P(Y_n) + (1 - theta) h A P(Y_n)
//!                           + h f(P(Y_n)) + g(P(Y_n)) dW_n
//! ```
//!
//! where `P` clips the state into the ball of radius `h^{-1/(2 gamma)}`.
//! The clip keeps every coefficient evaluation in a region where the
//! polynomial drift costs at most `O(h^{-1/2})` per step, which is what
//! keeps moments bounded under super-linear growth; the implicit shift on
//! the left absorbs the stiffness of `A`. The unprojected, fully explicit
//! Euler-Maruyama map is kept alongside as the divergence baseline.
//!
//! `max_stable_stepsize` evaluates the six admissibility bounds that the
//! contractivity analysis imposes on `h`; five are closed-form and one is
//! implicit in `h` and resolved by bisection.

use crate::error::{Error, Result};
use crate::linop::{self, ShiftedSolver};
use crate::model::SemiLinearModel;
use crate::paths::NoiseSource;

pub const DEFAULT_KAPPA: f64 = 0.5;
pub const DEFAULT_MOMENT_ORDER: f64 = 2.0;

/// Horizons up to this length record every step by default; longer runs
/// thin to [`LONG_RUN_STRIDE`].
pub const RECORD_ALL_HORIZON: f64 = 10.0;
pub const LONG_RUN_STRIDE: usize = 64;

const BISECT_TOL: f64 = 1e-12;

/// Step-level knobs shared by the stepper and the admissibility calculus.
///
/// `kappa` splits the monotonicity gap between the linear and nonlinear
/// contraction bounds; `p` is the moment order the bound must protect.
/// Neither affects the step map itself, only the admissible `h` range.
#[derive(Clone, Copy, Debug)]
pub struct SchemeParams {
    pub theta: f64,
    pub h: f64,
    pub kappa: f64,
    pub p: f64,
}

impl SchemeParams {
    pub fn new(theta: f64, h: f64) -> Result<Self> {
        Self::with_bound_knobs(theta, h, DEFAULT_KAPPA, DEFAULT_MOMENT_ORDER)
    }

    pub fn with_bound_knobs(theta: f64, h: f64, kappa: f64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!(
                "theta = {theta} must lie in [0, 1]"
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step size h = {h} must be positive"
            )));
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "kappa = {kappa} must lie in (0, 1)"
            )));
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "moment order p = {p} must be >= 1"
            )));
        }
        Ok(Self { theta, h, kappa, p })
    }
}

/// Which one-step map drives a simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Ltpe,
    EulerMaruyama,
}

/// Radius `h^{-1/(2 gamma)}` of the projection ball.
pub fn projection_radius(h: f64, gamma: f64) -> f64 {
    debug_assert!(h > 0.0 && gamma >= 1.0);
    h.powf(-1.0 / (2.0 * gamma))
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Clip `x` into the ball of radius `h^{-1/(2 gamma)}`, in place.
///
/// A vector that passes the entry test is returned untouched, so the map is
/// exactly idempotent: the rescale loop repeats until the squared norm
/// clears the same test, which one pass achieves up to a boundary ulp and a
/// forced strict shrink settles otherwise. The zero vector passes the entry
/// test, so the `1/||x||` factor is never formed at zero.
pub fn project_in_place(x: &mut [f64], h: f64, gamma: f64) {
    let r = projection_radius(h, gamma);
    let r2 = r * r;
    loop {
        let n2 = norm_sq(x);
        if !(n2 > r2) {
            // inside the ball; NaN input also lands here and stays as-is
            return;
        }
        if n2 == f64::INFINITY {
            // squared norm overflowed with finite entries: form the norm
            // through the largest component so the ratio sum stays in range,
            // scale straight to the radius, and re-test
            let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let q: f64 = x.iter().map(|v| (v / m) * (v / m)).sum();
            let s = (r / m) / q.sqrt();
            for v in x.iter_mut() {
                *v *= s;
            }
            continue;
        }
        let mut s = r / n2.sqrt();
        if s >= 1.0 {
            s = 1.0 - f64::EPSILON;
        }
        for v in x.iter_mut() {
            *v *= s;
        }
    }
}

pub fn project(x: &[f64], h: f64, gamma: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    project_in_place(&mut out, h, gamma);
    out
}

/// Full drift `F(x) = A x + f(x)`.
pub fn full_drift(model: &SemiLinearModel, x: &[f64], out: &mut [f64]) -> Result<()> {
    linop::apply(model.linear(), x, out)?;
    let mut f = vec![0.0; model.dim()];
    model.drift(x, &mut f);
    for (o, fi) in out.iter_mut().zip(&f) {
        *o += fi;
    }
    Ok(())
}

/// Reusable projected-theta stepper: owns the scratch for one state's worth
/// of coefficient evaluations and counts the steps it has taken, so a
/// failure reports the exact step index.
pub struct LtpeStepper<'m> {
    model: &'m SemiLinearModel,
    solver: &'m ShiftedSolver,
    params: SchemeParams,
    count: usize,
    proj: Vec<f64>,
    a_proj: Vec<f64>,
    f_proj: Vec<f64>,
    g_proj: Vec<f64>,
    rhs: Vec<f64>,
}

impl<'m> LtpeStepper<'m> {
    pub fn new(
        model: &'m SemiLinearModel,
        params: SchemeParams,
        solver: &'m ShiftedSolver,
    ) -> Result<Self> {
        if solver.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: solver.dim(),
            });
        }
        if solver.theta() != params.theta || solver.h() != params.h {
            return Err(Error::InvalidParameter(format!(
                "solver factored for (theta, h) = ({}, {}), step asked for ({}, {})",
                solver.theta(),
                solver.h(),
                params.theta,
                params.h
            )));
        }
        let d = model.dim();
        Ok(Self {
            model,
            solver,
            params,
            count: 0,
            proj: vec![0.0; d],
            a_proj: vec![0.0; d],
            f_proj: vec![0.0; d],
            g_proj: vec![0.0; d * model.noise_dim()],
            rhs: vec![0.0; d],
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.count
    }

    /// One step `y -> out` with noise increment `dw`.
    pub fn step(&mut self, y: &[f64], dw: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.model.dim();
        debug_assert_eq!(y.len(), d);
        debug_assert_eq!(dw.len(), self.model.noise_dim());
        debug_assert_eq!(out.len(), d);
        let index = self.count;
        self.proj.copy_from_slice(y);
        project_in_place(&mut self.proj, self.params.h, self.model.gamma());
        linop::apply(self.model.linear(), &self.proj, &mut self.a_proj)?;
        self.model.drift(&self.proj, &mut self.f_proj);
        self.model.diffusion(&self.proj, &mut self.g_proj);
        let c = (1.0 - self.params.theta) * self.params.h;
        for i in 0..d {
            self.rhs[i] = self.proj[i] + c * self.a_proj[i] + self.params.h * self.f_proj[i];
        }
        self.model.apply_noise(&self.g_proj, dw, &mut self.rhs);
        // one finiteness gate on the assembled input covers f, g and dW;
        // the solve of a finite right-hand side is finite by nonsingularity
        if self.rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepFailure { step: index });
        }
        self.solver.solve_into(&self.rhs, out)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepFailure { step: index });
        }
        self.count += 1;
        Ok(())
    }
}

/// One projected-theta step. Convenience wrapper over [`LtpeStepper`] for
/// callers without a loop; a failure here always reports step 0.
pub fn ltpe_step(
    model: &SemiLinearModel,
    params: SchemeParams,
    solver: &ShiftedSolver,
    y: &[f64],
    dw: &[f64],
) -> Result<Vec<f64>> {
    if y.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: y.len(),
        });
    }
    if dw.len() != model.noise_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.noise_dim(),
            got: dw.len(),
        });
    }
    let mut stepper = LtpeStepper::new(model, params, solver)?;
    let mut out = vec![0.0; model.dim()];
    stepper.step(y, dw, &mut out)?;
    Ok(out)
}

/// Euler-Maruyama stepper: `y + h (A y + f(y)) + g(y) dW`, no projection,
/// no implicitness. Exploding iterates are the expected, reported outcome
/// for super-linear drifts at fixed `h`.
pub struct EmStepper<'m> {
    model: &'m SemiLinearModel,
    h: f64,
    count: usize,
    a_y: Vec<f64>,
    f_y: Vec<f64>,
    g_y: Vec<f64>,
}

impl<'m> EmStepper<'m> {
    pub fn new(model: &'m SemiLinearModel, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step size h = {h} must be positive"
            )));
        }
        let d = model.dim();
        Ok(Self {
            model,
            h,
            count: 0,
            a_y: vec![0.0; d],
            f_y: vec![0.0; d],
            g_y: vec![0.0; d * model.noise_dim()],
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.count
    }

    pub fn step(&mut self, y: &[f64], dw: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.model.dim();
        debug_assert_eq!(y.len(), d);
        debug_assert_eq!(dw.len(), self.model.noise_dim());
        debug_assert_eq!(out.len(), d);
        let index = self.count;
        linop::apply(self.model.linear(), y, &mut self.a_y)?;
        self.model.drift(y, &mut self.f_y);
        self.model.diffusion(y, &mut self.g_y);
        for i in 0..d {
            out[i] = y[i] + self.h * (self.a_y[i] + self.f_y[i]);
        }
        self.model.apply_noise(&self.g_y, dw, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepFailure { step: index });
        }
        self.count += 1;
        Ok(())
    }
}

/// One Euler-Maruyama step; failures report step 0, as in [`ltpe_step`].
pub fn em_step(model: &SemiLinearModel, h: f64, y: &[f64], dw: &[f64]) -> Result<Vec<f64>> {
    if y.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: y.len(),
        });
    }
    if dw.len() != model.noise_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.noise_dim(),
            got: dw.len(),
        });
    }
    let mut stepper = EmStepper::new(model, h)?;
    let mut out = vec![0.0; model.dim()];
    stepper.step(y, dw, &mut out)?;
    Ok(out)
}

/// The six admissibility bounds and their minimum.
///
/// `gap1 = 2 lambda_1 - L1` and `gap2 = 2 lambda_1 - L2` are the coercivity
/// and monotonicity margins; only the second enters the bounds, so only it
/// is required to be positive. A non-positive `gap1` is surfaced for the
/// caller to report, never hidden.
#[derive(Clone, Debug)]
pub struct StepBounds {
    pub h_max: f64,
    /// Name of the bound attained at `h_max`.
    pub binding: &'static str,
    /// All six candidates; the implicit one is evaluated at `h_max`.
    pub candidates: [(&'static str, f64); 6],
    pub gap1: f64,
    pub gap2: f64,
}

fn check_bound_knobs(model: &SemiLinearModel, theta: f64, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!(
            "theta = {theta} must lie in [0, 1]"
        )));
    }
    let p0 = model.constants().p0;
    if !(p >= 1.0 && p < p0) {
        return Err(Error::InvalidParameter(format!(
            "moment order p = {p} must satisfy 1 <= p < p0 = {p0}"
        )));
    }
    Ok(())
}

/// `1/0 := +inf`: at `theta = 1` the bounds with a `(1 - theta)` factor in
/// the denominator impose nothing.
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

fn kappa_free_bounds(model: &SemiLinearModel, theta: f64, p: f64) -> (f64, f64, f64) {
    let lam1 = model.linear().lambda_min();
    let lam_d = model.linear().lambda_max();
    let p0 = model.constants().p0;
    let one_m = 1.0 - theta;
    let b1 = ratio(1.0, 2.0 * one_m * lam1);
    let b2 = ratio(p0 - p, one_m * (2.0 * p0 - p - 1.0) * lam1);
    let b3 = ratio(1.0, one_m * lam_d);
    (b1, b2, b3)
}

/// Largest step size for which the moment bounds are guaranteed:
/// `min{b1, b2, b3, 1}` over the kappa-free bounds.
pub fn moment_step_bound(model: &SemiLinearModel, theta: f64, p: f64) -> Result<f64> {
    check_bound_knobs(model, theta, p)?;
    let (b1, b2, b3) = kappa_free_bounds(model, theta, p);
    Ok(b1.min(b2).min(b3).min(1.0))
}

/// Largest admissible step size under all six bounds.
///
/// Five bounds are closed-form; the nonlinear-contraction bound depends on
/// `h` through `lambda_f = C1 (1 + 2 sqrt(h))` and is resolved by bisecting
/// `h <= cap(h)` (the cap is decreasing in `h`, so the crossing is unique)
/// to absolute tolerance 1e-12.
pub fn max_stable_stepsize(
    model: &SemiLinearModel,
    theta: f64,
    p: f64,
    kappa: f64,
) -> Result<StepBounds> {
    check_bound_knobs(model, theta, p)?;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "kappa = {kappa} must lie in (0, 1)"
        )));
    }
    let (gap1, gap2) = crate::model::dissipativity_gap(model);
    if !(gap2 > 0.0) {
        return Err(Error::NotDissipative(format!(
            "monotonicity margin 2 lambda_1 - L2 = {gap2:.6e} must be positive"
        )));
    }
    let lam_d = model.linear().lambda_max();
    let c = model.constants();
    let g = model.gamma();
    let one_m = 1.0 - theta;
    let (b1, b2, b3) = kappa_free_bounds(model, theta, p);
    let b4 = ratio(kappa * kappa * gap2, one_m * one_m * lam_d * lam_d);
    let cap5 = |h: f64| {
        let lam_f = c.c1 * (1.0 + 2.0 * h.sqrt());
        (1.0 - kappa).powf(2.0 * g) * gap2.powf(g) / lam_f.powf(2.0 * g)
    };

    let named = [
        ("linear-decay", b1),
        ("moment-order", b2),
        ("stiffness-cap", b3),
        ("linear-contraction", b4),
    ];
    let mut h_cap = 1.0;
    let mut binding = "unit-cap";
    for (name, value) in named {
        if value < h_cap {
            h_cap = value;
            binding = name;
        }
    }
    let (h_max, binding) = if h_cap <= cap5(h_cap) {
        (h_cap, binding)
    } else {
        // invariant: lo <= cap5(lo), hi > cap5(hi)
        let (mut lo, mut hi) = (0.0f64, h_cap);
        while hi - lo > BISECT_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= cap5(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, "nonlinear-contraction")
    };
    if !(h_max > 0.0) {
        return Err(Error::NoAdmissibleStep(format!(
            "all candidate bounds collapse to zero (gap2 = {gap2:.6e})"
        )));
    }
    Ok(StepBounds {
        h_max,
        binding,
        candidates: [
            ("linear-decay", b1),
            ("moment-order", b2),
            ("stiffness-cap", b3),
            ("linear-contraction", b4),
            ("nonlinear-contraction", cap5(h_max)),
            ("unit-cap", 1.0),
        ],
        gap1,
        gap2,
    })
}

/// Error unless `params.h` is within the admissible range for `model`.
pub fn ensure_admissible(model: &SemiLinearModel, params: SchemeParams) -> Result<StepBounds> {
    let bounds = max_stable_stepsize(model, params.theta, params.p, params.kappa)?;
    if params.h > bounds.h_max {
        return Err(Error::StepTooLarge {
            h: params.h,
            h_max: bounds.h_max,
            binding: bounds.binding.to_string(),
        });
    }
    Ok(bounds)
}

/// States recorded along one path, a row per recorded time.
#[derive(Clone, Debug)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.times.len() - 1)
    }
}

/// Every step for short horizons, thinned recording beyond.
pub fn default_stride(t_horizon: f64) -> usize {
    if t_horizon <= RECORD_ALL_HORIZON {
        1
    } else {
        LONG_RUN_STRIDE
    }
}

/// Iterate the projected theta step over all increments of `noise`,
/// recording every `stride`-th state plus the initial and final ones.
pub fn simulate_path(
    model: &SemiLinearModel,
    params: SchemeParams,
    solver: &ShiftedSolver,
    y0: &[f64],
    noise: &dyn NoiseSource,
    stride: Option<usize>,
) -> Result<Trajectory> {
    let d = model.dim();
    if y0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: y0.len(),
        });
    }
    if noise.noise_dim() != model.noise_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.noise_dim(),
            got: noise.noise_dim(),
        });
    }
    let h = params.h;
    if (noise.h() - h).abs() > 1e-9 * h.max(noise.h()) {
        return Err(Error::GridMismatch(format!(
            "noise grid step {} differs from scheme step {h}",
            noise.h()
        )));
    }
    let n_steps = noise.n_steps();
    let stride = stride.unwrap_or_else(|| default_stride(n_steps as f64 * h));
    if stride == 0 {
        return Err(Error::InvalidParameter(
            "recording stride must be positive".into(),
        ));
    }

    let mut stepper = LtpeStepper::new(model, params, solver)?;
    let mut y = y0.to_vec();
    let mut y_next = vec![0.0; d];
    let mut dw = vec![0.0; model.noise_dim()];
    let recorded = n_steps / stride + 2;
    let mut times = Vec::with_capacity(recorded);
    let mut states = Vec::with_capacity(recorded * d);
    times.push(0.0);
    states.extend_from_slice(&y);
    for n in 0..n_steps {
        noise.fill(n, &mut dw);
        stepper.step(&y, &dw, &mut y_next)?;
        std::mem::swap(&mut y, &mut y_next);
        let k = n + 1;
        if k % stride == 0 || k == n_steps {
            times.push(k as f64 * h);
            states.extend_from_slice(&y);
        }
    }
    Ok(Trajectory {
        dim: d,
        times,
        states,
    })
}

/// Shifted state `z = y - theta h A y` whose piecewise dynamics between
/// grid points is driven by the frozen coefficients `F(P(Y_n))`, `g(P(Y_n))`.
pub fn lifted_state(model: &SemiLinearModel, theta: f64, h: f64, y: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; model.dim()];
    linop::apply_shifted(model.linear(), theta, h, y, &mut out)?;
    Ok(out)
}
