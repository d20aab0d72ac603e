//! Command-line front end: flags or a JSON config file, one command per
//! run, CSV artifacts plus a short stdout summary.
//!
//! Exit codes: 0 on success, 1 for configuration or runtime errors, 2 when
//! a check ran cleanly but its verdict failed. Flags override file values;
//! the thread count only picks the worker pool and never changes output
//! bytes.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use crate::config::{resolve, CommandKind, Entry, RawConfig, ResolvedConfig};
use crate::error::{Error, Result};
use crate::estimate::{
    density_distance, empirical_density, endpoint_samples, fit_rate, weak_error_sweep,
};
use crate::linop::ShiftedSolver;
use crate::model::dissipativity_gap;
use crate::output::{
    self, fmt_float, fmt_step, DensityRow, Header, MomentsRow, TrajectoryRow, VerifyRow,
    WeakErrorRow,
};
use crate::paths::BrownianGrid;
use crate::scheme::{max_stable_stepsize, simulate_path, Method, SchemeParams};
use crate::svg::{error_plot, Series};
use crate::verify::{contractivity_decay, holder_check, moment_trajectory, MomentVerdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VERDICT: i32 = 2;

/// Interior refinement of the Hölder probe's single macro step.
pub const HOLDER_SUB_STEPS: usize = 16;

#[derive(Parser, Debug)]
#[command(
    name = "ltpe",
    about = "Projected linear-implicit theta-Euler experiments on dissipative SDE models",
    disable_help_subcommand = true
)]
pub struct Cli {
    /// check | simulate | weak-error | density | contract | moments | holder
    pub command: String,

    /// JSON config file; explicit flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Built-in model name
    #[arg(long)]
    pub model: Option<String>,

    /// Repeatable model parameter override, e.g. --model-param alpha=-1.5
    #[arg(long = "model-param", value_name = "KEY=VALUE")]
    pub model_param: Vec<String>,

    /// Implicitness, in [0,1]; the density command accepts a comma list
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<String>,

    /// Step size or comma ladder; accepts 2^-k literals
    #[arg(long)]
    pub h: Option<String>,

    /// Reference step for weak-error runs
    #[arg(long = "h-ref")]
    pub h_ref: Option<String>,

    /// Run the weak-error reference with a different theta
    #[arg(long = "ref-theta")]
    pub ref_theta: Option<String>,

    /// Time horizon
    #[arg(long = "T")]
    pub t_horizon: Option<f64>,

    /// Trajectory count
    #[arg(long = "M")]
    pub trajectories: Option<u64>,

    /// Test functions: comma list or "all"
    #[arg(long)]
    pub phi: Option<String>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Output CSV path
    #[arg(long)]
    pub out: Option<String>,

    /// Also render an SVG convergence plot next to the CSV
    #[arg(long)]
    pub svg: bool,

    /// Worker threads (results are independent of this)
    #[arg(long)]
    pub threads: Option<u64>,

    /// Run an inadmissible step anyway; a warning lands in the output header
    #[arg(long = "force-h")]
    pub force_h: bool,

    /// Projection tuning constant in (0,1)
    #[arg(long)]
    pub kappa: Option<f64>,

    /// Moment order for bounds, moments and holder runs
    #[arg(long)]
    pub p: Option<f64>,

    /// Fraction of the horizon excluded from decay fits
    #[arg(long = "burn-in")]
    pub burn_in: Option<f64>,

    /// Histogram bin count for density runs
    #[arg(long)]
    pub bins: Option<u64>,

    /// First start of the contraction pair (comma components)
    #[arg(long = "x0-a", value_delimiter = ',', allow_hyphen_values = true)]
    pub x0_a: Option<Vec<f64>>,

    /// Second start of the contraction pair
    #[arg(long = "x0-b", value_delimiter = ',', allow_hyphen_values = true)]
    pub x0_b: Option<Vec<f64>>,
}

impl Cli {
    fn raw(&self) -> Result<RawConfig> {
        let mut model_params = std::collections::BTreeMap::new();
        for pair in &self.model_param {
            let Some((key, value)) = pair.split_once('=') else {
                return Err(Error::Config(vec![format!(
                    "--model-param '{pair}' is not KEY=VALUE"
                )]));
            };
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::Config(vec![format!("--model-param {key}: bad number '{value}'")])
            })?;
            model_params.insert(key.trim().to_string(), value);
        }
        Ok(RawConfig {
            command: Some(self.command.clone()),
            model: self.model.clone(),
            model_params,
            theta: self.theta.clone().map(Entry::Text),
            h: self.h.clone().map(Entry::Text),
            h_ref: self.h_ref.clone().map(Entry::Text),
            ref_theta: self.ref_theta.clone().map(Entry::Text),
            t_horizon: self.t_horizon,
            trajectories: self.trajectories,
            phi: self.phi.clone(),
            seed: self.seed,
            out: self.out.clone(),
            kappa: self.kappa,
            p: self.p,
            burn_in: self.burn_in,
            bins: self.bins,
            x0_a: self.x0_a.clone(),
            x0_b: self.x0_b.clone(),
            force_h: self.force_h.then_some(true),
            svg: self.svg.then_some(true),
            threads: self.threads,
        })
    }
}

/// Full program: parse, resolve, run. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_CONFIG,
            };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(Error::Config(list)) => {
            for line in list {
                eprintln!("config error: {line}");
            }
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let file = match &cli.config {
        None => RawConfig::default(),
        Some(path) => RawConfig::from_json(&std::fs::read_to_string(path)?)?,
    };
    let raw = cli.raw()?.over(file);
    let cfg = resolve(&raw)?;
    match cfg.threads {
        None => dispatch(&cfg),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(&cfg))
        }
    }
}

fn dispatch(cfg: &ResolvedConfig) -> Result<i32> {
    match cfg.command {
        CommandKind::Check => run_check(cfg),
        CommandKind::Simulate => run_simulate(cfg),
        CommandKind::WeakError => run_weak_error(cfg),
        CommandKind::Density => run_density(cfg),
        CommandKind::Contract => run_contract(cfg),
        CommandKind::Moments => run_moments(cfg),
        CommandKind::Holder => run_holder(cfg),
    }
}

fn scheme_params(cfg: &ResolvedConfig) -> Result<SchemeParams> {
    SchemeParams::with_bound_knobs(cfg.theta[0], cfg.h[0], cfg.kappa, cfg.moment_order)
}

fn run_check(cfg: &ResolvedConfig) -> Result<i32> {
    let model = cfg.build_model()?;
    let c = model.constants();
    println!(
        "model={} dim={} noise_dim={} gamma={}",
        model.name(),
        model.dim(),
        model.noise_dim(),
        fmt_float(model.gamma())
    );
    println!(
        "constants L1={} L2={} C1={} C2={} p0={} p1={}",
        fmt_float(c.l1),
        fmt_float(c.l2),
        fmt_float(c.c1),
        fmt_float(c.c2),
        fmt_float(c.p0),
        fmt_float(c.p1)
    );
    let (g1, g2) = dissipativity_gap(&model);
    println!("gaps 2l1-L1={} 2l1-L2={}", fmt_float(g1), fmt_float(g2));
    let theta = cfg.theta[0];
    let bounds = match max_stable_stepsize(&model, theta, cfg.moment_order, cfg.kappa) {
        Ok(b) => b,
        Err(Error::NotDissipative(msg)) => {
            println!("verdict=not-dissipative ({msg})");
            return Ok(EXIT_VERDICT);
        }
        Err(e) => return Err(e),
    };
    println!(
        "theta={} h_max={} binding={}",
        fmt_float(theta),
        fmt_float(bounds.h_max),
        bounds.binding
    );
    for (name, value) in bounds.candidates {
        println!("  bound {name}={}", fmt_float(value));
    }
    for &h in &cfg.h {
        let fits = h <= bounds.h_max;
        println!("h={} admissible={}", fmt_step(h), fits);
    }
    Ok(EXIT_OK)
}

fn run_simulate(cfg: &ResolvedConfig) -> Result<i32> {
    let model = cfg.build_model()?;
    let params = scheme_params(cfg)?;
    let solver = ShiftedSolver::new(model.linear(), params.theta, params.h)?;
    let noise =
        BrownianGrid::for_trajectory(cfg.seed, 0, model.noise_dim(), cfg.t_horizon, params.h)?;
    let traj = simulate_path(&model, params, &solver, model.initial(), &noise, None)?;
    let mut rows = Vec::with_capacity(traj.len() * traj.dim());
    for i in 0..traj.len() {
        let t = traj.time(i);
        let step = (t / params.h).round() as usize;
        for (component, &value) in traj.state(i).iter().enumerate() {
            rows.push(TrajectoryRow {
                model: model.name(),
                theta: params.theta,
                h: params.h,
                seed: cfg.seed,
                step,
                t,
                component,
                value,
            });
        }
    }
    let line = cfg.canonical_line();
    let header = Header {
        config: &line,
        warning: cfg.warning.as_deref(),
    };
    output::write_text(&cfg.out, &output::trajectory_csv(&header, &rows))?;
    println!(
        "wrote {} ({} recorded states, final |y|={})",
        cfg.out.display(),
        traj.len(),
        fmt_float(traj.last().iter().map(|v| v * v).sum::<f64>().sqrt())
    );
    Ok(EXIT_OK)
}

fn run_weak_error(cfg: &ResolvedConfig) -> Result<i32> {
    let model = cfg.build_model()?;
    let base = scheme_params(cfg)?;
    let points = weak_error_sweep(
        &model,
        base,
        &cfg.h,
        cfg.h_ref,
        cfg.ref_theta,
        cfg.t_horizon,
        cfg.trajectories,
        &cfg.phi,
        cfg.seed,
    )?;
    let mut rows = Vec::with_capacity(points.len() * cfg.phi.len());
    for point in &points {
        for (j, phi) in cfg.phi.iter().enumerate() {
            rows.push(WeakErrorRow {
                model: model.name(),
                theta: base.theta,
                phi: phi.name(),
                h: point.h,
                h_ref: cfg.h_ref,
                t_horizon: cfg.t_horizon,
                m: cfg.trajectories,
                seed: cfg.seed,
                error: point.errors[j],
                half_width: point.half_widths[j],
            });
        }
    }
    let line = cfg.canonical_line();
    let header = Header {
        config: &line,
        warning: cfg.warning.as_deref(),
    };
    output::write_text(&cfg.out, &output::weak_error_csv(&header, &rows))?;

    for (j, phi) in cfg.phi.iter().enumerate() {
        let curve: Vec<(f64, f64)> = points
            .iter()
            .map(|p| (p.h, p.errors[j]))
            .filter(|&(_, e)| e > 0.0)
            .collect();
        match fit_rate(&curve) {
            Ok(fit) => println!(
                "phi={} slope={} r2={}",
                phi.name(),
                fmt_float(fit.slope),
                fmt_float(fit.r2)
            ),
            Err(_) => println!("phi={} slope=n/a (too few positive errors)", phi.name()),
        }
    }
    if cfg.svg {
        let series: Vec<Series> = cfg
            .phi
            .iter()
            .enumerate()
            .map(|(j, phi)| Series {
                label: phi.name().to_string(),
                points: points
                    .iter()
                    .map(|p| (p.h, p.errors[j]))
                    .filter(|&(_, e)| e > 0.0)
                    .collect(),
            })
            .filter(|s| !s.points.is_empty())
            .collect();
        let svg_path = cfg.out.with_extension("svg");
        let title = format!(
            "weak error, {} theta={}",
            model.name(),
            fmt_float(base.theta)
        );
        output::write_text(&svg_path, &error_plot(&title, &series)?)?;
        println!("wrote {}", svg_path.display());
    }
    println!("wrote {}", cfg.out.display());
    Ok(EXIT_OK)
}

/// Output path for one theta of a sweep: `density.csv` plus theta 0.5 turns
/// into `density-theta0.5.csv`; a single theta keeps the path untouched.
fn theta_path(base: &std::path::Path, theta: f64, many: bool) -> PathBuf {
    if !many {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    base.with_file_name(format!("{stem}-theta{}.{ext}", fmt_float(theta)))
}

fn run_density(cfg: &ResolvedConfig) -> Result<i32> {
    let model = cfg.build_model()?;
    let h = cfg.h[0];
    let many = cfg.theta.len() > 1;
    let mut curves = Vec::with_capacity(cfg.theta.len());
    let line = cfg.canonical_line();
    let header = Header {
        config: &line,
        warning: cfg.warning.as_deref(),
    };
    for &theta in &cfg.theta {
        let params = SchemeParams::with_bound_knobs(theta, h, cfg.kappa, cfg.moment_order)?;
        let samples = endpoint_samples(&model, params, cfg.trajectories, cfg.t_horizon, cfg.seed)?;
        let curve = empirical_density(&samples, cfg.bins)?;
        let rows: Vec<DensityRow> = (0..curve.bins())
            .map(|b| DensityRow {
                model: model.name(),
                theta,
                h,
                t_horizon: cfg.t_horizon,
                m: cfg.trajectories,
                seed: cfg.seed,
                bin_left: curve.edges[b],
                bin_right: curve.edges[b + 1],
                height: curve.heights[b],
            })
            .collect();
        let path = theta_path(&cfg.out, theta, many);
        output::write_text(&path, &output::density_csv(&header, &rows))?;
        println!("wrote {}", path.display());
        curves.push((theta, curve));
    }
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let d = density_distance(&curves[i].1, &curves[j].1);
            println!(
                "L1 theta={} vs theta={}: {}",
                fmt_float(curves[i].0),
                fmt_float(curves[j].0),
                fmt_float(d)
            );
        }
    }
    Ok(EXIT_OK)
}

fn run_contract(cfg: &ResolvedConfig) -> Result<i32> {
    let model = cfg.build_model()?;
    let params = scheme_params(cfg)?;
    let a: Vec<f64> = cfg.x0_a.clone().unwrap_or_else(|| model.initial().to_vec());
    let b: Vec<f64> = cfg
        .x0_b
        .clone()
        .unwrap_or_else(|| model.initial().iter().map(|v| v + 1.0).collect());
    let fit = contractivity_decay(
        &model,
        params,
        &a,
        &b,
        cfg.t_horizon,
        cfg.trajectories,
        cfg.burn_in,
        cfg.seed,
    )?;
    let contractive = fit.contractive();
    let verdict = if contractive {
        "contractive"
    } else {
        "not-contractive"
    };
    let rows = [VerifyRow {
        check: "contract",
        model: model.name(),
        theta: params.theta,
        h: params.h,
        param_p: cfg.moment_order,
        verdict,
        fitted_value: fit.rate,
        r2: fit.r2,
        seed: cfg.seed,
    }];
    let line = cfg.canonical_line();
    let header = Header {
        config: &line,
        warning: cfg.warning.as_deref(),
    };
    output::write_text(&cfg.out, &output::verify_csv(&header, &rows))?;
    println!(
        "verdict={verdict} rate={} r2={} (wrote {})",
        fmt_float(fit.rate),
        fmt_float(fit.r2),
        cfg.out.display()
    );
    Ok(if contractive { EXIT_OK } else { EXIT_VERDICT })
}

fn run_moments(cfg: &ResolvedConfig) -> Result<i32> {
    let model = cfg.build_model()?;
    let params = scheme_params(cfg)?;
    let run = moment_trajectory(
        &model,
        params,
        cfg.moment_order,
        cfg.t_horizon,
        cfg.trajectories,
        Method::Ltpe,
        None,
        cfg.seed,
    )?;
    let rows: Vec<MomentsRow> = run
        .times
        .iter()
        .zip(&run.means)
        .map(|(&t, &mean)| MomentsRow {
            model: model.name(),
            theta: params.theta,
            h: params.h,
            p: cfg.moment_order,
            step: (t / params.h).round() as usize,
            t,
            mean_norm_2p: mean,
        })
        .collect();
    let line = cfg.canonical_line();
    let header = Header {
        config: &line,
        warning: cfg.warning.as_deref(),
    };
    output::write_text(&cfg.out, &output::moments_csv(&header, &rows))?;
    println!(
        "verdict={} (wrote {})",
        run.verdict.label(),
        cfg.out.display()
    );
    Ok(if run.verdict == MomentVerdict::Bounded {
        EXIT_OK
    } else {
        EXIT_VERDICT
    })
}

fn run_holder(cfg: &ResolvedConfig) -> Result<i32> {
    let model = cfg.build_model()?;
    let params = scheme_params(cfg)?;
    let report = holder_check(
        &model,
        params,
        cfg.moment_order,
        HOLDER_SUB_STEPS,
        cfg.trajectories,
        cfg.seed,
    )?;
    let holds = report.holds();
    let verdict = if holds { "holds" } else { "fails" };
    let rows = [VerifyRow {
        check: "holder",
        model: model.name(),
        theta: params.theta,
        h: params.h,
        param_p: report.order,
        verdict,
        fitted_value: report.slope,
        r2: report.r2,
        seed: cfg.seed,
    }];
    let line = cfg.canonical_line();
    let header = Header {
        config: &line,
        warning: cfg.warning.as_deref(),
    };
    output::write_text(&cfg.out, &output::verify_csv(&header, &rows))?;
    println!(
        "verdict={verdict} slope={} r2={} (wrote {})",
        fmt_float(report.slope),
        fmt_float(report.r2),
        cfg.out.display()
    );
    Ok(if holds { EXIT_OK } else { EXIT_VERDICT })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn flag_vector_maps_onto_the_raw_config() {
        let cli = Cli::try_parse_from(args(
            "ltpe weak-error --model ginzburg_landau --theta 0 --h 2^-6,2^-7 \
             --h-ref 2^-12 --T 5 --M 100 --phi gauss --seed 7 --out x.csv \
             --model-param alpha=-1.5 --force-h",
        ))
        .unwrap();
        let raw = cli.raw().unwrap();
        assert_eq!(raw.command.as_deref(), Some("weak-error"));
        assert_eq!(raw.model_params.get("alpha"), Some(&-1.5));
        assert_eq!(raw.force_h, Some(true));
        assert_eq!(raw.svg, None, "unset flags must not override file values");
        assert_eq!(raw.trajectories, Some(100));
    }

    #[test]
    fn bad_flags_exit_with_config_code() {
        assert_eq!(run(args("ltpe")), EXIT_CONFIG);
        assert_eq!(
            run(args("ltpe frobnicate --model ginzburg_landau")),
            EXIT_CONFIG
        );
        assert_eq!(
            run(args("ltpe moments --model ginzburg_landau")),
            EXIT_CONFIG
        );
        assert_eq!(
            run(args(
                "ltpe moments --model ginzburg_landau --h 2^-6 --model-param oops"
            )),
            EXIT_CONFIG
        );
    }

    #[test]
    fn theta_paths_mangle_only_sweeps() {
        let base = PathBuf::from("out/density.csv");
        assert_eq!(theta_path(&base, 0.5, false), base);
        assert_eq!(
            theta_path(&base, 0.5, true),
            PathBuf::from("out/density-theta0.5.csv")
        );
        assert_eq!(
            theta_path(&base, 0.0, true),
            PathBuf::from("out/density-theta0.csv")
        );
    }
}
