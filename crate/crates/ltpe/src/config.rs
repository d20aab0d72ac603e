//! Experiment configuration: a sparse raw layer (JSON file or flags) and a
//! fully resolved layer every run actually executes.
//!
//! Resolution fills documented defaults, aggregates every complaint into one
//! error list instead of failing fast, and checks step admissibility against
//! the model's stability bounds. The resolved config renders to a canonical
//! single line that report headers echo verbatim; the thread count is
//! deliberately not part of it, since scheduling never changes results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimate::TestFunction;
use crate::model::{allen_cahn, ginzburg_landau, mean_reverting, SemiLinearModel};
use crate::output::{fmt_float, fmt_step};
use crate::scheme::{max_stable_stepsize, DEFAULT_KAPPA, DEFAULT_MOMENT_ORDER};
use crate::verify::DECAY_BURN_FRACTION;

pub const DEFAULT_H_REF: f64 = 1.0 / 4096.0;
/// Finest reference grid the estimators accept.
pub const FINEST_H_REF: f64 = 1.0 / 16384.0;
pub const DEFAULT_HORIZON: f64 = 5.0;
pub const DEFAULT_TRAJECTORIES: usize = 10_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_BINS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    Check,
    Simulate,
    WeakError,
    Density,
    Contract,
    Moments,
    Holder,
}

pub const COMMAND_NAMES: [&str; 7] = [
    "check",
    "simulate",
    "weak-error",
    "density",
    "contract",
    "moments",
    "holder",
];

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Check => "check",
            Self::Simulate => "simulate",
            Self::WeakError => "weak-error",
            Self::Density => "density",
            Self::Contract => "contract",
            Self::Moments => "moments",
            Self::Holder => "holder",
        }
    }

    /// Commands that integrate in time and therefore need a step size.
    fn steps(self) -> bool {
        self != Self::Check
    }
}

impl FromStr for CommandKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "check" => Ok(Self::Check),
            "simulate" => Ok(Self::Simulate),
            "weak-error" => Ok(Self::WeakError),
            "density" => Ok(Self::Density),
            "contract" => Ok(Self::Contract),
            "moments" => Ok(Self::Moments),
            "holder" => Ok(Self::Holder),
            other => Err(Error::InvalidParameter(format!(
                "unknown command '{other}' (expected one of {})",
                COMMAND_NAMES.join(", ")
            ))),
        }
    }
}

/// A number, a numeric string, or a list of either; strings may use the
/// exact `2^-k` literal form.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Num(f64),
    Text(String),
    List(Vec<Entry>),
}

/// Parse one token, accepting `2^k` literals next to plain decimals.
pub fn parse_scalar(token: &str) -> Result<f64> {
    let t = token.trim();
    if let Some(exp) = t.strip_prefix("2^") {
        let k: i32 = exp
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad power-of-two literal '{t}'")))?;
        if !(-1074..=1023).contains(&k) {
            return Err(Error::InvalidParameter(format!(
                "exponent out of range in '{t}'"
            )));
        }
        return Ok(2.0f64.powi(k));
    }
    t.parse::<f64>()
        .map_err(|_| Error::InvalidParameter(format!("cannot parse number '{t}'")))
}

/// Flatten an entry into scalars; text splits on commas.
pub fn parse_list(entry: &Entry) -> Result<Vec<f64>> {
    match entry {
        Entry::Num(x) => Ok(vec![*x]),
        Entry::Text(s) => s.split(',').map(parse_scalar).collect(),
        Entry::List(items) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Entry::Num(x) => out.push(*x),
                    Entry::Text(s) => out.push(parse_scalar(s)?),
                    Entry::List(_) => {
                        return Err(Error::InvalidParameter("nested list in config".into()))
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Sparse configuration as read from a JSON file or assembled from flags.
/// Unknown keys are rejected so typos surface instead of silently using a
/// default.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub command: Option<String>,
    pub model: Option<String>,
    #[serde(default)]
    pub model_params: BTreeMap<String, f64>,
    pub theta: Option<Entry>,
    pub h: Option<Entry>,
    pub h_ref: Option<Entry>,
    pub ref_theta: Option<Entry>,
    #[serde(rename = "T")]
    pub t_horizon: Option<f64>,
    #[serde(rename = "M")]
    pub trajectories: Option<u64>,
    pub phi: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub kappa: Option<f64>,
    pub p: Option<f64>,
    pub burn_in: Option<f64>,
    pub bins: Option<u64>,
    pub x0_a: Option<Vec<f64>>,
    pub x0_b: Option<Vec<f64>>,
    pub force_h: Option<bool>,
    pub svg: Option<bool>,
    pub threads: Option<u64>,
}

impl RawConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("config file: {e}")]))
    }

    /// Field-wise override; `self` wins where set (flags over file).
    pub fn over(self, base: RawConfig) -> RawConfig {
        let mut model_params = base.model_params;
        model_params.extend(self.model_params);
        RawConfig {
            command: self.command.or(base.command),
            model: self.model.or(base.model),
            model_params,
            theta: self.theta.or(base.theta),
            h: self.h.or(base.h),
            h_ref: self.h_ref.or(base.h_ref),
            ref_theta: self.ref_theta.or(base.ref_theta),
            t_horizon: self.t_horizon.or(base.t_horizon),
            trajectories: self.trajectories.or(base.trajectories),
            phi: self.phi.or(base.phi),
            seed: self.seed.or(base.seed),
            out: self.out.or(base.out),
            kappa: self.kappa.or(base.kappa),
            p: self.p.or(base.p),
            burn_in: self.burn_in.or(base.burn_in),
            bins: self.bins.or(base.bins),
            x0_a: self.x0_a.or(base.x0_a),
            x0_b: self.x0_b.or(base.x0_b),
            force_h: self.force_h.or(base.force_h),
            svg: self.svg.or(base.svg),
            threads: self.threads.or(base.threads),
        }
    }
}

/// Parameter tables of the built-in models, with defaults.
fn builtin_table(model: &str) -> Option<&'static [(&'static str, f64)]> {
    match model {
        "ginzburg_landau" => Some(&[("alpha", -2.0), ("sigma", 0.5), ("x0", 1.0)]),
        "mean_reverting" => Some(&[
            ("b", 0.3),
            ("alpha", 1.0),
            ("beta", 0.6),
            ("sigma", 0.2),
            ("x0", 1.0),
        ]),
        "allen_cahn" => Some(&[("k", 4.0)]),
        _ => None,
    }
}

pub const MODEL_NAMES: [&str; 3] = ["ginzburg_landau", "mean_reverting", "allen_cahn"];

/// Every knob a run needs, fully filled and validated.
#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    pub command: CommandKind,
    pub model_name: String,
    pub model_params: BTreeMap<String, f64>,
    pub theta: Vec<f64>,
    pub h: Vec<f64>,
    pub h_ref: f64,
    pub ref_theta: Option<f64>,
    pub t_horizon: f64,
    pub trajectories: usize,
    pub phi: Vec<TestFunction>,
    pub seed: u64,
    pub out: PathBuf,
    pub kappa: f64,
    pub moment_order: f64,
    pub burn_in: f64,
    pub bins: usize,
    pub x0_a: Option<Vec<f64>>,
    pub x0_b: Option<Vec<f64>>,
    pub force_h: bool,
    pub svg: bool,
    pub threads: Option<usize>,
    /// Set when an inadmissible step was forced through; echoed in headers.
    pub warning: Option<String>,
}

impl ResolvedConfig {
    pub fn build_model(&self) -> Result<SemiLinearModel> {
        build_model(&self.model_name, &self.model_params)
    }

    /// Canonical one-line echo for report headers. Fixed key order, `2^-k`
    /// step literals, no thread count.
    pub fn canonical_line(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "command={}", self.command.name());
        let _ = write!(s, " model={}", self.model_name);
        let params: Vec<String> = self
            .model_params
            .iter()
            .map(|(k, v)| format!("{k}={}", fmt_float(*v)))
            .collect();
        let _ = write!(s, " params={{{}}}", params.join(" "));
        let thetas: Vec<String> = self.theta.iter().map(|t| fmt_float(*t)).collect();
        let _ = write!(s, " theta={}", thetas.join(","));
        if !self.h.is_empty() {
            let hs: Vec<String> = self.h.iter().map(|h| fmt_step(*h)).collect();
            let _ = write!(s, " h={}", hs.join(","));
        }
        let _ = write!(s, " h_ref={}", fmt_step(self.h_ref));
        if let Some(rt) = self.ref_theta {
            let _ = write!(s, " ref_theta={}", fmt_float(rt));
        }
        let _ = write!(s, " T={}", fmt_float(self.t_horizon));
        let _ = write!(s, " M={}", self.trajectories);
        let phis: Vec<&str> = self.phi.iter().map(|p| p.name()).collect();
        let _ = write!(s, " phi={}", phis.join(","));
        let _ = write!(s, " seed={}", self.seed);
        let _ = write!(s, " kappa={}", fmt_float(self.kappa));
        let _ = write!(s, " p={}", fmt_float(self.moment_order));
        let _ = write!(s, " burn_in={}", fmt_float(self.burn_in));
        let _ = write!(s, " bins={}", self.bins);
        if let Some(a) = &self.x0_a {
            let vals: Vec<String> = a.iter().map(|v| fmt_float(*v)).collect();
            let _ = write!(s, " x0_a={}", vals.join(","));
        }
        if let Some(b) = &self.x0_b {
            let vals: Vec<String> = b.iter().map(|v| fmt_float(*v)).collect();
            let _ = write!(s, " x0_b={}", vals.join(","));
        }
        let _ = write!(s, " force_h={}", self.force_h);
        let _ = write!(s, " svg={}", self.svg);
        let _ = write!(s, " out={}", self.out.display());
        s
    }
}

pub fn build_model(name: &str, params: &BTreeMap<String, f64>) -> Result<SemiLinearModel> {
    let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
    match name {
        "ginzburg_landau" => ginzburg_landau(get("alpha", -2.0), get("sigma", 0.5), get("x0", 1.0)),
        "mean_reverting" => mean_reverting(
            get("b", 0.3),
            get("alpha", 1.0),
            get("beta", 0.6),
            get("sigma", 0.2),
            get("x0", 1.0),
        ),
        "allen_cahn" => {
            let k = get("k", 4.0);
            if k.fract() != 0.0 || !(2.0..=4096.0).contains(&k) {
                return Err(Error::InvalidParameter(format!(
                    "mesh parameter k = {k} must be an integer in [2, 4096]"
                )));
            }
            allen_cahn(k as usize)
        }
        other => Err(Error::InvalidParameter(format!(
            "unknown model '{other}' (expected one of {})",
            MODEL_NAMES.join(", ")
        ))),
    }
}

fn parse_optional_list(
    entry: &Option<Entry>,
    what: &str,
    errs: &mut Vec<String>,
) -> Option<Vec<f64>> {
    match entry {
        None => None,
        Some(e) => match parse_list(e) {
            Ok(v) if v.is_empty() => {
                errs.push(format!("{what} is empty"));
                None
            }
            Ok(v) => Some(v),
            Err(err) => {
                errs.push(format!("{what}: {err}"));
                None
            }
        },
    }
}

/// Fill defaults, validate everything, and check step admissibility.
/// Complaints accumulate; the caller gets either a runnable config or the
/// whole list at once.
pub fn resolve(raw: &RawConfig) -> Result<ResolvedConfig> {
    let mut errs: Vec<String> = Vec::new();

    let command = match &raw.command {
        None => {
            errs.push(format!(
                "command is required (one of {})",
                COMMAND_NAMES.join(", ")
            ));
            None
        }
        Some(c) => match c.parse::<CommandKind>() {
            Ok(k) => Some(k),
            Err(e) => {
                errs.push(e.to_string());
                None
            }
        },
    };

    let mut model_params = BTreeMap::new();
    let model_name = match &raw.model {
        None => {
            errs.push(format!(
                "model is required (one of {})",
                MODEL_NAMES.join(", ")
            ));
            String::new()
        }
        Some(name) => match builtin_table(name) {
            None => {
                errs.push(format!(
                    "unknown model '{name}' (expected one of {})",
                    MODEL_NAMES.join(", ")
                ));
                String::new()
            }
            Some(table) => {
                for (key, default) in table {
                    model_params.insert(
                        (*key).to_string(),
                        raw.model_params.get(*key).copied().unwrap_or(*default),
                    );
                }
                for key in raw.model_params.keys() {
                    if !table.iter().any(|(k, _)| k == key) {
                        errs.push(format!("model '{name}' has no parameter '{key}'"));
                    }
                }
                name.clone()
            }
        },
    };

    let theta = parse_optional_list(&raw.theta, "theta", &mut errs).unwrap_or_else(|| vec![1.0]);
    for &t in &theta {
        if !(0.0..=1.0).contains(&t) {
            errs.push(format!("theta = {t} must lie in [0, 1]"));
        }
    }
    if theta.len() > 1 && command.is_some_and(|c| c != CommandKind::Density) {
        errs.push("only the density command accepts a theta list".into());
    }

    let h = parse_optional_list(&raw.h, "h", &mut errs).unwrap_or_default();
    for &step in &h {
        if !(step > 0.0 && step.is_finite()) {
            errs.push(format!("h = {step} must be positive and finite"));
        }
    }
    if let Some(cmd) = command {
        if cmd.steps() && h.is_empty() && raw.h.is_none() {
            errs.push(format!("h is required for the {} command", cmd.name()));
        }
        if cmd != CommandKind::WeakError && h.len() > 1 {
            errs.push(format!(
                "the {} command takes a single h, got {}",
                cmd.name(),
                h.len()
            ));
        }
    }

    let h_ref = match parse_optional_list(&raw.h_ref, "h_ref", &mut errs) {
        Some(v) if v.len() == 1 => v[0],
        Some(_) => {
            errs.push("h_ref must be a single step".into());
            DEFAULT_H_REF
        }
        None => DEFAULT_H_REF,
    };
    if !(h_ref > 0.0) || h_ref < FINEST_H_REF {
        errs.push(format!(
            "h_ref = {} must lie in [{}, 1]",
            fmt_float(h_ref),
            fmt_step(FINEST_H_REF)
        ));
    }
    if command == Some(CommandKind::WeakError) {
        for &step in &h {
            let factor = step / h_ref;
            if !(factor >= 1.0)
                || (factor - factor.round()).abs() > 1e-9 * factor
                || factor.round() > 0.0 && !(factor.round() as u64).is_power_of_two()
            {
                errs.push(format!(
                    "h = {} is not a power-of-two multiple of h_ref = {}",
                    fmt_step(step),
                    fmt_step(h_ref)
                ));
            }
        }
    }

    let ref_theta = match parse_optional_list(&raw.ref_theta, "ref_theta", &mut errs) {
        Some(v) if v.len() == 1 => {
            if !(0.0..=1.0).contains(&v[0]) {
                errs.push(format!("ref_theta = {} must lie in [0, 1]", v[0]));
            }
            Some(v[0])
        }
        Some(_) => {
            errs.push("ref_theta must be a single value".into());
            None
        }
        None => None,
    };

    let t_horizon = raw.t_horizon.unwrap_or(DEFAULT_HORIZON);
    if !(t_horizon > 0.0 && t_horizon.is_finite()) {
        errs.push(format!("T = {t_horizon} must be positive and finite"));
    }
    let trajectories = raw.trajectories.unwrap_or(DEFAULT_TRAJECTORIES as u64) as usize;
    if trajectories == 0 {
        errs.push("M must be at least 1".into());
    }

    let phi = match raw.phi.as_deref().unwrap_or("all") {
        "all" => TestFunction::ALL.to_vec(),
        list => {
            let mut acc = Vec::new();
            for tok in list.split(',') {
                match tok.trim().parse::<TestFunction>() {
                    Ok(f) => acc.push(f),
                    Err(e) => errs.push(e.to_string()),
                }
            }
            acc
        }
    };

    let seed = raw.seed.unwrap_or(DEFAULT_SEED);
    let out = PathBuf::from(
        raw.out
            .clone()
            .unwrap_or_else(|| format!("ltpe-{}.csv", command.map_or("run", |c| c.name()))),
    );

    let kappa = raw.kappa.unwrap_or(DEFAULT_KAPPA);
    if !(kappa > 0.0 && kappa < 1.0) {
        errs.push(format!("kappa = {kappa} must lie in (0, 1)"));
    }
    let moment_order = raw.p.unwrap_or(DEFAULT_MOMENT_ORDER);
    if !(moment_order >= 1.0) {
        errs.push(format!("p = {moment_order} must be at least 1"));
    }
    let burn_in = raw.burn_in.unwrap_or(DECAY_BURN_FRACTION);
    if !(0.0..0.9).contains(&burn_in) {
        errs.push(format!("burn_in = {burn_in} must lie in [0, 0.9)"));
    }
    let bins = raw.bins.unwrap_or(DEFAULT_BINS as u64) as usize;
    if bins < 2 {
        errs.push("bins must be at least 2".into());
    }

    let x0_a = raw.x0_a.clone();
    let x0_b = raw.x0_b.clone();
    for (label, v) in [("x0_a", &x0_a), ("x0_b", &x0_b)] {
        if let Some(v) = v {
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                errs.push(format!("{label} must be a non-empty finite vector"));
            }
        }
    }

    let force_h = raw.force_h.unwrap_or(false);
    let svg = raw.svg.unwrap_or(false);
    let threads = raw.threads.map(|t| t as usize);
    if threads == Some(0) {
        errs.push("threads must be at least 1".into());
    }

    // Admissibility needs a model; skip when the model itself is in doubt.
    let mut warning = None;
    if errs.is_empty() {
        if let Some(cmd) = command {
            if cmd.steps() {
                match build_model(&model_name, &model_params) {
                    Err(e) => errs.push(e.to_string()),
                    Ok(model) => {
                        let mut worst: Option<String> = None;
                        for &t in &theta {
                            match max_stable_stepsize(&model, t, moment_order, kappa) {
                                Err(e) => {
                                    errs.push(e.to_string());
                                    break;
                                }
                                Ok(bounds) => {
                                    for &step in &h {
                                        if step > bounds.h_max {
                                            worst = Some(format!(
                                                "h = {} exceeds h_max = {} for theta = {}; binding bound: {}",
                                                fmt_step(step),
                                                fmt_float(bounds.h_max),
                                                fmt_float(t),
                                                bounds.binding
                                            ));
                                        }
                                    }
                                }
                            }
                        }
                        if let Some(msg) = worst {
                            if force_h {
                                warning = Some(format!("forced inadmissible step: {msg}"));
                            } else {
                                errs.push(format!("{msg} (use --force-h to override)"));
                            }
                        }
                    }
                }
            }
        }
    }

    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    Ok(ResolvedConfig {
        command: command.expect("validated above"),
        model_name,
        model_params,
        theta,
        h,
        h_ref,
        ref_theta,
        t_horizon,
        trajectories,
        phi,
        seed,
        out,
        kappa,
        moment_order,
        burn_in,
        bins,
        x0_a,
        x0_b,
        force_h,
        svg,
        threads,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(json: &str) -> RawConfig {
        RawConfig::from_json(json).unwrap()
    }

    #[test]
    fn power_of_two_literals_parse_exactly() {
        assert_eq!(parse_scalar("2^-12").unwrap(), 2.0f64.powi(-12));
        assert_eq!(parse_scalar("2^3").unwrap(), 8.0);
        assert_eq!(parse_scalar("0.125").unwrap(), 0.125);
        assert_eq!(parse_scalar(" 2^-4 ").unwrap(), 0.0625);
        assert!(parse_scalar("2^").is_err());
        assert!(parse_scalar("two").is_err());

        let list = parse_list(&Entry::Text("2^-6,2^-7,2^-8".into())).unwrap();
        assert_eq!(list, vec![0.015625, 0.0078125, 0.00390625]);
    }

    #[test]
    fn empty_config_names_every_required_field() {
        let err = resolve(&RawConfig::default()).unwrap_err();
        let Error::Config(list) = err else {
            panic!("expected aggregated config error")
        };
        assert!(
            list.iter().any(|e| e.contains("command is required")),
            "{list:?}"
        );
        assert!(
            list.iter().any(|e| e.contains("model is required")),
            "{list:?}"
        );
    }

    #[test]
    fn missing_step_is_reported_for_stepping_commands() {
        let err = resolve(&raw(r#"{"command":"moments","model":"ginzburg_landau"}"#)).unwrap_err();
        let Error::Config(list) = err else { panic!() };
        assert!(list.iter().any(|e| e.contains("h is required")), "{list:?}");

        // check needs no step
        assert!(resolve(&raw(r#"{"command":"check","model":"ginzburg_landau"}"#)).is_ok());
    }

    #[test]
    fn happy_path_fills_documented_defaults() {
        let cfg = resolve(&raw(
            r#"{"command":"weak-error","model":"ginzburg_landau","theta":0,
                "h":"2^-6,2^-7,2^-8,2^-9"}"#,
        ))
        .unwrap();
        assert_eq!(cfg.h_ref, 2.0f64.powi(-12));
        assert_eq!(cfg.t_horizon, 5.0);
        assert_eq!(cfg.trajectories, 10_000);
        assert_eq!(cfg.phi.len(), 4);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.kappa, 0.5);
        assert_eq!(cfg.moment_order, 2.0);
        assert_eq!(cfg.bins, 100);
        assert_eq!(cfg.model_params.get("alpha"), Some(&-2.0));
        assert!(cfg.warning.is_none());

        let line = cfg.canonical_line();
        assert!(line.contains("h=2^-6,2^-7,2^-8,2^-9"), "{line}");
        assert!(line.contains("h_ref=2^-12"), "{line}");
        assert!(line.contains("params={alpha=-2 sigma=0.5 x0=1}"), "{line}");
        assert!(
            !line.contains("threads"),
            "thread count must not reach headers: {line}"
        );
    }

    #[test]
    fn inadmissible_step_names_the_binding_bound() {
        let err = resolve(&raw(
            r#"{"command":"moments","model":"ginzburg_landau","theta":0,"h":0.9}"#,
        ))
        .unwrap_err();
        let Error::Config(list) = err else { panic!() };
        assert_eq!(list.len(), 1, "{list:?}");
        assert!(list[0].contains("exceeds h_max"), "{list:?}");
        assert!(list[0].contains("binding bound:"), "{list:?}");

        let forced = resolve(&raw(
            r#"{"command":"moments","model":"ginzburg_landau","theta":0,"h":0.9,
                "force_h":true}"#,
        ))
        .unwrap();
        let w = forced.warning.expect("forced step must carry a warning");
        assert!(w.contains("forced inadmissible step"), "{w}");
    }

    #[test]
    fn unknown_names_are_rejected() {
        let err = resolve(&raw(
            r#"{"command":"simulate","model":"ginzburg_landau","h":0.125,
                "model_params":{"zeta":1.0}}"#,
        ))
        .unwrap_err();
        let Error::Config(list) = err else { panic!() };
        assert!(
            list.iter().any(|e| e.contains("no parameter 'zeta'")),
            "{list:?}"
        );

        assert!(
            RawConfig::from_json(r#"{"comand":"check"}"#).is_err(),
            "typo must not parse"
        );

        let err = resolve(&raw(
            r#"{"command":"simulate","model":"brownian","h":0.125}"#,
        ))
        .unwrap_err();
        let Error::Config(list) = err else { panic!() };
        assert!(
            list.iter().any(|e| e.contains("unknown model 'brownian'")),
            "{list:?}"
        );
    }

    #[test]
    fn ladder_must_sit_on_the_reference_grid() {
        let err = resolve(&raw(
            r#"{"command":"weak-error","model":"ginzburg_landau","theta":0,
                "h":"0.1","h_ref":"2^-12"}"#,
        ))
        .unwrap_err();
        let Error::Config(list) = err else { panic!() };
        assert!(
            list.iter()
                .any(|e| e.contains("not a power-of-two multiple")),
            "{list:?}"
        );

        let err = resolve(&raw(
            r#"{"command":"weak-error","model":"ginzburg_landau","theta":0,
                "h":"2^-6","h_ref":"2^-15"}"#,
        ))
        .unwrap_err();
        let Error::Config(list) = err else { panic!() };
        assert!(list.iter().any(|e| e.contains("h_ref")), "{list:?}");
    }

    #[test]
    fn flags_override_file_values() {
        let file = raw(
            r#"{"command":"density","model":"mean_reverting","theta":"0,0.5,1",
                "h":"2^-10","M":20000,"seed":7}"#,
        );
        let flags = RawConfig {
            seed: Some(99),
            trajectories: Some(500),
            ..RawConfig::default()
        };
        let cfg = resolve(&flags.over(file)).unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.trajectories, 500);
        assert_eq!(cfg.theta, vec![0.0, 0.5, 1.0]);
        assert_eq!(cfg.h, vec![2.0f64.powi(-10)]);
    }

    #[test]
    fn theta_lists_are_for_density_only() {
        let err = resolve(&raw(
            r#"{"command":"moments","model":"ginzburg_landau","theta":"0,1","h":"2^-6"}"#,
        ))
        .unwrap_err();
        let Error::Config(list) = err else { panic!() };
        assert!(list.iter().any(|e| e.contains("theta list")), "{list:?}");
    }

    #[test]
    fn model_builds_honor_overrides() {
        let mut params = BTreeMap::new();
        params.insert("k".to_string(), 8.0);
        let m = build_model("allen_cahn", &params).unwrap();
        assert_eq!(m.dim(), 7);

        params.insert("k".to_string(), 2.5);
        assert!(build_model("allen_cahn", &params).is_err());
    }
}
