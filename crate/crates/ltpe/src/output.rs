//! Report rendering: fixed-order CSV schemas behind a config-echo header.
//!
//! Every file starts with a single `#` comment carrying the resolved
//! configuration and its digest; the data that follows is reproducible from
//! that line alone. Nothing here reads the clock or the environment, so a
//! rendered report is a pure function of its rows.

use std::fs;
use std::path::Path;

use crate::error::Result;

/// FNV-1a, 64-bit. Stable across platforms, good enough to fingerprint a
/// config line; not a cryptographic hash.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Shortest decimal that round-trips to the same f64.
pub fn fmt_float(x: f64) -> String {
    format!("{x}")
}

/// Steps echo as `2^-k` when exact, so headers never carry decimal drift.
pub fn fmt_step(h: f64) -> String {
    if h > 0.0 && h.is_finite() {
        let k = h.log2();
        if k == k.round() && (-64.0..=64.0).contains(&k) {
            let k = k as i32;
            if k == 0 {
                return "1".into();
            }
            if 2.0f64.powi(k) == h {
                return format!("2^{k}");
            }
        }
    }
    fmt_float(h)
}

/// First line(s) of every report: the resolved config, its digest, and an
/// optional warning (a forced inadmissible step embeds one here).
#[derive(Clone, Debug)]
pub struct Header<'a> {
    pub config: &'a str,
    pub warning: Option<&'a str>,
}

impl Header<'_> {
    fn render(&self) -> String {
        let mut s = format!(
            "# ltpe {} digest={:016x}\n",
            self.config,
            fnv1a(self.config.as_bytes())
        );
        if let Some(w) = self.warning {
            s.push_str("# warning: ");
            s.push_str(w);
            s.push('\n');
        }
        s
    }
}

fn render_csv(header: &Header, columns: &str, rows: impl Iterator<Item = String>) -> String {
    let mut s = header.render();
    s.push_str(columns);
    s.push('\n');
    for row in rows {
        s.push_str(&row);
        s.push('\n');
    }
    s
}

pub struct WeakErrorRow<'a> {
    pub model: &'a str,
    pub theta: f64,
    pub phi: &'a str,
    pub h: f64,
    pub h_ref: f64,
    pub t_horizon: f64,
    pub m: usize,
    pub seed: u64,
    pub error: f64,
    pub half_width: f64,
}

pub fn weak_error_csv(header: &Header, rows: &[WeakErrorRow]) -> String {
    render_csv(
        header,
        "model,theta,phi,h,h_ref,T,M,seed,error,half_width",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{}",
                r.model,
                fmt_float(r.theta),
                r.phi,
                fmt_float(r.h),
                fmt_float(r.h_ref),
                fmt_float(r.t_horizon),
                r.m,
                r.seed,
                fmt_float(r.error),
                fmt_float(r.half_width)
            )
        }),
    )
}

pub struct DensityRow<'a> {
    pub model: &'a str,
    pub theta: f64,
    pub h: f64,
    pub t_horizon: f64,
    pub m: usize,
    pub seed: u64,
    pub bin_left: f64,
    pub bin_right: f64,
    pub height: f64,
}

pub fn density_csv(header: &Header, rows: &[DensityRow]) -> String {
    render_csv(
        header,
        "model,theta,h,T,M,seed,bin_left,bin_right,height",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                r.model,
                fmt_float(r.theta),
                fmt_float(r.h),
                fmt_float(r.t_horizon),
                r.m,
                r.seed,
                fmt_float(r.bin_left),
                fmt_float(r.bin_right),
                fmt_float(r.height)
            )
        }),
    )
}

pub struct MomentsRow<'a> {
    pub model: &'a str,
    pub theta: f64,
    pub h: f64,
    pub p: f64,
    pub step: usize,
    pub t: f64,
    pub mean_norm_2p: f64,
}

pub fn moments_csv(header: &Header, rows: &[MomentsRow]) -> String {
    render_csv(
        header,
        "model,theta,h,p,step,t,mean_norm_2p",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.model,
                fmt_float(r.theta),
                fmt_float(r.h),
                fmt_float(r.p),
                r.step,
                fmt_float(r.t),
                fmt_float(r.mean_norm_2p)
            )
        }),
    )
}

pub struct VerifyRow<'a> {
    pub check: &'a str,
    pub model: &'a str,
    pub theta: f64,
    pub h: f64,
    pub param_p: f64,
    pub verdict: &'a str,
    pub fitted_value: f64,
    pub r2: f64,
    pub seed: u64,
}

pub fn verify_csv(header: &Header, rows: &[VerifyRow]) -> String {
    render_csv(
        header,
        "check,model,theta,h,param_p,verdict,fitted_value,r2,seed",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                r.check,
                r.model,
                fmt_float(r.theta),
                fmt_float(r.h),
                fmt_float(r.param_p),
                r.verdict,
                fmt_float(r.fitted_value),
                fmt_float(r.r2),
                r.seed
            )
        }),
    )
}

/// Trajectory dump in long format, one row per recorded component.
pub struct TrajectoryRow<'a> {
    pub model: &'a str,
    pub theta: f64,
    pub h: f64,
    pub seed: u64,
    pub step: usize,
    pub t: f64,
    pub component: usize,
    pub value: f64,
}

pub fn trajectory_csv(header: &Header, rows: &[TrajectoryRow]) -> String {
    render_csv(
        header,
        "model,theta,h,seed,step,t,component,value",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{}",
                r.model,
                fmt_float(r.theta),
                fmt_float(r.h),
                r.seed,
                r.step,
                fmt_float(r.t),
                r.component,
                fmt_float(r.value)
            )
        }),
    )
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}
