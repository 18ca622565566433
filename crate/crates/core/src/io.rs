//! Plot-ready CSV exports and the run manifest.
//!
//! Numbers are written with Rust's shortest round-trip `Display`, which always
//! uses `.` as the decimal separator.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::filter::{mean_filter_ode, FilterPath};
use crate::market::WorldPath;
use crate::pide::ValueSurface;
use crate::strategy::{primal_value, y_star, StrategyField};
use crate::verify::McReport;

/// Crate version recorded in manifests.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

fn join(row: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{v}").expect("write to String");
    }
    s
}

/// Header plus numeric rows.
pub fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&join(&r));
        out.push('\n');
    }
    out
}

/// `t, alpha, S, pi`; `pi` is empty when no filter is attached.
pub fn world_csv(world: &WorldPath) -> String {
    let mut out = String::from("t,alpha,S,pi\n");
    for k in 0..world.times.len() {
        let pi = world.filter.as_ref().map(|f| f[k].to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", world.times[k], world.alpha[k], world.asset[k], pi).expect("write to String");
    }
    out
}

pub fn events_csv(world: &WorldPath) -> String {
    csv_string(&["event_time", "mark"], world.events.iter().map(|e| vec![e.time, e.mark]))
}

/// Filter path with innovations (zero at `t = 0`) and the mean ODE.
pub fn filter_csv(path: &FilterPath, x0: f64, regime: &crate::market::RegimeParams) -> String {
    csv_string(
        &["t", "pi", "innovation", "mean_ode"],
        path.times.iter().enumerate().map(|(k, &t)| {
            let dw = if k == 0 { 0.0 } else { path.innovations[k - 1] };
            vec![t, path.values[k], dw, mean_filter_ode(t, x0, regime)]
        }),
    )
}

pub fn filter_jumps_csv(path: &FilterPath) -> String {
    csv_string(
        &["event_time", "node", "mark", "pre", "post"],
        path.jumps.iter().map(|j| vec![j.time, j.node as f64, j.mark, j.pre, j.post]),
    )
}

/// Wide layout: one row per time node, one column per x node.
pub fn surface_csv(surface: &ValueSurface) -> String {
    let mut out = String::from("t");
    for x in &surface.x {
        write!(out, ",{x}").expect("write to String");
    }
    out.push('\n');
    for (i, t) in surface.t.iter().enumerate() {
        let mut row = vec![*t];
        row.extend_from_slice(surface.slice(i));
        out.push_str(&join(&row));
        out.push('\n');
    }
    out
}

/// Controls and values on the surface grid, subsampled to about
/// `time_rows` time nodes, for wealth `v`.
pub fn strategy_csv(surface: &ValueSurface, v: f64, time_rows: usize) -> Result<String> {
    let field = StrategyField::new(surface);
    let u = surface.model.utility;
    let stride = (surface.n_t() / time_rows.max(1)).max(1);
    let mut rows = Vec::new();
    let mut i = 0;
    loop {
        let t = surface.t[i];
        for &x in &surface.x {
            let (a, b) = field.fractions(t, x);
            rows.push(vec![
                t,
                x,
                surface.value(t, x),
                field.log_derivative(t, x),
                a,
                b,
                y_star(v, surface, t, x, &u)?,
                primal_value(v, surface, t, x, &u)?,
            ]);
        }
        if i == surface.n_t() {
            break;
        }
        i = (i + stride).min(surface.n_t());
    }
    Ok(csv_string(
        &["t", "x", "lambda", "dlog_lambda_dx", "invest_fraction", "consume_fraction", "y_star", "primal_value"],
        rows,
    ))
}

/// One row per report.
pub fn summary_csv(reports: &[McReport]) -> String {
    let mut out = String::from("name,mean,stderr,paths,dt,seed,target,tolerance,pass\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.name, r.mean, r.stderr, r.paths, r.dt, r.seed, r.target, r.tolerance, r.pass
        )
        .expect("write to String");
    }
    out
}

/// Record of one CLI invocation, written after every other output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    /// Model document after overrides; `--config` accepts a manifest too.
    pub config: Value,
    pub subcommand: String,
    pub seed: u64,
    pub artifact_version: String,
    /// Numerical settings (paths, dt, grid) that shaped the outputs.
    pub settings: BTreeMap<String, Value>,
    pub outputs: Vec<String>,
    /// Wall-clock seconds per stage; the only nondeterministic field.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(config: Value, subcommand: &str, seed: u64) -> Self {
        Self {
            config,
            subcommand: subcommand.to_string(),
            seed,
            artifact_version: ARTIFACT_VERSION.to_string(),
            settings: BTreeMap::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
        }
    }
}

/// Writes files into an output directory and remembers their names.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.root.join(name);
        fs::write(&p, contents)?;
        self.written.push(name.to_string());
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }

    /// Writes `manifest.json` listing everything written so far.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<PathBuf> {
        manifest.outputs = self.written.clone();
        self.write_json("manifest.json", &manifest)
    }
}
