//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! diagnostic failure (bound breach, support mismatch, failed check).

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use regime_dual::blr::check_blr;
use regime_dual::config::{apply_override, read_document};
use regime_dual::error::{Error, Result};
use regime_dual::filter::run_filter;
use regime_dual::io::{self, OutputDir, RunManifest};
use regime_dual::market::simulate_world;
use regime_dual::pide::{merton_oracle, solve_lambda, PideConfig, ValueSurface};
use regime_dual::rng::{derive_seed, PathStreams};
use regime_dual::verify::{self, DualControl, McReport, PrimalStrategy};
use regime_dual::ModelConfig;

#[derive(Parser, Debug)]
#[command(name = "regime-dual", version, about = "Dual-method consumption-investment under a hidden bull/bear regime")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Model JSON (a previous run's manifest.json is accepted too).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Output directory; defaults to $REGIME_DUAL_OUT_DIR, then `out`.
    #[arg(long, global = true, env = "REGIME_DUAL_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Monte Carlo paths (verify) or simulated worlds (simulate, filter).
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Simulation step.
    #[arg(long, global = true, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, global = true, default_value_t = 100)]
    grid_nx: usize,
    #[arg(long, global = true, default_value_t = 1000)]
    grid_nt: usize,
    /// Mark quadrature nodes for the nonlocal term.
    #[arg(long, global = true, default_value_t = 128)]
    grid_nq: usize,
    /// Optional clamp `|ν| ≤ M` in the solver.
    #[arg(long, global = true)]
    m_clamp: Option<f64>,
    /// Config override `key.path=value`; repeatable.
    #[arg(long = "set", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the value surface; writes surface.csv and bounds.json.
    Solve,
    /// Simulate worlds with the filter attached.
    Simulate,
    /// Run the filter on one simulated world.
    Filter,
    /// Check the bounded-likelihood-ratio condition on the signal densities.
    BlrCheck {
        /// Budget for the D3 divergence.
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Monte Carlo verification checks.
    Verify {
        #[arg(long, value_enum, default_value_t = CheckSet::All)]
        check: CheckSet,
        /// Start time of the check.
        #[arg(long, default_value_t = 0.0)]
        t: f64,
    },
    /// Feedback controls and values on the solver grid.
    Strategy {
        /// Wealth level; defaults to the config's v0.
        #[arg(long)]
        v: Option<f64>,
        #[arg(long, default_value_t = 100)]
        time_rows: usize,
    },
    /// Closed-form value for uninformative instances against the solver.
    Oracle,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum CheckSet {
    Martingale,
    DualDirect,
    DualWeighted,
    Primal,
    FilterMean,
    All,
}

impl CheckSet {
    fn includes(self, other: CheckSet) -> bool {
        self == CheckSet::All || self == other
    }
}

enum Failure {
    Error(Error),
    ChecksFailed(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

struct Run {
    model: ModelConfig,
    global: Global,
    out: OutputDir,
    manifest: RunManifest,
    clock: Instant,
}

impl Run {
    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.manifest.timings.insert(stage.to_string(), (now - self.clock).as_secs_f64());
        self.clock = now;
    }

    fn setting(&mut self, key: &str, value: Value) {
        self.manifest.settings.insert(key.to_string(), value);
    }

    fn pide_config(&self) -> PideConfig {
        PideConfig {
            n_x: self.global.grid_nx,
            n_t: self.global.grid_nt,
            n_q: self.global.grid_nq,
            m_clamp: self.global.m_clamp,
            ..PideConfig::default()
        }
    }

    fn solve(&mut self) -> Result<ValueSurface> {
        let cfg = self.pide_config();
        self.setting("grid", serde_json::to_value(cfg)?);
        let s = solve_lambda(&self.model, &cfg)?;
        self.lap("solve");
        Ok(s)
    }

    fn paths(&self, default: usize) -> Result<usize> {
        match self.global.paths {
            Some(0) => Err(Error::InvalidArgument("--paths must be positive".into())),
            Some(p) => Ok(p),
            None => Ok(default),
        }
    }
}

fn load_document(global: &Global) -> Result<Value> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <file> is required".into()))?;
    let mut doc = read_document(path)?;
    // A manifest carries the model under `config`.
    if doc.get("subcommand").is_some() {
        if let Some(inner) = doc.get("config") {
            doc = inner.clone();
        }
    }
    for o in &global.overrides {
        apply_override(&mut doc, o)?;
    }
    Ok(doc)
}

fn cmd_solve(run: &mut Run) -> Result<()> {
    let s = run.solve()?;
    run.out.write("surface.csv", &io::surface_csv(&s))?;
    let literal_ok = s.diagnostics.literal_shortfall <= s.config.bound_tol && s.diagnostics.literal_excess <= s.config.bound_tol;
    run.out.write_json(
        "bounds.json",
        &json!({
            "bounds": s.bounds,
            "diagnostics": s.diagnostics,
            "literal_bounds_hold": literal_ok,
            "value_at_x0": s.value(0.0, run.model.x0),
        }),
    )?;
    Ok(())
}

fn cmd_simulate(run: &mut Run) -> Result<()> {
    let paths = run.paths(1)?;
    let dt = run.global.dt;
    let seed = derive_seed(run.global.seed, "simulate");
    run.setting("paths", json!(paths));
    run.setting("dt", json!(dt));
    for p in 0..paths {
        let streams = PathStreams::new(seed, p as u64);
        let mut w = simulate_world(&run.model, run.model.horizon, dt, &streams)?;
        let f = run_filter(&w, &run.model, run.model.x0)?;
        w.attach_filter(&f);
        run.out.write(&format!("world_{p}.csv"), &io::world_csv(&w))?;
        run.out.write(&format!("events_{p}.csv"), &io::events_csv(&w))?;
    }
    run.lap("simulate");
    Ok(())
}

fn cmd_filter(run: &mut Run) -> Result<()> {
    let dt = run.global.dt;
    let seed = derive_seed(run.global.seed, "simulate");
    run.setting("dt", json!(dt));
    let w = simulate_world(&run.model, run.model.horizon, dt, &PathStreams::new(seed, 0))?;
    let f = run_filter(&w, &run.model, run.model.x0)?;
    run.out.write("filter.csv", &io::filter_csv(&f, run.model.x0, &run.model.regime))?;
    run.out.write("filter_jumps.csv", &io::filter_jumps_csv(&f))?;
    run.lap("filter");
    Ok(())
}

fn cmd_blr(run: &mut Run, budget: Option<f64>) -> Result<()> {
    let report = check_blr(&run.model.signal, budget)?;
    run.out.write_json("blr.json", &report)?;
    run.lap("blr");
    println!("blr passes: {}", report.passes);
    Ok(())
}

fn cmd_verify(run: &mut Run, set: CheckSet, t: f64) -> std::result::Result<(), Failure> {
    let paths = run.paths(20_000)?;
    let dt = run.global.dt;
    let seed = run.global.seed;
    run.setting("paths", json!(paths));
    run.setting("dt", json!(dt));
    run.setting("t", json!(t));
    let x = verify::interior(run.model.x0)?;
    let v = run.model.v0;
    let mut reports: Vec<McReport> = Vec::new();
    if set != CheckSet::FilterMean {
        let s = run.solve()?;
        if set.includes(CheckSet::Martingale) {
            reports.push(verify::martingale_check(&s, t, x, paths, dt, seed)?);
        }
        if set.includes(CheckSet::DualDirect) {
            reports.push(verify::dual_estimate_direct(&s, t, x, paths, dt, seed, DualControl::Optimal)?);
        }
        if set.includes(CheckSet::DualWeighted) {
            let w = verify::dual_estimate_weighted(&s, t, x, paths, dt, seed, DualControl::Optimal)?;
            reports.push(w);
        }
        if set.includes(CheckSet::Primal) {
            reports.push(verify::primal_objective(&s, t, x, v, paths, dt, seed, PrimalStrategy::Optimal)?);
            let scaled = PrimalStrategy::ScaledInvestment(1.5);
            let mut r = verify::primal_objective(&s, t, x, v, paths, dt, seed, scaled)?;
            let d = verify::paired_primal_difference(&s, t, x, v, paths, dt, seed, PrimalStrategy::Optimal, scaled)?;
            r.details.insert("paired_gap".into(), d.mean);
            r.details.insert("paired_gap_stderr".into(), d.stderr);
            r.pass = r.pass && d.mean > 2.0 * d.stderr;
            r.criterion.push_str("; optimal beats it by > 2 paired stderr");
            reports.push(r);
        }
        run.lap("checks");
    }
    if set.includes(CheckSet::FilterMean) {
        reports.push(verify::filter_mean_check(&run.model, paths, dt, seed)?);
        run.lap("filter-mean");
    }
    for r in &reports {
        run.out.write_json(&format!("report_{}.json", r.name), r)?;
        println!("{:<24} mean {:<22} stderr {:<22} target {:<22} {}", r.name, r.mean, r.stderr, r.target, if r.pass { "PASS" } else { "FAIL" });
    }
    run.out.write("summary.csv", &io::summary_csv(&reports))?;
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(Failure::ChecksFailed(failed));
    }
    Ok(())
}

fn cmd_strategy(run: &mut Run, v: Option<f64>, time_rows: usize) -> Result<()> {
    let v = v.unwrap_or(run.model.v0);
    run.setting("v", json!(v));
    let s = run.solve()?;
    run.out.write("strategy.csv", &io::strategy_csv(&s, v, time_rows)?)?;
    Ok(())
}

fn cmd_oracle(run: &mut Run) -> Result<()> {
    let s = run.solve()?;
    let x = run.model.x0;
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for &t in &s.t {
        let exact = merton_oracle(t, &run.model)?;
        let err = (0..=s.n_x())
            .map(|j| ((s.value(t, s.x[j]) - exact) / exact).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
        rows.push(vec![t, exact, s.value(t, x), err]);
    }
    run.out.write("oracle.csv", &io::csv_string(&["t", "oracle", "solved_at_x0", "max_rel_err"], rows))?;
    println!("max relative error {worst:e}");
    Ok(())
}

fn execute(cli: Cli) -> std::result::Result<(), Failure> {
    let doc = load_document(&cli.global)?;
    let model = ModelConfig::from_value(&doc)?;
    let name = match &cli.command {
        Command::Solve => "solve",
        Command::Simulate => "simulate",
        Command::Filter => "filter",
        Command::BlrCheck { .. } => "blr-check",
        Command::Verify { .. } => "verify",
        Command::Strategy { .. } => "strategy",
        Command::Oracle => "oracle",
    };
    let out = OutputDir::create(&cli.global.out_dir)?;
    let manifest = RunManifest::new(model.to_value(), name, cli.global.seed);
    let mut run = Run { model, global: cli.global, out, manifest, clock: Instant::now() };
    let result = match cli.command {
        Command::Solve => cmd_solve(&mut run).map_err(Failure::from),
        Command::Simulate => cmd_simulate(&mut run).map_err(Failure::from),
        Command::Filter => cmd_filter(&mut run).map_err(Failure::from),
        Command::BlrCheck { budget } => cmd_blr(&mut run, budget).map_err(Failure::from),
        Command::Verify { check, t } => cmd_verify(&mut run, check, t),
        Command::Strategy { v, time_rows } => cmd_strategy(&mut run, v, time_rows).map_err(Failure::from),
        Command::Oracle => cmd_oracle(&mut run).map_err(Failure::from),
    };
    let mut manifest = run.manifest;
    manifest.settings.insert("exit_status".into(), json!(if result.is_ok() { "ok" } else { "failed" }));
    run.out.finish(manifest)?;
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors; usage mistakes map to 1.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::ChecksFailed(n)) => {
            eprintln!("{n} check(s) failed");
            ExitCode::from(2)
        }
    }
}
