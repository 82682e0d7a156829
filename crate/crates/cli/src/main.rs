use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use shear_mhd::diagnostics::{bootstrap_monitor, EnergyRecord};
use shear_mhd::harness::{
    fit_records, linear_run, linear_sweep, threshold_sweep, InvariantDefects, LinearRunConfig, LinearSweepConfig,
    MultiplierCheckConfig, MultiplierTableConfig, SweepConfig,
};
use shear_mhd::nonlinear::{RunStatus, Snapshot, Solver, SolverConfig};
use shear_mhd::output::{read_csv, read_manifest, read_toml, RunDir};
use shear_mhd::propagator::Variant;
use shear_mhd::{Error, PhysicalParams, Result};

mod report;

#[derive(Parser)]
#[command(name = "shear-mhd", version, about = "Stability experiments for 2D MHD near Couette flow")]
struct Cli {
    /// Root directory for run outputs.
    #[arg(long, global = true, default_value = "runs")]
    runs: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Multiplier property checks and tables.
    #[command(subcommand)]
    Multipliers(MultipliersCmd),
    /// Per-mode linear evolution.
    #[command(subcommand)]
    Linear(LinearCmd),
    /// Full nonlinear evolution.
    #[command(subcommand)]
    Nonlinear(NonlinearCmd),
    /// Threshold bisection over parameter grids.
    #[command(subcommand)]
    Threshold(ThresholdCmd),
    /// Decay-rate fits.
    #[command(subcommand)]
    Fit(FitCmd),
    /// Summarize every run under the runs directory.
    Report,
}

#[derive(Subcommand)]
enum MultipliersCmd {
    Check {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        lattice_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    Table {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        params: ParamArgs,
        /// Mode as `k,eta`; repeatable.
        #[arg(long = "mode", value_parser = parse_pair)]
        modes: Vec<[f64; 2]>,
        #[arg(long, default_value_t = 100.0)]
        t_max: f64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

#[derive(Subcommand)]
enum LinearCmd {
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long)]
        variant: Option<VariantArg>,
    },
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum NonlinearCmd {
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a snapshot file.
        #[arg(long)]
        restart: Option<PathBuf>,
        /// Write a snapshot every N steps (0 writes only the final one).
        #[arg(long, default_value_t = 0)]
        snapshot_every: usize,
    },
}

#[derive(Subcommand)]
enum ThresholdCmd {
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Reuse finished points of an interrupted sweep.
        #[arg(long)]
        resume: bool,
    },
}

#[derive(Subcommand)]
enum FitCmd {
    Rates {
        /// Run directory of a nonlinear run.
        #[arg(long, conflicts_with = "records")]
        run: Option<PathBuf>,
        /// Records CSV; needs the parameters.
        #[arg(long)]
        records: Option<PathBuf>,
        #[command(flatten)]
        params: ParamArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    OmegaJ,
    ZQ,
}

#[derive(Args, Clone, Default)]
struct ParamArgs {
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    c3: Option<f64>,
    #[arg(long)]
    c4: Option<f64>,
}

impl ParamArgs {
    fn build(&self) -> Result<PhysicalParams> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::validation(name, "required without --config"));
        let mut p = PhysicalParams::new(need(self.nu, "nu")?, need(self.mu, "mu")?, need(self.beta, "beta")?);
        self.apply(&mut p);
        Ok(p)
    }

    fn apply(&self, p: &mut PhysicalParams) {
        if let Some(n) = self.n {
            p.n = n;
        }
        for (dst, src) in [
            (&mut p.delta0, self.delta0),
            (&mut p.c1, self.c1),
            (&mut p.c2, self.c2),
            (&mut p.c3, self.c3),
            (&mut p.c4, self.c4),
        ] {
            if let Some(v) = src {
                *dst = v;
            }
        }
    }
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected k,eta")?;
    let a = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok([a, b])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<i32> {
    match &cli.cmd {
        Cmd::Multipliers(MultipliersCmd::Check {
            config,
            params,
            lattice_size,
            seed,
            tolerance,
        }) => {
            let mut cfg = match config {
                Some(p) => read_toml::<MultiplierCheckConfig>(p)?,
                None => MultiplierCheckConfig::new(params.build()?),
            };
            params.apply(&mut cfg.params);
            if let Some(v) = lattice_size {
                cfg.lattice_size = *v;
            }
            if let Some(v) = seed {
                cfg.seed = *v;
            }
            if let Some(v) = tolerance {
                cfg.tolerance = *v;
            }
            cfg.validate()?;
            let mut dir = RunDir::create(&cli.runs, "multipliers check", &cfg, vec![cfg.seed])?;
            let rep = cfg.run()?;
            dir.write_json("properties.json", &rep)?;
            let code = if rep.lower_bound_m2.passed() { 0 } else { 3 };
            summary(
                &mut dir,
                code,
                &serde_json::json!({
                    "regime": rep.regime,
                    "lower_bound_m2": rep.lower_bound_m2.passed(),
                    "lower_bound_m6": rep.lower_bound_m6.passed(),
                    "lower_bound_m6_demoted": rep.lower_bound_m6_demoted,
                    "m6_constant": rep.lower_bound_m6.worst_ratio,
                }),
            )
        }
        Cmd::Multipliers(MultipliersCmd::Table {
            config,
            params,
            modes,
            t_max,
            samples,
        }) => {
            let cfg = match config {
                Some(p) => {
                    let mut c = read_toml::<MultiplierTableConfig>(p)?;
                    params.apply(&mut c.params);
                    c
                }
                None => MultiplierTableConfig {
                    params: params.build()?,
                    modes: if modes.is_empty() { vec![[1.0, 0.0]] } else { modes.clone() },
                    t_max: *t_max,
                    samples: *samples,
                },
            };
            cfg.validate()?;
            let mut dir = RunDir::create(&cli.runs, "multipliers table", &cfg, vec![])?;
            let rows = cfg.rows()?;
            dir.write_csv("multipliers.csv", &rows)?;
            summary(&mut dir, 0, &serde_json::json!({ "rows": rows.len() }))
        }
        Cmd::Linear(LinearCmd::Run {
            config,
            params,
            k,
            eta,
            t_final,
            variant,
        }) => {
            let mut cfg = match config {
                Some(p) => read_toml::<LinearRunConfig>(p)?,
                None => {
                    let k = k.ok_or_else(|| Error::validation("k", "required without --config"))?;
                    let eta = eta.ok_or_else(|| Error::validation("eta", "required without --config"))?;
                    LinearRunConfig::new(params.build()?, k, eta)
                }
            };
            if config.is_some() {
                params.apply(&mut cfg.params);
            }
            if t_final.is_some() {
                cfg.t_final = *t_final;
            }
            if let Some(v) = variant {
                cfg.variant = Some(match v {
                    VariantArg::OmegaJ => Variant::OmegaJ,
                    VariantArg::ZQ => Variant::ZQ,
                });
            }
            cfg.validate()?;
            let mut dir = RunDir::create(&cli.runs, "linear run", &cfg, vec![])?;
            let (rows, sum) = linear_run(&cfg)?;
            dir.write_csv("trajectory.csv", &rows)?;
            let code = if sum.monotonicity.passed(1e-8) { 0 } else { 3 };
            summary(&mut dir, code, &sum)
        }
        Cmd::Linear(LinearCmd::Sweep { config }) => {
            let cfg: LinearSweepConfig = read_toml(config)?;
            cfg.validate()?;
            let mut dir = RunDir::create(&cli.runs, "linear sweep", &cfg, vec![])?;
            let rep = linear_sweep(&cfg)?;
            dir.write_json("sweep.json", &rep)?;
            let curves: Vec<CurveRow> = rep
                .points
                .iter()
                .flat_map(|p| {
                    p.envelope.curve.iter().map(move |&(t, amp)| CurveRow {
                        nu: p.nu,
                        mu: p.mu,
                        t,
                        amplification: amp,
                    })
                })
                .collect();
            dir.write_csv("envelope_curves.csv", &curves)?;
            let code = if rep.points.iter().all(|p| p.monotone) { 0 } else { 3 };
            summary(
                &mut dir,
                code,
                &serde_json::json!({
                    "points": rep.points.len(),
                    "monotone": rep.points.iter().all(|p| p.monotone),
                    "spreads": rep.spreads,
                }),
            )
        }
        Cmd::Nonlinear(NonlinearCmd::Run {
            config,
            restart,
            snapshot_every,
        }) => nonlinear_run(&cli.runs, config, restart.as_deref(), *snapshot_every),
        Cmd::Threshold(ThresholdCmd::Sweep { config, resume }) => {
            let cfg: SweepConfig = read_toml(config)?;
            cfg.validate()?;
            let mut dir = RunDir::create(&cli.runs, "threshold sweep", &cfg, cfg.seeds.clone())?;
            let res = threshold_sweep(&cfg, &dir.path, *resume, |p| {
                eprintln!(
                    "point {:>3} nu={:.3e} mu={:.3e} {} eps*={:.4e}{}",
                    p.point.index,
                    p.point.nu,
                    p.point.mu,
                    p.point.regime,
                    p.epsilon_star,
                    if p.saturated { " (saturated)" } else { "" }
                );
            })?;
            for p in &res.points {
                dir.register(&format!("points/{}", shear_mhd::harness::point_file(p.point.index)))?;
            }
            dir.write_json("sweep.json", &res)?;
            let rows: Vec<ThresholdRow> = res.points.iter().map(ThresholdRow::from).collect();
            dir.write_csv("thresholds.csv", &rows)?;
            dir.write_json("scaling.json", &res.scaling)?;
            summary(
                &mut dir,
                0,
                &serde_json::json!({
                    "points": res.points.len(),
                    "saturated": res.points.iter().filter(|p| p.saturated).count(),
                    "monotonicity_violations": res.points.iter().map(|p| p.monotonicity_violations).sum::<usize>(),
                    "scaling": res.scaling,
                }),
            )
        }
        Cmd::Fit(FitCmd::Rates { run, records, params }) => {
            let (recs, p, source) = match (run, records) {
                (Some(d), _) => {
                    let m = read_manifest(d)?;
                    let cfg: SolverConfig = serde_json::from_value(m.config["solver"].clone())
                        .map_err(|e| Error::Parse(format!("{}: not a nonlinear run: {e}", d.display())))?;
                    let mut p = cfg.params;
                    params.apply(&mut p);
                    (read_csv::<EnergyRecord>(&d.join("records.csv"))?, p, d.clone())
                }
                (None, Some(f)) => (read_csv::<EnergyRecord>(f)?, params.build()?, f.clone()),
                (None, None) => return Err(Error::validation("run", "pass --run or --records")),
            };
            p.validate("params")?;
            let key = serde_json::json!({ "source": source, "params": p });
            let mut dir = RunDir::create(&cli.runs, "fit rates", &key, vec![])?;
            let fit = fit_records(&recs, &p)?;
            dir.write_json("rate_fit.json", &fit)?;
            summary(&mut dir, 0, &fit)
        }
        Cmd::Report => {
            let rep = report::collect(&cli.runs)?;
            let key: Vec<&str> = rep.runs.iter().map(|r| r.config_hash.as_str()).collect();
            let mut dir = RunDir::create(&cli.runs, "report", &key, vec![])?;
            dir.write_json("report.json", &rep)?;
            dir.write_text("report.md", &report::markdown(&rep))?;
            summary(&mut dir, 0, &serde_json::json!({ "runs": rep.runs.len() }))
        }
    }
}

#[derive(Serialize)]
struct CurveRow {
    nu: f64,
    mu: f64,
    t: f64,
    amplification: f64,
}

#[derive(Serialize)]
struct ThresholdRow {
    index: usize,
    nu: f64,
    mu: f64,
    regime: String,
    epsilon_star: f64,
    saturated: bool,
    decay_slope: Option<f64>,
    predicted_slope: Option<f64>,
    max_amplification: f64,
    violation_time: Option<f64>,
    epsilon_star_doubled: Option<f64>,
}

impl From<&shear_mhd::harness::PointResult> for ThresholdRow {
    fn from(p: &shear_mhd::harness::PointResult) -> Self {
        ThresholdRow {
            index: p.point.index,
            nu: p.point.nu,
            mu: p.point.mu,
            regime: p.point.regime.tag().into(),
            epsilon_star: p.epsilon_star,
            saturated: p.saturated,
            decay_slope: p.decay.as_ref().map(|f| f.slope),
            predicted_slope: p.decay.as_ref().map(|f| f.predicted_slope),
            max_amplification: p.max_amplification,
            violation_time: p.violation_time,
            epsilon_star_doubled: p.doubled.map(|d| d.0),
        }
    }
}

fn summary<T: Serialize>(dir: &mut RunDir, code: i32, value: &T) -> Result<i32> {
    dir.write_json("summary.json", value)?;
    dir.finish(code)?;
    println!("{}", dir.path.display());
    Ok(code)
}

/// Largest relative defect tolerated before a run is flagged.
const INVARIANT_TOL: f64 = 1e-10;

fn nonlinear_run(root: &Path, config: &Path, restart: Option<&Path>, every: usize) -> Result<i32> {
    let cfg: SolverConfig = read_toml(config)?;
    cfg.validate("")?;
    let mut solver = match restart {
        Some(p) => Solver::restart(cfg.clone(), Snapshot::load(p)?)?,
        None => Solver::new(cfg.clone())?,
    };
    let key = serde_json::json!({ "solver": cfg, "restart": restart });
    let mut dir = RunDir::create(root, "nonlinear run", &key, vec![cfg.seed])?;
    let snap_dir = dir.file("snapshots");
    std::fs::create_dir_all(&snap_dir)?;
    let mut defects = InvariantDefects::of(&solver.state, solver.t);
    let mut written = Vec::new();
    let stride = cfg.output_stride;
    let out = solver.run_with(|s, _| {
        if s.steps % stride == 0 {
            defects = defects.max(InvariantDefects::of(&s.state, s.t));
        }
        if every > 0 && s.steps % every == 0 {
            let name = format!("snapshots/step-{:08}.snap", s.steps);
            s.snapshot().save(&s_path(&snap_dir, &name))?;
            written.push(name);
        }
        Ok(())
    })?;
    defects = defects.max(InvariantDefects::of(&solver.state, solver.t));
    for w in &written {
        dir.register(w)?;
    }
    solver.snapshot().save(&dir.file("final.snap"))?;
    dir.register("final.snap")?;
    dir.write_csv("records.csv", &out.records)?;
    let p = &cfg.params;
    let boot = bootstrap_monitor(&out.records, cfg.epsilon, p.regime(), p.beta);
    let fit = fit_records(&out.records, p);
    let invariants_ok = defects.conjugate <= INVARIANT_TOL && defects.divergence <= INVARIANT_TOL;
    let code = match (&out.status, invariants_ok) {
        (RunStatus::Aborted { .. }, _) => 4,
        (_, false) => 3,
        _ => 0,
    };
    summary(
        &mut dir,
        code,
        &serde_json::json!({
            "status": out.status,
            "steps": out.steps,
            "t": solver.t,
            "regime": p.regime(),
            "bootstrap": boot,
            "rate_fit": fit.as_ref().ok(),
            "rate_fit_error": fit.as_ref().err().map(|e| e.to_string()),
            "invariants": defects,
        }),
    )
}

fn s_path(snap_dir: &Path, name: &str) -> PathBuf {
    snap_dir.join(Path::new(name).file_name().unwrap_or_default())
}
