//! Command-line surface of the `wtqa` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use wtqa_core::methods::MethodKind;
use wtqa_core::panel::write_panel_csv;
use wtqa_core::synth::{make_structure, simulate_panel, Scenario, ScenarioSpec};

use crate::config::{parse_grid, ExperimentConfig, FeedbackKind, SweepAxis};
use crate::error::HarnessError;
use crate::experiment::{cells, run_cells};
use crate::output::Collector;
use crate::report::{find_traces, report_from_traces};
use crate::selftest;

#[derive(Debug, Parser)]
#[command(name = "wtqa", version, about = "Online conformal prediction on panels: experiments and sweeps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic panels and export them as CSV plus metadata.
    Simulate(SimulateArgs),
    /// Run one experiment (a single grid cell over all replications).
    Run(ExperimentArgs),
    /// Sweep one of p, h or gamma.
    Sweep(SweepArgs),
    /// Recompute tables and figures from a stored traces file.
    Report(ReportArgs),
    /// Run the invariant suite.
    Selftest,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<Scenario>,
    /// Panel CSV with columns unit_id,time_id,y,x_0,...
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Comma-separated method ids or labels.
    #[arg(long)]
    pub methods: Option<String>,
    /// Feedback mode: full, mcar or informative.
    #[arg(long)]
    pub feedback: Option<String>,
    /// Reveal probability, or a grid (`0,0.5,1` or `0:1:0.2`) when sweeping.
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub h: Option<String>,
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Base replication seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Skip the per-round traces file.
    #[arg(long)]
    pub no_traces: bool,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: ExperimentArgs,
    /// Axis to sweep; inferred from the one grid-valued flag if omitted.
    #[arg(long)]
    pub axis: Option<SweepAxis>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "easy")]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Base replication seed.
    #[arg(long, default_value_t = 1000)]
    pub seed: u64,
    #[arg(long, default_value_t = 20240501)]
    pub structure_seed: u64,
    #[arg(long, default_value = "panels")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding a `*_traces.csv` file.
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// Traces file (overrides `--from`).
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// Output directory; defaults to the traces' directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub tail_fraction: f64,
}

fn single(name: &str, text: &str) -> Result<f64, HarnessError> {
    match parse_grid(text)?.as_slice() {
        [v] => Ok(*v),
        _ => Err(HarnessError::Config(format!("--{name} takes one value here; grids are for `wtqa sweep`"))),
    }
}

impl ExperimentArgs {
    fn base_config(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.scenario {
            cfg.data.scenario = s;
            cfg.data.panel = None;
        }
        if let Some(p) = &self.panel {
            cfg.data.panel = Some(p.clone());
        }
        if let Some(list) = &self.methods {
            cfg.methods = list
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.parse::<MethodKind>().map_err(|e| HarnessError::Config(e.to_string())))
                .collect::<Result<_, _>>()?;
        }
        if let Some(mode) = &self.feedback {
            cfg.feedback.mode = match mode.as_str() {
                "full" => FeedbackKind::Full,
                "mcar" => FeedbackKind::Mcar,
                "informative" | "informative_hard" | "hard_visible" => FeedbackKind::Informative,
                "informative_easy" | "easy_visible" => {
                    cfg.feedback.direction = wtqa_core::feedback::InformativeDirection::EasyVisible;
                    FeedbackKind::Informative
                }
                other => return Err(HarnessError::Config(format!("unknown feedback mode {other:?}"))),
            };
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(r) = self.reps {
            cfg.reps = r;
        }
        if let Some(s) = self.seed {
            cfg.seeds.base_rep_seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if self.no_traces {
            cfg.save_traces = false;
        }
        Ok(cfg)
    }

    /// Configuration for a single-cell run.
    pub fn run_config(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = self.base_config()?;
        if let Some(p) = &self.p {
            cfg.feedback.p = single("p", p)?;
            if cfg.feedback.mode == FeedbackKind::Full && self.feedback.is_none() {
                cfg.feedback.mode = FeedbackKind::Mcar;
            }
        }
        if let Some(h) = &self.h {
            cfg.h = single("h", h)?;
        }
        if let Some(g) = &self.gamma {
            cfg.gamma = single("gamma", g)?;
        }
        Ok(cfg)
    }
}

impl SweepArgs {
    /// Configuration and the one active axis.
    pub fn sweep_config(&self) -> Result<(ExperimentConfig, SweepAxis), HarnessError> {
        let c = &self.common;
        let mut cfg = c.base_config()?;
        let grids = [
            (SweepAxis::P, c.p.as_deref().map(parse_grid).transpose()?),
            (SweepAxis::H, c.h.as_deref().map(parse_grid).transpose()?),
            (SweepAxis::Gamma, c.gamma.as_deref().map(parse_grid).transpose()?),
        ];
        let multi: Vec<SweepAxis> = grids
            .iter()
            .filter(|(_, g)| g.as_ref().is_some_and(|g| g.len() > 1))
            .map(|(a, _)| *a)
            .collect();
        if multi.len() > 1 {
            return Err(HarnessError::Config("multiple sweep axes; sweep one of p, h, gamma at a time".into()));
        }
        let axis = match (self.axis, multi.first()) {
            (Some(a), Some(&m)) if a != m => {
                return Err(HarnessError::Config(format!("--axis {} conflicts with a grid on {}", a.id(), m.id())))
            }
            (Some(a), _) => a,
            (None, Some(&m)) => m,
            (None, None) => return Err(HarnessError::Config("no sweep axis; pass --axis or a grid".into())),
        };
        for (a, grid) in grids {
            let Some(grid) = grid else { continue };
            match (a == axis, a) {
                (true, SweepAxis::P) => cfg.sweep.p_grid = grid,
                (true, SweepAxis::H) => cfg.sweep.h_grid = grid,
                (true, SweepAxis::Gamma) => cfg.sweep.gamma_grid = grid,
                (false, SweepAxis::P) => cfg.feedback.p = single("p", &c.p.clone().unwrap())?,
                (false, SweepAxis::H) => cfg.h = single("h", &c.h.clone().unwrap())?,
                (false, SweepAxis::Gamma) => cfg.gamma = single("gamma", &c.gamma.clone().unwrap())?,
            }
        }
        Ok((cfg, axis))
    }
}

/// Run `cfg` over the cells of `axis` and write every output file.
pub fn execute(cfg: &ExperimentConfig, axis: Option<SweepAxis>) -> Result<Vec<PathBuf>, HarnessError> {
    cfg.validate()?;
    let grid = cells(cfg, axis);
    let mut collector = Collector::new(&cfg.dataset_name(), axis);
    if cfg.save_traces {
        collector = collector.with_traces(&cfg.out)?;
    }
    run_cells(cfg, &grid, |outcome| collector.absorb(outcome))?;
    let mut written = collector.finish(&cfg.out)?;
    let path = cfg.out.join(format!("{}_{}_config.toml", cfg.dataset_name(), crate::output::axis_id(axis)));
    std::fs::write(&path, cfg.to_toml()).map_err(|e| HarnessError::output(&path, e))?;
    written.push(path);
    Ok(written)
}

pub fn simulate(args: &SimulateArgs) -> Result<Vec<PathBuf>, HarnessError> {
    let spec = ScenarioSpec::new(args.scenario);
    let templates = make_structure(args.structure_seed, &spec)?;
    std::fs::create_dir_all(&args.out).map_err(|e| HarnessError::output(&args.out, e))?;
    let mut written = Vec::new();
    for rep in 0..args.reps {
        let seed = args.seed + rep as u64;
        let (panel, meta) = simulate_panel(&templates, &spec, seed)?;
        let stem = format!("{}_rep{rep}", args.scenario.id());
        let path = args.out.join(format!("{stem}.csv"));
        let file = std::fs::File::create(&path).map_err(|e| HarnessError::output(&path, e))?;
        write_panel_csv(&panel, std::io::BufWriter::new(file))?;
        written.push(path);
        let sidecar = serde_json::json!({
            "scenario": meta.scenario.id(),
            "structure_seed": meta.structure_seed,
            "rep_seed": meta.rep_seed,
            "burn_in_end": panel.burn_in_end(),
            "clusters": meta.clusters,
            "frailty": meta.frailty,
            "factors": meta.factors,
        });
        let path = args.out.join(format!("{stem}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&sidecar).expect("metadata serializes"))
            .map_err(|e| HarnessError::output(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

pub fn report(args: &ReportArgs) -> Result<Vec<PathBuf>, HarnessError> {
    let traces = match (&args.traces, &args.from) {
        (Some(t), _) => t.clone(),
        (None, Some(dir)) => find_traces(dir)?,
        (None, None) => return Err(HarnessError::Config("pass --from DIR or --traces FILE".into())),
    };
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| traces.parent().map_or_else(|| Path::new(".").to_path_buf(), Path::to_path_buf));
    report_from_traces(&traces, &out, args.tail_fraction)
}

/// Dispatch a parsed command line; the returned strings go to stdout.
pub fn dispatch(cli: Cli) -> Result<Vec<String>, HarnessError> {
    let listed = |paths: Vec<PathBuf>| paths.into_iter().map(|p| format!("wrote {}", p.display())).collect();
    match cli.command {
        Command::Simulate(args) => simulate(&args).map(listed),
        Command::Run(args) => {
            let cfg = args.run_config()?;
            if args.print_config {
                cfg.validate()?;
                return Ok(vec![cfg.to_toml()]);
            }
            execute(&cfg, None).map(listed)
        }
        Command::Sweep(args) => {
            let (cfg, axis) = args.sweep_config()?;
            if args.common.print_config {
                cfg.validate()?;
                return Ok(vec![cfg.to_toml()]);
            }
            execute(&cfg, Some(axis)).map(listed)
        }
        Command::Report(args) => report(&args).map(listed),
        Command::Selftest => {
            let checks = selftest::run_all();
            let failed = checks.iter().filter(|c| !c.passed).count();
            let lines: Vec<String> = checks
                .iter()
                .map(|c| format!("{} {}{}", if c.passed { "PASS" } else { "FAIL" }, c.name, if c.detail.is_empty() { String::new() } else { format!(" ({})", c.detail) }))
                .collect();
            if failed > 0 {
                for l in &lines {
                    eprintln!("{l}");
                }
                return Err(HarnessError::Report(format!("{failed} selftest check(s) failed")));
            }
            Ok(lines)
        }
    }
}
