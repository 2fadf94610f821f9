//! Command-line front end: case and timeline generation, L synthesis,
//! invariant checks and controller comparison runs.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::controllers::{ControllerConfig, ControllerKind};
use crate::error::{Error, Result};
use crate::lindistflow::{build_sensitivity, path_overlap_matrix};
use crate::network::{load_case, synthetic_feeder, write_case, FeederParams, Network};
use crate::optimizer::{centralized_oracle, StopRule};
use crate::simulator::{
    make_scenario, metrics, run_offline, run_online, Metrics, OnlineOptions, PlantKind, ScenarioKind, ScenarioParams,
    ScenarioTimeline, SimulationTrace, Study,
};
use crate::synthesis::{
    diag_dominant_seed, phi_from_a, solve_trace_min_l, spectral_norm, verify_psd, Provenance, SdpMethod,
    SynthesisOptions,
};

#[derive(Debug, Parser)]
#[command(name = "voltvar", version, about = "Local volt/var control on radial feeders")]
pub struct Cli {
    /// Worker threads for parallel runs (defaults to the number of cores).
    #[arg(long, global = true, env = "VOLTVAR_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one or more controllers on a case and write traces plus a summary.
    Run(RunArgs),
    /// Synthesize the diagonal metric L and write it as JSON.
    SynthL(SynthArgs),
    /// Run the invariant battery on a case and print a pass/fail table.
    Check(CheckArgs),
    /// Generate a synthetic trunk-and-laterals feeder.
    MakeCase(MakeCaseArgs),
    /// Generate a load/PV timeline CSV for a case.
    MakeTimeline(MakeTimelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Static,
    Sudden,
    Continuous,
}

impl From<ScenarioArg> for ScenarioKind {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Static => ScenarioKind::Static,
            ScenarioArg::Sudden => ScenarioKind::SuddenChange,
            ScenarioArg::Continuous => ScenarioKind::Continuous,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlantArg {
    Linear,
    Nonlinear,
}

impl From<PlantArg> for PlantKind {
    fn from(p: PlantArg) -> Self {
        match p {
            PlantArg::Linear => PlantKind::Linear,
            PlantArg::Nonlinear => PlantKind::Nonlinear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Fixed loads, iterate until the outputs stop moving.
    Offline,
    /// Apply each output to the evolving plant, one step per timeline row.
    #[default]
    Online,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run specification; replaces all other run flags except --out.
    #[arg(long, conflicts_with_all = ["case", "controllers", "timeline"])]
    pub spec: Option<PathBuf>,
    #[arg(long, required_unless_present = "spec")]
    pub case: Option<PathBuf>,
    /// Comma-separated controller names (none, cdc, ddc, gpdc, sgpdc, asalvc).
    #[arg(long, value_delimiter = ',', default_value = "asalvc,gpdc")]
    pub controllers: Vec<String>,
    #[arg(long, value_enum, default_value_t = ScenarioArg::Static)]
    pub scenario: ScenarioArg,
    /// Read the timeline from a CSV instead of generating it.
    #[arg(long)]
    pub timeline: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PlantArg::Nonlinear)]
    pub plant: PlantArg,
    #[arg(long, value_enum, default_value_t = RunMode::Online)]
    pub mode: RunMode,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub pv_peak: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also solve the centralized problem and report objective gaps.
    #[arg(long)]
    pub oracle: bool,
    /// Offline stopping tolerance on the largest output change.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Use the eigenvector cutting-plane solver instead of the barrier method.
    #[arg(long)]
    pub cutting_plane: bool,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub case: PathBuf,
    /// Test hook: add this amount to A[0,1] before checking.
    #[arg(long, hide = true)]
    pub corrupt_a: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MakeCaseArgs {
    #[arg(long, default_value_t = 123)]
    pub buses: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub trunk_len: usize,
    #[arg(long, default_value_t = 1.0)]
    pub p_load_kw: f64,
    #[arg(long, default_value_t = 0.5)]
    pub q_load_kvar: f64,
    #[arg(long, default_value_t = 50.0)]
    pub der_capacity_kva: f64,
    /// Symmetric VAr window per inverter, kVAr.
    #[arg(long, default_value_t = 10.0)]
    pub q_limit_kvar: f64,
    /// Derive the VAr window from capacity and PV output instead.
    #[arg(long)]
    pub capacity_derived: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MakeTimelineArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long, value_enum, default_value_t = ScenarioArg::Continuous)]
    pub kind: ScenarioArg,
    /// Defaults to 60 for static and sudden scenarios, a full day otherwise.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub change_step: usize,
    #[arg(long, default_value_t = 1.5)]
    pub multiplier: f64,
    #[arg(long, default_value_t = 0.0)]
    pub pv_peak: f64,
    #[arg(long, default_value_t = 0.02)]
    pub load_noise: f64,
    #[arg(long, default_value_t = 0.3)]
    pub cloud_depth: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

/// A controller given by name (standard settings) or by full configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControllerSpec {
    Name(ControllerKind),
    Full(ControllerConfig),
}

impl ControllerSpec {
    pub fn kind(&self) -> ControllerKind {
        match self {
            ControllerSpec::Name(k) => *k,
            ControllerSpec::Full(c) => c.kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub params: ScenarioParams,
    #[serde(default)]
    pub seed: u64,
    /// Timeline CSV; overrides `kind` and `params` when present.
    #[serde(default)]
    pub timeline: Option<PathBuf>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            kind: ScenarioKind::Static,
            params: ScenarioParams::default(),
            seed: 0,
            timeline: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub offline_tol: f64,
    pub max_iter: usize,
    /// Output change below which a run counts as settled.
    pub settle_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            offline_tol: 1e-6,
            max_iter: 10_000,
            settle_tol: 1e-4,
        }
    }
}

/// Everything a `run` needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub case: PathBuf,
    #[serde(default)]
    pub scenario: ScenarioSpec,
    pub controllers: Vec<ControllerSpec>,
    #[serde(default)]
    pub plant: PlantKind,
    #[serde(default)]
    pub mode: RunMode,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub oracle: bool,
}

impl RunSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.controllers.is_empty() {
            return Err(Error::InvalidInput("a run needs at least one controller".into()));
        }
        let mut kinds: Vec<_> = self.controllers.iter().map(ControllerSpec::kind).collect();
        kinds.sort_by_key(|k| k.name());
        if kinds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("each controller may appear once per run".into()));
        }
        for p in std::iter::once(&self.case).chain(self.scenario.timeline.as_ref()) {
            if !p.is_file() {
                return Err(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
        if !(self.tolerances.offline_tol >= 0.0 && self.tolerances.settle_tol >= 0.0) {
            return Err(Error::InvalidInput("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

impl RunArgs {
    fn to_spec(&self) -> Result<RunSpec> {
        if let Some(path) = &self.spec {
            let mut spec = RunSpec::load(path)?;
            if let Some(out) = &self.out {
                spec.out_dir = out.clone();
            }
            return Ok(spec);
        }
        let case = self.case.clone().ok_or_else(|| Error::InvalidInput("--case is required".into()))?;
        let kind: ScenarioKind = self.scenario.into();
        let mut params = if kind == ScenarioKind::Continuous {
            ScenarioParams::daily()
        } else {
            ScenarioParams::default()
        };
        if let Some(s) = self.steps {
            params.steps = s;
        }
        if let Some(p) = self.pv_peak {
            params.pv_peak = p;
        }
        let controllers = self
            .controllers
            .iter()
            .map(|c| c.trim().parse().map(ControllerSpec::Name))
            .collect::<Result<Vec<_>>>()?;
        Ok(RunSpec {
            case,
            scenario: ScenarioSpec {
                kind,
                params,
                seed: self.seed,
                timeline: self.timeline.clone(),
            },
            controllers,
            plant: self.plant.into(),
            mode: self.mode,
            out_dir: self.out.clone().unwrap_or_else(|| PathBuf::from("voltvar-out")),
            tolerances: Tolerances {
                offline_tol: self.tol,
                max_iter: self.max_iter,
                ..Tolerances::default()
            },
            oracle: self.oracle,
        })
    }
}

/// One controller's line in the run summary.
#[derive(Debug, Clone, Serialize)]
pub struct ControllerSummary {
    pub controller: ControllerKind,
    pub iterations: usize,
    pub converged: bool,
    pub settling_step: usize,
    /// Final objective minus the oracle objective, when the oracle ran.
    pub gap: Option<f64>,
    pub trace: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub case: PathBuf,
    pub buses: usize,
    pub mode: RunMode,
    pub plant: PlantKind,
    pub timeline_steps: usize,
    pub oracle_objective: Option<f64>,
    pub controllers: Vec<ControllerSummary>,
}

fn resolve_config(spec: &ControllerSpec, study: &Study, mode: RunMode) -> ControllerConfig {
    match spec {
        ControllerSpec::Full(c) => c.clone(),
        ControllerSpec::Name(k) => {
            let mut cfg = study.config(*k);
            if mode == RunMode::Offline {
                // momentum restarts only matter when the loads move
                cfg.t_gamma = None;
            }
            cfg
        }
    }
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::InvalidInput("thread count must be at least 1".into()));
        }
        b = b.num_threads(t);
    }
    b.build().map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))
}

/// Executes a run and writes `trace_<controller>.csv` plus `summary.json`
/// into the output directory. Returns the summary and whether every
/// controller finished without a plant failure.
pub fn cmd_run(spec: &RunSpec, threads: Option<usize>) -> Result<(RunSummary, bool)> {
    spec.validate()?;
    let case = load_case(&spec.case)?;
    let study = Study::new(case)?;
    let timeline = match &spec.scenario.timeline {
        Some(p) => ScenarioTimeline::load(p)?,
        None => make_scenario(&study.net, spec.scenario.kind, &spec.scenario.params, spec.scenario.seed)?,
    };
    if timeline.n() != study.n() {
        return Err(Error::Dimension {
            expected: study.n(),
            got: timeline.n(),
        });
    }
    let configs: Vec<ControllerConfig> =
        spec.controllers.iter().map(|c| resolve_config(c, &study, spec.mode)).collect();
    for c in &configs {
        c.validate(study.n())?;
    }

    let plant = study.plant(spec.plant);
    let offline_t = 0;
    let stop = StopRule {
        tol: spec.tolerances.offline_tol,
        max_iter: spec.tolerances.max_iter,
    };
    let pool = thread_pool(threads)?;
    let traces: Vec<Result<SimulationTrace>> = pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| match spec.mode {
                RunMode::Offline => run_offline(
                    &plant,
                    &study.phi,
                    cfg,
                    &timeline.exogenous(offline_t),
                    &timeline.limits(&study.net, offline_t),
                    stop,
                ),
                RunMode::Online => run_online(&plant, &study.phi, cfg, &timeline, OnlineOptions::default()),
            })
            .collect()
    });
    let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;

    let oracle_objective = if spec.oracle {
        let t = match spec.mode {
            RunMode::Offline => offline_t,
            RunMode::Online => timeline.steps() - 1,
        };
        let v_ref = configs.first().map_or(1.0, |c| c.v_ref);
        let problem = study.problem(&timeline.exogenous(t), v_ref, &timeline.limits(&study.net, t))?;
        Some(centralized_oracle(&problem)?.f)
    } else {
        None
    };

    fs::create_dir_all(&spec.out_dir).map_err(|e| Error::io(&spec.out_dir, e))?;
    let mut summaries = Vec::with_capacity(traces.len());
    for trace in &traces {
        let name = format!("trace_{}.csv", trace.controller);
        let path = spec.out_dir.join(&name);
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        trace.write_csv(std::io::BufWriter::new(f))?;
        let m = metrics(trace);
        summaries.push(ControllerSummary {
            controller: trace.controller,
            iterations: trace.iterations(),
            converged: trace.converged,
            settling_step: trace.settling_step(spec.tolerances.settle_tol),
            gap: oracle_objective.map(|f| m.final_objective - f),
            trace: name,
            metrics: m,
        });
    }
    let summary = RunSummary {
        case: spec.case.clone(),
        buses: study.n(),
        mode: spec.mode,
        plant: spec.plant,
        timeline_steps: timeline.steps(),
        oracle_objective,
        controllers: summaries,
    };
    let path = spec.out_dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&path, e))?;
    let clean = traces.iter().all(|t| t.failure.is_none());
    Ok((summary, clean))
}

/// Bus label to value, serialized in bus order.
struct LabeledValues(Vec<(String, f64)>);

impl Serialize for LabeledValues {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

#[derive(Serialize)]
struct Certificate {
    min_eig: f64,
    tolerance: f64,
    feasible: bool,
}

#[derive(Serialize)]
struct SynthOutput {
    l: LabeledValues,
    trace: f64,
    seed_trace: f64,
    lower_bound: Option<f64>,
    provenance: &'static str,
    certificate: Certificate,
}

pub fn cmd_synth_l(args: &SynthArgs) -> Result<()> {
    let net = Network::new(load_case(&args.case)?)?;
    let model = build_sensitivity(&net.case, &net.inc)?;
    let opts = SynthesisOptions {
        method: if args.cutting_plane { SdpMethod::CuttingPlane } else { SdpMethod::Barrier },
        tol: args.tol,
        ..SynthesisOptions::default()
    };
    let l = solve_trace_min_l(model.a(), opts)?;
    let check = verify_psd(&l.to_matrix(), model.a())?;
    let out = SynthOutput {
        l: LabeledValues((1..=net.n()).map(|i| (net.case.label(i).to_string(), l.get(i - 1))).collect()),
        trace: l.trace(),
        seed_trace: diag_dominant_seed(model.a()).trace(),
        lower_bound: l.lower_bound(),
        provenance: match l.provenance() {
            Provenance::Seed => "seed",
            Provenance::Optimized => "optimized",
        },
        certificate: Certificate {
            min_eig: check.min_eig,
            tolerance: check.tolerance,
            feasible: check.feasible,
        },
    };
    fs::write(&args.out, serde_json::to_string_pretty(&out)?).map_err(|e| Error::io(&args.out, e))
}

/// One row of the invariant table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: &'static str,
    pub pass: bool,
    pub value: f64,
}

/// Runs the invariant battery against `a`, normally the sensitivity matrix
/// of `net` (tests pass a corrupted copy).
pub fn invariant_battery(net: &Network, a: &DMatrix<f64>) -> Result<Vec<CheckRow>> {
    let scale = spectral_norm(a).max(f64::MIN_POSITIVE);
    let asym = (a - a.transpose()).amax();
    let eig = SymmetricEigen::new(a.clone()).eigenvalues.min();
    let overlap = (a - path_overlap_matrix(&net.case, &net.topo, |l| l.x)).amax();
    let phi = phi_from_a(&net.case, &net.inc)?;
    let n = a.nrows();
    let inv = (phi.matrix() * a - DMatrix::identity(n, n)).amax();
    let seed = diag_dominant_seed(a);
    let seed_check = verify_psd(&seed.to_matrix(), a)?;
    Ok(vec![
        CheckRow {
            name: "A symmetric",
            pass: asym <= 1e-12 * scale,
            value: asym,
        },
        CheckRow {
            name: "A positive definite (sigma_min)",
            pass: eig > 0.0,
            value: eig,
        },
        CheckRow {
            name: "A matches path overlap",
            pass: overlap <= 1e-12 * scale,
            value: overlap,
        },
        CheckRow {
            name: "Phi A = I",
            pass: inv <= 1e-8,
            value: inv,
        },
        CheckRow {
            name: "seed L - A PSD (min eig)",
            pass: seed_check.feasible,
            value: seed_check.min_eig,
        },
    ])
}

pub fn cmd_check(args: &CheckArgs) -> Result<Vec<CheckRow>> {
    let net = Network::new(load_case(&args.case)?)?;
    let model = build_sensitivity(&net.case, &net.inc)?;
    let mut a = model.a().clone();
    if let Some(delta) = args.corrupt_a {
        if a.nrows() > 1 {
            a[(0, 1)] += delta;
        } else {
            a[(0, 0)] = -a[(0, 0)] - delta.abs();
        }
    }
    invariant_battery(&net, &a)
}

pub fn format_check_table(rows: &[CheckRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in rows {
        s += &format!(
            "{:<width$}  {}  {:.6e}\n",
            r.name,
            if r.pass { "PASS" } else { "FAIL" },
            r.value
        );
    }
    s
}

pub fn cmd_make_case(args: &MakeCaseArgs) -> Result<()> {
    if args.buses == 0 {
        return Err(Error::InvalidInput("a feeder needs at least one bus".into()));
    }
    let params = FeederParams {
        buses: args.buses,
        trunk_len: args.trunk_len,
        p_load_kw: args.p_load_kw,
        q_load_kvar: args.q_load_kvar,
        der_capacity_kva: args.der_capacity_kva,
        der_q_limit_kvar: if args.capacity_derived { None } else { Some(args.q_limit_kvar) },
        ..FeederParams::default()
    };
    write_case(&synthetic_feeder(&params, args.seed), &args.out)
}

pub fn cmd_make_timeline(args: &MakeTimelineArgs) -> Result<()> {
    let net = Network::new(load_case(&args.case)?)?;
    let kind: ScenarioKind = args.kind.into();
    let base = if kind == ScenarioKind::Continuous {
        ScenarioParams::daily()
    } else {
        ScenarioParams::default()
    };
    let params = ScenarioParams {
        steps: args.steps.unwrap_or(base.steps),
        dt: args.dt.unwrap_or(base.dt),
        change_step: args.change_step,
        multiplier: args.multiplier,
        pv_peak: args.pv_peak,
        load_noise: args.load_noise,
        cloud_depth: args.cloud_depth,
    };
    make_scenario(&net, kind, &params, args.seed)?.save(&args.out)
}

/// Runs a parsed command line and returns the process exit code:
/// 0 success, 1 numerical failure, 2 input error.
pub fn execute(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Run(args) => args.to_spec().and_then(|spec| cmd_run(&spec, cli.threads)).map(|(s, clean)| {
            for c in &s.controllers {
                println!(
                    "{:<7} iterations {:>6}  final objective {:.6e}  violations V {} Q {}{}",
                    c.controller.name(),
                    c.iterations,
                    c.metrics.final_objective,
                    c.metrics.voltage_violations,
                    c.metrics.capacity_violations,
                    c.metrics.failure.as_ref().map_or(String::new(), |f| format!("  FAILED at {f}"))
                );
            }
            if clean {
                0
            } else {
                1
            }
        }),
        Command::SynthL(args) => cmd_synth_l(args).map(|_| 0),
        Command::Check(args) => cmd_check(args).map(|rows| {
            print!("{}", format_check_table(&rows));
            0
        }),
        Command::MakeCase(args) => cmd_make_case(args).map(|_| 0),
        Command::MakeTimeline(args) => cmd_make_timeline(args).map(|_| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}
