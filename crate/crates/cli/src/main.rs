//! `vilab` command line: solves, convergence studies, sequence
//! classification and the golden self test.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use vilab::criterion::{classify_sequence_with, CandidateSequence, CriterionConfig};
use vilab::fem::contact::{self, ContactLoads, ContactProblemData, ElasticMaterial};
use vilab::fem::heat;
use vilab::selftest::run_golden_suite;
use vilab::studies::{self, ConvergenceTable, StudyConfig, StudyLadder};
use vilab::{Error, PenaltyOperator, SolveConfig, SolveMethod, VIProblem};

use output::OutDir;

const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Parser)]
#[command(name = "vilab", version, about = "Variational inequality solver and convergence lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem given as JSON; writes solve_report.json and solution.csv.
    Solve(SolveArgs),
    /// Run a convergence study; writes table.csv and manifest.json.
    Study(StudyArgs),
    /// Classify a candidate sequence (CSV, one vector per row) against a problem.
    Classify(ClassifyArgs),
    /// Elastic contact with a rigid-plastic layer: single solve or study.
    Contact {
        #[arg(value_enum)]
        action: ContactAction,
        #[command(flatten)]
        args: ContactArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Run the golden suite of scalar examples and print one line per check.
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory, created if missing [default: vilab-out; selftest
    /// writes files only when given].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized probes and random presets.
    #[arg(long, env = "VI_LAB_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Also write a gnuplot script next to the tables.
    #[arg(long)]
    emit_gnuplot: bool,
}

impl Common {
    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("vilab-out"))
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Method {
    FixedPoint,
    CoordinateDescent,
    Auto,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "auto")]
    method: Method,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iter: usize,
    /// Fixed-point step; defaults to m/M².
    #[arg(long)]
    rho: Option<f64>,
}

impl SolverArgs {
    fn config(&self) -> SolveConfig {
        SolveConfig {
            rho: self.rho,
            tol: self.tol,
            max_iter: self.max_iter,
            method: match self.method {
                Method::FixedPoint => SolveMethod::FixedPoint,
                Method::CoordinateDescent => SolveMethod::CoordinateDescent,
                Method::Auto => SolveMethod::Auto,
            },
            initial: None,
        }
    }

    fn overrides(&self) -> serde_json::Value {
        json!({ "method": self.method, "tol": self.tol, "max_iter": self.max_iter, "rho": self.rho })
    }
}

#[derive(Args)]
struct SolveArgs {
    spec: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum StudyKind {
    Penalty,
    Data,
    Mosco,
    Heat,
    Contact,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Preset {
    Scalar,
    Interval,
    Random,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(value_enum)]
    kind: StudyKind,
    /// Ladder preset for penalty, data and mosco studies.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Ladder length for data and mosco ladders.
    #[arg(long, default_value_t = 2000)]
    len: usize,
    /// Dimension of random presets.
    #[arg(long, default_value_t = 6)]
    n: usize,
    /// Spatial dimension of the heat mesh (1 or 2).
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Heat mesh subdivisions in x.
    #[arg(long, default_value_t = 64)]
    nx: usize,
    /// Heat mesh subdivisions in y.
    #[arg(long, default_value_t = 16)]
    ny: usize,
    /// Heat source density.
    #[arg(long, default_value_t = 2.0)]
    g: f64,
    /// Heat flux on Γ2.
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    /// Prescribed temperature on Γ3.
    #[arg(long, default_value_t = 0.0)]
    b: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    contact: ContactArgs,
    #[arg(long, default_value_t = 16)]
    probe_budget: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum ContactAction {
    Solve,
    Study,
}

#[derive(Args, Clone, Serialize)]
struct ContactArgs {
    /// Contact mesh subdivisions in x.
    #[arg(long = "cx", default_value_t = 16)]
    cx: usize,
    /// Contact mesh subdivisions in y.
    #[arg(long = "cy", default_value_t = 8)]
    cy: usize,
    #[arg(long, default_value_t = 1.0)]
    lame_lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    lame_mu: f64,
    /// Yield limit F on Γ3.
    #[arg(long = "yield", default_value_t = 0.5)]
    yield_limit: f64,
    /// Layer thickness k.
    #[arg(long, default_value_t = 0.5)]
    k: f64,
    /// Body force as "x,y".
    #[arg(long, default_value = "0,-0.5", value_parser = parse_pair)]
    f0: [f64; 2],
    /// Top traction as "x,y".
    #[arg(long, default_value = "0.4,-1.5", value_parser = parse_pair)]
    f2: [f64; 2],
    /// Friction coefficient (study: μ₀ of the ladder μₙ = μ₀/n).
    #[arg(long, default_value_t = 0.05)]
    mu: f64,
    /// Ladder indices run over 1, 2, 4, …, 2^last.
    #[arg(long, default_value_t = 12)]
    last: u32,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok([a.parse().map_err(|e| format!("{e}"))?, b.parse().map_err(|e| format!("{e}"))?]),
        _ => Err(format!("expected two comma-separated numbers, got {s:?}")),
    }
}

#[derive(Args)]
struct ClassifyArgs {
    spec: PathBuf,
    sequence: PathBuf,
    #[arg(long, default_value_t = 16)]
    probe_budget: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    inputs: Vec<String>,
    overrides: serde_json::Value,
    out: String,
    seed: u64,
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::MaxIterExceeded { .. } => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Study(a) => cmd_study(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Contact { action, args, common } => cmd_contact(*action, args, common),
        Command::Selftest { common } => cmd_selftest(common),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn write_manifest(out: &OutDir, command: &str, inputs: &[&Path], overrides: serde_json::Value, seed: u64) -> Result<(), Error> {
    let m = RunManifest {
        command,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        overrides,
        out: out.path().display().to_string(),
        seed,
    };
    out.write_json("run_manifest.json", &m)
}

fn read_problem(path: &Path) -> Result<VIProblem, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    })?;
    VIProblem::from_json(&text).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    })
}

fn cmd_solve(a: &SolveArgs) -> Outcome {
    let problem = read_problem(&a.spec)?;
    let out = OutDir::create(&a.common.out_dir())?;
    write_manifest(&out, "solve", &[&a.spec], a.solver.overrides(), a.common.seed)?;
    let (report, code) = match vilab::solve_vi(&problem, &a.solver.config()) {
        Ok(r) => (r, 0),
        Err(Error::MaxIterExceeded { max_iter, last_step, best }) => {
            eprintln!("error: iteration limit of {max_iter} reached (last step {last_step:e}); writing best iterate");
            let r = vilab::SolveReport {
                u: best,
                iterations: max_iter,
                converged: false,
                contraction_estimate: f64::NAN,
                final_step: last_step,
                m: problem.m(),
                big_m: problem.big_m(),
                outer_iterations: None,
                outer_ratio: None,
            };
            (r, 2)
        }
        Err(e) => return Err(e.into()),
    };
    out.write_json("solve_report.json", &report)?;
    out.write_with("solution.csv", |w| output::vector_csv(&report.u, w))?;
    if a.common.emit_gnuplot {
        out.write_text("plot.gp", &output::gnuplot_solution())?;
    }
    Ok(code)
}

fn ladder_for(a: &StudyArgs) -> Result<StudyLadder, Error> {
    let preset = a.preset.unwrap_or(match a.kind {
        StudyKind::Mosco => Preset::Interval,
        _ => Preset::Scalar,
    });
    match (a.kind, preset) {
        (StudyKind::Penalty, Preset::Scalar) => Ok(studies::scalar_penalty_ladder()),
        (StudyKind::Penalty, Preset::Random) => {
            let base = studies::random_problem(a.common.seed, a.n)?;
            let g = PenaltyOperator::proj_residual(base.set.clone());
            StudyLadder::penalty(base, g, studies::geometric_lambdas(12))
        }
        (StudyKind::Data, Preset::Scalar) => studies::scalar_data_ladder(a.len),
        (StudyKind::Data, Preset::Random) => {
            studies::harmonic_data_ladder(studies::random_problem(a.common.seed, a.n)?, a.len, a.common.seed)
        }
        (StudyKind::Mosco, Preset::Interval) => studies::interval_mosco_ladder(a.len),
        (StudyKind::Mosco, Preset::Random) => {
            studies::harmonic_mosco_ladder(studies::random_problem(a.common.seed, a.n)?, a.len)
        }
        _ => Err(Error::Invalid("preset not available for this study kind".into())),
    }
}

fn table_exit(table: &ConvergenceTable) -> u8 {
    if table.any_failed() {
        eprintln!("error: {} ladder rows failed", table.rows.iter().filter(|r| !r.ok()).count());
        3
    } else if table.passed() {
        0
    } else {
        eprintln!("error: final error {:e} above threshold {:e}", table.final_error(), table.threshold);
        1
    }
}

fn cmd_study(a: &StudyArgs) -> Outcome {
    if a.kind == StudyKind::Contact {
        return cmd_contact(ContactAction::Study, &a.contact, &a.common);
    }
    let out = OutDir::create(&a.common.out_dir())?;
    let config = StudyConfig {
        solve: a.solver.config(),
        probe_budget: a.probe_budget,
        seed: a.common.seed,
        ..StudyConfig::default()
    };
    let mut params = json!({
        "kind": a.kind,
        "solver": a.solver.overrides(),
        "probe_budget": a.probe_budget,
        "seed": a.common.seed,
    });
    let table = if a.kind == StudyKind::Heat {
        let mesh = match a.dim {
            1 => heat::unit_interval(a.nx)?,
            2 => heat::unit_square(a.nx, a.ny)?,
            d => return Err(Error::Invalid(format!("heat mesh dimension {d} not supported")).into()),
        };
        let model = heat::assemble_heat_uniform(&mesh, a.g, a.q, a.b)?;
        let study = heat::run_heat_penalty_study(&model, &heat::default_heat_lambdas(), &config)?;
        params["heat"] = json!({ "dim": a.dim, "nx": a.nx, "ny": a.ny, "g": a.g, "q": a.q, "b": a.b });
        out.write_with("table.csv", |w| study.write_csv(w))?;
        if let Some(u) = study.table.solutions.last() {
            out.write_with("nodal.csv", |w| model.write_nodal_csv(u, w))?;
        }
        study.table
    } else {
        let ladder = ladder_for(a)?;
        params["preset"] = json!(a.preset);
        params["len"] = json!(ladder.len());
        let table = studies::run_study(&ladder, &config)?;
        out.write_with("table.csv", |w| table.write_csv(w))?;
        table
    };
    out.write_json("manifest.json", &table.manifest(params.clone()))?;
    write_manifest(&out, "study", &[], params, a.common.seed)?;
    if a.common.emit_gnuplot {
        out.write_text("plot.gp", &output::gnuplot_table())?;
    }
    Ok(table_exit(&table))
}

fn contact_data(c: &ContactArgs) -> Result<ContactProblemData, Error> {
    let nodes = (c.cx + 1) * (c.cy + 1);
    Ok(ContactProblemData {
        lx: 2.0,
        ly: 1.0,
        nx: c.cx,
        ny: c.cy,
        material: ElasticMaterial::new(c.lame_lambda, c.lame_mu)?,
        base: ContactLoads::uniform(nodes, c.yield_limit, 0.0, c.f0, c.f2, c.k),
    })
}

fn cmd_contact(action: ContactAction, c: &ContactArgs, common: &Common) -> Outcome {
    let data = contact_data(c)?;
    let model = contact::assemble_model(&data)?;
    let out = OutDir::create(&common.out_dir())?;
    let mut params = serde_json::to_value(c).map_err(Error::from)?;
    params["d0"] = json!(model.d0);
    match action {
        ContactAction::Solve => {
            let mut loads = data.base.clone();
            loads.friction = vec![c.mu; loads.friction.len()];
            let report = contact::solve_contact_frictional(&model, &loads, &SolveConfig::auto(), 1e-10)?;
            write_manifest(&out, "contact solve", &[], params, common.seed)?;
            out.write_json("solve_report.json", &report)?;
            out.write_with("nodal.csv", |w| model.write_nodal_csv(&report.u, c.k, w))?;
            Ok(0)
        }
        ContactAction::Study => {
            let config = StudyConfig { seed: common.seed, ..StudyConfig::default() };
            let ladder = contact::harmonic_ladder(&data.base, c.mu, c.last);
            let study = contact::run_friction_ladder_study(&model, &ladder, &config, 1e-10)?;
            params["fitted_c"] = json!(study.fitted_c);
            out.write_with("table.csv", |w| study.table.write_csv(w))?;
            out.write_with("nodal.csv", |w| model.write_nodal_csv(&study.table.reference_u, c.k, w))?;
            out.write_json("manifest.json", &study.table.manifest(params.clone()))?;
            out.write_json("contact_extra.json", &json!({
                "perturbation": study.perturbation,
                "fitted_c": study.fitted_c,
                "outer_iterations": study.outer_iterations,
            }))?;
            write_manifest(&out, "contact study", &[], params, common.seed)?;
            if common.emit_gnuplot {
                out.write_text("plot.gp", &output::gnuplot_table())?;
            }
            Ok(table_exit(&study.table))
        }
    }
}

fn cmd_classify(a: &ClassifyArgs) -> Outcome {
    let problem = read_problem(&a.spec)?;
    let file = std::fs::File::open(&a.sequence).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", a.sequence.display()),
    })?;
    let seq = CandidateSequence::read_csv(a.sequence.display().to_string(), file)?;
    if seq.dim() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: seq.dim() }.into());
    }
    let config = CriterionConfig {
        probe_budget: a.probe_budget,
        seed: a.common.seed,
        ..CriterionConfig::default()
    };
    let report = classify_sequence_with(&problem, &seq, &config)?;
    let out = OutDir::create(&a.common.out_dir())?;
    write_manifest(&out, "classify", &[&a.spec, &a.sequence], json!({ "probe_budget": a.probe_budget }), a.common.seed)?;
    out.write_with("criterion.csv", |w| report.write_csv(w))?;
    out.write_json("flags.json", &json!({ "flags": report.flags, "boundedness": report.boundedness }))?;
    if a.common.emit_gnuplot {
        out.write_text("plot.gp", &output::gnuplot_criterion())?;
    }
    println!("{}", serde_json::to_string(&report.flags).map_err(Error::from)?);
    Ok(0)
}

fn cmd_selftest(common: &Common) -> Outcome {
    let report = run_golden_suite(common.seed)?;
    let text = report.render();
    print!("{text}");
    if let Some(dir) = &common.out {
        let out = OutDir::create(dir)?;
        out.write_text("selftest.txt", &text)?;
        out.write_json("selftest.json", &report)?;
        write_manifest(&out, "selftest", &[], json!({}), common.seed)?;
    }
    Ok(if report.passed() { 0 } else { 1 })
}
