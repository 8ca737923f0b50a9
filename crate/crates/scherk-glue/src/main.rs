use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use scherk_glue::analyzer::classify;
use scherk_glue::config::Configuration;
use scherk_glue::mesh::{default_cutoff, mesh_glued, mesh_scherk, SurfaceMesh};
use scherk_glue::scherk::{ScherkParams, Variant};
use scherk_glue::solver::{continuation, SolveOptions, SolveReport, NEWTON_TOL};
use scherk_glue::verify::{format_table, run_suite, SuiteOptions};

#[derive(Parser)]
#[command(name = "scherk-glue", version, about = "Scherk surfaces and periodic minimal surfaces glued from them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Odd,
    Even,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh a single Scherk piece as OBJ.
    Scherk {
        #[arg(long)]
        theta: f64,
        #[arg(long, value_enum, default_value = "odd")]
        variant: VariantArg,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        /// Height at which the ends are cut; defaults to ν + 4.
        #[arg(long)]
        cutoff: Option<f64>,
        /// OBJ path; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify a configuration and print the verdict as JSON.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// List every evaluated condition on standard error.
        #[arg(long)]
        explain: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the period problem along a decreasing ε schedule.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Comma separated, e.g. 0.45,0.4,0.35.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        eps: Vec<f64>,
        #[arg(long, default_value_t = NEWTON_TOL)]
        tol: f64,
        /// Report JSON path; the continuation trace goes to `<out>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mesh a solved report as OBJ.
    Mesh {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the randomized invariant suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Bound on mesh conformality and period closure.
        #[arg(long, default_value_t = scherk_glue::mesh::MESH_TOL)]
        tol: f64,
    },
}

/// Failures, split by exit code.
enum Failure {
    /// Bad input from the command line or an input file (exit 2).
    Usage(String),
    /// A computation or check failed (exit 1).
    Run(String),
}

type Outcome = Result<(), Failure>;

fn run_err(e: impl std::fmt::Display) -> Failure {
    Failure::Run(e.to_string())
}

/// serde_json formatter printing every float with 17 significant digits.
struct Digits17;

impl serde_json::ser::Formatter for Digits17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17);
    value.serialize(&mut ser).expect("values serialize");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| run_err(format!("writing {}: {e}", p.display()))),
        None => io::stdout().write_all(text.as_bytes()).map_err(run_err),
    }
}

fn read_input(flag: &str, path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("--{flag} {}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<Configuration, Failure> {
    let text = read_input("config", path)?;
    Configuration::from_json(&text).map_err(|e| Failure::Usage(format!("--config {}: {e}", path.display())))
}

fn emit_mesh(mesh: &SurfaceMesh, out: Option<&Path>) -> Outcome {
    eprintln!(
        "{} vertices, {} triangles, max witness {:.3e}",
        mesh.vertex_count(),
        mesh.triangles.len(),
        mesh.max_conformality()
    );
    match out {
        Some(p) => mesh.write_obj(p).map_err(run_err),
        None => emit(None, &mesh.to_obj()),
    }
}

fn scherk(theta: f64, variant: VariantArg, resolution: usize, cutoff: Option<f64>, out: Option<&Path>) -> Outcome {
    let variant = match variant {
        VariantArg::Odd => Variant::Odd,
        VariantArg::Even => Variant::Even,
    };
    let params = ScherkParams::new(theta, variant).map_err(|e| Failure::Usage(format!("--theta: {e}")))?;
    if resolution < 8 {
        return Err(Failure::Usage(format!("--resolution {resolution}: must be at least 8")));
    }
    let cutoff = cutoff.unwrap_or_else(|| default_cutoff(&params));
    if !(cutoff > 0.0) {
        return Err(Failure::Usage(format!("--cutoff {cutoff}: must be positive")));
    }
    let mesh = mesh_scherk(&params, resolution, cutoff).map_err(run_err)?;
    emit_mesh(&mesh, out)
}

fn analyze(config: &Path, explain: bool, out: Option<&Path>) -> Outcome {
    let config = load_config(config)?;
    let verdict = classify(&config);
    if explain {
        for c in &verdict.checks {
            eprintln!("{:<4} {}: {}", if c.passed { "ok" } else { "fail" }, c.name, c.statement);
        }
        for r in &verdict.reasons {
            eprintln!("reason: {}", r.detail);
        }
    }
    emit(out, &to_json(&verdict))
}

const TRACE_HEADER: [&str; 11] = [
    "epsilon",
    "tau_max",
    "zeta_sum",
    "k",
    "tau",
    "alpha_over_tau",
    "rho_minus_one_over_tau",
    "psi",
    "zeta",
    "alpha_prediction",
    "rho_prediction",
];

fn write_trace(path: &Path, report: &SolveReport) -> Outcome {
    let fail = |e: csv::Error| run_err(format!("writing {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record(TRACE_HEADER).map_err(fail)?;
    let f = |x: f64| format!("{x:.16e}");
    for rec in &report.continuation_trace {
        for node in &rec.nodes {
            w.write_record([
                f(rec.epsilon),
                f(rec.tau_max),
                rec.zeta_sum.map(f).unwrap_or_default(),
                node.k.to_string(),
                f(node.tau),
                f(node.alpha_over_tau),
                f(node.rho_minus_one_over_tau),
                f(node.psi),
                f(node.zeta),
                f(node.alpha_prediction),
                f(node.rho_prediction),
            ])
            .map_err(fail)?;
        }
    }
    w.flush().map_err(|e| run_err(format!("writing {}: {e}", path.display())))
}

fn solve(config: &Path, eps: &[f64], tol: f64, out: Option<&Path>) -> Outcome {
    let config = load_config(config)?;
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0)) {
        return Err(Failure::Usage(format!("--eps {e}: values must be positive")));
    }
    if !(tol > 0.0) {
        return Err(Failure::Usage(format!("--tol {tol}: must be positive")));
    }
    let options = SolveOptions { tol, ..SolveOptions::default() };
    let result = continuation(&config, eps, &options);
    for r in &result.reports {
        eprintln!(
            "epsilon {:.6}: converged {} after {} iterations, residual {:.3e}",
            r.epsilon,
            r.converged,
            r.iterations,
            r.residual_norms.max()
        );
    }
    if let Some(last) = result.reports.last() {
        emit(out, &to_json(last))?;
        if let Some(p) = out {
            let mut csv = p.as_os_str().to_owned();
            csv.push(".csv");
            write_trace(Path::new(&csv), last)?;
        }
    }
    if let Some(f) = result.failure {
        return Err(Failure::Run(f));
    }
    match result.reports.last() {
        Some(r) if r.converged => Ok(()),
        Some(r) => Err(Failure::Run(format!("not converged at epsilon = {}", r.epsilon))),
        None => Err(Failure::Run("empty schedule".into())),
    }
}

fn mesh(report: &Path, resolution: usize, out: Option<&Path>) -> Outcome {
    let text = read_input("report", report)?;
    let report: SolveReport =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("--report {}: {e}", report.display())))?;
    if resolution < 8 {
        return Err(Failure::Usage(format!("--resolution {resolution}: must be at least 8")));
    }
    let mesh = mesh_glued(&report, resolution).map_err(run_err)?;
    emit_mesh(&mesh, out)
}

fn verify(seed: u64, tol: f64) -> Outcome {
    if !(tol > 0.0) {
        return Err(Failure::Usage(format!("--tol {tol}: must be positive")));
    }
    let outcomes = run_suite(&SuiteOptions { seed, mesh_tol: tol });
    print!("{}", format_table(&outcomes));
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(Failure::Run(format!("{failed} of {} checks failed", outcomes.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Scherk { theta, variant, resolution, cutoff, out } => {
            scherk(theta, variant, resolution, cutoff, out.as_deref())
        }
        Command::Analyze { config, explain, out } => analyze(&config, explain, out.as_deref()),
        Command::Solve { config, eps, tol, out } => solve(&config, &eps, tol, out.as_deref()),
        Command::Mesh { report, resolution, out } => mesh(&report, resolution, out.as_deref()),
        Command::Verify { seed, tol } => verify(seed, tol),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
