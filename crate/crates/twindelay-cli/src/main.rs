use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use twindelay::problem::{build_problem, parse_problem, LoadedProblem, Overrides};
use twindelay::stability::{StabilityReport, Verdict};
use twindelay::{neutral, renewal, rfde, stability, verify, Error};

#[derive(Parser)]
#[command(name = "twindelay", version, about = "Delay and renewal equation solvers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct CommonOpts {
    /// override the grid step from the problem file
    #[arg(long = "h")]
    h: Option<f64>,
    /// override the time horizon from the problem file
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// suppress everything except the requested artifact
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a problem file and write the trajectory
    Solve {
        problem: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Stability verdict for the problem's characteristic condition
    Stability {
        problem: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Run a named self-check suite (or "all")
    Verify {
        suite: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        quiet: bool,
    },
    /// Fundamental solution / resolvent kernel of the problem
    Fundamental {
        problem: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        opts: CommonOpts,
    },
}

enum Failure {
    /// bad input: malformed file, schema violation, unknown suite (exit 2)
    Schema(String),
    /// the computation itself failed (exit 3)
    Numerical(String),
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Schema(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

fn load(path: &PathBuf, opts: &CommonOpts) -> Result<LoadedProblem, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Schema(format!("{}: {e}", path.display())))?;
    let p = parse_problem(&text).map_err(|e| Failure::Schema(e.to_string()))?;
    build_problem(&p, &Overrides { h: opts.h, horizon: opts.horizon })
        .map_err(|e| Failure::Schema(e.to_string()))
}

fn emit(output: &Option<PathBuf>, text: String) -> Result<(), Failure> {
    match output {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::Numerical(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn numerical(e: Error) -> Failure {
    Failure::Numerical(e.to_string())
}

fn csv_block(header: &[String], rows: &[(f64, Vec<f64>)]) -> String {
    let mut out = String::from("t");
    for h in header {
        out.push(',');
        out.push_str(h);
    }
    out.push('\n');
    for (t, vals) in rows {
        out.push_str(&format!("{t}"));
        for v in vals {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

fn trajectory_rows(x: &twindelay::GridFn) -> (Vec<String>, Vec<(f64, Vec<f64>)>) {
    let n = x.rows;
    let cols = x.cols;
    let header: Vec<String> = if cols == 1 {
        (1..=n).map(|i| format!("x_{i}")).collect()
    } else {
        (1..=n).flat_map(|r| (1..=cols).map(move |c| format!("x_{r}{c}"))).collect()
    };
    let rows = x
        .grid
        .nodes()
        .enumerate()
        .map(|(i, t)| {
            let m = &x.values[i];
            let vals = (0..n).flat_map(|r| (0..cols).map(move |c| m[(r, c)])).collect();
            (t, vals)
        })
        .collect();
    (header, rows)
}

fn rows_json(header: &[String], rows: &[(f64, Vec<f64>)]) -> serde_json::Value {
    json!({
        "columns": header,
        "t": rows.iter().map(|(t, _)| *t).collect::<Vec<_>>(),
        "values": rows.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>(),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Solve { problem, output, opts } => cmd_solve(&problem, &output, &opts),
        Cmd::Stability { problem, output, opts } => cmd_stability(&problem, &output, &opts),
        Cmd::Verify { suite, seed, quiet } => cmd_verify(&suite, seed, quiet),
        Cmd::Fundamental { problem, output, opts } => cmd_fundamental(&problem, &output, &opts),
    }
}

fn cmd_solve(
    problem: &PathBuf,
    output: &Option<PathBuf>,
    opts: &CommonOpts,
) -> Result<(), Failure> {
    let loaded = load(problem, opts)?;
    let (header, rows, atoms) = match &loaded {
        LoadedProblem::Rfde { sys, phi, forcing } => {
            let traj = match forcing {
                Some(g) => rfde::forced_solve(sys, phi, g).map_err(numerical)?,
                None => rfde::solve_ivp(sys, phi).map_err(numerical)?,
            };
            let (h, r) = trajectory_rows(&traj.x);
            (h, r, Vec::new())
        }
        LoadedProblem::Nfde { sys, phi } => {
            let traj = neutral::solve_nfde(sys, phi).map_err(numerical)?;
            let (h, r) = trajectory_rows(&traj.x);
            (h, r, Vec::new())
        }
        LoadedProblem::ReSmooth { sys, psi } => {
            let b = renewal::birth_rate(sys, psi).map_err(numerical)?;
            let (mut h, r) = trajectory_rows(&b);
            for name in &mut h {
                *name = name.replace('x', "b");
            }
            (h, r, Vec::new())
        }
        LoadedProblem::ReBv { sys, psi } => {
            let bc = renewal::cumulative_births(sys, psi).map_err(numerical)?;
            let db = renewal::births_measure(sys, psi).map_err(numerical)?;
            let (mut h, r) = trajectory_rows(&bc);
            for name in &mut h {
                *name = name.replace('x', "B");
            }
            let atoms = db
                .atoms
                .iter()
                .map(|a| (a.loc, (0..a.weight.nrows()).map(|i| a.weight[(i, 0)]).collect()))
                .collect();
            (h, r, atoms)
        }
    };
    let text = match opts.format {
        Format::Csv => {
            let mut text = csv_block(&header, &rows);
            if !atoms.is_empty() {
                text.push_str("# atoms\n");
                text.push_str(&csv_block(&header, &atoms));
            }
            text
        }
        Format::Json => {
            let mut v = rows_json(&header, &rows);
            if !atoms.is_empty() {
                v["atoms"] = rows_json(&header, &atoms);
            }
            format!("{}\n", serde_json::to_string_pretty(&v).unwrap())
        }
    };
    emit(output, text)
}

fn verdict_json(r: &StabilityReport) -> serde_json::Value {
    let verdict = match r.verdict {
        Verdict::Stable => "stable",
        Verdict::Unstable => "unstable",
        Verdict::Marginal => "marginal",
        Verdict::Inconclusive => "inconclusive",
    };
    let mut v = json!({
        "condition": r.condition,
        "min_modulus": r.min_modulus,
        "winding": r.winding,
        "verdict": verdict,
    });
    if let Some(root) = r.witness_root {
        v["witness_root"] = json!([root.re, root.im]);
    }
    v
}

fn cmd_stability(
    problem: &PathBuf,
    output: &Option<PathBuf>,
    opts: &CommonOpts,
) -> Result<(), Failure> {
    let loaded = load(problem, opts)?;
    let report = match &loaded {
        LoadedProblem::Rfde { sys, .. } => stability::rfde_stability(sys),
        LoadedProblem::Nfde { sys, .. } => stability::nfde_stability(sys),
        LoadedProblem::ReSmooth { sys, .. } | LoadedProblem::ReBv { sys, .. } => {
            stability::re_stability(sys)
        }
    };
    let report = match report {
        Ok(r) => r,
        Err(Error::InconclusiveScan { min_modulus }) => StabilityReport {
            condition: "characteristic condition".into(),
            min_modulus,
            winding: 0,
            witness_root: None,
            verdict: Verdict::Inconclusive,
        },
        Err(e) => return Err(numerical(e)),
    };
    emit(output, format!("{}\n", serde_json::to_string_pretty(&verdict_json(&report)).unwrap()))
}

fn cmd_verify(suite: &str, seed: u64, quiet: bool) -> Result<(), Failure> {
    let reports = if suite == "all" {
        verify::run_all(seed).map_err(|e| Failure::Schema(e.to_string()))?
    } else {
        vec![(
            suite.to_string(),
            verify::run_suite(suite, seed).map_err(|e| Failure::Schema(e.to_string()))?,
        )]
    };
    let mut all_ok = true;
    for (name, checks) in &reports {
        for c in checks {
            let ok = c.passed();
            all_ok &= ok;
            if !quiet || !ok {
                println!(
                    "[{name}] {}: residual={:.3e} tol={:.3e} {}",
                    c.name,
                    c.residual,
                    c.tol,
                    if ok { "PASS" } else { "FAIL" }
                );
            }
        }
    }
    if !quiet {
        println!("{}", if all_ok { "all checks passed" } else { "FAILURES present" });
    }
    if all_ok {
        Ok(())
    } else {
        Err(Failure::Numerical("verification failures".into()))
    }
}

fn cmd_fundamental(
    problem: &PathBuf,
    output: &Option<PathBuf>,
    opts: &CommonOpts,
) -> Result<(), Failure> {
    let loaded = load(problem, opts)?;
    let (header, rows, atoms) = match &loaded {
        LoadedProblem::Rfde { sys, .. } => {
            let f = rfde::fundamental_solution(sys).map_err(numerical)?;
            let (h, r) = trajectory_rows(&f);
            (h, r, Vec::new())
        }
        LoadedProblem::ReSmooth { sys, .. } => {
            let twindelay::renewal::ReKernel::Smooth(k) = &sys.kernel else { unreachable!() };
            let padded = twindelay::measure::HalfLineMeasure::from_density(k.clone())
                .with_horizon(sys.grid.horizon())
                .map_err(numerical)?;
            let r = twindelay::resolvent_l1(&padded.density).map_err(numerical)?;
            let (mut h, rows) = trajectory_rows(&r);
            for name in &mut h {
                *name = name.replace('x', "r");
            }
            (h, rows, Vec::new())
        }
        LoadedProblem::ReBv { sys, .. } => {
            let twindelay::renewal::ReKernel::Bv(l) = &sys.kernel else { unreachable!() };
            let rho = twindelay::resolvent_measure(
                &l.with_horizon(sys.grid.horizon()).map_err(numerical)?,
            )
            .map_err(numerical)?;
            let (mut h, rows) = trajectory_rows(&rho.density);
            for name in &mut h {
                *name = name.replace('x', "rho");
            }
            let atoms = rho
                .atoms
                .iter()
                .map(|a| {
                    (
                        a.loc,
                        (0..a.weight.nrows())
                            .flat_map(|r| (0..a.weight.ncols()).map(move |c| a.weight[(r, c)]))
                            .collect(),
                    )
                })
                .collect();
            (h, rows, atoms)
        }
        LoadedProblem::Nfde { .. } => {
            return Err(Failure::Schema(
                "kind: fundamental output supports rfde, re-smooth, and re-bv".into(),
            ))
        }
    };
    let text = match opts.format {
        Format::Csv => {
            let mut text = csv_block(&header, &rows);
            if !atoms.is_empty() {
                text.push_str("# atoms\n");
                text.push_str(&csv_block(&header, &atoms));
            }
            text
        }
        Format::Json => {
            let mut v = rows_json(&header, &rows);
            if !atoms.is_empty() {
                v["atoms"] = rows_json(&header, &atoms);
            }
            format!("{}\n", serde_json::to_string_pretty(&v).unwrap())
        }
    };
    emit(output, text)
}
