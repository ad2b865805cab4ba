//! `hsle`: batch front-end for simulations, verification suites and Ising runs.
//!
//! Exit status: 0 pass, 1 statistical failure, 2 usage error, 3 internal invariant violation.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use hsle::cascade::McConfig;
use hsle::geometry::MarkedPoints;
use hsle::ising::{self, LatticeDomain};
use hsle::loewner::{sample_path_stream, trace_from_path_strided, DriverSpec, DrivingPath, ForcePoint};
use hsle::martingale_lab::{run_experiment, ExperimentKind, ExperimentSpec};
use hsle::special_fn::Params;
use validation::{run_suite, Scale, SuiteReport, SUITES};

const SCHEMA_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Parser)]
#[command(name = "hsle", version, about = "Hypergeometric SLE laboratory")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample driving functions (and optionally traces) of Loewner chains.
    Simulate(SimArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Critical Ising runs on a domain file.
    Ising(IsingArgs),
    /// One Monte Carlo experiment against its closed form.
    Experiment(ExpArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DriverKind {
    Bm,
    SleRho,
    Hsle,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, value_enum)]
    driver: DriverKind,
    #[arg(long)]
    kappa: f64,
    /// ν for the hSLE driver.
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<f64>,
    /// hSLE: "x,y" with 0 < x < y. sle-rho: "x:rho,x:rho,...".
    #[arg(long, allow_hyphen_values = true)]
    points: Option<String>,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Capacity horizon.
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, env = "HSLE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write the reconstructed trace of each path.
    #[arg(long)]
    trace: bool,
    /// Reconstruct every k-th trace point.
    #[arg(long, default_value_t = 1)]
    trace_stride: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// One of specialfn, pde, cov, asy, crossing, avoid, poisson, cascade, ising, ising-smoke.
    suite: String,
    /// Reduced sample sizes.
    #[arg(long)]
    quick: bool,
    /// Keep only the checks for N links (cascade suite).
    #[arg(long = "N")]
    n_links: Option<usize>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print the JSON report instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct IsingArgs {
    /// Domain file (width, height, arc and mark lines).
    domain: PathBuf,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Wolff updates per sample; defaults to 150 per unit of the longer side.
    #[arg(long)]
    updates: Option<usize>,
    #[arg(long, env = "HSLE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write one driving CSV per Dobrushin interface.
    #[arg(long)]
    drivings: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExpKindArg {
    TerminalEndpoint,
    MartingaleKappa4,
    AvoidProbability,
    PoissonIdentity,
}

#[derive(Args)]
struct ExpArgs {
    #[arg(long, value_enum)]
    kind: ExpKindArg,
    #[arg(long)]
    kappa: f64,
    #[arg(long, allow_hyphen_values = true)]
    nu: f64,
    /// Comma-separated quad points, or "x,y" for the Poisson identity.
    #[arg(long, allow_hyphen_values = true)]
    points: String,
    /// Capacity time of the κ = 4 martingale check.
    #[arg(long, default_value_t = 0.05)]
    t_check: f64,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, env = "HSLE_SEED", default_value_t = 0)]
    seed: u64,
    /// Added to 3·stderr in the verdict.
    #[arg(long, default_value_t = 0.01)]
    allowance: f64,
    /// Write the JSON result here.
    #[arg(long)]
    report: Option<PathBuf>,
}

enum Failure {
    Statistical(String),
    Usage(String),
    Internal(String),
}

impl From<hsle::Error> for Failure {
    fn from(e: hsle::Error) -> Self {
        use hsle::Error::*;
        match e {
            Param(_) | Order | Domain(_) | Parse(_) | NotFound(..) => Failure::Usage(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Usage(format!("csv: {e}"))
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.workers {
        if k == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    let res = match cli.cmd {
        Cmd::Simulate(a) => simulate(a),
        Cmd::Verify(a) => verify(a),
        Cmd::Ising(a) => ising_cmd(a),
        Cmd::Experiment(a) => experiment(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Statistical(m)) => {
            eprintln!("FAIL: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(3)
        }
    }
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("'{v}' is not a number in '{s}'"))))
        .collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    command: &'a str,
    tool_version: &'a str,
    seed: u64,
    params: Value,
    outputs: Vec<String>,
    wall_clock_seconds: f64,
}

fn write_manifest(dir: &Path, command: &str, seed: u64, params: Value, outputs: Vec<String>, t0: Instant) -> Outcome {
    let m = Manifest {
        schema_version: SCHEMA_VERSION,
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        seed,
        params,
        outputs,
        wall_clock_seconds: t0.elapsed().as_secs_f64(),
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&m).expect("manifest serializes"))?;
    println!("{}", path.display());
    Ok(())
}

/// CSV writer whose first line names the schema and the manifest.
fn csv_writer(path: &Path, schema: &str) -> std::result::Result<csv::Writer<File>, Failure> {
    let mut f = File::create(path)?;
    writeln!(f, "# schema={schema} v{SCHEMA_VERSION} manifest={MANIFEST}")?;
    Ok(csv::Writer::from_writer(f))
}

fn write_driving(path: &Path, p: &DrivingPath) -> Outcome {
    let mut w = csv_writer(path, "driving")?;
    w.write_record(["t", "W"])?;
    for (t, x) in p.t.iter().zip(&p.w) {
        w.write_record([format!("{t:e}"), format!("{x:e}")])?;
    }
    w.flush()?;
    Ok(())
}

fn driver_spec(a: &SimArgs) -> std::result::Result<DriverSpec, Failure> {
    let pts = a.points.as_deref();
    Ok(match a.driver {
        DriverKind::Bm => {
            if pts.is_some() || a.nu.is_some() {
                return Err(Failure::Usage("the bm driver takes neither --points nor --nu".into()));
            }
            DriverSpec::bm(a.kappa)
        }
        DriverKind::SleRho => {
            let pts = pts.ok_or_else(|| Failure::Usage("sle-rho needs --points x:rho,...".into()))?;
            let fps = pts
                .split(',')
                .map(|s| {
                    let (x, r) = s
                        .split_once(':')
                        .ok_or_else(|| Failure::Usage(format!("force point '{s}' is not of the form x:rho")))?;
                    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("bad number '{v}'")));
                    Ok(ForcePoint { x: num(x)?, rho: num(r)? })
                })
                .collect::<std::result::Result<Vec<_>, Failure>>()?;
            if fps.iter().any(|p| p.x == 0.0) {
                return Err(Failure::Usage("force points must differ from the start 0".into()));
            }
            DriverSpec::sle_rho(a.kappa, 0.0, fps)
        }
        DriverKind::Hsle => {
            let nu = a.nu.ok_or_else(|| Failure::Usage("hsle needs --nu".into()))?;
            let pts = pts.ok_or_else(|| Failure::Usage("hsle needs --points x,y with 0 < x < y".into()))?;
            let xy = parse_list(pts)?;
            if xy.len() != 2 {
                return Err(Failure::Usage("hsle needs exactly two marked points x,y".into()));
            }
            if !(0.0 < xy[0] && xy[0] < xy[1]) {
                return Err(Failure::Usage(format!(
                    "hsle marks must satisfy 0 < x < y, got {}, {}; reorder them",
                    xy[0], xy[1]
                )));
            }
            DriverSpec::hsle(Params::new(a.kappa, nu)?, xy[0], xy[1])?
        }
    })
}

fn simulate(a: SimArgs) -> Outcome {
    let t0 = Instant::now();
    if !(a.dt > 0.0 && a.horizon > 0.0 && a.n > 0) {
        return Err(Failure::Usage("--dt, --T and --n must be positive".into()));
    }
    if !(a.kappa > 0.0 && a.kappa < 8.0) {
        return Err(Failure::Usage(format!("--kappa {} is outside (0, 8)", a.kappa)));
    }
    let spec = driver_spec(&a)?;
    fs::create_dir_all(&a.out)?;
    let paths: Vec<DrivingPath> = (0..a.n as u64)
        .into_par_iter()
        .map(|i| sample_path_stream(&spec, a.horizon, a.dt, a.seed, i))
        .collect::<hsle::Result<_>>()?;
    let mut outputs = Vec::new();
    for (i, p) in paths.iter().enumerate() {
        let name = format!("driving_{i:05}.csv");
        write_driving(&a.out.join(&name), p)?;
        outputs.push(name);
        if a.trace {
            let tr = trace_from_path_strided(p, a.trace_stride);
            let name = format!("trace_{i:05}.csv");
            let mut w = csv_writer(&a.out.join(&name), "trace")?;
            w.write_record(["t", "re", "im"])?;
            for (t, z) in tr.t.iter().zip(&tr.points) {
                w.write_record([format!("{t:e}"), format!("{:e}", z.re), format!("{:e}", z.im)])?;
            }
            w.flush()?;
            outputs.push(name);
        }
    }
    let params = json!({
        "driver": spec.name(),
        "kappa": a.kappa,
        "nu": a.nu,
        "points": a.points,
        "dt": a.dt,
        "T": a.horizon,
        "n": a.n,
        "trace": a.trace,
        "trace_stride": a.trace_stride,
    });
    write_manifest(&a.out, "simulate", a.seed, params, outputs, t0)
}

fn print_report(r: &SuiteReport) {
    println!("suite {} ({} scale): {:.1} s on {} thread(s)", r.suite, r.scale, r.seconds, r.threads);
    for c in &r.checks {
        println!(
            "  {} {}: value {:.6e}, target {:.6e}, tolerance {:.3e}; {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.value,
            c.target,
            c.tolerance,
            c.detail
        );
    }
    if !r.within_budget {
        println!("  FAIL runtime over the {:.0} s budget", r.budget_seconds);
    }
    println!("{}", if r.passed() { "PASS" } else { "FAIL" });
}

fn verify(a: VerifyArgs) -> Outcome {
    if !SUITES.contains(&a.suite.as_str()) {
        return Err(Failure::Usage(format!("unknown suite '{}'; expected one of {}", a.suite, SUITES.join(", "))));
    }
    let scale = if a.quick { Scale::Quick } else { Scale::Full };
    let mut r = run_suite(&a.suite, scale)?;
    if let Some(n) = a.n_links {
        let tag = format!("N={n} ");
        r.checks.retain(|c| c.name.starts_with(&tag));
        if r.checks.is_empty() {
            return Err(Failure::Usage(format!("suite {} has no checks for N = {n}", a.suite)));
        }
    }
    let body = serde_json::to_string_pretty(&r).expect("report serializes");
    if let Some(p) = &a.report {
        fs::write(p, &body)?;
    }
    if a.json {
        println!("{body}");
    } else {
        print_report(&r);
    }
    if r.passed() {
        Ok(())
    } else {
        Err(Failure::Statistical(format!("{} of {} checks failed in {}", r.failures().len(), r.checks.len(), r.suite)))
    }
}

fn ising_cmd(a: IsingArgs) -> Outcome {
    let t0 = Instant::now();
    let text = fs::read_to_string(&a.domain)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", a.domain.display())))?;
    let dom = LatticeDomain::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", a.domain.display())))?;
    let updates = a.updates.unwrap_or_else(|| ising::default_updates(&dom));
    if updates < ising::thermalization_floor(&dom) {
        return Err(Failure::Usage(format!(
            "--updates {updates} is below the thermalization floor {}",
            ising::thermalization_floor(&dom)
        )));
    }
    if a.samples == 0 {
        return Err(Failure::Usage("--samples must be positive".into()));
    }
    fs::create_dir_all(&a.out)?;
    let mut outputs = Vec::new();
    let mut summary = json!({
        "domain": text,
        "samples": a.samples,
        "updates": updates,
        "beta": ising::BETA_C,
    });
    match dom.marks.len() {
        2 => {
            let samples = ising::dobrushin_drivings(&dom, a.samples, updates, a.seed)?;
            let name = "interfaces.csv".to_string();
            let mut w = csv_writer(&a.out.join(&name), "ising-interfaces")?;
            w.write_record(["sample", "length", "end", "skipped", "final_time"])?;
            for s in &samples {
                w.write_record([
                    s.index.to_string(),
                    s.length.to_string(),
                    s.end.to_string(),
                    s.skipped.to_string(),
                    format!("{:e}", s.path.final_time()),
                ])?;
            }
            w.flush()?;
            outputs.push(name);
            if a.drivings {
                for s in &samples {
                    let name = format!("ising_driving_{:05}.csv", s.index);
                    write_driving(&a.out.join(&name), &s.path)?;
                    outputs.push(name);
                }
            }
            let mean_len = samples.iter().map(|s| s.length as f64).sum::<f64>() / samples.len() as f64;
            summary["mean_interface_length"] = json!(mean_len);
            let paths: Vec<DrivingPath> = samples.into_iter().map(|s| s.path).collect();
            match ising::kappa_estimate(&paths, ising::KAPPA_T_MAX) {
                Ok(fit) => {
                    println!("kappa slope {:.3} ± {:.3} over {} interfaces", fit.slope, fit.stderr, fit.n_paths);
                    summary["kappa_fit"] = json!(fit);
                }
                Err(e) => println!("kappa slope not estimated: {e}"),
            }
            println!("mean interface length {mean_len:.1}");
        }
        4 => {
            let ev = ising::crossing_samples(&dom, a.samples, updates, a.seed)?;
            let name = "events.csv".to_string();
            let mut w = csv_writer(&a.out.join(&name), "ising-events")?;
            w.write_record(["sample", "c_v_minus", "c_h_plus", "c_h_plus_8"])?;
            for (i, e) in ev.iter().enumerate() {
                w.write_record([i.to_string(), (e.0 as u8).to_string(), (e.1 as u8).to_string(), (e.2 as u8).to_string()])?;
            }
            w.flush()?;
            outputs.push(name);
            let n = ev.len() as f64;
            let f = |k: usize| ev.iter().filter(|e| [e.0, e.1, e.2][k]).count() as f64 / n;
            println!("P[C_v_minus] {:.4}  P[C_h_plus] {:.4}  P[C_h_plus, 8-adjacent] {:.4}", f(0), f(1), f(2));
            println!("C_v_minus + 8-adjacent C_h_plus frequency sum {:.4}", f(0) + f(2));
            summary["freq_c_v_minus"] = json!(f(0));
            summary["freq_c_h_plus"] = json!(f(1));
            summary["freq_c_h_plus_8"] = json!(f(2));
        }
        k => return Err(Failure::Usage(format!("domain has {k} marks; ising runs need 2 (Dobrushin) or 4 (quad)"))),
    }
    let name = "summary.json".to_string();
    fs::write(a.out.join(&name), serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    outputs.push(name);
    write_manifest(&a.out, "ising", a.seed, json!({ "domain_file": a.domain, "domain": dom.to_text(), "samples": a.samples, "updates": updates }), outputs, t0)
}

fn experiment(a: ExpArgs) -> Outcome {
    let kind = match a.kind {
        ExpKindArg::TerminalEndpoint => ExperimentKind::TerminalEndpoint,
        ExpKindArg::MartingaleKappa4 => ExperimentKind::MartingaleKappa4 { t_check: a.t_check },
        ExpKindArg::AvoidProbability => ExperimentKind::AvoidProbability,
        ExpKindArg::PoissonIdentity => ExperimentKind::PoissonIdentity,
    };
    let spec = ExperimentSpec {
        kind,
        params: Params::new(a.kappa, a.nu)?,
        points: MarkedPoints::new(parse_list(&a.points)?)?,
        mc: McConfig::new(a.n, a.dt, 1e-3, a.seed),
        target: None,
        allowance: a.allowance,
    };
    let r = run_experiment(&spec)?;
    let body = serde_json::to_string_pretty(&json!({ "spec": spec, "result": r, "passed": r.passed() })).expect("serializes");
    if let Some(p) = &a.report {
        fs::write(p, &body)?;
    }
    println!("{body}");
    if r.passed() {
        Ok(())
    } else {
        Err(Failure::Statistical(format!(
            "estimate {:.5} ± {:.5} vs target {:.5}",
            r.estimate, r.stderr, r.target
        )))
    }
}
