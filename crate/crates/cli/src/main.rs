use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use blowup::catalog::{self, CatalogEntry, CatalogOptions, Reference};
use blowup::expr::{self, Expr};
use blowup::harness::{
    self, emit_csv, emit_svg, run_method_traced, run_rd_study, run_study, Axis, Method, RdMode,
    StudySpec, StudyTable,
};
use blowup::problem::{check_assumptions, validate, Problem, RunResult, ScalarProblem};
use blowup::{StepLaw, ThresholdRule};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Finite-time blow-up estimation with a priori adaptive Euler steps.
#[derive(Debug, Parser)]
#[command(name = "blowup", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one problem at one tolerance.
    Run(RunArgs),
    /// Sweep tolerances for several methods and fit convergence rates.
    Study(StudyArgs),
    /// Reaction–diffusion tables over tolerance or grid size.
    RdStudy(RdStudyArgs),
    /// Sample the growth assumptions of a catalog problem.
    Check(CheckArgs),
    /// Print catalog ids.
    List,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Catalog id.
    #[arg(long, conflicts_with = "expr", required_unless_present = "expr")]
    problem: Option<String>,
    /// Right-hand side b(x) in the variable x.
    #[arg(long, requires_all = ["x0", "threshold"], allow_hyphen_values = true)]
    expr: Option<String>,
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long, default_value_t = 1.1)]
    k: f64,
    /// finverse:EXPR, bprimelog, or radius:EXPR with EXPR in the variable eps.
    #[arg(long)]
    threshold: Option<String>,
    /// Compare the symbolic derivative of --expr with central differences.
    #[arg(long, requires = "expr")]
    expr_deriv_check: bool,
    #[arg(long, default_value = "adaptive")]
    method: String,
    #[arg(long, value_parser = parse_eps)]
    eps: f64,
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    #[arg(long, default_value_t = 32)]
    m: usize,
    /// Write (t, |x|) for every step as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Local tolerance of the arc-length baseline.
    #[arg(long, default_value_t = harness::DEFAULT_RK_TOL)]
    rk_tol: f64,
    /// Rescaling threshold M of the rescaling baseline.
    #[arg(long, default_value_t = harness::DEFAULT_RESCALING_THRESHOLD)]
    rescale_m: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct StudyArgs {
    #[arg(long)]
    problem: String,
    /// Comma-separated method ids.
    #[arg(long, value_delimiter = ',', required = true)]
    methods: Vec<String>,
    #[arg(long, value_parser = parse_eps)]
    eps_start: f64,
    #[arg(long, value_parser = parse_eps)]
    eps_stop: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SvgAxis::Error)]
    svg_axis: SvgAxis,
    /// Worker threads; defaults to available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Tolerance of the pseudo-reference run.
    #[arg(long, value_parser = parse_eps)]
    reference_eps: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    #[arg(long, default_value_t = 32)]
    m: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SvgAxis {
    Error,
    Cost,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RdModeArg {
    VaryEps,
    VaryM,
}

#[derive(Debug, Args)]
struct RdStudyArgs {
    #[arg(long, value_enum)]
    mode: RdModeArg,
    /// Grid size for vary-eps.
    #[arg(long, default_value_t = 32)]
    m: usize,
    /// Tolerance for vary-m.
    #[arg(long, value_parser = parse_eps, default_value = "2^-23")]
    eps: f64,
    /// Tolerance range for vary-eps.
    #[arg(long, value_parser = parse_eps, default_value = "2^-18")]
    eps_start: f64,
    #[arg(long, value_parser = parse_eps, default_value = "2^-25")]
    eps_stop: f64,
    /// Grid sizes for vary-m.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "4,8,16,32,64,128,256,512"
    )]
    ms: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long)]
    problem: String,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    #[arg(long, default_value_t = 32)]
    m: usize,
}

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Assumption,
    Solver {
        variant: &'static str,
        message: String,
    },
}

impl Failure {
    fn exit(self) -> ExitCode {
        match self {
            Failure::Usage(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(1)
            }
            Failure::Assumption => ExitCode::from(2),
            Failure::Solver { variant, message } => {
                eprintln!("error[{variant}]: {message}");
                ExitCode::from(3)
            }
        }
    }
}

impl From<harness::RunError> for Failure {
    fn from(e: harness::RunError) -> Self {
        Failure::Solver {
            variant: e.variant(),
            message: e.to_string(),
        }
    }
}

impl From<harness::HarnessError> for Failure {
    fn from(e: harness::HarnessError) -> Self {
        use harness::HarnessError as H;
        match e {
            H::Reference(inner) => Failure::Solver {
                variant: inner.variant(),
                message: format!("reference run failed: {inner}"),
            },
            H::UnknownMethod(_) | H::Catalog(_) | H::GridNotDecreasing => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Solver {
                variant: "Io",
                message: other.to_string(),
            },
        }
    }
}

/// Accepts `2^-k`, `2^k`, `2^(-k)` and decimal or scientific literals.
fn parse_eps(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.strip_prefix("2^") {
        Some(exp) => {
            let exp = exp.trim_start_matches('(').trim_end_matches(')');
            let k: i32 = exp.parse().map_err(|_| format!("bad exponent in {s:?}"))?;
            2f64.powi(k)
        }
        None => s
            .parse::<f64>()
            .map_err(|_| format!("not a number: {s:?}"))?,
    };
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("tolerance must be positive and finite, got {s:?}"))
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("BLOWUP_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| {
            Failure::Usage(format!(
                "BLOWUP_SEED must be an unsigned integer, got {v:?}"
            ))
        }),
        Err(_) => Ok(1),
    }
}

fn parse_method(id: &str, rk_tol: f64, rescale_m: f64) -> Result<Method, Failure> {
    let m: Method = id
        .parse()
        .map_err(|e: harness::HarnessError| Failure::Usage(e.to_string()))?;
    Ok(match m {
        Method::ArcLength { .. } => Method::ArcLength { rk_tol },
        Method::Rescaling { .. } => Method::Rescaling {
            threshold: rescale_m,
        },
        other => other,
    })
}

fn expr_fn(e: Expr, var: &'static str) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
    Arc::new(move |v| e.eval_named(v, var).unwrap_or(f64::NAN))
}

fn parse_threshold(spec: &str) -> Result<ThresholdRule, Failure> {
    let parse_eps_expr = |text: &str| {
        expr::parse_in(text, "eps")
            .map_err(|e| Failure::Usage(format!("threshold expression {text:?}: {e}")))
    };
    if spec == "bprimelog" {
        return Ok(ThresholdRule::BPrimeLog);
    }
    if let Some(text) = spec.strip_prefix("finverse:") {
        let e = parse_eps_expr(text)?;
        return Ok(ThresholdRule::f_inverse(move |eps| {
            e.eval_named(eps, "eps").unwrap_or(f64::NAN)
        }));
    }
    if let Some(text) = spec.strip_prefix("radius:") {
        let e = parse_eps_expr(text)?;
        return Ok(ThresholdRule::explicit_radius(move |eps| {
            e.eval_named(eps, "eps").unwrap_or(f64::NAN)
        }));
    }
    Err(Failure::Usage(format!(
        "threshold must be finverse:EXPR, bprimelog or radius:EXPR, got {spec:?}"
    )))
}

fn expr_entry(args: &RunArgs, out: &mut String) -> Result<CatalogEntry, Failure> {
    let text = args.expr.as_deref().expect("checked by caller");
    let b = expr::parse(text).map_err(|e| Failure::Usage(format!("expression {text:?}: {e}")))?;
    let db = b.differentiate();
    let d2b = db.differentiate();
    let x0 = args.x0.expect("required by clap");
    let threshold = parse_threshold(args.threshold.as_deref().expect("required by clap"))?;
    let _ = writeln!(out, "derivative={}", db.pretty("x"));
    if args.expr_deriv_check {
        let mut worst: f64 = 0.0;
        for i in 0..20 {
            let x = x0 * (1.0 + 9.0 * f64::from(i) / 19.0);
            let h = 1e-5 * x.abs().max(1.0);
            let (Ok(hi), Ok(lo), Ok(d)) = (b.eval(x + h), b.eval(x - h), db.eval(x)) else {
                continue;
            };
            let fd = (hi - lo) / (2.0 * h);
            worst = worst.max((fd - d).abs() / d.abs().max(1.0));
        }
        let _ = writeln!(out, "deriv_check_max_rel={worst}");
    }
    let problem = ScalarProblem::new(expr_fn(b, "x"), expr_fn(db, "x"), x0, args.k, threshold)
        .with_second(expr_fn(d2b, "x"));
    Ok(CatalogEntry {
        id: "expr".into(),
        problem: Problem::Scalar(problem),
        default_laws: vec![StepLaw::Adaptive1D],
        reference: Reference::Unknown,
        notes: text.to_string(),
        power_law: None,
    })
}

fn write_trace(path: &PathBuf, run: &RunResult) -> Result<(), Failure> {
    let mut s = String::from("t,norm\n");
    for (t, n) in run.trace.iter().flatten() {
        let _ = writeln!(s, "{t:.16e},{n:.16e}");
    }
    fs::write(path, s)
        .map_err(|e| Failure::Usage(format!("cannot write trace {}: {e}", path.display())))
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let seed = resolve_seed(args.seed)?;
    let method = parse_method(&args.method, args.rk_tol, args.rescale_m)?;
    let mut out = String::new();
    let entry = match &args.problem {
        Some(id) => catalog::get(
            id,
            CatalogOptions {
                c: args.c,
                m: args.m,
            },
        )
        .map_err(|e| Failure::Usage(e.to_string()))?,
        None => expr_entry(&args, &mut out)?,
    };
    let run = run_method_traced(&entry, method, args.eps, seed, args.trace.is_some())?;
    let _ = writeln!(out, "problem={}", entry.id);
    let _ = writeln!(out, "method={}", method.id());
    let _ = writeln!(out, "epsilon={}", args.eps);
    let _ = writeln!(out, "tau_hat={}", run.tau_hat);
    let _ = writeln!(out, "steps={}", run.steps);
    let _ = writeln!(out, "radius={}", run.radius_used.value);
    let _ = writeln!(out, "log_radius={}", run.radius_used.ln);
    let _ = writeln!(out, "final_norm={}", run.final_state.norm());
    match entry.reference {
        Reference::Exact(tau) => {
            let _ = writeln!(out, "reference_kind=exact");
            let _ = writeln!(out, "reference_value={tau}");
            let _ = writeln!(out, "error={}", (run.tau_hat - tau).abs());
        }
        r => {
            let _ = writeln!(out, "reference_kind={}", r.kind());
        }
    }
    print!("{out}");
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &args.trace {
        write_trace(path, &run)?;
    }
    Ok(())
}

fn report_table(table: &StudyTable) {
    for note in &table.notes {
        eprintln!("note: {note}");
    }
    for r in &table.rows {
        if let Some(f) = &r.failure {
            eprintln!("failed cell {} eps={}: {f}", r.method, r.epsilon);
        }
    }
    for (method, fit) in &table.fits {
        let show = |f: Option<harness::RateFit>| {
            f.map_or("n/a".to_string(), |f| {
                format!("{:.4} (r2 {:.4})", f.slope, f.r_squared)
            })
        };
        println!(
            "fit method={method} error_slope={} cost_slope={}",
            show(fit.error),
            show(fit.cost)
        );
    }
}

fn cmd_study(args: StudyArgs) -> Result<(), Failure> {
    let seed = resolve_seed(args.seed)?;
    let methods = args
        .methods
        .iter()
        .map(|m| {
            parse_method(
                m,
                harness::DEFAULT_RK_TOL,
                harness::DEFAULT_RESCALING_THRESHOLD,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let grid = halving_grid(args.eps_start, args.eps_stop)?;
    let spec = StudySpec {
        problem_id: args.problem.clone(),
        options: CatalogOptions {
            c: args.c,
            m: args.m,
        },
        methods,
        eps_grid: grid,
        seed,
        jobs: args.jobs.unwrap_or(0),
        reference_eps: args.reference_eps,
    };
    let table = run_study(&spec)?;
    emit_csv(&table, &args.out).map_err(Failure::from)?;
    if let Some(svg) = &args.svg {
        let axis = match args.svg_axis {
            SvgAxis::Error => Axis::ErrorVsEps,
            SvgAxis::Cost => Axis::CostVsEps,
        };
        emit_svg(&table, svg, axis).map_err(Failure::from)?;
    }
    report_table(&table);
    println!("rows={}", table.rows.len());
    Ok(())
}

/// `start, start/2, …` down to `stop`.
fn halving_grid(start: f64, stop: f64) -> Result<Vec<f64>, Failure> {
    if stop.partial_cmp(&start).is_none_or(|o| o.is_gt()) {
        return Err(Failure::Usage(
            "--eps-stop must not exceed --eps-start".into(),
        ));
    }
    let mut grid = vec![start];
    let mut e = start;
    while e / 2.0 >= stop * (1.0 - 1e-12) {
        e /= 2.0;
        grid.push(e);
    }
    Ok(grid)
}

fn cmd_rd_study(args: RdStudyArgs) -> Result<(), Failure> {
    let mode = match args.mode {
        RdModeArg::VaryEps => RdMode::VaryEps {
            m: args.m,
            eps_grid: halving_grid(args.eps_start, args.eps_stop)?,
        },
        RdModeArg::VaryM => RdMode::VaryM {
            eps: args.eps,
            ms: args.ms.clone(),
        },
    };
    let table = run_rd_study(&mode, args.jobs.unwrap_or(0))?;
    emit_csv(&table, &args.out).map_err(Failure::from)?;
    report_table(&table);
    for r in &table.rows {
        println!(
            "method={} m={} epsilon={} tau_hat={} log2_steps={} succ_diff_log2={}",
            r.method,
            r.m.unwrap_or(0),
            r.epsilon,
            r.tau_hat.map_or("n/a".into(), |t| t.to_string()),
            r.steps
                .map_or("n/a".into(), |n| format!("{:.2}", (n as f64).log2())),
            r.succ_diff_log2.map_or("n/a".into(), |d| format!("{d:.2}")),
        );
    }
    Ok(())
}

fn cmd_check(args: CheckArgs) -> Result<(), Failure> {
    let seed = resolve_seed(args.seed)?;
    let entry = catalog::get(
        &args.problem,
        CatalogOptions {
            c: args.c,
            m: args.m,
        },
    )
    .map_err(|e| Failure::Usage(e.to_string()))?;
    let violations = validate(entry.problem.as_ref());
    for v in &violations {
        println!("invariant: FAIL {v}");
    }
    let report = check_assumptions(entry.problem.as_ref(), args.samples, seed);
    print!("{report}");
    if violations.is_empty() && report.all_hold() {
        println!("status=ok");
        Ok(())
    } else {
        println!("status=violated");
        Err(Failure::Assumption)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Study(a) => cmd_study(a),
        Command::RdStudy(a) => cmd_rd_study(a),
        Command::Check(a) => cmd_check(a),
        Command::List => {
            for id in catalog::list() {
                println!("{id}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use blowup::harness::dyadic_grid;

    #[test]
    fn eps_forms() {
        assert_eq!(parse_eps("2^-12").unwrap(), 2f64.powi(-12));
        assert_eq!(parse_eps("2^(-3)").unwrap(), 0.125);
        assert_eq!(parse_eps("0.001").unwrap(), 0.001);
        assert_eq!(parse_eps("1e-4").unwrap(), 1e-4);
        assert!(parse_eps("-1").is_err());
        assert!(parse_eps("2^x").is_err());
    }

    #[test]
    fn grid_halves_to_stop() {
        let g = halving_grid(2f64.powi(-6), 2f64.powi(-9)).unwrap();
        assert_eq!(g, dyadic_grid(6, 9));
    }
}
