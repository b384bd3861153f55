use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use adc_core::ad::{self, complete_module, DerivativeRequest, HessianPlan};
use adc_core::dsl::{parse, print, Module};
use adc_core::dsl::ast::{ReturnType, Type};
use adc_core::eval::{Arg, Program};
use adc_core::fitbench::{self, BenchConfig};
use adc_core::numdiff::{central_gradient, DiffConfig};
use adc_core::parallel::{self, LaunchArgs, LaunchConfig, LaunchOptions};
use adc_core::semantic::{activity, check_module};
use adc_core::{Error, Result};

/// Source-transformation automatic differentiation for a small C-like language.
#[derive(Parser)]
#[command(name = "adc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a file and summarise its functions.
    Parse { file: PathBuf },
    /// Resolve names and types and report symbols and qualifiers.
    Check { file: PathBuf },
    /// Emit a derivative function.
    Diff(DiffArgs),
    /// Evaluate a Hessian through forward mode over the generated gradient.
    Hessian(HessianArgs),
    /// Evaluate a function.
    Run(RunArgs),
    /// Emulate a kernel launch over buffers read from CSV.
    Launch(LaunchCmd),
    /// Classify a kernel's buffers; exits 2 when a write hazard exists.
    RaceCheck {
        file: PathBuf,
        #[arg(long)]
        kernel: String,
    },
    /// Central finite-difference gradient.
    Numdiff(NumdiffArgs),
    /// Benchmarks.
    Bench {
        #[command(subcommand)]
        which: BenchCmd,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Forward,
    Reverse,
}

#[derive(Args)]
struct DiffArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value = "reverse")]
    mode: ModeArg,
    #[arg(long = "fn")]
    function: String,
    /// Comma-separated parameter names.
    #[arg(long, value_delimiter = ',')]
    wrt: Vec<String>,
    /// Keep adjoints of inactive locals.
    #[arg(long)]
    no_prune: bool,
    /// Write the primal module plus the derivative here instead of printing.
    #[arg(long = "o")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HessianArgs {
    file: PathBuf,
    #[arg(long = "fn")]
    function: String,
    #[arg(long, value_delimiter = ',')]
    wrt: Vec<String>,
    /// Argument list; arrays as `[a;b;c]`.
    #[arg(long, allow_hyphen_values = true)]
    at: String,
}

#[derive(Args)]
struct RunArgs {
    file: PathBuf,
    #[arg(long = "fn")]
    function: String,
    /// Argument list; arrays as `[a;b;c]`.
    #[arg(long, allow_hyphen_values = true, default_value = "")]
    args: String,
    #[arg(long)]
    count_ops: bool,
}

#[derive(Args)]
struct LaunchCmd {
    file: PathBuf,
    #[arg(long)]
    kernel: String,
    #[arg(long)]
    n: u32,
    #[arg(long, default_value_t = 256)]
    block: u32,
    /// Grid size; defaults to `n / block + 1`.
    #[arg(long)]
    grid: Option<u32>,
    /// CSV with one column per buffer and one row per index.
    #[arg(long)]
    init: PathBuf,
    /// Scalar parameters, e.g. `--set sigma=1.5`.
    #[arg(long = "set", value_parser = parse_binding)]
    set: Vec<(String, f64)>,
    /// Launch even if the race check reports a hazard.
    #[arg(long = "unsafe")]
    allow_hazards: bool,
    #[arg(long)]
    workers: Option<usize>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NumdiffArgs {
    file: PathBuf,
    #[arg(long = "fn")]
    function: String,
    #[arg(long, allow_hyphen_values = true)]
    at: String,
    #[arg(long, value_delimiter = ',')]
    wrt: Vec<String>,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Sum-of-Gaussians histogram fit, generated gradient against central differences.
    Fit(FitArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    gaussians: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    events: u64,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    bins: usize,
    /// Iteration budget per fit.
    #[arg(long, default_value_t = 1000)]
    budget: usize,
    /// Take damped Newton steps with the generated Hessian.
    #[arg(long)]
    hessian: bool,
    /// Output CSV (or plot table with --plot); standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Convert an existing scaling CSV into a gnuplot table instead of running.
    #[arg(long)]
    plot: Option<PathBuf>,
}

fn parse_binding(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let v = v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn read_source(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

/// Parse and append any derivative functions the module calls but does not define.
fn load(path: &Path) -> Result<Module> {
    let m = parse(&read_source(path)?)?;
    Ok(complete_module(&m)?)
}

/// Split on commas outside brackets.
fn parse_args(s: &str, types: &[Type]) -> Result<Vec<Arg>> {
    let mut parts = Vec::new();
    let (mut depth, mut cur) = (0, String::new());
    for ch in s.chars() {
        match ch {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    if !cur.trim().is_empty() || !parts.is_empty() {
        parts.push(cur);
    }
    if parts.len() != types.len() {
        return Err(Error::Input(format!("expected {} argument(s), got {}", types.len(), parts.len())));
    }
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| Error::Input(format!("bad number `{}`: {e}", t.trim())));
    parts
        .iter()
        .zip(types)
        .map(|(p, ty)| {
            let p = p.trim();
            match ty {
                Type::RealArray => {
                    let inner = p.strip_prefix('[').and_then(|p| p.strip_suffix(']')).ok_or_else(|| Error::Input(format!("array argument must look like [a;b;c], got `{p}`")))?;
                    let vals = inner.split(';').filter(|t| !t.trim().is_empty()).map(num).collect::<Result<Vec<_>>>()?;
                    Ok(Arg::Array(vals))
                }
                Type::Int => {
                    let v = num(p)?;
                    if v.fract() != 0.0 {
                        return Err(Error::Input(format!("`{p}` is not an integer")));
                    }
                    Ok(Arg::Int(v as i64))
                }
                Type::Real => Ok(Arg::Real(num(p)?)),
            }
        })
        .collect()
}

fn param_types(m: &Module, name: &str) -> Result<Vec<Type>> {
    let f = m.function(name).ok_or_else(|| Error::Input(format!("no function named `{name}`")))?;
    Ok(f.params.iter().map(|p| p.ty).collect())
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.17}")).collect::<Vec<_>>().join(", ")
}

fn cmd_parse(file: &Path) -> Result<()> {
    let m = parse(&read_source(file)?)?;
    for f in &m.functions {
        let quals: Vec<&str> = f.qualifiers.iter().map(|q| q.keyword()).collect();
        let params: Vec<String> = f.params.iter().map(|p| format!("{} {}", p.ty.keyword(), p.name)).collect();
        let ret = if f.ret == ReturnType::Void { "void" } else { "real" };
        let mut stmts = 0;
        adc_core::dsl::ast::walk_stmts(&f.body, &mut |_| stmts += 1);
        println!("{}{ret} {}({}): {stmts} statement(s)", quals.iter().map(|q| format!("{q} ")).collect::<String>(), f.name, params.join(", "));
    }
    Ok(())
}

fn cmd_check(file: &Path) -> Result<()> {
    let user = parse(&read_source(file)?)?;
    let m = complete_module(&user)?;
    let tables = check_module(&m)?;
    for (f, table) in m.functions.iter().zip(&tables) {
        let quals: Vec<&str> = f.qualifiers.iter().map(|q| q.keyword()).collect();
        let generated = if user.function(&f.name).is_none() { " (generated)" } else { "" };
        println!("{}{generated}: qualifiers [{}]", f.name, quals.join(", "));
        for (name, sym) in table.iter() {
            println!("  {:?} {} {name} @ {}", sym.kind, sym.ty.keyword(), sym.span);
        }
        let reals: Vec<&str> = f.params.iter().filter(|p| p.ty.is_real()).map(|p| p.name.as_str()).collect();
        if !f.is_global() && !reals.is_empty() && f.ret == ReturnType::Real {
            let act = activity(f, &reals)?;
            println!("  active wrt all real parameters: {{{}}}", act.iter().collect::<Vec<_>>().join(", "));
        }
    }
    Ok(())
}

fn cmd_diff(a: &DiffArgs) -> Result<()> {
    let src = read_source(&a.file)?;
    let module = complete_module(&parse(&src)?)?;
    let wrt: Vec<&str> = a.wrt.iter().map(String::as_str).collect();
    let mut req = match a.mode {
        ModeArg::Forward => {
            if wrt.len() != 1 {
                return Err(Error::Input("forward mode takes exactly one --wrt parameter".into()));
            }
            DerivativeRequest::forward(&a.function, wrt[0])
        }
        ModeArg::Reverse => DerivativeRequest::reverse(&a.function, &wrt),
    };
    req.prune = !a.no_prune;
    let derived = ad::differentiate(&module, &req)?;
    match &a.out {
        Some(path) => {
            let mut out = module.clone();
            out.functions.extend(derived);
            fs::write(path, print(&out))?;
        }
        None => print!("{}", print(&Module::new(derived))),
    }
    Ok(())
}

fn cmd_hessian(a: &HessianArgs) -> Result<()> {
    let m = load(&a.file)?;
    let f = m.function(&a.function).ok_or_else(|| Error::Input(format!("no function named `{}`", a.function)))?;
    let point = parse_args(&a.at, &param_types(&m, &a.function)?)?;
    let wrt: Vec<&str> = a.wrt.iter().map(String::as_str).collect();
    let h = HessianPlan::new(f, &wrt)?.eval(&point)?;
    println!("{}", h.labels.join("\t"));
    for row in &h.matrix {
        println!("{}", row.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join("\t"));
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let m = load(&a.file)?;
    let args = parse_args(&a.args, &param_types(&m, &a.function)?)?;
    let out = Program::compile(&m)?.call(&a.function, &args)?;
    match out.value {
        Some(v) => println!("{v:.17}"),
        None => println!("void"),
    }
    for (i, arr) in out.arrays.iter().enumerate() {
        if let Some(arr) = arr {
            println!("arg {i}: [{}]", fmt_list(arr));
        }
    }
    if a.count_ops {
        println!("{}", out.ops);
    }
    Ok(())
}

fn cmd_launch(a: &LaunchCmd) -> Result<()> {
    let m = load(&a.file)?;
    let cfg = match a.grid {
        Some(g) => LaunchConfig::new(g, a.block, a.n)?,
        None => LaunchConfig::from_n(a.n, a.block)?,
    };
    let mut args = LaunchArgs::default();
    let mut rd = csv::Reader::from_path(&a.init)?;
    let headers: Vec<String> = rd.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for rec in rd.records() {
        let rec = rec?;
        for (i, field) in rec.iter().enumerate().take(headers.len()) {
            if field.trim().is_empty() {
                continue;
            }
            cols[i].push(field.trim().parse::<f64>().map_err(|e| Error::Input(format!("{}: `{field}`: {e}", a.init.display())))?);
        }
    }
    let f = m.function(&a.kernel).ok_or_else(|| Error::Input(format!("no function named `{}`", a.kernel)))?;
    for (name, col) in headers.into_iter().zip(cols) {
        match f.param(&name).map(|p| p.ty) {
            Some(Type::Real) | Some(Type::Int) => {
                if let Some(v) = col.first() {
                    args.scalars.insert(name, *v);
                }
            }
            _ => {
                args.buffers.insert(name, col);
            }
        }
    }
    for (k, v) in &a.set {
        args.scalars.insert(k.clone(), *v);
    }
    let opts = LaunchOptions { allow_hazards: a.allow_hazards, workers: a.workers };
    let out = parallel::launch(&m, &a.kernel, &cfg, &args, &opts)?;
    eprintln!("{} of {} threads active", out.active_threads, out.total_threads);

    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    write_buffers(&out.buffers, sink)
}

fn write_buffers(buffers: &BTreeMap<String, Vec<f64>>, sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(buffers.keys())?;
    let rows = buffers.values().map(Vec::len).max().unwrap_or(0);
    for i in 0..rows {
        w.write_record(buffers.values().map(|b| b.get(i).map(|v| format!("{v:?}")).unwrap_or_default()))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_race_check(file: &Path, kernel: &str) -> Result<ExitCode> {
    let m = load(file)?;
    let f = m.function(kernel).ok_or_else(|| Error::Input(format!("no function named `{kernel}`")))?;
    if !f.is_global() {
        return Err(parallel::LaunchError::NotAKernel(kernel.to_string()).into());
    }
    check_module(&m)?;
    let report = parallel::race_check(&m, kernel);
    print!("{report}");
    Ok(if report.has_hazard() { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn cmd_numdiff(a: &NumdiffArgs) -> Result<()> {
    let m = load(&a.file)?;
    let f = m.function(&a.function).ok_or_else(|| Error::Input(format!("no function named `{}`", a.function)))?;
    let point = parse_args(&a.at, &param_types(&m, &a.function)?)?;
    let wrt = a
        .wrt
        .iter()
        .map(|w| f.param_index(w).ok_or_else(|| Error::Input(format!("`{w}` is not a parameter of `{}`", a.function))))
        .collect::<Result<Vec<_>>>()?;
    let (g, ops) = central_gradient(&m, &a.function, &point, &wrt, &DiffConfig::default())?;
    println!("{}", fmt_list(&g));
    println!("evaluations: {}", 2 * g.len());
    println!("{ops}");
    Ok(())
}

fn cmd_bench_fit(a: &FitArgs) -> Result<()> {
    let sink = |path: &Option<PathBuf>| -> Result<Box<dyn Write>> {
        Ok(match path {
            Some(p) => Box::new(fs::File::create(p)?),
            None => Box::new(std::io::stdout()),
        })
    };
    if let Some(csv_path) = &a.plot {
        let rows = fitbench::read_csv(fs::File::open(csv_path)?)?;
        sink(&a.out)?.write_all(fitbench::plot_table(&rows).as_bytes())?;
        return Ok(());
    }
    let mut cfg = BenchConfig {
        gaussians: a.gaussians.clone(),
        events: a.events,
        repeats: a.repeats,
        seed: a.seed,
        bins: a.bins,
        ..Default::default()
    };
    cfg.options.budget = a.budget;
    cfg.options.use_hessian = a.hessian;
    let rows = fitbench::bench_scaling(&cfg)?;
    fitbench::write_csv(&rows, sink(&a.out)?)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Parse { file } => cmd_parse(file)?,
        Command::Check { file } => cmd_check(file)?,
        Command::Diff(a) => cmd_diff(a)?,
        Command::Hessian(a) => cmd_hessian(a)?,
        Command::Run(a) => cmd_run(a)?,
        Command::Launch(a) => cmd_launch(a)?,
        Command::RaceCheck { file, kernel } => return cmd_race_check(file, kernel),
        Command::Numdiff(a) => cmd_numdiff(a)?,
        Command::Bench { which: BenchCmd::Fit(a) } => cmd_bench_fit(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
