use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use poalab::io::{parse_instance, write_sweep_csv, FormatError, InstanceText, Parsed};
use poalab::metrics::{self, MetricsError};
use poalab::oracle::{self, OracleError, MAX_ORACLE_PATHS};
use poalab::scaling::{self, ScalingError, SweepSpec};
use poalab::{
    CostSpec, Distribution, Instance, ModelError, Objective, SolveError, SolveOptions, SolveResult,
};

#[derive(Parser)]
#[command(name = "poalab", version, about = "Price-of-anarchy laboratory for routing games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance and list every violation
    Validate(InputArgs),
    /// Solve for user equilibrium or system optimum
    Solve {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "ue")]
        objective: ObjectiveArg,
        /// Relative-gap stopping tolerance
        #[arg(long, default_value_t = 1e-4)]
        gap: f64,
        #[arg(long, default_value_t = 5000)]
        max_iters: usize,
    },
    /// Equilibrium cost, optimal cost and their ratio
    Poa {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 1e-8)]
        gap: f64,
        #[arg(long, default_value_t = 5000)]
        max_iters: usize,
    },
    /// Scale total demand over a grid and tabulate the metrics as CSV
    Sweep(SweepArgs),
    /// How far a solved profile is from being an equilibrium
    EpsCheck {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "so")]
        objective: ObjectiveArg,
        #[arg(long, default_value_t = 1e-8)]
        gap: f64,
    },
    /// Compare Frank-Wolfe against exhaustive path-flow search
    OracleCompare {
        #[command(flatten)]
        input: InputArgs,
        /// Grid steps per unit of demand
        #[arg(long, default_value_t = 40)]
        grid: usize,
        #[arg(long, default_value_t = 1e-8)]
        gap: f64,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Instance file (JSON document or TNTP network file)
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// TNTP trips file, required with --format tntp
    #[arg(long)]
    trips: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    /// OD shares, comma separated; defaults to the instance's demand shares
    #[arg(long)]
    lambda: Option<String>,
    /// `log:<lo>:<hi>:<n>` or a comma-separated list of total demands
    #[arg(long, default_value = "log:10:1e4:16")]
    t_grid: String,
    /// Scaling exponent; inferred from the highest cost degree when omitted
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    gap: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    saturation_tol: f64,
    #[arg(long, default_value_t = 1.0)]
    tail_fraction: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Ue,
    So,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Ue => Objective::UserEquilibrium,
            ObjectiveArg::So => Objective::SystemOptimum,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Tntp,
}

enum Failure {
    Usage(String),
    NonConvergence(String),
    Validation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::NonConvergence(_) => 2,
            Failure::Validation(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::NonConvergence(m) | Failure::Validation(m) => m,
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io(_) | FormatError::EmptyRows => Failure::Usage(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Model(ModelError::Invalid(_)) | SolveError::Disconnected(_) => {
                Failure::Validation(e.to_string())
            }
            SolveError::Model(_) | SolveError::InvalidOptions(_) => Failure::Usage(e.to_string()),
            _ => Failure::NonConvergence(e.to_string()),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Cost(_) => Failure::NonConvergence(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<ScalingError> for Failure {
    fn from(e: ScalingError) -> Self {
        match e {
            ScalingError::Solve(s) => s.into(),
            ScalingError::Model(ModelError::Invalid(_)) => Failure::Validation(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load(input: &InputArgs) -> Result<Parsed, Failure> {
    let text = read(&input.instance)?;
    let parsed = match input.format {
        FormatArg::Json => parse_instance(InstanceText::Json(&text))?,
        FormatArg::Tntp => {
            let trips_path = input
                .trips
                .as_ref()
                .ok_or_else(|| Failure::Usage("--format tntp needs --trips".into()))?;
            let trips = read(trips_path)?;
            parse_instance(InstanceText::Tntp {
                network: &text,
                trips: &trips,
            })?
        }
    };
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    Ok(parsed)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn options(objective: Objective, gap: f64, max_iters: usize) -> SolveOptions {
    let mut o = SolveOptions::new(objective).with_gap(gap);
    o.max_iters = max_iters;
    o
}

fn objective_name(o: Objective) -> &'static str {
    match o {
        Objective::UserEquilibrium => "ue",
        Objective::SystemOptimum => "so",
    }
}

fn not_converged(r: &SolveResult, what: &str) -> Failure {
    Failure::NonConvergence(format!(
        "{what} did not converge: relative gap {} after {} iterations",
        num(r.relative_gap),
        r.iterations
    ))
}

fn validate(input: &InputArgs) -> Result<(), Failure> {
    let text = read(&input.instance)?;
    let result = match input.format {
        FormatArg::Json => parse_instance(InstanceText::Json(&text)),
        FormatArg::Tntp => {
            let trips_path = input
                .trips
                .as_ref()
                .ok_or_else(|| Failure::Usage("--format tntp needs --trips".into()))?;
            let trips = read(trips_path)?;
            parse_instance(InstanceText::Tntp {
                network: &text,
                trips: &trips,
            })
        }
    };
    match result {
        Ok(p) => {
            for w in &p.warnings {
                eprintln!("warning: {w}");
            }
            let inst = &p.instance;
            println!(
                "ok: {} nodes, {} arcs, {} OD pairs, total demand {}",
                inst.network.node_count(),
                inst.network.arc_count(),
                inst.od_pairs.len(),
                num(inst.total_demand())
            );
            Ok(())
        }
        Err(FormatError::Invalid(violations)) => {
            for v in &violations {
                eprintln!("violation: {v}");
            }
            Err(Failure::Validation(format!("{} violation(s)", violations.len())))
        }
        Err(e) => Err(e.into()),
    }
}

fn solve_cmd(input: &InputArgs, objective: Objective, gap: f64, max_iters: usize) -> Result<(), Failure> {
    let inst = load(input)?.instance;
    let r = poalab::solve(&inst, &options(objective, gap, max_iters))?;
    let names = &inst.network.node_names;
    let mut out = io::stdout().lock();
    writeln!(out, "objective: {}", objective_name(objective))?;
    writeln!(out, "converged: {}", r.converged)?;
    writeln!(out, "iterations: {}", r.iterations)?;
    writeln!(out, "relative_gap: {}", num(r.relative_gap))?;
    writeln!(out, "objective_value: {}", num(r.objective_value))?;
    writeln!(out, "social_cost: {}", num(r.social_cost))?;
    writeln!(out, "arc,tail,head,flow")?;
    for (a, f) in inst.network.arcs.iter().zip(&r.profile.link_flows) {
        writeln!(out, "{},{},{},{}", a.id, names[a.tail], names[a.head], num(*f))?;
    }
    writeln!(out, "od,flow,arcs")?;
    for p in &r.profile.paths {
        let arcs: Vec<String> = p.arcs.iter().map(|a| a.to_string()).collect();
        writeln!(out, "{},{},{}", p.od, num(p.flow), arcs.join(" "))?;
    }
    if !r.converged {
        return Err(not_converged(&r, "solve"));
    }
    Ok(())
}

fn poa_cmd(input: &InputArgs, gap: f64, max_iters: usize) -> Result<(), Failure> {
    let inst = load(input)?.instance;
    let (ne, so) = metrics::solve_pair(&inst, &options(Objective::UserEquilibrium, gap, max_iters))?;
    let r = metrics::report_from(&ne, &so);
    println!("c_ne: {}", num(r.c_ne));
    println!("c_so: {}", num(r.c_so));
    println!("poa: {}", num(r.poa));
    println!("ne_gap: {}", num(r.ne_gap));
    println!("so_gap: {}", num(r.so_gap));
    if !ne.converged {
        return Err(not_converged(&ne, "equilibrium solve"));
    }
    if !so.converged {
        return Err(not_converged(&so, "optimum solve"));
    }
    Ok(())
}

fn eps_cmd(input: &InputArgs, objective: Objective, gap: f64) -> Result<(), Failure> {
    let inst = load(input)?.instance;
    let r = poalab::solve(&inst, &options(objective, gap, 5000))?;
    let eps = metrics::epsilon_of_profile(&inst, &r.profile, None)?;
    let residual = metrics::epsilon_under(&inst, &r.profile, objective, None)?;
    println!("objective: {}", objective_name(objective));
    println!("relative_gap: {}", num(r.relative_gap));
    println!("epsilon_ne: {}", num(eps));
    println!("own_price_residual: {}", num(residual));
    if !r.converged {
        return Err(not_converged(&r, "solve"));
    }
    Ok(())
}

fn oracle_cmd(input: &InputArgs, grid: usize, gap: f64) -> Result<(), Failure> {
    let inst = load(input)?.instance;
    let paths = oracle::enumerate_paths(&inst, MAX_ORACLE_PATHS)?;
    println!("paths: {}", paths.total());
    let mut failed = None;
    for objective in [Objective::UserEquilibrium, Objective::SystemOptimum] {
        let fw = poalab::solve(&inst, &options(objective, gap, 5000))?;
        let bf = oracle::brute_force(&inst, &paths, objective, grid)?;
        let rel = (fw.objective_value - bf.value).abs() / bf.value.abs().max(f64::MIN_POSITIVE);
        println!(
            "{}: frank_wolfe {} brute_force {} rel_diff {}",
            objective_name(objective),
            num(fw.objective_value),
            num(bf.value),
            num(rel)
        );
        if !fw.converged && failed.is_none() {
            failed = Some(not_converged(&fw, "solve"));
        }
    }
    failed.map_or(Ok(()), Err)
}

/// Highest polynomial degree over all arcs, if every cost has one.
fn infer_beta(inst: &Instance) -> Option<f64> {
    inst.network
        .arcs
        .iter()
        .map(|a| {
            a.cost
                .monomials()
                .map(|m| m.iter().map(|t| t.1).fold(0.0, f64::max))
        })
        .try_fold(0.0, |acc: f64, d| d.map(|d| acc.max(d)))
}

fn all_bpr(inst: &Instance) -> bool {
    inst.network
        .arcs
        .iter()
        .all(|a| matches!(a.cost, CostSpec::Bpr { .. }))
}

fn sweep_cmd(args: &SweepArgs) -> Result<(), Failure> {
    let inst = load(&args.input)?.instance;
    let distribution = match &args.lambda {
        Some(text) => {
            let shares = text
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|_| Failure::Usage(format!("bad --lambda {text:?}")))?;
            Distribution::new(shares).map_err(|e| Failure::Usage(e.to_string()))?
        }
        None => inst.normalize_demands().map_err(|e| Failure::Usage(e.to_string()))?.1,
    };
    let beta = match args.beta {
        Some(b) => b,
        None => infer_beta(&inst).ok_or_else(|| {
            Failure::Usage("cannot infer --beta for non-polynomial costs; pass it explicitly".into())
        })?,
    };
    let t_values = scaling::parse_grid(&args.t_grid)?;
    let spec = SweepSpec {
        distribution: distribution.clone(),
        t_values,
        options: options(Objective::UserEquilibrium, args.gap, args.max_iters),
        beta_ref: beta,
    };
    let points = scaling::run_sweep_detailed(&inst, &spec, args.jobs.max(1))?;
    let rows: Vec<_> = points.iter().map(|p| p.row.clone()).collect();

    match &args.out {
        Some(path) => {
            let file = fs::File::create(path)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            write_sweep_csv(&rows, io::BufWriter::new(file))?;
        }
        None => {
            write_sweep_csv(&rows, io::stdout().lock())?;
        }
    }

    let mut err = io::stderr().lock();
    writeln!(err, "# summary")?;
    writeln!(err, "# beta: {}", num(beta))?;
    match scaling::saturation_point(&rows, args.saturation_tol) {
        Some(t) => writeln!(err, "# saturation_point (tol {}): {}", args.saturation_tol, num(t))?,
        None => writeln!(err, "# saturation_point (tol {}): not reached", args.saturation_tol)?,
    }
    match scaling::decay_exponent(&rows, args.tail_fraction) {
        Ok(k) => writeln!(err, "# decay_exponent: {}", num(k))?,
        Err(e) => writeln!(err, "# decay_exponent: unavailable ({e})")?,
    }
    if let Some(last) = rows.last() {
        writeln!(err, "# L_estimate (ratio_ne at t = {}): {}", num(last.t), num(last.ratio_ne))?;
        writeln!(err, "# ratio_so at t_max: {}", num(last.ratio_so))?;
    }
    match scaling::limit_ratio(&inst, &distribution, beta, &spec.options) {
        Ok(l) => writeln!(err, "# limit_ratio: {}", num(l))?,
        Err(e) => writeln!(err, "# limit_ratio: unavailable ({e})")?,
    }
    if all_bpr(&inst) {
        match metrics::l_upper_bound(&inst, 10_000) {
            Ok(b) => writeln!(err, "# l_upper_bound: {}", num(b))?,
            Err(MetricsError::Oracle(e)) => writeln!(err, "# l_upper_bound: unavailable ({e})")?,
            Err(e) => writeln!(err, "# l_upper_bound: unavailable ({e})")?,
        }
    }
    if let Some(p) = points.last() {
        if let (Some(ne), Some(so)) = (&p.ne, &p.so) {
            let g = scaling::distribution_gap(&ne.profile, &so.profile, p.row.t);
            writeln!(err, "# distribution_gap at t_max: {}", num(g))?;
        }
    }
    let derived = scaling::pigou_poa(1.0, 1.0);
    let quoted = scaling::pigou_poa_quoted(1.0, 1.0);
    let verdict = if (derived - quoted).abs() > 1e-9 { "disagree" } else { "agree" };
    writeln!(
        err,
        "# pigou check (beta 1, t 1): derived {} quoted {} -> {verdict}",
        num(derived),
        num(quoted)
    )?;

    let flagged: Vec<String> = rows
        .iter()
        .filter_map(|r| r.flag.as_ref().map(|f| format!("t = {}: {f}", num(r.t))))
        .collect();
    for f in &flagged {
        writeln!(err, "# flagged {f}")?;
    }
    if !flagged.is_empty() {
        return Err(Failure::NonConvergence(format!(
            "{} sweep point(s) did not converge",
            flagged.len()
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate(input) => validate(&input),
        Command::Solve {
            input,
            objective,
            gap,
            max_iters,
        } => solve_cmd(&input, objective.into(), gap, max_iters),
        Command::Poa {
            input,
            gap,
            max_iters,
        } => poa_cmd(&input, gap, max_iters),
        Command::Sweep(args) => sweep_cmd(&args),
        Command::EpsCheck {
            input,
            objective,
            gap,
        } => eps_cmd(&input, objective.into(), gap),
        Command::OracleCompare { input, grid, gap } => oracle_cmd(&input, grid, gap),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
