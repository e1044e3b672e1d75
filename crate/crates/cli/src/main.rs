//! `gridbesov`: grid generation, Haar transforms, Besov norms, Dirac and
//! dipole expansions, dipole decompositions and equivalence sweeps.
//!
//! Exit status: 0 on success (or a passing experiment), 1 on a contract
//! violation or failing experiment, 2 on usage or parse errors.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gridbesov::besov::{holder_norm, norm_minus, norm_plus, Convention};
use gridbesov::dipole_decomp::{
    build_dipole_basis, dc_decompose, dc_norm, dc_to_dist, dd_decompose, dd_to_dist, AnchorRule, DipoleBasis,
};
use gridbesov::experiments::{run_experiment, ExperimentKind, ExperimentSpec, GridSummary};
use gridbesov::grid::{build_dyadic, build_random, build_uniform, parse_path, validate, Address, RandomGridParams};
use gridbesov::haar::{analyze, synthesize};
use gridbesov::io;
use gridbesov::particles::{dipole_coeffs, dipole_norm_bounds, dirac_coeffs};
use gridbesov::scalar::{parse_rational, Rational, Scalar};
use gridbesov::{Error, GoodGrid};
use serde_json::json;

#[derive(Parser)]
#[command(name = "gridbesov", version, about = "Haar analysis and Besov norms on good grids")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Grid file; commands without one fall back to a dyadic grid of `--depth` levels.
    #[arg(long, global = true)]
    grid: Option<PathBuf>,
    /// Smoothness in (0, 1).
    #[arg(long, global = true)]
    s: Option<f64>,
    /// Truncation level (or generator depth).
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Mode::Rational)]
    mode: Mode,
    /// Output file; stdout when absent.
    #[arg(long, short = 'o', global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Rational,
    Float,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Rational => "rational",
            Mode::Float => "float",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate or validate grid files.
    Grid {
        #[command(subcommand)]
        action: GridCommand,
    },
    /// Haar coefficients of a step function (JSON in, CSV out).
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ConventionArg::Bplus)]
        convention: ConventionArg,
    },
    /// Step function from a coefficient file.
    Synthesize {
        #[arg(long)]
        coeffs: PathBuf,
        /// Level of the output; defaults to the finest coefficient level.
        #[arg(long)]
        level: Option<usize>,
    },
    /// Norm of a coefficient file, or the Hölder norm of a step function.
    Norm {
        #[arg(long, value_enum)]
        kind: NormKind,
        #[arg(long, required_unless_present = "input")]
        coeffs: Option<PathBuf>,
        #[arg(long, conflicts_with = "coeffs")]
        input: Option<PathBuf>,
    },
    /// Truncated Dirac mass at a path.
    Dirac {
        /// Comma-separated child indices.
        #[arg(long)]
        path: String,
    },
    /// Truncated dipole `delta_x - delta_y` with certified norm bounds.
    Dipole {
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
    },
    /// Dipole-basis decompositions.
    Dc {
        #[command(subcommand)]
        action: DcCommand,
    },
    /// Dirac/dipole representations.
    Dd {
        #[command(subcommand)]
        action: DdCommand,
    },
    /// Monte Carlo equivalence sweep; exits 0 iff the contract holds.
    Experiment {
        #[arg(long, value_parser = parse_kind)]
        kind: ExperimentKind,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Depth of the generated grid when `--grid` is absent; defaults to `--depth`.
        #[arg(long)]
        grid_depth: Option<usize>,
        #[command(flatten)]
        gen: GenArgs,
    },
}

#[derive(Subcommand)]
enum GridCommand {
    Gen {
        #[command(flatten)]
        gen: GenArgs,
        /// Also print the validation report.
        #[arg(long)]
        validate: bool,
    },
    Validate {
        file: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long = "type", value_enum, default_value_t = GridType::Dyadic)]
    grid_type: GridType,
    /// Children per cell for `uniform`.
    #[arg(long, default_value_t = 3)]
    branching: usize,
    #[arg(long, default_value_t = 4)]
    max_children: usize,
    #[arg(long, default_value = "1/2")]
    lambda: String,
    #[arg(long, default_value = "1/4")]
    lambda_star: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridType {
    Dyadic,
    Uniform,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Bplus,
    Bminus,
    Plain,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Bplus => Convention::BesovPlus,
            ConventionArg::Bminus => Convention::BesovMinus,
            ConventionArg::Plain => Convention::Plain,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NormKind {
    Bplus,
    Bminus,
    Holder,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Leftmost,
    Random,
}

#[derive(Args)]
struct BasisArgs {
    #[arg(long, value_enum, default_value_t = RuleArg::Leftmost)]
    rule: RuleArg,
}

#[derive(Subcommand)]
enum DcCommand {
    /// Dipole-basis coefficients of a negative-smoothness coefficient file.
    Decompose {
        #[arg(long)]
        coeffs: PathBuf,
        #[command(flatten)]
        basis: BasisArgs,
    },
    /// Truncated distribution of a dipole-basis coefficient file.
    Synthesize {
        #[arg(long)]
        dc: PathBuf,
        #[command(flatten)]
        basis: BasisArgs,
    },
}

#[derive(Subcommand)]
enum DdCommand {
    Decompose {
        #[arg(long)]
        coeffs: PathBuf,
        #[command(flatten)]
        basis: BasisArgs,
    },
    Synthesize {
        #[arg(long)]
        dd: PathBuf,
    },
}

fn parse_kind(text: &str) -> Result<ExperimentKind, String> {
    ExperimentKind::parse(text).map_err(|e| e.to_string())
}

/// Bad invocation detected after argument parsing.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// An experiment ran to completion but its contract failed.
#[derive(Debug)]
struct Failed;

impl fmt::Display for Failed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("experiment contract failed")
    }
}

impl std::error::Error for Failed {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Parse(_) | Error::Json(_) | Error::Csv(_) | Error::Io(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<Failed>().is_none() {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(text) = std::env::var("GRIDBESOV_THREADS") else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("GRIDBESOV_THREADS must be a positive integer, got {text:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Grid { action } => cmd_grid(g, action),
        Command::Experiment {
            kind,
            trials,
            grid_depth,
            gen,
        } => cmd_experiment(g, *kind, *trials, *grid_depth, gen),
        other => match g.mode {
            Mode::Rational => run_scalar::<Rational>(g, other),
            Mode::Float => run_scalar::<f64>(g, other),
        },
    }
}

fn run_scalar<S: Scalar>(g: &Global, command: &Command) -> anyhow::Result<()> {
    match command {
        Command::Analyze { input, convention } => {
            let grid = load_grid(g, None)?;
            let psi = io::step_from_json::<S>(grid, &read(input)?)?;
            let c = analyze(&psi, smoothness(g)?)?.with_convention((*convention).into());
            emit(g, &io::coeffs_to_csv(&c)?)
        }
        Command::Synthesize { coeffs, level } => {
            let grid = load_grid(g, None)?;
            let (c, _) = io::coeffs_from_text::<S>(grid, &read(coeffs)?)?;
            let level = level.or(g.depth).unwrap_or_else(|| c.max_owner_level().map_or(0, |k| k + 1));
            emit(g, &io::step_to_json(&synthesize(&c, level)?))
        }
        Command::Norm { kind, coeffs, input } => cmd_norm::<S>(g, *kind, coeffs.as_deref(), input.as_deref()),
        Command::Dirac { path } => {
            let path = parse_path(path, ',')?;
            let grid = load_grid(g, Some(path.len()))?;
            let n = g.depth.unwrap_or(grid.depth());
            let s = smoothness(g)?;
            let t = dirac_coeffs::<S>(&grid, &Address::new(path.clone()), s, n)?;
            let mut out = io::truncated_to_json(&t);
            out["parameters"] = json!({ "path": path, "s": s, "depth": n, "mode": g.mode.name() });
            out["grid"] = json!(GridSummary::of(&grid));
            emit(g, &out.to_string())
        }
        Command::Dipole { x, y } => {
            let (xp, yp) = (parse_path(x, ',')?, parse_path(y, ',')?);
            let grid = load_grid(g, Some(xp.len().max(yp.len())))?;
            let n = g.depth.unwrap_or(grid.depth());
            let s = smoothness(g)?;
            let (xa, ya) = (Address::new(xp.clone()), Address::new(yp.clone()));
            let t = dipole_coeffs::<S>(&grid, &xa, &ya, s, n)?;
            let bounds = dipole_norm_bounds(&grid, &xa, &ya, s, Some(n))?;
            let mut out = io::truncated_to_json(&t);
            out["bounds"] = json!(bounds);
            out["parameters"] = json!({ "x": xp, "y": yp, "s": s, "depth": n, "mode": g.mode.name() });
            out["grid"] = json!(GridSummary::of(&grid));
            emit(g, &out.to_string())
        }
        Command::Dc { action } => cmd_dc::<S>(g, action),
        Command::Dd { action } => cmd_dd::<S>(g, action),
        Command::Grid { .. } | Command::Experiment { .. } => unreachable!("handled before scalar dispatch"),
    }
}

fn cmd_norm<S: Scalar>(g: &Global, kind: NormKind, coeffs: Option<&Path>, input: Option<&Path>) -> anyhow::Result<()> {
    let grid = load_grid(g, None)?;
    let s = smoothness(g)?;
    let report = match (kind, coeffs, input) {
        (NormKind::Holder, _, Some(input)) => {
            let psi = io::step_from_json::<S>(grid.clone(), &read(input)?)?;
            let h = holder_norm(&psi, s);
            json!({ "norm": h.norm, "sup": h.sup, "seminorm": h.seminorm, "tail_bound": 0.0,
                    "witness": h.witness.map(|c| c.to_path_text()) })
        }
        (NormKind::Holder, Some(_), None) => return Err(usage("the Hölder norm needs --input with a step function")),
        (kind, Some(path), None) => {
            let (c, tail) = io::coeffs_from_text::<S>(grid.clone(), &read(path)?)?;
            if (c.s() - s).abs() > 1e-12 {
                return Err(Error::SmoothnessMismatch(c.s(), s).into());
            }
            let r = match kind {
                NormKind::Bplus => norm_plus(&c.with_convention(Convention::BesovPlus))?,
                _ => norm_minus(&c.with_convention(Convention::BesovMinus))?,
            };
            json!({ "norm": r.norm, "tail_bound": r.tail_bound + tail,
                    "witness": r.witness.map(|c| c.to_path_text()) })
        }
        (_, _, Some(_)) => return Err(usage("--input is only accepted with --kind holder")),
        (_, None, None) => return Err(usage("one of --coeffs or --input is required")),
    };
    let mut out = report;
    out["schema_version"] = json!(io::SCHEMA_VERSION);
    out["parameters"] = json!({ "kind": kind_name(kind), "s": s, "mode": g.mode.name() });
    out["grid"] = json!(GridSummary::of(&grid));
    emit(g, &out.to_string())
}

fn kind_name(kind: NormKind) -> &'static str {
    match kind {
        NormKind::Bplus => "bplus",
        NormKind::Bminus => "bminus",
        NormKind::Holder => "holder",
    }
}

fn basis_for(g: &Global, grid: Arc<GoodGrid>, args: &BasisArgs) -> Arc<DipoleBasis> {
    let rule = match args.rule {
        RuleArg::Leftmost => AnchorRule::Leftmost,
        RuleArg::Random => AnchorRule::SeededRandom {
            seed: g.seed.unwrap_or(0),
        },
    };
    Arc::new(build_dipole_basis(grid, rule))
}

fn read_minus<S: Scalar>(g: &Global, grid: Arc<GoodGrid>, path: &Path) -> anyhow::Result<gridbesov::DistCoeffs<S>> {
    let (c, _) = io::coeffs_from_text::<S>(grid, &read(path)?)?;
    if let Some(s) = g.s {
        if (c.s() - s).abs() > 1e-12 {
            return Err(Error::SmoothnessMismatch(c.s(), s).into());
        }
    }
    Ok(c.with_convention(Convention::BesovMinus))
}

fn cmd_dc<S: Scalar>(g: &Global, action: &DcCommand) -> anyhow::Result<()> {
    let grid = load_grid(g, None)?;
    match action {
        DcCommand::Decompose { coeffs, basis } => {
            let phi = read_minus::<S>(g, grid.clone(), coeffs)?;
            let basis = basis_for(g, grid, basis);
            let dc = dc_decompose(&phi, &basis, g.depth)?;
            eprintln!("dc_norm {} tail_bound {}", dc_norm(&dc), dc.tail_bound);
            emit(g, &io::dc_to_csv(&dc)?)
        }
        DcCommand::Synthesize { dc, basis } => {
            let basis = basis_for(g, grid.clone(), basis);
            let coeffs = io::dc_from_csv::<S>(basis, smoothness(g)?, &read(dc)?)?;
            let n = g.depth.unwrap_or(grid.depth());
            emit(g, &io::truncated_to_json(&dc_to_dist(&coeffs, n)?).to_string())
        }
    }
}

fn cmd_dd<S: Scalar>(g: &Global, action: &DdCommand) -> anyhow::Result<()> {
    let grid = load_grid(g, None)?;
    match action {
        DdCommand::Decompose { coeffs, basis } => {
            let phi = read_minus::<S>(g, grid.clone(), coeffs)?;
            let s = phi.s();
            let basis = basis_for(g, grid.clone(), basis);
            let rep = dd_decompose(&phi, &basis, g.depth)?;
            emit(g, &io::dd_to_json(&grid, &rep, s)?)
        }
        DdCommand::Synthesize { dd } => {
            let rep = io::dd_from_json::<S>(&read(dd)?)?;
            let n = g.depth.unwrap_or(grid.depth());
            emit(g, &io::truncated_to_json(&dd_to_dist(&grid, &rep, smoothness(g)?, n)?).to_string())
        }
    }
}

fn cmd_grid(g: &Global, action: &GridCommand) -> anyhow::Result<()> {
    match action {
        GridCommand::Gen { gen, validate: show } => {
            let depth = g.depth.ok_or_else(|| usage("grid gen needs --depth"))?;
            let grid = generate(gen, depth, g.seed.unwrap_or(0))?;
            emit(g, &io::grid_to_json(&grid))?;
            if *show {
                let report = serde_json::to_string(&validate(&grid))?;
                if g.out.is_some() {
                    println!("{report}");
                } else {
                    eprintln!("{report}");
                }
            }
            Ok(())
        }
        GridCommand::Validate { file } => {
            let path = file.as_ref().or(g.grid.as_ref()).ok_or_else(|| usage("grid validate needs a file"))?;
            let grid = io::grid_from_json_unchecked(&read(path)?)?;
            let report = validate(&grid);
            println!("{}", serde_json::to_string(&report)?);
            if report.pass {
                Ok(())
            } else {
                Err(Error::InvalidGrid(report.summary()).into())
            }
        }
    }
}

fn generate(gen: &GenArgs, depth: usize, seed: u64) -> anyhow::Result<GoodGrid> {
    Ok(match gen.grid_type {
        GridType::Dyadic => build_dyadic(depth),
        GridType::Uniform => {
            if gen.branching < 2 {
                return Err(usage("--branching must be at least 2"));
            }
            build_uniform(depth, gen.branching)
        }
        GridType::Random => build_random(&RandomGridParams {
            seed,
            depth,
            max_children: gen.max_children,
            lambda: parse_rational(&gen.lambda)?,
            lambda_star: parse_rational(&gen.lambda_star)?,
        })?,
    })
}

fn cmd_experiment(
    g: &Global,
    kind: ExperimentKind,
    trials: usize,
    grid_depth: Option<usize>,
    gen: &GenArgs,
) -> anyhow::Result<()> {
    let s = smoothness(g)?;
    let seed = g.seed.unwrap_or(0);
    let grid = match &g.grid {
        Some(path) => Arc::new(io::read_grid(path).with_context(|| format!("reading {}", path.display()))?),
        None => {
            let depth = grid_depth
                .or(g.depth)
                .ok_or_else(|| usage("experiment needs --grid, --grid-depth or --depth"))?;
            Arc::new(generate(gen, depth, seed)?)
        }
    };
    let spec = ExperimentSpec {
        kind,
        s,
        depth: g.depth.unwrap_or(grid.depth()),
        trials,
        seed,
        exact: g.mode == Mode::Rational,
    };
    let report = run_experiment(&grid, &spec)?;
    emit(g, &serde_json::to_string_pretty(&report)?)?;
    if report.pass {
        Ok(())
    } else {
        Err(anyhow!(Failed))
    }
}

fn smoothness(g: &Global) -> anyhow::Result<f64> {
    let s = g.s.ok_or_else(|| usage("--s is required"))?;
    if s > 0.0 && s < 1.0 {
        Ok(s)
    } else {
        Err(usage(format!("--s must lie in (0, 1), got {s}")))
    }
}

/// The `--grid` file, else a dyadic grid deep enough for `--depth` and `min_depth`.
fn load_grid(g: &Global, min_depth: Option<usize>) -> anyhow::Result<Arc<GoodGrid>> {
    if let Some(path) = &g.grid {
        let grid = io::read_grid(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(Arc::new(grid));
    }
    let depth = match (g.depth, min_depth) {
        (Some(d), Some(m)) => d.max(m),
        (Some(d), None) => d,
        (None, Some(m)) => m,
        (None, None) => return Err(usage("pass --grid or --depth")),
    };
    Ok(Arc::new(build_dyadic(depth)))
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path)
        .map_err(Error::from)
        .with_context(|| format!("reading {}", path.display()))
}

fn emit(g: &Global, text: &str) -> anyhow::Result<()> {
    match &g.out {
        Some(path) => fs::write(path, text)
            .map_err(Error::from)
            .with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_map_to_usage_status() {
        assert_eq!(exit_code(&anyhow::Error::from(Error::Parse("x".into()))), 2);
        assert_eq!(exit_code(&usage("x")), 2);
        assert_eq!(exit_code(&anyhow::Error::from(Error::GridMismatch)), 1);
        assert_eq!(exit_code(&anyhow!(Failed)), 1);
    }

    #[test]
    fn context_keeps_the_status() {
        let e = anyhow::Error::from(Error::Parse("x".into())).context("reading f");
        assert_eq!(exit_code(&e), 2);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
