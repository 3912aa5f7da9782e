use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use thermo_ops::birkhoff::{decompose, simulate};
use thermo_ops::cone::{simplex_xy, thermal_cone};
use thermo_ops::io::{
    from_json, read_decomposition, read_matrix, read_population, ConeFile, ContextFile, DecompositionFile, JsonScalar,
    PopulationFile, SequenceFile,
};
use thermo_ops::jaynes_cummings::{beta_bar_from_physical, beta_grid, find_s_for_target, region_row, RegionRow};
use thermo_ops::majorization::{curve_witness, thermo_majorizes_by, Route};
use thermo_ops::synthesis::synthesize;
use thermo_ops::thermalization::{is_thermalisation_of, relax};
use thermo_ops::{GibbsContext, Rational, ThermoError};

#[derive(Parser, Debug)]
#[command(name = "thermo-ops", version, about = "Thermal processes on finite spectra")]
struct Cli {
    /// Comparison tolerance (float mode; rational mode compares exactly).
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, global = true, value_enum, default_value_t = Mode::Rational)]
    mode: Mode,
    /// Output file (written atomically); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Rational,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RouteArg {
    Curve,
    Abs,
    Embedded,
    All,
}

#[derive(Args, Debug)]
struct PairArgs {
    #[arg(long)]
    p: PathBuf,
    #[arg(long)]
    q: PathBuf,
    #[arg(long)]
    ctx: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide whether p thermo-majorises q.
    CheckMajorization {
        #[command(flatten)]
        files: PairArgs,
        #[arg(long, value_enum, default_value_t = RouteArg::All)]
        route: RouteArg,
    },
    /// Build an elementary-step sequence taking p to q.
    Synthesize {
        #[command(flatten)]
        files: PairArgs,
        /// Keep consecutive steps on the same pair separate.
        #[arg(long)]
        no_group: bool,
    },
    /// Split a Gibbs-preserving matrix into thermo-permutations.
    Decompose {
        #[arg(long)]
        t: PathBuf,
        #[arg(long)]
        ctx: PathBuf,
    },
    /// Sample a decomposition and compare the mean with the exact image.
    Simulate {
        #[arg(long)]
        dec: PathBuf,
        #[arg(long)]
        p: PathBuf,
        #[arg(long)]
        samples: u64,
        #[arg(long)]
        seed: u64,
    },
    /// Vertices (and optionally facets) of the set reachable from p.
    Cone {
        #[arg(long)]
        p: PathBuf,
        #[arg(long)]
        ctx: PathBuf,
        #[arg(long)]
        facets: bool,
        /// 2-simplex coordinates of source and vertices (three levels only).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Jaynes-Cummings bounds over a grid of β̄, as CSV.
    JcRegion {
        #[arg(long, default_value_t = 0.05)]
        beta_min: f64,
        #[arg(long, default_value_t = 8.0)]
        beta_max: f64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
    },
    /// Interaction strength reaching a target transition probability.
    JcSolve {
        #[arg(long)]
        target: f64,
        #[command(flatten)]
        gap: GapArgs,
    },
    /// Exponential relaxation toward the Gibbs state.
    Relax {
        #[arg(long)]
        p: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        xi: f64,
        #[arg(long)]
        ctx: PathBuf,
    },
    /// Whether q is a thermalisation of p.
    ThermalisationCheck {
        #[command(flatten)]
        files: PairArgs,
    },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = true)]
struct GapArgs {
    #[arg(long, conflicts_with_all = ["temperature", "frequency"])]
    beta_bar: Option<f64>,
    /// Kelvin; use with --frequency instead of --beta-bar.
    #[arg(long, requires = "frequency")]
    temperature: Option<f64>,
    /// Hz (or rad/s with --angular).
    #[arg(long, requires = "temperature")]
    frequency: Option<f64>,
    #[arg(long)]
    angular: bool,
}

#[derive(Debug)]
enum Failure {
    Thermo(ThermoError),
    Io(PathBuf, std::io::Error),
    /// Domain failure that carries a JSON report for stdout.
    Report(ThermoError, Value),
}

impl From<ThermoError> for Failure {
    fn from(e: ThermoError) -> Self {
        Failure::Thermo(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Thermo(e) | Failure::Report(e, _) if e.is_domain() => 1,
            _ => 2,
        }
    }

    fn line(&self) -> String {
        match self {
            Failure::Thermo(e) | Failure::Report(e, _) => format!("error: {}: {e}", e.code()),
            Failure::Io(path, e) => format!("error: io: {}: {e}", path.display()),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::Io(path.to_owned(), e))
}

/// Writes to `out` via a temp file in the same directory, or to stdout.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Outcome<()> {
    let Some(path) = out else {
        std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::Io("<stdout>".into(), e))?;
        return Ok(());
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let io = |e| Failure::Io(path.to_owned(), e);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serialisable");
    bytes.push(b'\n');
    bytes
}

struct Run {
    tol: f64,
    mode: Mode,
    out: Option<PathBuf>,
}

impl Run {
    fn float(&self) -> bool {
        self.mode == Mode::Float
    }

    fn context(&self, path: &Path) -> Outcome<GibbsContext> {
        let ctx = from_json::<ContextFile>(&read(path)?, "context")?.build(self.float())?;
        if !self.float() && !ctx.is_exact() {
            eprintln!("warning: energies do not give exact multiplicities; using the closest d/D");
        }
        Ok(ctx)
    }

    fn population<S: JsonScalar>(&self, path: &Path) -> Outcome<thermo_ops::Population<S>> {
        Ok(read_population(&read(path)?)?)
    }

    fn write_json<T: Serialize>(&self, value: &T) -> Outcome<()> {
        emit(self.out.as_deref(), &json_bytes(value))
    }

    fn check_majorization<S: JsonScalar>(&self, files: &PairArgs, route: RouteArg) -> Outcome<()> {
        let ctx = self.context(&files.ctx)?;
        let p = self.population::<S>(&files.p)?;
        let q = self.population::<S>(&files.q)?;
        let routes: Vec<Route> = match route {
            RouteArg::Curve => vec![Route::Curve],
            RouteArg::Abs => vec![Route::Abs],
            RouteArg::Embedded => vec![Route::Embedded],
            // The embedded route needs multiplicities.
            RouteArg::All => Route::ALL
                .into_iter()
                .filter(|&r| r != Route::Embedded || ctx.rational().is_some())
                .collect(),
        };
        let mut verdicts = serde_json::Map::new();
        let mut verdict = None;
        for r in routes {
            let v = thermo_majorizes_by(r, &p, &q, &ctx, self.tol)?;
            verdicts.insert(r.name().into(), v.into());
            if let Some(prev) = verdict {
                if prev != v {
                    eprintln!("warning: routes disagree");
                }
            }
            verdict = Some(verdict.unwrap_or(true) && v);
        }
        let verdict = verdict.unwrap_or(false);
        let w = curve_witness(&p, &q, &ctx, self.tol)?;
        let witness = (!verdict).then(|| json!({"elbow": w.elbow.to_f64(), "deficit": w.deficit.to_f64()}));
        self.write_json(&json!({"verdict": verdict, "routes": verdicts, "witness": witness}))
    }

    fn synthesize(&self, files: &PairArgs, no_group: bool) -> Outcome<()> {
        let ctx = self.context(&files.ctx)?;
        let p = self.population::<Rational>(&files.p)?;
        let q = self.population::<Rational>(&files.q)?;
        match synthesize(&p, &q, &ctx, !no_group) {
            Ok(seq) => self.write_json(&SequenceFile::new(&seq, &ctx, self.float())?),
            Err(e @ ThermoError::NotMajorized { elbow, deficit }) => {
                let report = json!({"error": e.code(), "elbow": elbow, "deficit": deficit});
                Err(Failure::Report(e, report))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn decompose<S: JsonScalar>(&self, t: &Path, ctx: &Path) -> Outcome<()> {
        let ctx = self.context(ctx)?;
        let t = read_matrix::<S>(&read(t)?)?;
        let dec = decompose(&t, &ctx, self.tol)?;
        self.write_json(&DecompositionFile::new(&dec, self.float()))
    }

    fn simulate<S: JsonScalar>(&self, dec: &Path, p: &Path, samples: u64, seed: u64) -> Outcome<()> {
        let dec = read_decomposition::<S>(&read(dec)?)?;
        let p = self.population::<S>(p)?;
        let sim = simulate(&dec, &p, samples, seed)?;
        self.write_json(&json!({
            "samples": samples,
            "seed": seed,
            "counts": sim.counts,
            "mean": sim.mean,
            "expected": sim.expected,
            "std_error": sim.std_error,
        }))
    }

    fn cone<S: JsonScalar>(&self, p: &Path, ctx: &Path, facets: bool, csv_path: Option<&Path>) -> Outcome<()> {
        let ctx = self.context(ctx)?;
        let p = self.population::<S>(p)?;
        let cone = thermal_cone(&p, &ctx, facets)?;
        if let Some(path) = csv_path {
            if ctx.n() != 3 {
                return Err(ThermoError::InvalidParameter("simplex coordinates need exactly three levels".into()).into());
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| Failure::Io(path.to_owned(), e.into());
            w.write_record(["kind", "index", "x", "y"]).map_err(io)?;
            let points = std::iter::once(("source", &cone.source)).chain(cone.vertices.iter().map(|v| ("vertex", v)));
            for (k, (kind, point)) in points.enumerate() {
                let (x, y) = simplex_xy(point.to_f64().as_slice()).expect("three levels");
                let index = if kind == "source" { 0 } else { k - 1 };
                w.write_record([kind.to_string(), index.to_string(), x.to_string(), y.to_string()])
                    .map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| Failure::Io(path.to_owned(), e.into_error()))?;
            emit(Some(path), &bytes)?;
        }
        self.write_json(&ConeFile::new(&cone, self.float()))
    }

    fn jc_region(&self, min: f64, max: f64, step: f64) -> Outcome<()> {
        let grid = beta_grid(min, max, step)?;
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = std::env::var("THERMO_OPS_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
            pool = pool.num_threads(n.max(1));
        }
        let pool = pool
            .build()
            .map_err(|e| ThermoError::InvalidParameter(format!("thread pool: {e}")))?;
        let rows: Vec<RegionRow> = pool.install(|| grid.par_iter().map(|&b| region_row(b)).collect::<Result<_, _>>())?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Failure::Io(self.out.clone().unwrap_or_default(), e.into());
        for row in &rows {
            w.serialize(row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::Io(PathBuf::new(), e.into_error()))?;
        emit(self.out.as_deref(), &bytes)
    }

    fn jc_solve(&self, target: f64, gap: &GapArgs) -> Outcome<()> {
        let beta_bar = match (gap.beta_bar, gap.temperature, gap.frequency) {
            (Some(b), _, _) => b,
            (None, Some(t), Some(f)) => beta_bar_from_physical(t, f, gap.angular)?,
            _ => return Err(ThermoError::InvalidParameter("give --beta-bar or --temperature with --frequency".into()).into()),
        };
        let outcome = find_s_for_target(target, beta_bar, self.tol)?;
        let mut value = serde_json::to_value(outcome).expect("serialisable");
        value["beta_bar"] = beta_bar.into();
        value["target"] = target.into();
        self.write_json(&value)
    }

    fn relax(&self, p: &Path, t: f64, xi: f64, ctx: &Path) -> Outcome<()> {
        let ctx = self.context(ctx)?;
        let p = self.population::<f64>(p)?;
        let x = relax(&p, t, xi, &ctx)?;
        self.write_json(&PopulationFile::new(&x, true))
    }

    fn thermalisation_check<S: JsonScalar>(&self, files: &PairArgs) -> Outcome<()> {
        let ctx = self.context(&files.ctx)?;
        let p = self.population::<S>(&files.p)?;
        let q = self.population::<S>(&files.q)?;
        self.write_json(&is_thermalisation_of(&p, &q, &ctx, self.tol)?)
    }
}

fn dispatch(cli: Cli) -> Outcome<()> {
    let run = Run {
        tol: cli.tol,
        mode: cli.mode,
        out: cli.out,
    };
    let float = run.float();
    macro_rules! by_mode {
        ($method:ident ( $($arg:expr),* )) => {
            if float { run.$method::<f64>($($arg),*) } else { run.$method::<Rational>($($arg),*) }
        };
    }
    match &cli.command {
        Command::CheckMajorization { files, route } => by_mode!(check_majorization(files, *route)),
        Command::Synthesize { files, no_group } => run.synthesize(files, *no_group),
        Command::Decompose { t, ctx } => by_mode!(decompose(t, ctx)),
        Command::Simulate { dec, p, samples, seed } => by_mode!(simulate(dec, p, *samples, *seed)),
        Command::Cone { p, ctx, facets, csv } => by_mode!(cone(p, ctx, *facets, csv.as_deref())),
        Command::JcRegion { beta_min, beta_max, step } => run.jc_region(*beta_min, *beta_max, *step),
        Command::JcSolve { target, gap } => run.jc_solve(*target, gap),
        Command::Relax { p, t, xi, ctx } => run.relax(p, *t, *xi, ctx),
        Command::ThermalisationCheck { files } => by_mode!(thermalisation_check(files)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            if let Failure::Report(_, report) = &failure {
                let _ = std::io::stdout().write_all(&json_bytes(report));
            }
            eprintln!("{}", failure.line());
            ExitCode::from(failure.exit_code())
        }
    }
}
