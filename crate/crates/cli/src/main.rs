use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use hyperfill_core::calculus::{partition_sum_error, telescoping_audit, TelescopingAudit};
use hyperfill_core::filling::{
    audit_filling, build_filling, build_nested_filling, FillingAudit, FillingFile, LoadedFilling,
};
use hyperfill_core::json;
use hyperfill_core::norms::{
    fn_norm, hajlasz_norm, nonhom_norm, LevelWindow, NormVariant, SmoothnessParams, SpaceKind,
};
use hyperfill_core::space::{
    ahlfors_fit, codim_regularity_check, default_porosity_grid, doubling_constant, porosity_scan,
    AhlforsFit, CodimBand, FiniteMetricMeasureSpace, PorosityScan, SpaceDescriptor,
};
use hyperfill_core::trace::{
    extend_besov, extend_sobolev, extend_triebel, nonhom_extend, nonhom_trace, trace_besov,
    trace_triebel,
};
use hyperfill_core::verify::{run_audit, AuditName, ExperimentConfig};
use hyperfill_core::{Error, ErrorKind};

const SEED_VAR: &str = "HYPERFILL_SEED";

#[derive(Parser)]
#[command(name = "hyperfill", version, about = "Hyperbolic fillings, function-space norms and trace operators")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Point-cloud spaces.
    #[command(subcommand)]
    Space(SpaceCmd),
    /// Hyperbolic fillings.
    #[command(subcommand)]
    Filling(FillingCmd),
    /// Discrete calculus checks.
    #[command(subcommand)]
    Calculus(CalculusCmd),
    /// Function-space norms.
    #[command(subcommand)]
    Norm(NormCmd),
    /// Trace and extension operators.
    #[command(subcommand)]
    Trace(TraceCmd),
    /// Run a numerical audit from a JSON config.
    Verify(VerifyArgs),
}

#[derive(Subcommand)]
enum SpaceCmd {
    /// Build a space and print its summary.
    Build {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ahlfors, doubling, porosity and co-dimension audits.
    Audit {
        file: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FillingCmd {
    /// Build a filling and write it as JSON.
    Build {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        nmin: i32,
        #[arg(long, allow_hyphen_values = true)]
        nmax: i32,
        /// Build the nested filling of the space's subset.
        #[arg(long)]
        subset: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Separation, covering and overlap audit of a filling file.
    Audit {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CalculusCmd {
    /// Checks `I_n(dv) = T_{n+1} v - T_n v` on random vertex sequences.
    CheckTelescoping {
        file: PathBuf,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum KindArg {
    Besov,
    Triebel,
    Hajlasz,
    NonhomBesov,
    NonhomTriebel,
}

impl From<KindArg> for SpaceKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Besov => SpaceKind::Besov,
            KindArg::Triebel => SpaceKind::Triebel,
            KindArg::Hajlasz => SpaceKind::Hajlasz,
            KindArg::NonhomBesov => SpaceKind::NonhomBesov,
            KindArg::NonhomTriebel => SpaceKind::NonhomTriebel,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Indicator,
    Mass,
    Substitute,
}

impl From<VariantArg> for NormVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Indicator => NormVariant::Indicator,
            VariantArg::Mass => NormVariant::Mass,
            VariantArg::Substitute => NormVariant::Substitute,
        }
    }
}

fn parse_real(text: &str) -> Result<f64, String> {
    json::extended::parse(text)
}

fn parse_levels(text: &str) -> Result<(i32, i32), String> {
    let (a, b) = text
        .split_once("..")
        .ok_or_else(|| format!("expected a..b, got {text:?}"))?;
    let lo = a.trim().parse::<i32>().map_err(|e| format!("bad level {a:?}: {e}"))?;
    let hi = b.trim().parse::<i32>().map_err(|e| format!("bad level {b:?}: {e}"))?;
    Ok((lo, hi))
}

#[derive(Args)]
struct SmoothnessArgs {
    #[arg(long)]
    s: f64,
    #[arg(long, value_parser = parse_real)]
    p: f64,
    #[arg(long, value_parser = parse_real, default_value = "2")]
    q: f64,
}

#[derive(Subcommand)]
enum NormCmd {
    /// Evaluate the norm of a sample vector on a filling.
    Eval {
        #[arg(long)]
        filling: PathBuf,
        /// JSON array of samples indexed by point.
        #[arg(long)]
        function: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[command(flatten)]
        smoothness: SmoothnessArgs,
        #[arg(long, value_enum, default_value = "indicator")]
        variant: VariantArg,
        /// Edge levels `a..b` (inclusive); defaults to the whole filling.
        #[arg(long, value_parser = parse_levels, allow_hyphen_values = true)]
        levels: Option<(i32, i32)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Direction {
    Trace,
    Extend,
}

#[derive(Subcommand)]
enum TraceCmd {
    /// Apply `Res` or `Ext` to a sample vector.
    Run {
        /// Space descriptor with a subset.
        #[arg(long)]
        space: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        theorem: u8,
        #[command(flatten)]
        smoothness: SmoothnessArgs,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        nmin: i32,
        #[arg(long)]
        nmax: i32,
        /// JSON array of samples: on all points for `trace`, on the subset
        /// (ascending point order) for `extend`.
        #[arg(long)]
        f: PathBuf,
        #[arg(long, value_enum, default_value = "trace")]
        direction: Direction,
        /// Use the non-homogeneous operators.
        #[arg(long)]
        nonhom: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct VerifyArgs {
    /// Audit name, with or without the `audit_` prefix.
    audit: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the long-format CSV report.
    #[arg(long)]
    csv: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Core(e) => match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Gate => 3,
                ErrorKind::Numerical => 4,
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) => f.write_str(msg),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome<T> = Result<T, Failure>;

fn read_json<T: DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("cannot parse {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Outcome<String> {
    json::to_string(value).map_err(|e| Failure::Usage(format!("serialization failed: {e}")))
}

/// A rendered output waiting to be written once the whole command succeeded.
struct Output {
    path: Option<PathBuf>,
    text: String,
}

fn emit(outputs: Vec<Output>) -> Outcome<()> {
    for out in outputs {
        match out.path {
            Some(path) => {
                fs::write(&path, out.text + "\n")
                    .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
                log::info!("wrote {}", path.display());
            }
            None => println!("{}", out.text),
        }
    }
    Ok(())
}

fn json_output<T: Serialize>(value: &T, path: Option<PathBuf>) -> Outcome<Vec<Output>> {
    Ok(vec![Output {
        path,
        text: to_json(value)?,
    }])
}

fn seed_override() -> Outcome<Option<u64>> {
    match std::env::var(SEED_VAR) {
        Ok(text) => text
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| Failure::Usage(format!("{SEED_VAR}={text:?} is not a seed: {e}"))),
        Err(_) => Ok(None),
    }
}

#[derive(Serialize)]
struct SubsetSummary {
    points: usize,
    lambda: f64,
    gamma: f64,
}

#[derive(Serialize)]
struct SpaceSummary {
    points: usize,
    dim: usize,
    resolution: f64,
    declared_q: f64,
    declared_diam: f64,
    cloud_diameter: f64,
    total_mass: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    subset: Option<SubsetSummary>,
}

#[derive(Serialize)]
struct SpaceReport {
    radii: Vec<f64>,
    ahlfors: AhlforsFit,
    doubling_constant: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    porosity: Option<PorosityScan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    codim: Option<CodimBand>,
}

#[derive(Serialize)]
struct FillingReport {
    ambient: FillingAudit,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<FillingAudit>,
}

#[derive(Serialize)]
struct TelescopingReport {
    #[serde(flatten)]
    audit: TelescopingAudit,
    partition_sum_error: f64,
}

#[derive(Serialize)]
struct NormReport {
    value: f64,
    window: LevelWindow,
    variant: NormVariant,
}

/// Dyadic fractions of the diameter down to the audit floor `4 resolution`.
fn audit_radii(space: &FiniteMetricMeasureSpace) -> Vec<f64> {
    let floor = 4.0 * space.resolution();
    (1..)
        .map(|k| space.declared_diam() * 0.5f64.powi(k))
        .take_while(|&r| r >= floor)
        .collect()
}

fn space_cmd(cmd: SpaceCmd) -> Outcome<Vec<Output>> {
    match cmd {
        SpaceCmd::Build { file, out } => {
            let desc: SpaceDescriptor = read_json(&file)?;
            let (space, mask) = desc.build()?;
            let summary = SpaceSummary {
                points: space.len(),
                dim: space.dim(),
                resolution: space.resolution(),
                declared_q: space.declared_q(),
                declared_diam: space.declared_diam(),
                cloud_diameter: space.cloud_diameter(),
                total_mass: space.total_mass(),
                subset: mask.map(|m| SubsetSummary {
                    points: m.count(),
                    lambda: m.lambda(),
                    gamma: m.gamma(&space),
                }),
            };
            json_output(&summary, out)
        }
        SpaceCmd::Audit { file, report } => {
            let desc: SpaceDescriptor = read_json(&file)?;
            let (space, mask) = desc.build()?;
            let radii = audit_radii(&space);
            if radii.len() < 2 {
                return Err(Failure::Usage(
                    "the space is too coarse for a scaling audit (fewer than two radii above 4 resolution)".into(),
                ));
            }
            let (porosity, codim) = match &mask {
                Some(m) => (
                    Some(porosity_scan(&space, m, &default_porosity_grid())?),
                    Some(codim_regularity_check(&space, m, m.gamma(&space), &radii)?),
                ),
                None => (None, None),
            };
            let r = SpaceReport {
                ahlfors: ahlfors_fit(&space, &radii)?,
                doubling_constant: doubling_constant(&space, &radii)?,
                radii,
                porosity,
                codim,
            };
            json_output(&r, report)
        }
    }
}

fn filling_cmd(cmd: FillingCmd) -> Outcome<Vec<Output>> {
    match cmd {
        FillingCmd::Build {
            space,
            nmin,
            nmax,
            subset,
            out,
        } => {
            let desc: SpaceDescriptor = read_json(&space)?;
            let (z, mask) = desc.build()?;
            let file = if subset {
                let mask = mask.ok_or_else(|| {
                    Failure::Usage("--subset needs a space descriptor with a subset".into())
                })?;
                FillingFile::from_nested(desc, &build_nested_filling(&z, &mask, nmin, nmax)?)
            } else {
                FillingFile::from_plain(desc, &build_filling(&z, nmin, nmax)?)
            };
            json_output(&file, out)
        }
        FillingCmd::Audit { file, out } => {
            let loaded = read_json::<FillingFile>(&file)?.load()?;
            let r = match &loaded {
                LoadedFilling::Plain(f) => FillingReport {
                    ambient: audit_filling(f),
                    trace: None,
                },
                LoadedFilling::Nested(n) => FillingReport {
                    ambient: audit_filling(n.ambient()),
                    trace: Some(audit_filling(n.trace())),
                },
            };
            json_output(&r, out)
        }
    }
}

fn calculus_cmd(cmd: CalculusCmd) -> Outcome<Vec<Output>> {
    match cmd {
        CalculusCmd::CheckTelescoping {
            file,
            trials,
            seed,
            out,
        } => {
            let loaded = read_json::<FillingFile>(&file)?.load()?;
            let filling = loaded.ambient();
            let seed = seed_override()?.unwrap_or(seed);
            let r = TelescopingReport {
                audit: telescoping_audit(filling, trials, seed)?,
                partition_sum_error: partition_sum_error(filling)?,
            };
            json_output(&r, out)
        }
    }
}

fn read_samples(path: &Path, expected: usize, what: &str) -> Outcome<Vec<f64>> {
    let samples: Vec<f64> = read_json(path)?;
    if samples.len() != expected {
        return Err(Failure::Usage(format!(
            "{} holds {} samples, {what} has {expected} points",
            path.display(),
            samples.len()
        )));
    }
    Ok(samples)
}

fn norm_cmd(cmd: NormCmd) -> Outcome<Vec<Output>> {
    let NormCmd::Eval {
        filling,
        function,
        kind,
        smoothness,
        variant,
        levels,
        out,
    } = cmd;
    let loaded = read_json::<FillingFile>(&filling)?.load()?;
    let ambient = loaded.ambient();
    let f = read_samples(&function, ambient.space().len(), "the space")?;
    let kind = SpaceKind::from(kind);
    let params = SmoothnessParams::new(smoothness.s, smoothness.p, smoothness.q, kind)?;
    let window = levels.map_or_else(|| LevelWindow::full(ambient), |(lo, hi)| LevelWindow::new(lo, hi));
    let variant = NormVariant::from(variant);
    let value = match kind {
        SpaceKind::Besov | SpaceKind::Triebel => fn_norm(ambient, &f, &params, variant, window)?,
        SpaceKind::NonhomBesov | SpaceKind::NonhomTriebel => {
            nonhom_norm(ambient, &f, &params, variant, window)?
        }
        SpaceKind::Hajlasz => hajlasz_norm(ambient.space(), &f, params.s, params.p)?.value,
    };
    json_output(
        &NormReport {
            value,
            window,
            variant,
        },
        out,
    )
}

fn trace_cmd(cmd: TraceCmd) -> Outcome<Vec<Output>> {
    let TraceCmd::Run {
        space,
        theorem,
        smoothness,
        nmin,
        nmax,
        f,
        direction,
        nonhom,
        out,
    } = cmd;
    let desc: SpaceDescriptor = read_json(&space)?;
    let (z, mask) = desc.build()?;
    let mask = mask.ok_or_else(|| Failure::Usage("trace run needs a space descriptor with a subset".into()))?;
    let kind = match (theorem, nonhom) {
        (1, false) => SpaceKind::Besov,
        (2, false) => SpaceKind::Triebel,
        (1, true) => SpaceKind::NonhomBesov,
        (2, true) => SpaceKind::NonhomTriebel,
        (3, false) => SpaceKind::Hajlasz,
        _ => return Err(Failure::Usage("theorem 3 has no non-homogeneous form".into())),
    };
    let (s, p, q) = (smoothness.s, smoothness.p, smoothness.q);
    let nested = build_nested_filling(&z, &mask, nmin, nmax)?;
    match direction {
        Direction::Trace => {
            let samples = read_samples(&f, z.len(), "the space")?;
            let params = SmoothnessParams::new(s, p, q, kind)?;
            let r = match kind {
                SpaceKind::Besov => trace_besov(&nested, &samples, &params)?,
                SpaceKind::Triebel => trace_triebel(&nested, &samples, &params)?,
                SpaceKind::NonhomBesov | SpaceKind::NonhomTriebel => {
                    nonhom_trace(&nested, &samples, &params)?
                }
                SpaceKind::Hajlasz => {
                    return Err(Failure::Usage(
                        "theorem 3 is available in the extend direction only".into(),
                    ))
                }
            };
            json_output(&r, out)
        }
        Direction::Extend => {
            let samples = read_samples(&f, mask.count(), "the subset")?;
            let r = match kind {
                SpaceKind::Hajlasz => extend_sobolev(&nested, &samples, p)?,
                _ => {
                    let params = SmoothnessParams::new(s, p, q, kind)?;
                    match kind {
                        SpaceKind::Besov => extend_besov(&nested, &samples, &params)?,
                        SpaceKind::Triebel => extend_triebel(&nested, &samples, &params)?,
                        _ => nonhom_extend(&nested, &samples, &params)?,
                    }
                }
            };
            json_output(&r, out)
        }
    }
}

fn verify_cmd(args: VerifyArgs) -> Outcome<Vec<Output>> {
    let audit: AuditName = args.audit.parse()?;
    let mut config: ExperimentConfig = read_json(&args.config)?;
    if let Some(seed) = seed_override()? {
        config.seed = seed;
    }
    let report = run_audit(audit, &config)?;
    let mut outputs = json_output(&report, args.out)?;
    if let Some(path) = args.csv {
        outputs.push(Output {
            path: Some(path),
            text: report.to_csv()?.trim_end().to_string(),
        });
    }
    Ok(outputs)
}

fn run(cli: Cli) -> Outcome<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot start {n} threads: {e}")))?;
    }
    let outputs = match cli.command {
        Command::Space(c) => space_cmd(c)?,
        Command::Filling(c) => filling_cmd(c)?,
        Command::Calculus(c) => calculus_cmd(c)?,
        Command::Norm(c) => norm_cmd(c)?,
        Command::Trace(c) => trace_cmd(c)?,
        Command::Verify(a) => verify_cmd(a)?,
    };
    emit(outputs)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hyperfill: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
