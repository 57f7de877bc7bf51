mod commands;
mod inputs;
mod json;

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use entroscope::Error;
use json::Json;

#[derive(Parser, Debug)]
#[command(name = "entroscope", version, about = "Entropy, log-Sobolev and spectral-gap constants of block dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
enum Command {
    /// Spectral gap λ.
    Gap(ConstantArgs),
    /// Entropy constant κ.
    Kappa(ConstantArgs),
    /// Log-Sobolev constant β.
    Lsi(ConstantArgs),
    /// Modified log-Sobolev constant ρ.
    Mlsi(ConstantArgs),
    /// Check a closed-form value against the computed constant.
    Verify(VerifyArgs),
    /// Compare N-particle synchronous constants with N = 1.
    Tensorize(TensorizeArgs),
    /// Probe reports for open conjectures.
    Conjecture(ConjectureArgs),
    /// Electric network reduction of one node.
    Reduce(ReduceArgs),
    /// Permanent bound by row norms.
    Permanent(PermanentArgs),
    /// Entropy decay along the semigroup.
    Decay(DecayArgs),
    /// Full regression sweep.
    Report(ReportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gap(_) => "gap",
            Command::Kappa(_) => "kappa",
            Command::Lsi(_) => "lsi",
            Command::Mlsi(_) => "mlsi",
            Command::Verify(_) => "verify",
            Command::Tensorize(_) => "tensorize",
            Command::Conjecture(_) => "conjecture",
            Command::Reduce(_) => "reduce",
            Command::Permanent(_) => "permanent",
            Command::Decay(_) => "decay",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Graph JSON file or preset (k4, star4, path5, cycle6).
    #[arg(long)]
    pub graph: Option<String>,
    /// Hypergraph JSON file; graph and mean-field files are also accepted.
    #[arg(long)]
    pub hypergraph: Option<String>,
    /// Mean-field weights such as "2:1.0,3:0.5" (needs --n).
    #[arg(long, requires = "n")]
    pub mean_field: Option<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct OptArgs {
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 32)]
    pub restarts: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct ConstantArgs {
    #[command(flatten)]
    pub source: Source,
    /// Number of vertices for --mean-field.
    #[arg(long)]
    pub n: Option<usize>,
    /// single, product:N, perm or slice:R.
    #[arg(long, default_value = "single")]
    pub space: String,
    #[command(flatten)]
    pub opt: OptArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    /// Closed form name, e.g. kappa-mf-perm.
    pub name: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, conflicts_with = "w")]
    pub ell: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    /// Mean-field weights "ell:w,...".
    #[arg(long)]
    pub w: Option<String>,
    /// Multislice color counts "2,1,1".
    #[arg(long)]
    pub colors: Option<String>,
    /// Pass tolerance on the relative error.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 32)]
    pub restarts: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct TensorizeArgs {
    #[arg(long)]
    pub hypergraph: String,
    #[arg(long = "max-N", default_value_t = 3)]
    pub max_n: usize,
    /// Largest product space on which κ is optimized.
    #[arg(long, default_value_t = 64)]
    pub kappa_max_states: usize,
    #[command(flatten)]
    pub opt: OptArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct ConjectureArgs {
    #[command(subcommand)]
    pub probe: Probe,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "probe", rename_all = "kebab-case")]
pub enum Probe {
    /// λ of the shuffle against λ of the graph.
    Gap {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Octopus comparison at one node.
    Octopus {
        #[arg(long)]
        graph: String,
        #[arg(long, default_value_t = 0)]
        node: usize,
        #[arg(long, value_enum, default_value_t = Mode::Entropy)]
        mode: Mode,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 5)]
        max_n: usize,
        #[command(flatten)]
        opt: OptArgs,
    },
    /// κ/λ on paths and cycles.
    CyclePath {
        #[arg(long, default_value_t = 5)]
        n_max: usize,
        #[command(flatten)]
        opt: OptArgs,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Variance,
    Entropy,
}

#[derive(Args, Debug, Serialize)]
pub struct ReduceArgs {
    #[arg(long)]
    pub graph: String,
    #[arg(long)]
    pub node: usize,
    /// Also compute constants before and after.
    #[arg(long)]
    pub report: bool,
    #[command(flatten)]
    pub opt: OptArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct PermanentArgs {
    /// CSV/JSON file or preset (id3, ones4).
    #[arg(long, required_unless_present = "fuzz")]
    pub matrix: Option<String>,
    /// Norm exponent, or "critical".
    #[arg(long, default_value = "critical")]
    pub p: String,
    /// Random matrices to fuzz the bound on.
    #[arg(long)]
    pub fuzz: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub fuzz_max_n: usize,
    /// Also check the correlation inequality on the matrix rows.
    #[arg(long)]
    pub correlation: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    Dirac,
    Random,
}

#[derive(Args, Debug, Serialize)]
pub struct DecayArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value = "perm")]
    pub space: String,
    /// "auto" or a number.
    #[arg(long, default_value = "auto")]
    pub kappa: String,
    /// First positive time; defaults to 0.01/λ.
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long, default_value_t = 16)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = Start::Random)]
    pub f0: Start,
    /// Constant in the Pinsker mixing bound.
    #[arg(long, default_value_t = 1.0)]
    pub mixing_constant: f64,
    #[command(flatten)]
    pub opt: OptArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct ReportArgs {
    #[arg(value_parser = ["all"])]
    pub which: String,
    #[arg(long, default_value_t = 5)]
    pub n_max: usize,
    #[command(flatten)]
    pub opt: OptArgs,
}

/// What a command hands back to the report writer.
pub struct Outcome {
    pub results: Json,
    pub passed: bool,
    pub seed: Option<u64>,
}

fn error_line(kind: &str, message: &str, command: Option<&str>) -> String {
    let mut fields = vec![(
        "error".to_string(),
        Json::Object(vec![
            ("kind".into(), Json::Str(kind.into())),
            ("message".into(), Json::Str(message.trim().into())),
        ]),
    )];
    if let Some(c) = command {
        fields.push(("command".into(), Json::Str(c.into())));
    }
    Json::Object(fields).render(None)
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Size { .. } => "size",
        Error::Domain(_) => "domain",
        Error::Input(_) => "input",
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("ENTROSCOPE_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("ENTROSCOPE_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let message = e.render().to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ");
            println!("{}", error_line("usage", first, None));
            return ExitCode::from(2);
        }
    };
    let name = cli.command.name();
    if let Err(msg) = configure_threads() {
        println!("{}", error_line("input", &msg, Some(name)));
        return ExitCode::from(2);
    }

    let start = Instant::now();
    let outcome = match commands::run(&cli.command) {
        Ok(o) => o,
        Err(e) => {
            println!("{}", error_line(error_kind(&e), &e.to_string(), Some(name)));
            return ExitCode::from(2);
        }
    };
    let report = Json::Object(vec![
        ("command".into(), Json::Str(name.into())),
        ("inputs".into(), json::to_json(&cli.command)),
        ("results".into(), outcome.results),
        ("passed".into(), Json::Bool(outcome.passed)),
        ("wall_time_ms".into(), Json::Int(start.elapsed().as_millis() as i128)),
        ("tool_version".into(), Json::Str(env!("CARGO_PKG_VERSION").into())),
        ("seed".into(), outcome.seed.map_or(Json::Null, |s| Json::Int(s as i128))),
    ]);
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", report.render(Some(2)));
    if outcome.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
