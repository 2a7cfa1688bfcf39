//! `amalgam`: norms, decompositions, certificates and corpora from the shell.
//!
//! Exit codes: 0 when every certificate passes, 1 on a certificate failure,
//! 2 on malformed input or invalid arguments.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amalgam::atomic::{decompose, AtomDefinition, AtomFlavor, DEFAULT_ETA_GRID};
use amalgam::duality::{certify_duality, SearchMode};
use amalgam::harness::generate::{generate, BlockPolicy, CorpusSpec, Generator};
use amalgam::harness::io::{
    from_json_str, to_canonical_string, CorpusDoc, DecompositionDoc, MartingaleDoc, RandomVariableDoc,
};
use amalgam::harness::{explore_embeddings, run_selftest, verify};
use amalgam::norms::HardyNorms;
use amalgam::space::DEFAULT_ENUMERATION_CAP;
use amalgam::Error;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "amalgam", version, about = "Martingale Hardy-amalgam norms, atomic decompositions and duality certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// All five norms of a martingale.
    Norms {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_real)]
        p: f64,
        #[arg(long, value_parser = parse_real)]
        q: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Threshold-ladder decomposition of a martingale.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        flavor: FlavorArg,
        #[arg(long, value_enum, default_value = "simple")]
        defn: DefnArg,
        #[arg(long, value_parser = parse_real)]
        p: f64,
        #[arg(long, value_parser = parse_real)]
        q: f64,
        /// Comma-separated η values recorded for `verify`.
        #[arg(long, value_delimiter = ',', value_parser = parse_real)]
        eta_grid: Option<Vec<f64>>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Checks a decomposition against its martingale.
    Verify {
        #[arg(long)]
        martingale: PathBuf,
        #[arg(long)]
        decomposition: PathBuf,
        /// Size exponents; inadmissible values are skipped.
        #[arg(long, value_delimiter = ',', value_parser = parse_real, default_value = "2,4,inf")]
        r: Vec<f64>,
        /// Overrides the grid stored in the decomposition.
        #[arg(long, value_delimiter = ',', value_parser = parse_real)]
        eta_grid: Option<Vec<f64>>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Campanato norm and the duality chain certificate.
    Duality {
        #[arg(long)]
        martingale: PathBuf,
        /// Random variable document holding the mean-zero `g`.
        #[arg(long)]
        g: PathBuf,
        #[arg(long, value_parser = parse_real)]
        p: f64,
        #[arg(long, value_parser = parse_real)]
        q: f64,
        #[arg(long, value_enum, default_value = "heuristic")]
        mode: ModeArg,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Ratio table between the five norms over a corpus, as CSV.
    Explore {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_real)]
        p: f64,
        #[arg(long, value_parser = parse_real)]
        q: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Emits a seeded corpus.
    Gen {
        #[arg(long, value_enum, default_value = "dyadic")]
        generator: GeneratorArg,
        /// Tree depth, or walk length for `coin-walk`.
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, default_value_t = 3)]
        max_branching: usize,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `single`, `level-cells:N` or `random-partition:J`.
        #[arg(long, default_value = "single", value_parser = parse_blocks)]
        blocks: BlockPolicy,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Runs the end-to-end property suite.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FlavorArg {
    #[value(name = "s")]
    Conditional,
    #[value(name = "S")]
    Square,
    #[value(name = "star")]
    Maximal,
}

impl From<FlavorArg> for AtomFlavor {
    fn from(f: FlavorArg) -> Self {
        match f {
            FlavorArg::Conditional => AtomFlavor::Conditional,
            FlavorArg::Square => AtomFlavor::Square,
            FlavorArg::Maximal => AtomFlavor::Maximal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DefnArg {
    Simple,
    Weighted,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Heuristic,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Dyadic,
    RandomTree,
    CoinWalk,
}

fn parse_real(s: &str) -> Result<f64, String> {
    match s.trim() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        t => t.parse::<f64>().map_err(|e| format!("{t:?}: {e}")),
    }
}

fn parse_blocks(s: &str) -> Result<BlockPolicy, String> {
    let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
    let number = || arg.parse::<usize>().map_err(|e| format!("{s:?}: {e}"));
    match kind {
        "single" => Ok(BlockPolicy::Single),
        "level-cells" => Ok(BlockPolicy::LevelCells { level: number()? }),
        "random-partition" => Ok(BlockPolicy::RandomPartition { count: number()? }),
        _ => Err(format!("unknown block policy {s:?}")),
    }
}

/// Input and argument problems; mapped to exit code 2.
struct InputError(String);

impl From<Error> for InputError {
    fn from(e: Error) -> Self {
        InputError(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, InputError> {
    fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))
}

fn read_doc<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, InputError> {
    from_json_str(&read(path)?).map_err(|e| InputError(format!("{}: {e}", path.display())))
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), InputError> {
    match output {
        Some(path) => fs::write(path, text).map_err(|e| InputError(format!("{}: {e}", path.display()))),
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(InputError(format!("stdout: {e}"))),
            _ => Ok(()),
        },
    }
}

fn emit_json<T: serde::Serialize>(value: &T, output: Option<&Path>) -> Result<(), InputError> {
    emit(&to_canonical_string(value)?, output)
}

/// `Ok(true)` when every certificate passed.
fn run(command: Command) -> Result<bool, InputError> {
    match command {
        Command::Norms { input, p, q, output } => {
            let f = read_doc::<MartingaleDoc>(&input)?.to_martingale()?;
            let norms = HardyNorms::compute(&f, p, q)?;
            emit_json(&json!({ "p": json_real(p), "q": json_real(q), "norms": norms }), output.as_deref())?;
            Ok(true)
        }
        Command::Decompose {
            input,
            flavor,
            defn,
            p,
            q,
            eta_grid,
            output,
        } => {
            let f = read_doc::<MartingaleDoc>(&input)?.to_martingale()?;
            let defn = match defn {
                DefnArg::Simple => AtomDefinition::Simple,
                DefnArg::Weighted => AtomDefinition::Weighted,
            };
            let d = decompose(&f, p, q, flavor.into(), defn)?;
            emit_json(&DecompositionDoc::from_decomposition(&d, eta_grid), output.as_deref())?;
            Ok(true)
        }
        Command::Verify {
            martingale,
            decomposition,
            r,
            eta_grid,
            output,
        } => {
            let f = read_doc::<MartingaleDoc>(&martingale)?.to_martingale()?;
            let doc = read_doc::<DecompositionDoc>(&decomposition)?;
            let grid = eta_grid.or_else(|| doc.eta_grid.clone()).unwrap_or_else(|| DEFAULT_ETA_GRID.to_vec());
            let d = doc.to_decomposition(&f)?;
            let report = verify(&f, &d, &r, &grid)?;
            emit_json(&report, output.as_deref())?;
            if !report.passed {
                eprintln!(
                    "verification failed: atoms {}, reconstruction residual {:e} (by level {:?}), bounds failing at eta {:?}",
                    if report.atoms_passed { "ok" } else { "FAILED" },
                    report.reconstruction.max_relative_error,
                    report.reconstruction.residual_by_level,
                    report.bounds.failures()
                );
            }
            Ok(report.passed)
        }
        Command::Duality {
            martingale,
            g,
            p,
            q,
            mode,
            cap,
            output,
        } => {
            let f = read_doc::<MartingaleDoc>(&martingale)?.to_martingale()?;
            let g = read_doc::<RandomVariableDoc>(&g)?.to_random_variable()?;
            let mode = match mode {
                ModeArg::Exact => SearchMode::ExactEnumeration,
                ModeArg::Heuristic => SearchMode::HeuristicFamily,
            };
            let cert = certify_duality(&f, &g, p, q, mode, cap)?;
            emit_json(&cert, output.as_deref())?;
            if !cert.passed() {
                eprintln!(
                    "duality chain failed: |pairing| {} / atom-wise {} / budget {}",
                    cert.pairing.abs(),
                    cert.atomwise_bound,
                    cert.budget
                );
            }
            Ok(cert.passed())
        }
        Command::Explore { input, p, q, output } => {
            let corpus = read_doc::<CorpusDoc>(&input)?.to_corpus()?;
            if corpus.is_empty() {
                return Err(InputError("corpus is empty".into()));
            }
            let table = explore_embeddings(&corpus, p, q)?;
            emit(table.to_csv().trim_end(), output.as_deref())?;
            if table.flagged() {
                eprintln!("embedding direction violated at p = q = {p}");
            }
            Ok(!table.flagged())
        }
        Command::Gen {
            generator,
            depth,
            max_branching,
            count,
            seed,
            blocks,
            output,
        } => {
            let generator = match generator {
                GeneratorArg::Dyadic => Generator::Dyadic { depth },
                GeneratorArg::RandomTree => Generator::RandomTree { max_branching, depth },
                GeneratorArg::CoinWalk => Generator::CoinWalk { steps: depth },
            };
            let spec = CorpusSpec::new(generator, count, seed).with_blocks(blocks);
            let corpus = generate(&spec)?;
            emit_json(&CorpusDoc::new(Some(spec), &corpus), output.as_deref())?;
            Ok(true)
        }
        Command::Selftest { seed, output } => {
            let report = run_selftest(seed)?;
            emit_json(&report, output.as_deref())?;
            for c in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("selftest check {} failed in {} of {} cases", c.name, c.failures, c.cases);
            }
            Ok(report.passed())
        }
    }
}

fn json_real(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!("inf")
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(InputError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
