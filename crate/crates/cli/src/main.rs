//! `seedlm` command-line tool.
//!
//! Machine-readable results go to stdout, progress and diagnostics to stderr.

mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_rational::Ratio;
use seedlm::codec::SearchOptions;
use seedlm::explorer::{self, SearchLimits};
use seedlm::{
    compress_tensor, decompress_tensor, read_plain_tensor, BlockConfig, Budget,
    CompressOptions, Container, CycleCache, LfsrSpec, PseudoInverseCache,
    ReconstructionStats, Shape,
};

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_SHAPE: u8 = 4;
pub const EXIT_CONFIG: u8 = 5;
pub const EXIT_NON_FINITE: u8 = 6;
pub const EXIT_FORMAT: u8 = 7;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }

    pub fn io(path: &Path, err: io::Error) -> Self {
        Self::new(EXIT_IO, format!("{}: {err}", path.display()))
    }

    fn context(self, ctx: impl std::fmt::Display) -> Self {
        Self {
            code: self.code,
            message: format!("{ctx}: {}", self.message),
        }
    }
}

impl From<seedlm::Error> for CliError {
    fn from(err: seedlm::Error) -> Self {
        use seedlm::Error as E;
        let code = match &err {
            E::Io(_) => EXIT_IO,
            E::FileSize { .. } | E::ShapeMismatch { .. } | E::InvalidShape(_) | E::EmptyTensor => {
                EXIT_SHAPE
            }
            E::InvalidConfig(_)
            | E::UnsupportedLength(_)
            | E::NotMaximalLength { .. }
            | E::InvalidSeed { .. }
            | E::SeedNotCached { .. }
            | E::BlockLength { .. } => EXIT_CONFIG,
            E::NonFinite { .. } => EXIT_NON_FINITE,
            E::BadMagic
            | E::UnsupportedVersion(_)
            | E::Truncated { .. }
            | E::PayloadSize { .. }
            | E::ZeroSeed { .. }
            | E::NonZeroPadding { .. }
            | E::InvalidName
            | E::TrailingBytes(_)
            | E::CorruptBlock { .. } => EXIT_FORMAT,
        };
        Self::new(code, err.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "seedlm", version, about = "Compress f32 weight tensors into LFSR seeds and 4-bit coefficients")]
struct Cli {
    /// Suppress progress output on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compress raw little-endian f32 tensors into an SDLM1 container.
    Compress(CompressArgs),
    /// Expand an SDLM1 container back into raw f32 tensors.
    Decompress(DecompressArgs),
    /// Compare original tensors with a compressed container.
    Stats(StatsArgs),
    /// Grid-search block geometries for a bit budget.
    Search(SearchArgs),
    /// Print an LFSR cycle and the matrices generated from a seed.
    LfsrDump(DumpArgs),
}

#[derive(Args, Debug)]
struct TensorSource {
    /// Raw f32 tensor file (use with --shape).
    #[arg(required_unless_present = "manifest", conflicts_with = "manifest")]
    input: Option<PathBuf>,

    /// Shape of INPUT, e.g. 64x128.
    #[arg(long, requires = "input")]
    shape: Option<Shape>,

    /// Tensor name stored in the container; defaults to the file stem.
    #[arg(long, requires = "input")]
    name: Option<String>,

    /// Manifest listing `name shape path` per line.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompressArgs {
    #[command(flatten)]
    source: TensorSource,

    /// Bits per element preset: 3 (C=12,P=4,K=16) or 4 (C=8,P=3,K=16).
    #[arg(long, value_parser = ["3", "4"], conflicts_with = "config")]
    bits: Option<String>,

    /// Explicit geometry C,P,K or C,P,K,M (M may be a fraction such as 31/8).
    #[arg(long)]
    config: Option<String>,

    /// Output container path.
    #[arg(long, short)]
    output: PathBuf,

    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,

    /// Search only seeds 1, 1+N, 1+2N, ... (default 1: every seed).
    #[arg(long, default_value_t = 1)]
    seed_stride: u32,
}

#[derive(Args, Debug)]
struct DecompressArgs {
    /// SDLM1 container.
    input: PathBuf,

    /// Output file (single tensor) or directory (several tensors).
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// SDLM1 container.
    #[arg(long)]
    compressed: PathBuf,

    /// Original raw f32 tensor (single-tensor containers).
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    original: Option<PathBuf>,

    /// Expected shape of --original; defaults to the stored shape.
    #[arg(long, requires = "original")]
    shape: Option<Shape>,

    /// Manifest of original tensors, matched by name.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SearchArgs {
    /// Bits per element, integer or fraction.
    #[arg(long, default_value = "4")]
    bits: String,

    #[arg(long, default_value_t = 12)]
    max_c: usize,

    #[arg(long, default_value_t = 16)]
    max_k: u32,

    /// Gaussian blocks per configuration.
    #[arg(long, default_value_t = explorer::DEFAULT_TRIALS)]
    trials: usize,

    #[arg(long, default_value_t = 0)]
    rng_seed: u64,

    /// Write the CSV here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DumpArgs {
    /// Register length (2..=24).
    #[arg(long)]
    k: u32,

    /// Nonzero seed state.
    #[arg(long)]
    seed: u32,

    #[arg(long, default_value_t = 4)]
    rows: usize,

    #[arg(long, default_value_t = 2)]
    cols: usize,

    /// Print at most this many cycle states.
    #[arg(long, default_value_t = 64)]
    cycle_limit: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let progress = Progress { quiet: cli.quiet };
    let result = match cli.command {
        Command::Compress(args) => cmd_compress(args, progress),
        Command::Decompress(args) => cmd_decompress(args, progress),
        Command::Stats(args) => cmd_stats(args),
        Command::Search(args) => cmd_search(args, progress),
        Command::LfsrDump(args) => cmd_lfsr_dump(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

#[derive(Clone, Copy)]
struct Progress {
    quiet: bool,
}

impl Progress {
    fn say(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

/// Writes to a sibling temp file and renames, so a failed run leaves no
/// partial artifact behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn print_stdout(text: &str) -> CliResult {
    io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| CliError::new(EXIT_IO, format!("stdout: {e}")))
}

fn parse_config(spec: &str) -> CliResult<BlockConfig> {
    let invalid = |msg: String| CliError::new(EXIT_CONFIG, format!("--config {spec}: {msg}"));
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if !(3..=4).contains(&parts.len()) {
        return Err(invalid("expected C,P,K or C,P,K,M".into()));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|_| invalid(format!("'{s}' is not an integer")));
    let (c, p, k) = (int(parts[0])?, int(parts[1])?, int(parts[2])?);
    let k = u32::try_from(k).map_err(|_| invalid("K too large".into()))?;
    match parts.get(3) {
        Some(m) => {
            let m = Budget::from_str(m).map_err(|_| invalid(format!("'{m}' is not a bit budget")))?;
            BlockConfig::with_budget(c, p, k, m).map_err(|e| invalid(e.to_string()))
        }
        None => {
            let config = BlockConfig::new(c, p, k).map_err(|e| invalid(e.to_string()))?;
            let m = config.bits_per_element();
            if m != Ratio::from_integer(3) && m != Ratio::from_integer(4) {
                return Err(invalid(format!(
                    "K+4+4P = {} bits over C = {c} gives M = {m}, not 3 or 4; append ,{m} to accept it",
                    config.block_bits()
                )));
            }
            Ok(config)
        }
    }
}

struct Loaded {
    name: String,
    shape: Shape,
    data: Vec<f32>,
}

fn load_tensors(source: &TensorSource) -> CliResult<Vec<Loaded>> {
    if let Some(manifest) = &source.manifest {
        return manifest::read(manifest)?
            .into_iter()
            .map(|e| {
                let data = read_plain_tensor(&e.path, &e.shape)
                    .map_err(|err| CliError::from(err).context(&e.name))?;
                Ok(Loaded {
                    name: e.name,
                    shape: e.shape,
                    data,
                })
            })
            .collect();
    }
    let input = source.input.as_ref().ok_or_else(|| CliError::usage("no input given"))?;
    let shape = source
        .shape
        .clone()
        .ok_or_else(|| CliError::usage("--shape is required with a raw input file"))?;
    let name = source.name.clone().unwrap_or_else(|| {
        input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "tensor".into())
    });
    let data = read_plain_tensor(input, &shape)?;
    Ok(vec![Loaded { name, shape, data }])
}

fn cmd_compress(args: CompressArgs, progress: Progress) -> CliResult {
    let config = match (&args.bits, &args.config) {
        (_, Some(spec)) => parse_config(spec)?,
        (Some(bits), None) => BlockConfig::preset(bits.parse().unwrap_or(0))?,
        (None, None) => BlockConfig::M4,
    };
    if args.seed_stride == 0 {
        return Err(CliError::usage("--seed-stride must be positive"));
    }
    if args.threads == Some(0) {
        return Err(CliError::usage("--threads must be positive"));
    }
    let tensors = load_tensors(&args.source)?;

    let started = Instant::now();
    let cycle = CycleCache::for_length(config.seed_bits())?;
    let cache = if args.seed_stride == 1 {
        PseudoInverseCache::build(config, &cycle)?
    } else {
        let seeds: Vec<u32> = (1..=cycle.spec().period())
            .step_by(args.seed_stride as usize)
            .collect();
        PseudoInverseCache::build_for(config, &cycle, &seeds)?
    };
    progress.say(format!(
        "{config}: {} candidate seeds, operators ready in {:.2?}",
        cache.len(),
        started.elapsed()
    ));

    let options = CompressOptions {
        search: SearchOptions::default(),
        threads: args.threads,
    };
    let mut container = Container::new(config);
    let mut report = String::from("name\tshape\telements\tmse\trel_err\tbits_per_element\tseconds\n");
    for t in tensors {
        let started = Instant::now();
        let (ct, stats) = compress_tensor(&t.data, &t.shape, &cache, &options)
            .map_err(|e| CliError::from(e).context(&t.name))?;
        let secs = started.elapsed().as_secs_f64();
        let bpe = ct.payload_bits() as f64 / ct.element_count() as f64;
        let _ = writeln!(
            report,
            "{}\t{}\t{}\t{:.9e}\t{:.9e}\t{bpe:.4}\t{secs:.3}",
            t.name,
            t.shape,
            t.data.len(),
            stats.mse,
            stats.relative_error
        );
        progress.say(format!("compressed {} ({}) in {secs:.2}s", t.name, t.shape));
        container.push(t.name, ct)?;
    }
    write_atomic(&args.output, &container.encode())?;
    print_stdout(&report)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c == '/' || c == '\\' || c == '\0' { '_' } else { c })
        .collect()
}

fn cmd_decompress(args: DecompressArgs, progress: Progress) -> CliResult {
    let container = read_container(&args.input)?;
    let cycle = CycleCache::for_length(container.config.seed_bits())?;
    let mut lines = String::from("name\tshape\tpath\n");
    let single = container.tensors.len() == 1;
    if !single {
        fs::create_dir_all(&args.output).map_err(|e| CliError::io(&args.output, e))?;
    }
    let mut entries = Vec::new();
    for entry in &container.tensors {
        let data = decompress_tensor(&entry.tensor, &cycle)
            .map_err(|e| CliError::from(e).context(format!("tensor '{}'", entry.name)))?;
        let path = if single {
            args.output.clone()
        } else {
            args.output.join(format!("{}.bin", sanitize(&entry.name)))
        };
        let mut bytes = Vec::with_capacity(data.len() * 4);
        for x in &data {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        write_atomic(&path, &bytes)?;
        let _ = writeln!(lines, "{}\t{}\t{}", entry.name, entry.tensor.shape, path.display());
        entries.push(manifest::Entry {
            name: entry.name.clone(),
            shape: entry.tensor.shape.clone(),
            path: PathBuf::from(format!("{}.bin", sanitize(&entry.name))),
        });
    }
    if !single {
        let path = args.output.join("manifest.txt");
        write_atomic(&path, manifest::render(&entries).as_bytes())?;
        progress.say(format!("wrote {}", path.display()));
    }
    print_stdout(&lines)
}

fn read_container(path: &Path) -> CliResult<Container> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Container::decode(&bytes).map_err(|e| CliError::from(e).context(path.display()))
}

fn cmd_stats(args: StatsArgs) -> CliResult {
    let container = read_container(&args.compressed)?;
    let file_bytes = fs::metadata(&args.compressed)
        .map_err(|e| CliError::io(&args.compressed, e))?
        .len();
    let cycle = CycleCache::for_length(container.config.seed_bits())?;

    let originals: Vec<(String, PathBuf, Shape)> = match (&args.original, &args.manifest) {
        (Some(path), _) => {
            if container.tensors.len() != 1 {
                return Err(CliError::usage(format!(
                    "container holds {} tensors; use --manifest",
                    container.tensors.len()
                )));
            }
            let stored = &container.tensors[0];
            let shape = args.shape.clone().unwrap_or_else(|| stored.tensor.shape.clone());
            vec![(stored.name.clone(), path.clone(), shape)]
        }
        (None, Some(m)) => manifest::read(m)?
            .into_iter()
            .map(|e| (e.name, e.path, e.shape))
            .collect(),
        (None, None) => return Err(CliError::usage("--original or --manifest is required")),
    };

    let mut out = String::from("name\telements\tmse\trel_err\tmax_abs_err\tsize_ratio\n");
    let (mut sse, mut energy, mut max_abs, mut total_n) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for (name, path, shape) in &originals {
        let entry = container
            .tensors
            .iter()
            .find(|t| &t.name == name)
            .ok_or_else(|| CliError::new(EXIT_SHAPE, format!("tensor '{name}' is not in the container")))?;
        if &entry.tensor.shape != shape {
            return Err(CliError::new(
                EXIT_SHAPE,
                format!("tensor '{name}': original shape {shape} but stored shape {}", entry.tensor.shape),
            ));
        }
        let original = read_plain_tensor(path, shape).map_err(|e| CliError::from(e).context(name))?;
        let decoded = decompress_tensor(&entry.tensor, &cycle)?;
        let s = ReconstructionStats::compare(&original, &decoded)?;
        let n = original.len();
        let entry_bytes = Container::entry_len(&container.config, name, shape);
        let _ = writeln!(
            out,
            "{name}\t{n}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.6}",
            s.mse,
            s.relative_error,
            s.max_abs_error,
            entry_bytes as f64 / (4 * n) as f64
        );
        sse += s.mse * n as f64;
        energy += original.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>();
        max_abs = max_abs.max(s.max_abs_error);
        total_n += n;
    }
    let _ = writeln!(
        out,
        "total\t{total_n}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.6}",
        if total_n > 0 { sse / total_n as f64 } else { 0.0 },
        if energy > 0.0 { sse / energy } else { 0.0 },
        max_abs,
        file_bytes as f64 / (4 * total_n.max(1)) as f64
    );
    print_stdout(&out)
}

fn cmd_search(args: SearchArgs, progress: Progress) -> CliResult {
    let m = Budget::from_str(&args.bits)
        .map_err(|_| CliError::usage(format!("--bits {}: not an integer or fraction", args.bits)))?;
    if *m.numer() == 0 {
        return Err(CliError::new(EXIT_CONFIG, "--bits must be positive"));
    }
    if args.trials == 0 {
        return Err(CliError::usage("--trials must be positive"));
    }
    let limits = SearchLimits {
        max_c: args.max_c,
        max_k: args.max_k,
    };
    let configs = explorer::enumerate_configs(m, limits)?;
    progress.say(format!("{} feasible configurations for M={m}", configs.len()));
    let ranked = explorer::search_with(m, limits, args.trials, args.rng_seed, |p| {
        progress.say(format!(
            "  {}: {:.6} +/- {:.6}",
            p.config, p.mean_relative_error, p.std_error
        ))
    })?;
    progress.say(explorer::format_ranking(&ranked).trim_end());
    let csv = explorer::to_csv(&ranked);
    match &args.output {
        Some(path) => write_atomic(path, csv.as_bytes()),
        None => print_stdout(&csv),
    }
}

fn format_rows<T: std::fmt::Display>(values: &[T], cols: usize) -> String {
    let rows: Vec<String> = values
        .chunks(cols)
        .map(|row| {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            format!("[{}]", cells.join(","))
        })
        .collect();
    format!("[{}]", rows.join(","))
}

fn cmd_lfsr_dump(args: DumpArgs) -> CliResult {
    let spec = LfsrSpec::new(args.k).map_err(|e| CliError::usage(e.to_string()))?;
    spec.check_seed(args.seed)
        .map_err(|e| CliError::usage(format!("--seed: {e}")))?;
    if args.rows == 0 || args.cols == 0 {
        return Err(CliError::usage("--rows and --cols must be positive"));
    }
    let cycle = CycleCache::build(spec)?;
    let order = cycle.cycle_from(args.seed)?;
    let shown: Vec<String> = order.iter().take(args.cycle_limit).map(u32::to_string).collect();
    let taps: Vec<String> = spec.taps().iter().map(u32::to_string).collect();

    let mut out = String::new();
    let _ = writeln!(out, "k={} taps={} period={}", spec.k(), taps.join(","), order.len());
    let _ = write!(out, "cycle: {}", shown.join(" "));
    if order.len() > args.cycle_limit {
        let _ = write!(out, " ... ({} more)", order.len() - args.cycle_limit);
    } else {
        let _ = write!(out, " -> {}", args.seed);
    }
    out.push('\n');
    let raw = cycle.raw_matrix(args.seed, args.rows, args.cols)?;
    let norm: Vec<String> = cycle
        .normalized_matrix(args.seed, args.rows, args.cols)?
        .iter()
        .map(|x| format!("{x:.6}"))
        .collect();
    let _ = writeln!(out, "V({}) {}x{}: {}", args.seed, args.rows, args.cols, format_rows(&raw, args.cols));
    let _ = writeln!(out, "U({}) {}x{}: {}", args.seed, args.rows, args.cols, format_rows(&norm, args.cols));
    print_stdout(&out)
}
