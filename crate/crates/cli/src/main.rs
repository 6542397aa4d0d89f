use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flexibit_core::bitpack::{self, PaddedStream};
use flexibit_core::codec::FormatSpec;
use flexibit_core::pe::Fault;
use flexibit_core::sweep::{self, DataflowPolicy, RunManifest};
use flexibit_core::validate::{self, Scope, ValidateOptions};
use flexibit_core::Error;

/// Functional and cost simulator for a flexible-precision bit-parallel accelerator.
#[derive(Parser)]
#[command(name = "flexibit", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the PE datapath against the reference arithmetic.
    Validate(ValidateArgs),
    /// Simulate a sweep and write run.csv.
    Run(SweepArgs),
    /// Pack a padded tensor file into FXBP, or unpack one.
    Pack(PackArgs),
    /// Compare packed and padded storage and write ablation.csv.
    Ablate(SweepArgs),
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value = "all")]
    scope: Scope,
    /// Widest operand format swept.
    #[arg(long, default_value_t = 12)]
    max_bits: u32,
    /// Operands up to this width are swept exhaustively, wider ones sampled.
    #[arg(long, default_value_t = 8)]
    exhaustive_bits: u32,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Break one datapath stage on purpose to exercise the checker.
    #[arg(long, default_value = "none")]
    inject_fault: Fault,
}

/// Flags override the manifest field of the same name.
#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Preset name or TOML path; repeatable.
    #[arg(long = "machine")]
    machines: Vec<String>,
    /// Preset name or TOML path; repeatable.
    #[arg(long = "model")]
    models: Vec<String>,
    /// Activation and weight formats as `A:W`, e.g. `e2m3:int4`; repeatable.
    #[arg(long = "pair", value_parser = parse_pair)]
    pairs: Vec<(FormatSpec, FormatSpec)>,
    #[arg(long)]
    dataflow: Option<DataflowPolicy>,
    #[arg(long)]
    energy_table: Option<PathBuf>,
    #[arg(long, env = "FLEXIBIT_OUT_DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the TensorCoreLike and BitFusionLike rows.
    #[arg(long)]
    no_baselines: bool,
}

#[derive(Args)]
struct PackArgs {
    input: PathBuf,
    output: PathBuf,
    /// Element format; required when packing.
    #[arg(long)]
    fmt: Option<FormatSpec>,
    /// Width of each padded host container in bits.
    #[arg(long, default_value_t = 8)]
    container: u32,
    #[arg(long, default_value_t = 0)]
    start_bit: usize,
    /// Turn an FXBP file back into padded containers.
    #[arg(long)]
    unpack: bool,
}

fn parse_pair(s: &str) -> Result<(FormatSpec, FormatSpec), Error> {
    let (a, w) = s.split_once(':').ok_or_else(|| Error::Config(format!("pair {s:?} is not of the form A:W")))?;
    Ok((a.parse()?, w.parse()?))
}

/// Paths given on the command line are relative to the working directory,
/// not to the manifest.
fn from_cwd(s: &str) -> String {
    let p = Path::new(s);
    if p.exists() && p.is_relative() {
        if let Ok(cwd) = std::env::current_dir() {
            return cwd.join(p).to_string_lossy().into_owned();
        }
    }
    s.to_string()
}

fn manifest(a: &SweepArgs) -> Result<RunManifest, Error> {
    let mut m = match &a.manifest {
        Some(p) => RunManifest::load(p)?,
        None => RunManifest::default(),
    };
    if !a.machines.is_empty() {
        m.machines = a.machines.iter().map(|s| from_cwd(s)).collect();
    }
    if !a.models.is_empty() {
        m.models = a.models.iter().map(|s| from_cwd(s)).collect();
    }
    if !a.pairs.is_empty() {
        m.pairs = a.pairs.clone();
    }
    if let Some(d) = a.dataflow {
        m.dataflow = d;
    }
    if let Some(t) = &a.energy_table {
        m.energy_table = Some(PathBuf::from(from_cwd(&t.to_string_lossy())));
    }
    if let Some(o) = &a.output_dir {
        m.output_dir = o.clone();
    }
    if let Some(s) = a.seed {
        m.seed = s;
    }
    if a.no_baselines {
        m.baselines = false;
    }
    m.validate()?;
    Ok(m)
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), Error> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let f = File::create(&path)?;
    Ok((path, BufWriter::new(f)))
}

fn cmd_validate(a: &ValidateArgs) -> Result<ExitCode, Error> {
    let opts = ValidateOptions {
        scope: a.scope,
        max_bits: a.max_bits,
        exhaustive_bits: a.exhaustive_bits,
        samples: a.samples,
        seed: a.seed,
        fault: a.inject_fault,
        ..ValidateOptions::default()
    };
    let report = validate::run(&opts)?;
    println!("{report}");
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_run(a: &SweepArgs) -> Result<ExitCode, Error> {
    let m = manifest(a)?;
    let rows = sweep::run(&m)?;
    let (path, out) = create(&m.output_dir, "run.csv")?;
    sweep::write_run_csv(&rows, out)?;
    print!("{}", sweep::summary(&rows));
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_ablate(a: &SweepArgs) -> Result<ExitCode, Error> {
    let m = manifest(a)?;
    let rows = sweep::ablate(&m)?;
    let (path, out) = create(&m.output_dir, "ablation.csv")?;
    sweep::write_ablation_csv(&rows, out)?;
    let bound: Vec<f64> = rows.iter().filter(|r| r.memory_bound).map(|r| r.improvement()).collect();
    if !bound.is_empty() {
        let mean = bound.iter().sum::<f64>() / bound.len() as f64;
        println!("packing cuts latency by {:.1}% on average over {} memory-bound layers", 100.0 * mean, bound.len());
    }
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_pack(a: &PackArgs) -> Result<ExitCode, Error> {
    let input = std::fs::read(&a.input)?;
    if a.unpack {
        let buf = bitpack::decode_fxbp(&input)?;
        let stream = bitpack::unpack(&buf, a.container)?;
        std::fs::write(&a.output, stream.to_bytes()?)?;
        println!("unpacked {} {} elements into {}-bit containers", stream.len(), buf.fmt, a.container);
    } else {
        let fmt = a.fmt.ok_or_else(|| Error::Config("--fmt is required when packing".into()))?;
        let stream = PaddedStream::from_bytes(&input, a.container, fmt)?;
        let buf = bitpack::pack(&stream, a.start_bit)?;
        let bytes = bitpack::encode_fxbp(&buf)?;
        std::fs::write(&a.output, &bytes)?;
        println!("packed {} {fmt} elements: {} bytes -> {} bytes", stream.len(), input.len(), bytes.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Validate(a) => cmd_validate(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Pack(a) => cmd_pack(a),
        Cmd::Ablate(a) => cmd_ablate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
