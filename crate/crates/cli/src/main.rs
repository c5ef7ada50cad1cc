//! `spid`: generate snapshot data, compress it with the streaming two-stage
//! ID, and inspect or verify the result.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on numerical or I/O
//! failures (the error name is printed on stderr).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use spid_core::archive::{
    decode, decompress, encode, write_frames, FrameMeta, FrameReader, FrameWriter,
};
use spid_core::blocking::PartitionPlan;
use spid_core::bounds::{sweep, DEFAULT_TAU_GRID};
use spid_core::datagen::{
    gen_exact_rank, gen_locally_low_rank, gen_unstructured_grid, taylor_green_snapshot, Qoi,
    TaylorGreenParams,
};
use spid_core::metrics::quality_report;
use spid_core::pipeline::{run_pipeline, Executor, StreamConfig};
use spid_core::{Error, GridGeom, SubsampleSpec};

#[derive(Parser)]
#[command(
    name = "spid",
    version,
    about = "Interpolative-decomposition compression of snapshot matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate snapshot frames plus a JSON sidecar.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Compress raw frames into an archive with the streaming pipeline.
    Compress(CompressArgs),
    /// Expand an archive back into raw frames.
    Decompress {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print archive metadata as JSON.
    Info {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Compare an archive against the exact frames and print the quality report.
    Metrics {
        #[arg(long)]
        exact: PathBuf,
        /// Sidecar of the exact frames (default: `<exact>.json`).
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long)]
        archive: PathBuf,
    },
    /// Run the seeded error-bound sweep and print the report.
    VerifyBounds {
        #[arg(long, default_value_t = 20)]
        seed_count: u64,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_TAU_GRID.to_vec())]
        tau_grid: Vec<f64>,
    },
}

#[derive(Subcommand)]
enum GenCommand {
    /// Analytic Taylor-Green vortex snapshots.
    TaylorGreen(TaylorGreenArgs),
    /// Seeded exact-rank or block-wise low-rank matrix.
    Synthetic(SyntheticArgs),
}

#[derive(Args)]
struct TaylorGreenArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![20, 20])]
    grid: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value = "u1")]
    qoi: Qoi,
    #[arg(long, default_value_t = 0.1)]
    nu: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Sample at seeded random points instead of the structured grid.
    #[arg(long)]
    unstructured: bool,
    #[arg(long, default_value_t = 0, requires = "unstructured")]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(
        long,
        conflicts_with = "block_ranks",
        required_unless_present = "block_ranks"
    )]
    rank: Option<usize>,
    /// One rank per contiguous row block.
    #[arg(long, value_delimiter = ',')]
    block_ranks: Option<Vec<usize>>,
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct OutputArgs {
    /// Raw frame file to write.
    #[arg(long)]
    out: PathBuf,
    /// Sidecar path (default: `<out>.json`).
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Args)]
struct CompressArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Frame sidecar (default: `<in>.json`).
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Blocks per axis.
    #[arg(long, value_delimiter = ',')]
    blocks: Option<Vec<usize>>,
    /// Snapshots per temporal chunk.
    #[arg(long, default_value_t = 25)]
    chunk: usize,
    /// Stage-1 rank per chunk.
    #[arg(long)]
    rank: usize,
    /// Stage-2 relative tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Subsampling stride per axis (1 keeps every point).
    #[arg(long, value_delimiter = ',')]
    stride: Option<Vec<usize>>,
    /// Treat every axis as periodic.
    #[arg(long)]
    periodic: bool,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Numeric(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Numeric(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numeric(Error::Io(e))
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn sidecar(path: &Path, explicit: Option<&PathBuf>) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| {
        let mut p = path.as_os_str().to_owned();
        p.push(".json");
        PathBuf::from(p)
    })
}

fn print_json(value: &impl Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Metadata(e.to_string()))?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn gen_taylor_green(args: TaylorGreenArgs) -> CliResult {
    if args.grid.len() != 2 {
        return Err(Failure::Usage("--grid takes two sizes, e.g. 20,20".into()));
    }
    let grid = if args.unstructured {
        let m = args.grid.iter().product();
        let two_pi = 2.0 * std::f64::consts::PI;
        gen_unstructured_grid(m, args.seed, &[(0.0, two_pi), (0.0, two_pi)])?
    } else {
        GridGeom::structured(args.grid.clone(), vec![true, true])?
    };
    let params = TaylorGreenParams {
        nu: args.nu,
        rho: args.rho,
        grid,
        dt: args.dt,
        n: args.steps,
        qoi: args.qoi,
    };
    params.validate()?;
    let m = params.grid.num_points();
    let mut writer = FrameWriter::create(&args.output.out, m)?;
    for j in 0..params.n {
        writer.push(&taylor_green_snapshot(&params, j as f64 * params.dt)?)?;
    }
    writer.finish()?;
    FrameMeta {
        m,
        n: params.n,
        grid: params.grid,
        qoi: Some(args.qoi.name().into()),
        provenance: format!(
            "taylor-green nu={} rho={} dt={} steps={}{}",
            args.nu,
            args.rho,
            args.dt,
            args.steps,
            if args.unstructured {
                format!(" unstructured seed={}", args.seed)
            } else {
                String::new()
            }
        ),
    }
    .save(sidecar(&args.output.out, args.output.meta.as_ref()))?;
    Ok(())
}

fn gen_synthetic(args: SyntheticArgs) -> CliResult {
    let (a, provenance) = match (&args.rank, &args.block_ranks) {
        (Some(r), None) => (
            gen_exact_rank(args.rows, args.cols, *r, args.seed)?,
            format!("synthetic rank={r} seed={}", args.seed),
        ),
        (None, Some(ranks)) => {
            if ranks.is_empty() || ranks.len() > args.rows {
                return Err(Failure::Usage(
                    "--block-ranks needs between 1 and --rows entries".into(),
                ));
            }
            let size = args.rows / ranks.len();
            let blocks: Vec<(usize, usize)> = ranks
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    (
                        if i + 1 == ranks.len() {
                            args.rows - size * i
                        } else {
                            size
                        },
                        r,
                    )
                })
                .collect();
            (
                gen_locally_low_rank(&blocks, args.cols, args.seed)?,
                format!("synthetic block_ranks={ranks:?} seed={}", args.seed),
            )
        }
        _ => {
            return Err(Failure::Usage(
                "give exactly one of --rank and --block-ranks".into(),
            ))
        }
    };
    write_frames(&args.output.out, &a)?;
    FrameMeta {
        m: args.rows,
        n: args.cols,
        grid: GridGeom::structured(vec![args.rows], vec![false])?,
        qoi: None,
        provenance,
    }
    .save(sidecar(&args.output.out, args.output.meta.as_ref()))?;
    Ok(())
}

fn compress(args: CompressArgs) -> CliResult {
    let meta = FrameMeta::load(sidecar(&args.input, args.meta.as_ref()))?;
    let mut grid = meta.grid.clone();
    let axes = grid.axis_count();
    if args.periodic {
        match &mut grid {
            GridGeom::Structured { periodic, .. } => periodic.iter_mut().for_each(|p| *p = true),
            GridGeom::Unstructured { .. } => {
                return Err(Failure::Usage("--periodic needs a structured grid".into()))
            }
        }
    }
    let blocks_per_axis = match (args.blocks, grid.is_structured()) {
        (Some(b), true) if b.len() != axes => {
            return Err(Failure::Usage(format!(
                "--blocks needs {axes} values for this grid"
            )))
        }
        (Some(b), false) if b.len() != 1 => {
            return Err(Failure::Usage(
                "--blocks takes one value on unstructured grids".into(),
            ))
        }
        (Some(b), _) => b,
        (None, true) => vec![1; axes],
        (None, false) => vec![1],
    };
    let spec = match (args.stride, &grid) {
        (Some(s), GridGeom::Structured { .. }) if s.len() != axes => {
            return Err(Failure::Usage(format!(
                "--stride needs {axes} values for this grid"
            )))
        }
        (Some(s), GridGeom::Structured { .. }) => SubsampleSpec::strided(grid.clone(), s, false)?,
        (Some(s), GridGeom::Unstructured { .. }) if s.iter().any(|&v| v != 1) => {
            return Err(Failure::Usage(
                "unstructured grids only support --stride 1".into(),
            ))
        }
        _ => SubsampleSpec::all_rows(grid.clone())?,
    };
    let workers = match args.workers {
        Some(0) => return Err(Failure::Usage("--workers must be >= 1".into())),
        Some(w) => w,
        None => thread::available_parallelism().map_or(1, usize::from),
    };
    if args.chunk == 0 || args.rank == 0 {
        return Err(Failure::Usage("--chunk and --rank must be >= 1".into()));
    }
    let plan = PartitionPlan::new(grid, blocks_per_axis, args.chunk)?;
    let mut config = StreamConfig::new(plan, spec, args.rank, args.tol)?
        .with_executor(Executor::Pool { workers });
    config.qoi = meta.qoi.clone();
    config.provenance = meta.provenance.clone();
    let producer = FrameReader::open(&args.input, &meta)?;
    let output = run_pipeline(producer, &config)?;
    std::fs::write(&args.out, encode(&output.archive)?)?;
    Ok(())
}

fn load_archive(path: &Path) -> CliResult<spid_core::archive::Archive> {
    Ok(decode(&std::fs::read(path)?)?)
}

#[derive(Serialize)]
struct InfoReport<'a> {
    metadata: &'a spid_core::archive::ArchiveMetadata,
    block_ranks: Vec<usize>,
    stored_entries: usize,
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Gen(GenCommand::TaylorGreen(args)) => gen_taylor_green(args),
        Command::Gen(GenCommand::Synthetic(args)) => gen_synthetic(args),
        Command::Compress(args) => compress(args),
        Command::Decompress { input, out } => {
            let archive = load_archive(&input)?;
            write_frames(&out, &decompress(&archive)?)?;
            let md = &archive.metadata;
            FrameMeta {
                m: md.m,
                n: md.n,
                grid: md.grid.clone(),
                qoi: md.qoi.clone(),
                provenance: format!("decompressed from {}", input.display()),
            }
            .save(sidecar(&out, None))?;
            Ok(())
        }
        Command::Info { input } => {
            let archive = load_archive(&input)?;
            print_json(&InfoReport {
                metadata: &archive.metadata,
                block_ranks: archive.block_ranks(),
                stored_entries: archive.stored_entries(),
            })
        }
        Command::Metrics {
            exact,
            meta,
            archive,
        } => {
            let frames = FrameMeta::load(sidecar(&exact, meta.as_ref()))?;
            let reference = spid_core::archive::read_frames(&exact, &frames)?;
            print_json(&quality_report(&load_archive(&archive)?, &reference)?)
        }
        Command::VerifyBounds {
            seed_count,
            tau_grid,
        } => {
            if seed_count == 0 || tau_grid.is_empty() {
                return Err(Failure::Usage(
                    "need --seed-count >= 1 and a non-empty --tau-grid".into(),
                ));
            }
            let report = sweep(seed_count, &tau_grid)?;
            print_json(&report)?;
            if report.lemma.hard_failures > 0 {
                return Err(Error::LemmaViolation(format!(
                    "{} hard failures",
                    report.lemma.hard_failures
                ))
                .into());
            }
            if report.failures > 0 {
                return Err(
                    Error::LemmaViolation(format!("{} bound violations", report.failures)).into(),
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("{}: {e}", e.name());
            ExitCode::from(2)
        }
    }
}
