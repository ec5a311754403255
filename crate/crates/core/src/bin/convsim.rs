use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use convsim_core::metrics::{write_rows, ReportFormat, ReportRow};
use convsim_core::model::FeatureMap;
use convsim_core::runner::{
    gen_net, load_weight_file, prepare_weights, run_network, sweep, synthetic_input, write_sweep, NetworkConfig,
    RunOptions, SweepGrid,
};
use convsim_core::sparse::{sbsw, BlockNorm, PruneConfig};
use convsim_core::{tensorbin, Error};

#[derive(Parser)]
#[command(name = "convsim", version, about = "Sparse CNN accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Norm {
    MaxAbs,
    L2,
}

#[derive(clap::Args)]
struct Output {
    /// Write the report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run a network and report per-layer statistics.
    Run {
        config: PathBuf,
        /// TensorBin input (C,H,W) or batch (B,C,H,W); synthetic if omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Check every layer against the software reference.
        #[arg(long)]
        verify: bool,
        /// Write the final feature maps as TensorBin.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Corrupt one output value of this layer (exercises verification).
        #[arg(long, hide = true)]
        inject_fault: Option<usize>,
        #[command(flatten)]
        out: Output,
    },
    /// Run a network once per point of a parameter grid.
    Sweep {
        config: PathBuf,
        grid: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        verify: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Prune a dense TensorBin weight tensor and encode it as SBSW.
    EncodeWeights {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 4)]
        group_size: usize,
        #[arg(long, default_value_t = 0)]
        threshold: u32,
        #[arg(long, value_enum, default_value = "max-abs")]
        norm: Norm,
        #[arg(long, default_value_t = 4)]
        bank_count: usize,
    },
    /// Print a built-in network config.
    GenNet {
        /// alexnet, vgg, googlenet or resnet.
        name: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn inputs(cfg: &NetworkConfig, path: Option<&Path>) -> Result<Vec<FeatureMap>, Error> {
    match path {
        Some(p) => tensorbin::read_file(p)?.into_feature_maps(),
        None => Ok(synthetic_input(&cfg.layers[0].spec, &cfg.input)),
    }
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run {
            config,
            input,
            verify,
            output,
            inject_fault,
            out,
        } => {
            let cfg = NetworkConfig::load(&config)?;
            let xs = inputs(&cfg, input.as_deref())?;
            let run = run_network(&cfg, xs, RunOptions { verify, inject_fault })?;
            let rows: Vec<ReportRow> = run.reports.iter().map(|r| r.row()).collect();
            write_rows(&rows, out.format.into(), open_out(out.report.as_deref())?)?;
            if let Some(p) = output {
                tensorbin::write_file(&p, &tensorbin::Tensor::from_feature_maps(&run.outputs)?)?;
            }
            let cycles: u64 = run.reports.iter().map(|r| r.run.cycles).sum();
            eprintln!("{} layers, {} cycles", run.reports.len(), cycles);
        }
        Command::Sweep {
            config,
            grid,
            input,
            verify,
            out,
        } => {
            let cfg = NetworkConfig::load(&config)?;
            let text = std::fs::read_to_string(&grid).map_err(|e| Error::Io {
                path: grid.clone(),
                source: e,
            })?;
            let grid = SweepGrid::from_toml(&text)?;
            let xs = inputs(&cfg, input.as_deref())?;
            let results = sweep(
                &cfg,
                &grid,
                &xs,
                RunOptions {
                    verify,
                    inject_fault: None,
                },
            )?;
            write_sweep(&results, out.format.into(), open_out(out.report.as_deref())?)?;
            eprintln!("{} grid points", results.len());
        }
        Command::EncodeWeights {
            input,
            output,
            group_size,
            threshold,
            norm,
            bank_count,
        } => {
            let prune = PruneConfig {
                group_size,
                threshold,
                norm: match norm {
                    Norm::MaxAbs => BlockNorm::MaxAbs,
                    Norm::L2 => BlockNorm::L2,
                },
            };
            if group_size == 0 || bank_count == 0 {
                return Err(Error::InvalidConfig("group size and bank count must be >= 1".into()));
            }
            let w = load_weight_file(&input)?;
            let s = prepare_weights(&w, &prune, bank_count)?;
            sbsw::write_file(&output, &s)?;
            eprintln!(
                "{}x{} -> {} stored values, {} bytes",
                s.filters(),
                s.cols(),
                s.stored_values(),
                s.footprint_bytes()
            );
        }
        Command::GenNet { name, output } => {
            let text = gen_net(&name)?.to_toml()?;
            let mut w = open_out(output.as_deref())?;
            w.write_all(text.as_bytes()).map_err(|e| Error::Io {
                path: output.unwrap_or_else(|| "<stdout>".into()),
                source: e,
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Verification { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
