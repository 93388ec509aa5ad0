//! `nsvfp` command-line harness.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nsvfp::gpc::triple_products;
use nsvfp::harness::{emit_outputs, run_experiment, timestamp, HarnessConfig, MeasureKind, Preset};
use nsvfp::{GpcBasis, Result};

#[derive(Parser)]
#[command(name = "nsvfp", about = "Spectral NS-VFP solver and verification harness", version)]
struct Cli {
    /// TOML file overriding preset defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for sweeps (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration without running it. Without a preset every preset is checked.
    Validate { preset: Option<String> },
    /// Run a preset and write its outputs.
    Run {
        preset: String,
        /// Overrides `output_dir`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Directory suffix instead of the current UTC time.
        #[arg(long)]
        tag: Option<String>,
    },
    /// Write the gPC triple product tensor as CSV rows `j,l,k,value` (one-based, nonzero entries).
    DumpTensor {
        #[arg(long, value_parser = parse_measure)]
        measure: Option<MeasureKind>,
        #[arg(short = 'K', long = "order")]
        k: Option<usize>,
        /// Destination file; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the version.
    Version,
}

fn parse_measure(s: &str) -> std::result::Result<MeasureKind, String> {
    match s {
        "uniform" => Ok(MeasureKind::Uniform),
        "chebyshev" => Ok(MeasureKind::Chebyshev),
        other => Err(format!("unknown measure `{other}`, expected uniform or chebyshev")),
    }
}

fn preset(name: &str) -> Result<Preset> {
    name.parse()
}

fn execute(cli: Cli) -> Result<bool> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Version => {
            println!("nsvfp {}", env!("CARGO_PKG_VERSION"));
            Ok(true)
        }
        Command::Validate { preset: name } => {
            let presets = match name {
                Some(n) => vec![preset(&n)?],
                None => Preset::ALL.to_vec(),
            };
            let mut ok = true;
            for p in presets {
                match HarnessConfig::load(p, config).and_then(|c| c.validate(p)) {
                    Ok(()) => println!("{p}: ok"),
                    Err(e) => {
                        ok = false;
                        println!("{p}: {e}");
                    }
                }
            }
            Ok(ok)
        }
        Command::Run {
            preset: name,
            output_dir,
            tag,
        } => {
            let p = preset(&name)?;
            let mut cfg = HarnessConfig::load(p, config)?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            let result = run_experiment(p, &cfg)?;
            for c in &result.checks {
                println!(
                    "{} {}: {:.6e} (threshold {:.3e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold
                );
            }
            if let Some(f) = &result.failure {
                println!("FAIL solver: {f}");
            }
            let written = match emit_outputs(&result, &tag.unwrap_or_else(timestamp)) {
                Ok(dir) => {
                    println!("outputs in {}", dir.display());
                    true
                }
                Err(nsvfp::Error::NothingToEmit) if result.failure.is_some() => false,
                Err(e) => return Err(e),
            };
            Ok(written && result.passed())
        }
        Command::DumpTensor { measure, k, output } => {
            let cfg = HarnessConfig::load(Preset::KSweep, config)?;
            let basis = GpcBasis::new(measure.unwrap_or(cfg.measure).measure(), k.unwrap_or(cfg.k))?;
            let tensor = triple_products(&basis);
            let mut text = String::from("j,l,k,value\n");
            for &(j, l, k, v) in tensor.nonzero() {
                text.push_str(&format!("{},{},{},{v:.17e}\n", j + 1, l + 1, k + 1));
            }
            match output {
                Some(path) => std::fs::write(&path, text).map_err(|e| nsvfp::Error::Io { path, source: e })?,
                None => std::io::stdout()
                    .write_all(text.as_bytes())
                    .map_err(|e| nsvfp::Error::Io {
                        path: PathBuf::from("<stdout>"),
                        source: e,
                    })?,
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
