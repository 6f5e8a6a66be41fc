use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use simnet_core::io::write::write_json;
use simnet_core::io::{parse_snr_sweep, write_touchstone};
use simnet_core::pipeline::{evaluate_manifest, read_state_file, run_optimization, MANIFEST_FILE};
use simnet_core::{
    CouplingModel, Error, Experiment, ExperimentConfig, Metrics, TouchstoneFile, TouchstoneFormat,
};

#[derive(Parser)]
#[command(
    name = "simnet",
    version,
    about = "Stacked intelligent metasurface modeling and optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic network of a configuration as a Touchstone file.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Format::Ri)]
        format: Format,
    },
    /// Run the continuous descent and, with levels, the codebook search.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Compute the task metrics for a stored state manifest.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// State manifest; defaults to the one in the output directory.
        #[arg(long)]
        states: Option<PathBuf>,
    },
    /// Optimize, then evaluate, writing every result file.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
    /// Turn an `eta.json` or `levels.json` file into a state manifest.
    ExportStates {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        state: PathBuf,
        /// Defaults to `states_manifest.json` in the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides both the network seed and the descent seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    model: Option<CouplingModel>,
    /// Codebook size `P`.
    #[arg(long)]
    levels: Option<usize>,
    /// SNR points as `start:step:stop` in dB.
    #[arg(long, value_parser = parse_sweep)]
    snr_sweep: Option<SnrSweep>,
}

#[derive(Clone, Debug)]
struct SnrSweep(Vec<f64>);

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Ri,
    Ma,
    Db,
}

fn parse_model(s: &str) -> Result<CouplingModel, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_sweep(s: &str) -> Result<SnrSweep, String> {
    parse_snr_sweep(s).map(SnrSweep).map_err(|e| e.to_string())
}

impl Common {
    fn load(&self) -> simnet_core::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::read(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.override_seed(seed);
        }
        if let Some(dir) = &self.out_dir {
            cfg.output.out_dir = dir.clone();
        }
        if let Some(model) = self.model {
            cfg.model = model;
        }
        if let Some(levels) = self.levels {
            cfg.cells.levels = Some(levels);
        }
        if let Some(sweep) = &self.snr_sweep {
            cfg.metrics.snr_db = Some(sweep.0.clone());
        }
        Ok(cfg)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Dimension { .. }
        | Error::IndexRange { .. }
        | Error::Geometry(_)
        | Error::Unsupported(_) => 3,
        Error::Parse { .. } | Error::Json(_) => 4,
        Error::SingularCell { .. }
        | Error::IllConditioned { .. }
        | Error::Singular(_)
        | Error::Factorization { .. }
        | Error::UnsupportedDerivative(_) => 5,
        Error::Estimation(_) => 6,
        Error::Io { .. } => 7,
    }
}

fn print_metrics(m: &Metrics) {
    match m {
        Metrics::Comm {
            suppression_db,
            capacity,
        } => {
            println!("off-diagonal suppression: {suppression_db:.2} dB");
            for r in capacity {
                println!(
                    "  snr {:>6.1} dB  capacity {:.4} bit/s/Hz",
                    r.snr_db, r.capacity
                );
            }
        }
        Metrics::Sensing {
            noiseless_error_std,
            table,
        } => {
            println!("noiseless error std: {noiseless_error_std:.6e}");
            for r in table {
                println!("  snr {:>6.1} dB  error std {:.6e}", r.snr_db, r.error_std);
            }
        }
    }
}

fn list(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn synth(cfg: &ExperimentConfig, format: Format) -> simnet_core::Result<()> {
    let exp = Experiment::build(cfg)?;
    let s = exp.system.scattering();
    let (l, n, m) = s.dims();
    let global = s.assemble();
    let format = match format {
        Format::Ri => TouchstoneFormat::Ri,
        Format::Ma => TouchstoneFormat::Ma,
        Format::Db => TouchstoneFormat::Db,
    };
    let geometry = exp.config.scenario.geometry();
    let file = TouchstoneFile::single(global, geometry.frequency_hz, format)?;
    let dir = &exp.config.output.out_dir;
    let path = dir.join(format!("network.s{}p", l + n + m));
    write_touchstone(&file, &path)?;
    let topo = dir.join("topology.json");
    write_json(
        &topo,
        &json!({
            "layers": exp.topology.layers(),
            "cells_per_layer": exp.topology.cells_per_layer(),
            "sources": l,
            "sim_ports": n,
            "probes": m,
            "port_order": ["sources", "sim", "probes"],
            "frequency_hz": geometry.frequency_hz,
            "scale": exp.synth.as_ref().map(|s| s.scale),
        }),
    )?;
    list(&[path, topo]);
    Ok(())
}

fn run(cli: Cli) -> simnet_core::Result<()> {
    match cli.command {
        Command::Synth { common, format } => synth(&common.load()?, format),
        Command::Optimize { common } => {
            let (_, _, summary) = run_optimization(&common.load()?)?;
            println!("continuous loss: {:.6e}", summary.continuous_loss);
            if let Some(d) = summary.discrete_loss {
                println!("discrete loss: {d:.6e}");
            }
            list(&summary.files);
            Ok(())
        }
        Command::Evaluate { common, states } => {
            let cfg = common.load()?;
            let states = states.unwrap_or_else(|| cfg.output.out_dir.join(MANIFEST_FILE));
            let (metrics, files) = evaluate_manifest(&cfg, &states)?;
            print_metrics(&metrics);
            list(&files);
            Ok(())
        }
        Command::Pipeline { common } => {
            let summary = simnet_core::run_experiment(&common.load()?)?;
            println!("continuous loss: {:.6e}", summary.continuous_loss);
            if let Some(d) = summary.discrete_loss {
                println!("discrete loss: {d:.6e}");
            }
            if let Some(m) = &summary.metrics {
                print_metrics(m);
            }
            list(&summary.files);
            Ok(())
        }
        Command::ExportStates {
            common,
            state,
            output,
        } => {
            let cfg = common.load()?;
            let exp = Experiment::build(&cfg)?;
            let state = read_state_file(&state)?;
            let manifest = exp.manifest(&state)?;
            let path = output.unwrap_or_else(|| exp.config.output.out_dir.join(MANIFEST_FILE));
            manifest.write(&path)?;
            list(&[path]);
            Ok(())
        }
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("SIMNET_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("SIMNET_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_have_distinct_codes() {
        let cases = [
            Error::Config("x".into()),
            Error::Parse {
                path: "f".into(),
                line: 1,
                message: "m".into(),
            },
            Error::Factorization {
                block: 0,
                rcond: 0.0,
            },
            Error::Estimation("x".into()),
            Error::Io {
                path: "f".into(),
                source: std::io::Error::other("x"),
            },
        ];
        let mut codes: Vec<u8> = cases.iter().map(exit_code).collect();
        assert_eq!(codes, vec![3, 4, 5, 6, 7]);
        codes.dedup();
        assert_eq!(codes.len(), 5);
        assert_eq!(
            exit_code(&Error::IllConditioned {
                condition: 1e13,
                cap: 1e12
            }),
            5
        );
    }
}
