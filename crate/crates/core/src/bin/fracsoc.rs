use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracsoc::data::save_dir;
use fracsoc::experiments::{run_paper_protocol, run_sweep, ConfigFile, ProtocolOptions, SweepOptions, SynthOptions};

#[derive(Parser)]
#[command(name = "fracsoc", version, about = "Fractional-order physics-informed SOC estimation")]
struct Cli {
    /// TOML file with `[sweep]`, `[protocol]` and `[synth]` tables. Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a grid over one hyperparameter and summarise test error.
    Sweep(SweepOptions),
    /// Train all six models on one built-in partition, per temperature.
    Protocol(ProtocolOptions),
    /// Write a synthetic corpus of cycle CSVs.
    Synth(SynthOptions),
}

fn run(cli: Cli) -> fracsoc::Result<()> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Sweep(mut opts) => {
            opts.overlay(file.sweep);
            let spec = opts.spec()?;
            let corpus = opts.common.corpus()?;
            let table = run_sweep(&spec, &corpus)?;
            let out = opts.common.out_dir();
            table.write_dir(&out)?;
            let failed = table.runs.iter().filter(|r| r.outcome.is_err()).count();
            println!("{} runs ({failed} failed) written to {}", table.runs.len(), out.display());
        }
        Command::Protocol(mut opts) => {
            opts.overlay(file.protocol);
            let corpus = opts.common.corpus()?;
            let table = run_paper_protocol(&corpus, opts.experiment(), &opts.common.settings()?, &opts.seeds())?;
            let out = opts.common.out_dir();
            table.write_dir(&out)?;
            print!("{}", table.to_markdown());
        }
        Command::Synth(mut opts) => {
            opts.overlay(file.synth);
            let ds = opts.generate()?;
            let out = opts.out_dir();
            save_dir(&ds, &out)?;
            println!("{} cycles written to {}", ds.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
