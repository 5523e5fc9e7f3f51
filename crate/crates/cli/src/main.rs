mod args;
mod commands;
mod config;
mod ctx;
mod error;

use std::path::PathBuf;

use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};
use subdiff::output::Provenance;

use args::{Cli, Command, Experiment};
use ctx::Ctx;
use error::{CliError, CliResult};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("subdiff: {e}");
        std::process::exit(e.exit_code());
    }
}

/// Merges a command's flags with its configuration section and builds the run context.
fn prepare<T: Serialize + serde::de::DeserializeOwned>(
    flags: &T,
    file: Option<&Value>,
    path: &[&str],
    global: &args::GlobalArgs,
) -> CliResult<(T, Ctx)> {
    let merged = config::merge(flags, file.and_then(|f| config::section(f, path)))?;
    // Output location and thread count do not affect results, so they are left out.
    let provenance = Provenance::new(json!({
        "command": path.join(" "),
        "seed": global.seed,
        "args": serde_json::to_value(&merged).expect("arguments serialize"),
    }));
    let ctx = Ctx { seed: global.seed, out: global.out.clone().unwrap_or_else(|| PathBuf::from(".")), provenance };
    Ok((merged, ctx))
}

fn run(cli: Cli) -> CliResult<()> {
    let file = cli.global.config.as_deref().map(config::load).transpose()?;
    let global = config::merge(&cli.global, file.as_ref())?;
    if let Some(n) = global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let path = cli.command.config_path();
    let f = file.as_ref();
    macro_rules! dispatch {
        ($args:expr, $cmd:path) => {{
            let (a, ctx) = prepare($args, f, path, &global)?;
            $cmd(&ctx, &a)
        }};
    }
    match &cli.command {
        Command::Msd(a) => dispatch!(a, commands::msd),
        Command::Fit(a) => dispatch!(a, commands::fit),
        Command::Simulate(a) => dispatch!(a, commands::simulate),
        Command::Compare(a) => dispatch!(a, commands::compare),
        Command::HierFit(a) => dispatch!(a, commands::hier_fit),
        Command::Check(a) => dispatch!(a, commands::check),
        Command::Residuals(a) => dispatch!(a, commands::residuals),
        Command::Experiment(Experiment::Table1(a)) => dispatch!(a, commands::table1),
        Command::Experiment(Experiment::S4(a)) => dispatch!(a, commands::s4),
    }
}
