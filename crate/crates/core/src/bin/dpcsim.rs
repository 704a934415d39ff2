use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;

use dpcsim::config::{parse_config_file, Overrides, SchedulerName};
use dpcsim::emit::{emit, Format};
use dpcsim::preset::Preset;
use dpcsim::sim::{run_batch, Execution};

/// Simulate drift-plus-penalty and largest-debt-first scheduling over a
/// shared wireless channel and write plot-ready results.
#[derive(Debug, Parser)]
#[command(name = "dpcsim", version)]
struct Args {
    /// Built-in experiment; `custom` requires --config.
    #[arg(long, value_enum)]
    preset: Option<Preset>,

    /// TOML or JSON experiment file.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long, value_enum)]
    scheduler: Option<SchedulerName>,

    /// Penalty weight of the drift-plus-penalty scheduler.
    #[arg(long = "v")]
    v: Option<f64>,

    #[arg(long)]
    slots: Option<u64>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    replications: Option<u32>,

    #[arg(long, value_enum, default_value = "csv")]
    format: Format,

    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Slot stride between trace rows.
    #[arg(long)]
    trace_every: Option<u64>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();

    let (preset, base) = match (args.preset, &args.config) {
        (Some(Preset::Custom), None) => bail!("--preset custom requires --config <path>"),
        (Some(p), None) => (p, p.expand()),
        (None | Some(Preset::Custom), Some(path)) => (
            Preset::Custom,
            parse_config_file(path).with_context(|| format!("loading {}", path.display()))?,
        ),
        (Some(_), Some(_)) => bail!("--preset and --config are mutually exclusive"),
        (None, None) => bail!("one of --preset or --config is required"),
    };

    let overrides = Overrides {
        scheduler: args.scheduler,
        v: args.v,
        slots: args.slots,
        seed: args.seed,
        replications: args.replications,
        trace_every: args.trace_every,
    };
    let configs = overrides.apply(base)?;

    let started = Instant::now();
    let results = run_batch(&configs, Execution::Parallel)?;
    log::info!("{} runs in {:.2?}", results.len(), started.elapsed());

    let written = emit(preset, &configs, &results, args.format, &args.out)?;

    for (i, c) in configs.iter().enumerate() {
        let runs: Vec<_> = results.iter().filter(|r| r.config_index == i).collect();
        let k = runs.len() as f64;
        let dbar: f64 = runs
            .iter()
            .map(|r| r.users.iter().filter_map(|u| u.dbar).sum::<f64>())
            .sum::<f64>()
            / k;
        let mubar: f64 = runs
            .iter()
            .map(|r| {
                r.users
                    .iter()
                    .filter(|u| !u.deadline)
                    .map(|u| u.mubar)
                    .sum::<f64>()
            })
            .sum::<f64>()
            / k;
        println!(
            "{:<28} runs={:<3} mean drop rate={:.5} mean throughput={:.5}",
            c.label,
            runs.len(),
            dbar,
            mubar
        );
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
