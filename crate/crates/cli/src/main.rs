use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use fastbve::config::{parse_config_with_overrides, RunConfig};
use fastbve::output;
use fastbve::runner::{bench_convolution, loglog_slope, run, RunOptions};

#[derive(Parser)]
#[command(name = "fastbve", version, about = "Barotropic vorticity on the sphere with a spherical treecode")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a key=value config file.
    Run {
        config: PathBuf,
        /// Override a config entry, e.g. --set mesh_level=5
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Also run with direct summation and report the difference.
        #[arg(long)]
        compare_direct: bool,
        /// Time single convolutions instead of running, e.g. --bench sizes=4,5,6
        #[arg(long, value_name = "sizes=L1,L2,...")]
        bench: Option<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Time a single velocity convolution, direct and fast, per mesh level.
    Bench {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Comma separated mesh levels.
        #[arg(long, value_delimiter = ',', default_values_t = [4u32, 5, 6])]
        levels: Vec<u32>,
        /// Keep the fastest of this many evaluations.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn load(path: &PathBuf, overrides: &[String], output_dir: Option<PathBuf>) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = parse_config_with_overrides(&text, overrides).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    Ok(cfg)
}

fn parse_levels(arg: &str) -> Result<Vec<u32>> {
    let list = arg.strip_prefix("sizes=").unwrap_or(arg);
    let levels = list
        .split(',')
        .map(|t| t.trim().parse::<u32>().with_context(|| format!("bad mesh level {t:?}")))
        .collect::<Result<Vec<_>>>()?;
    if levels.is_empty() {
        bail!("no mesh levels given");
    }
    Ok(levels)
}

fn simulate(cfg: &RunConfig, compare_direct: bool) -> Result<()> {
    let summary = run(cfg, &RunOptions { compare_direct })?;
    println!("steps {} particles {} wall {:.3} s", summary.steps, summary.n_particles, summary.wall_seconds);
    println!(
        "total vorticity {:.6e} -> {:.6e}, absolute vorticity drift {:.3e}",
        summary.initial_total_vorticity, summary.final_total_vorticity, summary.absolute_vorticity_drift
    );
    if let Some(e) = &summary.exact_error {
        println!("exact: rel_l2 {:.6e} rel_linf {:.6e}", e.rel_l2, e.rel_linf);
    }
    for e in &summary.direct_errors {
        println!("{} vs direct: rel_l2 {:.6e} rel_linf {:.6e}", e.label, e.rel_l2, e.rel_linf);
    }
    for (phase, secs) in summary.timings.rows() {
        println!("{phase:>10} {secs:.3} s");
    }
    Ok(())
}

fn bench(cfg: &RunConfig, levels: &[u32], repeats: usize) -> Result<()> {
    let rows = bench_convolution(cfg, levels, repeats)?;
    output::ensure_dir(&cfg.output_dir)?;
    output::write_timings(&cfg.output_dir.join("timings.csv"), &rows)?;
    for r in &rows {
        println!(
            "N {:>8} direct {:.4} s fast {:.4} s speedup {:.2} rel_l2 {:.3e}",
            r.n_particles, r.direct_seconds, r.fast_seconds, r.speedup, r.rel_l2
        );
    }
    if rows.len() > 1 {
        let n = |r: &output::TimingRow| r.n_particles as f64;
        let fast: Vec<_> = rows.iter().map(|r| (n(r), r.fast_seconds)).collect();
        let direct: Vec<_> = rows.iter().map(|r| (n(r), r.direct_seconds)).collect();
        println!("slope fast {:.3} direct {:.3}", loglog_slope(&fast), loglog_slope(&direct));
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, overrides, compare_direct, bench: sizes, output_dir } => {
            let cfg = load(&config, &overrides, output_dir)?;
            match sizes {
                Some(levels) => bench(&cfg, &parse_levels(&levels)?, 3),
                None => simulate(&cfg, compare_direct),
            }
        }
        Command::Bench { config, overrides, levels, repeats, output_dir } => {
            let cfg = load(&config, &overrides, output_dir)?;
            if levels.is_empty() {
                bail!("no mesh levels given");
            }
            bench(&cfg, &levels, repeats)
        }
    }
}
