//! `bench run`: boot a cluster per sweep point, apply load, write CSVs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fastpax::config::Config;
use fastpax::harness::{
    run_experiment, Algorithm, ExperimentName, ExperimentSpec, Transport,
};

#[derive(Parser)]
#[command(name = "bench", about = "Consensus engine benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment sweep and write CSV output.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// scaleup | speedup | quorumsize | retries | failure
    #[arg(long)]
    experiment: Option<String>,
    /// paxos | fast-large | fast-small | paxos-big-quorum
    #[arg(long)]
    algorithm: Option<String>,
    /// Replica count, or an inclusive sweep range `N..M`.
    #[arg(long)]
    replicas: Option<String>,
    /// Offered op/s, or a sweep range `R..S`.
    #[arg(long)]
    rate: Option<String>,
    /// Seconds of offered load per sweep point.
    #[arg(long)]
    duration: Option<u64>,
    /// sim | udp
    #[arg(long)]
    transport: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for per-point CSVs and summary.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key = value` file supplying any of the flags above; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(u64, u64), String> {
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (a, b),
        None => (s, s),
    };
    let lo: u64 = lo.trim().parse().map_err(|_| format!("bad range `{s}`"))?;
    let hi: u64 = hi.trim().parse().map_err(|_| format!("bad range `{s}`"))?;
    if hi < lo {
        return Err(format!("range `{s}` is reversed"));
    }
    Ok((lo, hi))
}

fn build_spec(args: &RunArgs) -> Result<(ExperimentSpec, PathBuf), String> {
    let file = match &args.config {
        Some(p) => Config::load(p).map_err(|e| e.to_string())?,
        None => Config::default(),
    };
    let mut flags = Config::default();
    if let Some(v) = &args.experiment {
        flags.set("experiment", v);
    }
    if let Some(v) = &args.algorithm {
        flags.set("algorithm", v);
    }
    if let Some(v) = &args.replicas {
        flags.set("replicas", v);
    }
    if let Some(v) = &args.rate {
        flags.set("rate", v);
    }
    if let Some(v) = args.duration {
        flags.set("duration", v);
    }
    if let Some(v) = &args.transport {
        flags.set("transport", v);
    }
    if let Some(v) = args.seed {
        flags.set("seed", v);
    }
    if let Some(v) = &args.out {
        flags.set("out", v.display());
    }
    let cfg = file.merged_with(&flags);

    let experiment = cfg.get("experiment").ok_or("missing --experiment")?;
    let name = ExperimentName::parse(experiment)
        .ok_or_else(|| format!("unknown experiment `{experiment}`"))?;
    let algorithm = match cfg.get("algorithm") {
        None => Algorithm::Paxos,
        Some(a) => Algorithm::parse(a).ok_or_else(|| format!("unknown algorithm `{a}`"))?,
    };
    let replicas = parse_range(cfg.get("replicas").unwrap_or("5"))?;
    let rate = parse_range(cfg.get("rate").unwrap_or("500"))?;
    let duration_s: u64 = cfg
        .get("duration")
        .unwrap_or("10")
        .parse()
        .map_err(|_| "bad --duration".to_string())?;
    let transport = match cfg.get("transport") {
        None => Transport::Sim,
        Some(t) => Transport::parse(t).ok_or_else(|| format!("unknown transport `{t}`"))?,
    };
    let seed: u64 = cfg.get("seed").unwrap_or("1").parse().map_err(|_| "bad --seed".to_string())?;
    let out = PathBuf::from(cfg.get("out").unwrap_or("bench-out"));

    Ok((
        ExperimentSpec {
            name,
            algorithm,
            replicas: (replicas.0 as usize, replicas.1 as usize),
            rate,
            duration_s,
            transport,
            seed,
            overrides: cfg,
        },
        out,
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let (spec, out) = match build_spec(&args) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let result = match spec.transport {
                Transport::Sim => run_experiment(&spec, &out).map_err(|e| e.to_string()),
                Transport::Udp => run_udp(&spec, &out),
            };
            match result {
                Ok(()) => {
                    println!("wrote {}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}

/// UDP sweeps reuse the point expansion but run each point on real sockets.
fn run_udp(spec: &ExperimentSpec, out: &std::path::Path) -> Result<(), String> {
    use std::io::Write as _;
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let mut summary = std::fs::File::create(out.join("summary.csv")).map_err(|e| e.to_string())?;
    writeln!(summary, "experiment,algorithm,replicas,rate,served_rate,mean_rt_ms,offered,served,rejected,pending")
        .map_err(|e| e.to_string())?;
    for point in fastpax::harness::sweep_points(spec) {
        let r = match fastpax::udp::run_udp_point(&point) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("point n={} rate={} failed: {e}", point.n, point.rate);
                continue;
            }
        };
        let file = out.join(format!(
            "{}_{}_n{}_r{}.csv",
            spec.name.name(),
            point.algorithm.name(),
            point.n,
            point.rate
        ));
        fastpax::harness::write_rows_csv(&file, &r.rows).map_err(|e| e.to_string())?;
        writeln!(
            summary,
            "{},{},{},{},{:.1},{:.3},{},{},{},{}",
            spec.name.name(),
            point.algorithm.name(),
            point.n,
            point.rate,
            r.summary.served_rate,
            r.summary.mean_rt_ms,
            r.offered,
            r.served,
            r.rejected,
            r.pending,
        )
        .map_err(|e| e.to_string())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_syntax() {
        assert_eq!(parse_range("5"), Ok((5, 5)));
        assert_eq!(parse_range("4..16"), Ok((4, 16)));
        assert!(parse_range("16..4").is_err());
        assert!(parse_range("x").is_err());
    }
}
