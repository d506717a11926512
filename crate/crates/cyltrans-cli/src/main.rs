use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use cyltrans_cli::config::{Pipeline, RunConfig};
use cyltrans_cli::pipelines;
use std::path::PathBuf;
use std::process::ExitCode;

/// Geodesics of positive Lagrangians and their cylinder families.
#[derive(Parser)]
#[command(name = "cyltrans", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Integrate the fixture geodesic.
    Generate(Common),
    /// Cut the geodesic into level cylinders and check their flux.
    Forward(Common),
    /// Reassemble the geodesic from its cylinder family.
    Inverse(Common),
    /// Forward then inverse, with the round-trip criteria.
    Roundtrip(Common),
    /// Perturb the far boundary and re-solve.
    Perturb(Common),
    /// Ambient, elliptic and Newton checks.
    Verify(Common),
    /// Draw figures from artifacts already in the output directory.
    Render(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value` with a dotted key, e.g. `resolution.m=64`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn load(pipeline: Pipeline, args: &Common) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::new(pipeline),
    };
    config.pipeline = pipeline;
    let mut config = config.with_overrides(&args.overrides)?;
    if let Some(out) = &args.out {
        config.output = out.clone();
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (pipeline, args) = match &cli.verb {
        Verb::Generate(a) => (Pipeline::Generate, a),
        Verb::Forward(a) => (Pipeline::Forward, a),
        Verb::Inverse(a) => (Pipeline::Inverse, a),
        Verb::Roundtrip(a) => (Pipeline::Roundtrip, a),
        Verb::Perturb(a) => (Pipeline::Perturb, a),
        Verb::Verify(a) => (Pipeline::Verify, a),
        Verb::Render(a) => (Pipeline::Render, a),
    };
    let record = match load(pipeline, args).and_then(|c| pipelines::run(&c)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    for s in &record.stages {
        println!("stage {} {} ({:.2} s)", s.name, if s.ok { "ok" } else { "FAILED" }, s.seconds);
    }
    for c in record.acceptance.iter().filter(|c| c.status != cyltrans_cli::record::Status::Skip) {
        println!("{}", c.line());
    }
    println!("wrote {} files to {}", record.artifacts.len(), record.config.output.display());
    if record.failed() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
