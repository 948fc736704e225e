//! Command-line experiment driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mvem::experiment::{ExperimentConfig, TestKind};
use mvem::Approach;

/// Mixed virtual element benchmark runner.
#[derive(Parser, Debug)]
#[command(name = "mvem", version, about)]
struct Cli {
    /// Benchmark family: 1 (convergence), 2 (conditioning) or patch.
    #[arg(long, default_value = "1")]
    test: String,
    /// Basis approach: monomial, partial, ortho or all.
    #[arg(long, default_value = "all")]
    approach: String,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Comma-separated subdivision counts along x (square meshes are
    /// nx by nx, aspect-ratio meshes nx by nx*AR).
    #[arg(long)]
    meshes: Option<String>,
    #[arg(long)]
    aspect_ratio: Option<f64>,
    /// Output directory for runs.csv and rates.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional key=value configuration file; command-line flags override
    /// its entries.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_approaches(s: &str) -> Result<Vec<Approach>, String> {
    if s == "all" {
        return Ok(Approach::ALL.to_vec());
    }
    s.split(',')
        .map(|t| t.trim().parse::<Approach>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_meshes(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad mesh count '{t}': {e}"))
        })
        .collect()
}

fn apply_config_file(cli: &mut Cli, path: &PathBuf) -> Result<(), String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim().to_string());
        // Flags given on the command line win over the file.
        match key {
            "test" => cli.test = value,
            "approach" => cli.approach = value,
            "k_min" => {
                let v = value.parse().map_err(|e| format!("k_min: {e}"))?;
                cli.k_min.get_or_insert(v);
            }
            "k_max" => {
                let v = value.parse().map_err(|e| format!("k_max: {e}"))?;
                cli.k_max.get_or_insert(v);
            }
            "meshes" => {
                if cli.meshes.is_none() {
                    cli.meshes = Some(value);
                }
            }
            "aspect_ratio" => {
                let v = value.parse().map_err(|e| format!("aspect_ratio: {e}"))?;
                cli.aspect_ratio.get_or_insert(v);
            }
            "out" => {
                if cli.out.is_none() {
                    cli.out = Some(PathBuf::from(value));
                }
            }
            other => return Err(format!("unknown config key '{other}'")),
        }
    }
    Ok(())
}

fn build_config(mut cli: Cli) -> Result<ExperimentConfig, String> {
    // The config file may change `test`, which drives the defaults, so it
    // is applied before anything else.
    if let Some(path) = cli.config.clone() {
        apply_config_file(&mut cli, &path)?;
    }
    let test: TestKind = cli.test.parse().map_err(|e: mvem::Error| e.to_string())?;
    let mut config = ExperimentConfig::new(test);
    config.approaches = parse_approaches(&cli.approach)?;
    if let Some(v) = cli.k_min {
        config.k_min = v;
    }
    if let Some(v) = cli.k_max {
        config.k_max = v;
    }
    if let Some(s) = &cli.meshes {
        config.meshes = parse_meshes(s)?;
    }
    if let Some(v) = cli.aspect_ratio {
        config.aspect_ratio = v;
    }
    config.out_dir = cli.out;
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("configuration error: {msg}");
            return ExitCode::from(2);
        }
    };
    match mvem::experiment::run_experiment(&config) {
        Ok(reports) => {
            println!("{}", mvem::diagnostics::CSV_HEADER);
            for r in &reports {
                println!("{}", r.csv_row());
            }
            ExitCode::SUCCESS
        }
        Err(mvem::Error::Io(e)) => {
            eprintln!("i/o error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
