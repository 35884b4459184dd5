use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use driftflow_cli::config::ScenarioConfig;
use driftflow_cli::error::{exit, CliError, CliResult};
use driftflow_cli::{execute, parse_config, parse_sweep, report, run_sweep, verify};

/// Drift Laplacian spectra along the modified Ricci flow.
#[derive(Parser)]
#[command(name = "driftflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run every point of a parameter sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the acceptance suite and print one line per criterion.
    Verify {
        /// Also write `acceptance.json` into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize and check run manifests below the given directories.
    Report {
        paths: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Failed checks make the exit status nonzero.
    #[arg(long)]
    strict: bool,
    /// Default root for output directories.
    #[arg(long = "out-root", env = "DRIFTFLOW_OUT", hide = true)]
    out_root: Option<PathBuf>,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn output_dir(common: &Common, config: &ScenarioConfig) -> PathBuf {
    if let Some(o) = &common.out {
        return o.clone();
    }
    if let Some(o) = &config.output {
        return o.clone();
    }
    let root = common.out_root.clone().unwrap_or_else(|| PathBuf::from("driftflow-out"));
    root.join(&config.name)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn dispatch(command: Command) -> CliResult<i32> {
    match command {
        Command::Run { config, common } => {
            let cfg = parse_config(&read(&config)?)?;
            let dir = output_dir(&common, &cfg);
            let outcome = execute::execute(&cfg, &dir)?;
            for c in &outcome.manifest.checks {
                let status = match (c.skipped, c.passed) {
                    (true, _) => "skip",
                    (false, true) => "pass",
                    (false, false) => "fail",
                };
                println!("check {} {status} value={:?} tolerance={:e}", c.name, c.value, c.tolerance);
            }
            println!("wrote {}", dir.display());
            Ok(if common.strict && !outcome.manifest.all_passed() {
                eprintln!("error kind=verification reason=\"failed checks in {}\"", dir.display());
                exit::VERIFICATION
            } else {
                exit::OK
            })
        }
        Command::Sweep { config, common, jobs } => {
            let plan = parse_sweep(&read(&config)?)?;
            let dir = match (&common.out, &common.out_root) {
                (Some(o), _) => o.clone(),
                (None, Some(root)) => root.join(&plan.name),
                (None, None) => PathBuf::from("driftflow-out").join(&plan.name),
            };
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let summary = run_sweep(&plan, &dir, jobs)?;
            for r in &summary.runs {
                match &r.error {
                    Some(e) => println!("run {} {} {e}", r.index, r.name),
                    None => println!("run {} {} checks_passed={}", r.index, r.name, r.checks_passed),
                }
            }
            println!("wrote {}", dir.display());
            let code = summary.exit_code(common.strict);
            if code != exit::OK {
                eprintln!("error kind=sweep reason=\"a sweep run failed with exit code {code}\"");
            }
            Ok(code)
        }
        Command::Verify { out } => {
            let reports = verify::run_all();
            for r in &reports {
                println!("{}", r.line());
            }
            if let Some(dir) = out {
                fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
                let path = dir.join("acceptance.json");
                let mut text = serde_json::to_string_pretty(&reports).expect("reports serialize");
                text.push('\n');
                fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
            }
            let failed = reports.iter().filter(|r| !r.passed()).count();
            if failed > 0 {
                eprintln!("error kind=verification reason=\"{failed} criteria failed\"");
                Ok(exit::VERIFICATION)
            } else {
                Ok(exit::OK)
            }
        }
        Command::Report { mut paths, common } => {
            if paths.is_empty() {
                paths.push(common.out.or(common.out_root).unwrap_or_else(|| PathBuf::from("driftflow-out")));
            }
            let mut bad = 0;
            let mut total = 0;
            for root in &paths {
                for m in report::find_manifests(root)? {
                    let r = report::inspect(&m)?;
                    println!("{}", r.line());
                    total += 1;
                    if !r.ok() {
                        bad += 1;
                    }
                }
            }
            println!("manifests={total} problems={bad}");
            Ok(if common.strict && bad > 0 { exit::VERIFICATION } else { exit::OK })
        }
    }
}
