use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use entroflow_cli::output::{write_json, VerdictFile};
use entroflow_cli::{load_scenario, oracles, run_scenario, write_outputs, CliError, Report};

#[derive(Parser)]
#[command(name = "entroflow", version, about = "Run density-flow scenarios and grade their formula checks")]
struct Cli {
    /// Output directory; overrides the scenario's own `output` field.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print nothing on success; failures still go to standard error.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file (TOML, or JSON by extension).
    Run { config: PathBuf },
    /// Run every scenario file in a directory and aggregate the verdicts.
    VerifyAll { dir: PathBuf },
    /// Print the closed-form values used as test oracles.
    Oracles,
}

const DEFAULT_OUT: &str = "entroflow-out";

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ENTROFLOW_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config } => run_one(config, cli.out.as_deref(), cli.quiet),
        Command::VerifyAll { dir } => verify_all(dir, cli.out.as_deref(), cli.quiet),
        Command::Oracles => {
            for o in oracles::table() {
                println!("{:<24} {:>26}  {}", o.name, entroflow_cli::output::format_float(o.value), o.meaning);
            }
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
}

fn print_report(label: &str, report: &Report, quiet: bool) {
    if !quiet {
        println!("{label} ({})", report.kind);
        for v in &report.verdicts {
            let mark = if v.pass { "pass" } else { "FAIL" };
            println!("  {mark} {:<18} residual {:.3e}  tolerance {:.1e}", v.name, v.residual, v.tolerance);
        }
    }
    for v in report.failures() {
        eprintln!("{label}: verdict {} failed: residual {:e} exceeds {:e}", v.name, v.residual, v.tolerance);
    }
}

fn run_one(config: &Path, out: Option<&Path>, quiet: bool) -> Result<bool, CliError> {
    let scenario = load_scenario(config)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| scenario.output.clone())
        .unwrap_or_else(|| Path::new(DEFAULT_OUT).join(stem(config)));
    let report = run_scenario(&scenario)?;
    let (series, verdicts) = write_outputs(&report, &dir)?;
    print_report(&stem(config), &report, quiet);
    if !quiet {
        println!("  wrote {} and {}", series.display(), verdicts.display());
    }
    Ok(report.passed())
}

fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let io = |source| CliError::Io { path: dir.to_path_buf(), source };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("toml" | "json")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Runs every scenario; one bad file does not stop the others.
fn verify_all(dir: &Path, out: Option<&Path>, quiet: bool) -> Result<bool, CliError> {
    let root = out.map_or_else(|| PathBuf::from(DEFAULT_OUT), Path::to_path_buf);
    let mut summary = Vec::new();
    let mut all_pass = true;
    for file in scenario_files(dir)? {
        let name = stem(&file);
        let result = load_scenario(&file).and_then(|s| {
            let report = run_scenario(&s)?;
            write_outputs(&report, &root.join(&name))?;
            Ok(report)
        });
        match result {
            Ok(report) => {
                print_report(&name, &report, quiet);
                all_pass &= report.passed();
                summary.push((name, VerdictFile::from_report(&report)));
            }
            Err(e) => {
                eprintln!("{name}: error: {e}");
                all_pass = false;
            }
        }
    }
    let summary: serde_json::Map<String, serde_json::Value> = summary
        .into_iter()
        .map(|(name, v)| (name, serde_json::to_value(v).expect("verdicts serialize")))
        .collect();
    std::fs::create_dir_all(&root).map_err(|source| CliError::Io { path: root.clone(), source })?;
    write_json(&summary, &root.join("summary.json"))?;
    if !quiet {
        println!("{} scenarios, all verdicts pass: {all_pass}", summary.len());
    }
    Ok(all_pass)
}
