//! Study measures over an exported check-event log.

use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use proofdesk_core::analytics::{Analyzer, GroupBy, Measure, Query};
use proofdesk_core::telemetry::read_export;

#[derive(Parser)]
#[command(about = "Compute study measures from an exported check-event log")]
struct Args {
    /// Export file written by `GET /export`.
    export: PathBuf,
    /// rank, assoc, freq or durations.
    measure: Measure,
    #[arg(long)]
    user: Option<String>,
    #[arg(long)]
    activity: Option<String>,
    /// Gaps longer than this many minutes are breaks; 0 counts every gap.
    #[arg(long, value_name = "MIN", default_value_t = 15.0)]
    idle_threshold: f64,
    /// Directory with activities/*.toml and keywords.toml.
    #[arg(long, env = "PROOFDESK_CONFIG_DIR")]
    config: Option<PathBuf>,
    /// all, activity or user (rank only).
    #[arg(long, default_value = "all")]
    group_by: GroupBy,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("analyze: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: &Args) -> Result<String, Box<dyn std::error::Error>> {
    if !(args.idle_threshold >= 0.0 && args.idle_threshold.is_finite()) {
        return Err("--idle-threshold must be a non-negative number of minutes".into());
    }
    let file = std::fs::File::open(&args.export)
        .map_err(|e| format!("{}: {e}", args.export.display()))?;
    let events = read_export(BufReader::new(file))?;
    let analyzer = Analyzer {
        idle_threshold: Duration::from_secs_f64(args.idle_threshold * 60.0),
        ..Analyzer::from_config_dir(args.config.as_deref())?
    };
    let query = Query {
        user: args.user.clone(),
        activity: args.activity.clone(),
        group_by: Some(args.group_by),
    };
    let report = analyzer.report(args.measure, &events, &query);
    Ok(if args.json {
        serde_json::to_string_pretty(&report)? + "\n"
    } else {
        report.to_text()
    })
}
