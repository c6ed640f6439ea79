//! Batch front end over the analysis pipeline. Every command reads one
//! `.ape` app model and writes stable, deterministic JSON artifacts.
//!
//! Exit codes: 0 — nothing found, 1 — findings produced, 2 — input error.

use apechk_core::app_model::{parse_app, validate_app, ApiConfig, App};
use apechk_core::baselines::{detect_races, fuzz};
use apechk_core::callgraph::build_call_graph;
use apechk_core::event_synth::{synthesize_events, Environment};
use apechk_core::fault_detector::detect_apes;
use apechk_core::runtime_sim::{
    explore_all_schedules, instrument, run, Schedule, ScheduleMode, SimResult,
};
use apechk_core::trace_gen::{generate_traces, TraceLimits, TraceState};
use apechk_core::verifier::{verify_all, TestCaseInput};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "apechk",
    about = "Detect, trace and replay-verify async programming errors in .ape app models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// App model to analyze (.ape).
    app: PathBuf,
    /// Override the built-in API configuration.
    #[arg(long = "api-config")]
    api_config: Option<PathBuf>,
    /// Maximum number of traces per candidate.
    #[arg(long = "max-traces", default_value_t = 10)]
    max_traces: usize,
    /// Maximum trace length.
    #[arg(long = "max-len", default_value_t = 20)]
    max_len: usize,
    /// Output directory for JSON artifacts.
    #[arg(long = "out", default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Statically locate suspicious APEs and generate their backward traces.
    Analyze {
        #[command(flatten)]
        opts: CommonOpts,
        /// Also write the call graph as a text adjacency list.
        #[arg(long = "dump-graph")]
        dump_graph: bool,
    },
    /// Run the full pipeline: detect, trace, synthesize, instrument, replay.
    Verify {
        #[command(flatten)]
        opts: CommonOpts,
        /// Verify candidates on this many worker threads.
        #[arg(long = "jobs", default_value_t = 1)]
        jobs: usize,
    },
    /// Random GUI fuzzing baseline.
    Fuzz {
        #[command(flatten)]
        opts: CommonOpts,
        /// Total event budget.
        #[arg(long = "budget", default_value_t = 10_000)]
        budget: u64,
        /// PRNG seed.
        #[arg(long = "seed", default_value_t = 0)]
        seed: u64,
    },
    /// Happens-before race detection baseline over explored run logs.
    Races {
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Replay an explicit test-case JSON against the app.
    Simulate {
        #[command(flatten)]
        opts: CommonOpts,
        /// Test case produced by `verify` (events, environment, schedule).
        test_case: PathBuf,
        /// Also write the human-readable execution log (exec.log).
        #[arg(long = "log")]
        log: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(findings) => {
            if findings {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(message) => {
            eprintln!("error: {}", message);
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Analyze { opts, dump_graph } => cmd_analyze(&opts, dump_graph),
        Command::Verify { opts, jobs } => cmd_verify(&opts, jobs),
        Command::Fuzz { opts, budget, seed } => cmd_fuzz(&opts, budget, seed),
        Command::Races { opts } => cmd_races(&opts),
        Command::Simulate {
            opts,
            test_case,
            log,
        } => cmd_simulate(&opts, &test_case, log),
    }
}

fn load_app(opts: &CommonOpts) -> Result<App, String> {
    let text = std::fs::read_to_string(&opts.app)
        .map_err(|e| format!("cannot read {}: {}", opts.app.display(), e))?;
    let mut app = parse_app(&text).map_err(|diags| {
        let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        format!("{} has errors:\n{}", opts.app.display(), lines.join("\n"))
    })?;
    if let Some(path) = &opts.api_config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {}", path.display(), e))?;
        app.api_config = ApiConfig::parse(&text)
            .map_err(|e| format!("{}: {}", path.display(), e))?;
    }
    let diags = validate_app(&app);
    if !diags.is_empty() {
        let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(format!("{} is invalid:\n{}", opts.app.display(), lines.join("\n")));
    }
    Ok(app)
}

fn limits(opts: &CommonOpts) -> TraceLimits {
    TraceLimits {
        max_trace_cnt: opts.max_traces,
        max_trace_len: opts.max_len,
    }
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {}", dir.display(), e))?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| format!("cannot write {}: {}", path.display(), e))
}

fn cmd_analyze(opts: &CommonOpts, dump_graph: bool) -> Result<bool, String> {
    let app = load_app(opts)?;
    let cg = build_call_graph(&app);
    let candidates = detect_apes(&app, &cg);
    let limits = limits(opts);

    let candidate_records: Vec<_> = candidates.iter().map(|c| c.render(&app)).collect();
    write_json(&opts.out, "candidates.json", &candidate_records)?;

    #[derive(serde::Serialize)]
    struct TraceSet {
        candidate: apechk_core::fault_detector::CandidateRecord,
        traces: Vec<apechk_core::trace_gen::TraceRecord>,
    }
    let trace_sets: Vec<TraceSet> = candidates
        .iter()
        .map(|c| TraceSet {
            candidate: c.render(&app),
            traces: generate_traces(&app, &cg, c, &limits)
                .iter()
                .map(|t| t.render(&app))
                .collect(),
        })
        .collect();
    write_json(&opts.out, "traces.json", &trace_sets)?;

    if dump_graph {
        let path = opts.out.join("callgraph.txt");
        std::fs::create_dir_all(&opts.out).ok();
        std::fs::write(&path, cg.dump(&app))
            .map_err(|e| format!("cannot write {}: {}", path.display(), e))?;
    }

    println!("detected {} candidate(s)", candidates.len());
    Ok(!candidates.is_empty())
}

fn cmd_verify(opts: &CommonOpts, jobs: usize) -> Result<bool, String> {
    let app = load_app(opts)?;
    let summary = verify_all(&app, &limits(opts), jobs.max(1));
    let record = summary.render(&app);
    write_json(&opts.out, "summary.json", &record)?;
    for (i, outcome) in summary.outcomes.iter().enumerate() {
        if let Some(report) = &outcome.report {
            write_json(&opts.out, &format!("crash_report_{:02}.json", i), report)?;
        }
    }
    println!(
        "detected={} processed={} reproduced={} fp-suspects={}",
        summary.detected, summary.processed, summary.reproduced, summary.false_positive_suspects
    );
    Ok(summary.detected > 0)
}

fn cmd_fuzz(opts: &CommonOpts, budget: u64, seed: u64) -> Result<bool, String> {
    let app = load_app(opts)?;
    let result = fuzz(&app, budget, seed);
    write_json(&opts.out, "fuzz.json", &result)?;
    println!("crashes={}", result.crashes.len());
    Ok(!result.crashes.is_empty())
}

fn cmd_races(opts: &CommonOpts) -> Result<bool, String> {
    let app = load_app(opts)?;
    let cg = build_call_graph(&app);
    let trace_limits = limits(opts);

    // Explore each candidate's synthesized sequence; detect per run log and
    // deduplicate by site.
    let mut reports: std::collections::BTreeMap<String, apechk_core::baselines::RaceReport> =
        std::collections::BTreeMap::new();
    for cand in detect_apes(&app, &cg) {
        let traces = generate_traces(&app, &cg, &cand, &trace_limits);
        let Some(trace) = traces.iter().find(|t| t.state == TraceState::Terminated) else {
            continue;
        };
        let Ok(seq) = synthesize_events(trace, &app) else {
            continue;
        };
        let exploration =
            explore_all_schedules(&app, &seq.events, &Environment::default(), 512);
        for r in &exploration.runs {
            for race in detect_races(&app, &r.output.access_log) {
                reports.entry(race.site.clone()).or_insert(race);
            }
        }
    }
    let list: Vec<_> = reports.into_values().collect();
    write_json(&opts.out, "races.json", &list)?;
    println!("races={}", list.len());
    Ok(!list.is_empty())
}

fn cmd_simulate(opts: &CommonOpts, test_case: &Path, log: bool) -> Result<bool, String> {
    let app = load_app(opts)?;
    let text = std::fs::read_to_string(test_case)
        .map_err(|e| format!("cannot read {}: {}", test_case.display(), e))?;
    let case: TestCaseInput = serde_json::from_str(&text)
        .map_err(|e| format!("{}: {}", test_case.display(), e))?;

    let mode = match case.schedule.as_ref().map(|s| s.mode.as_str()) {
        None | Some("barrier") => ScheduleMode::Barrier,
        Some("eager") => ScheduleMode::Eager,
        Some("exhaustive") => ScheduleMode::Exhaustive,
        Some(other) => return Err(format!("unknown schedule mode `{}`", other)),
    };

    let output = if mode == ScheduleMode::Barrier {
        let cand = case
            .candidate
            .as_ref()
            .and_then(|c| c.resolve(&app))
            .ok_or("barrier replay needs a resolvable `candidate` in the test case")?;
        let instrumented = instrument(&app, &cand);
        let schedule = Schedule::barrier(instrumented.barrier.clone());
        run(&instrumented.app, &case.events, &case.environment, &schedule)
    } else {
        let schedule = Schedule {
            mode,
            barrier: None,
        };
        run(&app, &case.events, &case.environment, &schedule)
    };

    let mut text = serde_json::to_string_pretty(&output.result).expect("serializable");
    text.push('\n');
    print!("{}", text);
    write_json(&opts.out, "result.json", &output.result)?;
    if log {
        let path = opts.out.join("exec.log");
        let mut lines = output.exec_log.join("\n");
        lines.push('\n');
        std::fs::write(&path, lines)
            .map_err(|e| format!("cannot write {}: {}", path.display(), e))?;
    }
    Ok(matches!(output.result, SimResult::Crash(_)))
}
