//! Per-candidate pipeline orchestration: generate traces, synthesize events
//! and environment, instrument, replay under a barrier schedule and emit the
//! verdict with the reproducing test case.

use crate::app_model::{App, Site, StmtIdx};
use crate::callgraph::build_call_graph;
use crate::event_synth::{infer_environment, synthesize_events, Environment, UiEvent};
use crate::fault_detector::{detect_apes, ApeCandidate, CandidateRecord, FaultPattern};
use crate::runtime_sim::{instrument, run, CrashReport, Schedule, SimResult};
use crate::trace_gen::{generate_traces, Trace, TraceLimits, TraceState};
use serde::{Deserialize, Serialize};

/// The reproducing input of a confirmed candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestCase {
    pub events: Vec<UiEvent>,
    pub environment: Environment,
    pub schedule: Schedule,
    /// Candidate the instrumentation was derived from, for standalone
    /// replay.
    pub candidate: CandidateRecord,
}

/// Subset of a test case accepted by the CLI `simulate` command.
#[derive(Debug, Clone, Deserialize)]
pub struct TestCaseInput {
    pub events: Vec<UiEvent>,
    #[serde(default)]
    pub environment: Environment,
    #[serde(default)]
    pub schedule: Option<ScheduleInput>,
    #[serde(default)]
    pub candidate: Option<CandidateInput>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScheduleInput {
    pub mode: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CandidateInput {
    #[serde(rename = "methodStartThread")]
    pub method_start_thread: String,
    #[serde(rename = "stmtStartThread")]
    pub stmt_start_thread: String,
    #[serde(rename = "methodAccessUI")]
    pub method_access_ui: String,
    #[serde(rename = "stmtAccessUI")]
    pub stmt_access_ui: String,
    pub pattern: String,
    #[serde(rename = "asyncId")]
    pub async_id: String,
}

impl CandidateInput {
    /// Resolve the textual candidate back to indices in `app`.
    pub fn resolve(&self, app: &App) -> Option<ApeCandidate> {
        let parse_site = |text: &str| -> Option<Site> {
            let (name, idx) = text.rsplit_once(':')?;
            let method = app.resolve_method(name)?;
            let stmt: u32 = idx.parse().ok()?;
            Some(Site {
                method,
                stmt: StmtIdx(stmt),
            })
        };
        let pattern = match self.pattern.as_str() {
            "P1" => FaultPattern::P1,
            "P2" => FaultPattern::P2,
            "P3" => FaultPattern::P3,
            _ => return None,
        };
        let slot = if pattern == FaultPattern::P3 {
            crate::app_model::CallbackSlot::PostExecute
        } else {
            crate::app_model::CallbackSlot::Background
        };
        Some(ApeCandidate {
            method_start_thread: app.resolve_method(&self.method_start_thread)?,
            stmt_start_thread: parse_site(&self.stmt_start_thread)?,
            method_access_ui: app.resolve_method(&self.method_access_ui)?,
            stmt_access_ui: parse_site(&self.stmt_access_ui)?,
            pattern,
            async_id: app.async_by_name(&self.async_id)?,
            slot,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyStatus {
    Confirmed,
    NotReproduced,
    Unmappable,
    UnsatisfiableEnvironment,
    TraceFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationOutcome {
    pub candidate: ApeCandidate,
    pub status: VerifyStatus,
    pub report: Option<CrashReport>,
    pub test_case: Option<TestCase>,
    /// Crashes observed at sites other than the candidate's during replay.
    pub collateral: Vec<CrashReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeRecord {
    pub candidate: CandidateRecord,
    pub status: VerifyStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<CrashReport>,
    #[serde(rename = "testCase", skip_serializing_if = "Option::is_none")]
    pub test_case: Option<TestCase>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub collateral: Vec<CrashReport>,
}

impl VerificationOutcome {
    pub fn render(&self, app: &App) -> OutcomeRecord {
        OutcomeRecord {
            candidate: self.candidate.render(app),
            status: self.status,
            report: self.report.clone(),
            test_case: self.test_case.clone(),
            collateral: self.collateral.clone(),
        }
    }
}

/// Verify one candidate: generate traces, attempt the shortest first, and
/// confirm on the first replay whose crash site equals the candidate's.
pub fn verify(app: &App, cand: &ApeCandidate, limits: &TraceLimits) -> VerificationOutcome {
    let cg = build_call_graph(app);
    let traces = generate_traces(app, &cg, cand, limits);

    // Shortest test first; stable on generation order.
    let mut terminated: Vec<&Trace> = traces
        .iter()
        .filter(|t| t.state == TraceState::Terminated)
        .collect();
    terminated.sort_by_key(|t| t.chain.len());

    if terminated.is_empty() {
        return VerificationOutcome {
            candidate: cand.clone(),
            status: VerifyStatus::TraceFailed,
            report: None,
            test_case: None,
            collateral: Vec::new(),
        };
    }

    let mut collateral = Vec::new();
    let mut attempted = false;
    let mut saw_unsatisfiable = false;
    let mut saw_unmappable = false;

    for trace in terminated {
        let sequence = match synthesize_events(trace, app) {
            Ok(s) => s,
            Err(_) => {
                saw_unmappable = true;
                continue;
            }
        };
        let environment = match infer_environment(trace, app) {
            Ok(e) => e,
            Err(_) => {
                saw_unsatisfiable = true;
                continue;
            }
        };
        let instrumented = instrument(app, cand);
        let schedule = Schedule::barrier(instrumented.barrier.clone());
        let output = run(&instrumented.app, &sequence.events, &environment, &schedule);
        attempted = true;
        match output.result {
            SimResult::Crash(report) if report.site == cand.stmt_access_ui => {
                return VerificationOutcome {
                    candidate: cand.clone(),
                    status: VerifyStatus::Confirmed,
                    report: Some(report),
                    test_case: Some(TestCase {
                        events: sequence.events,
                        environment,
                        schedule,
                        candidate: cand.render(app),
                    }),
                    collateral,
                };
            }
            SimResult::Crash(report) => collateral.push(report),
            _ => {}
        }
    }

    let status = if attempted {
        VerifyStatus::NotReproduced
    } else if saw_unsatisfiable {
        VerifyStatus::UnsatisfiableEnvironment
    } else {
        debug_assert!(saw_unmappable);
        VerifyStatus::Unmappable
    };
    VerificationOutcome {
        candidate: cand.clone(),
        status,
        report: None,
        test_case: None,
        collateral,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySummary {
    pub detected: usize,
    pub processed: usize,
    pub reproduced: usize,
    pub environment_blocked: usize,
    pub false_positive_suspects: usize,
    pub outcomes: Vec<VerificationOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRecord {
    pub app: String,
    pub detected: usize,
    pub processed: usize,
    pub reproduced: usize,
    #[serde(rename = "environmentBlocked")]
    pub environment_blocked: usize,
    #[serde(rename = "falsePositiveSuspects")]
    pub false_positive_suspects: usize,
    pub outcomes: Vec<OutcomeRecord>,
}

impl VerifySummary {
    pub fn render(&self, app: &App) -> SummaryRecord {
        SummaryRecord {
            app: app.name.clone(),
            detected: self.detected,
            processed: self.processed,
            reproduced: self.reproduced,
            environment_blocked: self.environment_blocked,
            false_positive_suspects: self.false_positive_suspects,
            outcomes: self.outcomes.iter().map(|o| o.render(app)).collect(),
        }
    }
}

/// Detect and verify every candidate of a validated app.
///
/// `jobs` > 1 verifies candidates on that many OS threads; results merge in
/// candidate order, so the summary does not depend on the worker count.
pub fn verify_all(app: &App, limits: &TraceLimits, jobs: usize) -> VerifySummary {
    let cg = build_call_graph(app);
    let candidates = detect_apes(app, &cg);

    let outcomes: Vec<VerificationOutcome> = if jobs <= 1 || candidates.len() <= 1 {
        candidates.iter().map(|c| verify(app, c, limits)).collect()
    } else {
        let mut slots: Vec<Option<VerificationOutcome>> = vec![None; candidates.len()];
        let chunk = candidates.len().div_ceil(jobs);
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (ci, cands) in candidates.chunks(chunk).enumerate() {
                let handle = scope.spawn(move || {
                    cands
                        .iter()
                        .map(|c| verify(app, c, limits))
                        .collect::<Vec<_>>()
                });
                handles.push((ci, handle));
            }
            for (ci, handle) in handles {
                for (i, outcome) in handle.join().expect("verify worker").into_iter().enumerate() {
                    slots[ci * chunk + i] = Some(outcome);
                }
            }
        });
        slots.into_iter().map(|o| o.unwrap()).collect()
    };

    summarize(outcomes)
}

fn summarize(outcomes: Vec<VerificationOutcome>) -> VerifySummary {
    let detected = outcomes.len();
    let reproduced = outcomes
        .iter()
        .filter(|o| o.status == VerifyStatus::Confirmed)
        .count();
    let environment_blocked = outcomes
        .iter()
        .filter(|o| o.status == VerifyStatus::UnsatisfiableEnvironment)
        .count();
    let processed = outcomes
        .iter()
        .filter(|o| {
            matches!(
                o.status,
                VerifyStatus::Confirmed
                    | VerifyStatus::NotReproduced
                    | VerifyStatus::UnsatisfiableEnvironment
            )
        })
        .count();
    let false_positive_suspects = processed - reproduced - environment_blocked;
    VerifySummary {
        detected,
        processed,
        reproduced,
        environment_blocked,
        false_positive_suspects,
        outcomes,
    }
}

/// The summary's aggregate counters as one comparable tuple.
pub fn table_row(summary: &VerifySummary) -> (usize, usize, usize, usize) {
    (
        summary.detected,
        summary.processed,
        summary.reproduced,
        summary.false_positive_suspects,
    )
}
