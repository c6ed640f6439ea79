//! Detection, trace generation and scheduled-replay verification of async
//! programming errors (APEs) in a miniature single-GUI-thread app model.
//!
//! The pipeline mirrors how such bugs are hunted in real GUI frameworks:
//!
//! 1. [`app_model`] parses a small line-oriented app description language
//!    (`.ape` files) into an immutable [`App`].
//! 2. [`callgraph`] builds the static call graph with explicit, implicit and
//!    inter-component call edges.
//! 3. [`fault_detector`] scans async-construct callbacks for unguarded
//!    UI-access statements and classifies hits against three fault patterns.
//! 4. [`trace_gen`] walks the call graph backwards from each faulty statement
//!    to the entry activity, producing bounded acyclic method-call traces.
//! 5. [`event_synth`] turns a terminated trace into a concrete user-event
//!    sequence plus the environment (inputs, settings, injected faults) the
//!    trace requires.
//! 6. [`runtime_sim`] is a deterministic executable model of the single
//!    GUI thread: message queue, lifecycle machines, async constructs,
//!    rule-violation exceptions and semaphore-controlled scheduling.
//! 7. [`verifier`] replays the synthesized tests under a barrier schedule and
//!    confirms candidates with crash reports.
//! 8. [`baselines`] re-creates two comparison tools inside the simulator: a
//!    random GUI fuzzer and a happens-before race detector over run logs.
//!
//! [`corpus`] generates small random apps with injected faults for
//! property-style testing of the whole pipeline.

pub mod app_model;
pub mod baselines;
pub mod callgraph;
pub mod corpus;
pub mod diag;
pub mod event_synth;
pub mod fault_detector;
pub mod rng;
pub mod runtime_sim;
pub mod trace_gen;
pub mod verifier;

pub use app_model::{
    parse_app, validate_app, ApiConfig, App, AsyncConstructDecl, AsyncKind, CallbackSlot,
    ComponentDecl, ComponentKind, EnvCondition, EnvKind, GuiObjectDecl, GuiObjectKind,
    InputConstraint, InputFormat, LifecycleCallback, MethodDecl, MethodOwner, MethodRole, Site,
    StmtKind,
};
pub use baselines::{detect_races, fuzz, FuzzResult, RaceReport};
pub use callgraph::{build_call_graph, callers_of, CallEdge, CallGraph, CallKind};
pub use diag::Diagnostic;
pub use event_synth::{infer_environment, synthesize_events, Environment, EventSequence, UiEvent};
pub use fault_detector::{detect_apes, ApeCandidate, FaultPattern};
pub use runtime_sim::{
    explore_all_schedules, instrument, run, BarrierSpec, CrashReport, ExceptionKind, RunOutput,
    Schedule, ScheduleMode, SimResult, ThreadLabel,
};
pub use trace_gen::{generate_traces, Trace, TraceLimits, TraceState};
pub use verifier::{verify, verify_all, TestCase, VerificationOutcome, VerifyStatus, VerifySummary};
