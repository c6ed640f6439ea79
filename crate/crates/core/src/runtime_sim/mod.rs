//! Deterministic executable semantics of the single-GUI-thread model: a UI
//! thread with a message queue, activity/fragment lifecycle machines, async
//! construct execution, rule-violation exceptions, environment effects and
//! semaphore-controlled scheduling.
//!
//! The simulator is logically concurrent but physically single-threaded:
//! every "thread" is cooperatively scheduled by an explicit, deterministic
//! scheduler. Identical inputs produce byte-identical results.

pub(crate) mod engine;

pub use engine::Sim;

use crate::app_model::{
    App, AsyncIdx, CallbackSlot, CompIdx, LifecycleCallback, MethodDecl, MethodIdx, MethodOwner,
    MethodRole, ObjIdx, Site, StmtIdx, StmtKind, WidgetIdx,
};
use crate::event_synth::{Environment, UiEvent};
use crate::fault_detector::{ApeCandidate, FaultPattern};
use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt;

/// Scheduling regime for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    /// Each async completes right after the work item that started it.
    Eager,
    /// Instrumented asyncs block at their injected wait until a lifecycle
    /// callback releases them; uninstrumented asyncs behave eagerly.
    Barrier,
    /// Placeholder mode for schedule exploration; a single `run` under this
    /// mode takes the first (eager-like) placement. Use
    /// [`explore_all_schedules`] to enumerate the rest.
    Exhaustive,
}

/// Where instrumentation placed the semaphore pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BarrierSpec {
    /// Method whose body carries the injected wait.
    pub wait_method: String,
    /// Component and lifecycle callback carrying the release.
    pub signal_component: String,
    pub signal_callback: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Schedule {
    pub mode: ScheduleMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub barrier: Option<BarrierSpec>,
}

impl Schedule {
    pub fn eager() -> Schedule {
        Schedule {
            mode: ScheduleMode::Eager,
            barrier: None,
        }
    }

    pub fn barrier(spec: BarrierSpec) -> Schedule {
        Schedule {
            mode: ScheduleMode::Barrier,
            barrier: Some(spec),
        }
    }
}

/// The four modeled fatal exception kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ExceptionKind {
    CalledFromWrongThread,
    IllegalStateException,
    BadTokenException,
    RuntimeExceptionLooper,
}

impl fmt::Display for ExceptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExceptionKind::CalledFromWrongThread => "CalledFromWrongThread",
            ExceptionKind::IllegalStateException => "IllegalStateException",
            ExceptionKind::BadTokenException => "BadTokenException",
            ExceptionKind::RuntimeExceptionLooper => "RuntimeExceptionLooper",
        };
        f.write_str(s)
    }
}

/// Thread identity as reported to users.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ThreadLabel {
    Ui,
    Async(String),
}

impl Serialize for ThreadLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ThreadLabel::Ui => s.serialize_str("ui"),
            ThreadLabel::Async(name) => s.serialize_str(&format!("async:{}", name)),
        }
    }
}

impl fmt::Display for ThreadLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThreadLabel::Ui => f.write_str("ui"),
            ThreadLabel::Async(name) => write!(f, "async:{}", name),
        }
    }
}

/// Outcome of a scheduled replay that violated a rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrashReport {
    pub exception: ExceptionKind,
    pub thread: ThreadLabel,
    /// Executed call chain ending at the faulty statement, outermost first.
    #[serde(rename = "methodChain")]
    pub method_chain: Vec<String>,
    #[serde(rename = "faultySite")]
    pub faulty_site: String,
    #[serde(rename = "eventIndex")]
    pub event_index: usize,
    pub environment: Environment,
    #[serde(skip)]
    pub site: Site,
}

/// In-band failures of a run that are not rule violations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventFaultKind {
    UnknownWidget,
    WidgetNotVisible,
    AppExited,
    AlreadyRunning,
    SpawnLimit,
    CallDepthExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "result")]
pub enum SimResult {
    NormalCompletion,
    Crash(CrashReport),
    EventFault {
        index: usize,
        kind: EventFaultKind,
    },
}

impl SimResult {
    pub fn crash(&self) -> Option<&CrashReport> {
        match self {
            SimResult::Crash(r) => Some(r),
            _ => None,
        }
    }

    pub fn is_normal(&self) -> bool {
        matches!(self, SimResult::NormalCompletion)
    }
}

/// Comparable identity of an outcome, ignoring logs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case", tag = "outcome")]
pub enum OutcomeKey {
    Normal,
    Crash {
        exception: ExceptionKind,
        thread: String,
        site: String,
    },
    EventFault {
        index: usize,
        kind: EventFaultKind,
    },
}

impl OutcomeKey {
    pub fn of(result: &SimResult) -> OutcomeKey {
        match result {
            SimResult::NormalCompletion => OutcomeKey::Normal,
            SimResult::Crash(r) => OutcomeKey::Crash {
                exception: r.exception,
                thread: r.thread.to_string(),
                site: r.faulty_site.clone(),
            },
            SimResult::EventFault { index, kind } => OutcomeKey::EventFault {
                index: *index,
                kind: *kind,
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Access log (consumed by the happens-before race detector)
// ---------------------------------------------------------------------------

/// Logical thread of a logged operation. Delivered async-callback bodies
/// belong to their async instance even though they execute on the UI thread;
/// posted blocks and intent-service deliveries belong to the UI thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogThread {
    Ui,
    Async(usize),
}

/// Shared locations the race detector reasons about. Generations make stale
/// references distinguishable from accesses to a recreated instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Location {
    Gui { obj: ObjIdx, generation: u32 },
    ComponentLive { comp: CompIdx, generation: u32 },
    WidgetText { widget: WidgetIdx },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccessRecord {
    pub seq: u64,
    pub thread: LogThread,
    pub thread_label: ThreadLabel,
    pub method: Option<MethodIdx>,
    pub site: Option<Site>,
    pub location: Location,
    pub is_write: bool,
}

/// Entries of one run's access log, in observed order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "entry")]
pub enum LogEntry {
    Access(AccessRecord),
    /// An async instance was started by `parent` (ordered after everything
    /// `parent` did so far).
    Spawn {
        seq: u64,
        parent: LogThread,
        child: LogThread,
    },
    /// Semaphore release.
    Signal { seq: u64, thread: LogThread },
    /// Semaphore wait that passed.
    WaitPass { seq: u64, thread: LogThread },
}

impl LogEntry {
    pub fn seq(&self) -> u64 {
        match self {
            LogEntry::Access(a) => a.seq,
            LogEntry::Spawn { seq, .. }
            | LogEntry::Signal { seq, .. }
            | LogEntry::WaitPass { seq, .. } => *seq,
        }
    }
}

/// Everything one run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub result: SimResult,
    /// Methods in execution order, app-wide names.
    pub method_log: Vec<String>,
    pub executed_methods: BTreeSet<MethodIdx>,
    /// Human-readable log, one line per dispatched work item or callback.
    pub exec_log: Vec<String>,
    pub access_log: Vec<LogEntry>,
    pub ticks: u64,
}

/// Run an app on an event sequence in the given environment under the given
/// schedule. Pure function of its inputs.
pub fn run(app: &App, events: &[UiEvent], env: &Environment, sched: &Schedule) -> RunOutput {
    let policy = match sched.mode {
        ScheduleMode::Eager | ScheduleMode::Exhaustive => engine::Policy::Eager,
        ScheduleMode::Barrier => engine::Policy::Barrier,
    };
    let mut sim = Sim::new(app, env.clone(), policy, events.len());
    for (i, ev) in events.iter().enumerate() {
        if !sim.can_continue() {
            break;
        }
        sim.dispatch(i, ev);
    }
    sim.finish()
}

// ---------------------------------------------------------------------------
// Schedule exploration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ExploredRun {
    /// Completion slot chosen for each async instance in spawn order.
    pub choices: Vec<usize>,
    pub output: RunOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exploration {
    pub outcomes: BTreeSet<OutcomeKey>,
    pub runs: Vec<ExploredRun>,
    /// True when the interleaving budget was exhausted before the space.
    pub truncated: bool,
}

/// Deterministically enumerate all placements of each async completion
/// relative to subsequent UI events, up to `bound` distinct runs.
pub fn explore_all_schedules(
    app: &App,
    events: &[UiEvent],
    env: &Environment,
    bound: usize,
) -> Exploration {
    let mut exploration = Exploration {
        outcomes: BTreeSet::new(),
        runs: Vec::new(),
        truncated: false,
    };
    let mut pending: Vec<Vec<usize>> = vec![Vec::new()];

    while let Some(prefix) = pending.pop() {
        if exploration.runs.len() >= bound {
            exploration.truncated = true;
            break;
        }
        let mut sim = Sim::new(
            app,
            env.clone(),
            engine::Policy::Scripted {
                script: prefix.clone(),
                decisions: Vec::new(),
            },
            events.len(),
        );
        for (i, ev) in events.iter().enumerate() {
            if !sim.can_continue() {
                break;
            }
            sim.dispatch(i, ev);
        }
        let decisions = sim.decisions();
        let output = sim.finish();

        // Queue unexplored siblings: for every decision level beyond the
        // fixed prefix, every alternative slot after the default taken.
        for level in prefix.len()..decisions.len() {
            let (taken, _min, max) = decisions[level];
            let mut base: Vec<usize> = decisions[..level].iter().map(|d| d.0).collect();
            for alt in (taken + 1)..=max {
                base.push(alt);
                pending.push(base.clone());
                base.pop();
            }
        }

        exploration.outcomes.insert(OutcomeKey::of(&output.result));
        exploration.runs.push(ExploredRun {
            choices: decisions.iter().map(|d| d.0).collect(),
            output,
        });
    }
    exploration
}

// ---------------------------------------------------------------------------
// Instrumentation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Instrumented {
    pub app: App,
    pub barrier: BarrierSpec,
}

/// Copy the app and insert the semaphore pair manifesting a candidate:
///
/// * wait — appended at the end of the construct's background body for P3,
///   or immediately before the faulty statement for P1/P2 (falling back to
///   the start of the background body when the statement is not present,
///   e.g. when instrumenting a remediated twin of the app);
/// * release — at the start of the owning component's onDestroy for
///   destroy-flavored P3, onStop for state-loss P3 (fragment transactions),
///   and onResume for P1/P2.
///
/// Existing statement indices are never renumbered, so crash sites of the
/// instrumented app align with candidate sites of the original.
pub fn instrument(app: &App, cand: &ApeCandidate) -> Instrumented {
    let mut app = app.clone();
    let construct = cand.async_id;

    // Wait site.
    let bg = app
        .async_construct(construct)
        .callbacks
        .get(&CallbackSlot::Background)
        .copied();
    let wait_method = match cand.pattern {
        FaultPattern::P3 => {
            let m = bg.expect("validated constructs declare a background slot");
            guard_method_exits(&mut app, m);
            m
        }
        FaultPattern::P1 | FaultPattern::P2 => {
            let m = cand.stmt_access_ui.method;
            if insert_before(&mut app, m, cand.stmt_access_ui.stmt, StmtKind::SemWait) {
                m
            } else {
                let m = bg.expect("validated constructs declare a background slot");
                prepend_stmt(&mut app, m, StmtKind::SemWait);
                m
            }
        }
    };

    // Release site: lifecycle callback of the component owning the starter.
    let target_comp = match app.method(cand.method_start_thread).owner {
        MethodOwner::Component(c) => c,
        MethodOwner::Async(_) => app.entry_activity,
    };
    let callback = match cand.pattern {
        FaultPattern::P3 => {
            let node = app
                .method(cand.stmt_access_ui.method)
                .body
                .node(cand.stmt_access_ui.stmt)
                .clone();
            if matches!(node, StmtKind::FragmentTransaction { .. }) {
                LifecycleCallback::OnStop
            } else {
                LifecycleCallback::OnDestroy
            }
        }
        FaultPattern::P1 | FaultPattern::P2 => LifecycleCallback::OnResume,
    };
    insert_signal(&mut app, target_comp, callback);

    let barrier = BarrierSpec {
        wait_method: app.method_name(wait_method),
        signal_component: app.component(target_comp).id.clone(),
        signal_callback: callback.name().to_string(),
    };
    Instrumented { app, barrier }
}

fn append_stmt(app: &mut App, m: MethodIdx, stmt: StmtKind) {
    let body = &mut app.methods[m.idx()].body;
    let idx = StmtIdx(body.nodes.len() as u32);
    body.nodes.push(stmt);
    body.roots.push(idx);
}

/// Place a wait at the end of the method: before every `return` at any
/// nesting depth plus at the end of the fall-through path, so the method
/// cannot finish without passing the barrier.
fn guard_method_exits(app: &mut App, m: MethodIdx) {
    let returns: Vec<StmtIdx> = app.methods[m.idx()]
        .body
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, node)| matches!(node, StmtKind::Return))
        .map(|(i, _)| StmtIdx(i as u32))
        .collect();
    for ret in returns {
        insert_before_any(app, m, ret, StmtKind::SemWait);
    }
    append_stmt(app, m, StmtKind::SemWait);
}

fn prepend_stmt(app: &mut App, m: MethodIdx, stmt: StmtKind) {
    let body = &mut app.methods[m.idx()].body;
    let idx = StmtIdx(body.nodes.len() as u32);
    body.nodes.push(stmt);
    body.roots.insert(0, idx);
}

/// Insert `stmt` immediately before the UI statement `before`. Returns
/// false when that statement does not exist in this app (instrumenting a
/// remediated twin whose indices drifted).
fn insert_before(app: &mut App, m: MethodIdx, before: StmtIdx, stmt: StmtKind) -> bool {
    if m.idx() >= app.methods.len()
        || before.idx() >= app.methods[m.idx()].body.nodes.len()
        || !app.methods[m.idx()].body.nodes[before.idx()].is_ui_statement()
    {
        return false;
    }
    insert_before_any(app, m, before, stmt)
}

/// Insert `stmt` immediately before `before` in its enclosing block.
fn insert_before_any(app: &mut App, m: MethodIdx, before: StmtIdx, stmt: StmtKind) -> bool {
    let body = &mut app.methods[m.idx()].body;
    let new_idx = StmtIdx(body.nodes.len() as u32);
    let ancestry = body.ancestry(before);
    body.nodes.push(stmt);
    let body = &mut app.methods[m.idx()].body;
    match ancestry.last().copied() {
        None => {
            let pos = body.roots.iter().position(|&s| s == before).unwrap();
            body.roots.insert(pos, new_idx);
        }
        Some((parent, block)) => {
            let pos;
            {
                let blocks = body.nodes[parent.idx()].child_blocks();
                pos = blocks[block].iter().position(|&s| s == before).unwrap();
            }
            match &mut body.nodes[parent.idx()] {
                StmtKind::PostToUi { body: b } => b.insert(pos, new_idx),
                StmtKind::UiSafeCheckIf {
                    then_branch,
                    else_branch,
                    ..
                }
                | StmtKind::EnvIf {
                    then_branch,
                    else_branch,
                    ..
                } => {
                    if block == 0 {
                        then_branch.insert(pos, new_idx)
                    } else {
                        else_branch.insert(pos, new_idx)
                    }
                }
                StmtKind::TryCatch { body: b, handler, .. } => {
                    if block == 0 {
                        b.insert(pos, new_idx)
                    } else {
                        handler.insert(pos, new_idx)
                    }
                }
                _ => return false,
            }
        }
    }
    true
}

/// Prepend a semaphore release to the component's lifecycle callback,
/// synthesizing an empty callback when the component does not declare it.
fn insert_signal(app: &mut App, comp: CompIdx, cb: LifecycleCallback) {
    if let Some(&m) = app.component(comp).lifecycle.get(&cb) {
        prepend_stmt(app, m, StmtKind::SemSignal);
        return;
    }
    let m = MethodIdx(app.methods.len() as u32);
    let mut body = crate::app_model::MethodBody::default();
    body.nodes.push(StmtKind::SemSignal);
    body.roots.push(StmtIdx(0));
    app.methods.push(MethodDecl {
        id: cb.name().to_string(),
        owner: MethodOwner::Component(comp),
        role: MethodRole::LifecycleCallback(cb),
        body,
    });
    app.components[comp.idx()].lifecycle.insert(cb, m);
}

/// Async construct identity helper used by reports.
pub(crate) fn async_label(app: &App, a: AsyncIdx) -> ThreadLabel {
    ThreadLabel::Async(app.async_construct(a).id.clone())
}
