//! Backward trace generation: walks the call graph from a candidate's faulty
//! statement toward the entry activity, forking at fan-in points, bounded by
//! a trace-count and trace-length budget, acyclic by construction.

use crate::app_model::{App, CatchKind, EnvCondition, EnvKind, MethodIdx, Site, StmtKind};
use crate::callgraph::{callers_of, CallEdge, CallGraph};
use crate::fault_detector::ApeCandidate;
use serde::Serialize;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceState {
    Pending,
    Terminated,
    Failed,
}

/// One backward trace. The chain is ordered faulty-method first; the entry
/// side comes last.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub state: TraceState,
    pub ptr_method: MethodIdx,
    pub ptr_stmt: Site,
    pub chain: Vec<MethodIdx>,
    pub conditions: Vec<EnvCondition>,
    pub visited: BTreeSet<MethodIdx>,
    /// The candidate's faulty statement this trace leads to.
    pub origin: Site,
    /// Fault pattern of the originating candidate.
    pub pattern: crate::fault_detector::FaultPattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceLimits {
    pub max_trace_cnt: usize,
    pub max_trace_len: usize,
}

impl Default for TraceLimits {
    fn default() -> Self {
        TraceLimits {
            max_trace_cnt: 10,
            max_trace_len: 20,
        }
    }
}

/// Serializable trace record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub state: TraceState,
    pub chain: Vec<String>,
    pub conditions: Vec<serde_json::Value>,
}

impl Trace {
    fn new(cand: &ApeCandidate) -> Trace {
        Trace {
            state: TraceState::Pending,
            ptr_method: cand.method_access_ui,
            ptr_stmt: cand.stmt_access_ui,
            chain: Vec::new(),
            conditions: Vec::new(),
            visited: BTreeSet::new(),
            origin: cand.stmt_access_ui,
            pattern: cand.pattern,
        }
    }

    /// Event handlers on the chain in execution order (entry side first).
    pub fn handler_projection(&self, app: &App) -> Vec<String> {
        self.chain
            .iter()
            .rev()
            .filter(|&&m| matches!(app.method(m).role, crate::app_model::MethodRole::EventHandler))
            .map(|&m| app.method(m).id.clone())
            .collect()
    }

    pub fn render(&self, app: &App) -> TraceRecord {
        TraceRecord {
            state: self.state,
            chain: self.chain.iter().map(|&m| app.method_name(m)).collect(),
            conditions: self
                .conditions
                .iter()
                .map(|c| serde_json::to_value(RenderedCondition::new(app, c)).unwrap())
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
struct RenderedCondition {
    condition: String,
}

impl RenderedCondition {
    fn new(app: &App, c: &EnvCondition) -> Self {
        RenderedCondition {
            condition: crate::app_model::format_cond(app, c),
        }
    }
}

/// Generate bounded acyclic backward traces for a candidate.
///
/// Traces advance in lockstep rounds. In each round a pending trace queries
/// its acyclic callers: no callers fails the trace, the first caller
/// continues it, and every further caller forks a copy while the total trace
/// count stays below the budget (surplus callers are dropped in caller
/// order). Traces still pending when the length budget is exhausted fail.
pub fn generate_traces(
    app: &App,
    cg: &CallGraph,
    cand: &ApeCandidate,
    limits: &TraceLimits,
) -> Vec<Trace> {
    let mut first = Trace::new(cand);
    update_trace(&mut first, app);
    let mut traces = vec![first];

    while traces.iter().any(|t| t.state == TraceState::Pending) {
        let mut total = traces.len();
        let mut next: Vec<Trace> = Vec::with_capacity(traces.len());
        for mut t in traces {
            if t.state != TraceState::Pending {
                next.push(t);
                continue;
            }
            if t.chain.len() >= limits.max_trace_len {
                t.state = TraceState::Failed;
                next.push(t);
                continue;
            }
            let callers = get_acyclic_callers(&t, cg);
            if callers.is_empty() {
                t.state = TraceState::Failed;
                next.push(t);
                continue;
            }
            let (first_caller, rest) = callers.split_first().unwrap();
            for c in rest {
                if total >= limits.max_trace_cnt {
                    break;
                }
                let mut fork = t.clone();
                fork.ptr_method = c.caller;
                fork.ptr_stmt = c.site;
                update_trace(&mut fork, app);
                next.push(fork);
                total += 1;
            }
            t.ptr_method = first_caller.caller;
            t.ptr_stmt = first_caller.site;
            update_trace(&mut t, app);
            next.push(t);
        }
        traces = next;
    }
    traces
}

/// Immediate callers of the trace pointer, minus already-visited callers.
pub fn get_acyclic_callers(t: &Trace, cg: &CallGraph) -> Vec<CallEdge> {
    callers_of(cg, t.ptr_method)
        .map(|edges| {
            edges
                .into_iter()
                .filter(|e| !t.visited.contains(&e.caller))
                .collect()
        })
        .unwrap_or_default()
}

/// Trace bookkeeping after a pointer move: terminates the trace when the
/// pointer reached a callback of the entry activity, appends the pointer
/// method to the chain and visited set, and records the environment
/// conditions the pointer statement is control-dependent on (branch polarity
/// via the negated flag).
pub fn update_trace(t: &mut Trace, app: &App) {
    debug_assert_eq!(t.ptr_stmt.method, t.ptr_method);
    if app.is_entry_callback(t.ptr_method) {
        t.state = TraceState::Terminated;
    }
    t.chain.push(t.ptr_method);
    t.visited.insert(t.ptr_method);

    let body = &app.method(t.ptr_method).body;
    for (anc, block) in body.ancestry(t.ptr_stmt.stmt) {
        match body.node(anc) {
            StmtKind::EnvIf { cond, .. } => {
                t.conditions
                    .push(if block == 0 { cond.clone() } else { cond.negate() });
            }
            StmtKind::TryCatch { exception, .. } => {
                let kind = match exception {
                    CatchKind::Io => EnvKind::IoAvailable,
                    CatchKind::Storage => EnvKind::StorageAvailable,
                };
                // Body runs when the fault is absent, the handler when it
                // fired.
                t.conditions.push(EnvCondition {
                    kind,
                    negated: block == 1,
                });
            }
            _ => {}
        }
    }
}
