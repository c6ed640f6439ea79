//! Static APE detection: scans async-construct callbacks (and their explicit
//! callees) for UI statements that are not control-dependent on a UI-safe
//! guard, then classifies each hit against the three fault patterns.
//!
//! Only async starts reachable from the entry activity are considered, so a
//! construct living in a dead activity never produces a candidate. The
//! callee expansion follows explicit `call` edges only: framework edges
//! (async chaining, handler dispatch, inter-component starts) leave the
//! construct's own execution context and are owned by other scans.

use crate::app_model::{
    App, AsyncIdx, CallbackSlot, MethodIdx, Site, StmtIdx, StmtKind,
};
use crate::callgraph::CallGraph;
use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt;

/// The three fault patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum FaultPattern {
    P1,
    P2,
    P3,
}

impl fmt::Display for FaultPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultPattern::P1 => f.write_str("P1"),
            FaultPattern::P2 => f.write_str("P2"),
            FaultPattern::P3 => f.write_str("P3"),
        }
    }
}

/// A located suspicious APE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApeCandidate {
    /// Method that starts the async construct.
    pub method_start_thread: MethodIdx,
    /// The `start-async` statement.
    pub stmt_start_thread: Site,
    /// Method containing the offending UI statement.
    pub method_access_ui: MethodIdx,
    /// The offending UI statement.
    pub stmt_access_ui: Site,
    pub pattern: FaultPattern,
    pub async_id: AsyncIdx,
    /// Callback slot from which the offending statement is reachable.
    pub slot: CallbackSlot,
}

/// Serializable candidate record with statement sites as `method:index`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CandidateRecord {
    #[serde(rename = "methodStartThread")]
    pub method_start_thread: String,
    #[serde(rename = "stmtStartThread")]
    pub stmt_start_thread: String,
    #[serde(rename = "methodAccessUI")]
    pub method_access_ui: String,
    #[serde(rename = "stmtAccessUI")]
    pub stmt_access_ui: String,
    pub pattern: FaultPattern,
    #[serde(rename = "asyncId")]
    pub async_id: String,
}

impl ApeCandidate {
    pub fn render(&self, app: &App) -> CandidateRecord {
        CandidateRecord {
            method_start_thread: app.method_name(self.method_start_thread),
            stmt_start_thread: self.stmt_start_thread.display(app),
            method_access_ui: app.method_name(self.method_access_ui),
            stmt_access_ui: self.stmt_access_ui.display(app),
            pattern: self.pattern,
            async_id: app.async_construct(self.async_id).id.clone(),
        }
    }
}

/// Locate every suspicious APE in a validated app.
pub fn detect_apes(app: &App, cg: &CallGraph) -> Vec<ApeCandidate> {
    let reachable = cg.reachable_from(&app.entry_roots());
    let mut found = Vec::new();
    let mut seen: BTreeSet<(Site, Site)> = BTreeSet::new();

    for (mi, method) in app.methods.iter().enumerate() {
        let starter = MethodIdx(mi as u32);
        if !reachable.contains(&starter) {
            continue;
        }
        for si in method.body.all_stmts() {
            let StmtKind::StartAsync { construct } = method.body.node(si) else {
                continue;
            };
            let start_site = Site {
                method: starter,
                stmt: si,
            };
            for slot in [CallbackSlot::Background, CallbackSlot::PostExecute] {
                let Some(&cb) = app.async_construct(*construct).callbacks.get(&slot) else {
                    continue;
                };
                for (m, stmt) in unguarded_ui_statements(app, cb, slot) {
                    let cand = ApeCandidate {
                        method_start_thread: starter,
                        stmt_start_thread: start_site,
                        method_access_ui: m,
                        stmt_access_ui: Site { method: m, stmt },
                        pattern: classify_pattern(app, slot, Site { method: m, stmt }),
                        async_id: *construct,
                        slot,
                    };
                    if seen.insert((cand.stmt_start_thread, cand.stmt_access_ui)) {
                        found.push(cand);
                    }
                }
            }
        }
    }
    found
}

/// UI statements reachable from `cb` through at least one fully unguarded
/// call chain, each not itself guarded intra-procedurally. Returned in
/// deterministic (method, statement) discovery order.
fn unguarded_ui_statements(
    app: &App,
    cb: MethodIdx,
    slot: CallbackSlot,
) -> Vec<(MethodIdx, StmtIdx)> {
    let mut hits = Vec::new();
    let mut visited: BTreeSet<MethodIdx> = BTreeSet::new();
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(cb);
    visited.insert(cb);

    while let Some(m) = queue.pop_front() {
        let body = &app.method(m).body;
        for si in body.all_stmts() {
            match body.node(si) {
                node if node.is_ui_statement() => {
                    if !scanned_api(app, node, slot) {
                        continue;
                    }
                    if !intra_guarded(app, m, si) {
                        hits.push((m, si));
                    }
                }
                StmtKind::Call { target }
                    if !intra_guarded(app, m, si) && visited.insert(*target) =>
                {
                    queue.push_back(*target);
                }
                _ => {}
            }
        }
    }
    hits
}

/// Whether the statement's API participates in the scan for this slot:
/// UI-access APIs and fragment transactions are checked in both async-side
/// and post-side slots; UI-create APIs only matter off the UI thread, so
/// they are checked in the background slot alone.
fn scanned_api(app: &App, node: &StmtKind, slot: CallbackSlot) -> bool {
    match node {
        StmtKind::UiAccess { api, .. } => app.api_config.ui_access.contains(api),
        StmtKind::FragmentTransaction { .. } => true,
        StmtKind::UiCreate { api } => {
            slot == CallbackSlot::Background && app.api_config.ui_create.contains(api)
        }
        _ => false,
    }
}

/// Intra-procedural guard check: the statement sits inside the then-branch
/// of a `if-ui-safe` or anywhere inside a `post-to-ui` block.
fn intra_guarded(app: &App, m: MethodIdx, stmt: StmtIdx) -> bool {
    let body = &app.method(m).body;
    body.ancestry(stmt).iter().any(|&(anc, block)| match body.node(anc) {
        StmtKind::PostToUi { .. } => true,
        StmtKind::UiSafeCheckIf { .. } => block == 0,
        _ => false,
    })
}

/// Guard decision for an arbitrary UI statement: guarded intra-procedurally,
/// or every call chain from every async callback into its enclosing method
/// passes through a guarded region.
pub fn is_guarded(app: &App, stmt: Site, _cg: &CallGraph) -> bool {
    if intra_guarded(app, stmt.method, stmt.stmt) {
        return true;
    }
    for a in &app.asyncs {
        for (&slot, &cb) in &a.callbacks {
            if slot == CallbackSlot::PreExecute {
                continue;
            }
            if unguarded_callees(app, cb).contains(&stmt.method) {
                return false;
            }
        }
    }
    true
}

/// Methods reachable from `cb` via at least one chain of unguarded call
/// sites (cb itself included).
fn unguarded_callees(app: &App, cb: MethodIdx) -> BTreeSet<MethodIdx> {
    let mut visited: BTreeSet<MethodIdx> = BTreeSet::new();
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(cb);
    visited.insert(cb);
    while let Some(m) = queue.pop_front() {
        let body = &app.method(m).body;
        for si in body.all_stmts() {
            if let StmtKind::Call { target } = body.node(si) {
                if !intra_guarded(app, m, si) && visited.insert(*target) {
                    queue.push_back(*target);
                }
            }
        }
    }
    visited
}

/// Classify a detected hit. Creation off the looper thread is P2; UI access
/// delivered after the async returns (post slot, runs on the UI thread
/// against possibly stale state) is P3; UI access on the async thread is P1.
pub fn classify_pattern(app: &App, slot: CallbackSlot, stmt: Site) -> FaultPattern {
    let node = app.method(stmt.method).body.node(stmt.stmt);
    match (node, slot) {
        (StmtKind::UiCreate { .. }, _) => FaultPattern::P2,
        (_, CallbackSlot::PostExecute) => FaultPattern::P3,
        (_, CallbackSlot::Background) => FaultPattern::P1,
        (_, CallbackSlot::PreExecute) => {
            unreachable!("preExecute runs synchronously on the UI thread and is never scanned")
        }
    }
}
