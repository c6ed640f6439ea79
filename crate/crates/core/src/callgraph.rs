//! Static call graph over an [`App`] with three call-relation kinds:
//!
//! * explicit — a `call` statement, or an async start invoking the
//!   construct's first callback;
//! * implicit — framework-induced chaining: callback chaining inside an
//!   async construct (pre → background → post), handler dispatch from a
//!   component's onCreate to its bound handlers, and fragment-commit
//!   lifecycle chaining into the committed fragment's onCreate;
//! * icc — inter-component transitions from a `start-activity` site to the
//!   target activity's onCreate.
//!
//! Lifecycle edges such as onCreate → onStart are framework transitions, not
//! calls; they stay out of the graph and trace generation treats the entry
//! activity's callbacks as roots instead.

use crate::app_model::{App, CallbackSlot, MethodIdx, Site, StmtIdx, StmtKind};
use serde::Serialize;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CallKind {
    Explicit,
    Implicit,
    Icc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallEdge {
    pub caller: MethodIdx,
    pub callee: MethodIdx,
    pub kind: CallKind,
    /// The statement that induces the edge. Implicit chaining edges carry
    /// the last statement position of the caller as their site.
    pub site: Site,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallGraph {
    pub nodes: BTreeSet<MethodIdx>,
    pub edges: Vec<CallEdge>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CallGraphError {
    #[error("method {0:?} is not a node of the call graph")]
    UnknownMethod(MethodIdx),
}

/// Build the call graph of a validated app. Pure and deterministic: the edge
/// list only depends on declaration order.
pub fn build_call_graph(app: &App) -> CallGraph {
    let mut b = Builder {
        app,
        edges: Vec::new(),
    };

    for (mi, method) in app.methods.iter().enumerate() {
        let caller = MethodIdx(mi as u32);
        for (si, node) in method.body.nodes.iter().enumerate() {
            let site = Site {
                method: caller,
                stmt: StmtIdx(si as u32),
            };
            match node {
                StmtKind::Call { target } => b.edge(caller, *target, CallKind::Explicit, site),
                StmtKind::StartAsync { construct } => {
                    if let Some(first) = app.async_construct(*construct).first_callback() {
                        b.edge(caller, first, CallKind::Explicit, site);
                    }
                }
                StmtKind::StartComponent { target } => {
                    if let Some(&on_create) = app
                        .component(*target)
                        .lifecycle
                        .get(&crate::app_model::LifecycleCallback::OnCreate)
                    {
                        b.edge(caller, on_create, CallKind::Icc, site);
                    }
                }
                StmtKind::FragmentTransaction { target } => {
                    if let Some(&on_create) = app
                        .component(*target)
                        .lifecycle
                        .get(&crate::app_model::LifecycleCallback::OnCreate)
                    {
                        b.edge(caller, on_create, CallKind::Implicit, site);
                    }
                }
                _ => {}
            }
        }
    }

    // Callback chaining inside each construct: pre -> background -> post.
    for a in &app.asyncs {
        let chain = [
            (CallbackSlot::PreExecute, CallbackSlot::Background),
            (CallbackSlot::Background, CallbackSlot::PostExecute),
        ];
        for (from, to) in chain {
            if let (Some(&f), Some(&t)) = (a.callbacks.get(&from), a.callbacks.get(&to)) {
                let site = Site {
                    method: f,
                    stmt: StmtIdx(last_stmt(app, f)),
                };
                b.edge(f, t, CallKind::Implicit, site);
            }
        }
    }

    // Handler dispatch: a component's onCreate reaches every handler bound
    // to one of its widgets. Every started component dispatches its own
    // handlers, not just the entry activity.
    for comp in &app.components {
        let Some(&on_create) = comp
            .lifecycle
            .get(&crate::app_model::LifecycleCallback::OnCreate)
        else {
            continue;
        };
        let site = Site {
            method: on_create,
            stmt: StmtIdx(last_stmt(app, on_create)),
        };
        for binding in &app.handler_bindings {
            if comp.handlers.contains(&binding.method) {
                b.edge(on_create, binding.method, CallKind::Implicit, site);
            }
        }
    }

    let edges = b.edges;
    let nodes = (0..app.methods.len() as u32).map(MethodIdx).collect();
    CallGraph { nodes, edges }
}

struct Builder<'a> {
    app: &'a App,
    edges: Vec<CallEdge>,
}

impl Builder<'_> {
    fn edge(&mut self, caller: MethodIdx, callee: MethodIdx, kind: CallKind, site: Site) {
        let _ = self.app;
        let e = CallEdge {
            caller,
            callee,
            kind,
            site,
        };
        if !self
            .edges
            .iter()
            .any(|o| o.caller == e.caller && o.callee == e.callee && o.site == e.site)
        {
            self.edges.push(e);
        }
    }
}

fn last_stmt(app: &App, m: MethodIdx) -> u32 {
    (app.method(m).body.nodes.len().saturating_sub(1)) as u32
}

/// All edges whose callee is `m`, ordered by caller declaration order then
/// call-site statement index.
pub fn callers_of(cg: &CallGraph, m: MethodIdx) -> Result<Vec<CallEdge>, CallGraphError> {
    if !cg.nodes.contains(&m) {
        return Err(CallGraphError::UnknownMethod(m));
    }
    let mut out: Vec<CallEdge> = cg.edges.iter().filter(|e| e.callee == m).copied().collect();
    out.sort_by_key(|e| (e.caller, e.site.stmt));
    Ok(out)
}

impl CallGraph {
    /// Callees of `m` in edge order.
    pub fn callees_of(&self, m: MethodIdx) -> Vec<CallEdge> {
        self.edges.iter().filter(|e| e.caller == m).copied().collect()
    }

    /// Methods reachable from the given roots over all edge kinds, roots
    /// included.
    pub fn reachable_from(&self, roots: &[MethodIdx]) -> BTreeSet<MethodIdx> {
        let mut seen: BTreeSet<MethodIdx> = roots.iter().copied().collect();
        let mut queue: Vec<MethodIdx> = roots.to_vec();
        while let Some(m) = queue.pop() {
            for e in self.edges.iter().filter(|e| e.caller == m) {
                if seen.insert(e.callee) {
                    queue.push(e.callee);
                }
            }
        }
        seen
    }

    /// Text adjacency list for debugging: `caller -> callee [kind] @site`.
    pub fn dump(&self, app: &App) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&format!(
                "{} -> {} [{}] @{}\n",
                app.method_name(e.caller),
                app.method_name(e.callee),
                match e.kind {
                    CallKind::Explicit => "explicit",
                    CallKind::Implicit => "implicit",
                    CallKind::Icc => "icc",
                },
                e.site.display(app),
            ));
        }
        out
    }
}
