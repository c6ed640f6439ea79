//! Structural validation of a built [`App`]: every invariant that is not
//! already enforced by the parser's resolution step. Applies equally to
//! parsed and programmatically constructed apps.

use super::*;
use crate::diag::{DiagKind, Diagnostic};

/// Check all structural invariants. An empty result means the app is
/// well-formed and ready for analysis and simulation.
pub fn validate_app(app: &App) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut bad = |msg: String| diags.push(Diagnostic::semantic(DiagKind::InvariantViolation, msg));

    // Entry names exactly one activity.
    if app.entry_activity.idx() >= app.components.len() {
        bad(format!("entry activity index {} out of range", app.entry_activity.0));
    } else if app.entry().kind != ComponentKind::Activity {
        bad(format!("entry component `{}` is not an activity", app.entry().id));
    }

    // Fragments declare a resolving host activity.
    for comp in &app.components {
        match (comp.kind, comp.host) {
            (ComponentKind::Fragment, None) => {
                bad(format!("fragment `{}` has no host activity", comp.id))
            }
            (ComponentKind::Fragment, Some(h)) => {
                if h.idx() >= app.components.len() {
                    bad(format!("fragment `{}` host index out of range", comp.id));
                } else if app.component(h).kind != ComponentKind::Activity {
                    bad(format!(
                        "fragment `{}` host `{}` is not an activity",
                        comp.id,
                        app.component(h).id
                    ));
                }
            }
            (k, Some(_)) if k != ComponentKind::Fragment => {
                bad(format!("component `{}` declares a host but is not a fragment", comp.id))
            }
            _ => {}
        }
    }

    // Widget identifiers in bindings are unique.
    for (i, b) in app.handler_bindings.iter().enumerate() {
        if app.handler_bindings[..i].iter().any(|o| o.widget == b.widget) {
            bad(format!(
                "widget `{}` is bound more than once",
                app.widget(b.widget).id
            ));
        }
    }

    // Async construct slot rules.
    for a in &app.asyncs {
        if !a.callbacks.contains_key(&CallbackSlot::Background) {
            bad(format!("async `{}` declares no background callback", a.id));
        }
        match a.kind {
            AsyncKind::Thread => {
                if a.callbacks.len() != 1 {
                    bad(format!("thread `{}` may only define the background slot", a.id));
                }
            }
            AsyncKind::Loader | AsyncKind::IntentService => {
                if a.callbacks.contains_key(&CallbackSlot::PreExecute) {
                    bad(format!(
                        "{} `{}` may not define a preExecute slot",
                        a.kind.keyword(),
                        a.id
                    ));
                }
            }
            AsyncKind::Task => {}
        }
        if a.lifecycle_aware != (a.kind == AsyncKind::Loader) {
            bad(format!(
                "async `{}` lifecycle-aware flag inconsistent with its kind",
                a.id
            ));
        }
    }

    // No self-respawn: a construct's own callback bodies never start it.
    for (ai, a) in app.asyncs.iter().enumerate() {
        for &m in a.callbacks.values() {
            let body = &app.method(m).body;
            for node in &body.nodes {
                if let StmtKind::StartAsync { construct } = node {
                    if construct.idx() == ai {
                        bad(format!(
                            "async `{}` restarts itself from its own callback `{}`",
                            a.id,
                            app.method_name(m)
                        ));
                    }
                }
            }
        }
    }

    // Api lists pairwise disjoint.
    if let Some((entry, lists)) = app.api_config.overlap() {
        bad(format!("api config entry `{}` appears in {}", entry, lists));
    }

    // Arena cross-references are in range (guards programmatic construction).
    for m in &app.methods {
        for node in &m.body.nodes {
            let ok = match node {
                StmtKind::Call { target } => target.idx() < app.methods.len(),
                StmtKind::StartAsync { construct } => construct.idx() < app.asyncs.len(),
                StmtKind::UiAccess { target, .. } => target.idx() < app.gui_objects.len(),
                StmtKind::StartComponent { target } | StmtKind::FragmentTransaction { target } => {
                    target.idx() < app.components.len()
                }
                StmtKind::ReadInput { widget } => widget.idx() < app.widgets.len(),
                _ => true,
            };
            if !ok {
                bad(format!(
                    "method `{}` references an undeclared identifier",
                    app.method_name_checked(m)
                ));
            }
        }
    }

    diags
}

impl App {
    fn method_name_checked(&self, m: &MethodDecl) -> String {
        let owner = match m.owner {
            MethodOwner::Component(c) if c.idx() < self.components.len() => {
                self.component(c).id.clone()
            }
            MethodOwner::Async(a) if a.idx() < self.asyncs.len() => {
                self.async_construct(a).id.clone()
            }
            _ => "?".to_string(),
        };
        format!("{}.{}", owner, m.id)
    }
}
