//! Canonical pretty-printer. Printing a parsed app and re-parsing it yields
//! a structurally identical app.

use super::*;
use std::fmt::Write;

pub fn pretty_print(app: &App) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "app {}", app.name);
    let _ = writeln!(w, "entry {}", app.entry().id);

    for (ci, comp) in app.components.iter().enumerate() {
        let ci = CompIdx(ci as u32);
        let _ = writeln!(w);
        match comp.kind {
            ComponentKind::Activity => {
                let _ = writeln!(w, "activity {}", comp.id);
            }
            ComponentKind::Fragment => {
                let host = comp
                    .host
                    .map(|h| app.component(h).id.clone())
                    .unwrap_or_default();
                let _ = writeln!(w, "fragment {} host {}", comp.id, host);
            }
            ComponentKind::Service => {
                let _ = writeln!(w, "service {}", comp.id);
            }
            ComponentKind::Receiver => {
                let _ = writeln!(w, "receiver {}", comp.id);
            }
        }
        for &obj in &comp.gui_objects {
            let g = app.gui_object(obj);
            let _ = writeln!(w, "  gui {} {}", g.kind.keyword(), g.id);
        }
        for &widx in &comp.widgets {
            let wd = app.widget(widx);
            match app.binding_for(widx) {
                Some(b) => {
                    let source = match b.source {
                        BindingSource::Code => "",
                        BindingSource::Layout => " layout",
                    };
                    let _ = writeln!(
                        w,
                        "  bind {} {} {}{}",
                        wd.class.keyword(),
                        wd.id,
                        app.method_name(b.method),
                        source
                    );
                }
                None => {
                    let _ = writeln!(w, "  widget {} {}", wd.class.keyword(), wd.id);
                }
            }
        }
        let _ = ci;
        for (&cb, &m) in &comp.lifecycle {
            let _ = writeln!(w, "  lifecycle {}", cb.name());
            print_block(app, app.method(m), &app.method(m).body.roots, 2, w);
            let _ = writeln!(w, "  end");
        }
        for &m in &comp.handlers {
            let _ = writeln!(w, "  handler {}", app.method(m).id);
            print_block(app, app.method(m), &app.method(m).body.roots, 2, w);
            let _ = writeln!(w, "  end");
        }
        for &m in &comp.plain_methods {
            let _ = writeln!(w, "  method {}", app.method(m).id);
            print_block(app, app.method(m), &app.method(m).body.roots, 2, w);
            let _ = writeln!(w, "  end");
        }
        let _ = writeln!(w, "end");
    }

    for a in &app.asyncs {
        let _ = writeln!(w);
        let _ = writeln!(w, "async {} {}", a.kind.keyword(), a.id);
        for slot in CallbackSlot::ALL {
            if let Some(&m) = a.callbacks.get(&slot) {
                let _ = writeln!(w, "  {}", slot.keyword());
                print_block(app, app.method(m), &app.method(m).body.roots, 2, w);
                let _ = writeln!(w, "  end");
            }
        }
        let _ = writeln!(w, "end");
    }
    out
}

fn indent(w: &mut String, depth: usize) {
    for _ in 0..depth {
        w.push_str("  ");
    }
}

fn print_block(app: &App, method: &MethodDecl, block: &[StmtIdx], depth: usize, w: &mut String) {
    for &s in block {
        print_stmt(app, method, s, depth, w);
    }
}

fn print_stmt(app: &App, method: &MethodDecl, s: StmtIdx, depth: usize, w: &mut String) {
    indent(w, depth);
    match method.body.node(s) {
        StmtKind::Call { target } => {
            let _ = writeln!(w, "call {}", app.method_name(*target));
        }
        StmtKind::StartAsync { construct } => {
            let _ = writeln!(w, "start-async {}", app.async_construct(*construct).id);
        }
        StmtKind::UiAccess { api, target } => {
            let _ = writeln!(w, "ui-access {} {}", api, app.gui_object(*target).id);
        }
        StmtKind::UiCreate { api } => {
            let _ = writeln!(w, "ui-create {}", api);
        }
        StmtKind::PostToUi { body } => {
            let _ = writeln!(w, "post-to-ui");
            print_block(app, method, body, depth + 1, w);
            indent(w, depth);
            let _ = writeln!(w, "end");
        }
        StmtKind::UiSafeCheckIf {
            check,
            then_branch,
            else_branch,
        } => {
            let _ = writeln!(w, "if-ui-safe {}", check);
            print_block(app, method, then_branch, depth + 1, w);
            if !else_branch.is_empty() {
                indent(w, depth);
                let _ = writeln!(w, "else");
                print_block(app, method, else_branch, depth + 1, w);
            }
            indent(w, depth);
            let _ = writeln!(w, "end");
        }
        StmtKind::EnvIf {
            cond,
            then_branch,
            else_branch,
        } => {
            let _ = writeln!(w, "if-env {}", format_cond(app, cond));
            print_block(app, method, then_branch, depth + 1, w);
            if !else_branch.is_empty() {
                indent(w, depth);
                let _ = writeln!(w, "else");
                print_block(app, method, else_branch, depth + 1, w);
            }
            indent(w, depth);
            let _ = writeln!(w, "end");
        }
        StmtKind::TryCatch {
            body,
            exception,
            handler,
        } => {
            let _ = writeln!(w, "try");
            print_block(app, method, body, depth + 1, w);
            indent(w, depth);
            let _ = writeln!(w, "catch {}", exception.keyword());
            print_block(app, method, handler, depth + 1, w);
            indent(w, depth);
            let _ = writeln!(w, "end");
        }
        StmtKind::StartComponent { target } => {
            let _ = writeln!(w, "start-activity {}", app.component(*target).id);
        }
        StmtKind::FragmentTransaction { target } => {
            let _ = writeln!(w, "commit-fragment {}", app.component(*target).id);
        }
        StmtKind::ReadInput { widget } => {
            let _ = writeln!(w, "read-input {}", app.widget(*widget).id);
        }
        StmtKind::Return => {
            let _ = writeln!(w, "return");
        }
        StmtKind::SemWait => {
            let _ = writeln!(w, "sem-wait");
        }
        StmtKind::SemSignal => {
            let _ = writeln!(w, "sem-signal");
        }
    }
}

pub fn format_cond(app: &App, cond: &EnvCondition) -> String {
    let not = if cond.negated { "not " } else { "" };
    match &cond.kind {
        EnvKind::WifiEnabled => format!("{}wifi-enabled", not),
        EnvKind::IoAvailable => format!("{}io-available", not),
        EnvKind::StorageAvailable => format!("{}storage-available", not),
        EnvKind::PermissionGranted { name } => format!("{}permission-granted {}", not, name),
        EnvKind::InputMatches { widget, constraint } => {
            let c = match constraint {
                InputConstraint::Format(f) => format!("format {}", f.keyword()),
                InputConstraint::Equals(v) => format!("equals \"{}\"", v.replace('\\', "\\\\").replace('"', "\\\"")),
                InputConstraint::Contains(ch) => format!("contains {}", ch),
            };
            format!("{}input-matches {} {}", not, app.widget(*widget).id, c)
        }
    }
}
