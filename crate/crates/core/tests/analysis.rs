mod common;

use apechk_core::app_model::{
    App, AsyncKind, CallbackSlot, EnvKind, GuiObjectKind, LifecycleCallback, MethodIdx, StmtKind,
    WidgetClass,
};
use apechk_core::callgraph::{build_call_graph, callers_of, CallGraph, CallKind};
use apechk_core::corpus::{Builder, MethodBodyBuilder};
use apechk_core::event_synth::{infer_environment, synthesize_events, InjectedFault, UiEvent};
use apechk_core::fault_detector::{detect_apes, is_guarded, FaultPattern};
use apechk_core::trace_gen::{generate_traces, get_acyclic_callers, TraceLimits, TraceState};
use common::fixture;

fn names(app: &App, methods: &[MethodIdx]) -> Vec<String> {
    methods.iter().map(|&m| app.method_name(m)).collect()
}

// ---------------------------------------------------------------------------
// Call graph
// ---------------------------------------------------------------------------

#[test]
fn adsdroid_has_the_three_call_relation_kinds() {
    let app = fixture("adsdroid.ape");
    let cg = build_call_graph(&app);
    let edge = |caller: &str, callee: &str| -> CallKind {
        let c = app.resolve_method(caller).unwrap();
        let e = app.resolve_method(callee).unwrap();
        cg.edges
            .iter()
            .find(|x| x.caller == c && x.callee == e)
            .unwrap_or_else(|| panic!("missing edge {} -> {}", caller, callee))
            .kind
    };
    // Implicit chaining inside the construct.
    assert_eq!(
        edge("SearchByPartName.background", "SearchByPartName.postExecute"),
        CallKind::Implicit
    );
    // Inter-component transition to the started activity's onCreate.
    assert_eq!(
        edge("SearchByPartName.postExecute", "PartList.onCreate"),
        CallKind::Icc
    );
    // The async start is an explicit edge to the first callback.
    assert_eq!(
        edge("searchByPartName", "SearchByPartName.preExecute"),
        CallKind::Explicit
    );
    // Handler dispatch from the owning component's onCreate.
    assert_eq!(edge("PartList.onCreate", "onListItemClick"), CallKind::Implicit);
}

#[test]
fn single_empty_method_yields_no_edges() {
    let mut b = Builder::new("empty");
    let main = b.activity("Main");
    b.lifecycle(main, LifecycleCallback::OnCreate, MethodBodyBuilder::default());
    let app = b.finish(main);
    let cg = build_call_graph(&app);
    assert_eq!(cg.nodes.len(), 1);
    assert!(cg.edges.is_empty());
}

/// Three-method chain a -> b -> c, callers enumerated by hand.
#[test]
fn callers_of_linear_chain() {
    let mut b = Builder::new("chain");
    let main = b.activity("Main");
    b.lifecycle(main, LifecycleCallback::OnCreate, MethodBodyBuilder::default());
    let c = b.plain_method(main, "c", MethodBodyBuilder::default());
    let mut b_body = MethodBodyBuilder::default();
    b_body.leaf(StmtKind::Call { target: c });
    let bm = b.plain_method(main, "b", b_body);
    let mut a_body = MethodBodyBuilder::default();
    a_body.leaf(StmtKind::Call { target: bm });
    let am = b.handler(main, "a", a_body);
    let app = b.finish(main);
    let cg = build_call_graph(&app);

    let callers_c = callers_of(&cg, c).unwrap();
    assert_eq!(callers_c.len(), 1);
    assert_eq!(callers_c[0].caller, bm);
    let callers_b = callers_of(&cg, bm).unwrap();
    assert_eq!(callers_b.len(), 1);
    assert_eq!(callers_b[0].caller, am);
    assert!(callers_of(&cg, am).unwrap().is_empty());
    assert!(callers_of(&cg, MethodIdx(99)).is_err());
}

#[test]
fn entry_on_create_has_no_callers() {
    let app = fixture("adsdroid.ape");
    let cg = build_call_graph(&app);
    let on_create = app.resolve_method("SearchPanel.onCreate").unwrap();
    assert!(callers_of(&cg, on_create).unwrap().is_empty());
}

#[test]
fn call_graph_is_deterministic() {
    let app = fixture("adsdroid.ape");
    assert_eq!(build_call_graph(&app), build_call_graph(&app));
}

// ---------------------------------------------------------------------------
// Fault detection
// ---------------------------------------------------------------------------

#[test]
fn adsdroid_detects_exactly_two_p3_candidates() {
    let app = fixture("adsdroid.ape");
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    assert_eq!(cands.len(), 2);
    assert!(cands.iter().all(|c| c.pattern == FaultPattern::P3));
    let sites: Vec<String> = cands
        .iter()
        .map(|c| c.stmt_access_ui.display(&app))
        .collect();
    assert_eq!(
        sites,
        vec![
            "SearchByPartName.postExecute:0",
            "DownloadDatasheet.postExecute:0"
        ]
    );
}

#[test]
fn pedometer_detects_one_p1_candidate() {
    let app = fixture("pedometer.ape");
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    assert_eq!(cands.len(), 1);
    assert_eq!(cands[0].pattern, FaultPattern::P1);
    assert_eq!(
        app.async_construct(cands[0].async_id).id,
        "GenerateReport"
    );
}

#[test]
fn gisapp_detects_one_p2_candidate() {
    let app = fixture("gisapp.ape");
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    assert_eq!(cands.len(), 1);
    assert_eq!(cands[0].pattern, FaultPattern::P2);
}

#[test]
fn guarded_and_posted_twins_are_clean() {
    for name in common::COMPLIANT_FIXTURES {
        let app = fixture(name);
        let cg = build_call_graph(&app);
        assert!(detect_apes(&app, &cg).is_empty(), "{} produced candidates", name);
    }
}

#[test]
fn unreachable_async_start_is_ignored() {
    // A second activity never started by anything hosts the same fault.
    let mut b = Builder::new("dead");
    let main = b.activity("Main");
    let dead = b.activity("Dead");
    let dlg = b.gui(dead, GuiObjectKind::Dialog, "dlg");
    let (_, job) = b.async_construct("Job", AsyncKind::Task);
    b.callback(job, CallbackSlot::Background, MethodBodyBuilder::default());
    let mut post = MethodBodyBuilder::default();
    post.leaf(StmtKind::UiAccess {
        api: "dialog.dismiss".into(),
        target: dlg,
    });
    b.callback(job, CallbackSlot::PostExecute, post);
    let mut dead_oncreate = MethodBodyBuilder::default();
    dead_oncreate.leaf(StmtKind::StartAsync { construct: job });
    b.lifecycle(dead, LifecycleCallback::OnCreate, dead_oncreate);
    b.lifecycle(main, LifecycleCallback::OnCreate, MethodBodyBuilder::default());
    let app = b.finish(main);
    let cg = build_call_graph(&app);
    assert!(detect_apes(&app, &cg).is_empty());
}

#[test]
fn guard_on_else_branch_does_not_count() {
    // dismiss in the else branch of the liveness check is still suspicious.
    let mut b = Builder::new("elsebranch");
    let main = b.activity("Main");
    let dlg = b.gui(main, GuiObjectKind::Dialog, "dlg");
    let w = b.widget(main, WidgetClass::Button, "go");
    let (_, job) = b.async_construct("Job", AsyncKind::Task);
    b.callback(job, CallbackSlot::Background, MethodBodyBuilder::default());
    let mut post = MethodBodyBuilder::default();
    // if-ui-safe ... else { dismiss }: build manually.
    post.block_safe("activity.isFinishing", vec![]);
    let mut h_body = MethodBodyBuilder::default();
    h_body.leaf(StmtKind::StartAsync { construct: job });
    let h = b.handler(main, "go", h_body);
    b.bind(w, h, apechk_core::app_model::BindingSource::Code);
    b.callback(job, CallbackSlot::PostExecute, post);
    let mut app = b.finish(main);
    // Move a dismiss into the else branch of the guard.
    let post_m = app.resolve_method("Job.postExecute").unwrap();
    let body = &mut app.methods[post_m.idx()].body;
    let dismiss = apechk_core::app_model::StmtIdx(body.nodes.len() as u32);
    body.nodes.push(StmtKind::UiAccess {
        api: "dialog.dismiss".into(),
        target: dlg,
    });
    if let StmtKind::UiSafeCheckIf { else_branch, .. } = &mut body.nodes[0] {
        else_branch.push(dismiss);
    } else {
        panic!("expected guard at root");
    }
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    assert_eq!(cands.len(), 1);
    assert_eq!(cands[0].pattern, FaultPattern::P3);
}

#[test]
fn inter_procedural_guard_requires_all_chains_guarded() {
    // Helper with the dismiss is called unguarded from background and
    // guarded from postExecute: one unguarded chain keeps it suspicious.
    let mut b = Builder::new("mixed");
    let main = b.activity("Main");
    let dlg = b.gui(main, GuiObjectKind::Dialog, "dlg");
    let w = b.widget(main, WidgetClass::Button, "go");
    let (_, job) = b.async_construct("Job", AsyncKind::Task);
    let mut helper_body = MethodBodyBuilder::default();
    helper_body.leaf(StmtKind::UiAccess {
        api: "dialog.dismiss".into(),
        target: dlg,
    });
    let helper = b.plain_method(main, "closeHelper", helper_body);
    let mut bg = MethodBodyBuilder::default();
    bg.leaf(StmtKind::Call { target: helper });
    b.callback(job, CallbackSlot::Background, bg);
    let mut post = MethodBodyBuilder::default();
    post.block_post(vec![StmtKind::Call { target: helper }]);
    b.callback(job, CallbackSlot::PostExecute, post);
    let mut h_body = MethodBodyBuilder::default();
    h_body.leaf(StmtKind::StartAsync { construct: job });
    let h = b.handler(main, "go", h_body);
    b.bind(w, h, apechk_core::app_model::BindingSource::Code);
    let app = b.finish(main);
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    // Found once via the unguarded background chain.
    assert_eq!(cands.len(), 1);
    assert_eq!(cands[0].pattern, FaultPattern::P1);
    assert_eq!(app.method_name(cands[0].method_access_ui), "Main.closeHelper");
}

#[test]
fn is_guarded_matches_the_three_shapes() {
    // Guarded: dismiss inside the then branch of the liveness check.
    let app = fixture("adsdroid_guarded.ape");
    let cg = build_call_graph(&app);
    let post = app.resolve_method("SearchByPartName.postExecute").unwrap();
    let dismiss = apechk_core::app_model::Site {
        method: post,
        stmt: apechk_core::app_model::StmtIdx(1),
    };
    assert!(matches!(
        app.method(post).body.node(dismiss.stmt),
        StmtKind::UiAccess { .. }
    ));
    assert!(is_guarded(&app, dismiss, &cg));

    // Unguarded: dismiss directly in postExecute.
    let app = fixture("adsdroid.ape");
    let cg = build_call_graph(&app);
    let post = app.resolve_method("SearchByPartName.postExecute").unwrap();
    let dismiss = apechk_core::app_model::Site {
        method: post,
        stmt: apechk_core::app_model::StmtIdx(0),
    };
    assert!(!is_guarded(&app, dismiss, &cg));

    // Guarded: access posted to the looper from a thread background.
    let app = fixture("pedometer_posted.ape");
    let cg = build_call_graph(&app);
    let bg = app.resolve_method("GenerateReport.background").unwrap();
    let access = apechk_core::app_model::Site {
        method: bg,
        stmt: apechk_core::app_model::StmtIdx(1),
    };
    assert!(matches!(
        app.method(bg).body.node(access.stmt),
        StmtKind::UiAccess { .. }
    ));
    assert!(is_guarded(&app, access, &cg));
}

#[test]
fn every_candidate_has_a_callback_path_witness() {
    // A chain of explicit calls connects the scanned slot callback to the
    // method holding the offending statement.
    let mut apps: Vec<App> = vec![
        fixture("adsdroid.ape"),
        fixture("pedometer.ape"),
        fixture("gisapp.ape"),
        fixture("fanin.ape"),
    ];
    apps.extend((0..20).map(apechk_core::corpus::generate_app));
    for app in &apps {
        let cg = build_call_graph(app);
        for cand in detect_apes(app, &cg) {
            let cb = *app
                .async_construct(cand.async_id)
                .callbacks
                .get(&cand.slot)
                .expect("scanned slot is declared");
            let mut seen = std::collections::BTreeSet::from([cb]);
            let mut queue = vec![cb];
            while let Some(m) = queue.pop() {
                for e in cg.callees_of(m) {
                    if e.kind == CallKind::Explicit
                        && !matches!(
                            app.method(e.caller).body.node(e.site.stmt),
                            StmtKind::StartAsync { .. }
                        )
                        && seen.insert(e.callee)
                    {
                        queue.push(e.callee);
                    }
                }
            }
            assert!(
                seen.contains(&cand.method_access_ui),
                "{}: no call path from {} to {}",
                app.name,
                app.method_name(cb),
                app.method_name(cand.method_access_ui)
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Trace generation
// ---------------------------------------------------------------------------

/// Brute-force oracle: every acyclic backward path from a method to the
/// first entry-activity callback it reaches.
fn enumerate_acyclic_chains(app: &App, cg: &CallGraph, from: MethodIdx) -> Vec<Vec<MethodIdx>> {
    fn go(
        app: &App,
        cg: &CallGraph,
        m: MethodIdx,
        chain: &mut Vec<MethodIdx>,
        out: &mut Vec<Vec<MethodIdx>>,
    ) {
        chain.push(m);
        if app.is_entry_callback(m) {
            out.push(chain.clone());
            chain.pop();
            return;
        }
        for e in callers_of(cg, m).unwrap() {
            if !chain.contains(&e.caller) {
                go(app, cg, e.caller, chain, out);
            }
        }
        chain.pop();
    }
    let mut out = Vec::new();
    go(app, cg, from, &mut Vec::new(), &mut out);
    out
}

fn diamond_app() -> App {
    let mut b = Builder::new("diamond");
    let main = b.activity("Main");
    let dlg = b.gui(main, GuiObjectKind::Dialog, "dlg");
    let w1 = b.widget(main, WidgetClass::Button, "left");
    let w2 = b.widget(main, WidgetClass::Button, "right");
    let (_, job) = b.async_construct("Job", AsyncKind::Task);
    b.callback(job, CallbackSlot::Background, MethodBodyBuilder::default());
    let mut post = MethodBodyBuilder::default();
    post.leaf(StmtKind::UiAccess {
        api: "dialog.dismiss".into(),
        target: dlg,
    });
    b.callback(job, CallbackSlot::PostExecute, post);
    let mut shared = MethodBodyBuilder::default();
    shared.leaf(StmtKind::StartAsync { construct: job });
    let shared = b.plain_method(main, "shared", shared);
    let mut h1 = MethodBodyBuilder::default();
    h1.leaf(StmtKind::Call { target: shared });
    let h1 = b.handler(main, "leftTap", h1);
    let mut h2 = MethodBodyBuilder::default();
    h2.leaf(StmtKind::Call { target: shared });
    let h2 = b.handler(main, "rightTap", h2);
    b.bind(w1, h1, apechk_core::app_model::BindingSource::Code);
    b.bind(w2, h2, apechk_core::app_model::BindingSource::Code);
    b.lifecycle(main, LifecycleCallback::OnCreate, MethodBodyBuilder::default());
    b.finish(main)
}

#[test]
fn diamond_yields_exactly_the_enumerated_terminated_traces() {
    let app = diamond_app();
    assert!(apechk_core::app_model::validate_app(&app).is_empty());
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    assert_eq!(cands.len(), 1);
    let traces = generate_traces(&app, &cg, &cands[0], &TraceLimits::default());
    let mut got: Vec<Vec<String>> = traces
        .iter()
        .filter(|t| t.state == TraceState::Terminated)
        .map(|t| names(&app, &t.chain))
        .collect();
    got.sort();
    let mut expected: Vec<Vec<String>> =
        enumerate_acyclic_chains(&app, &cg, cands[0].method_access_ui)
            .into_iter()
            .map(|chain| names(&app, &chain))
            .collect();
    expected.sort();
    assert_eq!(got.len(), 2);
    assert_eq!(got, expected);
}

#[test]
fn adsdroid_search_trace_projection_matches() {
    let app = fixture("adsdroid.ape");
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    let traces = generate_traces(&app, &cg, &cands[0], &TraceLimits::default());
    let terminated: Vec<_> = traces
        .iter()
        .filter(|t| t.state == TraceState::Terminated)
        .collect();
    assert_eq!(terminated.len(), 1);
    assert_eq!(
        terminated[0].handler_projection(&app),
        vec!["searchByPartName"]
    );

    // The download-dialog candidate walks through the icc edge.
    let traces = generate_traces(&app, &cg, &cands[1], &TraceLimits::default());
    let terminated: Vec<_> = traces
        .iter()
        .filter(|t| t.state == TraceState::Terminated)
        .collect();
    assert_eq!(terminated.len(), 1);
    assert_eq!(
        terminated[0].handler_projection(&app),
        vec!["searchByPartName", "onListItemClick"]
    );
}

#[test]
fn fanin_respects_trace_count_and_length_limits() {
    let app = fixture("fanin.ape");
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    assert_eq!(cands.len(), 1);
    let limits = TraceLimits::default();
    let traces = generate_traces(&app, &cg, &cands[0], &limits);
    assert_eq!(traces.len(), 10);
    assert!(traces.iter().all(|t| t.state == TraceState::Terminated));
    assert!(traces.iter().all(|t| t.chain.len() <= limits.max_trace_len));
}

#[test]
fn fork_count_matches_fanout_under_the_cap() {
    let app = diamond_app();
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    let traces = generate_traces(&app, &cg, &cands[0], &TraceLimits::default());
    // One initial trace, one fork at the two-caller step.
    assert_eq!(traces.len(), 2);
}

#[test]
fn mutual_recursion_stays_acyclic() {
    // a <-> b, a also called by a handler; backward from a.
    let mut b = Builder::new("cycle");
    let main = b.activity("Main");
    let w = b.widget(main, WidgetClass::Button, "go");
    let dlg = b.gui(main, GuiObjectKind::Dialog, "dlg");
    let (_, job) = b.async_construct("Job", AsyncKind::Task);
    // Forward declare bodies with placeholder, then patch calls.
    let mut fa = MethodBodyBuilder::default();
    fa.leaf(StmtKind::Return);
    let ma = b.plain_method(main, "a", fa);
    let mut fb = MethodBodyBuilder::default();
    fb.leaf(StmtKind::Call { target: ma });
    let mb = b.plain_method(main, "b", fb);
    let mut bg = MethodBodyBuilder::default();
    bg.leaf(StmtKind::Return);
    b.callback(job, CallbackSlot::Background, bg);
    let mut post = MethodBodyBuilder::default();
    post.leaf(StmtKind::UiAccess {
        api: "dialog.dismiss".into(),
        target: dlg,
    });
    b.callback(job, CallbackSlot::PostExecute, post);
    let mut h = MethodBodyBuilder::default();
    h.leaf(StmtKind::Call { target: ma });
    let hm = b.handler(main, "go", h);
    b.bind(w, hm, apechk_core::app_model::BindingSource::Code);
    let mut app = b.finish(main);
    // Patch a's body: call b and start the async.
    let body = &mut app.methods[ma.idx()].body;
    body.nodes[0] = StmtKind::Call { target: mb };
    let start = apechk_core::app_model::StmtIdx(1);
    body.nodes.push(StmtKind::StartAsync { construct: job });
    body.roots.push(start);
    assert!(apechk_core::app_model::validate_app(&app).is_empty());

    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    assert_eq!(cands.len(), 1);
    let traces = generate_traces(&app, &cg, &cands[0], &TraceLimits::default());
    for t in &traces {
        let mut sorted = t.chain.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), t.chain.len(), "chain repeats a method");
    }
    // The terminated trace goes post -> bg -> a -> handler; the a <-> b
    // cycle never loops.
    assert!(traces.iter().any(|t| t.state == TraceState::Terminated));

    // Spot-check the acyclic caller query itself on the cycle.
    let pending = traces
        .iter()
        .find(|t| t.visited.contains(&ma))
        .expect("some trace visited a");
    let callers = get_acyclic_callers(pending, &cg);
    assert!(callers.iter().all(|e| !pending.visited.contains(&e.caller)));
}

// ---------------------------------------------------------------------------
// Event and environment synthesis
// ---------------------------------------------------------------------------

#[test]
fn adsdroid_event_sequences() {
    let app = fixture("adsdroid.ape");
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    let limits = TraceLimits::default();

    let traces = generate_traces(&app, &cg, &cands[0], &limits);
    let t = traces
        .iter()
        .find(|t| t.state == TraceState::Terminated)
        .unwrap();
    let seq = synthesize_events(t, &app).unwrap();
    assert_eq!(
        seq.events,
        vec![
            UiEvent::Launch,
            UiEvent::Click {
                widget: "searchButton".into()
            },
            UiEvent::Rotate
        ]
    );

    let traces = generate_traces(&app, &cg, &cands[1], &limits);
    let t = traces
        .iter()
        .find(|t| t.state == TraceState::Terminated)
        .unwrap();
    let seq = synthesize_events(t, &app).unwrap();
    assert_eq!(
        seq.events,
        vec![
            UiEvent::Launch,
            UiEvent::Click {
                widget: "searchButton".into()
            },
            UiEvent::ListItemClick {
                widget: "resultList".into(),
                item: 0
            },
            UiEvent::Rotate
        ]
    );
}

#[test]
fn launch_only_trace_maps_to_launch_alone() {
    let app = fixture("pedometer.ape");
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    let traces = generate_traces(&app, &cg, &cands[0], &TraceLimits::default());
    let t = traces
        .iter()
        .find(|t| t.state == TraceState::Terminated)
        .unwrap();
    let seq = synthesize_events(t, &app).unwrap();
    assert_eq!(seq.events, vec![UiEvent::Launch]);
}

#[test]
fn gisapp_environment_injects_storage_fault() {
    let app = fixture("gisapp.ape");
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    let traces = generate_traces(&app, &cg, &cands[0], &TraceLimits::default());
    let t = traces
        .iter()
        .find(|t| t.state == TraceState::Terminated)
        .unwrap();
    assert_eq!(t.conditions.len(), 1);
    assert_eq!(t.conditions[0].kind, EnvKind::StorageAvailable);
    assert!(t.conditions[0].negated);
    let env = infer_environment(t, &app).unwrap();
    assert!(env
        .injected_faults
        .contains(&InjectedFault::StorageUnavailable));
    assert!(!env.storage_available());
}

#[test]
fn unbound_handler_is_unmappable() {
    let app = fixture("unbound.ape");
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    let traces = generate_traces(&app, &cg, &cands[0], &TraceLimits::default());
    let t = traces
        .iter()
        .find(|t| t.state == TraceState::Terminated)
        .unwrap();
    assert!(synthesize_events(t, &app).is_err());
}

#[test]
fn contradictory_conditions_are_unsatisfiable() {
    use apechk_core::app_model::EnvCondition;
    let app = fixture("gisapp.ape");
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    let traces = generate_traces(&app, &cg, &cands[0], &TraceLimits::default());
    let mut t = traces
        .into_iter()
        .find(|t| t.state == TraceState::Terminated)
        .unwrap();
    t.conditions.push(EnvCondition {
        kind: EnvKind::WifiEnabled,
        negated: false,
    });
    t.conditions.push(EnvCondition {
        kind: EnvKind::WifiEnabled,
        negated: true,
    });
    assert!(infer_environment(&t, &app).is_err());
}

#[test]
fn input_constraints_produce_expected_values() {
    use apechk_core::app_model::{EnvCondition, InputConstraint, InputFormat};
    let mut b = Builder::new("inputs");
    let main = b.activity("Main");
    let dlg = b.gui(main, GuiObjectKind::Dialog, "dlg");
    let query = b.widget(main, WidgetClass::Input, "queryBox");
    let (_, job) = b.async_construct("Job", AsyncKind::Task);
    b.callback(job, CallbackSlot::Background, MethodBodyBuilder::default());
    let mut post = MethodBodyBuilder::default();
    post.leaf(StmtKind::UiAccess {
        api: "dialog.dismiss".into(),
        target: dlg,
    });
    b.callback(job, CallbackSlot::PostExecute, post);
    let mut h = MethodBodyBuilder::default();
    h.leaf(StmtKind::StartAsync { construct: job });
    let hm = b.handler(main, "go", h);
    b.bind(query, hm, apechk_core::app_model::BindingSource::Code);
    b.lifecycle(main, LifecycleCallback::OnCreate, MethodBodyBuilder::default());
    let app = b.finish(main);
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    let traces = generate_traces(&app, &cg, &cands[0], &TraceLimits::default());
    let mut t = traces
        .into_iter()
        .find(|t| t.state == TraceState::Terminated)
        .unwrap();
    t.conditions.push(EnvCondition {
        kind: EnvKind::InputMatches {
            widget: query,
            constraint: InputConstraint::Equals("LM317".into()),
        },
        negated: false,
    });
    let env = infer_environment(&t, &app).unwrap();
    assert_eq!(env.inputs.get("queryBox").map(String::as_str), Some("LM317"));

    t.conditions.clear();
    t.conditions.push(EnvCondition {
        kind: EnvKind::InputMatches {
            widget: query,
            constraint: InputConstraint::Format(InputFormat::Email),
        },
        negated: false,
    });
    let env = infer_environment(&t, &app).unwrap();
    assert_eq!(env.inputs.get("queryBox").map(String::as_str), Some("a@b.co"));
}

#[test]
fn lifecycle_roots_map_to_their_substitution_events() {
    // An async armed in the entry activity's onPause: the trace roots there
    // and the screen toggle forces the callback.
    let src = "app pauses\nentry Main\nactivity Main\n  gui dialog dlg\n  lifecycle onCreate\n  end\n  lifecycle onPause\n    start-async Saver\n  end\nend\nasync task Saver\n  background\n  end\n  post\n    ui-access dialog.dismiss dlg\n  end\nend\n";
    let app = apechk_core::app_model::parse_app(src).unwrap();
    assert!(apechk_core::app_model::validate_app(&app).is_empty());
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    assert_eq!(cands.len(), 1);
    let traces = generate_traces(&app, &cg, &cands[0], &TraceLimits::default());
    let t = traces
        .iter()
        .find(|t| t.state == TraceState::Terminated)
        .expect("terminates at the entry onPause root");
    let seq = synthesize_events(t, &app).unwrap();
    assert_eq!(
        seq.events,
        vec![UiEvent::Launch, UiEvent::ScreenToggle, UiEvent::Rotate]
    );
}

#[test]
fn callers_of_post_callback_is_the_implicit_background_edge() {
    let app = fixture("adsdroid.ape");
    let cg = build_call_graph(&app);
    let post = app.resolve_method("SearchByPartName.postExecute").unwrap();
    let callers = callers_of(&cg, post).unwrap();
    assert_eq!(callers.len(), 1);
    assert_eq!(
        app.method_name(callers[0].caller),
        "SearchByPartName.background"
    );
    assert_eq!(callers[0].kind, CallKind::Implicit);
}

#[test]
fn zero_backtrack_candidate_yields_a_two_element_chain() {
    // The faulty flow starts directly in an entry-activity handler: one
    // terminated trace of (faulty callback, handler).
    let app = fixture("gisapp.ape");
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    let traces = generate_traces(&app, &cg, &cands[0], &TraceLimits::default());
    let terminated: Vec<_> = traces
        .iter()
        .filter(|t| t.state == TraceState::Terminated)
        .collect();
    assert_eq!(terminated.len(), 1);
    assert_eq!(
        names(&app, &terminated[0].chain),
        vec!["ExportTask.background", "MapActivity.exportData"]
    );
}

#[test]
fn catch_handler_conditions_record_the_fault_negated() {
    let src = "app tc\nentry Main\nactivity Main\n  gui view v\n  bind button go onGo\n  lifecycle onCreate\n  end\n  handler onGo\n    start-async Job\n  end\nend\nasync thread Job\n  background\n    try\n      return\n    catch io\n      ui-access view.setText v\n    end\n  end\nend\n";
    let app = apechk_core::app_model::parse_app(src).unwrap();
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    assert_eq!(cands.len(), 1);
    let traces = generate_traces(&app, &cg, &cands[0], &TraceLimits::default());
    let t = traces
        .iter()
        .find(|t| t.state == TraceState::Terminated)
        .unwrap();
    assert_eq!(t.conditions.len(), 1);
    assert_eq!(t.conditions[0].kind, EnvKind::IoAvailable);
    assert!(t.conditions[0].negated, "handler is reached by the fault");
    let env = infer_environment(t, &app).unwrap();
    assert!(!env.io_available());
}

#[test]
fn wifi_condition_disables_the_setting() {
    let src = "app wf\nentry Main\nactivity Main\n  gui view v\n  bind button go onGo\n  lifecycle onCreate\n  end\n  handler onGo\n    start-async Job\n  end\nend\nasync thread Job\n  background\n    if-env not wifi-enabled\n      ui-access view.setText v\n    end\n  end\nend\n";
    let app = apechk_core::app_model::parse_app(src).unwrap();
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    let traces = generate_traces(&app, &cg, &cands[0], &TraceLimits::default());
    let t = traces
        .iter()
        .find(|t| t.state == TraceState::Terminated)
        .unwrap();
    let env = infer_environment(t, &app).unwrap();
    assert_eq!(env.settings.get("wifi"), Some(&false));
    assert!(!env.wifi_enabled());
}
