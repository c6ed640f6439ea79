//! Deterministic generator of small random apps with injected async faults,
//! used by property tests, the oracle-equivalence suite and the benches.
//!
//! Generated apps stay within twelve methods and two async constructs, use
//! the default API configuration, and never gate faults on environment
//! conditions so that schedule exploration alone is a complete crash oracle
//! for them.

use crate::app_model::{
    ApiConfig, App, AsyncConstructDecl, AsyncIdx, AsyncKind, BindingSource, CallbackSlot, CompIdx,
    ComponentDecl, ComponentKind, GuiObjectDecl, GuiObjectKind, HandlerBinding, LifecycleCallback,
    MethodBody, MethodDecl, MethodIdx, MethodOwner, MethodRole, ObjIdx, StmtIdx, StmtKind,
    WidgetClass, WidgetDecl, WidgetIdx,
};
use crate::event_synth::UiEvent;
use crate::rng::SplitMix64;
use std::collections::BTreeMap;

/// Fault shapes the generator can inject into an async construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Behavior {
    Benign,
    P1Adapter,
    P1View,
    P2Create,
    P3Dialog,
    GuardedP3,
    PostedP1,
}

/// Generate one well-formed app from a seed. Methods are declared in the
/// pretty-printer's canonical order so that printing and reparsing yields an
/// identical arena layout.
pub fn generate_app(seed: u64) -> App {
    let mut rng = SplitMix64::new(seed);
    let mut b = Builder::new(format!("gen{}", seed));

    let main = b.activity("Main");
    let dlg = b.gui(main, GuiObjectKind::Dialog, "dlg");
    let adapter = b.gui(main, GuiObjectKind::ListAdapter, "adapter");
    let label = b.gui(main, GuiObjectKind::View, "label");

    let n_handlers = 1 + rng.below(3);
    let n_asyncs = match rng.below(10) {
        0 => 0,
        1..=5 => 1,
        _ => 2,
    };

    let mut asyncs: Vec<AsyncIdx> = Vec::new();
    let mut behaviors: Vec<Behavior> = Vec::new();
    for i in 0..n_asyncs {
        let kind = if rng.chance(7, 10) {
            AsyncKind::Task
        } else {
            AsyncKind::Thread
        };
        let (_, a) = b.async_construct(&format!("Job{}", i), kind);
        asyncs.push(a);
        let behavior = match rng.below(20) {
            0..=5 => Behavior::P3Dialog,
            6..=9 => Behavior::P1Adapter,
            10..=11 => Behavior::P1View,
            12..=14 => Behavior::P2Create,
            15..=16 => Behavior::GuardedP3,
            17 => Behavior::PostedP1,
            _ => Behavior::Benign,
        };
        // Threads have no post slot; remap post-side shapes.
        behaviors.push(if kind == AsyncKind::Thread {
            match behavior {
                Behavior::P3Dialog => Behavior::P1View,
                Behavior::GuardedP3 => Behavior::PostedP1,
                other => other,
            }
        } else {
            behavior
        });
    }

    // Pick a starter for each construct: the entry onCreate, a handler, or
    // a shared helper method called from the first handler.
    let mut start_stmts: Vec<Vec<StmtKind>> = vec![Vec::new(); n_handlers + 1];
    let mut helper_targets: Vec<AsyncIdx> = Vec::new();
    for &a in &asyncs {
        match rng.below(5) {
            0 => start_stmts[0].push(StmtKind::StartAsync { construct: a }),
            1 => helper_targets.push(a),
            i => {
                let h = 1 + (i - 1).min(n_handlers - 1);
                start_stmts[h].push(StmtKind::StartAsync { construct: a });
            }
        }
    }

    // Method arena in canonical order: lifecycle, handlers, plain helper,
    // then async callbacks. The helper's index is known ahead of time.
    let helper: Option<MethodIdx> = if helper_targets.is_empty() {
        None
    } else {
        Some(MethodIdx((1 + n_handlers) as u32))
    };

    let mut on_create = MethodBodyBuilder::default();
    for stmt in start_stmts[0].drain(..) {
        on_create.leaf(stmt);
    }
    b.lifecycle(main, LifecycleCallback::OnCreate, on_create);

    for h in 0..n_handlers {
        let class = match rng.below(6) {
            0 => WidgetClass::List,
            1 => WidgetClass::Input,
            _ => WidgetClass::Button,
        };
        let widget = b.widget(main, class, &format!("w{}", h));
        let mut body = MethodBodyBuilder::default();
        for stmt in start_stmts[h + 1].drain(..) {
            body.leaf(stmt);
        }
        if h == 0 {
            if let Some(helper) = helper {
                body.leaf(StmtKind::Call { target: helper });
            }
        }
        if body.nodes.is_empty() {
            body.leaf(StmtKind::Return);
        }
        let m = b.handler(main, &format!("onTap{}", h), body);
        b.bind(widget, m, BindingSource::Code);
    }

    if let Some(expected) = helper {
        let mut body = MethodBodyBuilder::default();
        for a in &helper_targets {
            body.leaf(StmtKind::StartAsync { construct: *a });
        }
        let got = b.plain_method(main, "startJobs", body);
        debug_assert_eq!(got, expected);
    }

    for (i, &a) in asyncs.iter().enumerate() {
        let behavior = behaviors[i];
        let is_thread = b.app.asyncs[a.idx()].kind == AsyncKind::Thread;

        let mut bg = MethodBodyBuilder::default();
        match behavior {
            Behavior::P1Adapter => {
                bg.leaf(StmtKind::UiAccess {
                    api: "adapter.notifyDataSetChanged".into(),
                    target: adapter,
                });
            }
            Behavior::P1View => {
                bg.leaf(StmtKind::UiAccess {
                    api: "view.setText".into(),
                    target: label,
                });
            }
            Behavior::P2Create => {
                bg.leaf(StmtKind::UiCreate {
                    api: "toast.show".into(),
                });
            }
            Behavior::PostedP1 => {
                bg.block_post(vec![StmtKind::UiAccess {
                    api: "view.setText".into(),
                    target: label,
                }]);
            }
            _ => {
                bg.leaf(StmtKind::Return);
            }
        }
        b.callback(a, CallbackSlot::Background, bg);

        if !is_thread {
            let mut post = MethodBodyBuilder::default();
            match behavior {
                Behavior::P3Dialog => {
                    post.leaf(StmtKind::UiAccess {
                        api: "dialog.dismiss".into(),
                        target: dlg,
                    });
                }
                Behavior::GuardedP3 => {
                    post.block_safe(
                        "activity.isFinishing",
                        vec![StmtKind::UiAccess {
                            api: "dialog.dismiss".into(),
                            target: dlg,
                        }],
                    );
                }
                _ => {
                    post.leaf(StmtKind::Return);
                }
            }
            b.callback(a, CallbackSlot::PostExecute, post);
        }
    }

    b.finish(main)
}

/// The canonical oracle regimen for a generated app: launch, touch every
/// bound widget in declaration order, then rotate.
pub fn oracle_events(app: &App) -> Vec<UiEvent> {
    let mut events = vec![UiEvent::Launch];
    for binding in &app.handler_bindings {
        let w = app.widget(binding.widget);
        events.push(match w.class {
            WidgetClass::Button => UiEvent::Click {
                widget: w.id.clone(),
            },
            WidgetClass::List => UiEvent::ListItemClick {
                widget: w.id.clone(),
                item: 0,
            },
            WidgetClass::Input => UiEvent::Input {
                widget: w.id.clone(),
                value: "text".into(),
            },
        });
    }
    events.push(UiEvent::Rotate);
    events
}

// ---------------------------------------------------------------------------
// Programmatic app construction
// ---------------------------------------------------------------------------

/// Pre-order statement arena under construction.
#[derive(Default)]
pub struct MethodBodyBuilder {
    nodes: Vec<StmtKind>,
    roots: Vec<StmtIdx>,
}

impl MethodBodyBuilder {
    pub fn leaf(&mut self, kind: StmtKind) -> StmtIdx {
        let idx = StmtIdx(self.nodes.len() as u32);
        self.nodes.push(kind);
        self.roots.push(idx);
        idx
    }

    /// `post-to-ui` wrapping the given leaf statements.
    pub fn block_post(&mut self, children: Vec<StmtKind>) -> StmtIdx {
        let parent = StmtIdx(self.nodes.len() as u32);
        self.nodes.push(StmtKind::Return);
        let body = self.push_children(children);
        self.nodes[parent.idx()] = StmtKind::PostToUi { body };
        self.roots.push(parent);
        parent
    }

    /// `if-ui-safe` whose then-branch holds the given leaf statements.
    pub fn block_safe(&mut self, check: &str, children: Vec<StmtKind>) -> StmtIdx {
        let parent = StmtIdx(self.nodes.len() as u32);
        self.nodes.push(StmtKind::Return);
        let then_branch = self.push_children(children);
        self.nodes[parent.idx()] = StmtKind::UiSafeCheckIf {
            check: check.to_string(),
            then_branch,
            else_branch: Vec::new(),
        };
        self.roots.push(parent);
        parent
    }

    fn push_children(&mut self, children: Vec<StmtKind>) -> Vec<StmtIdx> {
        children
            .into_iter()
            .map(|kind| {
                let idx = StmtIdx(self.nodes.len() as u32);
                self.nodes.push(kind);
                idx
            })
            .collect()
    }

    fn build(self) -> MethodBody {
        MethodBody {
            nodes: self.nodes,
            roots: self.roots,
        }
    }
}

/// Minimal programmatic [`App`] builder shared by the generator and tests.
pub struct Builder {
    pub app: App,
}

impl Builder {
    pub fn new(name: impl Into<String>) -> Builder {
        Builder {
            app: App {
                name: name.into(),
                components: Vec::new(),
                asyncs: Vec::new(),
                methods: Vec::new(),
                gui_objects: Vec::new(),
                widgets: Vec::new(),
                handler_bindings: Vec::new(),
                entry_activity: CompIdx(0),
                api_config: ApiConfig::default_config(),
            },
        }
    }

    pub fn activity(&mut self, id: &str) -> CompIdx {
        self.component(id, ComponentKind::Activity, None)
    }

    pub fn fragment(&mut self, id: &str, host: CompIdx) -> CompIdx {
        self.component(id, ComponentKind::Fragment, Some(host))
    }

    fn component(&mut self, id: &str, kind: ComponentKind, host: Option<CompIdx>) -> CompIdx {
        let idx = CompIdx(self.app.components.len() as u32);
        self.app.components.push(ComponentDecl {
            id: id.to_string(),
            kind,
            host,
            lifecycle: BTreeMap::new(),
            handlers: Vec::new(),
            plain_methods: Vec::new(),
            gui_objects: Vec::new(),
            widgets: Vec::new(),
        });
        idx
    }

    pub fn gui(&mut self, owner: CompIdx, kind: GuiObjectKind, id: &str) -> ObjIdx {
        let idx = ObjIdx(self.app.gui_objects.len() as u32);
        self.app.gui_objects.push(GuiObjectDecl {
            id: id.to_string(),
            kind,
            owner,
        });
        self.app.components[owner.idx()].gui_objects.push(idx);
        idx
    }

    pub fn widget(&mut self, owner: CompIdx, class: WidgetClass, id: &str) -> WidgetIdx {
        let idx = WidgetIdx(self.app.widgets.len() as u32);
        self.app.widgets.push(WidgetDecl {
            id: id.to_string(),
            class,
            owner,
        });
        self.app.components[owner.idx()].widgets.push(idx);
        idx
    }

    pub fn bind(&mut self, widget: WidgetIdx, method: MethodIdx, source: BindingSource) {
        self.app.handler_bindings.push(HandlerBinding {
            widget,
            method,
            source,
        });
    }

    pub fn async_construct(&mut self, id: &str, kind: AsyncKind) -> (AsyncKind, AsyncIdx) {
        let idx = AsyncIdx(self.app.asyncs.len() as u32);
        self.app.asyncs.push(AsyncConstructDecl {
            id: id.to_string(),
            kind,
            callbacks: BTreeMap::new(),
            lifecycle_aware: kind == AsyncKind::Loader,
        });
        (kind, idx)
    }

    fn method(
        &mut self,
        id: &str,
        owner: MethodOwner,
        role: MethodRole,
        body: MethodBodyBuilder,
    ) -> MethodIdx {
        let idx = MethodIdx(self.app.methods.len() as u32);
        self.app.methods.push(MethodDecl {
            id: id.to_string(),
            owner,
            role,
            body: body.build(),
        });
        idx
    }

    pub fn lifecycle(
        &mut self,
        comp: CompIdx,
        cb: LifecycleCallback,
        body: MethodBodyBuilder,
    ) -> MethodIdx {
        let m = self.method(
            cb.name(),
            MethodOwner::Component(comp),
            MethodRole::LifecycleCallback(cb),
            body,
        );
        self.app.components[comp.idx()].lifecycle.insert(cb, m);
        m
    }

    pub fn handler(&mut self, comp: CompIdx, id: &str, body: MethodBodyBuilder) -> MethodIdx {
        let m = self.method(
            id,
            MethodOwner::Component(comp),
            MethodRole::EventHandler,
            body,
        );
        self.app.components[comp.idx()].handlers.push(m);
        m
    }

    pub fn plain_method(&mut self, comp: CompIdx, id: &str, body: MethodBodyBuilder) -> MethodIdx {
        let m = self.method(id, MethodOwner::Component(comp), MethodRole::Plain, body);
        self.app.components[comp.idx()].plain_methods.push(m);
        m
    }

    pub fn callback(
        &mut self,
        construct: AsyncIdx,
        slot: CallbackSlot,
        body: MethodBodyBuilder,
    ) -> MethodIdx {
        let id = match slot {
            CallbackSlot::PreExecute => "preExecute",
            CallbackSlot::Background => "background",
            CallbackSlot::PostExecute => "postExecute",
        };
        let m = self.method(
            id,
            MethodOwner::Async(construct),
            MethodRole::AsyncCallback(slot),
            body,
        );
        self.app.asyncs[construct.idx()].callbacks.insert(slot, m);
        m
    }

    pub fn finish(mut self, entry: CompIdx) -> App {
        self.app.entry_activity = entry;
        self.app
    }
}
