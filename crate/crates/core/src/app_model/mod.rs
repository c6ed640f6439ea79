//! The miniature app description language: domain types, parser, printer and
//! structural validation.
//!
//! An [`App`] is immutable once built. Methods, GUI objects and widgets live
//! in flat per-app arenas and are referenced by index; statement bodies are
//! stored per method as a pre-order arena so that every statement (including
//! nested ones) has a dense, stable index usable as a fault site.

mod parse;
mod print;
mod validate;

pub use parse::parse_app;
pub use print::{format_cond, pretty_print};
pub use validate::validate_app;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

macro_rules! arena_index {
    ($name:ident) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn idx(self) -> usize {
                self.0 as usize
            }
        }
    };
}

arena_index!(CompIdx);
arena_index!(MethodIdx);
arena_index!(AsyncIdx);
arena_index!(ObjIdx);
arena_index!(WidgetIdx);
arena_index!(StmtIdx);

/// A statement position: method plus the statement's pre-order index within
/// that method's body. Rendered as `"Owner.method:index"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Site {
    pub method: MethodIdx,
    pub stmt: StmtIdx,
}

impl Site {
    pub fn display(self, app: &App) -> String {
        format!("{}:{}", app.method_name(self.method), self.stmt.0)
    }
}

/// One parsed application.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct App {
    pub name: String,
    pub components: Vec<ComponentDecl>,
    pub asyncs: Vec<AsyncConstructDecl>,
    /// Global method arena in declaration order.
    pub methods: Vec<MethodDecl>,
    pub gui_objects: Vec<GuiObjectDecl>,
    pub widgets: Vec<WidgetDecl>,
    /// Widget-to-handler bindings; widget identifiers are unique here.
    pub handler_bindings: Vec<HandlerBinding>,
    pub entry_activity: CompIdx,
    pub api_config: ApiConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentKind {
    Activity,
    Fragment,
    Service,
    Receiver,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentDecl {
    pub id: String,
    pub kind: ComponentKind,
    /// Host activity, present iff kind is Fragment.
    pub host: Option<CompIdx>,
    pub lifecycle: BTreeMap<LifecycleCallback, MethodIdx>,
    pub handlers: Vec<MethodIdx>,
    pub plain_methods: Vec<MethodIdx>,
    pub gui_objects: Vec<ObjIdx>,
    pub widgets: Vec<WidgetIdx>,
}

/// The seven recognized lifecycle callback names.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum LifecycleCallback {
    OnCreate,
    OnStart,
    OnResume,
    OnPause,
    OnStop,
    OnDestroy,
    OnRestart,
}

impl LifecycleCallback {
    pub const ALL: [LifecycleCallback; 7] = [
        LifecycleCallback::OnCreate,
        LifecycleCallback::OnStart,
        LifecycleCallback::OnResume,
        LifecycleCallback::OnPause,
        LifecycleCallback::OnStop,
        LifecycleCallback::OnDestroy,
        LifecycleCallback::OnRestart,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LifecycleCallback::OnCreate => "onCreate",
            LifecycleCallback::OnStart => "onStart",
            LifecycleCallback::OnResume => "onResume",
            LifecycleCallback::OnPause => "onPause",
            LifecycleCallback::OnStop => "onStop",
            LifecycleCallback::OnDestroy => "onDestroy",
            LifecycleCallback::OnRestart => "onRestart",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }
}

impl fmt::Display for LifecycleCallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuiObjectKind {
    Dialog,
    Toast,
    ListAdapter,
    View,
}

impl GuiObjectKind {
    pub fn keyword(self) -> &'static str {
        match self {
            GuiObjectKind::Dialog => "dialog",
            GuiObjectKind::Toast => "toast",
            GuiObjectKind::ListAdapter => "list-adapter",
            GuiObjectKind::View => "view",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuiObjectDecl {
    pub id: String,
    pub kind: GuiObjectKind,
    pub owner: CompIdx,
}

/// Widget class decides which user event drives a bound handler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WidgetClass {
    Button,
    List,
    Input,
}

impl WidgetClass {
    pub fn keyword(self) -> &'static str {
        match self {
            WidgetClass::Button => "button",
            WidgetClass::List => "list",
            WidgetClass::Input => "input",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WidgetDecl {
    pub id: String,
    pub class: WidgetClass,
    pub owner: CompIdx,
}

/// Whether a binding came from code registration or a layout file. The two
/// are semantically identical; the tag only records discovery provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BindingSource {
    Code,
    Layout,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HandlerBinding {
    pub widget: WidgetIdx,
    pub method: MethodIdx,
    pub source: BindingSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodOwner {
    Component(CompIdx),
    Async(AsyncIdx),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodRole {
    LifecycleCallback(LifecycleCallback),
    EventHandler,
    AsyncCallback(CallbackSlot),
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodDecl {
    /// Local name; the app-wide name is `owner.local`.
    pub id: String,
    pub owner: MethodOwner,
    pub role: MethodRole,
    pub body: MethodBody,
}

/// Statement arena of one method, filled in pre-order so that `StmtIdx`
/// doubles as the statement's dense pre-order position.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MethodBody {
    pub nodes: Vec<StmtKind>,
    pub roots: Vec<StmtIdx>,
}

impl MethodBody {
    pub fn node(&self, idx: StmtIdx) -> &StmtKind {
        &self.nodes[idx.idx()]
    }

    /// Enclosing-block chain of a statement, outermost first. Each entry is
    /// the enclosing statement plus the index of the child block (in
    /// [`StmtKind::child_blocks`] order) the target sits in.
    pub fn ancestry(&self, target: StmtIdx) -> Vec<(StmtIdx, usize)> {
        let mut path = Vec::new();
        self.find_path(&self.roots, target, &mut path);
        path
    }

    fn find_path(
        &self,
        block: &[StmtIdx],
        target: StmtIdx,
        path: &mut Vec<(StmtIdx, usize)>,
    ) -> bool {
        for &s in block {
            if s == target {
                return true;
            }
            for (bi, child) in self.node(s).child_blocks().iter().enumerate() {
                path.push((s, bi));
                if self.find_path(child, target, path) {
                    return true;
                }
                path.pop();
            }
        }
        false
    }

    /// All statement indices in this body, pre-order.
    pub fn all_stmts(&self) -> impl Iterator<Item = StmtIdx> + '_ {
        (0..self.nodes.len() as u32).map(StmtIdx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "stmt")]
pub enum StmtKind {
    Call {
        target: MethodIdx,
    },
    StartAsync {
        construct: AsyncIdx,
    },
    UiAccess {
        api: String,
        target: ObjIdx,
    },
    UiCreate {
        api: String,
    },
    PostToUi {
        body: Vec<StmtIdx>,
    },
    UiSafeCheckIf {
        check: String,
        then_branch: Vec<StmtIdx>,
        else_branch: Vec<StmtIdx>,
    },
    EnvIf {
        cond: EnvCondition,
        then_branch: Vec<StmtIdx>,
        else_branch: Vec<StmtIdx>,
    },
    TryCatch {
        body: Vec<StmtIdx>,
        exception: CatchKind,
        handler: Vec<StmtIdx>,
    },
    StartComponent {
        target: CompIdx,
    },
    FragmentTransaction {
        target: CompIdx,
    },
    ReadInput {
        widget: WidgetIdx,
    },
    Return,
    /// Semaphore wait inserted by instrumentation; blocks an async thread.
    SemWait,
    /// Semaphore release inserted by instrumentation.
    SemSignal,
}

impl StmtKind {
    /// Child statement blocks, outer-to-inner declaration order.
    pub fn child_blocks(&self) -> Vec<&[StmtIdx]> {
        match self {
            StmtKind::PostToUi { body } => vec![body],
            StmtKind::UiSafeCheckIf {
                then_branch,
                else_branch,
                ..
            }
            | StmtKind::EnvIf {
                then_branch,
                else_branch,
                ..
            } => vec![then_branch, else_branch],
            StmtKind::TryCatch { body, handler, .. } => vec![body, handler],
            _ => vec![],
        }
    }

    pub fn is_ui_statement(&self) -> bool {
        matches!(
            self,
            StmtKind::UiAccess { .. } | StmtKind::UiCreate { .. } | StmtKind::FragmentTransaction { .. }
        )
    }
}

/// Exception classes that a try/catch can observe; each corresponds to an
/// injectable environment fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CatchKind {
    Io,
    Storage,
}

impl CatchKind {
    pub fn keyword(self) -> &'static str {
        match self {
            CatchKind::Io => "io",
            CatchKind::Storage => "storage",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EnvCondition {
    pub kind: EnvKind,
    pub negated: bool,
}

impl EnvCondition {
    pub fn negate(&self) -> EnvCondition {
        EnvCondition {
            kind: self.kind.clone(),
            negated: !self.negated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EnvKind {
    WifiEnabled,
    PermissionGranted { name: String },
    InputMatches {
        widget: WidgetIdx,
        constraint: InputConstraint,
    },
    IoAvailable,
    StorageAvailable,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputConstraint {
    Format(InputFormat),
    Equals(String),
    Contains(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    Email,
    Phone,
    Number,
}

impl InputFormat {
    pub fn keyword(self) -> &'static str {
        match self {
            InputFormat::Email => "email",
            InputFormat::Phone => "phone",
            InputFormat::Number => "number",
        }
    }

    pub fn matches(self, value: &str) -> bool {
        match self {
            InputFormat::Email => {
                value.split_once('@').is_some_and(|(user, host)| {
                    !user.is_empty() && host.contains('.') && !host.starts_with('.')
                })
            }
            InputFormat::Phone => {
                value.len() >= 7 && value.chars().all(|c| c.is_ascii_digit())
            }
            InputFormat::Number => !value.is_empty() && value.chars().all(|c| c.is_ascii_digit()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AsyncKind {
    Task,
    Thread,
    Loader,
    IntentService,
}

impl AsyncKind {
    pub fn keyword(self) -> &'static str {
        match self {
            AsyncKind::Task => "task",
            AsyncKind::Thread => "thread",
            AsyncKind::Loader => "loader",
            AsyncKind::IntentService => "intent-service",
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum CallbackSlot {
    PreExecute,
    Background,
    PostExecute,
}

impl CallbackSlot {
    pub const ALL: [CallbackSlot; 3] = [
        CallbackSlot::PreExecute,
        CallbackSlot::Background,
        CallbackSlot::PostExecute,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            CallbackSlot::PreExecute => "pre",
            CallbackSlot::Background => "background",
            CallbackSlot::PostExecute => "post",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsyncConstructDecl {
    pub id: String,
    pub kind: AsyncKind,
    pub callbacks: BTreeMap<CallbackSlot, MethodIdx>,
    /// True iff kind is Loader: the framework drops result delivery when the
    /// owning component generation died.
    pub lifecycle_aware: bool,
}

impl AsyncConstructDecl {
    /// The callback an async start explicitly invokes: preExecute when
    /// declared, else background.
    pub fn first_callback(&self) -> Option<MethodIdx> {
        self.callbacks
            .get(&CallbackSlot::PreExecute)
            .or_else(|| self.callbacks.get(&CallbackSlot::Background))
            .copied()
    }
}

/// The four API name lists steering static detection. The lists must be
/// pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ApiConfig {
    pub ui_access: Vec<String>,
    pub ui_safe: Vec<String>,
    pub ui_create: Vec<String>,
    pub post_looper: Vec<String>,
}

/// The default API configuration shipped with the repository.
const DEFAULT_API_CONFIG: &str = include_str!("../../data/default_api_config.txt");

impl ApiConfig {
    pub fn default_config() -> ApiConfig {
        ApiConfig::parse(DEFAULT_API_CONFIG).expect("bundled api config is well-formed")
    }

    /// Parse the line-per-entry config format with `[ui-access]`, `[ui-safe]`,
    /// `[ui-create]` and `[post-looper]` section headers.
    pub fn parse(text: &str) -> Result<ApiConfig, String> {
        let mut cfg = ApiConfig::default();
        let mut section: Option<&str> = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = match name {
                    "ui-access" | "ui-safe" | "ui-create" | "post-looper" => Some(match name {
                        "ui-access" => "ui-access",
                        "ui-safe" => "ui-safe",
                        "ui-create" => "ui-create",
                        _ => "post-looper",
                    }),
                    other => return Err(format!("line {}: unknown section [{}]", ln + 1, other)),
                };
                continue;
            }
            let entry = line.to_string();
            match section {
                Some("ui-access") => cfg.ui_access.push(entry),
                Some("ui-safe") => cfg.ui_safe.push(entry),
                Some("ui-create") => cfg.ui_create.push(entry),
                Some("post-looper") => cfg.post_looper.push(entry),
                _ => return Err(format!("line {}: entry outside any section", ln + 1)),
            }
        }
        if let Some((a, b)) = cfg.overlap() {
            return Err(format!("api lists are not disjoint: `{}` appears in {}", a, b));
        }
        Ok(cfg)
    }

    /// First entry shared between two lists, if any.
    pub fn overlap(&self) -> Option<(String, String)> {
        let lists = [
            ("ui-access", &self.ui_access),
            ("ui-safe", &self.ui_safe),
            ("ui-create", &self.ui_create),
            ("post-looper", &self.post_looper),
        ];
        for (i, (na, la)) in lists.iter().enumerate() {
            for (nb, lb) in lists.iter().skip(i + 1) {
                for e in la.iter() {
                    if lb.contains(e) {
                        return Some((e.clone(), format!("both [{}] and [{}]", na, nb)));
                    }
                }
            }
        }
        None
    }
}

impl App {
    pub fn method(&self, m: MethodIdx) -> &MethodDecl {
        &self.methods[m.idx()]
    }

    pub fn component(&self, c: CompIdx) -> &ComponentDecl {
        &self.components[c.idx()]
    }

    pub fn async_construct(&self, a: AsyncIdx) -> &AsyncConstructDecl {
        &self.asyncs[a.idx()]
    }

    pub fn gui_object(&self, o: ObjIdx) -> &GuiObjectDecl {
        &self.gui_objects[o.idx()]
    }

    pub fn widget(&self, w: WidgetIdx) -> &WidgetDecl {
        &self.widgets[w.idx()]
    }

    /// App-wide method name `Owner.local`.
    pub fn method_name(&self, m: MethodIdx) -> String {
        let decl = self.method(m);
        let owner = match decl.owner {
            MethodOwner::Component(c) => self.component(c).id.as_str(),
            MethodOwner::Async(a) => self.async_construct(a).id.as_str(),
        };
        format!("{}.{}", owner, decl.id)
    }

    pub fn entry(&self) -> &ComponentDecl {
        self.component(self.entry_activity)
    }

    /// Binding for a widget, if any.
    pub fn binding_for(&self, widget: WidgetIdx) -> Option<&HandlerBinding> {
        self.handler_bindings.iter().find(|b| b.widget == widget)
    }

    /// Binding whose handler is the given method, if any.
    pub fn binding_of_method(&self, m: MethodIdx) -> Option<&HandlerBinding> {
        self.handler_bindings.iter().find(|b| b.method == m)
    }

    pub fn widget_by_name(&self, name: &str) -> Option<WidgetIdx> {
        self.widgets
            .iter()
            .position(|w| w.id == name)
            .map(|i| WidgetIdx(i as u32))
    }

    pub fn component_by_name(&self, name: &str) -> Option<CompIdx> {
        self.components
            .iter()
            .position(|c| c.id == name)
            .map(|i| CompIdx(i as u32))
    }

    pub fn async_by_name(&self, name: &str) -> Option<AsyncIdx> {
        self.asyncs
            .iter()
            .position(|a| a.id == name)
            .map(|i| AsyncIdx(i as u32))
    }

    /// Resolve a method reference: either `Owner.local` or a bare local name
    /// that is unique app-wide.
    pub fn resolve_method(&self, name: &str) -> Option<MethodIdx> {
        if let Some((owner, local)) = name.split_once('.') {
            return self
                .methods
                .iter()
                .position(|m| {
                    m.id == local
                        && match m.owner {
                            MethodOwner::Component(c) => self.component(c).id == owner,
                            MethodOwner::Async(a) => self.async_construct(a).id == owner,
                        }
                })
                .map(|i| MethodIdx(i as u32));
        }
        let mut hits = self.methods.iter().enumerate().filter(|(_, m)| m.id == name);
        let first = hits.next()?;
        if hits.next().is_some() {
            return None;
        }
        Some(MethodIdx(first.0 as u32))
    }

    /// The async construct whose callback slot is this method, if any.
    pub fn slot_of_method(&self, m: MethodIdx) -> Option<(AsyncIdx, CallbackSlot)> {
        if let MethodOwner::Async(a) = self.method(m).owner {
            if let MethodRole::AsyncCallback(slot) = self.method(m).role {
                return Some((a, slot));
            }
        }
        None
    }

    /// Methods whose execution the simulator roots directly in the entry
    /// activity: its declared lifecycle callbacks plus its bound handlers.
    pub fn entry_roots(&self) -> Vec<MethodIdx> {
        let entry = self.entry();
        let mut roots: Vec<MethodIdx> = entry.lifecycle.values().copied().collect();
        roots.extend(entry.handlers.iter().copied());
        roots.sort_unstable();
        roots.dedup();
        roots
    }

    /// True iff the method is an event handler or lifecycle callback of the
    /// entry activity.
    pub fn is_entry_callback(&self, m: MethodIdx) -> bool {
        let decl = self.method(m);
        matches!(decl.owner, MethodOwner::Component(c) if c == self.entry_activity)
            && matches!(
                decl.role,
                MethodRole::EventHandler | MethodRole::LifecycleCallback(_)
            )
    }
}
