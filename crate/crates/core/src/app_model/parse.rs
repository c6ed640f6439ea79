//! Parser for the line-oriented `.ape` app description language.
//!
//! The grammar is keyword-prefixed with one statement per line and explicit
//! `end` terminators; indentation is not significant. Parsing is total: all
//! problems are reported as positioned diagnostics, never as panics.

use super::*;
use crate::diag::{DiagKind, Diagnostic};

/// Parse DSL text into a fully resolved [`App`] carrying the default
/// [`ApiConfig`], or a list of diagnostics.
pub fn parse_app(source: &str) -> Result<App, Vec<Diagnostic>> {
    let lines = tokenize(source);
    let mut p = Parser::new(&lines);
    p.collect_declarations();
    p.parse_bodies();
    p.finish()
}

#[derive(Debug, Clone)]
struct Tok {
    text: String,
    col: usize,
}

#[derive(Debug)]
struct Line {
    no: usize,
    toks: Vec<Tok>,
}

impl Line {
    fn kw(&self) -> &str {
        &self.toks[0].text
    }
}

fn tokenize(source: &str) -> Vec<Line> {
    let mut out = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        let mut toks = Vec::new();
        let mut chars = raw.char_indices().peekable();
        while let Some(&(at, c)) = chars.peek() {
            if c.is_whitespace() {
                chars.next();
                continue;
            }
            if c == '#' {
                break;
            }
            if c == '"' {
                chars.next();
                let mut text = String::new();
                let mut closed = false;
                while let Some((_, c)) = chars.next() {
                    match c {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' => {
                            if let Some((_, esc)) = chars.next() {
                                text.push(esc);
                            }
                        }
                        other => text.push(other),
                    }
                }
                // An unterminated string still yields a token; the statement
                // parser reports context-specific diagnostics.
                let _ = closed;
                toks.push(Tok { text, col: at + 1 });
                continue;
            }
            let mut text = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if c.is_whitespace() || c == '#' || c == '"' {
                    break;
                }
                text.push(c);
                chars.next();
            }
            toks.push(Tok { text, col: at + 1 });
        }
        if !toks.is_empty() {
            out.push(Line { no: i + 1, toks });
        }
    }
    out
}

/// A method body recorded during declaration collection: the range of lines
/// (exclusive of the closing `end`) to parse once all names are known.
struct PendingBody {
    method: MethodIdx,
    start: usize,
    end: usize,
}

struct Parser<'a> {
    lines: &'a [Line],
    diags: Vec<Diagnostic>,
    app_name: Option<String>,
    entry_name: Option<(String, usize, usize)>,
    components: Vec<ComponentDecl>,
    /// Fragment host names awaiting resolution: (component, host name, line, col).
    fragment_hosts: Vec<(usize, String, usize, usize)>,
    asyncs: Vec<AsyncConstructDecl>,
    methods: Vec<MethodDecl>,
    gui_objects: Vec<GuiObjectDecl>,
    widgets: Vec<WidgetDecl>,
    bindings: Vec<(WidgetIdx, String, BindingSource, usize, usize)>,
    bodies: Vec<PendingBody>,
}

impl<'a> Parser<'a> {
    fn new(lines: &'a [Line]) -> Self {
        Parser {
            lines,
            diags: Vec::new(),
            app_name: None,
            entry_name: None,
            components: Vec::new(),
            fragment_hosts: Vec::new(),
            asyncs: Vec::new(),
            methods: Vec::new(),
            gui_objects: Vec::new(),
            widgets: Vec::new(),
            bindings: Vec::new(),
            bodies: Vec::new(),
        }
    }

    fn err(&mut self, kind: DiagKind, line: &Line, col: usize, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(kind, line.no, col, msg));
    }

    fn syntax(&mut self, line: &Line, msg: impl Into<String>) {
        self.err(DiagKind::Syntax, line, line.toks[0].col, msg);
    }

    // ------------------------------------------------------------------
    // Pass 1: declarations
    // ------------------------------------------------------------------

    fn collect_declarations(&mut self) {
        let mut i = 0;
        while i < self.lines.len() {
            let line = &self.lines[i];
            match line.kw() {
                "app" => {
                    if let Some(name) = self.arg(line, 1, "app name") {
                        if self.app_name.is_some() {
                            self.syntax(line, "duplicate app declaration");
                        } else {
                            self.app_name = Some(name);
                        }
                    }
                    i += 1;
                }
                "entry" => {
                    if let Some(name) = self.arg(line, 1, "entry activity name") {
                        let col = line.toks[1].col;
                        if self.entry_name.is_some() {
                            self.syntax(line, "duplicate entry declaration");
                        } else {
                            self.entry_name = Some((name, line.no, col));
                        }
                    }
                    i += 1;
                }
                "activity" | "service" | "receiver" => {
                    let kind = match line.kw() {
                        "activity" => ComponentKind::Activity,
                        "service" => ComponentKind::Service,
                        _ => ComponentKind::Receiver,
                    };
                    i = self.collect_component(i, kind, None);
                }
                "fragment" => {
                    // fragment <Id> host <ActivityId>
                    let host = if line.toks.len() >= 4 && line.toks[2].text == "host" {
                        Some((line.toks[3].text.clone(), line.no, line.toks[3].col))
                    } else {
                        self.syntax(line, "expected `fragment <id> host <activity>`");
                        None
                    };
                    i = self.collect_component(i, ComponentKind::Fragment, host);
                }
                "async" => {
                    i = self.collect_async(i);
                }
                "end" => {
                    self.syntax(line, "unmatched `end`");
                    i += 1;
                }
                other => {
                    self.syntax(line, format!("unexpected top-level keyword `{}`", other));
                    i += 1;
                }
            }
        }
    }

    fn arg(&mut self, line: &Line, idx: usize, what: &str) -> Option<String> {
        match line.toks.get(idx) {
            Some(t) => Some(t.text.clone()),
            None => {
                self.syntax(line, format!("missing {}", what));
                None
            }
        }
    }

    fn declare_component(&mut self, id: &str, line: &Line) {
        if self.components.iter().any(|c| c.id == id)
            || self.asyncs.iter().any(|a| a.id == id)
        {
            self.err(
                DiagKind::DuplicateIdentifier,
                line,
                line.toks[1].col,
                format!("duplicate component or construct identifier `{}`", id),
            );
        }
    }

    fn collect_component(
        &mut self,
        at: usize,
        kind: ComponentKind,
        host: Option<(String, usize, usize)>,
    ) -> usize {
        let header = &self.lines[at];
        let Some(id) = header.toks.get(1).map(|t| t.text.clone()) else {
            let header_no = header.no;
            self.diags.push(Diagnostic::new(
                DiagKind::Syntax,
                header_no,
                header.toks[0].col,
                "missing component identifier",
            ));
            return at + 1;
        };
        self.declare_component(&id, header);
        let comp_idx = CompIdx(self.components.len() as u32);
        self.components.push(ComponentDecl {
            id: id.clone(),
            kind,
            host: None,
            lifecycle: BTreeMap::new(),
            handlers: Vec::new(),
            plain_methods: Vec::new(),
            gui_objects: Vec::new(),
            widgets: Vec::new(),
        });
        if let Some((host_name, ln, col)) = host {
            self.fragment_hosts
                .push((comp_idx.idx(), host_name, ln, col));
        }

        let mut i = at + 1;
        while i < self.lines.len() {
            let line = &self.lines[i];
            match line.kw() {
                "end" => return i + 1,
                "gui" => {
                    self.collect_gui(line, comp_idx);
                    i += 1;
                }
                "widget" => {
                    self.collect_widget(line, comp_idx);
                    i += 1;
                }
                "bind" => {
                    self.collect_bind(line, comp_idx);
                    i += 1;
                }
                "lifecycle" => {
                    let role = match line.toks.get(1) {
                        Some(t) => match LifecycleCallback::from_name(&t.text) {
                            Some(cb) => Some((cb, t.text.clone())),
                            None => {
                                self.err(
                                    DiagKind::IllegalLifecycleCallback,
                                    line,
                                    t.col,
                                    format!("`{}` is not a lifecycle callback name", t.text),
                                );
                                None
                            }
                        },
                        None => {
                            self.syntax(line, "missing lifecycle callback name");
                            None
                        }
                    };
                    i = self.collect_method_block(i, comp_idx, role);
                }
                "handler" | "method" => {
                    i = self.collect_handler_or_plain(i, comp_idx);
                }
                other => {
                    self.syntax(line, format!("unexpected keyword `{}` in component", other));
                    i += 1;
                }
            }
        }
        let last = self.lines.len().saturating_sub(1);
        let no = self.lines[last].no;
        self.diags.push(Diagnostic::new(
            DiagKind::Syntax,
            no,
            1,
            format!("component `{}` is missing its `end`", id),
        ));
        i
    }

    fn collect_gui(&mut self, line: &Line, owner: CompIdx) {
        let kind = match line.toks.get(1).map(|t| t.text.as_str()) {
            Some("dialog") => GuiObjectKind::Dialog,
            Some("toast") => GuiObjectKind::Toast,
            Some("list-adapter") => GuiObjectKind::ListAdapter,
            Some("view") => GuiObjectKind::View,
            _ => {
                self.syntax(line, "expected `gui <dialog|toast|list-adapter|view> <id>`");
                return;
            }
        };
        let Some(id) = line.toks.get(2).map(|t| t.text.clone()) else {
            self.syntax(line, "missing gui object identifier");
            return;
        };
        if self.gui_objects.iter().any(|g| g.id == id) {
            self.err(
                DiagKind::DuplicateIdentifier,
                line,
                line.toks[2].col,
                format!("duplicate gui object `{}`", id),
            );
        }
        let obj = ObjIdx(self.gui_objects.len() as u32);
        self.gui_objects.push(GuiObjectDecl { id, kind, owner });
        self.components[owner.idx()].gui_objects.push(obj);
    }

    fn widget_class(&mut self, line: &Line, tok: usize) -> Option<WidgetClass> {
        match line.toks.get(tok).map(|t| t.text.as_str()) {
            Some("button") => Some(WidgetClass::Button),
            Some("list") => Some(WidgetClass::List),
            Some("input") => Some(WidgetClass::Input),
            _ => {
                self.syntax(line, "expected widget class `button`, `list` or `input`");
                None
            }
        }
    }

    fn declare_widget(&mut self, line: &Line, tok: usize, class: WidgetClass, owner: CompIdx) -> Option<WidgetIdx> {
        let id = line.toks.get(tok)?.text.clone();
        if self.widgets.iter().any(|w| w.id == id) {
            self.err(
                DiagKind::DuplicateIdentifier,
                line,
                line.toks[tok].col,
                format!("duplicate widget `{}`", id),
            );
            return self.widgets.iter().position(|w| w.id == id).map(|i| WidgetIdx(i as u32));
        }
        let idx = WidgetIdx(self.widgets.len() as u32);
        self.widgets.push(WidgetDecl { id, class, owner });
        self.components[owner.idx()].widgets.push(idx);
        Some(idx)
    }

    fn collect_widget(&mut self, line: &Line, owner: CompIdx) {
        let Some(class) = self.widget_class(line, 1) else {
            return;
        };
        if line.toks.len() < 3 {
            self.syntax(line, "missing widget identifier");
            return;
        }
        self.declare_widget(line, 2, class, owner);
    }

    fn collect_bind(&mut self, line: &Line, owner: CompIdx) {
        // bind <class> <widget> <methodRef> [code|layout]
        let Some(class) = self.widget_class(line, 1) else {
            return;
        };
        if line.toks.len() < 4 {
            self.syntax(line, "expected `bind <class> <widget> <method> [code|layout]`");
            return;
        }
        let Some(widget) = self.declare_widget(line, 2, class, owner) else {
            return;
        };
        let method_name = line.toks[3].text.clone();
        let source = match line.toks.get(4).map(|t| t.text.as_str()) {
            None | Some("code") => BindingSource::Code,
            Some("layout") => BindingSource::Layout,
            Some(other) => {
                self.syntax(line, format!("unknown binding source `{}`", other));
                BindingSource::Code
            }
        };
        if self.bindings.iter().any(|(w, ..)| *w == widget) {
            self.err(
                DiagKind::DuplicateIdentifier,
                line,
                line.toks[2].col,
                format!("widget `{}` is bound more than once", line.toks[2].text),
            );
            return;
        }
        self.bindings
            .push((widget, method_name, source, line.no, line.toks[3].col));
    }

    fn declare_method(
        &mut self,
        line: &Line,
        local: String,
        owner: MethodOwner,
        role: MethodRole,
    ) -> MethodIdx {
        let owner_name = match owner {
            MethodOwner::Component(c) => self.components[c.idx()].id.clone(),
            MethodOwner::Async(a) => self.asyncs[a.idx()].id.clone(),
        };
        let dup = self.methods.iter().any(|m| {
            m.id == local
                && match m.owner {
                    MethodOwner::Component(c) => self.components[c.idx()].id == owner_name,
                    MethodOwner::Async(a) => self.asyncs[a.idx()].id == owner_name,
                }
        });
        if dup {
            self.err(
                DiagKind::DuplicateIdentifier,
                line,
                line.toks[0].col,
                format!("duplicate method `{}.{}`", owner_name, local),
            );
        }
        let idx = MethodIdx(self.methods.len() as u32);
        self.methods.push(MethodDecl {
            id: local,
            owner,
            role,
            body: MethodBody::default(),
        });
        idx
    }

    /// Record a method block: declares the method and stashes its body line
    /// range for pass 2. Returns the line index after the closing `end`.
    fn collect_method_block(
        &mut self,
        at: usize,
        comp: CompIdx,
        cb: Option<(LifecycleCallback, String)>,
    ) -> usize {
        let header_line = at;
        let (body_start, body_end, after) = self.body_range(at);
        if let Some((cb, name)) = cb {
            let line = &self.lines[header_line];
            let m = self.declare_method(
                line,
                name,
                MethodOwner::Component(comp),
                MethodRole::LifecycleCallback(cb),
            );
            if let std::collections::btree_map::Entry::Vacant(e) =
                self.components[comp.idx()].lifecycle.entry(cb)
            {
                e.insert(m);
            } else {
                self.err(
                    DiagKind::DuplicateIdentifier,
                    line,
                    line.toks[0].col,
                    format!("lifecycle callback `{}` declared twice", cb.name()),
                );
            }
            self.bodies.push(PendingBody {
                method: m,
                start: body_start,
                end: body_end,
            });
        }
        after
    }

    fn collect_handler_or_plain(&mut self, at: usize, comp: CompIdx) -> usize {
        let line_no = at;
        let is_handler = self.lines[at].kw() == "handler";
        let name = self.lines[at].toks.get(1).map(|t| t.text.clone());
        let (body_start, body_end, after) = self.body_range(at);
        let line = &self.lines[line_no];
        let Some(name) = name else {
            let (no, col) = (line.no, line.toks[0].col);
            self.diags.push(Diagnostic::new(
                DiagKind::Syntax,
                no,
                col,
                "missing method identifier",
            ));
            return after;
        };
        if LifecycleCallback::from_name(&name).is_some() {
            self.err(
                DiagKind::IllegalLifecycleCallback,
                line,
                line.toks[1].col,
                format!("`{}` may only be declared with the `lifecycle` keyword", name),
            );
        }
        let role = if is_handler {
            MethodRole::EventHandler
        } else {
            MethodRole::Plain
        };
        let m = self.declare_method(line, name, MethodOwner::Component(comp), role);
        if is_handler {
            self.components[comp.idx()].handlers.push(m);
        } else {
            self.components[comp.idx()].plain_methods.push(m);
        }
        self.bodies.push(PendingBody {
            method: m,
            start: body_start,
            end: body_end,
        });
        after
    }

    /// Line range of a block body opened at `at`, skipping nested statement
    /// blocks. Returns (first body line, line of the closing `end`, line
    /// after the closing `end`).
    fn body_range(&mut self, at: usize) -> (usize, usize, usize) {
        let mut depth = 0usize;
        let mut i = at + 1;
        while i < self.lines.len() {
            match self.lines[i].kw() {
                "post-to-ui" | "if-ui-safe" | "if-env" | "try" => depth += 1,
                "end" => {
                    if depth == 0 {
                        return (at + 1, i, i + 1);
                    }
                    depth -= 1;
                }
                _ => {}
            }
            i += 1;
        }
        let opener = &self.lines[at];
        let (no, col) = (opener.no, opener.toks[0].col);
        self.diags.push(Diagnostic::new(
            DiagKind::Syntax,
            no,
            col,
            "block is missing its `end`",
        ));
        (at + 1, self.lines.len(), self.lines.len())
    }

    fn collect_async(&mut self, at: usize) -> usize {
        let header = &self.lines[at];
        let kind = match header.toks.get(1).map(|t| t.text.as_str()) {
            Some("task") => AsyncKind::Task,
            Some("thread") => AsyncKind::Thread,
            Some("loader") => AsyncKind::Loader,
            Some("intent-service") => AsyncKind::IntentService,
            _ => {
                self.syntax(header, "expected `async <task|thread|loader|intent-service> <id>`");
                return at + 1;
            }
        };
        let Some(id) = header.toks.get(2).map(|t| t.text.clone()) else {
            self.syntax(header, "missing async construct identifier");
            return at + 1;
        };
        self.declare_component(&id, header);
        let async_idx = AsyncIdx(self.asyncs.len() as u32);
        self.asyncs.push(AsyncConstructDecl {
            id: id.clone(),
            kind,
            callbacks: BTreeMap::new(),
            lifecycle_aware: kind == AsyncKind::Loader,
        });

        let mut i = at + 1;
        while i < self.lines.len() {
            let line = &self.lines[i];
            match line.kw() {
                "end" => return i + 1,
                "pre" | "background" | "post" => {
                    let slot = match line.kw() {
                        "pre" => CallbackSlot::PreExecute,
                        "background" => CallbackSlot::Background,
                        _ => CallbackSlot::PostExecute,
                    };
                    let local = match slot {
                        CallbackSlot::PreExecute => "preExecute",
                        CallbackSlot::Background => "background",
                        CallbackSlot::PostExecute => "postExecute",
                    };
                    let header_idx = i;
                    let (start, end, after) = self.body_range(i);
                    let line = &self.lines[header_idx];
                    let m = self.declare_method(
                        line,
                        local.to_string(),
                        MethodOwner::Async(async_idx),
                        MethodRole::AsyncCallback(slot),
                    );
                    if let std::collections::btree_map::Entry::Vacant(e) =
                        self.asyncs[async_idx.idx()].callbacks.entry(slot)
                    {
                        e.insert(m);
                    } else {
                        self.err(
                            DiagKind::DuplicateIdentifier,
                            line,
                            line.toks[0].col,
                            format!("callback slot `{}` declared twice", line.kw()),
                        );
                    }
                    self.bodies.push(PendingBody {
                        method: m,
                        start,
                        end,
                    });
                    i = after;
                }
                other => {
                    self.syntax(line, format!("unexpected keyword `{}` in async construct", other));
                    i += 1;
                }
            }
        }
        let last = self.lines.len().saturating_sub(1);
        let no = self.lines[last].no;
        self.diags.push(Diagnostic::new(
            DiagKind::Syntax,
            no,
            1,
            format!("async construct `{}` is missing its `end`", id),
        ));
        i
    }

    // ------------------------------------------------------------------
    // Pass 2: statement bodies
    // ------------------------------------------------------------------

    fn parse_bodies(&mut self) {
        let bodies = std::mem::take(&mut self.bodies);
        for pending in &bodies {
            let mut body = MethodBody::default();
            let mut cursor = pending.start;
            let roots = self.parse_block(&mut cursor, pending.end, &mut body);
            body.roots = roots;
            self.methods[pending.method.idx()].body = body;
        }
        self.bodies = bodies;
    }

    /// Parse statements until the line range is exhausted or a block
    /// separator (`else`, `catch`) is reached at this nesting level.
    fn parse_block(&mut self, cursor: &mut usize, end: usize, body: &mut MethodBody) -> Vec<StmtIdx> {
        let mut block = Vec::new();
        while *cursor < end {
            let at = *cursor;
            let kw = self.lines[at].kw();
            if kw == "else" || kw == "catch" || kw == "end" {
                break;
            }
            *cursor += 1;
            if let Some(stmt) = self.parse_stmt(at, cursor, end, body) {
                block.push(stmt);
            }
        }
        block
    }

    fn alloc(&mut self, body: &mut MethodBody) -> StmtIdx {
        let idx = StmtIdx(body.nodes.len() as u32);
        body.nodes.push(StmtKind::Return);
        idx
    }

    fn parse_stmt(
        &mut self,
        at: usize,
        cursor: &mut usize,
        end: usize,
        body: &mut MethodBody,
    ) -> Option<StmtIdx> {
        let kw = self.lines[at].kw().to_string();
        match kw.as_str() {
            "call" => {
                let m = self.resolve_method_tok(at, 1)?;
                let idx = self.alloc(body);
                body.nodes[idx.idx()] = StmtKind::Call { target: m };
                Some(idx)
            }
            "start-async" => {
                let a = self.resolve_async_tok(at, 1)?;
                let idx = self.alloc(body);
                body.nodes[idx.idx()] = StmtKind::StartAsync { construct: a };
                Some(idx)
            }
            "ui-access" => {
                let api = self.text_tok(at, 1, "API name")?;
                let target = self.resolve_obj_tok(at, 2)?;
                let idx = self.alloc(body);
                body.nodes[idx.idx()] = StmtKind::UiAccess { api, target };
                Some(idx)
            }
            "ui-create" => {
                let api = self.text_tok(at, 1, "API name")?;
                let idx = self.alloc(body);
                body.nodes[idx.idx()] = StmtKind::UiCreate { api };
                Some(idx)
            }
            "post-to-ui" => {
                let idx = self.alloc(body);
                let inner = self.parse_block(cursor, end, body);
                self.expect_end(cursor, end, at);
                body.nodes[idx.idx()] = StmtKind::PostToUi { body: inner };
                Some(idx)
            }
            "if-ui-safe" => {
                let check = self.text_tok(at, 1, "UI-safe check API name")?;
                let idx = self.alloc(body);
                let then_branch = self.parse_block(cursor, end, body);
                let else_branch = self.parse_optional_else(cursor, end, body, at);
                body.nodes[idx.idx()] = StmtKind::UiSafeCheckIf {
                    check,
                    then_branch,
                    else_branch,
                };
                Some(idx)
            }
            "if-env" => {
                let cond = self.parse_env_condition(at)?;
                let idx = self.alloc(body);
                let then_branch = self.parse_block(cursor, end, body);
                let else_branch = self.parse_optional_else(cursor, end, body, at);
                body.nodes[idx.idx()] = StmtKind::EnvIf {
                    cond,
                    then_branch,
                    else_branch,
                };
                Some(idx)
            }
            "try" => {
                let idx = self.alloc(body);
                let try_body = self.parse_block(cursor, end, body);
                let exception = if *cursor < end && self.lines[*cursor].kw() == "catch" {
                    let catch_at = *cursor;
                    *cursor += 1;
                    match self.lines[catch_at].toks.get(1).map(|t| t.text.as_str()) {
                        Some("io") => CatchKind::Io,
                        Some("storage") => CatchKind::Storage,
                        _ => {
                            let line = &self.lines[catch_at];
                            self.err(
                                DiagKind::Syntax,
                                line,
                                line.toks[0].col,
                                "expected `catch <io|storage>`",
                            );
                            CatchKind::Io
                        }
                    }
                } else {
                    let line = &self.lines[at];
                    self.err(DiagKind::Syntax, line, line.toks[0].col, "try without catch");
                    CatchKind::Io
                };
                let handler = self.parse_block(cursor, end, body);
                self.expect_end(cursor, end, at);
                body.nodes[idx.idx()] = StmtKind::TryCatch {
                    body: try_body,
                    exception,
                    handler,
                };
                Some(idx)
            }
            "start-activity" => {
                let target = self.resolve_comp_tok(at, 1)?;
                let idx = self.alloc(body);
                body.nodes[idx.idx()] = StmtKind::StartComponent { target };
                Some(idx)
            }
            "commit-fragment" => {
                let target = self.resolve_comp_tok(at, 1)?;
                let idx = self.alloc(body);
                body.nodes[idx.idx()] = StmtKind::FragmentTransaction { target };
                Some(idx)
            }
            "read-input" => {
                let widget = self.resolve_widget_tok(at, 1)?;
                let idx = self.alloc(body);
                body.nodes[idx.idx()] = StmtKind::ReadInput { widget };
                Some(idx)
            }
            "return" => {
                let idx = self.alloc(body);
                body.nodes[idx.idx()] = StmtKind::Return;
                Some(idx)
            }
            "sem-wait" => {
                let idx = self.alloc(body);
                body.nodes[idx.idx()] = StmtKind::SemWait;
                Some(idx)
            }
            "sem-signal" => {
                let idx = self.alloc(body);
                body.nodes[idx.idx()] = StmtKind::SemSignal;
                Some(idx)
            }
            other => {
                let line = &self.lines[at];
                self.err(
                    DiagKind::Syntax,
                    line,
                    line.toks[0].col,
                    format!("unknown statement `{}`", other),
                );
                None
            }
        }
    }

    fn parse_optional_else(
        &mut self,
        cursor: &mut usize,
        end: usize,
        body: &mut MethodBody,
        opener: usize,
    ) -> Vec<StmtIdx> {
        let else_branch = if *cursor < end && self.lines[*cursor].kw() == "else" {
            *cursor += 1;
            self.parse_block(cursor, end, body)
        } else {
            Vec::new()
        };
        self.expect_end(cursor, end, opener);
        else_branch
    }

    fn expect_end(&mut self, cursor: &mut usize, end: usize, opener: usize) {
        if *cursor < end && self.lines[*cursor].kw() == "end" {
            *cursor += 1;
        } else {
            let line = &self.lines[opener];
            self.err(
                DiagKind::Syntax,
                line,
                line.toks[0].col,
                "block is missing its `end`",
            );
        }
    }

    fn parse_env_condition(&mut self, at: usize) -> Option<EnvCondition> {
        let line = &self.lines[at];
        let mut t = 1;
        let negated = line.toks.get(t).map(|x| x.text.as_str()) == Some("not");
        if negated {
            t += 1;
        }
        let kind_tok = line.toks.get(t).map(|x| x.text.clone());
        let kind = match kind_tok.as_deref() {
            Some("wifi-enabled") => EnvKind::WifiEnabled,
            Some("io-available") => EnvKind::IoAvailable,
            Some("storage-available") => EnvKind::StorageAvailable,
            Some("permission-granted") => {
                let name = self.text_tok(at, t + 1, "permission name")?;
                EnvKind::PermissionGranted { name }
            }
            Some("input-matches") => {
                let widget = self.resolve_widget_tok(at, t + 1)?;
                let line = &self.lines[at];
                let constraint = match line.toks.get(t + 2).map(|x| x.text.as_str()) {
                    Some("format") => match line.toks.get(t + 3).map(|x| x.text.as_str()) {
                        Some("email") => InputConstraint::Format(InputFormat::Email),
                        Some("phone") => InputConstraint::Format(InputFormat::Phone),
                        Some("number") => InputConstraint::Format(InputFormat::Number),
                        _ => {
                            self.syntax_at(at, "expected format `email`, `phone` or `number`");
                            return None;
                        }
                    },
                    Some("equals") => {
                        let v = self.text_tok(at, t + 3, "constant string")?;
                        InputConstraint::Equals(v)
                    }
                    Some("contains") => {
                        let v = self.text_tok(at, t + 3, "character")?;
                        let mut chars = v.chars();
                        match (chars.next(), chars.next()) {
                            (Some(c), None) => InputConstraint::Contains(c),
                            _ => {
                                self.syntax_at(at, "`contains` takes exactly one character");
                                return None;
                            }
                        }
                    }
                    _ => {
                        self.syntax_at(at, "expected `format`, `equals` or `contains`");
                        return None;
                    }
                };
                EnvKind::InputMatches { widget, constraint }
            }
            _ => {
                self.syntax_at(at, "unknown environment condition");
                return None;
            }
        };
        Some(EnvCondition { kind, negated })
    }

    fn syntax_at(&mut self, at: usize, msg: impl Into<String>) {
        let line = &self.lines[at];
        let (no, col) = (line.no, line.toks[0].col);
        self.diags
            .push(Diagnostic::new(DiagKind::Syntax, no, col, msg));
    }

    fn text_tok(&mut self, at: usize, tok: usize, what: &str) -> Option<String> {
        match self.lines[at].toks.get(tok) {
            Some(t) => Some(t.text.clone()),
            None => {
                self.syntax_at(at, format!("missing {}", what));
                None
            }
        }
    }

    fn unresolved(&mut self, at: usize, tok: usize, what: &str, name: &str) {
        let line = &self.lines[at];
        let col = line.toks.get(tok).map(|t| t.col).unwrap_or(1);
        let no = line.no;
        self.diags.push(Diagnostic::new(
            DiagKind::UnresolvedIdentifier,
            no,
            col,
            format!("unresolved {} `{}`", what, name),
        ));
    }

    fn resolve_method_tok(&mut self, at: usize, tok: usize) -> Option<MethodIdx> {
        let name = self.text_tok(at, tok, "method reference")?;
        if let Some((owner, local)) = name.split_once('.') {
            let hit = self.methods.iter().position(|m| {
                m.id == local
                    && match m.owner {
                        MethodOwner::Component(c) => self.components[c.idx()].id == owner,
                        MethodOwner::Async(a) => self.asyncs[a.idx()].id == owner,
                    }
            });
            if hit.is_none() {
                self.unresolved(at, tok, "method", &name);
            }
            return hit.map(|i| MethodIdx(i as u32));
        }
        let mut hits = self
            .methods
            .iter()
            .enumerate()
            .filter(|(_, m)| m.id == name);
        let first = hits.next();
        let second = hits.next();
        match (first, second) {
            (Some((i, _)), None) => Some(MethodIdx(i as u32)),
            (Some(_), Some(_)) => {
                self.unresolved(at, tok, "method (ambiguous, qualify with owner)", &name);
                None
            }
            _ => {
                self.unresolved(at, tok, "method", &name);
                None
            }
        }
    }

    fn resolve_async_tok(&mut self, at: usize, tok: usize) -> Option<AsyncIdx> {
        let name = self.text_tok(at, tok, "async construct reference")?;
        let hit = self.asyncs.iter().position(|a| a.id == name);
        if hit.is_none() {
            self.unresolved(at, tok, "async construct", &name);
        }
        hit.map(|i| AsyncIdx(i as u32))
    }

    fn resolve_comp_tok(&mut self, at: usize, tok: usize) -> Option<CompIdx> {
        let name = self.text_tok(at, tok, "component reference")?;
        let hit = self.components.iter().position(|c| c.id == name);
        if hit.is_none() {
            self.unresolved(at, tok, "component", &name);
        }
        hit.map(|i| CompIdx(i as u32))
    }

    fn resolve_obj_tok(&mut self, at: usize, tok: usize) -> Option<ObjIdx> {
        let name = self.text_tok(at, tok, "gui object reference")?;
        let hit = self.gui_objects.iter().position(|g| g.id == name);
        if hit.is_none() {
            self.unresolved(at, tok, "gui object", &name);
        }
        hit.map(|i| ObjIdx(i as u32))
    }

    fn resolve_widget_tok(&mut self, at: usize, tok: usize) -> Option<WidgetIdx> {
        let name = self.text_tok(at, tok, "widget reference")?;
        let hit = self.widgets.iter().position(|w| w.id == name);
        if hit.is_none() {
            self.unresolved(at, tok, "widget", &name);
        }
        hit.map(|i| WidgetIdx(i as u32))
    }

    // ------------------------------------------------------------------
    // Assembly
    // ------------------------------------------------------------------

    fn finish(mut self) -> Result<App, Vec<Diagnostic>> {
        // Fragment hosts.
        for (comp, host_name, ln, col) in std::mem::take(&mut self.fragment_hosts) {
            match self.components.iter().position(|c| c.id == host_name) {
                Some(h) => self.components[comp].host = Some(CompIdx(h as u32)),
                None => self.diags.push(Diagnostic::new(
                    DiagKind::UnresolvedIdentifier,
                    ln,
                    col,
                    format!("unresolved host activity `{}`", host_name),
                )),
            }
        }

        // Handler bindings.
        let mut handler_bindings = Vec::new();
        for (widget, method_name, source, ln, col) in std::mem::take(&mut self.bindings) {
            let resolved = if let Some((owner, local)) = method_name.split_once('.') {
                self.methods.iter().position(|m| {
                    m.id == local
                        && match m.owner {
                            MethodOwner::Component(c) => self.components[c.idx()].id == owner,
                            MethodOwner::Async(a) => self.asyncs[a.idx()].id == owner,
                        }
                })
            } else {
                let mut hits = self
                    .methods
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| m.id == method_name)
                    .map(|(i, _)| i);
                let first = hits.next();
                if hits.next().is_some() {
                    None
                } else {
                    first
                }
            };
            match resolved {
                Some(m) => handler_bindings.push(HandlerBinding {
                    widget,
                    method: MethodIdx(m as u32),
                    source,
                }),
                None => self.diags.push(Diagnostic::new(
                    DiagKind::UnresolvedIdentifier,
                    ln,
                    col,
                    format!("unresolved handler method `{}`", method_name),
                )),
            }
        }

        if self.app_name.is_none() {
            self.diags.push(Diagnostic::new(
                DiagKind::Syntax,
                1,
                1,
                "missing `app <name>` declaration",
            ));
        }

        let entry = match &self.entry_name {
            Some((name, ln, col)) => match self.components.iter().position(|c| c.id == *name) {
                Some(i) => Some(CompIdx(i as u32)),
                None => {
                    self.diags.push(Diagnostic::new(
                        DiagKind::UnresolvedIdentifier,
                        *ln,
                        *col,
                        format!("unresolved entry activity `{}`", name),
                    ));
                    None
                }
            },
            None => {
                self.diags.push(Diagnostic::new(
                    DiagKind::Syntax,
                    1,
                    1,
                    "missing `entry <activity>` declaration",
                ));
                None
            }
        };

        if !self.diags.is_empty() {
            self.diags.sort_by_key(|d| (d.line, d.col));
            return Err(self.diags);
        }

        Ok(App {
            name: self.app_name.unwrap(),
            components: self.components,
            asyncs: self.asyncs,
            methods: self.methods,
            gui_objects: self.gui_objects,
            widgets: self.widgets,
            handler_bindings,
            entry_activity: entry.unwrap(),
            api_config: ApiConfig::default_config(),
        })
    }
}
