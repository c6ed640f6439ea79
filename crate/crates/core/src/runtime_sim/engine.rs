//! The cooperative single-threaded engine behind [`run`](super::run),
//! schedule exploration and the fuzzer: an explicit UI work-item queue,
//! per-generation lifecycle state, async instances as resumable statement
//! VMs, and an access log feeding the race detector.

use super::*;
use crate::app_model::{CatchKind, ComponentKind, EnvCondition, EnvKind, GuiObjectKind};
use crate::rng::SplitMix64;
use std::collections::VecDeque;

const MAX_CALL_DEPTH: usize = 128;
const MAX_SPAWNS: usize = 1024;

/// Async completion policy of a run.
#[derive(Debug)]
pub(crate) enum Policy {
    Eager,
    Barrier,
    /// Completion slots scripted by the schedule explorer. Each spawn takes
    /// the next script entry or the earliest slot, recording
    /// (taken, min, max).
    Scripted {
        script: Vec<usize>,
        decisions: Vec<(usize, usize, usize)>,
    },
    /// Seeded coin flips decide completion timing (fuzzing).
    Random { rng: SplitMix64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Created,
    Started,
    Resumed,
    Paused,
    Stopped,
    Destroyed,
}

#[derive(Debug, Clone)]
enum WorkItem {
    Event(usize, UiEvent),
    Transition {
        target: CompIdx,
    },
    Delivered {
        inst: usize,
        method: MethodIdx,
        logical: LogThread,
        captured_gen: bool,
        detach_if_dead: bool,
    },
    Posted {
        method: MethodIdx,
        block: Vec<StmtIdx>,
        comp: CompIdx,
    },
}

#[derive(Debug)]
enum InstState {
    /// Runs after the current work item (eager and barrier policies).
    FreshAfterItem,
    /// Runs once the given event index has drained (scripted policy).
    FreshAtSlot(usize),
    /// Runs when a seeded coin says so (random policy).
    FreshRandom,
    Blocked(Vm),
    Done,
}

#[derive(Debug)]
struct AsyncInstance {
    construct: AsyncIdx,
    captured_comp: CompIdx,
    captured_gen: u32,
    state: InstState,
}

#[derive(Debug, Clone)]
struct Frame {
    method: MethodIdx,
    block: Vec<StmtIdx>,
    pos: usize,
    method_root: bool,
}

#[derive(Debug)]
struct Vm {
    frames: Vec<Frame>,
    /// Set when the code physically executes on an async thread.
    physical_async: Option<usize>,
    logical: LogThread,
    comp: CompIdx,
    gen: u32,
    /// Only an instance's own background VM parks at a semaphore wait.
    blockable: bool,
}

enum VmOutcome {
    Done,
    Blocked,
    Aborted,
}

#[derive(Debug)]
struct FragAttach {
    frag: CompIdx,
    frag_gen: u32,
    host: CompIdx,
    host_gen: u32,
}

pub struct Sim<'a> {
    app: &'a App,
    env: Environment,
    policy: Policy,
    total_events: usize,

    running: bool,
    result: Option<SimResult>,
    cur_event: usize,

    queue: VecDeque<WorkItem>,
    stack: Vec<(CompIdx, u32)>,
    phases: Vec<Vec<Phase>>,
    fragments: Vec<FragAttach>,
    instances: Vec<AsyncInstance>,
    sem: u32,
    widget_text: Vec<String>,
    spawns: usize,

    seq: u64,
    ticks: u64,
    method_log: Vec<String>,
    executed: BTreeSet<MethodIdx>,
    exec_log: Vec<String>,
    access_log: Vec<LogEntry>,
}

impl<'a> Sim<'a> {
    pub(crate) fn new(app: &'a App, env: Environment, policy: Policy, total_events: usize) -> Self {
        Sim {
            app,
            env,
            policy,
            total_events,
            running: false,
            result: None,
            cur_event: 0,
            queue: VecDeque::new(),
            stack: Vec::new(),
            phases: vec![Vec::new(); app.components.len()],
            fragments: Vec::new(),
            instances: Vec::new(),
            sem: 0,
            widget_text: vec![String::new(); app.widgets.len()],
            spawns: 0,
            seq: 0,
            ticks: 0,
            method_log: Vec::new(),
            executed: BTreeSet::new(),
            exec_log: Vec::new(),
            access_log: Vec::new(),
        }
    }

    pub fn can_continue(&self) -> bool {
        self.result.is_none()
    }

    pub fn is_running(&self) -> bool {
        self.running && self.result.is_none()
    }

    /// Top activity is stopped (sent to background).
    pub fn is_backgrounded(&self) -> bool {
        self.stack
            .last()
            .is_some_and(|&(c, g)| self.phase(c, g) == Phase::Stopped)
    }

    /// Widgets of the resumed top activity and its attached fragments.
    pub fn visible_widgets(&self) -> Vec<WidgetIdx> {
        let Some(&(top, gen)) = self.stack.last() else {
            return Vec::new();
        };
        if self.phase(top, gen) != Phase::Resumed {
            return Vec::new();
        }
        let mut owners: Vec<CompIdx> = vec![top];
        owners.extend(
            self.fragments
                .iter()
                .filter(|f| f.host == top && f.host_gen == gen)
                .map(|f| f.frag),
        );
        let mut out = Vec::new();
        for (wi, w) in self.app.widgets.iter().enumerate() {
            if owners.contains(&w.owner) {
                out.push(WidgetIdx(wi as u32));
            }
        }
        out
    }

    pub(crate) fn decisions(&self) -> Vec<(usize, usize, usize)> {
        match &self.policy {
            Policy::Scripted { decisions, .. } => decisions.clone(),
            _ => Vec::new(),
        }
    }

    /// Dispatch one user event (enqueue and drain to quiescence).
    pub fn dispatch(&mut self, index: usize, ev: &UiEvent) {
        if self.result.is_some() {
            return;
        }
        self.cur_event = index;
        self.queue.push_back(WorkItem::Event(index, ev.clone()));
        self.drain();
    }

    /// Final drain: forces remaining fresh asyncs to complete (blocked ones
    /// stay parked) and packages the run output.
    pub fn finish(mut self) -> RunOutput {
        if self.result.is_none() && self.running {
            loop {
                self.drain();
                if self.result.is_some() {
                    break;
                }
                let mut progressed = false;
                for i in 0..self.instances.len() {
                    if self.result.is_some() {
                        break;
                    }
                    if matches!(
                        self.instances[i].state,
                        InstState::FreshAfterItem | InstState::FreshAtSlot(_) | InstState::FreshRandom
                    ) {
                        self.run_background(i);
                        progressed = true;
                    }
                }
                if !progressed && self.queue.is_empty() {
                    break;
                }
            }
        }
        RunOutput {
            result: self.result.unwrap_or(SimResult::NormalCompletion),
            method_log: self.method_log,
            executed_methods: self.executed,
            exec_log: self.exec_log,
            access_log: self.access_log,
            ticks: self.ticks,
        }
    }

    // ------------------------------------------------------------------
    // Queue machinery
    // ------------------------------------------------------------------

    fn drain(&mut self) {
        loop {
            while self.result.is_none() {
                let Some(item) = self.queue.pop_front() else {
                    break;
                };
                self.ticks += 1;
                self.exec_item(item);
                self.after_item();
            }
            if self.result.is_some() {
                return;
            }
            // Queue empty: scripted slots due at this event, or random coin
            // flips, may complete backgrounds and enqueue deliveries.
            let mut ran = false;
            for i in 0..self.instances.len() {
                if self.result.is_some() {
                    return;
                }
                let due = match &mut self.instances[i].state {
                    InstState::FreshAtSlot(slot) => *slot <= self.cur_event,
                    InstState::FreshRandom => match &mut self.policy {
                        Policy::Random { rng } => rng.chance(1, 2),
                        _ => true,
                    },
                    _ => false,
                };
                if due {
                    self.run_background(i);
                    ran = true;
                }
            }
            if !ran {
                return;
            }
        }
    }

    fn after_item(&mut self) {
        loop {
            let mut progressed = false;
            for i in 0..self.instances.len() {
                if self.result.is_some() {
                    return;
                }
                match &self.instances[i].state {
                    InstState::FreshAfterItem => {
                        self.run_background(i);
                        progressed = true;
                    }
                    InstState::Blocked(_) if self.sem > 0 => {
                        self.sem -= 1;
                        let state =
                            std::mem::replace(&mut self.instances[i].state, InstState::Done);
                        let InstState::Blocked(vm) = state else {
                            unreachable!()
                        };
                        self.log_entry(|seq| LogEntry::WaitPass {
                            seq,
                            thread: vm.logical,
                        });
                        self.resume_background(i, vm);
                        progressed = true;
                    }
                    _ => {}
                }
            }
            if !progressed {
                return;
            }
        }
    }

    fn exec_item(&mut self, item: WorkItem) {
        match item {
            WorkItem::Event(index, ev) => {
                self.trace_item(format!("event={} item={:?}", index, kind_name(&ev)));
                self.exec_event(index, &ev);
            }
            WorkItem::Transition { target } => {
                self.trace_item(format!(
                    "event={} item=transition({})",
                    self.cur_event,
                    self.app.component(target).id
                ));
                self.exec_transition(target);
            }
            WorkItem::Delivered {
                inst,
                method,
                logical,
                captured_gen,
                detach_if_dead,
            } => {
                if !self.running {
                    return;
                }
                let comp = self.instances[inst].captured_comp;
                let gen = if captured_gen {
                    self.instances[inst].captured_gen
                } else {
                    self.current_gen(comp)
                };
                if detach_if_dead
                    && self.phase(comp, self.instances[inst].captured_gen) == Phase::Destroyed
                {
                    self.trace_item(format!(
                        "event={} item=delivery({}) detached",
                        self.cur_event,
                        self.app.async_construct(self.instances[inst].construct).id
                    ));
                    return;
                }
                self.trace_item(format!(
                    "event={} item=delivery({})",
                    self.cur_event,
                    self.app.async_construct(self.instances[inst].construct).id
                ));
                let mut vm = Vm {
                    frames: Vec::new(),
                    physical_async: None,
                    logical,
                    comp,
                    gen,
                    blockable: false,
                };
                self.enter_method(&mut vm, method);
                self.run_vm(&mut vm);
            }
            WorkItem::Posted { method, block, comp } => {
                if !self.running {
                    return;
                }
                self.trace_item(format!("event={} item=posted-block", self.cur_event));
                let gen = self.current_gen(comp);
                let mut vm = Vm {
                    frames: vec![Frame {
                        method,
                        block,
                        pos: 0,
                        method_root: true,
                    }],
                    physical_async: None,
                    logical: LogThread::Ui,
                    comp,
                    gen,
                    blockable: false,
                };
                self.run_vm(&mut vm);
            }
        }
    }

    fn trace_item(&mut self, detail: String) {
        let line = format!("[{}] thread=ui {}", self.ticks, detail);
        self.exec_log.push(line);
    }

    // ------------------------------------------------------------------
    // Events
    // ------------------------------------------------------------------

    fn exec_event(&mut self, index: usize, ev: &UiEvent) {
        match ev {
            UiEvent::Launch => {
                if self.running {
                    self.fault(EventFaultKind::AlreadyRunning);
                    return;
                }
                self.running = true;
                // Environment inputs preload widget text before anything runs.
                for (name, value) in self.env.inputs.clone() {
                    if let Some(w) = self.app.widget_by_name(&name) {
                        self.widget_text[w.idx()] = value;
                        self.log_access(
                            LogThread::Ui,
                            ThreadLabel::Ui,
                            None,
                            None,
                            Location::WidgetText { widget: w },
                            true,
                        );
                    }
                }
                let entry = self.app.entry_activity;
                let gen = self.create_component(entry);
                self.stack.push((entry, gen));
                self.advance_to_resumed(entry, gen);
            }
            UiEvent::Click { widget } | UiEvent::ListItemClick { widget, .. } => {
                let Some(w) = self.require_visible(widget) else {
                    return;
                };
                if let Some(binding) = self.app.binding_for(w) {
                    self.run_handler(binding.method);
                }
            }
            UiEvent::Input { widget, value } => {
                let Some(w) = self.require_visible(widget) else {
                    return;
                };
                self.widget_text[w.idx()] = value.clone();
                self.log_access(
                    LogThread::Ui,
                    ThreadLabel::Ui,
                    None,
                    None,
                    Location::WidgetText { widget: w },
                    true,
                );
                if let Some(binding) = self.app.binding_for(w) {
                    self.run_handler(binding.method);
                }
            }
            UiEvent::Rotate => {
                if !self.require_running() {
                    return;
                }
                self.rotate_top();
            }
            UiEvent::Home => {
                if !self.require_running() {
                    return;
                }
                let (comp, gen) = *self.stack.last().unwrap();
                self.pause_if_resumed(comp, gen);
                self.stop_frame(comp, gen);
            }
            UiEvent::LongPressHomeThenBack => {
                if !self.require_running() {
                    return;
                }
                let (comp, gen) = *self.stack.last().unwrap();
                self.pause_if_resumed(comp, gen);
                self.stop_frame(comp, gen);
                self.restart_frame(comp, gen);
            }
            UiEvent::ScreenToggle => {
                if !self.require_running() {
                    return;
                }
                let (comp, gen) = *self.stack.last().unwrap();
                if self.phase(comp, gen) == Phase::Resumed {
                    self.pause_if_resumed(comp, gen);
                    self.resume_frame(comp, gen);
                }
            }
            UiEvent::Back => {
                if !self.require_running() {
                    return;
                }
                let (comp, gen) = self.stack.pop().unwrap();
                self.pause_if_resumed(comp, gen);
                self.stop_frame(comp, gen);
                self.destroy_frame(comp, gen);
                if let Some(&(revealed, rgen)) = self.stack.last() {
                    self.restart_frame(revealed, rgen);
                } else {
                    // App exited: pending work of the dead process is gone.
                    self.running = false;
                    self.queue.clear();
                    for inst in &mut self.instances {
                        inst.state = InstState::Done;
                    }
                }
            }
        }
        let _ = index;
    }

    fn require_running(&mut self) -> bool {
        if !self.running || self.stack.is_empty() {
            self.fault(EventFaultKind::AppExited);
            return false;
        }
        true
    }

    fn require_visible(&mut self, widget: &str) -> Option<WidgetIdx> {
        let Some(w) = self.app.widget_by_name(widget) else {
            self.fault(EventFaultKind::UnknownWidget);
            return None;
        };
        if !self.running || self.stack.is_empty() {
            self.fault(EventFaultKind::AppExited);
            return None;
        }
        if !self.visible_widgets().contains(&w) {
            self.fault(EventFaultKind::WidgetNotVisible);
            return None;
        }
        Some(w)
    }

    fn run_handler(&mut self, method: MethodIdx) {
        let comp = match self.app.method(method).owner {
            crate::app_model::MethodOwner::Component(c) => c,
            crate::app_model::MethodOwner::Async(_) => return,
        };
        let gen = self.active_gen(comp);
        let mut vm = Vm {
            frames: Vec::new(),
            physical_async: None,
            logical: LogThread::Ui,
            comp,
            gen,
            blockable: false,
        };
        self.enter_method(&mut vm, method);
        self.run_vm(&mut vm);
    }

    /// Generation of the on-screen frame owning this component, falling back
    /// to the latest created generation.
    fn active_gen(&self, comp: CompIdx) -> u32 {
        if let Some(&(_, gen)) = self.stack.iter().rev().find(|&&(c, _)| c == comp) {
            return gen;
        }
        if let Some(f) = self.fragments.iter().rev().find(|f| f.frag == comp) {
            return f.frag_gen;
        }
        self.current_gen(comp)
    }

    // ------------------------------------------------------------------
    // Lifecycle machinery
    // ------------------------------------------------------------------

    fn phase(&self, comp: CompIdx, gen: u32) -> Phase {
        self.phases[comp.idx()]
            .get(gen as usize)
            .copied()
            .unwrap_or(Phase::Destroyed)
    }

    fn set_phase(&mut self, comp: CompIdx, gen: u32, phase: Phase) {
        // The lifecycle machine only takes transitions from the fixed edge
        // set; anything else is an engine bug, never a crash report.
        debug_assert!(
            matches!(
                (self.phases[comp.idx()][gen as usize], phase),
                (Phase::Created, Phase::Started)
                    | (Phase::Started, Phase::Resumed)
                    | (Phase::Resumed, Phase::Paused)
                    | (Phase::Paused, Phase::Resumed)
                    | (Phase::Paused, Phase::Stopped)
                    | (Phase::Stopped, Phase::Started)
                    | (Phase::Stopped, Phase::Destroyed)
            ),
            "illegal lifecycle transition {:?} -> {:?}",
            self.phases[comp.idx()][gen as usize],
            phase
        );
        if phase == Phase::Resumed && self.app.component(comp).kind == ComponentKind::Activity {
            debug_assert!(
                !self.phases.iter().enumerate().any(|(ci, gens)| {
                    self.app.components[ci].kind == ComponentKind::Activity
                        && gens.contains(&Phase::Resumed)
                }),
                "a second activity resumed while another is still resumed"
            );
        }
        self.phases[comp.idx()][gen as usize] = phase;
    }

    fn current_gen(&self, comp: CompIdx) -> u32 {
        (self.phases[comp.idx()].len() as u32).saturating_sub(1)
    }

    /// Create a fresh generation: marks the frame and its gui objects live
    /// and runs onCreate.
    fn create_component(&mut self, comp: CompIdx) -> u32 {
        let gen = self.phases[comp.idx()].len() as u32;
        self.phases[comp.idx()].push(Phase::Created);
        self.log_access(
            LogThread::Ui,
            ThreadLabel::Ui,
            None,
            None,
            Location::ComponentLive { comp, generation: gen },
            true,
        );
        for &obj in &self.app.component(comp).gui_objects {
            self.log_access(
                LogThread::Ui,
                ThreadLabel::Ui,
                None,
                None,
                Location::Gui { obj, generation: gen },
                true,
            );
        }
        self.run_lifecycle(comp, gen, LifecycleCallback::OnCreate);
        gen
    }

    fn run_lifecycle(&mut self, comp: CompIdx, gen: u32, cb: LifecycleCallback) {
        if self.result.is_some() {
            return;
        }
        if let Some(&m) = self.app.component(comp).lifecycle.get(&cb) {
            let mut vm = Vm {
                frames: Vec::new(),
                physical_async: None,
                logical: LogThread::Ui,
                comp,
                gen,
                blockable: false,
            };
            self.enter_method(&mut vm, m);
            self.run_vm(&mut vm);
        }
    }

    fn attached_fragments(&self, host: CompIdx, host_gen: u32) -> Vec<(CompIdx, u32)> {
        self.fragments
            .iter()
            .filter(|f| f.host == host && f.host_gen == host_gen)
            .map(|f| (f.frag, f.frag_gen))
            .collect()
    }

    /// Upward transitions run the host callback first, then attached
    /// fragments follow.
    fn advance_to_resumed(&mut self, comp: CompIdx, gen: u32) {
        self.set_phase(comp, gen, Phase::Started);
        self.run_lifecycle(comp, gen, LifecycleCallback::OnStart);
        for (f, fg) in self.attached_fragments(comp, gen) {
            self.set_phase(f, fg, Phase::Started);
            self.run_lifecycle(f, fg, LifecycleCallback::OnStart);
        }
        self.resume_frame(comp, gen);
    }

    fn resume_frame(&mut self, comp: CompIdx, gen: u32) {
        self.set_phase(comp, gen, Phase::Resumed);
        self.run_lifecycle(comp, gen, LifecycleCallback::OnResume);
        for (f, fg) in self.attached_fragments(comp, gen) {
            self.set_phase(f, fg, Phase::Resumed);
            self.run_lifecycle(f, fg, LifecycleCallback::OnResume);
        }
    }

    /// Downward transitions run fragment callbacks first, then the host, and
    /// update state after the callbacks ran.
    fn pause_if_resumed(&mut self, comp: CompIdx, gen: u32) {
        if self.phase(comp, gen) != Phase::Resumed {
            return;
        }
        for (f, fg) in self.attached_fragments(comp, gen) {
            self.run_lifecycle(f, fg, LifecycleCallback::OnPause);
            self.set_phase(f, fg, Phase::Paused);
        }
        self.run_lifecycle(comp, gen, LifecycleCallback::OnPause);
        self.set_phase(comp, gen, Phase::Paused);
    }

    /// Stop writes the frame's liveness state (observable by the race
    /// detector: fragment transactions after stop lose state).
    fn stop_frame(&mut self, comp: CompIdx, gen: u32) {
        if matches!(self.phase(comp, gen), Phase::Stopped | Phase::Destroyed) {
            return;
        }
        for (f, fg) in self.attached_fragments(comp, gen) {
            self.run_lifecycle(f, fg, LifecycleCallback::OnStop);
            self.set_phase(f, fg, Phase::Stopped);
            self.log_access(
                LogThread::Ui,
                ThreadLabel::Ui,
                None,
                None,
                Location::ComponentLive { comp: f, generation: fg },
                true,
            );
        }
        self.run_lifecycle(comp, gen, LifecycleCallback::OnStop);
        self.set_phase(comp, gen, Phase::Stopped);
        self.log_access(
            LogThread::Ui,
            ThreadLabel::Ui,
            None,
            None,
            Location::ComponentLive { comp, generation: gen },
            true,
        );
    }

    fn restart_frame(&mut self, comp: CompIdx, gen: u32) {
        self.run_lifecycle(comp, gen, LifecycleCallback::OnRestart);
        for (f, fg) in self.attached_fragments(comp, gen) {
            self.run_lifecycle(f, fg, LifecycleCallback::OnRestart);
        }
        self.advance_to_resumed(comp, gen);
    }

    fn destroy_frame(&mut self, comp: CompIdx, gen: u32) {
        for (f, fg) in self.attached_fragments(comp, gen) {
            self.run_lifecycle(f, fg, LifecycleCallback::OnDestroy);
            self.set_phase(f, fg, Phase::Destroyed);
            self.mark_destroyed(f, fg);
        }
        self.fragments.retain(|f| !(f.host == comp && f.host_gen == gen));
        self.run_lifecycle(comp, gen, LifecycleCallback::OnDestroy);
        self.set_phase(comp, gen, Phase::Destroyed);
        self.mark_destroyed(comp, gen);
    }

    /// Destruction writes: the frame's liveness and each owned gui object.
    fn mark_destroyed(&mut self, comp: CompIdx, gen: u32) {
        self.log_access(
            LogThread::Ui,
            ThreadLabel::Ui,
            None,
            None,
            Location::ComponentLive { comp, generation: gen },
            true,
        );
        for &obj in &self.app.component(comp).gui_objects {
            self.log_access(
                LogThread::Ui,
                ThreadLabel::Ui,
                None,
                None,
                Location::Gui { obj, generation: gen },
                true,
            );
        }
    }

    /// Destroy-and-recreate of the top activity. Backgrounded activities
    /// keep their generation. Recreation re-runs onCreate, which re-commits
    /// fragments committed there.
    fn rotate_top(&mut self) {
        let (comp, gen) = *self.stack.last().unwrap();
        self.pause_if_resumed(comp, gen);
        self.stop_frame(comp, gen);
        self.destroy_frame(comp, gen);
        if self.result.is_some() {
            return;
        }
        let new_gen = self.create_component(comp);
        *self.stack.last_mut().unwrap() = (comp, new_gen);
        if self.result.is_some() {
            return;
        }
        self.advance_to_resumed(comp, new_gen);
    }

    fn exec_transition(&mut self, target: CompIdx) {
        if !self.running || self.result.is_some() {
            return;
        }
        if let Some(&(top, top_gen)) = self.stack.last() {
            if top == target || self.stack.iter().any(|&(c, _)| c == target) {
                // Single-instance model: re-starting an existing activity is
                // a no-op.
                return;
            }
            self.pause_if_resumed(top, top_gen);
            self.stop_frame(top, top_gen);
        }
        if self.result.is_some() {
            return;
        }
        let gen = self.create_component(target);
        self.stack.push((target, gen));
        if self.result.is_some() {
            return;
        }
        self.advance_to_resumed(target, gen);
    }

    // ------------------------------------------------------------------
    // Async instances
    // ------------------------------------------------------------------

    fn run_background(&mut self, inst: usize) {
        self.instances[inst].state = InstState::Done;
        let construct = self.instances[inst].construct;
        let Some(&bg) = self
            .app
            .async_construct(construct)
            .callbacks
            .get(&CallbackSlot::Background)
        else {
            return;
        };
        let mut vm = Vm {
            frames: Vec::new(),
            physical_async: Some(inst),
            logical: LogThread::Async(inst),
            comp: self.instances[inst].captured_comp,
            gen: self.instances[inst].captured_gen,
            blockable: true,
        };
        self.enter_method(&mut vm, bg);
        match self.run_vm(&mut vm) {
            VmOutcome::Blocked => self.instances[inst].state = InstState::Blocked(vm),
            VmOutcome::Done => self.deliver(inst),
            VmOutcome::Aborted => {}
        }
    }

    fn resume_background(&mut self, inst: usize, mut vm: Vm) {
        match self.run_vm(&mut vm) {
            VmOutcome::Blocked => self.instances[inst].state = InstState::Blocked(vm),
            VmOutcome::Done => self.deliver(inst),
            VmOutcome::Aborted => {}
        }
    }

    /// Background finished: enqueue the result delivery. Tasks and loaders
    /// deliver their postExecute bound to the captured generation (loaders
    /// detach when it died); intent-service results arrive via a receiver on
    /// the UI thread against the current generation.
    fn deliver(&mut self, inst: usize) {
        let construct = self.app.async_construct(self.instances[inst].construct);
        let Some(&post) = construct.callbacks.get(&CallbackSlot::PostExecute) else {
            return;
        };
        let item = match construct.kind {
            crate::app_model::AsyncKind::Task | crate::app_model::AsyncKind::Loader => {
                WorkItem::Delivered {
                    inst,
                    method: post,
                    logical: LogThread::Async(inst),
                    captured_gen: true,
                    detach_if_dead: construct.lifecycle_aware,
                }
            }
            crate::app_model::AsyncKind::IntentService => WorkItem::Delivered {
                inst,
                method: post,
                logical: LogThread::Ui,
                captured_gen: false,
                detach_if_dead: false,
            },
            crate::app_model::AsyncKind::Thread => return,
        };
        self.queue.push_back(item);
    }

    // ------------------------------------------------------------------
    // Statement VM
    // ------------------------------------------------------------------

    fn enter_method(&mut self, vm: &mut Vm, m: MethodIdx) {
        self.executed.insert(m);
        self.method_log.push(self.app.method_name(m));
        let thread = match vm.physical_async {
            Some(i) => format!(
                "async:{}",
                self.app.async_construct(self.instances[i].construct).id
            ),
            None => "ui".to_string(),
        };
        self.exec_log.push(format!(
            "[{}] thread={} event={} method={}",
            self.ticks,
            thread,
            self.cur_event,
            self.app.method_name(m)
        ));
        vm.frames.push(Frame {
            method: m,
            block: self.app.method(m).body.roots.clone(),
            pos: 0,
            method_root: true,
        });
    }

    fn run_vm(&mut self, vm: &mut Vm) -> VmOutcome {
        loop {
            if self.result.is_some() {
                return VmOutcome::Aborted;
            }
            let Some(frame) = vm.frames.last_mut() else {
                return VmOutcome::Done;
            };
            if frame.pos >= frame.block.len() {
                vm.frames.pop();
                continue;
            }
            let stmt = frame.block[frame.pos];
            let method = frame.method;
            frame.pos += 1;
            match self.exec_stmt(vm, method, stmt) {
                StmtFlow::Continue => {}
                StmtFlow::Blocked => return VmOutcome::Blocked,
                StmtFlow::ReturnFromMethod => {
                    while let Some(f) = vm.frames.pop() {
                        if f.method_root {
                            break;
                        }
                    }
                }
            }
        }
    }

    fn exec_stmt(&mut self, vm: &mut Vm, method: MethodIdx, stmt: StmtIdx) -> StmtFlow {
        let node = self.app.method(method).body.node(stmt).clone();
        let site = Site { method, stmt };
        match node {
            StmtKind::Call { target } => {
                if vm.frames.len() >= MAX_CALL_DEPTH {
                    self.fault(EventFaultKind::CallDepthExceeded);
                    return StmtFlow::Continue;
                }
                self.enter_method(vm, target);
            }
            StmtKind::StartAsync { construct } => {
                if self.spawns >= MAX_SPAWNS {
                    self.fault(EventFaultKind::SpawnLimit);
                    return StmtFlow::Continue;
                }
                self.spawns += 1;
                // onPreExecute runs synchronously on the starting thread
                // before the background begins.
                if let Some(&pre) = self
                    .app
                    .async_construct(construct)
                    .callbacks
                    .get(&CallbackSlot::PreExecute)
                {
                    let mut sub = Vm {
                        frames: Vec::new(),
                        physical_async: vm.physical_async,
                        logical: vm.logical,
                        comp: vm.comp,
                        gen: vm.gen,
                        blockable: false,
                    };
                    self.enter_method(&mut sub, pre);
                    if !matches!(self.run_vm(&mut sub), VmOutcome::Done) {
                        return StmtFlow::Continue;
                    }
                }
                let inst = self.instances.len();
                let state = match &mut self.policy {
                    Policy::Eager | Policy::Barrier => InstState::FreshAfterItem,
                    Policy::Scripted { script, decisions } => {
                        let min = self.cur_event.min(self.total_events.saturating_sub(1));
                        let max = self.total_events.saturating_sub(1);
                        let taken = script.get(decisions.len()).copied().unwrap_or(min);
                        let taken = taken.clamp(min, max);
                        decisions.push((taken, min, max));
                        InstState::FreshAtSlot(taken)
                    }
                    Policy::Random { .. } => InstState::FreshRandom,
                };
                self.instances.push(AsyncInstance {
                    construct,
                    captured_comp: vm.comp,
                    captured_gen: vm.gen,
                    state,
                });
                let parent = vm.logical;
                self.log_entry(|seq| LogEntry::Spawn {
                    seq,
                    parent,
                    child: LogThread::Async(inst),
                });
            }
            StmtKind::UiAccess { target, .. } => {
                let owner = self.app.gui_object(target).owner;
                let gen = if owner == vm.comp {
                    vm.gen
                } else {
                    self.current_gen(owner)
                };
                let logical = vm.logical;
                let label = self.vm_label(vm);
                self.log_access(
                    logical,
                    label,
                    Some(method),
                    Some(site),
                    Location::Gui { obj: target, generation: gen },
                    true,
                );
                if let Some(i) = vm.physical_async {
                    let exception =
                        if self.app.gui_object(target).kind == GuiObjectKind::ListAdapter {
                            ExceptionKind::IllegalStateException
                        } else {
                            ExceptionKind::CalledFromWrongThread
                        };
                    self.crash(vm, site, exception, Some(i));
                } else if self.app.gui_object(target).kind == GuiObjectKind::Dialog
                    && self.phase(owner, gen) == Phase::Destroyed
                {
                    self.crash(vm, site, ExceptionKind::BadTokenException, None);
                }
            }
            StmtKind::UiCreate { .. } => {
                if let Some(i) = vm.physical_async {
                    self.crash(vm, site, ExceptionKind::RuntimeExceptionLooper, Some(i));
                }
            }
            StmtKind::PostToUi { body } => {
                self.queue.push_back(WorkItem::Posted {
                    method,
                    block: body,
                    comp: vm.comp,
                });
            }
            StmtKind::UiSafeCheckIf {
                then_branch,
                else_branch,
                ..
            } => {
                let logical = vm.logical;
                let label = self.vm_label(vm);
                self.log_access(
                    logical,
                    label,
                    Some(method),
                    Some(site),
                    Location::ComponentLive {
                        comp: vm.comp,
                        generation: vm.gen,
                    },
                    false,
                );
                let alive = self.phase(vm.comp, vm.gen) != Phase::Destroyed;
                vm.frames.push(Frame {
                    method,
                    block: if alive { then_branch } else { else_branch },
                    pos: 0,
                    method_root: false,
                });
            }
            StmtKind::EnvIf {
                cond,
                then_branch,
                else_branch,
            } => {
                let value = self.eval_env(vm, method, &cond);
                vm.frames.push(Frame {
                    method,
                    block: if value { then_branch } else { else_branch },
                    pos: 0,
                    method_root: false,
                });
            }
            StmtKind::TryCatch {
                body,
                exception,
                handler,
            } => {
                let fault_injected = match exception {
                    CatchKind::Io => !self.env.io_available(),
                    CatchKind::Storage => !self.env.storage_available(),
                };
                vm.frames.push(Frame {
                    method,
                    block: if fault_injected { handler } else { body },
                    pos: 0,
                    method_root: false,
                });
            }
            StmtKind::StartComponent { target } => {
                self.queue.push_back(WorkItem::Transition { target });
            }
            StmtKind::FragmentTransaction { target } => {
                let logical = vm.logical;
                let label = self.vm_label(vm);
                self.log_access(
                    logical,
                    label,
                    Some(method),
                    Some(site),
                    Location::ComponentLive {
                        comp: vm.comp,
                        generation: vm.gen,
                    },
                    false,
                );
                if let Some(i) = vm.physical_async {
                    self.crash(vm, site, ExceptionKind::CalledFromWrongThread, Some(i));
                    return StmtFlow::Continue;
                }
                if matches!(self.phase(vm.comp, vm.gen), Phase::Stopped | Phase::Destroyed) {
                    self.crash(vm, site, ExceptionKind::IllegalStateException, None);
                    return StmtFlow::Continue;
                }
                self.commit_fragment(vm, target);
            }
            StmtKind::ReadInput { widget } => {
                let logical = vm.logical;
                let label = self.vm_label(vm);
                self.log_access(
                    logical,
                    label,
                    Some(method),
                    Some(site),
                    Location::WidgetText { widget },
                    false,
                );
            }
            StmtKind::Return => return StmtFlow::ReturnFromMethod,
            StmtKind::SemWait => {
                if self.sem > 0 {
                    self.sem -= 1;
                    let thread = vm.logical;
                    self.log_entry(|seq| LogEntry::WaitPass { seq, thread });
                } else if vm.blockable {
                    return StmtFlow::Blocked;
                }
            }
            StmtKind::SemSignal => {
                self.sem += 1;
                let thread = vm.logical;
                self.log_entry(|seq| LogEntry::Signal { seq, thread });
            }
        }
        StmtFlow::Continue
    }

    fn commit_fragment(&mut self, vm: &Vm, target: CompIdx) {
        let host = vm.comp;
        let host_gen = vm.gen;
        if self
            .fragments
            .iter()
            .any(|f| f.frag == target && f.host == host && f.host_gen == host_gen)
        {
            return;
        }
        if self.app.component(target).kind != ComponentKind::Fragment {
            return;
        }
        let frag_gen = self.create_component(target);
        self.fragments.push(FragAttach {
            frag: target,
            frag_gen,
            host,
            host_gen,
        });
        // Catch the fragment up to its host's current lifecycle phase.
        let host_phase = self.phase(host, host_gen);
        if matches!(host_phase, Phase::Started | Phase::Resumed | Phase::Paused) {
            self.set_phase(target, frag_gen, Phase::Started);
            self.run_lifecycle(target, frag_gen, LifecycleCallback::OnStart);
        }
        if host_phase == Phase::Resumed {
            self.set_phase(target, frag_gen, Phase::Resumed);
            self.run_lifecycle(target, frag_gen, LifecycleCallback::OnResume);
        }
    }

    fn eval_env(&mut self, vm: &Vm, method: MethodIdx, cond: &EnvCondition) -> bool {
        let raw = match &cond.kind {
            EnvKind::WifiEnabled => self.env.wifi_enabled(),
            EnvKind::PermissionGranted { name } => self.env.permission_granted(name),
            EnvKind::IoAvailable => self.env.io_available(),
            EnvKind::StorageAvailable => self.env.storage_available(),
            EnvKind::InputMatches { widget, constraint } => {
                let logical = vm.logical;
                let label = self.vm_label(vm);
                self.log_access(
                    logical,
                    label,
                    Some(method),
                    None,
                    Location::WidgetText { widget: *widget },
                    false,
                );
                let value = &self.widget_text[widget.idx()];
                match constraint {
                    crate::app_model::InputConstraint::Format(f) => f.matches(value),
                    crate::app_model::InputConstraint::Equals(v) => value == v,
                    crate::app_model::InputConstraint::Contains(c) => value.contains(*c),
                }
            }
        };
        raw != cond.negated
    }

    fn vm_label(&self, vm: &Vm) -> ThreadLabel {
        match vm.logical {
            LogThread::Ui => ThreadLabel::Ui,
            LogThread::Async(i) => {
                super::async_label(self.app, self.instances[i].construct)
            }
        }
    }

    // ------------------------------------------------------------------
    // Faults, crashes, logging
    // ------------------------------------------------------------------

    fn fault(&mut self, kind: EventFaultKind) {
        if self.result.is_none() {
            self.result = Some(SimResult::EventFault {
                index: self.cur_event,
                kind,
            });
        }
    }

    fn crash(&mut self, vm: &Vm, site: Site, exception: ExceptionKind, async_inst: Option<usize>) {
        if self.result.is_some() {
            return;
        }
        let thread = match async_inst {
            Some(i) => super::async_label(self.app, self.instances[i].construct),
            None => ThreadLabel::Ui,
        };
        let method_chain: Vec<String> = vm
            .frames
            .iter()
            .filter(|f| f.method_root)
            .map(|f| self.app.method_name(f.method))
            .collect();
        let report = CrashReport {
            exception,
            thread,
            method_chain,
            faulty_site: site.display(self.app),
            event_index: self.cur_event,
            environment: self.env.clone(),
            site,
        };
        self.exec_log.push(format!(
            "[{}] crash exception={} site={}",
            self.ticks, report.exception, report.faulty_site
        ));
        self.result = Some(SimResult::Crash(report));
    }

    fn log_entry(&mut self, f: impl FnOnce(u64) -> LogEntry) {
        let seq = self.seq;
        self.seq += 1;
        self.access_log.push(f(seq));
    }

    #[allow(clippy::too_many_arguments)]
    fn log_access(
        &mut self,
        thread: LogThread,
        thread_label: ThreadLabel,
        method: Option<MethodIdx>,
        site: Option<Site>,
        location: Location,
        is_write: bool,
    ) {
        let seq = self.seq;
        self.seq += 1;
        self.access_log.push(LogEntry::Access(AccessRecord {
            seq,
            thread,
            thread_label,
            method,
            site,
            location,
            is_write,
        }));
    }
}

enum StmtFlow {
    Continue,
    Blocked,
    ReturnFromMethod,
}

fn kind_name(ev: &UiEvent) -> String {
    match ev {
        UiEvent::Launch => "launch".into(),
        UiEvent::Click { widget } => format!("click({})", widget),
        UiEvent::ListItemClick { widget, item } => format!("list-item-click({}, {})", widget, item),
        UiEvent::Input { widget, .. } => format!("input({})", widget),
        UiEvent::Rotate => "rotate".into(),
        UiEvent::Home => "home".into(),
        UiEvent::LongPressHomeThenBack => "long-press-home-then-back".into(),
        UiEvent::ScreenToggle => "screen-toggle".into(),
        UiEvent::Back => "back".into(),
    }
}
