//! The two comparison baselines, re-created inside the simulator: a random
//! GUI fuzzer (monkey-style) and a happens-before race detector over run
//! access logs.

use crate::app_model::{App, WidgetClass};
use crate::event_synth::{Environment, UiEvent};
use crate::rng::SplitMix64;
use crate::runtime_sim::{
    engine::Policy, AccessRecord, CrashReport, Location, LogEntry, LogThread, Sim, SimResult,
    ThreadLabel,
};
use serde::Serialize;
use std::collections::BTreeMap;

// ---------------------------------------------------------------------------
// Random fuzzer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzCrash {
    pub report: CrashReport,
    /// Cumulative event count when this crash site first occurred (the
    /// launch counts as event 1).
    #[serde(rename = "eventsToFirst")]
    pub events_to_first: u64,
    #[serde(rename = "wallTicks")]
    pub wall_ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzResult {
    pub crashes: Vec<FuzzCrash>,
    #[serde(rename = "eventBudget")]
    pub event_budget: u64,
    pub seed: u64,
}

/// Random GUI fuzzing with a fixed event budget. Events are drawn uniformly
/// from the actions applicable in the current GUI state (clicks and inputs
/// on visible bound widgets, rotate, home, back, screen toggle); async
/// completion timing is drawn randomly from the schedule space. The app is
/// relaunched after a crash or exit, and every distinct crash site is
/// recorded once with its first-occurrence event count. Deterministic given
/// the seed.
pub fn fuzz(app: &App, event_budget: u64, seed: u64) -> FuzzResult {
    fuzz_with_logs(app, event_budget, seed).0
}

/// Like [`fuzz`], additionally returning each session's access log.
pub fn fuzz_with_logs(app: &App, event_budget: u64, seed: u64) -> (FuzzResult, Vec<Vec<LogEntry>>) {
    let mut master = SplitMix64::new(seed);
    let env = Environment::default();
    let input_pool = ["", "a", "text", "42", "a@b.co", "5551234", "LM317"];

    let mut crashes: Vec<FuzzCrash> = Vec::new();
    let mut logs = Vec::new();
    let mut events_used: u64 = 0;
    let mut ticks_before: u64 = 0;

    while events_used < event_budget {
        let policy = Policy::Random {
            rng: SplitMix64::new(master.next_u64()),
        };
        let mut sim = Sim::new(app, env.clone(), policy, 0);
        // One session: runs until crash, exit-after-back, or budget end.
        while events_used < event_budget && sim.can_continue() {
            let ev = if !sim.is_running() {
                UiEvent::Launch
            } else if sim.is_backgrounded() {
                // The only actions that make sense on a backgrounded app.
                match master.below(2) {
                    0 => UiEvent::LongPressHomeThenBack,
                    _ => UiEvent::Back,
                }
            } else {
                let widgets = sim.visible_widgets();
                let mut options: Vec<UiEvent> = widgets
                    .iter()
                    .map(|&w| {
                        let decl = app.widget(w);
                        match decl.class {
                            WidgetClass::Button => UiEvent::Click {
                                widget: decl.id.clone(),
                            },
                            WidgetClass::List => UiEvent::ListItemClick {
                                widget: decl.id.clone(),
                                item: 0,
                            },
                            WidgetClass::Input => UiEvent::Input {
                                widget: decl.id.clone(),
                                value: input_pool[master.below(input_pool.len())].to_string(),
                            },
                        }
                    })
                    .collect();
                options.push(UiEvent::Rotate);
                options.push(UiEvent::Home);
                options.push(UiEvent::Back);
                options.push(UiEvent::ScreenToggle);
                options[master.below(options.len())].clone()
            };
            let index = events_used as usize;
            sim.dispatch(index, &ev);
            events_used += 1;
        }
        let still_running = sim.is_running();
        let output = sim.finish();
        let session_ticks = output.ticks;
        if let SimResult::Crash(report) = &output.result {
            if !crashes
                .iter()
                .any(|c| c.report.faulty_site == report.faulty_site)
            {
                crashes.push(FuzzCrash {
                    report: report.clone(),
                    events_to_first: events_used,
                    wall_ticks: ticks_before + session_ticks,
                });
            }
        }
        ticks_before += session_ticks;
        logs.push(output.access_log);
        if events_used >= event_budget && still_running {
            break;
        }
    }

    (
        FuzzResult {
            crashes,
            event_budget,
            seed,
        },
        logs,
    )
}

// ---------------------------------------------------------------------------
// Happens-before race detection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AccessDesc {
    pub thread: ThreadLabel,
    pub method: Option<String>,
    pub site: Option<String>,
    pub location: String,
    pub kind: &'static str,
}

/// A conflicting, unordered access pair on a shared GUI location.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaceReport {
    #[serde(rename = "accessA")]
    pub access_a: AccessDesc,
    #[serde(rename = "accessB")]
    pub access_b: AccessDesc,
    #[serde(rename = "hbRelated")]
    pub hb_related: bool,
    /// App-code statement site used for deduplication.
    pub site: String,
}

type Clock = BTreeMap<LogThread, u64>;

fn joined(into: &mut Clock, from: &Clock) {
    for (&t, &v) in from {
        let e = into.entry(t).or_insert(0);
        if *e < v {
            *e = v;
        }
    }
}

fn happens_before(a_thread: LogThread, a_clock: &Clock, b_clock: &Clock) -> bool {
    let a_pos = a_clock.get(&a_thread).copied().unwrap_or(0);
    b_clock.get(&a_thread).copied().unwrap_or(0) >= a_pos
}

/// Detect stale-access races between the UI thread and async threads in one
/// run log.
///
/// Happens-before edges: program order per logical thread, async start
/// edges, semaphore release-to-wait edges, and UI-queue order (UI work items
/// share the UI logical thread's program order). A pair is reported when a
/// UI-thread write is observed before an async-thread access to the same
/// location without a happens-before path ordering them — the async-side
/// code touched state the UI thread tore down underneath it. Accessing an
/// object that is destroyed only later is ordinary teardown, not a race.
/// Reports are deduplicated by app-code statement site, one per site.
pub fn detect_races(app: &App, log: &[LogEntry]) -> Vec<RaceReport> {
    let mut clocks: BTreeMap<LogThread, Clock> = BTreeMap::new();
    let mut sem_clock: Clock = Clock::new();
    let mut accesses: Vec<(AccessRecord, Clock)> = Vec::new();

    for entry in log {
        match entry {
            LogEntry::Spawn { parent, child, .. } => {
                let parent_clock = clocks.get(parent).cloned().unwrap_or_default();
                joined(clocks.entry(*child).or_default(), &parent_clock);
            }
            LogEntry::Signal { thread, .. } => {
                let c = clocks.get(thread).cloned().unwrap_or_default();
                joined(&mut sem_clock, &c);
            }
            LogEntry::WaitPass { thread, .. } => {
                let sem = sem_clock.clone();
                joined(clocks.entry(*thread).or_default(), &sem);
            }
            LogEntry::Access(a) => {
                let clock = clocks.entry(a.thread).or_default();
                *clock.entry(a.thread).or_insert(0) += 1;
                accesses.push((a.clone(), clock.clone()));
            }
        }
    }

    // Bucket by location, then examine ordered pairs (write first).
    let mut by_location: BTreeMap<Location, Vec<usize>> = BTreeMap::new();
    for (i, (a, _)) in accesses.iter().enumerate() {
        by_location.entry(a.location).or_default().push(i);
    }

    let mut reports: BTreeMap<String, RaceReport> = BTreeMap::new();
    for indices in by_location.values() {
        for (pos, &i) in indices.iter().enumerate() {
            let (wi, wi_clock) = &accesses[i];
            if !wi.is_write || wi.thread != LogThread::Ui {
                continue;
            }
            for &j in &indices[pos + 1..] {
                let (aj, aj_clock) = &accesses[j];
                if !matches!(aj.thread, LogThread::Async(_)) {
                    continue;
                }
                if happens_before(wi.thread, wi_clock, aj_clock) {
                    continue;
                }
                let Some(site) = aj.site.map(|s| s.display(app)) else {
                    continue;
                };
                reports.entry(site.clone()).or_insert_with(|| RaceReport {
                    access_a: describe(app, wi),
                    access_b: describe(app, aj),
                    hb_related: false,
                    site,
                });
            }
        }
    }
    reports.into_values().collect()
}

fn describe(app: &App, r: &AccessRecord) -> AccessDesc {
    AccessDesc {
        thread: r.thread_label.clone(),
        method: r.method.map(|m| app.method_name(m)),
        site: r.site.map(|s| s.display(app)),
        location: render_location(app, r.location),
        kind: if r.is_write { "write" } else { "read" },
    }
}

fn render_location(app: &App, loc: Location) -> String {
    match loc {
        Location::Gui { obj, generation } => {
            format!("gui:{}@{}", app.gui_object(obj).id, generation)
        }
        Location::ComponentLive { comp, generation } => {
            format!("component:{}@{}", app.component(comp).id, generation)
        }
        Location::WidgetText { widget } => format!("widget:{}", app.widget(widget).id),
    }
}
