//! Converts a terminated trace into an actionable user-event sequence plus
//! the environment (inputs, settings, injected faults) the trace requires.

use crate::app_model::{
    App, EnvCondition, EnvKind, InputConstraint, InputFormat, LifecycleCallback, MethodRole,
    StmtKind, WidgetClass, WidgetIdx,
};
use crate::fault_detector::FaultPattern;
use crate::trace_gen::{Trace, TraceState};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// One user-level action.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "event")]
pub enum UiEvent {
    Launch,
    Click { widget: String },
    ListItemClick { widget: String, item: usize },
    Input { widget: String, value: String },
    Rotate,
    Home,
    LongPressHomeThenBack,
    ScreenToggle,
    Back,
}

/// An event sequence together with the trace it was synthesized from.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    pub events: Vec<UiEvent>,
    pub trace: Trace,
}

/// Injectable environment faults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectedFault {
    IoFailure,
    StorageUnavailable,
}

/// The non-event execution context of a replay: concrete widget inputs,
/// system settings and permissions, and injected faults. Settings keys are
/// `wifi` and `permission:<name>`; absent keys take the simulator defaults
/// (wifi on, permissions off, io and storage available).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Environment {
    pub inputs: BTreeMap<String, String>,
    pub settings: BTreeMap<String, bool>,
    pub injected_faults: BTreeSet<InjectedFault>,
}

impl Environment {
    pub fn wifi_enabled(&self) -> bool {
        self.settings.get("wifi").copied().unwrap_or(true)
    }

    pub fn permission_granted(&self, name: &str) -> bool {
        self.settings
            .get(&format!("permission:{}", name))
            .copied()
            .unwrap_or(false)
    }

    pub fn io_available(&self) -> bool {
        !self.injected_faults.contains(&InjectedFault::IoFailure)
    }

    pub fn storage_available(&self) -> bool {
        !self
            .injected_faults
            .contains(&InjectedFault::StorageUnavailable)
    }

    pub fn with_fault(mut self, fault: InjectedFault) -> Self {
        self.injected_faults.insert(fault);
        self
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("handler `{handler}` on the trace has no widget binding")]
    UnmappableHandler { handler: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("contradictory environment conditions on `{subject}`")]
    Unsatisfiable { subject: String },
}

/// Map a terminated trace to an event sequence.
///
/// The chain is walked entry-side first. Event handlers become actions on
/// their bound widget; the app launch covers entry lifecycle roots; other
/// lifecycle callbacks map to the events that force them (rotate for
/// onDestroy, home for onStop, long-press-home-and-back for onRestart,
/// screen toggle for onPause); async callbacks and transition targets follow
/// from prior events and contribute nothing. A P3 trace appends its
/// lifecycle tweak: rotate by default, home when the faulty statement is a
/// fragment transaction (state loss happens after stop).
pub fn synthesize_events(t: &Trace, app: &App) -> Result<EventSequence, SynthError> {
    debug_assert_eq!(t.state, TraceState::Terminated);
    let mut events = vec![UiEvent::Launch];

    for &m in t.chain.iter().rev() {
        match app.method(m).role {
            MethodRole::EventHandler => {
                let Some(binding) = app.binding_of_method(m) else {
                    return Err(SynthError::UnmappableHandler {
                        handler: app.method_name(m),
                    });
                };
                let widget = app.widget(binding.widget);
                let ev = match widget.class {
                    WidgetClass::Button => UiEvent::Click {
                        widget: widget.id.clone(),
                    },
                    WidgetClass::List => UiEvent::ListItemClick {
                        widget: widget.id.clone(),
                        item: 0,
                    },
                    WidgetClass::Input => UiEvent::Input {
                        widget: widget.id.clone(),
                        value: input_value_for(binding.widget, &t.conditions)
                            .unwrap_or_else(|| "text".to_string()),
                    },
                };
                events.push(ev);
            }
            MethodRole::LifecycleCallback(cb) => match cb {
                LifecycleCallback::OnDestroy => events.push(UiEvent::Rotate),
                LifecycleCallback::OnRestart => events.push(UiEvent::LongPressHomeThenBack),
                LifecycleCallback::OnStop => events.push(UiEvent::Home),
                LifecycleCallback::OnPause => events.push(UiEvent::ScreenToggle),
                // Creation-side callbacks follow from the launch or the
                // transition that started the component.
                LifecycleCallback::OnCreate
                | LifecycleCallback::OnStart
                | LifecycleCallback::OnResume => {}
            },
            MethodRole::AsyncCallback(_) | MethodRole::Plain => {}
        }
    }

    if t.pattern == FaultPattern::P3 {
        let node = app.method(t.origin.method).body.node(t.origin.stmt);
        if matches!(node, StmtKind::FragmentTransaction { .. }) {
            events.push(UiEvent::Home);
        } else {
            events.push(UiEvent::Rotate);
        }
    }

    Ok(EventSequence {
        events,
        trace: t.clone(),
    })
}

/// Derive the environment a terminated trace requires from its recorded
/// conditions. Contradictory requirements surface as an error and mark the
/// candidate unverifiable.
pub fn infer_environment(t: &Trace, app: &App) -> Result<Environment, EnvError> {
    debug_assert_eq!(t.state, TraceState::Terminated);
    let mut env = Environment::default();
    let mut wanted: BTreeMap<String, bool> = BTreeMap::new();

    let mut require = |key: String, value: bool| -> Result<(), EnvError> {
        if let Some(&prev) = wanted.get(&key) {
            if prev != value {
                return Err(EnvError::Unsatisfiable { subject: key });
            }
        }
        wanted.insert(key, value);
        Ok(())
    };

    let mut input_constraints: BTreeMap<WidgetIdx, Vec<(InputConstraint, bool)>> = BTreeMap::new();

    for cond in &t.conditions {
        match &cond.kind {
            EnvKind::WifiEnabled => require("wifi".to_string(), !cond.negated)?,
            EnvKind::PermissionGranted { name } => {
                require(format!("permission:{}", name), !cond.negated)?
            }
            EnvKind::IoAvailable => require("io".to_string(), !cond.negated)?,
            EnvKind::StorageAvailable => require("storage".to_string(), !cond.negated)?,
            EnvKind::InputMatches { widget, constraint } => input_constraints
                .entry(*widget)
                .or_default()
                .push((constraint.clone(), cond.negated)),
        }
    }

    for (key, value) in wanted {
        match key.as_str() {
            "io" => {
                if !value {
                    env.injected_faults.insert(InjectedFault::IoFailure);
                }
            }
            "storage" => {
                if !value {
                    env.injected_faults.insert(InjectedFault::StorageUnavailable);
                }
            }
            _ => {
                env.settings.insert(key, value);
            }
        }
    }

    for (widget, constraints) in input_constraints {
        let value = solve_input(&constraints).ok_or_else(|| EnvError::Unsatisfiable {
            subject: format!("input:{}", app.widget(widget).id),
        })?;
        env.inputs.insert(app.widget(widget).id.clone(), value);
    }

    Ok(env)
}

/// Concrete value satisfying the positive constraints recorded for a widget,
/// if any exist on the trace.
fn input_value_for(widget: WidgetIdx, conditions: &[EnvCondition]) -> Option<String> {
    let constraints: Vec<(InputConstraint, bool)> = conditions
        .iter()
        .filter_map(|c| match &c.kind {
            EnvKind::InputMatches {
                widget: w,
                constraint,
            } if *w == widget => Some((constraint.clone(), c.negated)),
            _ => None,
        })
        .collect();
    if constraints.is_empty() {
        return None;
    }
    solve_input(&constraints)
}

fn constraint_base(constraint: &InputConstraint) -> String {
    match constraint {
        InputConstraint::Format(InputFormat::Email) => "a@b.co".to_string(),
        InputConstraint::Format(InputFormat::Phone) => "5551234".to_string(),
        InputConstraint::Format(InputFormat::Number) => "1".to_string(),
        InputConstraint::Equals(v) => v.clone(),
        InputConstraint::Contains(c) => c.to_string(),
    }
}

fn satisfies(value: &str, constraint: &InputConstraint) -> bool {
    match constraint {
        InputConstraint::Format(f) => f.matches(value),
        InputConstraint::Equals(v) => value == v,
        InputConstraint::Contains(c) => value.contains(*c),
    }
}

/// Pick a value satisfying every (constraint, negated) pair. Candidates come
/// from the positive constraints' canonical values plus fallbacks covering
/// negated requirements.
fn solve_input(constraints: &[(InputConstraint, bool)]) -> Option<String> {
    let mut candidates: Vec<String> = constraints
        .iter()
        .filter(|(_, negated)| !negated)
        .map(|(c, _)| constraint_base(c))
        .collect();
    candidates.push("text".to_string());
    // Mutations that escape negated equals/contains constraints.
    let mutated: Vec<String> = candidates.iter().map(|c| format!("{}zq", c)).collect();
    candidates.extend(mutated);
    candidates.push(String::new());

    candidates.into_iter().find(|value| {
        constraints
            .iter()
            .all(|(c, negated)| satisfies(value, c) != *negated)
    })
}
