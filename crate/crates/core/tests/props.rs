mod common;

use apechk_core::app_model::{parse_app, pretty_print, validate_app};
use apechk_core::callgraph::build_call_graph;
use apechk_core::corpus::{generate_app, oracle_events};
use apechk_core::event_synth::Environment;
use apechk_core::fault_detector::detect_apes;
use apechk_core::runtime_sim::{explore_all_schedules, run, Schedule};
use apechk_core::trace_gen::{generate_traces, TraceLimits, TraceState};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Parsing is total: arbitrary input never panics, it either parses or
    /// reports positioned diagnostics.
    #[test]
    fn parser_is_total_on_arbitrary_text(input in ".{0,400}") {
        let _ = parse_app(&input);
    }

    /// Keyword soup exercises the block machinery without panicking.
    #[test]
    fn parser_is_total_on_keyword_soup(words in proptest::collection::vec(
        prop_oneof![
            Just("app"), Just("entry"), Just("activity"), Just("fragment"),
            Just("async"), Just("task"), Just("handler"), Just("lifecycle"),
            Just("onCreate"), Just("end"), Just("else"), Just("catch"),
            Just("try"), Just("post-to-ui"), Just("if-env"), Just("if-ui-safe"),
            Just("call"), Just("x"), Just("\"q\""), Just("not"),
        ], 0..60))
    {
        let mut text = String::new();
        for (i, w) in words.iter().enumerate() {
            text.push_str(w);
            text.push(if i % 3 == 2 { '\n' } else { ' ' });
        }
        let _ = parse_app(&text);
    }

    /// Generated apps validate, print, and re-parse to an identical value.
    #[test]
    fn generated_apps_round_trip(seed in 0u64..10_000) {
        let app = generate_app(seed);
        prop_assert!(validate_app(&app).is_empty());
        let printed = pretty_print(&app);
        let reparsed = parse_app(&printed).map_err(|d| {
            TestCaseError::fail(format!("reparse failed: {:?}", d))
        })?;
        prop_assert_eq!(app, reparsed);
    }

    /// Trace generation is bounded and acyclic for arbitrary apps and
    /// arbitrary limits.
    #[test]
    fn traces_are_bounded_and_acyclic(seed in 0u64..10_000, cnt in 1usize..12, len in 1usize..24) {
        let app = generate_app(seed);
        let cg = build_call_graph(&app);
        let limits = TraceLimits { max_trace_cnt: cnt, max_trace_len: len };
        for cand in detect_apes(&app, &cg) {
            let traces = generate_traces(&app, &cg, &cand, &limits);
            prop_assert!(traces.len() <= limits.max_trace_cnt);
            for t in &traces {
                prop_assert!(t.chain.len() <= limits.max_trace_len);
                prop_assert!(t.state != TraceState::Pending);
                let mut sorted = t.chain.clone();
                sorted.sort_unstable();
                sorted.dedup();
                prop_assert_eq!(sorted.len(), t.chain.len(), "chain repeats a method");
            }
        }
    }

    /// The simulator is a pure function: identical inputs give identical
    /// serialized outputs.
    #[test]
    fn simulator_runs_are_reproducible(seed in 0u64..2_000) {
        let app = generate_app(seed);
        let events = oracle_events(&app);
        let env = Environment::default();
        let one = run(&app, &events, &env, &Schedule::eager());
        let two = run(&app, &events, &env, &Schedule::eager());
        prop_assert_eq!(&one, &two);
    }

    /// Exploration never exceeds its budget and always covers the eager
    /// placement.
    #[test]
    fn exploration_budget_is_respected(seed in 0u64..2_000, bound in 1usize..40) {
        let app = generate_app(seed);
        let events = oracle_events(&app);
        let exploration = explore_all_schedules(&app, &events, &Environment::default(), bound);
        prop_assert!(exploration.runs.len() <= bound);
        prop_assert!(!exploration.runs.is_empty());
    }
}
