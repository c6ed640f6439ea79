use apechk_bench::{fixture, fixture_text};
use apechk_core::baselines::fuzz;
use apechk_core::callgraph::build_call_graph;
use apechk_core::corpus::{generate_app, oracle_events};
use apechk_core::event_synth::Environment;
use apechk_core::fault_detector::detect_apes;
use apechk_core::runtime_sim::{explore_all_schedules, instrument, run, Schedule};
use apechk_core::trace_gen::{generate_traces, TraceLimits};
use apechk_core::verifier::verify_all;
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn bench_parse(c: &mut Criterion) {
    let text = fixture_text("adsdroid.ape");
    c.bench_function("parse_adsdroid", |b| {
        b.iter(|| apechk_core::app_model::parse_app(black_box(&text)).unwrap())
    });
}

fn bench_static_analysis(c: &mut Criterion) {
    let app = fixture("adsdroid.ape");
    c.bench_function("detect_and_trace_adsdroid", |b| {
        b.iter(|| {
            let cg = build_call_graph(black_box(&app));
            let cands = detect_apes(&app, &cg);
            let limits = TraceLimits::default();
            cands
                .iter()
                .map(|cand| generate_traces(&app, &cg, cand, &limits).len())
                .sum::<usize>()
        })
    });
}

fn bench_verify(c: &mut Criterion) {
    let app = fixture("adsdroid.ape");
    c.bench_function("verify_all_adsdroid", |b| {
        b.iter(|| verify_all(black_box(&app), &TraceLimits::default(), 1).reproduced)
    });
}

fn bench_barrier_run(c: &mut Criterion) {
    let app = fixture("adsdroid.ape");
    let cg = build_call_graph(&app);
    let cand = detect_apes(&app, &cg).remove(0);
    let instrumented = instrument(&app, &cand);
    let sched = Schedule::barrier(instrumented.barrier.clone());
    let events = vec![
        apechk_core::event_synth::UiEvent::Launch,
        apechk_core::event_synth::UiEvent::Click {
            widget: "searchButton".into(),
        },
        apechk_core::event_synth::UiEvent::Rotate,
    ];
    let env = Environment::default();
    c.bench_function("barrier_replay_adsdroid", |b| {
        b.iter(|| run(black_box(&instrumented.app), &events, &env, &sched))
    });
}

fn bench_exploration(c: &mut Criterion) {
    let app = generate_app(17);
    let events = oracle_events(&app);
    let env = Environment::default();
    c.bench_function("explore_generated_app", |b| {
        b.iter(|| explore_all_schedules(black_box(&app), &events, &env, 4096).runs.len())
    });
}

fn bench_fuzz(c: &mut Criterion) {
    let app = fixture("injected/fault01.ape");
    c.bench_function("fuzz_1000_events", |b| {
        b.iter(|| fuzz(black_box(&app), 1000, 7).crashes.len())
    });
}

criterion_group!(
    benches,
    bench_parse,
    bench_static_analysis,
    bench_verify,
    bench_barrier_run,
    bench_exploration,
    bench_fuzz
);
criterion_main!(benches);
