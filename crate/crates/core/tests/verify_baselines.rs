mod common;

use apechk_core::baselines::{detect_races, fuzz, fuzz_with_logs};
use apechk_core::callgraph::build_call_graph;
use apechk_core::event_synth::UiEvent;
use apechk_core::fault_detector::detect_apes;
use apechk_core::runtime_sim::{explore_all_schedules, ExceptionKind};
use apechk_core::trace_gen::TraceLimits;
use apechk_core::verifier::{table_row, verify, verify_all, VerifyStatus};
use common::fixture;

#[test]
fn adsdroid_verifies_both_candidates() {
    let app = fixture("adsdroid.ape");
    let summary = verify_all(&app, &TraceLimits::default(), 1);
    assert_eq!(table_row(&summary), (2, 2, 2, 0));
    for outcome in &summary.outcomes {
        assert_eq!(outcome.status, VerifyStatus::Confirmed);
        let report = outcome.report.as_ref().unwrap();
        assert_eq!(report.exception, ExceptionKind::BadTokenException);
    }
    let lengths: Vec<usize> = summary
        .outcomes
        .iter()
        .map(|o| o.test_case.as_ref().unwrap().events.len())
        .collect();
    assert_eq!(lengths, vec![3, 4]);
}

#[test]
fn verify_all_is_stable_under_parallelism() {
    let app = fixture("adsdroid.ape");
    let serial = verify_all(&app, &TraceLimits::default(), 1);
    let parallel = verify_all(&app, &TraceLimits::default(), 4);
    assert_eq!(
        serial.outcomes.iter().map(|o| o.status).collect::<Vec<_>>(),
        parallel.outcomes.iter().map(|o| o.status).collect::<Vec<_>>()
    );
    assert_eq!(table_row(&serial), table_row(&parallel));
}

#[test]
fn confirmed_test_case_replays_identically() {
    let app = fixture("adsdroid.ape");
    let cg = build_call_graph(&app);
    let cands = detect_apes(&app, &cg);
    let outcome = verify(&app, &cands[0], &TraceLimits::default());
    assert_eq!(outcome.status, VerifyStatus::Confirmed);
    let case = outcome.test_case.unwrap();
    let report = outcome.report.unwrap();

    let instrumented = apechk_core::runtime_sim::instrument(&app, &cands[0]);
    let replay = apechk_core::runtime_sim::run(
        &instrumented.app,
        &case.events,
        &case.environment,
        &case.schedule,
    );
    let replay_report = replay.result.crash().expect("replay must crash");
    assert_eq!(
        serde_json::to_vec(replay_report).unwrap(),
        serde_json::to_vec(&report).unwrap(),
        "stored test case must reproduce bitwise"
    );
}

#[test]
fn loader_candidate_is_not_reproduced() {
    let app = fixture("loader.ape");
    let summary = verify_all(&app, &TraceLimits::default(), 1);
    assert_eq!(summary.detected, 1);
    assert_eq!(summary.reproduced, 0);
    assert_eq!(summary.outcomes[0].status, VerifyStatus::NotReproduced);
    assert_eq!(summary.false_positive_suspects, 1);
}

#[test]
fn unbound_candidate_is_unmappable() {
    let app = fixture("unbound.ape");
    let summary = verify_all(&app, &TraceLimits::default(), 1);
    assert_eq!(summary.detected, 1);
    assert_eq!(summary.processed, 0);
    assert_eq!(summary.outcomes[0].status, VerifyStatus::Unmappable);
}

#[test]
fn compliant_fixture_has_all_zero_counts() {
    let app = fixture("compliant.ape");
    let summary = verify_all(&app, &TraceLimits::default(), 1);
    assert_eq!(table_row(&summary), (0, 0, 0, 0));
}

#[test]
fn pedometer_and_gisapp_confirm_with_expected_exceptions() {
    let app = fixture("pedometer.ape");
    let summary = verify_all(&app, &TraceLimits::default(), 1);
    assert_eq!(summary.reproduced, 1);
    assert_eq!(
        summary.outcomes[0].report.as_ref().unwrap().exception,
        ExceptionKind::IllegalStateException
    );

    let app = fixture("gisapp.ape");
    let summary = verify_all(&app, &TraceLimits::default(), 1);
    assert_eq!(summary.reproduced, 1);
    let outcome = &summary.outcomes[0];
    assert_eq!(
        outcome.report.as_ref().unwrap().exception,
        ExceptionKind::RuntimeExceptionLooper
    );
    assert!(!outcome
        .test_case
        .as_ref()
        .unwrap()
        .environment
        .storage_available());
}

#[test]
fn adding_unreachable_component_changes_nothing() {
    let app = fixture("adsdroid.ape");
    let before = verify_all(&app, &TraceLimits::default(), 1);

    // Same app plus a dead activity hosting its own faulty construct.
    let mut source = std::fs::read_to_string(common::fixture_path("adsdroid.ape")).unwrap();
    source.push_str(
        "\nactivity Orphan\n  gui dialog orphanDlg\n  lifecycle onCreate\n    start-async OrphanJob\n  end\nend\n\nasync task OrphanJob\n  background\n  end\n  post\n    ui-access dialog.dismiss orphanDlg\n  end\nend\n",
    );
    let bigger = apechk_core::app_model::parse_app(&source).unwrap();
    assert!(apechk_core::app_model::validate_app(&bigger).is_empty());
    let after = verify_all(&bigger, &TraceLimits::default(), 1);
    assert_eq!(table_row(&before), table_row(&after));
    assert_eq!(
        before.outcomes.iter().map(|o| o.status).collect::<Vec<_>>(),
        after.outcomes.iter().map(|o| o.status).collect::<Vec<_>>()
    );
}

// ---------------------------------------------------------------------------
// Fuzzer
// ---------------------------------------------------------------------------

#[test]
fn fuzzer_is_deterministic() {
    let app = fixture("adsdroid.ape");
    let a = fuzz(&app, 2000, 7);
    let b = fuzz(&app, 2000, 7);
    assert_eq!(a, b);
    assert_eq!(
        serde_json::to_vec(&a).unwrap(),
        serde_json::to_vec(&b).unwrap()
    );
}

#[test]
fn fuzzer_finds_nothing_in_compliant_fixture() {
    let app = fixture("compliant.ape");
    for seed in [1, 2, 3] {
        let result = fuzz(&app, 10_000, seed);
        assert!(result.crashes.is_empty(), "seed {}: {:?}", seed, result.crashes);
    }
}

#[test]
fn fuzzer_finds_schedule_independent_crash_quickly() {
    let app = fixture("pedometer.ape");
    // The launch alone arms the fault; random completion timing may defer
    // the background a step or two, never further on a crash-restart loop.
    for seed in [1, 2, 3, 4, 5] {
        let result = fuzz(&app, 100, seed);
        assert_eq!(result.crashes.len(), 1, "seed {}", seed);
        let first = result.crashes[0].events_to_first;
        assert!((1..=4).contains(&first), "seed {}: first at {}", seed, first);
    }
    // Frozen snapshot for one seed guards scheduler drift.
    assert_eq!(fuzz(&app, 100, 3).crashes[0].events_to_first, 2);
}

#[test]
fn fuzzer_respects_zero_budget() {
    let app = fixture("adsdroid.ape");
    let result = fuzz(&app, 0, 9);
    assert!(result.crashes.is_empty());
}

#[test]
fn fuzzer_first_occurrences_stay_within_budget() {
    let app = fixture("adsdroid.ape");
    for seed in 0..5 {
        let result = fuzz(&app, 500, seed);
        for crash in &result.crashes {
            assert!(crash.events_to_first <= result.event_budget);
        }
    }
}

// ---------------------------------------------------------------------------
// Race-detector coverage dependence
// ---------------------------------------------------------------------------

#[test]
fn short_fuzz_logs_cover_fewer_race_sites_than_exhaustive_logs() {
    let app = fixture("adsdroid.ape");

    // Exhaustive logs over both candidates' synthesized sequences.
    let mut exhaustive_sites = std::collections::BTreeSet::new();
    let sequences = [
        vec![
            UiEvent::Launch,
            UiEvent::Click {
                widget: "searchButton".into(),
            },
            UiEvent::Rotate,
        ],
        vec![
            UiEvent::Launch,
            UiEvent::Click {
                widget: "searchButton".into(),
            },
            UiEvent::ListItemClick {
                widget: "resultList".into(),
                item: 0,
            },
            UiEvent::Rotate,
        ],
    ];
    for seq in &sequences {
        let exploration =
            explore_all_schedules(&app, seq, &Default::default(), 256);
        for r in &exploration.runs {
            for race in detect_races(&app, &r.output.access_log) {
                exhaustive_sites.insert(race.site);
            }
        }
    }
    assert_eq!(exhaustive_sites.len(), 2);

    // A 100-event fuzz run covers strictly fewer true race sites.
    let (_, logs) = fuzz_with_logs(&app, 100, 11);
    let mut fuzz_sites = std::collections::BTreeSet::new();
    for log in &logs {
        for race in detect_races(&app, log) {
            fuzz_sites.insert(race.site);
        }
    }
    assert!(
        fuzz_sites.len() < exhaustive_sites.len(),
        "fuzz sites {:?}",
        fuzz_sites
    );
    assert!(fuzz_sites.is_subset(&exhaustive_sites));
}

#[test]
fn background_ending_in_return_still_arms_the_barrier() {
    // The injected wait gates every exit of the background, including an
    // explicit trailing return.
    let src = "app ret\nentry Main\nactivity Main\n  gui dialog dlg\n  bind button go onGo\n  lifecycle onCreate\n  end\n  handler onGo\n    start-async Job\n  end\nend\nasync task Job\n  background\n    return\n  end\n  post\n    ui-access dialog.dismiss dlg\n  end\nend\n";
    let app = apechk_core::app_model::parse_app(src).unwrap();
    let summary = verify_all(&app, &TraceLimits::default(), 1);
    assert_eq!(summary.reproduced, 1, "{:?}", summary.outcomes[0].status);
}

#[test]
fn corpus_reproduction_matches_the_schedule_oracle() {
    use apechk_core::corpus::{generate_app, oracle_events};
    use apechk_core::event_synth::Environment;
    use apechk_core::runtime_sim::explore_all_schedules;
    use std::collections::BTreeSet;

    for seed in 0..100u64 {
        let app = generate_app(seed);
        let exploration =
            explore_all_schedules(&app, &oracle_events(&app), &Environment::default(), 8192);
        assert!(!exploration.truncated);
        let crash_sites: BTreeSet<_> = exploration
            .runs
            .iter()
            .filter_map(|r| r.output.result.crash().map(|c| c.site))
            .collect();
        let summary = verify_all(&app, &TraceLimits::default(), 1);

        if summary.detected <= 1 {
            // An isolated fault reproduces iff some interleaving crashes.
            assert_eq!(
                summary.reproduced,
                crash_sites.len(),
                "seed {}: isolated candidate disagrees with the oracle",
                seed
            );
        } else {
            // With several faults in one app, a candidate whose site the
            // oracle saw crash may still die at ANOTHER fault during its
            // replay; that interference must surface as a collateral crash,
            // never as a silent miss.
            for outcome in &summary.outcomes {
                let site = outcome.candidate.stmt_access_ui;
                if crash_sites.contains(&site)
                    && outcome.status != VerifyStatus::Confirmed
                {
                    assert!(
                        !outcome.collateral.is_empty(),
                        "seed {}: {} unconfirmed without interference evidence",
                        seed,
                        site.display(&app)
                    );
                }
            }
        }
    }
}
