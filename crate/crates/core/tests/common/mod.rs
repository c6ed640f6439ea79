#![allow(dead_code)]

use apechk_core::app_model::{parse_app, validate_app, App};
use std::path::PathBuf;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn fixture(name: &str) -> App {
    let text = std::fs::read_to_string(fixture_path(name))
        .unwrap_or_else(|e| panic!("reading fixture {}: {}", name, e));
    let app = parse_app(&text).unwrap_or_else(|diags| {
        panic!(
            "fixture {} failed to parse:\n{}",
            name,
            diags
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("\n")
        )
    });
    let diags = validate_app(&app);
    assert!(diags.is_empty(), "fixture {} invalid: {:?}", name, diags);
    app
}

/// All rule-compliant fixtures in the repository.
pub const COMPLIANT_FIXTURES: [&str; 5] = [
    "compliant.ape",
    "adsdroid_guarded.ape",
    "adsdroid_posted.ape",
    "pedometer_posted.ape",
    "gisapp_posted.ape",
];
