//! Shared helpers for the pipeline benchmarks.

use apechk_core::app_model::{parse_app, App};
use std::path::PathBuf;

pub fn fixture_text(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    std::fs::read_to_string(path).expect("fixture readable")
}

pub fn fixture(name: &str) -> App {
    parse_app(&fixture_text(name)).expect("fixture parses")
}
