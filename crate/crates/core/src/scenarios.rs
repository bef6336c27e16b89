//! Scenarios shipped with the library: a three-cell corridor with one edge server per
//! cell and a cloud, walked by users of one application each.

use std::path::Path;

use crate::model::{load_scenario, load_scenario_file, WorldState};
use crate::Result;

pub const SIMPLE: &str = include_str!("../scenarios/simple.toml");
pub const OPENFACE: &str = include_str!("../scenarios/openface.toml");
pub const YOLO: &str = include_str!("../scenarios/yolo.toml");

/// `(name, document)` of every bundled scenario.
pub const BUNDLED: [(&str, &str); 3] = [("simple", SIMPLE), ("openface", OPENFACE), ("yolo", YOLO)];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, doc)| *doc)
}

/// Loads a bundled scenario by name, or else the file at `name_or_path`.
pub fn load(name_or_path: &str) -> Result<WorldState> {
    match bundled(name_or_path) {
        Some(doc) => load_scenario(doc),
        None => load_scenario_file(Path::new(name_or_path)),
    }
}
