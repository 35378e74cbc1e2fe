#![allow(dead_code)]

use std::path::PathBuf;

use osc_core::sim::{run, Network, RunOptions, Scenario, Step};
use osc_core::support::AgentName;
use osc_core::term::Term;

pub fn t(s: &str) -> Term {
    Term::parse(s).unwrap()
}

pub fn a(s: &str) -> AgentName {
    AgentName::new(s)
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Stems of every shipped `.scn` fixture, sorted.
pub fn fixture_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(fixtures_dir())
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "scn").then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    names
}

pub fn load_fixture(name: &str) -> Scenario {
    Scenario::load(&fixtures_dir().join(format!("{name}.scn"))).unwrap()
}

pub fn run_fixture(name: &str, opts: RunOptions) -> Network {
    let s = load_fixture(name);
    let opts = RunOptions {
        base_dir: Some(fixtures_dir()),
        ..opts
    };
    run(&s, &opts).unwrap()
}

pub fn run_plain(s: &Scenario) -> Network {
    run(s, &RunOptions::default()).unwrap()
}

pub fn adopt(name: &str, attrs: &[&str]) -> Step {
    Step::Adopt {
        name: name.to_string(),
        attrs: attrs.iter().map(|x| t(x)).collect(),
        opts: osc_core::sim::scenario::AdoptOptions {
            community: None,
            db: None,
        },
    }
}
