#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Output;

use szz_core::config::Config;
use szz_core::diff::Language;
use szz_core::eval::{run_eval, Algorithm, DatasetEntry, EvalOptions};
use szz_core::fixture::scenario::{LockingResponder, LockingScenario};
use szz_core::fixture::RepoBuilder;
use szz_core::llm::{CassetteStore, Gateway, Mode};
use szz_core::CommitId;

pub fn szz(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_szz"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

pub fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}\nstderr: {}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
    })
}

/// A repository whose fix deletes one line added by `a`.
pub fn one_deleted_line(dir: &Path) -> (CommitId, CommitId) {
    let mut b = RepoBuilder::init(dir).unwrap();
    b.commit("base", &[("m.c", Some("int main(void)\n{\n}\n"))]).unwrap();
    let a = b
        .commit("add call", &[("m.c", Some("int main(void)\n{\n\tcall();\n}\n"))])
        .unwrap();
    let fix = b.commit("drop call", &[("m.c", Some("int main(void)\n{\n}\n"))]).unwrap();
    (a, fix)
}

/// Fixture dataset: the locking history plus the one-deleted-line history,
/// with cassettes recorded from the scripted responder.
pub struct ReplayFixture {
    pub repos: PathBuf,
    pub tapes: PathBuf,
    pub dataset: PathBuf,
    pub locking: LockingScenario,
}

pub fn replay_fixture(root: &Path) -> ReplayFixture {
    let repos = root.join("repos");
    let tapes = root.join("cassettes");
    let locking = LockingScenario::create(&repos.join("soundwire")).unwrap();
    let (a, fix) = one_deleted_line(&repos.join("tiny"));
    let entries = vec![
        DatasetEntry {
            repo: "soundwire".into(),
            fix: locking.fix.clone(),
            inducing: [locking.introducing.clone()].into(),
            language: Language::C,
        },
        DatasetEntry { repo: "tiny".into(), fix, inducing: [a].into(), language: Language::C },
    ];
    let dataset = root.join("dataset.jsonl");
    let body: String = entries.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect();
    std::fs::write(&dataset, body).unwrap();

    let recorder = Gateway::new(Mode::Record)
        .with_responder(LockingResponder::correct())
        .with_cassettes(CassetteStore::new(&tapes));
    let opts = EvalOptions { algorithm: Algorithm::Llm4szz, repeats: 1, workers: 1 };
    run_eval(&entries, &repos, &Config::default(), &recorder, &opts, None).unwrap();
    ReplayFixture { repos, tapes, dataset, locking }
}
