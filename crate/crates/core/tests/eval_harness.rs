use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::AtomicBool;

use proptest::prelude::*;
use szz_core::config::Config;
use szz_core::diff::Language;
use szz_core::error::EvalError;
use szz_core::eval::{
    classify_size, compute_metrics, f1_score, load_dataset, mine_fixes, parse_dataset, predict, run_eval, Algorithm,
    DatasetEntry, EvalOptions, Metrics, MineMode, SizeClass,
};
use szz_core::fixture::scenario::{LockingResponder, LockingScenario};
use szz_core::fixture::{text, RepoBuilder};
use szz_core::llm::{CassetteStore, Gateway, Mode};
use szz_core::pipeline::{Prediction, Route};
use szz_core::{CommitId, Repo};

fn id(n: u8) -> CommitId {
    format!("{:040x}", n).parse().unwrap()
}

fn entry(fix: u8, inducing: &[u8]) -> DatasetEntry {
    DatasetEntry {
        repo: "r".into(),
        fix: id(fix),
        inducing: inducing.iter().map(|&n| id(n)).collect(),
        language: Language::C,
    }
}

fn pred(fix: u8, predicted: &[u8]) -> Prediction {
    let mut p = Prediction::empty(id(fix), Vec::new());
    p.predicted = predicted.iter().map(|&n| id(n)).collect();
    p
}

#[test]
fn reported_cells_satisfy_the_harmonic_mean() {
    assert!((f1_score(0.628, 0.552) - 0.588).abs() <= 0.001);
    assert!((f1_score(0.563, 0.364) - 0.442).abs() <= 0.001);
    assert_eq!(f1_score(0.0, 0.0), 0.0);
}

#[test]
fn single_entry_examples() {
    let m = compute_metrics(&[pred(1, &[10])], &[entry(1, &[10])]).unwrap();
    assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    let m = compute_metrics(&[pred(1, &[10, 11])], &[entry(1, &[10])]).unwrap();
    assert_eq!((m.precision, m.recall), (0.5, 1.0));
    assert!((m.f1 - 0.667).abs() < 0.001);
    // Empty predictions only cost recall.
    let m = compute_metrics(&[pred(1, &[10]), pred(2, &[])], &[entry(1, &[10]), entry(2, &[20])]).unwrap();
    assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 1));
    assert_eq!(m.precision, 1.0);
}

#[test]
fn misaligned_inputs_are_rejected() {
    let err = compute_metrics(&[pred(1, &[10])], &[entry(2, &[10])]).unwrap_err();
    assert!(matches!(err, EvalError::MisalignedDataset(_)));
    let err = compute_metrics(&[pred(1, &[10])], &[]).unwrap_err();
    assert!(matches!(err, EvalError::MisalignedDataset(_)));
    let err = compute_metrics(&[pred(1, &[10]), pred(1, &[11])], &[entry(1, &[10]), entry(2, &[10])]).unwrap_err();
    assert!(matches!(err, EvalError::MisalignedDataset(_)));
}

proptest! {
    #[test]
    fn metric_bounds_and_permutation_invariance(
        rows in prop::collection::vec(
            (prop::collection::btree_set(20u8..26, 0..3), prop::collection::btree_set(20u8..26, 1..3)),
            1..12,
        ),
        rot in 0usize..12,
    ) {
        let preds: Vec<Prediction> = rows.iter().enumerate()
            .map(|(i, (p, _))| pred(i as u8, &p.iter().copied().collect::<Vec<_>>())).collect();
        let truth: Vec<DatasetEntry> = rows.iter().enumerate()
            .map(|(i, (_, t))| entry(i as u8, &t.iter().copied().collect::<Vec<_>>())).collect();
        let m = compute_metrics(&preds, &truth).unwrap();
        for v in [m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
        if m.precision + m.recall > 0.0 {
            let h = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            prop_assert!((m.f1 - h).abs() < 1e-9);
        }
        // Counts from an independent tally.
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (p, t) in &rows {
            tp += p.intersection(t).count() as u64;
            fp += p.difference(t).count() as u64;
            fn_ += t.difference(p).count() as u64;
        }
        prop_assert_eq!((m.tp, m.fp, m.fn_), (tp, fp, fn_));
        let mut p2 = preds.clone();
        p2.rotate_left(rot % preds.len());
        let mut t2 = truth.clone();
        t2.reverse();
        prop_assert_eq!(compute_metrics(&p2, &t2).unwrap(), m);
    }
}

/// A commit that changes exactly `adds` + `dels` lines of one file.
fn sized_commit(dir: &Path, adds: usize, dels: usize) -> (Repo, CommitId) {
    let mut b = RepoBuilder::init(dir).unwrap();
    let base: Vec<String> = (0..20).map(|i| format!("line {i};")).collect();
    let base_refs: Vec<&str> = base.iter().map(String::as_str).collect();
    b.commit("base", &[("f.c", Some(&text(&base_refs)))]).unwrap();
    let mut next: Vec<String> = base[dels..].to_vec();
    next.extend((0..adds).map(|i| format!("added {i};")));
    let next_refs: Vec<&str> = next.iter().map(String::as_str).collect();
    let fix = b.commit("change", &[("f.c", Some(&text(&next_refs)))]).unwrap();
    (Repo::open(dir).unwrap(), fix)
}

#[test]
fn size_boundary_is_strict() {
    for (adds, dels, want) in [
        (5, 0, SizeClass::Small),
        (3, 2, SizeClass::Small),
        (6, 0, SizeClass::Large),
        (3, 3, SizeClass::Large),
        (1, 0, SizeClass::Small),
        (29, 8, SizeClass::Large),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let (repo, fix) = sized_commit(dir.path(), adds, dels);
        assert_eq!(classify_size(&repo, &fix).unwrap(), want, "{adds}+{dels}");
    }
}

#[test]
fn fixes_tags_are_mined_against_a_planted_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = RepoBuilder::init(dir.path()).unwrap();
    let mut ids: Vec<CommitId> = Vec::new();
    let mut oracle = Vec::new();
    for i in 0..20 {
        let content = format!("v{i}\n");
        let msg = match i {
            7 => format!("net: drop stale entry\n\nFixes: {} (\"add cache\")", &ids[2].as_str()[..12]),
            12 => format!("mm: handle zero size\n\nFixes: {}", ids[5].as_str()),
            18 => format!(
                "io: release on error\n\nFixes: {} (\"a\")\nFixes: {} (\"b\")",
                &ids[9].as_str()[..7],
                &ids[11].as_str()[..10]
            ),
            // Not a tag: inline mention and an unresolvable id.
            15 => "docs: mention Fixes: abcdef0 in the guide".to_string(),
            16 => "tidy\n\nFixes: deadbee".to_string(),
            _ => format!("update v{i}"),
        };
        let c = b.commit(&msg, &[("f.txt", Some(&content))]).unwrap();
        match i {
            7 => oracle.push((c.clone(), BTreeSet::from([ids[2].clone()]))),
            12 => oracle.push((c.clone(), BTreeSet::from([ids[5].clone()]))),
            18 => oracle.push((c.clone(), BTreeSet::from([ids[9].clone(), ids[11].clone()]))),
            _ => {}
        }
        ids.push(c);
    }
    let repo = Repo::open(dir.path()).unwrap();
    let out = mine_fixes(&repo, MineMode::FixesTag, None).unwrap();
    let got: Vec<_> = out.entries.iter().map(|e| (e.fix.clone(), e.inducing.clone().unwrap())).collect();
    assert_eq!(got, oracle);
    assert!(out.diagnostics.iter().any(|d| d.contains("deadbee")));
    assert_eq!(mine_fixes(&repo, MineMode::FixesTag, None).unwrap(), out, "idempotent");

    let since = repo.meta(&ids[10]).unwrap().committer_time;
    let later = mine_fixes(&repo, MineMode::FixesTag, Some(since)).unwrap();
    assert_eq!(later.entries.len(), 2);
}

#[test]
fn keyword_mining_uses_whole_words() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = RepoBuilder::init(dir.path()).unwrap();
    let msgs = ["add prefix handling", "Fix overflow", "debugging output", "this bug", "introduced helper", "refactor"];
    let ids: Vec<_> = msgs
        .iter()
        .enumerate()
        .map(|(i, m)| b.commit(m, &[("f.txt", Some(&format!("{i}\n")))]).unwrap())
        .collect();
    let repo = Repo::open(dir.path()).unwrap();
    let out = mine_fixes(&repo, MineMode::Keyword, None).unwrap();
    let got: Vec<_> = out.entries.iter().map(|e| e.fix.clone()).collect();
    assert_eq!(got, vec![ids[1].clone(), ids[3].clone(), ids[4].clone()]);
    assert!(out.entries.iter().all(|e| e.inducing.is_none()));
}

#[test]
fn dataset_lines_are_validated() {
    let a = "a".repeat(40);
    let b = "b".repeat(40);
    let good = format!("{{\"repo\": \"linux\", \"fix\": \"{a}\", \"inducing\": [\"{b}\"], \"language\": \"c\"}}\n\n");
    assert_eq!(parse_dataset(&good).unwrap().len(), 1);
    for bad in [
        format!("{{\"repo\": \"linux\", \"fix\": \"{a}\", \"inducing\": [], \"language\": \"c\"}}"),
        format!("{{\"repo\": \"linux\", \"fix\": \"{a}\", \"inducing\": [\"{a}\"], \"language\": \"c\"}}"),
        format!("{{\"repo\": \"linux\", \"fix\": \"{a}\", \"inducing\": [\"{b}\"], \"language\": \"rust\"}}"),
        format!("{{\"repo\": \"../x\", \"fix\": \"{a}\", \"inducing\": [\"{b}\"], \"language\": \"c\"}}"),
        "not json".to_string(),
    ] {
        let text = format!("{good}{bad}\n");
        assert!(matches!(parse_dataset(&text), Err(EvalError::Dataset { line: 3, .. })), "{bad}");
    }
}

/// Six fixes in one repository, each deleting the single line its own
/// introducing commit added.
fn six_fix_repo(dir: &Path) -> (Vec<CommitId>, Vec<CommitId>) {
    let mut b = RepoBuilder::init(dir).unwrap();
    let mut introducers = Vec::new();
    for i in 0..6 {
        let path = format!("f{i}.c");
        introducers.push(b.commit(&format!("add f{i}"), &[(&path, Some(&format!("keep{i};\nbad{i};\n")))]).unwrap());
    }
    let fixes = (0..6)
        .map(|i| {
            let path = format!("f{i}.c");
            b.commit(&format!("fix f{i}"), &[(&path, Some(&format!("keep{i};\n")))]).unwrap()
        })
        .collect();
    (introducers, fixes)
}

fn scripted_config() -> Config {
    let mut c = Config::default();
    c.llm.mode = Mode::Scripted;
    c
}

#[test]
fn six_entry_dataset_matches_hand_computation() {
    let repos = tempfile::tempdir().unwrap();
    let (intro, fixes) = six_fix_repo(&repos.path().join("proj"));
    let mut dataset = Vec::new();
    for i in 0..6 {
        let inducing = match i {
            // Misses: one wrong singleton truth, one two-commit truth.
            4 => BTreeSet::from([intro[0].clone()]),
            5 => BTreeSet::from([intro[1].clone(), intro[2].clone()]),
            _ => BTreeSet::from([intro[i].clone()]),
        };
        dataset.push(DatasetEntry { repo: "proj".into(), fix: fixes[i].clone(), inducing, language: Language::C });
    }
    let gw = Gateway::new(Mode::Scripted);
    let opts = EvalOptions { algorithm: Algorithm::B, repeats: 3, workers: 3 };
    let report = run_eval(&dataset, repos.path(), &scripted_config(), &gw, &opts, None).unwrap();
    // tp 4, fp 2 (one wrong singleton per miss), fn 1 + 2.
    let want = Metrics::from_counts(4, 2, 3);
    assert_eq!(report.per_repeat.len(), 3);
    for r in &report.per_repeat {
        assert_eq!(r.overall, want);
        assert_eq!(r.small.tp + r.large.tp, 4);
        assert!(r.predictions.iter().all(|p| p.prediction.predicted.len() == 1));
        assert!(r.predictions.iter().all(|p| p.prediction.route == Route::Classic));
    }
    assert!((report.averaged.overall.precision - 4.0 / 6.0).abs() < 1e-12);
    assert!((report.averaged.overall.recall - 4.0 / 7.0).abs() < 1e-12);
    assert_eq!(report.per_repeat[0], report.per_repeat[1]);
    assert_eq!(report.per_repeat[1], report.per_repeat[2]);
    assert!(!report.interrupted);
    assert_eq!(report.evaluated, 6);
    assert_eq!(report.usage.total.llm_calls, 0);
}

#[test]
fn missing_repositories_are_skipped_and_missing_root_is_an_error() {
    let repos = tempfile::tempdir().unwrap();
    let (intro, fixes) = six_fix_repo(&repos.path().join("proj"));
    let dataset = vec![
        DatasetEntry { repo: "proj".into(), fix: fixes[0].clone(), inducing: BTreeSet::from([intro[0].clone()]), language: Language::C },
        DatasetEntry { repo: "gone".into(), fix: fixes[1].clone(), inducing: BTreeSet::from([intro[1].clone()]), language: Language::C },
    ];
    let gw = Gateway::new(Mode::Scripted);
    let opts = EvalOptions { algorithm: Algorithm::R, repeats: 1, workers: 1 };
    let report = run_eval(&dataset, repos.path(), &scripted_config(), &gw, &opts, None).unwrap();
    assert_eq!(report.skipped.len(), 1);
    assert!(report.skipped[0].starts_with("gone"));
    assert_eq!(report.per_repeat[0].overall, Metrics::from_counts(1, 0, 0));

    let err = run_eval(&dataset, &repos.path().join("nope"), &scripted_config(), &gw, &opts, None).unwrap_err();
    assert!(matches!(err, EvalError::MissingRepository(_)));
}

#[test]
fn cancellation_marks_the_report_interrupted() {
    let repos = tempfile::tempdir().unwrap();
    let (intro, fixes) = six_fix_repo(&repos.path().join("proj"));
    let dataset: Vec<_> = (0..6)
        .map(|i| DatasetEntry { repo: "proj".into(), fix: fixes[i].clone(), inducing: BTreeSet::from([intro[i].clone()]), language: Language::C })
        .collect();
    let cancel = AtomicBool::new(true);
    let opts = EvalOptions { algorithm: Algorithm::B, repeats: 3, workers: 2 };
    let report = run_eval(&dataset, repos.path(), &scripted_config(), &Gateway::new(Mode::Scripted), &opts, Some(&cancel)).unwrap();
    assert!(report.interrupted);
    assert_eq!(report.evaluated, 0);
}

#[test]
fn every_classic_algorithm_is_repeatable() {
    let repos = tempfile::tempdir().unwrap();
    let (intro, fixes) = six_fix_repo(&repos.path().join("proj"));
    let dataset: Vec<_> = (0..6)
        .map(|i| DatasetEntry { repo: "proj".into(), fix: fixes[i].clone(), inducing: BTreeSet::from([intro[i].clone()]), language: Language::C })
        .collect();
    for algorithm in [Algorithm::B, Algorithm::Ag, Algorithm::Ma, Algorithm::L, Algorithm::R] {
        let opts = EvalOptions { algorithm, repeats: 3, workers: 4 };
        let r = run_eval(&dataset, repos.path(), &scripted_config(), &Gateway::new(Mode::Scripted), &opts, None).unwrap();
        assert!(r.per_repeat.windows(2).all(|w| w[0] == w[1]), "{algorithm}");
        assert_eq!(r.averaged.overall.f1, 1.0, "{algorithm}");
    }
    assert_eq!("b-szz".parse::<Algorithm>().unwrap(), Algorithm::B);
    assert_eq!("LLM4SZZ".parse::<Algorithm>().unwrap(), Algorithm::Llm4szz);
    assert!("x".parse::<Algorithm>().is_err());
}

#[test]
fn replayed_pipeline_repeats_identically() {
    let repos = tempfile::tempdir().unwrap();
    let tapes = tempfile::tempdir().unwrap();
    let s = LockingScenario::create(&repos.path().join("soundwire")).unwrap();
    let repo = Repo::open(repos.path().join("soundwire")).unwrap();
    let cfg = scripted_config();
    let recorder = Gateway::new(Mode::Record)
        .with_responder(LockingResponder::correct())
        .with_cassettes(CassetteStore::new(tapes.path()));
    predict(&repo, &s.fix, Algorithm::Llm4szz, &cfg, &recorder).unwrap();

    let line = serde_json::json!({"repo": "soundwire", "fix": s.fix, "inducing": [s.introducing], "language": "c"});
    let ds_path = repos.path().join("ds.jsonl");
    std::fs::write(&ds_path, format!("{line}\n")).unwrap();
    let dataset = load_dataset(&ds_path).unwrap();
    let replay = Gateway::replay(CassetteStore::new(tapes.path()));
    let opts = EvalOptions { algorithm: Algorithm::Llm4szz, repeats: 3, workers: 2 };
    let report = run_eval(&dataset, repos.path(), &cfg, &replay, &opts, None).unwrap();
    assert!(report.per_repeat.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(report.per_repeat[0].overall, Metrics::from_counts(1, 0, 0));
    assert_eq!(report.per_repeat[0].small, Metrics::from_counts(1, 0, 0));
    assert_eq!(report.usage.total.llm_calls, 36);
}
