//! Dataset scoring and the repeat-and-average evaluation loop.

mod metrics;
mod mine;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::diff::{count_changed_lines, Language};
use crate::error::{EvalError, PipelineError, RepoError};
use crate::llm::{aggregate_usage, Gateway, UsageReport};
use crate::pipeline::{self, Prediction};
use crate::repo::{CommitId, MetaCache, Repo};
use crate::szz::{ag_szz, b_szz, ma_szz, select_single, Strategy};

pub use metrics::{average, compute_metrics, confusion, f1_score, AveragedMetrics, Metrics};
pub use mine::{fixes_tags, has_fix_keyword, mine_fixes, MineMode, MineOutcome, MinedFix};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub repo: String,
    pub fix: CommitId,
    pub inducing: BTreeSet<CommitId>,
    pub language: Language,
}

/// Parses JSON Lines; blank lines are ignored.
pub fn parse_dataset(text: &str) -> Result<Vec<DatasetEntry>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| EvalError::Dataset { line: i + 1, reason };
        let e: DatasetEntry = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if e.inducing.is_empty() {
            return Err(bad("empty inducing set".into()));
        }
        if e.inducing.contains(&e.fix) {
            return Err(bad("fix listed among its own inducing commits".into()));
        }
        if e.repo.is_empty() || e.repo.contains("..") || Path::new(&e.repo).is_absolute() {
            return Err(bad(format!("invalid repository name {:?}", e.repo)));
        }
        out.push(e);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetEntry>, EvalError> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Large,
}

/// Commits changing more than this many lines are large.
pub const LARGE_COMMIT_LINES: usize = 5;

pub fn size_of_count(changed_lines: usize) -> SizeClass {
    if changed_lines > LARGE_COMMIT_LINES {
        SizeClass::Large
    } else {
        SizeClass::Small
    }
}

/// Small or large by added plus deleted lines over all files.
pub fn classify_size(repo: &Repo, fix: &CommitId) -> Result<SizeClass, RepoError> {
    Ok(size_of_count(count_changed_lines(&repo.commit_patches(fix, 0)?)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    B,
    Ag,
    Ma,
    L,
    R,
    Llm4szz,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::B,
        Algorithm::Ag,
        Algorithm::Ma,
        Algorithm::L,
        Algorithm::R,
        Algorithm::Llm4szz,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::B => "b",
            Algorithm::Ag => "ag",
            Algorithm::Ma => "ma",
            Algorithm::L => "l",
            Algorithm::R => "r",
            Algorithm::Llm4szz => "llm4szz",
        }
    }

    pub fn uses_llm(self) -> bool {
        self == Algorithm::Llm4szz
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.to_ascii_lowercase();
        let s = s.strip_suffix("-szz").or_else(|| s.strip_suffix("_szz")).unwrap_or(&s);
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

/// Runs one algorithm on one fix. Repository failures of the classic
/// variants give an empty prediction with a diagnostic, as the pipeline does.
pub fn predict(
    repo: &Repo,
    fix: &CommitId,
    algorithm: Algorithm,
    config: &Config,
    gateway: &Gateway,
) -> Result<Prediction, PipelineError> {
    let classic = match algorithm {
        Algorithm::Llm4szz => return pipeline::run(repo, fix, config, gateway),
        Algorithm::B => b_szz(repo, fix).map(|s| (s.candidates.keys().cloned().collect(), s)),
        Algorithm::Ag => ag_szz(repo, fix).map(|s| (s.candidates.keys().cloned().collect(), s)),
        Algorithm::Ma => ma_szz(repo, fix).map(|s| (s.candidates.keys().cloned().collect(), s)),
        Algorithm::L | Algorithm::R => ag_szz(repo, fix).map(|s| {
            let strategy = if algorithm == Algorithm::L { Strategy::Largest } else { Strategy::Latest };
            (select_single(&s, strategy).into_iter().collect(), s)
        }),
    };
    Ok(match classic {
        Ok((predicted, set)) => Prediction::classic(&set, predicted),
        Err(e) => Prediction::empty(fix.clone(), vec![format!("repository error: {e}")]),
    })
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub algorithm: Algorithm,
    pub repeats: usize,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryPrediction {
    pub repo: String,
    pub size: Option<SizeClass>,
    pub inducing: BTreeSet<CommitId>,
    pub prediction: Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub overall: Metrics,
    pub small: Metrics,
    pub large: Metrics,
    pub predictions: Vec<EntryPrediction>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AveragedReport {
    pub overall: AveragedMetrics,
    pub small: AveragedMetrics,
    pub large: AveragedMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Seconds since the Unix epoch; the only field that varies between
    /// otherwise identical runs.
    pub generated_at: u64,
    pub algorithm: Algorithm,
    pub repeats: usize,
    pub interrupted: bool,
    pub entries: usize,
    pub evaluated: usize,
    pub skipped: Vec<String>,
    pub per_repeat: Vec<RepeatResult>,
    pub averaged: AveragedReport,
    pub usage: UsageReport,
    pub diagnostics: Vec<String>,
}

struct Task<'a> {
    index: usize,
    entry: &'a DatasetEntry,
    path: PathBuf,
}

struct Outcome {
    size: Result<SizeClass, String>,
    prediction: Prediction,
}

/// Evaluates `dataset` `repeats` times. Entries whose repository is missing
/// under `repos_dir` are skipped and left out of the metrics. Setting
/// `cancel` stops handing out entries; finished ones are still reported and
/// the report is marked interrupted.
pub fn run_eval(
    dataset: &[DatasetEntry],
    repos_dir: &Path,
    config: &Config,
    gateway: &Gateway,
    opts: &EvalOptions,
    cancel: Option<&AtomicBool>,
) -> Result<EvalReport, EvalError> {
    if !repos_dir.is_dir() {
        return Err(EvalError::MissingRepository(repos_dir.display().to_string()));
    }
    let mut skipped = Vec::new();
    let mut tasks = Vec::new();
    let mut caches: BTreeMap<String, Arc<MetaCache>> = BTreeMap::new();
    for (index, entry) in dataset.iter().enumerate() {
        let path = repos_dir.join(&entry.repo);
        if !caches.contains_key(&entry.repo) {
            match Repo::open(&path) {
                Ok(r) => {
                    caches.insert(entry.repo.clone(), r.meta_cache());
                }
                Err(e) => {
                    skipped.push(format!("{} {}: missing repository: {e}", entry.repo, entry.fix));
                    continue;
                }
            }
        }
        tasks.push(Task { index, entry, path });
    }

    let cancelled = || cancel.is_some_and(|c| c.load(Ordering::SeqCst));
    let mut per_repeat = Vec::new();
    let mut sizes: BTreeMap<usize, Result<SizeClass, String>> = BTreeMap::new();
    let mut interrupted = false;
    for _ in 0..opts.repeats.max(1) {
        if cancelled() {
            interrupted = true;
            break;
        }
        let outcomes = evaluate_once(&tasks, &caches, config, gateway, opts, &cancelled)?;
        if outcomes.len() < tasks.len() {
            interrupted = true;
        }
        let mut result = RepeatResult {
            overall: Metrics::default(),
            small: Metrics::default(),
            large: Metrics::default(),
            predictions: Vec::new(),
        };
        for task in &tasks {
            let Some(o) = outcomes.get(&task.index) else {
                continue;
            };
            let size = sizes.entry(task.index).or_insert_with(|| o.size.clone()).clone();
            let (tp, fp, fn_) = confusion(&o.prediction.predicted, task.entry);
            let m = Metrics::from_counts(tp, fp, fn_);
            result.overall = result.overall.merge(&m);
            match size {
                Ok(SizeClass::Small) => result.small = result.small.merge(&m),
                Ok(SizeClass::Large) => result.large = result.large.merge(&m),
                Err(_) => {}
            }
            result.predictions.push(EntryPrediction {
                repo: task.entry.repo.clone(),
                size: size.ok(),
                inducing: task.entry.inducing.clone(),
                prediction: o.prediction.clone(),
            });
        }
        per_repeat.push(result);
        if interrupted {
            break;
        }
    }

    let mut diagnostics: Vec<String> = sizes
        .iter()
        .filter_map(|(i, s)| s.as_ref().err().map(|e| format!("{} {}: size unknown: {e}", dataset[*i].repo, dataset[*i].fix)))
        .collect();
    diagnostics.extend(skipped.iter().cloned());
    let pick = |f: fn(&RepeatResult) -> Metrics| average(&per_repeat.iter().map(f).collect::<Vec<_>>());
    let averaged = AveragedReport {
        overall: pick(|r| r.overall),
        small: pick(|r| r.small),
        large: pick(|r| r.large),
    };
    let usage = aggregate_usage(
        &per_repeat
            .iter()
            .flat_map(|r| r.predictions.iter().map(|p| p.prediction.usage()))
            .collect::<Vec<_>>(),
    );
    Ok(EvalReport {
        generated_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        algorithm: opts.algorithm,
        repeats: opts.repeats.max(1),
        interrupted,
        entries: dataset.len(),
        evaluated: per_repeat.last().map(|r| r.predictions.len()).unwrap_or(0),
        skipped,
        per_repeat,
        averaged,
        usage,
        diagnostics,
    })
}

/// One pass over the tasks with a pool of workers. Each worker opens its
/// own repository handles, sharing the metadata cache per repository.
fn evaluate_once(
    tasks: &[Task<'_>],
    caches: &BTreeMap<String, Arc<MetaCache>>,
    config: &Config,
    gateway: &Gateway,
    opts: &EvalOptions,
    cancelled: &(dyn Fn() -> bool + Sync),
) -> Result<BTreeMap<usize, Outcome>, EvalError> {
    let next = AtomicUsize::new(0);
    let results: Mutex<BTreeMap<usize, Outcome>> = Mutex::new(BTreeMap::new());
    let failure: Mutex<Option<EvalError>> = Mutex::new(None);
    let workers = opts.workers.clamp(1, tasks.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                let mut repos: BTreeMap<&str, Repo> = BTreeMap::new();
                loop {
                    if cancelled() || failure.lock().unwrap().is_some() {
                        return;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(task) = tasks.get(i) else {
                        return;
                    };
                    let name = task.entry.repo.as_str();
                    if !repos.contains_key(name) {
                        match Repo::open_with_cache(&task.path, Arc::clone(&caches[name])) {
                            Ok(r) => {
                                repos.insert(name, r);
                            }
                            Err(e) => {
                                *failure.lock().unwrap() = Some(EvalError::Repo(e));
                                return;
                            }
                        }
                    }
                    let repo = &repos[name];
                    let size = classify_size(repo, &task.entry.fix).map_err(|e| e.to_string());
                    match predict(repo, &task.entry.fix, opts.algorithm, config, gateway) {
                        Ok(prediction) => {
                            results.lock().unwrap().insert(task.index, Outcome { size, prediction });
                        }
                        Err(e) => {
                            failure.lock().unwrap().get_or_insert(EvalError::Pipeline(e));
                            return;
                        }
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(results.into_inner().unwrap())
}
