//! Deterministic synthetic repositories for tests and examples.
//!
//! Commits are written with a fixed identity and caller-controlled
//! timestamps, so the same sequence of calls always yields the same commit
//! ids.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use git2::{FileMode, Oid, Repository, Signature, Time};

use crate::repo::CommitId;

pub type Snapshot = BTreeMap<String, Vec<u8>>;

pub struct RepoBuilder {
    path: PathBuf,
    repo: Repository,
    head: Option<CommitId>,
    snapshots: HashMap<CommitId, Snapshot>,
    clock: i64,
}

/// Start of the fixture clock (2020-01-01T00:00:00Z).
pub const EPOCH: i64 = 1_577_836_800;

impl RepoBuilder {
    pub fn init(path: impl AsRef<Path>) -> Result<Self, git2::Error> {
        let repo = Repository::init(path.as_ref())?;
        repo.set_head("refs/heads/main")?;
        Ok(RepoBuilder {
            path: path.as_ref().to_path_buf(),
            repo,
            head: None,
            snapshots: HashMap::new(),
            clock: EPOCH,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn head(&self) -> Option<&CommitId> {
        self.head.as_ref()
    }

    pub fn snapshot(&self, id: &CommitId) -> Option<&Snapshot> {
        self.snapshots.get(id)
    }

    /// Applies `changes` (path, new content or `None` to delete) on top of the
    /// current head and commits one minute after the previous commit.
    pub fn commit(&mut self, message: &str, changes: &[(&str, Option<&str>)]) -> Result<CommitId, git2::Error> {
        self.clock += 60;
        let time = self.clock;
        self.commit_at(message, changes, time)
    }

    pub fn commit_at(
        &mut self,
        message: &str,
        changes: &[(&str, Option<&str>)],
        time: i64,
    ) -> Result<CommitId, git2::Error> {
        let mut snap = self
            .head
            .as_ref()
            .and_then(|h| self.snapshots.get(h))
            .cloned()
            .unwrap_or_default();
        for (path, content) in changes {
            match content {
                Some(c) => {
                    snap.insert(path.to_string(), c.as_bytes().to_vec());
                }
                None => {
                    snap.remove(*path);
                }
            }
        }
        let parents: Vec<CommitId> = self.head.iter().cloned().collect();
        let id = self.commit_snapshot(&parents, snap, message, time)?;
        self.set_head(&id)?;
        Ok(id)
    }

    /// Writes a commit with explicit parents and full tree content. Does not
    /// move HEAD.
    pub fn commit_snapshot(
        &mut self,
        parents: &[CommitId],
        snapshot: Snapshot,
        message: &str,
        time: i64,
    ) -> Result<CommitId, git2::Error> {
        self.clock = self.clock.max(time);
        let tree_oid = self.write_tree(&snapshot)?;
        let tree = self.repo.find_tree(tree_oid)?;
        let sig = Signature::new("Fixture Author", "fixture@example.com", &Time::new(time, 0))?;
        let parent_commits = parents
            .iter()
            .map(|p| self.repo.find_commit(p.oid()))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&git2::Commit<'_>> = parent_commits.iter().collect();
        let oid = self.repo.commit(None, &sig, &sig, message, &tree, &refs)?;
        let id = CommitId::from(oid);
        self.snapshots.insert(id.clone(), snapshot);
        Ok(id)
    }

    pub fn set_head(&mut self, id: &CommitId) -> Result<(), git2::Error> {
        self.repo
            .reference("refs/heads/main", id.oid(), true, "fixture")?;
        self.head = Some(id.clone());
        Ok(())
    }

    fn write_tree(&self, snapshot: &Snapshot) -> Result<Oid, git2::Error> {
        let entries: Vec<(&str, &[u8])> = snapshot
            .iter()
            .map(|(p, c)| (p.as_str(), c.as_slice()))
            .collect();
        self.write_subtree(&entries)
    }

    fn write_subtree(&self, entries: &[(&str, &[u8])]) -> Result<Oid, git2::Error> {
        let mut builder = self.repo.treebuilder(None)?;
        let mut dirs: BTreeMap<&str, Vec<(&str, &[u8])>> = BTreeMap::new();
        for (path, content) in entries {
            match path.split_once('/') {
                Some((dir, rest)) => dirs.entry(dir).or_default().push((rest, content)),
                None => {
                    let blob = self.repo.blob(content)?;
                    builder.insert(path, blob, FileMode::Blob.into())?;
                }
            }
        }
        for (dir, children) in dirs {
            let sub = self.write_subtree(&children)?;
            builder.insert(dir, sub, FileMode::Tree.into())?;
        }
        builder.write()
    }
}

/// Joins lines with a trailing newline.
pub fn text(lines: &[&str]) -> String {
    let mut s = lines.join("\n");
    s.push('\n');
    s
}

pub mod scenario;

pub mod synthetic {
    //! Random linear histories with forward-tracked line provenance.
    //!
    //! Every inserted or rewritten line gets a unique text, and edits never
    //! reorder surviving lines, so the provenance recorded here is the only
    //! valid attribution for each line.

    use std::collections::BTreeMap;
    use std::path::Path;

    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::RepoBuilder;
    use crate::repo::{CommitId, LineOrigin};

    #[derive(Debug, Clone)]
    struct Line {
        text: String,
        origin: Option<LineOrigin>,
    }

    /// A generated repository together with the provenance of every line of
    /// every file at every commit.
    pub struct SyntheticRepo {
        pub builder: RepoBuilder,
        pub commits: Vec<CommitId>,
        /// commit -> path -> origin of each line (index 0 is line 1).
        pub provenance: BTreeMap<CommitId, BTreeMap<String, Vec<LineOrigin>>>,
        pub renames: usize,
    }

    impl SyntheticRepo {
        /// Every `(commit, path, line, expected origin)` quadruple.
        pub fn queries(&self) -> impl Iterator<Item = (&CommitId, &str, usize, &LineOrigin)> {
            self.provenance.iter().flat_map(|(c, files)| {
                files.iter().flat_map(move |(p, origins)| {
                    origins
                        .iter()
                        .enumerate()
                        .map(move |(i, o)| (c, p.as_str(), i + 1, o))
                })
            })
        }
    }

    struct Gen {
        rng: ChaCha8Rng,
        counter: usize,
        next_file: usize,
    }

    const WORDS: &[&str] = &[
        "x = y + 1;", "return len;", "free(ptr);", "if (ret < 0)", "i++;", "goto out;",
        "lock(&m);", "unlock(&m);", "}", "{", "buf[i] = 0;", "call(a, b);",
    ];

    impl Gen {
        fn line(&mut self, commit: usize) -> Line {
            self.counter += 1;
            let word = WORDS[self.rng.gen_range(0..WORDS.len())];
            Line {
                text: format!("{word} /* c{commit} n{} */", self.counter),
                origin: None,
            }
        }

        fn lines(&mut self, commit: usize, n: usize) -> Vec<Line> {
            (0..n).map(|_| self.line(commit)).collect()
        }

        fn path(&mut self) -> String {
            self.next_file += 1;
            if self.rng.gen_bool(0.3) {
                format!("src/sub/file{}.c", self.next_file)
            } else {
                format!("src/file{}.c", self.next_file)
            }
        }

        fn edit(&mut self, commit: usize, file: &mut Vec<Line>) {
            let ops = self.rng.gen_range(1..=3);
            for _ in 0..ops {
                match self.rng.gen_range(0..3) {
                    0 => {
                        let at = self.rng.gen_range(0..=file.len());
                        let n = self.rng.gen_range(1..=3);
                        let new = self.lines(commit, n);
                        file.splice(at..at, new);
                    }
                    1 if file.len() > 1 => {
                        let at = self.rng.gen_range(0..file.len());
                        let n = self.rng.gen_range(1..=2).min(file.len() - at).min(file.len() - 1);
                        file.drain(at..at + n);
                    }
                    _ if !file.is_empty() => {
                        let at = self.rng.gen_range(0..file.len());
                        file[at] = self.line(commit);
                    }
                    _ => {
                        let new = self.line(commit);
                        file.push(new);
                    }
                }
            }
        }
    }

    fn render(lines: &[Line]) -> String {
        let mut s = String::new();
        for l in lines {
            s.push_str(&l.text);
            s.push('\n');
        }
        s
    }

    /// Builds a repository with `commits` commits (at least one) from `seed`.
    /// When `force_rename` is set and the history is long enough, one commit
    /// renames a file with at most one rewritten line.
    pub fn generate(
        dir: &Path,
        seed: u64,
        commits: usize,
        force_rename: bool,
    ) -> Result<SyntheticRepo, git2::Error> {
        let mut g = Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            counter: 0,
            next_file: 0,
        };
        let mut builder = RepoBuilder::init(dir)?;
        let mut files: BTreeMap<String, Vec<Line>> = BTreeMap::new();
        let mut commit_ids = Vec::new();
        let mut provenance = BTreeMap::new();
        let mut renames = 0;
        let rename_at = if force_rename && commits >= 3 {
            Some(g.rng.gen_range(1..commits))
        } else {
            None
        };

        for c in 0..commits.max(1) {
            let mut changes: Vec<(String, Option<String>)> = Vec::new();
            let mut touched: Vec<String> = Vec::new();
            if c == 0 {
                for _ in 0..g.rng.gen_range(1..=2) {
                    let p = g.path();
                    let n = g.rng.gen_range(4..=12);
                    files.insert(p.clone(), g.lines(c, n));
                    touched.push(p);
                }
            } else if Some(c) == rename_at {
                let candidates: Vec<String> = files
                    .iter()
                    .filter(|(_, l)| l.len() >= 4)
                    .map(|(p, _)| p.clone())
                    .collect();
                if let Some(old) = candidates.choose(&mut g.rng).cloned() {
                    let mut lines = files.remove(&old).expect("chosen from map");
                    if g.rng.gen_bool(0.5) {
                        let at = g.rng.gen_range(0..lines.len());
                        lines[at] = g.line(c);
                    }
                    let new = g.path();
                    changes.push((old, None));
                    files.insert(new.clone(), lines);
                    touched.push(new);
                    renames += 1;
                }
            } else {
                let actions = g.rng.gen_range(1..=2);
                for _ in 0..actions {
                    let roll = g.rng.gen_range(0..10);
                    let existing: Vec<String> = files.keys().cloned().collect();
                    if roll == 0 || existing.is_empty() {
                        let p = g.path();
                        let n = g.rng.gen_range(3..=10);
                        files.insert(p.clone(), g.lines(c, n));
                        touched.push(p);
                    } else if roll == 1 && existing.len() > 1 {
                        let p = existing.choose(&mut g.rng).cloned().expect("non-empty");
                        if !touched.contains(&p) {
                            files.remove(&p);
                            changes.push((p, None));
                        }
                    } else {
                        let p = existing.choose(&mut g.rng).cloned().expect("non-empty");
                        let file = files.get_mut(&p).expect("existing");
                        g.edit(c, file);
                        touched.push(p);
                    }
                }
            }

            // Only commit files that still exist after this round.
            touched.sort();
            touched.dedup();
            for p in &touched {
                if let Some(lines) = files.get(p) {
                    changes.push((p.clone(), Some(render(lines))));
                }
            }
            let refs: Vec<(&str, Option<&str>)> = changes
                .iter()
                .map(|(p, c)| (p.as_str(), c.as_deref()))
                .collect();
            let id = builder.commit(&format!("change {c}"), &refs)?;

            let mut prov = BTreeMap::new();
            for (p, lines) in files.iter_mut() {
                for (i, l) in lines.iter_mut().enumerate() {
                    if l.origin.is_none() {
                        l.origin = Some(LineOrigin {
                            commit: id.clone(),
                            path: p.clone(),
                            line_no: i + 1,
                        });
                    }
                }
                prov.insert(
                    p.clone(),
                    lines.iter().map(|l| l.origin.clone().expect("assigned")).collect(),
                );
            }
            provenance.insert(id.clone(), prov);
            commit_ids.push(id);
        }
        Ok(SyntheticRepo {
            builder,
            commits: commit_ids,
            provenance,
            renames,
        })
    }
}
