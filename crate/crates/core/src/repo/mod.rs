//! Read-only repository access and line-origin tracing.

mod trace;

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use git2::{ErrorCode, ObjectType, Oid, Repository, Sort};
use serde::{Deserialize, Serialize};

use crate::diff::{FilePatch, LineMap};
use crate::error::RepoError;

/// Minimum content similarity for pairing a deleted and an added path as a
/// rename.
pub const RENAME_SIMILARITY: f64 = 0.5;

/// Full 40-character lowercase hexadecimal commit id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CommitId(String);

impl CommitId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn short(&self) -> &str {
        &self.0[..11]
    }

    pub fn oid(&self) -> Oid {
        Oid::from_str(&self.0).expect("validated on construction")
    }

    /// First eight bytes as an integer; used to derive per-commit seeds.
    pub fn seed(&self) -> u64 {
        u64::from_str_radix(&self.0[..16], 16).expect("validated hex")
    }
}

impl From<Oid> for CommitId {
    fn from(oid: Oid) -> Self {
        CommitId(oid.to_string())
    }
}

impl FromStr for CommitId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == 40 && s.bytes().all(|b| b.is_ascii_hexdigit()) {
            Ok(CommitId(s.to_ascii_lowercase()))
        } else {
            Err(format!("not a 40-character hex commit id: {s:?}"))
        }
    }
}

impl TryFrom<String> for CommitId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<CommitId> for String {
    fn from(id: CommitId) -> String {
        id.0
    }
}

impl fmt::Display for CommitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitMeta {
    pub id: CommitId,
    pub parents: Vec<CommitId>,
    pub committer_time: i64,
    pub author_time: i64,
    pub message: String,
    pub is_merge: bool,
}

impl CommitMeta {
    pub fn first_parent(&self) -> Option<&CommitId> {
        self.parents.first()
    }
}

/// A text file at one revision. Lines are 1-indexed through [`FileVersion::line`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileVersion {
    pub path: String,
    pub rev: CommitId,
    pub lines: Vec<String>,
}

impl FileVersion {
    pub fn line(&self, line_no: usize) -> Option<&str> {
        line_no
            .checked_sub(1)
            .and_then(|i| self.lines.get(i))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LineOrigin {
    pub commit: CommitId,
    pub path: String,
    pub line_no: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeStatus {
    Added,
    Deleted,
    Modified,
    Renamed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChange {
    pub old_path: Option<String>,
    pub new_path: Option<String>,
    pub status: ChangeStatus,
}

impl FileChange {
    pub fn path(&self) -> &str {
        self.new_path
            .as_deref()
            .or(self.old_path.as_deref())
            .unwrap_or("")
    }
}

/// Commit metadata shared between repository handles on the same repository.
#[derive(Debug, Default)]
pub struct MetaCache {
    inner: RwLock<HashMap<CommitId, CommitMeta>>,
}

impl MetaCache {
    pub fn get(&self, id: &CommitId) -> Option<CommitMeta> {
        self.inner.read().ok()?.get(id).cloned()
    }

    pub fn insert(&self, meta: CommitMeta) {
        if let Ok(mut map) = self.inner.write() {
            map.insert(meta.id.clone(), meta);
        }
    }

    pub fn len(&self) -> usize {
        self.inner.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

type Lines = Rc<Vec<String>>;

/// A single-user handle on an on-disk repository.
pub struct Repo {
    git: Repository,
    path: PathBuf,
    meta: Arc<MetaCache>,
    blobs: RefCell<HashMap<Oid, Lines>>,
    maps: RefCell<HashMap<(Oid, Oid), Rc<LineMap>>>,
    changes: RefCell<HashMap<Oid, Rc<Vec<FileChange>>>>,
}

impl fmt::Debug for Repo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Repo").field("path", &self.path).finish()
    }
}

/// Splits file content into lines, normalizing CRLF to LF. A final line
/// terminator does not produce an extra empty line.
pub fn split_lines(content: &[u8]) -> Vec<String> {
    let text = String::from_utf8_lossy(content);
    if text.is_empty() {
        return Vec::new();
    }
    let body = text.strip_suffix('\n').unwrap_or(&text);
    body.split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect()
}

fn similarity(a: &[String], b: &[String]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let common = LineMap::between(a, b).len();
    2.0 * common as f64 / (a.len() + b.len()) as f64
}

impl Repo {
    pub fn open(path: impl AsRef<Path>) -> Result<Repo, RepoError> {
        Self::open_with_cache(path, Arc::new(MetaCache::default()))
    }

    pub fn open_with_cache(path: impl AsRef<Path>, meta: Arc<MetaCache>) -> Result<Repo, RepoError> {
        let path = path.as_ref();
        let git = Repository::open(path)
            .map_err(|_| RepoError::NotARepository(path.display().to_string()))?;
        Ok(Repo {
            git,
            path: path.to_path_buf(),
            meta,
            blobs: RefCell::default(),
            maps: RefCell::default(),
            changes: RefCell::default(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn git(&self) -> &Repository {
        &self.git
    }

    pub fn meta_cache(&self) -> Arc<MetaCache> {
        Arc::clone(&self.meta)
    }

    /// Resolves a commit id (full or abbreviated) or a symbolic reference.
    pub fn resolve_commit(&self, reference: &str) -> Result<CommitMeta, RepoError> {
        let obj = self.git.revparse_single(reference).map_err(|e| match e.code() {
            ErrorCode::Ambiguous => RepoError::AmbiguousPrefix(reference.to_string()),
            _ => RepoError::UnknownRef(reference.to_string()),
        })?;
        let commit = obj
            .peel_to_commit()
            .map_err(|_| RepoError::UnknownRef(reference.to_string()))?;
        self.meta(&commit.id().into())
    }

    pub fn meta(&self, id: &CommitId) -> Result<CommitMeta, RepoError> {
        if let Some(m) = self.meta.get(id) {
            return Ok(m);
        }
        let commit = self
            .git
            .find_commit(id.oid())
            .map_err(|_| RepoError::UnknownRef(id.to_string()))?;
        let parents: Vec<CommitId> = commit.parent_ids().map(CommitId::from).collect();
        let meta = CommitMeta {
            id: id.clone(),
            is_merge: parents.len() > 1,
            parents,
            committer_time: commit.committer().when().seconds(),
            author_time: commit.author().when().seconds(),
            message: String::from_utf8_lossy(commit.message_raw_bytes()).into_owned(),
        };
        self.meta.insert(meta.clone());
        Ok(meta)
    }

    fn blob_oid(&self, rev: &CommitId, path: &str) -> Result<Option<Oid>, RepoError> {
        let commit = self
            .git
            .find_commit(rev.oid())
            .map_err(|_| RepoError::UnknownRef(rev.to_string()))?;
        let tree = commit.tree()?;
        let entry = match tree.get_path(Path::new(path)) {
            Ok(e) => e,
            Err(e) if e.code() == ErrorCode::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        Ok((entry.kind() == Some(ObjectType::Blob)).then(|| entry.id()))
    }

    fn blob_lines(&self, oid: Oid, path: &str) -> Result<Lines, RepoError> {
        if let Some(lines) = self.blobs.borrow().get(&oid) {
            return Ok(Rc::clone(lines));
        }
        let blob = self.git.find_blob(oid)?;
        if blob.is_binary() {
            return Err(RepoError::BinaryFile(path.to_string()));
        }
        let lines = Rc::new(split_lines(blob.content()));
        self.blobs.borrow_mut().insert(oid, Rc::clone(&lines));
        Ok(lines)
    }

    /// File snapshot at `rev`, or `None` when the path does not exist there.
    pub fn file_at(&self, rev: &CommitId, path: &str) -> Result<Option<FileVersion>, RepoError> {
        let Some(oid) = self.blob_oid(rev, path)? else {
            return Ok(None);
        };
        let lines = self.blob_lines(oid, path)?;
        Ok(Some(FileVersion {
            path: path.to_string(),
            rev: rev.clone(),
            lines: lines.as_ref().clone(),
        }))
    }

    pub fn is_binary_at(&self, rev: &CommitId, path: &str) -> Result<bool, RepoError> {
        match self.blob_oid(rev, path)? {
            Some(oid) => Ok(self.git.find_blob(oid)?.is_binary()),
            None => Ok(false),
        }
    }

    /// Files touched by `rev` relative to its first parent (the empty tree for
    /// root commits). Deleted/added pairs whose line similarity reaches
    /// [`RENAME_SIMILARITY`] are reported as renames.
    pub fn changed_files(&self, rev: &CommitId) -> Result<Vec<FileChange>, RepoError> {
        Ok(self.changed_files_rc(rev)?.as_ref().clone())
    }

    fn changed_files_rc(&self, rev: &CommitId) -> Result<Rc<Vec<FileChange>>, RepoError> {
        let oid = rev.oid();
        if let Some(c) = self.changes.borrow().get(&oid) {
            return Ok(Rc::clone(c));
        }
        let commit = self
            .git
            .find_commit(oid)
            .map_err(|_| RepoError::UnknownRef(rev.to_string()))?;
        let new_tree = commit.tree()?;
        let old_tree = match commit.parent(0) {
            Ok(p) => Some(p.tree()?),
            Err(_) => None,
        };
        let diff = self
            .git
            .diff_tree_to_tree(old_tree.as_ref(), Some(&new_tree), None)?;

        let mut added: Vec<(String, Oid)> = Vec::new();
        let mut deleted: Vec<(String, Oid)> = Vec::new();
        let mut out: Vec<FileChange> = Vec::new();
        for delta in diff.deltas() {
            let old_path = delta.old_file().path().map(|p| p.to_string_lossy().into_owned());
            let new_path = delta.new_file().path().map(|p| p.to_string_lossy().into_owned());
            match delta.status() {
                git2::Delta::Added => added.push((new_path.unwrap_or_default(), delta.new_file().id())),
                git2::Delta::Deleted => {
                    deleted.push((old_path.unwrap_or_default(), delta.old_file().id()))
                }
                _ => out.push(FileChange {
                    old_path,
                    new_path,
                    status: ChangeStatus::Modified,
                }),
            }
        }

        let mut scored: Vec<(f64, usize, usize)> = Vec::new();
        for (di, (dpath, doid)) in deleted.iter().enumerate() {
            for (ai, (apath, aoid)) in added.iter().enumerate() {
                let score = if doid == aoid {
                    1.0
                } else {
                    match (self.blob_lines(*doid, dpath), self.blob_lines(*aoid, apath)) {
                        (Ok(a), Ok(b)) => similarity(&a, &b),
                        _ => 0.0,
                    }
                };
                if score >= RENAME_SIMILARITY {
                    scored.push((score, di, ai));
                }
            }
        }
        scored.sort_by(|x, y| {
            y.0.partial_cmp(&x.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(deleted[x.1].0.cmp(&deleted[y.1].0))
                .then(added[x.2].0.cmp(&added[y.2].0))
        });
        let mut del_used = vec![false; deleted.len()];
        let mut add_used = vec![false; added.len()];
        for (_, di, ai) in scored {
            if del_used[di] || add_used[ai] {
                continue;
            }
            del_used[di] = true;
            add_used[ai] = true;
            out.push(FileChange {
                old_path: Some(deleted[di].0.clone()),
                new_path: Some(added[ai].0.clone()),
                status: ChangeStatus::Renamed,
            });
        }
        for (i, (p, _)) in deleted.iter().enumerate() {
            if !del_used[i] {
                out.push(FileChange {
                    old_path: Some(p.clone()),
                    new_path: None,
                    status: ChangeStatus::Deleted,
                });
            }
        }
        for (i, (p, _)) in added.iter().enumerate() {
            if !add_used[i] {
                out.push(FileChange {
                    old_path: None,
                    new_path: Some(p.clone()),
                    status: ChangeStatus::Added,
                });
            }
        }
        out.sort_by(|a, b| a.path().cmp(b.path()));
        let out = Rc::new(out);
        self.changes.borrow_mut().insert(oid, Rc::clone(&out));
        Ok(out)
    }

    /// The path under which `path` at `rev` existed in `parent`, following a
    /// rename recorded by `rev` when the path is new.
    pub fn path_in_parent(
        &self,
        rev: &CommitId,
        parent: &CommitId,
        path: &str,
    ) -> Result<Option<String>, RepoError> {
        if self.blob_oid(parent, path)?.is_some() {
            return Ok(Some(path.to_string()));
        }
        let first = self.meta(rev)?.first_parent().cloned();
        if first.as_ref() != Some(parent) {
            return Ok(None);
        }
        Ok(self
            .changed_files_rc(rev)?
            .iter()
            .find(|c| c.status == ChangeStatus::Renamed && c.new_path.as_deref() == Some(path))
            .and_then(|c| c.old_path.clone()))
    }

    /// Line map between `old_path@old_rev` and `new_path@new_rev`; `None` when
    /// either side is absent.
    pub fn line_map(
        &self,
        old_rev: &CommitId,
        old_path: &str,
        new_rev: &CommitId,
        new_path: &str,
    ) -> Result<Option<Rc<LineMap>>, RepoError> {
        let (Some(a), Some(b)) = (
            self.blob_oid(old_rev, old_path)?,
            self.blob_oid(new_rev, new_path)?,
        ) else {
            return Ok(None);
        };
        if let Some(m) = self.maps.borrow().get(&(a, b)) {
            return Ok(Some(Rc::clone(m)));
        }
        let old = self.blob_lines(a, old_path)?;
        let new = self.blob_lines(b, new_path)?;
        let map = Rc::new(if a == b {
            LineMap::identity(old.len())
        } else {
            LineMap::between(&old, &new)
        });
        self.maps.borrow_mut().insert((a, b), Rc::clone(&map));
        Ok(Some(map))
    }

    /// Whether `path` has identical content at `rev` and its first parent.
    pub fn unchanged_vs_first_parent(&self, rev: &CommitId, path: &str) -> Result<bool, RepoError> {
        let meta = self.meta(rev)?;
        let Some(parent) = meta.first_parent() else {
            return Ok(false);
        };
        let Some(parent_path) = self.path_in_parent(rev, parent, path)? else {
            return Ok(false);
        };
        Ok(self.blob_oid(rev, path)? == self.blob_oid(parent, &parent_path)?)
    }

    /// Per-file patches of `rev` against its first parent, with `context`
    /// unchanged lines around each hunk.
    pub fn commit_patches(&self, rev: &CommitId, context: usize) -> Result<Vec<FilePatch>, RepoError> {
        let meta = self.meta(rev)?;
        let parent = meta.first_parent().cloned();
        let mut out = Vec::new();
        for change in self.changed_files_rc(rev)?.iter() {
            let old = match (&parent, &change.old_path) {
                (Some(p), Some(path)) => self.text_or_binary(p, path)?,
                _ => Some(Vec::new()),
            };
            let new = match &change.new_path {
                Some(path) => self.text_or_binary(rev, path)?,
                None => Some(Vec::new()),
            };
            match (old, new) {
                (Some(old), Some(new)) => out.push(FilePatch::from_versions(
                    change.old_path.clone(),
                    change.new_path.clone(),
                    &old,
                    &new,
                    context,
                )),
                _ => out.push(FilePatch::binary(
                    change.old_path.clone(),
                    change.new_path.clone(),
                )),
            }
        }
        Ok(out)
    }

    /// `Some(lines)` for text (empty if absent), `None` for binary content.
    fn text_or_binary(&self, rev: &CommitId, path: &str) -> Result<Option<Vec<String>>, RepoError> {
        match self.file_at(rev, path) {
            Ok(Some(f)) => Ok(Some(f.lines)),
            Ok(None) => Ok(Some(Vec::new())),
            Err(RepoError::BinaryFile(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// All commits reachable from HEAD, newest first.
    pub fn history(&self) -> Result<Vec<CommitMeta>, RepoError> {
        let mut walk = self.git.revwalk()?;
        walk.set_sorting(Sort::TOPOLOGICAL | Sort::TIME)?;
        walk.push_head()?;
        walk.map(|oid| self.meta(&oid?.into())).collect()
    }

    /// Whether `ancestor` is reachable from `rev` (or equal to it).
    pub fn is_ancestor(&self, ancestor: &CommitId, rev: &CommitId) -> Result<bool, RepoError> {
        if ancestor == rev {
            return Ok(true);
        }
        Ok(self.git.graph_descendant_of(rev.oid(), ancestor.oid())?)
    }
}
