use super::{CommitId, LineOrigin, Repo};
use crate::error::RepoError;

impl Repo {
    /// Finds the commit that last added or modified `line_no` of `path` as
    /// seen at `rev`.
    ///
    /// History is walked along first parents. At each step the line is mapped
    /// into the parent through a minimal line diff; the walk stops at the
    /// first commit where it has no counterpart. Renames recorded by a commit
    /// are followed.
    pub fn trace_line(&self, rev: &CommitId, path: &str, line_no: usize) -> Result<LineOrigin, RepoError> {
        let file = self.file_at(rev, path)?.ok_or_else(|| RepoError::FileAbsent {
            rev: rev.to_string(),
            path: path.to_string(),
        })?;
        if line_no == 0 || line_no > file.len() {
            return Err(RepoError::LineOutOfRange {
                path: path.to_string(),
                line: line_no,
                len: file.len(),
            });
        }
        self.trace_from(rev.clone(), path.to_string(), line_no)
    }

    pub(crate) fn trace_from(
        &self,
        mut rev: CommitId,
        mut path: String,
        mut line_no: usize,
    ) -> Result<LineOrigin, RepoError> {
        loop {
            let meta = self.meta(&rev)?;
            let Some(parent) = meta.first_parent().cloned() else {
                break;
            };
            let Some(parent_path) = self.path_in_parent(&rev, &parent, &path)? else {
                break;
            };
            let Some(map) = self.line_map(&parent, &parent_path, &rev, &path)? else {
                break;
            };
            match map.old_of(line_no) {
                Some(old) => {
                    rev = parent;
                    path = parent_path;
                    line_no = old;
                }
                None => break,
            }
        }
        Ok(LineOrigin {
            commit: rev,
            path,
            line_no,
        })
    }

    /// Origins of every line of `path` at `rev`, in line order.
    pub fn blame(&self, rev: &CommitId, path: &str) -> Result<Vec<LineOrigin>, RepoError> {
        let file = self.file_at(rev, path)?.ok_or_else(|| RepoError::FileAbsent {
            rev: rev.to_string(),
            path: path.to_string(),
        })?;
        (1..=file.len())
            .map(|k| self.trace_from(rev.clone(), path.to_string(), k))
            .collect()
    }
}
