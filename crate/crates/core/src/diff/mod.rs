//! Structured model of unified diffs.
//!
//! Patches are either parsed from unified diff text ([`parse_unified`]) or
//! computed directly from two file versions ([`FilePatch::from_versions`]).
//! [`render_unified`] writes the model back as text; parsing the rendered
//! text reproduces the model.

mod lcs;
mod noise;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use crate::error::MalformedDiff;
use crate::repo::FileVersion;
pub use lcs::{edit_script, EditOp, LineMap};
pub use noise::{classify_noise, cosmetic_deletions, strip_whitespace, Language, NoiseClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineKind {
    Added,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangedLine {
    pub kind: LineKind,
    pub old_no: Option<usize>,
    pub new_no: Option<usize>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum HunkLine {
    Context {
        old_no: usize,
        new_no: usize,
        text: String,
    },
    Changed(ChangedLine),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    pub lines: Vec<HunkLine>,
}

impl Hunk {
    pub fn changed(&self) -> impl Iterator<Item = &ChangedLine> {
        self.lines.iter().filter_map(|l| match l {
            HunkLine::Changed(c) => Some(c),
            HunkLine::Context { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilePatch {
    pub old_path: Option<String>,
    pub new_path: Option<String>,
    pub hunks: Vec<Hunk>,
    pub is_binary: bool,
}

impl FilePatch {
    /// The path the patch is known by: the new path, or the old one for
    /// deletions.
    pub fn path(&self) -> &str {
        self.new_path
            .as_deref()
            .or(self.old_path.as_deref())
            .unwrap_or("")
    }

    pub fn changed(&self) -> impl Iterator<Item = &ChangedLine> {
        self.hunks.iter().flat_map(Hunk::changed)
    }

    pub fn deleted(&self) -> impl Iterator<Item = &ChangedLine> {
        self.changed().filter(|c| c.kind == LineKind::Deleted)
    }

    pub fn added(&self) -> impl Iterator<Item = &ChangedLine> {
        self.changed().filter(|c| c.kind == LineKind::Added)
    }

    pub fn binary(old_path: Option<String>, new_path: Option<String>) -> Self {
        FilePatch {
            old_path,
            new_path,
            hunks: Vec::new(),
            is_binary: true,
        }
    }

    /// Diffs two text versions with `context` unchanged lines around each
    /// hunk. Hunks separated by at most `2 * context` unchanged lines merge.
    pub fn from_versions(
        old_path: Option<String>,
        new_path: Option<String>,
        old: &[String],
        new: &[String],
        context: usize,
    ) -> Self {
        let ops = edit_script(old, new);
        let changes: Vec<usize> = ops
            .iter()
            .enumerate()
            .filter(|(_, op)| !matches!(op, EditOp::Equal { .. }))
            .map(|(i, _)| i)
            .collect();

        let mut groups: Vec<(usize, usize)> = Vec::new();
        for &i in &changes {
            match groups.last_mut() {
                Some((_, end)) if i - *end <= 2 * context + 1 => *end = i,
                _ => groups.push((i, i)),
            }
        }

        let mut hunks = Vec::with_capacity(groups.len());
        for (first, last) in groups {
            let start = first.saturating_sub(context);
            let end = (last + context).min(ops.len() - 1);
            let old_before = ops[..start]
                .iter()
                .filter(|op| !matches!(op, EditOp::Insert { .. }))
                .count();
            let new_before = ops[..start]
                .iter()
                .filter(|op| !matches!(op, EditOp::Delete { .. }))
                .count();
            let mut lines = Vec::new();
            let (mut old_len, mut new_len) = (0, 0);
            for op in &ops[start..=end] {
                lines.push(match *op {
                    EditOp::Equal { old: o, new: n } => {
                        old_len += 1;
                        new_len += 1;
                        HunkLine::Context {
                            old_no: o + 1,
                            new_no: n + 1,
                            text: old[o].clone(),
                        }
                    }
                    EditOp::Delete { old: o } => {
                        old_len += 1;
                        HunkLine::Changed(ChangedLine {
                            kind: LineKind::Deleted,
                            old_no: Some(o + 1),
                            new_no: None,
                            text: old[o].clone(),
                        })
                    }
                    EditOp::Insert { new: n } => {
                        new_len += 1;
                        HunkLine::Changed(ChangedLine {
                            kind: LineKind::Added,
                            old_no: None,
                            new_no: Some(n + 1),
                            text: new[n].clone(),
                        })
                    }
                });
            }
            hunks.push(Hunk {
                old_start: if old_len > 0 { old_before + 1 } else { old_before },
                old_len,
                new_start: if new_len > 0 { new_before + 1 } else { new_before },
                new_len,
                lines,
            });
        }

        FilePatch {
            old_path,
            new_path,
            hunks,
            is_binary: false,
        }
    }
}

/// Pairs the unchanged lines of a minimal line-level diff between two
/// versions. Changed, deleted and added lines stay unmapped.
pub fn build_line_map(old: &FileVersion, new: &FileVersion) -> LineMap {
    LineMap::between(&old.lines, &new.lines)
}

/// Added plus deleted lines across all text patches of one commit.
pub fn count_changed_lines(patches: &[FilePatch]) -> usize {
    patches
        .iter()
        .filter(|p| !p.is_binary)
        .map(|p| p.changed().count())
        .sum()
}

/// Renders patches as git-style unified diff text.
pub fn render_unified(patches: &[FilePatch]) -> String {
    let mut out = String::new();
    for p in patches {
        render_file(&mut out, p);
    }
    out
}

pub fn render_file(out: &mut String, p: &FilePatch) {
    let a = p.old_path.as_deref().or(p.new_path.as_deref()).unwrap_or("");
    let b = p.new_path.as_deref().or(p.old_path.as_deref()).unwrap_or("");
    let _ = writeln!(out, "diff --git a/{a} b/{b}");
    match (&p.old_path, &p.new_path) {
        (None, Some(_)) => out.push_str("new file mode 100644\n"),
        (Some(_), None) => out.push_str("deleted file mode 100644\n"),
        (Some(o), Some(n)) if o != n => {
            let _ = writeln!(out, "rename from {o}\nrename to {n}");
        }
        _ => {}
    }
    if p.is_binary {
        let old = p.old_path.as_ref().map_or("/dev/null".to_string(), |x| format!("a/{x}"));
        let new = p.new_path.as_ref().map_or("/dev/null".to_string(), |x| format!("b/{x}"));
        let _ = writeln!(out, "Binary files {old} and {new} differ");
        return;
    }
    if p.hunks.is_empty() {
        return;
    }
    match &p.old_path {
        Some(o) => {
            let _ = writeln!(out, "--- a/{o}");
        }
        None => out.push_str("--- /dev/null\n"),
    }
    match &p.new_path {
        Some(n) => {
            let _ = writeln!(out, "+++ b/{n}");
        }
        None => out.push_str("+++ /dev/null\n"),
    }
    for h in &p.hunks {
        let _ = writeln!(
            out,
            "@@ -{},{} +{},{} @@",
            h.old_start, h.old_len, h.new_start, h.new_len
        );
        for l in &h.lines {
            match l {
                HunkLine::Context { text, .. } => {
                    let _ = writeln!(out, " {text}");
                }
                HunkLine::Changed(c) => {
                    let sign = if c.kind == LineKind::Added { '+' } else { '-' };
                    let _ = writeln!(out, "{sign}{}", c.text);
                }
            }
        }
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Next line without its terminator, plus the byte offset it starts at.
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        if self.pos >= self.text.len() {
            return None;
        }
        let start = self.pos;
        let rest = &self.text[start..];
        let (line, advance) = match rest.find('\n') {
            Some(i) => (&rest[..i], i + 1),
            None => (rest, rest.len()),
        };
        self.pos += advance;
        Some((start, line.strip_suffix('\r').unwrap_or(line)))
    }

    fn peek_line(&self) -> Option<&'a str> {
        let rest = self.text.get(self.pos..)?;
        if rest.is_empty() {
            return None;
        }
        let line = rest.split('\n').next().unwrap_or("");
        Some(line.strip_suffix('\r').unwrap_or(line))
    }
}

fn parse_path(raw: &str, prefix: &str) -> Option<String> {
    let raw = raw.split('\t').next().unwrap_or(raw).trim_end();
    let raw = raw
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .unwrap_or(raw);
    if raw == "/dev/null" {
        return None;
    }
    Some(raw.strip_prefix(prefix).unwrap_or(raw).to_string())
}

fn git_header_paths(rest: &str) -> (Option<String>, Option<String>) {
    // "a/<path> b/<path>"; ambiguous with spaces, so prefer the symmetric split.
    let bytes = rest.len();
    if bytes % 2 == 1 {
        let half = bytes / 2;
        let (a, b) = (&rest[..half], &rest[half + 1..]);
        if let (Some(a), Some(b)) = (a.strip_prefix("a/"), b.strip_prefix("b/")) {
            if a == b {
                return (Some(a.to_string()), Some(b.to_string()));
            }
        }
    }
    match rest.find(" b/") {
        Some(i) => (
            Some(rest[..i].strip_prefix("a/").unwrap_or(&rest[..i]).to_string()),
            Some(rest[i + 3..].to_string()),
        ),
        None => (None, None),
    }
}

fn parse_range(s: &str) -> Option<(usize, usize)> {
    match s.split_once(',') {
        Some((start, len)) => Some((start.parse().ok()?, len.parse().ok()?)),
        None => Some((s.parse().ok()?, 1)),
    }
}

fn parse_hunk_header(line: &str) -> Option<(usize, usize, usize, usize)> {
    let rest = line.strip_prefix("@@ -")?;
    let (old, rest) = rest.split_once(" +")?;
    let (new, _) = rest.split_once(" @@")?;
    let (os, ol) = parse_range(old)?;
    let (ns, nl) = parse_range(new)?;
    Some((os, ol, ns, nl))
}

/// Parses (possibly multi-file) unified diff text. Lines outside file
/// sections, such as commit headers, are ignored.
pub fn parse_unified(text: &str) -> Result<Vec<FilePatch>, MalformedDiff> {
    let mut cur = Cursor { text, pos: 0 };
    let mut patches: Vec<FilePatch> = Vec::new();
    // Whether the current patch was opened by a `diff --git` header and has
    // not yet seen its `---`/`+++` pair.
    let mut open: Option<FilePatch> = None;
    let mut saw_minus = false;

    let flush = |open: &mut Option<FilePatch>, patches: &mut Vec<FilePatch>| {
        if let Some(p) = open.take() {
            patches.push(p);
        }
    };

    while let Some((offset, line)) = cur.next_line() {
        if let Some(rest) = line.strip_prefix("diff --git ") {
            flush(&mut open, &mut patches);
            let (a, b) = git_header_paths(rest);
            open = Some(FilePatch {
                old_path: a,
                new_path: b,
                hunks: Vec::new(),
                is_binary: false,
            });
            saw_minus = false;
            continue;
        }
        if line.starts_with("--- ") && matches!(cur.peek_line(), Some(l) if l.starts_with("+++ ")) {
            let starts_new = match &open {
                None => true,
                Some(p) => saw_minus || !p.hunks.is_empty(),
            };
            if starts_new {
                flush(&mut open, &mut patches);
                open = Some(FilePatch {
                    old_path: None,
                    new_path: None,
                    hunks: Vec::new(),
                    is_binary: false,
                });
            }
            let p = open.as_mut().expect("patch opened above");
            p.old_path = parse_path(&line[4..], "a/");
            let (_, plus) = cur.next_line().expect("peeked");
            p.new_path = parse_path(&plus[4..], "b/");
            saw_minus = true;
            continue;
        }
        let Some(p) = open.as_mut() else {
            if line.starts_with("@@ ") {
                return Err(MalformedDiff {
                    offset,
                    reason: "hunk outside of a file section".into(),
                });
            }
            continue;
        };
        if line.starts_with("@@ ") {
            let (old_start, old_len, new_start, new_len) =
                parse_hunk_header(line).ok_or_else(|| MalformedDiff {
                    offset,
                    reason: format!("bad hunk header {line:?}"),
                })?;
            let hunk = parse_hunk_body(&mut cur, old_start, old_len, new_start, new_len)?;
            if let Some(prev) = p.hunks.last() {
                if hunk.old_start < prev.old_start + prev.old_len {
                    return Err(MalformedDiff {
                        offset,
                        reason: "overlapping or unsorted hunks".into(),
                    });
                }
            }
            p.hunks.push(hunk);
        } else if line.starts_with("new file mode") {
            p.old_path = None;
        } else if line.starts_with("deleted file mode") {
            p.new_path = None;
        } else if let Some(rest) = line.strip_prefix("rename from ") {
            p.old_path = Some(rest.to_string());
        } else if let Some(rest) = line.strip_prefix("rename to ") {
            p.new_path = Some(rest.to_string());
        } else if line.starts_with("Binary files ") || line == "GIT binary patch" {
            p.is_binary = true;
        }
    }
    flush(&mut open, &mut patches);
    Ok(patches)
}

fn parse_hunk_body(
    cur: &mut Cursor<'_>,
    old_start: usize,
    old_len: usize,
    new_start: usize,
    new_len: usize,
) -> Result<Hunk, MalformedDiff> {
    let mut old_no = if old_len == 0 { old_start + 1 } else { old_start };
    let mut new_no = if new_len == 0 { new_start + 1 } else { new_start };
    let (mut old_left, mut new_left) = (old_len, new_len);
    let mut lines = Vec::new();
    while old_left > 0 || new_left > 0 {
        let Some((offset, line)) = cur.next_line() else {
            return Err(MalformedDiff {
                offset: cur.pos,
                reason: "unexpected end of hunk".into(),
            });
        };
        let (tag, body) = match line.chars().next() {
            Some(c) => (c, &line[c.len_utf8()..]),
            // Some tools strip the single space of empty context lines.
            None => (' ', ""),
        };
        match tag {
            ' ' if old_left > 0 && new_left > 0 => {
                lines.push(HunkLine::Context {
                    old_no,
                    new_no,
                    text: body.to_string(),
                });
                old_no += 1;
                new_no += 1;
                old_left -= 1;
                new_left -= 1;
            }
            '-' if old_left > 0 => {
                lines.push(HunkLine::Changed(ChangedLine {
                    kind: LineKind::Deleted,
                    old_no: Some(old_no),
                    new_no: None,
                    text: body.to_string(),
                }));
                old_no += 1;
                old_left -= 1;
            }
            '+' if new_left > 0 => {
                lines.push(HunkLine::Changed(ChangedLine {
                    kind: LineKind::Added,
                    old_no: None,
                    new_no: Some(new_no),
                    text: body.to_string(),
                }));
                new_no += 1;
                new_left -= 1;
            }
            '\\' => {}
            _ => {
                return Err(MalformedDiff {
                    offset,
                    reason: format!("line does not fit hunk counts: {line:?}"),
                })
            }
        }
    }
    // A trailing "\ No newline at end of file" belongs to this hunk.
    while matches!(cur.peek_line(), Some(l) if l.starts_with('\\')) {
        cur.next_line();
    }
    Ok(Hunk {
        old_start,
        old_len,
        new_start,
        new_len,
        lines,
    })
}
