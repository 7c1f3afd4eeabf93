use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatResponse, StepTag};
use crate::error::LlmError;

/// One recorded exchange. The request is kept for human review; only the
/// key is used for lookup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub key: String,
    pub tag: StepTag,
    pub system: String,
    pub user: String,
    pub response: ChatResponse,
}

impl CassetteEntry {
    pub fn new(req: &ChatRequest, resp: &ChatResponse) -> Self {
        CassetteEntry {
            key: req.cassette_key(),
            tag: req.tag,
            system: req.system.clone(),
            user: req.user.clone(),
            response: ChatResponse {
                from_cache: false,
                ..resp.clone()
            },
        }
    }
}

/// Directory of `<key>.json` files.
#[derive(Debug, Clone)]
pub struct CassetteStore {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl CassetteStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CassetteStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_of(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn load(&self, key: &str) -> Result<Option<CassetteEntry>, LlmError> {
        match fs::read(self.path_of(key)) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| LlmError::Io(std::io::Error::new(ErrorKind::InvalidData, e))),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes through a temporary file and a rename; concurrent writers of
    /// the same key leave one complete entry.
    pub fn save(&self, entry: &CassetteEntry) -> Result<(), LlmError> {
        fs::create_dir_all(&self.dir)?;
        let tmp = self.dir.join(format!(
            ".{}.{}.{}.tmp",
            entry.key,
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let mut f = fs::File::create(&tmp)?;
        let mut body = serde_json::to_vec_pretty(entry).expect("cassette entries serialize");
        body.push(b'\n');
        f.write_all(&body)?;
        f.sync_all()?;
        drop(f);
        fs::rename(&tmp, self.path_of(&entry.key))?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|d| {
                d.filter_map(Result::ok)
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
