use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{LmBackend, LmError, LmRequest, LmResponse, TemplateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CassetteMode {
    Record,
    Replay,
    Passthrough,
}

impl FromStr for CassetteMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "record" => Ok(Self::Record),
            "replay" => Ok(Self::Replay),
            "passthrough" => Ok(Self::Passthrough),
            other => Err(format!("unknown backend mode `{other}`")),
        }
    }
}

/// One recorded exchange, stored as `<key>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub key: String,
    pub template_id: TemplateId,
    pub rendered: String,
    pub response: LmResponse,
}

/// A directory of recorded responses keyed by request hash.
#[derive(Debug, Clone)]
pub struct Cassette {
    dir: PathBuf,
}

impl Cassette {
    pub fn open(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<CassetteEntry>, LmError> {
        let path = self.path_for(key);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| LmError::Io(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(LmError::Io(format!("{}: {e}", path.display()))),
        }
    }

    pub fn put(&self, entry: &CassetteEntry) -> Result<(), LmError> {
        let io = |e: std::io::Error| LmError::Io(format!("{}: {e}", self.dir.display()));
        fs::create_dir_all(&self.dir).map_err(io)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        let json = serde_json::to_string_pretty(entry).expect("entry serializes");
        tmp.write_all(json.as_bytes()).map_err(io)?;
        tmp.write_all(b"\n").map_err(io)?;
        tmp.persist(self.path_for(&entry.key))
            .map_err(|e| io(e.error))?;
        Ok(())
    }

    /// All entries, sorted by key.
    pub fn entries(&self) -> Result<Vec<CassetteEntry>, LmError> {
        let mut keys = self.keys()?;
        keys.sort();
        keys.iter()
            .filter_map(|k| self.get(k).transpose())
            .collect()
    }

    pub fn keys(&self) -> Result<Vec<String>, LmError> {
        let read = match fs::read_dir(&self.dir) {
            Ok(r) => r,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(LmError::Io(e.to_string())),
        };
        let mut keys = Vec::new();
        for entry in read {
            let path = entry.map_err(|e| LmError::Io(e.to_string()))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    keys.push(stem.to_string());
                }
            }
        }
        keys.sort();
        Ok(keys)
    }

    pub fn remove(&self, key: &str) -> Result<(), LmError> {
        fs::remove_file(self.path_for(key)).map_err(|e| LmError::Io(e.to_string()))
    }
}

/// Wraps an optional live backend with a cassette.
///
/// - replay: answers only from the cassette; never touches `inner`
/// - record: calls `inner`, then persists the response
/// - passthrough: calls `inner` only
pub struct CassetteBackend {
    cassette: Cassette,
    mode: CassetteMode,
    inner: Option<Arc<dyn LmBackend>>,
    write_lock: Mutex<()>,
}

impl CassetteBackend {
    pub fn new(cassette: Cassette, mode: CassetteMode, inner: Option<Arc<dyn LmBackend>>) -> Result<Self, LmError> {
        if mode != CassetteMode::Replay && inner.is_none() {
            return Err(LmError::Config(format!(
                "{mode:?} mode needs a live backend"
            )));
        }
        Ok(Self {
            cassette,
            mode,
            inner,
            write_lock: Mutex::new(()),
        })
    }

    pub fn replay(cassette: Cassette) -> Self {
        Self::new(cassette, CassetteMode::Replay, None).expect("replay needs no backend")
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    fn live(&self) -> &dyn LmBackend {
        self.inner.as_deref().expect("checked in constructor")
    }
}

impl LmBackend for CassetteBackend {
    fn id(&self) -> String {
        match self.mode {
            CassetteMode::Replay => format!("replay:{}", self.cassette.dir().display()),
            CassetteMode::Record => format!("record:{}", self.live().id()),
            CassetteMode::Passthrough => self.live().id(),
        }
    }

    fn complete(&self, request: &LmRequest) -> Result<LmResponse, LmError> {
        let key = request.key();
        match self.mode {
            CassetteMode::Replay => self
                .cassette
                .get(&key)?
                .map(|e| e.response)
                .ok_or(LmError::CassetteMiss {
                    key,
                    template_id: request.template_id,
                }),
            CassetteMode::Passthrough => self.live().complete(request),
            CassetteMode::Record => {
                let response = self.live().complete(request)?;
                let _guard = self.write_lock.lock().expect("cassette write lock");
                self.cassette.put(&CassetteEntry {
                    key,
                    template_id: request.template_id,
                    rendered: request.rendered.clone(),
                    response: response.clone(),
                })?;
                Ok(response)
            }
        }
    }
}
