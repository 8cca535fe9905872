use std::io::Write;
use std::path::{Path, PathBuf};

use super::{cache_key, ChatBackend, ChatRequest, ChatResponse, GatewayError};

/// Wraps a backend with a one-file-per-entry response cache keyed by
/// [`cache_key`]. Unreadable or corrupt entries count as misses.
pub struct CachedBackend {
    inner: Box<dyn ChatBackend>,
    dir: PathBuf,
}

impl CachedBackend {
    pub fn new(inner: Box<dyn ChatBackend>, dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)
            .map_err(|e| GatewayError::Config(format!("cache dir {}: {e}", dir.display())))?;
        Ok(Self { inner, dir })
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn lookup(&self, key: &str) -> Option<ChatResponse> {
        let bytes = std::fs::read(self.entry_path(key)).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {key}: {e}");
                None
            }
        }
    }

    fn store(&self, key: &str, response: &ChatResponse) -> std::io::Result<()> {
        let path = self.entry_path(key);
        if path.exists() {
            return Ok(());
        }
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(&serde_json::to_vec(response)?)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }
}

impl ChatBackend for CachedBackend {
    fn id(&self) -> String {
        format!("cached-{}", self.inner.id())
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let key = cache_key(request);
        if let Some(hit) = self.lookup(&key) {
            return Ok(hit);
        }
        let response = self.inner.complete(request)?;
        if let Err(e) = self.store(&key, &response) {
            log::warn!("could not write cache entry {key}: {e}");
        }
        Ok(response)
    }

    fn order_sensitive(&self) -> bool {
        self.inner.order_sensitive()
    }

    fn save_state(&self) -> Option<serde_json::Value> {
        self.inner.save_state()
    }

    fn restore_state(&self, state: &serde_json::Value) -> Result<(), GatewayError> {
        self.inner.restore_state(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheStats {
    pub entries: u64,
    pub bytes: u64,
}

impl std::fmt::Display for CacheStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} entries, {} bytes", self.entries, self.bytes)
    }
}

fn is_entry(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

/// Entry count and total size. A missing directory is an empty cache.
pub fn cache_stats(dir: &Path) -> std::io::Result<CacheStats> {
    let mut stats = CacheStats {
        entries: 0,
        bytes: 0,
    };
    let read = match std::fs::read_dir(dir) {
        Ok(r) => r,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(stats),
        Err(e) => return Err(e),
    };
    for entry in read {
        let entry = entry?;
        if is_entry(&entry.path()) && entry.file_type()?.is_file() {
            stats.entries += 1;
            stats.bytes += entry.metadata()?.len();
        }
    }
    Ok(stats)
}

/// Removes every entry. The directory is swapped out by rename first so
/// readers never observe a partially cleared cache.
pub fn cache_clear(dir: &Path) -> std::io::Result<CacheStats> {
    let before = cache_stats(dir)?;
    if !dir.exists() {
        return Ok(before);
    }
    let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let trash = tempfile::Builder::new().prefix(".cache-trash-").tempdir_in(parent)?;
    let staged = trash.path().join("old");
    std::fs::rename(dir, &staged)?;
    std::fs::create_dir_all(dir)?;
    trash.close()?;
    Ok(before)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Message, Part, ScriptedBackend};

    fn ask(text: &str) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            temperature: 0.3,
            messages: vec![Message::user(vec![Part::Text(text.into())])],
        }
    }

    #[test]
    fn second_identical_call_is_a_hit() {
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("c");
        let b = CachedBackend::new(
            Box::new(ScriptedBackend::from_responses(["first"])),
            &cache,
        )
        .unwrap();
        assert_eq!(b.complete(&ask("q")).unwrap().text, "first");
        // Script is exhausted, so this can only come from the cache.
        assert_eq!(b.complete(&ask("q")).unwrap().text, "first");
        assert!(b.complete(&ask("other")).is_err());
        let stats = cache_stats(&cache).unwrap();
        assert_eq!(stats.entries, 1);
        assert!(stats.bytes > 0);
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let b = CachedBackend::new(
            Box::new(ScriptedBackend::from_responses(["fresh"])),
            dir.path(),
        )
        .unwrap();
        let key = cache_key(&ask("q"));
        std::fs::write(dir.path().join(format!("{key}.json")), b"{garbage").unwrap();
        assert_eq!(b.complete(&ask("q")).unwrap().text, "fresh");
    }

    #[test]
    fn stats_and_clear() {
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache");
        assert_eq!(cache_stats(&cache).unwrap().to_string(), "0 entries, 0 bytes");
        std::fs::create_dir_all(&cache).unwrap();
        std::fs::write(cache.join("a.json"), b"{}").unwrap();
        assert_eq!(cache_stats(&cache).unwrap().entries, 1);
        cache_clear(&cache).unwrap();
        assert_eq!(cache_stats(&cache).unwrap(), CacheStats { entries: 0, bytes: 0 });
        assert!(cache.is_dir());
    }
}
