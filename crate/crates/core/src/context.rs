//! Scene descriptions for the text branch and their persistent cache.
//!
//! A [`ContextBackend`] turns a [`ContextRequest`] into text. The repository
//! ships a synthetic-template backend (delegating to
//! [`crate::synth::describe_scene`]), a fixture backend that replays recorded
//! descriptions, and an adapter for external multimodal language models: to
//! wire a real model, implement [`MllmBackend`] (image bytes + prompt in,
//! text out) and wrap it in [`ExternalMllmBackend`].
//!
//! Cache files hold one record per line:
//! `sample_id  provider_tag  text`, tab-separated, with the escaping rules of
//! [`crate::data::manifest`] so texts may contain newlines and tabs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::data::manifest::{escape_field, parse_text, record_lines};
use crate::error::{Error, Result};
use crate::synth::{describe_scene, SyntheticScene};

pub const DEFAULT_PROMPT: &str = "Describe how the persons are interacting in the scene.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextRequest {
    pub sample_id: String,
    pub image: PathBuf,
    pub prompt: String,
}

impl ContextRequest {
    pub fn new(sample_id: impl Into<String>, image: impl Into<PathBuf>) -> Self {
        ContextRequest {
            sample_id: sample_id.into(),
            image: image.into(),
            prompt: DEFAULT_PROMPT.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProviderTag {
    SyntheticTemplate,
    ExternalMllm,
    Cache,
}

impl ProviderTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderTag::SyntheticTemplate => "synthetic-template",
            ProviderTag::ExternalMllm => "external-mllm",
            ProviderTag::Cache => "cache",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "synthetic-template" => Some(ProviderTag::SyntheticTemplate),
            "external-mllm" => Some(ProviderTag::ExternalMllm),
            "cache" => Some(ProviderTag::Cache),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub sample_id: String,
    pub text: String,
    pub provider_tag: ProviderTag,
}

/// Produces a description for one request.
pub trait ContextBackend: Send + Sync {
    fn tag(&self) -> ProviderTag;
    fn describe(&self, request: &ContextRequest) -> std::result::Result<String, String>;
}

/// Describes synthetic scenes by sample id.
#[derive(Debug, Default)]
pub struct SyntheticTemplateBackend {
    scenes: BTreeMap<String, SyntheticScene>,
}

impl SyntheticTemplateBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sample_id: impl Into<String>, scene: SyntheticScene) {
        self.scenes.insert(sample_id.into(), scene);
    }
}

impl ContextBackend for SyntheticTemplateBackend {
    fn tag(&self) -> ProviderTag {
        ProviderTag::SyntheticTemplate
    }

    fn describe(&self, request: &ContextRequest) -> std::result::Result<String, String> {
        self.scenes
            .get(&request.sample_id)
            .map(describe_scene)
            .ok_or_else(|| "no synthetic scene registered for this sample".to_string())
    }
}

/// Replays recorded descriptions, e.g. outputs captured from a real model.
#[derive(Debug, Default)]
pub struct FixtureBackend {
    texts: BTreeMap<String, String>,
}

impl FixtureBackend {
    pub fn new(texts: BTreeMap<String, String>) -> Self {
        FixtureBackend { texts }
    }

    /// Loads a fixture in the cache file format (the provider tag is ignored).
    pub fn load(path: &Path) -> Result<Self> {
        let records = parse_cache_records(&std::fs::read_to_string(path)?)?;
        Ok(FixtureBackend {
            texts: records.into_iter().map(|r| (r.sample_id, r.text)).collect(),
        })
    }
}

impl ContextBackend for FixtureBackend {
    fn tag(&self) -> ProviderTag {
        ProviderTag::ExternalMllm
    }

    fn describe(&self, request: &ContextRequest) -> std::result::Result<String, String> {
        self.texts
            .get(&request.sample_id)
            .cloned()
            .ok_or_else(|| "no recorded description".to_string())
    }
}

/// Contract for a multimodal language model: encoded image bytes and a
/// prompt in, a free-form description out.
pub trait MllmBackend: Send + Sync {
    fn generate(&self, image: &[u8], prompt: &str) -> std::result::Result<String, String>;
}

/// Adapts an [`MllmBackend`] by reading the request's image from disk.
pub struct ExternalMllmBackend<M> {
    model: M,
}

impl<M: MllmBackend> ExternalMllmBackend<M> {
    pub fn new(model: M) -> Self {
        ExternalMllmBackend { model }
    }
}

impl<M: MllmBackend> ContextBackend for ExternalMllmBackend<M> {
    fn tag(&self) -> ProviderTag {
        ProviderTag::ExternalMllm
    }

    fn describe(&self, request: &ContextRequest) -> std::result::Result<String, String> {
        let bytes = std::fs::read(&request.image)
            .map_err(|e| format!("reading {}: {e}", request.image.display()))?;
        self.model.generate(&bytes, &request.prompt)
    }
}

/// Context store keyed by sample id, optionally backed by an append-only file.
#[derive(Debug, Default)]
pub struct ContextCache {
    records: RwLock<BTreeMap<String, ContextRecord>>,
    file: Option<Mutex<PathBuf>>,
}

impl ContextCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a file-backed cache. A malformed existing file is
    /// an error; it is never silently regenerated.
    pub fn open(path: &Path) -> Result<Self> {
        let mut records = BTreeMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            for r in parse_cache_records(&text).map_err(|e| Error::CacheCorrupt(e.to_string()))? {
                records.insert(r.sample_id.clone(), r);
            }
        }
        Ok(ContextCache {
            records: RwLock::new(records),
            file: Some(Mutex::new(path.to_path_buf())),
        })
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, sample_id: &str) -> Option<ContextRecord> {
        self.records.read().expect("cache lock").get(sample_id).cloned()
    }

    pub fn records(&self) -> Vec<ContextRecord> {
        self.records.read().expect("cache lock").values().cloned().collect()
    }

    /// Inserts unless the id is already present; returns the stored record.
    fn insert_first(&self, record: ContextRecord) -> Result<ContextRecord> {
        let mut map = self.records.write().expect("cache lock");
        if let Some(existing) = map.get(&record.sample_id) {
            return Ok(existing.clone());
        }
        if let Some(file) = &self.file {
            let path = file.lock().expect("cache file lock");
            let mut f = OpenOptions::new().create(true).append(true).open(&*path)?;
            f.write_all(write_cache_records(std::slice::from_ref(&record)).as_bytes())?;
        }
        map.insert(record.sample_id.clone(), record.clone());
        Ok(record)
    }

    /// Writes every record, sorted by id, and returns the count.
    pub fn export(&self, path: &Path) -> Result<usize> {
        let records = self.records();
        std::fs::write(path, write_cache_records(&records))?;
        Ok(records.len())
    }

    /// Adds all records from `path`. Ids repeated within the file or already
    /// present in the cache are rejected before anything is inserted.
    pub fn import(&self, path: &Path) -> Result<usize> {
        let records = parse_cache_records(&std::fs::read_to_string(path)?)?;
        {
            let map = self.records.read().expect("cache lock");
            let mut seen = std::collections::BTreeSet::new();
            for r in &records {
                if !seen.insert(r.sample_id.as_str()) || map.contains_key(&r.sample_id) {
                    return Err(Error::DuplicateId(r.sample_id.clone()));
                }
            }
        }
        for r in &records {
            self.insert_first(r.clone())?;
        }
        Ok(records.len())
    }
}

/// Returns the cached description or generates, stores and returns a new one.
///
/// Concurrent first calls for one id may both reach the backend; the first
/// stored record wins and every caller receives its text.
pub fn get_context(
    request: &ContextRequest,
    backend: &dyn ContextBackend,
    cache: &ContextCache,
) -> Result<ContextRecord> {
    if request.prompt.is_empty() {
        return Err(Error::invalid("prompt", "prompt must be non-empty"));
    }
    if let Some(hit) = cache.get(&request.sample_id) {
        if hit.text.is_empty() {
            return Err(Error::CacheCorrupt(format!(
                "empty text stored for {:?}",
                request.sample_id
            )));
        }
        return Ok(ContextRecord {
            provider_tag: ProviderTag::Cache,
            ..hit
        });
    }
    let text = backend.describe(request).map_err(|message| Error::Backend {
        sample_id: request.sample_id.clone(),
        message,
    })?;
    if text.is_empty() {
        return Err(Error::Backend {
            sample_id: request.sample_id.clone(),
            message: "backend returned empty text".into(),
        });
    }
    cache.insert_first(ContextRecord {
        sample_id: request.sample_id.clone(),
        text,
        provider_tag: backend.tag(),
    })
}

pub fn write_cache_records(records: &[ContextRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            escape_field(&r.sample_id),
            r.provider_tag.as_str(),
            escape_field(&r.text)
        );
    }
    out
}

pub fn parse_cache_records(text: &str) -> Result<Vec<ContextRecord>> {
    let mut out = Vec::new();
    for (line, raw) in record_lines(text) {
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", f.len()),
            });
        }
        let provider_tag = ProviderTag::parse(f[1]).ok_or_else(|| Error::Parse {
            line,
            message: format!("unknown provider tag {:?}", f[1]),
        })?;
        let text = parse_text(line, "text", f[2])?;
        if text.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty context text".into(),
            });
        }
        out.push(ContextRecord {
            sample_id: parse_text(line, "sample_id", f[0])?,
            text,
            provider_tag,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GazeClass;
    use crate::synth::{sample_scene, SceneConfig};
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Echo {
        sentence: String,
        calls: AtomicUsize,
    }

    impl ContextBackend for Echo {
        fn tag(&self) -> ProviderTag {
            ProviderTag::ExternalMllm
        }
        fn describe(&self, _: &ContextRequest) -> std::result::Result<String, String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.sentence.clone())
        }
    }

    struct Failing;

    impl ContextBackend for Failing {
        fn tag(&self) -> ProviderTag {
            ProviderTag::ExternalMllm
        }
        fn describe(&self, _: &ContextRequest) -> std::result::Result<String, String> {
            Err("model offline".into())
        }
    }

    fn echo(s: &str) -> Echo {
        Echo {
            sentence: s.into(),
            calls: AtomicUsize::new(0),
        }
    }

    #[test]
    fn second_call_hits_cache() {
        let backend = echo("two people chat.");
        let cache = ContextCache::in_memory();
        let req = ContextRequest::new("s1", "s1.png");
        let first = get_context(&req, &backend, &cache).unwrap();
        assert_eq!(first.provider_tag, ProviderTag::ExternalMllm);
        assert_eq!(first.text, "two people chat.");
        for _ in 0..5 {
            let again = get_context(&req, &backend, &cache).unwrap();
            assert_eq!(again.provider_tag, ProviderTag::Cache);
            assert_eq!(again.text, first.text);
        }
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn synthetic_backend_delegates_to_describer() {
        let scene = sample_scene(5, &SceneConfig::single_class(GazeClass::Mutual)).unwrap();
        let mut backend = SyntheticTemplateBackend::new();
        backend.insert("m", scene.clone());
        let rec = get_context(&ContextRequest::new("m", "m.png"), &backend, &ContextCache::in_memory()).unwrap();
        assert_eq!(rec.text, describe_scene(&scene));
        assert_eq!(rec.provider_tag, ProviderTag::SyntheticTemplate);
    }

    #[test]
    fn backend_failure_names_sample() {
        let err = get_context(&ContextRequest::new("bad", "x.png"), &Failing, &ContextCache::in_memory())
            .unwrap_err();
        match err {
            Error::Backend { sample_id, .. } => assert_eq!(sample_id, "bad"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ContextCache::in_memory();
        let backend = echo("line one\nline\ttwo \\ done");
        for id in ["a", "b", "c"] {
            get_context(&ContextRequest::new(id, "x.png"), &backend, &cache).unwrap();
        }
        let path = dir.path().join("ctx.tsv");
        assert_eq!(cache.export(&path).unwrap(), 3);
        let fresh = ContextCache::in_memory();
        assert_eq!(fresh.import(&path).unwrap(), 3);
        assert_eq!(fresh.records(), cache.records());
        // Importing the same ids again is a duplicate.
        assert!(matches!(fresh.import(&path), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn import_rejects_repeated_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.tsv");
        std::fs::write(&path, "a\tcache\tx\nb\tcache\ty\na\tcache\tz\n").unwrap();
        match ContextCache::in_memory().import(&path).unwrap_err() {
            Error::DuplicateId(id) => assert_eq!(id, "a"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_export_is_importable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.tsv");
        assert_eq!(ContextCache::in_memory().export(&path).unwrap(), 0);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
        assert_eq!(ContextCache::in_memory().import(&path).unwrap(), 0);
    }

    #[test]
    fn file_backed_cache_persists_and_detects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.tsv");
        {
            let cache = ContextCache::open(&path).unwrap();
            get_context(&ContextRequest::new("k", "k.png"), &echo("hello"), &cache).unwrap();
        }
        let reopened = ContextCache::open(&path).unwrap();
        let backend = echo("different");
        let rec = get_context(&ContextRequest::new("k", "k.png"), &backend, &reopened).unwrap();
        assert_eq!(rec.text, "hello");
        assert_eq!(backend.calls.load(Ordering::SeqCst), 0);

        std::fs::write(&path, "k\tnot-a-tag\thello\n").unwrap();
        assert!(matches!(ContextCache::open(&path), Err(Error::CacheCorrupt(_))));
    }

    #[test]
    fn concurrent_calls_converge_to_one_record() {
        let cache = ContextCache::in_memory();
        let backend = echo("same");
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for id in ["x", "y", "z"] {
                        let r = get_context(&ContextRequest::new(id, "i.png"), &backend, &cache).unwrap();
                        assert_eq!(r.text, "same");
                    }
                });
            }
        });
        assert_eq!(cache.len(), 3);
    }

    proptest! {
        #[test]
        fn cache_records_round_trip_unicode(id in "\\PC{1,10}", text in "\\PC{1,60}") {
            let rec = ContextRecord { sample_id: id, text, provider_tag: ProviderTag::Cache };
            let back = parse_cache_records(&write_cache_records(std::slice::from_ref(&rec))).unwrap();
            prop_assert_eq!(back, vec![rec]);
        }
    }
}
