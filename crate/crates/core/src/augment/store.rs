//! Where synthesized clips live: a content-addressed WAV directory or memory.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use super::translate::sha256_hex;
use crate::audio::{AudioClip, ClipSource, ClipStatus, FileClips, MemoryClips};
use crate::error::{Error, Result};

pub trait AudioStore: ClipSource {
    fn contains(&self, sample_id: &str) -> bool;

    /// Stores `clip` and returns the reference to record in the manifest.
    fn put(&self, sample_id: &str, clip: &AudioClip) -> Result<String>;

    fn audio_ref(&self, sample_id: &str) -> String;
}

/// One WAV per sample under `root/<hh>/<sha256(id)>.wav`.
#[derive(Debug, Clone)]
pub struct DirectoryStore {
    root: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl DirectoryStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, sample_id: &str) -> PathBuf {
        let h = sha256_hex(sample_id.as_bytes());
        self.root.join(&h[..2]).join(format!("{h}.wav"))
    }
}

impl ClipSource for DirectoryStore {
    fn probe(&self, _sample_id: &str, audio_ref: &str) -> ClipStatus {
        FileClips::default().probe("", audio_ref)
    }

    fn load(&self, sample_id: &str, _audio_ref: &str) -> Result<AudioClip> {
        AudioClip::read_wav(&self.path_for(sample_id))
    }
}

impl AudioStore for DirectoryStore {
    fn contains(&self, sample_id: &str) -> bool {
        self.path_for(sample_id).is_file()
    }

    fn put(&self, sample_id: &str, clip: &AudioClip) -> Result<String> {
        let dest = self.path_for(sample_id);
        let dir = dest.parent().expect("sharded path has a parent");
        std::fs::create_dir_all(dir)?;
        // write-then-rename so concurrent writers never expose a partial file
        let tmp = dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        clip.write_wav(&tmp)?;
        std::fs::rename(&tmp, &dest)?;
        Ok(self.audio_ref(sample_id))
    }

    fn audio_ref(&self, sample_id: &str) -> String {
        self.path_for(sample_id).to_string_lossy().into_owned()
    }
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    clips: RwLock<MemoryClips>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_clips(self) -> MemoryClips {
        self.clips.into_inner().expect("store lock")
    }

    pub fn len(&self) -> usize {
        self.clips.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ClipSource for MemoryStore {
    fn probe(&self, sample_id: &str, audio_ref: &str) -> ClipStatus {
        self.clips.read().expect("store lock").probe(sample_id, audio_ref)
    }

    fn load(&self, sample_id: &str, audio_ref: &str) -> Result<AudioClip> {
        self.clips.read().expect("store lock").load(sample_id, audio_ref)
    }
}

impl AudioStore for MemoryStore {
    fn contains(&self, sample_id: &str) -> bool {
        self.clips.read().expect("store lock").get(sample_id).is_some()
    }

    fn put(&self, sample_id: &str, clip: &AudioClip) -> Result<String> {
        if clip.is_empty() {
            return Err(Error::InvalidAudio(format!("empty clip for `{sample_id}`")));
        }
        self.clips
            .write()
            .expect("store lock")
            .insert(sample_id, clip.clone());
        Ok(self.audio_ref(sample_id))
    }

    fn audio_ref(&self, sample_id: &str) -> String {
        format!("mem://{sample_id}")
    }
}
