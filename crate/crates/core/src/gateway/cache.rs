//! Append-only JSONL replay cache.
//!
//! Request digests are SHA-256 over a canonical JSON document whose keys are
//! written in a fixed order:
//!
//! ```text
//! {"version":1,"kind":"chat","model_id":..,"system":..,"user":..,
//!  "temperature":"0","schema":..,"template_overrides":..}
//! {"version":1,"kind":"embedding","model_id":..,"text":..}
//! ```
//!
//! Message strings are hashed byte for byte. The template-override field is
//! the hash of any template override files, or "" when none are in use.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::parse::ModelReply;
use crate::error::{Error, Result};
use crate::prompts::AnswerSchema;

pub const DIGEST_VERSION: u32 = 1;

#[derive(Serialize)]
struct ChatKey<'a> {
    version: u32,
    kind: &'static str,
    model_id: &'a str,
    system: &'a str,
    user: &'a str,
    temperature: &'static str,
    schema: &'static str,
    template_overrides: &'a str,
}

#[derive(Serialize)]
struct EmbedKey<'a> {
    version: u32,
    kind: &'static str,
    model_id: &'a str,
    text: &'a str,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a chat request. Temperature is fixed at 0 and enters as the string "0".
pub fn chat_digest(model_id: &str, system: &str, user: &str, schema: AnswerSchema, template_overrides: &str) -> String {
    let key = ChatKey {
        version: DIGEST_VERSION,
        kind: "chat",
        model_id,
        system,
        user,
        temperature: "0",
        schema: schema.tag(),
        template_overrides,
    };
    sha256_hex(&serde_json::to_vec(&key).expect("serializable key"))
}

pub fn embedding_digest(model_id: &str, text: &str) -> String {
    let key = EmbedKey {
        version: DIGEST_VERSION,
        kind: "embedding",
        model_id,
        text,
    };
    sha256_hex(&serde_json::to_vec(&key).expect("serializable key"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePayload {
    Reply(ModelReply),
    Embedding(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request_digest: String,
    #[serde(flatten)]
    pub payload: CachePayload,
    pub created_at: String,
    pub provider_tag: String,
}

/// Reads are served from memory; appends go through a single writer lock.
#[derive(Debug)]
pub struct ReplayCache {
    path: PathBuf,
    provider_tag: String,
    entries: RwLock<HashMap<String, CachePayload>>,
    writer: Mutex<Option<File>>,
}

impl ReplayCache {
    /// Opens `<cache_dir>/<provider_tag>.jsonl`. A missing file is an empty
    /// cache; unreadable lines are skipped with a warning.
    pub fn open(cache_dir: &Path, provider_tag: &str) -> Result<Self> {
        if provider_tag.is_empty() || provider_tag.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid provider tag '{provider_tag}'")));
        }
        let path = cache_dir.join(format!("{provider_tag}.jsonl"));
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(entry) => {
                        entries.entry(entry.request_digest).or_insert(entry.payload);
                    }
                    Err(e) => log::warn!("{}: skipping corrupt cache line {}: {e}", path.display(), i + 1),
                }
            }
        }
        Ok(ReplayCache {
            path,
            provider_tag: provider_tag.to_string(),
            entries: RwLock::new(entries),
            writer: Mutex::new(None),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, digest: &str) -> Option<CachePayload> {
        self.entries.read().expect("cache lock").get(digest).cloned()
    }

    /// Appends an entry unless the digest is already cached.
    pub fn insert(&self, digest: &str, payload: CachePayload) -> Result<()> {
        let mut writer = self.writer.lock().expect("cache writer lock");
        if self.entries.read().expect("cache lock").contains_key(digest) {
            return Ok(());
        }
        if writer.is_none() {
            if let Some(dir) = self.path.parent() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(|e| Error::io(&self.path, e))?;
            *writer = Some(f);
        }
        let entry = CacheEntry {
            request_digest: digest.to_string(),
            payload: payload.clone(),
            created_at: chrono::Utc::now().to_rfc3339(),
            provider_tag: self.provider_tag.clone(),
        };
        let mut line = serde_json::to_string(&entry).expect("serializable entry");
        line.push('\n');
        let f = writer.as_mut().expect("opened above");
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| Error::io(&self.path, e))?;
        self.entries
            .write()
            .expect("cache lock")
            .insert(digest.to_string(), payload);
        Ok(())
    }
}
