//! Content-addressed field cache. Each entry is `<key>.kgl` (the binary field
//! followed by a JSON metadata block) plus a `<key>.kgl.sha256` sidecar.
//! Writes go through a temporary file and an atomic rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use kgl_core::cache::{decode, encode, CachedField};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub struct FieldCache {
    dir: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Key of a computation from a serializable description of its inputs.
pub fn key_of<T: Serialize>(inputs: &T) -> Result<String, CliError> {
    Ok(sha256_hex(&serde_json::to_vec(inputs)?))
}

impl FieldCache {
    pub fn open(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.kgl"))
    }

    fn sidecar(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".sha256");
        PathBuf::from(s)
    }

    pub fn load<M: DeserializeOwned>(&self, key: &str) -> Result<Option<(CachedField, M)>, CliError> {
        let path = self.entry_path(key);
        let Ok(bytes) = fs::read(&path) else {
            return Ok(None);
        };
        let Ok(expected) = fs::read_to_string(Self::sidecar(&path)) else {
            return Ok(None);
        };
        let expected = expected.trim().to_owned();
        let found = sha256_hex(&bytes);
        if found != expected {
            return Err(CliError::CacheCorrupt { path, expected, found });
        }
        if bytes.len() < 8 {
            return Err(CliError::CacheCorrupt { path, expected, found });
        }
        let split = bytes.len() - 8;
        let field_len = u64::from_le_bytes(bytes[split..].try_into().expect("8 bytes")) as usize;
        if field_len > split {
            return Err(CliError::CacheCorrupt { path, expected, found });
        }
        let field = decode(&bytes[..field_len])?;
        let meta = serde_json::from_slice(&bytes[field_len..split])?;
        Ok(Some((field, meta)))
    }

    pub fn store<M: Serialize>(&self, key: &str, field: &CachedField, meta: &M) -> Result<(), CliError> {
        let mut bytes = encode(field);
        let field_len = bytes.len() as u64;
        bytes.extend_from_slice(&serde_json::to_vec(meta)?);
        bytes.extend_from_slice(&field_len.to_le_bytes());
        let path = self.entry_path(key);
        let digest = sha256_hex(&bytes);
        // sidecar first: a reader that sees the new field also sees its hash
        atomic_write(&Self::sidecar(&path), format!("{digest}\n").as_bytes())?;
        atomic_write(&path, &bytes)
    }
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let unique = COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = dir.join(format!(".{name}.{}.{unique}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
