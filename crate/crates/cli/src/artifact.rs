//! Atomic artifact writes and stage manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Writes `bytes` to a sibling temp file and renames it over `path`, so a
/// failed stage never leaves a truncated artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn jsonl_bytes<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    kgrex_core::jsonl::write_jsonl(&mut buf, items)?;
    Ok(buf)
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(MANIFEST_SUFFIX);
    PathBuf::from(s)
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to tell whether a stage output is reproducible:
/// what went in, with which settings, and what came out. No timestamps.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub stage: &'static str,
    pub tool: &'static str,
    pub version: &'static str,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// One stage's output: the artifact plus its manifest, both written atomically.
pub struct Stage {
    name: &'static str,
    inputs: Vec<FileDigest>,
    config: serde_json::Value,
}

impl Stage {
    pub fn new(name: &'static str, config: impl Serialize) -> Result<Self> {
        Ok(Self {
            name,
            inputs: Vec::new(),
            config: serde_json::to_value(config)?,
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(self)
    }

    pub fn inputs<'a>(&mut self, paths: impl IntoIterator<Item = &'a Path>) -> Result<&mut Self> {
        for p in paths {
            self.input(p)?;
        }
        Ok(self)
    }

    pub fn finish(self, output: &Path, bytes: &[u8]) -> Result<()> {
        let manifest = Manifest {
            stage: self.name,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config: self.config,
            inputs: self.inputs,
            outputs: vec![FileDigest {
                path: output.display().to_string(),
                sha256: sha256_hex(bytes),
            }],
        };
        let mut m = serde_json::to_vec_pretty(&manifest)?;
        m.push(b'\n');
        write_atomic(output, bytes)?;
        if let Err(e) = write_atomic(&manifest_path(output), &m) {
            let _ = fs::remove_file(output);
            return Err(e);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn atomic_write_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, "abc").unwrap();
        let out = dir.path().join("sub/out.jsonl");
        let mut st = Stage::new("test", serde_json::json!({"k": 1})).unwrap();
        st.input(&input).unwrap();
        st.finish(&out, b"x\n").unwrap();
        assert_eq!(fs::read(&out).unwrap(), b"x\n");
        let m: serde_json::Value =
            serde_json::from_slice(&fs::read(manifest_path(&out)).unwrap()).unwrap();
        assert_eq!(m["stage"], "test");
        assert_eq!(m["inputs"][0]["sha256"], sha256_hex(b"abc"));
        assert!(m.get("timestamp").is_none());
        let leftovers = fs::read_dir(dir.path().join("sub")).unwrap().count();
        assert_eq!(leftovers, 2);
    }
}
