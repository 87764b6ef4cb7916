//! Run manifests: ordered `key=value` text recording parameters, input
//! hashes and outputs. A pipeline manifest doubles as its config file.

use std::fmt::Display;
use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub struct Manifest {
    lines: Vec<(String, String)>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self { lines: Vec::new() };
        m.set("version", env!("CARGO_PKG_VERSION"));
        m.set("command", command);
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.lines.push((key.to_owned(), value.to_string()));
    }

    pub fn set_opt(&mut self, key: &str, value: Option<impl Display>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    /// Records an input path under `key` and its hash under `sha256.<key>`.
    pub fn input(&mut self, key: &str, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        self.set(key, path.display());
        self.set(&format!("sha256.{key}"), hash);
        Ok(())
    }

    pub fn output(&mut self, key: &str, path: &Path) {
        self.set(&format!("output.{key}"), path.display());
    }

    pub fn to_text(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        depthfuse::io::write_atomic(path, self.to_text().as_bytes())
            .with_context(|| format!("writing {}", path.display()))
    }
}

/// Warns when a recorded input hash no longer matches the file.
pub fn check_recorded_hash(recorded: Option<&str>, key: &str, path: &Path) -> Result<()> {
    if let Some(expected) = recorded {
        let actual = sha256_file(path)?;
        if actual != expected {
            eprintln!("warning: {key} {} changed since the manifest was written", path.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_and_text() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let mut m = Manifest::new("edges");
        m.input("image", &p).unwrap();
        m.set_opt("radius", None::<usize>);
        m.set("mode", 'i');
        let text = m.to_text();
        assert!(text.starts_with(&format!("version={}\ncommand=edges\nimage=", env!("CARGO_PKG_VERSION"))));
        assert!(text.contains("sha256.image=ba7816bf"));
        assert!(text.ends_with("mode=i\n"));
        assert!(!text.contains("radius"));
    }
}
