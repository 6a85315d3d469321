#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Copies the two-novel mock corpus and its config into `dir`.
pub fn stage_mock_corpus(dir: &Path) -> PathBuf {
    let src = fixture_dir().join("mock_corpus");
    for name in ["corpus.toml", "pipeline.toml", "callirhoe.txt", "hysmine.txt"] {
        std::fs::copy(src.join(name), dir.join(name)).unwrap();
    }
    dir.join("pipeline.toml")
}

pub fn motifs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motifs")).args(args).env("RUST_LOG", "error").output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Every file under `root`, keyed by its path relative to `root`.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
