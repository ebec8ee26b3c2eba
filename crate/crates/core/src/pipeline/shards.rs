//! Shard files: stable assignment by doc_id hash, sorted contents, atomic
//! writes and content hashing for resumability.

use std::collections::BTreeSet;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use xxhash_rust::xxh3::xxh3_64;

use super::{write_atomic, PipelineError};
use crate::model::{read_documents, Document};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REJECTED_FILE: &str = "rejected.jsonl";

pub fn shard_of(doc_id: &str, num_shards: usize) -> usize {
    (xxh3_64(doc_id.as_bytes()) % num_shards.max(1) as u64) as usize
}

pub fn num_shards(docs: usize, shard_size: usize) -> usize {
    docs.div_ceil(shard_size.max(1)).max(1)
}

pub fn shard_name(i: usize) -> String {
    format!("shard-{i:05}.jsonl")
}

fn is_shard(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with("shard-") && n.ends_with(".jsonl"))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> String {
    format!("{}: {e}", path.display())
}

/// Files in `dir` matching `keep`, sorted by name.
pub fn list_files(dir: &Path, keep: impl Fn(&Path) -> bool) -> Result<Vec<PathBuf>, String> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if path.is_file() && keep(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn shard_files(dir: &Path) -> Result<Vec<PathBuf>, String> {
    list_files(dir, is_shard)
}

/// Document files of a directory: its shards when it has any, otherwise
/// every top-level `.jsonl` file.
pub fn document_files(dir: &Path) -> Result<Vec<PathBuf>, String> {
    let shards = shard_files(dir)?;
    if !shards.is_empty() {
        return Ok(shards);
    }
    list_files(dir, |p| p.extension().is_some_and(|e| e == "jsonl") && !p.ends_with(REJECTED_FILE))
}

/// Reads every document of `files`, rejecting duplicate ids.
pub fn read_files(files: &[PathBuf]) -> Result<Vec<Document>, String> {
    let mut docs = Vec::new();
    let mut seen = BTreeSet::new();
    for path in files {
        let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
        for d in read_documents(BufReader::new(f)).map_err(|e| io_err(path, e))? {
            if !seen.insert(d.doc_id.clone()) {
                return Err(format!("duplicate doc_id `{}` in {}", d.doc_id, path.display()));
            }
            docs.push(d);
        }
    }
    Ok(docs)
}

fn encode(docs: &[&Document]) -> Vec<u8> {
    let mut buf = Vec::new();
    for d in docs {
        buf.extend_from_slice(d.to_json_line().as_bytes());
        buf.push(b'\n');
    }
    buf
}

/// Replaces the shard set of `dir` with `docs`, split into
/// `ceil(len / shard_size)` shards by doc_id hash and sorted by doc_id.
pub fn write_shards(dir: &Path, docs: &[Document], shard_size: usize) -> Result<usize, PipelineError> {
    let fail = |e: String| PipelineError::Io(e);
    std::fs::create_dir_all(dir).map_err(|e| fail(io_err(dir, e)))?;
    for old in shard_files(dir).map_err(fail)? {
        std::fs::remove_file(&old).map_err(|e| fail(io_err(&old, e)))?;
    }
    let n = num_shards(docs.len(), shard_size);
    let mut shards: Vec<Vec<&Document>> = vec![Vec::new(); n];
    for d in docs {
        shards[shard_of(&d.doc_id, n)].push(d);
    }
    for (i, mut shard) in shards.into_iter().enumerate() {
        shard.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        let path = dir.join(shard_name(i));
        write_atomic(&path, &encode(&shard)).map_err(|e| fail(io_err(&path, e)))?;
    }
    Ok(n)
}

/// Writes `docs` sorted by doc_id to one file.
pub fn write_sorted(path: &Path, docs: &[Document]) -> Result<(), PipelineError> {
    let mut refs: Vec<&Document> = docs.iter().collect();
    refs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    write_atomic(path, &encode(&refs)).map_err(|e| PipelineError::Io(io_err(path, e)))
}

/// SHA-256 over the names and contents of `files`.
pub fn hash_files(files: &[PathBuf]) -> Result<String, String> {
    let mut h = Sha256::new();
    for f in files {
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let bytes = std::fs::read(f).map_err(|e| io_err(f, e))?;
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

/// Every file under `dir`, recursively, sorted by path.
pub fn walk(dir: &Path) -> Result<Vec<PathBuf>, String> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        if entry.file_type().is_file() {
            out.push(entry.into_path());
        }
    }
    out.sort();
    Ok(out)
}

/// Like [`hash_files`] but keyed by paths relative to `root`.
pub fn hash_tree(root: &Path) -> Result<String, String> {
    let mut h = Sha256::new();
    for f in walk(root)? {
        let rel = f.strip_prefix(root).unwrap_or(&f).to_string_lossy().into_owned();
        let bytes = std::fs::read(&f).map_err(|e| io_err(&f, e))?;
        h.update((rel.len() as u64).to_le_bytes());
        h.update(rel.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}
