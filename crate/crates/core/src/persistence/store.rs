//! Schemaless document collections.
//!
//! [`JsonlStore`] keeps one JSON-lines file per collection (`<dir>/<name>.jsonl`),
//! mirrored in memory. Writes to a collection are serialized and fsynced before
//! they become visible; reads see a consistent snapshot.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("store unavailable: {0}")]
    Unavailable(String),
    #[error("corrupt collection {collection} at line {line}: {message}")]
    Corrupt {
        collection: String,
        line: usize,
        message: String,
    },
    #[error("invalid document: {0}")]
    InvalidDocument(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Unavailable(e.to_string())
    }
}

/// Document store operations. Filters are JSON objects matched by equality on
/// top-level fields; `{}` matches everything. Each call is atomic.
pub trait DocumentStore: Send + Sync {
    fn insert(&self, collection: &str, doc: Value) -> Result<(), StoreError>;

    /// Inserts `doc` unless a document with the same value at `key` exists.
    /// Returns whether the document was inserted.
    fn insert_unique(&self, collection: &str, key: &str, doc: Value) -> Result<bool, StoreError>;

    /// Matching documents in insertion order.
    fn find(&self, collection: &str, filter: &Value) -> Result<Vec<Value>, StoreError>;

    fn count(&self, collection: &str, filter: &Value) -> Result<usize, StoreError> {
        Ok(self.find(collection, filter)?.len())
    }

    /// Merges `patch` into the first matching document. Returns whether one matched.
    fn update_one(
        &self,
        collection: &str,
        filter: &Value,
        patch: Map<String, Value>,
    ) -> Result<bool, StoreError>;
}

pub fn matches(doc: &Value, filter: &Value) -> bool {
    match filter.as_object() {
        None => true,
        Some(f) => f.iter().all(|(k, v)| doc.get(k) == Some(v)),
    }
}

type Collection = Arc<RwLock<Vec<Value>>>;

pub struct JsonlStore {
    dir: Option<PathBuf>,
    collections: Mutex<HashMap<String, Collection>>,
}

impl std::fmt::Debug for JsonlStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonlStore")
            .field("dir", &self.dir)
            .finish()
    }
}

fn valid_name(name: &str) -> Result<(), StoreError> {
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        return Err(StoreError::InvalidDocument(format!(
            "bad collection name {name:?}"
        )));
    }
    Ok(())
}

impl JsonlStore {
    /// Opens (creating if needed) a file-backed store rooted at `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(JsonlStore {
            dir: Some(dir),
            collections: Mutex::new(HashMap::new()),
        })
    }

    /// A store that never touches disk.
    pub fn in_memory() -> Self {
        JsonlStore {
            dir: None,
            collections: Mutex::new(HashMap::new()),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn collection_path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{name}.jsonl")))
    }

    fn collection(&self, name: &str) -> Result<Collection, StoreError> {
        valid_name(name)?;
        let mut map = self.collections.lock();
        if let Some(c) = map.get(name) {
            return Ok(c.clone());
        }
        let docs = match self.collection_path(name) {
            Some(path) => load(&path, name)?,
            None => Vec::new(),
        };
        let c = Arc::new(RwLock::new(docs));
        map.insert(name.to_string(), c.clone());
        Ok(c)
    }

    fn append(&self, name: &str, doc: &Value) -> Result<(), StoreError> {
        if let Some(path) = self.collection_path(name) {
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            let line = serde_json::to_string(doc)
                .map_err(|e| StoreError::InvalidDocument(e.to_string()))?;
            writeln!(file, "{line}")?;
            file.sync_all()?;
        }
        Ok(())
    }

    fn rewrite(&self, name: &str, docs: &[Value]) -> Result<(), StoreError> {
        if let Some(path) = self.collection_path(name) {
            let tmp = path.with_extension("jsonl.tmp");
            {
                let mut file = File::create(&tmp)?;
                for doc in docs {
                    let line = serde_json::to_string(doc)
                        .map_err(|e| StoreError::InvalidDocument(e.to_string()))?;
                    writeln!(file, "{line}")?;
                }
                file.sync_all()?;
            }
            fs::rename(&tmp, &path)?;
        }
        Ok(())
    }
}

fn load(path: &Path, name: &str) -> Result<Vec<Value>, StoreError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            collection: name.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

fn require_object(doc: &Value) -> Result<(), StoreError> {
    if doc.is_object() {
        Ok(())
    } else {
        Err(StoreError::InvalidDocument(
            "documents must be JSON objects".into(),
        ))
    }
}

impl DocumentStore for JsonlStore {
    fn insert(&self, collection: &str, doc: Value) -> Result<(), StoreError> {
        require_object(&doc)?;
        let c = self.collection(collection)?;
        let mut docs = c.write();
        self.append(collection, &doc)?;
        docs.push(doc);
        Ok(())
    }

    fn insert_unique(&self, collection: &str, key: &str, doc: Value) -> Result<bool, StoreError> {
        require_object(&doc)?;
        let value = doc
            .get(key)
            .cloned()
            .ok_or_else(|| StoreError::InvalidDocument(format!("missing key field {key:?}")))?;
        let c = self.collection(collection)?;
        let mut docs = c.write();
        if docs.iter().any(|d| d.get(key) == Some(&value)) {
            return Ok(false);
        }
        self.append(collection, &doc)?;
        docs.push(doc);
        Ok(true)
    }

    fn find(&self, collection: &str, filter: &Value) -> Result<Vec<Value>, StoreError> {
        let c = self.collection(collection)?;
        let docs = c.read();
        Ok(docs
            .iter()
            .filter(|d| matches(d, filter))
            .cloned()
            .collect())
    }

    fn count(&self, collection: &str, filter: &Value) -> Result<usize, StoreError> {
        let c = self.collection(collection)?;
        let docs = c.read();
        Ok(docs.iter().filter(|d| matches(d, filter)).count())
    }

    fn update_one(
        &self,
        collection: &str,
        filter: &Value,
        patch: Map<String, Value>,
    ) -> Result<bool, StoreError> {
        let c = self.collection(collection)?;
        let mut docs = c.write();
        let Some(pos) = docs.iter().position(|d| matches(d, filter)) else {
            return Ok(false);
        };
        let mut updated = docs.clone();
        if let Some(obj) = updated[pos].as_object_mut() {
            obj.extend(patch);
        }
        self.rewrite(collection, &updated)?;
        *docs = updated;
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn insert_find_count() {
        let s = JsonlStore::in_memory();
        s.insert("users", json!({"username": "a", "n": 1})).unwrap();
        s.insert("users", json!({"username": "b", "n": 1})).unwrap();
        assert_eq!(s.count("users", &json!({})).unwrap(), 2);
        assert_eq!(s.count("users", &json!({"username": "a"})).unwrap(), 1);
        assert_eq!(
            s.find("users", &json!({"n": 1})).unwrap()[1]["username"],
            "b"
        );
        assert!(s.insert("users", json!([1])).is_err());
        assert!(s.insert("../etc", json!({})).is_err());
    }

    #[test]
    fn unique_insert() {
        let s = JsonlStore::in_memory();
        assert!(s
            .insert_unique("users", "username", json!({"username": "a"}))
            .unwrap());
        assert!(!s
            .insert_unique("users", "username", json!({"username": "a", "x": 2}))
            .unwrap());
        assert_eq!(s.count("users", &json!({})).unwrap(), 1);
    }

    #[test]
    fn file_backed_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        {
            let s = JsonlStore::open(dir.path()).unwrap();
            s.insert("history", json!({"id": "1", "v": 1})).unwrap();
            s.insert("history", json!({"id": "2", "v": 2})).unwrap();
            assert!(s
                .update_one(
                    "history",
                    &json!({"id": "1"}),
                    json!({"v": 10}).as_object().unwrap().clone()
                )
                .unwrap());
        }
        let text = fs::read_to_string(dir.path().join("history.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 2);
        let s = JsonlStore::open(dir.path()).unwrap();
        let docs = s.find("history", &json!({})).unwrap();
        assert_eq!(docs[0]["v"], 10);
        assert_eq!(docs[1]["v"], 2);
    }

    #[test]
    fn corrupt_line_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("users.jsonl"), "{\"a\":1}\nnot json\n").unwrap();
        let s = JsonlStore::open(dir.path()).unwrap();
        assert!(matches!(
            s.find("users", &json!({})),
            Err(StoreError::Corrupt { line: 2, .. })
        ));
    }
}
