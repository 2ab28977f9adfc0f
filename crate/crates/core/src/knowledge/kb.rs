//! Local knowledge-base snapshot: one JSON record per query token,
//! `{"query": "...", "candidates": [{"name", "description", "attribute"}]}`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::embed::{stub_text_embed, CONTEXTUAL};

/// Candidates kept per lookup.
pub const MAX_CANDIDATES: usize = 4;
/// Default limit on candidates per raw snapshot record.
pub const DEFAULT_RAW_CAP: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbEntry {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub attribute: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbRecord {
    pub query: String,
    pub candidates: Vec<KbEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeCandidate {
    pub name: String,
    pub description: String,
    pub attribute: String,
    pub merged_text: String,
    pub embedding: Vec<f64>,
}

impl KnowledgeCandidate {
    /// Embeds description and attribute; the name stays out of the embedded
    /// text so a candidate cannot score by matching its own query.
    pub fn new(entry: &KbEntry, dim: usize) -> Result<Self> {
        if entry.name.trim().is_empty() {
            return Err(Error::contract("knowledge candidate without a name"));
        }
        let merged_text = format!("{} {}", entry.description.trim(), entry.attribute.trim())
            .trim()
            .to_string();
        Ok(Self {
            name: entry.name.clone(),
            description: entry.description.clone(),
            attribute: entry.attribute.clone(),
            embedding: stub_text_embed(&merged_text, dim, CONTEXTUAL),
            merged_text,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CandidateSet {
    pub query_token: String,
    pub candidates: Vec<KnowledgeCandidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Immutable query → raw candidates map.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KbSnapshot {
    entries: BTreeMap<String, Vec<KbEntry>>,
}

impl KbSnapshot {
    pub fn from_records(records: impl IntoIterator<Item = KbRecord>) -> Self {
        let mut entries: BTreeMap<String, Vec<KbEntry>> = BTreeMap::new();
        for r in records {
            entries
                .entry(r.query.trim().to_lowercase())
                .or_default()
                .extend(r.candidates);
        }
        Self { entries }
    }

    /// Reads a snapshot, rejecting invalid UTF-8, malformed records and
    /// records listing more than `raw_cap` candidates.
    pub fn load(path: &Path, raw_cap: usize) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in bytes.split(|&b| b == b'\n').enumerate() {
            let schema = |msg: String| Error::Schema {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let line = std::str::from_utf8(line).map_err(|e| schema(format!("invalid UTF-8: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: KbRecord = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
            if rec.query.trim().is_empty() {
                return Err(schema("empty query".into()));
            }
            if rec.candidates.len() > raw_cap {
                return Err(schema(format!(
                    "{} candidates exceed the raw cap of {raw_cap}",
                    rec.candidates.len()
                )));
            }
            if let Some(c) = rec.candidates.iter().find(|c| c.name.trim().is_empty()) {
                return Err(schema(format!("candidate without a name ({:?})", c.description)));
            }
            records.push(rec);
        }
        Ok(Self::from_records(records))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for (query, candidates) in &self.entries {
            let rec = KbRecord {
                query: query.clone(),
                candidates: candidates.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.push(b'\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn raw(&self, query: &str) -> &[KbEntry] {
        self.entries.get(query).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// First [`MAX_CANDIDATES`] candidates for `token` in snapshot order.
pub fn kb_lookup(token: &str, kb: &KbSnapshot, dim: usize) -> Result<CandidateSet> {
    let query = token.trim().to_lowercase();
    let candidates = kb
        .raw(&query)
        .iter()
        .take(MAX_CANDIDATES)
        .map(|e| KnowledgeCandidate::new(e, dim))
        .collect::<Result<_>>()?;
    Ok(CandidateSet {
        query_token: query,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::cosine;

    fn entry(name: &str, description: &str) -> KbEntry {
        KbEntry {
            name: name.into(),
            description: description.into(),
            attribute: String::new(),
        }
    }

    #[test]
    fn lookup_caps_and_misses() {
        let kb = KbSnapshot::from_records([KbRecord {
            query: "Commodore".into(),
            candidates: (0..10).map(|i| entry(&format!("c{i}"), "thing")).collect(),
        }]);
        let set = kb_lookup("COMMODORE", &kb, 16).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(set.candidates[3].name, "c3");
        assert!(kb_lookup("vertu", &kb, 16).unwrap().is_empty());
    }

    #[test]
    fn merged_text_excludes_name() {
        let c = KnowledgeCandidate::new(
            &KbEntry {
                name: "Commodore".into(),
                description: "computer company".into(),
                attribute: "founded 1954".into(),
            },
            64,
        )
        .unwrap();
        assert_eq!(c.merged_text, "computer company founded 1954");
        let direct = stub_text_embed("computer company founded 1954", 64, CONTEXTUAL);
        assert!((cosine(&c.embedding, &direct) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn load_enforces_raw_cap_and_utf8() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("kb.jsonl");
        let many: Vec<_> = (0..11).map(|i| entry(&format!("c{i}"), "")).collect();
        let line = serde_json::to_string(&KbRecord {
            query: "x".into(),
            candidates: many,
        })
        .unwrap();
        fs::write(&p, format!("{line}\n")).unwrap();
        assert!(matches!(KbSnapshot::load(&p, 10), Err(Error::Schema { line: 1, .. })));
        assert_eq!(KbSnapshot::load(&p, 11).unwrap().raw("x").len(), 11);

        fs::write(&p, b"{\"query\":\"a\",\"candidates\":[]}\n\xff\xfe\n").unwrap();
        assert!(matches!(KbSnapshot::load(&p, 10), Err(Error::Schema { line: 2, .. })));
    }

    #[test]
    fn save_load_round_trip() {
        let kb = KbSnapshot::from_records([
            KbRecord {
                query: "vertu".into(),
                candidates: vec![entry("Vertu", "phone maker")],
            },
            KbRecord {
                query: "york".into(),
                candidates: vec![entry("New York", "city"), entry("York", "city in england")],
            },
        ]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("kb.jsonl");
        kb.save(&p).unwrap();
        assert_eq!(KbSnapshot::load(&p, DEFAULT_RAW_CAP).unwrap(), kb);
    }
}
