//! Corpus ingestion, AST linearization and the JSONL record format.
//!
//! Each script becomes one [`PipelineRecord`]: its AST walked in pre-order
//! (root excluded) as `(AST type, text, depth)` pairs. On disk a record is
//! one JSON object per line:
//!
//! ```text
//! {"script_id":"m_0001.ps1","label":1,"pairs":[{"t":"PipelineAst","x":"IEX ...","d":0}, ...]}
//! ```

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ast::{collapse_whitespace, AstKind, AstNode};
use crate::par::{self, Execution};
use crate::parser::parse;
use crate::script::{Label, SourceScript};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("linearize expects a ScriptRoot, got {0}")]
    NotARoot(AstKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelinePair {
    #[serde(rename = "t")]
    pub ast_type: AstKind,
    /// Node text with runs of whitespace collapsed to one space.
    #[serde(rename = "x")]
    pub text: String,
    #[serde(rename = "d")]
    pub depth: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineRecord {
    pub script_id: String,
    pub label: Label,
    pub pairs: Vec<PipelinePair>,
}

impl PipelineRecord {
    /// A pair is a leaf when the following pair is not deeper.
    pub fn is_leaf(&self, index: usize) -> bool {
        match self.pairs.get(index + 1) {
            Some(next) => next.depth <= self.pairs[index].depth,
            None => true,
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &PipelinePair> {
        (0..self.pairs.len())
            .filter(|&i| self.is_leaf(i))
            .map(|i| &self.pairs[i])
    }
}

/// Pre-order linearization. Direct children of the root have depth 0.
pub fn linearize(root: &AstNode, script_id: &str, label: Label) -> Result<PipelineRecord, PipelineError> {
    if root.kind != AstKind::ScriptRoot {
        return Err(PipelineError::NotARoot(root.kind));
    }
    let pairs = root
        .walk()
        .skip(1)
        .map(|(node, depth)| PipelinePair {
            ast_type: node.kind,
            text: collapse_whitespace(&node.text),
            depth: (depth - 1) as u32,
        })
        .collect();
    Ok(PipelineRecord {
        script_id: script_id.to_string(),
        label,
        pairs,
    })
}

/// Parses and linearizes every labeled script. Unlabeled scripts are skipped.
pub fn build_records(scripts: &[SourceScript], exec: Execution) -> Vec<PipelineRecord> {
    par::filter_map(exec, scripts, |script| {
        let label = script.label?;
        let root = parse(script);
        Some(linearize(&root, &script.id, label).expect("parse always yields a root"))
    })
}

// ---- JSONL ----

pub fn write_jsonl_to<W: Write>(records: &[PipelineRecord], writer: W) -> io::Result<()> {
    let mut writer = BufWriter::new(writer);
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_jsonl(records: &[PipelineRecord], path: &Path) -> Result<(), PipelineError> {
    let io_err = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    write_jsonl_to(records, file).map_err(io_err)
}

/// Outcome of reading a JSONL file. Malformed lines are reported with their
/// 1-based line number; the remaining lines are still returned.
#[derive(Debug, Default)]
pub struct JsonlRead {
    pub records: Vec<PipelineRecord>,
    pub errors: Vec<PipelineError>,
}

impl JsonlRead {
    pub fn is_partial(&self) -> bool {
        !self.errors.is_empty()
    }

    /// All records, or the first line error.
    pub fn into_complete(self) -> Result<Vec<PipelineRecord>, PipelineError> {
        match self.errors.into_iter().next() {
            Some(err) => Err(err),
            None => Ok(self.records),
        }
    }
}

pub fn read_jsonl_from<R: BufRead>(reader: R) -> io::Result<JsonlRead> {
    let mut out = JsonlRead::default();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<PipelineRecord>(&line) {
            Ok(record) => out.records.push(record),
            Err(err) => out.errors.push(PipelineError::Record {
                line: index + 1,
                message: err.to_string(),
            }),
        }
    }
    Ok(out)
}

pub fn read_jsonl(path: &Path) -> Result<JsonlRead, PipelineError> {
    let io_err = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    read_jsonl_from(io::BufReader::new(file)).map_err(io_err)
}

// ---- manifests ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct ManifestRow {
    path: String,
    label: u8,
    #[serde(default)]
    family: String,
}

/// CSV manifest with header `path,label,family`. Relative paths resolve
/// against the manifest's directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let manifest_err = |message: String| PipelineError::Manifest {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| manifest_err(e.to_string()))?;
        let mut entries = Vec::new();
        for (row_index, row) in reader.deserialize::<ManifestRow>().enumerate() {
            let row = row.map_err(|e| manifest_err(e.to_string()))?;
            let label = Label::try_from(row.label).map_err(|e| manifest_err(format!("row {}: {e}", row_index + 2)))?;
            entries.push(ManifestEntry {
                path: PathBuf::from(row.path),
                label,
                family: Some(row.family).filter(|f| !f.is_empty()),
            });
        }
        Ok(CorpusManifest {
            root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let manifest_err = |message: String| PipelineError::Manifest {
            path: path.to_path_buf(),
            message,
        };
        let mut writer = csv::Writer::from_path(path).map_err(|e| manifest_err(e.to_string()))?;
        for entry in &self.entries {
            writer
                .serialize(ManifestRow {
                    path: entry.path.to_string_lossy().replace('\\', "/"),
                    label: entry.label.as_u8(),
                    family: entry.family.clone().unwrap_or_default(),
                })
                .map_err(|e| manifest_err(e.to_string()))?;
        }
        writer.flush().map_err(|e| manifest_err(e.to_string()))
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }
}

#[derive(Debug, Default)]
pub struct Ingested {
    pub scripts: Vec<SourceScript>,
    pub errors: Vec<PipelineError>,
}

/// Reads every manifest entry as bytes and decodes leniently. Unreadable
/// entries are collected as errors; the rest still load.
pub fn ingest_corpus(manifest: &CorpusManifest, exec: Execution) -> Ingested {
    let results = par::map(exec, &manifest.entries, |entry| {
        let path = manifest.resolve(entry);
        let metadata = fs::metadata(&path).map_err(|source| PipelineError::Io {
            path: path.clone(),
            source,
        })?;
        if !metadata.is_file() {
            return Err(PipelineError::Io {
                path: path.clone(),
                source: io::Error::other("not a regular file"),
            });
        }
        let bytes = fs::read(&path).map_err(|source| PipelineError::Io {
            path: path.clone(),
            source,
        })?;
        let id = entry.path.to_string_lossy().replace('\\', "/");
        let origin = entry
            .family
            .clone()
            .unwrap_or_else(|| path.to_string_lossy().into_owned());
        Ok(SourceScript::from_bytes(id, &bytes, Some(entry.label)).with_origin(origin))
    });
    let mut out = Ingested::default();
    for result in results {
        match result {
            Ok(script) => out.scripts.push(script),
            Err(err) => out.errors.push(err),
        }
    }
    out
}

/// Appends `secondary` to `primary`, skipping any script whose exact text was
/// already seen. First occurrence wins, including duplicates within
/// `primary` itself.
pub fn merge_corpora(primary: Vec<SourceScript>, secondary: Vec<SourceScript>) -> Vec<SourceScript> {
    let mut seen = HashSet::new();
    primary
        .into_iter()
        .chain(secondary)
        .filter(|script| seen.insert(crate::digest_hex(script.text.as_bytes())))
        .collect()
}
