//! Optional TOML run configuration. Each table mirrors one subcommand's
//! flags; a flag given on the command line wins over the file.

use std::collections::BTreeSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::args::{CrossvalArgs, EvalArgs, GenArgs, PipelineArgs, ReportArgs, StatsArgs, TrainArgs, VocabArgs};
use crate::UsageError;

#[derive(Debug, Default)]
pub struct FileConfig {
    pub gen: Option<GenArgs>,
    pub pipeline: Option<PipelineArgs>,
    pub vocab: Option<VocabArgs>,
    pub stats: Option<StatsArgs>,
    pub train: Option<TrainArgs>,
    pub eval: Option<EvalArgs>,
    pub crossval: Option<CrossvalArgs>,
    pub report: Option<ReportArgs>,
}

fn section<T>(path: &Path, name: &str, value: toml::Value) -> Result<T, UsageError>
where
    T: Serialize + DeserializeOwned + Default,
{
    let err = |msg: String| UsageError(format!("config {} [{name}]: {msg}", path.display()));
    let known: BTreeSet<String> = match serde_json::to_value(T::default()) {
        Ok(Value::Object(map)) => map.keys().cloned().collect(),
        _ => BTreeSet::new(),
    };
    let table = value.as_table().ok_or_else(|| err("expected a table".into()))?;
    if let Some(key) = table.keys().find(|k| !known.contains(*k)) {
        return Err(err(format!("unknown key `{key}`")));
    }
    value.try_into().map_err(|e: toml::de::Error| err(e.to_string()))
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let err = |msg: String| UsageError(format!("config {}: {msg}", path.display()));
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let table: toml::Table = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
        let mut config = FileConfig::default();
        for (name, value) in table {
            match name.as_str() {
                "gen" => config.gen = Some(section(path, &name, value)?),
                "pipeline" => config.pipeline = Some(section(path, &name, value)?),
                "vocab" => config.vocab = Some(section(path, &name, value)?),
                "stats" => config.stats = Some(section(path, &name, value)?),
                "train" => config.train = Some(section(path, &name, value)?),
                "eval" => config.eval = Some(section(path, &name, value)?),
                "crossval" => config.crossval = Some(section(path, &name, value)?),
                "report" => config.report = Some(section(path, &name, value)?),
                other => return Err(err(format!("unknown table [{other}]"))),
            }
        }
        Ok(config)
    }
}

/// Fields set on the command line replace the file's. Unset options are
/// `null`, unset switches `false` and unset lists empty, so none of them
/// override the file.
pub fn overlay<T>(flags: T, file: Option<T>) -> Result<T, UsageError>
where
    T: Serialize + DeserializeOwned,
{
    let Some(file) = file else { return Ok(flags) };
    let to_value = |v: &T| serde_json::to_value(v).map_err(|e| UsageError(e.to_string()));
    let mut merged = to_value(&file)?;
    if let (Value::Object(base), Value::Object(top)) = (&mut merged, to_value(&flags)?) {
        for (key, value) in top {
            let unset = match &value {
                Value::Null | Value::Bool(false) => true,
                Value::Array(items) => items.is_empty(),
                _ => false,
            };
            if !unset {
                base.insert(key, value);
            }
        }
    }
    serde_json::from_value(merged).map_err(|e| UsageError(e.to_string()))
}
