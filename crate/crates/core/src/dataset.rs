//! Glue from scripts or pipeline records to encoded training examples.

use serde::{Deserialize, Serialize};

use crate::nn::Example;
use crate::par::{self, Execution};
use crate::parser::parse;
use crate::pipeline::{linearize, PipelineRecord};
use crate::script::{Label, SourceScript};
use crate::tokenizer::{encode_tokens, raw_tokens, record_tokens, Stoplist, TokenizerError, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    /// Composite `asttype:word` tokens from leaf pairs.
    #[default]
    Ast,
    /// Whitespace-separated words of the raw source.
    Raw,
}

impl std::str::FromStr for TokenMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ast" => Ok(TokenMode::Ast),
            "raw" => Ok(TokenMode::Raw),
            other => Err(format!("unknown token mode {other:?} (expected ast or raw)")),
        }
    }
}

/// A labeled token stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub label: Label,
    pub tokens: Vec<String>,
}

pub fn documents_from_records(records: &[PipelineRecord], exec: Execution) -> Vec<Document> {
    par::map(exec, records, |r| Document {
        id: r.script_id.clone(),
        label: r.label,
        tokens: record_tokens(r),
    })
}

/// Unlabeled scripts are skipped.
pub fn documents_from_scripts(scripts: &[SourceScript], mode: TokenMode, exec: Execution) -> Vec<Document> {
    par::filter_map(exec, scripts, |s| {
        let label = s.label?;
        let tokens = match mode {
            TokenMode::Raw => raw_tokens(&s.text),
            TokenMode::Ast => {
                let record = linearize(&parse(s), &s.id, label).ok()?;
                record_tokens(&record)
            }
        };
        Some(Document {
            id: s.id.clone(),
            label,
            tokens,
        })
    })
}

/// Vocabulary over `docs[i]` for `i` in `subset` (all documents when `None`).
pub fn build_vocab_on(
    docs: &[Document],
    subset: Option<&[usize]>,
    cap: usize,
    stoplist: &Stoplist,
) -> Result<Vocabulary, TokenizerError> {
    match subset {
        Some(ids) => Vocabulary::build(ids.iter().map(|&i| docs[i].tokens.as_slice()), cap, stoplist),
        None => Vocabulary::build(docs.iter().map(|d| d.tokens.as_slice()), cap, stoplist),
    }
}

pub fn encode_documents(docs: &[Document], vocab: &Vocabulary, max_len: usize, exec: Execution) -> Vec<Example> {
    par::map(exec, docs, |d| Example {
        id: d.id.clone(),
        seq: encode_tokens(&d.tokens, vocab, max_len),
        label: d.label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::OOV_ID;

    #[test]
    fn ast_and_raw_documents() {
        let scripts = vec![
            SourceScript::labeled("a", "IEX $x", Label::Malicious),
            SourceScript::new("unlabeled", "Get-Date"),
        ];
        let ast = documents_from_scripts(&scripts, TokenMode::Ast, Execution::Sequential);
        assert_eq!(ast.len(), 1);
        assert_eq!(ast[0].tokens, vec!["cmdletast:iex", "variableast:$x"]);
        let raw = documents_from_scripts(&scripts, TokenMode::Raw, Execution::Sequential);
        assert_eq!(raw[0].tokens, vec!["iex", "$x"]);
        let vocab = build_vocab_on(&raw, Some(&[0]), 10, &Stoplist::empty()).unwrap();
        let ex = encode_documents(&raw, &vocab, 4, Execution::Sequential);
        assert_eq!(ex[0].seq.true_len, 2);
        assert!(ex[0].seq.ids[..2].iter().all(|&id| id != OOV_ID));
        assert_eq!("RAW".parse::<TokenMode>().unwrap(), TokenMode::Raw);
    }
}
