//! AST-based token pipelines and recurrent classifiers for PowerShell
//! script triage.
//!
//! The flow is: [`synth`] or on-disk corpora → [`parser`] → [`pipeline`]
//! (linearized `(AST type, text)` pairs, JSONL) → [`tokenizer`] (capped
//! vocabulary, fixed-length id sequences) → [`nn`] (embedding + LSTM/BiLSTM
//! classifier) → [`eval`] (confusion metrics, stratified K-fold).

pub mod ast;
pub mod dataset;
pub mod eval;
pub mod lexer;
pub mod nn;
pub mod par;
pub mod parser;
pub mod pipeline;
pub mod rng;
pub mod script;
pub mod stats;
pub mod synth;
pub mod tokenizer;

pub use ast::{AstKind, AstNode};
pub use lexer::{lex, Lexeme, LexemeKind, Span};
pub use parser::{parse, parse_source};
pub use script::{Label, SourceScript};

/// Lowercase hex SHA-256.
pub(crate) fn digest_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
