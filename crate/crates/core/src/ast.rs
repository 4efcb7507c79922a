//! Syntax tree types.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lexer::Span;

/// Closed set of node kinds. `ErrorAst` is the only kind that wraps regions
/// the grammar could not accept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AstKind {
    ScriptRoot,
    PipelineAst,
    CommandAst,
    CmdletAst,
    CommandParameterAst,
    ArgumentAst,
    CommandExpressionAst,
    ExpressionAst,
    MethodInvocationAst,
    MethodNameAst,
    TypeNameAst,
    StringLiteralAst,
    VariableAst,
    AssignmentAst,
    ScriptBlockAst,
    IfAst,
    LoopAst,
    FunctionDefinitionAst,
    OperatorAst,
    ErrorAst,
}

impl AstKind {
    pub const ALL: [AstKind; 20] = [
        AstKind::ScriptRoot,
        AstKind::PipelineAst,
        AstKind::CommandAst,
        AstKind::CmdletAst,
        AstKind::CommandParameterAst,
        AstKind::ArgumentAst,
        AstKind::CommandExpressionAst,
        AstKind::ExpressionAst,
        AstKind::MethodInvocationAst,
        AstKind::MethodNameAst,
        AstKind::TypeNameAst,
        AstKind::StringLiteralAst,
        AstKind::VariableAst,
        AstKind::AssignmentAst,
        AstKind::ScriptBlockAst,
        AstKind::IfAst,
        AstKind::LoopAst,
        AstKind::FunctionDefinitionAst,
        AstKind::OperatorAst,
        AstKind::ErrorAst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AstKind::ScriptRoot => "ScriptRoot",
            AstKind::PipelineAst => "PipelineAst",
            AstKind::CommandAst => "CommandAst",
            AstKind::CmdletAst => "CmdletAst",
            AstKind::CommandParameterAst => "CommandParameterAst",
            AstKind::ArgumentAst => "ArgumentAst",
            AstKind::CommandExpressionAst => "CommandExpressionAst",
            AstKind::ExpressionAst => "ExpressionAst",
            AstKind::MethodInvocationAst => "MethodInvocationAst",
            AstKind::MethodNameAst => "MethodNameAst",
            AstKind::TypeNameAst => "TypeNameAst",
            AstKind::StringLiteralAst => "StringLiteralAst",
            AstKind::VariableAst => "VariableAst",
            AstKind::AssignmentAst => "AssignmentAst",
            AstKind::ScriptBlockAst => "ScriptBlockAst",
            AstKind::IfAst => "IfAst",
            AstKind::LoopAst => "LoopAst",
            AstKind::FunctionDefinitionAst => "FunctionDefinitionAst",
            AstKind::OperatorAst => "OperatorAst",
            AstKind::ErrorAst => "ErrorAst",
        }
    }
}

impl fmt::Display for AstKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown AST kind {0:?}")]
pub struct UnknownAstKind(pub String);

impl FromStr for AstKind {
    type Err = UnknownAstKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AstKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownAstKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub kind: AstKind,
    /// Exactly `source[span.start..span.end]`.
    pub text: String,
    pub span: Span,
    pub children: Vec<AstNode>,
}

impl AstNode {
    pub fn leaf(kind: AstKind, text: impl Into<String>, span: Span) -> Self {
        AstNode {
            kind,
            text: text.into(),
            span,
            children: Vec::new(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Pre-order walk with the depth of each node relative to `self` (0).
    pub fn walk(&self) -> PreOrder<'_> {
        PreOrder { stack: vec![(self, 0)] }
    }

    pub fn node_count(&self) -> usize {
        self.walk().count()
    }

    pub fn count_kind(&self, kind: AstKind) -> usize {
        self.walk().filter(|(n, _)| n.kind == kind).count()
    }

    /// Kinds in pre-order, including `self`.
    pub fn kinds(&self) -> Vec<AstKind> {
        self.walk().map(|(n, _)| n.kind).collect()
    }

    /// Indented rendering, one node per line, `|   ` per depth level.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (node, depth) in self.walk() {
            for _ in 0..depth {
                out.push_str("|   ");
            }
            let text = collapse_whitespace(&node.text);
            if node.kind == AstKind::ScriptRoot || text.is_empty() {
                let _ = writeln!(out, "{}", node.kind);
            } else {
                let _ = writeln!(out, "{}: {}", node.kind, text);
            }
        }
        out
    }
}

pub struct PreOrder<'a> {
    stack: Vec<(&'a AstNode, usize)>,
}

impl<'a> Iterator for PreOrder<'a> {
    type Item = (&'a AstNode, usize);

    fn next(&mut self) -> Option<Self::Item> {
        let (node, depth) = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev().map(|c| (c, depth + 1)));
        Some((node, depth))
    }
}

pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for kind in AstKind::ALL {
            assert_eq!(kind.name().parse::<AstKind>().unwrap(), kind);
        }
        assert!("CommandInvocationAst".parse::<AstKind>().is_err());
    }

    #[test]
    fn preorder_depths() {
        let leaf = |t: &str| AstNode::leaf(AstKind::ArgumentAst, t, Span::default());
        let tree = AstNode {
            kind: AstKind::CommandAst,
            text: "a b c".into(),
            span: Span::default(),
            children: vec![
                AstNode {
                    kind: AstKind::ArgumentAst,
                    text: "b".into(),
                    span: Span::default(),
                    children: vec![leaf("x")],
                },
                leaf("c"),
            ],
        };
        let seen: Vec<_> = tree.walk().map(|(n, d)| (n.text.as_str(), d)).collect();
        assert_eq!(seen, vec![("a b c", 0), ("b", 1), ("x", 2), ("c", 1)]);
        assert_eq!(tree.node_count(), 4);
    }
}
