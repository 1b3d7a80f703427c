//! Data model for the textual IR subset the analyses run on.
//!
//! Only control flow and call sites are represented structurally; every
//! other instruction is carried as opaque text. Values, types, and
//! constants (except switch case keys) are never interpreted.

mod parse;
mod print;

pub use parse::{parse_module, ParseError};
pub use print::print_module;

use std::fmt;

use serde::{Deserialize, Serialize};

/// A basic-block label, stored without the `%` sigil.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub String);

impl Label {
    pub fn new(s: impl Into<String>) -> Self {
        Label(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label(s.to_string())
    }
}

/// A parsed translation unit: defined functions plus external declarations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrModule {
    pub source_name: String,
    pub functions: Vec<IrFunction>,
    pub declared_externals: Vec<String>,
}

impl IrModule {
    pub fn find_function(&self, name: &str) -> Option<&IrFunction> {
        self.functions.iter().find(|f| f.name == name)
    }
}

/// One defined function: parameters and basic blocks in layout order.
///
/// The first block in layout order is the entry block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrFunction {
    pub name: String,
    pub params: Vec<Param>,
    pub blocks: Vec<BasicBlock>,
}

impl IrFunction {
    /// Label of the entry block (first in layout order).
    pub fn entry(&self) -> &Label {
        &self.blocks[0].label
    }

    pub fn find_block(&self, label: &Label) -> Option<&BasicBlock> {
        self.blocks.iter().find(|b| &b.label == label)
    }
}

/// Function parameter: name without the `%` sigil plus an opaque type tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: String,
}

/// A labeled block: non-terminator body instructions and exactly one terminator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub label: Label,
    pub body: Vec<Instruction>,
    pub terminator: Terminator,
}

/// A non-terminator instruction. `raw_text` reproduces the source line
/// (modulo surrounding whitespace); `kind` classifies it, and only
/// [`InstKind::Call`] carries structure the analyses consume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub kind: InstKind,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstKind {
    Call { callee: String, arg_count: usize },
    Assign,
    Store,
    Load,
    Other,
}

impl Instruction {
    /// Classifies one source line. Both the parser and every code path that
    /// synthesizes instructions go through here, so printed output reparses
    /// to the identical value.
    pub fn parse(line: &str) -> Instruction {
        let text = line.trim().to_string();
        let kind = classify(&text);
        Instruction {
            kind,
            raw_text: text,
        }
    }

    /// Builds a call instruction `call @<callee>(<args>)`.
    pub fn call(callee: &str, args: &[String]) -> Instruction {
        Instruction::parse(&format!("call @{}({})", callee, args.join(", ")))
    }

    pub fn callee(&self) -> Option<&str> {
        match &self.kind {
            InstKind::Call { callee, .. } => Some(callee),
            _ => None,
        }
    }
}

fn classify(text: &str) -> InstKind {
    if let Some(call) = parse_call(text) {
        return call;
    }
    let first = text.split_whitespace().next().unwrap_or("");
    if first == "store" {
        InstKind::Store
    } else if first == "load" || text.contains("= load ") || text.ends_with("= load") {
        InstKind::Load
    } else if text.contains(" = ") {
        InstKind::Assign
    } else {
        InstKind::Other
    }
}

/// Recognizes `call @f(...)` and assignment/tail-call forms like
/// `%r = tail call i32 @f(...)`.
fn parse_call(text: &str) -> Option<InstKind> {
    let mut rest = text;
    if let Some(eq) = text.find(" = ") {
        rest = &text[eq + 3..];
    }
    let call_pos = rest
        .split_whitespace()
        .position(|tok| tok == "call" || tok == "call,")?;
    // Only accept `call` in leading position (allowing `tail`/`musttail` prefixes).
    if call_pos > 2 {
        return None;
    }
    let after = rest.splitn(call_pos + 2, char::is_whitespace).last()?;
    let at = after.find('@')?;
    let open = after[at..].find('(')? + at;
    let callee = after[at + 1..open].trim().trim_matches('"').to_string();
    if callee.is_empty() {
        return None;
    }
    let args = matched_parens(&after[open..])?;
    let arg_count = if args.trim().is_empty() {
        0
    } else {
        split_top_level_commas(args).len()
    };
    Some(InstKind::Call { callee, arg_count })
}

/// Returns the text inside the parenthesized group starting at `s[0] == '('`.
pub(crate) fn matched_parens(s: &str) -> Option<&str> {
    let mut depth = 0usize;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&s[1..i]);
                }
            }
            _ => {}
        }
    }
    None
}

pub(crate) fn split_top_level_commas(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' | '{' | '<' => depth += 1,
            ')' | ']' | '}' | '>' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

/// Block terminator. Condition, scrutinee, and address operands are opaque.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminator {
    Ret,
    Unreachable,
    Br {
        target: Label,
    },
    CondBr {
        cond: String,
        then_target: Label,
        else_target: Label,
    },
    Switch {
        scrutinee: String,
        default_target: Label,
        cases: Vec<(i64, Label)>,
    },
    IndirectBr {
        address: String,
        possible_targets: Vec<Label>,
    },
}

impl Terminator {
    /// Branch targets in the order they appear in the terminator,
    /// duplicates included.
    pub fn targets(&self) -> Vec<&Label> {
        match self {
            Terminator::Ret | Terminator::Unreachable => Vec::new(),
            Terminator::Br { target } => vec![target],
            Terminator::CondBr {
                then_target,
                else_target,
                ..
            } => vec![then_target, else_target],
            Terminator::Switch {
                default_target,
                cases,
                ..
            } => {
                let mut t = vec![default_target];
                t.extend(cases.iter().map(|(_, l)| l));
                t
            }
            Terminator::IndirectBr {
                possible_targets, ..
            } => possible_targets.iter().collect(),
        }
    }

    /// True for the multi-way dispatch shapes (`switch`, `indirectbr`).
    pub fn is_multiway(&self) -> bool {
        matches!(
            self,
            Terminator::Switch { .. } | Terminator::IndirectBr { .. }
        )
    }
}
