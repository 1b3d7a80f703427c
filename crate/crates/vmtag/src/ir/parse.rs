//! Line-oriented parser for the IR subset.
//!
//! The grammar covers function definitions with labeled blocks, external
//! declarations, calls, and the six terminators. Real `.ll` files are
//! accepted on a best-effort basis: unknown constructs outside function
//! bodies are skipped, unknown in-body lines become opaque instructions,
//! and parsing fails only when a terminator itself cannot be understood.

use std::collections::HashSet;

use thiserror::Error;

use super::{
    split_top_level_commas, BasicBlock, Instruction, IrFunction, IrModule, Label, Param, Terminator,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("function @{function}: branch to undefined label %{label}")]
    UnresolvedLabel { function: String, label: Label },
    #[error("function @{function}: duplicate label %{label}")]
    DuplicateLabel { function: String, label: Label },
    #[error("function @{function}, line {line}: indirectbr has no targets")]
    IndirectTargetsUnknown { function: String, line: usize },
}

fn syntax(line: usize, reason: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        reason: reason.into(),
    }
}

/// LLVM terminator opcodes the subset does not model. Hitting one is a
/// parse failure rather than an opaque instruction: a block ending in an
/// unknown terminator would corrupt every downstream CFG query.
const UNSUPPORTED_TERMINATORS: &[&str] = &[
    "invoke",
    "callbr",
    "resume",
    "catchswitch",
    "catchret",
    "cleanupret",
];

pub fn parse_module(src: &str) -> Result<IrModule, ParseError> {
    Parser::new(src).run()
}

struct Parser<'a> {
    lines: Vec<&'a str>,
    pos: usize,
    module: IrModule,
}

struct FunctionBuilder {
    name: String,
    params: Vec<Param>,
    blocks: Vec<BasicBlock>,
    current: Option<(Label, Vec<Instruction>)>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            lines: src.lines().collect(),
            pos: 0,
            module: IrModule {
                source_name: String::new(),
                functions: Vec::new(),
                declared_externals: Vec::new(),
            },
        }
    }

    fn run(mut self) -> Result<IrModule, ParseError> {
        while self.pos < self.lines.len() {
            let lineno = self.pos + 1;
            let line = self.lines[self.pos].trim();
            self.pos += 1;
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("source_filename") {
                if let Some(name) = rest.split('"').nth(1) {
                    self.module.source_name = name.to_string();
                }
            } else if line.starts_with("declare") {
                let name = extract_global_name(line)
                    .ok_or_else(|| syntax(lineno, "declare without a @name"))?;
                if !self.module.declared_externals.contains(&name) {
                    self.module.declared_externals.push(name);
                }
            } else if line.starts_with("define") {
                let func = self.parse_function(line, lineno)?;
                if self.module.functions.iter().any(|f| f.name == func.name) {
                    return Err(syntax(lineno, format!("duplicate function @{}", func.name)));
                }
                self.module.functions.push(func);
            }
            // Anything else at top level (globals, metadata, attributes,
            // target lines) is outside the subset and skipped.
        }
        for f in &self.module.functions {
            if self.module.declared_externals.contains(&f.name) {
                return Err(syntax(
                    0,
                    format!("@{} is both declared external and defined", f.name),
                ));
            }
        }
        Ok(self.module)
    }

    fn parse_function(
        &mut self,
        header: &str,
        header_line: usize,
    ) -> Result<IrFunction, ParseError> {
        let name = extract_global_name(header)
            .ok_or_else(|| syntax(header_line, "define without a @name"))?;
        if !header.trim_end().ends_with('{') {
            return Err(syntax(header_line, "expected '{' at end of define"));
        }
        let params = parse_params(header, header_line)?;
        let mut fb = FunctionBuilder {
            name,
            params,
            blocks: Vec::new(),
            current: None,
        };

        loop {
            if self.pos >= self.lines.len() {
                return Err(syntax(
                    header_line,
                    format!("function @{} not closed with '}}'", fb.name),
                ));
            }
            let lineno = self.pos + 1;
            let raw = self.lines[self.pos];
            self.pos += 1;
            let line = strip_label_comment(raw).trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            if line == "}" {
                if let Some((label, _)) = &fb.current {
                    return Err(syntax(
                        lineno,
                        format!("block %{} has no terminator", label),
                    ));
                }
                if fb.blocks.is_empty() {
                    return Err(syntax(
                        lineno,
                        format!("function @{} has no blocks", fb.name),
                    ));
                }
                break;
            }
            if let Some(label) = parse_label_line(line) {
                if let Some((open, _)) = &fb.current {
                    return Err(syntax(lineno, format!("block %{} has no terminator", open)));
                }
                fb.current = Some((label, Vec::new()));
                continue;
            }

            let body_line = raw.trim();
            let first = body_line.split_whitespace().next().unwrap_or("");
            if UNSUPPORTED_TERMINATORS.contains(&first) {
                return Err(syntax(lineno, format!("unsupported terminator '{first}'")));
            }
            if is_terminator_start(first) {
                let term = self.parse_terminator(body_line, lineno, &fb.name)?;
                fb.close_block(term, lineno)?;
            } else {
                fb.push_instruction(Instruction::parse(body_line), lineno)?;
            }
        }

        let func = IrFunction {
            name: fb.name,
            params: fb.params,
            blocks: fb.blocks,
        };
        validate_function(&func)?;
        Ok(func)
    }

    /// Parses one terminator. A `switch` whose case list spans several
    /// lines (the usual `.ll` layout) is joined up to the closing `]`.
    fn parse_terminator(
        &mut self,
        line: &str,
        lineno: usize,
        function: &str,
    ) -> Result<Terminator, ParseError> {
        let mut text = line.to_string();
        let first = line.split_whitespace().next().unwrap_or("");
        if (first == "switch" || first == "indirectbr") && !line.contains(']') {
            loop {
                if self.pos >= self.lines.len() {
                    return Err(syntax(lineno, "unterminated bracket list in terminator"));
                }
                let cont = self.lines[self.pos].trim();
                self.pos += 1;
                text.push(' ');
                text.push_str(cont);
                if cont.contains(']') {
                    break;
                }
            }
        }
        parse_terminator_text(&text, lineno, function)
    }
}

impl FunctionBuilder {
    fn push_instruction(&mut self, inst: Instruction, lineno: usize) -> Result<(), ParseError> {
        match &mut self.current {
            Some((_, body)) => body.push(inst),
            None => {
                if self.blocks.is_empty() {
                    // Entry block with omitted label.
                    self.current = Some((Label::new("entry"), vec![inst]));
                } else {
                    return Err(syntax(
                        lineno,
                        "instruction outside a block (missing label?)",
                    ));
                }
            }
        }
        Ok(())
    }

    fn close_block(&mut self, terminator: Terminator, lineno: usize) -> Result<(), ParseError> {
        let (label, body) = match self.current.take() {
            Some(open) => open,
            None => {
                if self.blocks.is_empty() {
                    (Label::new("entry"), Vec::new())
                } else {
                    return Err(syntax(
                        lineno,
                        "terminator outside a block (missing label?)",
                    ));
                }
            }
        };
        self.blocks.push(BasicBlock {
            label,
            body,
            terminator,
        });
        Ok(())
    }
}

fn validate_function(func: &IrFunction) -> Result<(), ParseError> {
    let mut labels = HashSet::new();
    for b in &func.blocks {
        if !labels.insert(b.label.clone()) {
            return Err(ParseError::DuplicateLabel {
                function: func.name.clone(),
                label: b.label.clone(),
            });
        }
    }
    for b in &func.blocks {
        for target in b.terminator.targets() {
            if !labels.contains(target) {
                return Err(ParseError::UnresolvedLabel {
                    function: func.name.clone(),
                    label: target.clone(),
                });
            }
        }
    }
    Ok(())
}

/// `@name` out of a `define`/`declare` header: the text between the first
/// `@` and the following `(` (or whitespace).
fn extract_global_name(line: &str) -> Option<String> {
    let at = line.find('@')?;
    let rest = &line[at + 1..];
    let end = rest
        .find(|c: char| c == '(' || c.is_whitespace())
        .unwrap_or(rest.len());
    let name = rest[..end].trim_matches('"');
    if name.is_empty() {
        None
    } else {
        Some(name.to_string())
    }
}

fn parse_params(header: &str, lineno: usize) -> Result<Vec<Param>, ParseError> {
    let open = header
        .find('(')
        .ok_or_else(|| syntax(lineno, "define without parameter list"))?;
    let inner = super::matched_parens(&header[open..])
        .ok_or_else(|| syntax(lineno, "unbalanced parameter list"))?;
    let mut params = Vec::new();
    if inner.trim().is_empty() {
        return Ok(params);
    }
    for chunk in split_top_level_commas(inner) {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        match chunk.rsplit_once('%') {
            Some((ty, name)) if !name.contains(char::is_whitespace) => params.push(Param {
                name: name.to_string(),
                ty: ty.trim().to_string(),
            }),
            _ => params.push(Param {
                name: String::new(),
                ty: chunk.to_string(),
            }),
        }
    }
    Ok(params)
}

/// Matches `<label>:`, tolerating the trailing `; preds = ...` comment
/// clang appends to label lines.
fn parse_label_line(line: &str) -> Option<Label> {
    let text = line.split(';').next().unwrap_or("").trim();
    let name = text.strip_suffix(':')?;
    if name.is_empty() || !name.chars().all(is_label_char) {
        return None;
    }
    Some(Label::new(name))
}

fn is_label_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$' | '-')
}

/// Strips a trailing comment from a label line only; body lines keep their
/// text intact so opaque instructions round-trip.
fn strip_label_comment(raw: &str) -> &str {
    let trimmed = raw.trim();
    match trimmed.split(';').next() {
        Some(head) if head.trim_end().ends_with(':') => head,
        _ => trimmed,
    }
}

fn is_terminator_start(first: &str) -> bool {
    matches!(
        first,
        "ret" | "br" | "switch" | "indirectbr" | "unreachable"
    )
}

fn parse_terminator_text(
    text: &str,
    lineno: usize,
    function: &str,
) -> Result<Terminator, ParseError> {
    let first = text.split_whitespace().next().unwrap_or("");
    match first {
        "ret" => Ok(Terminator::Ret),
        "unreachable" => Ok(Terminator::Unreachable),
        "br" => parse_br(text, lineno),
        "switch" => parse_switch(text, lineno),
        "indirectbr" => parse_indirectbr(text, lineno, function),
        _ => Err(syntax(lineno, format!("unrecognized terminator '{first}'"))),
    }
}

/// Extracts the label from a `label %<L>` occurrence starting at `pos`.
fn label_after(text: &str, pos: usize) -> Option<(Label, usize)> {
    let rest = &text[pos..];
    let pct = rest.find('%')?;
    let tail = &rest[pct + 1..];
    let end = tail.find(|c: char| !is_label_char(c)).unwrap_or(tail.len());
    if end == 0 {
        return None;
    }
    Some((Label::new(&tail[..end]), pos + pct + 1 + end))
}

fn parse_br(text: &str, lineno: usize) -> Result<Terminator, ParseError> {
    let body = text.trim_start_matches("br").trim_start();
    if let Some(rest) = body.strip_prefix("label") {
        let (target, _) =
            label_after(rest, 0).ok_or_else(|| syntax(lineno, "br without a %label target"))?;
        return Ok(Terminator::Br { target });
    }
    // Conditional form: `br <cond>, label %a, label %b`.
    let marker = ", label";
    let split = body
        .find(marker)
        .ok_or_else(|| syntax(lineno, "malformed br"))?;
    let cond = body[..split].trim().to_string();
    let rest = &body[split + marker.len()..];
    let (then_target, used) =
        label_after(rest, 0).ok_or_else(|| syntax(lineno, "br missing first target"))?;
    let rest2 = &rest[used..];
    let second = rest2
        .find("label")
        .ok_or_else(|| syntax(lineno, "br missing second target"))?;
    let (else_target, _) =
        label_after(rest2, second).ok_or_else(|| syntax(lineno, "br missing second target"))?;
    if cond.is_empty() {
        return Err(syntax(lineno, "br with empty condition"));
    }
    Ok(Terminator::CondBr {
        cond,
        then_target,
        else_target,
    })
}

fn parse_switch(text: &str, lineno: usize) -> Result<Terminator, ParseError> {
    let body = text.trim_start_matches("switch").trim();
    let marker = ", label";
    let split = body
        .find(marker)
        .ok_or_else(|| syntax(lineno, "switch without default target"))?;
    let scrutinee = body[..split].trim().to_string();
    let rest = &body[split + marker.len()..];
    let (default_target, used) =
        label_after(rest, 0).ok_or_else(|| syntax(lineno, "switch missing default target"))?;
    let rest = &rest[used..];
    let open = rest
        .find('[')
        .ok_or_else(|| syntax(lineno, "switch missing case list"))?;
    let close = rest
        .rfind(']')
        .ok_or_else(|| syntax(lineno, "switch missing ']'"))?;
    let mut cases = Vec::new();
    let mut seen = HashSet::new();
    let case_text = &rest[open + 1..close];
    let mut pos = 0usize;
    while let Some(off) = case_text[pos..].find("label") {
        let key_text = &case_text[pos..pos + off];
        let key = last_integer(key_text)
            .ok_or_else(|| syntax(lineno, "switch case without integer key"))?;
        let (target, used) = label_after(case_text, pos + off)
            .ok_or_else(|| syntax(lineno, "switch case without target"))?;
        if !seen.insert(key) {
            return Err(syntax(lineno, format!("duplicate switch case key {key}")));
        }
        cases.push((key, target));
        pos = used;
    }
    Ok(Terminator::Switch {
        scrutinee,
        default_target,
        cases,
    })
}

fn parse_indirectbr(text: &str, lineno: usize, function: &str) -> Result<Terminator, ParseError> {
    let body = text.trim_start_matches("indirectbr").trim();
    let open = body
        .find('[')
        .ok_or_else(|| syntax(lineno, "indirectbr missing target list"))?;
    let close = body
        .rfind(']')
        .ok_or_else(|| syntax(lineno, "indirectbr missing ']'"))?;
    let address = body[..open].trim().trim_end_matches(',').trim().to_string();
    if address.is_empty() {
        return Err(syntax(lineno, "indirectbr with empty address"));
    }
    let mut possible_targets = Vec::new();
    let list = &body[open + 1..close];
    let mut pos = 0usize;
    while let Some(off) = list[pos..].find("label") {
        let (target, used) = label_after(list, pos + off)
            .ok_or_else(|| syntax(lineno, "indirectbr target without %label"))?;
        possible_targets.push(target);
        pos = used;
    }
    if possible_targets.is_empty() {
        return Err(ParseError::IndirectTargetsUnknown {
            function: function.to_string(),
            line: lineno,
        });
    }
    Ok(Terminator::IndirectBr {
        address,
        possible_targets,
    })
}

/// Last integer token in a case-key fragment, so both `7,` and `i32 7,`
/// parse to 7.
fn last_integer(text: &str) -> Option<i64> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .filter_map(|t| t.parse::<i64>().ok())
        .next_back()
}

#[cfg(test)]
mod tests {
    use super::super::InstKind;
    use super::*;

    #[test]
    fn minimal_function() {
        let m = parse_module("define @f() {\n  ret\n}\n").unwrap();
        assert_eq!(m.functions.len(), 1);
        let f = &m.functions[0];
        assert_eq!(f.name, "f");
        assert_eq!(f.blocks.len(), 1);
        assert_eq!(f.blocks[0].label, Label::new("entry"));
        assert_eq!(f.blocks[0].terminator, Terminator::Ret);
    }

    #[test]
    fn switch_with_three_cases_field_by_field() {
        let src = "define @g() {\nL0:\n  %v = load i64, ptr %p\n  switch i64 %v, label %d [ 0, label %a 1, label %b 2, label %c ]\nd:\n  ret\na:\n  ret\nb:\n  ret\nc:\n  ret\n}\n";
        let m = parse_module(src).unwrap();
        let f = &m.functions[0];
        assert_eq!(f.blocks[0].label, Label::new("L0"));
        match &f.blocks[0].terminator {
            Terminator::Switch {
                scrutinee,
                default_target,
                cases,
            } => {
                assert_eq!(scrutinee, "i64 %v");
                assert_eq!(default_target, &Label::new("d"));
                assert_eq!(
                    cases,
                    &vec![
                        (0, Label::new("a")),
                        (1, Label::new("b")),
                        (2, Label::new("c"))
                    ]
                );
            }
            other => panic!("expected switch, got {other:?}"),
        }
    }

    #[test]
    fn branch_to_undefined_label() {
        let err = parse_module("define @f() {\n  br label %bogus\n}\n").unwrap_err();
        assert_eq!(
            err,
            ParseError::UnresolvedLabel {
                function: "f".into(),
                label: Label::new("bogus")
            }
        );
    }

    #[test]
    fn duplicate_label() {
        let src = "define @f() {\nL:\n  br label %L\nL:\n  ret\n}\n";
        let err = parse_module(src).unwrap_err();
        assert_eq!(
            err,
            ParseError::DuplicateLabel {
                function: "f".into(),
                label: Label::new("L")
            }
        );
    }

    #[test]
    fn duplicate_switch_case_keys_rejected() {
        let src =
            "define @f() {\n  switch i64 %v, label %d [ 1, label %d 1, label %d ]\nd:\n  ret\n}\n";
        assert!(matches!(parse_module(src), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn indirectbr_without_targets() {
        let src = "define @f() {\n  indirectbr ptr %a, [ ]\n}\n";
        let err = parse_module(src).unwrap_err();
        assert!(matches!(err, ParseError::IndirectTargetsUnknown { .. }));
    }

    #[test]
    fn block_without_terminator() {
        let src = "define @f() {\nA:\n  %x = add i64 1, 2\nB:\n  ret\n}\n";
        assert!(matches!(parse_module(src), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn unsupported_terminator_fails() {
        let src = "define @f() {\n  invoke void @g() to label %a unwind label %b\na:\n  ret\nb:\n  ret\n}\n";
        assert!(matches!(parse_module(src), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let src = "; header comment\n\ndefine @f() {\n; inside\n\n  ret\n}\n";
        let m = parse_module(src).unwrap();
        assert!(m.functions[0].blocks[0].body.is_empty());
    }

    #[test]
    fn multi_line_switch_and_label_comments() {
        let src = r#"
source_filename = "demo.c"
target datalayout = "e-m:e"
@global = global i32 0

define dso_local i32 @main(i32 noundef %argc) #0 {
  %1 = alloca i32, align 4
  switch i32 %argc, label %sw.default [
    i32 0, label %sw.bb
    i32 1, label %sw.bb1
  ]

sw.bb:                                            ; preds = %0
  br label %done

sw.bb1:                                           ; preds = %0
  br label %done

sw.default:                                       ; preds = %0
  br label %done

done:
  ret i32 0
}

declare i32 @printf(ptr noundef, ...) #1
"#;
        let m = parse_module(src).unwrap();
        assert_eq!(m.source_name, "demo.c");
        assert_eq!(m.declared_externals, vec!["printf".to_string()]);
        let f = &m.functions[0];
        assert_eq!(f.name, "main");
        assert_eq!(f.params.len(), 1);
        assert_eq!(f.params[0].name, "argc");
        assert_eq!(f.blocks[0].label, Label::new("entry"));
        match &f.blocks[0].terminator {
            Terminator::Switch {
                cases,
                default_target,
                ..
            } => {
                assert_eq!(cases.len(), 2);
                assert_eq!(cases[0], (0, Label::new("sw.bb")));
                assert_eq!(default_target, &Label::new("sw.default"));
            }
            other => panic!("expected switch, got {other:?}"),
        }
        assert_eq!(f.blocks.last().unwrap().terminator, Terminator::Ret);
    }

    #[test]
    fn conditional_branch_with_loop_metadata() {
        let src = "define @f() {\nA:\n  br i1 %cmp, label %B, label %C\nB:\n  br label %A, !llvm.loop !5\nC:\n  ret\n}\n";
        let m = parse_module(src).unwrap();
        let f = &m.functions[0];
        assert_eq!(
            f.blocks[0].terminator,
            Terminator::CondBr {
                cond: "i1 %cmp".into(),
                then_target: Label::new("B"),
                else_target: Label::new("C"),
            }
        );
        assert_eq!(
            f.blocks[1].terminator,
            Terminator::Br {
                target: Label::new("A")
            }
        );
    }

    #[test]
    fn call_bodies_classified() {
        let src = "define @f() {\n  call @marker()\n  %r = call i32 @add(i32 1, i32 2)\n  ret\n}\n";
        let m = parse_module(src).unwrap();
        let body = &m.functions[0].blocks[0].body;
        assert_eq!(
            body[0].kind,
            InstKind::Call {
                callee: "marker".into(),
                arg_count: 0
            }
        );
        assert_eq!(
            body[1].kind,
            InstKind::Call {
                callee: "add".into(),
                arg_count: 2
            }
        );
    }

    #[test]
    fn declared_and_defined_collision_rejected() {
        let src = "declare @f\ndefine @f() {\n  ret\n}\n";
        assert!(matches!(parse_module(src), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn duplicate_function_definition_rejected() {
        let src = "define @f() {\n  ret\n}\ndefine @f() {\n  ret\n}\n";
        assert!(matches!(parse_module(src), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn empty_function_body_rejected() {
        assert!(matches!(
            parse_module("define @f() {\n}\n"),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn parse_is_deterministic() {
        let src = "define @f(i64 %x) {\nA:\n  %y = add i64 %x, 1\n  br label %B\nB:\n  ret\n}\n";
        assert_eq!(parse_module(src).unwrap(), parse_module(src).unwrap());
    }
}
