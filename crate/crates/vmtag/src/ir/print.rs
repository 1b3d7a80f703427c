//! Canonical text emission for [`IrModule`].
//!
//! Output is not byte-identical to arbitrary input (comments are gone,
//! terminators are reformatted) but reparses to a structurally equal
//! module: same functions, labels, terminator shapes, and call sites.

use std::fmt::Write;

use super::{IrModule, Terminator};

pub fn print_module(module: &IrModule) -> String {
    let mut out = String::new();
    if !module.source_name.is_empty() {
        writeln!(out, "source_filename = \"{}\"", module.source_name).unwrap();
        out.push('\n');
    }
    for ext in &module.declared_externals {
        writeln!(out, "declare @{ext}").unwrap();
    }
    if !module.declared_externals.is_empty() {
        out.push('\n');
    }
    for (i, func) in module.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let params = func
            .params
            .iter()
            .map(|p| {
                if p.name.is_empty() {
                    p.ty.clone()
                } else if p.ty.is_empty() {
                    format!("%{}", p.name)
                } else {
                    format!("{} %{}", p.ty, p.name)
                }
            })
            .collect::<Vec<_>>()
            .join(", ");
        writeln!(out, "define @{}({}) {{", func.name, params).unwrap();
        for block in &func.blocks {
            writeln!(out, "{}:", block.label).unwrap();
            for inst in &block.body {
                writeln!(out, "  {}", inst.raw_text).unwrap();
            }
            writeln!(out, "  {}", format_terminator(&block.terminator)).unwrap();
        }
        out.push_str("}\n");
    }
    out
}

fn format_terminator(term: &Terminator) -> String {
    match term {
        Terminator::Ret => "ret".to_string(),
        Terminator::Unreachable => "unreachable".to_string(),
        Terminator::Br { target } => format!("br label %{target}"),
        Terminator::CondBr {
            cond,
            then_target,
            else_target,
        } => {
            format!("br {cond}, label %{then_target}, label %{else_target}")
        }
        Terminator::Switch {
            scrutinee,
            default_target,
            cases,
        } => {
            let body = cases
                .iter()
                .map(|(key, label)| format!("{key}, label %{label}"))
                .collect::<Vec<_>>()
                .join(" ");
            format!("switch {scrutinee}, label %{default_target} [ {body} ]")
        }
        Terminator::IndirectBr {
            address,
            possible_targets,
        } => {
            let body = possible_targets
                .iter()
                .map(|label| format!("label %{label}"))
                .collect::<Vec<_>>()
                .join(", ");
            format!("indirectbr {address}, [ {body} ]")
        }
    }
}
