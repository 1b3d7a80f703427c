//! Detection of the four structural roles of a virtualization-obfuscated
//! function: dispatch start, handler blocks, VM start, and VM end.
//!
//! All four heuristics are purely structural. The dispatcher is the block
//! with maximal fan-out; handlers are its successors; the VM start is the
//! predecessor that enters the dispatch region from outside; VM ends are
//! handlers from which the dispatcher is unreachable.

use std::collections::HashSet;

use serde::Serialize;

use crate::cfg::{build_cfg, Cfg, CfgError};
use crate::ir::{IrFunction, IrModule, Label};

/// Outcome of the four-stage pipeline for one function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DetectionResult {
    pub function_name: String,
    pub dispatch_start: Option<Label>,
    /// All blocks tied at maximal out-degree, in layout order.
    pub dispatch_candidates: Vec<Label>,
    /// Successors of the dispatcher, in successor-list order.
    pub handlers: Vec<Label>,
    pub vm_start: Option<Label>,
    pub vm_start_candidates: Vec<Label>,
    pub vm_ends: Vec<Label>,
    pub diagnostics: Vec<Diagnostic>,
}

impl DetectionResult {
    fn empty(function_name: &str) -> Self {
        DetectionResult {
            function_name: function_name.to_string(),
            dispatch_start: None,
            dispatch_candidates: Vec::new(),
            handlers: Vec::new(),
            vm_start: None,
            vm_start_candidates: Vec::new(),
            vm_ends: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn has_code(&self, code: DiagnosticCode) -> bool {
        self.diagnostics.iter().any(|d| d.code == code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiagnosticCode {
    TiedDispatcher,
    NoDispatcher,
    MultipleVmStarts,
    NoVmStart,
    NoVmEnd,
    VmStartIsHandler,
    DegenerateFunction,
}

fn diag(code: DiagnosticCode, detail: impl Into<String>) -> Diagnostic {
    Diagnostic {
        code,
        detail: detail.into(),
    }
}

/// How "branching back to the dispatcher" is interpreted when classifying
/// VM ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VmEndMode {
    /// A handler is a VM end when no path (of any length) from it reaches
    /// the dispatcher. Handlers spanning several blocks before rejoining
    /// the hub are classified correctly.
    #[default]
    Reachability,
    /// A handler is a VM end when its own terminator has no edge straight
    /// to the dispatcher. Kept for comparison with the literal reading.
    Direct,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DetectOptions {
    pub vm_end_mode: VmEndMode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchScan {
    pub dispatch: Option<Label>,
    pub candidates: Vec<Label>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmStartScan {
    pub vm_start: Option<Label>,
    pub candidates: Vec<Label>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmEndScan {
    pub vm_ends: Vec<Label>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Scans every block and designates the one with the highest number of
/// distinct successors as the dispatch start. Ties go to the earliest
/// block in layout order and are reported via `TiedDispatcher`. A function
/// whose maximal fan-out is <= 1 has no hub at all.
pub fn find_dispatch_start(g: &Cfg) -> DispatchScan {
    if g.nodes().len() < 2 {
        return DispatchScan {
            dispatch: None,
            candidates: Vec::new(),
            diagnostics: vec![diag(
                DiagnosticCode::DegenerateFunction,
                format!(
                    "function @{} has {} block(s)",
                    g.function_name(),
                    g.nodes().len()
                ),
            )],
        };
    }
    let max = g
        .nodes()
        .iter()
        .map(|n| g.out_degree(n).expect("node from own cfg"))
        .max()
        .unwrap_or(0);
    if max <= 1 {
        return DispatchScan {
            dispatch: None,
            candidates: Vec::new(),
            diagnostics: vec![diag(
                DiagnosticCode::NoDispatcher,
                format!("maximal out-degree is {max}; no block fans out"),
            )],
        };
    }
    let candidates: Vec<Label> = g
        .nodes()
        .iter()
        .filter(|n| g.out_degree(n).unwrap() == max)
        .cloned()
        .collect();
    let mut diagnostics = Vec::new();
    if candidates.len() > 1 {
        let list = candidates
            .iter()
            .map(Label::as_str)
            .collect::<Vec<_>>()
            .join(", ");
        diagnostics.push(diag(
            DiagnosticCode::TiedDispatcher,
            format!(
                "{} blocks tied at out-degree {max}: {list}",
                candidates.len()
            ),
        ));
    }
    DispatchScan {
        dispatch: Some(candidates[0].clone()),
        candidates,
        diagnostics,
    }
}

/// All successor blocks of the dispatcher, in successor-list order. A
/// dispatcher that targets itself appears among its own handlers.
pub fn find_handlers(g: &Cfg, dispatch: &Label) -> Result<Vec<Label>, CfgError> {
    Ok(g.successors(dispatch)?.to_vec())
}

/// The block that enters the dispatcher from outside its own region.
///
/// Candidates are predecessors of the dispatcher that the dispatcher
/// cannot reach back (loop-back edges out of handler bodies are return
/// paths, not entries, no matter how many blocks the handler spans).
/// When the dispatcher lives in a different function than `func`, the
/// predecessor clause is replaced by the call-site clause: blocks of
/// `func` calling the dispatcher's enclosing function.
pub fn find_vm_start(
    g: &Cfg,
    func: &IrFunction,
    dispatch: &Label,
    handlers: &[Label],
) -> Result<VmStartScan, CfgError> {
    let handler_set: HashSet<&Label> = handlers.iter().collect();
    let mut diagnostics = Vec::new();

    let candidates: Vec<Label> = if func.name == g.function_name() {
        let preds: HashSet<&Label> = g.predecessors(dispatch)?.iter().collect();
        let region = g.reachable_from(dispatch)?;
        g.nodes()
            .iter()
            .filter(|n| preds.contains(n) && !handler_set.contains(n) && !region.contains(n))
            .cloned()
            .collect()
    } else {
        func.blocks
            .iter()
            .filter(|b| {
                b.body
                    .iter()
                    .any(|inst| inst.callee() == Some(g.function_name()))
            })
            .map(|b| b.label.clone())
            .collect()
    };

    let vm_start = candidates.first().cloned();
    match candidates.len() {
        0 => diagnostics.push(diag(
            DiagnosticCode::NoVmStart,
            format!("no block enters %{dispatch} from outside its region"),
        )),
        1 => {}
        n => {
            let list = candidates
                .iter()
                .map(Label::as_str)
                .collect::<Vec<_>>()
                .join(", ");
            diagnostics.push(diag(
                DiagnosticCode::MultipleVmStarts,
                format!("{n} entry candidates: {list}"),
            ));
        }
    }
    if let Some(start) = &vm_start {
        if handler_set.contains(start) {
            diagnostics.push(diag(
                DiagnosticCode::VmStartIsHandler,
                format!("%{start} is also a handler of %{dispatch}"),
            ));
        }
    }
    Ok(VmStartScan {
        vm_start,
        candidates,
        diagnostics,
    })
}

/// Handlers that terminate the VM logic instead of branching back to the
/// dispatcher, in handler-set order.
pub fn find_vm_end(
    g: &Cfg,
    dispatch: &Label,
    handlers: &[Label],
    mode: VmEndMode,
) -> Result<VmEndScan, CfgError> {
    let mut vm_ends = Vec::new();
    for handler in handlers {
        let rejoins = match mode {
            VmEndMode::Reachability => g.reachable_from(handler)?.contains(dispatch),
            VmEndMode::Direct => g.successors(handler)?.contains(dispatch),
        };
        if !rejoins && !vm_ends.contains(handler) {
            vm_ends.push(handler.clone());
        }
    }
    let mut diagnostics = Vec::new();
    if vm_ends.is_empty() {
        diagnostics.push(diag(
            DiagnosticCode::NoVmEnd,
            format!("every handler of %{dispatch} branches back to it"),
        ));
    }
    Ok(VmEndScan {
        vm_ends,
        diagnostics,
    })
}

/// Runs the four-stage pipeline over every defined function, in module
/// order. Anomalies surface as diagnostics, never as errors.
pub fn detect(module: &IrModule) -> Vec<DetectionResult> {
    detect_with(module, DetectOptions::default())
}

pub fn detect_with(module: &IrModule, options: DetectOptions) -> Vec<DetectionResult> {
    module
        .functions
        .iter()
        .map(|func| detect_function(func, options))
        .collect()
}

pub fn detect_function(func: &IrFunction, options: DetectOptions) -> DetectionResult {
    let g = build_cfg(func);
    let mut result = DetectionResult::empty(&func.name);

    let scan = find_dispatch_start(&g);
    result.dispatch_candidates = scan.candidates;
    result.diagnostics.extend(scan.diagnostics);
    let dispatch = match scan.dispatch {
        Some(d) => d,
        None => return result,
    };
    result.dispatch_start = Some(dispatch.clone());

    result.handlers = find_handlers(&g, &dispatch).expect("dispatch from own cfg");

    let starts =
        find_vm_start(&g, func, &dispatch, &result.handlers).expect("dispatch from own cfg");
    result.vm_start = starts.vm_start;
    result.vm_start_candidates = starts.candidates;
    result.diagnostics.extend(starts.diagnostics);

    let ends = find_vm_end(&g, &dispatch, &result.handlers, options.vm_end_mode)
        .expect("handlers from own cfg");
    result.vm_ends = ends.vm_ends;
    result.diagnostics.extend(ends.diagnostics);

    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_module;

    fn first_cfg(src: &str) -> (IrModule, Cfg) {
        let module = parse_module(src).unwrap();
        let g = build_cfg(&module.functions[0]);
        (module, g)
    }

    /// Switch-loop function: init -> hub -> 12 case handlers + default,
    /// one handler exits through an epilogue, the rest loop back.
    fn switch_loop_src() -> String {
        let cases = (0..12)
            .map(|i| format!("{i}, label %h{i}"))
            .collect::<Vec<_>>()
            .join(" ");
        let mut src = String::from("define @vm() {\ninit:\n  %pc = alloca i64\n  br label %hub\n");
        src.push_str(&format!(
            "hub:\n  %v = load i64, ptr %pc\n  switch i64 %v, label %hd [ {cases} ]\n"
        ));
        src.push_str("hd:\n  br label %hub\n");
        for i in 0..12 {
            if i == 4 {
                src.push_str(&format!("h{i}:\n  br label %done\n"));
            } else {
                src.push_str(&format!("h{i}:\n  br label %hub\n"));
            }
        }
        src.push_str("done:\n  ret\n}\n");
        src
    }

    #[test]
    fn dispatcher_is_the_maximal_block_with_no_tie() {
        let (_, g) = first_cfg(&switch_loop_src());
        let scan = find_dispatch_start(&g);
        assert_eq!(scan.dispatch, Some(Label::new("hub")));
        assert_eq!(scan.candidates, vec![Label::new("hub")]);
        assert!(scan.diagnostics.is_empty());

        // Independent maximum: brute-force rescan of every degree.
        let brute_max = g
            .nodes()
            .iter()
            .map(|n| g.out_degree(n).unwrap())
            .max()
            .unwrap();
        assert_eq!(g.out_degree(&Label::new("hub")).unwrap(), brute_max);
        assert_eq!(brute_max, 13);
    }

    #[test]
    fn single_block_function_is_degenerate() {
        let (_, g) = first_cfg("define @f() {\n  ret\n}\n");
        let scan = find_dispatch_start(&g);
        assert_eq!(scan.dispatch, None);
        assert!(scan.candidates.is_empty());
        assert_eq!(scan.diagnostics[0].code, DiagnosticCode::DegenerateFunction);
    }

    #[test]
    fn straight_line_function_has_no_dispatcher() {
        let (_, g) = first_cfg("define @f() {\nA:\n  br label %B\nB:\n  ret\n}\n");
        let scan = find_dispatch_start(&g);
        assert_eq!(scan.dispatch, None);
        assert_eq!(scan.diagnostics[0].code, DiagnosticCode::NoDispatcher);
    }

    #[test]
    fn tied_dispatchers_resolve_to_earliest_layout_block() {
        // Two diamonds: both A and D have out-degree 2.
        let src = "define @f() {\nA:\n  br i1 %c, label %B, label %C\nB:\n  br label %D\nC:\n  br label %D\nD:\n  br i1 %d, label %E, label %F\nE:\n  ret\nF:\n  ret\n}\n";
        let (_, g) = first_cfg(src);
        // Hand enumeration: A=2, B=1, C=1, D=2, E=0, F=0.
        let degrees: Vec<usize> = g.nodes().iter().map(|n| g.out_degree(n).unwrap()).collect();
        assert_eq!(degrees, vec![2, 1, 1, 2, 0, 0]);
        let scan = find_dispatch_start(&g);
        assert_eq!(scan.dispatch, Some(Label::new("A")));
        assert_eq!(scan.candidates, vec![Label::new("A"), Label::new("D")]);
        assert_eq!(scan.diagnostics[0].code, DiagnosticCode::TiedDispatcher);
    }

    #[test]
    fn handlers_are_exactly_the_successor_list() {
        let (_, g) = first_cfg(&switch_loop_src());
        let handlers = find_handlers(&g, &Label::new("hub")).unwrap();
        // Textual oracle: the case-target list plus the default.
        let mut expected = vec![Label::new("hd")];
        expected.extend((0..12).map(|i| Label::new(format!("h{i}"))));
        assert_eq!(handlers, expected);
        assert_eq!(handlers.len(), 13);
    }

    #[test]
    fn dispatcher_self_loop_stays_in_handlers() {
        let src = "define @f() {\nA:\n  br label %hub\nhub:\n  switch i64 %v, label %hub [ 0, label %B 1, label %C ]\nB:\n  br label %hub\nC:\n  ret\n}\n";
        let (_, g) = first_cfg(src);
        let handlers = find_handlers(&g, &Label::new("hub")).unwrap();
        assert!(handlers.contains(&Label::new("hub")));
    }

    #[test]
    fn indirect_hub_handlers_match_jump_table() {
        let src = "define @f() {\ninit:\n  br label %hub\nhub:\n  indirectbr ptr %t, [ label %x, label %y, label %x ]\nx:\n  br label %hub\ny:\n  ret\n}\n";
        let (_, g) = first_cfg(src);
        let handlers = find_handlers(&g, &Label::new("hub")).unwrap();
        assert_eq!(handlers, vec![Label::new("x"), Label::new("y")]);
    }

    #[test]
    fn vm_start_is_the_init_block() {
        let (module, g) = first_cfg(&switch_loop_src());
        let handlers = find_handlers(&g, &Label::new("hub")).unwrap();
        let scan = find_vm_start(&g, &module.functions[0], &Label::new("hub"), &handlers).unwrap();
        assert_eq!(scan.vm_start, Some(Label::new("init")));
        assert_eq!(scan.candidates.len(), 1);
        assert!(scan.diagnostics.is_empty());
    }

    #[test]
    fn loop_back_handlers_are_never_vm_start_candidates() {
        let (module, g) = first_cfg(&switch_loop_src());
        let handlers = find_handlers(&g, &Label::new("hub")).unwrap();
        let scan = find_vm_start(&g, &module.functions[0], &Label::new("hub"), &handlers).unwrap();
        for h in &handlers {
            assert!(!scan.candidates.contains(h));
        }
    }

    #[test]
    fn multi_block_loop_back_tails_are_not_vm_start_candidates() {
        // Handler h spans two blocks; its tail t is a predecessor of the
        // hub but lies inside the dispatch region.
        let src = "define @f() {\ninit:\n  br label %hub\nhub:\n  switch i64 %v, label %h [ 0, label %e ]\nh:\n  br label %t\nt:\n  br label %hub\ne:\n  ret\n}\n";
        let (module, g) = first_cfg(src);
        let handlers = find_handlers(&g, &Label::new("hub")).unwrap();
        let scan = find_vm_start(&g, &module.functions[0], &Label::new("hub"), &handlers).unwrap();
        assert_eq!(scan.vm_start, Some(Label::new("init")));
        assert_eq!(scan.candidates, vec![Label::new("init")]);
        assert!(scan.diagnostics.is_empty());
    }

    #[test]
    fn entry_as_dispatcher_yields_no_vm_start() {
        let src = "define @f() {\nhub:\n  switch i64 %v, label %a [ 0, label %b ]\na:\n  br label %hub\nb:\n  br label %hub\n}\n";
        let (module, g) = first_cfg(src);
        let handlers = find_handlers(&g, &Label::new("hub")).unwrap();
        let scan = find_vm_start(&g, &module.functions[0], &Label::new("hub"), &handlers).unwrap();
        assert_eq!(scan.vm_start, None);
        assert_eq!(scan.diagnostics[0].code, DiagnosticCode::NoVmStart);
    }

    #[test]
    fn cross_function_vm_start_uses_call_sites() {
        let src = "define @outer() {\nA:\n  %x = add i64 1, 2\n  br label %B\nB:\n  call @vm()\n  ret\n}\ndefine @vm() {\ninit:\n  br label %hub\nhub:\n  switch i64 %v, label %a [ 0, label %b ]\na:\n  br label %hub\nb:\n  ret\n}\n";
        let module = parse_module(src).unwrap();
        let outer = &module.functions[0];
        let g = build_cfg(&module.functions[1]);
        let handlers = find_handlers(&g, &Label::new("hub")).unwrap();
        let scan = find_vm_start(&g, outer, &Label::new("hub"), &handlers).unwrap();
        assert_eq!(scan.vm_start, Some(Label::new("B")));
        assert!(scan.diagnostics.is_empty());
    }

    #[test]
    fn cross_function_candidate_sharing_a_handler_label_is_flagged() {
        // The caller's calling block happens to carry the same label as one
        // of the dispatcher's handlers.
        let src = "define @outer() {\nA:\n  br label %a\na:\n  call @vm()\n  ret\n}\ndefine @vm() {\ninit:\n  br label %hub\nhub:\n  switch i64 %v, label %a [ 0, label %b ]\na:\n  br label %hub\nb:\n  ret\n}\n";
        let module = parse_module(src).unwrap();
        let outer = &module.functions[0];
        let g = build_cfg(&module.functions[1]);
        let handlers = find_handlers(&g, &Label::new("hub")).unwrap();
        let scan = find_vm_start(&g, outer, &Label::new("hub"), &handlers).unwrap();
        assert_eq!(scan.vm_start, Some(Label::new("a")));
        assert!(scan
            .diagnostics
            .iter()
            .any(|d| d.code == DiagnosticCode::VmStartIsHandler));
    }

    #[test]
    fn single_exit_handler_is_the_vm_end() {
        let (_, g) = first_cfg(&switch_loop_src());
        let handlers = find_handlers(&g, &Label::new("hub")).unwrap();
        let scan = find_vm_end(&g, &Label::new("hub"), &handlers, VmEndMode::Reachability).unwrap();
        assert_eq!(scan.vm_ends, vec![Label::new("h4")]);
        assert!(scan.diagnostics.is_empty());
    }

    #[test]
    fn all_looping_handlers_yield_no_vm_end() {
        let src = "define @f() {\ninit:\n  br label %hub\nhub:\n  switch i64 %v, label %a [ 0, label %b ]\na:\n  br label %hub\nb:\n  br label %hub\n}\n";
        let (_, g) = first_cfg(src);
        let handlers = find_handlers(&g, &Label::new("hub")).unwrap();
        let scan = find_vm_end(&g, &Label::new("hub"), &handlers, VmEndMode::Reachability).unwrap();
        assert!(scan.vm_ends.is_empty());
        assert_eq!(scan.diagnostics[0].code, DiagnosticCode::NoVmEnd);
    }

    #[test]
    fn handler_rejoining_through_a_chain_is_not_a_vm_end() {
        let src = "define @f() {\ninit:\n  br label %hub\nhub:\n  switch i64 %v, label %h [ 0, label %e ]\nh:\n  br label %t\nt:\n  br label %hub\ne:\n  ret\n}\n";
        let (_, g) = first_cfg(src);
        let handlers = find_handlers(&g, &Label::new("hub")).unwrap();
        let scan = find_vm_end(&g, &Label::new("hub"), &handlers, VmEndMode::Reachability).unwrap();
        assert_eq!(scan.vm_ends, vec![Label::new("e")]);

        // The literal direct-edge reading classifies the chained handler
        // as an end because its own terminator skips the hub.
        let direct = find_vm_end(&g, &Label::new("hub"), &handlers, VmEndMode::Direct).unwrap();
        assert_eq!(direct.vm_ends, vec![Label::new("h"), Label::new("e")]);
    }

    #[test]
    fn detect_reports_one_structured_function_among_three() {
        let mut src = switch_loop_src();
        src.push_str("define @p1() {\n  %a = add i64 1, 2\n  ret\n}\n");
        src.push_str("define @p2() {\nA:\n  br label %B\nB:\n  ret\n}\n");
        let module = parse_module(&src).unwrap();
        let results = detect(&module);
        assert_eq!(results.len(), 3);
        let structured: Vec<&DetectionResult> = results
            .iter()
            .filter(|r| r.dispatch_start.is_some() && r.handlers.len() > 2)
            .collect();
        assert_eq!(structured.len(), 1);
        assert_eq!(structured[0].function_name, "vm");
    }

    #[test]
    fn empty_module_detects_nothing() {
        let module = parse_module("declare @ext\n").unwrap();
        assert!(detect(&module).is_empty());
    }

    #[test]
    fn degenerate_function_still_yields_a_result() {
        let module = parse_module("define @f() {\n  ret\n}\n").unwrap();
        let results = detect(&module);
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].dispatch_start, None);
        assert!(results[0].handlers.is_empty());
        assert!(results[0].has_code(DiagnosticCode::DegenerateFunction));
    }
}
