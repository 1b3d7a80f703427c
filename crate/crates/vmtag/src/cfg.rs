//! Per-function control-flow graph and the degree/adjacency/reachability
//! queries the structure detector runs.

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::ir::{IrFunction, Label};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CfgError {
    #[error("unknown block %{0}")]
    UnknownBlock(Label),
}

/// Immutable successor/predecessor adjacency for one function.
///
/// Successor lists are deduplicated (two switch cases targeting one block
/// contribute a single successor) and keep first-appearance order from the
/// terminator. Node order is layout order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    function_name: String,
    nodes: Vec<Label>,
    succ: HashMap<Label, Vec<Label>>,
    pred: HashMap<Label, Vec<Label>>,
    entry: Label,
}

pub fn build_cfg(func: &IrFunction) -> Cfg {
    let nodes: Vec<Label> = func.blocks.iter().map(|b| b.label.clone()).collect();
    let mut succ: HashMap<Label, Vec<Label>> = HashMap::new();
    let mut pred: HashMap<Label, Vec<Label>> = HashMap::new();
    for label in &nodes {
        succ.insert(label.clone(), Vec::new());
        pred.insert(label.clone(), Vec::new());
    }
    for block in &func.blocks {
        let mut seen = HashSet::new();
        for target in block.terminator.targets() {
            if seen.insert(target.clone()) {
                succ.get_mut(&block.label).unwrap().push(target.clone());
                pred.get_mut(target).unwrap().push(block.label.clone());
            }
        }
    }
    Cfg {
        function_name: func.name.clone(),
        entry: func.entry().clone(),
        nodes,
        succ,
        pred,
    }
}

impl Cfg {
    pub fn function_name(&self) -> &str {
        &self.function_name
    }

    /// Block labels in layout order.
    pub fn nodes(&self) -> &[Label] {
        &self.nodes
    }

    pub fn entry(&self) -> &Label {
        &self.entry
    }

    pub fn contains(&self, block: &Label) -> bool {
        self.succ.contains_key(block)
    }

    pub fn successors(&self, block: &Label) -> Result<&[Label], CfgError> {
        self.succ
            .get(block)
            .map(|v| v.as_slice())
            .ok_or_else(|| CfgError::UnknownBlock(block.clone()))
    }

    pub fn predecessors(&self, block: &Label) -> Result<&[Label], CfgError> {
        self.pred
            .get(block)
            .map(|v| v.as_slice())
            .ok_or_else(|| CfgError::UnknownBlock(block.clone()))
    }

    /// Number of distinct successor blocks.
    pub fn out_degree(&self, block: &Label) -> Result<usize, CfgError> {
        Ok(self.successors(block)?.len())
    }

    /// All blocks reachable from `src` by one or more edge traversals.
    /// `src` itself is included only when it lies on a cycle through itself.
    pub fn reachable_from(&self, src: &Label) -> Result<HashSet<Label>, CfgError> {
        let start = self.successors(src)?;
        let mut reached: HashSet<Label> = HashSet::new();
        let mut queue: VecDeque<Label> = start.iter().cloned().collect();
        while let Some(label) = queue.pop_front() {
            if reached.insert(label.clone()) {
                for next in &self.succ[&label] {
                    if !reached.contains(next) {
                        queue.push_back(next.clone());
                    }
                }
            }
        }
        Ok(reached)
    }

    /// Total number of edges (counting deduplicated successor entries).
    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| self.succ[n].len()).sum()
    }

    /// Graphviz rendering; edge order follows successor-list order.
    pub fn to_dot(&self) -> String {
        let mut out = format!("digraph \"{}\" {{\n", self.function_name);
        for node in &self.nodes {
            out.push_str(&format!("  \"{node}\";\n"));
        }
        for node in &self.nodes {
            for succ in &self.succ[node] {
                out.push_str(&format!("  \"{node}\" -> \"{succ}\";\n"));
            }
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_module;

    fn cfg_of(src: &str) -> Cfg {
        let module = parse_module(src).unwrap();
        build_cfg(&module.functions[0])
    }

    #[test]
    fn single_block_function_has_no_edges() {
        let g = cfg_of("define @f() {\n  ret\n}\n");
        assert_eq!(g.nodes().len(), 1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.out_degree(&Label::new("entry")).unwrap(), 0);
    }

    #[test]
    fn switch_degree_matches_textual_recount() {
        // 10 distinct case targets plus a distinct default: out-degree 11.
        let targets: Vec<String> = (0..10).map(|i| format!("c{i}")).collect();
        let cases = targets
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{i}, label %{t}"))
            .collect::<Vec<_>>()
            .join(" ");
        let blocks = targets
            .iter()
            .map(|t| format!("{t}:\n  br label %hub\n"))
            .collect::<String>();
        let src = format!(
            "define @f() {{\nhub:\n  switch i64 %v, label %d [ {cases} ]\nd:\n  ret\n{blocks}}}\n"
        );
        let g = cfg_of(&src);

        // Independent recount: scan the raw terminator text for distinct labels.
        let term_line = src
            .lines()
            .find(|l| l.trim_start().starts_with("switch"))
            .unwrap();
        let mut distinct: Vec<&str> = Vec::new();
        let mut rest = term_line;
        while let Some(pos) = rest.find("label %") {
            let tail = &rest[pos + 7..];
            let end = tail
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .unwrap_or(tail.len());
            let name = &tail[..end];
            if !distinct.contains(&name) {
                distinct.push(name);
            }
            rest = &tail[end..];
        }
        assert_eq!(distinct.len(), 11);
        assert_eq!(g.out_degree(&Label::new("hub")).unwrap(), distinct.len());
    }

    #[test]
    fn condbr_with_equal_targets_dedups() {
        let g = cfg_of("define @f() {\nA:\n  br i1 %c, label %L, label %L\nL:\n  ret\n}\n");
        assert_eq!(g.successors(&Label::new("A")).unwrap(), &[Label::new("L")]);
        assert_eq!(g.out_degree(&Label::new("A")).unwrap(), 1);
    }

    #[test]
    fn linear_chain_reachability() {
        let g = cfg_of("define @f() {\nA:\n  br label %B\nB:\n  br label %C\nC:\n  ret\n}\n");
        let reached = g.reachable_from(&Label::new("A")).unwrap();
        assert_eq!(
            reached,
            [Label::new("B"), Label::new("C")].into_iter().collect()
        );
    }

    #[test]
    fn self_loop_reaches_itself() {
        let g = cfg_of("define @f() {\nA:\n  br label %A\n}\n");
        let reached = g.reachable_from(&Label::new("A")).unwrap();
        assert!(reached.contains(&Label::new("A")));
    }

    #[test]
    fn unknown_block_is_an_error() {
        let g = cfg_of("define @f() {\n  ret\n}\n");
        assert_eq!(
            g.out_degree(&Label::new("nope")),
            Err(CfgError::UnknownBlock(Label::new("nope")))
        );
    }

    #[test]
    fn pred_succ_are_mutually_consistent() {
        let g = cfg_of(
            "define @f() {\nA:\n  switch i64 %v, label %B [ 0, label %C 1, label %A ]\nB:\n  br label %C\nC:\n  ret\n}\n",
        );
        for a in g.nodes() {
            for b in g.successors(a).unwrap() {
                assert!(g.predecessors(b).unwrap().contains(a));
            }
            for p in g.predecessors(a).unwrap() {
                assert!(g.successors(p).unwrap().contains(a));
            }
        }
        let pred_total: usize = g
            .nodes()
            .iter()
            .map(|n| g.predecessors(n).unwrap().len())
            .sum();
        assert_eq!(g.edge_count(), pred_total);
    }

    #[test]
    fn dot_export_lists_nodes_and_edges_in_order() {
        let g =
            cfg_of("define @f() {\nA:\n  br i1 %c, label %B, label %C\nB:\n  ret\nC:\n  ret\n}\n");
        let dot = g.to_dot();
        assert!(dot.starts_with("digraph \"f\" {"));
        let b_edge = dot.find("\"A\" -> \"B\"").unwrap();
        let c_edge = dot.find("\"A\" -> \"C\"").unwrap();
        assert!(b_edge < c_edge);
    }
}
