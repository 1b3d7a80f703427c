//! Models the CFG simplification an optimizing compiler applies to the
//! generated corpora: linear single-branch chains collapse into one block,
//! the statically resolved first dispatch stops entering the hub from
//! outside, and loop-backs and exits funnel through one canonical latch.
//! On generator output this erases the distinct VM-start and VM-end blocks
//! while leaving the dispatch hub and its handlers intact.

use std::collections::HashSet;

use crate::cfg::build_cfg;
use crate::ir::{BasicBlock, Instruction, IrFunction, IrModule, Label, Terminator};

/// Collapses every block pair (a, b) where a's only edge is an
/// unconditional branch to b and b's only predecessor is a: bodies are
/// concatenated, a keeps its label, b's terminator survives. Runs to
/// fixpoint. The entry block is never merged away.
///
/// Along any path the sequence of body instructions is unchanged; this is
/// the soundness-preserving half of [`merge_transform`].
pub fn merge_linear_blocks(module: &IrModule) -> IrModule {
    let mut out = module.clone();
    for func in &mut out.functions {
        merge_linear_in_function(func);
    }
    out
}

fn merge_linear_in_function(func: &mut IrFunction) {
    loop {
        let g = build_cfg(func);
        let entry = g.entry().clone();
        let pair = func.blocks.iter().find_map(|block| {
            let a = &block.label;
            match &block.terminator {
                Terminator::Br { target: b } if b != a && b != &entry => {
                    let preds = g.predecessors(b).unwrap();
                    (preds.len() == 1 && &preds[0] == a).then(|| (a.clone(), b.clone()))
                }
                _ => None,
            }
        });
        let (a, b) = match pair {
            Some(p) => p,
            None => return,
        };
        let b_index = func.blocks.iter().position(|x| x.label == b).unwrap();
        let absorbed = func.blocks.remove(b_index);
        let a_block = func.blocks.iter_mut().find(|x| x.label == a).unwrap();
        a_block.body.extend(absorbed.body);
        a_block.terminator = absorbed.terminator;
    }
}

/// Full optimizer model: linear-chain merging plus, for every multi-way
/// hub, the two effects aggressive optimization has on the hub's
/// surroundings — the entry-side branch into the hub is threaded past it
/// (the first dispatch is statically resolved), and direct loop-backs and
/// returning exits are unified behind a conditional latch. Idempotent, and
/// the hub's out-degree is never changed.
pub fn merge_transform(module: &IrModule) -> IrModule {
    let mut out = merge_linear_blocks(module);
    for func in &mut out.functions {
        canonicalize_hubs(func);
    }
    for func in &mut out.functions {
        merge_linear_in_function(func);
    }
    out
}

fn canonicalize_hubs(func: &mut IrFunction) {
    let hubs: Vec<Label> = func
        .blocks
        .iter()
        .filter(|b| b.terminator.is_multiway())
        .map(|b| b.label.clone())
        .collect();
    for hub in hubs {
        thread_entry_branch(func, &hub);
        unify_loop_exits(func, &hub);
    }
}

/// Retargets every out-of-region unconditional branch into the hub to the
/// hub's first successor, the way a constant initial VPC lets the compiler
/// resolve the first dispatch without entering the loop header.
fn thread_entry_branch(func: &mut IrFunction, hub: &Label) {
    let g = build_cfg(func);
    let region = match g.reachable_from(hub) {
        Ok(r) => r,
        Err(_) => return,
    };
    let first_succ = match g.successors(hub).ok().and_then(|s| s.first().cloned()) {
        Some(s) => s,
        None => return,
    };
    let preds: Vec<Label> = g
        .predecessors(hub)
        .unwrap()
        .iter()
        .filter(|p| !region.contains(p))
        .cloned()
        .collect();
    for pred in preds {
        let block = func.blocks.iter_mut().find(|b| b.label == pred).unwrap();
        if block.terminator
            == (Terminator::Br {
                target: hub.clone(),
            })
        {
            block.terminator = Terminator::Br {
                target: first_succ.clone(),
            };
        }
    }
}

/// Replaces direct loop-back branches and in-region returns with branches
/// to one shared latch that either re-enters the hub or leaves through a
/// dedicated exit block.
fn unify_loop_exits(func: &mut IrFunction, hub: &Label) {
    let g = build_cfg(func);
    let region = match g.reachable_from(hub) {
        Ok(r) => r,
        Err(_) => return,
    };
    let mut backs = Vec::new();
    let mut rets = Vec::new();
    for block in &func.blocks {
        if !region.contains(&block.label) || &block.label == hub {
            continue;
        }
        match &block.terminator {
            Terminator::Br { target } if target == hub => backs.push(block.label.clone()),
            Terminator::Ret => rets.push(block.label.clone()),
            _ => {}
        }
    }
    if backs.is_empty() || rets.is_empty() {
        return;
    }

    let latch = fresh_label(func, "latch");
    let exit = fresh_label(func, "loopexit");
    for label in backs.iter().chain(rets.iter()) {
        let block = func.blocks.iter_mut().find(|b| &b.label == label).unwrap();
        block.terminator = Terminator::Br {
            target: latch.clone(),
        };
    }
    let cond = format!("%live_{latch}");
    func.blocks.push(BasicBlock {
        label: latch.clone(),
        body: vec![Instruction::parse(&format!("{cond} = icmp ne i64 %pc, 0"))],
        terminator: Terminator::CondBr {
            cond: format!("i1 {cond}"),
            then_target: hub.clone(),
            else_target: exit.clone(),
        },
    });
    func.blocks.push(BasicBlock {
        label: exit,
        body: Vec::new(),
        terminator: Terminator::Ret,
    });
}

fn fresh_label(func: &IrFunction, base: &str) -> Label {
    let taken: HashSet<&str> = func.blocks.iter().map(|b| b.label.as_str()).collect();
    if !taken.contains(base) {
        return Label::new(base);
    }
    let mut i = 1usize;
    loop {
        let name = format!("{base}.{i}");
        if !taken.contains(name.as_str()) {
            return Label::new(name);
        }
        i += 1;
    }
}
