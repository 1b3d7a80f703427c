//! Marker injection: records detected structures directly in the IR as
//! dummy external calls, so the findings survive into later tool stages
//! that only see the code itself.

use std::collections::HashSet;

use thiserror::Error;

use crate::detect::DetectionResult;
use crate::ir::{Instruction, IrModule, Label};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotateError {
    #[error("marker name @{name} collides with a symbol in the module")]
    MarkerCollision { name: String },
}

/// Names of the four dummy callees. All four must be pairwise distinct and
/// absent from the target module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerSpec {
    pub dispatch_marker: String,
    /// Receives one integer argument: the handler's ordinal in handler-set
    /// order.
    pub handler_marker: String,
    pub vm_start_marker: String,
    pub vm_end_marker: String,
}

impl Default for MarkerSpec {
    fn default() -> Self {
        MarkerSpec::with_prefix("__vmtag")
    }
}

impl MarkerSpec {
    pub fn with_prefix(prefix: &str) -> Self {
        MarkerSpec {
            dispatch_marker: format!("{prefix}_dispatch_start"),
            handler_marker: format!("{prefix}_handler"),
            vm_start_marker: format!("{prefix}_vm_start"),
            vm_end_marker: format!("{prefix}_vm_end"),
        }
    }

    pub fn names(&self) -> [&str; 4] {
        [
            &self.dispatch_marker,
            &self.handler_marker,
            &self.vm_start_marker,
            &self.vm_end_marker,
        ]
    }

    fn is_marker(&self, callee: &str) -> bool {
        self.names().contains(&callee)
    }
}

/// Inserts marker calls at the start of every detected block and declares
/// the marker callees. Terminators, labels, and edges are untouched, so
/// detection on the annotated module is identical to detection on the
/// original.
///
/// A block holding several roles receives several markers, in the fixed
/// order dispatch, handler, vm-start, vm-end.
pub fn annotate(
    module: &IrModule,
    results: &[DetectionResult],
    spec: &MarkerSpec,
) -> Result<IrModule, AnnotateError> {
    check_collisions(module, spec)?;

    let mut out = module.clone();
    let mut used: Vec<&str> = Vec::new();
    for result in results {
        let func = match out
            .functions
            .iter_mut()
            .find(|f| f.name == result.function_name)
        {
            Some(f) => f,
            None => continue,
        };
        for block in &mut func.blocks {
            let mut markers: Vec<Instruction> = Vec::new();
            if result.dispatch_start.as_ref() == Some(&block.label) {
                markers.push(Instruction::call(&spec.dispatch_marker, &[]));
                record(&mut used, &spec.dispatch_marker);
            }
            if let Some(ordinal) = position(&result.handlers, &block.label) {
                markers.push(Instruction::call(
                    &spec.handler_marker,
                    &[ordinal.to_string()],
                ));
                record(&mut used, &spec.handler_marker);
            }
            if result.vm_start.as_ref() == Some(&block.label) {
                markers.push(Instruction::call(&spec.vm_start_marker, &[]));
                record(&mut used, &spec.vm_start_marker);
            }
            if result.vm_ends.contains(&block.label) {
                markers.push(Instruction::call(&spec.vm_end_marker, &[]));
                record(&mut used, &spec.vm_end_marker);
            }
            if !markers.is_empty() {
                block.body.splice(0..0, markers);
            }
        }
    }
    // Declare only the markers that were actually inserted, in fixed order.
    for name in spec.names() {
        if used.contains(&name) {
            out.declared_externals.push(name.to_string());
        }
    }
    Ok(out)
}

fn check_collisions(module: &IrModule, spec: &MarkerSpec) -> Result<(), AnnotateError> {
    let mut seen = HashSet::new();
    for name in spec.names() {
        let defined = module.functions.iter().any(|f| f.name == name);
        let declared = module.declared_externals.iter().any(|e| e == name);
        if defined || declared || !seen.insert(name) {
            return Err(AnnotateError::MarkerCollision {
                name: name.to_string(),
            });
        }
    }
    Ok(())
}

fn record<'a>(used: &mut Vec<&'a str>, name: &'a str) {
    if !used.contains(&name) {
        used.push(name);
    }
}

fn position(handlers: &[Label], label: &Label) -> Option<usize> {
    handlers.iter().position(|h| h == label)
}

/// Removes every call to a marker callee and the matching declarations.
/// Inverse of [`annotate`]: stripping an annotated module restores the
/// original, and stripping an unannotated module is the identity.
pub fn strip_markers(module: &IrModule, spec: &MarkerSpec) -> IrModule {
    let mut out = module.clone();
    for func in &mut out.functions {
        for block in &mut func.blocks {
            block
                .body
                .retain(|inst| !inst.callee().is_some_and(|c| spec.is_marker(c)));
        }
    }
    out.declared_externals.retain(|e| !spec.is_marker(e));
    out
}
