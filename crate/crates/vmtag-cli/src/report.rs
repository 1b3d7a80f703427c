//! Serializable analysis report: per-function results plus a module-level
//! summary keyed to the function most likely to host the VM.

use serde::Serialize;
use vmtag::detect::{DetectionResult, DiagnosticCode};

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool_version: String,
    pub input_path: String,
    pub per_function: Vec<DetectionResult>,
    pub summary: Summary,
    pub timing_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    /// The defined function whose dispatcher has the highest fan-out. The
    /// tool does not decide which function "is" obfuscated; it surfaces
    /// the strongest candidate and reports every function alongside.
    pub primary_candidate: Option<String>,
    pub dispatch_start: RoleStatus,
    pub handlers: RoleStatus,
    pub vm_start: RoleStatus,
    pub vm_end: RoleStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RoleStatus {
    Detected,
    Absent,
    Ambiguous,
}

impl RoleStatus {
    pub fn cell(&self) -> &'static str {
        match self {
            RoleStatus::Detected => "O",
            RoleStatus::Absent => "X",
            RoleStatus::Ambiguous => "A",
        }
    }
}

impl Report {
    pub fn new(input_path: &str, per_function: Vec<DetectionResult>, timing_ms: u64) -> Self {
        Report {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            input_path: input_path.to_string(),
            summary: summarize(&per_function),
            per_function,
            timing_ms,
        }
    }

    /// Exit-code contract: 0 when the primary candidate was detected with
    /// no diagnostics, 2 otherwise (nothing detected, or detection carried
    /// caveats).
    pub fn exit_code(&self) -> u8 {
        match self.primary() {
            Some(r) if r.diagnostics.is_empty() => 0,
            _ => 2,
        }
    }

    pub fn primary(&self) -> Option<&DetectionResult> {
        self.summary
            .primary_candidate
            .as_ref()
            .and_then(|name| self.per_function.iter().find(|r| &r.function_name == name))
    }
}

pub fn summarize(results: &[DetectionResult]) -> Summary {
    // The handler set is exactly the dispatcher's successor list, so its
    // size is the dispatcher's fan-out.
    let primary = results
        .iter()
        .filter(|r| r.dispatch_start.is_some())
        .max_by_key(|r| r.handlers.len());
    match primary {
        Some(r) => Summary {
            primary_candidate: Some(r.function_name.clone()),
            dispatch_start: status(
                r.dispatch_start.is_some(),
                r.has_code(DiagnosticCode::TiedDispatcher),
            ),
            handlers: status(!r.handlers.is_empty(), false),
            vm_start: status(
                r.vm_start.is_some(),
                r.has_code(DiagnosticCode::MultipleVmStarts),
            ),
            vm_end: status(!r.vm_ends.is_empty(), false),
        },
        None => Summary {
            primary_candidate: None,
            dispatch_start: RoleStatus::Absent,
            handlers: RoleStatus::Absent,
            vm_start: RoleStatus::Absent,
            vm_end: RoleStatus::Absent,
        },
    }
}

fn status(present: bool, ambiguous: bool) -> RoleStatus {
    if !present {
        RoleStatus::Absent
    } else if ambiguous {
        RoleStatus::Ambiguous
    } else {
        RoleStatus::Detected
    }
}

/// Human-readable rendering of the same data as the JSON report.
pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    out.push_str(&format!("input: {}\n", report.input_path));
    for r in &report.per_function {
        out.push_str(&format!("function @{}\n", r.function_name));
        match &r.dispatch_start {
            Some(d) => out.push_str(&format!(
                "  dispatch start: %{d} ({} handlers)\n",
                r.handlers.len()
            )),
            None => out.push_str("  dispatch start: absent\n"),
        }
        if !r.handlers.is_empty() {
            let list = r
                .handlers
                .iter()
                .map(|l| format!("%{l}"))
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&format!("  handlers: {list}\n"));
        }
        match &r.vm_start {
            Some(s) => out.push_str(&format!("  vm start: %{s}\n")),
            None => out.push_str("  vm start: absent\n"),
        }
        if r.vm_ends.is_empty() {
            out.push_str("  vm end: absent\n");
        } else {
            let list = r
                .vm_ends
                .iter()
                .map(|l| format!("%{l}"))
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&format!("  vm end: {list}\n"));
        }
        for d in &r.diagnostics {
            out.push_str(&format!("  note [{:?}]: {}\n", d.code, d.detail));
        }
    }
    out.push_str(&format!(
        "summary: dispatch={} handlers={} vm_start={} vm_end={} primary={}\n",
        report.summary.dispatch_start.cell(),
        report.summary.handlers.cell(),
        report.summary.vm_start.cell(),
        report.summary.vm_end.cell(),
        report.summary.primary_candidate.as_deref().unwrap_or("-")
    ));
    out
}
