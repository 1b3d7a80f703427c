//! Detection matrix: runs the pipeline over a corpus (self-generated or
//! on-disk) and renders the O/X grid for the four roles, per dispatch
//! style, with and without optimizer-style merging.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use vmtag::detect::{detect_with, DetectOptions, DetectionResult};
use vmtag::ir::parse_module;
use vmtag::merge::merge_transform;
use vmtag::synth::{generate, DispatchMode, GroundTruth, SynthConfig, TruthSidecar};

use crate::report::{summarize, RoleStatus, Summary};

struct Row {
    corpus: String,
    merged: bool,
    summary: Summary,
    truth_verdict: Verdict,
}

#[derive(PartialEq)]
enum Verdict {
    Match,
    Mismatch,
    NotChecked,
}

impl Verdict {
    fn cell(&self) -> &'static str {
        match self {
            Verdict::Match => "match",
            Verdict::Mismatch => "MISMATCH",
            Verdict::NotChecked => "-",
        }
    }
}

/// Expected per-row pattern: an un-merged corpus shows all four roles, a
/// merged one keeps only dispatcher and handlers.
fn expected_cells(merged: bool) -> [RoleStatus; 4] {
    if merged {
        [
            RoleStatus::Absent,
            RoleStatus::Detected,
            RoleStatus::Detected,
            RoleStatus::Absent,
        ]
    } else {
        [RoleStatus::Detected; 4]
    }
}

fn cells(summary: &Summary) -> [RoleStatus; 4] {
    [
        summary.vm_start,
        summary.dispatch_start,
        summary.handlers,
        summary.vm_end,
    ]
}

fn row_passes(row: &Row) -> bool {
    cells(&row.summary) == expected_cells(row.merged) && row.truth_verdict != Verdict::Mismatch
}

fn check_truth(results: &[DetectionResult], truth: &GroundTruth) -> Verdict {
    let matched = results.iter().any(|r| {
        r.function_name == truth.function_name
            && r.dispatch_start.as_ref() == Some(&truth.dispatch_label)
            && r.handlers == truth.handler_labels
            && r.vm_start.as_ref() == Some(&truth.vm_start_label)
            && r.vm_ends == truth.vm_end_labels
            && r.diagnostics.is_empty()
    });
    if matched {
        Verdict::Match
    } else {
        Verdict::Mismatch
    }
}

/// Grid over self-generated corpora: for every requested mode, one base
/// row (checked against ground truth) and one merged row.
pub fn self_matrix(modes: &[DispatchMode], options: DetectOptions) -> (String, u8) {
    let mut rows = Vec::new();
    for &mode in modes {
        let config = SynthConfig {
            mode,
            ..Default::default()
        };
        let (module, truth) = generate(&config).expect("default config is valid");

        let results = detect_with(&module, options);
        rows.push(Row {
            corpus: mode.as_str().to_string(),
            merged: false,
            summary: summarize(&results),
            truth_verdict: check_truth(&results, &truth),
        });

        let merged = merge_transform(&module);
        let results = detect_with(&merged, options);
        rows.push(Row {
            corpus: mode.as_str().to_string(),
            merged: true,
            summary: summarize(&results),
            truth_verdict: Verdict::NotChecked,
        });
    }
    render(&rows)
}

/// Grid over `.vmir` + `.truth.json` pairs found in a directory, in
/// file-name order. Ground truth is compared only for un-merged corpora;
/// a merged corpus is expected to have lost its start/end blocks.
pub fn corpus_matrix(dir: &Path, options: DetectOptions) -> Result<(String, u8)> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .with_context(|| format!("reading corpus dir {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "vmir"))
        .collect();
    paths.sort();
    anyhow::ensure!(!paths.is_empty(), "no .vmir files in {}", dir.display());

    let mut rows = Vec::new();
    for path in paths {
        let source =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let module =
            parse_module(&source).with_context(|| format!("parsing {}", path.display()))?;
        let truth_path = path.with_extension("truth.json");
        let sidecar: TruthSidecar = serde_json::from_str(
            &fs::read_to_string(&truth_path)
                .with_context(|| format!("reading {}", truth_path.display()))?,
        )
        .with_context(|| format!("decoding {}", truth_path.display()))?;

        let results = detect_with(&module, options);
        let truth_verdict = if sidecar.merged {
            Verdict::NotChecked
        } else {
            check_truth(&results, &sidecar.truth)
        };
        rows.push(Row {
            corpus: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            merged: sidecar.merged,
            summary: summarize(&results),
            truth_verdict,
        });
    }
    Ok(render(&rows))
}

fn render(rows: &[Row]) -> (String, u8) {
    let name_width = rows
        .iter()
        .map(|r| r.corpus.len())
        .chain(std::iter::once("corpus".len()))
        .max()
        .unwrap();
    let mut out = format!(
        "{:name_width$}  variant  VM-start  dispatch  handlers  VM-end  truth\n",
        "corpus"
    );
    let mut all_pass = true;
    for row in rows {
        let c = cells(&row.summary);
        out.push_str(&format!(
            "{:name_width$}  {:7}  {:8}  {:8}  {:8}  {:6}  {}\n",
            row.corpus,
            if row.merged { "merged" } else { "base" },
            c[0].cell(),
            c[1].cell(),
            c[2].cell(),
            c[3].cell(),
            row.truth_verdict.cell(),
        ));
        all_pass &= row_passes(row);
    }
    out.push_str(&format!(
        "pattern: {}\n",
        if all_pass { "match" } else { "MISMATCH" }
    ));
    (out, if all_pass { 0 } else { 3 })
}
