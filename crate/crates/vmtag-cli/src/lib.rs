//! Command implementations behind the `vmtag` binary: analyze, annotate,
//! synth, and matrix. Each returns the process exit code; hard failures
//! (IO, parse errors, marker collisions) bubble up as errors and exit 1.

pub mod matrix;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

use vmtag::annotate::{annotate, MarkerSpec};
use vmtag::cfg::build_cfg;
use vmtag::detect::{detect_with, DetectOptions};
use vmtag::ir::{parse_module, print_module, IrModule};
use vmtag::merge::merge_transform;
use vmtag::synth::{generate, SynthConfig, TruthSidecar};

use report::{render_text, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

fn load_module(path: &Path) -> Result<IrModule> {
    let source = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut module =
        parse_module(&source).with_context(|| format!("parsing {}", path.display()))?;
    if module.source_name.is_empty() {
        module.source_name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(module)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn cmd_analyze(
    path: &Path,
    format: Format,
    out: Option<&Path>,
    dot: Option<&Path>,
    options: DetectOptions,
) -> Result<u8> {
    let module = load_module(path)?;
    let started = Instant::now();
    let results = detect_with(&module, options);
    let timing_ms = started.elapsed().as_millis() as u64;

    if let Some(dot_path) = dot {
        let mut text = String::new();
        for func in &module.functions {
            text.push_str(&build_cfg(func).to_dot());
        }
        fs::write(dot_path, text).with_context(|| format!("writing {}", dot_path.display()))?;
    }

    let report = Report::new(&path.display().to_string(), results, timing_ms);
    let rendered = match format {
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&report)?),
        Format::Text => render_text(&report),
    };
    emit(out, &rendered)?;
    Ok(report.exit_code())
}

pub fn cmd_annotate(
    path: &Path,
    out: Option<&Path>,
    marker_prefix: &str,
    options: DetectOptions,
) -> Result<u8> {
    let module = load_module(path)?;
    let results = detect_with(&module, options);
    let spec = MarkerSpec::with_prefix(marker_prefix);
    let annotated = annotate(&module, &results, &spec)?;
    emit(out, &print_module(&annotated))?;
    Ok(0)
}

pub fn cmd_synth(config: &SynthConfig, merge: bool, out: &Path) -> Result<u8> {
    let (mut module, truth) = generate(config)?;
    if merge {
        module = merge_transform(&module);
    }
    let vmir_path = if out.extension().is_some_and(|x| x == "vmir") {
        out.to_path_buf()
    } else {
        out.with_extension("vmir")
    };
    let truth_path = vmir_path.with_extension("truth.json");
    fs::write(&vmir_path, print_module(&module))
        .with_context(|| format!("writing {}", vmir_path.display()))?;
    let sidecar = TruthSidecar {
        mode: config.mode.as_str().to_string(),
        merged: merge,
        funnel: config.funnel,
        truth,
    };
    fs::write(
        &truth_path,
        format!("{}\n", serde_json::to_string_pretty(&sidecar)?),
    )
    .with_context(|| format!("writing {}", truth_path.display()))?;
    eprintln!("wrote {} and {}", vmir_path.display(), truth_path.display());
    Ok(0)
}

pub fn cmd_matrix(
    modes: &[vmtag::synth::DispatchMode],
    corpus_dir: Option<&PathBuf>,
    out: Option<&Path>,
    options: DetectOptions,
) -> Result<u8> {
    let (grid, code) = match corpus_dir {
        Some(dir) => matrix::corpus_matrix(dir, options)?,
        None => matrix::self_matrix(modes, options),
    };
    emit(out, &grid)?;
    Ok(code)
}
