use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use vmtag::detect::{DetectOptions, VmEndMode};
use vmtag::synth::{DispatchMode, SynthConfig};
use vmtag_cli::{cmd_analyze, cmd_annotate, cmd_matrix, cmd_synth, Format};

/// Static detection of virtualization-obfuscation structure in textual IR.
#[derive(Parser)]
#[command(name = "vmtag", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Report output format.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,

    /// Write the primary output to this path instead of stdout
    /// (for `synth`: the base name of the .vmir/.truth.json pair).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Write Graphviz digraphs of every function's CFG to this path
    /// (consumed by `analyze`).
    #[arg(long, global = true)]
    dot: Option<PathBuf>,

    /// How "branching back to the dispatcher" is interpreted for VM ends.
    #[arg(long, global = true, value_enum, default_value_t = VmEndModeArg::Reachability)]
    vm_end_mode: VmEndModeArg,

    /// Prefix for the four marker callees (consumed by `annotate`).
    #[arg(long, global = true, default_value = "__vmtag")]
    marker_prefix: String,
}

#[derive(Subcommand)]
enum Command {
    /// Parse an IR file, detect VM structures, and emit a report.
    /// Exits 0 on clean detection, 2 when detection carried diagnostics,
    /// 1 on IO or parse errors.
    Analyze { path: PathBuf },
    /// Detect VM structures and emit IR with marker calls inserted.
    Annotate { path: PathBuf },
    /// Generate an obfuscated-shaped corpus with a ground-truth sidecar.
    Synth {
        #[arg(long, value_enum, default_value_t = ModeArg::Switch)]
        mode: ModeArg,
        /// Number of handlers the hub dispatches to.
        #[arg(long, default_value_t = 12)]
        handlers: usize,
        /// How many handlers exit the VM region.
        #[arg(long, default_value_t = 1)]
        exits: usize,
        /// Blocks per handler before rejoining the hub.
        #[arg(long, default_value_t = 1)]
        body_blocks: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Unvirtualized filler functions to include.
        #[arg(long, default_value_t = 2)]
        plain: usize,
        /// Apply the optimizer-style merge transform to the output.
        #[arg(long)]
        merge: bool,
        /// Emit threaded handlers chained directly to each other, with no
        /// common hub block (negative control for detection).
        #[arg(long)]
        no_funnel: bool,
    },
    /// Run detection over a corpus and print the O/X grid for the four
    /// roles. Exits 0 when the grid matches the expected pattern, 3 on a
    /// mismatch, 1 on corpus IO errors.
    Matrix {
        /// Analyze .vmir/.truth.json pairs from this directory instead of
        /// self-generating the default corpus.
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
        /// Dispatch modes to include in the self-generated grid.
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![ModeArg::Switch, ModeArg::Direct, ModeArg::Indirect])]
        modes: Vec<ModeArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum VmEndModeArg {
    Reachability,
    Direct,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Switch,
    Direct,
    Indirect,
}

impl From<ModeArg> for DispatchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Switch => DispatchMode::SwitchLoop,
            ModeArg::Direct => DispatchMode::DirectThreaded,
            ModeArg::Indirect => DispatchMode::IndirectThreaded,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let options = DetectOptions {
        vm_end_mode: match cli.vm_end_mode {
            VmEndModeArg::Reachability => VmEndMode::Reachability,
            VmEndModeArg::Direct => VmEndMode::Direct,
        },
    };
    let format = match cli.format {
        FormatArg::Json => Format::Json,
        FormatArg::Text => Format::Text,
    };

    let outcome = match cli.command {
        Command::Analyze { path } => cmd_analyze(
            &path,
            format,
            cli.out.as_deref(),
            cli.dot.as_deref(),
            options,
        ),
        Command::Annotate { path } => {
            cmd_annotate(&path, cli.out.as_deref(), &cli.marker_prefix, options)
        }
        Command::Synth {
            mode,
            handlers,
            exits,
            body_blocks,
            seed,
            plain,
            merge,
            no_funnel,
        } => {
            let config = SynthConfig {
                mode: mode.into(),
                handler_count: handlers,
                exit_handler_count: exits,
                handler_body_blocks: body_blocks,
                seed,
                extra_plain_functions: plain,
                funnel: !no_funnel,
            };
            match &cli.out {
                Some(out) => cmd_synth(&config, merge, out),
                None => Err(anyhow::anyhow!(
                    "synth requires --out <BASE> for the output pair"
                )),
            }
        }
        Command::Matrix { corpus_dir, modes } => {
            let modes: Vec<DispatchMode> = modes.into_iter().map(Into::into).collect();
            cmd_matrix(&modes, corpus_dir.as_ref(), cli.out.as_deref(), options)
        }
    };

    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
