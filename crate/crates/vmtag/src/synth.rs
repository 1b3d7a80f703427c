//! Deterministic generator for obfuscated-shaped IR corpora with known
//! ground truth, covering the three dispatch styles: a switch-loop hub, and
//! threaded code (direct and indirect) funneled through a common
//! computed-branch block the way compilers emit repeated identical
//! computed gotos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{BasicBlock, Instruction, IrFunction, IrModule, Label, Param, Terminator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispatchMode {
    SwitchLoop,
    DirectThreaded,
    IndirectThreaded,
}

impl DispatchMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DispatchMode::SwitchLoop => "switch",
            DispatchMode::DirectThreaded => "direct",
            DispatchMode::IndirectThreaded => "indirect",
        }
    }

    pub const ALL: [DispatchMode; 3] = [
        DispatchMode::SwitchLoop,
        DispatchMode::DirectThreaded,
        DispatchMode::IndirectThreaded,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub mode: DispatchMode,
    /// Number of handlers the hub dispatches to. The switch mode adds one
    /// more handler block as the default target.
    pub handler_count: usize,
    /// How many handlers leave the VM region instead of looping back.
    pub exit_handler_count: usize,
    /// Blocks per handler before it rejoins the dispatcher.
    pub handler_body_blocks: usize,
    pub seed: u64,
    pub extra_plain_functions: usize,
    /// When false the threaded modes emit true per-handler chained
    /// branches with no common hub block: a negative control on which
    /// dispatcher detection is expected to fail. Ignored by the switch
    /// mode.
    pub funnel: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            mode: DispatchMode::SwitchLoop,
            handler_count: 12,
            exit_handler_count: 1,
            handler_body_blocks: 1,
            seed: 7,
            extra_plain_functions: 2,
            funnel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("invalid config: {reason}")]
    InvalidConfig { reason: String },
}

/// Labels of the generated structures, recorded at generation time and
/// used as the oracle detection results are compared against.
///
/// With `funnel: false` there is no hub block at all; the recorded
/// dispatch label then points at the entry block as the nominal dispatch
/// point and detection is expected to diverge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub function_name: String,
    pub dispatch_label: Label,
    pub handler_labels: Vec<Label>,
    pub vm_start_label: Label,
    pub vm_end_labels: Vec<Label>,
}

/// Sidecar schema for `.truth.json` files written next to generated
/// `.vmir` corpora.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub mode: String,
    pub merged: bool,
    pub funnel: bool,
    #[serde(flatten)]
    pub truth: GroundTruth,
}

pub fn generate(config: &SynthConfig) -> Result<(IrModule, GroundTruth), SynthError> {
    validate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let tag = format!("{:04x}", rng.gen::<u16>());

    let mut gen = Gen {
        rng: &mut rng,
        tag: &tag,
        next_temp: 0,
    };
    let (vm_func, truth) = gen.vm_function(config);

    let mut functions = vec![vm_func];
    for i in 0..config.extra_plain_functions {
        functions.push(gen.plain_function(i));
    }

    let module = IrModule {
        source_name: format!("synth_{}_seed{}", config.mode.as_str(), config.seed),
        functions,
        declared_externals: Vec::new(),
    };
    debug_assert!(
        crate::ir::parse_module(&crate::ir::print_module(&module)).is_ok(),
        "generated module must reparse"
    );
    Ok((module, truth))
}

fn validate(config: &SynthConfig) -> Result<(), SynthError> {
    let fail = |reason: String| Err(SynthError::InvalidConfig { reason });
    if config.handler_count < 2 {
        return fail(format!("handler_count {} < 2", config.handler_count));
    }
    if config.exit_handler_count < 1 || config.exit_handler_count > config.handler_count {
        return fail(format!(
            "exit_handler_count {} outside 1..={}",
            config.exit_handler_count, config.handler_count
        ));
    }
    if config.handler_body_blocks < 1 {
        return fail("handler_body_blocks < 1".to_string());
    }
    Ok(())
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    tag: &'a str,
    next_temp: usize,
}

impl Gen<'_> {
    fn temp(&mut self) -> String {
        let t = self.next_temp;
        self.next_temp += 1;
        format!("%t{}_{}", t, self.tag)
    }

    /// 1..=3 opaque arithmetic lines chained through fresh temporaries.
    fn filler(&mut self, out: &mut Vec<Instruction>) {
        let n = self.rng.gen_range(1..=3usize);
        let mut prev = format!("%pc_{}", self.tag);
        for _ in 0..n {
            let t = self.temp();
            let op = ["add", "xor", "mul", "and", "lshr"][self.rng.gen_range(0..5usize)];
            let k: u32 = self.rng.gen_range(1..255);
            out.push(Instruction::parse(&format!("{t} = {op} i64 {prev}, {k}")));
            prev = t;
        }
    }

    fn vm_function(&mut self, config: &SynthConfig) -> (IrFunction, GroundTruth) {
        let tag = self.tag.to_string();
        let hc = config.handler_count;
        let init = Label::new(format!("init_{tag}"));
        let hub = Label::new(format!("dispatch_{tag}"));
        let epilog = Label::new(format!("epilog_{tag}"));
        let heads: Vec<Label> = (0..hc).map(|i| Label::new(format!("h{i}_{tag}"))).collect();

        // Seeded handler ordering: the order case keys / jump-table slots
        // reference the handler blocks.
        let mut order: Vec<usize> = (0..hc).collect();
        for i in (1..hc).rev() {
            let j = self.rng.gen_range(0..=i);
            order.swap(i, j);
        }
        // Seeded exit choice.
        let mut pick: Vec<usize> = (0..hc).collect();
        for i in (1..hc).rev() {
            let j = self.rng.gen_range(0..=i);
            pick.swap(i, j);
        }
        let exits: Vec<usize> = pick[..config.exit_handler_count].to_vec();

        let funnel = config.funnel || config.mode == DispatchMode::SwitchLoop;
        let mut blocks = Vec::new();

        // Entry: VM state setup, then into the hub (or straight into the
        // first handler when threading without a funnel).
        let mut body = vec![
            Instruction::parse(&format!("%pc_{tag} = alloca i64")),
            Instruction::parse(&format!("store i64 0, ptr %pc_{tag}")),
        ];
        self.filler(&mut body);
        let entry_target = if funnel {
            hub.clone()
        } else {
            heads[order[0]].clone()
        };
        blocks.push(BasicBlock {
            label: init.clone(),
            body,
            terminator: Terminator::Br {
                target: entry_target,
            },
        });

        // Dispatch hub.
        let mut handler_labels: Vec<Label> = Vec::new();
        let mut default_head: Option<Label> = None;
        if funnel {
            let mut body = Vec::new();
            let fetch = self.temp();
            body.push(Instruction::parse(&format!(
                "{fetch} = load i64, ptr %pc_{tag}"
            )));
            let terminator = match config.mode {
                DispatchMode::SwitchLoop => {
                    let dh = Label::new(format!("hdef_{tag}"));
                    default_head = Some(dh.clone());
                    handler_labels.push(dh.clone());
                    handler_labels.extend(order.iter().map(|&i| heads[i].clone()));
                    Terminator::Switch {
                        scrutinee: format!("i64 {fetch}"),
                        default_target: dh,
                        cases: order
                            .iter()
                            .enumerate()
                            .map(|(key, &i)| (key as i64, heads[i].clone()))
                            .collect(),
                    }
                }
                DispatchMode::DirectThreaded | DispatchMode::IndirectThreaded => {
                    let addr = self.temp();
                    if config.mode == DispatchMode::IndirectThreaded {
                        let slot = self.temp();
                        body.push(Instruction::parse(&format!(
                            "{slot} = getelementptr ptr, ptr @jtab_{tag}, i64 {fetch}"
                        )));
                        body.push(Instruction::parse(&format!(
                            "{addr} = load ptr, ptr {slot}"
                        )));
                    } else {
                        body.push(Instruction::parse(&format!(
                            "{addr} = load ptr, ptr %goto_{tag}"
                        )));
                    }
                    handler_labels.extend(order.iter().map(|&i| heads[i].clone()));
                    Terminator::IndirectBr {
                        address: format!("ptr {addr}"),
                        possible_targets: handler_labels.clone(),
                    }
                }
            };
            blocks.push(BasicBlock {
                label: hub.clone(),
                body,
                terminator,
            });
        } else {
            handler_labels.extend(order.iter().map(|&i| heads[i].clone()));
        }

        // Handlers, in seeded order.
        for (pos, &i) in order.iter().enumerate() {
            let is_exit = exits.contains(&i);
            let chain: Vec<Label> = std::iter::once(heads[i].clone())
                .chain(
                    (1..config.handler_body_blocks).map(|j| Label::new(format!("h{i}b{j}_{tag}"))),
                )
                .collect();
            for (j, label) in chain.iter().enumerate() {
                let mut body = Vec::new();
                self.filler(&mut body);
                let last = j + 1 == chain.len();
                let terminator = if !last {
                    Terminator::Br {
                        target: chain[j + 1].clone(),
                    }
                } else if is_exit {
                    body.push(Instruction::parse(&format!(
                        "store i64 {i}, ptr %res_{tag}"
                    )));
                    Terminator::Br {
                        target: epilog.clone(),
                    }
                } else {
                    let t = self.temp();
                    body.push(Instruction::parse(&format!("{t} = add i64 %pc_{tag}, 1")));
                    body.push(Instruction::parse(&format!("store i64 {t}, ptr %pc_{tag}")));
                    if funnel {
                        Terminator::Br {
                            target: hub.clone(),
                        }
                    } else {
                        // Chained threading: fall through to the next
                        // handler in order, or leave when this is the last.
                        let next = order
                            .get(pos + 1)
                            .map(|&k| heads[k].clone())
                            .unwrap_or_else(|| epilog.clone());
                        match config.mode {
                            DispatchMode::IndirectThreaded => Terminator::IndirectBr {
                                address: format!("ptr {t}"),
                                possible_targets: vec![next],
                            },
                            _ => Terminator::Br { target: next },
                        }
                    }
                };
                blocks.push(BasicBlock {
                    label: label.clone(),
                    body,
                    terminator,
                });
            }
        }

        // Default handler of the switch hub: behaves like a looping handler.
        if let Some(dh) = &default_head {
            let mut body = Vec::new();
            self.filler(&mut body);
            body.push(Instruction::parse(&format!("store i64 0, ptr %pc_{tag}")));
            blocks.push(BasicBlock {
                label: dh.clone(),
                body,
                terminator: Terminator::Br {
                    target: hub.clone(),
                },
            });
        }

        // Epilogue: distinct from the exit handlers so optimizer-style
        // merging has something to fuse.
        let mut body = Vec::new();
        self.filler(&mut body);
        body.push(Instruction::parse(&format!(
            "%r_{tag} = load i64, ptr %res_{tag}"
        )));
        blocks.push(BasicBlock {
            label: epilog.clone(),
            body,
            terminator: Terminator::Ret,
        });

        let name = format!("vmfn_{tag}");
        let truth = GroundTruth {
            function_name: name.clone(),
            dispatch_label: if funnel { hub } else { init.clone() },
            handler_labels: handler_labels.clone(),
            vm_start_label: init,
            vm_end_labels: handler_labels
                .iter()
                .filter(|l| {
                    heads
                        .iter()
                        .position(|h| &h == l)
                        .is_some_and(|i| exits.contains(&i))
                })
                .cloned()
                .collect(),
        };
        let func = IrFunction {
            name,
            params: vec![Param {
                name: format!("arg_{tag}"),
                ty: "i64".to_string(),
            }],
            blocks,
        };
        (func, truth)
    }

    /// Unvirtualized filler function: straight-line, a two-block chain, or
    /// a single-branch diamond.
    fn plain_function(&mut self, index: usize) -> IrFunction {
        let tag = self.tag.to_string();
        let shape = self.rng.gen_range(0..3usize);
        let mut blocks = Vec::new();
        match shape {
            0 => {
                let mut body = Vec::new();
                self.filler(&mut body);
                blocks.push(BasicBlock {
                    label: Label::new("entry"),
                    body,
                    terminator: Terminator::Ret,
                });
            }
            1 => {
                let mut body = Vec::new();
                self.filler(&mut body);
                blocks.push(BasicBlock {
                    label: Label::new("entry"),
                    body,
                    terminator: Terminator::Br {
                        target: Label::new("tail"),
                    },
                });
                let mut body = Vec::new();
                self.filler(&mut body);
                blocks.push(BasicBlock {
                    label: Label::new("tail"),
                    body,
                    terminator: Terminator::Ret,
                });
            }
            _ => {
                let cond = self.temp();
                let mut body = Vec::new();
                self.filler(&mut body);
                body.push(Instruction::parse(&format!(
                    "{cond} = icmp eq i64 %a_{tag}, 0"
                )));
                blocks.push(BasicBlock {
                    label: Label::new("entry"),
                    body,
                    terminator: Terminator::CondBr {
                        cond: format!("i1 {cond}"),
                        then_target: Label::new("left"),
                        else_target: Label::new("right"),
                    },
                });
                for side in ["left", "right"] {
                    let mut body = Vec::new();
                    self.filler(&mut body);
                    blocks.push(BasicBlock {
                        label: Label::new(side),
                        body,
                        terminator: Terminator::Br {
                            target: Label::new("join"),
                        },
                    });
                }
                blocks.push(BasicBlock {
                    label: Label::new("join"),
                    body: Vec::new(),
                    terminator: Terminator::Ret,
                });
            }
        }
        IrFunction {
            name: format!("plain{index}_{tag}"),
            params: vec![Param {
                name: format!("a_{tag}"),
                ty: "i64".to_string(),
            }],
            blocks,
        }
    }
}
