//! Cycle-accurate two-valued simulation of the instrumented design, with
//! single-cycle flip-flop error injection, golden-model detection, and
//! external tracing of primary I/O.
//!
//! One run is single-threaded and deterministic. Cycles are numbered from
//! 0; within a cycle the order is: drive primary inputs, evaluate
//! combinational logic in topological order, step every signature block on
//! its interface values, record the external trace and monitors, then
//! latch the flip-flops (where injection flips the captured value).
//! Scan-out reads signature state after the detection cycle's step.

use std::collections::VecDeque;

use thiserror::Error;

use crate::netlist::{ElaboratedDesign, FfInit, SignalId};
use crate::partition::SignaturePlan;
use crate::rng::{self, XorShift64Star};
use crate::signature::{
    bits_from_hex, bits_to_hex, sig_block_step, MisrState, ScanEntry, ScanSnapshot,
    SignatureBlockState,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("unknown FF: {0}")]
    UnknownFf(String),
    #[error("injection cycle {cycle} is outside the stimulus (length {len})")]
    InjectionOutOfRange { cycle: u64, len: u64 },
    #[error("explicit stimulus vector at cycle {cycle} has {got} bits, design has {expected} primary inputs")]
    VectorArity { cycle: u64, got: usize, expected: usize },
    #[error("mismatched run lengths: {0} vs {1}")]
    MismatchedLengths(u64, u64),
    #[error("runs were monitored on different signal sets")]
    MonitorSetMismatch,
    #[error("scan file line {line}: {msg}")]
    ScanFormat { line: usize, msg: String },
}

/// Primary-input stimulus: either seeded pseudo-random streams (one
/// independent stream per input, see [`crate::rng`]) or explicit per-cycle
/// vectors.
#[derive(Debug, Clone)]
pub enum Stimulus {
    Seeded { seed: u64, cycles: u64 },
    Explicit(Vec<Vec<bool>>),
}

impl Stimulus {
    pub fn len(&self) -> u64 {
        match self {
            Stimulus::Seeded { cycles, .. } => *cycles,
            Stimulus::Explicit(v) => v.len() as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Materialize the per-cycle input matrix for `n_inputs` primary inputs.
    fn matrix(&self, n_inputs: usize) -> Result<Vec<Vec<bool>>, SimError> {
        match self {
            Stimulus::Seeded { seed, cycles } => {
                let mut streams: Vec<XorShift64Star> =
                    (0..n_inputs).map(|k| rng::stream(*seed, k as u64)).collect();
                Ok((0..*cycles)
                    .map(|_| streams.iter_mut().map(|s| s.next_bit()).collect())
                    .collect())
            }
            Stimulus::Explicit(v) => {
                for (c, row) in v.iter().enumerate() {
                    if row.len() != n_inputs {
                        return Err(SimError::VectorArity {
                            cycle: c as u64,
                            got: row.len(),
                            expected: n_inputs,
                        });
                    }
                }
                Ok(v.clone())
            }
        }
    }
}

/// A single-cycle flip-flop error: the named FF captures the complement of
/// its data input at the end of `cycle`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InjectionSpec {
    pub ff_path: String,
    pub cycle: u64,
}

/// Concrete value given to symbolic-init flip-flops during simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolicFill {
    Zero,
    /// Pseudo-random per FF, derived from the given seed.
    Random(u64),
    /// Explicit bits: symbolic FF number i (in FF id order) takes bit i.
    /// Used by the oracle when enumerating unknown initial states.
    Pattern(u64),
}

/// One externally traced cycle: primary input and output values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtSample {
    pub cycle: u64,
    pub inputs: Vec<bool>,
    pub outputs: Vec<bool>,
}

/// Ring buffer of the last `depth` cycles of primary I/O (depth 2N,
/// mirroring the signature windows).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExternalTrace {
    pub depth: u64,
    pub samples: VecDeque<ExtSample>,
}

impl ExternalTrace {
    fn push(&mut self, s: ExtSample) {
        if self.samples.len() as u64 == self.depth {
            self.samples.pop_front();
        }
        self.samples.push_back(s);
    }

    pub fn at_cycle(&self, cycle: u64) -> Option<&ExtSample> {
        let first = self.samples.front()?.cycle;
        if cycle < first {
            return None;
        }
        self.samples.get((cycle - first) as usize)
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub injection: Option<InjectionSpec>,
    /// Monitored signals; defaults to all primary outputs.
    pub monitors: Option<Vec<SignalId>>,
    pub symbolic_fill: SymbolicFill,
    /// Record per-cycle interface values (replay oracle / debugging).
    pub record_ifaces: bool,
    /// Record the full per-cycle signal matrix (debugging).
    pub record_values: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            injection: None,
            monitors: None,
            symbolic_fill: SymbolicFill::Zero,
            record_ifaces: false,
            record_values: false,
        }
    }
}

/// Result of one simulation run.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub cycles_run: u64,
    /// First cycle a monitored signal differed from the reference, if a
    /// reference was supplied and a mismatch occurred.
    pub detection_cycle: Option<u64>,
    /// Scanned signature state after the detection cycle's step (or after
    /// the last cycle when no detection halted the run).
    pub snapshot: ScanSnapshot,
    pub external: ExternalTrace,
    pub monitors: Vec<SignalId>,
    /// Per-cycle monitored values.
    pub monitor_trace: Vec<Vec<bool>>,
    /// Final signature-block states, in plan order.
    pub sig_states: Vec<SignatureBlockState>,
    /// Per-signature-block per-cycle input values, when recorded.
    pub iface_trace: Option<Vec<Vec<Vec<bool>>>>,
    /// Per-cycle full signal values, when recorded.
    pub value_trace: Option<Vec<Vec<bool>>>,
}

fn initial_ff_state(design: &ElaboratedDesign, fill: SymbolicFill) -> Vec<bool> {
    let mut rand = match fill {
        SymbolicFill::Random(seed) => Some(rng::named_stream(seed, "symbolic-init")),
        _ => None,
    };
    let mut sym_idx = 0u32;
    design
        .ffs
        .iter()
        .map(|ff| match ff.init {
            FfInit::Zero => false,
            FfInit::One => true,
            FfInit::Symbolic => match fill {
                SymbolicFill::Zero => false,
                SymbolicFill::Random(_) => rand.as_mut().unwrap().next_bit(),
                SymbolicFill::Pattern(bits) => {
                    let b = bits >> sym_idx.min(63) & 1 != 0;
                    sym_idx += 1;
                    b
                }
            },
        })
        .collect()
}

/// Run the simulation engine. When `halt_reference` (a golden monitor
/// trace) is given, the run halts at the first monitored mismatch and the
/// snapshot is taken at that cycle.
pub fn run(
    design: &ElaboratedDesign,
    plan: &SignaturePlan,
    stimulus: &Stimulus,
    opts: &SimOptions,
    halt_reference: Option<&[Vec<bool>]>,
) -> Result<SimResult, SimError> {
    let inputs = stimulus.matrix(design.primary_inputs.len())?;
    let len = inputs.len() as u64;

    let injection = match &opts.injection {
        Some(spec) => {
            let ff = design
                .ff_by_name(&spec.ff_path)
                .ok_or_else(|| SimError::UnknownFf(spec.ff_path.clone()))?;
            if spec.cycle >= len {
                return Err(SimError::InjectionOutOfRange {
                    cycle: spec.cycle,
                    len,
                });
            }
            Some((ff, spec.cycle))
        }
        None => None,
    };

    let monitors: Vec<SignalId> = opts
        .monitors
        .clone()
        .unwrap_or_else(|| design.primary_outputs.clone());

    let mut ff_state = initial_ff_state(design, opts.symbolic_fill);
    let mut values = vec![false; design.signal_count()];
    let mut sig_states: Vec<SignatureBlockState> = plan
        .sigs
        .iter()
        .map(|s| SignatureBlockState::power_on(s.config.clone(), plan.n))
        .collect();

    let mut external = ExternalTrace {
        depth: 2 * plan.n,
        samples: VecDeque::new(),
    };
    let mut monitor_trace: Vec<Vec<bool>> = Vec::new();
    let mut iface_trace: Option<Vec<Vec<Vec<bool>>>> = opts
        .record_ifaces
        .then(|| vec![Vec::new(); plan.sigs.len()]);
    let mut value_trace: Option<Vec<Vec<bool>>> = opts.record_values.then(Vec::new);

    let mut detection_cycle = None;
    let mut cycles_run = 0;

    for cycle in 0..len {
        for (i, &pi) in design.primary_inputs.iter().enumerate() {
            values[pi as usize] = inputs[cycle as usize][i];
        }
        for (i, ff) in design.ffs.iter().enumerate() {
            values[ff.q_out as usize] = ff_state[i];
        }
        for &g in &design.topo {
            let gate = &design.gates[g as usize];
            let mut ins = [false; 3];
            for (j, &s) in gate.inputs.iter().enumerate() {
                ins[j] = values[s as usize];
            }
            values[gate.output as usize] = gate.op.eval(&ins[..gate.inputs.len()]);
        }

        for (i, planned) in plan.sigs.iter().enumerate() {
            let ins: Vec<bool> = planned
                .interface
                .signals
                .iter()
                .map(|&s| values[s as usize])
                .collect();
            if let Some(tr) = iface_trace.as_mut() {
                tr[i].push(ins.clone());
            }
            sig_states[i] = sig_block_step(&sig_states[i], &ins).expect("plan arity");
        }

        external.push(ExtSample {
            cycle,
            inputs: design
                .primary_inputs
                .iter()
                .map(|&s| values[s as usize])
                .collect(),
            outputs: design
                .primary_outputs
                .iter()
                .map(|&s| values[s as usize])
                .collect(),
        });
        let row: Vec<bool> = monitors.iter().map(|&s| values[s as usize]).collect();
        if let Some(vt) = value_trace.as_mut() {
            vt.push(values.clone());
        }

        let mismatch = halt_reference
            .and_then(|r| r.get(cycle as usize))
            .is_some_and(|golden| golden != &row);
        monitor_trace.push(row);
        cycles_run = cycle + 1;

        if mismatch {
            detection_cycle = Some(cycle);
            break;
        }

        for (i, ff) in design.ffs.iter().enumerate() {
            let mut d = values[ff.data_in as usize];
            if injection == Some((i as u32, cycle)) {
                d = !d;
            }
            ff_state[i] = d;
        }
    }

    let snapshot = ScanSnapshot {
        detect_cycle: detection_cycle.unwrap_or(cycles_run.saturating_sub(1)),
        entries: plan
            .sigs
            .iter()
            .zip(&sig_states)
            .map(|(p, st)| ScanEntry {
                sig_id: p.interface.id.clone(),
                counter: st.counter,
                misr1: st.misr1.clone(),
                misr2: st.misr2.clone(),
            })
            .collect(),
    };

    Ok(SimResult {
        cycles_run,
        detection_cycle,
        snapshot,
        external,
        monitors,
        monitor_trace,
        sig_states,
        iface_trace,
        value_trace,
    })
}

/// Golden run: no injection, no halting.
pub fn simulate(
    design: &ElaboratedDesign,
    plan: &SignaturePlan,
    stimulus: &Stimulus,
    opts: &SimOptions,
) -> Result<SimResult, SimError> {
    let mut o = opts.clone();
    o.injection = None;
    run(design, plan, stimulus, &o, None)
}

/// Injected run over the full stimulus (no halting; detection is computed
/// afterwards with [`detect`]).
pub fn simulate_with_injection(
    design: &ElaboratedDesign,
    plan: &SignaturePlan,
    stimulus: &Stimulus,
    injection: InjectionSpec,
) -> Result<SimResult, SimError> {
    let opts = SimOptions {
        injection: Some(injection),
        ..SimOptions::default()
    };
    run(design, plan, stimulus, &opts, None)
}

/// Earliest cycle where any monitored signal differs between two runs, or
/// `None` when they agree throughout.
pub fn detect(golden: &SimResult, actual: &SimResult) -> Result<Option<u64>, SimError> {
    if golden.cycles_run != actual.cycles_run {
        return Err(SimError::MismatchedLengths(
            golden.cycles_run,
            actual.cycles_run,
        ));
    }
    if golden.monitors != actual.monitors {
        return Err(SimError::MonitorSetMismatch);
    }
    Ok(golden
        .monitor_trace
        .iter()
        .zip(&actual.monitor_trace)
        .position(|(g, a)| g != a)
        .map(|c| c as u64))
}

/// Write the scan file: detection cycle, optional stimulus provenance, one
/// `scan` line per signature block, and `extio` lines for the external
/// trace. Hex fields put the first-listed signal in the least significant
/// bit.
pub fn write_scan_file(
    result: &SimResult,
    stimulus: &Stimulus,
) -> String {
    let mut out = String::new();
    match result.detection_cycle {
        Some(c) => out.push_str(&format!("detect cycle={c}\n")),
        None => out.push_str("detect cycle=none\n"),
    }
    if let Stimulus::Seeded { seed, cycles } = stimulus {
        out.push_str(&format!("stim seed={seed} cycles={cycles}\n"));
    }
    for e in &result.snapshot.entries {
        out.push_str(&format!(
            "scan {} counter={} misr1={} misr2={}\n",
            e.sig_id,
            e.counter,
            e.misr1.to_hex(),
            e.misr2.to_hex()
        ));
    }
    for s in &result.external.samples {
        out.push_str(&format!(
            "extio cycle={} in={} out={}\n",
            s.cycle,
            bits_to_hex(&s.inputs),
            bits_to_hex(&s.outputs)
        ));
    }
    out
}

/// Parsed scan file contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanFile {
    pub detection_cycle: Option<u64>,
    pub snapshot: ScanSnapshot,
    pub external: ExternalTrace,
    pub stimulus: Option<(u64, u64)>,
}

/// Read a scan file; MISR widths come from the plan.
pub fn read_scan_file(
    text: &str,
    plan: &SignaturePlan,
    n_inputs: usize,
    n_outputs: usize,
) -> Result<ScanFile, SimError> {
    let mut detection_cycle = None;
    let mut entries = Vec::new();
    let mut samples = VecDeque::new();
    let mut stim = None;

    let field = |tok: Option<&str>, key: &str, line: usize| -> Result<String, SimError> {
        let tok = tok.ok_or_else(|| SimError::ScanFormat {
            line,
            msg: format!("missing {key}"),
        })?;
        tok.strip_prefix(&format!("{key}="))
            .map(str::to_string)
            .ok_or_else(|| SimError::ScanFormat {
                line,
                msg: format!("expected {key}=..., got `{tok}`"),
            })
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let mut toks = content.split_whitespace();
        match toks.next().unwrap() {
            "detect" => {
                let v = field(toks.next(), "cycle", line)?;
                detection_cycle = if v == "none" {
                    None
                } else {
                    Some(v.parse().map_err(|_| SimError::ScanFormat {
                        line,
                        msg: format!("bad cycle `{v}`"),
                    })?)
                };
            }
            "stim" => {
                let seed = field(toks.next(), "seed", line)?;
                let cycles = field(toks.next(), "cycles", line)?;
                stim = Some((
                    seed.parse().map_err(|_| SimError::ScanFormat {
                        line,
                        msg: "bad seed".into(),
                    })?,
                    cycles.parse().map_err(|_| SimError::ScanFormat {
                        line,
                        msg: "bad cycles".into(),
                    })?,
                ));
            }
            "scan" => {
                let id = toks.next().ok_or_else(|| SimError::ScanFormat {
                    line,
                    msg: "missing signature id".into(),
                })?;
                let planned = plan.sig(id).ok_or_else(|| SimError::ScanFormat {
                    line,
                    msg: format!("signature {id} not in plan"),
                })?;
                let k = planned.config.k;
                let counter = field(toks.next(), "counter", line)?
                    .parse()
                    .map_err(|_| SimError::ScanFormat {
                        line,
                        msg: "bad counter".into(),
                    })?;
                let m1 = field(toks.next(), "misr1", line)?;
                let m2 = field(toks.next(), "misr2", line)?;
                let parse_misr = |h: &str| {
                    MisrState::from_hex(h, k).ok_or_else(|| SimError::ScanFormat {
                        line,
                        msg: format!("bad {k}-bit misr hex `{h}`"),
                    })
                };
                entries.push(ScanEntry {
                    sig_id: id.to_string(),
                    counter,
                    misr1: parse_misr(&m1)?,
                    misr2: parse_misr(&m2)?,
                });
            }
            "extio" => {
                let cycle = field(toks.next(), "cycle", line)?
                    .parse()
                    .map_err(|_| SimError::ScanFormat {
                        line,
                        msg: "bad cycle".into(),
                    })?;
                let i = field(toks.next(), "in", line)?;
                let o = field(toks.next(), "out", line)?;
                let inputs = bits_from_hex(&i, n_inputs).ok_or_else(|| SimError::ScanFormat {
                    line,
                    msg: format!("bad input hex `{i}`"),
                })?;
                let outputs = bits_from_hex(&o, n_outputs).ok_or_else(|| SimError::ScanFormat {
                    line,
                    msg: format!("bad output hex `{o}`"),
                })?;
                samples.push_back(ExtSample {
                    cycle,
                    inputs,
                    outputs,
                });
            }
            other => {
                return Err(SimError::ScanFormat {
                    line,
                    msg: format!("unknown line `{other}`"),
                })
            }
        }
    }

    Ok(ScanFile {
        detection_cycle,
        snapshot: ScanSnapshot {
            detect_cycle: detection_cycle.unwrap_or(0),
            entries,
        },
        external: ExternalTrace {
            depth: 2 * plan.n,
            samples,
        },
        stimulus: stim.map(|(s, c)| (s, c)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{elaborate, parse_netlist};
    use crate::partition::{group_interfaces, partition_design, plan_signatures, BMap};

    fn toggle_design() -> (ElaboratedDesign, SignaturePlan) {
        let text = "\
module m
input en
output y
gate n = NOT(q)
gate d = MUX(en,q,n)
ff f init 0 d d q q
gate y = OR(q,q)
endmodule
";
        let d = elaborate(&parse_netlist(text).unwrap(), "m").unwrap();
        let p = partition_design(&d, 100);
        let ifaces = group_interfaces(&d, &p);
        let plan = plan_signatures(&d, &ifaces, &BMap::uniform(2), 4, 100).unwrap();
        (d, plan)
    }

    #[test]
    fn inverter_loop_oscillates() {
        // FF fed by its own inverted output, init 0: q = 0,1,0,1
        let text = "module m\noutput y\ngate n = NOT(q)\nff f init 0 d n q q\ngate y = OR(q,q)\nendmodule\n";
        let d = elaborate(&parse_netlist(text).unwrap(), "m").unwrap();
        let p = partition_design(&d, 100);
        let plan =
            plan_signatures(&d, &group_interfaces(&d, &p), &BMap::uniform(2), 4, 100).unwrap();
        let r = simulate(
            &d,
            &plan,
            &Stimulus::Explicit(vec![vec![]; 4]),
            &SimOptions::default(),
        )
        .unwrap();
        let ys: Vec<bool> = r.monitor_trace.iter().map(|row| row[0]).collect();
        assert_eq!(ys, vec![false, true, false, true]);
    }

    #[test]
    fn zero_cycles_is_vacuous() {
        let (d, plan) = toggle_design();
        let r = simulate(
            &d,
            &plan,
            &Stimulus::Seeded { seed: 1, cycles: 0 },
            &SimOptions::default(),
        )
        .unwrap();
        assert_eq!(r.cycles_run, 0);
        assert!(r.detection_cycle.is_none());
        assert!(r.external.samples.is_empty());
    }

    #[test]
    fn golden_runs_are_deterministic() {
        let (d, plan) = toggle_design();
        let stim = Stimulus::Seeded { seed: 9, cycles: 40 };
        let a = simulate(&d, &plan, &stim, &SimOptions::default()).unwrap();
        let b = simulate(&d, &plan, &stim, &SimOptions::default()).unwrap();
        assert_eq!(a.monitor_trace, b.monitor_trace);
        assert_eq!(a.snapshot, b.snapshot);
        assert_eq!(a.external, b.external);
    }

    #[test]
    fn signature_states_match_independent_replay() {
        let (d, plan) = toggle_design();
        let stim = Stimulus::Seeded { seed: 3, cycles: 23 };
        let opts = SimOptions {
            record_ifaces: true,
            ..SimOptions::default()
        };
        let r = simulate(&d, &plan, &stim, &opts).unwrap();
        let traces = r.iface_trace.as_ref().unwrap();
        for (i, planned) in plan.sigs.iter().enumerate() {
            let mut st = SignatureBlockState::power_on(planned.config.clone(), plan.n);
            for ins in &traces[i] {
                st = sig_block_step(&st, ins).unwrap();
            }
            assert_eq!(st, r.sig_states[i], "signature block {i} diverged");
        }
    }

    #[test]
    fn unknown_ff_and_range_errors() {
        let (d, plan) = toggle_design();
        let stim = Stimulus::Seeded { seed: 1, cycles: 8 };
        let err = simulate_with_injection(
            &d,
            &plan,
            &stim,
            InjectionSpec {
                ff_path: "m.ghost".into(),
                cycle: 2,
            },
        )
        .unwrap_err();
        assert!(matches!(err, SimError::UnknownFf(_)));
        let err = simulate_with_injection(
            &d,
            &plan,
            &stim,
            InjectionSpec {
                ff_path: "m.f".into(),
                cycle: 8,
            },
        )
        .unwrap_err();
        assert!(matches!(err, SimError::InjectionOutOfRange { .. }));
    }

    fn pipeline_design() -> (ElaboratedDesign, SignaturePlan) {
        // a 3-stage pipeline: in -> f1 -> f2 -> f3 -> y
        let text = "\
module m
input i
output y
ff f1 init 0 d i q q1
ff f2 init 0 d q1 q q2
ff f3 init 0 d q2 q q3
gate y = OR(q3,q3)
endmodule
";
        let d = elaborate(&parse_netlist(text).unwrap(), "m").unwrap();
        let p = partition_design(&d, 100);
        let plan =
            plan_signatures(&d, &group_interfaces(&d, &p), &BMap::uniform(2), 8, 100).unwrap();
        (d, plan)
    }

    #[test]
    fn pipeline_detection_latency() {
        let (d, plan) = pipeline_design();
        let stim = Stimulus::Seeded { seed: 5, cycles: 24 };
        let golden = simulate(&d, &plan, &stim, &SimOptions::default()).unwrap();
        // f1 drives y through 2 more pipeline stages: detection at cycle+3
        let inj = InjectionSpec {
            ff_path: "m.f1".into(),
            cycle: 6,
        };
        let opts = SimOptions {
            injection: Some(inj),
            ..SimOptions::default()
        };
        let r = run(&d, &plan, &stim, &opts, Some(&golden.monitor_trace)).unwrap();
        assert_eq!(r.detection_cycle, Some(9));
    }

    #[test]
    fn single_flip_semantics() {
        let (d, plan) = pipeline_design();
        let stim = Stimulus::Seeded { seed: 5, cycles: 20 };
        let opts = SimOptions {
            record_values: true,
            ..SimOptions::default()
        };
        let golden = simulate(&d, &plan, &stim, &opts).unwrap();
        let mut iopts = opts.clone();
        iopts.injection = Some(InjectionSpec {
            ff_path: "m.f2".into(),
            cycle: 7,
        });
        let actual = run(&d, &plan, &stim, &iopts, None).unwrap();
        let gv = golden.value_trace.as_ref().unwrap();
        let av = actual.value_trace.as_ref().unwrap();
        let q2 = d.signal_id("m.q2").unwrap() as usize;
        for c in 0..=7usize {
            assert_eq!(gv[c], av[c], "difference before the flip at cycle {c}");
        }
        let diff: Vec<usize> = (0..gv[8].len()).filter(|&s| gv[8][s] != av[8][s]).collect();
        assert!(diff.contains(&q2));
        // the only differing state bit at cycle+1 is the injected FF's output
        let ff_outs: Vec<usize> = d.ffs.iter().map(|f| f.q_out as usize).collect();
        for &s in &ff_outs {
            if s != q2 {
                assert_eq!(gv[8][s], av[8][s]);
            }
        }
    }

    #[test]
    fn masked_injection_vanishes() {
        // FF output ANDed with constant 0 never reaches anything
        let text = "\
module m
input i
output y
gate z = CONST0()
ff fm init 0 d i q qm
gate dead = AND(qm,z)
ff f init 0 d i q q
gate y = XOR(q,dead)
endmodule
";
        let d = elaborate(&parse_netlist(text).unwrap(), "m").unwrap();
        let p = partition_design(&d, 100);
        let plan =
            plan_signatures(&d, &group_interfaces(&d, &p), &BMap::uniform(2), 4, 100).unwrap();
        let stim = Stimulus::Seeded { seed: 2, cycles: 16 };
        let golden = simulate(&d, &plan, &stim, &SimOptions::default()).unwrap();
        let actual = simulate_with_injection(
            &d,
            &plan,
            &stim,
            InjectionSpec {
                ff_path: "m.fm".into(),
                cycle: 3,
            },
        )
        .unwrap();
        assert_eq!(detect(&golden, &actual).unwrap(), None);
        assert_eq!(golden.snapshot, actual.snapshot);
    }

    #[test]
    fn detect_finds_first_difference() {
        let (d, plan) = pipeline_design();
        let stim = Stimulus::Seeded { seed: 5, cycles: 20 };
        let golden = simulate(&d, &plan, &stim, &SimOptions::default()).unwrap();
        let actual = simulate_with_injection(
            &d,
            &plan,
            &stim,
            InjectionSpec {
                ff_path: "m.f3".into(),
                cycle: 6,
            },
        )
        .unwrap();
        assert_eq!(detect(&golden, &golden.clone()).unwrap(), None);
        assert_eq!(detect(&golden, &actual).unwrap(), Some(7));
    }

    #[test]
    fn scan_file_round_trip() {
        let (d, plan) = toggle_design();
        let stim = Stimulus::Seeded { seed: 7, cycles: 19 };
        let r = simulate(&d, &plan, &stim, &SimOptions::default()).unwrap();
        let text = write_scan_file(&r, &stim);
        let parsed = read_scan_file(
            &text,
            &plan,
            d.primary_inputs.len(),
            d.primary_outputs.len(),
        )
        .unwrap();
        assert_eq!(parsed.snapshot.entries, r.snapshot.entries);
        assert_eq!(parsed.external.samples, r.external.samples);
        assert_eq!(parsed.stimulus, Some((7, 19)));
        assert_eq!(parsed.detection_cycle, None);
    }
}
