//! Brute-force fault-injection oracle: simulate every (FF, cycle)
//! injection hypothesis for a block and keep the pairs whose run
//! reproduces the constrained observations bit-exactly. Independent of the
//! CNF path; used to cross-check candidate enumeration.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::bmc::{block_ext_indices, block_sig_indices};
use crate::localize::WindowInfo;
use crate::netlist::{ElaboratedDesign, FfId, FfInit, SignalId};
use crate::partition::{BlockId, Partition, SignaturePlan};
use crate::signature::ScanSnapshot;
use crate::sim::{run, ExternalTrace, InjectionSpec, SimError, SimOptions, Stimulus, SymbolicFill};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle needs concrete initial values; {0} symbolic FFs exceed the tiny-block limit of 10")]
    TooManyUnknowns(usize),
    #[error("stimulus is shorter than the detection cycle")]
    ShortStimulus,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// The observations a candidate must reproduce, mirroring the constraints
/// of the block's satisfiability problem: the selected MISR value of every
/// interface of the block, and the block's externally traced signals over
/// the window.
struct Expectation {
    sig_indices: Vec<u32>,
    /// (external interface index, signal, is_input, primary index)
    ext_signals: Vec<(SignalId, bool, usize)>,
}

fn expectation(
    design: &ElaboratedDesign,
    partition: &Partition,
    plan: &SignaturePlan,
    block: BlockId,
) -> Expectation {
    let pi_index: HashMap<SignalId, usize> = design
        .primary_inputs
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, i))
        .collect();
    let po_index: HashMap<SignalId, usize> = design
        .primary_outputs
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, i))
        .collect();
    let mut ext_signals = Vec::new();
    for ei in block_ext_indices(plan, block) {
        for &sig in &plan.externals[ei].signals {
            if let Some(&i) = pi_index.get(&sig) {
                ext_signals.push((sig, true, i));
            } else if let Some(&i) = po_index.get(&sig) {
                ext_signals.push((sig, false, i));
            }
        }
    }
    Expectation {
        sig_indices: block_sig_indices(plan, partition, block),
        ext_signals,
    }
}

/// Does this run reproduce every constrained signature and the external
/// trace of the block over the window?
fn matches(
    exp: &Expectation,
    window: &WindowInfo,
    snapshot: &ScanSnapshot,
    external: &ExternalTrace,
    candidate: &crate::sim::SimResult,
    plan: &SignaturePlan,
) -> bool {
    for &plan_idx in &exp.sig_indices {
        let id = &plan.sigs[plan_idx as usize].interface.id;
        let Some(want) = snapshot.entry(id) else {
            return false;
        };
        let got = &candidate.sig_states[plan_idx as usize];
        let (w, g) = match window.sel {
            crate::signature::MisrSel::Misr1 => (&want.misr1, &got.misr1),
            crate::signature::MisrSel::Misr2 => (&want.misr2, &got.misr2),
        };
        if w != g {
            return false;
        }
    }
    for t in 0..window.t {
        let cycle = window.window_start + u64::from(t);
        let (Some(want), Some(got)) = (external.at_cycle(cycle), candidate.external.at_cycle(cycle))
        else {
            return false;
        };
        for &(_, is_input, idx) in &exp.ext_signals {
            let (w, g) = if is_input {
                (want.inputs[idx], got.inputs[idx])
            } else {
                (want.outputs[idx], got.outputs[idx])
            };
            if w != g {
                return false;
            }
        }
    }
    true
}

/// Exhaustively simulate every (FF in block, cycle in window) injection
/// and return the pairs that reproduce the block's constrained signatures
/// and external trace. Designs with symbolic-init FFs are accepted only up
/// to 10 unknowns; all their initial patterns are enumerated and a pair is
/// kept when any pattern matches.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_oracle(
    design: &ElaboratedDesign,
    partition: &Partition,
    plan: &SignaturePlan,
    stimulus: &Stimulus,
    snapshot: &ScanSnapshot,
    external: &ExternalTrace,
    window: &WindowInfo,
    block: BlockId,
) -> Result<BTreeSet<(FfId, u64)>, OracleError> {
    let unknowns = design
        .ffs
        .iter()
        .filter(|f| f.init == FfInit::Symbolic)
        .count();
    if unknowns > 10 {
        return Err(OracleError::TooManyUnknowns(unknowns));
    }
    if stimulus.len() <= snapshot.detect_cycle {
        return Err(OracleError::ShortStimulus);
    }
    // simulate only as far as the detection cycle
    let run_stim = match stimulus {
        Stimulus::Seeded { seed, .. } => Stimulus::Seeded {
            seed: *seed,
            cycles: snapshot.detect_cycle + 1,
        },
        Stimulus::Explicit(v) => {
            Stimulus::Explicit(v[..=(snapshot.detect_cycle as usize)].to_vec())
        }
    };

    let exp = expectation(design, partition, plan, block);
    let mut pairs = BTreeSet::new();
    let fills: Vec<SymbolicFill> = if unknowns == 0 {
        vec![SymbolicFill::Zero]
    } else {
        (0..(1u64 << unknowns)).map(SymbolicFill::Pattern).collect()
    };

    for &ff in &partition.blocks[block].ffs {
        for cycle in window.window_start..=window.detect_cycle {
            let mut matched = false;
            for &fill in &fills {
                let opts = SimOptions {
                    injection: Some(InjectionSpec {
                        ff_path: design.ffs[ff as usize].name.clone(),
                        cycle,
                    }),
                    symbolic_fill: fill,
                    ..SimOptions::default()
                };
                let result = run(design, plan, &run_stim, &opts, None)?;
                if matches(&exp, window, snapshot, external, &result, plan) {
                    matched = true;
                    break;
                }
            }
            if matched {
                pairs.insert((ff, cycle));
            }
        }
    }
    Ok(pairs)
}
