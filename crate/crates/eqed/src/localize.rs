//! The three-stage localization pipeline: buggy-block identification from
//! scanned signatures, single-cycle (FF, cycle) candidate enumeration with
//! injection instrumentation, and neighbor-consistency filtering of
//! aliased candidates, plus the localization metrics report.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Instant;

use thiserror::Error;

use crate::bmc::{
    add_error_instrumentation, add_signature_constraints, block_ext_indices, block_sig_indices,
    extract_trace, solve, unroll, Backend, BlockConstraints, BlockTrace, BlockedCandidate,
    BmcError, CnfFormula, OneShotMode, SatOutcome, VarKey,
};
use crate::netlist::{ElaboratedDesign, FfId, SignalId};
use crate::partition::{BlockId, BlockRef, Partition, SignaturePlan};
use crate::signature::{windows_at, MisrSel, ScanSnapshot};
use crate::sim::ExternalTrace;

#[derive(Debug, Error)]
pub enum LocalizeError {
    #[error("scan snapshot has no entry for signature {0}")]
    MissingScanEntry(String),
    #[error("signature counters disagree: {0} vs {1} (skewed resets are unsupported)")]
    CounterMismatch(u64, u64),
    #[error("snapshot carries no signature entries")]
    EmptySnapshot,
    #[error("external trace is missing cycle {0}")]
    MissingTraceCycle(u64),
    #[error("block {0}: error model cannot explain the signatures (model mismatch)")]
    ModelMismatch(BlockId),
    #[error("block {0} satisfies its signatures without an injection; it is not buggy")]
    NotBuggy(BlockId),
    #[error(transparent)]
    Bmc(#[from] BmcError),
}

/// Candidate granularity: block rediscovery per FF (default) or keep every
/// (FF, cycle) pair (oracle-comparison mode).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CandidateMode {
    #[default]
    Ff,
    Pair,
}

#[derive(Debug, Clone)]
pub struct LocalizeConfig {
    pub backend: Backend,
    pub mode: CandidateMode,
    pub one_shot: OneShotMode,
    /// Leave block-internal initial state unconstrained (the deployed
    /// setting). Concrete-init mode is for oracle comparison.
    pub symbolic_init: bool,
    pub ncc: bool,
    /// NCC propagation depth; `None` runs to the clock-domain boundary,
    /// `Some(0)` disables filtering.
    pub depth_limit: Option<u32>,
    /// Re-check flagged blocks at the smaller capture window and report
    /// the narrowed window when still inconsistent.
    pub short_window_check: bool,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        LocalizeConfig {
            backend: Backend::Internal,
            mode: CandidateMode::Ff,
            one_shot: OneShotMode::Direct,
            symbolic_init: true,
            ncc: true,
            depth_limit: None,
            short_window_check: true,
        }
    }
}

/// Capture-window arithmetic for one detection instant.
#[derive(Debug, Clone, Copy)]
pub struct WindowInfo {
    /// Unroll depth: the larger captured window.
    pub t: u32,
    pub sel: MisrSel,
    /// Cycle index of frame 0.
    pub window_start: u64,
    pub detect_cycle: u64,
    /// The detection came before a full window was captured.
    pub short_window: bool,
    /// The smaller window and its MISR, for the narrowed re-check.
    pub t_small: u32,
    pub sel_small: MisrSel,
}

impl WindowInfo {
    /// Does the window cover an injection at `cycle` (one whose capture
    /// can still influence an in-window observation)?
    pub fn covers(&self, cycle: u64) -> bool {
        cycle >= self.window_start && cycle < self.detect_cycle
    }

    pub fn cycle_of_frame(&self, frame: u32) -> u64 {
        self.window_start + u64::from(frame)
    }
}

/// Derive the window from the scanned counters (all signature blocks share
/// one reset schedule, so the counters must agree) and the detection
/// cycle, clamping cold starts.
pub fn window_info(
    plan: &SignaturePlan,
    snapshot: &ScanSnapshot,
) -> Result<WindowInfo, LocalizeError> {
    let mut counters = snapshot.entries.iter().map(|e| e.counter);
    let counter = counters.next().ok_or(LocalizeError::EmptySnapshot)?;
    for c in counters {
        if c != counter {
            return Err(LocalizeError::CounterMismatch(counter, c));
        }
    }
    let steps = snapshot.detect_cycle + 1;
    let (w1, w2, t, sel, short) = windows_at(counter, plan.n, steps);
    let (t_small, sel_small) = if sel == MisrSel::Misr1 {
        (w2, MisrSel::Misr2)
    } else {
        (w1, MisrSel::Misr1)
    };
    Ok(WindowInfo {
        t: t as u32,
        sel,
        window_start: steps - t,
        detect_cycle: snapshot.detect_cycle,
        short_window: short,
        t_small: t_small as u32,
        sel_small,
    })
}

/// Per-frame pins of the externally traced signals of a block.
fn external_pins(
    design: &ElaboratedDesign,
    plan: &SignaturePlan,
    block: BlockId,
    t_frames: u32,
    window_start: u64,
    external: &ExternalTrace,
) -> Result<Vec<(SignalId, u32, bool)>, LocalizeError> {
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
    let mut pins = Vec::new();
    for ei in block_ext_indices(plan, block) {
        let iface = &plan.externals[ei];
        for t in 0..t_frames {
            let cycle = window_start + u64::from(t);
            let sample = external
                .at_cycle(cycle)
                .ok_or(LocalizeError::MissingTraceCycle(cycle))?;
            for &sig in &iface.signals {
                let value = if let Some(&i) = pi_index.get(&sig) {
                    sample.inputs[i]
                } else if let Some(&i) = po_index.get(&sig) {
                    sample.outputs[i]
                } else {
                    continue; // not a traced primary
                };
                pins.push((sig, t, value));
            }
        }
    }
    Ok(pins)
}

/// Unroll a block over the window and apply its signature and external
/// constraints.
#[allow(clippy::too_many_arguments)]
pub fn build_block_problem(
    design: &ElaboratedDesign,
    partition: &Partition,
    plan: &SignaturePlan,
    block: BlockId,
    t_frames: u32,
    sel: MisrSel,
    window_start: u64,
    snapshot: &ScanSnapshot,
    external: &ExternalTrace,
    symbolic_init: bool,
) -> Result<CnfFormula, LocalizeError> {
    let mut cnf = unroll(design, partition, plan, block, t_frames, symbolic_init)?;
    let mut constraints = BlockConstraints::default();
    for plan_idx in block_sig_indices(plan, partition, block) {
        let id = &plan.sigs[plan_idx as usize].interface.id;
        let entry = snapshot
            .entry(id)
            .ok_or_else(|| LocalizeError::MissingScanEntry(id.clone()))?;
        constraints
            .signatures
            .push((plan_idx, entry.selected(sel).clone()));
    }
    constraints.external = external_pins(design, plan, block, t_frames, window_start, external)?;
    add_signature_constraints(&mut cnf, plan, &constraints)?;
    Ok(cnf)
}

/// Stage-1 verdicts: which blocks are consistent with their signatures.
#[derive(Debug, Clone)]
pub struct BlockVerdicts {
    pub window: WindowInfo,
    /// (block, satisfiable) for every block, in id order.
    pub per_block: Vec<(BlockId, bool)>,
    /// Blocks whose signatures no error-free execution can explain.
    pub flagged: Vec<BlockId>,
    /// Flagged blocks also inconsistent at the smaller window T'.
    pub narrowed: Vec<(BlockId, u32)>,
}

/// Check every block's signature consistency; inconsistent (UNSAT) blocks
/// are the buggy candidates. Zero or several flagged blocks are reported,
/// not errors.
pub fn localize_block(
    design: &ElaboratedDesign,
    partition: &Partition,
    plan: &SignaturePlan,
    snapshot: &ScanSnapshot,
    external: &ExternalTrace,
    config: &LocalizeConfig,
) -> Result<BlockVerdicts, LocalizeError> {
    let window = window_info(plan, snapshot)?;
    let mut per_block = Vec::new();
    let mut flagged = Vec::new();
    let mut narrowed = Vec::new();
    for block in 0..partition.blocks.len() {
        let cnf = build_block_problem(
            design,
            partition,
            plan,
            block,
            window.t,
            window.sel,
            window.window_start,
            snapshot,
            external,
            config.symbolic_init,
        )?;
        let sat = solve(&cnf, &[], &config.backend)?.is_sat();
        per_block.push((block, sat));
        if !sat {
            flagged.push(block);
            if config.short_window_check && window.t_small >= 1 {
                let small_start = snapshot.detect_cycle + 1 - u64::from(window.t_small);
                let small = build_block_problem(
                    design,
                    partition,
                    plan,
                    block,
                    window.t_small,
                    window.sel_small,
                    small_start,
                    snapshot,
                    external,
                    config.symbolic_init,
                )?;
                if !solve(&small, &[], &config.backend)?.is_sat() {
                    narrowed.push((block, window.t_small));
                }
            }
        }
    }
    Ok(BlockVerdicts {
        window,
        per_block,
        flagged,
        narrowed,
    })
}

/// One enumerated error candidate.
#[derive(Debug, Clone)]
pub struct CandidateEntry {
    pub ff: FfId,
    pub frame: u32,
    pub cycle: u64,
    pub trace: BlockTrace,
}

/// The candidates of one buggy block.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub block: BlockId,
    pub mode: CandidateMode,
    pub entries: Vec<CandidateEntry>,
}

impl CandidateSet {
    pub fn distinct_ffs(&self) -> BTreeSet<FfId> {
        self.entries.iter().map(|e| e.ff).collect()
    }

    pub fn pairs(&self) -> BTreeSet<(FfId, u64)> {
        self.entries.iter().map(|e| (e.ff, e.cycle)).collect()
    }

    /// Distinct interface traces among the entries.
    pub fn distinct_traces(&self, plan: &SignaturePlan) -> usize {
        let set: BTreeSet<Vec<(SignalId, u32, bool)>> = self
            .entries
            .iter()
            .map(|e| e.trace.boundary_values(plan))
            .collect();
        set.len()
    }

    pub fn contains_pair(&self, ff: FfId, cycle: u64) -> bool {
        self.entries.iter().any(|e| e.ff == ff && e.cycle == cycle)
    }
}

/// Enumerate (FF, cycle) candidates for a flagged block: solve the
/// instrumented problem repeatedly, blocking each found candidate per the
/// configured granularity, until UNSAT.
#[allow(clippy::too_many_arguments)]
pub fn enumerate_candidates(
    design: &ElaboratedDesign,
    partition: &Partition,
    plan: &SignaturePlan,
    block: BlockId,
    window: &WindowInfo,
    snapshot: &ScanSnapshot,
    external: &ExternalTrace,
    config: &LocalizeConfig,
) -> Result<CandidateSet, LocalizeError> {
    let mut cnf = build_block_problem(
        design,
        partition,
        plan,
        block,
        window.t,
        window.sel,
        window.window_start,
        snapshot,
        external,
        config.symbolic_init,
    )?;
    add_error_instrumentation(&mut cnf, config.one_shot)?;

    let mut blocked: Vec<BlockedCandidate> = Vec::new();
    let mut entries = Vec::new();
    loop {
        match solve(&cnf, &blocked, &config.backend)? {
            SatOutcome::Unsat => break,
            SatOutcome::Sat(model) => {
                debug_assert!(cnf.check(&model));
                let trace = extract_trace(&cnf, plan, &model)?;
                let (ff, frame) = trace.injected.ok_or(LocalizeError::NotBuggy(block))?;
                entries.push(CandidateEntry {
                    ff,
                    frame,
                    cycle: window.cycle_of_frame(frame),
                    trace,
                });
                blocked.push(match config.mode {
                    CandidateMode::Ff => BlockedCandidate::Ff(ff),
                    CandidateMode::Pair => BlockedCandidate::Pair { ff, frame },
                });
            }
        }
    }
    if entries.is_empty() {
        return Err(LocalizeError::ModelMismatch(block));
    }
    Ok(CandidateSet {
        block,
        mode: config.mode,
        entries,
    })
}

/// Same-domain neighbor adjacency over signature interfaces.
fn neighbor_graph(
    plan: &SignaturePlan,
    partition: &Partition,
) -> BTreeMap<BlockId, BTreeSet<BlockId>> {
    let mut adj: BTreeMap<BlockId, BTreeSet<BlockId>> = BTreeMap::new();
    for s in &plan.sigs {
        let iface = &s.interface;
        let src = match iface.source {
            BlockRef::Block(b) => b,
            BlockRef::External => continue,
        };
        if partition.blocks[src].clock != iface.domain {
            continue; // receiver side of a crossing: a clock-domain boundary
        }
        for d in &iface.dests {
            if let BlockRef::Block(dst) = d {
                if *dst != src && partition.blocks[*dst].clock == iface.domain {
                    adj.entry(src).or_default().insert(*dst);
                    adj.entry(*dst).or_default().insert(src);
                }
            }
        }
    }
    adj
}

/// BFS depth of every block reachable from `root` in the neighbor graph.
fn block_depths(
    adj: &BTreeMap<BlockId, BTreeSet<BlockId>>,
    root: BlockId,
) -> BTreeMap<BlockId, u32> {
    let mut depth = BTreeMap::new();
    depth.insert(root, 0u32);
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(b) = queue.pop_front() {
        let d = depth[&b];
        if let Some(ns) = adj.get(&b) {
            for &n in ns {
                depth.entry(n).or_insert_with(|| {
                    queue.push_back(n);
                    d + 1
                });
            }
        }
    }
    depth
}

struct NccNode {
    block: BlockId,
    /// Base problem (unrolled + own constraints); ancestor pins and
    /// refuted valuations are applied per solve.
    base: CnfFormula,
    /// Boundary valuations refuted deeper in the search.
    blocked_valuations: Vec<Vec<(SignalId, u32, bool)>>,
    trace: BlockTrace,
}

fn pin_values(cnf: &mut CnfFormula, values: &[(SignalId, u32, bool)]) {
    for &(sig, frame, value) in values {
        if let Some(v) = cnf.varmap.lookup(&VarKey::Signal { sig, frame }) {
            let lit = v as i32;
            cnf.add_clause(vec![if value { lit } else { -lit }]);
        }
    }
}

fn block_valuation(cnf: &mut CnfFormula, valuation: &[(SignalId, u32, bool)]) {
    let clause: Vec<i32> = valuation
        .iter()
        .filter_map(|&(sig, frame, value)| {
            cnf.varmap
                .lookup(&VarKey::Signal { sig, frame })
                .map(|v| if value { -(v as i32) } else { v as i32 })
        })
        .collect();
    if !clause.is_empty() {
        cnf.add_clause(clause);
    }
}

fn solve_node(
    node: &NccNode,
    ancestor_pins: &[(SignalId, u32, bool)],
    forced: Option<(FfId, u32)>,
    plan: &SignaturePlan,
    backend: &Backend,
) -> Result<Option<BlockTrace>, LocalizeError> {
    let mut cnf = node.base.clone();
    pin_values(&mut cnf, ancestor_pins);
    if let Some((ff, frame)) = forced {
        let v = cnf
            .varmap
            .lookup(&VarKey::Select { ff, frame })
            .ok_or_else(|| BmcError::UnmappedVariable(format!("sel{ff}@{frame}")))?;
        cnf.add_clause(vec![v as i32]);
    }
    for val in &node.blocked_valuations {
        block_valuation(&mut cnf, val);
    }
    match solve(&cnf, &[], backend)? {
        SatOutcome::Sat(model) => Ok(Some(extract_trace(&cnf, plan, &model)?)),
        SatOutcome::Unsat => Ok(None),
    }
}

/// Result of the NCC stage, with search statistics.
#[derive(Debug, Clone)]
pub struct NccOutcome {
    pub survivors: CandidateSet,
    pub eliminated: usize,
    /// Neighbor-problem solve count.
    pub checks: usize,
}

/// Filter candidates by depth-first consistency propagation: a candidate's
/// trace pins the shared interface signals of each neighbor, which must
/// remain satisfiable under its own signatures (symbolic initial state);
/// consistent neighbors recurse outward to a clock-domain boundary or the
/// depth limit, and an inconsistency backtracks to the previously analyzed
/// block for an alternative trace (blocking its full boundary valuation).
/// A candidate survives iff some globally consistent set of traces exists.
#[allow(clippy::too_many_arguments)]
pub fn ncc_filter(
    design: &ElaboratedDesign,
    partition: &Partition,
    plan: &SignaturePlan,
    candidates: &CandidateSet,
    window: &WindowInfo,
    snapshot: &ScanSnapshot,
    external: &ExternalTrace,
    config: &LocalizeConfig,
) -> Result<NccOutcome, LocalizeError> {
    if config.depth_limit == Some(0) {
        return Ok(NccOutcome {
            survivors: candidates.clone(),
            eliminated: 0,
            checks: 0,
        });
    }
    let root_block = candidates.block;
    let adj = neighbor_graph(plan, partition);
    let depths = block_depths(&adj, root_block);
    let max_depth = config.depth_limit.unwrap_or(u32::MAX);

    // The root's instrumented base problem is shared by all candidates.
    let mut root_base = build_block_problem(
        design,
        partition,
        plan,
        root_block,
        window.t,
        window.sel,
        window.window_start,
        snapshot,
        external,
        config.symbolic_init,
    )?;
    add_error_instrumentation(&mut root_base, config.one_shot)?;

    let mut base_cache: HashMap<BlockId, CnfFormula> = HashMap::new();
    let mut survivors = Vec::new();
    let mut eliminated = 0usize;
    let mut checks = 0usize;

    'candidates: for entry in &candidates.entries {
        let forced = Some((entry.ff, entry.frame));
        let mut stack: Vec<NccNode> = vec![NccNode {
            block: root_block,
            base: root_base.clone(),
            blocked_valuations: Vec::new(),
            // start from the trace enumeration produced for this candidate
            trace: entry.trace.clone(),
        }];

        loop {
            // next unvisited neighbor (ascending id) within depth
            let fixed: BTreeSet<BlockId> = stack.iter().map(|n| n.block).collect();
            let next = stack
                .iter()
                .flat_map(|n| adj.get(&n.block).into_iter().flatten())
                .filter(|b| !fixed.contains(b))
                .filter(|b| depths.get(b).is_some_and(|&d| d <= max_depth))
                .min()
                .copied();

            let Some(nb) = next else {
                survivors.push(entry.clone()); // globally consistent
                continue 'candidates;
            };

            let base = match base_cache.get(&nb) {
                Some(b) => b.clone(),
                None => {
                    let b = build_block_problem(
                        design,
                        partition,
                        plan,
                        nb,
                        window.t,
                        window.sel,
                        window.window_start,
                        snapshot,
                        external,
                        config.symbolic_init,
                    )?;
                    base_cache.insert(nb, b.clone());
                    b
                }
            };
            let pins: Vec<(SignalId, u32, bool)> = stack
                .iter()
                .flat_map(|n| n.trace.boundary_values(plan))
                .collect();
            let node = NccNode {
                block: nb,
                base,
                blocked_valuations: Vec::new(),
                trace: entry.trace.clone(), // replaced on SAT
            };
            checks += 1;
            match solve_node(&node, &pins, None, plan, &config.backend)? {
                Some(trace) => {
                    stack.push(NccNode { trace, ..node });
                }
                None => {
                    // Backtrack: the previously analyzed block must produce
                    // a different trace; exhaust it and pop further.
                    loop {
                        let top_idx = stack.len() - 1;
                        let refuted = stack[top_idx].trace.boundary_values(plan);
                        stack[top_idx].blocked_valuations.push(refuted);
                        let ancestor_pins: Vec<(SignalId, u32, bool)> = stack[..top_idx]
                            .iter()
                            .flat_map(|n| n.trace.boundary_values(plan))
                            .collect();
                        let top_forced = if top_idx == 0 { forced } else { None };
                        checks += 1;
                        match solve_node(
                            &stack[top_idx],
                            &ancestor_pins,
                            top_forced,
                            plan,
                            &config.backend,
                        )? {
                            Some(trace) => {
                                stack[top_idx].trace = trace;
                                break;
                            }
                            None => {
                                if top_idx == 0 {
                                    // no trace of this candidate extends to a
                                    // globally consistent assignment
                                    eliminated += 1;
                                    continue 'candidates;
                                }
                                stack.pop();
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(NccOutcome {
        survivors: CandidateSet {
            block: root_block,
            mode: candidates.mode,
            entries: survivors,
        },
        eliminated,
        checks,
    })
}

/// Stage runtimes in milliseconds.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub locate_ms: u64,
    pub enumerate_ms: u64,
    pub ncc_ms: u64,
}

/// The final localization report.
#[derive(Debug, Clone)]
pub struct LocalizationReport {
    pub buggy_block: BlockId,
    pub flagged: Vec<BlockId>,
    pub narrowed: Vec<(BlockId, u32)>,
    pub t_frames: u32,
    pub short_window: bool,
    pub candidates_pre: usize,
    pub candidates_post: usize,
    pub ff_candidates_pre: usize,
    pub ff_candidates_post: usize,
    pub surviving_traces: usize,
    pub trace_bits: u64,
    /// Total design FFs over surviving candidate FFs; `None` when nothing
    /// survived (model mismatch).
    pub localization_factor: Option<f64>,
    pub timings: StageTimings,
}

/// Assemble the report from the pre- and post-NCC candidate sets.
pub fn compute_report(
    design: &ElaboratedDesign,
    plan: &SignaturePlan,
    verdicts: &BlockVerdicts,
    before: &CandidateSet,
    after: &CandidateSet,
    timings: StageTimings,
) -> LocalizationReport {
    let ff_post = after.distinct_ffs().len();
    LocalizationReport {
        buggy_block: before.block,
        flagged: verdicts.flagged.clone(),
        narrowed: verdicts.narrowed.clone(),
        t_frames: verdicts.window.t,
        short_window: verdicts.window.short_window,
        candidates_pre: before.entries.len(),
        candidates_post: after.entries.len(),
        ff_candidates_pre: before.distinct_ffs().len(),
        ff_candidates_post: ff_post,
        surviving_traces: after.distinct_traces(plan),
        trace_bits: after
            .entries
            .first()
            .or_else(|| before.entries.first())
            .map_or(0, |e| e.trace.bit_size()),
        localization_factor: (ff_post > 0).then(|| design.ff_count() as f64 / ff_post as f64),
        timings,
    }
}

/// Flat text rendering of the report plus one `candidate` line per
/// survivor.
pub fn write_report_file(
    report: &LocalizationReport,
    design: &ElaboratedDesign,
    after: &CandidateSet,
) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "report buggy_block={} t={} short_window={}\n",
        report.buggy_block,
        report.t_frames,
        u8::from(report.short_window)
    ));
    let flagged: Vec<String> = report.flagged.iter().map(|b| b.to_string()).collect();
    out.push_str(&format!("blocks flagged={}\n", flagged.join(",")));
    if !report.narrowed.is_empty() {
        let narrowed: Vec<String> = report
            .narrowed
            .iter()
            .map(|(b, t)| format!("{b}:{t}"))
            .collect();
        out.push_str(&format!("narrowed {}\n", narrowed.join(",")));
    }
    out.push_str(&format!(
        "candidates pre_pairs={} pre_ffs={} post_pairs={} post_ffs={}\n",
        report.candidates_pre,
        report.ff_candidates_pre,
        report.candidates_post,
        report.ff_candidates_post
    ));
    out.push_str(&format!(
        "traces post={} trace_bits={}\n",
        report.surviving_traces, report.trace_bits
    ));
    match report.localization_factor {
        Some(f) => out.push_str(&format!("factor {f}\n")),
        None => out.push_str("factor undefined (model mismatch)\n"),
    }
    out.push_str(&format!(
        "runtime locate_ms={} enum_ms={} ncc_ms={}\n",
        report.timings.locate_ms, report.timings.enumerate_ms, report.timings.ncc_ms
    ));
    for e in &after.entries {
        out.push_str(&format!(
            "candidate ff={} cycle={}\n",
            design.ffs[e.ff as usize].name, e.cycle
        ));
    }
    out
}

/// Per-frame hex rendering of one candidate trace (first-listed signal in
/// the least significant bit).
pub fn write_trace_file(trace: &BlockTrace, plan: &SignaturePlan) -> String {
    let mut out = String::new();
    for t in 0..trace.t_frames as usize {
        out.push_str(&format!("frame {t}"));
        for (plan_idx, frames) in &trace.ifaces {
            let id = &plan.sigs[*plan_idx as usize].interface.id;
            out.push_str(&format!(
                " {id}={}",
                crate::signature::bits_to_hex(&frames[t])
            ));
        }
        out.push('\n');
    }
    out
}

/// Everything one localization run produces.
#[derive(Debug, Clone)]
pub struct LocalizationRun {
    pub verdicts: BlockVerdicts,
    /// One (pre, post, report) triple per flagged block, processed
    /// independently.
    pub results: Vec<(CandidateSet, CandidateSet, LocalizationReport)>,
}

/// The full pipeline for one scan: flag blocks, enumerate candidates per
/// flagged block, filter by neighbor consistency, and report.
pub fn run_pipeline(
    design: &ElaboratedDesign,
    partition: &Partition,
    plan: &SignaturePlan,
    snapshot: &ScanSnapshot,
    external: &ExternalTrace,
    config: &LocalizeConfig,
) -> Result<LocalizationRun, LocalizeError> {
    let t0 = Instant::now();
    let verdicts = localize_block(design, partition, plan, snapshot, external, config)?;
    let locate_ms = t0.elapsed().as_millis() as u64;

    let mut results = Vec::new();
    for &block in &verdicts.flagged {
        let t1 = Instant::now();
        let before = enumerate_candidates(
            design,
            partition,
            plan,
            block,
            &verdicts.window,
            snapshot,
            external,
            config,
        )?;
        let enumerate_ms = t1.elapsed().as_millis() as u64;
        let t2 = Instant::now();
        let after = if config.ncc {
            ncc_filter(
                design,
                partition,
                plan,
                &before,
                &verdicts.window,
                snapshot,
                external,
                config,
            )?
            .survivors
        } else {
            before.clone()
        };
        let ncc_ms = t2.elapsed().as_millis() as u64;
        let report = compute_report(
            design,
            plan,
            &verdicts,
            &before,
            &after,
            StageTimings {
                locate_ms,
                enumerate_ms,
                ncc_ms,
            },
        );
        results.push((before, after, report));
    }
    Ok(LocalizationRun { verdicts, results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{elaborate, parse_netlist};
    use crate::partition::{group_interfaces, partition_design, plan_signatures, BMap};
    use crate::sim::{run, simulate, InjectionSpec, SimOptions, Stimulus};

    /// Three chained blocks a -> b -> c, plus primary I/O at both ends.
    fn chain_fixture() -> (ElaboratedDesign, Partition, SignaturePlan) {
        let text = "\
module stage
input i0
input i1
output o0
output o1
output dbg
gate n1 = XOR(i0,q1)
gate n2 = AND(i1,q0)
ff f0 init 0 d n1 q q0
ff f1 init 0 d n2 q q1
ff f2 init 0 d q0 q q2
gate m0 = XOR(q2,q1)
gate o0 = XOR(m0,i0)
gate m1 = OR(q0,q2)
gate x01 = XOR(i0,i1)
gate o1 = XOR(m1,x01)
gate dbg = XOR(q0,q2)
endmodule
module top
input pi0
input pi1
output po0
output po1
output d0
output d1
output d2
inst stage AS a bind (i0=pi0, i1=pi1, o0=w0, o1=w1, dbg=d0)
inst stage AS b bind (i0=w0, i1=w1, o0=x0, o1=x1, dbg=d1)
inst stage AS c bind (i0=x0, i1=x1, o0=po0, o1=po1, dbg=d2)
endmodule
";
        let design = elaborate(&parse_netlist(text).unwrap(), "top").unwrap();
        let partition = partition_design(&design, 12);
        assert_eq!(partition.blocks.len(), 3);
        let ifaces = group_interfaces(&design, &partition);
        let plan = plan_signatures(&design, &ifaces, &BMap::uniform(16), 8, 12).unwrap();
        (design, partition, plan)
    }

    fn detected_run(
        design: &ElaboratedDesign,
        plan: &SignaturePlan,
        seed: u64,
        cycles: u64,
        ff_path: &str,
        cycle: u64,
    ) -> crate::sim::SimResult {
        let stim = Stimulus::Seeded { seed, cycles };
        let golden = simulate(design, plan, &stim, &SimOptions::default()).unwrap();
        let opts = SimOptions {
            injection: Some(InjectionSpec {
                ff_path: ff_path.into(),
                cycle,
            }),
            ..SimOptions::default()
        };
        run(design, plan, &stim, &opts, Some(&golden.monitor_trace)).unwrap()
    }

    #[test]
    fn golden_snapshot_flags_nothing() {
        let (design, partition, plan) = chain_fixture();
        let stim = Stimulus::Seeded { seed: 4, cycles: 40 };
        let golden = simulate(&design, &plan, &stim, &SimOptions::default()).unwrap();
        let cfg = LocalizeConfig::default();
        let verdicts = localize_block(
            &design,
            &partition,
            &plan,
            &golden.snapshot,
            &golden.external,
            &cfg,
        )
        .unwrap();
        assert!(verdicts.flagged.is_empty(), "flagged: {:?}", verdicts.flagged);
        assert!(verdicts.per_block.iter().all(|&(_, sat)| sat));
    }

    #[test]
    fn injection_flags_only_the_buggy_block() {
        let (design, partition, plan) = chain_fixture();
        let actual = detected_run(&design, &plan, 7, 40, "top.b.f1", 10);
        assert!(actual.detection_cycle.is_some());
        let cfg = LocalizeConfig::default();
        let verdicts = localize_block(
            &design,
            &partition,
            &plan,
            &actual.snapshot,
            &actual.external,
            &cfg,
        )
        .unwrap();
        let buggy = design.ff_by_name("top.b.f1").unwrap();
        let truth = partition.ff_block[buggy as usize];
        assert_eq!(verdicts.flagged, vec![truth]);
    }

    #[test]
    fn ground_truth_pair_is_enumerated_and_survives_ncc() {
        let (design, partition, plan) = chain_fixture();
        let inject_cycle = 9;
        let actual = detected_run(&design, &plan, 13, 40, "top.b.f0", inject_cycle);
        let cfg = LocalizeConfig {
            mode: CandidateMode::Pair,
            ..LocalizeConfig::default()
        };
        let pipeline = run_pipeline(
            &design,
            &partition,
            &plan,
            &actual.snapshot,
            &actual.external,
            &cfg,
        )
        .unwrap();
        let ff = design.ff_by_name("top.b.f0").unwrap();
        let truth = partition.ff_block[ff as usize];
        assert_eq!(pipeline.verdicts.flagged, vec![truth]);
        let (before, after, report) = &pipeline.results[0];
        assert!(pipeline.verdicts.window.covers(inject_cycle));
        assert!(before.contains_pair(ff, inject_cycle), "truth not enumerated");
        assert!(after.contains_pair(ff, inject_cycle), "truth filtered by NCC");
        // NCC monotonicity
        assert!(after.pairs().is_subset(&before.pairs()));
        assert_eq!(report.buggy_block, truth);
        let factor = report.localization_factor.unwrap();
        assert!((factor - design.ff_count() as f64 / report.ff_candidates_post as f64).abs() < 1e-12);
    }

    #[test]
    fn depth_zero_disables_filtering() {
        let (design, partition, plan) = chain_fixture();
        let actual = detected_run(&design, &plan, 21, 40, "top.c.f2", 11);
        let cfg = LocalizeConfig {
            mode: CandidateMode::Pair,
            depth_limit: Some(0),
            ..LocalizeConfig::default()
        };
        let pipeline = run_pipeline(
            &design,
            &partition,
            &plan,
            &actual.snapshot,
            &actual.external,
            &cfg,
        )
        .unwrap();
        let (before, after, _) = &pipeline.results[0];
        assert_eq!(before.pairs(), after.pairs());
    }

// scratch probe appended to localize tests
    #[test]
    fn debug_probe() {
        let (design, partition, plan) = chain_fixture();
        let mut bad = 0;
        let mut total = 0;
        for seed in [7u64, 13, 21, 33] {
            for ff in ["top.a.f0", "top.a.f1", "top.b.f0", "top.b.f1", "top.b.f2", "top.c.f0", "top.c.f2"] {
                for cycle in [6u64, 9, 12] {
                    let actual = detected_run(&design, &plan, seed, 40, ff, cycle);
                    let Some(det) = actual.detection_cycle else { continue };
                    let cfg = LocalizeConfig { mode: CandidateMode::Pair, ..LocalizeConfig::default() };
                    let v = localize_block(&design, &partition, &plan, &actual.snapshot, &actual.external, &cfg).unwrap();
                    let truth = partition.ff_block[design.ff_by_name(ff).unwrap() as usize];
                    total += 1;
                    if v.flagged != vec![truth] {
                        bad += 1;
                        eprintln!("BAD {seed} {ff}@{cycle}: det={det} flagged={:?} truth={truth}", v.flagged);
                    }
                }
            }
        }
        eprintln!("bad={bad}/{total}");
    }

    #[test]
    fn report_file_mirrors_the_report() {
        let (design, partition, plan) = chain_fixture();
        let actual = detected_run(&design, &plan, 3, 40, "top.a.f2", 12);
        let cfg = LocalizeConfig {
            mode: CandidateMode::Pair,
            ..LocalizeConfig::default()
        };
        let pipeline = run_pipeline(
            &design,
            &partition,
            &plan,
            &actual.snapshot,
            &actual.external,
            &cfg,
        )
        .unwrap();
        let (_, after, report) = &pipeline.results[0];
        let text = write_report_file(report, &design, after);
        assert!(text.contains(&format!("report buggy_block={}", report.buggy_block)));
        assert!(text.lines().filter(|l| l.starts_with("candidate ")).count() == after.entries.len());
        let trace = write_trace_file(&after.entries[0].trace, &plan);
        assert_eq!(trace.lines().count(), report.t_frames as usize);
    }
}
