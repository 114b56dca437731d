//! Splitting a design into checker-sized blocks, grouping boundary signals
//! into interfaces, and planning one dual-MISR signature block per
//! interface.
//!
//! Partitioning descends the hierarchy: a node whose subtree cost
//! (gates + FFs) fits the budget and uses a single clock domain becomes one
//! block; otherwise its children are partitioned and the node's own glue
//! logic joins the smallest resulting block. Leaves that cannot fit are
//! emitted flagged.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::netlist::{Driver, ElaboratedDesign, FfId, GateId, SignalId};
use crate::signature::{ceil_log2, taps_for, MisrConfig};

pub type BlockId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("interface {0} has no signals (M = 0)")]
    EmptyInterface(String),
    #[error("extra interface {id}: {msg}")]
    BadExtra { id: String, msg: String },
    #[error("plan file line {line}: {msg}")]
    PlanFormat { line: usize, msg: String },
    #[error("capture window N must be at least 2, got {0}")]
    BadWindow(u64),
    #[error("b parameter must be at least 1")]
    BadB,
}

/// One partition block: a disjoint set of gates and flip-flops in a single
/// clock domain.
#[derive(Debug, Clone)]
pub struct DesignBlock {
    pub id: BlockId,
    /// Hierarchy path this block was emitted from (plus any glue merged in).
    pub root_path: String,
    pub gates: Vec<GateId>,
    pub ffs: Vec<FfId>,
    pub clock: String,
    /// gate count + FF count, the stand-in for formal-tool capacity.
    pub cost: usize,
    /// True when the block exceeds the budget but could not be split.
    pub flagged: bool,
}

/// Either a partition block or the world outside the chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BlockRef {
    External,
    Block(BlockId),
}

impl fmt::Display for BlockRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockRef::External => write!(f, "EXTERNAL"),
            BlockRef::Block(id) => write!(f, "{id}"),
        }
    }
}

/// Which side of a clock-domain crossing an interface observes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IfaceSide {
    Sender,
    Receiver,
}

/// A group of boundary signals sharing source block and destination set.
/// External interfaces (primary I/O) are traced rather than signatured.
#[derive(Debug, Clone)]
pub struct Interface {
    pub id: String,
    pub source: BlockRef,
    pub dests: BTreeSet<BlockRef>,
    /// Ordered signal list; position j feeds MISR input j+1.
    pub signals: Vec<SignalId>,
    pub domain: String,
    pub side: IfaceSide,
    pub external: bool,
}

impl Interface {
    pub fn m(&self) -> usize {
        self.signals.len()
    }

    /// True if `block` reads or drives this interface.
    pub fn touches(&self, block: BlockId) -> bool {
        self.source == BlockRef::Block(block) || self.dests.contains(&BlockRef::Block(block))
    }
}

/// The partition of a design, with per-element block lookup.
#[derive(Debug, Clone)]
pub struct Partition {
    pub blocks: Vec<DesignBlock>,
    pub gate_block: Vec<BlockId>,
    pub ff_block: Vec<BlockId>,
}

impl Partition {
    pub fn signal_block(&self, design: &ElaboratedDesign, sig: SignalId) -> BlockRef {
        match design.drivers[sig as usize] {
            Driver::PrimaryInput => BlockRef::External,
            Driver::Gate(g) => BlockRef::Block(self.gate_block[g as usize]),
            Driver::Ff(f) => BlockRef::Block(self.ff_block[f as usize]),
        }
    }
}

struct Descent<'a> {
    design: &'a ElaboratedDesign,
    budget: usize,
    subtree_cost: Vec<usize>,
    subtree_domains: Vec<BTreeSet<String>>,
    blocks: Vec<DesignBlock>,
}

impl<'a> Descent<'a> {
    fn measure(&mut self, node: usize) {
        let children = self.design.hierarchy[node].children.clone();
        let mut cost =
            self.design.hierarchy[node].gates.len() + self.design.hierarchy[node].ffs.len();
        let mut domains: BTreeSet<String> =
            [self.design.hierarchy[node].clock.clone()].into_iter().collect();
        for &c in &children {
            self.measure(c);
            cost += self.subtree_cost[c];
            domains.extend(self.subtree_domains[c].iter().cloned());
        }
        self.subtree_cost[node] = cost;
        self.subtree_domains[node] = domains;
    }

    fn collect_subtree(&self, node: usize, gates: &mut Vec<GateId>, ffs: &mut Vec<FfId>) {
        let n = &self.design.hierarchy[node];
        gates.extend(&n.gates);
        ffs.extend(&n.ffs);
        for &c in &n.children {
            self.collect_subtree(c, gates, ffs);
        }
    }

    fn emit(&mut self, node: usize, flagged: bool) {
        let mut gates = Vec::new();
        let mut ffs = Vec::new();
        self.collect_subtree(node, &mut gates, &mut ffs);
        let n = &self.design.hierarchy[node];
        let id = self.blocks.len();
        self.blocks.push(DesignBlock {
            id,
            root_path: n.path.clone(),
            cost: gates.len() + ffs.len(),
            gates,
            ffs,
            clock: n.clock.clone(),
            flagged,
        });
    }

    /// Returns the ids of the blocks produced under `node`.
    fn descend(&mut self, node: usize) -> Vec<BlockId> {
        let fits = self.subtree_cost[node] <= self.budget;
        let single_domain = self.subtree_domains[node].len() == 1;
        let children = self.design.hierarchy[node].children.clone();
        if (fits && single_domain) || children.is_empty() {
            let flagged = !fits;
            self.emit(node, flagged);
            return vec![self.blocks.len() - 1];
        }

        let mut produced = Vec::new();
        for &c in &children {
            produced.extend(self.descend(c));
        }

        // Node-local glue joins the smallest produced block in the node's
        // own clock domain; if none exists the glue stands alone.
        let own_gates = self.design.hierarchy[node].gates.clone();
        let own_ffs = self.design.hierarchy[node].ffs.clone();
        if !own_gates.is_empty() || !own_ffs.is_empty() {
            let node_clock = self.design.hierarchy[node].clock.clone();
            let target = produced
                .iter()
                .copied()
                .filter(|&b| self.blocks[b].clock == node_clock)
                .min_by_key(|&b| (self.blocks[b].cost, b));
            match target {
                Some(b) => {
                    let blk = &mut self.blocks[b];
                    blk.gates.extend(&own_gates);
                    blk.ffs.extend(&own_ffs);
                    blk.cost = blk.gates.len() + blk.ffs.len();
                    if blk.cost > self.budget {
                        blk.flagged = true;
                    }
                }
                None => {
                    let id = self.blocks.len();
                    let n = &self.design.hierarchy[node];
                    self.blocks.push(DesignBlock {
                        id,
                        root_path: format!("{}:glue", n.path),
                        cost: own_gates.len() + own_ffs.len(),
                        gates: own_gates,
                        ffs: own_ffs,
                        clock: node_clock,
                        flagged: false,
                    });
                    produced.push(id);
                }
            }
        }
        produced
    }
}

/// Partition the design by recursive descent over the hierarchy tree.
/// Never fails; oversized leaves come back flagged.
pub fn partition_design(design: &ElaboratedDesign, budget: usize) -> Partition {
    assert!(budget > 0, "budget must be positive");
    let n = design.hierarchy.len();
    let mut d = Descent {
        design,
        budget,
        subtree_cost: vec![0; n],
        subtree_domains: vec![BTreeSet::new(); n],
        blocks: Vec::new(),
    };
    d.measure(0);
    d.descend(0);

    let mut gate_block = vec![usize::MAX; design.gates.len()];
    let mut ff_block = vec![usize::MAX; design.ffs.len()];
    for b in &d.blocks {
        for &g in &b.gates {
            gate_block[g as usize] = b.id;
        }
        for &f in &b.ffs {
            ff_block[f as usize] = b.id;
        }
    }
    debug_assert!(gate_block.iter().all(|&b| b != usize::MAX));
    debug_assert!(ff_block.iter().all(|&b| b != usize::MAX));

    Partition {
        blocks: d.blocks,
        gate_block,
        ff_block,
    }
}

fn block_domain(partition: &Partition, b: BlockRef) -> Option<&str> {
    match b {
        BlockRef::External => None,
        BlockRef::Block(id) => Some(&partition.blocks[id].clock),
    }
}

/// Group every block-boundary signal into interfaces.
///
/// * Signals sharing (source block, destination block set) form one
///   interface in the source's clock domain.
/// * When a destination sits in a different clock domain, the signals
///   additionally get a receiver-side interface in the receiver's domain,
///   so each domain observes the crossing with its own signature block.
/// * Primary inputs group into EXTERNAL-source interfaces; primary outputs
///   into EXTERNAL-destination interfaces. Both are traced, not signatured.
pub fn group_interfaces(design: &ElaboratedDesign, partition: &Partition) -> Vec<Interface> {
    // signal -> blocks that read it
    let mut readers: HashMap<SignalId, BTreeSet<BlockId>> = HashMap::new();
    for (gid, gate) in design.gates.iter().enumerate() {
        let b = partition.gate_block[gid];
        for &inp in &gate.inputs {
            readers.entry(inp).or_default().insert(b);
        }
    }
    for (fid, ff) in design.ffs.iter().enumerate() {
        let b = partition.ff_block[fid];
        readers.entry(ff.data_in).or_default().insert(b);
    }
    let po_set: HashSet<SignalId> = design.primary_outputs.iter().copied().collect();

    // Grouping keys, kept ordered for deterministic ids.
    let mut sig_groups: BTreeMap<(BlockRef, BTreeSet<BlockRef>), Vec<SignalId>> = BTreeMap::new();
    let mut recv_groups: BTreeMap<(BlockId, BlockId), Vec<SignalId>> = BTreeMap::new();
    let mut pi_groups: BTreeMap<BTreeSet<BlockRef>, Vec<SignalId>> = BTreeMap::new();
    let mut po_groups: BTreeMap<BlockRef, Vec<SignalId>> = BTreeMap::new();

    for sig in 0..design.signal_count() as SignalId {
        let src = partition.signal_block(design, sig);
        let mut dests: BTreeSet<BlockRef> = readers
            .get(&sig)
            .map(|bs| {
                bs.iter()
                    .map(|&b| BlockRef::Block(b))
                    .filter(|&b| b != src)
                    .collect()
            })
            .unwrap_or_default();
        let is_po = po_set.contains(&sig);

        match src {
            BlockRef::External => {
                if dests.is_empty() && !is_po {
                    continue;
                }
                if is_po {
                    dests.insert(BlockRef::External);
                }
                pi_groups.entry(dests).or_default().push(sig);
            }
            BlockRef::Block(src_id) => {
                if is_po {
                    po_groups.entry(src).or_default().push(sig);
                }
                if dests.is_empty() {
                    continue;
                }
                sig_groups.entry((src, dests.clone())).or_default().push(sig);
                let src_dom = partition.blocks[src_id].clock.clone();
                for d in dests {
                    if let BlockRef::Block(dst_id) = d {
                        if partition.blocks[dst_id].clock != src_dom {
                            recv_groups.entry((src_id, dst_id)).or_default().push(sig);
                        }
                    }
                }
            }
        }
    }

    let mut out = Vec::new();
    let mut next_sig = 0usize;
    let mut next_ext = 0usize;

    for ((src, dests), mut signals) in sig_groups {
        signals.sort_unstable();
        let domain = block_domain(partition, src).unwrap().to_string();
        out.push(Interface {
            id: format!("s{next_sig}"),
            source: src,
            dests,
            signals,
            domain,
            side: IfaceSide::Sender,
            external: false,
        });
        next_sig += 1;
    }
    for ((src, dst), mut signals) in recv_groups {
        signals.sort_unstable();
        out.push(Interface {
            id: format!("s{next_sig}"),
            source: BlockRef::Block(src),
            dests: [BlockRef::Block(dst)].into_iter().collect(),
            signals,
            domain: partition.blocks[dst].clock.clone(),
            side: IfaceSide::Receiver,
            external: false,
        });
        next_sig += 1;
    }
    for (dests, mut signals) in pi_groups {
        signals.sort_unstable();
        // Domain label is informational for external interfaces; use the
        // first destination block's domain when there is one.
        let domain = dests
            .iter()
            .find_map(|&d| block_domain(partition, d))
            .unwrap_or("clk")
            .to_string();
        out.push(Interface {
            id: format!("e{next_ext}"),
            source: BlockRef::External,
            dests,
            signals,
            domain,
            side: IfaceSide::Sender,
            external: true,
        });
        next_ext += 1;
    }
    for (src, mut signals) in po_groups {
        signals.sort_unstable();
        let domain = block_domain(partition, src).unwrap().to_string();
        out.push(Interface {
            id: format!("e{next_ext}"),
            source: src,
            dests: [BlockRef::External].into_iter().collect(),
            signals,
            domain,
            side: IfaceSide::Sender,
            external: true,
        });
        next_ext += 1;
    }
    out
}

/// Build a designer-specified extra interface over named signals (for
/// example around a memory-like subcircuit). Source is the block driving
/// the signals; destination defaults to the reading blocks (or the source
/// itself for purely internal observation points).
pub fn build_extra_interface(
    design: &ElaboratedDesign,
    partition: &Partition,
    id: &str,
    signal_names: &[String],
) -> Result<Interface, PlanError> {
    if signal_names.is_empty() {
        return Err(PlanError::EmptyInterface(id.to_string()));
    }
    let mut signals = Vec::new();
    for name in signal_names {
        let sig = design.signal_id(name).ok_or_else(|| PlanError::BadExtra {
            id: id.to_string(),
            msg: format!("unknown signal {name}"),
        })?;
        signals.push(sig);
    }
    let src = partition.signal_block(design, signals[0]);
    for &s in &signals[1..] {
        if partition.signal_block(design, s) != src {
            return Err(PlanError::BadExtra {
                id: id.to_string(),
                msg: "signals span multiple source blocks".to_string(),
            });
        }
    }
    let src_id = match src {
        BlockRef::Block(b) => b,
        BlockRef::External => {
            return Err(PlanError::BadExtra {
                id: id.to_string(),
                msg: "extra interfaces must observe block-driven signals".to_string(),
            })
        }
    };

    let mut readers: BTreeSet<BlockRef> = BTreeSet::new();
    for (gid, gate) in design.gates.iter().enumerate() {
        if gate.inputs.iter().any(|i| signals.contains(i)) {
            readers.insert(BlockRef::Block(partition.gate_block[gid]));
        }
    }
    for (fid, ff) in design.ffs.iter().enumerate() {
        if signals.contains(&ff.data_in) {
            readers.insert(BlockRef::Block(partition.ff_block[fid]));
        }
    }
    if readers.is_empty() {
        readers.insert(src);
    }

    Ok(Interface {
        id: id.to_string(),
        source: src,
        dests: readers,
        signals,
        domain: partition.blocks[src_id].clock.clone(),
        side: IfaceSide::Sender,
        external: false,
    })
}

/// Per-region MISR width parameter: bits of signature per interface signal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BMap {
    pub default: u32,
    pub overrides: BTreeMap<BlockId, u32>,
}

impl BMap {
    pub fn uniform(b: u32) -> Self {
        BMap {
            default: b,
            overrides: BTreeMap::new(),
        }
    }

    pub fn for_block(&self, b: BlockId) -> u32 {
        self.overrides.get(&b).copied().unwrap_or(self.default)
    }

    /// The b governing an interface: the sender's region, or the
    /// receiver's for a receiver-side crossing.
    pub fn for_interface(&self, iface: &Interface) -> u32 {
        let region = match (iface.side, iface.source) {
            (IfaceSide::Receiver, _) => match iface.dests.iter().next() {
                Some(BlockRef::Block(b)) => Some(*b),
                _ => None,
            },
            (IfaceSide::Sender, BlockRef::Block(b)) => Some(b),
            _ => None,
        };
        region.map_or(self.default, |b| self.for_block(b))
    }
}

/// One planned signature block.
#[derive(Debug, Clone)]
pub struct PlannedSignature {
    pub interface: Interface,
    pub config: MisrConfig,
}

/// The full instrumentation plan: signature blocks plus the externally
/// traced interfaces, with the capture-window parameters.
#[derive(Debug, Clone)]
pub struct SignaturePlan {
    pub top: String,
    pub n: u64,
    pub c_width: u32,
    pub budget: usize,
    pub b_default: u32,
    pub sigs: Vec<PlannedSignature>,
    pub externals: Vec<Interface>,
}

impl SignaturePlan {
    pub fn sig(&self, id: &str) -> Option<&PlannedSignature> {
        self.sigs.iter().find(|s| s.interface.id == id)
    }

    /// Signature-block flip-flop count: 2K MISR bits plus the C-bit
    /// counter per block.
    pub fn added_ffs(&self) -> u64 {
        self.sigs
            .iter()
            .map(|s| 2 * s.config.k as u64 + u64::from(self.c_width))
            .sum()
    }

    /// Added FFs divided by the design's own FF count.
    pub fn area_proxy(&self, design_ffs: usize) -> f64 {
        self.added_ffs() as f64 / design_ffs as f64
    }
}

/// Size one MISR per interface: K = max(M*b, ceil(log2 N) + 1), taps from
/// the maximal-length table, counter width C = ceil(log2 2N).
pub fn plan_signatures(
    design: &ElaboratedDesign,
    interfaces: &[Interface],
    b_map: &BMap,
    n: u64,
    budget: usize,
) -> Result<SignaturePlan, PlanError> {
    if n < 2 {
        return Err(PlanError::BadWindow(n));
    }
    if b_map.default < 1 || b_map.overrides.values().any(|&b| b < 1) {
        return Err(PlanError::BadB);
    }
    let floor = ceil_log2(n) as usize + 1;
    let mut sigs = Vec::new();
    let mut externals = Vec::new();
    for iface in interfaces {
        if iface.external {
            externals.push(iface.clone());
            continue;
        }
        let m = iface.m();
        if m == 0 {
            return Err(PlanError::EmptyInterface(iface.id.clone()));
        }
        let b = b_map.for_interface(iface) as usize;
        let k = (m * b).max(floor);
        sigs.push(PlannedSignature {
            interface: iface.clone(),
            config: MisrConfig::new(k, m, taps_for(k)),
        });
    }
    Ok(SignaturePlan {
        top: design.top.clone(),
        n,
        c_width: ceil_log2(2 * n),
        budget,
        b_default: b_map.default,
        sigs,
        externals,
    })
}

/// Serialize the plan. One `sig` line per signature block
/// (`sig <id> block_src=.. block_dst=.. M=.. K=.. taps=.. N=.. C=.. signals=..`),
/// one `ext` line per traced external interface, and a header carrying the
/// partition budget so the block list can be re-derived from the netlist.
pub fn write_plan_file(plan: &SignaturePlan, design: &ElaboratedDesign) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "plan top={} N={} budget={} b={}\n",
        plan.top, plan.n, plan.budget, plan.b_default
    ));
    let join_refs = |dests: &BTreeSet<BlockRef>| {
        dests
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let join_signals = |signals: &[SignalId]| {
        signals
            .iter()
            .map(|&s| design.signal_name(s).to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    for s in &plan.sigs {
        let taps: Vec<String> = s.config.taps.iter().map(|t| t.to_string()).collect();
        out.push_str(&format!(
            "sig {} block_src={} block_dst={} M={} K={} taps={} N={} C={} signals={}\n",
            s.interface.id,
            s.interface.source,
            join_refs(&s.interface.dests),
            s.config.m,
            s.config.k,
            taps.join(","),
            plan.n,
            plan.c_width,
            join_signals(&s.interface.signals)
        ));
    }
    for e in &plan.externals {
        out.push_str(&format!(
            "ext {} block_src={} block_dst={} M={} signals={}\n",
            e.id,
            e.source,
            join_refs(&e.dests),
            e.m(),
            join_signals(&e.signals)
        ));
    }
    out
}

fn parse_block_ref(tok: &str, line: usize) -> Result<BlockRef, PlanError> {
    if tok == "EXTERNAL" {
        Ok(BlockRef::External)
    } else {
        tok.parse()
            .map(BlockRef::Block)
            .map_err(|_| PlanError::PlanFormat {
                line,
                msg: format!("bad block reference `{tok}`"),
            })
    }
}

/// Parse a plan file against its design. The partition is recomputed from
/// the recorded budget (partitioning is deterministic). Interface domains
/// are re-derived from block domains: when a crossing produces two
/// identically-keyed `sig` lines, the first is the sender side.
pub fn read_plan_file(
    text: &str,
    design: &ElaboratedDesign,
) -> Result<(SignaturePlan, Partition), PlanError> {
    let mut header: Option<(String, u64, usize, u32)> = None;
    struct SigLine {
        id: String,
        src: BlockRef,
        dests: BTreeSet<BlockRef>,
        m: usize,
        k: usize,
        taps: BTreeSet<usize>,
        signals: Vec<SignalId>,
        line: usize,
    }
    let mut sig_lines: Vec<SigLine> = Vec::new();
    let mut ext_lines: Vec<(String, BlockRef, BTreeSet<BlockRef>, Vec<SignalId>)> = Vec::new();

    let take = |tok: Option<&str>, key: &str, line: usize| -> Result<String, PlanError> {
        let tok = tok.ok_or_else(|| PlanError::PlanFormat {
            line,
            msg: format!("missing {key}"),
        })?;
        tok.strip_prefix(&format!("{key}="))
            .map(str::to_string)
            .ok_or_else(|| PlanError::PlanFormat {
                line,
                msg: format!("expected {key}=..., got `{tok}`"),
            })
    };
    let parse_num = |s: &str, line: usize| -> Result<u64, PlanError> {
        s.parse().map_err(|_| PlanError::PlanFormat {
            line,
            msg: format!("bad number `{s}`"),
        })
    };
    let resolve_signals = |csv: &str, line: usize| -> Result<Vec<SignalId>, PlanError> {
        csv.split(',')
            .map(|name| {
                design.signal_id(name).ok_or_else(|| PlanError::PlanFormat {
                    line,
                    msg: format!("unknown signal {name}"),
                })
            })
            .collect()
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let mut toks = content.split_whitespace();
        match toks.next().unwrap() {
            "plan" => {
                let top = take(toks.next(), "top", line)?;
                let n = parse_num(&take(toks.next(), "N", line)?, line)?;
                let budget = parse_num(&take(toks.next(), "budget", line)?, line)? as usize;
                let b = parse_num(&take(toks.next(), "b", line)?, line)? as u32;
                header = Some((top, n, budget, b));
            }
            "sig" => {
                let id = toks.next().ok_or_else(|| PlanError::PlanFormat {
                    line,
                    msg: "missing id".into(),
                })?;
                let src = parse_block_ref(&take(toks.next(), "block_src", line)?, line)?;
                let dests = take(toks.next(), "block_dst", line)?
                    .split(',')
                    .map(|t| parse_block_ref(t, line))
                    .collect::<Result<BTreeSet<_>, _>>()?;
                let m = parse_num(&take(toks.next(), "M", line)?, line)? as usize;
                let k = parse_num(&take(toks.next(), "K", line)?, line)? as usize;
                let taps = take(toks.next(), "taps", line)?
                    .split(',')
                    .map(|t| parse_num(t, line).map(|v| v as usize))
                    .collect::<Result<BTreeSet<_>, _>>()?;
                let _n = parse_num(&take(toks.next(), "N", line)?, line)?;
                let _c = parse_num(&take(toks.next(), "C", line)?, line)?;
                let signals = resolve_signals(&take(toks.next(), "signals", line)?, line)?;
                if signals.len() != m {
                    return Err(PlanError::PlanFormat {
                        line,
                        msg: format!("M={m} but {} signals listed", signals.len()),
                    });
                }
                sig_lines.push(SigLine {
                    id: id.to_string(),
                    src,
                    dests,
                    m,
                    k,
                    taps,
                    signals,
                    line,
                });
            }
            "ext" => {
                let id = toks.next().ok_or_else(|| PlanError::PlanFormat {
                    line,
                    msg: "missing id".into(),
                })?;
                let src = parse_block_ref(&take(toks.next(), "block_src", line)?, line)?;
                let dests = take(toks.next(), "block_dst", line)?
                    .split(',')
                    .map(|t| parse_block_ref(t, line))
                    .collect::<Result<BTreeSet<_>, _>>()?;
                let _m = take(toks.next(), "M", line)?;
                let signals = resolve_signals(&take(toks.next(), "signals", line)?, line)?;
                ext_lines.push((id.to_string(), src, dests, signals));
            }
            other => {
                return Err(PlanError::PlanFormat {
                    line,
                    msg: format!("unknown line `{other}`"),
                })
            }
        }
    }

    let (top, n, budget, b_default) = header.ok_or(PlanError::PlanFormat {
        line: 0,
        msg: "missing plan header".into(),
    })?;
    let partition = partition_design(design, budget);

    let domain_of = |r: BlockRef| -> Option<String> {
        match r {
            BlockRef::Block(id) => partition.blocks.get(id).map(|b| b.clock.clone()),
            BlockRef::External => None,
        }
    };

    let mut seen: HashMap<(BlockRef, Vec<BlockRef>, Vec<SignalId>), usize> = HashMap::new();
    let mut sigs = Vec::new();
    for sl in sig_lines {
        let key = (
            sl.src,
            sl.dests.iter().copied().collect::<Vec<_>>(),
            sl.signals.clone(),
        );
        let occurrence = seen.entry(key).or_insert(0);
        *occurrence += 1;
        let src_dom = domain_of(sl.src).ok_or_else(|| PlanError::PlanFormat {
            line: sl.line,
            msg: "signature interface with EXTERNAL source".into(),
        })?;
        let dst_dom = sl.dests.iter().find_map(|&d| domain_of(d));
        let (domain, side) = if *occurrence == 2 {
            (
                dst_dom.unwrap_or_else(|| src_dom.clone()),
                IfaceSide::Receiver,
            )
        } else {
            (src_dom, IfaceSide::Sender)
        };
        sigs.push(PlannedSignature {
            interface: Interface {
                id: sl.id,
                source: sl.src,
                dests: sl.dests,
                signals: sl.signals,
                domain,
                side,
                external: false,
            },
            config: MisrConfig::new(sl.k, sl.m, sl.taps),
        });
    }

    let externals = ext_lines
        .into_iter()
        .map(|(id, src, dests, signals)| Interface {
            domain: domain_of(src)
                .or_else(|| dests.iter().find_map(|&d| domain_of(d)))
                .unwrap_or_else(|| "clk".to_string()),
            id,
            source: src,
            dests,
            signals,
            side: IfaceSide::Sender,
            external: true,
        })
        .collect();

    Ok((
        SignaturePlan {
            top,
            n,
            c_width: ceil_log2(2 * n),
            budget,
            b_default,
            sigs,
            externals,
        },
        partition,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{elaborate, parse_netlist};

    fn chain_module(name: &str, gates: usize, clock: Option<&str>) -> String {
        let mut s = format!("module {name}\n");
        if let Some(c) = clock {
            s.push_str(&format!("clock {c}\n"));
        }
        s.push_str("input i\noutput o\n");
        let mut prev = "i".to_string();
        for g in 0..gates {
            let out = if g + 1 == gates {
                "o".to_string()
            } else {
                format!("n{g}")
            };
            s.push_str(&format!("gate {out} = NOT({prev})\n"));
            prev = out;
        }
        s.push_str("endmodule\n");
        s
    }

    #[test]
    fn whole_design_fits_in_one_block() {
        let text = chain_module("m", 100, None);
        let d = elaborate(&parse_netlist(&text).unwrap(), "m").unwrap();
        let p = partition_design(&d, 1000);
        assert_eq!(p.blocks.len(), 1);
        assert_eq!(p.blocks[0].cost, 100);
        assert!(!p.blocks[0].flagged);
    }

    #[test]
    fn glue_joins_smallest_child() {
        let mut text = chain_module("a", 500, None);
        text.push_str(&chain_module("b", 600, None));
        text.push_str("module top\ninput i\noutput o\n");
        text.push_str("inst a AS ua bind (i=i, o=m1)\n");
        text.push_str("inst b AS ub bind (i=m1, o=m2)\n");
        let mut prev = "m2".to_string();
        for g in 0..100 {
            let out = if g == 99 { "o".to_string() } else { format!("g{g}") };
            text.push_str(&format!("gate {out} = NOT({prev})\n"));
            prev = out;
        }
        text.push_str("endmodule\n");
        let d = elaborate(&parse_netlist(&text).unwrap(), "top").unwrap();
        assert_eq!(d.gates.len(), 1200);
        let p = partition_design(&d, 1000);
        assert_eq!(p.blocks.len(), 2);
        let costs: Vec<usize> = p.blocks.iter().map(|b| b.cost).collect();
        // glue (100) joined the 500-cost block
        assert!(costs.contains(&600));
        assert_eq!(costs.iter().sum::<usize>(), 1200);
        assert!(p.blocks.iter().all(|b| !b.flagged));
    }

    #[test]
    fn oversized_leaf_is_flagged() {
        let text = chain_module("m", 2000, None);
        let d = elaborate(&parse_netlist(&text).unwrap(), "m").unwrap();
        let p = partition_design(&d, 1000);
        assert_eq!(p.blocks.len(), 1);
        assert!(p.blocks[0].flagged);
    }

    fn two_plus_fanout_design() -> (ElaboratedDesign, Partition) {
        // a drives b with 5 signals (same domain); c fans out to d and e.
        let text = "\
module src5
input i
output o1
output o2
output o3
output o4
output o5
ff f1 init 0 d i q o1
ff f2 init 0 d o1 q o2
ff f3 init 0 d o2 q o3
ff f4 init 0 d o3 q o4
ff f5 init 0 d o4 q o5
endmodule
module sink5
input i1
input i2
input i3
input i4
input i5
output o
gate n1 = AND(i1,i2)
gate n2 = AND(i3,i4)
gate n3 = AND(n1,n2)
ff f init 0 d n3 q m
gate o = XOR(m,i5)
endmodule
module one
input i
output o
ff f init 0 d i q o
endmodule
module top
input pi
output po1
output po2
inst src5 AS a bind (i=pi, o1=w1, o2=w2, o3=w3, o4=w4, o5=w5)
inst sink5 AS b bind (i1=w1, i2=w2, i3=w3, i4=w4, i5=w5, o=cw)
inst one AS c bind (i=cw, o=cx)
inst one AS d bind (i=cx, o=po1)
inst one AS e bind (i=cx, o=po2)
endmodule
";
        let d = elaborate(&parse_netlist(text).unwrap(), "top").unwrap();
        let p = partition_design(&d, 8);
        (d, p)
    }

    #[test]
    fn five_signal_interface_and_fanout_grouping() {
        let (d, p) = two_plus_fanout_design();
        assert_eq!(p.blocks.len(), 5);
        let ifaces = group_interfaces(&d, &p);

        let a = p.blocks.iter().find(|b| b.root_path == "top.a").unwrap().id;
        let b = p.blocks.iter().find(|b| b.root_path == "top.b").unwrap().id;
        let c = p.blocks.iter().find(|b| b.root_path == "top.c").unwrap().id;
        let dd = p.blocks.iter().find(|b| b.root_path == "top.d").unwrap().id;
        let e = p.blocks.iter().find(|b| b.root_path == "top.e").unwrap().id;

        let ab: Vec<_> = ifaces
            .iter()
            .filter(|i| !i.external && i.source == BlockRef::Block(a))
            .collect();
        assert_eq!(ab.len(), 1);
        assert_eq!(ab[0].m(), 5);
        assert_eq!(ab[0].dests, [BlockRef::Block(b)].into_iter().collect());

        // c's single output fans out to both d and e -> one interface
        let cde: Vec<_> = ifaces
            .iter()
            .filter(|i| !i.external && i.source == BlockRef::Block(c))
            .collect();
        assert_eq!(cde.len(), 1);
        assert_eq!(
            cde[0].dests,
            [BlockRef::Block(dd), BlockRef::Block(e)].into_iter().collect()
        );

        // coverage: every boundary signal appears in exactly one
        // same-domain signature interface
        let mut seen: HashMap<SignalId, usize> = HashMap::new();
        for i in ifaces.iter().filter(|i| !i.external) {
            for &s in &i.signals {
                *seen.entry(s).or_default() += 1;
            }
        }
        for (&s, &count) in &seen {
            assert_eq!(count, 1, "signal {} covered {} times", d.signal_name(s), count);
        }
    }

    #[test]
    fn cross_domain_gets_both_sides() {
        let text = "\
module one
input i
output o
ff f init 0 d i q o
endmodule
module oneb
clock clkB
input i
output o
ff f init 0 d i q o
endmodule
module top
input pi
output po
inst one AS b bind (i=pi, o=w)
inst oneb AS c bind (i=w, o=po)
endmodule
";
        let d = elaborate(&parse_netlist(text).unwrap(), "top").unwrap();
        let p = partition_design(&d, 3);
        assert_eq!(p.blocks.len(), 2);
        let ifaces = group_interfaces(&d, &p);
        let sides: Vec<_> = ifaces.iter().filter(|i| !i.external).collect();
        assert_eq!(sides.len(), 2);
        let sender = sides.iter().find(|i| i.side == IfaceSide::Sender).unwrap();
        let receiver = sides.iter().find(|i| i.side == IfaceSide::Receiver).unwrap();
        assert_eq!(sender.domain, "clk");
        assert_eq!(receiver.domain, "clkB");
        assert_eq!(sender.signals, receiver.signals);
    }

    #[test]
    fn plan_arithmetic() {
        let (d, p) = two_plus_fanout_design();
        let ifaces = group_interfaces(&d, &p);
        let plan = plan_signatures(&d, &ifaces, &BMap::uniform(2), 1024, 8).unwrap();
        assert_eq!(plan.c_width, 11);
        for s in &plan.sigs {
            let m = s.interface.m();
            assert!(s.config.k >= 2 * m);
            assert!(s.config.k as u64 >= 11);
            if m == 5 {
                // K = max(5*2, 11) = 11
                assert_eq!(s.config.k, 11);
            }
            if m == 1 {
                assert_eq!(s.config.k, 11);
            }
        }
        // the Fig-4 shape: M=3, b=2 -> K=6
        let plan2 = plan_signatures(&d, &ifaces, &BMap::uniform(2), 16, 8).unwrap();
        for s in &plan2.sigs {
            if s.interface.m() == 3 {
                assert_eq!(s.config.k, 6);
            }
        }
    }

    #[test]
    fn compression_ratio_is_n_over_b() {
        // when M*b dominates: (M*N) / (M*b) = N/b
        let (d, p) = two_plus_fanout_design();
        let ifaces = group_interfaces(&d, &p);
        let n = 1024u64;
        let b = 8;
        let plan = plan_signatures(&d, &ifaces, &BMap::uniform(b), n, 8).unwrap();
        for s in &plan.sigs {
            let m = s.interface.m() as u64;
            if m * u64::from(b) >= 11 {
                let trace_bits = m * n;
                let sig_bits = s.config.k as u64;
                assert_eq!(trace_bits / sig_bits, n / u64::from(b));
            }
        }
    }

    #[test]
    fn zero_signal_extra_rejected() {
        let (d, p) = two_plus_fanout_design();
        let err = build_extra_interface(&d, &p, "x0", &[]).unwrap_err();
        assert!(matches!(err, PlanError::EmptyInterface(_)));
    }

    #[test]
    fn plan_file_round_trip() {
        let (d, _) = two_plus_fanout_design();
        let p = partition_design(&d, 8);
        let ifaces = group_interfaces(&d, &p);
        let plan = plan_signatures(&d, &ifaces, &BMap::uniform(4), 16, 8).unwrap();
        let text = write_plan_file(&plan, &d);
        let (plan2, p2) = read_plan_file(&text, &d).unwrap();
        assert_eq!(plan2.n, plan.n);
        assert_eq!(plan2.budget, plan.budget);
        assert_eq!(plan2.sigs.len(), plan.sigs.len());
        for (a, b) in plan.sigs.iter().zip(&plan2.sigs) {
            assert_eq!(a.interface.id, b.interface.id);
            assert_eq!(a.interface.signals, b.interface.signals);
            assert_eq!(a.interface.source, b.interface.source);
            assert_eq!(a.interface.dests, b.interface.dests);
            assert_eq!(a.interface.domain, b.interface.domain);
            assert_eq!(a.interface.side, b.interface.side);
            assert_eq!(a.config, b.config);
        }
        assert_eq!(plan2.externals.len(), plan.externals.len());
        assert_eq!(p2.blocks.len(), p.blocks.len());
    }

    #[test]
    fn cross_domain_plan_round_trip_keeps_sides() {
        let text = "\
module one
input i
output o
ff f init 0 d i q o
endmodule
module oneb
clock clkB
input i
output o
ff f init 0 d i q o
endmodule
module top
input pi
output po
inst one AS b bind (i=pi, o=w)
inst oneb AS c bind (i=w, o=po)
endmodule
";
        let d = elaborate(&parse_netlist(text).unwrap(), "top").unwrap();
        let p = partition_design(&d, 3);
        let ifaces = group_interfaces(&d, &p);
        let plan = plan_signatures(&d, &ifaces, &BMap::uniform(2), 8, 3).unwrap();
        let file = write_plan_file(&plan, &d);
        let (plan2, _) = read_plan_file(&file, &d).unwrap();
        let sides: Vec<(IfaceSide, String)> = plan2
            .sigs
            .iter()
            .map(|s| (s.interface.side, s.interface.domain.clone()))
            .collect();
        assert!(sides.contains(&(IfaceSide::Sender, "clk".to_string())));
        assert!(sides.contains(&(IfaceSide::Receiver, "clkB".to_string())));
    }
}
