//! Flattening a module hierarchy into one gate/FF graph with
//! path-qualified names, plus topological ordering of combinational logic.

use std::collections::HashMap;

use thiserror::Error;

use super::{FfInit, GateOp, ModuleDef, Netlist};

pub type SignalId = u32;
pub type GateId = u32;
pub type FfId = u32;

pub const DEFAULT_CLOCK: &str = "clk";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ElaborateError {
    #[error("unknown top module: {0}")]
    UnknownTop(String),
    #[error("recursive instantiation through module {0}")]
    RecursiveInstantiation(String),
    #[error("combinational cycle: {}", .0.join(" -> "))]
    CombinationalCycle(Vec<String>),
    #[error("duplicate driver on net {0}")]
    DuplicateDriver(String),
    #[error("no driver on net {0}")]
    NoDriver(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    PrimaryInput,
    Gate(GateId),
    Ff(FfId),
}

#[derive(Debug, Clone)]
pub struct FlatGate {
    pub op: GateOp,
    pub inputs: Vec<SignalId>,
    pub output: SignalId,
}

#[derive(Debug, Clone)]
pub struct FlatFf {
    /// Hierarchical path, e.g. `top.u1.ff3`.
    pub name: String,
    pub data_in: SignalId,
    pub q_out: SignalId,
    pub init: FfInit,
    pub clock: String,
}

/// One node of the retained hierarchy tree. Elements listed here belong
/// directly to this node, not to any child.
#[derive(Debug, Clone)]
pub struct HierNode {
    /// Instance path, e.g. `top.u1`.
    pub path: String,
    pub module: String,
    pub clock: String,
    pub gates: Vec<GateId>,
    pub ffs: Vec<FfId>,
    pub children: Vec<usize>,
}

/// The flattened design: every signal is a 1-bit net with exactly one
/// driver, the combinational graph is acyclic, and the hierarchy tree is
/// retained for the partitioner. Immutable after elaboration.
#[derive(Debug, Clone)]
pub struct ElaboratedDesign {
    pub top: String,
    pub signal_names: Vec<String>,
    signal_ids: HashMap<String, SignalId>,
    pub drivers: Vec<Driver>,
    pub gates: Vec<FlatGate>,
    pub ffs: Vec<FlatFf>,
    pub primary_inputs: Vec<SignalId>,
    pub primary_outputs: Vec<SignalId>,
    /// Hierarchy nodes; index 0 is the root.
    pub hierarchy: Vec<HierNode>,
    /// Whole-design topological order of gates.
    pub topo: Vec<GateId>,
    ff_by_name: HashMap<String, FfId>,
}

impl ElaboratedDesign {
    pub fn signal_id(&self, name: &str) -> Option<SignalId> {
        self.signal_ids.get(name).copied()
    }

    pub fn signal_name(&self, id: SignalId) -> &str {
        &self.signal_names[id as usize]
    }

    pub fn ff_by_name(&self, name: &str) -> Option<FfId> {
        self.ff_by_name.get(name).copied()
    }

    /// Total flip-flop count (R_total).
    pub fn ff_count(&self) -> usize {
        self.ffs.len()
    }

    pub fn signal_count(&self) -> usize {
        self.signal_names.len()
    }

    /// Set of clock-domain labels present in the design.
    pub fn clock_domains(&self) -> Vec<String> {
        let mut doms: Vec<String> = self.hierarchy.iter().map(|n| n.clock.clone()).collect();
        doms.sort();
        doms.dedup();
        doms
    }
}

struct Builder<'a> {
    netlist: &'a Netlist,
    signal_names: Vec<String>,
    signal_ids: HashMap<String, SignalId>,
    driver_slots: Vec<Option<Driver>>,
    gates: Vec<FlatGate>,
    ffs: Vec<FlatFf>,
    hierarchy: Vec<HierNode>,
}

impl<'a> Builder<'a> {
    fn intern(&mut self, name: &str) -> SignalId {
        if let Some(&id) = self.signal_ids.get(name) {
            return id;
        }
        let id = self.signal_names.len() as SignalId;
        self.signal_names.push(name.to_string());
        self.signal_ids.insert(name.to_string(), id);
        self.driver_slots.push(None);
        id
    }

    fn set_driver(&mut self, sig: SignalId, d: Driver) -> Result<(), ElaborateError> {
        let slot = &mut self.driver_slots[sig as usize];
        if slot.is_some() {
            return Err(ElaborateError::DuplicateDriver(
                self.signal_names[sig as usize].clone(),
            ));
        }
        *slot = Some(d);
        Ok(())
    }

    /// Instantiate `module` at `path`. `port_env` maps the module's port
    /// names to already-interned parent nets; non-port locals get fresh
    /// path-qualified nets.
    fn instantiate(
        &mut self,
        module: &'a ModuleDef,
        path: String,
        clock: String,
        port_env: HashMap<String, SignalId>,
    ) -> Result<usize, ElaborateError> {
        let clock = module.clock.clone().unwrap_or(clock);
        let node_idx = self.hierarchy.len();
        self.hierarchy.push(HierNode {
            path: path.clone(),
            module: module.name.clone(),
            clock: clock.clone(),
            gates: Vec::new(),
            ffs: Vec::new(),
            children: Vec::new(),
        });

        let mut env = port_env;
        let local = |b: &mut Self, env: &mut HashMap<String, SignalId>, name: &str| {
            if let Some(&id) = env.get(name) {
                id
            } else {
                let id = b.intern(&format!("{path}.{name}"));
                env.insert(name.to_string(), id);
                id
            }
        };

        for ff in &module.flipflops {
            let d = local(self, &mut env, &ff.data_in);
            let q = local(self, &mut env, &ff.q_out);
            let id = self.ffs.len() as FfId;
            self.ffs.push(FlatFf {
                name: format!("{path}.{}", ff.name),
                data_in: d,
                q_out: q,
                init: ff.init,
                clock: clock.clone(),
            });
            self.set_driver(q, Driver::Ff(id))?;
            self.hierarchy[node_idx].ffs.push(id);
        }

        for gate in &module.gates {
            let inputs: Vec<SignalId> = gate
                .inputs
                .iter()
                .map(|s| local(self, &mut env, s))
                .collect();
            let output = local(self, &mut env, &gate.output);
            let id = self.gates.len() as GateId;
            self.gates.push(FlatGate {
                op: gate.op,
                inputs,
                output,
            });
            self.set_driver(output, Driver::Gate(id))?;
            self.hierarchy[node_idx].gates.push(id);
        }

        for inst in &module.instances {
            let child = self
                .netlist
                .module(&inst.child)
                .expect("checked during parse");
            let mut child_env = HashMap::new();
            for (port, sig) in &inst.bindings {
                let net = local(self, &mut env, sig);
                child_env.insert(port.clone(), net);
            }
            let child_idx = self.instantiate(
                child,
                format!("{path}.{}", inst.name),
                clock.clone(),
                child_env,
            )?;
            self.hierarchy[node_idx].children.push(child_idx);
        }

        Ok(node_idx)
    }
}

fn check_recursion(netlist: &Netlist, top: &str) -> Result<(), ElaborateError> {
    fn visit(
        netlist: &Netlist,
        name: &str,
        stack: &mut Vec<String>,
        done: &mut HashMap<String, bool>,
    ) -> Result<(), ElaborateError> {
        if stack.iter().any(|s| s == name) {
            return Err(ElaborateError::RecursiveInstantiation(name.to_string()));
        }
        if done.contains_key(name) {
            return Ok(());
        }
        stack.push(name.to_string());
        if let Some(m) = netlist.module(name) {
            for inst in &m.instances {
                visit(netlist, &inst.child, stack, done)?;
            }
        }
        stack.pop();
        done.insert(name.to_string(), true);
        Ok(())
    }
    visit(netlist, top, &mut Vec::new(), &mut HashMap::new())
}

/// Flatten `netlist` starting from `top`. Checks for recursive
/// instantiation, exactly-one-driver per net, and combinational cycles.
pub fn elaborate(netlist: &Netlist, top: &str) -> Result<ElaboratedDesign, ElaborateError> {
    let top_def = netlist
        .module(top)
        .ok_or_else(|| ElaborateError::UnknownTop(top.to_string()))?;
    check_recursion(netlist, top)?;

    let mut b = Builder {
        netlist,
        signal_names: Vec::new(),
        signal_ids: HashMap::new(),
        driver_slots: Vec::new(),
        gates: Vec::new(),
        ffs: Vec::new(),
        hierarchy: Vec::new(),
    };

    // Top-level ports become path-qualified nets too; inputs are the
    // design's primary inputs, outputs its primary outputs.
    let mut port_env = HashMap::new();
    let mut primary_inputs = Vec::new();
    let mut primary_output_names = Vec::new();
    for (name, dir) in &top_def.ports {
        let id = b.intern(&format!("{top}.{name}"));
        port_env.insert(name.clone(), id);
        match dir {
            super::PortDir::Input => {
                primary_inputs.push(id);
                b.set_driver(id, Driver::PrimaryInput)?;
            }
            super::PortDir::Output => primary_output_names.push(id),
        }
    }

    b.instantiate(top_def, top.to_string(), DEFAULT_CLOCK.to_string(), port_env)?;

    let mut drivers = Vec::with_capacity(b.driver_slots.len());
    for (i, slot) in b.driver_slots.iter().enumerate() {
        match slot {
            Some(d) => drivers.push(*d),
            None => return Err(ElaborateError::NoDriver(b.signal_names[i].clone())),
        }
    }

    let ff_by_name = b
        .ffs
        .iter()
        .enumerate()
        .map(|(i, ff)| (ff.name.clone(), i as FfId))
        .collect();

    let mut design = ElaboratedDesign {
        top: top.to_string(),
        signal_names: b.signal_names,
        signal_ids: b.signal_ids,
        drivers,
        gates: b.gates,
        ffs: b.ffs,
        primary_inputs,
        primary_outputs: primary_output_names,
        hierarchy: b.hierarchy,
        topo: Vec::new(),
        ff_by_name,
    };

    let all: Vec<GateId> = (0..design.gates.len() as GateId).collect();
    design.topo = topo_order(&design, &all)?;
    Ok(design)
}

/// Topologically order the gates in `scope` (combinational edges only;
/// flip-flops cut the graph). Deterministic: ready gates are taken in
/// ascending id order.
pub fn topo_order(design: &ElaboratedDesign, scope: &[GateId]) -> Result<Vec<GateId>, ElaborateError> {
    let in_scope: HashMap<GateId, usize> =
        scope.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    // dependency edges: producer gate -> consumer gate, within scope
    let mut pending: Vec<usize> = vec![0; scope.len()];
    let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); scope.len()];
    for (ci, &gid) in scope.iter().enumerate() {
        for &inp in &design.gates[gid as usize].inputs {
            if let Driver::Gate(src) = design.drivers[inp as usize] {
                if let Some(&pi) = in_scope.get(&src) {
                    consumers[pi].push(ci);
                    pending[ci] += 1;
                }
            }
        }
    }

    let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = (0..scope.len())
        .filter(|&i| pending[i] == 0)
        .map(std::cmp::Reverse)
        .collect();
    let mut order = Vec::with_capacity(scope.len());
    while let Some(std::cmp::Reverse(i)) = ready.pop() {
        order.push(scope[i]);
        for &c in &consumers[i] {
            pending[c] -= 1;
            if pending[c] == 0 {
                ready.push(std::cmp::Reverse(c));
            }
        }
    }

    if order.len() != scope.len() {
        // Find one cycle among the leftover gates for the report.
        let leftover: Vec<usize> = (0..scope.len()).filter(|&i| pending[i] > 0).collect();
        let cycle = find_cycle(design, scope, &leftover, &consumers);
        return Err(ElaborateError::CombinationalCycle(cycle));
    }
    Ok(order)
}

fn find_cycle(
    design: &ElaboratedDesign,
    scope: &[GateId],
    leftover: &[usize],
    consumers: &[Vec<usize>],
) -> Vec<String> {
    // Walk consumer edges from a leftover node until a node repeats.
    let mut seen_at: HashMap<usize, usize> = HashMap::new();
    let mut path: Vec<usize> = Vec::new();
    let mut cur = leftover[0];
    loop {
        if let Some(&pos) = seen_at.get(&cur) {
            return path[pos..]
                .iter()
                .map(|&i| {
                    design.signal_names[design.gates[scope[i] as usize].output as usize].clone()
                })
                .collect();
        }
        seen_at.insert(cur, path.len());
        path.push(cur);
        // Any consumer edge that stays within the leftover set is on a cycle
        // or leads to one.
        cur = *consumers[cur]
            .iter()
            .find(|c| leftover.contains(c))
            .expect("leftover nodes keep a pending edge");
    }
}
