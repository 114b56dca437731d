//! Hierarchical gate-level netlist model, text-format parser, and
//! elaboration into a flat simulatable graph.
//!
//! The `.enl` text format is line-based (UTF-8, `#` comments):
//!
//! ```text
//! module NAME
//! clock NAME
//! input NAME
//! output NAME
//! ff NAME init (0|1|x) d SIGNAL q SIGNAL
//! gate SIGNAL = OP(SIG,...)
//! inst CHILD AS NAME bind (port=signal, ...)
//! endmodule
//! ```
//!
//! All nets are 1-bit; buses are spelled with indexed names (`d[3]`).
//! Signal names match `[A-Za-z_][A-Za-z0-9_.\[\]]*`.

mod elaborate;
mod parse;

pub use elaborate::{
    elaborate, topo_order, Driver, ElaborateError, ElaboratedDesign, FfId, FlatFf, FlatGate,
    GateId, HierNode, SignalId, DEFAULT_CLOCK,
};
pub use parse::{parse_netlist, ParseError};

use std::fmt;

/// Gate operator. `Mux` input order is (select, a, b): output is `a` when
/// select is 0, `b` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateOp {
    And,
    Or,
    Not,
    Xor,
    Nand,
    Nor,
    Mux,
    Const0,
    Const1,
}

impl GateOp {
    pub fn arity(self) -> usize {
        match self {
            GateOp::Not => 1,
            GateOp::Mux => 3,
            GateOp::Const0 | GateOp::Const1 => 0,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateOp::And => "AND",
            GateOp::Or => "OR",
            GateOp::Not => "NOT",
            GateOp::Xor => "XOR",
            GateOp::Nand => "NAND",
            GateOp::Nor => "NOR",
            GateOp::Mux => "MUX",
            GateOp::Const0 => "CONST0",
            GateOp::Const1 => "CONST1",
        }
    }

    pub fn from_name(s: &str) -> Option<GateOp> {
        Some(match s {
            "AND" => GateOp::And,
            "OR" => GateOp::Or,
            "NOT" => GateOp::Not,
            "XOR" => GateOp::Xor,
            "NAND" => GateOp::Nand,
            "NOR" => GateOp::Nor,
            "MUX" => GateOp::Mux,
            "CONST0" => GateOp::Const0,
            "CONST1" => GateOp::Const1,
            _ => return None,
        })
    }

    /// Evaluate on two-valued inputs. `inputs` length must match arity.
    pub fn eval(self, inputs: &[bool]) -> bool {
        match self {
            GateOp::And => inputs[0] && inputs[1],
            GateOp::Or => inputs[0] || inputs[1],
            GateOp::Not => !inputs[0],
            GateOp::Xor => inputs[0] ^ inputs[1],
            GateOp::Nand => !(inputs[0] && inputs[1]),
            GateOp::Nor => !(inputs[0] || inputs[1]),
            GateOp::Mux => {
                if inputs[0] {
                    inputs[2]
                } else {
                    inputs[1]
                }
            }
            GateOp::Const0 => false,
            GateOp::Const1 => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortDir {
    Input,
    Output,
}

/// Flip-flop initial value. `Symbolic` leaves the power-on value
/// unconstrained for the checker; simulation substitutes a concrete
/// default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfInit {
    Zero,
    One,
    Symbolic,
}

impl fmt::Display for FfInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FfInit::Zero => write!(f, "0"),
            FfInit::One => write!(f, "1"),
            FfInit::Symbolic => write!(f, "x"),
        }
    }
}

/// A gate within one module; signals are module-local names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModGate {
    pub op: GateOp,
    pub inputs: Vec<String>,
    pub output: String,
}

/// A flip-flop within one module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModFf {
    pub name: String,
    pub init: FfInit,
    pub data_in: String,
    pub q_out: String,
}

/// A child-module instantiation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub child: String,
    pub name: String,
    /// (child port, parent signal), in declaration order.
    pub bindings: Vec<(String, String)>,
}

/// One module of a hierarchical design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleDef {
    pub name: String,
    pub ports: Vec<(String, PortDir)>,
    pub gates: Vec<ModGate>,
    pub flipflops: Vec<ModFf>,
    pub instances: Vec<Instance>,
    /// Clock-domain label for all sequential elements in this module.
    /// `None` inherits the parent's domain (root default: "clk").
    pub clock: Option<String>,
}

/// A parsed set of modules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Netlist {
    pub modules: Vec<ModuleDef>,
}

impl Netlist {
    pub fn module(&self, name: &str) -> Option<&ModuleDef> {
        self.modules.iter().find(|m| m.name == name)
    }
}

/// Print a netlist back to `.enl` text. `parse_netlist(print_netlist(n))`
/// reproduces `n` exactly.
pub fn print_netlist(netlist: &Netlist) -> String {
    let mut out = String::new();
    for m in &netlist.modules {
        out.push_str(&format!("module {}\n", m.name));
        if let Some(clk) = &m.clock {
            out.push_str(&format!("clock {clk}\n"));
        }
        for (name, dir) in &m.ports {
            match dir {
                PortDir::Input => out.push_str(&format!("input {name}\n")),
                PortDir::Output => out.push_str(&format!("output {name}\n")),
            }
        }
        for ff in &m.flipflops {
            out.push_str(&format!(
                "ff {} init {} d {} q {}\n",
                ff.name, ff.init, ff.data_in, ff.q_out
            ));
        }
        for g in &m.gates {
            out.push_str(&format!(
                "gate {} = {}({})\n",
                g.output,
                g.op.name(),
                g.inputs.join(",")
            ));
        }
        for inst in &m.instances {
            let binds: Vec<String> = inst
                .bindings
                .iter()
                .map(|(p, s)| format!("{p}={s}"))
                .collect();
            out.push_str(&format!(
                "inst {} AS {} bind ({})\n",
                inst.child,
                inst.name,
                binds.join(", ")
            ));
        }
        out.push_str("endmodule\n");
    }
    out
}

pub(crate) fn valid_signal_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '[' || c == ']')
}
