//! Line-based `.enl` parser with per-module cross-reference checks.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use super::{
    valid_signal_name, FfInit, GateOp, Instance, ModFf, ModGate, ModuleDef, Netlist, PortDir,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown op: {op}")]
    UnknownOp { line: usize, op: String },
    #[error("line {line}: op {op} expects {expected} inputs, got {got}")]
    Arity {
        line: usize,
        op: String,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: no driver: {signal}")]
    NoDriver { line: usize, signal: String },
    #[error("line {line}: duplicate driver: {signal}")]
    DuplicateDriver { line: usize, signal: String },
    #[error("line {line}: unknown child module: {child}")]
    UnknownChild { line: usize, child: String },
    #[error("line {line}: port arity mismatch on instance {inst}: {msg}")]
    PortMismatch {
        line: usize,
        inst: String,
        msg: String,
    },
    #[error("line {line}: duplicate module: {name}")]
    DuplicateModule { line: usize, name: String },
    #[error("line {line}: invalid signal name: {name}")]
    BadName { line: usize, name: String },
}

struct PendingModule {
    def: ModuleDef,
    start_line: usize,
    /// signal -> line of its driver
    drivers: HashMap<String, usize>,
    /// signal -> line of first use (read)
    uses: HashMap<String, usize>,
    inst_lines: Vec<usize>,
}

impl PendingModule {
    fn new(name: String, start_line: usize) -> Self {
        PendingModule {
            def: ModuleDef {
                name,
                ports: Vec::new(),
                gates: Vec::new(),
                flipflops: Vec::new(),
                instances: Vec::new(),
                clock: None,
            },
            start_line,
            drivers: HashMap::new(),
            uses: HashMap::new(),
            inst_lines: Vec::new(),
        }
    }

    fn add_driver(&mut self, signal: &str, line: usize) -> Result<(), ParseError> {
        if self.drivers.insert(signal.to_string(), line).is_some() {
            return Err(ParseError::DuplicateDriver {
                line,
                signal: signal.to_string(),
            });
        }
        Ok(())
    }

    fn add_use(&mut self, signal: &str, line: usize) {
        self.uses.entry(signal.to_string()).or_insert(line);
    }
}

fn check_name(name: &str, line: usize) -> Result<(), ParseError> {
    if valid_signal_name(name) {
        Ok(())
    } else {
        Err(ParseError::BadName {
            line,
            name: name.to_string(),
        })
    }
}

/// Parse `OP(a,b,...)` returning (op name, args). Whitespace around commas
/// is tolerated.
fn parse_call(text: &str, line: usize) -> Result<(String, Vec<String>), ParseError> {
    let open = text.find('(').ok_or_else(|| ParseError::Syntax {
        line,
        msg: format!("expected OP(...), got `{text}`"),
    })?;
    if !text.ends_with(')') {
        return Err(ParseError::Syntax {
            line,
            msg: "missing closing parenthesis".to_string(),
        });
    }
    let op = text[..open].trim().to_string();
    let inner = &text[open + 1..text.len() - 1];
    let args = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(|a| a.trim().to_string()).collect()
    };
    Ok((op, args))
}

/// Parse the whole text into a set of modules, checking per-module
/// invariants: every referenced signal has exactly one driver, instance
/// bindings cover every declared child port, and gate arities match.
pub fn parse_netlist(text: &str) -> Result<Netlist, ParseError> {
    let mut modules: Vec<PendingModule> = Vec::new();
    let mut current: Option<PendingModule> = None;
    let mut seen_names: HashSet<String> = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let mut words = content.split_whitespace();
        let keyword = words.next().unwrap();

        if keyword == "module" {
            if current.is_some() {
                return Err(ParseError::Syntax {
                    line,
                    msg: "nested module".to_string(),
                });
            }
            let name = words
                .next()
                .ok_or_else(|| ParseError::Syntax {
                    line,
                    msg: "module needs a name".to_string(),
                })?
                .to_string();
            check_name(&name, line)?;
            if !seen_names.insert(name.clone()) {
                return Err(ParseError::DuplicateModule { line, name });
            }
            current = Some(PendingModule::new(name, line));
            continue;
        }

        let m = current.as_mut().ok_or_else(|| ParseError::Syntax {
            line,
            msg: format!("`{keyword}` outside module"),
        })?;

        match keyword {
            "endmodule" => {
                modules.push(current.take().unwrap());
            }
            "clock" => {
                let name = words
                    .next()
                    .ok_or_else(|| ParseError::Syntax {
                        line,
                        msg: "clock needs a name".to_string(),
                    })?
                    .to_string();
                check_name(&name, line)?;
                if m.def.clock.is_some() {
                    return Err(ParseError::Syntax {
                        line,
                        msg: "duplicate clock line".to_string(),
                    });
                }
                m.def.clock = Some(name);
            }
            "input" | "output" => {
                let name = words
                    .next()
                    .ok_or_else(|| ParseError::Syntax {
                        line,
                        msg: format!("{keyword} needs a name"),
                    })?
                    .to_string();
                check_name(&name, line)?;
                if m.def.ports.iter().any(|(p, _)| *p == name) {
                    return Err(ParseError::Syntax {
                        line,
                        msg: format!("duplicate port {name}"),
                    });
                }
                if keyword == "input" {
                    m.add_driver(&name, line)?;
                    m.def.ports.push((name, PortDir::Input));
                } else {
                    // an output port is a read of the driving net
                    m.add_use(&name, line);
                    m.def.ports.push((name, PortDir::Output));
                }
            }
            "ff" => {
                // ff NAME init (0|1|x) d SIGNAL q SIGNAL
                let toks: Vec<&str> = words.collect();
                if toks.len() != 7 || toks[1] != "init" || toks[3] != "d" || toks[5] != "q" {
                    return Err(ParseError::Syntax {
                        line,
                        msg: "expected `ff NAME init (0|1|x) d SIGNAL q SIGNAL`".to_string(),
                    });
                }
                let init = match toks[2] {
                    "0" => FfInit::Zero,
                    "1" => FfInit::One,
                    "x" => FfInit::Symbolic,
                    other => {
                        return Err(ParseError::Syntax {
                            line,
                            msg: format!("bad init `{other}`"),
                        })
                    }
                };
                check_name(toks[0], line)?;
                check_name(toks[4], line)?;
                check_name(toks[6], line)?;
                m.add_use(toks[4], line);
                m.add_driver(toks[6], line)?;
                m.def.flipflops.push(ModFf {
                    name: toks[0].to_string(),
                    init,
                    data_in: toks[4].to_string(),
                    q_out: toks[6].to_string(),
                });
            }
            "gate" => {
                // gate SIGNAL = OP(SIG,...)
                let rest = content["gate".len()..].trim();
                let eq = rest.find('=').ok_or_else(|| ParseError::Syntax {
                    line,
                    msg: "expected `gate SIGNAL = OP(...)`".to_string(),
                })?;
                let output = rest[..eq].trim().to_string();
                check_name(&output, line)?;
                let (op_name, args) = parse_call(rest[eq + 1..].trim(), line)?;
                let op = GateOp::from_name(&op_name).ok_or(ParseError::UnknownOp {
                    line,
                    op: op_name.clone(),
                })?;
                if args.len() != op.arity() {
                    return Err(ParseError::Arity {
                        line,
                        op: op_name,
                        expected: op.arity(),
                        got: args.len(),
                    });
                }
                for a in &args {
                    check_name(a, line)?;
                    m.add_use(a, line);
                }
                m.add_driver(&output, line)?;
                m.def.gates.push(ModGate {
                    op,
                    inputs: args,
                    output,
                });
            }
            "inst" => {
                // inst CHILD AS NAME bind (port=signal, ...)
                let rest = content["inst".len()..].trim();
                let as_pos = rest.find(" AS ").ok_or_else(|| ParseError::Syntax {
                    line,
                    msg: "expected `inst CHILD AS NAME bind (...)`".to_string(),
                })?;
                let child = rest[..as_pos].trim().to_string();
                let rest2 = rest[as_pos + 4..].trim();
                let bind_pos = rest2.find(" bind ").ok_or_else(|| ParseError::Syntax {
                    line,
                    msg: "expected `bind (...)` clause".to_string(),
                })?;
                let inst_name = rest2[..bind_pos].trim().to_string();
                check_name(&child, line)?;
                check_name(&inst_name, line)?;
                let bind_text = rest2[bind_pos + 6..].trim();
                if !bind_text.starts_with('(') || !bind_text.ends_with(')') {
                    return Err(ParseError::Syntax {
                        line,
                        msg: "bind list must be parenthesized".to_string(),
                    });
                }
                let inner = &bind_text[1..bind_text.len() - 1];
                let mut bindings = Vec::new();
                if !inner.trim().is_empty() {
                    for pair in inner.split(',') {
                        let mut it = pair.splitn(2, '=');
                        let port = it.next().unwrap_or("").trim().to_string();
                        let sig = it
                            .next()
                            .ok_or_else(|| ParseError::Syntax {
                                line,
                                msg: format!("bad binding `{pair}`"),
                            })?
                            .trim()
                            .to_string();
                        check_name(&port, line)?;
                        check_name(&sig, line)?;
                        bindings.push((port, sig));
                    }
                }
                m.inst_lines.push(line);
                m.def.instances.push(Instance {
                    child,
                    name: inst_name,
                    bindings,
                });
            }
            other => {
                return Err(ParseError::Syntax {
                    line,
                    msg: format!("unknown keyword `{other}`"),
                });
            }
        }
    }

    if let Some(m) = current {
        return Err(ParseError::Syntax {
            line: m.start_line,
            msg: format!("module {} missing endmodule", m.def.name),
        });
    }

    // Cross-reference pass: resolve instance bindings against child port
    // lists, then require a driver for every read signal.
    let defs: HashMap<String, ModuleDef> = modules
        .iter()
        .map(|m| (m.def.name.clone(), m.def.clone()))
        .collect();

    for m in &mut modules {
        let insts = m.def.instances.clone();
        for (inst, &line) in insts.iter().zip(m.inst_lines.clone().iter()) {
            let child = defs.get(&inst.child).ok_or_else(|| ParseError::UnknownChild {
                line,
                child: inst.child.clone(),
            })?;
            if inst.bindings.len() != child.ports.len() {
                return Err(ParseError::PortMismatch {
                    line,
                    inst: inst.name.clone(),
                    msg: format!(
                        "{} bindings for {} ports",
                        inst.bindings.len(),
                        child.ports.len()
                    ),
                });
            }
            let mut bound: HashSet<&str> = HashSet::new();
            for (port, sig) in &inst.bindings {
                let dir = child
                    .ports
                    .iter()
                    .find(|(p, _)| p == port)
                    .map(|(_, d)| *d)
                    .ok_or_else(|| ParseError::PortMismatch {
                        line,
                        inst: inst.name.clone(),
                        msg: format!("no port `{port}` on module {}", child.name),
                    })?;
                if !bound.insert(port.as_str()) {
                    return Err(ParseError::PortMismatch {
                        line,
                        inst: inst.name.clone(),
                        msg: format!("port `{port}` bound twice"),
                    });
                }
                match dir {
                    // parent signal feeds the child: it is read here
                    PortDir::Input => m.add_use(sig, line),
                    // child drives the parent signal
                    PortDir::Output => m.add_driver(sig, line)?,
                }
            }
        }
        for (sig, &line) in m.uses.clone().iter() {
            if !m.drivers.contains_key(sig) {
                return Err(ParseError::NoDriver {
                    line,
                    signal: sig.clone(),
                });
            }
        }
    }

    Ok(Netlist {
        modules: modules.into_iter().map(|m| m.def).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::print_netlist;

    #[test]
    fn minimal_and_module() {
        let nl = parse_netlist("module m\ninput a\ninput b\noutput y\ngate y = AND(a,b)\nendmodule\n")
            .unwrap();
        assert_eq!(nl.modules.len(), 1);
        let m = &nl.modules[0];
        assert_eq!(m.gates.len(), 1);
        assert_eq!(m.flipflops.len(), 0);
        assert_eq!(m.gates[0].op, GateOp::And);
    }

    #[test]
    fn undriven_signal_reports_no_driver() {
        let err = parse_netlist("module m\noutput y\ngate y = NOT(w)\nendmodule\n").unwrap_err();
        match &err {
            ParseError::NoDriver { signal, .. } => assert_eq!(signal, "w"),
            other => panic!("expected NoDriver, got {other:?}"),
        }
        assert!(err.to_string().contains("no driver: w"));
    }

    #[test]
    fn two_level_hierarchy() {
        let text = "\
module leaf
input i
output o
ff r init 0 d i q o
endmodule
module top
input a
input b
output x
output y
inst leaf AS u1 bind (i=a, o=x)
inst leaf AS u2 bind (i=b, o=y)
endmodule
";
        let nl = parse_netlist(text).unwrap();
        assert_eq!(nl.modules.len(), 2);
        let top = nl.module("top").unwrap();
        assert_eq!(top.instances.len(), 2);
        assert_eq!(top.instances[0].child, "leaf");
        assert_eq!(top.instances[1].name, "u2");
        let leaf = nl.module("leaf").unwrap();
        assert_eq!(leaf.flipflops.len(), 1);
    }

    #[test]
    fn duplicate_driver_rejected() {
        let err = parse_netlist(
            "module m\ninput a\noutput y\ngate y = NOT(a)\ngate y = NOT(a)\nendmodule\n",
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::DuplicateDriver { .. }));
    }

    #[test]
    fn unknown_op_and_arity() {
        let err =
            parse_netlist("module m\ninput a\noutput y\ngate y = FOO(a)\nendmodule\n").unwrap_err();
        assert!(matches!(err, ParseError::UnknownOp { .. }));
        let err = parse_netlist("module m\ninput a\noutput y\ngate y = AND(a)\nendmodule\n")
            .unwrap_err();
        assert!(matches!(err, ParseError::Arity { expected: 2, got: 1, .. }));
    }

    #[test]
    fn unknown_child_and_port_mismatch() {
        let err = parse_netlist(
            "module top\ninput a\noutput y\ngate y = NOT(a)\ninst ghost AS u bind (p=a)\nendmodule\n",
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::UnknownChild { .. }));

        let text = "\
module leaf
input i
output o
gate o = NOT(i)
endmodule
module top
input a
output y
gate y = NOT(a)
inst leaf AS u bind (i=a, o=y, extra=a)
endmodule
";
        let err = parse_netlist(text).unwrap_err();
        assert!(matches!(err, ParseError::PortMismatch { .. }));
    }

    #[test]
    fn print_parse_round_trip() {
        let text = "\
module leaf
clock clkB
input i
output o
ff r init x d i q o
endmodule
module top
input a
input b
output x
output y
gate n1 = XOR(a,b)
gate c0 = CONST0()
gate y = MUX(c0,n1,a)
inst leaf AS u1 bind (i=n1, o=x)
endmodule
";
        let nl = parse_netlist(text).unwrap();
        let printed = print_netlist(&nl);
        let reparsed = parse_netlist(&printed).unwrap();
        assert_eq!(nl, reparsed);
    }
}
