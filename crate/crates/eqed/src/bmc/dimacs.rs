//! DIMACS CNF interchange and the pluggable external-solver backend.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;

use super::solver::Model;
use super::{BmcError, CnfFormula};

/// Standard DIMACS text: `p cnf V C` header followed by zero-terminated
/// clause lines.
pub fn write_dimacs(cnf: &CnfFormula) -> String {
    let mut out = String::new();
    out.push_str(&format!("p cnf {} {}\n", cnf.num_vars, cnf.clauses.len()));
    for clause in &cnf.clauses {
        for lit in clause {
            out.push_str(&format!("{lit} "));
        }
        out.push_str("0\n");
    }
    out
}

/// Parse DIMACS text back into (num_vars, clauses). Comment lines and a
/// trailing `%` section are ignored.
pub fn parse_dimacs(text: &str) -> Result<(u32, Vec<Vec<i32>>), BmcError> {
    let mut num_vars = None;
    let mut clauses = Vec::new();
    let mut current: Vec<i32> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line == "%" {
            break;
        }
        if let Some(rest) = line.strip_prefix("p cnf") {
            let mut it = rest.split_whitespace();
            let v = it.next().and_then(|t| t.parse().ok());
            num_vars = v;
            continue;
        }
        for tok in line.split_whitespace() {
            let lit: i32 = tok.parse().map_err(|_| BmcError::Dimacs {
                line: idx + 1,
                msg: format!("bad literal `{tok}`"),
            })?;
            if lit == 0 {
                clauses.push(std::mem::take(&mut current));
            } else {
                current.push(lit);
            }
        }
    }
    let num_vars = num_vars.ok_or(BmcError::Dimacs {
        line: 0,
        msg: "missing `p cnf` header".into(),
    })?;
    Ok((num_vars, clauses))
}

/// Sidecar mapping file for debugging: one `var <id> = <name>` line per
/// mapped variable.
pub fn write_varmap_sidecar(cnf: &CnfFormula) -> String {
    let mut out = String::new();
    for (var, key) in cnf.varmap.entries() {
        out.push_str(&format!("var {var} = {key}\n"));
    }
    out
}

/// Parse a solver's standard output: either `s SATISFIABLE`/`s
/// UNSATISFIABLE` with `v` model lines, or the minisat file format
/// (`SAT`/`UNSAT` followed by literals).
pub fn parse_solver_output(text: &str, num_vars: u32) -> Result<Option<Model>, BmcError> {
    let mut sat = None;
    let mut values = vec![false; num_vars as usize];
    let mut any_lits = false;
    let mut feed = |tok: &str| -> Result<(), BmcError> {
        let lit: i32 = tok.parse().map_err(|_| BmcError::ExternalSolver {
            msg: format!("bad model literal `{tok}`"),
        })?;
        if lit != 0 {
            let var = lit.unsigned_abs();
            if var <= num_vars {
                values[(var - 1) as usize] = lit > 0;
            }
            any_lits = true;
        }
        Ok(())
    };
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("s ") {
            match rest.trim() {
                "SATISFIABLE" => sat = Some(true),
                "UNSATISFIABLE" => sat = Some(false),
                other => {
                    return Err(BmcError::ExternalSolver {
                        msg: format!("unknown status `{other}`"),
                    })
                }
            }
        } else if line == "SAT" {
            sat = Some(true);
        } else if line == "UNSAT" || line == "UNSATISFIABLE" {
            sat = Some(false);
        } else if let Some(rest) = line.strip_prefix("v ") {
            for tok in rest.split_whitespace() {
                feed(tok)?;
            }
        } else if line
            .split_whitespace()
            .all(|t| t.parse::<i32>().is_ok())
        {
            for tok in line.split_whitespace() {
                feed(tok)?;
            }
        }
    }
    match sat {
        Some(true) => {
            if !any_lits && num_vars > 0 {
                return Err(BmcError::ExternalSolver {
                    msg: "SAT reported without a model".into(),
                });
            }
            Ok(Some(Model::new(values)))
        }
        Some(false) => Ok(None),
        None => Err(BmcError::ExternalSolver {
            msg: "no s-line or SAT/UNSAT marker in solver output".into(),
        }),
    }
}

/// Run an external solver command on the formula via a temporary DIMACS
/// file. The command receives the file path as its last argument; exit
/// status is ignored (solvers use nonzero codes for SAT/UNSAT).
pub fn solve_external(cnf: &CnfFormula, command: &PathBuf) -> Result<Option<Model>, BmcError> {
    let dir = std::env::temp_dir();
    let file = dir.join(format!(
        "eqed-{}-{}.cnf",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0)
    ));
    {
        let mut f = std::fs::File::create(&file).map_err(|e| BmcError::ExternalSolver {
            msg: format!("cannot write DIMACS file: {e}"),
        })?;
        f.write_all(write_dimacs(cnf).as_bytes())
            .map_err(|e| BmcError::ExternalSolver {
                msg: format!("cannot write DIMACS file: {e}"),
            })?;
    }
    let output = Command::new(command).arg(&file).output();
    let _ = std::fs::remove_file(&file);
    let output = output.map_err(|e| BmcError::ExternalSolver {
        msg: format!("failed to run {}: {e}", command.display()),
    })?;
    let text = String::from_utf8_lossy(&output.stdout);
    parse_solver_output(&text, cnf.num_vars)
}
