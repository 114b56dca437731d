//! Conflict-driven clause-learning satisfiability procedure.
//!
//! A compact CDCL solver: two-watched-literal propagation, first-UIP
//! clause learning with activity-based variable ordering, phase saving,
//! and Luby restarts. Deterministic: ties in the decision order break
//! toward the lowest variable index, so repeated solves of the same
//! formula return the same model.
//!
//! Literals use the DIMACS convention at the API boundary (nonzero i32,
//! negative = negated, variables 1-based).

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveOutcome {
    Sat,
    Unsat,
}

/// A total assignment indexed by 1-based variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    values: Vec<bool>,
}

impl Model {
    pub fn new(values: Vec<bool>) -> Self {
        Model { values }
    }

    pub fn value(&self, var: u32) -> bool {
        self.values[(var - 1) as usize]
    }

    pub fn lit_true(&self, lit: i32) -> bool {
        let v = self.value(lit.unsigned_abs());
        if lit > 0 {
            v
        } else {
            !v
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Lit(u32); // var << 1 | neg

impl Lit {
    fn from_dimacs(l: i32) -> Lit {
        let v = (l.unsigned_abs() - 1) << 1;
        Lit(if l < 0 { v | 1 } else { v })
    }

    fn var(self) -> usize {
        (self.0 >> 1) as usize
    }

    fn is_neg(self) -> bool {
        self.0 & 1 == 1
    }

    fn negate(self) -> Lit {
        Lit(self.0 ^ 1)
    }

    fn index(self) -> usize {
        self.0 as usize
    }
}

const UNDEF: u32 = u32::MAX;

struct Clause {
    lits: Vec<Lit>,
}

pub struct Solver {
    num_vars: usize,
    clauses: Vec<Clause>,
    watches: Vec<Vec<u32>>,
    assign: Vec<u8>, // 0 undef, 1 true, 2 false
    level: Vec<u32>,
    reason: Vec<u32>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    heap: std::collections::BinaryHeap<HeapEntry>,
    phase: Vec<bool>,
    unsat: bool,
    conflicts: u64,
}

/// Max-heap entry ordered by (activity, lowest var first). Stale entries
/// (outdated activity) are skipped on pop.
struct HeapEntry {
    act: f64,
    var: u32,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.act == other.act && self.var == other.var
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.act
            .total_cmp(&other.act)
            .then(other.var.cmp(&self.var))
    }
}

fn lit_val(assign: &[u8], l: Lit) -> u8 {
    let a = assign[l.var()];
    if a == 0 {
        0
    } else if (a == 1) != l.is_neg() {
        1
    } else {
        2
    }
}

impl Solver {
    pub fn new(num_vars: usize) -> Self {
        Solver {
            num_vars,
            clauses: Vec::new(),
            watches: vec![Vec::new(); 2 * num_vars],
            assign: vec![0; num_vars],
            level: vec![0; num_vars],
            reason: vec![UNDEF; num_vars],
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            activity: vec![0.0; num_vars],
            var_inc: 1.0,
            heap: std::collections::BinaryHeap::new(),
            phase: vec![false; num_vars],
            unsat: false,
            conflicts: 0,
        }
    }

    fn lit_value(&self, l: Lit) -> u8 {
        lit_val(&self.assign, l)
    }

    fn enqueue(&mut self, l: Lit, reason: u32) -> bool {
        match self.lit_value(l) {
            1 => true,
            2 => false,
            _ => {
                self.assign[l.var()] = if l.is_neg() { 2 } else { 1 };
                self.level[l.var()] = self.trail_lim.len() as u32;
                self.reason[l.var()] = reason;
                self.phase[l.var()] = !l.is_neg();
                self.trail.push(l);
                true
            }
        }
    }

    /// Add a clause of DIMACS literals. Tautologies and satisfied-at-root
    /// clauses are dropped; falsified literals at the root are removed.
    pub fn add_clause(&mut self, dimacs: &[i32]) {
        if self.unsat {
            return;
        }
        let mut lits: Vec<Lit> = dimacs.iter().map(|&l| Lit::from_dimacs(l)).collect();
        lits.sort_unstable_by_key(|l| l.0);
        lits.dedup();
        let mut filtered = Vec::with_capacity(lits.len());
        for (i, &l) in lits.iter().enumerate() {
            if i + 1 < lits.len() && lits[i + 1] == l.negate() {
                return; // tautology
            }
            match self.lit_value(l) {
                1 if self.level[l.var()] == 0 => return, // already satisfied
                2 if self.level[l.var()] == 0 => continue, // root-false literal
                _ => filtered.push(l),
            }
        }
        match filtered.len() {
            0 => self.unsat = true,
            1 => {
                if !self.enqueue(filtered[0], UNDEF) {
                    self.unsat = true;
                }
            }
            _ => {
                let idx = self.clauses.len() as u32;
                self.watches[filtered[0].index()].push(idx);
                self.watches[filtered[1].index()].push(idx);
                self.clauses.push(Clause { lits: filtered });
            }
        }
    }

    fn propagate(&mut self) -> Option<u32> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = p.negate();
            let mut watch_list = std::mem::take(&mut self.watches[false_lit.index()]);
            let mut i = 0;
            'clauses: while i < watch_list.len() {
                let ci = watch_list[i];
                let clause = &mut self.clauses[ci as usize];
                // normalize: false_lit at position 1
                if clause.lits[0] == false_lit {
                    clause.lits.swap(0, 1);
                }
                debug_assert_eq!(clause.lits[1], false_lit);
                let first = clause.lits[0];
                if lit_val(&self.assign, first) == 1 {
                    i += 1;
                    continue;
                }
                // search for a non-false literal to watch instead
                for k in 2..clause.lits.len() {
                    if lit_val(&self.assign, clause.lits[k]) != 2 {
                        clause.lits.swap(1, k);
                        let moved = clause.lits[1];
                        self.watches[moved.index()].push(ci);
                        watch_list.swap_remove(i);
                        continue 'clauses;
                    }
                }
                // unit or conflict
                if !self.enqueue(first, ci) {
                    self.watches[false_lit.index()] = watch_list;
                    return Some(ci);
                }
                i += 1;
            }
            self.watches[false_lit.index()] = watch_list;
        }
        None
    }

    fn bump(&mut self, var: usize) {
        self.activity[var] += self.var_inc;
        if self.activity[var] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.push(HeapEntry {
            act: self.activity[var],
            var: var as u32,
        });
    }

    fn analyze(&mut self, mut confl: u32) -> (Vec<Lit>, u32) {
        let mut learnt: Vec<Lit> = vec![Lit(0)]; // slot for the asserting literal
        let mut seen = vec![false; self.num_vars];
        let mut counter = 0usize;
        let mut p: Option<Lit> = None;
        let mut idx = self.trail.len();
        let cur_level = self.trail_lim.len() as u32;

        loop {
            let lits: Vec<Lit> = {
                let clause = &self.clauses[confl as usize];
                let start = if p.is_some() { 1 } else { 0 };
                clause.lits[start..].to_vec()
            };
            for &q in &lits {
                let v = q.var();
                if !seen[v] && self.level[v] > 0 {
                    seen[v] = true;
                    if self.level[v] == cur_level {
                        counter += 1;
                    } else {
                        learnt.push(q);
                    }
                }
                self.bump(v);
            }
            // next literal on the trail that contributes
            loop {
                idx -= 1;
                if seen[self.trail[idx].var()] {
                    break;
                }
            }
            let lit = self.trail[idx];
            seen[lit.var()] = false;
            counter -= 1;
            if counter == 0 {
                learnt[0] = lit.negate();
                break;
            }
            confl = self.reason[lit.var()];
            debug_assert_ne!(confl, UNDEF);
            p = Some(lit);
        }

        // backjump to the second-highest level in the learnt clause
        let mut bt = 0;
        if learnt.len() > 1 {
            let mut max_i = 1;
            for i in 2..learnt.len() {
                if self.level[learnt[i].var()] > self.level[learnt[max_i].var()] {
                    max_i = i;
                }
            }
            learnt.swap(1, max_i);
            bt = self.level[learnt[1].var()];
        }
        (learnt, bt)
    }

    fn backtrack(&mut self, to_level: u32) {
        while self.trail_lim.len() as u32 > to_level {
            let lim = self.trail_lim.pop().unwrap();
            while self.trail.len() > lim {
                let l = self.trail.pop().unwrap();
                self.assign[l.var()] = 0;
                self.reason[l.var()] = UNDEF;
                self.heap.push(HeapEntry {
                    act: self.activity[l.var()],
                    var: l.var() as u32,
                });
            }
        }
        self.qhead = self.trail.len();
    }

    fn pick_branch_var(&mut self) -> Option<usize> {
        while let Some(e) = self.heap.pop() {
            let v = e.var as usize;
            if self.assign[v] == 0 && self.activity[v] == e.act {
                return Some(v);
            }
        }
        (0..self.num_vars).find(|&v| self.assign[v] == 0)
    }

    pub fn solve(&mut self) -> SolveOutcome {
        if self.unsat {
            return SolveOutcome::Unsat;
        }
        for v in 0..self.num_vars {
            self.heap.push(HeapEntry {
                act: self.activity[v],
                var: v as u32,
            });
        }
        let mut restart_idx = 0u64;
        let mut conflicts_until_restart = 256 * luby(restart_idx);

        loop {
            if let Some(confl) = self.propagate() {
                self.conflicts += 1;
                if self.trail_lim.is_empty() {
                    self.unsat = true;
                    return SolveOutcome::Unsat;
                }
                let (learnt, bt) = self.analyze(confl);
                self.backtrack(bt);
                if learnt.len() == 1 {
                    let ok = self.enqueue(learnt[0], UNDEF);
                    debug_assert!(ok);
                } else {
                    let idx = self.clauses.len() as u32;
                    self.watches[learnt[0].index()].push(idx);
                    self.watches[learnt[1].index()].push(idx);
                    let assert_lit = learnt[0];
                    self.clauses.push(Clause { lits: learnt });
                    let ok = self.enqueue(assert_lit, idx);
                    debug_assert!(ok);
                }
                self.var_inc /= 0.95;
                if conflicts_until_restart > 0 {
                    conflicts_until_restart -= 1;
                }
            } else {
                if conflicts_until_restart == 0 && !self.trail_lim.is_empty() {
                    restart_idx += 1;
                    conflicts_until_restart = 256 * luby(restart_idx);
                    self.backtrack(0);
                    continue;
                }
                match self.pick_branch_var() {
                    None => return SolveOutcome::Sat,
                    Some(v) => {
                        self.trail_lim.push(self.trail.len());
                        let lit = Lit((v as u32) << 1 | u32::from(!self.phase[v]));
                        let ok = self.enqueue(lit, UNDEF);
                        debug_assert!(ok);
                    }
                }
            }
        }
    }

    pub fn model(&self) -> Model {
        Model {
            values: (0..self.num_vars).map(|v| self.assign[v] == 1).collect(),
        }
    }

    pub fn conflicts(&self) -> u64 {
        self.conflicts
    }
}

/// Luby restart sequence (0-based): 1,1,2,1,1,2,4,1,1,2,...
fn luby(mut x: u64) -> u64 {
    let mut size: u64 = 1;
    let mut seq: u32 = 0;
    while size < x + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != x {
        size = (size - 1) >> 1;
        seq -= 1;
        x %= size;
    }
    1u64 << seq
}

/// Decide a clause list over `num_vars` variables; returns a total model
/// on SAT.
pub fn solve_clauses(num_vars: u32, clauses: &[Vec<i32>]) -> Option<Model> {
    let mut s = Solver::new(num_vars as usize);
    for c in clauses {
        s.add_clause(c);
    }
    match s.solve() {
        SolveOutcome::Sat => Some(s.model()),
        SolveOutcome::Unsat => None,
    }
}
