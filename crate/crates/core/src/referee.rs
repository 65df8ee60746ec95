//! Well-formedness checks for clause-format DRSs.
//!
//! A DRS is well formed when every discourse referent is introduced by a
//! `REF` clause, every box is anchored, the subordination relation between
//! boxes is acyclic and all clauses form one connected graph.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::drs::{Drs, PredicateKind, Term, Variable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ViolationCode {
    FreeVariable,
    SubordinationCycle,
    Disconnected,
    UnboundBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub well_formed: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        ValidationReport {
            well_formed: violations.is_empty(),
            violations,
        }
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    pub fn codes(&self) -> BTreeSet<ViolationCode> {
        self.violations.iter().map(|v| v.code).collect()
    }
}

/// Directed edge `from -> to` induced by a `from OP to` clause.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SubordinationEdge {
    pub from: Variable,
    pub to: Variable,
    pub operator: String,
}

pub fn subordination_graph(drs: &Drs) -> Vec<SubordinationEdge> {
    let mut edges = Vec::new();
    for c in drs.clauses() {
        if let PredicateKind::Operator(name) = c.predicate() {
            for arg in c.args() {
                if let Term::Var(to) = arg {
                    if to.is_box() {
                        edges.push(SubordinationEdge {
                            from: c.box_var(),
                            to: *to,
                            operator: name.clone(),
                        });
                    }
                }
            }
        }
    }
    edges
}

/// Returns one directed cycle of the graph, if any.
fn find_cycle(edges: &[SubordinationEdge]) -> Option<Vec<Variable>> {
    let mut adj: BTreeMap<Variable, Vec<Variable>> = BTreeMap::new();
    for e in edges {
        adj.entry(e.from).or_default().push(e.to);
        adj.entry(e.to).or_default();
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut mark: HashMap<Variable, Mark> = adj.keys().map(|k| (*k, Mark::New)).collect();
    for &root in adj.keys() {
        if mark[&root] != Mark::New {
            continue;
        }
        // iterative DFS keeping the active path
        let mut stack: Vec<(Variable, usize)> = vec![(root, 0)];
        mark.insert(root, Mark::Active);
        while let Some((node, next)) = stack.last_mut() {
            let succ = &adj[node];
            if *next < succ.len() {
                let to = succ[*next];
                *next += 1;
                match mark[&to] {
                    Mark::Active => {
                        let start = stack.iter().position(|(n, _)| *n == to).unwrap();
                        return Some(stack[start..].iter().map(|(n, _)| *n).collect());
                    }
                    Mark::New => {
                        mark.insert(to, Mark::Active);
                        stack.push((to, 0));
                    }
                    Mark::Done => {}
                }
            } else {
                mark.insert(*node, Mark::Done);
                stack.pop();
            }
        }
    }
    None
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

pub fn validate(drs: &Drs) -> ValidationReport {
    let mut violations = Vec::new();

    let introduced: BTreeSet<Variable> = drs
        .clauses()
        .iter()
        .filter(|c| c.predicate() == &PredicateKind::Operator("REF".into()))
        .filter_map(|c| c.args()[0].as_var())
        .collect();
    let heads: BTreeSet<Variable> = drs.clauses().iter().map(|c| c.box_var()).collect();
    let edges = subordination_graph(drs);
    let box_targets: BTreeSet<Variable> = edges.iter().map(|e| e.to).collect();

    let mut free = BTreeSet::new();
    let mut unbound = BTreeSet::new();
    for c in drs.clauses() {
        for v in c.args().iter().filter_map(Term::as_var) {
            if v.is_box() {
                if !heads.contains(&v) && !box_targets.contains(&v) {
                    unbound.insert(v);
                }
            } else if !introduced.contains(&v) {
                free.insert(v);
            }
        }
    }
    for v in free {
        violations.push(Violation {
            code: ViolationCode::FreeVariable,
            detail: format!("{v} is never introduced by a REF clause"),
        });
    }
    for v in unbound {
        violations.push(Violation {
            code: ViolationCode::UnboundBox,
            detail: format!("box {v} occurs only as an argument"),
        });
    }

    if let Some(cycle) = find_cycle(&edges) {
        let path: Vec<String> = cycle.iter().chain(cycle.first()).map(|v| v.to_string()).collect();
        violations.push(Violation {
            code: ViolationCode::SubordinationCycle,
            detail: format!("subordination cycle {}", path.join(" -> ")),
        });
    }

    let vars = drs.variables();
    if !vars.is_empty() {
        let index: HashMap<Variable, usize> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut parent: Vec<usize> = (0..vars.len()).collect();
        for c in drs.clauses() {
            let mut it = c.variables().map(|v| index[&v]);
            let first = it.next().expect("clause has a head");
            for other in it {
                let (a, b) = (find(&mut parent, first), find(&mut parent, other));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let components: BTreeSet<usize> = (0..vars.len()).map(|i| find(&mut parent, i)).collect();
        if components.len() > 1 {
            violations.push(Violation {
                code: ViolationCode::Disconnected,
                detail: format!("clauses form {} unconnected groups", components.len()),
            });
        }
    }

    ValidationReport::from_violations(violations)
}
