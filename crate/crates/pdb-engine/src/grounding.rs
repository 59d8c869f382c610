//! Grounding of denial constraints over an instance: enumeration of
//! violating tuple sets, minimization, and construction of the conflict
//! hypergraph. Also the reduction of probabilistic constraints to
//! deterministic ones by ear augmentation.

use std::collections::{BTreeMap, BTreeSet};

use crate::constraint_lang::{Atom, BuiltinPredicate, DenialConstraint, Term};
use crate::model::{PDBInstance, Rational, TupleId, Value};

/// Variable binding built while matching atoms against tuples.
pub type Binding = BTreeMap<String, Value>;

/// Match one atom against a tuple, extending the binding. Returns `false`
/// (without touching `binding` irrecoverably) when the match fails; the
/// caller is expected to clone or roll back via the returned undo list.
fn match_atom(
    atom: &Atom,
    values: &[Value],
    binding: &mut Binding,
    undo: &mut Vec<String>,
) -> bool {
    for (term, value) in atom.terms.iter().zip(values) {
        match term {
            Term::Const(c) => {
                if c != value {
                    return false;
                }
            }
            Term::Var(v) => match binding.get(v) {
                Some(bound) => {
                    if bound != value {
                        return false;
                    }
                }
                None => {
                    binding.insert(v.clone(), value.clone());
                    undo.push(v.clone());
                }
            },
        }
    }
    true
}

/// Evaluate a builtin under a full binding. Unbound variables or cross-kind
/// comparisons cannot occur for inputs accepted by the parser.
pub fn eval_builtin(b: &BuiltinPredicate, binding: &Binding) -> bool {
    let resolve = |t: &Term| -> Option<Value> {
        match t {
            Term::Const(v) => Some(v.clone()),
            Term::Var(v) => binding.get(v).cloned(),
        }
    };
    let (Some(l), Some(r)) = (resolve(&b.left), resolve(&b.right)) else {
        debug_assert!(false, "builtin variable unbound after atom matching");
        return false;
    };
    match l.compare(&r) {
        Some(ord) => b.op.eval(ord),
        None => {
            debug_assert!(false, "cross-kind comparison slipped past the parser");
            false
        }
    }
}

/// Enumerate all assignments of the atoms to tuples of the instance that
/// satisfy the conjunction of atoms and builtins. For each assignment the
/// callback receives the chosen tuple ids (one per atom, duplicates allowed)
/// and the binding.
pub fn enumerate_matches(
    instance: &PDBInstance,
    atoms: &[Atom],
    builtins: &[BuiltinPredicate],
    mut on_match: impl FnMut(&[TupleId], &Binding),
) {
    fn recurse(
        instance: &PDBInstance,
        atoms: &[Atom],
        builtins: &[BuiltinPredicate],
        chosen: &mut Vec<TupleId>,
        binding: &mut Binding,
        on_match: &mut impl FnMut(&[TupleId], &Binding),
    ) {
        let Some(atom) = atoms.get(chosen.len()) else {
            if builtins.iter().all(|b| eval_builtin(b, binding)) {
                on_match(chosen, binding);
            }
            return;
        };
        for &id in instance.relation_tuples(&atom.relation) {
            let tuple = &instance.tuples[id];
            let mut undo = Vec::new();
            if match_atom(atom, &tuple.values, binding, &mut undo) {
                chosen.push(id);
                recurse(instance, atoms, builtins, chosen, binding, on_match);
                chosen.pop();
            }
            for v in undo {
                binding.remove(&v);
            }
        }
    }
    let mut chosen = Vec::new();
    let mut binding = Binding::new();
    recurse(
        instance,
        atoms,
        builtins,
        &mut chosen,
        &mut binding,
        &mut on_match,
    );
}

/// Drop every set that strictly contains another set in the collection,
/// and deduplicate.
fn minimize(sets: BTreeSet<BTreeSet<TupleId>>) -> BTreeSet<BTreeSet<TupleId>> {
    sets.iter()
        .filter(|s| {
            !sets
                .iter()
                .any(|other| other.len() < s.len() && other.is_subset(s))
        })
        .cloned()
        .collect()
}

/// Ground one constraint: the distinct tuple sets of satisfying assignments,
/// minimized under set inclusion. (Atoms mapped to the same tuple collapse.)
pub fn ground_constraint(
    instance: &PDBInstance,
    c: &DenialConstraint,
) -> BTreeSet<BTreeSet<TupleId>> {
    let mut sets = BTreeSet::new();
    enumerate_matches(instance, &c.atoms, &c.builtins, |chosen, _| {
        sets.insert(chosen.iter().copied().collect::<BTreeSet<_>>());
    });
    minimize(sets)
}

/// All minimal conflicting sets of the instance under the given constraints
/// (treated as deterministic), minimized globally across constraints.
pub fn conflicting_sets(
    instance: &PDBInstance,
    constraints: &[DenialConstraint],
) -> Vec<BTreeSet<TupleId>> {
    let mut all = BTreeSet::new();
    for c in constraints {
        all.extend(ground_constraint(instance, c));
    }
    minimize(all).into_iter().collect()
}

/// A hyperedge of the conflict hypergraph: a minimal conflicting set, an
/// optional probability (`None` = deterministic), and the names of the
/// constraints it was grounded from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub nodes: BTreeSet<TupleId>,
    pub prob: Option<Rational>,
    pub sources: Vec<String>,
}

impl Edge {
    pub fn is_deterministic(&self) -> bool {
        self.prob.is_none()
    }
}

/// The conflict hypergraph of an instance under a constraint set. Nodes are
/// all tuples of the instance (also conflict-free ones); edges are the
/// minimal conflicting sets.
#[derive(Debug, Clone)]
pub struct ConflictHypergraph {
    pub nodes: Vec<TupleId>,
    pub edges: Vec<Edge>,
}

impl ConflictHypergraph {
    pub fn deterministic_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.is_deterministic())
    }

    pub fn has_probabilistic_edges(&self) -> bool {
        self.edges.iter().any(|e| !e.is_deterministic())
    }
}

/// Build the conflict hypergraph. Edges of deterministic constraints are
/// deterministic; edges of a probabilistic constraint carry its probability.
///
/// Merging rules for coinciding node sets: deterministic wins over
/// probabilistic; two probabilistic edges keep the larger probability (the
/// stricter obligation). A deterministic edge suppresses every strict
/// superset (such worlds are already excluded); probabilistic edges never
/// suppress anything else.
pub fn build_conflict_hypergraph(
    instance: &PDBInstance,
    constraints: &[DenialConstraint],
) -> ConflictHypergraph {
    // (set -> (prob, sources)); prob None = deterministic.
    let mut merged: BTreeMap<BTreeSet<TupleId>, (Option<Rational>, Vec<String>)> = BTreeMap::new();
    for c in constraints {
        for set in ground_constraint(instance, c) {
            let entry = merged.entry(set).or_insert((c.prob.clone(), Vec::new()));
            if !entry.1.is_empty() {
                entry.0 = match (entry.0.take(), c.prob.clone()) {
                    (None, _) | (_, None) => None,
                    (Some(a), Some(b)) => Some(a.max(b)),
                };
            }
            if !entry.1.contains(&c.name) {
                entry.1.push(c.name.clone());
            }
        }
    }
    let det_sets: Vec<BTreeSet<TupleId>> = merged
        .iter()
        .filter(|(_, (p, _))| p.is_none())
        .map(|(s, _)| s.clone())
        .collect();
    let edges: Vec<Edge> = merged
        .into_iter()
        .filter(|(set, _)| {
            !det_sets
                .iter()
                .any(|d| d.len() < set.len() && d.is_subset(set))
        })
        .map(|(nodes, (prob, sources))| Edge {
            nodes,
            prob,
            sources,
        })
        .collect();
    ConflictHypergraph {
        nodes: instance.tuples.iter().map(|t| t.tuple_id).collect(),
        edges,
    }
}

/// Reduce probabilistic edges to deterministic ones by ear augmentation:
/// an edge `e` with probability `p < 1` becomes the deterministic edge
/// `e ∪ {aux}` where `aux` is a fresh node with marginal probability `p`.
/// Fresh ids are allocated from `next_id` upwards.
///
/// Returns the reduced hypergraph and the marginals of the fresh nodes.
pub fn reduce_probabilistic_constraints(
    h: &ConflictHypergraph,
    next_id: TupleId,
) -> (ConflictHypergraph, Vec<(TupleId, Rational)>) {
    let mut nodes = h.nodes.clone();
    let mut aux = Vec::new();
    let mut fresh = next_id;
    let edges = h
        .edges
        .iter()
        .map(|e| match &e.prob {
            None => e.clone(),
            Some(p) => {
                let id = fresh;
                fresh += 1;
                nodes.push(id);
                aux.push((id, p.clone()));
                let mut augmented = e.nodes.clone();
                augmented.insert(id);
                Edge {
                    nodes: augmented,
                    prob: None,
                    sources: e.sources.clone(),
                }
            }
        })
        .collect();
    (ConflictHypergraph { nodes, edges }, aux)
}
