//! Consistency checking: does some probability distribution over the
//! admissible possible worlds reproduce the tuple marginals? The dispatcher
//! tries syntactic set-level rules first, then per-component structural
//! rules of the conflict hypergraph, and falls back to the exact LP oracle.

use std::collections::{BTreeMap, BTreeSet};

use num::{One, Signed, Zero};

use crate::constraint_lang::{classify, classify_set, ClassTag, DenialConstraint, SetClass, Term};
use crate::exact_lp::{build_world_system, solve_feasible, LpError};
use crate::grounding::{
    build_conflict_hypergraph, ground_constraint, reduce_probabilistic_constraints,
    ConflictHypergraph,
};
use crate::hypergraph_analysis::{
    classify_component, components, Component, ComponentStructure,
};
use crate::model::{
    tuple_name, Interpretation, PDBInstance, ProbabilityBound, Rational, TupleId,
};

/// Engine options.
#[derive(Debug, Clone)]
pub struct Options {
    /// Maximum number of tuples per component for which the LP oracle may
    /// enumerate possible worlds.
    pub world_budget: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options { world_budget: 20 }
    }
}

/// Three-valued verdict outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Consistent,
    Inconsistent,
    Unknown,
}

/// One check performed during dispatch: the scope it covered, the rule used,
/// and its result (with the first violated condition, if any).
#[derive(Debug, Clone)]
pub struct Report {
    pub scope: String,
    pub method: &'static str,
    pub outcome: Outcome,
    pub detail: Option<String>,
}

/// The overall verdict with the per-scope reports in deterministic order.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub outcome: Outcome,
    pub reports: Vec<Report>,
}

impl Verdict {
    /// The first violated condition, if any.
    pub fn first_violation(&self) -> Option<&str> {
        self.reports
            .iter()
            .find(|r| r.outcome == Outcome::Inconsistent)
            .and_then(|r| r.detail.as_deref())
    }
}

/// Errors of the consistency layer.
#[derive(Debug, thiserror::Error)]
pub enum ConsistencyError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("instance is inconsistent; no model exists")]
    Inconsistent,
    #[error("consistency is unknown within the world budget")]
    Unknown,
    #[error("certificate support would exceed {0} worlds")]
    CertificateTooLarge(usize),
}

/// Lower-bound marginals of all nodes (instance tuples plus auxiliary ear
/// nodes introduced by the probabilistic-constraint reduction). Consistency
/// is decided on the minimum probabilities.
pub type Marginals = BTreeMap<TupleId, Rational>;

fn format_nodes(nodes: &BTreeSet<TupleId>) -> String {
    let names: Vec<String> = nodes.iter().map(|&t| tuple_name(t)).collect();
    format!("{{{}}}", names.join(", "))
}

fn format_sum(nodes: &BTreeSet<TupleId>, marg: &Marginals) -> String {
    nodes
        .iter()
        .map(|t| marg[t].to_string())
        .collect::<Vec<_>>()
        .join(" + ")
}

/// The generic edge inequality `sum p(t) <= |e| - 1`, necessary for any
/// shape and sufficient for hypertrees. Returns the first violated edge.
pub fn check_hypertree_rule(
    edges: &[BTreeSet<TupleId>],
    marg: &Marginals,
) -> Option<String> {
    for e in edges {
        let sum: Rational = e.iter().map(|t| marg[t].clone()).sum();
        let bound = Rational::from(num::BigInt::from(e.len() as i64 - 1));
        if sum > bound {
            return Some(format!(
                "edge {}: {} = {} > {}",
                format_nodes(e),
                format_sum(e, marg),
                sum,
                bound
            ));
        }
    }
    None
}

/// Ring rule: the edge inequalities plus the global ring condition
/// `sum_N p(t) - |N| + ceil(|E| / 2) <= 0`.
pub fn check_ring_rule(comp: &Component, marg: &Marginals) -> Option<String> {
    if let Some(v) = check_hypertree_rule(&comp.edges, marg) {
        return Some(v);
    }
    let sum: Rational = comp.nodes.iter().map(|t| marg[t].clone()).sum();
    let n = Rational::from(num::BigInt::from(comp.nodes.len() as i64));
    let half_edges = Rational::from(num::BigInt::from(comp.edges.len().div_ceil(2) as i64));
    let value = &sum - &n + &half_edges;
    if value.is_positive() {
        Some(format!(
            "ring over {}: {} - {} + {} = {} > 0",
            format_nodes(&comp.nodes),
            sum,
            n,
            half_edges,
            value
        ))
    } else {
        None
    }
}

/// Clique rule: the node probabilities sum to at most 1.
pub fn check_clique_rule(comp: &Component, marg: &Marginals) -> Option<String> {
    let sum: Rational = comp.nodes.iter().map(|t| marg[t].clone()).sum();
    if sum > Rational::one() {
        Some(format!(
            "clique {}: {} = {} > 1",
            format_nodes(&comp.nodes),
            format_sum(&comp.nodes, marg),
            sum
        ))
    } else {
        None
    }
}

/// Complete-multipartite (one-FD-per-relation) rule: the maxima of the parts
/// (maximal independent sets) sum to at most 1.
pub fn check_fd_rule(
    comp: &Component,
    parts: &[BTreeSet<TupleId>],
    marg: &Marginals,
) -> Option<String> {
    let maxima: Vec<Rational> = parts
        .iter()
        .map(|p| p.iter().map(|t| marg[t].clone()).max().expect("nonempty part"))
        .collect();
    let sum: Rational = maxima.iter().cloned().sum();
    if sum > Rational::one() {
        Some(format!(
            "component {}: {} = {} > 1 (maxima of the maximal independent sets)",
            format_nodes(&comp.nodes),
            maxima
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(" + "),
            sum
        ))
    } else {
        None
    }
}

/// Join-free rule: the edge inequality over every conflicting set of the
/// constraint (sufficient for a join-free constraint on its own).
pub fn check_joinfree_rule(
    instance: &PDBInstance,
    c: &DenialConstraint,
    marg: &Marginals,
) -> Option<String> {
    let edges: Vec<BTreeSet<TupleId>> = ground_constraint(instance, c).into_iter().collect();
    check_hypertree_rule(&edges, marg)
}

// ---------------------------------------------------------------------------
// Binary EGD rule
// ---------------------------------------------------------------------------

/// Position layout of a canonical single-`!=` binary EGD.
struct BegdShape {
    /// Shared-variable positions: (position in atom 1, position in atom 2).
    x_pairs: Vec<(usize, usize)>,
    /// Positions of the compared variables; `cross` tells whether they come
    /// from the two different atoms (z1 from atom 1, z2 from atom 2).
    z1: usize,
    z2: usize,
    cross: bool,
}

/// Recognize the canonical shape covered by the closed-form case analysis:
/// one `!=` conjunct, shared variables occurring once per atom (at the same
/// position when both atoms use the same relation), and comparison variables
/// occurring exactly once, outside the join positions.
fn begd_shape(c: &DenialConstraint) -> Option<BegdShape> {
    if c.builtins.len() != 1 || c.atoms.len() != 2 {
        return None;
    }
    let var = |t: &Term| match t {
        Term::Var(v) => Some(v.clone()),
        Term::Const(_) => None,
    };
    let v1: Vec<String> = c.atoms[0].terms.iter().map(var).collect::<Option<_>>()?;
    let v2: Vec<String> = c.atoms[1].terms.iter().map(var).collect::<Option<_>>()?;
    // Variables must be distinct within each atom.
    let distinct = |v: &[String]| v.iter().collect::<BTreeSet<_>>().len() == v.len();
    if !distinct(&v1) || !distinct(&v2) {
        return None;
    }
    let same_relation = c.atoms[0].relation == c.atoms[1].relation;
    let mut x_pairs = Vec::new();
    for (i, v) in v1.iter().enumerate() {
        if let Some(j) = v2.iter().position(|w| w == v) {
            if same_relation && i != j {
                return None; // cross-position self-join: not canonical
            }
            x_pairs.push((i, j));
        }
    }
    let (zl, zr) = match (&c.builtins[0].left, &c.builtins[0].right) {
        (Term::Var(l), Term::Var(r)) => (l.clone(), r.clone()),
        _ => return None,
    };
    let shared: BTreeSet<&String> = x_pairs.iter().map(|&(i, _)| &v1[i]).collect();
    if shared.contains(&zl) || shared.contains(&zr) {
        return None;
    }
    let find = |v: &String| -> Option<(usize, usize)> {
        if let Some(i) = v1.iter().position(|w| w == v) {
            Some((0, i))
        } else {
            v2.iter().position(|w| w == v).map(|i| (1, i))
        }
    };
    let ((a1, p1), (a2, p2)) = (find(&zl)?, find(&zr)?);
    match (a1, a2) {
        (0, 1) => Some(BegdShape {
            x_pairs,
            z1: p1,
            z2: p2,
            cross: true,
        }),
        (1, 0) => Some(BegdShape {
            x_pairs,
            z1: p2,
            z2: p1,
            cross: true,
        }),
        (0, 0) | (1, 1) => {
            if !same_relation {
                return None; // same-atom comparison across two relations: declined
            }
            Some(BegdShape {
                x_pairs,
                z1: p1,
                z2: p2,
                cross: false,
            })
        }
        _ => unreachable!(),
    }
}

/// Apply the closed-form binary-EGD consistency rule. Returns `None` when
/// the constraint shape is outside the implemented case analysis (the
/// caller then falls back to the structural rules), otherwise the first
/// violated condition or confirmation of consistency.
pub fn check_begd_rule(
    instance: &PDBInstance,
    c: &DenialConstraint,
    marg: &Marginals,
) -> Option<Option<String>> {
    let shape = begd_shape(c)?;
    let r1 = &c.atoms[0].relation;
    let r2 = &c.atoms[1].relation;
    if r1 == r2 {
        // Case 1: one relation. Necessary: no tuple whose Z1 and Z2 values
        // differ (it would conflict with itself).
        for &id in instance.relation_tuples(r1) {
            let t = &instance.tuples[id];
            if t.values[shape.z1] != t.values[shape.z2] {
                return Some(Some(format!(
                    "{}: tuple {} has different values at the compared positions \
                     and conflicts with itself",
                    c.name,
                    tuple_name(id)
                )));
            }
        }
        if !shape.cross {
            return Some(None); // sufficient when z1, z2 share an atom
        }
        // Group by the join values; per group the maxima per compared value
        // must sum to at most 1.
        let mut groups: BTreeMap<Vec<&crate::model::Value>, BTreeMap<&crate::model::Value, Rational>> =
            BTreeMap::new();
        for &id in instance.relation_tuples(r1) {
            let t = &instance.tuples[id];
            let key: Vec<_> = shape.x_pairs.iter().map(|&(i, _)| &t.values[i]).collect();
            let by_value = groups.entry(key).or_default();
            let p = marg[&id].clone();
            by_value
                .entry(&t.values[shape.z1])
                .and_modify(|m| {
                    if p > *m {
                        *m = p.clone()
                    }
                })
                .or_insert(p);
        }
        for (key, by_value) in groups {
            let sum: Rational = by_value.values().cloned().sum();
            if sum > Rational::one() {
                return Some(Some(format!(
                    "{}: group ({}) has compared-value maxima summing to {} > 1",
                    c.name,
                    key.iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join(", "),
                    sum
                )));
            }
        }
        Some(None)
    } else {
        // Case 2: two relations; for every shared join combination, every
        // pair of differing compared values must satisfy the pairwise bound.
        let collect = |rel: &str, x_pos: &dyn Fn(usize) -> usize, z: usize| {
            let mut groups: BTreeMap<
                Vec<crate::model::Value>,
                BTreeMap<crate::model::Value, Rational>,
            > = BTreeMap::new();
            for &id in instance.relation_tuples(rel) {
                let t = &instance.tuples[id];
                let key: Vec<_> = (0..shape.x_pairs.len())
                    .map(|k| t.values[x_pos(k)].clone())
                    .collect();
                let p = marg[&id].clone();
                groups
                    .entry(key)
                    .or_default()
                    .entry(t.values[z].clone())
                    .and_modify(|m| {
                        if p > *m {
                            *m = p.clone()
                        }
                    })
                    .or_insert(p);
            }
            groups
        };
        let g1 = collect(r1, &|k| shape.x_pairs[k].0, shape.z1);
        let g2 = collect(r2, &|k| shape.x_pairs[k].1, shape.z2);
        for (key, by_value1) in &g1 {
            let Some(by_value2) = g2.get(key) else {
                continue;
            };
            for (c1, p1) in by_value1 {
                for (c2, p2) in by_value2 {
                    if c1 != c2 && p1 + p2 > Rational::one() {
                        return Some(Some(format!(
                            "{}: join values ({}) admit compared values {} and {} \
                             with probabilities {} + {} > 1",
                            c.name,
                            key.iter()
                                .map(|v| v.to_string())
                                .collect::<Vec<_>>()
                                .join(", "),
                            c1,
                            c2,
                            p1,
                            p2
                        )));
                    }
                }
            }
        }
        Some(None)
    }
}

// ---------------------------------------------------------------------------
// LP oracle
// ---------------------------------------------------------------------------

/// Decide consistency of one component by LP feasibility over its possible
/// worlds. `None` when the component exceeds the world budget.
pub fn oracle_consistency(
    comp: &Component,
    marg: &Marginals,
    budget: usize,
) -> Option<bool> {
    let tuples: Vec<(TupleId, ProbabilityBound)> = comp
        .nodes
        .iter()
        .map(|&t| (t, ProbabilityBound::point(marg[&t].clone())))
        .collect();
    match build_world_system(&tuples, &comp.edges, budget) {
        Ok(ws) => Some(solve_feasible(&ws.lp).is_some()),
        Err(LpError::BudgetExceeded { .. }) => None,
    }
}

/// The trivial lower bound `max(0, sum p - (|T| - 1))` on the probability of
/// the conjunction of a tuple set.
pub fn pmin_lower_bound(probs: &[Rational]) -> Rational {
    let sum: Rational = probs.iter().cloned().sum();
    let slack = sum - Rational::from(num::BigInt::from(probs.len() as i64 - 1));
    slack.max(Rational::zero())
}

// ---------------------------------------------------------------------------
// Dispatcher
// ---------------------------------------------------------------------------

/// Lower-bound marginals of the instance tuples plus auxiliary nodes.
pub fn lo_marginals(instance: &PDBInstance, aux: &[(TupleId, Rational)]) -> Marginals {
    let mut m: Marginals = instance
        .tuples
        .iter()
        .map(|t| (t.tuple_id, t.prob.lo.clone()))
        .collect();
    for (id, p) in aux {
        m.insert(*id, p.clone());
    }
    m
}

fn structural_report(comp: &Component, index: usize, marg: &Marginals, budget: usize) -> Report {
    let scope = format!("component {} {}", index + 1, format_nodes(&comp.nodes));
    let (method, violation): (&'static str, Option<String>) = match classify_component(comp) {
        ComponentStructure::Singleton => {
            let v = comp.edges.iter().find(|e| e.len() == 1).map(|e| {
                format!(
                    "tuple {} conflicts with itself but has probability {} > 0",
                    format_nodes(e),
                    marg[e.iter().next().unwrap()]
                )
            });
            ("singleton", v)
        }
        ComponentStructure::Clique => ("clique rule", check_clique_rule(comp, marg)),
        ComponentStructure::Hypertree(_) => {
            ("hypertree rule", check_hypertree_rule(&comp.edges, marg))
        }
        ComponentStructure::Ring(_) => ("ring rule", check_ring_rule(comp, marg)),
        ComponentStructure::CompleteMultipartite(parts) => {
            ("multipartite rule", check_fd_rule(comp, &parts, marg))
        }
        ComponentStructure::General => match oracle_consistency(comp, marg, budget) {
            Some(true) => ("lp oracle", None),
            Some(false) => (
                "lp oracle",
                Some(format!(
                    "no distribution over the admissible worlds of {} matches the marginals",
                    format_nodes(&comp.nodes)
                )),
            ),
            None => {
                return Report {
                    scope,
                    method: "lp oracle",
                    outcome: Outcome::Unknown,
                    detail: Some(format!(
                        "component has {} tuples, exceeding the world budget of {}",
                        comp.nodes.len(),
                        budget
                    )),
                }
            }
        },
    };
    Report {
        scope,
        method,
        outcome: if violation.is_some() {
            Outcome::Inconsistent
        } else {
            Outcome::Consistent
        },
        detail: violation,
    }
}

fn structural_reports(
    h: &ConflictHypergraph,
    marg: &Marginals,
    budget: usize,
    reports: &mut Vec<Report>,
) {
    for (i, comp) in components(h).iter().enumerate() {
        reports.push(structural_report(comp, i, marg, budget));
    }
}

/// Check consistency of the instance against the constraints.
///
/// Dispatch order: syntactic set-level rules (one FD per relation; pairwise
/// relation-disjoint join-free/BEGD constraints), then per-component
/// structural rules (singleton, clique, hypertree, ring, complete
/// multipartite), then the exact LP oracle within the world budget.
/// Probabilistic constraints are first reduced to deterministic ones by ear
/// augmentation and always take the structural path.
pub fn check_consistency(
    instance: &PDBInstance,
    constraints: &[DenialConstraint],
    opts: &Options,
) -> Verdict {
    let h = build_conflict_hypergraph(instance, constraints);
    let mut reports = Vec::new();
    if h.has_probabilistic_edges() {
        let (reduced, aux) = reduce_probabilistic_constraints(&h, instance.tuples.len());
        let marg = lo_marginals(instance, &aux);
        structural_reports(&reduced, &marg, opts.world_budget, &mut reports);
        return finish(reports);
    }
    let marg = lo_marginals(instance, &[]);
    match classify_set(constraints) {
        SetClass::OneFdPerRelation if !constraints.is_empty() => {
            for (i, comp) in components(&h).iter().enumerate() {
                let scope = format!("component {} {}", i + 1, format_nodes(&comp.nodes));
                match classify_component(comp) {
                    ComponentStructure::Singleton => reports.push(Report {
                        scope,
                        method: "singleton",
                        outcome: Outcome::Consistent,
                        detail: None,
                    }),
                    ComponentStructure::CompleteMultipartite(parts) => {
                        let v = check_fd_rule(comp, &parts, &marg);
                        reports.push(Report {
                            scope,
                            method: "fd rule",
                            outcome: if v.is_some() {
                                Outcome::Inconsistent
                            } else {
                                Outcome::Consistent
                            },
                            detail: v,
                        });
                    }
                    // The FD theorem guarantees the multipartite shape for
                    // canonical FDs; other shapes can only arise from
                    // multi-conjunct patterns. Fall back structurally.
                    other => {
                        if let Some(parts) = crate::hypergraph_analysis::multipartite_partition(comp)
                        {
                            let v = check_fd_rule(comp, &parts, &marg);
                            reports.push(Report {
                                scope,
                                method: "fd rule",
                                outcome: if v.is_some() {
                                    Outcome::Inconsistent
                                } else {
                                    Outcome::Consistent
                                },
                                detail: v,
                            });
                        } else {
                            let _ = other;
                            reports.push(structural_report(comp, i, &marg, opts.world_budget));
                        }
                    }
                }
            }
        }
        SetClass::DisjointJoinFreeOrBegd => {
            // Relation-disjoint constraints are independent; handle each by
            // its own rule where the shape is covered, structurally else.
            let mut leftover: Vec<DenialConstraint> = Vec::new();
            for c in constraints {
                let class = classify(c);
                if class.join_free {
                    let v = check_joinfree_rule(instance, c, &marg);
                    reports.push(Report {
                        scope: format!("constraint {}", c.name),
                        method: "join-free rule",
                        outcome: if v.is_some() {
                            Outcome::Inconsistent
                        } else {
                            Outcome::Consistent
                        },
                        detail: v,
                    });
                } else if matches!(class.tag, ClassTag::BinaryEgd | ClassTag::Fd { .. }) {
                    match check_begd_rule(instance, c, &marg) {
                        Some(v) => reports.push(Report {
                            scope: format!("constraint {}", c.name),
                            method: "begd rule",
                            outcome: if v.is_some() {
                                Outcome::Inconsistent
                            } else {
                                Outcome::Consistent
                            },
                            detail: v,
                        }),
                        None => leftover.push(c.clone()),
                    }
                } else {
                    leftover.push(c.clone());
                }
            }
            if !leftover.is_empty() {
                let sub = build_conflict_hypergraph(instance, &leftover);
                // Restrict to nodes of the leftover constraints' relations to
                // avoid duplicating singleton reports for unrelated tuples.
                let relations: BTreeSet<&str> = leftover
                    .iter()
                    .flat_map(|c| c.relations())
                    .collect();
                let sub = ConflictHypergraph {
                    nodes: sub
                        .nodes
                        .into_iter()
                        .filter(|&t| relations.contains(instance.tuples[t].relation.as_str()))
                        .collect(),
                    edges: sub.edges,
                };
                structural_reports(&sub, &marg, opts.world_budget, &mut reports);
            }
        }
        _ => structural_reports(&h, &marg, opts.world_budget, &mut reports),
    }
    finish(reports)
}

fn finish(reports: Vec<Report>) -> Verdict {
    let outcome = if reports.iter().any(|r| r.outcome == Outcome::Inconsistent) {
        Outcome::Inconsistent
    } else if reports.iter().any(|r| r.outcome == Outcome::Unknown) {
        Outcome::Unknown
    } else {
        Outcome::Consistent
    };
    Verdict { outcome, reports }
}

/// Produce a model certificate: an interpretation over the instance's tuples
/// matching all marginals and assigning zero mass to constraint-violating
/// worlds. Solves the LP per component (within the budget) and combines the
/// component models as a product distribution.
pub fn model_certificate(
    instance: &PDBInstance,
    constraints: &[DenialConstraint],
    opts: &Options,
) -> Result<Interpretation, ConsistencyError> {
    const MAX_SUPPORT: usize = 1 << 16;
    let h = build_conflict_hypergraph(instance, constraints);
    let (h, aux) = if h.has_probabilistic_edges() {
        reduce_probabilistic_constraints(&h, instance.tuples.len())
    } else {
        (h, Vec::new())
    };
    let marg = lo_marginals(instance, &aux);
    let n_real = instance.tuples.len();
    // Accumulated distribution over real tuples.
    let mut worlds: BTreeMap<BTreeSet<TupleId>, Rational> =
        BTreeMap::from([(BTreeSet::new(), Rational::one())]);
    for comp in components(&h) {
        let tuples: Vec<(TupleId, ProbabilityBound)> = comp
            .nodes
            .iter()
            .map(|&t| (t, ProbabilityBound::point(marg[&t].clone())))
            .collect();
        let ws = build_world_system(&tuples, &comp.edges, opts.world_budget)?;
        let Some(solution) = solve_feasible(&ws.lp) else {
            return Err(ConsistencyError::Inconsistent);
        };
        let mut next: BTreeMap<BTreeSet<TupleId>, Rational> = BTreeMap::new();
        for (mask, mass) in ws.distribution(&solution) {
            let mut present: BTreeSet<TupleId> = BTreeSet::new();
            for (i, &t) in ws.tuples.iter().enumerate() {
                if mask & (1 << i) != 0 && t < n_real {
                    present.insert(t);
                }
            }
            for (acc_world, acc_mass) in &worlds {
                let mut w = acc_world.clone();
                w.extend(present.iter().copied());
                let m = acc_mass * mass;
                *next.entry(w).or_insert_with(Rational::zero) += m;
            }
            if next.len() > MAX_SUPPORT {
                return Err(ConsistencyError::CertificateTooLarge(MAX_SUPPORT));
            }
        }
        worlds = next;
    }
    Ok(Interpretation { worlds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint_lang::parse_constraints;
    use crate::model::{load_instance, rat};

    fn room(probs: [&str; 3]) -> (PDBInstance, Vec<DenialConstraint>) {
        let schema =
            "relation Room(id:integer, hid:integer, price:rational, type:string, view:string)\n";
        let data = format!(
            "id,hid,price,type,view,p\n1,1,120,Std,Sea,{}\n2,1,70,Suite,Courtyard,{}\n3,1,120,Std,Sea,{}\n",
            probs[0], probs[1], probs[2]
        );
        let (inst, _) = load_instance(schema, &[("Room".to_string(), data)]).unwrap();
        let (cs, _) = parse_constraints(
            "ic: ![Room(x1, x2, x3, \"Std\", x4), Room(x5, x2, x6, \"Suite\", x7), x3 > x6]",
            &inst.schemas,
        )
        .unwrap();
        (inst, cs)
    }

    #[test]
    fn room_case1_inconsistent_with_named_edge() {
        let (inst, cs) = room(["3/4", "1/2", "1/2"]);
        let v = check_consistency(&inst, &cs, &Options::default());
        assert_eq!(v.outcome, Outcome::Inconsistent);
        let violation = v.first_violation().unwrap();
        assert!(violation.contains("{t1, t2}"), "got: {violation}");
    }

    #[test]
    fn room_case2_consistent_with_unique_model() {
        let (inst, cs) = room(["1/2", "1/2", "1/2"]);
        let v = check_consistency(&inst, &cs, &Options::default());
        assert_eq!(v.outcome, Outcome::Consistent);
        let m = model_certificate(&inst, &cs, &Options::default()).unwrap();
        m.validate(&inst).unwrap();
        // The unique model: {t1, t3} and {t2}, each with mass 1/2.
        assert_eq!(
            m.worlds,
            BTreeMap::from([
                (BTreeSet::from([0, 2]), rat(1, 2)),
                (BTreeSet::from([1]), rat(1, 2)),
            ])
        );
    }

    #[test]
    fn room_case3_consistent() {
        let (inst, cs) = room(["1/2", "1/4", "1/2"]);
        let v = check_consistency(&inst, &cs, &Options::default());
        assert_eq!(v.outcome, Outcome::Consistent);
        let m = model_certificate(&inst, &cs, &Options::default()).unwrap();
        m.validate(&inst).unwrap();
    }

    fn from_edges(
        probs: &[(&str, &str)],
        edges: &[&[usize]],
    ) -> (PDBInstance, Vec<DenialConstraint>) {
        // Build a single-relation instance with constant-pinned constraints
        // producing exactly the requested edges.
        let schema = "relation N(id:string)\n";
        let mut data = String::from("id,p\n");
        for (id, p) in probs {
            data.push_str(&format!("{id},{p}\n"));
        }
        let (inst, _) = load_instance(schema, &[("N".to_string(), data)]).unwrap();
        let mut ics = String::new();
        for (k, e) in edges.iter().enumerate() {
            let atoms: Vec<String> = e
                .iter()
                .map(|&i| format!("N(\"{}\")", probs[i].0))
                .collect();
            ics.push_str(&format!("e{}: ![{}]\n", k + 1, atoms.join(", ")));
        }
        let (cs, _) = parse_constraints(&ics, &inst.schemas).unwrap();
        (inst, cs)
    }

    #[test]
    fn ring_rule_detects_global_violation() {
        // Edge inequalities hold but the ring condition fails for p4 = 1.
        let probs = [("t1", "1/2"), ("t2", "1/2"), ("t3", "1/2"), ("t4", "1")];
        let edges: [&[usize]; 3] = [&[0, 1, 3], &[0, 2, 3], &[1, 2]];
        let (inst, cs) = from_edges(&probs, &edges);
        let v = check_consistency(&inst, &cs, &Options::default());
        assert_eq!(v.outcome, Outcome::Inconsistent);
        assert!(v.first_violation().unwrap().contains("ring"));
        assert_eq!(v.reports[0].method, "ring rule");

        // Lowering p(t4) to 1/2 yields consistency.
        let probs = [("t1", "1/2"), ("t2", "1/2"), ("t3", "1/2"), ("t4", "1/2")];
        let (inst, cs) = from_edges(&probs, &edges);
        let v = check_consistency(&inst, &cs, &Options::default());
        assert_eq!(v.outcome, Outcome::Consistent);

        // Both verdicts agree with the LP oracle.
        let probs_sets: [[(&str, &str); 4]; 2] = [
            [("t1", "1/2"), ("t2", "1/2"), ("t3", "1/2"), ("t4", "1")],
            [("t1", "1/2"), ("t2", "1/2"), ("t3", "1/2"), ("t4", "1/2")],
        ];
        for (i, probs) in probs_sets.iter().enumerate() {
            let (inst, cs) = from_edges(probs, &edges);
            let h = build_conflict_hypergraph(&inst, &cs);
            let marg = lo_marginals(&inst, &[]);
            let comp = &components(&h)[0];
            let feasible = oracle_consistency(comp, &marg, 20).unwrap();
            assert_eq!(feasible, i == 1);
        }
    }

    #[test]
    fn cyclic_counterexample_needs_the_oracle() {
        // All edge inequalities hold, yet the instance is inconsistent;
        // only the LP oracle detects it.
        let probs = [
            ("t1", "3/4"),
            ("t2", "1"),
            ("t3", "3/4"),
            ("t4", "3/4"),
            ("t5", "1"),
            ("t6", "1/2"),
            ("t7", "1/2"),
            ("t8", "1/2"),
            ("t9", "1/2"),
        ];
        let edges: [&[usize]; 5] = [
            &[0, 3, 6],
            &[0, 1, 2, 3, 4, 5],
            &[2, 5, 8],
            &[5, 7],
            &[7, 8],
        ];
        let (inst, cs) = from_edges(&probs, &edges);
        let marg = lo_marginals(&inst, &[]);
        let h = build_conflict_hypergraph(&inst, &cs);
        let comp = &components(&h)[0];
        assert_eq!(comp.edges.len(), 5);
        // Every local edge inequality holds...
        assert!(check_hypertree_rule(&comp.edges, &marg).is_none());
        // ...but the shape is general and the LP oracle refutes consistency.
        assert!(matches!(
            classify_component(comp),
            ComponentStructure::General
        ));
        let v = check_consistency(&inst, &cs, &Options::default());
        assert_eq!(v.outcome, Outcome::Inconsistent);
        assert_eq!(v.reports[0].method, "lp oracle");
    }

    #[test]
    fn hypertree_rule_on_person_example() {
        let schema =
            "relation Person(name:string, age:integer, parent:string, date:integer, city:string)\n";
        let data = "name,age,parent,date,city,p\n\
                    A,40,B,2010,NY,1/2\nA,40,B,2012,Rome,1/2\nA,40,C,2010,NY,1/2\n\
                    A,40,D,2010,NY,1/2\nC,30,E,2010,NY,1/2\n";
        let (inst, _) = load_instance(schema, &[("Person".to_string(), data.to_string())]).unwrap();
        let (cs, _) = parse_constraints(
            "ic1: ![Person(x1, y1, z1, v1, w1), Person(x1, y2, z2, v2, w2), Person(x1, y3, z3, v3, w3), z1 != z2, z1 != z3, z2 != z3]\n\
             ic2: ![Person(x1, y1, z1, v1, w1), Person(z1, y2, z2, v2, w2), y1 > y2]\n",
            &inst.schemas,
        )
        .unwrap();
        let v = check_consistency(&inst, &cs, &Options::default());
        assert_eq!(v.outcome, Outcome::Consistent);
        assert_eq!(v.reports.len(), 1);
        assert_eq!(v.reports[0].method, "hypertree rule");
    }

    #[test]
    fn joinfree_rule_on_employee_example() {
        let schema = "relation Employee(name:string, age:integer, team:string)\n";
        let data = "name,age,team,p\nP. Jane,35,A,1\nT. Lisbon,25,B,1\nW. Rigsby,40,B,1/2\n\
                    K. Cho,40,B,1/2\nG. Van Pelt,22,C,1\nG. Bertram,40,C,1/2\nR. John,40,C,1/2\n";
        let (inst, _) =
            load_instance(schema, &[("Employee".to_string(), data.to_string())]).unwrap();
        let (cs, _) = parse_constraints(
            "ic: ![Employee(x1, x2, 'A'), Employee(x3, x4, 'B'), Employee(x5, x6, 'C'), \
             x2 > 30, x4 > 30, x6 > 30]",
            &inst.schemas,
        )
        .unwrap();
        let v = check_consistency(&inst, &cs, &Options::default());
        assert_eq!(v.outcome, Outcome::Consistent);
        assert_eq!(v.reports[0].method, "join-free rule");
        // Certificate exists and matches the marginals.
        let m = model_certificate(&inst, &cs, &Options::default()).unwrap();
        m.validate(&inst).unwrap();
    }

    fn fd_person() -> (PDBInstance, Vec<DenialConstraint>) {
        let schema = "relation Person(name:string, city:string, state:string)\n";
        let data = "name,city,state,p\n\
                    B. Van de Kamp,Sioux City,IA,1/2\nS. Delfino,Sioux City,IA,1/4\n\
                    L. Scavo,Sioux City,NE,1/4\nG. Solis,Sioux City,NE,1/4\n\
                    E. Britt,Sioux City,SD,1/4\nK. Mayfair,Baltimore,MD,3/4\n\
                    R. Perry,Fargo,ND,3/4\nM. A. Young,Fargo,ND,1/4\nK. McCluskey,Fargo,MN,1/4\n";
        let (inst, _) = load_instance(schema, &[("Person".to_string(), data.to_string())]).unwrap();
        let (cs, _) = parse_constraints(
            "ic: ![Person(x1, x2, x3), Person(x4, x2, x5), x3 != x5]",
            &inst.schemas,
        )
        .unwrap();
        (inst, cs)
    }

    #[test]
    fn fd_rule_on_city_state_example() {
        let (inst, cs) = fd_person();
        assert_eq!(classify_set(&cs), SetClass::OneFdPerRelation);
        let v = check_consistency(&inst, &cs, &Options::default());
        assert_eq!(v.outcome, Outcome::Consistent);
        // Three components: {t1..t5} (fd rule), {t6} (singleton),
        // {t7,t8,t9} (fd rule).
        assert_eq!(v.reports.len(), 3);
        assert_eq!(v.reports[0].method, "fd rule");
        assert_eq!(v.reports[1].method, "singleton");
        assert_eq!(v.reports[2].method, "fd rule");
        // Pushing p(t5) to 3/4 violates the first component's inequality:
        // 1/2 + 1/4 + 3/4 > 1.
        let (mut inst2, cs2) = fd_person();
        inst2.tuples[4].prob = ProbabilityBound::point(rat(3, 4));
        let v = check_consistency(&inst2, &cs2, &Options::default());
        assert_eq!(v.outcome, Outcome::Inconsistent);
        assert!(v.first_violation().unwrap().contains("1/2 + 1/4 + 3/4"));
    }

    #[test]
    fn begd_rule_cases() {
        // Case 1 cross-atom: same relation, join on a, comparison across
        // atoms on the same position (an FD-like shape but exercised through
        // the BEGD rule directly).
        let schema = "relation R(a:string, b:string)\nrelation S(a:string, c:string)\n";
        let data_r = "a,b,p\nx,u,3/4\nx,v,1/2\ny,u,1\n";
        let (inst, _) = load_instance(schema, &[("R".to_string(), data_r.to_string())]).unwrap();
        let (cs, _) = parse_constraints(
            "e: ![R(a, b1), R(a, b2), b1 != b2]",
            &inst.schemas,
        )
        .unwrap();
        let marg = lo_marginals(&inst, &[]);
        // 3/4 + 1/2 > 1 within group x.
        let v = check_begd_rule(&inst, &cs[0], &marg).unwrap();
        assert!(v.is_some());
        let v = check_consistency(&inst, &cs, &Options::default());
        assert_eq!(v.outcome, Outcome::Inconsistent);

        // Case 2: two relations.
        let data_r = "a,b,p\nx,u,3/4\n";
        let data_s = "a,c,p\nx,v,1/2\nx,u,1\n";
        let (inst, _) = load_instance(
            schema,
            &[
                ("R".to_string(), data_r.to_string()),
                ("S".to_string(), data_s.to_string()),
            ],
        )
        .unwrap();
        let (cs, _) = parse_constraints(
            "e: ![R(a, z1), S(a, z2), z1 != z2]",
            &inst.schemas,
        )
        .unwrap();
        let marg = lo_marginals(&inst, &[]);
        // p(R:x,u) = 3/4 conflicts with p(S:x,v) = 1/2: 5/4 > 1.
        let v = check_begd_rule(&inst, &cs[0], &marg).unwrap();
        assert!(v.is_some());
        let v = check_consistency(&inst, &cs, &Options::default());
        assert_eq!(v.outcome, Outcome::Inconsistent);
        assert_eq!(v.reports[0].method, "begd rule");

        // Consistent variant.
        let data_s = "a,c,p\nx,v,1/4\nx,u,1\n";
        let (inst, _) = load_instance(
            schema,
            &[
                ("R".to_string(), data_r.to_string()),
                ("S".to_string(), data_s.to_string()),
            ],
        )
        .unwrap();
        let v = check_consistency(&inst, &cs, &Options::default());
        assert_eq!(v.outcome, Outcome::Consistent);
    }

    #[test]
    fn begd_same_atom_comparison() {
        // z1 and z2 in the same atom: consistency iff no tuple has
        // differing values at the two positions.
        let schema = "relation R(a:string, b:string, c:string)\n";
        let data = "a,b,c,p\nx,u,u,1/2\ny,v,v,1/2\n";
        let (inst, _) = load_instance(schema, &[("R".to_string(), data.to_string())]).unwrap();
        let (cs, _) = parse_constraints(
            "e: ![R(a, z1, z2), R(a, b2, c2), z1 != z2]",
            &inst.schemas,
        )
        .unwrap();
        let v = check_consistency(&inst, &cs, &Options::default());
        assert_eq!(v.outcome, Outcome::Consistent);

        let data = "a,b,c,p\nx,u,w,1/2\n";
        let (inst, _) = load_instance(schema, &[("R".to_string(), data.to_string())]).unwrap();
        let v = check_consistency(&inst, &cs, &Options::default());
        assert_eq!(v.outcome, Outcome::Inconsistent);
        assert!(v.first_violation().unwrap().contains("conflicts with itself"));
    }

    #[test]
    fn probabilistic_constraint_reduction_path() {
        // Two mutually exclusive tuples under a constraint holding with
        // probability 3/4: p = (3/4, 1/2) is consistent with the relaxed
        // obligation but not with the hard one.
        let schema = "relation R(a:string)\n";
        let data = "a,p\nx,3/4\ny,1/2\n";
        let (inst, _) = load_instance(schema, &[("R".to_string(), data.to_string())]).unwrap();
        let (hard, _) =
            parse_constraints("ic: ![R(u), R(v), u != v]", &inst.schemas).unwrap();
        let v = check_consistency(&inst, &hard, &Options::default());
        assert_eq!(v.outcome, Outcome::Inconsistent);

        let (soft, _) =
            parse_constraints("ic: ![R(u), R(v), u != v] @ 3/4", &inst.schemas).unwrap();
        let v = check_consistency(&inst, &soft, &Options::default());
        assert_eq!(v.outcome, Outcome::Consistent);

        // With probability 1/2 even p = (3/4, 3/4) becomes consistent, while
        // the ear-augmented edge still forbids p = (1, 1).
        let data = "a,p\nx,1\ny,1\n";
        let (inst1, _) = load_instance(schema, &[("R".to_string(), data.to_string())]).unwrap();
        let (half, _) =
            parse_constraints("ic: ![R(u), R(v), u != v] @ 1/2", &inst1.schemas).unwrap();
        let v = check_consistency(&inst1, &half, &Options::default());
        assert_eq!(v.outcome, Outcome::Inconsistent);
    }

    #[test]
    fn budget_exhaustion_yields_unknown() {
        // A general-shaped component larger than the budget.
        let probs: Vec<(String, &str)> = (0..6).map(|i| (format!("t{i}"), "1/2")).collect();
        let probs_ref: Vec<(&str, &str)> = probs.iter().map(|(s, p)| (s.as_str(), *p)).collect();
        let edges: [&[usize]; 4] = [&[0, 1, 2], &[2, 3, 4], &[4, 5, 0], &[1, 3, 5]];
        let (inst, cs) = from_edges(&probs_ref, &edges);
        let v = check_consistency(&inst, &cs, &Options { world_budget: 4 });
        assert_eq!(v.outcome, Outcome::Unknown);
        let v = check_consistency(&inst, &cs, &Options::default());
        assert_ne!(v.outcome, Outcome::Unknown);
    }

    #[test]
    fn pmin_lower_bound_values() {
        assert_eq!(pmin_lower_bound(&[rat(1, 2), rat(1, 2)]), rat(0, 1));
        assert_eq!(pmin_lower_bound(&[rat(3, 4), rat(3, 4)]), rat(1, 2));
        assert_eq!(pmin_lower_bound(&[rat(1, 1)]), rat(1, 1));
    }
}
