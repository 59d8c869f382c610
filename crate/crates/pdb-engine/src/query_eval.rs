//! Query evaluation: cautious `[pmin, pmax]` probability intervals for
//! conjunctive-query answers over all models of a consistent instance.
//!
//! Projection-free conjunctions are split across the maximal connected
//! components of the conflict hypergraph; each part is evaluated by a fast
//! rule where the component shape allows (clique, tree, complete
//! multipartite) and by the exact possible-worlds LP otherwise, and the
//! parts are combined with the Fréchet–Hoeffding bounds (or as independent
//! events). Disjunctive events (queries with projection) go through the LP.

use std::collections::{BTreeMap, BTreeSet};

use num::{One, Zero};

use crate::consistency::{check_consistency, Options, Outcome, Verdict};
use crate::constraint_lang::{ConjunctiveQuery, DenialConstraint};
use crate::exact_lp::{
    add_event_objective, build_world_system, optimize, solve_feasible, Direction, LinConstraint,
    LinearProgram, LpError, LpResult, Rel,
};
use crate::grounding::{
    build_conflict_hypergraph, enumerate_matches, reduce_probabilistic_constraints,
};
use crate::hypergraph_analysis::{components, is_clique, multipartite_partition, Component};
use crate::model::{PDBInstance, ProbabilityBound, Rational, TupleId, Value};

/// How intervals of events in distinct components are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    /// Fréchet–Hoeffding bounds: no assumption on correlations (cautious).
    Frechet,
    /// Events in distinct components are independent.
    Independent,
}

/// Query evaluation options.
#[derive(Debug, Clone)]
pub struct QueryOptions {
    pub world_budget: usize,
    pub combine: Combine,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions {
            world_budget: 20,
            combine: Combine::Frechet,
        }
    }
}

/// One answer: its head values and probability interval. `bounds` is `None`
/// when the interval could not be computed within the world budget;
/// `exact` is false when the interval is a sound enclosure (witnesses
/// spanning several components combined disjunctively).
#[derive(Debug, Clone)]
pub struct AnswerRow {
    pub values: Vec<Value>,
    pub bounds: Option<(Rational, Rational)>,
    pub exact: bool,
}

/// Errors of query evaluation.
#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error("instance is inconsistent; query evaluation requires a consistent instance")]
    Inconsistent(Verdict),
    #[error("consistency could not be decided within the world budget")]
    UnknownConsistency(Verdict),
    #[error("answer interval unknown within the world budget")]
    UnknownInterval,
}

// ---------------------------------------------------------------------------
// Grounding
// ---------------------------------------------------------------------------

/// A ground answer with its minimal witness sets: the answer holds in a
/// world iff some witness set is fully contained in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundAnswer {
    pub values: Vec<Value>,
    pub witnesses: Vec<BTreeSet<TupleId>>,
}

/// Enumerate the query matches over the instance tuples and group the
/// witness tuple sets by answer values, keeping only minimal witness sets.
pub fn ground_answers(instance: &PDBInstance, query: &ConjunctiveQuery) -> Vec<GroundAnswer> {
    let mut by_values: BTreeMap<Vec<Value>, BTreeSet<BTreeSet<TupleId>>> = BTreeMap::new();
    enumerate_matches(instance, &query.atoms, &query.builtins, |chosen, binding| {
        let values: Vec<Value> = query
            .head_vars
            .iter()
            .map(|v| binding[v].clone())
            .collect();
        by_values
            .entry(values)
            .or_default()
            .insert(chosen.iter().copied().collect());
    });
    by_values
        .into_iter()
        .map(|(values, sets)| {
            let witnesses: Vec<BTreeSet<TupleId>> = sets
                .iter()
                .filter(|w| !sets.iter().any(|o| *o != **w && o.is_subset(w)))
                .cloned()
                .collect();
            GroundAnswer { values, witnesses }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Interval combinators
// ---------------------------------------------------------------------------

/// Fréchet–Hoeffding bounds for a conjunction of events with the given
/// intervals and unknown correlations.
pub fn frechet_combine(intervals: &[(Rational, Rational)]) -> (Rational, Rational) {
    let k = intervals.len() as i64;
    let lo_sum: Rational = intervals.iter().map(|(lo, _)| lo.clone()).sum();
    let lo = (lo_sum - Rational::from(num::BigInt::from(k - 1))).max(Rational::zero());
    let hi = intervals
        .iter()
        .map(|(_, hi)| hi.clone())
        .min()
        .unwrap_or_else(Rational::one);
    (lo, hi)
}

/// Product bounds for a conjunction of independent events.
pub fn independent_combine(intervals: &[(Rational, Rational)]) -> (Rational, Rational) {
    intervals.iter().fold(
        (Rational::one(), Rational::one()),
        |(lo, hi), (l, h)| (lo * l, hi * h),
    )
}

/// Exact bounds for a disjunction of events in distinct components:
/// couplings are unrestricted, so the minimum is the largest lower bound
/// and the maximum is the capped sum of the upper bounds.
fn frechet_disjunction(intervals: &[(Rational, Rational)]) -> (Rational, Rational) {
    let lo = intervals
        .iter()
        .map(|(lo, _)| lo.clone())
        .max()
        .unwrap_or_else(Rational::zero);
    let hi_sum: Rational = intervals.iter().map(|(_, hi)| hi.clone()).sum();
    (lo, hi_sum.min(Rational::one()))
}

/// Inclusion–exclusion bounds for a disjunction of independent events.
fn independent_disjunction(intervals: &[(Rational, Rational)]) -> (Rational, Rational) {
    let (nlo, nhi) = intervals.iter().fold(
        (Rational::one(), Rational::one()),
        |(nlo, nhi), (l, h)| (nlo * (Rational::one() - l), nhi * (Rational::one() - h)),
    );
    (Rational::one() - nlo, Rational::one() - nhi)
}

// ---------------------------------------------------------------------------
// Chain and tree rules
// ---------------------------------------------------------------------------

/// Bounds of the conjunction of the two endpoints of a chain in a graph,
/// given the marginals along the path (endpoints included). The recursion
/// starts at the middle of the path and works outward:
/// `pmin = max{0, p(t) + p(t') - [1 - pmin(t̂ ∧ t̂')]}` and
/// `pmax = min{p(t), p(t'), 1 - [p(t̂) + p(t̂') - pmax(t̂ ∧ t̂')]}`,
/// where t̂, t̂' are the path neighbours of the endpoints.
pub fn chain_bounds(probs: &[Rational]) -> (Rational, Rational) {
    assert!(!probs.is_empty(), "empty path");
    let k = probs.len() - 1;
    if k == 0 {
        return (probs[0].clone(), probs[0].clone());
    }
    if k == 1 {
        return (Rational::zero(), Rational::zero());
    }
    // Innermost pair (i, j) and its bounds.
    let (mut i, mut j, mut lo, mut hi) = if k % 2 == 0 {
        let mid = k / 2;
        (mid, mid, probs[mid].clone(), probs[mid].clone())
    } else {
        ((k - 1) / 2, (k + 1) / 2, Rational::zero(), Rational::zero())
    };
    while i > 0 {
        let new_lo = (&probs[i - 1] + &probs[j + 1] - Rational::one() + &lo).max(Rational::zero());
        let new_hi = probs[i - 1]
            .clone()
            .min(probs[j + 1].clone())
            .min(Rational::one() - &probs[i] - &probs[j] + &hi);
        lo = new_lo;
        hi = new_hi;
        i -= 1;
        j += 1;
    }
    debug_assert!(lo <= hi, "chain bounds inverted: {lo} > {hi}");
    (lo, hi)
}

/// Bounds of a conjunction of tuples inside a component whose conflict
/// hypergraph is a tree (all edges binary, acyclic). Returns `None` when
/// the component is not a tree or the LP over boolean assignments would be
/// too large (the caller falls back to the possible-worlds LP).
pub fn tree_conjunction_bounds(
    comp: &Component,
    marg: &BTreeMap<TupleId, Rational>,
    targets: &BTreeSet<TupleId>,
) -> Option<(Rational, Rational)> {
    const MAX_TERMINALS: usize = 14;
    if comp.edges.iter().any(|e| e.len() != 2)
        || comp.edges.len() + 1 != comp.nodes.len()
    {
        return None;
    }
    if targets.len() == 1 {
        let t = targets.iter().next().unwrap();
        return Some((marg[t].clone(), marg[t].clone()));
    }
    // Adjacency, then the minimal subtree spanning the targets (repeatedly
    // shed non-target leaves).
    let mut adj: BTreeMap<TupleId, BTreeSet<TupleId>> = BTreeMap::new();
    for e in &comp.edges {
        let mut it = e.iter();
        let (a, b) = (*it.next().unwrap(), *it.next().unwrap());
        adj.entry(a).or_default().insert(b);
        adj.entry(b).or_default().insert(a);
    }
    let mut alive: BTreeSet<TupleId> = comp.nodes.iter().copied().collect();
    loop {
        let shed: Vec<TupleId> = alive
            .iter()
            .filter(|t| {
                !targets.contains(t)
                    && adj
                        .get(t)
                        .map_or(0, |n| n.intersection(&alive).count())
                        <= 1
            })
            .copied()
            .collect();
        if shed.is_empty() {
            break;
        }
        for t in shed {
            alive.remove(&t);
        }
    }
    let degree = |t: &TupleId| adj.get(t).map_or(0, |n| n.intersection(&alive).count());
    // Terminals: the targets plus the branching nodes of the subtree.
    let mut terminals: Vec<TupleId> = targets.iter().copied().collect();
    for t in &alive {
        if !targets.contains(t) && degree(t) > 2 {
            terminals.push(*t);
        }
    }
    let k = terminals.len();
    if k > MAX_TERMINALS {
        return None;
    }
    let index: BTreeMap<TupleId, usize> =
        terminals.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    // Elementary pairs: walk from every terminal to the next terminal along
    // each incident subtree edge, recording the path of marginals.
    let mut pairs: BTreeMap<(usize, usize), (Rational, Rational)> = BTreeMap::new();
    for &start in &terminals {
        for &next in adj.get(&start).into_iter().flatten() {
            if !alive.contains(&next) {
                continue;
            }
            let mut path = vec![start, next];
            let (mut prev, mut cur) = (start, next);
            while !index.contains_key(&cur) {
                let step = adj[&cur]
                    .iter()
                    .find(|n| **n != prev && alive.contains(n))
                    .copied()
                    .expect("subtree path must end at a terminal");
                path.push(step);
                prev = cur;
                cur = step;
            }
            let (i, j) = (index[&start], index[&cur]);
            let key = (i.min(j), i.max(j));
            pairs.entry(key).or_insert_with(|| {
                let probs: Vec<Rational> = path.iter().map(|t| marg[t].clone()).collect();
                chain_bounds(&probs)
            });
        }
    }
    // LP over the boolean assignments of the terminals: one variable per
    // assignment plus one per elementary pair.
    let n_alpha = 1usize << k;
    let pair_list: Vec<((usize, usize), (Rational, Rational))> = pairs.into_iter().collect();
    let mut constraints = Vec::new();
    for (pi, ((i, j), (lo, hi))) in pair_list.iter().enumerate() {
        let mut coeffs: Vec<(usize, Rational)> = (0..n_alpha)
            .filter(|a| a & (1 << i) != 0 && a & (1 << j) != 0)
            .map(|a| (a, Rational::one()))
            .collect();
        coeffs.push((n_alpha + pi, -Rational::one()));
        constraints.push(LinConstraint {
            coeffs,
            rel: Rel::Eq,
            rhs: Rational::zero(),
        });
        constraints.push(LinConstraint {
            coeffs: vec![(n_alpha + pi, Rational::one())],
            rel: Rel::Ge,
            rhs: lo.clone(),
        });
        constraints.push(LinConstraint {
            coeffs: vec![(n_alpha + pi, Rational::one())],
            rel: Rel::Le,
            rhs: hi.clone(),
        });
    }
    for (i, t) in terminals.iter().enumerate() {
        constraints.push(LinConstraint {
            coeffs: (0..n_alpha)
                .filter(|a| a & (1 << i) != 0)
                .map(|a| (a, Rational::one()))
                .collect(),
            rel: Rel::Eq,
            rhs: marg[t].clone(),
        });
    }
    constraints.push(LinConstraint {
        coeffs: (0..n_alpha).map(|a| (a, Rational::one())).collect(),
        rel: Rel::Eq,
        rhs: Rational::one(),
    });
    let lp = LinearProgram {
        n_vars: n_alpha + pair_list.len(),
        constraints,
    };
    let target_mask: usize = (0..targets.len()).map(|i| 1 << i).sum();
    let objective: Vec<(usize, Rational)> = (0..n_alpha)
        .filter(|a| a & target_mask == target_mask)
        .map(|a| (a, Rational::one()))
        .collect();
    let lo = match optimize(&lp, &objective, Direction::Minimize) {
        LpResult::Optimal { value, .. } => value,
        _ => return None,
    };
    let hi = match optimize(&lp, &objective, Direction::Maximize) {
        LpResult::Optimal { value, .. } => value,
        _ => return None,
    };
    Some((lo, hi))
}

/// Bounds of a conjunction of tuples inside a complete-multipartite
/// component (the shape induced by a functional dependency): tuples in
/// different parts exclude each other; tuples in one part share the space
/// left over by the other parts' maxima.
pub fn multipartite_conjunction_bounds(
    parts: &[BTreeSet<TupleId>],
    marg: &BTreeMap<TupleId, Rational>,
    targets: &BTreeSet<TupleId>,
) -> (Rational, Rational) {
    let own = parts
        .iter()
        .position(|p| targets.iter().next().is_some_and(|t| p.contains(t)))
        .expect("targets must lie in the component");
    if targets.iter().any(|t| !parts[own].contains(t)) {
        return (Rational::zero(), Rational::zero());
    }
    let s = Rational::one()
        - parts
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != own)
            .map(|(_, p)| p.iter().map(|t| marg[t].clone()).max().unwrap())
            .sum::<Rational>();
    let sum: Rational = targets.iter().map(|t| marg[t].clone()).sum();
    let card = Rational::from(num::BigInt::from(targets.len() as i64 - 1));
    let lo = (sum - card * &s).max(Rational::zero());
    let hi = targets.iter().map(|t| marg[t].clone()).min().unwrap();
    (lo, hi)
}

// ---------------------------------------------------------------------------
// LP path
// ---------------------------------------------------------------------------

/// Exact interval of the event "some witness set is fully present" over the
/// possible worlds of the given tuples and edges.
pub fn lp_event_bounds(
    tuples: &[(TupleId, ProbabilityBound)],
    edges: &[BTreeSet<TupleId>],
    witnesses: &[BTreeSet<TupleId>],
    budget: usize,
) -> Result<(Rational, Rational), LpError> {
    let ws = build_world_system(tuples, edges, budget)?;
    let masks: Vec<u64> = witnesses
        .iter()
        .map(|w| {
            ws.mask_of(w)
                .expect("witness tuples must be within the world system")
        })
        .collect();
    let objective = add_event_objective(&ws, |w| masks.iter().any(|m| w & m == *m));
    let value = |r: LpResult| match r {
        LpResult::Optimal { value, .. } => value,
        other => panic!("event LP on a consistent instance must be solvable, got {other:?}"),
    };
    let lo = value(optimize(&ws.lp, &objective, Direction::Minimize));
    let hi = value(optimize(&ws.lp, &objective, Direction::Maximize));
    Ok((lo, hi))
}

/// Whether some model gives the event probability exactly `q` (used to
/// check that reported intervals are dense).
pub fn event_probability_feasible(
    tuples: &[(TupleId, ProbabilityBound)],
    edges: &[BTreeSet<TupleId>],
    witnesses: &[BTreeSet<TupleId>],
    q: &Rational,
    budget: usize,
) -> Result<bool, LpError> {
    let ws = build_world_system(tuples, edges, budget)?;
    let masks: Vec<u64> = witnesses
        .iter()
        .map(|w| ws.mask_of(w).expect("witness tuples must be local"))
        .collect();
    let coeffs = add_event_objective(&ws, |w| masks.iter().any(|m| w & m == *m));
    let mut lp = ws.lp.clone();
    lp.constraints.push(LinConstraint {
        coeffs,
        rel: Rel::Eq,
        rhs: q.clone(),
    });
    Ok(solve_feasible(&lp).is_some())
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalCtx {
    comps: Vec<Component>,
    comp_of: BTreeMap<TupleId, usize>,
    bounds: BTreeMap<TupleId, ProbabilityBound>,
    budget: usize,
}

impl EvalCtx {
    fn component_tuples(&self, ci: usize) -> Vec<(TupleId, ProbabilityBound)> {
        self.comps[ci]
            .nodes
            .iter()
            .map(|&t| (t, self.bounds[&t].clone()))
            .collect()
    }

    /// Bounds of the conjunction of `targets` within component `ci`,
    /// dispatching to the fast rules when the shape and point marginals
    /// allow it, and to the possible-worlds LP otherwise.
    fn component_conjunction(
        &self,
        ci: usize,
        targets: &BTreeSet<TupleId>,
    ) -> Result<(Rational, Rational), LpError> {
        let comp = &self.comps[ci];
        let all_point = comp.nodes.iter().all(|t| self.bounds[&t].is_point());
        if targets.len() == 1 {
            let t = targets.iter().next().unwrap();
            if self.bounds[t].is_point() {
                let p = self.bounds[t].lo.clone();
                return Ok((p.clone(), p));
            }
        } else if all_point {
            let marg: BTreeMap<TupleId, Rational> = comp
                .nodes
                .iter()
                .map(|&t| (t, self.bounds[&t].lo.clone()))
                .collect();
            if is_clique(comp) {
                return Ok((Rational::zero(), Rational::zero()));
            }
            if let Some(b) = tree_conjunction_bounds(comp, &marg, targets) {
                return Ok(b);
            }
            if let Some(parts) = multipartite_partition(comp) {
                return Ok(multipartite_conjunction_bounds(&parts, &marg, targets));
            }
        }
        lp_event_bounds(
            &self.component_tuples(ci),
            &comp.edges,
            std::slice::from_ref(targets),
            self.budget,
        )
    }

    /// Bounds of "some witness present" where every witness lies inside
    /// component `ci`.
    fn component_event(
        &self,
        ci: usize,
        witnesses: &[BTreeSet<TupleId>],
    ) -> Result<(Rational, Rational), LpError> {
        if let [single] = witnesses {
            self.component_conjunction(ci, single)
        } else {
            lp_event_bounds(
                &self.component_tuples(ci),
                &self.comps[ci].edges,
                witnesses,
                self.budget,
            )
        }
    }

    /// Interval of a single witness conjunction: split across components
    /// and combine.
    fn witness_conjunction(
        &self,
        witness: &BTreeSet<TupleId>,
        combine: Combine,
    ) -> Result<(Rational, Rational), LpError> {
        let mut by_comp: BTreeMap<usize, BTreeSet<TupleId>> = BTreeMap::new();
        for &t in witness {
            by_comp.entry(self.comp_of[&t]).or_default().insert(t);
        }
        let mut parts = Vec::new();
        for (ci, targets) in &by_comp {
            parts.push(self.component_conjunction(*ci, targets)?);
        }
        Ok(match combine {
            Combine::Frechet => frechet_combine(&parts),
            Combine::Independent => independent_combine(&parts),
        })
    }

    /// Evaluate the full event of one answer. Returns the interval (or
    /// `None` within-budget failure) and whether it is exact.
    fn evaluate(
        &self,
        witnesses: &[BTreeSet<TupleId>],
        combine: Combine,
    ) -> (Option<(Rational, Rational)>, bool) {
        if let [single] = witnesses {
            return match self.witness_conjunction(single, combine) {
                Ok(b) => (Some(b), true),
                Err(LpError::BudgetExceeded { .. }) => (None, true),
            };
        }
        // Several witnesses. If each lies inside one component, the
        // disjunction combines exactly across components.
        let spanning = witnesses.iter().any(|w| {
            let mut comps = w.iter().map(|t| self.comp_of[t]);
            let first = comps.next();
            comps.any(|c| Some(c) != first)
        });
        if !spanning {
            let mut by_comp: BTreeMap<usize, Vec<BTreeSet<TupleId>>> = BTreeMap::new();
            for w in witnesses {
                let ci = self.comp_of[w.iter().next().unwrap()];
                by_comp.entry(ci).or_default().push(w.clone());
            }
            let mut parts = Vec::new();
            for (ci, ws) in &by_comp {
                match self.component_event(*ci, ws) {
                    Ok(b) => parts.push(b),
                    Err(LpError::BudgetExceeded { .. }) => return (None, true),
                }
            }
            let b = match combine {
                Combine::Frechet => frechet_disjunction(&parts),
                Combine::Independent => independent_disjunction(&parts),
            };
            return (Some(b), true);
        }
        // Some witness spans several components. Under the cautious
        // semantics the joint LP over the union of the involved components
        // is exact; otherwise fall back to a sound disjunction enclosure
        // over per-witness conjunction intervals.
        let comp_ids: BTreeSet<usize> = witnesses
            .iter()
            .flat_map(|w| w.iter().map(|t| self.comp_of[t]))
            .collect();
        if combine == Combine::Frechet {
            let tuples: Vec<(TupleId, ProbabilityBound)> = comp_ids
                .iter()
                .flat_map(|&ci| self.component_tuples(ci))
                .collect();
            let edges: Vec<BTreeSet<TupleId>> = comp_ids
                .iter()
                .flat_map(|&ci| self.comps[ci].edges.iter().cloned())
                .collect();
            match lp_event_bounds(&tuples, &edges, witnesses, self.budget) {
                Ok(b) => return (Some(b), true),
                Err(LpError::BudgetExceeded { .. }) => {}
            }
        }
        let mut per_witness = Vec::new();
        for w in witnesses {
            match self.witness_conjunction(w, combine) {
                Ok(b) => per_witness.push(b),
                Err(LpError::BudgetExceeded { .. }) => return (None, false),
            }
        }
        let lo = per_witness
            .iter()
            .map(|(lo, _)| lo.clone())
            .max()
            .unwrap_or_else(Rational::zero);
        let hi_sum: Rational = per_witness.iter().map(|(_, hi)| hi.clone()).sum();
        (Some((lo, hi_sum.min(Rational::one()))), false)
    }
}

/// Evaluate a query: check consistency, ground the answers, and compute an
/// exact `[pmin, pmax]` interval per answer (answers with `pmax = 0` are
/// dropped; they appear in no model's answer).
pub fn answer_query(
    instance: &PDBInstance,
    constraints: &[DenialConstraint],
    query: &ConjunctiveQuery,
    opts: &QueryOptions,
) -> Result<Vec<AnswerRow>, QueryError> {
    let verdict = check_consistency(
        instance,
        constraints,
        &Options {
            world_budget: opts.world_budget,
        },
    );
    match verdict.outcome {
        Outcome::Inconsistent => return Err(QueryError::Inconsistent(verdict)),
        Outcome::Unknown => return Err(QueryError::UnknownConsistency(verdict)),
        Outcome::Consistent => {}
    }
    let h = build_conflict_hypergraph(instance, constraints);
    let (h, aux) = if h.has_probabilistic_edges() {
        reduce_probabilistic_constraints(&h, instance.tuples.len())
    } else {
        (h, Vec::new())
    };
    let mut bounds: BTreeMap<TupleId, ProbabilityBound> = instance
        .tuples
        .iter()
        .map(|t| (t.tuple_id, t.prob.clone()))
        .collect();
    for (id, p) in &aux {
        bounds.insert(*id, ProbabilityBound::point(p.clone()));
    }
    let comps = components(&h);
    let comp_of: BTreeMap<TupleId, usize> = comps
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.nodes.iter().map(move |&t| (t, i)))
        .collect();
    let ctx = EvalCtx {
        comps,
        comp_of,
        bounds,
        budget: opts.world_budget,
    };
    let mut rows = Vec::new();
    for ans in ground_answers(instance, query) {
        let (bounds, exact) = ctx.evaluate(&ans.witnesses, opts.combine);
        if let Some((_, hi)) = &bounds {
            if hi.is_zero() {
                continue;
            }
        }
        rows.push(AnswerRow {
            values: ans.values,
            bounds,
            exact,
        });
    }
    Ok(rows)
}

/// The membership decision: is `answer` an answer of the query with
/// `pmin >= k1` and `pmax <= k2`?
pub fn membership(
    instance: &PDBInstance,
    constraints: &[DenialConstraint],
    query: &ConjunctiveQuery,
    answer: &[Value],
    k1: &Rational,
    k2: &Rational,
    opts: &QueryOptions,
) -> Result<bool, QueryError> {
    let rows = answer_query(instance, constraints, query, opts)?;
    match rows.iter().find(|r| r.values == answer) {
        None => Ok(false),
        Some(row) => match &row.bounds {
            Some((lo, hi)) => Ok(lo >= k1 && hi <= k2),
            None => Err(QueryError::UnknownInterval),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint_lang::{parse_constraints, parse_query};
    use crate::model::{load_instance, rat};

    fn room(probs: [&str; 3], with_ic: bool) -> (PDBInstance, Vec<DenialConstraint>) {
        let schema =
            "relation Room(id:integer, hid:integer, price:rational, type:string, view:string)\n";
        let data = format!(
            "id,hid,price,type,view,p\n1,1,120,Std,Sea,{}\n2,1,70,Suite,Courtyard,{}\n3,1,120,Std,Sea,{}\n",
            probs[0], probs[1], probs[2]
        );
        let (inst, _) = load_instance(schema, &[("Room".to_string(), data)]).unwrap();
        let cs = if with_ic {
            parse_constraints(
                "ic: ![Room(x1, x2, x3, \"Std\", x4), Room(x5, x2, x6, \"Suite\", x7), x3 > x6]",
                &inst.schemas,
            )
            .unwrap()
            .0
        } else {
            Vec::new()
        };
        (inst, cs)
    }

    fn room_query(inst: &PDBInstance) -> ConjunctiveQuery {
        parse_query(
            "q() := Room(x1, 1, y1, \"Std\", \"Sea\"), Room(x2, 1, y2, \"Std\", \"Sea\"), x1 != x2",
            &inst.schemas,
        )
        .unwrap()
    }

    #[test]
    fn grounding_motivating_query() {
        let (inst, _) = room(["1/2", "1/4", "1/2"], true);
        let q = room_query(&inst);
        let answers = ground_answers(&inst, &q);
        assert_eq!(answers.len(), 1);
        assert!(answers[0].values.is_empty());
        assert_eq!(answers[0].witnesses, vec![BTreeSet::from([0, 2])]);
    }

    #[test]
    fn chain_bounds_motivating_cases() {
        // Case 2: all probabilities 1/2 force t1 and t3 to coexist.
        let (lo, hi) = chain_bounds(&[rat(1, 2), rat(1, 2), rat(1, 2)]);
        assert_eq!((lo, hi), (rat(1, 2), rat(1, 2)));
        // Case 3.
        let (lo, hi) = chain_bounds(&[rat(1, 2), rat(1, 4), rat(1, 2)]);
        assert_eq!((lo, hi), (rat(1, 4), rat(1, 2)));
        // Adjacent tuples exclude each other.
        assert_eq!(chain_bounds(&[rat(1, 2), rat(1, 2)]), (rat(0, 1), rat(0, 1)));
        // A single node is its own marginal.
        assert_eq!(chain_bounds(&[rat(3, 4)]), (rat(3, 4), rat(3, 4)));
        // Length-3 path: only the Fréchet bound of the endpoints survives.
        let (lo, hi) = chain_bounds(&[rat(3, 4), rat(1, 4), rat(1, 8), rat(3, 4)]);
        assert_eq!(lo, rat(1, 2));
        assert_eq!(hi, Rational::one() - rat(1, 4) - rat(1, 8));
    }

    #[test]
    fn query_case2_unique_interval() {
        let (inst, cs) = room(["1/2", "1/2", "1/2"], true);
        let q = room_query(&inst);
        let rows = answer_query(&inst, &cs, &q, &QueryOptions::default()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].bounds, Some((rat(1, 2), rat(1, 2))));
        assert!(rows[0].exact);
    }

    #[test]
    fn query_case3_interval_and_density() {
        let (inst, cs) = room(["1/2", "1/4", "1/2"], true);
        let q = room_query(&inst);
        let rows = answer_query(&inst, &cs, &q, &QueryOptions::default()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].bounds, Some((rat(1, 4), rat(1, 2))));
        // Every value in the interval is attained by some model.
        let tuples: Vec<(TupleId, ProbabilityBound)> = inst
            .tuples
            .iter()
            .map(|t| (t.tuple_id, t.prob.clone()))
            .collect();
        let edges = vec![BTreeSet::from([0, 1]), BTreeSet::from([1, 2])];
        let witness = [BTreeSet::from([0, 2])];
        for q in [rat(1, 4), rat(3, 8), rat(1, 2)] {
            assert!(event_probability_feasible(&tuples, &edges, &witness, &q, 20).unwrap());
        }
        assert!(!event_probability_feasible(&tuples, &edges, &witness, &rat(1, 8), 20).unwrap());
    }

    #[test]
    fn query_case1_rejected_as_inconsistent() {
        let (inst, cs) = room(["3/4", "1/2", "1/2"], true);
        let q = room_query(&inst);
        let err = answer_query(&inst, &cs, &q, &QueryOptions::default()).unwrap_err();
        assert!(matches!(err, QueryError::Inconsistent(_)));
    }

    #[test]
    fn decoupled_case2_under_independence() {
        // Without the constraint the three tuples are isolated; under the
        // independence combination the motivating query is true with
        // probability exactly 1/4.
        let (inst, cs) = room(["1/2", "1/2", "1/2"], false);
        let q = room_query(&inst);
        let opts = QueryOptions {
            combine: Combine::Independent,
            ..QueryOptions::default()
        };
        let rows = answer_query(&inst, &cs, &q, &opts).unwrap();
        assert_eq!(rows[0].bounds, Some((rat(1, 4), rat(1, 4))));
        // The cautious combination only knows the Fréchet range.
        let rows = answer_query(&inst, &cs, &q, &QueryOptions::default()).unwrap();
        assert_eq!(rows[0].bounds, Some((rat(0, 1), rat(1, 2))));
    }

    #[test]
    fn membership_thresholds() {
        let (inst, cs) = room(["1/2", "1/4", "1/2"], true);
        let q = room_query(&inst);
        let opts = QueryOptions::default();
        assert!(membership(&inst, &cs, &q, &[], &rat(1, 4), &rat(1, 2), &opts).unwrap());
        assert!(!membership(&inst, &cs, &q, &[], &rat(1, 3), &rat(1, 2), &opts).unwrap());
        assert!(!membership(&inst, &cs, &q, &[], &rat(1, 4), &rat(1, 3), &opts).unwrap());
    }

    fn from_edges(
        probs: &[(&str, &str)],
        edges: &[&[usize]],
    ) -> (PDBInstance, Vec<DenialConstraint>) {
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

    fn conj_oracle(
        inst: &PDBInstance,
        cs: &[DenialConstraint],
        targets: &BTreeSet<TupleId>,
    ) -> (Rational, Rational) {
        let h = build_conflict_hypergraph(inst, cs);
        let edges: Vec<BTreeSet<TupleId>> = h.edges.iter().map(|e| e.nodes.clone()).collect();
        let tuples: Vec<(TupleId, ProbabilityBound)> = inst
            .tuples
            .iter()
            .map(|t| (t.tuple_id, t.prob.clone()))
            .collect();
        lp_event_bounds(&tuples, &edges, std::slice::from_ref(targets), 20).unwrap()
    }

    #[test]
    fn tree_rule_matches_oracle_on_star() {
        // Star: center 0 with leaves 1, 2, 3; conjunction of the leaves.
        let probs = [("c", "1/2"), ("a", "1/4"), ("b", "1/4"), ("d", "1/4")];
        let edges: [&[usize]; 3] = [&[0, 1], &[0, 2], &[0, 3]];
        let (inst, cs) = from_edges(&probs, &edges);
        let h = build_conflict_hypergraph(&inst, &cs);
        let comp = &components(&h)[0];
        let marg: BTreeMap<TupleId, Rational> = inst
            .tuples
            .iter()
            .map(|t| (t.tuple_id, t.prob.lo.clone()))
            .collect();
        let targets = BTreeSet::from([1, 2, 3]);
        let fast = tree_conjunction_bounds(comp, &marg, &targets).unwrap();
        let oracle = conj_oracle(&inst, &cs, &targets);
        assert_eq!(fast, oracle);
        // Two leaves only (the third is shed from the subtree).
        let targets = BTreeSet::from([1, 2]);
        let fast = tree_conjunction_bounds(comp, &marg, &targets).unwrap();
        assert_eq!(fast, conj_oracle(&inst, &cs, &targets));
    }

    #[test]
    fn multipartite_rule_matches_oracle() {
        // Parts {0, 1}, {2, 3}, {4} with the probabilities of the city/state
        // example's first component.
        let probs = [
            ("a", "1/2"),
            ("b", "1/4"),
            ("c", "1/4"),
            ("d", "1/4"),
            ("e", "1/4"),
        ];
        let edges: [&[usize]; 8] = [
            &[0, 2],
            &[0, 3],
            &[0, 4],
            &[1, 2],
            &[1, 3],
            &[1, 4],
            &[2, 4],
            &[3, 4],
        ];
        let (inst, cs) = from_edges(&probs, &edges);
        let h = build_conflict_hypergraph(&inst, &cs);
        let comp = &components(&h)[0];
        let parts = multipartite_partition(comp).unwrap();
        assert_eq!(
            parts,
            vec![
                BTreeSet::from([0, 1]),
                BTreeSet::from([2, 3]),
                BTreeSet::from([4])
            ]
        );
        let marg: BTreeMap<TupleId, Rational> = inst
            .tuples
            .iter()
            .map(|t| (t.tuple_id, t.prob.lo.clone()))
            .collect();
        // Same-part conjunction: the leftover space S = 1/2 forces overlap.
        let targets = BTreeSet::from([0, 1]);
        let fast = multipartite_conjunction_bounds(&parts, &marg, &targets);
        assert_eq!(fast, (rat(1, 4), rat(1, 4)));
        assert_eq!(fast, conj_oracle(&inst, &cs, &targets));
        // Cross-part conjunction is impossible.
        let targets = BTreeSet::from([0, 2]);
        let fast = multipartite_conjunction_bounds(&parts, &marg, &targets);
        assert_eq!(fast, (Rational::zero(), Rational::zero()));
        assert_eq!(fast, conj_oracle(&inst, &cs, &targets));
    }

    #[test]
    fn combine_rules() {
        let a = (rat(1, 2), rat(1, 2));
        let b = (rat(3, 4), rat(1, 1));
        assert_eq!(frechet_combine(&[a.clone(), b.clone()]), (rat(1, 4), rat(1, 2)));
        assert_eq!(
            independent_combine(&[a.clone(), b.clone()]),
            (rat(3, 8), rat(1, 2))
        );
        // Identity element.
        assert_eq!(
            frechet_combine(&[a.clone(), (rat(1, 1), rat(1, 1))]),
            a.clone()
        );
        assert_eq!(independent_combine(&[a.clone(), (rat(1, 1), rat(1, 1))]), a);
        // The independent interval is inside the Fréchet interval.
        let f = frechet_combine(&[(rat(1, 3), rat(1, 2)), (rat(2, 3), rat(5, 6))]);
        let i = independent_combine(&[(rat(1, 3), rat(1, 2)), (rat(2, 3), rat(5, 6))]);
        assert!(f.0 <= i.0 && i.1 <= f.1);
    }

    #[test]
    fn disjunction_within_one_component() {
        // Mutually exclusive pair with probabilities summing to one:
        // "at least one present" is certain.
        let probs = [("a", "1/2"), ("b", "1/2")];
        let edges: [&[usize]; 1] = [&[0, 1]];
        let (inst, cs) = from_edges(&probs, &edges);
        let q = parse_query("q() := N(x)", &inst.schemas).unwrap();
        let rows = answer_query(&inst, &cs, &q, &QueryOptions::default()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].bounds, Some((rat(1, 1), rat(1, 1))));
        assert!(rows[0].exact);
    }

    #[test]
    fn disjunction_across_components() {
        // Two isolated tuples, boolean existence query.
        let probs = [("a", "1/2"), ("b", "1/2")];
        let (inst, cs) = from_edges(&probs, &[]);
        let q = parse_query("q() := N(x)", &inst.schemas).unwrap();
        // Cautious: the overlap of the two events is unconstrained.
        let rows = answer_query(&inst, &cs, &q, &QueryOptions::default()).unwrap();
        assert_eq!(rows[0].bounds, Some((rat(1, 2), rat(1, 1))));
        assert!(rows[0].exact);
        // Independent: inclusion-exclusion gives exactly 3/4.
        let opts = QueryOptions {
            combine: Combine::Independent,
            ..QueryOptions::default()
        };
        let rows = answer_query(&inst, &cs, &q, &opts).unwrap();
        assert_eq!(rows[0].bounds, Some((rat(3, 4), rat(3, 4))));
        assert!(rows[0].exact);
    }

    #[test]
    fn non_boolean_answers_are_ordered_and_pruned() {
        let schema = "relation R(name:string, grade:integer)\n";
        let data = "name,grade,p\nx,1,1/2\ny,2,1/2\nx,2,1/2\n";
        let (inst, _) = load_instance(schema, &[("R".to_string(), data.to_string())]).unwrap();
        // One value per name: the two x-tuples conflict.
        let (cs, _) = parse_constraints(
            "ic: ![R(n, g1), R(n, g2), g1 != g2]",
            &inst.schemas,
        )
        .unwrap();
        let q = parse_query("q(n) := R(n, g)", &inst.schemas).unwrap();
        let rows = answer_query(&inst, &cs, &q, &QueryOptions::default()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].values, vec![Value::Str("x".into())]);
        // The two x-tuples are mutually exclusive with probabilities
        // summing to one, so x is an answer in every world.
        assert_eq!(rows[0].bounds, Some((rat(1, 1), rat(1, 1))));
        assert_eq!(rows[1].values, vec![Value::Str("y".into())]);
        assert_eq!(rows[1].bounds, Some((rat(1, 2), rat(1, 2))));
    }

    #[test]
    fn spanning_witnesses_use_union_lp() {
        // Query joining two components: witnesses {a, c} and {b, c} where
        // a, b conflict. Event: c and (a or b).
        let schema = "relation R(k:string)\nrelation S(k:string)\n";
        let data_r = "k,p\nu,1/2\nv,1/2\n";
        let data_s = "k,p\nw,1/2\n";
        let (inst, _) = load_instance(
            schema,
            &[
                ("R".to_string(), data_r.to_string()),
                ("S".to_string(), data_s.to_string()),
            ],
        )
        .unwrap();
        let (cs, _) = parse_constraints(
            "ic: ![R(\"u\"), R(\"v\")]",
            &inst.schemas,
        )
        .unwrap();
        let q = parse_query("q() := R(x), S(y)", &inst.schemas).unwrap();
        let rows = answer_query(&inst, &cs, &q, &QueryOptions::default()).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].exact);
        // u or v is certain (1/2 + 1/2 with an exclusion edge), so the
        // event reduces to "w present": exactly 1/2.
        assert_eq!(rows[0].bounds, Some((rat(1, 2), rat(1, 2))));
    }

    #[test]
    fn range_marginals_take_the_lp_path() {
        // One tuple with a range, one conflicting point tuple.
        let schema = "relation R(k:string)\n";
        let data = "k,p\nu,1/4..3/4\nv,1/2\n";
        let (inst, _) = load_instance(schema, &[("R".to_string(), data.to_string())]).unwrap();
        let (cs, _) = parse_constraints("ic: ![R(\"u\"), R(\"v\")]", &inst.schemas).unwrap();
        let q = parse_query("q() := R(\"u\")", &inst.schemas).unwrap();
        let rows = answer_query(&inst, &cs, &q, &QueryOptions::default()).unwrap();
        // u can take any probability in [1/4, 1/2]: the edge with v caps it.
        assert_eq!(rows[0].bounds, Some((rat(1, 4), rat(1, 2))));
    }

    #[test]
    fn budget_exhaustion_marks_interval_unknown() {
        let probs: Vec<(String, &str)> = (0..6).map(|i| (format!("t{i}"), "1/4")).collect();
        let probs_ref: Vec<(&str, &str)> = probs.iter().map(|(s, p)| (s.as_str(), *p)).collect();
        let edges: [&[usize]; 4] = [&[0, 1, 2], &[2, 3, 4], &[4, 5, 0], &[1, 3, 5]];
        let (inst, cs) = from_edges(&probs_ref, &edges);
        let q = parse_query("q() := N(\"t0\"), N(\"t3\")", &inst.schemas).unwrap();
        // Consistency itself is decidable with a budget of 6 but the
        // conjunction needs the same LP; with a budget of 6 both work.
        let opts = QueryOptions {
            world_budget: 6,
            ..QueryOptions::default()
        };
        let rows = answer_query(&inst, &cs, &q, &opts).unwrap();
        assert!(rows[0].bounds.is_some());
        // With a smaller budget consistency is already unknown.
        let opts = QueryOptions {
            world_budget: 4,
            ..QueryOptions::default()
        };
        let err = answer_query(&inst, &cs, &q, &opts).unwrap_err();
        assert!(matches!(err, QueryError::UnknownConsistency(_)));
    }
}
