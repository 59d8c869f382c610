//! Exact linear programming over rationals: a two-phase simplex with
//! Bland's rule (guaranteeing termination), and the construction of the
//! possible-worlds system whose feasibility decides consistency and whose
//! optima yield query probability bounds.

use std::collections::BTreeSet;

use num::bigint::BigInt;
use num::{One, Signed, Zero};

use crate::model::{ProbabilityBound, Rational, TupleId};

/// Relation of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Eq,
    Le,
    Ge,
}

/// A linear constraint `sum coeffs · x  rel  rhs` over nonnegative variables.
#[derive(Debug, Clone)]
pub struct LinConstraint {
    pub coeffs: Vec<(usize, Rational)>,
    pub rel: Rel,
    pub rhs: Rational,
}

/// A linear program over `n_vars` nonnegative variables.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub constraints: Vec<LinConstraint>,
}

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

/// Result of an optimization run.
#[derive(Debug, Clone, PartialEq)]
pub enum LpResult {
    Infeasible,
    Unbounded,
    Optimal {
        value: Rational,
        solution: Vec<Rational>,
    },
}

/// Errors of the LP layer.
#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("component has {found} tuples, exceeding the world budget of {budget}")]
    BudgetExceeded { found: usize, budget: usize },
}

// ---------------------------------------------------------------------------
// Simplex
// ---------------------------------------------------------------------------

struct Tableau {
    /// `rows x (cols + 1)`; last column is the right-hand side.
    rows: Vec<Vec<Rational>>,
    /// Basic variable of each row.
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> &Rational {
        &self.rows[i][self.cols]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let factor = self.rows[row][col].clone();
        for v in self.rows[row].iter_mut() {
            *v /= factor.clone();
        }
        for i in 0..self.rows.len() {
            if i != row && !self.rows[i][col].is_zero() {
                let f = self.rows[i][col].clone();
                for j in 0..=self.cols {
                    let delta = &f * &self.rows[row][j];
                    self.rows[i][j] -= delta;
                }
            }
        }
        self.basis[row] = col;
    }

    /// Maximize `cost · x` from the current basic feasible solution using
    /// Bland's rule. `allowed` masks the columns that may enter the basis.
    /// Returns `None` when unbounded, otherwise the optimal value.
    fn maximize(&mut self, cost: &[Rational], allowed: &[bool]) -> Option<Rational> {
        // Objective row: reduced costs plus (negated) objective value.
        let mut obj: Vec<Rational> = cost.to_vec();
        obj.push(Rational::zero());
        for (i, &b) in self.basis.iter().enumerate() {
            if !cost[b].is_zero() {
                let f = cost[b].clone();
                for j in 0..=self.cols {
                    let delta = &f * &self.rows[i][j];
                    obj[j] -= delta;
                }
            }
        }
        loop {
            // Bland: entering column = smallest allowed index with positive
            // reduced cost.
            let Some(enter) = (0..self.cols)
                .find(|&j| allowed[j] && obj[j].is_positive())
            else {
                return Some(-obj[self.cols].clone());
            };
            // Ratio test; Bland ties broken by smallest basic variable.
            let mut leave: Option<(usize, Rational)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][enter];
                if a.is_positive() {
                    let ratio = self.rhs(i) / a;
                    match &leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < *lr || (ratio == *lr && self.basis[i] < self.basis[*li]) {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let (row, _) = leave?; // no positive entry: unbounded
            self.pivot(row, enter);
            // Update the objective row by the same elimination.
            let f = obj[enter].clone();
            if !f.is_zero() {
                for j in 0..=self.cols {
                    let delta = &f * &self.rows[row][j];
                    obj[j] -= delta;
                }
            }
        }
    }
}

/// Build a phase-1 tableau: slack variables for `<=`, surplus plus
/// artificial for `>=`, artificial for `=`. Returns the tableau, the number
/// of structural+slack columns, and the artificial column range.
fn build_tableau(lp: &LinearProgram) -> (Tableau, usize, std::ops::Range<usize>) {
    let m = lp.constraints.len();
    let n = lp.n_vars;
    let n_slack = lp
        .constraints
        .iter()
        .filter(|c| c.rel != Rel::Eq)
        .count();
    let n_art = m; // one artificial per row keeps the setup simple
    let cols = n + n_slack + n_art;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut slack_at = n;
    for (i, c) in lp.constraints.iter().enumerate() {
        let mut row = vec![Rational::zero(); cols + 1];
        // Normalize to rhs >= 0.
        let flip = c.rhs.is_negative();
        let sign = if flip { -Rational::one() } else { Rational::one() };
        for (j, a) in &c.coeffs {
            row[*j] += &sign * a;
        }
        row[cols] = &sign * &c.rhs;
        let rel = match (c.rel, flip) {
            (Rel::Eq, _) => Rel::Eq,
            (Rel::Le, false) | (Rel::Ge, true) => Rel::Le,
            (Rel::Ge, false) | (Rel::Le, true) => Rel::Ge,
        };
        match rel {
            Rel::Le => {
                row[slack_at] = Rational::one();
                slack_at += 1;
            }
            Rel::Ge => {
                row[slack_at] = -Rational::one();
                slack_at += 1;
            }
            Rel::Eq => {}
        }
        let art = n + n_slack + i;
        row[art] = Rational::one();
        basis.push(art);
        rows.push(row);
    }
    (
        Tableau { rows, basis, cols },
        n + n_slack,
        (n + n_slack)..cols,
    )
}

/// Run phase 1. Returns the tableau restricted to a feasible basis, or
/// `None` when the program is infeasible.
fn phase1(lp: &LinearProgram) -> Option<(Tableau, usize)> {
    let (mut t, real_cols, art) = build_tableau(lp);
    let mut cost = vec![Rational::zero(); t.cols];
    for j in art.clone() {
        cost[j] = -Rational::one();
    }
    let allowed = vec![true; t.cols];
    let value = t
        .maximize(&cost, &allowed)
        .expect("phase 1 is bounded by 0");
    if !value.is_zero() {
        return None;
    }
    // Drive remaining artificials out of the basis.
    let mut drop_rows = Vec::new();
    for i in 0..t.rows.len() {
        if art.contains(&t.basis[i]) {
            match (0..real_cols).find(|&j| !t.rows[i][j].is_zero()) {
                Some(j) => t.pivot(i, j),
                None => drop_rows.push(i), // redundant constraint
            }
        }
    }
    for &i in drop_rows.iter().rev() {
        t.rows.remove(i);
        t.basis.remove(i);
    }
    Some((t, real_cols))
}

/// A feasible point of the program, if any.
pub fn solve_feasible(lp: &LinearProgram) -> Option<Vec<Rational>> {
    let (t, _) = phase1(lp)?;
    let mut x = vec![Rational::zero(); lp.n_vars];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < lp.n_vars {
            x[b] = t.rhs(i).clone();
        }
    }
    Some(x)
}

/// Optimize `objective · x` over the program in the given direction.
pub fn optimize(
    lp: &LinearProgram,
    objective: &[(usize, Rational)],
    dir: Direction,
) -> LpResult {
    let Some((mut t, real_cols)) = phase1(lp) else {
        return LpResult::Infeasible;
    };
    let mut cost = vec![Rational::zero(); t.cols];
    for (j, a) in objective {
        cost[*j] += match dir {
            Direction::Maximize => a.clone(),
            Direction::Minimize => -a.clone(),
        };
    }
    let mut allowed = vec![false; t.cols];
    for a in allowed.iter_mut().take(real_cols) {
        *a = true;
    }
    let Some(value) = t.maximize(&cost, &allowed) else {
        return LpResult::Unbounded;
    };
    let mut x = vec![Rational::zero(); lp.n_vars];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < lp.n_vars {
            x[b] = t.rhs(i).clone();
        }
    }
    let value = match dir {
        Direction::Maximize => value,
        Direction::Minimize => -value,
    };
    LpResult::Optimal { value, solution: x }
}

// ---------------------------------------------------------------------------
// Possible-worlds system
// ---------------------------------------------------------------------------

/// The linear system over the admissible possible worlds of one set of
/// tuples: worlds containing a conflicting set are excluded outright (their
/// mass is fixed to zero by omission); the remaining world masses must
/// reproduce the tuple marginals and sum to one.
#[derive(Debug, Clone)]
pub struct WorldSystem {
    /// Component tuples; position = local variable bit.
    pub tuples: Vec<TupleId>,
    pub marginals: Vec<ProbabilityBound>,
    /// Bitmask (over local positions) of each admissible world; one LP
    /// variable per world, in this order.
    pub worlds: Vec<u64>,
    pub lp: LinearProgram,
}

impl WorldSystem {
    /// Local bitmask of a tuple set; `None` if some tuple is not local.
    pub fn mask_of(&self, set: &BTreeSet<TupleId>) -> Option<u64> {
        let mut mask = 0u64;
        for t in set {
            let i = self.tuples.iter().position(|x| x == t)?;
            mask |= 1 << i;
        }
        Some(mask)
    }

    /// Interpret an LP solution as (world mask, mass) pairs.
    pub fn distribution<'a>(
        &'a self,
        solution: &'a [Rational],
    ) -> impl Iterator<Item = (u64, &'a Rational)> {
        self.worlds
            .iter()
            .copied()
            .zip(solution.iter())
            .filter(|(_, p)| !p.is_zero())
    }
}

/// Build the world system for `tuples` under the (deterministic) conflicting
/// sets `edges`. Fails when more than `budget` tuples would require
/// enumerating too many worlds.
pub fn build_world_system(
    tuples: &[(TupleId, ProbabilityBound)],
    edges: &[BTreeSet<TupleId>],
    budget: usize,
) -> Result<WorldSystem, LpError> {
    let n = tuples.len();
    if n > budget || n > 63 {
        return Err(LpError::BudgetExceeded {
            found: n,
            budget: budget.min(63),
        });
    }
    let ids: Vec<TupleId> = tuples.iter().map(|(t, _)| *t).collect();
    let marginals: Vec<ProbabilityBound> = tuples.iter().map(|(_, p)| p.clone()).collect();
    let edge_masks: Vec<u64> = edges
        .iter()
        .filter_map(|e| {
            // Edges reaching outside the tuple set cannot be fully contained
            // in a world over these tuples only if their outside part were
            // present; callers pass component-local edges, so outside edges
            // are ignored defensively.
            let mut mask = 0u64;
            for t in e {
                let i = ids.iter().position(|x| x == t)?;
                mask |= 1 << i;
            }
            Some(mask)
        })
        .collect();
    let worlds: Vec<u64> = (0u64..(1u64 << n))
        .filter(|w| !edge_masks.iter().any(|e| w & e == *e))
        .collect();
    let mut constraints = Vec::new();
    for (i, bound) in marginals.iter().enumerate() {
        let coeffs: Vec<(usize, Rational)> = worlds
            .iter()
            .enumerate()
            .filter(|(_, w)| *w & (1 << i) != 0)
            .map(|(j, _)| (j, Rational::one()))
            .collect();
        if bound.is_point() {
            constraints.push(LinConstraint {
                coeffs,
                rel: Rel::Eq,
                rhs: bound.lo.clone(),
            });
        } else {
            constraints.push(LinConstraint {
                coeffs: coeffs.clone(),
                rel: Rel::Ge,
                rhs: bound.lo.clone(),
            });
            constraints.push(LinConstraint {
                coeffs,
                rel: Rel::Le,
                rhs: bound.hi.clone(),
            });
        }
    }
    constraints.push(LinConstraint {
        coeffs: (0..worlds.len()).map(|j| (j, Rational::one())).collect(),
        rel: Rel::Eq,
        rhs: Rational::one(),
    });
    let n_vars = worlds.len();
    Ok(WorldSystem {
        tuples: ids,
        marginals,
        worlds,
        lp: LinearProgram { n_vars, constraints },
    })
}

/// Objective selecting the total mass of the worlds satisfying `event`
/// (given the world's local bitmask).
pub fn add_event_objective(
    ws: &WorldSystem,
    event: impl Fn(u64) -> bool,
) -> Vec<(usize, Rational)> {
    ws.worlds
        .iter()
        .enumerate()
        .filter(|(_, &w)| event(w))
        .map(|(j, _)| (j, Rational::one()))
        .collect()
}

/// The a-priori bound `(m·a)^m` on the denominators of optimal values of the
/// worlds system, where `m` counts the tuples plus three and `a` bounds the
/// numerators and denominators of the input probabilities.
pub fn denominator_bound(m: usize, a: &BigInt) -> BigInt {
    (BigInt::from(m) * a).pow(m as u32)
}
