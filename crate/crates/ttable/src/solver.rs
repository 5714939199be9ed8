//! Branch and bound over the binaries of an [`IlpModel`].
//!
//! A node fixes some binaries. Its relaxation keeps the rows whose binaries
//! are all fixed and drops the others, so an undecided disjunction places no
//! constraint. At the relaxed point the undecided binaries are completed
//! component by component; a component that cannot be completed yields the
//! next branching variable.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::model::{IlpModel, IntervalVars, Row, Sense, VarId};
use crate::simplex::{self, LinearProgram, LpRow};

/// Largest component enumerated during completion.
const COMPONENT_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolverConfig {
    /// Models with more binaries are refused.
    pub binary_cap: usize,
    /// LP relaxations solved before giving up.
    pub node_budget: usize,
    /// Re-solve the final LP for the maximal total interval length.
    pub maximise: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { binary_cap: 200, node_budget: 20_000, maximise: true }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Solution {
    /// Values of every model variable, satisfying every row exactly.
    Feasible(Vec<BigRational>),
    Infeasible,
    Timeout { nodes: usize },
    TooLarge { binaries: usize },
}

impl Solution {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Solution::Feasible(_))
    }
}

pub fn solve_builtin(model: &IlpModel, config: &SolverConfig) -> Solution {
    let binaries: Vec<VarId> = model.binaries().collect();
    if binaries.len() > config.binary_cap {
        return Solution::TooLarge { binaries: binaries.len() };
    }
    let search = Search::new(model);
    let mut stack: Vec<Vec<Option<bool>>> = vec![vec![None; model.vars.len()]];
    let mut nodes = 0;
    while let Some(fixed) = stack.pop() {
        if nodes == config.node_budget {
            return Solution::Timeout { nodes };
        }
        nodes += 1;
        let Some(point) = search.relaxation(&fixed, &[]) else { continue };
        match search.complete(&fixed, &point) {
            Ok(full) => {
                let values = if config.maximise {
                    solve_fixed_with(&search, &full, &model.objective).unwrap_or_else(|| to_values(&full, &point))
                } else {
                    to_values(&full, &point)
                };
                assert_eq!(model.first_violation(&values), None, "solver returned a point violating the model");
                return Solution::Feasible(values);
            }
            Err((var, first)) => {
                for value in [!first, first] {
                    let mut child = fixed.clone();
                    child[var] = Some(value);
                    stack.push(child);
                }
            }
        }
    }
    Solution::Infeasible
}

/// Solves the LP left once every binary takes the given value, in
/// `model.binaries()` order. `None` when that LP is infeasible.
pub fn solve_fixed(model: &IlpModel, binaries: &[bool]) -> Option<Vec<BigRational>> {
    let search = Search::new(model);
    let mut fixed = vec![None; model.vars.len()];
    for (v, &b) in model.binaries().zip(binaries) {
        fixed[v] = Some(b);
    }
    solve_fixed_with(&search, &fixed, &[])
}

fn solve_fixed_with(search: &Search, fixed: &[Option<bool>], objective: &[(VarId, i128)]) -> Option<Vec<BigRational>> {
    let point = search.relaxation(fixed, objective)?;
    let values = to_values(fixed, &point);
    (search.model.first_violation(&values).is_none()).then_some(values)
}

fn to_values(fixed: &[Option<bool>], point: &[BigRational]) -> Vec<BigRational> {
    fixed
        .iter()
        .zip(point)
        .map(|(b, x)| match b {
            Some(true) => BigRational::from_integer(1.into()),
            Some(false) => BigRational::zero(),
            None => x.clone(),
        })
        .collect()
}

/// Rows every table satisfies, added to each relaxation: intervals on one
/// engine never overlap, so those confined to a window `[a, b]` total at
/// most `b - a`; the intervals of one job never overlap either.
fn capacity_cuts(model: &IlpModel) -> Vec<Row> {
    let bounds = |iv: &IntervalVars| (model.vars[iv.start].lower, model.vars[iv.finish].upper);
    let mut cuts: BTreeMap<Vec<usize>, i128> = BTreeMap::new();
    let mut offer = |members: Vec<usize>, width: i128| {
        let room: i128 = members.iter().map(|&i| bounds(&model.intervals[i]).1 - bounds(&model.intervals[i]).0).sum();
        if members.len() > 1 && room > width {
            let slot = cuts.entry(members).or_insert(width);
            *slot = (*slot).min(width);
        }
    };
    let mut by_engine: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    let mut by_job: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for (i, iv) in model.intervals.iter().enumerate() {
        by_engine.entry(iv.engine).or_default().push(i);
        by_job.entry((iv.task, iv.node, iv.job)).or_default().push(i);
    }
    for list in by_engine.values() {
        let mut points: Vec<i128> = list.iter().flat_map(|&i| <[i128; 2]>::from(bounds(&model.intervals[i]))).collect();
        points.sort_unstable();
        points.dedup();
        for (n, &a) in points.iter().enumerate() {
            for &b in &points[n + 1..] {
                let inside: Vec<usize> = list
                    .iter()
                    .copied()
                    .filter(|&i| {
                        let (lo, hi) = bounds(&model.intervals[i]);
                        lo >= a && hi <= b
                    })
                    .collect();
                offer(inside, b - a);
            }
        }
    }
    for list in by_job.into_values() {
        let (lo, hi) = bounds(&model.intervals[list[0]]);
        offer(list, hi - lo);
    }
    cuts.into_iter()
        .map(|(members, width)| {
            let terms = members
                .iter()
                .flat_map(|&i| [(model.intervals[i].finish, 1), (model.intervals[i].start, -1)])
                .collect();
            Row::new(terms, Sense::Le, width)
        })
        .collect()
}

struct Search<'m> {
    model: &'m IlpModel,
    binary: Vec<bool>,
    /// Continuous variable -> LP column.
    column: Vec<Option<usize>>,
    columns: usize,
    cuts: Vec<Row>,
}

impl<'m> Search<'m> {
    fn new(model: &'m IlpModel) -> Self {
        let binary: Vec<bool> = model.vars.iter().map(|v| v.is_binary()).collect();
        let mut column = vec![None; model.vars.len()];
        let mut columns = 0;
        for v in 0..model.vars.len() {
            if !binary[v] {
                column[v] = Some(columns);
                columns += 1;
            }
        }
        Search { model, binary, column, columns, cuts: capacity_cuts(model) }
    }

    /// Relaxation at a node; returns values for every model variable
    /// (binaries unset read as zero).
    fn relaxation(&self, fixed: &[Option<bool>], objective: &[(VarId, i128)]) -> Option<Vec<BigRational>> {
        let vars = &self.model.vars;
        let mut lp = LinearProgram { columns: self.columns, ..Default::default() };
        for row in self.model.rows.iter().chain(&self.cuts) {
            if row.terms.iter().any(|&(v, _)| self.binary[v] && fixed[v].is_none()) {
                continue;
            }
            let mut rhs = row.rhs;
            let mut terms = Vec::new();
            let (mut lo, mut hi) = (0i128, 0i128);
            for &(v, c) in &row.terms {
                match self.column[v] {
                    Some(col) => {
                        // shift x = lower + x'
                        rhs -= c * vars[v].lower;
                        terms.push((col, c));
                        let span = c * (vars[v].upper - vars[v].lower);
                        if span > 0 {
                            hi += span;
                        } else {
                            lo += span;
                        }
                    }
                    None => rhs -= c * i128::from(fixed[v] == Some(true)),
                }
            }
            // rows implied by the variable bounds are left out
            let implied = match row.sense {
                Sense::Le => hi <= rhs,
                Sense::Ge => lo >= rhs,
                Sense::Eq => lo == rhs && hi == rhs,
            };
            if implied {
                continue;
            }
            if terms.is_empty() {
                return None;
            }
            lp.rows.push(LpRow { terms, sense: row.sense, rhs });
        }
        for (v, var) in vars.iter().enumerate() {
            if let Some(col) = self.column[v] {
                lp.rows.push(LpRow { terms: vec![(col, 1)], sense: Sense::Le, rhs: var.upper - var.lower });
            }
        }
        lp.objective = objective.iter().filter_map(|&(v, c)| self.column[v].map(|col| (col, c))).collect();
        let x = simplex::solve(&lp)?;
        let mut values = vec![BigRational::zero(); vars.len()];
        for (v, var) in vars.iter().enumerate() {
            if let Some(col) = self.column[v] {
                values[v] = &x[col] + BigRational::from_integer(BigInt::from(var.lower));
            }
        }
        Some(values)
    }

    /// Completes the undecided binaries at `point`. On failure returns the
    /// variable to branch on and the value to explore first.
    fn complete(&self, fixed: &[Option<bool>], point: &[BigRational]) -> Result<Vec<Option<bool>>, (VarId, bool)> {
        let open: Vec<&Row> = self
            .model
            .rows
            .iter()
            .filter(|row| row.terms.iter().any(|&(v, _)| self.binary[v] && fixed[v].is_none()))
            .collect();
        // union-find over undecided binaries sharing a row
        let mut parent: BTreeMap<VarId, VarId> = BTreeMap::new();
        fn find(parent: &mut BTreeMap<VarId, VarId>, v: VarId) -> VarId {
            let p = *parent.entry(v).or_insert(v);
            if p == v {
                v
            } else {
                let root = find(parent, p);
                parent.insert(v, root);
                root
            }
        }
        for row in &open {
            let free: Vec<VarId> =
                row.terms.iter().filter(|&&(v, _)| self.binary[v] && fixed[v].is_none()).map(|&(v, _)| v).collect();
            let root = find(&mut parent, free[0]);
            for &v in &free[1..] {
                let other = find(&mut parent, v);
                if other != root {
                    let (lo, hi) = (root.min(other), root.max(other));
                    parent.insert(hi, lo);
                }
            }
        }
        let mut components: BTreeMap<VarId, (Vec<VarId>, Vec<&Row>)> = BTreeMap::new();
        let vars: Vec<VarId> = parent.keys().copied().collect();
        for v in vars {
            let root = find(&mut parent, v);
            components.entry(root).or_default().0.push(v);
        }
        for row in open {
            let v = row.terms.iter().find(|&&(v, _)| self.binary[v] && fixed[v].is_none()).unwrap().0;
            let root = find(&mut parent, v);
            components.get_mut(&root).unwrap().1.push(row);
        }

        let mut full = fixed.to_vec();
        let mut worst: Option<(BigRational, (VarId, bool))> = None;
        for (members, rows) in components.values() {
            let lhs_fixed: Vec<BigRational> = rows
                .iter()
                .map(|row| {
                    let mut sum = BigRational::zero();
                    for &(v, c) in &row.terms {
                        if !self.binary[v] {
                            sum += BigRational::from_integer(BigInt::from(c)) * &point[v];
                        } else if fixed[v] == Some(true) {
                            sum += BigRational::from_integer(BigInt::from(c));
                        }
                    }
                    sum
                })
                .collect();
            // total excess over the violated rows
            let excess = |assign: u32| -> BigRational {
                let mut total = BigRational::zero();
                for (row, base) in rows.iter().zip(&lhs_fixed) {
                    let mut lhs = base.clone();
                    for &(v, c) in &row.terms {
                        if let Some(pos) = members.iter().position(|&m| m == v) {
                            if assign >> pos & 1 == 1 {
                                lhs += BigRational::from_integer(BigInt::from(c));
                            }
                        }
                    }
                    let gap = lhs - BigRational::from_integer(BigInt::from(row.rhs));
                    total += match row.sense {
                        Sense::Le => gap.max(BigRational::zero()),
                        Sense::Ge => (-gap).max(BigRational::zero()),
                        Sense::Eq => gap.abs(),
                    };
                }
                total
            };
            if members.len() > COMPONENT_LIMIT {
                return Err((members[0], false));
            }
            let (best, score) = (0..1u32 << members.len()).map(|a| (a, excess(a))).min_by(|x, y| x.1.cmp(&y.1)).unwrap();
            if score.is_zero() {
                for (pos, &v) in members.iter().enumerate() {
                    full[v] = Some(best >> pos & 1 == 1);
                }
            } else if worst.as_ref().is_none_or(|(s, _)| score > *s) {
                worst = Some((score, (members[0], best & 1 == 1)));
            }
        }
        if let Some((_, branch)) = worst {
            return Err(branch);
        }
        Ok(full)
    }
}
