//! Exact two-phase primal simplex on a dense tableau with Bland's rule.
//!
//! The tableau runs on `Ratio<i128>` with checked arithmetic first and
//! falls back to `BigRational` on overflow.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Signed, Zero};

use crate::model::Sense;

/// `sum(coef * x) sense rhs` over non-negative columns.
#[derive(Clone, Debug)]
pub(crate) struct LpRow {
    pub terms: Vec<(usize, i128)>,
    pub sense: Sense,
    pub rhs: i128,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct LinearProgram {
    pub columns: usize,
    pub rows: Vec<LpRow>,
    /// Maximised; empty means any feasible point.
    pub objective: Vec<(usize, i128)>,
}

#[derive(Debug)]
struct Overflow;

trait Field: Clone + PartialEq {
    fn int(v: i128) -> Self;
    fn add(&self, o: &Self) -> Result<Self, Overflow>;
    fn sub(&self, o: &Self) -> Result<Self, Overflow>;
    fn mul(&self, o: &Self) -> Result<Self, Overflow>;
    fn div(&self, o: &Self) -> Result<Self, Overflow>;
    fn sign(&self) -> Ordering;
    fn cmp_value(&self, o: &Self) -> Ordering;
    fn to_big(&self) -> BigRational;

    fn is_zero_value(&self) -> bool {
        self.sign() == Ordering::Equal
    }
}

impl Field for Ratio<i128> {
    fn int(v: i128) -> Self {
        Ratio::from_integer(v)
    }
    fn add(&self, o: &Self) -> Result<Self, Overflow> {
        self.checked_add(o).ok_or(Overflow)
    }
    fn sub(&self, o: &Self) -> Result<Self, Overflow> {
        self.checked_sub(o).ok_or(Overflow)
    }
    fn mul(&self, o: &Self) -> Result<Self, Overflow> {
        self.checked_mul(o).ok_or(Overflow)
    }
    fn div(&self, o: &Self) -> Result<Self, Overflow> {
        self.checked_div(o).ok_or(Overflow)
    }
    fn sign(&self) -> Ordering {
        self.numer().cmp(&0)
    }
    fn cmp_value(&self, o: &Self) -> Ordering {
        self.cmp(o)
    }
    fn to_big(&self) -> BigRational {
        BigRational::new(BigInt::from(*self.numer()), BigInt::from(*self.denom()))
    }
}

impl Field for BigRational {
    fn int(v: i128) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn add(&self, o: &Self) -> Result<Self, Overflow> {
        Ok(self + o)
    }
    fn sub(&self, o: &Self) -> Result<Self, Overflow> {
        Ok(self - o)
    }
    fn mul(&self, o: &Self) -> Result<Self, Overflow> {
        Ok(self * o)
    }
    fn div(&self, o: &Self) -> Result<Self, Overflow> {
        Ok(self / o)
    }
    fn sign(&self) -> Ordering {
        if self.is_zero() {
            Ordering::Equal
        } else if self.is_positive() {
            Ordering::Greater
        } else {
            Ordering::Less
        }
    }
    fn cmp_value(&self, o: &Self) -> Ordering {
        self.cmp(o)
    }
    fn to_big(&self) -> BigRational {
        self.clone()
    }
}

/// Optimal (or, without objective, feasible) point; `None` when infeasible.
/// An unbounded objective returns the last feasible vertex.
pub(crate) fn solve(lp: &LinearProgram) -> Option<Vec<BigRational>> {
    match Tableau::<Ratio<i128>>::run(lp) {
        Ok(result) => result,
        Err(Overflow) => Tableau::<BigRational>::run(lp).unwrap_or_else(|_| unreachable!("big rationals do not overflow")),
    }
}

struct Tableau<T> {
    /// Rows of `[coefficients.., rhs]`.
    rows: Vec<Vec<T>>,
    basis: Vec<usize>,
    /// Reduced costs, last entry unused.
    cost: Vec<T>,
    columns: usize,
    first_artificial: usize,
}

impl<T: Field> Tableau<T> {
    fn run(lp: &LinearProgram) -> Result<Option<Vec<BigRational>>, Overflow> {
        let mut tab = Self::standard_form(lp);
        if !tab.phase_one()? {
            return Ok(None);
        }
        if !lp.objective.is_empty() {
            tab.phase_two(lp)?;
        }
        let mut x = vec![BigRational::zero(); lp.columns];
        for (r, &b) in tab.basis.iter().enumerate() {
            if b < lp.columns {
                x[b] = tab.rows[r][tab.columns].to_big();
            }
        }
        Ok(Some(x))
    }

    fn standard_form(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let mut slacks = 0;
        let mut artificials = 0;
        let mut normalized = Vec::with_capacity(m);
        for row in &lp.rows {
            let flip = row.rhs < 0;
            let sense = match (row.sense, flip) {
                (Sense::Le, true) => Sense::Ge,
                (Sense::Ge, true) => Sense::Le,
                (s, _) => s,
            };
            match sense {
                Sense::Le => slacks += 1,
                Sense::Ge => {
                    slacks += 1;
                    artificials += 1
                }
                Sense::Eq => artificials += 1,
            }
            normalized.push((flip, sense));
        }
        let first_slack = lp.columns;
        let first_artificial = first_slack + slacks;
        let columns = first_artificial + artificials;
        let zero = T::int(0);
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let (mut slack, mut art) = (first_slack, first_artificial);
        for (row, &(flip, sense)) in lp.rows.iter().zip(&normalized) {
            let sign = if flip { -1 } else { 1 };
            let mut line = vec![zero.clone(); columns + 1];
            for &(c, v) in &row.terms {
                let merged = line[c].add(&T::int(sign * v)).expect("small integers");
                line[c] = merged;
            }
            line[columns] = T::int(sign * row.rhs);
            match sense {
                Sense::Le => {
                    line[slack] = T::int(1);
                    basis.push(slack);
                    slack += 1;
                }
                Sense::Ge => {
                    line[slack] = T::int(-1);
                    slack += 1;
                    line[art] = T::int(1);
                    basis.push(art);
                    art += 1;
                }
                Sense::Eq => {
                    line[art] = T::int(1);
                    basis.push(art);
                    art += 1;
                }
            }
            rows.push(line);
        }
        Tableau { rows, basis, cost: vec![zero; columns + 1], columns, first_artificial }
    }

    /// Minimises the artificial sum; true when it reaches zero.
    fn phase_one(&mut self) -> Result<bool, Overflow> {
        let mut cost = vec![T::int(0); self.columns + 1];
        for (r, &b) in self.basis.iter().enumerate() {
            if b >= self.first_artificial {
                for (c, slot) in cost.iter_mut().enumerate() {
                    if c < self.first_artificial || c == self.columns {
                        *slot = slot.add(&self.rows[r][c])?;
                    }
                }
            }
        }
        self.cost = cost;
        self.optimise(self.first_artificial)?;
        let infeasibility = self.basis.iter().enumerate().filter(|(_, &b)| b >= self.first_artificial);
        for (r, _) in infeasibility {
            if !self.rows[r][self.columns].is_zero_value() {
                return Ok(false);
            }
        }
        // drive zero-level artificials out of the basis
        for r in 0..self.rows.len() {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            if let Some(c) = (0..self.first_artificial).find(|&c| !self.rows[r][c].is_zero_value()) {
                self.pivot(r, c)?;
            }
        }
        Ok(true)
    }

    fn phase_two(&mut self, lp: &LinearProgram) -> Result<(), Overflow> {
        let mut c = vec![T::int(0); self.columns + 1];
        for &(col, v) in &lp.objective {
            c[col] = c[col].add(&T::int(v))?;
        }
        let mut cost = c.clone();
        for (r, &b) in self.basis.iter().enumerate() {
            if c[b].is_zero_value() {
                continue;
            }
            for (col, slot) in cost.iter_mut().enumerate().take(self.columns) {
                *slot = slot.sub(&c[b].mul(&self.rows[r][col])?)?;
            }
        }
        self.cost = cost;
        self.optimise(self.first_artificial)
    }

    /// Bland's rule over entering columns `< limit`.
    fn optimise(&mut self, limit: usize) -> Result<(), Overflow> {
        loop {
            let Some(enter) = (0..limit).find(|&c| self.cost[c].sign() == Ordering::Greater) else {
                return Ok(());
            };
            let mut leave: Option<(usize, T)> = None;
            for r in 0..self.rows.len() {
                let a = &self.rows[r][enter];
                if a.sign() != Ordering::Greater {
                    continue;
                }
                let ratio = self.rows[r][self.columns].div(a)?;
                let better = match &leave {
                    None => true,
                    Some((best, q)) => match ratio.cmp_value(q) {
                        Ordering::Less => true,
                        Ordering::Equal => self.basis[r] < self.basis[*best],
                        Ordering::Greater => false,
                    },
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, enter)?,
                None => return Ok(()),
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) -> Result<(), Overflow> {
        let p = self.rows[r][c].clone();
        if p != T::int(1) {
            for v in self.rows[r].iter_mut() {
                if !v.is_zero_value() {
                    *v = v.div(&p)?;
                }
            }
        }
        let support: Vec<usize> = (0..=self.columns).filter(|&j| !self.rows[r][j].is_zero_value()).collect();
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero_value() {
                continue;
            }
            let factor = row[c].clone();
            for &j in &support {
                row[j] = row[j].sub(&factor.mul(&pivot_row[j])?)?;
            }
        }
        if !self.cost[c].is_zero_value() {
            let factor = self.cost[c].clone();
            for &j in &support {
                self.cost[j] = self.cost[j].sub(&factor.mul(&pivot_row[j])?)?;
            }
        }
        self.basis[r] = c;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(terms: &[(usize, i128)], sense: Sense, rhs: i128) -> LpRow {
        LpRow { terms: terms.to_vec(), sense, rhs }
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn textbook_maximum() {
        // max 3x + 2y, x + y <= 4, x + 3y <= 6, x <= 3
        let lp = LinearProgram {
            columns: 2,
            rows: vec![row(&[(0, 1), (1, 1)], Sense::Le, 4), row(&[(0, 1), (1, 3)], Sense::Le, 6), row(&[(0, 1)], Sense::Le, 3)],
            objective: vec![(0, 3), (1, 2)],
        };
        assert_eq!(solve(&lp).unwrap(), vec![q(3, 1), q(1, 1)]);
    }

    #[test]
    fn fractional_vertex() {
        // max x + y, 2x + y <= 3, x + 2y <= 3
        let lp = LinearProgram {
            columns: 2,
            rows: vec![row(&[(0, 2), (1, 1)], Sense::Le, 3), row(&[(0, 1), (1, 2)], Sense::Le, 3)],
            objective: vec![(0, 1), (1, 1)],
        };
        assert_eq!(solve(&lp).unwrap(), vec![q(1, 1), q(1, 1)]);
        let lp = LinearProgram {
            columns: 2,
            rows: vec![row(&[(0, 3), (1, 1)], Sense::Le, 2), row(&[(0, 1), (1, 3)], Sense::Le, 2)],
            objective: vec![(0, 1), (1, 1)],
        };
        assert_eq!(solve(&lp).unwrap(), vec![q(1, 2), q(1, 2)]);
    }

    #[test]
    fn infeasible_and_equalities() {
        let lp = LinearProgram {
            columns: 1,
            rows: vec![row(&[(0, 1)], Sense::Ge, 5), row(&[(0, 1)], Sense::Le, 4)],
            objective: vec![],
        };
        assert!(solve(&lp).is_none());
        let lp = LinearProgram {
            columns: 2,
            rows: vec![row(&[(0, 1), (1, 1)], Sense::Eq, 7), row(&[(0, 1), (1, -1)], Sense::Eq, -1)],
            objective: vec![],
        };
        assert_eq!(solve(&lp).unwrap(), vec![q(3, 1), q(4, 1)]);
    }

    #[test]
    fn redundant_equalities_and_degeneracy() {
        let lp = LinearProgram {
            columns: 2,
            rows: vec![
                row(&[(0, 1), (1, 1)], Sense::Eq, 2),
                row(&[(0, 2), (1, 2)], Sense::Eq, 4),
                row(&[(0, 1)], Sense::Ge, 0),
                row(&[(0, 1), (1, -1)], Sense::Le, 0),
            ],
            objective: vec![(0, 1)],
        };
        assert_eq!(solve(&lp).unwrap(), vec![q(1, 1), q(1, 1)]);
    }

    #[test]
    fn overflow_falls_back_to_big_rationals() {
        let big = i128::MAX / 3;
        let lp = LinearProgram {
            columns: 2,
            rows: vec![row(&[(0, big), (1, big - 1)], Sense::Le, big), row(&[(0, big - 2), (1, big)], Sense::Le, big)],
            objective: vec![(0, 1), (1, 1)],
        };
        let x = solve(&lp).unwrap();
        let int = |v: i128| BigRational::from_integer(BigInt::from(v));
        assert!(int(big) * &x[0] + int(big - 1) * &x[1] <= int(big));
        assert!(x[0].clone() + &x[1] > q(0, 1));
    }
}
