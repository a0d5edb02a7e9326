//! Exact phase-1 simplex for `A x = b, x >= 0`.
//!
//! Dense tableau over arbitrary-precision rationals with one artificial
//! variable per row. Bland's rule (lowest entering index, lowest leaving
//! basic index on ratio ties) guarantees termination.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    /// A basic feasible point when `feasible`.
    pub point: Option<Vec<BigRational>>,
    pub pivots: usize,
}

/// Decides whether `{x >= 0 : A x = b}` is nonempty.
///
/// Panics when rows of `a` have inconsistent lengths or `b` does not match.
pub fn phase_one(a: &[Vec<BigRational>], b: &[BigRational]) -> Feasibility {
    assert_eq!(a.len(), b.len(), "row count mismatch");
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    assert!(a.iter().all(|r| r.len() == cols), "ragged constraint matrix");
    let width = cols + rows;

    // tableau[i] = [A_i | e_i | b_i], rows negated where b_i < 0
    let mut tableau: Vec<Vec<BigRational>> = Vec::with_capacity(rows);
    for (i, (row, rhs)) in a.iter().zip(b).enumerate() {
        let flip = rhs.is_negative();
        let mut t = Vec::with_capacity(width + 1);
        t.extend(row.iter().map(|v| if flip { -v } else { v.clone() }));
        t.extend((0..rows).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }));
        t.push(if flip { -rhs } else { rhs.clone() });
        tableau.push(t);
    }
    let mut basis: Vec<usize> = (cols..width).collect();

    // reduced costs of the phase-1 objective (sum of artificials)
    let mut cost = vec![BigRational::zero(); width + 1];
    for t in &tableau {
        for j in 0..cols {
            cost[j] -= &t[j];
        }
        cost[width] -= &t[width];
    }

    let mut pivots = 0;
    while let Some(enter) = (0..width).find(|&j| cost[j].is_negative()) {
        let mut leave: Option<(usize, BigRational)> = None;
        for (i, t) in tableau.iter().enumerate() {
            if !t[enter].is_positive() {
                continue;
            }
            let ratio = &t[width] / &t[enter];
            let better = match &leave {
                None => true,
                Some((li, best)) => ratio < *best || (ratio == *best && basis[i] < basis[*li]),
            };
            if better {
                leave = Some((i, ratio));
            }
        }
        // phase 1 is bounded below by zero, so some row always qualifies
        let (r, _) = leave.expect("phase-1 objective is bounded");
        pivot(&mut tableau, &mut cost, r, enter);
        basis[r] = enter;
        pivots += 1;
    }

    // cost[width] holds minus the objective value
    let feasible = cost[width].is_zero();
    let point = feasible.then(|| {
        let mut x = vec![BigRational::zero(); cols];
        for (i, &bv) in basis.iter().enumerate() {
            if bv < cols {
                x[bv] = tableau[i][width].clone();
            }
        }
        x
    });
    Feasibility { feasible, point, pivots }
}

fn pivot(tableau: &mut [Vec<BigRational>], cost: &mut [BigRational], r: usize, c: usize) {
    let inv = BigRational::one() / &tableau[r][c];
    for v in tableau[r].iter_mut() {
        if !v.is_zero() {
            *v *= &inv;
        }
    }
    let pivot_row = tableau[r].clone();
    let support: Vec<usize> = (0..pivot_row.len()).filter(|&j| !pivot_row[j].is_zero()).collect();
    let eliminate = |row: &mut Vec<BigRational>| {
        if row[c].is_zero() {
            return;
        }
        let factor = row[c].clone();
        for &j in &support {
            row[j] -= &factor * &pivot_row[j];
        }
    };
    for (i, row) in tableau.iter_mut().enumerate() {
        if i != r {
            eliminate(row);
        }
    }
    let mut cost_row = cost.to_vec();
    eliminate(&mut cost_row);
    cost.clone_from_slice(&cost_row);
}
