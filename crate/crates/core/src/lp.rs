//! Exact dense simplex over rationals for small linear programs
//! `max c.x  s.t.  A x <= b, x >= 0` with `b >= 0` (the all-slack basis is
//! feasible, so no phase one is needed). Bland's rule guarantees termination.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: Rational,
    pub x: Vec<Rational>,
    /// Optimal dual prices, one per constraint row.
    pub duals: Vec<Rational>,
    /// `b - A x` per row.
    pub slacks: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Unbounded,
}

/// Exact conversion of a finite float.
pub fn rational(x: f64) -> Rational {
    BigRational::from_float(x).expect("finite float")
}

pub fn int(x: i64) -> Rational {
    BigRational::from_integer(BigInt::from(x))
}

pub fn to_f64(x: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}

/// Solves the LP. Panics if shapes disagree or some `b_i < 0`.
pub fn maximize(c: &[Rational], a: &[Vec<Rational>], b: &[Rational]) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    assert_eq!(b.len(), m, "one right-hand side per row");
    assert!(a.iter().all(|r| r.len() == n), "rows must match the objective length");
    assert!(b.iter().all(|v| !v.is_negative()), "right-hand sides must be >= 0");

    let width = n + m;
    // Row i: [A_i | e_i | b_i]; the objective row holds reduced costs z_j - c_j.
    let mut t: Vec<Vec<Rational>> = (0..m)
        .map(|i| {
            let mut row = Vec::with_capacity(width + 1);
            row.extend(a[i].iter().cloned());
            row.extend((0..m).map(|k| if k == i { int(1) } else { Rational::zero() }));
            row.push(b[i].clone());
            row
        })
        .collect();
    let mut obj: Vec<Rational> = c.iter().map(|v| -v.clone()).collect();
    obj.extend((0..=m).map(|_| Rational::zero()));
    let mut basis: Vec<usize> = (n..width).collect();

    while let Some(enter) = (0..width).find(|&j| obj[j].is_negative()) {
        let mut leave: Option<(usize, Rational)> = None;
        for i in 0..m {
            if t[i][enter].is_positive() {
                let ratio = &t[i][width] / &t[i][enter];
                let better = match &leave {
                    None => true,
                    Some((li, best)) => ratio < *best || (ratio == *best && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((r, _)) = leave else {
            return LpOutcome::Unbounded;
        };
        let piv = t[r][enter].clone();
        for v in t[r].iter_mut() {
            *v = &*v / &piv;
        }
        let pivot_row = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i == r || row[enter].is_zero() {
                continue;
            }
            let f = row[enter].clone();
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= &f * p;
            }
        }
        if !obj[enter].is_zero() {
            let f = obj[enter].clone();
            for (v, p) in obj.iter_mut().zip(&pivot_row) {
                *v -= &f * p;
            }
        }
        basis[r] = enter;
    }

    let mut x = vec![Rational::zero(); n];
    let mut slacks = vec![Rational::zero(); m];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            x[bv] = t[i][width].clone();
        } else {
            slacks[bv - n] = t[i][width].clone();
        }
    }
    LpOutcome::Optimal(LpSolution {
        value: obj[width].clone(),
        x,
        duals: obj[n..width].to_vec(),
        slacks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| int(x)).collect()
    }

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
        let out = maximize(&r(&[3, 5]), &[r(&[1, 0]), r(&[0, 2]), r(&[3, 2])], &r(&[4, 12, 18]));
        let LpOutcome::Optimal(s) = out else { panic!() };
        assert_eq!(s.value, int(36));
        assert_eq!(s.x, r(&[2, 6]));
        // Strong duality.
        let dual_obj: Rational = s.duals.iter().zip(r(&[4, 12, 18])).map(|(y, b)| y * b).sum();
        assert_eq!(dual_obj, int(36));
        assert_eq!(s.slacks[0], int(2));
    }

    #[test]
    fn unbounded() {
        assert_eq!(maximize(&r(&[1]), &[r(&[-1])], &r(&[1])), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_rows_terminate() {
        let out = maximize(
            &r(&[1, 1, 1]),
            &[r(&[1, -1, 0]), r(&[0, 1, -1]), r(&[-1, 0, 1]), r(&[1, 1, 1])],
            &r(&[0, 0, 0, 3]),
        );
        let LpOutcome::Optimal(s) = out else { panic!() };
        assert_eq!(s.value, int(3));
    }

    #[test]
    fn exact_floats() {
        assert_eq!(rational(0.5), Rational::new(BigInt::from(1), BigInt::from(2)));
        assert_eq!(to_f64(&rational(0.1)), 0.1);
    }
}
