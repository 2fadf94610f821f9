//! Covering LP used by the cutting-plane loop.
//!
//! Primal: `min 1'z  s.t.  C z >= e, z >= 0` with nonnegative cut rows `C`.
//! We run the primal simplex on its dual, `max e'w  s.t.  C'w <= 1, w >= 0`,
//! whose slack basis is feasible from the start, so cuts can be appended as
//! new columns without a phase one. The primal `z` is read off the simplex
//! multipliers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;
const REFACTOR_EVERY: usize = 64;

#[derive(Debug, Clone)]
pub(crate) struct CoveringLp {
    n: usize,
    // original columns: slacks are implicit unit vectors, cuts stored here
    cuts: Vec<DVector<f64>>,
    rhs_cuts: Vec<f64>,
    // tableau B^-1 [I | C], rhs B^-1 1, reduced costs
    tableau: DMatrix<f64>,
    beta: DVector<f64>,
    reduced: Vec<f64>,
    basis: Vec<usize>,
    pivots_since_refactor: usize,
}

impl CoveringLp {
    pub(crate) fn new(n: usize) -> Self {
        CoveringLp {
            n,
            cuts: Vec::new(),
            rhs_cuts: Vec::new(),
            tableau: DMatrix::identity(n, n),
            beta: DVector::from_element(n, 1.0),
            reduced: vec![0.0; n],
            basis: (0..n).collect(),
            pivots_since_refactor: 0,
        }
    }

    pub(crate) fn cut_count(&self) -> usize {
        self.cuts.len()
    }

    fn objective(&self, col: usize) -> f64 {
        if col < self.n {
            0.0
        } else {
            self.rhs_cuts[col - self.n]
        }
    }

    /// Adds the cut `coeffs' z >= rhs`.
    pub(crate) fn add_cut(&mut self, coeffs: DVector<f64>, rhs: f64) {
        let binv = self.tableau.columns(0, self.n);
        let col = binv * &coeffs;
        let y = self.multipliers();
        let r = y.dot(&coeffs) - rhs;
        let k = self.tableau.ncols();
        self.tableau = self.tableau.clone().insert_column(k, 0.0);
        self.tableau.set_column(k, &col);
        self.reduced.push(r);
        self.cuts.push(coeffs);
        self.rhs_cuts.push(rhs);
    }

    /// Simplex multipliers, i.e. the primal point `z`.
    pub(crate) fn multipliers(&self) -> DVector<f64> {
        DVector::from_iterator(self.n, self.reduced[..self.n].iter().copied())
    }

    /// Current bound `1'z = e'w`.
    pub(crate) fn value(&self) -> f64 {
        self.basis
            .iter()
            .zip(self.beta.iter())
            .map(|(&b, &v)| self.objective(b) * v)
            .sum()
    }

    pub(crate) fn solve(&mut self) -> Result<()> {
        let max_pivots = 50 * (self.n + self.cuts.len()) + 1000;
        let mut degenerate_run = 0usize;
        for _ in 0..max_pivots {
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let bland = degenerate_run > 2 * self.n;
            let entering = if bland {
                self.reduced.iter().position(|&r| r < -PIVOT_TOL)
            } else {
                self.reduced
                    .iter()
                    .enumerate()
                    .filter(|(_, &r)| r < -PIVOT_TOL)
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(j, _)| j)
            };
            let Some(j) = entering else {
                // confirm optimality on a fresh factorization
                if self.pivots_since_refactor > 0 {
                    self.refactor()?;
                    if self.reduced.iter().any(|&r| r < -PIVOT_TOL) {
                        continue;
                    }
                }
                return Ok(());
            };

            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.n {
                let t = self.tableau[(i, j)];
                if t > PIVOT_TOL {
                    let ratio = self.beta[i] / t;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - 1e-15 || (ratio <= lr + 1e-15 && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((row, ratio)) = leave else {
                return Err(Error::Factorization("cutting-plane LP is unbounded".into()));
            };
            degenerate_run = if ratio <= 1e-15 { degenerate_run + 1 } else { 0 };
            self.pivot(row, j);
        }
        Err(Error::Factorization("cutting-plane LP pivot limit reached".into()))
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.tableau[(row, col)];
        let cols = self.tableau.ncols();
        for c in 0..cols {
            self.tableau[(row, c)] /= p;
        }
        self.beta[row] /= p;
        let pivot_row = self.tableau.row(row).clone_owned();
        for i in 0..self.n {
            if i == row {
                continue;
            }
            let f = self.tableau[(i, col)];
            if f != 0.0 {
                for c in 0..cols {
                    self.tableau[(i, c)] -= f * pivot_row[c];
                }
                self.beta[i] -= f * self.beta[row];
                self.tableau[(i, col)] = 0.0;
            }
        }
        let f = self.reduced[col];
        for c in 0..cols {
            self.reduced[c] -= f * pivot_row[c];
        }
        self.reduced[col] = 0.0;
        self.basis[row] = col;
        self.pivots_since_refactor += 1;
    }

    fn column(&self, col: usize) -> DVector<f64> {
        if col < self.n {
            let mut e = DVector::zeros(self.n);
            e[col] = 1.0;
            e
        } else {
            self.cuts[col - self.n].clone()
        }
    }

    /// Rebuilds the tableau from the original columns and the current basis.
    fn refactor(&mut self) -> Result<()> {
        let n = self.n;
        let mut b = DMatrix::zeros(n, n);
        for (i, &col) in self.basis.iter().enumerate() {
            b.set_column(i, &self.column(col));
        }
        let binv = b
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Factorization("singular LP basis".into()))?;
        let cols = n + self.cuts.len();
        let mut full = DMatrix::zeros(n, cols);
        full.columns_mut(0, n).copy_from(&binv);
        for (k, c) in self.cuts.iter().enumerate() {
            full.set_column(n + k, &(&binv * c));
        }
        self.beta = binv.column_sum();
        let cb = DVector::from_iterator(n, self.basis.iter().map(|&c| self.objective(c)));
        let y = binv.transpose() * cb;
        self.reduced = (0..cols)
            .map(|c| {
                if c < n {
                    y[c]
                } else {
                    y.dot(&self.cuts[c - n]) - self.rhs_cuts[c - n]
                }
            })
            .collect();
        for &c in &self.basis {
            self.reduced[c] = 0.0;
        }
        self.tableau = full;
        self.pivots_since_refactor = 0;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_variable_cover() {
        // min z1 + z2  s.t.  z1 + 2 z2 >= 2,  3 z1 + z2 >= 3
        let mut lp = CoveringLp::new(2);
        lp.add_cut(DVector::from_vec(vec![1.0, 2.0]), 2.0);
        lp.add_cut(DVector::from_vec(vec![3.0, 1.0]), 3.0);
        lp.solve().unwrap();
        let z = lp.multipliers();
        assert!((z[0] - 0.8).abs() < 1e-12 && (z[1] - 0.6).abs() < 1e-12, "{z}");
        assert!((lp.value() - 1.4).abs() < 1e-12);
    }

    #[test]
    fn incremental_cuts() {
        let mut lp = CoveringLp::new(3);
        lp.add_cut(DVector::from_vec(vec![1.0, 1.0, 1.0]), 3.0);
        lp.solve().unwrap();
        assert!((lp.value() - 3.0).abs() < 1e-12);
        lp.add_cut(DVector::from_vec(vec![0.0, 0.0, 1.0]), 2.0);
        lp.add_cut(DVector::from_vec(vec![1.0, 0.0, 0.0]), 2.0);
        lp.solve().unwrap();
        assert!((lp.value() - 4.0).abs() < 1e-12);
        let z = lp.multipliers();
        assert!(z.iter().all(|&v| v >= -1e-12));
        assert!(z[2] >= 2.0 - 1e-12 && z[0] >= 2.0 - 1e-12);
    }
}
